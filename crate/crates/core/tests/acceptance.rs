//! Acceptance suite: one check per criterion, each printing a PASS or FAIL
//! line. Runs without the libtest harness so the lines always show.
//!
//! `cargo test --test acceptance -- 4 7` runs a subset by criterion number.
//! Set `SWDG_FULL_CONVERGENCE=1` to run the convergence study to t = 50.

use std::sync::Arc;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use swdg::basis::NodalBasis;
use swdg::diagnostics::{
    conserved_totals, l1_error, lemma1_oracle, run_scenario, well_balance_residual, ROUNDOFF,
};
use swdg::field::{Bathymetry, DgField};
use swdg::grid::{build_grid, Bounds};
use swdg::limiters::{apply_stage_limiters, scale_cell, LimiterConfig, PositivityNodeSet};
use swdg::physics::compute_b;
use swdg::scenarios::{build_scenario, Scenario, ScenarioOverrides};
use swdg::state::{ETA, P2, P3, Q0};

type Outcome = Result<String, String>;

fn ensure(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn scenario(
    name: &str,
    nx: usize,
    ny: usize,
    order: Option<usize>,
    t_final: Option<f64>,
) -> Scenario {
    let o = ScenarioOverrides {
        nx: Some(nx),
        ny: Some(ny),
        order,
        t_final,
        ..Default::default()
    };
    build_scenario(name, &o).expect("scenario builds")
}

fn max_residual(s: &Scenario) -> Result<(Vec<f64>, usize), String> {
    let setup = s.setup().map_err(|e| e.to_string())?;
    let mut u = setup.initial.clone();
    let mut steps = 0;
    setup
        .solver
        .advance(&mut u, 0.0, &setup.controls, |_, _| {
            steps += 1;
            Ok(())
        })
        .map_err(|e| e.to_string())?;
    Ok((
        well_balance_residual(&u, &setup.initial).map_err(|e| e.to_string())?,
        steps,
    ))
}

fn criterion_1() -> Outcome {
    let mut details = Vec::new();
    let mut ok = true;
    for (nx, ny, k, t) in [
        (40, 20, 1, 5.0),
        (40, 20, 2, 5.0),
        (80, 40, 1, 50.0),
        (80, 40, 2, 50.0),
    ] {
        let start = Instant::now();
        let (res, steps) = max_residual(&scenario("equilibrium_mono", nx, ny, Some(k), Some(t)))?;
        let worst = res.iter().copied().fold(0.0, f64::max);
        ok &= worst <= 1e-12;
        details.push(format!(
            "{nx}x{ny} k={k} t={t}: {worst:.2e} ({steps} steps, {:.0?})",
            start.elapsed()
        ));
    }
    ensure(ok, details.join("; "))
}

/// Published first-row errors for the two- and four-constituent equilibria.
const TABLE1_ROW1: [f64; 2] = [1.3694e-5, 9.7340e-6];
const TABLE2_ROW1: [f64; 4] = [1.7203e-5, 1.2240e-5, 1.8877e-6, 1.3962e-6];

fn criterion_2() -> Outcome {
    let mut details = Vec::new();
    let mut ok = true;
    for (name, reference) in [
        ("equilibrium_two", &TABLE1_ROW1[..]),
        ("equilibrium_four", &TABLE2_ROW1[..]),
    ] {
        let s = scenario(name, 80, 40, Some(2), Some(50.0));
        let (u, solver, _) = run_scenario(&s).map_err(|e| e.to_string())?;
        let setup = s.setup().map_err(|e| e.to_string())?;
        let res = well_balance_residual(&u, &setup.initial).map_err(|e| e.to_string())?;
        let flow = [res[ETA], res[P2], res[P3]].into_iter().fold(0.0, f64::max);
        ok &= flow <= 1e-12;
        let report = l1_error(&u, &solver, s.exact.as_ref().unwrap(), s.t_final)
            .map_err(|e| e.to_string())?;
        let mut parts = vec![format!("{name}: eta/p2/p3 {flow:.1e}")];
        for (i, &r) in reference.iter().enumerate() {
            let e = report.get(&format!("c{}", i + 1)).unwrap();
            let factor = (e / r).max(r / e);
            ok &= factor <= 5.0;
            parts.push(format!("E(c{}) {e:.3e} vs {r:.3e} (x{factor:.2})", i + 1));
        }
        details.push(parts.join(", "));
    }
    ensure(ok, details.join("; "))
}

fn criterion_3() -> Outcome {
    // Under exact well-balance the state, and hence each error, does not
    // change in time, so a short horizon measures the same table.
    let full = std::env::var_os("SWDG_FULL_CONVERGENCE").is_some();
    let t = if full { 50.0 } else { 1.0 };
    let mut details = vec![format!("t = {t}")];
    let mut ok = true;
    for (name, n) in [("equilibrium_two", 2), ("equilibrium_four", 4)] {
        let mut errors: Vec<Vec<f64>> = Vec::new();
        for nx in [80, 160, 320] {
            let s = scenario(name, nx, 40, Some(2), Some(t));
            let (u, solver, _) = run_scenario(&s).map_err(|e| e.to_string())?;
            let r =
                l1_error(&u, &solver, s.exact.as_ref().unwrap(), t).map_err(|e| e.to_string())?;
            errors.push((1..=n).map(|i| r.get(&format!("c{i}")).unwrap()).collect());
        }
        for i in 0..n {
            let ratios: Vec<f64> = errors.windows(2).map(|w| w[0][i] / w[1][i]).collect();
            ok &= ratios.iter().all(|&r| r >= 2.5);
            let col: Vec<String> = errors.iter().map(|e| format!("{:.3e}", e[i])).collect();
            let rs: Vec<String> = ratios.iter().map(|r| format!("{r:.2}")).collect();
            details.push(format!(
                "{name} c{}: {} ratios {}",
                i + 1,
                col.join(" > "),
                rs.join(", ")
            ));
        }
    }
    ensure(ok, details.join("; "))
}

fn criterion_4() -> Outcome {
    let mut details = Vec::new();
    let mut ok = true;
    let mut errors = Vec::new();
    for n in [50, 100] {
        let s = scenario("parabolic_bowl", n, n, Some(1), None);
        if !s.positivity_strict {
            return Err("bowl must run in strict positivity mode".into());
        }
        let (u, solver, record) = run_scenario(&s).map_err(|e| e.to_string())?;
        let finite = u.data().iter().all(|v| v.is_finite());
        let min_h = record.min_h();
        let e = l1_error(&u, &solver, s.exact.as_ref().unwrap(), s.t_final)
            .map_err(|e| e.to_string())?;
        let eh = e.get("h").unwrap();
        ok &= finite && min_h >= -1e-12;
        errors.push(eh);
        details.push(format!(
            "{n}x{n}: {} steps to t={:.5}, min h {min_h:.2e}, L1(h) {eh:.3e}",
            record.steps(),
            s.t_final
        ));
    }
    ok &= errors[1] < errors[0];
    ensure(ok, details.join("; "))
}

/// Largest deviation of `q_i / h` from `value` over all volume quadrature
/// points with positive depth.
fn concentration_spread(u: &DgField, solver: &swdg::integrator::Solver, value: f64) -> f64 {
    let basis = &solver.basis;
    let mut worst: f64 = 0.0;
    for cell in 0..u.grid().n_cells() {
        for p in basis.volume_points() {
            let z = solver.bathymetry.field().eval(basis, cell, 0, *p);
            let h = u.eval(basis, cell, ETA, *p) - z;
            if h > solver.physics.h_eps {
                for c in Q0..u.n_comp() {
                    worst = worst.max((u.eval(basis, cell, c, *p) / h - value).abs());
                }
            }
        }
    }
    worst
}

fn criterion_5() -> Outcome {
    let s = scenario("flood_wave", 80, 80, None, Some(4.0));
    if (s.cfl - 0.2).abs() > 0.0 {
        return Err(format!("flood CFL is {}", s.cfl));
    }
    let (u, solver, record) = run_scenario(&s).map_err(|e| e.to_string())?;
    let e = l1_error(&u, &solver, s.exact.as_ref().unwrap(), 4.0).map_err(|e| e.to_string())?;
    let eh = e.get("h").unwrap();
    let spread = concentration_spread(&u, &solver, 0.5);
    ensure(
        eh <= 5e-3 && spread <= 1e-10,
        format!(
            "{} steps, L1(h) {eh:.3e}, concentration spread {spread:.1e}",
            record.steps()
        ),
    )
}

fn criterion_6() -> Outcome {
    let s = scenario("dam_break", 200, 50, None, Some(3.0));
    let (u, solver, record) = run_scenario(&s).map_err(|e| e.to_string())?;
    let spread = concentration_spread(&u, &solver, 0.5);
    let basis = &solver.basis;
    let (mut lo, mut hi) = (record.min_h(), f64::NEG_INFINITY);
    for cell in 0..u.grid().n_cells() {
        let pts = basis
            .volume_points()
            .iter()
            .copied()
            .chain((0..basis.n_nodes()).map(|m| basis.node(m)));
        for p in pts {
            let h = u.eval(basis, cell, ETA, p) - solver.bathymetry.field().eval(basis, cell, 0, p);
            lo = lo.min(h);
            hi = hi.max(h);
        }
    }
    ensure(
        spread <= 1e-10 && lo >= 0.1 - 1e-8 && hi <= 1.0 + 1e-8,
        format!(
            "{} steps, concentration spread {spread:.1e}, h in [{lo:.15}, {hi:.15}]",
            record.steps()
        ),
    )
}

fn criterion_7() -> Outcome {
    let ok = lemma1_oracle(10_000, 8, 1.0, 2024).map_err(|e| e.to_string())?;
    let bad = lemma1_oracle(10_000, 8, 1.5, 2024).map_err(|e| e.to_string())?;
    ensure(
        ok.negative_trials == 0 && bad.negative_trials > 0,
        format!(
            "λα=1: {} negative of 10^4 (min {:.1e}, floor {ROUNDOFF:.0e}); λα=1.5: {} negative (min {:.3})",
            ok.negative_trials, ok.min_h, bad.negative_trials, bad.min_h
        ),
    )
}

fn criterion_8() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let (mut mean_err, mut min_node, mut idem_err, mut still_err): (f64, f64, f64, f64) =
        (0.0, f64::INFINITY, 0.0, 0.0);
    let grid = build_grid(Bounds::new(0.0, 1.0, 0.0, 1.0), 1, 1).unwrap();
    for trial in 0..1000 {
        let k = 1 + trial % 2;
        let basis = NodalBasis::new(k).unwrap();
        let set = PositivityNodeSet::new(&basis);
        let w = basis.mean_weights();
        let nn = basis.n_nodes();

        // Random polynomial with a nonnegative mean.
        let mut v: Vec<f64> = (0..nn).map(|_| rng.random_range(-1.0..2.0)).collect();
        let mean: f64 = v.iter().zip(w).map(|(a, b)| a * b).sum();
        if mean < 0.0 {
            v.iter_mut().for_each(|x| *x -= mean);
        }
        let mean: f64 = v.iter().zip(w).map(|(a, b)| a * b).sum();
        scale_cell(&mut v, 1, w, &set).map_err(|m| format!("trial {trial}: mean {m}"))?;
        let after: f64 = v.iter().zip(w).map(|(a, b)| a * b).sum();
        mean_err = mean_err.max((after - mean).abs());
        min_node = min_node.min(set.min_value(&v, 1));
        let once = v.clone();
        let s = scale_cell(&mut v, 1, w, &set).map_err(|m| format!("trial {trial}: mean {m}"))?;
        idem_err = idem_err.max(if s.theta == 1.0 { 0.0 } else { 1.0 });
        idem_err = idem_err.max(
            v.iter()
                .zip(&once)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max),
        );

        // Random still-water cell: flat surface over a bilinear bottom with a
        // bilinear concentration, both exactly representable and positive.
        let level = rng.random_range(1.0..2.0);
        let zc: [f64; 4] = std::array::from_fn(|_| rng.random_range(0.0..0.9));
        let cc: [f64; 4] = std::array::from_fn(|_| rng.random_range(0.0..1.0));
        let bilinear = |v: &[f64; 4], x: f64, y: f64| {
            v[0] * (1.0 - x) * (1.0 - y)
                + v[1] * x * (1.0 - y)
                + v[2] * (1.0 - x) * y
                + v[3] * x * y
        };
        let z_field =
            DgField::from_nodal_fn(grid, &basis, 1, |x, y, out| out[0] = bilinear(&zc, x, y));
        let mut f = DgField::from_nodal_fn(grid, &basis, 5, |x, y, out| {
            let (h, c) = (level - bilinear(&zc, x, y), bilinear(&cc, x, y));
            out.copy_from_slice(&[level, h * (1.0 + 0.2 * c), 0.0, 0.0, h * c]);
        });
        let bath = Bathymetry::from_field(z_field, &basis);
        let before = f.clone();
        apply_stage_limiters(
            &mut f,
            &bath,
            &basis,
            &set,
            &[0.2],
            LimiterConfig::default(),
            1e-6,
        )
        .map_err(|e| e.to_string())?;
        still_err = still_err.max(
            (0..5)
                .map(|comp| f.max_abs_diff(&before, comp))
                .fold(0.0, f64::max),
        );
    }
    ensure(
        mean_err <= 1e-14 && min_node >= -1e-14 && idem_err == 0.0 && still_err == 0.0,
        format!("1000 cells: mean drift {mean_err:.1e}, min node {min_node:.1e}, idempotence {idem_err:.1e}, still water {still_err:.1e}"),
    )
}

fn criterion_9() -> Outcome {
    let s = scenario("equilibrium_two", 80, 40, None, None);
    let setup = s.setup().map_err(|e| e.to_string())?;
    let mut u = setup.initial.clone();
    let start = conserved_totals(&u, &setup.solver);
    let mut t = 0.0;
    let mut drift: f64 = 0.0;
    for _ in 0..100 {
        t += setup
            .solver
            .step_adaptive(&mut u, t, &setup.controls)
            .map_err(|e| e.to_string())?
            .dt;
        drift = drift.max(conserved_totals(&u, &setup.solver).max_relative_drift(&start));
    }
    ensure(
        drift <= 1e-12,
        format!("max relative drift of ∫h, ∫p1, ∫q_i over 100 steps: {drift:.2e}"),
    )
}

fn criterion_10() -> Outcome {
    let mut worst: f64 = 0.0;
    let mut cases = 0;
    for k in [1, 2] {
        for level in [0.5, 1.0, 2.0] {
            let bottom = Arc::new(|x: f64, y: f64| 0.2 * (0.7 * x).sin() * (0.9 * y).cos() + 0.1);
            let c1 = Arc::new(|x: f64, y: f64| 0.3 + 0.1 * (x * y).sin());
            let c2 = Arc::new(|x: f64, y: f64| 0.4 - 0.1 * (x * y).sin());
            let mut s = Scenario::still_water_custom(
                Bounds::new(0.0, 4.0, 0.0, 3.0),
                8,
                6,
                level,
                bottom,
                vec![c1, c2],
                vec![0.1, 0.1],
            )
            .map_err(|e| e.to_string())?;
            s.order = k;
            let setup = s.setup().map_err(|e| e.to_string())?;
            let b = compute_b(&setup.initial, &setup.solver.basis, ETA).value;
            let r = setup
                .solver
                .residual(&setup.initial, b, 0.0)
                .map_err(|e| e.to_string())?;
            worst = worst.max(r.data().iter().fold(0.0, |m, v| m.max(v.abs())));
            cases += 1;
        }
    }
    ensure(
        worst <= 1e-13,
        format!("{cases} cases (k=1,2; C=0.5,1,2): max |residual| {worst:.2e}"),
    )
}

type Criterion = (usize, &'static str, fn() -> Outcome);

const CRITERIA: [Criterion; 10] = [
    (1, "well-balance, mono-constituent", criterion_1),
    (
        2,
        "nontrivial well-balance, two and four constituents",
        criterion_2,
    ),
    (3, "convergence trend", criterion_3),
    (4, "positivity, parabolic bowl", criterion_4),
    (5, "flood wave", criterion_5),
    (6, "dam break", criterion_6),
    (7, "first-order positivity oracle", criterion_7),
    (8, "limiter unit properties", criterion_8),
    (9, "conservation", criterion_9),
    (10, "still-water residual", criterion_10),
];

fn main() {
    // Numeric arguments select criteria; libtest flags such as --nocapture are ignored.
    let selected: Vec<usize> = std::env::args()
        .skip(1)
        .filter_map(|a| a.parse().ok())
        .collect();
    if std::env::args().any(|a| a == "--list") {
        for (n, name, _) in CRITERIA {
            println!("criterion_{n}: test ({name})");
        }
        return;
    }
    let mut failed = 0;
    for (n, name, check) in CRITERIA {
        if !selected.is_empty() && !selected.contains(&n) {
            continue;
        }
        let start = Instant::now();
        let outcome = std::panic::catch_unwind(check).unwrap_or_else(|_| Err("panicked".into()));
        let elapsed = start.elapsed();
        match outcome {
            Ok(d) => println!("PASS criterion {n} ({name}) [{elapsed:.1?}]: {d}"),
            Err(d) => {
                failed += 1;
                println!("FAIL criterion {n} ({name}) [{elapsed:.1?}]: {d}");
            }
        }
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
