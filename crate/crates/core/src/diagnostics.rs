//! Error norms, conservation audits, well-balance residuals, the 1D
//! first-order positivity oracle and convergence studies.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::field::DgField;
use crate::integrator::{Solver, StepRecord};
use crate::scenarios::{build_scenario, ExactSolution, Scenario, ScenarioOverrides};
use crate::state::{ETA, P1, P2, P3, Q0};

/// Cell values `(h, u, v, c_1..c_N)` built from cell averages of the
/// conserved variables, so that `u = p̄2 / p̄1` and `c_i = q̄_i / h̄`.
/// Cells with `h̄ ≤ h_eps` report zero velocity and concentration.
pub fn cell_values(field: &DgField, solver: &Solver) -> Vec<Vec<f64>> {
    let basis = &solver.basis;
    let z = solver.bathymetry.field();
    let h_eps = solver.physics.h_eps;
    let nc = field.n_comp();
    (0..field.grid().n_cells())
        .map(|cell| {
            let avg = |c| field.cell_average(basis, cell, c);
            let h = avg(ETA) - z.cell_average(basis, cell, 0);
            let p1 = avg(P1);
            let mut out = vec![h.max(0.0), 0.0, 0.0];
            if h > h_eps && p1 > 0.0 {
                out[1] = avg(P2) / p1;
                out[2] = avg(P3) / p1;
                out.extend((Q0..nc).map(|c| avg(c) / h));
            } else {
                out.extend((Q0..nc).map(|_| 0.0));
            }
            out
        })
        .collect()
}

/// Exact cell averages of `(h, u, v, c_1..c_N)` by volume quadrature.
pub fn exact_cell_values(solver: &Solver, exact: &ExactSolution, t: f64) -> Vec<Vec<f64>> {
    let grid = solver.grid;
    let basis = &solver.basis;
    let (points, weights) = (basis.volume_points(), basis.volume_weights());
    let wsum: f64 = weights.iter().sum();
    (0..grid.n_cells())
        .map(|cell| {
            let (i, j) = grid.ij(cell);
            let mut acc: Vec<f64> = Vec::new();
            for (p, w) in points.iter().zip(weights) {
                let (x, y) = grid.physical(i, j, p[0], p[1]);
                let e = exact.eval(t, x, y);
                let vals = [e.h.max(0.0), e.u, e.v]
                    .into_iter()
                    .chain(e.c.iter().copied());
                if acc.is_empty() {
                    acc = vals.map(|v| w * v).collect();
                } else {
                    acc.iter_mut().zip(vals).for_each(|(a, v)| *a += w * v);
                }
            }
            acc.iter_mut().for_each(|a| *a /= wsum);
            acc
        })
        .collect()
}

pub fn quantity_names(n_constituents: usize) -> Vec<String> {
    let mut names: Vec<String> = ["h", "u", "v"].iter().map(|s| s.to_string()).collect();
    names.extend((1..=n_constituents).map(|i| format!("c{i}")));
    names
}

#[derive(Debug, Clone, PartialEq)]
pub struct ErrorReport {
    pub nx: usize,
    pub ny: usize,
    pub order: usize,
    pub t: f64,
    pub names: Vec<String>,
    pub errors: Vec<f64>,
    /// True where the exact norm vanished and the error is absolute.
    pub absolute: Vec<bool>,
}

impl ErrorReport {
    pub fn get(&self, name: &str) -> Option<f64> {
        self.names
            .iter()
            .position(|n| n == name)
            .map(|k| self.errors[k])
    }
}

/// Relative L1 errors `Σ|C| |u_ex − u_num| / Σ|C| |u_ex|` over cell values,
/// falling back to the absolute norm when the exact norm is zero.
pub fn relative_l1(numerical: &[Vec<f64>], exact: &[Vec<f64>]) -> (Vec<f64>, Vec<bool>) {
    let nq = exact.first().map_or(0, Vec::len);
    let mut diff = vec![0.0; nq];
    let mut norm = vec![0.0; nq];
    for (n, e) in numerical.iter().zip(exact) {
        for k in 0..nq {
            diff[k] += (e[k] - n[k]).abs();
            norm[k] += e[k].abs();
        }
    }
    // Uniform cells: the area factor cancels in the relative norm but not
    // in the absolute fallback, which is reported per cell.
    let cells = numerical.len().max(1) as f64;
    let absolute: Vec<bool> = norm.iter().map(|&n| n == 0.0).collect();
    let errors = diff
        .iter()
        .zip(&norm)
        .map(|(&d, &n)| if n == 0.0 { d / cells } else { d / n })
        .collect();
    (errors, absolute)
}

pub fn l1_error(
    field: &DgField,
    solver: &Solver,
    exact: &ExactSolution,
    t: f64,
) -> Result<ErrorReport> {
    let grid = field.grid();
    if grid != &solver.grid {
        return Err(Error::config("field and solver use different grids"));
    }
    let numerical = cell_values(field, solver);
    let reference = exact_cell_values(solver, exact, t);
    let n_const = field.n_comp() - Q0;
    if reference.first().map(Vec::len) != Some(3 + n_const) {
        return Err(Error::config(
            "exact solution has a different number of constituents",
        ));
    }
    let (errors, absolute) = relative_l1(&numerical, &reference);
    Ok(ErrorReport {
        nx: grid.nx,
        ny: grid.ny,
        order: solver.basis.degree(),
        t,
        names: quantity_names(n_const),
        errors,
        absolute,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Totals {
    pub h: f64,
    pub p1: f64,
    pub q: Vec<f64>,
}

impl Totals {
    pub fn as_vec(&self) -> Vec<f64> {
        let mut v = vec![self.h, self.p1];
        v.extend(&self.q);
        v
    }

    /// Largest relative drift of any total against `reference`.
    pub fn max_relative_drift(&self, reference: &Totals) -> f64 {
        self.as_vec()
            .iter()
            .zip(reference.as_vec())
            .map(|(a, b)| (a - b).abs() / b.abs().max(f64::MIN_POSITIVE))
            .fold(0.0, f64::max)
    }
}

/// Domain integrals of `h = η − Z`, `p1` and each `q_i`.
pub fn conserved_totals(field: &DgField, solver: &Solver) -> Totals {
    let basis = &solver.basis;
    let z = solver.bathymetry.field();
    let area = field.grid().cell_area();
    let nc = field.n_comp();
    let mut sums = vec![0.0; nc - P1 + 1];
    for cell in 0..field.grid().n_cells() {
        sums[0] += field.cell_average(basis, cell, ETA) - z.cell_average(basis, cell, 0);
        sums[1] += field.cell_average(basis, cell, P1);
        for c in Q0..nc {
            sums[2 + c - Q0] += field.cell_average(basis, cell, c);
        }
    }
    Totals {
        h: area * sums[0],
        p1: area * sums[1],
        q: sums[2..].iter().map(|s| area * s).collect(),
    }
}

/// Largest absolute coefficient difference per component.
pub fn well_balance_residual(u: &DgField, initial: &DgField) -> Result<Vec<f64>> {
    u.check_shape(initial)?;
    Ok((0..u.n_comp())
        .map(|c| u.max_abs_diff(initial, c))
        .collect())
}

/// One periodic first-order Lax–Friedrichs update of the 1D depth,
/// `h_j − λ (F_{j+½} − F_{j−½})` with `F = ½ (hu_j + hu_{j+1} − α (h_{j+1} − h_j))`.
pub fn first_order_depth_update(h: &[f64], u: &[f64], lambda: f64, alpha: f64) -> Vec<f64> {
    let n = h.len();
    let flux = |j: usize| {
        let k = (j + 1) % n;
        0.5 * (h[j] * u[j] + h[k] * u[k] - alpha * (h[k] - h[j]))
    };
    (0..n)
        .map(|j| h[j] - lambda * (flux(j) - flux((j + n - 1) % n)))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Lemma1Stats {
    pub trials: usize,
    /// Trials with a depth below `−ROUNDOFF · max h` after the update.
    pub negative_trials: usize,
    pub min_h: f64,
}

/// Relative round-off floor of the flux-form update on `O(1)` data.
pub const ROUNDOFF: f64 = 1e-14;

/// Random nonnegative depths (a third of them dry) and velocities in
/// `[−2, 2]` with `g = 1`; `α` is the largest `|u| + √h` and `λ = cfl / α`.
pub fn lemma1_oracle(trials: usize, cells: usize, cfl: f64, seed: u64) -> Result<Lemma1Stats> {
    if cells < 3 {
        return Err(Error::config("the oracle needs at least three cells"));
    }
    if !(cfl > 0.0) {
        return Err(Error::config(format!("λα must be positive, got {cfl}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut stats = Lemma1Stats {
        trials,
        negative_trials: 0,
        min_h: f64::INFINITY,
    };
    for _ in 0..trials {
        let h: Vec<f64> = (0..cells)
            .map(|_| {
                if rng.random_bool(1.0 / 3.0) {
                    0.0
                } else {
                    rng.random_range(0.0..1.0)
                }
            })
            .collect();
        let u: Vec<f64> = (0..cells).map(|_| rng.random_range(-2.0..2.0)).collect();
        let alpha = h
            .iter()
            .zip(&u)
            .map(|(h, u)| u.abs() + h.sqrt())
            .fold(0.0, f64::max);
        if !(alpha > 0.0) {
            continue;
        }
        let next = first_order_depth_update(&h, &u, cfl / alpha, alpha);
        let min = next.iter().copied().fold(f64::INFINITY, f64::min);
        stats.min_h = stats.min_h.min(min);
        let scale = h.iter().copied().fold(0.0, f64::max);
        if min < -ROUNDOFF * scale {
            stats.negative_trials += 1;
        }
    }
    Ok(stats)
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepSample {
    pub step: StepRecord,
    pub totals: Totals,
}

/// Per-step history of a run.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct RunRecord {
    pub samples: Vec<StepSample>,
}

impl RunRecord {
    pub fn min_h(&self) -> f64 {
        self.samples
            .iter()
            .map(|s| s.step.min_h)
            .fold(f64::INFINITY, f64::min)
    }

    pub fn steps(&self) -> usize {
        self.samples.len()
    }
}

/// Runs a scenario to its final time, recording every step.
pub fn run_scenario(scenario: &Scenario) -> Result<(DgField, Solver, RunRecord)> {
    let setup = scenario.setup()?;
    let mut u = setup.initial.clone();
    let mut record = RunRecord::default();
    let solver = setup.solver;
    solver.advance(&mut u, 0.0, &setup.controls, |step, state| {
        record.samples.push(StepSample {
            step: step.clone(),
            totals: conserved_totals(state, &solver),
        });
        Ok(())
    })?;
    Ok((u, solver, record))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceTable {
    pub scenario: String,
    pub rows: Vec<ErrorReport>,
    /// `orders[r][k]`: observed order between rows `r` and `r + 1`.
    pub orders: Vec<Vec<f64>>,
}

/// Observed orders `log(E_r / E_{r+1}) / log(h_r / h_{r+1})`, with the mesh
/// width taken from the x-direction refinement.
pub fn observed_orders(rows: &[ErrorReport]) -> Vec<Vec<f64>> {
    rows.windows(2)
        .map(|w| {
            let ratio = (w[1].nx as f64 / w[0].nx as f64).ln();
            w[0].errors
                .iter()
                .zip(&w[1].errors)
                .map(|(a, b)| (a / b).ln() / ratio)
                .collect()
        })
        .collect()
}

impl ConvergenceTable {
    pub fn render(&self) -> String {
        let names = self
            .rows
            .first()
            .map(|r| r.names.clone())
            .unwrap_or_default();
        let mut out = format!("{:>10}", "mesh");
        for n in &names {
            out += &format!(" {:>14} {:>7}", format!("E({n})"), "order");
        }
        out.push('\n');
        for (r, row) in self.rows.iter().enumerate() {
            out += &format!("{:>10}", format!("{}x{}", row.nx, row.ny));
            for (k, e) in row.errors.iter().enumerate() {
                let order = if r == 0 {
                    "-".to_string()
                } else {
                    format!("{:.2}", self.orders[r - 1][k])
                };
                out += &format!(" {:>14.4e} {:>7}", e, order);
            }
            out.push('\n');
        }
        out
    }
}

/// Runs `scenario` on each `(nx, ny)` mesh and tabulates the L1 errors.
pub fn convergence_table(
    scenario: &str,
    meshes: &[(usize, usize)],
    t_final: f64,
    base: &ScenarioOverrides,
) -> Result<ConvergenceTable> {
    if meshes.len() < 2 {
        return Err(Error::config(
            "a convergence study needs at least two meshes",
        ));
    }
    let mut rows = Vec::with_capacity(meshes.len());
    for &(nx, ny) in meshes {
        let o = ScenarioOverrides {
            nx: Some(nx),
            ny: Some(ny),
            t_final: Some(t_final),
            ..base.clone()
        };
        let s = build_scenario(scenario, &o)?;
        let exact = s.exact_or_err()?.clone();
        let (u, solver, _) = run_scenario(&s)?;
        rows.push(l1_error(&u, &solver, &exact, t_final)?);
    }
    let orders = observed_orders(&rows);
    Ok(ConvergenceTable {
        scenario: scenario.to_string(),
        rows,
        orders,
    })
}
