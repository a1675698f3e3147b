#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use swdg::diagnostics::{
    conserved_totals, convergence_table, l1_error, lemma1_oracle, well_balance_residual, RunRecord,
    StepSample,
};
use swdg::io::{write_series, write_snapshot, SnapshotLayout};
use swdg::scenarios::{build_scenario, Scenario, ScenarioOverrides, SCENARIO_NAMES};
use swdg::Error;

/// Steady scenarios whose coefficients must not move.
const STEADY: [&str; 4] = [
    "equilibrium_mono",
    "equilibrium_two",
    "equilibrium_four",
    "still_water_custom",
];
const WELL_BALANCE_TOL: f64 = 1e-12;
const CONSERVATION_TOL: f64 = 1e-12;

#[derive(Parser)]
#[command(
    name = "swdg",
    version,
    about = "Well-balanced positivity-preserving DG shallow water solver"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Switch {
    On,
    Off,
}

impl From<Switch> for bool {
    fn from(s: Switch) -> bool {
        matches!(s, Switch::On)
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Layout {
    Centers,
    Nodes,
    Section,
}

#[derive(clap::Args)]
struct MeshArgs {
    #[arg(long)]
    order: Option<usize>,
    #[arg(long)]
    cfl: Option<f64>,
    #[arg(long, value_enum)]
    strict_positivity: Option<Switch>,
    #[arg(long, value_enum)]
    minmod: Option<Switch>,
    /// Number of constituents, where the scenario allows choosing it.
    #[arg(long)]
    constituents: Option<usize>,
}

impl MeshArgs {
    fn overrides(&self) -> ScenarioOverrides {
        ScenarioOverrides {
            order: self.order,
            cfl: self.cfl,
            positivity_strict: self.strict_positivity.map(Into::into),
            minmod: self.minmod.map(Into::into),
            n_constituents: self.constituents,
            ..Default::default()
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario, writing a snapshot and the step series.
    Run {
        #[arg(value_parser = clap::builder::PossibleValuesParser::new(SCENARIO_NAMES))]
        scenario: String,
        #[arg(long)]
        nx: Option<usize>,
        #[arg(long)]
        ny: Option<usize>,
        #[arg(long)]
        t_final: Option<f64>,
        #[command(flatten)]
        mesh: MeshArgs,
        /// Output directory; defaults to $SWDG_OUT_DIR, then ./swdg_out.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Extra snapshot times before the final one.
        #[arg(long, value_delimiter = ',')]
        snapshots: Vec<f64>,
        #[arg(long, value_enum, default_value = "centers")]
        layout: Layout,
        /// Line sampled by the section layout; defaults to the domain middle.
        #[arg(long)]
        section_y: Option<f64>,
    },
    /// Tabulate L1 errors over a list of meshes.
    Converge {
        #[arg(value_parser = clap::builder::PossibleValuesParser::new(SCENARIO_NAMES))]
        scenario: String,
        /// Comma-separated NXxNY meshes.
        #[arg(long, value_delimiter = ',', value_parser = parse_mesh, required = true)]
        meshes: Vec<(usize, usize)>,
        #[arg(long)]
        t_final: f64,
        #[command(flatten)]
        mesh: MeshArgs,
    },
    /// Run the well-balance, positivity-oracle and conservation suites.
    Verify,
}

fn parse_mesh(s: &str) -> std::result::Result<(usize, usize), String> {
    let (a, b) = s
        .split_once('x')
        .ok_or_else(|| format!("mesh `{s}` is not NXxNY"))?;
    let nx = a.parse().map_err(|_| format!("bad NX in `{s}`"))?;
    let ny = b.parse().map_err(|_| format!("bad NY in `{s}`"))?;
    Ok((nx, ny))
}

/// A failed run or check, reported on one line. Configuration problems
/// exit with 2 like other usage errors, invariant breaches with 1.
struct Breach {
    reason: String,
    code: u8,
}

impl Breach {
    fn invariant(reason: String) -> Self {
        Breach { reason, code: 1 }
    }
}

impl From<Error> for Breach {
    fn from(e: Error) -> Self {
        let code = if matches!(e, Error::Config(_) | Error::Unsupported(_)) {
            2
        } else {
            1
        };
        Breach {
            reason: e.to_string(),
            code,
        }
    }
}

fn out_dir(flag: Option<PathBuf>) -> PathBuf {
    flag.or_else(|| std::env::var_os("SWDG_OUT_DIR").map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("swdg_out"))
}

fn snapshot(dir: &std::path::Path, s: &Scenario, t: f64, layout: SnapshotLayout) -> PathBuf {
    let kind = match layout {
        SnapshotLayout::CellCenters => "",
        SnapshotLayout::PlotNodes => "_nodes",
        SnapshotLayout::CrossSection { .. } => "_section",
    };
    dir.join(format!("{}_{}x{}_t{t:.4}{kind}.csv", s.name, s.nx, s.ny))
}

#[allow(clippy::too_many_arguments)]
fn cmd_run(
    scenario: &str,
    nx: Option<usize>,
    ny: Option<usize>,
    t_final: Option<f64>,
    mesh: &MeshArgs,
    out: Option<PathBuf>,
    mut snapshots: Vec<f64>,
    layout: Layout,
    section_y: Option<f64>,
) -> std::result::Result<(), Breach> {
    let o = ScenarioOverrides {
        nx,
        ny,
        t_final,
        ..mesh.overrides()
    };
    let s = build_scenario(scenario, &o)?;
    let layout = match layout {
        Layout::Centers => SnapshotLayout::CellCenters,
        Layout::Nodes => SnapshotLayout::PlotNodes,
        Layout::Section => SnapshotLayout::CrossSection {
            y: section_y.unwrap_or(0.5 * (s.bounds.y_min + s.bounds.y_max)),
        },
    };
    let dir = out_dir(out);
    std::fs::create_dir_all(&dir).map_err(|source| Error::Io {
        path: dir.clone(),
        source,
    })?;

    let setup = s.setup()?;
    let solver = &setup.solver;
    let mut u = setup.initial.clone();
    let mut record = RunRecord::default();
    let start = conserved_totals(&u, solver);

    snapshots.retain(|&t| t > 0.0 && t < s.t_final);
    snapshots.sort_by(f64::total_cmp);
    snapshots.dedup();
    snapshots.push(s.t_final);
    let mut t = 0.0;
    for target in snapshots {
        let controls = swdg::integrator::StepControls {
            t_final: target,
            ..setup.controls
        };
        t = solver.advance(&mut u, t, &controls, |step, state| {
            record.samples.push(StepSample {
                step: step.clone(),
                totals: conserved_totals(state, solver),
            });
            Ok(())
        })?;
        let path = snapshot(&dir, &s, t, layout);
        write_snapshot(&path, &u, solver, layout)?;
        println!("snapshot t = {t:.6}: {}", path.display());
    }
    let series = dir.join(format!("{}_{}x{}_series.csv", s.name, s.nx, s.ny));
    write_series(&series, &record)?;

    let end = conserved_totals(&u, solver);
    println!("steps: {}", record.steps());
    println!("min depth over positivity nodes: {:e}", record.min_h());
    println!(
        "relative drift of conserved totals: {:e}",
        end.max_relative_drift(&start)
    );
    let mut breach = None;
    if STEADY.contains(&s.name.as_str()) {
        let res = well_balance_residual(&u, &setup.initial)?;
        let worst = res.iter().copied().fold(0.0, f64::max);
        let shown: Vec<String> = res.iter().map(|r| format!("{r:.3e}")).collect();
        println!(
            "well-balance residual per component: [{}]",
            shown.join(", ")
        );
        if !(worst <= WELL_BALANCE_TOL) {
            breach = Some(format!(
                "well-balance residual {worst:e} exceeds {WELL_BALANCE_TOL:e}"
            ));
        }
    } else if let Some(exact) = &s.exact {
        let r = l1_error(&u, solver, exact, t)?;
        for (n, e) in r.names.iter().zip(&r.errors) {
            println!("L1 error {n}: {e:.4e}");
        }
    }
    if s.positivity_strict && record.min_h() < -1e-12 {
        breach = Some(format!(
            "depth {:e} below -1e-12 in strict positivity mode",
            record.min_h()
        ));
    }
    breach.map_or(Ok(()), |b| Err(Breach::invariant(b)))
}

fn cmd_converge(
    scenario: &str,
    meshes: &[(usize, usize)],
    t_final: f64,
    mesh: &MeshArgs,
) -> std::result::Result<(), Breach> {
    let table = convergence_table(scenario, meshes, t_final, &mesh.overrides())?;
    print!("{}", table.render());
    Ok(())
}

fn check(name: &str, ok: bool, detail: String, failures: &mut usize) {
    println!("{} {name}: {detail}", if ok { "PASS" } else { "FAIL" });
    if !ok {
        *failures += 1;
    }
}

fn cmd_verify() -> std::result::Result<(), Breach> {
    let mut failures = 0;
    for k in [1, 2] {
        let o = ScenarioOverrides {
            nx: Some(40),
            ny: Some(20),
            order: Some(k),
            t_final: Some(5.0),
            ..Default::default()
        };
        let s = build_scenario("equilibrium_mono", &o)?;
        let setup = s.setup()?;
        let mut u = setup.initial.clone();
        setup
            .solver
            .advance(&mut u, 0.0, &setup.controls, |_, _| Ok(()))?;
        let worst = well_balance_residual(&u, &setup.initial)?
            .into_iter()
            .fold(0.0, f64::max);
        check(
            &format!("well-balance k={k}"),
            worst <= WELL_BALANCE_TOL,
            format!("{worst:e}"),
            &mut failures,
        );
    }

    let ok = lemma1_oracle(10_000, 8, 1.0, 1)?;
    check(
        "first-order positivity at λα = 1",
        ok.negative_trials == 0,
        format!("{ok:?}"),
        &mut failures,
    );
    let bad = lemma1_oracle(10_000, 8, 1.5, 1)?;
    check(
        "bound active at λα = 1.5",
        bad.negative_trials > 0,
        format!("{bad:?}"),
        &mut failures,
    );

    let o = ScenarioOverrides {
        nx: Some(40),
        ny: Some(20),
        ..Default::default()
    };
    let setup = build_scenario("equilibrium_two", &o)?.setup()?;
    let mut u = setup.initial.clone();
    let start = conserved_totals(&u, &setup.solver);
    let mut t = 0.0;
    let mut drift: f64 = 0.0;
    for _ in 0..100 {
        t += setup.solver.step_adaptive(&mut u, t, &setup.controls)?.dt;
        drift = drift.max(conserved_totals(&u, &setup.solver).max_relative_drift(&start));
    }
    check(
        "conservation over 100 steps",
        drift <= CONSERVATION_TOL,
        format!("{drift:e}"),
        &mut failures,
    );

    if failures > 0 {
        return Err(Breach::invariant(format!("{failures} check(s) failed")));
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result: std::result::Result<(), Breach> = match cli.command {
        Command::Run {
            scenario,
            nx,
            ny,
            t_final,
            mesh,
            out,
            snapshots,
            layout,
            section_y,
        } => cmd_run(
            &scenario, nx, ny, t_final, &mesh, out, snapshots, layout, section_y,
        ),
        Command::Converge {
            scenario,
            meshes,
            t_final,
            mesh,
        } => cmd_converge(&scenario, &meshes, t_final, &mesh),
        Command::Verify => cmd_verify(),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Breach { reason, code }) => {
            eprintln!("error: {reason}");
            ExitCode::from(code)
        }
    }
}
