//! Benchmark catalog: bathymetry, initial data, boundaries, run parameters
//! and closed-form solutions where they exist.

use std::f64::consts::PI;
use std::sync::Arc;

use crate::basis::NodalBasis;
use crate::error::{Error, Result};
use crate::field::{Bathymetry, DgField};
use crate::grid::{build_grid, Bounds};
use crate::integrator::{BoundaryCondition, BoundarySpec, ExactConserved, Solver, StepControls};
use crate::limiters::LimiterConfig;
use crate::physics::Physics;
use crate::state::{dry_threshold, relative_density, Primitive, P3};

pub type ScalarFn = Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>;
/// `(t, x, y) → (h, u, v, c)`; `r` is filled in from the relative densities.
pub type PrimitiveFn = Arc<dyn Fn(f64, f64, f64) -> Primitive + Send + Sync>;

pub const SCENARIO_NAMES: [&str; 8] = [
    "perturbation",
    "parabolic_bowl",
    "equilibrium_mono",
    "equilibrium_two",
    "equilibrium_four",
    "flood_wave",
    "dam_break",
    "still_water_custom",
];

#[derive(Clone)]
pub struct ExactSolution {
    f: PrimitiveFn,
}

impl ExactSolution {
    pub fn new(f: PrimitiveFn) -> Self {
        ExactSolution { f }
    }

    pub fn eval(&self, t: f64, x: f64, y: f64) -> Primitive {
        (self.f)(t, x, y)
    }
}

#[derive(Clone)]
pub struct Scenario {
    pub name: String,
    pub bounds: Bounds,
    pub nx: usize,
    pub ny: usize,
    pub order: usize,
    pub g: f64,
    pub deltas: Vec<f64>,
    pub bathymetry: ScalarFn,
    /// Initial primitive state, called with `t = 0`.
    pub initial: PrimitiveFn,
    pub boundary: BoundarySpec,
    pub t_final: f64,
    pub cfl: f64,
    pub positivity_strict: bool,
    pub minmod: bool,
    pub exact: Option<ExactSolution>,
    /// Initial data has jumps on cell interfaces; nodes on an interface are
    /// sampled from the side of the cell they belong to.
    pub discontinuous: bool,
}

impl std::fmt::Debug for Scenario {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Scenario")
            .field("name", &self.name)
            .field("bounds", &self.bounds)
            .field("mesh", &(self.nx, self.ny))
            .field("order", &self.order)
            .field("deltas", &self.deltas)
            .field("t_final", &self.t_final)
            .field("cfl", &self.cfl)
            .field("positivity_strict", &self.positivity_strict)
            .field("minmod", &self.minmod)
            .finish()
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ScenarioOverrides {
    pub nx: Option<usize>,
    pub ny: Option<usize>,
    pub order: Option<usize>,
    pub cfl: Option<f64>,
    pub t_final: Option<f64>,
    pub n_constituents: Option<usize>,
    pub positivity_strict: Option<bool>,
    pub minmod: Option<bool>,
}

/// Everything needed to start a run.
#[derive(Debug, Clone)]
pub struct Setup {
    pub solver: Solver,
    pub initial: DgField,
    pub controls: StepControls,
}

fn with_r(mut p: Primitive, deltas: &[f64]) -> Primitive {
    p.r = 1.0 + p.c.iter().zip(deltas).map(|(c, d)| c * d).sum::<f64>();
    p
}

fn at_rest(h: f64, c: Vec<f64>) -> Primitive {
    Primitive {
        h,
        u: 0.0,
        v: 0.0,
        r: 1.0,
        c,
    }
}

/// Bottom of the equilibrium tests: `0.1 (1 − cos(2πx/10))`.
fn cosine_bottom(x: f64) -> f64 {
    0.1 * (1.0 - (2.0 * PI * x / 10.0).cos())
}

impl Scenario {
    pub fn exact_or_err(&self) -> Result<&ExactSolution> {
        self.exact.as_ref().ok_or_else(|| {
            Error::Unsupported(format!(
                "scenario {} has no closed-form solution",
                self.name
            ))
        })
    }

    pub fn n_constituents(&self) -> usize {
        self.deltas.len()
    }

    /// Checks the invariants on the initial data at the nodes of `basis`.
    fn validate(&self) -> Result<()> {
        if !(self.cfl > 0.0 && self.cfl <= 1.0) {
            return Err(Error::config(format!("CFL {} outside (0, 1]", self.cfl)));
        }
        if !(self.t_final >= 0.0) {
            return Err(Error::config(format!(
                "negative final time {}",
                self.t_final
            )));
        }
        if self.nx == 0 || self.ny == 0 {
            return Err(Error::config(
                "mesh must have at least one cell per direction",
            ));
        }
        if !(1..=2).contains(&self.order) {
            return Err(Error::config(format!(
                "order {} not supported (1 or 2)",
                self.order
            )));
        }
        Ok(())
    }

    fn check_primitive(&self, p: &Primitive, x: f64, y: f64) -> Result<()> {
        if !(p.h >= 0.0) {
            return Err(Error::config(format!(
                "{}: negative initial depth {} at ({x}, {y})",
                self.name, p.h
            )));
        }
        if p.c.len() != self.deltas.len() {
            return Err(Error::config(format!(
                "{}: concentration count mismatch",
                self.name
            )));
        }
        if p.c.iter().any(|&c| !(c >= 0.0)) {
            return Err(Error::config(format!(
                "{}: negative concentration at ({x}, {y})",
                self.name
            )));
        }
        if !(relative_density(&p.c, &self.deltas)? > 0.0) {
            return Err(Error::config(format!(
                "{}: nonpositive relative density at ({x}, {y})",
                self.name
            )));
        }
        Ok(())
    }

    /// Discretizes the scenario: grid, basis, bathymetry, initial field,
    /// boundary handles and controls.
    pub fn setup(&self) -> Result<Setup> {
        self.validate()?;
        let grid = build_grid(self.bounds, self.nx, self.ny)?;
        let basis = NodalBasis::new(self.order)?;
        let zf = self.bathymetry.clone();
        let bath = Bathymetry::from_fn(|x, y| zf(x, y), grid, &basis);
        let nc = 4 + self.deltas.len();

        let mut initial = DgField::zeros(grid, &basis, nc);
        let mut max_depth: f64 = 0.0;
        for j in 0..grid.ny {
            for i in 0..grid.nx {
                let cell = grid.index(i, j);
                let (xc, yc) = grid.center(i, j);
                for m in 0..basis.n_nodes() {
                    let [xi, eta] = basis.node(m);
                    let (x, y) = grid.physical(i, j, xi, eta);
                    let (xs, ys) = if self.discontinuous {
                        (x + 1e-9 * (xc - x), y + 1e-9 * (yc - y))
                    } else {
                        (x, y)
                    };
                    let p = with_r((self.initial)(0.0, xs, ys), &self.deltas);
                    self.check_primitive(&p, x, y)?;
                    max_depth = max_depth.max(p.h);
                    let u = p.to_conserved(bath.node(cell, m), &self.deltas)?;
                    for (c, v) in u.0.iter().enumerate() {
                        initial.set(cell, m, c, *v);
                    }
                }
            }
        }

        let mut boundary = self.boundary.clone();
        if let Some(exact) = &self.exact {
            let f = exact.f.clone();
            let deltas = self.deltas.clone();
            let handle: ExactConserved = Arc::new(move |t, x, y, z| {
                let p = with_r(f(t, x, y), &deltas);
                let h = p.h.max(0.0);
                let q: Vec<f64> = p.c.iter().map(|c| h * c).collect();
                let mut u = vec![h + z, h * p.r, h * p.u * p.r, h * p.v * p.r];
                u.extend(q);
                u
            });
            boundary.exact = Some(handle);
        }

        let physics = Physics::new(self.g, dry_threshold(max_depth));
        let solver = Solver::new(
            grid,
            basis,
            bath,
            physics,
            self.deltas.clone(),
            boundary,
            LimiterConfig {
                minmod: self.minmod,
            },
        )?;
        Ok(Setup {
            solver,
            initial,
            controls: StepControls {
                cfl: self.cfl,
                positivity_strict: self.positivity_strict,
                t_final: self.t_final,
            },
        })
    }

    pub fn apply_overrides(&mut self, o: &ScenarioOverrides) -> Result<()> {
        if let Some(nx) = o.nx {
            self.nx = nx;
        }
        if let Some(ny) = o.ny {
            self.ny = ny;
        }
        if let Some(k) = o.order {
            self.order = k;
        }
        if let Some(c) = o.cfl {
            self.cfl = c;
        }
        if let Some(t) = o.t_final {
            self.t_final = t;
        }
        if let Some(s) = o.positivity_strict {
            self.positivity_strict = s;
        }
        if let Some(m) = o.minmod {
            self.minmod = m;
        }
        self.validate()
    }

    /// A still-water state over user bathymetry with concentration profiles
    /// satisfying `Σ Δ_i c_i = const`, verified at random points.
    #[allow(clippy::too_many_arguments)]
    pub fn still_water_custom(
        bounds: Bounds,
        nx: usize,
        ny: usize,
        level: f64,
        bathymetry: ScalarFn,
        concentrations: Vec<ScalarFn>,
        deltas: Vec<f64>,
    ) -> Result<Scenario> {
        use rand::{Rng, SeedableRng};
        if concentrations.len() != deltas.len() {
            return Err(Error::config(
                "one relative density per concentration profile is required",
            ));
        }
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0x57_11);
        let weighted = |x: f64, y: f64| -> f64 {
            concentrations
                .iter()
                .zip(&deltas)
                .map(|(c, d)| d * c(x, y))
                .sum()
        };
        let reference = weighted(bounds.x_min, bounds.y_min);
        for _ in 0..1000 {
            let x = rng.random_range(bounds.x_min..=bounds.x_max);
            let y = rng.random_range(bounds.y_min..=bounds.y_max);
            let s = weighted(x, y);
            if (s - reference).abs() > 1e-12 * (1.0 + reference.abs()) {
                return Err(Error::config(format!(
                    "profiles violate the equilibrium constraint: Σ Δc = {s} at ({x}, {y}) but {reference} at the origin corner"
                )));
            }
            if level - bathymetry(x, y) < 0.0 {
                return Err(Error::config(format!(
                    "bottom rises above the still-water level at ({x}, {y})"
                )));
            }
        }
        let z = bathymetry.clone();
        let cs = concentrations.clone();
        let state: PrimitiveFn =
            Arc::new(move |_, x, y| at_rest(level - z(x, y), cs.iter().map(|c| c(x, y)).collect()));
        Ok(Scenario {
            name: "still_water_custom".into(),
            bounds,
            nx,
            ny,
            order: 2,
            g: 1.0,
            deltas,
            bathymetry,
            initial: state.clone(),
            boundary: BoundarySpec::uniform(BoundaryCondition::Wall),
            t_final: 10.0,
            cfl: 0.2,
            positivity_strict: false,
            minmod: false,
            exact: Some(ExactSolution::new(state)),
            discontinuous: false,
        })
    }
}

pub fn bowl_constants(h0: f64, a: f64, r0: f64, g: f64) -> (f64, f64, f64) {
    let omega = (8.0 * g * h0).sqrt() / a;
    let big_a = (a * a - r0 * r0) / (a * a + r0 * r0);
    (omega, big_a, 2.0 * PI / omega)
}

pub fn flood_reference_time(r0: f64, g: f64, h0: f64) -> f64 {
    r0 / (2.0 * g * h0).sqrt()
}

fn equilibrium(name: &str, profiles: Vec<ScalarFn>) -> Scenario {
    let deltas = vec![0.2; profiles.len()];
    let bathymetry: ScalarFn = Arc::new(|x, _| cosine_bottom(x));
    let state: PrimitiveFn = Arc::new(move |_, x, y| {
        at_rest(
            1.0 - cosine_bottom(x),
            profiles.iter().map(|c| c(x, y)).collect(),
        )
    });
    Scenario {
        name: name.into(),
        bounds: Bounds::new(0.0, 10.0, 0.0, 5.0),
        nx: 80,
        ny: 40,
        order: 2,
        g: 1.0,
        deltas,
        bathymetry,
        initial: state.clone(),
        boundary: BoundarySpec::uniform(BoundaryCondition::Wall),
        t_final: 50.0,
        cfl: 0.2,
        positivity_strict: false,
        minmod: false,
        exact: Some(ExactSolution::new(state)),
        discontinuous: false,
    }
}

fn cos2(period: f64) -> ScalarFn {
    Arc::new(move |x, _| 0.2 + 0.1 * (PI * x / period).cos().powi(2))
}

fn sin2(period: f64) -> ScalarFn {
    Arc::new(move |x, _| 0.3 + 0.1 * (PI * x / period).sin().powi(2))
}

/// Default custom still water: a Gaussian hump with two counter-varying
/// concentrations (plus constant extras when more are requested).
fn default_custom(n: usize) -> Result<Scenario> {
    let bounds = Bounds::new(0.0, 10.0, 0.0, 5.0);
    let z: ScalarFn = Arc::new(|x, y| 0.3 * (-((x - 5.0).powi(2) + (y - 2.5).powi(2))).exp());
    let wave = |x: f64, y: f64| 0.1 * (PI * x / 5.0).sin() * (PI * y / 5.0).sin();
    let mut cs: Vec<ScalarFn> = Vec::with_capacity(n);
    for i in 0..n {
        let f: ScalarFn = if i + 1 == n && n % 2 == 1 {
            Arc::new(|_, _| 0.3)
        } else if i % 2 == 0 {
            Arc::new(move |x, y| 0.25 + wave(x, y))
        } else {
            Arc::new(move |x, y| 0.35 - wave(x, y))
        };
        cs.push(f);
    }
    let mut s = Scenario::still_water_custom(bounds, 40, 20, 1.0, z, cs, vec![0.2; n])?;
    s.t_final = 10.0;
    Ok(s)
}

/// Builds a named benchmark with its published parameters, then applies
/// `overrides`.
pub fn build_scenario(name: &str, overrides: &ScenarioOverrides) -> Result<Scenario> {
    let n_override = overrides.n_constituents;
    let mut s = match name {
        "perturbation" => {
            let n = n_override.unwrap_or(0);
            let bathymetry: ScalarFn =
                Arc::new(|x, y| 0.8 * (-5.0 * (x - 0.9).powi(2) - 50.0 * (y - 0.5).powi(2)).exp());
            let z = bathymetry.clone();
            Scenario {
                name: name.into(),
                bounds: Bounds::new(0.0, 2.0, 0.0, 1.0),
                nx: 200,
                ny: 50,
                order: 1,
                g: 1.0,
                deltas: vec![0.2; n],
                bathymetry,
                initial: Arc::new(move |_, x, y| {
                    let eta = if (0.05..=0.15).contains(&x) {
                        1.01
                    } else {
                        1.0
                    };
                    at_rest(eta - z(x, y), vec![0.0; n])
                }),
                boundary: BoundarySpec::by_axis(
                    BoundaryCondition::Wall,
                    BoundaryCondition::Outflow,
                ),
                t_final: 1.7,
                cfl: 0.3,
                positivity_strict: false,
                minmod: true,
                exact: None,
                discontinuous: true,
            }
        }
        "parabolic_bowl" => {
            let (h0, a, r0, g) = (0.1, 1.0, 0.8, 1.0);
            let (omega, big_a, period) = bowl_constants(h0, a, r0, g);
            let zf = move |x: f64, y: f64| h0 * ((x * x + y * y) / (a * a) - 1.0);
            let exact: PrimitiveFn = Arc::new(move |t, x, y| {
                let z = zf(x, y);
                let den = 1.0 - big_a * (omega * t).cos();
                let r2 = (x * x + y * y) / (a * a);
                let surface = h0
                    * ((1.0 - big_a * big_a).sqrt() / den
                        - 1.0
                        - r2 * ((1.0 - big_a * big_a) / (den * den) - 1.0));
                let eta = surface.max(z);
                let h = eta - z;
                if h > 0.0 {
                    let s = 0.5 * omega * (omega * t).sin() / den;
                    Primitive {
                        h,
                        u: s * x,
                        v: s * y,
                        r: 1.0,
                        c: vec![],
                    }
                } else {
                    at_rest(0.0, vec![])
                }
            });
            Scenario {
                name: name.into(),
                bounds: Bounds::new(-2.0, 2.0, -2.0, 2.0),
                nx: 200,
                ny: 200,
                order: 1,
                g,
                deltas: vec![],
                bathymetry: Arc::new(zf),
                initial: exact.clone(),
                boundary: BoundarySpec::uniform(BoundaryCondition::Dirichlet),
                t_final: period,
                cfl: 0.2,
                positivity_strict: true,
                minmod: false,
                exact: Some(ExactSolution::new(exact)),
                discontinuous: false,
            }
        }
        "equilibrium_mono" => equilibrium(name, vec![Arc::new(|_, _| 0.5)]),
        "equilibrium_two" => equilibrium(name, vec![cos2(10.0), sin2(10.0)]),
        "equilibrium_four" => {
            equilibrium(name, vec![cos2(10.0), sin2(10.0), cos2(20.0), sin2(20.0)])
        }
        "flood_wave" => {
            let (h0, r0, g, c0) = (1.0, 14.0, 1.0, 0.5);
            let big_t = flood_reference_time(r0, g, h0);
            let exact: PrimitiveFn = Arc::new(move |t, x, y| {
                let s = big_t * big_t / (t * t + big_t * big_t);
                let h = h0 * (s - (x * x + y * y) / (r0 * r0) * s * s);
                if h > 0.0 {
                    let k = t / (t * t + big_t * big_t);
                    Primitive {
                        h,
                        u: k * x,
                        v: k * y,
                        r: 1.0,
                        c: vec![c0],
                    }
                } else {
                    at_rest(0.0, vec![c0])
                }
            });
            Scenario {
                name: name.into(),
                bounds: Bounds::new(-6.0, 6.0, -6.0, 6.0),
                nx: 80,
                ny: 80,
                order: 1,
                g,
                deltas: vec![0.2],
                bathymetry: Arc::new(|_, _| 0.0),
                initial: exact.clone(),
                boundary: BoundarySpec::uniform(BoundaryCondition::Dirichlet),
                t_final: 4.0,
                cfl: 0.2,
                positivity_strict: true,
                minmod: false,
                exact: Some(ExactSolution::new(exact)),
                discontinuous: false,
            }
        }
        "dam_break" => {
            let n = n_override.unwrap_or(1);
            Scenario {
                name: name.into(),
                bounds: Bounds::new(0.0, 10.0, 0.0, 5.0),
                nx: 200,
                ny: 50,
                order: 1,
                g: 1.0,
                deltas: vec![0.2; n],
                bathymetry: Arc::new(|_, _| 0.0),
                initial: Arc::new(move |_, x, _| {
                    at_rest(if x <= 5.0 { 1.0 } else { 0.1 }, vec![0.5; n])
                }),
                boundary: BoundarySpec::by_axis(
                    BoundaryCondition::Outflow,
                    BoundaryCondition::ComponentOverride {
                        component: P3,
                        value: 0.0,
                    },
                ),
                t_final: 3.0,
                cfl: 0.2,
                positivity_strict: false,
                minmod: true,
                exact: None,
                discontinuous: true,
            }
        }
        "still_water_custom" => default_custom(n_override.unwrap_or(2))?,
        other => {
            return Err(Error::config(format!(
                "unknown scenario '{other}'; expected one of {}",
                SCENARIO_NAMES.join(", ")
            )))
        }
    };
    if let Some(n) = n_override {
        if n != s.deltas.len() {
            return Err(Error::config(format!(
                "scenario {name} fixes {} constituents; cannot override to {n}",
                s.deltas.len()
            )));
        }
    }
    s.apply_overrides(overrides)?;
    Ok(s)
}

/// Exact primitive state of `scenario` at `(t, x, y)`, with `r` set.
pub fn exact_solution(scenario: &Scenario, t: f64, x: f64, y: f64) -> Result<Primitive> {
    let e = scenario.exact_or_err()?;
    Ok(with_r(e.eval(t, x, y), &scenario.deltas))
}
