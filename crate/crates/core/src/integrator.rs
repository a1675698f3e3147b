//! Semi-discrete DG operator, SSP-RK3 stepping, time-step control and
//! boundary ghost states.

use std::fmt;
use std::sync::Arc;

use rayon::prelude::*;

use crate::basis::{Edge, NodalBasis};
use crate::error::{Error, Result};
use crate::field::{Bathymetry, DgField};
use crate::grid::Grid;
use crate::limiters::{apply_stage_limiters, LimiterConfig, LimiterReport, PositivityNodeSet};
use crate::physics::{compute_b, Direction, Physics, WaveSpeeds};
use crate::state::{ETA, P1, P2, P3};

fn as_rows<const N: usize>(s: &[f64]) -> &[[f64; N]] {
    let (rows, rest) = s.as_chunks::<N>();
    debug_assert!(rest.is_empty());
    rows
}

fn as_rows_mut<const N: usize>(s: &mut [f64]) -> &mut [[f64; N]] {
    let (rows, rest) = s.as_chunks_mut::<N>();
    debug_assert!(rest.is_empty());
    rows
}

/// Exact conserved state `(t, x, y, z) → U` used by Dirichlet sides; `z` is
/// the bottom elevation of the discrete bathymetry at that point.
/// Largest supported number of conserved components.
pub const MAX_COMP: usize = 16;
const MAX_VOLUME: usize = 16;

pub type ExactConserved = Arc<dyn Fn(f64, f64, f64, f64) -> Vec<f64> + Send + Sync>;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BoundaryCondition {
    Wall,
    Outflow,
    Dirichlet,
    /// Copy the interior trace, then overwrite one component.
    ComponentOverride {
        component: usize,
        value: f64,
    },
}

#[derive(Clone)]
pub struct BoundarySpec {
    pub west: BoundaryCondition,
    pub east: BoundaryCondition,
    pub south: BoundaryCondition,
    pub north: BoundaryCondition,
    pub exact: Option<ExactConserved>,
}

impl fmt::Debug for BoundarySpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("BoundarySpec")
            .field("west", &self.west)
            .field("east", &self.east)
            .field("south", &self.south)
            .field("north", &self.north)
            .field("exact", &self.exact.is_some())
            .finish()
    }
}

impl BoundarySpec {
    pub fn uniform(bc: BoundaryCondition) -> Self {
        BoundarySpec {
            west: bc,
            east: bc,
            south: bc,
            north: bc,
            exact: None,
        }
    }

    /// `x_bc` on the west and east sides, `y_bc` on south and north.
    pub fn by_axis(x_bc: BoundaryCondition, y_bc: BoundaryCondition) -> Self {
        BoundarySpec {
            west: x_bc,
            east: x_bc,
            south: y_bc,
            north: y_bc,
            exact: None,
        }
    }

    pub fn with_exact(mut self, exact: ExactConserved) -> Self {
        self.exact = Some(exact);
        self
    }

    pub fn side(&self, edge: Edge) -> BoundaryCondition {
        match edge {
            Edge::West => self.west,
            Edge::East => self.east,
            Edge::South => self.south,
            Edge::North => self.north,
        }
    }

    pub fn validate(&self, n_comp: usize) -> Result<()> {
        for e in Edge::ALL {
            match self.side(e) {
                BoundaryCondition::Dirichlet if self.exact.is_none() => {
                    return Err(Error::config(format!(
                        "{e:?} side is Dirichlet but no exact solution is attached"
                    )));
                }
                BoundaryCondition::ComponentOverride { component, .. } if component >= n_comp => {
                    return Err(Error::config(format!(
                        "{e:?} side overrides component {component} of {n_comp}"
                    )));
                }
                _ => {}
            }
        }
        Ok(())
    }
}

/// Exterior trace for a boundary edge on side `side` at physical point
/// `(x, y)` with bottom `z`.
#[allow(clippy::too_many_arguments)]
pub fn ghost_state(
    bc: BoundaryCondition,
    interior: &[f64],
    side: Edge,
    exact: Option<&ExactConserved>,
    t: f64,
    x: f64,
    y: f64,
    z: f64,
    out: &mut [f64],
) -> Result<()> {
    match bc {
        BoundaryCondition::Outflow => out.copy_from_slice(interior),
        BoundaryCondition::Wall => {
            out.copy_from_slice(interior);
            let normal = match side {
                Edge::West | Edge::East => P2,
                Edge::South | Edge::North => P3,
            };
            out[normal] = -out[normal];
        }
        BoundaryCondition::ComponentOverride { component, value } => {
            out.copy_from_slice(interior);
            out[component] = value;
        }
        BoundaryCondition::Dirichlet => {
            let f =
                exact.ok_or_else(|| Error::config("Dirichlet boundary without exact solution"))?;
            let u = f(t, x, y, z);
            if u.len() != out.len() {
                return Err(Error::config(format!(
                    "exact solution has {} components, expected {}",
                    u.len(),
                    out.len()
                )));
            }
            out.copy_from_slice(&u);
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepControls {
    pub cfl: f64,
    pub positivity_strict: bool,
    pub t_final: f64,
}

impl StepControls {
    pub fn validate(&self) -> Result<()> {
        if !(self.cfl > 0.0 && self.cfl <= 1.0) {
            return Err(Error::config(format!(
                "CFL number must lie in (0, 1], got {}",
                self.cfl
            )));
        }
        if !self.t_final.is_finite() || self.t_final < 0.0 {
            return Err(Error::config(format!(
                "invalid final time {}",
                self.t_final
            )));
        }
        Ok(())
    }
}

/// States the SSP-RK3 driver can combine: `self ← base + w ((self − base) + dt · rate)`.
pub trait StageState: Clone {
    fn stage_update(&mut self, base: &Self, rate: &Self, dt: f64, w: f64);
}

impl StageState for f64 {
    fn stage_update(&mut self, base: &Self, rate: &Self, dt: f64, w: f64) {
        *self = base + w * ((*self - base) + dt * rate);
    }
}

impl StageState for Vec<f64> {
    fn stage_update(&mut self, base: &Self, rate: &Self, dt: f64, w: f64) {
        for ((s, b), r) in self.iter_mut().zip(base).zip(rate) {
            *s = b + w * ((*s - b) + dt * r);
        }
    }
}

impl StageState for DgField {
    fn stage_update(&mut self, base: &Self, rate: &Self, dt: f64, w: f64) {
        self.data_mut()
            .par_iter_mut()
            .zip(base.data().par_iter())
            .zip(rate.data().par_iter())
            .for_each(|((s, b), r)| *s = b + w * ((*s - b) + dt * r));
    }
}

/// One Shu–Osher SSP-RK3 step in increment form, which reproduces the
/// input exactly when every rate vanishes:
/// `u¹ = u + dt L(u)`, `u² = u + ¼ ((u¹ − u) + dt L(u¹))`,
/// `u³ = u + ⅔ ((u² − u) + dt L(u²))`. `limit` runs after each stage.
pub fn ssp_rk3_step<S, L, P>(u: &S, t: f64, dt: f64, mut rate: L, mut limit: P) -> Result<S>
where
    S: StageState,
    L: FnMut(&S, f64) -> Result<S>,
    P: FnMut(&mut S) -> Result<()>,
{
    let stages = [(t, 1.0), (t + dt, 0.25), (t + 0.5 * dt, 2.0 / 3.0)];
    let mut stage = u.clone();
    for (ts, w) in stages {
        let l = rate(&stage, ts)?;
        stage.stage_update(u, &l, dt, w);
        limit(&mut stage)?;
    }
    Ok(stage)
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub t: f64,
    pub dt: f64,
    /// Smallest depth over the positivity nodes across all stages.
    pub min_h: f64,
    pub cells_scaled: usize,
    pub min_theta: f64,
    pub minmod_cells: usize,
    pub thin_cells: usize,
    /// Largest `α₁/Δx + α₂/Δy` of the later stages relative to the first.
    pub speed_growth: f64,
    /// Times the step was repeated because a later stage broke the positivity cap.
    pub retries: usize,
}

const MAX_STAGE_RETRIES: usize = 8;
const STAGE_RETRY_SAFETY: f64 = 0.99;

/// Spatial operator and stepping for one configured problem.
#[derive(Debug, Clone)]
pub struct Solver {
    pub grid: Grid,
    pub basis: NodalBasis,
    pub bathymetry: Bathymetry,
    pub physics: Physics,
    pub deltas: Vec<f64>,
    pub boundary: BoundarySpec,
    pub limiter: LimiterConfig,
    node_set: PositivityNodeSet,
}

impl Solver {
    pub fn new(
        grid: Grid,
        basis: NodalBasis,
        bathymetry: Bathymetry,
        physics: Physics,
        deltas: Vec<f64>,
        boundary: BoundarySpec,
        limiter: LimiterConfig,
    ) -> Result<Self> {
        if *bathymetry.field().grid() != grid || bathymetry.field().degree() != basis.degree() {
            return Err(Error::config("bathymetry does not match grid and basis"));
        }
        if 4 + deltas.len() > MAX_COMP {
            return Err(Error::config(format!(
                "at most {} constituents are supported",
                MAX_COMP - 4
            )));
        }
        boundary.validate(4 + deltas.len())?;
        let node_set = PositivityNodeSet::new(&basis);
        Ok(Solver {
            grid,
            basis,
            bathymetry,
            physics,
            deltas,
            boundary,
            limiter,
            node_set,
        })
    }

    pub fn n_comp(&self) -> usize {
        4 + self.deltas.len()
    }

    pub fn node_set(&self) -> &PositivityNodeSet {
        &self.node_set
    }

    fn check_field(&self, u: &DgField) -> Result<()> {
        if *u.grid() != self.grid
            || u.degree() != self.basis.degree()
            || u.n_comp() != self.n_comp()
        {
            return Err(Error::config(
                "state field does not match the solver configuration",
            ));
        }
        Ok(())
    }

    /// Phase one, per cell: volume terms already multiplied by the inverse
    /// mass matrix into `rhs`, edge traces into `traces`
    /// (`[((cell * 4 + edge) * n_edge + beta) * nc + c]`), and the largest
    /// `|u| + √(g h)`, `|v| + √(g h)` over the cell's quadrature points.
    fn cell_phase(
        &self,
        u: &DgField,
        b: f64,
        rhs: &mut DgField,
        traces: &mut [f64],
    ) -> Vec<WaveSpeeds> {
        macro_rules! dispatch {
            ($($n:literal)*) => {
                match u.n_comp() {
                    $($n => self.cell_phase_n::<$n>(u, b, rhs, traces),)*
                    n => unreachable!("{n} components exceed the supported maximum"),
                }
            };
        }
        dispatch!(4 5 6 7 8 9 10 11 12 13 14 15 16)
    }

    fn cell_phase_n<const NC: usize>(
        &self,
        u: &DgField,
        b: f64,
        rhs: &mut DgField,
        traces: &mut [f64],
    ) -> Vec<WaveSpeeds> {
        let basis = &self.basis;
        let nn = basis.n_nodes();
        let nq = basis.n_volume();
        let ne = basis.n_edge();
        let (dx, dy) = (self.grid.dx, self.grid.dy);
        let (phi, dxi, deta) = (basis.volume_phi(), basis.volume_dxi(), basis.volume_deta());
        let (lx, ly, ls) = (basis.lift_x(), basis.lift_y(), basis.lift_source());
        let len = rhs.cell_len();
        rhs.data_mut()
            .par_chunks_exact_mut(len)
            .zip(traces.par_chunks_exact_mut(4 * ne * NC))
            .enumerate()
            .map(|(cell, (r, tr))| {
                let cu = as_rows::<NC>(u.cell(cell));
                let (zq, zxq, zyq) = self.bathymetry.volume(cell);
                let mut speeds = WaveSpeeds::default();
                // Fluxes at the quadrature points, pre-divided by the cell size.
                let mut fq = [[0.0; NC]; MAX_VOLUME];
                let mut gq = [[0.0; NC]; MAX_VOLUME];
                let mut sq = [[0.0; 2]; MAX_VOLUME];
                for q in 0..nq {
                    let mut uq = [0.0; NC];
                    let mut grad = [0.0; 4];
                    for m in 0..nn {
                        let k = q * nn + m;
                        let (p, gx, gy) = (phi[k], dxi[k], deta[k]);
                        let um = &cu[m];
                        for c in 0..NC {
                            uq[c] += p * um[c];
                        }
                        grad[0] += gx * um[ETA];
                        grad[1] += gy * um[ETA];
                        grad[2] += gx * um[P1];
                        grad[3] += gy * um[P1];
                    }
                    let kin = self.physics.kinematics(&uq, zq[q]);
                    speeds = speeds.max(self.physics.speeds_with(&kin));
                    self.physics
                        .flux_with(&uq, &kin, zq[q], b, Direction::X, &mut fq[q]);
                    self.physics
                        .flux_with(&uq, &kin, zq[q], b, Direction::Y, &mut gq[q]);
                    for c in 0..NC {
                        fq[q][c] /= dx;
                        gq[q][c] /= dy;
                    }
                    sq[q] = self.physics.momentum_source(
                        uq[ETA],
                        &kin,
                        [grad[0] / dx, grad[1] / dy],
                        [grad[2] / dx, grad[3] / dy],
                        zq[q],
                        [zxq[q], zyq[q]],
                        b,
                    );
                }
                let r = as_rows_mut::<NC>(r);
                for (m, rm) in r.iter_mut().enumerate() {
                    let mut acc = [0.0; NC];
                    let mut src = [0.0; 2];
                    for q in 0..nq {
                        let k = m * nq + q;
                        let (ax, ay, a_s) = (lx[k], ly[k], ls[k]);
                        for c in 0..NC {
                            acc[c] += ax * fq[q][c] + ay * gq[q][c];
                        }
                        src[0] += a_s * sq[q][0];
                        src[1] += a_s * sq[q][1];
                    }
                    acc[P2] += src[0];
                    acc[P3] += src[1];
                    *rm = acc;
                }
                let tr = as_rows_mut::<NC>(tr);
                for e in Edge::ALL {
                    let ep = basis.edge_phi(e);
                    let ze = self.bathymetry.edge(cell, e);
                    for beta in 0..ne {
                        let mut acc = [0.0; NC];
                        for m in 0..nn {
                            let p = ep[beta * nn + m];
                            for c in 0..NC {
                                acc[c] += p * cu[m][c];
                            }
                        }
                        speeds = speeds.max(
                            self.physics
                                .speeds_with(&self.physics.kinematics(&acc, ze[beta])),
                        );
                        tr[e as usize * ne + beta] = acc;
                    }
                }
                speeds
            })
            .collect()
    }

    /// Global maximal wave speeds of `u` over all quadrature points.
    pub fn max_wave_speeds(&self, u: &DgField) -> Result<WaveSpeeds> {
        self.check_field(u)?;
        let mut scratch = DgField::zeros(self.grid, &self.basis, u.n_comp());
        let mut traces = vec![0.0; self.grid.n_cells() * 4 * self.basis.n_edge() * u.n_comp()];
        Ok(self
            .cell_phase(u, 0.0, &mut scratch, &mut traces)
            .into_iter()
            .fold(WaveSpeeds::default(), WaveSpeeds::max))
    }

    /// Lax–Friedrichs fluxes on every x-normal edge (`[(j * (nx+1) + i) * ne + β]`)
    /// and y-normal edge (`[(j * nx + i) * ne + β]`), components innermost.
    fn edge_fluxes(
        &self,
        traces: &[f64],
        speeds: &[WaveSpeeds],
        b: f64,
        t: f64,
        nc: usize,
    ) -> Result<(Vec<f64>, Vec<f64>)> {
        let (nx, ny) = (self.grid.nx, self.grid.ny);
        let ne = self.basis.n_edge();
        let s_pts = &self.basis.edge_rule.points;
        let trace = |cell: usize, e: Edge, beta: usize| {
            let start = ((cell * 4 + e as usize) * ne + beta) * nc;
            &traces[start..start + nc]
        };
        let exact = self.boundary.exact.as_ref();

        let flux_edge = |dir: Direction,
                         minus: Option<usize>,
                         plus: Option<usize>,
                         out: &mut [f64]|
         -> Result<()> {
            let (e_minus, e_plus) = match dir {
                Direction::X => (Edge::East, Edge::West),
                Direction::Y => (Edge::North, Edge::South),
            };
            let mut ghost = [0.0; MAX_COMP];
            let mut scratch = [0.0; MAX_COMP];
            let ghost = &mut ghost[..nc];
            let scratch = &mut scratch[..nc];
            for beta in 0..ne {
                let dst = &mut out[beta * nc..(beta + 1) * nc];
                match (minus, plus) {
                    (Some(cm), Some(cp)) => {
                        let z = self.bathymetry.edge(cp, e_plus)[beta];
                        let alpha = speeds[cm].max(speeds[cp]).get(dir);
                        self.physics.lf_flux_into(
                            trace(cm, e_minus, beta),
                            trace(cp, e_plus, beta),
                            z,
                            b,
                            alpha,
                            dir,
                            dst,
                            scratch,
                        );
                    }
                    (Some(cell), None) | (None, Some(cell)) => {
                        let side = if minus.is_some() { e_minus } else { e_plus };
                        let interior = trace(cell, side, beta);
                        let z = self.bathymetry.edge(cell, side)[beta];
                        let (i, j) = self.grid.ij(cell);
                        let [xi, eta] = side.point(s_pts[beta]);
                        let (x, y) = self.grid.physical(i, j, xi, eta);
                        ghost_state(
                            self.boundary.side(side),
                            interior,
                            side,
                            exact,
                            t,
                            x,
                            y,
                            z,
                            ghost,
                        )?;
                        let alpha = speeds[cell]
                            .get(dir)
                            .max(self.physics.wave_speed_at(ghost, z, dir));
                        let (um, up) = if minus.is_some() {
                            (interior, &*ghost)
                        } else {
                            (&*ghost, interior)
                        };
                        self.physics
                            .lf_flux_into(um, up, z, b, alpha, dir, dst, scratch);
                    }
                    (None, None) => unreachable!("edge without adjacent cell"),
                }
            }
            Ok(())
        };

        let mut fx = vec![0.0; (nx + 1) * ny * ne * nc];
        fx.par_chunks_exact_mut(ne * nc)
            .enumerate()
            .try_for_each(|(e, out)| {
                let (i, j) = (e % (nx + 1), e / (nx + 1));
                let minus = (i > 0).then(|| self.grid.index(i - 1, j));
                let plus = (i < nx).then(|| self.grid.index(i, j));
                flux_edge(Direction::X, minus, plus, out)
            })?;
        let mut fy = vec![0.0; nx * (ny + 1) * ne * nc];
        fy.par_chunks_exact_mut(ne * nc)
            .enumerate()
            .try_for_each(|(e, out)| {
                let (i, j) = (e % nx, e / nx);
                let minus = (j > 0).then(|| self.grid.index(i, j - 1));
                let plus = (j < ny).then(|| self.grid.index(i, j));
                flux_edge(Direction::Y, minus, plus, out)
            })?;
        Ok((fx, fy))
    }

    /// Phase three: subtracts the lifted edge fluxes from each cell and
    /// reports the first non-finite entry.
    fn lift_edges_n<const NC: usize>(
        &self,
        out: &mut DgField,
        fx: &[f64],
        fy: &[f64],
    ) -> Option<(usize, usize)> {
        let ne = self.basis.n_edge();
        let (nx, dx, dy) = (self.grid.nx, self.grid.dx, self.grid.dy);
        let fx = as_rows::<NC>(fx);
        let fy = as_rows::<NC>(fy);
        let len = out.cell_len();
        out.data_mut()
            .par_chunks_exact_mut(len)
            .enumerate()
            .filter_map(|(cell, rhs)| {
                let (i, j) = self.grid.ij(cell);
                let edges = [
                    (Edge::West, (j * (nx + 1) + i) * ne, -1.0 / dx),
                    (Edge::East, (j * (nx + 1) + i + 1) * ne, 1.0 / dx),
                    (Edge::South, (j * nx + i) * ne, -1.0 / dy),
                    (Edge::North, ((j + 1) * nx + i) * ne, 1.0 / dy),
                ];
                let rows = as_rows_mut::<NC>(rhs);
                for (e, start, sign) in edges {
                    let l = self.basis.lift_edge(e);
                    let flux = if matches!(e, Edge::West | Edge::East) {
                        &fx[start..start + ne]
                    } else {
                        &fy[start..start + ne]
                    };
                    for (m, r) in rows.iter_mut().enumerate() {
                        for (beta, fb) in flux.iter().enumerate() {
                            let w = sign * l[m * ne + beta];
                            for c in 0..NC {
                                r[c] -= w * fb[c];
                            }
                        }
                    }
                }
                rhs.iter()
                    .position(|v| !v.is_finite())
                    .map(|k| (cell, k % NC))
            })
            .min()
    }

    /// Time derivative of the nodal coefficients at time `t` with level `b`.
    pub fn residual(&self, u: &DgField, b: f64, t: f64) -> Result<DgField> {
        self.residual_with_speeds(u, b, t).map(|(r, _)| r)
    }

    /// The residual together with the global wave speeds of `u`.
    pub fn residual_with_speeds(
        &self,
        u: &DgField,
        b: f64,
        t: f64,
    ) -> Result<(DgField, WaveSpeeds)> {
        self.check_field(u)?;
        let nc = u.n_comp();
        let ne = self.basis.n_edge();

        let mut out = DgField::zeros(self.grid, &self.basis, nc);
        let mut traces = vec![0.0; self.grid.n_cells() * 4 * ne * nc];
        let speeds = self.cell_phase(u, b, &mut out, &mut traces);
        let (fx, fy) = self.edge_fluxes(&traces, &speeds, b, t, nc)?;

        macro_rules! dispatch {
            ($($n:literal)*) => {
                match nc {
                    $($n => self.lift_edges_n::<$n>(&mut out, &fx, &fy),)*
                    n => unreachable!("{n} components exceed the supported maximum"),
                }
            };
        }
        let bad = dispatch!(4 5 6 7 8 9 10 11 12 13 14 15 16);
        if let Some((cell, component)) = bad {
            let (i, j) = self.grid.ij(cell);
            return Err(Error::NonFinite { i, j, component });
        }
        let global = speeds
            .into_iter()
            .fold(WaveSpeeds::default(), WaveSpeeds::max);
        Ok((out, global))
    }

    /// Time step from the wave-speed rule, optionally capped by the
    /// positivity condition, clipped to land on `controls.t_final`.
    pub fn compute_dt(&self, u: &DgField, t: f64, controls: &StepControls) -> Result<f64> {
        let s = self.max_wave_speeds(u)?;
        dt_from_speeds(s, &self.grid, controls, self.basis.omega_hat_1(), t)
    }

    pub fn limit(&self, u: &mut DgField) -> Result<LimiterReport> {
        apply_stage_limiters(
            u,
            &self.bathymetry,
            &self.basis,
            &self.node_set,
            &self.deltas,
            self.limiter,
            self.physics.vel_eps,
        )
    }

    /// `first` optionally supplies the first-stage residual with its speed
    /// sum `α₁/Δx + α₂/Δy`. `stage_cap` bounds that sum over the later
    /// stages; a breach aborts the step and reports the sum in `breach`.
    #[allow(clippy::too_many_arguments)]
    fn rk3(
        &self,
        u: &mut DgField,
        t: f64,
        dt: f64,
        b: f64,
        first: Option<(DgField, f64)>,
        stage_cap: Option<f64>,
        breach: &mut Option<f64>,
    ) -> Result<StepRecord> {
        let mut record = StepRecord {
            t: t + dt,
            dt,
            min_h: f64::INFINITY,
            cells_scaled: 0,
            min_theta: 1.0,
            minmod_cells: 0,
            thin_cells: 0,
            speed_growth: 1.0,
            retries: 0,
        };
        let (dx, dy) = (self.grid.dx, self.grid.dy);
        let mut first_sum = first.as_ref().map(|f| f.1);
        let mut max_sum: f64 = 0.0;
        let mut first = first.map(|f| f.0);
        let next = ssp_rk3_step(
            &*u,
            t,
            dt,
            |s, ts| {
                if let Some(l) = first.take() {
                    return Ok(l);
                }
                let (l, sp) = self.residual_with_speeds(s, b, ts)?;
                let sum = sp.alpha1 / dx + sp.alpha2 / dy;
                if first_sum.is_none() {
                    first_sum = Some(sum);
                }
                max_sum = max_sum.max(sum);
                if let Some(cap) = stage_cap {
                    if sum > cap {
                        *breach = Some(sum);
                        return Err(Error::InvalidState {
                            cell: usize::MAX,
                            reason: format!(
                                "stage wave speeds {sum:e} exceed the positivity cap {cap:e}"
                            ),
                        });
                    }
                }
                Ok(l)
            },
            |s| {
                let r = self.limit(s)?;
                record.min_h = record.min_h.min(r.min_node_depth);
                record.cells_scaled = record.cells_scaled.max(r.cells_scaled);
                record.min_theta = record.min_theta.min(r.min_theta);
                record.minmod_cells = record.minmod_cells.max(r.minmod_cells);
                record.thin_cells = record.thin_cells.max(r.thin_cells);
                Ok(())
            },
        )?;
        if let Some(k) = next.data().iter().position(|v| !v.is_finite()) {
            let (i, j) = self.grid.ij(k / next.cell_len());
            return Err(Error::NonFinite {
                i,
                j,
                component: k % next.n_comp(),
            });
        }
        *u = next;
        if let Some(f) = first_sum.filter(|&f| f > 0.0) {
            record.speed_growth = (max_sum / f).max(1.0);
        }
        Ok(record)
    }

    /// Advances `u` from `t` by a given `dt`; `B` is frozen at its value for `u`.
    pub fn step(&self, u: &mut DgField, t: f64, dt: f64) -> Result<StepRecord> {
        let b = compute_b(u, &self.basis, ETA).value;
        self.rk3(u, t, dt, b, None, None, &mut None)
    }

    /// One step with `dt` chosen from the state; the first-stage residual
    /// also supplies the wave speeds. In strict mode the positivity cap must
    /// also hold for the speeds of the later stages, otherwise the step is
    /// repeated with a smaller `dt`.
    pub fn step_adaptive(
        &self,
        u: &mut DgField,
        t: f64,
        controls: &StepControls,
    ) -> Result<StepRecord> {
        self.step_adaptive_with_growth(u, t, controls, 1.0)
    }

    /// As [`Solver::step_adaptive`], with the strict cap tightened by an
    /// expected stage speed growth, usually that of the previous step.
    pub fn step_adaptive_with_growth(
        &self,
        u: &mut DgField,
        t: f64,
        controls: &StepControls,
        growth: f64,
    ) -> Result<StepRecord> {
        let b = compute_b(u, &self.basis, ETA).value;
        let (l0, speeds) = self.residual_with_speeds(u, b, t)?;
        let omega = self.basis.omega_hat_1();
        let first_sum = speeds.alpha1 / self.grid.dx + speeds.alpha2 / self.grid.dy;
        let mut dt = dt_from_speeds(speeds, &self.grid, controls, omega, t)?;
        if controls.positivity_strict && growth > 1.0 {
            // Squared: the growth itself tends to persist from step to step.
            dt = dt.min(omega / (growth * growth * first_sum));
        }
        for retries in 0..=MAX_STAGE_RETRIES {
            let mut breach = None;
            let cap = controls.positivity_strict.then(|| omega / dt);
            match self.rk3(u, t, dt, b, Some((l0.clone(), first_sum)), cap, &mut breach) {
                Ok(mut record) => {
                    record.retries = retries;
                    return Ok(record);
                }
                Err(e) => match breach {
                    Some(sum) if retries < MAX_STAGE_RETRIES => {
                        dt = STAGE_RETRY_SAFETY * omega / sum
                    }
                    _ => return Err(e),
                },
            }
        }
        unreachable!("the retry loop returns on its last pass")
    }

    /// Steps from `t` to `controls.t_final`, calling `on_step` after each step.
    pub fn advance(
        &self,
        u: &mut DgField,
        mut t: f64,
        controls: &StepControls,
        mut on_step: impl FnMut(&StepRecord, &DgField) -> Result<()>,
    ) -> Result<f64> {
        controls.validate()?;
        let mut growth = 1.0;
        while t < controls.t_final {
            let mut record = self.step_adaptive_with_growth(u, t, controls, growth)?;
            growth = record.speed_growth;
            t = if t + record.dt >= controls.t_final {
                controls.t_final
            } else {
                t + record.dt
            };
            record.t = t;
            on_step(&record, u)?;
        }
        Ok(t)
    }
}

/// `dt = CFL · min(Δx, Δy) / (α₁ + α₂)`, with the strict cap
/// `dt (α₁/Δx + α₂/Δy) ≤ ω̂₁` and clipping at the final time.
pub fn dt_from_speeds(
    s: WaveSpeeds,
    grid: &Grid,
    controls: &StepControls,
    omega_hat_1: f64,
    t: f64,
) -> Result<f64> {
    let denom = s.alpha1 + s.alpha2;
    if !(denom > 0.0) || !denom.is_finite() {
        return Err(Error::InvalidState {
            cell: usize::MAX,
            reason: format!(
                "no admissible time step: wave speed sum {denom:e} (fully dry domain?)"
            ),
        });
    }
    let mut dt = controls.cfl * grid.dx.min(grid.dy) / denom;
    if controls.positivity_strict {
        dt = dt.min(omega_hat_1 / (s.alpha1 / grid.dx + s.alpha2 / grid.dy));
    }
    let remaining = controls.t_final - t;
    if remaining < dt {
        dt = remaining;
    }
    if !(dt > 0.0) {
        return Err(Error::config(format!(
            "no time left to step: t = {t}, t_final = {}",
            controls.t_final
        )));
    }
    Ok(dt)
}
