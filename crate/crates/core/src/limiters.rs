//! Positivity-preserving scaling limiter and componentwise minmod slope limiter.
//!
//! The scaling limiter rescales a cell polynomial about its mean,
//! `ũ = δ (u − ū) + ū` with `δ = min(1, ū / (ū − m))`, where `m` is the
//! minimum over the positivity node set. It is applied to the depth
//! `h = η − Z` and to every `q_i`.

use rayon::prelude::*;

use crate::basis::NodalBasis;
use crate::error::{Error, Result};
use crate::field::{Bathymetry, DgField};
use crate::state::{ETA, P1, P2, P3, Q0};

/// Cell means below this are a hard error; means in `[-NEG_MEAN_TOL, 0)`
/// are round-off and the cell is flattened to zero.
pub const NEG_MEAN_TOL: f64 = 1e-12;

/// Undershoots within this many ulps of the cell's mean are left alone, so a
/// scaled cell is a fixed point of the limiter despite rounding.
const SCALE_ULPS: f64 = 8.0;

/// Gauss × Lobatto ∪ Lobatto × Gauss points of the reference cell.
#[derive(Debug, Clone)]
pub struct PositivityNodeSet {
    points: Vec<[f64; 2]>,
    phi: Vec<f64>,
    n_nodes: usize,
}

impl PositivityNodeSet {
    pub fn new(basis: &NodalBasis) -> Self {
        PositivityNodeSet {
            points: basis.positivity_points().to_vec(),
            phi: basis.positivity_phi().to_vec(),
            n_nodes: basis.n_nodes(),
        }
    }

    pub fn points(&self) -> &[[f64; 2]] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Minimum of a nodal polynomial (`values[m * stride]`) over the set.
    pub fn min_value(&self, values: &[f64], stride: usize) -> f64 {
        self.phi
            .chunks_exact(self.n_nodes)
            .map(|row| {
                row.iter()
                    .enumerate()
                    .map(|(m, p)| p * values[m * stride])
                    .sum::<f64>()
            })
            .fold(f64::INFINITY, f64::min)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LimiterReport {
    pub cells_scaled: usize,
    /// Smallest scaling factor applied; 1 when nothing was scaled.
    pub min_theta: f64,
    /// Scaled-cell counts per limited quantity: `[h, q_1, .., q_N]`.
    pub scaled_per_component: Vec<usize>,
    pub minmod_cells: usize,
    /// Partially dry cells whose momentum was reset to the mean velocity.
    pub thin_cells: usize,
    /// Smallest depth over all positivity nodes after limiting.
    pub min_node_depth: f64,
}

impl LimiterReport {
    fn empty(n_quantities: usize) -> Self {
        LimiterReport {
            cells_scaled: 0,
            min_theta: 1.0,
            scaled_per_component: vec![0; n_quantities],
            minmod_cells: 0,
            thin_cells: 0,
            min_node_depth: f64::INFINITY,
        }
    }

    fn merge(mut self, other: LimiterReport) -> Self {
        self.cells_scaled += other.cells_scaled;
        self.min_theta = self.min_theta.min(other.min_theta);
        for (a, b) in self
            .scaled_per_component
            .iter_mut()
            .zip(other.scaled_per_component)
        {
            *a += b;
        }
        self.minmod_cells += other.minmod_cells;
        self.thin_cells += other.thin_cells;
        self.min_node_depth = self.min_node_depth.min(other.min_node_depth);
        self
    }
}

/// Outcome of scaling one scalar cell polynomial.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Scaling {
    pub theta: f64,
    pub mean: f64,
    /// Minimum over the node set after scaling.
    pub min_after: f64,
}

/// Scales one cell's nodal values (`values[m * stride]`) in place.
/// Returns `Err(mean)` when the mean is negative beyond round-off.
pub fn scale_cell(
    values: &mut [f64],
    stride: usize,
    mean_weights: &[f64],
    set: &PositivityNodeSet,
) -> std::result::Result<Scaling, f64> {
    let mean: f64 = mean_weights
        .iter()
        .enumerate()
        .map(|(m, w)| w * values[m * stride])
        .sum();
    if mean < -NEG_MEAN_TOL {
        return Err(mean);
    }
    let min = set.min_value(values, stride);
    if min >= -SCALE_ULPS * f64::EPSILON * mean.abs() {
        return Ok(Scaling {
            theta: 1.0,
            mean,
            min_after: min,
        });
    }
    if mean <= 0.0 {
        for m in 0..mean_weights.len() {
            values[m * stride] = 0.0;
        }
        return Ok(Scaling {
            theta: 0.0,
            mean: 0.0,
            min_after: 0.0,
        });
    }
    let theta = (mean / (mean - min)).min(1.0);
    for m in 0..mean_weights.len() {
        let v = &mut values[m * stride];
        *v = theta * (*v - mean) + mean;
    }
    Ok(Scaling {
        theta,
        mean,
        min_after: theta * (min - mean) + mean,
    })
}

fn neg_mean(field: &DgField, cell: usize, component: usize, mean: f64) -> Error {
    let (i, j) = field.grid().ij(cell);
    Error::NegativeMean {
        i,
        j,
        component,
        mean,
    }
}

/// Applies the scaling limiter to component `comp` of every cell.
pub fn positivity_scale(
    field: &mut DgField,
    comp: usize,
    basis: &NodalBasis,
    set: &PositivityNodeSet,
) -> Result<LimiterReport> {
    let nc = field.n_comp();
    let w = basis.mean_weights();
    let outcomes: Vec<std::result::Result<Scaling, f64>> = field
        .cells_mut()
        .collect::<Vec<_>>()
        .into_par_iter()
        .map(|cell| scale_cell(&mut cell[comp..], nc, w, set))
        .collect();
    let mut report = LimiterReport::empty(1);
    for (cell, o) in outcomes.into_iter().enumerate() {
        let s = o.map_err(|mean| neg_mean(field, cell, comp, mean))?;
        if s.theta < 1.0 {
            report.cells_scaled += 1;
            report.scaled_per_component[0] += 1;
            report.min_theta = report.min_theta.min(s.theta);
        }
        report.min_node_depth = report.min_node_depth.min(s.min_after);
    }
    Ok(report)
}

/// Same sign: the argument of smallest magnitude; otherwise zero.
pub fn minmod(args: &[f64]) -> f64 {
    let Some(&first) = args.first() else {
        return 0.0;
    };
    if args.iter().all(|&a| a > 0.0) {
        args.iter().copied().fold(first, f64::min)
    } else if args.iter().all(|&a| a < 0.0) {
        args.iter().copied().fold(first, f64::max)
    } else {
        0.0
    }
}

/// Cell means of every component, laid out `[cell * n_comp + comp]`.
pub fn cell_means(field: &DgField, basis: &NodalBasis) -> Vec<f64> {
    let nc = field.n_comp();
    let mut out = Vec::with_capacity(field.grid().n_cells() * nc);
    for cell in 0..field.grid().n_cells() {
        for comp in 0..nc {
            out.push(field.cell_average(basis, cell, comp));
        }
    }
    out
}

/// Limits one cell's component in place. Returns whether it changed.
fn minmod_cell(
    values: &mut [f64],
    stride: usize,
    comp: usize,
    cell: usize,
    means: &[f64],
    field_grid: &crate::grid::Grid,
    basis: &NodalBasis,
) -> bool {
    let nn = basis.n_nodes();
    let nc = stride;
    let (i, j) = field_grid.ij(cell);
    let mean = means[cell * nc + comp];
    let mut scale: f64 = mean.abs();
    for m in 0..nn {
        scale = scale.max(values[m * stride + comp].abs());
    }
    let tol = 1e-13 * scale.max(f64::MIN_POSITIVE);

    let mut slopes = [0.0; 2];
    let mut changed = false;
    for (d, slope) in slopes.iter_mut().enumerate() {
        let sw = basis.slope_weights(d);
        let own: f64 = (0..nn).map(|m| sw[m] * values[m * stride + comp]).sum();
        let (fwd, bwd) = match d {
            0 => (
                (i + 1 < field_grid.nx).then(|| field_grid.index(i + 1, j)),
                (i > 0).then(|| field_grid.index(i - 1, j)),
            ),
            _ => (
                (j + 1 < field_grid.ny).then(|| field_grid.index(i, j + 1)),
                (j > 0).then(|| field_grid.index(i, j - 1)),
            ),
        };
        let mut args = vec![own];
        if let Some(n) = fwd {
            args.push(means[n * nc + comp] - mean);
        }
        if let Some(n) = bwd {
            args.push(mean - means[n * nc + comp]);
        }
        let lim = minmod(&args);
        if (lim - own).abs() > tol {
            changed = true;
        }
        *slope = lim;
    }
    if changed {
        for m in 0..nn {
            let [xi, eta] = basis.node(m);
            values[m * stride + comp] = mean + slopes[0] * xi + slopes[1] * eta;
        }
    }
    changed
}

/// Componentwise minmod on the listed components. Returns the number of
/// limited (cell, component) pairs.
pub fn minmod_slope(field: &mut DgField, comps: &[usize], basis: &NodalBasis) -> usize {
    let means = cell_means(field, basis);
    let grid = *field.grid();
    let nc = field.n_comp();
    field
        .cells_mut()
        .collect::<Vec<_>>()
        .into_par_iter()
        .enumerate()
        .map(|(cell, values)| {
            comps
                .iter()
                .filter(|&&c| minmod_cell(values, nc, c, cell, &means, &grid, basis))
                .count()
        })
        .sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct LimiterConfig {
    pub minmod: bool,
}

/// Stage limiting: optional minmod on `(η, p2, p3, q_i)`, then positivity
/// scaling of `h = η − Z` and each `q_i`. `p1` receives the same nodal
/// increments as `h + Σ Δ_i q_i`, which keeps `p1 = h r` consistent.
pub fn apply_stage_limiters(
    field: &mut DgField,
    bathymetry: &Bathymetry,
    basis: &NodalBasis,
    set: &PositivityNodeSet,
    deltas: &[f64],
    config: LimiterConfig,
    thin_depth: f64,
) -> Result<LimiterReport> {
    let nc = field.n_comp();
    let nn = basis.n_nodes();
    let nq = nc - Q0;
    let grid = *field.grid();
    let means = config.minmod.then(|| cell_means(field, basis));
    let mut minmod_comps = vec![ETA, P2, P3];
    minmod_comps.extend(Q0..nc);
    let w = basis.mean_weights();

    let outcomes: Vec<std::result::Result<LimiterReport, (usize, f64)>> = field
        .cells_mut()
        .collect::<Vec<_>>()
        .into_par_iter()
        .enumerate()
        .map(|(cell, values)| {
            let mut report = LimiterReport::empty(1 + nq);
            let before: Vec<f64> = values.to_vec();
            if let Some(means) = &means {
                for &c in &minmod_comps {
                    if minmod_cell(values, nc, c, cell, means, &grid, basis) {
                        report.minmod_cells = 1;
                    }
                }
            }

            let mut depth: Vec<f64> = (0..nn)
                .map(|m| values[m * nc + ETA] - bathymetry.node(cell, m))
                .collect();
            let s = scale_cell(&mut depth, 1, w, set).map_err(|mean| (0, mean))?;
            if s.theta < 1.0 {
                for m in 0..nn {
                    values[m * nc + ETA] = depth[m] + bathymetry.node(cell, m);
                }
                report.scaled_per_component[0] = 1;
                report.min_theta = s.theta;
            }
            report.min_node_depth = s.min_after;

            for i in 0..nq {
                let s =
                    scale_cell(&mut values[Q0 + i..], nc, w, set).map_err(|mean| (Q0 + i, mean))?;
                if s.theta < 1.0 {
                    report.scaled_per_component[1 + i] = 1;
                    report.min_theta = report.min_theta.min(s.theta);
                }
            }
            if report.scaled_per_component.iter().any(|&n| n > 0) {
                report.cells_scaled = 1;
            }

            if report.cells_scaled > 0 || report.minmod_cells > 0 {
                for m in 0..nn {
                    let k = m * nc;
                    let mut dp1 = values[k + ETA] - before[k + ETA];
                    for (i, d) in deltas.iter().enumerate() {
                        dp1 += d * (values[k + Q0 + i] - before[k + Q0 + i]);
                    }
                    if dp1 != 0.0 {
                        values[k + P1] += dp1;
                    }
                }
            }

            // Partially dry cell: carry the mean velocity at every node so
            // that thin corners cannot hold large nodal velocities.
            let thin = (0..nn)
                .any(|m| values[m * nc + ETA] - bathymetry.node(cell, m) <= thin_depth)
                || report.min_node_depth <= thin_depth;
            if thin {
                let p1_mean: f64 = (0..nn).map(|m| w[m] * values[m * nc + P1]).sum();
                for c in [P2, P3] {
                    let mean: f64 = (0..nn).map(|m| w[m] * values[m * nc + c]).sum();
                    let vel = if p1_mean > thin_depth {
                        mean / p1_mean
                    } else {
                        0.0
                    };
                    for m in 0..nn {
                        values[m * nc + c] = vel * values[m * nc + P1];
                    }
                }
                report.thin_cells = 1;
            }
            Ok(report)
        })
        .collect();

    let mut report = LimiterReport::empty(1 + nq);
    for (cell, o) in outcomes.into_iter().enumerate() {
        match o {
            Ok(r) => report = report.merge(r),
            Err((comp, mean)) => return Err(neg_mean(field, cell, comp, mean)),
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{interpolate_nodal, Bathymetry};
    use crate::grid::{build_grid, Bounds};

    fn unit_cell(k: usize) -> (crate::grid::Grid, NodalBasis, PositivityNodeSet) {
        let g = build_grid(Bounds::new(0.0, 1.0, 0.0, 1.0), 1, 1).unwrap();
        let b = NodalBasis::new(k).unwrap();
        let s = PositivityNodeSet::new(&b);
        (g, b, s)
    }

    #[test]
    fn minmod_definition() {
        assert_eq!(minmod(&[0.5, 1.0, 2.0]), 0.5);
        assert_eq!(minmod(&[-0.5, -1.0, -2.0]), -0.5);
        assert_eq!(minmod(&[0.5, -1.0, 2.0]), 0.0);
        assert_eq!(minmod(&[0.0, 1.0]), 0.0);
    }

    #[test]
    fn nonnegative_cell_untouched() {
        let (_, b, s) = unit_cell(1);
        let mut v = vec![0.1, 0.3, 0.0, 0.2];
        let before = v.clone();
        let out = scale_cell(&mut v, 1, b.mean_weights(), &s).unwrap();
        assert_eq!(out.theta, 1.0);
        assert_eq!(v, before);
    }

    #[test]
    fn scaling_factor_half() {
        // Bilinear cell with mean 0.5 and minimum −0.5 over the node set:
        // u = 0.5 + ξ · s, min at edge points ξ = −1/2 gives 0.5 − s/2 = −0.5.
        let (_, b, s) = unit_cell(1);
        let mut v = vec![-0.5, 1.5, -0.5, 1.5];
        let out = scale_cell(&mut v, 1, b.mean_weights(), &s).unwrap();
        assert!((out.mean - 0.5).abs() < 1e-15);
        assert!((out.theta - 0.5).abs() < 1e-15);
        assert!(out.min_after.abs() < 1e-15);
    }

    #[test]
    fn zero_mean_flattens() {
        let (_, b, s) = unit_cell(1);
        let mut v = vec![-0.1, 0.1, 0.1, -0.1];
        let out = scale_cell(&mut v, 1, b.mean_weights(), &s).unwrap();
        assert_eq!(out.theta, 0.0);
        assert!(v.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn corner_dip_scaled_by_point_nine() {
        // Both west corners at −0.01 with mean 0.09: the west edge belongs to
        // the positivity set, so m = −0.01 and θ = 0.09 / 0.1.
        let (_, b, s) = unit_cell(1);
        let mut v = vec![-0.01, 0.19, -0.01, 0.19];
        let out = scale_cell(&mut v, 1, b.mean_weights(), &s).unwrap();
        assert!((out.mean - 0.09).abs() < 1e-15);
        assert!((out.theta - 0.9).abs() < 1e-14);
        assert!(out.min_after.abs() < 1e-15);
        assert!((v[0] - 0.0).abs() < 1e-15 && (v[1] - 0.18).abs() < 1e-15);
    }

    #[test]
    fn negative_mean_names_cell() {
        let (g, b, s) = unit_cell(1);
        let mut f = interpolate_nodal(|_, _| -1.0, g, &b);
        let err = positivity_scale(&mut f, 0, &b, &s).unwrap_err();
        assert!(matches!(
            err,
            Error::NegativeMean {
                i: 0,
                j: 0,
                component: 0,
                ..
            }
        ));
    }

    #[test]
    fn constant_field_survives_minmod() {
        let g = build_grid(Bounds::new(0.0, 1.0, 0.0, 1.0), 4, 3).unwrap();
        for k in 1..=2 {
            let b = NodalBasis::new(k).unwrap();
            let mut f = interpolate_nodal(|_, _| 0.7, g, &b);
            let before = f.clone();
            assert_eq!(minmod_slope(&mut f, &[0], &b), 0);
            assert_eq!(f, before);
        }
    }

    #[test]
    fn minmod_flattens_extremum() {
        let g = build_grid(Bounds::new(0.0, 3.0, 0.0, 1.0), 3, 1).unwrap();
        let b = NodalBasis::new(1).unwrap();
        // Hat function: the middle cell has its own slope but zero-sum neighbours.
        let mut f = interpolate_nodal(|x, _| if x < 1.5 { x } else { 3.0 - x }, g, &b);
        let mean_before = f.cell_average(&b, 1, 0);
        assert!(minmod_slope(&mut f, &[0], &b) > 0);
        assert!((f.cell_average(&b, 1, 0) - mean_before).abs() < 1e-15);
        for m in 0..4 {
            assert!((f.get(1, m, 0) - mean_before).abs() < 1e-15);
        }
    }

    #[test]
    fn linear_data_not_limited() {
        let g = build_grid(Bounds::new(0.0, 4.0, 0.0, 2.0), 8, 4).unwrap();
        let b = NodalBasis::new(2).unwrap();
        let mut f = interpolate_nodal(|x, y| 0.3 * x - 0.2 * y + 1.0, g, &b);
        let before = f.clone();
        assert_eq!(minmod_slope(&mut f, &[0], &b), 0);
        assert_eq!(f, before);
    }

    #[test]
    fn partially_dry_cell_carries_mean_velocity() {
        let g = build_grid(Bounds::new(0.0, 1.0, 0.0, 1.0), 1, 1).unwrap();
        let b = NodalBasis::new(1).unwrap();
        let s = PositivityNodeSet::new(&b);
        let bath = Bathymetry::from_fn(|_, _| 0.0, g, &b);
        let depths = [0.0, 0.02, 0.01, 0.03];
        let p2 = [1e-4, 2e-3, -1e-3, 4e-3];
        let mut f = DgField::from_nodal_fn(g, &b, 4, |_, _, _| {});
        for m in 0..4 {
            f.set(0, m, ETA, depths[m]);
            f.set(0, m, P1, depths[m]);
            f.set(0, m, P2, p2[m]);
        }
        let mean_p2 = f.cell_average(&b, 0, P2);
        let r = apply_stage_limiters(&mut f, &bath, &b, &s, &[], LimiterConfig::default(), 1e-6)
            .unwrap();
        assert_eq!(r.thin_cells, 1);
        assert!((f.cell_average(&b, 0, P2) - mean_p2).abs() < 1e-18);
        let vel = mean_p2 / f.cell_average(&b, 0, P1);
        for m in 1..4 {
            assert!((f.get(0, m, P2) / f.get(0, m, P1) - vel).abs() < 1e-14);
        }
        assert_eq!(f.get(0, 0, P2), 0.0);
        assert_eq!(f.get(0, 0, P3), 0.0);

        // A wet cell keeps its momentum polynomial.
        let mut wet = DgField::from_nodal_fn(g, &b, 4, |_, _, _| {});
        for m in 0..4 {
            wet.set(0, m, ETA, 0.5 + depths[m]);
            wet.set(0, m, P1, 0.5 + depths[m]);
            wet.set(0, m, P2, p2[m]);
        }
        let before = wet.clone();
        let bath = Bathymetry::from_fn(|_, _| 0.0, g, &b);
        let r = apply_stage_limiters(&mut wet, &bath, &b, &s, &[], LimiterConfig::default(), 1e-6)
            .unwrap();
        assert_eq!(r.thin_cells, 0);
        assert_eq!(wet, before);
    }

    #[test]
    fn p1_follows_depth_and_tracers() {
        let g = build_grid(Bounds::new(0.0, 1.0, 0.0, 1.0), 1, 1).unwrap();
        let b = NodalBasis::new(1).unwrap();
        let s = PositivityNodeSet::new(&b);
        let bath = Bathymetry::from_fn(|x, _| 0.1 * x, g, &b);
        let delta = [0.2];
        let depths = [-0.1, 0.2, -0.1, 0.2];
        let mut f = DgField::from_nodal_fn(g, &b, 5, |_, _, _| {});
        for m in 0..4 {
            let h = depths[m];
            let q = 0.5 * h;
            f.set(0, m, ETA, h + bath.node(0, m));
            f.set(0, m, P1, h + 0.2 * q);
            f.set(0, m, Q0, q);
        }
        let r = apply_stage_limiters(
            &mut f,
            &bath,
            &b,
            &s,
            &delta,
            LimiterConfig::default(),
            1e-6,
        )
        .unwrap();
        assert_eq!(r.cells_scaled, 1);
        assert!(r.min_node_depth > -1e-15);
        for m in 0..4 {
            let h = f.get(0, m, ETA) - bath.node(0, m);
            let expect = h + 0.2 * f.get(0, m, Q0);
            assert!((f.get(0, m, P1) - expect).abs() < 1e-15);
        }
    }

    proptest::proptest! {
        #![proptest_config(proptest::prelude::ProptestConfig::with_cases(1000))]
        #[test]
        fn scaling_properties(k in 1usize..=2, raw in proptest::collection::vec(-1.0f64..2.0, 9), shift in 0.0f64..1.0) {
            let b = NodalBasis::new(k).unwrap();
            let s = PositivityNodeSet::new(&b);
            let nn = b.n_nodes();
            let mut v: Vec<f64> = raw[..nn].to_vec();
            let mean: f64 = b.mean_weights().iter().zip(&v).map(|(w, x)| w * x).sum();
            // Force a nonnegative mean.
            let lift = (shift - mean).max(0.0);
            v.iter_mut().for_each(|x| *x += lift);
            let mean: f64 = b.mean_weights().iter().zip(&v).map(|(w, x)| w * x).sum();
            scale_cell(&mut v, 1, b.mean_weights(), &s).unwrap();
            let after: f64 = b.mean_weights().iter().zip(&v).map(|(w, x)| w * x).sum();
            proptest::prop_assert!((after - mean).abs() < 1e-14);
            proptest::prop_assert!(s.min_value(&v, 1) >= -1e-14);
            let once = v.clone();
            let again = scale_cell(&mut v, 1, b.mean_weights(), &s).unwrap();
            proptest::prop_assert!(again.theta == 1.0 || s.min_value(&once, 1) > -1e-15);
            for (a, c) in once.iter().zip(&v) {
                proptest::prop_assert!((a - c).abs() < 1e-14);
            }
        }
    }
}
