//! Tensor-product Lagrange basis on Gauss–Lobatto nodes of the reference
//! cell `[-1/2, 1/2]²`, together with the quadrature tables the solver needs.
//!
//! Node `m = a + (k + 1) * b` sits at `(nodes[a], nodes[b])`. For `k = 1, 2`
//! the node set contains the corners (and for `k = 2` the edge midpoints), so
//! a field interpolated at physical node positions has identical traces from
//! both sides of every interior edge.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::quadrature::{quadrature, QuadratureKind, QuadratureRule};

/// Number of Gauss–Lobatto points used for the positivity node set.
pub const POSITIVITY_LOBATTO_POINTS: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Edge {
    West = 0,
    East = 1,
    South = 2,
    North = 3,
}

impl Edge {
    pub const ALL: [Edge; 4] = [Edge::West, Edge::East, Edge::South, Edge::North];

    /// Reference coordinates of parameter `s ∈ [-1/2, 1/2]` along this edge.
    pub fn point(self, s: f64) -> [f64; 2] {
        match self {
            Edge::West => [-0.5, s],
            Edge::East => [0.5, s],
            Edge::South => [s, -0.5],
            Edge::North => [s, 0.5],
        }
    }
}

#[derive(Debug, Clone)]
pub struct NodalBasis {
    degree: usize,
    nodes_1d: Vec<f64>,
    n_nodes: usize,

    pub volume_rule: QuadratureRule,
    pub edge_rule: QuadratureRule,
    pub lobatto_rule: QuadratureRule,

    vol_points: Vec<[f64; 2]>,
    vol_weights: Vec<f64>,
    vol_phi: Vec<f64>,
    vol_dxi: Vec<f64>,
    vol_deta: Vec<f64>,

    edge_phi: [Vec<f64>; 4],

    mass_inv: Vec<f64>,
    lift_x: Vec<f64>,
    lift_y: Vec<f64>,
    lift_s: Vec<f64>,
    lift_edge: [Vec<f64>; 4],

    mean_weights: Vec<f64>,
    slope_weights: [Vec<f64>; 2],

    pos_points: Vec<[f64; 2]>,
    pos_phi: Vec<f64>,
}

/// Values and derivatives of the 1D Lagrange cardinal functions at `x`.
fn lagrange_1d(nodes: &[f64], x: f64) -> (Vec<f64>, Vec<f64>) {
    let n = nodes.len();
    let mut vals = vec![0.0; n];
    let mut ders = vec![0.0; n];
    for i in 0..n {
        let mut v = 1.0;
        for j in 0..n {
            if j != i {
                v *= (x - nodes[j]) / (nodes[i] - nodes[j]);
            }
        }
        vals[i] = v;
        let mut d = 0.0;
        for l in 0..n {
            if l == i {
                continue;
            }
            let mut term = 1.0 / (nodes[i] - nodes[l]);
            for j in 0..n {
                if j != i && j != l {
                    term *= (x - nodes[j]) / (nodes[i] - nodes[j]);
                }
            }
            d += term;
        }
        ders[i] = d;
    }
    (vals, ders)
}

impl NodalBasis {
    pub fn new(degree: usize) -> Result<Self> {
        if !(1..=2).contains(&degree) {
            return Err(Error::config(format!(
                "polynomial degree {degree} not supported (1 or 2)"
            )));
        }
        let n1 = degree + 1;
        let nodes_1d = quadrature(QuadratureKind::GaussLobatto, n1)?.points;
        let n_nodes = n1 * n1;
        let volume_rule = quadrature(QuadratureKind::Gauss, degree + 2)?;
        let edge_rule = quadrature(QuadratureKind::Gauss, degree + 1)?;
        let lobatto_rule = quadrature(QuadratureKind::GaussLobatto, POSITIVITY_LOBATTO_POINTS)?;

        let mut basis = NodalBasis {
            degree,
            nodes_1d,
            n_nodes,
            volume_rule,
            edge_rule,
            lobatto_rule,
            vol_points: Vec::new(),
            vol_weights: Vec::new(),
            vol_phi: Vec::new(),
            vol_dxi: Vec::new(),
            vol_deta: Vec::new(),
            edge_phi: Default::default(),
            mass_inv: Vec::new(),
            lift_x: Vec::new(),
            lift_y: Vec::new(),
            lift_s: Vec::new(),
            lift_edge: Default::default(),
            mean_weights: Vec::new(),
            slope_weights: Default::default(),
            pos_points: Vec::new(),
            pos_phi: Vec::new(),
        };
        basis.build_tables()?;
        Ok(basis)
    }

    fn build_tables(&mut self) -> Result<()> {
        let nn = self.n_nodes;
        let vr = self.volume_rule.clone();
        for (&yb, &wb) in vr.points.iter().zip(&vr.weights) {
            for (&xa, &wa) in vr.points.iter().zip(&vr.weights) {
                self.vol_points.push([xa, yb]);
                self.vol_weights.push(wa * wb);
            }
        }
        for &p in &self.vol_points.clone() {
            let (v, g) = self.eval_unchecked(p);
            self.vol_phi.extend_from_slice(&v);
            self.vol_dxi.extend(g.iter().map(|d| d[0]));
            self.vol_deta.extend(g.iter().map(|d| d[1]));
        }
        for e in Edge::ALL {
            let mut table = Vec::with_capacity(self.edge_rule.len() * nn);
            for &s in &self.edge_rule.points {
                table.extend(self.eval_unchecked(e.point(s)).0);
            }
            self.edge_phi[e as usize] = table;
        }

        let nq = self.vol_points.len();
        let mass = DMatrix::from_fn(nn, nn, |a, b| {
            (0..nq)
                .map(|q| self.vol_weights[q] * self.vol_phi[q * nn + a] * self.vol_phi[q * nn + b])
                .sum::<f64>()
        });
        let inv = mass
            .try_inverse()
            .ok_or_else(|| Error::config("singular reference mass matrix"))?;
        self.mass_inv = (0..nn * nn).map(|k| inv[(k / nn, k % nn)]).collect();

        let lift = |table: &[f64], weights: &[f64], npts: usize| -> Vec<f64> {
            let mut out = vec![0.0; nn * npts];
            for m in 0..nn {
                for q in 0..npts {
                    out[m * npts + q] = (0..nn)
                        .map(|mp| inv[(m, mp)] * weights[q] * table[q * nn + mp])
                        .sum();
                }
            }
            out
        };
        self.lift_x = lift(&self.vol_dxi, &self.vol_weights, nq);
        self.lift_y = lift(&self.vol_deta, &self.vol_weights, nq);
        self.lift_s = lift(&self.vol_phi, &self.vol_weights, nq);
        let ne = self.edge_rule.len();
        for e in Edge::ALL {
            self.lift_edge[e as usize] =
                lift(&self.edge_phi[e as usize], &self.edge_rule.weights, ne);
        }

        self.mean_weights = (0..nn)
            .map(|m| {
                (0..nq)
                    .map(|q| self.vol_weights[q] * self.vol_phi[q * nn + m])
                    .sum()
            })
            .collect();
        for d in 0..2 {
            self.slope_weights[d] = (0..nn)
                .map(|m| {
                    12.0 * (0..nq)
                        .map(|q| {
                            self.vol_weights[q] * self.vol_points[q][d] * self.vol_phi[q * nn + m]
                        })
                        .sum::<f64>()
                })
                .collect();
        }

        let gauss = self.edge_rule.points.clone();
        let lob = self.lobatto_rule.points.clone();
        for &y in &lob {
            for &x in &gauss {
                self.pos_points.push([x, y]);
            }
        }
        for &y in &gauss {
            for &x in &lob {
                self.pos_points.push([x, y]);
            }
        }
        for &p in &self.pos_points.clone() {
            self.pos_phi.extend(self.eval_unchecked(p).0);
        }
        Ok(())
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn n_nodes(&self) -> usize {
        self.n_nodes
    }

    pub fn nodes_1d(&self) -> &[f64] {
        &self.nodes_1d
    }

    /// Reference coordinates of node `m`.
    pub fn node(&self, m: usize) -> [f64; 2] {
        let n1 = self.degree + 1;
        [self.nodes_1d[m % n1], self.nodes_1d[m / n1]]
    }

    fn eval_unchecked(&self, p: [f64; 2]) -> (Vec<f64>, Vec<[f64; 2]>) {
        let (vx, dx) = lagrange_1d(&self.nodes_1d, p[0]);
        let (vy, dy) = lagrange_1d(&self.nodes_1d, p[1]);
        let n1 = self.degree + 1;
        let mut vals = Vec::with_capacity(self.n_nodes);
        let mut grads = Vec::with_capacity(self.n_nodes);
        for b in 0..n1 {
            for a in 0..n1 {
                vals.push(vx[a] * vy[b]);
                grads.push([dx[a] * vy[b], vx[a] * dy[b]]);
            }
        }
        (vals, grads)
    }

    /// Cardinal values and reference-coordinate gradients at `p`.
    pub fn eval(&self, p: [f64; 2]) -> Result<(Vec<f64>, Vec<[f64; 2]>)> {
        const TOL: f64 = 1e-12;
        if p.iter().any(|c| !c.is_finite() || c.abs() > 0.5 + TOL) {
            return Err(Error::Domain(format!(
                "point {p:?} lies outside the reference cell"
            )));
        }
        Ok(self.eval_unchecked(p))
    }

    /// Evaluates a nodal polynomial (stride `stride`, offset `comp`) at `p`.
    pub fn eval_poly(&self, coeffs: &[f64], stride: usize, comp: usize, p: [f64; 2]) -> f64 {
        let (v, _) = self.eval_unchecked(p);
        v.iter()
            .enumerate()
            .map(|(m, &phi)| phi * coeffs[m * stride + comp])
            .sum()
    }

    pub fn n_volume(&self) -> usize {
        self.vol_points.len()
    }

    pub fn volume_points(&self) -> &[[f64; 2]] {
        &self.vol_points
    }

    pub fn volume_weights(&self) -> &[f64] {
        &self.vol_weights
    }

    /// `phi[q * n_nodes + m]` at volume quadrature points.
    pub fn volume_phi(&self) -> &[f64] {
        &self.vol_phi
    }

    pub fn volume_dxi(&self) -> &[f64] {
        &self.vol_dxi
    }

    pub fn volume_deta(&self) -> &[f64] {
        &self.vol_deta
    }

    pub fn n_edge(&self) -> usize {
        self.edge_rule.len()
    }

    /// `phi[beta * n_nodes + m]` at the Gauss points of `edge`.
    pub fn edge_phi(&self, edge: Edge) -> &[f64] {
        &self.edge_phi[edge as usize]
    }

    /// Inverse of the unit-area reference mass matrix, row-major.
    pub fn mass_inv(&self) -> &[f64] {
        &self.mass_inv
    }

    /// `M⁻¹ (w_q ∂ξφ(q))` laid out as `[m * n_volume + q]`.
    pub fn lift_x(&self) -> &[f64] {
        &self.lift_x
    }

    pub fn lift_y(&self) -> &[f64] {
        &self.lift_y
    }

    pub fn lift_source(&self) -> &[f64] {
        &self.lift_s
    }

    /// `M⁻¹ (w_β φ(edge point β))` laid out as `[m * n_edge + beta]`.
    pub fn lift_edge(&self, edge: Edge) -> &[f64] {
        &self.lift_edge[edge as usize]
    }

    /// Weights turning nodal values into the cell mean.
    pub fn mean_weights(&self) -> &[f64] {
        &self.mean_weights
    }

    /// Weights of the L²-projected linear slope `12 ∫ u ξ_d` per unit reference length.
    pub fn slope_weights(&self, dir: usize) -> &[f64] {
        &self.slope_weights[dir]
    }

    /// Points of the positivity set: Gauss × Lobatto and Lobatto × Gauss.
    pub fn positivity_points(&self) -> &[[f64; 2]] {
        &self.pos_points
    }

    pub fn positivity_phi(&self) -> &[f64] {
        &self.pos_phi
    }

    /// Smallest Gauss–Lobatto weight of the positivity rule.
    pub fn omega_hat_1(&self) -> f64 {
        self.lobatto_rule.weights[0]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cardinal_at_nodes() {
        for k in 1..=2 {
            let b = NodalBasis::new(k).unwrap();
            for m in 0..b.n_nodes() {
                let (v, _) = b.eval(b.node(m)).unwrap();
                for (l, &x) in v.iter().enumerate() {
                    assert_eq!(x, if l == m { 1.0 } else { 0.0 });
                }
            }
        }
    }

    #[test]
    fn bilinear_center_values() {
        let b = NodalBasis::new(1).unwrap();
        let (v, _) = b.eval([0.0, 0.0]).unwrap();
        assert!(v.iter().all(|&x| (x - 0.25).abs() < 1e-15));
    }

    #[test]
    fn quadratic_center_is_node() {
        let b = NodalBasis::new(2).unwrap();
        let (v, _) = b.eval([0.0, 0.0]).unwrap();
        assert_eq!(v[4], 1.0);
        assert!(v.iter().enumerate().all(|(m, &x)| m == 4 || x == 0.0));
    }

    #[test]
    fn partition_of_unity() {
        for k in 1..=2 {
            let b = NodalBasis::new(k).unwrap();
            for p in [[0.1, -0.3], [0.5, 0.5], [-0.21, 0.44]] {
                let (v, g) = b.eval(p).unwrap();
                assert!((v.iter().sum::<f64>() - 1.0).abs() < 1e-14);
                let gx: f64 = g.iter().map(|d| d[0]).sum();
                let gy: f64 = g.iter().map(|d| d[1]).sum();
                assert!(gx.abs() < 1e-13 && gy.abs() < 1e-13);
            }
        }
    }

    #[test]
    fn outside_point_rejected() {
        let b = NodalBasis::new(1).unwrap();
        assert!(matches!(b.eval([0.6, 0.0]), Err(Error::Domain(_))));
    }

    #[test]
    fn node_set_contains_corners() {
        for k in 1..=2 {
            let b = NodalBasis::new(k).unwrap();
            let nodes: Vec<_> = (0..b.n_nodes()).map(|m| b.node(m)).collect();
            for c in [[-0.5, -0.5], [0.5, -0.5], [-0.5, 0.5], [0.5, 0.5]] {
                assert!(nodes.contains(&c));
            }
            if k == 2 {
                for c in [[0.0, -0.5], [0.0, 0.5], [-0.5, 0.0], [0.5, 0.0]] {
                    assert!(nodes.contains(&c));
                }
            }
        }
    }

    #[test]
    fn positivity_set_covers_edge_points() {
        for k in 1..=2 {
            let b = NodalBasis::new(k).unwrap();
            assert_eq!(b.omega_hat_1(), 1.0 / 6.0);
            for e in Edge::ALL {
                for &s in &b.edge_rule.points {
                    assert!(b.positivity_points().contains(&e.point(s)));
                }
            }
        }
    }

    #[test]
    fn mean_weights_match_lobatto() {
        let b = NodalBasis::new(2).unwrap();
        let w = [1.0 / 6.0, 2.0 / 3.0, 1.0 / 6.0];
        for m in 0..9 {
            assert!((b.mean_weights()[m] - w[m % 3] * w[m / 3]).abs() < 1e-15);
        }
    }
}
