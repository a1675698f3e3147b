use crate::basis::{Edge, NodalBasis};
use crate::error::{Error, Result};
use crate::grid::Grid;

/// Nodal DG coefficients, cell-major with components innermost:
/// `data[(cell * n_nodes + node) * n_comp + comp]`.
#[derive(Debug, Clone, PartialEq)]
pub struct DgField {
    grid: Grid,
    degree: usize,
    n_nodes: usize,
    n_comp: usize,
    data: Vec<f64>,
}

impl DgField {
    pub fn zeros(grid: Grid, basis: &NodalBasis, n_comp: usize) -> Self {
        let n_nodes = basis.n_nodes();
        DgField {
            grid,
            degree: basis.degree(),
            n_nodes,
            n_comp,
            data: vec![0.0; grid.n_cells() * n_nodes * n_comp],
        }
    }

    /// Samples `f(x, y, out)` at every node of every cell.
    pub fn from_nodal_fn(
        grid: Grid,
        basis: &NodalBasis,
        n_comp: usize,
        mut f: impl FnMut(f64, f64, &mut [f64]),
    ) -> Self {
        let mut field = Self::zeros(grid, basis, n_comp);
        for j in 0..grid.ny {
            for i in 0..grid.nx {
                let cell = grid.index(i, j);
                for m in 0..field.n_nodes {
                    let [xi, eta] = basis.node(m);
                    let (x, y) = grid.physical(i, j, xi, eta);
                    let start = (cell * field.n_nodes + m) * n_comp;
                    f(x, y, &mut field.data[start..start + n_comp]);
                }
            }
        }
        field
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }
    pub fn degree(&self) -> usize {
        self.degree
    }
    pub fn n_nodes(&self) -> usize {
        self.n_nodes
    }
    pub fn n_comp(&self) -> usize {
        self.n_comp
    }
    pub fn data(&self) -> &[f64] {
        &self.data
    }
    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn cell_len(&self) -> usize {
        self.n_nodes * self.n_comp
    }

    pub fn cell(&self, cell: usize) -> &[f64] {
        let len = self.cell_len();
        &self.data[cell * len..(cell + 1) * len]
    }

    pub fn cell_mut(&mut self, cell: usize) -> &mut [f64] {
        let len = self.cell_len();
        &mut self.data[cell * len..(cell + 1) * len]
    }

    /// Mutable per-cell chunks, for concurrent single-writer updates.
    pub fn cells_mut(&mut self) -> std::slice::ChunksExactMut<'_, f64> {
        let len = self.cell_len();
        self.data.chunks_exact_mut(len)
    }

    #[inline]
    pub fn get(&self, cell: usize, node: usize, comp: usize) -> f64 {
        self.data[(cell * self.n_nodes + node) * self.n_comp + comp]
    }

    #[inline]
    pub fn set(&mut self, cell: usize, node: usize, comp: usize, value: f64) {
        let idx = (cell * self.n_nodes + node) * self.n_comp + comp;
        self.data[idx] = value;
    }

    pub fn same_shape(&self, other: &DgField) -> bool {
        self.grid == other.grid
            && self.degree == other.degree
            && self.n_comp == other.n_comp
            && self.data.len() == other.data.len()
    }

    pub fn check_shape(&self, other: &DgField) -> Result<()> {
        if self.same_shape(other) {
            Ok(())
        } else {
            Err(Error::config(format!(
                "field shape mismatch: {}x{} k={} comps={} vs {}x{} k={} comps={}",
                self.grid.nx,
                self.grid.ny,
                self.degree,
                self.n_comp,
                other.grid.nx,
                other.grid.ny,
                other.degree,
                other.n_comp
            )))
        }
    }

    /// Mean of `comp` over `cell`, exact for in-space polynomials.
    pub fn cell_average(&self, basis: &NodalBasis, cell: usize, comp: usize) -> f64 {
        let w = basis.mean_weights();
        let c = self.cell(cell);
        (0..self.n_nodes)
            .map(|m| w[m] * c[m * self.n_comp + comp])
            .sum()
    }

    /// Value of `comp` at reference point `p` of `cell`.
    pub fn eval(&self, basis: &NodalBasis, cell: usize, comp: usize, p: [f64; 2]) -> f64 {
        basis.eval_poly(self.cell(cell), self.n_comp, comp, p)
    }

    /// `self += s * other`.
    pub fn add_scaled(&mut self, s: f64, other: &DgField) {
        debug_assert!(self.same_shape(other));
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += s * b;
        }
    }

    pub fn max_abs_diff(&self, other: &DgField, comp: usize) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .skip(comp)
            .step_by(self.n_comp)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

/// Nodal interpolation of a scalar function.
pub fn interpolate_nodal(f: impl Fn(f64, f64) -> f64, grid: Grid, basis: &NodalBasis) -> DgField {
    DgField::from_nodal_fn(grid, basis, 1, |x, y, out| out[0] = f(x, y))
}

/// Bottom elevation as a nodal field plus cached values at the quadrature
/// points the solver visits. Derivatives are those of the interpolant.
#[derive(Debug, Clone)]
pub struct Bathymetry {
    z: DgField,
    n_vol: usize,
    n_edge: usize,
    vol_z: Vec<f64>,
    vol_zx: Vec<f64>,
    vol_zy: Vec<f64>,
    edge_z: Vec<f64>,
}

impl Bathymetry {
    pub fn from_fn(f: impl Fn(f64, f64) -> f64, grid: Grid, basis: &NodalBasis) -> Self {
        let z = interpolate_nodal(f, grid, basis);
        Self::from_field(z, basis)
    }

    pub fn from_field(z: DgField, basis: &NodalBasis) -> Self {
        let grid = *z.grid();
        let nn = basis.n_nodes();
        let nq = basis.n_volume();
        let ne = basis.n_edge();
        let nc = grid.n_cells();
        let mut vol_z = Vec::with_capacity(nc * nq);
        let mut vol_zx = Vec::with_capacity(nc * nq);
        let mut vol_zy = Vec::with_capacity(nc * nq);
        let mut edge_z = Vec::with_capacity(nc * 4 * ne);
        for cell in 0..nc {
            let coeffs = z.cell(cell);
            for q in 0..nq {
                let row = q * nn..(q + 1) * nn;
                let dot = |t: &[f64]| {
                    t[row.clone()]
                        .iter()
                        .zip(coeffs)
                        .map(|(a, b)| a * b)
                        .sum::<f64>()
                };
                vol_z.push(dot(basis.volume_phi()));
                vol_zx.push(dot(basis.volume_dxi()) / grid.dx);
                vol_zy.push(dot(basis.volume_deta()) / grid.dy);
            }
            for e in Edge::ALL {
                let t = basis.edge_phi(e);
                for b in 0..ne {
                    edge_z.push(
                        t[b * nn..(b + 1) * nn]
                            .iter()
                            .zip(coeffs)
                            .map(|(a, b)| a * b)
                            .sum(),
                    );
                }
            }
        }
        Bathymetry {
            z,
            n_vol: nq,
            n_edge: ne,
            vol_z,
            vol_zx,
            vol_zy,
            edge_z,
        }
    }

    pub fn field(&self) -> &DgField {
        &self.z
    }

    #[inline]
    pub fn node(&self, cell: usize, m: usize) -> f64 {
        self.z.get(cell, m, 0)
    }

    /// `(Z, Z_x, Z_y)` at the volume quadrature points of `cell`.
    pub fn volume(&self, cell: usize) -> (&[f64], &[f64], &[f64]) {
        let r = cell * self.n_vol..(cell + 1) * self.n_vol;
        (
            &self.vol_z[r.clone()],
            &self.vol_zx[r.clone()],
            &self.vol_zy[r],
        )
    }

    pub fn edge(&self, cell: usize, edge: Edge) -> &[f64] {
        let start = (cell * 4 + edge as usize) * self.n_edge;
        &self.edge_z[start..start + self.n_edge]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{build_grid, Bounds};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn constants_reproduced() {
        let g = build_grid(Bounds::new(0.0, 3.0, 0.0, 2.0), 3, 2).unwrap();
        for k in 1..=2 {
            let b = NodalBasis::new(k).unwrap();
            let f = interpolate_nodal(|_, _| 1.0, g, &b);
            assert!(f.data().iter().all(|&v| v == 1.0));
            for cell in 0..g.n_cells() {
                for e in Edge::ALL {
                    for &s in &b.edge_rule.points {
                        assert_eq!(f.eval(&b, cell, 0, e.point(s)), 1.0);
                    }
                }
            }
        }
    }

    #[test]
    fn linear_on_unit_cell() {
        let g = build_grid(Bounds::new(0.0, 1.0, 0.0, 1.0), 1, 1).unwrap();
        let b = NodalBasis::new(1).unwrap();
        let f = interpolate_nodal(|x, _| x, g, &b);
        assert_eq!(f.data(), &[0.0, 1.0, 0.0, 1.0]);
        assert!((f.cell_average(&b, 0, 0) - 0.5).abs() < 1e-15);
        let xy = interpolate_nodal(|x, y| x * y, g, &b);
        assert!((xy.cell_average(&b, 0, 0) - 0.25).abs() < 1e-15);
    }

    #[test]
    fn polynomials_reproduced_exactly() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for k in 1..=2usize {
            let b = NodalBasis::new(k).unwrap();
            let g = build_grid(Bounds::new(-1.0, 2.0, 0.5, 1.5), 4, 3).unwrap();
            let coef: Vec<f64> = (0..9).map(|_| rng.random_range(-1.0..1.0)).collect();
            // Tensor polynomial of degree k in each variable.
            let poly = |x: f64, y: f64| {
                let mut s = 0.0;
                for a in 0..=k {
                    for c in 0..=k {
                        s += coef[a * 3 + c] * x.powi(a as i32) * y.powi(c as i32);
                    }
                }
                s
            };
            let f = interpolate_nodal(poly, g, &b);
            for _ in 0..100 {
                let i = rng.random_range(0..g.nx);
                let j = rng.random_range(0..g.ny);
                let p = [rng.random_range(-0.5..0.5), rng.random_range(-0.5..0.5)];
                let (x, y) = g.physical(i, j, p[0], p[1]);
                assert!((f.eval(&b, g.index(i, j), 0, p) - poly(x, y)).abs() < 1e-13);
            }
            // Mean of the polynomial over a cell via a fine midpoint-free check:
            // tensor Gauss with k+2 points is exact, compare against 5-point Gauss.
            let fine =
                crate::quadrature::quadrature(crate::quadrature::QuadratureKind::Gauss, 5).unwrap();
            let cell = g.index(1, 2);
            let mut exact = 0.0;
            for (&xa, &wa) in fine.points.iter().zip(&fine.weights) {
                for (&yb, &wb) in fine.points.iter().zip(&fine.weights) {
                    let (x, y) = g.physical(1, 2, xa, yb);
                    exact += wa * wb * poly(x, y);
                }
            }
            assert!((f.cell_average(&b, cell, 0) - exact).abs() < 1e-13);
        }
    }

    #[test]
    fn traces_agree_bitwise() {
        let g = build_grid(Bounds::new(0.0, 10.0, 0.0, 5.0), 8, 4).unwrap();
        for k in 1..=2 {
            let b = NodalBasis::new(k).unwrap();
            let f = |x: f64, y: f64| (x * 1.3).sin() + (y * 0.7).cos() * x;
            let bath = Bathymetry::from_fn(f, g, &b);
            for j in 0..g.ny {
                for i in 0..g.nx - 1 {
                    assert_eq!(
                        bath.edge(g.index(i, j), Edge::East),
                        bath.edge(g.index(i + 1, j), Edge::West)
                    );
                }
            }
            for j in 0..g.ny - 1 {
                for i in 0..g.nx {
                    assert_eq!(
                        bath.edge(g.index(i, j), Edge::North),
                        bath.edge(g.index(i, j + 1), Edge::South)
                    );
                }
            }
        }
    }
}
