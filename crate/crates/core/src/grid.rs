use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bounds {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
}

impl Bounds {
    pub const fn new(x_min: f64, x_max: f64, y_min: f64, y_max: f64) -> Self {
        Bounds {
            x_min,
            x_max,
            y_min,
            y_max,
        }
    }

    pub fn area(&self) -> f64 {
        (self.x_max - self.x_min) * (self.y_max - self.y_min)
    }
}

/// Uniform rectangular partition into `nx × ny` cells.
///
/// Cells are indexed `(i, j)` with `i` along x; the flat index is
/// `j * nx + i`, so iteration order is y-major.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid {
    pub bounds: Bounds,
    pub nx: usize,
    pub ny: usize,
    pub dx: f64,
    pub dy: f64,
}

pub fn build_grid(bounds: Bounds, nx: usize, ny: usize) -> Result<Grid> {
    if nx == 0 || ny == 0 {
        return Err(Error::config(format!(
            "cell counts must be positive, got {nx}x{ny}"
        )));
    }
    let wx = bounds.x_max - bounds.x_min;
    let wy = bounds.y_max - bounds.y_min;
    if !(wx > 0.0 && wy > 0.0) {
        return Err(Error::config(format!(
            "domain extent must be positive: {bounds:?}"
        )));
    }
    Ok(Grid {
        bounds,
        nx,
        ny,
        dx: wx / nx as f64,
        dy: wy / ny as f64,
    })
}

impl Grid {
    pub fn n_cells(&self) -> usize {
        self.nx * self.ny
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize) -> usize {
        j * self.nx + i
    }

    #[inline]
    pub fn ij(&self, cell: usize) -> (usize, usize) {
        (cell % self.nx, cell / self.nx)
    }

    pub fn cell_area(&self) -> f64 {
        self.dx * self.dy
    }

    pub fn domain_area(&self) -> f64 {
        self.bounds.area()
    }

    /// Physical coordinates of a reference point `(xi, eta) ∈ [-1/2, 1/2]²` in cell `(i, j)`.
    ///
    /// Written as `x_min + (i + 1/2 + xi) dx` so that a shared edge yields the
    /// same bits from either neighbour.
    #[inline]
    pub fn physical(&self, i: usize, j: usize, xi: f64, eta: f64) -> (f64, f64) {
        (
            self.bounds.x_min + (i as f64 + 0.5 + xi) * self.dx,
            self.bounds.y_min + (j as f64 + 0.5 + eta) * self.dy,
        )
    }

    pub fn center(&self, i: usize, j: usize) -> (f64, f64) {
        self.physical(i, j, 0.0, 0.0)
    }

    /// Edges `[x_{i-1/2}, x_{i+1/2}]` of column `i`.
    pub fn x_edges(&self, i: usize) -> (f64, f64) {
        (
            self.physical(i, 0, -0.5, 0.0).0,
            self.physical(i, 0, 0.5, 0.0).0,
        )
    }

    pub fn y_edges(&self, j: usize) -> (f64, f64) {
        (
            self.physical(0, j, 0.0, -0.5).1,
            self.physical(0, j, 0.0, 0.5).1,
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perturbation_mesh_spacing() {
        let g = build_grid(Bounds::new(0.0, 2.0, 0.0, 1.0), 200, 50).unwrap();
        assert!((g.dx - 0.01).abs() < 1e-15);
        assert!((g.dy - 0.02).abs() < 1e-15);
    }

    #[test]
    fn bowl_mesh_spacing() {
        let g = build_grid(Bounds::new(-2.0, 2.0, -2.0, 2.0), 200, 200).unwrap();
        assert!((g.dx - 0.02).abs() < 1e-15 && (g.dy - 0.02).abs() < 1e-15);
    }

    #[test]
    fn single_cell() {
        let g = build_grid(Bounds::new(0.0, 1.0, 0.0, 1.0), 1, 1).unwrap();
        assert_eq!(g.x_edges(0), (0.0, 1.0));
        assert_eq!(g.y_edges(0), (0.0, 1.0));
        assert_eq!(g.center(0, 0), (0.5, 0.5));
    }

    #[test]
    fn shared_edges_bit_identical() {
        let g = build_grid(Bounds::new(-0.3, 7.1, 0.2, 1.9), 37, 11).unwrap();
        for i in 0..g.nx - 1 {
            assert_eq!(g.x_edges(i).1, g.x_edges(i + 1).0);
        }
        for j in 0..g.ny - 1 {
            assert_eq!(g.y_edges(j).1, g.y_edges(j + 1).0);
        }
        let total: f64 = (0..g.n_cells()).map(|_| g.cell_area()).sum();
        assert!((total - g.domain_area()).abs() < 1e-12 * g.domain_area());
    }

    #[test]
    fn rejects_bad_config() {
        assert!(build_grid(Bounds::new(0.0, 1.0, 0.0, 1.0), 0, 3).is_err());
        assert!(build_grid(Bounds::new(1.0, 1.0, 0.0, 1.0), 2, 3).is_err());
        assert!(build_grid(Bounds::new(0.0, 1.0, 2.0, 1.0), 2, 3).is_err());
    }
}
