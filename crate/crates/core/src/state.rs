//! Conserved vector `U = (η, p1, p2, p3, q_1..q_N)` and primitive recovery.
//!
//! `p1 = h r`, `p2 = h u r`, `p3 = h v r`, `q_i = h c_i`, with the relative
//! density `r = 1 + Σ Δ_i c_i`.

use crate::error::{Error, Result};

pub const ETA: usize = 0;
pub const P1: usize = 1;
pub const P2: usize = 2;
pub const P3: usize = 3;
/// Index of `q_1`; constituent `i` (zero-based) lives at `Q0 + i`.
pub const Q0: usize = 4;

pub fn n_components(n_constituents: usize) -> usize {
    Q0 + n_constituents
}

/// Scale-aware dry threshold: `1e-8 · max(1, max depth)`.
pub fn dry_threshold(max_depth: f64) -> f64 {
    1e-8 * max_depth.max(1.0)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Conserved(pub Vec<f64>);

impl Conserved {
    pub fn new(eta: f64, p1: f64, p2: f64, p3: f64, q: &[f64]) -> Self {
        let mut v = vec![eta, p1, p2, p3];
        v.extend_from_slice(q);
        Conserved(v)
    }

    pub fn eta(&self) -> f64 {
        self.0[ETA]
    }
    pub fn p1(&self) -> f64 {
        self.0[P1]
    }
    pub fn p2(&self) -> f64 {
        self.0[P2]
    }
    pub fn p3(&self) -> f64 {
        self.0[P3]
    }
    pub fn q(&self) -> &[f64] {
        &self.0[Q0..]
    }
    pub fn n_constituents(&self) -> usize {
        self.0.len() - Q0
    }
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Primitive {
    pub h: f64,
    pub u: f64,
    pub v: f64,
    pub r: f64,
    pub c: Vec<f64>,
}

impl Primitive {
    /// Assembles the conserved vector over bottom elevation `z`, with `r`
    /// taken from the concentrations.
    pub fn to_conserved(&self, z: f64, delta: &[f64]) -> Result<Conserved> {
        let r = relative_density(&self.c, delta)?;
        let h = self.h;
        let q: Vec<f64> = self.c.iter().map(|c| h * c).collect();
        Ok(Conserved::new(
            h + z,
            h * r,
            h * self.u * r,
            h * self.v * r,
            &q,
        ))
    }
}

pub fn relative_density(c: &[f64], delta: &[f64]) -> Result<f64> {
    if c.len() != delta.len() {
        return Err(Error::config(format!(
            "{} concentrations but {} relative densities",
            c.len(),
            delta.len()
        )));
    }
    Ok(1.0 + c.iter().zip(delta).map(|(c, d)| c * d).sum::<f64>())
}

/// Recovers `(h, u, v, r, c)`; at or below `h_eps` the state is treated as
/// dry: `h` clamped to `max(h, 0)`, velocities and concentrations zero, `r = 1`.
pub fn recover_primitive(u: &Conserved, z: f64, h_eps: f64) -> Result<Primitive> {
    if !(h_eps > 0.0) {
        return Err(Error::config(format!(
            "dry threshold must be positive, got {h_eps}"
        )));
    }
    let h = u.eta() - z;
    let n = u.n_constituents();
    if h <= h_eps {
        return Ok(Primitive {
            h: h.max(0.0),
            u: 0.0,
            v: 0.0,
            r: 1.0,
            c: vec![0.0; n],
        });
    }
    let p1 = u.p1();
    if !(p1 > 0.0) {
        return Err(Error::InvalidState {
            cell: usize::MAX,
            reason: format!("density collapse: p1 = {p1:e} with h = {h:e}"),
        });
    }
    Ok(Primitive {
        h,
        u: u.p2() / p1,
        v: u.p3() / p1,
        r: p1 / h,
        c: u.q().iter().map(|q| q / h).collect(),
    })
}
