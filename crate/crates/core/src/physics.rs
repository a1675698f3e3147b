//! Reformulated fluxes and source with the auxiliary level `B`, plus the
//! Lax–Friedrichs numerical flux.
//!
//! With `R = p1 / (η − Z)` the normal momentum flux carries the hydrostatic
//! part `(½ g η² − g (η − B) Z) R`, and the source becomes
//! `g (B − η) ∂Z R + g ∂R Z (B − Z/2)`. For still water with `B = η` the
//! source vanishes and the flux is the constant `½ g η² R`.
//!
//! Dry points (`η − Z ≤ h_eps`) carry zero velocity and `R = 1`. Thin
//! layers with `p1` below `vel_eps` use a desingularized velocity so that
//! round-off momentum cannot produce unbounded wave speeds.

use crate::basis::NodalBasis;
use crate::error::{Error, Result};
use crate::field::DgField;
use crate::state::{Conserved, Primitive, ETA, P1, P2, P3};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    X,
    Y,
}

impl Direction {
    /// Index of the momentum component normal to this direction.
    pub fn momentum(self) -> usize {
        match self {
            Direction::X => P2,
            Direction::Y => P3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AuxiliaryB {
    pub value: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct WaveSpeeds {
    pub alpha1: f64,
    pub alpha2: f64,
}

impl WaveSpeeds {
    pub fn max(self, other: WaveSpeeds) -> WaveSpeeds {
        WaveSpeeds {
            alpha1: self.alpha1.max(other.alpha1),
            alpha2: self.alpha2.max(other.alpha2),
        }
    }

    pub fn get(self, dir: Direction) -> f64 {
        match dir {
            Direction::X => self.alpha1,
            Direction::Y => self.alpha2,
        }
    }
}

/// Pointwise kinematics after the dry-state policy.
#[derive(Debug, Clone, Copy)]
pub struct PointKinematics {
    pub h: f64,
    pub wet: bool,
    /// `p1 / h` when wet, 1 when dry.
    pub ratio: f64,
    pub u: f64,
    pub v: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Physics {
    pub g: f64,
    pub h_eps: f64,
    /// Below this `p1` the velocity is desingularized.
    pub vel_eps: f64,
}

/// Ratio of the velocity desingularization depth to the dry threshold.
pub const VEL_EPS_FACTOR: f64 = 100.0;

impl Physics {
    pub fn new(g: f64, h_eps: f64) -> Self {
        Physics {
            g,
            h_eps,
            vel_eps: VEL_EPS_FACTOR * h_eps,
        }
    }

    /// `1 / s` for `s ≥ vel_eps`, and the bounded `2 s / (s² + vel_eps²)` below it.
    #[inline]
    fn inv_thin(&self, s: f64) -> f64 {
        if s >= self.vel_eps {
            1.0 / s
        } else {
            2.0 * s / (s * s + self.vel_eps * self.vel_eps)
        }
    }

    #[inline]
    pub fn kinematics(&self, u: &[f64], z: f64) -> PointKinematics {
        let h = u[ETA] - z;
        let p1 = u[P1];
        if h > self.h_eps && p1 > 0.0 {
            let inv = self.inv_thin(p1);
            PointKinematics {
                h,
                wet: true,
                ratio: p1 / h,
                u: u[P2] * inv,
                v: u[P3] * inv,
            }
        } else {
            PointKinematics {
                h: h.max(0.0),
                wet: false,
                ratio: 1.0,
                u: 0.0,
                v: 0.0,
            }
        }
    }

    /// `(½ g η² − g (η − B) Z) R`.
    #[inline]
    fn hydrostatic(&self, eta: f64, z: f64, b: f64, ratio: f64) -> f64 {
        let g = self.g;
        (0.5 * g * eta * eta - g * (eta - b) * z) * ratio
    }

    #[inline]
    pub fn wave_speed_at(&self, u: &[f64], z: f64, dir: Direction) -> f64 {
        let k = self.kinematics(u, z);
        let vel = match dir {
            Direction::X => k.u,
            Direction::Y => k.v,
        };
        vel.abs() + (self.g * k.h).sqrt()
    }

    /// Writes the reformulated flux in direction `dir` into `out`.
    #[inline]
    pub fn flux_into(&self, u: &[f64], z: f64, b: f64, dir: Direction, out: &mut [f64]) {
        let k = self.kinematics(u, z);
        self.flux_with(u, &k, z, b, dir, out);
    }

    /// As [`Physics::flux_into`], reusing precomputed kinematics.
    #[inline]
    pub fn flux_with(
        &self,
        u: &[f64],
        k: &PointKinematics,
        z: f64,
        b: f64,
        dir: Direction,
        out: &mut [f64],
    ) {
        let vel = match dir {
            Direction::X => k.u,
            Direction::Y => k.v,
        };
        out[ETA] = k.h * vel;
        for c in P1..u.len() {
            out[c] = u[c] * vel;
        }
        out[dir.momentum()] += self.hydrostatic(u[ETA], z, b, k.ratio);
    }

    #[inline]
    pub fn speeds_with(&self, k: &PointKinematics) -> WaveSpeeds {
        let c = (self.g * k.h).sqrt();
        WaveSpeeds {
            alpha1: k.u.abs() + c,
            alpha2: k.v.abs() + c,
        }
    }

    pub fn physical_flux(&self, u: &Conserved, z: f64, b: f64, dir: Direction) -> Vec<f64> {
        let mut out = vec![0.0; u.0.len()];
        self.flux_into(u.as_slice(), z, b, dir, &mut out);
        out
    }

    /// Writes the reformulated source into `out`. Only the momentum rows are
    /// nonzero; the derivative of `R` uses the quotient rule on the
    /// polynomial derivatives of `η`, `p1` and `Z`.
    #[allow(clippy::too_many_arguments)]
    #[inline]
    pub fn source_into(
        &self,
        u: &[f64],
        grad_eta: [f64; 2],
        grad_p1: [f64; 2],
        z: f64,
        grad_z: [f64; 2],
        b: f64,
        out: &mut [f64],
    ) {
        let k = self.kinematics(u, z);
        out.iter_mut().for_each(|s| *s = 0.0);
        let [sx, sy] = self.momentum_source(u[ETA], &k, grad_eta, grad_p1, z, grad_z, b);
        out[P2] = sx;
        out[P3] = sy;
    }

    /// The two momentum rows of the source, from precomputed kinematics.
    #[allow(clippy::too_many_arguments)]
    #[inline]
    pub fn momentum_source(
        &self,
        eta: f64,
        k: &PointKinematics,
        grad_eta: [f64; 2],
        grad_p1: [f64; 2],
        z: f64,
        grad_z: [f64; 2],
        b: f64,
    ) -> [f64; 2] {
        let g = self.g;
        let hydro = z * (b - 0.5 * z);
        let inv_h = if k.wet { self.inv_thin(k.h) } else { 0.0 };
        let mut out = [0.0; 2];
        for d in 0..2 {
            let dr = if k.wet {
                let dh = grad_eta[d] - grad_z[d];
                (grad_p1[d] - k.ratio * dh) * inv_h
            } else {
                0.0
            };
            out[d] = g * (b - eta) * grad_z[d] * k.ratio + g * dr * hydro;
        }
        out
    }

    #[allow(clippy::too_many_arguments)]
    pub fn source_term(
        &self,
        u: &Conserved,
        grad_eta: [f64; 2],
        grad_p1: [f64; 2],
        z: f64,
        grad_z: [f64; 2],
        b: f64,
    ) -> Vec<f64> {
        let mut out = vec![0.0; u.0.len()];
        self.source_into(u.as_slice(), grad_eta, grad_p1, z, grad_z, b, &mut out);
        out
    }

    /// Lax–Friedrichs flux `½ (F(U⁺) + F(U⁻) − α (U⁺ − U⁻))` into `out`;
    /// `scratch` must hold one extra state. When both traces are dry only the
    /// hydrostatic normal-momentum part survives, evaluated with `h ≥ 0`.
    #[allow(clippy::too_many_arguments)]
    #[inline]
    pub fn lf_flux_into(
        &self,
        um: &[f64],
        up: &[f64],
        z: f64,
        b: f64,
        alpha: f64,
        dir: Direction,
        out: &mut [f64],
        scratch: &mut [f64],
    ) {
        let dry_m = um[ETA] - z <= self.h_eps;
        let dry_p = up[ETA] - z <= self.h_eps;
        if dry_m && dry_p {
            out.iter_mut().for_each(|f| *f = 0.0);
            let em = z + (um[ETA] - z).max(0.0);
            let ep = z + (up[ETA] - z).max(0.0);
            out[dir.momentum()] =
                0.5 * (self.hydrostatic(em, z, b, 1.0) + self.hydrostatic(ep, z, b, 1.0));
            return;
        }
        self.flux_into(um, z, b, dir, out);
        self.flux_into(up, z, b, dir, scratch);
        for c in 0..out.len() {
            out[c] = 0.5 * (out[c] + scratch[c] - alpha * (up[c] - um[c]));
        }
    }

    pub fn lf_flux(
        &self,
        um: &Conserved,
        up: &Conserved,
        z: f64,
        b: f64,
        alpha: f64,
        dir: Direction,
    ) -> Vec<f64> {
        let n = um.0.len();
        let mut out = vec![0.0; n];
        let mut scratch = vec![0.0; n];
        self.lf_flux_into(
            um.as_slice(),
            up.as_slice(),
            z,
            b,
            alpha,
            dir,
            &mut out,
            &mut scratch,
        );
        out
    }
}

/// `max(|vel| + √(g h))` over a stencil of primitive states.
pub fn wave_speed(stencil: &[Primitive], dir: Direction, g: f64) -> Result<f64> {
    let mut alpha: f64 = 0.0;
    for p in stencil {
        if p.h < 0.0 {
            return Err(Error::InvalidState {
                cell: usize::MAX,
                reason: format!("negative depth {:e} in wave speed", p.h),
            });
        }
        let vel = match dir {
            Direction::X => p.u,
            Direction::Y => p.v,
        };
        alpha = alpha.max(vel.abs() + (g * p.h).sqrt());
    }
    Ok(alpha)
}

/// Domain mean of component `comp` (the free surface) by cell quadrature.
pub fn compute_b(field: &DgField, basis: &NodalBasis, comp: usize) -> AuxiliaryB {
    let n = field.grid().n_cells();
    let sum: f64 = (0..n).map(|c| field.cell_average(basis, c, comp)).sum();
    AuxiliaryB {
        value: sum / n as f64,
    }
}
