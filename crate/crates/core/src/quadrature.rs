//! One-dimensional quadrature rules normalized to the reference interval
//! `[-1/2, 1/2]`, with weights summing to one.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QuadratureKind {
    Gauss,
    GaussLobatto,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureRule {
    pub kind: QuadratureKind,
    pub points: Vec<f64>,
    pub weights: Vec<f64>,
}

impl QuadratureRule {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Highest monomial degree integrated exactly.
    pub fn exactness(&self) -> usize {
        let n = self.len();
        match self.kind {
            QuadratureKind::Gauss => 2 * n - 1,
            QuadratureKind::GaussLobatto => 2 * n - 3,
        }
    }

    /// Approximates the mean of `f` over `[-1/2, 1/2]`.
    pub fn integrate(&self, f: impl Fn(f64) -> f64) -> f64 {
        self.points
            .iter()
            .zip(&self.weights)
            .map(|(&x, &w)| w * f(x))
            .sum()
    }
}

/// Standard rule on `[-1, 1]`: (points, weights).
fn reference_rule(kind: QuadratureKind, n: usize) -> Option<(Vec<f64>, Vec<f64>)> {
    let rule = match (kind, n) {
        (QuadratureKind::Gauss, 1) => (vec![0.0], vec![2.0]),
        (QuadratureKind::Gauss, 2) => {
            let a = 1.0 / 3.0_f64.sqrt();
            (vec![-a, a], vec![1.0, 1.0])
        }
        (QuadratureKind::Gauss, 3) => {
            let a = (3.0_f64 / 5.0).sqrt();
            (vec![-a, 0.0, a], vec![5.0 / 9.0, 8.0 / 9.0, 5.0 / 9.0])
        }
        (QuadratureKind::Gauss, 4) => {
            let s = (6.0_f64 / 5.0).sqrt();
            let inner = ((3.0 - 2.0 * s) / 7.0).sqrt();
            let outer = ((3.0 + 2.0 * s) / 7.0).sqrt();
            let s30 = 30.0_f64.sqrt();
            let w_inner = (18.0 + s30) / 36.0;
            let w_outer = (18.0 - s30) / 36.0;
            (
                vec![-outer, -inner, inner, outer],
                vec![w_outer, w_inner, w_inner, w_outer],
            )
        }
        (QuadratureKind::Gauss, 5) => {
            let s = 2.0 * (10.0_f64 / 7.0).sqrt();
            let inner = (5.0 - s).sqrt() / 3.0;
            let outer = (5.0 + s).sqrt() / 3.0;
            let s70 = 70.0_f64.sqrt();
            let w_inner = (322.0 + 13.0 * s70) / 900.0;
            let w_outer = (322.0 - 13.0 * s70) / 900.0;
            (
                vec![-outer, -inner, 0.0, inner, outer],
                vec![w_outer, w_inner, 128.0 / 225.0, w_inner, w_outer],
            )
        }
        (QuadratureKind::GaussLobatto, 2) => (vec![-1.0, 1.0], vec![1.0, 1.0]),
        (QuadratureKind::GaussLobatto, 3) => {
            (vec![-1.0, 0.0, 1.0], vec![1.0 / 3.0, 4.0 / 3.0, 1.0 / 3.0])
        }
        (QuadratureKind::GaussLobatto, 4) => {
            let a = 1.0 / 5.0_f64.sqrt();
            (
                vec![-1.0, -a, a, 1.0],
                vec![1.0 / 6.0, 5.0 / 6.0, 5.0 / 6.0, 1.0 / 6.0],
            )
        }
        (QuadratureKind::GaussLobatto, 5) => {
            let a = (3.0_f64 / 7.0).sqrt();
            (
                vec![-1.0, -a, 0.0, a, 1.0],
                vec![0.1, 49.0 / 90.0, 32.0 / 45.0, 49.0 / 90.0, 0.1],
            )
        }
        _ => return None,
    };
    Some(rule)
}

pub fn quadrature(kind: QuadratureKind, n: usize) -> Result<QuadratureRule> {
    let (points, weights) = reference_rule(kind, n).ok_or_else(|| {
        Error::config(format!(
            "{kind:?} quadrature with {n} points is not supported"
        ))
    })?;
    // x in [-1, 1] maps to x/2; weights scale by 1/2 so they sum to one.
    Ok(QuadratureRule {
        kind,
        points: points.into_iter().map(|x| 0.5 * x).collect(),
        weights: weights.into_iter().map(|w| 0.5 * w).collect(),
    })
}
