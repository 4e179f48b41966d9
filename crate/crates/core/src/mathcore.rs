//! Gaussian tail utilities and shared tolerances.
//!
//! `q_func` is the standard normal upper-tail probability and `q_inv` its
//! inverse. Every sensing formula goes through these two functions, so they are
//! evaluated to near machine precision: detection targets sit close to 1 where
//! a sloppy tail shifts the required sample count noticeably.

use std::f64::consts::{FRAC_1_SQRT_2, PI};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Stopping tolerances shared by the iterative solvers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tolerance {
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub max_iters: usize,
}

impl Tolerance {
    pub fn new(abs_tol: f64, rel_tol: f64, max_iters: usize) -> Result<Self> {
        if !(abs_tol > 0.0) {
            return Err(Error::invalid("abs_tol", "must be > 0"));
        }
        if !(rel_tol > 0.0) {
            return Err(Error::invalid("rel_tol", "must be > 0"));
        }
        if max_iters == 0 {
            return Err(Error::invalid("max_iters", "must be >= 1"));
        }
        Ok(Self {
            abs_tol,
            rel_tol,
            max_iters,
        })
    }

    /// `|a - b| <= abs_tol + rel_tol * max(|a|, |b|)`.
    pub fn close(&self, a: f64, b: f64) -> bool {
        (a - b).abs() <= self.abs_tol + self.rel_tol * a.abs().max(b.abs())
    }
}

/// Q-function: `P(Z > x)` for a standard normal `Z`.
pub fn q_func(x: f64) -> Result<f64> {
    if !x.is_finite() {
        return Err(Error::Domain(format!("q_func argument must be finite, got {x}")));
    }
    Ok(q_tail(x))
}

/// Unchecked tail probability used on hot paths where the argument is known finite.
#[inline]
pub(crate) fn q_tail(x: f64) -> f64 {
    (0.5 * libm::erfc(x * FRAC_1_SQRT_2)).clamp(0.0, 1.0)
}

#[inline]
fn normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * PI).sqrt()
}

/// Inverse Q-function: the `x` with `q_func(x) == p`.
///
/// Works in the upper tail (`p <= 0.5`, using `Q(-x) = 1 - Q(x)` otherwise,
/// where `1 - p` is exact) so the root is resolved to relative accuracy.
/// Bracketing bisection narrows the root, then Newton steps polish it.
pub fn q_inv(p: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::Domain(format!("q_inv requires 0 < p < 1, got {p}")));
    }
    if p > 0.5 {
        return Ok(-upper_tail_inv(1.0 - p));
    }
    Ok(upper_tail_inv(p))
}

fn upper_tail_inv(p: f64) -> f64 {
    let (mut lo, mut hi) = (0.0_f64, 8.0_f64);
    while q_tail(hi) > p {
        hi *= 2.0;
        if hi > 64.0 {
            break;
        }
    }
    // q_tail is decreasing: q_tail(lo) >= p >= q_tail(hi).
    while hi - lo > 1e-3 {
        let mid = 0.5 * (lo + hi);
        if q_tail(mid) > p {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let mut x = 0.5 * (lo + hi);
    for _ in 0..8 {
        let pdf = normal_pdf(x);
        if pdf <= 0.0 {
            break;
        }
        let step = (q_tail(x) - p) / pdf;
        let next = (x + step).clamp(lo, hi);
        if (next - x).abs() <= 1e-15 * x.abs().max(1.0) {
            x = next;
            break;
        }
        x = next;
    }
    x
}
