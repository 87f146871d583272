//! Claim laws: the exogenous payment received at the horizon, known only
//! through its marginal distribution.
//!
//! A [`Claim`] owns a validated law and exposes the analytic right-continuous
//! quantile `Q(t) = inf { z : F(z) > t }`, essential bounds, and grid
//! sampling. The analytic quantile matters beyond sampling: tail diagnostics
//! probe it at t as small as 2^-20, far below any practical grid resolution.

use alloc::vec::Vec;

use crate::error::{invalid, Result};
use crate::float::{abs, exp};
use crate::grid::{Grid, QuantileFunction};
use crate::normal;

#[derive(Clone, Debug, PartialEq)]
enum Law {
    /// Atoms sorted ascending with cumulative weights (last is exactly 1).
    Discrete { atoms: Vec<f64>, cum: Vec<f64> },
    Uniform { lower: f64, upper: f64 },
    /// shift + exp(mu + sigma Z), Z standard normal.
    ShiftedLognormal { mu: f64, sigma: f64, shift: f64 },
}

#[derive(Clone, Debug, PartialEq)]
pub struct Claim {
    law: Law,
}

impl Claim {
    /// Finite discrete law. Atoms need not be sorted or distinct; weights
    /// must be positive and sum to 1 within 1e-9.
    pub fn discrete(atoms: &[f64], weights: &[f64]) -> Result<Self> {
        if atoms.is_empty() || atoms.len() != weights.len() {
            return Err(invalid!(
                "need matching nonempty atom/weight lists, got {} and {}",
                atoms.len(),
                weights.len()
            ));
        }
        let mut total = 0.0;
        for (&a, &w) in atoms.iter().zip(weights) {
            if !a.is_finite() {
                return Err(invalid!("claim atom {a} is not finite"));
            }
            if !(w > 0.0) || !w.is_finite() {
                return Err(invalid!("claim weights must be positive, got {w}"));
            }
            total += w;
        }
        if abs(total - 1.0) > 1e-9 {
            return Err(invalid!("claim weights sum to {total}, expected 1"));
        }
        let mut order: Vec<usize> = (0..atoms.len()).collect();
        order.sort_by(|&a, &b| atoms[a].total_cmp(&atoms[b]));
        let sorted: Vec<f64> = order.iter().map(|&k| atoms[k]).collect();
        let mut cum = Vec::with_capacity(order.len());
        let mut acc = 0.0;
        for &k in &order {
            acc += weights[k] / total;
            cum.push(acc);
        }
        // Guard the final comparison against rounding drift.
        *cum.last_mut().expect("nonempty") = 1.0;
        Ok(Claim {
            law: Law::Discrete { atoms: sorted, cum },
        })
    }

    /// Point mass at c.
    pub fn constant(c: f64) -> Result<Self> {
        Self::discrete(&[c], &[1.0])
    }

    /// Uniform law on [lower, upper].
    pub fn uniform(lower: f64, upper: f64) -> Result<Self> {
        if !lower.is_finite() || !upper.is_finite() || lower >= upper {
            return Err(invalid!(
                "uniform claim needs finite lower < upper, got [{lower}, {upper}]"
            ));
        }
        Ok(Claim {
            law: Law::Uniform { lower, upper },
        })
    }

    /// shift + Lognormal(mu, sigma^2).
    pub fn shifted_lognormal(mu: f64, sigma: f64, shift: f64) -> Result<Self> {
        if !mu.is_finite() || !shift.is_finite() || !(sigma > 0.0) || !sigma.is_finite() {
            return Err(invalid!(
                "shifted lognormal claim needs finite mu, shift and sigma > 0, got ({mu}, {sigma}, {shift})"
            ));
        }
        Ok(Claim {
            law: Law::ShiftedLognormal { mu, sigma, shift },
        })
    }

    /// Right-continuous quantile, total on [0,1] with the convention
    /// Q(0) = essential infimum and Q(1) = essential supremum.
    pub fn quantile_at(&self, t: f64) -> f64 {
        match &self.law {
            Law::Discrete { atoms, cum } => {
                if t >= 1.0 {
                    return atoms[atoms.len() - 1];
                }
                // First atom whose cumulative weight exceeds t.
                let k = cum.partition_point(|&c| c <= t);
                atoms[if k >= atoms.len() { atoms.len() - 1 } else { k }]
            }
            Law::Uniform { lower, upper } => {
                if t <= 0.0 {
                    *lower
                } else if t >= 1.0 {
                    *upper
                } else {
                    lower + t * (upper - lower)
                }
            }
            Law::ShiftedLognormal { mu, sigma, shift } => {
                if t <= 0.0 {
                    *shift
                } else {
                    shift + exp(mu + sigma * normal::quantile(t))
                }
            }
        }
    }

    pub fn ess_inf(&self) -> f64 {
        match &self.law {
            Law::Discrete { atoms, .. } => atoms[0],
            Law::Uniform { lower, .. } => *lower,
            Law::ShiftedLognormal { shift, .. } => *shift,
        }
    }

    pub fn ess_sup(&self) -> f64 {
        match &self.law {
            Law::Discrete { atoms, .. } => atoms[atoms.len() - 1],
            Law::Uniform { upper, .. } => *upper,
            Law::ShiftedLognormal { .. } => f64::INFINITY,
        }
    }

    /// Point masses degrade several constructions (reweighting, envelopes);
    /// callers branch on this.
    pub fn is_constant(&self) -> bool {
        self.ess_inf() == self.ess_sup()
    }

    /// Node sample on a grid. Discrete laws go through the exact atom
    /// constructor; continuous laws sample the analytic quantile.
    pub fn sample(&self, grid: Grid) -> Result<QuantileFunction> {
        match &self.law {
            Law::Discrete { atoms, cum } => {
                let mut weights = Vec::with_capacity(cum.len());
                let mut prev = 0.0;
                for &c in cum {
                    weights.push(c - prev);
                    prev = c;
                }
                QuantileFunction::from_atoms(grid, atoms, &weights)
            }
            _ => QuantileFunction::sample(
                grid,
                |t| self.quantile_at(t),
                self.ess_inf(),
                self.ess_sup(),
            ),
        }
    }
}
