//! Midpoint grids on (0,1) and grid-sampled quantile functions.
//!
//! Everything downstream works with quantile functions stored at midpoint
//! nodes t_i = (i + 1/2)/n, i = 0..n. The midpoint family is closed under
//! reflection: 1 - t_i equals t_{n-1-i} exactly, so the reversed pairing in
//! the budget constraint never needs a second evaluation pass, and quadrature
//! against the reflected kernel quantile reuses the same sampled values.

use alloc::vec::Vec;

use crate::error::{invalid, Result};
use crate::float::floor;

/// Uniform midpoint grid with `n >= 2` cells on (0,1).
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Grid {
    n: usize,
}

impl Grid {
    pub fn new(n: usize) -> Result<Self> {
        if n < 2 {
            return Err(invalid!("grid needs at least 2 cells, got {n}"));
        }
        // Node arithmetic stays exact as long as 2n fits a double's mantissa.
        if n > (1usize << 31) {
            return Err(invalid!("grid size {n} too large"));
        }
        Ok(Grid { n })
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.n
    }

    /// Cell width 1/n, also the quadrature weight of every node.
    #[inline]
    pub fn step(&self) -> f64 {
        1.0 / self.n as f64
    }

    /// Node t_i = (i + 1/2)/n for i in 0..n.
    #[inline]
    pub fn node(&self, i: usize) -> f64 {
        debug_assert!(i < self.n);
        (i as f64 + 0.5) / self.n as f64
    }

    /// Midpoint-rule integral of a function sampled at the nodes.
    pub fn integrate(&self, f: impl Fn(usize) -> f64) -> f64 {
        let mut acc = 0.0;
        for i in 0..self.n {
            acc += f(i);
        }
        acc * self.step()
    }
}

/// A quantile function sampled at the nodes of a [`Grid`].
///
/// Stored values must be nondecreasing and finite. `at_zero` and `at_one`
/// carry the essential bounds of the underlying law (the right limit at 0 and
/// left limit at 1), which may be infinite; they are metadata for boundary
/// checks and do not participate in quadrature.
#[derive(Clone, Debug, PartialEq)]
pub struct QuantileFunction {
    grid: Grid,
    values: Vec<f64>,
    at_zero: f64,
    at_one: f64,
}

impl QuantileFunction {
    /// Wraps explicit node values. Fails on wrong length, non-monotone or
    /// non-finite interior values, or bounds that contradict the values.
    pub fn from_values(grid: Grid, values: Vec<f64>, at_zero: f64, at_one: f64) -> Result<Self> {
        if values.len() != grid.n() {
            return Err(invalid!(
                "expected {} node values, got {}",
                grid.n(),
                values.len()
            ));
        }
        for (i, &v) in values.iter().enumerate() {
            if !v.is_finite() {
                return Err(invalid!("node value at index {i} is not finite"));
            }
            if i > 0 && v < values[i - 1] {
                return Err(invalid!(
                    "quantile values must be nondecreasing (index {i}: {v} < {})",
                    values[i - 1]
                ));
            }
        }
        if at_zero != at_zero || at_one != at_one {
            return Err(invalid!("essential bounds must not be NaN"));
        }
        if at_zero > values[0] {
            return Err(invalid!(
                "lower bound {at_zero} exceeds first node value {}",
                values[0]
            ));
        }
        if at_one < values[grid.n() - 1] {
            return Err(invalid!(
                "upper bound {at_one} below last node value {}",
                values[grid.n() - 1]
            ));
        }
        Ok(QuantileFunction {
            grid,
            values,
            at_zero,
            at_one,
        })
    }

    /// Samples an analytic quantile `f(t)` at the grid nodes.
    pub fn sample(grid: Grid, f: impl Fn(f64) -> f64, at_zero: f64, at_one: f64) -> Result<Self> {
        let values = (0..grid.n()).map(|i| f(grid.node(i))).collect();
        Self::from_values(grid, values, at_zero, at_one)
    }

    /// Quantile function of a finite discrete law given atoms and weights.
    ///
    /// Atoms need not be sorted or distinct; weights must be positive and sum
    /// to 1 within 1e-9 (they are renormalized exactly afterwards).
    pub fn from_atoms(grid: Grid, atoms: &[f64], weights: &[f64]) -> Result<Self> {
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
                return Err(invalid!("atom {a} is not finite"));
            }
            if !(w > 0.0) || !w.is_finite() {
                return Err(invalid!("weights must be positive and finite, got {w}"));
            }
            total += w;
        }
        if crate::float::abs(total - 1.0) > 1e-9 {
            return Err(invalid!("weights sum to {total}, expected 1"));
        }
        let mut order: Vec<usize> = (0..atoms.len()).collect();
        order.sort_by(|&a, &b| atoms[a].total_cmp(&atoms[b]));

        // Right-continuous inverse: Q(t) = first sorted atom whose cumulative
        // weight exceeds t. March nodes and cumulative weights together.
        let n = grid.n();
        let mut values = Vec::with_capacity(n);
        let mut k = 0usize;
        let mut cum = weights[order[0]] / total;
        for i in 0..n {
            let t = grid.node(i);
            while cum <= t && k + 1 < order.len() {
                k += 1;
                cum += weights[order[k]] / total;
            }
            values.push(atoms[order[k]]);
        }
        let lo = atoms[order[0]];
        let hi = atoms[order[order.len() - 1]];
        Self::from_values(grid, values, lo, hi)
    }

    /// Constant law (single atom).
    pub fn constant(grid: Grid, c: f64) -> Result<Self> {
        Self::from_atoms(grid, &[c], &[1.0])
    }

    #[inline]
    pub fn grid(&self) -> Grid {
        self.grid
    }

    #[inline]
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Value at node i.
    #[inline]
    pub fn value(&self, i: usize) -> f64 {
        self.values[i]
    }

    /// Value at the reflected node, Q(1 - t_i) = Q(t_{n-1-i}).
    #[inline]
    pub fn value_reversed(&self, i: usize) -> f64 {
        self.values[self.grid.n() - 1 - i]
    }

    /// Essential infimum (right limit at 0) of the underlying law.
    #[inline]
    pub fn ess_inf(&self) -> f64 {
        self.at_zero
    }

    /// Essential supremum (left limit at 1) of the underlying law.
    #[inline]
    pub fn ess_sup(&self) -> f64 {
        self.at_one
    }

    /// True when the law is a point mass as far as the grid can see.
    pub fn is_constant(&self) -> bool {
        self.at_zero == self.at_one
    }

    /// Right-continuous step evaluation on (0,1): the value at node t_i
    /// prevails on [t_i, t_{i+1}), the first value extends left to 0 and the
    /// last extends right to 1. `t <= 0` returns `at_zero`, `t >= 1` returns
    /// `at_one`.
    pub fn eval(&self, t: f64) -> f64 {
        if t <= 0.0 {
            return self.at_zero;
        }
        if t >= 1.0 {
            return self.at_one;
        }
        let n = self.grid.n();
        let pos = t * n as f64 - 0.5;
        if pos <= 0.0 {
            return self.values[0];
        }
        let i = floor(pos) as usize;
        self.values[if i >= n - 1 { n - 1 } else { i }]
    }

    /// Midpoint quadrature of `g(Q(t))` over (0,1).
    pub fn integrate(&self, g: impl Fn(f64) -> f64) -> f64 {
        self.grid.integrate(|i| g(self.values[i]))
    }
}

/// Reversed pairing `integral_0^1 a(t) b(1-t) dt` by midpoint quadrature.
///
/// With `a` the wealth quantile and `b` the kernel quantile this is the
/// smallest price over all joint laws with the given marginals, attained by
/// the antimonotone arrangement; it is the budget functional used throughout.
pub fn pair_reversed(a: &QuantileFunction, b: &QuantileFunction) -> Result<f64> {
    if a.grid() != b.grid() {
        return Err(invalid!(
            "grids differ: {} vs {} cells",
            a.grid().n(),
            b.grid().n()
        ));
    }
    let n = a.grid().n();
    let mut acc = 0.0;
    for i in 0..n {
        acc += a.value(i) * b.value(n - 1 - i);
    }
    Ok(acc * a.grid().step())
}

/// Comonotone pairing `integral_0^1 a(t) b(t) dt` (both at the same node).
pub fn pair_aligned(a: &QuantileFunction, b: &QuantileFunction) -> Result<f64> {
    if a.grid() != b.grid() {
        return Err(invalid!(
            "grids differ: {} vs {} cells",
            a.grid().n(),
            b.grid().n()
        ));
    }
    let n = a.grid().n();
    let mut acc = 0.0;
    for i in 0..n {
        acc += a.value(i) * b.value(i);
    }
    Ok(acc * a.grid().step())
}
