//! Gauss-Hermite quadrature nodes and weights.
//!
//! Nodes are the roots of the physicists' Hermite polynomial H_n, found by
//! Newton iteration on the orthonormal three-term recurrence; weights come
//! from the Christoffel identity 1/w_i = sum_{k<n} p_k(x_i)^2. Both are
//! standard (Golub-Welsch gives the same numbers via an eigenproblem; the
//! recurrence route needs no linear algebra). A rule of size n integrates
//! polynomials against exp(-x^2) exactly through degree 2n-1.

use alloc::vec::Vec;

use crate::error::{invalid, numerical, Result};
use crate::float::{abs, powf, sqrt};

const SQRT_PI: f64 = 1.7724538509055160273;
const SQRT_2: f64 = core::f64::consts::SQRT_2;

/// Quadrature rule: `sum_i weights[i] * f(nodes[i])` approximates
/// `int f(x) exp(-x^2) dx`.
#[derive(Clone, Debug)]
pub struct GaussHermite {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

/// Evaluates the orthonormal Hermite value at x for degree n, returning
/// (p_n, p_{n-1}, sum of squares of p_0..p_{n-1}).
fn recurrence(n: usize, x: f64) -> (f64, f64, f64) {
    let mut prev = 0.0; // p_{-1}
    let mut cur = 1.0 / sqrt(SQRT_PI); // p_0 = pi^{-1/4}
    let mut sumsq = 0.0;
    for k in 0..n {
        sumsq += cur * cur;
        let next = x * sqrt(2.0 / (k as f64 + 1.0)) * cur - sqrt(k as f64 / (k as f64 + 1.0)) * prev;
        prev = cur;
        cur = next;
    }
    (cur, prev, sumsq)
}

impl GaussHermite {
    pub fn new(n: usize) -> Result<Self> {
        if n < 1 || n > 512 {
            return Err(invalid!("Gauss-Hermite size must be in 1..=512, got {n}"));
        }
        let mut nodes = alloc::vec![0.0; n];
        let mut weights = alloc::vec![0.0; n];
        let m = (n + 1) / 2;
        let mut z = 0.0;
        for i in 0..m {
            // Initial guesses for roots in descending order (largest first),
            // the classical asymptotic starts.
            z = match i {
                0 => {
                    let an = 2.0 * n as f64 + 1.0;
                    sqrt(an) - 1.85575 * powf(an, -1.0 / 6.0)
                }
                1 => z - 1.14 * powf(n as f64, 0.426) / z,
                2 => 1.86 * z - 0.86 * nodes[n - 1],
                3 => 1.91 * z - 0.91 * nodes[n - 2],
                _ => 2.0 * z - nodes[n - i + 1],
            };
            let mut converged = false;
            for _ in 0..100 {
                let (p, p_prev, _) = recurrence(n, z);
                // p_n'(x) = sqrt(2n) * p_{n-1}(x).
                let dp = sqrt(2.0 * n as f64) * p_prev;
                let step = p / dp;
                z -= step;
                if abs(step) <= 1e-15 * (1.0 + abs(z)) {
                    converged = true;
                    break;
                }
            }
            if !converged {
                return Err(numerical!("Hermite root {i} of {n} did not converge"));
            }
            let (_, _, sumsq) = recurrence(n, z);
            let w = 1.0 / sumsq;
            nodes[n - 1 - i] = z;
            nodes[i] = -z;
            weights[n - 1 - i] = w;
            weights[i] = w;
        }
        if n % 2 == 1 {
            // Odd rules have the midpoint root exactly at zero.
            nodes[n / 2] = 0.0;
            let (_, _, sumsq) = recurrence(n, 0.0);
            weights[n / 2] = 1.0 / sumsq;
        }
        Ok(GaussHermite { nodes, weights })
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Expectation E[g(Z)] for standard normal Z: substitute z = sqrt(2) x
    /// and divide by sqrt(pi).
    pub fn expect_gaussian(&self, g: impl Fn(f64) -> f64) -> f64 {
        let mut acc = 0.0;
        for (&x, &w) in self.nodes.iter().zip(&self.weights) {
            acc += w * g(SQRT_2 * x);
        }
        acc / SQRT_PI
    }
}
