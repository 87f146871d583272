//! Closed route for exponential utility.
//!
//! With u(x) = -exp(-alpha x), the worst-coupling problem factors: the claim
//! contributes a probability weighting w built from cumulative |u(claim)|
//! mass, and on the w-transformed axis the objective is plain expected
//! utility while the budget weight becomes the slope of a pulled-back
//! kernel integral f. The optimal wealth quantile is an explicit transform
//! of the slope of f's upper concave envelope delta:
//!
//! ```text
//!   Qbar(node i) = C - ln(delta' over the image of cell i) / alpha,
//!   C chosen so the reversed pairing with the kernel meets the budget.
//! ```
//!
//! The envelope is taken over the claim-weighted axis: the hull input is
//! the parametric polyline whose abscissae are the weighting's reflected
//! edges and whose ordinates are running kernel sums. With that placement
//! the free-cell slope is exactly kernel * e^{alpha claim} and a pooled
//! chord is exactly (sum kernel)/(sum e^{-alpha claim}), so the route
//! reproduces the isotonic solver's stationarity conditions node for node.
//! Taking the hull over uniform time instead would misplace the pooled
//! blocks for any non-constant claim.
//!
//! Kernel integrals reuse the midpoint cell sums of the budget pairing, so
//! the back-solved multiplier and the isotonic route's calibrated
//! multiplier agree to calibration error rather than drifting apart by
//! quadrature-family mismatch.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{invalid, numerical, Result};
use crate::float::{exp, floor, ln, min};
use crate::grid::{pair_reversed, Grid, QuantileFunction};
use crate::preference::robust_objective;
use crate::solver::{node_inputs, tail_functions};
use crate::utility::UtilityModel;

/// Probability weighting induced by a claim under exponential utility:
/// w(t) = (1/E|u(claim)|) * integral over [0, t] of |u| at the reversed
/// claim quantile, accumulated per grid cell.
#[derive(Clone, Debug)]
pub struct WeightingFunction {
    grid: Grid,
    /// Values at cell edges j/n for j = 0..=n; nondecreasing, 0 to 1, and
    /// strictly increasing whenever the per-cell mass stays above the
    /// underflow threshold.
    edges: Vec<f64>,
    /// Grid mean of |u(claim)|; the normalizing constant E|u(claim)|.
    normalizer: f64,
}

impl WeightingFunction {
    pub fn grid(&self) -> Grid {
        self.grid
    }

    pub fn normalizer(&self) -> f64 {
        self.normalizer
    }

    /// Edge values, length n + 1.
    pub fn edges(&self) -> &[f64] {
        &self.edges
    }

    /// Piecewise-linear evaluation between edges.
    pub fn value(&self, t: f64) -> f64 {
        let n = self.grid.n();
        if t <= 0.0 {
            return 0.0;
        }
        if t >= 1.0 {
            return 1.0;
        }
        let pos = t * n as f64;
        let j = min(floor(pos), (n - 1) as f64) as usize;
        let frac = pos - j as f64;
        self.edges[j] + frac * (self.edges[j + 1] - self.edges[j])
    }

    /// Monotone piecewise-linear inverse. A value attained on a flat span
    /// of edges resolves to the span's left endpoint.
    pub fn invert(&self, y: f64) -> f64 {
        let n = self.grid.n();
        if y <= 0.0 {
            return 0.0;
        }
        if y >= 1.0 {
            return 1.0;
        }
        // First edge at or above y; j >= 1 because edges[0] = 0 < y.
        let j = self.edges.partition_point(|&e| e < y);
        if self.edges[j] == y {
            return j as f64 / n as f64;
        }
        let lo = self.edges[j - 1];
        let hi = self.edges[j];
        ((j - 1) as f64 + (y - lo) / (hi - lo)) / n as f64
    }
}

fn weighting_unchecked(claim: &QuantileFunction, alpha: f64) -> WeightingFunction {
    let g = claim.grid();
    let n = g.n();
    let mut edges = vec![0.0; n + 1];
    let mut acc = 0.0;
    for m in 0..n {
        acc += exp(-alpha * claim.value_reversed(m));
        edges[m + 1] = acc;
    }
    let total = acc;
    for e in edges.iter_mut() {
        *e /= total;
    }
    edges[n] = 1.0;
    WeightingFunction {
        grid: g,
        edges,
        normalizer: total * g.step(),
    }
}

/// Builds the weighting function of a non-degenerate claim.
pub fn weighting(claim: &QuantileFunction, alpha: f64) -> Result<WeightingFunction> {
    if !(alpha > 0.0) || !alpha.is_finite() {
        return Err(invalid!("risk aversion must be positive, got {alpha}"));
    }
    if claim.is_constant() {
        return Err(invalid!(
            "constant claim induces the identity weighting; use the classical route"
        ));
    }
    Ok(weighting_unchecked(claim, alpha))
}

/// Hull input for the closed route: the polyline (a_k, f_k), k = 0..=n,
/// where a_k = 1 - w(edge n-k) places cell k of the grid on the
/// claim-weighted axis and f_k = -(running kernel integral up to edge
/// n-k) / E|u(claim)|. Both coordinates increase from (0, -E[rho]/E|u|) to
/// (1, 0); the endpoints are exact.
pub fn envelope_input(
    w: &WeightingFunction,
    kernel: &QuantileFunction,
) -> Result<Vec<(f64, f64)>> {
    if w.grid() != kernel.grid() {
        return Err(invalid!("weighting and kernel use different grids"));
    }
    if !(kernel.value(0) > 0.0) {
        return Err(invalid!("pricing-kernel node values must be positive"));
    }
    let n = w.grid().n();
    let h = w.grid().step();
    // prefix[j] = integral of the kernel quantile over [0, j/n] by midpoint
    // cell sums, the same quadrature as the budget pairing.
    let mut prefix = vec![0.0; n + 1];
    for i in 0..n {
        prefix[i + 1] = prefix[i] + h * kernel.value(i);
    }
    let mut points = vec![(0.0, 0.0); n + 1];
    for (k, p) in points.iter_mut().enumerate() {
        *p = (1.0 - w.edges[n - k], -prefix[n - k] / w.normalizer);
    }
    points[n] = (1.0, 0.0);
    Ok(points)
}

/// Upper concave envelope of a polyline spanning [0, 1].
#[derive(Clone, Debug)]
pub struct EnvelopeResult {
    /// The input polyline.
    pub points: Vec<(f64, f64)>,
    /// Envelope ordinates at the input abscissae.
    pub delta: Vec<f64>,
    /// Envelope slope per input cell (length n), constant within hull
    /// segments and strictly decreasing across them.
    pub cell_slopes: Vec<f64>,
    /// Indices where the envelope touches the input (hull vertices).
    pub hull_knots: Vec<usize>,
}

/// Monotone-chain upper hull. Collinear interior points are popped, so the
/// knot list is minimal and the per-segment slopes strictly decrease.
pub fn concave_envelope(points: &[(f64, f64)]) -> Result<EnvelopeResult> {
    let m = points.len();
    if m < 2 {
        return Err(invalid!("envelope needs at least two points, got {m}"));
    }
    if points.iter().any(|(x, y)| !x.is_finite() || !y.is_finite()) {
        return Err(invalid!("envelope input must be finite"));
    }
    if points[0].0 != 0.0 || points[m - 1].0 != 1.0 {
        return Err(invalid!("envelope input must span [0, 1]"));
    }
    for j in 1..m {
        if points[j].0 <= points[j - 1].0 {
            return Err(invalid!(
                "envelope abscissae must strictly increase (index {j})"
            ));
        }
    }
    let mut knots: Vec<usize> = Vec::with_capacity(m);
    for j in 0..m {
        while knots.len() >= 2 {
            let a = knots[knots.len() - 2];
            let b = knots[knots.len() - 1];
            // Pop b when slope(a, b) <= slope(b, j); cross-multiplied with
            // positive widths to avoid the divisions.
            let lhs = (points[b].1 - points[a].1) * (points[j].0 - points[b].0);
            let rhs = (points[j].1 - points[b].1) * (points[b].0 - points[a].0);
            if rhs >= lhs {
                knots.pop();
            } else {
                break;
            }
        }
        knots.push(j);
    }

    let mut delta = vec![0.0; m];
    let mut cell_slopes = vec![0.0; m - 1];
    for seg in knots.windows(2) {
        let (a, b) = (seg[0], seg[1]);
        // One slope per hull segment keeps pooled values exactly constant
        // across the cells it covers.
        let s = (points[b].1 - points[a].1) / (points[b].0 - points[a].0);
        delta[a] = points[a].1;
        for j in a + 1..=b {
            delta[j] = points[a].1 + s * (points[j].0 - points[a].0);
        }
        for c in cell_slopes.iter_mut().take(b).skip(a) {
            *c = s;
        }
    }
    delta[m - 1] = points[m - 1].1;
    Ok(EnvelopeResult {
        points: points.to_vec(),
        delta,
        cell_slopes,
        hull_knots: knots,
    })
}

/// Output of the closed exponential route.
#[derive(Clone, Debug)]
pub struct ExponentialSolution {
    /// Multiplier back-solved from the budget level.
    pub lambda: f64,
    pub qbar: QuantileFunction,
    /// Tail marginal-utility sums, as in the isotonic solver.
    pub lambda_tail: Vec<f64>,
    pub slack: Vec<f64>,
    /// Constrained value: worst-coupling objective at qbar.
    pub value: f64,
    /// pair_reversed(qbar, kernel) - x; zero up to rounding by
    /// construction.
    pub budget_residual: f64,
    /// The closed route ignores the nonnegativity floor; set when the
    /// formula dips below zero, in which case the isotonic solver is the
    /// authority.
    pub floor_violated: bool,
    pub envelope: EnvelopeResult,
    pub weighting: WeightingFunction,
}

/// Solves the exponential-utility problem in closed form.
///
/// The budget level is fixed from grid moments, so the pairing identity
/// holds to rounding, and the multiplier follows from
/// ln(lambda) = ln(alpha) - alpha * C with C the budget-matching level.
pub fn solve_exponential(
    x: f64,
    claim: &QuantileFunction,
    kernel: &QuantileFunction,
    alpha: f64,
) -> Result<ExponentialSolution> {
    if !(x > 0.0) || !x.is_finite() {
        return Err(invalid!("initial wealth must be positive, got {x}"));
    }
    if !(alpha > 0.0) || !alpha.is_finite() {
        return Err(invalid!("risk aversion must be positive, got {alpha}"));
    }
    let (theta, rho) = node_inputs(claim, kernel)?;
    let g = claim.grid();
    let n = g.n();
    let h = g.step();

    let w = weighting_unchecked(claim, alpha);
    let points = envelope_input(&w, kernel)?;
    let envelope = concave_envelope(&points)?;

    let mut log_slopes = vec![0.0; n];
    for i in 0..n {
        let s = envelope.cell_slopes[i];
        if !(s > 0.0) || !s.is_finite() {
            return Err(numerical!(
                "envelope slope {s} at cell {i} leaves (0, inf); boundary-dominated hull"
            ));
        }
        log_slopes[i] = ln(s);
    }

    // Same index order as pair_reversed, so the budget cancels exactly.
    let mut erho = 0.0;
    let mut slope_cost = 0.0;
    for i in 0..n {
        erho += rho[i];
        slope_cost += log_slopes[i] * rho[i];
    }
    erho *= h;
    slope_cost *= h;
    let c_level = (x + slope_cost / alpha) / erho;
    let lambda = exp(ln(alpha) - alpha * c_level);

    let mut qv = vec![0.0; n];
    for i in 0..n {
        qv[i] = c_level - log_slopes[i] / alpha;
    }
    let floor_violated = qv[0] < 0.0;
    let at_zero = qv[0];
    let at_one = qv[n - 1];
    let qbar = QuantileFunction::from_values(g, qv.clone(), at_zero, at_one)?;

    let u = UtilityModel::exponential(alpha)?;
    let value = robust_objective(&qbar, claim, &u)?;
    let budget_residual = pair_reversed(&qbar, kernel)? - x;
    let (lambda_tail, slack) = tail_functions(&u, lambda, &qv, &theta, &rho, h);

    Ok(ExponentialSolution {
        lambda,
        qbar,
        lambda_tail,
        slack,
        value,
        budget_residual,
        floor_violated,
        envelope,
        weighting: w,
    })
}
