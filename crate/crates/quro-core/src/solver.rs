//! Isotonic solver for the budget-relaxed quantile program.
//!
//! For a fixed multiplier lambda the problem
//!
//! ```text
//!   maximize (1/n) sum_i [u(q_i + theta_i) - lambda q_i rho_i]
//!   over     0 <= q_1 <= ... <= q_n,
//! ```
//!
//! with theta_i the claim quantile at node i and rho_i the kernel quantile at
//! the reflected node, is a separable strictly concave program over the
//! isotonic cone. Pool-adjacent-violators with exact block solves is its
//! canonical algorithm: start from the clipped pointwise maximizers, merge a
//! block into its left neighbour whenever the neighbour's solution is not
//! strictly smaller, and re-solve each pooled block's one-dimensional
//! first-order condition. The merged solution always lies between the two
//! solutions it replaces, which gives every block solve a hard bracket.
//!
//! Exponential utility admits a closed-form block solution driven by two
//! additive per-block sums, so that entire path is Newton-free.
//!
//! `calibrate` wraps the fixed-lambda solver in a bisection on ln(lambda)
//! against the budget, which is non-increasing in lambda.

use alloc::vec;
use alloc::vec::Vec;

use rand_core::RngCore;

use crate::error::{ill_posed, invalid, numerical, Result};
use crate::float::{abs, exp, ln, max};
use crate::grid::{pair_reversed, QuantileFunction};
use crate::market::{path_rng, unit_open, KernelLaw};
use crate::preference::{wellposedness_check, WellposednessReport};
use crate::utility::UtilityModel;

/// Solution of the fixed-multiplier program on a grid.
#[derive(Clone, Debug)]
pub struct LagrangianSolution {
    pub lambda: f64,
    /// Optimal wealth quantile, flat across pooled blocks.
    pub qbar: QuantileFunction,
    /// Tail marginal-utility sums (1/n) sum_{j>=i} u'(q_j + theta_j).
    pub lambda_tail: Vec<f64>,
    /// Slack lambda (1/n) sum_{j>=i} rho_j - lambda_tail[i]; the discrete
    /// multiplier of the monotonicity constraint entering node i.
    pub slack: Vec<f64>,
    /// Objective value at the solution.
    pub value: f64,
    /// Number of block merges performed by the pooling scan.
    pub merges: usize,
}

/// Calibrated solution meeting the budget.
#[derive(Clone, Debug)]
pub struct RobustSolution {
    pub lambda_star: f64,
    /// Fixed-multiplier solution at `lambda_star`.
    pub lagrangian: LagrangianSolution,
    /// Constrained value: lagrangian.value + lambda_star * x.
    pub value: f64,
    /// Signed budget gap pair_reversed(qbar, kernel) - x.
    pub budget_residual: f64,
    /// Dual-integrability diagnosis at lambda_star.
    pub wellposed: WellposednessReport,
}

impl RobustSolution {
    pub fn qbar(&self) -> &QuantileFunction {
        &self.lagrangian.qbar
    }
}

struct Block {
    lo: usize,
    hi: usize,
    q: f64,
    sum_rho: f64,
    /// sum of exp(-alpha theta_i); only maintained for exponential utility.
    sum_exp: f64,
}

/// Mean first-order condition residual of a block at height q.
fn block_residual(u: &UtilityModel, theta: &[f64], q: f64, target: f64) -> f64 {
    let mut s = 0.0;
    for &th in theta {
        s += u.du(q + th);
    }
    s / theta.len() as f64 - target
}

/// Root of the decreasing block equation mean u'(q + theta_i) = target on
/// the bracket [a, b] inherited from the two solutions being pooled;
/// safeguarded Newton with bisection fallback.
///
/// Tolerance is 1e-12 on the mean-form equation, scaled up when the dual
/// weight exceeds unity (the floating-point noise floor of the sum grows
/// with the terms).
fn solve_block_generic(
    u: &UtilityModel,
    theta: &[f64],
    target: f64,
    mut a: f64,
    mut b: f64,
) -> Result<f64> {
    let tol = 1e-12 * max(1.0, target);
    let fb = block_residual(u, theta, b, target);
    if fb >= -tol {
        return Ok(b);
    }
    let fa = block_residual(u, theta, a, target);
    if fa <= tol {
        // Covers the floor clip a = 0 and bracket-edge roundoff alike.
        return Ok(a);
    }
    let mut q = 0.5 * (a + b);
    for _ in 0..200 {
        let fq = block_residual(u, theta, q, target);
        if fq.is_finite() && abs(fq) <= tol {
            return Ok(q);
        }
        // u' blows up at the domain edge; treat a non-finite residual as
        // "root lies above" and keep bisecting.
        if !fq.is_finite() || fq > 0.0 {
            a = q;
        } else {
            b = q;
        }
        let mut next = f64::NAN;
        if fq.is_finite() {
            let mut d = 0.0;
            for &th in theta {
                d += u.d2u(q + th);
            }
            d /= theta.len() as f64;
            if d.is_finite() && d < 0.0 {
                let cand = q - fq / d;
                if cand > a && cand < b {
                    next = cand;
                }
            }
        }
        q = if next.is_finite() { next } else { 0.5 * (a + b) };
        if b - a <= f64::EPSILON * (abs(a) + abs(b)) {
            let fq = block_residual(u, theta, q, target);
            if abs(fq) <= tol {
                return Ok(q);
            }
            break;
        }
    }
    Err(numerical!(
        "block first-order solve did not converge (target {target}, bracket [{a}, {b}])"
    ))
}

fn solve_block(
    u: &UtilityModel,
    lambda: f64,
    theta: &[f64],
    blk: &Block,
    bracket: (f64, f64),
) -> Result<f64> {
    if let UtilityModel::Exponential { alpha } = *u {
        // alpha e^{-alpha q} sum_exp = lambda sum_rho, clipped at the floor.
        let raw = (ln(alpha) + ln(blk.sum_exp) - ln(lambda) - ln(blk.sum_rho)) / alpha;
        return Ok(max(0.0, raw));
    }
    let k = blk.hi - blk.lo + 1;
    let target = lambda * blk.sum_rho / k as f64;
    solve_block_generic(u, &theta[blk.lo..=blk.hi], target, bracket.0, bracket.1)
}

/// Backward cumulative tail sums: lambda_tail and slack at every node.
pub(crate) fn tail_functions(
    u: &UtilityModel,
    lambda: f64,
    qv: &[f64],
    theta: &[f64],
    rho: &[f64],
    h: f64,
) -> (Vec<f64>, Vec<f64>) {
    let n = qv.len();
    let mut lambda_tail = vec![0.0; n];
    let mut slack = vec![0.0; n];
    let mut du_acc = 0.0;
    let mut rho_acc = 0.0;
    for i in (0..n).rev() {
        du_acc += u.du(qv[i] + theta[i]);
        rho_acc += rho[i];
        lambda_tail[i] = h * du_acc;
        slack[i] = lambda * h * rho_acc - lambda_tail[i];
    }
    (lambda_tail, slack)
}

pub(crate) fn node_inputs(
    claim: &QuantileFunction,
    kernel: &QuantileFunction,
) -> Result<(Vec<f64>, Vec<f64>)> {
    if claim.grid() != kernel.grid() {
        return Err(invalid!("claim and kernel quantiles use different grids"));
    }
    // Node values drive the dual weights; the kernel's at-zero limit may be
    // 0 (lognormal) without harm.
    if !(kernel.value(0) > 0.0) {
        return Err(invalid!("pricing-kernel quantile must be strictly positive"));
    }
    let n = claim.grid().n();
    let theta: Vec<f64> = (0..n).map(|i| claim.value(i)).collect();
    let rho: Vec<f64> = (0..n).map(|i| kernel.value_reversed(i)).collect();
    Ok((theta, rho))
}

/// Solves the fixed-multiplier program by pool-adjacent-violators.
///
/// Callers concerned with the continuum problem's integrability should run
/// `wellposedness_check` beside this; on a finite grid the program is always
/// solvable, and divergence of the underlying integrals shows up as grid
/// dependence rather than failure here.
pub fn solve_lagrangian(
    lambda: f64,
    claim: &QuantileFunction,
    kernel: &QuantileFunction,
    u: &UtilityModel,
) -> Result<LagrangianSolution> {
    if !(lambda > 0.0) || !lambda.is_finite() {
        return Err(invalid!("multiplier must be positive and finite, got {lambda}"));
    }
    let (theta, rho) = node_inputs(claim, kernel)?;
    let g = claim.grid();
    let n = g.n();
    let alpha_opt = match *u {
        UtilityModel::Exponential { alpha } => Some(alpha),
        _ => None,
    };

    let mut blocks: Vec<Block> = Vec::new();
    let mut merges = 0usize;
    for i in 0..n {
        let raw = u.inv_du(lambda * rho[i]) - theta[i];
        let mut blk = Block {
            lo: i,
            hi: i,
            q: max(0.0, raw),
            sum_rho: rho[i],
            sum_exp: alpha_opt.map_or(0.0, |a| exp(-a * theta[i])),
        };
        while let Some(prev) = blocks.last() {
            if prev.q < blk.q {
                break;
            }
            let prev = blocks.pop().expect("nonempty stack");
            merges += 1;
            let merged = Block {
                lo: prev.lo,
                hi: blk.hi,
                q: 0.0,
                sum_rho: prev.sum_rho + blk.sum_rho,
                sum_exp: prev.sum_exp + blk.sum_exp,
            };
            let q = solve_block(u, lambda, &theta, &merged, (blk.q, prev.q))?;
            blk = Block { q, ..merged };
        }
        blocks.push(blk);
    }

    let mut qv = vec![0.0; n];
    for b in &blocks {
        for v in &mut qv[b.lo..=b.hi] {
            *v = b.q;
        }
    }

    let h = g.step();
    let mut value = 0.0;
    for i in 0..n {
        let w = u.u(qv[i] + theta[i]);
        if !w.is_finite() {
            return Err(numerical!(
                "objective not finite at node {i} (wealth {} claim {})",
                qv[i],
                theta[i]
            ));
        }
        value += w - lambda * qv[i] * rho[i];
    }
    value *= h;

    let (lambda_tail, slack) = tail_functions(u, lambda, &qv, &theta, &rho, h);
    let at_zero = qv[0];
    let at_one = qv[n - 1];
    let qbar = QuantileFunction::from_values(g, qv, at_zero, at_one)?;
    Ok(LagrangianSolution {
        lambda,
        qbar,
        lambda_tail,
        slack,
        value,
        merges,
    })
}

/// One gated check of the optimality report.
#[derive(Clone, Copy, Debug)]
pub struct CheckOutcome {
    pub pass: bool,
    /// Extremal statistic of the check (minimum slack, worst pairing
    /// magnitude, largest directional derivative, ...).
    pub worst: f64,
    /// Node (or candidate index, for the directional check) attaining it.
    pub node: usize,
}

/// Discrete optimality conditions recomputed from a candidate quantile.
#[derive(Clone, Debug)]
pub struct ComplementarityReport {
    pub tol: f64,
    /// slack >= -tol at every node.
    pub nonneg_slack: CheckOutcome,
    /// |slack| <= tol at the last node.
    pub terminal_slack: CheckOutcome,
    /// lambda_tail <= tol at the last node.
    pub terminal_tail: CheckOutcome,
    /// |min{jump into node i, slack_i}| <= tol, with the floor constraint
    /// q_0 >= 0 playing the role of the jump at the first node.
    pub pairing: CheckOutcome,
    /// Directional derivative toward random monotone candidates <= tol.
    pub directional: CheckOutcome,
    /// |u'(q_0 + theta_0) - u'(theta at the left edge)|: how far the first
    /// node sits from the zero boundary in marginal-utility scale. Purely
    /// informational (its decay rate depends on the claim's modulus of
    /// continuity); None when the edge marginal utility is infinite.
    pub boundary_gap: Option<f64>,
}

impl ComplementarityReport {
    pub fn pass(&self) -> bool {
        self.nonneg_slack.pass
            && self.terminal_slack.pass
            && self.terminal_tail.pass
            && self.pairing.pass
            && self.directional.pass
    }
}

impl core::fmt::Display for ComplementarityReport {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        if self.pass() {
            return write!(f, "optimality conditions hold at tol {:.3e}", self.tol);
        }
        let mut sep = "";
        let mut item = |f: &mut core::fmt::Formatter<'_>,
                        name: &str,
                        c: &CheckOutcome|
         -> core::fmt::Result {
            if !c.pass {
                write!(f, "{sep}{name} violated at node {} ({:.6e})", c.node, c.worst)?;
                sep = "; ";
            }
            Ok(())
        };
        item(f, "slack nonnegativity", &self.nonneg_slack)?;
        item(f, "terminal slack", &self.terminal_slack)?;
        item(f, "terminal tail", &self.terminal_tail)?;
        item(f, "jump/slack complementarity", &self.pairing)?;
        item(f, "directional optimality", &self.directional)?;
        Ok(())
    }
}

/// Recomputes the tail functions from a candidate quantile and gates the
/// discrete optimality conditions at `tol`. The directional test draws 100
/// monotone nonnegative candidates from `seed`.
pub fn verify_complementarity(
    qbar: &QuantileFunction,
    claim: &QuantileFunction,
    kernel: &QuantileFunction,
    lambda: f64,
    u: &UtilityModel,
    tol: f64,
    seed: u64,
) -> Result<ComplementarityReport> {
    if qbar.grid() != claim.grid() {
        return Err(invalid!("candidate and claim quantiles use different grids"));
    }
    if !(tol > 0.0) {
        return Err(invalid!("tolerance must be positive, got {tol}"));
    }
    let (theta, rho) = node_inputs(claim, kernel)?;
    let g = claim.grid();
    let n = g.n();
    let h = g.step();
    let qv: Vec<f64> = (0..n).map(|i| qbar.value(i)).collect();
    let (lambda_tail, slack) = tail_functions(u, lambda, &qv, &theta, &rho, h);

    let mut min_slack = f64::INFINITY;
    let mut min_node = 0;
    for (i, &s) in slack.iter().enumerate() {
        if s < min_slack {
            min_slack = s;
            min_node = i;
        }
    }
    let nonneg_slack = CheckOutcome {
        pass: min_slack >= -tol,
        worst: min_slack,
        node: min_node,
    };
    let terminal_slack = CheckOutcome {
        pass: abs(slack[n - 1]) <= tol,
        worst: slack[n - 1],
        node: n - 1,
    };
    let terminal_tail = CheckOutcome {
        pass: lambda_tail[n - 1] <= tol,
        worst: lambda_tail[n - 1],
        node: n - 1,
    };

    let mut worst_pair = 0.0;
    let mut pair_node = 0;
    for i in 0..n {
        let jump = if i == 0 { qv[0] } else { qv[i] - qv[i - 1] };
        let m = abs(crate::float::min(jump, slack[i]));
        if m > worst_pair {
            worst_pair = m;
            pair_node = i;
        }
    }
    let pairing = CheckOutcome {
        pass: worst_pair <= tol,
        worst: worst_pair,
        node: pair_node,
    };

    // Directional optimality toward random monotone candidates. At an exact
    // solution, summation by parts turns the derivative into
    // -sum_i slack_i * (candidate jump at i) <= 0, so any positive value
    // beyond tolerance flags suboptimality.
    let grad: Vec<f64> = (0..n)
        .map(|i| u.du(qv[i] + theta[i]) - lambda * rho[i])
        .collect();
    let scale = max(1.0, qbar.ess_sup());
    let mut worst_dir = f64::NEG_INFINITY;
    let mut dir_idx = 0;
    for k in 0..100u64 {
        let mut rng = path_rng(seed, k);
        let mut c = scale * unit_open(rng.next_u64());
        let mut d = 0.0;
        for i in 0..n {
            d += grad[i] * (c - qv[i]);
            c += 2.0 * scale * h * unit_open(rng.next_u64());
        }
        d *= h;
        if d > worst_dir {
            worst_dir = d;
            dir_idx = k as usize;
        }
    }
    let directional = CheckOutcome {
        pass: worst_dir <= tol,
        worst: worst_dir,
        node: dir_idx,
    };

    let edge_du = u.du(claim.value(0));
    let boundary_gap = if edge_du.is_finite() {
        Some(abs(u.du(qv[0] + theta[0]) - edge_du))
    } else {
        None
    };

    Ok(ComplementarityReport {
        tol,
        nonneg_slack,
        terminal_slack,
        terminal_tail,
        pairing,
        directional,
        boundary_gap,
    })
}

/// Calibration controls. `budget_tol` is relative to the initial wealth and
/// is the returned-solution contract; the bisection itself refines further
/// (to 1e-11 relative) so downstream identities hold at 1e-8.
#[derive(Clone, Copy, Debug)]
pub struct CalibrateOptions {
    pub budget_tol: f64,
    pub lambda_hint: Option<f64>,
    pub max_doublings: u32,
    /// Gate on the dual-integrability diagnosis at the calibrated
    /// multiplier; when false the report is still attached, just not
    /// enforced.
    pub check_wellposedness: bool,
}

impl Default for CalibrateOptions {
    fn default() -> Self {
        CalibrateOptions {
            budget_tol: 1e-8,
            lambda_hint: None,
            max_doublings: 60,
            check_wellposedness: true,
        }
    }
}

/// Finds the multiplier matching the budget and assembles the constrained
/// solution, using that the budget is non-increasing in the multiplier.
pub fn calibrate(
    x: f64,
    claim: &QuantileFunction,
    kernel: &QuantileFunction,
    u: &UtilityModel,
    law: &KernelLaw,
    opts: &CalibrateOptions,
) -> Result<RobustSolution> {
    if !(x > 0.0) || !x.is_finite() {
        return Err(invalid!("initial wealth must be positive, got {x}"));
    }
    if !(opts.budget_tol > 0.0) {
        return Err(invalid!("budget tolerance must be positive"));
    }
    let target = crate::float::min(opts.budget_tol, 1e-11) * x;

    let mut best: Option<(f64, LagrangianSolution, f64)> = None;
    let budget_at = |lambda: f64,
                     best: &mut Option<(f64, LagrangianSolution, f64)>|
     -> Result<f64> {
        let sol = solve_lagrangian(lambda, claim, kernel, u)?;
        let b = pair_reversed(&sol.qbar, kernel)?;
        let resid = b - x;
        if best.as_ref().map_or(true, |(_, _, r)| abs(resid) < abs(*r)) {
            *best = Some((lambda, sol, resid));
        }
        Ok(b)
    };

    // Geometric bracket: budget(lo) >= x >= budget(hi).
    let start = opts.lambda_hint.unwrap_or(1.0);
    let b0 = budget_at(start, &mut best)?;
    let (mut lo, mut hi) = (start, start);
    if b0 > x {
        let mut k = 0;
        loop {
            hi *= 2.0;
            if budget_at(hi, &mut best)? <= x {
                lo = hi / 2.0;
                break;
            }
            k += 1;
            if k >= opts.max_doublings {
                return Err(ill_posed!(
                    "no Lagrange multiplier found: budget stays above {x} up to multiplier {hi}"
                ));
            }
        }
    } else if b0 < x {
        let mut k = 0;
        loop {
            lo /= 2.0;
            if budget_at(lo, &mut best)? >= x {
                hi = lo * 2.0;
                break;
            }
            k += 1;
            if k >= opts.max_doublings {
                return Err(ill_posed!(
                    "no Lagrange multiplier found: budget stays below {x} down to multiplier {lo}"
                ));
            }
        }
    }

    if abs(best.as_ref().expect("probed").2) > target {
        let (mut llo, mut lhi) = (ln(lo), ln(hi));
        for _ in 0..200 {
            if lhi - llo <= 1e-15 {
                break;
            }
            let mid = exp(0.5 * (llo + lhi));
            let b = budget_at(mid, &mut best)?;
            if abs(b - x) <= target {
                break;
            }
            if b > x {
                llo = ln(mid);
            } else {
                lhi = ln(mid);
            }
        }
    }

    let (lambda_star, lagrangian, budget_residual) = best.expect("probed");
    if abs(budget_residual) > opts.budget_tol * x {
        return Err(numerical!(
            "budget calibration stalled: residual {budget_residual} at multiplier {lambda_star}"
        ));
    }
    let wellposed = wellposedness_check(u, law, lambda_star)?;
    if opts.check_wellposedness && !wellposed.well_posed() {
        return Err(ill_posed!(
            "dual integrals diverge at the calibrated multiplier {lambda_star} \
             (lower threshold estimate {})",
            wellposed.lambda_lower_estimate
        ));
    }
    let value = lagrangian.value + lambda_star * x;
    Ok(RobustSolution {
        lambda_star,
        lagrangian,
        value,
        budget_residual,
        wellposed,
    })
}
