//! Worst-coupling objectives and the diagnostic checks that guard them.
//!
//! For concave u the map (x, y) -> u(x + y) is submodular, so among all joint
//! laws with fixed marginals the comonotone arrangement minimizes E[u(X + Y)].
//! The robust objective is therefore the aligned-node quadrature
//! `(1/n) sum_i u(Q_X(t_i) + Q_claim(t_i))`, and a brute-force coupling
//! oracle over small atom lists exists to keep that reduction honest.
//!
//! The module also houses:
//! * the Lagrangian objective of the budget-relaxed problem,
//! * a well-posedness sentinel that integrates the dual-candidate integrands
//!   against the lognormal kernel with a divergence test on dyadic tail
//!   windows,
//! * a tail-dominance check comparing the marginal utility of the claim's
//!   lower tail against the kernel quantile's upper tail, and
//! * the additive constants sandwiching the robust value between shifts of
//!   the classical value.

use alloc::vec::Vec;

use crate::claim::Claim;
use crate::error::{invalid, Result};
use crate::float::{abs, max, min};
use crate::grid::{pair_reversed, QuantileFunction};
use crate::market::KernelLaw;
use crate::normal;
use crate::utility::UtilityModel;

/// Worst-coupling expected utility `J_0(Q) = (1/n) sum u(Q(t_i) + Q_claim(t_i))`.
///
/// Fails when any node leaves the utility domain (u takes -inf there).
pub fn robust_objective(
    q: &QuantileFunction,
    claim: &QuantileFunction,
    u: &UtilityModel,
) -> Result<f64> {
    if q.grid() != claim.grid() {
        return Err(invalid!("wealth and claim quantiles use different grids"));
    }
    let mut acc = 0.0;
    for i in 0..q.grid().n() {
        let v = u.u(q.value(i) + claim.value(i));
        if v == f64::NEG_INFINITY {
            return Err(invalid!(
                "wealth + claim leaves the domain of {u} at node {i} (value {})",
                q.value(i) + claim.value(i)
            ));
        }
        acc += v;
    }
    Ok(acc * q.grid().step())
}

/// Plain expected utility `(1/n) sum u(Q(t_i))` of a sampled law.
pub fn expected_utility(q: &QuantileFunction, u: &UtilityModel) -> Result<f64> {
    let mut acc = 0.0;
    for i in 0..q.grid().n() {
        let v = u.u(q.value(i));
        if v == f64::NEG_INFINITY {
            return Err(invalid!("law leaves the domain of {u} at node {i}"));
        }
        acc += v;
    }
    Ok(acc * q.grid().step())
}

/// Exhaustive minimum of `E[u(X + Y_sigma)]` over all couplings of two
/// equal-weight atom lists.
#[derive(Clone, Debug)]
pub struct CouplingOracle {
    pub value: f64,
    /// Permutation sigma attaining the minimum: x_atoms[i] pairs with
    /// y_atoms[pairing[i]].
    pub pairing: Vec<usize>,
}

/// Enumerates every pairing (Heap's algorithm) of two equal-length uniform
/// atom lists and returns the minimizing arrangement. Limited to 8 atoms
/// (8! = 40320 pairings); for larger laws use `robust_objective`, whose
/// comonotone arrangement this oracle exists to validate.
pub fn min_coupling_oracle(
    x_atoms: &[f64],
    y_atoms: &[f64],
    u: &UtilityModel,
) -> Result<CouplingOracle> {
    let k = x_atoms.len();
    if k == 0 || k != y_atoms.len() {
        return Err(invalid!(
            "need matching nonempty atom lists, got {} and {}",
            k,
            y_atoms.len()
        ));
    }
    if k > 8 {
        return Err(invalid!("coupling oracle enumerates at most 8 atoms, got {k}"));
    }
    let mean_val = |perm: &[usize]| -> f64 {
        let mut acc = 0.0;
        for (i, &j) in perm.iter().enumerate() {
            acc += u.u(x_atoms[i] + y_atoms[j]);
        }
        acc / k as f64
    };

    let mut perm: Vec<usize> = (0..k).collect();
    let mut best = mean_val(&perm);
    let mut best_perm = perm.clone();
    // Heap's algorithm, iterative form.
    let mut c = alloc::vec![0usize; k];
    let mut i = 0;
    while i < k {
        if c[i] < i {
            if i % 2 == 0 {
                perm.swap(0, i);
            } else {
                perm.swap(c[i], i);
            }
            let v = mean_val(&perm);
            if v < best {
                best = v;
                best_perm.copy_from_slice(&perm);
            }
            c[i] += 1;
            i = 0;
        } else {
            c[i] = 0;
            i += 1;
        }
    }
    Ok(CouplingOracle {
        value: best,
        pairing: best_perm,
    })
}

/// Budget-relaxed objective
/// `(1/n) sum_i [u(Q(t_i) + Q_claim(t_i)) - lambda Q(t_i) Q_rho(1-t_i)]`.
pub fn lagrangian_objective(
    q: &QuantileFunction,
    claim: &QuantileFunction,
    kernel: &QuantileFunction,
    lambda: f64,
    u: &UtilityModel,
) -> Result<f64> {
    if !(lambda > 0.0) {
        return Err(invalid!("multiplier must be positive, got {lambda}"));
    }
    let j0 = robust_objective(q, claim, u)?;
    let cost = pair_reversed(q, kernel)?;
    Ok(j0 - lambda * cost)
}

/// Constants (C1, C2) with `E[u(X)] - C1 <= J_0(X) <= E[u(X)] + C2` for all
/// nonnegative X, hence the same sandwich between the robust and classical
/// value functions. Built from the claim's essential infimum and the grid
/// mean of u(max{claim, 0}); either constant may be +inf when the claim
/// pushes u outside its finite range.
pub fn sandwich_constants(claim: &QuantileFunction, u: &UtilityModel) -> (f64, f64) {
    let q0 = claim.ess_inf();
    let c1 = abs(u.u(1.0 + abs(q0))) + u.du(1.0) * abs(q0) + abs(u.u(q0));
    let mut pos_part = 0.0;
    for i in 0..claim.grid().n() {
        pos_part += u.u(max(claim.value(i), 0.0));
    }
    pos_part *= claim.grid().step();
    let c2 = pos_part - u.u(0.0);
    (c1, c2)
}

/// Outcome of an improper-integral evaluation. `value` is NaN when the
/// sentinel declared divergence.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct IntegralVerdict {
    pub finite: bool,
    pub value: f64,
}

impl IntegralVerdict {
    fn diverged() -> Self {
        IntegralVerdict {
            finite: false,
            value: f64::NAN,
        }
    }
}

/// Composite Simpson over [a, b] with 64 subintervals.
fn simpson(g: &impl Fn(f64) -> f64, a: f64, b: f64) -> f64 {
    const M: usize = 64;
    let h = (b - a) / M as f64;
    let mut acc = g(a) + g(b);
    for j in 1..M {
        let w = if j % 2 == 1 { 4.0 } else { 2.0 };
        acc += w * g(a + h * j as f64);
    }
    acc * h / 3.0
}

/// Improper Gaussian expectation `E[g(Z)]` with a dyadic-window divergence
/// sentinel: windows [z_{k-1}, z_k] with z_k the (1 - 2^{-k-1})-quantile are
/// integrated outward on both sides until two consecutive windows fall below
/// tolerance; failure to Cauchy-converge within 60 windows, or a non-finite
/// sample, is reported as divergence.
fn gaussian_improper(g: impl Fn(f64) -> f64) -> IntegralVerdict {
    let gp = |z: f64| g(z) * normal::pdf(z);
    let z1 = normal::quantile(0.75);
    let central = simpson(&gp, -z1, z1);
    if !central.is_finite() {
        return IntegralVerdict::diverged();
    }
    let mut total = central;
    for side in [1.0f64, -1.0] {
        let mut prev_edge = z1;
        let mut small_run = 0;
        let mut converged = false;
        for k in 2..=60u32 {
            let edge = normal::quantile(1.0 - libm::exp2(-(k as f64 + 1.0)));
            let (a, b) = if side > 0.0 {
                (prev_edge, edge)
            } else {
                (-edge, -prev_edge)
            };
            let w = simpson(&gp, a, b);
            if !w.is_finite() {
                return IntegralVerdict::diverged();
            }
            total += w;
            if abs(w) <= 1e-9 * (1.0 + abs(total)) {
                small_run += 1;
                if small_run >= 2 {
                    converged = true;
                    break;
                }
            } else {
                small_run = 0;
            }
            prev_edge = edge;
        }
        if !converged {
            return IntegralVerdict::diverged();
        }
    }
    IntegralVerdict {
        finite: true,
        value: total,
    }
}

/// Report of the dual-candidate integrability checks at a probe multiplier.
///
/// `utility_term` is E[u((u')^{-1}(lambda rho))], `budget_term` is
/// E[rho (u')^{-1}(lambda rho)], `dual_term` their lambda-combined integrand
/// E[u(..) - lambda rho (..)]. The problem is well-posed at this multiplier
/// when all three are finite. `lambda_lower_estimate` estimates the smallest
/// multiplier with finite integrals (0 when even tiny probes are finite,
/// +inf when no probe up to 1e6 is).
#[derive(Clone, Debug)]
pub struct WellposednessReport {
    pub lambda: f64,
    pub utility_term: IntegralVerdict,
    pub budget_term: IntegralVerdict,
    pub dual_term: IntegralVerdict,
    pub lambda_lower_estimate: f64,
}

impl WellposednessReport {
    /// Finiteness of both candidate integrals (existence of a usable
    /// multiplier at this probe) and of the combined dual integrand.
    pub fn well_posed(&self) -> bool {
        self.utility_term.finite && self.budget_term.finite && self.dual_term.finite
    }
}

fn dual_verdicts(
    u: &UtilityModel,
    law: &KernelLaw,
    lambda: f64,
) -> (IntegralVerdict, IntegralVerdict, IntegralVerdict) {
    let (m, s) = (law.log_mean(), law.log_sd());
    let rho = move |z: f64| crate::float::exp(m + s * z);
    let ut = gaussian_improper(|z| u.u(u.inv_du(lambda * rho(z))));
    let bt = gaussian_improper(|z| rho(z) * u.inv_du(lambda * rho(z)));
    let dt = gaussian_improper(|z| {
        let r = rho(z);
        let q = u.inv_du(lambda * r);
        u.u(q) - lambda * r * q
    });
    (ut, bt, dt)
}

/// Evaluates the dual-candidate integrals at `lambda` and estimates the lower
/// multiplier threshold below which they diverge.
pub fn wellposedness_check(u: &UtilityModel, law: &KernelLaw, lambda: f64) -> Result<WellposednessReport> {
    if !(lambda > 0.0) || !lambda.is_finite() {
        return Err(invalid!("probe multiplier must be positive, got {lambda}"));
    }
    let (utility_term, budget_term, dual_term) = dual_verdicts(u, law, lambda);

    let all_finite = |l: f64| {
        let (a, b, c) = dual_verdicts(u, law, l);
        a.finite && b.finite && c.finite
    };
    let probes = [1e-6, 1e-4, 1e-2, 1.0, 1e2, 1e4, 1e6];
    let mut lambda_lower_estimate = f64::INFINITY;
    let mut bad = None;
    for &p in &probes {
        if all_finite(p) {
            lambda_lower_estimate = match bad {
                // Even the smallest probe converges: no positive threshold
                // detected.
                None => 0.0,
                Some(lo) => {
                    // Bracket the threshold between the last divergent and
                    // first convergent probe, bisecting in log scale.
                    let (mut lo, mut hi) = (crate::float::ln(lo), crate::float::ln(p));
                    for _ in 0..24 {
                        let mid = 0.5 * (lo + hi);
                        if all_finite(crate::float::exp(mid)) {
                            hi = mid;
                        } else {
                            lo = mid;
                        }
                    }
                    crate::float::exp(hi)
                }
            };
            break;
        }
        bad = Some(p);
    }
    Ok(WellposednessReport {
        lambda,
        utility_term,
        budget_term,
        dual_term,
        lambda_lower_estimate,
    })
}

const RATIO_TOLERANCE: f64 = 1.0;

/// Tail comparison between the claim's marginal utility and the kernel
/// quantile, evaluated on t = 2^-k for k = 4..=20.
#[derive(Clone, Debug)]
pub struct TailDominanceReport {
    /// Short-circuit: u'(claim ess-inf) finite and the kernel unbounded, a
    /// sufficient condition needing no ratio scan.
    pub sufficient: bool,
    /// (t, u'(Q_claim(t)) / Q_rho(1-t)) along the probe sequence.
    pub ratios: Vec<(f64, f64)>,
    /// Ratios nonincreasing along the scan (slack 1e-9 relative).
    pub decay_ok: bool,
    pub final_ratio: f64,
    pub ratio_tolerance: f64,
    /// E[u'(claim)] by dyadic-window quadrature near t = 0.
    pub marginal_utility_mean: IntegralVerdict,
}

impl TailDominanceReport {
    pub fn satisfied(&self) -> bool {
        self.sufficient
            || (self.decay_ok
                && self.final_ratio <= self.ratio_tolerance
                && self.marginal_utility_mean.finite)
    }
}

/// Checks that the kernel's upper quantile tail dominates the claim's
/// marginal utility in the lower tail, and that E[u'(claim)] is finite.
///
/// The decay of the ratio is logarithmically slow for heavy claims, so the
/// gate is monotone decay plus a final ratio at t = 2^-20 below 1; the
/// short-circuit covers the common bounded-marginal-utility case exactly.
pub fn check_tail_dominance(claim: &Claim, u: &UtilityModel, law: &KernelLaw) -> TailDominanceReport {
    let sufficient = u.du(claim.ess_inf()).is_finite();

    let mut ratios = Vec::with_capacity(17);
    let mut decay_ok = true;
    let mut prev = f64::INFINITY;
    for k in 4..=20u32 {
        let t = libm::exp2(-(k as f64));
        let r = u.du(claim.quantile_at(t)) / law.quantile(1.0 - t);
        if r > prev * (1.0 + 1e-9) {
            decay_ok = false;
        }
        prev = r;
        ratios.push((t, r));
    }
    let final_ratio = ratios[ratios.len() - 1].1;

    // E[u'(claim)]: the integrand du(Q(t)) decreases in t, so only the left
    // end needs dyadic refinement; [1/2, 1] is one Simpson pass.
    let marginal_utility_mean = marginal_utility_integral(claim, u);

    TailDominanceReport {
        sufficient,
        ratios,
        decay_ok,
        final_ratio,
        ratio_tolerance: RATIO_TOLERANCE,
        marginal_utility_mean,
    }
}

/// Composite midpoint over [a, b] with 256 cells. Atom claims jump at
/// rational t; the midpoint rule never samples cell or window edges, so a
/// jump sitting on a dyadic window boundary costs nothing.
fn midpoint(g: &impl Fn(f64) -> f64, a: f64, b: f64) -> f64 {
    const M: usize = 256;
    let h = (b - a) / M as f64;
    let mut acc = 0.0;
    for j in 0..M {
        acc += g(a + h * (j as f64 + 0.5));
    }
    acc * h
}

fn marginal_utility_integral(claim: &Claim, u: &UtilityModel) -> IntegralVerdict {
    let g = |t: f64| u.du(claim.quantile_at(t));
    let mut total = midpoint(&g, 0.5, 1.0);
    if !total.is_finite() {
        return IntegralVerdict::diverged();
    }
    let mut hi = 0.5;
    let mut small_run = 0;
    for k in 2..=60u32 {
        let lo = libm::exp2(-(k as f64));
        let w = midpoint(&g, lo, hi);
        if !w.is_finite() {
            return IntegralVerdict::diverged();
        }
        total += w;
        if abs(w) <= 1e-9 * (1.0 + abs(total)) {
            small_run += 1;
            if small_run >= 2 {
                // du(Q(t)) decreases in t, so on (0, lo) the integrand sits
                // between g(lo) and du(ess_inf); the trapezoid of the two
                // bounds the remainder to within lo * (edge - g(lo)) / 2.
                let edge = u.du(claim.ess_inf());
                if edge.is_finite() {
                    total += lo * 0.5 * (edge + g(lo));
                }
                return IntegralVerdict {
                    finite: true,
                    value: total,
                };
            }
        } else {
            small_run = 0;
        }
        hi = lo;
    }
    // Ran out of windows. If the integrand is bounded the remaining mass is
    // negligible and the integral is finite regardless of Cauchy noise.
    if u.du(claim.ess_inf()).is_finite() {
        IntegralVerdict {
            finite: true,
            value: total,
        }
    } else {
        IntegralVerdict::diverged()
    }
}

/// Largest nodewise gap between two quantile functions on a shared grid.
pub fn sup_distance(a: &QuantileFunction, b: &QuantileFunction) -> Result<f64> {
    if a.grid() != b.grid() {
        return Err(invalid!("sup distance needs a shared grid"));
    }
    let mut worst = 0.0;
    for i in 0..a.grid().n() {
        worst = max(worst, abs(a.value(i) - b.value(i)));
    }
    Ok(worst)
}

/// Smallest nodewise gap `b - a`; negative when `a` exceeds `b` somewhere.
pub fn min_gap(a: &QuantileFunction, b: &QuantileFunction) -> Result<f64> {
    if a.grid() != b.grid() {
        return Err(invalid!("gap needs a shared grid"));
    }
    let mut worst = f64::INFINITY;
    for i in 0..a.grid().n() {
        worst = min(worst, b.value(i) - a.value(i));
    }
    Ok(worst)
}
