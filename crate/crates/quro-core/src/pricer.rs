//! Classical value, robust value as a function of wealth, and the
//! utility-indifference price of the claim.
//!
//! The buyer's price p solves V_EU(x) = V0(x - p): paying p and holding the
//! claim must match the claim-free optimum. V0 is strictly increasing and
//! continuous in wealth, so the root is unique and bracketable; as wealth
//! falls to zero the robust value drops to the claim's certainty value
//! E[u(claim)], which makes V_EU(x) >= E[u(claim)] the existence condition.
//! Every V0 evaluation reuses the sampled quantiles and threads the previous
//! multiplier as a warm start; only the budget recalibration repeats per
//! probe.

use alloc::format;
use alloc::string::String;

use crate::error::{invalid, numerical, Result};
use crate::float::abs;
use crate::grid::{Grid, QuantileFunction};
use crate::market::KernelLaw;
use crate::solver::{calibrate, CalibrateOptions};
use crate::utility::UtilityModel;

/// Relative tolerance on |V_EU(x) - V0(x - p)| at return.
const PRICE_RTOL: f64 = 1e-8;

/// Cap on bracket halvings/doublings and on bisection iterations.
const MAX_BRACKET_STEPS: u32 = 60;
const MAX_BISECTIONS: u32 = 200;

/// Outcome of the indifference-price computation.
#[derive(Clone, Debug)]
pub struct PriceResult {
    /// Indifference price; NaN when no price exists.
    pub price: f64,
    /// Claim-free optimal value V_EU(x).
    pub value_classical: f64,
    /// Robust value V0(x - price) at the matched wealth; the claim's
    /// certainty value E[u(claim)] when no interior match exists.
    pub value_robust: f64,
    /// |value_classical - value_robust| at return.
    pub residual: f64,
    pub exists: bool,
    /// True when the matched wealth collapsed to zero, i.e. price = x.
    pub boundary: bool,
    /// Explanation for a missing price or a boundary hit.
    pub reason: Option<String>,
}

/// Claim-free optimal expected utility at initial wealth `x`.
///
/// Runs the same calibration as the robust solver with a zero claim, so the
/// reduction identity V_EU = V0(claim = 0) holds bit for bit.
pub fn classical_value(x: f64, u: &UtilityModel, law: &KernelLaw, grid: Grid) -> Result<f64> {
    let kernel = law.sample_quantile(grid)?;
    let zero = QuantileFunction::constant(grid, 0.0)?;
    let sol = calibrate(x, &zero, &kernel, u, law, &CalibrateOptions::default())?;
    Ok(sol.value)
}

/// Utility-indifference price of the claim: the p with
/// V_EU(x) = V0(x - p), found by bisection on the matched wealth.
///
/// The price is negative for claims the buyer would pay to avoid. The
/// boundary case where the matched wealth is exactly zero (the classical
/// value equals the claim's certainty value) is reported with `boundary`
/// set and p = x rather than as a failure.
pub fn indifference_price(
    x: f64,
    claim: &QuantileFunction,
    u: &UtilityModel,
    law: &KernelLaw,
    grid: Grid,
) -> Result<PriceResult> {
    if !(x > 0.0) || !x.is_finite() {
        return Err(invalid!("initial wealth must be positive, got {x}"));
    }
    if claim.grid() != grid {
        return Err(invalid!(
            "claim sampled on a {}-cell grid, expected {}",
            claim.grid().n(),
            grid.n()
        ));
    }
    let kernel = law.sample_quantile(grid)?;
    let zero = QuantileFunction::constant(grid, 0.0)?;
    let classical = calibrate(x, &zero, &kernel, u, law, &CalibrateOptions::default())?;
    let target = classical.value;
    let tol = PRICE_RTOL * abs(target);

    // Certainty value of holding only the claim; the infimum of V0 as
    // wealth vanishes, under the same node quadrature used everywhere else.
    let certainty = claim.integrate(|v| u.u(v));

    if target < certainty - tol {
        return Ok(PriceResult {
            price: f64::NAN,
            value_classical: target,
            value_robust: certainty,
            residual: abs(target - certainty),
            exists: false,
            boundary: false,
            reason: Some(format!(
                "no price: claim-free value {target:.6e} is below the claim's certainty value {certainty:.6e}"
            )),
        });
    }
    if abs(target - certainty) <= tol {
        return Ok(PriceResult {
            price: x,
            value_classical: target,
            value_robust: certainty,
            residual: abs(target - certainty),
            exists: true,
            boundary: true,
            reason: Some(String::from(
                "matched wealth is zero: the claim-free value equals the claim's certainty value",
            )),
        });
    }

    let mut hint: Option<f64> = Some(classical.lambda_star);
    let value_at = |w: f64, hint: &mut Option<f64>| -> Result<f64> {
        let opts = CalibrateOptions {
            lambda_hint: *hint,
            ..CalibrateOptions::default()
        };
        let sol = calibrate(w, claim, &kernel, u, law, &opts)?;
        *hint = Some(sol.lambda_star);
        Ok(sol.value)
    };

    // Bracket the matched wealth w with V0(lo) <= target <= V0(hi); V0 is
    // strictly increasing in wealth.
    let v_x = value_at(x, &mut hint)?;
    if abs(v_x - target) <= tol {
        // Covers claim = 0 exactly: identical problems, identical value.
        return Ok(PriceResult {
            price: 0.0,
            value_classical: target,
            value_robust: v_x,
            residual: abs(v_x - target),
            exists: true,
            boundary: false,
            reason: None,
        });
    }
    let (mut lo, mut hi, mut v_lo, mut v_hi);
    if v_x > target {
        hi = x;
        v_hi = v_x;
        lo = x;
        v_lo = v_x;
        let mut ok = false;
        for _ in 0..MAX_BRACKET_STEPS {
            lo *= 0.5;
            v_lo = value_at(lo, &mut hint)?;
            if v_lo <= target {
                ok = true;
                break;
            }
        }
        if !ok {
            // The matched wealth sits below x * 2^-60; indistinguishable
            // from the boundary at this precision.
            return Ok(PriceResult {
                price: x - lo,
                value_classical: target,
                value_robust: v_lo,
                residual: abs(v_lo - target),
                exists: true,
                boundary: true,
                reason: Some(format!(
                    "matched wealth below {lo:.3e}; reporting the boundary price"
                )),
            });
        }
    } else {
        lo = x;
        v_lo = v_x;
        hi = x;
        v_hi = v_x;
        let mut ok = false;
        for _ in 0..MAX_BRACKET_STEPS {
            hi *= 2.0;
            v_hi = value_at(hi, &mut hint)?;
            if v_hi >= target {
                ok = true;
                break;
            }
        }
        if !ok {
            return Err(numerical!(
                "wealth expansion cap reached at {hi:.3e} with value {v_hi:.6e} still below {target:.6e}"
            ));
        }
    }

    // Bisect to the function-value tolerance, keeping the best iterate.
    let mut best_w;
    let mut best_v;
    if abs(v_lo - target) <= abs(v_hi - target) {
        best_w = lo;
        best_v = v_lo;
    } else {
        best_w = hi;
        best_v = v_hi;
    }
    for _ in 0..MAX_BISECTIONS {
        if abs(best_v - target) <= tol {
            break;
        }
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let v_mid = value_at(mid, &mut hint)?;
        if abs(v_mid - target) < abs(best_v - target) {
            best_w = mid;
            best_v = v_mid;
        }
        if v_mid < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let residual = abs(best_v - target);
    if residual > tol {
        return Err(numerical!(
            "price bisection stalled: residual {residual:.3e} above tolerance {tol:.3e}"
        ));
    }

    Ok(PriceResult {
        price: x - best_w,
        value_classical: target,
        value_robust: best_v,
        residual,
        exists: true,
        boundary: false,
        reason: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::float::{exp, ln};
    use crate::market::MarketSpec;

    fn reference_market() -> MarketSpec {
        MarketSpec::constant(1.0, 0.03, 0.25, 0.2).unwrap()
    }

    /// E[rho] for the reference market, e^{-0.03}.
    const DISCOUNT: f64 = 0.9704455335485082;

    fn setup(n: usize) -> (Grid, KernelLaw, UtilityModel) {
        (
            Grid::new(n).unwrap(),
            reference_market().kernel_law(),
            UtilityModel::exponential(1.0).unwrap(),
        )
    }

    #[test]
    fn classical_value_matches_moment_algebra() {
        let (g, law, u) = setup(4096);
        let v = classical_value(1.0, &u, &law, g).unwrap();

        // Closed-form exponential optimum evaluated with the grid's own
        // kernel moments: V = -e^{-C} E[rho], C = (x + E[rho ln rho])/E[rho].
        let kernel = law.sample_quantile(g).unwrap();
        let erho = kernel.integrate(|v| v);
        let erholn = kernel.integrate(|v| v * ln(v));
        let c = (1.0 + erholn) / erho;
        let oracle = -exp(-c) * erho;
        assert!(
            abs(v - oracle) < 1e-6 * abs(oracle),
            "value {v} vs oracle {oracle}"
        );

        // Strict monotonicity in wealth.
        let v2 = classical_value(2.0, &u, &law, g).unwrap();
        assert!(v2 > v);
    }

    #[test]
    fn classical_value_is_the_zero_claim_reduction() {
        let (g, law, u) = setup(512);
        let v = classical_value(1.0, &u, &law, g).unwrap();
        let kernel = law.sample_quantile(g).unwrap();
        let zero = QuantileFunction::constant(g, 0.0).unwrap();
        let sol = calibrate(1.0, &zero, &kernel, &u, &law, &CalibrateOptions::default()).unwrap();
        assert_eq!(v, sol.value);
    }

    #[test]
    fn zero_claim_prices_at_zero_exactly() {
        let (g, law, u) = setup(1024);
        let zero = QuantileFunction::constant(g, 0.0).unwrap();
        let res = indifference_price(1.0, &zero, &u, &law, g).unwrap();
        assert!(res.exists);
        assert!(!res.boundary);
        assert_eq!(res.price, 0.0);
        assert_eq!(res.residual, 0.0);
    }

    #[test]
    fn constant_claim_prices_near_discounted_cash() {
        let (g, law, u) = setup(4096);
        let c = QuantileFunction::constant(g, 0.5).unwrap();
        let res = indifference_price(1.0, &c, &u, &law, g).unwrap();
        assert!(res.exists && !res.boundary);
        // Sure cash folds into wealth: p = 0.5 E[rho] when the floor stays
        // inactive, which it is on the reference market at x = 1.
        assert!(
            abs(res.price - 0.5 * DISCOUNT) < 5e-3,
            "price {} vs discounted cash {}",
            res.price,
            0.5 * DISCOUNT
        );
        assert!(res.residual <= PRICE_RTOL * abs(res.value_classical));
        assert!(res.price <= 1.0);
    }

    #[test]
    fn negative_claim_prices_negative() {
        let (g, law, u) = setup(2048);
        let c = QuantileFunction::constant(g, -0.3).unwrap();
        let res = indifference_price(1.0, &c, &u, &law, g).unwrap();
        assert!(res.exists && !res.boundary);
        assert!(res.price < 0.0, "price {}", res.price);
        assert!(
            abs(res.price + 0.3 * DISCOUNT) < 5e-3,
            "price {} vs -0.3 E[rho] {}",
            res.price,
            -0.3 * DISCOUNT
        );
    }

    #[test]
    fn two_point_claim_prices_inside_the_cash_bounds() {
        let (g, law, u) = setup(2048);
        let two = QuantileFunction::from_atoms(g, &[0.0, 1.0], &[0.5, 0.5]).unwrap();
        let res = indifference_price(1.0, &two, &u, &law, g).unwrap();
        assert!(res.exists && !res.boundary);
        assert!(
            res.price > 0.0 && res.price < DISCOUNT,
            "price {} outside (0, {DISCOUNT})",
            res.price
        );
    }

    #[test]
    fn larger_claims_price_higher() {
        let (g, law, u) = setup(1024);
        let small = QuantileFunction::from_atoms(g, &[0.0, 1.0], &[0.5, 0.5]).unwrap();
        let large = QuantileFunction::from_atoms(g, &[0.2, 1.0], &[0.5, 0.5]).unwrap();
        let p_small = indifference_price(1.0, &small, &u, &law, g)
            .unwrap()
            .price;
        let p_large = indifference_price(1.0, &large, &u, &law, g)
            .unwrap()
            .price;
        assert!(
            p_large > p_small,
            "pointwise larger claim priced {p_large} <= {p_small}"
        );
    }

    #[test]
    fn price_depends_only_on_the_claim_law() {
        let (g, law, u) = setup(1024);
        // Same law, different atom bookkeeping: one atom split in two.
        let a = QuantileFunction::from_atoms(g, &[0.0, 1.0], &[0.5, 0.5]).unwrap();
        let b = QuantileFunction::from_atoms(g, &[1.0, 0.0, 1.0], &[0.25, 0.5, 0.25]).unwrap();
        assert_eq!(a, b);
        let pa = indifference_price(1.0, &a, &u, &law, g).unwrap().price;
        let pb = indifference_price(1.0, &b, &u, &law, g).unwrap().price;
        assert_eq!(pa, pb);
    }

    #[test]
    fn overwhelming_claim_has_no_price() {
        let (g, law, u) = setup(512);
        let c = QuantileFunction::constant(g, 10.0).unwrap();
        let res = indifference_price(1.0, &c, &u, &law, g).unwrap();
        assert!(!res.exists);
        assert!(res.price.is_nan());
        // Both sides of the failed comparison are reported.
        assert!(res.value_classical < res.value_robust);
        assert!(res.reason.is_some());
    }

    #[test]
    fn certainty_matched_claim_hits_the_boundary() {
        let (g, law, u) = setup(512);
        let v = classical_value(1.0, &u, &law, g).unwrap();
        // Constant claim whose certainty value equals V_EU(1) exactly:
        // u(c) = -e^{-c} = v, so c = -ln(-v).
        let c = QuantileFunction::constant(g, -ln(-v)).unwrap();
        let res = indifference_price(1.0, &c, &u, &law, g).unwrap();
        assert!(res.exists);
        assert!(res.boundary);
        assert_eq!(res.price, 1.0);
    }

    #[test]
    fn rejects_bad_inputs() {
        let (g, law, u) = setup(512);
        let zero = QuantileFunction::constant(g, 0.0).unwrap();
        assert!(indifference_price(0.0, &zero, &u, &law, g).is_err());
        assert!(indifference_price(-1.0, &zero, &u, &law, g).is_err());
        assert!(indifference_price(f64::NAN, &zero, &u, &law, g).is_err());
        let other = Grid::new(256).unwrap();
        assert!(indifference_price(1.0, &zero, &u, &law, other).is_err());
    }
}
