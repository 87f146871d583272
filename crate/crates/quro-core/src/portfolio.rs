//! Wealth process and feedback hedge for the calibrated terminal payoff.
//!
//! With deterministic coefficients the pricing kernel is Markov and its
//! transition is an explicit lognormal, so the wealth surface
//! `varphi(t, y) = E[varrho(T) X*(varrho(T)) | varrho(t) = y]` needs no PDE
//! solve: it is a one-dimensional integral against the remaining log-normal
//! increment, computed here by Gauss-Hermite quadrature. The feedback weights
//! take the y-derivative of `varphi` by central differences, and the
//! replication backtest rolls the self-financing wealth recursion forward on
//! exact kernel paths, reusing the kernel simulator's per-path substreams so
//! both processes see the same Brownian increments.

use alloc::vec::Vec;

use crate::error::{invalid, Result};
use crate::float::{abs, exp, ln, max, sqrt};
use crate::grid::QuantileFunction;
use crate::hermite::GaussHermite;
use crate::market::{path_rng, standard_normal, step_scheme, KernelLaw, MarketSpec};

/// Quadrature size for conditional expectations over the lognormal remainder.
const GH_NODES: usize = 64;

/// Relative step for the central difference in the kernel coordinate.
const FD_RELATIVE_STEP: f64 = 1e-5;

/// Two central differences a factor of two apart must agree to this relative
/// tolerance before the derivative is accepted.
const FD_CONSISTENCY_RTOL: f64 = 0.05;

const FD_WIDENING_FACTOR: f64 = 8.0;
const FD_MAX_WIDENINGS: usize = 4;

/// Terminal wealth as a function of the realized pricing-kernel value.
pub trait TerminalPayoff {
    fn payoff(&self, rho: f64) -> f64;
}

/// Grid-backed optimal terminal wealth `X*(rho) = Qbar(1 - F_rho(rho))`.
///
/// The quantile is nondecreasing and the kernel cdf increasing, so the payoff
/// is non-increasing in the kernel value. Jumps of the quantile are resolved
/// by right-continuous lookup; an argument landing exactly on a jump takes
/// the right value.
#[derive(Clone, Debug)]
pub struct TerminalMap {
    qbar: QuantileFunction,
    law: KernelLaw,
}

impl TerminalMap {
    pub fn new(qbar: QuantileFunction, law: KernelLaw) -> Result<Self> {
        if qbar.ess_inf() < 0.0 {
            return Err(invalid!(
                "terminal wealth must be nonnegative, floor is {}",
                qbar.ess_inf()
            ));
        }
        Ok(TerminalMap { qbar, law })
    }

    pub fn qbar(&self) -> &QuantileFunction {
        &self.qbar
    }

    pub fn law(&self) -> &KernelLaw {
        &self.law
    }
}

impl TerminalPayoff for TerminalMap {
    fn payoff(&self, rho: f64) -> f64 {
        self.qbar.eval(1.0 - self.law.cdf(rho))
    }
}

/// Closed-form terminal wealth for exponential utility without a claim,
/// `X* = level - ln(rho) / alpha`, no nonnegativity floor.
///
/// Serves as the smooth reference case for the replication backtest: its
/// conditional wealth and dollar exposure have elementary closed forms.
#[derive(Clone, Copy, Debug)]
pub struct ExponentialMertonPayoff {
    level: f64,
    alpha: f64,
}

impl ExponentialMertonPayoff {
    /// Picks the level so the budget `E[rho X*] = x` holds exactly:
    /// `level = (x + E[rho ln rho] / alpha) / E[rho]`.
    pub fn calibrated(x: f64, alpha: f64, law: &KernelLaw) -> Result<Self> {
        if !x.is_finite() {
            return Err(invalid!("initial wealth must be finite, got {x}"));
        }
        if !(alpha > 0.0) || !alpha.is_finite() {
            return Err(invalid!("risk aversion must be positive, got {alpha}"));
        }
        let level = (x + law.mean_log_weighted() / alpha) / law.mean();
        Ok(ExponentialMertonPayoff { level, alpha })
    }

    pub fn level(&self) -> f64 {
        self.level
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }
}

impl TerminalPayoff for ExponentialMertonPayoff {
    fn payoff(&self, rho: f64) -> f64 {
        self.level - ln(rho) / self.alpha
    }
}

/// Lognormal transition of the kernel from some time to the horizon.
struct Remainder {
    drift: f64,
    sd: f64,
}

fn remainder(market: &MarketSpec, t: f64) -> Remainder {
    let (drift, var) = market.log_increment(t, market.horizon());
    Remainder {
        drift,
        sd: sqrt(var),
    }
}

/// Discounted conditional wealth `Y(t) = E[R X*(y R)]` with
/// `ln R ~ Normal(drift, sd^2)`; the kernel prefactor cancels, so this is
/// already the currency amount. Zero remaining variance collapses to the
/// payoff itself.
fn conditional_wealth<P: TerminalPayoff>(
    rule: &GaussHermite,
    map: &P,
    res: &Remainder,
    y: f64,
) -> f64 {
    if res.sd == 0.0 {
        let r = exp(res.drift);
        return r * map.payoff(y * r);
    }
    rule.expect_gaussian(|z| {
        let r = exp(res.drift + res.sd * z);
        r * map.payoff(y * r)
    })
}

struct Derivative {
    dphi_dy: f64,
    step: f64,
    widened: bool,
}

/// d/dy of `varphi(t, y) = y * Y(t, y)` by central differences, with the
/// two-scale consistency check. Disagreement widens the step by 8x, up to
/// four times: near-terminal jump discontinuities of the payoff make tiny
/// windows see either nothing or a spike, and only a wider window averages
/// enough quadrature mass to stabilize the quotient.
fn marginal_value<P: TerminalPayoff>(
    rule: &GaussHermite,
    map: &P,
    res: &Remainder,
    y: f64,
) -> Derivative {
    let phi = |u: f64| u * conditional_wealth(rule, map, res, u);
    let deriv = |h: f64| (phi(y * (1.0 + h)) - phi(y * (1.0 - h))) / (2.0 * y * h);
    let mut step = FD_RELATIVE_STEP;
    let mut widened = false;
    let mut fine = deriv(step);
    for _ in 0..FD_MAX_WIDENINGS {
        let coarse = deriv(2.0 * step);
        let tol = FD_CONSISTENCY_RTOL * max(abs(fine), abs(coarse)) + 1e-9;
        if abs(fine - coarse) <= tol {
            break;
        }
        widened = true;
        step *= FD_WIDENING_FACTOR;
        fine = deriv(step);
    }
    Derivative {
        dphi_dy: fine,
        step,
        widened,
    }
}

fn validate_state(t: f64, varrho_t: f64, market: &MarketSpec) -> Result<()> {
    let horizon = market.horizon();
    if !t.is_finite() || t < 0.0 || t > horizon {
        return Err(invalid!("time {t} outside [0, {horizon}]"));
    }
    if !(varrho_t > 0.0) || !varrho_t.is_finite() {
        return Err(invalid!("kernel value must be positive, got {varrho_t}"));
    }
    Ok(())
}

/// Wealth of the replicating portfolio at time `t` given the kernel state:
/// `Y(t) = varrho(t)^{-1} E[varrho(T) X*(varrho(T)) | varrho(t)]`.
pub fn wealth<P: TerminalPayoff>(
    t: f64,
    varrho_t: f64,
    map: &P,
    market: &MarketSpec,
) -> Result<f64> {
    validate_state(t, varrho_t, market)?;
    let rule = GaussHermite::new(GH_NODES)?;
    Ok(conditional_wealth(
        &rule,
        map,
        &remainder(market, t),
        varrho_t,
    ))
}

/// Feedback hedge at one point of the (time, kernel) state space.
#[derive(Clone, Debug)]
pub struct FeedbackReport {
    /// Conditional wealth Y(t).
    pub wealth: f64,
    /// d varphi / dy at the current kernel value.
    pub marginal_value: f64,
    /// Dollars on the risk block: Y - d varphi / dy.
    pub exposure: f64,
    /// Currency per asset, solving sigma^T pi = theta * exposure.
    pub portfolio: Vec<f64>,
    /// Relative finite-difference step actually used.
    pub fd_step: f64,
    /// True when the two-scale check forced a wider step.
    pub widened: bool,
}

/// Optimal portfolio in feedback form,
/// `pi*(t) = (sigma(t)^T)^{-1} theta(t) (Y(t) - d varphi/dy)`.
pub fn feedback_portfolio<P: TerminalPayoff>(
    t: f64,
    varrho_t: f64,
    market: &MarketSpec,
    map: &P,
) -> Result<FeedbackReport> {
    validate_state(t, varrho_t, market)?;
    let rule = GaussHermite::new(GH_NODES)?;
    let res = remainder(market, t);
    let value = conditional_wealth(&rule, map, &res, varrho_t);
    let d = marginal_value(&rule, map, &res, varrho_t);
    let exposure = value - d.dphi_dy;
    let theta = market.market_price_of_risk_at(t);
    let rhs: Vec<f64> = theta.iter().map(|&c| c * exposure).collect();
    let portfolio = market.volatility_at(t).solve_transpose(&rhs)?;
    Ok(FeedbackReport {
        wealth: value,
        marginal_value: d.dphi_dy,
        exposure,
        portfolio,
        fd_step: d.step,
        widened: d.widened,
    })
}

/// Kernel and hedged-wealth trajectories on a shared uniform time grid,
/// path-major storage with `n_steps + 1` points per path.
#[derive(Clone, Debug)]
pub struct HedgedPaths {
    times: Vec<f64>,
    n_paths: usize,
    kernel: Vec<f64>,
    wealth: Vec<f64>,
    targets: Vec<f64>,
    initial_wealth: f64,
    widened_steps: usize,
}

impl HedgedPaths {
    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn n_paths(&self) -> usize {
        self.n_paths
    }

    pub fn n_steps(&self) -> usize {
        self.times.len() - 1
    }

    pub fn kernel_path(&self, p: usize) -> &[f64] {
        let w = self.times.len();
        &self.kernel[p * w..(p + 1) * w]
    }

    pub fn wealth_path(&self, p: usize) -> &[f64] {
        let w = self.times.len();
        &self.wealth[p * w..(p + 1) * w]
    }

    /// Target terminal wealth X*(varrho(T)) per path.
    pub fn targets(&self) -> &[f64] {
        &self.targets
    }

    /// Wealth every path starts from: the conditional value at (0, 1).
    pub fn initial_wealth(&self) -> f64 {
        self.initial_wealth
    }

    /// Count of (path, step) derivative evaluations that widened their step.
    pub fn widened_steps(&self) -> usize {
        self.widened_steps
    }
}

/// Simulates the hedged wealth alongside exact kernel paths.
///
/// Path p consumes substream p of the seed, one normal draw per step, in the
/// same order as the kernel simulator, so the kernel trajectories here are
/// bit-identical to `simulate_kernel` with the same arguments.
///
/// The kernel steps by its exact lognormal increment. Wealth follows the
/// discrete-rebalancing form of the wealth equation: the stock dollar
/// position `pi_k = theta g_k / sigma` is frozen at the left endpoint, the
/// bond remainder compounds exactly, and the stock earns its exact lognormal
/// step return driven by the shared draw,
///
/// ```text
///   X_{k+1} = (X_k - pi_k) e^{int r} + pi_k e^{int(r + sigma theta - sigma^2/2) + kappa_k z_k}
/// ```
///
/// with `kappa_k = int sigma theta / sd_k`. The scheme is exactly
/// self-financing and keeps varrho X a martingale step by step; the only
/// error is the discrete rebalancing gap, which shrinks like the square root
/// of the step size.
///
/// Restricted to single-factor markets: the kernel simulator draws one
/// normal per step (the Brownian projection on theta), which determines
/// every asset's return only when there is a single factor.
pub fn simulate_hedged<P: TerminalPayoff>(
    market: &MarketSpec,
    map: &P,
    n_paths: usize,
    n_steps: usize,
    seed: u64,
) -> Result<HedgedPaths> {
    if n_paths == 0 {
        return Err(invalid!("need at least one path"));
    }
    if n_steps < 16 {
        return Err(invalid!(
            "wealth recursion needs at least 16 steps, got {n_steps}"
        ));
    }
    if market.factor_dim() != 1 {
        return Err(invalid!(
            "replication backtest supports single-factor markets, got {} factors",
            market.factor_dim()
        ));
    }
    let rule = GaussHermite::new(GH_NODES)?;
    let scheme = step_scheme(market, n_steps);
    let residuals: Vec<Remainder> = (0..n_steps)
        .map(|k| remainder(market, scheme.times[k]))
        .collect();
    // Per-step constants: bond growth, stock log-return mean, stock loading
    // on the shared draw, and the left-endpoint allocation ratio theta/sigma.
    let mut bond = Vec::with_capacity(n_steps);
    let mut stock_mu = Vec::with_capacity(n_steps);
    let mut stock_load = Vec::with_capacity(n_steps);
    let mut ratio = Vec::with_capacity(n_steps);
    for k in 0..n_steps {
        let (a, b) = (scheme.times[k], scheme.times[k + 1]);
        bond.push(exp(market.integral_rate(a, b)));
        let (mu, cov) = market.stock_step(a, b);
        stock_mu.push(mu);
        stock_load.push(if scheme.sd[k] > 0.0 {
            cov / scheme.sd[k]
        } else {
            0.0
        });
        ratio.push(market.market_price_of_risk_at(a)[0] / market.volatility_at(a).get(0, 0));
    }
    let initial_wealth = conditional_wealth(&rule, map, &residuals[0], 1.0);

    let width = n_steps + 1;
    let mut kernel = Vec::with_capacity(n_paths * width);
    let mut wealth_vals = Vec::with_capacity(n_paths * width);
    let mut targets = Vec::with_capacity(n_paths);
    let mut widened_steps = 0usize;

    for p in 0..n_paths {
        let mut rng = path_rng(seed, p as u64);
        let mut rho = 1.0_f64;
        let mut w = initial_wealth;
        kernel.push(rho);
        wealth_vals.push(w);
        for k in 0..n_steps {
            let d = marginal_value(&rule, map, &residuals[k], rho);
            if d.widened {
                widened_steps += 1;
            }
            let pi = ratio[k] * (w - d.dphi_dy);
            let z = standard_normal(&mut rng);
            w = (w - pi) * bond[k] + pi * exp(stock_mu[k] + stock_load[k] * z);
            rho *= exp(scheme.drift[k] - scheme.sd[k] * z);
            kernel.push(rho);
            wealth_vals.push(w);
        }
        targets.push(map.payoff(rho));
    }

    Ok(HedgedPaths {
        times: scheme.times,
        n_paths,
        kernel,
        wealth: wealth_vals,
        targets,
        initial_wealth,
        widened_steps,
    })
}

/// One monitored time of the martingale diagnostic.
#[derive(Clone, Copy, Debug)]
pub struct MartingaleCheck {
    pub time: f64,
    /// Sample mean of varrho(t) X(t) across paths.
    pub mean: f64,
    /// Standard error of that mean; 0 for a single path.
    pub stderr: f64,
}

/// Replication backtest summary.
#[derive(Clone, Debug)]
pub struct ReplicationReport {
    /// Conditional value at (0, 1); every path starts here.
    pub initial_wealth: f64,
    /// Root-mean-square of X(T) - X*(varrho(T)) across paths.
    pub terminal_rmse: f64,
    pub pathwise_max_err: f64,
    /// initial_wealth minus an independent wealth(0, 1) evaluation; zero by
    /// construction since the recursion starts from exactly that number.
    pub budget_gap: f64,
    /// Sample mean of the target terminal wealth.
    pub mean_target: f64,
    /// Sample means of varrho(t) X(t) at the quarter points of the grid;
    /// a martingale keeps them at initial_wealth within sampling error.
    pub martingale: Vec<MartingaleCheck>,
    pub widened_steps: usize,
}

/// Runs the hedged simulation and compares terminal wealth with the target
/// payoff. The report never fails on poor accuracy; the numbers speak.
pub fn replicate_and_verify<P: TerminalPayoff>(
    market: &MarketSpec,
    map: &P,
    n_paths: usize,
    n_steps: usize,
    seed: u64,
) -> Result<ReplicationReport> {
    let sim = simulate_hedged(market, map, n_paths, n_steps, seed)?;
    let check = wealth(0.0, 1.0, map, market)?;
    let budget_gap = sim.initial_wealth - check;

    let mut sq = 0.0;
    let mut worst = 0.0;
    let mut mean_target = 0.0;
    for p in 0..n_paths {
        let err = sim.wealth_path(p)[n_steps] - sim.targets[p];
        sq += err * err;
        worst = max(worst, abs(err));
        mean_target += sim.targets[p];
    }
    let terminal_rmse = sqrt(sq / n_paths as f64);
    mean_target /= n_paths as f64;

    let mut martingale = Vec::with_capacity(4);
    for k in [n_steps / 4, n_steps / 2, 3 * n_steps / 4, n_steps] {
        let mut m = 0.0;
        for p in 0..n_paths {
            m += sim.kernel_path(p)[k] * sim.wealth_path(p)[k];
        }
        m /= n_paths as f64;
        let mut var = 0.0;
        if n_paths > 1 {
            for p in 0..n_paths {
                let d = sim.kernel_path(p)[k] * sim.wealth_path(p)[k] - m;
                var += d * d;
            }
            var /= (n_paths - 1) as f64;
        }
        martingale.push(MartingaleCheck {
            time: sim.times[k],
            mean: m,
            stderr: sqrt(var / n_paths as f64),
        });
    }

    Ok(ReplicationReport {
        initial_wealth: sim.initial_wealth,
        terminal_rmse,
        pathwise_max_err: worst,
        budget_gap,
        mean_target,
        martingale,
        widened_steps: sim.widened_steps,
    })
}
