//! Market primitives: piecewise-constant coefficients, the lognormal pricing
//! kernel they induce, and Monte Carlo simulation of the kernel process.
//!
//! The model is a complete market with deterministic piecewise-constant
//! short rate r(t), market price of risk theta(t) (one entry per driving
//! factor), and invertible volatility sigma(t). The pricing kernel is
//!
//! ```text
//!   varrho(t) = exp( -int_0^t (r + |theta|^2/2) ds - int_0^t theta' dW )
//! ```
//!
//! so ln varrho(T) is Gaussian with mean -int (r + |theta|^2/2) and variance
//! int |theta|^2. All time integrals over the piecewise segments are exact.

use alloc::vec;
use alloc::vec::Vec;

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha12Rng;

use crate::error::{invalid, Result};
use crate::float::{abs, exp, ln, max, min, sqrt};
use crate::grid::{Grid, QuantileFunction};
use crate::normal;

/// Right-continuous piecewise-constant function of time on [0, horizon].
///
/// Segment k covers [ends[k-1], ends[k]); the final segment closes at the
/// horizon so `value_at(horizon)` is the last value.
#[derive(Clone, Debug, PartialEq)]
pub struct Piecewise<T> {
    ends: Vec<f64>,
    values: Vec<T>,
}

impl<T> Piecewise<T> {
    pub fn new(ends: Vec<f64>, values: Vec<T>) -> Result<Self> {
        if ends.is_empty() || ends.len() != values.len() {
            return Err(invalid!(
                "piecewise needs matching nonempty segment lists, got {} ends and {} values",
                ends.len(),
                values.len()
            ));
        }
        let mut prev = 0.0;
        for &e in &ends {
            if !e.is_finite() || e <= prev {
                return Err(invalid!(
                    "segment ends must be finite and strictly increasing from 0, got {e} after {prev}"
                ));
            }
            prev = e;
        }
        Ok(Piecewise { ends, values })
    }

    pub fn constant(horizon: f64, value: T) -> Result<Self> {
        Self::new(vec![horizon], vec![value])
    }

    pub fn horizon(&self) -> f64 {
        self.ends[self.ends.len() - 1]
    }

    pub fn segments(&self) -> impl Iterator<Item = (f64, &T)> {
        self.ends.iter().copied().zip(self.values.iter())
    }

    /// Value on the segment containing t (right-continuous; horizon maps to
    /// the last segment).
    pub fn value_at(&self, t: f64) -> &T {
        let k = self.ends.partition_point(|&e| e <= t);
        let k = if k >= self.values.len() {
            self.values.len() - 1
        } else {
            k
        };
        &self.values[k]
    }

    /// Exact integral of `f(value)` over [a, b] (clamped to [0, horizon]).
    pub fn integrate(&self, a: f64, b: f64, f: impl Fn(&T) -> f64) -> f64 {
        let a = max(a, 0.0);
        let b = crate::float::min(b, self.horizon());
        if !(b > a) {
            return 0.0;
        }
        let mut acc = 0.0;
        let mut seg_start = 0.0;
        for (end, v) in self.segments() {
            let lo = max(seg_start, a);
            let hi = crate::float::min(end, b);
            if hi > lo {
                acc += f(v) * (hi - lo);
            }
            seg_start = end;
            if seg_start >= b {
                break;
            }
        }
        acc
    }
}

/// Dense row-major square matrix, sized for a handful of market factors.
#[derive(Clone, Debug, PartialEq)]
pub struct SquareMatrix {
    dim: usize,
    data: Vec<f64>,
}

impl SquareMatrix {
    pub fn new(dim: usize, data: Vec<f64>) -> Result<Self> {
        if dim == 0 || data.len() != dim * dim {
            return Err(invalid!(
                "matrix needs dim^2 entries, got {} for dim {dim}",
                data.len()
            ));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(invalid!("matrix entries must be finite"));
        }
        Ok(SquareMatrix { dim, data })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.dim + j]
    }

    /// Solves `A' x = rhs` (transpose system) by Gaussian elimination with
    /// partial pivoting. Fails when the matrix is numerically singular.
    pub fn solve_transpose(&self, rhs: &[f64]) -> Result<Vec<f64>> {
        let n = self.dim;
        if rhs.len() != n {
            return Err(invalid!("rhs length {} does not match dim {n}", rhs.len()));
        }
        // Work on the transpose so the original storage stays untouched.
        let mut a = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                a[i * n + j] = self.get(j, i);
            }
        }
        let mut x: Vec<f64> = rhs.to_vec();
        let scale = self.data.iter().fold(0.0, |m, &v| max(m, abs(v)));
        for col in 0..n {
            let mut piv = col;
            for row in col + 1..n {
                if abs(a[row * n + col]) > abs(a[piv * n + col]) {
                    piv = row;
                }
            }
            if abs(a[piv * n + col]) <= 1e-12 * max(scale, 1e-300) {
                return Err(invalid!("volatility matrix is numerically singular"));
            }
            if piv != col {
                for j in 0..n {
                    a.swap(col * n + j, piv * n + j);
                }
                x.swap(col, piv);
            }
            let d = a[col * n + col];
            for row in col + 1..n {
                let f = a[row * n + col] / d;
                if f != 0.0 {
                    for j in col..n {
                        a[row * n + j] -= f * a[col * n + j];
                    }
                    x[row] -= f * x[col];
                }
            }
        }
        for col in (0..n).rev() {
            let mut s = x[col];
            for j in col + 1..n {
                s -= a[col * n + j] * x[j];
            }
            x[col] = s / a[col * n + col];
        }
        Ok(x)
    }
}

/// Deterministic market coefficients over a finite horizon.
#[derive(Clone, Debug)]
pub struct MarketSpec {
    rate: Piecewise<f64>,
    market_price_of_risk: Piecewise<Vec<f64>>,
    volatility: Piecewise<SquareMatrix>,
}

impl MarketSpec {
    pub fn new(
        rate: Piecewise<f64>,
        market_price_of_risk: Piecewise<Vec<f64>>,
        volatility: Piecewise<SquareMatrix>,
    ) -> Result<Self> {
        let horizon = rate.horizon();
        if market_price_of_risk.horizon() != horizon || volatility.horizon() != horizon {
            return Err(invalid!(
                "coefficient horizons differ: rate {horizon}, risk premium {}, volatility {}",
                market_price_of_risk.horizon(),
                volatility.horizon()
            ));
        }
        for (_, r) in rate.segments() {
            if !r.is_finite() {
                return Err(invalid!("short rate must be finite"));
            }
        }
        let dim = market_price_of_risk.values[0].len();
        if dim == 0 {
            return Err(invalid!("market price of risk must have at least one factor"));
        }
        for (_, th) in market_price_of_risk.segments() {
            if th.len() != dim {
                return Err(invalid!(
                    "market price of risk dimension changes between segments ({} vs {dim})",
                    th.len()
                ));
            }
            if th.iter().any(|v| !v.is_finite()) {
                return Err(invalid!("market price of risk must be finite"));
            }
        }
        for (_, sg) in volatility.segments() {
            if sg.dim() != dim {
                return Err(invalid!(
                    "volatility dimension {} does not match risk premium dimension {dim}",
                    sg.dim()
                ));
            }
            // Invertibility check; the solve result is discarded.
            sg.solve_transpose(&vec![1.0; dim])?;
        }
        let spec = MarketSpec {
            rate,
            market_price_of_risk,
            volatility,
        };
        if spec.integral_theta_sq(0.0, horizon) <= 0.0 {
            return Err(invalid!(
                "market price of risk vanishes a.e.; the pricing kernel would be deterministic"
            ));
        }
        Ok(spec)
    }

    /// Single-factor constant-coefficient market.
    pub fn constant(horizon: f64, rate: f64, theta: f64, sigma: f64) -> Result<Self> {
        MarketSpec::new(
            Piecewise::constant(horizon, rate)?,
            Piecewise::constant(horizon, vec![theta])?,
            Piecewise::constant(horizon, SquareMatrix::new(1, vec![sigma])?)?,
        )
    }

    pub fn horizon(&self) -> f64 {
        self.rate.horizon()
    }

    pub fn factor_dim(&self) -> usize {
        self.market_price_of_risk.values[0].len()
    }

    pub fn rate_at(&self, t: f64) -> f64 {
        *self.rate.value_at(t)
    }

    pub fn market_price_of_risk_at(&self, t: f64) -> &[f64] {
        self.market_price_of_risk.value_at(t)
    }

    pub fn volatility_at(&self, t: f64) -> &SquareMatrix {
        self.volatility.value_at(t)
    }

    pub fn integral_rate(&self, a: f64, b: f64) -> f64 {
        self.rate.integrate(a, b, |r| *r)
    }

    /// Exact `int_a^b |theta|^2 dt`.
    pub fn integral_theta_sq(&self, a: f64, b: f64) -> f64 {
        self.market_price_of_risk
            .integrate(a, b, |th| th.iter().map(|v| v * v).sum())
    }

    /// Discount factor exp(-int_a^b r dt).
    pub fn discount(&self, a: f64, b: f64) -> f64 {
        exp(-self.integral_rate(a, b))
    }

    /// Gaussian law of ln(varrho(b)/varrho(a)): drift and variance of the
    /// kernel log-increment over [a, b].
    pub fn log_increment(&self, a: f64, b: f64) -> (f64, f64) {
        let var = self.integral_theta_sq(a, b);
        let drift = -(self.integral_rate(a, b) + 0.5 * var);
        (drift, var)
    }

    /// Exact integrals describing the single risky asset's gross return over
    /// [a, b]: the log-return mean `int (r + sigma theta - sigma^2/2) dt`
    /// and the covariance integral `int sigma theta dt` that ties the return
    /// to the kernel's Brownian projection. Single-factor markets only.
    pub(crate) fn stock_step(&self, a: f64, b: f64) -> (f64, f64) {
        debug_assert_eq!(self.factor_dim(), 1);
        let mut mu = self.integral_rate(a, b);
        let mut cov = 0.0;
        // Both coefficients are piecewise constant; walk the union of their
        // breakpoints so every piece is integrated exactly.
        let mut lo = a;
        while lo < b {
            let th = self.market_price_of_risk.value_at(lo)[0];
            let sg = self.volatility.value_at(lo).get(0, 0);
            let hi = min(
                b,
                min(
                    next_break(&self.market_price_of_risk, lo),
                    next_break(&self.volatility, lo),
                ),
            );
            mu += (sg * th - 0.5 * sg * sg) * (hi - lo);
            cov += sg * th * (hi - lo);
            lo = hi;
        }
        (mu, cov)
    }

    /// Marginal law of the terminal kernel varrho(horizon).
    pub fn kernel_law(&self) -> KernelLaw {
        let (m, v) = self.log_increment(0.0, self.horizon());
        // v > 0 enforced at construction.
        KernelLaw::new(m, sqrt(v)).expect("validated at construction")
    }
}

/// First segment end strictly past `t`, or the horizon if none is.
fn next_break<T>(pw: &Piecewise<T>, t: f64) -> f64 {
    for (end, _) in pw.segments() {
        if end > t {
            return end;
        }
    }
    pw.horizon()
}

/// Lognormal law: ln rho ~ N(log_mean, log_sd^2).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct KernelLaw {
    log_mean: f64,
    log_sd: f64,
}

impl KernelLaw {
    pub fn new(log_mean: f64, log_sd: f64) -> Result<Self> {
        if !log_mean.is_finite() || !log_sd.is_finite() || log_sd <= 0.0 {
            return Err(invalid!(
                "kernel law needs finite log-mean and positive log-sd, got ({log_mean}, {log_sd})"
            ));
        }
        Ok(KernelLaw { log_mean, log_sd })
    }

    pub fn log_mean(&self) -> f64 {
        self.log_mean
    }

    pub fn log_sd(&self) -> f64 {
        self.log_sd
    }

    /// Quantile Q_rho(t) = exp(m + s * Phi^{-1}(t)); 0 at t=0, +inf at t=1.
    pub fn quantile(&self, t: f64) -> f64 {
        exp(self.log_mean + self.log_sd * normal::quantile(t))
    }

    pub fn cdf(&self, y: f64) -> f64 {
        if y <= 0.0 {
            return 0.0;
        }
        normal::cdf((ln(y) - self.log_mean) / self.log_sd)
    }

    /// E[rho] = exp(m + s^2/2).
    pub fn mean(&self) -> f64 {
        exp(self.log_mean + 0.5 * self.log_sd * self.log_sd)
    }

    /// E[rho ln rho] = E[rho] * (m + s^2).
    pub fn mean_log_weighted(&self) -> f64 {
        self.mean() * (self.log_mean + self.log_sd * self.log_sd)
    }

    /// Lower partial mean E[rho ; rho <= Q_rho(t)] = E[rho] * Phi(Phi^{-1}(t) - s).
    ///
    /// This is the exact integral `int_0^t Q_rho(v) dv`.
    pub fn partial_mean(&self, t: f64) -> f64 {
        if t <= 0.0 {
            return 0.0;
        }
        if t >= 1.0 {
            return self.mean();
        }
        self.mean() * normal::cdf(normal::quantile(t) - self.log_sd)
    }

    /// Node sample of the quantile function on a grid.
    pub fn sample_quantile(&self, grid: Grid) -> Result<QuantileFunction> {
        QuantileFunction::sample(grid, |t| self.quantile(t), 0.0, f64::INFINITY)
    }
}

/// Simulated kernel paths on a uniform time grid (path-major storage).
#[derive(Clone, Debug)]
pub struct KernelPaths {
    times: Vec<f64>,
    n_paths: usize,
    values: Vec<f64>,
}

impl KernelPaths {
    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn n_paths(&self) -> usize {
        self.n_paths
    }

    pub fn path(&self, p: usize) -> &[f64] {
        let w = self.times.len();
        &self.values[p * w..(p + 1) * w]
    }
}

/// Deterministic per-path RNG: one ChaCha12 stream per path index, all from
/// one seed. Consumers that must share increments (kernel vs. hedged wealth)
/// rebuild the same stream and draw in the same order.
pub(crate) fn path_rng(seed: u64, path: u64) -> ChaCha12Rng {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    rng.set_stream(path);
    rng
}

/// Maps a u64 draw to the open interval (0,1) with 2^-54 guard offsets.
pub(crate) fn unit_open(x: u64) -> f64 {
    ((x >> 11) as f64 + 0.5) * (1.0 / 9007199254740992.0)
}

pub(crate) fn standard_normal(rng: &mut ChaCha12Rng) -> f64 {
    normal::quantile(unit_open(rng.next_u64()))
}

/// Per-step constants for exact stepping of the kernel over a uniform grid.
/// Segment breakpoints inside a step are integrated exactly.
pub(crate) struct StepScheme {
    pub times: Vec<f64>,
    pub drift: Vec<f64>,
    pub sd: Vec<f64>,
}

pub(crate) fn step_scheme(market: &MarketSpec, n_steps: usize) -> StepScheme {
    let horizon = market.horizon();
    let times: Vec<f64> = (0..=n_steps)
        .map(|k| horizon * k as f64 / n_steps as f64)
        .collect();
    let mut drift = Vec::with_capacity(n_steps);
    let mut sd = Vec::with_capacity(n_steps);
    for k in 0..n_steps {
        let (m, v) = market.log_increment(times[k], times[k + 1]);
        drift.push(m);
        sd.push(sqrt(v));
    }
    StepScheme { times, drift, sd }
}

/// Simulates kernel paths with the exact per-step lognormal increments.
///
/// Path p always consumes stream p of the seed, one draw per step, so runs
/// are reproducible and independent of `n_paths`.
pub fn simulate_kernel(
    market: &MarketSpec,
    n_paths: usize,
    n_steps: usize,
    seed: u64,
) -> Result<KernelPaths> {
    if n_paths == 0 || n_steps == 0 {
        return Err(invalid!(
            "need at least one path and one step, got {n_paths} paths, {n_steps} steps"
        ));
    }
    let scheme = step_scheme(market, n_steps);
    let mut values = Vec::with_capacity(n_paths * (n_steps + 1));
    for p in 0..n_paths {
        let mut rng = path_rng(seed, p as u64);
        let mut rho = 1.0;
        values.push(rho);
        for k in 0..n_steps {
            let z = standard_normal(&mut rng);
            rho *= exp(scheme.drift[k] - scheme.sd[k] * z);
            values.push(rho);
        }
    }
    Ok(KernelPaths {
        times: scheme.times,
        n_paths,
        values,
    })
}
