//! Free-function float kernels backed by `libm`.
//!
//! The crate is `no_std`, so `f64`'s transcendental methods are unavailable.
//! We deliberately avoid an extension trait: in test builds `std` enters the
//! crate graph and its inherent `f64` methods would shadow trait methods,
//! silently switching math libraries between test and production builds.
//! Free functions keep every build on `libm`, which is also deterministic
//! across platforms (artifact files must be byte-identical run to run).

#[inline]
pub(crate) fn exp(x: f64) -> f64 {
    libm::exp(x)
}

#[inline]
pub(crate) fn ln(x: f64) -> f64 {
    libm::log(x)
}

#[inline]
pub(crate) fn sqrt(x: f64) -> f64 {
    libm::sqrt(x)
}

#[inline]
pub(crate) fn powf(x: f64, y: f64) -> f64 {
    libm::pow(x, y)
}

#[inline]
pub(crate) fn abs(x: f64) -> f64 {
    libm::fabs(x)
}

#[inline]
pub(crate) fn floor(x: f64) -> f64 {
    libm::floor(x)
}

#[inline]
pub(crate) fn erfc(x: f64) -> f64 {
    libm::erfc(x)
}

/// max that propagates like IEEE maxNum (NaN loses); fine for our guards.
#[inline]
pub(crate) fn max(a: f64, b: f64) -> f64 {
    if a > b || b != b {
        a
    } else {
        b
    }
}

#[inline]
pub(crate) fn min(a: f64, b: f64) -> f64 {
    if a < b || b != b {
        a
    } else {
        b
    }
}
