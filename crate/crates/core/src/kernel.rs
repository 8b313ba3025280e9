//! Stationary covariance functions with analytic derivatives in the input
//! locations.
//!
//! Only the Matérn 3/2 kernel ships; everything downstream is written against
//! the [`StationaryKernel`] trait so further stationary kernels can be added.
//! Matérn 3/2 is exactly twice differentiable in the lag, which is all the
//! curvature machinery in [`crate::deriv`] ever asks for.

use std::cell::Cell;

use crate::error::{Error, Result};

/// Hyperparameters of a stationary kernel: signal standard deviation and
/// length-scale.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelParams {
    sigma_f: f64,
    d: f64,
}

impl KernelParams {
    pub fn new(sigma_f: f64, d: f64) -> Result<Self> {
        if !(sigma_f > 0.0) || !sigma_f.is_finite() {
            return Err(Error::NonPositiveParam {
                name: "sigma_f",
                value: sigma_f,
            });
        }
        if !(d > 0.0) || !d.is_finite() {
            return Err(Error::NonPositiveParam { name: "d", value: d });
        }
        Ok(Self { sigma_f, d })
    }

    pub fn sigma_f(&self) -> f64 {
        self.sigma_f
    }

    pub fn d(&self) -> f64 {
        self.d
    }
}

/// Matérn 3/2 covariance: `sigma_f^2 (1 + sqrt(3) h / d) exp(-sqrt(3) h / d)`
/// with lag `h = |a - b|`.
pub fn matern32(a: f64, b: f64, p: &KernelParams) -> f64 {
    let s = 3f64.sqrt() / p.d;
    let h = (a - b).abs();
    p.sigma_f * p.sigma_f * (1.0 + s * h) * (-s * h).exp()
}

/// First derivative of [`matern32`] with respect to its first argument:
/// `-sigma_f^2 (3 / d^2) (a - b) exp(-sqrt(3) |a - b| / d)`.
///
/// Antisymmetric under argument swap; the zero-lag limit is 0.
pub fn kernel_d1(a: f64, b: f64, p: &KernelParams) -> f64 {
    let s = 3f64.sqrt() / p.d;
    let u = a - b;
    -p.sigma_f * p.sigma_f * s * s * u * (-s * u.abs()).exp()
}

/// Pure second derivative of [`matern32`] with respect to its first argument:
/// `-sigma_f^2 (3 / d^2) (1 - sqrt(3) |a - b| / d) exp(-sqrt(3) |a - b| / d)`.
///
/// Continuous through zero lag with value `-3 sigma_f^2 / d^2`. Equal to the
/// pure second derivative in the second argument.
pub fn kernel_d2(a: f64, b: f64, p: &KernelParams) -> f64 {
    let s = 3f64.sqrt() / p.d;
    let h = (a - b).abs();
    -p.sigma_f * p.sigma_f * s * s * (1.0 - s * h) * (-s * h).exp()
}

/// A symmetric stationary kernel with analytic first and second derivatives
/// in its first input location.
pub trait StationaryKernel {
    /// Covariance value `k(a, b)`.
    fn value(&self, a: f64, b: f64) -> f64;

    /// `dk/da`.
    fn d1(&self, a: f64, b: f64) -> f64;

    /// `d^2 k / da^2`.
    fn d2(&self, a: f64, b: f64) -> f64;

    /// Mixed derivative `d^2 k / da db`.
    ///
    /// For any stationary kernel `k(a, b) = g(a - b)` this equals `-g''`,
    /// i.e. the negated pure second derivative.
    fn d2_mixed(&self, a: f64, b: f64) -> f64 {
        -self.d2(a, b)
    }

    /// Zero-lag variance `k(x, x)`.
    fn variance(&self) -> f64;
}

/// The Matérn 3/2 kernel as a [`StationaryKernel`].
#[derive(Debug, Clone, Copy)]
pub struct Matern32 {
    params: KernelParams,
}

impl Matern32 {
    pub fn new(params: KernelParams) -> Self {
        Self { params }
    }

    pub fn params(&self) -> &KernelParams {
        &self.params
    }
}

impl StationaryKernel for Matern32 {
    fn value(&self, a: f64, b: f64) -> f64 {
        matern32(a, b, &self.params)
    }

    fn d1(&self, a: f64, b: f64) -> f64 {
        kernel_d1(a, b, &self.params)
    }

    fn d2(&self, a: f64, b: f64) -> f64 {
        kernel_d2(a, b, &self.params)
    }

    fn variance(&self) -> f64 {
        self.params.sigma_f * self.params.sigma_f
    }
}

/// Wrapper that counts kernel evaluations, used to verify the quadratic
/// evaluation-count claims of the derivative recursions.
///
/// Not `Sync`; a counting kernel belongs to a single sweep on a single thread.
pub struct CountingKernel<'a, K: StationaryKernel> {
    inner: &'a K,
    value_calls: Cell<u64>,
    d1_calls: Cell<u64>,
    d2_calls: Cell<u64>,
}

impl<'a, K: StationaryKernel> CountingKernel<'a, K> {
    pub fn new(inner: &'a K) -> Self {
        Self {
            inner,
            value_calls: Cell::new(0),
            d1_calls: Cell::new(0),
            d2_calls: Cell::new(0),
        }
    }

    pub fn value_calls(&self) -> u64 {
        self.value_calls.get()
    }

    pub fn d1_calls(&self) -> u64 {
        self.d1_calls.get()
    }

    pub fn d2_calls(&self) -> u64 {
        self.d2_calls.get()
    }

    pub fn reset(&self) {
        self.value_calls.set(0);
        self.d1_calls.set(0);
        self.d2_calls.set(0);
    }
}

impl<K: StationaryKernel> StationaryKernel for CountingKernel<'_, K> {
    fn value(&self, a: f64, b: f64) -> f64 {
        self.value_calls.set(self.value_calls.get() + 1);
        self.inner.value(a, b)
    }

    fn d1(&self, a: f64, b: f64) -> f64 {
        self.d1_calls.set(self.d1_calls.get() + 1);
        self.inner.d1(a, b)
    }

    fn d2(&self, a: f64, b: f64) -> f64 {
        self.d2_calls.set(self.d2_calls.get() + 1);
        self.inner.d2(a, b)
    }

    fn variance(&self) -> f64 {
        self.inner.variance()
    }
}
