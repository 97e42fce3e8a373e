//! Pointy interaction potentials.
//!
//! A pointy potential `K` is even, `C¹` away from the origin, has a bounded
//! derivative and is `λ`-concave. The velocity field of the aggregation model
//! only ever sees the *hatted* derivative, which agrees with `∂ₓK` off the
//! origin and is exactly zero at it.

use std::fmt;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{ensure_finite, Error, Result};

/// Interaction potential satisfying the pointy hypotheses.
///
/// Implementations must be cheap to call; the solvers evaluate `hat_deriv` in
/// their inner loops.
pub trait PointyKernel: Send + Sync + fmt::Debug {
    fn eval(&self, x: f64) -> f64;

    /// `∂ₓK(x)`. Only meaningful for `x != 0`.
    fn deriv(&self, x: f64) -> f64;

    /// Derivative with the value at the origin replaced by zero.
    fn hat_deriv(&self, x: f64) -> f64 {
        if x == 0.0 {
            0.0
        } else {
            self.deriv(x)
        }
    }

    /// `‖∂ₓK‖∞`.
    fn lipschitz(&self) -> f64;

    /// One-sided concavity constant `λ`.
    fn lambda(&self) -> f64;

    /// True for `K(x) = ½e^{-|x|}`, which unlocks the linear-time convolution paths.
    fn is_exponential(&self) -> bool {
        false
    }
}

/// The chemotaxis kernel `K(x) = ½e^{-|x|}`, the Green's function of `-∂ₓₓ + 1`.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Exponential;

impl PointyKernel for Exponential {
    #[inline]
    fn eval(&self, x: f64) -> f64 {
        0.5 * (-x.abs()).exp()
    }

    #[inline]
    fn deriv(&self, x: f64) -> f64 {
        -0.5 * x.signum() * (-x.abs()).exp()
    }

    #[inline]
    fn hat_deriv(&self, x: f64) -> f64 {
        if x == 0.0 {
            0.0
        } else {
            -0.5 * x.signum() * (-x.abs()).exp()
        }
    }

    fn lipschitz(&self) -> f64 {
        0.5
    }

    // sup of ∂ₓₓK off the origin; the kink at zero only helps.
    fn lambda(&self) -> f64 {
        0.5
    }

    fn is_exponential(&self) -> bool {
        true
    }
}

/// Smoothed kernel whose derivative is linear on `[-1/n, 1/n]` and equal to
/// the base derivative outside it.
#[derive(Debug, Clone)]
pub struct Regularized {
    base: Arc<dyn PointyKernel>,
    n: u32,
    /// `n·∂ₓK(1/n)`, the slope of the linear branch.
    slope: f64,
    cutoff: f64,
}

impl Regularized {
    pub fn n(&self) -> u32 {
        self.n
    }

    pub fn base(&self) -> &Arc<dyn PointyKernel> {
        &self.base
    }
}

impl PointyKernel for Regularized {
    fn eval(&self, x: f64) -> f64 {
        if x.abs() > self.cutoff {
            self.base.eval(x)
        } else {
            self.base.eval(self.cutoff) + 0.5 * self.slope * (x * x - self.cutoff * self.cutoff)
        }
    }

    fn deriv(&self, x: f64) -> f64 {
        if x.abs() > self.cutoff {
            self.base.deriv(x)
        } else {
            self.slope * x
        }
    }

    // The linear branch already vanishes at zero.
    fn hat_deriv(&self, x: f64) -> f64 {
        self.deriv(x)
    }

    fn lipschitz(&self) -> f64 {
        self.base.lipschitz()
    }

    fn lambda(&self) -> f64 {
        self.base.lambda()
    }
}

/// Build the `n`-th regularized approximation of `kernel`.
pub fn regularize(kernel: Arc<dyn PointyKernel>, n: u32) -> Result<Regularized> {
    if n == 0 {
        return Err(Error::domain("regularization index n must be >= 1"));
    }
    let cutoff = 1.0 / f64::from(n);
    let slope = f64::from(n) * kernel.deriv(cutoff);
    Ok(Regularized {
        base: kernel,
        n,
        slope,
        cutoff,
    })
}

type ScalarFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// A user-supplied kernel whose hypotheses were checked on sampled points.
#[derive(Clone)]
pub struct SampledKernel {
    eval: ScalarFn,
    deriv: ScalarFn,
    lipschitz: f64,
    lambda: f64,
}

impl fmt::Debug for SampledKernel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SampledKernel")
            .field("lipschitz", &self.lipschitz)
            .field("lambda", &self.lambda)
            .finish_non_exhaustive()
    }
}

/// Number of sample pairs used when admitting a custom kernel.
pub const HYPOTHESIS_SAMPLES: usize = 1000;
pub const HYPOTHESIS_TOL: f64 = 1e-10;

impl SampledKernel {
    /// Admit a custom kernel after checking evenness, derivative oddness,
    /// the derivative bound and `λ`-concavity on [`HYPOTHESIS_SAMPLES`] pairs.
    pub fn new<E, D>(eval: E, deriv: D, lipschitz: f64, lambda: f64) -> Result<Self>
    where
        E: Fn(f64) -> f64 + Send + Sync + 'static,
        D: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        if !(lipschitz.is_finite() && lipschitz >= 0.0) {
            return Err(Error::domain(format!("lipschitz bound {lipschitz} must be finite and >= 0")));
        }
        if !(lambda.is_finite() && lambda >= 0.0) {
            return Err(Error::domain(format!("lambda {lambda} must be finite and >= 0")));
        }
        let kernel = SampledKernel {
            eval: Arc::new(eval),
            deriv: Arc::new(deriv),
            lipschitz,
            lambda,
        };
        check_hypotheses(&kernel, HYPOTHESIS_SAMPLES, HYPOTHESIS_TOL)?;
        Ok(kernel)
    }
}

impl PointyKernel for SampledKernel {
    fn eval(&self, x: f64) -> f64 {
        (self.eval)(x)
    }

    fn deriv(&self, x: f64) -> f64 {
        (self.deriv)(x)
    }

    fn lipschitz(&self) -> f64 {
        self.lipschitz
    }

    fn lambda(&self) -> f64 {
        self.lambda
    }
}

/// Sampled check of evenness, oddness of the hatted derivative, boundedness
/// and one-sided concavity.
pub fn check_hypotheses(kernel: &dyn PointyKernel, samples: usize, tol: f64) -> Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_4b65);
    let draw = |rng: &mut ChaCha8Rng| -> f64 {
        // Every fourth sample lands near the kink.
        if rng.gen_bool(0.25) {
            rng.gen_range(-1e-3..1e-3)
        } else {
            rng.gen_range(-10.0..10.0)
        }
    };
    if kernel.hat_deriv(0.0) != 0.0 {
        return Err(Error::KernelHypothesis {
            hypothesis: "H2",
            detail: "hatted derivative must vanish at the origin".into(),
        });
    }
    for _ in 0..samples {
        let x = draw(&mut rng);
        let y = draw(&mut rng);
        let (kx, kmx) = (kernel.eval(x), kernel.eval(-x));
        if !(kx.is_finite() && kmx.is_finite()) || (kx - kmx).abs() > tol {
            return Err(Error::KernelHypothesis {
                hypothesis: "H2",
                detail: format!("K({x}) = {kx} but K({}) = {kmx}", -x),
            });
        }
        let (dx, dmx, dy) = (kernel.hat_deriv(x), kernel.hat_deriv(-x), kernel.hat_deriv(y));
        if (dx + dmx).abs() > tol {
            return Err(Error::KernelHypothesis {
                hypothesis: "H2",
                detail: format!("derivative not odd at x = {x}"),
            });
        }
        for (p, d) in [(x, dx), (y, dy)] {
            if !d.is_finite() || d.abs() > kernel.lipschitz() + tol {
                return Err(Error::KernelHypothesis {
                    hypothesis: "H3",
                    detail: format!("|K'({p})| = {} exceeds {}", d.abs(), kernel.lipschitz()),
                });
            }
        }
        let lhs = (dx - dy) * (x - y);
        let rhs = kernel.lambda() * (x - y) * (x - y);
        if lhs > rhs + tol {
            return Err(Error::KernelHypothesis {
                hypothesis: "H4",
                detail: format!("(K'({x}) - K'({y}))({x} - {y}) = {lhs} > {rhs}"),
            });
        }
    }
    Ok(())
}

/// Checked evaluation of `K(x)`.
pub fn eval_k(kernel: &dyn PointyKernel, x: f64) -> Result<f64> {
    ensure_finite(x, "x")?;
    Ok(kernel.eval(x))
}

/// Checked evaluation of the hatted derivative.
pub fn hat_deriv(kernel: &dyn PointyKernel, x: f64) -> Result<f64> {
    ensure_finite(x, "x")?;
    Ok(kernel.hat_deriv(x))
}

/// Kernel selection as it appears in scenario files.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum KernelSpec {
    #[default]
    Exponential,
    Regularized { n: u32 },
}

impl KernelSpec {
    pub fn build(&self) -> Result<Arc<dyn PointyKernel>> {
        match *self {
            KernelSpec::Exponential => Ok(Arc::new(Exponential)),
            KernelSpec::Regularized { n } => Ok(Arc::new(regularize(Arc::new(Exponential), n)?)),
        }
    }
}
