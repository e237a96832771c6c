use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::scalar::{lit, Mat2, Scalar, Vec2};

type ValueFn<T> = dyn Fn(Vec2<T>) -> Vec2<T> + Send + Sync;
type JacobianFn<T> = dyn Fn(Vec2<T>) -> Mat2<T> + Send + Sync;

/// Analytic 2-vector field of the plane, optionally with its Jacobian.
#[derive(Clone)]
pub struct VectorField<T> {
    value: Option<Arc<ValueFn<T>>>,
    jacobian: Option<Arc<JacobianFn<T>>>,
}

impl<T> fmt::Debug for VectorField<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.value.is_none() {
            f.write_str("VectorField::Zero")
        } else {
            f.write_str("VectorField::Fn")
        }
    }
}

impl<T: Scalar> Default for VectorField<T> {
    fn default() -> Self {
        Self::zero()
    }
}

impl<T: Scalar> VectorField<T> {
    pub fn zero() -> Self {
        Self { value: None, jacobian: None }
    }

    pub fn new(f: impl Fn(Vec2<T>) -> Vec2<T> + Send + Sync + 'static) -> Self {
        Self { value: Some(Arc::new(f)), jacobian: None }
    }

    pub fn with_jacobian(
        f: impl Fn(Vec2<T>) -> Vec2<T> + Send + Sync + 'static,
        df: impl Fn(Vec2<T>) -> Mat2<T> + Send + Sync + 'static,
    ) -> Self {
        Self { value: Some(Arc::new(f)), jacobian: Some(Arc::new(df)) }
    }

    pub fn is_zero(&self) -> bool {
        self.value.is_none()
    }

    pub fn eval(&self, p: Vec2<T>) -> Vec2<T> {
        match &self.value {
            Some(f) => f(p),
            None => [T::zero(); 2],
        }
    }

    /// Jacobian `J[i][j] = ∂_j F_i`; central differences when no closed form
    /// was supplied.
    pub fn jacobian(&self, p: Vec2<T>) -> Mat2<T> {
        if let Some(df) = &self.jacobian {
            return df(p);
        }
        let Some(f) = &self.value else { return [[T::zero(); 2]; 2] };
        let h = lit::<T>(1e-6);
        let mut out = [[T::zero(); 2]; 2];
        for j in 0..2 {
            let mut pp = p;
            let mut pm = p;
            pp[j] += h;
            pm[j] -= h;
            let (a, b) = (f(pp), f(pm));
            for i in 0..2 {
                out[i][j] = (a[i] - b[i]) / (h + h);
            }
        }
        out
    }
}

/// Body force of the annulus benchmark, exactly as published (including the
/// `-α y (…)` term in the second component).
pub fn benchmark_force<T: Scalar>(alpha: T) -> VectorField<T> {
    VectorField::new(move |p: Vec2<T>| {
        let (x, y) = (p[0], p[1]);
        let r2 = x * x + y * y;
        let r = r2.sqrt();
        let swirl = alpha * y * (lit::<T>(15.0) * r2 - T::one()) / (lit::<T>(5.0) * r2 * r);
        let radial = (lit::<T>(1426.0) + lit::<T>(31.0) / r2 + lit::<T>(753.0) / r - lit::<T>(1860.0) * r)
            / lit::<T>(775.0);
        [
            -x * x * x + swirl - x * (y * y + radial),
            -y * y * y - swirl - y * (x * x + radial),
        ]
    })
}

/// Data of the stationary Navier–Stokes problem.
#[derive(Clone, Debug)]
pub struct FluidParams<T> {
    /// Inverse Reynolds number.
    pub alpha: T,
    pub body_force: VectorField<T>,
    /// Boundary velocity, zero by default.
    pub dirichlet: VectorField<T>,
}

impl<T: Scalar> FluidParams<T> {
    pub fn new(alpha: T, body_force: VectorField<T>) -> Result<Self> {
        let p = Self { alpha, body_force, dirichlet: VectorField::zero() };
        p.validate()?;
        Ok(p)
    }

    /// Benchmark force with homogeneous boundary data.
    pub fn benchmark(alpha: T) -> Result<Self> {
        Self::new(alpha, benchmark_force(alpha))
    }

    pub fn with_dirichlet(mut self, g: VectorField<T>) -> Self {
        self.dirichlet = g;
        self
    }

    /// Same data with a different viscosity (the force is kept as given).
    pub fn with_alpha(&self, alpha: T) -> Self {
        Self { alpha, ..self.clone() }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > T::zero()) || !self.alpha.is_finite() {
            return Err(Error::InvalidParameter(format!("alpha must be positive, got {}", self.alpha)));
        }
        Ok(())
    }
}
