//! Floating-point abstraction shared by every numerical routine in the crate.

use std::fmt::{Debug, Display, LowerExp};
use std::iter::Sum;

use num_traits::{Float, FloatConst, FromPrimitive, NumAssign, ToPrimitive};

/// Real scalar the geometry, assembly and solvers are generic over.
///
/// Implemented for `f32` and `f64`. Tolerances throughout the crate are
/// expressed in `f64` and converted with [`lit`], so the `f32` instantiation
/// compiles and runs but cannot meet the tight tolerances of the Newton solver.
pub trait Scalar:
    Float + FloatConst + FromPrimitive + ToPrimitive + NumAssign + Sum + Default + Debug + Display + LowerExp + Send + Sync + 'static
{
    /// Name used in diagnostics.
    const NAME: &'static str;
}

impl Scalar for f32 {
    const NAME: &'static str = "f32";
}

impl Scalar for f64 {
    const NAME: &'static str = "f64";
}

/// Converts an `f64` literal into `T`.
#[inline(always)]
pub fn lit<T: Scalar>(x: f64) -> T {
    T::from_f64(x).expect("literal representable in scalar type")
}

/// Converts a count or index into `T`.
#[inline(always)]
pub fn from_usize<T: Scalar>(n: usize) -> T {
    T::from_usize(n).expect("count representable in scalar type")
}

#[inline(always)]
pub fn to_f64<T: Scalar>(x: T) -> f64 {
    x.to_f64().unwrap_or(f64::NAN)
}

/// 2D point or vector.
pub type Vec2<T> = [T; 2];

/// 2x2 matrix stored row-major, `m[i][j] = d u_i / d x_j` when used as a Jacobian.
pub type Mat2<T> = [[T; 2]; 2];

#[inline]
pub fn dot<T: Scalar>(a: Vec2<T>, b: Vec2<T>) -> T {
    a[0] * b[0] + a[1] * b[1]
}

#[inline]
pub fn cross<T: Scalar>(a: Vec2<T>, b: Vec2<T>) -> T {
    a[0] * b[1] - a[1] * b[0]
}

#[inline]
pub fn sub<T: Scalar>(a: Vec2<T>, b: Vec2<T>) -> Vec2<T> {
    [a[0] - b[0], a[1] - b[1]]
}

#[inline]
pub fn norm<T: Scalar>(a: Vec2<T>) -> T {
    a[0].hypot(a[1])
}

#[inline]
pub fn mat_vec<T: Scalar>(m: Mat2<T>, v: Vec2<T>) -> Vec2<T> {
    [m[0][0] * v[0] + m[0][1] * v[1], m[1][0] * v[0] + m[1][1] * v[1]]
}

#[inline]
pub fn frobenius<T: Scalar>(a: Mat2<T>, b: Mat2<T>) -> T {
    a[0][0] * b[0][0] + a[0][1] * b[0][1] + a[1][0] * b[1][0] + a[1][1] * b[1][1]
}

/// Max-norm of a slice; zero for an empty slice.
pub fn max_abs<T: Scalar>(v: &[T]) -> T {
    v.iter().fold(T::zero(), |m, x| m.max(x.abs()))
}
