use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, NumCast};

/// Floating point scalar the numeric kernels are written against: `f32` or `f64`.
pub trait Scalar:
    Float + FromPrimitive + NumCast + Sum + Debug + Display + Default + Send + Sync + 'static
{
    /// Lossy conversion from an `f64` literal or loaded value.
    #[inline]
    fn of(v: f64) -> Self {
        <Self as NumCast>::from(v).expect("f64 is representable in every Scalar")
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().expect("Scalar converts to f64")
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

pub(crate) fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).fold(T::zero(), |acc, (&x, &y)| acc + x * y)
}

pub(crate) fn norm<T: Scalar>(a: &[T]) -> T {
    dot(a, a).sqrt()
}

/// Divides `v` by its L2 norm. Returns `None` for zero or non-finite norms.
pub(crate) fn normalized<T: Scalar>(v: &[T]) -> Option<Vec<T>> {
    let n = norm(v);
    if n == T::zero() || !n.is_finite() {
        return None;
    }
    Some(v.iter().map(|&x| x / n).collect())
}
