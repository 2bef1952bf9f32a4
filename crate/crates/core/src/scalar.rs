use std::fmt::{Debug, Display, LowerExp};

use num_traits::{Float, FloatConst, FromPrimitive, ToPrimitive};

/// Floating point scalar the numeric core is generic over: `f32` or `f64`.
///
/// Tolerances that are tied to the precision of the representation live here so
/// that the same code is meaningful for both widths.
pub trait Scalar:
    Float + FloatConst + FromPrimitive + ToPrimitive + Debug + Display + LowerExp + Default + Send + Sync + 'static
{
    /// Allowed deviation of `∫f` from 1 for a value to count as a density.
    const DENSITY_TOL: f64;
    /// Breakpoints closer than this are merged into one.
    const MERGE_EPS: f64;

    /// Lossy conversion from an `f64` literal.
    #[inline]
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("f64 literal representable")
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().expect("scalar converts to f64")
    }

    fn density_tol() -> Self {
        Self::lit(Self::DENSITY_TOL)
    }

    fn merge_eps() -> Self {
        Self::lit(Self::MERGE_EPS)
    }
}

impl Scalar for f64 {
    const DENSITY_TOL: f64 = 1e-9;
    const MERGE_EPS: f64 = 1e-14;
}

impl Scalar for f32 {
    const DENSITY_TOL: f64 = 1e-4;
    const MERGE_EPS: f64 = 1e-6;
}

/// `x ln x` with the removable singularity at 0 filled in.
#[inline]
pub(crate) fn xlnx<T: Scalar>(x: T) -> T {
    if x <= T::zero() {
        T::zero()
    } else {
        x * x.ln()
    }
}
