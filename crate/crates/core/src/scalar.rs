//! Scalar abstraction shared by the value model, the trainer and the selector.

use std::fmt::{Debug, Display};

use num_traits::{Float, FromPrimitive, ToPrimitive};
use serde::de::DeserializeOwned;
use serde::Serialize;

/// Floating-point type usable as a value-model parameter and prediction.
///
/// Implemented for `f32` and `f64`. Conversions to and from `f64` go through
/// `num-traits` so the trainer can ingest labels that were computed as
/// probabilities in double precision.
pub trait Scalar:
    Float + FromPrimitive + ToPrimitive + Default + Debug + Display + Serialize + DeserializeOwned + Send + Sync + 'static
{
    fn from_f64_lossy(v: f64) -> Self {
        <Self as FromPrimitive>::from_f64(v).unwrap_or_else(Self::nan)
    }

    fn to_f64_lossy(self) -> f64 {
        ToPrimitive::to_f64(&self).unwrap_or(f64::NAN)
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trips_through_f64() {
        assert_eq!(<f32 as Scalar>::from_f64_lossy(0.25).to_f64_lossy(), 0.25);
        assert_eq!(<f64 as Scalar>::from_f64_lossy(1e-300), 1e-300);
    }
}
