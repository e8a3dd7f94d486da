use std::fmt::{Debug, Display};

use num_traits::{Float, FromPrimitive, ToPrimitive};

/// Real-number type the engine computes with: numeric attribute values,
/// interval bounds, weights and information-loss ratios.
pub trait Scalar:
    Float + FromPrimitive + ToPrimitive + Debug + Display + Default + Send + Sync + 'static
{
    /// Converts a count into the scalar domain.
    fn from_count(n: usize) -> Self {
        Self::from_usize(n).expect("count representable as float")
    }

    /// Lossy conversion used by serializers and reports.
    fn as_f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }

    fn from_f64_lossy(v: f64) -> Self {
        Self::from_f64(v).unwrap_or_else(Self::nan)
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

/// Running arithmetic mean.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct RunningMean<T> {
    sum: T,
    count: usize,
}

impl<T: Scalar> RunningMean<T> {
    pub fn push(&mut self, value: T) {
        self.sum = self.sum + value;
        self.count += 1;
    }

    pub fn mean(&self) -> Option<T> {
        (self.count > 0).then(|| self.sum / T::from_count(self.count))
    }

    pub fn count(&self) -> usize {
        self.count
    }
}
