//! Floating-point scalar abstraction shared by the tensor runtime and k-means.

use std::fmt::{Debug, Display};

use num_traits::{Float, FromPrimitive, ToPrimitive};

/// Real scalar usable as tensor element type: `f32` or `f64`.
pub trait Scalar:
    Float + FromPrimitive + ToPrimitive + Debug + Display + Default + Send + Sync + 'static
{
    /// Lossy conversion from a model parameter.
    fn from_param(value: f64) -> Self {
        <Self as FromPrimitive>::from_f64(value).unwrap_or_else(Self::nan)
    }

    fn to_param(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }

    fn from_index(index: usize) -> Self {
        <Self as FromPrimitive>::from_usize(index).unwrap_or_else(Self::nan)
    }

    fn sigmoid(self) -> Self {
        Self::one() / (Self::one() + (-self).exp())
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sigmoid_matches_closed_form() {
        let x = 0.5f64;
        assert_eq!(x.sigmoid(), 1.0 / (1.0 + (-0.5f64).exp()));
        assert!((0.0f32.sigmoid() - 0.5).abs() < f32::EPSILON);
    }
}
