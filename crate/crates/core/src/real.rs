use std::fmt::Debug;

use num_traits::{Float, FromPrimitive};

/// Scalar type accepted by the generic numerical kernels.
pub trait Real: Float + FromPrimitive + Debug + Send + Sync + 'static {
    fn lit(x: f64) -> Self {
        Self::from_f64(x).unwrap()
    }
}

impl Real for f32 {}
impl Real for f64 {}
