//! Cost-aware scheduling of stream workflows across multiple clouds.
//!
//! The crate is generic over the floating-point scalar ([`Scalar`], for
//! `f32` and `f64`). The aliases below fix it to `f64`.

pub mod cloud;
pub mod cost;
pub mod events;
pub mod experiment;
pub mod ga;
pub mod greedy;
pub mod plan;
pub mod problem;
pub mod reference;
pub mod scenario;
pub mod scalar;
pub mod seed;
pub mod sim;
pub mod workflow;

pub use scalar::Scalar;

pub type Workflow = workflow::StreamWorkflow<f64>;
pub type Catalog = cloud::CloudCatalog<f64>;
pub type Rates = cost::RateState<f64>;
pub type Costs = cost::CostBreakdown<f64>;

/// Single-precision variants.
pub mod f32 {
    pub type Workflow = crate::workflow::StreamWorkflow<f32>;
    pub type Catalog = crate::cloud::CloudCatalog<f32>;
    pub type Rates = crate::cost::RateState<f32>;
    pub type Costs = crate::cost::CostBreakdown<f32>;
}
