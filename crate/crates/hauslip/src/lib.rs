//! Construction and empirical verification of entropy-adapted metrics for
//! three families of dynamical systems: linear maps on tori, subshifts, and
//! positively expansive maps. Each pipeline emits a certificate comparing
//! `HD * log+ Lip` against the topological entropy.

pub mod estimators;
pub mod exact_linalg;
pub mod expansive;
pub mod rat;
pub mod scalar;
pub mod symbolic;
pub mod torus_metric;

pub mod certificate;
pub mod cli;
pub mod pipeline;

pub use scalar::Real;

/// Default scalar for metric evaluation.
pub type Scalar = f64;

// Concrete aliases at the default scalar.
pub type BlockMetric64 = torus_metric::BlockMetric<f64>;
pub type ProductMetric64 = torus_metric::ProductMetric<f64>;
pub type TorusMetric64 = torus_metric::TorusMetric<f64>;
pub type DimensionFit64 = estimators::DimensionFit<f64>;
