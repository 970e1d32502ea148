//! Correlation statistics, the quadratic regression surrogate, and
//! variance-based (Sobol) sensitivity indices.

pub mod correlation;
pub mod sobol;
pub mod special;
pub mod surrogate;

pub use correlation::{
    pearson, per_entity_degree_correlation, spearman, Correlation, CorrelationResult,
    DegreeCorrelation,
};
pub use sobol::{sobol_indices, FnModel, Model, SobolIndices};
pub use surrogate::{fit_quadratic, fit_surrogate, LabeledSample, Surrogate, Target};
