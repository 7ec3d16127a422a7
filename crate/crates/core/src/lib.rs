//! Shrinkage estimation of singular covariance matrices, precision matrices
//! and discriminant coefficients, with unbiased risk estimates and a Monte
//! Carlo harness.

pub mod error;
pub mod estimators;
pub mod harness;
pub mod ingest;
pub mod io;
pub mod linalg;
pub mod model;
pub mod ure;

pub use error::{Error, Result};
pub use estimators::{Estimate, EstimatorSpec, Family, Preset, Resolved, Task};
pub use harness::{
    CovarianceModel, DominationRecord, ExperimentConfig, PrialRecord, UreRecord,
};
pub use linalg::{LossValue, SpectralDecomposition};
pub use model::{Centering, PopulationModel, SampleStatistics};
pub use ure::{PsiProfile, ShrinkageRule, UreValue};
