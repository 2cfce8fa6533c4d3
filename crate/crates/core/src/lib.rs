//! Binary Gaussian-mixture classification in the overparameterized regime:
//! min-norm interpolation, ridge, averaging and hard-margin SVM estimators,
//! their exact risks and theorem bounds, and a seeded sweep engine.

pub mod constants;
pub mod error;
pub mod estimators;
pub mod experiments;
pub mod io;
pub mod linalg;
pub mod model;
pub mod quadforms;
pub mod regimes;
pub mod risk;
pub mod seeds;
pub mod verify;

pub use constants::Constants;
pub use error::{GmmError, Result};
pub use model::{sample_dataset, Dataset, GmmModel, LabelMode, Spectrum};
