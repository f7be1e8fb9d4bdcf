//! Sparse transfer learning for high-dimensional linear regression.
//!
//! Auxiliary data sources are stacked with the target source into one
//! block-structured regression whose coefficient vector holds the target
//! coefficients followed by one offset block per auxiliary source. The stacked
//! problem is solved either with an L0 constraint and an information-criterion
//! sweep over the support size ([`select::fit_sotl`]) or with an L1 penalty
//! chosen by cross-validation ([`select::fit_sjets`]).

pub mod cli;
pub mod datamodel;
pub mod dataio;
pub mod error;
pub mod l0solve;
pub mod l1solve;
pub mod select;
pub mod simlab;
pub mod stacking;

pub use datamodel::{CoefficientEstimate, FitResult, GroupData, HbicPoint, MultiSourceProblem};
pub use error::{Error, Result};
pub use stacking::{build_stacked, StackedSystem};
