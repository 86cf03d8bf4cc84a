//! Exact image sizes of linear maps on product sets over a prime field,
//! the lower bounds that govern them, and searches for extremal grids.

pub mod bounds;
pub mod error;
pub mod explorer;
pub mod fp;
pub mod image;
pub mod linmap;
pub mod parse;
pub mod verify;

pub use bounds::{best_bound, BoundReport, Precondition, Theorem};
pub use error::{Error, Result};
pub use explorer::{ExtremalRecord, SearchConfig, SearchMode};
pub use fp::{PrimeModulus, ResidueSet, P_MAX};
pub use image::{GridFamily, ImageOptions, ImageSet};
pub use linmap::{MatrixFp, NormalizationResult, Transform};
