//! Regularized distance functions, Whitney-style partitions of unity, and
//! derivative-bound certificates for closed sets in the plane and on the line.

pub mod approx;
pub mod apps;
pub mod bump;
pub mod cells;
pub mod contour;
pub mod error;
pub mod field;
pub mod grid;
pub mod jet;
pub mod oracle;
pub mod regular;
pub mod report;
pub mod scene;
pub mod strat;

pub use error::{Error, Result};
