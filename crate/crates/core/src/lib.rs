pub mod curvature;
pub mod error;
pub mod fiber;
pub mod fields;
pub mod format;
pub mod geodesics;
pub mod metric;
pub mod random;
pub mod splitting;
pub mod strategy;
pub mod submanifolds;
pub mod verify;

pub use error::{GeometryError, Result};
