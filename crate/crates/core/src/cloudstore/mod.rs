//! Canonical point-cloud database and rigid registration.

mod icp;
mod kabsch;
pub mod knn;
mod store;

use thiserror::Error;

pub use icp::{icp_register, IcpParams, IcpResult};
pub use kabsch::{kabsch, sum_squared_residual};
pub use knn::{nearest_brute_force, nearest_neighbors, UniformGrid, BRUTE_FORCE_LIMIT};
pub use store::{
    ingest_dir, label_from_id, CloudRecord, StoreError, StoreIndex, STORE_SCHEMA_VERSION,
};

#[derive(Debug, Error, PartialEq)]
pub enum RegistrationError {
    #[error("degenerate correspondences: {0}")]
    DegenerateCorrespondences(String),
    #[error("correspondence lists differ in length ({src} vs {dst})")]
    LengthMismatch { src: usize, dst: usize },
    #[error("invalid registration parameters: {0}")]
    BadParams(String),
}
