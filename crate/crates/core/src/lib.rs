//! Task-oriented affordance segmentation over point clouds: query parsing,
//! image grounding, refusal logic, registration against a canonical cloud
//! store, and per-point affordance scoring.

pub mod affordseg;
pub mod bench;
pub mod cloudio;
pub mod cloudstore;
pub mod config;
pub mod decision;
pub mod geometry;
pub mod model;
pub mod neural;
pub mod pipeline;
pub mod query;
pub mod types;
pub mod util;
pub mod vlm;

pub use decision::{CompatibilityTable, DecisionOutcome, ReasonCode};
pub use geometry::{PointCloud, RigidTransform};
pub use query::{parse_query, InteractionQuery, QueryVocabulary};
pub use types::{AffordanceMap, BBox, GroundingResult, SegmentationResult};
