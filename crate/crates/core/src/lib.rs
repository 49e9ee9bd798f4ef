//! Value normalization: size-capped clustering, cost-based plan selection,
//! and the human Split/Merge cleaning procedures with verifiable accuracy.

pub mod calibration;
pub mod costmodel;
pub mod dsu;
pub mod error;
pub mod exec;
pub mod hac;
pub mod io;
pub mod metrics;
pub mod model;
pub mod multiuser;
pub mod pipeline;
pub mod planner;
pub mod procedures;
pub mod similarity;
pub mod simulator;
pub mod synth;
pub mod verification;

pub use error::{Error, Result};
pub use exec::Execution;
pub use model::{Cluster, GoldPartition, Partition, ValueId, ValueTable};
