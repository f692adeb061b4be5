pub mod error;
pub mod ids;
pub mod memo;
pub mod model;
pub mod reclaim;
pub mod runtime;
pub mod scenarios;
pub mod summary;
pub mod trace;
pub mod workloads;
