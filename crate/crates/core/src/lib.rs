pub mod adjacency;
pub mod dist;
pub mod dp;
pub mod error;
pub mod graph;
pub mod linalg;
pub mod metrics;
pub mod mixture;
pub mod model;
pub mod partition;
pub mod sampler;
pub mod simgen;
