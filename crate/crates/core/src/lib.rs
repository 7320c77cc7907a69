//! Black-box root-cause search for parameterized computational pipelines.
//!
//! Given prior runs of a pipeline and the ability to execute new parameter
//! configurations, the algorithms here infer minimal definitive root causes of
//! failure as boolean explanations over parameter-comparator-value triples.

pub mod config;
pub mod ddt;
pub mod engine;
pub mod minimize;
pub mod model;
pub mod shortcut;
pub mod stacked;
pub mod synth;
pub mod universe;
