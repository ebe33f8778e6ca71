//! Bottleneck-guided design-space exploration of GPU nodes for LLM inference.

pub mod bench;
pub mod config;
pub mod design_space;
pub mod llm;
pub mod lumina;
pub mod optimizers;
pub mod pareto;
pub mod perf_model;
pub mod store;
pub mod workload;
