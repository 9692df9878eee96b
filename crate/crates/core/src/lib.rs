//! Knowledge-graph construction and recommendation driven by crowd input.

pub mod analytics;
pub mod captcha;
pub mod consensus;
pub mod crowd;
pub mod engine;
pub mod graph;
pub mod ids;
pub mod recommend;
pub mod schema;
pub mod sim;
