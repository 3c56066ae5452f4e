//! Profile-injection attacks against a tag-based recommender, spam filters
//! that try to remove them, and the harness that measures both.

pub mod attackgen;
pub mod cli;
pub mod classify;
pub mod corpus;
pub mod error;
pub mod evalharness;
pub mod recommend;
pub mod seeds;
pub mod synth;
pub mod vectorize;

pub use error::{Error, Result};
