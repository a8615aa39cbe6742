//! Two-tier prompting pipeline: a strong model decomposes a question into
//! reasoning traces, a weaker model answers with them, and an LLM judge
//! scores the result. Includes Base and CoT baselines plus a seeded,
//! reproducible evaluation harness.

pub mod cli;
pub mod dataset;
pub mod gateway;
pub mod harness;
pub mod pipeline;
pub mod prompts;
pub mod scoring;
