pub mod fixtures;
pub mod harness;
pub mod llm;
pub mod logic;
pub mod pipeline;
pub mod prover;
pub mod theory;
