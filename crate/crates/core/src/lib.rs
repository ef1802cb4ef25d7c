//! Vision-and-language navigation harness: a history-buffered, prompt-driven
//! inference loop that talks to a decision policy, a built-in grid simulator,
//! and the DTG / SR / SPL metric suite.

pub mod model;
pub mod sim;
pub mod policy;
pub mod prompt;
pub mod navloop;
pub mod eval;
