pub mod cli;
pub mod data;
pub mod engine;
pub mod error;
pub mod frontend;
pub mod hierarchy;
pub mod pathways;
pub mod plasticity;
pub mod stats;
pub mod util;

pub use error::{Error, Result};
