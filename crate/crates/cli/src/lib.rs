pub mod artifacts;
pub mod bench;
pub mod cli;
pub mod error;
mod linalg;
pub mod metrics;
pub mod problem_file;
pub mod reference;

pub use cli::run;
