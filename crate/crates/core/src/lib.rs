pub mod descent;
pub mod error;
pub mod mesh;
pub mod par;

pub use error::{Error, Result};
pub mod constitutive;
pub mod data;
pub mod evolution;
mod splitting;
pub mod stationary;
pub mod oracle;
pub mod report;
pub mod asymptotics;
pub mod limits;
pub mod config;
pub mod experiment;
