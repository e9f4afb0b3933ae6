pub mod algebra;
pub mod audit;
pub mod error;
pub mod exec;
pub mod golden;
pub mod json;
pub mod mds;
pub mod net;
pub mod params;
pub mod plan;
pub mod protocol;

pub use error::{Error, Result};
