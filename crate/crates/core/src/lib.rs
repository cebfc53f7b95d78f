pub mod cli;
pub mod clustering;
pub mod data;
pub mod density;
pub mod encoder;
pub mod error;
pub mod matrix;
pub mod plotting;
pub mod projection;
pub mod protocols;
pub mod seed;

pub use error::{Error, Result};
