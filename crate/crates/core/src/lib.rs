pub mod checkpoint;
pub mod config;
pub mod deform;
pub mod error;
pub mod gaussian;
pub mod kv;
pub mod linalg;
pub mod model;
pub mod motion;
pub mod render;
pub mod scene;
pub mod training;

pub use error::{Error, Result};
pub use gaussian::Gaussian4D;
