pub mod checkpoint;
pub mod detector;
pub mod error;
pub mod eval;
pub mod features;
pub mod losses;
pub mod manifest;
pub mod nn;
pub mod occlusion;
pub mod pipeline;
pub mod plot;
pub mod recognizer;
pub mod rgait_net;
pub mod silhouette;
pub mod toy;

pub use error::{Error, Result};
