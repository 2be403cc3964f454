//! File formats, a threaded identity solver and command-line plumbing around
//! [`facecap_core`].

pub mod config;
pub mod dataset;
mod error;
pub mod imageio;
pub mod model_file;
pub mod plot;
pub mod rig_file;
pub mod segnet_file;
pub mod sources;
pub mod threaded;

mod binio;

pub use error::{Error, Result};
