//! Unsupervised leaf/wood separation for multispectral airborne LiDAR.

pub mod binio;
pub mod cli;
pub mod error;
pub mod evalkit;
pub mod geomfeat;
pub mod pcdata;
pub mod preprocess;
pub mod pipeline;
pub mod primitives;
pub mod spatial;
pub mod superpoint;
pub mod synthforest;
pub mod trainer;

pub use error::{Error, Result};
