//! Dwell-time stability analysis and controller synthesis for linear impulsive
//! and sampled-data systems, with independent verification oracles.

pub mod error;
pub mod linalg;
pub mod polymat;
pub mod sdp;
pub mod sos;
pub mod analysis;
pub mod oracle;
pub mod synthesis;
pub mod sampled_data;

pub use error::{Error, Result};
