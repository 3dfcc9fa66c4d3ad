pub mod analysis;
pub mod doorworld;
pub mod error;
pub mod foresight;
pub mod numkernel;
pub mod shlstm;
pub mod trainer;

pub use error::{Error, Result};
