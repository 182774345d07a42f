pub mod encoders;
pub mod error;
pub mod io;
pub mod kb;
pub mod linker;
pub mod pipeline;
pub mod scorers;
pub mod tensor;
pub mod text;
pub mod trainer;

pub use error::{Error, Result};
