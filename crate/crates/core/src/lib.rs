pub mod align;
pub mod cli;
pub mod error;
pub mod evaluation;
pub mod io;
pub mod matchers;
pub mod rotation;
pub mod signed_perm;
pub mod synthesis;
pub mod tbv;

pub use error::{AlignError, Result};
