pub mod artifact;
pub mod bsscca;
pub mod error;
pub mod eval;
pub mod io;
pub mod linalg;
pub mod model_selection;
pub mod pipeline;
pub mod preproc;
pub mod synth;
pub mod tensor;

pub use error::{Error, Result};
