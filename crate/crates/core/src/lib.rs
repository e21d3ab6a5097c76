pub mod bmi_stab;
pub mod bounds;
pub mod error;
pub mod ga;
pub mod linalg;
pub mod lmi;
pub mod lqr;
pub mod plant;
pub mod regpso;
pub mod sim;
pub mod synth;

pub use bounds::SearchBox;
pub use error::{Error, Result};
pub use linalg::Matrix;
