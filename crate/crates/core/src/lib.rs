pub mod error;
pub mod fiber;
pub mod mesh;
pub mod state;
pub mod net;
pub mod stress;
pub mod kinetic;
pub mod constitutive;
pub mod sim;

pub use error::{PhcmError, Result};
