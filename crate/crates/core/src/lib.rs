//! Joint model-based estimation of quantitative MRI parameter maps (log PD,
//! log R1, log R2*, logit MTsat) from multi-echo spoiled gradient echo data.

pub mod cli;
pub mod error;
pub mod estatics;
pub mod io;
pub mod linalg;
pub mod noise;
pub mod optim;
pub mod projection;
pub mod regularization;
pub mod signal;
pub mod simulate;
pub mod toys;
pub mod types;
pub mod uncertainty;

pub use error::{MpmError, Result};
pub use types::*;
