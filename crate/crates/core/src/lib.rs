//! Policy-gradient training of recurrent policies with an ℓ2,1 (group LASSO)
//! penalty on the memory layer, the navigation environments used to study it,
//! and post-training memory analysis.

pub mod amr;
pub mod analyze;
pub mod envs;
pub mod error;
pub mod net;
pub mod train;
pub mod numerics;

pub use error::{Error, Result};
