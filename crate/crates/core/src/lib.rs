//! Numerics, channel models, rate evaluation and the meta-learning optimizer.

pub mod adam;
pub mod allocation;
pub mod channel;
pub mod error;
pub mod init;
pub mod linalg;
pub mod meta;
pub mod mlp;
pub mod objectives;
pub mod rates;
pub mod rng;
pub mod scalar;
pub mod tape;

pub use error::{Error, Result};
pub use linalg::ComplexMatrix;
pub use rng::SeededRng;
pub use scalar::Real;
pub use tape::{Tape, Var};

pub type ComplexMatrix64 = ComplexMatrix<f64>;
pub type Tape64 = Tape<f64>;
pub type PrecoderMatrix64 = rates::PrecoderMatrix<f64>;
pub type CsitEnsemble64 = channel::CsitEnsemble<f64>;
pub type RisLink64 = channel::RisLink<f64>;
