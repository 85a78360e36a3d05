//! Steering regressor: network, training, checkpoints and the transfer experiment.

mod checkpoint;
mod gradcheck;
mod network;
mod real;
mod train;
mod transfer;

pub use checkpoint::*;
pub use gradcheck::*;
pub use network::*;
pub use real::Real;
pub use train::*;
pub use transfer::*;
