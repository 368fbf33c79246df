//! Drivers for the three applications.

pub mod breuer_major;
pub mod neural_net;
pub mod spde;
