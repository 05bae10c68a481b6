//! Sampling and reconstruction of signals in shift-invariant spaces from
//! send-on-delta (neuromorphic) events.

pub mod encoder;
pub mod error;
pub mod experiment;
pub mod io;
pub mod kernels;
pub mod quadrature;
pub mod recon_lp;
pub mod recon_pr;
pub mod sigmodel;

pub use error::{Error, Result};
