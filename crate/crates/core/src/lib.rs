//! Three-sided orthogonal range reporting in rank space with
//! `O(1 + k/B)` query I/Os and linear space, plus the colored range,
//! colored prefix and top-k colored prefix structures built on it.
//!
//! Every structure lives in a simulated block store ([`emsim::Store`]) and
//! every query charges its block transfers to a [`emsim::Session`], so the
//! I/O and space bounds can be measured directly.

pub mod catalog;
pub mod checks;
pub mod colored;
pub mod emsim;
mod error;
pub mod history;
pub mod microbase;
pub mod oracle;
pub mod packedpred;
pub mod persist1d;
pub mod point;
pub mod polybase;
pub mod pstlayout;
pub mod strindex;
pub mod threesided;
pub mod topk;

pub use error::{Error, Result};
