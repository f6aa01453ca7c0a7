//! AODVv2 route discovery with interchangeable routing-table update
//! policies, and a bounded model checker for routing loops.

pub mod checker;
pub mod cli;
mod codec;
pub mod domain;
pub mod engine;
pub mod network;
pub mod par;
pub mod policies;
pub mod scenarios;
pub mod system;
