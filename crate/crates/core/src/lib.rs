//! Exploit validation for MiniSol contracts.
//!
//! The pipeline parses a contract, derives candidate exploit paths from a
//! vulnerability report, synthesizes proof-of-concept scripts, runs them on a
//! small deterministic VM and classifies the outcome from the trace and the
//! attacker's balance changes. Failed scripts are refined and re-queued until
//! a verdict is reached or the budget runs out.

pub mod frontend;
pub mod num;
pub mod analysis;
pub mod poc;
pub mod vm;
pub mod oracle;
pub mod refine;
pub mod pipeline;
