//! Byzantine agreement from signed messages built on pairwise
//! one-time-pad keys and division hashing.
//!
//! The crate is organised bottom-up:
//!
//! * [`gf2hash`]: GF(2) polynomials, irreducibility, the division hash.
//! * [`keystore`]: pairwise key pools, one-time pad, consumption accounting.
//! * [`qsm`]: per-recipient partial signatures, signature matrices, frames.
//! * [`qsba`]: the commander/lieutenant state machine and decision rule.
//! * [`simnet`]: deterministic round-based network with scripted adversaries.
//! * [`baselines`]: three-party comparison protocols and the QDS-based flow.
//! * [`metrics`]: closed-form resource counts, oracles, key budgets.
//! * [`scenario`]: scenario files, presets, reports and command drivers.

pub mod baselines;
pub mod gf2hash;
pub mod keystore;
pub mod metrics;
pub mod qsba;
pub mod qsm;
pub mod scenario;
pub mod simnet;

pub use gf2hash::{BitString, GF2Poly, HashKey};
pub use keystore::{Keystore, LinkId, NodeId};
pub use metrics::ResourceLedger;
