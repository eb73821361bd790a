//! Cohen–Davenport–Pichorides combination of base test functions.
//!
//! Given base functions `Φ_n` with `|Φ_n| ≤ 1` and `Re⟨Φ_n, F⟩ ≥ K`, the
//! engine builds `g` with `|g| ≤ 1` and
//! `⟨g, F⟩ ≥ (K / (4√t)) Σ_{n<i} (1 − 1/t)^n` after `i − 1` rounds, and
//! records everything needed to replay the construction.

pub mod bound2d;
pub mod engine;
pub mod pichorides;
pub mod selection;
pub mod tree;
pub mod verify;

pub use bound2d::{bound_2d, Bound2dConfig, Bound2dReport};
pub use engine::{cdp_iterate, cdp_iterate_sampled, CdpCertificate, CdpConfig, StopReason, Witness};
pub use pichorides::{choose_t, pichorides_lhs};
pub use selection::{davenport_select, feasibility_gauge, Selection, SelectionState};
pub use tree::{Chain, Degree};
pub use verify::{verify_certificate, VerifyReport};
