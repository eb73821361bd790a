//! Exponential sums of finite lattice sets.
//!
//! For a finite `A ⊂ Z^d` (d ≤ 3) the exponential sum is
//! `F_A(x) = Σ_{a∈A} e(a·x)` on the torus `T^d`. This crate measures the
//! L¹, L² and L∞ norms of `F_A` with rigorous quadrature bounds and builds
//! replayable certificates for lower bounds on `‖F_A‖₁`:
//!
//! * [`lattice`]: sets, rows, planar slices and example families;
//! * [`grid`]: sampled functions on torus grids, inner products, spectra;
//! * [`norms`]: norm estimates with refinement traces;
//! * [`testfns`]: base test functions (exponentials, row-sign functions);
//! * [`cdp`]: the Cohen–Davenport–Pichorides combination engine;
//! * [`freiman`]: Freiman isomorphisms and the nested 3-D pipeline.

pub mod accum;
pub mod cdp;
pub mod config;
pub mod error;
pub mod freiman;
pub mod grid;
pub mod lattice;
pub mod norms;
pub mod testfns;

pub use config::Limits;
pub use error::{Error, Result};
pub use grid::GridFunction;
pub use lattice::LatticeSet;
