//! Solvers for robust Bayesian persuasion against approximately
//! best-responding receivers.
//!
//! A sender commits to a signaling scheme; the receiver may adversarially
//! play any action within `delta` of their best response at the induced
//! posterior. This crate computes optimal and near-optimal schemes for the
//! resulting max-min problem:
//!
//! - [`model`] — domain types and the worst-case evaluation semantics.
//! - [`lp`] — the linear-program representation and bundled simplex solver.
//! - [`exact`] — the exact optimum over the full subset-action signal space
//!   (tractable for small action counts).
//! - [`smallstate`] — feasible-tuple discovery by graph search plus the
//!   restricted program (tractable for small state counts).
//! - [`qptas`] — the grid-based epsilon-approximation scheme.
//! - [`instances`] — worked examples, hard-instance generators, seeded
//!   random instances.
//! - [`oracle`] — independent verification: brute-force enumeration, grid
//!   lower bounds, signal merging, small-support search.

pub mod exact;
pub mod instances;
pub mod lp;
pub mod model;
pub mod oracle;
pub mod qptas;
pub mod smallstate;

pub(crate) mod decomp;
