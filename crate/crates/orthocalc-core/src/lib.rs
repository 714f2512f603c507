//! Directional variational calculus over orthodisjunctive constraint systems.
//!
//! The central objects are constraint systems `F(x) ∈ Γ` where `F` is a vector
//! of piecewise-smooth scalar expressions and `Γ` is a finite union of extended
//! boxes (products of possibly degenerate, possibly unbounded closed intervals).
//! For such systems the variational geometry is polyhedral enough to compute
//! exactly:
//!
//! * tangent, regular normal, limiting normal, and directional limiting normal
//!   cones of `Γ`, represented as canonical unions of sign cells ([`cones`]);
//! * limiting and directional limiting subdifferentials of the expression
//!   language, represented as unions of vertex-described polytopes ([`subdiff`]);
//! * M-stationarity and directional M-stationarity via exact rational
//!   feasibility subproblems ([`stationarity`]);
//! * constraint qualifications: NNAMCQ, directional FOSCMS, sampled GACQ/GGCQ,
//!   metric-subregularity evidence, and asymptotic-regularity falsification
//!   ([`quals`]);
//! * approximate-stationarity sequences: verification, generation by anchored
//!   quadratic penalties, and multiplier refinement ([`amseq`]);
//! * the orthodisjunctive subspace-MFC conditions and their M-stationarity
//!   consequence ([`submfc`]).
//!
//! Every exact computation is paired with an independent sampling oracle
//! ([`oracle`]) so that derived values can be cross-checked numerically.
//!
//! The crate is `no_std` (with `alloc`); IO, file formats, and the CLI live in
//! the companion `orthocalc` crate.

#![no_std]
#![deny(unsafe_code)]

extern crate alloc;

pub mod amseq;
pub mod boxes;
pub mod cones;
pub mod descent;
pub mod dirnbhd;
pub mod expr;
pub mod oracle;
pub mod poly;
pub mod problem;
pub mod quals;
pub mod rational;
pub mod simplex;
pub mod stationarity;
pub mod subdiff;
pub mod submfc;
pub mod vecops;
pub mod verdict;
