//! Exact-arithmetic workbench for the calculus of correspondences over
//! finite structures.
//!
//! A *correspondence* is a nonempty binary relation with finite fibres on
//! both sides. On a finite structure the complete types over a parameter
//! set `A` are exactly the orbits of the automorphism group fixing `A`
//! pointwise, which makes the whole calculus computable:
//!
//! * [`finstruct`] models finite relational/functional structures and
//!   generates the three example families (binary trees, level towers,
//!   shift tori).
//! * [`autgroup`] computes automorphism generators and element/pair orbits
//!   relative to a pointwise-fixed parameter set.
//! * [`corrcalc`] is the correspondence calculus proper: fibres,
//!   uniformity, exact ratios, inverse, composition with its multiplicity
//!   ledger, orbit decomposition, products, graphs and projections.
//! * [`unimodlab`] checks measurability, commensurability and
//!   unimodularity at orbit level, and verifies the block-ledger
//!   arithmetic for multi-orbit correspondences.
//! * [`cofinite`] gives finite presentations of countably infinite sets
//!   (disjoint rays plus extra points) and eventually-uniform maps with
//!   finite exception tables, with a materialization oracle.
//! * [`repair`] builds, from two eventually-uniform maps with finitely
//!   many exceptional fibres and distinct fibre sizes, new maps with
//!   exactly constant fibre sizes, as an independently verifiable
//!   certificate.
//!
//! All arithmetic is exact (integers and normalized rationals); nothing
//! in this crate uses floating point.

pub mod autgroup;
pub mod cofinite;
pub mod corrcalc;
pub mod finstruct;
pub mod repair;
pub mod unimodlab;
