//! Core library for verifying artifact-centric multi-agent systems.
//!
//! Agents carry relational database instances as local states and evolve via
//! first-order precondition/postcondition action rules. This crate provides:
//!
//! - relational states and active-domain first-order evaluation ([`relational`]),
//! - the FO-CTLK specification language, parser, and fragment classifier ([`logic`]),
//! - explicit finite models with temporal and epistemic relations ([`acmas`]),
//! - a fixpoint-labeling model checker ([`checker`]),
//! - bisimulation, uniformity, and boundedness checks ([`equivalence`]),
//! - declarative agent programs and their induced models ([`program`]),
//! - finite-domain abstraction sizing and bounded checking ([`abstraction`]).
//!
//! The crate is `no_std` (with `alloc`); all IO lives in the companion `acmc`
//! crate. Every operation is deterministic: collections are ordered, and all
//! search orders are canonical.

#![cfg_attr(not(test), no_std)]
#![forbid(unsafe_code)]

extern crate alloc;

mod lex;

pub mod abstraction;
pub mod acmas;
pub mod checker;
pub mod equivalence;
pub mod logic;
pub mod program;
pub mod relational;
