//! Decides monotone answerability of conjunctive queries over schemas whose
//! access methods may carry result bounds.
//!
//! The pipeline simplifies result bounds away, reduces answerability to
//! query containment under constraints, and decides containment either with
//! a restricted chase or, for inclusion dependencies of bounded width, with an
//! exact procedure over a linearized signature.

#![no_std]

extern crate alloc;

pub mod chase;
pub mod constraints;
pub mod decide;
pub mod linearize;
pub mod model;
pub mod oracle;
pub mod plans;
pub mod reduction;
pub mod schema;
