//! Hybridized lowest-order Raviart-Thomas mixed finite elements for
//! nonlinear parabolic equations with Darcy-Forchheimer flux laws.

pub mod condense;
pub mod config;
pub mod constitutive;
pub mod elements;
pub mod equivcheck;
pub mod export;
pub mod expr;
pub mod error;
pub mod globalsys;
pub mod march;
pub mod mesh;
pub mod mms;
pub mod sparse;

pub use error::{Error, Result};
