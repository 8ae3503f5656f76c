//! Compressed-sensing recovery via linear programming.
//!
//! Instances pair a sensing operator with a sparse ground truth. Two LP
//! formulations are built from them: the plain vector form and the Kronecker
//! form, which keeps the two factor matrices apart instead of forming their
//! Kronecker product. A parametric simplex homotopy and a primal-dual interior
//! point method solve either form.

pub mod analysis;
pub mod bench;
pub mod dense;
pub mod error;
pub mod instance;
pub mod ipm;
pub mod lp;
pub mod report;
pub mod simplex;
pub mod sparse;

pub use error::{Error, Result};
