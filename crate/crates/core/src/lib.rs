//! Numerical kernel for the capillary L_p Christoffel-Minkowski problem
//!
//! `sigma_k(tau_sharp[s]) = s^(p-1) phi` on the spherical cap of angle `theta`,
//! with the Robin condition `d_beta s = cot(theta) s` on its boundary circle.

pub mod audit;
pub mod banded;
pub mod continuation;
pub mod fd;
pub mod field;
pub mod geometry;
pub mod jet;
pub mod rotsym;
pub mod solver;
pub mod symfunc;

pub use field::{CapField, CapGrid, Stencil, TauField};
pub use geometry::{ell, CapParams, CapPoint};
pub use symfunc::SymEndo;
