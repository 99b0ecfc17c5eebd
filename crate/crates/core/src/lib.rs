//! Numerical laboratory for holomorphic families of endomorphisms of `Pᵏ`.
//!
//! A family `f(λ, z) = (λ, f_λ(z))` is given by homogeneous polynomials whose
//! coefficients are polynomials in `λ ∈ Cᵐ`. The crate computes equilibrium
//! measures, repelling cycles and their motions over parameter meshes, the
//! Lyapunov sum and a harmonicity-based bifurcation detector, finite web
//! approximants, and contraction reports for iterated inverse branches.
//!
//! Data-parallel loops go through [`par`], which uses rayon unless the
//! `parallel` feature is disabled.

pub mod cycles;
pub mod error;
pub mod export;
pub mod family;
pub mod linalg;
pub mod measures;
pub mod mesh;
pub mod motion;
pub mod par;
pub mod branches;
pub mod preimage;
pub mod proj_geom;
pub mod rng;
pub mod roots;
pub mod stability;

pub use error::{Error, Result};
pub use family::{FamilySpec, FiberMap};
pub use mesh::ParamMesh;
pub use proj_geom::{ChartAtlas, PPoint};
