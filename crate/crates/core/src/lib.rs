//! Least-squares analysis of designed experiments through orthogonal
//! projectors and sweep operators.
//!
//! The crate covers
//! - symmetric eigendecomposition, numeric rank, Moore-Penrose inverses and
//!   projectors ([`spectral`]),
//! - factor design matrices, the grand mean and marginality ([`model`]),
//! - reduced normal equations and sweep factorizations of the residual
//!   operator, including the three-stage sweep for balanced incomplete block
//!   designs ([`sweep`]),
//! - analysis of variance tables with F tests ([`anova`], [`fdist`]),
//! - incidence, concurrence and information matrices and canonical
//!   efficiency factors of block designs ([`design`]),
//! - CSV ingestion and text / JSON reports ([`report`]).

pub mod anova;
pub mod design;
pub mod error;
pub mod fdist;
pub mod matrix;
pub mod model;
pub mod report;
pub mod spectral;
pub mod sweep;

pub use anova::{build_table, AnovaRow, AnovaTable, Layout};
pub use design::{BlockDesign, EfficiencyReport};
pub use error::{Error, Result};
pub use matrix::DenseMatrix;
pub use model::{Factor, ModelTerm, UnitTable};
pub use spectral::{Projector, SymmetricEigen, Tolerance};
pub use sweep::{FitResult, ReducedDesign, SweepOutcome};
