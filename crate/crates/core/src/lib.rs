//! Natural-scale diffusions with a prescribed law at an independent
//! exponential time.
//!
//! The crate synthesizes the speed measure of every such diffusion (indexed
//! by its start point and Wronskian), evaluates its eigenfunctions and
//! hitting-time transforms, simulates it with an Euler–Maruyama engine and a
//! birth–death chain engine, and checks the simulated laws against the
//! target.

// Range checks are written so that NaN fails them.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod engine;
pub mod error;
pub mod figures;
pub mod io;
pub mod measure;
pub mod ode;
pub mod quadrature;
pub mod synthesis;
pub mod verify;

pub use engine::{simulate_hitting, simulate_terminal, CtmcGrid, Engine, SimConfig, TerminalSample};
pub use error::{Error, Result};
pub use measure::{Atom, DensityPiece, Family, PotentialTriple, TargetMeasure};
pub use synthesis::{
    apply_scale, synthesize, wronskian_sup, BoundaryClass, DiffusionModel, EigenPair, ExtensionSide,
    MartingaleClass, RepresentingMeasure, ScaleMap, ScaleTransport, Side, StartPosition,
};
pub use verify::{consistency_report, ConsistencyReport, Thresholds, VerifyConfig};
