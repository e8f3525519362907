#![no_std]
#![allow(clippy::neg_cmp_op_on_partial_ord)]
#![doc = include_str!("../README.md")]

extern crate alloc;

pub mod contractivity;
pub mod ensemble;
pub mod error;
pub mod estimation;
pub mod integrators;
pub mod model;
pub mod numeric;
pub mod wiener;

pub use contractivity::{ContractivityReport, Region};
pub use ensemble::{EnsembleResult, FitWindow};
pub use error::{Error, Result};
pub use estimation::{EstimationConfig, MuRule, SampleBox};
pub use integrators::{MethodConfig, Scheme, Trajectory};
pub use model::{builtin_problem, ProblemConstants, Provenance, SdeProblem};
pub use wiener::NoiseGrid;

pub use nalgebra::{DMatrix, DVector};
pub use num_complex::Complex64;
