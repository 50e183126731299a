// SPDX-License-Identifier: Apache-2.0

//! Analytical simulator and scheduler for heterogeneous chiplet-based
//! multi-chip-module accelerators.
//!
//! * [`workload`] lowers models to chains of GEMMs.
//! * [`cost`] prices one GEMM on one chiplet under a given dataflow.
//! * [`package`] models the chiplet mesh, its network and memory channels.
//! * [`scheduler`] assigns layers to chiplets and searches inter-chiplet
//!   pipelines.
//! * [`scenario`] drives scenario runs and writes reports.
//! * [`cli`] is the command-line front end.

pub mod cli;
pub mod cost;
pub mod error;
pub mod package;
pub mod scenario;
pub mod scheduler;
pub mod workload;

pub use cost::{ChipletSpec, Dataflow, LayerCost};
pub use error::{Error, Result};
pub use package::{Coord, PackageSpec};
pub use scheduler::{CostReport, Schedule, ScheduleTree};
pub use workload::{GemmShape, Layer, ModelGraph};
