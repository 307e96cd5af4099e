//! Semi-discrete optimal transport through the discrete Brenier potential.
//!
//! A continuous source measure μ (uniform on a convex domain Ω) is pushed onto
//! a finite target `ν = Σ ν_i δ_{y_i}` by the gradient of
//! `u_h(x) = max_i ⟨x, y_i⟩ + h_i`. The heights `h` minimize a convex energy
//! whose gradient is `w(h) − ν`, where `w_i(h)` is the μ-volume of the power
//! cell of `y_i`. Around that solver sit the power-diagram geometry, the
//! Legendre dual (weighted Delaunay triangulation), singular-set extraction,
//! and a discrete Kantorovich oracle.

// `!(x > 0.0)` is used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cells;
pub mod commands;
pub mod config;
pub mod dual;
pub mod error;
pub mod experiments;
pub mod geometry;
pub mod kantorovich;
pub mod measure;
pub mod potential;
pub mod render;
pub mod singularity;
pub mod solver;

pub use cells::{exact_cell_stats_2d, mc_cell_stats, Facet, PowerCellStats, StatsMode};
pub use dual::{legendre_dual, DualTriangulation};
pub use error::{Error, Result};
pub use geometry::{ConvexPolygon, Point2};
pub use measure::{DiscreteTargetMeasure, Shape, SourceDomain};
pub use potential::BrenierPotential;

pub use singularity::{cell_subgradient_extent, default_threshold, detect_singular_facets, probe_segment, Crossing, SingularityGraph};
pub use solver::{solve, SolveMode, SolveReport, SolverConfig};
