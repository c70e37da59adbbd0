//! Numerical toolkit for recovering the potential `V` and cubic
//! coefficient `h` of `□u + Vu + hu³ = f` from source-to-solution data:
//! a leapfrog solver, threefold linearization, oscillatory probing of the
//! trilinear term and the light-ray transform used in stability bounds.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod coef;
pub mod error;
pub mod fit;
pub mod geometry;
pub mod grid;
pub mod linearization;
pub mod par;
pub mod pipeline;
pub mod probe;
pub mod raytransform;
pub mod solver;
pub mod sources;

pub use coef::{Coef, SpacetimeFn, TimeProfile};
pub use error::{Error, Result};
pub use geometry::{Covector, DomainSpec, Event, InteractionConfig, LightRay};
pub use grid::{restrict, sobolev_norm, Field, Region, SpacetimeGrid, Window};
pub use solver::{solve_free, solve_linear, solve_semilinear, source_to_solution, Cascade, Model, Term};
pub use sources::{compose, realize_packet, SourceSet, SourceSpec, SourceTemplate};
pub use linearization::{default_eps, extract_u123, polarization_w, u123_direct, LinearizationResult, Observation};
pub use pipeline::{run_stability_sweep, ExperimentConfig, StabilityReport};
pub use probe::{recover_h_difference, recover_v_line_integral, ProbeSpec};
pub use raytransform::{pointwise_bound, sup_discrepancy, truncated_integral, RaySampling};
