//! Edge road-roughness estimation.
//!
//! Vertical acceleration and GPS from an axle-mounted sensor are cut into
//! fixed-distance windows, summarised by spectral features, and mapped to
//! International Roughness Index (IRI) estimates by regression-tree
//! ensembles. A quarter-car simulator over synthetic road profiles supplies
//! reference labels so the whole chain can be trained and checked offline.
//!
//! Stages, in stream order: [`ingest`], [`geo_segment`], [`spectral`],
//! [`tree_ensemble`], [`evaluate`], orchestrated by [`edge_pipeline`].
//! [`quarter_car`] and [`road_synth`] provide ground truth; [`harness`]
//! runs the seeded experiments.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod edge_pipeline;
pub mod evaluate;
pub mod geo_segment;
pub mod harness;
pub mod ingest;
pub mod quarter_car;
pub mod road_synth;
pub mod scalar;
pub mod spectral;
pub mod tree_ensemble;

pub use scalar::Real;

pub type FftPlan64 = spectral::FftPlan<f64>;
pub type FftPlan32 = spectral::FftPlan<f32>;
pub type Spectrum64 = spectral::Spectrum<f64>;
pub type Spectrum32 = spectral::Spectrum<f32>;
pub type RoadProfile64 = quarter_car::RoadProfile<f64>;
pub type RoadProfile32 = quarter_car::RoadProfile<f32>;
pub type GoldenCarParams64 = quarter_car::GoldenCarParams<f64>;
pub type GoldenCarParams32 = quarter_car::GoldenCarParams<f32>;
pub type QcState64 = quarter_car::QcState<f64>;
pub type QcState32 = quarter_car::QcState<f32>;
pub type Simulation64 = quarter_car::Simulation<f64>;
pub type Simulation32 = quarter_car::Simulation<f32>;
pub type Iri64 = quarter_car::Iri<f64>;
pub type Iri32 = quarter_car::Iri<f32>;
