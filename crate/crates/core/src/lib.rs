//! Asynchronous island-model evolution on a PE mesh with hereditary
//! stratigraphy annotations, trie-based phylogeny reconstruction and
//! phylometric comparison of treatments.

pub mod config;
pub mod error;
pub mod harness;
pub mod io;
pub mod island;
pub mod mesh;
pub mod metrics;
pub mod phylogeny;
pub mod stats;
pub mod surface;
pub mod trie;
pub mod validation;

pub use config::ExperimentConfig;
pub use error::{Error, Result};
pub use island::{Genome, PeConfig, TreatmentConfig};
pub use mesh::{MeshConfig, SampledGenome, SimState};
pub use metrics::MetricsReport;
pub use phylogeny::{PhyloRow, PhylogenyTable};
pub use stats::{mann_whitney_u, Alternative, MannWhitney};
pub use surface::{SurfaceAnnotation, SurfaceConfig, SurfacePolicy};
