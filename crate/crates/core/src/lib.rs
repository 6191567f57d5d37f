//! Uncertainty-guided interactive refinement of slice-stack segmentations.
//!
//! The pipeline fuses several probability predictions into a segmentation
//! and a pixel uncertainty map ([`uncertainty`]), ranks slices for human
//! review, and refines reviewed slices with a level-set solver
//! ([`levelset`]) driven by the fused probabilities and a scribble
//! likelihood built from geodesic distances ([`geodesic`]).

pub mod config;
pub mod edt;
pub mod error;
pub mod geodesic;
pub mod levelset;
pub mod metrics;
pub mod pipeline;
pub mod refine;
pub mod scribble;
pub mod ugstack;
pub mod uncertainty;
pub mod volume;

pub use config::RefineConfig;
pub use error::{Error, Result};
pub use volume::{BinaryMask, ProbabilityGroup, Stack};
