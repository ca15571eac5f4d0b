//! Base-date preprocessing: unsupervised classification, segmentation into
//! objects, and per-object mode refinement of the class map.

mod kmeans;
mod maps;
mod segment;

pub use kmeans::{kmeans_classify, kmeans_fit, KMeansFit};
pub use maps::{ingest_segmentation, refine_classmap, ClassMap, ObjectMap, ObjectMembers};
pub use segment::{segment_builtin, DEFAULT_SCALE_PARAM};
