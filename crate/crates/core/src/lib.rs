//! Synthetic remote-sensing VQA benchmark generation from vector maps, with
//! a segmentation-guided attention baseline and evaluation.

pub mod eval;
pub mod geom;
pub mod ingest;
pub mod nnet;
pub mod oracle;
pub mod pipeline;
pub mod qagen;
pub mod raster;
pub mod seeding;
pub mod taxonomy;
