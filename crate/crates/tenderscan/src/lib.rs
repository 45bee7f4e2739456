//! Tender notice extraction from e-newspaper PDFs.
//!
//! The pipeline runs in five stages: fetch PDFs over HTTP, rasterize them to
//! page images, segment rectangular candidate regions, classify each crop
//! with a from-scratch CNN (ResNet / GoogLeNet / Xception style), and confirm
//! positives by intersecting OCR output with a tender keyword set. Confirmed
//! notices are persisted to a JSON manifest and served read-only over HTTP.
//!
//! Each stage is an independent module usable on its own; `pipeline` wires
//! them together behind a config file and CLI.

pub mod fetcher;
pub mod imagecore;
pub mod neuralnet;
pub mod ocrfilter;
pub mod pipeline;
pub mod segmenter;
