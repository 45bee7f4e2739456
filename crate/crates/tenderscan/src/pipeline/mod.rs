//! Everything above the algorithms: configuration, orchestration of the
//! fetch→rasterize→segment→classify→filter flow, manifest persistence, the
//! read-only listing server, the synthetic corpus generator and the
//! model-comparison report.

mod config;
mod manifest;
mod pngio;
mod report;
mod run;
mod serve;
mod synth;

pub use config::{ConfigError, ModelConfig, OcrConfig, PipelineConfig, SegmentationConfig};
pub use manifest::{
    export_manifest, load_manifest, new_run_id, Manifest, ManifestError, NoticeRecord,
    SCHEMA_VERSION,
};
pub use pngio::{load_color_png, load_gray_png, save_gray_png, PngError};
pub use report::{compare_models_report, write_curves, ComparisonReport, ReportError, RunMetrics};
pub use run::{
    crop_filename, finish_manifest, load_pages_dir, run_full, run_pages, PipelineError,
};
pub use serve::{serve_listing, ServeError, ServerHandle};
pub use synth::{
    generate_synthetic_corpus, save_corpus, synthetic_training_set, write_stub_ocr_script,
    write_stub_rasterizer_script, CorpusSpec, FrameTruth, PageTruth, SynthError, SyntheticCorpus,
};
