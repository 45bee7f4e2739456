//! Orchestration: fetch → rasterize → segment → classify → OCR-filter →
//! manifest.

use super::config::{ConfigError, PipelineConfig};
use super::manifest::{export_manifest, new_run_id, Manifest, ManifestError, NoticeRecord};
use super::pngio::{load_gray_png, PngError};
use crate::fetcher::{download_file, extract_pdf_links, fetch_index, rasterize_pdf, FetchError};
use crate::imagecore::{BBox, GrayImage};
use crate::neuralnet::{predict_batch, Model, NetError};
use crate::ocrfilter::{is_tender, load_keywords, run_ocr, KeywordSet, OcrError};
use crate::segmenter::segment_page;
use std::path::{Path, PathBuf};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Fetch(#[from] FetchError),
    #[error(transparent)]
    Png(#[from] PngError),
    #[error(transparent)]
    Net(#[from] NetError),
    #[error(transparent)]
    Weights(#[from] crate::neuralnet::WeightsError),
    #[error(transparent)]
    Ocr(#[from] OcrError),
    #[error(transparent)]
    Manifest(#[from] ManifestError),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

/// Canonical crop file name; the bbox is encoded so tooling (including the
/// stub OCR used in tests) can recover it without a side channel.
pub fn crop_filename(page: usize, bbox: &BBox) -> String {
    format!(
        "page-{page:03}-x{x}-y{y}-w{w}-h{h}.png",
        x = bbox.x,
        y = bbox.y,
        w = bbox.w,
        h = bbox.h
    )
}

/// Classify and OCR-filter the regions of already-rasterized pages for one
/// issue. A failing page is logged and skipped; it never aborts the run.
#[allow(clippy::too_many_arguments)]
pub fn run_pages(
    cfg: &PipelineConfig,
    model: &mut Model,
    keywords: &KeywordSet,
    source: &str,
    date: &str,
    pages: &[(usize, GrayImage)],
    crops_dir: &Path,
) -> Result<Vec<NoticeRecord>, PipelineError> {
    std::fs::create_dir_all(crops_dir)?;
    let rejects_dir = crops_dir.join("rejects");
    if cfg.debug_rejects {
        std::fs::create_dir_all(&rejects_dir)?;
    }

    let mut records = Vec::new();
    for (page_idx, page) in pages {
        match process_page(cfg, model, keywords, source, date, *page_idx, page, crops_dir, &rejects_dir)
        {
            Ok(mut recs) => records.append(&mut recs),
            Err(e) => {
                log::warn!("{source} {date} page {page_idx}: skipped after error: {e}");
            }
        }
    }
    Ok(records)
}

#[allow(clippy::too_many_arguments)]
fn process_page(
    cfg: &PipelineConfig,
    model: &mut Model,
    keywords: &KeywordSet,
    source: &str,
    date: &str,
    page_idx: usize,
    page: &GrayImage,
    crops_dir: &Path,
    rejects_dir: &Path,
) -> Result<Vec<NoticeRecord>, PipelineError> {
    let params = cfg.segmentation.for_page(page.width);
    let regions = segment_page(page, &params);
    if regions.is_empty() {
        return Ok(Vec::new());
    }
    let crops: Vec<GrayImage> = regions.iter().map(|(_, img)| img.clone()).collect();
    let preds = predict_batch(model, &crops)?;

    let mut records = Vec::new();
    for ((bbox, crop), pred) in regions.iter().zip(preds.iter()) {
        let name = crop_filename(page_idx, bbox);
        if !pred.positive {
            if cfg.debug_rejects {
                super::pngio::save_gray_png(crop, &rejects_dir.join(&name))?;
            }
            continue;
        }
        let crop_path = crops_dir.join(&name);
        super::pngio::save_gray_png(crop, &crop_path)?;
        let tokens = run_ocr(&crop_path, &cfg.ocr.command)?;
        let decision = is_tender(&tokens, keywords, cfg.min_common, cfg.ocr.min_conf);
        if decision.is_tender {
            records.push(NoticeRecord {
                source: source.to_string(),
                date: date.to_string(),
                page: page_idx,
                bbox: *bbox,
                crop_path,
                score: pred.score,
                matched_keywords: decision.matched.into_iter().collect(),
                common_count: decision.common_count,
            });
        } else {
            // classifier said tender, keywords disagreed
            if cfg.debug_rejects {
                std::fs::rename(&crop_path, rejects_dir.join(&name))?;
            } else {
                std::fs::remove_file(&crop_path)?;
            }
        }
    }
    Ok(records)
}

/// Load `page-*.png` files from a directory in name order, paired with
/// their page index parsed from the name.
pub fn load_pages_dir(dir: &Path) -> Result<Vec<(usize, GrayImage)>, PipelineError> {
    let mut names: Vec<PathBuf> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.extension().map(|e| e == "png").unwrap_or(false)
                && p.file_stem()
                    .map(|s| s.to_string_lossy().starts_with("page-"))
                    .unwrap_or(false)
        })
        .collect();
    names.sort();
    let mut pages = Vec::with_capacity(names.len());
    for (i, path) in names.iter().enumerate() {
        let idx = path
            .file_stem()
            .and_then(|s| s.to_string_lossy().strip_prefix("page-").map(|n| n.parse().ok()))
            .flatten()
            .unwrap_or(i);
        pages.push((idx, load_gray_png(path)?));
    }
    Ok(pages)
}

fn sort_records(records: &mut [NoticeRecord]) {
    records.sort_by(|a, b| {
        (&a.source, &a.date, a.page, a.bbox.y, a.bbox.x)
            .cmp(&(&b.source, &b.date, b.page, b.bbox.y, b.bbox.x))
    });
}

/// Assemble, sort and atomically export the manifest.
pub fn finish_manifest(
    cfg: &PipelineConfig,
    mut records: Vec<NoticeRecord>,
) -> Result<Manifest, PipelineError> {
    sort_records(&mut records);
    let manifest = Manifest::new(new_run_id(), cfg.config_hash(), records);
    export_manifest(&manifest, &cfg.manifest)?;
    Ok(manifest)
}

/// The whole pipeline for every configured source: fetch the index, download
/// each linked issue, rasterize, then classify and filter page by page.
pub fn run_full(cfg: &PipelineConfig) -> Result<Manifest, PipelineError> {
    cfg.validate_paths(true)?;
    let mut model = crate::neuralnet::load_model(&cfg.model.weights)?;
    let keywords = load_keywords(&cfg.keywords)?;

    let mut records = Vec::new();
    for source in &cfg.sources {
        let html = fetch_index(&source.index_url, source.timeout_secs)?;
        let links = extract_pdf_links(&html, &source.index_url, &source.link_class);
        for link in links {
            let file_name = link.rsplit('/').next().unwrap_or("issue.pdf").to_string();
            let date = file_name.trim_end_matches(".pdf").to_string();
            let pdf = cfg.workdir.join("downloads").join(&source.name).join(&file_name);
            download_file(&link, &pdf, source.timeout_secs)?;

            let pages_dir = cfg.workdir.join("pages").join(&source.name).join(&date);
            rasterize_pdf(&pdf, &pages_dir, cfg.dpi, &cfg.rasterizer_command)?;
            let pages = load_pages_dir(&pages_dir)?;

            let crops_dir = cfg.workdir.join("crops").join(&source.name).join(&date);
            let mut recs =
                run_pages(cfg, &mut model, &keywords, &source.name, &date, &pages, &crops_dir)?;
            records.append(&mut recs);
        }
    }
    finish_manifest(cfg, records)
}
