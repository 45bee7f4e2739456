//! Deterministic synthetic newspaper pages with ground truth.
//!
//! Real issues and the original training corpus are not redistributable, so
//! every test and example renders its own pages: white background, black
//! rectangular frames, and two interior styles — dashed "text lines" for
//! tender frames and a diagonal cross for distractors. The same renderers
//! feed the training-set generator, so a model trained on synthetic samples
//! transfers exactly to synthetic pages.

use crate::imagecore::{BBox, GrayImage};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("cannot place {requested} disjoint frames on page {page} (placed {placed})")]
    SpecInfeasible { page: usize, requested: usize, placed: usize },
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

/// Shape of the generated corpus.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CorpusSpec {
    pub page_w: usize,
    pub page_h: usize,
    pub frames_per_page: usize,
    /// How many of the frames per page are tender notices (carry keywords).
    pub tender_per_page: usize,
    pub min_frame: usize,
    pub max_frame: usize,
    /// Vocabulary planted in tender frames, consumed by the stub OCR.
    pub keywords: Vec<String>,
}

impl Default for CorpusSpec {
    fn default() -> Self {
        Self {
            page_w: 400,
            page_h: 560,
            frames_per_page: 3,
            tender_per_page: 1,
            min_frame: 60,
            max_frame: 140,
            keywords: vec![
                "tender".into(),
                "notice".into(),
                "bid".into(),
                "बोलपत्र".into(),
            ],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameTruth {
    pub bbox: BBox,
    pub tender: bool,
    /// Words the stub OCR reports for this frame.
    pub words: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PageTruth {
    pub page: usize,
    pub frames: Vec<FrameTruth>,
}

#[derive(Debug, Clone)]
pub struct SyntheticCorpus {
    pub pages: Vec<GrayImage>,
    pub truth: Vec<PageTruth>,
}

const RING: usize = 3;
/// Interior content stays this far inside the ring so it never merges with
/// the frame's connected component.
const INSET: usize = RING + 4;
/// Minimum gap between frames so separate frames never touch.
const GAP: usize = 6;

fn draw_ring(img: &mut GrayImage, b: &BBox) {
    for t in 0..RING {
        for x in b.x..b.x + b.w {
            img.set(x, b.y + t, 0);
            img.set(x, b.y + b.h - 1 - t, 0);
        }
        for y in b.y..b.y + b.h {
            img.set(b.x + t, y, 0);
            img.set(b.x + b.w - 1 - t, y, 0);
        }
    }
}

/// Dashed horizontal rows imitating body text.
fn draw_text_lines(img: &mut GrayImage, b: &BBox, rng: &mut ChaCha20Rng) {
    let x0 = b.x + INSET;
    let x1 = b.x + b.w - INSET;
    let y0 = b.y + INSET;
    let y1 = b.y + b.h - INSET;
    if x1 <= x0 + 8 || y1 <= y0 + 8 {
        return;
    }
    let mut y = y0;
    while y + 2 < y1 {
        let mut x = x0;
        while x + 4 < x1 {
            let dash = rng.gen_range(4..12).min(x1 - x);
            for dx in 0..dash {
                img.set(x + dx, y, 0);
                img.set(x + dx, y + 1, 0);
            }
            x += dash + rng.gen_range(3..8);
        }
        y += 7;
    }
}

/// Diagonal cross filling the interior.
fn draw_cross(img: &mut GrayImage, b: &BBox) {
    let x0 = b.x + INSET;
    let x1 = b.x + b.w - INSET;
    let y0 = b.y + INSET;
    let y1 = b.y + b.h - INSET;
    if x1 <= x0 + 4 || y1 <= y0 + 4 {
        return;
    }
    let w = (x1 - x0) as f64;
    let h = (y1 - y0) as f64;
    let steps = (x1 - x0).max(y1 - y0) * 2;
    for s in 0..=steps {
        let t = s as f64 / steps as f64;
        let x = x0 + (t * (w - 1.0)).round() as usize;
        let ya = y0 + (t * (h - 1.0)).round() as usize;
        let yb = y1 - 1 - (t * (h - 1.0)).round() as usize;
        for d in 0..2usize {
            img.set((x + d).min(x1 - 1), ya, 0);
            img.set((x + d).min(x1 - 1), yb, 0);
        }
    }
}

fn expanded(b: &BBox, margin: usize) -> BBox {
    BBox::new(
        b.x.saturating_sub(margin),
        b.y.saturating_sub(margin),
        b.w + 2 * margin,
        b.h + 2 * margin,
    )
}

fn overlaps(a: &BBox, b: &BBox) -> bool {
    expanded(a, GAP).intersection_area(b) > 0
}

/// Render `n_pages` pages. Deterministic per `(spec, seed)`.
pub fn generate_synthetic_corpus(
    n_pages: usize,
    spec: &CorpusSpec,
    seed: u64,
) -> Result<SyntheticCorpus, SynthError> {
    assert!(n_pages >= 1, "n_pages must be >= 1");
    assert!(spec.tender_per_page <= spec.frames_per_page);
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut pages = Vec::with_capacity(n_pages);
    let mut truth = Vec::with_capacity(n_pages);

    for page in 0..n_pages {
        let mut img = GrayImage::filled(spec.page_w, spec.page_h, 255);
        let mut placed: Vec<BBox> = Vec::new();
        let mut frames = Vec::new();

        for fi in 0..spec.frames_per_page {
            let mut bbox = None;
            for _attempt in 0..1000 {
                let w = rng.gen_range(spec.min_frame..=spec.max_frame.min(spec.page_w - 2));
                let h = rng.gen_range(spec.min_frame..=spec.max_frame.min(spec.page_h - 2));
                if spec.page_w <= w + 2 || spec.page_h <= h + 2 {
                    continue;
                }
                let x = rng.gen_range(1..spec.page_w - w - 1);
                let y = rng.gen_range(1..spec.page_h - h - 1);
                let cand = BBox::new(x, y, w, h);
                if placed.iter().all(|p| !overlaps(p, &cand)) {
                    bbox = Some(cand);
                    break;
                }
            }
            let bbox = bbox.ok_or(SynthError::SpecInfeasible {
                page,
                requested: spec.frames_per_page,
                placed: placed.len(),
            })?;
            placed.push(bbox);

            let tender = fi < spec.tender_per_page;
            draw_ring(&mut img, &bbox);
            let words = if tender {
                draw_text_lines(&mut img, &bbox, &mut rng);
                spec.keywords.clone()
            } else {
                draw_cross(&mut img, &bbox);
                vec!["weather".into(), "sports".into()]
            };
            frames.push(FrameTruth { bbox, tender, words });
        }
        // deterministic reading order
        frames.sort_by_key(|f| (f.bbox.y, f.bbox.x));
        pages.push(img);
        truth.push(PageTruth { page, frames });
    }
    Ok(SyntheticCorpus { pages, truth })
}

/// Two-class training samples rendered with the corpus drawing code:
/// label 1 = framed text lines (tender look), label 0 = framed cross.
pub fn synthetic_training_set(n: usize, size: usize, seed: u64) -> Vec<(GrayImage, u8)> {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let label = (i % 2) as u8;
        let mut img = GrayImage::filled(size, size, 255);
        let m = rng.gen_range(1..=4usize);
        let bbox = BBox::new(m, m, size - 2 * m, size - 2 * m);
        draw_ring(&mut img, &bbox);
        if label == 1 {
            draw_text_lines(&mut img, &bbox, &mut rng);
        } else {
            draw_cross(&mut img, &bbox);
        }
        out.push((img, label));
    }
    out
}

/// Write pages as `page-{i:03}.png` plus `truth.json` into `dir`.
pub fn save_corpus(corpus: &SyntheticCorpus, dir: &Path) -> Result<PathBuf, SynthError> {
    std::fs::create_dir_all(dir)?;
    for (i, page) in corpus.pages.iter().enumerate() {
        super::pngio::save_gray_png(page, &dir.join(format!("page-{i:03}.png")))
            .map_err(|e| SynthError::Io(std::io::Error::other(e.to_string())))?;
    }
    let truth_path = dir.join("truth.json");
    let json = serde_json::to_string_pretty(&corpus.truth).expect("truth serializes");
    std::fs::write(&truth_path, json)?;
    Ok(truth_path)
}

/// Materialize the stub OCR engine: a python script that matches a crop's
/// filename-encoded bbox against the ground truth and prints the planted
/// words as an OCR TSV table. Returns the command template to put in
/// `ocr.command`.
pub fn write_stub_ocr_script(script_path: &Path, truth_json: &Path) -> Result<String, SynthError> {
    let script = format!(
        r#"#!/usr/bin/env python3
import json, os, re, sys

TRUTH = {truth:?}
HEADER = "level\tpage_num\tblock_num\tpar_num\tline_num\tword_num\tleft\ttop\twidth\theight\tconf\ttext"

def iou(a, b):
    ax2, ay2 = a["x"] + a["w"], a["y"] + a["h"]
    bx2, by2 = b["x"] + b["w"], b["y"] + b["h"]
    ix = max(0, min(ax2, bx2) - max(a["x"], b["x"]))
    iy = max(0, min(ay2, by2) - max(a["y"], b["y"]))
    inter = ix * iy
    union = a["w"] * a["h"] + b["w"] * b["h"] - inter
    return inter / union if union else 0.0

def main():
    crop = sys.argv[1]
    m = re.match(r"page-(\d+)-x(\d+)-y(\d+)-w(\d+)-h(\d+)\.png$", os.path.basename(crop))
    print(HEADER)
    if not m:
        return
    page, x, y, w, h = (int(g) for g in m.groups())
    box = {{"x": x, "y": y, "w": w, "h": h}}
    with open(TRUTH) as f:
        truth = json.load(f)
    words = []
    best = 0.0
    for entry in truth:
        if entry["page"] != page:
            continue
        for frame in entry["frames"]:
            score = iou(frame["bbox"], box)
            if score > best and score >= 0.5:
                best = score
                words = frame["words"]
    for i, word in enumerate(words):
        print(f"5\t1\t1\t1\t1\t{{i + 1}}\t{{10 + 60 * i}}\t10\t50\t14\t95\t{{word}}")

main()
"#,
        truth = truth_json.to_string_lossy()
    );
    std::fs::write(script_path, script)?;
    Ok(format!("python3 {} {{input}}", script_path.display()))
}

/// Materialize a stub rasterizer that ignores its PDF input and copies the
/// pre-rendered synthetic pages from `pages_dir` into the output directory.
/// Returns the command template to put in `rasterizer_command`.
pub fn write_stub_rasterizer_script(
    script_path: &Path,
    pages_dir: &Path,
) -> Result<String, SynthError> {
    let script = format!(
        r#"#!/usr/bin/env python3
import shutil, sys, os
outdir = sys.argv[2]
src = {src:?}
for name in sorted(os.listdir(src)):
    if name.endswith(".png"):
        shutil.copy(os.path.join(src, name), os.path.join(outdir, name))
"#,
        src = pages_dir.to_string_lossy()
    );
    std::fs::write(script_path, script)?;
    Ok(format!("python3 {} {{input}} {{outdir}} {{dpi}}", script_path.display()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn blank_page_when_zero_frames() {
        let spec = CorpusSpec { frames_per_page: 0, tender_per_page: 0, ..CorpusSpec::default() };
        let c = generate_synthetic_corpus(1, &spec, 3).unwrap();
        assert!(c.pages[0].data.iter().all(|&p| p == 255));
        assert!(c.truth[0].frames.is_empty());
    }

    #[test]
    fn same_seed_identical_pixels() {
        let spec = CorpusSpec::default();
        let a = generate_synthetic_corpus(3, &spec, 42).unwrap();
        let b = generate_synthetic_corpus(3, &spec, 42).unwrap();
        assert_eq!(a.pages, b.pages);
        assert_eq!(a.truth, b.truth);
        let c = generate_synthetic_corpus(3, &spec, 43).unwrap();
        assert_ne!(a.pages, c.pages);
    }

    #[test]
    fn forty_pages_three_frames_all_disjoint() {
        let spec = CorpusSpec::default();
        let c = generate_synthetic_corpus(40, &spec, 7).unwrap();
        let mut total = 0;
        for page in &c.truth {
            for (i, a) in page.frames.iter().enumerate() {
                for b in &page.frames[i + 1..] {
                    assert_eq!(a.bbox.intersection_area(&b.bbox), 0, "frames overlap");
                }
            }
            total += page.frames.len();
        }
        assert_eq!(total, 120);
    }

    #[test]
    fn infeasible_spec_is_reported() {
        let spec = CorpusSpec {
            page_w: 100,
            page_h: 100,
            frames_per_page: 10,
            tender_per_page: 0,
            min_frame: 60,
            max_frame: 80,
            ..CorpusSpec::default()
        };
        assert!(matches!(
            generate_synthetic_corpus(1, &spec, 1),
            Err(SynthError::SpecInfeasible { .. })
        ));
    }

    #[test]
    fn training_set_is_balanced_and_deterministic() {
        let a = synthetic_training_set(40, 64, 5);
        let b = synthetic_training_set(40, 64, 5);
        assert_eq!(a.len(), 40);
        assert_eq!(a, b);
        assert_eq!(a.iter().filter(|(_, l)| *l == 1).count(), 20);
        // the two classes are actually visually distinct
        let (pos, neg) = (&a[1], &a[0]);
        assert_ne!(pos.0, neg.0);
    }

    #[test]
    fn stub_ocr_reports_planted_words_by_bbox() {
        let spec = CorpusSpec::default();
        let c = generate_synthetic_corpus(2, &spec, 11).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let truth = save_corpus(&c, dir.path()).unwrap();
        let template = write_stub_ocr_script(&dir.path().join("stub_ocr.py"), &truth).unwrap();

        let frame = &c.truth[1].frames[0];
        let crop = dir.path().join(format!(
            "page-{:03}-x{}-y{}-w{}-h{}.png",
            1, frame.bbox.x, frame.bbox.y, frame.bbox.w, frame.bbox.h
        ));
        std::fs::write(&crop, b"not actually read").unwrap();
        let tokens = crate::ocrfilter::run_ocr(&crop, &template).unwrap();
        let texts: Vec<&str> = tokens.iter().map(|t| t.text.as_str()).collect();
        assert_eq!(texts, frame.words.iter().map(String::as_str).collect::<Vec<_>>());

        // a crop matching nothing yields an empty table
        let stray = dir.path().join("page-001-x0-y0-w10-h10.png");
        std::fs::write(&stray, b"x").unwrap();
        assert!(crate::ocrfilter::run_ocr(&stray, &template).unwrap().is_empty());
    }
}
