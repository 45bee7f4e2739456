//! End-to-end on one synthetic page: train a tiny model, segment the page,
//! classify the crops, then confirm positives with the stub OCR + keyword
//! rule.

use tenderscan::neuralnet::{build_model, predict_batch, train_model, Arch, Dataset, TrainConfig, WidthPreset};
use tenderscan::ocrfilter::{is_tender, keywords_from_str, run_ocr};
use tenderscan::pipeline::{
    crop_filename, generate_synthetic_corpus, save_corpus, save_gray_png, synthetic_training_set,
    write_stub_ocr_script, CorpusSpec,
};
use tenderscan::segmenter::{segment_page, SegmentationParams};

fn main() {
    let dir = std::env::temp_dir().join("tenderscan-classify-filter");
    std::fs::create_dir_all(&dir).unwrap();

    // quick tiny model
    let size = 64;
    let all = synthetic_training_set(200, size, 3);
    let train = Dataset::from_images(&all[..160], size);
    let test = Dataset::from_images(&all[160..], size);
    let mut model = build_model(Arch::Xception, size, WidthPreset::Tiny, 3).unwrap();
    let cfg = TrainConfig { epochs: 8, checkpoint_epochs: vec![], ..TrainConfig::default() };
    train_model(&mut model, &train, &test, &cfg, None).unwrap();

    // one page with a tender frame and distractors, plus the stub OCR
    let spec = CorpusSpec::default();
    let corpus = generate_synthetic_corpus(1, &spec, 5).unwrap();
    let truth = save_corpus(&corpus, &dir).unwrap();
    let ocr_cmd = write_stub_ocr_script(&dir.join("stub_ocr.py"), &truth).unwrap();
    let keywords = keywords_from_str("tender\nnotice\nbid\nबोलपत्र\n").unwrap();

    let page = &corpus.pages[0];
    let regions = segment_page(page, &SegmentationParams::for_page(page.width));
    let crops: Vec<_> = regions.iter().map(|(_, c)| c.clone()).collect();
    let preds = predict_batch(&mut model, &crops).unwrap();

    for ((bbox, crop), pred) in regions.iter().zip(&preds) {
        print!("{bbox:?} classifier={} (score {:.3})", if pred.positive { "tender" } else { "other" }, pred.score);
        if pred.positive {
            let path = dir.join(crop_filename(0, bbox));
            save_gray_png(crop, &path).unwrap();
            let tokens = run_ocr(&path, &ocr_cmd).unwrap();
            let d = is_tender(&tokens, &keywords, 3, 40.0);
            print!(" ocr={} ({} keywords)", if d.is_tender { "confirmed" } else { "rejected" }, d.common_count);
        }
        println!();
    }
}
