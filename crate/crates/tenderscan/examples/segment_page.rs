//! Segment a synthetic page into rectangular regions and print the
//! recovered boxes next to the planted ground truth.

use tenderscan::pipeline::{generate_synthetic_corpus, CorpusSpec};
use tenderscan::segmenter::{segment_page, SegmentationParams};

fn main() {
    let spec = CorpusSpec::default();
    let corpus = generate_synthetic_corpus(1, &spec, 7).expect("placement is feasible");
    let page = &corpus.pages[0];

    let params = SegmentationParams::for_page(page.width);
    let regions = segment_page(page, &params);

    println!("planted frames:");
    for f in &corpus.truth[0].frames {
        println!("  {:?}", f.bbox);
    }
    println!("recovered regions:");
    for (bbox, crop) in &regions {
        let best = corpus.truth[0]
            .frames
            .iter()
            .map(|f| f.bbox.iou(bbox))
            .fold(0.0f64, f64::max);
        println!("  {:?} ({}x{} crop, best IoU {:.3})", bbox, crop.width, crop.height, best);
    }
}
