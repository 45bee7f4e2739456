//! Serve a small manifest over HTTP and query it once.

use tenderscan::imagecore::BBox;
use tenderscan::pipeline::{serve_listing, Manifest, NoticeRecord};

fn main() {
    let manifest = Manifest::new(
        "run-example".into(),
        "0000".into(),
        vec![NoticeRecord {
            source: "demo".into(),
            date: "2024-01-01".into(),
            page: 0,
            bbox: BBox::new(10, 10, 100, 80),
            crop_path: "crops/page-000-x10-y10-w100-h80.png".into(),
            score: 0.97,
            matched_keywords: vec!["bid".into(), "notice".into(), "tender".into()],
            common_count: 3,
        }],
    );

    let handle = serve_listing(manifest, 0).unwrap();
    println!("listening on http://127.0.0.1:{}", handle.port);

    for path in ["/health", "/notices", "/notices/run-example"] {
        let body = ureq::get(&format!("http://127.0.0.1:{}{path}", handle.port))
            .call()
            .unwrap()
            .into_string()
            .unwrap();
        println!("GET {path} -> {} bytes", body.len());
    }
    handle.stop();
}
