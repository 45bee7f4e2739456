//! Fetch an index page and download the linked issue from a local demo
//! server (hermetic: the server is spun up inside this example).

use sha2::{Digest, Sha256};
use std::io::{Read, Write};
use std::net::TcpListener;
use tenderscan::fetcher::{download_file, extract_pdf_links, fetch_index};

fn main() {
    let pdf_body: &[u8] = b"%PDF-1.4 demo issue";
    let index = r#"<html><body>
        <a class="issue-link" href="/dl/2024-01-01.pdf">today's issue</a>
        <a class="nav" href="/about">about</a>
    </body></html>"#;

    // two-request demo server: the index page, then the PDF
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let base = format!("http://{}", listener.local_addr().unwrap());
    let index_owned = index.to_string();
    let pdf_owned = pdf_body.to_vec();
    std::thread::spawn(move || {
        for body in [index_owned.into_bytes(), pdf_owned] {
            let (mut s, _) = listener.accept().unwrap();
            let mut buf = [0u8; 4096];
            let _ = s.read(&mut buf);
            let head = format!(
                "HTTP/1.1 200 OK\r\nContent-Length: {}\r\nConnection: close\r\n\r\n",
                body.len()
            );
            s.write_all(head.as_bytes()).unwrap();
            s.write_all(&body).unwrap();
        }
    });

    let html = fetch_index(&format!("{base}/epaper/index.html"), 5).unwrap();
    let links = extract_pdf_links(&html, &format!("{base}/epaper/index.html"), "issue-link");
    println!("found links: {links:?}");

    let dest = std::env::temp_dir().join("tenderscan-demo-issue.pdf");
    let _ = std::fs::remove_file(&dest);
    let rec = download_file(&links[0], &dest, 5).unwrap();
    println!("downloaded {} ({} bytes)", rec.path.display(), rec.bytes);
    println!("sha256 {}", rec.sha256);
    assert_eq!(rec.sha256, format!("{:x}", Sha256::digest(pdf_body)));
    println!("hash matches the served bytes");
}
