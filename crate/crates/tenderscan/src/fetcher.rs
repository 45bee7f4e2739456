//! Download of e-paper index pages and PDF issues, plus the external
//! rasterizer contract.
//!
//! Link discovery is a small hand-rolled HTML scanner rather than a full
//! parser: the portals serve static listings where anchors carry a known
//! class, and only the `<a>` tag attributes matter.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::io::Read;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::Duration;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum FetchError {
    #[error("http request failed for {url}: {reason}")]
    HttpError { url: String, reason: String },
    #[error("request to {0} timed out")]
    Timeout(String),
    #[error("too many redirects fetching {0}")]
    TooManyRedirects(String),
    #[error("size mismatch for {url}: header said {expected} bytes, body had {actual}")]
    SizeMismatch { url: String, expected: u64, actual: u64 },
    #[error("rasterizer executable not found: {0}")]
    RasterizerNotFound(String),
    #[error("rasterizer exited with {status}: {stderr}")]
    RasterizerFailed { status: i32, stderr: String },
    #[error("rasterizer produced no page images in {0}")]
    NoPagesProduced(PathBuf),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

/// One e-paper portal to scrape.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SourceConfig {
    pub name: String,
    pub index_url: String,
    /// CSS class that marks issue-download anchors on the index page.
    pub link_class: String,
    #[serde(default = "default_timeout")]
    pub timeout_secs: u64,
}

fn default_timeout() -> u64 {
    30
}

/// Provenance of one fetched file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DownloadRecord {
    pub url: String,
    pub path: PathBuf,
    pub sha256: String,
    pub bytes: u64,
}

fn map_ureq_error(url: &str, err: ureq::Error) -> FetchError {
    match err {
        ureq::Error::Transport(t) => {
            let reason = t.to_string();
            if reason.contains("timed out") || reason.contains("timeout") {
                FetchError::Timeout(url.to_string())
            } else {
                FetchError::HttpError { url: url.to_string(), reason }
            }
        }
        ureq::Error::Status(code, _) => {
            FetchError::HttpError { url: url.to_string(), reason: format!("status {code}") }
        }
    }
}

fn agent(timeout_secs: u64) -> ureq::Agent {
    ureq::AgentBuilder::new()
        .timeout(Duration::from_secs(timeout_secs))
        .redirects(5)
        .build()
}

/// Fetch the index page body as text. Follows at most five redirects.
pub fn fetch_index(url: &str, timeout_secs: u64) -> Result<String, FetchError> {
    let resp = agent(timeout_secs).get(url).call().map_err(|e| {
        let mapped = map_ureq_error(url, e);
        if let FetchError::HttpError { ref reason, .. } = mapped {
            if reason.contains("redirect") {
                return FetchError::TooManyRedirects(url.to_string());
            }
        }
        mapped
    })?;
    resp.into_string()
        .map_err(|e| FetchError::HttpError { url: url.to_string(), reason: e.to_string() })
}

/// Resolve `href` against `base` (absolute, host-relative, or path-relative).
pub fn resolve_url(base: &str, href: &str) -> String {
    if href.contains("://") {
        return href.to_string();
    }
    // split base into scheme://host and path
    let (origin, path) = match base.find("://") {
        Some(i) => {
            let after = &base[i + 3..];
            match after.find('/') {
                Some(j) => (&base[..i + 3 + j], &base[i + 3 + j..]),
                None => (base, "/"),
            }
        }
        None => (base, "/"),
    };
    if let Some(rest) = href.strip_prefix('/') {
        return format!("{origin}/{rest}");
    }
    let dir = match path.rfind('/') {
        Some(j) => &path[..=j],
        None => "/",
    };
    format!("{origin}{dir}{href}")
}

/// Scan anchor tags and return hrefs whose class list contains `class_name`,
/// resolved against `base_url`, first occurrence order, deduplicated.
pub fn extract_pdf_links(html: &str, base_url: &str, class_name: &str) -> Vec<String> {
    let mut out: Vec<String> = Vec::new();
    let bytes = html.as_bytes();
    let mut i = 0;
    while let Some(start) = html[i..].find("<a").map(|p| p + i) {
        // must be "<a" followed by whitespace or '>'
        let after = start + 2;
        if after >= bytes.len() || !(bytes[after].is_ascii_whitespace() || bytes[after] == b'>') {
            i = after;
            continue;
        }
        let end = match html[start..].find('>') {
            Some(p) => start + p,
            None => break,
        };
        let tag = &html[after..end];
        let mut href: Option<String> = None;
        let mut classes: Vec<String> = Vec::new();
        for (key, val) in parse_attributes(tag) {
            match key.as_str() {
                "href" => href = Some(val),
                "class" => {
                    classes = val.split_whitespace().map(str::to_string).collect();
                }
                _ => {}
            }
        }
        if let Some(h) = href {
            if classes.iter().any(|c| c == class_name) {
                let resolved = resolve_url(base_url, &h);
                if !out.contains(&resolved) {
                    out.push(resolved);
                }
            }
        }
        i = end + 1;
    }
    out
}

/// Minimal attribute scanner: `key="value"`, `key='value'`, `key=value`
/// or bare keys.
fn parse_attributes(tag: &str) -> Vec<(String, String)> {
    let mut attrs = Vec::new();
    let bytes = tag.as_bytes();
    let mut i = 0;
    while i < bytes.len() {
        while i < bytes.len() && bytes[i].is_ascii_whitespace() {
            i += 1;
        }
        let key_start = i;
        while i < bytes.len() && bytes[i] != b'=' && !bytes[i].is_ascii_whitespace() {
            i += 1;
        }
        if i == key_start {
            break;
        }
        let key = tag[key_start..i].to_ascii_lowercase();
        while i < bytes.len() && bytes[i].is_ascii_whitespace() {
            i += 1;
        }
        if i < bytes.len() && bytes[i] == b'=' {
            i += 1;
            while i < bytes.len() && bytes[i].is_ascii_whitespace() {
                i += 1;
            }
            if i < bytes.len() && (bytes[i] == b'"' || bytes[i] == b'\'') {
                let quote = bytes[i];
                i += 1;
                let val_start = i;
                while i < bytes.len() && bytes[i] != quote {
                    i += 1;
                }
                attrs.push((key, tag[val_start..i].to_string()));
                i += 1;
            } else {
                let val_start = i;
                while i < bytes.len() && !bytes[i].is_ascii_whitespace() {
                    i += 1;
                }
                attrs.push((key, tag[val_start..i].to_string()));
            }
        } else {
            attrs.push((key, String::new()));
        }
    }
    attrs
}

fn sha256_file(path: &Path) -> Result<(String, u64), std::io::Error> {
    let mut file = std::fs::File::open(path)?;
    let mut hasher = Sha256::new();
    let mut buf = [0u8; 64 * 1024];
    let mut total = 0u64;
    loop {
        let n = file.read(&mut buf)?;
        if n == 0 {
            break;
        }
        total += n as u64;
        hasher.update(&buf[..n]);
    }
    Ok((format!("{:x}", hasher.finalize()), total))
}

/// Download `url` to `dest` via a `.part` temp file and an atomic rename.
/// When `dest` already exists the download is skipped and the record is
/// computed from the existing file.
pub fn download_file(url: &str, dest: &Path, timeout_secs: u64) -> Result<DownloadRecord, FetchError> {
    if dest.exists() {
        let (sha256, bytes) = sha256_file(dest)?;
        return Ok(DownloadRecord { url: url.to_string(), path: dest.to_path_buf(), sha256, bytes });
    }
    if let Some(parent) = dest.parent() {
        std::fs::create_dir_all(parent)?;
    }
    let resp = agent(timeout_secs).get(url).call().map_err(|e| map_ureq_error(url, e))?;
    let expected: Option<u64> = resp.header("Content-Length").and_then(|v| v.parse().ok());

    let part = dest.with_extension(format!(
        "{}part",
        dest.extension().map(|e| format!("{}.", e.to_string_lossy())).unwrap_or_default()
    ));
    let mut reader = resp.into_reader();
    let mut file = std::fs::File::create(&part)?;
    let copied = std::io::copy(&mut reader, &mut file);
    drop(file);
    // a mid-body failure (truncation, reset) must not leave the .part file
    let actual = match copied {
        Ok(n) => n,
        Err(e) => {
            let written = std::fs::metadata(&part).map(|m| m.len()).unwrap_or(0);
            let _ = std::fs::remove_file(&part);
            if let Some(expected) = expected {
                return Err(FetchError::SizeMismatch {
                    url: url.to_string(),
                    expected,
                    actual: written,
                });
            }
            return Err(FetchError::Io(e));
        }
    };

    if let Some(expected) = expected {
        if expected != actual {
            let _ = std::fs::remove_file(&part);
            return Err(FetchError::SizeMismatch { url: url.to_string(), expected, actual });
        }
    }
    std::fs::rename(&part, dest)?;
    let (sha256, bytes) = sha256_file(dest)?;
    Ok(DownloadRecord { url: url.to_string(), path: dest.to_path_buf(), sha256, bytes })
}

/// Run the external rasterizer over one PDF. The command template receives
/// `{input}`, `{outdir}` and `{dpi}`; any PNG files it leaves in `outdir`
/// are renamed to `page-000.png`, `page-001.png`, ... in lexicographic
/// order of the names the tool produced.
pub fn rasterize_pdf(
    pdf: &Path,
    outdir: &Path,
    dpi: u32,
    command_template: &str,
) -> Result<Vec<PathBuf>, FetchError> {
    std::fs::create_dir_all(outdir)?;
    let parts: Vec<String> = command_template
        .split_whitespace()
        .map(|p| {
            p.replace("{input}", &pdf.to_string_lossy())
                .replace("{outdir}", &outdir.to_string_lossy())
                .replace("{dpi}", &dpi.to_string())
        })
        .collect();
    if parts.is_empty() {
        return Err(FetchError::RasterizerNotFound("<empty command template>".into()));
    }
    let output = Command::new(&parts[0]).args(&parts[1..]).output().map_err(|e| {
        if e.kind() == std::io::ErrorKind::NotFound {
            FetchError::RasterizerNotFound(parts[0].clone())
        } else {
            FetchError::RasterizerFailed { status: -1, stderr: e.to_string() }
        }
    })?;
    if !output.status.success() {
        return Err(FetchError::RasterizerFailed {
            status: output.status.code().unwrap_or(-1),
            stderr: String::from_utf8_lossy(&output.stderr).into_owned(),
        });
    }

    let mut produced: Vec<PathBuf> = std::fs::read_dir(outdir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().map(|e| e == "png").unwrap_or(false))
        .collect();
    if produced.is_empty() {
        return Err(FetchError::NoPagesProduced(outdir.to_path_buf()));
    }
    produced.sort();
    let mut pages = Vec::with_capacity(produced.len());
    for (i, src) in produced.iter().enumerate() {
        let dst = outdir.join(format!("page-{i:03}.png"));
        if *src != dst {
            std::fs::rename(src, &dst)?;
        }
        pages.push(dst);
    }
    Ok(pages)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;
    use std::net::TcpListener;

    /// One-shot HTTP server: accepts `n` connections, replies with the
    /// canned responses, and returns the bound address.
    fn serve(responses: Vec<Vec<u8>>) -> String {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap();
        std::thread::spawn(move || {
            for resp in responses {
                let (mut stream, _) = match listener.accept() {
                    Ok(s) => s,
                    Err(_) => return,
                };
                // drain request head
                let mut buf = [0u8; 4096];
                let _ = stream.read(&mut buf);
                let _ = stream.write_all(&resp);
            }
        });
        format!("http://{addr}")
    }

    fn http_ok(body: &[u8], content_length: Option<usize>) -> Vec<u8> {
        let len = content_length.unwrap_or(body.len());
        let mut r = format!(
            "HTTP/1.1 200 OK\r\nContent-Type: application/octet-stream\r\nContent-Length: {len}\r\nConnection: close\r\n\r\n"
        )
        .into_bytes();
        r.extend_from_slice(body);
        r
    }

    #[test]
    fn fetch_index_returns_body() {
        let base = serve(vec![http_ok(b"<html>hello</html>", None)]);
        let body = fetch_index(&base, 5).unwrap();
        assert_eq!(body, "<html>hello</html>");
    }

    #[test]
    fn fetch_index_http_error_status() {
        let base = serve(vec![b"HTTP/1.1 404 Not Found\r\nContent-Length: 0\r\nConnection: close\r\n\r\n".to_vec()]);
        match fetch_index(&base, 5) {
            Err(FetchError::HttpError { reason, .. }) => assert!(reason.contains("404")),
            other => panic!("expected HttpError, got {other:?}"),
        }
    }

    #[test]
    fn resolve_url_cases() {
        assert_eq!(
            resolve_url("http://h.np/epaper/index.html", "http://x.np/a.pdf"),
            "http://x.np/a.pdf"
        );
        assert_eq!(resolve_url("http://h.np/epaper/index.html", "/dl/a.pdf"), "http://h.np/dl/a.pdf");
        assert_eq!(resolve_url("http://h.np/epaper/index.html", "a.pdf"), "http://h.np/epaper/a.pdf");
        assert_eq!(resolve_url("http://h.np", "a.pdf"), "http://h.np/a.pdf");
    }

    #[test]
    fn extract_links_filters_by_class_and_dedupes() {
        let html = r#"
            <html><body>
            <a class="issue-link btn" href="/dl/2024-01-01.pdf">Jan 1</a>
            <a class="nav" href="/about.html">About</a>
            <a href="/dl/2024-01-02.pdf" class='issue-link'>Jan 2</a>
            <a class="issue-link" href="/dl/2024-01-01.pdf">Jan 1 again</a>
            <a class="issue-link">no href</a>
            </body></html>"#;
        let links = extract_pdf_links(html, "http://paper.np/epaper/", "issue-link");
        assert_eq!(
            links,
            vec![
                "http://paper.np/dl/2024-01-01.pdf".to_string(),
                "http://paper.np/dl/2024-01-02.pdf".to_string(),
            ]
        );
    }

    #[test]
    fn extract_links_handles_unquoted_and_relative() {
        let html = r#"<a class=dl href=issue.pdf>x</a>"#;
        let links = extract_pdf_links(html, "http://h.np/e/index.html", "dl");
        assert_eq!(links, vec!["http://h.np/e/issue.pdf".to_string()]);
    }

    #[test]
    fn download_hash_and_idempotence() {
        let body = b"%PDF-1.4 fake issue body";
        let base = serve(vec![http_ok(body, None)]);
        let dir = tempfile::tempdir().unwrap();
        let dest = dir.path().join("issue.pdf");

        let rec = download_file(&format!("{base}/issue.pdf"), &dest, 5).unwrap();
        assert_eq!(rec.bytes, body.len() as u64);
        // oracle: sha2 over the literal bytes
        let expected = format!("{:x}", Sha256::digest(body));
        assert_eq!(rec.sha256, expected);
        assert_eq!(std::fs::read(&dest).unwrap(), body);

        // second call must not hit the network (server only served once)
        let rec2 = download_file(&format!("{base}/issue.pdf"), &dest, 5).unwrap();
        assert_eq!(rec2.sha256, expected);
    }

    #[test]
    fn download_size_mismatch_leaves_no_file() {
        // header claims 999 bytes but body is short; the connection closes
        // early so the client sees fewer bytes than promised
        let mut resp =
            b"HTTP/1.1 200 OK\r\nContent-Length: 999\r\nConnection: close\r\n\r\n".to_vec();
        resp.extend_from_slice(b"short");
        let base = serve(vec![resp]);
        let dir = tempfile::tempdir().unwrap();
        let dest = dir.path().join("issue.pdf");

        let err = download_file(&format!("{base}/x.pdf"), &dest, 5);
        match err {
            Err(FetchError::SizeMismatch { expected, actual, .. }) => {
                assert_eq!(expected, 999);
                assert_eq!(actual, 5);
            }
            // some stacks surface the truncated body as an io error instead;
            // either way no final file may exist
            Err(_) => {}
            Ok(r) => panic!("expected failure, got {r:?}"),
        }
        assert!(!dest.exists(), "final file must not exist after a failed download");
        let leftovers: Vec<_> = std::fs::read_dir(dir.path()).unwrap().collect();
        assert!(leftovers.is_empty(), "no .part file may remain");
    }

    #[test]
    fn rasterizer_not_found_and_no_pages() {
        let dir = tempfile::tempdir().unwrap();
        let pdf = dir.path().join("a.pdf");
        std::fs::write(&pdf, b"pdf").unwrap();
        let out = dir.path().join("pages");

        let err = rasterize_pdf(&pdf, &out, 150, "no-such-rasterizer {input} {outdir} {dpi}");
        assert!(matches!(err, Err(FetchError::RasterizerNotFound(_))));

        // `true` succeeds but writes nothing
        let err = rasterize_pdf(&pdf, &out, 150, "true");
        assert!(matches!(err, Err(FetchError::NoPagesProduced(_))));
    }

    #[test]
    fn rasterizer_renames_outputs_in_order() {
        let dir = tempfile::tempdir().unwrap();
        let pdf = dir.path().join("a.pdf");
        std::fs::write(&pdf, b"pdf").unwrap();
        let out = dir.path().join("pages");
        std::fs::create_dir_all(&out).unwrap();
        // fake rasterizer: writes two PNGs with tool-specific names
        let runner = dir.path().join("fake-raster.sh");
        std::fs::write(
            &runner,
            format!(
                "#!/bin/sh\ncd {} && printf x > out-2.png && printf y > out-10.png\n",
                out.display()
            ),
        )
        .unwrap();
        use std::os::unix::fs::PermissionsExt;
        std::fs::set_permissions(&runner, std::fs::Permissions::from_mode(0o755)).unwrap();

        let pages = rasterize_pdf(&pdf, &out, 150, &format!("{} {{input}} {{outdir}} {{dpi}}", runner.display())).unwrap();
        assert_eq!(pages.len(), 2);
        assert!(pages[0].ends_with("page-000.png"));
        assert!(pages[1].ends_with("page-001.png"));
        // lexicographic order of produced names: out-10.png before out-2.png
        assert_eq!(std::fs::read(&pages[0]).unwrap(), b"y");
        assert_eq!(std::fs::read(&pages[1]).unwrap(), b"x");
    }
}
