//! OCR word-table parsing and the tender keyword decision.
//!
//! The OCR engine itself is an external process invoked through a command
//! template; its contract is a 12-column TSV word table on stdout (level,
//! page_num, block_num, par_num, line_num, word_num, left, top, width,
//! height, conf, text). Confidence -1 marks structural (non-word) rows.

use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;
use std::path::Path;
use std::process::Command;
use thiserror::Error;

pub const TSV_HEADER: &str =
    "level\tpage_num\tblock_num\tpar_num\tline_num\tword_num\tleft\ttop\twidth\theight\tconf\ttext";

#[derive(Debug, Error)]
pub enum OcrError {
    #[error("malformed TSV row at line {line}: {reason}")]
    MalformedRow { line: usize, reason: String },
    #[error("keyword file is empty after stripping comments and blanks")]
    EmptyKeywordSet,
    #[error("cannot read keyword file: {0}")]
    FileUnreadable(std::io::Error),
    #[error("OCR engine executable not found: {0}")]
    EngineNotFound(String),
    #[error("OCR engine exited with {status}: {stderr}")]
    EngineFailed { status: i32, stderr: String },
    #[error("OCR engine produced non-UTF-8 output")]
    BadOutput,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OcrToken {
    pub level: u32,
    pub page_num: u32,
    pub block_num: u32,
    pub par_num: u32,
    pub line_num: u32,
    pub word_num: u32,
    pub left: u32,
    pub top: u32,
    pub width: u32,
    pub height: u32,
    pub conf: f64,
    pub text: String,
}

impl OcrToken {
    /// conf = -1 marks page/block/paragraph/line rows with no word text.
    pub fn is_structural(&self) -> bool {
        self.conf == -1.0
    }
}

/// Normalized tender vocabulary (Nepali and English).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KeywordSet {
    pub keywords: BTreeSet<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TenderDecision {
    pub is_tender: bool,
    pub matched: BTreeSet<String>,
    pub common_count: usize,
    pub min_common: usize,
}

/// Strict 12-column parse; an optional header row is skipped.
pub fn parse_ocr_tsv(text: &str) -> Result<Vec<OcrToken>, OcrError> {
    let mut tokens = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let lineno = i + 1;
        if line.is_empty() {
            continue;
        }
        if i == 0 && line == TSV_HEADER {
            continue;
        }
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() != 12 {
            return Err(OcrError::MalformedRow {
                line: lineno,
                reason: format!("expected 12 columns, found {}", cols.len()),
            });
        }
        let num = |idx: usize| -> Result<u32, OcrError> {
            cols[idx].parse().map_err(|_| OcrError::MalformedRow {
                line: lineno,
                reason: format!("column {} is not an integer: '{}'", idx + 1, cols[idx]),
            })
        };
        let conf: f64 = cols[10].parse().map_err(|_| OcrError::MalformedRow {
            line: lineno,
            reason: format!("conf is not a number: '{}'", cols[10]),
        })?;
        tokens.push(OcrToken {
            level: num(0)?,
            page_num: num(1)?,
            block_num: num(2)?,
            par_num: num(3)?,
            line_num: num(4)?,
            word_num: num(5)?,
            left: num(6)?,
            top: num(7)?,
            width: num(8)?,
            height: num(9)?,
            conf,
            text: cols[11].to_string(),
        });
    }
    Ok(tokens)
}

/// Inverse of `parse_ocr_tsv` for well-formed tokens, header included.
pub fn serialize_ocr_tsv(tokens: &[OcrToken]) -> String {
    let mut out = String::from(TSV_HEADER);
    out.push('\n');
    for t in tokens {
        out.push_str(&format!(
            "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\n",
            t.level,
            t.page_num,
            t.block_num,
            t.par_num,
            t.line_num,
            t.word_num,
            t.left,
            t.top,
            t.width,
            t.height,
            t.conf,
            t.text
        ));
    }
    out
}

/// Unicode case fold plus leading/trailing punctuation strip. Devanagari
/// has no case and passes through apart from trimming.
pub fn normalize_token(s: &str) -> String {
    s.trim_matches(|c: char| !c.is_alphanumeric()).to_lowercase()
}

/// One keyword per line; `#` comments and blank lines ignored; entries are
/// normalized and deduplicated.
pub fn load_keywords(path: &Path) -> Result<KeywordSet, OcrError> {
    let text = std::fs::read_to_string(path).map_err(OcrError::FileUnreadable)?;
    let set = keywords_from_str(&text)?;
    Ok(set)
}

pub fn keywords_from_str(text: &str) -> Result<KeywordSet, OcrError> {
    let keywords: BTreeSet<String> = text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(normalize_token)
        .filter(|k| !k.is_empty())
        .collect();
    if keywords.is_empty() {
        return Err(OcrError::EmptyKeywordSet);
    }
    Ok(KeywordSet { keywords })
}

/// Set intersection of confident token texts with the keyword set;
/// tender when the intersection reaches `min_common`.
pub fn is_tender(
    tokens: &[OcrToken],
    keywords: &KeywordSet,
    min_common: usize,
    min_conf: f64,
) -> TenderDecision {
    let token_set: BTreeSet<String> = tokens
        .iter()
        .filter(|t| !t.is_structural() && t.conf >= min_conf)
        .map(|t| normalize_token(&t.text))
        .filter(|s| !s.is_empty())
        .collect();
    let matched: BTreeSet<String> =
        token_set.intersection(&keywords.keywords).cloned().collect();
    let common_count = matched.len();
    TenderDecision { is_tender: common_count >= min_common, matched, common_count, min_common }
}

/// Invoke the external OCR engine. The template is split on whitespace and
/// `{input}` is substituted with the image path; the engine must write the
/// TSV table to stdout.
pub fn run_ocr(image: &Path, command_template: &str) -> Result<Vec<OcrToken>, OcrError> {
    let parts: Vec<String> = command_template
        .split_whitespace()
        .map(|p| p.replace("{input}", &image.to_string_lossy()))
        .collect();
    if parts.is_empty() {
        return Err(OcrError::EngineNotFound("<empty command template>".into()));
    }
    let output = Command::new(&parts[0]).args(&parts[1..]).output().map_err(|e| {
        if e.kind() == std::io::ErrorKind::NotFound {
            OcrError::EngineNotFound(parts[0].clone())
        } else {
            OcrError::EngineFailed { status: -1, stderr: e.to_string() }
        }
    })?;
    if !output.status.success() {
        return Err(OcrError::EngineFailed {
            status: output.status.code().unwrap_or(-1),
            stderr: String::from_utf8_lossy(&output.stderr).into_owned(),
        });
    }
    let stdout = String::from_utf8(output.stdout).map_err(|_| OcrError::BadOutput)?;
    parse_ocr_tsv(&stdout)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn word(text: &str, conf: f64) -> OcrToken {
        OcrToken {
            level: 5,
            page_num: 1,
            block_num: 1,
            par_num: 1,
            line_num: 1,
            word_num: 1,
            left: 0,
            top: 0,
            width: 10,
            height: 10,
            conf,
            text: text.to_string(),
        }
    }

    fn kw(words: &[&str]) -> KeywordSet {
        KeywordSet { keywords: words.iter().map(|w| normalize_token(w)).collect() }
    }

    #[test]
    fn parse_header_only_and_basic_row() {
        assert!(parse_ocr_tsv(TSV_HEADER).unwrap().is_empty());
        let t = parse_ocr_tsv("5\t1\t1\t1\t1\t2\t120\t45\t80\t22\t96.5\ttender").unwrap();
        assert_eq!(t.len(), 1);
        assert_eq!(t[0].level, 5);
        assert_eq!(t[0].word_num, 2);
        assert_eq!(t[0].left, 120);
        assert_eq!(t[0].conf, 96.5);
        assert_eq!(t[0].text, "tender");
        assert!(!t[0].is_structural());
    }

    #[test]
    fn parse_wrong_column_count_reports_line() {
        let text = format!("{TSV_HEADER}\n5\t1\t1\t1\t1\t2\t120\t45\t80\t22\t96.5");
        match parse_ocr_tsv(&text) {
            Err(OcrError::MalformedRow { line, .. }) => assert_eq!(line, 2),
            other => panic!("expected MalformedRow, got {other:?}"),
        }
    }

    #[test]
    fn parse_structural_row_retained() {
        let t = parse_ocr_tsv("2\t1\t1\t0\t0\t0\t0\t0\t600\t800\t-1\t").unwrap();
        assert_eq!(t.len(), 1);
        assert!(t[0].is_structural());
    }

    #[test]
    fn tsv_roundtrip() {
        let tokens = vec![word("Tender", 96.5), word("बोलपत्र", 88.0)];
        let text = serialize_ocr_tsv(&tokens);
        assert_eq!(parse_ocr_tsv(&text).unwrap(), tokens);
        // byte-identical re-serialization
        assert_eq!(serialize_ocr_tsv(&parse_ocr_tsv(&text).unwrap()), text);
    }

    #[test]
    fn normalize_cases() {
        assert_eq!(normalize_token("Tender,"), "tender");
        assert_eq!(normalize_token("बोलपत्र"), "बोलपत्र");
        assert_eq!(normalize_token("(BID)"), "bid");
        assert_eq!(normalize_token("..."), "");
    }

    #[test]
    fn keywords_parse_dedupe_and_empty() {
        let s = keywords_from_str("tender\nबोलपत्र\n# comment\n").unwrap();
        assert_eq!(s.keywords.len(), 2);
        let s = keywords_from_str("bid\nBid\nBID,\n").unwrap();
        assert_eq!(s.keywords.len(), 1);
        assert!(matches!(keywords_from_str("# only\n# comments\n"), Err(OcrError::EmptyKeywordSet)));
    }

    #[test]
    fn is_tender_basic_and_empty() {
        let tokens = vec![word("tender", 90.0), word("notice", 90.0), word("bid", 90.0)];
        let d = is_tender(&tokens, &kw(&["tender", "bid", "बोलपत्र"]), 2, 40.0);
        assert!(d.is_tender);
        assert_eq!(d.common_count, 2);
        assert!(d.matched.contains("tender") && d.matched.contains("bid"));

        let d = is_tender(&[], &kw(&["tender"]), 1, 40.0);
        assert!(!d.is_tender);
        assert_eq!(d.common_count, 0);
    }

    #[test]
    fn decision_ignores_low_confidence_and_duplicates() {
        let tokens = vec![
            word("tender", 20.0), // below floor
            word("bid", 90.0),
            word("bid", 95.0), // duplicate counts once
        ];
        let d = is_tender(&tokens, &kw(&["tender", "bid"]), 1, 40.0);
        assert_eq!(d.common_count, 1);
        // raising min_conf never increases the count
        let d2 = is_tender(&tokens, &kw(&["tender", "bid"]), 1, 99.0);
        assert!(d2.common_count <= d.common_count);
    }

    #[test]
    fn intersection_matches_brute_force_on_random_sets() {
        use rand::{Rng, SeedableRng};
        let vocab: Vec<String> = (0..40).map(|i| format!("w{i}")).collect();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(19);
        for _ in 0..100 {
            let tokens: Vec<OcrToken> = (0..rng.gen_range(0..30))
                .map(|_| word(&vocab[rng.gen_range(0..vocab.len())], 90.0))
                .collect();
            let kws: Vec<&str> = vocab
                .iter()
                .filter(|_| rng.gen_bool(0.3))
                .map(|s| s.as_str())
                .collect();
            if kws.is_empty() {
                continue;
            }
            let d = is_tender(&tokens, &kw(&kws), 3, 40.0);
            // brute-force double loop over deduped token texts
            let mut seen = std::collections::BTreeSet::new();
            let mut count = 0;
            for t in &tokens {
                let n = normalize_token(&t.text);
                if seen.insert(n.clone()) && kws.iter().any(|k| normalize_token(k) == n) {
                    count += 1;
                }
            }
            assert_eq!(d.common_count, count);
        }
    }

    #[test]
    fn monotone_in_keywords() {
        let tokens = vec![word("tender", 90.0), word("bid", 90.0)];
        let small = kw(&["tender", "bid"]);
        let mut large = small.clone();
        large.keywords.insert("notice".into());
        let d1 = is_tender(&tokens, &small, 2, 40.0);
        let d2 = is_tender(&tokens, &large, 2, 40.0);
        assert!(d1.is_tender);
        assert!(d2.is_tender, "adding a keyword must not flip positive to negative");
    }

    #[test]
    fn run_ocr_missing_engine() {
        let err = run_ocr(Path::new("/tmp/x.png"), "definitely-not-a-real-binary {input}");
        assert!(matches!(err, Err(OcrError::EngineNotFound(_))));
    }

    #[test]
    fn run_ocr_engine_failure_captures_stderr() {
        let err = run_ocr(Path::new("/tmp/x.png"), "sh -c exit_1_with_stderr_is_hard_inline");
        // sh exits nonzero for an unknown command
        match err {
            Err(OcrError::EngineFailed { status, .. }) => assert_ne!(status, 0),
            other => panic!("expected EngineFailed, got {other:?}"),
        }
    }
}
