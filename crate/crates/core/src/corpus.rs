//! Corpus ingestion: line-delimited document records, sentence segmentation,
//! and abstract chunking into a background/method part and a
//! result/conclusion part.

use std::collections::HashSet;
use std::io::BufRead;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One section of a document. Semi-structured abstracts carry a heading in
/// `name`; unstructured text has `name = None`.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Eq)]
pub struct Section {
    pub name: Option<String>,
    pub text: String,
}

/// A corpus record.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Eq)]
pub struct Document {
    pub id: String,
    pub title: String,
    pub sections: Vec<Section>,
}

/// An abstract split into the part that precedes the findings and the part
/// that reports them. The background part may be empty.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Eq)]
pub struct ChunkedAbstract {
    pub doc_id: String,
    pub background_method: String,
    pub result_conclusion: String,
}

/// Collapse whitespace runs to single spaces and trim the ends. All span
/// arithmetic downstream assumes text in this form.
pub fn normalize_ws(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    let mut in_ws = false;
    for ch in text.trim().chars() {
        if ch.is_whitespace() {
            in_ws = true;
        } else {
            if in_ws && !out.is_empty() {
                out.push(' ');
            }
            in_ws = false;
            out.push(ch);
        }
    }
    out
}

/// A recoverable problem on one input line.
#[derive(Debug, Clone, Serialize)]
pub struct LineIssue {
    /// 1-based line number.
    pub line: usize,
    pub message: String,
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct CorpusSummary {
    pub documents: usize,
    pub skipped: usize,
    pub issues: Vec<LineIssue>,
}

/// Parse a stream of line-delimited JSON document records.
///
/// Well-formed documents come back in input order with section text
/// whitespace-normalized. Malformed lines (bad JSON, empty id, empty section
/// text, duplicate id) are skipped and reported in the summary with their
/// line numbers. An unreadable stream is fatal.
pub fn parse_corpus<R: BufRead>(reader: R) -> Result<(Vec<Document>, CorpusSummary)> {
    let mut docs = Vec::new();
    let mut summary = CorpusSummary::default();
    let mut seen_ids: HashSet<String> = HashSet::new();

    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        match parse_record(&line, &mut seen_ids) {
            Ok(doc) => docs.push(doc),
            Err(message) => {
                summary.skipped += 1;
                summary.issues.push(LineIssue {
                    line: line_no,
                    message,
                });
            }
        }
    }
    summary.documents = docs.len();
    Ok((docs, summary))
}

fn parse_record(
    line: &str,
    seen_ids: &mut HashSet<String>,
) -> std::result::Result<Document, String> {
    let mut doc: Document =
        serde_json::from_str(line).map_err(|e| format!("malformed record: {e}"))?;
    if doc.id.trim().is_empty() {
        return Err("document id is empty".into());
    }
    if !seen_ids.insert(doc.id.clone()) {
        return Err(format!("duplicate document id {:?}", doc.id));
    }
    for section in &mut doc.sections {
        section.text = normalize_ws(&section.text);
        if section.text.is_empty() {
            return Err("section text is empty after whitespace normalization".into());
        }
    }
    Ok(doc)
}

/// Sentence segmenter with a configurable abbreviation guard list.
///
/// Boundaries sit after `.`/`!`/`?` followed by whitespace and a capital
/// letter, except when the token ending at the period is a guarded
/// abbreviation. Periods inside decimal numbers never qualify because they
/// are not followed by whitespace.
#[derive(Debug, Clone)]
pub struct Segmenter {
    abbreviations: Vec<String>,
}

impl Default for Segmenter {
    fn default() -> Self {
        Segmenter {
            abbreviations: ["vs.", "e.g.", "i.e.", "Fig.", "al."]
                .iter()
                .map(|s| s.to_lowercase())
                .collect(),
        }
    }
}

impl Segmenter {
    pub fn with_abbreviations<I: IntoIterator<Item = String>>(abbrevs: I) -> Self {
        Segmenter {
            abbreviations: abbrevs.into_iter().map(|s| s.to_lowercase()).collect(),
        }
    }

    /// Split text into sentences. The sentences partition the
    /// whitespace-normalized input: joining them with single spaces
    /// reproduces it.
    pub fn segment(&self, text: &str) -> Vec<String> {
        let text = normalize_ws(text);
        if text.is_empty() {
            return Vec::new();
        }
        let bytes = text.as_bytes();
        let mut sentences = Vec::new();
        let mut start = 0usize;

        let mut iter = text.char_indices().peekable();
        while let Some((pos, ch)) = iter.next() {
            if ch != '.' && ch != '!' && ch != '?' {
                continue;
            }
            // require a single space (normalized) then an uppercase letter
            let after = pos + ch.len_utf8();
            if after >= bytes.len() || bytes[after] != b' ' {
                continue;
            }
            let next_ch = text[after + 1..].chars().next();
            let capital = matches!(next_ch, Some(c) if c.is_uppercase());
            if !capital {
                continue;
            }
            if ch == '.' && self.is_guarded(&text, after) {
                continue;
            }
            sentences.push(text[start..after].to_string());
            start = after + 1;
        }
        if start < text.len() {
            sentences.push(text[start..].to_string());
        }
        sentences
    }

    // `end` is the byte offset just past the candidate period; the token
    // holding it runs back to the previous space.
    fn is_guarded(&self, text: &str, end: usize) -> bool {
        let before = &text[..end];
        let token_start = before.rfind(' ').map(|i| i + 1).unwrap_or(0);
        let token = before[token_start..].to_lowercase();
        self.abbreviations
            .iter()
            .any(|abbr| token == *abbr || token.ends_with(&format!(".{abbr}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SectionCategory {
    Background,
    Result,
}

/// Routes named sections by case-insensitive heading prefix. Unknown names
/// fall back to background/method so findings never leak into the
/// background of a mined record.
#[derive(Debug, Clone)]
pub struct SectionMap {
    background_prefixes: Vec<String>,
    result_prefixes: Vec<String>,
}

const DEFAULT_SECTION_MAP: &str = include_str!("../data/section_map.tsv");

impl Default for SectionMap {
    fn default() -> Self {
        SectionMap::from_tsv(DEFAULT_SECTION_MAP).expect("embedded section map is well-formed")
    }
}

impl SectionMap {
    /// Load from TSV rows `prefix \t category` where category is
    /// `background` or `result`. Lines starting with `#` are comments.
    pub fn from_tsv(content: &str) -> Result<Self> {
        let mut background_prefixes = Vec::new();
        let mut result_prefixes = Vec::new();
        for (idx, line) in content.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let mut parts = line.split('\t');
            let prefix = parts.next().unwrap_or_default().trim().to_uppercase();
            let category = parts.next().unwrap_or_default().trim();
            if prefix.is_empty() {
                return Err(Error::invalid(
                    "section map",
                    format!("line {}: empty prefix", idx + 1),
                ));
            }
            match category {
                "background" => background_prefixes.push(prefix),
                "result" => result_prefixes.push(prefix),
                other => {
                    return Err(Error::invalid(
                        "section map",
                        format!("line {}: unknown category {other:?}", idx + 1),
                    ))
                }
            }
        }
        Ok(SectionMap {
            background_prefixes,
            result_prefixes,
        })
    }

    pub fn categorize(&self, name: &str) -> SectionCategory {
        let upper = name.trim().to_uppercase();
        if self.result_prefixes.iter().any(|p| upper.starts_with(p)) {
            SectionCategory::Result
        } else if self
            .background_prefixes
            .iter()
            .any(|p| upper.starts_with(p))
        {
            SectionCategory::Background
        } else {
            SectionCategory::Background
        }
    }
}

/// Split a document into background/method and result/conclusion parts.
///
/// Named sections route by the section map. Unnamed text is segmented and
/// split at the first sentence the detector flags as comparative; once the
/// result part has started, later unnamed text stays in it. Documents with
/// no named sections and no detector hit end up entirely in
/// `background_method`.
pub fn chunk_abstract<F>(
    doc: &Document,
    map: &SectionMap,
    segmenter: &Segmenter,
    detector: F,
) -> ChunkedAbstract
where
    F: Fn(&str) -> bool,
{
    let mut background: Vec<String> = Vec::new();
    let mut result: Vec<String> = Vec::new();
    let mut in_result = false;

    for section in &doc.sections {
        match &section.name {
            Some(name) => match map.categorize(name) {
                SectionCategory::Background => {
                    background.extend(segmenter.segment(&section.text))
                }
                SectionCategory::Result => {
                    in_result = true;
                    result.extend(segmenter.segment(&section.text));
                }
            },
            None => {
                for sentence in segmenter.segment(&section.text) {
                    if in_result || detector(&sentence) {
                        in_result = true;
                        result.push(sentence);
                    } else {
                        background.push(sentence);
                    }
                }
            }
        }
    }

    ChunkedAbstract {
        doc_id: doc.id.clone(),
        background_method: background.join(" "),
        result_conclusion: result.join(" "),
    }
}
