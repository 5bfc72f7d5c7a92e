//! Section-structured document reconstruction from a layout stream.
//!
//! The pipeline is `classify_furniture` → [`detect_sections`] →
//! [`merge_paragraphs`] → [`place_placeholders`]. Its output,
//! [`ReconstructedDocument`], has a canonical JSON form ([`to_json`]) and a
//! flat text rendering ([`render_text`]) that prompts embed.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};

use crate::layout::{classify_furniture, ElementKind, LayoutElement, LayoutStream};

/// Coarse role of a section, derived from its heading.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum SectionLabel {
    Abstract,
    Toc,
    /// Dotted numeric heading such as `2.3`, stored as `[2, 3]`.
    NumberedSection {
        path: Vec<u32>,
    },
    References,
    Appendix,
    Acknowledgments,
    Other,
}

impl fmt::Display for SectionLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SectionLabel::Abstract => f.write_str("abstract"),
            SectionLabel::Toc => f.write_str("toc"),
            SectionLabel::NumberedSection { path } => {
                f.write_str("numbered-section[")?;
                for (i, n) in path.iter().enumerate() {
                    if i > 0 {
                        f.write_str(".")?;
                    }
                    write!(f, "{n}")?;
                }
                f.write_str("]")
            }
            SectionLabel::References => f.write_str("references"),
            SectionLabel::Appendix => f.write_str("appendix"),
            SectionLabel::Acknowledgments => f.write_str("acknowledgments"),
            SectionLabel::Other => f.write_str("other"),
        }
    }
}

/// Tunables for reconstruction. Defaults follow common typographic convention.
#[derive(Debug, Clone, PartialEq)]
pub struct ReconstructConfig {
    /// A vertical gap above this multiple of the modal line pitch starts a paragraph.
    pub paragraph_gap_factor: f64,
    /// Indent, in ems of the section's modal font size, that marks a new paragraph
    /// after a sentence-final line.
    pub indent_em: f64,
    /// Canonical unnumbered headings, matched case-insensitively after
    /// whitespace collapse.
    pub titles: Vec<(String, SectionLabel)>,
}

impl Default for ReconstructConfig {
    fn default() -> Self {
        let titles = [
            ("Abstract", SectionLabel::Abstract),
            ("摘要", SectionLabel::Abstract),
            ("Contents", SectionLabel::Toc),
            ("Table of Contents", SectionLabel::Toc),
            ("目录", SectionLabel::Toc),
            ("Introduction", SectionLabel::Other),
            ("Related Work", SectionLabel::Other),
            ("Conclusion", SectionLabel::Other),
            ("Conclusions", SectionLabel::Other),
            ("References", SectionLabel::References),
            ("Bibliography", SectionLabel::References),
            ("参考文献", SectionLabel::References),
            ("Acknowledgments", SectionLabel::Acknowledgments),
            ("Acknowledgements", SectionLabel::Acknowledgments),
            ("致谢", SectionLabel::Acknowledgments),
            ("Appendix", SectionLabel::Appendix),
            ("Appendices", SectionLabel::Appendix),
        ];
        ReconstructConfig {
            paragraph_gap_factor: 1.8,
            indent_em: 1.0,
            titles: titles
                .into_iter()
                .map(|(t, l)| (t.to_string(), l))
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SectionBoundary {
    /// Index into the stream's elements.
    pub element_index: usize,
    pub label: SectionLabel,
    pub heading_text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Paragraph {
    pub text: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PlaceholderKind {
    Figure,
    Table,
    Equation,
}

impl PlaceholderKind {
    fn from_element(kind: ElementKind) -> Option<PlaceholderKind> {
        match kind {
            ElementKind::Figure => Some(PlaceholderKind::Figure),
            ElementKind::Table => Some(PlaceholderKind::Table),
            ElementKind::Equation => Some(PlaceholderKind::Equation),
            _ => None,
        }
    }

    fn tag(self) -> &'static str {
        match self {
            PlaceholderKind::Figure => "FIGURE",
            PlaceholderKind::Table => "TABLE",
            PlaceholderKind::Equation => "EQUATION",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase", deny_unknown_fields)]
pub enum Block {
    Paragraph(Paragraph),
    Placeholder {
        kind: PlaceholderKind,
        /// 1-based ordinal within `kind`, in reading order.
        ref_id: u32,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        caption: Option<String>,
    },
}

impl Block {
    /// Inline text form: the paragraph itself, or `[FIGURE k: caption]`.
    pub fn render(&self) -> String {
        match self {
            Block::Paragraph(p) => p.text.clone(),
            Block::Placeholder {
                kind,
                ref_id,
                caption: Some(c),
            } => {
                format!("[{} {}: {}]", kind.tag(), ref_id, c)
            }
            Block::Placeholder {
                kind,
                ref_id,
                caption: None,
            } => format!("[{} {}]", kind.tag(), ref_id),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Section {
    pub label: SectionLabel,
    pub heading_text: String,
    pub blocks: Vec<Block>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DocumentStats {
    pub pages: u32,
    pub elements_in: usize,
    pub furniture_removed: usize,
    pub placeholders_inserted: usize,
}

/// Model-facing form of a thesis: a title and ordered sections of blocks.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReconstructedDocument {
    pub source_id: String,
    pub title: String,
    pub sections: Vec<Section>,
    pub stats: DocumentStats,
}

impl ReconstructedDocument {
    pub fn paragraphs(&self) -> impl Iterator<Item = &Paragraph> {
        self.sections
            .iter()
            .flat_map(|s| &s.blocks)
            .filter_map(|b| match b {
                Block::Paragraph(p) => Some(p),
                Block::Placeholder { .. } => None,
            })
    }

    pub fn placeholder_count(&self) -> usize {
        self.sections
            .iter()
            .flat_map(|s| &s.blocks)
            .filter(|b| matches!(b, Block::Placeholder { .. }))
            .count()
    }

    /// Checks the document invariants, returning the first violation.
    pub fn validate(&self) -> Result<(), String> {
        let mut last_ref: BTreeMap<PlaceholderKind, u32> = BTreeMap::new();
        for (si, section) in self.sections.iter().enumerate() {
            for block in &section.blocks {
                match block {
                    Block::Paragraph(p) => {
                        if p.text.contains(['\n', '\r']) {
                            return Err(format!("section {si}: paragraph contains a line break"));
                        }
                        if p.text.trim() != p.text || p.text.is_empty() {
                            return Err(format!("section {si}: paragraph is empty or not trimmed"));
                        }
                    }
                    Block::Placeholder { kind, ref_id, .. } => {
                        let prev = last_ref.insert(*kind, *ref_id).unwrap_or(0);
                        if *ref_id <= prev {
                            return Err(format!(
                                "section {si}: {} ref_id {ref_id} out of reading order",
                                kind.tag()
                            ));
                        }
                    }
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ReconstructError {
    #[error("no body text remains after furniture removal")]
    EmptyDocument,
    #[error("document JSON violates the schema: {0}")]
    SchemaViolation(String),
}

impl ReconstructError {
    pub fn name(&self) -> &'static str {
        match self {
            ReconstructError::EmptyDocument => "EmptyDocument",
            ReconstructError::SchemaViolation(_) => "SchemaViolation",
        }
    }
}

fn collapse_whitespace(text: &str) -> String {
    text.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Most frequent value after quantizing to `1/scale`; ties go to the smaller value.
fn modal(values: impl Iterator<Item = f64>, scale: f64) -> Option<f64> {
    let mut counts: BTreeMap<i64, usize> = BTreeMap::new();
    for v in values.filter(|v| v.is_finite()) {
        *counts.entry(libm::round(v * scale) as i64).or_default() += 1;
    }
    let mut best: Option<(i64, usize)> = None;
    for (k, n) in counts {
        if best.is_none_or(|(_, bn)| n > bn) {
            best = Some((k, n));
        }
    }
    best.map(|(k, _)| k as f64 / scale)
}

fn modal_font_size<'a>(lines: impl Iterator<Item = &'a LayoutElement>) -> Option<f64> {
    modal(lines.filter_map(|e| e.font_size), 10.0)
}

/// Parses a leading dotted number followed by whitespace and a title, e.g.
/// `2.3 Methods` or `4. Results`. Components must be 1..=999, which keeps
/// lines such as "2024 was a dry year" out.
pub fn numbered_heading_path(text: &str) -> Option<Vec<u32>> {
    let (number, rest) = text.trim_start().split_once(char::is_whitespace)?;
    if rest.trim().is_empty() {
        return None;
    }
    let number = number.strip_suffix('.').unwrap_or(number);
    let mut path = Vec::new();
    for part in number.split('.') {
        if part.is_empty() || part.len() > 3 || !part.chars().all(|c| c.is_ascii_digit()) {
            return None;
        }
        let n: u32 = part.parse().ok()?;
        if n == 0 {
            return None;
        }
        path.push(n);
    }
    (path.len() <= 6).then_some(path)
}

fn canonical_title(text: &str, cfg: &ReconstructConfig) -> Option<SectionLabel> {
    let norm = collapse_whitespace(text);
    let norm = norm.trim_end_matches([':', '：']).trim_end();
    let lowered = norm.to_lowercase();
    for (title, label) in &cfg.titles {
        if title.to_lowercase() == lowered {
            return Some(label.clone());
        }
    }
    // "Appendix A", "Appendix B: Survey"
    let first = lowered.split(' ').next().unwrap_or("");
    (first == "appendix" && lowered.len() > first.len()).then_some(SectionLabel::Appendix)
}

/// Finds section headings: text lines matching a canonical title or a
/// numbered-heading pattern, set larger than the modal body size or in bold.
pub fn detect_sections(stream: &LayoutStream, cfg: &ReconstructConfig) -> Vec<SectionBoundary> {
    let elements = stream.elements();
    let text_lines = || elements.iter().filter(|e| e.kind == ElementKind::TextLine);
    let Some(body_size) = modal_font_size(text_lines()) else {
        return Vec::new();
    };
    let mut out = Vec::new();
    for (i, e) in elements.iter().enumerate() {
        if e.kind != ElementKind::TextLine {
            continue;
        }
        let emphasized = e.is_bold() || e.font_size.is_some_and(|s| s > body_size + 0.05);
        if !emphasized {
            continue;
        }
        let label = canonical_title(&e.text, cfg).or_else(|| {
            numbered_heading_path(&e.text).map(|path| SectionLabel::NumberedSection { path })
        });
        if let Some(label) = label {
            out.push(SectionBoundary {
                element_index: i,
                label,
                heading_text: collapse_whitespace(&e.text),
            });
        }
    }
    out
}

fn ends_sentence(text: &str) -> bool {
    let trimmed = text
        .trim_end()
        .trim_end_matches(['"', '\'', ')', '”', '’', '）', '」', '』']);
    trimmed.ends_with(['.', '!', '?', '。', '！', '？'])
}

fn join_line(paragraph: &mut String, line: &str) {
    if paragraph.is_empty() {
        paragraph.push_str(line);
        return;
    }
    let next_lower = line.chars().next().is_some_and(char::is_lowercase);
    let mut tail = paragraph.chars().rev();
    let hyphenated = tail.next() == Some('-') && tail.next().is_some_and(char::is_alphabetic);
    if hyphenated && next_lower {
        paragraph.pop();
    } else {
        paragraph.push(' ');
    }
    paragraph.push_str(line);
}

/// True for lines opening a numbered reference entry such as `[12] A. Author`.
fn starts_reference_entry(text: &str) -> bool {
    let t = text.trim_start();
    let Some(rest) = t.strip_prefix('[') else {
        return false;
    };
    let digits = rest.chars().take_while(char::is_ascii_digit).count();
    digits > 0 && rest[digits..].starts_with(']')
}

/// Groups `lines` into paragraphs; returns `(text, first, last)` with
/// inclusive indices into `lines`. `forced[i]` starts a paragraph at line `i`
/// regardless of geometry.
fn merge_spans(
    lines: &[&LayoutElement],
    forced: &[bool],
    cfg: &ReconstructConfig,
) -> Vec<(String, usize, usize)> {
    if lines.is_empty() {
        return Vec::new();
    }
    let pitch = modal(
        lines
            .windows(2)
            .filter(|w| w[0].page == w[1].page)
            .map(|w| w[1].bbox.y0 - w[0].bbox.y0)
            .filter(|d| *d > 0.0),
        2.0,
    );
    let margin = lines
        .iter()
        .map(|e| e.bbox.x0)
        .fold(f64::INFINITY, f64::min);
    let em = modal_font_size(lines.iter().copied()).unwrap_or(10.0);

    let mut out = Vec::new();
    let mut current = String::new();
    let mut start = 0;
    for (i, line) in lines.iter().enumerate() {
        let text = collapse_whitespace(&line.text);
        if i > 0 {
            let prev = lines[i - 1];
            let gap_break = match pitch {
                Some(p) if prev.page == line.page => {
                    line.bbox.y0 - prev.bbox.y0 > cfg.paragraph_gap_factor * p
                }
                _ => false,
            };
            let sentence_done = ends_sentence(&current);
            let indent_break = sentence_done && line.bbox.x0 - margin > cfg.indent_em * em;
            let entry_break = sentence_done && starts_reference_entry(&text);
            if gap_break || indent_break || entry_break || forced.get(i).copied().unwrap_or(false) {
                out.push((core::mem::take(&mut current), start, i - 1));
                start = i;
            }
        }
        join_line(&mut current, &text);
    }
    out.push((current, start, lines.len() - 1));
    out
}

/// Merges the reading-ordered text lines of one section into paragraphs.
///
/// A new paragraph starts when the vertical gap exceeds
/// `paragraph_gap_factor` × the modal line pitch, or when the previous line
/// ends a sentence and the next is indented more than `indent_em` ems past the
/// section's left margin. A sentence-final line followed by a `[n]` reference
/// entry also ends the paragraph. Lines join with one space; a trailing hyphen
/// before a lowercase continuation is removed.
pub fn merge_paragraphs(lines: &[LayoutElement], cfg: &ReconstructConfig) -> Vec<Paragraph> {
    let refs: Vec<&LayoutElement> = lines.iter().collect();
    merge_spans(&refs, &[], cfg)
        .into_iter()
        .map(|(text, _, _)| Paragraph { text })
        .collect()
}

/// A block tagged with the inclusive range of stream indices it came from.
#[derive(Debug, Clone, PartialEq)]
pub struct AnchoredBlock {
    pub block: Block,
    pub first: usize,
    pub last: usize,
}

/// A section under construction, before placeholders are inserted.
#[derive(Debug, Clone, PartialEq)]
pub struct DraftSection {
    pub label: SectionLabel,
    pub heading_text: String,
    /// Stream index where the section starts (its heading, or 0).
    pub start: usize,
    pub blocks: Vec<AnchoredBlock>,
}

impl DraftSection {
    pub fn finish(self) -> Section {
        Section {
            label: self.label,
            heading_text: self.heading_text,
            blocks: self.blocks.into_iter().map(|b| b.block).collect(),
        }
    }
}

/// Inserts one placeholder per figure, table and equation in `stream`.
///
/// Each goes into the section that contains its stream position, before the
/// first block that starts after it. Ref ids count up per kind in reading
/// order. Returns the number inserted.
pub fn place_placeholders(stream: &LayoutStream, sections: &mut [DraftSection]) -> usize {
    let mut counters: BTreeMap<PlaceholderKind, u32> = BTreeMap::new();
    let mut inserted = 0;
    for (i, e) in stream.elements().iter().enumerate() {
        let Some(kind) = PlaceholderKind::from_element(e.kind) else {
            continue;
        };
        let counter = counters.entry(kind).or_default();
        *counter += 1;
        let block = Block::Placeholder {
            kind,
            ref_id: *counter,
            caption: e
                .caption
                .as_deref()
                .map(collapse_whitespace)
                .filter(|c| !c.is_empty()),
        };
        let target = sections.iter().rposition(|s| s.start <= i).unwrap_or(0);
        let Some(section) = sections.get_mut(target) else {
            continue;
        };
        let at = section
            .blocks
            .iter()
            .position(|b| b.first > i)
            .unwrap_or(section.blocks.len());
        section.blocks.insert(
            at,
            AnchoredBlock {
                block,
                first: i,
                last: i,
            },
        );
        inserted += 1;
    }
    inserted
}

fn title_index(stream: &LayoutStream) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, e) in stream.elements().iter().enumerate() {
        if e.page != 1 || e.kind != ElementKind::TextLine {
            continue;
        }
        let size = e.font_size.unwrap_or(0.0);
        if best.is_none_or(|(_, s)| size > s) {
            best = Some((i, size));
        }
    }
    best.map(|(i, _)| i)
}

/// Full pipeline with the default configuration.
pub fn reconstruct(stream: &LayoutStream) -> Result<ReconstructedDocument, ReconstructError> {
    reconstruct_with(stream, &ReconstructConfig::default())
}

/// Runs furniture classification, section detection, paragraph merging and
/// placeholder insertion. The title is the largest-font line on page 1
/// (earliest wins ties); it is not repeated as body text unless it is itself a
/// section heading.
pub fn reconstruct_with(
    stream: &LayoutStream,
    cfg: &ReconstructConfig,
) -> Result<ReconstructedDocument, ReconstructError> {
    let classified = classify_furniture(stream);
    let elements = classified.elements();
    let boundaries = detect_sections(&classified, cfg);
    let heading_indices: BTreeSet<usize> = boundaries.iter().map(|b| b.element_index).collect();
    let title_idx = title_index(&classified);
    let title = title_idx
        .map(|i| collapse_whitespace(&elements[i].text))
        .unwrap_or_default();

    // Caption text that the extractor also emitted as a text line would
    // otherwise appear twice: once in the placeholder and once in the body.
    let captions: BTreeSet<(u32, String)> = elements
        .iter()
        .filter(|e| e.kind.is_non_textual())
        .filter_map(|e| {
            e.caption
                .as_deref()
                .map(|c| (e.page, collapse_whitespace(c)))
        })
        .collect();

    let mut starts: Vec<(usize, SectionLabel, String)> = Vec::new();
    if boundaries.first().is_none_or(|b| b.element_index > 0) {
        starts.push((0, SectionLabel::Other, String::new()));
    }
    starts.extend(
        boundaries
            .into_iter()
            .map(|b| (b.element_index, b.label, b.heading_text)),
    );

    let mut drafts = Vec::with_capacity(starts.len());
    for (n, (start, label, heading_text)) in starts.iter().enumerate() {
        let end = starts.get(n + 1).map_or(elements.len(), |s| s.0);
        let body: Vec<(usize, &LayoutElement)> = (*start..end)
            .map(|i| (i, &elements[i]))
            .filter(|(i, e)| {
                e.kind == ElementKind::TextLine
                    && !heading_indices.contains(i)
                    && Some(*i) != title_idx
                    && !captions.contains(&(e.page, collapse_whitespace(&e.text)))
            })
            .collect();
        let lines: Vec<&LayoutElement> = body.iter().map(|(_, e)| *e).collect();
        // a figure, table or equation between two lines always separates paragraphs
        let forced: Vec<bool> = body
            .iter()
            .enumerate()
            .map(|(k, (i, _))| {
                k > 0 && (body[k - 1].0 + 1..*i).any(|j| elements[j].kind.is_non_textual())
            })
            .collect();
        let blocks = merge_spans(&lines, &forced, cfg)
            .into_iter()
            .map(|(text, first, last)| AnchoredBlock {
                block: Block::Paragraph(Paragraph { text }),
                first: body[first].0,
                last: body[last].0,
            })
            .collect();
        drafts.push(DraftSection {
            label: label.clone(),
            heading_text: heading_text.clone(),
            start: *start,
            blocks,
        });
    }

    let has_text = drafts.iter().any(|d| {
        d.blocks
            .iter()
            .any(|b| matches!(b.block, Block::Paragraph(_)))
    });
    if !has_text {
        return Err(ReconstructError::EmptyDocument);
    }

    let placeholders = place_placeholders(&classified, &mut drafts);
    let sections: Vec<Section> = drafts
        .into_iter()
        .filter(|d| !(d.heading_text.is_empty() && d.blocks.is_empty()))
        .map(DraftSection::finish)
        .collect();

    Ok(ReconstructedDocument {
        source_id: stream.source_id().to_string(),
        title,
        sections,
        stats: DocumentStats {
            pages: stream.page_count(),
            elements_in: stream.len(),
            furniture_removed: elements.iter().filter(|e| e.kind.is_furniture()).count(),
            placeholders_inserted: placeholders,
        },
    })
}

/// Canonical JSON bytes: sorted keys, shortest round-trip floats, trailing newline.
pub fn to_json(doc: &ReconstructedDocument) -> Vec<u8> {
    crate::json::to_canonical_vec(doc).expect("document serialization is infallible")
}

pub fn from_json(bytes: &[u8]) -> Result<ReconstructedDocument, ReconstructError> {
    let doc: ReconstructedDocument = serde_json::from_slice(bytes)
        .map_err(|e| ReconstructError::SchemaViolation(e.to_string()))?;
    doc.validate().map_err(ReconstructError::SchemaViolation)?;
    Ok(doc)
}

/// Flat text form: title, then sections separated by blank lines, each with
/// its heading followed by one line per block.
pub fn render_text(doc: &ReconstructedDocument) -> String {
    let mut out = String::new();
    if !doc.title.is_empty() {
        out.push_str(&doc.title);
        out.push('\n');
    }
    for section in &doc.sections {
        if !out.is_empty() {
            out.push('\n');
        }
        if !section.heading_text.is_empty() {
            out.push_str(&section.heading_text);
            out.push('\n');
        }
        for block in &section.blocks {
            out.push_str(&block.render());
            out.push('\n');
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::layout::BBox;
    use alloc::vec;

    const BODY: f64 = 11.0;
    const PITCH: f64 = 14.0;

    fn body(page: u32, y: f64, x: f64, text: &str) -> LayoutElement {
        LayoutElement::text_line(page, BBox::new(x, y, 520.0, y + BODY), text, BODY, false)
    }

    fn heading(page: u32, y: f64, text: &str) -> LayoutElement {
        LayoutElement::text_line(page, BBox::new(72.0, y, 400.0, y + 14.0), text, 14.0, true)
    }

    fn cfg() -> ReconstructConfig {
        ReconstructConfig::default()
    }

    #[test]
    fn three_headings_over_body_text() {
        let elements = vec![
            heading(1, 100.0, "Abstract"),
            body(1, 130.0, 72.0, "This thesis studies things."),
            body(1, 144.0, 72.0, "It has findings."),
            heading(1, 200.0, "1 Introduction"),
            body(1, 230.0, 72.0, "We begin here."),
            heading(2, 100.0, "References"),
            body(2, 130.0, 72.0, "[1] A. Author. A paper. 2020."),
        ];
        let s = LayoutStream::new("d", 2, elements).unwrap();
        let b = detect_sections(&s, &cfg());
        // hand annotation: elements 0, 3, 5 are headings
        let got: Vec<(usize, SectionLabel)> = b
            .iter()
            .map(|b| (b.element_index, b.label.clone()))
            .collect();
        assert_eq!(
            got,
            vec![
                (0, SectionLabel::Abstract),
                (3, SectionLabel::NumberedSection { path: vec![1] }),
                (5, SectionLabel::References),
            ]
        );
    }

    #[test]
    fn body_font_numeric_line_is_not_a_heading() {
        let elements = vec![
            body(1, 100.0, 72.0, "Prices vary by market."),
            body(1, 114.0, 72.0, "1 apple costs 2 yuan"),
            body(1, 128.0, 72.0, "and so on."),
        ];
        let s = LayoutStream::new("d", 1, elements).unwrap();
        assert!(detect_sections(&s, &cfg()).is_empty());
    }

    #[test]
    fn heading_patterns() {
        assert_eq!(numbered_heading_path("2.3 Methods"), Some(vec![2, 3]));
        assert_eq!(numbered_heading_path("4. Results"), Some(vec![4]));
        assert_eq!(
            numbered_heading_path("1.2.1  Data sources"),
            Some(vec![1, 2, 1])
        );
        assert_eq!(numbered_heading_path("2024 was dry"), None);
        assert_eq!(numbered_heading_path("0 Preface"), None);
        assert_eq!(numbered_heading_path("3"), None);
        assert_eq!(numbered_heading_path("3.a Bad"), None);
        assert_eq!(
            canonical_title("  ABSTRACT ", &cfg()),
            Some(SectionLabel::Abstract)
        );
        assert_eq!(
            canonical_title("Related   Work", &cfg()),
            Some(SectionLabel::Other)
        );
        assert_eq!(
            canonical_title("参考文献", &cfg()),
            Some(SectionLabel::References)
        );
        assert_eq!(
            canonical_title("Appendix B: Survey", &cfg()),
            Some(SectionLabel::Appendix)
        );
        assert_eq!(canonical_title("Appendixes are fun", &cfg()), None);
    }

    #[test]
    fn mid_clause_lines_join() {
        let lines = vec![
            body(1, 100.0, 72.0, "The experiment was carried out over"),
            body(1, 100.0 + PITCH, 72.0, "three consecutive weeks."),
        ];
        let p = merge_paragraphs(&lines, &cfg());
        assert_eq!(
            p,
            vec![Paragraph {
                text: "The experiment was carried out over three consecutive weeks.".into()
            }]
        );
    }

    #[test]
    fn sentence_end_plus_indent_splits() {
        // pitch 14, em 11: indent of 22pt > 1 em, gap 14 < 1.8 * 14
        let lines = vec![
            body(1, 100.0, 72.0, "First paragraph ends here."),
            body(1, 100.0 + PITCH, 94.0, "Second paragraph starts indented."),
            body(1, 100.0 + 2.0 * PITCH, 72.0, "and continues."),
        ];
        let p = merge_paragraphs(&lines, &cfg());
        assert_eq!(p.len(), 2);
        assert_eq!(p[0].text, "First paragraph ends here.");
        assert_eq!(
            p[1].text,
            "Second paragraph starts indented. and continues."
        );
    }

    #[test]
    fn indent_without_sentence_end_does_not_split() {
        let lines = vec![
            body(1, 100.0, 72.0, "A list introduced by a colon:"),
            body(1, 100.0 + PITCH, 94.0, "item continues the sentence"),
        ];
        assert_eq!(merge_paragraphs(&lines, &cfg()).len(), 1);
    }

    #[test]
    fn large_gap_splits() {
        let lines = vec![
            body(1, 100.0, 72.0, "Line one"),
            body(1, 114.0, 72.0, "line two"),
            body(1, 128.0, 72.0, "line three"),
            body(1, 128.0 + 2.0 * PITCH, 72.0, "after a blank line"),
        ];
        let p = merge_paragraphs(&lines, &cfg());
        assert_eq!(p.len(), 2);
        assert_eq!(p[1].text, "after a blank line");
    }

    #[test]
    fn gap_threshold_is_configurable() {
        let lines = vec![
            body(1, 100.0, 72.0, "Line one"),
            body(1, 114.0, 72.0, "line two"),
            body(1, 142.0, 72.0, "line three"),
        ];
        assert_eq!(merge_paragraphs(&lines, &cfg()).len(), 2);
        let loose = ReconstructConfig {
            paragraph_gap_factor: 2.5,
            ..cfg()
        };
        assert_eq!(merge_paragraphs(&lines, &loose).len(), 1);
    }

    #[test]
    fn single_line_is_one_paragraph() {
        let p = merge_paragraphs(&[body(1, 100.0, 72.0, "  Just   one line. ")], &cfg());
        assert_eq!(
            p,
            vec![Paragraph {
                text: "Just one line.".into()
            }]
        );
        assert!(merge_paragraphs(&[], &cfg()).is_empty());
    }

    #[test]
    fn dehyphenates_line_ends() {
        let lines = vec![
            body(1, 100.0, 72.0, "a well-known infor-"),
            body(1, 114.0, 72.0, "mation source and a state-"),
            body(1, 128.0, 72.0, "Of-the-art model"),
        ];
        let p = merge_paragraphs(&lines, &cfg());
        assert_eq!(
            p[0].text,
            "a well-known information source and a state- Of-the-art model"
        );
    }

    #[test]
    fn cjk_terminal_punctuation() {
        let lines = vec![
            body(1, 100.0, 72.0, "第一段结束。"),
            body(1, 114.0, 94.0, "第二段开始"),
        ];
        assert_eq!(merge_paragraphs(&lines, &cfg()).len(), 2);
    }

    fn draft(start: usize, blocks: Vec<(usize, usize, &str)>) -> DraftSection {
        DraftSection {
            label: SectionLabel::Other,
            heading_text: String::new(),
            start,
            blocks: blocks
                .into_iter()
                .map(|(first, last, text)| AnchoredBlock {
                    block: Block::Paragraph(Paragraph { text: text.into() }),
                    first,
                    last,
                })
                .collect(),
        }
    }

    #[test]
    fn figure_between_paragraphs() {
        let elements = vec![
            body(1, 100.0, 72.0, "Before."),
            LayoutElement::non_textual(
                1,
                ElementKind::Figure,
                BBox::new(72.0, 150.0, 400.0, 300.0),
                Some("Fig. 1. Results"),
            ),
            body(1, 320.0, 72.0, "After."),
        ];
        let s = LayoutStream::new("d", 1, elements).unwrap();
        let mut sections = vec![draft(0, vec![(0, 0, "Before."), (2, 2, "After.")])];
        assert_eq!(place_placeholders(&s, &mut sections), 1);
        let blocks: Vec<String> = sections[0]
            .blocks
            .iter()
            .map(|b| b.block.render())
            .collect();
        assert_eq!(blocks, ["Before.", "[FIGURE 1: Fig. 1. Results]", "After."]);
    }

    #[test]
    fn no_non_textual_elements_leaves_sections_unchanged() {
        let s = LayoutStream::new("d", 1, vec![body(1, 100.0, 72.0, "Only text.")]).unwrap();
        let mut sections = vec![draft(0, vec![(0, 0, "Only text.")])];
        let before = sections.clone();
        assert_eq!(place_placeholders(&s, &mut sections), 0);
        assert_eq!(sections, before);
    }

    #[test]
    fn two_tables_numbered_in_reading_order() {
        let elements = vec![
            LayoutElement::non_textual(
                1,
                ElementKind::Table,
                BBox::new(72.0, 400.0, 500.0, 500.0),
                Some("Table 2. Later"),
            ),
            body(1, 100.0, 72.0, "Intro."),
            LayoutElement::non_textual(
                1,
                ElementKind::Table,
                BBox::new(72.0, 200.0, 500.0, 300.0),
                Some("Table 1. Earlier"),
            ),
            LayoutElement::non_textual(
                1,
                ElementKind::Equation,
                BBox::new(72.0, 600.0, 500.0, 620.0),
                None,
            ),
        ];
        let s = LayoutStream::new("d", 1, elements).unwrap();
        let mut sections = vec![draft(0, vec![(0, 0, "Intro.")])];
        place_placeholders(&s, &mut sections);
        let blocks: Vec<String> = sections[0]
            .blocks
            .iter()
            .map(|b| b.block.render())
            .collect();
        assert_eq!(
            blocks,
            [
                "Intro.",
                "[TABLE 1: Table 1. Earlier]",
                "[TABLE 2: Table 2. Later]",
                "[EQUATION 1]"
            ]
        );
    }

    fn sample_stream() -> LayoutStream {
        let mut elements = vec![
            LayoutElement::text_line(
                1,
                BBox::new(100.0, 80.0, 500.0, 104.0),
                "A Study of Things",
                24.0,
                true,
            ),
            heading(1, 200.0, "Abstract"),
            body(1, 230.0, 72.0, "We study things."),
            heading(2, 60.0, "1 Introduction"),
            body(2, 90.0, 72.0, "Things are everywhere and"),
            body(2, 104.0, 72.0, "deserve attention."),
            LayoutElement::non_textual(
                2,
                ElementKind::Figure,
                BBox::new(72.0, 130.0, 400.0, 300.0),
                Some("Fig. 1. Things"),
            ),
            body(2, 310.0, 72.0, "Fig. 1. Things"),
            body(2, 330.0, 94.0, "As the figure shows, things vary."),
            heading(3, 60.0, "References"),
            body(3, 90.0, 72.0, "[1] Someone. On things. 2021."),
        ];
        for page in 1..=3 {
            elements.push(body(page, 780.0, 290.0, &alloc::format!("{page}")));
            elements.push(body(page, 30.0, 200.0, "Example University Thesis"));
        }
        LayoutStream::new("sample", 3, elements).unwrap()
    }

    #[test]
    fn reconstruct_sample() {
        let doc = reconstruct(&sample_stream()).unwrap();
        assert_eq!(doc.title, "A Study of Things");
        let labels: Vec<String> = doc.sections.iter().map(|s| s.label.to_string()).collect();
        assert_eq!(labels, ["abstract", "numbered-section[1]", "references"]);
        assert_eq!(doc.stats.furniture_removed, 6);
        assert_eq!(doc.stats.placeholders_inserted, 1);
        assert_eq!(doc.stats.elements_in, 17);
        assert_eq!(doc.placeholder_count(), 1);
        let text = render_text(&doc);
        assert!(!text.contains("Example University Thesis"));
        assert_eq!(
            text.matches("Fig. 1. Things").count(),
            1,
            "caption duplicated:\n{text}"
        );
        assert!(text.contains("Things are everywhere and deserve attention.\n[FIGURE 1: Fig. 1. Things]\nAs the figure shows"));
        doc.validate().unwrap();
    }

    #[test]
    fn reference_entries_are_separate_paragraphs() {
        let lines = [
            body(1, 100.0, 72.0, "[1] A. Author. First paper. 2019."),
            body(1, 114.0, 72.0, "[2] B. Author. Second paper with a"),
            body(1, 128.0, 72.0, "[3]-style title that wraps. 2020."),
        ];
        let got: Vec<String> = merge_paragraphs(&lines, &cfg())
            .into_iter()
            .map(|p| p.text)
            .collect();
        assert_eq!(
            got,
            [
                "[1] A. Author. First paper. 2019.",
                "[2] B. Author. Second paper with a [3]-style title that wraps. 2020."
            ]
        );
        assert!(starts_reference_entry("  [12] X"));
        assert!(!starts_reference_entry("[a] X"));
        assert!(!starts_reference_entry("[] X"));
    }

    #[test]
    fn figure_between_pages_splits_paragraph() {
        // paragraph ends at the bottom of page 1, figure opens page 2, text resumes below it
        let elements = vec![
            heading(1, 100.0, "1 Method"),
            body(1, 130.0, 72.0, "The first paragraph runs to the"),
            body(1, 144.0, 72.0, "end of the page"),
            LayoutElement::non_textual(
                2,
                ElementKind::Figure,
                BBox::new(72.0, 80.0, 400.0, 200.0),
                None,
            ),
            body(2, 220.0, 72.0, "and this is a new paragraph."),
        ];
        let doc = reconstruct(&LayoutStream::new("d", 2, elements).unwrap()).unwrap();
        let blocks: Vec<String> = doc.sections[0].blocks.iter().map(Block::render).collect();
        assert_eq!(
            blocks,
            [
                "The first paragraph runs to the end of the page",
                "[FIGURE 1]",
                "and this is a new paragraph."
            ]
        );
    }

    #[test]
    fn only_page_numbers_is_empty_document() {
        let elements = (1..=3)
            .map(|p| body(p, 780.0, 290.0, &alloc::format!("{p}")))
            .collect();
        let s = LayoutStream::new("d", 3, elements).unwrap();
        assert_eq!(reconstruct(&s), Err(ReconstructError::EmptyDocument));
    }

    #[test]
    fn json_round_trip_and_schema_errors() {
        let doc = reconstruct(&sample_stream()).unwrap();
        let bytes = to_json(&doc);
        assert_eq!(from_json(&bytes).unwrap(), doc);
        assert_eq!(to_json(&from_json(&bytes).unwrap()), bytes);
        let truncated = &bytes[..bytes.len() / 2];
        assert!(matches!(
            from_json(truncated),
            Err(ReconstructError::SchemaViolation(_))
        ));
        let mut broken = doc.clone();
        broken.sections[0].blocks.push(Block::Paragraph(Paragraph {
            text: "two\nlines".into(),
        }));
        assert!(matches!(
            from_json(&to_json(&broken)),
            Err(ReconstructError::SchemaViolation(_))
        ));
    }
}
