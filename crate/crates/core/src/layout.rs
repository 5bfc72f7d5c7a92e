//! Layout interchange format and page-furniture classification.
//!
//! A layout stream is the positioned output of a PDF extractor: one record per
//! text line, figure, table or equation. Coordinates are PDF points with the
//! origin at the top-left of the page and y growing downward.
//!
//! On disk a stream is a `.layout.jsonl` file: UTF-8, one flat JSON object per
//! line with keys `page`, `kind`, `bbox`, `text`, `font_size`, `font_bold` and
//! `caption`. Absent optional keys mean "not present". Blank lines and lines
//! starting with `#` are ignored so extractors can leave a header comment.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::cmp::Ordering;
use core::fmt;

use serde::{Deserialize, Serialize};

/// Fraction of pages a repeated line must appear on to count as furniture.
pub const FURNITURE_PAGE_FRACTION: f64 = 0.6;
/// Maximum distance, in points, between bbox centers of repeated furniture.
pub const FURNITURE_CENTER_TOLERANCE: f64 = 5.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ElementKind {
    TextLine,
    Figure,
    Table,
    Equation,
    Header,
    Footer,
    PageNumber,
    Unknown,
}

impl ElementKind {
    pub const fn as_str(self) -> &'static str {
        match self {
            ElementKind::TextLine => "text-line",
            ElementKind::Figure => "figure",
            ElementKind::Table => "table",
            ElementKind::Equation => "equation",
            ElementKind::Header => "header",
            ElementKind::Footer => "footer",
            ElementKind::PageNumber => "page-number",
            ElementKind::Unknown => "unknown",
        }
    }

    pub fn parse(s: &str) -> Option<ElementKind> {
        Some(match s {
            "text-line" => ElementKind::TextLine,
            "figure" => ElementKind::Figure,
            "table" => ElementKind::Table,
            "equation" => ElementKind::Equation,
            "header" => ElementKind::Header,
            "footer" => ElementKind::Footer,
            "page-number" => ElementKind::PageNumber,
            "unknown" => ElementKind::Unknown,
            _ => return None,
        })
    }

    pub const fn is_furniture(self) -> bool {
        matches!(
            self,
            ElementKind::Header | ElementKind::Footer | ElementKind::PageNumber
        )
    }

    /// Figures, tables and equations: replaced by placeholders downstream.
    pub const fn is_non_textual(self) -> bool {
        matches!(
            self,
            ElementKind::Figure | ElementKind::Table | ElementKind::Equation
        )
    }
}

impl fmt::Display for ElementKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Axis-aligned box `(x0, y0, x1, y1)`, top-left origin.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 4]", into = "[f64; 4]")]
pub struct BBox {
    pub x0: f64,
    pub y0: f64,
    pub x1: f64,
    pub y1: f64,
}

impl BBox {
    pub const fn new(x0: f64, y0: f64, x1: f64, y1: f64) -> Self {
        BBox { x0, y0, x1, y1 }
    }

    pub fn is_valid(&self) -> bool {
        [self.x0, self.y0, self.x1, self.y1]
            .iter()
            .all(|v| v.is_finite())
            && self.x0 < self.x1
            && self.y0 < self.y1
    }

    pub fn center(&self) -> (f64, f64) {
        ((self.x0 + self.x1) / 2.0, (self.y0 + self.y1) / 2.0)
    }
}

impl From<[f64; 4]> for BBox {
    fn from([x0, y0, x1, y1]: [f64; 4]) -> Self {
        BBox { x0, y0, x1, y1 }
    }
}

impl From<BBox> for [f64; 4] {
    fn from(b: BBox) -> Self {
        [b.x0, b.y0, b.x1, b.y1]
    }
}

/// One positioned fragment of a page.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayoutElement {
    pub page: u32,
    pub kind: ElementKind,
    pub bbox: BBox,
    #[serde(default)]
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub font_size: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub font_bold: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub caption: Option<String>,
}

impl LayoutElement {
    pub fn text_line(
        page: u32,
        bbox: BBox,
        text: impl Into<String>,
        font_size: f64,
        bold: bool,
    ) -> Self {
        LayoutElement {
            page,
            kind: ElementKind::TextLine,
            bbox,
            text: text.into(),
            font_size: Some(font_size),
            font_bold: Some(bold),
            caption: None,
        }
    }

    /// A figure, table or equation with an optional caption.
    pub fn non_textual(page: u32, kind: ElementKind, bbox: BBox, caption: Option<&str>) -> Self {
        LayoutElement {
            page,
            kind,
            bbox,
            text: String::new(),
            font_size: None,
            font_bold: None,
            caption: caption.map(ToString::to_string),
        }
    }

    pub fn is_bold(&self) -> bool {
        self.font_bold.unwrap_or(false)
    }

    /// Checks the per-element invariants, returning the violated rule.
    pub fn validate(&self) -> Result<(), &'static str> {
        if self.page == 0 {
            return Err("page must be >= 1");
        }
        if !self.bbox.is_valid() {
            return Err("bbox must satisfy x0 < x1 and y0 < y1");
        }
        if self.kind == ElementKind::TextLine {
            if self.text.trim().is_empty() {
                return Err("text-line requires non-empty text");
            }
            match self.font_size {
                Some(s) if s.is_finite() && s > 0.0 => {}
                _ => return Err("text-line requires font_size > 0"),
            }
        }
        Ok(())
    }

    fn reading_order(&self, other: &LayoutElement) -> Ordering {
        self.page
            .cmp(&other.page)
            .then(self.bbox.y0.total_cmp(&other.bbox.y0))
            .then(self.bbox.x0.total_cmp(&other.bbox.x0))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum LayoutError {
    #[error("malformed record on line {line}: {reason}")]
    MalformedRecord { line: usize, reason: String },
    #[error("layout stream contains no elements")]
    EmptyStream,
    #[error("element {index} is on page {page}, beyond page_count {page_count}")]
    PageOutOfRange {
        index: usize,
        page: u32,
        page_count: u32,
    },
}

impl LayoutError {
    pub fn name(&self) -> &'static str {
        match self {
            LayoutError::MalformedRecord { .. } => "MalformedRecord",
            LayoutError::EmptyStream => "EmptyStream",
            LayoutError::PageOutOfRange { .. } => "PageOutOfRange",
        }
    }
}

/// A validated, reading-ordered sequence of layout elements for one document.
#[derive(Debug, Clone, PartialEq)]
pub struct LayoutStream {
    source_id: String,
    page_count: u32,
    elements: Vec<LayoutElement>,
}

impl LayoutStream {
    /// Validates every element and sorts page-major, then by `y0`, then by `x0`.
    /// The sort is stable, so exact ties keep their input order.
    pub fn new(
        source_id: impl Into<String>,
        page_count: u32,
        mut elements: Vec<LayoutElement>,
    ) -> Result<Self, LayoutError> {
        if elements.is_empty() {
            return Err(LayoutError::EmptyStream);
        }
        for (i, e) in elements.iter().enumerate() {
            e.validate()
                .map_err(|reason| LayoutError::MalformedRecord {
                    line: i + 1,
                    reason: reason.to_string(),
                })?;
            if e.page > page_count {
                return Err(LayoutError::PageOutOfRange {
                    index: i,
                    page: e.page,
                    page_count,
                });
            }
        }
        elements.sort_by(LayoutElement::reading_order);
        Ok(LayoutStream {
            source_id: source_id.into(),
            page_count,
            elements,
        })
    }

    pub fn source_id(&self) -> &str {
        &self.source_id
    }

    pub fn page_count(&self) -> u32 {
        self.page_count
    }

    pub fn elements(&self) -> &[LayoutElement] {
        &self.elements
    }

    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }

    /// Serializes back to the interchange format, one compact record per line.
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for e in &self.elements {
            // serialization of plain data into a String cannot fail
            let line = serde_json::to_string(&serde_json::to_value(e).expect("element to value"))
                .expect("value to string");
            out.push_str(&line);
            out.push('\n');
        }
        out
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRecord {
    page: i64,
    kind: String,
    bbox: Vec<f64>,
    #[serde(default)]
    text: Option<String>,
    #[serde(default)]
    font_size: Option<f64>,
    #[serde(default)]
    font_bold: Option<bool>,
    #[serde(default)]
    caption: Option<String>,
}

fn parse_record(line_no: usize, line: &str) -> Result<LayoutElement, LayoutError> {
    let malformed = |reason: String| LayoutError::MalformedRecord {
        line: line_no,
        reason,
    };
    let raw: RawRecord = serde_json::from_str(line).map_err(|e| malformed(e.to_string()))?;
    if raw.page < 1 || raw.page > i64::from(u32::MAX) {
        return Err(malformed(alloc::format!(
            "page {} is not a positive page ordinal",
            raw.page
        )));
    }
    let kind = ElementKind::parse(&raw.kind)
        .ok_or_else(|| malformed(alloc::format!("unknown kind {:?}", raw.kind)))?;
    let bbox: [f64; 4] = raw.bbox.as_slice().try_into().map_err(|_| {
        malformed(alloc::format!(
            "bbox has {} values, expected 4",
            raw.bbox.len()
        ))
    })?;
    let element = LayoutElement {
        page: raw.page as u32,
        kind,
        bbox: BBox::from(bbox),
        text: raw.text.unwrap_or_default(),
        font_size: raw.font_size,
        font_bold: raw.font_bold,
        caption: raw.caption,
    };
    element.validate().map_err(|r| malformed(r.to_string()))?;
    Ok(element)
}

/// Parses a `.layout.jsonl` payload into a normalized stream.
///
/// `page_count` is the highest page ordinal seen.
pub fn parse_layout_stream(raw: &str, source_id: &str) -> Result<LayoutStream, LayoutError> {
    let mut elements = Vec::new();
    for (i, line) in raw.lines().enumerate() {
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        elements.push(parse_record(i + 1, trimmed)?);
    }
    let page_count = elements
        .iter()
        .map(|e| e.page)
        .max()
        .ok_or(LayoutError::EmptyStream)?;
    LayoutStream::new(source_id, page_count, elements)
}

/// Collapses whitespace and maps every decimal digit to `#`, so running
/// headers such as "Chapter 1" / "Chapter 2" share a key.
pub fn furniture_key(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    for word in text.split_whitespace() {
        if !out.is_empty() {
            out.push(' ');
        }
        out.extend(
            word.chars()
                .map(|c| if is_decimal_digit(c) { '#' } else { c }),
        );
    }
    out
}

fn is_decimal_digit(c: char) -> bool {
    c.is_ascii_digit() || ('０'..='９').contains(&c)
}

fn roman_value(s: &str) -> Option<u32> {
    let upper = s.chars().all(|c| c.is_ascii_uppercase());
    let lower = s.chars().all(|c| c.is_ascii_lowercase());
    if s.is_empty() || !(upper || lower) {
        return None;
    }
    let digit = |c: char| match c.to_ascii_uppercase() {
        'I' => Some(1),
        'V' => Some(5),
        'X' => Some(10),
        'L' => Some(50),
        'C' => Some(100),
        'D' => Some(500),
        'M' => Some(1000),
        _ => None,
    };
    let values: Vec<u32> = s.chars().map(digit).collect::<Option<_>>()?;
    let mut total = 0i64;
    for (i, v) in values.iter().enumerate() {
        match values.get(i + 1) {
            Some(next) if next > v => total -= i64::from(*v),
            _ => total += i64::from(*v),
        }
    }
    let total = u32::try_from(total).ok()?;
    // only canonical spellings count, which rules out words like "dim" or "mid"
    (total > 0 && to_roman(total).eq_ignore_ascii_case(s)).then_some(total)
}

fn to_roman(mut n: u32) -> String {
    const TABLE: [(u32, &str); 13] = [
        (1000, "M"),
        (900, "CM"),
        (500, "D"),
        (400, "CD"),
        (100, "C"),
        (90, "XC"),
        (50, "L"),
        (40, "XL"),
        (10, "X"),
        (9, "IX"),
        (5, "V"),
        (4, "IV"),
        (1, "I"),
    ];
    let mut out = String::new();
    for (value, glyph) in TABLE {
        while n >= value {
            out.push_str(glyph);
            n -= value;
        }
    }
    out
}

/// True for a bare page label: `12`, `xiv`, or `3 / 40`.
pub fn is_page_number(text: &str) -> bool {
    let t = text.trim();
    let all_digits = |s: &str| !s.is_empty() && s.len() <= 5 && s.chars().all(is_decimal_digit);
    if all_digits(t) {
        return true;
    }
    if matches!(roman_value(t), Some(v) if v <= 100) {
        return true;
    }
    match t.split_once('/') {
        Some((a, b)) => all_digits(a.trim()) && all_digits(b.trim()),
        None => false,
    }
}

/// Re-kinds page furniture: page-number patterns, and text lines repeated at
/// the same position on at least 60% of pages. Repeated lines above the
/// vertical midpoint of the content area become headers, the rest footers.
///
/// Never adds, removes or reorders elements, and is idempotent.
pub fn classify_furniture(stream: &LayoutStream) -> LayoutStream {
    let elements = &stream.elements;
    let is_textual = |e: &LayoutElement| {
        matches!(
            e.kind,
            ElementKind::TextLine
                | ElementKind::Header
                | ElementKind::Footer
                | ElementKind::PageNumber
        ) && !e.text.trim().is_empty()
    };

    let mut groups: BTreeMap<String, Vec<usize>> = BTreeMap::new();
    for (i, e) in elements.iter().enumerate().filter(|(_, e)| is_textual(e)) {
        groups.entry(furniture_key(&e.text)).or_default().push(i);
    }

    let (top, bottom) = elements
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(t, b), e| {
            (t.min(e.bbox.y0), b.max(e.bbox.y1))
        });
    let midline = (top + bottom) / 2.0;
    let page_count = stream.page_count as usize;

    let mut repeated = BTreeSet::new();
    if page_count >= 2 {
        for members in groups.values().filter(|m| m.len() >= 2) {
            for &i in members {
                let (cx, cy) = elements[i].bbox.center();
                let pages: BTreeSet<u32> = members
                    .iter()
                    .filter(|&&j| {
                        let (ox, oy) = elements[j].bbox.center();
                        libm::fabs(ox - cx) <= FURNITURE_CENTER_TOLERANCE
                            && libm::fabs(oy - cy) <= FURNITURE_CENTER_TOLERANCE
                    })
                    .map(|&j| elements[j].page)
                    .collect();
                if pages.len() >= 2
                    && pages.len() as f64 >= FURNITURE_PAGE_FRACTION * page_count as f64
                {
                    repeated.insert(i);
                }
            }
        }
    }

    let relabeled = elements
        .iter()
        .enumerate()
        .map(|(i, e)| {
            let mut e = e.clone();
            if e.kind == ElementKind::TextLine {
                if is_page_number(&e.text) {
                    e.kind = ElementKind::PageNumber;
                } else if repeated.contains(&i) {
                    e.kind = if e.bbox.center().1 < midline {
                        ElementKind::Header
                    } else {
                        ElementKind::Footer
                    };
                }
            }
            e
        })
        .collect();

    LayoutStream {
        source_id: stream.source_id.clone(),
        page_count: stream.page_count,
        elements: relabeled,
    }
}
