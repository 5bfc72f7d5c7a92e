//! Layout fixtures against their checked-in reconstructions.
//!
//! Set `PEMUTA_BLESS=1` to rewrite the `.doc.json` goldens.

use std::path::{Path, PathBuf};

use pemuta_core::layout::{classify_furniture, parse_layout_stream, ElementKind};
use pemuta_core::reconstruct::{
    self, Block, DocumentStats, Paragraph, PlaceholderKind, ReconstructedDocument, Section,
    SectionLabel,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn fixture_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures/layout")
}

fn fixtures() -> Vec<(String, PathBuf)> {
    let mut out: Vec<_> = std::fs::read_dir(fixture_dir())
        .unwrap()
        .filter_map(|e| {
            let path = e.unwrap().path();
            let name = path
                .file_name()?
                .to_str()?
                .strip_suffix(".layout.jsonl")?
                .to_string();
            Some((name, path))
        })
        .collect();
    out.sort();
    out
}

fn section_text(doc: &ReconstructedDocument) -> String {
    let mut text = String::new();
    for s in &doc.sections {
        text.push_str(&s.heading_text);
        text.push('\n');
        for b in &s.blocks {
            text.push_str(&b.render());
            text.push('\n');
        }
    }
    text
}

#[test]
fn goldens_match() {
    let bless = std::env::var_os("PEMUTA_BLESS").is_some();
    let all = fixtures();
    assert!(all.len() >= 5, "expected at least five layout fixtures");
    for (id, path) in all {
        let raw = std::fs::read_to_string(&path).unwrap();
        let stream = classify_furniture(&parse_layout_stream(&raw, &id).unwrap());
        let doc = reconstruct::reconstruct(&stream).unwrap();
        let bytes = reconstruct::to_json(&doc);
        let golden = fixture_dir().join(format!("{id}.doc.json"));
        if bless {
            std::fs::write(&golden, &bytes).unwrap();
            continue;
        }
        let expected = std::fs::read(&golden).unwrap();
        assert!(
            bytes == expected,
            "{id}: reconstruction differs from {}",
            golden.display()
        );

        let furniture: Vec<_> = stream
            .elements()
            .iter()
            .filter(|e| e.kind.is_furniture())
            .collect();
        assert!(!furniture.is_empty(), "{id}: fixture has no furniture");
        assert_eq!(doc.stats.furniture_removed, furniture.len(), "{id}");
        let body = section_text(&doc);
        for e in &furniture {
            match e.kind {
                ElementKind::Header | ElementKind::Footer => {
                    assert!(
                        !body.contains(e.text.trim()),
                        "{id}: furniture {:?} leaked",
                        e.text
                    )
                }
                _ => assert!(
                    doc.paragraphs().all(|p| p.text != e.text.trim()),
                    "{id}: page number leaked"
                ),
            }
        }

        let non_textual = stream
            .elements()
            .iter()
            .filter(|e| e.kind.is_non_textual())
            .count();
        assert_eq!(doc.placeholder_count(), non_textual, "{id}");
        assert_eq!(doc.stats.placeholders_inserted, non_textual, "{id}");
        doc.validate().unwrap();
    }
}

#[test]
fn goldens_reparse_identically() {
    for (id, _) in fixtures() {
        let bytes = std::fs::read(fixture_dir().join(format!("{id}.doc.json"))).unwrap();
        let doc = reconstruct::from_json(&bytes).unwrap();
        assert_eq!(reconstruct::to_json(&doc), bytes, "{id}");
    }
}

const WORDS: &[&str] = &[
    "river",
    "gauge",
    "sensor",
    "node",
    "batterie",
    "naïve",
    "摘要",
    "résumé",
    "\"quoted\"",
    "back\\slash",
    "tab\there",
    "0.5",
    "-3",
    "{brace}",
    "[1]",
    "ü",
    "😀",
];

fn random_text(rng: &mut ChaCha8Rng) -> String {
    let n = rng.random_range(1..12);
    (0..n)
        .map(|_| WORDS[rng.random_range(0..WORDS.len())])
        .collect::<Vec<_>>()
        .join(" ")
}

fn random_document(rng: &mut ChaCha8Rng, id: usize) -> ReconstructedDocument {
    let mut next_ref = [0u32; 3];
    let kinds = [
        PlaceholderKind::Figure,
        PlaceholderKind::Table,
        PlaceholderKind::Equation,
    ];
    let sections = (0..rng.random_range(0..6))
        .map(|_| {
            let label = match rng.random_range(0..7) {
                0 => SectionLabel::Abstract,
                1 => SectionLabel::Toc,
                2 => SectionLabel::NumberedSection {
                    path: (0..rng.random_range(1..4))
                        .map(|_| rng.random_range(1..20))
                        .collect(),
                },
                3 => SectionLabel::References,
                4 => SectionLabel::Appendix,
                5 => SectionLabel::Acknowledgments,
                _ => SectionLabel::Other,
            };
            let blocks = (0..rng.random_range(0..8))
                .map(|_| {
                    if rng.random_bool(0.7) {
                        Block::Paragraph(Paragraph {
                            text: random_text(rng),
                        })
                    } else {
                        let k = rng.random_range(0..3);
                        next_ref[k] += rng.random_range(1..3);
                        let caption = rng.random_bool(0.5).then(|| random_text(rng));
                        Block::Placeholder {
                            kind: kinds[k],
                            ref_id: next_ref[k],
                            caption,
                        }
                    }
                })
                .collect();
            let heading_text = if rng.random_bool(0.8) {
                random_text(rng)
            } else {
                String::new()
            };
            Section {
                label,
                heading_text,
                blocks,
            }
        })
        .collect();
    ReconstructedDocument {
        source_id: format!("rand-{id}"),
        title: if rng.random_bool(0.9) {
            random_text(rng)
        } else {
            String::new()
        },
        sections,
        stats: DocumentStats {
            pages: rng.random_range(1..400),
            elements_in: rng.random_range(0..10_000),
            furniture_removed: rng.random_range(0..500),
            placeholders_inserted: rng.random_range(0..50),
        },
    }
}

#[test]
fn random_documents_round_trip() {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    for i in 0..1000 {
        let doc = random_document(&mut rng, i);
        doc.validate().unwrap();
        let bytes = reconstruct::to_json(&doc);
        let back = reconstruct::from_json(&bytes).unwrap();
        assert_eq!(back, doc);
        assert_eq!(reconstruct::to_json(&back), bytes);
    }
}

#[test]
fn out_of_order_refs_rejected() {
    let doc = ReconstructedDocument {
        source_id: "x".into(),
        title: String::new(),
        sections: vec![Section {
            label: SectionLabel::Other,
            heading_text: String::new(),
            blocks: vec![
                Block::Placeholder {
                    kind: PlaceholderKind::Table,
                    ref_id: 2,
                    caption: None,
                },
                Block::Placeholder {
                    kind: PlaceholderKind::Table,
                    ref_id: 1,
                    caption: None,
                },
            ],
        }],
        stats: DocumentStats::default(),
    };
    let err = reconstruct::from_json(&reconstruct::to_json(&doc)).unwrap_err();
    assert_eq!(err.name(), "SchemaViolation");
}
