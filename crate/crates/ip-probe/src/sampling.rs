//! Indirect-intervention sample generation: draw inputs from one
//! background's text pool, style-transfer them to the other background
//! while preserving semantics, and assemble paired-input skeletons
//! awaiting model responses.
//!
//! The bundled transfer is deterministic marker substitution over a
//! two-sided lexicon. LLM-based rewriting plugs in through the same
//! [`StyleTransfer`] trait but lives outside this crate.

use std::collections::BTreeSet;
use std::io::BufRead;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::core::{PairedObservation, ValidationReport};

pub use crate::core::validate_pairing;

#[derive(Debug, Error)]
pub enum SamplingError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("lexicon error: {0}")]
    Lexicon(String),
    #[error("lexicon parse error at line {line}: {message}")]
    LexiconParse { line: usize, message: String },
    #[error("pool parse error at line {line}: {message}")]
    PoolParse { line: usize, message: String },
    #[error("duplicate semantic_id `{0}` in source pool")]
    DuplicateSemanticId(String),
    #[error("pool item `{id}` carries background `{found}`, expected `{expected}`")]
    PoolBackgroundMismatch { id: String, found: String, expected: String },
    #[error("style transfer failed for {} of {total} items", failures.len())]
    TransferFailure {
        failures: Vec<FailedTransfer>,
        /// Skeletons for the items that did succeed, so the caller can
        /// choose between dropping the failures and aborting the run.
        completed: Vec<PairSkeleton>,
        total: usize,
    },
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

/// One item the style transformer could not convert.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FailedTransfer {
    pub semantic_id: String,
    pub reason: String,
}

/// A finite corpus of inputs that all carry the same background.
#[derive(Debug, Clone)]
pub struct SourcePool {
    background: String,
    items: Vec<PoolItem>,
}

/// One line of a source-pool file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PoolItem {
    pub semantic_id: String,
    pub background: String,
    pub input_text: String,
    /// Gold answer for rating hooks (e.g. the correct choice option).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gold: Option<String>,
}

impl SourcePool {
    pub fn new(background: impl Into<String>, items: Vec<PoolItem>) -> Result<Self, SamplingError> {
        let background = background.into();
        let mut seen = BTreeSet::new();
        for item in &items {
            if item.semantic_id.is_empty() || item.input_text.is_empty() {
                return Err(SamplingError::Config(format!(
                    "pool item `{}` has an empty semantic_id or input_text",
                    item.semantic_id
                )));
            }
            if item.background != background {
                return Err(SamplingError::PoolBackgroundMismatch {
                    id: item.semantic_id.clone(),
                    found: item.background.clone(),
                    expected: background.clone(),
                });
            }
            if !seen.insert(item.semantic_id.clone()) {
                return Err(SamplingError::DuplicateSemanticId(item.semantic_id.clone()));
            }
        }
        Ok(Self { background, items })
    }

    /// Parse a JSONL pool file; the pool background is taken from the
    /// first item and every other item must match it.
    pub fn from_jsonl_reader(reader: impl BufRead) -> Result<Self, SamplingError> {
        let mut items = Vec::new();
        for (idx, line) in reader.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let item: PoolItem = serde_json::from_str(&line)
                .map_err(|e| SamplingError::PoolParse { line: idx + 1, message: e.to_string() })?;
            items.push(item);
        }
        let background = items
            .first()
            .map(|i| i.background.clone())
            .ok_or_else(|| SamplingError::Config("source pool is empty".to_string()))?;
        Self::new(background, items)
    }

    pub fn from_jsonl_path(path: &Path) -> Result<Self, SamplingError> {
        let file = std::fs::File::open(path)?;
        Self::from_jsonl_reader(std::io::BufReader::new(file))
    }

    pub fn background(&self) -> &str {
        &self.background
    }

    pub fn items(&self) -> &[PoolItem] {
        &self.items
    }

    /// Keep only the items at the given indices, preserving pool order.
    pub fn retain_indices(&self, indices: &[usize]) -> Self {
        let keep: BTreeSet<usize> = indices.iter().copied().collect();
        Self {
            background: self.background.clone(),
            items: self
                .items
                .iter()
                .enumerate()
                .filter(|(i, _)| keep.contains(i))
                .map(|(_, item)| item.clone())
                .collect(),
        }
    }
}

/// Marker pairs mapping one background's vocabulary onto the other's.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MarkerLexicon {
    side_a: String,
    side_b: String,
    entries: Vec<LexiconEntry>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LexiconEntry {
    pub form_a: String,
    pub form_b: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TransferDirection {
    AToB,
    BToA,
}

impl MarkerLexicon {
    /// Validate and build a lexicon. Matching downstream is
    /// case-insensitive, so duplicate forms within a side and forms shared
    /// across sides are rejected up front to keep substitution unambiguous.
    pub fn new(
        side_a: impl Into<String>,
        side_b: impl Into<String>,
        entries: Vec<LexiconEntry>,
    ) -> Result<Self, SamplingError> {
        let side_a = side_a.into();
        let side_b = side_b.into();
        if side_a == side_b {
            return Err(SamplingError::Lexicon("sides must be distinct backgrounds".into()));
        }
        if entries.is_empty() {
            return Err(SamplingError::Lexicon("lexicon has no entries".into()));
        }
        let mut a_forms = BTreeSet::new();
        let mut b_forms = BTreeSet::new();
        for entry in &entries {
            let fa = entry.form_a.trim().to_lowercase();
            let fb = entry.form_b.trim().to_lowercase();
            if fa.is_empty() || fb.is_empty() {
                return Err(SamplingError::Lexicon("empty marker form".into()));
            }
            if !a_forms.insert(fa.clone()) {
                return Err(SamplingError::Lexicon(format!("duplicate form `{fa}` on side a")));
            }
            if !b_forms.insert(fb.clone()) {
                return Err(SamplingError::Lexicon(format!("duplicate form `{fb}` on side b")));
            }
        }
        if let Some(shared) = a_forms.intersection(&b_forms).next() {
            return Err(SamplingError::Lexicon(format!("form `{shared}` appears on both sides")));
        }
        Ok(Self { side_a, side_b, entries })
    }

    /// Parse a two-column TSV (`form_a<TAB>form_b`); `#` lines are comments.
    pub fn from_tsv_reader(
        side_a: impl Into<String>,
        side_b: impl Into<String>,
        reader: impl BufRead,
    ) -> Result<Self, SamplingError> {
        let mut entries = Vec::new();
        for (idx, line) in reader.lines().enumerate() {
            let line = line?;
            let trimmed = line.trim_end_matches(['\r', '\n']);
            if trimmed.trim().is_empty() || trimmed.trim_start().starts_with('#') {
                continue;
            }
            let mut cols = trimmed.split('\t');
            let (form_a, form_b) = match (cols.next(), cols.next(), cols.next()) {
                (Some(a), Some(b), None) => (a.trim(), b.trim()),
                _ => {
                    return Err(SamplingError::LexiconParse {
                        line: idx + 1,
                        message: "expected exactly two tab-separated columns".into(),
                    })
                }
            };
            entries.push(LexiconEntry { form_a: form_a.to_string(), form_b: form_b.to_string() });
        }
        Self::new(side_a, side_b, entries)
    }

    pub fn from_tsv_path(
        side_a: impl Into<String>,
        side_b: impl Into<String>,
        path: &Path,
    ) -> Result<Self, SamplingError> {
        let file = std::fs::File::open(path)?;
        Self::from_tsv_reader(side_a, side_b, std::io::BufReader::new(file))
    }

    pub fn side_a(&self) -> &str {
        &self.side_a
    }

    pub fn side_b(&self) -> &str {
        &self.side_b
    }

    pub fn entries(&self) -> &[LexiconEntry] {
        &self.entries
    }

    /// (source form, replacement form) pairs for a direction, longest
    /// source first so overlapping entries resolve to the longest match.
    fn oriented(&self, direction: TransferDirection) -> Vec<(&str, &str)> {
        let mut pairs: Vec<(&str, &str)> = self
            .entries
            .iter()
            .map(|e| match direction {
                TransferDirection::AToB => (e.form_a.as_str(), e.form_b.as_str()),
                TransferDirection::BToA => (e.form_b.as_str(), e.form_a.as_str()),
            })
            .collect();
        pairs.sort_by(|a, b| b.0.chars().count().cmp(&a.0.chars().count()).then(a.0.cmp(b.0)));
        pairs
    }
}

/// Audit trail for one style-transfer run.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TransferRecord {
    pub original: String,
    pub transferred: String,
    pub substitutions: Vec<Substitution>,
}

/// One replacement: `from` starts at byte `position` of the original text
/// and was rewritten to `to`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Substitution {
    pub position: usize,
    pub from: String,
    pub to: String,
}

impl TransferRecord {
    /// Re-derive the transferred text from the original plus the recorded
    /// substitutions. Always equal to `self.transferred`.
    pub fn replay(&self) -> String {
        let mut out = String::with_capacity(self.transferred.len());
        let mut cursor = 0;
        for sub in &self.substitutions {
            out.push_str(&self.original[cursor..sub.position]);
            out.push_str(&sub.to);
            cursor = sub.position + sub.from.len();
        }
        out.push_str(&self.original[cursor..]);
        out
    }
}

fn is_word_char(c: char) -> bool {
    c.is_alphanumeric()
}

/// Case-insensitively match `form` against `text[start..]`; on success,
/// return the byte length of the matched span.
fn match_form_at(text: &str, start: usize, form: &str) -> Option<usize> {
    let mut text_chars = text[start..].chars();
    let mut len = 0;
    for fc in form.chars() {
        let tc = text_chars.next()?;
        if !tc.to_lowercase().eq(fc.to_lowercase()) {
            return None;
        }
        len += tc.len_utf8();
    }
    // whole-word boundary on the right; the left boundary is the caller's job
    match text[start + len..].chars().next() {
        Some(c) if is_word_char(c) => None,
        _ => Some(len),
    }
}

/// Reshape `replacement` to the case pattern of the matched source span:
/// ALL CAPS, Title case, or as written in the lexicon otherwise.
fn apply_case_pattern(matched: &str, replacement: &str) -> String {
    let letters: Vec<char> = matched.chars().filter(|c| c.is_alphabetic()).collect();
    if letters.is_empty() {
        return replacement.to_string();
    }
    let all_upper = letters.iter().all(|c| c.is_uppercase());
    if all_upper && letters.len() > 1 {
        return replacement.to_uppercase();
    }
    let title = letters[0].is_uppercase() && letters[1..].iter().all(|c| c.is_lowercase());
    if title || all_upper {
        let mut chars = replacement.chars();
        return match chars.next() {
            Some(first) => first.to_uppercase().collect::<String>() + chars.as_str(),
            None => String::new(),
        };
    }
    replacement.to_string()
}

/// Replace every whole-word occurrence of a source-side marker with its
/// counterpart, preserving the source token's case pattern. Non-marker
/// text is copied byte for byte; zero matches yields an identity record.
pub fn marker_style_transfer(
    text: &str,
    lexicon: &MarkerLexicon,
    direction: TransferDirection,
) -> TransferRecord {
    let forms = lexicon.oriented(direction);
    let mut transferred = String::with_capacity(text.len());
    let mut substitutions = Vec::new();

    let mut pos = 0;
    let mut prev_char: Option<char> = None;
    while pos < text.len() {
        let at_word_start = prev_char.is_none_or(|c| !is_word_char(c));
        let mut matched = None;
        if at_word_start {
            for (source, replacement) in &forms {
                if let Some(len) = match_form_at(text, pos, source) {
                    matched = Some((len, *replacement));
                    break;
                }
            }
        }
        match matched {
            Some((len, replacement)) => {
                let span = &text[pos..pos + len];
                let cased = apply_case_pattern(span, replacement);
                substitutions.push(Substitution {
                    position: pos,
                    from: span.to_string(),
                    to: cased.clone(),
                });
                transferred.push_str(&cased);
                prev_char = span.chars().last();
                pos += len;
            }
            None => {
                let c = text[pos..].chars().next().expect("in-bounds char");
                transferred.push(c);
                prev_char = Some(c);
                pos += c.len_utf8();
            }
        }
    }

    TransferRecord { original: text.to_string(), transferred, substitutions }
}

/// A semantics-preserving text transformer. Implementations must be pure:
/// the same input always maps to the same output.
pub trait StyleTransfer {
    fn transfer(&self, text: &str) -> Result<String, TransferError>;
}

/// Reported by a transformer that cannot preserve semantics for an input.
#[derive(Debug, Clone, Error)]
#[error("{reason}")]
pub struct TransferError {
    pub reason: String,
}

impl<F> StyleTransfer for F
where
    F: Fn(&str) -> Result<String, TransferError>,
{
    fn transfer(&self, text: &str) -> Result<String, TransferError> {
        self(text)
    }
}

/// The bundled deterministic transformer: marker substitution in a fixed
/// direction. Never fails.
#[derive(Debug, Clone)]
pub struct MarkerSubstituter {
    lexicon: MarkerLexicon,
    direction: TransferDirection,
}

impl MarkerSubstituter {
    pub fn new(lexicon: MarkerLexicon, direction: TransferDirection) -> Self {
        Self { lexicon, direction }
    }
}

impl StyleTransfer for MarkerSubstituter {
    fn transfer(&self, text: &str) -> Result<String, TransferError> {
        Ok(marker_style_transfer(text, &self.lexicon, self.direction).transferred)
    }
}

/// A paired input awaiting model responses: the pool text on the left,
/// its style-transferred counterpart on the right.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PairSkeleton {
    pub semantic_id: String,
    pub left: SideInput,
    pub right: SideInput,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gold: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SideInput {
    pub background: String,
    pub input_text: String,
}

/// Build one skeleton per pool item, in pool order. If the transformer
/// fails on any item, the error carries both the failures and the
/// completed skeletons so the caller can decide to drop or abort.
pub fn build_paired_inputs(
    pool: &SourcePool,
    transfer: &dyn StyleTransfer,
    target_background: &str,
) -> Result<Vec<PairSkeleton>, SamplingError> {
    if target_background == pool.background() {
        return Err(SamplingError::Config(format!(
            "target background `{target_background}` equals the pool background"
        )));
    }
    let mut skeletons = Vec::with_capacity(pool.items().len());
    let mut failures = Vec::new();
    for item in pool.items() {
        match transfer.transfer(&item.input_text) {
            Ok(transferred) => skeletons.push(PairSkeleton {
                semantic_id: item.semantic_id.clone(),
                left: SideInput {
                    background: pool.background().to_string(),
                    input_text: item.input_text.clone(),
                },
                right: SideInput {
                    background: target_background.to_string(),
                    input_text: transferred,
                },
                gold: item.gold.clone(),
            }),
            Err(e) => failures
                .push(FailedTransfer { semantic_id: item.semantic_id.clone(), reason: e.reason }),
        }
    }
    if !failures.is_empty() {
        return Err(SamplingError::TransferFailure {
            failures,
            completed: skeletons,
            total: pool.items().len(),
        });
    }
    Ok(skeletons)
}

/// Re-check a loaded sample body against the pairing contract.
pub fn validation_report_for(
    background_pair: (&str, &str),
    observations: &[PairedObservation],
) -> ValidationReport {
    validate_pairing(background_pair, observations)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn color_lexicon() -> MarkerLexicon {
        MarkerLexicon::new(
            "am_en",
            "br_en",
            vec![LexiconEntry { form_a: "color".into(), form_b: "colour".into() }],
        )
        .unwrap()
    }

    fn toy_lexicon() -> MarkerLexicon {
        MarkerLexicon::new(
            "am_en",
            "br_en",
            vec![
                LexiconEntry { form_a: "color".into(), form_b: "colour".into() },
                LexiconEntry { form_a: "gray".into(), form_b: "grey".into() },
                LexiconEntry { form_a: "parking lot".into(), form_b: "car park".into() },
            ],
        )
        .unwrap()
    }

    #[test]
    fn replaces_marker_whole_word() {
        let record = marker_style_transfer(
            "What color is a football?",
            &color_lexicon(),
            TransferDirection::AToB,
        );
        assert_eq!(record.transferred, "What colour is a football?");
        assert_eq!(record.substitutions.len(), 1);
        assert_eq!(record.substitutions[0].position, 5);
        assert_eq!(record.substitutions[0].from, "color");
        assert_eq!(record.substitutions[0].to, "colour");
        assert_eq!(record.replay(), record.transferred);
    }

    #[test]
    fn no_marker_is_identity() {
        let record = marker_style_transfer(
            "What is the national flag?",
            &color_lexicon(),
            TransferDirection::AToB,
        );
        assert_eq!(record.transferred, "What is the national flag?");
        assert!(record.substitutions.is_empty());
    }

    #[test]
    fn only_source_side_replaced_and_case_preserved() {
        let record = marker_style_transfer(
            "Color the colour wheel",
            &color_lexicon(),
            TransferDirection::AToB,
        );
        assert_eq!(record.transferred, "Colour the colour wheel");
        assert_eq!(record.substitutions.len(), 1);
        assert_eq!(record.substitutions[0].position, 0);
        assert_eq!(record.substitutions[0].from, "Color");
        assert_eq!(record.substitutions[0].to, "Colour");
    }

    #[test]
    fn all_caps_preserved() {
        let record = marker_style_transfer("COLOR CODE", &color_lexicon(), TransferDirection::AToB);
        assert_eq!(record.transferred, "COLOUR CODE");
    }

    #[test]
    fn partial_word_not_replaced() {
        let record = marker_style_transfer(
            "colorful colors color",
            &color_lexicon(),
            TransferDirection::AToB,
        );
        assert_eq!(record.transferred, "colorful colors colour");
    }

    #[test]
    fn longest_match_wins() {
        let lexicon = MarkerLexicon::new(
            "a",
            "b",
            vec![
                LexiconEntry { form_a: "football".into(), form_b: "soccer".into() },
                LexiconEntry { form_a: "football field".into(), form_b: "football pitch".into() },
            ],
        )
        .unwrap();
        let record = marker_style_transfer(
            "the football field near the football",
            &lexicon,
            TransferDirection::AToB,
        );
        assert_eq!(record.transferred, "the football pitch near the soccer");
    }

    #[test]
    fn round_trip_on_source_side_text() {
        let lexicon = toy_lexicon();
        let text = "Is the parking lot gray or some other color? Parking lot it is.";
        let there = marker_style_transfer(text, &lexicon, TransferDirection::AToB);
        assert_eq!(
            there.transferred,
            "Is the car park grey or some other colour? Car park it is."
        );
        let back = marker_style_transfer(&there.transferred, &lexicon, TransferDirection::BToA);
        assert_eq!(back.transferred, text);
    }

    #[test]
    fn residual_text_identical_after_removing_substituted_spans() {
        let lexicon = toy_lexicon();
        let text = "A gray parking lot; the color!";
        let record = marker_style_transfer(text, &lexicon, TransferDirection::AToB);
        assert_eq!(record.substitutions.len(), 3);

        // residual of the original: drop every `from` span
        let mut residual_in = String::new();
        let mut cursor = 0;
        for sub in &record.substitutions {
            residual_in.push_str(&record.original[cursor..sub.position]);
            cursor = sub.position + sub.from.len();
        }
        residual_in.push_str(&record.original[cursor..]);

        // residual of the output: drop every `to` span at the mirrored offset
        let mut residual_out = String::new();
        let mut cursor_in = 0;
        let mut cursor_out = 0;
        for sub in &record.substitutions {
            let gap = sub.position - cursor_in;
            residual_out.push_str(&record.transferred[cursor_out..cursor_out + gap]);
            cursor_out += gap + sub.to.len();
            cursor_in = sub.position + sub.from.len();
        }
        residual_out.push_str(&record.transferred[cursor_out..]);

        assert_eq!(residual_in, residual_out);
    }

    #[test]
    fn lexicon_rejects_cross_side_collisions() {
        let err = MarkerLexicon::new(
            "a",
            "b",
            vec![
                LexiconEntry { form_a: "truck".into(), form_b: "lorry".into() },
                LexiconEntry { form_a: "lorry".into(), form_b: "wagon".into() },
            ],
        )
        .unwrap_err();
        assert!(matches!(err, SamplingError::Lexicon(_)));
    }

    #[test]
    fn lexicon_rejects_duplicates_and_empties() {
        assert!(MarkerLexicon::new("a", "b", vec![]).is_err());
        assert!(MarkerLexicon::new(
            "a",
            "b",
            vec![
                LexiconEntry { form_a: "color".into(), form_b: "colour".into() },
                LexiconEntry { form_a: "Color".into(), form_b: "shade".into() },
            ],
        )
        .is_err());
        assert!(MarkerLexicon::new(
            "a",
            "a",
            vec![LexiconEntry { form_a: "x".into(), form_b: "y".into() }],
        )
        .is_err());
    }

    #[test]
    fn tsv_parsing_skips_comments() {
        let tsv = "# comment\ncolor\tcolour\n\ngray\tgrey\n";
        let lexicon = MarkerLexicon::from_tsv_reader("a", "b", tsv.as_bytes()).unwrap();
        assert_eq!(lexicon.entries().len(), 2);
    }

    #[test]
    fn tsv_rejects_wrong_column_count() {
        let tsv = "color\tcolour\textra\n";
        let err = MarkerLexicon::from_tsv_reader("a", "b", tsv.as_bytes()).unwrap_err();
        assert!(matches!(err, SamplingError::LexiconParse { line: 1, .. }));
    }

    fn pool_of(n: usize) -> SourcePool {
        let items = (0..n)
            .map(|i| PoolItem {
                semantic_id: format!("q{i:02}"),
                background: "am_en".into(),
                input_text: format!("What color is item {i}?"),
                gold: None,
            })
            .collect();
        SourcePool::new("am_en", items).unwrap()
    }

    #[test]
    fn build_pairs_preserves_order_and_count() {
        let pool = pool_of(3);
        let transfer = MarkerSubstituter::new(color_lexicon(), TransferDirection::AToB);
        let skeletons = build_paired_inputs(&pool, &transfer, "br_en").unwrap();
        assert_eq!(skeletons.len(), 3);
        for (k, skeleton) in skeletons.iter().enumerate() {
            assert_eq!(skeleton.semantic_id, format!("q{k:02}"));
            assert_eq!(skeleton.left.background, "am_en");
            assert_eq!(skeleton.right.background, "br_en");
            assert!(skeleton.right.input_text.contains("colour"));
        }
    }

    #[test]
    fn build_pairs_running_example() {
        let pool = SourcePool::new(
            "am_en",
            vec![PoolItem {
                semantic_id: "q1".into(),
                background: "am_en".into(),
                input_text: "What color is a football?".into(),
                gold: None,
            }],
        )
        .unwrap();
        let transfer = MarkerSubstituter::new(color_lexicon(), TransferDirection::AToB);
        let skeletons = build_paired_inputs(&pool, &transfer, "br_en").unwrap();
        assert_eq!(skeletons[0].left.input_text, "What color is a football?");
        assert_eq!(skeletons[0].right.input_text, "What colour is a football?");
    }

    #[test]
    fn build_pairs_empty_pool() {
        let pool = SourcePool::new("am_en", vec![]).unwrap();
        let transfer = MarkerSubstituter::new(color_lexicon(), TransferDirection::AToB);
        assert!(build_paired_inputs(&pool, &transfer, "br_en").unwrap().is_empty());
    }

    #[test]
    fn build_pairs_rejects_same_background() {
        let pool = pool_of(1);
        let transfer = MarkerSubstituter::new(color_lexicon(), TransferDirection::AToB);
        assert!(matches!(
            build_paired_inputs(&pool, &transfer, "am_en"),
            Err(SamplingError::Config(_))
        ));
    }

    #[test]
    fn transfer_failures_listed_with_completed_work() {
        let pool = pool_of(3);
        let failing = |text: &str| {
            if text.contains("item 1") {
                Err(TransferError { reason: "cannot preserve semantics".into() })
            } else {
                Ok(text.replace("color", "colour"))
            }
        };
        match build_paired_inputs(&pool, &failing, "br_en") {
            Err(SamplingError::TransferFailure { failures, completed, total }) => {
                assert_eq!(total, 3);
                assert_eq!(failures.len(), 1);
                assert_eq!(failures[0].semantic_id, "q01");
                assert_eq!(completed.len(), 2);
            }
            other => panic!("expected TransferFailure, got {other:?}"),
        }
    }

    #[test]
    fn pool_rejects_duplicate_ids() {
        let items = vec![
            PoolItem {
                semantic_id: "q1".into(),
                background: "am_en".into(),
                input_text: "a".into(),
                gold: None,
            },
            PoolItem {
                semantic_id: "q1".into(),
                background: "am_en".into(),
                input_text: "b".into(),
                gold: None,
            },
        ];
        let err = SourcePool::new("am_en", items).unwrap_err();
        assert!(matches!(err, SamplingError::DuplicateSemanticId(id) if id == "q1"));
    }

    #[test]
    fn pool_jsonl_round_trip() {
        let jsonl = concat!(
            r#"{"semantic_id":"q1","background":"am_en","input_text":"What color?"}"#,
            "\n",
            r#"{"semantic_id":"q2","background":"am_en","input_text":"What flavor?","gold":"Option 1"}"#,
            "\n",
        );
        let pool = SourcePool::from_jsonl_reader(jsonl.as_bytes()).unwrap();
        assert_eq!(pool.background(), "am_en");
        assert_eq!(pool.items().len(), 2);
        assert_eq!(pool.items()[1].gold.as_deref(), Some("Option 1"));
    }

    #[test]
    fn pool_jsonl_rejects_unknown_keys() {
        let jsonl = r#"{"semantic_id":"q1","background":"am_en","input_text":"x","extra":1}"#;
        assert!(matches!(
            SourcePool::from_jsonl_reader(jsonl.as_bytes()),
            Err(SamplingError::PoolParse { line: 1, .. })
        ));
    }

    #[test]
    fn subsample_retains_order() {
        let pool = pool_of(5);
        let sub = pool.retain_indices(&[4, 0, 2]);
        let ids: Vec<_> = sub.items().iter().map(|i| i.semantic_id.as_str()).collect();
        assert_eq!(ids, vec!["q00", "q02", "q04"]);
    }
}
