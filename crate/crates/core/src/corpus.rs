//! Transcript files, per-speaker concatenation and session pairing.
//!
//! Two input formats are supported. The TSV format is one LF-terminated
//! record per line with exactly five tab-separated fields:
//!
//! ```text
//! session<TAB>speaker<TAB>start_ms<TAB>end_ms<TAB>text
//! ```
//!
//! Lines starting with `#` are comments and a first line equal to
//! `session\tspeaker\tstart\tend\ttext` is a header. The JSON format is an
//! array of `{"session", "speaker", "start_ms", "end_ms", "text"}` objects.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::path::{Path, PathBuf};

use serde_json::Value;

use crate::align::SessionPair;
use crate::textnorm::{normalize, tokenize, NormalizationConfig, TokenSequence};

pub const TSV_HEADER: &str = "session\tspeaker\tstart\tend\ttext";

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Location {
    Line(usize),
    JsonPath(String),
    JsonSyntax { line: usize, column: usize },
}

impl fmt::Display for Location {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Location::Line(n) => write!(f, "line {n}"),
            Location::JsonPath(p) => write!(f, "{p}"),
            Location::JsonSyntax { line, column } => write!(f, "line {line} column {column}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("{location}: {message}")]
pub struct ParseError {
    pub location: Location,
    pub message: String,
}

impl ParseError {
    fn at_line(line: usize, message: impl Into<String>) -> Self {
        ParseError {
            location: Location::Line(line),
            message: message.into(),
        }
    }

    fn at_path(path: impl Into<String>, message: impl Into<String>) -> Self {
        ParseError {
            location: Location::JsonPath(path.into()),
            message: message.into(),
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum CorpusError {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{}: {source}", path.display())]
    Parse {
        path: PathBuf,
        #[source]
        source: ParseError,
    },
    #[error("reference and hypothesis share no session ids")]
    NoOverlap,
    #[error("segment field contains a tab or line break: {0:?}")]
    Unrepresentable(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum InputFormat {
    #[default]
    Tsv,
    Json,
}

/// One timed, speaker-labelled utterance.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Segment {
    pub session_id: String,
    pub speaker_id: String,
    pub start_ms: u64,
    pub end_ms: u64,
    pub text: String,
}

/// Speaker identity inside a session. Blank speakers are the empty streams
/// added when padding the smaller side of a session.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum SpeakerLabel {
    Named(String),
    Blank(usize),
}

impl SpeakerLabel {
    pub fn is_blank(&self) -> bool {
        matches!(self, SpeakerLabel::Blank(_))
    }

    pub fn name(&self) -> Option<&str> {
        match self {
            SpeakerLabel::Named(s) => Some(s),
            SpeakerLabel::Blank(_) => None,
        }
    }
}

impl fmt::Display for SpeakerLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SpeakerLabel::Named(s) => f.write_str(s),
            SpeakerLabel::Blank(k) => write!(f, "<blank-{}>", k + 1),
        }
    }
}

/// A speaker's whole-session token sequence.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SpeakerStream {
    pub speaker: SpeakerLabel,
    pub tokens: TokenSequence,
    pub source_segment_count: usize,
}

impl SpeakerStream {
    pub fn blank(index: usize) -> Self {
        SpeakerStream {
            speaker: SpeakerLabel::Blank(index),
            tokens: TokenSequence::default(),
            source_segment_count: 0,
        }
    }

    /// A named stream built from already-normalized text.
    pub fn from_text(speaker: &str, text: &str) -> Self {
        SpeakerStream {
            speaker: SpeakerLabel::Named(speaker.to_owned()),
            tokens: tokenize(text),
            source_segment_count: 1,
        }
    }
}

fn check_id(value: &str, what: &str) -> Result<(), String> {
    if value.is_empty() {
        return Err(format!("{what} is empty"));
    }
    if value.contains(['\t', '\n', '\r']) {
        return Err(format!("{what} contains a tab or line break"));
    }
    Ok(())
}

fn parse_ms(field: &str, what: &str) -> Result<u64, String> {
    if field.is_empty() || !field.bytes().all(|b| b.is_ascii_digit()) {
        return Err(format!(
            "{what} {field:?} is not a non-negative base-10 integer"
        ));
    }
    field
        .parse()
        .map_err(|_| format!("{what} {field:?} is out of range"))
}

fn build_segment(
    session_id: &str,
    speaker_id: &str,
    start_ms: u64,
    end_ms: u64,
    text: &str,
) -> Result<Segment, String> {
    check_id(session_id, "session id")?;
    check_id(speaker_id, "speaker id")?;
    if end_ms < start_ms {
        return Err(format!("end {end_ms} precedes start {start_ms}"));
    }
    Ok(Segment {
        session_id: session_id.to_owned(),
        speaker_id: speaker_id.to_owned(),
        start_ms,
        end_ms,
        text: text.to_owned(),
    })
}

pub fn parse_segments_tsv(input: &[u8]) -> Result<Vec<Segment>, ParseError> {
    if input.starts_with(b"\xEF\xBB\xBF") {
        return Err(ParseError::at_line(1, "byte-order mark is not allowed"));
    }
    let mut lines: Vec<&[u8]> = input.split(|&b| b == b'\n').collect();
    if lines.last().is_some_and(|l| l.is_empty()) {
        lines.pop();
    }

    let mut segments = Vec::new();
    let mut seen_record = false;
    for (idx, raw) in lines.into_iter().enumerate() {
        let line_no = idx + 1;
        let line = std::str::from_utf8(raw).map_err(|e| {
            ParseError::at_line(
                line_no,
                format!("invalid UTF-8 at byte {}", e.valid_up_to()),
            )
        })?;
        if line.starts_with('#') {
            continue;
        }
        if line.contains('\r') {
            return Err(ParseError::at_line(
                line_no,
                "carriage return found; lines must end with LF only",
            ));
        }
        if !seen_record && line == TSV_HEADER {
            seen_record = true;
            continue;
        }
        seen_record = true;

        let fields: Vec<&str> = line.split('\t').collect();
        let [session, speaker, start, end, text] = fields[..] else {
            return Err(ParseError::at_line(
                line_no,
                format!("expected 5 tab-separated fields, found {}", fields.len()),
            ));
        };
        let start = parse_ms(start, "start").map_err(|m| ParseError::at_line(line_no, m))?;
        let end = parse_ms(end, "end").map_err(|m| ParseError::at_line(line_no, m))?;
        let segment = build_segment(session, speaker, start, end, text)
            .map_err(|m| ParseError::at_line(line_no, m))?;
        segments.push(segment);
    }
    Ok(segments)
}

pub fn parse_segments_json(input: &[u8]) -> Result<Vec<Segment>, ParseError> {
    let value: Value = serde_json::from_slice(input).map_err(|e| ParseError {
        location: Location::JsonSyntax {
            line: e.line(),
            column: e.column(),
        },
        message: e.to_string(),
    })?;
    let Value::Array(items) = value else {
        return Err(ParseError::at_path(
            "$",
            "expected an array of segment objects",
        ));
    };

    items
        .iter()
        .enumerate()
        .map(|(i, item)| {
            let path = format!("$[{i}]");
            let Value::Object(obj) = item else {
                return Err(ParseError::at_path(&path, "expected an object"));
            };
            let string = |key: &str| -> Result<&str, ParseError> {
                match obj.get(key) {
                    Some(Value::String(s)) => Ok(s),
                    Some(_) => Err(ParseError::at_path(
                        format!("{path}.{key}"),
                        "expected a string",
                    )),
                    None => Err(ParseError::at_path(format!("{path}.{key}"), "missing key")),
                }
            };
            let millis = |key: &str| -> Result<u64, ParseError> {
                match obj.get(key) {
                    Some(Value::Number(n)) => n.as_u64().ok_or_else(|| {
                        ParseError::at_path(
                            format!("{path}.{key}"),
                            format!("{n} is not a non-negative integer"),
                        )
                    }),
                    Some(_) => Err(ParseError::at_path(
                        format!("{path}.{key}"),
                        "expected an integer",
                    )),
                    None => Err(ParseError::at_path(format!("{path}.{key}"), "missing key")),
                }
            };
            let session = string("session")?;
            let speaker = string("speaker")?;
            let start = millis("start_ms")?;
            let end = millis("end_ms")?;
            let text = string("text")?;
            build_segment(session, speaker, start, end, text)
                .map_err(|m| ParseError::at_path(&path, m))
        })
        .collect()
}

pub fn parse_segments(input: &[u8], format: InputFormat) -> Result<Vec<Segment>, ParseError> {
    match format {
        InputFormat::Tsv => parse_segments_tsv(input),
        InputFormat::Json => parse_segments_json(input),
    }
}

/// Writes segments in the TSV format, header included.
pub fn emit_segments_tsv(segments: &[Segment]) -> Result<String, CorpusError> {
    let mut out = String::from(TSV_HEADER);
    out.push('\n');
    for s in segments {
        if s.text.contains(['\t', '\n', '\r'])
            || s.session_id.contains(['\t', '\n', '\r'])
            || s.speaker_id.contains(['\t', '\n', '\r'])
        {
            return Err(CorpusError::Unrepresentable(s.text.clone()));
        }
        out.push_str(&format!(
            "{}\t{}\t{}\t{}\t{}\n",
            s.session_id, s.speaker_id, s.start_ms, s.end_ms, s.text
        ));
    }
    Ok(out)
}

/// Groups segments by session and speaker, orders each speaker's segments
/// by `(start, end, input position)` and concatenates their normalized
/// tokens with no separator. Speakers keep first-appearance order.
pub fn concatenate_speakers(
    segments: &[Segment],
    cfg: &NormalizationConfig,
) -> BTreeMap<String, Vec<SpeakerStream>> {
    let mut grouped: BTreeMap<&str, Vec<(&str, Vec<&Segment>)>> = BTreeMap::new();
    let mut slot: HashMap<(&str, &str), usize> = HashMap::new();
    for seg in segments {
        let speakers = grouped.entry(&seg.session_id).or_default();
        let idx = *slot
            .entry((&seg.session_id, &seg.speaker_id))
            .or_insert_with(|| {
                speakers.push((&seg.speaker_id, Vec::new()));
                speakers.len() - 1
            });
        speakers[idx].1.push(seg);
    }

    grouped
        .into_iter()
        .map(|(session, speakers)| {
            let streams = speakers
                .into_iter()
                .map(|(speaker, mut segs)| {
                    // Stable: equal (start, end) keep input order.
                    segs.sort_by_key(|s| (s.start_ms, s.end_ms));
                    let mut tokens = TokenSequence::default();
                    for s in &segs {
                        tokens.extend(&tokenize(&normalize(&s.text, cfg)));
                    }
                    SpeakerStream {
                        speaker: SpeakerLabel::Named(speaker.to_owned()),
                        tokens,
                        source_segment_count: segs.len(),
                    }
                })
                .collect();
            (session.to_owned(), streams)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorpusMetadata {
    pub source: Option<PathBuf>,
    pub format: InputFormat,
    pub normalization: NormalizationConfig,
}

/// One side (reference or hypothesis) of an evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    pub sessions: BTreeMap<String, Vec<SpeakerStream>>,
    pub metadata: CorpusMetadata,
    /// Exact duplicate records dropped while building.
    pub duplicates_removed: usize,
}

impl Corpus {
    pub fn from_segments(
        segments: &[Segment],
        format: InputFormat,
        cfg: NormalizationConfig,
    ) -> Self {
        let mut seen = HashSet::new();
        let unique: Vec<Segment> = segments
            .iter()
            .filter(|s| seen.insert(*s))
            .cloned()
            .collect();
        Corpus {
            sessions: concatenate_speakers(&unique, &cfg),
            metadata: CorpusMetadata {
                source: None,
                format,
                normalization: cfg,
            },
            duplicates_removed: segments.len() - unique.len(),
        }
    }

    pub fn load(
        path: &Path,
        format: InputFormat,
        cfg: NormalizationConfig,
    ) -> Result<Self, CorpusError> {
        let bytes = std::fs::read(path).map_err(|source| CorpusError::Io {
            path: path.to_owned(),
            source,
        })?;
        let segments = parse_segments(&bytes, format).map_err(|source| CorpusError::Parse {
            path: path.to_owned(),
            source,
        })?;
        let mut corpus = Corpus::from_segments(&segments, format, cfg);
        corpus.metadata.source = Some(path.to_owned());
        Ok(corpus)
    }

    pub fn is_empty(&self) -> bool {
        self.sessions.is_empty()
    }
}

/// Sessions to score plus anything worth telling the user.
#[derive(Debug, Clone, PartialEq)]
pub struct Pairing {
    pub pairs: Vec<SessionPair>,
    /// Hypothesis sessions with no reference counterpart; not scored.
    pub unmatched_hypothesis: Vec<String>,
    /// Reference sessions with no hypothesis; scored as all deletions.
    pub missing_hypothesis: Vec<String>,
}

impl Pairing {
    pub fn warnings(&self) -> Vec<String> {
        let mut out: Vec<String> = self
            .missing_hypothesis
            .iter()
            .map(|s| format!("session {s}: no hypothesis; scored as all deletions"))
            .collect();
        out.extend(
            self.unmatched_hypothesis.iter().map(|s| {
                format!("session {s}: hypothesis has no reference; excluded from scoring")
            }),
        );
        out
    }
}

/// Matches sessions by id, in ascending session-id order.
pub fn pair_corpora(reference: &Corpus, hypothesis: &Corpus) -> Pairing {
    let mut pairs = Vec::with_capacity(reference.sessions.len());
    let mut missing_hypothesis = Vec::new();
    for (id, ref_streams) in &reference.sessions {
        let hyp_streams = match hypothesis.sessions.get(id) {
            Some(h) => h.clone(),
            None => {
                missing_hypothesis.push(id.clone());
                Vec::new()
            }
        };
        pairs.push(SessionPair {
            session_id: id.clone(),
            ref_streams: ref_streams.clone(),
            hyp_streams,
        });
    }
    let unmatched_hypothesis = hypothesis
        .sessions
        .keys()
        .filter(|id| !reference.sessions.contains_key(*id))
        .cloned()
        .collect();
    Pairing {
        pairs,
        unmatched_hypothesis,
        missing_hypothesis,
    }
}

/// Like [`pair_corpora`] but fails when a non-empty reference shares no
/// session with the hypothesis.
pub fn pair_corpora_strict(
    reference: &Corpus,
    hypothesis: &Corpus,
) -> Result<Pairing, CorpusError> {
    let overlap = reference
        .sessions
        .keys()
        .any(|k| hypothesis.sessions.contains_key(k));
    if !reference.is_empty() && !overlap {
        return Err(CorpusError::NoOverlap);
    }
    Ok(pair_corpora(reference, hypothesis))
}
