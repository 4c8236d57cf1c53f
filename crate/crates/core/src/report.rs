//! Corpus-level aggregation and report serialization.
//!
//! All rates are kept as exact rationals and only rounded when written out.
//! Group rows follow the usual meeting-benchmark layout: one column per
//! oracle speaker count plus an overall column.

use std::fmt::Write as _;
use std::io::{self, Write};

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{ToPrimitive, Zero};
use serde::Serialize;
use serde_json::Number;

use crate::align::AlignmentOutcome;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ReportFormat {
    Json,
    Tsv,
    #[default]
    Pretty,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SpeakerMatch {
    pub reference: Option<String>,
    pub hypothesis: Option<String>,
    pub distance: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SessionScore {
    pub session_id: String,
    pub oracle_speakers: usize,
    pub estimated_speakers: usize,
    pub min_distance: u64,
    pub total_ref_tokens: u64,
    /// Reference→hypothesis pairing. `None` marks a padding blank.
    pub permutation: Vec<SpeakerMatch>,
}

impl SessionScore {
    /// Exact cpCER in percent; zero when the session has no reference tokens.
    pub fn cpcer(&self) -> BigRational {
        percent(self.min_distance, self.total_ref_tokens)
    }
}

impl From<&AlignmentOutcome> for SessionScore {
    fn from(o: &AlignmentOutcome) -> Self {
        SessionScore {
            session_id: o.session_id.clone(),
            oracle_speakers: o.oracle_speakers,
            estimated_speakers: o.estimated_speakers,
            min_distance: o.min_distance,
            total_ref_tokens: o.total_ref_tokens,
            permutation: o
                .pairs()
                .map(|(r, h, distance)| SpeakerMatch {
                    reference: r.name().map(str::to_owned),
                    hypothesis: h.name().map(str::to_owned),
                    distance,
                })
                .collect(),
        }
    }
}

fn percent(num: u64, den: u64) -> BigRational {
    if den == 0 {
        return BigRational::zero();
    }
    BigRational::new(BigInt::from(num) * 100, BigInt::from(den))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum GroupKey {
    Speakers(usize),
    All,
}

impl GroupKey {
    pub fn label(&self) -> String {
        match self {
            GroupKey::Speakers(n) => n.to_string(),
            GroupKey::All => "all".to_owned(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroupReport {
    pub key: GroupKey,
    pub session_count: usize,
    pub distance_total: u64,
    pub ref_token_total: u64,
    /// Σ distance / Σ reference tokens, in percent. The headline figure.
    pub micro_cpcer: BigRational,
    /// Mean of per-session cpCER, in percent.
    pub macro_cpcer: BigRational,
}

fn group_of<'a>(key: GroupKey, members: impl Iterator<Item = &'a SessionScore>) -> GroupReport {
    let mut session_count = 0;
    let mut distance_total = 0u64;
    let mut ref_token_total = 0u64;
    let mut rate_sum = BigRational::zero();
    for s in members {
        session_count += 1;
        distance_total += s.min_distance;
        ref_token_total += s.total_ref_tokens;
        rate_sum += s.cpcer();
    }
    let macro_cpcer = if session_count == 0 {
        BigRational::zero()
    } else {
        rate_sum / BigInt::from(session_count)
    };
    GroupReport {
        key,
        session_count,
        distance_total,
        ref_token_total,
        micro_cpcer: percent(distance_total, ref_token_total),
        macro_cpcer,
    }
}

/// One group per oracle speaker count (ascending, if requested) then "all".
/// An empty score list yields no groups.
pub fn aggregate(scores: &[SessionScore], group_by_speaker_count: bool) -> Vec<GroupReport> {
    if scores.is_empty() {
        return Vec::new();
    }
    let mut groups = Vec::new();
    if group_by_speaker_count {
        let mut counts: Vec<usize> = scores.iter().map(|s| s.oracle_speakers).collect();
        counts.sort_unstable();
        counts.dedup();
        for n in counts {
            groups.push(group_of(
                GroupKey::Speakers(n),
                scores.iter().filter(|s| s.oracle_speakers == n),
            ));
        }
    }
    groups.push(group_of(GroupKey::All, scores.iter()));
    groups
}

/// Estimated vs oracle speaker count tallies.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SpeakerCountStats {
    pub sessions: usize,
    pub under: usize,
    pub equal: usize,
    pub over: usize,
}

impl SpeakerCountStats {
    fn pct(&self, count: usize) -> BigRational {
        percent(count as u64, self.sessions as u64)
    }

    pub fn pct_under(&self) -> BigRational {
        self.pct(self.under)
    }

    pub fn pct_equal(&self) -> BigRational {
        self.pct(self.equal)
    }

    pub fn pct_over(&self) -> BigRational {
        self.pct(self.over)
    }

    /// `(under, equal, over)` rounded to whole percent.
    pub fn rounded(&self) -> (u64, u64, u64) {
        let r = |x: BigRational| round_scaled(&x, 0).to_u64().unwrap_or(u64::MAX);
        (r(self.pct_under()), r(self.pct_equal()), r(self.pct_over()))
    }
}

/// Returns `None` for an empty score list.
pub fn speaker_counting_stats(scores: &[SessionScore]) -> Option<SpeakerCountStats> {
    if scores.is_empty() {
        return None;
    }
    let mut stats = SpeakerCountStats {
        sessions: scores.len(),
        under: 0,
        equal: 0,
        over: 0,
    };
    for s in scores {
        match s.estimated_speakers.cmp(&s.oracle_speakers) {
            std::cmp::Ordering::Less => stats.under += 1,
            std::cmp::Ordering::Equal => stats.equal += 1,
            std::cmp::Ordering::Greater => stats.over += 1,
        }
    }
    Some(stats)
}

/// `round(x · 10^digits)`, halves away from zero.
fn round_scaled(x: &BigRational, digits: u32) -> BigInt {
    let scaled = x * BigRational::from_integer(BigInt::from(10u32).pow(digits));
    let (num, den) = (scaled.numer(), scaled.denom());
    let twice = num * 2;
    let sign = if twice < BigInt::zero() { -1 } else { 1 };
    (twice + den * sign) / (den * 2)
}

/// Fixed-point rendering with `digits` fraction digits.
pub fn format_fixed(x: &BigRational, digits: u32) -> String {
    let scaled = round_scaled(x, digits);
    let negative = scaled < BigInt::zero();
    let mut s = if negative { -scaled } else { scaled }.to_string();
    let width = digits as usize + 1;
    if s.len() < width {
        s = format!("{}{s}", "0".repeat(width - s.len()));
    }
    if digits > 0 {
        s.insert(s.len() - digits as usize, '.');
    }
    if negative {
        s.insert(0, '-');
    }
    s
}

/// Everything a report is rendered from.
#[derive(Debug, Clone, PartialEq)]
pub struct Report {
    pub sessions: Vec<SessionScore>,
    pub groups: Vec<GroupReport>,
    pub speaker_counting: Option<SpeakerCountStats>,
}

impl Report {
    /// Sessions are ordered by id so output does not depend on scoring order.
    pub fn build(mut sessions: Vec<SessionScore>, group_by_speaker_count: bool) -> Self {
        sessions.sort_by(|a, b| a.session_id.cmp(&b.session_id));
        Report {
            groups: aggregate(&sessions, group_by_speaker_count),
            speaker_counting: speaker_counting_stats(&sessions),
            sessions,
        }
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct EmitOptions {
    /// Include per-session rows in TSV and pretty output.
    pub per_session: bool,
}

pub fn emit_report<W: Write + ?Sized>(
    report: &Report,
    format: ReportFormat,
    options: EmitOptions,
    out: &mut W,
) -> io::Result<()> {
    let text = match format {
        ReportFormat::Json => render_json(report),
        ReportFormat::Tsv => render_tsv(report, options),
        ReportFormat::Pretty => render_pretty(report, options),
    };
    out.write_all(text.as_bytes())?;
    out.flush()
}

pub fn render(report: &Report, format: ReportFormat, options: EmitOptions) -> Vec<u8> {
    let mut buf = Vec::new();
    emit_report(report, format, options, &mut buf).expect("writing to a Vec cannot fail");
    buf
}

fn number(text: &str) -> Number {
    text.parse().expect("rendered decimal is valid JSON")
}

fn display2(x: &BigRational) -> Number {
    number(&format_fixed(x, 2))
}

#[derive(Serialize)]
struct JsonRatio {
    numerator: Number,
    denominator: Number,
}

impl From<&BigRational> for JsonRatio {
    fn from(x: &BigRational) -> Self {
        JsonRatio {
            numerator: number(&x.numer().to_string()),
            denominator: number(&x.denom().to_string()),
        }
    }
}

#[derive(Serialize)]
struct JsonReport {
    session_count: usize,
    groups: Vec<JsonGroup>,
    speaker_counting: Option<JsonSpeakerCounting>,
    sessions: Vec<JsonSession>,
}

#[derive(Serialize)]
struct JsonGroup {
    group: String,
    session_count: usize,
    distance_total: u64,
    ref_token_total: u64,
    micro_cpcer: Number,
    micro_cpcer_exact: JsonRatio,
    macro_cpcer: Number,
    macro_cpcer_exact: JsonRatio,
}

#[derive(Serialize)]
struct JsonSpeakerCounting {
    sessions: usize,
    under: usize,
    equal: usize,
    over: usize,
    pct_under: u64,
    pct_equal: u64,
    pct_over: u64,
    pct_under_exact: JsonRatio,
    pct_equal_exact: JsonRatio,
    pct_over_exact: JsonRatio,
}

#[derive(Serialize)]
struct JsonSession {
    session_id: String,
    oracle_speakers: usize,
    estimated_speakers: usize,
    min_distance: u64,
    total_ref_tokens: u64,
    cpcer: Number,
    cpcer_exact: JsonRatio,
    permutation: Vec<JsonMatch>,
}

#[derive(Serialize)]
struct JsonMatch {
    reference: Option<String>,
    hypothesis: Option<String>,
    distance: u64,
}

fn render_json(report: &Report) -> String {
    let doc = JsonReport {
        session_count: report.sessions.len(),
        groups: report
            .groups
            .iter()
            .map(|g| JsonGroup {
                group: g.key.label(),
                session_count: g.session_count,
                distance_total: g.distance_total,
                ref_token_total: g.ref_token_total,
                micro_cpcer: display2(&g.micro_cpcer),
                micro_cpcer_exact: (&g.micro_cpcer).into(),
                macro_cpcer: display2(&g.macro_cpcer),
                macro_cpcer_exact: (&g.macro_cpcer).into(),
            })
            .collect(),
        speaker_counting: report.speaker_counting.map(|s| {
            let (pct_under, pct_equal, pct_over) = s.rounded();
            JsonSpeakerCounting {
                sessions: s.sessions,
                under: s.under,
                equal: s.equal,
                over: s.over,
                pct_under,
                pct_equal,
                pct_over,
                pct_under_exact: (&s.pct_under()).into(),
                pct_equal_exact: (&s.pct_equal()).into(),
                pct_over_exact: (&s.pct_over()).into(),
            }
        }),
        sessions: report
            .sessions
            .iter()
            .map(|s| JsonSession {
                session_id: s.session_id.clone(),
                oracle_speakers: s.oracle_speakers,
                estimated_speakers: s.estimated_speakers,
                min_distance: s.min_distance,
                total_ref_tokens: s.total_ref_tokens,
                cpcer: display2(&s.cpcer()),
                cpcer_exact: (&s.cpcer()).into(),
                permutation: s
                    .permutation
                    .iter()
                    .map(|m| JsonMatch {
                        reference: m.reference.clone(),
                        hypothesis: m.hypothesis.clone(),
                        distance: m.distance,
                    })
                    .collect(),
            })
            .collect(),
    };
    let mut text = serde_json::to_string_pretty(&doc).expect("report serializes");
    text.push('\n');
    text
}

fn render_tsv(report: &Report, options: EmitOptions) -> String {
    let mut out = String::new();
    out.push_str("#group\tsessions\tdistance\tref_tokens\tmicro_cpcer\tmacro_cpcer\n");
    for g in &report.groups {
        let _ = writeln!(
            out,
            "{}\t{}\t{}\t{}\t{}\t{}",
            g.key.label(),
            g.session_count,
            g.distance_total,
            g.ref_token_total,
            format_fixed(&g.micro_cpcer, 2),
            format_fixed(&g.macro_cpcer, 2)
        );
    }
    if let Some(s) = report.speaker_counting {
        let (u, e, o) = s.rounded();
        out.push_str(
            "#speaker_counting\tsessions\tunder\tequal\tover\tpct_under\tpct_equal\tpct_over\n",
        );
        let _ = writeln!(
            out,
            "speaker_counting\t{}\t{}\t{}\t{}\t{u}\t{e}\t{o}",
            s.sessions, s.under, s.equal, s.over
        );
    }
    if options.per_session {
        out.push_str(
            "#session\toracle_speakers\testimated_speakers\tdistance\tref_tokens\tcpcer\n",
        );
        for s in &report.sessions {
            let _ = writeln!(
                out,
                "{}\t{}\t{}\t{}\t{}\t{}",
                s.session_id,
                s.oracle_speakers,
                s.estimated_speakers,
                s.min_distance,
                s.total_ref_tokens,
                format_fixed(&s.cpcer(), 2)
            );
        }
    }
    out
}

fn render_table(rows: &[Vec<String>]) -> String {
    let columns = rows.iter().map(Vec::len).max().unwrap_or(0);
    let widths: Vec<usize> = (0..columns)
        .map(|c| {
            rows.iter()
                .filter_map(|r| r.get(c))
                .map(|s| s.chars().count())
                .max()
                .unwrap_or(0)
        })
        .collect();
    let mut out = String::new();
    for row in rows {
        let cells: Vec<String> = row
            .iter()
            .enumerate()
            .map(|(c, s)| {
                let pad = widths[c] - s.chars().count();
                if c == 0 {
                    format!("{s}{}", " ".repeat(pad))
                } else {
                    format!("{}{s}", " ".repeat(pad))
                }
            })
            .collect();
        out.push_str(cells.join("  ").trim_end());
        out.push('\n');
    }
    out
}

fn render_pretty(report: &Report, options: EmitOptions) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "Sessions scored: {}", report.sessions.len());
    if report.groups.is_empty() {
        return out;
    }
    out.push('\n');

    let mut header = vec!["cpCER (%)".to_owned()];
    let mut micro = vec!["micro".to_owned()];
    let mut macro_ = vec!["macro".to_owned()];
    for g in &report.groups {
        header.push(match g.key {
            GroupKey::Speakers(n) => format!("{n}-speaker ({})", g.session_count),
            GroupKey::All => format!("Average ({})", g.session_count),
        });
        micro.push(format_fixed(&g.micro_cpcer, 2));
        macro_.push(format_fixed(&g.macro_cpcer, 2));
    }
    out.push_str(&render_table(&[header, micro, macro_]));

    if let Some(s) = report.speaker_counting {
        let (u, e, o) = s.rounded();
        out.push('\n');
        out.push_str(&render_table(&[
            vec![
                "Speaker counting (%)".to_owned(),
                "est < oracle".to_owned(),
                "est = oracle".to_owned(),
                "est > oracle".to_owned(),
            ],
            vec![
                format!("{} sessions", s.sessions),
                u.to_string(),
                e.to_string(),
                o.to_string(),
            ],
        ]));
    }

    if options.per_session {
        out.push('\n');
        let mut rows = vec![vec![
            "session".to_owned(),
            "oracle".to_owned(),
            "estimated".to_owned(),
            "errors".to_owned(),
            "ref tokens".to_owned(),
            "cpCER (%)".to_owned(),
        ]];
        for s in &report.sessions {
            rows.push(vec![
                s.session_id.clone(),
                s.oracle_speakers.to_string(),
                s.estimated_speakers.to_string(),
                s.min_distance.to_string(),
                s.total_ref_tokens.to_string(),
                format_fixed(&s.cpcer(), 2),
            ]);
        }
        out.push_str(&render_table(&rows));
    }
    out
}
