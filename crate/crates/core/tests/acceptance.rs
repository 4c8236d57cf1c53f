//! Acceptance suite. Runs every exit criterion, prints one PASS/FAIL line
//! each, and exits non-zero if any criterion fails.

use std::panic::{self, AssertUnwindSafe};
use std::path::Path;
use std::process::{Command, Output};
use std::time::{Duration, Instant};

use cpcer::align::{
    brute_force_assignment, build_cost_matrix, min_assignment, pad_to_equal, score_session,
    CostMatrix, SessionPair,
};
use cpcer::corpus::{parse_segments_json, parse_segments_tsv, SpeakerStream};
use cpcer::editdist::{edit_distance_dp, edit_distance_fast};
use cpcer::textnorm::TokenSequence;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::Value;

const BIN: &str = env!("CARGO_BIN_EXE_cpcer");

const MIXED_ALPHABET: &[char] = &[
    'a', 'b', 'c', 'd', 'x', 'y', 'z', '0', '1', '.', '你', '好', '们', '世', '界', '会', '议',
    '说', '话', '。',
];

fn random_tokens(rng: &mut ChaCha8Rng, len: usize, alphabet: &[char]) -> TokenSequence {
    TokenSequence::new(
        (0..len)
            .map(|_| alphabet[rng.gen_range(0..alphabet.len())])
            .collect(),
    )
}

fn random_text(rng: &mut ChaCha8Rng, len: usize) -> String {
    (0..len)
        .map(|_| MIXED_ALPHABET[rng.gen_range(0..MIXED_ALPHABET.len())])
        .collect()
}

fn cpcer_cli(args: &[&str]) -> Output {
    Command::new(BIN)
        .args(args)
        .output()
        .expect("spawn cpcer binary")
}

fn write(dir: &Path, name: &str, contents: &str) -> String {
    let path = dir.join(name);
    std::fs::write(&path, contents).unwrap();
    path.to_str().unwrap().to_owned()
}

fn json_report(out: &Output) -> Value {
    assert!(
        out.status.success(),
        "cpcer failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    serde_json::from_slice(&out.stdout).expect("report is JSON")
}

/// A report number exactly as serialized, e.g. `50.00`.
fn decimal(v: &Value) -> String {
    v.to_string()
}

/// Every permutation of `0..n` by recursive swapping; independent of the
/// library's lexicographic enumeration.
fn all_permutations(n: usize) -> Vec<Vec<usize>> {
    fn rec(k: usize, current: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if k == current.len() {
            out.push(current.clone());
            return;
        }
        for i in k..current.len() {
            current.swap(k, i);
            rec(k + 1, current, out);
            current.swap(k, i);
        }
    }
    let mut out = Vec::new();
    rec(0, &mut (0..n).collect(), &mut out);
    out
}

fn criterion_1() -> Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let started = Instant::now();
    let instances = 1_200;
    for i in 0..instances {
        let n = 1 + i % 7;
        let rows: Vec<Vec<u64>> = (0..n)
            .map(|_| (0..n).map(|_| rng.gen_range(0..=10_000)).collect())
            .collect();
        let m = CostMatrix::from_rows(&rows);
        let hungarian = min_assignment(&m);
        let enumerated = brute_force_assignment(&m).map_err(|e| e.to_string())?;
        if hungarian.total != enumerated.total {
            return Err(format!(
                "instance {i}: {} vs {}",
                hungarian.total, enumerated.total
            ));
        }
        if hungarian.total != m.cost_of(&hungarian.permutation) {
            return Err(format!(
                "instance {i}: reported total does not match its permutation"
            ));
        }
        if n <= 6 {
            let oracle = all_permutations(n)
                .iter()
                .map(|p| m.cost_of(p))
                .min()
                .unwrap();
            if oracle != hungarian.total {
                return Err(format!(
                    "instance {i}: independent enumeration {oracle} vs {}",
                    hungarian.total
                ));
            }
        }
    }
    let elapsed = started.elapsed();
    if elapsed >= Duration::from_secs(10) {
        return Err(format!("took {elapsed:.2?}, limit 10 s"));
    }
    Ok(format!("{instances} matrices, sizes 1-7, {elapsed:.2?}"))
}

fn criterion_2() -> Result<String, String> {
    let streams = |items: &[(&str, &str)]| {
        items
            .iter()
            .map(|(s, t)| SpeakerStream::from_text(s, t))
            .collect()
    };
    let pair = SessionPair::new(
        "S1",
        streams(&[("A", "abcd")]),
        streams(&[("1", "abxd"), ("2", "q")]),
    )
    .map_err(|e| e.to_string())?;
    let outcome = score_session(&pair).map_err(|e| e.to_string())?;
    if outcome.cpcer() != 50.0 || outcome.min_distance != 2 || outcome.total_ref_tokens != 4 {
        return Err(format!(
            "padding fixture scored {} ({}/{})",
            outcome.cpcer(),
            outcome.min_distance,
            outcome.total_ref_tokens
        ));
    }

    let dir = tempfile::tempdir().unwrap();
    let dir = dir.path();
    let r = write(dir, "pad_ref.tsv", "S1\tA\t0\t1000\tabcd\n");
    let h = write(
        dir,
        "pad_hyp.tsv",
        "S1\t1\t0\t1000\tabxd\nS1\t2\t1000\t2000\tq\n",
    );
    let report = json_report(&cpcer_cli(&[
        "score",
        "--ref",
        &r,
        "--hyp",
        &h,
        "--report-format",
        "json",
    ]));
    if decimal(&report["sessions"][0]["cpcer"]) != "50.00" {
        return Err(format!(
            "CLI padding fixture reported {}",
            report["sessions"][0]["cpcer"]
        ));
    }

    // Identical corpora: 0.00 everywhere.
    let corpus = fixture_corpus(&mut ChaCha8Rng::seed_from_u64(2), 12);
    let r = write(dir, "same.tsv", &corpus.reference);
    let report = json_report(&cpcer_cli(&[
        "score",
        "--ref",
        &r,
        "--hyp",
        &r,
        "--report-format",
        "json",
    ]));
    let groups = report["groups"].as_array().unwrap();
    if groups.len() < 2 {
        return Err("expected per-speaker-count groups".into());
    }
    for g in groups {
        for key in ["micro_cpcer", "macro_cpcer"] {
            if decimal(&g[key]) != "0.00" {
                return Err(format!("group {} {key} = {}", g["group"], g[key]));
            }
        }
    }
    for s in report["sessions"].as_array().unwrap() {
        if decimal(&s["cpcer"]) != "0.00" {
            return Err(format!("session {} = {}", s["session_id"], s["cpcer"]));
        }
    }

    // Relabeling and reordering hypothesis speakers.
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for session in 0..50 {
        let refs: Vec<SpeakerStream> = (0..rng.gen_range(1..=5))
            .map(|k| SpeakerStream::from_text(&format!("R{k}"), &random_text(&mut rng, 40)))
            .collect();
        let hyps: Vec<(String, String)> = (0..rng.gen_range(0..=6))
            .map(|k| (format!("H{k}"), random_text(&mut rng, 40)))
            .collect();
        let mut relabeled = hyps.clone();
        relabeled.shuffle(&mut rng);
        let to_streams = |v: &[(String, String)], prefix: &str| {
            v.iter()
                .map(|(s, t)| SpeakerStream::from_text(&format!("{prefix}{s}"), t))
                .collect::<Vec<_>>()
        };
        let a = score_session(&SessionPair::new("S", refs.clone(), to_streams(&hyps, "")).unwrap())
            .unwrap();
        let b =
            score_session(&SessionPair::new("S", refs, to_streams(&relabeled, "spk-")).unwrap())
                .unwrap();
        if a.min_distance != b.min_distance
            || a.total_ref_tokens != b.total_ref_tokens
            || a.cpcer().to_bits() != b.cpcer().to_bits()
        {
            return Err(format!(
                "relabeling changed session {session}: {} vs {}",
                a.cpcer(),
                b.cpcer()
            ));
        }
    }
    Ok(
        "50.00% padding fixture, 0.00% identity at every level, 50 relabelings bit-identical"
            .into(),
    )
}

fn criterion_3() -> Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let pairs = 10_000;
    for i in 0..pairs {
        // Vary the effective alphabet so both dense and highly repetitive inputs appear.
        let alphabet = &MIXED_ALPHABET[..rng.gen_range(1..=MIXED_ALPHABET.len())];
        let a = {
            let len = rng.gen_range(0..=512);
            random_tokens(&mut rng, len, alphabet)
        };
        let b = if rng.gen_bool(0.3) {
            // Near-duplicate: a few point edits of `a`.
            let mut v = a.as_slice().to_vec();
            for _ in 0..rng.gen_range(0..8) {
                if v.is_empty() {
                    break;
                }
                let at = rng.gen_range(0..v.len());
                v[at] = alphabet[rng.gen_range(0..alphabet.len())];
            }
            TokenSequence::new(v)
        } else {
            {
                let len = rng.gen_range(0..=512);
                random_tokens(&mut rng, len, alphabet)
            }
        };
        let (fast, dp) = (edit_distance_fast(&a, &b), edit_distance_dp(&a, &b));
        if fast != dp {
            return Err(format!(
                "pair {i}: fast {} vs dp {}",
                fast.distance, dp.distance
            ));
        }
    }
    Ok(format!("{pairs} pairs, 0 mismatches"))
}

fn criterion_4() -> Result<String, String> {
    let dir = tempfile::tempdir().unwrap();
    let mut results = Vec::new();
    for (label, under, equal, over, expected) in [
        ("official", 0, 20, 0, (0, 100, 0)),
        ("baseline", 2, 10, 8, (10, 50, 40)),
    ] {
        let mut reference = String::new();
        let mut hypothesis = String::new();
        let kinds = std::iter::repeat_n(-1i32, under)
            .chain(std::iter::repeat_n(0, equal))
            .chain(std::iter::repeat_n(1, over));
        for (i, kind) in kinds.enumerate() {
            let session = format!("S{i:02}");
            let oracle = 2 + i % 3;
            let estimated = (oracle as i32 + kind) as usize;
            for k in 0..oracle {
                reference.push_str(&format!(
                    "{session}\tR{k}\t{}\t{}\t会议{k}\n",
                    k * 1000,
                    k * 1000 + 900
                ));
            }
            for k in 0..estimated {
                hypothesis.push_str(&format!(
                    "{session}\tH{k}\t{}\t{}\t会议{k}\n",
                    k * 1000,
                    k * 1000 + 900
                ));
            }
        }
        let r = write(dir.path(), &format!("{label}_ref.tsv"), &reference);
        let h = write(dir.path(), &format!("{label}_hyp.tsv"), &hypothesis);
        let report = json_report(&cpcer_cli(&[
            "score",
            "--ref",
            &r,
            "--hyp",
            &h,
            "--report-format",
            "json",
        ]));
        let sc = &report["speaker_counting"];
        let got = (
            sc["pct_under"].as_u64().unwrap(),
            sc["pct_equal"].as_u64().unwrap(),
            sc["pct_over"].as_u64().unwrap(),
        );
        if sc["sessions"] != 20 || got != expected {
            return Err(format!("{label}: got {got:?}, expected {expected:?}"));
        }
        results.push(format!("{label} {got:?}"));
    }
    Ok(results.join(", "))
}

fn criterion_5() -> Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let len = 20_000;
    let refs: Vec<TokenSequence> = (0..4)
        .map(|_| random_tokens(&mut rng, len, MIXED_ALPHABET))
        .collect();
    // Hypotheses are noisy copies so the optimum is a non-trivial permutation.
    let hyps: Vec<TokenSequence> = [2usize, 0, 3, 1]
        .iter()
        .map(|&k| {
            let mut v = refs[k].as_slice().to_vec();
            for _ in 0..len / 10 {
                let at = rng.gen_range(0..v.len());
                v[at] = MIXED_ALPHABET[rng.gen_range(0..MIXED_ALPHABET.len())];
            }
            TokenSequence::new(v)
        })
        .collect();
    let stream = |id: String, t: &TokenSequence| SpeakerStream {
        speaker: cpcer::corpus::SpeakerLabel::Named(id),
        tokens: t.clone(),
        source_segment_count: 1,
    };
    let pair = |refs: &[TokenSequence], hyps: &[TokenSequence]| {
        SessionPair::new(
            "perf",
            refs.iter()
                .enumerate()
                .map(|(k, t)| stream(format!("R{k}"), t))
                .collect(),
            hyps.iter()
                .enumerate()
                .map(|(k, t)| stream(format!("H{k}"), t))
                .collect(),
        )
        .unwrap()
    };

    let full = pair(&refs, &hyps);
    let started = Instant::now();
    let outcome = score_session(&full).map_err(|e| e.to_string())?;
    let elapsed = started.elapsed();
    if elapsed >= Duration::from_secs(5) {
        return Err(format!("score_session took {elapsed:.2?}, limit 5 s"));
    }
    if outcome.permutation != [1, 3, 0, 2] {
        return Err(format!("unexpected pairing {:?}", outcome.permutation));
    }

    // Truncated variant: every cell through the DP path, then enumeration.
    let short = 2_000;
    let refs_t: Vec<TokenSequence> = refs.iter().map(|t| t.truncated(short)).collect();
    let hyps_t: Vec<TokenSequence> = hyps.iter().map(|t| t.truncated(short)).collect();
    let truncated = pair(&refs_t, &hyps_t);
    let fast = score_session(&truncated).map_err(|e| e.to_string())?;
    let padded = pad_to_equal(&truncated);
    let dp_rows: Vec<Vec<u64>> = padded
        .ref_streams
        .iter()
        .map(|r| {
            padded
                .hyp_streams
                .iter()
                .map(|h| edit_distance_dp(&r.tokens, &h.tokens).distance)
                .collect()
        })
        .collect();
    let dp_matrix = CostMatrix::from_rows(&dp_rows);
    if dp_matrix != build_cost_matrix(&padded) {
        return Err("truncated cost matrix differs between fast and DP paths".into());
    }
    let dp_min = all_permutations(4)
        .iter()
        .map(|p| dp_matrix.cost_of(p))
        .min()
        .unwrap();
    if dp_min != fast.min_distance {
        return Err(format!(
            "truncated variant: DP {dp_min} vs fast {}",
            fast.min_distance
        ));
    }
    Ok(format!(
        "4x4 x {len} tokens in {elapsed:.2?}; {short}-token DP agrees ({dp_min})"
    ))
}

struct FixtureCorpus {
    reference: String,
    hypothesis: String,
}

/// Sessions with 1-5 reference speakers, shuffled record order, and a
/// hypothesis with substitutions, dropped and split speakers.
fn fixture_corpus(rng: &mut ChaCha8Rng, sessions: usize) -> FixtureCorpus {
    let mut ref_lines = Vec::new();
    let mut hyp_lines = Vec::new();
    for s in 0..sessions {
        let session = format!("M{s:03}");
        let speakers = 1 + s % 5;
        for k in 0..speakers {
            for u in 0..rng.gen_range(1..5) {
                let start = u * 4000 + k * 500;
                let len = rng.gen_range(0..30);
                let text = random_text(rng, len);
                ref_lines.push(format!(
                    "{session}\tspk{k}\t{start}\t{}\t{text}",
                    start + 3000
                ));
                let mut noisy: Vec<char> = text.chars().collect();
                if !noisy.is_empty() && rng.gen_bool(0.5) {
                    let at = rng.gen_range(0..noisy.len());
                    noisy[at] = '错';
                }
                let hyp_speaker = match rng.gen_range(0..10) {
                    0 => speakers + 1,
                    1 => 0,
                    _ => speakers - 1 - k,
                };
                let text: String = noisy.into_iter().collect();
                hyp_lines.push(format!(
                    "{session}\tsys{hyp_speaker}\t{start}\t{}\t{text}",
                    start + 3000
                ));
            }
        }
    }
    ref_lines.shuffle(rng);
    hyp_lines.shuffle(rng);
    let join = |v: Vec<String>| v.into_iter().map(|l| l + "\n").collect::<String>();
    FixtureCorpus {
        reference: join(ref_lines),
        hypothesis: join(hyp_lines),
    }
}

fn criterion_6() -> Result<String, String> {
    let dir = tempfile::tempdir().unwrap();
    let corpus = fixture_corpus(&mut ChaCha8Rng::seed_from_u64(6), 30);
    let r = write(dir.path(), "ref.tsv", &corpus.reference);
    let h = write(dir.path(), "hyp.tsv", &corpus.hypothesis);
    let mut outputs = Vec::new();
    for jobs in ["1", "8"] {
        for algorithm in ["hungarian", "bruteforce"] {
            let out = cpcer_cli(&[
                "score",
                "--ref",
                &r,
                "--hyp",
                &h,
                "--report-format",
                "json",
                "--jobs",
                jobs,
                "--algorithm",
                algorithm,
            ]);
            if !out.status.success() {
                return Err(format!(
                    "jobs={jobs} {algorithm}: {}",
                    String::from_utf8_lossy(&out.stderr)
                ));
            }
            outputs.push((format!("jobs={jobs} {algorithm}"), out.stdout));
        }
    }
    for (label, bytes) in &outputs[1..] {
        if bytes != &outputs[0].1 {
            return Err(format!("{label} differs from {}", outputs[0].0));
        }
    }
    let report: Value = serde_json::from_slice(&outputs[0].1).unwrap();
    let micro = &report["groups"].as_array().unwrap().last().unwrap()["micro_cpcer"];
    Ok(format!(
        "4 runs byte-identical ({} bytes, micro {micro}%)",
        outputs[0].1.len()
    ))
}

fn mutate(rng: &mut ChaCha8Rng, input: &[u8]) -> Vec<u8> {
    let mut v = input.to_vec();
    for _ in 0..rng.gen_range(1..4) {
        let at = if v.is_empty() {
            0
        } else {
            rng.gen_range(0..v.len())
        };
        match rng.gen_range(0..7) {
            0 if !v.is_empty() => v[at] = rng.gen(),
            1 if !v.is_empty() => {
                v.remove(at);
            }
            2 => v.insert(
                at,
                *[b'\t', b'\n', b'-', b'{', b'"', b'#', 0xff, 0xe4]
                    .choose(rng)
                    .unwrap(),
            ),
            3 => v.truncate(at),
            4 => {
                let end = (at + rng.gen_range(1..20)).min(v.len());
                let chunk = v[at..end].to_vec();
                v.splice(at..at, chunk);
            }
            5 => v
                .splice(at..at, b"99999999999999999999999".iter().copied())
                .for_each(drop),
            _ => v.insert(at, b'\r'),
        }
    }
    v
}

fn located(message: &str) -> bool {
    message.contains("line ") || message.contains("$")
}

fn criterion_7() -> Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let tsv_seed = "# meeting\nsession\tspeaker\tstart\tend\ttext\nS1\tA\t0\t1200\t你好世界\nS1\tB\t1300\t2000\t会议\nS2\tA\t5\t9\tok\n";
    let json_seed = r#"[{"session":"S1","speaker":"A","start_ms":0,"end_ms":1200,"text":"你好"},
        {"session":"S1","speaker":"B","start_ms":1300,"end_ms":2000,"text":"会议"}]"#;

    // In-process: no panics, every rejection located.
    let mut rejected = 0;
    let cases = 20_000;
    for i in 0..cases {
        let (bytes, is_json) = if i % 2 == 0 {
            (mutate(&mut rng, tsv_seed.as_bytes()), false)
        } else {
            (mutate(&mut rng, json_seed.as_bytes()), true)
        };
        let result = panic::catch_unwind(AssertUnwindSafe(|| {
            if is_json {
                parse_segments_json(&bytes).map(|_| ())
            } else {
                parse_segments_tsv(&bytes).map(|_| ())
            }
        }))
        .map_err(|_| {
            format!(
                "parser panicked on case {i}: {:?}",
                String::from_utf8_lossy(&bytes)
            )
        })?;
        if let Err(e) = result {
            rejected += 1;
            if !located(&e.to_string()) {
                return Err(format!("rejection without location: {e}"));
            }
        }
    }

    // Through the binary: exit codes and located messages.
    let dir = tempfile::tempdir().unwrap();
    let good = write(dir.path(), "good.tsv", tsv_seed);
    let mut process_rejections = 0;
    for i in 0..150 {
        let is_json = i % 2 == 1;
        let bytes = mutate(
            &mut rng,
            if is_json {
                json_seed.as_bytes()
            } else {
                tsv_seed.as_bytes()
            },
        );
        let path = dir.path().join(format!("fuzz{i}"));
        std::fs::write(&path, &bytes).unwrap();
        let path = path.to_str().unwrap();
        let format = if is_json { "json" } else { "tsv" };
        let out = cpcer_cli(&[
            "score",
            "--ref",
            path,
            "--hyp",
            path,
            "--input-format",
            format,
            "--report-format",
            "json",
        ]);
        let stderr = String::from_utf8_lossy(&out.stderr);
        match out.status.code() {
            Some(0) => {}
            Some(2) => {
                process_rejections += 1;
                if !stderr.contains(path) || !located(&stderr) {
                    return Err(format!("exit 2 without path and location: {stderr}"));
                }
            }
            // An all-empty reference against a non-empty hypothesis cannot arise
            // with identical files; anything else is a contract break.
            other => return Err(format!("fuzz case {i} exited {other:?}: {stderr}")),
        }
    }

    let expect = |args: &[&str], code: i32, what: &str| -> Result<(), String> {
        let out = cpcer_cli(args);
        if out.status.code() != Some(code) {
            return Err(format!(
                "{what}: exit {:?}, expected {code}",
                out.status.code()
            ));
        }
        Ok(())
    };
    expect(&["score", "--ref", &good], 1, "missing --hyp")?;
    expect(
        &[
            "score",
            "--ref",
            &good,
            "--hyp",
            &good,
            "--report-format",
            "xml",
        ],
        1,
        "bad report format",
    )?;
    expect(
        &["score", "--ref", "/no/such/file.tsv", "--hyp", &good],
        2,
        "missing file",
    )?;
    let empty_ref = write(dir.path(), "empty_ref.tsv", "S1\tA\t0\t10\t \n");
    let talky_hyp = write(dir.path(), "talky_hyp.tsv", "S1\t1\t0\t10\t你好\n");
    expect(
        &["score", "--ref", &empty_ref, "--hyp", &talky_hyp],
        3,
        "empty reference",
    )?;
    let crowd: String = (0..9).map(|k| format!("S1\tspk{k}\t0\t10\tx\n")).collect();
    let crowd = write(dir.path(), "crowd.tsv", &crowd);
    expect(
        &[
            "score",
            "--ref",
            &crowd,
            "--hyp",
            &crowd,
            "--algorithm",
            "bruteforce",
        ],
        3,
        "bruteforce guard",
    )?;

    Ok(format!(
        "{cases} in-process cases ({rejected} located rejections), 150 CLI runs ({process_rejections} exit 2), exit codes 1/2/3 verified"
    ))
}

type Criterion = fn() -> Result<String, String>;

fn main() {
    let criteria: [(&str, Criterion); 7] = [
        ("assignment-enumeration equivalence", criterion_1),
        ("cpCER fixture exactness", criterion_2),
        ("edit-distance oracle equivalence", criterion_3),
        ("speaker-counting table reproduction", criterion_4),
        ("performance on 4x4 x 20k-token session", criterion_5),
        ("report determinism across jobs and algorithms", criterion_6),
        ("parser robustness and exit codes", criterion_7),
    ];
    // Keep panics from individual criteria out of the summary lines.
    panic::set_hook(Box::new(|_| {}));
    let mut failures = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let result = panic::catch_unwind(check).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panic".into());
            Err(format!("panicked: {msg}"))
        });
        match result {
            Ok(detail) => println!("PASS [{}] {name}: {detail}", i + 1),
            Err(detail) => {
                failures += 1;
                println!("FAIL [{}] {name}: {detail}", i + 1);
            }
        }
    }
    println!(
        "{} of {} criteria passed",
        criteria.len() - failures,
        criteria.len()
    );
    if failures > 0 {
        std::process::exit(1);
    }
}
