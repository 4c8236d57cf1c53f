//! Session-level speaker alignment and cpCER.
//!
//! Reference and hypothesis speaker sets are padded with blank speakers to
//! equal size, every reference/hypothesis pair is scored with the edit
//! distance, and the speaker bijection with the smallest summed distance is
//! selected. Because the session cost is a sum of independent pair costs,
//! the minimum over all permutations is a linear assignment problem; the
//! literal enumeration is kept in [`brute_force_assignment`].

use std::collections::HashSet;
use std::fmt;

use rayon::prelude::*;

use crate::corpus::{SpeakerLabel, SpeakerStream};
use crate::editdist::edit_distance_fast;

/// Largest speaker count [`brute_force_assignment`] accepts.
pub const BRUTE_FORCE_MAX_SPEAKERS: usize = 8;

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum AlignError {
    #[error(
        "session {session}: reference has no tokens but the hypothesis does; cpCER is undefined"
    )]
    EmptyReference { session: String },
    #[error("{speakers} speakers exceed the exhaustive search limit of {limit}")]
    TooManySpeakers { speakers: usize, limit: usize },
    #[error("session {session}: duplicate {side} speaker {speaker}")]
    DuplicateSpeaker {
        session: String,
        side: &'static str,
        speaker: String,
    },
}

/// Reference (`Y`) and hypothesis (`H`) speaker streams of one session.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SessionPair {
    pub session_id: String,
    pub ref_streams: Vec<SpeakerStream>,
    pub hyp_streams: Vec<SpeakerStream>,
}

impl SessionPair {
    pub fn new(
        session_id: impl Into<String>,
        ref_streams: Vec<SpeakerStream>,
        hyp_streams: Vec<SpeakerStream>,
    ) -> Result<Self, AlignError> {
        let session_id = session_id.into();
        for (side, streams) in [("reference", &ref_streams), ("hypothesis", &hyp_streams)] {
            let mut seen = HashSet::new();
            for s in streams {
                if !seen.insert(&s.speaker) {
                    return Err(AlignError::DuplicateSpeaker {
                        session: session_id.clone(),
                        side,
                        speaker: s.speaker.to_string(),
                    });
                }
            }
        }
        Ok(SessionPair {
            session_id,
            ref_streams,
            hyp_streams,
        })
    }

    pub fn oracle_speakers(&self) -> usize {
        self.ref_streams
            .iter()
            .filter(|s| !s.speaker.is_blank())
            .count()
    }

    pub fn estimated_speakers(&self) -> usize {
        self.hyp_streams
            .iter()
            .filter(|s| !s.speaker.is_blank())
            .count()
    }

    /// `max(S, Ŝ)`: the size of both sides after padding.
    pub fn padded_size(&self) -> usize {
        self.ref_streams.len().max(self.hyp_streams.len())
    }

    pub fn total_ref_tokens(&self) -> u64 {
        self.ref_streams.iter().map(|s| s.tokens.len() as u64).sum()
    }
}

/// Appends blank speakers to the smaller side so both have `max(S, Ŝ)` streams.
pub fn pad_to_equal(pair: &SessionPair) -> SessionPair {
    let n = pair.padded_size();
    let pad = |streams: &[SpeakerStream]| {
        let mut out = streams.to_vec();
        let missing = n - streams.len();
        out.extend((0..missing).map(SpeakerStream::blank));
        out
    };
    SessionPair {
        session_id: pair.session_id.clone(),
        ref_streams: pad(&pair.ref_streams),
        hyp_streams: pad(&pair.hyp_streams),
    }
}

/// Square matrix of pairwise distances, `cell(i, j) = d(Y[i], H[j])`.
#[derive(Clone, PartialEq, Eq)]
pub struct CostMatrix {
    size: usize,
    cells: Vec<u64>,
}

impl CostMatrix {
    pub fn from_rows(rows: &[Vec<u64>]) -> Self {
        let size = rows.len();
        assert!(
            rows.iter().all(|r| r.len() == size),
            "cost matrix must be square"
        );
        CostMatrix {
            size,
            cells: rows.concat(),
        }
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn get(&self, row: usize, col: usize) -> u64 {
        self.cells[row * self.size + col]
    }

    pub fn rows(&self) -> Vec<Vec<u64>> {
        if self.size == 0 {
            return Vec::new();
        }
        self.cells.chunks(self.size).map(<[u64]>::to_vec).collect()
    }

    pub fn cost_of(&self, permutation: &[usize]) -> u64 {
        permutation
            .iter()
            .enumerate()
            .map(|(i, &j)| self.get(i, j))
            .sum()
    }
}

impl fmt::Debug for CostMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_list().entries(self.rows()).finish()
    }
}

/// Computes every cell with the bit-parallel edit distance, in parallel.
///
/// The pair must already be padded.
pub fn build_cost_matrix(pair: &SessionPair) -> CostMatrix {
    let size = pair.ref_streams.len();
    assert_eq!(
        size,
        pair.hyp_streams.len(),
        "build_cost_matrix needs a padded pair"
    );
    let cells = (0..size * size)
        .into_par_iter()
        .map(|k| {
            let (i, j) = (k / size, k % size);
            edit_distance_fast(&pair.ref_streams[i].tokens, &pair.hyp_streams[j].tokens).distance
        })
        .collect();
    CostMatrix { size, cells }
}

/// A bijection `row -> permutation[row]` and its summed cost.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Assignment {
    pub permutation: Vec<usize>,
    pub total: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum AssignmentAlgorithm {
    #[default]
    Hungarian,
    BruteForce,
}

impl AssignmentAlgorithm {
    pub fn solve(self, m: &CostMatrix) -> Result<Assignment, AlignError> {
        match self {
            AssignmentAlgorithm::Hungarian => Ok(min_assignment(m)),
            AssignmentAlgorithm::BruteForce => brute_force_assignment(m),
        }
    }
}

/// Minimum-cost assignment in O(n³) via shortest augmenting paths with
/// potentials. Among optimal bijections the lexicographically smallest is
/// returned.
pub fn min_assignment(m: &CostMatrix) -> Assignment {
    let n = m.size();
    if n == 0 {
        return Assignment {
            permutation: Vec::new(),
            total: 0,
        };
    }
    let (row_pot, col_pot) = hungarian_potentials(m);

    // With optimal duals, the optimal bijections are exactly the perfect
    // matchings that use only zero-reduced-cost edges.
    let tight: Vec<Vec<bool>> = (0..n)
        .map(|i| {
            (0..n)
                .map(|j| m.get(i, j) as i64 - row_pot[i] - col_pot[j] == 0)
                .collect()
        })
        .collect();

    let mut permutation = Vec::with_capacity(n);
    let mut col_used = vec![false; n];
    for row in 0..n {
        let col = (0..n)
            .find(|&j| {
                if col_used[j] || !tight[row][j] {
                    return false;
                }
                col_used[j] = true;
                let ok = has_perfect_matching(&tight, row + 1, &col_used);
                col_used[j] = false;
                ok
            })
            .expect("optimal duals always admit a tight perfect matching");
        col_used[col] = true;
        permutation.push(col);
    }
    let total = m.cost_of(&permutation);
    Assignment { permutation, total }
}

/// Row and column potentials at optimality (`row[i] + col[j] <= c(i, j)`,
/// with equality on some optimal bijection).
fn hungarian_potentials(m: &CostMatrix) -> (Vec<i64>, Vec<i64>) {
    let n = m.size();
    // 1-based; index 0 is the virtual start column.
    let mut u = vec![0i64; n + 1];
    let mut v = vec![0i64; n + 1];
    let mut matched_row = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];

    for row in 1..=n {
        matched_row[0] = row;
        let mut col0 = 0;
        let mut min_slack = vec![i64::MAX; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[col0] = true;
            let r = matched_row[col0];
            let mut delta = i64::MAX;
            let mut next = 0;
            for col in 1..=n {
                if used[col] {
                    continue;
                }
                let reduced = m.get(r - 1, col - 1) as i64 - u[r] - v[col];
                if reduced < min_slack[col] {
                    min_slack[col] = reduced;
                    way[col] = col0;
                }
                if min_slack[col] < delta {
                    delta = min_slack[col];
                    next = col;
                }
            }
            for col in 0..=n {
                if used[col] {
                    u[matched_row[col]] += delta;
                    v[col] -= delta;
                } else {
                    min_slack[col] -= delta;
                }
            }
            col0 = next;
            if matched_row[col0] == 0 {
                break;
            }
        }
        loop {
            let prev = way[col0];
            matched_row[col0] = matched_row[prev];
            col0 = prev;
            if col0 == 0 {
                break;
            }
        }
    }
    (u[1..].to_vec(), v[1..].to_vec())
}

/// Whether rows `first_row..` can be matched into the unused columns using
/// only allowed edges (Kuhn's augmenting paths).
fn has_perfect_matching(allowed: &[Vec<bool>], first_row: usize, col_used: &[bool]) -> bool {
    let n = allowed.len();
    let mut owner: Vec<Option<usize>> = vec![None; n];

    fn augment(
        row: usize,
        allowed: &[Vec<bool>],
        col_used: &[bool],
        owner: &mut [Option<usize>],
        visited: &mut [bool],
    ) -> bool {
        for col in 0..allowed.len() {
            if col_used[col] || !allowed[row][col] || visited[col] {
                continue;
            }
            visited[col] = true;
            let free = match owner[col] {
                None => true,
                Some(other) => augment(other, allowed, col_used, owner, visited),
            };
            if free {
                owner[col] = Some(row);
                return true;
            }
        }
        false
    }

    (first_row..n).all(|row| {
        let mut visited = vec![false; n];
        augment(row, allowed, col_used, &mut owner, &mut visited)
    })
}

/// Exhaustive search over all permutations in lexicographic order, keeping
/// the first strict minimum.
pub fn brute_force_assignment(m: &CostMatrix) -> Result<Assignment, AlignError> {
    let n = m.size();
    if n > BRUTE_FORCE_MAX_SPEAKERS {
        return Err(AlignError::TooManySpeakers {
            speakers: n,
            limit: BRUTE_FORCE_MAX_SPEAKERS,
        });
    }
    let mut perm: Vec<usize> = (0..n).collect();
    let mut best = Assignment {
        total: m.cost_of(&perm),
        permutation: perm.clone(),
    };
    while next_permutation(&mut perm) {
        let total = m.cost_of(&perm);
        if total < best.total {
            best = Assignment {
                permutation: perm.clone(),
                total,
            };
        }
    }
    Ok(best)
}

fn next_permutation(p: &mut [usize]) -> bool {
    let Some(i) = p.windows(2).rposition(|w| w[0] < w[1]) else {
        return false;
    };
    let j = p.iter().rposition(|&x| x > p[i]).unwrap();
    p.swap(i, j);
    p[i + 1..].reverse();
    true
}

/// Result of scoring one session.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AlignmentOutcome {
    pub session_id: String,
    /// Padded reference speakers, in row order.
    pub ref_speakers: Vec<SpeakerLabel>,
    /// Padded hypothesis speakers, in column order.
    pub hyp_speakers: Vec<SpeakerLabel>,
    /// `permutation[i]` is the hypothesis index paired with reference `i`.
    pub permutation: Vec<usize>,
    pub costs: CostMatrix,
    pub min_distance: u64,
    pub total_ref_tokens: u64,
    pub oracle_speakers: usize,
    pub estimated_speakers: usize,
}

impl AlignmentOutcome {
    /// cpCER in percent. Zero for a session with no tokens on either side.
    pub fn cpcer(&self) -> f64 {
        if self.total_ref_tokens == 0 {
            0.0
        } else {
            self.min_distance as f64 / self.total_ref_tokens as f64 * 100.0
        }
    }

    /// Matched `(reference, hypothesis, distance)` triples in reference order.
    pub fn pairs(&self) -> impl Iterator<Item = (&SpeakerLabel, &SpeakerLabel, u64)> + '_ {
        self.permutation.iter().enumerate().map(|(i, &j)| {
            (
                &self.ref_speakers[i],
                &self.hyp_speakers[j],
                self.costs.get(i, j),
            )
        })
    }
}

pub fn score_session(pair: &SessionPair) -> Result<AlignmentOutcome, AlignError> {
    score_session_with(pair, AssignmentAlgorithm::Hungarian)
}

pub fn score_session_with(
    pair: &SessionPair,
    algorithm: AssignmentAlgorithm,
) -> Result<AlignmentOutcome, AlignError> {
    let total_ref_tokens = pair.total_ref_tokens();
    if total_ref_tokens == 0 && pair.hyp_streams.iter().any(|s| !s.tokens.is_empty()) {
        return Err(AlignError::EmptyReference {
            session: pair.session_id.clone(),
        });
    }
    let padded = pad_to_equal(pair);
    let costs = build_cost_matrix(&padded);
    let best = algorithm.solve(&costs)?;
    Ok(AlignmentOutcome {
        session_id: pair.session_id.clone(),
        ref_speakers: padded
            .ref_streams
            .iter()
            .map(|s| s.speaker.clone())
            .collect(),
        hyp_speakers: padded
            .hyp_streams
            .iter()
            .map(|s| s.speaker.clone())
            .collect(),
        permutation: best.permutation,
        costs,
        min_distance: best.total,
        total_ref_tokens,
        oracle_speakers: pair.oracle_speakers(),
        estimated_speakers: pair.estimated_speakers(),
    })
}
