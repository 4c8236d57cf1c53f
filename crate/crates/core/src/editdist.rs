//! Exact Levenshtein distance over token sequences.
//!
//! [`edit_distance_fast`] is a blocked bit-parallel implementation of Myers'
//! algorithm and is what scoring uses. [`edit_distance_dp`] is the textbook
//! dynamic program, kept as the reference the fast path is tested against.

use std::collections::HashMap;

use crate::textnorm::TokenSequence;

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum RateError {
    #[error("reference is empty; error rate is undefined")]
    EmptyReference,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EditDistanceResult {
    pub distance: u64,
    pub ref_length: u64,
    pub hyp_length: u64,
}

impl EditDistanceResult {
    fn new(distance: u64, a: &[char], b: &[char]) -> Self {
        EditDistanceResult {
            distance,
            ref_length: a.len() as u64,
            hyp_length: b.len() as u64,
        }
    }
}

/// Unit-cost Levenshtein distance by the O(|a|·|b|) dynamic program.
pub fn edit_distance_dp(a: &TokenSequence, b: &TokenSequence) -> EditDistanceResult {
    let (a, b) = (a.as_slice(), b.as_slice());
    EditDistanceResult::new(dp_distance(a, b), a, b)
}

fn dp_distance(a: &[char], b: &[char]) -> u64 {
    let mut prev: Vec<u64> = (0..=b.len() as u64).collect();
    let mut curr = vec![0u64; b.len() + 1];
    for (i, &x) in a.iter().enumerate() {
        curr[0] = i as u64 + 1;
        for (j, &y) in b.iter().enumerate() {
            let sub = prev[j] + u64::from(x != y);
            curr[j + 1] = sub.min(prev[j + 1] + 1).min(curr[j] + 1);
        }
        std::mem::swap(&mut prev, &mut curr);
    }
    prev[b.len()]
}

/// Unit-cost Levenshtein distance, bit-parallel. Always equal to
/// [`edit_distance_dp`].
pub fn edit_distance_fast(a: &TokenSequence, b: &TokenSequence) -> EditDistanceResult {
    let (a, b) = (a.as_slice(), b.as_slice());
    EditDistanceResult::new(fast_distance(a, b), a, b)
}

fn fast_distance(a: &[char], b: &[char]) -> u64 {
    let prefix = a.iter().zip(b).take_while(|(x, y)| x == y).count();
    let (a, b) = (&a[prefix..], &b[prefix..]);
    let suffix = a
        .iter()
        .rev()
        .zip(b.iter().rev())
        .take_while(|(x, y)| x == y)
        .count();
    let (a, b) = (&a[..a.len() - suffix], &b[..b.len() - suffix]);

    // The shorter side becomes the bit-vector pattern.
    let (pattern, text) = if a.len() <= b.len() { (a, b) } else { (b, a) };
    if pattern.is_empty() {
        return text.len() as u64;
    }
    let peq = PatternMasks::new(pattern);
    myers_blocked(&peq, pattern.len(), text)
}

/// Dense cap on `symbols × blocks` mask words before switching to the
/// per-block sparse table.
const DENSE_WORD_LIMIT: usize = 1 << 22;

/// Per-symbol match bitmasks for the pattern, one 64-bit word per block.
struct PatternMasks {
    ids: HashMap<char, u32>,
    blocks: usize,
    table: MaskTable,
}

enum MaskTable {
    /// `words[id * blocks + block]`
    Dense(Vec<u64>),
    /// Per block, `(id, mask)` sorted by id. At most 64 entries each.
    Sparse(Vec<Vec<(u32, u64)>>),
}

impl PatternMasks {
    fn new(pattern: &[char]) -> Self {
        let blocks = pattern.len().div_ceil(64);
        let mut ids: HashMap<char, u32> = HashMap::new();
        for &c in pattern {
            let next = ids.len() as u32;
            ids.entry(c).or_insert(next);
        }

        let table = if ids.len().saturating_mul(blocks) <= DENSE_WORD_LIMIT {
            let mut words = vec![0u64; ids.len() * blocks];
            for (i, c) in pattern.iter().enumerate() {
                words[ids[c] as usize * blocks + i / 64] |= 1u64 << (i % 64);
            }
            MaskTable::Dense(words)
        } else {
            let sparse = pattern
                .chunks(64)
                .map(|chunk| {
                    let mut entries: Vec<(u32, u64)> = Vec::new();
                    for (bit, c) in chunk.iter().enumerate() {
                        let id = ids[c];
                        match entries.binary_search_by_key(&id, |e| e.0) {
                            Ok(pos) => entries[pos].1 |= 1u64 << bit,
                            Err(pos) => entries.insert(pos, (id, 1u64 << bit)),
                        }
                    }
                    entries
                })
                .collect();
            MaskTable::Sparse(sparse)
        };
        PatternMasks { ids, blocks, table }
    }

    #[inline]
    fn mask(&self, id: Option<u32>, block: usize) -> u64 {
        let Some(id) = id else { return 0 };
        match &self.table {
            MaskTable::Dense(words) => words[id as usize * self.blocks + block],
            MaskTable::Sparse(per_block) => {
                let entries = &per_block[block];
                entries
                    .binary_search_by_key(&id, |e| e.0)
                    .map_or(0, |pos| entries[pos].1)
            }
        }
    }
}

/// Myers (1999) block recurrence. Vertical deltas of each 64-row block are
/// kept as positive/negative bit-vectors; the horizontal delta leaving a
/// block's top row carries into the next block.
fn myers_blocked(peq: &PatternMasks, m: usize, text: &[char]) -> u64 {
    let blocks = peq.blocks;
    let mut vp = vec![!0u64; blocks];
    let mut vn = vec![0u64; blocks];
    let last_bit = 1u64 << ((m - 1) % 64);
    let mut score = m as u64;

    for &c in text {
        let id = peq.ids.get(&c).copied();
        // Row 0 of the matrix grows by one per column.
        let mut hin: i8 = 1;
        for b in 0..blocks {
            let high = if b + 1 == blocks {
                last_bit
            } else {
                1u64 << 63
            };
            let pv = vp[b];
            let mv = vn[b];
            let mut eq = peq.mask(id, b);

            let xv = eq | mv;
            if hin < 0 {
                eq |= 1;
            }
            let xh = ((eq & pv).wrapping_add(pv) ^ pv) | eq;
            let mut ph = mv | !(xh | pv);
            let mut mh = pv & xh;

            let hout: i8 = if ph & high != 0 {
                1
            } else if mh & high != 0 {
                -1
            } else {
                0
            };

            ph <<= 1;
            mh <<= 1;
            if hin < 0 {
                mh |= 1;
            } else if hin > 0 {
                ph |= 1;
            }
            vp[b] = mh | !(xv | ph);
            vn[b] = ph & xv;
            hin = hout;
        }
        // `hin` now holds the delta out of the pattern's last row.
        match hin {
            1 => score += 1,
            -1 => score -= 1,
            _ => {}
        }
    }
    score
}

/// Character error rate: `distance / ref_length`. May exceed 1.
pub fn cer(reference: &TokenSequence, hypothesis: &TokenSequence) -> Result<f64, RateError> {
    if reference.is_empty() {
        return Err(RateError::EmptyReference);
    }
    let r = edit_distance_fast(reference, hypothesis);
    Ok(r.distance as f64 / r.ref_length as f64)
}
