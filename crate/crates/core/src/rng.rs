//! Keyed, replayable randomness.
//!
//! Every random choice in the pipeline is a pure function of a root seed, a purpose tag and a
//! handful of integer indices. Nothing draws from a shared stream, so results do not depend on
//! evaluation order or thread count.

use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

const P0: u64 = 0xa076_1d64_78bd_642f;
const P1: u64 = 0xe703_7ed1_a0b4_28db;
const P2: u64 = 0x8ebc_6af0_9c88_c6e3;
const P3: u64 = 0x5899_65cc_7537_4cc3;

#[inline(always)]
fn mum(a: u64, b: u64) -> u64 {
    let r = (a as u128).wrapping_mul(b as u128);
    (r as u64) ^ ((r >> 64) as u64)
}

#[inline(always)]
fn mix(a: u64, b: u64) -> u64 {
    let h = mum(a ^ P0, b ^ P1);
    let h = (h ^ (h >> 32)).wrapping_mul(P3);
    h ^ (h >> 29)
}

/// Domain separators. Distinct tags give unrelated substreams.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
#[repr(u8)]
pub enum Purpose {
    WalkInit = 1,
    CollisionLeft = 2,
    CollisionRight = 3,
    WalkQuery = 4,
    WalkQueryMirror = 5,
    SampleIs = 6,
    SampleS = 7,
    ConductanceSampling = 8,
    TieBreak = 9,
    Generator = 10,
    Derive = 11,
}

/// 128-bit root seed.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct Seed {
    root: u128,
}

impl Seed {
    pub const fn new(root: u128) -> Self {
        Seed { root }
    }

    pub fn root(&self) -> u128 {
        self.root
    }

    pub fn from_hex(s: &str) -> Result<Self> {
        let t = s.trim();
        let t = t.strip_prefix("0x").or_else(|| t.strip_prefix("0X")).unwrap_or(t);
        if t.is_empty() || t.len() > 32 {
            return Err(Error::usage(format!("seed must be 1..32 hex digits, got {s:?}")));
        }
        u128::from_str_radix(t, 16)
            .map(Seed::new)
            .map_err(|_| Error::usage(format!("seed is not hexadecimal: {s:?}")))
    }

    pub fn to_hex(&self) -> String {
        format!("{:032x}", self.root)
    }

    /// Child seed for an indexed sub-task (trial, round, instance size...).
    pub fn derive(&self, label: u64) -> Seed {
        let base = self.tag_state(Purpose::Derive);
        let hi = mix(base, label);
        let lo = mix(hi ^ P2, label.rotate_left(17) ^ P3);
        Seed::new(((hi as u128) << 64) | lo as u128)
    }

    #[inline]
    fn tag_state(&self, tag: Purpose) -> u64 {
        let lo = self.root as u64;
        let hi = (self.root >> 64) as u64;
        mix(mix(lo, hi), (tag as u64).wrapping_mul(P2))
    }

    /// 64 uniform bits for an arbitrary index tuple under `tag`.
    pub fn bits(&self, tag: Purpose, a: u64, b: u64) -> u64 {
        mix(mix(self.tag_state(tag), a), b)
    }

    /// Uniform integer in `0..bound` keyed by `(tag, a, b)`, exact via rejection.
    pub fn uniform_below(&self, tag: Purpose, a: u64, b: u64, bound: u64) -> u64 {
        assert!(bound > 0);
        let base = mix(self.tag_state(tag), a);
        let key = mix(base, b);
        reduce(key, bound, |retry| mix(key ^ P2, retry))
    }

    /// Uniform float in [0, 1).
    pub fn unit(&self, tag: Purpose, a: u64, b: u64) -> f64 {
        (self.bits(tag, a, b) >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Per-walk state; step draws are derived from it.
    #[inline]
    pub fn walk_stream(&self, tag: Purpose, start: u32, rep: u32, walk: u64) -> WalkStream {
        let h = mix(self.tag_state(tag), ((start as u64) << 32) | rep as u64);
        WalkStream { state: mix(h, walk) }
    }

    pub fn step_choice(&self, key: WalkKey, d: usize) -> StepChoice {
        self.walk_stream(key.tag, key.start, key.rep, key.walk).step(key.step, d)
    }
}

/// Lemire multiply-shift reduction with rejection; `redraw(i)` supplies the i-th retry.
#[inline(always)]
fn reduce(first: u64, bound: u64, mut redraw: impl FnMut(u64) -> u64) -> u64 {
    let mut x = first;
    let mut retry = 0u64;
    loop {
        let m = (x as u128) * (bound as u128);
        let lo = m as u64;
        if lo >= bound || lo >= bound.wrapping_neg() % bound {
            return (m >> 64) as u64;
        }
        retry += 1;
        x = redraw(retry);
    }
}

impl fmt::Debug for Seed {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Seed({})", self.to_hex())
    }
}

impl fmt::Display for Seed {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_hex())
    }
}

impl FromStr for Seed {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Seed::from_hex(s)
    }
}

impl Serialize for Seed {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_hex())
    }
}

impl<'de> Deserialize<'de> for Seed {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        Seed::from_hex(&s).map_err(serde::de::Error::custom)
    }
}

/// Full coordinates of one lazy-walk step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct WalkKey {
    pub tag: Purpose,
    pub start: u32,
    pub rep: u32,
    pub walk: u64,
    pub step: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StepChoice {
    Stay,
    Slot(usize),
}

#[derive(Debug, Clone, Copy)]
pub struct WalkStream {
    state: u64,
}

impl WalkStream {
    /// Raw outcome in `0..2d`: values below `d` mean stay, otherwise slot `value - d`.
    #[inline(always)]
    pub fn outcome(&self, step: u32, two_d: u64) -> u64 {
        let key = mix(self.state, step as u64);
        reduce(key, two_d, |retry| mix(key ^ P3, retry))
    }

    #[inline]
    pub fn step(&self, step: u32, d: usize) -> StepChoice {
        let c = self.outcome(step, 2 * d as u64) as usize;
        if c < d {
            StepChoice::Stay
        } else {
            StepChoice::Slot(c - d)
        }
    }
}

/// `count` vertex ids from `0..n`, deterministic in all inputs.
pub fn sample_vertices(
    seed: &Seed,
    tag: Purpose,
    count: usize,
    n: usize,
    with_replacement: bool,
) -> Result<Vec<u32>> {
    if count == 0 {
        return Err(Error::usage("sample count must be at least 1"));
    }
    if n == 0 {
        return Err(Error::usage("cannot sample from an empty vertex set"));
    }
    if with_replacement {
        return Ok((0..count)
            .map(|i| seed.uniform_below(tag, i as u64, 0, n as u64) as u32)
            .collect());
    }
    if count > n {
        return Err(Error::usage(format!(
            "cannot draw {count} distinct vertices from {n}"
        )));
    }
    // Floyd's algorithm: one keyed draw per output, exact uniform subset.
    let mut chosen = HashSet::with_capacity(count);
    let mut out = Vec::with_capacity(count);
    for (i, j) in (n - count..n).enumerate() {
        let r = seed.uniform_below(tag, i as u64, 1, j as u64 + 1) as u32;
        let pick = if chosen.contains(&r) { j as u32 } else { r };
        chosen.insert(pick);
        out.push(pick);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn key(tag: Purpose, walk: u64) -> WalkKey {
        WalkKey { tag, start: 3, rep: 0, walk, step: 0 }
    }

    #[test]
    fn step_choice_is_deterministic() {
        let s = Seed::new(42);
        let k = key(Purpose::WalkInit, 7);
        assert_eq!(s.step_choice(k, 5), s.step_choice(k, 5));
    }

    #[test]
    fn stay_frequency_is_one_half() {
        let s = Seed::new(0xfeed);
        let draws = 1_000_000u64;
        let stays = (0..draws)
            .filter(|&w| s.step_choice(key(Purpose::WalkInit, w), 4) == StepChoice::Stay)
            .count() as f64;
        let freq = stays / draws as f64;
        // 3 sigma of Binomial(1e6, 1/2) in frequency units.
        let sigma = (0.25 / draws as f64).sqrt();
        assert!((freq - 0.5).abs() <= 3.0 * sigma, "stay frequency {freq}");
    }

    #[test]
    fn slots_are_uniform() {
        let s = Seed::new(9);
        let d = 6;
        let mut counts = vec![0u64; d];
        let draws = 600_000u64;
        for w in 0..draws {
            if let StepChoice::Slot(i) = s.step_choice(key(Purpose::WalkQuery, w), d) {
                counts[i] += 1;
            }
        }
        let total: u64 = counts.iter().sum();
        let e = total as f64 / d as f64;
        let chi2: f64 = counts.iter().map(|&c| (c as f64 - e).powi(2) / e).sum();
        // chi-square with 5 dof: p = 0.001 at 20.52
        assert!(chi2 < 20.52, "chi2 {chi2}");
    }

    #[test]
    fn distinct_tags_look_independent() {
        // 2x2 contingency of stay/move under two tags on the same key fields.
        let s = Seed::new(77);
        let mut table = [[0f64; 2]; 2];
        let n = 100_000u64;
        for w in 0..n {
            let a = s.step_choice(key(Purpose::WalkInit, w), 4) == StepChoice::Stay;
            let b = s.step_choice(key(Purpose::WalkQuery, w), 4) == StepChoice::Stay;
            table[a as usize][b as usize] += 1.0;
        }
        let rows = [table[0][0] + table[0][1], table[1][0] + table[1][1]];
        let cols = [table[0][0] + table[1][0], table[0][1] + table[1][1]];
        let mut chi2 = 0.0;
        for i in 0..2 {
            for j in 0..2 {
                let e = rows[i] * cols[j] / n as f64;
                chi2 += (table[i][j] - e).powi(2) / e;
            }
        }
        // chi-square with 1 dof: p = 0.001 at 10.83
        assert!(chi2 < 10.83, "chi2 {chi2}");
    }

    #[test]
    fn sampling_single_vertex_graph() {
        let v = sample_vertices(&Seed::new(1), Purpose::SampleIs, 10, 1, true).unwrap();
        assert!(v.iter().all(|&x| x == 0));
    }

    #[test]
    fn sampling_is_repeatable() {
        let s = Seed::new(5);
        let a = sample_vertices(&s, Purpose::SampleS, 50, 1000, false).unwrap();
        let b = sample_vertices(&s, Purpose::SampleS, 50, 1000, false).unwrap();
        assert_eq!(a, b);
        let distinct: HashSet<_> = a.iter().collect();
        assert_eq!(distinct.len(), 50);
    }

    #[test]
    fn sampling_frequencies_within_five_sigma() {
        let v = sample_vertices(&Seed::new(11), Purpose::SampleIs, 100_000, 100, true).unwrap();
        let mut counts = [0u32; 100];
        for x in v {
            counts[x as usize] += 1;
        }
        let sigma = (100_000f64 * 0.01 * 0.99).sqrt();
        for c in counts {
            assert!((c as f64 - 1000.0).abs() <= 5.0 * sigma, "count {c}");
        }
    }

    #[test]
    fn without_replacement_rejects_oversized_request() {
        assert!(sample_vertices(&Seed::new(1), Purpose::SampleS, 11, 10, false).is_err());
        assert_eq!(
            sample_vertices(&Seed::new(1), Purpose::SampleS, 10, 10, false).unwrap().len(),
            10
        );
    }

    #[test]
    fn hex_round_trip() {
        let s = Seed::new(0x0123_4567_89ab_cdef_0011_2233_4455_6677);
        assert_eq!(Seed::from_hex(&s.to_hex()).unwrap(), s);
        assert_eq!(Seed::from_hex("0x2a").unwrap(), Seed::new(42));
        assert!(Seed::from_hex("xyz").is_err());
    }

    #[test]
    fn derived_seeds_differ() {
        let s = Seed::new(3);
        assert_ne!(s.derive(0), s.derive(1));
        assert_eq!(s.derive(4), s.derive(4));
    }
}
