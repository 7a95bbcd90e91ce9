//! Erroneous-address characterization.
//!
//! Strategy 1 accumulates, over N reduced-pulse measurements, the union of
//! per-address error masks. Strategy 2 orders the erroneous addresses by the
//! decimal value of `intended ^ stored`, so errors in high-order bits rank as
//! the most severe.

use std::collections::BTreeMap;
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::device::{ChipModel, Environment, Word, WriteTimings, WORD_BITS};
use crate::error::{Error, Result};
use crate::pattern::Pattern;

/// Word every measurement round starts from.
pub const RESET_PATTERN: Word = 0xFFFF;

/// Accumulated errors of a characterization (or single evaluation) run.
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorMap {
    pub chip_id: String,
    pub t_w: f64,
    pub n_measurements: usize,
    pub pattern: String,
    pub capacity_words: usize,
    /// Address -> bits observed wrong at least once. Masks are never zero.
    pub erroneous: BTreeMap<u32, Word>,
    /// Erroneous-bit count of each round.
    pub per_measurement_counts: Vec<u64>,
}

impl ErrorMap {
    pub fn empty(
        chip_id: impl Into<String>,
        t_w: f64,
        pattern: impl Into<String>,
        capacity_words: usize,
    ) -> Self {
        ErrorMap {
            chip_id: chip_id.into(),
            t_w,
            n_measurements: 0,
            pattern: pattern.into(),
            capacity_words,
            erroneous: BTreeMap::new(),
            per_measurement_counts: Vec::new(),
        }
    }

    /// Builds a map from `(address, mask)` pairs; zero masks are dropped.
    pub fn from_masks(
        chip_id: impl Into<String>,
        t_w: f64,
        pattern: impl Into<String>,
        capacity_words: usize,
        masks: impl IntoIterator<Item = (u32, Word)>,
    ) -> Self {
        let mut map = Self::empty(chip_id, t_w, pattern, capacity_words);
        for (addr, mask) in masks {
            map.record(addr, mask);
        }
        map
    }

    fn record(&mut self, addr: u32, mask: Word) {
        if mask != 0 {
            *self.erroneous.entry(addr).or_insert(0) |= mask;
        }
    }

    /// Strategy 1: folds one measurement into the map. Every address whose
    /// read-back differs from the intended word joins the map, with the
    /// differing bits added to its mask.
    pub fn accumulate(&mut self, intended: &[Word], readback: &[Word]) -> Result<()> {
        if intended.len() != self.capacity_words || readback.len() != self.capacity_words {
            return Err(Error::Mismatch(format!(
                "measurement covers {}/{} words, map has {}",
                intended.len(),
                readback.len(),
                self.capacity_words
            )));
        }
        let mut bits = 0u64;
        for (a, (&want, &got)) in intended.iter().zip(readback).enumerate() {
            let x = want ^ got;
            bits += x.count_ones() as u64;
            self.record(a as u32, x);
        }
        self.n_measurements += 1;
        self.per_measurement_counts.push(bits);
        Ok(())
    }

    pub fn is_empty(&self) -> bool {
        self.erroneous.is_empty()
    }

    pub fn address_count(&self) -> usize {
        self.erroneous.len()
    }

    pub fn bit_count(&self) -> u64 {
        self.erroneous.values().map(|m| m.count_ones() as u64).sum()
    }

    pub fn contains(&self, addr: u32) -> bool {
        self.erroneous.contains_key(&addr)
    }

    pub fn mask(&self, addr: u32) -> Word {
        self.erroneous.get(&addr).copied().unwrap_or(0)
    }

    pub fn addresses(&self) -> impl Iterator<Item = u32> + '_ {
        self.erroneous.keys().copied()
    }

    /// Erroneous cells as `address * 16 + bit`.
    pub fn cells(&self) -> impl Iterator<Item = u64> + '_ {
        self.erroneous.iter().flat_map(|(&a, &m)| {
            (0..WORD_BITS)
                .filter(move |b| m >> b & 1 == 1)
                .map(move |b| a as u64 * WORD_BITS as u64 + b as u64)
        })
    }

    /// True when every erroneous cell of `self` is erroneous in `other`.
    pub fn is_subset_of(&self, other: &ErrorMap) -> bool {
        self.erroneous
            .iter()
            .all(|(a, &m)| m & !other.mask(*a) == 0)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&ErrorMapJson::from(self))?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        serde_json::from_str::<ErrorMapJson>(s)?.try_into()
    }
}

#[derive(Serialize, Deserialize)]
struct EntryJson {
    addr: String,
    mask: String,
}

#[derive(Serialize, Deserialize)]
struct ErrorMapJson {
    chip_id: String,
    t_w_ns: f64,
    n: usize,
    pattern: String,
    capacity_words: usize,
    #[serde(default)]
    per_measurement_counts: Vec<u64>,
    entries: Vec<EntryJson>,
}

impl From<&ErrorMap> for ErrorMapJson {
    fn from(m: &ErrorMap) -> Self {
        ErrorMapJson {
            chip_id: m.chip_id.clone(),
            t_w_ns: m.t_w,
            n: m.n_measurements,
            pattern: m.pattern.clone(),
            capacity_words: m.capacity_words,
            per_measurement_counts: m.per_measurement_counts.clone(),
            entries: m
                .erroneous
                .iter()
                .map(|(a, k)| EntryJson {
                    addr: format!("{a:#06x}"),
                    mask: format!("{k:#06x}"),
                })
                .collect(),
        }
    }
}

fn parse_hex(s: &str) -> Result<u32> {
    let digits = s.trim_start_matches("0x").trim_start_matches("0X");
    u32::from_str_radix(digits, 16).map_err(|e| Error::Parse(format!("hex value '{s}': {e}")))
}

impl TryFrom<ErrorMapJson> for ErrorMap {
    type Error = Error;

    fn try_from(j: ErrorMapJson) -> Result<Self> {
        let mut map = ErrorMap::empty(j.chip_id, j.t_w_ns, j.pattern, j.capacity_words);
        map.n_measurements = j.n;
        map.per_measurement_counts = j.per_measurement_counts;
        for e in j.entries {
            let addr = parse_hex(&e.addr)?;
            let mask = parse_hex(&e.mask)?;
            if addr as usize >= map.capacity_words {
                return Err(Error::Parse(format!("address {} beyond capacity", e.addr)));
            }
            if mask == 0 || mask > Word::MAX as u32 {
                return Err(Error::Parse(format!(
                    "mask {} is not a nonzero 16-bit word",
                    e.mask
                )));
            }
            map.record(addr, mask as Word);
        }
        Ok(map)
    }
}

/// Characterization output together with the last round's read-back.
#[derive(Debug, Clone)]
pub struct Characterization {
    pub map: ErrorMap,
    /// Data each address was meant to hold.
    pub intended: Vec<Word>,
    /// Contents read back after the final round.
    pub stored: Vec<Word>,
}

impl Characterization {
    pub fn sorted(&self, granularity: Granularity) -> Result<SortedAddressList> {
        sort_addresses(&self.map, &self.intended, &self.stored, granularity)
    }
}

pub fn chip_id(chip: &ChipModel) -> String {
    format!("{}-s{}", chip.profile().model_id, chip.seed())
}

/// Runs `n` reduced-pulse measurements of `pattern` and returns the union of
/// their error masks.
pub fn characterize(
    chip: &mut ChipModel,
    t_w: f64,
    n: usize,
    pattern: &Pattern,
    env: &Environment,
) -> Result<ErrorMap> {
    Ok(characterize_detailed(chip, t_w, n, pattern, env)?.map)
}

/// [`characterize`], also returning the intended data and the final read-back.
///
/// Every round resets the array to `0xFFFF`, writes the pattern at `t_w` and
/// reads it back at nominal timing. Rounds draw jitter from streams derived
/// from one value of the chip's own stream, so the result does not depend on
/// how rounds are scheduled and round `i` is identical for any `n > i`.
pub fn characterize_detailed(
    chip: &mut ChipModel,
    t_w: f64,
    n: usize,
    pattern: &Pattern,
    env: &Environment,
) -> Result<Characterization> {
    if n == 0 {
        return Err(Error::InvalidArgument(
            "number of measurements must be >= 1".into(),
        ));
    }
    let timings = WriteTimings::with_pulse_width(t_w);
    chip.kernel(&timings, env)?;
    let capacity = chip.capacity();
    let intended = pattern.materialize(capacity);
    let base = chip.next_stream_base();

    let rounds: Vec<Vec<Word>> = (0..n as u64)
        .into_par_iter()
        .map(|r| {
            let mut round = chip.fork(base, r);
            round.reset_memory(RESET_PATTERN);
            let kernel = round.kernel(&timings, env).expect("validated above");
            for (addr, &word) in intended.iter().enumerate() {
                round.write_with(addr, word, &kernel);
            }
            round.contents().to_vec()
        })
        .collect();

    let mut map = ErrorMap::empty(chip_id(chip), t_w, pattern.to_string(), capacity);
    for readback in &rounds {
        map.accumulate(&intended, readback)?;
    }
    let stored = rounds.into_iter().last().expect("n >= 1");
    chip.set_contents(stored.clone());
    Ok(Characterization {
        map,
        intended,
        stored,
    })
}

/// Unit over which strategy-2 severity is measured.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Granularity {
    /// XOR of the full 16-bit word.
    #[default]
    Word,
    /// Worst XOR of the two bytes, each treated as an independent datum.
    Byte,
}

impl Granularity {
    pub fn severity(self, intended: Word, stored: Word) -> u32 {
        let x = intended ^ stored;
        match self {
            Granularity::Word => x as u32,
            Granularity::Byte => (x >> 8).max(x & 0xFF) as u32,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SortedEntry {
    pub addr: u32,
    pub severity: u32,
    pub mask: Word,
}

/// Erroneous addresses in ascending severity, ties by ascending address.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SortedAddressList {
    pub entries: Vec<SortedEntry>,
}

impl SortedAddressList {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn addresses(&self) -> impl Iterator<Item = u32> + '_ {
        self.entries.iter().map(|e| e.addr)
    }
}

/// Strategy 2: orders the erroneous addresses of `map` by the severity of
/// `intended[a] ^ stored[a]`.
pub fn sort_addresses(
    map: &ErrorMap,
    intended: &[Word],
    stored: &[Word],
    granularity: Granularity,
) -> Result<SortedAddressList> {
    let mut entries = Vec::with_capacity(map.address_count());
    for (&addr, &mask) in &map.erroneous {
        let i = addr as usize;
        let (Some(&want), Some(&got)) = (intended.get(i), stored.get(i)) else {
            return Err(Error::Mismatch(format!(
                "address {addr:#06x} has no intended/stored data"
            )));
        };
        entries.push(SortedEntry {
            addr,
            severity: granularity.severity(want, got),
            mask,
        });
    }
    entries.sort_unstable_by_key(|e| (e.severity, e.addr));
    Ok(SortedAddressList { entries })
}

/// Table-style error statistics, all in percent.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorStats {
    pub e_a_pct: f64,
    pub e_b_pct: f64,
    pub m_a_pct: f64,
    pub m_b_pct: f64,
    /// Share of the evaluation's erroneous addresses already in the
    /// characterization set; absent when the evaluation has no errors.
    pub c_a_pct: Option<f64>,
    pub c_b_pct: Option<f64>,
}

/// Compares an evaluation map against the characterization map of the same chip.
pub fn compute_stats(characterization: &ErrorMap, evaluation: &ErrorMap) -> Result<ErrorStats> {
    if characterization.capacity_words != evaluation.capacity_words {
        return Err(Error::Mismatch(format!(
            "capacity {} vs {} words",
            characterization.capacity_words, evaluation.capacity_words
        )));
    }
    let words = characterization.capacity_words as f64;
    let bits = words * WORD_BITS as f64;
    let pct = |num: f64, den: f64| 100.0 * num / den;

    let eval_addrs = evaluation.address_count();
    let eval_bits = evaluation.bit_count();
    let common_addrs = evaluation
        .addresses()
        .filter(|&a| characterization.contains(a))
        .count();
    let common_bits: u64 = evaluation
        .erroneous
        .iter()
        .map(|(a, &m)| (m & characterization.mask(*a)).count_ones() as u64)
        .sum();

    Ok(ErrorStats {
        e_a_pct: pct(characterization.address_count() as f64, words),
        e_b_pct: pct(characterization.bit_count() as f64, bits),
        m_a_pct: pct(eval_addrs as f64, words),
        m_b_pct: pct(eval_bits as f64, bits),
        c_a_pct: (eval_addrs > 0).then(|| pct(common_addrs as f64, eval_addrs as f64)),
        c_b_pct: (eval_bits > 0).then(|| pct(common_bits as f64, eval_bits as f64)),
    })
}

pub const STATS_CSV_HEADER: [&str; 9] = [
    "chip", "pattern", "t_w_ns", "e_a_pct", "e_b_pct", "m_a_pct", "m_b_pct", "c_a_pct", "c_b_pct",
];

fn fmt_pct(v: f64) -> String {
    format!("{v:.4}")
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(fmt_pct).unwrap_or_else(|| "-".into())
}

impl ErrorStats {
    pub fn csv_record(&self, chip: &str, pattern: &str, t_w: f64) -> Vec<String> {
        vec![
            chip.to_string(),
            pattern.to_string(),
            format!("{t_w}"),
            fmt_pct(self.e_a_pct),
            fmt_pct(self.e_b_pct),
            fmt_pct(self.m_a_pct),
            fmt_pct(self.m_b_pct),
            fmt_opt(self.c_a_pct),
            fmt_opt(self.c_b_pct),
        ]
    }
}

/// Writes stats rows `(chip, pattern, t_w, stats)` as CSV with a header.
pub fn write_stats_csv<'a, W: Write>(
    out: W,
    rows: impl IntoIterator<Item = (&'a str, &'a str, f64, ErrorStats)>,
) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(STATS_CSV_HEADER)?;
    for (chip, pattern, t_w, stats) in rows {
        w.write_record(stats.csv_record(chip, pattern, t_w))?;
    }
    w.flush()?;
    Ok(())
}

/// One point of a pulse-width sweep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub t_w: f64,
    pub failed_bits: u64,
    pub total_bits: u64,
}

impl SweepPoint {
    pub fn failed_fraction(&self) -> f64 {
        self.failed_bits as f64 / self.total_bits as f64
    }
}

/// For each pulse width, builds a fresh chip, resets it to `0xFFFF` and
/// writes `pattern` once, counting failed bits.
pub fn sweep_t_w(
    chip_factory: impl Fn() -> Result<ChipModel>,
    t_w_values: &[f64],
    pattern: &Pattern,
    env: &Environment,
) -> Result<Vec<SweepPoint>> {
    if t_w_values.is_empty() {
        return Err(Error::InvalidArgument(
            "sweep needs at least one pulse width".into(),
        ));
    }
    t_w_values
        .iter()
        .map(|&t_w| {
            if !(t_w > 0.0) {
                return Err(Error::InvalidArgument(format!(
                    "pulse width must be > 0, got {t_w}"
                )));
            }
            let mut chip = chip_factory()?;
            chip.reset_memory(RESET_PATTERN);
            let data = pattern.materialize(chip.capacity());
            let failed = chip.write_all(|a| data[a], &WriteTimings::with_pulse_width(t_w), env)?;
            Ok(SweepPoint {
                t_w,
                failed_bits: failed,
                total_bits: chip.capacity() as u64 * WORD_BITS as u64,
            })
        })
        .collect()
}
