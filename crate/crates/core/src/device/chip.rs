use std::sync::Arc;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{ChipProfile, Environment, Word, WriteTimings, WORD_BITS};
use crate::error::{Error, Result};

const TAU_STREAM: u64 = 0;
const JITTER_STREAM: u64 = 1;

/// Per-cell latent critical pulse widths, fixed at construction.
#[derive(Debug, Clone, PartialEq)]
pub struct CellThresholds {
    /// `capacity * 16` entries, bit `b` of word `w` at `w * 16 + b`.
    pub tau_1to0: Vec<f32>,
    pub tau_0to1: Vec<f32>,
}

impl CellThresholds {
    fn sample(profile: &ChipProfile, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(TAU_STREAM);
        let cells = profile.capacity_words * WORD_BITS as usize;
        let shared = profile.word_coupling.sqrt();
        let own = (1.0 - profile.word_coupling).sqrt();
        let mut tau_1to0 = Vec::with_capacity(cells);
        let mut tau_0to1 = Vec::with_capacity(cells);
        for _ in 0..profile.capacity_words {
            let zw: f64 = rng.sample(StandardNormal);
            for _ in 0..WORD_BITS {
                let zc: f64 = rng.sample(StandardNormal);
                let z = shared * zw + own * zc;
                tau_1to0.push(profile.tau_params_1to0.at(z) as f32);
                tau_0to1.push(profile.tau_params_0to1.at(z) as f32);
            }
        }
        CellThresholds { tau_1to0, tau_0to1 }
    }
}

/// Result of one word write.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct WriteOutcome {
    /// Bits that had to toggle (pre-read differs from the new data).
    pub toggled: Word,
    /// Toggles that did not complete; these bits kept their old value.
    pub failed: Word,
    /// Word held by the cell array after the write.
    pub stored: Word,
}

impl WriteOutcome {
    pub fn succeeded(&self) -> Word {
        self.toggled & !self.failed
    }

    pub fn failed_bits(&self) -> u32 {
        self.failed.count_ones()
    }
}

/// Write parameters resolved once per (timings, environment).
#[derive(Debug, Clone, Copy)]
pub(crate) struct WriteKernel {
    pulse: [f64; 17],
    temp_factor: f64,
    shared_sigma: f64,
    own_sigma: f64,
    clip: f64,
}

impl WriteKernel {
    fn new(profile: &ChipProfile, timings: &WriteTimings, env: &Environment) -> Self {
        let base = timings.t_w * profile.field_factor(env.magnetic_field);
        let mut pulse = [0.0; 17];
        for (k, p) in pulse.iter_mut().enumerate() {
            *p = base * profile.relief_curve[k];
        }
        WriteKernel {
            pulse,
            temp_factor: profile.temp_factor(env.temperature),
            shared_sigma: profile.word_coupling.sqrt(),
            own_sigma: (1.0 - profile.word_coupling).sqrt(),
            clip: profile.jitter_clip_sigma,
        }
    }
}

/// A simulated toggle-MRAM chip.
///
/// Single writer; clone or [`ChipModel::fork`] to run independent experiments.
#[derive(Debug, Clone)]
pub struct ChipModel {
    profile: Arc<ChipProfile>,
    seed: u64,
    cells: Arc<CellThresholds>,
    contents: Vec<Word>,
    rng: ChaCha8Rng,
}

impl ChipModel {
    /// Builds a chip: samples the per-cell thresholds from `seed` and fills
    /// the array with `0xFFFF`.
    pub fn new(profile: ChipProfile, seed: u64) -> Result<Self> {
        profile.validate()?;
        let cells = CellThresholds::sample(&profile, seed);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(JITTER_STREAM);
        Ok(ChipModel {
            contents: vec![0xFFFF; profile.capacity_words],
            profile: Arc::new(profile),
            seed,
            cells: Arc::new(cells),
            rng,
        })
    }

    pub fn profile(&self) -> &ChipProfile {
        &self.profile
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn capacity(&self) -> usize {
        self.contents.len()
    }

    pub fn cells(&self) -> &CellThresholds {
        &self.cells
    }

    pub fn contents(&self) -> &[Word] {
        &self.contents
    }

    fn check_addr(&self, addr: usize) -> Result<()> {
        if addr >= self.contents.len() {
            return Err(Error::AddressOutOfRange {
                addr,
                capacity: self.contents.len(),
            });
        }
        Ok(())
    }

    pub(crate) fn kernel(&self, timings: &WriteTimings, env: &Environment) -> Result<WriteKernel> {
        timings.validate()?;
        env.validate_for(self.profile.grade)?;
        Ok(WriteKernel::new(&self.profile, timings, env))
    }

    /// Writes `data` at `addr` with the given cycle timing.
    pub fn write_word(
        &mut self,
        addr: usize,
        data: Word,
        timings: &WriteTimings,
        env: &Environment,
    ) -> Result<WriteOutcome> {
        self.check_addr(addr)?;
        let kernel = self.kernel(timings, env)?;
        Ok(self.write_with(addr, data, &kernel))
    }

    /// Inner write; `addr` must be in range.
    pub(crate) fn write_with(&mut self, addr: usize, data: Word, k: &WriteKernel) -> WriteOutcome {
        let stored = self.contents[addr];
        let toggled = stored ^ data;

        // Jitter is drawn for every write so the stream position depends only
        // on the write sequence, never on the data.
        let word_jitter: f64 = self.rng.sample(StandardNormal);
        let mut cell_jitter = [0.0f64; WORD_BITS as usize];
        for j in cell_jitter.iter_mut() {
            *j = self.rng.sample(StandardNormal);
        }
        if toggled == 0 {
            return WriteOutcome {
                toggled,
                failed: 0,
                stored,
            };
        }

        let pulse = k.pulse[toggled.count_ones() as usize];
        let sigma = self.profile.jitter_sigma;
        let base = addr * WORD_BITS as usize;
        let mut failed: Word = 0;
        let mut bits = toggled;
        while bits != 0 {
            let b = bits.trailing_zeros() as usize;
            bits &= bits - 1;
            let tau = if stored >> b & 1 == 1 {
                self.cells.tau_1to0[base + b]
            } else {
                self.cells.tau_0to1[base + b]
            } as f64;
            let z = (k.shared_sigma * word_jitter + k.own_sigma * cell_jitter[b])
                .clamp(-k.clip, k.clip);
            let threshold = tau * k.temp_factor + sigma * z;
            if pulse < threshold {
                failed |= 1 << b;
            }
        }
        let new = (data & !failed) | (stored & failed);
        self.contents[addr] = new;
        WriteOutcome {
            toggled,
            failed,
            stored: new,
        }
    }

    /// Reads are non-destructive and always return the stored word.
    pub fn read_word(&self, addr: usize) -> Result<Word> {
        self.check_addr(addr)?;
        Ok(self.contents[addr])
    }

    /// Writes `pattern` everywhere at nominal timing. Nominal writes never
    /// fail, so this is a direct overwrite and does not consume jitter.
    pub fn reset_memory(&mut self, pattern: Word) {
        self.contents.fill(pattern);
    }

    /// Writes `data(addr)` to every address in ascending order and returns the
    /// number of failed bits.
    pub fn write_all(
        &mut self,
        data: impl Fn(usize) -> Word,
        timings: &WriteTimings,
        env: &Environment,
    ) -> Result<u64> {
        let kernel = self.kernel(timings, env)?;
        let mut failed = 0u64;
        for addr in 0..self.contents.len() {
            failed += self.write_with(addr, data(addr), &kernel).failed_bits() as u64;
        }
        Ok(failed)
    }

    /// Draws a fresh base seed for a family of derived jitter streams.
    pub(crate) fn next_stream_base(&mut self) -> u64 {
        self.rng.next_u64()
    }

    /// Copy of this chip sharing the cell thresholds, with its jitter stream
    /// replaced by stream `stream` of `base`.
    pub fn fork(&self, base: u64, stream: u64) -> ChipModel {
        let mut rng = ChaCha8Rng::seed_from_u64(base);
        rng.set_stream(stream);
        ChipModel {
            profile: Arc::clone(&self.profile),
            seed: self.seed,
            cells: Arc::clone(&self.cells),
            contents: self.contents.clone(),
            rng,
        }
    }

    pub(crate) fn set_contents(&mut self, contents: Vec<Word>) {
        debug_assert_eq!(contents.len(), self.contents.len());
        self.contents = contents;
    }

    pub fn snapshot(&self) -> ChipSnapshot {
        ChipSnapshot {
            profile: (*self.profile).clone(),
            seed: self.seed,
            contents: self.contents.clone(),
            rng: self.rng.clone(),
        }
    }

    /// Rebuilds a chip from a snapshot; thresholds are re-derived from the seed.
    pub fn restore(snapshot: ChipSnapshot) -> Result<ChipModel> {
        let ChipSnapshot {
            profile,
            seed,
            contents,
            rng,
        } = snapshot;
        if contents.len() != profile.capacity_words {
            return Err(Error::Mismatch(format!(
                "snapshot holds {} words, profile capacity is {}",
                contents.len(),
                profile.capacity_words
            )));
        }
        let mut chip = ChipModel::new(profile, seed)?;
        chip.contents = contents;
        chip.rng = rng;
        Ok(chip)
    }
}

/// Serializable chip state for fixtures.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChipSnapshot {
    pub profile: ChipProfile,
    pub seed: u64,
    pub contents: Vec<Word>,
    pub rng: ChaCha8Rng,
}

impl ChipSnapshot {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}
