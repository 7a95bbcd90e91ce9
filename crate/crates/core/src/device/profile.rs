use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{WriteTimings, RATED_FIELD_MAX_MT, ROOM_TEMPERATURE_C, WORD_BITS};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ModelId {
    C1,
    C2,
    C3,
    C4,
    C5,
}

impl ModelId {
    pub const ALL: [ModelId; 5] = [
        ModelId::C1,
        ModelId::C2,
        ModelId::C3,
        ModelId::C4,
        ModelId::C5,
    ];

    pub fn grade(self) -> Grade {
        match self {
            ModelId::C3 | ModelId::C4 => Grade::Industrial,
            _ => Grade::Commercial,
        }
    }

    /// Vendor part number of the sampled chip.
    pub fn part_number(self) -> &'static str {
        match self {
            ModelId::C1 => "MR0A16AYS35",
            ModelId::C2 => "MR1A16AYS35",
            ModelId::C3 | ModelId::C4 => "MR2A16ACYS35",
            ModelId::C5 => "MR2A16AYS35",
        }
    }
}

impl fmt::Display for ModelId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

impl FromStr for ModelId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "C1" => Ok(ModelId::C1),
            "C2" => Ok(ModelId::C2),
            "C3" => Ok(ModelId::C3),
            "C4" => Ok(ModelId::C4),
            "C5" => Ok(ModelId::C5),
            _ => Err(Error::Parse(format!(
                "unknown chip model '{s}' (expected C1..C5)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Grade {
    Commercial,
    Industrial,
}

impl Grade {
    /// Rated ambient range in °C.
    pub fn temperature_range(self) -> (f64, f64) {
        match self {
            Grade::Commercial => (0.0, 70.0),
            Grade::Industrial => (-40.0, 85.0),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Grade::Commercial => "commercial",
            Grade::Industrial => "industrial",
        }
    }
}

/// Log-normal law of a cell's critical pulse width, in ns.
///
/// `ln(tau) = location + scale * z` with `z` a standard normal clamped to
/// `[-clip_sigma, clip_sigma]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TauParams {
    pub location: f64,
    pub scale: f64,
    pub clip_sigma: f64,
}

impl TauParams {
    pub fn median(&self) -> f64 {
        self.location.exp()
    }

    pub fn mean(&self) -> f64 {
        (self.location + 0.5 * self.scale * self.scale).exp()
    }

    pub fn max(&self) -> f64 {
        (self.location + self.clip_sigma * self.scale).exp()
    }

    #[inline]
    pub fn at(&self, z: f64) -> f64 {
        (self.location + self.scale * z.clamp(-self.clip_sigma, self.clip_sigma)).exp()
    }
}

/// Per-model parameters of the write-failure model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChipProfile {
    pub model_id: ModelId,
    pub grade: Grade,
    pub capacity_words: usize,
    pub word_length: u32,
    /// Critical pulse width of the 1 -> 0 toggle.
    pub tau_params_1to0: TauParams,
    /// Critical pulse width of the 0 -> 1 toggle.
    pub tau_params_0to1: TauParams,
    /// Share of threshold and jitter variance common to all cells of a word.
    pub word_coupling: f64,
    /// Standard deviation of the additive per-write threshold jitter, ns.
    pub jitter_sigma: f64,
    pub jitter_clip_sigma: f64,
    /// Thresholds scale by `exp(temp_coefficient * (T - 26 °C))`.
    pub temp_coefficient: f64,
    /// Effective-pulse multiplier indexed by the number of toggled bits.
    pub relief_curve: [f64; 17],
    /// Effective-pulse multiplier per mT of external field.
    pub field_sensitivity: f64,
}

impl ChipProfile {
    /// Calibrated profile of one of the five characterized models.
    pub fn preset(model: ModelId) -> ChipProfile {
        let json = match model {
            ModelId::C1 => include_str!("../../profiles/c1.json"),
            ModelId::C2 => include_str!("../../profiles/c2.json"),
            ModelId::C3 => include_str!("../../profiles/c3.json"),
            ModelId::C4 => include_str!("../../profiles/c4.json"),
            ModelId::C5 => include_str!("../../profiles/c5.json"),
        };
        serde_json::from_str(json).expect("embedded profile is valid JSON")
    }

    pub fn from_json(json: &str) -> Result<ChipProfile> {
        let profile: ChipProfile = serde_json::from_str(json)?;
        profile.validate()?;
        Ok(profile)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<ChipProfile> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("profile serializes")
    }

    pub fn with_capacity(mut self, capacity_words: usize) -> Self {
        self.capacity_words = capacity_words;
        self
    }

    #[inline]
    pub fn temp_factor(&self, temperature: f64) -> f64 {
        (self.temp_coefficient * (temperature - ROOM_TEMPERATURE_C)).exp()
    }

    #[inline]
    pub fn field_factor(&self, field_mt: f64) -> f64 {
        self.field_sensitivity.powf(field_mt)
    }

    #[inline]
    pub fn relief(&self, toggles: u32) -> f64 {
        self.relief_curve[toggles as usize]
    }

    /// Largest threshold any cell can present at `temperature`, jitter included.
    pub fn max_threshold(&self, temperature: f64) -> f64 {
        let tau = self.tau_params_1to0.max().max(self.tau_params_0to1.max());
        tau * self.temp_factor(temperature) + self.jitter_sigma * self.jitter_clip_sigma
    }

    pub fn validate(&self) -> Result<()> {
        if self.word_length != WORD_BITS {
            return Err(Error::profile(
                "word_length",
                format!("must be {WORD_BITS}"),
            ));
        }
        if self.capacity_words == 0 || self.capacity_words > u32::MAX as usize {
            return Err(Error::profile("capacity_words", "must be in 1..=2^32-1"));
        }
        for (field, tau) in [
            ("tau_params_1to0", &self.tau_params_1to0),
            ("tau_params_0to1", &self.tau_params_0to1),
        ] {
            if !tau.location.is_finite() {
                return Err(Error::profile(field, "location must be finite"));
            }
            if !(tau.scale.is_finite() && tau.scale > 0.0) {
                return Err(Error::profile(
                    field,
                    format!("scale must be > 0, got {}", tau.scale),
                ));
            }
            if !(tau.clip_sigma.is_finite() && tau.clip_sigma > 0.0) {
                return Err(Error::profile(field, "clip_sigma must be > 0"));
            }
        }
        if self.tau_params_1to0.mean() <= self.tau_params_0to1.mean() {
            return Err(Error::profile(
                "tau_params_1to0",
                "mean must exceed the 0->1 mean (1->0 toggles are the weaker direction)",
            ));
        }
        if !(0.0..=1.0).contains(&self.word_coupling) {
            return Err(Error::profile("word_coupling", "must lie in [0, 1]"));
        }
        if !(self.jitter_sigma.is_finite() && self.jitter_sigma >= 0.0) {
            return Err(Error::profile("jitter_sigma", "must be >= 0"));
        }
        if !(self.jitter_clip_sigma.is_finite() && self.jitter_clip_sigma > 0.0) {
            return Err(Error::profile("jitter_clip_sigma", "must be > 0"));
        }
        if !(self.temp_coefficient.is_finite() && self.temp_coefficient > 0.0) {
            return Err(Error::profile(
                "temp_coefficient",
                "must be > 0 so thresholds grow with temperature",
            ));
        }
        if !(self.field_sensitivity.is_finite()
            && self.field_sensitivity > 0.0
            && self.field_sensitivity <= 1.0)
        {
            return Err(Error::profile("field_sensitivity", "must lie in (0, 1]"));
        }
        if self.relief_curve[16] != 1.0 {
            return Err(Error::profile(
                "relief_curve",
                format!("g(16) must be 1, got {}", self.relief_curve[16]),
            ));
        }
        for k in 0..16 {
            let (g, next) = (self.relief_curve[k], self.relief_curve[k + 1]);
            if !g.is_finite() || g < next || g < 1.0 {
                return Err(Error::profile(
                    "relief_curve",
                    format!(
                        "must be non-increasing and >= 1 (g({k}) = {g}, g({}) = {next})",
                        k + 1
                    ),
                ));
            }
        }
        let (_, t_max) = self.grade.temperature_range();
        let worst = self.max_threshold(t_max);
        let budget = WriteTimings::NOMINAL.t_w * self.field_factor(RATED_FIELD_MAX_MT);
        if worst >= budget {
            return Err(Error::profile(
                "tau_params_1to0",
                format!(
                    "worst-case threshold {worst:.3} ns at {t_max} °C reaches the rated pulse budget {budget:.3} ns"
                ),
            ));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_are_valid() {
        for m in ModelId::ALL {
            let p = ChipProfile::preset(m);
            p.validate().unwrap();
            assert_eq!(p.model_id, m);
            assert_eq!(p.grade, m.grade());
            assert_eq!(p.capacity_words, 65536);
        }
    }

    #[test]
    fn relief_must_end_at_one() {
        let mut p = ChipProfile::preset(ModelId::C1);
        p.relief_curve[16] = 1.1;
        let err = p.validate().unwrap_err().to_string();
        assert!(err.contains("relief_curve"), "{err}");
    }

    #[test]
    fn relief_must_be_non_increasing() {
        let mut p = ChipProfile::preset(ModelId::C1);
        p.relief_curve[12] = p.relief_curve[11] + 0.5;
        assert!(p.validate().is_err());
    }

    #[test]
    fn non_positive_scale_names_the_field() {
        let mut p = ChipProfile::preset(ModelId::C2);
        p.tau_params_0to1.scale = 0.0;
        let err = p.validate().unwrap_err().to_string();
        assert!(err.contains("tau_params_0to1"), "{err}");
    }

    #[test]
    fn direction_asymmetry_is_enforced() {
        let mut p = ChipProfile::preset(ModelId::C3);
        p.tau_params_0to1 = p.tau_params_1to0;
        assert!(p.validate().is_err());
    }

    #[test]
    fn thresholds_must_fit_the_rated_pulse() {
        let mut p = ChipProfile::preset(ModelId::C1);
        p.tau_params_1to0.clip_sigma = 20.0;
        assert!(p.validate().is_err());
    }

    #[test]
    fn json_round_trip() {
        let p = ChipProfile::preset(ModelId::C4);
        let back = ChipProfile::from_json(&p.to_json()).unwrap();
        assert_eq!(p, back);
    }

    #[test]
    fn model_ids_parse() {
        assert_eq!("c2".parse::<ModelId>().unwrap(), ModelId::C2);
        assert!("C9".parse::<ModelId>().is_err());
    }
}
