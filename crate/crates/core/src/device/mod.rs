//! Toggle-MRAM chip model.
//!
//! A write pre-reads the addressed word and only toggles the bits that differ
//! from the incoming data. Each toggle succeeds when the effective pulse width
//! reaches the cell's latent critical switching time plus a per-write jitter;
//! a failed toggle leaves the old bit in place.

mod chip;
mod profile;

pub use chip::{CellThresholds, ChipModel, ChipSnapshot, WriteOutcome};
pub use profile::{ChipProfile, Grade, ModelId, TauParams};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Data bus width of the modelled parts.
pub const WORD_BITS: u32 = 16;

/// Temperature at which profiles are calibrated, in °C.
pub const ROOM_TEMPERATURE_C: f64 = 26.0;

/// Upper end of the field range for which nominal writes are guaranteed, in mT.
pub const RATED_FIELD_MAX_MT: f64 = 10.0;

/// A memory word.
pub type Word = u16;

/// `W`-controlled write cycle timing, all in nanoseconds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WriteTimings {
    pub t_wc: f64,
    pub t_w: f64,
    pub t_wr: f64,
    pub t_dv: f64,
}

impl WriteTimings {
    pub const NOMINAL: WriteTimings = WriteTimings {
        t_wc: 35.0,
        t_w: 15.0,
        t_wr: 12.0,
        t_dv: 10.0,
    };

    /// Nominal cycle with only the write pulse width changed.
    pub fn with_pulse_width(t_w: f64) -> Self {
        WriteTimings {
            t_w,
            ..Self::NOMINAL
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("t_wc", self.t_wc),
            ("t_w", self.t_w),
            ("t_wr", self.t_wr),
            ("t_dv", self.t_dv),
        ];
        for (name, v) in fields {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidTimings(format!(
                    "{name} must be > 0, got {v}"
                )));
            }
        }
        if self.t_w > self.t_wc {
            return Err(Error::InvalidTimings(format!(
                "t_w ({}) exceeds the write cycle t_wc ({})",
                self.t_w, self.t_wc
            )));
        }
        // t_dv is only held below t_w at rated pulse widths; reduced pulses keep
        // the nominal t_dv.
        if self.t_w >= Self::NOMINAL.t_w && self.t_dv > self.t_w {
            return Err(Error::InvalidTimings(format!(
                "t_dv ({}) exceeds t_w ({})",
                self.t_dv, self.t_w
            )));
        }
        Ok(())
    }

    pub fn is_nominal_pulse(&self) -> bool {
        self.t_w >= Self::NOMINAL.t_w
    }
}

impl Default for WriteTimings {
    fn default() -> Self {
        Self::NOMINAL
    }
}

/// Operating conditions of a write.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Environment {
    /// Degrees Celsius.
    pub temperature: f64,
    /// External magnetic field in milliTesla.
    pub magnetic_field: f64,
}

impl Environment {
    pub const ROOM: Environment = Environment {
        temperature: ROOM_TEMPERATURE_C,
        magnetic_field: 0.0,
    };

    pub fn at_temperature(temperature: f64) -> Self {
        Environment {
            temperature,
            magnetic_field: 0.0,
        }
    }

    pub fn validate_for(&self, grade: Grade) -> Result<()> {
        let (lo, hi) = grade.temperature_range();
        if !(self.temperature >= lo && self.temperature <= hi) {
            return Err(Error::InvalidEnvironment(format!(
                "temperature {} °C outside the {} range [{lo}, {hi}]",
                self.temperature,
                grade.name()
            )));
        }
        if !(self.magnetic_field.is_finite() && self.magnetic_field >= 0.0) {
            return Err(Error::InvalidEnvironment(format!(
                "magnetic field must be >= 0 mT, got {}",
                self.magnetic_field
            )));
        }
        Ok(())
    }
}

impl Default for Environment {
    fn default() -> Self {
        Self::ROOM
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nominal_timings_are_valid() {
        WriteTimings::NOMINAL.validate().unwrap();
        assert_eq!(WriteTimings::NOMINAL.t_w, 15.0);
        assert_eq!(WriteTimings::NOMINAL.t_wc, 35.0);
    }

    #[test]
    fn reduced_pulse_keeps_nominal_t_dv() {
        let t = WriteTimings::with_pulse_width(2.5);
        t.validate().unwrap();
        assert_eq!(t.t_dv, 10.0);
    }

    #[test]
    fn rejects_bad_timings() {
        assert!(WriteTimings::with_pulse_width(0.0).validate().is_err());
        assert!(WriteTimings::with_pulse_width(-1.0).validate().is_err());
        assert!(WriteTimings::with_pulse_width(40.0).validate().is_err());
        assert!(WriteTimings::with_pulse_width(f64::NAN).validate().is_err());
    }

    #[test]
    fn environment_ranges_follow_grade() {
        let cold = Environment::at_temperature(-20.0);
        assert!(cold.validate_for(Grade::Commercial).is_err());
        cold.validate_for(Grade::Industrial).unwrap();
        assert!(Environment::at_temperature(71.0)
            .validate_for(Grade::Commercial)
            .is_err());
        let neg_field = Environment {
            temperature: 26.0,
            magnetic_field: -1.0,
        };
        assert!(neg_field.validate_for(Grade::Commercial).is_err());
    }
}
