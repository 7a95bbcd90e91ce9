//! Write-current curve and the derived power figures.
//!
//! The default curve was measured with a solid 0x0000 pattern and is used
//! as the envelope for every pattern. Power scales with current squared.

use std::io::Read;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Normalized write current against time since the pulse started.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerCurve {
    samples: Vec<(f64, f64)>,
}

impl Default for PowerCurve {
    fn default() -> Self {
        PowerCurve {
            samples: vec![(0.0, 0.0), (5.0, 0.34), (20.0, 1.0)],
        }
    }
}

impl PowerCurve {
    /// Samples must be in strictly increasing time with currents in [0, 1]
    /// that never decrease.
    pub fn new(samples: Vec<(f64, f64)>) -> Result<Self> {
        if samples.len() < 2 {
            return Err(Error::InvalidArgument(
                "power curve needs at least two samples".into(),
            ));
        }
        for &(t, i) in &samples {
            if !t.is_finite() || !i.is_finite() {
                return Err(Error::InvalidArgument(
                    "power curve has a non-finite sample".into(),
                ));
            }
            if !(0.0..=1.0).contains(&i) {
                return Err(Error::InvalidArgument(format!(
                    "normalized current {i} at {t} ns is outside [0, 1]"
                )));
            }
        }
        for w in samples.windows(2) {
            if w[1].0 <= w[0].0 {
                return Err(Error::InvalidArgument(format!(
                    "curve times must increase ({} ns follows {} ns)",
                    w[1].0, w[0].0
                )));
            }
            if w[1].1 < w[0].1 {
                return Err(Error::InvalidArgument(format!(
                    "curve current drops between {} ns and {} ns",
                    w[0].0, w[1].0
                )));
            }
        }
        Ok(PowerCurve { samples })
    }

    /// Reads `time_ns,normalized_current` rows with a header.
    pub fn from_csv<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(reader);
        let headers = rdr.headers()?.clone();
        if headers.len() != 2 || &headers[0] != "time_ns" || &headers[1] != "normalized_current" {
            return Err(Error::Parse(
                "power curve header must be time_ns,normalized_current".into(),
            ));
        }
        let mut samples = Vec::new();
        for row in rdr.deserialize() {
            let (t, i): (f64, f64) = row?;
            samples.push((t, i));
        }
        Self::new(samples)
    }

    pub fn samples(&self) -> &[(f64, f64)] {
        &self.samples
    }

    /// Linear interpolation between neighbouring samples.
    pub fn current_at(&self, t: f64) -> Result<f64> {
        let (first, last) = (self.samples[0].0, self.samples[self.samples.len() - 1].0);
        if !(first..=last).contains(&t) {
            return Err(Error::InvalidArgument(format!(
                "{t} ns is outside the curve range [{first}, {last}]"
            )));
        }
        let i = self.samples.partition_point(|&(ts, _)| ts < t);
        if self.samples[i].0 == t {
            return Ok(self.samples[i].1);
        }
        let (t0, i0) = self.samples[i - 1];
        let (t1, i1) = self.samples[i];
        Ok(i0 + (i1 - i0) * (t - t0) / (t1 - t0))
    }

    fn ratio(&self, t_reduced: f64, t_full: f64) -> Result<f64> {
        if t_reduced > t_full {
            return Err(Error::InvalidArgument(format!(
                "reduced pulse {t_reduced} ns is longer than the full pulse {t_full} ns"
            )));
        }
        let full = self.current_at(t_full)?;
        let reduced = self.current_at(t_reduced)?;
        if full == 0.0 {
            return Err(Error::InvalidArgument(format!(
                "zero current at {t_full} ns"
            )));
        }
        Ok(reduced / full)
    }

    /// 1 − i_red / i_full.
    pub fn current_saving(&self, t_reduced: f64, t_full: f64) -> Result<f64> {
        Ok(1.0 - self.ratio(t_reduced, t_full)?)
    }

    /// 1 − (i_red / i_full)².
    pub fn power_reduction(&self, t_reduced: f64, t_full: f64) -> Result<f64> {
        let r = self.ratio(t_reduced, t_full)?;
        Ok(1.0 - r * r)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn anchors_and_interpolation() {
        let c = PowerCurve::default();
        assert_eq!(c.current_at(0.0).unwrap(), 0.0);
        assert_eq!(c.current_at(5.0).unwrap(), 0.34);
        assert_eq!(c.current_at(20.0).unwrap(), 1.0);
        assert!((c.current_at(12.5).unwrap() - 0.67).abs() < 1e-12);
        assert!((c.current_at(2.5).unwrap() - 0.17).abs() < 1e-12);
        assert!(c.current_at(-0.1).is_err());
        assert!(c.current_at(20.5).is_err());
    }

    #[test]
    fn savings() {
        let c = PowerCurve::default();
        assert!((c.power_reduction(5.0, 20.0).unwrap() - 0.8844).abs() < 1e-12);
        assert!((c.current_saving(5.0, 20.0).unwrap() - 0.66).abs() < 1e-12);
        assert!((c.current_saving(12.5, 20.0).unwrap() - 0.33).abs() < 1e-12);
        assert_eq!(c.power_reduction(0.0, 20.0).unwrap(), 1.0);
        assert_eq!(c.power_reduction(7.0, 7.0).unwrap(), 0.0);
        assert_eq!(c.current_saving(7.0, 7.0).unwrap(), 0.0);
        assert!(c.power_reduction(10.0, 5.0).is_err());
        assert!(c.current_saving(0.0, 0.0).is_err());
    }

    #[test]
    fn rejects_bad_curves() {
        assert!(PowerCurve::new(vec![(0.0, 0.0)]).is_err());
        assert!(PowerCurve::new(vec![(0.0, 0.0), (0.0, 0.5)]).is_err());
        assert!(PowerCurve::new(vec![(0.0, 0.5), (1.0, 0.4)]).is_err());
        assert!(PowerCurve::new(vec![(0.0, 0.0), (1.0, 1.5)]).is_err());
        assert!(PowerCurve::new(vec![(0.0, 0.0), (f64::NAN, 1.0)]).is_err());
    }

    #[test]
    fn csv_round() {
        let text = "time_ns,normalized_current\n0,0\n5,0.34\n10,0.6\n20,1\n";
        let c = PowerCurve::from_csv(text.as_bytes()).unwrap();
        assert_eq!(c.samples().len(), 4);
        assert!((c.current_at(7.5).unwrap() - 0.47).abs() < 1e-12);
        assert!(PowerCurve::from_csv("t,i\n0,0\n1,1\n".as_bytes()).is_err());
        assert!(PowerCurve::from_csv("time_ns,normalized_current\n0,x\n".as_bytes()).is_err());
    }
}
