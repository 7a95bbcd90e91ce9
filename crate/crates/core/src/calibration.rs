//! Fits a [`ChipProfile`] to measured error statistics.
//!
//! Bit-level rates depend only on the marginal threshold law, so the location,
//! scale and jitter are solved jointly against three quadrature-evaluated
//! rates (single-shot rate at the short and the characterization pulse, and
//! the N-measurement union rate). The word coupling, which only changes how
//! failing bits cluster into addresses, is then fitted to the erroneous
//! address rate by a common-random-numbers Monte-Carlo estimate.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::device::{
    ChipProfile, Grade, ModelId, TauParams, WriteTimings, RATED_FIELD_MAX_MT, ROOM_TEMPERATURE_C,
    WORD_BITS,
};
use crate::error::{Error, Result};

/// Default effective-pulse multiplier per toggle count. Words toggling at
/// most half their bits are immune at a third of the rated pulse. Above that
/// the relief drops to 1.5 and levels at 1.3; only a full-word toggle sees
/// the bare pulse.
pub const DEFAULT_RELIEF_CURVE: [f64; 17] = [
    3.0, 3.0, 3.0, 3.0, 3.0, 3.0, 3.0, 3.0, 3.0, 1.5, 1.45, 1.4, 1.35, 1.3, 1.3, 1.3, 1.0,
];

const TAU_CLIP_MAX: f64 = 4.5;
const TAU_CLIP_MIN: f64 = 2.5;
const SAFETY_MARGIN: f64 = 0.98;
const QUAD_INTERVALS: usize = 1600;
const ADDRESS_MC_WORDS: usize = 8192;
const ADDRESS_MC_SEED: u64 = 0x5EED_CA1B;

/// Measured statistics a profile is fitted to. Percentages are in `[0, 100]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationTargets {
    pub model_id: ModelId,
    pub grade: Grade,
    pub capacity_words: usize,
    /// Pulse width of the characterization writes, ns.
    pub characterization_t_w: f64,
    pub n_measurements: usize,
    /// Erroneous-bit rate of a single solid-0x0000 write.
    pub single_bit_pct: f64,
    /// Erroneous-bit rate of the union over `n_measurements` writes.
    pub union_bit_pct: f64,
    /// Erroneous-address rate of the union over `n_measurements` writes.
    pub union_address_pct: f64,
    pub short_t_w: f64,
    /// Failed-bit band of a single write at `short_t_w`; the fit aims at its middle.
    pub short_band_pct: (f64, f64),
    pub hot_temperature: f64,
    /// Single-shot bit-error growth from room temperature to `hot_temperature`.
    pub hot_bit_ratio: f64,
    pub field_mt: f64,
    /// Relative single-shot bit-error increase under `field_mt`.
    pub field_bit_increase: f64,
    /// Median 0->1 critical time relative to the 1->0 median.
    pub reverse_median_ratio: f64,
    pub jitter_clip_sigma: f64,
    pub relief_curve: [f64; 17],
}

impl CalibrationTargets {
    /// Measured statistics of the five characterized models (1 Mb desk-scale
    /// chips, characterization at 5 ns, N = 50).
    pub fn for_model(model: ModelId) -> Self {
        let (e_a, e_b, m_b) = match model {
            ModelId::C1 => (22.41, 10.49, 0.83),
            ModelId::C2 => (26.41, 22.06, 3.30),
            ModelId::C3 => (10.34, 7.60, 1.25),
            ModelId::C4 => (8.36, 5.15, 1.36),
            ModelId::C5 => (5.33, 3.89, 0.86),
        };
        CalibrationTargets {
            model_id: model,
            grade: model.grade(),
            capacity_words: 65536,
            characterization_t_w: 5.0,
            n_measurements: 50,
            single_bit_pct: m_b,
            union_bit_pct: e_b,
            union_address_pct: e_a,
            short_t_w: 2.5,
            short_band_pct: (25.59, 37.30),
            hot_temperature: 65.0,
            hot_bit_ratio: 1.72,
            field_mt: 8.0,
            field_bit_increase: 0.25,
            reverse_median_ratio: 0.75,
            jitter_clip_sigma: 3.0,
            relief_curve: DEFAULT_RELIEF_CURVE,
        }
    }

    fn check(&self) -> Result<()> {
        let pct = |name: &str, v: f64| {
            if v.is_finite() && v > 0.0 && v < 100.0 {
                Ok(())
            } else {
                Err(Error::Calibration(format!(
                    "{name} must lie in (0, 100), got {v}"
                )))
            }
        };
        pct("single_bit_pct", self.single_bit_pct)?;
        pct("union_bit_pct", self.union_bit_pct)?;
        pct("union_address_pct", self.union_address_pct)?;
        pct("short band low", self.short_band_pct.0)?;
        pct("short band high", self.short_band_pct.1)?;
        if self.union_bit_pct < self.single_bit_pct {
            return Err(Error::Calibration(format!(
                "infeasible targets: union rate {} % below single-shot rate {} %",
                self.union_bit_pct, self.single_bit_pct
            )));
        }
        if self.union_bit_pct > self.union_address_pct {
            return Err(Error::Calibration(format!(
                "infeasible targets: erroneous-bit rate {} % exceeds erroneous-address rate {} %",
                self.union_bit_pct, self.union_address_pct
            )));
        }
        if self.short_band_pct.0 > self.short_band_pct.1 {
            return Err(Error::Calibration("short-pulse band is inverted".into()));
        }
        if !(self.short_t_w > 0.0 && self.short_t_w < self.characterization_t_w) {
            return Err(Error::Calibration(
                "short pulse must be positive and below the characterization pulse".into(),
            ));
        }
        if self.single_bit_pct >= self.short_band_mid() {
            return Err(Error::Calibration(
                "single-shot rate must be below the short-pulse rate".into(),
            ));
        }
        if self.n_measurements == 0 {
            return Err(Error::Calibration("n_measurements must be >= 1".into()));
        }
        if !(self.hot_bit_ratio > 1.0) {
            return Err(Error::Calibration("hot_bit_ratio must exceed 1".into()));
        }
        if !(self.field_bit_increase >= 0.0) {
            return Err(Error::Calibration("field_bit_increase must be >= 0".into()));
        }
        if !(self.reverse_median_ratio > 0.0 && self.reverse_median_ratio < 1.0) {
            return Err(Error::Calibration(
                "reverse_median_ratio must lie in (0, 1)".into(),
            ));
        }
        Ok(())
    }

    fn short_band_mid(&self) -> f64 {
        0.5 * (self.short_band_pct.0 + self.short_band_pct.1)
    }
}

pub(crate) fn normal_sf(x: f64) -> f64 {
    0.5 * libm::erfc(x / std::f64::consts::SQRT_2)
}

fn normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

/// Marginal single-cell model used by the quadratures.
#[derive(Debug, Clone, Copy)]
pub struct CellLaw {
    pub tau: TauParams,
    pub jitter_sigma: f64,
    pub jitter_clip_sigma: f64,
}

impl CellLaw {
    /// P(cell with threshold `tau` fails at effective pulse `t`).
    pub fn fail_given_tau(&self, t: f64, tau: f64) -> f64 {
        if self.jitter_sigma == 0.0 {
            return if t < tau { 1.0 } else { 0.0 };
        }
        let x = (t - tau) / self.jitter_sigma;
        if x >= self.jitter_clip_sigma {
            0.0
        } else if x < -self.jitter_clip_sigma {
            1.0
        } else {
            normal_sf(x)
        }
    }

    /// `E_z[f(tau(z))]` over the clamped standard normal.
    fn expect(&self, f: impl Fn(f64) -> f64) -> f64 {
        let c = self.tau.clip_sigma;
        let h = 2.0 * c / QUAD_INTERVALS as f64;
        let mut acc = 0.0;
        for i in 0..=QUAD_INTERVALS {
            let z = -c + h * i as f64;
            let w = if i == 0 || i == QUAD_INTERVALS {
                1.0
            } else if i % 2 == 1 {
                4.0
            } else {
                2.0
            };
            acc += w * normal_pdf(z) * f(self.tau.at(z));
        }
        let tail = normal_sf(c);
        acc * h / 3.0 + tail * (f(self.tau.at(-c)) + f(self.tau.at(c)))
    }

    /// Jitter-free failure probability, `P(tau * tau_scale > t)`, in closed form.
    fn threshold_tail(&self, t: f64, tau_scale: f64) -> f64 {
        let z = ((t / tau_scale).ln() - self.tau.location) / self.tau.scale;
        let c = self.tau.clip_sigma;
        if z >= c {
            0.0
        } else if z < -c {
            1.0
        } else {
            normal_sf(z)
        }
    }

    /// Probability that a single write fails, thresholds scaled by `tau_scale`.
    pub fn single_rate(&self, t: f64, tau_scale: f64) -> f64 {
        if self.jitter_sigma == 0.0 {
            return self.threshold_tail(t, tau_scale);
        }
        self.expect(|tau| self.fail_given_tau(t, tau * tau_scale))
    }

    /// Probability that a cell fails at least once in `n` independent writes.
    pub fn union_rate(&self, t: f64, n: usize) -> f64 {
        if self.jitter_sigma == 0.0 {
            return self.threshold_tail(t, 1.0);
        }
        self.expect(|tau| 1.0 - (1.0 - self.fail_given_tau(t, tau)).powi(n as i32))
    }

    /// Monte-Carlo probability that a 16-bit word shows at least one failure in
    /// `n` writes, with `coupling` of the variance shared per word.
    pub fn union_address_rate(
        &self,
        t: f64,
        n: usize,
        coupling: f64,
        words: usize,
        seed: u64,
    ) -> f64 {
        let shared = coupling.sqrt();
        let own = (1.0 - coupling).sqrt();
        let sigma = self.jitter_sigma;
        let clip = self.jitter_clip_sigma;
        let hits: usize = (0..words)
            .into_par_iter()
            .map(|w| {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(w as u64);
                let zw: f64 = rng.sample(StandardNormal);
                let mut tau = [0.0f64; WORD_BITS as usize];
                for t in tau.iter_mut() {
                    let zc: f64 = rng.sample(StandardNormal);
                    *t = self.tau.at(shared * zw + own * zc);
                }
                for _ in 0..n {
                    let jw: f64 = rng.sample(StandardNormal);
                    for &tb in &tau {
                        let jc: f64 = rng.sample(StandardNormal);
                        let j = sigma * (shared * jw + own * jc).clamp(-clip, clip);
                        if t < tb + j {
                            return 1;
                        }
                    }
                }
                0
            })
            .sum();
        hits as f64 / words as f64
    }
}

fn solve_linear(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    for col in 0..n {
        let pivot = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[pivot][col].abs() < 1e-300 {
            return None;
        }
        a.swap(col, pivot);
        b.swap(col, pivot);
        for row in col + 1..n {
            let f = a[row][col] / a[col][col];
            for k in col..n {
                a[row][k] -= f * a[col][k];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let s: f64 = (row + 1..n).map(|k| a[row][k] * x[k]).sum();
        x[row] = (b[row] - s) / a[row][row];
    }
    Some(x)
}

/// Residual at which a stalled Newton iteration is still accepted. The clipped
/// jitter makes the integrands piecewise smooth, so the last digits are noise.
const ACCEPT_RESIDUAL: f64 = 1e-3;

/// Damped Newton with a forward-difference Jacobian.
fn newton(f: impl Fn(&[f64]) -> Vec<f64>, mut x: Vec<f64>, tol: f64) -> Result<Vec<f64>> {
    let norm = |r: &[f64]| r.iter().map(|v| v * v).sum::<f64>().sqrt();
    let mut r = f(&x);
    for _ in 0..200 {
        if norm(&r) < tol {
            return Ok(x);
        }
        let n = x.len();
        let mut jac = vec![vec![0.0; n]; n];
        for j in 0..n {
            let h = 1e-5 * x[j].abs().max(1.0);
            let mut xh = x.clone();
            xh[j] += h;
            let rh = f(&xh);
            for i in 0..n {
                jac[i][j] = (rh[i] - r[i]) / h;
            }
        }
        let step = solve_linear(jac, r.iter().map(|v| -v).collect())
            .ok_or_else(|| Error::Calibration("singular Jacobian".into()))?;
        let mut lambda = 1.0;
        loop {
            let trial: Vec<f64> = x
                .iter()
                .zip(&step)
                .map(|(xi, si)| xi + lambda * si)
                .collect();
            let rt = f(&trial);
            if rt.iter().all(|v| v.is_finite()) && norm(&rt) < norm(&r) {
                x = trial;
                r = rt;
                break;
            }
            lambda *= 0.5;
            if lambda < 1e-8 {
                if norm(&r) < ACCEPT_RESIDUAL {
                    return Ok(x);
                }
                return Err(Error::Calibration(format!(
                    "fit stalled with residual {:.3e}",
                    norm(&r)
                )));
            }
        }
    }
    if norm(&r) < ACCEPT_RESIDUAL {
        Ok(x)
    } else {
        Err(Error::Calibration("fit did not converge".into()))
    }
}

/// Bisection for an increasing function on `[lo, hi]`.
fn bisect(f: impl Fn(f64) -> f64, target: f64, mut lo: f64, mut hi: f64, iters: usize) -> f64 {
    for _ in 0..iters {
        let mid = 0.5 * (lo + hi);
        if f(mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

fn log_ratio(a: f64, b: f64) -> f64 {
    (a.max(1e-300) / b).ln()
}

/// Fits a profile to `targets`.
pub fn calibrate_profile(targets: &CalibrationTargets) -> Result<ChipProfile> {
    targets.check()?;
    let t_char = targets.characterization_t_w;
    let t_short = targets.short_t_w;
    let n = targets.n_measurements;
    let single = targets.single_bit_pct / 100.0;
    let union = targets.union_bit_pct / 100.0;
    let short = targets.short_band_mid() / 100.0;
    let jclip = targets.jitter_clip_sigma;

    let law = |loc: f64, scale: f64, sigma: f64| CellLaw {
        tau: TauParams {
            location: loc,
            scale,
            clip_sigma: TAU_CLIP_MAX,
        },
        jitter_sigma: sigma,
        jitter_clip_sigma: jclip,
    };

    // Identical single-shot and union rates leave nothing for jitter to explain.
    let (location, scale, jitter_sigma) = if union <= single * (1.0 + 1e-9) {
        let x = newton(
            |x| {
                let l = law(x[0], x[1].exp(), 0.0);
                vec![
                    log_ratio(l.single_rate(t_short, 1.0), short),
                    log_ratio(l.single_rate(t_char, 1.0), single),
                ]
            },
            vec![0.65, 0.4f64.ln()],
            1e-10,
        )?;
        (x[0], x[1].exp(), 0.0)
    } else {
        let x = newton(
            |x| {
                let l = law(x[0], x[1].exp(), x[2].exp());
                vec![
                    log_ratio(l.single_rate(t_short, 1.0), short),
                    log_ratio(l.single_rate(t_char, 1.0), single),
                    log_ratio(l.union_rate(t_char, n), union),
                ]
            },
            vec![0.65, 0.4f64.ln(), 0.8f64.ln()],
            1e-10,
        )?;
        (x[0], x[1].exp(), x[2].exp())
    };
    let fitted = law(location, scale, jitter_sigma);

    let base_rate = fitted.single_rate(t_char, 1.0);
    let dt = targets.hot_temperature - ROOM_TEMPERATURE_C;
    let temp_coefficient = bisect(
        |c| fitted.single_rate(t_char, (c * dt).exp()) / base_rate,
        targets.hot_bit_ratio,
        0.0,
        0.2,
        80,
    );
    // Field lowers the effective pulse; the rate decreases as sensitivity rises.
    let field_sensitivity = if targets.field_bit_increase == 0.0 {
        1.0
    } else {
        bisect(
            |s| -(fitted.single_rate(t_char * s.powf(targets.field_mt), 1.0) / base_rate - 1.0),
            -targets.field_bit_increase,
            0.5,
            1.0,
            80,
        )
    };

    let (_, t_max) = targets.grade.temperature_range();
    let budget =
        WriteTimings::NOMINAL.t_w * field_sensitivity.powf(RATED_FIELD_MAX_MT) * SAFETY_MARGIN;
    let tau_cap =
        (budget - jitter_sigma * jclip) / (temp_coefficient * (t_max - ROOM_TEMPERATURE_C)).exp();
    if tau_cap <= 0.0 {
        return Err(Error::Calibration(
            "jitter alone exceeds the rated pulse budget".into(),
        ));
    }
    let clip_sigma = ((tau_cap.ln() - location) / scale).min(TAU_CLIP_MAX);
    if clip_sigma < TAU_CLIP_MIN {
        return Err(Error::Calibration(format!(
            "threshold spread incompatible with rated-pulse safety (tail clip {clip_sigma:.2} sigma)"
        )));
    }
    let tau_1to0 = TauParams {
        location,
        scale,
        clip_sigma,
    };
    let cell = CellLaw {
        tau: tau_1to0,
        ..fitted
    };

    let address = targets.union_address_pct / 100.0;
    let rate =
        |rho: f64| cell.union_address_rate(t_char, n, rho, ADDRESS_MC_WORDS, ADDRESS_MC_SEED);
    let (lo, hi) = (0.0, 0.999);
    let (r_lo, r_hi) = (rate(lo), rate(hi));
    if address > r_lo || address < r_hi {
        return Err(Error::Calibration(format!(
            "erroneous-address rate {:.2} % outside the reachable range [{:.2}, {:.2}] %",
            address * 100.0,
            r_hi * 100.0,
            r_lo * 100.0
        )));
    }
    // Address rate falls as coupling rises.
    let word_coupling = bisect(|rho| -rate(rho), -address, lo, hi, 24);

    let profile = ChipProfile {
        model_id: targets.model_id,
        grade: targets.grade,
        capacity_words: targets.capacity_words,
        word_length: WORD_BITS,
        tau_params_1to0: tau_1to0,
        tau_params_0to1: TauParams {
            location: location + targets.reverse_median_ratio.ln(),
            ..tau_1to0
        },
        word_coupling,
        jitter_sigma,
        jitter_clip_sigma: jclip,
        temp_coefficient,
        relief_curve: targets.relief_curve,
        field_sensitivity,
    };
    profile.validate()?;
    Ok(profile)
}
