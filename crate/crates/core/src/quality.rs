//! Image read-back experiments and the SNR / MSE metrics.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::allocator::{AddressPool, AllocationRequest, Allocator};
use crate::device::{ChipModel, Environment, Word, WriteTimings};
use crate::error::{Error, Result};

/// 8-bit grayscale image, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ImageBuffer {
    width: usize,
    height: usize,
    pixels: Vec<u8>,
}

impl ImageBuffer {
    pub fn new(width: usize, height: usize, pixels: Vec<u8>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidArgument(format!(
                "image size {width}x{height}"
            )));
        }
        if pixels.len() != width * height {
            return Err(Error::InvalidArgument(format!(
                "{} pixels for a {width}x{height} image",
                pixels.len()
            )));
        }
        Ok(ImageBuffer {
            width,
            height,
            pixels,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    /// Parses a binary PGM (P5) with maxval 255.
    pub fn from_pgm(bytes: &[u8]) -> Result<Self> {
        let mut pos = 0;
        let mut token = || -> Result<String> {
            loop {
                match bytes.get(pos) {
                    Some(b'#') => {
                        while bytes.get(pos).is_some_and(|&c| c != b'\n') {
                            pos += 1;
                        }
                    }
                    Some(c) if c.is_ascii_whitespace() => pos += 1,
                    Some(_) => break,
                    None => return Err(Error::Parse("truncated PGM header".into())),
                }
            }
            let start = pos;
            while bytes.get(pos).is_some_and(|c| !c.is_ascii_whitespace()) {
                pos += 1;
            }
            Ok(String::from_utf8_lossy(&bytes[start..pos]).into_owned())
        };
        if token()? != "P5" {
            return Err(Error::Parse("not a binary PGM (missing P5 magic)".into()));
        }
        let mut number = |what: &str| -> Result<usize> {
            let t = token()?;
            t.parse()
                .map_err(|_| Error::Parse(format!("PGM {what} '{t}' is not a number")))
        };
        let width = number("width")?;
        let height = number("height")?;
        let maxval = number("maxval")?;
        if maxval != 255 {
            return Err(Error::Parse(format!(
                "PGM maxval {maxval}, only 255 is supported"
            )));
        }
        if width == 0 || height == 0 {
            return Err(Error::Parse(format!("PGM size {width}x{height}")));
        }
        // Exactly one whitespace byte separates the header from the raster.
        if !bytes.get(pos).is_some_and(|c| c.is_ascii_whitespace()) {
            return Err(Error::Parse("truncated PGM header".into()));
        }
        let data = &bytes[pos + 1..];
        let n = width
            .checked_mul(height)
            .ok_or_else(|| Error::Parse("PGM size overflows".into()))?;
        if data.len() != n {
            return Err(Error::Parse(format!(
                "PGM raster has {} bytes, expected {n}",
                data.len()
            )));
        }
        Self::new(width, height, data.to_vec())
    }

    pub fn to_pgm(&self) -> Vec<u8> {
        let mut out = format!("P5\n{} {}\n255\n", self.width, self.height).into_bytes();
        out.extend_from_slice(&self.pixels);
        out
    }

    fn check_same_shape(&self, other: &ImageBuffer) -> Result<()> {
        if self.width != other.width || self.height != other.height {
            return Err(Error::Mismatch(format!(
                "image sizes differ: {}x{} vs {}x{}",
                self.width, self.height, other.width, other.height
            )));
        }
        Ok(())
    }
}

fn squared_error(original: &ImageBuffer, approx: &ImageBuffer) -> Result<u64> {
    original.check_same_shape(approx)?;
    Ok(original
        .pixels
        .iter()
        .zip(&approx.pixels)
        .map(|(&f, &g)| {
            let d = g as i64 - f as i64;
            (d * d) as u64
        })
        .sum())
}

/// Σ f̂² / Σ (f̂ − f)², infinite for a lossless read-back.
pub fn snr(original: &ImageBuffer, approx: &ImageBuffer) -> Result<f64> {
    let noise = squared_error(original, approx)?;
    if noise == 0 {
        return Ok(f64::INFINITY);
    }
    let signal: u64 = approx.pixels.iter().map(|&g| (g as u64) * (g as u64)).sum();
    Ok(signal as f64 / noise as f64)
}

/// Mean of the squared pixel differences.
pub fn mse(original: &ImageBuffer, approx: &ImageBuffer) -> Result<f64> {
    let noise = squared_error(original, approx)?;
    Ok(noise as f64 / original.pixels.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QualityReport {
    pub snr: f64,
    pub snr_db: f64,
    pub mse: f64,
    pub erroneous_pixels: usize,
}

impl QualityReport {
    pub fn evaluate(original: &ImageBuffer, approx: &ImageBuffer) -> Result<Self> {
        let snr = snr(original, approx)?;
        let erroneous_pixels = original
            .pixels
            .iter()
            .zip(&approx.pixels)
            .filter(|(a, b)| a != b)
            .count();
        Ok(QualityReport {
            snr,
            snr_db: 10.0 * snr.log10(),
            mse: mse(original, approx)?,
            erroneous_pixels,
        })
    }

    pub fn is_lossless(&self) -> bool {
        self.erroneous_pixels == 0
    }
}

/// Background written over the whole chip before the image.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitPattern {
    AllOnes,
    AllZeros,
}

impl InitPattern {
    pub fn word(self) -> Word {
        match self {
            InitPattern::AllOnes => 0xFFFF,
            InitPattern::AllZeros => 0x0000,
        }
    }
}

impl fmt::Display for InitPattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            InitPattern::AllOnes => "ones",
            InitPattern::AllZeros => "zeros",
        })
    }
}

impl FromStr for InitPattern {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "ones" | "all_ones" | "all-ones" => Ok(InitPattern::AllOnes),
            "zeros" | "all_zeros" | "all-zeros" => Ok(InitPattern::AllZeros),
            _ => Err(Error::Parse(format!(
                "unknown init pattern '{s}' (ones|zeros)"
            ))),
        }
    }
}

/// How image words are placed in memory.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Selection {
    /// Consecutive addresses from 0.
    None,
    /// Through the allocator, accurate addresses first.
    Strategy1,
}

impl fmt::Display for Selection {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Selection::None => "none",
            Selection::Strategy1 => "strategy1",
        })
    }
}

impl FromStr for Selection {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "none" => Ok(Selection::None),
            "strategy1" | "s1" => Ok(Selection::Strategy1),
            _ => Err(Error::Parse(format!(
                "unknown selection '{s}' (none|strategy1)"
            ))),
        }
    }
}

/// Pixel-to-word packing.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Packing {
    /// Pixel in the low byte, high byte zero.
    #[default]
    OnePerWord,
    /// Even pixel in the low byte, odd pixel in the high byte.
    TwoPerWord,
}

impl Packing {
    pub fn pack(self, pixels: &[u8]) -> Vec<Word> {
        match self {
            Packing::OnePerWord => pixels.iter().map(|&p| p as Word).collect(),
            Packing::TwoPerWord => pixels
                .chunks(2)
                .map(|c| c[0] as Word | (c.get(1).copied().unwrap_or(0) as Word) << 8)
                .collect(),
        }
    }

    pub fn unpack(self, words: &[Word], n_pixels: usize) -> Vec<u8> {
        let mut out: Vec<u8> = match self {
            Packing::OnePerWord => words.iter().map(|&w| w as u8).collect(),
            Packing::TwoPerWord => words
                .iter()
                .flat_map(|&w| [w as u8, (w >> 8) as u8])
                .collect(),
        };
        out.truncate(n_pixels);
        out
    }
}

#[derive(Debug, Clone)]
pub struct ImageExperiment {
    pub readback: ImageBuffer,
    pub report: QualityReport,
    /// Physical address of each stored word, in pixel order.
    pub addresses: Vec<u32>,
}

/// Resets the chip to `init`, writes the image at pulse width `t_w` and reads
/// it back.
#[allow(clippy::too_many_arguments)]
pub fn run_image_experiment(
    chip: &mut ChipModel,
    image: &ImageBuffer,
    init: InitPattern,
    selection: Selection,
    t_w: f64,
    env: &Environment,
    pool: Option<&AddressPool>,
    packing: Packing,
) -> Result<ImageExperiment> {
    let words = packing.pack(image.pixels());
    if words.len() > chip.capacity() {
        return Err(Error::InvalidArgument(format!(
            "image needs {} words, chip has {}",
            words.len(),
            chip.capacity()
        )));
    }
    let addresses: Vec<u32> = match selection {
        Selection::None => (0..words.len() as u32).collect(),
        Selection::Strategy1 => {
            let pool = pool.ok_or_else(|| {
                Error::InvalidArgument("strategy1 selection needs an address pool".into())
            })?;
            if pool.capacity_words != chip.capacity() {
                return Err(Error::Mismatch(format!(
                    "pool covers {} words, chip has {}",
                    pool.capacity_words,
                    chip.capacity()
                )));
            }
            Allocator::new(pool.clone())?.allocate(AllocationRequest {
                words: words.len(),
                critical: false,
            })?
        }
    };

    chip.reset_memory(init.word());
    let kernel = chip.kernel(&WriteTimings::with_pulse_width(t_w), env)?;
    for (&addr, &w) in addresses.iter().zip(&words) {
        chip.write_with(addr as usize, w, &kernel);
    }
    let stored: Vec<Word> = addresses
        .iter()
        .map(|&a| chip.read_word(a as usize))
        .collect::<Result<_>>()?;
    let readback = ImageBuffer::new(
        image.width(),
        image.height(),
        packing.unpack(&stored, image.pixels().len()),
    )?;
    let report = QualityReport::evaluate(image, &readback)?;
    Ok(ImageExperiment {
        readback,
        report,
        addresses,
    })
}

pub const REPORT_CSV_HEADER: [&str; 7] = [
    "image",
    "init",
    "selection",
    "t_w_ns",
    "snr",
    "mse",
    "erroneous_pixels",
];

fn fmt_metric(x: f64) -> String {
    if x.is_infinite() {
        "inf".into()
    } else {
        format!("{x:.6}")
    }
}

/// Writes the header and one row per report.
pub fn write_report_csv<'a, W: Write>(
    out: W,
    rows: impl IntoIterator<Item = (&'a str, InitPattern, Selection, f64, &'a QualityReport)>,
) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(REPORT_CSV_HEADER)?;
    for (image, init, selection, t_w, r) in rows {
        w.write_record([
            image.to_string(),
            init.to_string(),
            selection.to_string(),
            t_w.to_string(),
            fmt_metric(r.snr),
            fmt_metric(r.mse),
            r.erroneous_pixels.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn img(w: usize, h: usize, px: &[u8]) -> ImageBuffer {
        ImageBuffer::new(w, h, px.to_vec()).unwrap()
    }

    #[test]
    fn metric_examples() {
        let a = img(2, 2, &[0, 0, 0, 0]);
        let b = img(2, 2, &[0, 1, 0, 0]);
        assert_eq!(snr(&a, &b).unwrap(), 1.0);
        assert_eq!(snr(&a, &a).unwrap(), f64::INFINITY);
        assert_eq!(mse(&a, &a).unwrap(), 0.0);
        assert_eq!(mse(&img(1, 1, &[10]), &img(1, 1, &[13])).unwrap(), 9.0);
        assert!(snr(&a, &img(4, 1, &[0; 4])).is_err());
        assert!(mse(&a, &img(1, 4, &[0; 4])).is_err());
    }

    #[test]
    fn report_duality() {
        let a = img(2, 1, &[5, 6]);
        let r = QualityReport::evaluate(&a, &a).unwrap();
        assert!(r.is_lossless() && r.mse == 0.0 && r.snr.is_infinite());
        let r = QualityReport::evaluate(&a, &img(2, 1, &[5, 8])).unwrap();
        assert_eq!(r.erroneous_pixels, 1);
        assert_eq!(r.mse, 2.0);
        assert_eq!(r.snr, (25.0 + 64.0) / 4.0);
        assert!((r.snr_db - 10.0 * 22.25f64.log10()).abs() < 1e-12);
    }

    #[test]
    fn pgm_round_trip() {
        let a = img(3, 2, &[0, 1, 2, 253, 254, 255]);
        let bytes = a.to_pgm();
        assert_eq!(&bytes[..11], b"P5\n3 2\n255\n");
        assert_eq!(ImageBuffer::from_pgm(&bytes).unwrap(), a);
    }

    #[test]
    fn pgm_with_comments() {
        let mut bytes = b"P5 # magic\n# a comment\n2   1\n255\n".to_vec();
        bytes.extend_from_slice(&[10, 32]);
        assert_eq!(ImageBuffer::from_pgm(&bytes).unwrap(), img(2, 1, &[10, 32]));
    }

    #[test]
    fn pgm_errors() {
        assert!(ImageBuffer::from_pgm(b"P2\n1 1\n255\n0").is_err());
        assert!(ImageBuffer::from_pgm(b"P5\n1 1\n65535\n00").is_err());
        assert!(ImageBuffer::from_pgm(b"P5\n2 2\n255\n000").is_err());
        assert!(ImageBuffer::from_pgm(b"P5\nx 2\n255\n0000").is_err());
        assert!(ImageBuffer::from_pgm(b"P5\n0 2\n255\n").is_err());
        assert!(ImageBuffer::from_pgm(b"P5\n1 1").is_err());
        assert!(ImageBuffer::from_pgm(b"").is_err());
    }

    #[test]
    fn packing() {
        let px = [1u8, 2, 3];
        assert_eq!(Packing::OnePerWord.pack(&px), vec![1, 2, 3]);
        assert_eq!(Packing::TwoPerWord.pack(&px), vec![0x0201, 0x0003]);
        for p in [Packing::OnePerWord, Packing::TwoPerWord] {
            assert_eq!(p.unpack(&p.pack(&px), 3), px);
        }
    }

    #[test]
    fn enum_parsing() {
        assert_eq!("ones".parse::<InitPattern>().unwrap(), InitPattern::AllOnes);
        assert_eq!(
            "all_zeros".parse::<InitPattern>().unwrap(),
            InitPattern::AllZeros
        );
        assert!("twos".parse::<InitPattern>().is_err());
        assert_eq!(
            "strategy1".parse::<Selection>().unwrap(),
            Selection::Strategy1
        );
        assert!("strategy2".parse::<Selection>().is_err());
    }

    #[test]
    fn csv_uses_inf() {
        let a = img(1, 1, &[1]);
        let r = QualityReport::evaluate(&a, &a).unwrap();
        let mut buf = Vec::new();
        write_report_csv(
            &mut buf,
            [("x.pgm", InitPattern::AllOnes, Selection::Strategy1, 5.0, &r)],
        )
        .unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "image,init,selection,t_w_ns,snr,mse,erroneous_pixels\nx.pgm,ones,strategy1,5,inf,0.000000,0\n"
        );
    }
}
