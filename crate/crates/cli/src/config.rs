//! Experiment settings merged from flags, an optional JSON file and the
//! environment. Flags win over the file, the file wins over `MRAMSIM_SEED`.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use clap::Args;
use mramsim_core::quality::{InitPattern, Selection};
use mramsim_core::{ChipModel, ChipProfile, Environment, ModelId, Pattern};
use serde::Deserialize;

use crate::UsageError;

pub const SEED_ENV: &str = "MRAMSIM_SEED";

/// Flags shared by every experiment command.
#[derive(Debug, Clone, Default, Args)]
pub struct CommonArgs {
    /// JSON file with default settings; flags override it.
    #[arg(long, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Built-in chip profile (C1..C5).
    #[arg(long)]
    pub profile: Option<String>,
    /// Chip profile JSON file, instead of --profile.
    #[arg(long, value_name = "FILE")]
    pub profile_path: Option<PathBuf>,
    /// Process-variation seed [env: MRAMSIM_SEED].
    #[arg(long)]
    pub seed: Option<u64>,
    /// Ambient temperature in °C.
    #[arg(long = "temp", value_name = "CELSIUS")]
    pub temperature: Option<f64>,
    /// External magnetic field in mT.
    #[arg(long = "field", value_name = "MT")]
    pub field: Option<f64>,
    /// Output directory.
    #[arg(long = "out", value_name = "DIR")]
    pub out: Option<PathBuf>,
}

/// Either a single pulse width or a list of them.
#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum OneOrMany {
    One(f64),
    Many(Vec<f64>),
}

impl OneOrMany {
    fn into_vec(self) -> Vec<f64> {
        match self {
            OneOrMany::One(x) => vec![x],
            OneOrMany::Many(v) => v,
        }
    }
}

/// Contents of a `--config` file. Every field is optional.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub profile: Option<String>,
    pub profile_path: Option<PathBuf>,
    pub seed: Option<u64>,
    pub t_w_ns: Option<OneOrMany>,
    pub n_measurements: Option<usize>,
    pub pattern: Option<String>,
    pub temperature_c: Option<f64>,
    pub field_mt: Option<f64>,
    pub output_dir: Option<PathBuf>,
    pub init: Option<String>,
    pub selection: Option<String>,
    pub image: Option<PathBuf>,
}

impl FileConfig {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        serde_json::from_str(&text)
            .map_err(|e| UsageError(format!("config {}: {e}", path.display())).into())
    }
}

/// Fully resolved settings of one run.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub profile: ChipProfile,
    pub seed: u64,
    pub env: Environment,
    pub out: PathBuf,
    pub file: FileConfig,
}

impl Experiment {
    pub fn resolve(args: &CommonArgs) -> anyhow::Result<Self> {
        let file = match &args.config {
            Some(p) => FileConfig::load(p)?,
            None => FileConfig::default(),
        };
        let profile = load_profile(
            args.profile.clone().or(file.profile.clone()),
            args.profile_path.clone().or(file.profile_path.clone()),
        )?;
        let seed = match args.seed.or(file.seed) {
            Some(s) => s,
            None => seed_from_env()?,
        };
        let env = Environment {
            temperature: args
                .temperature
                .or(file.temperature_c)
                .unwrap_or(mramsim_core::device::ROOM_TEMPERATURE_C),
            magnetic_field: args.field.or(file.field_mt).unwrap_or(0.0),
        };
        let out = args
            .out
            .clone()
            .or(file.output_dir.clone())
            .unwrap_or_else(|| PathBuf::from("."));
        Ok(Experiment {
            profile,
            seed,
            env,
            out,
            file,
        })
    }

    pub fn chip(&self) -> anyhow::Result<ChipModel> {
        Ok(ChipModel::new(self.profile.clone(), self.seed)?)
    }

    pub fn t_w(&self, flag: Option<f64>) -> f64 {
        flag.or_else(|| {
            self.file
                .t_w_ns
                .clone()
                .and_then(|v| v.into_vec().first().copied())
        })
        .unwrap_or(5.0)
    }

    pub fn t_w_list(&self, flag: &[f64]) -> Vec<f64> {
        if !flag.is_empty() {
            return flag.to_vec();
        }
        self.file
            .t_w_ns
            .clone()
            .map(OneOrMany::into_vec)
            .unwrap_or_else(|| vec![2.5, 5.0, 10.0, 15.0])
    }

    pub fn n(&self, flag: Option<usize>) -> usize {
        flag.or(self.file.n_measurements).unwrap_or(50)
    }

    pub fn pattern(&self, flag: Option<&str>) -> anyhow::Result<Pattern> {
        let s = flag
            .map(str::to_string)
            .or(self.file.pattern.clone())
            .unwrap_or_else(|| "solid:0000".into());
        s.parse().map_err(|e| UsageError(format!("{e}")).into())
    }

    pub fn init(&self, flag: Option<&str>) -> anyhow::Result<InitPattern> {
        let s = flag
            .map(str::to_string)
            .or(self.file.init.clone())
            .unwrap_or_else(|| "ones".into());
        s.parse().map_err(|e| UsageError(format!("{e}")).into())
    }

    pub fn selection(&self, flag: Option<&str>) -> anyhow::Result<Selection> {
        let s = flag
            .map(str::to_string)
            .or(self.file.selection.clone())
            .unwrap_or_else(|| "none".into());
        s.parse().map_err(|e| UsageError(format!("{e}")).into())
    }
}

fn seed_from_env() -> anyhow::Result<u64> {
    match std::env::var(SEED_ENV) {
        Ok(v) => v
            .trim()
            .parse()
            .map_err(|_| UsageError(format!("{SEED_ENV}='{v}' is not an unsigned integer")).into()),
        Err(_) => Ok(0),
    }
}

pub fn load_profile(id: Option<String>, path: Option<PathBuf>) -> anyhow::Result<ChipProfile> {
    match (id, path) {
        (Some(_), Some(_)) => bail!(UsageError(
            "--profile and --profile-path are mutually exclusive".into()
        )),
        (None, Some(p)) => Ok(
            ChipProfile::load(&p).with_context(|| format!("loading profile {}", p.display()))?
        ),
        (Some(id), None) => {
            let model: ModelId = id.parse().map_err(|e| UsageError(format!("{e}")))?;
            Ok(ChipProfile::preset(model))
        }
        (None, None) => Ok(ChipProfile::preset(ModelId::C1)),
    }
}
