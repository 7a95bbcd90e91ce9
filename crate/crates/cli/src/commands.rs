use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use mramsim_core::allocator::build_pool;
use mramsim_core::calibration::CalibrationTargets;
use mramsim_core::characterization::{
    characterize_detailed, write_stats_csv, ErrorMap, Granularity,
};
use mramsim_core::quality::{write_report_csv, Packing};
use mramsim_core::{
    calibrate_profile, characterize, compute_stats, run_image_experiment, sweep_t_w, ChipModel,
    ImageBuffer, ModelId, PowerCurve,
};

use crate::config::{load_profile, Experiment};
use crate::{
    CalibrateArgs, CharacterizeArgs, ImageArgs, ProfileArgs, ReportArgs, SweepArgs, UsageError,
};

/// Writes `bytes` to `dir/name` through a temporary file in the same
/// directory, so readers never see a partial file.
fn write_atomic(dir: &Path, name: &str, bytes: &[u8]) -> anyhow::Result<PathBuf> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let path = dir.join(name);
    let mut tmp = tempfile::NamedTempFile::new_in(dir)
        .with_context(|| format!("creating a temporary file in {}", dir.display()))?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(&path)
        .with_context(|| format!("writing {}", path.display()))?;
    Ok(path)
}

fn csv_bytes(f: impl FnOnce(&mut Vec<u8>) -> mramsim_core::Result<()>) -> anyhow::Result<Vec<u8>> {
    let mut buf = Vec::new();
    f(&mut buf)?;
    Ok(buf)
}

pub fn characterize_cmd(args: &CharacterizeArgs) -> anyhow::Result<()> {
    let exp = Experiment::resolve(&args.common)?;
    let t_w = exp.t_w(args.tw);
    let n = exp.n(args.n);
    let pattern = exp.pattern(args.pattern.as_deref())?;
    let mut chip = exp.chip()?;

    let map = characterize(&mut chip, t_w, n, &pattern, &exp.env)?;
    if map.is_empty() {
        eprintln!(
            "warning: no erroneous addresses at t_w = {t_w} ns{}",
            if t_w >= 15.0 {
                " (rated pulse width)"
            } else {
                ""
            }
        );
    }
    // A fresh single measurement on the same chip supplies the M/C columns.
    let eval = characterize(&mut chip, t_w, 1, &pattern, &exp.env)?;
    let stats = compute_stats(&map, &eval)?;

    let pattern_name = pattern.to_string();
    let stats_csv = csv_bytes(|b| {
        write_stats_csv(
            b,
            [(map.chip_id.as_str(), pattern_name.as_str(), t_w, stats)],
        )
    })?;
    write_atomic(&exp.out, "errmap.json", map.to_json()?.as_bytes())?;
    write_atomic(&exp.out, "stats.csv", &stats_csv)?;
    Ok(())
}

pub fn sweep_cmd(args: &SweepArgs) -> anyhow::Result<()> {
    let exp = Experiment::resolve(&args.common)?;
    let t_ws = exp.t_w_list(&args.tw);
    let pattern = exp.pattern(args.pattern.as_deref())?;
    let curve = match &args.curve {
        Some(p) => {
            let f = std::fs::File::open(p).with_context(|| format!("opening {}", p.display()))?;
            PowerCurve::from_csv(f).with_context(|| format!("reading {}", p.display()))?
        }
        None => PowerCurve::default(),
    };
    let points = sweep_t_w(
        || ChipModel::new(exp.profile.clone(), exp.seed),
        &t_ws,
        &pattern,
        &exp.env,
    )?;

    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "t_w_ns",
        "failed_bit_pct",
        "current_saving_pct",
        "power_reduction_pct",
    ])?;
    for p in &points {
        let saving = curve.current_saving(p.t_w, args.t_full)?;
        let power = curve.power_reduction(p.t_w, args.t_full)?;
        w.write_record([
            format!("{}", p.t_w),
            format!("{:.4}", 100.0 * p.failed_fraction()),
            format!("{:.4}", 100.0 * saving),
            format!("{:.4}", 100.0 * power),
        ])?;
    }
    let bytes = w.into_inner().map_err(|e| anyhow::anyhow!("{e}"))?;
    write_atomic(&exp.out, "sweep.csv", &bytes)?;
    Ok(())
}

pub fn image_cmd(args: &ImageArgs) -> anyhow::Result<()> {
    let exp = Experiment::resolve(&args.common)?;
    let Some(image_path) = args.image.clone().or(exp.file.image.clone()) else {
        bail!(UsageError("image: --image is required".into()));
    };
    let t_w = exp.t_w(args.tw);
    let init = exp.init(args.init.as_deref())?;
    let selection = exp.selection(args.select.as_deref())?;
    let packing = if args.two_per_word {
        Packing::TwoPerWord
    } else {
        Packing::OnePerWord
    };

    let bytes =
        std::fs::read(&image_path).with_context(|| format!("reading {}", image_path.display()))?;
    let image = ImageBuffer::from_pgm(&bytes)
        .with_context(|| format!("parsing {}", image_path.display()))?;
    let mut chip = exp.chip()?;

    let pool = match selection {
        mramsim_core::Selection::None => None,
        mramsim_core::Selection::Strategy1 => {
            let n = exp.n(args.n);
            let pattern = exp.pattern(args.pattern.as_deref())?;
            let c = characterize_detailed(&mut chip, t_w, n, &pattern, &exp.env)?;
            let sorted = c.sorted(Granularity::Word)?;
            Some(build_pool(&c.map, chip.capacity(), &sorted)?)
        }
    };
    let result = run_image_experiment(
        &mut chip,
        &image,
        init,
        selection,
        t_w,
        &exp.env,
        pool.as_ref(),
        packing,
    )?;

    let name = image_path
        .file_name()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    let report = csv_bytes(|b| {
        write_report_csv(b, [(name.as_str(), init, selection, t_w, &result.report)])
    })?;
    write_atomic(&exp.out, "readback.pgm", &result.readback.to_pgm())?;
    write_atomic(&exp.out, "report.csv", &report)?;
    Ok(())
}

fn read_map(path: &Path) -> anyhow::Result<ErrorMap> {
    let text =
        std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    ErrorMap::from_json(&text).with_context(|| format!("parsing {}", path.display()))
}

pub fn report_cmd(args: &ReportArgs) -> anyhow::Result<()> {
    let char_map = read_map(&args.char_map)?;
    let evals = args
        .eval
        .iter()
        .map(|p| read_map(p))
        .collect::<anyhow::Result<Vec<_>>>()?;
    let mut rows = Vec::with_capacity(evals.len());
    for (path, eval) in args.eval.iter().zip(&evals) {
        if eval.t_w != char_map.t_w {
            bail!(mramsim_core::Error::Mismatch(format!(
                "{} was measured at t_w = {} ns, the characterization at {} ns",
                path.display(),
                eval.t_w,
                char_map.t_w
            )));
        }
        rows.push((
            eval.chip_id.as_str(),
            eval.pattern.as_str(),
            eval.t_w,
            compute_stats(&char_map, eval)?,
        ));
    }
    let bytes = csv_bytes(|b| write_stats_csv(b, rows))?;
    let out = args.out.clone().unwrap_or_else(|| PathBuf::from("."));
    write_atomic(&out, "report.csv", &bytes)?;
    Ok(())
}

pub fn profile_cmd(args: &ProfileArgs) -> anyhow::Result<()> {
    let profile = load_profile(args.profile.clone(), args.profile_path.clone())?;
    let json = profile.to_json() + "\n";
    match &args.out {
        Some(dir) => {
            write_atomic(dir, "profile.json", json.as_bytes())?;
        }
        None => print!("{json}"),
    }
    Ok(())
}

pub fn calibrate_cmd(args: &CalibrateArgs) -> anyhow::Result<()> {
    let targets = match (&args.targets, &args.model) {
        (Some(_), Some(_)) => bail!(UsageError(
            "--targets and --model are mutually exclusive".into()
        )),
        (Some(p), None) => {
            let text =
                std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            serde_json::from_str::<CalibrationTargets>(&text)
                .map_err(|e| UsageError(format!("targets {}: {e}", p.display())))?
        }
        (None, model) => {
            let m: ModelId = match model {
                Some(s) => s.parse().map_err(|e| UsageError(format!("{e}")))?,
                None => ModelId::C1,
            };
            CalibrationTargets::for_model(m)
        }
    };
    let profile = calibrate_profile(&targets)?;
    let json = profile.to_json() + "\n";
    match &args.out {
        Some(dir) => {
            write_atomic(dir, "profile.json", json.as_bytes())?;
        }
        None => print!("{json}"),
    }
    Ok(())
}
