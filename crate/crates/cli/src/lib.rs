//! Batch front-end: simulate datasets, run the odometry, evaluate outputs and
//! compare ablation variants.

pub mod config;

use std::fs;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use nvmap::ablation::{
    run_variant, single_threaded, variant, variants, AblationFlags, Switch, VariantOutcome,
};
use nvmap::dataset::{read_dataset, read_regions, write_dataset, Dataset, Meta};
use nvmap::evaluation::{
    ate, percent_change, thickness_report, timing_report, Metrics, ThicknessRecord,
    TimingComparison, TimingReport, DEFAULT_MAX_DT,
};
use nvmap::geometry::Pose;
use nvmap::normals::{compute_normals_with, radius_policy};
use nvmap::odometry::{run_odometry_from, FrameReport};
use nvmap::ply::{normal_cloud_table, read_map, write_map};
use nvmap::trajectory::Trajectory;

use config::RunConfig;

#[derive(Debug, Parser)]
#[command(name = "nvmap", version, about = "Dual-sided voxel mapping toolkit")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Render a preset into a dataset directory.
    Simulate(SimulateArgs),
    /// Run the odometry on a dataset.
    Run(RunArgs),
    /// Score a trajectory and/or a map.
    Eval(EvalArgs),
    /// Run the variant matrix on a dataset.
    Ablate(AblateArgs),
    /// Write one scan of a dataset with its estimated normals.
    ExportPly(ExportArgs),
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long)]
    pub preset: Option<String>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Print the preset names and exit.
    #[arg(long)]
    pub list: bool,
}

/// Command-line overrides of the ablation switches.
#[derive(Debug, Args, Default)]
pub struct FlagArgs {
    #[arg(long, value_name = "on|off")]
    pub dual_side: Option<Switch>,
    #[arg(long, value_name = "on|off")]
    pub normal_gate: Option<Switch>,
    #[arg(long, value_name = "on|off")]
    pub lru: Option<Switch>,
    #[arg(long, value_name = "on|off")]
    pub adaptive_radius: Option<Switch>,
    #[arg(long, value_name = "METERS")]
    pub fixed_radius: Option<f64>,
}

impl FlagArgs {
    fn apply(&self, flags: &mut AblationFlags) {
        let set = |dst: &mut Switch, v: Option<Switch>| {
            if let Some(v) = v {
                *dst = v;
            }
        };
        set(&mut flags.dual_side, self.dual_side);
        set(&mut flags.normal_gate, self.normal_gate);
        set(&mut flags.lru, self.lru);
        set(&mut flags.adaptive_radius, self.adaptive_radius);
        if let Some(r) = self.fixed_radius {
            flags.fixed_radius = r;
        }
    }
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[arg(long)]
    pub dataset: PathBuf,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub flags: FlagArgs,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Estimated trajectory (TUM).
    #[arg(long, requires = "gt")]
    pub est: Option<PathBuf>,
    /// Ground-truth trajectory (TUM).
    #[arg(long, requires = "est")]
    pub gt: Option<PathBuf>,
    #[arg(long, requires = "regions")]
    pub map: Option<PathBuf>,
    /// JSON list of regions.
    #[arg(long, requires = "map")]
    pub regions: Option<PathBuf>,
    /// Timing JSON written by `run`, copied into the metrics.
    #[arg(long)]
    pub timing: Option<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_MAX_DT)]
    pub max_dt: f64,
    /// Metrics JSON destination.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct AblateArgs {
    #[arg(long)]
    pub dataset: PathBuf,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Comma-separated subset of the variant matrix.
    #[arg(long, value_delimiter = ',')]
    pub variants: Option<Vec<String>>,
}

#[derive(Debug, Args)]
pub struct ExportArgs {
    #[arg(long)]
    pub dataset: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub frame: usize,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

pub fn execute(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Simulate(a) => cmd_simulate(&a),
        Command::Run(a) => cmd_run(&a),
        Command::Eval(a) => cmd_eval(&a),
        Command::Ablate(a) => cmd_ablate(&a),
        Command::ExportPly(a) => cmd_export_ply(&a),
    }
}

/// Exit status: 0 success, 1 user error, 2 internal failure.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match catch_unwind(AssertUnwindSafe(|| execute(cli))) {
        Ok(Ok(())) => 0,
        Ok(Err(e)) => {
            eprintln!("error: {e:#}");
            1
        }
        Err(_) => {
            eprintln!("internal error");
            2
        }
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    fs::write(path, text + "\n").with_context(|| format!("writing {}", path.display()))
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

pub fn cmd_simulate(a: &SimulateArgs) -> Result<()> {
    if a.list {
        for name in nvmap::simulator::presets().names() {
            println!("{name}");
        }
        return Ok(());
    }
    let mut cfg = RunConfig::load_or_default(a.config.as_deref())?;
    if let Some(p) = &a.preset {
        cfg.preset = p.clone();
    }
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    let out = cfg.output_dir(a.out.as_deref())?;
    let preset = cfg.preset()?;
    let (scans, gt) = preset.generate()?;
    write_dataset(&out, &Meta::for_preset(&preset, scans.len()), &scans, &gt)?;
    println!(
        "{}: {} scans, {:.1} m path -> {}",
        preset.name,
        scans.len(),
        gt.path_length(),
        out.display()
    );
    Ok(())
}

fn load_dataset(dir: &Path) -> Result<Dataset> {
    read_dataset(dir).with_context(|| format!("loading dataset {}", dir.display()))
}

fn initial_pose(ds: &Dataset) -> Pose {
    ds.gt
        .as_ref()
        .and_then(|g| g.poses().first().copied())
        .unwrap_or_else(Pose::identity)
}

/// Per-frame record without wall-clock fields, so reruns produce identical files.
#[derive(Debug, Serialize)]
struct FrameSummary {
    index: usize,
    timestamp: f64,
    converged: bool,
    failed: bool,
    iterations: usize,
    correspondences: usize,
    valid_normals: usize,
    stored_front: usize,
    stored_back: usize,
    evictions: usize,
    map_blocks: usize,
}

impl From<&FrameReport> for FrameSummary {
    fn from(f: &FrameReport) -> Self {
        Self {
            index: f.index,
            timestamp: f.timestamp,
            converged: f.converged,
            failed: f.failed,
            iterations: f.iterations,
            correspondences: f.correspondences,
            valid_normals: f.valid_normals,
            stored_front: f.stored_front,
            stored_back: f.stored_back,
            evictions: f.evictions,
            map_blocks: f.map_blocks,
        }
    }
}

#[derive(Debug, Serialize)]
struct RunReport {
    preset: String,
    seed: u64,
    frames: usize,
    failed_frames: Vec<usize>,
    unconverged_frames: Vec<usize>,
    ate_rmse_m: Option<f64>,
    per_region_thickness: Vec<ThicknessRecord>,
    map_blocks: usize,
    peak_blocks: usize,
    evictions: usize,
    per_frame: Vec<FrameSummary>,
}

pub fn cmd_run(a: &RunArgs) -> Result<()> {
    let mut cfg = RunConfig::load_or_default(a.config.as_deref())?;
    a.flags.apply(&mut cfg.ablation);
    let out = cfg.output_dir(a.out.as_deref())?;
    let opts = cfg.odometry_options();
    opts.validate()?;
    let ds = load_dataset(&a.dataset)?;
    let result = run_odometry_from(&ds.scans, &opts, &initial_pose(&ds))?;

    create_dir(&out)?;
    fs::write(out.join("config.toml"), cfg.to_toml()?).context("writing config echo")?;
    result.trajectory.write_tum(&out.join("trajectory.txt"))?;
    write_map(&result.map, &out.join("map.ply"))?;
    write_json(&out.join("timing.json"), &result.timing())?;

    let ate_rmse_m = match &ds.gt {
        Some(gt) => Some(ate(&result.trajectory, gt, DEFAULT_MAX_DT)?.rmse),
        None => None,
    };
    let report = RunReport {
        preset: ds.meta.preset.clone(),
        seed: ds.meta.seed,
        frames: result.frames.len(),
        failed_frames: result.failed_frames(),
        unconverged_frames: result.unconverged_frames(),
        ate_rmse_m,
        per_region_thickness: thickness_report(&result.map.points(), &ds.meta.regions),
        map_blocks: result.map.len(),
        peak_blocks: result.map.peak_len(),
        evictions: result.map.total_evictions(),
        per_frame: result.frames.iter().map(FrameSummary::from).collect(),
    };
    write_json(&out.join("report.json"), &report)?;
    println!(
        "{} frames, {} failed, {} unconverged, ATE {} -> {}",
        report.frames,
        report.failed_frames.len(),
        report.unconverged_frames.len(),
        ate_rmse_m.map_or("n/a".to_string(), |v| format!("{v:.4} m")),
        out.display()
    );
    Ok(())
}

fn print_metrics(m: &Metrics) {
    if let Some(a) = m.ate_rmse_m {
        println!("{:<24} {:>12.6} m", "ate_rmse", a);
    }
    if !m.per_region_thickness.is_empty() {
        println!(
            "{:<16} {:>10} {:>10} {:>9} {:>7} {:>7}",
            "region", "truth_m", "measured_m", "change_%", "front", "back"
        );
        for r in &m.per_region_thickness {
            let f = |v: Option<f64>, p: usize| {
                v.map_or("-".to_string(), |x| format!("{x:.prec$}", prec = p))
            };
            println!(
                "{:<16} {:>10} {:>10} {:>9} {:>7} {:>7}",
                r.region_id,
                f(r.truth_m, 4),
                f(r.measured_m, 4),
                f(r.percent_change, 2),
                r.front_points,
                r.back_points
            );
        }
    }
    if let Some(t) = &m.timing {
        for (name, v) in t.stages() {
            println!("{:<24} {:>12.4} s", name, v);
        }
    }
}

pub fn cmd_eval(a: &EvalArgs) -> Result<()> {
    if a.est.is_none() && a.map.is_none() {
        bail!("nothing to evaluate: pass --est/--gt and/or --map/--regions");
    }
    let mut m = Metrics::default();
    if let (Some(est), Some(gt)) = (&a.est, &a.gt) {
        let est =
            Trajectory::read_tum(est).with_context(|| format!("reading {}", est.display()))?;
        let gt = Trajectory::read_tum(gt).with_context(|| format!("reading {}", gt.display()))?;
        m.ate_rmse_m = Some(ate(&est, &gt, a.max_dt)?.rmse);
    }
    let mut failures = Vec::new();
    if let (Some(map), Some(regions)) = (&a.map, &a.regions) {
        let points = read_map(map).with_context(|| format!("reading {}", map.display()))?;
        let regions = read_regions(regions)?;
        m.per_region_thickness = thickness_report(&points, &regions);
        failures = m
            .per_region_thickness
            .iter()
            .filter_map(|r| r.error.as_ref().map(|e| format!("{}: {e}", r.region_id)))
            .collect();
    }
    if let Some(t) = &a.timing {
        let text = fs::read_to_string(t).with_context(|| format!("reading {}", t.display()))?;
        m.timing = Some(
            serde_json::from_str::<TimingReport>(&text)
                .with_context(|| format!("parsing {}", t.display()))?,
        );
    }
    print_metrics(&m);
    if let Some(out) = &a.out {
        write_json(out, &m)?;
    }
    if !failures.is_empty() {
        bail!("{}", failures.join("; "));
    }
    Ok(())
}

#[derive(Debug, Serialize)]
pub struct PairwiseChange {
    pub baseline: String,
    pub variant: String,
    /// `(variant - baseline) / baseline * 100`; positive means the variant is less accurate.
    pub ate_percent_change: Option<f64>,
    /// Absolute thickness error in percent of truth, per region: (baseline, variant).
    pub thickness_abs_error_percent: Vec<(String, Option<f64>, Option<f64>)>,
    /// Mean per-frame stage times, baseline as `with`.
    pub timing: TimingComparison,
}

#[derive(Debug, Serialize)]
pub struct Comparison {
    pub preset: String,
    pub seed: u64,
    pub frames: usize,
    pub variants: Vec<VariantOutcome>,
    pub pairwise: Vec<PairwiseChange>,
    /// Mean per-frame timing with the LRU map against the unbounded map.
    pub lru_timing: Option<TimingComparison>,
    /// Unbounded over LRU mean map-update time.
    pub map_update_ratio: Option<f64>,
}

fn pairwise(base: &VariantOutcome, v: &VariantOutcome) -> PairwiseChange {
    let abs_err = |o: &VariantOutcome, id: &str| {
        o.thickness
            .iter()
            .find(|r| r.region_id == id)
            .and_then(|r| r.percent_change)
            .map(f64::abs)
    };
    PairwiseChange {
        baseline: base.name.clone(),
        variant: v.name.clone(),
        ate_percent_change: match (base.ate_rmse_m, v.ate_rmse_m) {
            (Some(b), Some(x)) if b > 0.0 => Some(percent_change(x, b)),
            _ => None,
        },
        thickness_abs_error_percent: base
            .thickness
            .iter()
            .map(|r| {
                (
                    r.region_id.clone(),
                    abs_err(base, &r.region_id),
                    abs_err(v, &r.region_id),
                )
            })
            .collect(),
        timing: timing_report(&base.mean_timing, &v.mean_timing, &base.name, &v.name),
    }
}

pub fn cmd_ablate(a: &AblateArgs) -> Result<()> {
    let cfg = RunConfig::load_or_default(a.config.as_deref())?;
    let out = cfg.output_dir(a.out.as_deref())?;
    let names: Vec<String> = match &a.variants {
        Some(v) => v.clone(),
        None => variants().names().iter().map(|s| s.to_string()).collect(),
    };
    let flags = names
        .iter()
        .map(|n| variant(n))
        .collect::<Result<Vec<_>, _>>()?;
    let base = cfg.odometry_options();
    base.validate()?;
    let ds = load_dataset(&a.dataset)?;
    create_dir(&out)?;
    fs::write(out.join("config.toml"), cfg.to_toml()?).context("writing config echo")?;

    let mut outcomes = Vec::new();
    for (name, f) in names.iter().zip(&flags) {
        log::info!("variant {name}");
        let run = catch_unwind(AssertUnwindSafe(|| {
            single_threaded(|| {
                run_variant(name, f, &base, &ds.scans, ds.gt.as_ref(), &ds.meta.regions)
            })
        }));
        let outcome = match run {
            Ok((outcome, Some(result))) => {
                let dir = out.join(name);
                create_dir(&dir)?;
                result.trajectory.write_tum(&dir.join("trajectory.txt"))?;
                write_map(&result.map, &dir.join("map.ply"))?;
                outcome
            }
            Ok((outcome, None)) => outcome,
            Err(_) => {
                let (mut outcome, _) = run_variant(name, f, &base, &[], None, &[]);
                outcome.error = Some("variant panicked".into());
                outcome
            }
        };
        println!(
            "{:<14} ATE {:>10} failed {:>3} {}",
            name,
            outcome
                .ate_rmse_m
                .map_or("n/a".to_string(), |v| format!("{v:.4} m")),
            outcome.failed_frames.len(),
            outcome.error.as_deref().unwrap_or("")
        );
        outcomes.push(outcome);
    }

    let full = outcomes
        .iter()
        .find(|o| o.name == "full" && o.error.is_none());
    let no_lru = outcomes
        .iter()
        .find(|o| o.name == "no_lru" && o.error.is_none());
    let pairs = match full {
        Some(b) => outcomes
            .iter()
            .filter(|o| o.name != b.name)
            .map(|o| pairwise(b, o))
            .collect(),
        None => Vec::new(),
    };
    let lru_timing = full
        .zip(no_lru)
        .map(|(w, wo)| timing_report(&w.mean_timing, &wo.mean_timing, "lru", "unbounded"));
    let map_update_ratio = lru_timing
        .as_ref()
        .filter(|t| t.with.map_update > 0.0)
        .map(|t| t.without.map_update / t.with.map_update);
    let cmp = Comparison {
        preset: ds.meta.preset.clone(),
        seed: ds.meta.seed,
        frames: ds.scans.len(),
        variants: outcomes,
        pairwise: pairs,
        lru_timing,
        map_update_ratio,
    };
    write_json(&out.join("comparison.json"), &cmp)?;
    if let Some(t) = &cmp.lru_timing {
        println!(
            "map update with LRU {:+.2}% vs unbounded",
            t.percent_change.map_update
        );
    }
    Ok(())
}

pub fn cmd_export_ply(a: &ExportArgs) -> Result<()> {
    let cfg = RunConfig::load_or_default(a.config.as_deref())?;
    let opts = cfg.odometry_options();
    opts.validate()?;
    let ds = load_dataset(&a.dataset)?;
    let Some(scan) = ds.scans.get(a.frame) else {
        bail!(
            "frame {} out of range; dataset has {} scans",
            a.frame,
            ds.scans.len()
        );
    };
    let radius = radius_policy(&opts.radius_policy, &opts.normal, opts.fixed_radius)?;
    let cloud = compute_normals_with(scan, &opts.normal, radius.as_ref());
    normal_cloud_table(&cloud).write(&a.out)?;
    println!(
        "{} points, {} valid normals -> {}",
        cloud.points.len(),
        cloud.valid_count(),
        a.out.display()
    );
    Ok(())
}
