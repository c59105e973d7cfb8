//! Command-line front end. Every subcommand reads files, calls the library
//! and writes files; `run` returns the process exit code.
//!
//! Exit codes: 0 ok, 2 I/O or file-format failure, 3 invalid arguments,
//! 4 the data itself cannot be processed (e.g. a cyclic skeleton).

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::{info, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::{aggregate_reports, evaluate_case, reports_to_csv, MetricsReport};
use crate::morphology::{keep_largest_component, skeletonize};
use crate::nnmath::{all_losses, BranchMode, CenterlineVariant, LossWeights, Smooth};
use crate::preprocess::{extract_patches, plan_patches, reassemble, zscore_normalize, AugmentSampler, PatchGrid};
use crate::synthgen::{generate_tree, TreeSpec};
use crate::tree::{break_cycles, build_skeleton_graph, decompose_branches, label_branches, RootPolicy};
use crate::uncertainty::{aggregate, uncertainty_mask, PredictionStack};
use crate::volume::{load_volume, save_volume, Connectivity, Role, Shape, Volume};

pub const GRID_FORMAT_VERSION: u32 = 1;
pub const TABLE_FORMAT_VERSION: u32 = 1;

const VERSION: &str = concat!(
    env!("CARGO_PKG_VERSION"),
    " (grid.json format 1, table.json format 1)"
);

#[derive(Debug, Parser)]
#[command(name = "airway", version = VERSION, about = "Airway tree segmentation analysis toolkit")]
pub struct Cli {
    /// Seed for every randomized step.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Worker threads; 0 picks the number of cores.
    #[arg(long, global = true, default_value_t = 0)]
    pub threads: usize,
    #[arg(long, global = true, value_enum, default_value_t = LogLevel::Warn)]
    pub log_level: LogLevel,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum LogLevel {
    Error,
    Warn,
    Info,
    Debug,
    Trace,
}

impl From<LogLevel> for log::LevelFilter {
    fn from(l: LogLevel) -> Self {
        match l {
            LogLevel::Error => log::LevelFilter::Error,
            LogLevel::Warn => log::LevelFilter::Warn,
            LogLevel::Info => log::LevelFilter::Info,
            LogLevel::Debug => log::LevelFilter::Debug,
            LogLevel::Trace => log::LevelFilter::Trace,
        }
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Split a volume into fixed-size patches plus grid.json.
    Preprocess(PreprocessArgs),
    /// Rebuild a volume from patches and grid.json.
    Reassemble(ReassembleArgs),
    /// Apply a seeded random flip/rotate/scale.
    Augment(AugmentArgs),
    /// Keep only the largest connected component.
    Postprocess(PostprocessArgs),
    /// Score predictions against ground truth (single pair or two directories).
    Evaluate(EvaluateArgs),
    /// Mean and variance over a stack of stochastic predictions.
    Uncertainty(UncertaintyArgs),
    /// Thin a mask to its centerline.
    Skeletonize(SkeletonizeArgs),
    /// Decompose a mask's centerline into labeled branches.
    Branches(BranchesArgs),
    /// Dice, BCE, branch and centerline losses and their weighted total.
    Loss(LossArgs),
    /// Generate a synthetic tree from a JSON spec.
    Synth(SynthArgs),
}

#[derive(Debug, Args)]
pub struct PreprocessArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long)]
    pub out_dir: PathBuf,
    #[arg(long, value_parser = parse_triple, default_value = "128,96,144")]
    pub patch: Shape,
    /// Defaults to the patch shape (no overlap).
    #[arg(long, value_parser = parse_triple)]
    pub stride: Option<Shape>,
    #[arg(long)]
    pub normalize: bool,
    #[arg(long)]
    pub pad_value: Option<f32>,
}

#[derive(Debug, Args)]
pub struct ReassembleArgs {
    #[arg(long)]
    pub grid: PathBuf,
    /// Directory holding patch_NNNN.mhd; defaults to the grid's directory.
    #[arg(long)]
    pub patch_dir: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct AugmentArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Writes the sampled operations as JSON.
    #[arg(long)]
    pub ops_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PostprocessArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_parser = parse_connectivity, default_value = "26")]
    pub connectivity: Connectivity,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub pred: PathBuf,
    #[arg(long)]
    pub gt: PathBuf,
    #[arg(long, value_parser = parse_unit_f32, default_value_t = 0.5)]
    pub threshold: f32,
    #[arg(long)]
    pub postprocess: bool,
    #[arg(long, value_parser = parse_unit_f64, default_value_t = 0.8)]
    pub theta: f64,
    #[arg(long)]
    pub csv: Option<PathBuf>,
    #[arg(long)]
    pub json: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct UncertaintyArgs {
    /// Files are taken in lexicographic order.
    #[arg(long)]
    pub pred_glob: String,
    #[arg(long)]
    pub out_dir: PathBuf,
    #[arg(long, value_parser = parse_nonneg_f64)]
    pub tau: Option<f64>,
}

#[derive(Debug, Args)]
pub struct SkeletonizeArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct BranchesArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    /// min-z, max-z or an explicit z,y,x voxel.
    #[arg(long, value_parser = parse_root, default_value = "min-z")]
    pub root: RootPolicy,
    #[arg(long)]
    pub labels_out: Option<PathBuf>,
    #[arg(long)]
    pub table_out: Option<PathBuf>,
    /// Cut loops instead of failing on them.
    #[arg(long)]
    pub break_cycles: bool,
}

#[derive(Debug, Args)]
pub struct LossArgs {
    #[arg(long)]
    pub pred: PathBuf,
    #[arg(long)]
    pub gt_labels: PathBuf,
    #[arg(long, value_parser = parse_weights, default_value = "0.2,0.2,0.3,0.3")]
    pub weights: LossWeights,
    #[arg(long, value_parser = parse_mode, default_value = "per-branch-mean")]
    pub mode: BranchMode,
    #[arg(long, value_parser = parse_variant, default_value = "skeleton-product")]
    pub variant: CenterlineVariant,
    #[arg(long, value_parser = parse_unit_f32, default_value_t = 0.5)]
    pub threshold: f32,
    #[arg(long, value_parser = parse_smooth, default_value = "1e-6")]
    pub smooth: Smooth,
    #[arg(long)]
    pub json: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub spec: PathBuf,
    #[arg(long)]
    pub out_dir: PathBuf,
}

fn parse_triple(s: &str) -> std::result::Result<Shape, String> {
    let parts: Vec<&str> = s.split(',').map(str::trim).collect();
    if parts.len() != 3 {
        return Err(format!("expected Z,Y,X, got {s:?}"));
    }
    let mut out = [0usize; 3];
    for (o, p) in out.iter_mut().zip(&parts) {
        *o = p.parse().map_err(|_| format!("bad integer {p:?}"))?;
        if *o == 0 {
            return Err("components must be >= 1".into());
        }
    }
    Ok(out)
}

fn parse_connectivity(s: &str) -> std::result::Result<Connectivity, String> {
    s.parse::<u32>()
        .ok()
        .and_then(Connectivity::from_count)
        .ok_or_else(|| format!("connectivity must be 6, 18 or 26, got {s:?}"))
}

fn parse_unit_f32(s: &str) -> std::result::Result<f32, String> {
    match s.parse::<f32>() {
        Ok(v) if (0.0..=1.0).contains(&v) => Ok(v),
        _ => Err(format!("expected a value in [0,1], got {s:?}")),
    }
}

fn parse_unit_f64(s: &str) -> std::result::Result<f64, String> {
    match s.parse::<f64>() {
        Ok(v) if (0.0..=1.0).contains(&v) => Ok(v),
        _ => Err(format!("expected a value in [0,1], got {s:?}")),
    }
}

fn parse_nonneg_f64(s: &str) -> std::result::Result<f64, String> {
    match s.parse::<f64>() {
        Ok(v) if v >= 0.0 => Ok(v),
        _ => Err(format!("expected a value >= 0, got {s:?}")),
    }
}

fn parse_root(s: &str) -> std::result::Result<RootPolicy, String> {
    match s {
        "min-z" => Ok(RootPolicy::MinZ),
        "max-z" => Ok(RootPolicy::MaxZ),
        _ => {
            let parts: Vec<usize> = s
                .split(',')
                .map(|p| p.trim().parse::<usize>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|_| format!("expected min-z, max-z or z,y,x, got {s:?}"))?;
            match parts[..] {
                [z, y, x] => Ok(RootPolicy::Explicit([z, y, x])),
                _ => Err(format!("expected min-z, max-z or z,y,x, got {s:?}")),
            }
        }
    }
}

fn parse_weights(s: &str) -> std::result::Result<LossWeights, String> {
    let w: Vec<f64> = s
        .split(',')
        .map(|p| p.trim().parse::<f64>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| format!("bad weights {s:?}"))?;
    let w: [f64; 4] = w.try_into().map_err(|_| format!("expected four weights, got {s:?}"))?;
    LossWeights::new(w).map_err(|e| e.to_string())
}

fn parse_mode(s: &str) -> std::result::Result<BranchMode, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_variant(s: &str) -> std::result::Result<CenterlineVariant, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_smooth(s: &str) -> std::result::Result<Smooth, String> {
    let v: f64 = s.parse().map_err(|_| format!("bad smooth {s:?}"))?;
    Smooth::new(v).map_err(|e| e.to_string())
}

/// Parses `args` (including the program name) and runs the subcommand.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion | ErrorKind::DisplayHelpOnMissingArgumentOrSubcommand => 0,
                _ => 3,
            };
            let _ = e.print();
            return code;
        }
    };
    let _ = env_logger::Builder::new()
        .filter_level(cli.log_level.into())
        .format_timestamp(None)
        .try_init();
    let pool = match rayon::ThreadPoolBuilder::new().num_threads(cli.threads).build() {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: thread pool: {e}");
            return 3;
        }
    };
    match pool.install(|| dispatch(&cli)) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Io { .. }
        | Error::MissingHeaderKey(_)
        | Error::InvalidHeader { .. }
        | Error::UnsupportedElementType(_)
        | Error::SizeMismatch { .. }
        | Error::Json(_) => 2,
        e if e.is_domain() => 4,
        _ => 3,
    }
}

fn dispatch(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Preprocess(a) => cmd_preprocess(a),
        Command::Reassemble(a) => cmd_reassemble(a),
        Command::Augment(a) => cmd_augment(a, cli.seed),
        Command::Postprocess(a) => cmd_postprocess(a),
        Command::Evaluate(a) => cmd_evaluate(a),
        Command::Uncertainty(a) => cmd_uncertainty(a),
        Command::Skeletonize(a) => cmd_skeletonize(a),
        Command::Branches(a) => cmd_branches(a),
        Command::Loss(a) => cmd_loss(a),
        Command::Synth(a) => cmd_synth(a),
    }
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_text(path, &text)
}

/// grid.json contents.
#[derive(Debug, Serialize, Deserialize)]
pub struct GridFile {
    pub format_version: u32,
    #[serde(flatten)]
    pub grid: PatchGrid,
}

pub fn patch_file_name(i: usize) -> String {
    format!("patch_{i:04}.mhd")
}

fn cmd_preprocess(a: &PreprocessArgs) -> Result<()> {
    let mut v = load_volume(&a.input, None)?;
    if a.normalize {
        v = zscore_normalize(&v)?;
    }
    let mut grid = plan_patches(v.shape(), a.patch, a.stride.unwrap_or(a.patch))?;
    grid.pad_value = a.pad_value;
    let patches = extract_patches(&v, &grid)?;
    create_dir(&a.out_dir)?;
    for (i, p) in patches.iter().enumerate() {
        save_volume(p, &a.out_dir.join(patch_file_name(i)))?;
    }
    write_json(
        &a.out_dir.join("grid.json"),
        &GridFile {
            format_version: GRID_FORMAT_VERSION,
            grid,
        },
    )?;
    info!("wrote {} patches to {}", patches.len(), a.out_dir.display());
    Ok(())
}

fn cmd_reassemble(a: &ReassembleArgs) -> Result<()> {
    let text = fs::read_to_string(&a.grid).map_err(|e| Error::io(&a.grid, e))?;
    let file: GridFile = serde_json::from_str(&text)?;
    if file.format_version != GRID_FORMAT_VERSION {
        return Err(Error::InvalidArgument(format!("unsupported grid format {}", file.format_version)));
    }
    let dir = match &a.patch_dir {
        Some(d) => d.clone(),
        None => a.grid.parent().map(Path::to_path_buf).unwrap_or_default(),
    };
    let patches = (0..file.grid.origins.len())
        .map(|i| load_volume(&dir.join(patch_file_name(i)), None))
        .collect::<Result<Vec<_>>>()?;
    let v = reassemble(&patches, &file.grid)?;
    save_volume(&v, &a.out)
}

fn cmd_augment(a: &AugmentArgs, seed: u64) -> Result<()> {
    let v = load_volume(&a.input, None)?;
    let (out, ops) = AugmentSampler::new(seed).augment(&v)?;
    save_volume(&out, &a.out)?;
    if let Some(p) = &a.ops_out {
        write_json(p, &ops)?;
    }
    Ok(())
}

fn cmd_postprocess(a: &PostprocessArgs) -> Result<()> {
    let v = load_volume(&a.input, Some(Role::Binary))?;
    let out = match keep_largest_component(&v, a.connectivity) {
        Ok(out) => out,
        Err(Error::EmptyMask) => {
            warn!("{} is empty; writing an empty mask", a.input.display());
            v
        }
        Err(e) => return Err(e),
    };
    save_volume(&out, &a.out)
}

fn mhd_stems(dir: &Path) -> Result<BTreeMap<String, PathBuf>> {
    let mut out = BTreeMap::new();
    for entry in fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        if path.extension().is_some_and(|e| e == "mhd") {
            if let Some(stem) = path.file_stem().and_then(|s| s.to_str()) {
                out.insert(stem.to_string(), path.clone());
            }
        }
    }
    Ok(out)
}

fn cmd_evaluate(a: &EvaluateArgs) -> Result<()> {
    let cases: Vec<(String, PathBuf, PathBuf)> = if a.pred.is_dir() || a.gt.is_dir() {
        if !(a.pred.is_dir() && a.gt.is_dir()) {
            return Err(Error::InvalidArgument("--pred and --gt must both be files or both be directories".into()));
        }
        let preds = mhd_stems(&a.pred)?;
        let gts = mhd_stems(&a.gt)?;
        let unmatched: Vec<&String> = preds
            .keys()
            .filter(|k| !gts.contains_key(*k))
            .chain(gts.keys().filter(|k| !preds.contains_key(*k)))
            .collect();
        if !unmatched.is_empty() {
            return Err(Error::InvalidArgument(format!("unmatched cases: {unmatched:?}")));
        }
        if preds.is_empty() {
            return Err(Error::InvalidArgument(format!("no .mhd files in {}", a.pred.display())));
        }
        preds.into_iter().map(|(k, p)| (k.clone(), p, gts[&k].clone())).collect()
    } else {
        let id = a.pred.file_stem().and_then(|s| s.to_str()).unwrap_or("case").to_string();
        vec![(id, a.pred.clone(), a.gt.clone())]
    };
    let reports: Vec<MetricsReport> = cases
        .par_iter()
        .map(|(id, p, g)| {
            let pred = load_volume(p, None)?;
            let gt = load_volume(g, Some(Role::Binary))?;
            evaluate_case(id, &pred, &gt, a.threshold, a.postprocess, a.theta)
        })
        .collect::<Result<_>>()?;
    let agg = aggregate_reports(&reports)?;
    if let Some(p) = &a.csv {
        write_text(p, &reports_to_csv(&reports)?)?;
    }
    if let Some(p) = &a.json {
        write_json(p, &agg)?;
    }
    println!("{}", agg.summary());
    Ok(())
}

fn cmd_uncertainty(a: &UncertaintyArgs) -> Result<()> {
    let mut paths: Vec<PathBuf> = glob::glob(&a.pred_glob)
        .map_err(|e| Error::InvalidArgument(format!("bad glob {:?}: {e}", a.pred_glob)))?
        .collect::<std::result::Result<_, _>>()
        .map_err(|e| Error::io(e.path(), std::io::Error::other(e.to_string())))?;
    paths.sort();
    if paths.is_empty() {
        return Err(Error::EmptyStack);
    }
    let preds = paths
        .par_iter()
        .map(|p| load_volume(p, Some(Role::Probability)))
        .collect::<Result<Vec<Volume>>>()?;
    let stack = PredictionStack::new(preds)?;
    let summary = aggregate(&stack)?;
    create_dir(&a.out_dir)?;
    save_volume(&summary.mean, &a.out_dir.join("mean.mhd"))?;
    save_volume(&summary.variance, &a.out_dir.join("var.mhd"))?;
    write_json(&a.out_dir.join("summary.json"), &summary.stats(stack.n_drop()))?;
    if let Some(tau) = a.tau {
        save_volume(&uncertainty_mask(&summary, tau)?, &a.out_dir.join("uncertain.mhd"))?;
    }
    Ok(())
}

fn cmd_skeletonize(a: &SkeletonizeArgs) -> Result<()> {
    let v = load_volume(&a.input, Some(Role::Binary))?;
    save_volume(&skeletonize(&v)?, &a.out)
}

fn cmd_branches(a: &BranchesArgs) -> Result<()> {
    let mask = load_volume(&a.input, Some(Role::Binary))?;
    let skeleton = skeletonize(&mask)?;
    let mut graph = build_skeleton_graph(&skeleton)?;
    if a.break_cycles {
        let cut = break_cycles(&mut graph);
        if cut > 0 {
            warn!("removed {cut} skeleton adjacencies to break loops");
        }
    }
    let table = decompose_branches(&graph, mask.spacing(), a.root)?;
    if let Some(p) = &a.table_out {
        table.save(p)?;
    }
    if let Some(p) = &a.labels_out {
        save_volume(&label_branches(&mask, &table)?, p)?;
    }
    let stats = crate::tree::tree_stats(&table);
    println!(
        "branches {}  total length {:.3} mm  max generation {}",
        stats.branch_count, stats.total_length_mm, stats.max_generation
    );
    Ok(())
}

fn cmd_loss(a: &LossArgs) -> Result<()> {
    let pred = load_volume(&a.pred, None)?;
    let labels = load_volume(&a.gt_labels, Some(Role::Label))?;
    let l = all_losses(&pred, &labels, a.weights, a.mode, a.variant, a.threshold, a.smooth)?;
    println!(
        "dice {:.6}  bce {:.6}  branch {:.6}  centerline {:.6}  total {:.6}",
        l.dice, l.bce, l.branch, l.centerline, l.total
    );
    if let Some(p) = &a.json {
        write_json(p, &l)?;
    }
    Ok(())
}

fn cmd_synth(a: &SynthArgs) -> Result<()> {
    let text = fs::read_to_string(&a.spec).map_err(|e| Error::io(&a.spec, e))?;
    let spec: TreeSpec = serde_json::from_str(&text)?;
    let tree = generate_tree(&spec)?;
    create_dir(&a.out_dir)?;
    save_volume(&tree.mask, &a.out_dir.join("mask.mhd"))?;
    save_volume(&tree.centerline, &a.out_dir.join("centerline.mhd"))?;
    tree.table.save(&a.out_dir.join("table.json"))
}
