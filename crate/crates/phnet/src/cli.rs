//! Command-line entry points.
//!
//! Subcommands: `gen-data`, `preprocess`, `train`, `eval`, `bootstrap`,
//! `sweep`, `ablate`, `gradcheck`. Exit codes: 0 success, 1 validation
//! error (bad flags, malformed or invalid config), 2 runtime failure.
//! All randomness derives from `--seed`; repeating any command with the
//! same inputs and seed produces byte-identical outputs, including with
//! `--jobs > 1` (parallel results merge in index order).

use std::fmt::Display;
use std::fs;
use std::path::{Path, PathBuf};

use clap::error::ErrorKind;
use clap::{Parser, Subcommand, ValueEnum};
use serde_json::json;

use crate::config::{PreprocessConfig, RunConfig};
use crate::evalx::{
    ablate, bootstrap_experiment, id_label_pairs, make_splits, sample_size_sweep, sweep_sizes,
    AblationMode,
};
use crate::format::{
    load_checkpoint, load_cohort_manifest, load_dataset, load_raw_sample, read_id_file,
    save_checkpoint, save_cohort_manifest, save_dataset_manifest, save_raw_sample, save_sample,
    write_json, CohortManifest, DatasetManifest,
};
use crate::model::Model;
use crate::optim::{grad_check, Trainer};
use crate::preprocess::build_sample;
use crate::report::{ablation_csv, bootstrap_csv, sweep_csv, sweep_svg, table2_csv, write_text};
use crate::rng::derive_seed;
use crate::syn_cohort::gen_sample;

#[derive(Parser)]
#[command(
    name = "phnet",
    version,
    about = "Multimodal pulmonary-hypertension classifier: synthetic cohorts, training, and the full evaluation protocol"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

fn parse_triplet(s: &str) -> std::result::Result<[usize; 3], String> {
    let parts: Vec<usize> = s
        .split(',')
        .map(|p| p.trim().parse::<usize>().map_err(|e| format!("'{p}': {e}")))
        .collect::<std::result::Result<_, _>>()?;
    <[usize; 3]>::try_from(parts)
        .map_err(|v| format!("expected three counts A,B,C, got {}", v.len()))
}

/// Comma-separated list wrapper (a bare `Vec` arg would mean repeated flags).
#[derive(Clone)]
struct NodeList(Vec<usize>);

fn parse_node_list(s: &str) -> std::result::Result<NodeList, String> {
    let parts: Vec<usize> = s
        .split(',')
        .map(|p| p.trim().parse::<usize>().map_err(|e| format!("'{p}': {e}")))
        .collect::<std::result::Result<_, _>>()?;
    if parts.is_empty() {
        return Err("empty node list".into());
    }
    Ok(NodeList(parts))
}

#[derive(Copy, Clone, ValueEnum)]
enum ModeArg {
    Gcn,
    Nodes,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate a synthetic raw cohort (streams one sample at a time).
    GenData {
        /// Output directory for the cohort manifest and tensors.
        #[arg(long)]
        out: PathBuf,
        /// Samples per class: non-PH, pre-capillary, post-capillary.
        #[arg(long = "n-per-class", value_parser = parse_triplet, default_value = "60,112,32")]
        n_per_class: [usize; 3],
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Optional run config whose cohort section seeds the generator spec.
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Preprocess a raw cohort into model-ready tensors.
    Preprocess {
        /// Raw cohort directory (from gen-data).
        #[arg(long = "in")]
        in_dir: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Optional run config; its preprocess section is used.
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Train one model on an entire preprocessed dataset.
    Train {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Checkpoint directory to create.
        #[arg(long)]
        out: PathBuf,
    },
    /// Evaluate a checkpoint on listed sample ids; prints metrics JSON.
    Eval {
        /// Checkpoint directory (from train).
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        /// Text file of sample ids, one per line.
        #[arg(long)]
        ids: PathBuf,
    },
    /// Repeated stratified-holdout experiment (the paper's main protocol).
    Bootstrap {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Holdout repeats (default: config experiment.repeats).
        #[arg(long)]
        repeats: Option<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Per-repeat CSV; a per-class summary lands next to it.
        #[arg(long)]
        out: PathBuf,
        /// Worker threads (0 = all cores).
        #[arg(long, default_value_t = 1)]
        jobs: usize,
    },
    /// Training-set-size sweep on fixed per-repeat test sets.
    Sweep {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Smallest training size (default: config experiment.sweep_min).
        #[arg(long)]
        min: Option<usize>,
        #[arg(long)]
        max: Option<usize>,
        #[arg(long)]
        step: Option<usize>,
        #[arg(long)]
        repeats: Option<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        /// Optional SVG chart (mean line plus min/max band).
        #[arg(long)]
        svg: Option<PathBuf>,
        #[arg(long, default_value_t = 1)]
        jobs: usize,
    },
    /// GCN or node-count ablation on byte-identical split plans.
    Ablate {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, value_enum)]
        mode: ModeArg,
        /// Node counts for nodes mode (default: config experiment.node_list).
        #[arg(long, value_parser = parse_node_list)]
        nodes: Option<NodeList>,
        #[arg(long)]
        repeats: Option<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 1)]
        jobs: usize,
    },
    /// Finite-difference gradient check of the configured model.
    Gradcheck {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Coordinates checked per tensor.
        #[arg(long = "max-coords", default_value_t = 48)]
        max_coords: usize,
    },
}

/// Failures split by exit code: 1 for validation, 2 for runtime.
enum CliFail {
    Validation(String),
    Runtime(String),
}

fn val(e: impl Display) -> CliFail {
    CliFail::Validation(e.to_string())
}

fn rt(e: impl Display) -> CliFail {
    CliFail::Runtime(e.to_string())
}

type CliResult = std::result::Result<(), CliFail>;

/// Entry point for the `phnet` binary; returns the process exit code.
pub fn main() -> i32 {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return code;
        }
    };
    match run(cli.cmd) {
        Ok(()) => 0,
        Err(CliFail::Validation(msg)) => {
            eprintln!("error: {msg}");
            1
        }
        Err(CliFail::Runtime(msg)) => {
            eprintln!("error: {msg}");
            2
        }
    }
}

fn load_run_config(path: &Option<PathBuf>) -> std::result::Result<RunConfig, CliFail> {
    match path {
        Some(p) => RunConfig::from_file(p).map_err(val),
        None => Ok(RunConfig::default()),
    }
}

fn with_pool<R: Send>(
    jobs: usize,
    f: impl FnOnce() -> R + Send,
) -> std::result::Result<R, CliFail> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(rt)?;
    Ok(pool.install(f))
}

/// `out.csv` → `out_table2.csv` (same directory).
fn sibling_with_suffix(out: &Path, suffix: &str) -> PathBuf {
    let stem = out
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "out".into());
    let ext = out
        .extension()
        .map(|s| format!(".{}", s.to_string_lossy()))
        .unwrap_or_default();
    out.with_file_name(format!("{stem}{suffix}{ext}"))
}

fn ensure_parent(path: &Path) -> CliResult {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent)
                .map_err(|e| rt(format!("creating {}: {e}", parent.display())))?;
        }
    }
    Ok(())
}

fn run(cmd: Cmd) -> CliResult {
    match cmd {
        Cmd::GenData {
            out,
            n_per_class,
            seed,
            config,
        } => cmd_gen_data(&out, n_per_class, seed, &config),
        Cmd::Preprocess {
            in_dir,
            out,
            config,
        } => cmd_preprocess(&in_dir, &out, &config),
        Cmd::Train {
            data,
            config,
            seed,
            out,
        } => cmd_train(&data, &config, seed, &out),
        Cmd::Eval { model, data, ids } => cmd_eval(&model, &data, &ids),
        Cmd::Bootstrap {
            data,
            config,
            repeats,
            seed,
            out,
            jobs,
        } => cmd_bootstrap(&data, &config, repeats, seed, &out, jobs),
        Cmd::Sweep {
            data,
            config,
            min,
            max,
            step,
            repeats,
            seed,
            out,
            svg,
            jobs,
        } => cmd_sweep(&data, &config, min, max, step, repeats, seed, &out, &svg, jobs),
        Cmd::Ablate {
            data,
            config,
            mode,
            nodes,
            repeats,
            seed,
            out,
            jobs,
        } => cmd_ablate(&data, &config, mode, nodes, repeats, seed, &out, jobs),
        Cmd::Gradcheck {
            config,
            seed,
            max_coords,
        } => cmd_gradcheck(&config, seed, max_coords),
    }
}

// ---------------------------------------------------------------------------

fn cmd_gen_data(
    out: &Path,
    n_per_class: [usize; 3],
    seed: u64,
    config: &Option<PathBuf>,
) -> CliResult {
    let mut spec = load_run_config(config)?.cohort;
    spec.n_per_class = n_per_class;
    spec.seed = seed;
    spec.validate().map_err(val)?;

    fs::create_dir_all(out).map_err(|e| rt(format!("creating {}: {e}", out.display())))?;
    let total = spec.total();
    let mut samples = Vec::with_capacity(total);
    for idx in 0..total {
        let raw = gen_sample(&spec, idx);
        samples.push(save_raw_sample(out, &raw).map_err(rt)?);
        if (idx + 1) % 10 == 0 || idx + 1 == total {
            eprintln!("gen-data: {}/{total} samples", idx + 1);
        }
    }
    save_cohort_manifest(out, &CohortManifest { spec, samples }).map_err(rt)
}

fn cmd_preprocess(in_dir: &Path, out: &Path, config: &Option<PathBuf>) -> CliResult {
    let pcfg = load_run_config(config)?.preprocess;
    pcfg.validate().map_err(val)?;
    let cohort = load_cohort_manifest(in_dir).map_err(val)?;

    fs::create_dir_all(out).map_err(|e| rt(format!("creating {}: {e}", out.display())))?;
    let total = cohort.samples.len();
    let mut samples = Vec::with_capacity(total);
    for (idx, entry) in cohort.samples.iter().enumerate() {
        // One raw sample in memory at a time (~36 MB each).
        let raw = load_raw_sample(in_dir, entry).map_err(rt)?;
        let sample = build_sample::<f32>(&raw, &pcfg).map_err(rt)?;
        samples.push(save_sample(out, &sample).map_err(rt)?);
        if (idx + 1) % 10 == 0 || idx + 1 == total {
            eprintln!("preprocess: {}/{total} samples", idx + 1);
        }
    }
    save_dataset_manifest(
        out,
        &DatasetManifest {
            preprocess: pcfg,
            samples,
        },
    )
    .map_err(rt)
}

fn cmd_train(data: &Path, config: &Option<PathBuf>, seed: u64, out: &Path) -> CliResult {
    let cfg = load_run_config(config)?;
    let (_, dataset) = load_dataset(data).map_err(val)?;
    if dataset.is_empty() {
        return Err(val("dataset is empty"));
    }

    let model = Model::<f32>::new(&cfg.model, derive_seed(seed, 0xA1)).map_err(rt)?;
    let tcfg = crate::config::TrainConfig {
        seed: derive_seed(seed, 0xB2),
        ..cfg.train.clone()
    };
    let mut trainer = Trainer::new(model, tcfg).map_err(rt)?;
    let refs: Vec<&crate::preprocess::Sample<f32>> = dataset.iter().collect();
    let losses = trainer.train(&refs).map_err(rt)?;
    for (e, loss) in losses.iter().enumerate() {
        eprintln!("train: epoch {e} loss {loss:.6}");
    }
    save_checkpoint(out, &trainer.model).map_err(rt)?;
    write_json(
        &out.join("train.meta.json"),
        &json!({
            "command": "train",
            "data": data.display().to_string(),
            "seed": seed,
            "epochs": cfg.train.epochs,
            "final_loss": format!("{:.6}", losses.last().unwrap_or(&f64::NAN)),
        }),
    )
    .map_err(rt)
}

fn cmd_eval(model_dir: &Path, data: &Path, ids: &Path) -> CliResult {
    let model = load_checkpoint(model_dir).map_err(val)?;
    let (_, dataset) = load_dataset(data).map_err(val)?;
    let id_list = read_id_file(ids).map_err(val)?;
    if id_list.is_empty() {
        return Err(val(format!("no ids found in {}", ids.display())));
    }
    let metrics = crate::evalx::evaluate_ids(&dataset, &model, &id_list).map_err(rt)?;
    let text = serde_json::to_string_pretty(&metrics).map_err(rt)?;
    println!("{text}");
    Ok(())
}

fn cmd_bootstrap(
    data: &Path,
    config: &Option<PathBuf>,
    repeats: Option<usize>,
    seed: u64,
    out: &Path,
    jobs: usize,
) -> CliResult {
    let cfg = load_run_config(config)?;
    let repeats = repeats.unwrap_or(cfg.experiment.repeats);
    if repeats == 0 {
        return Err(val("--repeats must be positive"));
    }
    let (_, dataset) = load_dataset(data).map_err(val)?;
    ensure_parent(out)?;

    let report = with_pool(jobs, || {
        bootstrap_experiment(
            &dataset,
            &cfg.model,
            &cfg.train,
            repeats,
            cfg.experiment.per_class_test,
            seed,
        )
    })?
    .map_err(rt)?;

    let table2 = sibling_with_suffix(out, "_table2");
    write_text(out, &bootstrap_csv(&report)).map_err(rt)?;
    write_text(&table2, &table2_csv(&report, cfg.experiment.per_class_test)).map_err(rt)?;
    write_json(
        &out.with_file_name(format!(
            "{}.meta.json",
            out.file_name().unwrap_or_default().to_string_lossy()
        )),
        &json!({
            "command": "bootstrap",
            "data": data.display().to_string(),
            "seed": seed,
            "repeats": repeats,
            "per_class_test": cfg.experiment.per_class_test,
            "jobs": jobs,
            "outputs": [out.display().to_string(), table2.display().to_string()],
            "mean_auc_macro": format!("{:.6}", report.mean.auc_macro),
        }),
    )
    .map_err(rt)?;
    eprintln!(
        "bootstrap: {} repeats, mean acc {:.4}, mean macro AUC {:.4}",
        repeats, report.mean.acc, report.mean.auc_macro
    );
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn cmd_sweep(
    data: &Path,
    config: &Option<PathBuf>,
    min: Option<usize>,
    max: Option<usize>,
    step: Option<usize>,
    repeats: Option<usize>,
    seed: u64,
    out: &Path,
    svg: &Option<PathBuf>,
    jobs: usize,
) -> CliResult {
    let cfg = load_run_config(config)?;
    let min = min.unwrap_or(cfg.experiment.sweep_min);
    let max = max.unwrap_or(cfg.experiment.sweep_max);
    let step = step.unwrap_or(cfg.experiment.sweep_step);
    let repeats = repeats.unwrap_or(cfg.experiment.repeats);
    let sizes = sweep_sizes(min, max, step).map_err(val)?;
    let (_, dataset) = load_dataset(data).map_err(val)?;
    let plans = make_splits(
        &id_label_pairs(&dataset),
        repeats,
        cfg.experiment.per_class_test,
        seed,
    )
    .map_err(val)?;
    ensure_parent(out)?;

    let report = with_pool(jobs, || {
        sample_size_sweep(&dataset, &plans, &sizes, &cfg.model, &cfg.train)
    })?
    .map_err(rt)?;

    write_text(out, &sweep_csv(&report)).map_err(rt)?;
    if let Some(svg_path) = svg {
        ensure_parent(svg_path)?;
        write_text(svg_path, &sweep_svg(&report)).map_err(rt)?;
    }
    write_json(
        &out.with_file_name(format!(
            "{}.meta.json",
            out.file_name().unwrap_or_default().to_string_lossy()
        )),
        &json!({
            "command": "sweep",
            "data": data.display().to_string(),
            "seed": seed,
            "repeats": repeats,
            "sizes": { "min": min, "max": max, "step": step, "count": sizes.len() },
            "jobs": jobs,
            "outputs": [out.display().to_string()],
            "svg": svg.as_ref().map(|p| p.display().to_string()),
        }),
    )
    .map_err(rt)?;
    eprintln!("sweep: {} points written", report.points.len());
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn cmd_ablate(
    data: &Path,
    config: &Option<PathBuf>,
    mode: ModeArg,
    nodes: Option<NodeList>,
    repeats: Option<usize>,
    seed: u64,
    out: &Path,
    jobs: usize,
) -> CliResult {
    let cfg = load_run_config(config)?;
    let repeats = repeats.unwrap_or(cfg.experiment.repeats);
    let node_list = match nodes {
        Some(NodeList(list)) => list,
        None => cfg.experiment.node_list.clone(),
    };
    let mode = match mode {
        ModeArg::Gcn => AblationMode::Gcn,
        ModeArg::Nodes => AblationMode::Nodes,
    };
    if matches!(mode, AblationMode::Nodes) && node_list.iter().any(|&n| n == 0) {
        return Err(val("node counts must be >= 1"));
    }
    let (_, dataset) = load_dataset(data).map_err(val)?;
    ensure_parent(out)?;
    let plan_dir = out.with_file_name(format!(
        "{}_plans",
        out.file_stem().unwrap_or_default().to_string_lossy()
    ));

    let report = with_pool(jobs, || {
        ablate(
            &dataset,
            mode,
            &node_list,
            &cfg.model,
            &cfg.train,
            repeats,
            cfg.experiment.per_class_test,
            seed,
            &plan_dir,
        )
    })?
    .map_err(rt)?;

    write_text(out, &ablation_csv(&report)).map_err(rt)?;
    write_json(
        &out.with_file_name(format!(
            "{}.meta.json",
            out.file_name().unwrap_or_default().to_string_lossy()
        )),
        &json!({
            "command": "ablate",
            "data": data.display().to_string(),
            "mode": match mode { AblationMode::Gcn => "gcn", AblationMode::Nodes => "nodes" },
            "nodes": node_list,
            "seed": seed,
            "repeats": repeats,
            "jobs": jobs,
            "outputs": [out.display().to_string()],
            "plan_files": report
                .plan_files
                .iter()
                .map(|p| p.display().to_string())
                .collect::<Vec<_>>(),
        }),
    )
    .map_err(rt)?;
    eprintln!("ablate: {} rows written", report.rows.len());
    Ok(())
}

/// Reduced spatial targets for the gradient check: parameter shapes do not
/// depend on input size, so a small batch exercises every tensor while the
/// finite-difference loop stays fast. Frame settings are kept from the run
/// config so the temporal axis still matches the encoder.
fn gradcheck_preprocess(base: &PreprocessConfig) -> PreprocessConfig {
    PreprocessConfig {
        sax_shape: [16, 16, 4],
        ch4_shape: [20, 20],
        ..base.clone()
    }
}

fn cmd_gradcheck(config: &Option<PathBuf>, seed: u64, max_coords: usize) -> CliResult {
    let cfg = load_run_config(config)?;
    if max_coords == 0 {
        return Err(val("--max-coords must be positive"));
    }

    // Two real pipeline samples (different classes) at reduced resolution.
    let mut spec = cfg.cohort.clone();
    spec.n_per_class = [1, 1, 1];
    spec.seed = derive_seed(seed, 0x5A);
    let pcfg = gradcheck_preprocess(&cfg.preprocess);
    let s0 = build_sample::<f64>(&gen_sample(&spec, 0), &pcfg).map_err(rt)?;
    let s1 = build_sample::<f64>(&gen_sample(&spec, 2), &pcfg).map_err(rt)?;

    let model = Model::<f64>::new(&cfg.model, derive_seed(seed, 0xA1)).map_err(rt)?;
    let report = grad_check(&model, &[&s0, &s1], max_coords, seed).map_err(rt)?;

    for t in &report.tensors {
        println!(
            "{:<22} max_rel {:>10.3e}  ({} coords)",
            t.name, t.max_rel_err, t.n_checked
        );
    }
    let tol = 1e-3;
    println!("max relative error: {:.3e} (tolerance {tol:.0e})", report.max_rel_err);
    if report.passes(tol) {
        println!("gradcheck: PASS");
        Ok(())
    } else {
        Err(rt(format!(
            "gradcheck failed: max relative error {:.3e} exceeds {tol:.0e}",
            report.max_rel_err
        )))
    }
}
