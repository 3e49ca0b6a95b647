//! Metrics and the full experiment harness: repeated stratified holdout,
//! one-vs-rest AUC, GCN / node-count ablations, and the training-set-size
//! sweep.
//!
//! Conventions fixed here (and relied on by the report writers):
//! - argmax ties break toward the lowest class index;
//! - AUC ties count 0.5 (Mann–Whitney convention);
//! - the overall AUC is the unweighted macro average of the three
//!   one-vs-rest AUCs;
//! - "bootstrap" is repeated stratified holdout *without* replacement
//!   (6 test samples per class, remainder trains), which is what the
//!   18-test / 186-train arithmetic requires;
//! - summary dispersion is the sample standard deviation (n − 1).
//!
//! Every run seeds from its [`SplitPlan`]: repeat `r` of a harness seeded
//! with `seed` owns the stream `seed + r`, and model init / epoch shuffling /
//! sweep subsampling derive from it with distinct salts. Repeats and sweep
//! points are embarrassingly parallel; results are merged in (size, repeat)
//! index order, so thread count never changes output bytes.

use std::collections::{HashMap, HashSet};
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{ModelConfig, TrainConfig};
use crate::error::{PhnetError, Result};
use crate::model::{predict_proba, Model};
use crate::optim::Trainer;
use crate::preprocess::Sample;
use crate::rng::derive_seed;

pub const N_CLASSES: usize = 3;

/// Row labels used by every report table, indexed by class label.
pub const CLASS_NAMES: [&str; N_CLASSES] = ["Non-PH", "Pre-capillary PH", "Post-capillary PH"];

/// Salts for the per-repeat seed streams (see module docs).
const SALT_INIT: u64 = 0xA1;
const SALT_TRAIN: u64 = 0xB2;
const SALT_SUBSAMPLE: u64 = 0xC3;

// ---------------------------------------------------------------------------
// Core metrics
// ---------------------------------------------------------------------------

/// Fraction of exact label matches.
pub fn accuracy(predicted: &[usize], truth: &[usize]) -> Result<f64> {
    if predicted.is_empty() || predicted.len() != truth.len() {
        return Err(PhnetError::ShapeMismatch {
            context: "accuracy".into(),
            expected: "two equal-length nonempty label slices".into(),
            got: format!("{} predictions, {} labels", predicted.len(), truth.len()),
        });
    }
    let hits = predicted.iter().zip(truth).filter(|(p, t)| p == t).count();
    Ok(hits as f64 / truth.len() as f64)
}

/// One-vs-rest rank AUC (Mann–Whitney) for class `k`: over all
/// positive/negative pairs, `score_pos > score_neg` counts 1, a tie counts
/// 0.5. Computed via tie-averaged ranks, which equals exhaustive pair
/// counting exactly: rank sums are multiples of ½ and therefore exact in
/// floating point at these sizes, so the single closing division is the
/// only rounding step — the same rational the pair-counting oracle rounds.
pub fn auc_class(scores: &[f64], labels: &[usize], k: usize) -> Result<f64> {
    if scores.is_empty() || scores.len() != labels.len() {
        return Err(PhnetError::ShapeMismatch {
            context: "auc_class".into(),
            expected: "two equal-length nonempty slices".into(),
            got: format!("{} scores, {} labels", scores.len(), labels.len()),
        });
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(PhnetError::InvalidConfig(
            "auc_class: NaN score".into(),
        ));
    }
    let n = scores.len();
    let n_pos = labels.iter().filter(|&&l| l == k).count();
    let n_neg = n - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(PhnetError::DegenerateClass { class: k });
    }

    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&a, &b| scores[a].partial_cmp(&scores[b]).unwrap());
    let mut rank = vec![0.0f64; n];
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && scores[idx[j + 1]] == scores[idx[i]] {
            j += 1;
        }
        // 1-based ranks i+1 ..= j+1 share their average; an integer or
        // half-integer, hence exactly representable.
        let avg = (i + j + 2) as f64 / 2.0;
        for &t in &idx[i..=j] {
            rank[t] = avg;
        }
        i = j + 1;
    }

    let r_pos: f64 = labels
        .iter()
        .zip(&rank)
        .filter(|(l, _)| **l == k)
        .map(|(_, r)| *r)
        .sum();
    let numerator = r_pos - (n_pos * (n_pos + 1)) as f64 / 2.0;
    Ok(numerator / (n_pos as f64 * n_neg as f64))
}

/// Argmax over three probabilities; exact ties break to the lowest index.
pub fn argmax3(p: &[f64; 3]) -> usize {
    let mut best = 0;
    for k in 1..3 {
        if p[k] > p[best] {
            best = k;
        }
    }
    best
}

/// One evaluation's worth of metrics. All values lie in [0, 1].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub acc: f64,
    pub auc_macro: f64,
    pub auc: [f64; N_CLASSES],
    pub sens: [f64; N_CLASSES],
    pub spec: [f64; N_CLASSES],
}

impl Metrics {
    pub const N_COLS: usize = 11;
    pub const COL_NAMES: [&'static str; Self::N_COLS] = [
        "acc",
        "auc_macro",
        "auc0",
        "auc1",
        "auc2",
        "sens0",
        "sens1",
        "sens2",
        "spec0",
        "spec1",
        "spec2",
    ];

    pub fn to_cols(self) -> [f64; Self::N_COLS] {
        [
            self.acc,
            self.auc_macro,
            self.auc[0],
            self.auc[1],
            self.auc[2],
            self.sens[0],
            self.sens[1],
            self.sens[2],
            self.spec[0],
            self.spec[1],
            self.spec[2],
        ]
    }

    pub fn from_cols(c: [f64; Self::N_COLS]) -> Self {
        Metrics {
            acc: c[0],
            auc_macro: c[1],
            auc: [c[2], c[3], c[4]],
            sens: [c[5], c[6], c[7]],
            spec: [c[8], c[9], c[10]],
        }
    }
}

/// Accuracy, per-class and macro AUC, and per-class sensitivity/specificity
/// from a probability matrix. Labels must cover all three classes.
pub fn macro_metrics(probs: &[[f64; 3]], labels: &[usize]) -> Result<Metrics> {
    if probs.is_empty() || probs.len() != labels.len() {
        return Err(PhnetError::ShapeMismatch {
            context: "macro_metrics".into(),
            expected: "equal-length nonempty probabilities and labels".into(),
            got: format!("{} rows, {} labels", probs.len(), labels.len()),
        });
    }
    let mut auc = [0.0; N_CLASSES];
    for (k, slot) in auc.iter_mut().enumerate() {
        let scores: Vec<f64> = probs.iter().map(|p| p[k]).collect();
        *slot = auc_class(&scores, labels, k)?;
    }
    let preds: Vec<usize> = probs.iter().map(argmax3).collect();
    let acc = accuracy(&preds, labels)?;

    let mut sens = [0.0; N_CLASSES];
    let mut spec = [0.0; N_CLASSES];
    for k in 0..N_CLASSES {
        let (mut tp, mut fn_, mut fp, mut tn) = (0usize, 0usize, 0usize, 0usize);
        for (&p, &t) in preds.iter().zip(labels) {
            match (t == k, p == k) {
                (true, true) => tp += 1,
                (true, false) => fn_ += 1,
                (false, true) => fp += 1,
                (false, false) => tn += 1,
            }
        }
        // Denominators are positive: auc_class above already rejected any
        // class that is absent from, or fills, the label set.
        sens[k] = tp as f64 / (tp + fn_) as f64;
        spec[k] = tn as f64 / (tn + fp) as f64;
    }
    let auc_macro = auc.iter().sum::<f64>() / N_CLASSES as f64;
    Ok(Metrics {
        acc,
        auc_macro,
        auc,
        sens,
        spec,
    })
}

// ---------------------------------------------------------------------------
// Split plans
// ---------------------------------------------------------------------------

/// One stratified holdout draw: 6 (configurable) test ids per class, the
/// remainder training, plus the seed that owns this repeat's random streams.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitPlan {
    pub repeat: usize,
    pub seed: u64,
    pub test_ids: Vec<String>,
    pub train_ids: Vec<String>,
}

/// Cohort view for splitting: (id, label) per sample, in cohort order.
pub fn id_label_pairs<T>(dataset: &[Sample<T>]) -> Vec<(String, usize)> {
    dataset.iter().map(|s| (s.id.clone(), s.label)).collect()
}

/// Stratified holdout plans: repeat `r` draws `per_class_test` ids per class
/// without replacement from the stream `seed + r`; the remainder trains.
/// Test ids are listed class 0/1/2, ascending cohort order within a class;
/// train ids keep cohort order — both canonical for byte-stable plan files.
pub fn make_splits(
    pairs: &[(String, usize)],
    repeats: usize,
    per_class_test: usize,
    seed: u64,
) -> Result<Vec<SplitPlan>> {
    let mut by_class: [Vec<usize>; N_CLASSES] = Default::default();
    for (i, (id, label)) in pairs.iter().enumerate() {
        if *label >= N_CLASSES {
            return Err(PhnetError::InvalidConfig(format!(
                "sample '{id}' has label {label}, expected 0..{N_CLASSES}"
            )));
        }
        by_class[*label].push(i);
    }
    for (k, members) in by_class.iter().enumerate() {
        if members.len() <= per_class_test {
            return Err(PhnetError::NotEnoughSamples {
                class: k,
                available: members.len(),
                requested: per_class_test,
            });
        }
    }

    Ok((0..repeats)
        .map(|r| {
            let plan_seed = seed.wrapping_add(r as u64);
            let mut rng = ChaCha12Rng::seed_from_u64(plan_seed);
            let mut test_idx = Vec::with_capacity(N_CLASSES * per_class_test);
            for pool in &by_class {
                let mut pick: Vec<usize> =
                    rand::seq::index::sample(&mut rng, pool.len(), per_class_test)
                        .into_iter()
                        .map(|j| pool[j])
                        .collect();
                pick.sort_unstable();
                test_idx.extend(pick);
            }
            let in_test: HashSet<usize> = test_idx.iter().copied().collect();
            SplitPlan {
                repeat: r,
                seed: plan_seed,
                test_ids: test_idx.iter().map(|&i| pairs[i].0.clone()).collect(),
                train_ids: (0..pairs.len())
                    .filter(|i| !in_test.contains(i))
                    .map(|i| pairs[i].0.clone())
                    .collect(),
            }
        })
        .collect())
}

fn index_by_id<T>(dataset: &[Sample<T>]) -> Result<HashMap<&str, usize>> {
    let mut map = HashMap::with_capacity(dataset.len());
    for (i, s) in dataset.iter().enumerate() {
        if map.insert(s.id.as_str(), i).is_some() {
            return Err(PhnetError::InvalidConfig(format!(
                "duplicate sample id '{}'",
                s.id
            )));
        }
    }
    Ok(map)
}

// ---------------------------------------------------------------------------
// Single train + evaluate run
// ---------------------------------------------------------------------------

fn resolve<'d>(
    dataset: &'d [Sample<f32>],
    index: &HashMap<&str, usize>,
    ids: &[String],
) -> Result<Vec<&'d Sample<f32>>> {
    ids.iter()
        .map(|id| {
            index
                .get(id.as_str())
                .map(|&i| &dataset[i])
                .ok_or_else(|| PhnetError::InvalidConfig(format!("unknown sample id '{id}'")))
        })
        .collect()
}

/// Train a fresh model on `train_ids` and evaluate on `test_ids`.
/// Initialization and epoch shuffling derive from `run_seed` with distinct
/// salts, so a given plan always trains the same model regardless of which
/// harness (bootstrap, sweep, ablation arm) invokes it.
pub fn train_eval_once(
    dataset: &[Sample<f32>],
    index: &HashMap<&str, usize>,
    train_ids: &[String],
    test_ids: &[String],
    mcfg: &ModelConfig,
    tcfg: &TrainConfig,
    run_seed: u64,
) -> Result<Metrics> {
    let train = resolve(dataset, index, train_ids)?;
    let test = resolve(dataset, index, test_ids)?;
    let model = Model::<f32>::new(mcfg, derive_seed(run_seed, SALT_INIT))?;
    let tcfg_run = TrainConfig {
        seed: derive_seed(run_seed, SALT_TRAIN),
        ..tcfg.clone()
    };
    let mut trainer = Trainer::new(model, tcfg_run)?;
    trainer.train(&train)?;
    let probs = predict_proba(&trainer.model, &test)?;
    let labels: Vec<usize> = test.iter().map(|s| s.label).collect();
    macro_metrics(&probs, &labels)
}

/// Evaluate an already-trained model on the given sample ids.
pub fn evaluate_ids(
    dataset: &[Sample<f32>],
    model: &Model<f32>,
    ids: &[String],
) -> Result<Metrics> {
    let index = index_by_id(dataset)?;
    let subset = resolve(dataset, &index, ids)?;
    let probs = predict_proba(model, &subset)?;
    let labels: Vec<usize> = subset.iter().map(|s| s.label).collect();
    macro_metrics(&probs, &labels)
}

// ---------------------------------------------------------------------------
// Repeated-holdout experiment
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub repeat: usize,
    #[serde(flatten)]
    pub metrics: Metrics,
}

/// Per-repeat rows plus their column-wise mean and sample standard deviation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub rows: Vec<MetricsRow>,
    pub mean: Metrics,
    pub std: Metrics,
}

/// Column-wise mean and sample standard deviation (n − 1; zero for n < 2).
pub fn mean_std(rows: &[Metrics]) -> (Metrics, Metrics) {
    let n = rows.len() as f64;
    let mut mean = [0.0; Metrics::N_COLS];
    for m in rows {
        for (acc, v) in mean.iter_mut().zip(m.to_cols()) {
            *acc += v;
        }
    }
    for v in &mut mean {
        *v /= n;
    }
    let mut var = [0.0; Metrics::N_COLS];
    if rows.len() > 1 {
        for m in rows {
            for ((acc, v), mu) in var.iter_mut().zip(m.to_cols()).zip(mean) {
                *acc += (v - mu) * (v - mu);
            }
        }
        for v in &mut var {
            *v /= n - 1.0;
        }
    }
    (
        Metrics::from_cols(mean),
        Metrics::from_cols(var.map(f64::sqrt)),
    )
}

impl ExperimentReport {
    pub fn from_rows(rows: Vec<MetricsRow>) -> Self {
        let metrics: Vec<Metrics> = rows.iter().map(|r| r.metrics).collect();
        let (mean, std) = mean_std(&metrics);
        ExperimentReport { rows, mean, std }
    }
}

/// Train and evaluate every plan (in parallel), merging rows in repeat order.
pub fn run_plans(
    dataset: &[Sample<f32>],
    plans: &[SplitPlan],
    mcfg: &ModelConfig,
    tcfg: &TrainConfig,
) -> Result<ExperimentReport> {
    let index = index_by_id(dataset)?;
    let rows: Vec<MetricsRow> = plans
        .par_iter()
        .map(|plan| {
            train_eval_once(
                dataset,
                &index,
                &plan.train_ids,
                &plan.test_ids,
                mcfg,
                tcfg,
                plan.seed,
            )
            .map(|metrics| MetricsRow {
                repeat: plan.repeat,
                metrics,
            })
            .map_err(|e| PhnetError::Repeat {
                repeat: plan.repeat,
                source: Box::new(e),
            })
        })
        .collect::<Result<_>>()?;
    Ok(ExperimentReport::from_rows(rows))
}

/// The full repeated-holdout protocol: draw `repeats` stratified splits from
/// `seed`, train from scratch on each, evaluate on its held-out test set.
pub fn bootstrap_experiment(
    dataset: &[Sample<f32>],
    mcfg: &ModelConfig,
    tcfg: &TrainConfig,
    repeats: usize,
    per_class_test: usize,
    seed: u64,
) -> Result<ExperimentReport> {
    let pairs = id_label_pairs(dataset);
    let plans = make_splits(&pairs, repeats, per_class_test, seed)?;
    run_plans(dataset, &plans, mcfg, tcfg)
}

// ---------------------------------------------------------------------------
// Training-set-size sweep
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub size: usize,
    /// Runs that produced metrics (skew-degenerate runs are skipped).
    pub n_runs: usize,
    pub mean: Metrics,
    pub min: Metrics,
    pub max: Metrics,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub points: Vec<SweepPoint>,
}

/// Inclusive arithmetic sequence `min, min+step, …` up to `max`.
pub fn sweep_sizes(min: usize, max: usize, step: usize) -> Result<Vec<usize>> {
    if step == 0 || min == 0 || max < min {
        return Err(PhnetError::InvalidConfig(format!(
            "invalid sweep range {min}..{max} step {step}"
        )));
    }
    Ok((min..=max).step_by(step).collect())
}

/// Draw `size` training ids without replacement, keeping pool order (so the
/// full-pool draw reproduces the unswept training run exactly).
fn subsample_ids(pool: &[String], size: usize, seed: u64) -> Vec<String> {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let mut pick = rand::seq::index::sample(&mut rng, pool.len(), size).into_vec();
    pick.sort_unstable();
    pick.into_iter().map(|i| pool[i].clone()).collect()
}

/// Fold one size's per-plan results into a sweep point. Runs that failed
/// with `DegenerateClass` (a skewed subsample) are skipped; if every run
/// failed that way the point is reported missing (`None`). Other errors
/// propagate.
fn aggregate_point(size: usize, runs: Vec<Result<Metrics>>) -> Result<Option<SweepPoint>> {
    fn is_degenerate(e: &PhnetError) -> bool {
        match e {
            PhnetError::DegenerateClass { .. } => true,
            PhnetError::Repeat { source, .. } => is_degenerate(source),
            _ => false,
        }
    }
    let mut ok = Vec::with_capacity(runs.len());
    for r in runs {
        match r {
            Ok(m) => ok.push(m),
            Err(e) if is_degenerate(&e) => {}
            Err(e) => return Err(e),
        }
    }
    if ok.is_empty() {
        return Ok(None);
    }
    let (mean, _) = mean_std(&ok);
    let mut min = ok[0].to_cols();
    let mut max = ok[0].to_cols();
    for m in &ok[1..] {
        for ((lo, hi), v) in min.iter_mut().zip(max.iter_mut()).zip(m.to_cols()) {
            *lo = lo.min(v);
            *hi = hi.max(v);
        }
    }
    Ok(Some(SweepPoint {
        size,
        n_runs: ok.len(),
        mean,
        min: Metrics::from_cols(min),
        max: Metrics::from_cols(max),
    }))
}

/// For each size, train on a seeded random subsample of each plan's training
/// pool (stratification-free) and evaluate on that plan's fixed test set;
/// report mean and min/max envelope across plans per size.
pub fn sample_size_sweep(
    dataset: &[Sample<f32>],
    plans: &[SplitPlan],
    sizes: &[usize],
    mcfg: &ModelConfig,
    tcfg: &TrainConfig,
) -> Result<SweepReport> {
    let index = index_by_id(dataset)?;
    if let Some(&max_size) = sizes.iter().max() {
        for plan in plans {
            if max_size > plan.train_ids.len() {
                return Err(PhnetError::InvalidConfig(format!(
                    "sweep size {max_size} exceeds repeat {}'s training pool of {}",
                    plan.repeat,
                    plan.train_ids.len()
                )));
            }
        }
    }

    // (size, repeat) job grid, merged back in exactly this order.
    let jobs: Vec<(usize, usize)> = (0..sizes.len())
        .flat_map(|si| (0..plans.len()).map(move |pi| (si, pi)))
        .collect();
    let results: Vec<Result<Metrics>> = jobs
        .par_iter()
        .map(|&(si, pi)| {
            let plan = &plans[pi];
            let size = sizes[si];
            let sub_seed = derive_seed(derive_seed(plan.seed, SALT_SUBSAMPLE), size as u64);
            let sub = subsample_ids(&plan.train_ids, size, sub_seed);
            train_eval_once(
                dataset,
                &index,
                &sub,
                &plan.test_ids,
                mcfg,
                tcfg,
                plan.seed,
            )
            .map_err(|e| PhnetError::Repeat {
                repeat: plan.repeat,
                source: Box::new(e),
            })
        })
        .collect();

    let mut points = Vec::with_capacity(sizes.len());
    let mut it = results.into_iter();
    for (si, &size) in sizes.iter().enumerate() {
        let chunk: Vec<Result<Metrics>> = it.by_ref().take(plans.len()).collect();
        debug_assert_eq!(chunk.len(), plans.len(), "job grid misaligned at {si}");
        if let Some(point) = aggregate_point(size, chunk)? {
            points.push(point);
        }
    }
    Ok(SweepReport { points })
}

// ---------------------------------------------------------------------------
// Ablations
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AblationMode {
    /// Full model vs. graph bypass, identical splits and training parameters.
    Gcn,
    /// Image-node-count sweep over `node_list`.
    Nodes,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    /// "Full_model" / "No_GCN", or the node count for nodes mode.
    pub name: String,
    pub n_image_nodes: usize,
    pub mean: Metrics,
    pub std: Metrics,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationReport {
    pub mode: AblationMode,
    pub rows: Vec<AblationRow>,
    /// Plan file consumed by each arm, in row order. All arms' files hold
    /// identical bytes — the controlled-comparison contract.
    pub plan_files: Vec<PathBuf>,
}

/// Run a controlled ablation. One set of split plans is drawn from `seed`,
/// serialized once, and written to a per-arm file under `plan_dir`; every
/// arm then parses *its own file* (byte-identical across arms) so that no
/// arm can accidentally see different data.
#[allow(clippy::too_many_arguments)]
pub fn ablate(
    dataset: &[Sample<f32>],
    mode: AblationMode,
    node_list: &[usize],
    mcfg: &ModelConfig,
    tcfg: &TrainConfig,
    repeats: usize,
    per_class_test: usize,
    seed: u64,
    plan_dir: &Path,
) -> Result<AblationReport> {
    let arms: Vec<(String, ModelConfig)> = match mode {
        AblationMode::Gcn => {
            let full = mcfg.clone();
            let mut bypass = mcfg.clone();
            bypass.fusion.use_gcn = false;
            vec![
                ("Full_model".to_string(), full),
                ("No_GCN".to_string(), bypass),
            ]
        }
        AblationMode::Nodes => node_list
            .iter()
            .map(|&n| {
                if n == 0 {
                    return Err(PhnetError::InvalidConfig(
                        "node ablation requires node counts >= 1".into(),
                    ));
                }
                let mut cfg = mcfg.clone();
                cfg.encoder.n_image_nodes = n;
                Ok((n.to_string(), cfg))
            })
            .collect::<Result<_>>()?,
    };

    let pairs = id_label_pairs(dataset);
    let plans = make_splits(&pairs, repeats, per_class_test, seed)?;
    let plan_bytes = serde_json::to_vec_pretty(&plans)
        .map_err(|e| PhnetError::json("<split plans>", e))?;
    std::fs::create_dir_all(plan_dir)
        .map_err(|e| PhnetError::io(plan_dir.display().to_string(), e))?;

    let mut rows = Vec::with_capacity(arms.len());
    let mut plan_files = Vec::with_capacity(arms.len());
    for (name, arm_cfg) in &arms {
        let stem: String = name
            .chars()
            .map(|c| {
                if c.is_ascii_alphanumeric() {
                    c.to_ascii_lowercase()
                } else {
                    '_'
                }
            })
            .collect();
        let path = plan_dir.join(format!("splits_{stem}.json"));
        std::fs::write(&path, &plan_bytes)
            .map_err(|e| PhnetError::io(path.display().to_string(), e))?;
        let read_back = std::fs::read_to_string(&path)
            .map_err(|e| PhnetError::io(path.display().to_string(), e))?;
        let arm_plans: Vec<SplitPlan> = serde_json::from_str(&read_back)
            .map_err(|e| PhnetError::json(path.display().to_string(), e))?;

        let report = run_plans(dataset, &arm_plans, arm_cfg, tcfg)?;
        rows.push(AblationRow {
            name: name.clone(),
            n_image_nodes: arm_cfg.encoder.n_image_nodes,
            mean: report.mean,
            std: report.std,
        });
        plan_files.push(path);
    }
    Ok(AblationReport {
        mode,
        rows,
        plan_files,
    })
}

// ---------------------------------------------------------------------------
