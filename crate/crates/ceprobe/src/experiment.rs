//! End-to-end experiment runs: build an imbalanced dataset, split it,
//! augment the training side, train a model, decompose its predictions,
//! and aggregate the diagnostics over splits.

use std::collections::BTreeSet;
use std::path::PathBuf;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::augment::{rebalance, AugmentConfig, AugmentedSet, Method};
use crate::dataset::{
    apply_exponential_imbalance, apply_step_imbalance, load_csv, load_embedding_table,
    stratified_split, synth_gaussian, CsvSchema, Dataset, GaussianSpec, Standardizer,
};
use crate::diagnostics::{
    class_unique_ce, frequency_magnitude_profile, has_supporting_ce, mean_sd, minimal_ce_count,
    topk_contribution_share, BaselineMode, FrequencyMagnitude, KRule,
};
use crate::error::{Error, Result};
use crate::probe::{batch_decompose, BatchDecomposition, ModelKind, TrainedModel};
use crate::rng::derive_seed;
use crate::train::{train_logistic, train_softmax_head, train_svm, HeadWeights, TrainConfig};

const SYNTH_STREAM: u64 = 11;
const IMBALANCE_STREAM: u64 = 13;
const AUGMENT_STREAM_BASE: u64 = 100;

/// Where the experiment's rows come from.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DataSource {
    Csv {
        path: PathBuf,
        #[serde(default)]
        has_header: bool,
        #[serde(default)]
        label_column: Option<usize>,
    },
    Embedding {
        path: PathBuf,
        #[serde(default)]
        head_path: Option<PathBuf>,
    },
    Synthetic { spec: GaussianSpec },
}

/// Class-count profile imposed on the loaded data before splitting.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ImbalanceSpec {
    Exponential { n_max: usize, ratio: f64 },
    Step { majority_classes: Vec<usize>, n_maj: usize, n_min: usize },
}

impl ImbalanceSpec {
    fn validate(&self) -> Result<()> {
        match self {
            ImbalanceSpec::Exponential { n_max, ratio } => {
                if *n_max == 0 {
                    return Err(Error::InvalidConfig("imbalance n_max must be >= 1".into()));
                }
                if !(*ratio >= 1.0) {
                    return Err(Error::InvalidConfig(format!(
                        "imbalance ratio {ratio} must be >= 1"
                    )));
                }
            }
            ImbalanceSpec::Step { majority_classes, n_maj, n_min } => {
                if majority_classes.is_empty() {
                    return Err(Error::InvalidConfig("step imbalance needs majority classes".into()));
                }
                if *n_min == 0 || n_maj < n_min {
                    return Err(Error::InvalidConfig(format!(
                        "step imbalance needs n_maj >= n_min >= 1, got {n_maj} and {n_min}"
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Train/test partitioning.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct SplitSpec {
    pub train_fraction: f64,
    /// None picks 3 splits for embedding sources and 5 otherwise.
    pub n_splits: Option<usize>,
}

impl Default for SplitSpec {
    fn default() -> Self {
        SplitSpec { train_fraction: 0.7, n_splits: None }
    }
}

/// Oversampling knobs shared by every method in the grid.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct AugmentOptions {
    pub k_neighbors: usize,
    pub mix_alpha: f64,
    pub smoothing_eps: f64,
    pub eos_lambda_max: f64,
    pub target_counts: Option<Vec<usize>>,
}

impl Default for AugmentOptions {
    fn default() -> Self {
        AugmentOptions {
            k_neighbors: 5,
            mix_alpha: 1.0,
            smoothing_eps: 0.1,
            eos_lambda_max: 0.5,
            target_counts: None,
        }
    }
}

impl AugmentOptions {
    fn to_config(&self, method: Method) -> AugmentConfig {
        AugmentConfig {
            method,
            k_neighbors: self.k_neighbors,
            target_counts: self.target_counts.clone(),
            mix_alpha: self.mix_alpha,
            smoothing_eps: self.smoothing_eps,
            eos_lambda_max: self.eos_lambda_max,
        }
    }
}

/// Metric knobs.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct DiagnosticsOptions {
    pub top_k: usize,
    pub top_m: usize,
    /// None picks the absolute rule for SVMs and the fraction rule otherwise.
    pub k_rule: Option<KRule>,
    pub baseline_mode: BaselineMode,
}

impl Default for DiagnosticsOptions {
    fn default() -> Self {
        DiagnosticsOptions {
            top_k: 10,
            top_m: 5,
            k_rule: None,
            baseline_mode: BaselineMode::BiasOnly,
        }
    }
}

/// Full experiment description; one JSON document.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub data: DataSource,
    #[serde(default)]
    pub imbalance: Option<ImbalanceSpec>,
    #[serde(default)]
    pub split: SplitSpec,
    pub methods: Vec<Method>,
    pub model: ModelKind,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default)]
    pub augment: AugmentOptions,
    #[serde(default)]
    pub diagnostics: DiagnosticsOptions,
    /// None standardizes features for the binary models and leaves head
    /// inputs raw.
    #[serde(default)]
    pub standardize: Option<bool>,
    pub seed: u64,
    #[serde(default = "default_out_dir")]
    pub out_dir: PathBuf,
}

fn default_out_dir() -> PathBuf {
    PathBuf::from("runs")
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        let mut seen = BTreeSet::new();
        for &m in &self.methods {
            if !seen.insert(m) {
                return Err(Error::InvalidConfig(format!("duplicate method {}", m.as_str())));
            }
        }
        if self.model == ModelKind::Svm && self.methods.contains(&Method::Remix) {
            return Err(Error::InvalidConfig(
                "remix produces soft labels; the svm trainer cannot use them".into(),
            ));
        }
        if self.methods.contains(&Method::Remix) && !self.train.soft_label_support {
            return Err(Error::InvalidConfig(
                "remix requires soft_label_support in the trainer config".into(),
            ));
        }
        if !(self.split.train_fraction > 0.0 && self.split.train_fraction < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "train_fraction {} must lie in (0, 1)",
                self.split.train_fraction
            )));
        }
        if self.split.n_splits == Some(0) {
            return Err(Error::InvalidConfig("n_splits must be >= 1".into()));
        }
        if self.diagnostics.top_k == 0 || self.diagnostics.top_m == 0 {
            return Err(Error::InvalidConfig("top_k and top_m must be >= 1".into()));
        }
        if let Some(spec) = &self.imbalance {
            spec.validate()?;
        }
        if let DataSource::Synthetic { spec } = &self.data {
            spec.validate()?;
        }
        self.train.validate()?;
        self.augment.to_config(Method::Smote).validate()?;
        Ok(())
    }

    pub fn resolved_n_splits(&self) -> usize {
        self.split.n_splits.unwrap_or(match self.data {
            DataSource::Embedding { .. } => 3,
            _ => 5,
        })
    }

    pub fn resolved_standardize(&self) -> bool {
        self.standardize.unwrap_or(self.model != ModelKind::Head)
    }

    pub fn resolved_k_rule(&self) -> KRule {
        self.diagnostics.k_rule.unwrap_or(if self.model == ModelKind::Svm {
            KRule::Absolute
        } else {
            KRule::Fraction
        })
    }

    /// Hex SHA-256 of the canonical JSON form; names the run directory.
    pub fn hash(&self) -> Result<String> {
        let text = serde_json::to_string(self)
            .map_err(|e| Error::Json { path: "<config>".into(), message: e.to_string() })?;
        let mut hasher = Sha256::new();
        hasher.update(text.as_bytes());
        Ok(hex_digest(&hasher.finalize()))
    }
}

pub(crate) fn hex_digest(bytes: &[u8]) -> String {
    let mut out = String::with_capacity(bytes.len() * 2);
    for b in bytes {
        out.push_str(&format!("{b:02x}"));
    }
    out
}

/// Wall-clock for one stage of one cell; kept out of the deterministic
/// report artifacts.
#[derive(Debug, Clone, Serialize)]
pub struct TimingRow {
    pub split: usize,
    pub method: Method,
    pub stage: String,
    pub seconds: f64,
}

/// Per-instance metrics of one test-set true positive.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceRow {
    pub instance_id: usize,
    pub class: usize,
    pub k: usize,
    pub fraction: f64,
    /// None when the instance has no supporting CE.
    pub share: Option<f64>,
}

/// Per-class metric summary within one cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassRow {
    pub class: usize,
    pub group: String,
    pub tp_count: usize,
    pub coverage: f64,
    pub fraction_mean: f64,
    pub fraction_sd: f64,
    pub share_mean: Option<f64>,
    pub share_sd: Option<f64>,
    /// Instances excluded from the share statistics for lack of
    /// supporting CE.
    pub share_excluded: usize,
}

/// Everything one completed (split, method) cell produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellMetrics {
    pub accuracy: f64,
    pub test_tp_counts: Vec<usize>,
    pub augmented_class_counts: Vec<usize>,
    pub instances: Vec<InstanceRow>,
    pub classes: Vec<ClassRow>,
    pub freq_mag: Vec<FrequencyMagnitude>,
}

/// A cell either completes fully or is marked failed; never partial.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum CellOutcome {
    Completed { metrics: CellMetrics },
    Failed { stage: String, message: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    pub split: usize,
    pub method: Method,
    pub outcome: CellOutcome,
}

/// One split-averaged statistic: mean over splits of the per-split group
/// means, and the spread of those means.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub method: Method,
    pub group: String,
    pub metric: String,
    pub mean: f64,
    pub sd: f64,
    pub n_splits: usize,
}

/// Complete experiment output.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DiagnosticsReport {
    pub config: ExperimentConfig,
    pub config_hash: String,
    pub split_seeds: Vec<u64>,
    pub num_classes: usize,
    pub majority_classes: Vec<usize>,
    pub k_rule: KRule,
    pub baseline_mode: BaselineMode,
    pub cells: Vec<CellResult>,
    pub aggregates: Vec<AggregateRow>,
    #[serde(skip)]
    pub timings: Vec<TimingRow>,
}

fn load_source(cfg: &ExperimentConfig) -> Result<(Dataset<f64>, Option<HeadWeights<f64>>)> {
    match &cfg.data {
        DataSource::Csv { path, has_header, label_column } => {
            let schema = CsvSchema { has_header: *has_header, label_column: *label_column };
            Ok((load_csv(path, &schema)?, None))
        }
        DataSource::Embedding { path, head_path } => {
            let set = load_embedding_table::<f64>(path, head_path.as_deref())?;
            Ok((set.dataset().clone(), set.head().cloned()))
        }
        DataSource::Synthetic { spec } => {
            Ok((synth_gaussian(spec, derive_seed(cfg.seed, SYNTH_STREAM))?, None))
        }
    }
}

fn sha256_dataset(ds: &Dataset<f64>) -> [u8; 32] {
    let mut hasher = Sha256::new();
    for i in 0..ds.features().n_rows() {
        for v in ds.features().row(i) {
            hasher.update(v.to_le_bytes());
        }
        hasher.update((ds.labels()[i] as u64).to_le_bytes());
    }
    hasher.finalize().into()
}

type StageResult<T> = std::result::Result<T, (String, Error)>;

fn stage<T>(name: &str, r: Result<T>) -> StageResult<T> {
    r.map_err(|e| (name.to_string(), e))
}

fn fit_model(
    cfg: &ExperimentConfig,
    augmented: &AugmentedSet<f64>,
    pretrained_head: Option<&HeadWeights<f64>>,
    method: Method,
) -> Result<TrainedModel<f64>> {
    match cfg.model {
        ModelKind::Logistic => {
            let m = train_logistic(&augmented.features, &augmented.targets, &cfg.train)?;
            Ok(TrainedModel::Logistic(m))
        }
        ModelKind::Svm => {
            let m = train_svm(&augmented.features, &augmented.hard_labels, &cfg.train)?;
            Ok(TrainedModel::Svm(m))
        }
        ModelKind::Head => {
            // a supplied head is the probed baseline; augmented runs retrain
            if method == Method::Base {
                if let Some(h) = pretrained_head {
                    return Ok(TrainedModel::Head(h.clone()));
                }
            }
            let (h, _) = train_softmax_head(
                &augmented.features,
                &augmented.targets,
                augmented.num_classes,
                &cfg.train,
            )?;
            Ok(TrainedModel::Head(h))
        }
    }
}

fn group_name(class: usize, majority: &[usize]) -> String {
    if majority.contains(&class) { "majority".into() } else { "minority".into() }
}

fn cell_metrics(
    cfg: &ExperimentConfig,
    augmented: &AugmentedSet<f64>,
    test_batch: &BatchDecomposition<f64>,
    train_batch: &BatchDecomposition<f64>,
    k_rule: KRule,
    majority: &[usize],
    num_classes: usize,
) -> Result<CellMetrics> {
    let mode = cfg.diagnostics.baseline_mode;
    let top_k = cfg.diagnostics.top_k;
    let top_m = cfg.diagnostics.top_m;

    let mut instances = Vec::new();
    for (d, &tp) in test_batch.decompositions.iter().zip(&test_batch.tp_mask) {
        if !tp {
            continue;
        }
        let sparsity = minimal_ce_count(d, mode)?;
        let share = if has_supporting_ce(d) {
            Some(topk_contribution_share(d, k_rule)?.share)
        } else {
            None
        };
        instances.push(InstanceRow {
            instance_id: d.instance_id,
            class: d.true_label,
            k: sparsity.k,
            fraction: sparsity.fraction,
            share,
        });
    }

    let mut classes = Vec::new();
    for c in 0..num_classes {
        let tps = test_batch.tp_of_class(c);
        if tps.is_empty() {
            log::warn!(target: "diagnose", "class {c} has no test true positives; omitted");
            continue;
        }
        let coverage = class_unique_ce(&tps, top_k)?;
        let fractions: Vec<f64> =
            instances.iter().filter(|r| r.class == c).map(|r| r.fraction).collect();
        let (fraction_mean, fraction_sd) =
            mean_sd(&fractions).expect("class has true positives");
        let shares: Vec<f64> =
            instances.iter().filter(|r| r.class == c).filter_map(|r| r.share).collect();
        let share_stats = mean_sd(&shares);
        classes.push(ClassRow {
            class: c,
            group: group_name(c, majority),
            tp_count: tps.len(),
            coverage: coverage.coverage_fraction,
            fraction_mean,
            fraction_sd,
            share_mean: share_stats.map(|(m, _)| m),
            share_sd: share_stats.map(|(_, s)| s),
            share_excluded: fractions.len() - shares.len(),
        });
    }

    let mut freq_mag = Vec::new();
    for c in 0..num_classes {
        let tps = train_batch.tp_of_class(c);
        if tps.is_empty() {
            log::warn!(target: "diagnose", "class {c} has no training true positives; omitted");
            continue;
        }
        freq_mag.push(frequency_magnitude_profile(&tps, top_k, top_m)?);
    }

    let tp_total: usize = test_batch.tp_counts.iter().sum();
    let accuracy = tp_total as f64 / test_batch.decompositions.len() as f64;
    Ok(CellMetrics {
        accuracy,
        test_tp_counts: test_batch.tp_counts.clone(),
        augmented_class_counts: augmented.class_counts(),
        instances,
        classes,
        freq_mag,
    })
}

#[allow(clippy::too_many_arguments)]
fn run_cell(
    cfg: &ExperimentConfig,
    train: &Dataset<f64>,
    test: &Dataset<f64>,
    pretrained_head: Option<&HeadWeights<f64>>,
    method: Method,
    cell_seed: u64,
    k_rule: KRule,
    majority: &[usize],
    split: usize,
    timings: &mut Vec<TimingRow>,
) -> StageResult<CellMetrics> {
    let mut clock = Instant::now();
    let lap = |timings: &mut Vec<TimingRow>, stage: &str, clock: &mut Instant| {
        timings.push(TimingRow {
            split,
            method,
            stage: stage.into(),
            seconds: clock.elapsed().as_secs_f64(),
        });
        *clock = Instant::now();
    };

    let aug_cfg = cfg.augment.to_config(method);
    let augmented = stage("augment", rebalance(train, &aug_cfg, cell_seed))?;
    lap(timings, "augment", &mut clock);

    let model = stage("train", fit_model(cfg, &augmented, pretrained_head, method))?;
    lap(timings, "train", &mut clock);

    let test_batch =
        stage("decompose", batch_decompose(&model, test.features(), test.labels()))?;
    // The usage profile draws on the original pre-augmentation training rows.
    let train_batch =
        stage("decompose", batch_decompose(&model, train.features(), train.labels()))?;
    lap(timings, "decompose", &mut clock);

    let metrics = stage(
        "diagnose",
        cell_metrics(cfg, &augmented, &test_batch, &train_batch, k_rule, majority, test.num_classes()),
    )?;
    lap(timings, "diagnose", &mut clock);
    Ok(metrics)
}

const AGGREGATE_METRICS: [&str; 4] = ["k", "fraction", "share", "coverage"];

fn group_defs(num_classes: usize, majority: &[usize]) -> Vec<(String, Vec<usize>)> {
    let mut defs: Vec<(String, Vec<usize>)> =
        (0..num_classes).map(|c| (format!("class_{c}"), vec![c])).collect();
    defs.push(("majority".into(), majority.to_vec()));
    defs.push(("minority".into(), (0..num_classes).filter(|c| !majority.contains(c)).collect()));
    defs
}

/// Pooled value of one metric over one group's classes within one cell;
/// None when the group has no contributing rows.
fn split_group_value(m: &CellMetrics, classes: &[usize], metric: &str) -> Option<f64> {
    let values: Vec<f64> = match metric {
        "coverage" => m
            .classes
            .iter()
            .filter(|r| classes.contains(&r.class))
            .map(|r| r.coverage)
            .collect(),
        "k" => m
            .instances
            .iter()
            .filter(|r| classes.contains(&r.class))
            .map(|r| r.k as f64)
            .collect(),
        "fraction" => m
            .instances
            .iter()
            .filter(|r| classes.contains(&r.class))
            .map(|r| r.fraction)
            .collect(),
        "share" => m
            .instances
            .iter()
            .filter(|r| classes.contains(&r.class))
            .filter_map(|r| r.share)
            .collect(),
        _ => unreachable!("unknown metric {metric}"),
    };
    mean_sd(&values).map(|(mean, _)| mean)
}

/// Averages per-split group means into one row per (method, group, metric).
fn aggregate_over_splits(
    cells: &[CellResult],
    majority: &[usize],
    num_classes: usize,
) -> Vec<AggregateRow> {
    let mut methods = Vec::new();
    for cell in cells {
        if !methods.contains(&cell.method) {
            methods.push(cell.method);
        }
    }
    let defs = group_defs(num_classes, majority);
    let mut rows = Vec::new();
    for &method in &methods {
        for (group, group_classes) in &defs {
            for metric in AGGREGATE_METRICS {
                let per_split: Vec<f64> = cells
                    .iter()
                    .filter(|c| c.method == method)
                    .filter_map(|c| match &c.outcome {
                        CellOutcome::Completed { metrics } => {
                            split_group_value(metrics, group_classes, metric)
                        }
                        CellOutcome::Failed { .. } => None,
                    })
                    .collect();
                match mean_sd(&per_split) {
                    Some((mean, sd)) => rows.push(AggregateRow {
                        method,
                        group: group.clone(),
                        metric: metric.to_string(),
                        mean,
                        sd,
                        n_splits: per_split.len(),
                    }),
                    None => log::warn!(
                        target: "aggregate",
                        "no values for method {} group {group} metric {metric}; omitted",
                        method.as_str()
                    ),
                }
            }
        }
    }
    rows
}

/// Runs the full grid. Cell failures are recorded in the report and do not
/// abort the remaining cells; the result is deterministic given the config.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<DiagnosticsReport> {
    cfg.validate()?;
    let (loaded, pretrained_head) = load_source(cfg)?;
    let data = match &cfg.imbalance {
        Some(ImbalanceSpec::Exponential { n_max, ratio }) => apply_exponential_imbalance(
            &loaded,
            *n_max,
            *ratio,
            derive_seed(cfg.seed, IMBALANCE_STREAM),
        )?,
        Some(ImbalanceSpec::Step { majority_classes, n_maj, n_min }) => apply_step_imbalance(
            &loaded,
            majority_classes,
            *n_maj,
            *n_min,
            derive_seed(cfg.seed, IMBALANCE_STREAM),
        )?,
        None => loaded,
    };
    if cfg.model != ModelKind::Head && data.num_classes() != 2 {
        return Err(Error::InvalidConfig(format!(
            "{} model needs exactly 2 classes, the dataset has {}",
            cfg.model.as_str(),
            data.num_classes()
        )));
    }

    let majority = data.majority_classes();
    let n_splits = cfg.resolved_n_splits();
    let split_seeds: Vec<u64> = (0..n_splits).map(|i| cfg.seed.wrapping_add(i as u64)).collect();
    let k_rule = cfg.resolved_k_rule();
    let mut cells = Vec::new();
    let mut timings = Vec::new();

    for (i, &split_seed) in split_seeds.iter().enumerate() {
        let (train_raw, test_raw) = stratified_split(&data, cfg.split.train_fraction, split_seed)?;
        let (train, test) = if cfg.resolved_standardize() {
            let scaler = Standardizer::fit(train_raw.features());
            (scaler.transform_dataset(&train_raw)?, scaler.transform_dataset(&test_raw)?)
        } else {
            (train_raw, test_raw)
        };
        let test_checksum = sha256_dataset(&test);
        for &method in &cfg.methods {
            log::info!(target: "run", "split {i} method {}", method.as_str());
            let cell_seed = derive_seed(split_seed, AUGMENT_STREAM_BASE + method as u64);
            let outcome = match run_cell(
                cfg,
                &train,
                &test,
                pretrained_head.as_ref(),
                method,
                cell_seed,
                k_rule,
                &majority,
                i,
                &mut timings,
            ) {
                Ok(metrics) => CellOutcome::Completed { metrics },
                Err((stage, e)) => {
                    log::warn!(
                        target: "run",
                        "split {i} method {} failed at {stage}: {e}",
                        method.as_str()
                    );
                    CellOutcome::Failed { stage, message: e.to_string() }
                }
            };
            assert_eq!(
                sha256_dataset(&test),
                test_checksum,
                "test data must never be augmented"
            );
            cells.push(CellResult { split: i, method, outcome });
        }
    }

    let aggregates = aggregate_over_splits(&cells, &majority, data.num_classes());
    Ok(DiagnosticsReport {
        config: cfg.clone(),
        config_hash: cfg.hash()?,
        split_seeds,
        num_classes: data.num_classes(),
        majority_classes: majority,
        k_rule,
        baseline_mode: cfg.diagnostics.baseline_mode,
        cells,
        aggregates,
        timings,
    })
}
