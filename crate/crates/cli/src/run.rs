//! Experiment pipelines shared by the binary and the tests.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rsac_core::continual::evaluate_with;
use rsac_core::metrics::{accuracy, macro_accuracy, ConfigSnapshot, Timing};
use rsac_core::{
    make_schedule, ClassId, Classifier, EigenSolver, Error, EvalReport, Evaluation, LabeledDataset, PixelScale, Protocol, QdcConfig,
    RankPolicy, Result, Split, TaskSchedule, TrainerState, VectorBank,
};

pub const TIMING_SCOPE: &str = "train: accumulation and per-class fits excluding loading; infer: test-set prediction";

/// Uniform k reported as best for each dataset.
pub fn default_k(dataset: &str) -> Option<usize> {
    match dataset {
        "mnist" => Some(150),
        "kmnist" => Some(192),
        "fashion" => Some(183),
        _ => None,
    }
}

pub fn source_urls(dataset: &str) -> &'static [&'static str] {
    match dataset {
        "mnist" => &["http://yann.lecun.com/exdb/mnist/", "https://ossci-datasets.s3.amazonaws.com/mnist/"],
        "kmnist" => &["https://github.com/rois-codh/kmnist", "http://codh.rois.ac.jp/kmnist/dataset/kmnist/"],
        "fashion" => &[
            "https://github.com/zalandoresearch/fashion-mnist",
            "http://fashion-mnist.s3-website.eu-central-1.amazonaws.com/",
        ],
        _ => &[],
    }
}

/// Text shown when a dataset's files cannot be found.
pub fn missing_data_hint(dataset: &str, root: &Path) -> String {
    let mut out = format!(
        "expected {}/{dataset}/{{train,t10k}}-{{images-idx3,labels-idx1}}-ubyte[.gz]\n",
        root.display()
    );
    let urls = source_urls(dataset);
    if !urls.is_empty() {
        out.push_str("official sources:\n");
        for u in urls {
            let _ = writeln!(out, "  {u}");
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum ProtocolKind {
    ClassIncremental,
    DataIncremental,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub dataset: String,
    pub data_root: PathBuf,
    pub protocol: ProtocolKind,
    /// Class-incremental: number of equal label groups. Data-incremental:
    /// number of chunks per class.
    pub tasks: usize,
    pub rank: RankPolicy,
    pub qdc: QdcConfig,
    pub pixel_scale: PixelScale,
    pub seed: u64,
    /// Train on this many samples per class instead of the full split.
    pub per_class: Option<usize>,
    pub eigensolver: EigenSolver,
}

impl RunConfig {
    /// Headline settings for a known dataset.
    pub fn for_dataset(dataset: &str, data_root: impl Into<PathBuf>) -> Result<Self> {
        let k = default_k(dataset)
            .ok_or_else(|| Error::InvalidConfig(format!("no default k for dataset {dataset:?}; pass --k or --t")))?;
        Ok(Self {
            dataset: dataset.to_string(),
            data_root: data_root.into(),
            protocol: ProtocolKind::ClassIncremental,
            tasks: 5,
            rank: RankPolicy::FixedK(k),
            qdc: QdcConfig::default(),
            pixel_scale: PixelScale::default(),
            seed: 0,
            per_class: None,
            eigensolver: EigenSolver::default(),
        })
    }

    pub fn validate(&self) -> Result<()> {
        self.rank.validate()?;
        self.qdc.validate()?;
        if self.tasks == 0 {
            return Err(Error::InvalidConfig("--tasks must be at least 1".into()));
        }
        if self.per_class == Some(0) {
            return Err(Error::InvalidConfig("--per-class must be at least 1".into()));
        }
        Ok(())
    }

    pub fn protocol_for(&self, num_classes: usize) -> Result<Protocol> {
        match self.protocol {
            ProtocolKind::ClassIncremental => {
                if num_classes % self.tasks != 0 || self.tasks > num_classes {
                    return Err(Error::InvalidConfig(format!(
                        "{num_classes} classes cannot be split into {} equal tasks",
                        self.tasks
                    )));
                }
                Ok(Protocol::ClassIncremental {
                    group_size: num_classes / self.tasks,
                })
            }
            ProtocolKind::DataIncremental => Ok(Protocol::DataIncremental { chunks: self.tasks }),
        }
    }

    fn snapshot(&self, tasks: usize) -> ConfigSnapshot {
        ConfigSnapshot {
            rank_policy: self.rank.describe(),
            alpha: self.qdc.alpha,
            logdet_coefficient: self.qdc.logdet_coefficient.value(),
            pixel_scale: self.pixel_scale.name().into(),
            seed: self.seed,
            tasks,
            eigensolver: self.eigensolver.name().into(),
            timing_scope: TIMING_SCOPE.into(),
        }
    }
}

pub struct Data {
    pub train: LabeledDataset,
    pub test: LabeledDataset,
}

pub fn load_data(cfg: &RunConfig) -> Result<Data> {
    Ok(Data {
        train: LabeledDataset::load(&cfg.data_root, &cfg.dataset, Split::Train, cfg.pixel_scale)?,
        test: load_test(cfg)?,
    })
}

pub fn load_test(cfg: &RunConfig) -> Result<LabeledDataset> {
    LabeledDataset::load(&cfg.data_root, &cfg.dataset, Split::Test, cfg.pixel_scale)
}

pub struct RunOutcome {
    pub report: EvalReport,
    pub schedule: TaskSchedule,
    /// Frozen after training.
    pub bank: VectorBank,
}

/// Trains through the configured schedule and evaluates every learned
/// class on the test split.
pub fn train(cfg: &RunConfig, data: &Data) -> Result<(TrainerState, TaskSchedule)> {
    cfg.validate()?;
    let subset;
    let train = match cfg.per_class {
        Some(n) => {
            subset = data.train.subsample(n, cfg.seed)?;
            &subset
        }
        None => &data.train,
    };
    let schedule = make_schedule(train, cfg.protocol_for(train.classes().len())?, cfg.seed)?;
    let bank = VectorBank::new(train.dim(), cfg.rank)?.with_solver(cfg.eigensolver);
    let mut state = TrainerState::new(bank, cfg.qdc)?;
    state.train_schedule(train, &schedule)?;
    state.bank.freeze();
    Ok((state, schedule))
}

pub fn train_eval(cfg: &RunConfig, data: &Data) -> Result<RunOutcome> {
    let (state, schedule) = train(cfg, data)?;
    let classes: BTreeSet<ClassId> = state.bank.class_ids().collect();
    let eval = state.evaluate(&data.test, &classes)?;
    let report = build_report(
        cfg,
        protocol_name(cfg.protocol),
        schedule.len(),
        &state.bank,
        &eval,
        state.train_time().as_secs_f64(),
    )?;
    Ok(RunOutcome {
        report,
        schedule,
        bank: state.bank,
    })
}

pub fn protocol_name(kind: ProtocolKind) -> &'static str {
    match kind {
        ProtocolKind::ClassIncremental => "class-incremental",
        ProtocolKind::DataIncremental => "data-incremental",
    }
}

pub fn build_report(cfg: &RunConfig, protocol: &str, tasks: usize, bank: &VectorBank, eval: &Evaluation, train_seconds: f64) -> Result<EvalReport> {
    Ok(EvalReport {
        dataset: cfg.dataset.clone(),
        protocol: protocol.into(),
        accuracy: accuracy(&eval.confusion)?,
        macro_accuracy: macro_accuracy(&eval.confusion)?,
        evaluated: eval.confusion.total(),
        confusion: eval.confusion.clone(),
        timing: Timing {
            train_seconds,
            infer_seconds: eval.infer_time.as_secs_f64(),
        },
        config: cfg.snapshot(tasks),
        memory: bank.memory_footprint()?,
    })
}

/// Evaluates an already trained bank on every class it holds.
pub fn evaluate_bank(bank: &VectorBank, qdc: QdcConfig, test: &LabeledDataset) -> Result<Evaluation> {
    let classes: BTreeSet<ClassId> = bank.class_ids().collect();
    evaluate_with(&Classifier::new(bank, qdc)?, test, &classes)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ThresholdRow {
    pub t: f64,
    pub k_min: usize,
    pub k_mean: f64,
    pub k_max: usize,
    /// Every class truncated to `round(k_mean)`.
    pub accuracy: f64,
    /// Each class truncated to its own threshold rank.
    pub accuracy_per_class_k: f64,
}

/// Power-threshold sweep. One full-rank fit is truncated per threshold,
/// which is bit-identical to refitting at each rank.
pub fn ablate_threshold(cfg: &RunConfig, data: &Data, thresholds: &[f64]) -> Result<Vec<ThresholdRow>> {
    if thresholds.is_empty() {
        return Err(Error::InvalidConfig("no thresholds given".into()));
    }
    for &t in thresholds {
        RankPolicy::PowerThreshold(t).validate()?;
    }
    let full_cfg = RunConfig {
        rank: RankPolicy::FixedK(data.train.dim()),
        ..cfg.clone()
    };
    let (state, _) = train(&full_cfg, data)?;
    thresholds
        .iter()
        .map(|&t| {
            let per_class = state.bank.truncated(RankPolicy::PowerThreshold(t))?;
            let ks: Vec<usize> = per_class.memory_footprint()?.per_class.into_values().collect();
            let k_mean = ks.iter().sum::<usize>() as f64 / ks.len() as f64;
            let uniform = state.bank.truncated(RankPolicy::FixedK((k_mean.round() as usize).max(1)))?;
            Ok(ThresholdRow {
                t,
                k_min: ks.iter().copied().min().unwrap_or(0),
                k_mean,
                k_max: ks.iter().copied().max().unwrap_or(0),
                accuracy: evaluate_bank(&uniform, cfg.qdc, &data.test)?.accuracy,
                accuracy_per_class_k: evaluate_bank(&per_class, cfg.qdc, &data.test)?.accuracy,
            })
        })
        .collect()
}

pub fn threshold_csv(rows: &[ThresholdRow]) -> String {
    let mut out = String::from("t,k_min,k_mean,k_max,accuracy,accuracy_per_class_k\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            r.t, r.k_min, r.k_mean, r.k_max, r.accuracy, r.accuracy_per_class_k
        );
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum SampleCount {
    PerClass(usize),
    Full,
}

impl std::str::FromStr for SampleCount {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "full" => Ok(SampleCount::Full),
            n => n
                .parse()
                .ok()
                .filter(|&n| n > 0)
                .map(SampleCount::PerClass)
                .ok_or_else(|| Error::InvalidConfig(format!("bad sample count {n:?}"))),
        }
    }
}

impl std::fmt::Display for SampleCount {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            SampleCount::PerClass(n) => write!(f, "{n}"),
            SampleCount::Full => f.write_str("full"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasizeRow {
    pub per_class: SampleCount,
    pub train_samples: usize,
    pub accuracy: f64,
    pub macro_accuracy: f64,
}

pub fn ablate_datasize(cfg: &RunConfig, data: &Data, counts: &[SampleCount]) -> Result<Vec<DatasizeRow>> {
    if counts.is_empty() {
        return Err(Error::InvalidConfig("no sample counts given".into()));
    }
    if counts.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidConfig("sample counts must be strictly ascending".into()));
    }
    counts
        .iter()
        .map(|&count| {
            let run = RunConfig {
                per_class: match count {
                    SampleCount::PerClass(n) => Some(n),
                    SampleCount::Full => None,
                },
                ..cfg.clone()
            };
            let outcome = train_eval(&run, data)?;
            Ok(DatasizeRow {
                per_class: count,
                train_samples: outcome.bank.total_count() as usize,
                accuracy: outcome.report.accuracy,
                macro_accuracy: outcome.report.macro_accuracy,
            })
        })
        .collect()
}

pub fn datasize_csv(rows: &[DatasizeRow]) -> String {
    let mut out = String::from("per_class,train_samples,accuracy,macro_accuracy\n");
    for r in rows {
        let _ = writeln!(out, "{},{},{},{}", r.per_class, r.train_samples, r.accuracy, r.macro_accuracy);
    }
    out
}

/// Human-readable summary of a bank.
pub fn inspect(bank: &VectorBank) -> Result<String> {
    let fp = bank.memory_footprint()?;
    let mut out = format!("dim {}  classes {}  samples {}\n", bank.dim(), bank.len(), bank.total_count());
    out.push_str("class      k    count\n");
    for m in bank.models() {
        let _ = writeln!(out, "{:>5} {:>6} {:>8}", m.class_id(), m.rank(), m.count());
    }
    let ks: Vec<usize> = fp.per_class.values().copied().collect();
    let _ = writeln!(
        out,
        "k range {}..={}  stored vectors {} (k_c + 1 per class)  {} f64 values",
        ks.iter().min().unwrap_or(&0),
        ks.iter().max().unwrap_or(&0),
        fp.total_vectors,
        bank.retained_floats()
    );
    Ok(out)
}
