//! Task schedules and the streaming train/evaluate loop.
//!
//! A schedule partitions the training indices of a dataset into tasks.
//! Class-incremental tasks carry disjoint label sets; data-incremental tasks
//! carry a slice of every class, so the same class arrives at several
//! timestamps. Training consumes one task at a time and keeps nothing but
//! per-class statistics between tasks.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::bank::VectorBank;
use crate::dataset::LabeledDataset;
use crate::error::{Error, Result};
use crate::metrics::{accuracy, ConfusionMatrix};
use crate::qdc::{Classifier, QdcConfig};
use crate::ClassId;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Protocol {
    /// Consecutive groups of `group_size` labels, ascending.
    ClassIncremental { group_size: usize },
    /// Every class split into `chunks` parts after a seeded shuffle; task
    /// `j` receives part `j` of each class.
    DataIncremental { chunks: usize },
}

impl Protocol {
    pub fn name(&self) -> &'static str {
        match self {
            Protocol::ClassIncremental { .. } => "class-incremental",
            Protocol::DataIncremental { .. } => "data-incremental",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Task {
    pub task_id: usize,
    /// Dataset indices per class, in stream order.
    pub batches: BTreeMap<ClassId, Vec<usize>>,
}

impl Task {
    pub fn label_set(&self) -> BTreeSet<ClassId> {
        self.batches.keys().copied().collect()
    }

    pub fn len(&self) -> usize {
        self.batches.values().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TaskSchedule {
    pub protocol: Protocol,
    pub tasks: Vec<Task>,
}

impl TaskSchedule {
    pub fn len(&self) -> usize {
        self.tasks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tasks.is_empty()
    }

    /// Checks that every index in `0..n` appears exactly once, with the
    /// label it has in `labels`, and that class-incremental label sets are
    /// disjoint.
    pub fn verify_partition(&self, labels: &[u8]) -> Result<()> {
        let mut seen = vec![false; labels.len()];
        let mut label_owner: BTreeMap<ClassId, usize> = BTreeMap::new();
        for task in &self.tasks {
            if task.is_empty() {
                return Err(Error::InvalidConfig(format!("task {} is empty", task.task_id)));
            }
            for (&class, indices) in &task.batches {
                if let Protocol::ClassIncremental { .. } = self.protocol {
                    if let Some(prev) = label_owner.insert(class, task.task_id) {
                        return Err(Error::InvalidConfig(format!(
                            "class {class} appears in tasks {prev} and {}",
                            task.task_id
                        )));
                    }
                }
                for &i in indices {
                    let slot = seen.get_mut(i).ok_or_else(|| Error::InvalidConfig(format!("index {i} out of range")))?;
                    if std::mem::replace(slot, true) {
                        return Err(Error::InvalidConfig(format!("index {i} scheduled twice")));
                    }
                    if labels[i] as ClassId != class {
                        return Err(Error::InvalidConfig(format!("index {i} filed under class {class}")));
                    }
                }
            }
        }
        if let Some(missing) = seen.iter().position(|s| !s) {
            return Err(Error::InvalidConfig(format!("index {missing} never scheduled")));
        }
        Ok(())
    }

    /// Text manifest: a header line, then one line per (task, class) with
    /// the dataset indices as comma-separated half-open ranges.
    pub fn to_manifest(&self) -> String {
        let mut out = String::new();
        let param = match self.protocol {
            Protocol::ClassIncremental { group_size } => format!("group_size={group_size}"),
            Protocol::DataIncremental { chunks } => format!("chunks={chunks}"),
        };
        let _ = writeln!(out, "# protocol={} {param} tasks={}", self.protocol.name(), self.tasks.len());
        for task in &self.tasks {
            for (class, indices) in &task.batches {
                let _ = writeln!(out, "{}\t{}\t{}", task.task_id, class, encode_ranges(indices));
            }
        }
        out
    }

    pub fn from_manifest(text: &str) -> Result<Self> {
        let bad = |what: String| Error::InvalidConfig(format!("schedule manifest: {what}"));
        let mut lines = text.lines();
        let header = lines.next().ok_or_else(|| bad("empty".into()))?;
        let fields: BTreeMap<&str, &str> = header
            .trim_start_matches('#')
            .split_whitespace()
            .filter_map(|kv| kv.split_once('='))
            .collect();
        let num = |key: &str| -> Result<usize> {
            fields
                .get(key)
                .and_then(|v| v.parse().ok())
                .ok_or_else(|| bad(format!("missing {key}")))
        };
        let protocol = match fields.get("protocol").copied() {
            Some("class-incremental") => Protocol::ClassIncremental { group_size: num("group_size")? },
            Some("data-incremental") => Protocol::DataIncremental { chunks: num("chunks")? },
            other => return Err(bad(format!("unknown protocol {other:?}"))),
        };
        let mut tasks: Vec<Task> = (0..num("tasks")?)
            .map(|task_id| Task {
                task_id,
                batches: BTreeMap::new(),
            })
            .collect();
        for line in lines.filter(|l| !l.trim().is_empty()) {
            let mut parts = line.split('\t');
            let (Some(t), Some(c), Some(r)) = (parts.next(), parts.next(), parts.next()) else {
                return Err(bad(format!("malformed line {line:?}")));
            };
            let t: usize = t.parse().map_err(|_| bad(format!("bad task id {t:?}")))?;
            let c: ClassId = c.parse().map_err(|_| bad(format!("bad class id {c:?}")))?;
            let task = tasks.get_mut(t).ok_or_else(|| bad(format!("task {t} out of range")))?;
            task.batches.insert(c, decode_ranges(r).map_err(bad)?);
        }
        Ok(TaskSchedule { protocol, tasks })
    }
}

fn encode_ranges(indices: &[usize]) -> String {
    let mut parts = Vec::new();
    let mut i = 0;
    while i < indices.len() {
        let start = indices[i];
        let mut end = start + 1;
        while i + 1 < indices.len() && indices[i + 1] == end {
            end += 1;
            i += 1;
        }
        parts.push(format!("{start}..{end}"));
        i += 1;
    }
    parts.join(",")
}

fn decode_ranges(s: &str) -> std::result::Result<Vec<usize>, String> {
    let mut out = Vec::new();
    for part in s.split(',').filter(|p| !p.is_empty()) {
        let (a, b) = part.split_once("..").ok_or_else(|| format!("bad range {part:?}"))?;
        let a: usize = a.parse().map_err(|_| format!("bad range {part:?}"))?;
        let b: usize = b.parse().map_err(|_| format!("bad range {part:?}"))?;
        out.extend(a..b);
    }
    Ok(out)
}

/// Builds a deterministic schedule over `dataset`.
pub fn make_schedule(dataset: &LabeledDataset, protocol: Protocol, seed: u64) -> Result<TaskSchedule> {
    if dataset.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let by_class = dataset.indices_by_class();
    let classes: Vec<ClassId> = by_class.keys().copied().collect();
    let tasks = match protocol {
        Protocol::ClassIncremental { group_size } => {
            if group_size == 0 || !classes.len().is_multiple_of(group_size) {
                return Err(Error::IndivisibleClasses {
                    classes: classes.len(),
                    group: group_size,
                });
            }
            classes
                .chunks(group_size)
                .enumerate()
                .map(|(task_id, group)| Task {
                    task_id,
                    batches: group.iter().map(|c| (*c, by_class[c].clone())).collect(),
                })
                .collect()
        }
        Protocol::DataIncremental { chunks } => {
            if chunks == 0 {
                return Err(Error::InvalidConfig("chunks must be at least 1".into()));
            }
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut tasks: Vec<Task> = (0..chunks)
                .map(|task_id| Task {
                    task_id,
                    batches: BTreeMap::new(),
                })
                .collect();
            for (&class, indices) in &by_class {
                if indices.len() < chunks {
                    return Err(Error::InsufficientSamples {
                        class,
                        available: indices.len(),
                        requested: chunks,
                    });
                }
                let mut shuffled = indices.clone();
                shuffled.shuffle(&mut rng);
                let base = shuffled.len() / chunks;
                let extra = shuffled.len() % chunks;
                let mut start = 0;
                for (j, task) in tasks.iter_mut().enumerate() {
                    let len = base + usize::from(j < extra);
                    task.batches.insert(class, shuffled[start..start + len].to_vec());
                    start += len;
                }
            }
            tasks
        }
    };
    Ok(TaskSchedule { protocol, tasks })
}

/// Everything the learner keeps between tasks.
#[derive(Debug, Clone)]
pub struct TrainerState {
    pub bank: VectorBank,
    pub qdc: QdcConfig,
    tasks_seen: BTreeSet<usize>,
    wall_clock_train: Duration,
    peak_retained: usize,
}

impl TrainerState {
    pub fn new(bank: VectorBank, qdc: QdcConfig) -> Result<Self> {
        Ok(Self {
            bank,
            qdc: qdc.validate()?,
            tasks_seen: BTreeSet::new(),
            wall_clock_train: Duration::ZERO,
            peak_retained: 0,
        })
    }

    pub fn tasks_seen(&self) -> usize {
        self.tasks_seen.len()
    }

    /// Monotonic time spent inside [`TrainerState::train_task`].
    pub fn train_time(&self) -> Duration {
        self.wall_clock_train
    }

    /// Accumulates each class's samples from `task` and refits those
    /// classes. Classes absent from the task are not touched.
    pub fn train_task(&mut self, dataset: &LabeledDataset, task: &Task) -> Result<()> {
        if self.tasks_seen.contains(&task.task_id) {
            return Err(Error::TaskReplayed(task.task_id));
        }
        let start = Instant::now();
        let mut buf = Vec::with_capacity(dataset.dim());
        for (&class, indices) in &task.batches {
            for &i in indices {
                dataset.sample_into(i, &mut buf);
                self.bank.accumulate_one(class, &buf)?;
            }
        }
        let classes: Vec<ClassId> = task.batches.keys().copied().collect();
        self.bank.finalize_many(&classes)?;
        self.wall_clock_train += start.elapsed();
        self.tasks_seen.insert(task.task_id);
        self.peak_retained = self.peak_retained.max(self.bank.retained_floats());
        Ok(())
    }

    /// Largest number of `f64`s held between tasks so far.
    pub fn peak_retained_floats(&self) -> usize {
        self.peak_retained
    }

    /// Upper bound on [`TrainerState::peak_retained_floats`]: `d² + d`
    /// statistics per class plus the fitted models. Independent of how many
    /// samples were seen.
    pub fn retained_bound(&self) -> usize {
        let d = self.bank.dim();
        self.bank.len() * (d * d + d) + self.bank.models().map(|m| m.retained_floats()).sum::<usize>()
    }

    pub fn train_schedule(&mut self, dataset: &LabeledDataset, schedule: &TaskSchedule) -> Result<()> {
        for task in &schedule.tasks {
            self.train_task(dataset, task)?;
        }
        Ok(())
    }

    /// Predicts every test sample whose label is in `classes`, choosing
    /// among all classes in the bank.
    pub fn evaluate(&self, test: &LabeledDataset, classes: &BTreeSet<ClassId>) -> Result<Evaluation> {
        let classifier = Classifier::new(&self.bank, self.qdc)?;
        evaluate_with(&classifier, test, classes)
    }

    /// Like [`TrainerState::evaluate`] but the decision is restricted to
    /// `classes` themselves, with priors renormalized over them.
    pub fn evaluate_within(&self, test: &LabeledDataset, classes: &BTreeSet<ClassId>) -> Result<Evaluation> {
        let candidates: Vec<ClassId> = classes.iter().copied().collect();
        let classifier = Classifier::among(&self.bank, &candidates, self.qdc)?;
        evaluate_with(&classifier, test, classes)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub confusion: ConfusionMatrix,
    pub accuracy: f64,
    pub infer_time: Duration,
}

/// Runs `classifier` over the test samples labelled in `classes`, in
/// parallel. Confusion rows and columns span `0..=max label`.
pub fn evaluate_with(classifier: &Classifier<'_>, test: &LabeledDataset, classes: &BTreeSet<ClassId>) -> Result<Evaluation> {
    let known: BTreeSet<ClassId> = classifier.classes().collect();
    if let Some(&missing) = classes.iter().find(|c| !known.contains(c)) {
        return Err(Error::UnknownClass(missing));
    }
    let num_classes = known
        .iter()
        .chain(test.class_counts().keys())
        .max()
        .map_or(0, |&c| c as usize + 1);
    let indices: Vec<usize> = (0..test.len()).filter(|&i| classes.contains(&test.label(i))).collect();

    let start = Instant::now();
    let confusion = indices
        .par_chunks(256)
        .map(|chunk| -> Result<ConfusionMatrix> {
            let mut m = ConfusionMatrix::new(num_classes);
            let mut buf = Vec::with_capacity(test.dim());
            for &i in chunk {
                test.sample_into(i, &mut buf);
                m.record(test.label(i), classifier.predict_label(&buf)?)?;
            }
            Ok(m)
        })
        .try_reduce(
            || ConfusionMatrix::new(num_classes),
            |mut a, b| {
                a.merge(&b)?;
                Ok(a)
            },
        )?;
    let infer_time = start.elapsed();
    Ok(Evaluation {
        accuracy: accuracy(&confusion)?,
        confusion,
        infer_time,
    })
}
