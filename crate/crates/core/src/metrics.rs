//! Accuracy, confusion matrices and report serialization.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::bank::MemoryFootprint;
use crate::error::{Error, Result};
use crate::ClassId;

/// Rows are true labels, columns predictions.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    num_classes: usize,
    counts: Vec<u64>,
}

impl ConfusionMatrix {
    pub fn new(num_classes: usize) -> Self {
        Self {
            num_classes,
            counts: vec![0; num_classes * num_classes],
        }
    }

    pub fn from_rows(rows: &[Vec<u64>]) -> Result<Self> {
        let n = rows.len();
        let mut m = Self::new(n);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != n {
                return Err(Error::DimMismatch {
                    expected: n,
                    found: row.len(),
                });
            }
            m.counts[i * n..(i + 1) * n].copy_from_slice(row);
        }
        Ok(m)
    }

    /// Builds a matrix from paired label lists.
    pub fn from_predictions(num_classes: usize, truth: &[ClassId], predicted: &[ClassId]) -> Result<Self> {
        if truth.len() != predicted.len() {
            return Err(Error::DimMismatch {
                expected: truth.len(),
                found: predicted.len(),
            });
        }
        let mut m = Self::new(num_classes);
        for (&t, &p) in truth.iter().zip(predicted) {
            m.record(t, p)?;
        }
        Ok(m)
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn record(&mut self, truth: ClassId, predicted: ClassId) -> Result<()> {
        let n = self.num_classes;
        for c in [truth, predicted] {
            if c as usize >= n {
                return Err(Error::UnknownClass(c));
            }
        }
        self.counts[truth as usize * n + predicted as usize] += 1;
        Ok(())
    }

    pub fn get(&self, truth: usize, predicted: usize) -> u64 {
        self.counts[truth * self.num_classes + predicted]
    }

    pub fn row(&self, truth: usize) -> &[u64] {
        &self.counts[truth * self.num_classes..(truth + 1) * self.num_classes]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..self.num_classes).map(|i| self.get(i, i)).sum()
    }

    pub fn row_sums(&self) -> Vec<u64> {
        (0..self.num_classes).map(|i| self.row(i).iter().sum()).collect()
    }

    /// Sums partial matrices, e.g. from parallel shards.
    pub fn merge(&mut self, other: &ConfusionMatrix) -> Result<()> {
        if other.num_classes != self.num_classes {
            return Err(Error::DimMismatch {
                expected: self.num_classes,
                found: other.num_classes,
            });
        }
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
        Ok(())
    }

    /// Applies the same relabeling to rows and columns.
    pub fn permuted(&self, perm: &[usize]) -> Result<Self> {
        let n = self.num_classes;
        if perm.len() != n {
            return Err(Error::DimMismatch {
                expected: n,
                found: perm.len(),
            });
        }
        let mut out = Self::new(n);
        for i in 0..n {
            for j in 0..n {
                out.counts[perm[i] * n + perm[j]] = self.get(i, j);
            }
        }
        Ok(out)
    }

    /// Portable graymap (P2), darker cells for larger row-normalized counts.
    pub fn to_pgm(&self) -> String {
        let n = self.num_classes;
        let mut out = format!("P2\n{n} {n}\n255\n");
        for i in 0..n {
            let row_total: u64 = self.row(i).iter().sum();
            let cells: Vec<String> = self
                .row(i)
                .iter()
                .map(|&c| {
                    let frac = if row_total == 0 { 0.0 } else { c as f64 / row_total as f64 };
                    (255.0 - (255.0 * frac).round()).to_string()
                })
                .collect();
            out.push_str(&cells.join(" "));
            out.push('\n');
        }
        out
    }

    /// Header row then one row per true label.
    pub fn to_csv(&self) -> String {
        let n = self.num_classes;
        let mut out = String::from("true");
        for j in 0..n {
            let _ = write!(out, ",pred_{j}");
        }
        out.push('\n');
        for i in 0..n {
            let _ = write!(out, "{i}");
            for &c in self.row(i) {
                let _ = write!(out, ",{c}");
            }
            out.push('\n');
        }
        out
    }
}

/// Overall accuracy `trace / total`.
pub fn accuracy(confusion: &ConfusionMatrix) -> Result<f64> {
    let total = confusion.total();
    if total == 0 {
        return Err(Error::EmptyMatrix);
    }
    Ok(confusion.trace() as f64 / total as f64)
}

/// Mean of per-class recalls over classes with at least one sample.
pub fn macro_accuracy(confusion: &ConfusionMatrix) -> Result<f64> {
    let mut sum = 0.0;
    let mut classes = 0usize;
    for (i, &row) in confusion.row_sums().iter().enumerate() {
        if row > 0 {
            sum += confusion.get(i, i) as f64 / row as f64;
            classes += 1;
        }
    }
    if classes == 0 {
        return Err(Error::EmptyMatrix);
    }
    Ok(sum / classes as f64)
}

/// Wall-clock fields, kept apart so determinism checks can mask them.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Timing {
    pub train_seconds: f64,
    pub infer_seconds: f64,
}

/// The settings a result was produced under.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfigSnapshot {
    pub rank_policy: String,
    pub alpha: f64,
    pub logdet_coefficient: f64,
    pub pixel_scale: String,
    pub seed: u64,
    pub tasks: usize,
    pub eigensolver: String,
    /// What the training clock covers.
    pub timing_scope: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub dataset: String,
    pub protocol: String,
    pub accuracy: f64,
    pub macro_accuracy: f64,
    pub evaluated: u64,
    pub confusion: ConfusionMatrix,
    pub timing: Timing,
    pub config: ConfigSnapshot,
    pub memory: MemoryFootprint,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Json,
    Csv,
}

impl std::str::FromStr for ReportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "json" => Ok(ReportFormat::Json),
            "csv" => Ok(ReportFormat::Csv),
            other => Err(Error::InvalidConfig(format!("unknown report format {other:?}"))),
        }
    }
}

/// 17 significant digits; parses back to the same `f64`.
pub fn format_real(v: f64) -> String {
    format!("{v:.16e}")
}

pub const REPORT_CSV_HEADER: &str = "dataset,protocol,accuracy,macro_accuracy,evaluated,rank_policy,alpha,logdet_coefficient,pixel_scale,seed,tasks,eigensolver,timing_scope,total_vectors,per_class_vectors,num_classes,confusion,train_seconds,infer_seconds";

impl EvalReport {
    pub fn to_json(&self) -> Result<String> {
        // Going through `Value` sorts object keys.
        let value = serde_json::to_value(self).map_err(|e| Error::InvalidConfig(e.to_string()))?;
        let mut s = serde_json::to_string_pretty(&value).map_err(|e| Error::InvalidConfig(e.to_string()))?;
        s.push('\n');
        Ok(s)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        serde_json::from_str(s).map_err(|e| Error::MalformedReport(e.to_string()))
    }

    pub fn to_csv(&self) -> String {
        let c = &self.config;
        let per_class: Vec<String> = self.memory.per_class.iter().map(|(k, v)| format!("{k}:{v}")).collect();
        let confusion: Vec<String> = self.confusion.counts.iter().map(u64::to_string).collect();
        let fields = [
            self.dataset.clone(),
            self.protocol.clone(),
            format_real(self.accuracy),
            format_real(self.macro_accuracy),
            self.evaluated.to_string(),
            c.rank_policy.clone(),
            format_real(c.alpha),
            format_real(c.logdet_coefficient),
            c.pixel_scale.clone(),
            c.seed.to_string(),
            c.tasks.to_string(),
            c.eigensolver.clone(),
            c.timing_scope.clone(),
            self.memory.total_vectors.to_string(),
            per_class.join(" "),
            self.confusion.num_classes.to_string(),
            confusion.join(" "),
            format_real(self.timing.train_seconds),
            format_real(self.timing.infer_seconds),
        ];
        for f in &fields {
            debug_assert!(!f.contains(',') && !f.contains('\n'), "unquoted CSV field {f:?}");
        }
        format!("{REPORT_CSV_HEADER}\n{}\n", fields.join(","))
    }

    pub fn from_csv(s: &str) -> Result<Self> {
        let bad = |what: &str| Error::MalformedReport(format!("CSV {what}"));
        let mut lines = s.lines();
        if lines.next() != Some(REPORT_CSV_HEADER) {
            return Err(bad("unexpected header"));
        }
        let row = lines.next().ok_or_else(|| bad("missing row"))?;
        let f: Vec<&str> = row.split(',').collect();
        if f.len() != REPORT_CSV_HEADER.split(',').count() {
            return Err(bad("wrong field count"));
        }
        let real = |s: &str| s.parse::<f64>().map_err(|_| bad("bad real"));
        let int = |s: &str| s.parse::<u64>().map_err(|_| bad("bad integer"));
        let mut per_class = BTreeMap::new();
        for pair in f[14].split_whitespace() {
            let (k, v) = pair.split_once(':').ok_or_else(|| bad("bad per-class entry"))?;
            per_class.insert(int(k)? as ClassId, int(v)? as usize);
        }
        let num_classes = int(f[15])? as usize;
        let counts = f[16].split_whitespace().map(int).collect::<Result<Vec<_>>>()?;
        if counts.len() != num_classes * num_classes {
            return Err(bad("confusion size"));
        }
        Ok(EvalReport {
            dataset: f[0].into(),
            protocol: f[1].into(),
            accuracy: real(f[2])?,
            macro_accuracy: real(f[3])?,
            evaluated: int(f[4])?,
            config: ConfigSnapshot {
                rank_policy: f[5].into(),
                alpha: real(f[6])?,
                logdet_coefficient: real(f[7])?,
                pixel_scale: f[8].into(),
                seed: int(f[9])?,
                tasks: int(f[10])? as usize,
                eigensolver: f[11].into(),
                timing_scope: f[12].into(),
            },
            memory: MemoryFootprint {
                total_vectors: int(f[13])? as usize,
                per_class,
            },
            confusion: ConfusionMatrix { num_classes, counts },
            timing: Timing {
                train_seconds: real(f[17])?,
                infer_seconds: real(f[18])?,
            },
        })
    }
}

pub fn emit_report(report: &EvalReport, format: ReportFormat, path: impl AsRef<Path>) -> Result<()> {
    let text = match format {
        ReportFormat::Json => report.to_json()?,
        ReportFormat::Csv => report.to_csv(),
    };
    fs::write(path, text)?;
    Ok(())
}

pub fn read_report(format: ReportFormat, path: impl AsRef<Path>) -> Result<EvalReport> {
    let text = fs::read_to_string(path)?;
    match format {
        ReportFormat::Json => EvalReport::from_json(&text),
        ReportFormat::Csv => EvalReport::from_csv(&text),
    }
}
