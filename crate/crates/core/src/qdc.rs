//! Regularized quadratic discriminant classification over the vector bank.
//!
//! In its own eigenbasis a class covariance is diagonal, so the Gaussian
//! log-likelihood needs only the projected coordinates and the eigenvalues.
//! With `λ'ⱼ = λⱼ + α` and `z = Qᵀx − Qᵀμ` the score of a class is
//!
//! ```text
//! −c · Σⱼ ln λ'ⱼ − ½ Σⱼ zⱼ² / λ'ⱼ + ln P(c)
//! ```
//!
//! where `c` is the log-determinant coefficient. No matrix is ever inverted.

use serde::{Deserialize, Serialize};

use crate::bank::{ClassModel, VectorBank};
use crate::error::{check_dim, Error, Result};
use crate::linalg::project_sparse;
use crate::ClassId;

/// Weight on the log-determinant term.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum LogDetCoefficient {
    /// `½ ln |Σ|`, the Gaussian log-density.
    #[default]
    #[serde(rename = "0.5")]
    Half,
    /// `ln |Σ|`.
    #[serde(rename = "1.0")]
    One,
}

impl LogDetCoefficient {
    pub fn value(self) -> f64 {
        match self {
            LogDetCoefficient::Half => 0.5,
            LogDetCoefficient::One => 1.0,
        }
    }
}

impl std::str::FromStr for LogDetCoefficient {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.parse::<f64>() {
            Ok(v) if v == 0.5 => Ok(LogDetCoefficient::Half),
            Ok(v) if v == 1.0 => Ok(LogDetCoefficient::One),
            _ => Err(Error::InvalidConfig(format!("logdet coefficient must be 0.5 or 1.0, got {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QdcConfig {
    /// Ridge added to every retained eigenvalue.
    pub alpha: f64,
    pub logdet_coefficient: LogDetCoefficient,
}

impl Default for QdcConfig {
    fn default() -> Self {
        Self {
            alpha: 0.4,
            logdet_coefficient: LogDetCoefficient::Half,
        }
    }
}

impl QdcConfig {
    pub fn validate(self) -> Result<Self> {
        if !(self.alpha >= 0.0) || !self.alpha.is_finite() {
            return Err(Error::InvalidConfig(format!("alpha must be finite and >= 0, got {}", self.alpha)));
        }
        Ok(self)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClassScore {
    pub class_id: ClassId,
    /// Unnormalized log-posterior in nats.
    pub log_posterior: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub label: ClassId,
    /// One score per candidate, in class order.
    pub scores: Vec<ClassScore>,
}

/// `N_c / Σ N_j` over the whole bank.
pub fn class_prior(bank: &VectorBank, class: ClassId) -> Result<f64> {
    let model = bank.model(class)?;
    let total = bank.total_count();
    if total == 0 {
        return Err(Error::EmptyBank);
    }
    Ok(model.count() as f64 / total as f64)
}

/// Per-class quantities that do not depend on the input.
#[derive(Debug, Clone)]
struct ClassTerms {
    class_id: ClassId,
    /// `−c Σ ln λ' + ln prior`
    offset: f64,
    inverse: Vec<f64>,
}

impl ClassTerms {
    fn new(model: &ClassModel, prior: f64, cfg: QdcConfig) -> Result<Self> {
        let mut logdet = 0.0;
        let mut inverse = Vec::with_capacity(model.rank());
        for &lambda in model.eigenvalues() {
            let reg = lambda + cfg.alpha;
            if !(reg > 0.0) {
                return Err(Error::SingularCovariance(model.class_id()));
            }
            logdet += reg.ln();
            inverse.push(1.0 / reg);
        }
        Ok(Self {
            class_id: model.class_id(),
            offset: -cfg.logdet_coefficient.value() * logdet + prior.ln(),
            inverse,
        })
    }

    /// `coords` holds `Qᵀx`.
    fn score(&self, model: &ClassModel, coords: &[f64]) -> f64 {
        let mut mahalanobis = 0.0;
        for ((c, m), inv) in coords.iter().zip(model.projected_mean()).zip(&self.inverse) {
            let z = c - m;
            mahalanobis += z * z * inv;
        }
        self.offset - 0.5 * mahalanobis
    }
}

/// Log-posterior (up to the class-independent evidence term) of `x` under
/// one class model.
pub fn log_posterior(model: &ClassModel, prior: f64, x: &[f64], cfg: QdcConfig) -> Result<f64> {
    check_dim(model.dim(), x.len())?;
    if !(prior > 0.0 && prior <= 1.0) {
        return Err(Error::InvalidConfig(format!("prior must lie in (0, 1], got {prior}")));
    }
    let terms = ClassTerms::new(model, prior, cfg)?;
    let mut coords = Vec::with_capacity(model.rank());
    project_sparse(model.basis(), x, &mut coords)?;
    Ok(terms.score(model, &coords))
}

/// Class with the largest score; the earliest wins ties. Panics on an
/// empty slice.
pub fn argmax(scores: &[ClassScore]) -> ClassId {
    let mut best = 0;
    for (i, s) in scores.iter().enumerate().skip(1) {
        if s.log_posterior > scores[best].log_posterior {
            best = i;
        }
    }
    scores[best].class_id
}

/// Precomputed scorer for many queries against a fixed set of candidates.
///
/// Priors are renormalized over the candidates, which for the full bank is
/// exactly `N_c / Σ N_j`.
#[derive(Debug, Clone)]
pub struct Classifier<'a> {
    models: Vec<&'a ClassModel>,
    terms: Vec<ClassTerms>,
}

impl<'a> Classifier<'a> {
    pub fn new(bank: &'a VectorBank, cfg: QdcConfig) -> Result<Self> {
        let all: Vec<ClassId> = bank.class_ids().collect();
        Self::among(bank, &all, cfg)
    }

    /// Restricts the decision to `candidates`.
    pub fn among(bank: &'a VectorBank, candidates: &[ClassId], cfg: QdcConfig) -> Result<Self> {
        let cfg = cfg.validate()?;
        let mut ids = candidates.to_vec();
        ids.sort_unstable();
        ids.dedup();
        if ids.is_empty() {
            return Err(Error::EmptyBank);
        }
        let models = ids.iter().map(|&c| bank.model(c)).collect::<Result<Vec<_>>>()?;
        let total: u64 = models.iter().map(|m| m.count()).sum();
        if total == 0 {
            return Err(Error::EmptyBank);
        }
        let terms = models
            .iter()
            .map(|m| ClassTerms::new(m, m.count() as f64 / total as f64, cfg))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { models, terms })
    }

    pub fn classes(&self) -> impl Iterator<Item = ClassId> + '_ {
        self.models.iter().map(|m| m.class_id())
    }

    pub fn scores(&self, x: &[f64]) -> Result<Vec<ClassScore>> {
        let mut coords = Vec::new();
        self.models
            .iter()
            .zip(&self.terms)
            .map(|(m, t)| {
                project_sparse(m.basis(), x, &mut coords)?;
                Ok(ClassScore {
                    class_id: t.class_id,
                    log_posterior: t.score(m, &coords),
                })
            })
            .collect()
    }

    pub fn predict(&self, x: &[f64]) -> Result<Prediction> {
        let scores = self.scores(x)?;
        Ok(Prediction {
            label: argmax(&scores),
            scores,
        })
    }

    pub fn predict_label(&self, x: &[f64]) -> Result<ClassId> {
        Ok(argmax(&self.scores(x)?))
    }
}

/// Bayes decision over every class in the bank.
pub fn predict(bank: &VectorBank, x: &[f64], cfg: QdcConfig) -> Result<Prediction> {
    if bank.is_empty() {
        return Err(Error::EmptyBank);
    }
    Classifier::new(bank, cfg)?.predict(x)
}
