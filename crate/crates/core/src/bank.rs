//! The vector bank: per-class KLT models fitted from streaming sufficient
//! statistics.
//!
//! Each class keeps `(count, Σx, Σxxᵀ)` while the bank is trainable. Any
//! arrival of new samples for a class is folded into its statistics and the
//! class is refitted from scratch, so the result never depends on how the
//! data was batched. [`VectorBank::freeze`] drops the statistics and leaves
//! only what inference needs: mean, leading eigenvectors, eigenvalues and
//! count per class.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::linalg::{project, Basis, EigenDecomposition, EigenSolver, SymMatrix};
use crate::ClassId;

/// Streaming accumulator for one class.
#[derive(Debug, Clone, PartialEq)]
pub struct SufficientStats {
    count: u64,
    sum: Vec<f64>,
    scatter: SymMatrix,
}

impl SufficientStats {
    pub fn new(dim: usize) -> Self {
        Self {
            count: 0,
            sum: vec![0.0; dim],
            scatter: SymMatrix::zeros(dim),
        }
    }

    pub fn dim(&self) -> usize {
        self.sum.len()
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn sum(&self) -> &[f64] {
        &self.sum
    }

    pub fn scatter(&self) -> &SymMatrix {
        &self.scatter
    }

    pub fn push(&mut self, x: &[f64]) -> Result<()> {
        check_dim(self.dim(), x.len())?;
        self.scatter.add_outer(x)?;
        for (s, v) in self.sum.iter_mut().zip(x) {
            *s += v;
        }
        self.count += 1;
        Ok(())
    }

    /// Folds a batch in. On error the statistics are left untouched.
    pub fn accumulate<V: AsRef<[f64]>>(&mut self, batch: &[V]) -> Result<()> {
        for x in batch {
            check_dim(self.dim(), x.as_ref().len())?;
        }
        for x in batch {
            self.push(x.as_ref())?;
        }
        Ok(())
    }

    pub fn merge(&mut self, other: &SufficientStats) -> Result<()> {
        check_dim(self.dim(), other.dim())?;
        self.scatter.add_assign(&other.scatter)?;
        for (s, v) in self.sum.iter_mut().zip(&other.sum) {
            *s += v;
        }
        self.count += other.count;
        Ok(())
    }

    pub fn mean(&self) -> Option<Vec<f64>> {
        if self.count == 0 {
            return None;
        }
        let n = self.count as f64;
        Some(self.sum.iter().map(|s| s / n).collect())
    }

    /// Population covariance `Σxxᵀ/N − μμᵀ`.
    pub fn covariance(&self) -> Option<SymMatrix> {
        let mean = self.mean()?;
        let mut cov = self.scatter.scaled(1.0 / self.count as f64);
        cov.add_scaled_outer(&mean, -1.0).expect("same dimension");
        Some(cov)
    }

    /// Number of `f64`s held.
    pub fn retained_floats(&self) -> usize {
        self.sum.len() + self.scatter.packed().len()
    }
}

/// Rank selection rule.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RankPolicy {
    /// Smallest `k` whose leading eigenvalues hold at least this fraction of
    /// the spectral energy.
    PowerThreshold(f64),
    /// The same `k` for every class, clamped to the dimension.
    FixedK(usize),
}

impl RankPolicy {
    pub fn validate(self) -> Result<Self> {
        match self {
            RankPolicy::PowerThreshold(t) if !(t > 0.0 && t <= 1.0) => Err(Error::InvalidConfig(
                format!("power threshold must lie in (0, 1], got {t}"),
            )),
            RankPolicy::FixedK(0) => Err(Error::InvalidConfig("k must be at least 1".into())),
            p => Ok(p),
        }
    }

    pub fn describe(self) -> String {
        match self {
            RankPolicy::PowerThreshold(t) => format!("t={t}"),
            RankPolicy::FixedK(k) => format!("k={k}"),
        }
    }
}

/// Retained rank for a descending, non-negative spectrum.
///
/// An all-zero spectrum selects a single direction.
pub fn select_rank(eigenvalues: &[f64], policy: RankPolicy) -> usize {
    let d = eigenvalues.len();
    match policy {
        RankPolicy::FixedK(k) => k.clamp(1, d.max(1)),
        RankPolicy::PowerThreshold(t) => {
            let total: f64 = eigenvalues.iter().fold(0.0, |a, &v| a + v.max(0.0));
            if total <= 0.0 {
                return 1;
            }
            let mut cumulative = 0.0;
            for (j, &v) in eigenvalues.iter().enumerate() {
                cumulative += v.max(0.0);
                if cumulative / total >= t {
                    return j + 1;
                }
            }
            d
        }
    }
}

/// One class's entry in the bank.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassModel {
    class_id: ClassId,
    mean: Vec<f64>,
    basis: Basis,
    eigenvalues: Vec<f64>,
    count: u64,
    projected_mean: Vec<f64>,
}

impl ClassModel {
    pub fn new(class_id: ClassId, mean: Vec<f64>, basis: Basis, eigenvalues: Vec<f64>, count: u64) -> Result<Self> {
        check_dim(basis.dim(), mean.len())?;
        check_dim(basis.rank(), eigenvalues.len())?;
        if eigenvalues.windows(2).any(|w| w[0] < w[1]) || eigenvalues.iter().any(|&v| !(v >= 0.0)) {
            return Err(Error::InvalidConfig(format!(
                "class {class_id}: eigenvalues must be non-negative and descending"
            )));
        }
        let projected_mean = project(&basis, &mean)?;
        Ok(Self {
            class_id,
            mean,
            basis,
            eigenvalues,
            count,
            projected_mean,
        })
    }

    pub fn class_id(&self) -> ClassId {
        self.class_id
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn basis(&self) -> &Basis {
        &self.basis
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn projected_mean(&self) -> &[f64] {
        &self.projected_mean
    }

    pub fn dim(&self) -> usize {
        self.basis.dim()
    }

    pub fn rank(&self) -> usize {
        self.basis.rank()
    }

    /// Keeps the leading `k` directions. Equal, bit for bit, to fitting
    /// with `FixedK(k)` from the same statistics.
    pub fn truncated(&self, k: usize) -> ClassModel {
        let k = k.clamp(1, self.rank());
        let basis = Basis::from_columns(self.dim(), k, self.basis.as_slice()[..k * self.dim()].to_vec())
            .expect("prefix of a valid basis");
        ClassModel {
            class_id: self.class_id,
            mean: self.mean.clone(),
            projected_mean: self.projected_mean[..k].to_vec(),
            basis,
            eigenvalues: self.eigenvalues[..k].to_vec(),
            count: self.count,
        }
    }

    /// Truncates by a policy evaluated on this model's own spectrum.
    pub fn truncated_by(&self, policy: RankPolicy) -> ClassModel {
        self.truncated(select_rank(&self.eigenvalues, policy))
    }

    pub fn retained_floats(&self) -> usize {
        self.mean.len() + self.basis.as_slice().len() + self.eigenvalues.len() + self.projected_mean.len()
    }
}

/// Fits a class from its statistics: mean, covariance, eigendecomposition,
/// rank selection.
pub fn finalize_class(class_id: ClassId, stats: &SufficientStats, policy: RankPolicy, solver: EigenSolver) -> Result<ClassModel> {
    let mean = stats.mean().ok_or(Error::EmptyClass(class_id))?;
    let cov = stats.covariance().ok_or(Error::EmptyClass(class_id))?;
    let mut eig: EigenDecomposition = solver.decompose(&cov)?;
    eig.clamp_nonnegative();
    let k = select_rank(eig.eigenvalues(), policy);
    ClassModel::new(class_id, mean, eig.leading_basis(k), eig.eigenvalues()[..k].to_vec(), stats.count())
}

/// Stored-vector accounting.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MemoryFootprint {
    /// Eigenvectors kept per class.
    pub per_class: BTreeMap<ClassId, usize>,
    /// Eigenvectors plus one mean per class.
    pub total_vectors: usize,
}

/// Class-indexed models plus, while trainable, their statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorBank {
    dim: usize,
    policy: RankPolicy,
    solver: EigenSolver,
    models: BTreeMap<ClassId, ClassModel>,
    stats: BTreeMap<ClassId, SufficientStats>,
    frozen: bool,
}

impl VectorBank {
    pub fn new(dim: usize, policy: RankPolicy) -> Result<Self> {
        if dim == 0 {
            return Err(Error::EmptyInput);
        }
        Ok(Self {
            dim,
            policy: policy.validate()?,
            solver: EigenSolver::default(),
            models: BTreeMap::new(),
            stats: BTreeMap::new(),
            frozen: false,
        })
    }

    pub fn with_solver(mut self, solver: EigenSolver) -> Self {
        self.solver = solver;
        self
    }

    /// A frozen bank built from already-fitted models.
    pub fn from_models(dim: usize, policy: RankPolicy, models: impl IntoIterator<Item = ClassModel>) -> Result<Self> {
        let mut bank = Self::new(dim, policy)?;
        for m in models {
            check_dim(dim, m.dim())?;
            bank.models.insert(m.class_id(), m);
        }
        bank.frozen = true;
        Ok(bank)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn policy(&self) -> RankPolicy {
        self.policy
    }

    pub fn solver(&self) -> EigenSolver {
        self.solver
    }

    pub fn is_frozen(&self) -> bool {
        self.frozen
    }

    pub fn is_empty(&self) -> bool {
        self.models.is_empty()
    }

    pub fn len(&self) -> usize {
        self.models.len()
    }

    pub fn class_ids(&self) -> impl Iterator<Item = ClassId> + '_ {
        self.models.keys().copied()
    }

    pub fn models(&self) -> impl Iterator<Item = &ClassModel> {
        self.models.values()
    }

    pub fn model(&self, class: ClassId) -> Result<&ClassModel> {
        self.models.get(&class).ok_or(Error::UnknownClass(class))
    }

    pub fn stats(&self, class: ClassId) -> Option<&SufficientStats> {
        self.stats.get(&class)
    }

    /// Σ N_c over all classes.
    pub fn total_count(&self) -> u64 {
        self.models.values().map(|m| m.count()).sum()
    }

    fn ensure_trainable(&self) -> Result<()> {
        if self.frozen {
            Err(Error::InvalidConfig("vector bank is frozen".into()))
        } else {
            Ok(())
        }
    }

    /// Folds samples into a class's statistics without refitting.
    pub fn accumulate<V: AsRef<[f64]>>(&mut self, class: ClassId, batch: &[V]) -> Result<()> {
        self.ensure_trainable()?;
        let dim = self.dim;
        self.stats
            .entry(class)
            .or_insert_with(|| SufficientStats::new(dim))
            .accumulate(batch)
    }

    pub fn accumulate_one(&mut self, class: ClassId, x: &[f64]) -> Result<()> {
        self.ensure_trainable()?;
        let dim = self.dim;
        self.stats
            .entry(class)
            .or_insert_with(|| SufficientStats::new(dim))
            .push(x)
    }

    /// Refits one class from its statistics, replacing any previous model.
    pub fn finalize(&mut self, class: ClassId) -> Result<&ClassModel> {
        self.finalize_many(&[class])?;
        self.model(class)
    }

    /// Refits several classes; fits run in parallel since classes are
    /// independent.
    pub fn finalize_many(&mut self, classes: &[ClassId]) -> Result<()> {
        self.ensure_trainable()?;
        let (policy, solver) = (self.policy, self.solver);
        let fitted: Vec<Result<ClassModel>> = classes
            .par_iter()
            .map(|&c| {
                let stats = self.stats.get(&c).ok_or(Error::EmptyClass(c))?;
                finalize_class(c, stats, policy, solver)
            })
            .collect();
        for model in fitted {
            let model = model?;
            self.models.insert(model.class_id(), model);
        }
        Ok(())
    }

    /// Drops all statistics; the bank becomes read-only.
    pub fn freeze(&mut self) {
        self.stats.clear();
        self.frozen = true;
    }

    pub fn remove_class(&mut self, class: ClassId) -> Result<ClassModel> {
        self.stats.remove(&class);
        self.models.remove(&class).ok_or(Error::UnknownClass(class))
    }

    /// A frozen copy with every model truncated by `policy`.
    pub fn truncated(&self, policy: RankPolicy) -> Result<VectorBank> {
        let policy = policy.validate()?;
        VectorBank::from_models(self.dim, policy, self.models.values().map(|m| m.truncated_by(policy)))
    }

    pub fn memory_footprint(&self) -> Result<MemoryFootprint> {
        if self.models.is_empty() {
            return Err(Error::EmptyBank);
        }
        let per_class: BTreeMap<ClassId, usize> = self.models.iter().map(|(&c, m)| (c, m.rank())).collect();
        let total_vectors = per_class.values().map(|k| k + 1).sum();
        Ok(MemoryFootprint {
            per_class,
            total_vectors,
        })
    }

    /// Every `f64` the bank holds, statistics included.
    pub fn retained_floats(&self) -> usize {
        self.models.values().map(ClassModel::retained_floats).sum::<usize>()
            + self.stats.values().map(SufficientStats::retained_floats).sum::<usize>()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn stats_from(samples: &[Vec<f64>]) -> SufficientStats {
        let mut s = SufficientStats::new(samples[0].len());
        s.accumulate(samples).unwrap();
        s
    }

    #[test]
    fn single_sample_has_zero_covariance() {
        let s = stats_from(&[vec![1.5, -2.0, 0.0]]);
        assert_eq!(s.mean().unwrap(), vec![1.5, -2.0, 0.0]);
        assert_eq!(s.covariance().unwrap().max_abs(), 0.0);
    }

    #[test]
    fn empty_stats_have_no_mean() {
        let s = SufficientStats::new(3);
        assert!(s.mean().is_none());
        assert!(matches!(
            finalize_class(7, &s, RankPolicy::FixedK(1), EigenSolver::default()),
            Err(Error::EmptyClass(7))
        ));
    }

    #[test]
    fn accumulate_rejects_wrong_dimension_atomically() {
        let mut s = SufficientStats::new(2);
        let err = s.accumulate(&[vec![1.0, 2.0], vec![1.0]]);
        assert!(matches!(err, Err(Error::DimMismatch { expected: 2, found: 1 })));
        assert_eq!(s, SufficientStats::new(2));
    }

    #[test]
    fn accumulate_commutes() {
        let a = vec![vec![1.0, 2.0], vec![0.5, -1.0]];
        let b = vec![vec![3.0, 0.0]];
        let mut ab = SufficientStats::new(2);
        ab.accumulate(&a).unwrap();
        ab.accumulate(&b).unwrap();
        let mut ba = SufficientStats::new(2);
        ba.accumulate(&b).unwrap();
        ba.accumulate(&a).unwrap();
        assert_eq!(ab.count(), ba.count());
        assert_eq!(ab.sum(), ba.sum());
        for i in 0..2 {
            for j in 0..2 {
                let (x, y) = (ab.scatter().get(i, j), ba.scatter().get(i, j));
                assert!((x - y).abs() <= 1e-9 * x.abs().max(1.0));
            }
        }
    }

    #[test]
    fn finalize_hand_example() {
        let s = stats_from(&[vec![1.0, 0.0], vec![-1.0, 0.0], vec![0.0, 0.0]]);
        let m = finalize_class(0, &s, RankPolicy::FixedK(1), EigenSolver::default()).unwrap();
        assert_eq!(m.mean(), &[0.0, 0.0]);
        assert_eq!(m.rank(), 1);
        assert!((m.eigenvalues()[0] - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(m.basis().column(0), &[1.0, 0.0]);
    }

    #[test]
    fn finalize_single_sample() {
        let s = stats_from(&[vec![0.3, 0.7]]);
        let m = finalize_class(4, &s, RankPolicy::FixedK(1), EigenSolver::default()).unwrap();
        assert_eq!(m.eigenvalues(), &[0.0]);
        let q = m.basis().column(0);
        assert!((q[0] * q[0] + q[1] * q[1] - 1.0).abs() < 1e-12);
        assert!(q.iter().copied().fold(0.0f64, |a, v| if v.abs() > a.abs() { v } else { a }) >= 0.0);
        assert_eq!(m.count(), 1);
    }

    #[test]
    fn select_rank_examples() {
        assert_eq!(select_rank(&[4.0, 3.0, 2.0, 1.0], RankPolicy::PowerThreshold(0.8)), 3);
        assert_eq!(select_rank(&[4.0, 3.0, 2.0, 1.0], RankPolicy::PowerThreshold(0.4)), 1);
        assert_eq!(select_rank(&[5.0, 2.0, 0.0, 0.0], RankPolicy::PowerThreshold(1.0)), 2);
        assert_eq!(select_rank(&[0.0, 0.0], RankPolicy::PowerThreshold(0.5)), 1);
        assert_eq!(select_rank(&[3.0, 2.0, 1.0], RankPolicy::FixedK(10)), 3);
        assert_eq!(select_rank(&[3.0, 2.0, 1.0], RankPolicy::FixedK(2)), 2);
    }

    #[test]
    fn policy_validation() {
        assert!(RankPolicy::PowerThreshold(0.0).validate().is_err());
        assert!(RankPolicy::PowerThreshold(1.2).validate().is_err());
        assert!(RankPolicy::PowerThreshold(f64::NAN).validate().is_err());
        assert!(RankPolicy::FixedK(0).validate().is_err());
        assert!(RankPolicy::PowerThreshold(1.0).validate().is_ok());
    }

    fn two_class_bank(k: usize) -> VectorBank {
        let mut bank = VectorBank::new(4, RankPolicy::FixedK(k)).unwrap();
        let a: Vec<Vec<f64>> = (0..6).map(|i| vec![i as f64, (i * i) as f64, 1.0, -(i as f64)]).collect();
        let b: Vec<Vec<f64>> = (0..5).map(|i| vec![1.0, i as f64, (i % 2) as f64, 2.0 * i as f64]).collect();
        bank.accumulate(0, &a).unwrap();
        bank.accumulate(1, &b).unwrap();
        bank.finalize_many(&[0, 1]).unwrap();
        bank
    }

    #[test]
    fn footprint_counts_vectors() {
        let bank = two_class_bank(3);
        let fp = bank.memory_footprint().unwrap();
        assert_eq!(fp.per_class.values().copied().collect::<Vec<_>>(), vec![3, 3]);
        assert_eq!(fp.total_vectors, 8);

        let mut bank = bank;
        bank.remove_class(0).unwrap();
        let fp = bank.memory_footprint().unwrap();
        assert_eq!(fp.total_vectors, 4);
        bank.remove_class(1).unwrap();
        assert!(matches!(bank.memory_footprint(), Err(Error::EmptyBank)));
    }

    #[test]
    fn freeze_drops_statistics() {
        let mut bank = two_class_bank(2);
        let before = bank.retained_floats();
        bank.freeze();
        assert!(bank.stats(0).is_none());
        assert!(bank.retained_floats() < before);
        assert!(bank.accumulate(0, &[vec![0.0; 4]]).is_err());
        assert!(bank.finalize(0).is_err());
    }

    #[test]
    fn truncation_matches_direct_fit() {
        let full = two_class_bank(4);
        let direct = two_class_bank(2);
        let cut = full.truncated(RankPolicy::FixedK(2)).unwrap();
        for c in 0..2 {
            assert_eq!(cut.model(c).unwrap(), direct.model(c).unwrap());
        }
    }

    #[test]
    fn unknown_class() {
        let bank = two_class_bank(1);
        assert!(matches!(bank.model(9), Err(Error::UnknownClass(9))));
    }
}
