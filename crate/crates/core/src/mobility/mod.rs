//! Quantile mobility matrices and their first-passage times.

mod fit;
mod generator;

pub use fit::{
    explained_variance, fit_srgbm_to_matrix, frobenius_distance, mfpt_gap_report, model_matrix,
    GapReport, GapRow, MatrixFit, MatrixFitConfig, ParamBounds,
};
pub use generator::{
    embedded_chain, generator_first_passage, generator_matrix, tmfpt_continuous, ContinuousMfpt,
    GeneratorMatrix, GeneratorVariant,
};

use nalgebra::{DMatrix, DVector};
use petgraph::algo::kosaraju_scc;
use petgraph::graph::DiGraph;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::simulator::IncomePanel;

/// Row-sum tolerance accepted by [`TransitionMatrix::new`].
pub const ROW_SUM_TOLERANCE: f64 = 1e-9;

/// Row-stochastic matrix of moves between income quantiles over `delta` years.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionMatrix {
    entries: DMatrix<f64>,
    /// Horizon (years) one step of the chain represents.
    pub delta: f64,
}

impl TransitionMatrix {
    pub fn new(entries: DMatrix<f64>, delta: f64) -> Result<Self> {
        Self::with_tolerance(entries, delta, ROW_SUM_TOLERANCE, false)
    }

    /// Validates `entries`; rows whose sum is off by more than `tol` are an
    /// error unless `renormalize` is set, in which case every row is divided
    /// by its sum. Without the flag entries are stored unchanged.
    pub fn with_tolerance(
        mut entries: DMatrix<f64>,
        delta: f64,
        tol: f64,
        renormalize: bool,
    ) -> Result<Self> {
        let k = entries.nrows();
        if k == 0 || entries.ncols() != k {
            return Err(Error::InvalidMatrix(format!(
                "expected a nonempty square matrix, got {}x{}",
                entries.nrows(),
                entries.ncols()
            )));
        }
        if !(delta >= 0.0 && delta.is_finite()) {
            return Err(Error::InvalidMatrix(format!("horizon {delta} must be nonnegative")));
        }
        let upper = if renormalize { f64::INFINITY } else { 1.0 + tol };
        for i in 0..k {
            for j in 0..k {
                let v = entries[(i, j)];
                if !(v >= 0.0 && v <= upper) {
                    return Err(Error::InvalidMatrix(format!(
                        "entry ({}, {}) = {v} outside [0, 1]",
                        i + 1,
                        j + 1
                    )));
                }
            }
        }
        for i in 0..k {
            let sum: f64 = entries.row(i).sum();
            if (sum - 1.0).abs() > tol && !(renormalize && sum > 0.0) {
                return Err(Error::InvalidMatrix(format!(
                    "row {} sums to {sum}, not 1",
                    i + 1
                )));
            }
            if renormalize {
                let mut row = entries.row_mut(i);
                row /= sum;
            }
        }
        Ok(Self { entries, delta })
    }

    pub fn k(&self) -> usize {
        self.entries.nrows()
    }

    pub fn entries(&self) -> &DMatrix<f64> {
        &self.entries
    }

    pub fn get(&self, from: usize, to: usize) -> f64 {
        self.entries[(from, to)]
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        self.entries
            .row_iter()
            .map(|r| r.iter().copied().collect())
            .collect()
    }

    /// `true` when every diagonal entry is the maximum of its row.
    pub fn diagonally_dominant(&self) -> bool {
        (0..self.k()).all(|i| self.row_argmax_is_diagonal(i))
    }

    pub fn row_argmax_is_diagonal(&self, i: usize) -> bool {
        let d = self.entries[(i, i)];
        self.entries.row(i).iter().all(|&v| v <= d)
    }

    /// Conjugation by a relabeling: entry `(perm[i], perm[j])` of the result is
    /// entry `(i, j)` of `self`.
    pub fn permuted(&self, perm: &[usize]) -> Result<Self> {
        let k = self.k();
        check_permutation(perm, k)?;
        let mut out = DMatrix::zeros(k, k);
        for i in 0..k {
            for j in 0..k {
                out[(perm[i], perm[j])] = self.entries[(i, j)];
            }
        }
        Self::new(out, self.delta)
    }
}

fn check_permutation(perm: &[usize], k: usize) -> Result<()> {
    let mut seen = vec![false; k];
    if perm.len() != k || perm.iter().any(|&p| p >= k || std::mem::replace(&mut seen[p], true)) {
        return Err(Error::Domain("not a permutation".into()));
    }
    Ok(())
}

/// Equal-population quantile labels, 1 = poorest.
///
/// Workers are ranked by income with ties kept in input order; the worker at
/// rank `i` (0-based) of `n` gets label `floor(i K / n) + 1`, so group sizes
/// differ by at most one.
pub fn quantile_assign(incomes: &[f64], k: usize) -> Result<Vec<usize>> {
    if k < 2 {
        return Err(Error::Domain(format!("need at least 2 quantiles, got {k}")));
    }
    let n = incomes.len();
    if n < k {
        return Err(Error::Domain(format!("{n} workers cannot fill {k} quantiles")));
    }
    if incomes.iter().any(|x| x.is_nan()) {
        return Err(Error::Domain("income is NaN".into()));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| incomes[a].total_cmp(&incomes[b]));
    let mut labels = vec![0; n];
    for (rank, &worker) in order.iter().enumerate() {
        labels[worker] = rank * k / n + 1;
    }
    Ok(labels)
}

/// Empirical transition matrix between the first and last panel snapshot.
///
/// `A_kl` is the fraction of workers in quantile `k` at the start who are in
/// quantile `l` at the end.
pub fn transition_matrix(panel: &IncomePanel, k: usize) -> Result<TransitionMatrix> {
    let from = quantile_assign(&panel.start().incomes, k)?;
    let to = quantile_assign(&panel.end().incomes, k)?;
    let mut counts = DMatrix::<f64>::zeros(k, k);
    for (&a, &b) in from.iter().zip(&to) {
        counts[(a - 1, b - 1)] += 1.0;
    }
    for i in 0..k {
        let total = counts.row(i).sum();
        if total == 0.0 {
            return Err(Error::Domain(format!("quantile {} is empty", i + 1)));
        }
        let mut row = counts.row_mut(i);
        row /= total;
    }
    TransitionMatrix::new(counts, panel.delta)
}

/// Fails with the closed communicating classes (0-based) when the positive
/// entries of `p` do not form a strongly connected digraph.
fn check_irreducible(p: &DMatrix<f64>) -> Result<()> {
    let k = p.nrows();
    let mut graph = DiGraph::<(), ()>::with_capacity(k, k * k);
    let nodes: Vec<_> = (0..k).map(|_| graph.add_node(())).collect();
    for i in 0..k {
        for j in 0..k {
            if p[(i, j)] > 0.0 {
                graph.add_edge(nodes[i], nodes[j], ());
            }
        }
    }
    let sccs = kosaraju_scc(&graph);
    if sccs.len() == 1 {
        return Ok(());
    }
    let mut classes: Vec<Vec<usize>> = sccs
        .into_iter()
        .map(|c| {
            let mut v: Vec<usize> = c.into_iter().map(|n| n.index()).collect();
            v.sort_unstable();
            v
        })
        .filter(|class| {
            class
                .iter()
                .all(|&i| (0..k).all(|j| p[(i, j)] == 0.0 || class.contains(&j)))
        })
        .collect();
    classes.sort();
    Err(Error::Reducible { classes })
}

/// Stationary probability vector of an irreducible chain.
///
/// Solved directly as `(P^T - I) pi = 0` with one equation replaced by the
/// normalization; if that fails or leaves a residual above `1e-12`, power
/// iteration on the lazy chain `(I + P) / 2` takes over (laziness makes it
/// converge for periodic chains too).
pub fn stationary_distribution(p: &TransitionMatrix) -> Result<DVector<f64>> {
    let m = p.entries();
    check_irreducible(m)?;
    let k = p.k();
    let mut system = m.transpose() - DMatrix::identity(k, k);
    system.row_mut(k - 1).fill(1.0);
    let mut rhs = DVector::zeros(k);
    rhs[k - 1] = 1.0;
    let residual = |pi: &DVector<f64>| (m.transpose() * pi - pi).amax();
    if let Some(pi) = system.lu().solve(&rhs) {
        if pi.iter().all(|&v| v > 0.0) && residual(&pi) <= 1e-12 {
            return Ok(pi);
        }
    }
    log::debug!("stationary vector: falling back to power iteration");
    let lazy = (DMatrix::identity(k, k) + m) * 0.5;
    let lazy_t = lazy.transpose();
    let mut pi = DVector::from_element(k, 1.0 / k as f64);
    for _ in 0..1_000_000 {
        let next = &lazy_t * &pi;
        let next = &next / next.sum();
        let change = (&next - &pi).amax();
        pi = next;
        if change <= 1e-15 && residual(&pi) <= 1e-12 {
            return Ok(pi);
        }
    }
    Err(Error::Conditioning(
        "power iteration for the stationary vector did not converge".into(),
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TimeUnit {
    /// Steps of a discrete chain.
    Steps,
    /// Multiples of the matrix horizon.
    DeltaPeriods,
    Years,
}

/// Matrix of mean first-passage times between states; the diagonal is 0.
#[derive(Debug, Clone, PartialEq)]
pub struct MfptMatrix {
    pub entries: DMatrix<f64>,
    pub unit: TimeUnit,
}

impl MfptMatrix {
    pub fn get(&self, from: usize, to: usize) -> f64 {
        self.entries[(from, to)]
    }

    pub fn k(&self) -> usize {
        self.entries.nrows()
    }

    pub fn scaled(&self, factor: f64, unit: TimeUnit) -> Self {
        Self {
            entries: &self.entries * factor,
            unit,
        }
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        self.entries
            .row_iter()
            .map(|r| r.iter().copied().collect())
            .collect()
    }
}

/// Fundamental matrix `Z = (I - P + 1 pi^T)^{-1}`.
pub(crate) fn fundamental_matrix(p: &DMatrix<f64>, pi: &DVector<f64>) -> Result<DMatrix<f64>> {
    let k = p.nrows();
    let ones = DVector::from_element(k, 1.0);
    let a = DMatrix::identity(k, k) - p + ones * pi.transpose();
    let z = a
        .try_inverse()
        .ok_or_else(|| Error::Conditioning("I - P + 1 pi^T is singular".into()))?;
    if z.iter().any(|v| !v.is_finite()) {
        return Err(Error::Conditioning("fundamental matrix is not finite".into()));
    }
    Ok(z)
}

/// Mean first-passage times of a discrete chain in steps:
/// `M_kl = (Z_ll - Z_kl) / pi_l`.
pub fn tmfpt(p: &TransitionMatrix) -> Result<MfptMatrix> {
    let pi = stationary_distribution(p)?;
    let z = fundamental_matrix(p.entries(), &pi)?;
    let k = p.k();
    let entries = DMatrix::from_fn(k, k, |i, j| {
        if i == j {
            0.0
        } else {
            (z[(j, j)] - z[(i, j)]) / pi[j]
        }
    });
    Ok(MfptMatrix {
        entries,
        unit: TimeUnit::Steps,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simulator::Snapshot;

    fn tm(rows: &[&[f64]]) -> TransitionMatrix {
        let k = rows.len();
        TransitionMatrix::new(DMatrix::from_fn(k, k, |i, j| rows[i][j]), 1.0).unwrap()
    }

    fn panel(start: Vec<f64>, end: Vec<f64>) -> IncomePanel {
        let n = start.len() as u64;
        IncomePanel::new(
            (0..n).collect(),
            vec![
                Snapshot {
                    time: 0.0,
                    incomes: start,
                },
                Snapshot {
                    time: 1.0,
                    incomes: end,
                },
            ],
        )
        .unwrap()
    }

    #[test]
    fn quantile_labels() {
        assert_eq!(quantile_assign(&[1.0, 2.0, 3.0, 4.0], 2).unwrap(), vec![1, 1, 2, 2]);
        assert_eq!(quantile_assign(&[4.0, 1.0, 3.0, 2.0], 2).unwrap(), vec![2, 1, 2, 1]);
        assert_eq!(quantile_assign(&[5.0; 4], 2).unwrap(), vec![1, 1, 2, 2]);
        let labels = quantile_assign(&[3.0, 1.0, 2.0, 5.0, 4.0], 2).unwrap();
        assert_eq!(labels.iter().filter(|&&l| l == 1).count(), 3);
        assert_eq!(labels, vec![1, 1, 1, 2, 2]);
        assert!(quantile_assign(&[1.0], 2).is_err());
        assert!(quantile_assign(&[1.0, 2.0], 1).is_err());
    }

    #[test]
    fn transition_matrix_by_hand() {
        let a = transition_matrix(&panel(vec![1.0, 2.0, 3.0, 4.0], vec![1.0, 2.0, 3.0, 4.0]), 2).unwrap();
        assert_eq!(a.entries(), &DMatrix::identity(2, 2));
        // Worker 1 (bottom) and worker 3 (top) swap.
        let a = transition_matrix(&panel(vec![1.0, 2.0, 3.0, 4.0], vec![3.0, 2.0, 1.0, 4.0]), 2).unwrap();
        assert_eq!(a.rows(), vec![vec![0.5, 0.5], vec![0.5, 0.5]]);
    }

    #[test]
    fn matrix_validation() {
        let bad = DMatrix::from_row_slice(2, 2, &[0.5, 0.3, 0.5, 0.5]);
        assert!(matches!(TransitionMatrix::new(bad.clone(), 1.0), Err(Error::InvalidMatrix(_))));
        let fixed = TransitionMatrix::with_tolerance(bad, 1.0, 1e-6, true).unwrap();
        assert!((fixed.get(0, 0) - 0.625).abs() < 1e-15);
        let negative = DMatrix::from_row_slice(2, 2, &[1.1, -0.1, 0.5, 0.5]);
        assert!(TransitionMatrix::new(negative, 1.0).is_err());
    }

    #[test]
    fn stationary_examples() {
        let pi = stationary_distribution(&tm(&[&[0.9, 0.1], &[0.2, 0.8]])).unwrap();
        assert!((pi[0] - 2.0 / 3.0).abs() < 1e-14 && (pi[1] - 1.0 / 3.0).abs() < 1e-14);
        let pi = stationary_distribution(&tm(&[&[0.0, 1.0], &[1.0, 0.0]])).unwrap();
        assert!((pi[0] - 0.5).abs() < 1e-15);
        let uniform = TransitionMatrix::new(DMatrix::from_element(5, 5, 0.2), 1.0).unwrap();
        let pi = stationary_distribution(&uniform).unwrap();
        assert!(pi.iter().all(|&v| (v - 0.2).abs() < 1e-15));
    }

    #[test]
    fn reducible_chain_lists_closed_classes() {
        let p = tm(&[&[0.5, 0.5, 0.0], &[0.0, 1.0, 0.0], &[0.0, 0.0, 1.0]]);
        match stationary_distribution(&p) {
            Err(Error::Reducible { classes }) => assert_eq!(classes, vec![vec![1], vec![2]]),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn tmfpt_examples() {
        let uniform = TransitionMatrix::new(DMatrix::from_element(10, 10, 0.1), 1.0).unwrap();
        let m = tmfpt(&uniform).unwrap();
        for i in 0..10 {
            for j in 0..10 {
                let expected = if i == j { 0.0 } else { 10.0 };
                assert!((m.get(i, j) - expected).abs() < 1e-12);
            }
        }
        let m = tmfpt(&tm(&[&[0.5, 0.5], &[0.75, 0.25]])).unwrap();
        assert!((m.get(0, 1) - 2.0).abs() < 1e-12);
        assert!((m.get(1, 0) - 4.0 / 3.0).abs() < 1e-12);
        // Periodic chain: every passage takes exactly one step.
        let m = tmfpt(&tm(&[&[0.0, 1.0], &[1.0, 0.0]])).unwrap();
        assert!((m.get(0, 1) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn permutation_checks() {
        let p = tm(&[&[0.5, 0.5], &[0.75, 0.25]]);
        assert!(p.permuted(&[0, 0]).is_err());
        let q = p.permuted(&[1, 0]).unwrap();
        assert_eq!(q.get(0, 0), 0.25);
    }
}
