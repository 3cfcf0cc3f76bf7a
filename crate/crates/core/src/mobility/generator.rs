use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{
    fundamental_matrix, stationary_distribution, MfptMatrix, TimeUnit, TransitionMatrix, ROW_SUM_TOLERANCE,
};
use crate::error::{Error, Result};

/// Largest row sum a valid generator may have.
pub const GENERATOR_ROW_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GeneratorVariant {
    /// `Q_kk = ln A_kk`, `Q_kl = A_kl ln(A_kk) / (A_kk - 1)`: rows sum to 0 and
    /// off-diagonal rates are nonnegative.
    #[default]
    DiagonalAdjustment,
    /// `Q_kl = A_kl ln(A_kl) / (1 - A_kl)` off the diagonal. Usually not a
    /// valid generator; kept for comparison.
    PaperLiteral,
}

impl std::str::FromStr for GeneratorVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "diagonal-adjustment" => Ok(Self::DiagonalAdjustment),
            "paper-literal" => Ok(Self::PaperLiteral),
            other => Err(Error::Config(format!(
                "unknown generator variant `{other}` (expected diagonal-adjustment or paper-literal)"
            ))),
        }
    }
}

/// Transition rates per `delta`-year period.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorMatrix {
    entries: DMatrix<f64>,
    /// Years per unit of time of the rates.
    pub delta: f64,
    pub variant: GeneratorVariant,
}

impl GeneratorMatrix {
    /// Wraps a proper generator: nonnegative off-diagonal entries and rows
    /// summing to 0.
    pub fn new(entries: DMatrix<f64>, delta: f64) -> Result<Self> {
        let q = Self {
            entries,
            delta,
            variant: GeneratorVariant::DiagonalAdjustment,
        };
        let k = q.k();
        if k == 0 || q.entries.ncols() != k {
            return Err(Error::InvalidMatrix("generator must be square and nonempty".into()));
        }
        if !(delta > 0.0 && delta.is_finite()) {
            return Err(Error::InvalidMatrix(format!("horizon {delta} must be positive")));
        }
        if q.entries.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidMatrix("generator has non-finite entries".into()));
        }
        if !q.is_valid() {
            return Err(Error::InvalidMatrix(format!(
                "not a generator: max |row sum| {:.3e}, min off-diagonal {:.3e}",
                q.max_row_sum(),
                q.min_off_diagonal()
            )));
        }
        Ok(q)
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

    pub fn max_row_sum(&self) -> f64 {
        self.entries
            .row_iter()
            .map(|r| r.sum().abs())
            .fold(0.0, f64::max)
    }

    pub fn min_off_diagonal(&self) -> f64 {
        let k = self.k();
        let mut min = f64::INFINITY;
        for i in 0..k {
            for j in 0..k {
                if i != j {
                    min = min.min(self.entries[(i, j)]);
                }
            }
        }
        min
    }

    pub fn is_valid(&self) -> bool {
        let scale = self
            .entries
            .diagonal()
            .iter()
            .fold(1.0f64, |m, v| m.max(v.abs()));
        self.max_row_sum() <= GENERATOR_ROW_TOLERANCE * scale
            && (self.k() == 1 || self.min_off_diagonal() >= 0.0)
    }
}

/// Continuous-time generator approximating `A` over one period of `A.delta` years.
pub fn generator_matrix(a: &TransitionMatrix, variant: GeneratorVariant) -> Result<GeneratorMatrix> {
    let k = a.k();
    let mut q = DMatrix::zeros(k, k);
    for i in 0..k {
        let d = a.get(i, i);
        if d == 0.0 {
            return Err(Error::DegenerateRow {
                row: i + 1,
                reason: "zero diagonal entry; its logarithm is undefined".into(),
            });
        }
        let off_mass: f64 = (0..k).filter(|&j| j != i).map(|j| a.get(i, j)).sum();
        if d == 1.0 {
            if off_mass > 0.0 {
                return Err(Error::DegenerateRow {
                    row: i + 1,
                    reason: "unit diagonal with nonzero off-diagonal entries".into(),
                });
            }
            continue;
        }
        let ln_d = d.ln();
        q[(i, i)] = ln_d;
        for j in (0..k).filter(|&j| j != i) {
            let v = a.get(i, j);
            q[(i, j)] = match variant {
                GeneratorVariant::DiagonalAdjustment => v * ln_d / (d - 1.0),
                GeneratorVariant::PaperLiteral if v == 0.0 || v == 1.0 => 0.0,
                GeneratorVariant::PaperLiteral => v * v.ln() / (1.0 - v),
            };
        }
    }
    let q = GeneratorMatrix {
        entries: q,
        delta: a.delta,
        variant,
    };
    if !q.is_valid() {
        log::warn!(
            "{variant:?} generator is not valid: max |row sum| {:.3e}, min off-diagonal {:.3e}",
            q.max_row_sum(),
            q.min_off_diagonal()
        );
    }
    Ok(q)
}

/// Jump chain of a generator: `A~_kl = -Q_kl / Q_kk`, zero diagonal.
///
/// The returned matrix carries the generator's `delta` for bookkeeping only;
/// its steps are jumps, not periods.
pub fn embedded_chain(q: &GeneratorMatrix) -> Result<TransitionMatrix> {
    let k = q.k();
    let mut out = DMatrix::zeros(k, k);
    for i in 0..k {
        let d = q.get(i, i);
        if d == 0.0 {
            return Err(Error::AbsorbingState { state: i + 1 });
        }
        for j in (0..k).filter(|&j| j != i) {
            out[(i, j)] = -q.get(i, j) / d;
        }
    }
    TransitionMatrix::with_tolerance(out, q.delta, ROW_SUM_TOLERANCE, true)
}

/// Continuous-time first-passage times in three forms.
#[derive(Debug, Clone, PartialEq)]
pub struct ContinuousMfpt {
    /// Primary route, in `delta`-year periods.
    pub periods: MfptMatrix,
    pub years: MfptMatrix,
    /// Cross-check through the jump chain and mean holding times, in periods.
    pub jump_route_periods: MfptMatrix,
    /// Largest relative disagreement between the two routes.
    pub route_discrepancy: f64,
    pub generator: GeneratorMatrix,
}

/// TMFPT of a transition matrix through its continuous-time generator.
///
/// Builds the default generator, then for every target `l` solves
/// `Q_{-l} m = -1` on the remaining states. The jump-chain route
/// `m_kl = sum_j (Z_kj - Z_lj) h_j + (pi . h) (Z_ll - Z_kl) / pi_l`, with `Z`
/// and `pi` from the embedded chain and holding times `h_j = -1 / Q_jj`, is
/// evaluated alongside.
pub fn tmfpt_continuous(a: &TransitionMatrix) -> Result<ContinuousMfpt> {
    let q = generator_matrix(a, GeneratorVariant::DiagonalAdjustment)?;
    generator_first_passage(&q)
}

/// Both first-passage routes for a given generator.
pub fn generator_first_passage(q: &GeneratorMatrix) -> Result<ContinuousMfpt> {
    let k = q.k();
    let periods = linear_system_route(q)?;
    let jump = jump_chain_route(q)?;
    let mut discrepancy: f64 = 0.0;
    for i in 0..k {
        for j in 0..k {
            let (a, b) = (periods[(i, j)], jump[(i, j)]);
            if i != j {
                discrepancy = discrepancy.max((a - b).abs() / a.abs().max(f64::MIN_POSITIVE));
            }
        }
    }
    if discrepancy > 1e-6 {
        log::warn!("TMFPT routes disagree by {discrepancy:.3e} (relative)");
    }
    let periods = MfptMatrix {
        entries: periods,
        unit: TimeUnit::DeltaPeriods,
    };
    Ok(ContinuousMfpt {
        years: periods.scaled(q.delta, TimeUnit::Years),
        periods,
        jump_route_periods: MfptMatrix {
            entries: jump,
            unit: TimeUnit::DeltaPeriods,
        },
        route_discrepancy: discrepancy,
        generator: q.clone(),
    })
}

fn linear_system_route(q: &GeneratorMatrix) -> Result<DMatrix<f64>> {
    let k = q.k();
    let mut m = DMatrix::zeros(k, k);
    for l in 0..k {
        let others: Vec<usize> = (0..k).filter(|&i| i != l).collect();
        if others.is_empty() {
            continue;
        }
        let n = others.len();
        let sub = DMatrix::from_fn(n, n, |i, j| q.get(others[i], others[j]));
        let rhs = DVector::from_element(n, -1.0);
        let sol = sub.lu().solve(&rhs).ok_or_else(|| {
            Error::Conditioning(format!("first-passage system for target {} is singular", l + 1))
        })?;
        if sol.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::Conditioning(format!(
                "first-passage system for target {} has no valid solution",
                l + 1
            )));
        }
        for (i, &state) in others.iter().enumerate() {
            m[(state, l)] = sol[i];
        }
    }
    Ok(m)
}

fn jump_chain_route(q: &GeneratorMatrix) -> Result<DMatrix<f64>> {
    let k = q.k();
    let jump = embedded_chain(q)?;
    let pi = stationary_distribution(&jump)?;
    let z = fundamental_matrix(jump.entries(), &pi)?;
    let h = DVector::from_fn(k, |j, _| -1.0 / q.get(j, j));
    let pi_h = pi.dot(&h);
    Ok(DMatrix::from_fn(k, k, |i, l| {
        if i == l {
            return 0.0;
        }
        let holding: f64 = (0..k).map(|j| (z[(i, j)] - z[(l, j)]) * h[j]).sum();
        holding + pi_h * (z[(l, l)] - z[(i, l)]) / pi[l]
    }))
}
