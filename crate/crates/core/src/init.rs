//! Starting points for the meta-optimizer.

use num_complex::Complex;

use crate::channel::{CsitEnsemble, RisLink, UserGroupLayout};
use crate::error::{Error, Result};
use crate::linalg::{dominant_left_singular_vector, vector_norm, ComplexMatrix};
use crate::meta::{meta_optimize_dual, MetaOutcome, MetaVariable, MlpInit, Projection};
use crate::mlp::MlpSpec;
use crate::objectives::{embed_diagonal_phases, RisEval, RisMode, RisObjective};
use crate::rates::{PrecoderMatrix, PrecoderMode};
use crate::rng::SeededRng;
use crate::scalar::Real;

/// Power fractions for the global common, group common and private streams.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PowerSplit {
    pub common: f64,
    pub group: f64,
    pub private: f64,
}

impl Default for PowerSplit {
    fn default() -> Self {
        Self { common: 0.70, group: 0.25, private: 0.05 }
    }
}

impl PowerSplit {
    pub fn validate(&self) -> Result<()> {
        let parts = [self.common, self.group, self.private];
        if parts.iter().any(|&f| !(f >= 0.0)) || ((parts.iter().sum::<f64>()) - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidArgument(format!("power split {parts:?} must be non-negative and sum to 1")));
        }
        Ok(())
    }
}

fn unit_columns<T: Real>(h: &ComplexMatrix<T>) -> Result<Vec<Vec<Complex<T>>>> {
    (0..h.cols())
        .map(|k| {
            let col = h.column(k);
            let n = vector_norm(&col);
            if !(n > T::zero()) {
                return Err(Error::RankDeficientChannel { column: k });
            }
            Ok(col.into_iter().map(|z| z / n).collect())
        })
        .collect()
}

fn scaled<T: Real>(v: &[Complex<T>], s: T) -> Vec<Complex<T>> {
    v.iter().map(|&z| z * s).collect()
}

/// SVD-MRT precoder from the channel estimate: dominant left singular
/// vectors for the common streams, matched filters for the private ones.
pub fn svd_mrt_init<T: Real>(
    ensemble: &CsitEnsemble<T>,
    layout: &UserGroupLayout<T>,
    power_budget: T,
    split: PowerSplit,
) -> Result<PrecoderMatrix<T>> {
    split.validate()?;
    let h = &ensemble.h_hat;
    if h.cols() != layout.users() {
        return Err(Error::DimensionMismatch(format!("{} channel columns for {} users", h.cols(), layout.users())));
    }
    let privates = unit_columns(h)?;
    let (g, k) = (layout.groups(), layout.users());
    let mut cols = Vec::with_capacity(1 + g + k);
    let pc = T::of(split.common).sqrt() * power_budget.sqrt();
    cols.push(scaled(&dominant_left_singular_vector(h)?, pc));
    let pg = (T::of(split.group) * power_budget / T::of(g as f64)).sqrt();
    for grp in 0..g {
        let sub = h.select_columns(layout.members(grp));
        cols.push(scaled(&dominant_left_singular_vector(&sub)?, pg));
    }
    let pp = (T::of(split.private) * power_budget / T::of(k as f64)).sqrt();
    cols.extend(privates.iter().map(|v| scaled(v, pp)));
    PrecoderMatrix::new(ComplexMatrix::from_columns(&cols)?, g, power_budget, PrecoderMode::Hrsma)
}

/// Matched-filter SDMA precoder with the whole budget split equally over the
/// private streams; common columns are zero.
pub fn sdma_mrt_init<T: Real>(
    ensemble: &CsitEnsemble<T>,
    layout: &UserGroupLayout<T>,
    power_budget: T,
) -> Result<PrecoderMatrix<T>> {
    let h = &ensemble.h_hat;
    if h.cols() != layout.users() {
        return Err(Error::DimensionMismatch(format!("{} channel columns for {} users", h.cols(), layout.users())));
    }
    let privates = unit_columns(h)?;
    let (g, k) = (layout.groups(), layout.users());
    let zero = vec![Complex::new(T::zero(), T::zero()); h.rows()];
    let pp = (power_budget / T::of(k as f64)).sqrt();
    let mut cols = vec![zero; 1 + g];
    cols.extend(privates.iter().map(|v| scaled(v, pp)));
    PrecoderMatrix::new(ComplexMatrix::from_columns(&cols)?, g, power_budget, PrecoderMode::Sdma)
}

/// MRT through the surface: `p_k ∝ G^H Φ^H h_k`, equal power per user.
pub fn ris_mrt_init<T: Real>(link: &RisLink<T>, phi: &ComplexMatrix<T>, power_budget: T) -> Result<ComplexMatrix<T>> {
    let eff = link.g.adjoint().matmul(&phi.adjoint())?.matmul(&link.h)?;
    let dirs = unit_columns(&eff)?;
    let s = (power_budget / T::of(link.users() as f64)).sqrt();
    ComplexMatrix::from_columns(&dirs.iter().map(|v| scaled(v, s)).collect::<Vec<_>>())
}

/// Base learners and step sizes for a precoder/surface run.
#[derive(Clone, Debug, PartialEq)]
pub struct RisLearners<T> {
    pub hidden: usize,
    pub precoder_lr: T,
    pub scattering_lr: T,
}

#[derive(Clone, Debug)]
pub struct RisRun<T> {
    pub outcome: MetaOutcome<T>,
    /// Best precoder, interleaved `N_t x K`.
    pub precoder: Vec<T>,
    pub scattering: Vec<T>,
    pub eval: RisEval<T>,
}

/// Jointly meta-optimizes the precoder and the surface from `(p0, phi0)`.
#[allow(clippy::too_many_arguments)]
pub fn run_ris<T: Real>(
    objective: &RisObjective<T>,
    p0: Vec<T>,
    phi0: Vec<T>,
    power_budget: T,
    iterations: usize,
    learners: &RisLearners<T>,
    init: (MlpInit<T>, MlpInit<T>),
    rng: &mut SeededRng,
) -> Result<RisRun<T>> {
    let pv = MetaVariable::new(p0, MlpSpec::four_hidden(objective.precoder_len(), learners.hidden), learners.precoder_lr)
        .with_projection(Projection::Power(power_budget))
        .with_init(init.0);
    let fv = MetaVariable::new(
        phi0,
        MlpSpec::four_hidden(objective.scattering_len(), learners.hidden),
        learners.scattering_lr,
    )
    .with_init(init.1);
    let outcome = meta_optimize_dual(pv, fv, iterations, rng, |tape, p, phi| Ok(objective.record(tape, p, phi)?.0))?;
    let precoder = outcome.best[0].clone();
    let scattering = outcome.best[1].clone();
    let eval = objective.evaluate(&precoder, &scattering)?;
    Ok(RisRun { outcome, precoder, scattering, eval })
}

#[derive(Clone, Debug)]
pub struct WarmStart<T> {
    /// Upper-triangle parameters of the diagonal run's best surface.
    pub scattering: Vec<T>,
    pub precoder: Vec<T>,
    pub diagonal: RisRun<T>,
}

/// Runs the diagonal surface for `t_warm` iterations from zero phases and
/// embeds its best surface into the fully connected parameterization.
pub fn ris_warm_start<T: Real>(
    link: &RisLink<T>,
    p0: Vec<T>,
    power_budget: T,
    t_warm: usize,
    learners: &RisLearners<T>,
    init: (MlpInit<T>, MlpInit<T>),
    rng: &mut SeededRng,
) -> Result<WarmStart<T>> {
    let diag = RisObjective::new(link, RisMode::Diagonal, T::zero())?;
    let run = run_ris(&diag, p0, vec![T::zero(); link.elements()], power_budget, t_warm, learners, init, rng)?;
    Ok(WarmStart { scattering: embed_diagonal_phases(&run.scattering), precoder: run.precoder.clone(), diagonal: run })
}
