//! Meta-losses recorded on a [`Tape`].
//!
//! Constant pieces (stacked channels, index maps) are built once per
//! problem instance and shared by every iteration's recording.

use std::sync::Arc;

use num_complex::Complex;

use crate::allocation::{allocate_linearized, AllocationInput};
use crate::channel::{steering_vector, AntennaArray, CsitEnsemble, RisLink, UserGroupLayout};
use crate::error::{Error, Result};
use crate::linalg::ComplexMatrix;
use crate::rates::{PrecoderMatrix, PrecoderMode, SafRates};
use crate::scalar::Real;
use crate::tape::{SparseMap, Tape, Var};

/// Penalty `λ Σ_k (R_k^th - R_k^alloc)` over users below target.
#[derive(Clone, Debug, PartialEq)]
pub struct QosPenalty<T> {
    pub thresholds: Vec<T>,
    pub weight: T,
}

/// Reward `λ Σ_n a(θ_n)^H P P^H a(θ_n)` for beam power at radar targets.
#[derive(Clone, Debug, PartialEq)]
pub struct SensingReward<T> {
    pub targets: Vec<T>,
    pub array: AntennaArray<T>,
    pub weight: T,
}

/// Discrete choices made while recording; gradients are exact while these
/// stay fixed.
#[derive(Clone, Debug, PartialEq)]
pub struct BranchSignature {
    pub argmins: Vec<usize>,
    pub deficient: Vec<bool>,
    pub jacobian_bits: Vec<u64>,
}

pub struct HrsmaRecord<T> {
    pub loss: Var,
    /// `[R̄_c,k.. | R̄_c,g,k.. | R̄_k..]`.
    pub saf: Var,
    pub probing: Option<Var>,
    pub allocated: Vec<T>,
    pub branch: BranchSignature,
}

#[derive(Clone, Debug, PartialEq)]
pub struct HrsmaEval<T> {
    pub loss: T,
    pub saf: SafRates<T>,
    pub allocated: Vec<T>,
    pub violations: usize,
    pub probing_power: Option<T>,
}

/// H-RSMA (or SDMA) sample-average meta-loss with optional QoS penalty and
/// sensing reward.
#[derive(Clone, Debug)]
pub struct HrsmaObjective<T: Real> {
    layout: UserGroupLayout<T>,
    mode: PrecoderMode,
    antennas: usize,
    columns: usize,
    channels: Arc<ComplexMatrix<T>>,
    interference: Arc<SparseMap<T>>,
    averages: Arc<SparseMap<T>>,
    embed: Option<Arc<SparseMap<T>>>,
    common_idx: Arc<SparseMap<T>>,
    group_idx: Vec<Arc<SparseMap<T>>>,
    private_idx: Arc<SparseMap<T>>,
    qos: Option<QosPenalty<T>>,
    sensing: Option<(Arc<ComplexMatrix<T>>, T)>,
}

impl<T: Real> HrsmaObjective<T> {
    pub fn new(
        ensemble: &CsitEnsemble<T>,
        layout: &UserGroupLayout<T>,
        noise: T,
        mode: PrecoderMode,
        qos: Option<QosPenalty<T>>,
        sensing: Option<SensingReward<T>>,
    ) -> Result<Self> {
        let (k, g) = (layout.users(), layout.groups());
        let m = ensemble.len();
        if m == 0 {
            return Err(Error::InvalidArgument("ensemble has no samples".into()));
        }
        let nt = ensemble.h_hat.rows();
        if ensemble.samples.iter().any(|h| h.rows() != nt || h.cols() != k) {
            return Err(Error::DimensionMismatch(format!("ensemble samples must be {nt}x{k}")));
        }
        if !(noise > T::zero()) {
            return Err(Error::InvalidArgument("noise power must be positive".into()));
        }
        if let Some(q) = &qos {
            if q.thresholds.len() != k {
                return Err(Error::DimensionMismatch(format!("{} thresholds for {k} users", q.thresholds.len())));
            }
            if !(q.weight >= T::zero()) {
                return Err(Error::InvalidArgument("QoS weight must be non-negative".into()));
            }
        }
        let c = 1 + g + k;

        // rows (m, k) hold h_k^(m)^H
        let mut rows = Vec::with_capacity(m * k * nt);
        for h in &ensemble.samples {
            for user in 0..k {
                rows.extend((0..nt).map(|a| h.get(a, user).conj()));
            }
        }
        let channels = Arc::new(ComplexMatrix::new(m * k, nt, rows)?);

        // |h^H p_c|^2 -> four nested interference-plus-noise levels per (m, k)
        let mut b = SparseMap::builder(m * k * c);
        for s in 0..m {
            for user in 0..k {
                let base = (s * k + user) * c;
                let own = layout.group_of(user);
                let one = T::one();
                let all: Vec<(usize, T)> = (0..c).map(|col| (base + col, one)).collect();
                let no_common: Vec<(usize, T)> = (1..c).map(|col| (base + col, one)).collect();
                let no_group: Vec<(usize, T)> =
                    (1..c).filter(|&col| col != 1 + own).map(|col| (base + col, one)).collect();
                let no_private: Vec<(usize, T)> =
                    (1..c).filter(|&col| col != 1 + own && col != 1 + g + user).map(|col| (base + col, one)).collect();
                b.row(&all, noise).row(&no_common, noise).row(&no_group, noise).row(&no_private, noise);
            }
        }
        let interference = Arc::new(b.build());

        // ln levels -> sample-averaged stream rates in bits
        let scale = T::one() / (T::of(m as f64) * T::ln_2());
        let mut b = SparseMap::builder(4 * m * k);
        for stream in 0..3 {
            for user in 0..k {
                let mut entries = Vec::with_capacity(2 * m);
                for s in 0..m {
                    let base = 4 * (s * k + user) + stream;
                    entries.push((base, scale));
                    entries.push((base + 1, -scale));
                }
                b.row(&entries, T::zero());
            }
        }
        let averages = Arc::new(b.build());

        let embed = (mode == PrecoderMode::Sdma).then(|| {
            let mut b = SparseMap::builder(2 * nt * k);
            for a in 0..nt {
                for col in 0..c {
                    for part in 0..2 {
                        if col > g {
                            b.row(&[(2 * (a * k + col - 1 - g) + part, T::one())], T::zero());
                        } else {
                            b.row(&[], T::zero());
                        }
                    }
                }
            }
            Arc::new(b.build())
        });

        let common_idx = Arc::new(SparseMap::gather(3 * k, &(0..k).collect::<Vec<_>>()));
        let group_idx = (0..g)
            .map(|grp| Arc::new(SparseMap::gather(3 * k, &layout.members(grp).iter().map(|&u| k + u).collect::<Vec<_>>())))
            .collect();
        let private_idx = Arc::new(SparseMap::gather(3 * k, &(2 * k..3 * k).collect::<Vec<_>>()));

        let sensing = match sensing {
            None => None,
            Some(s) => {
                if s.targets.is_empty() {
                    return Err(Error::InvalidArgument("sensing reward needs at least one target".into()));
                }
                if s.array.len() != nt {
                    return Err(Error::DimensionMismatch(format!("array has {} elements, channel {nt}", s.array.len())));
                }
                let mut rows = Vec::with_capacity(s.targets.len() * nt);
                for &th in &s.targets {
                    rows.extend(steering_vector(&s.array, th).data().iter().map(|z| z.conj()));
                }
                Some((Arc::new(ComplexMatrix::new(s.targets.len(), nt, rows)?), s.weight))
            }
        };

        Ok(Self {
            layout: layout.clone(),
            mode,
            antennas: nt,
            columns: c,
            channels,
            interference,
            averages,
            embed,
            common_idx,
            group_idx,
            private_idx,
            qos,
            sensing,
        })
    }

    pub fn mode(&self) -> PrecoderMode {
        self.mode
    }

    pub fn layout(&self) -> &UserGroupLayout<T> {
        &self.layout
    }

    /// Real length of the optimization variable.
    pub fn variable_len(&self) -> usize {
        match self.mode {
            PrecoderMode::Hrsma => 2 * self.antennas * self.columns,
            PrecoderMode::Sdma => 2 * self.antennas * self.layout.users(),
        }
    }

    /// Interleaved variable for a full precoder (private columns only in SDMA mode).
    pub fn to_variable(&self, p: &ComplexMatrix<T>) -> Result<Vec<T>> {
        if p.rows() != self.antennas || p.cols() != self.columns {
            return Err(Error::DimensionMismatch(format!(
                "precoder must be {}x{}, got {}x{}",
                self.antennas,
                self.columns,
                p.rows(),
                p.cols()
            )));
        }
        Ok(match self.mode {
            PrecoderMode::Hrsma => p.to_interleaved(),
            PrecoderMode::Sdma => {
                let first = 1 + self.layout.groups();
                let cols: Vec<usize> = (first..self.columns).collect();
                p.select_columns(&cols).to_interleaved()
            }
        })
    }

    /// Full precoder for a variable vector.
    pub fn precoder(&self, x: &[T], power_budget: T) -> Result<PrecoderMatrix<T>> {
        if x.len() != self.variable_len() {
            return Err(Error::ShapeMismatch { expected: self.variable_len(), got: x.len() });
        }
        let full = match &self.embed {
            Some(map) => map.apply(x),
            None => x.to_vec(),
        };
        let data = ComplexMatrix::from_interleaved(self.antennas, self.columns, &full)?;
        PrecoderMatrix::new(data, self.layout.groups(), power_budget, self.mode)
    }

    pub fn record(&self, tape: &mut Tape<T>, x: Var) -> Result<HrsmaRecord<T>> {
        if tape.value(x).len() != self.variable_len() {
            return Err(Error::ShapeMismatch { expected: self.variable_len(), got: tape.value(x).len() });
        }
        let (k, g, c) = (self.layout.users(), self.layout.groups(), self.columns);
        let p = match &self.embed {
            Some(map) => tape.linear(map.clone(), x),
            None => x,
        };
        let y = tape.const_left_mul(self.channels.clone(), p, c);
        let gains = tape.abs2(y);
        let levels = tape.linear(self.interference.clone(), gains);
        let logs = tape.ln(levels);
        let saf = tape.linear(self.averages.clone(), logs);

        let mut argmins = Vec::with_capacity(1 + g);
        let mut parts = Vec::with_capacity(2 + g);
        let common = tape.linear(self.common_idx.clone(), saf);
        argmins.push(first_argmin(tape.value(common)));
        parts.push(tape.min(common));
        for idx in &self.group_idx {
            let grp = tape.linear(idx.clone(), saf);
            argmins.push(first_argmin(tape.value(grp)));
            parts.push(tape.min(grp));
        }
        parts.push(tape.linear(self.private_idx.clone(), saf));
        // r = [R̄_c, R̄_c,1..R̄_c,G, R̄_1..R̄_K]
        let r = tape.concat(&parts);
        let rv = tape.value(r).to_vec();

        let n = 1 + g + k;
        let mut coef = vec![-T::one(); n];
        let mut offset = T::zero();
        let (allocated, deficient, jacobian_bits) = match &self.qos {
            Some(q) => {
                let input = AllocationInput {
                    common: rv[0],
                    group_common: rv[1..=g].to_vec(),
                    private: rv[1 + g..].to_vec(),
                    thresholds: q.thresholds.clone(),
                };
                let lin = allocate_linearized(&input, &self.layout)?;
                let deficient: Vec<bool> =
                    lin.allocated.iter().zip(&q.thresholds).map(|(&a, &th)| a - th < T::zero()).collect();
                // the penalty is affine in r along this branch: alloc = alloc0 + J (r - r0)
                for user in (0..k).filter(|&u| deficient[u]) {
                    let row = &lin.jacobian[user];
                    let mut drift = T::zero();
                    for j in 0..n {
                        coef[j] -= q.weight * row[j];
                        drift += row[j] * rv[j];
                    }
                    offset -= q.weight * (lin.allocated[user] - q.thresholds[user] - drift);
                }
                let bits = lin.jacobian.iter().flatten().map(|v| v.to_f64_lossy().to_bits()).collect();
                (lin.allocated, deficient, bits)
            }
            None => (Vec::new(), Vec::new(), Vec::new()),
        };
        let mut b = SparseMap::builder(n);
        b.row(&coef.iter().copied().enumerate().collect::<Vec<_>>(), offset);
        let mut loss = tape.linear(Arc::new(b.build()), r);

        let probing = match &self.sensing {
            Some((steer, weight)) => {
                let beams = tape.const_left_mul(steer.clone(), p, c);
                let power = tape.abs2(beams);
                let total = tape.sum(power);
                let reward = tape.scale(total, -*weight);
                loss = tape.add(loss, reward);
                Some(total)
            }
            None => None,
        };
        Ok(HrsmaRecord { loss, saf, probing, allocated, branch: BranchSignature { argmins, deficient, jacobian_bits } })
    }

    /// Loss and rate breakdown at `x`.
    pub fn evaluate(&self, x: &[T]) -> Result<HrsmaEval<T>> {
        let mut tape = Tape::new();
        let v = tape.constant(x.to_vec());
        let rec = self.record(&mut tape, v)?;
        let k = self.layout.users();
        let s = tape.value(rec.saf);
        let common = s[..k].to_vec();
        let group = s[k..2 * k].to_vec();
        let private = s[2 * k..].to_vec();
        let committed_common = common.iter().copied().fold(T::infinity(), T::min);
        let committed_group = (0..self.layout.groups())
            .map(|grp| self.layout.members(grp).iter().map(|&u| group[u]).fold(T::infinity(), T::min))
            .collect();
        let saf = SafRates { common, group, private, committed_common, committed_group };
        let violations = rec.branch.deficient.iter().filter(|&&d| d).count();
        Ok(HrsmaEval {
            loss: tape.scalar(rec.loss),
            saf,
            allocated: rec.allocated,
            violations,
            probing_power: rec.probing.map(|p| tape.scalar(p)),
        })
    }

    pub fn loss(&self, x: &[T]) -> Result<T> {
        Ok(self.evaluate(x)?.loss)
    }

    pub fn branch(&self, x: &[T]) -> Result<BranchSignature> {
        let mut tape = Tape::new();
        let v = tape.constant(x.to_vec());
        Ok(self.record(&mut tape, v)?.branch)
    }
}

fn first_argmin<T: Real>(v: &[T]) -> usize {
    let mut arg = 0;
    for (i, &x) in v.iter().enumerate() {
        if x < v[arg] {
            arg = i;
        }
    }
    arg
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RisMode {
    /// Diagonal `Φ = diag(e^{jω})`, parameterized by the `B` phases.
    Diagonal,
    /// Symmetric `Φ` built from its upper triangle, `B(B+1)/2` complex entries.
    BeyondDiagonal,
}

/// Index of `(i, j)`, `i <= j`, in the row-major upper triangle of a `B x B` matrix.
pub fn upper_index(b: usize, i: usize, j: usize) -> usize {
    debug_assert!(i <= j && j < b);
    i * b - i * (i + 1) / 2 + j
}

#[derive(Clone, Debug, PartialEq)]
pub struct RisEval<T> {
    pub loss: T,
    pub sum_rate: T,
    pub rates: Vec<T>,
    /// `‖Φ^H Φ - I‖_F`.
    pub unitarity_defect: T,
}

/// Sum-rate meta-loss over a precoder and a scattering matrix.
#[derive(Clone, Debug)]
pub struct RisObjective<T: Real> {
    mode: RisMode,
    elements: usize,
    antennas: usize,
    users: usize,
    h_adj: Arc<ComplexMatrix<T>>,
    g: Arc<ComplexMatrix<T>>,
    levels: Arc<SparseMap<T>>,
    rate_sum: Arc<SparseMap<T>>,
    place: Arc<SparseMap<T>>,
    weight: T,
    literal_diagonal_penalty: bool,
}

impl<T: Real> RisObjective<T> {
    pub fn new(link: &RisLink<T>, mode: RisMode, weight: T) -> Result<Self> {
        if !(weight >= T::zero()) {
            return Err(Error::InvalidArgument("penalty weight must be non-negative".into()));
        }
        let (b, nt, k) = (link.elements(), link.antennas(), link.users());
        if link.h.rows() != b {
            return Err(Error::DimensionMismatch(format!("user channels have {} rows, RIS has {b}", link.h.rows())));
        }
        let mut lv = SparseMap::builder(k * k);
        for user in 0..k {
            let all: Vec<(usize, T)> = (0..k).map(|j| (user * k + j, T::one())).collect();
            let others: Vec<(usize, T)> = (0..k).filter(|&j| j != user).map(|j| (user * k + j, T::one())).collect();
            lv.row(&all, link.noise_power).row(&others, link.noise_power);
        }
        let inv = T::one() / T::ln_2();
        let mut rs = SparseMap::builder(2 * k);
        rs.row(&(0..k).flat_map(|u| [(2 * u, inv), (2 * u + 1, -inv)]).collect::<Vec<_>>(), T::zero());

        let placed = match mode {
            RisMode::Diagonal => 2 * b,
            RisMode::BeyondDiagonal => b * (b + 1),
        };
        let mut pl = SparseMap::builder(placed);
        for i in 0..b {
            for j in 0..b {
                for part in 0..2 {
                    let src = match mode {
                        RisMode::Diagonal => (i == j).then_some(2 * i + part),
                        RisMode::BeyondDiagonal => Some(2 * upper_index(b, i.min(j), i.max(j)) + part),
                    };
                    match src {
                        Some(s) => pl.row(&[(s, T::one())], T::zero()),
                        None => pl.row(&[], T::zero()),
                    };
                }
            }
        }
        Ok(Self {
            mode,
            elements: b,
            antennas: nt,
            users: k,
            h_adj: Arc::new(link.h.adjoint()),
            g: Arc::new(link.g.clone()),
            levels: Arc::new(lv.build()),
            rate_sum: Arc::new(rs.build()),
            place: Arc::new(pl.build()),
            weight,
            literal_diagonal_penalty: false,
        })
    }

    /// Diagonal mode only: add `λ ‖e^{jω} - 1‖²` instead of relying on the
    /// phase parameterization alone.
    pub fn with_literal_diagonal_penalty(mut self, on: bool) -> Self {
        self.literal_diagonal_penalty = on;
        self
    }

    pub fn mode(&self) -> RisMode {
        self.mode
    }

    pub fn precoder_len(&self) -> usize {
        2 * self.antennas * self.users
    }

    pub fn scattering_len(&self) -> usize {
        param_len(self.mode, self.elements)
    }

    /// Interleaved `B x B` scattering matrix for a parameter vector.
    pub fn scattering_matrix(&self, params: &[T]) -> Result<ComplexMatrix<T>> {
        if params.len() != self.scattering_len() {
            return Err(Error::ShapeMismatch { expected: self.scattering_len(), got: params.len() });
        }
        let b = self.elements;
        let entries = match self.mode {
            RisMode::Diagonal => {
                let mut v = Vec::with_capacity(2 * b);
                for &w in params {
                    v.push(w.cos());
                    v.push(w.sin());
                }
                self.place.apply(&v)
            }
            RisMode::BeyondDiagonal => self.place.apply(params),
        };
        ComplexMatrix::from_interleaved(b, b, &entries)
    }

    /// Records the loss for precoder `p` (`N_t x K` interleaved) and scattering parameters `phi`.
    pub fn record(&self, tape: &mut Tape<T>, p: Var, phi: Var) -> Result<(Var, Var)> {
        if tape.value(p).len() != self.precoder_len() {
            return Err(Error::ShapeMismatch { expected: self.precoder_len(), got: tape.value(p).len() });
        }
        if tape.value(phi).len() != self.scattering_len() {
            return Err(Error::ShapeMismatch { expected: self.scattering_len(), got: tape.value(phi).len() });
        }
        let (b, nt, k) = (self.elements, self.antennas, self.users);
        let entries = match self.mode {
            RisMode::Diagonal => tape.phase(phi),
            RisMode::BeyondDiagonal => phi,
        };
        let matrix = tape.linear(self.place.clone(), entries);
        let hphi = tape.const_left_mul(self.h_adj.clone(), matrix, b);
        let eff = tape.const_right_mul(hphi, self.g.clone(), k);
        let y = tape.matmul(eff, p, k, nt, k);
        let gains = tape.abs2(y);
        let levels = tape.linear(self.levels.clone(), gains);
        let logs = tape.ln(levels);
        let sum_rate = tape.linear(self.rate_sum.clone(), logs);
        let neg = tape.scale(sum_rate, -T::one());

        let penalty = match self.mode {
            RisMode::BeyondDiagonal => {
                let adj = tape.adjoint(matrix, b, b);
                let gram = tape.matmul(adj, matrix, b, b, b);
                let mut eye = vec![T::zero(); 2 * b * b];
                for i in 0..b {
                    eye[2 * (i * b + i)] = -T::one();
                }
                let defect = tape.offset(gram, &eye);
                Some(tape.sum_sq(defect))
            }
            RisMode::Diagonal if self.literal_diagonal_penalty => {
                let mut ones = vec![T::zero(); 2 * b];
                for i in 0..b {
                    ones[2 * i] = -T::one();
                }
                let d = tape.offset(entries, &ones);
                Some(tape.sum_sq(d))
            }
            RisMode::Diagonal => None,
        };
        let loss = match penalty {
            Some(f2) => {
                let weighted = tape.scale(f2, self.weight);
                tape.add(neg, weighted)
            }
            None => neg,
        };
        Ok((loss, sum_rate))
    }

    pub fn evaluate(&self, p: &[T], phi: &[T]) -> Result<RisEval<T>> {
        let mut tape = Tape::new();
        let pv = tape.constant(p.to_vec());
        let fv = tape.constant(phi.to_vec());
        let (loss, sr) = self.record(&mut tape, pv, fv)?;
        let pm = ComplexMatrix::from_interleaved(self.antennas, self.users, p)?;
        let link_rates = {
            let phi_m = self.scattering_matrix(phi)?;
            let eff = self.h_adj.matmul(&phi_m)?.matmul(&self.g)?.matmul(&pm)?;
            let noise = self.levels.apply(&vec![T::zero(); self.users * self.users])[0];
            (0..self.users)
                .map(|u| {
                    let row = eff.row(u);
                    let s = row[u].norm_sqr();
                    let i: T = (0..self.users).filter(|&j| j != u).map(|j| row[j].norm_sqr()).sum();
                    (s / (i + noise)).ln_1p() / T::ln_2()
                })
                .collect()
        };
        let phi_m = self.scattering_matrix(phi)?;
        let defect = phi_m.adjoint().matmul(&phi_m)?.sub(&ComplexMatrix::identity(self.elements))?.frobenius_norm();
        Ok(RisEval { loss: tape.scalar(loss), sum_rate: tape.scalar(sr), rates: link_rates, unitarity_defect: defect })
    }

    pub fn loss(&self, p: &[T], phi: &[T]) -> Result<T> {
        let mut tape = Tape::new();
        let pv = tape.constant(p.to_vec());
        let fv = tape.constant(phi.to_vec());
        let (loss, _) = self.record(&mut tape, pv, fv)?;
        Ok(tape.scalar(loss))
    }
}

fn param_len(mode: RisMode, b: usize) -> usize {
    match mode {
        RisMode::Diagonal => b,
        RisMode::BeyondDiagonal => b * (b + 1),
    }
}

/// Upper-triangle parameters of `diag(e^{jω})`.
pub fn embed_diagonal_phases<T: Real>(phases: &[T]) -> Vec<T> {
    let b = phases.len();
    let mut out = vec![T::zero(); b * (b + 1)];
    for (i, &w) in phases.iter().enumerate() {
        let idx = upper_index(b, i, i);
        out[2 * idx] = w.cos();
        out[2 * idx + 1] = w.sin();
    }
    out
}

/// Upper-triangle parameters of a matrix (its lower triangle is ignored).
pub fn upper_triangle_params<T: Real>(phi: &ComplexMatrix<T>) -> Vec<T> {
    let b = phi.rows();
    let mut out = Vec::with_capacity(b * (b + 1));
    for i in 0..b {
        for j in i..b {
            let z: Complex<T> = phi.get(i, j);
            out.push(z.re);
            out.push(z.im);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{sample_csit_ensemble, sample_ris_link, PathLoss};
    use crate::rates::{probing_power, ris_user_rates, saf_rates};
    use crate::rng::SeededRng;
    use crate::tape::grad;

    fn toy_hrsma(seed: u64, m: usize, sigma: f64) -> (CsitEnsemble<f64>, UserGroupLayout<f64>, AntennaArray<f64>) {
        let layout = UserGroupLayout::equal_groups(3, &[-0.4, 0.6], 0.3).unwrap();
        let array = AntennaArray::uniform_circular(4);
        let e = sample_csit_ensemble(&mut SeededRng::new(seed), &layout, &array, sigma, m, 128).unwrap();
        (e, layout, array)
    }

    #[test]
    fn upper_index_is_row_major() {
        let b = 4;
        let mut expect = 0;
        for i in 0..b {
            for j in i..b {
                assert_eq!(upper_index(b, i, j), expect);
                expect += 1;
            }
        }
        assert_eq!(expect, b * (b + 1) / 2);
    }

    #[test]
    fn tape_rates_match_closed_form() {
        let (e, layout, _) = toy_hrsma(1, 3, 0.4);
        let obj = HrsmaObjective::new(&e, &layout, 1.0, PrecoderMode::Hrsma, None, None).unwrap();
        let mut rng = SeededRng::new(2);
        let x: Vec<f64> = (0..obj.variable_len()).map(|_| rng.standard_normal()).collect();
        let eval = obj.evaluate(&x).unwrap();
        let p = obj.precoder(&x, 100.0).unwrap();
        let want = saf_rates(&e, &p, &layout, 1.0).unwrap();
        for (a, b) in eval.saf.common.iter().zip(&want.common).chain(eval.saf.group.iter().zip(&want.group)).chain(eval.saf.private.iter().zip(&want.private)) {
            assert!((a - b).abs() < 1e-12, "{a} vs {b}");
        }
        assert!((eval.loss + want.sum_rate()).abs() < 1e-12);
    }

    #[test]
    fn zero_thresholds_give_negative_asr() {
        let (e, layout, _) = toy_hrsma(3, 2, 0.2);
        let qos = QosPenalty { thresholds: vec![0.0; 3], weight: 10.0 };
        let with = HrsmaObjective::new(&e, &layout, 1.0, PrecoderMode::Hrsma, Some(qos), None).unwrap();
        let without = HrsmaObjective::new(&e, &layout, 1.0, PrecoderMode::Hrsma, None, None).unwrap();
        let mut rng = SeededRng::new(4);
        let x: Vec<f64> = (0..with.variable_len()).map(|_| rng.standard_normal()).collect();
        let a = with.evaluate(&x).unwrap();
        assert_eq!(a.loss, without.loss(&x).unwrap());
        assert!((a.loss + a.saf.sum_rate()).abs() < 1e-12);
    }

    #[test]
    fn single_user_penalty_arithmetic() {
        // one user, tiny precoder so the rate is far below target
        let h = ComplexMatrix::new(1, 1, vec![Complex::new(1.0, 0.0)]).unwrap();
        let e = CsitEnsemble::perfect(h);
        let layout = UserGroupLayout::from_membership(vec![0], 1).unwrap();
        let qos = QosPenalty { thresholds: vec![0.25], weight: 10.0 };
        let obj = HrsmaObjective::new(&e, &layout, 1.0, PrecoderMode::Sdma, Some(qos), None).unwrap();
        // private gain |p|^2 = 2^0.1 - 1 gives a rate of exactly 0.1 bits
        let amp = (2f64.powf(0.1) - 1.0).sqrt();
        let ev = obj.evaluate(&[amp, 0.0]).unwrap();
        assert!((ev.allocated[0] - 0.1).abs() < 1e-12);
        assert!((ev.loss - (-0.1 + 1.5)).abs() < 1e-12);
        assert_eq!(ev.violations, 1);
    }

    #[test]
    fn sdma_embedding_zeroes_common_columns() {
        let (e, layout, _) = toy_hrsma(5, 2, 0.3);
        let obj = HrsmaObjective::new(&e, &layout, 1.0, PrecoderMode::Sdma, None, None).unwrap();
        assert_eq!(obj.variable_len(), 2 * 4 * 3);
        let mut rng = SeededRng::new(6);
        let x: Vec<f64> = (0..obj.variable_len()).map(|_| rng.standard_normal()).collect();
        let ev = obj.evaluate(&x).unwrap();
        assert!(ev.saf.common.iter().chain(&ev.saf.group).all(|&r| r == 0.0));
        let p = obj.precoder(&x, 1.0).unwrap();
        assert_eq!(obj.to_variable(&p.data).unwrap(), x);
    }

    #[test]
    fn sensing_reward_is_linear_in_weight() {
        let (e, layout, array) = toy_hrsma(7, 2, 0.5);
        let targets = vec![-0.5, 0.5];
        let mk = |w: f64| {
            let s = SensingReward { targets: targets.clone(), array: array.clone(), weight: w };
            HrsmaObjective::new(&e, &layout, 1.0, PrecoderMode::Hrsma, None, Some(s)).unwrap()
        };
        let mut rng = SeededRng::new(8);
        let x: Vec<f64> = (0..mk(0.0).variable_len()).map(|_| rng.standard_normal()).collect();
        let p = mk(0.0).precoder(&x, 1.0).unwrap();
        let pp = probing_power(&p.data, &targets, &array).unwrap();
        let a = mk(1e-1).evaluate(&x).unwrap();
        let b = mk(1e-5).evaluate(&x).unwrap();
        assert!((a.probing_power.unwrap() - pp).abs() < 1e-10 * pp);
        assert!(((b.loss - a.loss) - (1e-1 - 1e-5) * pp).abs() < 1e-10 * pp.max(1.0));
        // zero precoder
        let z = mk(1e-1).evaluate(&vec![0.0; x.len()]).unwrap();
        assert_eq!(z.loss, 0.0);
    }

    #[test]
    fn ris_tape_rates_match_closed_form() {
        let mut rng = SeededRng::new(9);
        let link = sample_ris_link::<f64>(&mut rng, 3, 2, 3, PathLoss::default(), 1e-11).unwrap();
        for mode in [RisMode::Diagonal, RisMode::BeyondDiagonal] {
            let obj = RisObjective::new(&link, mode, 1.0).unwrap();
            let p: Vec<f64> = (0..obj.precoder_len()).map(|_| rng.standard_normal()).collect();
            let phi: Vec<f64> = (0..obj.scattering_len()).map(|_| rng.standard_normal()).collect();
            let ev = obj.evaluate(&p, &phi).unwrap();
            let pm = ComplexMatrix::from_interleaved(3, 2, &p).unwrap();
            let want = ris_user_rates(&link, &obj.scattering_matrix(&phi).unwrap(), &pm).unwrap();
            let sr: f64 = want.iter().sum();
            assert!((ev.sum_rate - sr).abs() < 1e-10 * sr.max(1.0));
        }
    }

    #[test]
    fn bd_ris_penalty_examples() {
        let mut rng = SeededRng::new(10);
        let link = sample_ris_link::<f64>(&mut rng, 2, 2, 4, PathLoss::default(), 1e-11).unwrap();
        let obj = RisObjective::new(&link, RisMode::BeyondDiagonal, 1.0).unwrap();
        let p: Vec<f64> = (0..obj.precoder_len()).map(|_| rng.standard_normal()).collect();
        let eye = upper_triangle_params(&ComplexMatrix::<f64>::identity(4));
        let ev = obj.evaluate(&p, &eye).unwrap();
        assert!((ev.loss + ev.sum_rate).abs() < 1e-15);
        let two: Vec<f64> = eye.iter().map(|v| 2.0 * v).collect();
        let ev2 = obj.evaluate(&p, &two).unwrap();
        assert!((ev2.loss + ev2.sum_rate - 36.0).abs() < 1e-12);
    }

    #[test]
    fn bd_ris_matrix_is_symmetric_and_diagonal_is_unimodular() {
        let mut rng = SeededRng::new(11);
        let link = sample_ris_link::<f64>(&mut rng, 2, 2, 5, PathLoss::default(), 1e-11).unwrap();
        let bd = RisObjective::new(&link, RisMode::BeyondDiagonal, 1.0).unwrap();
        let params: Vec<f64> = (0..bd.scattering_len()).map(|_| rng.standard_normal()).collect();
        let phi = bd.scattering_matrix(&params).unwrap();
        assert_eq!(phi, phi.transpose());
        let diag = RisObjective::new(&link, RisMode::Diagonal, 1.0).unwrap();
        let w: Vec<f64> = (0..5).map(|_| rng.uniform(0.0, 6.28)).collect();
        let phi = diag.scattering_matrix(&w).unwrap();
        for i in 0..5 {
            assert!((phi.get(i, i).norm() - 1.0).abs() < 1e-15);
        }
        let embedded = bd.scattering_matrix(&embed_diagonal_phases(&w)).unwrap();
        assert_eq!(embedded, phi);
    }

    #[test]
    fn diagonal_penalty_is_inactive_by_default() {
        let mut rng = SeededRng::new(12);
        let link = sample_ris_link::<f64>(&mut rng, 2, 2, 3, PathLoss::default(), 1e-11).unwrap();
        let plain = RisObjective::new(&link, RisMode::Diagonal, 5.0).unwrap();
        let literal = plain.clone().with_literal_diagonal_penalty(true);
        let p: Vec<f64> = (0..plain.precoder_len()).map(|_| rng.standard_normal()).collect();
        let w = vec![0.3, 1.0, -2.0];
        let a = plain.evaluate(&p, &w).unwrap();
        assert_eq!(a.loss, -a.sum_rate);
        let b = literal.evaluate(&p, &w).unwrap();
        let f2: f64 = w.iter().map(|&x: &f64| (x.cos() - 1.0).powi(2) + x.sin().powi(2)).sum();
        assert!((b.loss - (-b.sum_rate + 5.0 * f2)).abs() < 1e-12);
    }

    #[test]
    fn hrsma_gradient_reaches_every_entry() {
        let (e, layout, _) = toy_hrsma(13, 2, 0.4);
        let obj = HrsmaObjective::new(&e, &layout, 1.0, PrecoderMode::Hrsma, None, None).unwrap();
        let mut rng = SeededRng::new(14);
        let x: Vec<f64> = (0..obj.variable_len()).map(|_| rng.standard_normal()).collect();
        let mut t = Tape::new();
        let v = t.leaf(x);
        let rec = obj.record(&mut t, v).unwrap();
        let g = grad(&t, rec.loss, &[v]).unwrap();
        assert!(g.disconnected.is_empty());
        assert!(g.grads[0].iter().all(|v| v.is_finite()));
    }
}
