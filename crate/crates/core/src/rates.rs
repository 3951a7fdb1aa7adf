//! Closed-form rate and beampattern evaluation on plain matrices.

use num_complex::Complex;

use crate::channel::{steering_vector, AntennaArray, CsitEnsemble, RisLink, UserGroupLayout};
use crate::error::{Error, Result};
use crate::linalg::{inner, ComplexMatrix};
use crate::scalar::Real;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PrecoderMode {
    Hrsma,
    Sdma,
}

/// `N_t x (1 + G + K)` precoder with columns `[p_c | p_c,1..p_c,G | p_1..p_K]`.
#[derive(Clone, Debug, PartialEq)]
pub struct PrecoderMatrix<T: Real> {
    pub data: ComplexMatrix<T>,
    pub groups: usize,
    pub power_budget: T,
    pub mode: PrecoderMode,
}

impl<T: Real> PrecoderMatrix<T> {
    pub fn new(data: ComplexMatrix<T>, groups: usize, power_budget: T, mode: PrecoderMode) -> Result<Self> {
        if data.cols() < groups + 2 {
            return Err(Error::DimensionMismatch(format!(
                "precoder has {} columns, need at least {} for {groups} groups",
                data.cols(),
                groups + 2
            )));
        }
        if !(power_budget > T::zero()) {
            return Err(Error::InvalidArgument("power budget must be positive".into()));
        }
        let p = Self { data, groups, power_budget, mode };
        if mode == PrecoderMode::Sdma {
            let zero = Complex::new(T::zero(), T::zero());
            if (0..p.data.rows()).any(|r| p.data.row(r)[..=groups].iter().any(|&z| z != zero)) {
                return Err(Error::InvalidArgument("SDMA precoder must have zero common columns".into()));
            }
        }
        Ok(p)
    }

    pub fn antennas(&self) -> usize {
        self.data.rows()
    }

    pub fn users(&self) -> usize {
        self.data.cols() - self.groups - 1
    }

    pub fn group_column(&self, g: usize) -> usize {
        1 + g
    }

    pub fn private_column(&self, k: usize) -> usize {
        1 + self.groups + k
    }

    /// `tr(P P^H)`.
    pub fn power(&self) -> T {
        self.data.frobenius_norm_sqr()
    }
}

/// Per-user rates of one channel draw, in bits/s/Hz.
#[derive(Clone, Debug, PartialEq)]
pub struct StreamRates<T> {
    pub common: Vec<T>,
    /// Rate of the user's own group-common stream.
    pub group: Vec<T>,
    pub private: Vec<T>,
}

/// Sample averages of [`StreamRates`] and the common rates every decoder supports.
#[derive(Clone, Debug, PartialEq)]
pub struct SafRates<T> {
    pub common: Vec<T>,
    pub group: Vec<T>,
    pub private: Vec<T>,
    pub committed_common: T,
    pub committed_group: Vec<T>,
}

impl<T: Real> SafRates<T> {
    /// Committed common rates plus all private rates.
    pub fn sum_rate(&self) -> T {
        self.committed_common + self.committed_group.iter().copied().sum::<T>() + self.private.iter().copied().sum::<T>()
    }
}

fn check_dims<T: Real>(h: &ComplexMatrix<T>, p: &PrecoderMatrix<T>, layout: &UserGroupLayout<T>) -> Result<()> {
    if h.rows() != p.antennas() {
        return Err(Error::DimensionMismatch(format!("channel has {} antennas, precoder {}", h.rows(), p.antennas())));
    }
    if h.cols() != layout.users() || p.users() != layout.users() || p.groups != layout.groups() {
        return Err(Error::DimensionMismatch(format!(
            "channel users {}, precoder users {} / groups {}, layout users {} / groups {}",
            h.cols(),
            p.users(),
            p.groups,
            layout.users(),
            layout.groups()
        )));
    }
    Ok(())
}

fn log2_1p<T: Real>(x: T) -> T {
    x.ln_1p() / T::ln_2()
}

/// SIC cascade rates: global common, own group common, then private.
pub fn hrsma_stream_rates<T: Real>(
    h: &ComplexMatrix<T>,
    p: &PrecoderMatrix<T>,
    layout: &UserGroupLayout<T>,
    noise: T,
) -> Result<StreamRates<T>> {
    check_dims(h, p, layout)?;
    if !(noise > T::zero()) {
        return Err(Error::InvalidArgument("noise power must be positive".into()));
    }
    let (k_users, groups) = (layout.users(), layout.groups());
    let mut out = StreamRates { common: Vec::new(), group: Vec::new(), private: Vec::new() };
    for k in 0..k_users {
        let hk = h.column(k);
        let gain = |c: usize| inner(&hk, &p.data.column(c)).norm_sqr();
        let g = layout.group_of(k);
        let common = gain(0);
        let grp: Vec<T> = (0..groups).map(|n| gain(p.group_column(n))).collect();
        let prv: Vec<T> = (0..k_users).map(|j| gain(p.private_column(j))).collect();
        let all_grp: T = grp.iter().copied().sum();
        let all_prv: T = prv.iter().copied().sum();
        let other_grp: T = (0..groups).filter(|&n| n != g).map(|n| grp[n]).sum();
        let other_prv: T = (0..k_users).filter(|&j| j != k).map(|j| prv[j]).sum();

        let gamma_c = common / (all_grp + all_prv + noise);
        let gamma_g = grp[g] / (other_grp + all_prv + noise);
        let gamma_p = prv[k] / (other_grp + other_prv + noise);
        out.common.push(log2_1p(gamma_c));
        out.group.push(log2_1p(gamma_g));
        out.private.push(log2_1p(gamma_p));
    }
    Ok(out)
}

/// Mean stream rates over the ensemble samples.
pub fn saf_rates<T: Real>(
    ensemble: &CsitEnsemble<T>,
    p: &PrecoderMatrix<T>,
    layout: &UserGroupLayout<T>,
    noise: T,
) -> Result<SafRates<T>> {
    if ensemble.is_empty() {
        return Err(Error::InvalidArgument("ensemble has no samples".into()));
    }
    let k = layout.users();
    let mut common = vec![T::zero(); k];
    let mut group = vec![T::zero(); k];
    let mut private = vec![T::zero(); k];
    for h in &ensemble.samples {
        let r = hrsma_stream_rates(h, p, layout, noise)?;
        for i in 0..k {
            common[i] += r.common[i];
            group[i] += r.group[i];
            private[i] += r.private[i];
        }
    }
    let m = T::of(ensemble.len() as f64);
    for v in [&mut common, &mut group, &mut private] {
        for x in v.iter_mut() {
            *x /= m;
        }
    }
    let committed_common = common.iter().copied().fold(T::infinity(), T::min);
    let committed_group = (0..layout.groups())
        .map(|g| layout.members(g).iter().map(|&u| group[u]).fold(T::infinity(), T::min))
        .collect();
    Ok(SafRates { common, group, private, committed_common, committed_group })
}

fn check_array<T: Real>(p: &ComplexMatrix<T>, array: &AntennaArray<T>) -> Result<()> {
    if p.rows() != array.len() {
        return Err(Error::DimensionMismatch(format!("precoder rows {} vs array size {}", p.rows(), array.len())));
    }
    Ok(())
}

/// Per-column beam power `|a(θ)^H p_d|^2` at each angle; rows follow `angles`.
pub fn beampattern_streams<T: Real>(p: &ComplexMatrix<T>, array: &AntennaArray<T>, angles: &[T]) -> Result<Vec<Vec<T>>> {
    check_array(p, array)?;
    if angles.is_empty() {
        return Err(Error::InvalidArgument("angle grid is empty".into()));
    }
    let cols: Vec<Vec<Complex<T>>> = (0..p.cols()).map(|c| p.column(c)).collect();
    Ok(angles
        .iter()
        .map(|&th| {
            let a = steering_vector(array, th).column(0);
            cols.iter().map(|col| inner(&a, col).norm_sqr()).collect()
        })
        .collect())
}

/// `a(θ)^H P P^H a(θ)` per angle.
pub fn beampattern<T: Real>(p: &ComplexMatrix<T>, array: &AntennaArray<T>, angles: &[T]) -> Result<Vec<T>> {
    check_array(p, array)?;
    if angles.is_empty() {
        return Err(Error::InvalidArgument("angle grid is empty".into()));
    }
    let gram = p.matmul(&p.adjoint())?;
    angles
        .iter()
        .map(|&th| {
            let a = steering_vector(array, th);
            let q = a.adjoint().matmul(&gram)?.matmul(&a)?;
            Ok(q.get(0, 0).re)
        })
        .collect()
}

/// Beam power summed over the target directions.
pub fn probing_power<T: Real>(p: &ComplexMatrix<T>, targets: &[T], array: &AntennaArray<T>) -> Result<T> {
    if targets.is_empty() {
        return Err(Error::InvalidArgument("need at least one target".into()));
    }
    Ok(beampattern(p, array, targets)?.into_iter().sum())
}

/// Per-user rates through the RIS with scattering matrix `phi` and
/// precoder `p` (`N_t x K`).
pub fn ris_user_rates<T: Real>(link: &RisLink<T>, phi: &ComplexMatrix<T>, p: &ComplexMatrix<T>) -> Result<Vec<T>> {
    let (b, nt, k) = (link.elements(), link.antennas(), link.users());
    if phi.rows() != b || phi.cols() != b || p.rows() != nt || p.cols() != k {
        return Err(Error::DimensionMismatch(format!(
            "RIS link B={b}, N_t={nt}, K={k}; got Φ {}x{}, P {}x{}",
            phi.rows(),
            phi.cols(),
            p.rows(),
            p.cols()
        )));
    }
    let effective = link.h.adjoint().matmul(phi)?.matmul(&link.g)?.matmul(p)?;
    Ok((0..k)
        .map(|i| {
            let row = effective.row(i);
            let signal = row[i].norm_sqr();
            let interference: T = (0..k).filter(|&j| j != i).map(|j| row[j].norm_sqr()).sum();
            log2_1p(signal / (interference + link.noise_power))
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::PathLoss;
    use crate::rng::SeededRng;

    fn c(re: f64, im: f64) -> Complex<f64> {
        Complex::new(re, im)
    }

    fn random_matrix(rng: &mut SeededRng, r: usize, cols: usize) -> ComplexMatrix<f64> {
        ComplexMatrix::new(r, cols, rng.complex_gaussian_vec(r * cols)).unwrap()
    }

    #[test]
    fn zero_precoder_gives_zero_rates() {
        let layout = UserGroupLayout::<f64>::equal_groups(3, &[0.0], 0.1).unwrap();
        let mut rng = SeededRng::new(1);
        let h = random_matrix(&mut rng, 4, 3);
        let p = PrecoderMatrix::new(ComplexMatrix::zeros(4, 5), 1, 1.0, PrecoderMode::Hrsma).unwrap();
        let r = hrsma_stream_rates(&h, &p, &layout, 1.0).unwrap();
        assert!(r.common.iter().chain(&r.group).chain(&r.private).all(|&x| x == 0.0));
    }

    #[test]
    fn single_user_awgn() {
        let layout = UserGroupLayout::<f64>::equal_groups(1, &[0.0], 0.1).unwrap();
        let pt: f64 = 7.0;
        let h = ComplexMatrix::new(2, 1, vec![c(1.0, 0.0), c(0.0, 0.0)]).unwrap();
        let data = ComplexMatrix::from_fn(2, 3, |r, col| if r == 0 && col == 2 { c(pt.sqrt(), 0.0) } else { c(0.0, 0.0) });
        let p = PrecoderMatrix::new(data, 1, pt, PrecoderMode::Hrsma).unwrap();
        let r = hrsma_stream_rates(&h, &p, &layout, 1.0).unwrap();
        assert!((r.private[0] - (1.0 + pt).log2()).abs() < 1e-14);
        assert_eq!(r.common[0], 0.0);
    }

    #[test]
    fn two_user_scalar_oracle() {
        // K=2, G=1, N_t=2, hand-picked values; columns [p_c, p_c1, p_1, p_2]
        let h = ComplexMatrix::new(2, 2, vec![c(1.0, 0.5), c(-0.3, 0.2), c(0.4, -1.0), c(0.9, 0.1)]).unwrap();
        let pd = vec![
            c(0.5, 0.1), c(0.2, -0.3), c(0.7, 0.0), c(-0.1, 0.4),
            c(0.3, 0.3), c(-0.6, 0.2), c(0.0, -0.5), c(0.8, 0.1),
        ];
        let p = PrecoderMatrix::new(ComplexMatrix::new(2, 4, pd.clone()).unwrap(), 1, 10.0, PrecoderMode::Hrsma).unwrap();
        let layout = UserGroupLayout::<f64>::equal_groups(2, &[0.0], 0.1).unwrap();
        let noise = 0.5;
        let r = hrsma_stream_rates(&h, &p, &layout, noise).unwrap();

        // user k channel column: (h[0][k], h[1][k]); precoder column d: (pd[d], pd[4+d])
        let hcol = [[c(1.0, 0.5), c(0.4, -1.0)], [c(-0.3, 0.2), c(0.9, 0.1)]];
        for k in 0..2 {
            let g = |d: usize| {
                let v = hcol[k][0].conj() * pd[d] + hcol[k][1].conj() * pd[4 + d];
                v.re * v.re + v.im * v.im
            };
            let (gc, gg, g1, g2) = (g(0), g(1), g(2), g(3));
            let own = if k == 0 { g1 } else { g2 };
            let other = if k == 0 { g2 } else { g1 };
            let rc = (1.0 + gc / (gg + g1 + g2 + noise)).log2();
            let rg = (1.0 + gg / (g1 + g2 + noise)).log2();
            let rp = (1.0 + own / (other + noise)).log2();
            assert!((r.common[k] - rc).abs() < 1e-12);
            assert!((r.group[k] - rg).abs() < 1e-12);
            assert!((r.private[k] - rp).abs() < 1e-12);
        }
    }

    #[test]
    fn extra_interference_never_helps_victim() {
        let mut rng = SeededRng::new(11);
        let layout = UserGroupLayout::<f64>::equal_groups(4, &[0.0, 1.0], 0.1).unwrap();
        for _ in 0..50 {
            let h = random_matrix(&mut rng, 3, 4);
            let base = random_matrix(&mut rng, 3, 7);
            let p0 = PrecoderMatrix::new(base.clone(), 2, 10.0, PrecoderMode::Hrsma).unwrap();
            let r0 = hrsma_stream_rates(&h, &p0, &layout, 1.0).unwrap();
            // boost private column of user 3; user 0's private rate must not increase
            let col = p0.private_column(3);
            let boosted = ComplexMatrix::from_fn(3, 7, |r, cc| if cc == col { base.get(r, cc) * 2.0 } else { base.get(r, cc) });
            let p1 = PrecoderMatrix::new(boosted, 2, 10.0, PrecoderMode::Hrsma).unwrap();
            let r1 = hrsma_stream_rates(&h, &p1, &layout, 1.0).unwrap();
            assert!(r1.private[0] <= r0.private[0] + 1e-15);
            assert!(r1.common[0] <= r0.common[0] + 1e-15);
            assert!(r1.group[0] <= r0.group[0] + 1e-15);
        }
    }

    #[test]
    fn sdma_common_rates_are_zero() {
        let mut rng = SeededRng::new(2);
        let layout = UserGroupLayout::<f64>::equal_groups(4, &[0.0, 1.0], 0.1).unwrap();
        let h = random_matrix(&mut rng, 3, 4);
        let r = random_matrix(&mut rng, 3, 7);
        let data = ComplexMatrix::from_fn(3, 7, |row, col| if col < 3 { c(0.0, 0.0) } else { r.get(row, col) });
        let p = PrecoderMatrix::new(data, 2, 10.0, PrecoderMode::Sdma).unwrap();
        let rates = hrsma_stream_rates(&h, &p, &layout, 1.0).unwrap();
        assert!(rates.common.iter().chain(&rates.group).all(|&x| x == 0.0));
        assert!(PrecoderMatrix::new(r, 2, 10.0, PrecoderMode::Sdma).is_err());
    }

    #[test]
    fn saf_of_identical_samples_equals_single_draw() {
        let mut rng = SeededRng::new(3);
        let layout = UserGroupLayout::<f64>::equal_groups(2, &[0.0], 0.1).unwrap();
        let h = random_matrix(&mut rng, 2, 2);
        let p = PrecoderMatrix::new(random_matrix(&mut rng, 2, 4), 1, 10.0, PrecoderMode::Hrsma).unwrap();
        let single = hrsma_stream_rates(&h, &p, &layout, 1.0).unwrap();
        let e = CsitEnsemble { h_hat: h.clone(), error_variance: 0.0, samples: vec![h.clone(); 1] };
        let s = saf_rates(&e, &p, &layout, 1.0).unwrap();
        assert_eq!(s.common, single.common);
        assert_eq!(s.private, single.private);
        assert!(s.committed_common <= s.common[0] && s.committed_common <= s.common[1]);
    }

    #[test]
    fn probing_power_examples() {
        let array = AntennaArray::<f64>::uniform_circular(6);
        assert_eq!(probing_power(&ComplexMatrix::zeros(6, 3), &[0.2], &array).unwrap(), 0.0);
        let pt = 3.0;
        let a = steering_vector(&array, 0.4);
        let p = a.scale((pt / 6.0f64).sqrt());
        assert!((probing_power(&p, &[0.4], &array).unwrap() - 6.0 * pt).abs() < 1e-12);

        let mut rng = SeededRng::new(8);
        let p = random_matrix(&mut rng, 6, 4);
        let targets = [-0.5, 0.5];
        let brute: f64 = targets
            .iter()
            .map(|&t| {
                let a = steering_vector(&array, t).column(0);
                (0..4).map(|d| inner(&a, &p.column(d)).norm_sqr()).sum::<f64>()
            })
            .sum();
        assert!((probing_power(&p, &targets, &array).unwrap() - brute).abs() < 1e-10);
    }

    #[test]
    fn beampattern_decomposes_into_streams_and_peaks_at_target() {
        let array = AntennaArray::<f64>::uniform_circular(8);
        let grid: Vec<f64> = (0..181).map(|i| -std::f64::consts::FRAC_PI_2 + i as f64 * std::f64::consts::PI / 180.0).collect();
        let mut rng = SeededRng::new(4);
        let p = random_matrix(&mut rng, 8, 3);
        let total = beampattern(&p, &array, &grid).unwrap();
        let parts = beampattern_streams(&p, &array, &grid).unwrap();
        for (t, row) in total.iter().zip(&parts) {
            assert!((t - row.iter().sum::<f64>()).abs() < 1e-10);
        }
        let target = grid[120];
        let beam = steering_vector(&array, target);
        let pat = beampattern(&beam, &array, &grid).unwrap();
        let arg = pat.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).unwrap().0;
        assert_eq!(arg, 120);
        assert!(beampattern(&ComplexMatrix::zeros(8, 2), &array, &grid).unwrap().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn ris_rates_examples() {
        let mut rng = SeededRng::new(6);
        let link = crate::channel::sample_ris_link::<f64>(&mut rng, 1, 1, 1, PathLoss::default(), 1e-11).unwrap();
        let p = ComplexMatrix::new(1, 1, vec![c(0.8, -0.1)]).unwrap();
        let r = ris_user_rates(&link, &ComplexMatrix::identity(1), &p).unwrap();
        let chain = link.h.get(0, 0).conj() * link.g.get(0, 0) * p.get(0, 0);
        assert!((r[0] - (1.0 + chain.norm_sqr() / 1e-11).log2()).abs() < 1e-12);

        let zero = ris_user_rates(&link, &ComplexMatrix::identity(1), &ComplexMatrix::zeros(1, 1)).unwrap();
        assert_eq!(zero, vec![0.0]);

        // K=2, B=2, N_t=2 against scalar arithmetic
        let link = crate::channel::sample_ris_link::<f64>(&mut rng, 2, 2, 2, PathLoss::default(), 1e-11).unwrap();
        let phi = ComplexMatrix::new(2, 2, vec![c(0.6, 0.8), c(0.0, 0.0), c(0.0, 0.0), c(-1.0, 0.0)]).unwrap();
        let p = random_matrix(&mut rng, 2, 2);
        let r = ris_user_rates(&link, &phi, &p).unwrap();
        for k in 0..2 {
            let eff = |j: usize| {
                let mut acc = c(0.0, 0.0);
                for b1 in 0..2 {
                    for b2 in 0..2 {
                        for n in 0..2 {
                            acc += link.h.get(b1, k).conj() * phi.get(b1, b2) * link.g.get(b2, n) * p.get(n, j);
                        }
                    }
                }
                acc.norm_sqr()
            };
            let want = (1.0 + eff(k) / (eff(1 - k) + 1e-11)).log2();
            assert!((r[k] - want).abs() < 1e-12 * want.max(1.0));
        }
    }
}
