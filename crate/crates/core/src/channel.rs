//! Antenna arrays, one-ring correlated channels, CSIT error ensembles and
//! RIS two-hop links.

use std::collections::HashMap;

use num_complex::Complex;

use crate::error::{Error, Result};
use crate::linalg::{hermitian_sqrt, ComplexMatrix};
use crate::rng::SeededRng;
use crate::scalar::Real;

pub const DEFAULT_QUADRATURE_POINTS: usize = 128;
const MIN_QUADRATURE_POINTS: usize = 64;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Geometry {
    Circular,
    Linear,
}

/// Which closed form [`steering_vector`] uses.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum SteeringForm {
    /// Linear form for linear arrays, positional form otherwise.
    #[default]
    Auto,
    /// `[1, e^{j2πδ sinθ}, ...]`.
    Linear,
    /// `e^{-j2π Ψ(θ)·r_i}` with `Ψ(θ) = (cos θ, sin θ)`.
    Positional,
}

/// Element positions in wavelengths.
#[derive(Clone, Debug, PartialEq)]
pub struct AntennaArray<T> {
    pub positions: Vec<[T; 2]>,
    pub geometry: Geometry,
    pub spacing: T,
    pub steering: SteeringForm,
}

impl<T: Real> AntennaArray<T> {
    /// Equally spaced circle with neighbours half a wavelength apart.
    pub fn uniform_circular(n: usize) -> Self {
        let positions = if n <= 1 {
            vec![[T::zero(); 2]; n]
        } else {
            let step = T::two() * T::pi() / T::of(n as f64);
            let one = T::one();
            let radius = T::half() / ((one - step.cos()).powi(2) + step.sin().powi(2)).sqrt();
            (0..n)
                .map(|i| {
                    let a = step * T::of(i as f64);
                    [radius * a.cos(), radius * a.sin()]
                })
                .collect()
        };
        Self { positions, geometry: Geometry::Circular, spacing: T::half(), steering: SteeringForm::Auto }
    }

    /// Elements on the y-axis at `0, δ, 2δ, ...`.
    pub fn uniform_linear(n: usize, spacing: T) -> Self {
        let positions = (0..n).map(|i| [T::zero(), spacing * T::of(i as f64)]).collect();
        Self { positions, geometry: Geometry::Linear, spacing, steering: SteeringForm::Auto }
    }

    pub fn with_steering(mut self, form: SteeringForm) -> Self {
        self.steering = form;
        self
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    /// Radius of a circular array (distance of element 0 from the origin).
    pub fn radius(&self) -> T {
        self.positions.first().map_or(T::zero(), |p| (p[0] * p[0] + p[1] * p[1]).sqrt())
    }

    fn projection(&self, i: usize, theta: T) -> T {
        let p = self.positions[i];
        theta.cos() * p[0] + theta.sin() * p[1]
    }
}

/// Users, their groups, and the one-ring geometry per user.
#[derive(Clone, Debug, PartialEq)]
pub struct UserGroupLayout<T> {
    group_of: Vec<usize>,
    members: Vec<Vec<usize>>,
    pub azimuths: Vec<T>,
    pub spreads: Vec<T>,
}

impl<T: Real> UserGroupLayout<T> {
    pub fn new(group_of: Vec<usize>, groups: usize, azimuths: Vec<T>, spreads: Vec<T>) -> Result<Self> {
        let k = group_of.len();
        if k == 0 || groups == 0 {
            return Err(Error::InconsistentGrouping("need at least one user and one group".into()));
        }
        if azimuths.len() != k || spreads.len() != k {
            return Err(Error::InconsistentGrouping(format!(
                "{k} users but {} azimuths and {} spreads",
                azimuths.len(),
                spreads.len()
            )));
        }
        let mut members = vec![Vec::new(); groups];
        for (user, &g) in group_of.iter().enumerate() {
            if g >= groups {
                return Err(Error::InconsistentGrouping(format!("user {user} assigned to group {g} of {groups}")));
            }
            members[g].push(user);
        }
        if let Some(g) = members.iter().position(Vec::is_empty) {
            return Err(Error::InconsistentGrouping(format!("group {g} has no members")));
        }
        Ok(Self { group_of, members, azimuths, spreads })
    }

    /// `k` users split into consecutive blocks, one per group azimuth; the
    /// first `k mod G` groups take one extra user.
    pub fn equal_groups(k: usize, group_azimuths: &[T], spread: T) -> Result<Self> {
        let g = group_azimuths.len();
        if g == 0 || k < g {
            return Err(Error::InconsistentGrouping(format!("cannot split {k} users into {g} groups")));
        }
        let (base, extra) = (k / g, k % g);
        let mut group_of = Vec::with_capacity(k);
        for grp in 0..g {
            let size = base + usize::from(grp < extra);
            group_of.extend(std::iter::repeat_n(grp, size));
        }
        let azimuths = group_of.iter().map(|&grp| group_azimuths[grp]).collect();
        Self::new(group_of, g, azimuths, vec![spread; k])
    }

    /// Membership only; azimuths and spreads are zero.
    pub fn from_membership(group_of: Vec<usize>, groups: usize) -> Result<Self> {
        let k = group_of.len();
        Self::new(group_of, groups, vec![T::zero(); k], vec![T::zero(); k])
    }

    pub fn users(&self) -> usize {
        self.group_of.len()
    }

    pub fn groups(&self) -> usize {
        self.members.len()
    }

    pub fn group_of(&self, user: usize) -> usize {
        self.group_of[user]
    }

    pub fn members(&self, group: usize) -> &[usize] {
        &self.members[group]
    }

    pub fn group_sizes(&self) -> Vec<usize> {
        self.members.iter().map(Vec::len).collect()
    }
}

/// Gauss–Legendre nodes and weights on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let nf = n as f64;
    for i in 0..n.div_ceil(2) {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for j in 2..=n {
                let jf = j as f64;
                let p2 = ((2.0 * jf - 1.0) * x * p1 - (jf - 1.0) * p0) / jf;
                p0 = p1;
                p1 = p2;
            }
            if n == 1 {
                p0 = 1.0;
                p1 = x;
            }
            dp = nf * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

/// Spatial correlation of the one-ring model, averaged uniformly over
/// departure angles in `[θ-Δ, θ+Δ]`.
pub fn one_ring_correlation<T: Real>(
    array: &AntennaArray<T>,
    theta: T,
    spread: T,
    quadrature_points: usize,
) -> Result<ComplexMatrix<T>> {
    if !(spread > T::zero()) {
        return Err(Error::DegenerateSpread(spread.to_f64_lossy()));
    }
    if quadrature_points < MIN_QUADRATURE_POINTS {
        return Err(Error::InvalidArgument(format!(
            "quadrature_points must be at least {MIN_QUADRATURE_POINTS}, got {quadrature_points}"
        )));
    }
    let n = array.len();
    let (nodes, weights) = gauss_legendre(quadrature_points);
    let two_pi = T::two() * T::pi();
    // per node: direction cosines, half weight (the 1/2Δ cancels the Δ Jacobian)
    let dirs: Vec<(T, T, T)> = nodes
        .iter()
        .zip(&weights)
        .map(|(&x, &w)| {
            let a = theta + spread * T::of(x);
            (a.cos(), a.sin(), T::of(0.5 * w))
        })
        .collect();
    let mut data = vec![Complex::new(T::zero(), T::zero()); n * n];
    for i in 0..n {
        data[i * n + i] = Complex::new(T::one(), T::zero());
        for j in i + 1..n {
            let dx = array.positions[i][0] - array.positions[j][0];
            let dy = array.positions[i][1] - array.positions[j][1];
            let mut acc = Complex::new(T::zero(), T::zero());
            for &(c, s, w) in &dirs {
                let phase = -two_pi * (c * dx + s * dy);
                acc += Complex::new(phase.cos(), phase.sin()) * w;
            }
            data[i * n + j] = acc;
            data[j * n + i] = acc.conj();
        }
    }
    ComplexMatrix::new(n, n, data)
}

/// Array response toward `theta` as an `N x 1` matrix.
pub fn steering_vector<T: Real>(array: &AntennaArray<T>, theta: T) -> ComplexMatrix<T> {
    let form = match array.steering {
        SteeringForm::Auto if array.geometry == Geometry::Linear => SteeringForm::Linear,
        SteeringForm::Auto => SteeringForm::Positional,
        f => f,
    };
    let two_pi = T::two() * T::pi();
    let entries = (0..array.len())
        .map(|i| {
            let phase = match form {
                SteeringForm::Linear => two_pi * T::of(i as f64) * array.spacing * theta.sin(),
                _ => -two_pi * array.projection(i, theta),
            };
            Complex::new(phase.cos(), phase.sin())
        })
        .collect();
    ComplexMatrix::column_vector(entries)
}

/// CSIT `Ĥ` with `M` conditional channel samples `H^(m)`.
#[derive(Clone, Debug)]
pub struct CsitEnsemble<T: Real> {
    pub h_hat: ComplexMatrix<T>,
    pub error_variance: T,
    pub samples: Vec<ComplexMatrix<T>>,
}

impl<T: Real> CsitEnsemble<T> {
    /// A single perfectly known channel.
    pub fn perfect(h: ComplexMatrix<T>) -> Self {
        Self { h_hat: h.clone(), error_variance: T::zero(), samples: vec![h] }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

/// Square roots `R_k^{1/2}` for every user, computed once per distinct
/// `(azimuth, spread)` pair.
pub fn correlation_roots<T: Real>(
    layout: &UserGroupLayout<T>,
    array: &AntennaArray<T>,
    quadrature_points: usize,
) -> Result<Vec<ComplexMatrix<T>>> {
    let mut cache: HashMap<(u64, u64), ComplexMatrix<T>> = HashMap::new();
    let mut roots = Vec::with_capacity(layout.users());
    for k in 0..layout.users() {
        let (theta, spread) = (layout.azimuths[k], layout.spreads[k]);
        let key = (theta.to_f64_lossy().to_bits(), spread.to_f64_lossy().to_bits());
        if let Some(r) = cache.get(&key) {
            roots.push(r.clone());
            continue;
        }
        let r = one_ring_correlation(array, theta, spread, quadrature_points)?;
        let root = hermitian_sqrt(&r, T::of(1e-9))?;
        cache.insert(key, root.clone());
        roots.push(root);
    }
    Ok(roots)
}

fn mat_vec<T: Real>(a: &ComplexMatrix<T>, x: &[Complex<T>]) -> Vec<Complex<T>> {
    (0..a.rows())
        .map(|r| a.row(r).iter().zip(x).fold(Complex::new(T::zero(), T::zero()), |acc, (&u, &v)| acc + u * v))
        .collect()
}

/// Draws `Ĥ` then `M` samples given precomputed correlation roots.
///
/// All `ĝ_k` are drawn first, then the error vectors sample by sample and
/// user by user. With zero error variance no error vectors are drawn and
/// every sample is a copy of `Ĥ`.
pub fn sample_csit_ensemble_with_roots<T: Real>(
    rng: &mut SeededRng,
    roots: &[ComplexMatrix<T>],
    error_variance: T,
    samples: usize,
) -> Result<CsitEnsemble<T>> {
    if !(error_variance >= T::zero() && error_variance <= T::one()) {
        return Err(Error::InvalidArgument(format!(
            "CSIT error variance must lie in [0, 1], got {}",
            error_variance
        )));
    }
    if samples == 0 {
        return Err(Error::InvalidArgument("need at least one CSIT sample".into()));
    }
    let Some(nt) = roots.first().map(ComplexMatrix::rows) else {
        return Err(Error::InvalidArgument("need at least one user".into()));
    };
    let hat_cols: Vec<Vec<Complex<T>>> = roots
        .iter()
        .map(|r| {
            let g = rng.complex_gaussian_vec(nt);
            mat_vec(r, &g)
        })
        .collect();
    let h_hat = ComplexMatrix::from_columns(&hat_cols)?;
    if error_variance == T::zero() {
        return Ok(CsitEnsemble { samples: vec![h_hat.clone(); samples], h_hat, error_variance });
    }
    let a = (T::one() - error_variance).sqrt();
    let s = error_variance.sqrt();
    let mut out = Vec::with_capacity(samples);
    for _ in 0..samples {
        let cols: Vec<Vec<Complex<T>>> = roots
            .iter()
            .zip(&hat_cols)
            .map(|(r, h)| {
                let z = rng.complex_gaussian_vec(nt);
                let e = mat_vec(r, &z);
                h.iter().zip(e).map(|(&hv, ev)| hv * a + ev * s).collect()
            })
            .collect();
        out.push(ComplexMatrix::from_columns(&cols)?);
    }
    Ok(CsitEnsemble { h_hat, error_variance, samples: out })
}

pub fn sample_csit_ensemble<T: Real>(
    rng: &mut SeededRng,
    layout: &UserGroupLayout<T>,
    array: &AntennaArray<T>,
    error_variance: T,
    samples: usize,
    quadrature_points: usize,
) -> Result<CsitEnsemble<T>> {
    let roots = correlation_roots(layout, array, quadrature_points)?;
    sample_csit_ensemble_with_roots(rng, &roots, error_variance, samples)
}

/// Large-scale attenuation `ξ = ξ0 (d/d0)^-ε` for both hops.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PathLoss {
    pub xi0_db: f64,
    pub d0: f64,
    pub d_br: f64,
    pub d_ru: f64,
    pub eps_br: f64,
    pub eps_ru: f64,
}

impl Default for PathLoss {
    fn default() -> Self {
        Self { xi0_db: -30.0, d0: 1.0, d_br: 50.0, d_ru: 2.5, eps_br: 2.0, eps_ru: 2.0 }
    }
}

impl PathLoss {
    /// Power attenuation at distance `d` with exponent `eps`.
    pub fn factor(&self, d: f64, eps: f64) -> f64 {
        10f64.powf(self.xi0_db / 10.0) * (d / self.d0).powf(-eps)
    }

    pub fn xi_br(&self) -> f64 {
        self.factor(self.d_br, self.eps_br)
    }

    pub fn xi_ru(&self) -> f64 {
        self.factor(self.d_ru, self.eps_ru)
    }
}

/// Transmitter → RIS → users with no direct path.
#[derive(Clone, Debug)]
pub struct RisLink<T: Real> {
    /// `B x N_t`.
    pub g: ComplexMatrix<T>,
    /// `B x K`, column `k` is `h_k`.
    pub h: ComplexMatrix<T>,
    pub noise_power: T,
    pub pathloss: PathLoss,
}

impl<T: Real> RisLink<T> {
    pub fn elements(&self) -> usize {
        self.g.rows()
    }

    pub fn antennas(&self) -> usize {
        self.g.cols()
    }

    pub fn users(&self) -> usize {
        self.h.cols()
    }
}

/// Rayleigh fading on both hops scaled by the path loss amplitudes; `Ğ` is
/// drawn row by row before the user vectors.
pub fn sample_ris_link<T: Real>(
    rng: &mut SeededRng,
    antennas: usize,
    users: usize,
    elements: usize,
    pathloss: PathLoss,
    noise_power: T,
) -> Result<RisLink<T>> {
    let p = &pathloss;
    if !(p.d0 > 0.0 && p.d_br > 0.0 && p.d_ru > 0.0) {
        return Err(Error::InvalidArgument("path loss distances must be positive".into()));
    }
    if antennas == 0 || users == 0 || elements == 0 {
        return Err(Error::InvalidArgument("RIS link dimensions must be positive".into()));
    }
    let a_br = T::of(p.xi_br().sqrt());
    let a_ru = T::of(p.xi_ru().sqrt());
    let g = ComplexMatrix::new(
        elements,
        antennas,
        (0..elements * antennas).map(|_| rng.complex_gaussian::<T>() * a_br).collect(),
    )?;
    let cols: Vec<Vec<Complex<T>>> =
        (0..users).map(|_| rng.complex_gaussian_vec::<T>(elements).into_iter().map(|z| z * a_ru).collect()).collect();
    let h = ComplexMatrix::from_columns(&cols)?;
    Ok(RisLink { g, h, noise_power, pathloss })
}
