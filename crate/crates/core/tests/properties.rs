use std::f64::consts::PI;

use metaopt_core::channel::{one_ring_correlation, sample_csit_ensemble, sample_ris_link, steering_vector, AntennaArray, PathLoss, UserGroupLayout};
use metaopt_core::linalg::hermitian_sqrt;
use metaopt_core::meta::project_power;
use metaopt_core::mlp::{mlp_forward, mlp_init, mlp_record, MlpParams, MlpSpec};
use metaopt_core::objectives::{RisMode, RisObjective};
use metaopt_core::rates::{hrsma_stream_rates, probing_power, saf_rates, PrecoderMatrix, PrecoderMode};
use metaopt_core::tape::grad;
use metaopt_core::{ComplexMatrix, SeededRng, Tape};
use num_complex::Complex;
use proptest::prelude::*;

fn random_matrix(rng: &mut SeededRng, rows: usize, cols: usize, scale: f64) -> ComplexMatrix<f64> {
    ComplexMatrix::from_fn(rows, cols, |_, _| rng.complex_gaussian::<f64>() * scale)
}

fn layout(k: usize, g: usize) -> UserGroupLayout<f64> {
    let az: Vec<f64> = (0..g).map(|i| -1.0 + 2.0 * i as f64 / g.max(2) as f64).collect();
    UserGroupLayout::equal_groups(k, &az, 0.2).unwrap()
}

/// Precoder `N_t x (1+G+K)`, common columns zeroed for SDMA.
fn precoder(rng: &mut SeededRng, nt: usize, k: usize, g: usize, mode: PrecoderMode) -> PrecoderMatrix<f64> {
    let mut data = random_matrix(rng, nt, 1 + g + k, 1.0);
    if mode == PrecoderMode::Sdma {
        data = ComplexMatrix::from_fn(nt, 1 + g + k, |r, c| if c <= g { Complex::new(0.0, 0.0) } else { data.get(r, c) });
    }
    PrecoderMatrix::new(data, g, 1e9, mode).unwrap()
}

fn scale_column(p: &PrecoderMatrix<f64>, col: usize, s: f64) -> PrecoderMatrix<f64> {
    let mut q = p.clone();
    q.data = ComplexMatrix::from_fn(p.data.rows(), p.data.cols(), |r, c| if c == col { p.data.get(r, c) * s } else { p.data.get(r, c) });
    q
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn mlp_gradients_match_central_differences(seed in any::<u64>(), dim in 1usize..6, hidden in 1usize..8) {
        let mut rng = SeededRng::new(seed);
        let spec = MlpSpec::precoder(dim, hidden);
        let params: MlpParams<f64> = mlp_init(&spec, &mut rng);
        let x: Vec<f64> = (0..dim).map(|_| rng.standard_normal()).collect();
        let loss = |theta: &[f64], x: &[f64]| -> f64 {
            let p = MlpParams { flat: theta.to_vec() };
            mlp_forward(&p, &spec, x).unwrap().iter().map(|v| v * v).sum()
        };
        let mut tape = Tape::new();
        let tv = tape.leaf(params.flat.clone());
        let xv = tape.leaf(x.clone());
        let out = mlp_record(&mut tape, &spec, tv, xv).unwrap();
        let l = tape.sum_sq(out);
        let g = grad(&tape, l, &[tv, xv]).unwrap().grads;

        let h = 1e-5;
        let (mut num, mut den) = (0.0, 0.0);
        let mut theta = params.flat.clone();
        for i in 0..theta.len() {
            let v = theta[i];
            theta[i] = v + h;
            let up = loss(&theta, &x);
            theta[i] = v - h;
            let dn = loss(&theta, &x);
            theta[i] = v;
            let fd = (up - dn) / (2.0 * h);
            num += (g[0][i] - fd).powi(2);
            den += fd * fd;
        }
        let mut xs = x.clone();
        for i in 0..xs.len() {
            let v = xs[i];
            xs[i] = v + h;
            let up = loss(&params.flat, &xs);
            xs[i] = v - h;
            let dn = loss(&params.flat, &xs);
            xs[i] = v;
            let fd = (up - dn) / (2.0 * h);
            num += (g[1][i] - fd).powi(2);
            den += fd * fd;
        }
        prop_assert!(num.sqrt() <= 1e-4 * den.sqrt().max(1e-8), "{} vs {}", num.sqrt(), den.sqrt());
    }

    #[test]
    fn hermitian_sqrt_is_hermitian_psd(seed in any::<u64>(), n in 1usize..7) {
        let mut rng = SeededRng::new(seed);
        let a = random_matrix(&mut rng, n, n, 1.0);
        let r = a.matmul(&a.adjoint()).unwrap();
        let s = hermitian_sqrt(&r, 1e-9).unwrap();
        prop_assert!(s.hermitian_defect() <= 1e-10);
        // PSD: v^H S v >= 0 for random probes
        for _ in 0..8 {
            let v: Vec<Complex<f64>> = (0..n).map(|_| rng.complex_gaussian()).collect();
            let q: Complex<f64> = (0..n).map(|i| v[i].conj() * (0..n).map(|j| s.get(i, j) * v[j]).sum::<Complex<f64>>()).sum();
            prop_assert!(q.re >= -1e-10 * r.frobenius_norm().max(1.0));
        }
    }

    #[test]
    fn same_seed_gives_identical_streams(seed in any::<u64>(), tag in any::<u64>()) {
        let draw = |mut rng: SeededRng| -> Vec<u64> {
            (0..64).map(|_| rng.uniform::<f64>(0.0, 1.0).to_bits() ^ rng.standard_normal::<f64>().to_bits()).collect()
        };
        prop_assert_eq!(draw(SeededRng::new(seed)), draw(SeededRng::new(seed)));
        prop_assert_eq!(draw(SeededRng::new(seed).fork(tag)), draw(SeededRng::new(seed).fork(tag)));
    }

    #[test]
    fn one_ring_correlation_is_a_correlation(theta in -PI..PI, spread in 0.01f64..1.0, n in 2usize..10, circular in any::<bool>()) {
        let array = if circular { AntennaArray::uniform_circular(n) } else { AntennaArray::uniform_linear(n, 0.5) };
        let r = one_ring_correlation(&array, theta, spread, 128).unwrap();
        prop_assert!(r.hermitian_defect() <= 1e-12);
        for i in 0..n {
            prop_assert!((r.get(i, i) - Complex::new(1.0, 0.0)).norm() <= 1e-9);
        }
        let ev = metaopt_core::linalg::hermitian_eigenvalues(&r, 1e-9).unwrap();
        prop_assert!(ev.iter().all(|&v| v >= -1e-9));
    }

    #[test]
    fn steering_entries_have_unit_modulus(theta in -PI..PI, n in 1usize..20, circular in any::<bool>()) {
        let array = if circular { AntennaArray::uniform_circular(n) } else { AntennaArray::uniform_linear(n, 0.5) };
        let a = steering_vector(&array, theta);
        prop_assert!(a.data().iter().all(|z| (z.norm() - 1.0).abs() <= 1e-12));
    }

    #[test]
    fn zero_error_variance_copies_the_estimate(seed in any::<u64>(), m in 1usize..6) {
        let mut rng = SeededRng::new(seed);
        let e = sample_csit_ensemble(&mut rng, &layout(3, 2), &AntennaArray::uniform_circular(4), 0.0, m, 64).unwrap();
        prop_assert!(e.samples.iter().all(|h| *h == e.h_hat));
    }

    #[test]
    fn rates_are_finite_nonnegative_and_commitments_are_minima(seed in any::<u64>(), k in 2usize..6, g in 1usize..3, sdma in any::<bool>()) {
        let mut rng = SeededRng::new(seed);
        let g = g.min(k);
        let lay = layout(k, g);
        let mode = if sdma { PrecoderMode::Sdma } else { PrecoderMode::Hrsma };
        let p = precoder(&mut rng, 4, k, g, mode);
        let e = sample_csit_ensemble(&mut rng, &lay, &AntennaArray::uniform_circular(4), 0.5, 3, 64).unwrap();
        let saf = saf_rates(&e, &p, &lay, 1.0).unwrap();
        for v in saf.common.iter().chain(&saf.group).chain(&saf.private) {
            prop_assert!(v.is_finite() && *v >= 0.0);
        }
        prop_assert!(saf.common.iter().all(|&c| saf.committed_common <= c));
        for grp in 0..g {
            for &u in lay.members(grp) {
                prop_assert!(saf.committed_group[grp] <= saf.group[u]);
            }
        }
        if sdma {
            prop_assert!(saf.common.iter().chain(&saf.group).all(|&v| v == 0.0));
        }
    }

    #[test]
    fn more_interference_never_helps(seed in any::<u64>(), k in 2usize..6, boost in 1.0f64..10.0) {
        let mut rng = SeededRng::new(seed);
        let g = 2.min(k);
        let lay = layout(k, g);
        let p = precoder(&mut rng, 4, k, g, PrecoderMode::Hrsma);
        let h = random_matrix(&mut rng, 4, k, 1.0);
        let base = hrsma_stream_rates(&h, &p, &lay, 1.0).unwrap();
        let victim = 0;
        let other = 1;
        let louder = scale_column(&p, p.private_column(other), boost.sqrt());
        let r = hrsma_stream_rates(&h, &louder, &lay, 1.0).unwrap();
        prop_assert!(r.private[victim] <= base.private[victim] * (1.0 + 1e-12));
        prop_assert!(r.common[victim] <= base.common[victim] * (1.0 + 1e-12));
        prop_assert!(r.group[victim] <= base.group[victim] * (1.0 + 1e-12));
    }

    #[test]
    fn probing_power_matches_gram_form(seed in any::<u64>(), n in 2usize..9, cols in 1usize..6, theta in -1.5f64..1.5) {
        let mut rng = SeededRng::new(seed);
        let array = AntennaArray::uniform_circular(n);
        let p = random_matrix(&mut rng, n, cols, 1.0);
        let a = steering_vector(&array, theta).column(0);
        let gram = p.matmul(&p.adjoint()).unwrap();
        let quad: Complex<f64> = (0..n).map(|i| a[i].conj() * (0..n).map(|j| gram.get(i, j) * a[j]).sum::<Complex<f64>>()).sum();
        let got = probing_power(&p, &[theta], &array).unwrap();
        prop_assert!((got - quad.re).abs() <= 1e-10 * quad.re.max(1.0));
    }

    #[test]
    fn projection_respects_the_budget(seed in any::<u64>(), budget in 1e-3f64..1e3, scale in 1e-3f64..1e3) {
        let mut rng = SeededRng::new(seed);
        let data = random_matrix(&mut rng, 4, 6, scale);
        let p = PrecoderMatrix::new(data, 1, budget, PrecoderMode::Hrsma).unwrap();
        let q = project_power(&p);
        prop_assert!(q.power() <= budget * (1.0 + 1e-9));
        if p.power() <= budget {
            prop_assert_eq!(q.data, p.data);
        }
    }

    #[test]
    fn surface_parameterizations_hold_exactly(seed in any::<u64>(), b in 1usize..7) {
        let mut rng = SeededRng::new(seed);
        let link = sample_ris_link::<f64>(&mut rng, 2, 2, b, PathLoss::default(), 1e-11).unwrap();
        let diag = RisObjective::new(&link, RisMode::Diagonal, 1.0).unwrap();
        let phases: Vec<f64> = (0..diag.scattering_len()).map(|_| rng.uniform(-10.0, 10.0)).collect();
        let phi = diag.scattering_matrix(&phases).unwrap();
        for i in 0..b {
            for j in 0..b {
                let z = phi.get(i, j);
                if i == j {
                    prop_assert!((z.norm_sqr() - 1.0).abs() <= 4.0 * f64::EPSILON);
                } else {
                    prop_assert_eq!(z, Complex::new(0.0, 0.0));
                }
            }
        }
        let bd = RisObjective::new(&link, RisMode::BeyondDiagonal, 1.0).unwrap();
        let params: Vec<f64> = (0..bd.scattering_len()).map(|_| rng.standard_normal()).collect();
        let phi = bd.scattering_matrix(&params).unwrap();
        prop_assert_eq!(phi.transpose(), phi);
    }

    #[test]
    fn learner_width_matches_variable_width(dim in 1usize..50, hidden in 1usize..20) {
        for spec in [MlpSpec::precoder(dim, hidden), MlpSpec::four_hidden(dim, hidden)] {
            let params: MlpParams<f64> = MlpParams::zeros(&spec);
            prop_assert_eq!(spec.output(), dim);
            prop_assert_eq!(mlp_forward(&params, &spec, &vec![0.5; dim]).unwrap().len(), dim);
        }
    }
}
