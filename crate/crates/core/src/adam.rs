use crate::error::{Error, Result};
use crate::scalar::Real;

/// Adam with bias correction; steps move parameters against the gradient.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState<T> {
    pub m: Vec<T>,
    pub v: Vec<T>,
    pub t: u64,
    pub beta1: T,
    pub beta2: T,
    pub eps: T,
    pub lr: T,
}

impl<T: Real> AdamState<T> {
    pub fn new(len: usize, lr: T) -> Self {
        Self {
            m: vec![T::zero(); len],
            v: vec![T::zero(); len],
            t: 0,
            beta1: T::of(0.9),
            beta2: T::of(0.999),
            eps: T::of(1e-8),
            lr,
        }
    }

    pub fn step(&mut self, params: &mut [T], grad: &[T]) -> Result<()> {
        if params.len() != self.m.len() {
            return Err(Error::ShapeMismatch { expected: self.m.len(), got: params.len() });
        }
        if grad.len() != self.m.len() {
            return Err(Error::ShapeMismatch { expected: self.m.len(), got: grad.len() });
        }
        if grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::NonFiniteGradient { slot: 0 });
        }
        self.t += 1;
        let t = self.t as i32;
        let c1 = T::one() - self.beta1.powi(t);
        let c2 = T::one() - self.beta2.powi(t);
        let (b1, b2) = (self.beta1, self.beta2);
        let (one_b1, one_b2) = (T::one() - b1, T::one() - b2);
        let step = self.lr / c1;
        let inv_c2 = T::one() / c2;
        let n = params.len();
        let (m, v, g) = (&mut self.m[..n], &mut self.v[..n], &grad[..n]);
        for i in 0..n {
            m[i] = b1 * m[i] + one_b1 * g[i];
            v[i] = b2 * v[i] + one_b2 * g[i] * g[i];
            params[i] -= step * m[i] / ((v[i] * inv_c2).sqrt() + self.eps);
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_leaves_parameters() {
        let mut a = AdamState::new(3, 0.1);
        let mut p = vec![1.0, -2.0, 3.0];
        a.step(&mut p, &[0.0; 3]).unwrap();
        assert_eq!(p, vec![1.0, -2.0, 3.0]);
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        let mut a = AdamState::new(2, 0.01);
        let mut p: Vec<f64> = vec![0.0, 0.0];
        a.step(&mut p, &[3.0, -0.5]).unwrap();
        assert!((p[0] + 0.01).abs() < 1e-9);
        assert!((p[1] - 0.01).abs() < 1e-9);
    }

    #[test]
    fn quadratic_bowl_converges() {
        let mut a = AdamState::new(2, 0.1);
        let mut x = vec![1.0, 1.0];
        let mut norms = Vec::new();
        for _ in 0..100 {
            let g: Vec<f64> = x.iter().map(|v| 2.0 * v).collect();
            a.step(&mut x, &g).unwrap();
            norms.push(x.iter().map(|v| v * v).sum::<f64>().sqrt());
        }
        // burn-in: Adam steps ~lr each, so the first ~10 steps shrink monotonically
        for w in norms[..10].windows(2) {
            assert!(w[1] < w[0]);
        }
        assert!(*norms.last().unwrap() < 0.1 * 2f64.sqrt());
    }

    #[test]
    fn rejects_non_finite_and_bad_shapes() {
        let mut a = AdamState::new(1, 0.1);
        let mut p = vec![0.0];
        assert!(matches!(a.step(&mut p, &[f64::NAN]), Err(Error::NonFiniteGradient { .. })));
        assert!(a.step(&mut p, &[1.0, 2.0]).is_err());
        assert_eq!(a.t, 0);
    }
}
