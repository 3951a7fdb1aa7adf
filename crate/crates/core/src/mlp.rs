//! Dense feed-forward base learners stored as one flat parameter vector.

use crate::error::{Error, Result};
use crate::rng::SeededRng;
use crate::scalar::Real;
use crate::tape::{Tape, Var};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Activation {
    Sigmoid,
    Tanh,
    Identity,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Layer {
    pub width: usize,
    pub activation: Activation,
}

impl Layer {
    pub fn new(width: usize, activation: Activation) -> Self {
        Self { width, activation }
    }
}

/// Layer stack; the last entry is the output layer.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MlpSpec {
    pub input: usize,
    pub layers: Vec<Layer>,
}

/// Offsets of one layer inside the flat parameter vector.
#[derive(Clone, Copy, Debug)]
struct Slot {
    inp: usize,
    out: usize,
    w: usize,
    b: usize,
    activation: Activation,
}

impl MlpSpec {
    /// `dim -> 400 sigmoid -> 400 tanh -> 400 tanh -> dim`.
    pub fn precoder(dim: usize, hidden: usize) -> Self {
        Self {
            input: dim,
            layers: vec![
                Layer::new(hidden, Activation::Sigmoid),
                Layer::new(hidden, Activation::Tanh),
                Layer::new(hidden, Activation::Tanh),
                Layer::new(dim, Activation::Identity),
            ],
        }
    }

    /// Four hidden layers, the last without activation, then the output.
    pub fn four_hidden(dim: usize, hidden: usize) -> Self {
        Self {
            input: dim,
            layers: vec![
                Layer::new(hidden, Activation::Sigmoid),
                Layer::new(hidden, Activation::Tanh),
                Layer::new(hidden, Activation::Tanh),
                Layer::new(hidden, Activation::Identity),
                Layer::new(dim, Activation::Identity),
            ],
        }
    }

    pub fn output(&self) -> usize {
        self.layers.last().map_or(self.input, |l| l.width)
    }

    pub fn param_count(&self) -> usize {
        self.slots().last().map_or(0, |s| s.b + s.out)
    }

    fn slots(&self) -> Vec<Slot> {
        let mut slots = Vec::with_capacity(self.layers.len());
        let (mut inp, mut off) = (self.input, 0);
        for l in &self.layers {
            let w = off;
            let b = w + l.width * inp;
            slots.push(Slot { inp, out: l.width, w, b, activation: l.activation });
            off = b + l.width;
            inp = l.width;
        }
        slots
    }

    pub fn validate(&self) -> Result<()> {
        if self.input == 0 || self.layers.iter().any(|l| l.width == 0) {
            return Err(Error::InvalidArgument("MLP layer widths must be positive".into()));
        }
        Ok(())
    }
}

/// Flat parameters: per layer, the row-major weight matrix then the bias.
#[derive(Clone, Debug, PartialEq)]
pub struct MlpParams<T> {
    pub flat: Vec<T>,
}

impl<T: Real> MlpParams<T> {
    pub fn zeros(spec: &MlpSpec) -> Self {
        Self { flat: vec![T::zero(); spec.param_count()] }
    }

    /// Weights uniform in `±sqrt(6 / (fan_in + fan_out))`, biases zero.
    pub fn glorot(spec: &MlpSpec, rng: &mut SeededRng) -> Self {
        let mut flat = vec![T::zero(); spec.param_count()];
        for s in spec.slots() {
            let limit = (6.0 / (s.inp + s.out) as f64).sqrt();
            for w in &mut flat[s.w..s.b] {
                *w = rng.uniform(T::of(-limit), T::of(limit));
            }
        }
        Self { flat }
    }

    /// Weight matrix of layer `layer` as `(rows, cols, row-major slice)`.
    pub fn weights(&self, spec: &MlpSpec, layer: usize) -> (usize, usize, &[T]) {
        let s = spec.slots()[layer];
        (s.out, s.inp, &self.flat[s.w..s.b])
    }
}

pub fn mlp_init<T: Real>(spec: &MlpSpec, rng: &mut SeededRng) -> MlpParams<T> {
    MlpParams::glorot(spec, rng)
}

fn activate<T: Real>(a: Activation, x: T) -> T {
    match a {
        Activation::Sigmoid => T::one() / (T::one() + (-x).exp()),
        Activation::Tanh => x.tanh(),
        Activation::Identity => x,
    }
}

/// Plain forward pass.
pub fn mlp_forward<T: Real>(params: &MlpParams<T>, spec: &MlpSpec, x: &[T]) -> Result<Vec<T>> {
    if x.len() != spec.input {
        return Err(Error::ShapeMismatch { expected: spec.input, got: x.len() });
    }
    if params.flat.len() != spec.param_count() {
        return Err(Error::ShapeMismatch { expected: spec.param_count(), got: params.flat.len() });
    }
    let mut h = x.to_vec();
    for s in spec.slots() {
        let p = &params.flat;
        h = (0..s.out)
            .map(|o| {
                let row = &p[s.w + o * s.inp..s.w + (o + 1) * s.inp];
                let z = row.iter().zip(&h).fold(p[s.b + o], |acc, (&w, &xi)| acc + w * xi);
                activate(s.activation, z)
            })
            .collect();
    }
    Ok(h)
}

/// Records the forward pass on `tape`, reading weights from the flat node `theta`.
pub fn mlp_record<T: Real>(tape: &mut Tape<T>, spec: &MlpSpec, theta: Var, x: Var) -> Result<Var> {
    if tape.value(x).len() != spec.input {
        return Err(Error::ShapeMismatch { expected: spec.input, got: tape.value(x).len() });
    }
    if tape.value(theta).len() != spec.param_count() {
        return Err(Error::ShapeMismatch { expected: spec.param_count(), got: tape.value(theta).len() });
    }
    let mut h = x;
    for s in spec.slots() {
        let z = tape.affine(theta, s.w, s.b, h, s.out, s.inp);
        h = match s.activation {
            Activation::Sigmoid => tape.sigmoid(z),
            Activation::Tanh => tape.tanh(z),
            Activation::Identity => z,
        };
    }
    Ok(h)
}
