//! Single-instance meta-learning: MLPs map a frozen gradient to additive
//! updates of the optimization variables and are trained by Adam on the loss.

use std::collections::hash_map::DefaultHasher;
use std::hash::{Hash, Hasher};

use crate::adam::AdamState;
use crate::error::{Error, Result};
use crate::mlp::{mlp_record, MlpParams, MlpSpec};
use crate::rates::PrecoderMatrix;
use crate::rng::SeededRng;
use crate::scalar::Real;
use crate::tape::{Tape, Var};

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Projection<T> {
    Identity,
    /// Rescale onto `‖x‖² ≤ budget` when outside.
    Power(T),
}

#[derive(Clone, Debug, PartialEq)]
pub enum MlpInit<T> {
    Glorot,
    /// All weights zero, so the first update is zero.
    Zero,
    Given(MlpParams<T>),
}

/// One optimization variable and its base learner.
#[derive(Clone, Debug)]
pub struct MetaVariable<T> {
    pub initial: Vec<T>,
    pub spec: MlpSpec,
    pub learning_rate: T,
    pub projection: Projection<T>,
    pub init: MlpInit<T>,
}

impl<T: Real> MetaVariable<T> {
    pub fn new(initial: Vec<T>, spec: MlpSpec, learning_rate: T) -> Self {
        Self { initial, spec, learning_rate, projection: Projection::Identity, init: MlpInit::Glorot }
    }

    pub fn with_projection(mut self, projection: Projection<T>) -> Self {
        self.projection = projection;
        self
    }

    pub fn with_init(mut self, init: MlpInit<T>) -> Self {
        self.init = init;
        self
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MetaOutcome<T> {
    /// Loss at the projected starting point.
    pub initial_loss: T,
    pub best_loss: T,
    pub best: Vec<Vec<T>>,
    /// Loss of each iterate, one entry per iteration.
    pub loss_trace: Vec<T>,
    /// Buffered best loss after each iteration.
    pub best_trace: Vec<T>,
    pub input_gradients: Vec<Vec<T>>,
    /// Hash of the input gradients, taken before the first and after the last iteration.
    pub input_checksum: u64,
    pub final_params: Vec<MlpParams<T>>,
}

fn checksum<T: Real>(gs: &[Vec<T>]) -> u64 {
    let mut h = DefaultHasher::new();
    for g in gs {
        g.len().hash(&mut h);
        for v in g {
            v.to_f64_lossy().to_bits().hash(&mut h);
        }
    }
    h.finish()
}

fn project<T: Real>(tape: &mut Tape<T>, x: Var, projection: Projection<T>) -> Var {
    match projection {
        Projection::Identity => x,
        Projection::Power(budget) => tape.project_power(x, budget),
    }
}

/// Runs `iterations` meta-learning steps over any number of variables.
///
/// `loss` records the objective for the given variable nodes and returns the
/// scalar loss node. Every iteration is recorded on the same tape past a
/// fixed prefix holding the MLP weights and the input gradients.
pub fn meta_optimize<T, F>(
    vars: Vec<MetaVariable<T>>,
    iterations: usize,
    rng: &mut SeededRng,
    mut loss: F,
) -> Result<MetaOutcome<T>>
where
    T: Real,
    F: FnMut(&mut Tape<T>, &[Var]) -> Result<Var>,
{
    if iterations == 0 {
        return Err(Error::InvalidArgument("iteration count must be at least 1".into()));
    }
    if vars.is_empty() {
        return Err(Error::InvalidArgument("no variables to optimize".into()));
    }
    for v in &vars {
        v.spec.validate()?;
        if v.spec.input != v.initial.len() || v.spec.output() != v.initial.len() {
            return Err(Error::ShapeMismatch { expected: v.initial.len(), got: v.spec.input });
        }
        if v.initial.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFiniteInput("initial variable"));
        }
    }

    // loss and input gradients at the projected start
    let (initial_loss, start, input_gradients) = {
        let mut tape = Tape::new();
        let leaves: Vec<Var> = vars.iter().map(|v| tape.leaf(v.initial.clone())).collect();
        let xs: Vec<Var> = leaves.iter().zip(&vars).map(|(&l, v)| project(&mut tape, l, v.projection)).collect();
        let l = loss(&mut tape, &xs)?;
        let value = tape.scalar(l);
        if !value.is_finite() {
            return Err(Error::NonFiniteLoss { iteration: 0, value: value.to_f64_lossy() });
        }
        let grads = tape.backward(l);
        let mut gs = Vec::with_capacity(vars.len());
        for (slot, &leaf) in leaves.iter().enumerate() {
            let g = grads.wrt(leaf).map(<[T]>::to_vec).unwrap_or_else(|| vec![T::zero(); vars[slot].initial.len()]);
            if g.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFiniteGradient { slot });
            }
            gs.push(g);
        }
        let start: Vec<Vec<T>> = xs.iter().map(|&x| tape.value(x).to_vec()).collect();
        (value, start, gs)
    };
    let input_checksum = checksum(&input_gradients);

    let mut tape = Tape::new();
    let mut thetas = Vec::with_capacity(vars.len());
    let mut adams = Vec::with_capacity(vars.len());
    for v in &vars {
        let params = match &v.init {
            MlpInit::Glorot => MlpParams::glorot(&v.spec, rng),
            MlpInit::Zero => MlpParams::zeros(&v.spec),
            MlpInit::Given(p) => {
                if p.flat.len() != v.spec.param_count() {
                    return Err(Error::ShapeMismatch { expected: v.spec.param_count(), got: p.flat.len() });
                }
                p.clone()
            }
        };
        adams.push(AdamState::new(params.flat.len(), v.learning_rate));
        thetas.push(tape.leaf(params.flat));
    }
    let inputs: Vec<Var> = input_gradients.iter().map(|g| tape.constant(g.clone())).collect();
    let mark = tape.len();

    let mut best_loss = initial_loss;
    let mut best = start;
    let mut loss_trace = Vec::with_capacity(iterations);
    let mut best_trace = Vec::with_capacity(iterations);

    for it in 1..=iterations {
        tape.truncate(mark);
        let mut xs = Vec::with_capacity(vars.len());
        for (i, v) in vars.iter().enumerate() {
            let update = mlp_record(&mut tape, &v.spec, thetas[i], inputs[i])?;
            let x = tape.offset(update, &v.initial);
            xs.push(project(&mut tape, x, v.projection));
        }
        let l = loss(&mut tape, &xs)?;
        let value = tape.scalar(l);
        if !value.is_finite() {
            return Err(Error::NonFiniteLoss { iteration: it, value: value.to_f64_lossy() });
        }
        if value < best_loss {
            best_loss = value;
            best = xs.iter().map(|&x| tape.value(x).to_vec()).collect();
        }
        loss_trace.push(value);
        best_trace.push(best_loss);

        let grads = tape.backward(l);
        for (slot, (&theta, adam)) in thetas.iter().zip(adams.iter_mut()).enumerate() {
            let g = match grads.wrt(theta) {
                Some(g) => g,
                None => continue,
            };
            adam.step(tape.leaf_value_mut(theta), g).map_err(|e| match e {
                Error::NonFiniteGradient { .. } => Error::NonFiniteGradient { slot },
                other => other,
            })?;
        }
    }

    let after = checksum(&input_gradients);
    debug_assert_eq!(after, input_checksum);
    if after != input_checksum {
        return Err(Error::InvalidArgument("input gradient changed during the run".into()));
    }
    let final_params = thetas.iter().map(|&t| MlpParams { flat: tape.value(t).to_vec() }).collect();
    Ok(MetaOutcome {
        initial_loss,
        best_loss,
        best,
        loss_trace,
        best_trace,
        input_gradients,
        input_checksum,
        final_params,
    })
}

/// [`meta_optimize`] over one variable.
pub fn meta_optimize_single<T, F>(
    var: MetaVariable<T>,
    iterations: usize,
    rng: &mut SeededRng,
    mut loss: F,
) -> Result<MetaOutcome<T>>
where
    T: Real,
    F: FnMut(&mut Tape<T>, Var) -> Result<Var>,
{
    meta_optimize(vec![var], iterations, rng, |tape, xs| loss(tape, xs[0]))
}

/// [`meta_optimize`] over two variables sharing one joint loss.
pub fn meta_optimize_dual<T, F>(
    first: MetaVariable<T>,
    second: MetaVariable<T>,
    iterations: usize,
    rng: &mut SeededRng,
    mut loss: F,
) -> Result<MetaOutcome<T>>
where
    T: Real,
    F: FnMut(&mut Tape<T>, Var, Var) -> Result<Var>,
{
    meta_optimize(vec![first, second], iterations, rng, |tape, xs| loss(tape, xs[0], xs[1]))
}

/// Scales `p` onto its power budget when it exceeds it.
pub fn project_power<T: Real>(p: &PrecoderMatrix<T>) -> PrecoderMatrix<T> {
    let power = p.power();
    if power <= p.power_budget {
        return p.clone();
    }
    let mut out = p.clone();
    out.data = p.data.scale((p.power_budget / power).sqrt());
    out
}
