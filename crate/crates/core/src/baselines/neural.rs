//! Mini-batch Adam training shared by the MLP and LSTM baselines.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{Adam, Graph, ParamId, ParamStore, Tensor2, Var};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NeuralSchedule {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
}

impl Default for NeuralSchedule {
    fn default() -> Self {
        Self {
            epochs: 200,
            batch_size: 8,
            learning_rate: 1e-3,
        }
    }
}

impl NeuralSchedule {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 || !(self.learning_rate > 0.0) {
            return Err(Error::Config("batch size and learning rate must be positive".into()));
        }
        Ok(())
    }
}

/// A fully connected layer `x W + b`.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Dense {
    pub w: ParamId,
    pub b: ParamId,
}

impl Dense {
    pub fn new(store: &mut ParamStore, name: &str, fan_in: usize, fan_out: usize, rng: &mut ChaCha8Rng) -> Result<Self> {
        Ok(Self {
            w: store.insert(format!("{name}.w"), Tensor2::glorot(fan_in, fan_out, fan_in, fan_out, rng))?,
            b: store.insert(format!("{name}.b"), Tensor2::zeros(1, fan_out))?,
        })
    }

    pub fn lookup(store: &ParamStore, name: &str) -> Result<Self> {
        Ok(Self {
            w: store.expect_id(&format!("{name}.w"))?,
            b: store.expect_id(&format!("{name}.b"))?,
        })
    }

    pub fn apply(&self, g: &mut Graph, store: &ParamStore, x: Var) -> Result<Var> {
        let w = g.param(store, self.w);
        let b = g.param(store, self.b);
        let z = g.matmul(x, w)?;
        g.add_row(z, b)
    }
}

/// Stacks feature rows into a batch matrix.
pub(crate) fn batch_matrix(rows: &[&[f64]]) -> Result<Tensor2> {
    let cols = rows.first().map(|r| r.len()).unwrap_or(0);
    let mut data = Vec::with_capacity(rows.len() * cols);
    for r in rows {
        data.extend_from_slice(r);
    }
    Tensor2::from_vec(rows.len(), cols, data)
}

/// Trains `store` with Adam on MSE. `forward` maps a batch of input rows to
/// a (batch × 1) prediction. Returns the mean loss per epoch.
pub(crate) fn train<F>(
    store: &mut ParamStore,
    inputs: &[Vec<f64>],
    targets: &[f64],
    schedule: &NeuralSchedule,
    seed: u64,
    forward: F,
) -> Result<Vec<f64>>
where
    F: Fn(&mut Graph, &ParamStore, &[&[f64]]) -> Result<Var>,
{
    schedule.validate()?;
    if inputs.is_empty() || inputs.len() != targets.len() {
        return Err(Error::EmptyInput(format!(
            "{} inputs for {} targets",
            inputs.len(),
            targets.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut adam = Adam::new(schedule.learning_rate);
    let mut order: Vec<usize> = (0..inputs.len()).collect();
    let mut curve = Vec::with_capacity(schedule.epochs);
    for epoch in 0..schedule.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for batch in order.chunks(schedule.batch_size) {
            let rows: Vec<&[f64]> = batch.iter().map(|&i| inputs[i].as_slice()).collect();
            let y: Vec<f64> = batch.iter().map(|&i| targets[i]).collect();
            let mut g = Graph::new();
            let pred = forward(&mut g, store, &rows)?;
            let loss = g.mse(pred, Tensor2::column(&y)?)?;
            let value = g.scalar(loss);
            if !value.is_finite() {
                return Err(Error::Numeric(format!("training loss at epoch {epoch}")));
            }
            g.backward(loss)?;
            store.zero_grads();
            g.accumulate_into(store)?;
            adam.step(store)?;
            total += value * batch.len() as f64;
        }
        curve.push(total / inputs.len() as f64);
    }
    Ok(curve)
}
