use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::neural::{batch_matrix, train, Dense, NeuralSchedule};
use crate::error::{Error, Result};
use crate::nn::{Graph, ParamStore, Var};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpParams {
    /// Hidden ReLU layer widths; a single sigmoid unit follows.
    pub hidden: Vec<usize>,
    #[serde(flatten)]
    pub schedule: NeuralSchedule,
}

impl Default for MlpParams {
    fn default() -> Self {
        Self {
            hidden: vec![16, 16],
            schedule: NeuralSchedule::default(),
        }
    }
}

impl MlpParams {
    pub fn validate(&self) -> Result<()> {
        if self.hidden.contains(&0) {
            return Err(Error::Config("hidden layers need at least one unit".into()));
        }
        self.schedule.validate()
    }
}

/// ReLU hidden layers with a sigmoid output unit.
#[derive(Debug, Clone)]
pub struct Mlp {
    pub(crate) store: ParamStore,
    layers: Vec<Dense>,
    input_dim: usize,
}

impl Mlp {
    pub fn new(input_dim: usize, params: &MlpParams, seed: u64) -> Result<Self> {
        params.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let mut layers = Vec::new();
        let mut fan_in = input_dim;
        for (i, &units) in params.hidden.iter().chain(std::iter::once(&1)).enumerate() {
            layers.push(Dense::new(&mut store, &format!("dense{i}"), fan_in, units, &mut rng)?);
            fan_in = units;
        }
        Ok(Self {
            store,
            layers,
            input_dim,
        })
    }

    pub(crate) fn from_store(store: ParamStore, input_dim: usize, hidden: &[usize]) -> Result<Self> {
        let layers = (0..=hidden.len())
            .map(|i| Dense::lookup(&store, &format!("dense{i}")))
            .collect::<Result<Vec<_>>>()?;
        let mut fan_in = input_dim;
        for (layer, units) in layers.iter().zip(hidden.iter().chain(std::iter::once(&1))) {
            if store.value(layer.w).shape() != (fan_in, *units) {
                return Err(Error::Artifact("MLP weights do not match the configuration".into()));
            }
            fan_in = *units;
        }
        Ok(Self {
            store,
            layers,
            input_dim,
        })
    }

    pub fn params(&self) -> &ParamStore {
        &self.store
    }

    pub fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.store
    }

    pub(crate) fn graph(layers: &[Dense], g: &mut Graph, store: &ParamStore, x: Var) -> Result<Var> {
        let mut h = x;
        for (i, layer) in layers.iter().enumerate() {
            h = layer.apply(g, store, h)?;
            h = if i + 1 == layers.len() { g.sigmoid(h) } else { g.relu(h) };
        }
        Ok(h)
    }

    /// Network output for a batch of rows on `g`.
    pub fn forward(&self, g: &mut Graph, store: &ParamStore, rows: &[&[f64]]) -> Result<Var> {
        if rows.iter().any(|r| r.len() != self.input_dim) {
            return Err(Error::Shape(format!("MLP expects {} features", self.input_dim)));
        }
        let x = g.constant(batch_matrix(rows)?);
        Self::graph(&self.layers, g, store, x)
    }

    pub fn fit(&mut self, inputs: &[Vec<f64>], targets: &[f64], schedule: &NeuralSchedule, seed: u64) -> Result<Vec<f64>> {
        let layers = self.layers.clone();
        let dim = self.input_dim;
        train(&mut self.store, inputs, targets, schedule, seed, |g, store, rows| {
            if rows.iter().any(|r| r.len() != dim) {
                return Err(Error::Shape(format!("MLP expects {dim} features")));
            }
            let x = g.constant(batch_matrix(rows)?);
            Self::graph(&layers, g, store, x)
        })
    }

    pub fn predict(&self, x: &[f64]) -> Result<f64> {
        let mut g = Graph::new();
        let out = self.forward(&mut g, &self.store, &[x])?;
        Ok(g.scalar(out))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{grad_check, Tensor2};
    use rand::Rng;

    fn data(n: usize) -> (Vec<Vec<f64>>, Vec<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x: Vec<Vec<f64>> = (0..n).map(|_| (0..4).map(|_| rng.random()).collect()).collect();
        let y = x.iter().map(|r| 0.2 + 0.5 * r[0] * r[1]).collect();
        (x, y)
    }

    #[test]
    fn zero_network_outputs_half() {
        let mut m = Mlp::new(4, &MlpParams::default(), 1).unwrap();
        let ids: Vec<_> = m.store.ids().collect();
        for id in ids {
            m.store.value_mut(id).fill(0.0);
        }
        assert_eq!(m.predict(&[0.3, -2.0, 5.0, 1.0]).unwrap(), 0.5);
    }

    #[test]
    fn table_configuration_gradients() {
        let m = Mlp::new(26, &MlpParams::default(), 2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let rows: Vec<Vec<f64>> = (0..8).map(|_| (0..26).map(|_| rng.random()).collect()).collect();
        let y: Vec<f64> = (0..8).map(|_| rng.random()).collect();
        let mut store = m.store.clone();
        let err = grad_check(&mut store, 300, 4, |g, s| {
            let refs: Vec<&[f64]> = rows.iter().map(|r| r.as_slice()).collect();
            let out = m.forward(g, s, &refs)?;
            g.mse(out, Tensor2::column(&y)?)
        })
        .unwrap();
        assert!(err < 1e-4, "{err}");
    }

    #[test]
    fn training_is_deterministic_and_bounded() {
        let (x, y) = data(40);
        let schedule = NeuralSchedule {
            epochs: 30,
            ..Default::default()
        };
        let mut a = Mlp::new(4, &MlpParams::default(), 7).unwrap();
        let mut b = Mlp::new(4, &MlpParams::default(), 7).unwrap();
        let curve = a.fit(&x, &y, &schedule, 7).unwrap();
        b.fit(&x, &y, &schedule, 7).unwrap();
        assert_eq!(a.store.fingerprint(), b.store.fingerprint());
        assert!(curve.last().unwrap() < &curve[0]);
        for r in &x {
            let p = a.predict(r).unwrap();
            assert!(p > 0.0 && p < 1.0);
        }
    }
}
