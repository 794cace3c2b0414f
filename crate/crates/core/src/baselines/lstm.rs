//! Stacked LSTM over the load window; hour-of-day features join at the
//! dense head.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::neural::{batch_matrix, train, Dense, NeuralSchedule};
use crate::error::{Error, Result};
use crate::nn::{Graph, ParamId, ParamStore, Tensor2, Var};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LstmParams {
    pub lstm_units: Vec<usize>,
    /// Hidden ReLU dense widths before the sigmoid output unit.
    pub dense_units: Vec<usize>,
    #[serde(flatten)]
    pub schedule: NeuralSchedule,
}

impl Default for LstmParams {
    fn default() -> Self {
        Self {
            lstm_units: vec![16, 8],
            dense_units: vec![8],
            schedule: NeuralSchedule::default(),
        }
    }
}

impl LstmParams {
    pub fn validate(&self) -> Result<()> {
        if self.lstm_units.is_empty() || self.lstm_units.contains(&0) || self.dense_units.contains(&0) {
            return Err(Error::Config("LSTM needs at least one recurrent layer and non-empty layers".into()));
        }
        self.schedule.validate()
    }
}

/// Weights of one LSTM layer, gates stacked as [input, forget, candidate, output].
#[derive(Debug, Clone, Copy)]
pub struct CellIds {
    pub w_x: ParamId,
    pub w_h: ParamId,
    pub b: ParamId,
    pub units: usize,
}

/// Values of one cell step, exposed for inspection.
#[derive(Debug, Clone, Copy)]
pub struct CellStep {
    pub h: Var,
    pub c: Var,
    pub input_gate: Var,
    pub forget_gate: Var,
    pub candidate: Var,
    pub output_gate: Var,
}

/// `i, f, o = σ(·)`, `g = tanh(·)`, `c' = f⊙c + i⊙g`, `h' = o⊙tanh(c')`.
pub fn cell_step(g: &mut Graph, store: &ParamStore, ids: &CellIds, x: Var, h: Var, c: Var) -> Result<CellStep> {
    let wx = g.param(store, ids.w_x);
    let wh = g.param(store, ids.w_h);
    let b = g.param(store, ids.b);
    let zx = g.matmul(x, wx)?;
    let zh = g.matmul(h, wh)?;
    let z = g.add(zx, zh)?;
    let z = g.add_row(z, b)?;
    let u = ids.units;
    let zi = g.slice_cols(z, 0, u)?;
    let zf = g.slice_cols(z, u, u)?;
    let zg = g.slice_cols(z, 2 * u, u)?;
    let zo = g.slice_cols(z, 3 * u, u)?;
    let input_gate = g.sigmoid(zi);
    let forget_gate = g.sigmoid(zf);
    let candidate = g.tanh(zg);
    let output_gate = g.sigmoid(zo);
    let keep = g.mul(forget_gate, c)?;
    let write = g.mul(input_gate, candidate)?;
    let c = g.add(keep, write)?;
    let squashed = g.tanh(c);
    let h = g.mul(output_gate, squashed)?;
    Ok(CellStep {
        h,
        c,
        input_gate,
        forget_gate,
        candidate,
        output_gate,
    })
}

#[derive(Debug, Clone)]
pub struct Lstm {
    pub(crate) store: ParamStore,
    cells: Vec<CellIds>,
    dense: Vec<Dense>,
    seq_len: usize,
    extra: usize,
}

impl Lstm {
    /// `seq_len` loads per input followed by `extra` features for the head.
    pub fn new(seq_len: usize, extra: usize, params: &LstmParams, seed: u64) -> Result<Self> {
        params.validate()?;
        if seq_len == 0 {
            return Err(Error::Config("LSTM needs a non-empty sequence".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let mut cells = Vec::new();
        let mut fan_in = 1;
        for (l, &u) in params.lstm_units.iter().enumerate() {
            let w_x = store.insert(format!("lstm{l}.w_x"), Tensor2::glorot(fan_in, 4 * u, fan_in, u, &mut rng))?;
            let w_h = store.insert(format!("lstm{l}.w_h"), Tensor2::glorot(u, 4 * u, u, u, &mut rng))?;
            let mut bias = Tensor2::zeros(1, 4 * u);
            for j in u..2 * u {
                bias.set(0, j, 1.0);
            }
            let b = store.insert(format!("lstm{l}.b"), bias)?;
            cells.push(CellIds { w_x, w_h, b, units: u });
            fan_in = u;
        }
        let mut dense = Vec::new();
        fan_in += extra;
        for (i, &u) in params.dense_units.iter().chain(std::iter::once(&1)).enumerate() {
            dense.push(Dense::new(&mut store, &format!("dense{i}"), fan_in, u, &mut rng)?);
            fan_in = u;
        }
        Ok(Self {
            store,
            cells,
            dense,
            seq_len,
            extra,
        })
    }

    pub(crate) fn from_store(store: ParamStore, seq_len: usize, extra: usize, params: &LstmParams) -> Result<Self> {
        let template = Self::new(seq_len, extra, params, 0)?;
        for p in template.store.iter() {
            let id = store.expect_id(&p.name)?;
            if store.value(id).shape() != p.value.shape() {
                return Err(Error::Artifact(format!("LSTM tensor `{}` has the wrong shape", p.name)));
            }
        }
        Self::bind(store, template)
    }

    fn bind(store: ParamStore, template: Self) -> Result<Self> {
        let cells = template
            .cells
            .iter()
            .enumerate()
            .map(|(l, c)| {
                Ok(CellIds {
                    w_x: store.expect_id(&format!("lstm{l}.w_x"))?,
                    w_h: store.expect_id(&format!("lstm{l}.w_h"))?,
                    b: store.expect_id(&format!("lstm{l}.b"))?,
                    units: c.units,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let dense = (0..template.dense.len())
            .map(|i| Dense::lookup(&store, &format!("dense{i}")))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            store,
            cells,
            dense,
            seq_len: template.seq_len,
            extra: template.extra,
        })
    }

    pub fn params(&self) -> &ParamStore {
        &self.store
    }

    pub fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.store
    }

    pub fn cells(&self) -> &[CellIds] {
        &self.cells
    }

    fn graph(
        cells: &[CellIds],
        dense: &[Dense],
        seq_len: usize,
        extra: usize,
        g: &mut Graph,
        store: &ParamStore,
        rows: &[&[f64]],
    ) -> Result<Var> {
        if rows.iter().any(|r| r.len() != seq_len + extra) {
            return Err(Error::Shape(format!("LSTM expects {} features", seq_len + extra)));
        }
        let batch = rows.len();
        let x = g.constant(batch_matrix(rows)?);
        let mut sequence: Vec<Var> = (0..seq_len)
            .map(|t| g.slice_cols(x, t, 1))
            .collect::<Result<_>>()?;
        for cell in cells {
            let mut h = g.constant(Tensor2::zeros(batch, cell.units));
            let mut c = g.constant(Tensor2::zeros(batch, cell.units));
            let mut outputs = Vec::with_capacity(seq_len);
            for &xt in &sequence {
                let step = cell_step(g, store, cell, xt, h, c)?;
                h = step.h;
                c = step.c;
                outputs.push(h);
            }
            sequence = outputs;
        }
        let last = *sequence.last().expect("sequence is non-empty");
        let mut z = if extra > 0 {
            let side = g.slice_cols(x, seq_len, extra)?;
            g.concat_cols(&[last, side])?
        } else {
            last
        };
        for (i, layer) in dense.iter().enumerate() {
            z = layer.apply(g, store, z)?;
            z = if i + 1 == dense.len() { g.sigmoid(z) } else { g.relu(z) };
        }
        Ok(z)
    }

    pub fn forward(&self, g: &mut Graph, store: &ParamStore, rows: &[&[f64]]) -> Result<Var> {
        Self::graph(&self.cells, &self.dense, self.seq_len, self.extra, g, store, rows)
    }

    pub fn fit(&mut self, inputs: &[Vec<f64>], targets: &[f64], schedule: &NeuralSchedule, seed: u64) -> Result<Vec<f64>> {
        let (cells, dense, seq_len, extra) = (self.cells.clone(), self.dense.clone(), self.seq_len, self.extra);
        train(&mut self.store, inputs, targets, schedule, seed, |g, store, rows| {
            Self::graph(&cells, &dense, seq_len, extra, g, store, rows)
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
    use crate::nn::grad_check;
    use rand::Rng;

    fn sigmoid(x: f64) -> f64 {
        1.0 / (1.0 + (-x).exp())
    }

    #[test]
    fn zero_parameters_output_half() {
        let mut m = Lstm::new(6, 2, &LstmParams::default(), 1).unwrap();
        let ids: Vec<_> = m.store.ids().collect();
        for id in ids {
            m.store.value_mut(id).fill(0.0);
        }
        assert_eq!(m.predict(&[0.1, 0.9, 0.3, 0.5, 0.2, 0.4, 1.0, 0.0]).unwrap(), 0.5);
    }

    #[test]
    fn cell_matches_gate_equations() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let (batch, input, units) = (3, 2, 4);
        let mut store = ParamStore::new();
        let w_x = store.insert("wx", Tensor2::glorot(input, 4 * units, 1, 1, &mut rng)).unwrap();
        let w_h = store.insert("wh", Tensor2::glorot(units, 4 * units, 1, 1, &mut rng)).unwrap();
        let b = store.insert("b", Tensor2::glorot(1, 4 * units, 1, 1, &mut rng)).unwrap();
        let ids = CellIds { w_x, w_h, b, units };
        let x = Tensor2::glorot(batch, input, 1, 1, &mut rng);
        let h = Tensor2::glorot(batch, units, 1, 1, &mut rng);
        let c = Tensor2::glorot(batch, units, 1, 1, &mut rng);

        let mut g = Graph::new();
        let (xv, hv, cv) = (g.constant(x.clone()), g.constant(h.clone()), g.constant(c.clone()));
        let step = cell_step(&mut g, &store, &ids, xv, hv, cv).unwrap();

        let (wx, wh, bb) = (store.value(w_x), store.value(w_h), store.value(b));
        for r in 0..batch {
            for j in 0..units {
                let pre = |gate: usize| {
                    let col = gate * units + j;
                    let mut s = bb.get(0, col);
                    for k in 0..input {
                        s += x.get(r, k) * wx.get(k, col);
                    }
                    for k in 0..units {
                        s += h.get(r, k) * wh.get(k, col);
                    }
                    s
                };
                let (i, f, cand, o) = (sigmoid(pre(0)), sigmoid(pre(1)), pre(2).tanh(), sigmoid(pre(3)));
                let c_new = f * c.get(r, j) + i * cand;
                let h_new = o * c_new.tanh();
                assert!((g.value(step.c).get(r, j) - c_new).abs() < 1e-14);
                assert!((g.value(step.h).get(r, j) - h_new).abs() < 1e-14);
                for gate in [step.input_gate, step.forget_gate, step.output_gate] {
                    let v = g.value(gate).get(r, j);
                    assert!(v > 0.0 && v < 1.0);
                }
                assert!(g.value(step.candidate).get(r, j).abs() < 1.0);
            }
        }
    }

    #[test]
    fn single_cell_gradients() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut store = ParamStore::new();
        let ids = CellIds {
            w_x: store.insert("wx", Tensor2::glorot(2, 12, 2, 3, &mut rng)).unwrap(),
            w_h: store.insert("wh", Tensor2::glorot(3, 12, 3, 3, &mut rng)).unwrap(),
            b: store.insert("b", Tensor2::glorot(1, 12, 1, 3, &mut rng)).unwrap(),
            units: 3,
        };
        let x = Tensor2::glorot(4, 2, 1, 1, &mut rng);
        let h = Tensor2::glorot(4, 3, 1, 1, &mut rng);
        let c = Tensor2::glorot(4, 3, 1, 1, &mut rng);
        let target = Tensor2::glorot(4, 3, 1, 1, &mut rng);
        let err = grad_check(&mut store, 36, 2, |g, s| {
            let (xv, hv, cv) = (g.constant(x.clone()), g.constant(h.clone()), g.constant(c.clone()));
            let step = cell_step(g, s, &ids, xv, hv, cv)?;
            let both = g.add(step.h, step.c)?;
            g.mse(both, target.clone())
        })
        .unwrap();
        assert!(err < 1e-4, "{err}");
    }

    #[test]
    fn whole_network_gradients_and_bounds() {
        let m = Lstm::new(5, 2, &LstmParams::default(), 3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let rows: Vec<Vec<f64>> = (0..3).map(|_| (0..7).map(|_| rng.random()).collect()).collect();
        let y: Vec<f64> = (0..3).map(|_| rng.random()).collect();
        let mut store = m.store.clone();
        let err = grad_check(&mut store, 200, 5, |g, s| {
            let refs: Vec<&[f64]> = rows.iter().map(|r| r.as_slice()).collect();
            let out = m.forward(g, s, &refs)?;
            g.mse(out, Tensor2::column(&y)?)
        })
        .unwrap();
        assert!(err < 1e-4, "{err}");
        for r in &rows {
            let p = m.predict(r).unwrap();
            assert!(p > 0.0 && p < 1.0);
        }
    }
}
