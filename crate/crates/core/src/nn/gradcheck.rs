//! Central finite-difference verification of tape gradients.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::nn::{Graph, ParamId, ParamStore, Var};

/// Finite-difference step.
pub const GRAD_CHECK_STEP: f64 = 1e-5;

/// Denominator floor so that near-zero gradients compare absolutely.
pub const GRAD_CHECK_FLOOR: f64 = 1e-6;

fn loss_of<F>(params: &ParamStore, forward: &F) -> Result<f64>
where
    F: Fn(&mut Graph, &ParamStore) -> Result<Var>,
{
    let mut g = Graph::new();
    let loss = forward(&mut g, params)?;
    let value = g.scalar(loss);
    if !value.is_finite() {
        return Err(Error::Numeric("loss during gradient check".into()));
    }
    Ok(value)
}

/// Compares analytic gradients to central differences on `probe_count`
/// randomly chosen scalars and returns the largest relative error
/// `|a − n| / max(|a| + |n|, floor)`.
pub fn grad_check<F>(params: &mut ParamStore, probe_count: usize, seed: u64, forward: F) -> Result<f64>
where
    F: Fn(&mut Graph, &ParamStore) -> Result<Var>,
{
    if probe_count == 0 {
        return Err(Error::Config("probe_count must be at least 1".into()));
    }
    if params.scalar_count() == 0 {
        return Err(Error::Config("no parameters to check".into()));
    }

    let mut g = Graph::new();
    let loss = forward(&mut g, params)?;
    g.backward(loss)?;
    let mut analytic: Vec<Vec<f64>> = params.iter().map(|p| vec![0.0; p.value.len()]).collect();
    for (id, grad) in g.param_grads() {
        analytic[id.index()].copy_from_slice(grad.data());
    }

    let sizes: Vec<usize> = params.iter().map(|p| p.value.len()).collect();
    let total: usize = sizes.iter().sum();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0_f64;
    for _ in 0..probe_count {
        let mut flat = rng.random_range(0..total);
        let mut pid = 0;
        while flat >= sizes[pid] {
            flat -= sizes[pid];
            pid += 1;
        }
        let id = ParamId(pid);
        let original = params.value(id).data()[flat];

        params.value_mut(id).data_mut()[flat] = original + GRAD_CHECK_STEP;
        let plus = loss_of(params, &forward);
        params.value_mut(id).data_mut()[flat] = original - GRAD_CHECK_STEP;
        let minus = loss_of(params, &forward);
        params.value_mut(id).data_mut()[flat] = original;

        let numeric = (plus? - minus?) / (2.0 * GRAD_CHECK_STEP);
        let a = analytic[pid][flat];
        let rel = (a - numeric).abs() / (a.abs() + numeric.abs()).max(GRAD_CHECK_FLOOR);
        worst = worst.max(rel);
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{Padding, Tensor2};

    fn store_with(rng: &mut ChaCha8Rng, shapes: &[(&str, usize, usize)]) -> ParamStore {
        let mut s = ParamStore::new();
        for &(name, r, c) in shapes {
            s.insert(name, Tensor2::glorot(r, c, r, c, rng)).unwrap();
        }
        s
    }

    #[test]
    fn quadratic_loss_on_linear_layer() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut s = store_with(&mut rng, &[("w", 3, 2), ("b", 1, 2)]);
        let x = Tensor2::glorot(5, 3, 1, 1, &mut rng);
        let y = Tensor2::glorot(5, 2, 1, 1, &mut rng);
        let err = grad_check(&mut s, 8, 0, |g, p| {
            let xv = g.constant(x.clone());
            let w = g.param(p, p.id("w").unwrap());
            let b = g.param(p, p.id("b").unwrap());
            let h = g.matmul(xv, w)?;
            let out = g.add_row(h, b)?;
            g.mse(out, y.clone())
        })
        .unwrap();
        assert!(err < 1e-6, "relative error {err}");
    }

    #[test]
    fn constant_loss_has_zero_error() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut s = store_with(&mut rng, &[("w", 2, 2)]);
        let err = grad_check(&mut s, 4, 0, |g, p| {
            let _ = g.param(p, p.id("w").unwrap());
            let c = g.constant(Tensor2::filled(1, 1, 3.0));
            Ok(g.mean(c))
        })
        .unwrap();
        assert_eq!(err, 0.0);
    }

    #[test]
    fn every_op_differentiates() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut s = store_with(
            &mut rng,
            &[
                ("x", 5, 4),
                ("w", 12, 4),
                ("gamma", 1, 4),
                ("beta", 1, 4),
                ("k", 5, 4),
                ("row", 1, 4),
            ],
        );
        let target = Tensor2::glorot(6, 4, 1, 1, &mut rng);
        for padding in [Padding::Centered, Padding::Causal] {
            for causal in [false, true] {
                let err = grad_check(&mut s, 60, 11, |g, p| {
                    let id = |n: &str| p.id(n).unwrap();
                    let x = g.param(p, id("x"));
                    let cols = g.im2col(x, 3, padding)?;
                    let w = g.param(p, id("w"));
                    let conv = g.matmul(cols, w)?;
                    let conv = g.tanh(conv);
                    let pooled = g.max_pool(conv, 3, padding)?;
                    let gamma = g.param(p, id("gamma"));
                    let beta = g.param(p, id("beta"));
                    let ln = g.layer_norm(pooled, gamma, beta, 1e-5)?;
                    let k = g.param(p, id("k"));
                    let scores = g.matmul_nt(ln, k)?;
                    let scores = g.scale(scores, 0.5);
                    let attn = g.softmax(scores, causal);
                    let mixed = g.matmul(attn, k)?;
                    let row = g.param(p, id("row"));
                    let biased = g.add_row(mixed, row)?;
                    let gate = g.sigmoid(biased);
                    let prod = g.mul(gate, ln)?;
                    let sum = g.add(prod, x)?;
                    let left = g.slice_cols(sum, 0, 1)?;
                    let right = g.slice_cols(sum, 1, 3)?;
                    let joined = g.concat_cols(&[right, left])?;
                    let head = g.slice_rows(joined, 0, 1)?;
                    let stacked = g.concat_rows(&[head, joined])?;
                    g.mse(stacked, target.clone())
                })
                .unwrap();
                assert!(err < 1e-4, "{padding:?} causal={causal}: {err}");
            }
        }
    }
}
