//! Sinusoidal positional encoding and (multi-head) scaled dot-product attention.

use crate::error::{Error, Result};
use crate::nn::{Graph, ParamId, ParamStore, Tensor2, Var};

/// `PE(pos, 2i) = sin(pos / 10000^(2i/d))`, `PE(pos, 2i+1) = cos(pos / 10000^(2i/d))`.
pub fn positional_encoding(seq_length: usize, d_model: usize) -> Result<Tensor2> {
    if d_model == 0 || d_model % 2 != 0 {
        return Err(Error::Config(format!(
            "positional encoding needs an even width, got {d_model}"
        )));
    }
    let mut pe = Tensor2::zeros(seq_length.max(1), d_model);
    for pos in 0..seq_length {
        for i in 0..d_model / 2 {
            let angle = pos as f64 / 10000f64.powf(2.0 * i as f64 / d_model as f64);
            pe.set(pos, 2 * i, angle.sin());
            pe.set(pos, 2 * i + 1, angle.cos());
        }
    }
    Ok(pe)
}

/// Projection ids of one attention block.
#[derive(Debug, Clone, Copy)]
pub(crate) struct AttentionIds {
    pub q: ParamId,
    pub k: ParamId,
    pub v: ParamId,
    pub o: ParamId,
}

/// `softmax(Q Kᵀ / √d) V` on the tape; returns output and the weight matrix.
pub(crate) fn attend(g: &mut Graph, q: Var, k: Var, v: Var, causal: bool) -> Result<(Var, Var)> {
    let d = g.value(q).cols();
    if g.value(k).cols() != d {
        return Err(Error::Shape(format!(
            "query width {d} vs key width {}",
            g.value(k).cols()
        )));
    }
    if g.value(k).rows() != g.value(v).rows() {
        return Err(Error::Shape(format!(
            "{} keys vs {} values",
            g.value(k).rows(),
            g.value(v).rows()
        )));
    }
    let scores = g.matmul_nt(q, k)?;
    let scores = g.scale(scores, 1.0 / (d as f64).sqrt());
    let weights = g.softmax(scores, causal);
    Ok((g.matmul(weights, v)?, weights))
}

/// Multi-head attention with queries from `q_in` and keys/values from `kv_in`.
/// Attention weight matrices are appended to `maps` when given.
pub(crate) fn multi_head(
    g: &mut Graph,
    store: &ParamStore,
    ids: &AttentionIds,
    q_in: Var,
    kv_in: Var,
    head_count: usize,
    causal: bool,
    mut maps: Option<&mut Vec<Var>>,
) -> Result<Var> {
    let d_model = g.value(q_in).cols();
    if head_count == 0 || d_model % head_count != 0 {
        return Err(Error::Config(format!(
            "d_model {d_model} is not divisible by {head_count} heads"
        )));
    }
    let head_dim = d_model / head_count;
    let (wq, wk, wv, wo) = (
        g.param(store, ids.q),
        g.param(store, ids.k),
        g.param(store, ids.v),
        g.param(store, ids.o),
    );
    let q = g.matmul(q_in, wq)?;
    let k = g.matmul(kv_in, wk)?;
    let v = g.matmul(kv_in, wv)?;
    let mut heads = Vec::with_capacity(head_count);
    for h in 0..head_count {
        let qh = g.slice_cols(q, h * head_dim, head_dim)?;
        let kh = g.slice_cols(k, h * head_dim, head_dim)?;
        let vh = g.slice_cols(v, h * head_dim, head_dim)?;
        let (out, weights) = attend(g, qh, kh, vh, causal)?;
        if let Some(maps) = maps.as_deref_mut() {
            maps.push(weights);
        }
        heads.push(out);
    }
    let concat = if heads.len() == 1 {
        heads[0]
    } else {
        g.concat_cols(&heads)?
    };
    g.matmul(concat, wo)
}

/// Standalone scaled dot-product attention.
pub fn scaled_dot_attention(q: &Tensor2, k: &Tensor2, v: &Tensor2, causal: bool) -> Result<Tensor2> {
    let mut g = Graph::new();
    let (qv, kv, vv) = (g.constant(q.clone()), g.constant(k.clone()), g.constant(v.clone()));
    let (out, _) = attend(&mut g, qv, kv, vv, causal)?;
    Ok(g.value(out).clone())
}

/// Projection matrices for [`multi_head_attention`], each d_model × d_model.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionWeights {
    pub w_q: Tensor2,
    pub w_k: Tensor2,
    pub w_v: Tensor2,
    pub w_o: Tensor2,
}

/// Standalone multi-head self-attention over the rows of `x`.
pub fn multi_head_attention(
    x: &Tensor2,
    weights: &AttentionWeights,
    head_count: usize,
    causal: bool,
) -> Result<Tensor2> {
    let d = x.cols();
    for (name, w) in [
        ("W^Q", &weights.w_q),
        ("W^K", &weights.w_k),
        ("W^V", &weights.w_v),
        ("W^O", &weights.w_o),
    ] {
        if w.shape() != (d, d) {
            return Err(Error::Shape(format!(
                "{name} is {}x{}, expected {d}x{d}",
                w.rows(),
                w.cols()
            )));
        }
    }
    let mut store = ParamStore::new();
    let ids = AttentionIds {
        q: store.insert("q", weights.w_q.clone())?,
        k: store.insert("k", weights.w_k.clone())?,
        v: store.insert("v", weights.w_v.clone())?,
        o: store.insert("o", weights.w_o.clone())?,
    };
    let mut g = Graph::new();
    let xv = g.constant(x.clone());
    let out = multi_head(&mut g, &store, &ids, xv, xv, head_count, causal, None)?;
    Ok(g.value(out).clone())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn pe_first_row_alternates_zero_one() {
        let pe = positional_encoding(5, 8).unwrap();
        for c in 0..8 {
            assert_eq!(pe.get(0, c), if c % 2 == 0 { 0.0 } else { 1.0 });
        }
        assert!(pe.data().iter().all(|v| (-1.0..=1.0).contains(v)));
        assert!(positional_encoding(3, 5).is_err());
    }

    #[test]
    fn pe_hand_value() {
        let pe = positional_encoding(2, 4).unwrap();
        assert!((pe.get(1, 0) - 0.841_471).abs() < 1e-6);
        assert!((pe.get(1, 1) - 0.540_302).abs() < 1e-6);
        // i = 1: 1 / 10000^(2/4) = 0.01
        assert!((pe.get(1, 2) - 0.01f64.sin()).abs() < 1e-15);
    }

    #[test]
    fn single_key_returns_value() {
        let q = Tensor2::from_rows(&[vec![3.0, -1.0], vec![0.2, 0.5]]).unwrap();
        let k = Tensor2::from_rows(&[vec![1.0, 1.0]]).unwrap();
        let v = Tensor2::from_rows(&[vec![0.7, -0.3, 2.0]]).unwrap();
        let out = scaled_dot_attention(&q, &k, &v, false).unwrap();
        for r in 0..2 {
            assert_eq!(out.row(r), v.row(0));
        }
    }

    #[test]
    fn identical_values_pass_through() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let q = Tensor2::glorot(4, 3, 1, 1, &mut rng);
        let k = Tensor2::glorot(6, 3, 1, 1, &mut rng);
        let v = Tensor2::from_rows(&vec![vec![0.25, -1.5]; 6]).unwrap();
        let out = scaled_dot_attention(&q, &k, &v, false).unwrap();
        for r in 0..4 {
            assert!((out.get(r, 0) - 0.25).abs() < 1e-14);
            assert!((out.get(r, 1) + 1.5).abs() < 1e-14);
        }
    }

    #[test]
    fn two_by_two_matches_brute_force() {
        let i = Tensor2::identity(2);
        let out = scaled_dot_attention(&i, &i, &i, false).unwrap();
        let s = 1.0 / 2f64.sqrt();
        let (a, b) = (s.exp(), 1.0);
        let hi = a / (a + b);
        let lo = b / (a + b);
        assert!((out.get(0, 0) - hi).abs() < 1e-15);
        assert!((out.get(0, 1) - lo).abs() < 1e-15);
        assert!((out.get(1, 0) - lo).abs() < 1e-15);
        assert!((out.get(1, 1) - hi).abs() < 1e-15);
    }

    #[test]
    fn mismatched_shapes_rejected() {
        let a = Tensor2::zeros(2, 3);
        let b = Tensor2::zeros(2, 4);
        assert!(scaled_dot_attention(&a, &b, &b, false).is_err());
        assert!(scaled_dot_attention(&a, &a, &Tensor2::zeros(3, 3), false).is_err());
    }

    fn random_weights(d: usize, rng: &mut ChaCha8Rng) -> AttentionWeights {
        AttentionWeights {
            w_q: Tensor2::glorot(d, d, d, d, rng),
            w_k: Tensor2::glorot(d, d, d, d, rng),
            w_v: Tensor2::glorot(d, d, d, d, rng),
            w_o: Tensor2::glorot(d, d, d, d, rng),
        }
    }

    #[test]
    fn one_head_with_identity_output_is_plain_attention() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let x = Tensor2::glorot(5, 4, 1, 1, &mut rng);
        let mut w = random_weights(4, &mut rng);
        w.w_o = Tensor2::identity(4);
        let mha = multi_head_attention(&x, &w, 1, false).unwrap();
        let q = x.matmul(&w.w_q).unwrap();
        let k = x.matmul(&w.w_k).unwrap();
        let v = x.matmul(&w.w_v).unwrap();
        let direct = scaled_dot_attention(&q, &k, &v, false).unwrap();
        assert!(mha.max_abs_diff(&direct) < 1e-15);
    }

    #[test]
    fn zero_output_projection_gives_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let x = Tensor2::glorot(5, 4, 1, 1, &mut rng);
        let mut w = random_weights(4, &mut rng);
        w.w_o = Tensor2::zeros(4, 4);
        let out = multi_head_attention(&x, &w, 2, false).unwrap();
        assert!(out.data().iter().all(|v| *v == 0.0));
        assert!(matches!(
            multi_head_attention(&x, &w, 3, false),
            Err(Error::Config(_))
        ));
    }

    fn permute_rows(x: &Tensor2, perm: &[usize]) -> Tensor2 {
        let rows: Vec<Vec<f64>> = perm.iter().map(|&p| x.row(p).to_vec()).collect();
        Tensor2::from_rows(&rows).unwrap()
    }

    #[test]
    fn permutation_equivariant_without_position() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let x = Tensor2::glorot(6, 8, 1, 1, &mut rng);
        let w = random_weights(8, &mut rng);
        let perm = [3, 0, 5, 1, 4, 2];
        let out = multi_head_attention(&x, &w, 4, false).unwrap();
        let out_perm = multi_head_attention(&permute_rows(&x, &perm), &w, 4, false).unwrap();
        assert!(out_perm.max_abs_diff(&permute_rows(&out, &perm)) < 1e-12);

        // adding positional encoding breaks the symmetry
        let pe = positional_encoding(6, 8).unwrap();
        let with_pe = |t: &Tensor2| t.zip_map(&pe, |a, b| a + b).unwrap();
        let a = multi_head_attention(&with_pe(&x), &w, 4, false).unwrap();
        let b = multi_head_attention(&with_pe(&permute_rows(&x, &perm)), &w, 4, false).unwrap();
        assert!(b.max_abs_diff(&permute_rows(&a, &perm)) > 1e-6);
    }
}
