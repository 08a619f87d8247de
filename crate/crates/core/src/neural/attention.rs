use super::ops::{add, gelu, layer_norm, linear, matmul, softmax_rows, LAYER_NORM_EPS};
use super::{Matrix, NeuralError, WeightBundle};

/// Parameter names used by [`multi_head_attention`] under `prefix`.
pub fn attention_param_names(prefix: &str) -> [(String, bool); 8] {
    [
        (format!("{prefix}.wq"), true),
        (format!("{prefix}.bq"), false),
        (format!("{prefix}.wk"), true),
        (format!("{prefix}.bk"), false),
        (format!("{prefix}.wv"), true),
        (format!("{prefix}.bv"), false),
        (format!("{prefix}.wo"), true),
        (format!("{prefix}.bo"), false),
    ]
}

/// Scaled dot-product attention with `heads` heads and an output projection.
///
/// Queries are `n x d`, keys and values `m x d`. Projections live at
/// `{prefix}.w{q,k,v,o}` (`d x d`) and `{prefix}.b{q,k,v,o}` (`1 x d`).
pub fn multi_head_attention(
    q: &Matrix,
    k: &Matrix,
    v: &Matrix,
    w: &WeightBundle,
    prefix: &str,
) -> Result<Matrix, NeuralError> {
    let d = w.meta().d;
    let head_dim = w.meta().head_dim()?;
    if q.cols() != d || k.cols() != d || v.cols() != d || k.rows() != v.rows() {
        return Err(NeuralError::ShapeMismatch {
            op: "multi_head_attention",
            detail: format!(
                "q {:?}, k {:?}, v {:?}, d = {d}",
                q.shape(),
                k.shape(),
                v.shape()
            ),
        });
    }
    let proj = |x: &Matrix, tag: &str| -> Result<Matrix, NeuralError> {
        linear(
            x,
            w.require(&format!("{prefix}.w{tag}"), d, d)?,
            w.require(&format!("{prefix}.b{tag}"), 1, d)?,
        )
    };
    let qp = proj(q, "q")?;
    let kp = proj(k, "k")?;
    let vp = proj(v, "v")?;

    let scale = 1.0 / (head_dim as f64).sqrt();
    let mut concat = Matrix::zeros(q.rows(), d);
    for h in 0..w.meta().heads {
        let start = h * head_dim;
        let qh = qp.col_slice(start, head_dim);
        let kh = kp.col_slice(start, head_dim);
        let vh = vp.col_slice(start, head_dim);
        let weights = softmax_rows(&matmul(&qh, &kh.transpose())?.scale(scale));
        let out = matmul(&weights, &vh)?;
        for r in 0..out.rows() {
            concat.row_mut(r)[start..start + head_dim].copy_from_slice(out.row(r));
        }
    }
    linear(
        &concat,
        w.require(&format!("{prefix}.wo"), d, d)?,
        w.require(&format!("{prefix}.bo"), 1, d)?,
    )
}

/// Position-wise `linear -> GELU -> linear` with hidden width `4d`.
/// Parameters: `{prefix}.w1` (`d x 4d`), `{prefix}.b1`, `{prefix}.w2` (`4d x d`), `{prefix}.b2`.
pub fn feed_forward(m: &Matrix, w: &WeightBundle, prefix: &str) -> Result<Matrix, NeuralError> {
    let d = m.cols();
    let hidden = 4 * d;
    let h = linear(
        m,
        w.require(&format!("{prefix}.w1"), d, hidden)?,
        w.require(&format!("{prefix}.b1"), 1, hidden)?,
    )?
    .map(gelu);
    linear(
        &h,
        w.require(&format!("{prefix}.w2"), hidden, d)?,
        w.require(&format!("{prefix}.b2"), 1, d)?,
    )
}

/// `layer_norm(x + sublayer_out)`.
pub fn add_norm(
    x: &Matrix,
    sublayer_out: &Matrix,
    gain: &[f64],
    bias: &[f64],
) -> Result<Matrix, NeuralError> {
    layer_norm(&add(x, sublayer_out)?, gain, bias, LAYER_NORM_EPS)
}

/// [`add_norm`] with gain and bias read from `{prefix}.gain` / `{prefix}.bias`.
pub fn add_norm_named(
    x: &Matrix,
    sublayer_out: &Matrix,
    w: &WeightBundle,
    prefix: &str,
) -> Result<Matrix, NeuralError> {
    let d = x.cols();
    add_norm(
        x,
        sublayer_out,
        w.require(&format!("{prefix}.gain"), 1, d)?.data(),
        w.require(&format!("{prefix}.bias"), 1, d)?.data(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neural::weights::{BundleMeta, GENERATOR_NAME};

    fn bundle(d: usize, heads: usize) -> WeightBundle {
        WeightBundle::new(BundleMeta {
            d,
            heads,
            layers: 1,
            seed: 0,
            generator: GENERATOR_NAME.into(),
            tnet_layers: 1,
            seg_encoder_blocks: 2,
        })
        .unwrap()
    }

    fn identity_attention(d: usize) -> WeightBundle {
        let mut w = bundle(d, 1);
        for (name, is_weight) in attention_param_names("att") {
            let m = if is_weight {
                Matrix::identity(d)
            } else {
                Matrix::zeros(1, d)
            };
            w.insert(&name, m);
        }
        w
    }

    #[test]
    fn single_key_returns_projected_value() {
        let w = identity_attention(4);
        let q = Matrix::from_rows(&[vec![9.0, -3.0, 0.5, 1.0], vec![0.0, 0.0, 0.0, 7.0]]).unwrap();
        let kv = Matrix::from_rows(&[vec![1.0, 2.0, 3.0, 4.0]]).unwrap();
        let out = multi_head_attention(&q, &kv, &kv, &w, "att").unwrap();
        for r in 0..2 {
            assert_eq!(out.row(r), &[1.0, 2.0, 3.0, 4.0]);
        }
    }

    #[test]
    fn hand_sized_two_by_four_against_scalar_oracle() {
        // d = 4, one head, identity projections: out_i = sum_j softmax_j(q_i.k_j / 2) v_j
        let w = identity_attention(4);
        let q = Matrix::from_rows(&[vec![1.0, 0.0, 1.0, 0.0], vec![0.0, 2.0, 0.0, -1.0]]).unwrap();
        let k = Matrix::from_rows(&[vec![1.0, 1.0, 0.0, 0.0], vec![0.0, 0.0, 1.0, 1.0]]).unwrap();
        let v = Matrix::from_rows(&[vec![1.0, 2.0, 3.0, 4.0], vec![-1.0, 0.0, 1.0, 0.5]]).unwrap();
        let out = multi_head_attention(&q, &k, &v, &w, "att").unwrap();

        let mut expect = [[0.0f64; 4]; 2];
        for i in 0..2 {
            let s: Vec<f64> = (0..2)
                .map(|j| (0..4).map(|c| q.get(i, c) * k.get(j, c)).sum::<f64>() / 2.0)
                .collect();
            let z: f64 = s.iter().map(|x| x.exp()).sum();
            for c in 0..4 {
                expect[i][c] = (0..2).map(|j| s[j].exp() / z * v.get(j, c)).sum();
            }
        }
        for i in 0..2 {
            for c in 0..4 {
                assert!((out.get(i, c) - expect[i][c]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn shape_and_head_errors() {
        let w = identity_attention(4);
        let q = Matrix::zeros(2, 3);
        assert!(matches!(
            multi_head_attention(&q, &q, &q, &w, "att"),
            Err(NeuralError::ShapeMismatch { .. })
        ));
        let k = Matrix::zeros(2, 4);
        let v = Matrix::zeros(3, 4);
        assert!(multi_head_attention(&k, &k, &v, &w, "att").is_err());
        let meta = BundleMeta { heads: 3, ..w.meta().clone() };
        assert!(matches!(meta.head_dim(), Err(NeuralError::HeadDivisibility { .. })));
    }

    #[test]
    fn zero_ffn_is_zero() {
        let mut w = bundle(2, 1);
        w.insert("ffn.w1", Matrix::zeros(2, 8));
        w.insert("ffn.b1", Matrix::zeros(1, 8));
        w.insert("ffn.w2", Matrix::zeros(8, 2));
        w.insert("ffn.b2", Matrix::zeros(1, 2));
        let x = Matrix::from_rows(&[vec![3.0, -1.0]]).unwrap();
        assert_eq!(feed_forward(&x, &w, "ffn").unwrap().data(), &[0.0, 0.0]);
    }

    #[test]
    fn ffn_hand_case() {
        // x = (1, 2); w1 has a single nonzero column mapping x0 + x1 to hidden unit 0;
        // w2 sends hidden 0 to output 1 with weight 2. out = (b2_0, 2 * gelu(3 + 0.5) + b2_1)
        let mut w = bundle(2, 1);
        let mut w1 = Matrix::zeros(2, 8);
        w1.set(0, 0, 1.0);
        w1.set(1, 0, 1.0);
        let mut b1 = Matrix::zeros(1, 8);
        b1.set(0, 0, 0.5);
        let mut w2 = Matrix::zeros(8, 2);
        w2.set(0, 1, 2.0);
        let b2 = Matrix::row_vector(&[0.25, -1.0]).unwrap();
        w.insert("ffn.w1", w1);
        w.insert("ffn.b1", b1);
        w.insert("ffn.w2", w2);
        w.insert("ffn.b2", b2);
        let x = Matrix::row_vector(&[1.0, 2.0]).unwrap();
        let out = feed_forward(&x, &w, "ffn").unwrap();
        let g = 0.5 * 3.5 * (1.0 + (0.797_884_560_802_865_4f64 * (3.5 + 0.044_715 * 3.5f64.powi(3))).tanh());
        assert_eq!(out.get(0, 0), 0.25);
        assert!((out.get(0, 1) - (2.0 * g - 1.0)).abs() < 1e-12);
    }

    #[test]
    fn add_norm_with_zero_residual_is_layer_norm() {
        let x = Matrix::from_rows(&[vec![1.0, 4.0, -2.0], vec![0.5, 0.5, 3.0]]).unwrap();
        let gain = [1.5, 0.5, 1.0];
        let bias = [0.0, 0.1, -0.2];
        let a = add_norm(&x, &Matrix::zeros(2, 3), &gain, &bias).unwrap();
        let b = layer_norm(&x, &gain, &bias, LAYER_NORM_EPS).unwrap();
        assert_eq!(a, b);
    }
}
