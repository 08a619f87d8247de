//! Forward passes recomputed with plain nested loops over the same weights.

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_xoshiro::Xoshiro256StarStar;
use tafs_core::affordseg::{segment, tnet};
use tafs_core::geometry::PointCloud;
use tafs_core::model::{default_bundle, ModelDims};
use tafs_core::neural::{Matrix, WeightBundle};
use tafs_core::vlm::{encode_tokens, TextEmbedding, Tokenizer};

type M = Vec<Vec<f64>>;

const EPS: f64 = 1e-5;

fn get(w: &WeightBundle, name: &str) -> M {
    let m = w.get(name).unwrap();
    m.data().chunks(m.cols()).map(<[f64]>::to_vec).collect()
}

fn lin(x: &M, w: &WeightBundle, wn: &str, bn: &str) -> M {
    let (wm, b) = (get(w, wn), get(w, bn));
    x.iter()
        .map(|row| {
            (0..b[0].len())
                .map(|j| b[0][j] + row.iter().enumerate().map(|(k, v)| v * wm[k][j]).sum::<f64>())
                .collect()
        })
        .collect()
}

fn ln(x: &M, w: &WeightBundle, prefix: &str) -> M {
    let (g, b) = (get(w, &format!("{prefix}.gain")), get(w, &format!("{prefix}.bias")));
    x.iter()
        .map(|row| {
            let n = row.len() as f64;
            let mu = row.iter().sum::<f64>() / n;
            let var = row.iter().map(|v| (v - mu).powi(2)).sum::<f64>() / n;
            let sd = if var < EPS { EPS.sqrt() } else { var.sqrt() };
            row.iter().enumerate().map(|(j, v)| (v - mu) / sd * g[0][j] + b[0][j]).collect()
        })
        .collect()
}

fn add(a: &M, b: &M) -> M {
    a.iter().zip(b).map(|(r, s)| r.iter().zip(s).map(|(x, y)| x + y).collect()).collect()
}

fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + ((2.0 / std::f64::consts::PI).sqrt() * (x + 0.044715 * x.powi(3))).tanh())
}

fn ffn(x: &M, w: &WeightBundle, p: &str) -> M {
    let h: M = lin(x, w, &format!("{p}.w1"), &format!("{p}.b1"))
        .into_iter()
        .map(|r| r.into_iter().map(gelu).collect())
        .collect();
    lin(&h, w, &format!("{p}.w2"), &format!("{p}.b2"))
}

fn mha(q: &M, kv: &M, w: &WeightBundle, p: &str) -> M {
    let heads = w.meta().heads;
    let d = w.meta().d;
    let hd = d / heads;
    let qp = lin(q, w, &format!("{p}.wq"), &format!("{p}.bq"));
    let kp = lin(kv, w, &format!("{p}.wk"), &format!("{p}.bk"));
    let vp = lin(kv, w, &format!("{p}.wv"), &format!("{p}.bv"));
    let mut out = vec![vec![0.0; d]; q.len()];
    for h in 0..heads {
        let cols = h * hd..(h + 1) * hd;
        for (i, qi) in qp.iter().enumerate() {
            let logits: Vec<f64> = kp
                .iter()
                .map(|kj| cols.clone().map(|c| qi[c] * kj[c]).sum::<f64>() / (hd as f64).sqrt())
                .collect();
            let mx = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let e: Vec<f64> = logits.iter().map(|l| (l - mx).exp()).collect();
            let z: f64 = e.iter().sum();
            for c in cols.clone() {
                out[i][c] = e.iter().zip(&vp).map(|(a, v)| a / z * v[c]).sum();
            }
        }
    }
    lin(&out, w, &format!("{p}.wo"), &format!("{p}.bo"))
}

fn block(x: &M, w: &WeightBundle, p: &str) -> M {
    let x = ln(&add(x, &mha(x, x, w, &format!("{p}.attn"))), w, &format!("{p}.ln1"));
    ln(&add(&x, &ffn(&x, w, &format!("{p}.ffn"))), w, &format!("{p}.ln2"))
}

fn mean_pool(x: &M) -> Vec<f64> {
    (0..x[0].len()).map(|j| x.iter().map(|r| r[j]).sum::<f64>() / x.len() as f64).collect()
}

fn oracle_text(ids: &[usize], w: &WeightBundle) -> Vec<f64> {
    let table = get(w, "vlm.text.embed");
    let mut x: M = ids.iter().map(|&i| table[i].clone()).collect();
    for i in 0..w.meta().layers {
        x = block(&x, w, &format!("vlm.text.block{i}"));
    }
    mean_pool(&x)
}

fn oracle_tnet(pts: &M, w: &WeightBundle) -> M {
    let relu = |m: M| -> M { m.into_iter().map(|r| r.into_iter().map(|v| v.max(0.0)).collect()).collect() };
    let h = relu(lin(pts, w, "affordseg.tnet.mlp1.w", "affordseg.tnet.mlp1.b"));
    let h = relu(lin(&h, w, "affordseg.tnet.mlp2.w", "affordseg.tnet.mlp2.b"));
    let pooled: Vec<f64> = (0..h[0].len()).map(|j| h.iter().map(|r| r[j]).fold(f64::NEG_INFINITY, f64::max)).collect();
    let r = lin(&vec![pooled], w, "affordseg.tnet.reg.w", "affordseg.tnet.reg.b");
    (0..3).map(|i| (0..3).map(|j| r[0][i * 3 + j] + if i == j { 1.0 } else { 0.0 }).collect()).collect()
}

fn oracle_segment(pts: &M, text: &[f64], w: &WeightBundle) -> Vec<f64> {
    let t = oracle_tnet(pts, w);
    let moved: M = pts.iter().map(|p| (0..3).map(|i| (0..3).map(|j| t[i][j] * p[j]).sum()).collect()).collect();
    let mut x = ln(&lin(&moved, w, "affordseg.input.w", "affordseg.input.b"), w, "affordseg.input_ln");
    for i in 0..w.meta().seg_encoder_blocks {
        let f = ffn(&x, w, &format!("affordseg.enc{i}.ffn"));
        x = ln(&add(&x, &f), w, &format!("affordseg.enc{i}.ln"));
    }
    let a = mha(&x, &vec![text.to_vec()], w, "affordseg.xattn");
    let x = ln(&add(&x, &a), w, "affordseg.xattn_ln");
    let f = ffn(&x, w, "affordseg.head.ffn");
    let x = ln(&add(&x, &f), w, "affordseg.head_ln");
    lin(&x, w, "affordseg.score.w", "affordseg.score.b")
        .into_iter()
        .map(|r| 1.0 / (1.0 + (-r[0]).exp()))
        .collect()
}

fn tokenizer() -> Tokenizer {
    Tokenizer::from_phrases(["sit on the sofa", "pour the cup", "open door", "grasp knife"])
}

/// Small bundle with every parameter (biases and gains too) randomized.
fn bundle(seed: u64) -> WeightBundle {
    let dims = ModelDims {
        d: 8,
        heads: 2,
        layers: 2,
        patch_dim: 12,
        vocab_size: tokenizer().len(),
        seg_encoder_blocks: 2,
    };
    let mut w = default_bundle(&dims, seed).unwrap();
    let mut rng = Xoshiro256StarStar::seed_from_u64(seed);
    let names: Vec<String> = w.names().map(str::to_string).collect();
    for name in names {
        let (r, c) = w.get(&name).unwrap().shape();
        let data = (0..r * c).map(|_| rng.random_range(-0.8..0.8)).collect();
        w.insert(&name, Matrix::new(r, c, data).unwrap());
    }
    w
}

fn cloud(seed: u64, n: usize) -> PointCloud {
    let mut rng = Xoshiro256StarStar::seed_from_u64(seed);
    let pts = (0..n).map(|_| [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)]).collect();
    PointCloud::new("c", pts).unwrap()
}

fn close(a: &[f64], b: &[f64], tol: f64) {
    assert_eq!(a.len(), b.len());
    for (i, (x, y)) in a.iter().zip(b).enumerate() {
        assert!((x - y).abs() <= tol, "index {i}: {x} vs {y}");
    }
}

#[test]
fn text_encoder_matches_loop_oracle() {
    let tok = tokenizer();
    for seed in 0..4 {
        let w = bundle(seed);
        let tokens: Vec<String> = ["sit", "sofa", "unheard"].iter().map(|s| s.to_string()).collect();
        let got = encode_tokens(&tokens, &tok, &w).unwrap();
        let ids: Vec<usize> = tokens.iter().map(|t| tok.id(t)).collect();
        assert_eq!(ids[2], 0);
        close(&got.vector, &oracle_text(&ids, &w), 1e-10);
    }
}

#[test]
fn tnet_matches_loop_oracle() {
    let w = bundle(7);
    let c = cloud(1, 40);
    let pts: M = c.points().iter().map(|p| p.to_vec()).collect();
    let got = tnet(&c, &w).unwrap();
    let want = oracle_tnet(&pts, &w);
    for i in 0..3 {
        close(&got[i], &want[i], 1e-10);
    }
}

#[test]
fn segmentation_matches_loop_oracle() {
    let tok = tokenizer();
    for seed in 10..13 {
        let w = bundle(seed);
        let text = encode_tokens(&["pour".into(), "cup".into()], &tok, &w).unwrap();
        let c = cloud(seed, 64);
        let pts: M = c.points().iter().map(|p| p.to_vec()).collect();
        let got = segment(&c, &text, "pour", &w).unwrap();
        close(got.scores(), &oracle_segment(&pts, &text.vector, &w), 1e-10);
    }
}

#[test]
fn single_text_key_makes_query_projection_irrelevant() {
    // with one key the softmax weight is exactly 1
    let w = bundle(3);
    let mut w2 = w.clone();
    for name in ["affordseg.xattn.wq", "affordseg.xattn.wk", "affordseg.xattn.bq"] {
        let (r, c) = w.get(name).unwrap().shape();
        w2.insert(name, Matrix::new(r, c, vec![0.37; r * c]).unwrap());
    }
    let text = TextEmbedding {
        vector: (0..8).map(|i| i as f64 / 8.0).collect(),
        tokens: vec![],
    };
    let c = cloud(5, 32);
    assert_eq!(
        segment(&c, &text, "open", &w).unwrap().scores(),
        segment(&c, &text, "open", &w2).unwrap().scores()
    );
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn segmentation_is_permutation_equivariant(seed in 0u64..1000, n in 3usize..50, rot in 1usize..49) {
        let w = bundle(seed % 5);
        let tok = tokenizer();
        let text = encode_tokens(&["open".into(), "door".into()], &tok, &w).unwrap();
        let c = cloud(seed, n);
        let order: Vec<usize> = (0..n).map(|i| (i + rot) % n).rev().collect();
        let a = segment(&c, &text, "open", &w).unwrap();
        let b = segment(&c.permuted(&order), &text, "open", &w).unwrap();
        for (j, &i) in order.iter().enumerate() {
            prop_assert!((b.scores()[j] - a.scores()[i]).abs() < 1e-12);
        }
        prop_assert!(a.scores().iter().all(|s| *s > 0.0 && *s < 1.0));
    }

    #[test]
    fn text_encoding_ignores_token_order(seed in 0u64..50) {
        // no positional encoding, mean pool: a bag-of-tokens encoder
        let w = bundle(seed);
        let tok = tokenizer();
        let a = encode_tokens(&["grasp".into(), "knife".into(), "the".into()], &tok, &w).unwrap();
        let b = encode_tokens(&["the".into(), "grasp".into(), "knife".into()], &tok, &w).unwrap();
        for (x, y) in a.vector.iter().zip(&b.vector) {
            prop_assert!((x - y).abs() < 1e-12);
        }
    }
}
