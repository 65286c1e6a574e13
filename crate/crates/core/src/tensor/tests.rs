use std::rc::Rc;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::nn::{KvCache, TransformerBlock};
use super::*;
use crate::error::Error;
use crate::gradcheck::{check_store, worst};

fn random(shape: &[usize], rng: &mut impl Rng) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape, (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
}

fn close(a: &Tensor, b: &Tensor, tol: f64) -> bool {
    a.shape() == b.shape() && a.data().iter().zip(b.data()).all(|(x, y)| (x - y).abs() <= tol)
}

#[test]
fn affine_identity_and_zero_weights() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let x = random(&[4, 3], &mut rng);
    let y = affine(&x, &Tensor::identity(3), &Tensor::zeros(&[3])).unwrap();
    assert_eq!(y, x);
    let c = Tensor::new(&[2], vec![0.5, -2.0]).unwrap();
    let y = affine(&x, &Tensor::zeros(&[3, 2]), &c).unwrap();
    for r in 0..4 {
        assert_eq!(y.row_slice(r), c.data());
    }
}

#[test]
fn affine_hand_computed() {
    let x = Tensor::from_rows(&[vec![1.0, 2.0]]).unwrap();
    let y = affine(&x, &Tensor::identity(2), &Tensor::new(&[2], vec![3.0, 4.0]).unwrap()).unwrap();
    assert_eq!(y.data(), &[4.0, 6.0]);
    let bad = affine(&x, &Tensor::zeros(&[3, 2]), &Tensor::zeros(&[2]));
    assert!(matches!(bad, Err(Error::Dimension(_))));
}

#[test]
fn layer_norm_constant_row_returns_bias() {
    let x = Tensor::from_rows(&[vec![2.5; 5]]).unwrap();
    let bias = Tensor::new(&[5], vec![0.1, 0.2, 0.3, 0.4, 0.5]).unwrap();
    let y = layer_norm(&x, &Tensor::full(&[5], 1.0), &bias, 1e-5).unwrap();
    assert_eq!(y.data(), bias.data());
}

#[test]
fn layer_norm_standardized_row_is_fixed_point() {
    let x = Tensor::from_rows(&[vec![1.0, -1.0]]).unwrap();
    let y = layer_norm(&x, &Tensor::full(&[2], 1.0), &Tensor::zeros(&[2]), 1e-14).unwrap();
    assert!(close(&y, &x, 1e-12));
}

#[test]
fn layer_norm_matches_scalar_loop_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let x = random(&[3, 6], &mut rng);
    let g = random(&[6], &mut rng);
    let b = random(&[6], &mut rng);
    let y = layer_norm(&x, &g, &b, 1e-5).unwrap();
    for r in 0..3 {
        let row = x.row_slice(r);
        let mut mean = 0.0;
        for v in row {
            mean += v;
        }
        mean /= 6.0;
        let mut var = 0.0;
        for v in row {
            var += (v - mean) * (v - mean);
        }
        var /= 6.0;
        for c in 0..6 {
            let expect = (row[c] - mean) / (var + 1e-5).sqrt() * g.data()[c] + b.data()[c];
            assert!((y.get(r, c) - expect).abs() < 1e-12);
        }
    }
}

fn random_attention(d: usize, rng: &mut impl Rng) -> AttentionWeights {
    AttentionWeights {
        wq: random(&[d, d], rng),
        bq: random(&[d], rng),
        wk: random(&[d, d], rng),
        bk: random(&[d], rng),
        wv: random(&[d, d], rng),
        bv: random(&[d], rng),
        wo: random(&[d, d], rng),
        bo: random(&[d], rng),
    }
}

#[test]
fn attention_single_token_is_projected_value() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let w = random_attention(8, &mut rng);
    let x = random(&[1, 8], &mut rng);
    let y = causal_attention(&x, 4, &w).unwrap();
    let v = affine(&x, &w.wv, &w.bv).unwrap();
    let expect = affine(&v, &w.wo, &w.bo).unwrap();
    assert!(close(&y, &expect, 1e-12));
}

#[test]
fn attention_zero_logits_average_the_prefix() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut w = random_attention(8, &mut rng);
    w.wq = Tensor::zeros(&[8, 8]);
    w.bq = Tensor::zeros(&[8]);
    w.wo = Tensor::identity(8);
    w.bo = Tensor::zeros(&[8]);
    let x = random(&[5, 8], &mut rng);
    let y = causal_attention(&x, 2, &w).unwrap();
    let v = affine(&x, &w.wv, &w.bv).unwrap();
    for t in 0..5 {
        for c in 0..8 {
            let mean = (0..=t).map(|j| v.get(j, c)).sum::<f64>() / (t + 1) as f64;
            assert!((y.get(t, c) - mean).abs() < 1e-12);
        }
    }
}

#[test]
fn attention_rejects_indivisible_heads() {
    let x = Tensor::zeros(&[2, 6]);
    let w = AttentionWeights::identity(6);
    assert!(matches!(causal_attention(&x, 4, &w), Err(Error::Config(_))));
}

#[test]
fn attention_is_causal_bitwise() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let w = random_attention(8, &mut rng);
    let x = random(&[6, 8], &mut rng);
    let y = causal_attention(&x, 4, &w).unwrap();
    for t in 0..5 {
        let mut x2 = x.clone();
        for r in t + 1..6 {
            for c in 0..8 {
                x2.data_mut()[r * 8 + c] += rng.random_range(-3.0..3.0);
            }
        }
        let y2 = causal_attention(&x2, 4, &w).unwrap();
        assert_eq!(&y.data()[..(t + 1) * 8], &y2.data()[..(t + 1) * 8]);
    }
}

#[test]
fn message_pass_isolated_node_uses_self_term() {
    let x = Tensor::from_rows(&[vec![0.3, -0.7]]).unwrap();
    let ws = Tensor::from_rows(&[vec![1.0, 2.0, 0.0], vec![0.5, -1.0, 1.0]]).unwrap();
    let wn = Tensor::full(&[2, 3], 9.0);
    let y = message_pass(&x, &[], &ws, &wn, None).unwrap();
    let expect = x.matmul(&ws).unwrap().map(f64::tanh);
    assert!(close(&y, &expect, 1e-15));
}

#[test]
fn message_pass_symmetric_pair_is_identical() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let row = random(&[1, 3], &mut rng);
    let x = Tensor::from_rows(&[row.data().to_vec(), row.data().to_vec()]).unwrap();
    let y = message_pass(&x, &[(0, 1), (1, 0)], &random(&[3, 4], &mut rng), &random(&[3, 4], &mut rng), None).unwrap();
    assert_eq!(y.row_slice(0), y.row_slice(1));
}

#[test]
fn message_pass_path_graph_matches_scalar_oracle() {
    // 0 -> 1 -> 2 plus 2 -> 1: node 1 averages nodes 0 and 2.
    let x = Tensor::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0], vec![2.0, -1.0]]).unwrap();
    let ws = Tensor::from_rows(&[vec![0.5, -0.25], vec![0.1, 0.2]]).unwrap();
    let wn = Tensor::from_rows(&[vec![0.3, 0.0], vec![-0.4, 0.6]]).unwrap();
    let b = Tensor::new(&[2], vec![0.05, -0.05]).unwrap();
    let edges = [(0, 1), (1, 2), (2, 1)];
    let y = message_pass(&x, &edges, &ws, &wn, Some(&b)).unwrap();
    let neigh: [Vec<usize>; 3] = [vec![], vec![0, 2], vec![1]];
    for i in 0..3 {
        for o in 0..2 {
            let mut s = b.data()[o];
            for k in 0..2 {
                s += x.get(i, k) * ws.get(k, o);
            }
            if !neigh[i].is_empty() {
                let mut m = 0.0;
                for &j in &neigh[i] {
                    for k in 0..2 {
                        m += x.get(j, k) * wn.get(k, o);
                    }
                }
                s += m / neigh[i].len() as f64;
            }
            assert!((y.get(i, o) - s.tanh()).abs() < 1e-14, "node {i} out {o}");
        }
    }
}

#[test]
fn message_pass_rejects_bad_edges() {
    let x = Tensor::zeros(&[2, 2]);
    let w = Tensor::zeros(&[2, 2]);
    assert!(matches!(message_pass(&x, &[(0, 2)], &w, &w, None), Err(Error::Graph(_))));
}

proptest! {
    #[test]
    fn message_pass_is_permutation_equivariant(seed in 0u64..1000, n in 2usize..7) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = random(&[n, 3], &mut rng);
        let ws = random(&[3, 4], &mut rng);
        let wn = random(&[3, 4], &mut rng);
        let edges: Vec<(usize, usize)> = (0..2 * n)
            .map(|_| (rng.random_range(0..n), rng.random_range(0..n)))
            .collect();
        let mut perm: Vec<usize> = (0..n).collect();
        for i in (1..n).rev() {
            perm.swap(i, rng.random_range(0..=i));
        }
        // Node i moves to position perm[i].
        let mut px = vec![0.0; n * 3];
        for i in 0..n {
            px[perm[i] * 3..perm[i] * 3 + 3].copy_from_slice(x.row_slice(i));
        }
        let px = Tensor::new(&[n, 3], px).unwrap();
        let pedges: Vec<_> = edges.iter().map(|&(s, t)| (perm[s], perm[t])).collect();
        let y = message_pass(&x, &edges, &ws, &wn, None).unwrap();
        let py = message_pass(&px, &pedges, &ws, &wn, None).unwrap();
        for i in 0..n {
            for c in 0..4 {
                prop_assert!((y.get(i, c) - py.get(perm[i], c)).abs() < 1e-14);
            }
        }
    }
}

#[test]
fn backward_of_sum_is_ones() {
    let mut tape = Tape::new();
    let x = tape.constant(Tensor::new(&[2, 3], vec![1.0, -2.0, 3.0, 0.5, 0.0, 7.0]).unwrap());
    let s = tape.sum(x);
    let g = tape.backward(s).unwrap();
    assert_eq!(g.get(x).unwrap().data(), &[1.0; 6]);
}

#[test]
fn backward_of_square_at_three_is_six() {
    let mut tape = Tape::new();
    let x = tape.constant(Tensor::scalar(3.0));
    let y = tape.mul(x, x).unwrap();
    let g = tape.backward(y).unwrap();
    assert_eq!(g.get(x).unwrap().item(), 6.0);
}

#[test]
fn backward_requires_scalar_loss() {
    let mut tape = Tape::new();
    let x = tape.constant(Tensor::zeros(&[2, 2]));
    assert!(matches!(tape.backward(x), Err(Error::Usage(_))));
}

#[test]
fn untouched_parameters_get_zero_gradient() {
    let mut store = ParamStore::new();
    let used = store.add("used", Tensor::scalar(2.0));
    let unused = store.add("unused", Tensor::scalar(5.0));
    let mut tape = Tape::new();
    let u = tape.param(&store, used);
    let l = tape.square(u);
    let g = tape.backward(l).unwrap();
    store.accumulate(&tape, &g);
    assert_eq!(store.get(used).grad.item(), 4.0);
    assert_eq!(store.get(unused).grad.item(), 0.0);
}

#[test]
fn detach_blocks_gradient() {
    let mut store = ParamStore::new();
    let w = store.add("w", Tensor::scalar(2.0));
    let mut tape = Tape::new();
    let a = tape.param(&store, w);
    let b = tape.detach(a);
    let l = tape.mul(a, b).unwrap();
    let g = tape.backward(l).unwrap();
    assert_eq!(g.get(a).unwrap().item(), 2.0);
}

/// Every primitive exercised through one composite loss.
#[test]
fn primitive_gradients_match_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut store = ParamStore::new();
    let x = store.add("x", random(&[4, 6], &mut rng));
    let w = store.add("w", random(&[6, 6], &mut rng));
    let b = store.add("b", random(&[6], &mut rng));
    let g = store.add("gain", random(&[6], &mut rng));
    let y = store.add("y", random(&[4, 6], &mut rng).map(|v| v.abs() + 0.5));
    let edges: Rc<[(usize, usize)]> = Rc::from(vec![(0, 1), (2, 1), (3, 0), (1, 3)]);
    let seg: Rc<[usize]> = Rc::from(vec![0, 1, 0, 1]);
    let idx: Rc<[usize]> = Rc::from(vec![3, 0, 0]);
    let report = check_store(&mut store, 1e-5, None, |t, s| {
        let (x, w, b, g, y) = (t.param(s, x), t.param(s, w), t.param(s, b), t.param(s, g), t.param(s, y));
        let h = t.affine(x, w, b)?;
        let h = t.layer_norm(h, g, b, 1e-5)?;
        let q = t.tanh(h);
        let k = t.gelu(h);
        let a = t.causal_attention(q, k, h, 2, 2, 2)?;
        let agg = t.mean_aggregate(a, edges.clone(), 4)?;
        let m = t.mul(agg, y)?;
        let sc = t.scale(m, 0.3);
        let e = t.exp(sc);
        let l = t.log(y);
        let sq = t.sqrt(y);
        let mn = t.min(e, sq)?;
        let c = t.concat_cols(&[mn, l])?;
        let c = t.slice_cols(c, 2, 7)?;
        let off = t.offset(c, 0.05);
        let r = t.relu(off);
        let sm = t.segment_mean(r, seg.clone(), 2)?;
        let gr = t.gather_rows(c, idx.clone())?;
        let cr = t.concat_rows(&[sm, gr])?;
        let rs = t.row_sum(cr);
        let cm = t.col_mean(cr);
        let d = t.sub(rs, rs)?;
        let rs2 = t.square(rs);
        let s1 = t.sum(rs2);
        let s2 = t.mean(cm);
        let s3 = t.sum(d);
        let total = t.add(s1, s2)?;
        t.add(total, s3)
    })
    .unwrap();
    let (err, name) = worst(&report);
    assert!(err < 1e-4, "worst {name}: {err}");
}

#[test]
fn incremental_attention_matches_full_sequence() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut store = ParamStore::new();
    let block = TransformerBlock::new(&mut store, "b", 8, 2, 1, &mut rng);
    let (batch, seq) = (3, 5);
    let x = random(&[batch * seq, 8], &mut rng);

    let mut tape = Tape::new();
    let xv = tape.constant(x.clone());
    let full = block.forward_seq(&mut tape, &store, xv, batch, seq).unwrap();
    let full = tape.value(full).clone();

    let mut cache = KvCache::default();
    for t in 0..seq {
        let rows: Vec<Vec<f64>> = (0..batch).map(|b| x.row_slice(b * seq + t).to_vec()).collect();
        let xt = tape.constant(Tensor::from_rows(&rows).unwrap());
        let yt = block.forward_step(&mut tape, &store, xt, &mut cache).unwrap();
        for b in 0..batch {
            for c in 0..8 {
                let diff = tape.value(yt).get(b, c) - full.get(b * seq + t, c);
                assert!(diff.abs() < 1e-12);
            }
        }
    }
}

#[test]
fn incremental_attention_gradients_match_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut store = ParamStore::new();
    let block = TransformerBlock::new(&mut store, "b", 4, 2, 1, &mut rng);
    let inputs: Vec<Tensor> = (0..3).map(|_| random(&[2, 4], &mut rng)).collect();
    let report = check_store(&mut store, 1e-5, None, |t, s| {
        let mut cache = KvCache::default();
        let mut total = None;
        for x in &inputs {
            let xv = t.constant(x.clone());
            let y = block.forward_step(t, s, xv, &mut cache)?;
            let y2 = t.square(y);
            let l = t.sum(y2);
            total = Some(match total {
                None => l,
                Some(acc) => t.add(acc, l)?,
            });
        }
        Ok(total.unwrap())
    })
    .unwrap();
    let (err, name) = worst(&report);
    assert!(err < 1e-4, "worst {name}: {err}");
}
