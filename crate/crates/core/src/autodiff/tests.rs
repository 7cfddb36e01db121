use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::error::Error;

fn rand_tensor(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Tensor {
    let data = (0..rows * cols)
        .map(|_| rng.random_range(-1.0..1.0))
        .collect();
    Tensor::matrix(rows, cols, data).unwrap()
}

#[test]
fn softmax_of_zeros_is_uniform() {
    let mut g = Graph::checked();
    let x = g.constant(Tensor::row(vec![0.0; 3]).unwrap());
    let y = g.softmax(x, 1).unwrap();
    for v in g.value(y).data() {
        assert!((v - 1.0 / 3.0).abs() < 1e-15);
    }
}

#[test]
fn softmax_matches_high_precision_values() {
    // exp(i) / Σ exp evaluated with 40-digit arithmetic.
    let expected = [
        0.090_030_573_170_380_46,
        0.24472847105479765,
        0.665_240_955_774_821_9,
    ];
    let mut g = Graph::checked();
    let x = g.constant(Tensor::row(vec![1.0, 2.0, 3.0]).unwrap());
    let y = g.softmax(x, 1).unwrap();
    for (v, e) in g.value(y).data().iter().zip(expected) {
        assert!((v - e).abs() < 1e-8, "{v} vs {e}");
    }
}

#[test]
fn relu_clamps_negatives_and_zero() {
    let mut g = Graph::new();
    let x = g.constant(Tensor::row(vec![-1.0, 0.0, 2.0]).unwrap());
    let y = g.relu(x).unwrap();
    assert_eq!(g.value(y).data(), &[0.0, 0.0, 2.0]);
}

#[test]
fn relu_subgradient_at_zero_is_zero() {
    let mut g = Graph::new();
    let x = g.variable(Tensor::row(vec![0.0, 1.0]).unwrap());
    let y = g.relu(x).unwrap();
    let s = g.sum(y).unwrap();
    let grads = g.backward(s).unwrap();
    assert_eq!(grads.get(x).unwrap().data(), &[0.0, 1.0]);
}

#[test]
fn gradient_of_sum_is_ones() {
    let mut g = Graph::new();
    let x = g.variable(Tensor::matrix(2, 3, vec![0.5, -1.0, 2.0, 3.0, 0.0, 1.0]).unwrap());
    let s = g.sum(x).unwrap();
    let grads = g.backward(s).unwrap();
    assert_eq!(grads.get(x).unwrap().data(), &[1.0; 6]);
}

#[test]
fn gradient_of_sum_of_squares() {
    let mut g = Graph::new();
    let x = g.variable(Tensor::row(vec![1.0, 2.0]).unwrap());
    let sq = g.mul(x, x).unwrap();
    let s = g.sum(sq).unwrap();
    let grads = g.backward(s).unwrap();
    assert_eq!(grads.get(x).unwrap().data(), &[2.0, 4.0]);
}

#[test]
fn backward_rejects_non_scalar() {
    let mut g = Graph::new();
    let x = g.variable(Tensor::row(vec![1.0, 2.0]).unwrap());
    assert!(matches!(g.backward(x), Err(Error::NotScalar(_))));
}

#[test]
fn shape_mismatch_names_the_op() {
    let mut g = Graph::new();
    let a = g.constant(Tensor::row(vec![1.0, 2.0]).unwrap());
    let b = g.constant(Tensor::row(vec![1.0, 2.0, 3.0]).unwrap());
    let err = g.add(a, b).unwrap_err();
    assert!(err.to_string().starts_with("add: shape mismatch"), "{err}");
    let err = g.matmul(a, b).unwrap_err();
    assert!(err.to_string().starts_with("matmul"), "{err}");
}

#[test]
fn fully_masked_softmax_is_an_error() {
    let mut g = Graph::new();
    let x = g.constant(Tensor::row(vec![1.0, 2.0]).unwrap());
    assert!(matches!(
        g.masked_softmax(x, 1, &[false, false]),
        Err(Error::AllMasked { .. })
    ));
}

#[test]
fn masked_positions_get_exact_zero() {
    let mut g = Graph::new();
    let x = g.constant(Tensor::row(vec![5.0, 1.0, 2.0]).unwrap());
    let y = g.masked_softmax(x, 1, &[false, true, true]).unwrap();
    let v = g.value(y).data();
    assert_eq!(v[0], 0.0);
    assert!((v[1] + v[2] - 1.0).abs() < 1e-15);
}

#[test]
fn tensor_rejects_non_finite_and_bad_shape() {
    assert!(matches!(
        Tensor::row(vec![1.0, f64::NAN]),
        Err(Error::NonFinite { .. })
    ));
    assert!(matches!(
        Tensor::new(vec![2, 2], vec![1.0]),
        Err(Error::Shape { .. })
    ));
}

#[test]
fn checked_graph_rejects_overflow() {
    let mut g = Graph::checked();
    let x = g.constant(Tensor::row(vec![1e300]).unwrap());
    let y = g.mul(x, x);
    assert!(matches!(y, Err(Error::NonFinite { op: "mul" })));
}

#[test]
fn grad_check_sum_of_squares_is_near_exact() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let p = rand_tensor(&mut rng, 3, 4);
    let err = grad_check(&[p], DEFAULT_EPSILON, |g, v| {
        let sq = g.mul(v[0], v[0])?;
        g.sum(sq)
    })
    .unwrap();
    assert!(err <= 1e-9, "{err}");
}

#[test]
fn grad_check_relu_away_from_kink() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    // Keep every input at least 10·ε from the kink.
    let data: Vec<f64> = (0..12)
        .map(|_| {
            let mag = rng.random_range(10.0 * DEFAULT_EPSILON + 0.01..1.0);
            if rng.random_bool(0.5) {
                mag
            } else {
                -mag
            }
        })
        .collect();
    let x = Tensor::matrix(3, 4, data).unwrap();
    let w = rand_tensor(&mut rng, 4, 4);
    let err = grad_check(&[x.clone(), w], DEFAULT_EPSILON, |g, v| {
        let r = g.relu(v[0])?;
        let m = g.matmul(r, v[1])?;
        let t = g.tanh(m)?;
        g.sum(t)
    });
    assert!(err.unwrap() <= 1e-6);
}

#[test]
fn grad_check_constant_function_is_zero() {
    let p = Tensor::row(vec![1.0, -2.0]).unwrap();
    let err = grad_check(&[p], DEFAULT_EPSILON, |g, _| {
        Ok(g.constant(Tensor::scalar(4.0)?))
    })
    .unwrap();
    assert_eq!(err, 0.0);
}

#[test]
fn random_three_layer_compositions_match_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for _ in 0..10 {
        let rows = rng.random_range(1..4);
        let x = rand_tensor(&mut rng, rows, 3);
        let w1 = rand_tensor(&mut rng, 3, 4);
        let b1 = rand_tensor(&mut rng, 1, 4);
        let w2 = rand_tensor(&mut rng, 4, 5);
        let w3 = rand_tensor(&mut rng, 5, 2);
        let err = grad_check(&[x, w1, b1, w2, w3], DEFAULT_EPSILON, |g, v| {
            let h = g.matmul(v[0], v[1])?;
            let h = g.add_bias(h, v[2])?;
            let h = g.tanh(h)?;
            let h = g.matmul(h, v[3])?;
            let h = g.sigmoid(h)?;
            let h = g.matmul(h, v[4])?;
            let p = g.softmax(h, 1)?;
            let l = g.log(p)?;
            g.mean(l)
        })
        .unwrap();
        assert!(err <= 1e-7, "{err}");
    }
}

#[test]
fn structural_ops_match_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let a = rand_tensor(&mut rng, 3, 4);
    let b = rand_tensor(&mut rng, 3, 2);
    let table = rand_tensor(&mut rng, 5, 4);
    let mix = rand_tensor(&mut rng, 4, 6);
    let err = grad_check(&[a, b, table, mix], DEFAULT_EPSILON, |g, v| {
        let c = g.concat(&[v[0], v[1]], 1)?; // 3×6
        let t = g.transpose(c)?; // 6×3
        let s = g.slice(t, 0, 1, 4)?; // 4×3
        let s = g.slice(s, 1, 1, 2)?; // 4×2
        let rows = g.gather_rows(v[2], &[4, 0, 4, 2])?; // 4×4
        let m = g.matmul(rows, v[3])?; // 4×6
        let m = g.reshape(m, &[6, 4])?;
        let m = g.slice(m, 1, 0, 2)?; // 6×2
        let stacked = g.concat(&[s, m], 0)?; // 10×2
        let sm = g.softmax(stacked, 0)?;
        let w = g.scale(sm, 3.0)?;
        let sq = g.mul(w, stacked)?;
        g.sum(sq)
    })
    .unwrap();
    assert!(err <= 1e-7, "{err}");
}

#[test]
fn layer_norm_and_cross_entropy_match_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let x = rand_tensor(&mut rng, 3, 5);
    let gain = rand_tensor(&mut rng, 1, 5);
    let bias = rand_tensor(&mut rng, 1, 5);
    let w = rand_tensor(&mut rng, 5, 4);
    let err = grad_check(&[x, gain, bias, w], DEFAULT_EPSILON, |g, v| {
        let n = g.layer_norm(v[0], v[1], v[2], 1e-5)?;
        let r = g.slice(n, 0, 1, 1)?;
        let logits = g.matmul(r, v[3])?;
        g.cross_entropy(logits, 2)
    })
    .unwrap();
    assert!(err <= 1e-6, "{err}");
}

#[test]
fn masked_softmax_gradient_ignores_masked_inputs() {
    let mut g = Graph::new();
    let x = g.variable(Tensor::row(vec![0.3, -0.2, 0.9]).unwrap());
    let w = g.constant(Tensor::row(vec![1.0, 2.0, 3.0]).unwrap());
    let p = g.masked_softmax(x, 1, &[true, false, true]).unwrap();
    let m = g.mul(p, w).unwrap();
    let s = g.sum(m).unwrap();
    let grads = g.backward(s).unwrap();
    assert_eq!(grads.get(x).unwrap().data()[1], 0.0);
}

#[test]
fn forward_is_bit_deterministic() {
    let run = || {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let a = rand_tensor(&mut rng, 8, 16);
        let b = rand_tensor(&mut rng, 16, 8);
        let mut g = Graph::new();
        let (a, b) = (g.constant(a), g.constant(b));
        let m = g.matmul(a, b).unwrap();
        let s = g.softmax(m, 1).unwrap();
        g.value(s).clone()
    };
    assert_eq!(run(), run());
}

proptest! {
    #[test]
    fn softmax_rows_are_distributions(
        rows in 1usize..5,
        cols in 1usize..9,
        seed in any::<u64>(),
        spread in 0.1f64..50.0,
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data: Vec<f64> = (0..rows * cols).map(|_| rng.random_range(-spread..spread)).collect();
        let mut g = Graph::new();
        let x = g.constant(Tensor::matrix(rows, cols, data).unwrap());
        let y = g.softmax(x, 1).unwrap();
        for r in 0..rows {
            let row = g.value(y).row_slice(r);
            let total: f64 = row.iter().sum();
            prop_assert!((total - 1.0).abs() <= 1e-12);
            prop_assert!(row.iter().all(|v| (0.0..=1.0).contains(v)));
        }
    }
}
