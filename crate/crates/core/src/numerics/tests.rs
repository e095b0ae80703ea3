use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::error::Result;

fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Matrix {
    Matrix::from_fn(rows, cols, |_, _| rng.gen_range(-1.5..1.5))
}

/// Contracts an arbitrary node with a fixed random weight so every output
/// entry contributes to the checked scalar.
fn contract(tape: &mut Tape, v: Var, seed: u64) -> Result<Var> {
    let (r, c) = tape.shape(v);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let w = tape.constant(random_matrix(&mut rng, r, c));
    let p = tape.mul(v, w)?;
    Ok(tape.sum(p))
}

fn direct_softmax(x: &[f64]) -> Vec<f64> {
    let z: f64 = x.iter().map(|v| v.exp()).sum();
    x.iter().map(|v| v.exp() / z).collect()
}

#[test]
fn softmax_of_equal_logits_is_uniform() {
    let s = softmax_rows(&Matrix::row_vector(vec![0.0, 0.0]));
    assert_eq!(s.data(), &[0.5, 0.5]);
}

#[test]
fn softmax_matches_direct_normalization() {
    let s = softmax_rows(&Matrix::row_vector(vec![1.0, 2.0, 3.0]));
    let expect = direct_softmax(&[1.0, 2.0, 3.0]);
    for (a, b) in s.data().iter().zip(&expect) {
        assert!((a - b).abs() < 1e-12);
    }
    for (a, b) in s.data().iter().zip([0.09003, 0.24473, 0.66524]) {
        assert!((a - b).abs() < 1e-5);
    }
}

#[test]
fn softmax_rows_sum_to_one_and_ignore_shifts() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..100 {
        let m = Matrix::from_fn(4, 7, |_, _| rng.gen_range(-30.0..30.0));
        let s = softmax_rows(&m);
        for r in 0..4 {
            assert!((s.row(r).iter().sum::<f64>() - 1.0).abs() < 1e-12);
            assert!(s.row(r).iter().all(|&p| p >= 0.0));
        }
        let c = rng.gen_range(-100.0..100.0);
        let shifted = softmax_rows(&m.map(|x| x + c));
        assert!(shifted.max_abs_diff(&s).unwrap() < 1e-14);
    }
}

#[test]
fn softmax_of_empty_is_empty() {
    assert!(softmax_rows(&Matrix::zeros(0, 3)).is_empty());
}

#[test]
fn cosine_rows_special_cases() {
    let a = Matrix::from_rows(&[vec![1.0, 2.0, -3.0], vec![1.0, 0.0, 0.0], vec![0.0, 0.0, 0.0]])
        .unwrap();
    let b = Matrix::from_rows(&[vec![-1.0, -2.0, 3.0], vec![0.0, 4.0, 0.0], vec![1.0, 1.0, 1.0]])
        .unwrap();
    let self_sim = cosine_rows(&a, &a).unwrap();
    assert!((self_sim.get(0, 0) - 1.0).abs() < 1e-15);
    let c = cosine_rows(&a, &b).unwrap();
    assert!((c.get(0, 0) + 1.0).abs() < 1e-15);
    assert_eq!(c.get(1, 0), 0.0);
    assert_eq!(c.get(2, 0), 0.0, "zero-norm rows give 0");
    assert!(cosine_rows(&a, &Matrix::zeros(2, 3)).is_err());
}

#[test]
fn cosine_output_stays_in_unit_interval() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..200 {
        let a = random_matrix(&mut rng, 5, 3);
        let scale = rng.gen_range(1e-3..1e3);
        let c = cosine_rows(&a, &a.scale(scale)).unwrap();
        assert!(c.data().iter().all(|&x| (-1.0..=1.0).contains(&x)));
    }
}

#[test]
fn backward_of_square() {
    let mut t = Tape::new();
    let x = t.leaf(Matrix::scalar(3.0));
    let y = t.mul(x, x).unwrap();
    let g = t.backward(y).unwrap();
    assert_eq!(g.get(x).item().unwrap(), 6.0);
}

#[test]
fn backward_of_softmax_entry() {
    let mut t = Tape::new();
    let x = t.leaf(Matrix::row_vector(vec![0.0, 0.0]));
    let s = t.softmax_rows(x);
    let pick = t.constant(Matrix::row_vector(vec![1.0, 0.0]));
    let p = t.mul(s, pick).unwrap();
    let y = t.sum(p);
    let g = t.backward(y).unwrap().get(x);
    assert!((g.get(0, 0) - 0.25).abs() < 1e-15);
    assert!((g.get(0, 1) + 0.25).abs() < 1e-15);
}

#[test]
fn unrelated_leaves_get_zero_gradient() {
    let mut t = Tape::new();
    let x = t.leaf(Matrix::filled(2, 2, 1.5));
    let unused = t.leaf(Matrix::filled(3, 1, 2.0));
    let k = t.constant(Matrix::scalar(4.0));
    let y = t.sum(k);
    let g = t.backward(y).unwrap();
    assert_eq!(g.get(x), Matrix::zeros(2, 2));
    assert_eq!(g.get(unused), Matrix::zeros(3, 1));
}

#[test]
fn backward_requires_scalar_output() {
    let mut t = Tape::new();
    let x = t.leaf(Matrix::zeros(2, 2));
    assert!(t.backward(x).is_err());
}

#[test]
fn gradients_accumulate_over_paths() {
    // f(x) = sum(x * x + 3x) -> 2x + 3
    let mut t = Tape::new();
    let x = t.leaf(Matrix::row_vector(vec![1.0, -2.0]));
    let sq = t.mul(x, x).unwrap();
    let lin = t.scale(x, 3.0);
    let s = t.add(sq, lin).unwrap();
    let y = t.sum(s);
    let g = t.backward(y).unwrap().get(x);
    assert_eq!(g.data(), &[5.0, -1.0]);
}

#[test]
fn recip_of_zero_is_an_error() {
    let mut t = Tape::new();
    let x = t.leaf(Matrix::row_vector(vec![1.0, 0.0]));
    assert!(t.recip(x).is_err());
}

#[test]
fn layer_norm_rows_are_standardized() {
    let mut t = Tape::new();
    let x = t.leaf(Matrix::from_rows(&[vec![1.0, 2.0, 3.0, 4.0], vec![-5.0, 0.0, 5.0, 10.0]]).unwrap());
    let y = t.layer_norm(x);
    let v = t.value(y);
    for r in 0..2 {
        let mean: f64 = v.row(r).iter().sum::<f64>() / 4.0;
        let var: f64 = v.row(r).iter().map(|x| x * x).sum::<f64>() / 4.0;
        assert!(mean.abs() < 1e-12);
        assert!((var - 1.0).abs() < 1e-5);
    }
}

type Builder = fn(&mut Tape, &[Var]) -> Result<Var>;
type OpCase = (&'static str, Vec<(usize, usize)>, Builder);

fn op_cases() -> Vec<OpCase> {
    vec![
        ("matmul", vec![(3, 4), (4, 2)], |t, v| {
            let y = t.matmul(v[0], v[1])?;
            contract(t, y, 1)
        }),
        ("matmul_nt", vec![(3, 4), (5, 4)], |t, v| {
            let y = t.matmul_nt(v[0], v[1])?;
            contract(t, y, 2)
        }),
        ("transpose", vec![(3, 2)], |t, v| {
            let y = t.transpose(v[0]);
            contract(t, y, 3)
        }),
        ("add_broadcast", vec![(3, 4), (1, 4), (3, 1)], |t, v| {
            let y = t.add(v[0], v[1])?;
            let y = t.add(y, v[2])?;
            contract(t, y, 4)
        }),
        ("mul_broadcast", vec![(3, 4), (3, 1), (1, 4)], |t, v| {
            let y = t.mul(v[0], v[1])?;
            let y = t.mul(y, v[2])?;
            contract(t, y, 5)
        }),
        ("softmax_rows", vec![(3, 5)], |t, v| {
            let y = t.softmax_rows(v[0]);
            contract(t, y, 6)
        }),
        ("cosine_rows", vec![(4, 3), (4, 3)], |t, v| {
            let y = t.cosine_rows(v[0], v[1])?;
            contract(t, y, 7)
        }),
        ("pairwise_cosine", vec![(4, 3), (5, 3)], |t, v| {
            let y = t.pairwise_cosine(v[0], v[1])?;
            contract(t, y, 8)
        }),
        ("logistic", vec![(2, 3)], |t, v| {
            let y = t.logistic(v[0]);
            contract(t, y, 9)
        }),
        ("relu", vec![(3, 3)], |t, v| {
            let y = t.relu(v[0]);
            contract(t, y, 10)
        }),
        ("layer_norm", vec![(3, 6)], |t, v| {
            let y = t.layer_norm(v[0]);
            contract(t, y, 11)
        }),
        ("log", vec![(2, 3)], |t, v| {
            // keep the argument positive
            let sq = t.mul(v[0], v[0])?;
            let pos = t.add_scalar(sq, 0.5);
            let y = t.log(pos);
            contract(t, y, 12)
        }),
        ("recip", vec![(2, 3)], |t, v| {
            let sq = t.mul(v[0], v[0])?;
            let pos = t.add_scalar(sq, 0.5);
            let y = t.recip(pos)?;
            contract(t, y, 13)
        }),
        ("mean", vec![(3, 3)], |t, v| {
            let sq = t.mul(v[0], v[0])?;
            Ok(t.mean(sq))
        }),
        ("sum_axis", vec![(3, 4)], |t, v| {
            let a = t.sum_axis(v[0], Axis::Rows);
            let b = t.sum_axis(v[0], Axis::Cols);
            let ca = contract(t, a, 14)?;
            let cb = contract(t, b, 15)?;
            t.add(ca, cb)
        }),
        ("max_axis", vec![(3, 4)], |t, v| {
            let a = t.max_axis(v[0], Axis::Rows)?;
            let b = t.max_axis(v[0], Axis::Cols)?;
            let ca = contract(t, a, 16)?;
            let cb = contract(t, b, 17)?;
            t.add(ca, cb)
        }),
        ("two_layer_composite", vec![(4, 3), (3, 5), (5, 2)], |t, v| {
            let h = t.matmul(v[0], v[1])?;
            let h = t.layer_norm(h);
            let h = t.relu(h);
            let o = t.matmul(h, v[2])?;
            let o = t.softmax_rows(o);
            contract(t, o, 18)
        }),
    ]
}

#[test]
fn every_operation_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for (name, shapes, build) in op_cases() {
        let mut worst: f64 = 0.0;
        for _ in 0..100 {
            let inputs: Vec<Matrix> = shapes
                .iter()
                .map(|&(r, c)| random_matrix(&mut rng, r, c))
                .collect();
            let check = check_gradients(&inputs, DEFAULT_STEP, build).unwrap();
            worst = worst.max(check.relative_error);
        }
        assert!(worst < 1e-5, "{name}: worst relative error {worst:e}");
    }
}
