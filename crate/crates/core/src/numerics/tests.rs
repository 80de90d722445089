use super::gradcheck::{op_cases, rand_t};
use super::*;
use crate::error::Error;

#[test]
fn every_op_matches_finite_differences() {
    for case in op_cases() {
        for seed in 0..5 {
            let err = case.max_error(seed).unwrap();
            assert!(err <= case.tol, "{}: seed {seed} relative error {err:e} > {:e}", case.name, case.tol);
        }
    }
}

#[test]
fn matmul_identity_and_shape_errors() {
    let mut g = Graph::new();
    let x = rand_t(&[3, 4], 1);
    let i = g.constant(Tensor::eye(3));
    let xv = g.constant(x.clone());
    let y = g.matmul(i, xv).unwrap();
    assert_eq!(g.value(y), &x);

    let bad = g.constant(Tensor::zeros(&[5, 2]));
    match g.matmul(xv, bad) {
        Err(Error::Shape { lhs, rhs, .. }) => {
            assert_eq!(lhs, vec![3, 4]);
            assert_eq!(rhs, vec![5, 2]);
        }
        other => panic!("expected shape error, got {other:?}"),
    }
}

#[test]
fn softmax_rows_sum_to_one_and_equal_logits_are_uniform() {
    let mut g = Graph::new();
    let x = g.constant(Tensor::filled(&[1, 3], 4.2));
    let s = g.softmax(x).unwrap();
    for &p in g.value(s).data() {
        assert!((p - 1.0 / 3.0).abs() < 1e-15);
    }
    let r = g.constant(rand_t(&[7, 9], 3).reshape(&[7, 9]).unwrap());
    let big = g.scale(r, 300.0).unwrap();
    let s = g.softmax(big).unwrap();
    for row in g.value(s).data().chunks(9) {
        assert!((row.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
    }
}

#[test]
fn masked_entries_vanish_after_softmax() {
    let mut g = Graph::new();
    let x = g.constant(rand_t(&[4], 5));
    let m = g.mask_fill(x, &[false, true, true, false], -1e9).unwrap();
    let s = g.softmax(m).unwrap();
    let p = g.value(s).data();
    assert!(p[1] < 1e-30 && p[2] < 1e-30);
}

#[test]
fn square_gradient_and_softmax_sum_gradient() {
    let mut g = Graph::new();
    let x = g.param_owned(Tensor::scalar(3.0));
    let y = g.square(x).unwrap();
    g.backward(y).unwrap();
    assert_eq!(g.grad(x).unwrap(), &[6.0]);

    let mut g = Graph::new();
    let z = g.param_owned(rand_t(&[5], 8));
    let s = g.softmax(z).unwrap();
    let total = g.sum(s).unwrap();
    g.backward(total).unwrap();
    assert!(g.grad(z).unwrap().iter().all(|v| v.abs() < 1e-15));
}

#[test]
fn repeated_backward_is_idempotent_and_needs_scalar_root() {
    let mut g = Graph::new();
    let a = g.param_owned(rand_t(&[3, 3], 1));
    let b = g.param_owned(rand_t(&[3, 2], 2));
    let y = g.matmul(a, b).unwrap();
    let y = g.tanh(y).unwrap();
    assert!(matches!(g.backward(y), Err(Error::Contract(_))));
    let l = g.sum(y).unwrap();
    g.backward(l).unwrap();
    let first = g.grad(a).unwrap().to_vec();
    g.backward(l).unwrap();
    assert_eq!(g.grad(a).unwrap(), first.as_slice());
}

#[test]
fn non_finite_results_raise_numeric_fault() {
    let mut g = Graph::new();
    let x = g.constant(Tensor::vector(vec![0.0, 1.0]));
    assert!(matches!(g.log(x), Err(Error::NumericFault("log"))));
    let big = g.constant(Tensor::vector(vec![1000.0]));
    assert!(matches!(g.exp(big), Err(Error::NumericFault("exp"))));
}

#[test]
fn lstm_zero_parameters_give_zero_state() {
    let mut g = Graph::new();
    let (d_in, hid) = (3, 4);
    let p = LstmVars {
        w_input: g.param_owned(Tensor::zeros(&[d_in, 4 * hid])),
        w_hidden: g.param_owned(Tensor::zeros(&[hid, 4 * hid])),
        bias: g.param_owned(Tensor::zeros(&[4 * hid])),
    };
    let x = g.constant(Tensor::zeros(&[1, d_in]));
    let h = g.constant(Tensor::zeros(&[1, hid]));
    let c = g.constant(Tensor::zeros(&[1, hid]));
    let (h2, c2) = lstm_cell(&mut g, x, h, c, &p).unwrap();
    assert!(g.value(h2).data().iter().all(|v| *v == 0.0));
    assert!(g.value(c2).data().iter().all(|v| *v == 0.0));
}

#[test]
fn lstm_saturated_forget_gate_keeps_cell() {
    let (d_in, hid) = (2, 3);
    let mut bias = vec![0.0; 4 * hid];
    for b in &mut bias[hid..2 * hid] {
        *b = 40.0;
    }
    let mut g = Graph::new();
    let p = LstmVars {
        w_input: g.param_owned(rand_t(&[d_in, 4 * hid], 1)),
        w_hidden: g.param_owned(rand_t(&[hid, 4 * hid], 2)),
        bias: g.param_owned(Tensor::vector(bias)),
    };
    let x = g.constant(rand_t(&[1, d_in], 3));
    let h = g.constant(rand_t(&[1, hid], 4));
    let c_val = rand_t(&[1, hid], 5);
    let c = g.constant(c_val.clone());
    let (_, c2) = lstm_cell(&mut g, x, h, c, &p).unwrap();

    // expected c + i⊙g computed directly
    let xi = g.matmul(x, p.w_input).unwrap();
    let hh = g.matmul(h, p.w_hidden).unwrap();
    let pre = g.add(xi, hh).unwrap();
    let pre = g.add(pre, p.bias).unwrap();
    let pre = g.value(pre).data().to_vec();
    for k in 0..hid {
        let i = sigmoid(pre[k]);
        let cand = pre[2 * hid + k].tanh();
        let expected = c_val.data()[k] + i * cand;
        assert!((g.value(c2).data()[k] - expected).abs() < 1e-12);
    }
}

#[test]
fn adam_first_step_moves_by_lr_times_sign() {
    let cfg = AdamConfig {
        lr: 0.01,
        ..AdamConfig::default()
    };
    let mut params = vec![Tensor::vector(vec![1.0, -2.0, 0.5])];
    let mut state = AdamState::new(cfg, &params);
    let grads = vec![vec![0.3, -4.0, 1e-3]];
    let before = params[0].clone();
    state.update(&mut params, &grads).unwrap();
    for ((&p0, &p1), &g) in before.data().iter().zip(params[0].data()).zip(&grads[0]) {
        let expected = -cfg.lr * g / (g.abs() + cfg.eps);
        assert!(((p1 - p0) - expected).abs() <= 1e-12);
    }
}

#[test]
fn adam_zero_gradient_and_determinism() {
    let mut a = vec![rand_t(&[2, 2], 1)];
    let mut b = a.clone();
    let mut sa = AdamState::new(AdamConfig::default(), &a);
    let mut sb = sa.clone();
    let before = a.clone();
    sa.update(&mut a, &[vec![0.0; 4]]).unwrap();
    assert_eq!(a, before);
    let g = vec![vec![0.1, -0.2, 0.3, 0.0]];
    sa.update(&mut a, &g).unwrap();
    sb.update(&mut b, &[vec![0.0; 4]]).unwrap();
    sb.update(&mut b, &g).unwrap();
    assert_eq!(a, b);
    assert!(sa.update(&mut a, &[vec![0.0; 3]]).is_err());
}

#[test]
fn checkpoint_round_trip_and_corruption() {
    let tensors = vec![rand_t(&[2, 3], 1), Tensor::scalar(4.0), rand_t(&[2, 2, 2], 2)];
    let mut buf = Vec::new();
    write_checkpoint(&mut buf, &tensors).unwrap();
    assert_eq!(&buf[..4], CHECKPOINT_MAGIC);
    let back = read_checkpoint(&mut buf.as_slice()).unwrap();
    assert_eq!(back, tensors);

    let mut bad = buf.clone();
    bad[0] = b'X';
    assert!(read_checkpoint(&mut bad.as_slice()).is_err());
    let truncated = &buf[..buf.len() - 3];
    assert!(read_checkpoint(&mut &truncated[..]).is_err());
}
