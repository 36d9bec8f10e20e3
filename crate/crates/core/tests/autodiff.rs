mod support;

use hinge_qe::autodiff::{sigmoid, Graph, NodeId, Tensor, TensorError};
use support::{matrix, reference_cross_entropy, relative_error, rng};

#[test]
fn matmul_examples() {
    let mut g = Graph::new();
    let id = g.constant(Tensor::matrix(2, 2, vec![1.0, 0.0, 0.0, 1.0]).unwrap());
    let m = g.constant(Tensor::matrix(2, 2, vec![1.0, 2.0, 3.0, 4.0]).unwrap());
    let out = g.matmul(id, m).unwrap();
    assert_eq!(g.value(out).data(), &[1.0, 2.0, 3.0, 4.0]);

    let a = g.constant(Tensor::matrix(1, 2, vec![1.0, 2.0]).unwrap());
    let b = g.constant(Tensor::matrix(2, 1, vec![3.0, 4.0]).unwrap());
    let out = g.matmul(a, b).unwrap();
    assert_eq!(g.value(out).data(), &[11.0]);

    let x = g.constant(Tensor::zeros(vec![2, 3]));
    assert!(matches!(g.matmul(x, x), Err(TensorError::Shape { op: "matmul", .. })));
}

#[test]
fn matmul_matches_triple_loop() {
    let mut r = rng(1);
    let (a, b) = (matrix(4, 7, &mut r), matrix(7, 3, &mut r));
    let mut g = Graph::new();
    let (na, nb) = (g.constant(a.clone()), g.constant(b.clone()));
    let out = g.matmul(na, nb).unwrap();
    for i in 0..4 {
        for j in 0..3 {
            let expect: f64 = (0..7).map(|k| a.get2(i, k) * b.get2(k, j)).sum();
            assert!((g.value(out).get2(i, j) - expect).abs() < 1e-12);
        }
    }
}

#[test]
fn elementwise_examples() {
    let mut g = Graph::new();
    let z = g.constant(Tensor::vector(vec![0.0]));
    let s = g.sigmoid(z).unwrap();
    let t = g.tanh(z).unwrap();
    assert_eq!(g.value(s).data(), &[0.5]);
    assert_eq!(g.value(t).data(), &[0.0]);
    assert_eq!(sigmoid(-800.0), 0.0);
    assert_eq!(sigmoid(800.0), 1.0);

    let a = g.constant(Tensor::zeros(vec![2, 3]));
    let b = g.constant(Tensor::zeros(vec![2, 5]));
    let c = g.concat(&[a, b], 1).unwrap();
    assert_eq!(g.value(c).shape(), &[2, 8]);
    assert!(matches!(g.concat(&[a, b], 0), Err(TensorError::Shape { .. })));
    assert!(matches!(g.concat(&[a, b], 2), Err(TensorError::Axis { .. })));
    assert!(matches!(g.add(a, b), Err(TensorError::Shape { .. })));
}

#[test]
fn broadcasting_rules() {
    let mut g = Graph::new();
    let m = g.constant(Tensor::matrix(2, 3, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap());
    let row = g.constant(Tensor::vector(vec![10.0, 20.0, 30.0]));
    let col = g.constant(Tensor::matrix(2, 1, vec![0.0, 1.0]).unwrap());
    let added = g.add(m, row).unwrap();
    assert_eq!(g.value(added).data(), &[11.0, 22.0, 33.0, 14.0, 25.0, 36.0]);
    let masked = g.mul(m, col).unwrap();
    assert_eq!(g.value(masked).data(), &[0.0, 0.0, 0.0, 4.0, 5.0, 6.0]);
}

#[test]
fn slice_and_concat_invert() {
    let mut r = rng(2);
    let mut g = Graph::new();
    let x = g.constant(matrix(3, 5, &mut r));
    let left = g.slice(x, 1, 0, 2).unwrap();
    let right = g.slice(x, 1, 2, 5).unwrap();
    let back = g.concat(&[left, right], 1).unwrap();
    assert_eq!(g.value(back), g.value(x));
    assert!(g.slice(x, 0, 2, 4).is_err());
}

#[test]
fn softmax_cross_entropy_values() {
    let mut g = Graph::new();
    let zeros = g.constant(Tensor::zeros(vec![1, 10]));
    let loss = g.softmax_cross_entropy(zeros, &[4]).unwrap();
    assert!((g.value(loss).data()[0] - 10f64.ln()).abs() < 1e-15);
    assert!(matches!(g.softmax_cross_entropy(zeros, &[10]), Err(TensorError::Target { target: 10, classes: 10 })));

    let mut last = f64::INFINITY;
    for boost in [0.0, 1.0, 2.0, 5.0, 20.0] {
        let mut g = Graph::new();
        let mut logits = vec![0.0; 10];
        logits[3] = boost;
        let l = g.constant(Tensor::matrix(1, 10, logits).unwrap());
        let loss = g.softmax_cross_entropy(l, &[3]).unwrap();
        let v = g.value(loss).data()[0];
        assert!(v < last);
        last = v;
    }

    let mut r = rng(3);
    let logits = matrix(3, 4, &mut r);
    let rows: Vec<Vec<f64>> = (0..3).map(|i| logits.row(i).to_vec()).collect();
    let mut g = Graph::new();
    let l = g.constant(logits);
    let loss = g.softmax_cross_entropy(l, &[0, 3, 1]).unwrap();
    assert!((g.value(loss).data()[0] - reference_cross_entropy(&rows, &[0, 3, 1])).abs() < 1e-12);
}

#[test]
fn large_logits_stay_finite() {
    let mut g = Graph::new();
    let l = g.param(Tensor::matrix(1, 3, vec![1000.0, -1000.0, 999.0]).unwrap());
    let loss = g.softmax_cross_entropy(l, &[0]).unwrap();
    assert!(g.value(loss).data()[0].is_finite());
    g.backward(loss).unwrap();
    assert!(g.grad(l).unwrap().iter().all(|v| v.is_finite()));
}

#[test]
fn backward_examples() {
    let mut g = Graph::new();
    let x = g.param(Tensor::vector(vec![0.5; 5]));
    let s = g.sum(x).unwrap();
    g.backward(s).unwrap();
    assert_eq!(g.grad(x).unwrap(), &[1.0; 5]);

    let mut g = Graph::new();
    let x = g.param(Tensor::vector(vec![1.0, 2.0]));
    let sq = g.mul(x, x).unwrap();
    let s = g.sum(sq).unwrap();
    g.backward(s).unwrap();
    assert_eq!(g.grad(x).unwrap(), &[2.0, 4.0]);

    assert!(matches!(g.backward(sq), Err(TensorError::NonScalarLoss(_))));
}

#[test]
fn constants_receive_no_gradient() {
    let mut g = Graph::new();
    let c = g.constant(Tensor::vector(vec![1.0, 2.0]));
    let p = g.param(Tensor::vector(vec![3.0, 4.0]));
    let prod = g.mul(c, p).unwrap();
    let s = g.sum(prod).unwrap();
    g.backward(s).unwrap();
    assert!(g.grad(c).is_none());
    assert_eq!(g.grad(p).unwrap(), &[1.0, 2.0]);
}

#[test]
fn non_finite_forward_is_an_error() {
    let mut g = Graph::new();
    let big = g.constant(Tensor::matrix(1, 1, vec![1e200]).unwrap());
    assert!(matches!(g.matmul(big, big), Err(TensorError::NonFinite { op: "matmul" })));
}

/// Builds a scalar from the inputs with `f`, then compares every analytic
/// gradient entry with a central difference.
fn check_gradients(inputs: Vec<Tensor>, f: impl Fn(&mut Graph, &[NodeId]) -> NodeId) {
    let eval = |values: &[Tensor]| {
        let mut g = Graph::new();
        let ids: Vec<NodeId> = values.iter().map(|t| g.param(t.clone())).collect();
        let out = f(&mut g, &ids);
        (g, ids, out)
    };
    let (mut g, ids, out) = eval(&inputs);
    g.backward(out).unwrap();
    let eps = 1e-5;
    for (k, id) in ids.iter().enumerate() {
        let analytic = g.grad(*id).map(<[f64]>::to_vec).unwrap_or_else(|| vec![0.0; inputs[k].len()]);
        for (i, &expected) in analytic.iter().enumerate() {
            let mut plus = inputs.clone();
            plus[k].data_mut()[i] += eps;
            let mut minus = inputs.clone();
            minus[k].data_mut()[i] -= eps;
            let (gp, _, op) = eval(&plus);
            let (gm, _, om) = eval(&minus);
            let numeric = (gp.value(op).data()[0] - gm.value(om).data()[0]) / (2.0 * eps);
            let err = relative_error(expected, numeric);
            assert!(err < 1e-6, "input {} entry {}: analytic {} numeric {}", k, i, expected, numeric);
        }
    }
}

#[test]
fn op_gradients_match_finite_differences() {
    let mut r = rng(11);
    let weights = matrix(2, 4, &mut r);
    // Weighted sum so every output entry has a distinct upstream gradient.
    let reduce = move |g: &mut Graph, x: NodeId| {
        let w = g.constant(weights.clone());
        let y = g.mul(x, w).unwrap();
        g.sum(y).unwrap()
    };
    let r2 = reduce.clone();
    check_gradients(vec![matrix(2, 3, &mut r), matrix(3, 4, &mut r)], move |g, ids| {
        let y = g.matmul(ids[0], ids[1]).unwrap();
        r2(g, y)
    });
    let r2 = reduce.clone();
    check_gradients(vec![matrix(2, 4, &mut r), matrix(2, 4, &mut r)], move |g, ids| {
        let y = g.mul(ids[0], ids[1]).unwrap();
        let z = g.add(y, ids[1]).unwrap();
        r2(g, z)
    });
    let r2 = reduce.clone();
    check_gradients(vec![matrix(2, 4, &mut r), Tensor::vector(vec![0.1, -0.2, 0.3, 0.4]), matrix(2, 1, &mut r)], move |g, ids| {
        let y = g.add(ids[0], ids[1]).unwrap();
        let z = g.mul(y, ids[2]).unwrap();
        let w = g.mul(z, ids[1]).unwrap();
        r2(g, w)
    });
    let r2 = reduce.clone();
    check_gradients(vec![matrix(2, 4, &mut r)], move |g, ids| {
        let a = g.tanh(ids[0]).unwrap();
        let b = g.sigmoid(ids[0]).unwrap();
        let c = g.relu(ids[0]).unwrap();
        let ab = g.mul(a, b).unwrap();
        let abc = g.add(ab, c).unwrap();
        r2(g, abc)
    });
    let r2 = reduce.clone();
    check_gradients(vec![matrix(2, 1, &mut r), matrix(2, 3, &mut r), matrix(2, 6, &mut r)], move |g, ids| {
        let cat = g.concat(&[ids[0], ids[1]], 1).unwrap();
        let tail = g.slice(ids[2], 1, 1, 5).unwrap();
        let both = g.add(cat, tail).unwrap();
        r2(g, both)
    });
    check_gradients(vec![matrix(3, 4, &mut r)], |g, ids| g.softmax_cross_entropy(ids[0], &[0, 3, 1]).unwrap());
}

#[test]
fn fan_out_gradients_accumulate() {
    let mut g = Graph::new();
    let x = g.param(Tensor::vector(vec![3.0]));
    let a = g.mul(x, x).unwrap();
    let b = g.add(a, x).unwrap();
    let c = g.add(b, x).unwrap();
    let s = g.sum(c).unwrap();
    g.backward(s).unwrap();
    assert_eq!(g.grad(x).unwrap(), &[8.0]);
}
