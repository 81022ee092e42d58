use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::Error;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn random(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
}

fn conv_store(seed: u64, spec: &ConvSpec, t_in: usize) -> (ParamStore, [ParamId; 3]) {
    let mut r = rng(seed);
    let mut s = ParamStore::new();
    let x = s.add("x", vec![spec.in_channels, t_in], random(&mut r, spec.in_channels * t_in)).unwrap();
    let w = s.add("w", spec.weight_shape(), random(&mut r, spec.out_channels * spec.fan_in())).unwrap();
    let b = s.add("b", vec![spec.out_channels], random(&mut r, spec.out_channels)).unwrap();
    (s, [x, w, b])
}

fn probe(seed: u64, n: usize) -> Vec<f64> {
    random(&mut rng(seed ^ 0xabcdef), n)
}

const SEEDS: [u64; 5] = [1, 2, 3, 4, 5];
const TOL: f64 = 1e-5;

#[test]
fn conv_widths_follow_the_valid_formula() {
    let cases = [(300, 5, 1, 296), (296, 5, 2, 288), (288, 7, 3, 270), (270, 1, 1, 270)];
    for (t_in, k, d, t_out) in cases {
        let spec = ConvSpec::new(2, 3, k, d);
        let (s, [x, w, b]) = conv_store(0, &spec, t_in);
        let mut g = Graph::new();
        let (xn, wn, bn) = (g.param(&s, x), g.param(&s, w), g.param(&s, b));
        let y = g.conv1d(xn, wn, bn, &spec).unwrap();
        assert_eq!(g.shape(y), [3, t_out]);
        assert_eq!(spec.output_width(t_in), Some(t_out));
    }
}

#[test]
fn conv_identity_kernel_and_short_input() {
    let spec = ConvSpec::new(1, 1, 1, 1);
    let mut g = Graph::new();
    let x = g.input(Tensor::matrix(1, 4, vec![1.0, -2.0, 3.0, 0.5]).unwrap());
    let w = g.input(Tensor::new(vec![1, 1, 1], vec![1.0]).unwrap());
    let b = g.input(Tensor::vector(vec![0.0]));
    let y = g.conv1d(x, w, b, &spec).unwrap();
    assert_eq!(g.value(y).data(), [1.0, -2.0, 3.0, 0.5]);

    let wide = ConvSpec::new(1, 1, 3, 2);
    let w3 = g.input(Tensor::new(vec![1, 1, 3], vec![1.0; 3]).unwrap());
    assert!(matches!(g.conv1d(x, w3, b, &wide), Err(Error::Shape { .. })));
    let strided = ConvSpec { stride: 2, ..spec };
    assert!(g.conv1d(x, w, b, &strided).is_err());
}

#[test]
fn sigmoid_values_and_slope() {
    let mut s = ParamStore::new();
    let id = s.add("x", vec![3], vec![0.0, -800.0, 800.0]).unwrap();
    let mut g = Graph::new();
    let x = g.param(&s, id);
    let y = g.sigmoid(x);
    assert_eq!(g.value(y).data(), [0.5, 0.0, 1.0]);
    let l = g.weighted_sum(y, vec![1.0, 0.0, 0.0]).unwrap();
    g.backward(l, &mut s).unwrap();
    assert_eq!(s.get(id).grad[0], 0.25);
}

#[test]
fn relu_values_and_indicator_gradient() {
    let mut s = ParamStore::new();
    let id = s.add("x", vec![4], vec![-1.0, 2.0, 0.0, 0.3]).unwrap();
    let mut g = Graph::new();
    let x = g.param(&s, id);
    let y = g.relu(x);
    assert_eq!(g.value(y).data(), [0.0, 2.0, 0.0, 0.3]);
    let l = g.sum(y);
    g.backward(l, &mut s).unwrap();
    assert_eq!(s.get(id).grad, [0.0, 1.0, 0.0, 1.0]);
}

#[test]
fn mul_and_mean2_identities() {
    let mut s = ParamStore::new();
    let a = s.add("a", vec![3], vec![1.0, -2.0, 3.0]).unwrap();
    let mut g = Graph::new();
    let an = g.param(&s, a);
    let ones = g.input(Tensor::vector(vec![1.0; 3]));
    let zeros = g.input(Tensor::vector(vec![0.0; 3]));
    let b = g.input(Tensor::vector(vec![0.5, 4.0, -1.0]));
    let p1 = g.mul(an, ones).unwrap();
    assert_eq!(g.value(p1).data(), [1.0, -2.0, 3.0]);
    let p0 = g.mul(an, zeros).unwrap();
    assert_eq!(g.value(p0).data(), [0.0; 3]);
    let m = g.mean2(an, an).unwrap();
    assert_eq!(g.value(m).data(), g.value(an).data());
    let neg = g.input(Tensor::vector(vec![-1.0, 2.0, -3.0]));
    let z = g.mean2(an, neg).unwrap();
    assert_eq!(g.value(z).data(), [0.0; 3]);

    let pb = g.mul(an, b).unwrap();
    let l = g.sum(pb);
    g.backward(l, &mut s).unwrap();
    assert_eq!(s.get(a).grad, [0.5, 4.0, -1.0]);

    s.zero_grads();
    let mut g = Graph::new();
    let an = g.param(&s, a);
    let other = g.input(Tensor::vector(vec![9.0; 3]));
    let m = g.mean2(an, other).unwrap();
    let l = g.sum(m);
    g.backward(l, &mut s).unwrap();
    assert_eq!(s.get(a).grad, [0.5; 3]);

    let short = g.input(Tensor::vector(vec![1.0; 2]));
    assert!(g.mul(an, short).is_err());
    assert!(g.mean2(an, short).is_err());
}

#[test]
fn concat_stacks_rows() {
    let mut g = Graph::new();
    let a = g.input(Tensor::zeros(vec![256, 270]));
    let b = g.input(Tensor::zeros(vec![256, 270]));
    let c = g.concat_rows(a, b).unwrap();
    assert_eq!(g.shape(c), [512, 270]);

    let x = g.input(Tensor::matrix(1, 2, vec![1.0, 2.0]).unwrap());
    let y = g.input(Tensor::matrix(2, 2, vec![3.0, 4.0, 5.0, 6.0]).unwrap());
    let xy = g.concat_rows(x, y).unwrap();
    let v = g.value(xy).data();
    assert_eq!(&v[..2], g.value(x).data());
    assert_eq!(&v[2..], g.value(y).data());

    let empty = g.input(Tensor::zeros(vec![0, 2]));
    assert!(g.concat_rows(x, empty).is_err());
    let narrow = g.input(Tensor::zeros(vec![1, 3]));
    assert!(g.concat_rows(x, narrow).is_err());
}

#[test]
fn statistics_pool_values() {
    let mut g = Graph::new();
    let h = g.input(Tensor::matrix(2, 2, vec![1.0, 3.0, 4.0, 4.0]).unwrap());
    let s = g.statistics_pool(h).unwrap();
    let v = g.value(s).data();
    assert_eq!(v[0], 2.0);
    assert_eq!(v[1], 4.0);
    assert!((v[2] - 1.0).abs() < 1e-12);
    // sqrt of the variance floor
    assert!((v[3] - POOL_VARIANCE_EPS.sqrt()).abs() < 1e-15);

    let big = g.input(Tensor::zeros(vec![1500, 270]));
    let pooled = g.statistics_pool(big).unwrap();
    assert_eq!(g.shape(pooled), [3000]);
}

#[test]
fn linear_identity_and_zero_weight() {
    let mut g = Graph::new();
    let x = g.input(Tensor::vector(vec![1.0, -2.0, 3.0]));
    let mut eye = vec![0.0; 9];
    for i in 0..3 {
        eye[i * 4] = 1.0;
    }
    let w = g.input(Tensor::matrix(3, 3, eye).unwrap());
    let zero_b = g.input(Tensor::vector(vec![0.0; 3]));
    let y = g.linear(x, w, zero_b).unwrap();
    assert_eq!(g.value(y).data(), [1.0, -2.0, 3.0]);

    let zw = g.input(Tensor::zeros(vec![2, 3]));
    let b = g.input(Tensor::vector(vec![0.5, -0.5]));
    let y = g.linear(x, zw, b).unwrap();
    assert_eq!(g.value(y).data(), [0.5, -0.5]);

    let big_w = g.input(Tensor::zeros(vec![512, 3000]));
    let big_b = g.input(Tensor::zeros(vec![512]));
    let big_x = g.input(Tensor::zeros(vec![3000]));
    let y = g.linear(big_x, big_w, big_b).unwrap();
    assert_eq!(g.shape(y), [512]);

    assert!(g.linear(x, big_w, big_b).is_err());
}

#[test]
fn cross_entropy_reference_values() {
    let mut g = Graph::new();
    let z = g.input(Tensor::vector(vec![0.3; 8]));
    let l = g.softmax_cross_entropy(z, 2).unwrap();
    assert!((g.value(l).item() - 8f64.ln()).abs() < 1e-12);

    let mut margin = vec![0.0; 5];
    margin[1] = 1e3;
    let z = g.input(Tensor::vector(margin));
    let l = g.softmax_cross_entropy(z, 1).unwrap();
    assert_eq!(g.value(l).item(), 0.0);

    assert!(matches!(
        g.softmax_cross_entropy(z, 5),
        Err(Error::LabelOutOfRange { label: 5, classes: 5 })
    ));

    let mut s = ParamStore::new();
    let id = s.add("z", vec![4], vec![0.1, -1.0, 2.0, 0.7]).unwrap();
    let mut g = Graph::new();
    let z = g.param(&s, id);
    let l = g.softmax_cross_entropy(z, 3).unwrap();
    g.backward(l, &mut s).unwrap();
    let grad = &s.get(id).grad;
    assert!(grad.iter().sum::<f64>().abs() < 1e-15);
    let p = softmax(&[0.1, -1.0, 2.0, 0.7]);
    assert!((grad[3] - (p[3] - 1.0)).abs() < 1e-15);
}

#[test]
fn softmax_is_a_distribution() {
    let mut r = rng(3);
    for _ in 0..50 {
        let z: Vec<f64> = (0..10).map(|_| r.gen_range(-50.0..50.0)).collect();
        let p = softmax(&z);
        assert!(p.iter().all(|&v| v >= 0.0));
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }
}

#[test]
fn backward_accumulates_and_ignores_unused() {
    let mut s = ParamStore::new();
    let used = s.add("used", vec![2, 2], vec![1.0; 4]).unwrap();
    let unused = s.add("unused", vec![3], vec![1.0; 3]).unwrap();
    let mut g = Graph::new();
    let p = g.param(&s, used);
    let l = g.sum(p);
    g.backward(l, &mut s).unwrap();
    assert_eq!(s.get(used).grad, [1.0; 4]);
    g.backward(l, &mut s).unwrap();
    assert_eq!(s.get(used).grad, [2.0; 4]);
    assert_eq!(s.get(unused).grad, [0.0; 3]);

    let mut g = Graph::new();
    let x = g.input(Tensor::vector(vec![1.0, 2.0]));
    let l = g.sum(x);
    assert!(matches!(g.backward(l, &mut s), Err(Error::DetachedGraph)));
    let not_scalar = g.input(Tensor::vector(vec![1.0, 2.0]));
    assert!(g.backward(not_scalar, &mut s).is_err());
}

// Every primitive composed with a fixed random probe into a scalar.

fn check<F>(store: &mut ParamStore, build: F) -> f64
where
    F: FnMut(&mut Graph, &ParamStore) -> crate::Result<NodeId>,
{
    finite_diff_check(store, build, 1e-5).unwrap().max_rel_error
}

#[test]
fn gradcheck_conv1d() {
    for seed in SEEDS {
        let spec = ConvSpec::new(3, 4, 3, 2);
        let (mut s, [x, w, b]) = conv_store(seed, &spec, 12);
        let probe = probe(seed, 4 * 8);
        let err = check(&mut s, |g, s| {
            let (xn, wn, bn) = (g.param(s, x), g.param(s, w), g.param(s, b));
            let y = g.conv1d(xn, wn, bn, &spec)?;
            g.weighted_sum(y, probe.clone())
        });
        assert!(err < TOL, "seed {seed}: {err}");
    }
}

fn unary_check(seed: u64, op: fn(&mut Graph, NodeId) -> NodeId) -> f64 {
    let mut r = rng(seed);
    let mut s = ParamStore::new();
    let x = s.add("x", vec![3, 7], random(&mut r, 21).iter().map(|v| 3.0 * v).collect()).unwrap();
    let probe = probe(seed, 21);
    check(&mut s, |g, s| {
        let xn = g.param(s, x);
        let y = op(g, xn);
        g.weighted_sum(y, probe.clone())
    })
}

#[test]
fn gradcheck_sigmoid_and_relu() {
    for seed in SEEDS {
        assert!(unary_check(seed, Graph::sigmoid) < TOL);
        assert!(unary_check(seed, Graph::relu) < TOL);
    }
}

#[test]
fn gradcheck_binary_ops() {
    type BinOp = fn(&mut Graph, NodeId, NodeId) -> crate::Result<NodeId>;
    let ops: [(&str, BinOp, usize); 3] = [
        ("mul", Graph::mul, 3),
        ("mean2", Graph::mean2, 3),
        ("concat_rows", Graph::concat_rows, 5),
    ];
    for seed in SEEDS {
        for (name, op, b_rows) in ops {
            let mut r = rng(seed);
            let mut s = ParamStore::new();
            let a = s.add("a", vec![3, 6], random(&mut r, 18)).unwrap();
            let b = s.add("b", vec![b_rows, 6], random(&mut r, b_rows * 6)).unwrap();
            let out_len = if name == "concat_rows" { 48 } else { 18 };
            let probe = probe(seed, out_len);
            let err = check(&mut s, |g, s| {
                let (an, bn) = (g.param(s, a), g.param(s, b));
                let y = op(g, an, bn)?;
                g.weighted_sum(y, probe.clone())
            });
            assert!(err < TOL, "{name} seed {seed}: {err}");
        }
    }
}

#[test]
fn gradcheck_pool_linear_and_loss() {
    for seed in SEEDS {
        let mut r = rng(seed);
        let mut s = ParamStore::new();
        let h = s.add("h", vec![4, 9], random(&mut r, 36)).unwrap();
        let w = s.add("w", vec![5, 8], random(&mut r, 40)).unwrap();
        let b = s.add("b", vec![5], random(&mut r, 5)).unwrap();
        let err = check(&mut s, |g, s| {
            let hn = g.param(s, h);
            let pooled = g.statistics_pool(hn)?;
            let (wn, bn) = (g.param(s, w), g.param(s, b));
            let z = g.linear(pooled, wn, bn)?;
            g.softmax_cross_entropy(z, (seed % 5) as usize)
        });
        assert!(err < TOL, "seed {seed}: {err}");
    }
}

#[test]
fn gradcheck_composite_conv_relu_pool_linear() {
    for seed in SEEDS {
        let spec = ConvSpec::new(3, 6, 3, 2);
        let (mut s, [x, w, b]) = conv_store(seed, &spec, 15);
        let mut r = rng(seed + 100);
        let fw = s.add("fw", vec![4, 12], random(&mut r, 48)).unwrap();
        let fb = s.add("fb", vec![4], random(&mut r, 4)).unwrap();
        let err = check(&mut s, |g, s| {
            let (xn, wn, bn) = (g.param(s, x), g.param(s, w), g.param(s, b));
            let c = g.conv1d(xn, wn, bn, &spec)?;
            let a = g.relu(c);
            let p = g.statistics_pool(a)?;
            let (fwn, fbn) = (g.param(s, fw), g.param(s, fb));
            let z = g.linear(p, fwn, fbn)?;
            g.softmax_cross_entropy(z, 1)
        });
        // compositions reach gradients small enough that the difference
        // quotient's rounding error shows, hence the looser bound
        assert!(err < 1e-4, "seed {seed}: {err}");
    }
}

#[test]
fn gradcheck_linear_map_is_exact_to_rounding() {
    let mut s = ParamStore::new();
    let x = s.add("x", vec![6], probe(1, 6)).unwrap();
    let w = probe(2, 6);
    let err = check(&mut s, |g, s| {
        let xn = g.param(s, x);
        g.weighted_sum(xn, w.clone())
    });
    assert!(err < 1e-9, "{err}");
}

#[test]
fn gradcheck_detects_corrupted_conv_backward() {
    let spec = ConvSpec::new(2, 3, 3, 1);
    let (mut s, [x, w, b]) = conv_store(9, &spec, 10);
    let probe = probe(9, 3 * 8);
    let err = check(&mut s, |g, s| {
        g.inject_fault(Fault::ConvBackwardSignFlip);
        let (xn, wn, bn) = (g.param(s, x), g.param(s, w), g.param(s, b));
        let y = g.conv1d(xn, wn, bn, &spec)?;
        g.weighted_sum(y, probe.clone())
    });
    assert!(err > 1e-3, "{err}");
}

#[test]
fn pool_std_is_nonnegative_and_zero_only_for_constant_rows() {
    let mut r = rng(4);
    let mut g = Graph::new();
    for _ in 0..20 {
        let mut data = random(&mut r, 5 * 6);
        data[..6].fill(0.7);
        let h = g.input(Tensor::matrix(5, 6, data).unwrap());
        let p = g.statistics_pool(h).unwrap();
        let v = g.value(p).data();
        assert!(v[5..].iter().all(|&s| s >= 0.0));
        assert!((v[5] - POOL_VARIANCE_EPS.sqrt()).abs() < 1e-12);
        assert!(v[6..].iter().all(|&s| s > 1e-3));
    }
}

#[test]
fn backward_is_bit_reproducible() {
    let run = || {
        let spec = ConvSpec::new(3, 4, 5, 3);
        let (mut s, [x, w, b]) = conv_store(11, &spec, 20);
        let mut g = Graph::new();
        let (xn, wn, bn) = (g.param(&s, x), g.param(&s, w), g.param(&s, b));
        let c = g.conv1d(xn, wn, bn, &spec).unwrap();
        let sg = g.sigmoid(c);
        let m = g.mul(c, sg).unwrap();
        let p = g.statistics_pool(m).unwrap();
        let l = g.weighted_sum(p, probe(11, 8)).unwrap();
        g.backward(l, &mut s).unwrap();
        s
    };
    assert_eq!(run(), run());
}
