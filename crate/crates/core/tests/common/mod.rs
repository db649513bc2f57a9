//! Finite-difference gradient checks shared by the gradient and acceptance suites.
#![allow(dead_code)]

use dlsr::srnet::{
    backward, forward, forward_with_cache, l1_loss_backward, l1_loss_forward, relu_backward, relu_forward, Conv2d,
    NetworkParams, Tensor4,
};
use rand::Rng;

pub const STEP: f64 = 1e-5;

pub fn random_tensor<R: Rng>(shape: [usize; 4], rng: &mut R) -> Tensor4 {
    let len = shape.iter().product();
    Tensor4::from_vec(shape[0], shape[1], shape[2], shape[3], (0..len).map(|_| rng.random_range(-1.0..1.0)).collect())
        .unwrap()
}

fn dot(a: &Tensor4, b: &Tensor4) -> f64 {
    a.data.iter().zip(&b.data).map(|(x, y)| x * y).sum()
}

/// `max |analytic − numeric| / max |numeric|`.
pub fn relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    assert_eq!(analytic.len(), numeric.len());
    let scale = numeric.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-12);
    analytic.iter().zip(numeric).map(|(a, n)| (a - n).abs()).fold(0.0, f64::max) / scale
}

/// Central differences of `f` with respect to the entries `indices` of `x`.
/// Entries whose one-sided differences disagree straddle a ReLU kink and are
/// returned as `None`.
pub fn numeric_grad(x: &mut [f64], indices: &[usize], mut f: impl FnMut(&[f64]) -> f64) -> Vec<Option<f64>> {
    indices
        .iter()
        .map(|&i| {
            let orig = x[i];
            let mid = f(x);
            x[i] = orig + STEP;
            let up = f(x);
            x[i] = orig - STEP;
            let down = f(x);
            x[i] = orig;
            let (fwd, bwd) = ((up - mid) / STEP, (mid - down) / STEP);
            let tol = 1e-4 * fwd.abs().max(bwd.abs()).max(1e-3);
            ((fwd - bwd).abs() <= tol).then_some((up - down) / (2.0 * STEP))
        })
        .collect()
}

/// Like [`compare`], but any skipped entry counts as a failure.
pub fn smooth(analytic: &[f64], numeric: &[Option<f64>]) -> f64 {
    match compare(analytic, numeric) {
        (e, 0) => e,
        _ => f64::INFINITY,
    }
}

/// Relative error over the entries with a defined numeric gradient, plus the
/// number of entries skipped at kinks.
pub fn compare(analytic: &[f64], numeric: &[Option<f64>]) -> (f64, usize) {
    let (a, n): (Vec<f64>, Vec<f64>) = analytic
        .iter()
        .zip(numeric)
        .filter_map(|(a, n)| n.map(|n| (*a, n)))
        .unzip();
    (relative_error(&a, &n), analytic.len() - a.len())
}

fn all(len: usize) -> Vec<usize> {
    (0..len).collect()
}

/// Conv gradients of `L = <r, conv(x)>` for weight, bias and input.
pub fn conv_check(seed: u64) -> f64 {
    let mut rng = dlsr::rng::seeded(seed);
    let (ci, co) = (rng.random_range(1..4), rng.random_range(1..4));
    let shape = [rng.random_range(1..3), ci, rng.random_range(1..6), rng.random_range(1..6)];
    let mut conv = Conv2d::he_normal(co, ci, &mut rng);
    conv.bias.iter_mut().for_each(|b| *b = rng.random_range(-1.0..1.0));
    let mut x = random_tensor(shape, &mut rng);
    let r = random_tensor([shape[0], co, shape[2], shape[3]], &mut rng);
    let g = conv.backward(&x, &r, true).unwrap();

    let mut worst = 0.0f64;
    let mut w = conv.weight.clone();
    let n = w.len();
    let num = numeric_grad(&mut w, &all(n), |w| {
        let mut c = conv.clone();
        c.weight.copy_from_slice(w);
        dot(&c.forward(&x).unwrap(), &r)
    });
    worst = worst.max(smooth(&g.weight, &num));
    let mut b = conv.bias.clone();
    let n = b.len();
    let num = numeric_grad(&mut b, &all(n), |b| {
        let mut c = conv.clone();
        c.bias.copy_from_slice(b);
        dot(&c.forward(&x).unwrap(), &r)
    });
    worst = worst.max(smooth(&g.bias, &num));
    let len = x.data.len();
    let num = numeric_grad(&mut x.data.clone(), &all(len), |d| {
        x.data.copy_from_slice(d);
        dot(&conv.forward(&x).unwrap(), &r)
    });
    worst.max(smooth(&g.input.unwrap().data, &num))
}

/// ReLU gradient on inputs kept at least `0.01` away from the kink.
pub fn relu_check(seed: u64) -> f64 {
    let mut rng = dlsr::rng::seeded(seed);
    let mut x = random_tensor([1, 3, 4, 5], &mut rng);
    for v in x.data.iter_mut() {
        if v.abs() < 0.01 {
            *v += 0.02;
        }
    }
    let r = random_tensor([1, 3, 4, 5], &mut rng);
    let analytic = relu_backward(&x, &r);
    let len = x.data.len();
    let num = numeric_grad(&mut x.data.clone(), &all(len), |d| {
        let t = Tensor4::from_vec(1, 3, 4, 5, d.to_vec()).unwrap();
        dot(&relu_forward(&t), &r)
    });
    smooth(&analytic.data, &num)
}

/// L1 gradient with `|pred − target| ≥ 0.01` everywhere.
pub fn l1_check(seed: u64) -> f64 {
    let mut rng = dlsr::rng::seeded(seed);
    let target = random_tensor([2, 2, 3, 4], &mut rng);
    let mut pred = random_tensor([2, 2, 3, 4], &mut rng);
    for (p, t) in pred.data.iter_mut().zip(&target.data) {
        if (*p - t).abs() < 0.01 {
            *p += 0.02;
        }
    }
    let analytic = l1_loss_backward(&pred, &target).unwrap();
    let len = pred.data.len();
    let num = numeric_grad(&mut pred.data.clone(), &all(len), |d| {
        let p = Tensor4::from_vec(2, 2, 3, 4, d.to_vec()).unwrap();
        l1_loss_forward(&p, &target).unwrap()
    });
    smooth(&analytic.data, &num)
}

fn small_network(seed: u64) -> (NetworkParams, Tensor4, Tensor4, u32) {
    let mut rng = dlsr::rng::seeded(seed);
    let m = rng.random_range(1..4);
    let mut p = NetworkParams::init(m, 4, 2, &mut rng);
    // random tail and biases so every path carries gradient
    for t in p.tensors_mut() {
        if t.iter().all(|v| *v == 0.0) {
            t.iter_mut().for_each(|v| *v = rng.random_range(-0.5..0.5));
        }
    }
    let scale = 2;
    let x = random_tensor([1, m + 1, 6, 6], &mut rng);
    let r = random_tensor([1, m, 12, 12], &mut rng);
    (p, x, r, scale)
}

pub struct NetworkCheck {
    pub params: f64,
    pub input: f64,
    pub checked: usize,
    /// Entries whose perturbation crossed a ReLU kink.
    pub skipped: usize,
}

/// Full network, `L = <r, net(x)>`: error over every parameter tensor
/// (a seeded subset of entries per tensor) and every input entry.
pub fn network_check(seed: u64) -> NetworkCheck {
    let (params, mut x, r, scale) = small_network(seed);
    let (_, cache) = forward_with_cache(&params, &x, scale).unwrap();
    let (grads, g_in) = backward(&params, &cache, &r, true).unwrap();
    let mut pick = dlsr::rng::seeded(seed ^ 0x5eed);

    let mut param_err = 0.0f64;
    let mut report = NetworkCheck { params: 0.0, input: 0.0, checked: 0, skipped: 0 };
    let analytic = grads.tensors();
    for k in 0..analytic.len() {
        let len = analytic[k].len();
        let idx: Vec<usize> = if len <= 12 { all(len) } else { (0..12).map(|_| pick.random_range(0..len)).collect() };
        let mut values = params.tensors()[k].to_vec();
        let num = numeric_grad(&mut values, &idx, |v| {
            let mut p = params.clone();
            p.tensors_mut()[k].copy_from_slice(v);
            dot(&forward(&p, &x, scale).unwrap(), &r)
        });
        let a: Vec<f64> = idx.iter().map(|&i| analytic[k][i]).collect();
        let (e, skip) = compare(&a, &num);
        param_err = param_err.max(e);
        report.skipped += skip;
        report.checked += idx.len();
    }

    let len = x.data.len();
    let num = numeric_grad(&mut x.data.clone(), &all(len), |d| {
        x.data.copy_from_slice(d);
        dot(&forward(&params, &x, scale).unwrap(), &r)
    });
    let (input, skip) = compare(&g_in.unwrap().data, &num);
    report.params = param_err;
    report.input = input;
    report.skipped += skip;
    report.checked += len;
    report
}
