//! Independent oracles shared by the integration tests: direct loops and
//! finite differences that do not go through the code under test.
#![allow(dead_code)]

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rvrecon::model::{
    init_parameters, mse_loss, relu_backward, relu_forward, Conv1dLayer, DenseLayer, ModelConfig,
    Tensor,
};
use rvrecon::physio::RespiratoryTrace;

pub const STEP: f64 = 1e-5;
pub const TOL: f64 = 1e-4;

/// Population std of the samples whose window is `round(w*fs)` long and
/// starts at `round(centre*fs - len/2)`, clipped to the trace.
pub fn naive_rv(x: &[f64], fs: f64, offset: f64, tr: f64, w: f64, k: usize) -> f64 {
    let len = (w * fs).round();
    let centre = (offset + (k as f64 + 0.5) * tr) * fs;
    let start = (centre - len / 2.0).round();
    let lo = start.max(0.0).min(x.len() as f64) as usize;
    let hi = (start + len).max(0.0).min(x.len() as f64) as usize;
    let win = &x[lo..hi];
    if win.is_empty() {
        return 0.0;
    }
    let m = win.iter().sum::<f64>() / win.len() as f64;
    (win.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / win.len() as f64).sqrt()
}

/// Offset sinusoid plus a slow random walk and white noise.
pub fn random_trace(seed: u64, n: usize, fs: f64) -> RespiratoryTrace {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    let offset = r.gen_range(-50.0..50.0);
    let period = r.gen_range(2.0..8.0);
    let mut walk = 0.0;
    let x = (0..n)
        .map(|i| {
            walk += r.gen_range(-0.01..0.01);
            offset + walk + (2.0 * PI * i as f64 / fs / period).sin() + r.gen_range(-0.1..0.1)
        })
        .collect();
    RespiratoryTrace::new("r", x, fs).unwrap()
}

pub fn sine(amp: f64, period: f64, seconds: f64, fs: f64) -> RespiratoryTrace {
    let n = (seconds * fs) as usize;
    RespiratoryTrace::new(
        "s",
        (0..n)
            .map(|i| amp * (2.0 * PI * i as f64 / fs / period).sin())
            .collect(),
        fs,
    )
    .unwrap()
}

/// Minimum over every monotone warping path, each path summed in order.
/// Exponential; only for short inputs.
pub fn dtw_brute(a: &[f64], b: &[f64]) -> f64 {
    fn walk(a: &[f64], b: &[f64], i: usize, j: usize, acc: f64, best: &mut f64) {
        let acc = acc + (a[i] - b[j]).abs();
        if i + 1 == a.len() && j + 1 == b.len() {
            *best = best.min(acc);
            return;
        }
        if i + 1 < a.len() {
            walk(a, b, i + 1, j, acc, best);
        }
        if j + 1 < b.len() {
            walk(a, b, i, j + 1, acc, best);
        }
        if i + 1 < a.len() && j + 1 < b.len() {
            walk(a, b, i + 1, j + 1, acc, best);
        }
    }
    let mut best = f64::INFINITY;
    walk(a, b, 0, 0, 0.0, &mut best);
    best
}

pub fn rel_err(a: f64, n: f64) -> f64 {
    let d = (a - n).abs();
    if d == 0.0 {
        0.0
    } else {
        d / (a.abs() + n.abs()).max(1e-7)
    }
}

pub fn random_tensor(shape: Vec<usize>, r: &mut ChaCha8Rng) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape, (0..n).map(|_| r.gen_range(-1.0..1.0)).collect()).unwrap()
}

pub fn dot(a: &Tensor, b: &Tensor) -> f64 {
    a.data().iter().zip(b.data()).map(|(x, y)| x * y).sum()
}

/// Compares `analytic` with central differences of `f` at every entry of `x`.
pub fn check(x: &Tensor, analytic: &Tensor, f: impl Fn(&Tensor) -> f64) -> Result<(), String> {
    if x.shape() != analytic.shape() {
        return Err(format!("shape {:?} vs {:?}", x.shape(), analytic.shape()));
    }
    for i in 0..x.len() {
        let mut p = x.clone();
        p.data_mut()[i] += STEP;
        let mut m = x.clone();
        m.data_mut()[i] -= STEP;
        let num = (f(&p) - f(&m)) / (2.0 * STEP);
        let e = rel_err(analytic.data()[i], num);
        if e > TOL {
            return Err(format!(
                "entry {i}: analytic {} numeric {num} rel {e}",
                analytic.data()[i]
            ));
        }
    }
    Ok(())
}

pub fn naive_conv(l: &Conv1dLayer, x: &Tensor) -> Vec<f64> {
    let len = x.shape()[1];
    let out_len = (len - l.kernel_size) / l.stride + 1;
    let (w, b) = (l.weights.data(), l.bias.data());
    let mut y = vec![0.0; l.out_channels * out_len];
    for o in 0..l.out_channels {
        for t in 0..out_len {
            let mut s = b[o];
            for c in 0..l.in_channels {
                for k in 0..l.kernel_size {
                    s += w[(o * l.in_channels + c) * l.kernel_size + k]
                        * x.data()[c * len + t * l.stride + k];
                }
            }
            y[o * out_len + t] = s;
        }
    }
    y
}

/// Random layer and input; `batch == 0` means an unbatched `[C x L]` input.
pub fn conv_case(seed: u64) -> (Conv1dLayer, Tensor, usize) {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    let ci = r.gen_range(1..4);
    let co = r.gen_range(1..4);
    let k = r.gen_range(1..5);
    let s = r.gen_range(1..4);
    let len = k + r.gen_range(0..9);
    let batch = r.gen_range(0..3);
    let mut layer = Conv1dLayer::new(ci, co, k, s).unwrap();
    layer.weights = random_tensor(vec![co, ci, k], &mut r);
    layer.bias = random_tensor(vec![co], &mut r);
    let shape = if batch == 0 {
        vec![ci, len]
    } else {
        vec![batch, ci, len]
    };
    (layer, random_tensor(shape, &mut r), batch)
}

/// Largest deviation of the conv forward pass from direct loops.
pub fn conv_forward_error(seed: u64) -> f64 {
    let (layer, x, batch) = conv_case(seed);
    let y = layer.forward(&x).unwrap();
    let items: Vec<Tensor> = if batch == 0 {
        vec![x]
    } else {
        let per = x.len() / batch;
        (0..batch)
            .map(|b| {
                Tensor::new(
                    x.shape()[1..].to_vec(),
                    x.data()[b * per..(b + 1) * per].to_vec(),
                )
                .unwrap()
            })
            .collect()
    };
    let expected: Vec<f64> = items.iter().flat_map(|xi| naive_conv(&layer, xi)).collect();
    assert_eq!(expected.len(), y.len());
    y.data()
        .iter()
        .zip(&expected)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max)
}

/// Probes the layer with a random output gradient `g`, i.e. checks the
/// gradients of `<forward(x), g>`.
pub fn conv_gradcheck(seed: u64) -> Result<(), String> {
    let (layer, x, _) = conv_case(seed);
    let y = layer.forward(&x).unwrap();
    let mut r = ChaCha8Rng::seed_from_u64(seed ^ 1);
    let g = random_tensor(y.shape().to_vec(), &mut r);
    let grads = layer.backward(&x, &g).unwrap();
    check(&x, &grads.input, |xp| dot(&layer.forward(xp).unwrap(), &g))?;
    check(&layer.weights, &grads.weights, |wp| {
        let mut l = layer.clone();
        l.weights = wp.clone();
        dot(&l.forward(&x).unwrap(), &g)
    })?;
    check(&layer.bias, &grads.bias, |bp| {
        let mut l = layer.clone();
        l.bias = bp.clone();
        dot(&l.forward(&x).unwrap(), &g)
    })
}

pub fn dense_gradcheck(seed: u64) -> Result<(), String> {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    let (fi, fo, batch) = (r.gen_range(1..7), r.gen_range(1..5), r.gen_range(0..4));
    let mut layer = DenseLayer::new(fi, fo).unwrap();
    layer.weights = random_tensor(vec![fo, fi], &mut r);
    layer.bias = random_tensor(vec![fo], &mut r);
    let x = random_tensor(
        if batch == 0 {
            vec![fi]
        } else {
            vec![batch, fi]
        },
        &mut r,
    );
    let g = random_tensor(layer.forward(&x).unwrap().shape().to_vec(), &mut r);
    let grads = layer.backward(&x, &g).unwrap();
    check(&x, &grads.input, |xp| dot(&layer.forward(xp).unwrap(), &g))?;
    check(&layer.weights, &grads.weights, |wp| {
        let mut l = layer.clone();
        l.weights = wp.clone();
        dot(&l.forward(&x).unwrap(), &g)
    })?;
    check(&layer.bias, &grads.bias, |bp| {
        let mut l = layer.clone();
        l.bias = bp.clone();
        dot(&l.forward(&x).unwrap(), &g)
    })
}

pub fn relu_gradcheck(seed: u64) -> Result<(), String> {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    let n = r.gen_range(1..20);
    // Stay clear of the kink at 0, where the derivative is undefined.
    let data = (0..n)
        .map(|_| {
            let v: f64 = r.gen_range(1e-3..1.0);
            if r.gen_bool(0.5) {
                v
            } else {
                -v
            }
        })
        .collect();
    let x = Tensor::new(vec![n], data).unwrap();
    let g = random_tensor(vec![n], &mut r);
    let analytic = relu_backward(&x, &g).unwrap();
    check(&x, &analytic, |xp| dot(&relu_forward(xp), &g))
}

/// Parameter gradients of the MSE loss of a whole tiny network.
pub fn model_gradcheck(seed: u64) -> Result<(), String> {
    let cfg = ModelConfig::tiny(8, 3);
    let mut state = init_parameters(&cfg, seed).unwrap();
    let mut r = ChaCha8Rng::seed_from_u64(seed ^ 7);
    for p in state.network.params_mut() {
        for v in p.data_mut() {
            *v = r.gen_range(-1.0..1.0);
        }
    }
    let batch = r.gen_range(1..4);
    let x = random_tensor(vec![batch, 3, 8], &mut r);
    let y: Vec<f64> = (0..batch).map(|_| r.gen_range(-1.0..1.0)).collect();
    let net = state.network;
    let (_, grads) = net.loss_and_grads(&x, &y).unwrap();
    for (pi, name) in net.param_names().iter().enumerate() {
        let base = net.params()[pi].clone();
        check(&base, &grads[pi], |pp| {
            let mut n2 = net.clone();
            *n2.params_mut()[pi] = pp.clone();
            mse_loss(n2.forward(&x).unwrap().data(), &y).unwrap().0
        })
        .map_err(|e| format!("{name}: {e}"))?;
    }
    Ok(())
}
