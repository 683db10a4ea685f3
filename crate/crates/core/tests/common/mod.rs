#![allow(dead_code)]

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use robustlab::{
    scaled_softmax_cross_entropy, Activation, Layer, MlpConfig, MlpParams, Tape, Tensor,
};

pub fn random_tensor(rng: &mut ChaCha8Rng, shape: Vec<usize>, lo: f64, hi: f64) -> Tensor {
    let n = shape.iter().product();
    let data = (0..n).map(|_| rng.random_range(lo..hi)).collect();
    Tensor::new(shape, data).unwrap()
}

/// MLP with 1 to `max_layers` linear layers, widths up to `max_width`.
pub fn random_model(
    rng: &mut ChaCha8Rng,
    input_dim: usize,
    classes: usize,
    max_layers: usize,
    max_width: usize,
) -> MlpParams {
    let layers = rng.random_range(1..=max_layers);
    let mut sizes = vec![input_dim];
    for _ in 1..layers {
        sizes.push(rng.random_range(1..=max_width));
    }
    sizes.push(classes);
    let act = if rng.random_bool(0.5) { Activation::Relu } else { Activation::Tanh };
    let cfg = MlpConfig::new(sizes, act, rng.random()).unwrap();
    MlpParams::init(&cfg).unwrap()
}

/// Tiny 2-D classifier with random weights and biases, so the decision
/// boundary crosses the unit square.
pub fn tiny_2d_model(rng: &mut ChaCha8Rng) -> MlpParams {
    let width = rng.random_range(2..=8);
    let act = if rng.random_bool(0.5) { Activation::Relu } else { Activation::Tanh };
    let cfg = MlpConfig::new(vec![2, width, 2], act, 0).unwrap();
    let layers = vec![
        Layer {
            weight: random_tensor(rng, vec![2, width], -4.0, 4.0),
            bias: random_tensor(rng, vec![width], -2.0, 2.0),
        },
        Layer {
            weight: random_tensor(rng, vec![width, 2], -2.0, 2.0),
            bias: random_tensor(rng, vec![2], -0.5, 0.5),
        },
    ];
    MlpParams::from_layers(cfg, layers).unwrap()
}

fn weighted_loss(model: &MlpParams, x: &Tensor, y: &[usize], alpha: f64, w: &[f64]) -> f64 {
    let z = model.forward_logits(x).unwrap();
    let l = scaled_softmax_cross_entropy(&z, y, alpha).unwrap();
    l.iter().zip(w).map(|(a, b)| a * b).sum::<f64>() / w.len() as f64
}

fn with_entry(model: &MlpParams, layer: usize, bias: bool, idx: usize, delta: f64) -> MlpParams {
    let mut layers = model.layers().to_vec();
    let t = if bias { &mut layers[layer].bias } else { &mut layers[layer].weight };
    let mut data = t.data().to_vec();
    data[idx] += delta;
    *t = Tensor::new(t.shape().to_vec(), data).unwrap();
    MlpParams::from_layers(model.config().clone(), layers).unwrap()
}

/// Largest |finite difference − autodiff| over every parameter and input
/// coordinate, divided by the largest gradient magnitude seen by either.
pub fn gradient_check(model: &MlpParams, x: &Tensor, y: &[usize], alpha: f64, w: &[f64]) -> f64 {
    let mut tape = Tape::new();
    let xv = tape.leaf(x.clone());
    let (logits, params) = model.forward_on_tape(&mut tape, xv, true).unwrap();
    let ce = tape.scaled_softmax_cross_entropy(logits, y, alpha).unwrap();
    let loss = tape.weighted_mean(ce, w).unwrap();
    let grads = tape.backward(loss).unwrap();
    let layer_grads = params.collect(&grads).unwrap();
    let gx = grads.wrt(xv).unwrap();

    let h = 1e-6;
    let mut ad = Vec::new();
    let mut fd = Vec::new();
    for (l, lg) in layer_grads.iter().enumerate() {
        for (bias, g) in [(false, &lg.weight), (true, &lg.bias)] {
            for (i, &gi) in g.data().iter().enumerate() {
                let up = weighted_loss(&with_entry(model, l, bias, i, h), x, y, alpha, w);
                let down = weighted_loss(&with_entry(model, l, bias, i, -h), x, y, alpha, w);
                ad.push(gi);
                fd.push((up - down) / (2.0 * h));
            }
        }
    }
    for (i, &gi) in gx.data().iter().enumerate() {
        let mut xp = x.data().to_vec();
        let mut xm = x.data().to_vec();
        xp[i] += h;
        xm[i] -= h;
        let up = weighted_loss(model, &Tensor::new(x.shape().to_vec(), xp).unwrap(), y, alpha, w);
        let down = weighted_loss(model, &Tensor::new(x.shape().to_vec(), xm).unwrap(), y, alpha, w);
        ad.push(gi);
        fd.push((up - down) / (2.0 * h));
    }
    let scale = ad.iter().chain(&fd).fold(0.0f64, |m, v| m.max(v.abs()));
    if scale == 0.0 {
        return 0.0;
    }
    ad.iter().zip(&fd).fold(0.0f64, |m, (a, f)| m.max((a - f).abs())) / scale
}
