//! MLP classifiers: configuration, Glorot-uniform initialization, forward
//! passes (plain and taped), prediction, and the `MLPCKPT v1` text
//! checkpoint.
//!
//! Checkpoint layout:
//!
//! ```text
//! MLPCKPT v1
//! config layer_sizes=2,32,2 activation=relu init_seed=7
//! meta method=at seed=7 epochs=60
//! layer0.weight 2x32 <64 values>
//! layer0.bias 32 <32 values>
//! ...
//! ```
//!
//! Values are written with 17 significant digits, which round-trips every
//! finite `f64` exactly.

use std::fmt;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::tensor::{self, argmax_rows, Activation, Gradient, Tape, Tensor, Var};

pub const CHECKPOINT_MAGIC: &str = "MLPCKPT v1";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MlpConfig {
    /// Input dimension, hidden widths, number of classes.
    pub layer_sizes: Vec<usize>,
    pub activation: Activation,
    pub init_seed: u64,
}

impl MlpConfig {
    pub fn new(layer_sizes: Vec<usize>, activation: Activation, init_seed: u64) -> Result<Self> {
        let cfg = Self {
            layer_sizes,
            activation,
            init_seed,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.layer_sizes.len() < 2 {
            return Err(Error::Parameter(format!(
                "an MLP needs at least 2 layer sizes, got {:?}",
                self.layer_sizes
            )));
        }
        if self.layer_sizes.iter().any(|&s| s == 0) {
            return Err(Error::Parameter(format!(
                "layer sizes must be positive, got {:?}",
                self.layer_sizes
            )));
        }
        if self.num_classes() < 2 {
            return Err(Error::Parameter(format!(
                "need at least 2 output classes, got {}",
                self.num_classes()
            )));
        }
        Ok(())
    }

    pub fn input_dim(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn num_classes(&self) -> usize {
        *self.layer_sizes.last().unwrap_or(&0)
    }

    pub fn num_layers(&self) -> usize {
        self.layer_sizes.len() - 1
    }
}

impl fmt::Display for MlpConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let sizes: Vec<String> = self.layer_sizes.iter().map(usize::to_string).collect();
        write!(
            f,
            "layer_sizes={} activation={} init_seed={}",
            sizes.join(","),
            self.activation.name(),
            self.init_seed
        )
    }
}

/// One affine layer: `weight` is `fan_in × fan_out`, `bias` is `fan_out`.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub weight: Tensor,
    pub bias: Tensor,
}

/// Classifier parameters. Immutable once built; safe to share across
/// threads for concurrent forward passes.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpParams {
    config: MlpConfig,
    layers: Vec<Layer>,
}

/// Tape handles for the parameters of one taped forward pass.
#[derive(Debug, Clone)]
pub struct ParamVars {
    layers: Vec<(Var, Var)>,
}

impl ParamVars {
    /// Pulls per-layer parameter gradients out of a tape gradient.
    pub fn collect(&self, grads: &Gradient) -> Result<Vec<Layer>> {
        self.layers
            .iter()
            .map(|&(w, b)| {
                Ok(Layer {
                    weight: grads.wrt(w)?.clone(),
                    bias: grads.wrt(b)?.clone(),
                })
            })
            .collect()
    }
}

impl MlpParams {
    /// Glorot-uniform weights from a ChaCha8 stream seeded with
    /// `config.init_seed`; zero biases.
    pub fn init(config: &MlpConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.init_seed);
        let layers = config
            .layer_sizes
            .windows(2)
            .map(|w| {
                let (fan_in, fan_out) = (w[0], w[1]);
                let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
                let weights = (0..fan_in * fan_out)
                    .map(|_| rng.random_range(-bound..=bound))
                    .collect();
                Layer {
                    weight: Tensor::from_parts(vec![fan_in, fan_out], weights),
                    bias: Tensor::zeros(vec![fan_out]),
                }
            })
            .collect();
        Ok(Self {
            config: config.clone(),
            layers,
        })
    }

    /// Assembles parameters, checking every shape against the config.
    pub fn from_layers(config: MlpConfig, layers: Vec<Layer>) -> Result<Self> {
        config.validate()?;
        if layers.len() != config.num_layers() {
            return Err(Error::Schema(format!(
                "config {config} needs {} layers, got {}",
                config.num_layers(),
                layers.len()
            )));
        }
        for (l, (layer, w)) in layers.iter().zip(config.layer_sizes.windows(2)).enumerate() {
            if layer.weight.shape() != [w[0], w[1]] || layer.bias.shape() != [w[1]] {
                return Err(Error::Schema(format!(
                    "layer {l}: weight {:?} / bias {:?} do not fit config {config}",
                    layer.weight.shape(),
                    layer.bias.shape()
                )));
            }
            if layer
                .weight
                .data()
                .iter()
                .chain(layer.bias.data())
                .any(|v| !v.is_finite())
            {
                return Err(Error::Parameter(format!("layer {l} has non-finite entries")));
            }
        }
        Ok(Self { config, layers })
    }

    pub fn config(&self) -> &MlpConfig {
        &self.config
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn num_classes(&self) -> usize {
        self.config.num_classes()
    }

    pub fn input_dim(&self) -> usize {
        self.config.input_dim()
    }

    /// Same network with logits multiplied by `factor` (final layer scaled).
    pub fn with_scaled_logits(&self, factor: f64) -> Result<Self> {
        if !(factor > 0.0 && factor.is_finite()) {
            return Err(Error::Parameter(format!("logit factor must be positive, got {factor}")));
        }
        let mut layers = self.layers.clone();
        if let Some(last) = layers.last_mut() {
            for v in last.weight.data_mut().iter_mut().chain(last.bias.data_mut()) {
                *v *= factor;
            }
        }
        Ok(Self {
            config: self.config.clone(),
            layers,
        })
    }

    fn check_input(&self, x: &Tensor) -> Result<()> {
        match x.shape() {
            [_, d] if *d == self.input_dim() => Ok(()),
            other => Err(Error::dim(other, &[self.input_dim()])),
        }
    }

    /// Logits for an `n × d` batch.
    pub fn forward_logits(&self, x: &Tensor) -> Result<Tensor> {
        self.check_input(x)?;
        let last = self.layers.len() - 1;
        let mut h = x.clone();
        for (l, layer) in self.layers.iter().enumerate() {
            h = tensor::linear(&h, &layer.weight, &layer.bias)?;
            if l < last {
                h = tensor::activation(&h, self.config.activation);
            }
        }
        Ok(h)
    }

    /// Records the forward pass on `tape`. Parameters are recorded as
    /// differentiable leaves when `param_grads` is set, constants otherwise.
    pub fn forward_on_tape(
        &self,
        tape: &mut Tape,
        x: Var,
        param_grads: bool,
    ) -> Result<(Var, ParamVars)> {
        self.check_input(tape.value(x))?;
        let last = self.layers.len() - 1;
        let mut h = x;
        let mut vars = Vec::with_capacity(self.layers.len());
        for (l, layer) in self.layers.iter().enumerate() {
            let (w, b) = if param_grads {
                (tape.leaf(layer.weight.clone()), tape.leaf(layer.bias.clone()))
            } else {
                (tape.constant(layer.weight.clone()), tape.constant(layer.bias.clone()))
            };
            vars.push((w, b));
            h = tape.linear(h, w, b)?;
            if l < last {
                h = tape.activation(h, self.config.activation);
            }
        }
        Ok((h, ParamVars { layers: vars }))
    }

    /// Argmax of the logits, lowest index on ties.
    pub fn predict(&self, x: &Tensor) -> Result<Vec<usize>> {
        Ok(argmax_rows(&self.forward_logits(x)?))
    }

    /// SHA-256 of the canonical checkpoint body (parameters only), hex.
    pub fn content_hash(&self) -> String {
        let mut h = Sha256::new();
        h.update(self.config.to_string().as_bytes());
        for line in tensor_lines(self) {
            h.update(line.as_bytes());
            h.update(b"\n");
        }
        hex(&h.finalize())
    }
}

pub(crate) fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// 17 significant digits.
pub(crate) fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct CheckpointMeta {
    pub method: String,
    pub seed: u64,
    pub epochs: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub params: MlpParams,
    pub meta: CheckpointMeta,
}

fn tensor_lines(params: &MlpParams) -> Vec<String> {
    let mut out = Vec::new();
    for (l, layer) in params.layers.iter().enumerate() {
        for (name, t) in [("weight", &layer.weight), ("bias", &layer.bias)] {
            let shape: Vec<String> = t.shape().iter().map(usize::to_string).collect();
            let mut line = format!("layer{l}.{name} {}", shape.join("x"));
            for &v in t.data() {
                line.push(' ');
                line.push_str(&fmt_f64(v));
            }
            out.push(line);
        }
    }
    out
}

pub fn checkpoint_to_string(params: &MlpParams, meta: &CheckpointMeta) -> String {
    let mut s = String::new();
    s.push_str(CHECKPOINT_MAGIC);
    s.push('\n');
    s.push_str(&format!("config {}\n", params.config));
    s.push_str(&format!(
        "meta method={} seed={} epochs={}\n",
        meta.method, meta.seed, meta.epochs
    ));
    for line in tensor_lines(params) {
        s.push_str(&line);
        s.push('\n');
    }
    s
}

pub fn save_checkpoint(params: &MlpParams, meta: &CheckpointMeta, path: &Path) -> Result<()> {
    std::fs::write(path, checkpoint_to_string(params, meta))?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    parse_checkpoint(&std::fs::read_to_string(path)?)
}

/// Loads a checkpoint and insists its config equals `expected`.
pub fn load_checkpoint_for(path: &Path, expected: &MlpConfig) -> Result<Checkpoint> {
    let ckpt = load_checkpoint(path)?;
    if ckpt.params.config() != expected {
        return Err(Error::Schema(format!(
            "checkpoint config [{}] does not match expected config [{}]",
            ckpt.params.config(),
            expected
        )));
    }
    Ok(ckpt)
}

/// Splits text into lines paired with their starting byte offset.
fn lines_with_offsets(text: &str) -> impl Iterator<Item = (usize, &str)> {
    let mut offset = 0;
    text.split_inclusive('\n').map(move |raw| {
        let start = offset;
        offset += raw.len();
        (start, raw.trim_end_matches(['\n', '\r']))
    })
}

fn parse_kv<'a>(
    fields: impl Iterator<Item = &'a str>,
    at: usize,
) -> Result<Vec<(&'a str, &'a str)>> {
    fields
        .map(|f| {
            f.split_once('=')
                .ok_or_else(|| Error::parse_at_byte(at, format!("expected key=value, got '{f}'")))
        })
        .collect()
}

fn lookup<'a>(kv: &[(&str, &'a str)], key: &str, at: usize) -> Result<&'a str> {
    kv.iter()
        .find(|(k, _)| *k == key)
        .map(|(_, v)| *v)
        .ok_or_else(|| Error::parse_at_byte(at, format!("missing '{key}'")))
}

fn parse_num<T: std::str::FromStr>(s: &str, at: usize, what: &str) -> Result<T> {
    s.parse()
        .map_err(|_| Error::parse_at_byte(at, format!("invalid {what} '{s}'")))
}

pub fn parse_checkpoint(text: &str) -> Result<Checkpoint> {
    let mut lines = lines_with_offsets(text);
    let eof = text.len();

    let (at, magic) = lines
        .next()
        .ok_or_else(|| Error::parse_at_byte(0, "empty checkpoint"))?;
    if magic != CHECKPOINT_MAGIC {
        return Err(Error::parse_at_byte(at, format!("expected header '{CHECKPOINT_MAGIC}'")));
    }

    let (at, cfg_line) = lines
        .next()
        .ok_or_else(|| Error::parse_at_byte(eof, "missing config line"))?;
    let rest = cfg_line
        .strip_prefix("config ")
        .ok_or_else(|| Error::parse_at_byte(at, "expected 'config' line"))?;
    let kv = parse_kv(rest.split_whitespace(), at)?;
    let sizes = lookup(&kv, "layer_sizes", at)?
        .split(',')
        .map(|s| parse_num::<usize>(s, at, "layer size"))
        .collect::<Result<Vec<_>>>()?;
    let activation: Activation = lookup(&kv, "activation", at)?
        .parse()
        .map_err(|_| Error::parse_at_byte(at, "unknown activation"))?;
    let init_seed = parse_num(lookup(&kv, "init_seed", at)?, at, "init_seed")?;
    let config = MlpConfig::new(sizes, activation, init_seed)
        .map_err(|e| Error::Schema(format!("invalid config in checkpoint: {e}")))?;

    let (at, meta_line) = lines
        .next()
        .ok_or_else(|| Error::parse_at_byte(eof, "missing meta line"))?;
    let rest = meta_line
        .strip_prefix("meta ")
        .ok_or_else(|| Error::parse_at_byte(at, "expected 'meta' line"))?;
    let kv = parse_kv(rest.split_whitespace(), at)?;
    let meta = CheckpointMeta {
        method: lookup(&kv, "method", at)?.to_string(),
        seed: parse_num(lookup(&kv, "seed", at)?, at, "seed")?,
        epochs: parse_num(lookup(&kv, "epochs", at)?, at, "epochs")?,
    };

    let mut layers = Vec::with_capacity(config.num_layers());
    for (l, w) in config.layer_sizes.windows(2).enumerate() {
        let weight = parse_tensor_line(&mut lines, eof, &format!("layer{l}.weight"), &[w[0], w[1]], &config)?;
        let bias = parse_tensor_line(&mut lines, eof, &format!("layer{l}.bias"), &[w[1]], &config)?;
        layers.push(Layer { weight, bias });
    }
    if let Some((at, extra)) = lines.find(|(_, l)| !l.trim().is_empty()) {
        return Err(Error::parse_at_byte(
            at,
            format!("unexpected trailing content '{}'", extra.chars().take(32).collect::<String>()),
        ));
    }
    let params = MlpParams::from_layers(config, layers)?;
    Ok(Checkpoint { params, meta })
}

fn parse_tensor_line<'a>(
    lines: &mut impl Iterator<Item = (usize, &'a str)>,
    eof: usize,
    name: &str,
    expected: &[usize],
    config: &MlpConfig,
) -> Result<Tensor> {
    let (at, line) = lines
        .next()
        .ok_or_else(|| Error::parse_at_byte(eof, format!("truncated: missing tensor '{name}'")))?;
    let mut fields = line.split(' ');
    let got_name = fields.next().unwrap_or("");
    if got_name != name {
        return Err(Error::parse_at_byte(at, format!("expected tensor '{name}', found '{got_name}'")));
    }
    let shape_at = at + got_name.len() + 1;
    let shape = fields
        .next()
        .ok_or_else(|| Error::parse_at_byte(shape_at, "missing shape"))?
        .split('x')
        .map(|s| parse_num::<usize>(s, shape_at, "dimension"))
        .collect::<Result<Vec<_>>>()?;
    if shape != expected {
        return Err(Error::Schema(format!(
            "tensor '{name}' declares shape {shape:?} but config [{config}] requires {expected:?}"
        )));
    }
    let mut values = Vec::with_capacity(expected.iter().product());
    let mut offset = at;
    for (i, field) in line.split(' ').enumerate() {
        if i >= 2 {
            let v: f64 = parse_num(field, offset, "value")?;
            if !v.is_finite() {
                return Err(Error::parse_at_byte(offset, format!("non-finite value '{field}'")));
            }
            values.push(v);
        }
        offset += field.len() + 1;
    }
    let want: usize = expected.iter().product();
    if values.len() != want {
        return Err(Error::parse_at_byte(
            at + line.len(),
            format!("tensor '{name}' has {} values, expected {want}", values.len()),
        ));
    }
    Ok(Tensor::from_parts(shape, values))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(sizes: &[usize], seed: u64) -> MlpConfig {
        MlpConfig::new(sizes.to_vec(), Activation::Relu, seed).unwrap()
    }

    #[test]
    fn config_invariants() {
        assert!(MlpConfig::new(vec![2], Activation::Relu, 0).is_err());
        assert!(MlpConfig::new(vec![2, 1], Activation::Relu, 0).is_err());
        assert!(MlpConfig::new(vec![2, 0, 2], Activation::Relu, 0).is_err());
    }

    #[test]
    fn init_deterministic_and_zero_bias() {
        let c = cfg(&[3, 8, 2], 42);
        let a = MlpParams::init(&c).unwrap();
        let b = MlpParams::init(&c).unwrap();
        assert_eq!(a, b);
        for l in a.layers() {
            assert!(l.bias.data().iter().all(|&v| v == 0.0));
        }
        let other = MlpParams::init(&cfg(&[3, 8, 2], 43)).unwrap();
        assert_ne!(a, other);
    }

    #[test]
    fn init_within_bound_and_mean_near_zero() {
        let c = cfg(&[512, 512], 3);
        let p = MlpParams::init(&c).unwrap();
        let bound = (6.0f64 / 1024.0).sqrt();
        let w = p.layers()[0].weight.data();
        assert!(w.iter().all(|v| v.abs() <= bound));
        let n = w.len() as f64;
        let mean = w.iter().sum::<f64>() / n;
        // std of a uniform(-b, b) sample mean is b / sqrt(3n)
        assert!(mean.abs() < 3.0 * bound / (3.0 * n).sqrt(), "mean {mean}");
    }

    #[test]
    fn zero_params_give_zero_logits() {
        let c = cfg(&[2, 4, 3], 0);
        let layers = vec![
            Layer { weight: Tensor::zeros(vec![2, 4]), bias: Tensor::zeros(vec![4]) },
            Layer { weight: Tensor::zeros(vec![4, 3]), bias: Tensor::zeros(vec![3]) },
        ];
        let p = MlpParams::from_layers(c, layers).unwrap();
        let x = Tensor::from_rows(&[vec![0.3, -1.0], vec![5.0, 2.0]]).unwrap();
        assert!(p.forward_logits(&x).unwrap().data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn single_layer_is_linear() {
        let p = MlpParams::init(&cfg(&[3, 2], 9)).unwrap();
        let x = Tensor::from_rows(&[vec![0.1, 0.2, 0.3]]).unwrap();
        let l = &p.layers()[0];
        assert_eq!(
            p.forward_logits(&x).unwrap(),
            tensor::linear(&x, &l.weight, &l.bias).unwrap()
        );
    }

    #[test]
    fn two_layer_matches_straight_line_forward() {
        let c = MlpConfig::new(vec![3, 4, 2], Activation::Tanh, 5).unwrap();
        let p = MlpParams::init(&c).unwrap();
        let x = [0.25, -0.5, 0.75];
        let (w0, b0) = (p.layers()[0].weight.data(), p.layers()[0].bias.data());
        let (w1, b1) = (p.layers()[1].weight.data(), p.layers()[1].bias.data());
        let mut hidden = [0.0; 4];
        for j in 0..4 {
            let mut s = 0.0;
            for k in 0..3 {
                s += x[k] * w0[k * 4 + j];
            }
            hidden[j] = (s + b0[j]).tanh();
        }
        let mut out = [0.0; 2];
        for j in 0..2 {
            let mut s = 0.0;
            for k in 0..4 {
                s += hidden[k] * w1[k * 2 + j];
            }
            out[j] = s + b1[j];
        }
        let got = p.forward_logits(&Tensor::from_rows(&[x.to_vec()]).unwrap()).unwrap();
        for j in 0..2 {
            assert!((got.data()[j] - out[j]).abs() < 1e-14);
        }
    }

    #[test]
    fn forward_dimension_mismatch() {
        let p = MlpParams::init(&cfg(&[3, 2], 1)).unwrap();
        let x = Tensor::from_rows(&[vec![0.1, 0.2]]).unwrap();
        assert!(matches!(p.forward_logits(&x), Err(Error::Dimension { .. })));
    }

    fn fixed_logit_model(b: [f64; 2]) -> MlpParams {
        MlpParams::from_layers(
            cfg(&[1, 2], 0),
            vec![Layer {
                weight: Tensor::zeros(vec![1, 2]),
                bias: Tensor::new(vec![2], b.to_vec()).unwrap(),
            }],
        )
        .unwrap()
    }

    #[test]
    fn predict_examples() {
        let x = Tensor::from_rows(&[vec![0.0]]).unwrap();
        assert_eq!(fixed_logit_model([3.0, 1.0]).predict(&x).unwrap(), vec![0]);
        assert_eq!(fixed_logit_model([1.0, 1.0]).predict(&x).unwrap(), vec![0]);
        assert_eq!(fixed_logit_model([1.0, 3.0]).predict(&x).unwrap(), vec![1]);
    }

    #[test]
    fn predict_invariant_under_logit_scaling() {
        let p = MlpParams::init(&cfg(&[2, 16, 3], 2)).unwrap();
        let rows: Vec<Vec<f64>> = (0..50).map(|i| vec![i as f64 / 50.0, 1.0 - i as f64 / 25.0]).collect();
        let x = Tensor::from_rows(&rows).unwrap();
        let logits = p.forward_logits(&x).unwrap();
        let scaled = Tensor::new(
            logits.shape().to_vec(),
            logits.data().iter().map(|v| 10.0 * v).collect(),
        )
        .unwrap();
        assert_eq!(p.predict(&x).unwrap(), argmax_rows(&scaled));
    }

    #[test]
    fn batch_equals_per_example() {
        let p = MlpParams::init(&cfg(&[2, 8, 8, 2], 4)).unwrap();
        let rows: Vec<Vec<f64>> = (0..7).map(|i| vec![0.1 * i as f64, -0.05 * i as f64]).collect();
        let batch = p.forward_logits(&Tensor::from_rows(&rows).unwrap()).unwrap();
        for (i, r) in rows.iter().enumerate() {
            let single = p.forward_logits(&Tensor::from_rows(&[r.clone()]).unwrap()).unwrap();
            assert_eq!(single.data(), batch.row(i));
        }
    }

    #[test]
    fn checkpoint_round_trip_bit_exact() {
        let p = MlpParams::init(&cfg(&[2, 5, 3], 77)).unwrap();
        let meta = CheckpointMeta { method: "gairat".into(), seed: 77, epochs: 3 };
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.ckpt");
        save_checkpoint(&p, &meta, &path).unwrap();
        let back = load_checkpoint(&path).unwrap();
        assert_eq!(back.meta, meta);
        for (a, b) in p.layers().iter().zip(back.params.layers()) {
            for (x, y) in a.weight.data().iter().zip(b.weight.data()) {
                assert_eq!(x.to_bits(), y.to_bits());
            }
        }
        assert_eq!(back.params, p);
        assert!(std::fs::read_to_string(&path).unwrap().starts_with("MLPCKPT v1\n"));
    }

    #[test]
    fn truncated_checkpoint_is_parse_error() {
        let p = MlpParams::init(&cfg(&[2, 5, 3], 1)).unwrap();
        let text = checkpoint_to_string(&p, &CheckpointMeta::default());
        for cut in [5, 20, text.len() / 2, text.len() - 30] {
            match parse_checkpoint(&text[..cut]) {
                Err(Error::Parse { .. }) => {}
                other => panic!("cut {cut}: expected parse error, got {other:?}"),
            }
        }
    }

    #[test]
    fn parse_error_reports_byte_offset() {
        let p = MlpParams::init(&cfg(&[1, 2], 1)).unwrap();
        let text = checkpoint_to_string(&p, &CheckpointMeta::default());
        let bad = text.replacen("layer0.bias 2 ", "layer0.bias 2 zz", 1);
        let off = bad.find("zz").unwrap();
        match parse_checkpoint(&bad) {
            Err(Error::Parse { location, .. }) => assert_eq!(location, crate::error::Location::Byte(off)),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn declared_shape_conflict_is_schema_error() {
        let p = MlpParams::init(&cfg(&[2, 3], 1)).unwrap();
        let text = checkpoint_to_string(&p, &CheckpointMeta::default());
        let bad = text.replacen("layer0.weight 2x3", "layer0.weight 3x2", 1);
        assert!(matches!(parse_checkpoint(&bad), Err(Error::Schema(_))));
    }

    #[test]
    fn config_mismatch_names_both() {
        let p = MlpParams::init(&cfg(&[2, 3, 2], 1)).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.ckpt");
        save_checkpoint(&p, &CheckpointMeta::default(), &path).unwrap();
        let want = cfg(&[2, 4, 2], 1);
        match load_checkpoint_for(&path, &want) {
            Err(Error::Schema(msg)) => {
                assert!(msg.contains("layer_sizes=2,3,2"), "{msg}");
                assert!(msg.contains("layer_sizes=2,4,2"), "{msg}");
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn scaled_logits_multiply_output() {
        let p = MlpParams::init(&cfg(&[2, 4, 2], 8)).unwrap();
        let x = Tensor::from_rows(&[vec![0.3, 0.9]]).unwrap();
        let a = p.forward_logits(&x).unwrap();
        let b = p.with_scaled_logits(0.1).unwrap().forward_logits(&x).unwrap();
        for (u, v) in a.data().iter().zip(b.data()) {
            assert!((0.1 * u - v).abs() < 1e-15);
        }
    }
}
