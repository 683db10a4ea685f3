//! Outer minimization: ERM, AT, FAT and GAIRAT over mini-batch SGD.
//!
//! All four methods share one loop. They differ only in which points the
//! loss is evaluated on (natural, PGD max-loss, early-stopped PGD) and in
//! the per-example weights: GAIRAT weights each adversarial loss by a
//! decreasing function of κ after its burn-in epochs, everybody else uses
//! unit weights. Unit weights go through the exact same arithmetic, so
//! GAIRAT during burn-in reproduces AT bit for bit.

use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::attacks::{friendly_adversarial_run, pgd_attack, AttackConfig, AttackResult};
use crate::datasets::Dataset;
use crate::error::{Error, Result};
use crate::model::{Layer, MlpConfig, MlpParams};
use crate::tensor::{Tape, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Erm,
    At,
    Fat,
    Gairat,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::Erm, Method::At, Method::Fat, Method::Gairat];

    pub fn is_adversarial(self) -> bool {
        self != Method::Erm
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::Erm => "erm",
            Method::At => "at",
            Method::Fat => "fat",
            Method::Gairat => "gairat",
        })
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "erm" => Ok(Method::Erm),
            "at" => Ok(Method::At),
            "fat" => Ok(Method::Fat),
            "gairat" => Ok(Method::Gairat),
            other => Err(Error::Config(format!("unknown training method '{other}'"))),
        }
    }
}

/// Inner search GAIRAT uses to craft its adversarial points.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Crafting {
    Pgd,
    Friendly,
}

impl FromStr for Crafting {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pgd" => Ok(Crafting::Pgd),
            "friendly" | "fat" => Ok(Crafting::Friendly),
            other => Err(Error::Config(format!("unknown crafting '{other}'"))),
        }
    }
}

impl fmt::Display for Crafting {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Crafting::Pgd => "pgd",
            Crafting::Friendly => "friendly",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub method: Method,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
    /// Required for AT, FAT and GAIRAT. Its `alpha` is ignored: crafting
    /// during training always uses unscaled logits.
    pub inner_attack: Option<AttackConfig>,
    /// GAIRAT epochs with ω ≡ 1.
    pub burn_in_epochs: usize,
    /// GAIRAT weight-shape parameter λ_g; required for GAIRAT.
    pub omega_lambda: Option<f64>,
    /// FAT: extra steps after the first misclassified iterate.
    pub fat_slack: usize,
    pub gairat_crafting: Crafting,
}

impl TrainConfig {
    /// Defaults for `method`: batch 16, learning rate 0.2, inner PGD with 10
    /// steps of ε/4 and a random start, burn-in 30% of the epochs, λ_g = 0.
    pub fn for_method(method: Method, epochs: usize, epsilon: f64, seed: u64) -> Self {
        let inner = AttackConfig {
            steps: 10,
            ..AttackConfig::pgd20(epsilon)
        };
        Self {
            method,
            epochs,
            batch_size: 16,
            learning_rate: 0.2,
            seed,
            inner_attack: method.is_adversarial().then_some(inner),
            burn_in_epochs: (epochs as f64 * 0.3).round() as usize,
            omega_lambda: (method == Method::Gairat).then_some(0.0),
            fat_slack: 0,
            gairat_crafting: Crafting::Pgd,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!(
                "learning_rate must be > 0, got {}",
                self.learning_rate
            )));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be ≥ 1".into()));
        }
        if self.burn_in_epochs > self.epochs {
            return Err(Error::Config(format!(
                "burn_in_epochs ({}) exceeds epochs ({})",
                self.burn_in_epochs, self.epochs
            )));
        }
        if self.method.is_adversarial() {
            match &self.inner_attack {
                Some(a) => a.validate()?,
                None => {
                    return Err(Error::Config(format!(
                        "method {} needs an inner attack configuration",
                        self.method
                    )))
                }
            }
        }
        if self.method == Method::Gairat {
            match self.omega_lambda {
                Some(l) if l.is_finite() => {}
                _ => return Err(Error::Config("GAIRAT needs a finite omega_lambda".into())),
            }
        }
        Ok(())
    }

    /// Flat `key = value` dump of every field.
    pub fn to_kv(&self) -> String {
        let mut s = format!(
            "method = {}\nepochs = {}\nbatch_size = {}\nlearning_rate = {}\nseed = {}\nburn_in_epochs = {}\nfat_slack = {}\ngairat_crafting = {}\n",
            self.method,
            self.epochs,
            self.batch_size,
            self.learning_rate,
            self.seed,
            self.burn_in_epochs,
            self.fat_slack,
            self.gairat_crafting
        );
        if let Some(l) = self.omega_lambda {
            s.push_str(&format!("omega_lambda = {l}\n"));
        }
        if let Some(a) = &self.inner_attack {
            for line in a.to_kv().lines() {
                s.push_str(&format!("inner_{line}\n"));
            }
        }
        s
    }
}

/// Per-example loss weights for one batch; non-negative with mean 1.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightAssignment {
    weights: Vec<f64>,
}

impl WeightAssignment {
    pub fn uniform(n: usize) -> Self {
        Self {
            weights: vec![1.0; n],
        }
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn mean(&self) -> f64 {
        self.weights.iter().sum::<f64>() / self.weights.len() as f64
    }
}

/// GAIRAT weights: `raw = (1 + tanh(λ_g + 5(1 − 2κ/K))) / 2`, rescaled to
/// batch mean 1. Falls back to uniform weights if every raw weight
/// underflows to zero.
pub fn compute_weights(kappa: &[usize], k: usize, omega_lambda: f64) -> Result<WeightAssignment> {
    if kappa.is_empty() {
        return Err(Error::Contract("cannot weight an empty batch".into()));
    }
    if k == 0 {
        return Err(Error::Contract("K (inner attack steps) must be ≥ 1".into()));
    }
    if let Some((i, &kv)) = kappa.iter().enumerate().find(|(_, &kv)| kv > k) {
        return Err(Error::Contract(format!("kappa[{i}] = {kv} outside [0, {k}]")));
    }
    let raw: Vec<f64> = kappa
        .iter()
        .map(|&kv| (1.0 + (omega_lambda + 5.0 * (1.0 - 2.0 * kv as f64 / k as f64)).tanh()) / 2.0)
        .collect();
    let sum: f64 = raw.iter().sum();
    if !(sum > f64::MIN_POSITIVE) {
        return Ok(WeightAssignment::uniform(kappa.len()));
    }
    let n = kappa.len() as f64;
    Ok(WeightAssignment {
        weights: raw.iter().map(|r| r * n / sum).collect(),
    })
}

/// `θ ← θ − lr · g`.
pub fn sgd_step(params: &MlpParams, grads: &[Layer], learning_rate: f64) -> Result<MlpParams> {
    if grads.len() != params.layers().len() {
        return Err(Error::dim(&[params.layers().len()], &[grads.len()]));
    }
    let mut layers = Vec::with_capacity(grads.len());
    for (p, g) in params.layers().iter().zip(grads) {
        let step = |t: &Tensor, gt: &Tensor| -> Result<Tensor> {
            if t.shape() != gt.shape() {
                return Err(Error::dim(t.shape(), gt.shape()));
            }
            Ok(Tensor::from_parts(
                t.shape().to_vec(),
                t.data()
                    .iter()
                    .zip(gt.data())
                    .map(|(v, d)| v - learning_rate * d)
                    .collect(),
            ))
        };
        layers.push(Layer {
            weight: step(&p.weight, &g.weight)?,
            bias: step(&p.bias, &g.bias)?,
        });
    }
    MlpParams::from_layers(params.config().clone(), layers)
}

/// Weighted-mean cross-entropy of `params` on `(x, y)` and its parameter
/// gradient.
pub fn weighted_loss_and_grad(
    params: &MlpParams,
    x: &Tensor,
    y: &[usize],
    weights: &[f64],
) -> Result<(f64, Vec<Layer>)> {
    let mut tape = Tape::new();
    let xv = tape.constant(x.clone());
    let (logits, vars) = params.forward_on_tape(&mut tape, xv, true)?;
    let ce = tape.scaled_softmax_cross_entropy(logits, y, 1.0)?;
    let loss = tape.weighted_mean(ce, weights)?;
    let grads = tape.backward(loss)?;
    Ok((tape.value(loss).data()[0], vars.collect(&grads)?))
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub loss: f64,
    pub nat_acc: f64,
    /// GAIRAT only: counts of κ = 0..=K over the epoch.
    pub kappa_hist: Option<Vec<usize>>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrainHistory {
    pub records: Vec<EpochRecord>,
}

impl TrainHistory {
    /// `epoch,loss,nat_acc[,kappa_0..kappa_K]`.
    pub fn to_csv(&self) -> String {
        let k = self
            .records
            .iter()
            .find_map(|r| r.kappa_hist.as_ref().map(Vec::len));
        let mut s = String::from("epoch,loss,nat_acc");
        if let Some(k) = k {
            for i in 0..k {
                s.push_str(&format!(",kappa_{i}"));
            }
        }
        s.push('\n');
        for r in &self.records {
            s.push_str(&format!("{},{},{}", r.epoch, r.loss, r.nat_acc));
            if let Some(h) = &r.kappa_hist {
                for c in h {
                    s.push_str(&format!(",{c}"));
                }
            }
            s.push('\n');
        }
        s
    }
}

fn epoch_rng(seed: u64, epoch: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(epoch as u64 + 1);
    rng
}

fn batch_seed(seed: u64, epoch: usize, batch: usize) -> u64 {
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15)
        ^ ((epoch as u64) << 32)
        ^ batch as u64
}

pub fn accuracy(params: &MlpParams, x: &Tensor, y: &[usize]) -> Result<f64> {
    let pred = params.predict(x)?;
    let hits = pred.iter().zip(y).filter(|(p, l)| p == l).count();
    Ok(hits as f64 / y.len().max(1) as f64)
}

/// Trains from `MlpParams::init(model_config)` and returns the final
/// parameters with one history record per epoch.
pub fn train(
    model_config: &MlpConfig,
    dataset: &Dataset,
    config: &TrainConfig,
) -> Result<(MlpParams, TrainHistory)> {
    config.validate()?;
    model_config.validate()?;
    if model_config.input_dim() != dataset.dim() {
        return Err(Error::dim(&[model_config.input_dim()], &[dataset.dim()]));
    }
    if model_config.num_classes() < dataset.num_classes {
        return Err(Error::Config(format!(
            "model has {} outputs but the dataset has {} classes",
            model_config.num_classes(),
            dataset.num_classes
        )));
    }
    let mut params = MlpParams::init(model_config)?;
    let mut history = TrainHistory::default();
    let n = dataset.len();
    let inner_steps = config.inner_attack.as_ref().map_or(0, |a| a.steps);

    for epoch in 0..config.epochs {
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut epoch_rng(config.seed, epoch));
        let mut loss_sum = 0.0;
        let mut kappa_hist = (config.method == Method::Gairat).then(|| vec![0usize; inner_steps + 1]);

        for (b, idx) in order.chunks(config.batch_size).enumerate() {
            let x = dataset.points.select_rows(idx);
            let y: Vec<usize> = idx.iter().map(|&i| dataset.labels[i]).collect();
            let inner = config.inner_attack.as_ref().map(|a| AttackConfig {
                alpha: 1.0,
                seed: batch_seed(config.seed, epoch, b),
                ..a.clone()
            });
            let domain = Some(&dataset.domain);

            let (train_x, weights) = match config.method {
                Method::Erm => (x, WeightAssignment::uniform(idx.len())),
                Method::At => {
                    let r = pgd_attack(&params, &x, &y, domain, inner.as_ref().expect("validated"))?;
                    (r.adversarial, WeightAssignment::uniform(idx.len()))
                }
                Method::Fat => {
                    let a = inner.as_ref().expect("validated");
                    let (adv, _) = friendly_adversarial_run(&params, &x, &y, domain, a, config.fat_slack)?;
                    (adv, WeightAssignment::uniform(idx.len()))
                }
                Method::Gairat => {
                    let a = inner.as_ref().expect("validated");
                    let (adv, run): (Tensor, AttackResult) = match config.gairat_crafting {
                        Crafting::Pgd => {
                            let r = pgd_attack(&params, &x, &y, domain, a)?;
                            (r.adversarial.clone(), r)
                        }
                        Crafting::Friendly => {
                            friendly_adversarial_run(&params, &x, &y, domain, a, config.fat_slack)?
                        }
                    };
                    if let Some(h) = kappa_hist.as_mut() {
                        for &k in &run.kappa {
                            h[k] += 1;
                        }
                    }
                    let w = if epoch < config.burn_in_epochs {
                        WeightAssignment::uniform(idx.len())
                    } else {
                        compute_weights(&run.kappa, a.steps, config.omega_lambda.expect("validated"))?
                    };
                    (adv, w)
                }
            };

            let (loss, grads) = weighted_loss_and_grad(&params, &train_x, &y, weights.weights())?;
            loss_sum += loss * idx.len() as f64;
            params = sgd_step(&params, &grads, config.learning_rate)?;
        }

        history.records.push(EpochRecord {
            epoch: epoch + 1,
            loss: loss_sum / n as f64,
            nat_acc: accuracy(&params, &dataset.points, &dataset.labels)?,
            kappa_hist,
        });
    }
    Ok((params, history))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datasets::{gen_gaussian_blobs, gen_two_moons};
    use crate::tensor::Activation;

    #[test]
    fn equal_kappa_gives_unit_weights() {
        for kv in [0, 3, 10] {
            let w = compute_weights(&[kv; 5], 10, 0.0).unwrap();
            for &v in w.weights() {
                assert!((v - 1.0).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn weights_non_increasing_in_kappa() {
        let kappa = [0, 2, 5, 7, 10, 1];
        let w = compute_weights(&kappa, 10, -1.0).unwrap();
        for i in 0..kappa.len() {
            for j in 0..kappa.len() {
                if kappa[i] < kappa[j] {
                    assert!(w.weights()[i] >= w.weights()[j]);
                }
            }
        }
        assert!((w.mean() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn weights_worked_example() {
        // mpmath, 40 digits: raw = (0.99995460213..., 0.0000453978687...)
        let w = compute_weights(&[0, 10], 10, 0.0).unwrap();
        assert!((w.weights()[0] - 1.999_909_204_262_595_1).abs() < 1e-12);
        assert!((w.weights()[1] - 0.000_090_795_737_404_868_79).abs() < 1e-12);
    }

    #[test]
    fn weights_contract_errors() {
        assert!(matches!(compute_weights(&[11], 10, 0.0), Err(Error::Contract(_))));
        assert!(matches!(compute_weights(&[], 10, 0.0), Err(Error::Contract(_))));
    }

    #[test]
    fn weights_underflow_falls_back_to_uniform() {
        let w = compute_weights(&[10, 10, 9], 10, -1000.0).unwrap();
        assert_eq!(w.weights(), &[1.0, 1.0, 1.0]);
    }

    fn tiny_params() -> MlpParams {
        MlpParams::init(&MlpConfig::new(vec![2, 3, 2], Activation::Tanh, 1).unwrap()).unwrap()
    }

    #[test]
    fn sgd_zero_gradient_is_identity() {
        let p = tiny_params();
        let zero: Vec<Layer> = p
            .layers()
            .iter()
            .map(|l| Layer {
                weight: Tensor::zeros(l.weight.shape().to_vec()),
                bias: Tensor::zeros(l.bias.shape().to_vec()),
            })
            .collect();
        assert_eq!(sgd_step(&p, &zero, 0.5).unwrap(), p);
    }

    #[test]
    fn sgd_unit_step_on_params_zeroes_them() {
        let p = tiny_params();
        let q = sgd_step(&p, p.layers(), 1.0).unwrap();
        for l in q.layers() {
            assert!(l.weight.data().iter().chain(l.bias.data()).all(|&v| v == 0.0));
        }
    }

    #[test]
    fn sgd_quadratic_bowl() {
        // f(θ) = (θ − c)², θ_k = c + 0.8^k (θ_0 − c)
        let cfg = MlpConfig::new(vec![1, 2], Activation::Relu, 0).unwrap();
        let c = 0.7;
        let mut p = MlpParams::from_layers(
            cfg.clone(),
            vec![Layer {
                weight: Tensor::new(vec![1, 2], vec![1.7, 1.7]).unwrap(),
                bias: Tensor::zeros(vec![2]),
            }],
        )
        .unwrap();
        for _ in 0..100 {
            let g: Vec<Layer> = p
                .layers()
                .iter()
                .map(|l| Layer {
                    weight: Tensor::new(
                        vec![1, 2],
                        l.weight.data().iter().map(|v| 2.0 * (v - c)).collect(),
                    )
                    .unwrap(),
                    bias: Tensor::zeros(vec![2]),
                })
                .collect();
            p = sgd_step(&p, &g, 0.1).unwrap();
        }
        let closed = c + 0.8f64.powi(100) * (1.7 - c);
        for &v in p.layers()[0].weight.data() {
            assert!((v - c).abs() < 1e-6);
            assert!((v - closed).abs() < 1e-12);
        }
    }

    #[test]
    fn sgd_shape_mismatch() {
        let p = tiny_params();
        assert!(sgd_step(&p, &p.layers()[..1], 0.1).is_err());
    }

    #[test]
    fn weight_scaling_scales_gradient() {
        let p = tiny_params();
        let ds = gen_two_moons(8, 0.1, 2).unwrap();
        let w = compute_weights(&[0, 1, 2, 3, 4, 5, 6, 7], 8, 0.0).unwrap();
        let (l1, g1) = weighted_loss_and_grad(&p, &ds.points, &ds.labels, w.weights()).unwrap();
        let scaled: Vec<f64> = w.weights().iter().map(|v| 4.0 * v).collect();
        let (l4, g4) = weighted_loss_and_grad(&p, &ds.points, &ds.labels, &scaled).unwrap();
        assert_eq!(l4, 4.0 * l1);
        for (a, b) in g1.iter().zip(&g4) {
            for (u, v) in a.weight.data().iter().zip(b.weight.data()) {
                assert_eq!(4.0 * u, *v);
            }
        }
    }

    #[test]
    fn config_errors() {
        let mut c = TrainConfig::for_method(Method::Gairat, 10, 0.031, 1);
        c.omega_lambda = None;
        assert!(matches!(c.validate(), Err(Error::Config(_))));
        let mut c = TrainConfig::for_method(Method::At, 10, 0.031, 1);
        c.inner_attack = None;
        assert!(matches!(c.validate(), Err(Error::Config(_))));
        let mut c = TrainConfig::for_method(Method::Erm, 10, 0.031, 1);
        c.burn_in_epochs = 11;
        assert!(c.validate().is_err());
        c.burn_in_epochs = 0;
        c.learning_rate = 0.0;
        assert!(c.validate().is_err());
    }

    #[test]
    fn zero_epochs_returns_init() {
        let mc = MlpConfig::new(vec![2, 8, 2], Activation::Relu, 5).unwrap();
        let ds = gen_two_moons(20, 0.1, 1).unwrap();
        let (p, h) = train(&mc, &ds, &TrainConfig::for_method(Method::At, 0, 0.031, 1)).unwrap();
        assert_eq!(p, MlpParams::init(&mc).unwrap());
        assert!(h.records.is_empty());
    }

    #[test]
    fn gairat_full_burn_in_equals_at() {
        let mc = MlpConfig::new(vec![2, 8, 2], Activation::Relu, 5).unwrap();
        let ds = gen_two_moons(64, 0.1, 1).unwrap();
        let at = TrainConfig { batch_size: 16, ..TrainConfig::for_method(Method::At, 3, 0.031, 9) };
        let gairat = TrainConfig {
            method: Method::Gairat,
            burn_in_epochs: 3,
            omega_lambda: Some(0.0),
            ..at.clone()
        };
        let (pa, ha) = train(&mc, &ds, &at).unwrap();
        let (pg, hg) = train(&mc, &ds, &gairat).unwrap();
        assert_eq!(pa, pg);
        for (a, g) in ha.records.iter().zip(&hg.records) {
            assert_eq!(a.loss.to_bits(), g.loss.to_bits());
        }
    }

    #[test]
    fn training_is_deterministic() {
        let mc = MlpConfig::new(vec![2, 8, 2], Activation::Relu, 5).unwrap();
        let ds = gen_two_moons(64, 0.1, 1).unwrap();
        let cfg = TrainConfig { batch_size: 16, burn_in_epochs: 1, ..TrainConfig::for_method(Method::Gairat, 3, 0.031, 9) };
        let a = train(&mc, &ds, &cfg).unwrap();
        let b = train(&mc, &ds, &cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.1.records.len(), 3);
        let hist = a.1.records[2].kappa_hist.as_ref().unwrap();
        assert_eq!(hist.len(), 11);
        assert_eq!(hist.iter().sum::<usize>(), 64);
    }

    #[test]
    fn erm_fits_separable_blobs() {
        let mc = MlpConfig::new(vec![2, 16, 2], Activation::Relu, 3).unwrap();
        let ds = gen_gaussian_blobs(200, &[vec![0.25, 0.25], vec![0.75, 0.75]], 0.05, 4).unwrap();
        let cfg = TrainConfig { batch_size: 20, ..TrainConfig::for_method(Method::Erm, 50, 0.031, 2) };
        let (_, h) = train(&mc, &ds, &cfg).unwrap();
        assert!(h.records.last().unwrap().nat_acc >= 0.99);
    }

    #[test]
    fn history_csv_has_kappa_columns_for_gairat() {
        let h = TrainHistory {
            records: vec![EpochRecord { epoch: 1, loss: 0.5, nat_acc: 0.75, kappa_hist: Some(vec![1, 2, 3]) }],
        };
        let csv = h.to_csv();
        assert!(csv.starts_with("epoch,loss,nat_acc,kappa_0,kappa_1,kappa_2\n"));
        assert!(csv.contains("1,0.5,0.75,1,2,3"));
    }
}
