//! The logit-scale sweep experiment end to end: two-moons train/test data,
//! one model per training method, PGD-20 and PGD+ swept over α on the
//! test split.

use crate::attacks::{AttackConfig, Verdict};
use crate::datasets::{gen_two_moons, Dataset};
use crate::error::Result;
use crate::eval::{alpha_sweep, default_alpha_grid, AlphaGap, EvalReport, SweepConfig};
use crate::model::{MlpConfig, MlpParams};
use crate::tensor::Activation;
use crate::training::{train, Method, TrainConfig, TrainHistory};

pub const PGD20: &str = "pgd20";
pub const PGD_PLUS: &str = "pgdplus";

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub train_n: usize,
    pub test_n: usize,
    pub noise: f64,
    pub data_seed: u64,
    pub hidden: Vec<usize>,
    pub activation: Activation,
    pub init_seed: u64,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub epsilon: f64,
    pub inner_steps: usize,
    pub burn_in_epochs: usize,
    pub omega_lambda: f64,
    pub train_seed: u64,
    pub attack_seed: u64,
    pub alpha_grid: Vec<f64>,
    pub methods: Vec<Method>,
    /// Also sweep the PGD+ protocol (all-iterates verdict).
    pub with_pgd_plus: bool,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            train_n: 1000,
            test_n: 500,
            noise: 0.1,
            data_seed: 7,
            hidden: vec![32, 32],
            activation: Activation::Relu,
            init_seed: 7,
            epochs: 60,
            batch_size: 16,
            learning_rate: 0.2,
            epsilon: 0.031,
            inner_steps: 10,
            burn_in_epochs: 18,
            omega_lambda: 0.0,
            train_seed: 7,
            attack_seed: 0,
            alpha_grid: default_alpha_grid(),
            methods: Method::ALL.to_vec(),
            with_pgd_plus: true,
        }
    }
}

impl PipelineConfig {
    pub fn model_config(&self) -> Result<MlpConfig> {
        let mut sizes = vec![2];
        sizes.extend(&self.hidden);
        sizes.push(2);
        MlpConfig::new(sizes, self.activation, self.init_seed)
    }

    pub fn train_config(&self, method: Method) -> TrainConfig {
        let mut cfg = TrainConfig::for_method(method, self.epochs, self.epsilon, self.train_seed);
        cfg.batch_size = self.batch_size;
        cfg.learning_rate = self.learning_rate;
        cfg.burn_in_epochs = if method == Method::Gairat { self.burn_in_epochs } else { 0 };
        if let Some(a) = cfg.inner_attack.as_mut() {
            a.steps = self.inner_steps;
        }
        if method == Method::Gairat {
            cfg.omega_lambda = Some(self.omega_lambda);
        }
        cfg
    }

    pub fn datasets(&self) -> Result<(Dataset, Dataset)> {
        Ok((
            gen_two_moons(self.train_n, self.noise, self.data_seed)?,
            gen_two_moons(self.test_n, self.noise, self.data_seed.wrapping_add(1))?,
        ))
    }
}

#[derive(Debug, Clone)]
pub struct MethodOutcome {
    pub method: Method,
    pub params: MlpParams,
    pub history: TrainHistory,
    pub report: EvalReport,
}

impl MethodOutcome {
    pub fn pgd20_gap(&self) -> Option<AlphaGap> {
        self.report.alpha_gap(PGD20)
    }
}

/// `key = value` lines rewritten as `section.key = value`.
pub fn prefixed_kv(section: &str, kv: &str) -> Vec<String> {
    kv.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| format!("{section}.{}", l.trim()))
        .collect()
}

/// Sweeps PGD-20 (best-iterate) and optionally PGD+ (all-iterates) over
/// the grid and collects both into one report.
pub fn sweep_report(
    model: &MlpParams,
    model_id: &str,
    test: &Dataset,
    epsilon: f64,
    alpha_grid: &[f64],
    attack_seed: u64,
    with_pgd_plus: bool,
) -> Result<EvalReport> {
    let mut report = EvalReport::new(model, model_id, test)?;
    let pgd20 = SweepConfig::new(alpha_grid.to_vec(), AttackConfig::pgd20(epsilon).with_seed(attack_seed))?;
    report.config_lines.extend(prefixed_kv(&format!("attack.{PGD20}"), &pgd20.base_attack.to_kv()));
    report.add_sweep(alpha_sweep(model, test, PGD20, &pgd20, Verdict::BestIterate)?);
    if with_pgd_plus {
        let plus = SweepConfig::new(alpha_grid.to_vec(), AttackConfig::pgd_plus(epsilon).with_seed(attack_seed))?;
        report.config_lines.extend(prefixed_kv(&format!("attack.{PGD_PLUS}"), &plus.base_attack.to_kv()));
        report.add_sweep(alpha_sweep(model, test, PGD_PLUS, &plus, Verdict::AllIterates)?);
    }
    Ok(report)
}

pub fn run_pipeline(cfg: &PipelineConfig) -> Result<Vec<MethodOutcome>> {
    let (train_set, test_set) = cfg.datasets()?;
    let model_cfg = cfg.model_config()?;
    cfg.methods
        .iter()
        .map(|&method| {
            let tc = cfg.train_config(method);
            let (params, history) = train(&model_cfg, &train_set, &tc)?;
            let mut report = sweep_report(
                &params,
                &method.to_string(),
                &test_set,
                cfg.epsilon,
                &cfg.alpha_grid,
                cfg.attack_seed,
                cfg.with_pgd_plus,
            )?;
            let mut lines = prefixed_kv("train", &tc.to_kv());
            lines.append(&mut report.config_lines);
            report.config_lines = lines;
            Ok(MethodOutcome {
                method,
                params,
                history,
                report,
            })
        })
        .collect()
}
