//! Adversarial robustness at toy scale.
//!
//! A small reverse-mode autodiff core drives multilayer perceptrons on
//! synthetic 2-D datasets. On top of it sit PGD-family attacks with a
//! logit-scale knob `α`, the ERM / AT / FAT / GAIRAT training loops, and an
//! evaluation harness that sweeps `α` and writes plot-ready CSV reports.
//!
//! ```
//! use robustlab::{gen_two_moons, AttackConfig, MlpConfig, MlpParams, Activation, pgd_attack};
//!
//! let data = gen_two_moons(20, 0.1, 7).unwrap();
//! let cfg = MlpConfig::new(vec![2, 8, 2], Activation::Relu, 1).unwrap();
//! let model = MlpParams::init(&cfg).unwrap();
//! let attack = AttackConfig::pgd20(0.031).with_alpha(10.0);
//! let res = pgd_attack(&model, &data.points, &data.labels, Some(&data.domain), &attack).unwrap();
//! assert_eq!(res.kappa.len(), 20);
//! ```

pub mod attacks;
pub mod cli;
pub mod config;
pub mod datasets;
pub mod error;
pub mod eval;
pub mod experiment;
pub mod model;
pub mod tensor;
pub mod training;

pub use attacks::{
    brute_force_attack, friendly_adversarial_run, friendly_adversarial_search, margin_gap,
    pgd_attack, pgd_plus_verdict, project_linf, AttackConfig, AttackResult, Verdict,
};
pub use config::ExperimentConfig;
pub use datasets::{gen_gaussian_blobs, gen_rings, gen_two_moons, Dataset, DomainBox};
pub use error::{Error, Location, Result};
pub use eval::{
    alpha_sweep, default_alpha_grid, eval_natural, eval_robust, read_report, write_report,
    AlphaGap, EvalReport, ReportRow, SweepConfig, SweepResult,
};
pub use model::{
    load_checkpoint, load_checkpoint_for, save_checkpoint, Checkpoint, CheckpointMeta, Layer,
    MlpConfig, MlpParams,
};
pub use tensor::{argmax, scaled_softmax_cross_entropy, softmax, Activation, Gradient, Tape, Tensor, Var};
pub use training::{compute_weights, sgd_step, train, Method, TrainConfig, TrainHistory, WeightAssignment};
