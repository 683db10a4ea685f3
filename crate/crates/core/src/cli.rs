//! Command-line entry point.
//!
//! Values are resolved in three layers: built-in defaults, then the
//! `--config` file, then explicit flags. The fully resolved config is
//! echoed to stderr by every command and embedded in every report.
//!
//! Exit codes: 0 success, 1 usage error, 2 data or config error,
//! 3 when `oracle-check` finds the attack weaker than the grid search.

use std::ffi::OsString;
use std::fmt::Display;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::{SystemTime, UNIX_EPOCH};

use clap::error::ErrorKind;
use clap::{Args, CommandFactory, Parser, Subcommand};
use rayon::prelude::*;

use crate::attacks::{brute_force_attack, pgd_attack, AttackConfig};
use crate::config::ExperimentConfig;
use crate::datasets::{
    gen_gaussian_blobs, gen_rings, gen_two_moons, load_csv, save_csv, Dataset, DomainBox,
};
use crate::error::Error;
use crate::eval::{
    alpha_sweep, eval_natural, parse_alpha_grid, read_report, write_report, EvalReport, ReportRow,
    SweepConfig,
};
use crate::model::{load_checkpoint, save_checkpoint, CheckpointMeta, MlpConfig, MlpParams};
use crate::tensor::{Activation, Tensor};
use crate::training::{train, Crafting, Method, TrainConfig};

/// Directory used for outputs whose path was not given explicitly.
pub const OUT_DIR_ENV: &str = "ROBUSTLAB_OUT_DIR";

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_CHECK_FAILED: i32 = 3;

const DEFAULT_EPS: f64 = 0.031;

#[derive(Debug, Parser)]
#[command(
    name = "robustlab",
    version,
    about = "Adversarial robustness experiments on synthetic low-dimensional data"
)]
struct Cli {
    /// Experiment config file (`[data]`, `[train]`, `[attack.<name>]`, `[sweep]`).
    /// Flags override its values.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic dataset as CSV.
    GenData(GenDataArgs),
    /// Train a model; writes a checkpoint and a per-epoch history CSV.
    Train(TrainArgs),
    /// Attack every point of a dataset and write the adversarial points.
    Attack(AttackArgs),
    /// Natural accuracy and robust accuracy at a single logit scale.
    Eval(EvalArgs),
    /// Robust accuracy across a grid of logit scales.
    Sweep(SweepArgs),
    /// Compare an attack against exhaustive grid search (input dim ≤ 3).
    OracleCheck(OracleArgs),
    /// Summarize report files: accuracy at α = 1, worst α and the gap.
    Report(ReportArgs),
}

#[derive(Debug, Args)]
struct GenDataArgs {
    /// two-moons, rings or blobs.
    #[arg(long)]
    kind: Option<String>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Gaussian noise level (blob sigma for `blobs`).
    #[arg(long)]
    noise: Option<f64>,
    /// Ring radii as `inner,outer`.
    #[arg(long)]
    radii: Option<String>,
    /// Blob centers as `x,y;x,y;...` inside the unit box.
    #[arg(long)]
    centers: Option<String>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct TrainArgs {
    /// Training data CSV.
    #[arg(long)]
    data: Option<PathBuf>,
    /// erm, at, fat or gairat.
    #[arg(long)]
    method: Option<String>,
    #[arg(long)]
    epochs: Option<usize>,
    /// Epochs with uniform weights before GAIRAT reweighting starts.
    #[arg(long)]
    burn_in: Option<usize>,
    #[arg(long)]
    inner_steps: Option<usize>,
    #[arg(long)]
    eps: Option<f64>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Hidden widths, comma separated.
    #[arg(long)]
    hidden: Option<String>,
    /// relu or tanh.
    #[arg(long)]
    activation: Option<String>,
    #[arg(long)]
    init_seed: Option<u64>,
    /// GAIRAT weight shift λ.
    #[arg(long = "lambda")]
    omega_lambda: Option<f64>,
    /// Extra steps FAT takes after the first misclassification.
    #[arg(long)]
    fat_slack: Option<usize>,
    /// Inner attack used by GAIRAT: pgd or friendly.
    #[arg(long)]
    crafting: Option<String>,
    /// Checkpoint path.
    #[arg(long)]
    out: Option<PathBuf>,
    /// History CSV path (defaults to the checkpoint path with `.history.csv`).
    #[arg(long)]
    history: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct Inputs {
    /// Checkpoint to evaluate.
    #[arg(long)]
    model: Option<PathBuf>,
    /// Evaluation data CSV.
    #[arg(long)]
    data: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct AttackFlags {
    #[arg(long)]
    eps: Option<f64>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long)]
    step_size: Option<f64>,
    #[arg(long)]
    restarts: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// best_iterate or all_iterates.
    #[arg(long)]
    verdict: Option<String>,
}

#[derive(Debug, Args)]
struct AttackArgs {
    #[command(flatten)]
    inputs: Inputs,
    /// pgd20, pgdplus or pgd200.
    #[arg(long)]
    attack: Option<String>,
    #[command(flatten)]
    flags: AttackFlags,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct EvalArgs {
    #[command(flatten)]
    inputs: Inputs,
    #[arg(long)]
    attack: Option<String>,
    #[command(flatten)]
    flags: AttackFlags,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct SweepArgs {
    #[command(flatten)]
    inputs: Inputs,
    /// One attack name or a comma separated list.
    #[arg(long)]
    attack: Option<String>,
    /// `lo:hi:count` (log spaced) or an explicit list `a,b,c`.
    #[arg(long)]
    alpha_grid: Option<String>,
    #[command(flatten)]
    flags: AttackFlags,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct OracleArgs {
    #[command(flatten)]
    inputs: Inputs,
    #[arg(long)]
    attack: Option<String>,
    #[command(flatten)]
    flags: AttackFlags,
    /// Points per axis of the search grid.
    #[arg(long)]
    grid: Option<usize>,
    /// Only check the first N examples (0 = all).
    #[arg(long)]
    limit: Option<usize>,
}

#[derive(Debug, Args)]
struct ReportArgs {
    #[arg(required = true)]
    reports: Vec<PathBuf>,
    /// Write the summary CSV here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug)]
enum CliError {
    Usage(String),
    Run(Error),
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Run(e)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Run(e.into())
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

/// Parses `args` (program name first) and runs the command.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => EXIT_OK,
                _ => EXIT_USAGE,
            };
        }
    };
    match execute(cli) {
        Ok(code) => code,
        Err(CliError::Usage(msg)) => {
            eprintln!("error: {msg}\n");
            eprintln!("{}", Cli::command().render_usage());
            EXIT_USAGE
        }
        Err(CliError::Run(e)) => {
            eprintln!("error: {e}");
            EXIT_DATA
        }
    }
}

fn execute(cli: Cli) -> CliResult<i32> {
    let file = cli
        .config
        .as_deref()
        .map(ExperimentConfig::load)
        .transpose()?;
    let file = file.as_ref();
    match cli.command {
        Command::GenData(a) => gen_data(file, a),
        Command::Train(a) => train_cmd(file, a),
        Command::Attack(a) => attack_cmd(file, a),
        Command::Eval(a) => eval_cmd(file, a),
        Command::Sweep(a) => sweep_cmd(file, a),
        Command::OracleCheck(a) => oracle_cmd(file, a),
        Command::Report(a) => report_cmd(a),
    }
}

// ---- resolution helpers ----

fn default_out(name: &str) -> PathBuf {
    match std::env::var_os(OUT_DIR_ENV) {
        Some(dir) if !dir.is_empty() => PathBuf::from(dir).join(name),
        _ => PathBuf::from(name),
    }
}

fn layered(file: Option<&ExperimentConfig>, defaults: &[(&str, &str, String)]) -> ExperimentConfig {
    let mut r = ExperimentConfig::default();
    for (s, k, v) in defaults {
        r.set(s, k, v.clone());
    }
    if let Some(f) = file {
        r.merge(f);
    }
    r
}

fn flag<T: Display>(r: &mut ExperimentConfig, section: &str, key: &str, v: &Option<T>) {
    if let Some(v) = v {
        r.set(section, key, v.to_string());
    }
}

fn flag_path(r: &mut ExperimentConfig, section: &str, key: &str, v: &Option<PathBuf>) {
    if let Some(p) = v {
        r.set(section, key, p.display().to_string());
    }
}

fn req<T: FromStr>(r: &ExperimentConfig, section: &str, key: &str) -> CliResult<T> {
    r.get_parsed(section, key)?.ok_or_else(|| {
        CliError::Usage(format!(
            "missing value for `{key}` (pass the flag or set it under [{section}] in --config)"
        ))
    })
}

fn parse_named<T: FromStr<Err = Error>>(r: &ExperimentConfig, section: &str, key: &str) -> CliResult<T> {
    let raw: String = req(r, section, key)?;
    Ok(raw.parse()?)
}

fn emit_resolved(r: &ExperimentConfig) {
    eprintln!("# resolved config");
    for line in r.to_lines() {
        eprintln!("#   {line}");
    }
}

fn now_secs() -> Option<u64> {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .ok()
        .map(|d| d.as_secs())
}

fn parse_list<T: FromStr>(s: &str, what: &str) -> CliResult<Vec<T>> {
    s.split(',')
        .map(str::trim)
        .filter(|t| !t.is_empty())
        .map(|t| {
            t.parse()
                .map_err(|_| CliError::Run(Error::Config(format!("invalid {what} '{t}'"))))
        })
        .collect()
}

fn write_text(path: &Path, text: &str) -> CliResult<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    std::fs::write(path, text)?;
    Ok(())
}

fn ensure_parent(path: &Path) -> CliResult<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    Ok(())
}

// ---- gen-data ----

fn gen_data(file: Option<&ExperimentConfig>, a: GenDataArgs) -> CliResult<i32> {
    let mut r = layered(
        file,
        &[
            ("data", "kind", "two-moons".into()),
            ("data", "n", "1000".into()),
            ("data", "seed", "0".into()),
            ("data", "path", default_out("data.csv").display().to_string()),
        ],
    );
    flag(&mut r, "data", "kind", &a.kind);
    flag(&mut r, "data", "n", &a.n);
    flag(&mut r, "data", "seed", &a.seed);
    flag(&mut r, "data", "noise", &a.noise);
    flag(&mut r, "data", "radii", &a.radii);
    flag(&mut r, "data", "centers", &a.centers);
    flag_path(&mut r, "data", "path", &a.out);

    let kind: String = req(&r, "data", "kind")?;
    let default_noise = match kind.as_str() {
        "two-moons" => "0.1",
        "rings" => "0.02",
        "blobs" => "0.05",
        other => return Err(Error::Config(format!("unknown dataset kind '{other}'")).into()),
    };
    if r.get("data", "noise").is_none() {
        r.set("data", "noise", default_noise);
    }
    if kind == "rings" && r.get("data", "radii").is_none() {
        r.set("data", "radii", "0.5,1.0");
    }
    if kind == "blobs" && r.get("data", "centers").is_none() {
        r.set("data", "centers", "0.25,0.25;0.75,0.75");
    }
    emit_resolved(&r);

    let n: usize = req(&r, "data", "n")?;
    let seed: u64 = req(&r, "data", "seed")?;
    let noise: f64 = req(&r, "data", "noise")?;
    let ds = match kind.as_str() {
        "two-moons" => gen_two_moons(n, noise, seed)?,
        "rings" => {
            let radii: Vec<f64> = parse_list(&req::<String>(&r, "data", "radii")?, "radius")?;
            let [inner, outer] = radii.as_slice() else {
                return Err(Error::Config("radii needs exactly two values".into()).into());
            };
            gen_rings(n, (*inner, *outer), noise, seed)?
        }
        _ => {
            let centers = req::<String>(&r, "data", "centers")?
                .split(';')
                .map(|c| parse_list::<f64>(c, "center coordinate"))
                .collect::<CliResult<Vec<_>>>()?;
            gen_gaussian_blobs(n, &centers, noise, seed)?
        }
    };
    let out = PathBuf::from(req::<String>(&r, "data", "path")?);
    ensure_parent(&out)?;
    save_csv(&ds, &out)?;
    println!("wrote {} rows ({}) to {}", ds.len(), ds.id(), out.display());
    Ok(EXIT_OK)
}

// ---- train ----

fn train_cmd(file: Option<&ExperimentConfig>, a: TrainArgs) -> CliResult<i32> {
    let mut r = layered(
        file,
        &[
            ("train", "method", "at".into()),
            ("train", "epochs", "60".into()),
            ("train", "inner_steps", "10".into()),
            ("train", "eps", DEFAULT_EPS.to_string()),
            ("train", "lr", "0.2".into()),
            ("train", "batch_size", "16".into()),
            ("train", "seed", "0".into()),
            ("train", "hidden", "32,32".into()),
            ("train", "activation", "relu".into()),
            ("train", "init_seed", "0".into()),
            ("train", "omega_lambda", "0".into()),
            ("train", "fat_slack", "0".into()),
            ("train", "crafting", "pgd".into()),
            ("train", "out", default_out("model.ckpt").display().to_string()),
        ],
    );
    flag_path(&mut r, "data", "path", &a.data);
    flag(&mut r, "train", "method", &a.method);
    flag(&mut r, "train", "epochs", &a.epochs);
    flag(&mut r, "train", "burn_in", &a.burn_in);
    flag(&mut r, "train", "inner_steps", &a.inner_steps);
    flag(&mut r, "train", "eps", &a.eps);
    flag(&mut r, "train", "lr", &a.lr);
    flag(&mut r, "train", "batch_size", &a.batch_size);
    flag(&mut r, "train", "seed", &a.seed);
    flag(&mut r, "train", "hidden", &a.hidden);
    flag(&mut r, "train", "activation", &a.activation);
    flag(&mut r, "train", "init_seed", &a.init_seed);
    flag(&mut r, "train", "omega_lambda", &a.omega_lambda);
    flag(&mut r, "train", "fat_slack", &a.fat_slack);
    flag(&mut r, "train", "crafting", &a.crafting);
    flag_path(&mut r, "train", "out", &a.out);
    flag_path(&mut r, "train", "history", &a.history);

    let epochs: usize = req(&r, "train", "epochs")?;
    if r.get("train", "burn_in").is_none() {
        r.set("train", "burn_in", ((epochs as f64) * 0.3).round().to_string());
    }
    let out = PathBuf::from(req::<String>(&r, "train", "out")?);
    if r.get("train", "history").is_none() {
        r.set("train", "history", history_path(&out).display().to_string());
    }
    emit_resolved(&r);

    let data_path: String = req(&r, "data", "path")?;
    let method: Method = parse_named(&r, "train", "method")?;
    let eps: f64 = req(&r, "train", "eps")?;
    let seed: u64 = req(&r, "train", "seed")?;
    let mut tc = TrainConfig::for_method(method, epochs, eps, seed);
    tc.batch_size = req(&r, "train", "batch_size")?;
    tc.learning_rate = req(&r, "train", "lr")?;
    tc.burn_in_epochs = req(&r, "train", "burn_in")?;
    tc.fat_slack = req(&r, "train", "fat_slack")?;
    tc.gairat_crafting = parse_named::<Crafting>(&r, "train", "crafting")?;
    if method == Method::Gairat {
        tc.omega_lambda = Some(req(&r, "train", "omega_lambda")?);
    }
    let inner_steps: usize = req(&r, "train", "inner_steps")?;
    if let Some(att) = tc.inner_attack.as_mut() {
        att.steps = inner_steps;
    }

    let ds = load_csv(Path::new(&data_path))?;
    let hidden: Vec<usize> = parse_list(&req::<String>(&r, "train", "hidden")?, "hidden width")?;
    let mut sizes = vec![ds.dim()];
    sizes.extend(hidden);
    sizes.push(ds.num_classes);
    let activation: Activation = parse_named(&r, "train", "activation")?;
    let model_cfg = MlpConfig::new(sizes, activation, req(&r, "train", "init_seed")?)?;

    let (params, history) = train(&model_cfg, &ds, &tc)?;
    let meta = CheckpointMeta {
        method: method.to_string(),
        seed,
        epochs,
    };
    ensure_parent(&out)?;
    save_checkpoint(&params, &meta, &out)?;
    let hist_path = PathBuf::from(req::<String>(&r, "train", "history")?);
    write_text(&hist_path, &history.to_csv())?;
    let final_acc = history.records.last().map(|rec| rec.nat_acc);
    println!(
        "trained {method} for {epochs} epochs; checkpoint {} ({}); history {}{}",
        out.display(),
        params.content_hash(),
        hist_path.display(),
        final_acc.map(|a| format!("; final train accuracy {a:.4}")).unwrap_or_default()
    );
    Ok(EXIT_OK)
}

fn history_path(checkpoint: &Path) -> PathBuf {
    let stem = checkpoint
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "model".into());
    checkpoint.with_file_name(format!("{stem}.history.csv"))
}

// ---- evaluation-side commands ----

fn eval_layers(file: Option<&ExperimentConfig>, inputs: &Inputs, attack: &Option<String>, default_attack: &str) -> ExperimentConfig {
    let mut r = layered(file, &[("sweep", "attack", default_attack.to_string())]);
    flag_path(&mut r, "train", "out", &inputs.model);
    flag_path(&mut r, "data", "test_path", &inputs.data);
    flag(&mut r, "sweep", "attack", attack);
    r
}

/// Applies the attack flags to `[attack.<name>]`, then fills in the rest of
/// the preset so the resolved config is complete.
fn resolve_attack(r: &mut ExperimentConfig, name: &str, f: &AttackFlags) -> CliResult<AttackConfig> {
    let sec = format!("attack.{name}");
    flag(r, &sec, "epsilon", &f.eps);
    flag(r, &sec, "alpha", &f.alpha);
    flag(r, &sec, "steps", &f.steps);
    flag(r, &sec, "step_size", &f.step_size);
    flag(r, &sec, "restarts", &f.restarts);
    flag(r, &sec, "seed", &f.seed);
    flag(r, &sec, "verdict", &f.verdict);
    let eps: f64 = r.get_parsed(&sec, "epsilon")?.unwrap_or(DEFAULT_EPS);
    let cfg = r.attack(name, AttackConfig::preset(name, eps)?)?;
    cfg.validate()?;
    for line in cfg.to_kv().lines() {
        if let Some((k, v)) = line.split_once('=') {
            r.set(&sec, k.trim(), v.trim());
        }
    }
    Ok(cfg)
}

fn load_inputs(r: &ExperimentConfig) -> CliResult<(MlpParams, String, Dataset)> {
    let model_path: String = req(r, "train", "out").map_err(|_| {
        CliError::Usage("missing --model (or `out` under [train] in --config)".into())
    })?;
    let data_path = match r.get("data", "test_path").or(r.get("data", "path")) {
        Some(p) => p.to_string(),
        None => return Err(CliError::Usage("missing --data (or `test_path`/`path` under [data])".into())),
    };
    let ckpt = load_checkpoint(Path::new(&model_path))?;
    let ds = load_csv(Path::new(&data_path))?;
    if ckpt.params.input_dim() != ds.dim() {
        return Err(Error::dim(&[ckpt.params.input_dim()], &[ds.dim()]).into());
    }
    let id = if ckpt.meta.method.is_empty() {
        Path::new(&model_path)
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "model".into())
    } else {
        ckpt.meta.method.clone()
    };
    Ok((ckpt.params, id, ds))
}

fn attack_cmd(file: Option<&ExperimentConfig>, a: AttackArgs) -> CliResult<i32> {
    let mut r = eval_layers(file, &a.inputs, &a.attack, "pgd20");
    let name: String = req(&r, "sweep", "attack")?;
    let cfg = resolve_attack(&mut r, &name, &a.flags)?;
    let out = a.out.unwrap_or_else(|| default_out("adversarial.csv"));
    r.set("sweep", "adversarial_out", out.display().to_string());
    emit_resolved(&r);

    let (model, _, ds) = load_inputs(&r)?;
    let res = pgd_attack(&model, &ds.points, &ds.labels, Some(&ds.domain), &cfg)?;
    let verdicts = res.verdict(cfg.verdict);
    let acc = verdicts.iter().filter(|&&v| v).count() as f64 / ds.len() as f64;
    let domain = covering_box(&ds.domain, &res.adversarial)?;
    let adv = Dataset::new(
        res.adversarial,
        ds.labels.clone(),
        domain,
        ds.num_classes,
        ds.seed,
        format!("{}+{name}", ds.generator),
    )?;
    ensure_parent(&out)?;
    save_csv(&adv, &out)?;
    println!(
        "{name} alpha={} robust_accuracy={acc:.4} n={} -> {}",
        cfg.alpha,
        ds.len(),
        out.display()
    );
    Ok(EXIT_OK)
}

/// `domain`, widened if unclipped attacks stepped outside it.
fn covering_box(domain: &DomainBox, pts: &Tensor) -> CliResult<DomainBox> {
    let mut lo = domain.lower().to_vec();
    let mut hi = domain.upper().to_vec();
    for i in 0..pts.rows() {
        for (j, &v) in pts.row(i).iter().enumerate() {
            lo[j] = lo[j].min(v);
            hi[j] = hi[j].max(v);
        }
    }
    Ok(DomainBox::new(lo, hi)?)
}

fn finish_report(mut report: EvalReport, r: &ExperimentConfig, out: &Path) -> CliResult<()> {
    report.config_lines = r.to_lines();
    report.timestamp = now_secs();
    ensure_parent(out)?;
    write_report(&report, out)?;
    Ok(())
}

fn eval_cmd(file: Option<&ExperimentConfig>, a: EvalArgs) -> CliResult<i32> {
    let mut r = eval_layers(file, &a.inputs, &a.attack, "pgd20");
    let name: String = req(&r, "sweep", "attack")?;
    let cfg = resolve_attack(&mut r, &name, &a.flags)?;
    let out = a.out.unwrap_or_else(|| default_out("eval.csv"));
    r.set("sweep", "eval_out", out.display().to_string());
    emit_resolved(&r);

    let (model, id, ds) = load_inputs(&r)?;
    let mut report = EvalReport::new(&model, &id, &ds)?;
    let res = pgd_attack(&model, &ds.points, &ds.labels, Some(&ds.domain), &cfg)?;
    let v = res.verdict(cfg.verdict);
    let acc = v.iter().filter(|&&c| c).count() as f64 / ds.len() as f64;
    report.add_row(ReportRow {
        attack: name.clone(),
        alpha: cfg.alpha,
        robust_accuracy: acc,
        n: ds.len(),
    });
    println!("natural_accuracy={:.4}", report.natural_accuracy);
    println!("{name} alpha={} robust_accuracy={acc:.4}", cfg.alpha);
    finish_report(report, &r, &out)?;
    println!("report -> {}", out.display());
    Ok(EXIT_OK)
}

fn sweep_cmd(file: Option<&ExperimentConfig>, a: SweepArgs) -> CliResult<i32> {
    let mut r = eval_layers(file, &a.inputs, &a.attack, "pgd20");
    if r.get("sweep", "alpha_grid").is_none() {
        r.set("sweep", "alpha_grid", "1e-2:1e2:9");
    }
    flag(&mut r, "sweep", "alpha_grid", &a.alpha_grid);
    if r.get("sweep", "out").is_none() {
        r.set("sweep", "out", default_out("sweep.csv").display().to_string());
    }
    flag_path(&mut r, "sweep", "out", &a.out);
    let names: Vec<String> = parse_list(&req::<String>(&r, "sweep", "attack")?, "attack name")?;
    if names.is_empty() {
        return Err(CliError::Usage("no attack given".into()));
    }
    let grid = parse_alpha_grid(&req::<String>(&r, "sweep", "alpha_grid")?)?;
    let configs = names
        .iter()
        .map(|n| resolve_attack(&mut r, n, &a.flags))
        .collect::<CliResult<Vec<_>>>()?;
    emit_resolved(&r);

    let (model, id, ds) = load_inputs(&r)?;
    let mut report = EvalReport::new(&model, &id, &ds)?;
    println!("natural_accuracy={:.4}", report.natural_accuracy);
    for (name, cfg) in names.iter().zip(configs) {
        let verdict = cfg.verdict;
        let sweep = SweepConfig::new(grid.clone(), cfg)?;
        let res = alpha_sweep(&model, &ds, name, &sweep, verdict)?;
        for row in &res.rows {
            println!("{name} alpha={:e} robust_accuracy={:.4}", row.alpha, row.robust_accuracy);
        }
        println!("{name} worst_alpha={:e}", res.worst_alpha);
        report.add_sweep(res);
    }
    let out = PathBuf::from(req::<String>(&r, "sweep", "out")?);
    finish_report(report, &r, &out)?;
    println!("report -> {}", out.display());
    Ok(EXIT_OK)
}

fn oracle_cmd(file: Option<&ExperimentConfig>, a: OracleArgs) -> CliResult<i32> {
    let mut r = eval_layers(file, &a.inputs, &a.attack, "pgdplus");
    if r.get("sweep", "oracle_grid").is_none() {
        r.set("sweep", "oracle_grid", "51");
    }
    if r.get("sweep", "oracle_limit").is_none() {
        r.set("sweep", "oracle_limit", "0");
    }
    flag(&mut r, "sweep", "oracle_grid", &a.grid);
    flag(&mut r, "sweep", "oracle_limit", &a.limit);
    let name: String = req(&r, "sweep", "attack")?;
    let cfg = resolve_attack(&mut r, &name, &a.flags)?;
    emit_resolved(&r);

    let grid: usize = req(&r, "sweep", "oracle_grid")?;
    let limit: usize = req(&r, "sweep", "oracle_limit")?;
    let (model, _, ds) = load_inputs(&r)?;
    let ds = if limit > 0 && limit < ds.len() {
        ds.subset(&(0..limit).collect::<Vec<_>>())
    } else {
        ds
    };
    let attack = pgd_attack(&model, &ds.points, &ds.labels, Some(&ds.domain), &cfg)?.verdict(cfg.verdict);
    let exhaustive = (0..ds.len())
        .into_par_iter()
        .map(|i| {
            brute_force_attack(&model, ds.points.row(i), ds.labels[i], cfg.epsilon, Some(&ds.domain), grid)
        })
        .collect::<crate::error::Result<Vec<bool>>>()?;
    let n = ds.len() as f64;
    let attack_acc = attack.iter().filter(|&&v| v).count() as f64 / n;
    let grid_acc = exhaustive.iter().filter(|&&v| v).count() as f64 / n;
    let missed = attack.iter().zip(&exhaustive).filter(|(&p, &g)| p && !g).count();
    let natural = eval_natural(&model, &ds)?;
    println!("natural_accuracy={natural:.4}");
    println!("{name} robust_accuracy={attack_acc:.4}");
    println!("grid{grid} robust_accuracy={grid_acc:.4}");
    println!("missed_by_attack={missed}");
    if attack_acc <= grid_acc {
        println!("ok: attack accuracy does not exceed the grid search");
        Ok(EXIT_OK)
    } else {
        println!("FAILED: attack accuracy exceeds the grid search");
        Ok(EXIT_CHECK_FAILED)
    }
}

// ---- report ----

pub const SUMMARY_HEADER: &str =
    "model,attack,natural_accuracy,acc_at_alpha_1,worst_alpha,acc_at_worst,gap";

fn report_cmd(a: ReportArgs) -> CliResult<i32> {
    let mut s = String::from(SUMMARY_HEADER);
    s.push('\n');
    for path in &a.reports {
        let rep = read_report(path)?;
        let mut attacks: Vec<&str> = rep.rows.iter().map(|r| r.attack.as_str()).collect();
        attacks.dedup();
        for attack in attacks {
            let cell = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
            let gap = rep.alpha_gap(attack);
            let worst = rep.worst_alpha_for(attack);
            s.push_str(&format!(
                "{},{attack},{},{},{},{},{}\n",
                rep.model_id,
                rep.natural_accuracy,
                cell(rep.accuracy(attack, 1.0)),
                cell(worst),
                cell(worst.and_then(|w| rep.accuracy(attack, w))),
                cell(gap.map(|g| g.gap)),
            ));
        }
    }
    match a.out {
        Some(out) => {
            write_text(&out, &s)?;
            println!("summary -> {}", out.display());
        }
        None => print!("{s}"),
    }
    Ok(EXIT_OK)
}
