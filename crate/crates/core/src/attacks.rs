//! ℓ∞ first-order attacks.
//!
//! [`pgd_attack`] runs sign-gradient ascent on the logit-scaled
//! cross-entropy, projecting every iterate back into the ε-ball (and the
//! input domain). It records prediction correctness at every visited
//! iterate so that the same run yields the best-iterate verdict, the
//! all-iterates verdict, and the geometry value κ.
//!
//! Examples are processed in fixed-size chunks, possibly in parallel. Random
//! starts draw from a stream keyed by `(seed, example index, restart)`, and
//! every per-example computation only reads its own row, so results do not
//! depend on chunking or scheduling.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::datasets::DomainBox;
use crate::error::{Error, Result};
use crate::model::MlpParams;
use crate::tensor::{argmax, Tape, Tensor};

const CHUNK: usize = 64;

/// How a per-example robust verdict is formed from an attack run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    /// Correct at the returned (max-loss) adversarial point.
    BestIterate,
    /// Correct at the natural point and at every visited iterate of every
    /// restart.
    AllIterates,
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Verdict::BestIterate => "best_iterate",
            Verdict::AllIterates => "all_iterates",
        })
    }
}

impl FromStr for Verdict {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "best_iterate" | "best-iterate" => Ok(Verdict::BestIterate),
            "all_iterates" | "all-iterates" => Ok(Verdict::AllIterates),
            other => Err(Error::Config(format!("unknown verdict '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttackConfig {
    /// ℓ∞ radius.
    pub epsilon: f64,
    pub steps: usize,
    pub step_size: f64,
    pub restarts: usize,
    /// Logit scale used in the crafting loss; 1 is vanilla PGD.
    pub alpha: f64,
    pub random_start: bool,
    pub clip_to_domain: bool,
    pub seed: u64,
    pub verdict: Verdict,
}

impl AttackConfig {
    /// 20 steps of size ε/4, one uniform random start.
    pub fn pgd20(epsilon: f64) -> Self {
        Self {
            epsilon,
            steps: 20,
            step_size: epsilon / 4.0,
            restarts: 1,
            alpha: 1.0,
            random_start: true,
            clip_to_domain: true,
            seed: 0,
            verdict: Verdict::BestIterate,
        }
    }

    /// 40 steps of size 0.01, 5 random restarts, all-iterates verdict.
    pub fn pgd_plus(epsilon: f64) -> Self {
        Self {
            steps: 40,
            step_size: 0.01,
            restarts: 5,
            verdict: Verdict::AllIterates,
            ..Self::pgd20(epsilon)
        }
    }

    /// 200 fine steps of size ε/100. The step size is a local choice.
    pub fn pgd200(epsilon: f64) -> Self {
        Self {
            steps: 200,
            step_size: epsilon / 100.0,
            ..Self::pgd20(epsilon)
        }
    }

    /// Looks up a named preset: `pgd20`, `pgdplus` (or `pgd+`), `pgd200`.
    pub fn preset(name: &str, epsilon: f64) -> Result<Self> {
        match name {
            "pgd20" => Ok(Self::pgd20(epsilon)),
            "pgdplus" | "pgd+" | "pgd_plus" => Ok(Self::pgd_plus(epsilon)),
            "pgd200" => Ok(Self::pgd200(epsilon)),
            other => Err(Error::Config(format!(
                "unknown attack preset '{other}' (expected pgd20, pgdplus, pgd200)"
            ))),
        }
    }

    pub fn with_alpha(mut self, alpha: f64) -> Self {
        self.alpha = alpha;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let pos = |v: f64| v > 0.0 && v.is_finite();
        if !pos(self.epsilon) {
            return Err(Error::Config(format!("epsilon must be > 0, got {}", self.epsilon)));
        }
        if !pos(self.step_size) {
            return Err(Error::Config(format!("step_size must be > 0, got {}", self.step_size)));
        }
        if self.steps == 0 {
            return Err(Error::Config("steps must be ≥ 1".into()));
        }
        if self.restarts == 0 {
            return Err(Error::Config("restarts must be ≥ 1".into()));
        }
        if !pos(self.alpha) {
            return Err(Error::Config(format!("alpha must be > 0, got {}", self.alpha)));
        }
        Ok(())
    }

    /// Flat `key = value` lines.
    pub fn to_kv(&self) -> String {
        format!(
            "epsilon = {}\nsteps = {}\nstep_size = {}\nrestarts = {}\nalpha = {}\nrandom_start = {}\nclip_to_domain = {}\nseed = {}\nverdict = {}\n",
            self.epsilon,
            self.steps,
            self.step_size,
            self.restarts,
            self.alpha,
            self.random_start,
            self.clip_to_domain,
            self.seed,
            self.verdict
        )
    }

    /// Overrides one field from its textual form.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        fn p<T: FromStr>(key: &str, v: &str) -> Result<T> {
            v.parse()
                .map_err(|_| Error::Config(format!("invalid value '{v}' for '{key}'")))
        }
        match key {
            "epsilon" | "eps" => self.epsilon = p(key, value)?,
            "steps" => self.steps = p(key, value)?,
            "step_size" => self.step_size = p(key, value)?,
            "restarts" => self.restarts = p(key, value)?,
            "alpha" => self.alpha = p(key, value)?,
            "random_start" => self.random_start = p(key, value)?,
            "clip_to_domain" => self.clip_to_domain = p(key, value)?,
            "seed" => self.seed = p(key, value)?,
            "verdict" => self.verdict = value.parse()?,
            other => return Err(Error::Config(format!("unknown attack key '{other}'"))),
        }
        Ok(())
    }

    /// Parses `key = value` lines over `base`. Blank lines and `#` comments
    /// are skipped.
    pub fn from_kv(text: &str, base: AttackConfig) -> Result<Self> {
        let mut cfg = base;
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::parse_at_line(i + 1, format!("expected key = value, got '{line}'")))?;
            cfg.set(k.trim(), v.trim())?;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Everything one attack run produces.
#[derive(Debug, Clone, PartialEq)]
pub struct AttackResult {
    /// Max-loss iterate per example (earliest on ties).
    pub adversarial: Tensor,
    pub kappa: Vec<usize>,
    pub natural_correct: Vec<bool>,
    /// `[example][restart][iterate]`, iterates `0..=steps`, where iterate 0
    /// is the (possibly randomized) start.
    pub correct_trace: Vec<Vec<Vec<bool>>>,
    /// Crafting loss at the returned point.
    pub best_loss: Vec<f64>,
    /// `(restart, iterate)` of the returned point.
    pub best_at: Vec<(usize, usize)>,
    /// Verdict under `config.verdict`.
    pub final_correct: Vec<bool>,
}

impl AttackResult {
    pub fn len(&self) -> usize {
        self.kappa.len()
    }

    pub fn is_empty(&self) -> bool {
        self.kappa.is_empty()
    }

    pub fn best_iterate_correct(&self) -> Vec<bool> {
        self.correct_trace
            .iter()
            .zip(&self.best_at)
            .map(|(tr, &(r, t))| tr[r][t])
            .collect()
    }

    pub fn all_iterates_correct(&self) -> Vec<bool> {
        self.correct_trace
            .iter()
            .zip(&self.natural_correct)
            .map(|(tr, &nat)| nat && tr.iter().all(|r| r.iter().all(|&c| c)))
            .collect()
    }

    pub fn verdict(&self, v: Verdict) -> Vec<bool> {
        match v {
            Verdict::BestIterate => self.best_iterate_correct(),
            Verdict::AllIterates => self.all_iterates_correct(),
        }
    }

    /// True where some visited point (natural or iterate) was misclassified.
    pub fn found_misclassification(&self) -> Vec<bool> {
        self.all_iterates_correct().into_iter().map(|c| !c).collect()
    }
}

fn check_shapes(x: &Tensor, other: &Tensor) -> Result<()> {
    if x.shape() != other.shape() {
        Err(Error::dim(x.shape(), other.shape()))
    } else {
        Ok(())
    }
}

/// Clamps `x` into `[x0 − ε, x0 + ε]` elementwise, then into `domain`.
pub fn project_linf(
    x: &Tensor,
    x0: &Tensor,
    epsilon: f64,
    domain: Option<&DomainBox>,
) -> Result<Tensor> {
    check_shapes(x, x0)?;
    if let Some(d) = domain {
        if x.cols() != d.dim() {
            return Err(Error::dim(x.shape(), &[d.dim()]));
        }
    }
    let mut out = x.clone();
    project_in_place(out.data_mut(), x0.data(), x.cols(), epsilon, domain);
    Ok(out)
}

fn project_in_place(x: &mut [f64], x0: &[f64], cols: usize, epsilon: f64, domain: Option<&DomainBox>) {
    for (idx, (v, &c)) in x.iter_mut().zip(x0).enumerate() {
        let mut p = v.clamp(c - epsilon, c + epsilon);
        if let Some(d) = domain {
            let k = idx % cols;
            p = p.clamp(d.lower()[k], d.upper()[k]);
        }
        *v = p;
    }
}

/// sign with sign(0) = 0.
fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// RNG for the random start of one example in one restart.
fn start_rng(seed: u64, example: usize, restart: usize) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(mix(mix(seed ^ mix(example as u64)) ^ restart as u64))
}

fn validate_inputs(
    model: &MlpParams,
    x0: &Tensor,
    y: &[usize],
    domain: Option<&DomainBox>,
    config: &AttackConfig,
) -> Result<()> {
    config.validate()?;
    match x0.shape() {
        [n, d] if *d == model.input_dim() => {
            if *n != y.len() {
                return Err(Error::dim(&[*n], &[y.len()]));
            }
        }
        other => return Err(Error::dim(other, &[model.input_dim()])),
    }
    if let Some((i, &l)) = y.iter().enumerate().find(|(_, &l)| l >= model.num_classes()) {
        return Err(Error::Index(format!(
            "label {l} of example {i} outside [0, {})",
            model.num_classes()
        )));
    }
    match domain {
        Some(d) if d.dim() != model.input_dim() => Err(Error::dim(&[d.dim()], &[model.input_dim()])),
        None if config.clip_to_domain => Err(Error::Config(
            "clip_to_domain is set but no domain box was supplied".into(),
        )),
        _ => Ok(()),
    }
}

struct ChunkRun {
    adversarial: Vec<f64>,
    best_loss: Vec<f64>,
    best_at: Vec<(usize, usize)>,
    natural_correct: Vec<bool>,
    trace: Vec<Vec<Vec<bool>>>,
    /// First-restart iterates, `[example][iterate]` rows, when requested.
    first_restart: Option<Vec<Vec<Vec<f64>>>>,
}

fn run_chunk(
    model: &MlpParams,
    x0: &Tensor,
    y: &[usize],
    offset: usize,
    domain: Option<&DomainBox>,
    cfg: &AttackConfig,
    keep_first_restart: bool,
) -> Result<ChunkRun> {
    let n = x0.rows();
    let d = x0.cols();
    let t_max = cfg.steps;
    let clip = if cfg.clip_to_domain { domain } else { None };

    let natural_pred = model.predict(x0)?;
    let natural_correct: Vec<bool> = natural_pred.iter().zip(y).map(|(p, l)| p == l).collect();

    let mut adversarial = x0.data().to_vec();
    let mut best_loss = vec![f64::NEG_INFINITY; n];
    let mut best_at = vec![(0, 0); n];
    let mut trace = vec![vec![Vec::with_capacity(t_max + 1); cfg.restarts]; n];
    let mut first_restart = keep_first_restart.then(|| vec![Vec::with_capacity(t_max + 1); n]);

    for r in 0..cfg.restarts {
        let mut x = x0.data().to_vec();
        if cfg.random_start {
            for i in 0..n {
                let mut rng = start_rng(cfg.seed, offset + i, r);
                for v in &mut x[i * d..(i + 1) * d] {
                    *v += rng.random_range(-cfg.epsilon..=cfg.epsilon);
                }
            }
        }
        project_in_place(&mut x, x0.data(), d, cfg.epsilon, clip);

        for t in 0..=t_max {
            let mut tape = Tape::new();
            let xv = tape.leaf(Tensor::from_parts(vec![n, d], x.clone()));
            let (logits, _) = model.forward_on_tape(&mut tape, xv, false)?;
            let ce = tape.scaled_softmax_cross_entropy(logits, y, cfg.alpha)?;

            let z = tape.value(logits);
            let losses = tape.value(ce).data();
            for i in 0..n {
                trace[i][r].push(argmax(z.row(i)) == y[i]);
                if losses[i] > best_loss[i] {
                    best_loss[i] = losses[i];
                    best_at[i] = (r, t);
                    adversarial[i * d..(i + 1) * d].copy_from_slice(&x[i * d..(i + 1) * d]);
                }
                if r == 0 {
                    if let Some(fr) = first_restart.as_mut() {
                        fr[i].push(x[i * d..(i + 1) * d].to_vec());
                    }
                }
            }

            if t < t_max {
                let total = tape.sum(ce);
                let grads = tape.backward(total)?;
                let gx = grads.wrt(xv)?;
                for (v, &g) in x.iter_mut().zip(gx.data()) {
                    *v += cfg.step_size * sign(g);
                }
                project_in_place(&mut x, x0.data(), d, cfg.epsilon, clip);
            }
        }
    }

    Ok(ChunkRun {
        adversarial,
        best_loss,
        best_at,
        natural_correct,
        trace,
        first_restart,
    })
}

fn run_all(
    model: &MlpParams,
    x0: &Tensor,
    y: &[usize],
    domain: Option<&DomainBox>,
    cfg: &AttackConfig,
    keep_first_restart: bool,
) -> Result<Vec<ChunkRun>> {
    validate_inputs(model, x0, y, domain, cfg)?;
    let n = x0.rows();
    let starts: Vec<usize> = (0..n).step_by(CHUNK).collect();
    starts
        .into_par_iter()
        .map(|s| {
            let e = (s + CHUNK).min(n);
            let idx: Vec<usize> = (s..e).collect();
            run_chunk(model, &x0.select_rows(&idx), &y[s..e], s, domain, cfg, keep_first_restart)
        })
        .collect()
}

/// κ per example: index of the first misclassified entry of each trace,
/// or `steps` if there is none.
pub fn count_kappa(traces: &[Vec<bool>], steps: usize) -> Vec<usize> {
    traces
        .iter()
        .map(|tr| tr.iter().position(|&c| !c).unwrap_or(steps).min(steps))
        .collect()
}

/// Projected sign-gradient ascent on `−log softmax(α·f(x))_y`.
pub fn pgd_attack(
    model: &MlpParams,
    x0: &Tensor,
    y: &[usize],
    domain: Option<&DomainBox>,
    config: &AttackConfig,
) -> Result<AttackResult> {
    let chunks = run_all(model, x0, y, domain, config, false)?;
    Ok(assemble(x0, chunks, config).0)
}

fn assemble(
    x0: &Tensor,
    chunks: Vec<ChunkRun>,
    config: &AttackConfig,
) -> (AttackResult, Option<Vec<Vec<Vec<f64>>>>) {
    let n = x0.rows();
    let mut adv = Vec::with_capacity(x0.len());
    let mut best_loss = Vec::with_capacity(n);
    let mut best_at = Vec::with_capacity(n);
    let mut natural_correct = Vec::with_capacity(n);
    let mut trace = Vec::with_capacity(n);
    let mut first: Option<Vec<Vec<Vec<f64>>>> = None;
    for c in chunks {
        adv.extend(c.adversarial);
        best_loss.extend(c.best_loss);
        best_at.extend(c.best_at);
        natural_correct.extend(c.natural_correct);
        trace.extend(c.trace);
        if let Some(fr) = c.first_restart {
            first.get_or_insert_with(Vec::new).extend(fr);
        }
    }
    // κ: the natural point counts as iterate 0, then the first restart's
    // iterates 1..=T.
    let kappa_traces: Vec<Vec<bool>> = trace
        .iter()
        .zip(&natural_correct)
        .map(|(tr, &nat): (&Vec<Vec<bool>>, &bool)| {
            std::iter::once(nat).chain(tr[0][1..].iter().copied()).collect()
        })
        .collect();
    let kappa = count_kappa(&kappa_traces, config.steps);
    let mut result = AttackResult {
        adversarial: Tensor::from_parts(x0.shape().to_vec(), adv),
        kappa,
        natural_correct,
        correct_trace: trace,
        best_loss,
        best_at,
        final_correct: Vec::new(),
    };
    result.final_correct = result.verdict(config.verdict);
    (result, first)
}

/// Early-stopped PGD: per example, returns the first-restart iterate
/// `slack_steps` after the first misclassified one (capped at the last
/// iterate). Examples never misclassified get the [`pgd_attack`] point.
pub fn friendly_adversarial_search(
    model: &MlpParams,
    x0: &Tensor,
    y: &[usize],
    domain: Option<&DomainBox>,
    config: &AttackConfig,
    slack_steps: usize,
) -> Result<Tensor> {
    Ok(friendly_adversarial_run(model, x0, y, domain, config, slack_steps)?.0)
}

/// As [`friendly_adversarial_search`], also returning the full attack run
/// (whose κ and traces are those of the underlying PGD trajectory).
pub fn friendly_adversarial_run(
    model: &MlpParams,
    x0: &Tensor,
    y: &[usize],
    domain: Option<&DomainBox>,
    config: &AttackConfig,
    slack_steps: usize,
) -> Result<(Tensor, AttackResult)> {
    let chunks = run_all(model, x0, y, domain, config, true)?;
    let (result, first) = assemble(x0, chunks, config);
    let first = first.expect("first-restart iterates requested");
    let d = x0.cols();
    let mut out = result.adversarial.data().to_vec();
    for (i, tr) in result.correct_trace.iter().enumerate() {
        if let Some(t) = tr[0].iter().position(|&c| !c) {
            let stop = (t + slack_steps).min(config.steps);
            out[i * d..(i + 1) * d].copy_from_slice(&first[i][stop]);
        }
    }
    Ok((Tensor::from_parts(x0.shape().to_vec(), out), result))
}

/// Loss gap `l(f(x), y) − min_y' l(f(x), y')` of the unscaled cross-entropy;
/// positive exactly when the logit of `y` is not a maximum.
pub fn margin_gap(model: &MlpParams, x: &Tensor, y: &[usize]) -> Result<Vec<f64>> {
    let logits = model.forward_logits(x)?;
    Ok((0..logits.rows())
        .map(|i| {
            let row = logits.row(i);
            // CE(y') = lse − z_y', so the gap is max_j z_j − z_y
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            max - row[y[i]]
        })
        .collect())
}

/// Per-example robust verdict that only passes examples correct at the
/// natural point and at every visited iterate of every restart. Meant for
/// the 40-step / 0.01 / 5-restart configuration of [`AttackConfig::pgd_plus`].
pub fn pgd_plus_verdict(
    model: &MlpParams,
    x0: &Tensor,
    y: &[usize],
    domain: Option<&DomainBox>,
    config: &AttackConfig,
) -> Result<Vec<bool>> {
    Ok(pgd_attack(model, x0, y, domain, config)?.all_iterates_correct())
}

pub const MAX_BRUTE_FORCE_DIM: usize = 3;
pub const MAX_GRID_RESOLUTION: usize = 101;

/// Exhaustive check on a `G^d` grid over the ε-box around `x0` (intersected
/// with `domain`), corners included, plus `x0` itself. Returns true iff
/// every grid point is classified as `y`.
pub fn brute_force_attack(
    model: &MlpParams,
    x0: &[f64],
    y: usize,
    epsilon: f64,
    domain: Option<&DomainBox>,
    grid_resolution: usize,
) -> Result<bool> {
    let d = x0.len();
    if d > MAX_BRUTE_FORCE_DIM {
        return Err(Error::Capability(format!(
            "brute force limited to d ≤ {MAX_BRUTE_FORCE_DIM}, got d = {d}"
        )));
    }
    if d != model.input_dim() {
        return Err(Error::dim(&[d], &[model.input_dim()]));
    }
    if !(2..=MAX_GRID_RESOLUTION).contains(&grid_resolution) {
        return Err(Error::Parameter(format!(
            "grid resolution must be in [2, {MAX_GRID_RESOLUTION}], got {grid_resolution}"
        )));
    }
    if !(epsilon >= 0.0 && epsilon.is_finite()) {
        return Err(Error::Parameter(format!("epsilon must be ≥ 0, got {epsilon}")));
    }
    if y >= model.num_classes() {
        return Err(Error::Index(format!("label {y} outside [0, {})", model.num_classes())));
    }
    let g = grid_resolution;
    let axes: Vec<Vec<f64>> = (0..d)
        .map(|k| {
            let (mut lo, mut hi) = (x0[k] - epsilon, x0[k] + epsilon);
            if let Some(b) = domain {
                lo = lo.max(b.lower()[k]);
                hi = hi.min(b.upper()[k]);
            }
            if lo > hi {
                return Err(Error::Parameter(format!(
                    "ε-box does not meet the domain along axis {k}"
                )));
            }
            Ok((0..g)
                .map(|j| if j == g - 1 { hi } else { lo + (hi - lo) * j as f64 / (g - 1) as f64 })
                .collect())
        })
        .collect::<Result<_>>()?;

    let total = g.pow(d as u32);
    let mut batch: Vec<f64> = x0.to_vec();
    let mut rows = 1;
    let flush = |batch: &mut Vec<f64>, rows: &mut usize| -> Result<bool> {
        let t = Tensor::from_parts(vec![*rows, d], std::mem::take(batch));
        let ok = model.predict(&t)?.iter().all(|&p| p == y);
        *rows = 0;
        Ok(ok)
    };
    for flat in 0..total {
        let mut rem = flat;
        for axis in &axes {
            batch.push(axis[rem % g]);
            rem /= g;
        }
        rows += 1;
        if rows == 4096 && !flush(&mut batch, &mut rows)? {
            return Ok(false);
        }
    }
    if rows > 0 {
        return flush(&mut batch, &mut rows);
    }
    Ok(true)
}
