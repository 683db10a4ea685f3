//! Evaluation protocols and the report CSV.
//!
//! Report layout:
//!
//! ```text
//! # robustlab report v1
//! # model=<id>
//! # checkpoint_sha256=<hex>
//! # dataset=<id>
//! # dataset_seed=<u64>
//! # dataset_sha256=<hex>
//! # natural_accuracy=<f64>
//! # worst_alpha=<attack>:<alpha>        (one per swept attack)
//! # config <free text>                  (zero or more)
//! # timestamp=<unix seconds>            (optional, ignored by comparisons)
//! attack,alpha,robust_accuracy,n
//! pgd20,1.0000000000000000e-2,...,500
//! ```

use std::path::Path;

use rayon::prelude::*;

use crate::attacks::{pgd_attack, AttackConfig, Verdict};
use crate::datasets::Dataset;
use crate::error::{Error, Result};
use crate::model::{fmt_f64, MlpParams};

pub const REPORT_MAGIC: &str = "# robustlab report v1";
pub const REPORT_HEADER: &str = "attack,alpha,robust_accuracy,n";

/// Fraction of examples whose prediction equals the label.
pub fn eval_natural(model: &MlpParams, dataset: &Dataset) -> Result<f64> {
    if model.input_dim() != dataset.dim() {
        return Err(Error::dim(&[model.input_dim()], &[dataset.dim()]));
    }
    let pred = model.predict(&dataset.points)?;
    let hits = pred.iter().zip(&dataset.labels).filter(|(p, y)| p == y).count();
    Ok(hits as f64 / dataset.len() as f64)
}

/// Per-example verdicts of one attack run over the whole dataset.
pub fn robust_verdicts(
    model: &MlpParams,
    dataset: &Dataset,
    attack: &AttackConfig,
    verdict: Verdict,
) -> Result<Vec<bool>> {
    let r = pgd_attack(model, &dataset.points, &dataset.labels, Some(&dataset.domain), attack)?;
    Ok(r.verdict(verdict))
}

pub fn eval_robust(
    model: &MlpParams,
    dataset: &Dataset,
    attack: &AttackConfig,
    verdict: Verdict,
) -> Result<f64> {
    let v = robust_verdicts(model, dataset, attack, verdict)?;
    Ok(v.iter().filter(|&&c| c).count() as f64 / v.len() as f64)
}

/// Nine log-spaced scales from 10⁻² to 10², half a decade apart.
pub fn default_alpha_grid() -> Vec<f64> {
    log_grid(-2.0, 2.0, 9)
}

fn log_grid(lo_exp: f64, hi_exp: f64, count: usize) -> Vec<f64> {
    if count == 1 {
        return vec![10f64.powf(lo_exp)];
    }
    (0..count)
        .map(|k| 10f64.powf(lo_exp + (hi_exp - lo_exp) * k as f64 / (count - 1) as f64))
        .collect()
}

/// Parses `lo:hi:count` (log-spaced, inclusive) or a comma list.
pub fn parse_alpha_grid(text: &str) -> Result<Vec<f64>> {
    let bad = || Error::Config(format!("invalid alpha grid '{text}'"));
    let grid = if text.contains(':') {
        let parts: Vec<&str> = text.split(':').collect();
        let [lo, hi, count] = parts.as_slice() else {
            return Err(bad());
        };
        let lo: f64 = lo.trim().parse().map_err(|_| bad())?;
        let hi: f64 = hi.trim().parse().map_err(|_| bad())?;
        let count: usize = count.trim().parse().map_err(|_| bad())?;
        if !(lo > 0.0 && hi > 0.0) || count == 0 {
            return Err(bad());
        }
        log_grid(lo.log10(), hi.log10(), count)
    } else {
        text.split(',')
            .map(|s| s.trim().parse::<f64>().map_err(|_| bad()))
            .collect::<Result<Vec<_>>>()?
    };
    SweepConfig::check_grid(&grid)?;
    Ok(grid)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepConfig {
    pub alpha_grid: Vec<f64>,
    pub base_attack: AttackConfig,
}

impl SweepConfig {
    pub fn new(alpha_grid: Vec<f64>, base_attack: AttackConfig) -> Result<Self> {
        Self::check_grid(&alpha_grid)?;
        base_attack.validate()?;
        Ok(Self {
            alpha_grid,
            base_attack,
        })
    }

    fn check_grid(grid: &[f64]) -> Result<()> {
        if grid.is_empty() {
            return Err(Error::Config("alpha grid is empty".into()));
        }
        if grid.iter().any(|&a| !(a > 0.0 && a.is_finite())) {
            return Err(Error::Config(format!("alpha grid values must be > 0: {grid:?}")));
        }
        if grid.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Config(format!("alpha grid must be strictly increasing: {grid:?}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub attack: String,
    pub alpha: f64,
    pub robust_accuracy: f64,
    pub n: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    pub rows: Vec<ReportRow>,
    pub worst_alpha: f64,
}

/// Scale with the lowest robust accuracy; ties go to the smallest scale.
pub fn worst_alpha(rows: &[ReportRow]) -> Option<f64> {
    let mut best: Option<&ReportRow> = None;
    for r in rows {
        best = match best {
            None => Some(r),
            Some(b) if r.robust_accuracy < b.robust_accuracy
                || (r.robust_accuracy == b.robust_accuracy && r.alpha < b.alpha) =>
            {
                Some(r)
            }
            keep => keep,
        };
    }
    best.map(|r| r.alpha)
}

/// One robust evaluation per scale, all sharing the base attack's seed.
pub fn alpha_sweep(
    model: &MlpParams,
    dataset: &Dataset,
    attack_name: &str,
    sweep: &SweepConfig,
    verdict: Verdict,
) -> Result<SweepResult> {
    SweepConfig::check_grid(&sweep.alpha_grid)?;
    let rows = sweep
        .alpha_grid
        .par_iter()
        .map(|&alpha| {
            let cfg = sweep.base_attack.clone().with_alpha(alpha);
            Ok(ReportRow {
                attack: attack_name.to_string(),
                alpha,
                robust_accuracy: eval_robust(model, dataset, &cfg, verdict)?,
                n: dataset.len(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let worst = worst_alpha(&rows).expect("non-empty grid");
    Ok(SweepResult {
        rows,
        worst_alpha: worst,
    })
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct EvalReport {
    pub model_id: String,
    pub checkpoint_hash: String,
    pub dataset_id: String,
    pub dataset_seed: u64,
    pub dataset_hash: String,
    pub natural_accuracy: f64,
    pub rows: Vec<ReportRow>,
    /// Present only for attacks that were swept over α.
    pub worst_alpha: Vec<(String, f64)>,
    pub config_lines: Vec<String>,
    pub timestamp: Option<u64>,
}

/// Accuracy drop from α = 1 to the worst α of one swept attack.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AlphaGap {
    pub acc_at_one: f64,
    pub worst_alpha: f64,
    pub acc_at_worst: f64,
    pub gap: f64,
}

impl EvalReport {
    pub fn new(model: &MlpParams, model_id: &str, dataset: &Dataset) -> Result<Self> {
        Ok(Self {
            model_id: model_id.to_string(),
            checkpoint_hash: model.content_hash(),
            dataset_id: dataset.id(),
            dataset_seed: dataset.seed,
            dataset_hash: dataset.content_hash(),
            natural_accuracy: eval_natural(model, dataset)?,
            ..Default::default()
        })
    }

    pub fn add_sweep(&mut self, sweep: SweepResult) {
        if let Some(first) = sweep.rows.first() {
            let name = first.attack.clone();
            self.worst_alpha.retain(|(a, _)| *a != name);
            self.worst_alpha.push((name, sweep.worst_alpha));
        }
        self.rows.extend(sweep.rows);
        self.sort_rows();
    }

    pub fn add_row(&mut self, row: ReportRow) {
        self.rows.push(row);
        self.sort_rows();
    }

    fn sort_rows(&mut self) {
        self.rows.sort_by(|a, b| {
            a.attack
                .cmp(&b.attack)
                .then(a.alpha.partial_cmp(&b.alpha).unwrap_or(std::cmp::Ordering::Equal))
        });
        self.worst_alpha.sort_by(|a, b| a.0.cmp(&b.0));
    }

    pub fn accuracy(&self, attack: &str, alpha: f64) -> Option<f64> {
        self.rows
            .iter()
            .find(|r| r.attack == attack && r.alpha == alpha)
            .map(|r| r.robust_accuracy)
    }

    pub fn worst_alpha_for(&self, attack: &str) -> Option<f64> {
        self.worst_alpha.iter().find(|(a, _)| a == attack).map(|(_, v)| *v)
    }

    /// `None` unless the attack was swept and the grid contains α = 1.
    pub fn alpha_gap(&self, attack: &str) -> Option<AlphaGap> {
        let worst = self.worst_alpha_for(attack)?;
        let acc_at_one = self.accuracy(attack, 1.0)?;
        let acc_at_worst = self.accuracy(attack, worst)?;
        Some(AlphaGap {
            acc_at_one,
            worst_alpha: worst,
            acc_at_worst,
            gap: acc_at_one - acc_at_worst,
        })
    }

    pub fn validate(&self) -> Result<()> {
        let in_unit = |v: f64| (0.0..=1.0).contains(&v);
        if !in_unit(self.natural_accuracy) {
            return Err(Error::Schema(format!(
                "natural accuracy {} outside [0, 1]",
                self.natural_accuracy
            )));
        }
        for r in &self.rows {
            if !in_unit(r.robust_accuracy) {
                return Err(Error::Schema(format!(
                    "robust accuracy {} for {} at alpha {} outside [0, 1]",
                    r.robust_accuracy, r.attack, r.alpha
                )));
            }
            if !(r.alpha > 0.0) {
                return Err(Error::Schema(format!("alpha {} must be > 0", r.alpha)));
            }
        }
        Ok(())
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::new();
        s.push_str(REPORT_MAGIC);
        s.push('\n');
        s.push_str(&format!("# model={}\n", self.model_id));
        s.push_str(&format!("# checkpoint_sha256={}\n", self.checkpoint_hash));
        s.push_str(&format!("# dataset={}\n", self.dataset_id));
        s.push_str(&format!("# dataset_seed={}\n", self.dataset_seed));
        s.push_str(&format!("# dataset_sha256={}\n", self.dataset_hash));
        s.push_str(&format!("# natural_accuracy={}\n", fmt_f64(self.natural_accuracy)));
        for (attack, alpha) in &self.worst_alpha {
            s.push_str(&format!("# worst_alpha={attack}:{}\n", fmt_f64(*alpha)));
        }
        for line in &self.config_lines {
            s.push_str(&format!("# config {line}\n"));
        }
        if let Some(ts) = self.timestamp {
            s.push_str(&format!("# timestamp={ts}\n"));
        }
        s.push_str(REPORT_HEADER);
        s.push('\n');
        for r in &self.rows {
            s.push_str(&format!(
                "{},{},{},{}\n",
                r.attack,
                fmt_f64(r.alpha),
                fmt_f64(r.robust_accuracy),
                r.n
            ));
        }
        s
    }

    pub fn parse_csv(text: &str) -> Result<Self> {
        let mut rep = EvalReport::default();
        let mut saw_header = false;
        for (idx, raw) in text.lines().enumerate() {
            let lineno = idx + 1;
            let line = raw.trim_end();
            if line.is_empty() {
                continue;
            }
            let float = |v: &str| -> Result<f64> {
                v.trim()
                    .parse()
                    .map_err(|_| Error::parse_at_line(lineno, format!("invalid number '{v}'")))
            };
            if let Some(c) = line.strip_prefix('#') {
                let c = c.trim_start();
                if let Some(rest) = c.strip_prefix("config ") {
                    rep.config_lines.push(rest.to_string());
                    continue;
                }
                let Some((k, v)) = c.split_once('=') else { continue };
                match k {
                    "model" => rep.model_id = v.to_string(),
                    "checkpoint_sha256" => rep.checkpoint_hash = v.to_string(),
                    "dataset" => rep.dataset_id = v.to_string(),
                    "dataset_seed" => {
                        rep.dataset_seed = v
                            .parse()
                            .map_err(|_| Error::parse_at_line(lineno, format!("invalid seed '{v}'")))?
                    }
                    "dataset_sha256" => rep.dataset_hash = v.to_string(),
                    "natural_accuracy" => rep.natural_accuracy = float(v)?,
                    "worst_alpha" => {
                        let (a, x) = v.rsplit_once(':').ok_or_else(|| {
                            Error::parse_at_line(lineno, "worst_alpha needs <attack>:<alpha>")
                        })?;
                        rep.worst_alpha.push((a.to_string(), float(x)?));
                    }
                    "timestamp" => {
                        rep.timestamp = Some(v.parse().map_err(|_| {
                            Error::parse_at_line(lineno, format!("invalid timestamp '{v}'"))
                        })?)
                    }
                    _ => {}
                }
                continue;
            }
            if !saw_header {
                if line != REPORT_HEADER {
                    return Err(Error::parse_at_line(
                        lineno,
                        format!("expected header '{REPORT_HEADER}'"),
                    ));
                }
                saw_header = true;
                continue;
            }
            let cells: Vec<&str> = line.split(',').collect();
            let [attack, alpha, acc, n] = cells.as_slice() else {
                return Err(Error::parse_at_line(lineno, format!("expected 4 cells, got {}", cells.len())));
            };
            rep.rows.push(ReportRow {
                attack: attack.to_string(),
                alpha: float(alpha)?,
                robust_accuracy: float(acc)?,
                n: n
                    .trim()
                    .parse()
                    .map_err(|_| Error::parse_at_line(lineno, format!("invalid count '{n}'")))?,
            });
        }
        if !saw_header {
            return Err(Error::parse_at_line(text.lines().count().max(1), "missing header row"));
        }
        rep.validate()?;
        Ok(rep)
    }
}

pub fn write_report(report: &EvalReport, path: &Path) -> Result<()> {
    report.validate()?;
    std::fs::write(path, report.to_csv())?;
    Ok(())
}

pub fn read_report(path: &Path) -> Result<EvalReport> {
    EvalReport::parse_csv(&std::fs::read_to_string(path)?)
}

/// Report text without timestamp lines, for determinism comparisons.
pub fn report_body(text: &str) -> String {
    text.lines()
        .filter(|l| !l.starts_with("# timestamp="))
        .map(|l| format!("{l}\n"))
        .collect()
}
