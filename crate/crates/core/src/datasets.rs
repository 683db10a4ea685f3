//! Seeded synthetic 2-D classification sets living in the unit box, and
//! their CSV form.
//!
//! Generators draw from a ChaCha8 stream seeded with the caller's seed. Raw
//! geometry (moons, rings) is mapped into `[0,1]²` by one isotropic affine
//! map fitted to the generated points, so distances keep their aspect and
//! an ℓ∞ radius means the same thing along both axes.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::model::fmt_f64;
use crate::tensor::Tensor;

/// Axis-aligned box of valid inputs.
#[derive(Debug, Clone, PartialEq)]
pub struct DomainBox {
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl DomainBox {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.len() != upper.len() || lower.is_empty() {
            return Err(Error::dim(&[lower.len()], &[upper.len()]));
        }
        for (i, (l, u)) in lower.iter().zip(&upper).enumerate() {
            if !(l.is_finite() && u.is_finite() && l < u) {
                return Err(Error::Parameter(format!(
                    "domain bounds must be finite with lower < upper, dimension {i}: [{l}, {u}]"
                )));
            }
        }
        Ok(Self { lower, upper })
    }

    pub fn unit(dim: usize) -> Self {
        Self {
            lower: vec![0.0; dim],
            upper: vec![1.0; dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn contains(&self, p: &[f64]) -> bool {
        p.len() == self.dim()
            && p
                .iter()
                .zip(self.lower.iter().zip(&self.upper))
                .all(|(v, (l, u))| *l <= *v && *v <= *u)
    }

    pub fn clamp(&self, p: &mut [f64]) {
        for (v, (l, u)) in p.iter_mut().zip(self.lower.iter().zip(&self.upper)) {
            *v = v.clamp(*l, *u);
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub points: Tensor,
    pub labels: Vec<usize>,
    pub domain: DomainBox,
    pub num_classes: usize,
    pub seed: u64,
    pub generator: String,
}

impl Dataset {
    /// Checks points against the domain and labels against `num_classes`.
    pub fn new(
        points: Tensor,
        labels: Vec<usize>,
        domain: DomainBox,
        num_classes: usize,
        seed: u64,
        generator: impl Into<String>,
    ) -> Result<Self> {
        if points.shape().len() != 2 || points.cols() != domain.dim() {
            return Err(Error::dim(points.shape(), &[domain.dim()]));
        }
        if labels.len() != points.rows() {
            return Err(Error::dim(&[points.rows()], &[labels.len()]));
        }
        if num_classes < 2 {
            return Err(Error::Parameter(format!("need at least 2 classes, got {num_classes}")));
        }
        if let Some((i, y)) = labels.iter().enumerate().find(|(_, &y)| y >= num_classes) {
            return Err(Error::Schema(format!(
                "label {y} of example {i} outside [0, {num_classes})"
            )));
        }
        if let Some(i) = (0..points.rows()).find(|&i| !domain.contains(points.row(i))) {
            return Err(Error::Schema(format!(
                "point {i} {:?} outside the domain box",
                points.row(i)
            )));
        }
        Ok(Self {
            points,
            labels,
            domain,
            num_classes,
            seed,
            generator: generator.into(),
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.domain.dim()
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut c = vec![0; self.num_classes];
        for &y in &self.labels {
            c[y] += 1;
        }
        c
    }

    pub fn subset(&self, idx: &[usize]) -> Dataset {
        Dataset {
            points: self.points.select_rows(idx),
            labels: idx.iter().map(|&i| self.labels[i]).collect(),
            domain: self.domain.clone(),
            num_classes: self.num_classes,
            seed: self.seed,
            generator: self.generator.clone(),
        }
    }

    /// Identifier used in reports: `<generator>-n<N>-s<seed>`.
    pub fn id(&self) -> String {
        format!("{}-n{}-s{}", self.generator, self.len(), self.seed)
    }

    /// SHA-256 of the canonical CSV body, hex.
    pub fn content_hash(&self) -> String {
        use sha2::{Digest, Sha256};
        crate::model::hex(&Sha256::digest(to_csv_string(self).as_bytes()))
    }
}

fn check_noise(sigma: f64) -> Result<()> {
    if sigma >= 0.0 && sigma.is_finite() {
        Ok(())
    } else {
        Err(Error::Parameter(format!("noise sigma must be finite and ≥ 0, got {sigma}")))
    }
}

fn check_even(n: usize) -> Result<()> {
    if n == 0 || n % 2 != 0 {
        Err(Error::Parameter(format!("n must be even and positive, got {n}")))
    } else {
        Ok(())
    }
}

fn gaussian(sigma: f64) -> Normal<f64> {
    Normal::new(0.0, sigma).expect("sigma validated")
}

/// Two interleaving half circles before rescaling: class 0 on the upper unit
/// arc around the origin, class 1 on the lower unit arc around (1, 0.5),
/// i.e. the mirrored arc shifted by (1, −0.5).
pub(crate) fn two_moons_raw(n: usize, noise_sigma: f64, seed: u64) -> (Vec<[f64; 2]>, Vec<usize>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let half = n / 2;
    let noise = gaussian(noise_sigma);
    let mut pts = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let class = usize::from(i >= half);
        let t = rng.random_range(0.0..=std::f64::consts::PI);
        let (mut x, mut y) = if class == 0 {
            (t.cos(), t.sin())
        } else {
            (1.0 - t.cos(), 0.5 - t.sin())
        };
        if noise_sigma > 0.0 {
            x += noise.sample(&mut rng);
            y += noise.sample(&mut rng);
        }
        pts.push([x, y]);
        labels.push(class);
    }
    (pts, labels)
}

/// Concentric circles before rescaling.
pub(crate) fn rings_raw(
    n: usize,
    r_inner: f64,
    r_outer: f64,
    noise_sigma: f64,
    seed: u64,
) -> (Vec<[f64; 2]>, Vec<usize>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let half = n / 2;
    let noise = gaussian(noise_sigma);
    let mut pts = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let class = usize::from(i >= half);
        let r = if class == 0 { r_inner } else { r_outer };
        let t = rng.random_range(0.0..std::f64::consts::TAU);
        let (mut x, mut y) = (r * t.cos(), r * t.sin());
        if noise_sigma > 0.0 {
            x += noise.sample(&mut rng);
            y += noise.sample(&mut rng);
        }
        pts.push([x, y]);
        labels.push(class);
    }
    (pts, labels)
}

/// Isotropic affine map taking the bounding box of `pts` into `[0,1]²`:
/// the longer side spans `[0,1]`, the shorter one is centered.
pub(crate) fn fit_unit_map(pts: &[[f64; 2]]) -> ([f64; 2], f64, [f64; 2]) {
    let mut lo = [f64::INFINITY; 2];
    let mut hi = [f64::NEG_INFINITY; 2];
    for p in pts {
        for k in 0..2 {
            lo[k] = lo[k].min(p[k]);
            hi[k] = hi[k].max(p[k]);
        }
    }
    let span = (hi[0] - lo[0]).max(hi[1] - lo[1]).max(f64::MIN_POSITIVE);
    let scale = 1.0 / span;
    let pad = [
        (1.0 - (hi[0] - lo[0]) * scale) / 2.0,
        (1.0 - (hi[1] - lo[1]) * scale) / 2.0,
    ];
    (lo, scale, pad)
}

fn rescale_to_unit(pts: &[[f64; 2]]) -> Vec<f64> {
    let (lo, scale, pad) = fit_unit_map(pts);
    let mut out = Vec::with_capacity(pts.len() * 2);
    for p in pts {
        for k in 0..2 {
            // clamp absorbs the last-ulp rounding of the affine map
            out.push(((p[k] - lo[k]) * scale + pad[k]).clamp(0.0, 1.0));
        }
    }
    out
}

pub fn gen_two_moons(n: usize, noise_sigma: f64, seed: u64) -> Result<Dataset> {
    check_even(n)?;
    check_noise(noise_sigma)?;
    let (pts, labels) = two_moons_raw(n, noise_sigma, seed);
    let points = Tensor::new(vec![n, 2], rescale_to_unit(&pts))?;
    Dataset::new(points, labels, DomainBox::unit(2), 2, seed, "two-moons")
}

pub fn gen_rings(n: usize, radii: (f64, f64), noise_sigma: f64, seed: u64) -> Result<Dataset> {
    check_even(n)?;
    check_noise(noise_sigma)?;
    let (r_inner, r_outer) = radii;
    if !(0.0 < r_inner && r_inner < r_outer && r_outer.is_finite()) {
        return Err(Error::Parameter(format!(
            "radii must satisfy 0 < inner < outer, got ({r_inner}, {r_outer})"
        )));
    }
    let (pts, labels) = rings_raw(n, r_inner, r_outer, noise_sigma, seed);
    let points = Tensor::new(vec![n, 2], rescale_to_unit(&pts))?;
    Dataset::new(points, labels, DomainBox::unit(2), 2, seed, "rings")
}

/// One class per center, isotropic Gaussian around it, clipped to the unit
/// box of the centers' dimension. `n` must split evenly across centers.
pub fn gen_gaussian_blobs(n: usize, centers: &[Vec<f64>], sigma: f64, seed: u64) -> Result<Dataset> {
    check_noise(sigma)?;
    if centers.len() < 2 {
        return Err(Error::Parameter(format!("need at least 2 centers, got {}", centers.len())));
    }
    let d = centers[0].len();
    let domain = DomainBox::unit(d.max(1));
    for (k, c) in centers.iter().enumerate() {
        if c.len() != d || d == 0 {
            return Err(Error::dim(&[d], &[c.len()]));
        }
        if !domain.contains(c) {
            return Err(Error::Parameter(format!("center {k} {c:?} lies outside the unit box")));
        }
    }
    let k = centers.len();
    if n == 0 || n % k != 0 {
        return Err(Error::Parameter(format!(
            "n={n} does not split evenly into {k} classes"
        )));
    }
    let per = n / k;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = gaussian(sigma);
    let mut data = Vec::with_capacity(n * d);
    let mut labels = Vec::with_capacity(n);
    for (class, c) in centers.iter().enumerate() {
        for _ in 0..per {
            let mut p: Vec<f64> = c
                .iter()
                .map(|&v| if sigma > 0.0 { v + noise.sample(&mut rng) } else { v })
                .collect();
            domain.clamp(&mut p);
            data.extend(p);
            labels.push(class);
        }
    }
    let points = Tensor::new(vec![n, d], data)?;
    Dataset::new(points, labels, domain, k, seed, "blobs")
}

fn join_f64(v: &[f64]) -> String {
    v.iter().map(|&x| fmt_f64(x)).collect::<Vec<_>>().join(",")
}

pub fn to_csv_string(ds: &Dataset) -> String {
    let d = ds.dim();
    let mut s = String::new();
    s.push_str(&format!("# generator={}\n", ds.generator));
    s.push_str(&format!("# seed={}\n", ds.seed));
    s.push_str(&format!("# num_classes={}\n", ds.num_classes));
    s.push_str(&format!("# domain_lower={}\n", join_f64(ds.domain.lower())));
    s.push_str(&format!("# domain_upper={}\n", join_f64(ds.domain.upper())));
    let header: Vec<String> = (0..d).map(|k| format!("x{k}")).chain(["label".into()]).collect();
    s.push_str(&header.join(","));
    s.push('\n');
    for (i, &y) in ds.labels.iter().enumerate() {
        s.push_str(&join_f64(ds.points.row(i)));
        s.push_str(&format!(",{y}\n"));
    }
    s
}

pub fn save_csv(ds: &Dataset, path: &Path) -> Result<()> {
    std::fs::write(path, to_csv_string(ds))?;
    Ok(())
}

pub fn load_csv(path: &Path) -> Result<Dataset> {
    parse_csv(&std::fs::read_to_string(path)?)
}

fn parse_f64_list(s: &str, line: usize) -> Result<Vec<f64>> {
    s.split(',')
        .map(|v| {
            v.trim()
                .parse::<f64>()
                .map_err(|_| Error::parse_at_line(line, format!("invalid number '{v}'")))
        })
        .collect()
}

pub fn parse_csv(text: &str) -> Result<Dataset> {
    let mut generator = String::from("csv");
    let mut seed = 0u64;
    let mut num_classes: Option<usize> = None;
    let mut lower: Option<Vec<f64>> = None;
    let mut upper: Option<Vec<f64>> = None;
    let mut dim: Option<usize> = None;
    let mut data = Vec::new();
    let mut labels = Vec::new();

    for (idx, raw) in text.lines().enumerate() {
        let lineno = idx + 1;
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(comment) = line.strip_prefix('#') {
            if let Some((k, v)) = comment.trim().split_once('=') {
                let v = v.trim();
                match k.trim() {
                    "generator" => generator = v.to_string(),
                    "seed" => {
                        seed = v
                            .parse()
                            .map_err(|_| Error::parse_at_line(lineno, format!("invalid seed '{v}'")))?
                    }
                    "num_classes" => {
                        num_classes = Some(v.parse().map_err(|_| {
                            Error::parse_at_line(lineno, format!("invalid num_classes '{v}'"))
                        })?)
                    }
                    "domain_lower" => lower = Some(parse_f64_list(v, lineno)?),
                    "domain_upper" => upper = Some(parse_f64_list(v, lineno)?),
                    _ => {}
                }
            }
            continue;
        }
        let Some(d) = dim else {
            let cols: Vec<&str> = line.split(',').map(str::trim).collect();
            let d = cols.len().saturating_sub(1);
            let expected: Vec<String> =
                (0..d).map(|k| format!("x{k}")).chain(["label".into()]).collect();
            if d == 0 || cols != expected {
                return Err(Error::parse_at_line(
                    lineno,
                    format!("expected header '{}'", expected.join(",")),
                ));
            }
            dim = Some(d);
            continue;
        };
        let cells: Vec<&str> = line.split(',').map(str::trim).collect();
        if cells.len() != d + 1 {
            return Err(Error::parse_at_line(
                lineno,
                format!("expected {} cells, got {}", d + 1, cells.len()),
            ));
        }
        for c in &cells[..d] {
            let v: f64 = c
                .parse()
                .map_err(|_| Error::parse_at_line(lineno, format!("non-numeric cell '{c}'")))?;
            if !v.is_finite() {
                return Err(Error::parse_at_line(lineno, format!("non-finite cell '{c}'")));
            }
            data.push(v);
        }
        let y: usize = cells[d]
            .parse()
            .map_err(|_| Error::parse_at_line(lineno, format!("invalid label '{}'", cells[d])))?;
        if let Some(c) = num_classes {
            if y >= c {
                return Err(Error::Schema(format!(
                    "line {lineno}: label {y} outside declared [0, {c})"
                )));
            }
        }
        labels.push(y);
    }

    let d = dim.ok_or_else(|| Error::parse_at_line(text.lines().count().max(1), "missing header row"))?;
    if labels.is_empty() {
        return Err(Error::Schema("dataset has no rows".into()));
    }
    let domain = match (lower, upper) {
        (Some(l), Some(u)) => DomainBox::new(l, u)
            .map_err(|e| Error::Schema(format!("invalid declared domain: {e}")))?,
        _ => DomainBox::unit(d),
    };
    let num_classes = num_classes.unwrap_or_else(|| labels.iter().max().map_or(2, |m| (m + 1).max(2)));
    let points = Tensor::new(vec![labels.len(), d], data)?;
    Dataset::new(points, labels, domain, num_classes, seed, generator)
}
