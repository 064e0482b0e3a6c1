use std::fmt::Write as _;

use nalgebra::{DMatrix, SymmetricEigen};
use ndarray::{Array2, ArrayView2, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::dataset::StageLabel;
use crate::error::{Error, Result};
use crate::models::SleepStager;
use crate::nn::Scalar;
use crate::training::{compute_features, Domain, EpochSet};

/// Distillation-layer features with the stage label and domain of each row.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSet {
    pub features: Array2<f64>,
    pub labels: Vec<usize>,
    pub domains: Vec<Domain>,
}

impl FeatureSet {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn concat(parts: &[FeatureSet]) -> Result<FeatureSet> {
        let views: Vec<_> = parts.iter().map(|p| p.features.view()).collect();
        let features = ndarray::concatenate(Axis(0), &views)
            .map_err(|e| Error::ShapeError(e.to_string()))?;
        Ok(FeatureSet {
            features,
            labels: parts.iter().flat_map(|p| p.labels.iter().copied()).collect(),
            domains: parts.iter().flat_map(|p| p.domains.iter().copied()).collect(),
        })
    }
}

pub fn extract_features<F: Scalar>(
    model: &SleepStager<F>,
    epochs: &EpochSet<F>,
    domain: Domain,
) -> Result<FeatureSet> {
    let cfg = model.config();
    if !epochs.is_empty()
        && (epochs.epoch_samples() != cfg.epoch_samples || epochs.channels() != cfg.in_channels)
    {
        return Err(Error::ShapeError(format!(
            "model expects [{}, {}] epochs, got [{}, {}]",
            cfg.epoch_samples,
            cfg.in_channels,
            epochs.epoch_samples(),
            epochs.channels()
        )));
    }
    let features = compute_features(model, epochs, 64).mapv(|v| v.f64());
    Ok(FeatureSet {
        features,
        labels: epochs.labels().to_vec(),
        domains: vec![domain; epochs.len()],
    })
}

/// Mean over rows of the squared distance between paired feature rows.
pub fn mean_squared_distance(a: ArrayView2<'_, f64>, b: ArrayView2<'_, f64>) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(Error::ShapeError(format!("{:?} vs {:?}", a.dim(), b.dim())));
    }
    if a.nrows() == 0 {
        return Err(Error::EmptyDataset);
    }
    let total: f64 = a.iter().zip(b.iter()).map(|(x, y)| (x - y) * (x - y)).sum();
    Ok(total / a.nrows() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EmbedMethod {
    Pca,
    Sne,
}

impl std::str::FromStr for EmbedMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pca" => Ok(EmbedMethod::Pca),
            "sne" | "tsne" => Ok(EmbedMethod::Sne),
            other => Err(Error::InvalidConfig(format!("unknown embedding {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingExport {
    /// `[N, 2]`
    pub points: Array2<f64>,
    pub labels: Vec<usize>,
    pub domains: Vec<Domain>,
}

pub fn embed_2d(set: &FeatureSet, method: EmbedMethod, seed: u64) -> Result<EmbeddingExport> {
    Ok(EmbeddingExport {
        points: project_2d(set.features.view(), method, seed)?,
        labels: set.labels.clone(),
        domains: set.domains.clone(),
    })
}

/// Two-dimensional projection of the rows of `x`.
pub fn project_2d(x: ArrayView2<'_, f64>, method: EmbedMethod, seed: u64) -> Result<Array2<f64>> {
    if x.nrows() < 3 {
        return Err(Error::NotEnoughPoints(x.nrows()));
    }
    match method {
        EmbedMethod::Pca => Ok(pca_2d(x)),
        EmbedMethod::Sne => Ok(tsne_2d(x, TSNE_PERPLEXITY, TSNE_ITERATIONS, seed)),
    }
}

/// Top two principal components; each axis is signed so that its
/// largest-magnitude loading is positive.
pub fn pca_2d(x: ArrayView2<'_, f64>) -> Array2<f64> {
    let (n, d) = x.dim();
    let mean = x.mean_axis(Axis(0)).expect("rows");
    let centered = &x - &mean;
    let cov = centered.t().dot(&centered) / (n.max(2) - 1) as f64;
    let eig = SymmetricEigen::new(DMatrix::from_fn(d, d, |i, j| cov[[i, j]]));
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let mut basis = Array2::<f64>::zeros((d, 2));
    for (axis, &k) in order.iter().take(2).enumerate() {
        let v = eig.eigenvectors.column(k);
        let mut pivot = 0;
        for i in 0..d {
            if v[i].abs() > v[pivot].abs() {
                pivot = i;
            }
        }
        let sign = if v[pivot] < 0.0 { -1.0 } else { 1.0 };
        for i in 0..d {
            basis[[i, axis]] = sign * v[i];
        }
    }
    centered.dot(&basis)
}

pub const TSNE_PERPLEXITY: f64 = 30.0;
pub const TSNE_ITERATIONS: usize = 1000;

/// Exact t-SNE (O(N²) per iteration) with early exaggeration and adaptive gains.
pub fn tsne_2d(x: ArrayView2<'_, f64>, perplexity: f64, iterations: usize, seed: u64) -> Array2<f64> {
    let n = x.nrows();
    let perplexity = perplexity.min((n as f64 - 1.0) / 3.0).max(1.0);
    let mut d2 = vec![0.0; n * n];
    for i in 0..n {
        for j in i + 1..n {
            let v: f64 = x
                .row(i)
                .iter()
                .zip(x.row(j))
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            d2[i * n + j] = v;
            d2[j * n + i] = v;
        }
    }
    let cond = conditional_probabilities(&d2, n, perplexity);
    let mut p = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            p[i * n + j] = ((cond[i * n + j] + cond[j * n + i]) / (2.0 * n as f64)).max(1e-12);
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, 1e-2).expect("valid normal");
    let mut y: Vec<f64> = (0..2 * n).map(|_| normal.sample(&mut rng)).collect();
    let mut velocity = vec![0.0; 2 * n];
    let mut gains = vec![1.0f64; 2 * n];
    let mut num = vec![0.0; n * n];
    let mut grad = vec![0.0; 2 * n];
    let eta = 200.0;
    for it in 0..iterations {
        let exaggeration = if it < 250 { 12.0 } else { 1.0 };
        let momentum = if it < 250 { 0.5 } else { 0.8 };
        let mut z = 0.0;
        for i in 0..n {
            for j in i + 1..n {
                let dx = y[2 * i] - y[2 * j];
                let dy = y[2 * i + 1] - y[2 * j + 1];
                let q = 1.0 / (1.0 + dx * dx + dy * dy);
                num[i * n + j] = q;
                num[j * n + i] = q;
                z += 2.0 * q;
            }
        }
        grad.fill(0.0);
        for i in 0..n {
            for j in 0..n {
                if i == j {
                    continue;
                }
                let q = num[i * n + j];
                let m = (exaggeration * p[i * n + j] - q / z) * q;
                grad[2 * i] += 4.0 * m * (y[2 * i] - y[2 * j]);
                grad[2 * i + 1] += 4.0 * m * (y[2 * i + 1] - y[2 * j + 1]);
            }
        }
        for k in 0..2 * n {
            gains[k] = if (grad[k] > 0.0) != (velocity[k] > 0.0) {
                gains[k] + 0.2
            } else {
                (gains[k] * 0.8).max(0.01)
            };
            velocity[k] = momentum * velocity[k] - eta * gains[k] * grad[k];
            y[k] += velocity[k];
        }
        for c in 0..2 {
            let mean = (0..n).map(|i| y[2 * i + c]).sum::<f64>() / n as f64;
            for i in 0..n {
                y[2 * i + c] -= mean;
            }
        }
    }
    Array2::from_shape_vec((n, 2), y).expect("n x 2")
}

/// Row-conditional Gaussian affinities whose entropy matches `perplexity`,
/// found by bisection on the precision of each row.
fn conditional_probabilities(d2: &[f64], n: usize, perplexity: f64) -> Vec<f64> {
    let target = perplexity.ln();
    let mut p = vec![0.0; n * n];
    for i in 0..n {
        let row = &d2[i * n..(i + 1) * n];
        let (mut lo, mut hi, mut beta) = (0.0f64, f64::INFINITY, 1.0f64);
        let scale = row
            .iter()
            .enumerate()
            .filter(|&(j, _)| j != i)
            .map(|(_, &v)| v)
            .fold(f64::INFINITY, f64::min);
        for _ in 0..64 {
            let mut sum = 0.0;
            let mut weighted = 0.0;
            for (j, &d) in row.iter().enumerate() {
                if j == i {
                    continue;
                }
                let w = (-(d - scale) * beta).exp();
                sum += w;
                weighted += w * (d - scale);
            }
            let entropy = sum.ln() + beta * weighted / sum;
            if (entropy - target).abs() < 1e-5 {
                break;
            }
            if entropy > target {
                lo = beta;
                beta = if hi.is_finite() { (beta + hi) / 2.0 } else { beta * 2.0 };
            } else {
                hi = beta;
                beta = (beta + lo) / 2.0;
            }
        }
        let mut sum = 0.0;
        for j in 0..n {
            if j != i {
                let w = (-(row[j] - scale) * beta).exp();
                p[i * n + j] = w;
                sum += w;
            }
        }
        for j in 0..n {
            p[i * n + j] /= sum;
        }
    }
    p
}

impl EmbeddingExport {
    /// CSV with columns `x,y,stage,domain`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("x,y,stage,domain\n");
        for ((p, &l), d) in self.points.rows().into_iter().zip(&self.labels).zip(&self.domains) {
            let stage = StageLabel::from_code(l).map(|s| s.token()).unwrap_or("?");
            let _ = writeln!(out, "{},{},{stage},{d}", p[0], p[1]);
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut pts = Vec::new();
        let mut labels = Vec::new();
        let mut domains = Vec::new();
        for (i, line) in text.lines().enumerate().skip(1) {
            if line.trim().is_empty() {
                continue;
            }
            let f: Vec<&str> = line.split(',').collect();
            let bad = || Error::ShapeError(format!("embedding csv line {}: {line:?}", i + 1));
            if f.len() != 4 {
                return Err(bad());
            }
            pts.push(f[0].parse::<f64>().map_err(|_| bad())?);
            pts.push(f[1].parse::<f64>().map_err(|_| bad())?);
            labels.push(f[2].parse::<StageLabel>().map_err(|_| bad())?.code());
            domains.push(f[3].parse::<Domain>().map_err(|_| bad())?);
        }
        let n = labels.len();
        Ok(Self {
            points: Array2::from_shape_vec((n, 2), pts).expect("n x 2"),
            labels,
            domains,
        })
    }

    /// Scatter plot with one circle per point, coloured by domain.
    pub fn to_svg(&self, title: &str) -> String {
        let (w, h, m) = (640.0, 480.0, 40.0);
        let xs = self.points.column(0);
        let ys = self.points.column(1);
        let range = |v: ndarray::ArrayView1<'_, f64>| {
            let lo = v.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            if lo.is_finite() && hi > lo {
                (lo, hi)
            } else {
                (lo.min(0.0) - 1.0, lo.max(0.0) + 1.0)
            }
        };
        let (x0, x1) = range(xs);
        let (y0, y1) = range(ys);
        let mut out = String::new();
        let _ = writeln!(
            out,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#
        );
        let _ = writeln!(out, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
        let _ = writeln!(
            out,
            r#"<text x="{}" y="24" font-family="sans-serif" font-size="16" text-anchor="middle">{}</text>"#,
            w / 2.0,
            escape(title)
        );
        for ((x, y), d) in xs.iter().zip(ys).zip(&self.domains) {
            let px = m + (x - x0) / (x1 - x0) * (w - 2.0 * m);
            let py = h - m - (y - y0) / (y1 - y0) * (h - 2.0 * m);
            let color = match d {
                Domain::Scalp => "#1f77b4",
                Domain::Ear => "#ff7f0e",
            };
            let _ = writeln!(
                out,
                r#"<circle cx="{px:.2}" cy="{py:.2}" r="2.5" fill="{color}" fill-opacity="0.7"/>"#
            );
        }
        for (i, (name, color)) in [("scalp", "#1f77b4"), ("ear", "#ff7f0e")].iter().enumerate() {
            let y = 44.0 + 16.0 * i as f64;
            let _ = writeln!(
                out,
                r#"<rect x="{}" y="{}" width="10" height="10" fill="{color}"/><text x="{}" y="{}" font-family="sans-serif" font-size="12">{name}</text>"#,
                w - 90.0,
                y - 9.0,
                w - 74.0,
                y
            );
        }
        out.push_str("</svg>\n");
        out
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}
