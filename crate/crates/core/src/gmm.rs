//! Weighted Gaussian mixtures over RGB color.
//!
//! Fitting is k-means++ seeding followed by weighted EM. Covariances are
//! full 3x3 with every eigenvalue clamped to at least [`VARIANCE_FLOOR`];
//! clamping the eigenvalues of the weighted scatter is the exact constrained
//! maximizer of the M-step, so the weighted NLL still never increases.

use nalgebra::{Matrix3, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::model::{Color, MotionMask, RgbImage};

pub const DEFAULT_COMPONENTS: usize = 5;
pub const VARIANCE_FLOOR: f64 = 1e-6;
pub const MAX_EM_ITERATIONS: usize = 100;
pub const EM_RELATIVE_TOLERANCE: f64 = 1e-6;

const LN_2PI: f64 = 1.837_877_066_409_345_3;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeightedPixelSample {
    pub color: Color,
    pub weight: f64,
}

impl WeightedPixelSample {
    pub fn new(color: Color, weight: f64) -> Self {
        Self { color, weight }
    }
}

/// One Gaussian with its cached inverse covariance and log-determinant.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianComponent {
    weight: f64,
    mean: Color,
    covariance: [[f64; 3]; 3],
    inverse: [[f64; 3]; 3],
    log_det: f64,
}

impl GaussianComponent {
    /// Builds a component, flooring the covariance eigenvalues.
    pub fn new(weight: f64, mean: Color, covariance: [[f64; 3]; 3]) -> Self {
        let m = Matrix3::from_fn(|r, c| 0.5 * (covariance[r][c] + covariance[c][r]));
        let eig = SymmetricEigen::new(m);
        let values = eig.eigenvalues.map(|v| if v.is_finite() { v.max(VARIANCE_FLOOR) } else { VARIANCE_FLOOR });
        let v = eig.eigenvectors;
        let cov = v * Matrix3::from_diagonal(&values) * v.transpose();
        let inv = v * Matrix3::from_diagonal(&values.map(f64::recip)) * v.transpose();
        let to_array = |m: Matrix3<f64>| {
            let mut out = [[0.0; 3]; 3];
            for r in 0..3 {
                for c in 0..3 {
                    out[r][c] = 0.5 * (m[(r, c)] + m[(c, r)]);
                }
            }
            out
        };
        Self {
            weight,
            mean,
            covariance: to_array(cov),
            inverse: to_array(inv),
            log_det: values.iter().map(|v| v.ln()).sum(),
        }
    }

    pub fn weight(&self) -> f64 {
        self.weight
    }

    pub fn mean(&self) -> Color {
        self.mean
    }

    pub fn covariance(&self) -> [[f64; 3]; 3] {
        self.covariance
    }

    /// Log density of the (unweighted) Gaussian at `color`.
    pub fn log_density(&self, color: &Color) -> f64 {
        let d = [color[0] - self.mean[0], color[1] - self.mean[1], color[2] - self.mean[2]];
        let mut mahal = 0.0;
        for r in 0..3 {
            for c in 0..3 {
                mahal += d[r] * self.inverse[r][c] * d[c];
            }
        }
        -0.5 * (3.0 * LN_2PI + self.log_det + mahal)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Gmm {
    components: Vec<GaussianComponent>,
}

impl Gmm {
    pub fn new(components: Vec<GaussianComponent>) -> Result<Self> {
        if components.is_empty() {
            return Err(Error::InvalidValue("mixture needs at least one component".into()));
        }
        if components.iter().any(|c| !(c.weight >= 0.0)) {
            return Err(Error::InvalidValue("negative mixture weight".into()));
        }
        let total: f64 = components.iter().map(|c| c.weight).sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidValue(format!("mixture weights sum to {total}")));
        }
        Ok(Self { components })
    }

    pub fn components(&self) -> &[GaussianComponent] {
        &self.components
    }

    pub fn len(&self) -> usize {
        self.components.len()
    }

    pub fn is_empty(&self) -> bool {
        self.components.is_empty()
    }

    /// `-ln Σ_k w_k N(color; μ_k, Σ_k)`.
    pub fn nll(&self, color: &Color) -> f64 {
        let logs = self
            .components
            .iter()
            .filter(|c| c.weight > 0.0)
            .map(|c| c.weight.ln() + c.log_density(color));
        -log_sum_exp(logs)
    }
}

fn log_sum_exp(values: impl Iterator<Item = f64> + Clone) -> f64 {
    let max = values.clone().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + values.map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// Foreground and background color models.
#[derive(Debug, Clone, PartialEq)]
pub struct FgBgGmm {
    pub foreground: Gmm,
    pub background: Gmm,
}

/// A fitted mixture together with the weighted mean NLL after
/// initialization (entry 0) and after each EM iteration.
#[derive(Debug, Clone)]
pub struct GmmFit {
    pub gmm: Gmm,
    pub nll_history: Vec<f64>,
}

pub fn fit_gmm(samples: &[WeightedPixelSample], components: usize, seed: u64) -> Result<Gmm> {
    fit_gmm_traced(samples, components, seed).map(|f| f.gmm)
}

fn cmp_color(a: &Color, b: &Color) -> std::cmp::Ordering {
    a[0].total_cmp(&b[0]).then(a[1].total_cmp(&b[1])).then(a[2].total_cmp(&b[2]))
}

/// Sorts by color and merges identical colors by summing their weights.
/// The weighted likelihood is unchanged and the result is independent of
/// the input order.
fn canonicalize(samples: &[WeightedPixelSample]) -> Vec<WeightedPixelSample> {
    let mut sorted: Vec<WeightedPixelSample> = samples.to_vec();
    sorted.sort_by(|a, b| cmp_color(&a.color, &b.color).then(a.weight.total_cmp(&b.weight)));
    let mut out: Vec<WeightedPixelSample> = Vec::with_capacity(sorted.len());
    for s in sorted {
        match out.last_mut() {
            Some(last) if last.color == s.color => last.weight += s.weight,
            _ => out.push(s),
        }
    }
    out
}

fn sq_dist(a: &Color, b: &Color) -> f64 {
    (a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)
}

/// Weighted k-means++ seeding on canonicalized samples.
fn kmeans_pp(samples: &[WeightedPixelSample], k: usize, rng: &mut ChaCha8Rng) -> Vec<Color> {
    let total: f64 = samples.iter().map(|s| s.weight).sum();
    let pick = |rng: &mut ChaCha8Rng, scores: &mut dyn Iterator<Item = f64>, sum: f64| -> usize {
        let target = rng.random::<f64>() * sum;
        let mut acc = 0.0;
        let mut last = 0;
        for (i, s) in scores.enumerate() {
            if s > 0.0 {
                last = i;
                acc += s;
                if acc > target {
                    return i;
                }
            }
        }
        last
    };
    let first = pick(rng, &mut samples.iter().map(|s| s.weight), total);
    let mut centers = vec![samples[first].color];
    let mut d2: Vec<f64> = samples.iter().map(|s| sq_dist(&s.color, &centers[0])).collect();
    while centers.len() < k {
        let sum: f64 = samples.iter().zip(&d2).map(|(s, d)| s.weight * d).sum();
        let next = if sum > 0.0 {
            pick(rng, &mut samples.iter().zip(&d2).map(|(s, d)| s.weight * d), sum)
        } else {
            0
        };
        let c = samples[next].color;
        for (d, s) in d2.iter_mut().zip(samples) {
            *d = d.min(sq_dist(&s.color, &c));
        }
        centers.push(c);
    }
    centers
}

/// Weighted M-step from responsibilities (`resp[i * k + j]`).
fn m_step(samples: &[WeightedPixelSample], resp: &[f64], previous: &[GaussianComponent]) -> Vec<GaussianComponent> {
    let k = previous.len();
    let mut mass = vec![0.0; k];
    let mut sums = vec![[0.0; 3]; k];
    for (i, s) in samples.iter().enumerate() {
        for j in 0..k {
            let r = resp[i * k + j] * s.weight;
            mass[j] += r;
            for c in 0..3 {
                sums[j][c] += r * s.color[c];
            }
        }
    }
    let total: f64 = mass.iter().sum();
    let means: Vec<Color> = (0..k)
        .map(|j| if mass[j] > 0.0 { sums[j].map(|v| v / mass[j]) } else { previous[j].mean })
        .collect();
    let mut scatter = vec![[[0.0; 3]; 3]; k];
    for (i, s) in samples.iter().enumerate() {
        for j in 0..k {
            let r = resp[i * k + j] * s.weight;
            if r == 0.0 {
                continue;
            }
            let d = [s.color[0] - means[j][0], s.color[1] - means[j][1], s.color[2] - means[j][2]];
            for a in 0..3 {
                for b in a..3 {
                    scatter[j][a][b] += r * d[a] * d[b];
                }
            }
        }
    }
    (0..k)
        .map(|j| {
            if mass[j] > 0.0 {
                let mut cov = [[0.0; 3]; 3];
                for a in 0..3 {
                    for b in a..3 {
                        cov[a][b] = scatter[j][a][b] / mass[j];
                        cov[b][a] = cov[a][b];
                    }
                }
                GaussianComponent::new(mass[j] / total, means[j], cov)
            } else {
                GaussianComponent { weight: 0.0, ..previous[j].clone() }
            }
        })
        .collect()
}

/// Normalizes mixture weights to sum to exactly 1 (up to rounding).
fn renormalize(mut components: Vec<GaussianComponent>) -> Vec<GaussianComponent> {
    let total: f64 = components.iter().map(|c| c.weight).sum();
    for c in &mut components {
        c.weight /= total;
    }
    components
}

/// E-step: fills responsibilities, returns the weighted mean NLL.
fn e_step(samples: &[WeightedPixelSample], components: &[GaussianComponent], resp: &mut [f64], total_weight: f64) -> f64 {
    let k = components.len();
    let log_w: Vec<f64> = components.iter().map(|c| c.weight.ln()).collect();
    let mut nll = 0.0;
    let mut logs = vec![0.0; k];
    for (i, s) in samples.iter().enumerate() {
        for j in 0..k {
            logs[j] = if components[j].weight > 0.0 {
                log_w[j] + components[j].log_density(&s.color)
            } else {
                f64::NEG_INFINITY
            };
        }
        let lse = log_sum_exp(logs.iter().copied());
        for j in 0..k {
            resp[i * k + j] = (logs[j] - lse).exp();
        }
        nll -= s.weight * lse;
    }
    nll / total_weight
}

/// Weighted EM to convergence, recording the NLL trajectory.
pub fn fit_gmm_traced(samples: &[WeightedPixelSample], components: usize, seed: u64) -> Result<GmmFit> {
    if components == 0 {
        return Err(Error::InvalidValue("component count must be positive".into()));
    }
    if samples.len() < components {
        return Err(Error::TooFewSamples { needed: components, got: samples.len() });
    }
    if let Some(s) = samples.iter().find(|s| !(s.weight > 0.0) || !s.weight.is_finite()) {
        return Err(Error::InvalidValue(format!("sample weight {} is not positive", s.weight)));
    }
    let samples = canonicalize(samples);
    let total_weight: f64 = samples.iter().map(|s| s.weight).sum();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let centers = kmeans_pp(&samples, components, &mut rng);

    // hard assignment to the nearest center gives the starting parameters
    let k = components;
    let mut resp = vec![0.0; samples.len() * k];
    for (i, s) in samples.iter().enumerate() {
        let mut best = 0;
        for j in 1..k {
            if sq_dist(&s.color, &centers[j]) < sq_dist(&s.color, &centers[best]) {
                best = j;
            }
        }
        resp[i * k + best] = 1.0;
    }
    let seeds: Vec<GaussianComponent> = centers
        .iter()
        .map(|c| GaussianComponent::new(0.0, *c, [[0.0; 3]; 3]))
        .collect();
    let mut current = renormalize(m_step(&samples, &resp, &seeds));

    let mut history = vec![e_step(&samples, &current, &mut resp, total_weight)];
    for _ in 0..MAX_EM_ITERATIONS {
        let next = renormalize(m_step(&samples, &resp, &current));
        let nll = e_step(&samples, &next, &mut resp, total_weight);
        let prev = *history.last().expect("history starts nonempty");
        current = next;
        history.push(nll);
        if (prev - nll).abs() < EM_RELATIVE_TOLERANCE * prev.abs().max(1e-12) {
            break;
        }
    }
    Ok(GmmFit { gmm: Gmm { components: current }, nll_history: history })
}

/// Weight of a sample from frame `other` when fitting for frame `target`.
pub fn frame_distance_weight(target: usize, other: usize) -> f64 {
    1.0 / (1.0 + target.abs_diff(other) as f64)
}

/// Distance-weighted foreground and background samples of a batch, as seen
/// from frame `target`.
pub fn motion_samples(
    frames: &[(&RgbImage, &MotionMask)],
    target: usize,
) -> Result<(Vec<WeightedPixelSample>, Vec<WeightedPixelSample>)> {
    if target >= frames.len() {
        return Err(Error::InvalidValue(format!("target frame {target} outside batch of {}", frames.len())));
    }
    let mut fg = Vec::new();
    let mut bg = Vec::new();
    for (t, (img, mask)) in frames.iter().enumerate() {
        if img.width() != mask.width() || img.height() != mask.height() {
            return Err(Error::DimensionMismatch(format!("frame {t}: image and mask sizes differ")));
        }
        let w = frame_distance_weight(target, t);
        for (i, color) in img.pixels().iter().enumerate() {
            let s = WeightedPixelSample::new(*color, w);
            if mask.is_foreground(i) {
                fg.push(s);
            } else {
                bg.push(s);
            }
        }
    }
    Ok((fg, bg))
}

/// Fits a mixture pair, clamping the component count to the sample count.
pub fn fit_pair(
    fg: &[WeightedPixelSample],
    bg: &[WeightedPixelSample],
    components: usize,
    seed: u64,
) -> Result<FgBgGmm> {
    if fg.is_empty() {
        return Err(Error::EmptyForeground);
    }
    if bg.is_empty() {
        return Err(Error::EmptyBackground);
    }
    Ok(FgBgGmm {
        foreground: fit_gmm(fg, components.min(fg.len()), seed)?,
        background: fit_gmm(bg, components.min(bg.len()), seed.wrapping_add(1))?,
    })
}

/// Fits foreground/background models for frame `target` from the motion
/// masks of the whole batch.
pub fn fit_fgbg_from_motion(
    frames: &[(&RgbImage, &MotionMask)],
    target: usize,
    components: usize,
    seed: u64,
) -> Result<FgBgGmm> {
    let (fg, bg) = motion_samples(frames, target)?;
    fit_pair(&fg, &bg, components, seed)
}

#[cfg(test)]
mod tests {
    use super::*;

    // Box-Muller
    fn normal(rng: &mut impl Rng, mean: f64, sd: f64) -> f64 {
        let u1: f64 = rng.random::<f64>().max(1e-300);
        let u2: f64 = rng.random();
        mean + sd * (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    }

    fn identity_component(mean: Color) -> GaussianComponent {
        GaussianComponent::new(1.0, mean, [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]])
    }

    #[test]
    fn nll_at_mean_of_unit_gaussian() {
        let g = Gmm::new(vec![identity_component([0.2, 0.3, 0.4])]).unwrap();
        assert!((g.nll(&[0.2, 0.3, 0.4]) - 2.756_815_599_614_018).abs() < 1e-12);
        // distance d = 0.5
        let nll = g.nll(&[0.7, 0.3, 0.4]);
        assert!((nll - (2.756_815_599_614_018 + 0.125)).abs() < 1e-12);
    }

    #[test]
    fn mixture_likelihood_dominates_each_weighted_component() {
        let a = GaussianComponent::new(0.3, [0.1, 0.1, 0.1], [[0.01, 0.0, 0.0], [0.0, 0.02, 0.0], [0.0, 0.0, 0.03]]);
        let b = GaussianComponent::new(0.7, [0.8, 0.5, 0.2], [[0.05, 0.01, 0.0], [0.01, 0.05, 0.0], [0.0, 0.0, 0.05]]);
        let g = Gmm::new(vec![a.clone(), b.clone()]).unwrap();
        for color in [[0.0, 0.0, 0.0], [0.5, 0.5, 0.5], [0.8, 0.5, 0.2], [1.0, 1.0, 1.0]] {
            let mix = -g.nll(&color);
            for c in [&a, &b] {
                assert!(mix >= c.weight().ln() + c.log_density(&color) - 1e-12);
            }
        }
    }

    #[test]
    fn identical_samples_floor_covariance() {
        let c = [0.25, 0.5, 0.75];
        let samples = vec![WeightedPixelSample::new(c, 1.0); 10];
        let g = fit_gmm(&samples, 1, 7).unwrap();
        let comp = &g.components()[0];
        assert_eq!(comp.mean(), c);
        for r in 0..3 {
            for col in 0..3 {
                let expected = if r == col { VARIANCE_FLOOR } else { 0.0 };
                assert!((comp.covariance()[r][col] - expected).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn two_blobs_recovered() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let centers = [[0.2, 0.3, 0.7], [0.8, 0.6, 0.1]];
        let mut samples = Vec::new();
        let mut sums = [[0.0; 3]; 2];
        for (b, c) in centers.iter().enumerate() {
            for _ in 0..300 {
                let color = c.map(|m| normal(&mut rng, m, 0.005));
                for ch in 0..3 {
                    sums[b][ch] += color[ch] / 300.0;
                }
                samples.push(WeightedPixelSample::new(color, 1.0));
            }
        }
        let g = fit_gmm(&samples, 2, 11).unwrap();
        for centroid in sums {
            let best = g
                .components()
                .iter()
                .map(|c| sq_dist(&c.mean(), &centroid).sqrt())
                .fold(f64::INFINITY, f64::min);
            assert!(best < 0.01, "closest mean {best} away from {centroid:?}");
        }
    }

    #[test]
    fn too_few_samples() {
        let samples = vec![WeightedPixelSample::new([0.0; 3], 1.0); 2];
        assert!(matches!(fit_gmm(&samples, 3, 0), Err(Error::TooFewSamples { needed: 3, got: 2 })));
    }

    #[test]
    fn frame_weights() {
        assert_eq!(frame_distance_weight(0, 0), 1.0);
        assert_eq!(frame_distance_weight(0, 1), 0.5);
        assert_eq!(frame_distance_weight(0, 2), 1.0 / 3.0);
        assert_eq!(frame_distance_weight(4, 2), 1.0 / 3.0);
    }

    #[test]
    fn motion_samples_weighted_by_distance() {
        let img = RgbImage::filled(2, 1, [0.5; 3]).unwrap();
        let mask = MotionMask::new(2, 1, vec![1, 0]).unwrap();
        let frames = [(&img, &mask), (&img, &mask), (&img, &mask)];
        let (fg, bg) = motion_samples(&frames, 0).unwrap();
        let w: Vec<f64> = fg.iter().map(|s| s.weight).collect();
        assert_eq!(w, vec![1.0, 0.5, 1.0 / 3.0]);
        assert_eq!(bg.len(), 3);
    }

    #[test]
    fn foreground_only_in_target_frame() {
        let img = RgbImage::new(2, 1, vec![[0.9, 0.1, 0.1], [0.1, 0.1, 0.9]]).unwrap();
        let fg_mask = MotionMask::new(2, 1, vec![1, 0]).unwrap();
        let empty = MotionMask::new(2, 1, vec![0, 0]).unwrap();
        let frames = [(&img, &empty), (&img, &fg_mask), (&img, &empty)];
        let (fg, _) = motion_samples(&frames, 1).unwrap();
        assert_eq!(fg, vec![WeightedPixelSample::new([0.9, 0.1, 0.1], 1.0)]);
        let pair = fit_fgbg_from_motion(&frames, 1, 5, 0).unwrap();
        assert_eq!(pair.foreground.components()[0].mean(), [0.9, 0.1, 0.1]);
    }

    #[test]
    fn single_frame_batch_matches_plain_fit() {
        let img = RgbImage::new(4, 1, vec![[0.9, 0.1, 0.1], [0.8, 0.2, 0.1], [0.1, 0.1, 0.9], [0.2, 0.1, 0.8]]).unwrap();
        let mask = MotionMask::new(4, 1, vec![1, 1, 0, 0]).unwrap();
        let pair = fit_fgbg_from_motion(&[(&img, &mask)], 0, 2, 5).unwrap();
        let fg: Vec<_> = img.pixels()[..2].iter().map(|&c| WeightedPixelSample::new(c, 1.0)).collect();
        assert_eq!(pair.foreground, fit_gmm(&fg, 2, 5).unwrap());
    }

    #[test]
    fn empty_sides_error() {
        let img = RgbImage::filled(2, 1, [0.5; 3]).unwrap();
        let zeros = MotionMask::new(2, 1, vec![0, 0]).unwrap();
        let ones = MotionMask::new(2, 1, vec![1, 1]).unwrap();
        assert!(matches!(fit_fgbg_from_motion(&[(&img, &zeros)], 0, 5, 0), Err(Error::EmptyForeground)));
        assert!(matches!(fit_fgbg_from_motion(&[(&img, &ones)], 0, 5, 0), Err(Error::EmptyBackground)));
    }

    #[test]
    fn weights_sum_to_one_and_floor_holds() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let samples: Vec<_> = (0..200)
            .map(|_| WeightedPixelSample::new([rng.random(), rng.random(), rng.random()], rng.random_range(0.1..2.0)))
            .collect();
        let g = fit_gmm(&samples, 5, 1).unwrap();
        let total: f64 = g.components().iter().map(|c| c.weight()).sum();
        assert!((total - 1.0).abs() < 1e-9);
        for c in g.components() {
            let m = Matrix3::from_fn(|r, col| c.covariance()[r][col]);
            let eig = SymmetricEigen::new(m);
            assert!(eig.eigenvalues.iter().all(|&v| v >= VARIANCE_FLOOR * (1.0 - 1e-9)));
        }
    }

    #[test]
    fn permutation_invariant_fit() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let samples: Vec<_> = (0..150)
            .map(|_| WeightedPixelSample::new([rng.random(), rng.random(), rng.random()], 1.0))
            .collect();
        let mut reversed = samples.clone();
        reversed.reverse();
        let a = fit_gmm_traced(&samples, 4, 2).unwrap();
        let b = fit_gmm_traced(&reversed, 4, 2).unwrap();
        assert!((a.nll_history.last().unwrap() - b.nll_history.last().unwrap()).abs() < 1e-6);
    }
}
