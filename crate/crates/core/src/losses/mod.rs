//! Loss terms for the parsing-map generator (adversarial, feature matching,
//! perceptual) and for 3D reconstruction (landmark, pixel, regularization,
//! face-feature), plus their weighted totals.

mod toy;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{ColorImage, WeightRaster};
use crate::label_raster::{LabelMap, LandmarkSet};
use crate::morphable::CoefficientVector;
use crate::rasterizer::RenderBuffer;

pub use toy::{avg_pool, FeatureMap, ToyDiscriminator, ToyFeatureExtractor};

/// Produces per-layer feature maps from an RGB image. The last layer is the
/// embedding used by [`feature_cosine_loss`].
pub trait FeatureExtractor: Sync {
    fn layer_count(&self) -> usize;
    fn features(&self, image: &ColorImage) -> Vec<Vec<f64>>;

    fn embedding(&self, image: &ColorImage) -> Vec<f64> {
        self.features(image).pop().unwrap_or_default()
    }
}

/// A conditional discriminator over (image, label map) pairs.
pub trait Discriminator: Sync {
    fn layer_count(&self) -> usize;
    fn evaluate(&self, image: &ColorImage, labels: &LabelMap) -> Result<DiscriminatorOutput>;
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiscriminatorOutput {
    /// Probability that the pair is real, strictly inside `(0, 1)`.
    pub score: f64,
    pub features: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, Copy)]
pub struct ConditionalPair<'a> {
    pub image: &'a ColorImage,
    pub labels: &'a LabelMap,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LossWeights {
    pub lambda1: f64,
    pub lambda2: f64,
    pub lambda3: f64,
    pub lambda4: f64,
    pub lambda5: f64,
    pub lambda6: f64,
    pub omega_alpha: f64,
    pub omega_beta: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            lambda1: 10.0,
            lambda2: 10.0,
            lambda3: 1.6e-3,
            lambda4: 1.4,
            lambda5: 3.7e-4,
            lambda6: 0.2,
            omega_alpha: 1.0,
            omega_beta: 1.75e-3,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        let all = [
            ("lambda1", self.lambda1),
            ("lambda2", self.lambda2),
            ("lambda3", self.lambda3),
            ("lambda4", self.lambda4),
            ("lambda5", self.lambda5),
            ("lambda6", self.lambda6),
            ("omega_alpha", self.omega_alpha),
            ("omega_beta", self.omega_beta),
        ];
        match all.iter().find(|(_, v)| !(v.is_finite() && *v >= 0.0)) {
            Some((name, v)) => Err(Error::invalid(format!(
                "loss weight {name} must be finite and non-negative, got {v}"
            ))),
            None => Ok(()),
        }
    }
}

/// The four 3D reconstruction terms, unweighted.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Loss3dParts {
    pub landmark: f64,
    pub pixel: f64,
    pub reg: f64,
    pub feature: f64,
}

/// The three generator terms, unweighted.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct FisnParts {
    pub gan: f64,
    pub feature_matching: f64,
    pub perceptual: f64,
}

pub fn total_3d_loss(parts: &Loss3dParts, w: &LossWeights) -> f64 {
    w.lambda3 * parts.landmark + w.lambda4 * parts.pixel + w.lambda5 * parts.reg + w.lambda6 * parts.feature
}

pub fn fisn_total_loss(parts: &FisnParts, w: &LossWeights) -> f64 {
    parts.gan + w.lambda1 * parts.feature_matching + w.lambda2 * parts.perceptual
}

/// Mean squared distance between corresponding landmarks.
pub fn landmark_loss(pred: &LandmarkSet, gt: &LandmarkSet) -> f64 {
    let n = pred.points().len() as f64;
    pred.points()
        .iter()
        .zip(gt.points())
        .map(|(p, q)| (p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2))
        .sum::<f64>()
        / n
}

/// Pixel term value; `empty_mask` is set when no pixel was covered, in which
/// case `value` is 0.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PixelLoss {
    pub value: f64,
    pub empty_mask: bool,
}

/// Neumaier-compensated running sum.
#[derive(Debug, Clone, Copy, Default)]
struct Sum {
    s: f64,
    c: f64,
}

impl Sum {
    #[inline]
    fn add(&mut self, v: f64) {
        let t = self.s + v;
        if self.s.abs() >= v.abs() {
            self.c += (self.s - t) + v;
        } else {
            self.c += (v - t) + self.s;
        }
        self.s = t;
    }

    fn value(self) -> f64 {
        self.s + self.c
    }
}

/// Attention-weighted mean of the per-pixel RGB distance (not squared) over
/// the rendered face region.
pub fn pixel_loss(target: &ColorImage, rendered: &RenderBuffer, weights: &WeightRaster) -> Result<PixelLoss> {
    if !target.same_dims(&rendered.color) || !target.same_dims(weights) {
        return Err(Error::invalid(format!(
            "pixel loss inputs differ in size: target {}x{}, render {}x{}, weights {}x{}",
            target.width(),
            target.height(),
            rendered.width(),
            rendered.height(),
            weights.width(),
            weights.height()
        )));
    }
    let mut num = Sum::default();
    let mut den = Sum::default();
    for (((t, r), &w), &m) in target
        .as_slice()
        .iter()
        .zip(rendered.color.as_slice())
        .zip(weights.as_slice())
        .zip(rendered.coverage.as_slice())
    {
        if !m {
            continue;
        }
        let d = ((t[0] - r[0]).powi(2) + (t[1] - r[1]).powi(2) + (t[2] - r[2]).powi(2)).sqrt();
        num.add(w * d);
        den.add(w);
    }
    let den = den.value();
    if den <= 0.0 {
        log::warn!("pixel loss: empty face mask or zero weights; defined as 0");
        return Ok(PixelLoss {
            value: 0.0,
            empty_mask: true,
        });
    }
    Ok(PixelLoss {
        value: num.value() / den,
        empty_mask: false,
    })
}

pub fn reg_loss(coeffs: &CoefficientVector, w: &LossWeights) -> f64 {
    w.omega_alpha * coeffs.alpha_norm_sq() + w.omega_beta * coeffs.beta_norm_sq()
}

/// Cosine distance of two embeddings, in `[0, 2]`.
pub fn cosine_distance(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::invalid(format!(
            "embedding lengths differ: {} vs {}",
            a.len(),
            b.len()
        )));
    }
    let na = a.iter().map(|v| v * v).sum::<f64>().sqrt();
    let nb = b.iter().map(|v| v * v).sum::<f64>().sqrt();
    if !(na > 0.0) || !(nb > 0.0) {
        return Err(Error::DegenerateEmbedding);
    }
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    Ok((1.0 - dot / (na * nb)).clamp(0.0, 2.0))
}

pub fn feature_cosine_loss(a: &ColorImage, b: &ColorImage, g: &dyn FeatureExtractor) -> Result<f64> {
    cosine_distance(&g.embedding(a), &g.embedding(b))
}

fn l1(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::invalid(format!(
            "feature layers differ in size: {} vs {}",
            a.len(),
            b.len()
        )));
    }
    Ok(a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum())
}

/// `Σ_i ‖F_i(a) − F_i(b)‖₁ / M_i` with `M_i` the element count of layer `i`.
pub fn perceptual_loss(a: &ColorImage, b: &ColorImage, g: &dyn FeatureExtractor) -> Result<f64> {
    let fa = g.features(a);
    let fb = g.features(b);
    perceptual_from_features(&fa, &fb)
}

pub fn perceptual_from_features(fa: &[Vec<f64>], fb: &[Vec<f64>]) -> Result<f64> {
    if fa.len() != fb.len() {
        return Err(Error::invalid("feature stacks differ in depth"));
    }
    let mut total = 0.0;
    for (x, y) in fa.iter().zip(fb) {
        if x.is_empty() {
            continue;
        }
        total += l1(x, y)? / x.len() as f64;
    }
    Ok(total)
}

/// How the fake-sample term of the adversarial loss is written.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GanMode {
    /// `E[log D(real)] + E[log(1 − D(fake))]`
    #[default]
    Standard,
    /// `E[log D(real)] + E[1 − log D(fake)]`, taken literally.
    Literal,
}

/// Adversarial objective from raw scores, one discriminator.
pub fn gan_objective(real: &[f64], fake: &[f64], mode: GanMode) -> Result<f64> {
    if real.is_empty() || fake.is_empty() {
        return Err(Error::invalid("adversarial loss needs real and fake samples"));
    }
    if let Some(s) = real.iter().chain(fake).find(|s| !(**s > 0.0 && **s < 1.0)) {
        return Err(Error::invalid(format!("discriminator score {s} outside (0, 1)")));
    }
    let real_term = real.iter().map(|s| s.ln()).sum::<f64>() / real.len() as f64;
    let fake_term = fake
        .iter()
        .map(|s| match mode {
            GanMode::Standard => (1.0 - s).ln(),
            GanMode::Literal => 1.0 - s.ln(),
        })
        .sum::<f64>()
        / fake.len() as f64;
    Ok(real_term + fake_term)
}

/// Adversarial loss summed over discriminators (one per scale), expectations
/// taken as sample means.
pub fn gan_loss(
    discriminators: &[&dyn Discriminator],
    real: &[ConditionalPair],
    fake: &[ConditionalPair],
    mode: GanMode,
) -> Result<f64> {
    let mut total = 0.0;
    for d in discriminators {
        let rs = real
            .iter()
            .map(|p| d.evaluate(p.image, p.labels).map(|o| o.score))
            .collect::<Result<Vec<_>>>()?;
        let fs = fake
            .iter()
            .map(|p| d.evaluate(p.image, p.labels).map(|o| o.score))
            .collect::<Result<Vec<_>>>()?;
        total += gan_objective(&rs, &fs, mode)?;
    }
    Ok(total)
}

/// `Σ_scales Σ_layers ‖D_i(real) − D_i(fake)‖₁`, averaged over the paired
/// samples.
pub fn feature_matching_loss(
    discriminators: &[&dyn Discriminator],
    real: &[ConditionalPair],
    fake: &[ConditionalPair],
) -> Result<f64> {
    if real.len() != fake.len() || real.is_empty() {
        return Err(Error::invalid("feature matching needs equally many real and fake samples"));
    }
    let mut total = 0.0;
    for d in discriminators {
        for (r, f) in real.iter().zip(fake) {
            let fr = d.evaluate(r.image, r.labels)?.features;
            let ff = d.evaluate(f.image, f.labels)?.features;
            if fr.len() != ff.len() {
                return Err(Error::invalid("discriminator layer counts differ"));
            }
            for (a, b) in fr.iter().zip(&ff) {
                total += l1(a, b)?;
            }
        }
    }
    Ok(total / real.len() as f64)
}
