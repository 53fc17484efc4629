//! Analysis-by-synthesis fitting of the coefficient vector by momentum
//! descent on finite-difference gradients of the weighted 3D loss.

mod gradient;
mod metrics;
mod pose;

use std::path::Path;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{ColorImage, Grid, WeightRaster};
use crate::label_raster::{occlusion_attention, LabelClassSets, LabelMap, LandmarkSet};
use crate::losses::{
    cosine_distance, landmark_loss, reg_loss, total_3d_loss, FeatureMap, Loss3dParts, LossWeights,
    ToyFeatureExtractor,
};
use crate::morphable::{Block, CoefficientLayout, CoefficientVector, GammaMode, MorphableModel};
use crate::rasterizer::{interpolate, Geometry, RenderBuffer};

pub use gradient::{loss_gradient, FnObjective, Objective};
pub use metrics::{nearest_rank, vertex_error_stats, vertex_errors, ErrorStats};
pub use pose::init_pose_from_landmarks;

/// Per-pixel weights for the photometric term.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttentionMode {
    /// 1.0 on skin and facial features of the parsing map, 0.1 elsewhere.
    #[default]
    Occlusion,
    /// 1.0 everywhere.
    Uniform,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepSchedule {
    #[default]
    Cosine,
    Constant,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FitConfig {
    pub max_iters: usize,
    /// Initial step, in units of each coordinate's natural scale.
    pub step: f64,
    pub momentum: f64,
    pub schedule: StepSchedule,
    /// Base finite-difference step, in coefficient units.
    pub fd_step: f64,
    /// Stop when the best loss improved by less than this fraction over the
    /// last `patience` iterations.
    pub tolerance: f64,
    pub patience: usize,
    pub max_halvings: usize,
    /// Seeds the feature extractor.
    pub seed: u64,
    pub gamma_mode: GammaMode,
    pub attention: AttentionMode,
    pub weights: LossWeights,
    pub class_sets: LabelClassSets,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            max_iters: 200,
            step: 3e-2,
            momentum: 0.9,
            schedule: StepSchedule::Cosine,
            fd_step: 1e-3,
            tolerance: 1e-5,
            patience: 25,
            max_halvings: 20,
            seed: 0,
            gamma_mode: GammaMode::Rgb,
            attention: AttentionMode::Occlusion,
            weights: LossWeights::default(),
            class_sets: LabelClassSets::default(),
        }
    }
}

impl FitConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.fd_step > 0.0 && self.fd_step.is_finite()) {
            return Err(Error::invalid(format!("fd_step must be positive, got {}", self.fd_step)));
        }
        if !(self.step > 0.0 && self.step.is_finite()) {
            return Err(Error::invalid(format!("step must be positive, got {}", self.step)));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::invalid(format!("momentum must lie in [0, 1), got {}", self.momentum)));
        }
        if !(self.tolerance >= 0.0) {
            return Err(Error::invalid("tolerance must be non-negative"));
        }
        if self.patience == 0 {
            return Err(Error::invalid("patience must be at least 1"));
        }
        self.weights.validate()?;
        self.class_sets.clone().validated()?;
        Ok(())
    }

    fn lr(&self, iter: usize) -> f64 {
        match self.schedule {
            StepSchedule::Constant => self.step,
            StepSchedule::Cosine => {
                let t = iter as f64 / self.max_iters.max(1) as f64;
                self.step * 0.5 * (1.0 + (std::f64::consts::PI * t).cos())
            }
        }
    }
}

/// Loss parts and their weighted total at one point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossRecord {
    pub total: f64,
    pub parts: Loss3dParts,
}

impl LossRecord {
    fn new(parts: Loss3dParts, w: &LossWeights) -> Self {
        Self {
            total: total_3d_loss(&parts, w),
            parts,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub total: f64,
    pub parts: Loss3dParts,
    /// Step actually taken (0 when the line search gave up).
    pub step: f64,
    pub halvings: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    MaxIterations,
    Converged,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub initial_coefficients: CoefficientVector,
    pub initial: LossRecord,
    pub trace: Vec<IterationRecord>,
    pub coefficients: CoefficientVector,
    #[serde(rename = "final")]
    pub final_loss: LossRecord,
    pub termination: Termination,
    pub weights: LossWeights,
    /// Excluded from serialization so reports are reproducible byte for byte.
    #[serde(skip)]
    pub wall_time: Duration,
}

impl FitReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn save_json(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }

    /// One row per iteration, preceded by the initial point as iteration 0.
    pub fn save_trace_csv(&self, path: &Path) -> Result<()> {
        let csv_err = |source| Error::Csv {
            path: path.to_path_buf(),
            source,
        };
        let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
        w.write_record(["iteration", "total", "landmark", "pixel", "reg", "feature", "step", "halvings"])
            .map_err(csv_err)?;
        let initial = IterationRecord {
            iteration: 0,
            total: self.initial.total,
            parts: self.initial.parts,
            step: 0.0,
            halvings: 0,
        };
        for r in std::iter::once(&initial).chain(&self.trace) {
            w.write_record([
                r.iteration.to_string(),
                r.total.to_string(),
                r.parts.landmark.to_string(),
                r.parts.pixel.to_string(),
                r.parts.reg.to_string(),
                r.parts.feature.to_string(),
                r.step.to_string(),
                r.halvings.to_string(),
            ])
            .map_err(csv_err)?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}

/// Everything the loss needs about one input image.
pub struct FitProblem<'a> {
    model: &'a MorphableModel,
    layout: CoefficientLayout,
    target: &'a ColorImage,
    attention: WeightRaster,
    landmarks: &'a LandmarkSet,
    weights: LossWeights,
    extractor: ToyFeatureExtractor,
    target_embedding: Vec<f64>,
    /// Pooled, remapped target: the extractor's first input.
    target_pooled: FeatureMap,
    /// Pooling cell of every pixel and the pixel count of every cell.
    cell_of: Vec<u32>,
    cell_size: Vec<f64>,
    /// Natural scale of each coordinate; steps are taken in these units.
    scales: Vec<f64>,
}

impl<'a> FitProblem<'a> {
    /// `reference_scale` sets the natural units of the scale and translation
    /// coordinates (typically the initial `f`).
    pub fn new(
        model: &'a MorphableModel,
        target: &'a ColorImage,
        m_alpha: &LabelMap,
        landmarks: &'a LandmarkSet,
        cfg: &FitConfig,
        reference_scale: f64,
    ) -> Result<Self> {
        cfg.validate()?;
        if target.width() != m_alpha.width() || target.height() != m_alpha.height() {
            return Err(Error::invalid(format!(
                "target image is {}x{} but parsing map is {}x{}",
                target.width(),
                target.height(),
                m_alpha.width(),
                m_alpha.height()
            )));
        }
        if !(reference_scale > 0.0) {
            return Err(Error::invalid("reference scale must be positive"));
        }
        let attention = match cfg.attention {
            AttentionMode::Occlusion => occlusion_attention(m_alpha, &cfg.class_sets.clone().validated()?),
            AttentionMode::Uniform => Grid::filled(target.width(), target.height(), 1.0)?,
        };
        let layout = model.layout(cfg.gamma_mode);
        let extractor = ToyFeatureExtractor::new(cfg.seed);
        let target_pooled = FeatureMap::pooled_image(target, ToyFeatureExtractor::INPUT_POOL);
        let target_embedding = extractor.embedding_from_pooled(target_pooled.clone());

        // Same cell boundaries as the pooling itself.
        let (w, h) = (target.width(), target.height());
        let (ow, oh) = (target_pooled.width, target_pooled.height);
        let col: Vec<usize> = (0..w).map(|x| (0..ow).find(|&o| x < (o + 1) * w / ow).unwrap()).collect();
        let row: Vec<usize> = (0..h).map(|y| (0..oh).find(|&o| y < (o + 1) * h / oh).unwrap()).collect();
        let cell_of: Vec<u32> = (0..w * h).map(|i| (row[i / w] * ow + col[i % w]) as u32).collect();
        let mut cell_size = vec![0.0; ow * oh];
        for &c in &cell_of {
            cell_size[c as usize] += 1.0;
        }

        let scales = (0..layout.len())
            .map(|i| match layout.block(i) {
                Block::Alpha | Block::Beta | Block::Gamma | Block::Angle => 1.0,
                Block::Scale => reference_scale,
                Block::Translation => 0.1 * reference_scale,
            })
            .collect();
        Ok(Self {
            model,
            layout,
            target,
            attention,
            landmarks,
            weights: cfg.weights,
            extractor,
            target_embedding,
            target_pooled,
            cell_of,
            cell_size,
            scales,
        })
    }

    pub fn layout(&self) -> CoefficientLayout {
        self.layout
    }

    pub fn geometry(&self, y: &[f64]) -> Result<Geometry> {
        let c = CoefficientVector::from_flat(&self.layout, y)?;
        c.pose.validate()?;
        Geometry::build(self.model, &c.alpha, &c.pose, self.target.width(), self.target.height())
    }

    /// Loss parts at `y` given its geometry. Works on covered pixels only:
    /// the pixel term is the attention-weighted mean distance over the face
    /// mask, and the feature term embeds the render composited over the
    /// target (pooled incrementally from the covered pixels).
    pub fn record_with(&self, geo: &Geometry, y: &[f64]) -> Result<LossRecord> {
        let c = CoefficientVector::from_flat(&self.layout, y)?;
        c.validate(&self.layout)?;
        let colors = geo.vertex_colors(self.model, &c.beta, &c.gamma)?;
        let triangles = self.model.triangles();
        let target = self.target.as_slice();
        let attention = self.attention.as_slice();

        let mut pooled = self.target_pooled.clone();
        let (mut num, mut den) = (Sum::default(), Sum::default());
        for (p, f) in geo.covered() {
            let p = *p as usize;
            let r = interpolate(f, triangles, &colors);
            let t = target[p];
            let d = [r[0] - t[0], r[1] - t[1], r[2] - t[2]];
            let w = attention[p];
            num.add(w * (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt());
            den.add(w);
            let cell = self.cell_of[p] as usize;
            let k = 2.0 / self.cell_size[cell];
            for ch in 0..3 {
                pooled.data[cell * 3 + ch] += k * d[ch];
            }
        }
        let den = den.value();
        let pixel = if den > 0.0 { num.value() / den } else { 0.0 };
        let feature = if self.weights.lambda6 > 0.0 {
            cosine_distance(&self.extractor.embedding_from_pooled(pooled), &self.target_embedding)?
        } else {
            0.0
        };
        let parts = Loss3dParts {
            landmark: landmark_loss(&geo.landmarks(self.model)?, self.landmarks),
            pixel,
            reg: reg_loss(&c, &self.weights),
            feature,
        };
        Ok(LossRecord::new(parts, &self.weights))
    }

    pub fn evaluate(&self, y: &[f64]) -> Result<LossRecord> {
        self.record_with(&self.geometry(y)?, y)
    }

    pub fn render(&self, y: &[f64]) -> Result<RenderBuffer> {
        let c = CoefficientVector::from_flat(&self.layout, y)?;
        self.geometry(y)?.shade(self.model, &c.beta, &c.gamma)
    }
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

impl Objective for FitProblem<'_> {
    type Cache = Geometry;

    fn dim(&self) -> usize {
        self.layout.len()
    }

    fn coordinate_name(&self, index: usize) -> String {
        self.layout.name(index)
    }

    fn step_scale(&self, index: usize) -> f64 {
        let s = DIFF_SPAN * self.scales[index];
        match self.layout.block(index) {
            Block::Angle => 0.1 * s,
            _ => s,
        }
    }

    fn prepare(&self, y: &[f64]) -> Result<Geometry> {
        self.geometry(y)
    }

    fn value_with(&self, cache: &Geometry, y: &[f64], changed: Option<usize>) -> Result<f64> {
        let reuse = matches!(
            changed.map(|i| self.layout.block(i)),
            None | Some(Block::Beta) | Some(Block::Gamma)
        );
        let record = if reuse {
            self.record_with(cache, y)?
        } else {
            self.evaluate(y)?
        };
        Ok(record.total)
    }
}

/// Starting point: landmark-aligned pose, zero shape and albedo, neutral
/// lighting.
pub fn initial_coefficients(model: &MorphableModel, lmk: &LandmarkSet, cfg: &FitConfig) -> Result<CoefficientVector> {
    let pose = init_pose_from_landmarks(model, lmk)?;
    Ok(CoefficientVector::neutral(&model.layout(cfg.gamma_mode), pose))
}

/// Difference steps span this many `h` in natural units, so a step moves
/// silhouettes by a useful fraction of a pixel instead of sampling coverage
/// noise.
const DIFF_SPAN: f64 = 10.0;

/// Largest multiple of the configured difference step used after failures.
const MAX_WIDEN: f64 = 16.0;

pub fn fit(
    model: &MorphableModel,
    target: &ColorImage,
    m_alpha: &LabelMap,
    lmk: &LandmarkSet,
    cfg: &FitConfig,
) -> Result<FitReport> {
    let start = Instant::now();
    let init = initial_coefficients(model, lmk, cfg)?;
    let problem = FitProblem::new(model, target, m_alpha, lmk, cfg, init.pose.scale)?;
    let n = problem.dim();
    let scales = problem.scales.clone();

    let mut y = init.to_flat();
    let mut current = problem.evaluate(&y)?;
    let initial = current;
    let mut m = vec![0.0; n];
    let mut v = vec![0.0; n];
    let (b1, b2) = (cfg.momentum, 0.999);
    let mut best_history = vec![current.total];
    let mut trace = Vec::with_capacity(cfg.max_iters);
    let mut termination = Termination::MaxIterations;

    // Widened after a failed line search: silhouette jumps can make the
    // small-step difference point uphill. Reset once a step is accepted.
    let mut widen = 1.0;
    for iter in 0..cfg.max_iters {
        let g = loss_gradient(&problem, &y, cfg.fd_step * widen)?;
        let t = (iter + 1) as i32;
        let mut dir = vec![0.0; n];
        for i in 0..n {
            // Work in natural units: gradient and step both scale by s_i.
            let gs = g[i] * scales[i];
            m[i] = b1 * m[i] + (1.0 - b1) * gs;
            v[i] = b2 * v[i] + (1.0 - b2) * gs * gs;
            let m_hat = m[i] / (1.0 - b1.powi(t));
            let v_hat = v[i] / (1.0 - b2.powi(t));
            dir[i] = scales[i] * m_hat / (v_hat.sqrt() + 1e-12);
        }

        let mut lr = cfg.lr(iter);
        let mut halvings = 0;
        let mut accepted = None;
        loop {
            let candidate: Vec<f64> = y.iter().zip(&dir).map(|(yi, d)| yi - lr * d).collect();
            if let Ok(record) = problem.evaluate(&candidate) {
                if record.total < current.total {
                    accepted = Some((candidate, record));
                    break;
                }
            }
            if halvings == cfg.max_halvings {
                break;
            }
            lr *= 0.5;
            halvings += 1;
        }
        let step = match accepted {
            Some((candidate, record)) => {
                y = candidate;
                current = record;
                widen = 1.0;
                lr
            }
            None => {
                m.iter_mut().for_each(|x| *x = 0.0);
                widen = (widen * 4.0).min(MAX_WIDEN);
                0.0
            }
        };
        trace.push(IterationRecord {
            iteration: iter + 1,
            total: current.total,
            parts: current.parts,
            step,
            halvings,
        });
        log::debug!("iter {:>4}  loss {:.6e}  step {:.3e}", iter + 1, current.total, step);

        best_history.push(current.total);
        if best_history.len() > cfg.patience {
            let old = best_history[best_history.len() - 1 - cfg.patience];
            if old - current.total <= cfg.tolerance * old.abs() {
                termination = Termination::Converged;
                break;
            }
        }
    }

    Ok(FitReport {
        initial_coefficients: init,
        initial,
        trace,
        coefficients: CoefficientVector::from_flat(&problem.layout, &y)?,
        final_loss: current,
        termination,
        weights: cfg.weights,
        wall_time: start.elapsed(),
    })
}
