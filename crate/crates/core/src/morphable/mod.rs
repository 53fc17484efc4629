//! Linear morphable face model: mean shape and albedo plus orthonormal
//! bases, the coefficient vector, and JSON serialization.

mod synthetic;

use std::path::Path;

use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine as _;
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::label_raster::{class, LANDMARK_COUNT};
use crate::scene_model::{Pose, SH_COEFFS};

pub use synthetic::{make_synthetic_model, SyntheticModelSpec};

#[derive(Debug, Clone, PartialEq)]
pub struct MorphableModel {
    n_vertices: usize,
    mean_shape: DVector<f64>,
    shape_basis: DMatrix<f64>,
    mean_albedo: DVector<f64>,
    albedo_basis: DMatrix<f64>,
    triangles: Vec<[u32; 3]>,
    landmark_indices: Vec<u32>,
    region_tags: Vec<u8>,
}

impl MorphableModel {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        mean_shape: Vec<f64>,
        shape_basis: DMatrix<f64>,
        mean_albedo: Vec<f64>,
        albedo_basis: DMatrix<f64>,
        triangles: Vec<[u32; 3]>,
        landmark_indices: Vec<u32>,
        region_tags: Vec<u8>,
    ) -> Result<Self> {
        if mean_shape.len() % 3 != 0 || mean_shape.is_empty() {
            return Err(Error::invalid("mean shape length must be a positive multiple of 3"));
        }
        let n = mean_shape.len() / 3;
        if mean_albedo.len() != 3 * n {
            return Err(Error::invalid("mean albedo length differs from mean shape"));
        }
        if shape_basis.nrows() != 3 * n || albedo_basis.nrows() != 3 * n {
            return Err(Error::invalid("basis row count must be 3 × n_vertices"));
        }
        if shape_basis.ncols() == 0 || albedo_basis.ncols() == 0 {
            return Err(Error::invalid("bases need at least one column"));
        }
        if let Some(t) = triangles.iter().find(|t| t.iter().any(|&i| i as usize >= n)) {
            return Err(Error::invalid(format!("triangle {t:?} indexes past {n} vertices")));
        }
        if landmark_indices.len() != LANDMARK_COUNT {
            return Err(Error::invalid(format!(
                "need {LANDMARK_COUNT} landmark indices, got {}",
                landmark_indices.len()
            )));
        }
        let mut sorted = landmark_indices.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != LANDMARK_COUNT || sorted.iter().any(|&i| i as usize >= n) {
            return Err(Error::invalid("landmark indices must be distinct and in range"));
        }
        if region_tags.len() != n {
            return Err(Error::invalid("one region tag per vertex required"));
        }
        if let Some(t) = region_tags.iter().find(|&&t| t > class::LOWER_LIP) {
            return Err(Error::invalid(format!(
                "region tag {t} is not skin, a facial feature or background"
            )));
        }
        let finite = |s: &[f64]| s.iter().all(|v| v.is_finite());
        if !finite(&mean_shape)
            || !finite(&mean_albedo)
            || !finite(shape_basis.as_slice())
            || !finite(albedo_basis.as_slice())
        {
            return Err(Error::invalid("model arrays contain non-finite values"));
        }
        Ok(Self {
            n_vertices: n,
            mean_shape: DVector::from_vec(mean_shape),
            shape_basis,
            mean_albedo: DVector::from_vec(mean_albedo),
            albedo_basis,
            triangles,
            landmark_indices,
            region_tags,
        })
    }

    pub fn n_vertices(&self) -> usize {
        self.n_vertices
    }

    pub fn n_alpha(&self) -> usize {
        self.shape_basis.ncols()
    }

    pub fn n_beta(&self) -> usize {
        self.albedo_basis.ncols()
    }

    pub fn mean_shape(&self) -> &[f64] {
        self.mean_shape.as_slice()
    }

    pub fn mean_albedo(&self) -> &[f64] {
        self.mean_albedo.as_slice()
    }

    pub fn shape_basis(&self) -> &DMatrix<f64> {
        &self.shape_basis
    }

    pub fn albedo_basis(&self) -> &DMatrix<f64> {
        &self.albedo_basis
    }

    pub fn triangles(&self) -> &[[u32; 3]] {
        &self.triangles
    }

    pub fn landmark_indices(&self) -> &[u32] {
        &self.landmark_indices
    }

    pub fn region_tags(&self) -> &[u8] {
        &self.region_tags
    }

    pub fn layout(&self, gamma: GammaMode) -> CoefficientLayout {
        CoefficientLayout {
            n_alpha: self.n_alpha(),
            n_beta: self.n_beta(),
            gamma,
        }
    }

    /// `mean_shape + shape_basis · alpha`, flat `[x0, y0, z0, ...]`.
    pub fn assemble_shape(&self, alpha: &[f64]) -> Result<Vec<f64>> {
        if alpha.len() != self.n_alpha() {
            return Err(Error::invalid(format!(
                "expected {} shape coefficients, got {}",
                self.n_alpha(),
                alpha.len()
            )));
        }
        Ok(affine(&self.mean_shape, &self.shape_basis, alpha))
    }

    /// `mean_albedo + albedo_basis · beta`, clamped to `[0, 1]`.
    pub fn assemble_albedo(&self, beta: &[f64]) -> Result<AlbedoArray> {
        if beta.len() != self.n_beta() {
            return Err(Error::invalid(format!(
                "expected {} albedo coefficients, got {}",
                self.n_beta(),
                beta.len()
            )));
        }
        let unclamped = affine(&self.mean_albedo, &self.albedo_basis, beta);
        let clamped_mask = unclamped.iter().map(|v| !(0.0..=1.0).contains(v)).collect();
        let values = unclamped
            .chunks_exact(3)
            .map(|c| [c[0].clamp(0.0, 1.0), c[1].clamp(0.0, 1.0), c[2].clamp(0.0, 1.0)])
            .collect();
        Ok(AlbedoArray {
            values,
            unclamped,
            clamped: clamped_mask,
        })
    }

    pub fn to_json(&self) -> String {
        let file = ModelFile {
            format: MODEL_FORMAT.to_string(),
            n_vertices: self.n_vertices,
            n_alpha: self.n_alpha(),
            n_beta: self.n_beta(),
            mean_shape: encode_f64(self.mean_shape.as_slice()),
            shape_basis: encode_f64(self.shape_basis.as_slice()),
            mean_albedo: encode_f64(self.mean_albedo.as_slice()),
            albedo_basis: encode_f64(self.albedo_basis.as_slice()),
            triangles: encode_u32(self.triangles.iter().flatten().copied()),
            landmark_indices: self.landmark_indices.clone(),
            region_tags: B64.encode(&self.region_tags),
        };
        serde_json::to_string_pretty(&file).expect("model file serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let bad = |m: &str| Error::invalid(format!("model file: {m}"));
        let file: ModelFile = serde_json::from_str(text)
            .map_err(|e| Error::invalid(format!("model file: {e}")))?;
        if file.format != MODEL_FORMAT {
            return Err(bad(&format!("unsupported format {:?}", file.format)));
        }
        let n3 = file.n_vertices * 3;
        let mean_shape = decode_f64(&file.mean_shape, n3).ok_or_else(|| bad("mean_shape"))?;
        let shape = decode_f64(&file.shape_basis, n3 * file.n_alpha).ok_or_else(|| bad("shape_basis"))?;
        let mean_albedo = decode_f64(&file.mean_albedo, n3).ok_or_else(|| bad("mean_albedo"))?;
        let albedo = decode_f64(&file.albedo_basis, n3 * file.n_beta).ok_or_else(|| bad("albedo_basis"))?;
        let tri_flat = decode_u32(&file.triangles).ok_or_else(|| bad("triangles"))?;
        if tri_flat.len() % 3 != 0 {
            return Err(bad("triangle index count not a multiple of 3"));
        }
        let triangles = tri_flat.chunks_exact(3).map(|c| [c[0], c[1], c[2]]).collect();
        let region_tags = B64.decode(&file.region_tags).map_err(|_| bad("region_tags"))?;
        Self::new(
            mean_shape,
            DMatrix::from_vec(n3, file.n_alpha, shape),
            mean_albedo,
            DMatrix::from_vec(n3, file.n_beta, albedo),
            triangles,
            file.landmark_indices,
            region_tags,
        )
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text).map_err(|e| Error::invalid(format!("{}: {e}", path.display())))
    }
}

fn affine(mean: &DVector<f64>, basis: &DMatrix<f64>, coeffs: &[f64]) -> Vec<f64> {
    let mut out = mean.clone();
    out.gemv(1.0, basis, &DVector::from_column_slice(coeffs), 1.0);
    out.data.into()
}

const MODEL_FORMAT: &str = "occface-model-v1";

/// On-disk model: metadata plus base64 little-endian arrays. Bases are
/// stored column-major.
#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelFile {
    format: String,
    n_vertices: usize,
    n_alpha: usize,
    n_beta: usize,
    mean_shape: String,
    shape_basis: String,
    mean_albedo: String,
    albedo_basis: String,
    triangles: String,
    landmark_indices: Vec<u32>,
    region_tags: String,
}

pub fn encode_f64(values: &[f64]) -> String {
    let bytes: Vec<u8> = values.iter().flat_map(|v| v.to_le_bytes()).collect();
    B64.encode(bytes)
}

pub fn decode_f64(text: &str, expected: usize) -> Option<Vec<f64>> {
    let bytes = B64.decode(text).ok()?;
    if bytes.len() != expected * 8 {
        return None;
    }
    Some(
        bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect(),
    )
}

fn encode_u32(values: impl Iterator<Item = u32>) -> String {
    let bytes: Vec<u8> = values.flat_map(|v| v.to_le_bytes()).collect();
    B64.encode(bytes)
}

fn decode_u32(text: &str) -> Option<Vec<u32>> {
    let bytes = B64.decode(text).ok()?;
    if bytes.len() % 4 != 0 {
        return None;
    }
    Some(
        bytes
            .chunks_exact(4)
            .map(|c| u32::from_le_bytes(c.try_into().unwrap()))
            .collect(),
    )
}

/// Assembled albedo. `values` is clamped to `[0, 1]`; `unclamped` keeps the
/// raw linear combination and `clamped` flags each entry that was cut.
#[derive(Debug, Clone, PartialEq)]
pub struct AlbedoArray {
    pub values: Vec<[f64; 3]>,
    pub unclamped: Vec<f64>,
    pub clamped: Vec<bool>,
}

impl AlbedoArray {
    pub fn any_clamped(&self) -> bool {
        self.clamped.iter().any(|&c| c)
    }
}

/// Monochrome (9) or RGB (27) illumination coefficients.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GammaMode {
    Mono,
    #[default]
    Rgb,
}

impl GammaMode {
    pub fn channels(self) -> usize {
        match self {
            GammaMode::Mono => 1,
            GammaMode::Rgb => 3,
        }
    }

    pub fn len(self) -> usize {
        self.channels() * SH_COEFFS
    }
}

/// Index map of the flat fit vector `y = (alpha, beta, gamma, pose)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CoefficientLayout {
    pub n_alpha: usize,
    pub n_beta: usize,
    pub gamma: GammaMode,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Block {
    Alpha,
    Beta,
    Gamma,
    Angle,
    Scale,
    Translation,
}

impl CoefficientLayout {
    pub fn len(&self) -> usize {
        self.n_alpha + self.n_beta + self.gamma.len() + 6
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn beta_offset(&self) -> usize {
        self.n_alpha
    }

    pub fn gamma_offset(&self) -> usize {
        self.n_alpha + self.n_beta
    }

    pub fn pose_offset(&self) -> usize {
        self.gamma_offset() + self.gamma.len()
    }

    pub fn block(&self, index: usize) -> Block {
        if index < self.n_alpha {
            Block::Alpha
        } else if index < self.gamma_offset() {
            Block::Beta
        } else if index < self.pose_offset() {
            Block::Gamma
        } else {
            match index - self.pose_offset() {
                0..=2 => Block::Angle,
                3 => Block::Scale,
                _ => Block::Translation,
            }
        }
    }

    pub fn name(&self, index: usize) -> String {
        const POSE: [&str; 6] = ["pitch", "yaw", "roll", "f", "tx", "ty"];
        match self.block(index) {
            Block::Alpha => format!("alpha[{index}]"),
            Block::Beta => format!("beta[{}]", index - self.beta_offset()),
            Block::Gamma => format!("gamma[{}]", index - self.gamma_offset()),
            _ => POSE[index - self.pose_offset()].to_string(),
        }
    }
}

/// The fit state: shape, albedo, illumination and pose.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoefficientVector {
    pub alpha: Vec<f64>,
    pub beta: Vec<f64>,
    pub gamma: Vec<f64>,
    pub pose: Pose,
}

impl CoefficientVector {
    /// Zero shape and albedo, constant unit irradiance.
    pub fn neutral(layout: &CoefficientLayout, pose: Pose) -> Self {
        let mut gamma = vec![0.0; layout.gamma.len()];
        for c in 0..layout.gamma.channels() {
            gamma[c * SH_COEFFS] = 1.0 / crate::scene_model::SH_C0;
        }
        Self {
            alpha: vec![0.0; layout.n_alpha],
            beta: vec![0.0; layout.n_beta],
            gamma,
            pose,
        }
    }

    pub fn validate(&self, layout: &CoefficientLayout) -> Result<()> {
        if self.alpha.len() != layout.n_alpha
            || self.beta.len() != layout.n_beta
            || self.gamma.len() != layout.gamma.len()
        {
            return Err(Error::invalid(format!(
                "coefficient vector has blocks ({}, {}, {}), layout expects ({}, {}, {})",
                self.alpha.len(),
                self.beta.len(),
                self.gamma.len(),
                layout.n_alpha,
                layout.n_beta,
                layout.gamma.len()
            )));
        }
        if self.alpha.iter().chain(&self.beta).chain(&self.gamma).any(|v| !v.is_finite()) {
            return Err(Error::invalid("coefficient vector has non-finite entries"));
        }
        self.pose.validate()
    }

    pub fn gamma_mode(&self) -> Result<GammaMode> {
        match self.gamma.len() {
            9 => Ok(GammaMode::Mono),
            27 => Ok(GammaMode::Rgb),
            n => Err(Error::invalid(format!("gamma must have 9 or 27 entries, got {n}"))),
        }
    }

    pub fn layout(&self) -> Result<CoefficientLayout> {
        Ok(CoefficientLayout {
            n_alpha: self.alpha.len(),
            n_beta: self.beta.len(),
            gamma: self.gamma_mode()?,
        })
    }

    pub fn len(&self) -> usize {
        self.alpha.len() + self.beta.len() + self.gamma.len() + 6
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn to_flat(&self) -> Vec<f64> {
        let mut y = Vec::with_capacity(self.len());
        y.extend_from_slice(&self.alpha);
        y.extend_from_slice(&self.beta);
        y.extend_from_slice(&self.gamma);
        y.extend_from_slice(&self.pose.to_array());
        y
    }

    pub fn from_flat(layout: &CoefficientLayout, y: &[f64]) -> Result<Self> {
        if y.len() != layout.len() {
            return Err(Error::invalid(format!(
                "flat vector has {} entries, layout expects {}",
                y.len(),
                layout.len()
            )));
        }
        let (alpha, rest) = y.split_at(layout.n_alpha);
        let (beta, rest) = rest.split_at(layout.n_beta);
        let (gamma, pose) = rest.split_at(layout.gamma.len());
        Ok(Self {
            alpha: alpha.to_vec(),
            beta: beta.to_vec(),
            gamma: gamma.to_vec(),
            pose: Pose::from_array(pose.try_into().expect("six pose entries")),
        })
    }

    pub fn alpha_norm_sq(&self) -> f64 {
        self.alpha.iter().map(|a| a * a).sum()
    }

    pub fn beta_norm_sq(&self) -> f64 {
        self.beta.iter().map(|b| b * b).sum()
    }
}
