//! Camera and illumination model.
//!
//! Conventions (see `CONVENTIONS.md`):
//! - model space is right-handed, y up, +z toward the viewer;
//! - `R = Rz(roll) · Ry(yaw) · Rx(pitch)`;
//! - weak perspective: `p = f · Pr · R · v + t2d` with `Pr` keeping x and y,
//!   followed by a y flip so image rows grow downward;
//! - real spherical harmonics, bands 0–2, no Condon–Shortley phase, ordered
//!   `[Y00, Y1-1, Y10, Y11, Y2-2, Y2-1, Y20, Y21, Y22]`.

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Number of SH coefficients per color channel (three bands).
pub const SH_COEFFS: usize = 9;

/// `1 / (2√π)`
pub const SH_C0: f64 = 0.282_094_791_773_878_14;
/// `√(3 / 4π)`
pub const SH_C1: f64 = 0.488_602_511_902_919_9;
/// `½ √(15 / π)`
pub const SH_C2: f64 = 1.092_548_430_592_079_2;
/// `¼ √(5 / π)`
pub const SH_C2_0: f64 = 0.315_391_565_252_520_05;
/// `¼ √(15 / π)`
pub const SH_C2_2: f64 = 0.546_274_215_296_039_6;

const UNIT_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pose {
    pub pitch: f64,
    pub yaw: f64,
    pub roll: f64,
    /// Scale factor `f`, pixels per model unit.
    pub scale: f64,
    pub tx: f64,
    pub ty: f64,
}

impl Pose {
    pub fn new(pitch: f64, yaw: f64, roll: f64, scale: f64, tx: f64, ty: f64) -> Result<Self> {
        let pose = Self {
            pitch,
            yaw,
            roll,
            scale,
            tx,
            ty,
        };
        pose.validate()?;
        Ok(pose)
    }

    pub fn validate(&self) -> Result<()> {
        let all = self.to_array();
        if all.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("pose has non-finite entries"));
        }
        if self.scale <= 0.0 {
            return Err(Error::invalid(format!(
                "pose scale must be positive, got {}",
                self.scale
            )));
        }
        Ok(())
    }

    /// `[pitch, yaw, roll, f, tx, ty]`
    pub fn to_array(&self) -> [f64; 6] {
        [self.pitch, self.yaw, self.roll, self.scale, self.tx, self.ty]
    }

    pub fn from_array(a: [f64; 6]) -> Self {
        Self {
            pitch: a[0],
            yaw: a[1],
            roll: a[2],
            scale: a[3],
            tx: a[4],
            ty: a[5],
        }
    }
}

pub fn rotation_matrix(pose: &Pose) -> Matrix3<f64> {
    let (sp, cp) = pose.pitch.sin_cos();
    let (sy, cy) = pose.yaw.sin_cos();
    let (sr, cr) = pose.roll.sin_cos();
    let rx = Matrix3::new(1.0, 0.0, 0.0, 0.0, cp, -sp, 0.0, sp, cp);
    let ry = Matrix3::new(cy, 0.0, sy, 0.0, 1.0, 0.0, -sy, 0.0, cy);
    let rz = Matrix3::new(cr, -sr, 0.0, sr, cr, 0.0, 0.0, 0.0, 1.0);
    rz * ry * rx
}

/// Projects a flat `[x0, y0, z0, x1, ...]` vertex array to image points.
pub fn project_points(vertices: &[f64], pose: &Pose) -> Result<Vec<[f64; 2]>> {
    if vertices.len() % 3 != 0 {
        return Err(Error::invalid(format!(
            "vertex array length {} is not a multiple of 3",
            vertices.len()
        )));
    }
    let r = rotation_matrix(pose);
    Ok(vertices
        .chunks_exact(3)
        .map(|v| project_one(&r, pose, [v[0], v[1], v[2]]))
        .collect())
}

#[inline]
pub(crate) fn project_one(r: &Matrix3<f64>, pose: &Pose, v: [f64; 3]) -> [f64; 2] {
    let x = r[(0, 0)] * v[0] + r[(0, 1)] * v[1] + r[(0, 2)] * v[2];
    let y = r[(1, 0)] * v[0] + r[(1, 1)] * v[1] + r[(1, 2)] * v[2];
    [pose.scale * x + pose.tx, -pose.scale * y + pose.ty]
}

/// Real SH basis, bands 0–2, at a unit normal.
pub fn sh_basis(normal: [f64; 3]) -> Result<[f64; SH_COEFFS]> {
    let norm = (normal[0] * normal[0] + normal[1] * normal[1] + normal[2] * normal[2]).sqrt();
    if !norm.is_finite() || (norm - 1.0).abs() > UNIT_TOLERANCE {
        return Err(Error::invalid(format!(
            "SH basis needs a unit normal, got norm {norm}"
        )));
    }
    Ok(sh_basis_unchecked(normal))
}

#[inline]
pub(crate) fn sh_basis_unchecked(n: [f64; 3]) -> [f64; SH_COEFFS] {
    let [x, y, z] = n;
    [
        SH_C0,
        SH_C1 * y,
        SH_C1 * z,
        SH_C1 * x,
        SH_C2 * x * y,
        SH_C2 * y * z,
        SH_C2_0 * (3.0 * z * z - 1.0),
        SH_C2 * x * z,
        SH_C2_2 * (x * x - y * y),
    ]
}

/// SH lighting coefficients, one row of nine per channel (1 or 3 channels).
#[derive(Debug, Clone, PartialEq)]
pub struct Illumination {
    rows: Vec<[f64; SH_COEFFS]>,
}

impl Illumination {
    pub fn from_flat(gamma: &[f64]) -> Result<Self> {
        if gamma.len() != SH_COEFFS && gamma.len() != 3 * SH_COEFFS {
            return Err(Error::invalid(format!(
                "illumination needs 9 or 27 coefficients, got {}",
                gamma.len()
            )));
        }
        if gamma.iter().any(|g| !g.is_finite()) {
            return Err(Error::invalid("illumination has non-finite coefficients"));
        }
        let rows = gamma
            .chunks_exact(SH_COEFFS)
            .map(|c| c.try_into().expect("chunk of nine"))
            .collect();
        Ok(Self { rows })
    }

    /// Constant unit irradiance: only band 0 set, to `1 / SH_C0`.
    pub fn neutral(channels: usize) -> Result<Self> {
        let mut flat = vec![0.0; channels * SH_COEFFS];
        for c in 0..channels {
            flat[c * SH_COEFFS] = 1.0 / SH_C0;
        }
        Self::from_flat(&flat)
    }

    pub fn channels(&self) -> usize {
        self.rows.len()
    }

    pub fn row(&self, channel: usize) -> &[f64; SH_COEFFS] {
        if self.rows.len() == 1 {
            &self.rows[0]
        } else {
            &self.rows[channel]
        }
    }

    /// Irradiance per output channel for a unit normal.
    #[inline]
    pub fn irradiance(&self, normal: [f64; 3]) -> [f64; 3] {
        let basis = sh_basis_unchecked(normal);
        let dot = |row: &[f64; SH_COEFFS]| row.iter().zip(&basis).map(|(g, b)| g * b).sum::<f64>();
        match self.rows.as_slice() {
            [mono] => {
                let e = dot(mono);
                [e, e, e]
            }
            rows => [dot(&rows[0]), dot(&rows[1]), dot(&rows[2])],
        }
    }
}

/// Lambertian SH shading: `albedo ⊙ Σ_b γ_b Φ_b(n)` per vertex. Not clamped.
pub fn shade(
    albedo: &[[f64; 3]],
    normals: &[[f64; 3]],
    illum: &Illumination,
) -> Result<Vec<[f64; 3]>> {
    if albedo.len() != normals.len() {
        return Err(Error::invalid(format!(
            "{} albedo entries vs {} normals",
            albedo.len(),
            normals.len()
        )));
    }
    albedo
        .iter()
        .zip(normals)
        .map(|(a, &n)| {
            sh_basis(n)?;
            let e = illum.irradiance(n);
            Ok([a[0] * e[0], a[1] * e[1], a[2] * e[2]])
        })
        .collect()
}

/// Area-weighted vertex normals; vertices without incident area get `+z`.
pub fn vertex_normals(vertices: &[f64], triangles: &[[u32; 3]]) -> Vec<[f64; 3]> {
    let n = vertices.len() / 3;
    let pos = |i: u32| {
        let i = i as usize * 3;
        Vector3::new(vertices[i], vertices[i + 1], vertices[i + 2])
    };
    let mut acc = vec![Vector3::<f64>::zeros(); n];
    for t in triangles {
        let (a, b, c) = (pos(t[0]), pos(t[1]), pos(t[2]));
        // Cross product length is twice the area: area weighting for free.
        let face = (b - a).cross(&(c - a));
        for &i in t {
            acc[i as usize] += face;
        }
    }
    acc.into_iter()
        .map(|v| {
            let len = v.norm();
            if len > 0.0 && len.is_finite() {
                let u = v / len;
                [u.x, u.y, u.z]
            } else {
                [0.0, 0.0, 1.0]
            }
        })
        .collect()
}
