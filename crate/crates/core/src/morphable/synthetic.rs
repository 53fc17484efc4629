//! Seeded stand-in for a scanned face model: an ellipsoid head with a nose
//! bump, region tags painted from the frontal landmark template, and smooth
//! random orthonormal bases.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::MorphableModel;
use crate::error::{Error, Result};
use crate::label_raster::{class, frontal_template, polygon, region_polygons, LandmarkSet, LANDMARK_COUNT};

/// Head semi-axes in model units (x, y, z).
pub(crate) const HEAD_AXES: [f64; 3] = [0.78, 1.0, 0.8];
/// Maps the unit landmark template onto the frontal head surface.
pub(crate) const TEMPLATE_SCALE: [f64; 2] = [0.78, 0.9];

const NOSE_HEIGHT: f64 = 0.2;
const FOURIER_TERMS: usize = 6;
const FOURIER_FREQ: f64 = 1.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticModelSpec {
    pub seed: u64,
    pub n_vertices: usize,
    pub n_alpha: usize,
    pub n_beta: usize,
}

impl Default for SyntheticModelSpec {
    fn default() -> Self {
        Self {
            seed: 0,
            n_vertices: 2000,
            n_alpha: 16,
            n_beta: 16,
        }
    }
}

pub fn make_synthetic_model(spec: &SyntheticModelSpec) -> Result<MorphableModel> {
    if spec.n_vertices < LANDMARK_COUNT {
        return Err(Error::invalid(format!(
            "synthetic model needs at least {LANDMARK_COUNT} vertices, got {}",
            spec.n_vertices
        )));
    }
    if spec.n_alpha == 0 || spec.n_beta == 0 {
        return Err(Error::invalid("basis dimensions must be at least 1"));
    }
    if spec.n_alpha > 3 * spec.n_vertices || spec.n_beta > 3 * spec.n_vertices {
        return Err(Error::invalid("more basis columns than coordinates"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);

    let (dirs, triangles) = ring_sphere(spec.n_vertices);
    let positions: Vec<[f64; 3]> = dirs.iter().map(|&d| head_surface(d)).collect();
    let landmark_indices = pick_landmarks(&positions);
    let region_tags = tag_regions(&positions);

    let mean_shape: Vec<f64> = positions.iter().flatten().copied().collect();
    let mean_albedo: Vec<f64> = region_tags.iter().flat_map(|&t| region_albedo(t)).collect();
    let shape_basis = smooth_orthonormal_basis(&dirs, spec.n_alpha, &mut rng)?;
    let albedo_basis = smooth_orthonormal_basis(&dirs, spec.n_beta, &mut rng)?;

    MorphableModel::new(
        mean_shape,
        shape_basis,
        mean_albedo,
        albedo_basis,
        triangles,
        landmark_indices,
        region_tags,
    )
}

/// Unit-sphere vertices on latitude rings around the y axis, poles at ±y,
/// with exactly `n` vertices. Triangles wind counter-clockwise seen from
/// outside.
fn ring_sphere(n: usize) -> (Vec<[f64; 3]>, Vec<[u32; 3]>) {
    use std::f64::consts::PI;
    let ring_total = n - 2;
    let rings = (((PI * ring_total as f64) / 4.0).sqrt().round() as usize - 1)
        .clamp(1, ring_total / 3);
    let thetas: Vec<f64> = (1..=rings).map(|k| PI * k as f64 / (rings + 1) as f64).collect();

    // Vertex counts proportional to ring circumference, at least 3 each,
    // summing to exactly `ring_total` (largest remainder).
    let weights: Vec<f64> = thetas.iter().map(|t| t.sin()).collect();
    let spare = (ring_total - 3 * rings) as f64;
    let wsum: f64 = weights.iter().sum();
    let ideal: Vec<f64> = weights.iter().map(|w| spare * w / wsum).collect();
    let mut counts: Vec<usize> = ideal.iter().map(|v| 3 + v.floor() as usize).collect();
    let mut rest = ring_total - counts.iter().sum::<usize>();
    let mut order: Vec<usize> = (0..rings).collect();
    order.sort_by(|&a, &b| {
        (ideal[b] - ideal[b].floor())
            .total_cmp(&(ideal[a] - ideal[a].floor()))
            .then(a.cmp(&b))
    });
    for &k in order.iter().cycle() {
        if rest == 0 {
            break;
        }
        counts[k] += 1;
        rest -= 1;
    }

    let mut dirs = vec![[0.0, 1.0, 0.0]];
    let mut starts = Vec::with_capacity(rings);
    let mut offsets = Vec::with_capacity(rings);
    for (k, (&theta, &m)) in thetas.iter().zip(&counts).enumerate() {
        starts.push(dirs.len());
        let offset = if k % 2 == 0 { 0.0 } else { PI / m as f64 };
        offsets.push(offset);
        for j in 0..m {
            let phi = offset + 2.0 * PI * j as f64 / m as f64;
            dirs.push([theta.sin() * phi.cos(), theta.cos(), theta.sin() * phi.sin()]);
        }
    }
    let south = dirs.len();
    dirs.push([0.0, -1.0, 0.0]);

    let mut tris = Vec::with_capacity(2 * n);
    let first = counts[0];
    for j in 0..first {
        tris.push([0, (starts[0] + j) as u32, (starts[0] + (j + 1) % first) as u32]);
    }
    for k in 0..rings - 1 {
        let (a0, a) = (starts[k], counts[k]);
        let (b0, b) = (starts[k + 1], counts[k + 1]);
        let ang = |off: f64, m: usize, i: usize| off + 2.0 * PI * i as f64 / m as f64;
        let (mut i, mut j) = (0, 0);
        while i < a || j < b {
            let next_a = ang(offsets[k], a, i + 1);
            let next_b = ang(offsets[k + 1], b, j + 1);
            if i < a && (j == b || next_a <= next_b) {
                tris.push([(a0 + i % a) as u32, (b0 + j % b) as u32, (a0 + (i + 1) % a) as u32]);
                i += 1;
            } else {
                tris.push([(a0 + i % a) as u32, (b0 + j % b) as u32, (b0 + (j + 1) % b) as u32]);
                j += 1;
            }
        }
    }
    let (l0, last) = (starts[rings - 1], counts[rings - 1]);
    for j in 0..last {
        tris.push([south as u32, (l0 + (j + 1) % last) as u32, (l0 + j) as u32]);
    }

    // Orient outward.
    for t in &mut tris {
        let [a, b, c] = t.map(|i| dirs[i as usize]);
        let e1 = [b[0] - a[0], b[1] - a[1], b[2] - a[2]];
        let e2 = [c[0] - a[0], c[1] - a[1], c[2] - a[2]];
        let nrm = [
            e1[1] * e2[2] - e1[2] * e2[1],
            e1[2] * e2[0] - e1[0] * e2[2],
            e1[0] * e2[1] - e1[1] * e2[0],
        ];
        let centroid = [a[0] + b[0] + c[0], a[1] + b[1] + c[1], a[2] + b[2] + c[2]];
        if nrm[0] * centroid[0] + nrm[1] * centroid[1] + nrm[2] * centroid[2] < 0.0 {
            t.swap(1, 2);
        }
    }
    (dirs, tris)
}

fn head_surface(d: [f64; 3]) -> [f64; 3] {
    let mut p = [HEAD_AXES[0] * d[0], HEAD_AXES[1] * d[1], HEAD_AXES[2] * d[2]];
    if d[2] > 0.0 {
        let nose_y = 0.15 * TEMPLATE_SCALE[1];
        let g = (-(p[0] / 0.13).powi(2) - ((p[1] - nose_y) / 0.22).powi(2)).exp();
        p[2] += NOSE_HEIGHT * g * d[2];
    }
    p
}

fn template_point(i: usize) -> [f64; 2] {
    let t = frontal_template()[i];
    [t[0] * TEMPLATE_SCALE[0], t[1] * TEMPLATE_SCALE[1]]
}

/// Nearest unused front-facing vertex (in the frontal x-y projection) to
/// each template landmark.
fn pick_landmarks(positions: &[[f64; 3]]) -> Vec<u32> {
    let mut used = vec![false; positions.len()];
    (0..LANDMARK_COUNT)
        .map(|i| {
            let target = template_point(i);
            let key = |p: &[f64; 3]| {
                let dx = p[0] - target[0];
                let dy = p[1] - target[1];
                (p[2] <= 0.0, dx * dx + dy * dy)
            };
            let best = positions
                .iter()
                .enumerate()
                .filter(|(k, _)| !used[*k])
                .min_by(|(_, a), (_, b)| {
                    let (fa, da) = key(a);
                    let (fb, db) = key(b);
                    fa.cmp(&fb).then(da.total_cmp(&db))
                })
                .map(|(k, _)| k)
                .expect("at least 68 vertices");
            used[best] = true;
            best as u32
        })
        .collect()
}

/// Front vertices take the class of the template region polygon containing
/// them; everything else is skin.
fn tag_regions(positions: &[[f64; 3]]) -> Vec<u8> {
    let template: Vec<[f64; 2]> = (0..LANDMARK_COUNT).map(template_point).collect();
    let set = LandmarkSet::new(template).expect("template is finite");
    let polys = region_polygons(&set);
    positions
        .iter()
        .map(|p| {
            let mut tag = class::SKIN;
            if p[2] > 0.0 {
                for (id, poly) in polys.iter().skip(1) {
                    if polygon::contains(poly, [p[0], p[1]]) {
                        tag = *id;
                    }
                }
            }
            tag
        })
        .collect()
}

fn region_albedo(tag: u8) -> [f64; 3] {
    match tag {
        class::LEFT_BROW | class::RIGHT_BROW => [0.28, 0.18, 0.12],
        class::LEFT_EYE | class::RIGHT_EYE => [0.35, 0.3, 0.28],
        class::NOSE => [0.8, 0.55, 0.45],
        class::UPPER_LIP | class::LOWER_LIP => [0.72, 0.32, 0.32],
        _ => [0.78, 0.58, 0.48],
    }
}

/// Columns are sums of random Fourier features of the vertex direction,
/// one independent field per coordinate, then orthonormalized.
fn smooth_orthonormal_basis(dirs: &[[f64; 3]], cols: usize, rng: &mut ChaCha8Rng) -> Result<DMatrix<f64>> {
    let n = dirs.len();
    let mut m = DMatrix::<f64>::zeros(3 * n, cols);
    for k in 0..cols {
        for c in 0..3 {
            let terms: Vec<([f64; 3], f64, f64)> = (0..FOURIER_TERMS)
                .map(|_| {
                    let w = [0; 3].map(|_| { let z: f64 = StandardNormal.sample(rng); FOURIER_FREQ * z });
                    let amp: f64 = StandardNormal.sample(rng);
                    let phase = rng.random_range(0.0..std::f64::consts::TAU);
                    (w, amp, phase)
                })
                .collect();
            for (v, d) in dirs.iter().enumerate() {
                m[(3 * v + c, k)] = terms
                    .iter()
                    .map(|(w, a, b)| a * (w[0] * d[0] + w[1] * d[1] + w[2] * d[2] + b).cos())
                    .sum();
            }
        }
    }
    orthonormalize_columns(&mut m)?;
    Ok(m)
}

/// Modified Gram–Schmidt, applied twice for full working precision.
pub(crate) fn orthonormalize_columns(m: &mut DMatrix<f64>) -> Result<()> {
    for _ in 0..2 {
        for k in 0..m.ncols() {
            for j in 0..k {
                let proj = m.column(j).dot(&m.column(k));
                let qj = m.column(j).clone_owned();
                m.column_mut(k).axpy(-proj, &qj, 1.0);
            }
            let norm = m.column(k).norm();
            if norm < 1e-10 {
                return Err(Error::invalid("basis columns are linearly dependent"));
            }
            m.column_mut(k).unscale_mut(norm);
        }
    }
    Ok(())
}
