//! Seeded synthetic scenes: sampled ground-truth coefficients, clean and
//! occluded renders, the parsing map with the occluder footprint, and the
//! true landmarks.

use std::f64::consts::PI;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{quantize, save_color_png, ColorImage, Grid, Mask};
use crate::label_raster::{class, polygon, LabelMap, LandmarkSet};
use crate::morphable::{decode_f64, encode_f64, CoefficientVector, GammaMode, MorphableModel, SyntheticModelSpec};
use crate::rasterizer::Geometry;
use crate::scene_model::{Pose, SH_C0, SH_COEFFS};

pub const SIGMA_ALPHA: f64 = 0.5;
pub const SIGMA_BETA: f64 = 0.3;
pub const MAX_TILT_DEG: f64 = 20.0;
pub const MAX_ROLL_DEG: f64 = 5.0;
pub const MAX_FRACTION: f64 = 0.5;

const OCCLUDER_COLORS: [[f64; 3]; 3] = [[0.05, 0.25, 0.95], [0.1, 0.85, 0.2], [0.0, 0.6, 0.9]];

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OccluderKind {
    #[default]
    None,
    Bar,
    Disc,
    HandSilhouette,
}

impl std::str::FromStr for OccluderKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(Self::None),
            "bar" => Ok(Self::Bar),
            "disc" => Ok(Self::Disc),
            "hand_silhouette" | "hand" => Ok(Self::HandSilhouette),
            _ => Err(Error::invalid(format!(
                "unknown occluder kind {s:?} (none, bar, disc, hand_silhouette)"
            ))),
        }
    }
}

/// Where the occluder was pasted, in pixels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum OccluderShape {
    None,
    Bar { x0: f64, x1: f64, y0: f64, y1: f64, color: [f64; 3] },
    Disc { cx: f64, cy: f64, radius: f64, color: [f64; 3] },
    HandSilhouette { polygon: Vec<[f64; 2]>, color: [f64; 3] },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SceneSpec {
    pub seed: u64,
    pub occluder: OccluderKind,
    pub fraction: f64,
    pub width: usize,
    pub height: usize,
    pub gamma_mode: GammaMode,
}

impl Default for SceneSpec {
    fn default() -> Self {
        Self {
            seed: 0,
            occluder: OccluderKind::None,
            fraction: 0.2,
            width: 128,
            height: 128,
            gamma_mode: GammaMode::Rgb,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticScene {
    pub spec: SceneSpec,
    pub truth: CoefficientVector,
    /// Model-space ground-truth shape.
    pub vertices: Vec<f64>,
    pub clean: ColorImage,
    pub occluded: ColorImage,
    pub m_alpha: LabelMap,
    pub landmarks: LandmarkSet,
    pub occluder: OccluderShape,
    pub footprint: Mask,
    pub face_coverage: Mask,
}

pub fn make_scene(
    model: &MorphableModel,
    seed: u64,
    occluder: OccluderKind,
    fraction: f64,
) -> Result<SyntheticScene> {
    make_scene_with(
        model,
        &SceneSpec {
            seed,
            occluder,
            fraction,
            ..Default::default()
        },
    )
}

pub fn make_scene_with(model: &MorphableModel, spec: &SceneSpec) -> Result<SyntheticScene> {
    if !(0.0..=MAX_FRACTION).contains(&spec.fraction) {
        return Err(Error::invalid(format!(
            "occluder fraction must lie in [0, {MAX_FRACTION}], got {}",
            spec.fraction
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let truth = sample_coefficients(model, spec, &mut rng);
    let geo = Geometry::build(model, &truth.alpha, &truth.pose, spec.width, spec.height)?;
    let render = geo.shade(model, &truth.beta, &truth.gamma)?;
    let clean = quantize(&render.color);
    let landmarks = geo.landmarks(model)?;
    let coverage = render.coverage.clone();

    let (occluder, footprint) = match spec.occluder {
        OccluderKind::None => (OccluderShape::None, Grid::filled(spec.width, spec.height, false)?),
        kind => {
            if coverage.count() == 0 {
                return Err(Error::invalid("face is not visible; cannot place an occluder"));
            }
            place_occluder(kind, spec.fraction, &coverage, &mut rng)?
        }
    };
    let color = match &occluder {
        OccluderShape::None => [0.0; 3],
        OccluderShape::Bar { color, .. }
        | OccluderShape::Disc { color, .. }
        | OccluderShape::HandSilhouette { color, .. } => *color,
    };
    let paint = quantize(&Grid::filled(1, 1, color)?).as_slice()[0];
    let mut occluded = clean.clone();
    let mut labels = render.region.clone();
    for (i, &hit) in footprint.as_slice().iter().enumerate() {
        if hit {
            occluded.as_mut_slice()[i] = paint;
            labels.as_mut_slice()[i] = class::OCCLUDER;
        }
    }
    let m_alpha = LabelMap::from_vec(spec.width, spec.height, labels.into_vec())?;
    Ok(SyntheticScene {
        spec: *spec,
        vertices: geo.shape().to_vec(),
        truth,
        clean,
        occluded,
        m_alpha,
        landmarks,
        occluder,
        footprint,
        face_coverage: coverage,
    })
}

fn sample_coefficients(model: &MorphableModel, spec: &SceneSpec, rng: &mut ChaCha8Rng) -> CoefficientVector {
    let na = Normal::new(0.0, SIGMA_ALPHA).expect("valid sigma");
    let nb = Normal::new(0.0, SIGMA_BETA).expect("valid sigma");
    let alpha = (0..model.n_alpha()).map(|_| na.sample(rng)).collect();
    let beta = (0..model.n_beta()).map(|_| nb.sample(rng)).collect();

    let tilt = MAX_TILT_DEG.to_radians();
    let roll = MAX_ROLL_DEG.to_radians();
    let side = spec.width.min(spec.height) as f64;
    let pose = Pose {
        pitch: rng.random_range(-tilt..=tilt),
        yaw: rng.random_range(-tilt..=tilt),
        roll: rng.random_range(-roll..=roll),
        scale: side * rng.random_range(0.32..0.38),
        tx: spec.width as f64 / 2.0 + rng.random_range(-3.0..3.0),
        ty: spec.height as f64 / 2.0 + rng.random_range(-3.0..3.0),
    };

    // Mostly ambient light with a soft directional and a faint band-2 term,
    // shared across channels up to a small tint.
    let level = rng.random_range(0.8..1.1) / SH_C0;
    let band1 = Normal::new(0.0, 0.3).expect("valid sigma");
    let band2 = Normal::new(0.0, 0.1).expect("valid sigma");
    let mut row = [0.0; SH_COEFFS];
    row[0] = level;
    for r in &mut row[1..4] {
        *r = band1.sample(rng);
    }
    for r in &mut row[4..] {
        *r = band2.sample(rng);
    }
    let gamma = match spec.gamma_mode {
        GammaMode::Mono => row.to_vec(),
        GammaMode::Rgb => (0..3)
            .flat_map(|_| {
                let tint = rng.random_range(0.95..1.05);
                row.map(|g| g * tint)
            })
            .collect(),
    };
    CoefficientVector {
        alpha,
        beta,
        gamma,
        pose,
    }
}

/// Approximate Euclidean distance (pixels) from each covered pixel to the
/// nearest uncovered pixel or canvas edge; two-pass chamfer.
fn inner_distance(mask: &Mask) -> Grid<f64> {
    let (w, h) = (mask.width(), mask.height());
    let big = (w + h) as f64;
    let mut d: Vec<f64> = mask.as_slice().iter().map(|&m| if m { big } else { 0.0 }).collect();
    let diag = std::f64::consts::SQRT_2;
    let at = |x: isize, y: isize, d: &[f64]| {
        if x < 0 || y < 0 || x >= w as isize || y >= h as isize {
            0.0
        } else {
            d[y as usize * w + x as usize]
        }
    };
    for y in 0..h as isize {
        for x in 0..w as isize {
            let i = y as usize * w + x as usize;
            if d[i] == 0.0 {
                continue;
            }
            let best = (at(x - 1, y, &d) + 1.0)
                .min(at(x, y - 1, &d) + 1.0)
                .min(at(x - 1, y - 1, &d) + diag)
                .min(at(x + 1, y - 1, &d) + diag);
            d[i] = d[i].min(best);
        }
    }
    for y in (0..h as isize).rev() {
        for x in (0..w as isize).rev() {
            let i = y as usize * w + x as usize;
            if d[i] == 0.0 {
                continue;
            }
            let best = (at(x + 1, y, &d) + 1.0)
                .min(at(x, y + 1, &d) + 1.0)
                .min(at(x + 1, y + 1, &d) + diag)
                .min(at(x - 1, y + 1, &d) + diag);
            d[i] = d[i].min(best);
        }
    }
    Grid::from_vec(w, h, d).expect("same dims")
}

/// A random covered pixel at least `depth` from the face boundary, or the
/// deepest pixel when none qualifies.
fn pick_center(coverage: &Mask, depth: f64, rng: &mut ChaCha8Rng) -> [f64; 2] {
    let dist = inner_distance(coverage);
    let w = coverage.width();
    let deep: Vec<usize> = (0..dist.len()).filter(|&i| dist.as_slice()[i] >= depth).collect();
    let i = if deep.is_empty() {
        (0..dist.len())
            .max_by(|&a, &b| dist.as_slice()[a].total_cmp(&dist.as_slice()[b]).then(b.cmp(&a)))
            .expect("non-empty canvas")
    } else {
        deep[rng.random_range(0..deep.len())]
    };
    [(i % w) as f64 + 0.5, (i / w) as f64 + 0.5]
}

fn fill_mask(poly: &[[f64; 2]], w: usize, h: usize) -> Mask {
    let mut m = Grid::filled(w, h, false).expect("positive dims");
    polygon::fill_polygon(poly, w, h, |x, y| m.set(x, y, true));
    m
}

fn disc_mask(c: [f64; 2], r: f64, w: usize, h: usize) -> Mask {
    let mut m = Grid::filled(w, h, false).expect("positive dims");
    for y in 0..h {
        for x in 0..w {
            let dx = x as f64 + 0.5 - c[0];
            let dy = y as f64 + 0.5 - c[1];
            if dx * dx + dy * dy <= r * r {
                m.set(x, y, true);
            }
        }
    }
    m
}

fn overlap(a: &Mask, b: &Mask) -> usize {
    a.as_slice().iter().zip(b.as_slice()).filter(|(&x, &y)| x && y).count()
}

/// Smallest parameter in `[0, hi]` whose footprint covers at least `target`
/// face pixels (monotone bisection).
fn solve_size(hi: f64, target: usize, coverage: &Mask, shape: impl Fn(f64) -> Mask) -> f64 {
    let (mut lo, mut hi) = (0.0, hi);
    for _ in 0..40 {
        let mid = 0.5 * (lo + hi);
        if overlap(&shape(mid), coverage) >= target {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    hi
}

/// Outline of an open hand, fingers up (y down), in units of the palm
/// half-width.
fn hand_outline() -> Vec<[f64; 2]> {
    let mut pts = vec![
        [-1.0, 1.6],
        [-1.0, 0.5],
        [-1.8, -0.2],
        [-1.55, -0.45],
        [-1.0, 0.0],
        [-1.0, -0.6],
    ];
    let tops = [-1.4, -1.75, -1.8, -1.5];
    for (i, top) in tops.into_iter().enumerate() {
        let x0 = -1.0 + i as f64 * 0.2 * 8.0 / 3.0;
        if i > 0 {
            pts.push([x0, -0.6]);
        }
        pts.push([x0, top]);
        pts.push([x0 + 0.4, top]);
        pts.push([x0 + 0.4, -0.6]);
    }
    pts.push([1.0, 1.6]);
    pts
}

fn place_occluder(
    kind: OccluderKind,
    fraction: f64,
    coverage: &Mask,
    rng: &mut ChaCha8Rng,
) -> Result<(OccluderShape, Mask)> {
    let (w, h) = (coverage.width(), coverage.height());
    let face = coverage.count();
    let target = ((fraction * face as f64).round() as usize).max(1);
    let color = OCCLUDER_COLORS[rng.random_range(0..OCCLUDER_COLORS.len())];
    let extent = (w + h) as f64;
    Ok(match kind {
        OccluderKind::None => unreachable!("handled by caller"),
        OccluderKind::Disc => {
            let r_est = (target as f64 / PI).sqrt();
            let c = pick_center(coverage, r_est, rng);
            let r = solve_size(extent, target, coverage, |r| disc_mask(c, r, w, h));
            (
                OccluderShape::Disc {
                    cx: c[0],
                    cy: c[1],
                    radius: r,
                    color,
                },
                disc_mask(c, r, w, h),
            )
        }
        OccluderKind::Bar => {
            let cols: Vec<usize> = (0..w).filter(|&x| (0..h).any(|y| *coverage.get(x, y))).collect();
            let (x0, x1) = (cols[0] as f64, *cols.last().unwrap() as f64 + 1.0);
            let c = pick_center(coverage, 0.0, rng);
            let rect = |half: f64| {
                fill_mask(&[[x0, c[1] - half], [x1, c[1] - half], [x1, c[1] + half], [x0, c[1] + half]], w, h)
            };
            let half = solve_size(extent, target, coverage, rect);
            (
                OccluderShape::Bar {
                    x0,
                    x1,
                    y0: c[1] - half,
                    y1: c[1] + half,
                    color,
                },
                rect(half),
            )
        }
        OccluderKind::HandSilhouette => {
            let outline = hand_outline();
            let area = polygon::signed_area2(&outline).abs() / 2.0;
            let s_est = (target as f64 / area).sqrt();
            let c = pick_center(coverage, 1.2 * s_est, rng);
            let place = |s: f64| -> Vec<[f64; 2]> {
                outline.iter().map(|p| [c[0] + s * p[0], c[1] + s * p[1]]).collect()
            };
            let s = solve_size(extent, target, coverage, |s| fill_mask(&place(s), w, h));
            let poly = place(s);
            let mask = fill_mask(&poly, w, h);
            (OccluderShape::HandSilhouette { polygon: poly, color }, mask)
        }
    })
}

/// The `truth.json` record of a scene directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneTruth {
    pub scene: SceneSpec,
    pub model: Option<SyntheticModelSpec>,
    pub coefficients: CoefficientVector,
    pub n_vertices: usize,
    /// Base64 little-endian `f64` model-space vertices.
    pub vertices: String,
    pub occluder: OccluderShape,
    pub face_pixels: usize,
    pub occluder_pixels: usize,
}

impl SceneTruth {
    pub fn vertices(&self) -> Result<Vec<f64>> {
        decode_f64(&self.vertices, 3 * self.n_vertices)
            .ok_or_else(|| Error::invalid("truth vertices do not decode to 3 × n_vertices floats"))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|source| Error::Json {
            path: path.to_path_buf(),
            source,
        })
    }
}

pub const SCENE_FILES: [&str; 5] = ["clean.png", "occluded.png", "m_alpha.png", "landmarks.txt", "truth.json"];

impl SyntheticScene {
    pub fn truth_record(&self, model: Option<SyntheticModelSpec>) -> SceneTruth {
        SceneTruth {
            scene: self.spec,
            model,
            coefficients: self.truth.clone(),
            n_vertices: self.vertices.len() / 3,
            vertices: encode_f64(&self.vertices),
            occluder: self.occluder.clone(),
            face_pixels: self.face_coverage.count(),
            occluder_pixels: self.footprint.count(),
        }
    }

    /// Writes the five scene files into `dir`, creating it if needed.
    pub fn save_dir(&self, dir: &Path, model: Option<SyntheticModelSpec>) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        save_color_png(&self.clean, &dir.join(SCENE_FILES[0]))?;
        save_color_png(&self.occluded, &dir.join(SCENE_FILES[1]))?;
        self.m_alpha.save_png(&dir.join(SCENE_FILES[2]))?;
        self.landmarks.save(&dir.join(SCENE_FILES[3]))?;
        let path = dir.join(SCENE_FILES[4]);
        let text = serde_json::to_string_pretty(&self.truth_record(model)).expect("truth serializes");
        std::fs::write(&path, text).map_err(|e| Error::io(&path, e))
    }
}
