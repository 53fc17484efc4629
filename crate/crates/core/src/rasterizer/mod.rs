//! Software triangle rasterizer.
//!
//! Rendering is split in two passes so callers that only change albedo or
//! lighting can reuse visibility:
//!
//! 1. [`Geometry::build`] assembles the shape, projects it and resolves the
//!    z-buffer into per-pixel fragments (triangle index + barycentrics);
//! 2. [`Geometry::shade`] computes per-vertex colors and interpolates them.
//!
//! Ownership follows the top-left rule, faces whose projection winds
//! clockwise in a y-up frame (counter-clockwise on screen) are culled, and
//! exact depth ties go to the lower triangle index.

mod obj;

use nalgebra::Matrix3;

use crate::error::{Error, Result};
use crate::grid::{self, ColorImage, Grid, Mask};
use crate::label_raster::{class, LabelMap, LandmarkSet};
use crate::morphable::{CoefficientVector, MorphableModel};
use crate::scene_model::{project_one, rotation_matrix, vertex_normals, Illumination, Pose};

pub use obj::{export_obj, load_obj, parse_obj, write_obj, ObjMesh};

/// One visible sample: the owning triangle and its barycentric weights.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Fragment {
    pub triangle: u32,
    pub bary: [f64; 3],
    pub depth: f64,
}

/// Resolved visibility for a canvas.
pub type FragmentBuffer = Grid<Option<Fragment>>;

/// Edge function: twice the signed area of `(a, b, p)` in image coordinates.
#[inline]
fn edge(a: [f64; 2], b: [f64; 2], p: [f64; 2]) -> f64 {
    (b[0] - a[0]) * (p[1] - a[1]) - (b[1] - a[1]) * (p[0] - a[0])
}

/// For a positively wound triangle in y-down coordinates, pixels lying
/// exactly on a top or left edge belong to it.
#[inline]
fn is_top_left(a: [f64; 2], b: [f64; 2]) -> bool {
    let dx = b[0] - a[0];
    let dy = b[1] - a[1];
    (dy == 0.0 && dx > 0.0) || dy < 0.0
}

/// True when the projected triangle faces the camera.
#[inline]
pub fn is_front_facing(p0: [f64; 2], p1: [f64; 2], p2: [f64; 2]) -> bool {
    edge(p0, p1, p2) < 0.0
}

/// Z-buffers `triangles` over a `width × height` canvas. `screen` holds
/// image-space vertex positions and `depth` per-vertex depth (smaller is
/// nearer). Back faces and zero-area triangles are skipped.
pub fn rasterize(
    screen: &[[f64; 2]],
    depth: &[f64],
    triangles: &[[u32; 3]],
    width: usize,
    height: usize,
) -> Result<FragmentBuffer> {
    let covered = rasterize_covered(screen, depth, triangles, width, height)?;
    let mut buf: FragmentBuffer = Grid::filled(width, height, None)?;
    for (i, f) in covered {
        buf.as_mut_slice()[i as usize] = Some(f);
    }
    Ok(buf)
}

/// Visible fragments as `(pixel index, fragment)` in row-major pixel order.
pub fn rasterize_covered(
    screen: &[[f64; 2]],
    depth: &[f64],
    triangles: &[[u32; 3]],
    width: usize,
    height: usize,
) -> Result<Vec<(u32, Fragment)>> {
    if width == 0 || height == 0 {
        return Err(Error::invalid(format!(
            "canvas dimensions must be positive, got {width}x{height}"
        )));
    }
    if screen.len() != depth.len() {
        return Err(Error::invalid("screen and depth arrays differ in length"));
    }
    if let Some(t) = triangles.iter().find(|t| t.iter().any(|&i| i as usize >= screen.len())) {
        return Err(Error::invalid(format!("triangle {t:?} out of range")));
    }
    const EMPTY: u32 = u32::MAX;
    let mut slot = vec![EMPTY; width * height];
    let mut frags: Vec<(u32, Fragment)> = Vec::new();
    for (ti, tri) in triangles.iter().enumerate() {
        let [i0, i1, i2] = tri.map(|i| i as usize);
        if !is_front_facing(screen[i0], screen[i1], screen[i2]) {
            continue;
        }
        // Swap to positive winding; remember which weight belongs to which
        // original vertex.
        let v = [screen[i0], screen[i2], screen[i1]];
        let z = [depth[i0], depth[i2], depth[i1]];
        let area = edge(v[0], v[1], v[2]);
        if !(area > 0.0) || !area.is_finite() {
            continue;
        }
        let min_x = v[0][0].min(v[1][0]).min(v[2][0]);
        let max_x = v[0][0].max(v[1][0]).max(v[2][0]);
        let min_y = v[0][1].min(v[1][1]).min(v[2][1]);
        let max_y = v[0][1].max(v[1][1]).max(v[2][1]);
        let x0 = (min_x - 0.5).ceil().max(0.0);
        let x1 = (max_x - 0.5).floor().min(width as f64 - 1.0);
        let y0 = (min_y - 0.5).ceil().max(0.0);
        let y1 = (max_y - 0.5).floor().min(height as f64 - 1.0);
        if x0 > x1 || y0 > y1 {
            continue;
        }
        let tl = [
            is_top_left(v[1], v[2]),
            is_top_left(v[2], v[0]),
            is_top_left(v[0], v[1]),
        ];
        for y in y0 as usize..=y1 as usize {
            for x in x0 as usize..=x1 as usize {
                let p = [x as f64 + 0.5, y as f64 + 0.5];
                let w = [edge(v[1], v[2], p), edge(v[2], v[0], p), edge(v[0], v[1], p)];
                let inside = (0..3).all(|k| w[k] > 0.0 || (w[k] == 0.0 && tl[k]));
                if !inside {
                    continue;
                }
                let b = [w[0] / area, w[1] / area, w[2] / area];
                let d = b[0] * z[0] + b[1] * z[1] + b[2] * z[2];
                let pixel = y * width + x;
                let frag = Fragment {
                    triangle: ti as u32,
                    // Back to the triangle's own vertex order.
                    bary: [b[0], b[2], b[1]],
                    depth: d,
                };
                match slot[pixel] {
                    EMPTY => {
                        slot[pixel] = frags.len() as u32;
                        frags.push((pixel as u32, frag));
                    }
                    k if d < frags[k as usize].1.depth => frags[k as usize].1 = frag,
                    _ => {}
                }
            }
        }
    }
    frags.sort_unstable_by_key(|(p, _)| *p);
    Ok(frags)
}

/// Shape-dependent part of a render: everything except colors.
#[derive(Debug, Clone)]
pub struct Geometry {
    shape: Vec<f64>,
    camera_normals: Vec<[f64; 3]>,
    screen: Vec<[f64; 2]>,
    width: usize,
    height: usize,
    covered: Vec<(u32, Fragment)>,
    regions: Vec<u8>,
}

impl Geometry {
    pub fn build(
        model: &MorphableModel,
        alpha: &[f64],
        pose: &Pose,
        width: usize,
        height: usize,
    ) -> Result<Self> {
        pose.validate()?;
        let shape = model.assemble_shape(alpha)?;
        let r = rotation_matrix(pose);
        let normals = vertex_normals(&shape, model.triangles());
        let camera_normals = normals.iter().map(|&n| rotate(&r, n)).collect();
        let mut screen = Vec::with_capacity(model.n_vertices());
        let mut depth = Vec::with_capacity(model.n_vertices());
        for v in shape.chunks_exact(3) {
            let v = [v[0], v[1], v[2]];
            screen.push(project_one(&r, pose, v));
            depth.push(-pose.scale * rotate(&r, v)[2]);
        }
        let covered = rasterize_covered(&screen, &depth, model.triangles(), width, height)?;
        let tags = model.region_tags();
        let regions = model
            .triangles()
            .iter()
            .map(|t| triangle_region(t.map(|i| tags[i as usize])))
            .collect();
        Ok(Self {
            shape,
            camera_normals,
            screen,
            width,
            height,
            covered,
            regions,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    /// Assembled model-space shape, flat `[x0, y0, z0, ...]`.
    pub fn shape(&self) -> &[f64] {
        &self.shape
    }

    pub fn screen(&self) -> &[[f64; 2]] {
        &self.screen
    }

    /// Visible fragments as `(pixel index, fragment)`, row-major order.
    pub fn covered(&self) -> &[(u32, Fragment)] {
        &self.covered
    }

    pub fn triangle_region(&self, triangle: u32) -> u8 {
        self.regions[triangle as usize]
    }

    /// Image positions of the model's landmark vertices.
    pub fn landmarks(&self, model: &MorphableModel) -> Result<LandmarkSet> {
        LandmarkSet::new(
            model
                .landmark_indices()
                .iter()
                .map(|&i| self.screen[i as usize])
                .collect(),
        )
    }

    /// Clamped per-vertex colors under the given albedo and lighting.
    pub fn vertex_colors(
        &self,
        model: &MorphableModel,
        beta: &[f64],
        gamma: &[f64],
    ) -> Result<Vec<[f64; 3]>> {
        let albedo = model.assemble_albedo(beta)?;
        let illum = Illumination::from_flat(gamma)?;
        Ok(albedo
            .values
            .iter()
            .zip(&self.camera_normals)
            .map(|(a, &n)| {
                let e = illum.irradiance(n);
                [0, 1, 2].map(|c| (a[c] * e[c]).clamp(0.0, 1.0))
            })
            .collect())
    }

    pub fn shade(&self, model: &MorphableModel, beta: &[f64], gamma: &[f64]) -> Result<RenderBuffer> {
        let colors = self.vertex_colors(model, beta, gamma)?;
        Ok(self.composite(model.triangles(), &colors))
    }

    fn composite(&self, triangles: &[[u32; 3]], colors: &[[f64; 3]]) -> RenderBuffer {
        let (w, h) = (self.width, self.height);
        let mut color = vec![BACKGROUND_COLOR; w * h];
        let mut depth = vec![f64::INFINITY; w * h];
        let mut region = vec![class::BACKGROUND; w * h];
        let mut coverage = vec![false; w * h];
        for (p, f) in &self.covered {
            let p = *p as usize;
            color[p] = interpolate(f, triangles, colors);
            depth[p] = f.depth;
            region[p] = self.regions[f.triangle as usize];
            coverage[p] = true;
        }
        RenderBuffer {
            color: Grid::from_vec(w, h, color).expect("dims checked"),
            depth: Grid::from_vec(w, h, depth).expect("dims checked"),
            region: Grid::from_vec(w, h, region).expect("dims checked"),
            coverage: Grid::from_vec(w, h, coverage).expect("dims checked"),
        }
    }
}

/// Barycentric blend of a triangle's vertex colors, clamped to `[0, 1]`.
#[inline]
pub fn interpolate(f: &Fragment, triangles: &[[u32; 3]], colors: &[[f64; 3]]) -> [f64; 3] {
    let t = triangles[f.triangle as usize];
    let (c0, c1, c2) = (colors[t[0] as usize], colors[t[1] as usize], colors[t[2] as usize]);
    let [b0, b1, b2] = f.bary;
    [0, 1, 2].map(|ch| (b0 * c0[ch] + b1 * c1[ch] + b2 * c2[ch]).clamp(0.0, 1.0))
}

const BACKGROUND_COLOR: [f64; 3] = [0.0, 0.0, 0.0];

#[inline]
fn rotate(r: &Matrix3<f64>, v: [f64; 3]) -> [f64; 3] {
    [0, 1, 2].map(|i| r[(i, 0)] * v[0] + r[(i, 1)] * v[1] + r[(i, 2)] * v[2])
}

/// Majority tag of a triangle's vertices; with three distinct tags the
/// first vertex decides. Rendered faces never carry the background class.
pub fn triangle_region(tags: [u8; 3]) -> u8 {
    let [a, b, c] = tags;
    let t = if b == c { b } else { a };
    if t == class::BACKGROUND {
        class::SKIN
    } else {
        t
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RenderBuffer {
    pub color: ColorImage,
    pub depth: Grid<f64>,
    pub region: Grid<u8>,
    pub coverage: Mask,
}

impl RenderBuffer {
    pub fn width(&self) -> usize {
        self.color.width()
    }

    pub fn height(&self) -> usize {
        self.color.height()
    }

    /// The region buffer as a label map (background where uncovered).
    pub fn label_map(&self) -> LabelMap {
        LabelMap::from_vec(self.width(), self.height(), self.region.as_slice().to_vec())
            .expect("region ids come from the label table")
    }

    pub fn save_color_png(&self, path: &std::path::Path) -> Result<()> {
        grid::save_color_png(&self.color, path)
    }
}

pub fn render(
    model: &MorphableModel,
    coeffs: &CoefficientVector,
    width: usize,
    height: usize,
) -> Result<RenderBuffer> {
    coeffs.validate(&model.layout(coeffs.gamma_mode()?))?;
    Geometry::build(model, &coeffs.alpha, &coeffs.pose, width, height)?.shade(
        model,
        &coeffs.beta,
        &coeffs.gamma,
    )
}

/// Pixels where the face projects.
pub fn face_region_mask(buffer: &RenderBuffer) -> Mask {
    buffer.coverage.clone()
}
