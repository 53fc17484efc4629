use std::path::{Path, PathBuf};

use log::info;
use occface::fitter::{self, vertex_error_stats, AttentionMode, FitReport};
use occface::grid::{load_color_png, save_color_png, ColorImage};
use occface::label_raster::{merge_maps, regions_from_landmarks, LabelClassSets, LabelMap, LandmarkSet, MergeMode};
use occface::morphable::{make_synthetic_model, MorphableModel, SyntheticModelSpec};
use occface::rasterizer::{export_obj, load_obj, render, write_obj, RenderBuffer};
use occface::synthgen::{make_scene, OccluderKind, SceneTruth};
use serde::Serialize;

use crate::config::PipelineConfig;
use crate::error::{CliError, CliResult, InModule};

pub const FIT_ARTIFACTS: [&str; 5] = ["fit_report.json", "mesh.obj", "render.png", "overlay.png", "loss_trace.csv"];

const OVERLAY_ALPHA: f64 = 0.5;

/// Second input of the merge: landmarks to rasterize, or a ready map.
pub enum MergeSource<'a> {
    Landmarks(&'a Path),
    Map(&'a Path),
}

pub fn merge(m_alpha: &Path, source: MergeSource<'_>, out: &Path, mode: MergeMode) -> CliResult<()> {
    let a = LabelMap::load_png(m_alpha).in_module("label_raster")?;
    let b = match source {
        MergeSource::Landmarks(p) => {
            let lmk = LandmarkSet::load(p).in_module("label_raster")?;
            regions_from_landmarks(&lmk, a.width(), a.height()).in_module("label_raster")?
        }
        MergeSource::Map(p) => LabelMap::load_png(p).in_module("label_raster")?,
    };
    let merged = merge_maps(&a, &b, &LabelClassSets::default(), mode).in_module("label_raster")?;
    merged.save_png(out).in_module("label_raster")?;
    info!("wrote {}", out.display());
    Ok(())
}

pub struct FitOverrides {
    pub iters: Option<usize>,
    pub attention: Option<AttentionMode>,
}

pub fn fit(config: &Path, overrides: FitOverrides) -> CliResult<FitReport> {
    let mut cfg = PipelineConfig::load(config)?;
    if let Some(n) = overrides.iters {
        cfg.fit.max_iters = n;
    }
    if let Some(a) = overrides.attention {
        cfg.fit.attention = a;
    }
    cfg.check_inputs()?;

    let image = load_color_png(&cfg.image).in_module("cli")?;
    let m_alpha = LabelMap::load_png(&cfg.m_alpha).in_module("label_raster")?;
    let lmk = LandmarkSet::load(&cfg.landmarks).in_module("label_raster")?;
    let model = cfg.model.load()?;
    info!(
        "fitting {}x{} image, {} vertices, {} iterations",
        image.width(),
        image.height(),
        model.n_vertices(),
        cfg.fit.max_iters
    );
    let report = fitter::fit(&model, &image, &m_alpha, &lmk, &cfg.fit).in_module("fitter")?;
    info!(
        "loss {:.6} -> {:.6} in {:.1?}",
        report.initial.total, report.final_loss.total, report.wall_time
    );

    let out = &cfg.output_dir;
    std::fs::create_dir_all(out).map_err(|e| CliError::usage(format!("{}: {e}", out.display())))?;
    report.save_json(&out.join(FIT_ARTIFACTS[0])).in_module("fitter")?;
    export_obj(&model, &report.coefficients, &out.join(FIT_ARTIFACTS[1])).in_module("rasterizer")?;
    let buffer = render(&model, &report.coefficients, image.width(), image.height()).in_module("rasterizer")?;
    buffer.save_color_png(&out.join(FIT_ARTIFACTS[2])).in_module("rasterizer")?;
    save_color_png(&overlay(&image, &buffer), &out.join(FIT_ARTIFACTS[3])).in_module("cli")?;
    report.save_trace_csv(&out.join(FIT_ARTIFACTS[4])).in_module("fitter")?;
    info!("wrote artifacts to {}", out.display());
    Ok(report)
}

/// The render blended over the input where the face covers it.
pub fn overlay(image: &ColorImage, buffer: &RenderBuffer) -> ColorImage {
    let mut out = image.clone();
    let pixels = out.as_mut_slice();
    for (i, (&hit, c)) in buffer.coverage.as_slice().iter().zip(buffer.color.as_slice()).enumerate() {
        if hit {
            for k in 0..3 {
                pixels[i][k] = OVERLAY_ALPHA * c[k] + (1.0 - OVERLAY_ALPHA) * pixels[i][k];
            }
        }
    }
    out
}

#[derive(Debug, Serialize)]
pub struct FinalLosses {
    pub total: f64,
    pub landmark: f64,
    pub pixel: f64,
    pub reg: f64,
    pub feature: f64,
}

#[derive(Debug, Serialize)]
pub struct Metrics {
    pub n_vertices: usize,
    pub mean_of_smallest_90pct: f64,
    pub p90: f64,
    pub mean_of_largest_10pct: f64,
    pub mean: f64,
    pub max: f64,
    pub final_losses: Option<FinalLosses>,
}

/// Truth may be a scene `truth.json` or another OBJ mesh.
fn load_truth_vertices(path: &Path) -> CliResult<Vec<f64>> {
    if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json")) {
        SceneTruth::load(path).and_then(|t| t.vertices()).in_module("synthgen")
    } else {
        Ok(load_obj(path).in_module("rasterizer")?.vertices)
    }
}

pub fn eval(mesh: &Path, truth: &Path, report: Option<&Path>, out: Option<&Path>) -> CliResult<Metrics> {
    let fitted = load_obj(mesh).in_module("rasterizer")?;
    let truth = load_truth_vertices(truth)?;
    if fitted.vertices.len() != truth.len() {
        return Err(CliError::usage(format!(
            "vertex count mismatch: mesh has {}, truth has {}",
            fitted.vertices.len() / 3,
            truth.len() / 3
        )));
    }
    let stats = vertex_error_stats(&fitted.vertices, &truth).in_module("fitter")?;

    let sibling = mesh.with_file_name(FIT_ARTIFACTS[0]);
    let report_path = report.map(Path::to_path_buf).or_else(|| sibling.is_file().then_some(sibling));
    let final_losses = match report_path {
        Some(p) => {
            let text = std::fs::read_to_string(&p).map_err(|e| CliError::usage(format!("{}: {e}", p.display())))?;
            let r: FitReport =
                serde_json::from_str(&text).map_err(|source| CliError::Config { path: p.clone(), source })?;
            let f = r.final_loss;
            Some(FinalLosses {
                total: f.total,
                landmark: f.parts.landmark,
                pixel: f.parts.pixel,
                reg: f.parts.reg,
                feature: f.parts.feature,
            })
        }
        None => None,
    };
    let metrics = Metrics {
        n_vertices: truth.len() / 3,
        mean_of_smallest_90pct: stats.mean_of_smallest_90pct,
        p90: stats.p90,
        mean_of_largest_10pct: stats.mean_of_largest_10pct,
        mean: stats.mean,
        max: stats.max,
        final_losses,
    };
    let out = out.map(Path::to_path_buf).unwrap_or_else(|| mesh.with_file_name("metrics.json"));
    let text = serde_json::to_string_pretty(&metrics).expect("metrics serialize");
    std::fs::write(&out, text).map_err(|e| CliError::usage(format!("{}: {e}", out.display())))?;
    info!("wrote {}", out.display());
    Ok(metrics)
}

/// With one seed the scene goes straight into `out`; with several, into
/// `out/seed_<n>`.
pub fn synth(
    model: &ModelChoice,
    seeds: &[u64],
    kind: OccluderKind,
    fraction: f64,
    out: &Path,
) -> CliResult<Vec<PathBuf>> {
    let (m, spec) = model.load()?;
    let mut dirs = Vec::with_capacity(seeds.len());
    for &seed in seeds {
        let dir = if seeds.len() == 1 {
            out.to_path_buf()
        } else {
            out.join(format!("seed_{seed}"))
        };
        let scene = make_scene(&m, seed, kind, fraction).in_module("synthgen")?;
        scene.save_dir(&dir, spec).in_module("synthgen")?;
        info!("wrote scene {seed} to {}", dir.display());
        dirs.push(dir);
    }
    Ok(dirs)
}

/// A model file, or a synthetic model built from a spec.
pub enum ModelChoice {
    File(PathBuf),
    Synthetic(SyntheticModelSpec),
}

impl ModelChoice {
    fn load(&self) -> CliResult<(MorphableModel, Option<SyntheticModelSpec>)> {
        match self {
            ModelChoice::File(p) => Ok((MorphableModel::load(p).in_module("morphable")?, None)),
            ModelChoice::Synthetic(spec) => Ok((make_synthetic_model(spec).in_module("morphable")?, Some(*spec))),
        }
    }
}

pub fn model_generate(spec: &SyntheticModelSpec, out: &Path) -> CliResult<()> {
    let m = make_synthetic_model(spec).in_module("morphable")?;
    m.save(out).in_module("morphable")?;
    info!("wrote {}", out.display());
    Ok(())
}

/// Writes the mean face with its mean albedo as vertex colors.
pub fn model_export(model: &ModelChoice, out: &Path) -> CliResult<()> {
    let (m, _) = model.load()?;
    let albedo = m.assemble_albedo(&vec![0.0; m.n_beta()]).in_module("morphable")?;
    let text = write_obj(m.mean_shape(), Some(&albedo.values), m.triangles());
    std::fs::write(out, text).map_err(|e| CliError::usage(format!("{}: {e}", out.display())))?;
    info!("wrote {}", out.display());
    Ok(())
}
