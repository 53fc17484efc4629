use std::path::Path;
use std::sync::OnceLock;

use occface::label_raster::class;
use occface::morphable::{make_synthetic_model, CoefficientVector, GammaMode, MorphableModel, SyntheticModelSpec};
use occface::rasterizer::{
    export_obj, face_region_mask, interpolate, load_obj, parse_obj, rasterize, render, write_obj, Geometry,
};
use occface::scene_model::Pose;
use occface::Error;
use proptest::prelude::*;

fn model() -> &'static MorphableModel {
    static MODEL: OnceLock<MorphableModel> = OnceLock::new();
    MODEL.get_or_init(|| {
        make_synthetic_model(&SyntheticModelSpec { seed: 2, n_vertices: 800, n_alpha: 8, n_beta: 8 }).unwrap()
    })
}

fn coeffs(pose: Pose) -> CoefficientVector {
    let m = model();
    let mut c = CoefficientVector::neutral(&m.layout(GammaMode::Rgb), pose);
    for (k, a) in c.alpha.iter_mut().enumerate() {
        *a = 0.3 * ((k as f64) * 1.7).sin();
    }
    for (k, b) in c.beta.iter_mut().enumerate() {
        *b = 0.2 * ((k as f64) * 0.9).cos();
    }
    c.gamma[2] = 0.8;
    c
}

/// Strict interior test in y-down pixel coordinates for a front-facing
/// (negatively wound) triangle.
fn strictly_inside(t: [[f64; 2]; 3], p: [f64; 2]) -> bool {
    let e = |a: [f64; 2], b: [f64; 2]| (b[0] - a[0]) * (p[1] - a[1]) - (b[1] - a[1]) * (p[0] - a[0]);
    e(t[0], t[1]) < 0.0 && e(t[1], t[2]) < 0.0 && e(t[2], t[0]) < 0.0
}

#[test]
fn single_triangle_matches_point_in_triangle_oracle() {
    // Vertices avoid pixel-center lattices so no center lies on an edge.
    let tri = [[3.3, 2.1], [5.7, 27.9], [29.2, 14.6]];
    let buf = rasterize(&tri, &[1.0, 1.0, 1.0], &[[0, 1, 2]], 32, 32).unwrap();
    let colors = [[0.25, 0.5, 0.75]; 3];
    let mut expected = 0;
    for y in 0..32 {
        for x in 0..32 {
            let inside = strictly_inside(tri, [x as f64 + 0.5, y as f64 + 0.5]);
            expected += inside as usize;
            let frag = buf.get(x, y);
            assert_eq!(frag.is_some(), inside, "pixel ({x}, {y})");
            if let Some(f) = frag {
                let got = interpolate(f, &[[0, 1, 2]], &colors);
                for (g, e) in got.iter().zip([0.25, 0.5, 0.75]) {
                    assert!((g - e).abs() < 1e-12);
                }
            }
        }
    }
    assert!(expected > 100);
}

#[test]
fn nearer_triangle_wins_overlap() {
    let screen = [
        [1.2, 1.3], [2.1, 30.4], [30.6, 15.2],
        [4.4, 3.3], [3.1, 29.1], [28.7, 6.2],
    ];
    let depth = [5.0, 5.0, 5.0, 2.0, 2.0, 2.0];
    for order in [[[0, 1, 2], [3, 4, 5]], [[3, 4, 5], [0, 1, 2]]] {
        let buf = rasterize(&screen, &depth, &order, 32, 32).unwrap();
        let near_index = order.iter().position(|t| t[0] == 3).unwrap() as u32;
        let near = [screen[3], screen[4], screen[5]];
        let far = [screen[0], screen[1], screen[2]];
        for y in 0..32 {
            for x in 0..32 {
                let c = [x as f64 + 0.5, y as f64 + 0.5];
                if strictly_inside(near, c) && strictly_inside(far, c) {
                    let f = buf.get(x, y).unwrap();
                    assert_eq!(f.triangle, near_index);
                    assert!((f.depth - 2.0).abs() < 1e-12);
                }
            }
        }
    }
}

#[test]
fn equal_depth_tie_goes_to_lower_index() {
    let screen = [[1.0, 1.0], [1.0, 31.0], [31.0, 16.0]];
    let buf = rasterize(&screen, &[1.0; 3], &[[0, 1, 2], [0, 1, 2]], 32, 32).unwrap();
    assert!(buf.as_slice().iter().flatten().all(|f| f.triangle == 0));
}

#[test]
fn back_faces_and_degenerate_triangles_are_skipped() {
    let screen = [[3.3, 2.1], [29.2, 14.6], [5.7, 27.9], [1.0, 1.0], [9.0, 9.0], [17.0, 17.0]];
    let buf = rasterize(&screen, &[1.0; 6], &[[0, 1, 2], [3, 4, 5]], 32, 32).unwrap();
    assert!(buf.as_slice().iter().all(|f| f.is_none()));
}

#[test]
fn zero_canvas_is_invalid() {
    let c = coeffs(Pose::new(0.0, 0.0, 0.0, 30.0, 32.0, 32.0).unwrap());
    assert!(matches!(render(model(), &c, 0, 16), Err(Error::InvalidArgument(_))));
}

#[test]
fn off_canvas_face_renders_nothing() {
    let c = coeffs(Pose::new(0.0, 0.0, 0.0, 20.0, -500.0, 32.0).unwrap());
    let buf = render(model(), &c, 64, 64).unwrap();
    assert_eq!(buf.coverage.count(), 0);
    assert!(buf.color.as_slice().iter().all(|c| *c == [0.0; 3]));
    assert_eq!(face_region_mask(&buf).count(), 0);
}

#[test]
fn full_canvas_face_covers_every_pixel() {
    let c = coeffs(Pose::new(0.0, 0.0, 0.0, 400.0, 16.0, 16.0).unwrap());
    let buf = render(model(), &c, 32, 32).unwrap();
    assert_eq!(face_region_mask(&buf).count(), 32 * 32);
}

#[test]
fn buffer_channels_agree() {
    let c = coeffs(Pose::new(0.1, -0.25, 0.05, 30.0, 40.0, 30.0).unwrap());
    let buf = render(model(), &c, 64, 64).unwrap();
    let covered = buf.coverage.count();
    assert!(covered > 500 && covered < 64 * 64);
    assert_eq!(face_region_mask(&buf).count(), covered);
    for i in 0..64 * 64 {
        let cov = buf.coverage.as_slice()[i];
        assert_eq!(cov, buf.depth.as_slice()[i].is_finite());
        assert_eq!(cov, buf.region.as_slice()[i] != class::BACKGROUND);
        assert!(buf.color.as_slice()[i].iter().all(|v| (0.0..=1.0).contains(v)));
    }
    assert_eq!(buf.label_map().count(class::BACKGROUND), 64 * 64 - covered);
}

#[test]
fn colors_stay_within_triangle_vertex_range() {
    let m = model();
    let c = coeffs(Pose::new(-0.1, 0.2, 0.0, 30.0, 32.0, 32.0).unwrap());
    let geo = Geometry::build(m, &c.alpha, &c.pose, 64, 64).unwrap();
    let vc = geo.vertex_colors(m, &c.beta, &c.gamma).unwrap();
    let buf = geo.shade(m, &c.beta, &c.gamma).unwrap();
    for (p, f) in geo.covered() {
        let t = m.triangles()[f.triangle as usize];
        let got = buf.color.as_slice()[*p as usize];
        for ch in 0..3 {
            let vals = t.map(|i| vc[i as usize][ch]);
            let lo = vals.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            assert!(got[ch] >= lo - 1e-12 && got[ch] <= hi + 1e-12);
        }
    }
}

#[test]
fn rendering_is_deterministic() {
    let c = coeffs(Pose::new(0.2, 0.1, -0.05, 28.0, 33.0, 31.0).unwrap());
    assert_eq!(render(model(), &c, 64, 64).unwrap(), render(model(), &c, 64, 64).unwrap());
}

#[test]
fn region_png_is_a_valid_label_map() {
    let dir = tempfile::tempdir().unwrap();
    let c = coeffs(Pose::new(0.0, 0.0, 0.0, 28.0, 32.0, 32.0).unwrap());
    let buf = render(model(), &c, 64, 64).unwrap();
    let path = dir.path().join("region.png");
    buf.label_map().save_png(&path).unwrap();
    assert_eq!(occface::label_raster::LabelMap::load_png(&path).unwrap(), buf.label_map());
}

#[test]
fn obj_export_round_trips_byte_for_byte() {
    let dir = tempfile::tempdir().unwrap();
    let m = model();
    let c = coeffs(Pose::new(0.0, 0.0, 0.0, 1.0, 0.0, 0.0).unwrap());
    let path = dir.path().join("mesh.obj");
    export_obj(m, &c, &path).unwrap();
    let first = std::fs::read_to_string(&path).unwrap();
    let mesh = load_obj(&path).unwrap();
    assert_eq!(mesh.n_vertices(), m.n_vertices());
    assert_eq!(mesh.triangles, m.triangles());
    let again = write_obj(&mesh.vertices, mesh.colors.as_deref(), &mesh.triangles);
    assert_eq!(again, first);
    let shape = m.assemble_shape(&c.alpha).unwrap();
    for (a, b) in mesh.vertices.iter().zip(&shape) {
        assert!((a - b).abs() <= 5e-7);
    }
}

#[test]
fn obj_export_reports_path_on_failure() {
    let m = model();
    let c = coeffs(Pose::new(0.0, 0.0, 0.0, 1.0, 0.0, 0.0).unwrap());
    let bad = Path::new("/nonexistent-dir/mesh.obj");
    let msg = export_obj(m, &c, bad).unwrap_err().to_string();
    assert!(msg.contains("/nonexistent-dir/mesh.obj"), "{msg}");
}

#[test]
fn obj_parse_errors_locate_the_line() {
    let text = "v 0 0 0\nv 1 0 0\nv 0 1 zero\nf 1 2 3\n";
    match parse_obj(text, Path::new("bad.obj")) {
        Err(Error::Parse { line, offset, .. }) => {
            assert_eq!(line, 3);
            assert_eq!(offset, 16);
        }
        other => panic!("expected parse error, got {other:?}"),
    }
    assert!(parse_obj("v 0 0 0\nf 1 2 9\n", Path::new("x.obj")).is_err());
}

proptest! {
    #[test]
    fn shared_edge_pixels_are_owned_once(
        cx in 8.0..24.0f64, cy in 8.0..24.0f64,
        angles in prop::array::uniform4(0.0..std::f64::consts::TAU),
        radii in prop::array::uniform4(3.0..8.0f64),
        snap in any::<bool>(),
    ) {
        // Convex quad split along the diagonal (a, c). Snapping to whole
        // pixels puts many centers exactly on the shared edge.
        let mut angles = angles;
        angles.sort_by(f64::total_cmp);
        let mut quad: Vec<[f64; 2]> = angles
            .iter()
            .zip(radii)
            .map(|(t, r)| {
                let p = [cx + r * t.cos(), cy + r * t.sin()];
                if snap { p.map(|v| v.round() + 0.5) } else { p }
            })
            .collect();
        let e = |a: [f64; 2], b: [f64; 2], p: [f64; 2]| (b[0] - a[0]) * (p[1] - a[1]) - (b[1] - a[1]) * (p[0] - a[0]);
        if e(quad[0], quad[1], quad[2]) > 0.0 {
            quad.reverse();
        }
        let (a, b, c, d) = (quad[0], quad[1], quad[2], quad[3]);
        prop_assume!(e(a, b, c) < 0.0 && e(a, c, d) < 0.0 && e(b, c, d) < 0.0 && e(a, b, d) < 0.0);
        let both = rasterize(&quad, &[1.0; 4], &[[0, 1, 2], [0, 2, 3]], 32, 32).unwrap();
        let first = rasterize(&quad, &[1.0; 4], &[[0, 1, 2]], 32, 32).unwrap();
        let second = rasterize(&quad, &[1.0; 4], &[[0, 2, 3]], 32, 32).unwrap();
        for i in 0..32 * 32 {
            let (s1, s2) = (first.as_slice()[i].is_some(), second.as_slice()[i].is_some());
            prop_assert!(!(s1 && s2), "pixel {} owned by both triangles", i);
            prop_assert_eq!(both.as_slice()[i].is_some(), s1 || s2);
            let center = [(i % 32) as f64 + 0.5, (i / 32) as f64 + 0.5];
            let strictly_in_quad = [(a, b), (b, c), (c, d), (d, a)].iter().all(|(p, q)| e(*p, *q, center) < 0.0);
            if strictly_in_quad {
                prop_assert!(s1 || s2, "interior pixel {} left uncovered", i);
            }
        }
    }
}
