//! Closed-form similarity alignment of model landmarks to image landmarks.

use crate::error::{Error, Result};
use crate::label_raster::LandmarkSet;
use crate::morphable::MorphableModel;
use crate::scene_model::Pose;

/// Least-squares scale, in-plane rotation (as roll) and translation that
/// map the mean shape's landmark vertices onto `lmk` under the frontal
/// camera (pitch = yaw = 0).
///
/// With `a = f cos(roll)` and `b = f sin(roll)` the projection is linear:
/// `u = aX − bY + tx`, `v = −bX − aY + ty`, so the fit is a 4-parameter
/// linear least-squares problem with a closed-form solution.
pub fn init_pose_from_landmarks(model: &MorphableModel, lmk: &LandmarkSet) -> Result<Pose> {
    let mean = model.mean_shape();
    let src: Vec<[f64; 2]> = model
        .landmark_indices()
        .iter()
        .map(|&i| [mean[3 * i as usize], mean[3 * i as usize + 1]])
        .collect();
    let dst = lmk.points();
    let n = src.len() as f64;
    let centroid = |pts: &[[f64; 2]]| {
        let (sx, sy) = pts.iter().fold((0.0, 0.0), |(x, y), p| (x + p[0], y + p[1]));
        [sx / n, sy / n]
    };
    let cs = centroid(&src);
    let cd = centroid(dst);

    let (mut denom, mut num_a, mut num_b, mut spread) = (0.0, 0.0, 0.0, 0.0);
    for (s, d) in src.iter().zip(dst) {
        let (x, y) = (s[0] - cs[0], s[1] - cs[1]);
        let (u, v) = (d[0] - cd[0], d[1] - cd[1]);
        denom += x * x + y * y;
        num_a += x * u - y * v;
        num_b -= y * u + x * v;
        spread += u * u + v * v;
    }
    if !(denom > 1e-12) {
        return Err(Error::Alignment("model landmark vertices are coincident".into()));
    }
    if !(spread > 1e-12) {
        return Err(Error::Alignment("image landmarks are coincident".into()));
    }
    let a = num_a / denom;
    let b = num_b / denom;
    let scale = a.hypot(b);
    if !(scale > 1e-12) || !scale.is_finite() {
        return Err(Error::Alignment(format!("degenerate scale {scale}")));
    }
    let tx = cd[0] - (a * cs[0] - b * cs[1]);
    let ty = cd[1] - (-b * cs[0] - a * cs[1]);
    Pose::new(0.0, 0.0, b.atan2(a), scale, tx, ty)
}
