//! 68-point landmark sets in iBUG order and their text format.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};

pub const LANDMARK_COUNT: usize = 68;

/// Index ranges of the iBUG 68-point layout.
pub mod group {
    use std::ops::Range;

    pub const JAW: Range<usize> = 0..17;
    pub const LEFT_BROW: Range<usize> = 17..22;
    pub const RIGHT_BROW: Range<usize> = 22..27;
    pub const NOSE: Range<usize> = 27..36;
    pub const LEFT_EYE: Range<usize> = 36..42;
    pub const RIGHT_EYE: Range<usize> = 42..48;
    pub const OUTER_LIPS: Range<usize> = 48..60;
    pub const INNER_LIPS: Range<usize> = 60..68;
}

/// 68 ordered image-space points (pixels, y down).
#[derive(Debug, Clone, PartialEq)]
pub struct LandmarkSet {
    points: Vec<[f64; 2]>,
}

impl LandmarkSet {
    pub fn new(points: Vec<[f64; 2]>) -> Result<Self> {
        if points.len() != LANDMARK_COUNT {
            return Err(Error::invalid(format!(
                "landmark set needs {LANDMARK_COUNT} points, got {}",
                points.len()
            )));
        }
        if let Some(i) = points.iter().position(|p| !p[0].is_finite() || !p[1].is_finite()) {
            return Err(Error::invalid(format!("landmark {i} is not finite")));
        }
        Ok(Self { points })
    }

    pub fn points(&self) -> &[[f64; 2]] {
        &self.points
    }

    pub fn get(&self, i: usize) -> [f64; 2] {
        self.points[i]
    }

    pub fn translated(&self, dx: f64, dy: f64) -> Self {
        Self {
            points: self.points.iter().map(|p| [p[0] + dx, p[1] + dy]).collect(),
        }
    }

    /// Parses 68 lines of `x y`. Blank lines are ignored.
    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        let mut points = Vec::with_capacity(LANDMARK_COUNT);
        let mut offset = 0usize;
        let mut lines = 0usize;
        for (lineno, line) in text.split_inclusive('\n').enumerate() {
            let start = offset;
            offset += line.len();
            lines = lineno + 1;
            let trimmed = line.trim();
            if trimmed.is_empty() {
                continue;
            }
            let err = |message: String| Error::Parse {
                path: path.to_path_buf(),
                line: lineno + 1,
                offset: start,
                message,
            };
            let mut fields = trimmed.split_whitespace();
            let (Some(xs), Some(ys), None) = (fields.next(), fields.next(), fields.next()) else {
                return Err(err(format!("expected two numbers, found {trimmed:?}")));
            };
            let x: f64 = xs.parse().map_err(|_| err(format!("bad x value {xs:?}")))?;
            let y: f64 = ys.parse().map_err(|_| err(format!("bad y value {ys:?}")))?;
            if !x.is_finite() || !y.is_finite() {
                return Err(err("non-finite coordinate".into()));
            }
            if points.len() == LANDMARK_COUNT {
                return Err(err(format!(
                    "more than {LANDMARK_COUNT} landmark lines"
                )));
            }
            points.push([x, y]);
        }
        if points.len() != LANDMARK_COUNT {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line: lines,
                offset,
                message: format!(
                    "expected {LANDMARK_COUNT} landmark lines, found {}",
                    points.len()
                ),
            });
        }
        Ok(Self { points })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, path)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::with_capacity(LANDMARK_COUNT * 24);
        for p in &self.points {
            let _ = writeln!(out, "{} {}", p[0], p[1]);
        }
        out
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }
}

/// A frontal 68-point face template in a y-up frame, roughly spanning
/// `[-0.9, 0.9] × [-0.85, 0.6]`.
pub fn frontal_template() -> [[f64; 2]; LANDMARK_COUNT] {
    let mut t = [[0.0; 2]; LANDMARK_COUNT];
    // Jaw: lower half-ellipse from the left temple to the right temple.
    for (k, i) in group::JAW.enumerate() {
        let a = std::f64::consts::PI * (1.0 + k as f64 / 16.0);
        t[i] = [0.9 * a.cos(), 0.2 + 1.05 * a.sin()];
    }
    let brow = [[-0.75, 0.42], [-0.62, 0.55], [-0.45, 0.6], [-0.3, 0.58], [-0.15, 0.5]];
    for k in 0..5 {
        t[17 + k] = brow[k];
        t[26 - k] = [-brow[k][0], brow[k][1]];
    }
    let bridge = [[0.0, 0.4], [0.0, 0.27], [0.0, 0.14], [0.0, 0.0]];
    t[27..31].copy_from_slice(&bridge);
    let nostrils = [[-0.2, -0.07], [-0.1, -0.11], [0.0, -0.13], [0.1, -0.11], [0.2, -0.07]];
    t[31..36].copy_from_slice(&nostrils);
    let eye = [
        [-0.56, 0.3],
        [-0.46, 0.37],
        [-0.34, 0.37],
        [-0.24, 0.3],
        [-0.34, 0.23],
        [-0.46, 0.23],
    ];
    t[36..42].copy_from_slice(&eye);
    // Right eye mirrors the left, starting from the inner corner.
    let mirror = [3, 2, 1, 0, 5, 4];
    for k in 0..6 {
        let p = eye[mirror[k]];
        t[42 + k] = [-p[0], p[1]];
    }
    let outer = [
        [-0.35, -0.45],
        [-0.22, -0.37],
        [-0.08, -0.34],
        [0.0, -0.36],
        [0.08, -0.34],
        [0.22, -0.37],
        [0.35, -0.45],
        [0.22, -0.55],
        [0.08, -0.6],
        [0.0, -0.61],
        [-0.08, -0.6],
        [-0.22, -0.55],
    ];
    t[48..60].copy_from_slice(&outer);
    let inner = [
        [-0.28, -0.45],
        [-0.1, -0.42],
        [0.0, -0.42],
        [0.1, -0.42],
        [0.28, -0.45],
        [0.1, -0.5],
        [0.0, -0.51],
        [-0.1, -0.5],
    ];
    t[60..68].copy_from_slice(&inner);
    t
}
