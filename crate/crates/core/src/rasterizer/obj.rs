//! Minimal Wavefront OBJ with per-vertex colors (`v x y z r g b`).

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::morphable::{CoefficientVector, MorphableModel};

#[derive(Debug, Clone, PartialEq)]
pub struct ObjMesh {
    /// Flat `[x0, y0, z0, ...]`.
    pub vertices: Vec<f64>,
    /// Present only when every `v` record carries a color.
    pub colors: Option<Vec<[f64; 3]>>,
    pub triangles: Vec<[u32; 3]>,
}

impl ObjMesh {
    pub fn n_vertices(&self) -> usize {
        self.vertices.len() / 3
    }
}

/// Serializes with six decimals; face indices are 1-based.
pub fn write_obj(vertices: &[f64], colors: Option<&[[f64; 3]]>, triangles: &[[u32; 3]]) -> String {
    let mut out = String::with_capacity(vertices.len() * 24 + triangles.len() * 16);
    for (i, v) in vertices.chunks_exact(3).enumerate() {
        write!(out, "v {:.6} {:.6} {:.6}", v[0], v[1], v[2]).unwrap();
        if let Some(c) = colors {
            let c = c[i];
            write!(out, " {:.6} {:.6} {:.6}", c[0], c[1], c[2]).unwrap();
        }
        out.push('\n');
    }
    for t in triangles {
        writeln!(out, "f {} {} {}", t[0] + 1, t[1] + 1, t[2] + 1).unwrap();
    }
    out
}

/// Reads `v` and triangular `f` records. Face entries may use the `a/b/c`
/// form; only the position index is kept. Other record types are ignored.
pub fn parse_obj(text: &str, path: &Path) -> Result<ObjMesh> {
    let mut vertices = Vec::new();
    let mut colors = Vec::new();
    let mut all_colored = true;
    let mut triangles = Vec::new();
    let mut offset = 0;
    for (ln, line) in text.split_inclusive('\n').enumerate() {
        let err = |message: String| Error::Parse {
            path: path.to_path_buf(),
            line: ln + 1,
            offset,
            message,
        };
        let mut fields = line.split_whitespace();
        match fields.next() {
            Some("v") => {
                let nums: Vec<f64> = fields
                    .map(|f| f.parse::<f64>().map_err(|e| err(format!("bad number {f:?}: {e}"))))
                    .collect::<Result<_>>()?;
                match nums.len() {
                    3 => all_colored = false,
                    6 => colors.push([nums[3], nums[4], nums[5]]),
                    n => return Err(err(format!("vertex record has {n} numbers"))),
                }
                vertices.extend_from_slice(&nums[..3]);
            }
            Some("f") => {
                let idx: Vec<u32> = fields
                    .map(|f| {
                        let head = f.split('/').next().unwrap_or("");
                        match head.parse::<u32>() {
                            Ok(i) if i >= 1 => Ok(i - 1),
                            _ => Err(err(format!("bad face index {f:?}"))),
                        }
                    })
                    .collect::<Result<_>>()?;
                if idx.len() != 3 {
                    return Err(err(format!("face has {} vertices, expected 3", idx.len())));
                }
                triangles.push([idx[0], idx[1], idx[2]]);
            }
            _ => {}
        }
        offset += line.len();
    }
    let n = vertices.len() / 3;
    if let Some(t) = triangles.iter().find(|t| t.iter().any(|&i| i as usize >= n)) {
        return Err(Error::Parse {
            path: path.to_path_buf(),
            line: 0,
            offset: text.len(),
            message: format!("face {:?} references a missing vertex", t.map(|i| i + 1)),
        });
    }
    Ok(ObjMesh {
        vertices,
        colors: (all_colored && n > 0).then_some(colors),
        triangles,
    })
}

pub fn load_obj(path: &Path) -> Result<ObjMesh> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_obj(&text, path)
}

/// Writes the fitted shape (model space) with clamped albedo as vertex
/// colors.
pub fn export_obj(model: &MorphableModel, coeffs: &CoefficientVector, path: &Path) -> Result<()> {
    let shape = model.assemble_shape(&coeffs.alpha)?;
    let albedo = model.assemble_albedo(&coeffs.beta)?;
    let text = write_obj(&shape, Some(&albedo.values), model.triangles());
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}
