//! Semantic label maps: the landmark-derived region map, the two-pass
//! parsing-map completion, and the per-pixel occlusion attention weights.
//!
//! All operations are pure; maps are plain values.

pub mod landmarks;
pub mod polygon;

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Grid, WeightRaster};

pub use landmarks::{frontal_template, group, LandmarkSet, LANDMARK_COUNT};

/// Class IDs of the label table. Stored as the raw pixel value of label PNGs.
pub mod class {
    pub const BACKGROUND: u8 = 0;
    pub const SKIN: u8 = 1;
    pub const LEFT_BROW: u8 = 2;
    pub const RIGHT_BROW: u8 = 3;
    pub const LEFT_EYE: u8 = 4;
    pub const RIGHT_EYE: u8 = 5;
    pub const NOSE: u8 = 6;
    pub const UPPER_LIP: u8 = 7;
    pub const LOWER_LIP: u8 = 8;
    pub const MOUTH_INTERIOR: u8 = 9;
    pub const HAIR: u8 = 10;
    pub const OCCLUDER: u8 = 11;

    pub const COUNT: usize = 12;

    pub const NAMES: [&str; COUNT] = [
        "background",
        "skin",
        "left_brow",
        "right_brow",
        "left_eye",
        "right_eye",
        "nose",
        "upper_lip",
        "lower_lip",
        "mouth_interior",
        "hair",
        "occluder",
    ];

    pub fn is_valid(id: u8) -> bool {
        (id as usize) < COUNT
    }
}

/// Attention weight given to pixels outside the face classes.
pub const OCCLUDED_WEIGHT: f64 = 0.1;

#[derive(Debug, Clone, PartialEq)]
pub struct LabelMap {
    grid: Grid<u8>,
}

impl LabelMap {
    pub fn background(width: usize, height: usize) -> Result<Self> {
        Ok(Self {
            grid: Grid::filled(width, height, class::BACKGROUND)?,
        })
    }

    pub fn from_vec(width: usize, height: usize, labels: Vec<u8>) -> Result<Self> {
        if let Some(i) = labels.iter().position(|&v| !class::is_valid(v)) {
            return Err(Error::invalid(format!(
                "label {} at pixel {} is not in the label table",
                labels[i], i
            )));
        }
        Ok(Self {
            grid: Grid::from_vec(width, height, labels)?,
        })
    }

    /// Remaps a CelebAMask-HQ 19-class parsing map onto the label table.
    pub fn from_celebamask(width: usize, height: usize, labels: &[u8]) -> Result<Self> {
        const MAP: [u8; 19] = [
            class::BACKGROUND,
            class::SKIN,
            class::NOSE,
            class::OCCLUDER, // eyeglasses
            class::LEFT_EYE,
            class::RIGHT_EYE,
            class::LEFT_BROW,
            class::RIGHT_BROW,
            class::BACKGROUND, // ears
            class::BACKGROUND,
            class::MOUTH_INTERIOR,
            class::UPPER_LIP,
            class::LOWER_LIP,
            class::HAIR,
            class::OCCLUDER, // hat
            class::OCCLUDER, // earring
            class::OCCLUDER, // necklace
            class::BACKGROUND, // neck
            class::BACKGROUND, // cloth
        ];
        let remapped = labels
            .iter()
            .map(|&v| {
                MAP.get(v as usize)
                    .copied()
                    .ok_or_else(|| Error::invalid(format!("CelebAMask-HQ label {v} out of range")))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::from_vec(width, height, remapped)
    }

    pub fn width(&self) -> usize {
        self.grid.width()
    }

    pub fn height(&self) -> usize {
        self.grid.height()
    }

    pub fn get(&self, x: usize, y: usize) -> u8 {
        *self.grid.get(x, y)
    }

    pub fn labels(&self) -> &[u8] {
        self.grid.as_slice()
    }

    pub fn grid(&self) -> &Grid<u8> {
        &self.grid
    }

    pub fn count(&self, id: u8) -> usize {
        self.labels().iter().filter(|&&v| v == id).count()
    }

    /// Sets a pixel; `id` must be a table class.
    pub fn set(&mut self, x: usize, y: usize, id: u8) -> Result<()> {
        if !class::is_valid(id) {
            return Err(Error::invalid(format!("label {id} is not in the label table")));
        }
        self.grid.set(x, y, id);
        Ok(())
    }

    pub fn load_png(path: &Path) -> Result<Self> {
        let img = image::open(path).map_err(|source| Error::Image {
            path: path.to_path_buf(),
            source,
        })?;
        let image::DynamicImage::ImageLuma8(gray) = img else {
            return Err(Error::invalid(format!(
                "{}: label maps must be 8-bit single-channel PNGs",
                path.display()
            )));
        };
        let (w, h) = (gray.width() as usize, gray.height() as usize);
        Self::from_vec(w, h, gray.into_raw())
            .map_err(|e| Error::invalid(format!("{}: {e}", path.display())))
    }

    pub fn save_png(&self, path: &Path) -> Result<()> {
        let img = image::GrayImage::from_raw(
            self.width() as u32,
            self.height() as u32,
            self.labels().to_vec(),
        )
        .expect("dimensions checked at construction");
        img.save_with_format(path, image::ImageFormat::Png)
            .map_err(|source| Error::Image {
                path: path.to_path_buf(),
                source,
            })
    }
}

/// Skin classes `O` and facial-feature classes `S` used by the merge.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LabelClassSets {
    skin: Vec<u8>,
    features: Vec<u8>,
}

impl Default for LabelClassSets {
    fn default() -> Self {
        Self {
            skin: vec![class::SKIN],
            features: vec![
                class::LEFT_BROW,
                class::RIGHT_BROW,
                class::LEFT_EYE,
                class::RIGHT_EYE,
                class::NOSE,
                class::UPPER_LIP,
                class::LOWER_LIP,
            ],
        }
    }
}

impl LabelClassSets {
    pub fn new(mut skin: Vec<u8>, mut features: Vec<u8>) -> Result<Self> {
        skin.sort_unstable();
        skin.dedup();
        features.sort_unstable();
        features.dedup();
        for &id in skin.iter().chain(&features) {
            if !class::is_valid(id) {
                return Err(Error::invalid(format!("class {id} is not in the label table")));
            }
            if id == class::BACKGROUND {
                return Err(Error::invalid("class sets may not contain background"));
            }
        }
        if let Some(id) = skin.iter().find(|id| features.contains(id)) {
            return Err(Error::invalid(format!(
                "class {id} appears in both the skin and feature sets"
            )));
        }
        Ok(Self { skin, features })
    }

    /// Re-validates after deserialization.
    pub fn validated(self) -> Result<Self> {
        Self::new(self.skin, self.features)
    }

    pub fn skin(&self) -> &[u8] {
        &self.skin
    }

    pub fn features(&self) -> &[u8] {
        &self.features
    }

    pub fn is_skin(&self, id: u8) -> bool {
        self.skin.contains(&id)
    }

    pub fn is_feature(&self, id: u8) -> bool {
        self.features.contains(&id)
    }

    pub fn is_face(&self, id: u8) -> bool {
        self.is_skin(id) || self.is_feature(id)
    }
}

/// Behavior of the feature pass for pixels where neither map holds a
/// feature class.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MergeMode {
    /// Keep whatever the skin pass wrote.
    #[default]
    RetainSkinPass,
    /// Copy `a` again, discarding skin recovered from `b`.
    Literal,
}

/// Polygons of the landmark-derived regions, in paint order.
///
/// - skin: convex hull of jaw and brow points (0–26)
/// - brows: 17–21 and 22–26 as closed polylines
/// - eyes: 36–41 and 42–47
/// - nose: 27, 31, 32, 33, 34, 35 (bridge points 28–30 fall inside)
/// - lips: outer ring only, split along the corner chord 48–54 into the
///   upper (48–54) and lower (54–59, 48) halves
pub fn region_polygons(lmk: &LandmarkSet) -> Vec<(u8, Vec<[f64; 2]>)> {
    let pts = lmk.points();
    let take = |r: std::ops::Range<usize>| pts[r].to_vec();
    let skin_pts: Vec<[f64; 2]> = pts[0..27].to_vec();
    let nose: Vec<[f64; 2]> = [27, 31, 32, 33, 34, 35].iter().map(|&i| pts[i]).collect();
    let upper: Vec<[f64; 2]> = pts[48..=54].to_vec();
    let lower: Vec<[f64; 2]> = pts[54..60].iter().chain(std::iter::once(&pts[48])).copied().collect();
    vec![
        (class::SKIN, polygon::convex_hull(&skin_pts)),
        (class::LEFT_BROW, take(group::LEFT_BROW)),
        (class::RIGHT_BROW, take(group::RIGHT_BROW)),
        (class::LEFT_EYE, take(group::LEFT_EYE)),
        (class::RIGHT_EYE, take(group::RIGHT_EYE)),
        (class::NOSE, nose),
        (class::UPPER_LIP, upper),
        (class::LOWER_LIP, lower),
    ]
}

/// Builds the landmark-derived region map. Later regions overwrite earlier
/// ones, so features are painted over skin.
pub fn regions_from_landmarks(lmk: &LandmarkSet, width: usize, height: usize) -> Result<LabelMap> {
    let mut grid = Grid::filled(width, height, class::BACKGROUND)?;
    for (id, poly) in region_polygons(lmk) {
        polygon::fill_polygon(&poly, width, height, |x, y| grid.set(x, y, id));
    }
    Ok(LabelMap { grid })
}

/// Completes a parsing map `a` with a landmark-derived map `b`: a skin pass
/// over `O`, then a feature pass over `S`.
pub fn merge_maps(
    a: &LabelMap,
    b: &LabelMap,
    sets: &LabelClassSets,
    mode: MergeMode,
) -> Result<LabelMap> {
    if !a.grid.same_dims(&b.grid) {
        return Err(Error::invalid(format!(
            "label maps differ in size: {}x{} vs {}x{}",
            a.width(),
            a.height(),
            b.width(),
            b.height()
        )));
    }
    let labels = a
        .labels()
        .iter()
        .zip(b.labels())
        .map(|(&ai, &bi)| merge_pixel(ai, bi, sets, mode))
        .collect();
    Ok(LabelMap {
        grid: Grid::from_vec(a.width(), a.height(), labels)?,
    })
}

#[inline]
fn merge_pixel(a: u8, b: u8, sets: &LabelClassSets, mode: MergeMode) -> u8 {
    let skin_pass = if sets.is_skin(a) {
        a
    } else if sets.is_skin(b) {
        b
    } else {
        a
    };
    if sets.is_feature(a) {
        a
    } else if sets.is_feature(b) {
        b
    } else {
        match mode {
            MergeMode::RetainSkinPass => skin_pass,
            MergeMode::Literal => a,
        }
    }
}

/// Per-pixel photometric weights: 1 on face classes (`O ∪ S`) of the input
/// parsing map, [`OCCLUDED_WEIGHT`] elsewhere.
pub fn occlusion_attention(m_alpha: &LabelMap, sets: &LabelClassSets) -> WeightRaster {
    m_alpha
        .grid
        .map(|&id| if sets.is_face(id) { 1.0 } else { OCCLUDED_WEIGHT })
}
