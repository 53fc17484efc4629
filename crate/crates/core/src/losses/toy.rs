//! Seeded stand-ins for trained networks: average-pool pyramids followed by
//! fixed random 1×1 projections and `tanh`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::{Discriminator, DiscriminatorOutput, FeatureExtractor};
use crate::error::{Error, Result};
use crate::grid::ColorImage;
use crate::label_raster::{class, LabelMap};

/// Channel-interleaved (`HWC`) feature map.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap {
    pub width: usize,
    pub height: usize,
    pub channels: usize,
    pub data: Vec<f64>,
}

impl FeatureMap {
    /// Box-filters an RGB image by `factor` and maps `[0, 1]` to `[-1, 1]`.
    /// Same result as pooling the remapped image, without materializing it.
    pub fn pooled_image(image: &ColorImage, factor: usize) -> Self {
        let (w, h) = (image.width(), image.height());
        let ow = (w / factor.max(1)).max(1);
        let oh = (h / factor.max(1)).max(1);
        let px = image.as_slice();
        let mut data = Vec::with_capacity(ow * oh * 3);
        for oy in 0..oh {
            let (y0, y1) = (oy * h / oh, (oy + 1) * h / oh);
            for ox in 0..ow {
                let (x0, x1) = (ox * w / ow, (ox + 1) * w / ow);
                let mut acc = [0.0; 3];
                for row in px[y0 * w..y1 * w].chunks_exact(w) {
                    for c in &row[x0..x1] {
                        acc[0] += c[0];
                        acc[1] += c[1];
                        acc[2] += c[2];
                    }
                }
                let n = ((y1 - y0) * (x1 - x0)) as f64;
                data.extend(acc.map(|v| 2.0 * v / n - 1.0));
            }
        }
        Self {
            width: ow,
            height: oh,
            channels: 3,
            data,
        }
    }
}

/// Box-filter downsampling by `factor`. Every input pixel lands in exactly
/// one output cell; a side shorter than `factor` collapses to one cell.
pub fn avg_pool(map: &FeatureMap, factor: usize) -> FeatureMap {
    let factor = factor.max(1);
    let ow = (map.width / factor).max(1);
    let oh = (map.height / factor).max(1);
    let c = map.channels;
    let mut data = vec![0.0; ow * oh * c];
    for oy in 0..oh {
        let (y0, y1) = (oy * map.height / oh, (oy + 1) * map.height / oh);
        for ox in 0..ow {
            let (x0, x1) = (ox * map.width / ow, (ox + 1) * map.width / ow);
            let out = &mut data[(oy * ow + ox) * c..][..c];
            for y in y0..y1 {
                for x in x0..x1 {
                    let src = &map.data[(y * map.width + x) * c..][..c];
                    for k in 0..c {
                        out[k] += src[k];
                    }
                }
            }
            let n = ((y1 - y0) * (x1 - x0)) as f64;
            out.iter_mut().for_each(|v| *v /= n);
        }
    }
    FeatureMap {
        width: ow,
        height: oh,
        channels: c,
        data,
    }
}

#[derive(Debug, Clone)]
struct Projection {
    inputs: usize,
    outputs: usize,
    weights: Vec<f64>,
    bias: Vec<f64>,
}

impl Projection {
    fn random(inputs: usize, outputs: usize, rng: &mut ChaCha8Rng) -> Self {
        let w = Normal::new(0.0, 1.5 / (inputs as f64).sqrt()).expect("valid std");
        let b = Normal::new(0.0, 0.1).expect("valid std");
        Self {
            inputs,
            outputs,
            weights: (0..inputs * outputs).map(|_| w.sample(rng)).collect(),
            bias: (0..outputs).map(|_| b.sample(rng)).collect(),
        }
    }

    /// `tanh(W x + b)` at every site.
    fn apply(&self, map: &FeatureMap) -> FeatureMap {
        debug_assert_eq!(map.channels, self.inputs);
        let mut data = Vec::with_capacity(map.width * map.height * self.outputs);
        for px in map.data.chunks_exact(self.inputs) {
            for o in 0..self.outputs {
                let row = &self.weights[o * self.inputs..][..self.inputs];
                let z: f64 = row.iter().zip(px).map(|(w, x)| w * x).sum::<f64>() + self.bias[o];
                data.push(z.tanh());
            }
        }
        FeatureMap {
            width: map.width,
            height: map.height,
            channels: self.outputs,
            data,
        }
    }
}

const CHANNELS: usize = 8;

/// Three layers at cumulative pooling factors 8, 16 and 32, eight channels
/// each. The last layer doubles as the embedding.
#[derive(Debug, Clone)]
pub struct ToyFeatureExtractor {
    layers: Vec<Projection>,
}

impl ToyFeatureExtractor {
    pub fn new(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let layers = (0..3)
            .map(|i| Projection::random(if i == 0 { 3 } else { CHANNELS }, CHANNELS, &mut rng))
            .collect();
        Self { layers }
    }

    /// Pooling factor applied to the image before the first projection.
    pub const INPUT_POOL: usize = 8;

    pub fn feature_maps(&self, image: &ColorImage) -> Vec<FeatureMap> {
        self.feature_maps_from_pooled(FeatureMap::pooled_image(image, Self::INPUT_POOL))
    }

    /// Runs the stack on an input already produced by
    /// [`FeatureMap::pooled_image`] with [`Self::INPUT_POOL`].
    pub fn feature_maps_from_pooled(&self, pooled: FeatureMap) -> Vec<FeatureMap> {
        let mut out: Vec<FeatureMap> = Vec::with_capacity(self.layers.len());
        for layer in &self.layers {
            let input = match out.last() {
                None => pooled.clone(),
                Some(prev) => avg_pool(prev, 2),
            };
            out.push(layer.apply(&input));
        }
        out
    }

    pub fn embedding_from_pooled(&self, pooled: FeatureMap) -> Vec<f64> {
        self.feature_maps_from_pooled(pooled).pop().map(|m| m.data).unwrap_or_default()
    }
}

impl FeatureExtractor for ToyFeatureExtractor {
    fn layer_count(&self) -> usize {
        self.layers.len()
    }

    fn features(&self, image: &ColorImage) -> Vec<Vec<f64>> {
        self.feature_maps(image).into_iter().map(|m| m.data).collect()
    }
}

/// Conditional discriminator over RGB plus a normalized label channel.
/// `input_pool` sets its scale: 1 for full resolution, 2 for half.
#[derive(Debug, Clone)]
pub struct ToyDiscriminator {
    input_pool: usize,
    layers: Vec<Projection>,
    readout: Vec<f64>,
}

impl ToyDiscriminator {
    pub fn new(seed: u64, input_pool: usize) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let layers = vec![
            Projection::random(4, CHANNELS, &mut rng),
            Projection::random(CHANNELS, CHANNELS, &mut rng),
        ];
        let n = Normal::new(0.0, 1.0).expect("valid std");
        let raw: Vec<f64> = (0..CHANNELS).map(|_| n.sample(&mut rng)).collect();
        // L1 norm 4 keeps the logit in [-4, 4].
        let l1: f64 = raw.iter().map(|v| v.abs()).sum::<f64>().max(f64::MIN_POSITIVE);
        let readout = raw.iter().map(|v| 4.0 * v / l1).collect();
        Self {
            input_pool: input_pool.max(1),
            layers,
            readout,
        }
    }

    /// Full-resolution and half-resolution discriminators.
    pub fn multiscale(seed: u64) -> [ToyDiscriminator; 2] {
        [Self::new(seed, 1), Self::new(seed.wrapping_add(1), 2)]
    }
}

impl Discriminator for ToyDiscriminator {
    fn layer_count(&self) -> usize {
        self.layers.len()
    }

    fn evaluate(&self, image: &ColorImage, labels: &LabelMap) -> Result<DiscriminatorOutput> {
        if image.width() != labels.width() || image.height() != labels.height() {
            return Err(Error::invalid("discriminator image and label map differ in size"));
        }
        let data = image
            .as_slice()
            .iter()
            .zip(labels.labels())
            .flat_map(|(c, &l)| {
                [
                    2.0 * c[0] - 1.0,
                    2.0 * c[1] - 1.0,
                    2.0 * c[2] - 1.0,
                    2.0 * l as f64 / class::OCCLUDER as f64 - 1.0,
                ]
            })
            .collect();
        let mut x = avg_pool(
            &FeatureMap {
                width: image.width(),
                height: image.height(),
                channels: 4,
                data,
            },
            self.input_pool,
        );
        let mut features = Vec::with_capacity(self.layers.len());
        for layer in &self.layers {
            x = layer.apply(&avg_pool(&x, 2));
            features.push(x.data.clone());
        }
        let sites = (x.width * x.height) as f64;
        let logit: f64 = x
            .data
            .chunks_exact(CHANNELS)
            .map(|px| px.iter().zip(&self.readout).map(|(a, w)| a * w).sum::<f64>())
            .sum::<f64>()
            / sites;
        Ok(DiscriminatorOutput {
            score: 1.0 / (1.0 + (-logit).exp()),
            features,
        })
    }
}
