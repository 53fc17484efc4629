use occface::grid::{ColorImage, Grid};
use occface::label_raster::{LabelMap, LandmarkSet};
use occface::losses::{
    cosine_distance, feature_cosine_loss, feature_matching_loss, fisn_total_loss, gan_loss, gan_objective,
    landmark_loss, perceptual_from_features, perceptual_loss, pixel_loss, reg_loss, total_3d_loss,
    ConditionalPair, Discriminator, DiscriminatorOutput, FeatureExtractor, FisnParts, GanMode, Loss3dParts,
    LossWeights, ToyDiscriminator, ToyFeatureExtractor,
};
use occface::morphable::{CoefficientLayout, CoefficientVector, GammaMode};
use occface::rasterizer::RenderBuffer;
use occface::scene_model::Pose;
use occface::{Error, Result};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn lmk_from(points: Vec<[f64; 2]>) -> LandmarkSet {
    LandmarkSet::new(points).unwrap()
}

fn random_lmk(rng: &mut ChaCha8Rng) -> LandmarkSet {
    lmk_from((0..68).map(|_| [rng.random_range(0.0..128.0), rng.random_range(0.0..128.0)]).collect())
}

fn image(w: usize, h: usize, c: [f64; 3]) -> ColorImage {
    Grid::filled(w, h, c).unwrap()
}

/// A render buffer whose first `covered` pixels are face.
fn buffer(color: ColorImage, covered: usize) -> RenderBuffer {
    let (w, h) = (color.width(), color.height());
    let cov: Vec<bool> = (0..w * h).map(|i| i < covered).collect();
    RenderBuffer {
        depth: Grid::from_vec(w, h, cov.iter().map(|&c| if c { 1.0 } else { f64::INFINITY }).collect()).unwrap(),
        region: Grid::from_vec(w, h, cov.iter().map(|&c| c as u8).collect()).unwrap(),
        coverage: Grid::from_vec(w, h, cov).unwrap(),
        color,
    }
}

#[test]
fn default_weight_arithmetic() {
    let w = LossWeights::default();
    let ones = Loss3dParts { landmark: 1.0, pixel: 1.0, reg: 1.0, feature: 1.0 };
    assert!((total_3d_loss(&ones, &w) - 1.60197).abs() < 1e-9);
    let lmk_only = Loss3dParts { landmark: 10.0, ..Default::default() };
    assert!((total_3d_loss(&lmk_only, &w) - 0.016).abs() < 1e-12);
    assert_eq!(total_3d_loss(&Loss3dParts::default(), &w), 0.0);

    let f = FisnParts { gan: 1.0, feature_matching: 1.0, perceptual: 1.0 };
    assert!((fisn_total_loss(&f, &w) - 21.0).abs() < 1e-9);
    let pass = FisnParts { gan: -1.3863, ..Default::default() };
    assert_eq!(fisn_total_loss(&pass, &w), -1.3863);
}

#[test]
fn negative_weights_are_rejected() {
    let w = LossWeights { lambda4: -1.0, ..Default::default() };
    assert!(w.validate().unwrap_err().is_input_error());
}

#[test]
fn landmark_loss_values() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let a = random_lmk(&mut rng);
    assert_eq!(landmark_loss(&a, &a), 0.0);
    assert!((landmark_loss(&a.translated(3.0, 4.0), &a) - 25.0).abs() < 1e-10);
    let b = random_lmk(&mut rng);
    let mut acc = 0.0;
    for i in 0..68 {
        let (p, q) = (a.get(i), b.get(i));
        acc += (p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2);
    }
    assert!((landmark_loss(&a, &b) - acc / 68.0).abs() < 1e-10);
}

#[test]
fn pixel_loss_closed_forms() {
    let target = image(4, 4, [0.3, 0.4, 0.5]);
    let same = buffer(target.clone(), 16);
    let w = Grid::filled(4, 4, 1.0).unwrap();
    assert_eq!(pixel_loss(&target, &same, &w).unwrap().value, 0.0);

    let off = buffer(image(4, 4, [0.4, 0.4, 0.5]), 16);
    assert!((pixel_loss(&target, &off, &w).unwrap().value - 0.1).abs() < 1e-12);

    // Half the mask at weight 1.0 with error 0.2, half at 0.1 with error 0.
    let mut colors = target.clone();
    for i in 0..8 {
        colors.as_mut_slice()[i] = [0.5, 0.4, 0.5];
    }
    let weights = Grid::from_vec(4, 4, (0..16).map(|i| if i < 8 { 1.0 } else { 0.1 }).collect()).unwrap();
    let got = pixel_loss(&target, &buffer(colors, 16), &weights).unwrap();
    assert!((got.value - 0.2 / 1.1).abs() < 1e-12);
    assert!((got.value - 0.18182).abs() < 1e-5);
}

#[test]
fn pixel_loss_ignores_uncovered_pixels_and_flags_empty_mask() {
    let target = image(4, 2, [0.0; 3]);
    let w = Grid::filled(4, 2, 1.0).unwrap();
    let mut colors = image(4, 2, [0.0; 3]);
    colors.as_mut_slice()[7] = [1.0; 3];
    assert_eq!(pixel_loss(&target, &buffer(colors.clone(), 4), &w).unwrap().value, 0.0);
    let empty = pixel_loss(&target, &buffer(colors, 0), &w).unwrap();
    assert!(empty.empty_mask);
    assert_eq!(empty.value, 0.0);
}

#[test]
fn pixel_loss_rejects_misaligned_inputs() {
    let target = image(4, 4, [0.0; 3]);
    let w = Grid::filled(4, 4, 1.0).unwrap();
    let err = pixel_loss(&target, &buffer(image(4, 3, [0.0; 3]), 4), &w).unwrap_err();
    assert!(err.is_input_error());
}

fn coeffs(alpha: Vec<f64>, beta: Vec<f64>) -> CoefficientVector {
    let layout = CoefficientLayout { n_alpha: alpha.len(), n_beta: beta.len(), gamma: GammaMode::Mono };
    let mut c = CoefficientVector::neutral(&layout, Pose::new(0.0, 0.0, 0.0, 1.0, 0.0, 0.0).unwrap());
    c.alpha = alpha;
    c.beta = beta;
    c
}

#[test]
fn reg_loss_closed_forms() {
    let w = LossWeights::default();
    assert_eq!(reg_loss(&coeffs(vec![0.0; 3], vec![0.0; 2]), &w), 0.0);
    assert!((reg_loss(&coeffs(vec![1.0, 1.0], vec![0.0]), &w) - 2.0).abs() < 1e-12);
    let beta = vec![(1000.0f64 / 4.0).sqrt(); 4];
    assert!((reg_loss(&coeffs(vec![0.0], beta), &w) - 1.75).abs() < 1e-12);
}

/// Test extractor whose embedding is chosen by the mean red value.
struct Chooser;

impl FeatureExtractor for Chooser {
    fn layer_count(&self) -> usize {
        1
    }

    fn features(&self, image: &ColorImage) -> Vec<Vec<f64>> {
        let r = image.as_slice()[0][0];
        let e = if r < 0.25 {
            vec![1.0, 0.0]
        } else if r < 0.5 {
            vec![0.0, 1.0]
        } else if r < 0.75 {
            vec![-1.0, 0.0]
        } else {
            vec![0.0, 0.0]
        };
        vec![e]
    }
}

#[test]
fn cosine_loss_cases() {
    let (a, b, c, z) = (image(2, 2, [0.1; 3]), image(2, 2, [0.3; 3]), image(2, 2, [0.6; 3]), image(2, 2, [0.9; 3]));
    assert!(feature_cosine_loss(&a, &a, &Chooser).unwrap().abs() < 1e-10);
    assert!((feature_cosine_loss(&a, &b, &Chooser).unwrap() - 1.0).abs() < 1e-12);
    assert!((feature_cosine_loss(&a, &c, &Chooser).unwrap() - 2.0).abs() < 1e-12);
    assert!(matches!(feature_cosine_loss(&a, &z, &Chooser), Err(Error::DegenerateEmbedding)));
}

#[test]
fn toy_extractor_is_deterministic_and_self_consistent() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let img = Grid::from_vec(32, 32, (0..1024).map(|_| [0; 3].map(|_| rng.random_range(0.0..1.0))).collect()).unwrap();
    let g = ToyFeatureExtractor::new(9);
    assert_eq!(g.features(&img), ToyFeatureExtractor::new(9).features(&img));
    assert_eq!(g.features(&img).len(), g.layer_count());
    assert!(feature_cosine_loss(&img, &img, &g).unwrap().abs() < 1e-10);
    assert_eq!(perceptual_loss(&img, &img, &g).unwrap(), 0.0);
}

#[test]
fn perceptual_closed_form_and_oracle() {
    assert!((perceptual_from_features(&[vec![0.0; 4]], &[vec![1.0; 4]]).unwrap() - 1.0).abs() < 1e-15);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let fa: Vec<Vec<f64>> = [3, 7, 2].iter().map(|&n| (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
    let fb: Vec<Vec<f64>> = fa.iter().map(|l| l.iter().map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
    let mut expected = 0.0;
    for (a, b) in fa.iter().zip(&fb) {
        let mut s = 0.0;
        for i in 0..a.len() {
            s += (a[i] - b[i]).abs();
        }
        expected += s / a.len() as f64;
    }
    assert!((perceptual_from_features(&fa, &fb).unwrap() - expected).abs() < 1e-10);
}

#[test]
fn gan_closed_forms() {
    let tiny = 1e-9;
    assert!(gan_objective(&[1.0 - tiny], &[tiny], GanMode::Standard).unwrap().abs() < 1e-8);
    let half = gan_objective(&[0.5], &[0.5], GanMode::Standard).unwrap();
    assert!((half - 2.0 * 0.5f64.ln()).abs() < 1e-12);
    assert!((half + 1.3863).abs() < 1e-4);
    let literal = gan_objective(&[0.5], &[0.5], GanMode::Literal).unwrap();
    assert!((literal - 1.0).abs() < 1e-12);
    assert!(gan_objective(&[1.0], &[0.5], GanMode::Standard).unwrap_err().is_input_error());
    assert!(gan_objective(&[0.5], &[0.0], GanMode::Literal).is_err());
}

/// Discriminator with fixed output, for closed-form checks.
struct Fixed {
    score: f64,
    features: Vec<Vec<f64>>,
}

impl Discriminator for Fixed {
    fn layer_count(&self) -> usize {
        self.features.len()
    }

    fn evaluate(&self, image: &ColorImage, _labels: &LabelMap) -> Result<DiscriminatorOutput> {
        // Fake images are all-dark in these tests; shift their features.
        let shift = if image.as_slice()[0][0] < 0.5 { 0.5 } else { 0.0 };
        Ok(DiscriminatorOutput {
            score: self.score,
            features: self.features.iter().map(|l| l.iter().map(|v| v + shift).collect()).collect(),
        })
    }
}

#[test]
fn feature_matching_closed_form() {
    let labels = LabelMap::background(2, 2).unwrap();
    let (real, fake) = (image(2, 2, [1.0; 3]), image(2, 2, [0.0; 3]));
    let d = Fixed { score: 0.5, features: vec![vec![0.0; 10]] };
    let rp = [ConditionalPair { image: &real, labels: &labels }];
    let fp = [ConditionalPair { image: &fake, labels: &labels }];
    let dyns: [&dyn Discriminator; 1] = [&d];
    assert!((feature_matching_loss(&dyns, &rp, &fp).unwrap() - 5.0).abs() < 1e-12);
    assert_eq!(feature_matching_loss(&dyns, &rp, &rp).unwrap(), 0.0);
    let g = gan_loss(&dyns, &rp, &fp, GanMode::Standard).unwrap();
    assert!((g - 2.0 * 0.5f64.ln()).abs() < 1e-12);
}

#[test]
fn toy_discriminators_score_inside_unit_interval() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let img = Grid::from_vec(16, 16, (0..256).map(|_| [0; 3].map(|_| rng.random_range(0.0..1.0))).collect()).unwrap();
    let labels = LabelMap::from_vec(16, 16, (0..256).map(|i| (i % 12) as u8).collect()).unwrap();
    for d in ToyDiscriminator::multiscale(3) {
        let out = d.evaluate(&img, &labels).unwrap();
        assert!(out.score > 0.0 && out.score < 1.0);
        assert_eq!(out.features.len(), d.layer_count());
        assert_eq!(out, d.evaluate(&img, &labels).unwrap());
    }
}

#[test]
fn feature_matching_matches_scalar_oracle_on_toy_discriminators() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut rand_img = || Grid::from_vec(16, 16, (0..256).map(|_| [0; 3].map(|_| rng.random_range(0.0..1.0))).collect()).unwrap();
    let (real, fake) = (rand_img(), rand_img());
    let labels = LabelMap::background(16, 16).unwrap();
    let ds = ToyDiscriminator::multiscale(11);
    let dyns: Vec<&dyn Discriminator> = ds.iter().map(|d| d as &dyn Discriminator).collect();
    let rp = [ConditionalPair { image: &real, labels: &labels }];
    let fp = [ConditionalPair { image: &fake, labels: &labels }];
    let mut expected = 0.0;
    for d in &ds {
        let fr = d.evaluate(&real, &labels).unwrap().features;
        let ff = d.evaluate(&fake, &labels).unwrap().features;
        for (a, b) in fr.iter().zip(&ff) {
            for i in 0..a.len() {
                expected += (a[i] - b[i]).abs();
            }
        }
    }
    assert!((feature_matching_loss(&dyns, &rp, &fp).unwrap() - expected).abs() < 1e-10);
}

proptest! {
    #[test]
    fn totals_are_linear_in_parts(
        p in prop::array::uniform4(-10.0..10.0f64),
        q in prop::array::uniform4(-10.0..10.0f64),
        s in -3.0..3.0f64,
    ) {
        let w = LossWeights::default();
        let mk = |v: [f64; 4]| Loss3dParts { landmark: v[0], pixel: v[1], reg: v[2], feature: v[3] };
        let mixed = mk([0, 1, 2, 3].map(|i| p[i] + s * q[i]));
        let lhs = total_3d_loss(&mixed, &w);
        let rhs = total_3d_loss(&mk(p), &w) + s * total_3d_loss(&mk(q), &w);
        prop_assert!((lhs - rhs).abs() < 1e-9);
        let f = |v: [f64; 4]| FisnParts { gan: v[0], feature_matching: v[1], perceptual: v[2] };
        let lhs = fisn_total_loss(&f([0, 1, 2, 3].map(|i| p[i] + s * q[i])), &w);
        prop_assert!((lhs - (fisn_total_loss(&f(p), &w) + s * fisn_total_loss(&f(q), &w))).abs() < 1e-9);
    }

    #[test]
    fn cosine_distance_in_range(a in prop::collection::vec(-5.0..5.0f64, 8), b in prop::collection::vec(-5.0..5.0f64, 8)) {
        prop_assume!(a.iter().any(|v| v.abs() > 1e-6) && b.iter().any(|v| v.abs() > 1e-6));
        let d = cosine_distance(&a, &b).unwrap();
        prop_assert!((0.0..=2.0).contains(&d));
    }

    #[test]
    fn pixel_loss_scale_invariant_and_non_negative(seed in 0u64..500, k in 0.01..100.0f64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut rand_img = || Grid::from_vec(6, 6, (0..36).map(|_| [0; 3].map(|_| rng.random_range(0.0..1.0))).collect()).unwrap();
        let (t, r) = (rand_img(), rand_img());
        let w = Grid::from_vec(6, 6, (0..36).map(|i| if i % 3 == 0 { 0.1 } else { 1.0 }).collect()).unwrap();
        let buf = buffer(r, 20);
        let base = pixel_loss(&t, &buf, &w).unwrap().value;
        let scaled = pixel_loss(&t, &buf, &w.map(|v| v * k)).unwrap().value;
        prop_assert!(base >= 0.0);
        prop_assert!((base - scaled).abs() < 1e-12 * base.max(1.0));
    }

    #[test]
    fn landmark_and_reg_losses_non_negative(seed in 0u64..500) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (a, b) = (random_lmk(&mut rng), random_lmk(&mut rng));
        prop_assert!(landmark_loss(&a, &b) >= 0.0);
        let c = coeffs((0..4).map(|_| rng.random_range(-3.0..3.0)).collect(), (0..4).map(|_| rng.random_range(-3.0..3.0)).collect());
        prop_assert!(reg_loss(&c, &LossWeights::default()) >= 0.0);
    }
}
