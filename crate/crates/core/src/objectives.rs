//! Loss components and analysis quantities: SSIM, coarse-to-fine image
//! loss, the contrastive parent-child objective, volume regularizer, total
//! loss composition, and a histogram plug-in mutual-information estimator.
//!
//! Everything here is a pure function of supplied data; no rendering and no
//! gradients.

use crate::error::{Error, Result};

/// Loss term weights.
#[derive(Debug, Clone, PartialEq)]
pub struct LossWeights {
    pub lambda_ssim: f64,
    pub lambda_vol: f64,
    pub lambda_nce: f64,
    pub lambda_e: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights { lambda_ssim: 0.2, lambda_vol: 0.01, lambda_nce: 0.005, lambda_e: 5e-4 }
    }
}

/// RGB image with values in [0, 1], row-major and channel-interleaved.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    width: usize,
    height: usize,
    data: Vec<f32>,
}

impl Image {
    pub fn new(width: usize, height: usize, data: Vec<f32>) -> Result<Self> {
        if width == 0 || height == 0 || data.len() != width * height * 3 {
            return Err(Error::format("image", "buffer does not match dimensions"));
        }
        if data.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::format("image", "values must lie in [0, 1]"));
        }
        Ok(Image { width, height, data })
    }

    /// 8-bit RGB bytes mapped to [0, 1] by division with 255.
    pub fn from_rgb8(width: usize, height: usize, bytes: &[u8]) -> Result<Self> {
        if bytes.len() != width * height * 3 {
            return Err(Error::format("image", "byte buffer does not match dimensions"));
        }
        Image::new(width, height, bytes.iter().map(|&b| b as f32 / 255.0).collect())
    }

    pub fn constant(width: usize, height: usize, value: f32) -> Result<Self> {
        Image::new(width, height, vec![value; width * height * 3])
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    fn at(&self, x: usize, y: usize, c: usize) -> f32 {
        self.data[(y * self.width + x) * 3 + c]
    }

    fn same_shape(&self, other: &Image) -> Result<()> {
        if self.width != other.width || self.height != other.height {
            return Err(Error::ShapeMismatch(format!(
                "images {}x{} vs {}x{}",
                self.width, self.height, other.width, other.height
            )));
        }
        Ok(())
    }
}

/// Rendered/ground-truth pair for one LoD.
#[derive(Debug, Clone)]
pub struct ImagePair {
    pub rendered: Image,
    pub reference: Image,
}

const SSIM_K1: f64 = 0.01;
const SSIM_K2: f64 = 0.03;
const SSIM_WINDOW: usize = 11;
const SSIM_SIGMA: f64 = 1.5;

fn gaussian_kernel(size: usize) -> Vec<f64> {
    let center = (size as f64 - 1.0) / 2.0;
    let mut k: Vec<f64> = (0..size)
        .map(|i| {
            let d = i as f64 - center;
            (-d * d / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp()
        })
        .collect();
    let sum: f64 = k.iter().sum();
    for v in &mut k {
        *v /= sum;
    }
    k
}

/// Horizontal then vertical pass of a separable kernel over one channel of
/// a pixelwise map of two images, valid positions only.
fn filter_valid(
    a: &Image,
    b: &Image,
    channel: usize,
    kernel: &[f64],
    map: impl Fn(f32, f32) -> f64,
) -> Vec<f64> {
    let k = kernel.len();
    let w = a.width;
    let h = a.height;
    let out_w = w - k + 1;
    let out_h = h - k + 1;
    // Horizontal pass.
    let mut tmp = vec![0f64; out_w * h];
    for y in 0..h {
        for x in 0..out_w {
            let mut acc = 0.0;
            for (i, &kv) in kernel.iter().enumerate() {
                acc += kv * map(a.at(x + i, y, channel), b.at(x + i, y, channel));
            }
            tmp[y * out_w + x] = acc;
        }
    }
    // Vertical pass.
    let mut out = vec![0f64; out_w * out_h];
    for y in 0..out_h {
        for x in 0..out_w {
            let mut acc = 0.0;
            for (i, &kv) in kernel.iter().enumerate() {
                acc += kv * tmp[(y + i) * out_w + x];
            }
            out[y * out_w + x] = acc;
        }
    }
    out
}

/// Mean structural similarity over all channels, Gaussian-windowed local
/// statistics with the standard constants and dynamic range 1. Images
/// smaller than the 11x11 window fall back to the largest window that fits.
pub fn ssim(a: &Image, b: &Image) -> Result<f64> {
    a.same_shape(b)?;
    let k = SSIM_WINDOW.min(a.width).min(a.height);
    let kernel = gaussian_kernel(k);
    let c1 = (SSIM_K1 * 1.0) * (SSIM_K1 * 1.0);
    let c2 = (SSIM_K2 * 1.0) * (SSIM_K2 * 1.0);

    let mut total = 0.0;
    let mut count = 0usize;
    for channel in 0..3 {
        let mu_a = filter_valid(a, b, channel, &kernel, |x, _| x as f64);
        let mu_b = filter_valid(a, b, channel, &kernel, |_, y| y as f64);
        let aa = filter_valid(a, b, channel, &kernel, |x, _| (x as f64) * (x as f64));
        let bb = filter_valid(a, b, channel, &kernel, |_, y| (y as f64) * (y as f64));
        let ab = filter_valid(a, b, channel, &kernel, |x, y| (x as f64) * (y as f64));
        for i in 0..mu_a.len() {
            let (ma, mb) = (mu_a[i], mu_b[i]);
            let va = aa[i] - ma * ma;
            let vb = bb[i] - mb * mb;
            let cov = ab[i] - ma * mb;
            let s = ((2.0 * ma * mb + c1) * (2.0 * cov + c2))
                / ((ma * ma + mb * mb + c1) * (va + vb + c2));
            total += s;
            count += 1;
        }
    }
    Ok(total / count as f64)
}

/// Mean absolute error over pixels and channels.
pub fn l1(a: &Image, b: &Image) -> Result<f64> {
    a.same_shape(b)?;
    let sum: f64 = a
        .data
        .iter()
        .zip(&b.data)
        .map(|(x, y)| (*x as f64 - *y as f64).abs())
        .sum();
    Ok(sum / a.data.len() as f64)
}

/// Peak signal-to-noise ratio in dB for unit dynamic range.
pub fn psnr(a: &Image, b: &Image) -> Result<f64> {
    a.same_shape(b)?;
    let mse: f64 = a
        .data
        .iter()
        .zip(&b.data)
        .map(|(x, y)| {
            let d = *x as f64 - *y as f64;
            d * d
        })
        .sum::<f64>()
        / a.data.len() as f64;
    Ok(if mse == 0.0 { f64::INFINITY } else { -10.0 * mse.log10() })
}

/// Coarse-to-fine loss: mean over levels of the L1/SSIM mix.
pub fn c2f_loss(pairs: &[ImagePair], lambda_ssim: f64) -> Result<f64> {
    if pairs.is_empty() {
        return Err(Error::format("c2f", "needs at least one level"));
    }
    let mut total = 0.0;
    for p in pairs {
        let l1v = l1(&p.rendered, &p.reference)?;
        let ssimv = ssim(&p.rendered, &p.reference)?;
        total += (1.0 - lambda_ssim) * l1v + lambda_ssim * (1.0 - ssimv);
    }
    Ok(total / pairs.len() as f64)
}

fn dot(a: &[f32], b: &[f32]) -> f64 {
    a.iter().zip(b).map(|(x, y)| *x as f64 * *y as f64).sum()
}

/// Contrastive parent-child loss on raw attribute vectors.
///
/// The denominator runs over the negatives only (the positive pair is not
/// included), matching the coding-model objective this crate analyzes;
/// `include_positive` switches to the conventional form that adds the
/// positive term to the denominator.
pub fn info_nce(
    attr: &[f32],
    attr_parent: &[f32],
    negatives: &[Vec<f32>],
    tau: f64,
    include_positive: bool,
) -> Result<f64> {
    if negatives.is_empty() {
        return Err(Error::format("info_nce", "needs at least one negative"));
    }
    if attr.len() != attr_parent.len() || negatives.iter().any(|n| n.len() != attr.len()) {
        return Err(Error::ShapeMismatch("attribute vectors differ in length".into()));
    }
    let pos = dot(attr, attr_parent) / tau;
    let mut logits: Vec<f64> = negatives.iter().map(|n| dot(attr, n) / tau).collect();
    if include_positive {
        logits.push(pos);
    }
    // log-sum-exp with max shift
    let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = m + logits.iter().map(|l| (l - m).exp()).sum::<f64>().ln();
    Ok(lse - pos)
}

/// Default temperature and negative count for the contrastive objective.
pub const NCE_TAU: f64 = 0.03;
pub const NCE_NEGATIVES: usize = 100;

/// Volume proxy: sum over Gaussians of the product of the three scale
/// components.
pub fn volume_loss(scales: &[[f64; 3]]) -> f64 {
    scales.iter().map(|s| s[0] * s[1] * s[2]).sum()
}

/// Total objective with the standard weighting.
pub fn total_loss(c2f: f64, vol: f64, nce: f64, rate: f64, w: &LossWeights) -> f64 {
    c2f + w.lambda_vol * vol + w.lambda_nce * nce + w.lambda_e * rate
}

/// Histogram plug-in mutual information between two vector-valued samples,
/// in nats: per dimension, equal-width marginal binning over each
/// variable's own range, averaged across dimensions.
pub fn mi_estimate(x: &[Vec<f64>], y: &[Vec<f64>], bins: usize) -> Result<f64> {
    if x.is_empty() || x.len() != y.len() {
        return Err(Error::ShapeMismatch(format!(
            "sample counts {} vs {}",
            x.len(),
            y.len()
        )));
    }
    let dims = x[0].len();
    if dims == 0 || bins < 1 {
        return Err(Error::format("mi", "needs at least one dimension and one bin"));
    }
    if x.iter().chain(y.iter()).any(|v| v.len() != dims) {
        return Err(Error::ShapeMismatch("sample dimensions differ".into()));
    }
    let n = x.len();

    let bin_index = |v: f64, lo: f64, hi: f64| -> usize {
        if hi <= lo {
            return 0;
        }
        (((v - lo) / (hi - lo) * bins as f64) as usize).min(bins - 1)
    };

    let mut total = 0.0;
    for d in 0..dims {
        let (mut x_lo, mut x_hi) = (f64::INFINITY, f64::NEG_INFINITY);
        let (mut y_lo, mut y_hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for i in 0..n {
            x_lo = x_lo.min(x[i][d]);
            x_hi = x_hi.max(x[i][d]);
            y_lo = y_lo.min(y[i][d]);
            y_hi = y_hi.max(y[i][d]);
        }
        let mut joint = vec![0u64; bins * bins];
        let mut mx = vec![0u64; bins];
        let mut my = vec![0u64; bins];
        for i in 0..n {
            let bx = bin_index(x[i][d], x_lo, x_hi);
            let by = bin_index(y[i][d], y_lo, y_hi);
            joint[bx * bins + by] += 1;
            mx[bx] += 1;
            my[by] += 1;
        }
        // Collect the contribution terms and sum them in value order so the
        // estimate is exactly symmetric in (x, y).
        let mut terms: Vec<f64> = Vec::new();
        for bx in 0..bins {
            for by in 0..bins {
                let c = joint[bx * bins + by];
                if c == 0 {
                    continue;
                }
                let p_xy = c as f64 / n as f64;
                let p_x = mx[bx] as f64 / n as f64;
                let p_y = my[by] as f64 / n as f64;
                terms.push(p_xy * (p_xy / (p_x * p_y)).ln());
            }
        }
        terms.sort_by(f64::total_cmp);
        total += terms.iter().sum::<f64>();
    }
    Ok(total / dims as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha12Rng;

    fn random_image(rng: &mut ChaCha12Rng, w: usize, h: usize) -> Image {
        Image::new(w, h, (0..w * h * 3).map(|_| rng.random_range(0.0..=1.0)).collect()).unwrap()
    }

    #[test]
    fn ssim_identity_and_symmetry() {
        let mut rng = ChaCha12Rng::seed_from_u64(1);
        let a = random_image(&mut rng, 16, 12);
        let b = random_image(&mut rng, 16, 12);
        assert!((ssim(&a, &a).unwrap() - 1.0).abs() < 1e-9);
        assert!((ssim(&a, &b).unwrap() - ssim(&b, &a).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn ssim_prefers_similar_images() {
        // Values away from mid-gray so inversion really differs.
        let mut rng = ChaCha12Rng::seed_from_u64(2);
        let data: Vec<f32> = (0..20 * 20 * 3)
            .map(|_| {
                if rng.random::<bool>() {
                    rng.random_range(0.0..0.3)
                } else {
                    rng.random_range(0.7..1.0)
                }
            })
            .collect();
        let x = Image::new(20, 20, data.clone()).unwrap();
        let inverted = Image::new(20, 20, data.iter().map(|v| 1.0 - v).collect()).unwrap();
        let noisy = Image::new(
            20,
            20,
            data.iter().map(|v| (v + rng.random_range(-0.02..0.02)).clamp(0.0, 1.0)).collect(),
        )
        .unwrap();
        assert!(ssim(&x, &inverted).unwrap() < ssim(&x, &noisy).unwrap());
    }

    #[test]
    fn ssim_closed_form_on_tiny_constant_images() {
        let a = Image::constant(2, 2, 0.25).unwrap();
        let b = Image::constant(2, 2, 0.75).unwrap();
        let c1 = 0.01f64 * 0.01;
        // Variance terms vanish, the C2 factors cancel.
        let expected = (2.0 * 0.25 * 0.75 + c1) / (0.25f64 * 0.25 + 0.75 * 0.75 + c1);
        assert!((ssim(&a, &b).unwrap() - expected).abs() < 1e-9);

        // L1 on the same pair.
        assert!((l1(&a, &b).unwrap() - 0.5).abs() < 1e-9);
    }

    #[test]
    fn ssim_rejects_shape_mismatch() {
        let a = Image::constant(4, 4, 0.5).unwrap();
        let b = Image::constant(5, 4, 0.5).unwrap();
        assert!(ssim(&a, &b).is_err());
    }

    #[test]
    fn c2f_zero_iff_identical() {
        let mut rng = ChaCha12Rng::seed_from_u64(3);
        let imgs: Vec<Image> = (0..3).map(|_| random_image(&mut rng, 13, 11)).collect();
        let identical: Vec<ImagePair> = imgs
            .iter()
            .map(|i| ImagePair { rendered: i.clone(), reference: i.clone() })
            .collect();
        assert!(c2f_loss(&identical, 0.2).unwrap().abs() < 1e-9);

        let perturbed: Vec<ImagePair> = imgs
            .iter()
            .map(|i| ImagePair {
                rendered: i.clone(),
                reference: random_image(&mut rng, 13, 11),
            })
            .collect();
        assert!(c2f_loss(&perturbed, 0.2).unwrap() > 1e-3);
    }

    #[test]
    fn c2f_single_level_reduces_to_weighted_loss() {
        let a = Image::constant(2, 2, 0.25).unwrap();
        let b = Image::constant(2, 2, 0.75).unwrap();
        let pair = ImagePair { rendered: a.clone(), reference: b.clone() };
        let lambda = 0.2;
        let expected = (1.0 - lambda) * l1(&a, &b).unwrap() + lambda * (1.0 - ssim(&a, &b).unwrap());
        assert!((c2f_loss(&[pair], lambda).unwrap() - expected).abs() < 1e-12);
    }

    #[test]
    fn info_nce_uniform_logits() {
        // Positive dot equal to every negative dot -> ln(N).
        let attr = vec![1.0f32, 0.0, 0.0];
        let parent = vec![0.5f32, 0.0, 0.0];
        let negatives: Vec<Vec<f32>> = (0..100).map(|_| vec![0.5f32, 0.0, 0.0]).collect();
        let loss = info_nce(&attr, &parent, &negatives, NCE_TAU, false).unwrap();
        assert!((loss - (100f64).ln()).abs() < 1e-9);
    }

    #[test]
    fn info_nce_unbounded_below_in_literal_form() {
        let attr = vec![1.0f32];
        let negatives: Vec<Vec<f32>> = vec![vec![0.0f32]; 10];
        let weak = info_nce(&attr, &vec![1.0f32], &negatives, 1.0, false).unwrap();
        let strong = info_nce(&attr, &vec![100.0f32], &negatives, 1.0, false).unwrap();
        // A stronger positive drives the literal-form loss below zero.
        assert!(strong < weak);
        assert!(strong < 0.0);

        // The inclusive form stays non-negative.
        let inclusive = info_nce(&attr, &vec![100.0f32], &negatives, 1.0, true).unwrap();
        assert!(inclusive >= 0.0);
    }

    #[test]
    fn info_nce_matches_reference_and_ignores_negative_order() {
        let mut rng = ChaCha12Rng::seed_from_u64(4);
        for _ in 0..20 {
            let dim = 8;
            let attr: Vec<f32> = (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect();
            let parent: Vec<f32> = (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect();
            let mut negatives: Vec<Vec<f32>> = (0..30)
                .map(|_| (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect())
                .collect();
            let tau = 0.03;
            let loss = info_nce(&attr, &parent, &negatives, tau, false).unwrap();

            // Straight-line reference without the log-sum-exp shift.
            let pos: f64 = attr
                .iter()
                .zip(&parent)
                .map(|(a, b)| *a as f64 * *b as f64)
                .sum::<f64>()
                / tau;
            let denom: f64 = negatives
                .iter()
                .map(|n| {
                    (attr.iter().zip(n).map(|(a, b)| *a as f64 * *b as f64).sum::<f64>() / tau)
                        .exp()
                })
                .sum();
            let reference = -(pos.exp() / denom).ln();
            assert!((loss - reference).abs() < 1e-9, "{loss} vs {reference}");

            negatives.reverse();
            let permuted = info_nce(&attr, &parent, &negatives, tau, false).unwrap();
            assert!((loss - permuted).abs() < 1e-12);
        }
    }

    #[test]
    fn info_nce_rejects_empty_negatives() {
        assert!(info_nce(&[1.0], &[1.0], &[], 0.03, false).is_err());
    }

    #[test]
    fn volume_loss_basics() {
        assert_eq!(volume_loss(&[]), 0.0);
        assert_eq!(volume_loss(&[[1.0, 1.0, 1.0]]), 1.0);
        let scales = [[0.5, 1.0, 2.0], [1.5, 0.2, 3.0]];
        let doubled: Vec<[f64; 3]> =
            scales.iter().map(|s| [2.0 * s[0], 2.0 * s[1], 2.0 * s[2]]).collect();
        assert!((volume_loss(&doubled) - 8.0 * volume_loss(&scales)).abs() < 1e-12);
    }

    #[test]
    fn total_loss_is_affine() {
        let w = LossWeights::default();
        let base = total_loss(0.5, 2.0, 3.0, 100.0, &w);
        assert!((total_loss(0.5 + 1.0, 2.0, 3.0, 100.0, &w) - base - 1.0).abs() < 1e-12);
        assert!(
            (total_loss(0.5, 2.0 + 1.0, 3.0, 100.0, &w) - base - w.lambda_vol).abs() < 1e-12
        );
        assert!(
            (total_loss(0.5, 2.0, 3.0 + 1.0, 100.0, &w) - base - w.lambda_nce).abs() < 1e-12
        );
        assert!(
            (total_loss(0.5, 2.0, 3.0, 100.0 + 1.0, &w) - base - w.lambda_e).abs() < 1e-12
        );
    }

    #[test]
    fn mi_identical_uniform_discrete() {
        // 16 distinct bin centers, y = x.
        let mut rng = ChaCha12Rng::seed_from_u64(5);
        let x: Vec<Vec<f64>> =
            (0..100_000).map(|_| vec![rng.random_range(0..16) as f64]).collect();
        let mi = mi_estimate(&x, &x, 16).unwrap();
        let truth = (16f64).ln();
        assert!((mi - truth).abs() < 0.02 * truth, "mi {mi} vs {truth}");
    }

    #[test]
    fn mi_independent_near_zero() {
        let mut rng = ChaCha12Rng::seed_from_u64(6);
        let x: Vec<Vec<f64>> = (0..100_000).map(|_| vec![rng.random::<f64>()]).collect();
        let y: Vec<Vec<f64>> = (0..100_000).map(|_| vec![rng.random::<f64>()]).collect();
        let mi = mi_estimate(&x, &y, 16).unwrap();
        assert!(mi >= 0.0);
        assert!(mi < 0.02, "mi {mi}");
    }

    #[test]
    fn mi_exactly_symmetric() {
        let mut rng = ChaCha12Rng::seed_from_u64(7);
        let x: Vec<Vec<f64>> = (0..5000)
            .map(|_| vec![rng.random::<f64>(), rng.random_range(-3.0..3.0)])
            .collect();
        let y: Vec<Vec<f64>> = x
            .iter()
            .map(|v| vec![v[0] * 0.5 + rng.random::<f64>() * 0.1, rng.random::<f64>()])
            .collect();
        let a = mi_estimate(&x, &y, 16).unwrap();
        let b = mi_estimate(&y, &x, 16).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn psnr_basics() {
        let a = Image::constant(4, 4, 0.5).unwrap();
        assert_eq!(psnr(&a, &a).unwrap(), f64::INFINITY);
        let b = Image::constant(4, 4, 0.6).unwrap();
        let expected = -10.0 * (0.1f64 * 0.1).log10();
        assert!((psnr(&a, &b).unwrap() - expected).abs() < 1e-4);
    }
}
