//! Context-conditioned Gaussian prior over attribute channels.
//!
//! Two small MLPs map the concatenated anchor/parent context features to
//! per-channel distribution parameters: one predicts (mean, scale), the
//! other an adaptive quantization step `q = Q0 * (1 + tanh(.))`. Symbol
//! probabilities integrate the Gaussian over the quantization bin. A fitted
//! per-level static prior provides the same interface without any trained
//! weights.
//!
//! All transcendentals in the coding path go through `libm` so encoder and
//! decoder agree bit-exactly everywhere.

use std::io::{Read, Write};

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;

use crate::error::{Error, Result};
use crate::scene::{AttributeSet, OctreeConfig};

pub const WEIGHTS_MAGIC: &[u8; 4] = b"PGW1";

/// Scale floor added after the softplus positivity map.
pub const SIGMA_MIN: f32 = 1e-4;

/// Probability floor per symbol (also the per-symbol cost cap of 16 bits).
pub const P_MIN: f64 = 1.0 / 65536.0;

/// Quantized symbols must fit a signed 16-bit alphabet.
pub const SYMBOL_MIN: i32 = -32768;
pub const SYMBOL_MAX: i32 = 32767;

/// f32 tanh saturates to exactly -1 for large negative inputs; this floor
/// keeps `q` inside its open interval `(0, 2*Q0)`.
const Q_FLOOR_FACTOR: f32 = 1e-6;

/// One hidden layer, ReLU, linear output. Weights are row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    pub input_dim: usize,
    pub hidden_dim: usize,
    pub output_dim: usize,
    pub w1: Vec<f32>,
    pub b1: Vec<f32>,
    pub w2: Vec<f32>,
    pub b2: Vec<f32>,
}

impl Mlp {
    pub fn validate(&self) -> Result<()> {
        if self.w1.len() != self.hidden_dim * self.input_dim
            || self.b1.len() != self.hidden_dim
            || self.w2.len() != self.output_dim * self.hidden_dim
            || self.b2.len() != self.output_dim
        {
            return Err(Error::ShapeMismatch(format!(
                "mlp {}x{}x{} has inconsistent buffer lengths",
                self.input_dim, self.hidden_dim, self.output_dim
            )));
        }
        Ok(())
    }

    pub fn forward(&self, x: &[f32]) -> Result<Vec<f32>> {
        if x.len() != self.input_dim {
            return Err(Error::ShapeMismatch(format!(
                "mlp expects {} inputs, got {}",
                self.input_dim,
                x.len()
            )));
        }
        let mut hidden = vec![0f32; self.hidden_dim];
        for (h, (row, &b)) in hidden
            .iter_mut()
            .zip(self.w1.chunks_exact(self.input_dim).zip(&self.b1))
        {
            let mut acc = b;
            for (&w, &v) in row.iter().zip(x) {
                acc += w * v;
            }
            *h = acc.max(0.0);
        }
        let mut out = vec![0f32; self.output_dim];
        for (o, (row, &b)) in out
            .iter_mut()
            .zip(self.w2.chunks_exact(self.hidden_dim).zip(&self.b2))
        {
            let mut acc = b;
            for (&w, &v) in row.iter().zip(&hidden) {
                acc += w * v;
            }
            *o = acc;
        }
        Ok(out)
    }

    fn zeros(input_dim: usize, hidden_dim: usize, output_dim: usize) -> Self {
        Mlp {
            input_dim,
            hidden_dim,
            output_dim,
            w1: vec![0.0; hidden_dim * input_dim],
            b1: vec![0.0; hidden_dim],
            w2: vec![0.0; output_dim * hidden_dim],
            b2: vec![0.0; output_dim],
        }
    }

    fn seeded(input_dim: usize, hidden_dim: usize, output_dim: usize, rng: &mut ChaCha12Rng) -> Self {
        let mut mlp = Mlp::zeros(input_dim, hidden_dim, output_dim);
        let a1 = 1.0 / (input_dim as f32).sqrt();
        for w in &mut mlp.w1 {
            *w = rng.random_range(-a1..=a1);
        }
        let a2 = 1.0 / (hidden_dim as f32).sqrt();
        for w in &mut mlp.w2 {
            *w = rng.random_range(-a2..=a2);
        }
        mlp
    }

    fn write_to(&self, out: &mut Vec<u8>) {
        out.write_u16::<LittleEndian>(self.input_dim as u16).unwrap();
        out.write_u16::<LittleEndian>(self.hidden_dim as u16).unwrap();
        out.write_u16::<LittleEndian>(self.output_dim as u16).unwrap();
        for v in self.w1.iter().chain(&self.b1).chain(&self.w2).chain(&self.b2) {
            out.write_f32::<LittleEndian>(*v).unwrap();
        }
    }

    fn read_from(r: &mut impl Read) -> Result<Self> {
        let input_dim = r.read_u16::<LittleEndian>().map_err(|_| Error::Truncated("mlp header"))? as usize;
        let hidden_dim = r.read_u16::<LittleEndian>().map_err(|_| Error::Truncated("mlp header"))? as usize;
        let output_dim = r.read_u16::<LittleEndian>().map_err(|_| Error::Truncated("mlp header"))? as usize;
        let mut mlp = Mlp::zeros(input_dim, hidden_dim, output_dim);
        for buf in [&mut mlp.w1, &mut mlp.b1, &mut mlp.w2, &mut mlp.b2] {
            for v in buf.iter_mut() {
                *v = r.read_f32::<LittleEndian>().map_err(|_| Error::Truncated("mlp weights"))?;
            }
        }
        Ok(mlp)
    }
}

/// Weights of the distribution and quantization MLPs.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpWeights {
    pub dist: Mlp,
    pub quant: Mlp,
}

pub const DEFAULT_HIDDEN_DIM: usize = 128;

impl MlpWeights {
    /// Shapes for a context dimension and channel count: both MLPs take the
    /// concatenated (anchor, parent) context; the distribution head emits
    /// (mean, raw scale) per channel, the quantization head one raw step.
    pub fn validate(&self, ctx_dim: usize, channels: usize) -> Result<()> {
        self.dist.validate()?;
        self.quant.validate()?;
        if self.dist.input_dim != 2 * ctx_dim || self.quant.input_dim != 2 * ctx_dim {
            return Err(Error::ShapeMismatch(format!(
                "mlps expect input {} but context gives {}",
                self.dist.input_dim,
                2 * ctx_dim
            )));
        }
        if self.dist.output_dim != 2 * channels {
            return Err(Error::ShapeMismatch(format!(
                "distribution head emits {} values for {} channels",
                self.dist.output_dim, channels
            )));
        }
        if self.quant.output_dim != channels {
            return Err(Error::ShapeMismatch(format!(
                "quantization head emits {} values for {} channels",
                self.quant.output_dim, channels
            )));
        }
        Ok(())
    }

    pub fn zeros(ctx_dim: usize, hidden_dim: usize, channels: usize) -> Self {
        MlpWeights {
            dist: Mlp::zeros(2 * ctx_dim, hidden_dim, 2 * channels),
            quant: Mlp::zeros(2 * ctx_dim, hidden_dim, channels),
        }
    }

    pub fn seeded(ctx_dim: usize, hidden_dim: usize, channels: usize, seed: u64) -> Self {
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        MlpWeights {
            dist: Mlp::seeded(2 * ctx_dim, hidden_dim, 2 * channels, &mut rng),
            quant: Mlp::seeded(2 * ctx_dim, hidden_dim, channels, &mut rng),
        }
    }

    pub fn serialize(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(WEIGHTS_MAGIC);
        self.dist.write_to(&mut out);
        self.quant.write_to(&mut out);
        out
    }

    pub fn deserialize(bytes: &[u8]) -> Result<Self> {
        let mut r = bytes;
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic).map_err(|_| Error::Truncated("weights magic"))?;
        if &magic != WEIGHTS_MAGIC {
            return Err(Error::format("weights file", "bad magic"));
        }
        let dist = Mlp::read_from(&mut r)?;
        let quant = Mlp::read_from(&mut r)?;
        let w = MlpWeights { dist, quant };
        w.dist.validate()?;
        w.quant.validate()?;
        Ok(w)
    }

    pub fn write_to(&self, w: &mut impl Write) -> Result<()> {
        w.write_all(&self.serialize())?;
        Ok(())
    }

    pub fn read_from(r: &mut impl Read) -> Result<Self> {
        let mut bytes = Vec::new();
        r.read_to_end(&mut bytes)?;
        MlpWeights::deserialize(&bytes)
    }
}

/// Per-channel Gaussian parameters and quantization steps.
#[derive(Debug, Clone, PartialEq)]
pub struct EntropyParams {
    pub mu: Vec<f32>,
    pub sigma: Vec<f32>,
    pub q: Vec<f32>,
}

impl EntropyParams {
    pub fn channels(&self) -> usize {
        self.mu.len()
    }
}

fn softplus(x: f32) -> f32 {
    if x > 20.0 {
        x
    } else if x < -20.0 {
        libm::expf(x)
    } else {
        libm::log1pf(libm::expf(x))
    }
}

/// Run both MLPs on the concatenated context and map raw outputs to
/// (mu, sigma, q): sigma through softplus plus floor, q through
/// `Q0 * (1 + tanh(.))` with a relative floor keeping it positive.
pub fn predict_params(
    weights: &MlpWeights,
    h: &[f32],
    h_parent: &[f32],
    cfg: &OctreeConfig,
) -> Result<EntropyParams> {
    let channels = cfg.channels();
    if weights.dist.output_dim != 2 * channels || weights.quant.output_dim != channels {
        return Err(Error::ShapeMismatch(format!(
            "weights predict {} channels but config has {}",
            weights.quant.output_dim, channels
        )));
    }
    let mut x = Vec::with_capacity(h.len() + h_parent.len());
    x.extend_from_slice(h);
    x.extend_from_slice(h_parent);
    let y_dist = weights.dist.forward(&x)?;
    let y_quant = weights.quant.forward(&x)?;

    let mut params = EntropyParams {
        mu: Vec::with_capacity(channels),
        sigma: Vec::with_capacity(channels),
        q: Vec::with_capacity(channels),
    };
    for c in 0..channels {
        params.mu.push(y_dist[c]);
        params.sigma.push(softplus(y_dist[channels + c]) + SIGMA_MIN);
        let q0 = cfg.q0_for_channel(c);
        let q = q0 * (1.0 + libm::tanhf(y_quant[c]));
        params.q.push(q.max(q0 * Q_FLOOR_FACTOR));
    }
    Ok(params)
}

/// Quantized attribute block: integer symbols per channel.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QuantizedAttributes {
    pub symbols: Vec<i32>,
}

impl QuantizedAttributes {
    /// Per-channel reconstruction `k * q`, shared by encoder and decoder.
    pub fn reconstruct(&self, params: &EntropyParams) -> Vec<f32> {
        self.symbols
            .iter()
            .zip(&params.q)
            .map(|(&k, &q)| dequantize(k, q))
            .collect()
    }
}

pub fn dequantize(symbol: i32, q: f32) -> f32 {
    symbol as f32 * q
}

/// Quantize a flattened attribute block: `k = round(a / q)` with ties
/// toward +inf; symbols outside the 16-bit alphabet are an encode error.
pub fn quantize(attrs: &AttributeSet, params: &EntropyParams) -> Result<QuantizedAttributes> {
    let flat = attrs.flatten();
    if flat.len() != params.channels() {
        return Err(Error::ShapeMismatch(format!(
            "{} channels vs {} parameter triples",
            flat.len(),
            params.channels()
        )));
    }
    let mut symbols = Vec::with_capacity(flat.len());
    for (c, (&a, &q)) in flat.iter().zip(&params.q).enumerate() {
        let k = (a as f64 / q as f64 + 0.5).floor();
        if k < SYMBOL_MIN as f64 || k > SYMBOL_MAX as f64 || !k.is_finite() {
            return Err(Error::SymbolOverflow { channel: c, symbol: k as i64 });
        }
        symbols.push(k as i32);
    }
    Ok(QuantizedAttributes { symbols })
}

fn std_normal_cdf_diff(lower: f64, upper: f64) -> f64 {
    // 0.5 * (erf(u / sqrt(2)) - erf(l / sqrt(2))); erf is exactly odd, so
    // the bin probability is exactly symmetric around the mean.
    0.5 * (libm::erf(upper * std::f64::consts::FRAC_1_SQRT_2)
        - libm::erf(lower * std::f64::consts::FRAC_1_SQRT_2))
}

/// Probability of symbol `k` under the bin-integral Gaussian model, floored
/// at 2^-16.
pub fn symbol_probability(k: i32, mu: f64, sigma: f64, q: f64) -> f64 {
    let center = k as f64 * q;
    let upper = (center + q / 2.0 - mu) / sigma;
    let lower = (center - q / 2.0 - mu) / sigma;
    std_normal_cdf_diff(lower, upper).max(P_MIN)
}

/// Information content of one symbol, in bits.
pub fn symbol_bits(k: i32, mu: f64, sigma: f64, q: f64) -> f64 {
    -symbol_probability(k, mu, sigma, q).log2()
}

/// Total estimated bits over anchors and channels.
pub fn entropy_bits<'a>(
    pairs: impl IntoIterator<Item = (&'a QuantizedAttributes, &'a EntropyParams)>,
) -> f64 {
    let mut bits = 0.0;
    for (qa, params) in pairs {
        for (c, &k) in qa.symbols.iter().enumerate() {
            bits += symbol_bits(k, params.mu[c] as f64, params.sigma[c] as f64, params.q[c] as f64);
        }
    }
    bits
}

/// Rate normalized per encoded symbol: `total_bits / (N * C)`.
pub fn normalized_rate(total_bits: f64, num_anchors: usize, cfg: &OctreeConfig) -> f64 {
    if num_anchors == 0 {
        return 0.0;
    }
    total_bits / (num_anchors as f64 * cfg.channels() as f64)
}

/// Fit a static Gaussian prior over a set of attribute blocks: per-channel
/// sample mean and std (floored), with `q = Q0`.
pub fn fit_static_prior<'a>(
    attrs: impl IntoIterator<Item = &'a AttributeSet>,
    cfg: &OctreeConfig,
) -> EntropyParams {
    let channels = cfg.channels();
    let mut sum = vec![0f64; channels];
    let mut sum_sq = vec![0f64; channels];
    let mut n = 0usize;
    for a in attrs {
        for (c, v) in a.flatten().iter().enumerate() {
            sum[c] += *v as f64;
            sum_sq[c] += (*v as f64) * (*v as f64);
        }
        n += 1;
    }
    let mut params = EntropyParams {
        mu: vec![0.0; channels],
        sigma: vec![SIGMA_MIN; channels],
        q: (0..channels).map(|c| cfg.q0_for_channel(c)).collect(),
    };
    if n == 0 {
        return params;
    }
    for c in 0..channels {
        let mean = sum[c] / n as f64;
        let var = (sum_sq[c] / n as f64 - mean * mean).max(0.0);
        params.mu[c] = mean as f32;
        params.sigma[c] = (var.sqrt() as f32).max(SIGMA_MIN);
    }
    params
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_cfg() -> OctreeConfig {
        OctreeConfig { dim_f: 2, dim_s: 2, dim_o: 2, ..Default::default() }
    }

    #[test]
    fn zero_network_predicts_baseline() {
        let cfg = OctreeConfig::default();
        let w = MlpWeights::zeros(64, DEFAULT_HIDDEN_DIM, cfg.channels());
        w.validate(64, cfg.channels()).unwrap();
        let h = vec![0.25; 64];
        let hp = vec![-0.5; 64];
        let p = predict_params(&w, &h, &hp, &cfg).unwrap();
        assert_eq!(p.channels(), 68);
        for c in 0..68 {
            assert_eq!(p.mu[c], 0.0);
            assert!((p.sigma[c] - (0.6931472 + 1e-4)).abs() < 1e-6);
            assert_eq!(p.q[c], cfg.q0_for_channel(c));
        }
        assert_eq!(p.q[0], 1.0);
        assert_eq!(p.q[32], 0.001);
        assert_eq!(p.q[38], 0.2);
    }

    #[test]
    fn q_stays_in_open_interval() {
        let cfg = small_cfg();
        let ctx = 8;
        for seed in 0..20 {
            let w = MlpWeights::seeded(ctx, 16, cfg.channels(), seed);
            let h: Vec<f32> = (0..ctx).map(|i| ((i + 1) as f32 * 0.7).sin()).collect();
            let hp = vec![0.0; ctx];
            let p = predict_params(&w, &h, &hp, &cfg).unwrap();
            for c in 0..cfg.channels() {
                let q0 = cfg.q0_for_channel(c);
                assert!(p.q[c] > 0.0 && p.q[c] < 2.0 * q0);
                assert!(p.sigma[c] >= SIGMA_MIN);
            }
        }
    }

    #[test]
    fn forward_matches_straight_line_reference() {
        // Independent re-implementation with explicit index loops.
        fn reference(mlp: &Mlp, x: &[f32]) -> Vec<f32> {
            let mut h = vec![0f32; mlp.hidden_dim];
            for i in 0..mlp.hidden_dim {
                let mut acc = mlp.b1[i];
                for j in 0..mlp.input_dim {
                    acc += mlp.w1[i * mlp.input_dim + j] * x[j];
                }
                h[i] = if acc > 0.0 { acc } else { 0.0 };
            }
            let mut y = vec![0f32; mlp.output_dim];
            for i in 0..mlp.output_dim {
                let mut acc = mlp.b2[i];
                for j in 0..mlp.hidden_dim {
                    acc += mlp.w2[i * mlp.hidden_dim + j] * h[j];
                }
                y[i] = acc;
            }
            y
        }

        use rand::{Rng, SeedableRng};
        let mut rng = ChaCha12Rng::seed_from_u64(77);
        for seed in 0..10 {
            let w = MlpWeights::seeded(8, 16, 5, seed);
            let x: Vec<f32> = (0..16).map(|_| rng.random_range(-2.0..2.0)).collect();
            for mlp in [&w.dist, &w.quant] {
                let got = mlp.forward(&x).unwrap();
                let want = reference(mlp, &x);
                for (g, w_) in got.iter().zip(&want) {
                    let rel = (g - w_).abs() / w_.abs().max(1e-6);
                    assert!(rel < 1e-6, "forward mismatch {g} vs {w_}");
                }
            }
        }
    }

    #[test]
    fn forward_shape_errors() {
        let w = MlpWeights::zeros(8, 4, 5);
        assert!(w.dist.forward(&vec![0.0; 7]).is_err());
        let cfg = small_cfg();
        assert!(predict_params(&w, &vec![0.0; 8], &vec![0.0; 8], &cfg).is_err());
    }

    #[test]
    fn quantization_rules() {
        let cfg = small_cfg();
        let params = EntropyParams {
            mu: vec![0.0; cfg.channels()],
            sigma: vec![1.0; cfg.channels()],
            q: vec![0.2; cfg.channels()],
        };
        let mut attrs = AttributeSet::zeros(&cfg);
        let q = quantize(&attrs, &params).unwrap();
        assert!(q.symbols.iter().all(|&k| k == 0));
        assert!(q.reconstruct(&params).iter().all(|&v| v == 0.0));

        attrs.f[0] = 0.3; // 0.3 / 0.2 = 1.5 rounds up to 2
        let q = quantize(&attrs, &params).unwrap();
        assert_eq!(q.symbols[0], 2);
        assert!((q.reconstruct(&params)[0] - 0.4).abs() < 1e-6);

        // Exactly representable tie: -1.5 rounds toward +inf to -1.
        let params_q25 = EntropyParams { q: vec![0.25; cfg.channels()], ..params.clone() };
        attrs.f[0] = -0.375;
        let q = quantize(&attrs, &params_q25).unwrap();
        assert_eq!(q.symbols[0], -1);
    }

    #[test]
    fn quantization_error_bound() {
        use rand::{Rng, SeedableRng};
        let cfg = small_cfg();
        let mut rng = ChaCha12Rng::seed_from_u64(2);
        for _ in 0..100 {
            let params = EntropyParams {
                mu: vec![0.0; cfg.channels()],
                sigma: vec![1.0; cfg.channels()],
                q: (0..cfg.channels()).map(|_| rng.random_range(0.01..1.0)).collect(),
            };
            let mut attrs = AttributeSet::zeros(&cfg);
            for v in attrs.f.iter_mut().chain(attrs.s.iter_mut()) {
                *v = rng.random_range(-3.0..3.0);
            }
            for row in attrs.o.iter_mut() {
                for v in row.iter_mut() {
                    *v = rng.random_range(-3.0..3.0);
                }
            }
            let qa = quantize(&attrs, &params).unwrap();
            let rec = qa.reconstruct(&params);
            for ((a, r), q) in attrs.flatten().iter().zip(&rec).zip(&params.q) {
                assert!((a - r).abs() <= q / 2.0 + 1e-5);
            }
        }
    }

    #[test]
    fn symbol_range_overflow_is_an_error() {
        let cfg = small_cfg();
        let mut params = EntropyParams {
            mu: vec![0.0; cfg.channels()],
            sigma: vec![1.0; cfg.channels()],
            q: vec![1.0; cfg.channels()],
        };
        params.q[0] = 1e-6;
        let mut attrs = AttributeSet::zeros(&cfg);
        attrs.f[0] = 1.0; // symbol 10^6 overflows
        assert!(matches!(
            quantize(&attrs, &params),
            Err(Error::SymbolOverflow { channel: 0, .. })
        ));
    }

    #[test]
    fn bin_probability_values() {
        // mu=0, sigma=1, q=1, k=0 -> Phi(0.5) - Phi(-0.5)
        let p = symbol_probability(0, 0.0, 1.0, 1.0);
        assert!((p - 0.3829249).abs() < 1e-6);

        // Symmetry around the mean is exact.
        for k in 1..200 {
            assert_eq!(
                symbol_probability(k, 0.0, 0.8, 0.3),
                symbol_probability(-k, 0.0, 0.8, 0.3)
            );
        }

        // Floor.
        let p = symbol_probability(30_000, 0.0, 0.01, 1.0);
        assert_eq!(p, P_MIN);
    }

    #[test]
    fn bin_probabilities_sum_to_one() {
        for &(mu, sigma, q) in &[(0.0, 1.0, 1.0), (3.7, 2.0, 0.5), (-12.0, 0.3, 0.05)] {
            let mut total = 0.0;
            for k in -4000..=4000 {
                let center = k as f64 * q;
                let upper = (center + q / 2.0 - mu) / sigma;
                let lower = (center - q / 2.0 - mu) / sigma;
                total += std_normal_cdf_diff(lower, upper);
            }
            assert!(total > 1.0 - 1e-3 && total <= 1.0 + 1e-9, "sum {total}");
        }
    }

    #[test]
    fn entropy_bits_basics() {
        // p = 0.5 -> 1 bit: a bin of width q centered at mu covering half
        // the mass. With q = 2 * 0.6744898 * sigma, P(|Z| < 0.6744898) = 0.5.
        let sigma = 1.0;
        let q = 2.0 * 0.674_489_750_196_081_7 * sigma;
        let bits = symbol_bits(0, 0.0, sigma, q);
        assert!((bits - 1.0).abs() < 1e-9);

        // Floored probability costs at most 16 bits.
        let bits = symbol_bits(30_000, 0.0, 0.01, 1.0);
        assert!((bits - 16.0).abs() < 1e-12);

        // Additivity over disjoint sets.
        let cfg = small_cfg();
        let params = EntropyParams {
            mu: vec![0.1; cfg.channels()],
            sigma: vec![0.5; cfg.channels()],
            q: vec![0.25; cfg.channels()],
        };
        let qa1 = QuantizedAttributes { symbols: vec![1; cfg.channels()] };
        let qa2 = QuantizedAttributes { symbols: vec![-2; cfg.channels()] };
        let both = entropy_bits([(&qa1, &params), (&qa2, &params)]);
        let split = entropy_bits([(&qa1, &params)]) + entropy_bits([(&qa2, &params)]);
        assert!((both - split).abs() < 1e-12);
    }

    #[test]
    fn coarser_bins_never_cost_more_in_aggregate() {
        // Doubling every q halves the symbol resolution; on data drawn from
        // the model the re-quantized total rate drops (by about one bit per
        // symbol).
        use rand::SeedableRng as _;
        let cfg = small_cfg();
        let mut rng = ChaCha12Rng::seed_from_u64(31);
        for trial in 0..10 {
            let params = EntropyParams {
                mu: vec![0.0; cfg.channels()],
                sigma: vec![0.2 + 0.3 * trial as f32; cfg.channels()],
                q: vec![0.05 + 0.02 * trial as f32; cfg.channels()],
            };
            let coarse = EntropyParams {
                mu: params.mu.clone(),
                sigma: params.sigma.clone(),
                q: params.q.iter().map(|q| q * 2.0).collect(),
            };
            let blocks: Vec<AttributeSet> = (0..200)
                .map(|_| {
                    let mut a = AttributeSet::zeros(&cfg);
                    for (c, v) in a.f.iter_mut().chain(a.s.iter_mut()).enumerate() {
                        *v = sample_standard_normal(&mut rng) * params.sigma[c];
                    }
                    for row in a.o.iter_mut() {
                        for v in row.iter_mut() {
                            *v = sample_standard_normal(&mut rng) * params.sigma[0];
                        }
                    }
                    a
                })
                .collect();
            let fine_bits: f64 = blocks
                .iter()
                .map(|b| entropy_bits([(&quantize(b, &params).unwrap(), &params)]))
                .sum();
            let coarse_bits: f64 = blocks
                .iter()
                .map(|b| entropy_bits([(&quantize(b, &coarse).unwrap(), &coarse)]))
                .sum();
            assert!(
                coarse_bits <= fine_bits,
                "coarse {coarse_bits} vs fine {fine_bits} at trial {trial}"
            );
        }
    }

    #[test]
    fn fitted_prior_statistics() {
        use rand::SeedableRng;
        let cfg = small_cfg();

        // Constant channel -> sigma floored.
        let blocks: Vec<AttributeSet> = (0..50).map(|_| AttributeSet::zeros(&cfg)).collect();
        let p = fit_static_prior(blocks.iter(), &cfg);
        assert!(p.sigma.iter().all(|&s| s == SIGMA_MIN));
        assert!(p.mu.iter().all(|&m| m == 0.0));
        assert_eq!(p.q[0], cfg.q0_f);

        // Standard-normal channel, n = 10^4 -> mean/std within 0.05.
        let mut rng = ChaCha12Rng::seed_from_u64(6);
        let blocks: Vec<AttributeSet> = (0..10_000)
            .map(|_| {
                let mut a = AttributeSet::zeros(&cfg);
                for v in a.f.iter_mut().chain(a.s.iter_mut()) {
                    *v = sample_standard_normal(&mut rng);
                }
                for row in a.o.iter_mut() {
                    for v in row.iter_mut() {
                        *v = sample_standard_normal(&mut rng);
                    }
                }
                a
            })
            .collect();
        let p = fit_static_prior(blocks.iter(), &cfg);
        for c in 0..cfg.channels() {
            assert!(p.mu[c].abs() < 0.05, "mu[{c}] = {}", p.mu[c]);
            assert!((p.sigma[c] - 1.0).abs() < 0.05, "sigma[{c}] = {}", p.sigma[c]);
        }

        // Fitted prior beats a badly mismatched wide prior on the same data.
        let wide = EntropyParams {
            mu: vec![5.0; cfg.channels()],
            sigma: vec![40.0; cfg.channels()],
            q: p.q.clone(),
        };
        let quantized: Vec<QuantizedAttributes> =
            blocks.iter().take(500).map(|b| quantize(b, &p).unwrap()).collect();
        let fitted_bits = entropy_bits(quantized.iter().map(|qa| (qa, &p)));
        let wide_bits = entropy_bits(quantized.iter().map(|qa| (qa, &wide)));
        assert!(fitted_bits < wide_bits);
    }

    // Box-Muller keeps the test free of extra dependencies.
    fn sample_standard_normal(rng: &mut ChaCha12Rng) -> f32 {
        use rand::Rng;
        let u1: f64 = rng.random_range(1e-12..1.0);
        let u2: f64 = rng.random();
        ((-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()) as f32
    }

    #[test]
    fn weights_roundtrip() {
        let w = MlpWeights::seeded(8, 16, 5, 123);
        let bytes = w.serialize();
        let back = MlpWeights::deserialize(&bytes).unwrap();
        assert_eq!(w, back);
        assert!(MlpWeights::deserialize(b"PGWX").is_err());
        assert!(MlpWeights::deserialize(&bytes[..bytes.len() - 2]).is_err());
    }

    #[test]
    fn normalized_rate_divides_by_symbols() {
        let cfg = small_cfg(); // C = 10
        assert_eq!(normalized_rate(680.0, 10, &cfg), 6.8);
        assert_eq!(normalized_rate(100.0, 0, &cfg), 0.0);
    }
}
