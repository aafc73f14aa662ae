//! Complex-baseband primitives shared by every other module.
//!
//! All arithmetic is `f64`. Buffers carry a samples-per-symbol annotation so
//! downstream code can convert between symbol and sample domains without a
//! separate config object.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rustfft::FftPlanner;

use crate::error::{invalid, Error, Result};

/// Complex baseband sample sequence.
#[derive(Clone, Debug, PartialEq)]
pub struct IqBuffer {
    samples: Vec<Complex64>,
    sps: usize,
}

impl IqBuffer {
    /// Validates length, annotation and finiteness.
    pub fn new(samples: Vec<Complex64>, sps: usize) -> Result<Self> {
        if samples.is_empty() {
            return invalid("IqBuffer must hold at least one sample");
        }
        if sps == 0 {
            return invalid("sps must be >= 1");
        }
        if let Some(k) = samples.iter().position(|s| !(s.re.is_finite() && s.im.is_finite())) {
            return Err(Error::NonFinite(format!("IqBuffer sample {k}")));
        }
        Ok(Self { samples, sps })
    }

    pub fn zeros(len: usize, sps: usize) -> Result<Self> {
        Self::new(vec![Complex64::new(0.0, 0.0); len], sps)
    }

    // Internal constructor for results of operations on valid buffers.
    pub(crate) fn from_parts(samples: Vec<Complex64>, sps: usize) -> Self {
        debug_assert!(!samples.is_empty() && sps >= 1);
        Self { samples, sps }
    }

    pub fn samples(&self) -> &[Complex64] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<Complex64> {
        self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    /// Always false: buffers are non-empty by construction.
    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn sps(&self) -> usize {
        self.sps
    }

    pub fn with_sps(mut self, sps: usize) -> Self {
        self.sps = sps.max(1);
        self
    }

    pub fn scaled(&self, a: f64) -> Self {
        Self::from_parts(self.samples.iter().map(|s| s * a).collect(), self.sps)
    }

    pub fn add(&self, other: &IqBuffer) -> Result<Self> {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &IqBuffer) -> Result<Self> {
        self.zip_with(other, |a, b| a - b)
    }

    fn zip_with(&self, other: &IqBuffer, f: impl Fn(Complex64, Complex64) -> Complex64) -> Result<Self> {
        if self.len() != other.len() {
            return Err(Error::LengthMismatch { expected: self.len(), actual: other.len() });
        }
        let samples = self.samples.iter().zip(&other.samples).map(|(&a, &b)| f(a, b)).collect();
        Ok(Self::from_parts(samples, self.sps))
    }

    /// Truncates or zero-pads on the right to exactly `len` samples.
    pub fn fit_to(&self, len: usize) -> Self {
        let mut samples = self.samples.clone();
        samples.resize(len.max(1), Complex64::new(0.0, 0.0));
        Self::from_parts(samples, self.sps)
    }

    /// Root-mean-square of the complex difference to `other`.
    pub fn rmse(&self, other: &IqBuffer) -> Result<f64> {
        let diff = self.sub(other)?;
        Ok(measure_power(&diff).sqrt())
    }
}

/// Real FIR filter, typically a unit-energy RRC design.
#[derive(Clone, Debug, PartialEq)]
pub struct FirFilter {
    taps: Vec<f64>,
    span_symbols: usize,
    sps: usize,
}

impl FirFilter {
    pub fn new(taps: Vec<f64>, span_symbols: usize, sps: usize) -> Result<Self> {
        if taps.is_empty() {
            return invalid("filter needs at least one tap");
        }
        if taps.iter().any(|t| !t.is_finite()) {
            return Err(Error::NonFinite("filter taps".into()));
        }
        Ok(Self { taps, span_symbols, sps })
    }

    pub fn taps(&self) -> &[f64] {
        &self.taps
    }

    pub fn len(&self) -> usize {
        self.taps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.taps.is_empty()
    }

    pub fn span_symbols(&self) -> usize {
        self.span_symbols
    }

    pub fn sps(&self) -> usize {
        self.sps
    }

    /// Group delay in samples, `(len - 1) / 2`.
    pub fn group_delay(&self) -> usize {
        (self.taps.len() - 1) / 2
    }

    /// Conjugated time reverse. Real symmetric designs map to themselves.
    pub fn matched(&self) -> FirFilter {
        let mut taps = self.taps.clone();
        taps.reverse();
        FirFilter { taps, span_symbols: self.span_symbols, sps: self.sps }
    }
}

/// Seeded, counter-based random stream.
///
/// ChaCha8 with an explicit stream id: equal `(seed, stream_id)` pairs yield
/// identical sequences and different ids give independent keystreams, so a
/// Monte Carlo trial can derive its noise/bits/interference draws without
/// depending on execution order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct RngStream {
    pub seed: u64,
    pub stream_id: u64,
}

impl RngStream {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        Self { seed, stream_id }
    }

    /// Derives an independent sub-stream, e.g. one per (trial, role).
    pub fn child(&self, tag: u64) -> Self {
        Self { seed: self.seed, stream_id: splitmix64(self.stream_id ^ splitmix64(tag.wrapping_add(0x5851_f42d))) }
    }

    pub fn rng(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(self.stream_id);
        rng
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Circularly-symmetric complex Gaussian samples with `E|z|^2 = 1`.
pub fn complex_gaussian<R: rand::Rng + ?Sized>(rng: &mut R, n: usize) -> Vec<Complex64> {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    (0..n)
        .map(|_| {
            let re: f64 = StandardNormal.sample(rng);
            let im: f64 = StandardNormal.sample(rng);
            Complex64::new(re * s, im * s)
        })
        .collect()
}

/// Root-raised-cosine design with `span_symbols * sps + 1` unit-energy taps.
pub fn design_rrc(beta: f64, sps: usize, span_symbols: usize) -> Result<FirFilter> {
    if !(beta > 0.0 && beta <= 1.0) {
        return invalid(format!("RRC roll-off must lie in (0, 1], got {beta}"));
    }
    rrc_taps(beta, sps, span_symbols)
}

/// As [`design_rrc`] but also accepts `beta = 0` (truncated sinc).
pub fn design_rrc_allow_sinc(beta: f64, sps: usize, span_symbols: usize) -> Result<FirFilter> {
    if !(0.0..=1.0).contains(&beta) {
        return invalid(format!("RRC roll-off must lie in [0, 1], got {beta}"));
    }
    rrc_taps(beta, sps, span_symbols)
}

fn rrc_taps(beta: f64, sps: usize, span_symbols: usize) -> Result<FirFilter> {
    if sps < 2 {
        return invalid(format!("RRC needs sps >= 2, got {sps}"));
    }
    if span_symbols < 2 {
        return invalid(format!("RRC needs span >= 2 symbols, got {span_symbols}"));
    }
    let n = span_symbols * sps + 1;
    if n % 2 == 0 {
        return invalid(format!("span * sps + 1 = {n} taps is even; the filter must have odd length"));
    }
    let center = (n / 2) as f64;
    let mut taps: Vec<f64> = (0..n).map(|k| rrc_value((k as f64 - center) / sps as f64, beta)).collect();
    let energy: f64 = taps.iter().map(|t| t * t).sum();
    let norm = energy.sqrt();
    taps.iter_mut().for_each(|t| *t /= norm);
    FirFilter::new(taps, span_symbols, sps)
}

/// Continuous RRC impulse response at `t` symbol periods (unnormalized).
fn rrc_value(t: f64, beta: f64) -> f64 {
    if t.abs() < 1e-12 {
        return 1.0 - beta + 4.0 * beta / PI;
    }
    if beta > 0.0 && (1.0 - (4.0 * beta * t).powi(2)).abs() < 1e-10 {
        // limit at t = +-1/(4 beta)
        let a = PI / (4.0 * beta);
        return beta / 2f64.sqrt() * ((1.0 + 2.0 / PI) * a.sin() + (1.0 - 2.0 / PI) * a.cos());
    }
    let num = (PI * t * (1.0 - beta)).sin() + 4.0 * beta * t * (PI * t * (1.0 + beta)).cos();
    let den = PI * t * (1.0 - (4.0 * beta * t).powi(2));
    num / den
}

/// Full linear convolution; output length `len(signal) + len(taps) - 1`,
/// group delay `(len(taps) - 1) / 2` samples.
pub fn fir_filter(signal: &IqBuffer, filter: &FirFilter) -> IqBuffer {
    let x = signal.samples();
    let h = filter.taps();
    let mut out = vec![Complex64::new(0.0, 0.0); x.len() + h.len() - 1];
    for (i, &xi) in x.iter().enumerate() {
        if xi.re == 0.0 && xi.im == 0.0 {
            continue;
        }
        for (o, &hj) in out[i..i + h.len()].iter_mut().zip(h) {
            *o += xi * hj;
        }
    }
    IqBuffer::from_parts(out, signal.sps())
}

/// Gaussian tail probability `Q(x) = P(Z > x)`.
pub fn qfunc(x: f64) -> f64 {
    0.5 * libm::erfc(x / std::f64::consts::SQRT_2)
}

/// Gray-coded QPSK bit error probability in AWGN, `Q(sqrt(Es/N0))`.
///
/// Each bit rides on one quadrature rail with amplitude `sqrt(Es/2)` and
/// per-rail noise variance `N0/2`, which is what the matched-filter Monte
/// Carlo reproduces.
pub fn theoretical_qpsk_ber(es_n0_db: f64) -> f64 {
    if es_n0_db == f64::INFINITY {
        return 0.0;
    }
    qfunc(db_to_linear(es_n0_db).sqrt())
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

pub fn linear_to_db(x: f64) -> f64 {
    10.0 * x.log10()
}

/// Mean `|x|^2` over the buffer.
pub fn measure_power(signal: &IqBuffer) -> f64 {
    power_of(signal.samples())
}

pub(crate) fn power_of(x: &[Complex64]) -> f64 {
    x.iter().map(|s| s.norm_sqr()).sum::<f64>() / x.len() as f64
}

/// Averaged periodogram with bins ordered from `-0.5` to `0.5 - 1/nfft`.
#[derive(Clone, Debug, PartialEq)]
pub struct Psd {
    /// Bin centre frequencies, cycles/sample.
    pub freqs: Vec<f64>,
    /// Power per bin; sums to the mean power of the input.
    pub power: Vec<f64>,
}

impl Psd {
    pub fn nfft(&self) -> usize {
        self.freqs.len()
    }

    pub fn total_power(&self) -> f64 {
        self.power.iter().sum()
    }

    pub fn peak_frequency(&self) -> f64 {
        let (k, _) = self.power.iter().enumerate().fold((0, f64::MIN), |best, (k, &p)| if p > best.1 { (k, p) } else { best });
        self.freqs[k]
    }

    /// Bin whose centre is nearest to `f`.
    pub fn bin_of(&self, f: f64) -> usize {
        let n = self.nfft() as f64;
        let k = ((f + 0.5) * n).round() as isize;
        k.clamp(0, self.nfft() as isize - 1) as usize
    }
}

/// Welch estimate: Hann window, 50 % overlap, normalized so the bins sum to
/// the mean power of the signal.
pub fn psd_estimate(signal: &IqBuffer, nfft: usize) -> Result<Psd> {
    if nfft < 2 || !nfft.is_power_of_two() {
        return invalid(format!("nfft must be a power of two >= 2, got {nfft}"));
    }
    if nfft > signal.len() {
        return invalid(format!("nfft {nfft} exceeds signal length {}", signal.len()));
    }
    let window: Vec<f64> = (0..nfft).map(|k| 0.5 - 0.5 * (2.0 * PI * k as f64 / nfft as f64).cos()).collect();
    let wpow: f64 = window.iter().map(|w| w * w).sum();
    let fft = FftPlanner::new().plan_fft_forward(nfft);
    let hop = nfft / 2;
    let x = signal.samples();
    let mut acc = vec![0.0; nfft];
    let mut segments = 0usize;
    let mut buf = vec![Complex64::new(0.0, 0.0); nfft];
    let mut start = 0;
    while start + nfft <= x.len() {
        for (b, (s, w)) in buf.iter_mut().zip(x[start..start + nfft].iter().zip(&window)) {
            *b = s * w;
        }
        fft.process(&mut buf);
        for (a, b) in acc.iter_mut().zip(&buf) {
            *a += b.norm_sqr();
        }
        segments += 1;
        start += hop;
    }
    let scale = 1.0 / (segments as f64 * nfft as f64 * wpow);
    let half = nfft / 2;
    let mut power = Vec::with_capacity(nfft);
    let mut freqs = Vec::with_capacity(nfft);
    for j in 0..nfft {
        let k = (j + half) % nfft;
        power.push(acc[k] * scale);
        freqs.push((j as f64 - half as f64) / nfft as f64);
    }
    Ok(Psd { freqs, power })
}

/// Signed frequency of FFT bin `k` out of `n`, cycles/sample.
pub(crate) fn fft_bin_freq(k: usize, n: usize) -> f64 {
    if k < n.div_ceil(2) {
        k as f64 / n as f64
    } else {
        (k as f64 - n as f64) / n as f64
    }
}

/// Applies a real gain per FFT bin (`gain(f)` with `f` in cycles/sample).
pub(crate) fn shape_spectrum(x: &[Complex64], gain: impl Fn(usize, f64) -> f64) -> Vec<Complex64> {
    let n = x.len();
    let mut planner = FftPlanner::new();
    let mut buf = x.to_vec();
    planner.plan_fft_forward(n).process(&mut buf);
    for (k, b) in buf.iter_mut().enumerate() {
        *b *= gain(k, fft_bin_freq(k, n));
    }
    planner.plan_fft_inverse(n).process(&mut buf);
    let inv = 1.0 / n as f64;
    buf.iter_mut().for_each(|b| *b *= inv);
    buf
}
