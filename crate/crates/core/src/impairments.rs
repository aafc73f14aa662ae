//! Noise generators, carrier/timing offsets, interferer synthesis and the
//! calibrated mixer that produces supervised examples.

use std::f64::consts::{PI, TAU};
use std::fmt;

use num_complex::Complex64;
use rand::Rng;

use crate::error::{invalid, Error, Result};
use crate::signal::{complex_gaussian, db_to_linear, power_of, shape_spectrum, IqBuffer, RngStream};
use crate::waveforms::{generate_bits, map_symbols, shape_pulse, BitStream, Scheme, Transmission, TxConfig};

/// Additive noise process.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum NoiseKind {
    Awgn,
    /// First-order autoregressive, `n[k] = rho n[k-1] + w[k]`.
    Ar1 {
        rho: f64,
    },
    /// Power spectral density proportional to `|f|^-alpha`.
    OneOverF {
        alpha: f64,
    },
    /// Bernoulli-Gaussian: rare impulses `amp_ratio` times the background RMS.
    Impulsive {
        p: f64,
        amp_ratio: f64,
    },
}

impl NoiseKind {
    pub const AR1_DEFAULT: NoiseKind = NoiseKind::Ar1 { rho: 0.9 };
    pub const ONE_OVER_F_DEFAULT: NoiseKind = NoiseKind::OneOverF { alpha: 1.0 };
    pub const IMPULSIVE_DEFAULT: NoiseKind = NoiseKind::Impulsive { p: 0.01, amp_ratio: 10.0 };

    pub fn validate(&self) -> Result<()> {
        match *self {
            NoiseKind::Awgn => Ok(()),
            NoiseKind::Ar1 { rho } if rho.abs() < 1.0 => Ok(()),
            NoiseKind::OneOverF { alpha } if alpha > 0.0 && alpha <= 2.0 => Ok(()),
            NoiseKind::Impulsive { p, amp_ratio } if p > 0.0 && p < 1.0 && amp_ratio > 1.0 => Ok(()),
            other => invalid(format!("invalid noise parameters {other:?}")),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            NoiseKind::Awgn => "awgn",
            NoiseKind::Ar1 { .. } => "ar1",
            NoiseKind::OneOverF { .. } => "one_over_f",
            NoiseKind::Impulsive { .. } => "impulsive",
        }
    }
}

impl fmt::Display for NoiseKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            NoiseKind::Awgn => write!(f, "awgn"),
            NoiseKind::Ar1 { rho } => write!(f, "ar1 rho={rho}"),
            NoiseKind::OneOverF { alpha } => write!(f, "one_over_f alpha={alpha}"),
            NoiseKind::Impulsive { p, amp_ratio } => write!(f, "impulsive p={p} amp_ratio={amp_ratio}"),
        }
    }
}

/// Interference waveform family. Frequencies are cycles/sample.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum InterfererKind {
    Tone { f: f64 },
    Lfm { f0: f64, f1: f64 },
    Mod { scheme: Scheme, sps: usize, beta: f64, span: usize },
}

impl InterfererKind {
    pub fn validate(&self) -> Result<()> {
        let ok = |f: f64| f.is_finite() && f.abs() <= 0.5;
        match *self {
            InterfererKind::Tone { f } if ok(f) => Ok(()),
            InterfererKind::Lfm { f0, f1 } if ok(f0) && ok(f1) => Ok(()),
            InterfererKind::Mod { sps, .. } if sps >= 2 => Ok(()),
            other => invalid(format!("invalid interferer {other:?}")),
        }
    }

    pub fn tx(&self) -> Option<Result<TxConfig>> {
        match *self {
            InterfererKind::Mod { scheme, sps, beta, span } => Some(TxConfig::new(scheme, sps, beta, span)),
            _ => None,
        }
    }

    pub fn name(&self) -> String {
        match self {
            InterfererKind::Tone { .. } => "tone".into(),
            InterfererKind::Lfm { .. } => "lfm".into(),
            InterfererKind::Mod { scheme, .. } => scheme.to_string(),
        }
    }

    /// In-band tone: a quarter of the SoI one-sided bandwidth.
    pub fn tone_in_band(beta: f64, soi_sps: usize) -> Self {
        InterfererKind::Tone { f: 0.25 * (1.0 + beta) / soi_sps as f64 }
    }

    /// Out-of-band tone: 1.5 times the SoI one-sided bandwidth.
    pub fn tone_out_of_band(beta: f64, soi_sps: usize) -> Self {
        InterfererKind::Tone { f: 3.0 * (1.0 + beta) / (2.0 * soi_sps as f64) }
    }

    /// Chirp crossing the SoI band: +-4x its one-sided bandwidth, clipped to +-0.45.
    pub fn lfm_default(beta: f64, soi_sps: usize) -> Self {
        let edge = ((1.0 + beta) / (2.0 * soi_sps as f64) * 4.0).min(0.45);
        InterfererKind::Lfm { f0: -edge, f1: edge }
    }
}

/// Mixing parameters for one example.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MixSpec {
    pub es_n0_db: f64,
    /// Signal-to-interference ratio; `+inf` means no interference.
    pub sir_db: f64,
    pub cfo_soi: f64,
    pub cfo_int: f64,
    pub tau_int: usize,
}

impl MixSpec {
    pub fn awgn(es_n0_db: f64) -> Self {
        Self { es_n0_db, sir_db: f64::INFINITY, cfo_soi: 0.0, cfo_int: 0.0, tau_int: 0 }
    }

    pub fn with_sir(es_n0_db: f64, sir_db: f64) -> Self {
        Self { sir_db, ..Self::awgn(es_n0_db) }
    }
}

/// A generated interferer before scaling/offsets.
#[derive(Clone, Debug, PartialEq)]
pub struct Interferer {
    pub kind: InterfererKind,
    pub waveform: IqBuffer,
    /// Bits for modulated interferers, empty otherwise.
    pub bits: BitStream,
    /// Complete symbols contained in the buffer (modulated kinds only).
    pub n_sym: usize,
}

/// Noisy mixture plus everything needed to supervise and score it.
#[derive(Clone, Debug, PartialEq)]
pub struct MixedSignal {
    pub y: IqBuffer,
    /// SoI after its carrier offset.
    pub clean_soi: IqBuffer,
    /// Interference exactly as it appears in `y` (scaled, offset, shifted).
    pub clean_int: IqBuffer,
    /// Scaled interference with its carrier offset but without the timing shift.
    pub int_unshifted: IqBuffer,
    /// `y - clean_soi - clean_int`, the realized noise.
    pub noise: IqBuffer,
    pub tx_bits: BitStream,
    pub int_bits: BitStream,
    pub n_sym: usize,
    pub int_n_sym: usize,
    pub int_kind: Option<InterfererKind>,
    pub noise_kind: NoiseKind,
    pub spec: MixSpec,
    /// SoI power over the SIR measurement region.
    pub soi_power: f64,
    /// First sample of the SIR measurement region (`tau_int`).
    pub region_start: usize,
}

impl MixedSignal {
    pub fn has_interference(&self) -> bool {
        self.spec.sir_db.is_finite()
    }
}

/// Noise per complex sample for a given Es/N0 with unit symbol energy.
pub fn noise_power_for(es_n0_db: f64, sps: usize) -> f64 {
    sps as f64 / db_to_linear(es_n0_db)
}

/// Complex noise with mean power `power` (in expectation).
pub fn gen_noise(kind: NoiseKind, n: usize, power: f64, rng: &RngStream) -> Result<IqBuffer> {
    kind.validate()?;
    if n == 0 {
        return invalid("noise length must be >= 1");
    }
    if !(power > 0.0 && power.is_finite()) {
        return invalid(format!("noise power must be positive, got {power}"));
    }
    let mut r = rng.rng();
    let w = complex_gaussian(&mut r, n);
    let amp = power.sqrt();
    let samples: Vec<Complex64> = match kind {
        NoiseKind::Awgn => w.into_iter().map(|v| v * amp).collect(),
        NoiseKind::Ar1 { rho } => {
            let g = (1.0 - rho * rho).sqrt();
            let mut prev = w[0] / g;
            let mut out = Vec::with_capacity(n);
            out.push(prev * g * amp);
            for &wk in &w[1..] {
                prev = prev * rho + wk;
                out.push(prev * g * amp);
            }
            out
        }
        NoiseKind::OneOverF { alpha } => {
            let gains = one_over_f_gains(n, alpha);
            let rms = (gains.iter().map(|g| g * g).sum::<f64>() / n as f64).sqrt();
            shape_spectrum(&w, |k, _| gains[k] / rms).into_iter().map(|v| v * amp).collect()
        }
        NoiseKind::Impulsive { p, amp_ratio } => {
            let sigma_b = (power / (1.0 + p * amp_ratio * amp_ratio)).sqrt();
            let hits = complex_gaussian(&mut r, n);
            w.iter()
                .zip(&hits)
                .map(|(&b, &h)| {
                    let mut v = b * sigma_b;
                    if r.random::<f64>() < p {
                        v += h * (amp_ratio * sigma_b);
                    }
                    v
                })
                .collect()
        }
    };
    Ok(IqBuffer::from_parts(samples, 1))
}

/// Per-bin amplitude gains `|f|^(-alpha/2)`, DC clamped to the first bin.
pub(crate) fn one_over_f_gains(n: usize, alpha: f64) -> Vec<f64> {
    let f_min = 1.0 / n as f64;
    (0..n)
        .map(|k| {
            let f = crate::signal::fft_bin_freq(k, n).abs().max(f_min);
            f.powf(-alpha / 2.0)
        })
        .collect()
}

/// Rotation by `exp(j 2 pi f k)`.
pub fn apply_cfo(signal: &IqBuffer, f: f64) -> Result<IqBuffer> {
    if !(f.is_finite() && f.abs() <= 0.5) {
        return invalid(format!("frequency offset {f} outside [-0.5, 0.5]"));
    }
    if f == 0.0 {
        return Ok(signal.clone());
    }
    let out = signal.samples().iter().enumerate().map(|(k, &s)| s * Complex64::from_polar(1.0, TAU * f * k as f64)).collect();
    Ok(IqBuffer::from_parts(out, signal.sps()))
}

/// Prepends `tau` zeros and truncates back to the original length.
pub fn apply_timing_offset(signal: &IqBuffer, tau: usize) -> Result<IqBuffer> {
    if tau >= signal.len() {
        return invalid(format!("timing offset {tau} must be below the length {}", signal.len()));
    }
    let mut out = vec![Complex64::new(0.0, 0.0); tau];
    out.extend_from_slice(&signal.samples()[..signal.len() - tau]);
    Ok(IqBuffer::from_parts(out, signal.sps()))
}

/// Synthesizes `n` samples of interference.
///
/// Tones and chirps have unit power and a uniform random phase. Modulated
/// interferers carry every complete pulse that fits in `n` samples and are
/// zero padded up to `n`.
pub fn gen_interferer(kind: InterfererKind, n: usize, rng: &RngStream) -> Result<Interferer> {
    kind.validate()?;
    if n == 0 {
        return invalid("interferer length must be >= 1");
    }
    let mut r = rng.rng();
    match kind {
        InterfererKind::Tone { f } => {
            let phi = r.random::<f64>() * TAU;
            let samples = (0..n).map(|k| Complex64::from_polar(1.0, TAU * f * k as f64 + phi)).collect();
            Ok(Interferer { kind, waveform: IqBuffer::from_parts(samples, 1), bits: BitStream::default(), n_sym: 0 })
        }
        InterfererKind::Lfm { f0, f1 } => {
            let phi = r.random::<f64>() * TAU;
            let slope = if n > 1 { (f1 - f0) / (n - 1) as f64 } else { 0.0 };
            let samples = (0..n)
                .map(|k| {
                    let k = k as f64;
                    Complex64::from_polar(1.0, 2.0 * PI * (f0 * k + 0.5 * slope * k * k) + phi)
                })
                .collect();
            Ok(Interferer { kind, waveform: IqBuffer::from_parts(samples, 1), bits: BitStream::default(), n_sym: 0 })
        }
        InterfererKind::Mod { .. } => {
            let tx = kind.tx().expect("modulated kind")?;
            let n_sym = tx.symbols_in(n).max(1);
            let bits = generate_bits(n_sym * tx.scheme.bits_per_symbol(), &rng.child(1))?;
            let shaped = shape_pulse(&map_symbols(&bits, tx.scheme)?, &tx)?;
            Ok(Interferer { kind, waveform: shaped.fit_to(n), bits, n_sym })
        }
    }
}

/// Builds `y = x e^{j2pi f_x k} + alpha i_tau[k] e^{j2pi f_i k} + n[k]`.
///
/// The interferer is scaled so the measured SoI/interference power ratio over
/// `[tau_int, len)` equals `sir_db`; the noise realization is scaled to the
/// exact per-sample power `sps / (Es/N0)`.
pub fn mix(
    soi: &Transmission,
    interferer: Option<&Interferer>,
    noise_kind: NoiseKind,
    spec: MixSpec,
    rng: &RngStream,
) -> Result<MixedSignal> {
    let n = soi.waveform.len();
    let sps = soi.waveform.sps();
    if !spec.es_n0_db.is_finite() {
        return invalid("Es/N0 must be finite");
    }
    if spec.sir_db.is_nan() || spec.sir_db == f64::NEG_INFINITY {
        return invalid(format!("SIR {} is not allowed", spec.sir_db));
    }
    if spec.tau_int >= n {
        return invalid(format!("timing offset {} must be below the length {n}", spec.tau_int));
    }
    let x = apply_cfo(&soi.waveform, spec.cfo_soi)?;
    let start = spec.tau_int;
    let soi_power = power_of(&x.samples()[start..]);

    let zeros = IqBuffer::zeros(n, sps)?;
    let (clean_int, int_unshifted, int_bits, int_n_sym, int_kind) = match (interferer, spec.sir_db.is_finite()) {
        (_, false) => (zeros.clone(), zeros.clone(), BitStream::default(), 0, None),
        (None, true) => return invalid("a finite SIR needs an interferer"),
        (Some(i), true) => {
            if i.waveform.len() != n {
                return Err(Error::LengthMismatch { expected: n, actual: i.waveform.len() });
            }
            let rotated = apply_cfo(&i.waveform, spec.cfo_int)?.with_sps(sps);
            let shifted = apply_timing_offset(&rotated, start)?;
            let p = power_of(&shifted.samples()[start..]);
            if p <= 0.0 {
                return invalid("interferer has no power in the SIR region");
            }
            let alpha = (soi_power / (p * db_to_linear(spec.sir_db))).sqrt();
            (shifted.scaled(alpha), rotated.scaled(alpha), i.bits.clone(), i.n_sym, Some(i.kind))
        }
    };

    let target = noise_power_for(spec.es_n0_db, sps);
    let raw = gen_noise(noise_kind, n, target, &rng.child(2))?;
    let drawn = raw.scaled((target / power_of(raw.samples())).sqrt());

    let y_samples: Vec<Complex64> = x.samples().iter().zip(clean_int.samples()).zip(drawn.samples()).map(|((a, b), c)| a + b + c).collect();
    let y = IqBuffer::new(y_samples, sps)?;
    let noise =
        IqBuffer::from_parts(y.samples().iter().zip(x.samples()).zip(clean_int.samples()).map(|((y, a), b)| y - a - b).collect(), sps);
    Ok(MixedSignal {
        y,
        clean_soi: x,
        clean_int,
        int_unshifted,
        noise,
        tx_bits: soi.bits.clone(),
        int_bits,
        n_sym: soi.n_sym,
        int_n_sym,
        int_kind,
        noise_kind,
        spec,
        soi_power,
        region_start: start,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signal::{linear_to_db, measure_power, psd_estimate};
    use crate::waveforms::transmit;

    fn lag1(x: &[Complex64]) -> f64 {
        let num: f64 = x.windows(2).map(|w| (w[1] * w[0].conj()).re).sum();
        let den: f64 = x.iter().map(|v| v.norm_sqr()).sum();
        num / den
    }

    #[test]
    fn noise_powers_match() {
        for kind in [NoiseKind::Awgn, NoiseKind::AR1_DEFAULT, NoiseKind::ONE_OVER_F_DEFAULT, NoiseKind::IMPULSIVE_DEFAULT] {
            let n = gen_noise(kind, 200_000, 2.5, &RngStream::new(1, 7)).unwrap();
            let p = measure_power(&n);
            // 1/f power is dominated by a few low bins; impulsive power by ~2000 rare hits
            let tol = match kind {
                NoiseKind::OneOverF { .. } => 0.1,
                NoiseKind::Impulsive { .. } => 0.05,
                _ => 0.02,
            };
            assert!((p / 2.5 - 1.0).abs() < tol, "{kind}: {p}");
        }
    }

    #[test]
    fn ar1_autocorrelation() {
        let white = gen_noise(NoiseKind::Ar1 { rho: 0.0 }, 100_000, 1.0, &RngStream::new(2, 0)).unwrap();
        assert!(lag1(white.samples()).abs() < 0.02);
        let ar = gen_noise(NoiseKind::Ar1 { rho: 0.9 }, 100_000, 1.0, &RngStream::new(2, 1)).unwrap();
        assert!((lag1(ar.samples()) - 0.9).abs() < 0.02);
    }

    #[test]
    fn one_over_f_slope() {
        // least-squares slope of the PSD in dB against log10 f over one decade
        let x = gen_noise(NoiseKind::OneOverF { alpha: 1.0 }, 1 << 18, 1.0, &RngStream::new(3, 0)).unwrap();
        let psd = psd_estimate(&x, 1024).unwrap();
        let (mut sx, mut sy, mut sxx, mut sxy, mut m) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for (f, p) in psd.freqs.iter().zip(&psd.power) {
            if *f >= 0.02 && *f <= 0.2 {
                let lx = f.log10();
                let ly = linear_to_db(*p);
                sx += lx;
                sy += ly;
                sxx += lx * lx;
                sxy += lx * ly;
                m += 1.0;
            }
        }
        let slope = (m * sxy - sx * sy) / (m * sxx - sx * sx);
        assert!((slope + 10.0).abs() < 1.0, "slope {slope} dB/decade");
    }

    #[test]
    fn noise_rejects_bad_parameters() {
        let r = RngStream::new(0, 0);
        assert!(gen_noise(NoiseKind::Ar1 { rho: 1.0 }, 10, 1.0, &r).is_err());
        assert!(gen_noise(NoiseKind::OneOverF { alpha: 2.5 }, 10, 1.0, &r).is_err());
        assert!(gen_noise(NoiseKind::Impulsive { p: 0.0, amp_ratio: 10.0 }, 10, 1.0, &r).is_err());
        assert!(gen_noise(NoiseKind::Impulsive { p: 0.1, amp_ratio: 1.0 }, 10, 1.0, &r).is_err());
        assert!(gen_noise(NoiseKind::Awgn, 0, 1.0, &r).is_err());
        assert!(gen_noise(NoiseKind::Awgn, 10, 0.0, &r).is_err());
    }

    #[test]
    fn cfo_rotation() {
        let x = IqBuffer::new(vec![Complex64::new(1.0, 0.0); 4096], 1).unwrap();
        assert_eq!(apply_cfo(&x, 0.0).unwrap(), x);
        let r = apply_cfo(&x, 0.08).unwrap();
        let psd = psd_estimate(&r, 512).unwrap();
        assert!((psd.peak_frequency() - 0.08).abs() <= 1.0 / 512.0);
        let t = transmit(64, &TxConfig::with_defaults(Scheme::Qpsk, 8).unwrap(), &RngStream::new(1, 0)).unwrap();
        let rt = apply_cfo(&t.waveform, 0.13).unwrap();
        for (a, b) in rt.samples().iter().zip(t.waveform.samples()) {
            assert!((a.norm() - b.norm()).abs() < 1e-12);
        }
        assert!((measure_power(&rt) - measure_power(&t.waveform)).abs() < 1e-12);
        assert!(apply_cfo(&x, 0.6).is_err());
    }

    #[test]
    fn timing_offset() {
        let t = transmit(64, &TxConfig::with_defaults(Scheme::Qpsk, 8).unwrap(), &RngStream::new(1, 1)).unwrap();
        let x = &t.waveform;
        assert_eq!(&apply_timing_offset(x, 0).unwrap(), x);
        let s = apply_timing_offset(x, 40).unwrap();
        assert_eq!(s.len(), x.len());
        assert!(s.samples()[..40].iter().all(|v| v.norm() == 0.0));
        let energy = |v: &[Complex64]| v.iter().map(|c| c.norm_sqr()).sum::<f64>();
        let tail = energy(&x.samples()[x.len() - 40..]);
        assert!((energy(s.samples()) - (energy(x.samples()) - tail)).abs() < 1e-9);
        assert!(apply_timing_offset(x, x.len()).is_err());
    }

    #[test]
    fn interferer_families() {
        let tone = gen_interferer(InterfererKind::Tone { f: 0.1 }, 4096, &RngStream::new(4, 0)).unwrap();
        assert!((measure_power(&tone.waveform) - 1.0).abs() < 1e-12);
        assert!((psd_estimate(&tone.waveform, 512).unwrap().peak_frequency() - 0.1).abs() <= 1.0 / 512.0);

        let n = 4096;
        let lfm = gen_interferer(InterfererKind::Lfm { f0: -0.4, f1: 0.4 }, n, &RngStream::new(4, 1)).unwrap();
        // finite difference of the unwrapped phase is linear from f0 to f1
        let s = lfm.waveform.samples();
        for k in [0usize, 1000, 2047, 3000, n - 2] {
            let inst = (s[k + 1] * s[k].conj()).arg() / TAU;
            let expect = -0.4 + 0.8 * (k as f64 + 0.5) / (n - 1) as f64;
            assert!((inst - expect).abs() < 1e-9, "k={k}: {inst} vs {expect}");
        }

        let kind = InterfererKind::Mod { scheme: Scheme::Qpsk, sps: 32, beta: 0.35, span: 12 };
        let m = gen_interferer(kind, 1 << 15, &RngStream::new(4, 2)).unwrap();
        assert_eq!(m.bits.len(), 2 * m.n_sym);
        let psd = psd_estimate(&m.waveform, 1024).unwrap();
        let peak = psd.power.iter().cloned().fold(0.0, f64::max);
        let occupied = psd.power.iter().filter(|&&p| p >= peak / 2.0).count() as f64 / 1024.0;
        // RRC -3 dB width is 1/sps; the (1 + beta)/sps edge includes the roll-off
        assert!(occupied > 0.8 / 32.0 && occupied < 1.35 / 32.0, "occupied {occupied}");
        assert!(gen_interferer(InterfererKind::Tone { f: 0.7 }, 10, &RngStream::new(0, 0)).is_err());
    }

    fn soi() -> Transmission {
        transmit(256, &TxConfig::with_defaults(Scheme::Qpsk, 8).unwrap(), &RngStream::new(10, 1)).unwrap()
    }

    #[test]
    fn mix_without_interference() {
        let s = soi();
        let m = mix(&s, None, NoiseKind::Awgn, MixSpec::awgn(10.0), &RngStream::new(10, 2)).unwrap();
        assert!(m.clean_int.samples().iter().all(|v| v.norm() == 0.0));
        assert_eq!(m.clean_soi, s.waveform);
        assert!((measure_power(&m.noise) - 0.8).abs() < 1e-12);
        let back = m.y.sub(&m.clean_soi).unwrap().sub(&m.clean_int).unwrap();
        assert_eq!(back, m.noise);
    }

    #[test]
    fn mix_hits_requested_sir() {
        let s = soi();
        let kind = InterfererKind::Mod { scheme: Scheme::Qpsk, sps: 32, beta: 0.35, span: 12 };
        for (sir, tau) in [(-10.0, 0usize), (3.0, 0), (-4.0, 40)] {
            let i = gen_interferer(kind, s.waveform.len(), &RngStream::new(10, 3)).unwrap();
            let spec = MixSpec { tau_int: tau, ..MixSpec::with_sir(10.0, sir) };
            let m = mix(&s, Some(&i), NoiseKind::Awgn, spec, &RngStream::new(10, 4)).unwrap();
            let ps = power_of(&m.clean_soi.samples()[tau..]);
            let pi = power_of(&m.clean_int.samples()[tau..]);
            assert!((linear_to_db(ps / pi) - sir).abs() < 0.01);
            assert!(m.clean_int.samples()[..tau].iter().all(|v| v.norm() == 0.0));
            let back = m.y.sub(&m.clean_soi).unwrap().sub(&m.clean_int).unwrap();
            assert_eq!(back, m.noise);
        }
        assert!(mix(&s, None, NoiseKind::Awgn, MixSpec::with_sir(10.0, 0.0), &RngStream::new(0, 0)).is_err());
        let short = gen_interferer(InterfererKind::Tone { f: 0.1 }, 100, &RngStream::new(0, 0)).unwrap();
        assert!(mix(&s, Some(&short), NoiseKind::Awgn, MixSpec::with_sir(10.0, 0.0), &RngStream::new(0, 0)).is_err());
    }

    #[test]
    fn modulated_interferer_has_complete_pulses() {
        let s = soi();
        for sps in [4usize, 16, 32] {
            let kind = InterfererKind::Mod { scheme: Scheme::Qpsk, sps, beta: 0.35, span: 12 };
            let i = gen_interferer(kind, s.waveform.len(), &RngStream::new(1, sps as u64)).unwrap();
            let tx = kind.tx().unwrap().unwrap();
            assert_eq!(tx.waveform_len(i.n_sym), s.waveform.len());
        }
    }
}
