//! Non-neural receivers and interference cancellers.

use std::f64::consts::{FRAC_PI_2, TAU};

use num_complex::Complex64;
use rustfft::FftPlanner;

use crate::error::{invalid, Error, Result};
use crate::impairments::{apply_cfo, one_over_f_gains, MixedSignal, NoiseKind};
use crate::signal::{db_to_linear, power_of, psd_estimate, shape_spectrum, IqBuffer};
use crate::waveforms::{
    demap_symbols, map_symbols, matched_filter_frontend, sample_symbols, shape_pulse, BitStream, SymbolStream, TxConfig,
};

pub const DEFAULT_NOTCH_RADIUS: f64 = 0.995;
pub const DEFAULT_MEDIAN_WINDOW: usize = 5;
/// Known leading symbols used to pick among the rotational ambiguities.
pub const PHASE_REFERENCE_SYMBOLS: usize = 16;

/// Matched filter and symbol-rate sampling without the decision step.
pub fn mf_symbols(y: &IqBuffer, tx: &TxConfig, n_sym: usize) -> Result<SymbolStream> {
    sample_symbols(&matched_filter_frontend(y, tx), tx, n_sym)
}

/// Matched filter, symbol sampling and hard decisions.
pub fn mf_receiver(y: &IqBuffer, tx: &TxConfig, n_sym: usize) -> Result<BitStream> {
    Ok(demap_symbols(&mf_symbols(y, tx, n_sym)?))
}

/// M-th power frequency estimate in cycles/sample, unambiguous for `|f| < 1/(2M)`.
pub fn estimate_cfo_mpower(signal: &IqBuffer, m: u32) -> Result<f64> {
    if m < 2 {
        return invalid(format!("M-th power estimator needs M >= 2, got {m}"));
    }
    if signal.len() < 2 {
        return invalid("M-th power estimator needs at least 2 samples");
    }
    let z: Vec<Complex64> = signal.samples().iter().map(|s| s.powu(m)).collect();
    let acc: Complex64 = z.windows(2).map(|w| w[1] * w[0].conj()).sum();
    Ok(acc.arg() / (TAU * m as f64))
}

/// Two-stage M-th power estimate for oversampled waveforms.
///
/// Out-of-band noise is masked first (see [`occupied_band`]). The strongest
/// line of the zero-padded spectrum of `z = x^M` gives a coarse frequency
/// within one padded bin; golden-section search then maximizes the
/// periodogram `|sum z[k] exp(-j 2 pi nu k)|` inside that bin.
pub fn estimate_cfo_mpower_refined(signal: &IqBuffer, m: u32) -> Result<f64> {
    if m < 2 {
        return invalid(format!("M-th power estimator needs M >= 2, got {m}"));
    }
    let n = signal.len();
    if n < 16 {
        return invalid("refined M-th power estimator needs at least 16 samples");
    }
    let z: Vec<Complex64> = occupied_band(signal).iter().map(|s| s.powu(m)).collect();
    let pad = (4 * n).next_power_of_two();
    let mut spec = z.clone();
    spec.resize(pad, Complex64::new(0.0, 0.0));
    FftPlanner::new().plan_fft_forward(pad).process(&mut spec);
    let peak = (0..pad).max_by(|&a, &b| spec[a].norm_sqr().total_cmp(&spec[b].norm_sqr())).expect("non-empty");
    let nu = crate::signal::fft_bin_freq(peak, pad);

    let nu = golden_peak(|f| dtft(&z, f).norm_sqr(), nu - 1.0 / pad as f64, nu + 1.0 / pad as f64);
    Ok(nu / m as f64)
}

/// Width of the occupancy mask in units of the symbol rate. Covers the RRC
/// bandwidth `(1 + beta)` for any roll-off up to 0.5.
pub const OCCUPANCY_WIDTH: f64 = 1.5;

/// Keeps the `OCCUPANCY_WIDTH / sps` wide band holding the most energy and
/// zeroes every other FFT bin. Waveforms at one sample per symbol pass through.
pub fn occupied_band(signal: &IqBuffer) -> Vec<Complex64> {
    let n = signal.len();
    let width = ((OCCUPANCY_WIDTH / signal.sps() as f64) * n as f64).ceil() as usize;
    if width >= n {
        return signal.samples().to_vec();
    }
    let mut planner = FftPlanner::new();
    let mut spec = signal.samples().to_vec();
    planner.plan_fft_forward(n).process(&mut spec);
    let p: Vec<f64> = spec.iter().map(|c| c.norm_sqr()).collect();
    let mut acc: f64 = p[..width].iter().sum();
    let (mut best, mut best_start) = (acc, 0);
    for start in 1..n {
        acc += p[(start + width - 1) % n] - p[start - 1];
        if acc > best {
            best = acc;
            best_start = start;
        }
    }
    for (k, c) in spec.iter_mut().enumerate() {
        if (k + n - best_start) % n >= width {
            *c = Complex64::new(0.0, 0.0);
        }
    }
    planner.plan_fft_inverse(n).process(&mut spec);
    spec.iter().map(|c| c / n as f64).collect()
}

/// Removes a frequency offset `f` by rotating with `exp(-j 2 pi f k)`.
pub fn derotate(signal: &IqBuffer, f: f64) -> Result<IqBuffer> {
    apply_cfo(signal, -f)
}

/// Blind constant-phase correction for constellations with four-fold symmetry.
///
/// Both Gray QPSK and 16-QAM have a negative real fourth moment, so
/// `arg(-sum s^4) / 4` estimates the common rotation modulo `pi/2`.
pub fn fourth_power_phase(symbols: &SymbolStream) -> f64 {
    let acc: Complex64 = symbols.symbols.iter().map(|s| s.powu(4)).sum();
    (-acc).arg() / 4.0
}

/// Rotates `symbols` by the multiple of `pi/2` that best matches the first
/// `n_known` reference symbols.
pub fn resolve_phase_ambiguity(symbols: &SymbolStream, reference: &SymbolStream, n_known: usize) -> Result<SymbolStream> {
    let k = n_known.min(symbols.symbols.len()).min(reference.symbols.len());
    if k == 0 {
        return invalid("phase resolution needs at least one reference symbol");
    }
    let best = (0..4)
        .map(|q| {
            let rot = Complex64::from_polar(1.0, q as f64 * FRAC_PI_2);
            let d: f64 = symbols.symbols[..k].iter().zip(&reference.symbols[..k]).map(|(s, r)| (s * rot - r).norm_sqr()).sum();
            (d, rot)
        })
        .min_by(|a, b| a.0.total_cmp(&b.0))
        .map(|(_, rot)| rot)
        .expect("four candidates");
    Ok(SymbolStream { symbols: symbols.symbols.iter().map(|s| s * best).collect(), scheme: symbols.scheme })
}

/// Frequency-offset receiver: estimate, derotate, matched filter, blind phase
/// correction, then ambiguity resolution against the first known symbols.
pub fn cfo_corrected_receiver(y: &IqBuffer, tx: &TxConfig, n_sym: usize, known: &BitStream) -> Result<(BitStream, f64)> {
    let f_hat = estimate_cfo_mpower_refined(y, tx.scheme.symmetry_order())?;
    let bits = phase_resolved_receiver(&derotate(y, f_hat)?, tx, n_sym, known)?;
    Ok((bits, f_hat))
}

/// Matched filter plus blind phase correction and known-symbol ambiguity resolution.
pub fn phase_resolved_receiver(y: &IqBuffer, tx: &TxConfig, n_sym: usize, known: &BitStream) -> Result<BitStream> {
    let syms = mf_symbols(y, tx, n_sym)?;
    let phi = fourth_power_phase(&syms);
    let rot = Complex64::from_polar(1.0, -phi);
    let syms = SymbolStream { symbols: syms.symbols.iter().map(|s| s * rot).collect(), scheme: syms.scheme };
    let reference = map_symbols(known, tx.scheme)?;
    Ok(demap_symbols(&resolve_phase_ambiguity(&syms, &reference, PHASE_REFERENCE_SYMBOLS)?))
}

/// First-order complex IIR notch with its zero at `exp(j 2 pi f)` and pole at
/// `r exp(j 2 pi f)`.
///
/// The filter state starts as if the input had been a tone at `f` ending in
/// `x[0]`, so a pure tone is rejected from the first sample.
pub fn notch_filter(signal: &IqBuffer, f: f64, pole_radius: f64) -> Result<IqBuffer> {
    if !(f.is_finite() && f.abs() <= 0.5) {
        return invalid(format!("notch frequency {f} outside [-0.5, 0.5]"));
    }
    if !(pole_radius > 0.0 && pole_radius < 1.0) {
        return invalid(format!("pole radius must lie in (0, 1), got {pole_radius}"));
    }
    let w = Complex64::from_polar(1.0, TAU * f);
    let x = signal.samples();
    let mut x_prev = x[0] * w.conj();
    let mut y_prev = Complex64::new(0.0, 0.0);
    let out = x
        .iter()
        .map(|&xk| {
            let yk = xk - w * x_prev + pole_radius * w * y_prev;
            x_prev = xk;
            y_prev = yk;
            yk
        })
        .collect();
    Ok(IqBuffer::from_parts(out, signal.sps()))
}

/// Frequency of the strongest tone: Welch peak, then a zero-padded DTFT scan
/// and a golden-section refinement of `|sum y[k] exp(-j 2 pi f k)|`.
pub fn estimate_tone_frequency(signal: &IqBuffer) -> Result<f64> {
    let n = signal.len();
    let nfft = (n.next_power_of_two() / 2).clamp(8, 1024).min(n.next_power_of_two());
    let coarse = psd_estimate(signal, nfft)?.peak_frequency();

    let pad = 4 * n.next_power_of_two();
    let mut buf: Vec<Complex64> = signal.samples().to_vec();
    buf.resize(pad, Complex64::new(0.0, 0.0));
    FftPlanner::new().plan_fft_forward(pad).process(&mut buf);
    let bin = |f: f64| ((f * pad as f64).round() as i64).rem_euclid(pad as i64) as usize;
    let half = (pad as f64 / nfft as f64).ceil() as i64 + 1;
    let center = bin(coarse) as i64;
    let best = (-half..=half)
        .map(|d| (center + d).rem_euclid(pad as i64) as usize)
        .max_by(|&a, &b| buf[a].norm_sqr().total_cmp(&buf[b].norm_sqr()))
        .expect("non-empty scan");
    let f0 = crate::signal::fft_bin_freq(best, pad);

    let f = golden_peak(|f| dtft(signal.samples(), f).norm_sqr(), f0 - 1.0 / pad as f64, f0 + 1.0 / pad as f64);
    Ok(if f > 0.5 {
        f - 1.0
    } else if f < -0.5 {
        f + 1.0
    } else {
        f
    })
}

/// Maximizer of a unimodal `g` on `[a, b]` to within 1e-12 cycles/sample.
fn golden_peak(g: impl Fn(f64) -> f64, mut a: f64, mut b: f64) -> f64 {
    let r = (5f64.sqrt() - 1.0) / 2.0;
    let (mut c, mut d) = (b - r * (b - a), a + r * (b - a));
    let (mut gc, mut gd) = (g(c), g(d));
    while b - a > 1e-12 {
        if gc > gd {
            b = d;
            d = c;
            gd = gc;
            c = b - r * (b - a);
            gc = g(c);
        } else {
            a = c;
            c = d;
            gc = gd;
            d = a + r * (b - a);
            gd = g(d);
        }
    }
    0.5 * (a + b)
}

fn dtft(x: &[Complex64], f: f64) -> Complex64 {
    let step = Complex64::from_polar(1.0, -TAU * f);
    let mut rot = Complex64::new(1.0, 0.0);
    let mut acc = Complex64::new(0.0, 0.0);
    for (k, &v) in x.iter().enumerate() {
        if k % 256 == 0 {
            rot = Complex64::from_polar(1.0, -TAU * f * k as f64);
        }
        acc += v * rot;
        rot *= step;
    }
    acc
}

/// Least-squares tone canceller; `f_est = None` estimates the frequency.
pub fn ls_tone_cancel(signal: &IqBuffer, f_est: Option<f64>) -> Result<IqBuffer> {
    let f = match f_est {
        Some(f) if f.is_finite() && f.abs() <= 0.5 => f,
        Some(f) => return invalid(format!("tone frequency {f} outside [-0.5, 0.5]")),
        None => estimate_tone_frequency(signal)?,
    };
    let x = signal.samples();
    let amp = dtft(x, f) / x.len() as f64;
    let out = x.iter().enumerate().map(|(k, &v)| v - amp * Complex64::from_polar(1.0, TAU * f * k as f64)).collect();
    Ok(IqBuffer::from_parts(out, signal.sps()))
}

/// Inverse of the coloured-noise shapers: AR(1) prediction error or a
/// `|f|^(alpha/2)` spectral gain with unit mean-square gain.
pub fn whitening_filter(signal: &IqBuffer, kind: NoiseKind) -> Result<IqBuffer> {
    kind.validate()?;
    let x = signal.samples();
    match kind {
        NoiseKind::Awgn => Ok(signal.clone()),
        NoiseKind::Ar1 { rho } => {
            let mut out = Vec::with_capacity(x.len());
            out.push(x[0]);
            out.extend(x.windows(2).map(|w| w[1] - rho * w[0]));
            Ok(IqBuffer::from_parts(out, signal.sps()))
        }
        NoiseKind::OneOverF { alpha } => {
            let gains: Vec<f64> = one_over_f_gains(x.len(), alpha).into_iter().map(|g| 1.0 / g).collect();
            let rms = (gains.iter().map(|g| g * g).sum::<f64>() / gains.len() as f64).sqrt();
            Ok(IqBuffer::from_parts(shape_spectrum(x, |k, _| gains[k] / rms), signal.sps()))
        }
        NoiseKind::Impulsive { .. } => invalid("impulsive noise has no whitening filter"),
    }
}

/// Lag-1 autocorrelation ratio clamped to `(-0.999, 0.999)`.
pub fn estimate_ar1_rho(signal: &IqBuffer) -> Result<f64> {
    let x = signal.samples();
    if x.len() < 100 {
        return invalid(format!("rho estimation needs at least 100 samples, got {}", x.len()));
    }
    let num: f64 = x.windows(2).map(|w| (w[1] * w[0].conj()).re).sum();
    let den: f64 = x[..x.len() - 1].iter().map(|v| v.norm_sqr()).sum();
    if den == 0.0 {
        return Ok(0.0);
    }
    Ok((num / den).clamp(-0.999, 0.999))
}

/// Sliding median applied to I and Q separately with edge replication.
pub fn median_filter(signal: &IqBuffer, window: usize) -> Result<IqBuffer> {
    if window < 3 || window % 2 == 0 {
        return invalid(format!("median window must be odd and >= 3, got {window}"));
    }
    let x = signal.samples();
    let n = x.len() as i64;
    let h = (window / 2) as i64;
    let mut re = vec![0.0; window];
    let mut im = vec![0.0; window];
    let out = (0..n)
        .map(|k| {
            for (j, d) in (-h..=h).enumerate() {
                let s = x[(k + d).clamp(0, n - 1) as usize];
                re[j] = s.re;
                im[j] = s.im;
            }
            re.sort_by(f64::total_cmp);
            im.sort_by(f64::total_cmp);
            Complex64::new(re[h as usize], im[h as usize])
        })
        .collect();
    Ok(IqBuffer::from_parts(out, signal.sps()))
}

/// Pulse-shapes `bits` and trims or pads to `len` samples.
pub fn remodulate(bits: &BitStream, tx: &TxConfig, len: usize) -> Result<IqBuffer> {
    Ok(shape_pulse(&map_symbols(bits, tx.scheme)?, tx)?.fit_to(len))
}

/// Hard decisions re-shaped on the input timing grid.
pub fn demod_remod(signal: &IqBuffer, tx: &TxConfig, n_sym: usize) -> Result<(IqBuffer, BitStream)> {
    let bits = mf_receiver(signal, tx, n_sym)?;
    let wave = remodulate(&bits, tx, signal.len())?.with_sps(signal.sps());
    Ok((wave, bits))
}

/// `y - alpha * template` with `alpha = sqrt(soi_power 10^(-sir/10) / P(template))`.
pub fn scale_subtract(y: &IqBuffer, template: &IqBuffer, sir_known_db: f64, soi_power: f64) -> Result<IqBuffer> {
    scale_subtract_from(y, template, sir_known_db, soi_power, 0)
}

/// As [`scale_subtract`], measuring the template power over `[start, len)`.
pub fn scale_subtract_from(y: &IqBuffer, template: &IqBuffer, sir_known_db: f64, soi_power: f64, start: usize) -> Result<IqBuffer> {
    if y.len() != template.len() {
        return Err(Error::LengthMismatch { expected: y.len(), actual: template.len() });
    }
    if sir_known_db == f64::INFINITY {
        return Ok(y.clone());
    }
    if !sir_known_db.is_finite() {
        return invalid(format!("SIR {sir_known_db} is not allowed"));
    }
    if start >= y.len() {
        return invalid(format!("region start {start} beyond length {}", y.len()));
    }
    let p = power_of(&template.samples()[start..]);
    if p <= 0.0 {
        return invalid("template has zero power");
    }
    let alpha = (soi_power / db_to_linear(sir_known_db) / p).sqrt();
    y.sub(&template.scaled(alpha).with_sps(y.sps()))
}

/// Classical successive interference cancellation parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct SicConfig {
    pub soi_tx: TxConfig,
    pub int_tx: TxConfig,
    pub sir_known_db: f64,
    pub bypass_above_db: f64,
}

impl SicConfig {
    pub fn new(soi_tx: TxConfig, int_tx: TxConfig, sir_known_db: f64) -> Self {
        Self { soi_tx, int_tx, sir_known_db, bypass_above_db: 0.0 }
    }

    pub fn validate(&self) -> Result<()> {
        if !self.bypass_above_db.is_finite() {
            return invalid("SIC bypass threshold must be finite");
        }
        if self.sir_known_db.is_nan() {
            return invalid("SIC needs a known SIR");
        }
        Ok(())
    }

    pub fn bypass(&self) -> bool {
        self.sir_known_db >= self.bypass_above_db
    }
}

/// Demodulate the interferer, re-modulate, subtract at the known SIR, then
/// matched-filter the residual. SoI-dominant mixtures skip the cancellation.
pub fn sic_receiver(mixed: &MixedSignal, cfg: &SicConfig) -> Result<BitStream> {
    cfg.validate()?;
    if cfg.bypass() {
        return mf_receiver(&mixed.y, &cfg.soi_tx, mixed.n_sym);
    }
    if mixed.int_n_sym == 0 {
        return Err(Error::Routing("SIC requires a modulated interferer".into()));
    }
    let (template, _) = demod_remod(&mixed.y, &cfg.int_tx, mixed.int_n_sym)?;
    sic_with_template(mixed, &template, cfg)
}

/// Cancellation with a caller-provided interference template.
pub fn sic_with_template(mixed: &MixedSignal, template: &IqBuffer, cfg: &SicConfig) -> Result<BitStream> {
    cfg.validate()?;
    if cfg.bypass() {
        return mf_receiver(&mixed.y, &cfg.soi_tx, mixed.n_sym);
    }
    let residual = scale_subtract_from(&mixed.y, template, cfg.sir_known_db, mixed.soi_power, mixed.region_start)?;
    mf_receiver(&residual, &cfg.soi_tx, mixed.n_sym)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::impairments::{gen_interferer, gen_noise, mix, InterfererKind, MixSpec};
    use crate::signal::{linear_to_db, measure_power, theoretical_qpsk_ber, RngStream};
    use crate::waveforms::{score_ber, transmit, Scheme, Transmission};

    fn tx() -> TxConfig {
        TxConfig::with_defaults(Scheme::Qpsk, 8).unwrap()
    }

    fn soi(n_sym: usize, seed: u64) -> Transmission {
        transmit(n_sym, &tx(), &RngStream::new(seed, 1)).unwrap()
    }

    fn tone(f: f64, n: usize) -> IqBuffer {
        IqBuffer::new((0..n).map(|k| Complex64::from_polar(1.0, TAU * f * k as f64 + 0.3)).collect(), 1).unwrap()
    }

    fn binomial_ok(errors: u64, total: u64, p: f64) -> bool {
        let mean = p * total as f64;
        let sd = (total as f64 * p * (1.0 - p)).sqrt();
        (errors as f64 - mean).abs() <= 3.0 * sd
    }

    #[test]
    fn mf_receiver_noiseless_and_awgn() {
        let t = soi(1000, 1);
        assert_eq!(mf_receiver(&t.waveform, &tx(), 1000).unwrap(), t.bits);
        let mut count = crate::waveforms::BerCount::default();
        for trial in 0..25 {
            let t = soi(2000, 100 + trial);
            let m = mix(&t, None, NoiseKind::Awgn, MixSpec::awgn(4.0), &RngStream::new(200 + trial, 2)).unwrap();
            count.merge(score_ber(&t.bits, &mf_receiver(&m.y, &tx(), 2000).unwrap()).unwrap());
        }
        assert_eq!(count.total, 100_000);
        let p = theoretical_qpsk_ber(4.0);
        assert!(binomial_ok(count.errors, count.total, p), "ber {} vs {p}", count.ber());
    }

    #[test]
    fn in_band_tone_breaks_matched_filter() {
        let t = soi(256, 3);
        let kind = InterfererKind::tone_in_band(0.35, 8);
        let i = gen_interferer(kind, t.waveform.len(), &RngStream::new(3, 2)).unwrap();
        let m = mix(&t, Some(&i), NoiseKind::Awgn, MixSpec::with_sir(10.0, -10.0), &RngStream::new(3, 3)).unwrap();
        let ber = score_ber(&t.bits, &mf_receiver(&m.y, &tx(), 256).unwrap()).unwrap().ber();
        assert!(ber > 0.1, "ber {ber}");
    }

    #[test]
    fn cfo_estimator() {
        // fourth powers of QPSK points are all -1, so the raw estimate is exact
        let bits = crate::waveforms::generate_bits(2000, &RngStream::new(4, 0)).unwrap();
        let syms = IqBuffer::new(map_symbols(&bits, Scheme::Qpsk).unwrap().symbols, 1).unwrap();
        assert!(estimate_cfo_mpower(&syms, 4).unwrap().abs() < 1e-6);
        let rotated = apply_cfo(&syms, 0.03).unwrap();
        assert!((estimate_cfo_mpower(&rotated, 4).unwrap() - 0.03).abs() < 1e-9);
        let t = soi(1000, 4);
        assert!(estimate_cfo_mpower_refined(&t.waveform, 4).unwrap().abs() < 1e-4);
        for est in [estimate_cfo_mpower, estimate_cfo_mpower_refined] {
            let shifted = apply_cfo(&t.waveform, 0.2).unwrap();
            assert!((est(&shifted, 4).unwrap() - 0.2).abs() > 0.05);
            assert!(est(&t.waveform, 1).is_err());
        }
        let one = IqBuffer::new(vec![Complex64::new(1.0, 0.0)], 1).unwrap();
        assert!(estimate_cfo_mpower(&one, 4).is_err());
    }

    #[test]
    fn cfo_estimate_at_ten_db() {
        let t = soi(1000, 5);
        let spec = MixSpec { cfo_soi: 0.08, ..MixSpec::awgn(10.0) };
        let m = mix(&t, None, NoiseKind::Awgn, spec, &RngStream::new(5, 2)).unwrap();
        assert!(m.y.len() >= 8000);
        let f = estimate_cfo_mpower_refined(&m.y, 4).unwrap();
        assert!((f - 0.08).abs() < 1e-3, "f_hat {f}");
    }

    #[test]
    fn occupancy_mask_drops_out_of_band_noise() {
        let t = soi(256, 8);
        let x = apply_cfo(&t.waveform, 0.07).unwrap();
        let kept = IqBuffer::new(occupied_band(&x), 8).unwrap();
        assert!(kept.rmse(&x).unwrap() < 0.02 * measure_power(&x).sqrt());
        // a white-noise floor is cut roughly by the occupied fraction of the band
        let w = gen_noise(NoiseKind::Awgn, 4096, 1.0, &RngStream::new(8, 1)).unwrap().with_sps(8);
        let kept = power_of(&occupied_band(&w));
        assert!((kept - OCCUPANCY_WIDTH / 8.0).abs() < 0.05, "kept {kept}");
        let narrow = IqBuffer::new(x.samples().to_vec(), 1).unwrap();
        assert_eq!(occupied_band(&narrow), x.samples());
    }

    #[test]
    fn refined_cfo_on_clean_offsets() {
        for (i, f) in [0.05, 0.065, 0.08, 0.1].into_iter().enumerate() {
            let t = soi(256, 40 + i as u64);
            let x = apply_cfo(&t.waveform, f).unwrap();
            let e = estimate_cfo_mpower_refined(&x, 4).unwrap() - f;
            assert!(e.abs() < 2e-5, "f {f}: error {e}");
        }
    }

    #[test]
    fn cfo_receiver_recovers_bits() {
        let t = soi(1000, 6);
        let spec = MixSpec { cfo_soi: 0.05, ..MixSpec::awgn(30.0) };
        let m = mix(&t, None, NoiseKind::Awgn, spec, &RngStream::new(6, 2)).unwrap();
        let (bits, f_hat) = cfo_corrected_receiver(&m.y, &tx(), 1000, &t.bits).unwrap();
        assert!((f_hat - 0.05).abs() < 1e-4);
        assert_eq!(score_ber(&t.bits, &bits).unwrap().errors, 0);
    }

    #[test]
    fn phase_ambiguity_picks_rotation() {
        let bits = crate::waveforms::generate_bits(64, &RngStream::new(7, 0)).unwrap();
        let s = map_symbols(&bits, Scheme::Qpsk).unwrap();
        let rot = Complex64::from_polar(1.0, 3.0 * FRAC_PI_2);
        let turned = SymbolStream { symbols: s.symbols.iter().map(|v| v * rot).collect(), scheme: s.scheme };
        assert_eq!(resolve_phase_ambiguity(&turned, &s, 16).unwrap().symbols.len(), 32);
        assert_eq!(demap_symbols(&resolve_phase_ambiguity(&turned, &s, 16).unwrap()), bits);
        let tilt = Complex64::from_polar(1.0, 0.2);
        let tilted = SymbolStream { symbols: s.symbols.iter().map(|v| v * tilt).collect(), scheme: s.scheme };
        assert!((fourth_power_phase(&tilted) - 0.2).abs() < 1e-9);
    }

    #[test]
    fn notch_rejects_tone_and_passes_noise() {
        let x = tone(0.07, 4000);
        let y = notch_filter(&x, 0.07, DEFAULT_NOTCH_RADIUS).unwrap();
        assert!(measure_power(&y) <= 1e-4 * measure_power(&x));
        let w = gen_noise(NoiseKind::Awgn, 100_000, 1.0, &RngStream::new(8, 0)).unwrap();
        let yw = notch_filter(&w, 0.07, DEFAULT_NOTCH_RADIUS).unwrap();
        assert!(linear_to_db(measure_power(&w) / measure_power(&yw)).abs() < 1.0);
        assert!(notch_filter(&x, 0.7, 0.9).is_err());
        assert!(notch_filter(&x, 0.1, 1.0).is_err());
    }

    #[test]
    fn notch_far_from_band_keeps_ber() {
        let f = InterfererKind::tone_out_of_band(0.35, 8);
        let InterfererKind::Tone { f } = f else { unreachable!() };
        let (mut plain, mut notched) = (crate::waveforms::BerCount::default(), crate::waveforms::BerCount::default());
        for trial in 0..10 {
            let t = soi(2000, 300 + trial);
            let m = mix(&t, None, NoiseKind::Awgn, MixSpec::awgn(6.0), &RngStream::new(400 + trial, 0)).unwrap();
            plain.merge(score_ber(&t.bits, &mf_receiver(&m.y, &tx(), 2000).unwrap()).unwrap());
            let n = notch_filter(&m.y, f, DEFAULT_NOTCH_RADIUS).unwrap();
            notched.merge(score_ber(&t.bits, &mf_receiver(&n, &tx(), 2000).unwrap()).unwrap());
        }
        assert!(binomial_ok(notched.errors, notched.total, plain.ber()), "{} vs {}", notched.ber(), plain.ber());
    }

    #[test]
    fn ls_cancels_tones() {
        let x = tone(0.1234, 3000);
        let r = ls_tone_cancel(&x, None).unwrap();
        assert!(measure_power(&r) <= 1e-6 * measure_power(&x));

        let t = soi(256, 9);
        let kind = InterfererKind::tone_in_band(0.35, 8);
        let InterfererKind::Tone { f } = kind else { unreachable!() };
        let i = gen_interferer(kind, t.waveform.len(), &RngStream::new(9, 2)).unwrap();
        let m = mix(&t, Some(&i), NoiseKind::Awgn, MixSpec::with_sir(10.0, -10.0), &RngStream::new(9, 3)).unwrap();
        let out = ls_tone_cancel(&m.y, None).unwrap();
        // tone component: projection onto the tone at its true frequency
        let n = m.y.len() as f64;
        let before = dtft(m.clean_int.samples(), f).norm() / n;
        let resid = out.sub(&m.clean_soi).unwrap().sub(&m.noise).unwrap();
        let after = dtft(resid.samples(), f).norm() / n;
        assert!(20.0 * (before / after).log10() >= 20.0, "reduction {} dB", 20.0 * (before / after).log10());

        let clean = ls_tone_cancel(&t.waveform, None).unwrap();
        assert!(linear_to_db(measure_power(&t.waveform) / measure_power(&clean)).abs() < 0.5);
    }

    #[test]
    fn whitening_ar1_and_one_over_f() {
        let kind = NoiseKind::Ar1 { rho: 0.9 };
        let n = gen_noise(kind, 100_000, 1.0, &RngStream::new(10, 0)).unwrap();
        let w = whitening_filter(&n, kind).unwrap();
        let r = estimate_ar1_rho(&w).unwrap();
        assert!(r.abs() < 0.02, "lag-1 {r}");
        assert_eq!(whitening_filter(&n, NoiseKind::Ar1 { rho: 0.0 }).unwrap(), n);

        let kind = NoiseKind::OneOverF { alpha: 1.0 };
        let n = gen_noise(kind, 1 << 17, 1.0, &RngStream::new(10, 1)).unwrap();
        let w = whitening_filter(&n, kind).unwrap();
        let psd = psd_estimate(&w, 256).unwrap();
        let band: Vec<f64> =
            psd.freqs.iter().zip(&psd.power).filter(|(f, _)| f.abs() >= 0.01 && f.abs() <= 0.45).map(|(_, p)| linear_to_db(*p)).collect();
        let mean = band.iter().sum::<f64>() / band.len() as f64;
        assert!(band.iter().all(|d| (d - mean).abs() <= 2.0));
        assert!(whitening_filter(&n, NoiseKind::IMPULSIVE_DEFAULT).is_err());
    }

    #[test]
    fn ar1_rho_estimates() {
        let n = gen_noise(NoiseKind::AR1_DEFAULT, 100_000, 1.0, &RngStream::new(11, 0)).unwrap();
        assert!((estimate_ar1_rho(&n).unwrap() - 0.9).abs() < 0.01);
        let w = gen_noise(NoiseKind::Awgn, 100_000, 1.0, &RngStream::new(11, 1)).unwrap();
        assert!(estimate_ar1_rho(&w).unwrap().abs() < 0.02);
        assert!(estimate_ar1_rho(&IqBuffer::zeros(50, 1).unwrap()).is_err());
    }

    #[test]
    fn ar1_rho_biased_by_signal() {
        // the shaped SoI is itself strongly correlated at lag 1, so the
        // mixture estimate moves away from the noise-only rho
        let t = soi(4000, 12);
        let m = mix(&t, None, NoiseKind::AR1_DEFAULT, MixSpec::awgn(10.0), &RngStream::new(12, 0)).unwrap();
        let noise_only = estimate_ar1_rho(&m.noise).unwrap();
        let mixed = estimate_ar1_rho(&m.y).unwrap();
        assert!((noise_only - 0.9).abs() < 0.02);
        assert!((mixed - noise_only).abs() > 0.01, "mixture {mixed} vs noise {noise_only}");
    }

    #[test]
    fn median_filter_cases() {
        let c = IqBuffer::new(vec![Complex64::new(0.5, -0.5); 20], 1).unwrap();
        assert_eq!(median_filter(&c, 5).unwrap(), c);
        let v: Vec<Complex64> = [0.0, 0.0, 9.0, 0.0, 0.0].iter().map(|&r| Complex64::new(r, 0.0)).collect();
        let out = median_filter(&IqBuffer::new(v, 1).unwrap(), 3).unwrap();
        assert!(out.samples().iter().all(|s| s.norm() == 0.0));
        let mut w = gen_noise(NoiseKind::Awgn, 201, 1.0, &RngStream::new(13, 0)).unwrap().into_samples();
        w[100] = Complex64::new(10.0, 10.0);
        let out = median_filter(&IqBuffer::new(w, 1).unwrap(), 5).unwrap();
        assert!(out.samples()[100].norm() < 3.0);
        assert!(median_filter(&c, 4).is_err());
        assert!(median_filter(&c, 1).is_err());
    }

    #[test]
    fn demod_remod_roundtrip() {
        let t = soi(256, 14);
        let (wave, bits) = demod_remod(&t.waveform, &tx(), 256).unwrap();
        assert_eq!(bits, t.bits);
        assert!(wave.rmse(&t.waveform).unwrap() < 1e-3);
        let m = mix(&t, None, NoiseKind::Awgn, MixSpec::awgn(3.0), &RngStream::new(14, 2)).unwrap();
        let (wave, bits) = demod_remod(&m.y, &tx(), 256).unwrap();
        assert_eq!(bits, mf_receiver(&m.y, &tx(), 256).unwrap());
        assert_eq!(wave, remodulate(&bits, &tx(), m.y.len()).unwrap());
    }

    fn qpsk_int(sps: usize) -> InterfererKind {
        InterfererKind::Mod { scheme: Scheme::Qpsk, sps, beta: 0.35, span: crate::waveforms::DEFAULT_SPAN }
    }

    #[test]
    fn scale_subtract_cases() {
        let t = soi(256, 15);
        let i = gen_interferer(qpsk_int(32), t.waveform.len(), &RngStream::new(15, 1)).unwrap();
        let m = mix(&t, Some(&i), NoiseKind::Awgn, MixSpec::with_sir(10.0, -10.0), &RngStream::new(15, 2)).unwrap();
        let r = scale_subtract(&m.y, &m.clean_int, -10.0, m.soi_power).unwrap();
        assert!(r.rmse(&m.clean_soi.add(&m.noise).unwrap()).unwrap() < 1e-10);
        let junk = gen_noise(NoiseKind::Awgn, m.y.len(), 1.0, &RngStream::new(15, 3)).unwrap();
        let r = scale_subtract(&m.y, &junk, -10.0, m.soi_power).unwrap();
        assert!(measure_power(&r) > measure_power(&m.y));
        assert_eq!(scale_subtract(&m.y, &junk, f64::INFINITY, m.soi_power).unwrap(), m.y);
        assert!(scale_subtract(&m.y, &IqBuffer::zeros(m.y.len(), 8).unwrap(), 0.0, 1.0).is_err());
        assert!(scale_subtract(&m.y, &IqBuffer::zeros(10, 8).unwrap(), 0.0, 1.0).is_err());
    }

    #[test]
    fn sic_noiseless_genie_is_exact() {
        let t = soi(256, 16);
        let int_tx = qpsk_int(32).tx().unwrap().unwrap();
        let i = gen_interferer(qpsk_int(32), t.waveform.len(), &RngStream::new(16, 1)).unwrap();
        let m = mix(&t, Some(&i), NoiseKind::Awgn, MixSpec::with_sir(200.0, -10.0), &RngStream::new(16, 2)).unwrap();
        let cfg = SicConfig::new(tx(), int_tx.clone(), -10.0);
        let template = remodulate(&m.int_bits, &int_tx, m.y.len()).unwrap();
        let bits = sic_with_template(&m, &template, &cfg).unwrap();
        assert_eq!(bits, t.bits);
        assert_eq!(
            sic_with_template(&m, &m.clean_int, &cfg).unwrap(),
            mf_receiver(&m.clean_soi.add(&m.noise).unwrap(), &tx(), 256).unwrap()
        );
        assert_eq!(sic_receiver(&m, &cfg).unwrap(), t.bits);
    }

    #[test]
    fn sic_matches_interference_free_ber() {
        let int_tx = qpsk_int(32).tx().unwrap().unwrap();
        let (mut sic, mut free) = (crate::waveforms::BerCount::default(), crate::waveforms::BerCount::default());
        for trial in 0..60 {
            let t = soi(256, 500 + trial);
            let i = gen_interferer(qpsk_int(32), t.waveform.len(), &RngStream::new(600 + trial, 1)).unwrap();
            let nrng = RngStream::new(700 + trial, 2);
            let m = mix(&t, Some(&i), NoiseKind::Awgn, MixSpec::with_sir(10.0, -10.0), &nrng).unwrap();
            let clean = mix(&t, None, NoiseKind::Awgn, MixSpec::awgn(10.0), &nrng).unwrap();
            sic.merge(score_ber(&t.bits, &sic_receiver(&m, &SicConfig::new(tx(), int_tx.clone(), -10.0)).unwrap()).unwrap());
            free.merge(score_ber(&t.bits, &mf_receiver(&clean.y, &tx(), 256).unwrap()).unwrap());
        }
        let p = free.ber().max(1.0 / free.total as f64);
        assert!(binomial_ok(sic.errors, sic.total, p), "sic {} vs free {}", sic.ber(), free.ber());
    }

    #[test]
    fn sic_bypass_is_plain_mf() {
        let t = soi(256, 17);
        let int_tx = qpsk_int(16).tx().unwrap().unwrap();
        let i = gen_interferer(qpsk_int(16), t.waveform.len(), &RngStream::new(17, 1)).unwrap();
        let m = mix(&t, Some(&i), NoiseKind::Awgn, MixSpec::with_sir(10.0, 10.0), &RngStream::new(17, 2)).unwrap();
        let cfg = SicConfig::new(tx(), int_tx, 10.0);
        assert_eq!(sic_receiver(&m, &cfg).unwrap(), mf_receiver(&m.y, &tx(), 256).unwrap());
        let bad = SicConfig { bypass_above_db: f64::NAN, ..cfg };
        assert!(sic_receiver(&m, &bad).is_err());
    }
}
