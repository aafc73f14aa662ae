//! Bit sources, Gray-coded QPSK / 16-QAM mapping, RRC pulse shaping and the
//! matched-filter front end.
//!
//! Timing convention: the transmitter emits `n_sym * sps + n_taps - 1`
//! samples with the first pulse starting at sample 0. The TX + MF cascade
//! delays symbol `m` to sample `span * sps + m * sps`.

use std::f64::consts::FRAC_1_SQRT_2;
use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;
use rand::Rng;

use crate::error::{invalid, Error, Result};
use crate::signal::{design_rrc, fir_filter, FirFilter, IqBuffer, RngStream};

/// Modulation scheme.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Scheme {
    Qpsk,
    Qam16,
}

impl Scheme {
    pub fn bits_per_symbol(self) -> usize {
        match self {
            Scheme::Qpsk => 2,
            Scheme::Qam16 => 4,
        }
    }

    /// Order of the rotational symmetry used by M-th power estimators.
    pub fn symmetry_order(self) -> u32 {
        4
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Scheme::Qpsk => "qpsk",
            Scheme::Qam16 => "qam16",
        })
    }
}

impl FromStr for Scheme {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "qpsk" => Ok(Scheme::Qpsk),
            "qam16" | "qam" => Ok(Scheme::Qam16),
            other => invalid(format!("unknown modulation scheme '{other}'")),
        }
    }
}

/// Gray table for QPSK, indexed by `2 * b0 + b1`.
pub const QPSK_GRAY: [(f64, f64); 4] = [(1.0, 1.0), (-1.0, 1.0), (1.0, -1.0), (-1.0, -1.0)];

/// Gray table for one 16-QAM rail, indexed by `2 * b0 + b1` (before scaling).
pub const QAM16_RAIL_GRAY: [f64; 4] = [-3.0, -1.0, 3.0, 1.0];

/// `1 / sqrt(10)`: scales the 16-QAM grid to unit mean energy.
pub const QAM16_SCALE: f64 = 0.316_227_766_016_837_94;

#[derive(Clone, Debug, PartialEq, Eq, Default)]
pub struct BitStream(Vec<u8>);

impl BitStream {
    pub fn new(bits: Vec<u8>) -> Result<Self> {
        if bits.iter().any(|&b| b > 1) {
            return invalid("bits must be 0 or 1");
        }
        Ok(Self(bits))
    }

    pub fn bits(&self) -> &[u8] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SymbolStream {
    pub symbols: Vec<Complex64>,
    pub scheme: Scheme,
}

/// Default RRC roll-off.
pub const DEFAULT_BETA: f64 = 0.35;
/// Default RRC span in symbols; the TX+MF cascade ISI is about -58 dB.
pub const DEFAULT_SPAN: usize = 12;

/// Transmit chain: scheme, oversampling and pulse shape.
#[derive(Clone, Debug, PartialEq)]
pub struct TxConfig {
    pub scheme: Scheme,
    pub sps: usize,
    pub rrc: FirFilter,
}

impl TxConfig {
    pub fn new(scheme: Scheme, sps: usize, beta: f64, span: usize) -> Result<Self> {
        Ok(Self { scheme, sps, rrc: design_rrc(beta, sps, span)? })
    }

    /// `DEFAULT_BETA` roll-off over `DEFAULT_SPAN` symbols.
    pub fn with_defaults(scheme: Scheme, sps: usize) -> Result<Self> {
        Self::new(scheme, sps, DEFAULT_BETA, DEFAULT_SPAN)
    }

    /// Cascade delay of TX + MF, `span * sps` samples.
    pub fn delay(&self) -> usize {
        self.rrc.len() - 1
    }

    /// Shaped length for `n_sym` symbols.
    pub fn waveform_len(&self, n_sym: usize) -> usize {
        n_sym * self.sps + self.rrc.len() - 1
    }

    /// Largest symbol count whose complete pulses fit in `len` samples.
    pub fn symbols_in(&self, len: usize) -> usize {
        len.saturating_sub(self.rrc.len() - 1) / self.sps
    }
}

/// Uniform i.i.d. bits.
pub fn generate_bits(n: usize, rng: &RngStream) -> Result<BitStream> {
    if n == 0 {
        return invalid("cannot generate zero bits");
    }
    let mut r = rng.rng();
    Ok(BitStream((0..n).map(|_| r.random_range(0..2u8)).collect()))
}

pub fn map_symbols(bits: &BitStream, scheme: Scheme) -> Result<SymbolStream> {
    let k = scheme.bits_per_symbol();
    if bits.len() % k != 0 {
        return invalid(format!("{} bits is not a multiple of {k} for {scheme}", bits.len()));
    }
    let symbols = bits
        .bits()
        .chunks(k)
        .map(|c| match scheme {
            Scheme::Qpsk => {
                let (i, q) = QPSK_GRAY[(2 * c[0] + c[1]) as usize];
                Complex64::new(i, q) * FRAC_1_SQRT_2
            }
            Scheme::Qam16 => {
                Complex64::new(QAM16_RAIL_GRAY[(2 * c[0] + c[1]) as usize], QAM16_RAIL_GRAY[(2 * c[2] + c[3]) as usize]) * QAM16_SCALE
            }
        })
        .collect();
    Ok(SymbolStream { symbols, scheme })
}

/// Minimum-distance decisions mapped back through the Gray tables.
pub fn demap_symbols(symbols: &SymbolStream) -> BitStream {
    let mut bits = Vec::with_capacity(symbols.symbols.len() * symbols.scheme.bits_per_symbol());
    for s in &symbols.symbols {
        match symbols.scheme {
            Scheme::Qpsk => {
                // nearest quadrant; first bit follows Q, second follows I
                bits.push(u8::from(s.im < 0.0));
                bits.push(u8::from(s.re < 0.0));
            }
            Scheme::Qam16 => {
                for rail in [s.re, s.im] {
                    let idx = nearest_qam_level(rail / QAM16_SCALE);
                    bits.push((idx >> 1) as u8);
                    bits.push((idx & 1) as u8);
                }
            }
        }
    }
    BitStream(bits)
}

fn nearest_qam_level(v: f64) -> usize {
    let mut best = 0;
    let mut dist = f64::MAX;
    for (i, &l) in QAM16_RAIL_GRAY.iter().enumerate() {
        let d = (v - l).abs();
        if d < dist {
            dist = d;
            best = i;
        }
    }
    best
}

/// Zero-insertion upsampling, `sqrt(sps)` gain and RRC filtering.
pub fn shape_pulse(symbols: &SymbolStream, tx: &TxConfig) -> Result<IqBuffer> {
    if symbols.symbols.is_empty() {
        return invalid("no symbols to shape");
    }
    let gain = (tx.sps as f64).sqrt();
    let mut up = vec![Complex64::new(0.0, 0.0); symbols.symbols.len() * tx.sps];
    for (m, s) in symbols.symbols.iter().enumerate() {
        up[m * tx.sps] = s * gain;
    }
    Ok(fir_filter(&IqBuffer::from_parts(up, tx.sps), &tx.rrc))
}

/// Convolution with the conjugated time reverse of the TX pulse.
pub fn matched_filter_frontend(signal: &IqBuffer, tx: &TxConfig) -> IqBuffer {
    fir_filter(signal, &tx.rrc.matched())
}

/// Samples `span * sps + m * sps` for `m < n_sym`, scaled by `1/sqrt(sps)`.
pub fn sample_symbols(filtered: &IqBuffer, tx: &TxConfig, n_sym: usize) -> Result<SymbolStream> {
    let delay = tx.delay();
    if n_sym == 0 || filtered.len() <= delay + (n_sym - 1) * tx.sps {
        return invalid(format!("{} filtered samples cannot hold {n_sym} symbols at delay {delay}, sps {}", filtered.len(), tx.sps));
    }
    let scale = 1.0 / (tx.sps as f64).sqrt();
    let x = filtered.samples();
    let symbols = (0..n_sym).map(|m| x[delay + m * tx.sps] * scale).collect();
    Ok(SymbolStream { symbols, scheme: tx.scheme })
}

/// Bit error count for one comparison.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct BerCount {
    pub errors: u64,
    pub total: u64,
}

impl BerCount {
    pub fn ber(&self) -> f64 {
        if self.total == 0 {
            0.0
        } else {
            self.errors as f64 / self.total as f64
        }
    }

    pub fn merge(&mut self, other: BerCount) {
        self.errors += other.errors;
        self.total += other.total;
    }
}

pub fn score_ber(tx_bits: &BitStream, rx_bits: &BitStream) -> Result<BerCount> {
    if tx_bits.len() != rx_bits.len() {
        return Err(Error::LengthMismatch { expected: tx_bits.len(), actual: rx_bits.len() });
    }
    let errors = tx_bits.bits().iter().zip(rx_bits.bits()).filter(|(a, b)| a != b).count() as u64;
    Ok(BerCount { errors, total: tx_bits.len() as u64 })
}

/// A shaped transmission together with the bits that produced it.
#[derive(Clone, Debug, PartialEq)]
pub struct Transmission {
    pub waveform: IqBuffer,
    pub bits: BitStream,
    pub n_sym: usize,
}

/// Random bits through the complete TX chain.
pub fn transmit(n_sym: usize, tx: &TxConfig, rng: &RngStream) -> Result<Transmission> {
    let bits = generate_bits(n_sym * tx.scheme.bits_per_symbol(), rng)?;
    let symbols = map_symbols(&bits, tx.scheme)?;
    Ok(Transmission { waveform: shape_pulse(&symbols, tx)?, bits, n_sym })
}
