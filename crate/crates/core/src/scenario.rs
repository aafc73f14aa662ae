//! Named experiment families: how one mixture is drawn for a grid cell.

use std::fmt;
use std::str::FromStr;

use rand::Rng;

use crate::error::{invalid, Error, Result};
use crate::impairments::{gen_interferer, mix, InterfererKind, MixSpec, MixedSignal, NoiseKind};
use crate::signal::RngStream;
use crate::waveforms::{transmit, Scheme, TxConfig, DEFAULT_BETA, DEFAULT_SPAN};

/// SoI samples per symbol in every preset.
pub const SOI_SPS: usize = 8;
pub const DESK_SYMBOLS: usize = 256;
pub const CFO_FIXED_INT: f64 = 0.08;
pub const CFO_FIXED_SOI: f64 = 0.05;
pub const CFO_RANGE: (f64, f64) = (0.05, 0.1);
pub const TAU_FIXED: usize = 40;
pub const TAU_RANGE: (usize, usize) = (0, 50);

/// A per-realization value: constant or uniform on `[lo, hi]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Draw {
    Fixed(f64),
    Uniform(f64, f64),
}

impl Draw {
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            Draw::Fixed(v) => v,
            Draw::Uniform(lo, hi) if hi > lo => rng.random_range(lo..=hi),
            Draw::Uniform(lo, _) => lo,
        }
    }

    fn validate(&self, what: &str) -> Result<()> {
        match *self {
            Draw::Fixed(v) if v.is_finite() => Ok(()),
            Draw::Uniform(lo, hi) if lo.is_finite() && hi.is_finite() && lo <= hi => Ok(()),
            other => invalid(format!("{what}: invalid draw {other}")),
        }
    }
}

impl fmt::Display for Draw {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Draw::Fixed(v) => write!(f, "{v}"),
            Draw::Uniform(lo, hi) => write!(f, "uniform({lo},{hi})"),
        }
    }
}

impl FromStr for Draw {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let bad = || Error::InvalidArgument(format!("cannot parse draw `{s}`"));
        if let Some(inner) = s.strip_prefix("uniform(").and_then(|r| r.strip_suffix(')')) {
            let (lo, hi) = inner.split_once(',').ok_or_else(bad)?;
            let lo: f64 = lo.trim().parse().map_err(|_| bad())?;
            let hi: f64 = hi.trim().parse().map_err(|_| bad())?;
            let d = Draw::Uniform(lo, hi);
            d.validate("draw")?;
            return Ok(d);
        }
        let v: f64 = s.parse().map_err(|_| bad())?;
        Ok(Draw::Fixed(v))
    }
}

/// Everything needed to draw one mixture except the (Es/N0, SIR) cell.
#[derive(Clone, Debug, PartialEq)]
pub struct Scenario {
    pub name: String,
    pub soi: TxConfig,
    pub n_sym: usize,
    pub noise: NoiseKind,
    pub interferer: Option<InterfererKind>,
    pub cfo_soi: Draw,
    pub cfo_int: Draw,
    /// Interferer delay in samples; non-integer draws are rounded down.
    pub tau: Draw,
}

impl Scenario {
    /// QPSK, sps 8, AWGN only.
    pub fn awgn(n_sym: usize) -> Self {
        Self {
            name: "awgn".into(),
            soi: TxConfig::with_defaults(Scheme::Qpsk, SOI_SPS).expect("default tx is valid"),
            n_sym,
            noise: NoiseKind::Awgn,
            interferer: None,
            cfo_soi: Draw::Fixed(0.0),
            cfo_int: Draw::Fixed(0.0),
            tau: Draw::Fixed(0.0),
        }
    }

    pub const PRESETS: &'static [&'static str] = &[
        "awgn",
        "cfo",
        "ar1",
        "one_over_f",
        "impulsive",
        "qam_awgn",
        "tone_in",
        "tone_out",
        "lfm",
        "qpsk_sps32",
        "qpsk_sps16",
        "qpsk_sps4",
        "cfo_int_fixed",
        "cfo_int_random",
        "cfo_both_fixed",
        "cfo_both_random",
        "tau_fixed",
        "tau_random",
        "qam_int",
        "classifiers",
    ];

    /// Built-in family by name; interferers default to QPSK at sps 32.
    pub fn preset(name: &str, n_sym: usize) -> Result<Self> {
        let base = Self { name: name.to_string(), ..Self::awgn(n_sym) };
        let qpsk = |sps| InterfererKind::Mod { scheme: Scheme::Qpsk, sps, beta: DEFAULT_BETA, span: DEFAULT_SPAN };
        let uni = Draw::Uniform(CFO_RANGE.0, CFO_RANGE.1);
        let s = match name {
            "awgn" => base,
            "cfo" => Self { cfo_soi: uni, ..base },
            "ar1" => Self { noise: NoiseKind::AR1_DEFAULT, ..base },
            "one_over_f" => Self { noise: NoiseKind::ONE_OVER_F_DEFAULT, ..base },
            "impulsive" => Self { noise: NoiseKind::IMPULSIVE_DEFAULT, ..base },
            "qam_awgn" => Self { soi: TxConfig::with_defaults(Scheme::Qam16, SOI_SPS)?, ..base },
            "tone_in" => Self { interferer: Some(InterfererKind::tone_in_band(DEFAULT_BETA, SOI_SPS)), ..base },
            "tone_out" => Self { interferer: Some(InterfererKind::tone_out_of_band(DEFAULT_BETA, SOI_SPS)), ..base },
            "lfm" => Self { interferer: Some(InterfererKind::lfm_default(DEFAULT_BETA, SOI_SPS)), ..base },
            "qpsk_sps32" | "classifiers" => Self { interferer: Some(qpsk(32)), ..base },
            "qpsk_sps16" => Self { interferer: Some(qpsk(16)), ..base },
            "qpsk_sps4" => Self { interferer: Some(qpsk(4)), ..base },
            "cfo_int_fixed" => Self { interferer: Some(qpsk(32)), cfo_int: Draw::Fixed(CFO_FIXED_INT), ..base },
            "cfo_int_random" => Self { interferer: Some(qpsk(32)), cfo_int: uni, ..base },
            "cfo_both_fixed" => {
                Self { interferer: Some(qpsk(32)), cfo_int: Draw::Fixed(CFO_FIXED_INT), cfo_soi: Draw::Fixed(CFO_FIXED_SOI), ..base }
            }
            "cfo_both_random" => Self { interferer: Some(qpsk(32)), cfo_int: uni, cfo_soi: uni, ..base },
            "tau_fixed" => Self { interferer: Some(qpsk(32)), tau: Draw::Fixed(TAU_FIXED as f64), ..base },
            "tau_random" => Self { interferer: Some(qpsk(32)), tau: Draw::Uniform(TAU_RANGE.0 as f64, TAU_RANGE.1 as f64), ..base },
            "qam_int" => Self {
                interferer: Some(InterfererKind::Mod { scheme: Scheme::Qam16, sps: 32, beta: DEFAULT_BETA, span: DEFAULT_SPAN }),
                ..base
            },
            other => return invalid(format!("unknown scenario `{other}`")),
        };
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_sym == 0 {
            return invalid("scenario needs at least one symbol");
        }
        self.noise.validate()?;
        if let Some(i) = &self.interferer {
            i.validate()?;
        }
        self.cfo_soi.validate("cfo_soi")?;
        self.cfo_int.validate("cfo_int")?;
        self.tau.validate("tau")?;
        let (Draw::Fixed(t) | Draw::Uniform(_, t)) = self.tau;
        let lo = match self.tau {
            Draw::Fixed(v) | Draw::Uniform(v, _) => v,
        };
        if lo < 0.0 || t >= self.waveform_len() as f64 {
            return invalid(format!("tau {} outside the waveform", self.tau));
        }
        Ok(())
    }

    pub fn waveform_len(&self) -> usize {
        self.soi.waveform_len(self.n_sym)
    }

    pub fn has_interferer(&self) -> bool {
        self.interferer.is_some()
    }

    /// One realization at `(es_n0_db, sir_db)`; an infinite SIR omits the
    /// interferer even when the scenario defines one.
    pub fn draw(&self, es_n0_db: f64, sir_db: f64, rng: &RngStream) -> Result<MixedSignal> {
        self.draw_with(self.interferer, es_n0_db, sir_db, rng)
    }

    /// As [`Scenario::draw`] with an explicit interferer override.
    pub fn draw_with(&self, interferer: Option<InterfererKind>, es_n0_db: f64, sir_db: f64, rng: &RngStream) -> Result<MixedSignal> {
        let soi = transmit(self.n_sym, &self.soi, &rng.child(0))?;
        let mut r = rng.child(3).rng();
        let cfo_soi = self.cfo_soi.sample(&mut r);
        let cfo_int = self.cfo_int.sample(&mut r);
        let tau = self.tau.sample(&mut r).max(0.0) as usize;
        let active = interferer.filter(|_| sir_db.is_finite());
        let int = match active {
            Some(kind) => Some(gen_interferer(kind, soi.waveform.len(), &rng.child(1))?),
            None => None,
        };
        let spec = MixSpec {
            es_n0_db,
            sir_db: if active.is_some() { sir_db } else { f64::INFINITY },
            cfo_soi,
            cfo_int: if active.is_some() { cfo_int } else { 0.0 },
            tau_int: if active.is_some() { tau } else { 0 },
        };
        mix(&soi, int.as_ref(), self.noise, spec, &rng.child(2))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_preset_draws() {
        for name in Scenario::PRESETS {
            let s = Scenario::preset(name, 64).unwrap();
            s.validate().unwrap();
            let sir = if s.has_interferer() { -4.0 } else { f64::INFINITY };
            let m = s.draw(10.0, sir, &RngStream::new(1, 2)).unwrap();
            assert_eq!(m.y.len(), s.waveform_len());
            assert_eq!(m.has_interference(), s.has_interferer());
        }
        assert!(Scenario::preset("nope", 64).is_err());
    }

    #[test]
    fn draws_are_reproducible_and_in_range() {
        let s = Scenario::preset("cfo_both_random", 64).unwrap();
        let a = s.draw(10.0, 0.0, &RngStream::new(9, 1)).unwrap();
        let b = s.draw(10.0, 0.0, &RngStream::new(9, 1)).unwrap();
        assert_eq!(a, b);
        for id in 0..20 {
            let m = s.draw(10.0, 0.0, &RngStream::new(9, id)).unwrap();
            assert!((0.05..=0.1).contains(&m.spec.cfo_soi));
            assert!((0.05..=0.1).contains(&m.spec.cfo_int));
        }
        let t = Scenario::preset("tau_random", 64).unwrap();
        for id in 0..20 {
            assert!(t.draw(10.0, 0.0, &RngStream::new(3, id)).unwrap().spec.tau_int <= 50);
        }
    }

    #[test]
    fn infinite_sir_drops_interferer() {
        let s = Scenario::preset("cfo_int_fixed", 32).unwrap();
        let m = s.draw(10.0, f64::INFINITY, &RngStream::new(1, 1)).unwrap();
        assert!(!m.has_interference());
        assert_eq!(m.spec.cfo_int, 0.0);
        assert!(m.clean_int.samples().iter().all(|v| v.norm() == 0.0));
    }

    #[test]
    fn draw_parsing() {
        assert_eq!("0.08".parse::<Draw>().unwrap(), Draw::Fixed(0.08));
        assert_eq!("uniform(0.05, 0.1)".parse::<Draw>().unwrap(), Draw::Uniform(0.05, 0.1));
        assert!("uniform(1,0)".parse::<Draw>().is_err());
        assert!("fast".parse::<Draw>().is_err());
        let d = Draw::Uniform(0.0, 50.0);
        assert_eq!(d.to_string().parse::<Draw>().unwrap(), d);
    }
}
