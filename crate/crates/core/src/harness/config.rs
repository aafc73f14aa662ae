//! Sectioned `key = value` experiment files.
//!
//! ```text
//! [experiment]
//! scenario = awgn
//! methods = mf, unet
//! [grid]
//! es_n0_db = 0:2:10
//! ```
//!
//! Every optional key has a default that [`ExperimentConfig::to_text`] writes
//! back explicitly, so a serialized config is self-describing.

use std::collections::BTreeMap;
use std::fmt::{self, Write as _};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::impairments::{InterfererKind, NoiseKind};
use crate::models::Task;
use crate::scenario::{Draw, Scenario, DESK_SYMBOLS};
use crate::waveforms::{Scheme, TxConfig, DEFAULT_BETA, DEFAULT_SPAN};

/// Receive chains a sweep can evaluate.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Method {
    Mf,
    CfoMf,
    Notch,
    LsTone,
    Median,
    Whiten,
    Sic,
    GenieSic,
    Unet,
    Sicunet,
    UnetDemod,
    Recommender,
}

impl Method {
    pub const ALL: [Method; 12] = [
        Method::Mf,
        Method::CfoMf,
        Method::Notch,
        Method::LsTone,
        Method::Median,
        Method::Whiten,
        Method::Sic,
        Method::GenieSic,
        Method::Unet,
        Method::Sicunet,
        Method::UnetDemod,
        Method::Recommender,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::Mf => "mf",
            Method::CfoMf => "cfo_mf",
            Method::Notch => "notch",
            Method::LsTone => "ls_tone",
            Method::Median => "median",
            Method::Whiten => "whiten",
            Method::Sic => "sic",
            Method::GenieSic => "genie_sic",
            Method::Unet => "unet",
            Method::Sicunet => "sicunet",
            Method::UnetDemod => "unet_demod",
            Method::Recommender => "recommender",
        }
    }

    /// Checkpoint roles that must be configured.
    pub fn required_models(self) -> &'static [ModelRole] {
        match self {
            Method::Unet => &[ModelRole::Unet],
            Method::Sicunet => &[ModelRole::SicunetInt, ModelRole::SicunetSoi],
            Method::UnetDemod => &[ModelRole::UnetDemod],
            Method::Recommender => {
                &[ModelRole::Detector, ModelRole::NoiseClassifier, ModelRole::InterferenceClassifier, ModelRole::SirClassifier]
            }
            _ => &[],
        }
    }

    pub fn needs_modulated_interferer(self) -> bool {
        matches!(self, Method::Sic | Method::GenieSic | Method::Sicunet)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL.into_iter().find(|m| m.name() == s).ok_or_else(|| Error::InvalidArgument(format!("unknown method `{s}`")))
    }
}

/// Checkpoint slots in the `[models]` section.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ModelRole {
    Unet,
    SicunetInt,
    SicunetSoi,
    UnetDemod,
    Detector,
    NoiseClassifier,
    InterferenceClassifier,
    SirClassifier,
}

impl ModelRole {
    pub const ALL: [ModelRole; 8] = [
        ModelRole::Unet,
        ModelRole::SicunetInt,
        ModelRole::SicunetSoi,
        ModelRole::UnetDemod,
        ModelRole::Detector,
        ModelRole::NoiseClassifier,
        ModelRole::InterferenceClassifier,
        ModelRole::SirClassifier,
    ];

    pub fn key(self) -> &'static str {
        match self {
            ModelRole::Unet => "unet",
            ModelRole::SicunetInt => "sicunet_int",
            ModelRole::SicunetSoi => "sicunet_soi",
            ModelRole::UnetDemod => "unet_demod",
            ModelRole::Detector => "detector",
            ModelRole::NoiseClassifier => "classify_noise",
            ModelRole::InterferenceClassifier => "classify_interference",
            ModelRole::SirClassifier => "classify_sir",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        ModelRole::ALL.into_iter().find(|r| r.key() == s)
    }
}

/// Plot abscissa.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Axis {
    EsN0,
    Sir,
}

impl Axis {
    pub fn name(self) -> &'static str {
        match self {
            Axis::EsN0 => "es_n0",
            Axis::Sir => "sir",
        }
    }
}

impl FromStr for Axis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "es_n0" => Ok(Axis::EsN0),
            "sir" => Ok(Axis::Sir),
            other => Err(Error::InvalidArgument(format!("unknown axis `{other}`, expected es_n0 or sir"))),
        }
    }
}

/// Transmit chain parameters as written in the file.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TxParams {
    pub scheme: Scheme,
    pub sps: usize,
    pub beta: f64,
    pub span: usize,
}

impl TxParams {
    pub fn build(&self) -> Result<TxConfig> {
        TxConfig::new(self.scheme, self.sps, self.beta, self.span)
    }
}

/// What `gen` builds and `train` fits.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TrainTask {
    Model(Task),
    /// Stage-two SICU-Net denoiser on residuals of the `sicunet_int` model.
    DenoiseResidual,
}

impl TrainTask {
    pub fn name(self) -> &'static str {
        match self {
            TrainTask::Model(t) => t.name(),
            TrainTask::DenoiseResidual => "denoise_residual",
        }
    }
}

impl fmt::Display for TrainTask {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for TrainTask {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "denoise_residual" {
            return Ok(TrainTask::DenoiseResidual);
        }
        Task::parse(s).map(TrainTask::Model)
    }
}

/// U-Net width preset.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NetSize {
    Desk,
    FullScale,
}

impl NetSize {
    pub fn name(self) -> &'static str {
        match self {
            NetSize::Desk => "desk",
            NetSize::FullScale => "full_scale",
        }
    }
}

impl FromStr for NetSize {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "desk" => Ok(NetSize::Desk),
            "full_scale" => Ok(NetSize::FullScale),
            other => Err(Error::InvalidArgument(format!("unknown net size `{other}`, expected desk or full_scale"))),
        }
    }
}

/// The `[train]` section. Examples are drawn per grid cell (per class for
/// class-balanced tasks).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrainSpec {
    pub task: TrainTask,
    pub n_per: usize,
    pub net: NetSize,
    pub epochs: usize,
    pub batch: usize,
    pub lr: f64,
}

impl Default for TrainSpec {
    fn default() -> Self {
        Self { task: TrainTask::Model(Task::DenoiseSoi), n_per: 100, net: NetSize::Desk, epochs: 20, batch: 32, lr: 1e-3 }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct OutputSpec {
    pub csv: PathBuf,
    pub svg: PathBuf,
    pub axis: Axis,
    /// Overlay the closed-form QPSK curve on Es/N0 plots.
    pub theory: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    /// Preset the scenario started from; also the `scenario` CSV column.
    pub scenario_id: String,
    pub tx: TxParams,
    pub noise: NoiseKind,
    pub interferer: Option<InterfererKind>,
    pub cfo_soi: Draw,
    pub cfo_int: Draw,
    pub tau: Draw,
    pub es_n0_db: Vec<f64>,
    /// Empty for noise-only scenarios.
    pub sir_db: Vec<f64>,
    pub n_trials: usize,
    pub n_symbols: usize,
    pub methods: Vec<Method>,
    pub seed: u64,
    pub models: BTreeMap<ModelRole, PathBuf>,
    pub train: TrainSpec,
    pub output: OutputSpec,
}

impl ExperimentConfig {
    pub fn scenario(&self) -> Result<Scenario> {
        let s = Scenario {
            name: self.scenario_id.clone(),
            soi: self.tx.build()?,
            n_sym: self.n_symbols,
            noise: self.noise,
            interferer: self.interferer,
            cfo_soi: self.cfo_soi,
            cfo_int: self.cfo_int,
            tau: self.tau,
        };
        s.validate()?;
        Ok(s)
    }

    /// SIR axis used for drawing; noise-only scenarios run at `+inf`.
    pub fn sir_axis(&self) -> Vec<f64> {
        if self.sir_db.is_empty() {
            vec![f64::INFINITY]
        } else {
            self.sir_db.clone()
        }
    }

    /// Makes relative model and output paths relative to `base`.
    pub fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        self.models.values_mut().for_each(fix);
        fix(&mut self.output.csv);
        fix(&mut self.output.svg);
    }

    pub fn validate(&self) -> Result<()> {
        let scenario = self.scenario()?;
        if self.n_trials == 0 {
            return Err(Error::InvalidArgument("n_trials must be at least 1".into()));
        }
        if self.es_n0_db.is_empty() || self.methods.is_empty() {
            return Err(Error::InvalidArgument("es_n0_db grid and methods must be nonempty".into()));
        }
        if self.es_n0_db.iter().chain(&self.sir_db).any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("grid values must be finite".into()));
        }
        if scenario.has_interferer() == self.sir_db.is_empty() {
            return Err(Error::InvalidArgument(if self.sir_db.is_empty() {
                "scenario has an interferer but no sir_db grid".into()
            } else {
                "sir_db grid given for a noise-only scenario".into()
            }));
        }
        let modulated = matches!(self.interferer, Some(InterfererKind::Mod { .. }));
        for m in &self.methods {
            if m.needs_modulated_interferer() && !modulated {
                return Err(Error::InvalidArgument(format!("method {m} needs a modulated interferer")));
            }
            for role in m.required_models() {
                if !self.models.contains_key(role) {
                    return Err(Error::InvalidArgument(format!("method {m} needs a `{}` checkpoint", role.key())));
                }
            }
        }
        if self.train.task == TrainTask::DenoiseResidual && !(modulated && self.models.contains_key(&ModelRole::SicunetInt)) {
            return Err(Error::InvalidArgument("denoise_residual needs a modulated interferer and a `sicunet_int` checkpoint".into()));
        }
        Ok(())
    }

    /// Canonical text with every default written out.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let list = |v: &[f64]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(", ");
        let _ = writeln!(s, "[experiment]");
        let _ = writeln!(s, "scenario = {}", self.scenario_id);
        let _ = writeln!(s, "seed = {}", self.seed);
        let _ = writeln!(s, "n_trials = {}", self.n_trials);
        let _ = writeln!(s, "n_symbols = {}", self.n_symbols);
        let methods: Vec<&str> = self.methods.iter().map(|m| m.name()).collect();
        let _ = writeln!(s, "methods = {}", methods.join(", "));
        let _ = writeln!(s, "\n[tx]");
        let _ = writeln!(s, "scheme = {}", self.tx.scheme);
        let _ = writeln!(s, "sps = {}", self.tx.sps);
        let _ = writeln!(s, "beta = {}", self.tx.beta);
        let _ = writeln!(s, "span = {}", self.tx.span);
        let _ = writeln!(s, "cfo = {}", self.cfo_soi);
        let _ = writeln!(s, "\n[noise]");
        match self.noise {
            NoiseKind::Awgn => {
                let _ = writeln!(s, "kind = awgn");
            }
            NoiseKind::Ar1 { rho } => {
                let _ = writeln!(s, "kind = ar1\nrho = {rho}");
            }
            NoiseKind::OneOverF { alpha } => {
                let _ = writeln!(s, "kind = one_over_f\nalpha = {alpha}");
            }
            NoiseKind::Impulsive { p, amp_ratio } => {
                let _ = writeln!(s, "kind = impulsive\np = {p}\namp_ratio = {amp_ratio}");
            }
        }
        let _ = writeln!(s, "\n[interferer]");
        match self.interferer {
            None => {
                let _ = writeln!(s, "kind = none");
            }
            Some(InterfererKind::Tone { f }) => {
                let _ = writeln!(s, "kind = tone\nf = {f}");
            }
            Some(InterfererKind::Lfm { f0, f1 }) => {
                let _ = writeln!(s, "kind = lfm\nf0 = {f0}\nf1 = {f1}");
            }
            Some(InterfererKind::Mod { scheme, sps, beta, span }) => {
                let _ = writeln!(s, "kind = {scheme}\nsps = {sps}\nbeta = {beta}\nspan = {span}");
            }
        }
        let _ = writeln!(s, "cfo = {}", self.cfo_int);
        let _ = writeln!(s, "tau = {}", self.tau);
        let _ = writeln!(s, "\n[grid]");
        let _ = writeln!(s, "es_n0_db = {}", list(&self.es_n0_db));
        if !self.sir_db.is_empty() {
            let _ = writeln!(s, "sir_db = {}", list(&self.sir_db));
        }
        if !self.models.is_empty() {
            let _ = writeln!(s, "\n[models]");
            for (role, path) in &self.models {
                let _ = writeln!(s, "{} = {}", role.key(), path.display());
            }
        }
        let t = &self.train;
        let _ = writeln!(s, "\n[train]");
        let _ = writeln!(s, "task = {}", t.task);
        let _ = writeln!(s, "n_per = {}", t.n_per);
        let _ = writeln!(s, "net = {}", t.net.name());
        let _ = writeln!(s, "epochs = {}", t.epochs);
        let _ = writeln!(s, "batch = {}", t.batch);
        let _ = writeln!(s, "lr = {}", t.lr);
        let _ = writeln!(s, "\n[output]");
        let _ = writeln!(s, "csv = {}", self.output.csv.display());
        let _ = writeln!(s, "svg = {}", self.output.svg.display());
        let _ = writeln!(s, "axis = {}", self.output.axis.name());
        let _ = writeln!(s, "theory = {}", self.output.theory);
        s
    }
}

struct Entry {
    value: String,
    line: usize,
    used: bool,
}

type Sections = BTreeMap<String, BTreeMap<String, Entry>>;

const SECTIONS: [&str; 8] = ["experiment", "tx", "noise", "interferer", "grid", "models", "train", "output"];

fn err(line: usize, msg: impl Into<String>) -> Error {
    Error::Config { line, msg: msg.into() }
}

fn tokenize(text: &str) -> Result<(Sections, usize)> {
    let mut sections: Sections = BTreeMap::new();
    let mut current: Option<String> = None;
    let mut last = 0;
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        last = line;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        if let Some(name) = content.strip_prefix('[') {
            let name = name.strip_suffix(']').ok_or_else(|| err(line, "unterminated section header"))?.trim();
            if !SECTIONS.contains(&name) {
                return Err(err(line, format!("unknown section [{name}]")));
            }
            if sections.contains_key(name) {
                return Err(err(line, format!("section [{name}] appears twice")));
            }
            sections.insert(name.to_string(), BTreeMap::new());
            current = Some(name.to_string());
            continue;
        }
        let section = current.as_ref().ok_or_else(|| err(line, "key outside of any section"))?;
        let (k, v) = content.split_once('=').ok_or_else(|| err(line, format!("expected key = value, got `{content}`")))?;
        let (k, v) = (k.trim(), v.trim());
        if k.is_empty() || v.is_empty() {
            return Err(err(line, "empty key or value"));
        }
        let map = sections.get_mut(section).expect("section inserted");
        if map.contains_key(k) {
            return Err(err(line, format!("duplicate key `{k}`")));
        }
        map.insert(k.to_string(), Entry { value: v.to_string(), line, used: false });
    }
    Ok((sections, last.max(1)))
}

struct Cursor {
    sections: Sections,
    eof: usize,
}

impl Cursor {
    fn get(&mut self, section: &str, key: &str) -> Option<(String, usize)> {
        let e = self.sections.get_mut(section)?.get_mut(key)?;
        e.used = true;
        Some((e.value.clone(), e.line))
    }

    fn parse<T: FromStr>(&mut self, section: &str, key: &str) -> Result<Option<T>>
    where
        T::Err: fmt::Display,
    {
        match self.get(section, key) {
            None => Ok(None),
            Some((v, line)) => v.parse().map(Some).map_err(|e| err(line, format!("{section}.{key}: {e}"))),
        }
    }

    fn line_of(&self, section: &str, key: &str) -> usize {
        self.sections.get(section).and_then(|m| m.get(key)).map_or(self.eof, |e| e.line)
    }

    fn section_line(&self, section: &str) -> usize {
        self.sections.get(section).and_then(|m| m.values().map(|e| e.line).min()).unwrap_or(self.eof)
    }

    fn required(&mut self, section: &str, key: &str) -> Result<(String, usize)> {
        self.get(section, key).ok_or_else(|| err(self.eof, format!("missing required key {section}.{key}")))
    }

    fn unused(&self) -> Option<(usize, String)> {
        self.sections
            .iter()
            .flat_map(|(s, m)| m.iter().filter(|(_, e)| !e.used).map(move |(k, e)| (e.line, format!("unknown key {s}.{k}"))))
            .min()
    }
}

/// `a, b, c` or inclusive `start:step:stop`.
fn parse_grid(v: &str, line: usize) -> Result<Vec<f64>> {
    let num = |t: &str| t.trim().parse::<f64>().map_err(|_| err(line, format!("`{}` is not a number", t.trim())));
    let out = if v.contains(':') {
        let parts: Vec<&str> = v.split(':').collect();
        if parts.len() != 3 {
            return Err(err(line, "range must be start:step:stop"));
        }
        let (a, step, b) = (num(parts[0])?, num(parts[1])?, num(parts[2])?);
        if !(step > 0.0) || b < a {
            return Err(err(line, "range needs a positive step and stop >= start"));
        }
        let n = ((b - a) / step + 1e-9).floor() as usize;
        (0..=n).map(|i| a + step * i as f64).collect()
    } else {
        v.split(',').map(num).collect::<Result<Vec<_>>>()?
    };
    if out.iter().any(|x| !x.is_finite()) {
        return Err(err(line, "grid values must be finite"));
    }
    Ok(out)
}

pub fn parse_config(text: &str) -> Result<ExperimentConfig> {
    let (sections, eof) = tokenize(text)?;
    let mut c = Cursor { sections, eof };

    let (scenario_id, sline) = c.required("experiment", "scenario")?;
    let n_symbols: usize = c.parse("experiment", "n_symbols")?.unwrap_or(DESK_SYMBOLS);
    let base = Scenario::preset(&scenario_id, n_symbols.max(1)).map_err(|e| err(sline, e.to_string()))?;
    let seed = c.parse("experiment", "seed")?.unwrap_or(0);
    let n_trials = c.parse("experiment", "n_trials")?.unwrap_or(100);
    if n_trials == 0 {
        return Err(err(c.line_of("experiment", "n_trials"), "n_trials must be at least 1"));
    }
    if n_symbols == 0 {
        return Err(err(c.line_of("experiment", "n_symbols"), "n_symbols must be at least 1"));
    }
    let methods = match c.get("experiment", "methods") {
        None => vec![Method::Mf],
        Some((v, line)) => {
            let mut ms = Vec::new();
            for t in v.split(',') {
                let m: Method = t.trim().parse().map_err(|e: Error| err(line, e.to_string()))?;
                if ms.contains(&m) {
                    return Err(err(line, format!("method {m} listed twice")));
                }
                ms.push(m);
            }
            ms
        }
    };

    // Preset values seed the tx and interferer sections; beta and span are
    // not recoverable from a designed filter, so presets use the defaults.
    let tx = TxParams {
        scheme: c.parse("tx", "scheme")?.unwrap_or(base.soi.scheme),
        sps: c.parse("tx", "sps")?.unwrap_or(base.soi.sps),
        beta: c.parse("tx", "beta")?.unwrap_or(DEFAULT_BETA),
        span: c.parse("tx", "span")?.unwrap_or(DEFAULT_SPAN),
    };
    tx.build().map_err(|e| err(c.section_line("tx"), e.to_string()))?;
    let cfo_soi = c.parse("tx", "cfo")?.unwrap_or(base.cfo_soi);

    let noise = match c.get("noise", "kind") {
        None => base.noise,
        Some((k, line)) => match k.as_str() {
            "awgn" => NoiseKind::Awgn,
            "ar1" => NoiseKind::AR1_DEFAULT,
            "one_over_f" => NoiseKind::ONE_OVER_F_DEFAULT,
            "impulsive" => NoiseKind::IMPULSIVE_DEFAULT,
            other => return Err(err(line, format!("unknown noise kind `{other}`"))),
        },
    };
    let noise = match noise {
        NoiseKind::Awgn => NoiseKind::Awgn,
        NoiseKind::Ar1 { rho } => NoiseKind::Ar1 { rho: c.parse("noise", "rho")?.unwrap_or(rho) },
        NoiseKind::OneOverF { alpha } => NoiseKind::OneOverF { alpha: c.parse("noise", "alpha")?.unwrap_or(alpha) },
        NoiseKind::Impulsive { p, amp_ratio } => {
            NoiseKind::Impulsive { p: c.parse("noise", "p")?.unwrap_or(p), amp_ratio: c.parse("noise", "amp_ratio")?.unwrap_or(amp_ratio) }
        }
    };
    noise.validate().map_err(|e| err(c.line_of("noise", "kind"), e.to_string()))?;

    let interferer = match c.get("interferer", "kind") {
        None => base.interferer,
        Some((k, line)) => match k.as_str() {
            "none" => None,
            "tone" => Some(InterfererKind::tone_in_band(tx.beta, tx.sps)),
            "lfm" => Some(InterfererKind::lfm_default(tx.beta, tx.sps)),
            other => {
                let scheme: Scheme = other.parse().map_err(|_| err(line, format!("unknown interferer kind `{other}`")))?;
                Some(InterfererKind::Mod { scheme, sps: 32, beta: DEFAULT_BETA, span: DEFAULT_SPAN })
            }
        },
    };
    let interferer = match interferer {
        None => None,
        Some(InterfererKind::Tone { f }) => Some(InterfererKind::Tone { f: c.parse("interferer", "f")?.unwrap_or(f) }),
        Some(InterfererKind::Lfm { f0, f1 }) => {
            Some(InterfererKind::Lfm { f0: c.parse("interferer", "f0")?.unwrap_or(f0), f1: c.parse("interferer", "f1")?.unwrap_or(f1) })
        }
        Some(InterfererKind::Mod { scheme, sps, beta, span }) => Some(InterfererKind::Mod {
            scheme,
            sps: c.parse("interferer", "sps")?.unwrap_or(sps),
            beta: c.parse("interferer", "beta")?.unwrap_or(beta),
            span: c.parse("interferer", "span")?.unwrap_or(span),
        }),
    };
    if let Some(i) = &interferer {
        i.validate().map_err(|e| err(c.line_of("interferer", "kind"), e.to_string()))?;
    }
    let cfo_int = c.parse("interferer", "cfo")?.unwrap_or(base.cfo_int);
    let tau = c.parse("interferer", "tau")?.unwrap_or(base.tau);

    let (es, eline) = c.required("grid", "es_n0_db")?;
    let es_n0_db = parse_grid(&es, eline)?;
    let sir_db = match c.get("grid", "sir_db") {
        None => Vec::new(),
        Some((v, line)) => {
            if interferer.is_none() {
                return Err(err(line, "sir_db grid given for a noise-only scenario"));
            }
            parse_grid(&v, line)?
        }
    };

    let mut models = BTreeMap::new();
    if let Some(m) = c.sections.get_mut("models") {
        for (k, e) in m.iter_mut() {
            let role = ModelRole::parse(k).ok_or_else(|| err(e.line, format!("unknown model role `{k}`")))?;
            e.used = true;
            models.insert(role, PathBuf::from(&e.value));
        }
    }

    let d = TrainSpec::default();
    let train = TrainSpec {
        task: c.parse("train", "task")?.unwrap_or(d.task),
        n_per: c.parse("train", "n_per")?.unwrap_or(d.n_per),
        net: c.parse("train", "net")?.unwrap_or(d.net),
        epochs: c.parse("train", "epochs")?.unwrap_or(d.epochs),
        batch: c.parse("train", "batch")?.unwrap_or(d.batch),
        lr: c.parse("train", "lr")?.unwrap_or(d.lr),
    };
    if train.n_per == 0 || train.epochs == 0 || train.batch == 0 || !(train.lr > 0.0 && train.lr.is_finite()) {
        return Err(err(c.section_line("train"), "train.n_per, epochs, batch and lr must be positive"));
    }

    let axis = match c.parse::<Axis>("output", "axis")? {
        Some(a) => a,
        None if sir_db.len() > 1 => Axis::Sir,
        None => Axis::EsN0,
    };
    let theory_default = axis == Axis::EsN0 && interferer.is_none() && noise == NoiseKind::Awgn && tx.scheme == Scheme::Qpsk;
    let output = OutputSpec {
        csv: c.parse("output", "csv")?.unwrap_or_else(|| PathBuf::from(format!("{scenario_id}.csv"))),
        svg: c.parse("output", "svg")?.unwrap_or_else(|| PathBuf::from(format!("{scenario_id}.svg"))),
        axis,
        theory: c.parse("output", "theory")?.unwrap_or(theory_default),
    };

    if let Some((line, msg)) = c.unused() {
        return Err(err(line, msg));
    }

    let cfg = ExperimentConfig {
        scenario_id,
        tx,
        noise,
        interferer,
        cfo_soi,
        cfo_int,
        tau,
        es_n0_db,
        sir_db,
        n_trials,
        n_symbols,
        methods,
        seed,
        models,
        train,
        output,
    };
    cfg.scenario().map_err(|e| err(c.section_line("interferer"), e.to_string()))?;
    cfg.validate().map_err(|e| match e {
        Error::InvalidArgument(msg) if msg.starts_with("denoise_residual") => err(c.line_of("train", "task"), msg),
        Error::InvalidArgument(msg) => err(c.line_of("experiment", "methods").min(eof), msg),
        other => other,
    })?;
    Ok(cfg)
}
