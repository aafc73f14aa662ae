//! End-to-end receive chains built from the classical blocks and trained models.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use rayon::prelude::*;

use crate::classic::{
    demod_remod, derotate, estimate_cfo_mpower_refined, estimate_tone_frequency, ls_tone_cancel, median_filter, mf_receiver, notch_filter,
    phase_resolved_receiver, remodulate, scale_subtract_from, whitening_filter, SicConfig, DEFAULT_MEDIAN_WINDOW, DEFAULT_NOTCH_RADIUS,
};
use crate::error::{invalid, Error, Result};
use crate::impairments::{apply_cfo, apply_timing_offset, MixedSignal, NoiseKind};
use crate::models::dataset::{
    iq_to_tensor, normalize_power, tensor_to_iq, Condition, Dataset, Targets, Task, INTERFERENCE_LABELS, NOISE_LABELS,
};
use crate::models::train::argmax;
use crate::nn::{Model, Tensor};
use crate::scenario::{Draw, Scenario};
use crate::signal::{measure_power, IqBuffer, RngStream};
use crate::waveforms::{BitStream, TxConfig};

/// Anything that maps a waveform to a waveform estimate of the same length.
pub trait WaveformModel: Send + Sync {
    fn estimate(&self, y: &IqBuffer) -> Result<IqBuffer>;
}

impl WaveformModel for Model<f32> {
    fn estimate(&self, y: &IqBuffer) -> Result<IqBuffer> {
        let out = self.infer(&iq_to_tensor(&[y])?)?;
        let est = tensor_to_iq(&out, 0, y.sps())?;
        if est.len() != y.len() {
            return Err(Error::LengthMismatch { expected: y.len(), actual: est.len() });
        }
        Ok(est)
    }
}

/// Passthrough test double.
#[derive(Clone, Copy, Debug, Default)]
pub struct Identity;

impl WaveformModel for Identity {
    fn estimate(&self, y: &IqBuffer) -> Result<IqBuffer> {
        Ok(y.clone())
    }
}

/// Returns a stored waveform regardless of the input (genie stage).
#[derive(Clone, Debug)]
pub struct Genie(pub IqBuffer);

impl WaveformModel for Genie {
    fn estimate(&self, y: &IqBuffer) -> Result<IqBuffer> {
        if self.0.len() != y.len() {
            return Err(Error::LengthMismatch { expected: y.len(), actual: self.0.len() });
        }
        Ok(self.0.clone().with_sps(y.sps()))
    }
}

/// Anything that assigns a class index to a waveform.
pub trait SignalClassifier: Send + Sync {
    fn n_classes(&self) -> usize;
    fn predict(&self, y: &IqBuffer) -> Result<usize>;
}

impl SignalClassifier for Model<f32> {
    fn n_classes(&self) -> usize {
        match self.params().last() {
            Some(p) => p.value.len(),
            None => 0,
        }
    }

    fn predict(&self, y: &IqBuffer) -> Result<usize> {
        let logits = self.infer(&iq_to_tensor(&[&normalize_power(y)])?)?;
        Ok(argmax(logits.data()))
    }
}

/// Always answers the same class (test double).
#[derive(Clone, Copy, Debug)]
pub struct FixedClass {
    pub class: usize,
    pub n_classes: usize,
}

impl SignalClassifier for FixedClass {
    fn n_classes(&self) -> usize {
        self.n_classes
    }

    fn predict(&self, _: &IqBuffer) -> Result<usize> {
        Ok(self.class)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Diagnostic {
    pub stage: &'static str,
    pub key: &'static str,
    pub value: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PipelineResult {
    pub rx_bits: BitStream,
    /// RMS complex error of the final waveform estimate against its target.
    pub rmse: f64,
    pub diagnostics: Vec<Diagnostic>,
    /// Routing decision when produced by the recommender.
    pub route: Option<String>,
}

impl PipelineResult {
    pub fn diag(&self, stage: &str, key: &str) -> Option<f64> {
        self.diagnostics.iter().find(|d| d.stage == stage && d.key == key).map(|d| d.value)
    }

    pub fn stages(&self) -> Vec<&'static str> {
        let mut s: Vec<&'static str> = Vec::new();
        for d in &self.diagnostics {
            if !s.contains(&d.stage) {
                s.push(d.stage);
            }
        }
        s
    }
}

struct Diags(Vec<Diagnostic>);

impl Diags {
    fn push(&mut self, stage: &'static str, key: &'static str, value: f64) {
        self.0.push(Diagnostic { stage, key, value });
    }
}

/// `x_hat = model(y)`, then matched filter, sampling and decisions.
pub fn run_unet_rx(mixed: &MixedSignal, model: &dyn WaveformModel, tx: &TxConfig) -> Result<PipelineResult> {
    let mut d = Diags(Vec::new());
    let x_hat = model.estimate(&mixed.y)?;
    d.push("denoise", "input_power", measure_power(&mixed.y));
    d.push("denoise", "output_power", measure_power(&x_hat));
    let rmse = x_hat.rmse(&mixed.clean_soi)?;
    d.push("denoise", "rmse", rmse);
    let rx_bits = mf_receiver(&x_hat, tx, mixed.n_sym)?;
    d.push("demod", "n_sym", mixed.n_sym as f64);
    Ok(PipelineResult { rx_bits, rmse, diagnostics: d.0, route: None })
}

/// Frequency-corrected receiver for an estimate that still carries a CFO.
fn cfo_rx(x_hat: &IqBuffer, tx: &TxConfig, n_sym: usize, m: u32, known: &BitStream, d: &mut Diags, truth: f64) -> Result<BitStream> {
    let f_hat = estimate_cfo_mpower_refined(x_hat, m)?;
    d.push("cfo", "f_hat", f_hat);
    d.push("cfo", "f_error", f_hat - truth);
    phase_resolved_receiver(&derotate(x_hat, f_hat)?, tx, n_sym, known)
}

/// Denoise, estimate the SoI offset on the estimate, derotate, then demodulate
/// with blind phase correction and known-preamble ambiguity resolution.
pub fn run_unet_rx_cfo(mixed: &MixedSignal, model: &dyn WaveformModel, tx: &TxConfig, m: u32) -> Result<PipelineResult> {
    let mut d = Diags(Vec::new());
    let x_hat = model.estimate(&mixed.y)?;
    d.push("denoise", "output_power", measure_power(&x_hat));
    let rmse = x_hat.rmse(&mixed.clean_soi)?;
    d.push("denoise", "rmse", rmse);
    let rx_bits = cfo_rx(&x_hat, tx, mixed.n_sym, m, &mixed.tx_bits, &mut d, mixed.spec.cfo_soi)?;
    Ok(PipelineResult { rx_bits, rmse, diagnostics: d.0, route: None })
}

/// Which signals carry a carrier offset that must be estimated.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct CfoFlags {
    pub int: bool,
    pub soi: bool,
}

impl CfoFlags {
    /// Estimation is switched on for every signal whose offset is not fixed at zero.
    pub fn for_scenario(scenario: &Scenario) -> Self {
        let nonzero = |d: Draw| d != Draw::Fixed(0.0);
        CfoFlags { int: nonzero(scenario.cfo_int), soi: nonzero(scenario.cfo_soi) }
    }
}

/// Stage 1 of SICU-Net: interference estimate, demod-remod projection,
/// timing re-alignment and scaled subtraction. Returns the residual.
pub fn sicunet_stage1(mixed: &MixedSignal, model_int: &dyn WaveformModel, cfg: &SicConfig, cfo: CfoFlags) -> Result<IqBuffer> {
    sicunet_stage1_diag(mixed, model_int, cfg, cfo, &mut Diags(Vec::new()))
}

fn sicunet_stage1_diag(
    mixed: &MixedSignal,
    model_int: &dyn WaveformModel,
    cfg: &SicConfig,
    cfo: CfoFlags,
    d: &mut Diags,
) -> Result<IqBuffer> {
    cfg.validate()?;
    if cfg.bypass() {
        d.push("stage1", "bypassed", 1.0);
        return Ok(mixed.y.clone());
    }
    if mixed.int_n_sym == 0 {
        return Err(Error::Routing("SICU-Net requires a modulated interferer".into()));
    }
    let i_hat = model_int.estimate(&mixed.y)?;
    d.push("stage1", "bypassed", 0.0);
    d.push("stage1", "rmse", i_hat.rmse(&mixed.int_unshifted)?);
    let int_sps = cfg.int_tx.sps;
    let template = if cfo.int {
        let f_i = estimate_cfo_mpower_refined(&i_hat.clone().with_sps(int_sps), cfg.int_tx.scheme.symmetry_order())?;
        d.push("stage1", "f_hat", f_i);
        d.push("stage1", "f_error", f_i - mixed.spec.cfo_int);
        let (remod, _) = demod_remod(&derotate(&i_hat, f_i)?.with_sps(int_sps), &cfg.int_tx, mixed.int_n_sym)?;
        apply_cfo(&remod, f_i)?
    } else {
        demod_remod(&i_hat.clone().with_sps(int_sps), &cfg.int_tx, mixed.int_n_sym)?.0
    };
    // the estimate is aligned to the unshifted interferer; restore the delay
    let aligned = apply_timing_offset(&template, mixed.region_start)?.with_sps(mixed.y.sps());
    let residual = scale_subtract_from(&mixed.y, &aligned, cfg.sir_known_db, mixed.soi_power, mixed.region_start)?;
    d.push("stage1", "alpha", (measure_power(&mixed.y.sub(&residual)?) / measure_power(&aligned).max(f64::MIN_POSITIVE)).sqrt());
    Ok(residual)
}

/// Two-stage successive cancellation with neural estimates in both stages.
pub fn run_sicunet(
    mixed: &MixedSignal,
    model_int: &dyn WaveformModel,
    model_soi: &dyn WaveformModel,
    cfg: &SicConfig,
    cfo: CfoFlags,
) -> Result<PipelineResult> {
    let mut d = Diags(Vec::new());
    let residual = sicunet_stage1_diag(mixed, model_int, cfg, cfo, &mut d)?;
    let x_hat = model_soi.estimate(&residual)?;
    let rmse = x_hat.rmse(&mixed.clean_soi)?;
    d.push("stage2", "rmse", rmse);
    let rx_bits = if cfo.soi {
        cfo_rx(&x_hat, &cfg.soi_tx, mixed.n_sym, cfg.soi_tx.scheme.symmetry_order(), &mixed.tx_bits, &mut d, mixed.spec.cfo_soi)?
    } else {
        mf_receiver(&x_hat, &cfg.soi_tx, mixed.n_sym)?
    };
    Ok(PipelineResult { rx_bits, rmse, diagnostics: d.0, route: None })
}

/// Training set for the second SICU-Net stage: stage-one residuals as inputs
/// and the clean SoI as targets, so the denoiser learns the residual
/// statistics it will see at inference. Conditions at or above the bypass
/// threshold contribute raw mixtures.
pub fn residual_dataset(
    scenario: &Scenario,
    conditions: &[Condition],
    n_per: usize,
    seed: u64,
    model_int: &dyn WaveformModel,
) -> Result<Dataset> {
    if conditions.is_empty() || n_per == 0 {
        return invalid("dataset needs a nonempty grid and n_per >= 1");
    }
    scenario.validate()?;
    let int_tx = match scenario.interferer.and_then(|i| i.tx()) {
        Some(tx) => tx?,
        None => return Err(Error::Routing("residual dataset needs a modulated interferer".into())),
    };
    if conditions.iter().any(|c| !c.sir_db.is_finite()) {
        return invalid("residual dataset needs finite SIR in every condition");
    }
    let cfo = CfoFlags::for_scenario(scenario);
    let root = RngStream::new(seed, 0x7265_7369);
    let jobs: Vec<(usize, usize)> = (0..conditions.len()).flat_map(|c| (0..n_per).map(move |k| (c, k))).collect();
    let drawn: Vec<(IqBuffer, IqBuffer)> = jobs
        .par_iter()
        .map(|&(c, k)| {
            let cond = conditions[c];
            let m = scenario.draw(cond.es_n0_db, cond.sir_db, &root.child(c as u64).child(k as u64))?;
            let cfg = SicConfig::new(scenario.soi.clone(), int_tx.clone(), cond.sir_db);
            Ok((sicunet_stage1(&m, model_int, &cfg, cfo)?, m.clean_soi))
        })
        .collect::<Result<_>>()?;
    Ok(Dataset {
        task: Task::DenoiseSoi,
        inputs: iq_to_tensor(&drawn.iter().map(|d| &d.0).collect::<Vec<_>>())?,
        targets: Targets::Waveforms(iq_to_tensor(&drawn.iter().map(|d| &d.1).collect::<Vec<_>>())?),
        conditions: jobs.iter().map(|&(c, _)| conditions[c]).collect(),
    })
}

/// Bits straight from the demodulator network, thresholded at 0.5.
pub fn run_unet_demod(mixed: &MixedSignal, model: &Model<f32>) -> Result<PipelineResult> {
    let probs = demod_probabilities(&mixed.y, model)?;
    if probs.len() != mixed.tx_bits.len() {
        return Err(Error::LengthMismatch { expected: mixed.tx_bits.len(), actual: probs.len() });
    }
    let rx_bits = BitStream::new(probs.iter().map(|&p| (p > 0.5) as u8).collect())?;
    let rmse =
        (probs.iter().zip(mixed.tx_bits.bits()).map(|(&p, &b)| (p as f64 - b as f64).powi(2)).sum::<f64>() / probs.len() as f64).sqrt();
    let diagnostics = vec![Diagnostic { stage: "demod", key: "rmse", value: rmse }];
    Ok(PipelineResult { rx_bits, rmse, diagnostics, route: None })
}

/// Sigmoid outputs of the demodulator network for one waveform.
pub fn demod_probabilities(y: &IqBuffer, model: &Model<f32>) -> Result<Vec<f32>> {
    let out: Tensor<f32> = model.infer(&iq_to_tensor(&[y])?)?;
    Ok(out.into_data())
}

/// Class index and label for a classification task.
pub fn classify(signal: &IqBuffer, model: &dyn SignalClassifier, task: Task) -> Result<(usize, &'static str)> {
    let labels = task.labels();
    if labels.is_empty() {
        return invalid(format!("{} is not a classification task", task.name()));
    }
    if model.n_classes() != labels.len() {
        return invalid(format!("{} needs {} classes, model has {}", task.name(), labels.len(), model.n_classes()));
    }
    let k = model.predict(signal)?;
    Ok((k, labels[k]))
}

/// Classified condition used as the routing key.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum RouteKey {
    /// No interference detected; noise class index.
    Clean { noise: usize },
    /// Interference class index and binary SIR band (0: below 0 dB).
    Interfered { kind: usize, sir_band: usize },
}

impl fmt::Display for RouteKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            RouteKey::Clean { noise } => write!(f, "clean/{}", NOISE_LABELS[noise]),
            RouteKey::Interfered { kind, sir_band } => {
                write!(f, "{}/{}", INTERFERENCE_LABELS[kind], if sir_band == 0 { "sir<0" } else { "sir>=0" })
            }
        }
    }
}

/// Non-neural fallbacks available to the recommender.
#[derive(Clone, Debug, PartialEq)]
pub enum ClassicMethod {
    Mf,
    /// Frequency-corrected matched filter with known-preamble phase resolution.
    CfoMf,
    Notch,
    LsTone,
    Median,
    Whiten(NoiseKind),
    /// Classical SIC with the given interferer transmit chain.
    Sic(TxConfig),
    /// SIC with the true interferer bits, offset and delay.
    GenieSic(TxConfig),
}

pub enum Route {
    Denoise(Arc<dyn WaveformModel>),
    Sicunet { model_int: Arc<dyn WaveformModel>, model_soi: Arc<dyn WaveformModel>, int_tx: TxConfig, cfo: CfoFlags },
    Classic(ClassicMethod),
}

impl Route {
    pub fn name(&self) -> String {
        match self {
            Route::Denoise(_) => "unet".into(),
            Route::Sicunet { .. } => "sicunet".into(),
            Route::Classic(m) => format!("classic:{}", classic_name(m)),
        }
    }
}

fn classic_name(m: &ClassicMethod) -> &'static str {
    match m {
        ClassicMethod::Mf => "mf",
        ClassicMethod::CfoMf => "cfo_mf",
        ClassicMethod::Notch => "notch",
        ClassicMethod::LsTone => "ls_tone",
        ClassicMethod::Median => "median",
        ClassicMethod::Whiten(_) => "whiten",
        ClassicMethod::Sic(_) => "sic",
        ClassicMethod::GenieSic(_) => "genie_sic",
    }
}

/// Routing table from classified condition to receive chain.
#[derive(Default)]
pub struct Registry {
    entries: BTreeMap<RouteKey, Route>,
}

impl Registry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, key: RouteKey, route: Route) -> &mut Self {
        self.entries.insert(key, route);
        self
    }

    pub fn get(&self, key: RouteKey) -> Result<&Route> {
        self.entries.get(&key).ok_or_else(|| Error::Routing(format!("no registry entry for {key}")))
    }

    pub fn keys(&self) -> impl Iterator<Item = &RouteKey> {
        self.entries.keys()
    }
}

/// Presence detector plus the three condition classifiers.
pub struct Classifiers<'a> {
    pub detector: &'a dyn SignalClassifier,
    pub noise: &'a dyn SignalClassifier,
    pub interference: &'a dyn SignalClassifier,
    pub sir: &'a dyn SignalClassifier,
}

/// Routing key from classifier outputs alone.
pub fn route_key(y: &IqBuffer, c: &Classifiers<'_>) -> Result<RouteKey> {
    let (present, _) = classify(y, c.detector, Task::DetectInterference)?;
    if present == 0 {
        let (noise, _) = classify(y, c.noise, Task::ClassifyNoise)?;
        return Ok(RouteKey::Clean { noise });
    }
    let (kind, _) = classify(y, c.interference, Task::ClassifyInterference)?;
    let (sir_band, _) = classify(y, c.sir, Task::ClassifySir)?;
    Ok(RouteKey::Interfered { kind, sir_band })
}

/// Classifies the mixture and dispatches it to the registered receive chain.
/// SIC stages use the ground-truth SIR for scaling; routing uses only the
/// classified SIR band.
pub fn run_recommender(
    mixed: &MixedSignal,
    classifiers: &Classifiers<'_>,
    registry: &Registry,
    soi_tx: &TxConfig,
) -> Result<PipelineResult> {
    let key = route_key(&mixed.y, classifiers)?;
    let route = registry.get(key)?;
    let mut result = match route {
        Route::Denoise(model) => run_unet_rx(mixed, model.as_ref(), soi_tx)?,
        Route::Sicunet { model_int, model_soi, int_tx, cfo } => {
            let cfg = SicConfig::new(soi_tx.clone(), int_tx.clone(), mixed.spec.sir_db);
            run_sicunet(mixed, model_int.as_ref(), model_soi.as_ref(), &cfg, *cfo)?
        }
        Route::Classic(method) => run_classic(mixed, method, soi_tx)?,
    };
    let code = match key {
        RouteKey::Clean { noise } => noise as f64,
        RouteKey::Interfered { kind, sir_band } => 10.0 + 2.0 * kind as f64 + sir_band as f64,
    };
    result.diagnostics.insert(0, Diagnostic { stage: "route", key: "code", value: code });
    result.route = Some(format!("{key} -> {}", route.name()));
    Ok(result)
}

/// One of the classical receivers as a pipeline. `rmse` compares the filtered
/// or cancelled waveform with the clean SoI.
pub fn run_classic(mixed: &MixedSignal, method: &ClassicMethod, soi_tx: &TxConfig) -> Result<PipelineResult> {
    let n_sym = mixed.n_sym;
    let mut d = Diags(Vec::new());
    let (waveform, rx_bits) = match method {
        ClassicMethod::Mf => (mixed.y.clone(), mf_receiver(&mixed.y, soi_tx, n_sym)?),
        ClassicMethod::CfoMf => {
            let bits = cfo_rx(&mixed.y, soi_tx, n_sym, soi_tx.scheme.symmetry_order(), &mixed.tx_bits, &mut d, mixed.spec.cfo_soi)?;
            (mixed.y.clone(), bits)
        }
        ClassicMethod::Notch | ClassicMethod::LsTone => {
            let f = estimate_tone_frequency(&mixed.y)?;
            d.push("classic", "f_tone", f);
            let w = if *method == ClassicMethod::Notch {
                notch_filter(&mixed.y, f, DEFAULT_NOTCH_RADIUS)?
            } else {
                ls_tone_cancel(&mixed.y, Some(f))?
            };
            let bits = mf_receiver(&w, soi_tx, n_sym)?;
            (w, bits)
        }
        ClassicMethod::Median | ClassicMethod::Whiten(_) => {
            let w = match method {
                ClassicMethod::Median => median_filter(&mixed.y, DEFAULT_MEDIAN_WINDOW)?,
                ClassicMethod::Whiten(kind) => whitening_filter(&mixed.y, *kind)?,
                _ => unreachable!(),
            };
            let bits = mf_receiver(&w, soi_tx, n_sym)?;
            (w, bits)
        }
        ClassicMethod::Sic(int_tx) | ClassicMethod::GenieSic(int_tx) => {
            let cfg = SicConfig::new(soi_tx.clone(), int_tx.clone(), mixed.spec.sir_db);
            cfg.validate()?;
            let residual = if cfg.bypass() {
                mixed.y.clone()
            } else if let ClassicMethod::GenieSic(_) = method {
                scale_subtract_from(&mixed.y, &genie_template(mixed, int_tx)?, cfg.sir_known_db, mixed.soi_power, mixed.region_start)?
            } else {
                if mixed.int_n_sym == 0 {
                    return Err(Error::Routing("SIC requires a modulated interferer".into()));
                }
                let (template, _) = demod_remod(&mixed.y.clone().with_sps(int_tx.sps), int_tx, mixed.int_n_sym)?;
                let template = template.with_sps(mixed.y.sps());
                scale_subtract_from(&mixed.y, &template, cfg.sir_known_db, mixed.soi_power, mixed.region_start)?
            };
            let bits = mf_receiver(&residual, soi_tx, n_sym)?;
            (residual, bits)
        }
    };
    let rmse = waveform.rmse(&mixed.clean_soi)?;
    d.push("classic", "rmse", rmse);
    Ok(PipelineResult { rx_bits, rmse, diagnostics: d.0, route: None })
}

/// Remodulated, re-offset template of the true interferer (genie stage 1).
pub fn genie_template(mixed: &MixedSignal, int_tx: &TxConfig) -> Result<IqBuffer> {
    let wave = remodulate(&mixed.int_bits, int_tx, mixed.y.len())?;
    let rotated = apply_cfo(&wave, mixed.spec.cfo_int)?;
    apply_timing_offset(&rotated, mixed.region_start).map(|b| b.with_sps(mixed.y.sps()))
}
