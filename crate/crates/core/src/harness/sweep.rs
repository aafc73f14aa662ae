//! Monte Carlo BER/RMSE sweeps over an (Es/N0, SIR) grid.

use std::collections::BTreeMap;
use std::sync::Arc;

use rayon::prelude::*;

use crate::classic::SicConfig;
use crate::error::{Error, Result};
use crate::harness::config::{ExperimentConfig, Method, ModelRole};
use crate::impairments::{InterfererKind, MixedSignal, NoiseKind};
use crate::models::arch::Architecture;
use crate::models::checkpoint::load_checkpoint;
use crate::nn::Model;
use crate::pipelines::{
    run_classic, run_recommender, run_sicunet, run_unet_demod, run_unet_rx, run_unet_rx_cfo, CfoFlags, ClassicMethod, Classifiers,
    PipelineResult, Registry, Route, RouteKey, SignalClassifier, WaveformModel,
};
use crate::scenario::Scenario;
use crate::signal::RngStream;
use crate::waveforms::{score_ber, TxConfig};

/// Stream tag for sweep mixtures.
const SWEEP_STREAM: u64 = 0x7377_6565;

/// Aggregate over the trials of one grid cell and method.
#[derive(Clone, Debug, PartialEq)]
pub struct BerRecord {
    pub scenario: String,
    pub es_n0_db: f64,
    /// `+inf` for interference-free cells.
    pub sir_db: f64,
    pub method: String,
    pub trials: usize,
    pub bits: u64,
    pub bit_errors: u64,
    pub ber: f64,
    /// Mean over trials.
    pub rmse: f64,
    pub seed: u64,
}

impl BerRecord {
    /// Normal-approximation 95% half-width of the BER estimate. Zero-error
    /// cells use the rule-of-three bound `3 / bits`.
    pub fn ci_half_width(&self) -> f64 {
        let n = self.bits as f64;
        if self.bit_errors == 0 {
            return 3.0 / n;
        }
        1.96 * (self.ber * (1.0 - self.ber) / n).sqrt()
    }

    /// Whether the half-width is within `max(0.2 ber, 1e-4)`.
    pub fn precise_enough(&self) -> bool {
        self.ci_half_width() <= (0.2 * self.ber).max(1e-4)
    }
}

/// Loaded checkpoints keyed by role. Tests may insert any trait object.
#[derive(Default)]
pub struct LoadedModels {
    pub waveform: BTreeMap<ModelRole, Arc<dyn WaveformModel>>,
    pub classifiers: BTreeMap<ModelRole, Arc<dyn SignalClassifier>>,
    pub demod: Option<Model<f32>>,
}

fn incompatible(role: ModelRole, why: impl std::fmt::Display) -> Error {
    Error::Checkpoint(format!("{} checkpoint incompatible with scenario: {why}", role.key()))
}

/// Loads every configured checkpoint and checks it against the scenario.
pub fn load_models(cfg: &ExperimentConfig) -> Result<LoadedModels> {
    let scenario = cfg.scenario()?;
    let len = scenario.waveform_len();
    let mut out = LoadedModels::default();
    for (&role, path) in &cfg.models {
        let model = load_checkpoint(path).map_err(|e| Error::Checkpoint(format!("{}: {e}", path.display())))?;
        let arch = Architecture::parse(model.config())?;
        match (role, arch) {
            (ModelRole::Unet | ModelRole::SicunetInt | ModelRole::SicunetSoi, Architecture::Unet(u)) => {
                if u.in_channels != 2 || u.out_channels != 2 {
                    return Err(incompatible(role, "denoiser must map 2 channels to 2"));
                }
                if len < u.min_len() {
                    return Err(incompatible(role, format!("waveform length {len} below minimum {}", u.min_len())));
                }
                out.waveform.insert(role, Arc::new(model));
            }
            (ModelRole::UnetDemod, Architecture::UnetDemod { input_len, n_bits, .. }) => {
                let want = scenario.n_sym * scenario.soi.scheme.bits_per_symbol();
                if input_len != len || n_bits != want {
                    return Err(incompatible(
                        role,
                        format!("expects {input_len} samples and {n_bits} bits, scenario has {len} and {want}"),
                    ));
                }
                out.demod = Some(model);
            }
            (
                ModelRole::Detector | ModelRole::NoiseClassifier | ModelRole::InterferenceClassifier | ModelRole::SirClassifier,
                Architecture::Classifier(c),
            ) => {
                let want = match role {
                    ModelRole::NoiseClassifier | ModelRole::InterferenceClassifier => 4,
                    _ => 2,
                };
                if c.n_classes != want {
                    return Err(incompatible(role, format!("{} classes, expected {want}", c.n_classes)));
                }
                out.classifiers.insert(role, Arc::new(model));
            }
            (role, arch) => return Err(incompatible(role, format!("unexpected architecture `{}`", arch.kind()))),
        }
    }
    Ok(out)
}

/// Registry used by the `recommender` method: neural routes where the
/// checkpoints are loaded, classical fallbacks otherwise. Modulated
/// interference at either SIR band goes to SICU-Net, whose first stage is
/// bypassed above 0 dB.
pub fn default_registry(models: &LoadedModels, scenario: &Scenario) -> Result<Registry> {
    let mut reg = Registry::new();
    let noises = [NoiseKind::Awgn, NoiseKind::AR1_DEFAULT, NoiseKind::ONE_OVER_F_DEFAULT, NoiseKind::IMPULSIVE_DEFAULT];
    for (k, noise) in noises.into_iter().enumerate() {
        let route = match (noise, models.waveform.get(&ModelRole::Unet)) {
            (NoiseKind::Awgn, Some(unet)) => Route::Denoise(unet.clone()),
            (NoiseKind::Awgn, None) => Route::Classic(ClassicMethod::Mf),
            (NoiseKind::Impulsive { .. }, _) => Route::Classic(ClassicMethod::Median),
            (other, _) => Route::Classic(ClassicMethod::Whiten(other)),
        };
        reg.insert(RouteKey::Clean { noise: k }, route);
    }
    let int_tx = match scenario.interferer {
        Some(InterfererKind::Mod { scheme, sps, beta, span }) => TxConfig::new(scheme, sps, beta, span)?,
        _ => TxConfig::with_defaults(crate::waveforms::Scheme::Qpsk, 32)?,
    };
    let sicunet = (models.waveform.get(&ModelRole::SicunetInt), models.waveform.get(&ModelRole::SicunetSoi));
    for band in 0..2 {
        reg.insert(RouteKey::Interfered { kind: 0, sir_band: band }, Route::Classic(ClassicMethod::Notch));
        reg.insert(RouteKey::Interfered { kind: 1, sir_band: band }, Route::Classic(ClassicMethod::Mf));
        for kind in [2, 3] {
            let route = match sicunet {
                (Some(mi), Some(ms)) => Route::Sicunet {
                    model_int: mi.clone(),
                    model_soi: ms.clone(),
                    int_tx: int_tx.clone(),
                    cfo: CfoFlags::for_scenario(scenario),
                },
                _ if band == 0 => Route::Classic(ClassicMethod::Sic(int_tx.clone())),
                _ => Route::Classic(ClassicMethod::Mf),
            };
            reg.insert(RouteKey::Interfered { kind, sir_band: band }, route);
        }
    }
    Ok(reg)
}

fn missing(m: Method) -> Error {
    Error::Checkpoint(format!("method {m} has no loaded checkpoint"))
}

struct Runner<'a> {
    scenario: Scenario,
    int_tx: Option<TxConfig>,
    models: &'a LoadedModels,
    registry: Option<Registry>,
}

impl Runner<'_> {
    fn wave(&self, role: ModelRole, m: Method) -> Result<&dyn WaveformModel> {
        self.models.waveform.get(&role).map(|b| b.as_ref()).ok_or_else(|| missing(m))
    }

    fn run(&self, method: Method, mixed: &MixedSignal) -> Result<PipelineResult> {
        let tx = &self.scenario.soi;
        let int_tx = || self.int_tx.clone().ok_or_else(|| Error::Routing(format!("method {method} needs a modulated interferer")));
        match method {
            Method::Mf => run_classic(mixed, &ClassicMethod::Mf, tx),
            Method::CfoMf => run_classic(mixed, &ClassicMethod::CfoMf, tx),
            Method::Notch => run_classic(mixed, &ClassicMethod::Notch, tx),
            Method::LsTone => run_classic(mixed, &ClassicMethod::LsTone, tx),
            Method::Median => run_classic(mixed, &ClassicMethod::Median, tx),
            Method::Whiten => run_classic(mixed, &ClassicMethod::Whiten(self.scenario.noise), tx),
            Method::Sic => run_classic(mixed, &ClassicMethod::Sic(int_tx()?), tx),
            Method::GenieSic => run_classic(mixed, &ClassicMethod::GenieSic(int_tx()?), tx),
            Method::Unet => {
                let model = self.wave(ModelRole::Unet, method)?;
                if CfoFlags::for_scenario(&self.scenario).soi {
                    run_unet_rx_cfo(mixed, model, tx, tx.scheme.symmetry_order())
                } else {
                    run_unet_rx(mixed, model, tx)
                }
            }
            Method::Sicunet => {
                let cfg = SicConfig::new(tx.clone(), int_tx()?, mixed.spec.sir_db);
                let (mi, ms) = (self.wave(ModelRole::SicunetInt, method)?, self.wave(ModelRole::SicunetSoi, method)?);
                run_sicunet(mixed, mi, ms, &cfg, CfoFlags::for_scenario(&self.scenario))
            }
            Method::UnetDemod => run_unet_demod(mixed, self.models.demod.as_ref().ok_or_else(|| missing(method))?),
            Method::Recommender => {
                let c = |r: ModelRole| self.models.classifiers.get(&r).map(|b| b.as_ref()).ok_or_else(|| missing(method));
                let classifiers = Classifiers {
                    detector: c(ModelRole::Detector)?,
                    noise: c(ModelRole::NoiseClassifier)?,
                    interference: c(ModelRole::InterferenceClassifier)?,
                    sir: c(ModelRole::SirClassifier)?,
                };
                run_recommender(mixed, &classifiers, self.registry.as_ref().expect("built with models"), tx)
            }
        }
    }
}

/// RNG stream of one trial, keyed by the cell values rather than grid order.
pub fn trial_stream(seed: u64, es_n0_db: f64, sir_db: f64, trial: usize) -> RngStream {
    RngStream::new(seed, SWEEP_STREAM).child(es_n0_db.to_bits()).child(sir_db.to_bits()).child(trial as u64)
}

/// Loads the configured checkpoints and runs the sweep.
pub fn run_sweep(cfg: &ExperimentConfig) -> Result<Vec<BerRecord>> {
    cfg.validate()?;
    let models = load_models(cfg)?;
    run_sweep_with(cfg, &models)
}

/// Sweep with caller-provided models. Every method sees the same mixtures;
/// results are reduced in (cell, trial) order so thread count cannot change
/// any output bit.
pub fn run_sweep_with(cfg: &ExperimentConfig, models: &LoadedModels) -> Result<Vec<BerRecord>> {
    if cfg.n_trials == 0 {
        return Err(Error::InvalidArgument("n_trials must be at least 1".into()));
    }
    let scenario = cfg.scenario()?;
    let int_tx = match scenario.interferer.and_then(|i| i.tx()) {
        Some(tx) => Some(tx?),
        None => None,
    };
    let registry = if cfg.methods.contains(&Method::Recommender) { Some(default_registry(models, &scenario)?) } else { None };
    let runner = Runner { scenario, int_tx, models, registry };
    let cells: Vec<(f64, f64)> = cfg.es_n0_db.iter().flat_map(|&e| cfg.sir_axis().into_iter().map(move |s| (e, s))).collect();
    let jobs: Vec<(usize, usize)> = (0..cells.len()).flat_map(|c| (0..cfg.n_trials).map(move |t| (c, t))).collect();
    let outcomes: Vec<Result<Vec<(u64, u64, f64)>>> = jobs
        .par_iter()
        .map(|&(c, t)| {
            let (es, sir) = cells[c];
            let mixed = runner.scenario.draw(es, sir, &trial_stream(cfg.seed, es, sir, t))?;
            cfg.methods
                .iter()
                .map(|&m| {
                    let r = runner.run(m, &mixed)?;
                    let count = score_ber(&mixed.tx_bits, &r.rx_bits)?;
                    Ok((count.errors, count.total, r.rmse))
                })
                .collect()
        })
        .collect();

    let n_methods = cfg.methods.len();
    let mut acc = vec![(0u64, 0u64, 0.0f64); cells.len() * n_methods];
    for (&(c, _), outcome) in jobs.iter().zip(outcomes) {
        for (k, (e, b, r)) in outcome?.into_iter().enumerate() {
            let slot = &mut acc[c * n_methods + k];
            slot.0 += e;
            slot.1 += b;
            slot.2 += r;
        }
    }
    let mut records = Vec::with_capacity(acc.len());
    for (c, &(es, sir)) in cells.iter().enumerate() {
        for (k, m) in cfg.methods.iter().enumerate() {
            let (errors, bits, rmse_sum) = acc[c * n_methods + k];
            records.push(BerRecord {
                scenario: cfg.scenario_id.clone(),
                es_n0_db: es,
                sir_db: sir,
                method: m.name().to_string(),
                trials: cfg.n_trials,
                bits,
                bit_errors: errors,
                ber: errors as f64 / bits as f64,
                rmse: rmse_sum / cfg.n_trials as f64,
                seed: cfg.seed,
            });
        }
    }
    Ok(records)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::config::parse_config;
    use crate::pipelines::Identity;
    use crate::signal::theoretical_qpsk_ber;

    fn awgn_cfg(trials: usize) -> ExperimentConfig {
        parse_config(&format!("[experiment]\nscenario = awgn\nn_trials = {trials}\nseed = 3\n[grid]\nes_n0_db = 0, 4\n")).unwrap()
    }

    #[test]
    fn mf_sweep_matches_theory() {
        let recs = run_sweep(&awgn_cfg(60)).unwrap();
        assert_eq!(recs.len(), 2);
        for r in &recs {
            let p = theoretical_qpsk_ber(r.es_n0_db);
            let sigma = (p * (1.0 - p) / r.bits as f64).sqrt();
            assert!((r.ber - p).abs() < 3.0 * sigma, "{r:?} vs {p}");
            assert_eq!(r.bits, 60 * 512);
            assert!(r.sir_db.is_infinite());
        }
    }

    #[test]
    fn thread_count_does_not_matter() {
        let cfg = awgn_cfg(8);
        let run = |n| rayon::ThreadPoolBuilder::new().num_threads(n).build().unwrap().install(|| run_sweep(&cfg).unwrap());
        assert_eq!(run(1), run(3));
    }

    #[test]
    fn identity_unet_equals_mf_and_trials_are_shared() {
        let cfg = parse_config(
            "[experiment]\nscenario = qpsk_sps32\nn_trials = 4\nmethods = mf, unet, sic, genie_sic\n\
             [grid]\nes_n0_db = 10\nsir_db = -10, 5\n[models]\nunet = unused.imx\n",
        )
        .unwrap();
        let mut models = LoadedModels::default();
        models.waveform.insert(ModelRole::Unet, Arc::new(Identity));
        let recs = run_sweep_with(&cfg, &models).unwrap();
        assert_eq!(recs.len(), 8);
        for cell in recs.chunks(4) {
            assert_eq!(cell[0].bit_errors, cell[1].bit_errors);
            assert_eq!(cell[0].rmse, cell[1].rmse);
        }
        // cancellation is bypassed at positive SIR
        assert_eq!(recs[4].bit_errors, recs[6].bit_errors);
        assert!(recs[3].ber < recs[0].ber);
    }

    #[test]
    fn missing_models_and_bad_checkpoints() {
        let cfg = parse_config("[experiment]\nscenario = awgn\nmethods = unet\n[grid]\nes_n0_db = 0\n[models]\nunet = /nonexistent.imx\n")
            .unwrap();
        assert!(matches!(run_sweep(&cfg), Err(Error::Checkpoint(_))));
        assert!(matches!(run_sweep_with(&cfg, &LoadedModels::default()), Err(Error::Checkpoint(_))));
        let mut zero = awgn_cfg(1);
        zero.n_trials = 0;
        assert!(run_sweep(&zero).is_err());
    }

    #[test]
    fn classifier_checkpoint_in_denoiser_slot_is_rejected() {
        use crate::models::arch::{build_cnn_classifier, ClassifierConfig};
        use crate::models::checkpoint::save_checkpoint;
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.imx");
        save_checkpoint(&build_cnn_classifier(ClassifierConfig::desk(4), &RngStream::new(1, 1)).unwrap(), &path).unwrap();
        let cfg = parse_config(&format!(
            "[experiment]\nscenario = awgn\nmethods = unet\n[grid]\nes_n0_db = 0\n[models]\nunet = {}\n",
            path.display()
        ))
        .unwrap();
        match run_sweep(&cfg) {
            Err(Error::Checkpoint(msg)) => assert!(msg.contains("incompatible"), "{msg}"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn precision_bookkeeping() {
        let r = BerRecord {
            scenario: "s".into(),
            es_n0_db: 0.0,
            sir_db: f64::INFINITY,
            method: "mf".into(),
            trials: 1,
            bits: 100_000,
            bit_errors: 7_900,
            ber: 0.079,
            rmse: 0.0,
            seed: 0,
        };
        assert!(r.precise_enough());
        let few = BerRecord { bits: 1000, bit_errors: 79, ..r.clone() };
        assert!(!few.precise_enough());
        let none = BerRecord { bits: 100_000, bit_errors: 0, ber: 0.0, ..r };
        assert!((none.ci_half_width() - 3e-5).abs() < 1e-12);
        assert!(none.precise_enough());
    }
}
