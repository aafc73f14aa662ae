//! Dataset generation, fitting and evaluation driven by the `[train]` section.

use std::fmt::Write as _;

use crate::error::{invalid, Error, Result};
use crate::harness::config::{ExperimentConfig, ModelRole, NetSize, TrainTask};
use crate::models::train::{evaluate_loss, predict_labels, train_with, EpochStats};
use crate::models::{
    grid, load_checkpoint, make_dataset, Architecture, ClassifierConfig, Condition, Dataset, LossKind, Targets, Task, TrainHyper,
    TrainReport, UnetConfig,
};
use crate::nn::Model;
use crate::pipelines::residual_dataset;
use crate::signal::RngStream;

/// Evaluation sets are drawn from a seed this far from the training seed.
pub const EVAL_SEED_OFFSET: u64 = 0x6576_616c;

/// Stream tag for initial weights.
const INIT_STREAM: u64 = 0x696e_6974;

/// Task the dataset is labelled with.
pub fn dataset_task(task: TrainTask) -> Task {
    match task {
        TrainTask::Model(t) => t,
        TrainTask::DenoiseResidual => Task::DenoiseSoi,
    }
}

pub fn loss_for(task: Task) -> LossKind {
    match task {
        Task::DenoiseSoi | Task::EstimateInt => LossKind::Mse,
        Task::DemodBits => LossKind::Bce,
        _ => LossKind::CrossEntropy,
    }
}

pub fn training_grid(cfg: &ExperimentConfig) -> Vec<Condition> {
    grid(&cfg.es_n0_db, &cfg.sir_axis())
}

/// Draws the configured training set with `seed`.
pub fn make_training_set(cfg: &ExperimentConfig, seed: u64) -> Result<Dataset> {
    cfg.validate()?;
    let scenario = cfg.scenario()?;
    let conds = training_grid(cfg);
    match cfg.train.task {
        TrainTask::Model(t) => make_dataset(t, &scenario, &conds, cfg.train.n_per, seed),
        TrainTask::DenoiseResidual => {
            let path = &cfg.models[&ModelRole::SicunetInt];
            let model_int = load_checkpoint(path).map_err(|e| Error::Checkpoint(format!("{}: {e}", path.display())))?;
            residual_dataset(&scenario, &conds, cfg.train.n_per, seed, &model_int)
        }
    }
}

/// Network fitted for the configured task and scenario.
pub fn architecture_for(cfg: &ExperimentConfig) -> Result<Architecture> {
    let unet = match cfg.train.net {
        NetSize::Desk => UnetConfig::desk(),
        NetSize::FullScale => UnetConfig::full_scale(),
    };
    let task = dataset_task(cfg.train.task);
    let arch = match task {
        Task::DenoiseSoi | Task::EstimateInt => Architecture::Unet(unet),
        Task::DemodBits => {
            let scenario = cfg.scenario()?;
            Architecture::UnetDemod {
                unet,
                input_len: scenario.waveform_len(),
                n_bits: scenario.n_sym * scenario.soi.scheme.bits_per_symbol(),
            }
        }
        _ => Architecture::Classifier(ClassifierConfig::desk(task.labels().len())),
    };
    arch.validate()?;
    Ok(arch)
}

pub fn hyper_for(cfg: &ExperimentConfig) -> TrainHyper {
    let t = &cfg.train;
    TrainHyper { batch: t.batch, lr: t.lr, epochs: t.epochs, ..TrainHyper::desk(loss_for(dataset_task(t.task)), cfg.seed) }
}

/// Freshly initialized network for the configuration.
pub fn init_model(cfg: &ExperimentConfig) -> Result<Model<f32>> {
    architecture_for(cfg)?.build(&RngStream::new(cfg.seed, INIT_STREAM))
}

fn check_dataset(cfg: &ExperimentConfig, data: &Dataset) -> Result<()> {
    let want = dataset_task(cfg.train.task);
    if data.task != want {
        return invalid(format!("dataset holds task {}, configuration trains {}", data.task.name(), want.name()));
    }
    let len = cfg.scenario()?.waveform_len();
    if data.inputs.shape().get(2) != Some(&len) {
        return invalid(format!("dataset inputs have shape {:?}, scenario waveforms are {len} samples", data.inputs.shape()));
    }
    Ok(())
}

/// Builds and trains the configured network on `data`.
pub fn fit(cfg: &ExperimentConfig, data: &Dataset, on_epoch: &mut dyn FnMut(&EpochStats)) -> Result<(Model<f32>, TrainReport)> {
    check_dataset(cfg, data)?;
    let mut model = init_model(cfg)?;
    let report = train_with(&mut model, data, &hyper_for(cfg), on_epoch)?;
    Ok((model, report))
}

/// Loss and, for classifiers, accuracy of one grid cell.
#[derive(Clone, Debug, PartialEq)]
pub struct EvalRow {
    pub es_n0_db: f64,
    pub sir_db: f64,
    pub n: usize,
    pub loss: f64,
    pub accuracy: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalSummary {
    pub task: Task,
    pub rows: Vec<EvalRow>,
    /// `confusion[true][predicted]` over all cells; empty for regression.
    pub confusion: Vec<Vec<usize>>,
}

impl EvalSummary {
    /// Example-weighted accuracy over all cells.
    pub fn accuracy(&self) -> Option<f64> {
        if self.confusion.is_empty() {
            return None;
        }
        let total: usize = self.confusion.iter().flatten().sum();
        let hits: usize = (0..self.confusion.len()).map(|i| self.confusion[i][i]).sum();
        Some(hits as f64 / total as f64)
    }

    /// `es_n0_db,sir_db,n,loss,accuracy` rows in grid order.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("es_n0_db,sir_db,n,loss,accuracy\n");
        for r in &self.rows {
            let acc = r.accuracy.map_or(String::new(), |a| format!("{a:.6}"));
            let _ = writeln!(s, "{},{},{},{:.8e},{acc}", r.es_n0_db, r.sir_db, r.n, r.loss);
        }
        s
    }
}

/// Per-cell loss and accuracy of `model` on `data`.
pub fn evaluate(model: &Model<f32>, data: &Dataset, batch: usize) -> Result<EvalSummary> {
    if data.is_empty() {
        return invalid("nothing to evaluate");
    }
    let loss = loss_for(data.task);
    let predicted = match &data.targets {
        Targets::Labels(_) => Some(predict_labels(model, &data.inputs, batch)?),
        _ => None,
    };
    let n_classes = data.task.labels().len();
    let mut confusion = vec![vec![0; n_classes]; n_classes];
    let mut cells: Vec<Condition> = Vec::new();
    for c in &data.conditions {
        if !cells.iter().any(|k| k.es_n0_db.to_bits() == c.es_n0_db.to_bits() && k.sir_db.to_bits() == c.sir_db.to_bits()) {
            cells.push(*c);
        }
    }
    let mut rows = Vec::with_capacity(cells.len());
    for cell in cells {
        let idx: Vec<usize> = (0..data.len())
            .filter(|&i| {
                data.conditions[i].es_n0_db.to_bits() == cell.es_n0_db.to_bits()
                    && data.conditions[i].sir_db.to_bits() == cell.sir_db.to_bits()
            })
            .collect();
        let cell_loss = evaluate_loss(model, &data.subset(&idx), loss, batch)?;
        let accuracy = match (&predicted, &data.targets) {
            (Some(p), Targets::Labels(truth)) => {
                for &i in &idx {
                    confusion[truth[i]][p[i]] += 1;
                }
                Some(idx.iter().filter(|&&i| p[i] == truth[i]).count() as f64 / idx.len() as f64)
            }
            _ => None,
        };
        rows.push(EvalRow { es_n0_db: cell.es_n0_db, sir_db: cell.sir_db, n: idx.len(), loss: cell_loss, accuracy });
    }
    Ok(EvalSummary { task: data.task, rows, confusion })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::config::parse_config;

    fn cfg(extra: &str) -> ExperimentConfig {
        parse_config(&format!(
            "[experiment]\nscenario = classifiers\nseed = 4\nn_symbols = 32\n[grid]\nes_n0_db = 10\nsir_db = -6, 6\n{extra}"
        ))
        .unwrap()
    }

    #[test]
    fn architectures_follow_the_task() {
        let c = cfg("[train]\ntask = classify_interference\n");
        assert_eq!(architecture_for(&c).unwrap(), Architecture::Classifier(ClassifierConfig::desk(4)));
        assert_eq!(hyper_for(&c).loss, LossKind::CrossEntropy);
        let d = cfg("[train]\ntask = demod_bits\n");
        let want = Architecture::UnetDemod { unet: UnetConfig::desk(), input_len: d.scenario().unwrap().waveform_len(), n_bits: 64 };
        assert_eq!(architecture_for(&d).unwrap(), want);
        assert_eq!(hyper_for(&d).loss, LossKind::Bce);
        let e = cfg("[train]\ntask = estimate_int\nnet = full_scale\n");
        assert_eq!(architecture_for(&e).unwrap(), Architecture::Unet(UnetConfig::full_scale()));
    }

    #[test]
    fn fit_rejects_a_foreign_dataset_and_evaluates_per_cell() {
        let c = cfg("[train]\ntask = classify_sir\nn_per = 3\nepochs = 1\nbatch = 4\n");
        let data = make_training_set(&c, 1).unwrap();
        let other = cfg("[train]\ntask = estimate_int\nn_per = 1\n");
        assert!(fit(&other, &data, &mut |_| {}).is_err());
        let (model, report) = fit(&c, &data, &mut |_| {}).unwrap();
        assert_eq!(report.history.len(), 1);
        let s = evaluate(&model, &data, 4).unwrap();
        assert_eq!(s.rows.len(), 2);
        assert!(s.rows.iter().all(|r| r.n == 3 && r.accuracy.is_some()));
        assert_eq!(s.confusion.iter().flatten().sum::<usize>(), 6);
        assert_eq!(s.to_csv().lines().count(), 3);
        // the -6 dB cell is all class 0, the +6 dB cell all class 1
        assert_eq!(s.confusion[0].iter().sum::<usize>(), 3);
    }
}
