//! Minibatch Adam training with plateau learning-rate decay.

use std::fmt::Write as _;
use std::path::Path;

use rand::seq::SliceRandom;

use crate::error::{invalid, Error, Result};
use crate::models::dataset::{Dataset, Targets};
use crate::nn::loss::{loss_bce, loss_mse, loss_softmax_ce};
use crate::nn::optim::{Adam, PlateauScheduler};
use crate::nn::{Mode, Model, Tensor};
use crate::signal::RngStream;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LossKind {
    Mse,
    /// Binary cross-entropy on sigmoid outputs.
    Bce,
    /// Softmax cross-entropy on class logits.
    CrossEntropy,
}

impl LossKind {
    pub fn name(self) -> &'static str {
        match self {
            LossKind::Mse => "mse",
            LossKind::Bce => "bce",
            LossKind::CrossEntropy => "ce",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "mse" => Ok(LossKind::Mse),
            "bce" => Ok(LossKind::Bce),
            "ce" => Ok(LossKind::CrossEntropy),
            other => invalid(format!("unknown loss `{other}`")),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainHyper {
    pub batch: usize,
    pub lr: f64,
    pub epochs: usize,
    pub loss: LossKind,
    pub seed: u64,
    pub plateau_factor: f64,
    pub plateau_patience: usize,
    pub min_lr: f64,
    pub val_fraction: f64,
}

impl TrainHyper {
    /// Batch 32, rate 1e-3, 20 epochs.
    pub fn desk(loss: LossKind, seed: u64) -> Self {
        Self { batch: 32, lr: 1e-3, epochs: 20, loss, seed, plateau_factor: 0.5, plateau_patience: 5, min_lr: 1e-6, val_fraction: 0.1 }
    }

    /// Batch 256, rate 1e-3, 100 epochs.
    pub fn full_scale(loss: LossKind, seed: u64) -> Self {
        Self { batch: 256, epochs: 100, ..Self::desk(loss, seed) }
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch == 0 || self.epochs == 0 || !(self.lr > 0.0) || !(self.min_lr >= 0.0) {
            return invalid(format!("training hyperparameters must be positive: {self:?}"));
        }
        if !(0.0..1.0).contains(&self.val_fraction) || !(self.plateau_factor > 0.0 && self.plateau_factor < 1.0) {
            return invalid("validation fraction must be in [0, 1) and plateau factor in (0, 1)");
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EpochStats {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    /// Rate used during this epoch.
    pub lr: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainReport {
    /// Validation loss of the untrained model.
    pub initial_val_loss: f64,
    pub history: Vec<EpochStats>,
    /// Rate after the last scheduler step.
    pub final_lr: f64,
}

impl TrainReport {
    /// `epoch,train_loss,val_loss,lr` rows.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("epoch,train_loss,val_loss,lr\n");
        for e in &self.history {
            let _ = writeln!(s, "{},{:.8e},{:.8e},{:.6e}", e.epoch, e.train_loss, e.val_loss, e.lr);
        }
        s
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv())?;
        Ok(())
    }
}

/// Seeded 90/10-style split: `(train, val)` indices.
pub fn split_indices(n: usize, val_fraction: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut RngStream::new(seed, 0x7370_6c69).rng());
    let n_val = if n > 1 { ((n as f64 * val_fraction).round() as usize).min(n - 1) } else { 0 };
    let val = idx.split_off(n - n_val);
    (idx, val)
}

/// Loss and output gradient for a batch.
pub fn batch_loss(kind: LossKind, pred: &Tensor<f32>, targets: &Targets) -> Result<(f64, Tensor<f32>)> {
    match (kind, targets) {
        (LossKind::Mse, Targets::Waveforms(t) | Targets::Bits(t)) => loss_mse(pred, t),
        (LossKind::Bce, Targets::Bits(t)) => loss_bce(pred, t),
        (LossKind::CrossEntropy, Targets::Labels(l)) => loss_softmax_ce(pred, l),
        (k, _) => invalid(format!("loss {} does not fit these targets", k.name())),
    }
}

/// Mean evaluation-mode loss over `data` in batches of `batch`.
pub fn evaluate_loss(model: &Model<f32>, data: &Dataset, kind: LossKind, batch: usize) -> Result<f64> {
    let n = data.len();
    if n == 0 {
        return Ok(f64::NAN);
    }
    let mut total = 0.0;
    for start in (0..n).step_by(batch.max(1)) {
        let idx: Vec<usize> = (start..(start + batch).min(n)).collect();
        let pred = model.infer(&data.inputs.select(&idx))?;
        total += batch_loss(kind, &pred, &data.targets.select(&idx))?.0 * idx.len() as f64;
    }
    Ok(total / n as f64)
}

/// Trains in place. The validation loss drives the plateau schedule; with an
/// empty validation split the training loss does.
pub fn train(model: &mut Model<f32>, data: &Dataset, hyper: &TrainHyper) -> Result<TrainReport> {
    train_with(model, data, hyper, &mut |_| {})
}

/// As [`train`], calling `on_epoch` after every epoch.
pub fn train_with(
    model: &mut Model<f32>,
    data: &Dataset,
    hyper: &TrainHyper,
    on_epoch: &mut dyn FnMut(&EpochStats),
) -> Result<TrainReport> {
    hyper.validate()?;
    if data.len() < 2 {
        return invalid("training needs at least two examples");
    }
    let (train_idx, val_idx) = split_indices(data.len(), hyper.val_fraction, hyper.seed);
    let train_set = data.subset(&train_idx);
    let val_set = data.subset(&val_idx);
    let initial_val_loss = evaluate_loss(model, &val_set, hyper.loss, hyper.batch)?;

    let mut adam = Adam::new(hyper.lr);
    let mut sched = PlateauScheduler::new(hyper.plateau_factor, hyper.plateau_patience, hyper.min_lr);
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let shuffle = RngStream::new(hyper.seed, 0x7368_7566);
    let mut history = Vec::with_capacity(hyper.epochs);
    let mut global_batch = 0usize;
    model.zero_grad();
    for epoch in 0..hyper.epochs {
        order.shuffle(&mut shuffle.child(epoch as u64).rng());
        let mut sum = 0.0;
        for chunk in order.chunks(hyper.batch) {
            let x = train_set.inputs.select(chunk);
            let pred = model.forward(&x, Mode::Train)?;
            let (loss, grad) = batch_loss(hyper.loss, &pred, &train_set.targets.select(chunk))?;
            if !loss.is_finite() {
                model.clear_tape();
                return Err(Error::NonFinite(format!("training loss at epoch {epoch}, batch {global_batch}")));
            }
            model.backward(&grad)?;
            adam.step(model.params_mut());
            sum += loss * chunk.len() as f64;
            global_batch += 1;
        }
        model.clear_tape();
        let train_loss = sum / train_set.len() as f64;
        let val_loss = if val_set.is_empty() { train_loss } else { evaluate_loss(model, &val_set, hyper.loss, hyper.batch)? };
        let stats = EpochStats { epoch, train_loss, val_loss, lr: adam.lr };
        on_epoch(&stats);
        history.push(stats);
        adam.lr = sched.step(val_loss, adam.lr);
    }
    Ok(TrainReport { initial_val_loss, history, final_lr: adam.lr })
}

/// Argmax of each logit row.
pub fn predict_labels(model: &Model<f32>, inputs: &Tensor<f32>, batch: usize) -> Result<Vec<usize>> {
    let n = inputs.shape()[0];
    let mut out = Vec::with_capacity(n);
    for start in (0..n).step_by(batch.max(1)) {
        let idx: Vec<usize> = (start..(start + batch).min(n)).collect();
        let logits = model.infer(&inputs.select(&idx))?;
        let c = logits.shape()[1];
        out.extend(logits.data().chunks(c).map(argmax));
    }
    Ok(out)
}

pub fn argmax(row: &[f32]) -> usize {
    row.iter().enumerate().fold(0, |best, (i, &v)| if v > row[best] { i } else { best })
}
