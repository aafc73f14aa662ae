//! Supervised examples drawn from a scenario over a condition grid.

use num_complex::Complex64;
use rand::Rng;
use rayon::prelude::*;

use crate::error::{invalid, Error, Result};
use crate::impairments::{InterfererKind, MixedSignal, NoiseKind};
use crate::nn::Tensor;
use crate::scenario::Scenario;
use crate::signal::{power_of, IqBuffer, RngStream};
use crate::waveforms::{Scheme, DEFAULT_BETA, DEFAULT_SPAN};

pub const NOISE_LABELS: [&str; 4] = ["awgn", "ar1", "one_over_f", "impulsive"];
pub const INTERFERENCE_LABELS: [&str; 4] = ["tone", "lfm", "qpsk", "qam"];
pub const SIR_LABELS: [&str; 2] = ["below_0db", "at_or_above_0db"];
pub const PRESENCE_LABELS: [&str; 2] = ["absent", "present"];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Task {
    /// Target: the clean SoI waveform.
    DenoiseSoi,
    /// Target: the interference without its timing shift.
    EstimateInt,
    /// Target: the transmitted SoI bits.
    DemodBits,
    ClassifyNoise,
    ClassifyInterference,
    /// Binary: SIR below 0 dB or not.
    ClassifySir,
    /// Binary: interference present or not.
    DetectInterference,
}

impl Task {
    pub const ALL: [Task; 7] = [
        Task::DenoiseSoi,
        Task::EstimateInt,
        Task::DemodBits,
        Task::ClassifyNoise,
        Task::ClassifyInterference,
        Task::ClassifySir,
        Task::DetectInterference,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Task::DenoiseSoi => "denoise_soi",
            Task::EstimateInt => "estimate_int",
            Task::DemodBits => "demod_bits",
            Task::ClassifyNoise => "classify_noise",
            Task::ClassifyInterference => "classify_interference",
            Task::ClassifySir => "classify_sir",
            Task::DetectInterference => "detect_interference",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Task::ALL.into_iter().find(|t| t.name() == s).ok_or_else(|| Error::InvalidArgument(format!("unknown task `{s}`")))
    }

    pub fn labels(self) -> &'static [&'static str] {
        match self {
            Task::ClassifyNoise => &NOISE_LABELS,
            Task::ClassifyInterference => &INTERFERENCE_LABELS,
            Task::ClassifySir => &SIR_LABELS,
            Task::DetectInterference => &PRESENCE_LABELS,
            _ => &[],
        }
    }

    pub fn is_classification(self) -> bool {
        !self.labels().is_empty()
    }
}

/// One grid cell.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Condition {
    pub es_n0_db: f64,
    /// `+inf` for interference-free cells.
    pub sir_db: f64,
}

/// Cartesian product of the two axes.
pub fn grid(es_n0_db: &[f64], sir_db: &[f64]) -> Vec<Condition> {
    es_n0_db.iter().flat_map(|&e| sir_db.iter().map(move |&s| Condition { es_n0_db: e, sir_db: s })).collect()
}

#[derive(Clone, Debug, PartialEq)]
pub enum Targets {
    /// `(n, 2, len)` I/Q waveforms.
    Waveforms(Tensor<f32>),
    /// `(n, n_bits)` in {0, 1}.
    Bits(Tensor<f32>),
    Labels(Vec<usize>),
}

impl Targets {
    pub fn len(&self) -> usize {
        match self {
            Targets::Waveforms(t) | Targets::Bits(t) => t.shape()[0],
            Targets::Labels(l) => l.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn select(&self, idx: &[usize]) -> Targets {
        match self {
            Targets::Waveforms(t) => Targets::Waveforms(t.select(idx)),
            Targets::Bits(t) => Targets::Bits(t.select(idx)),
            Targets::Labels(l) => Targets::Labels(idx.iter().map(|&i| l[i]).collect()),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub task: Task,
    /// `(n, 2, len)` network inputs.
    pub inputs: Tensor<f32>,
    pub targets: Targets,
    /// Grid cell of every example.
    pub conditions: Vec<Condition>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.conditions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.conditions.is_empty()
    }

    pub fn subset(&self, idx: &[usize]) -> Dataset {
        Dataset {
            task: self.task,
            inputs: self.inputs.select(idx),
            targets: self.targets.select(idx),
            conditions: idx.iter().map(|&i| self.conditions[i]).collect(),
        }
    }
}

/// Packs buffers of equal length into a `(n, 2, len)` tensor, I then Q.
pub fn iq_to_tensor(buffers: &[&IqBuffer]) -> Result<Tensor<f32>> {
    let first = buffers.first().ok_or_else(|| Error::Shape("no buffers to pack".into()))?;
    let l = first.len();
    let mut data = Vec::with_capacity(buffers.len() * 2 * l);
    for b in buffers {
        if b.len() != l {
            return Err(Error::LengthMismatch { expected: l, actual: b.len() });
        }
        data.extend(b.samples().iter().map(|v| v.re as f32));
        data.extend(b.samples().iter().map(|v| v.im as f32));
    }
    Tensor::new(vec![buffers.len(), 2, l], data)
}

/// Example `b` of a `(n, 2, len)` tensor as an I/Q buffer.
pub fn tensor_to_iq(t: &Tensor<f32>, b: usize, sps: usize) -> Result<IqBuffer> {
    let (n, c, l) = t.dims3()?;
    if c != 2 || b >= n {
        return Err(Error::Shape(format!("cannot read example {b} of {:?} as I/Q", t.shape())));
    }
    let item = t.item(b);
    IqBuffer::new((0..l).map(|k| Complex64::new(item[k] as f64, item[l + k] as f64)).collect(), sps)
}

/// Unit mean power copy; classifiers see shape, not absolute level.
pub fn normalize_power(x: &IqBuffer) -> IqBuffer {
    let p = power_of(x.samples());
    if p > 0.0 {
        x.scaled(1.0 / p.sqrt())
    } else {
        x.clone()
    }
}

fn modulated(scheme: Scheme, scenario: &Scenario) -> InterfererKind {
    let sps = match scenario.interferer {
        Some(InterfererKind::Mod { sps, .. }) => sps,
        _ => 32,
    };
    InterfererKind::Mod { scheme, sps, beta: DEFAULT_BETA, span: DEFAULT_SPAN }
}

/// Classes drawn per condition; 1 for regression tasks.
fn classes_per_condition(task: Task) -> usize {
    match task {
        Task::ClassifyNoise | Task::ClassifyInterference | Task::DetectInterference => task.labels().len(),
        _ => 1,
    }
}

fn check_pairing(task: Task, scenario: &Scenario, conds: &[Condition]) -> Result<()> {
    let finite_sir = conds.iter().all(|c| c.sir_db.is_finite());
    match task {
        Task::EstimateInt | Task::ClassifySir | Task::DetectInterference if !scenario.has_interferer() => {
            invalid(format!("task {} needs a scenario with an interferer", task.name()))
        }
        Task::EstimateInt | Task::ClassifySir | Task::ClassifyInterference | Task::DetectInterference if !finite_sir => {
            invalid(format!("task {} needs finite SIR in every condition", task.name()))
        }
        _ => Ok(()),
    }
}

/// Draws one mixture of class `class` at `cond`.
fn draw_example(task: Task, scenario: &Scenario, cond: Condition, class: usize, rng: &RngStream) -> Result<MixedSignal> {
    match task {
        Task::ClassifyNoise => {
            let noise = [NoiseKind::Awgn, NoiseKind::AR1_DEFAULT, NoiseKind::ONE_OVER_F_DEFAULT, NoiseKind::IMPULSIVE_DEFAULT][class];
            Scenario { noise, ..scenario.clone() }.draw(cond.es_n0_db, cond.sir_db, rng)
        }
        Task::ClassifyInterference => {
            let kind = match class {
                0 => {
                    // in-band tone at a random frequency
                    let edge = (1.0 + DEFAULT_BETA) / (2.0 * scenario.soi.sps as f64);
                    InterfererKind::Tone { f: rng.child(9).rng().random_range(-edge..edge) }
                }
                1 => InterfererKind::lfm_default(DEFAULT_BETA, scenario.soi.sps),
                2 => modulated(Scheme::Qpsk, scenario),
                _ => modulated(Scheme::Qam16, scenario),
            };
            scenario.draw_with(Some(kind), cond.es_n0_db, cond.sir_db, rng)
        }
        Task::DetectInterference => {
            let sir = if class == 1 { cond.sir_db } else { f64::INFINITY };
            scenario.draw(cond.es_n0_db, sir, rng)
        }
        _ => scenario.draw(cond.es_n0_db, cond.sir_db, rng),
    }
}

/// `n_per` examples per condition (per class for class-balanced tasks),
/// each from its own random stream so generation order is irrelevant.
pub fn make_dataset(task: Task, scenario: &Scenario, conditions: &[Condition], n_per: usize, seed: u64) -> Result<Dataset> {
    if conditions.is_empty() || n_per == 0 {
        return invalid("dataset needs a nonempty grid and n_per >= 1");
    }
    scenario.validate()?;
    check_pairing(task, scenario, conditions)?;
    let classes = classes_per_condition(task);
    let root = RngStream::new(seed, 0x6461_7461);
    let jobs: Vec<(usize, usize, usize)> =
        (0..conditions.len()).flat_map(|c| (0..classes).flat_map(move |class| (0..n_per).map(move |k| (c, class, k)))).collect();
    let drawn: Vec<(IqBuffer, Condition, ExampleTarget)> = jobs
        .par_iter()
        .map(|&(c, class, k)| {
            let cond = conditions[c];
            let rng = root.child(c as u64).child(class as u64).child(k as u64);
            let m = draw_example(task, scenario, cond, class, &rng)?;
            let target = match task {
                Task::DenoiseSoi => ExampleTarget::Wave(m.clean_soi),
                Task::EstimateInt => ExampleTarget::Wave(m.int_unshifted),
                Task::DemodBits => ExampleTarget::Bits(m.tx_bits.bits().iter().map(|&b| b as f32).collect()),
                Task::ClassifySir => ExampleTarget::Label((cond.sir_db >= 0.0) as usize),
                _ => ExampleTarget::Label(class),
            };
            let input = if task.is_classification() { normalize_power(&m.y) } else { m.y };
            Ok((input, cond, target))
        })
        .collect::<Result<_>>()?;

    let inputs = iq_to_tensor(&drawn.iter().map(|d| &d.0).collect::<Vec<_>>())?;
    let targets = match task {
        Task::DenoiseSoi | Task::EstimateInt => Targets::Waveforms(iq_to_tensor(
            &drawn
                .iter()
                .map(|d| match &d.2 {
                    ExampleTarget::Wave(w) => w,
                    _ => unreachable!(),
                })
                .collect::<Vec<_>>(),
        )?),
        Task::DemodBits => {
            let n_bits = scenario.n_sym * scenario.soi.scheme.bits_per_symbol();
            let mut data = Vec::with_capacity(drawn.len() * n_bits);
            for d in &drawn {
                let ExampleTarget::Bits(b) = &d.2 else { unreachable!() };
                data.extend_from_slice(b);
            }
            Targets::Bits(Tensor::new(vec![drawn.len(), n_bits], data)?)
        }
        _ => Targets::Labels(
            drawn
                .iter()
                .map(|d| match d.2 {
                    ExampleTarget::Label(l) => l,
                    _ => unreachable!(),
                })
                .collect(),
        ),
    };
    Ok(Dataset { task, inputs, targets, conditions: drawn.iter().map(|d| d.1).collect() })
}

enum ExampleTarget {
    Wave(IqBuffer),
    Bits(Vec<f32>),
    Label(usize),
}

#[cfg(test)]
mod tests {
    use super::*;

    fn awgn() -> Scenario {
        Scenario::awgn(16)
    }

    #[test]
    fn denoise_targets_are_clean_soi() {
        let conds = grid(&[4.0], &[f64::INFINITY]);
        let d = make_dataset(Task::DenoiseSoi, &awgn(), &conds, 3, 7).unwrap();
        let root = RngStream::new(7, 0x6461_7461);
        let m = awgn().draw(4.0, f64::INFINITY, &root.child(0).child(0).child(2)).unwrap();
        let Targets::Waveforms(t) = &d.targets else { panic!() };
        assert_eq!(t.item(2), iq_to_tensor(&[&m.clean_soi]).unwrap().data());
        assert_eq!(d.inputs.item(2), iq_to_tensor(&[&m.y]).unwrap().data());
    }

    #[test]
    fn grid_counts() {
        let es: Vec<f64> = (0..=5).map(|i| 2.0 * i as f64).collect();
        let conds = grid(&es, &[f64::INFINITY]);
        let d = make_dataset(Task::DenoiseSoi, &Scenario::awgn(4), &conds, 100, 1).unwrap();
        assert_eq!(d.len(), 600);
        assert_eq!(d.targets.len(), 600);
        for e in es {
            assert_eq!(d.conditions.iter().filter(|c| c.es_n0_db == e).count(), 100);
        }
    }

    #[test]
    fn timing_offset_target_is_unshifted() {
        let s = Scenario::preset("tau_fixed", 16).unwrap();
        let conds = grid(&[10.0], &[-6.0]);
        let d = make_dataset(Task::EstimateInt, &s, &conds, 1, 3).unwrap();
        let m = s.draw(10.0, -6.0, &RngStream::new(3, 0x6461_7461).child(0).child(0).child(0)).unwrap();
        let Targets::Waveforms(t) = &d.targets else { panic!() };
        assert_eq!(t.data(), iq_to_tensor(&[&m.int_unshifted]).unwrap().data());
        assert_ne!(t.data(), iq_to_tensor(&[&m.clean_int]).unwrap().data());
    }

    #[test]
    fn deterministic_and_balanced() {
        let s = Scenario::preset("classifiers", 16).unwrap();
        let conds = grid(&[10.0], &[-5.0, 5.0]);
        let a = make_dataset(Task::ClassifyNoise, &s, &conds, 2, 5).unwrap();
        assert_eq!(a, make_dataset(Task::ClassifyNoise, &s, &conds, 2, 5).unwrap());
        let Targets::Labels(l) = &a.targets else { panic!() };
        for c in 0..4 {
            assert_eq!(l.iter().filter(|&&v| v == c).count(), 4);
        }
        let sir = make_dataset(Task::ClassifySir, &s, &conds, 3, 5).unwrap();
        let Targets::Labels(l) = &sir.targets else { panic!() };
        assert_eq!(l, &[0, 0, 0, 1, 1, 1]);
        let bits = make_dataset(Task::DemodBits, &awgn(), &grid(&[6.0], &[f64::INFINITY]), 2, 5).unwrap();
        assert_eq!(bits.targets.len(), 2);
        let Targets::Bits(b) = &bits.targets else { panic!() };
        assert_eq!(b.shape(), &[2, 32]);
    }

    #[test]
    fn invalid_pairings_rejected() {
        let conds = grid(&[10.0], &[f64::INFINITY]);
        assert!(make_dataset(Task::EstimateInt, &awgn(), &conds, 1, 1).is_err());
        assert!(make_dataset(Task::ClassifySir, &awgn(), &conds, 1, 1).is_err());
        assert!(make_dataset(Task::DenoiseSoi, &awgn(), &[], 1, 1).is_err());
        let s = Scenario::preset("qpsk_sps32", 16).unwrap();
        assert!(make_dataset(Task::ClassifySir, &s, &conds, 1, 1).is_err());
    }

    #[test]
    fn iq_round_trip() {
        let b = IqBuffer::new((0..10).map(|k| Complex64::new(k as f64, -(k as f64) / 2.0)).collect(), 4).unwrap();
        let t = iq_to_tensor(&[&b, &b]).unwrap();
        assert_eq!(t.shape(), &[2, 2, 10]);
        assert_eq!(tensor_to_iq(&t, 1, 4).unwrap(), b);
        let n = normalize_power(&b);
        assert!((power_of(n.samples()) - 1.0).abs() < 1e-12);
    }
}
