//! Central finite-difference verification of analytic gradients.

use rand::seq::index::sample;
use rand::Rng;

use crate::error::Result;
use crate::nn::layers::{LayerSpec, Mode};
use crate::nn::loss::{loss_bce, loss_mse, loss_softmax_ce};
use crate::nn::model::{Model, ModelBuilder};
use crate::nn::tensor::{Scalar, Tensor};
use crate::signal::RngStream;

pub const FD_EPS: f64 = 1e-6;
pub const MIN_COORDS: usize = 200;

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub checked: usize,
    /// Coordinate with the largest error, e.g. `conv.weight[3]` or `input[7]`.
    pub worst: String,
}

fn rel_error(a: f64, n: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(1e-8)
}

/// Checks `d(sum r * y)/d(theta)` for parameters and input on a random subset
/// of at least `n_coords` coordinates (all of them when fewer exist). The
/// analytic side runs at precision `T`; the central differences always run on
/// a 64-bit copy of the same network so the reference is exact to `eps^2`.
pub fn grad_check<T: Scalar>(
    model: &mut Model<T>,
    input: &Tensor<T>,
    mode: Mode,
    eps: f64,
    n_coords: usize,
    seed: u64,
) -> Result<GradCheckReport> {
    grad_check_with(model, input, mode, eps, n_coords, seed, &|_| {})
}

/// As [`grad_check`], with `tamper` applied to the analytic gradients before
/// comparison.
pub fn grad_check_with<T: Scalar>(
    model: &mut Model<T>,
    input: &Tensor<T>,
    mode: Mode,
    eps: f64,
    n_coords: usize,
    seed: u64,
    tamper: &dyn Fn(&mut Model<T>),
) -> Result<GradCheckReport> {
    let mut rng = RngStream::new(seed, 0x6772_6164).rng();
    let y = model.forward(input, mode)?;
    let r: Vec<f64> = (0..y.len()).map(|_| rng.random_range(-1.0..1.0)).collect();
    let weights = Tensor::new(y.shape().to_vec(), r.iter().map(|&v| T::from_f64(v)).collect())?;
    model.zero_grad();
    let dx = model.backward(&weights)?;
    tamper(model);

    let mut reference: Model<f64> = model.cast();
    let mut x: Tensor<f64> = input.cast();
    let mut coords: Vec<(Option<usize>, usize)> = Vec::new();
    for (pi, p) in model.params().iter().enumerate() {
        coords.extend((0..p.value.len()).map(|i| (Some(pi), i)));
    }
    coords.extend((0..input.len()).map(|i| (None, i)));
    let chosen: Vec<usize> =
        if coords.len() <= n_coords { (0..coords.len()).collect() } else { sample(&mut rng, coords.len(), n_coords).into_vec() };

    let mut report = GradCheckReport { max_rel_error: 0.0, checked: 0, worst: String::new() };
    for ci in chosen {
        let (pi, i) = coords[ci];
        let analytic = match pi {
            Some(pi) => model.params()[pi].grad.data()[i],
            None => dx.data()[i],
        }
        .as_f64();
        let eval = |delta: f64, m: &mut Model<f64>, x: &mut Tensor<f64>| -> Result<Tensor<f64>> {
            match pi {
                Some(pi) => m.params_mut()[pi].value.data_mut()[i] += delta,
                None => x.data_mut()[i] += delta,
            }
            m.forward_pure(x, mode)
        };
        let orig = match pi {
            Some(pi) => reference.params()[pi].value.data()[i],
            None => x.data()[i],
        };
        let yp = eval(eps, &mut reference, &mut x)?;
        let ym = eval(-2.0 * eps, &mut reference, &mut x)?;
        match pi {
            Some(pi) => reference.params_mut()[pi].value.data_mut()[i] = orig,
            None => x.data_mut()[i] = orig,
        }
        // differences taken element-wise so untouched outputs contribute exactly zero
        let numeric: f64 = yp.data().iter().zip(ym.data()).zip(&r).map(|((a, b), w)| w * (a - b)).sum::<f64>() / (2.0 * eps);
        let e = rel_error(analytic, numeric);
        report.checked += 1;
        if e > report.max_rel_error || report.worst.is_empty() {
            report.max_rel_error = e;
            let at = match pi {
                Some(pi) => format!("{}[{i}]", model.params()[pi].name),
                None => format!("input[{i}]"),
            };
            report.worst = format!("{at} (analytic {analytic:.6e}, numeric {numeric:.6e})");
        }
    }
    model.clear_tape();
    Ok(report)
}

/// A loss gradient with respect to its prediction at precision `T`, checked
/// against central differences of the same loss in 64-bit.
pub fn grad_check_loss<T: Scalar>(
    analytic: &dyn Fn(&Tensor<T>) -> Result<(f64, Tensor<T>)>,
    reference: &dyn Fn(&Tensor<f64>) -> Result<(f64, Tensor<f64>)>,
    pred: &Tensor<f64>,
    eps: f64,
) -> Result<GradCheckReport> {
    let (_, grad) = analytic(&pred.cast())?;
    let mut report = GradCheckReport { max_rel_error: 0.0, checked: 0, worst: String::new() };
    let mut p = pred.clone();
    for i in 0..pred.len() {
        let orig = p.data()[i];
        p.data_mut()[i] = orig + eps;
        let lp = reference(&p)?.0;
        p.data_mut()[i] = orig - eps;
        let lm = reference(&p)?.0;
        p.data_mut()[i] = orig;
        let e = rel_error(grad.data()[i].as_f64(), (lp - lm) / (2.0 * eps));
        report.checked += 1;
        if e > report.max_rel_error || report.worst.is_empty() {
            report.max_rel_error = e;
            report.worst = format!("pred[{i}]");
        }
    }
    Ok(report)
}

/// Random input tensor uniform in `[-1, 1)`.
pub fn random_tensor<T: Scalar>(shape: &[usize], seed: u64) -> Tensor<T> {
    let mut rng = RngStream::new(seed, 0x7465_6e73).rng();
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| T::from_f64(rng.random_range(-1.0..1.0))).collect()).expect("shape matches")
}

/// Replaces every bias and BN shift with a uniform draw in `[-0.5, 0.5)`.
pub fn randomize_biases<T: Scalar>(model: &mut Model<T>, seed: u64) {
    let mut rng = RngStream::new(seed, 0x6269_6173).rng();
    for p in model.params_mut().iter_mut().filter(|p| p.name.ends_with(".bias") || p.name.ends_with(".beta")) {
        p.value.data_mut().iter_mut().for_each(|v| *v = T::from_f64(rng.random_range(-0.5..0.5)));
        p.touch();
    }
}

fn single<T: Scalar>(in_ch: usize, layers: &[(&str, LayerSpec)], seed: u64) -> Result<Model<T>> {
    let mut b = ModelBuilder::new(in_ch);
    let mut last = b.input();
    for (name, spec) in layers {
        last = b.add(*name, *spec, &[last]);
    }
    b.build("gradcheck".into(), &RngStream::new(seed, 1))
}

/// Loss of sigmoid outputs and its gradient with respect to the logits.
fn sigmoid_bce<T: Scalar>(z: &Tensor<T>, bits: &Tensor<T>) -> Result<(f64, Tensor<T>)> {
    let mut p = z.clone();
    p.data_mut().iter_mut().for_each(|v| *v = T::one() / (T::one() + (-*v).exp()));
    let (l, mut dz) = loss_bce(&p, bits)?;
    dz.data_mut().iter_mut().zip(p.data()).for_each(|(d, &s)| *d = *d * s * (T::one() - s));
    Ok((l, dz))
}

/// One finite-difference check per layer kind and loss in 64-bit mode.
pub fn gradient_suite(seed: u64) -> Result<Vec<(String, GradCheckReport)>> {
    gradient_suite_in::<f64>(seed)
}

/// [`gradient_suite`] with the analytic gradients computed at precision `T`.
pub fn gradient_suite_in<T: Scalar>(seed: u64) -> Result<Vec<(String, GradCheckReport)>> {
    let eps = FD_EPS;
    let conv = |in_ch, out_ch, kernel, stride, padding| LayerSpec::Conv1d { in_ch, out_ch, kernel, stride, padding };
    let mut out = Vec::new();
    let mut run = |name: &str, mut m: Model<T>, shape: &[usize], mode: Mode| -> Result<()> {
        let x = random_tensor(shape, seed ^ name.len() as u64);
        out.push((name.to_string(), grad_check(&mut m, &x, mode, eps, MIN_COORDS, seed)?));
        Ok(())
    };
    run("conv1d", single(3, &[("conv", conv(3, 4, 5, 1, 2))], seed)?, &[2, 3, 13], Mode::Train)?;
    run("conv1d_strided", single(2, &[("conv", conv(2, 3, 4, 3, 1))], seed)?, &[2, 2, 17], Mode::Train)?;
    run(
        "convt1d",
        single(3, &[("convt", LayerSpec::ConvT1d { in_ch: 3, out_ch: 2, kernel: 3, stride: 2, padding: 1 })], seed)?,
        &[2, 3, 9],
        Mode::Train,
    )?;
    run("maxpool1d", single(2, &[("pool", LayerSpec::MaxPool1d { kernel: 2 })], seed)?, &[2, 2, 15], Mode::Train)?;
    run("relu", single(2, &[("relu", LayerSpec::Relu)], seed)?, &[2, 2, 20], Mode::Train)?;
    run("sigmoid", single(2, &[("sig", LayerSpec::Sigmoid)], seed)?, &[2, 2, 20], Mode::Train)?;
    run("batchnorm1d_train", single(3, &[("bn", LayerSpec::BatchNorm1d { channels: 3 })], seed)?, &[4, 3, 10], Mode::Train)?;
    run("batchnorm1d_eval", single(3, &[("bn", LayerSpec::BatchNorm1d { channels: 3 })], seed)?, &[4, 3, 10], Mode::Eval)?;
    run("linear", single(2, &[("fc", LayerSpec::Linear { in_features: 18, out_features: 5 })], seed)?, &[3, 2, 9], Mode::Train)?;
    run(
        "adaptiveavgpool1d",
        single(3, &[("gap", LayerSpec::AdaptiveAvgPool1d), ("fc", LayerSpec::Linear { in_features: 3, out_features: 2 })], seed)?,
        &[2, 3, 11],
        Mode::Train,
    )?;
    {
        let mut b = ModelBuilder::new(2);
        let x = b.input();
        let c = b.add("enc", conv(2, 3, 3, 1, 1), &[x]);
        let p = b.add("pool", LayerSpec::MaxPool1d { kernel: 2 }, &[c]);
        let u = b.add("up", LayerSpec::ConvT1d { in_ch: 3, out_ch: 2, kernel: 2, stride: 2, padding: 0 }, &[p]);
        b.add("cat", LayerSpec::ConcatSkip, &[u, c]);
        run("concatskip", b.build("gradcheck".into(), &RngStream::new(seed, 2))?, &[2, 2, 11], Mode::Train)?;
    }

    let pred = random_tensor::<f64>(&[2, 3, 7], seed);
    let target = random_tensor::<f64>(&[2, 3, 7], seed + 1);
    let target_t = target.cast::<T>();
    out.push(("loss_mse".into(), grad_check_loss(&|p| loss_mse(p, &target_t), &|p| loss_mse(p, &target), &pred, eps)?));

    // sigmoid followed by BCE, differentiated with respect to the logits
    let logits = random_tensor::<f64>(&[2, 12], seed + 2);
    let bits = Tensor::new(vec![2, 12], (0..24).map(|k| ((k * 5 + seed as usize) % 3 == 0) as u8 as f64).collect())?;
    let bits_t = bits.cast::<T>();
    out.push(("loss_bce".into(), grad_check_loss(&|z| sigmoid_bce(z, &bits_t), &|z| sigmoid_bce(z, &bits), &logits, eps)?));
    let labels = [1usize, 3];
    let scores = random_tensor::<f64>(&[2, 4], seed + 3);
    out.push((
        "loss_softmax_ce".into(),
        grad_check_loss(&|z: &Tensor<T>| loss_softmax_ce(z, &labels), &|z| loss_softmax_ce(z, &labels), &scores, eps)?,
    ));
    Ok(out)
}
