//! Declarative network builders and their canonical text form.

use std::fmt::Write as _;

use crate::error::{invalid, Error, Result};
use crate::nn::{LayerSpec, Model, ModelBuilder, Scalar};
use crate::signal::RngStream;

/// Encoder-decoder with skip connections; channels double per level.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct UnetConfig {
    pub levels: usize,
    pub base_channels: usize,
    pub kernel: usize,
    pub pool: usize,
    pub in_channels: usize,
    pub out_channels: usize,
}

impl UnetConfig {
    /// 3 levels, 16 base channels, kernel 7.
    pub fn desk() -> Self {
        Self { levels: 3, base_channels: 16, kernel: 7, pool: 2, in_channels: 2, out_channels: 2 }
    }

    /// Channel plan landing within 0.3% of the large reference count
    /// (2,682,562 vs 2,688,194 trainable values).
    pub fn full_scale() -> Self {
        Self { levels: 3, base_channels: 64, kernel: 3, ..Self::desk() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.levels == 0 || self.base_channels == 0 || self.in_channels == 0 || self.out_channels == 0 {
            return invalid(format!("degenerate U-Net {self:?}"));
        }
        if self.kernel % 2 == 0 {
            return invalid(format!("U-Net kernel {} must be odd", self.kernel));
        }
        if self.pool < 2 {
            return invalid(format!("U-Net pool {} must be >= 2", self.pool));
        }
        Ok(())
    }

    /// Channels at encoder level `i`, with `i == levels` the bottleneck.
    pub fn channels(&self, i: usize) -> usize {
        self.base_channels << i
    }

    /// Shortest input accepted: every level must pool at least one sample.
    pub fn min_len(&self) -> usize {
        self.pool.pow(self.levels as u32)
    }

    /// Trainable values by closed form.
    pub fn param_count(&self) -> usize {
        let conv = |a: usize, b: usize, k: usize| a * b * k + b;
        let k = self.kernel;
        let mut n = 0;
        for i in 0..self.levels {
            let cin = if i == 0 { self.in_channels } else { self.channels(i - 1) };
            n += conv(cin, self.channels(i), k) + conv(self.channels(i), self.channels(i), k);
            n += conv(self.channels(i + 1), self.channels(i), self.pool) + conv(2 * self.channels(i), self.channels(i), k);
            n += conv(self.channels(i), self.channels(i), k);
        }
        let (top, bott) = (self.channels(self.levels - 1), self.channels(self.levels));
        n + conv(top, bott, k) + conv(bott, bott, k) + conv(self.channels(0), self.out_channels, 1)
    }
}

/// Three Conv-BN-ReLU stages, global average pooling and a linear head.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ClassifierConfig {
    pub conv_channels: [usize; 3],
    pub kernel: usize,
    /// Stride of every conv stage; 2 widens the receptive field to cover a
    /// slow interferer's symbol.
    pub stride: usize,
    pub n_classes: usize,
    pub in_channels: usize,
}

impl ClassifierConfig {
    pub fn desk(n_classes: usize) -> Self {
        Self { conv_channels: [16, 32, 64], kernel: 5, stride: 2, n_classes, in_channels: 2 }
    }

    pub fn validate(&self) -> Result<()> {
        let c = self.conv_channels;
        if c[0] == 0 || c[0] > c[1] || c[1] > c[2] {
            return invalid(format!("classifier channels {c:?} must be positive and ascending"));
        }
        if self.kernel % 2 == 0 {
            return invalid(format!("classifier kernel {} must be odd", self.kernel));
        }
        if self.stride == 0 {
            return invalid("classifier stride must be >= 1");
        }
        if self.n_classes < 2 || self.in_channels == 0 {
            return invalid("classifier needs >= 2 classes and >= 1 input channel");
        }
        Ok(())
    }
}

/// Any buildable network; its text form is stored in checkpoints.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Architecture {
    Unet(UnetConfig),
    /// U-Net trunk flattened into `n_bits` sigmoid outputs; the flatten
    /// fixes the input length.
    UnetDemod {
        unet: UnetConfig,
        input_len: usize,
        n_bits: usize,
    },
    Classifier(ClassifierConfig),
}

impl Architecture {
    /// Value of the `arch` key.
    pub fn kind(&self) -> &'static str {
        match self {
            Architecture::Unet(_) => "unet",
            Architecture::UnetDemod { .. } => "unet_demod",
            Architecture::Classifier(_) => "classifier",
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Architecture::Unet(u) => u.validate(),
            Architecture::UnetDemod { unet, input_len, n_bits } => {
                unet.validate()?;
                if *input_len < unet.min_len() || *n_bits == 0 {
                    return invalid(format!("demodulator needs input_len >= {} and n_bits > 0", unet.min_len()));
                }
                Ok(())
            }
            Architecture::Classifier(c) => c.validate(),
        }
    }

    /// Canonical `key=value` lines.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let unet_lines = |s: &mut String, u: &UnetConfig| {
            let _ = write!(
                s,
                "levels={}\nbase_channels={}\nkernel={}\npool={}\nin_channels={}\nout_channels={}\n",
                u.levels, u.base_channels, u.kernel, u.pool, u.in_channels, u.out_channels
            );
        };
        match self {
            Architecture::Unet(u) => {
                s.push_str("arch=unet\n");
                unet_lines(&mut s, u);
            }
            Architecture::UnetDemod { unet, input_len, n_bits } => {
                s.push_str("arch=unet_demod\n");
                unet_lines(&mut s, unet);
                let _ = write!(s, "input_len={input_len}\nn_bits={n_bits}\n");
            }
            Architecture::Classifier(c) => {
                let [a, b, d] = c.conv_channels;
                let _ = write!(
                    s,
                    "arch=classifier\nconv_channels={a},{b},{d}\nkernel={}\nstride={}\nn_classes={}\nin_channels={}\n",
                    c.kernel, c.stride, c.n_classes, c.in_channels
                );
            }
        }
        s
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut kv = std::collections::BTreeMap::new();
        for line in text.lines().map(str::trim).filter(|l| !l.is_empty()) {
            let (k, v) = line.split_once('=').ok_or_else(|| Error::Checkpoint(format!("bad architecture line `{line}`")))?;
            if kv.insert(k.trim().to_string(), v.trim().to_string()).is_some() {
                return Err(Error::Checkpoint(format!("duplicate architecture key `{k}`")));
            }
        }
        let mut take = |k: &str| kv.remove(k).ok_or_else(|| Error::Checkpoint(format!("architecture is missing `{k}`")));
        let num = |v: String, k: &str| v.parse::<usize>().map_err(|_| Error::Checkpoint(format!("`{k}` is not an integer: {v}")));
        let arch = take("arch")?;
        let unet = |take: &mut dyn FnMut(&str) -> Result<String>| -> Result<UnetConfig> {
            Ok(UnetConfig {
                levels: num(take("levels")?, "levels")?,
                base_channels: num(take("base_channels")?, "base_channels")?,
                kernel: num(take("kernel")?, "kernel")?,
                pool: num(take("pool")?, "pool")?,
                in_channels: num(take("in_channels")?, "in_channels")?,
                out_channels: num(take("out_channels")?, "out_channels")?,
            })
        };
        let a = match arch.as_str() {
            "unet" => Architecture::Unet(unet(&mut take)?),
            "unet_demod" => {
                let u = unet(&mut take)?;
                Architecture::UnetDemod {
                    unet: u,
                    input_len: num(take("input_len")?, "input_len")?,
                    n_bits: num(take("n_bits")?, "n_bits")?,
                }
            }
            "classifier" => {
                let ch = take("conv_channels")?;
                let parts: Vec<usize> = ch.split(',').map(|p| num(p.trim().to_string(), "conv_channels")).collect::<Result<_>>()?;
                let conv_channels: [usize; 3] =
                    parts.try_into().map_err(|_| Error::Checkpoint("conv_channels needs exactly three values".into()))?;
                Architecture::Classifier(ClassifierConfig {
                    conv_channels,
                    kernel: num(take("kernel")?, "kernel")?,
                    stride: num(take("stride")?, "stride")?,
                    n_classes: num(take("n_classes")?, "n_classes")?,
                    in_channels: num(take("in_channels")?, "in_channels")?,
                })
            }
            other => return Err(Error::Checkpoint(format!("unknown architecture `{other}`"))),
        };
        drop(take);
        if let Some(k) = kv.keys().next() {
            return Err(Error::Checkpoint(format!("unknown architecture key `{k}`")));
        }
        a.validate().map_err(|e| Error::Checkpoint(e.to_string()))?;
        Ok(a)
    }

    pub fn build<T: Scalar>(&self, rng: &RngStream) -> Result<Model<T>> {
        self.validate()?;
        let text = self.to_text();
        match self {
            Architecture::Unet(u) => {
                let mut b = ModelBuilder::new(u.in_channels);
                unet_trunk(&mut b, u);
                b.build(text, rng)
            }
            Architecture::UnetDemod { unet, input_len, n_bits } => {
                let mut b = ModelBuilder::new(unet.in_channels);
                let trunk = unet_trunk(&mut b, unet);
                let fc =
                    b.add("head.fc", LayerSpec::Linear { in_features: unet.out_channels * input_len, out_features: *n_bits }, &[trunk]);
                b.add("head.sigmoid", LayerSpec::Sigmoid, &[fc]);
                b.build(text, rng)
            }
            Architecture::Classifier(c) => {
                let mut b = ModelBuilder::new(c.in_channels);
                let mut last = b.input();
                let mut cin = c.in_channels;
                for (i, &ch) in c.conv_channels.iter().enumerate() {
                    let conv = LayerSpec::Conv1d { in_ch: cin, out_ch: ch, kernel: c.kernel, stride: c.stride, padding: c.kernel / 2 };
                    last = b.add(format!("stage{i}.conv"), conv, &[last]);
                    last = b.add(format!("stage{i}.bn"), LayerSpec::BatchNorm1d { channels: ch }, &[last]);
                    last = b.add(format!("stage{i}.relu"), LayerSpec::Relu, &[last]);
                    cin = ch;
                }
                last = b.add("gap", LayerSpec::AdaptiveAvgPool1d, &[last]);
                b.add("fc", LayerSpec::Linear { in_features: cin, out_features: c.n_classes }, &[last]);
                b.build(text, rng)
            }
        }
    }
}

fn conv_relu_pair(b: &mut ModelBuilder, prefix: &str, cin: usize, cout: usize, k: usize, input: usize) -> usize {
    let c1 =
        b.add(format!("{prefix}.conv1"), LayerSpec::Conv1d { in_ch: cin, out_ch: cout, kernel: k, stride: 1, padding: k / 2 }, &[input]);
    let r1 = b.add(format!("{prefix}.relu1"), LayerSpec::Relu, &[c1]);
    let c2 = b.add(format!("{prefix}.conv2"), LayerSpec::Conv1d { in_ch: cout, out_ch: cout, kernel: k, stride: 1, padding: k / 2 }, &[r1]);
    b.add(format!("{prefix}.relu2"), LayerSpec::Relu, &[c2])
}

/// Adds the U-Net body and returns the index of its linear 1x1 output conv.
fn unet_trunk(b: &mut ModelBuilder, u: &UnetConfig) -> usize {
    let k = u.kernel;
    let mut skips = Vec::with_capacity(u.levels);
    let mut last = b.input();
    let mut cin = u.in_channels;
    for i in 0..u.levels {
        let skip = conv_relu_pair(b, &format!("enc{i}"), cin, u.channels(i), k, last);
        skips.push(skip);
        last = b.add(format!("enc{i}.pool"), LayerSpec::MaxPool1d { kernel: u.pool }, &[skip]);
        cin = u.channels(i);
    }
    last = conv_relu_pair(b, "bottleneck", cin, u.channels(u.levels), k, last);
    for i in (0..u.levels).rev() {
        let up = LayerSpec::ConvT1d { in_ch: u.channels(i + 1), out_ch: u.channels(i), kernel: u.pool, stride: u.pool, padding: 0 };
        let up = b.add(format!("dec{i}.up"), up, &[last]);
        let cat = b.add(format!("dec{i}.cat"), LayerSpec::ConcatSkip, &[up, skips[i]]);
        last = conv_relu_pair(b, &format!("dec{i}"), 2 * u.channels(i), u.channels(i), k, cat);
    }
    let out = LayerSpec::Conv1d { in_ch: u.channels(0), out_ch: u.out_channels, kernel: 1, stride: 1, padding: 0 };
    b.add("out", out, &[last])
}

pub fn build_unet(cfg: UnetConfig, rng: &RngStream) -> Result<Model<f32>> {
    Architecture::Unet(cfg).build(rng)
}

pub fn build_unet_demod(cfg: UnetConfig, input_len: usize, n_bits: usize, rng: &RngStream) -> Result<Model<f32>> {
    Architecture::UnetDemod { unet: cfg, input_len, n_bits }.build(rng)
}

pub fn build_cnn_classifier(cfg: ClassifierConfig, rng: &RngStream) -> Result<Model<f32>> {
    Architecture::Classifier(cfg).build(rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::gradcheck::{grad_check, random_tensor, randomize_biases, FD_EPS};
    use crate::nn::{Mode, Tensor};

    fn rng() -> RngStream {
        RngStream::new(5, 0)
    }

    #[test]
    fn desk_count_matches_closed_form() {
        let cfg = UnetConfig::desk();
        let m = build_unet(cfg, &rng()).unwrap();
        assert_eq!(m.count_params(), cfg.param_count());
        // independent tally: per level 2 encoder convs, 1 up-conv, 2 decoder convs
        let c = [16usize, 32, 64, 128];
        let enc =
            (2 * 16 * 7 + 16) + (16 * 16 * 7 + 16) + (16 * 32 * 7 + 32) + (32 * 32 * 7 + 32) + (32 * 64 * 7 + 64) + (64 * 64 * 7 + 64);
        let bott = (64 * 128 * 7 + 128) + (128 * 128 * 7 + 128);
        let dec: usize = (0..3).map(|i| c[i + 1] * c[i] * 2 + c[i] + 2 * c[i] * c[i] * 7 + c[i] + c[i] * c[i] * 7 + c[i]).sum();
        assert_eq!(m.count_params(), enc + bott + dec + 16 * 2 + 2);
        assert_eq!(m.count_params(), 363_058);
    }

    #[test]
    fn full_scale_count_is_documented() {
        let cfg = UnetConfig::full_scale();
        assert_eq!(cfg.param_count(), 2_682_562);
        let rel = (cfg.param_count() as f64 - 2_688_194.0).abs() / 2_688_194.0;
        assert!(rel < 0.003);
        let m = build_unet(cfg, &rng()).unwrap();
        assert_eq!(m.count_params(), cfg.param_count());
    }

    #[test]
    fn single_conv_count() {
        let mut b = ModelBuilder::new(2);
        let x = b.input();
        b.add("c", LayerSpec::Conv1d { in_ch: 2, out_ch: 4, kernel: 3, stride: 1, padding: 1 }, &[x]);
        let m: Model<f32> = b.build("t".into(), &rng()).unwrap();
        assert_eq!(m.count_params(), 28);
    }

    #[test]
    fn unet_preserves_length() {
        let cfg = UnetConfig { base_channels: 4, ..UnetConfig::desk() };
        let m = build_unet(cfg, &rng()).unwrap();
        for l in [8, 9, 15, 512, 517] {
            let y = m.infer(&Tensor::zeros(&[1, 2, l])).unwrap();
            assert_eq!(y.shape(), &[1, 2, l]);
        }
        // decoder level inputs: up-conv channels + encoder channels
        for n in m.nodes().iter().filter(|n| n.name.ends_with(".conv1") && n.name.starts_with("dec")) {
            let i: usize = n.name[3..4].parse().unwrap();
            let LayerSpec::Conv1d { in_ch, .. } = n.spec else { panic!() };
            assert_eq!(in_ch, cfg.channels(i) + cfg.channels(i));
        }
    }

    #[test]
    fn demod_outputs_are_probabilities() {
        let cfg = UnetConfig { base_channels: 2, levels: 2, ..UnetConfig::desk() };
        let m = build_unet_demod(cfg, 64, 16, &rng()).unwrap();
        let x = random_tensor::<f64>(&[2, 2, 64], 3).cast::<f32>();
        let y = m.infer(&x).unwrap();
        assert_eq!(y.shape(), &[2, 16]);
        assert!(y.data().iter().all(|&v| v > 0.0 && v < 1.0));
    }

    #[test]
    fn demod_gradients_flow_end_to_end() {
        let cfg = UnetConfig { base_channels: 2, levels: 1, kernel: 3, ..UnetConfig::desk() };
        let mut m: Model<f64> = Architecture::UnetDemod { unet: cfg, input_len: 8, n_bits: 4 }.build(&rng()).unwrap();
        // zero biases put dead ReLU regions exactly on the kink
        randomize_biases(&mut m, 4);
        let x = random_tensor(&[2, 2, 8], 4);
        let r = grad_check(&mut m, &x, Mode::Train, FD_EPS, 300, 4).unwrap();
        assert!(r.max_rel_error < 1e-4, "{} at {}", r.max_rel_error, r.worst);
    }

    #[test]
    fn classifier_is_length_agnostic() {
        let m = build_cnn_classifier(ClassifierConfig::desk(4), &rng()).unwrap();
        let a = m.infer(&random_tensor::<f64>(&[1, 2, 500], 1).cast()).unwrap();
        let b = m.infer(&random_tensor::<f64>(&[1, 2, 8000], 2).cast()).unwrap();
        assert_eq!(a.shape(), &[1, 4]);
        assert_eq!(a.shape(), b.shape());
        assert!(a.all_finite() && b.all_finite());
        assert!(build_cnn_classifier(ClassifierConfig { conv_channels: [32, 16, 64], ..ClassifierConfig::desk(2) }, &rng()).is_err());
    }

    #[test]
    fn text_round_trip() {
        for a in [
            Architecture::Unet(UnetConfig::desk()),
            Architecture::UnetDemod { unet: UnetConfig::desk(), input_len: 2144, n_bits: 512 },
            Architecture::Classifier(ClassifierConfig::desk(2)),
        ] {
            let t = a.to_text();
            assert_eq!(Architecture::parse(&t).unwrap(), a);
        }
        assert!(Architecture::parse("arch=unet\nlevels=3\n").is_err());
        assert!(Architecture::parse(&(Architecture::Unet(UnetConfig::desk()).to_text() + "extra=1\n")).is_err());
    }
}
