//! Layer graphs with recorded forward passes and reverse-mode gradients.

use std::ops::Range;

use rand::Rng;

use crate::error::{invalid, Error, Result};
use crate::nn::layers::{self, Aux, LayerSpec, Mode, BN_MOMENTUM};
use crate::nn::tensor::{Scalar, Tensor};
use crate::signal::RngStream;

/// Trainable tensor with its gradient and Adam moments.
#[derive(Clone, Debug, PartialEq)]
pub struct Parameter<T> {
    pub name: String,
    pub value: Tensor<T>,
    pub grad: Tensor<T>,
    pub m: Vec<T>,
    pub v: Vec<T>,
    version: u64,
}

impl<T: Scalar> Parameter<T> {
    pub fn new(name: String, value: Tensor<T>) -> Self {
        let n = value.len();
        Self { name, grad: Tensor::zeros(value.shape()), value, m: vec![T::zero(); n], v: vec![T::zero(); n], version: 0 }
    }

    pub fn version(&self) -> u64 {
        self.version
    }

    /// Marks the value as changed so recorded passes are invalidated.
    pub fn touch(&mut self) {
        self.version += 1;
    }

    pub fn zero_grad(&mut self) {
        self.grad.fill(T::zero());
    }
}

/// Named non-trainable state.
#[derive(Clone, Debug, PartialEq)]
pub struct Buffer<T> {
    pub name: String,
    pub value: Tensor<T>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Node {
    pub name: String,
    pub spec: LayerSpec,
    pub inputs: Vec<usize>,
}

/// Incrementally assembles a topologically ordered graph.
#[derive(Debug)]
pub struct ModelBuilder {
    nodes: Vec<Node>,
}

impl ModelBuilder {
    pub fn new(in_channels: usize) -> Self {
        Self { nodes: vec![Node { name: "input".into(), spec: LayerSpec::Input { channels: in_channels }, inputs: vec![] }] }
    }

    pub fn input(&self) -> usize {
        0
    }

    pub fn add(&mut self, name: impl Into<String>, spec: LayerSpec, inputs: &[usize]) -> usize {
        self.nodes.push(Node { name: name.into(), spec, inputs: inputs.to_vec() });
        self.nodes.len() - 1
    }

    /// Validates the graph and initializes weights (Kaiming-uniform, zero
    /// bias, unit BN scale).
    pub fn build<T: Scalar>(self, config: String, rng: &RngStream) -> Result<Model<T>> {
        let mut r = rng.rng();
        let mut params = Vec::new();
        let mut buffers = Vec::new();
        let mut node_params = Vec::new();
        let mut node_buffers = Vec::new();
        let mut names = std::collections::HashSet::new();
        for (i, node) in self.nodes.iter().enumerate() {
            node.spec.validate()?;
            if !names.insert(node.name.clone()) {
                return invalid(format!("duplicate node name {}", node.name));
            }
            if node.inputs.len() != node.spec.arity() || node.inputs.iter().any(|&j| j >= i) {
                return invalid(format!("node {} has invalid inputs {:?}", node.name, node.inputs));
            }
            if i > 0 && matches!(node.spec, LayerSpec::Input { .. }) {
                return invalid("only the first node may be an input");
            }
            let start = params.len();
            let bound = (6.0 / node.spec.fan_in() as f64).sqrt();
            for (suffix, shape) in node.spec.param_shapes() {
                let n: usize = shape.iter().product();
                let data: Vec<f64> = match suffix {
                    "weight" => (0..n).map(|_| r.random_range(-bound..bound)).collect(),
                    "gamma" => vec![1.0; n],
                    _ => vec![0.0; n],
                };
                params.push(Parameter::new(format!("{}.{suffix}", node.name), Tensor::from_f64(shape, &data)?));
            }
            node_params.push(start..params.len());
            let bstart = buffers.len();
            for (suffix, shape) in node.spec.buffer_shapes() {
                let n: usize = shape.iter().product();
                let fill = if suffix == "running_var" { 1.0 } else { 0.0 };
                buffers.push(Buffer { name: format!("{}.{suffix}", node.name), value: Tensor::from_f64(shape, &vec![fill; n])? });
            }
            node_buffers.push(bstart..buffers.len());
        }
        if self.nodes.len() < 2 {
            return invalid("a model needs at least one layer");
        }
        Ok(Model { config, nodes: self.nodes, params, buffers, node_params, node_buffers, tape: None })
    }
}

#[derive(Clone, Debug)]
struct Tape<T> {
    outputs: Vec<Tensor<T>>,
    aux: Vec<Aux<T>>,
    versions: Vec<u64>,
    mode: Mode,
}

/// A layer graph with parameters. The last node is the output.
#[derive(Clone, Debug)]
pub struct Model<T> {
    config: String,
    nodes: Vec<Node>,
    params: Vec<Parameter<T>>,
    buffers: Vec<Buffer<T>>,
    node_params: Vec<Range<usize>>,
    node_buffers: Vec<Range<usize>>,
    tape: Option<Tape<T>>,
}

impl<T: Scalar> Model<T> {
    /// Canonical configuration text the model was built from.
    pub fn config(&self) -> &str {
        &self.config
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn params(&self) -> &[Parameter<T>] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Parameter<T>] {
        &mut self.params
    }

    pub fn buffers(&self) -> &[Buffer<T>] {
        &self.buffers
    }

    pub fn buffers_mut(&mut self) -> &mut [Buffer<T>] {
        &mut self.buffers
    }

    /// Sum of all trainable element counts.
    pub fn count_params(&self) -> usize {
        self.params.iter().map(|p| p.value.len()).sum()
    }

    pub fn zero_grad(&mut self) {
        self.params.iter_mut().for_each(Parameter::zero_grad);
    }

    pub fn clear_tape(&mut self) {
        self.tape = None;
    }

    /// Same graph and weights in another precision.
    pub fn cast<U: Scalar>(&self) -> Model<U> {
        Model {
            config: self.config.clone(),
            nodes: self.nodes.clone(),
            params: self.params.iter().map(|p| Parameter::new(p.name.clone(), p.value.cast())).collect(),
            buffers: self.buffers.iter().map(|b| Buffer { name: b.name.clone(), value: b.value.cast() }).collect(),
            node_params: self.node_params.clone(),
            node_buffers: self.node_buffers.clone(),
            tape: None,
        }
    }

    /// Pure evaluation-mode pass.
    pub fn infer(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let (mut outputs, _, _) = self.run(x, Mode::Eval, false)?;
        Ok(outputs.pop().expect("at least one layer"))
    }

    /// Output in either mode without touching the tape or running statistics.
    pub fn forward_pure(&self, x: &Tensor<T>, mode: Mode) -> Result<Tensor<T>> {
        let (mut outputs, _, _) = self.run(x, mode, false)?;
        Ok(outputs.pop().expect("at least one layer"))
    }

    /// Forward pass that records everything needed by [`Model::backward`].
    /// Train mode also updates batch-norm running statistics.
    pub fn forward(&mut self, x: &Tensor<T>, mode: Mode) -> Result<Tensor<T>> {
        self.tape = None;
        let (outputs, aux, stats) = self.run(x, mode, true)?;
        for (node, s) in stats {
            let r = self.node_buffers[node].clone();
            let mom = T::from_f64(BN_MOMENTUM);
            let keep = T::one() - mom;
            let (mean_buf, var_buf) = self.buffers[r].split_at_mut(1);
            for (b, &m) in mean_buf[0].value.data_mut().iter_mut().zip(&s.mean) {
                *b = keep * *b + mom * m;
            }
            for (b, &v) in var_buf[0].value.data_mut().iter_mut().zip(&s.var_unbiased) {
                *b = keep * *b + mom * v;
            }
        }
        let y = outputs.last().expect("at least one layer").clone();
        let versions = self.params.iter().map(Parameter::version).collect();
        self.tape = Some(Tape { outputs, aux, versions, mode });
        Ok(y)
    }

    #[allow(clippy::type_complexity)]
    fn run(&self, x: &Tensor<T>, mode: Mode, record: bool) -> Result<(Vec<Tensor<T>>, Vec<Aux<T>>, Vec<(usize, layers::BnStats<T>)>)> {
        let LayerSpec::Input { channels } = self.nodes[0].spec else { unreachable!() };
        if x.rank() != 3 || x.shape()[1] != channels {
            return Err(Error::Shape(format!("model expects (batch, {channels}, length), got {:?}", x.shape())));
        }
        if !x.all_finite() {
            return Err(Error::NonFinite("model input".into()));
        }
        let mut outputs: Vec<Tensor<T>> = Vec::with_capacity(self.nodes.len());
        let mut aux = Vec::with_capacity(self.nodes.len());
        let mut stats = Vec::new();
        outputs.push(x.clone());
        aux.push(Aux::None);
        for (i, node) in self.nodes.iter().enumerate().skip(1) {
            let inp = &outputs[node.inputs[0]];
            let p = &self.params[self.node_params[i].clone()];
            let (y, a) = match node.spec {
                LayerSpec::Input { .. } => unreachable!(),
                LayerSpec::Conv1d { .. } => (layers::conv_forward(&node.spec, inp, &p[0].value, &p[1].value)?, Aux::None),
                LayerSpec::ConvT1d { .. } => (layers::convt_forward(&node.spec, inp, &p[0].value, &p[1].value)?, Aux::None),
                LayerSpec::MaxPool1d { kernel } => {
                    let (y, arg) = layers::maxpool_forward(kernel, inp)?;
                    (y, if record { Aux::Argmax(arg) } else { Aux::None })
                }
                LayerSpec::Relu => (layers::relu_forward(inp), Aux::None),
                LayerSpec::Sigmoid => (layers::sigmoid_forward(inp), Aux::None),
                LayerSpec::BatchNorm1d { .. } => {
                    let b = &self.buffers[self.node_buffers[i].clone()];
                    let (y, a, s) = layers::batchnorm_forward(inp, &p[0].value, &p[1].value, &b[0].value, &b[1].value, mode)?;
                    if let Some(s) = s {
                        stats.push((i, s));
                    }
                    (y, if record { a } else { Aux::None })
                }
                LayerSpec::Linear { .. } => (layers::linear_forward(inp, &p[0].value, &p[1].value)?, Aux::None),
                LayerSpec::AdaptiveAvgPool1d => (layers::avgpool_forward(inp)?, Aux::None),
                LayerSpec::ConcatSkip => (layers::concat_forward(inp, &outputs[node.inputs[1]])?, Aux::None),
            };
            if !y.all_finite() {
                return Err(Error::NonFinite(format!("output of node {} ({})", node.name, node.spec.kind())));
            }
            outputs.push(y);
            aux.push(a);
        }
        Ok((outputs, aux, stats))
    }

    /// Accumulates parameter gradients for the recorded pass and returns the
    /// gradient with respect to the model input.
    pub fn backward(&mut self, grad_out: &Tensor<T>) -> Result<Tensor<T>> {
        let tape = self.tape.as_ref().ok_or_else(|| Error::InvalidArgument("backward without a recorded forward pass".into()))?;
        if self.params.iter().map(Parameter::version).ne(tape.versions.iter().copied()) {
            return invalid("parameters changed since the recorded forward pass");
        }
        let n = self.nodes.len();
        if grad_out.shape() != tape.outputs[n - 1].shape() {
            return Err(Error::Shape(format!(
                "output gradient {:?} does not match output {:?}",
                grad_out.shape(),
                tape.outputs[n - 1].shape()
            )));
        }
        let mut grads: Vec<Option<Tensor<T>>> = vec![None; n];
        grads[n - 1] = Some(grad_out.clone());
        for i in (1..n).rev() {
            let Some(dy) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            let x = &tape.outputs[node.inputs[0]];
            let range = self.node_params[i].clone();
            let mut in_grads: Vec<Tensor<T>> = Vec::with_capacity(2);
            match node.spec {
                LayerSpec::Input { .. } => unreachable!(),
                LayerSpec::Conv1d { .. } => {
                    let (w, rest) = self.params[range].split_at_mut(1);
                    in_grads.push(layers::conv_backward(&node.spec, x, &w[0].value, &dy, &mut w[0].grad, &mut rest[0].grad)?);
                }
                LayerSpec::ConvT1d { .. } => {
                    let (w, rest) = self.params[range].split_at_mut(1);
                    in_grads.push(layers::convt_backward(&node.spec, x, &w[0].value, &dy, &mut w[0].grad, &mut rest[0].grad)?);
                }
                LayerSpec::MaxPool1d { .. } => {
                    let Aux::Argmax(arg) = &tape.aux[i] else { unreachable!() };
                    in_grads.push(layers::maxpool_backward(x.shape(), arg, &dy));
                }
                LayerSpec::Relu => in_grads.push(layers::relu_backward(x, &dy)),
                LayerSpec::Sigmoid => in_grads.push(layers::sigmoid_backward(&tape.outputs[i], &dy)),
                LayerSpec::BatchNorm1d { .. } => {
                    let Aux::BatchNorm { xhat, inv_std } = &tape.aux[i] else { unreachable!() };
                    let (g, rest) = self.params[range].split_at_mut(1);
                    let (gamma, dgamma) = (&g[0].value, &mut g[0].grad);
                    in_grads.push(layers::batchnorm_backward(x.shape(), xhat, inv_std, gamma, &dy, dgamma, &mut rest[0].grad, tape.mode));
                }
                LayerSpec::Linear { .. } => {
                    let (w, rest) = self.params[range].split_at_mut(1);
                    in_grads.push(layers::linear_backward(x, &w[0].value, &dy, &mut w[0].grad, &mut rest[0].grad));
                }
                LayerSpec::AdaptiveAvgPool1d => in_grads.push(layers::avgpool_backward(x.shape(), &dy)),
                LayerSpec::ConcatSkip => {
                    let skip = &tape.outputs[node.inputs[1]];
                    let (a, b) = layers::concat_backward(x.shape(), skip.shape(), &dy);
                    in_grads.push(a);
                    in_grads.push(b);
                }
            }
            for (&j, g) in node.inputs.iter().zip(in_grads) {
                match &mut grads[j] {
                    Some(acc) => acc.add_assign(&g)?,
                    slot => *slot = Some(g),
                }
            }
        }
        Ok(grads[0].take().unwrap_or_else(|| Tensor::zeros(tape.outputs[0].shape())))
    }

    /// Replaces a parameter or buffer value by name, checking the shape.
    pub fn set_tensor(&mut self, name: &str, value: Tensor<T>) -> Result<()> {
        if let Some(p) = self.params.iter_mut().find(|p| p.name == name) {
            if p.value.shape() != value.shape() {
                return Err(Error::Shape(format!("{name}: expected {:?}, got {:?}", p.value.shape(), value.shape())));
            }
            p.value = value;
            p.touch();
            return Ok(());
        }
        if let Some(b) = self.buffers.iter_mut().find(|b| b.name == name) {
            if b.value.shape() != value.shape() {
                return Err(Error::Shape(format!("{name}: expected {:?}, got {:?}", b.value.shape(), value.shape())));
            }
            b.value = value;
            return Ok(());
        }
        invalid(format!("unknown tensor {name}"))
    }

    /// All named tensors in declaration order: parameters, then buffers.
    pub fn named_tensors(&self) -> Vec<(&str, &Tensor<T>)> {
        self.params.iter().map(|p| (p.name.as_str(), &p.value)).chain(self.buffers.iter().map(|b| (b.name.as_str(), &b.value))).collect()
    }
}
