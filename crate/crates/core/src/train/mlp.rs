use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dist::{sample, sample_labeled, DiscreteDomain, OodScenario};
use crate::error::{OodError, Result};
use crate::oracle::EnergyMargins;
use crate::scalar::{sigmoid, Scalar};

use super::gradcheck::Differentiable;
use super::terms::{point_loss, PointWeights};
use super::{LossKind, LossSpec, TabularLogits};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Tanh,
    Sigmoid,
    Softplus,
}

impl Activation {
    fn apply<T: Scalar>(self, x: T) -> T {
        match self {
            Activation::Tanh => x.tanh(),
            Activation::Sigmoid => sigmoid(x),
            Activation::Softplus => x.max(T::zero()) + (-x.abs()).exp().ln_1p(),
        }
    }

    fn derivative<T: Scalar>(self, pre: T, post: T) -> T {
        match self {
            Activation::Tanh => T::one() - post * post,
            Activation::Sigmoid => post * (T::one() - post),
            Activation::Softplus => sigmoid(pre),
        }
    }
}

/// Layer sizes of a [`SharedMlp`].
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MlpArchitecture {
    pub input_dim: usize,
    pub hidden: Vec<usize>,
    /// Width of the class head: `K`, or `K+1` for the background class.
    pub class_outputs: usize,
    pub activation: Activation,
}

impl MlpArchitecture {
    /// Trunk `input_dim → 64 → 64` with tanh, class head sized for `kind`.
    pub fn for_kind(kind: LossKind, classes: usize, input_dim: usize) -> Self {
        Self { input_dim, hidden: vec![64, 64], class_outputs: class_outputs(kind, classes), activation: Activation::Tanh }
    }

    pub fn with_hidden(mut self, hidden: Vec<usize>) -> Self {
        self.hidden = hidden;
        self
    }

    pub fn with_activation(mut self, activation: Activation) -> Self {
        self.activation = activation;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.class_outputs == 0 || self.hidden.iter().any(|&h| h == 0) {
            return Err(OodError::InvalidParameter(format!("degenerate architecture {self:?}")));
        }
        Ok(())
    }
}

fn class_outputs(kind: LossKind, classes: usize) -> usize {
    if kind == LossKind::BackgroundClass {
        classes + 1
    } else {
        classes
    }
}

/// Fully connected layer; `weights` is `outputs × inputs` row-major.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dense<T> {
    pub inputs: usize,
    pub outputs: usize,
    pub weights: Vec<T>,
    pub bias: Vec<T>,
}

impl<T: Scalar> Dense<T> {
    pub fn zeros(inputs: usize, outputs: usize) -> Self {
        Self { inputs, outputs, weights: vec![T::zero(); inputs * outputs], bias: vec![T::zero(); outputs] }
    }

    fn glorot(inputs: usize, outputs: usize, rng: &mut ChaCha8Rng) -> Self {
        let limit = (6.0 / (inputs + outputs) as f64).sqrt();
        let weights = (0..inputs * outputs).map(|_| T::lit(rng.gen_range(-limit..limit))).collect();
        Self { inputs, outputs, weights, bias: vec![T::zero(); outputs] }
    }

    fn forward(&self, x: &[T]) -> Vec<T> {
        (0..self.outputs)
            .map(|o| {
                let row = &self.weights[o * self.inputs..(o + 1) * self.inputs];
                row.iter().zip(x).fold(self.bias[o], |acc, (&w, &v)| acc + w * v)
            })
            .collect()
    }

    /// Accumulates parameter gradients into `grad` and returns `dL/dx`.
    fn backward(&self, x: &[T], dy: &[T], grad: &mut Dense<T>) -> Vec<T> {
        let mut dx = vec![T::zero(); self.inputs];
        for (o, &d) in dy.iter().enumerate() {
            if d == T::zero() {
                continue;
            }
            grad.bias[o] += d;
            let base = o * self.inputs;
            for i in 0..self.inputs {
                grad.weights[base + i] += d * x[i];
                dx[i] += d * self.weights[base + i];
            }
        }
        dx
    }

    fn param_count(&self) -> usize {
        self.weights.len() + self.bias.len()
    }

    fn is_finite(&self) -> bool {
        self.weights.iter().chain(&self.bias).all(|v| v.is_finite())
    }
}

/// A trunk of dense layers feeding a class head and a one-logit
/// discriminator head.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SharedMlp<T> {
    pub architecture: MlpArchitecture,
    pub trunk: Vec<Dense<T>>,
    pub class_head: Dense<T>,
    pub disc_head: Dense<T>,
}

/// Per-input outputs of [`mlp_forward`].
#[derive(Clone, Debug, PartialEq)]
pub struct MlpOutput<T> {
    pub class_logits: Vec<Vec<T>>,
    pub disc_logits: Vec<T>,
}

struct Trace<T> {
    /// `acts[0]` is the input, `acts[l+1]` the output of trunk layer `l`.
    acts: Vec<Vec<T>>,
    pre: Vec<Vec<T>>,
    class: Vec<T>,
    disc: T,
}

impl<T: Scalar> SharedMlp<T> {
    /// Glorot-uniform weights and zero biases.
    pub fn new(architecture: MlpArchitecture, seed: u64) -> Result<Self> {
        Self::init(architecture, &mut ChaCha8Rng::seed_from_u64(seed))
    }

    fn init(architecture: MlpArchitecture, rng: &mut ChaCha8Rng) -> Result<Self> {
        architecture.validate()?;
        let mut trunk = Vec::with_capacity(architecture.hidden.len());
        let mut width = architecture.input_dim;
        for &h in &architecture.hidden {
            trunk.push(Dense::glorot(width, h, rng));
            width = h;
        }
        let class_head = Dense::glorot(width, architecture.class_outputs, rng);
        let disc_head = Dense::glorot(width, 1, rng);
        Ok(Self { architecture, trunk, class_head, disc_head })
    }

    pub fn zeros(architecture: MlpArchitecture) -> Result<Self> {
        architecture.validate()?;
        let mut trunk = Vec::new();
        let mut width = architecture.input_dim;
        for &h in &architecture.hidden {
            trunk.push(Dense::zeros(width, h));
            width = h;
        }
        let class_head = Dense::zeros(width, architecture.class_outputs);
        Ok(Self { architecture, trunk, class_head, disc_head: Dense::zeros(width, 1) })
    }

    fn zeros_like(&self) -> Self {
        Self {
            architecture: self.architecture.clone(),
            trunk: self.trunk.iter().map(|l| Dense::zeros(l.inputs, l.outputs)).collect(),
            class_head: Dense::zeros(self.class_head.inputs, self.class_head.outputs),
            disc_head: Dense::zeros(self.disc_head.inputs, 1),
        }
    }

    fn layers(&self) -> impl Iterator<Item = &Dense<T>> {
        self.trunk.iter().chain([&self.class_head, &self.disc_head])
    }

    fn layers_mut(&mut self) -> impl Iterator<Item = &mut Dense<T>> {
        self.trunk.iter_mut().chain([&mut self.class_head, &mut self.disc_head])
    }

    pub fn param_count(&self) -> usize {
        self.layers().map(Dense::param_count).sum()
    }

    /// Parameters flattened layer by layer, weights before biases.
    pub fn to_flat(&self) -> Vec<T> {
        self.layers().flat_map(|l| l.weights.iter().chain(&l.bias).copied()).collect()
    }

    pub fn set_flat(&mut self, params: &[T]) -> Result<()> {
        if params.len() != self.param_count() {
            return Err(OodError::shape(self.param_count(), params.len()));
        }
        let mut it = params.iter().copied();
        for layer in self.layers_mut() {
            for v in layer.weights.iter_mut().chain(layer.bias.iter_mut()) {
                *v = it.next().unwrap_or_default();
            }
        }
        Ok(())
    }

    /// Whether all parameters are finite and the layer sizes chain.
    pub fn is_valid(&self) -> bool {
        let mut width = self.architecture.input_dim;
        for (layer, &h) in self.trunk.iter().zip(&self.architecture.hidden) {
            if layer.inputs != width || layer.outputs != h {
                return false;
            }
            width = h;
        }
        self.trunk.len() == self.architecture.hidden.len()
            && self.class_head.inputs == width
            && self.class_head.outputs == self.architecture.class_outputs
            && self.disc_head.inputs == width
            && self.disc_head.outputs == 1
            && self.layers().all(|l| l.weights.len() == l.inputs * l.outputs && l.bias.len() == l.outputs)
            && self.layers().all(Dense::is_finite)
    }

    fn trace(&self, input: &[T]) -> Trace<T> {
        let act = self.architecture.activation;
        let mut acts = vec![input.to_vec()];
        let mut pre = Vec::with_capacity(self.trunk.len());
        for layer in &self.trunk {
            let z = layer.forward(acts.last().map(Vec::as_slice).unwrap_or_default());
            acts.push(z.iter().map(|&v| act.apply(v)).collect());
            pre.push(z);
        }
        let features = acts.last().map(Vec::as_slice).unwrap_or_default();
        let class = self.class_head.forward(features);
        let disc = self.disc_head.forward(features)[0];
        Trace { acts, pre, class, disc }
    }

    fn backward(&self, trace: &Trace<T>, d_class: &[T], d_disc: T, grad: &mut SharedMlp<T>) {
        let act = self.architecture.activation;
        let features = &trace.acts[trace.acts.len() - 1];
        let mut dh = self.class_head.backward(features, d_class, &mut grad.class_head);
        for (d, v) in dh.iter_mut().zip(self.disc_head.backward(features, &[d_disc], &mut grad.disc_head)) {
            *d += v;
        }
        for l in (0..self.trunk.len()).rev() {
            let d_pre: Vec<T> = dh
                .iter()
                .zip(trace.pre[l].iter().zip(&trace.acts[l + 1]))
                .map(|(&d, (&p, &q))| d * act.derivative(p, q))
                .collect();
            dh = self.trunk[l].backward(&trace.acts[l], &d_pre, &mut grad.trunk[l]);
        }
    }

    /// Logits fed to the loss of `kind`: the class head, the discriminator,
    /// or both (class logits first) for the shared objective.
    fn loss_logits(&self, kind: LossKind, trace: &Trace<T>) -> Vec<T> {
        match kind {
            LossKind::BinaryBalanced => vec![trace.disc],
            LossKind::SharedCombo => {
                let mut z = trace.class.clone();
                z.push(trace.disc);
                z
            }
            _ => trace.class.clone(),
        }
    }

    fn split_grad(kind: LossKind, g: &[T], class_outputs: usize) -> (Vec<T>, T) {
        match kind {
            LossKind::BinaryBalanced => (vec![T::zero(); class_outputs], g[0]),
            LossKind::SharedCombo => (g[..class_outputs].to_vec(), g[class_outputs]),
            _ => (g.to_vec(), T::zero()),
        }
    }

    fn check_kind(&self, kind: LossKind, classes: usize) -> Result<()> {
        let want = class_outputs(kind, classes);
        if self.architecture.class_outputs != want {
            return Err(OodError::shape(want, self.architecture.class_outputs));
        }
        Ok(())
    }

    /// Evaluates the network on every domain coordinate and returns the
    /// logit table the loss of `kind` sees.
    pub fn tabular_logits(&self, kind: LossKind, domain: &DiscreteDomain) -> Result<TabularLogits<T>> {
        let coords = domain
            .coordinates()
            .ok_or_else(|| OodError::InvalidDomain("network evaluation needs point coordinates".into()))?;
        let inputs: Vec<Vec<T>> = coords.iter().map(|c| c.iter().map(|&v| T::lit(v)).collect()).collect();
        if inputs.first().is_some_and(|c| c.len() != self.architecture.input_dim) {
            return Err(OodError::shape(self.architecture.input_dim, inputs[0].len()));
        }
        let values = inputs.iter().flat_map(|x| self.loss_logits(kind, &self.trace(x))).collect();
        let width = match kind {
            LossKind::BinaryBalanced => 1,
            LossKind::SharedCombo => self.architecture.class_outputs + 1,
            _ => self.architecture.class_outputs,
        };
        TabularLogits::new(width, values)
    }
}

/// Forward pass on a batch of inputs, order preserving.
pub fn mlp_forward<T: Scalar>(model: &SharedMlp<T>, inputs: &[Vec<T>]) -> Result<MlpOutput<T>> {
    let mut out = MlpOutput { class_logits: Vec::with_capacity(inputs.len()), disc_logits: Vec::with_capacity(inputs.len()) };
    for x in inputs {
        if x.len() != model.architecture.input_dim {
            return Err(OodError::shape(model.architecture.input_dim, x.len()));
        }
        let t = model.trace(x);
        out.class_logits.push(t.class);
        out.disc_logits.push(t.disc);
    }
    Ok(out)
}

/// Fixed training pools drawn from a scenario with coordinates.
#[derive(Clone, Debug)]
pub struct MlpData<T> {
    pub classes: usize,
    /// In-distribution inputs with their class and whether the label is
    /// visible to the classifier term.
    pub inputs_in: Vec<(Vec<T>, usize, bool)>,
    pub inputs_out: Vec<Vec<T>>,
}

impl<T: Scalar> MlpData<T> {
    /// Draws `n_in` labeled in-samples and `n_out` out-samples; the first
    /// `⌊f·n_in⌋` in-samples keep their labels.
    pub fn sample(scenario: &OodScenario<T>, n_in: usize, n_out: usize, labeled_fraction: f64, seed: u64) -> Result<Self> {
        if n_in == 0 || n_out == 0 {
            return Err(OodError::EmptySample);
        }
        if !(labeled_fraction > 0.0 && labeled_fraction <= 1.0) {
            return Err(OodError::InvalidParameter(format!("labeled fraction {labeled_fraction} must lie in (0, 1]")));
        }
        let coords = scenario
            .domain()
            .coordinates()
            .ok_or_else(|| OodError::InvalidDomain("sampling network inputs needs point coordinates".into()))?;
        let point = |x: usize| coords[x].iter().map(|&v| T::lit(v)).collect::<Vec<T>>();
        let labeled = ((n_in as f64) * labeled_fraction).floor() as usize;
        let inputs_in = sample_labeled(scenario.in_dist(), n_in, seed)
            .into_iter()
            .enumerate()
            .map(|(j, (x, y))| (point(x), y, j < labeled.max(1)))
            .collect();
        let inputs_out = sample(scenario.out_dist(), n_out, seed.wrapping_add(0x9e37_79b9_7f4a_7c15)).into_iter().map(point).collect();
        Ok(Self { classes: scenario.classes(), inputs_in, inputs_out })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LrSchedule {
    Constant,
    /// Cosine decay from the base rate to zero over all steps.
    Cosine,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MlpTrainConfig<T> {
    pub epochs: usize,
    pub batch_in: usize,
    pub batch_out: usize,
    pub learning_rate: T,
    pub momentum: T,
    pub schedule: LrSchedule,
    pub seed: u64,
}

impl<T: Scalar> MlpTrainConfig<T> {
    /// Out batches twice the size of in batches.
    pub fn new(epochs: usize, batch_in: usize, learning_rate: T, seed: u64) -> Self {
        Self {
            epochs,
            batch_in,
            batch_out: 2 * batch_in,
            learning_rate,
            momentum: T::lit(0.9),
            schedule: LrSchedule::Cosine,
            seed,
        }
    }
}

/// A trained network with its per-step mini-batch losses.
#[derive(Clone, Debug)]
pub struct MlpRun<T> {
    pub model: SharedMlp<T>,
    pub trajectory: Vec<T>,
}

struct Batch<T> {
    kind: LossKind,
    margins: EnergyMargins<T>,
    samples: Vec<(Vec<T>, PointWeights<T>)>,
}

impl<T: Scalar> Batch<T> {
    /// Each term is a sample mean: labeled in-samples share the class term,
    /// all in-samples the in term, out-samples the `λ`-weighted out term.
    fn new(spec: &LossSpec<T>, classes: usize, inputs_in: &[&(Vec<T>, usize, bool)], inputs_out: &[&Vec<T>]) -> Self {
        let masked = matches!(spec.kind, LossKind::ClassifierCe | LossKind::SharedCombo);
        let visible = |l: bool| l || !masked;
        let n_lab = inputs_in.iter().filter(|s| visible(s.2)).count();
        let mut samples = Vec::with_capacity(inputs_in.len() + inputs_out.len());
        for (x, y, l) in inputs_in {
            let mut w = PointWeights::zeros(classes);
            if visible(*l) {
                w.class[*y] = T::one() / T::from_usize_lossy(n_lab);
            }
            w.in_w = T::one() / T::from_usize_lossy(inputs_in.len());
            samples.push((x.clone(), w));
        }
        if spec.kind.uses_out() && !inputs_out.is_empty() {
            let out_w = spec.lambda / T::from_usize_lossy(inputs_out.len());
            for x in inputs_out {
                let mut w = PointWeights::zeros(classes);
                w.out_w = out_w;
                samples.push(((*x).clone(), w));
            }
        }
        Self { kind: spec.kind, margins: spec.margins_or_default(), samples }
    }

    fn loss_and_grad(&self, model: &SharedMlp<T>, grad: Option<&mut SharedMlp<T>>) -> T {
        let mut loss = T::zero();
        let k_out = model.architecture.class_outputs;
        match grad {
            None => {
                for (x, w) in &self.samples {
                    let z = model.loss_logits(self.kind, &model.trace(x));
                    loss += point_loss(self.kind, &self.margins, &z, w, None);
                }
            }
            Some(grad) => {
                for (x, w) in &self.samples {
                    let t = model.trace(x);
                    let z = model.loss_logits(self.kind, &t);
                    let mut g = vec![T::zero(); z.len()];
                    loss += point_loss(self.kind, &self.margins, &z, w, Some(&mut g));
                    let (d_class, d_disc) = SharedMlp::split_grad(self.kind, &g, k_out);
                    model.backward(&t, &d_class, d_disc, grad);
                }
            }
        }
        loss
    }
}

/// Mini-batch SGD with momentum on the sampled objective of `spec`.
///
/// Every epoch shuffles the in pool and walks it in batches of
/// `batch_in`; out batches of `batch_out` cycle through the shuffled out
/// pool. The classifier term only sees labeled in-samples.
pub fn mlp_train<T: Scalar>(
    data: &MlpData<T>,
    spec: &LossSpec<T>,
    architecture: &MlpArchitecture,
    config: &MlpTrainConfig<T>,
) -> Result<MlpRun<T>> {
    spec.validate()?;
    if config.batch_in == 0 || config.batch_out == 0 || config.epochs == 0 {
        return Err(OodError::InvalidParameter("epochs and batch sizes must be positive".into()));
    }
    if config.learning_rate < T::zero() {
        return Err(OodError::InvalidParameter("learning rate must be non-negative".into()));
    }
    if data.inputs_in.iter().any(|s| s.0.len() != architecture.input_dim) {
        return Err(OodError::shape(architecture.input_dim, "inputs of another dimension"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut model = SharedMlp::init(architecture.clone(), &mut rng)?;
    model.check_kind(spec.kind, data.classes)?;

    let batches_per_epoch = data.inputs_in.len().div_ceil(config.batch_in);
    let total_steps = config.epochs * batches_per_epoch;
    let mut velocity = vec![T::zero(); model.param_count()];
    let mut params = model.to_flat();
    let mut in_order: Vec<usize> = (0..data.inputs_in.len()).collect();
    let mut out_order: Vec<usize> = (0..data.inputs_out.len()).collect();
    out_order.shuffle(&mut rng);
    let mut out_cursor = 0;
    let mut trajectory = Vec::with_capacity(total_steps);
    let mut step = 0;
    for _ in 0..config.epochs {
        in_order.shuffle(&mut rng);
        for chunk in in_order.chunks(config.batch_in) {
            let ins: Vec<_> = chunk.iter().map(|&j| &data.inputs_in[j]).collect();
            let mut outs = Vec::with_capacity(config.batch_out);
            while !out_order.is_empty() && outs.len() < config.batch_out {
                if out_cursor == out_order.len() {
                    out_order.shuffle(&mut rng);
                    out_cursor = 0;
                }
                outs.push(&data.inputs_out[out_order[out_cursor]]);
                out_cursor += 1;
            }
            let batch = Batch::new(spec, data.classes, &ins, &outs);
            let mut grad = model.zeros_like();
            let loss = batch.loss_and_grad(&model, Some(&mut grad));
            if !loss.is_finite() {
                return Err(OodError::DivergenceDetected { step });
            }
            trajectory.push(loss);
            let lr = match config.schedule {
                LrSchedule::Constant => config.learning_rate,
                LrSchedule::Cosine => {
                    let t = T::from_usize_lossy(step) / T::from_usize_lossy(total_steps);
                    config.learning_rate * T::lit(0.5) * (T::one() + (T::lit(std::f64::consts::PI) * t).cos())
                }
            };
            for ((p, v), g) in params.iter_mut().zip(velocity.iter_mut()).zip(grad.to_flat()) {
                *v = config.momentum * *v - lr * g;
                *p += *v;
            }
            model.set_flat(&params)?;
            step += 1;
        }
    }
    if !model.is_valid() {
        return Err(OodError::DivergenceDetected { step });
    }
    Ok(MlpRun { model, trajectory })
}

/// The full-pool loss of a network as a function of its flat parameters.
pub struct MlpBatchObjective<T> {
    model: SharedMlp<T>,
    batch: Batch<T>,
}

impl<T: Scalar> MlpBatchObjective<T> {
    pub fn new(model: SharedMlp<T>, spec: &LossSpec<T>, data: &MlpData<T>) -> Result<Self> {
        spec.validate()?;
        model.check_kind(spec.kind, data.classes)?;
        let ins: Vec<_> = data.inputs_in.iter().collect();
        let outs: Vec<_> = data.inputs_out.iter().collect();
        Ok(Self { batch: Batch::new(spec, data.classes, &ins, &outs), model })
    }

    fn with_params(&self, params: &[T]) -> SharedMlp<T> {
        let mut m = self.model.clone();
        // lengths come from parameters() of the same model
        let _ = m.set_flat(params);
        m
    }
}

impl<T: Scalar> Differentiable<T> for MlpBatchObjective<T> {
    fn parameters(&self) -> Vec<T> {
        self.model.to_flat()
    }

    fn loss_at(&self, params: &[T]) -> T {
        self.batch.loss_and_grad(&self.with_params(params), None)
    }

    fn gradient_at(&self, params: &[T]) -> Vec<T> {
        let m = self.with_params(params);
        let mut grad = m.zeros_like();
        self.batch.loss_and_grad(&m, Some(&mut grad));
        grad.to_flat()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dist::{FiniteDistribution, LabeledInDistribution};
    use crate::metrics::auc_exact;
    use std::sync::Arc;
    use crate::train::grad_check;
    use crate::train::GradCheckConfig;

    fn arch(kind: LossKind, hidden: Vec<usize>) -> MlpArchitecture {
        MlpArchitecture::for_kind(kind, 2, 2).with_hidden(hidden)
    }

    /// Two class blobs at (±0.5, 0) and out mass near (0, ±0.8) on a grid.
    fn blobs(m: usize) -> OodScenario<f64> {
        let mut points = Vec::new();
        let mut coords = Vec::new();
        for i in 0..m {
            for j in 0..m {
                let x = -1.0 + 2.0 * i as f64 / (m - 1) as f64;
                let y = -1.0 + 2.0 * j as f64 / (m - 1) as f64;
                points.push(format!("{i}_{j}"));
                coords.push(vec![x, y]);
            }
        }
        let d = Arc::new(DiscreteDomain::new(points, Some(coords.clone())).unwrap());
        let g = |c: &[f64], cx: f64, cy: f64, s: f64| (-((c[0] - cx).powi(2) + (c[1] - cy).powi(2)) / (2.0 * s * s)).exp();
        let a: Vec<f64> = coords.iter().map(|c| g(c, -0.5, 0.0, 0.15)).collect();
        let b: Vec<f64> = coords.iter().map(|c| g(c, 0.5, 0.0, 0.15)).collect();
        let za: f64 = a.iter().sum::<f64>() * 2.0;
        let zb: f64 = b.iter().sum::<f64>() * 2.0;
        let mut joint: Vec<f64> = a.iter().map(|v| v / za).collect();
        joint.extend(b.iter().map(|v| v / zb));
        let in_dist = LabeledInDistribution::new(d.clone(), 2, joint).unwrap();
        let out: Vec<f64> = coords.iter().map(|c| g(c, 0.0, 0.8, 0.15) + g(c, 0.0, -0.8, 0.15) + 1e-9).collect();
        let out = FiniteDistribution::from_weights(d, out).unwrap();
        OodScenario::new(in_dist, out, 0.5).unwrap()
    }

    #[test]
    fn zero_weights_give_zero_logits() {
        let m = SharedMlp::<f64>::zeros(arch(LossKind::SharedCombo, vec![3])).unwrap();
        let out = mlp_forward(&m, &[vec![0.3, -2.0], vec![1.0, 1.0]]).unwrap();
        assert!(out.class_logits.iter().flatten().all(|&v| v == 0.0));
        assert!(out.disc_logits.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn hand_computed_forward() {
        let a = MlpArchitecture { input_dim: 2, hidden: vec![2], class_outputs: 2, activation: Activation::Tanh };
        let mut m = SharedMlp::<f64>::zeros(a).unwrap();
        m.trunk[0].weights = vec![1.0, 0.0, 0.0, 1.0];
        m.trunk[0].bias = vec![0.0, 0.5];
        m.class_head.weights = vec![1.0, -1.0, 2.0, 0.0];
        m.class_head.bias = vec![0.1, 0.0];
        m.disc_head.weights = vec![0.5, 0.5];
        let out = mlp_forward(&m, &[vec![0.2, -0.1]]).unwrap();
        let (h0, h1) = (0.2f64.tanh(), 0.4f64.tanh());
        assert!((out.class_logits[0][0] - (h0 - h1 + 0.1)).abs() < 1e-15);
        assert!((out.class_logits[0][1] - 2.0 * h0).abs() < 1e-15);
        assert!((out.disc_logits[0] - 0.5 * (h0 + h1)).abs() < 1e-15);
    }

    #[test]
    fn forward_preserves_order_and_checks_shape() {
        let m = SharedMlp::<f64>::new(arch(LossKind::SharedCombo, vec![4]), 3).unwrap();
        let inputs = vec![vec![0.1, 0.2], vec![-0.4, 0.9], vec![0.0, 0.0]];
        let all = mlp_forward(&m, &inputs).unwrap();
        for (j, x) in inputs.iter().enumerate() {
            assert_eq!(mlp_forward(&m, &[x.clone()]).unwrap().disc_logits[0], all.disc_logits[j]);
        }
        assert!(matches!(mlp_forward(&m, &[vec![1.0]]), Err(OodError::ShapeMismatch { .. })));
    }

    #[test]
    fn backprop_matches_finite_differences() {
        let s = blobs(6);
        let data = MlpData::sample(&s, 12, 24, 0.5, 1).unwrap();
        for kind in LossKind::ALL {
            for activation in [Activation::Tanh, Activation::Sigmoid, Activation::Softplus] {
                let a = arch(kind, vec![5, 4]).with_activation(activation);
                let model = SharedMlp::new(a, 7).unwrap();
                let spec = LossSpec::new(kind).with_labeled_fraction(0.5);
                let obj = MlpBatchObjective::new(model, &spec, &data).unwrap();
                let cfg = GradCheckConfig { probes: 3, epsilon: 1e-6, probe_scale: 0.3, seed: 2 };
                let err = grad_check(&obj, &cfg).unwrap();
                assert!(err < 1e-6, "{kind:?} {activation:?}: {err}");
            }
        }
    }

    #[test]
    fn zero_learning_rate_keeps_parameters() {
        let s = blobs(6);
        let data = MlpData::sample(&s, 20, 40, 1.0, 1).unwrap();
        let a = arch(LossKind::ConfidenceOe, vec![4]);
        let cfg = MlpTrainConfig::new(2, 5, 0.0, 11);
        let run = mlp_train(&data, &LossSpec::new(LossKind::ConfidenceOe), &a, &cfg).unwrap();
        assert_eq!(run.model, SharedMlp::new(a, 11).unwrap());
        assert_eq!(run.trajectory.len(), 8);
    }

    #[test]
    fn separable_blobs_train_a_sharp_discriminator() {
        let s = blobs(24);
        let data = MlpData::sample(&s, 400, 800, 1.0, 5).unwrap();
        let spec = LossSpec::new(LossKind::SharedCombo);
        let a = arch(LossKind::SharedCombo, vec![16, 16]);
        let cfg = MlpTrainConfig::new(60, 32, 0.05, 3);
        let run = mlp_train(&data, &spec, &a, &cfg).unwrap();
        let logits = run.model.tabular_logits(LossKind::SharedCombo, s.domain()).unwrap();
        let scores = logits.scores(LossKind::SharedCombo, s.domain()).unwrap();
        let auc = auc_exact(&s, &scores[0].1).unwrap();
        assert!(auc > 0.99, "{auc}");
        let again = mlp_train(&data, &spec, &a, &cfg).unwrap();
        assert_eq!(again.model, run.model);
    }

    #[test]
    fn checkpoint_round_trips() {
        let m = SharedMlp::<f64>::new(arch(LossKind::BackgroundClass, vec![3]), 4).unwrap();
        let text = serde_json::to_string(&m).unwrap();
        let back: SharedMlp<f64> = serde_json::from_str(&text).unwrap();
        assert_eq!(back, m);
        assert!(back.is_valid());
    }
}
