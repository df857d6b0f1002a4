//! Neural interaction screening (NeurISE).
//!
//! For a center variable `u` the partial energy is modeled as
//! `<Phi(x_u), NN(x_rest)>` (or `s_u * NN(x_rest)` for spins), and the network
//! is trained to minimize the screening objective `E[exp(-H_u)]`. The learned
//! conditional of `x_u` is the softmax of the partial energy over `x_u`.

use std::cell::RefCell;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::alphabet::{spin, Alphabet};
use crate::basis::PartialBasis;
use crate::error::{invalid, Error, Result};
use crate::grise::{soft_threshold, BasisDescriptor, GriseSolution};
use crate::neural::{Mlp, MlpSpec, OptimizerConfig, OptimizerState, Workspace};
use crate::samples::{SampleSet, WeightedConfigs};
use crate::sampling::{softmax_in_place, ConditionalProvider};
use crate::seeded_rng;

/// Hidden-layer shape `[d, w]`; input and output sizes follow from the data.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetShape {
    #[serde(rename = "d")]
    pub depth: usize,
    #[serde(rename = "w")]
    pub width: usize,
}

impl NetShape {
    pub fn new(depth: usize, width: usize) -> Self {
        NetShape { depth, width }
    }
}

/// Network spec for the conditional of one variable: spins in and one output
/// for binary alphabets, centered-indicator vectors in and `q` outputs otherwise.
pub fn conditional_spec(p: usize, alphabet: Alphabet, shape: NetShape) -> Result<MlpSpec> {
    if p < 2 {
        return Err(invalid("conditional networks need at least two variables"));
    }
    if alphabet.is_binary() {
        MlpSpec::new(p - 1, shape.depth, shape.width, 1)
    } else {
        MlpSpec::new((p - 1) * alphabet.q(), shape.depth, shape.width, alphabet.q())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Flavor {
    Linear { theta: Vec<f64>, basis: PartialBasis },
    BinaryNet(Mlp),
    GeneralNet(Mlp),
}

/// A learned conditional `mu(x_u | x_rest)` for one variable.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawConditional", into = "RawConditional")]
pub struct ConditionalModel {
    u: usize,
    p: usize,
    alphabet: Alphabet,
    flavor: Flavor,
}

thread_local! {
    static SCRATCH: RefCell<(Vec<f64>, Workspace)> = RefCell::new((Vec::new(), Workspace::default()));
}

impl ConditionalModel {
    pub fn new(u: usize, p: usize, alphabet: Alphabet, flavor: Flavor) -> Result<Self> {
        if u >= p {
            return Err(invalid(format!("center {u} out of range for p = {p}")));
        }
        match &flavor {
            Flavor::Linear { theta, basis } => {
                if basis.u != u || basis.p != p || basis.alphabet != alphabet {
                    return Err(invalid("basis does not match the conditional model"));
                }
                if theta.len() != basis.len() {
                    return Err(invalid("parameter vector does not match the basis"));
                }
            }
            Flavor::BinaryNet(net) => {
                if !alphabet.is_binary() {
                    return Err(invalid("binary-net flavor requires q = 2"));
                }
                let want = conditional_spec(p, alphabet, NetShape::new(net.spec.depth, net.spec.width))?;
                if net.spec != want {
                    return Err(invalid(format!("network shape {:?} expected {want:?}", net.spec)));
                }
            }
            Flavor::GeneralNet(net) => {
                if net.spec.input_dim != (p - 1) * alphabet.q() || net.spec.output_dim != alphabet.q()
                {
                    return Err(invalid(format!(
                        "general-net needs input {} and output {}",
                        (p - 1) * alphabet.q(),
                        alphabet.q()
                    )));
                }
            }
        }
        Ok(ConditionalModel {
            u,
            p,
            alphabet,
            flavor,
        })
    }

    /// A network-backed conditional with the natural flavor for `alphabet`.
    pub fn from_net(u: usize, p: usize, alphabet: Alphabet, net: Mlp) -> Result<Self> {
        let flavor = if alphabet.is_binary() && net.spec.output_dim == 1 {
            Flavor::BinaryNet(net)
        } else {
            Flavor::GeneralNet(net)
        };
        Self::new(u, p, alphabet, flavor)
    }

    pub fn from_grise(solution: &GriseSolution) -> Result<Self> {
        let basis = solution.basis.build()?;
        Self::new(
            solution.u,
            basis.p,
            basis.alphabet,
            Flavor::Linear {
                theta: solution.theta.clone(),
                basis,
            },
        )
    }

    pub fn u(&self) -> usize {
        self.u
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn alphabet(&self) -> Alphabet {
        self.alphabet
    }

    pub fn flavor(&self) -> &Flavor {
        &self.flavor
    }

    pub fn net(&self) -> Option<&Mlp> {
        match &self.flavor {
            Flavor::BinaryNet(n) | Flavor::GeneralNet(n) => Some(n),
            Flavor::Linear { .. } => None,
        }
    }

    pub fn net_mut(&mut self) -> Option<&mut Mlp> {
        match &mut self.flavor {
            Flavor::BinaryNet(n) | Flavor::GeneralNet(n) => Some(n),
            Flavor::Linear { .. } => None,
        }
    }

    pub fn num_params(&self) -> usize {
        match &self.flavor {
            Flavor::Linear { theta, .. } => theta.len(),
            Flavor::BinaryNet(n) | Flavor::GeneralNet(n) => n.num_params(),
        }
    }

    fn input_width(&self) -> usize {
        match &self.flavor {
            Flavor::BinaryNet(_) => 1,
            _ => self.alphabet.q(),
        }
    }

    /// Network input for the context `config` (value at `u` ignored).
    pub fn encode_context(&self, config: &[u8], out: &mut [f64]) {
        encode_context(self.u, self.alphabet, self.input_width() == 1, config, out)
    }

    /// Input columns fed by variable `v != u`.
    pub fn input_columns(&self, v: usize) -> std::ops::Range<usize> {
        debug_assert_ne!(v, self.u);
        let j = if v < self.u { v } else { v - 1 };
        let w = self.input_width();
        j * w..(j + 1) * w
    }

    /// Writes the partial energy of every value of `x_u` given the context.
    pub fn logits_into(&self, config: &[u8], out: &mut [f64]) {
        match &self.flavor {
            Flavor::Linear { theta, basis } => {
                let mut scratch = config.to_vec();
                for (a, o) in out.iter_mut().enumerate() {
                    scratch[self.u] = a as u8;
                    *o = basis
                        .terms
                        .iter()
                        .zip(theta)
                        .map(|(t, th)| th * t.value(self.alphabet, &scratch))
                        .sum();
                }
            }
            Flavor::BinaryNet(net) | Flavor::GeneralNet(net) => SCRATCH.with(|cell| {
                let (input, ws) = &mut *cell.borrow_mut();
                input.resize(net.spec.input_dim, 0.0);
                self.encode_context(config, input);
                let y = net.forward_batch(input, 1, ws);
                if matches!(self.flavor, Flavor::BinaryNet(_)) {
                    out[0] = y[0];
                    out[1] = -y[0];
                } else {
                    let mean = y.iter().sum::<f64>() / y.len() as f64;
                    for (o, v) in out.iter_mut().zip(y) {
                        *o = v - mean;
                    }
                }
            }),
        }
    }

    /// Learned partial energy at `config`.
    pub fn partial_energy(&self, config: &[u8]) -> f64 {
        let mut logits = vec![0.0; self.alphabet.q()];
        self.logits_into(config, &mut logits);
        logits[config[self.u] as usize]
    }

    /// Softmax of the partial energy over the values of `x_u`.
    pub fn learned_conditional(&self, config: &[u8]) -> Result<Vec<f64>> {
        if config.len() != self.p {
            return Err(invalid("configuration length does not match the model"));
        }
        config.iter().try_for_each(|&s| self.alphabet.check(s))?;
        let mut out = vec![0.0; self.alphabet.q()];
        self.conditional_into_unchecked(config, &mut out);
        Ok(out)
    }

    fn conditional_into_unchecked(&self, config: &[u8], out: &mut [f64]) {
        self.logits_into(config, out);
        softmax_in_place(out);
    }

    /// `||W_{u,v}||_2` for every `v` (entry `u` is `NaN`).
    pub fn input_norms(&self) -> Result<Vec<f64>> {
        let net = self
            .net()
            .ok_or_else(|| invalid("input norms are defined for network flavors only"))?;
        Ok((0..self.p)
            .map(|v| {
                if v == self.u {
                    f64::NAN
                } else {
                    net.input_column_norm(self.input_columns(v))
                }
            })
            .collect())
    }
}

pub(crate) fn encode_context(u: usize, alphabet: Alphabet, spins: bool, config: &[u8], out: &mut [f64]) {
    if spins {
        let mut j = 0;
        for (v, &s) in config.iter().enumerate() {
            if v != u {
                out[j] = spin(s);
                j += 1;
            }
        }
    } else {
        let q = alphabet.q();
        let mut j = 0;
        for (v, &s) in config.iter().enumerate() {
            if v != u {
                alphabet.indicator_vector(s, &mut out[j * q..(j + 1) * q]);
                j += 1;
            }
        }
    }
}

/// The set of per-variable conditionals of one learned model.
#[derive(Clone, Debug, PartialEq)]
pub struct LearnedConditionals {
    models: Vec<ConditionalModel>,
}

impl LearnedConditionals {
    pub fn new(mut models: Vec<ConditionalModel>) -> Result<Self> {
        models.sort_by_key(|m| m.u);
        let p = models.first().map(|m| m.p).ok_or_else(|| invalid("no conditionals"))?;
        let alphabet = models[0].alphabet;
        if models.len() != p
            || models
                .iter()
                .enumerate()
                .any(|(i, m)| m.u != i || m.p != p || m.alphabet != alphabet)
        {
            return Err(invalid("need exactly one conditional per variable with matching shapes"));
        }
        Ok(LearnedConditionals { models })
    }

    pub fn models(&self) -> &[ConditionalModel] {
        &self.models
    }
}

impl ConditionalProvider for LearnedConditionals {
    fn num_vars(&self) -> usize {
        self.models.len()
    }

    fn alphabet(&self) -> Alphabet {
        self.models[0].alphabet
    }

    fn conditional_into(&self, u: usize, config: &[u8], out: &mut [f64]) {
        self.models[u].conditional_into_unchecked(config, out)
    }
}

// ---------------------------------------------------------------------------
// objective

/// Evaluates (and optionally differentiates) the weighted screening objective
/// of a network over rows `rows` of `data`.
struct ScreeningEval<'a> {
    model: &'a ConditionalModel,
    net: &'a Mlp,
    spins: bool,
    inputs: Vec<f64>,
    cot: Vec<f64>,
    ws: Workspace,
}

const EVAL_BATCH: usize = 512;

impl<'a> ScreeningEval<'a> {
    fn new(model: &'a ConditionalModel) -> Result<Self> {
        let net = model
            .net()
            .ok_or_else(|| invalid("expected a network-backed conditional"))?;
        Ok(ScreeningEval {
            model,
            net,
            spins: matches!(model.flavor, Flavor::BinaryNet(_)),
            inputs: Vec::new(),
            cot: Vec::new(),
            ws: Workspace::default(),
        })
    }

    /// Returns `sum_r w_r exp(-H_u(row_r))` over `rows`, adding
    /// `scale * d/dparams` of it into `grad` when given.
    fn run(
        &mut self,
        data: &WeightedConfigs,
        rows: &[usize],
        scale: f64,
        mut grad: Option<&mut [f64]>,
    ) -> f64 {
        let net = self.net;
        let in_dim = net.spec.input_dim;
        let out_dim = net.spec.output_dim;
        let q = self.model.alphabet.q();
        let u = self.model.u;
        let mut total = 0.0;
        for chunk in rows.chunks(EVAL_BATCH) {
            let b = chunk.len();
            self.inputs.resize(b * in_dim, 0.0);
            for (s, &r) in chunk.iter().enumerate() {
                encode_context(
                    u,
                    self.model.alphabet,
                    self.spins,
                    data.row(r),
                    &mut self.inputs[s * in_dim..(s + 1) * in_dim],
                );
            }
            let y = net.forward_batch(&self.inputs, b, &mut self.ws);
            self.cot.resize(b * out_dim, 0.0);
            for (s, &r) in chunk.iter().enumerate() {
                let w = data.weight(r);
                let center = data.row(r)[u];
                if self.spins {
                    let sigma = spin(center);
                    let e = (-sigma * y[s]).exp();
                    total += w * e;
                    self.cot[s] = -scale * w * sigma * e;
                } else {
                    let out = &y[s * out_dim..(s + 1) * out_dim];
                    let mean = out.iter().sum::<f64>() / q as f64;
                    let e = (-(out[center as usize] - mean)).exp();
                    total += w * e;
                    let c = &mut self.cot[s * out_dim..(s + 1) * out_dim];
                    for (a, ca) in c.iter_mut().enumerate() {
                        let phi = self.model.alphabet.indicator(a as u8, center);
                        *ca = -scale * w * e * phi;
                    }
                }
            }
            if let Some(g) = grad.as_deref_mut() {
                net.backward_batch(&mut self.ws, &self.cot, g, None);
            }
        }
        total
    }
}

/// Screening objective of a conditional over weighted data.
pub fn neuriso_value_weighted(model: &ConditionalModel, data: &WeightedConfigs) -> Result<f64> {
    check_data(model, data.p(), data.alphabet())?;
    match &model.flavor {
        Flavor::Linear { .. } => Ok(data
            .iter()
            .map(|(row, w)| w * (-model.partial_energy(row)).exp())
            .sum()),
        _ => {
            let rows: Vec<usize> = (0..data.len()).collect();
            Ok(ScreeningEval::new(model)?.run(data, &rows, 0.0, None))
        }
    }
}

/// `(1/n) sum_t exp(-H_u(x^(t)))` with the learned partial energy.
pub fn neuriso_value(model: &ConditionalModel, samples: &SampleSet) -> Result<f64> {
    neuriso_value_weighted(model, &samples.weighted())
}

/// Gradient of the screening objective over the given (mini)batch with respect
/// to the network parameters.
pub fn neuriso_gradient(model: &ConditionalModel, batch: &SampleSet) -> Result<Vec<f64>> {
    neuriso_gradient_weighted(model, &batch.weighted())
}

pub fn neuriso_gradient_weighted(model: &ConditionalModel, data: &WeightedConfigs) -> Result<Vec<f64>> {
    check_data(model, data.p(), data.alphabet())?;
    let mut eval = ScreeningEval::new(model)?;
    let mut grad = vec![0.0; eval.net.num_params()];
    let rows: Vec<usize> = (0..data.len()).collect();
    eval.run(data, &rows, 1.0, Some(&mut grad));
    Ok(grad)
}

fn check_data(model: &ConditionalModel, p: usize, alphabet: Alphabet) -> Result<()> {
    if p != model.p || alphabet != model.alphabet {
        return Err(invalid(format!(
            "data has p={p} q={}, model has p={} q={}",
            alphabet.q(),
            model.p,
            model.alphabet.q()
        )));
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// training

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub minibatch: usize,
    pub optimizer: OptimizerConfig,
    pub seed: u64,
    /// Elementwise l1 penalty on first-layer weights; 0 disables it.
    pub input_l1: f64,
    pub zero_input_init: bool,
    pub validation_fraction: f64,
    /// Record the full-data loss every this many epochs (and after the last).
    pub log_every: usize,
    /// Learning rate at the last epoch relative to the first; the rate decays
    /// geometrically in between. 1 keeps it constant.
    pub final_lr_fraction: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 200,
            minibatch: 256,
            optimizer: OptimizerConfig::default(),
            seed: 0,
            input_l1: 0.0,
            zero_input_init: false,
            validation_fraction: 0.0,
            log_every: 1,
            final_lr_fraction: 1.0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.minibatch == 0 {
            return Err(invalid("minibatch size must be at least 1"));
        }
        if !(0.0..1.0).contains(&self.validation_fraction) {
            return Err(invalid("validation fraction must lie in [0, 1)"));
        }
        if !(self.input_l1 >= 0.0 && self.input_l1.is_finite()) {
            return Err(invalid("input penalty must be non-negative"));
        }
        if !(self.final_lr_fraction > 0.0 && self.final_lr_fraction <= 1.0) {
            return Err(invalid("final learning-rate fraction must lie in (0, 1]"));
        }
        if self.log_every == 0 {
            return Err(invalid("loss-log cadence must be at least 1"));
        }
        self.optimizer.validate()
    }

    pub(crate) fn lr_scale(&self, epoch: usize) -> f64 {
        if self.epochs <= 1 {
            1.0
        } else {
            self.final_lr_fraction
                .powf(epoch as f64 / (self.epochs - 1) as f64)
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossRecord {
    pub epoch: usize,
    /// Screening objective over the training data.
    pub loss: f64,
    /// `input_l1 * ||first-layer weights||_1`.
    pub penalty: f64,
    pub validation: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FitOutput<M> {
    pub model: M,
    pub history: Vec<LossRecord>,
}

/// Splits off a validation set and returns `(train, validation)`.
pub(crate) fn split_validation(
    samples: &SampleSet,
    fraction: f64,
    rng: &mut crate::Rng,
) -> Result<(WeightedConfigs, Option<WeightedConfigs>)> {
    if fraction <= 0.0 {
        return Ok((samples.weighted(), None));
    }
    let n = samples.n();
    let n_val = ((n as f64) * fraction).round() as usize;
    if n_val == 0 || n_val >= n {
        return Err(invalid("validation split leaves an empty set"));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    let pick = |idx: &[usize]| -> Result<WeightedConfigs> {
        let rows: Vec<u8> = idx.iter().flat_map(|&t| samples.row(t).iter().copied()).collect();
        Ok(SampleSet::new(samples.p(), samples.alphabet(), rows)?.weighted())
    };
    Ok((pick(&order[n_val..])?, Some(pick(&order[..n_val])?)))
}

/// Applies the l1 prox to the first-layer weights, in the metric of the
/// optimizer's last step.
pub(crate) fn prox_input_layer(net: &mut Mlp, opt: &OptimizerState, lambda: f64) {
    if lambda <= 0.0 {
        return;
    }
    let l = net.input_layer();
    for i in l.weights..l.bias {
        let t = lambda * opt.coordinate_step(i);
        net.params[i] = soft_threshold(net.params[i], t);
    }
}

pub(crate) fn input_l1(net: &Mlp) -> f64 {
    let l = net.input_layer();
    net.params[l.weights..l.bias].iter().map(|w| w.abs()).sum()
}

pub(crate) fn diverged(what: &str, epoch: usize, lr: f64) -> Error {
    Error::Diverged(format!(
        "{what} became non-finite in epoch {epoch}; try a learning rate below {lr}"
    ))
}

/// Trains the conditional of variable `u`.
///
/// Samples are merged into distinct configurations with multiplicities. Each
/// epoch visits every distinct configuration once in a seeded random order;
/// a minibatch gradient is the multiplicity-weighted mean over its rows.
pub fn neurise_fit(
    u: usize,
    samples: &SampleSet,
    shape: NetShape,
    config: &TrainConfig,
) -> Result<FitOutput<ConditionalModel>> {
    config.validate()?;
    let p = samples.p();
    let alphabet = samples.alphabet();
    if u >= p {
        return Err(invalid(format!("center {u} out of range for p = {p}")));
    }
    let spec = conditional_spec(p, alphabet, shape)?;
    let mut rng = seeded_rng(config.seed);
    let mut net = Mlp::init(spec, &mut rng)?;
    if config.zero_input_init {
        net.zero_input_weights();
    }
    let (train, validation) = split_validation(samples, config.validation_fraction, &mut rng)?;
    let mut model = ConditionalModel::from_net(u, p, alphabet, net)?;
    let mut opt = OptimizerState::new(config.optimizer, model.num_params())?;
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut grad = vec![0.0; model.num_params()];
    let mut history = Vec::new();

    for epoch in 0..config.epochs {
        opt.set_lr_scale(config.lr_scale(epoch));
        order.shuffle(&mut rng);
        for batch in order.chunks(config.minibatch) {
            let weight: f64 = batch.iter().map(|&r| train.weight(r)).sum();
            if weight <= 0.0 {
                continue;
            }
            grad.fill(0.0);
            let loss = {
                let mut eval = ScreeningEval::new(&model)?;
                eval.run(&train, batch, 1.0 / weight, Some(&mut grad))
            };
            if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                return Err(diverged("screening loss", epoch, opt.learning_rate()));
            }
            let net = model.net_mut().expect("network flavor");
            opt.step(&mut net.params, &grad)?;
            prox_input_layer(net, &opt, config.input_l1);
        }
        if (epoch + 1) % config.log_every == 0 || epoch + 1 == config.epochs {
            let loss = neuriso_value_weighted(&model, &train)?;
            if !loss.is_finite() {
                return Err(diverged("screening loss", epoch, opt.learning_rate()));
            }
            let validation = match &validation {
                Some(v) => Some(neuriso_value_weighted(&model, v)?),
                None => None,
            };
            history.push(LossRecord {
                epoch: epoch + 1,
                loss,
                penalty: config.input_l1 * input_l1(model.net().expect("network flavor")),
                validation,
            });
        }
    }
    Ok(FitOutput { model, history })
}

/// Trains every conditional in parallel, variable `u` with seed `seed + u`.
pub fn neurise_fit_all(
    samples: &SampleSet,
    shape: NetShape,
    config: &TrainConfig,
) -> Result<Vec<FitOutput<ConditionalModel>>> {
    (0..samples.p())
        .into_par_iter()
        .map(|u| {
            let mut cfg = *config;
            cfg.seed = config.seed.wrapping_add(u as u64);
            neurise_fit(u, samples, shape, &cfg)
        })
        .collect()
}

// ---------------------------------------------------------------------------
// serialization

#[derive(Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
enum FlavorTag {
    Linear,
    BinaryNet,
    GeneralNet,
}

#[derive(Serialize, Deserialize)]
struct RawConditional {
    u: usize,
    p: usize,
    q: usize,
    flavor: FlavorTag,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    net: Option<Mlp>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    basis: Option<BasisDescriptor>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    theta: Option<Vec<f64>>,
}

impl TryFrom<RawConditional> for ConditionalModel {
    type Error = Error;

    fn try_from(raw: RawConditional) -> Result<Self> {
        let alphabet = Alphabet::new(raw.q)?;
        let flavor = match raw.flavor {
            FlavorTag::Linear => {
                let basis = raw
                    .basis
                    .ok_or_else(|| invalid("linear conditional without basis"))?
                    .build()?;
                let theta = raw.theta.ok_or_else(|| invalid("linear conditional without theta"))?;
                Flavor::Linear { theta, basis }
            }
            FlavorTag::BinaryNet => {
                Flavor::BinaryNet(raw.net.ok_or_else(|| invalid("missing network"))?)
            }
            FlavorTag::GeneralNet => {
                Flavor::GeneralNet(raw.net.ok_or_else(|| invalid("missing network"))?)
            }
        };
        if let Flavor::BinaryNet(n) | Flavor::GeneralNet(n) = &flavor {
            Mlp::from_params(n.spec, n.params.clone())?;
        }
        ConditionalModel::new(raw.u, raw.p, alphabet, flavor)
    }
}

impl From<ConditionalModel> for RawConditional {
    fn from(m: ConditionalModel) -> Self {
        let (flavor, net, basis, theta) = match m.flavor {
            Flavor::Linear { theta, basis } => (
                FlavorTag::Linear,
                None,
                Some(BasisDescriptor::of(&basis)),
                Some(theta),
            ),
            Flavor::BinaryNet(n) => (FlavorTag::BinaryNet, Some(n), None, None),
            Flavor::GeneralNet(n) => (FlavorTag::GeneralNet, Some(n), None, None),
        };
        RawConditional {
            u: m.u,
            p: m.p,
            q: m.alphabet.q(),
            flavor,
            net,
            basis,
            theta,
        }
    }
}
