//! Learning the full energy of a binary model with a single network.
//!
//! The loss adds the screening objectives of every site, each written through
//! the energy difference caused by flipping that site:
//! `(1/n) sum_t sum_u exp((NN(flip_u x) - NN(x)) / 2)`.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::alphabet::{spin, Alphabet};
use crate::error::{invalid, Error, Result};
use crate::model::EnergyModel;
use crate::neural::{Mlp, MlpSpec, OptimizerState, Workspace};
use crate::neurise::{
    diverged, input_l1, prox_input_layer, split_validation, FitOutput, LossRecord, NetShape,
    TrainConfig,
};
use crate::samples::{decode_config, SampleSet, WeightedConfigs};
use crate::sampling::{exact_distribution, EnumerationCap, ExactDistribution};
use crate::seeded_rng;

/// A network `NN(x) ~ H(x)` over binary configurations, fed with spins.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawEnergyNet", into = "RawEnergyNet")]
pub struct EnergyNet {
    net: Mlp,
}

#[derive(Serialize, Deserialize)]
struct RawEnergyNet {
    p: usize,
    q: usize,
    net: Mlp,
}

impl TryFrom<RawEnergyNet> for EnergyNet {
    type Error = Error;

    fn try_from(raw: RawEnergyNet) -> Result<Self> {
        if raw.q != 2 {
            return Err(Error::Unsupported(format!(
                "full-energy nets are defined for q = 2, got q = {}",
                raw.q
            )));
        }
        if raw.net.spec.input_dim != raw.p {
            return Err(invalid("energy net input size does not match p"));
        }
        let net = Mlp::from_params(raw.net.spec, raw.net.params)?;
        EnergyNet::new(net)
    }
}

impl From<EnergyNet> for RawEnergyNet {
    fn from(e: EnergyNet) -> Self {
        RawEnergyNet {
            p: e.net.spec.input_dim,
            q: 2,
            net: e.net,
        }
    }
}

impl EnergyNet {
    pub fn new(net: Mlp) -> Result<Self> {
        if net.spec.output_dim != 1 {
            return Err(invalid("energy nets have a single output"));
        }
        Ok(EnergyNet { net })
    }

    pub fn spec(p: usize, shape: NetShape) -> Result<MlpSpec> {
        MlpSpec::new(p, shape.depth, shape.width, 1)
    }

    pub fn p(&self) -> usize {
        self.net.spec.input_dim
    }

    pub fn net(&self) -> &Mlp {
        &self.net
    }

    pub fn net_mut(&mut self) -> &mut Mlp {
        &mut self.net
    }

    /// `NN(x)` for a configuration of symbols.
    pub fn energy(&self, config: &[u8]) -> f64 {
        let input: Vec<f64> = config.iter().map(|&s| spin(s)).collect();
        let mut ws = Workspace::default();
        self.net.forward_batch(&input, 1, &mut ws)[0]
    }

    /// `NN` over every configuration, indexed like [`crate::samples::encode_config`].
    pub fn energy_table(&self, cap: EnumerationCap) -> Result<Vec<f64>> {
        let p = self.p();
        let states = cap.check(p, Alphabet::BINARY)?;
        let mut ws = Workspace::default();
        let mut config = vec![0u8; p];
        let mut out = Vec::with_capacity(states);
        let chunk = 1024;
        let mut inputs = Vec::with_capacity(chunk * p);
        for start in (0..states).step_by(chunk) {
            let end = (start + chunk).min(states);
            inputs.clear();
            for idx in start..end {
                decode_config(idx, 2, &mut config);
                inputs.extend(config.iter().map(|&s| spin(s)));
            }
            out.extend_from_slice(self.net.forward_batch(&inputs, end - start, &mut ws));
        }
        Ok(out)
    }

    /// The Gibbs distribution with energy `NN`.
    pub fn distribution(&self, cap: EnumerationCap) -> Result<ExactDistribution> {
        let table = self.energy_table(cap)?;
        exact_distribution(
            |x| table[crate::samples::encode_config(x, 2)],
            self.p(),
            Alphabet::BINARY,
            cap,
        )
    }
}

/// `config` with the spin at `u` negated.
pub fn flip(config: &[u8], u: usize, alphabet: Alphabet) -> Result<Vec<u8>> {
    if !alphabet.is_binary() {
        return Err(Error::Unsupported(format!(
            "spin flips need q = 2, got q = {}",
            alphabet.q()
        )));
    }
    if u >= config.len() {
        return Err(invalid(format!("site {u} out of range")));
    }
    config.iter().try_for_each(|&s| alphabet.check(s))?;
    let mut out = config.to_vec();
    out[u] ^= 1;
    Ok(out)
}

/// The flip loss of an arbitrary energy function over weighted data.
pub fn flip_loss_with(energy: impl Fn(&[u8]) -> f64, data: &WeightedConfigs) -> Result<f64> {
    if !data.alphabet().is_binary() {
        return Err(Error::Unsupported("flip loss needs q = 2".into()));
    }
    let mut scratch = vec![0u8; data.p()];
    let mut total = 0.0;
    for (row, w) in data.iter() {
        let base = energy(row);
        scratch.copy_from_slice(row);
        for u in 0..row.len() {
            scratch[u] ^= 1;
            total += w * (0.5 * (energy(&scratch) - base)).exp();
            scratch[u] ^= 1;
        }
    }
    Ok(total)
}

/// Evaluates each sample together with its `p` flips as one batch.
struct FlipEval {
    inputs: Vec<f64>,
    cot: Vec<f64>,
    ws: Workspace,
}

const ROWS_PER_PASS: usize = 64;

impl FlipEval {
    fn new() -> Self {
        FlipEval {
            inputs: Vec::new(),
            cot: Vec::new(),
            ws: Workspace::default(),
        }
    }

    fn run(
        &mut self,
        net: &Mlp,
        data: &WeightedConfigs,
        rows: &[usize],
        scale: f64,
        mut grad: Option<&mut [f64]>,
    ) -> f64 {
        let p = data.p();
        let group = p + 1;
        let mut total = 0.0;
        for chunk in rows.chunks(ROWS_PER_PASS) {
            let b = chunk.len() * group;
            self.inputs.clear();
            for &r in chunk {
                let base: Vec<f64> = data.row(r).iter().map(|&s| spin(s)).collect();
                self.inputs.extend_from_slice(&base);
                for u in 0..p {
                    let start = self.inputs.len();
                    self.inputs.extend_from_slice(&base);
                    self.inputs[start + u] = -self.inputs[start + u];
                }
            }
            let y = net.forward_batch(&self.inputs, b, &mut self.ws);
            self.cot.clear();
            self.cot.resize(b, 0.0);
            for (k, &r) in chunk.iter().enumerate() {
                let w = data.weight(r);
                let ys = &y[k * group..(k + 1) * group];
                let mut row_sum = 0.0;
                for u in 0..p {
                    let e = (0.5 * (ys[u + 1] - ys[0])).exp();
                    row_sum += e;
                    self.cot[k * group + u + 1] = 0.5 * scale * w * e;
                }
                self.cot[k * group] = -0.5 * scale * w * row_sum;
                total += w * row_sum;
            }
            if let Some(g) = grad.as_deref_mut() {
                net.backward_batch(&mut self.ws, &self.cot, g, None);
            }
        }
        total
    }
}

fn check_energy_data(net: &EnergyNet, p: usize, alphabet: Alphabet) -> Result<()> {
    if !alphabet.is_binary() {
        return Err(Error::Unsupported(format!(
            "full-energy learning needs q = 2, got q = {}",
            alphabet.q()
        )));
    }
    if p != net.p() {
        return Err(invalid(format!("data has p = {p}, net has p = {}", net.p())));
    }
    Ok(())
}

pub fn full_energy_loss_weighted(net: &EnergyNet, data: &WeightedConfigs) -> Result<f64> {
    check_energy_data(net, data.p(), data.alphabet())?;
    let rows: Vec<usize> = (0..data.len()).collect();
    Ok(FlipEval::new().run(&net.net, data, &rows, 0.0, None))
}

/// `(1/n) sum_t sum_u exp((NN(flip_u x_t) - NN(x_t)) / 2)`.
pub fn full_energy_loss(net: &EnergyNet, samples: &SampleSet) -> Result<f64> {
    full_energy_loss_weighted(net, &samples.weighted())
}

/// Parameter gradient of [`full_energy_loss_weighted`].
pub fn full_energy_gradient(net: &EnergyNet, data: &WeightedConfigs) -> Result<Vec<f64>> {
    check_energy_data(net, data.p(), data.alphabet())?;
    let rows: Vec<usize> = (0..data.len()).collect();
    let mut grad = vec![0.0; net.net.num_params()];
    FlipEval::new().run(&net.net, data, &rows, 1.0, Some(&mut grad));
    Ok(grad)
}

/// Trains an energy net on the flip loss with the same epoch scheme as the
/// conditional nets.
pub fn energy_fit(samples: &SampleSet, shape: NetShape, config: &TrainConfig) -> Result<FitOutput<EnergyNet>> {
    config.validate()?;
    if !samples.alphabet().is_binary() {
        return Err(Error::Unsupported(
            "full-energy learning is defined for binary alphabets only".into(),
        ));
    }
    let p = samples.p();
    let mut rng = seeded_rng(config.seed);
    let mut net = Mlp::init(EnergyNet::spec(p, shape)?, &mut rng)?;
    if config.zero_input_init {
        net.zero_input_weights();
    }
    let (train, validation) = split_validation(samples, config.validation_fraction, &mut rng)?;
    let mut model = EnergyNet::new(net)?;
    let mut opt = OptimizerState::new(config.optimizer, model.net.num_params())?;
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut grad = vec![0.0; model.net.num_params()];
    let mut eval = FlipEval::new();
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
            let loss = eval.run(&model.net, &train, batch, 1.0 / weight, Some(&mut grad));
            if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                return Err(diverged("flip loss", epoch, opt.learning_rate()));
            }
            opt.step(&mut model.net.params, &grad)?;
            prox_input_layer(&mut model.net, &opt, config.input_l1);
        }
        if (epoch + 1) % config.log_every == 0 || epoch + 1 == config.epochs {
            let loss = full_energy_loss_weighted(&model, &train)?;
            if !loss.is_finite() {
                return Err(diverged("flip loss", epoch, opt.learning_rate()));
            }
            let validation = match &validation {
                Some(v) => Some(full_energy_loss_weighted(&model, v)?),
                None => None,
            };
            history.push(LossRecord {
                epoch: epoch + 1,
                loss,
                penalty: config.input_l1 * input_l1(&model.net),
                validation,
            });
        }
    }
    Ok(FitOutput {
        model,
        history,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnergyGap {
    /// Mean of `|NN - H|` over all configurations after removing each mean.
    pub mean: f64,
    pub max: f64,
}

/// Compares two energy tables up to an additive constant.
pub fn gauge_gap(learned: &[f64], truth: &[f64]) -> Result<EnergyGap> {
    if learned.len() != truth.len() || learned.is_empty() {
        return Err(invalid("energy tables differ in size"));
    }
    let m = learned.len() as f64;
    let shift = learned.iter().sum::<f64>() / m - truth.iter().sum::<f64>() / m;
    let (mut sum, mut max) = (0.0, 0.0f64);
    for (a, b) in learned.iter().zip(truth) {
        let d = (a - b - shift).abs();
        sum += d;
        max = max.max(d);
    }
    Ok(EnergyGap { mean: sum / m, max })
}

pub fn energy_compare(net: &EnergyNet, truth: &EnergyModel, cap: EnumerationCap) -> Result<EnergyGap> {
    if truth.p() != net.p() || !truth.alphabet().is_binary() {
        return Err(invalid("energy net and truth differ in shape"));
    }
    let learned = net.energy_table(cap)?;
    let mut config = vec![0u8; truth.p()];
    let exact: Vec<f64> = (0..learned.len())
        .map(|idx| {
            decode_config(idx, 2, &mut config);
            truth.energy(&config)
        })
        .collect();
    gauge_gap(&learned, &exact)
}
