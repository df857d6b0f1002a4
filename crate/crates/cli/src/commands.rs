use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use neurise_core::energy::{energy_compare, energy_fit, EnergyNet};
use neurise_core::eval::{
    avg_conditional_error, fourier_expand, leading_coefficients, tvd_empirical,
    write_metrics_file, write_spectrum_csv, CoefficientSpectrum, FourierCap, MetricRow,
};
use neurise_core::generators::{
    edge_probability_for_degree, gen_er_pairwise, gen_hypergraph_model, gen_one_d_model,
    gen_random_hypergraph, StrengthDist,
};
use neurise_core::grise::{grise_fit, GriseMode, GriseProblem, GriseSolution, SolverSettings};
use neurise_core::io::{read_json, read_model, read_samples, write_json, write_model, write_samples};
use neurise_core::basis::build_partial_basis;
use neurise_core::neural::OptimizerConfig;
use neurise_core::neurise::{
    neurise_fit, ConditionalModel, FitOutput, LearnedConditionals, LossRecord, NetShape,
    TrainConfig,
};
use neurise_core::sampling::{
    exact_sample, gibbs_sample_chains, model_distribution, ConditionalProvider, EnumerationCap,
    FnProvider, GibbsConfig,
};
use neurise_core::structure::{
    ranking_auc, reconstruct_graph, select_threshold, structure_metrics, write_norms_file,
    InputWeightNorms, StructureResult, ThresholdMethod,
};
use neurise_core::{seeded_rng, BasisKind, EnergyModel, SampleSet};
use rayon::prelude::*;
use serde_json::{Map, Value};

use crate::config::{
    CliError, CliResult, EvalConfig, ExpandConfig, FitConfig, GenerateConfig, Penalty,
    SampleConfig, EXIT_SOLVER,
};

/// Files written and facts worth recording in the manifest.
#[derive(Default)]
pub struct Run {
    pub outputs: Vec<PathBuf>,
    pub summary: Map<String, Value>,
}

impl Run {
    fn note(&mut self, key: &str, value: impl Into<Value>) {
        self.summary.insert(key.to_string(), value.into());
    }
}

fn cap(max_log2_states: f64) -> EnumerationCap {
    EnumerationCap { max_log2_states }
}

fn gibbs(seed: u64, burn_in: Option<usize>, thinning: Option<usize>) -> GibbsConfig {
    GibbsConfig {
        burn_in,
        thinning,
        seed,
    }
}

// ---------------------------------------------------------------------------
// generate

/// The model is drawn with `seed`, the samples with `seed + 1`.
pub fn generate(cfg: &mut GenerateConfig, run: &mut Run) -> CliResult<()> {
    let [lo, hi] = cfg.interval;
    let dist = if cfg.signed {
        StrengthDist::SignedUniform { lo, hi }
    } else {
        StrengthDist::Uniform { lo, hi }
    };
    let model = match cfg.generator.as_str() {
        "one-d" => {
            let theta = match &cfg.theta {
                Some(t) => t.clone(),
                None => {
                    let mut rng = seeded_rng(cfg.seed);
                    let u = StrengthDist::uniform(-1.0, 1.0);
                    (0..cfg.order).map(|_| u.draw(&mut rng)).collect()
                }
            };
            cfg.theta = Some(theta.clone());
            gen_one_d_model(cfg.p, cfg.order, &theta)?
        }
        "er" => {
            let prob = edge_probability_for_degree(cfg.p, cfg.degree)?;
            gen_er_pairwise(cfg.p, prob, dist, cfg.seed)?
        }
        "hypergraph" => gen_hypergraph_model(cfg.p, dist, cfg.seed)?,
        "random-hypergraph" => {
            gen_random_hypergraph(cfg.p, cfg.term_order, cfg.degree, dist, cfg.seed)?
        }
        other => return Err(CliError::config(format!("unknown generator `{other}`"))),
    };
    let model_path = cfg.out.join("model.json");
    write_model(&model_path, &model)?;
    run.outputs.push(model_path);
    run.note("terms", model.terms().len());

    if cfg.n > 0 {
        let seed = cfg.seed.wrapping_add(1);
        let samples = draw_from_model(
            &model,
            cfg.n,
            &cfg.sampler,
            cfg.chains,
            &gibbs(seed, cfg.burn_in, cfg.thinning),
            cap(cfg.max_log2_states),
        )?;
        let path = cfg.out.join("samples.txt");
        write_samples(&path, &samples)?;
        run.outputs.push(path);
    }
    run.note("n_samples", cfg.n);
    Ok(())
}

fn draw_from_model(
    model: &EnergyModel,
    n: usize,
    sampler: &str,
    chains: usize,
    gibbs_cfg: &GibbsConfig,
    cap: EnumerationCap,
) -> CliResult<SampleSet> {
    match sampler {
        "exact" => Ok(exact_sample(&model_distribution(model, cap)?, n, gibbs_cfg.seed)?),
        "gibbs" => Ok(gibbs_sample_chains(model, n, gibbs_cfg, chains)?),
        other => Err(CliError::config(format!("unknown sampler `{other}`"))),
    }
}

// ---------------------------------------------------------------------------
// sample

enum Source {
    Model(EnergyModel),
    Learned(LearnedConditionals),
    Energy(EnergyNet),
}

fn load_source(
    model: &Option<PathBuf>,
    learned: &Option<PathBuf>,
    energy_net: &Option<PathBuf>,
) -> CliResult<Source> {
    match (model, learned, energy_net) {
        (Some(m), None, None) => Ok(Source::Model(read_model(m)?)),
        (None, Some(dir), None) => {
            let energy = dir.join("energy_net.json");
            if energy.exists() {
                Ok(Source::Energy(read_json(energy)?))
            } else {
                Ok(Source::Learned(load_learned(dir)?))
            }
        }
        (None, None, Some(e)) => Ok(Source::Energy(read_json(e)?)),
        _ => Err(CliError::config(
            "give exactly one of --model, --learned, --energy-net",
        )),
    }
}

/// Reads `cond_0.json`, `cond_1.json`, ... from a fit directory.
pub fn load_learned(dir: &Path) -> CliResult<LearnedConditionals> {
    let mut models = Vec::new();
    loop {
        let path = dir.join(format!("cond_{}.json", models.len()));
        if !path.exists() {
            break;
        }
        let value: Value = read_json(&path)?;
        let model = if value.get("flavor").is_some() {
            serde_json::from_value::<ConditionalModel>(value)?
        } else {
            ConditionalModel::from_grise(&serde_json::from_value::<GriseSolution>(value)?)?
        };
        models.push(model);
    }
    if models.is_empty() {
        return Err(CliError::config(format!(
            "{}: no learned conditionals found",
            dir.display()
        )));
    }
    Ok(LearnedConditionals::new(models)?)
}

/// Conditionals of a binary energy network, for Gibbs sampling.
fn energy_provider(net: &EnergyNet) -> impl ConditionalProvider + Sync + '_ {
    FnProvider::new(net.p(), neurise_core::Alphabet::BINARY, move |u, config: &[u8]| {
        let mut c = config.to_vec();
        c[u] = 0;
        let e0 = net.energy(&c);
        c[u] = 1;
        let e1 = net.energy(&c);
        let p0 = 1.0 / (1.0 + (e1 - e0).exp());
        vec![p0, 1.0 - p0]
    })
}

fn draw_from_source(
    source: &Source,
    n: usize,
    sampler: &str,
    chains: usize,
    gibbs_cfg: &GibbsConfig,
    cap: EnumerationCap,
) -> CliResult<SampleSet> {
    match (source, sampler) {
        (Source::Model(m), _) => draw_from_model(m, n, sampler, chains, gibbs_cfg, cap),
        (Source::Learned(l), "gibbs") => Ok(gibbs_sample_chains(l, n, gibbs_cfg, chains)?),
        (Source::Learned(_), "exact") => Err(CliError::config(
            "learned conditionals define no joint table; use the gibbs sampler",
        )),
        (Source::Energy(e), "exact") => Ok(exact_sample(&e.distribution(cap)?, n, gibbs_cfg.seed)?),
        (Source::Energy(e), "gibbs") => {
            Ok(gibbs_sample_chains(&energy_provider(e), n, gibbs_cfg, chains)?)
        }
        (_, other) => Err(CliError::config(format!("unknown sampler `{other}`"))),
    }
}

pub fn sample(cfg: &mut SampleConfig, run: &mut Run) -> CliResult<()> {
    let source = load_source(&cfg.model, &cfg.learned, &cfg.energy_net)?;
    let samples = draw_from_source(
        &source,
        cfg.n,
        &cfg.sampler,
        cfg.chains,
        &gibbs(cfg.seed, cfg.burn_in, cfg.thinning),
        cap(cfg.max_log2_states),
    )?;
    let path = cfg.out.join("samples.txt");
    write_samples(&path, &samples)?;
    run.outputs.push(path);
    run.note("n_samples", cfg.n);
    Ok(())
}

// ---------------------------------------------------------------------------
// fit

fn train_config(cfg: &FitConfig, input_l1: f64) -> CliResult<TrainConfig> {
    let optimizer = match cfg.optimizer.as_str() {
        "adam" => OptimizerConfig::adam(cfg.lr),
        "sgd" => OptimizerConfig::sgd(cfg.lr),
        other => return Err(CliError::config(format!("unknown optimizer `{other}`"))),
    };
    Ok(TrainConfig {
        epochs: cfg.epochs,
        minibatch: cfg.minibatch,
        optimizer,
        seed: cfg.seed,
        input_l1,
        zero_input_init: cfg.zero_input_init,
        validation_fraction: cfg.validation_fraction,
        log_every: cfg.log_every,
        final_lr_fraction: cfg.final_lr_fraction,
    })
}

fn threshold_method(cfg: &FitConfig) -> CliResult<ThresholdMethod> {
    match cfg.threshold.as_str() {
        "stddev-outlier" => Ok(ThresholdMethod::StddevOutlier {
            fraction: cfg.threshold_fraction,
        }),
        "rule-of-thumb" => Ok(ThresholdMethod::RuleOfThumb { c: cfg.threshold_c }),
        "manual" => match cfg.tau {
            Some(tau) => Ok(ThresholdMethod::Manual { tau }),
            None => Err(CliError::config("manual threshold needs --tau")),
        },
        other => Err(CliError::config(format!("unknown threshold `{other}`"))),
    }
}

fn write_loss_csv(path: &Path, history: &[LossRecord]) -> CliResult<()> {
    let mut s = String::from("epoch,loss,penalty,validation\n");
    for r in history {
        let v = r.validation.map(|v| v.to_string()).unwrap_or_default();
        let _ = writeln!(s, "{},{},{},{}", r.epoch, r.loss, r.penalty, v);
    }
    std::fs::write(path, s)?;
    Ok(())
}

/// Writes what succeeded; the first failure is returned after everything
/// else has been saved.
fn finish_per_site<T>(
    results: Vec<neurise_core::Result<T>>,
    run: &mut Run,
    mut save: impl FnMut(usize, &T, &mut Run) -> CliResult<()>,
) -> CliResult<Vec<T>> {
    let mut ok = Vec::new();
    let mut failed = Vec::new();
    let mut first_err = None;
    for (u, r) in results.into_iter().enumerate() {
        match r {
            Ok(t) => {
                save(u, &t, run)?;
                ok.push(t);
            }
            Err(e) => {
                failed.push(u);
                first_err.get_or_insert(e);
            }
        }
    }
    if let Some(e) = first_err {
        run.note("failed_sites", failed);
        let mut err = CliError::from(e);
        // any abort of a per-variable fit is a solver failure
        err.code = err.code.max(EXIT_SOLVER);
        return Err(err);
    }
    Ok(ok)
}

pub fn fit(cfg: &mut FitConfig, run: &mut Run) -> CliResult<()> {
    let samples = read_samples(&cfg.samples, None)?;
    let (p, n) = (samples.p(), samples.n());
    run.note("n_samples", n);
    run.note("p", p);
    match cfg.method.as_str() {
        "grise" => fit_grise(cfg, &samples, run),
        "neurise" | "structure" => fit_nets(cfg, &samples, run),
        "energy" => {
            let lambda_in = cfg.lambda_in.get_or_insert(Penalty::Value(0.0));
            let input_l1 = lambda_in.resolve(cfg.lambda_c, p, n)?;
            let out = energy_fit(
                &samples,
                NetShape::new(cfg.depth, cfg.width),
                &train_config(cfg, input_l1)?,
            )?;
            let path = cfg.out.join("energy_net.json");
            write_json(&path, &out.model)?;
            run.outputs.push(path);
            let path = cfg.out.join("loss.csv");
            write_loss_csv(&path, &out.history)?;
            run.outputs.push(path);
            Ok(())
        }
        other => Err(CliError::config(format!("unknown method `{other}`"))),
    }
}

fn fit_grise(cfg: &FitConfig, samples: &SampleSet, run: &mut Run) -> CliResult<()> {
    let (p, n) = (samples.p(), samples.n());
    let kind = match cfg.basis.as_str() {
        "monomial" => BasisKind::Monomial,
        "indicator" => BasisKind::Indicator,
        other => return Err(CliError::config(format!("unknown basis `{other}`"))),
    };
    let mode = match cfg.mode.as_str() {
        "penalized" => {
            let lambda = cfg.lambda.resolve(cfg.lambda_c, p, n)?;
            run.note("lambda", lambda);
            GriseMode::Penalized { lambda }
        }
        "constrained" => match cfg.gamma {
            Some(gamma) => GriseMode::Constrained { gamma },
            None => return Err(CliError::config("constrained mode needs --gamma")),
        },
        other => return Err(CliError::config(format!("unknown mode `{other}`"))),
    };
    let settings = SolverSettings {
        tol: cfg.tol,
        max_iter: cfg.max_iter,
        ..SolverSettings::default()
    };
    let data = samples.weighted();
    let results: Vec<_> = (0..p)
        .into_par_iter()
        .map(|u| {
            let basis = build_partial_basis(p, samples.alphabet(), cfg.order, u, kind)?;
            grise_fit(&GriseProblem::new(basis, data.clone())?, mode, &settings)
        })
        .collect();
    let out = cfg.out.clone();
    let solutions = finish_per_site(results, run, |u, sol: &GriseSolution, run| {
        let path = out.join(format!("cond_{u}.json"));
        write_json(&path, sol)?;
        run.outputs.push(path);
        Ok(())
    })?;
    let unconverged: Vec<usize> = solutions
        .iter()
        .filter(|s| !s.converged)
        .map(|s| s.u)
        .collect();
    if !unconverged.is_empty() {
        eprintln!("warning: solver hit the iteration limit at sites {unconverged:?}");
    }
    run.note("unconverged_sites", unconverged);
    Ok(())
}

fn fit_nets(cfg: &mut FitConfig, samples: &SampleSet, run: &mut Run) -> CliResult<()> {
    let (p, n) = (samples.p(), samples.n());
    let structure = cfg.method == "structure";
    if structure {
        cfg.zero_input_init = true;
    }
    let default = if structure {
        Penalty::Keyword("auto".into())
    } else {
        Penalty::Value(0.0)
    };
    let input_l1 = cfg
        .lambda_in
        .get_or_insert(default)
        .resolve(cfg.lambda_c, p, n)?;
    run.note("lambda_in", input_l1);
    if structure && input_l1 <= 0.0 {
        let w = format!("input penalty is {input_l1}; non-edge weights are not driven to zero");
        eprintln!("warning: {w}");
        run.note("warning", w);
    }
    let threshold = if structure {
        Some(threshold_method(cfg)?)
    } else {
        None
    };
    let train = train_config(cfg, input_l1)?;
    train.validate()?;
    let shape = NetShape::new(cfg.depth, cfg.width);
    let results: Vec<_> = (0..p)
        .into_par_iter()
        .map(|u| {
            let mut c = train;
            c.seed = train.seed.wrapping_add(u as u64);
            neurise_fit(u, samples, shape, &c)
        })
        .collect();
    let out = cfg.out.clone();
    let fits = finish_per_site(results, run, |u, fit: &FitOutput<ConditionalModel>, run| {
        let path = out.join(format!("cond_{u}.json"));
        write_json(&path, &fit.model)?;
        run.outputs.push(path);
        let path = out.join(format!("loss_{u}.csv"));
        write_loss_csv(&path, &fit.history)?;
        run.outputs.push(path);
        Ok(())
    })?;

    if let Some(method) = threshold {
        let models: Vec<ConditionalModel> = fits.into_iter().map(|f| f.model).collect();
        let norms = InputWeightNorms::from_models(&models)?;
        let path = cfg.out.join("norms.csv");
        write_norms_file(&path, &norms)?;
        run.outputs.push(path);
        let tau = select_threshold(&norms, method, n)?;
        let result = reconstruct_graph(&norms, tau, method);
        run.note("threshold", tau);
        run.note("edges", result.edges().len());
        let path = cfg.out.join("structure.json");
        write_json(&path, &result)?;
        run.outputs.push(path);
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// eval

fn sample_count(cfg: &EvalConfig) -> usize {
    if let Some(n) = cfg.n {
        return n;
    }
    cfg.learned
        .as_ref()
        .and_then(|dir| read_json::<Value>(dir.join("manifest.json")).ok())
        .and_then(|m| m.pointer("/summary/n_samples").and_then(Value::as_u64))
        .map_or(0, |n| n as usize)
}

fn require<'a>(path: &'a Option<PathBuf>, flag: &str) -> CliResult<&'a PathBuf> {
    path.as_ref()
        .ok_or_else(|| CliError::config(format!("this metric needs --{flag}")))
}

fn check_dims(truth: &EnergyModel, p: usize) -> CliResult<()> {
    if truth.p() != p {
        return Err(CliError::config(format!(
            "dimension mismatch: truth has p = {}, learned has p = {p}",
            truth.p()
        )));
    }
    Ok(())
}

fn source_dims(source: &Source) -> usize {
    match source {
        Source::Model(m) => m.p(),
        Source::Learned(l) => l.num_vars(),
        Source::Energy(e) => e.p(),
    }
}

/// Spectrum of the full energy (energy nets and explicit models without a
/// site) or of the partial energy at `site`.
fn spectrum_of(source: &Source, site: Option<usize>) -> CliResult<CoefficientSpectrum> {
    let fcap = FourierCap::default();
    let p = source_dims(source);
    if let Some(u) = site {
        if u >= p {
            return Err(CliError::config(format!("site {u} out of range for p = {p}")));
        }
    }
    let binary = |a: neurise_core::Alphabet| {
        if a.is_binary() {
            Ok(())
        } else {
            Err(CliError::from(neurise_core::Error::Unsupported(
                "Fourier expansion needs a binary alphabet".into(),
            )))
        }
    };
    Ok(match (source, site) {
        (Source::Model(m), None) => {
            binary(m.alphabet())?;
            fourier_expand(|c| m.energy(c), p, fcap)?
        }
        (Source::Model(m), Some(u)) => {
            binary(m.alphabet())?;
            fourier_expand(|c| m.partial_energy(u, c), p, fcap)?
        }
        (Source::Learned(l), Some(u)) => {
            let model = &l.models()[u];
            binary(model.alphabet())?;
            fourier_expand(|c| model.partial_energy(c), p, fcap)?
        }
        (Source::Learned(_), None) => {
            return Err(CliError::config("learned conditionals need a --site"))
        }
        (Source::Energy(e), _) => fourier_expand(|c| e.energy(c), p, fcap)?,
    })
}

pub fn eval(cfg: &mut EvalConfig, run: &mut Run) -> CliResult<()> {
    let n = sample_count(cfg);
    cfg.n = Some(n);
    let seed = cfg.seed;
    let ecap = cap(cfg.max_log2_states);
    let row = |metric: &str, value: f64| MetricRow {
        metric: metric.to_string(),
        n,
        value,
        seed,
    };
    let mut rows = Vec::new();
    match cfg.metric.as_str() {
        "conditional-error" => {
            let truth = read_model(require(&cfg.truth, "truth")?)?;
            let learned = load_learned(require(&cfg.learned, "learned")?)?;
            check_dims(&truth, learned.num_vars())?;
            rows.push(row(
                "conditional_error",
                avg_conditional_error(&learned, &truth, ecap)?,
            ));
        }
        "tvd" => {
            let truth = read_model(require(&cfg.truth, "truth")?)?;
            let learned = load_source(&None, &Some(require(&cfg.learned, "learned")?.clone()), &None)?;
            check_dims(&truth, source_dims(&learned))?;
            let alphabet = truth.alphabet();
            // three independent draws: two from the truth, one from the fit
            let chains = cfg.chains.max(1) as u64;
            let draw = |source: &Source, k: u64| {
                let g = gibbs(seed.wrapping_add(k * chains), cfg.burn_in, cfg.thinning);
                let exact_ok = ecap.check(source_dims(source), alphabet).is_ok();
                let sampler = match source {
                    Source::Learned(_) => "gibbs",
                    _ if exact_ok => "exact",
                    _ => "gibbs",
                };
                draw_from_source(source, cfg.n_draw, sampler, cfg.chains, &g, ecap)
            };
            let truth = Source::Model(truth);
            let t1 = draw(&truth, 0)?;
            let t2 = draw(&truth, 1)?;
            let l = draw(&learned, 2)?;
            rows.push(row("tvd_learned_true", tvd_empirical(&l, &t1)?));
            rows.push(row("tvd_true_true", tvd_empirical(&t2, &t1)?));
            run.note("n_draw", cfg.n_draw);
        }
        "spectrum" => {
            let learned = load_source(&None, &Some(require(&cfg.learned, "learned")?.clone()), &None)?;
            let site = match learned {
                Source::Energy(_) => None,
                _ => Some(cfg.site),
            };
            let spectrum = spectrum_of(&learned, site)?;
            for c in leading_coefficients(&spectrum, cfg.max_order) {
                rows.push(row(&format!("leading_coefficient_order_{}", c.order), c.value));
            }
            let path = cfg.out.join("spectrum.csv");
            write_spectrum(&path, &spectrum)?;
            run.outputs.push(path);
        }
        "energy-gap" => {
            let truth = read_model(require(&cfg.truth, "truth")?)?;
            let dir = require(&cfg.learned, "learned")?;
            let net: EnergyNet = read_json(dir.join("energy_net.json"))?;
            check_dims(&truth, net.p())?;
            let gap = energy_compare(&net, &truth, ecap)?;
            rows.push(row("energy_gap_mean", gap.mean));
            rows.push(row("energy_gap_max", gap.max));
        }
        "structure" => {
            let truth = read_model(require(&cfg.truth, "truth")?)?;
            let dir = require(&cfg.learned, "learned")?;
            let result: StructureResult = read_json(dir.join("structure.json"))?;
            check_dims(&truth, result.norms.p())?;
            let m = structure_metrics(&result, &truth)?;
            rows.push(row("edge_accuracy", m.edge_accuracy));
            rows.push(row("non_edge_accuracy", m.non_edge_accuracy));
            rows.push(row("total_accuracy", m.total_accuracy));
            rows.push(row("false_positives", m.false_positives.len() as f64));
            rows.push(row("false_negatives", m.false_negatives.len() as f64));
            rows.push(row("ranking_auc", ranking_auc(&result.norms, &truth)?));
        }
        other => return Err(CliError::config(format!("unknown metric `{other}`"))),
    }
    let path = cfg.out.join("metrics.csv");
    write_metrics_file(&path, &rows)?;
    run.outputs.push(path);
    run.note("rows", rows.len());
    Ok(())
}

fn write_spectrum(path: &Path, spectrum: &CoefficientSpectrum) -> CliResult<()> {
    let mut buf = Vec::new();
    write_spectrum_csv(&mut buf, spectrum)?;
    std::fs::write(path, buf)?;
    Ok(())
}

// ---------------------------------------------------------------------------
// expand

pub fn expand(cfg: &mut ExpandConfig, run: &mut Run) -> CliResult<()> {
    let source = load_source(&cfg.model, &cfg.learned, &cfg.energy_net)?;
    let spectrum = spectrum_of(&source, cfg.site)?;
    let path = cfg.out.join("spectrum.csv");
    write_spectrum(&path, &spectrum)?;
    run.outputs.push(path);
    run.note("p", spectrum.p());
    Ok(())
}
