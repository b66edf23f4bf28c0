//! Dispatch from a config to the library experiments.

use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use anyhow::{anyhow, bail, Context, Result};
use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::{json, Map, Value};

use plab_core::coarse::{pushforward, random_atoms, CoarseGraining, CoarseLearner, LabelTable, MapSpec, Point, UniformBins};
use plab_core::compression::{
    learner_to_compression, required_n, sample_size_conditions, trace, BoostedScheme, CompressionLearner,
    SegmentScheme,
};
use plab_core::emx::{
    count_successes, sample_complexity, three_sigma, verify_guarantee, DistributionFile, EmxLearner, FinSupportDist,
    GuaranteeReport, IndexedDomain, LoadedDist, QuantileLearner,
};
use plab_core::feasibility::{
    build_pl_constraints, epsilon_optimal_sets, lp_feasible, sdp_feasible, PolytopeFile, PolytopeSpec, SdpOptions,
    TaskFile, TaskSpec,
};
use plab_core::quantum::{
    d_min, delta_min, helstrom, pure_distance_formula, pure_pair_with_overlap, DimCap, StateFile,
};
use plab_core::Probability;

use crate::config::{
    CoarseParams, CompressMode, CompressParams, EmxParams, ExperimentConfig, FeasibleLpParams, FeasibleSdpParams,
    Kind, QuantumParams,
};
use crate::report::{RunReport, Sweep};

/// What one experiment produces before it is wrapped into a report.
struct Outcome {
    params: Value,
    metrics: Map<String, Value>,
    sweep: Option<Sweep>,
}

fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

fn to_value<T: Serialize>(v: &T) -> Result<Value> {
    Ok(serde_json::to_value(v)?)
}

fn metrics(value: Value) -> Map<String, Value> {
    match value {
        Value::Object(map) => map,
        _ => Map::new(),
    }
}

/// Runs the experiment named by `cfg`; relative paths resolve against `base`.
pub fn run_config(cfg: &ExperimentConfig, base: &Path) -> Result<RunReport> {
    let start = Instant::now();
    let outcome = match cfg.kind {
        Kind::Emx => run_emx(cfg, base)?,
        Kind::Coarse => run_coarse(cfg, base)?,
        Kind::Compress => run_compress(cfg)?,
        Kind::Quantum => run_quantum(cfg)?,
        Kind::FeasibleLp => run_feasible_lp(cfg, base)?,
        Kind::FeasibleSdp => run_feasible_sdp(cfg, base)?,
    };
    Ok(RunReport {
        version: env!("CARGO_PKG_VERSION").to_string(),
        config: json!({ "kind": cfg.kind, "parameters": outcome.params, "seed": cfg.seed }),
        metrics: outcome.metrics,
        sweep: outcome.sweep,
        wall_clock_seconds: start.elapsed().as_secs_f64(),
    })
}

fn guarantee_metrics(r: &GuaranteeReport) -> Value {
    json!({
        "d": r.d,
        "trials": r.trials,
        "rate": r.empirical_rate,
        "bound": r.bound,
        "ci_halfwidth": r.ci_halfwidth,
        "meets_bound": r.meets_bound(),
    })
}

fn guarantee_sweep<E, W, L>(
    learner: &L,
    p: &FinSupportDist<E, W>,
    eps: f64,
    delta: f64,
    ds: &[usize],
    trials: usize,
    seed: u64,
) -> Result<Sweep>
where
    E: plab_core::emx::Element,
    W: Probability,
    L: EmxLearner<E>,
{
    let rows = ds
        .iter()
        .map(|&d| {
            let r = verify_guarantee(learner, p, eps, delta, d, trials, seed)?;
            Ok(vec![json!(d), json!(r.empirical_rate), json!(r.bound)])
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Sweep {
        columns: vec!["d".into(), "rate".into(), "bound".into()],
        rows,
    })
}

fn run_emx(cfg: &ExperimentConfig, base: &Path) -> Result<Outcome> {
    let mut p: EmxParams = cfg.params()?;
    let needed = sample_complexity(p.epsilon, p.delta)?;
    let d = *p.d.get_or_insert(needed);
    let file: DistributionFile = read_json(&resolve(base, &p.dist))?;
    let loaded = file.load()?;
    let labels = match &loaded {
        LoadedDist::Exact(dist) => dist.support().to_vec(),
        LoadedDist::Float(dist) => dist.support().to_vec(),
    };
    let learner = QuantileLearner::new(Arc::new(IndexedDomain::new(labels)?));
    let (report, sweep) = match &loaded {
        LoadedDist::Exact(dist) => (
            verify_guarantee(&learner, dist, p.epsilon, p.delta, d, p.trials, cfg.seed)?,
            p.sweep_d
                .as_deref()
                .map(|ds| guarantee_sweep(&learner, dist, p.epsilon, p.delta, ds, p.trials, cfg.seed))
                .transpose()?,
        ),
        LoadedDist::Float(dist) => (
            verify_guarantee(&learner, dist, p.epsilon, p.delta, d, p.trials, cfg.seed)?,
            p.sweep_d
                .as_deref()
                .map(|ds| guarantee_sweep(&learner, dist, p.epsilon, p.delta, ds, p.trials, cfg.seed))
                .transpose()?,
        ),
    };
    let mut m = metrics(guarantee_metrics(&report));
    m.insert("sample_complexity".into(), json!(needed));
    m.insert("exact_weights".into(), json!(matches!(loaded, LoadedDist::Exact(_))));
    m.insert("support_size".into(), json!(learner.domain().len()));
    Ok(Outcome {
        params: to_value(&p)?,
        metrics: m,
        sweep,
    })
}

fn coarse_points(p: &CoarseParams, base: &Path, seed: u64) -> Result<FinSupportDist<Point, num_rational::BigRational>> {
    let Some(path) = &p.dist else {
        return Ok(random_atoms(p.atoms, p.max_weight, seed)?);
    };
    let file: DistributionFile = read_json(&resolve(base, path))?;
    let points = file
        .labels
        .iter()
        .map(|l| {
            l.trim()
                .parse::<f64>()
                .ok()
                .and_then(Point::new)
                .ok_or_else(|| anyhow!("label {l:?} is not a point in [0, 1]"))
        })
        .collect::<Result<Vec<_>>>()?;
    let weights = file
        .weights
        .iter()
        .map(|w| plab_core::parse_rational(w))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(FinSupportDist::new(points, weights)?)
}

fn coarse_with_map<X, W, M>(
    p: &CoarseParams,
    dist: &FinSupportDist<X, W>,
    map: &M,
    d: usize,
    seed: u64,
) -> Result<Map<String, Value>>
where
    X: plab_core::emx::Element,
    W: Probability,
    M: CoarseGraining<X>,
{
    let image = pushforward(dist, map)?;
    let report = verify_guarantee(&CoarseLearner::new(map), dist, p.epsilon, p.delta, d, p.trials, seed)?;
    let mut m = metrics(guarantee_metrics(&report));
    m.insert("cells".into(), json!(map.alphabet().len()));
    m.insert("support_size".into(), json!(dist.len()));
    m.insert("occupied_cells".into(), json!(image.len()));
    Ok(m)
}

fn run_coarse(cfg: &ExperimentConfig, base: &Path) -> Result<Outcome> {
    let mut p: CoarseParams = cfg.params()?;
    let needed = sample_complexity(p.epsilon, p.delta)?;
    let d = *p.d.get_or_insert(needed);
    if d < needed {
        bail!("d = {d} is below the required sample size {needed}");
    }
    let map = match (&p.map, p.bits) {
        (Some(_), Some(_)) => bail!("give either bits or map, not both"),
        (Some(map), None) => map.clone(),
        (None, Some(bits)) => MapSpec::UniformBins { bits },
        (None, None) => bail!("coarse needs bits or map"),
    };
    let (mut m, sweep) = match &map {
        MapSpec::UniformBins { bits } => {
            let dist = coarse_points(&p, base, cfg.seed)?;
            let m = coarse_with_map(&p, &dist, &UniformBins::new(*bits)?, d, cfg.seed)?;
            let sweep = match &p.sweep_bits {
                None => None,
                Some(all) => {
                    let rows = all
                        .iter()
                        .map(|&b| {
                            let r = coarse_with_map(&p, &dist, &UniformBins::new(b)?, d, cfg.seed)?;
                            Ok(vec![json!(b), r["rate"].clone(), r["bound"].clone()])
                        })
                        .collect::<Result<Vec<_>>>()?;
                    Some(Sweep {
                        columns: vec!["bits".into(), "rate".into(), "bound".into()],
                        rows,
                    })
                }
            };
            (m, sweep)
        }
        MapSpec::Table { entries } => {
            if p.sweep_bits.is_some() {
                bail!("sweep_bits needs a uniform-bins map");
            }
            let path = p.dist.as_ref().ok_or_else(|| anyhow!("a table map needs a dist file"))?;
            let file: DistributionFile = read_json(&resolve(base, path))?;
            let table = LabelTable::new(entries)?;
            let m = match file.load()? {
                LoadedDist::Exact(dist) => coarse_with_map(&p, &dist, &table, d, cfg.seed)?,
                LoadedDist::Float(dist) => coarse_with_map(&p, &dist, &table, d, cfg.seed)?,
            };
            (m, None)
        }
    };
    m.insert("sample_complexity".into(), json!(needed));
    Ok(Outcome {
        params: to_value(&p)?,
        metrics: m,
        sweep,
    })
}

fn run_compress(cfg: &ExperimentConfig) -> Result<Outcome> {
    let p: CompressParams = cfg.params()?;
    let m = match p.mode {
        CompressMode::Demo => compress_demo(&p)?,
        CompressMode::Lemma1 => compress_lemma(&p, cfg.seed)?,
    };
    let sweep = p.sweep_m.as_ref().map(|ms| Sweep {
        columns: vec!["m".into(), "required_n".into()],
        rows: ms.iter().map(|&m| vec![json!(m), json!(required_n(m))]).collect(),
    });
    Ok(Outcome {
        params: to_value(&p)?,
        metrics: m,
        sweep,
    })
}

fn compress_demo(p: &CompressParams) -> Result<Map<String, Value>> {
    let domain = Arc::new(IndexedDomain::new(p.domain.clone())?);
    if let Some(x) = p.tuple.iter().find(|x| domain.idx(x).is_none()) {
        bail!("tuple element {x:?} is not in the domain");
    }
    if p.tuple.len() < 2 {
        bail!("the demo tuple needs at least two points");
    }
    let name = |x: &String| x.clone();
    let order = |x: &String| domain.idx(x).unwrap_or(usize::MAX);
    let pair = trace(&SegmentScheme::two_to_one(Arc::clone(&domain)), &p.tuple[..2], name, order)?;
    let boosted_scheme = BoostedScheme::new(SegmentScheme::two_to_one(Arc::clone(&domain)), p.tuple.len())?;
    let boosted = trace(&boosted_scheme, &p.tuple, name, order)?;
    let scheme = learner_to_compression(QuantileLearner::new(Arc::clone(&domain)), p.learner_d);
    let from_learner = if p.tuple.len() > scheme.m() {
        let t = trace(&scheme, &p.tuple[..=scheme.m()], name, order)?;
        json!({ "d": scheme.d(), "m": scheme.m(), "trace": t })
    } else {
        json!({ "d": scheme.d(), "m": scheme.m(), "trace": null, "note": format!("tuple shorter than m + 1 = {}", scheme.m() + 1) })
    };
    Ok(metrics(json!({
        "two_to_one": pair,
        "boosted": boosted,
        "from_learner": from_learner,
    })))
}

fn compress_lemma(p: &CompressParams, seed: u64) -> Result<Map<String, Value>> {
    let n = required_n(p.m);
    let mut m = metrics(json!({
        "m": p.m,
        "required_n": n,
        "conditions_at_n": sample_size_conditions(n, p.m),
        "conditions_below_n": sample_size_conditions(n - 1, p.m),
    }));
    if p.m == 1 {
        let labels: Vec<u32> = (1..=p.domain_size as u32).collect();
        let domain = Arc::new(IndexedDomain::new(labels.clone())?);
        let dist = FinSupportDist::uniform(labels)?;
        let rate_at = |n: usize| -> Result<f64> {
            let learner = CompressionLearner::new(SegmentScheme::two_to_one(Arc::clone(&domain)), n)?;
            let hits = count_successes(&learner, &dist, p.epsilon, n, p.trials, seed)?;
            Ok(hits as f64 / p.trials as f64)
        };
        let rate = rate_at(n)?;
        let target = 1.0 - p.delta;
        let mut threshold = None;
        for k in 2..=n {
            if rate_at(k)? >= target {
                threshold = Some(k);
                break;
            }
        }
        m.insert("erm_rate".into(), json!(rate));
        m.insert("erm_target".into(), json!(target));
        m.insert("erm_meets_target".into(), json!(rate >= target - three_sigma(target, p.trials)));
        // smallest sample size whose point estimate reaches the target
        m.insert("empirical_threshold_n".into(), json!(threshold));
    }
    Ok(m)
}

fn run_quantum(cfg: &ExperimentConfig) -> Result<Outcome> {
    let p: QuantumParams = cfg.params()?;
    let cap = DimCap::from_env();
    let (r0, r1) = pure_pair_with_overlap(p.gamma)?;
    let h = helstrom(&r0, &r1, p.copies, cap)?;
    let mut m = metrics(json!({
        "gamma": p.gamma,
        "copies": p.copies,
        "trace_norm": h.trace_norm,
        "trace_norm_formula": pure_distance_formula(p.gamma, p.copies),
        "helstrom_bound": h.bound,
        "achieved": h.achieved,
        "helstrom_error": 1.0 - h.per_state_success[0].min(h.per_state_success[1]),
        "delta_min": delta_min(p.gamma, p.copies)?,
    }));
    if let Some(delta) = p.delta {
        m.insert("delta".into(), json!(delta));
        match d_min(p.gamma, delta) {
            Ok(d) => m.insert("d_min".into(), json!(d)),
            Err(e) => m.insert("d_min".into(), json!(e.to_string())),
        };
    }
    let sweep = match (&p.sweep_gamma, &p.sweep_copies) {
        (Some(_), Some(_)) => bail!("give sweep_gamma or sweep_copies, not both"),
        (Some(gammas), None) => Some(Sweep {
            columns: vec!["gamma".into(), "delta_min".into(), "d_min".into()],
            rows: gammas
                .iter()
                .map(|&g| {
                    let dm = p.delta.and_then(|delta| d_min(g, delta).ok());
                    Ok(vec![json!(g), json!(delta_min(g, p.copies)?), json!(dm)])
                })
                .collect::<Result<Vec<_>>>()?,
        }),
        (None, Some(copies)) => Some(Sweep {
            columns: vec!["copies".into(), "delta_min".into(), "helstrom_error".into()],
            rows: copies
                .iter()
                .map(|&d| {
                    let h = helstrom(&r0, &r1, d, cap)?;
                    let err = 1.0 - h.per_state_success[0].min(h.per_state_success[1]);
                    Ok(vec![json!(d), json!(delta_min(p.gamma, d)?), json!(err)])
                })
                .collect::<Result<Vec<_>>>()?,
        }),
        (None, None) => None,
    };
    Ok(Outcome {
        params: to_value(&p)?,
        metrics: m,
        sweep,
    })
}

fn load_task(base: &Path, path: &Path) -> Result<TaskSpec> {
    Ok(read_json::<TaskFile>(&resolve(base, path))?.load()?)
}

fn good_set_labels(task: &TaskSpec, sets: &[Vec<usize>]) -> Value {
    let mut out = Map::new();
    for (t, set) in sets.iter().enumerate() {
        let names: Vec<&str> = set.iter().map(|&h| task.hyps()[h].as_str()).collect();
        out.insert(task.thetas()[t].clone(), json!(names));
    }
    Value::Object(out)
}

fn run_feasible_lp(cfg: &ExperimentConfig, base: &Path) -> Result<Outcome> {
    let p: FeasibleLpParams = cfg.params()?;
    let task = load_task(base, &p.task)?;
    let poly = match &p.polytope {
        Some(path) => {
            let file: PolytopeFile = read_json(&resolve(base, path))?;
            PolytopeSpec::from_file(&file, task.num_thetas(), task.num_hyps())?
        }
        None => PolytopeSpec::simplex(task.num_thetas(), task.num_hyps()),
    };
    let pl = build_pl_constraints(&task, &p.epsilon.0, &p.delta.0)?;
    let verdict = lp_feasible(&poly, &pl)?;
    let sets = epsilon_optimal_sets(&task, &p.epsilon.0)?;
    let mut m = metrics(verdict.to_json());
    m.insert("good_sets".into(), good_set_labels(&task, &sets));
    m.insert("polytope_rows".into(), json!(poly.rows().len()));
    m.insert("affine_dimension".into(), json!(poly.affine_dimension()));
    Ok(Outcome {
        params: to_value(&p)?,
        metrics: m,
        sweep: None,
    })
}

fn run_feasible_sdp(cfg: &ExperimentConfig, base: &Path) -> Result<Outcome> {
    let p: FeasibleSdpParams = cfg.params()?;
    let task = load_task(base, &p.task)?;
    let dir = resolve(base, &p.states);
    let states = task
        .thetas()
        .iter()
        .map(|label| {
            let file: StateFile = read_json(&dir.join(format!("{label}.json")))?;
            file.to_state().with_context(|| format!("state {label:?}"))
        })
        .collect::<Result<Vec<_>>>()?;
    let opts = SdpOptions {
        cap: DimCap::from_env(),
        ..SdpOptions::default()
    };
    let verdict = sdp_feasible(&states, &task, p.epsilon, p.delta, p.copies, &opts)?;
    let sets = epsilon_optimal_sets(&task, &num_rational::BigRational::from_float(p.epsilon).ok_or_else(|| anyhow!("epsilon is not finite"))?)?;
    let mut m = metrics(verdict.to_json());
    m.insert("good_sets".into(), good_set_labels(&task, &sets));
    m.insert("dimension".into(), json!(states[0].dim().pow(p.copies as u32)));
    if let plab_core::feasibility::SdpVerdict::Feasible { witness, .. } = &verdict {
        let kernel: Vec<Vec<f64>> = states
            .iter()
            .map(|s| plab_core::quantum::tensor_power(s, p.copies, opts.cap).and_then(|r| witness.probabilities(r.matrix())))
            .collect::<Result<_, _>>()?;
        m.insert("kernel".into(), json!(kernel));
    }
    Ok(Outcome {
        params: to_value(&p)?,
        metrics: m,
        sweep: None,
    })
}
