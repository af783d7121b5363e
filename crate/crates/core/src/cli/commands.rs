use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::manifest::{csv_header, manifest_name, sha256_hex, sibling, ExperimentManifest, ScmRef};
use super::*;
use crate::checkpoint::Checkpoint;
use crate::compare::{eval_events, mean_ci95, score, EvalConfig, Method};
use crate::error::{Error, Result};
use crate::estimators::{estimate_ceis, estimate_is, estimate_mis, estimate_rs, query_value, CeisConfig, EventSampler, Guard};
use crate::events::{CtfEvent, CtfVariableSet, EventKind, EventSpec, Process, QueryKind};
use crate::graphs::{causal_dot, counterfactual_markov_boundary, CutStrategy};
use crate::proposal::{AggregatorKind, HeadConfig, ProposalConfig};
use crate::scm::{zoo, Scm, ScmDescription};
use crate::train::{train_with_state, TrainConfig};

pub(super) fn zoo(command: ZooCommand) -> CliResult<()> {
    match command {
        ZooCommand::List => {
            for name in zoo::names() {
                emit(&format!("{name}\t{}\n", zoo::entry(name)?.summary));
            }
        }
        ZooCommand::Show { name, dot } => {
            let scm = load_scm(&name)?;
            if dot {
                emit(&causal_dot(&scm));
            } else {
                emit(&(serde_json::to_string_pretty(scm.description()).map_err(Error::from)? + "\n"));
            }
        }
    }
    Ok(())
}

/// A zoo name, or a path to a JSON/TOML description.
pub(crate) fn load_scm(name: &str) -> CliResult<Scm> {
    let path = Path::new(name);
    let ext = path.extension().map(|e| e.to_string_lossy().to_ascii_lowercase());
    match ext.as_deref() {
        Some("json") | Some("toml") => {
            let text = fs::read_to_string(path)?;
            let desc = if ext.as_deref() == Some("json") {
                ScmDescription::from_json(&text)?
            } else {
                ScmDescription::from_toml(&text)?
            };
            Ok(Scm::from_description(&desc)?)
        }
        _ => Ok(zoo::load(name)?),
    }
}

fn required<T>(v: Option<T>, flag: &str) -> CliResult<T> {
    v.ok_or_else(|| usage(format!("the following required argument was not provided: --{flag}")))
}

fn parse<T: std::str::FromStr<Err = Error>>(s: &str) -> CliResult<T> {
    s.parse().map_err(|e: Error| usage(e.to_string()))
}

fn parse_mask(s: &str) -> CliResult<Option<CutStrategy>> {
    if s.eq_ignore_ascii_case("off") {
        Ok(None)
    } else {
        parse(s).map(Some)
    }
}

fn parse_guard(g: Option<f64>) -> CliResult<Guard> {
    Guard::new(g.unwrap_or(crate::estimators::DEFAULT_GUARD)).map_err(|e| usage(e.to_string()))
}

fn event_kind(side: Option<f64>) -> CliResult<EventKind> {
    match side.unwrap_or(crate::events::DEFAULT_CUBE_SIDE) {
        l if l == 0.0 => Ok(EventKind::Point),
        l if l > 0.0 => Ok(EventKind::Cube(l)),
        l => Err(usage(format!("cube side must be non-negative, got {l}"))),
    }
}

fn read_event(scm: &Scm, path: &Path) -> CliResult<CtfEvent> {
    let spec: EventSpec = serde_json::from_str(&fs::read_to_string(path)?).map_err(Error::from)?;
    Ok(CtfEvent::from_spec(scm, &spec)?)
}

fn train_config(
    opts: &TrainOpts,
    head: HeadConfig,
    aggregator: AggregatorKind,
    mask: Option<CutStrategy>,
    seed: u64,
) -> CliResult<TrainConfig> {
    let d = TrainConfig::default();
    let p = ProposalConfig::default();
    let cfg = TrainConfig {
        epochs: opts.epochs.unwrap_or(d.epochs),
        dataset_size: opts.dataset_size.unwrap_or(d.dataset_size),
        batch_size: opts.batch_size.unwrap_or(d.batch_size),
        process: match &opts.process {
            Some(s) => parse::<Process>(s)?,
            None => d.process,
        },
        proposal: ProposalConfig {
            head,
            aggregator,
            hidden: opts.hidden.unwrap_or(p.hidden),
            layers: opts.layers.unwrap_or(p.layers),
            mask,
            pilot_samples: opts.pilot_samples.unwrap_or(p.pilot_samples),
            ..p
        },
        lr: opts.lr.unwrap_or(d.lr),
        weight_decay: opts.weight_decay.unwrap_or(d.weight_decay),
        val_events: opts.val_events.unwrap_or(d.val_events),
        val_samples: opts.val_samples.unwrap_or(d.val_samples),
        val_kind: event_kind(opts.cube_side)?,
        seed,
        ..d
    };
    cfg.validate().map_err(|e| usage(e.to_string()))?;
    Ok(cfg)
}

fn to_value<T: Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("serializable")
}

fn thread_pool(jobs: usize) -> CliResult<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| Failure::Runtime(Error::Config(e.to_string())))
}

fn print_json(v: &Value) {
    emit(&(serde_json::to_string_pretty(v).expect("serializable") + "\n"));
}

pub(super) fn boundary(ctx: &Context, a: BoundaryArgs) -> CliResult<()> {
    let scm = load_scm(&required(a.scm.clone(), "scm")?)?;
    let cut = match &a.cut {
        Some(s) => parse::<CutStrategy>(s)?,
        None => CutStrategy::EndoCut,
    };
    let vars: CtfVariableSet = match &a.event {
        Some(p) => read_event(&scm, p)?.variables,
        None => {
            let process = match &a.process {
                Some(s) => parse::<Process>(s)?,
                None => Process::bernoulli(3),
            };
            process.sample_state(&scm, &mut ChaCha8Rng::seed_from_u64(a.seed.unwrap_or(0)))?
        }
    };
    let names = scm.endo_vars();
    let boundaries = counterfactual_markov_boundary(&scm, &vars, cut)?;
    let groups: Vec<Value> = vars
        .groups
        .iter()
        .map(|g| {
            json!({
                "do": g.intervention.pairs().iter().map(|(v, x)| (names[*v].name.clone(), json!(x))).collect::<serde_json::Map<_, _>>(),
                "observe": g.observed.iter().map(|&v| names[v].name.clone()).collect::<Vec<_>>(),
            })
        })
        .collect();
    let per_exo: Vec<Value> = boundaries
        .iter()
        .map(|b| {
            json!({
                "exogenous": scm.exo_names()[b.exo_var],
                "per_submodel": b.per_submodel.iter()
                    .map(|s| s.iter().map(|&v| names[v].name.clone()).collect::<Vec<_>>())
                    .collect::<Vec<_>>(),
                "union": b.union.iter().map(|(g, v)| json!({"group": g, "variable": names[*v].name})).collect::<Vec<_>>(),
            })
        })
        .collect();
    let mut out = json!({
        "scm": scm.name(),
        "cut": cut,
        "variables": vars.display(&scm),
        "groups": groups,
        "boundaries": per_exo,
    });
    if let Some(rel) = &a.out {
        let mut m = ExperimentManifest::new(
            "boundary",
            to_value(&a),
            json!({ "cut": cut }),
            vec![a.seed.unwrap_or(0)],
            vec![ScmRef::of(&scm)],
        );
        out["manifest"] = json!(m.hash);
        m.write(ctx, rel, serde_json::to_string_pretty(&out).map_err(Error::from)?.as_bytes())?;
        m.finish(ctx, rel)?;
    }
    print_json(&out);
    Ok(())
}

pub(super) fn train(ctx: &Context, a: TrainArgs) -> CliResult<()> {
    let scm = load_scm(&required(a.scm.clone(), "scm")?)?;
    let head = parse::<HeadConfig>(a.head.as_deref().unwrap_or("gmm"))?;
    let aggregator = parse::<AggregatorKind>(a.aggregator.as_deref().unwrap_or("attention"))?;
    let mask = parse_mask(a.mask.as_deref().unwrap_or("endo"))?;
    let seed = a.seed.unwrap_or(0);
    let config = train_config(&a.train, head, aggregator, mask, seed)?;
    let out = a.out.clone().unwrap_or_else(|| PathBuf::from("ckpt.json"));
    let trace_path = a.trace.clone().unwrap_or_else(|| sibling(&out, "trace.csv"));
    // fail on bad paths before training
    ctx.output_path(&out)?;
    ctx.output_path(&trace_path)?;
    let mut m = ExperimentManifest::new("train", to_value(&a), to_value(&config), vec![seed], vec![ScmRef::of(&scm)]);

    let mut model = crate::proposal::ConditionalProposal::new(
        &scm,
        config.proposal.clone(),
        &mut ChaCha8Rng::seed_from_u64(config.seed),
    )?;
    let (trace, state) = train_with_state(&scm, &mut model, &config)?;
    let mut ck = Checkpoint::new(&scm, model);
    ck.train_config = Some(config);
    ck.state = Some(state);
    ck.trace = Some(trace.clone());
    ck.manifest = Some(m.hash.clone());
    let ck_path = m.write(ctx, &out, ck.to_json()?.as_bytes())?;
    let csv = csv_header(&m.hash) + &trace.to_csv();
    let trace_file = m.write(ctx, &trace_path, csv.as_bytes())?;
    let manifest_file = m.finish(ctx, &out)?;
    print_json(&json!({
        "checkpoint": ck_path,
        "trace": trace_file,
        "manifest": manifest_file,
        "initial_esp": trace.initial_esp,
        "final": trace.epochs.last(),
    }));
    Ok(())
}

fn load_checkpoint(path: &Path, scm_name: Option<&str>) -> CliResult<(Scm, Checkpoint)> {
    let mut ck = Checkpoint::from_json(&fs::read_to_string(path)?)?;
    let scm = load_scm(scm_name.unwrap_or(&ck.scm_name))?;
    ck.attach(&scm)?;
    Ok((scm, ck))
}

pub(super) fn estimate(ctx: &Context, a: EstimateArgs) -> CliResult<()> {
    let method = a.method.clone().unwrap_or_else(|| "exom".into());
    let (scm, ck) = match (&a.ckpt, method.as_str()) {
        (Some(p), _) => {
            let (s, c) = load_checkpoint(p, a.scm.as_deref())?;
            (s, Some(c))
        }
        (None, "exom") => return Err(usage("--method exom needs --ckpt")),
        (None, _) => (load_scm(&required(a.scm.clone(), "scm")?)?, None),
    };
    let event = read_event(&scm, &required(a.event.clone(), "event")?)?;
    let n = a.n.unwrap_or(1000);
    if n == 0 {
        return Err(usage("--n must be positive"));
    }
    let guard = parse_guard(a.guard)?;
    let seed = a.seed.unwrap_or(0);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sampler = a.sampler.clone().unwrap_or_else(|| "uniform".into());
    let report = match method.as_str() {
        "exom" => {
            let model = &ck.as_ref().expect("checked above").model;
            if sampler == "center" {
                estimate_is(model, &scm, &event, &event.center(), n, guard, &mut rng)?
            } else {
                estimate_mis(model, &scm, &event, &EventSampler::Uniform, n, guard, &mut rng)?
            }
        }
        "rs" => estimate_rs(&scm, &event, n, &mut rng)?,
        "ceis" => {
            let cfg = CeisConfig {
                guard,
                ..CeisConfig::with_budget(n, a.ceis_iterations.unwrap_or(4))
            };
            estimate_ceis(&scm, &event, &cfg, &mut rng)?
        }
        other => return Err(usage(format!("unknown method `{other}`"))),
    };
    let mut out = json!({
        "scm": scm.name(),
        "method": method,
        "event": event.to_spec(&scm),
        "report": report,
    });
    if let Some(rel) = &a.out {
        let resolved = json!({ "method": method, "n": n, "guard": guard, "sampler": sampler });
        let mut m = ExperimentManifest::new("estimate", to_value(&a), resolved, vec![seed], vec![ScmRef::of(&scm)]);
        out["manifest"] = json!(m.hash);
        m.write(ctx, rel, serde_json::to_string_pretty(&out).map_err(Error::from)?.as_bytes())?;
        m.finish(ctx, rel)?;
    }
    print_json(&out);
    Ok(())
}

pub(super) fn query(ctx: &Context, a: QueryArgs) -> CliResult<()> {
    let kind = parse::<QueryKind>(&required(a.kind.clone(), "kind")?)?;
    let method = a
        .method
        .clone()
        .unwrap_or_else(|| if a.ckpt.is_some() { "exom" } else { "rs" }.into());
    let (scm, ck) = match (&a.ckpt, method.as_str()) {
        (Some(p), _) => {
            let (s, c) = load_checkpoint(p, a.scm.as_deref())?;
            (s, Some(c))
        }
        (None, "exom") => return Err(usage("--method exom needs --ckpt")),
        (None, _) => (load_scm(&required(a.scm.clone(), "scm")?)?, None),
    };
    let model = if method == "exom" { ck.as_ref().map(|c| &c.model) } else { None };
    let n = a.n.unwrap_or(1000);
    let guard = parse_guard(a.guard)?;
    let seed = a.seed.unwrap_or(0);
    let est = query_value(&scm, model, kind, n, guard, &mut ChaCha8Rng::seed_from_u64(seed))?;
    let mut out = json!({ "scm": scm.name(), "estimate": est });
    if let Some(rel) = &a.out {
        let resolved = json!({ "kind": kind, "method": method, "n": n, "guard": guard });
        let mut m = ExperimentManifest::new("query", to_value(&a), resolved, vec![seed], vec![ScmRef::of(&scm)]);
        out["manifest"] = json!(m.hash);
        m.write(ctx, rel, serde_json::to_string_pretty(&out).map_err(Error::from)?.as_bytes())?;
        m.finish(ctx, rel)?;
    }
    print_json(&out);
    Ok(())
}

fn eval_config(
    opts: &TrainOpts,
    events: Option<usize>,
    n: Option<usize>,
    guard: Option<f64>,
    m: Option<f64>,
) -> CliResult<EvalConfig> {
    let d = EvalConfig::default();
    let cfg = EvalConfig {
        events: events.unwrap_or(d.events),
        samples: n.unwrap_or(d.samples),
        process: match &opts.process {
            Some(s) => parse::<Process>(s)?,
            None => d.process,
        },
        kind: event_kind(opts.cube_side)?,
        fr_threshold: m.unwrap_or(d.fr_threshold),
        guard: parse_guard(guard)?,
        ..d
    };
    if cfg.events == 0 || cfg.samples == 0 {
        return Err(usage("--events and --n must be positive"));
    }
    Ok(cfg)
}

/// One metric of one run, in long format.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct Row {
    scm: String,
    method: String,
    seed: u64,
    metric: &'static str,
    value: f64,
}

/// Trains (when needed) and scores one method on one seed.
fn run_method(scm: &Scm, method: Method, train: Option<&TrainConfig>, eval: &EvalConfig, seed: u64) -> Result<(f64, f64)> {
    let model = match train {
        Some(cfg) => Some(crate::train::train_exom(scm, cfg)?.0),
        None => None,
    };
    let set = eval_events(scm, eval, seed)?;
    let s = score(method, model.as_ref(), scm, &set, eval, seed)?;
    Ok((s.esp, s.fr))
}

fn seeds(first: Option<u64>, count: Option<usize>) -> CliResult<Vec<u64>> {
    let count = count.unwrap_or(5);
    if count == 0 {
        return Err(usage("--seeds must be positive"));
    }
    let first = first.unwrap_or(0);
    Ok((0..count as u64).map(|i| first + i).collect())
}

pub(super) fn compare(ctx: &Context, a: CompareArgs) -> CliResult<()> {
    let scm_names = a.scms.clone().unwrap_or_else(|| vec!["simpson-nlin".into()]);
    let scms: Vec<Scm> = scm_names.iter().map(|s| load_scm(s)).collect::<CliResult<_>>()?;
    let methods: Vec<Method> = match &a.methods {
        Some(ms) => ms.iter().map(|s| parse::<Method>(s)).collect::<CliResult<_>>()?,
        None => Method::ALL.to_vec(),
    };
    let seeds = seeds(a.first_seed, a.seeds)?;
    let aggregator = parse::<AggregatorKind>(a.aggregator.as_deref().unwrap_or("attention"))?;
    let mask = parse_mask(a.mask.as_deref().unwrap_or("endo"))?;
    let eval = eval_config(&a.train, a.events, a.n, a.guard, a.fr_threshold)?;
    let mut train_cfgs = Vec::new();
    for &method in &methods {
        if let Some(head) = method.head() {
            train_cfgs.push((method, train_config(&a.train, head, aggregator, mask, 0)?));
        }
    }
    let out = a.out.clone().unwrap_or_else(|| PathBuf::from("compare.csv"));
    let summary_path = a.summary.clone().unwrap_or_else(|| sibling(&out, "summary.csv"));
    ctx.output_path(&out)?;
    ctx.output_path(&summary_path)?;
    let resolved = json!({
        "eval": eval,
        "train": train_cfgs.iter().map(|(m, c)| (m.name().to_string(), to_value(c))).collect::<serde_json::Map<_, _>>(),
    });
    let mut manifest = ExperimentManifest::new("compare", to_value(&a), resolved, seeds.clone(), scms.iter().map(ScmRef::of).collect());

    let mut tasks = Vec::new();
    for (si, _) in scms.iter().enumerate() {
        for &seed in &seeds {
            for &method in &methods {
                tasks.push((si, seed, method));
            }
        }
    }
    let pool = thread_pool(ctx.jobs)?;
    let results: Vec<Result<(f64, f64)>> = pool.install(|| {
        tasks
            .par_iter()
            .map(|&(si, seed, method)| {
                let cfg = train_cfgs.iter().find(|(m, _)| *m == method).map(|(_, c)| TrainConfig {
                    seed,
                    ..c.clone()
                });
                run_method(&scms[si], method, cfg.as_ref(), &eval, seed)
            })
            .collect()
    });
    let mut rows = Vec::new();
    for (&(si, seed, method), r) in tasks.iter().zip(results) {
        let (esp, fr) = r?;
        for (metric, value) in [("esp", esp), ("fr", fr)] {
            rows.push(Row {
                scm: scms[si].name().into(),
                method: method.name().into(),
                seed,
                metric,
                value,
            });
        }
    }
    let long = long_csv(&manifest.hash, &rows);
    let summary = summary_csv(&manifest.hash, &rows)?;
    manifest.write(ctx, &out, long.as_bytes())?;
    manifest.write(ctx, &summary_path, summary.as_bytes())?;
    manifest.finish(ctx, &out)?;
    emit(&summary);
    Ok(())
}

fn long_csv(hash: &str, rows: &[Row]) -> String {
    let mut s = csv_header(hash) + "scm,method,seed,metric,value\n";
    for r in rows {
        writeln!(s, "{},{},{},{},{}", r.scm, r.method, r.seed, r.metric, r.value).expect("writing to a String");
    }
    s
}

/// Mean and 95% CI half-width over seeds per `(scm, method, metric)`.
fn summary_csv(hash: &str, rows: &[Row]) -> CliResult<String> {
    let mut keys: Vec<(&str, &str, &str)> = Vec::new();
    for r in rows {
        let k = (r.scm.as_str(), r.method.as_str(), r.metric);
        if !keys.contains(&k) {
            keys.push(k);
        }
    }
    let mut s = csv_header(hash) + "scm,method,metric,mean,ci95,seeds\n";
    for (scm, method, metric) in keys {
        let xs: Vec<f64> = rows
            .iter()
            .filter(|r| r.scm == scm && r.method == method && r.metric == metric)
            .map(|r| r.value)
            .collect();
        let (mean, half) = mean_ci95(&xs)?;
        writeln!(s, "{scm},{method},{metric},{mean},{half},{}", xs.len()).expect("writing to a String");
    }
    Ok(s)
}

pub(super) fn ablate(ctx: &Context, a: AblateArgs) -> CliResult<()> {
    let scm = load_scm(&required(a.scm.clone(), "scm")?)?;
    let head = parse::<HeadConfig>(a.head.as_deref().unwrap_or("gmm"))?;
    let aggregators: Vec<String> = a
        .aggregators
        .clone()
        .unwrap_or_else(|| vec!["attention".into(), "summation".into(), "weighted-summation".into()]);
    let mut masks: Vec<String> = a
        .masks
        .clone()
        .unwrap_or_else(|| vec!["endo".into(), "all".into(), "no".into()]);
    masks.retain(|m| m != "off");
    masks.insert(0, "off".into());
    let seeds = seeds(a.first_seed, a.seeds)?;
    let eval = eval_config(&a.train, a.events, a.n, a.guard, a.fr_threshold)?;
    let mut configs = Vec::new();
    for ag in &aggregators {
        for mk in &masks {
            let cfg = train_config(&a.train, head, parse(ag)?, parse_mask(mk)?, 0)?;
            configs.push((ag.clone(), mk.clone(), cfg));
        }
    }
    let out = a.out.clone().unwrap_or_else(|| PathBuf::from("ablate.csv"));
    let imp_path = a.improvement.clone().unwrap_or_else(|| sibling(&out, "improvement.csv"));
    ctx.output_path(&out)?;
    ctx.output_path(&imp_path)?;
    let resolved = json!({
        "eval": eval,
        "train": configs.iter().map(|(ag, mk, c)| json!({"aggregator": ag, "mask": mk, "config": c})).collect::<Vec<_>>(),
    });
    let mut manifest = ExperimentManifest::new("ablate", to_value(&a), resolved, seeds.clone(), vec![ScmRef::of(&scm)]);
    let method = if head == HeadConfig::GMM { Method::ExomGmm } else { Method::ExomMaf };
    let tasks: Vec<(usize, u64)> = (0..configs.len()).flat_map(|c| seeds.iter().map(move |&s| (c, s))).collect();
    let pool = thread_pool(ctx.jobs)?;
    let results: Vec<Result<(f64, f64)>> = pool.install(|| {
        tasks
            .par_iter()
            .map(|&(c, seed)| {
                let cfg = TrainConfig {
                    seed,
                    ..configs[c].2.clone()
                };
                run_method(&scm, method, Some(&cfg), &eval, seed)
            })
            .collect()
    });
    let mut scores = Vec::new();
    for (&(c, seed), r) in tasks.iter().zip(results) {
        scores.push((c, seed, r?));
    }
    let mut long = csv_header(&manifest.hash) + "scm,aggregator,mask,seed,metric,value\n";
    for &(c, seed, (esp, fr)) in &scores {
        let (ag, mk, _) = &configs[c];
        writeln!(long, "{},{ag},{mk},{seed},esp,{esp}", scm.name()).expect("writing to a String");
        writeln!(long, "{},{ag},{mk},{seed},fr,{fr}", scm.name()).expect("writing to a String");
    }
    let mut imp = csv_header(&manifest.hash) + "scm,aggregator,mask,seed,metric,value\n";
    let mut summary = String::from("aggregator,mask,esp_gain_mean,esp_gain_ci95,fr_drop_mean,fr_drop_ci95\n");
    for (c, (ag, mk, _)) in configs.iter().enumerate() {
        if mk == "off" {
            continue;
        }
        let base = configs.iter().position(|(a2, m2, _)| a2 == ag && m2 == "off").expect("off is always swept");
        let (mut gains, mut drops) = (Vec::new(), Vec::new());
        for &seed in &seeds {
            let find = |ci: usize| scores.iter().find(|s| s.0 == ci && s.1 == seed).expect("scored").2;
            let ((esp, fr), (esp0, fr0)) = (find(c), find(base));
            gains.push(esp - esp0);
            drops.push(fr0 - fr);
            writeln!(imp, "{},{ag},{mk},{seed},esp_gain,{}", scm.name(), esp - esp0).expect("writing to a String");
            writeln!(imp, "{},{ag},{mk},{seed},fr_drop,{}", scm.name(), fr0 - fr).expect("writing to a String");
        }
        let (gm, gh) = mean_ci95(&gains)?;
        let (dm, dh) = mean_ci95(&drops)?;
        writeln!(summary, "{ag},{mk},{gm},{gh},{dm},{dh}").expect("writing to a String");
    }
    manifest.write(ctx, &out, long.as_bytes())?;
    manifest.write(ctx, &imp_path, imp.as_bytes())?;
    manifest.finish(ctx, &out)?;
    emit(&summary);
    Ok(())
}

pub(super) fn verify(ctx: &Context, a: VerifyArgs) -> CliResult<()> {
    let text = fs::read_to_string(&a.manifest)?;
    let m: ExperimentManifest = serde_json::from_str(&text).map_err(Error::from)?;
    let dir = a.manifest.parent().unwrap_or(Path::new("."));
    let mut problems = Vec::new();
    if m.compute_hash() != m.hash {
        problems.push("manifest hash does not match its contents".to_string());
    }
    let mut checks = Vec::new();
    for o in &m.outputs {
        let (ok, reason) = match fs::read(dir.join(&o.path)) {
            Err(e) => (false, format!("unreadable: {e}")),
            Ok(bytes) if sha256_hex(&bytes) != o.sha256 => (false, "sha256 differs".to_string()),
            Ok(bytes) if !String::from_utf8_lossy(&bytes).contains(&m.hash) => {
                (false, "manifest hash not embedded".to_string())
            }
            Ok(_) => (true, String::new()),
        };
        if !ok {
            problems.push(format!("{}: {reason}", o.path.display()));
        }
        checks.push(json!({ "path": o.path, "ok": ok }));
    }
    let mut rerun = Value::Null;
    if a.rerun && problems.is_empty() {
        let rerun_ctx = Context {
            out_dir: ctx.out_dir.join("rerun").join(&m.hash[..16]),
            jobs: ctx.jobs,
        };
        quietly(|| dispatch(&rerun_ctx, &m.command, m.args.clone()))?;
        let again: ExperimentManifest = {
            let primary = m.outputs.first().map(|o| o.path.clone()).unwrap_or_default();
            let p = rerun_ctx.out_dir.join(manifest_name(&primary));
            serde_json::from_str(&fs::read_to_string(p)?).map_err(Error::from)?
        };
        let identical = again.outputs == m.outputs && again.hash == m.hash;
        if !identical {
            problems.push("re-run produced different outputs".into());
        }
        rerun = json!({ "dir": rerun_ctx.out_dir, "identical": identical });
    }
    print_json(&json!({ "manifest": m.hash, "ok": problems.is_empty(), "outputs": checks, "rerun": rerun }));
    if problems.is_empty() {
        Ok(())
    } else {
        Err(Failure::Runtime(Error::Verification(problems.join("; "))))
    }
}

fn dispatch(ctx: &Context, command: &str, args: Value) -> CliResult<()> {
    fn de<T: serde::de::DeserializeOwned>(v: Value) -> CliResult<T> {
        serde_json::from_value(v).map_err(|e| Failure::Runtime(e.into()))
    }
    match command {
        "boundary" => boundary(ctx, de(args)?),
        "train" => train(ctx, de(args)?),
        "estimate" => estimate(ctx, de(args)?),
        "compare" => compare(ctx, de(args)?),
        "query" => query(ctx, de(args)?),
        "ablate" => ablate(ctx, de(args)?),
        other => Err(Failure::Runtime(Error::Verification(format!("cannot re-run `{other}`")))),
    }
}
