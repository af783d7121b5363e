//! Acceptance run: one PASS/FAIL line per criterion.
//!
//! `cargo test --release --test acceptance` runs everything; pass criterion
//! ids (`c1 c4 ...`) after `--` to run a subset. The process exits non-zero
//! if any selected criterion fails.

mod common;

use std::collections::HashMap;
use std::time::Instant;

use exom::compare::{eval_events, score, EvalConfig, Method};
use exom::estimators::{
    estimate_density, estimate_is, estimate_mis, estimate_rs, query_value, EventSampler, Guard,
};
use exom::events::{event_from_state, CtfEvent, CtfGroup, CtfVariableSet, EventKind, Process, QueryKind};
use exom::graphs::CutStrategy;
use exom::nn::{Activation, Graph, MaskableMlp, ParamSet, Tensor};
use exom::proposal::{AggregatorKind, ConditionalProposal, HeadConfig, ProposalConfig};
use exom::scm::{zoo, Intervention, Scm, ScmDescription};
use exom::train::{mask_gradient_violations, objective, train_exom, Batch, TrainConfig, TrainTrace};
use exom::Error;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::{check_zoo_boundaries, d_separated_moral, enumerate, exogenous_domain_size, ks_two_sample, random_dag};

const SEEDS: u64 = 5;
/// Training length for the SIMPSON-NLIN and masking runs.
const EPOCHS: usize = 60;
const DATASET: usize = 4096;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

struct Outcome {
    pass: bool,
    detail: String,
}

impl Outcome {
    fn new(pass: bool, detail: impl Into<String>) -> Self {
        Self {
            pass,
            detail: detail.into(),
        }
    }
}

/// Trained SIMPSON-NLIN models shared between criteria 2 and 3.
#[derive(Default)]
struct Shared {
    simpson: HashMap<(String, u64), (ConditionalProposal, TrainTrace)>,
}

impl Shared {
    fn simpson(&mut self, scm: &Scm, head: HeadConfig, seed: u64) -> &(ConditionalProposal, TrainTrace) {
        self.simpson.entry((head.to_string(), seed)).or_insert_with(|| {
            let cfg = TrainConfig {
                epochs: EPOCHS,
                dataset_size: DATASET,
                process: Process::bernoulli(3),
                val_events: 256,
                val_samples: 256,
                val_kind: EventKind::Cube(0.02),
                seed,
                proposal: ProposalConfig {
                    head,
                    ..ProposalConfig::default()
                },
                ..TrainConfig::default()
            };
            train_exom(scm, &cfg).expect("training SIMPSON-NLIN")
        })
    }
}

fn description(json: &str) -> Scm {
    Scm::from_description(&ScmDescription::from_json(json).unwrap()).unwrap()
}

fn quick_config(process: Process, seed: u64, epochs: usize, val_kind: EventKind) -> TrainConfig {
    TrainConfig {
        epochs,
        dataset_size: 2048,
        process,
        val_events: 16,
        val_samples: 64,
        val_kind,
        seed,
        ..TrainConfig::default()
    }
}

/// Enumeration oracle vs guarded IS under a trained GMM on point events.
fn c1(_: &mut Shared) -> Outcome {
    let mut details = Vec::new();
    let mut pass = true;
    for (i, name) in ["FAIRNESS", "FAIRNESS-XY"].into_iter().enumerate() {
        let scm = zoo::load(name).unwrap();
        let size = exogenous_domain_size(&scm).unwrap();
        assert!(size <= 1 << 16);
        let (model, _) = train_exom(&scm, &quick_config(Process::bernoulli(3), 100 + i as u64, 20, EventKind::Point)).unwrap();
        let mut r = rng(200 + i as u64);
        let mut within = 0;
        for _ in 0..20 {
            let state = Process::bernoulli(3).sample_state(&scm, &mut r).unwrap();
            let (event, u) = event_from_state(&state, &scm, EventKind::Point, &mut r).unwrap();
            let y = state.evaluate(&scm, &u);
            let truth = enumerate(&scm, &event);
            let est = estimate_is(&model, &scm, &event, &y, 1000, Guard::new(0.05).unwrap(), &mut r).unwrap();
            if (est.p_hat - truth).abs() <= 4.0 * est.sigma {
                within += 1;
            }
        }
        pass &= within >= 19;
        details.push(format!("{name} |Ω_U|={size} {within}/20 within 4σ̂"));
    }
    Outcome::new(pass, details.join(", "))
}

/// Objective falls and validation ESP rises at least 5x during training.
fn c2(shared: &mut Shared) -> Outcome {
    let scm = zoo::load("SIMPSON-NLIN").unwrap();
    let (_, trace) = shared.simpson(&scm, HeadConfig::GMM, 0);
    let obj: Vec<f64> = trace.epochs.iter().map(|e| e.objective).collect();
    let head = obj[..5].iter().sum::<f64>() / 5.0;
    let tail = obj[obj.len() - 5..].iter().sum::<f64>() / 5.0;
    let last = trace.epochs.last().unwrap();
    let decreases = tail < head && last.objective < obj[0];
    let grows = last.val_esp > 0.0 && last.val_esp >= 5.0 * trace.initial_esp;
    Outcome::new(
        decreases && grows,
        format!(
            "objective {:.3} -> {:.3} (first/last 5-epoch means {head:.3} -> {tail:.3}); val ESP {:.5} -> {:.5}",
            obj[0], last.objective, trace.initial_esp, last.val_esp
        ),
    )
}

/// ESP ordering against RS and CEIS on shared evaluation events.
fn c3(shared: &mut Shared) -> Outcome {
    let scm = zoo::load("SIMPSON-NLIN").unwrap();
    let eval = EvalConfig::default();
    let (mut maf_ge_gmm, mut gmm_gt_rs, mut gmm_gt_ceis) = (0, 0, 0);
    let mut rows = Vec::new();
    for seed in 0..SEEDS {
        let set = eval_events(&scm, &eval, seed).unwrap();
        let gmm = score(Method::ExomGmm, Some(&shared.simpson(&scm, HeadConfig::GMM, seed).0), &scm, &set, &eval, seed)
            .unwrap()
            .esp;
        let maf = score(Method::ExomMaf, Some(&shared.simpson(&scm, HeadConfig::MAF, seed).0), &scm, &set, &eval, seed)
            .unwrap()
            .esp;
        let rs = score(Method::Rs, None, &scm, &set, &eval, seed).unwrap().esp;
        let ceis = score(Method::Ceis, None, &scm, &set, &eval, seed).unwrap().esp;
        maf_ge_gmm += usize::from(maf >= gmm);
        gmm_gt_rs += usize::from(gmm > rs);
        gmm_gt_ceis += usize::from(gmm > ceis);
        rows.push(format!("s{seed} gmm={gmm:.4} maf={maf:.4} rs={rs:.4} ceis={ceis:.4}"));
    }
    let pass = SEEDS as usize - maf_ge_gmm <= 2 && gmm_gt_rs >= 4 && gmm_gt_ceis >= 4;
    Outcome::new(
        pass,
        format!(
            "MAF>=GMM {maf_ge_gmm}/5, GMM>RS {gmm_gt_rs}/5, GMM>CEIS {gmm_gt_ceis}/5 [{}]",
            rows.join("; ")
        ),
    )
}

/// Bayes-ball against moralization on random DAGs, and zoo boundaries
/// against exhaustive search.
fn c4(_: &mut Shared) -> Outcome {
    let mut r = rng(4);
    let mut mismatches = 0;
    let triples = 10_000;
    for _ in 0..triples {
        let n = r.random_range(2..=8);
        let p = r.random_range(0.15..0.6);
        let g = random_dag(&mut r, n, p);
        let (a, b, z) = loop {
            let roles: Vec<u8> = (0..n).map(|_| r.random_range(0..4)).collect();
            let pick = |k: u8| -> Vec<usize> { (0..n).filter(|&i| roles[i] == k).collect() };
            let (a, b, z) = (pick(0), pick(1), pick(2));
            if !a.is_empty() && !b.is_empty() {
                break (a, b, z);
            }
        };
        if g.d_separated(&a, &b, &z) != d_separated_moral(&g, &a, &b, &z) {
            mismatches += 1;
        }
    }
    let zoo_result = check_zoo_boundaries(&mut rng(44));
    let pass = mismatches == 0 && zoo_result.is_ok();
    let zoo_detail = match zoo_result {
        Ok(k) => format!("{k} zoo boundaries minimal and united"),
        Err(e) => format!("zoo boundary error: {e}"),
    };
    Outcome::new(pass, format!("{mismatches} mismatches in {triples} triples; {zoo_detail}"))
}

/// Masked vs unmasked final ESP on a Markovian chain.
fn c5(_: &mut Shared) -> Outcome {
    let scm = zoo::load("CHAIN-LIN-5").unwrap();
    let eval = EvalConfig::default();
    let mut wins = 0;
    let mut rows = Vec::new();
    for seed in 0..SEEDS {
        let set = eval_events(&scm, &eval, seed).unwrap();
        let mut esp = [0.0; 2];
        for (slot, mask) in [Some(CutStrategy::EndoCut), None].into_iter().enumerate() {
            let cfg = TrainConfig {
                epochs: EPOCHS / 2,
                dataset_size: DATASET,
                val_events: 16,
                val_samples: 32,
                seed,
                proposal: ProposalConfig {
                    hidden: 64,
                    mask,
                    ..ProposalConfig::default()
                },
                ..TrainConfig::default()
            };
            let (model, _) = train_exom(&scm, &cfg).unwrap();
            esp[slot] = score(Method::ExomGmm, Some(&model), &scm, &set, &eval, seed).unwrap().esp;
        }
        wins += usize::from(esp[0] >= esp[1]);
        rows.push(format!("s{seed} masked={:.4} unmasked={:.4}", esp[0], esp[1]));
    }
    Outcome::new(wins >= 3, format!("CHAIN-LIN-5 masked>=unmasked {wins}/5 [{}]", rows.join("; ")))
}

fn jitter(ps: &mut ParamSet, scale: f64, r: &mut ChaCha8Rng) {
    for id in 0..ps.len() {
        for x in ps.value_mut(id).data.iter_mut() {
            *x += r.random_range(-scale..scale);
        }
    }
}

fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-3)
}

/// Central differences of `loss` in up to `k` random parameter scalars
/// against the tape gradient `grads`; returns the worst relative error.
fn fd_check(
    ps: &mut ParamSet,
    grads: &[Tensor],
    loss: &mut dyn FnMut(&ParamSet) -> f64,
    k: usize,
    r: &mut ChaCha8Rng,
) -> f64 {
    const H: f64 = 1e-5;
    let mut worst = 0.0f64;
    for _ in 0..k {
        let id = r.random_range(0..ps.len());
        let i = r.random_range(0..ps.value(id).len());
        let x0 = ps.value(id).data[i];
        ps.value_mut(id).data[i] = x0 + H;
        let up = loss(ps);
        ps.value_mut(id).data[i] = x0 - H;
        let down = loss(ps);
        ps.value_mut(id).data[i] = x0;
        worst = worst.max(rel_err(grads[id].data[i], (up - down) / (2.0 * H)));
    }
    worst
}

fn mlp_loss(mlp: &MaskableMlp, ps: &ParamSet, x: &Tensor, mask: Option<&Tensor>, w: &Tensor) -> (Graph, exom::nn::Var) {
    let mut g = Graph::new();
    let input = g.input(x.clone());
    let out = mlp.forward(&mut g, ps, input, mask).unwrap();
    let weighted = g.mul_const(out, w.clone()).unwrap();
    let loss = g.sum_all(weighted);
    (g, loss)
}

/// Tape gradients against finite differences, and exact zeros behind masks.
fn c6(_: &mut Shared) -> Outcome {
    let mut r = rng(6);
    let mut worst = 0.0f64;
    let mut counts = [0usize; 3];
    let scms: Vec<Scm> = ["CHAIN-LIN-3", "FORK-NLIN", "TRIANGLE-NLIN", "SIMPSON-NLIN", "FAIRNESS"]
        .iter()
        .map(|n| zoo::load(n).unwrap())
        .collect();
    let aggregators = [
        AggregatorKind::Attention,
        AggregatorKind::Summation,
        AggregatorKind::WeightedSummation,
        AggregatorKind::Concatenation { max_k: 3 },
    ];
    for cfg_i in 0..100 {
        match cfg_i % 3 {
            0 => {
                counts[0] += 1;
                let depth = r.random_range(1..=3);
                let mut dims = vec![r.random_range(1..6)];
                dims.extend((0..depth).map(|_| r.random_range(1..7)));
                let acts = [Activation::Tanh, Activation::Identity];
                let mut ps = ParamSet::new();
                let mlp = MaskableMlp::new(
                    &mut ps,
                    "m",
                    &dims,
                    acts[r.random_range(0..2)],
                    acts[r.random_range(0..2)],
                    false,
                    &mut r,
                );
                let rows = r.random_range(1..5);
                let rand_t = |r: &mut ChaCha8Rng, c: usize| {
                    Tensor::from_vec(rows, c, (0..rows * c).map(|_| r.random_range(-1.5..1.5)).collect()).unwrap()
                };
                let x = rand_t(&mut r, dims[0]);
                let w = rand_t(&mut r, *dims.last().unwrap());
                let mask = r.random_bool(0.5).then(|| {
                    Tensor::from_vec(rows, dims[0], (0..rows * dims[0]).map(|_| f64::from(r.random_bool(0.6) as u8)).collect())
                        .unwrap()
                });
                let (mut g, loss) = mlp_loss(&mlp, &ps, &x, mask.as_ref(), &w);
                g.backward(loss).unwrap();
                ps.zero_grad();
                g.accumulate_param_grads(&mut ps);
                let grads = ps.grads().to_vec();
                let mut f = |p: &ParamSet| {
                    let (g, l) = mlp_loss(&mlp, p, &x, mask.as_ref(), &w);
                    g.value(l).item()
                };
                worst = worst.max(fd_check(&mut ps, &grads, &mut f, 6, &mut r));
            }
            k => {
                counts[k] += 1;
                let scm = &scms[r.random_range(0..scms.len())];
                let head = if k == 1 {
                    HeadConfig::Gmm {
                        components: r.random_range(1..5),
                    }
                } else {
                    HeadConfig::Maf {
                        transforms: r.random_range(1..4),
                        hidden: r.random_range(2..8),
                        context: r.random_range(1..5),
                    }
                };
                let cfg = ProposalConfig {
                    head,
                    aggregator: aggregators[r.random_range(0..aggregators.len())],
                    hidden: r.random_range(2..9),
                    layers: r.random_range(1..3),
                    mask: [Some(CutStrategy::EndoCut), Some(CutStrategy::AllCut), None][r.random_range(0..3)],
                    mask_gmm_scales: r.random_bool(0.5),
                    pilot_samples: 256,
                };
                let mut model = ConditionalProposal::new(scm, cfg, &mut r).unwrap();
                jitter(&mut model.params, 0.3, &mut r);
                let batch = Batch::sample(scm, &Process::bernoulli(r.random_range(1..4)), r.random_range(1..5), &mut r).unwrap();
                let mut obj = objective(&model, &batch, false).unwrap();
                obj.graph.backward(obj.loss).unwrap();
                model.params.zero_grad();
                obj.graph.accumulate_param_grads(&mut model.params);
                let grads = model.params.grads().to_vec();
                let mut ps = model.params.clone();
                let mut f = |p: &ParamSet| {
                    std::mem::swap(&mut model.params, &mut p.clone());
                    let o = objective(&model, &batch, false).unwrap();
                    o.graph.value(o.loss).item()
                };
                worst = worst.max(fd_check(&mut ps, &grads, &mut f, 6, &mut r));
            }
        }
    }

    // masks: gradients of each θ_j w.r.t. out-of-boundary conditioning slots
    let mut violations = 0;
    let mut masked_slots = 0;
    let names = zoo::names();
    for _ in 0..100 {
        let scm = zoo::load(names[r.random_range(0..names.len())]).unwrap();
        let cfg = ProposalConfig {
            head: if r.random_bool(0.5) { HeadConfig::GMM } else { HeadConfig::MAF },
            aggregator: aggregators[r.random_range(0..aggregators.len())],
            hidden: 8,
            mask: Some([CutStrategy::EndoCut, CutStrategy::AllCut, CutStrategy::NoCut][r.random_range(0..3)]),
            pilot_samples: 128,
            ..ProposalConfig::default()
        };
        let mut model = ConditionalProposal::new(&scm, cfg, &mut r).unwrap();
        jitter(&mut model.params, 0.3, &mut r);
        let batch = Batch::sample(&scm, &Process::bernoulli(r.random_range(1..4)), 3, &mut r).unwrap();
        violations += mask_gradient_violations(&model, &batch).unwrap();
        let cond = model.conditioning(&batch.items()).unwrap();
        let masks = cond.masks.clone().unwrap();
        for (j, mask) in masks.iter().enumerate() {
            let mut g = Graph::new();
            let c = g.input_with_grad(cond.c.clone());
            let theta = model.theta_graph(&mut g, c, &cond).unwrap();
            let s = g.sum_all(theta.per_exo[j]);
            g.backward(s).unwrap();
            let grad = g.grad(c).unwrap();
            for (x, m) in grad.data.iter().zip(&mask.data) {
                if *m == 0.0 {
                    masked_slots += 1;
                    violations += usize::from(*x != 0.0);
                }
            }
        }
    }
    let pass = worst <= 1e-5 && violations == 0 && masked_slots > 0;
    Outcome::new(
        pass,
        format!(
            "worst relative FD error {worst:.2e} over {} MLP / {} GMM / {} MAF configs; {violations} nonzero of {masked_slots} masked-slot gradients",
            counts[0], counts[1], counts[2]
        ),
    )
}

fn chain_event(scm: &Scm, seed: u64, side: f64) -> (CtfEvent, Vec<f64>) {
    let mut r = rng(seed);
    let state = Process::bernoulli(2).sample_state(scm, &mut r).unwrap();
    let (event, u) = event_from_state(&state, scm, EventKind::Cube(side), &mut r).unwrap();
    let y = state.evaluate(scm, &u);
    (event, y)
}

/// Guard and estimator identities.
fn c7(_: &mut Shared) -> Outcome {
    let scm = zoo::load("CHAIN-LIN-3").unwrap();
    let cfg = ProposalConfig {
        hidden: 16,
        pilot_samples: 512,
        ..ProposalConfig::default()
    };
    let mut model = ConditionalProposal::new(&scm, cfg, &mut rng(70)).unwrap();
    jitter(&mut model.params, 0.2, &mut rng(71));

    // ε = 1 is rejection sampling on the same stream
    let mut identical = 0;
    for seed in 0..50 {
        let (event, y) = chain_event(&scm, 700 + seed, 1.0);
        let a = estimate_is(&model, &scm, &event, &y, 500, Guard::new(1.0).unwrap(), &mut rng(seed)).unwrap();
        let b = estimate_rs(&scm, &event, 500, &mut rng(seed)).unwrap();
        let same_w = a.log_weights.iter().zip(&b.log_weights).all(|(x, y)| x.to_bits() == y.to_bits());
        if same_w && a.p_hat.to_bits() == b.p_hat.to_bits() && a.sigma.to_bits() == b.sigma.to_bits() {
            identical += 1;
        }
    }

    // MIS with a point sampler has the law of IS at that point
    let (event, y) = chain_event(&scm, 77, 1.0);
    let guard = Guard::default();
    let is: Vec<f64> = (0..200)
        .map(|s| estimate_is(&model, &scm, &event, &y, 200, guard, &mut rng(10_000 + s)).unwrap().p_hat)
        .collect();
    let mis: Vec<f64> = (0..200)
        .map(|s| {
            estimate_mis(&model, &scm, &event, &EventSampler::Fixed(y.clone()), 200, guard, &mut rng(20_000 + s))
                .unwrap()
                .p_hat
        })
        .collect();
    let (d, p) = ks_two_sample(&is, &mis);

    // weight cap over 10^6 guarded draws
    let (wide, yw) = chain_event(&scm, 78, 3.0);
    let big = estimate_is(&model, &scm, &wide, &yw, 1_000_000, guard, &mut rng(79)).unwrap();
    let max_lw = big.log_weights.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let cap = -guard.eps.ln();

    let pass = identical == 50 && p > 0.01 && max_lw <= cap;
    Outcome::new(
        pass,
        format!(
            "ε=1 bit-identical to RS {identical}/50; KS D={d:.3} p={p:.3} (IS mean {:.4}, MIS mean {:.4}); max log w {max_lw:.4} <= {cap:.4} over 10^6 draws",
            is.iter().sum::<f64>() / 200.0,
            mis.iter().sum::<f64>() / 200.0
        ),
    )
}

/// Density of a standard normal outcome at its mode.
fn c8(_: &mut Shared) -> Outcome {
    let scm = description(
        r#"{"name":"GAUSS-1D","exogenous":[{"name":"U","kind":"standard_normal"}],
        "endogenous":[{"name":"Y","domain":"continuous","expr":"U"}]}"#,
    );
    let mut cfg = quick_config(Process::bernoulli(1), 8, 20, EventKind::Cube(0.02));
    cfg.proposal.hidden = 32;
    let (model, _) = train_exom(&scm, &cfg).unwrap();
    let vars = CtfVariableSet::new(vec![CtfGroup::new(vec![0], Intervention::empty())]);
    let est = estimate_density(Some(&model), &scm, &vars, &[0.0], 0.02, 10_000, Guard::default(), &mut rng(80)).unwrap();
    let truth = 1.0 / (2.0 * std::f64::consts::PI).sqrt();
    let rel = (est.density - truth).abs() / truth;
    Outcome::new(
        rel <= 0.10,
        format!("density {:.4} ± {:.4} vs {truth:.4} (relative error {:.2}%)", est.density, est.sigma, 100.0 * rel),
    )
}

/// Effect queries by MIS against large-sample RS, and the near-zero
/// denominator flag.
fn c9(_: &mut Shared) -> Outcome {
    let scm = zoo::load("FAIRNESS").unwrap();
    let mut within = 0;
    let mut total = 0;
    let mut rows = Vec::new();
    for (i, q) in [QueryKind::Ate, QueryKind::Ett, QueryKind::Nde, QueryKind::Ctfde].into_iter().enumerate() {
        let (model, _) = train_exom(&scm, &quick_config(Process::Query { query: q }, 90 + i as u64, 15, EventKind::Point)).unwrap();
        let truth = query_value(&scm, None, q, 1_000_000, Guard::default(), &mut rng(900 + i as u64)).unwrap();
        let mut worst = 0.0f64;
        for seed in 0..SEEDS {
            let est = query_value(&scm, Some(&model), q, 10_000, Guard::default(), &mut rng(seed)).unwrap();
            let tol = 3.0 * (est.sigma.powi(2) + truth.sigma.powi(2)).sqrt();
            let z = (est.value - truth.value).abs() / (tol / 3.0);
            worst = worst.max(z);
            total += 1;
            within += usize::from((est.value - truth.value).abs() <= tol);
        }
        rows.push(format!("{q} truth {:.4} worst |z| {worst:.2}", truth.value));
    }

    let rare = description(
        r#"{"name":"RARE","exogenous":[{"name":"UX","kind":"bernoulli","p":0.0001},{"name":"UY","kind":"bernoulli","p":0.5}],
        "endogenous":[{"name":"X","domain":{"discrete":2},"expr":"UX"},{"name":"Y","domain":{"discrete":2},"expr":"ind(X + UY - 0.5)"}],
        "roles":{"treatment":"X","outcome":"Y","mediator":null}}"#,
    );
    let rare_model = ConditionalProposal::new(
        &rare,
        ProposalConfig {
            hidden: 8,
            pilot_samples: 128,
            ..ProposalConfig::default()
        },
        &mut rng(91),
    )
    .unwrap();
    // RS almost never sees X = 1, so the denominator is flagged; the learned
    // proposal finds it and the ratio stays usable (ETT is exactly 0.5 here)
    let flagged = matches!(
        query_value(&rare, None, QueryKind::Ett, 1000, Guard::default(), &mut rng(92)),
        Err(Error::DivisionNearZero { .. })
    );
    let mis = query_value(&rare, Some(&rare_model), QueryKind::Ett, 1000, Guard::default(), &mut rng(92));
    let mis_ok = matches!(&mis, Ok(q) if (q.value - 0.5).abs() <= 3.0 * q.sigma);
    let mis_detail = match &mis {
        Ok(q) => format!("{:.3} ± {:.3}", q.value, q.sigma),
        Err(e) => e.to_string(),
    };
    Outcome::new(
        within == total && flagged && mis_ok,
        format!(
            "{within}/{total} within 3σ of RS-10^6 [{}]; near-zero P(X): RS flagged {flagged}, MIS ETT {mis_detail}",
            rows.join("; ")
        ),
    )
}

fn main() {
    let criteria: [(&str, &str, fn(&mut Shared) -> Outcome); 9] = [
        ("c1", "enumeration-oracle unbiasedness", c1),
        ("c2", "convergence direction", c2),
        ("c3", "baseline ordering", c3),
        ("c4", "Markov boundary correctness", c4),
        ("c5", "masking ablation direction", c5),
        ("c6", "gradient and mask invariants", c6),
        ("c7", "estimator algebra", c7),
        ("c8", "density sanity", c8),
        ("c9", "query pipeline", c9),
    ];
    let filters: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).map(|a| a.to_lowercase()).collect();
    let mut shared = Shared::default();
    let mut failed = 0;
    for (id, title, run) in criteria {
        if !filters.is_empty() && !filters.iter().any(|f| f == id) {
            continue;
        }
        let t = Instant::now();
        let o = run(&mut shared);
        let verdict = if o.pass { "PASS" } else { "FAIL" };
        failed += usize::from(!o.pass);
        println!("{verdict} {} {title}: {} ({:.1}s)", id.to_uppercase(), o.detail, t.elapsed().as_secs_f64());
    }
    if failed > 0 {
        std::process::exit(1);
    }
}
