mod common;

use exom::estimators::{combine, estimate_is, estimate_rs, query_terms, query_value, Guard, TermEstimate};
use exom::events::{event_from_state, CtfEvent, EventKind, Process, QueryKind, QueryVars};
use exom::proposal::{ConditionalProposal, HeadConfig, ProposalConfig};
use exom::scm::{zoo, Domain, Scm};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use common::{enumerate, exogenous_domain_size};

const DISCRETE: [&str; 4] = ["FAIRNESS", "FAIRNESS-XW", "FAIRNESS-XY", "FAIRNESS-YW"];

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

#[test]
fn discrete_zoo_is_enumerable() {
    for name in DISCRETE {
        let scm = zoo::load(name).unwrap();
        assert!(scm.is_discrete());
        let size = exogenous_domain_size(&scm).unwrap();
        assert!(size <= 1 << 16, "{name}: {size}");
    }
}

/// Point events over every joint value of a variable set partition the
/// exogenous space.
#[test]
fn point_events_partition_unity() {
    let mut r = rng(1);
    for name in DISCRETE {
        let scm = zoo::load(name).unwrap();
        for _ in 0..5 {
            let state = Process::bernoulli(2).sample_state(&scm, &mut r).unwrap();
            let cards: Vec<usize> = state
                .groups
                .iter()
                .flat_map(|g| g.observed.iter().map(|&v| match scm.domain(v) {
                    Domain::Discrete(c) => c as usize,
                    Domain::Continuous => unreachable!("discrete SCM"),
                }))
                .collect();
            let mut total = 0.0;
            let combos: usize = cards.iter().product();
            for mut code in 0..combos {
                let y: Vec<f64> = cards
                    .iter()
                    .map(|&c| {
                        let v = code % c;
                        code /= c;
                        v as f64
                    })
                    .collect();
                total += enumerate(&scm, &CtfEvent::point(state.clone(), &y).unwrap());
            }
            assert!((total - 1.0).abs() < 1e-12, "{name}: {total}");
        }
    }
}

#[test]
fn rejection_sampling_is_unbiased() {
    let mut r = rng(2);
    for name in DISCRETE {
        let scm = zoo::load(name).unwrap();
        for _ in 0..6 {
            let state = Process::bernoulli(3).sample_state(&scm, &mut r).unwrap();
            let (event, _) = event_from_state(&state, &scm, EventKind::Point, &mut r).unwrap();
            let truth = enumerate(&scm, &event);
            let n = 20_000;
            let est = estimate_rs(&scm, &event, n, &mut r).unwrap();
            let sd = (truth * (1.0 - truth) / n as f64).sqrt();
            assert!((est.p_hat - truth).abs() <= 4.0 * sd, "{name}: {} vs {truth}", est.p_hat);
        }
    }
}

fn untrained(scm: &Scm, head: HeadConfig, seed: u64) -> ConditionalProposal {
    let cfg = ProposalConfig {
        head,
        hidden: 16,
        pilot_samples: 512,
        ..ProposalConfig::default()
    };
    ConditionalProposal::new(scm, cfg, &mut rng(seed)).unwrap()
}

/// Guarded IS is unbiased for any proposal, trained or not.
#[test]
fn guarded_importance_sampling_is_unbiased() {
    let mut r = rng(3);
    let mut within = 0;
    let mut total = 0;
    for name in ["FAIRNESS", "FAIRNESS-XY"] {
        let scm = zoo::load(name).unwrap();
        for head in [HeadConfig::GMM, HeadConfig::MAF] {
            let model = untrained(&scm, head, 4);
            for _ in 0..5 {
                let state = Process::bernoulli(2).sample_state(&scm, &mut r).unwrap();
                let (event, u) = event_from_state(&state, &scm, EventKind::Point, &mut r).unwrap();
                let y = state.evaluate(&scm, &u);
                let truth = enumerate(&scm, &event);
                let est = estimate_is(&model, &scm, &event, &y, 4000, Guard::default(), &mut r).unwrap();
                total += 1;
                if (est.p_hat - truth).abs() <= 4.0 * est.sigma {
                    within += 1;
                }
            }
        }
    }
    assert!(within >= total - 1, "{within}/{total}");
}

/// Exact query values from enumerated terms agree with the sampled ones.
#[test]
fn queries_match_enumerated_terms() {
    let scm = zoo::load("FAIRNESS").unwrap();
    let vars = QueryVars::from_roles(&scm).unwrap();
    for (i, q) in [QueryKind::Ate, QueryKind::Ett, QueryKind::Nde, QueryKind::Ctfde].into_iter().enumerate() {
        let exact: Vec<TermEstimate> = query_terms(&scm, q, vars)
            .unwrap()
            .into_iter()
            .map(|t| TermEstimate {
                p_hat: enumerate(&scm, &t.event),
                sigma: 0.0,
                eta: 1.0,
                label: t.label,
                coefficient: t.coefficient,
                denominator: t.denominator,
            })
            .collect();
        let truth = combine(q, "exact", exact).unwrap().value;
        let est = query_value(&scm, None, q, 100_000, Guard::default(), &mut rng(10 + i as u64)).unwrap();
        assert!((est.value - truth).abs() <= 4.0 * est.sigma, "{q}: {} ± {} vs {truth}", est.value, est.sigma);
    }
}
