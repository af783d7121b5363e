use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::events::{CtfGroup, QueryKind};
use crate::proposal::{HeadConfig, ProposalConfig};
use crate::scm::{zoo, Intervention, ScmDescription};

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Exact probability by summing the prior mass of every exogenous value.
fn enumerate(scm: &Scm, event: &CtfEvent) -> f64 {
    let cards: Vec<usize> = scm
        .exo_dist()
        .marginals
        .iter()
        .map(|m| m.cardinality().expect("discrete"))
        .collect();
    let mut idx = vec![0usize; cards.len()];
    let mut total = 0.0;
    loop {
        let u: Vec<f64> = idx.iter().map(|&i| i as f64).collect();
        if event.membership(scm, &u) {
            total += scm.log_density_exogenous(&u).exp();
        }
        let mut d = 0;
        loop {
            if d == cards.len() {
                return total;
            }
            idx[d] += 1;
            if idx[d] < cards[d] {
                break;
            }
            idx[d] = 0;
            d += 1;
        }
    }
}

fn small_model(scm: &Scm, seed: u64) -> ConditionalProposal {
    let cfg = ProposalConfig {
        head: HeadConfig::GMM,
        hidden: 16,
        pilot_samples: 256,
        ..ProposalConfig::default()
    };
    ConditionalProposal::new(scm, cfg, &mut rng(seed)).unwrap()
}

fn chain_event(scm: &Scm, seed: u64) -> (CtfEvent, Vec<f64>) {
    let vars = CtfVariableSet::new(vec![
        CtfGroup::new(vec![1, 2], Intervention::empty()),
        CtfGroup::new(vec![2], Intervention::new([(0, 1.0)])),
    ]);
    let u = scm.exo_dist().sample_one(&mut rng(seed));
    let y = vars.evaluate(scm, &u);
    (CtfEvent::cube(scm, vars, &y, 0.5).unwrap(), y)
}

#[test]
fn guard_one_reproduces_rejection_sampling() {
    let scm = zoo::load("CHAIN-LIN-3").unwrap();
    let model = small_model(&scm, 1);
    let (event, y) = chain_event(&scm, 2);
    let rs = estimate_rs(&scm, &event, 5000, &mut rng(3)).unwrap();
    let is = estimate_is(&model, &scm, &event, &y, 5000, Guard::new(1.0).unwrap(), &mut rng(3)).unwrap();
    assert_eq!(rs.p_hat.to_bits(), is.p_hat.to_bits());
    assert!(is.log_weights.iter().all(|w| *w == 0.0 || *w == f64::NEG_INFINITY));
    assert!(rs.eta > 0.0);
}

#[test]
fn guarded_weights_are_bounded() {
    let scm = zoo::load("SIMPSON-NLIN").unwrap();
    let model = small_model(&scm, 4);
    let (event, y) = {
        let vars = CtfVariableSet::new(vec![CtfGroup::new(vec![0, 1, 2, 3], Intervention::empty())]);
        let u = scm.exo_dist().sample_one(&mut rng(5));
        let y = vars.evaluate(&scm, &u);
        (CtfEvent::full(vars), y)
    };
    for eps in [0.05, 0.3] {
        let g = Guard::new(eps).unwrap();
        let r = estimate_is(&model, &scm, &event, &y, 4000, g, &mut rng(6)).unwrap();
        let mx = r.log_weights.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        assert!(mx <= -eps.ln());
    }
}

#[test]
fn log_sum_exp_matches_direct_summation() {
    let lw: Vec<f64> = (0..1000).map(|i| ((i as f64) * 0.37).sin() * 3.0).collect();
    let direct = lw.iter().map(|w| w.exp()).sum::<f64>() / lw.len() as f64;
    let r = EstimateReport::from_log_weights("x", lw, 0.0);
    assert!((r.p_hat - direct).abs() <= 1e-12 * direct);
    assert!(r.p_hat.is_finite());
}

#[test]
fn metric_examples() {
    let (esp, fr) = metrics_esp_fr(&[0.0, 0.5, 1.0], 0.0).unwrap();
    assert_eq!(esp, 0.5);
    assert!((fr - 1.0 / 3.0).abs() < 1e-15);
    assert_eq!(metrics_esp_fr(&[1.0; 4], 1e-3).unwrap(), (1.0, 0.0));
    assert!(matches!(metrics_esp_fr(&[], 0.1), Err(Error::EmptyInput)));
}

#[test]
fn error_bound_examples() {
    let e = error_bound(&[vec![0.04, 0.09]], &[2]).unwrap();
    assert!((e - 0.1).abs() < 1e-12);
    assert_eq!(error_bound(&[vec![0.3; 5], vec![0.1; 5]], &[1, 3]).unwrap(), 0.0);
    let raw = error_bound(&[vec![0.1, 0.3]], &[1]).unwrap();
    assert!((raw - 0.2).abs() < 1e-12);
    assert!(matches!(error_bound(&[vec![0.1]], &[1]), Err(Error::InsufficientRuns(1))));
}

#[test]
fn rejection_sampling_matches_enumeration() {
    let scm = zoo::load("FAIRNESS").unwrap();
    let mut r = rng(7);
    for _ in 0..5 {
        let vars = crate::events::Process::bernoulli(2).sample_state(&scm, &mut r).unwrap();
        let (event, _) = crate::events::event_from_state(&vars, &scm, crate::events::EventKind::Point, &mut r).unwrap();
        let truth = enumerate(&scm, &event);
        let n = 20_000;
        let est = estimate_rs(&scm, &event, n, &mut r).unwrap();
        let sd = (truth * (1.0 - truth) / n as f64).sqrt();
        assert!((est.p_hat - truth).abs() <= 3.0 * sd + 1e-12, "{} vs {truth}", est.p_hat);
    }
}

#[test]
fn full_event_is_certain() {
    let scm = zoo::load("CHAIN-LIN-3").unwrap();
    let vars = CtfVariableSet::new(vec![CtfGroup::new(vec![0, 2], Intervention::empty())]);
    let event = CtfEvent::full(vars);
    assert_eq!(estimate_rs(&scm, &event, 100, &mut rng(8)).unwrap().p_hat, 1.0);
    let cfg = CeisConfig {
        guard: Guard::new(1e-9).unwrap(),
        ..CeisConfig::with_budget(1000, 1)
    };
    let r = estimate_ceis(&scm, &event, &cfg, &mut rng(9)).unwrap();
    assert_eq!(r.eta, 1.0);
    assert!((r.p_hat - 1.0).abs() < 0.15, "{}", r.p_hat);
}

#[test]
fn ceis_matches_enumeration_on_discrete_events() {
    let scm = zoo::load("FAIRNESS").unwrap();
    let mut r = rng(10);
    for _ in 0..5 {
        let vars = crate::events::Process::bernoulli(2).sample_state(&scm, &mut r).unwrap();
        let (event, _) = crate::events::event_from_state(&vars, &scm, crate::events::EventKind::Point, &mut r).unwrap();
        let truth = enumerate(&scm, &event);
        let est = estimate_ceis(&scm, &event, &CeisConfig::with_budget(5000, 4), &mut r).unwrap();
        assert!((est.p_hat - truth).abs() <= 4.0 * est.sigma + 1e-9, "{} ± {} vs {truth}", est.p_hat, est.sigma);
    }
}

#[test]
fn mis_with_fixed_sampler_uses_the_point() {
    let scm = zoo::load("CHAIN-LIN-3").unwrap();
    let model = small_model(&scm, 11);
    let (event, y) = chain_event(&scm, 12);
    let a = estimate_is(&model, &scm, &event, &y, 300, Guard::default(), &mut rng(13)).unwrap();
    let b = estimate_mis(&model, &scm, &event, &EventSampler::Fixed(y.clone()), 300, Guard::default(), &mut rng(13)).unwrap();
    assert!((a.p_hat - b.p_hat).abs() <= 1e-12 * a.p_hat.max(1e-300));
}

fn description(json: &str) -> Scm {
    Scm::from_description(&ScmDescription::from_json(json).unwrap()).unwrap()
}

#[test]
fn null_effect_has_zero_ate() {
    let scm = description(
        r#"{"name":"NULL","exogenous":[{"name":"UX","kind":"bernoulli","p":0.4},{"name":"UY","kind":"bernoulli","p":0.3}],
        "endogenous":[{"name":"X","domain":{"discrete":2},"expr":"UX"},{"name":"Y","domain":{"discrete":2},"expr":"UY"}],
        "roles":{"treatment":"X","outcome":"Y","mediator":null}}"#,
    );
    let q = query_value(&scm, None, QueryKind::Ate, 20_000, Guard::default(), &mut rng(14)).unwrap();
    assert!(q.ci.0 <= 0.0 && 0.0 <= q.ci.1, "{q:?}");
}

#[test]
fn tiny_treatment_probability_is_flagged() {
    let scm = description(
        r#"{"name":"RARE","exogenous":[{"name":"UX","kind":"bernoulli","p":0.0001},{"name":"UY","kind":"bernoulli","p":0.5}],
        "endogenous":[{"name":"X","domain":{"discrete":2},"expr":"UX"},{"name":"Y","domain":{"discrete":2},"expr":"ind(X + UY - 0.5)"}],
        "roles":{"treatment":"X","outcome":"Y","mediator":null}}"#,
    );
    let r = query_value(&scm, None, QueryKind::Ett, 1000, Guard::default(), &mut rng(15));
    assert!(matches!(r, Err(Error::DivisionNearZero { .. })), "{r:?}");
}

#[test]
fn density_of_standard_normal_outcome() {
    let scm = description(
        r#"{"name":"GAUSS","exogenous":[{"name":"U","kind":"standard_normal"}],
        "endogenous":[{"name":"Y","domain":"continuous","expr":"U"}]}"#,
    );
    let vars = CtfVariableSet::new(vec![CtfGroup::new(vec![0], Intervention::empty())]);
    let d = estimate_density(None, &scm, &vars, &[0.0], 0.02, 200_000, Guard::default(), &mut rng(16)).unwrap();
    assert!((d.density - 0.398_942_280_4).abs() < 0.04, "{}", d.density);
}
