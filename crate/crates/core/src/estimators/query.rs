//! Effect queries expanded into counterfactual probabilities.
//!
//! With binary treatment `X`, outcome `Y` and mediator `W`:
//!
//! - ATE   = P(Y_{X=1}=1) - P(Y_{X=0}=1)
//! - ETT   = [P(Y_{X=1}=1, X=1) - P(Y_{X=0}=1, X=1)] / P(X=1)
//! - NDE   = Σ_w P(Y_{X=1,W=w}=1, W_{X=0}=w) - P(Y_{X=0}=1)
//! - CtfDE = [Σ_w P(Y_{X=1,W=w}=1, W_{X=0}=w, X=0) - P(Y_{X=0}=1, X=0)] / P(X=0)

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{estimate_mis, estimate_rs, EstimateReport, EventSampler, Guard};
use crate::error::{Error, Result};
use crate::events::{CtfEvent, CtfGroup, CtfVariableSet, QueryKind, QueryVars};
use crate::proposal::ConditionalProposal;
use crate::scm::{Intervention, Scm};

/// Two-sided 95% normal quantile.
const Z95: f64 = 1.959_963_984_540_054;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TermEstimate {
    pub label: String,
    /// Coefficient in the numerator; 0 for the denominator.
    pub coefficient: f64,
    pub denominator: bool,
    pub p_hat: f64,
    pub sigma: f64,
    pub eta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryEstimate {
    pub query: QueryKind,
    pub method: String,
    pub value: f64,
    pub sigma: f64,
    pub ci: (f64, f64),
    pub terms: Vec<TermEstimate>,
}

/// One probability term of a query expansion.
#[derive(Debug, Clone)]
pub struct Term {
    pub label: String,
    pub event: CtfEvent,
    pub coefficient: f64,
    pub denominator: bool,
}

fn grp(observed: usize, iv: &[(usize, f64)]) -> CtfGroup {
    CtfGroup::new(vec![observed], Intervention::new(iv.iter().copied()))
}

fn point(groups: Vec<CtfGroup>, y: &[f64]) -> Result<CtfEvent> {
    CtfEvent::point(CtfVariableSet::new(groups), y)
}

/// The probability terms of `query`.
pub fn query_terms(scm: &Scm, query: QueryKind, vars: QueryVars) -> Result<Vec<Term>> {
    // validates binary roles
    crate::events::query_states_for(scm, query, vars)?;
    let (x, y) = (vars.treatment, vars.outcome);
    let term = |label: String, event: CtfEvent, coefficient: f64| Term {
        label,
        event,
        coefficient,
        denominator: false,
    };
    let denom = |label: &str, event: CtfEvent| Term {
        label: label.to_string(),
        event,
        coefficient: 0.0,
        denominator: true,
    };
    let mut out = Vec::new();
    match query {
        QueryKind::Ate => {
            out.push(term("P(Y_{X=1}=1)".into(), point(vec![grp(y, &[(x, 1.0)])], &[1.0])?, 1.0));
            out.push(term("P(Y_{X=0}=1)".into(), point(vec![grp(y, &[(x, 0.0)])], &[1.0])?, -1.0));
        }
        QueryKind::Ett => {
            for (a, c) in [(1.0, 1.0), (0.0, -1.0)] {
                out.push(term(
                    format!("P(Y_{{X={a}}}=1, X=1)"),
                    point(vec![grp(y, &[(x, a)]), grp(x, &[])], &[1.0, 1.0])?,
                    c,
                ));
            }
            out.push(denom("P(X=1)", point(vec![grp(x, &[])], &[1.0])?));
        }
        QueryKind::Nde | QueryKind::Ctfde => {
            let w = vars.mediator.expect("validated above");
            let factual = query == QueryKind::Ctfde;
            for wv in [0.0, 1.0] {
                let mut gs = vec![grp(y, &[(x, 1.0), (w, wv)]), grp(w, &[(x, 0.0)])];
                let mut vals = vec![1.0, wv];
                if factual {
                    gs.push(grp(x, &[]));
                    vals.push(0.0);
                }
                let suffix = if factual { ", X=0" } else { "" };
                out.push(term(
                    format!("P(Y_{{X=1,W={wv}}}=1, W_{{X=0}}={wv}{suffix})"),
                    point(gs, &vals)?,
                    1.0,
                ));
            }
            let mut gs = vec![grp(y, &[(x, 0.0)])];
            let mut vals = vec![1.0];
            if factual {
                gs.push(grp(x, &[]));
                vals.push(0.0);
                out.push(term("P(Y_{X=0}=1, X=0)".into(), point(gs, &vals)?, -1.0));
                out.push(denom("P(X=0)", point(vec![grp(x, &[])], &[0.0])?));
            } else {
                out.push(term("P(Y_{X=0}=1)".into(), point(gs, &vals)?, -1.0));
            }
        }
    }
    Ok(out)
}

/// Combines term estimates: `value = Σ c_t p_t` or its ratio to the
/// denominator term, with a delta-method standard error.
pub fn combine(query: QueryKind, method: &str, terms: Vec<TermEstimate>) -> Result<QueryEstimate> {
    let num: f64 = terms.iter().filter(|t| !t.denominator).map(|t| t.coefficient * t.p_hat).sum();
    let num_var: f64 = terms
        .iter()
        .filter(|t| !t.denominator)
        .map(|t| (t.coefficient * t.sigma).powi(2))
        .sum();
    let (value, var) = match terms.iter().find(|t| t.denominator) {
        None => (num, num_var),
        Some(d) => {
            if d.p_hat <= 10.0 * d.sigma {
                return Err(Error::DivisionNearZero {
                    estimate: d.p_hat,
                    sigma: d.sigma,
                });
            }
            let v = num / d.p_hat;
            (v, num_var / d.p_hat.powi(2) + num.powi(2) * d.sigma.powi(2) / d.p_hat.powi(4))
        }
    };
    let sigma = var.sqrt();
    Ok(QueryEstimate {
        query,
        method: method.to_string(),
        value,
        sigma,
        ci: (value - Z95 * sigma, value + Z95 * sigma),
        terms,
    })
}

/// Estimates `query` with MIS under `model`, or with rejection sampling
/// when `model` is `None`. Every term uses `n` samples.
pub fn query_value<R: Rng + ?Sized>(
    scm: &Scm,
    model: Option<&ConditionalProposal>,
    query: QueryKind,
    n: usize,
    guard: Guard,
    rng: &mut R,
) -> Result<QueryEstimate> {
    let vars = QueryVars::from_roles(scm)?;
    let mut estimates = Vec::new();
    for t in query_terms(scm, query, vars)? {
        let r: EstimateReport = match model {
            Some(m) => estimate_mis(m, scm, &t.event, &EventSampler::Uniform, n, guard, rng)?,
            None => estimate_rs(scm, &t.event, n, rng)?,
        };
        estimates.push(TermEstimate {
            label: t.label,
            coefficient: t.coefficient,
            denominator: t.denominator,
            p_hat: r.p_hat,
            sigma: r.sigma,
            eta: r.eta,
        });
    }
    combine(query, if model.is_some() { "mis" } else { "rs" }, estimates)
}
