//! Probability estimators over counterfactual events: rejection sampling,
//! importance sampling with a guarded learned proposal, multiple importance
//! sampling over the event, cross-entropy IS, densities and metrics.

pub mod ceis;
pub mod query;

use rand::Rng;
use serde::{Deserialize, Serialize};

pub use ceis::{estimate_ceis, CeisConfig};
pub use query::{combine, query_terms, query_value, QueryEstimate, Term, TermEstimate};

use crate::error::{Error, Result};
use crate::events::{CtfEvent, CtfVariableSet};
use crate::nn::Tensor;
use crate::proposal::{ConditionalProposal, ProposalParams};
use crate::scm::Scm;

/// Default mixture weight of the prior in the guarded proposal.
pub const DEFAULT_GUARD: f64 = 0.05;
/// Default failure threshold on `η`.
pub const DEFAULT_FAILURE_THRESHOLD: f64 = 1e-3;

/// `q'(u) = (1 - ε) q(u | y_*) + ε p(u)`, bounding weights by `1/ε`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Guard {
    pub eps: f64,
}

impl Default for Guard {
    fn default() -> Self {
        Self { eps: DEFAULT_GUARD }
    }
}

impl Guard {
    pub fn new(eps: f64) -> Result<Self> {
        if !(eps > 0.0 && eps <= 1.0) {
            return Err(Error::Config(format!("guard weight must lie in (0, 1], got {eps}")));
        }
        Ok(Self { eps })
    }

    /// `log q'` from `log q` and `log p`.
    pub fn log_mixture(&self, log_q: f64, log_p: f64) -> f64 {
        if self.eps >= 1.0 {
            return log_p;
        }
        log_add_exp((1.0 - self.eps).ln() + log_q, self.eps.ln() + log_p)
    }

    pub fn max_log_weight(&self) -> f64 {
        -self.eps.ln()
    }
}

pub fn log_add_exp(a: f64, b: f64) -> f64 {
    let m = a.max(b);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + ((a - m).exp() + (b - m).exp()).ln()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateReport {
    pub method: String,
    pub p_hat: f64,
    /// Standard error: sample standard deviation of the weights over `√n`.
    pub sigma: f64,
    /// Per-sample `log σ`; `-inf` where the indicator is 0.
    #[serde(skip)]
    pub log_weights: Vec<f64>,
    /// Fraction of samples inside the event.
    pub eta: f64,
    pub n: usize,
    /// `η ≤ m`.
    pub failed: bool,
    /// Raw estimate above 1 (possible for IS).
    pub above_one: bool,
}

impl EstimateReport {
    /// Summarizes log-weights with a log-sum-exp mean.
    pub fn from_log_weights(method: &str, log_weights: Vec<f64>, m: f64) -> Self {
        let n = log_weights.len();
        let hits = log_weights.iter().filter(|w| **w > f64::NEG_INFINITY).count();
        let mx = log_weights.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let (p_hat, sigma) = if mx == f64::NEG_INFINITY || n == 0 {
            (0.0, 0.0)
        } else {
            let scaled: Vec<f64> = log_weights.iter().map(|w| (w - mx).exp()).collect();
            let mean = scaled.iter().sum::<f64>() / n as f64;
            let var = if n > 1 {
                scaled.iter().map(|w| (w - mean).powi(2)).sum::<f64>() / (n - 1) as f64
            } else {
                0.0
            };
            let scale = mx.exp();
            (scale * mean, scale * (var / n as f64).sqrt())
        };
        let eta = if n == 0 { 0.0 } else { hits as f64 / n as f64 };
        Self {
            method: method.to_string(),
            p_hat,
            sigma,
            log_weights,
            eta,
            n,
            failed: eta <= m,
            above_one: p_hat > 1.0,
        }
    }
}

/// Rejection sampling with `u ~ P_U`.
pub fn estimate_rs<R: Rng + ?Sized>(scm: &Scm, event: &CtfEvent, n: usize, rng: &mut R) -> Result<EstimateReport> {
    if n == 0 {
        return Err(Error::EmptyInput);
    }
    let mut scratch = vec![0.0; scm.n_endo()];
    let lw = (0..n)
        .map(|_| {
            let u = scm.exo_dist().sample_one(rng);
            if event.membership_with(scm, &u, &mut scratch) {
                0.0
            } else {
                f64::NEG_INFINITY
            }
        })
        .collect();
    Ok(EstimateReport::from_log_weights("rs", lw, DEFAULT_FAILURE_THRESHOLD))
}

/// Draws `n` units from the guarded proposal whose `i`-th draw uses
/// parameter row `i` (or the single row). Returns the units with their
/// guarded log-weights before the indicator.
fn guarded_draws<R: Rng + ?Sized>(
    model: &ConditionalProposal,
    scm: &Scm,
    params: &ProposalParams,
    n: usize,
    guard: Guard,
    rng: &mut R,
) -> Result<(Vec<Vec<f64>>, Vec<f64>)> {
    if guard.eps >= 1.0 {
        // plain prior sampling; consumes the stream exactly like RS
        let us: Vec<Vec<f64>> = (0..n).map(|_| scm.exo_dist().sample_one(rng)).collect();
        let lw = us
            .iter()
            .map(|u| if scm.log_density_exogenous(u).is_finite() { 0.0 } else { f64::NEG_INFINITY })
            .collect();
        return Ok((us, lw));
    }
    let from_prior: Vec<bool> = (0..n).map(|_| rng.random::<f64>() < guard.eps).collect();
    let n_q = from_prior.iter().filter(|b| !**b).count();
    let q_rows: Vec<usize> = (0..n).filter(|&i| !from_prior[i]).collect();
    let q_draws = if params.rows == 1 {
        model.sample_q(params, n_q, rng)?
    } else {
        let sub = ProposalParams {
            rows: n_q,
            per_exo: params.per_exo.iter().map(|t| select_rows(t, &q_rows)).collect(),
            shared: params.shared.as_ref().map(|t| select_rows(t, &q_rows)),
        };
        model.sample_q(&sub, n_q, rng)?
    };
    let mut q_iter = q_draws.into_iter();
    let us: Vec<Vec<f64>> = from_prior
        .iter()
        .map(|&prior| {
            if prior {
                scm.exo_dist().sample_one(rng)
            } else {
                q_iter.next().expect("one proposal draw per slot")
            }
        })
        .collect();
    let lq = model.log_q(params, &us)?;
    let cap = guard.max_log_weight();
    let lw = us
        .iter()
        .zip(&lq)
        .map(|(u, &lq)| {
            let lp = scm.log_density_exogenous(u);
            if lp == f64::NEG_INFINITY {
                return f64::NEG_INFINITY;
            }
            (lp - guard.log_mixture(lq, lp)).min(cap)
        })
        .collect();
    Ok((us, lw))
}

fn select_rows(t: &Tensor, rows: &[usize]) -> Tensor {
    let mut data = Vec::with_capacity(rows.len() * t.cols);
    for &r in rows {
        data.extend_from_slice(t.row(r));
    }
    Tensor {
        rows: rows.len(),
        cols: t.cols,
        data,
    }
}

/// Importance sampling from the guarded proposal conditioned at `y_star`.
pub fn estimate_is<R: Rng + ?Sized>(
    model: &ConditionalProposal,
    scm: &Scm,
    event: &CtfEvent,
    y_star: &[f64],
    n: usize,
    guard: Guard,
    rng: &mut R,
) -> Result<EstimateReport> {
    if n == 0 {
        return Err(Error::EmptyInput);
    }
    let params = if guard.eps >= 1.0 {
        // unused by the prior-only path
        ProposalParams {
            rows: 1,
            per_exo: Vec::new(),
            shared: None,
        }
    } else {
        model.condition_one(&event.variables, y_star)?
    };
    let (us, mut lw) = guarded_draws(model, scm, &params, n, guard, rng)?;
    apply_indicator(scm, event, &us, &mut lw);
    Ok(EstimateReport::from_log_weights("is", lw, DEFAULT_FAILURE_THRESHOLD))
}

fn apply_indicator(scm: &Scm, event: &CtfEvent, us: &[Vec<f64>], lw: &mut [f64]) {
    let mut scratch = vec![0.0; scm.n_endo()];
    for (u, w) in us.iter().zip(lw.iter_mut()) {
        if *w > f64::NEG_INFINITY && !event.membership_with(scm, u, &mut scratch) {
            *w = f64::NEG_INFINITY;
        }
    }
}

/// Distribution of conditioning points inside the event.
#[derive(Debug, Clone, PartialEq)]
pub enum EventSampler {
    /// Uniform over the event's regions.
    Uniform,
    /// Always the given point.
    Fixed(Vec<f64>),
}

/// Multiple importance sampling: each draw conditions the proposal on its
/// own `y ~ sampler`.
pub fn estimate_mis<R: Rng + ?Sized>(
    model: &ConditionalProposal,
    scm: &Scm,
    event: &CtfEvent,
    sampler: &EventSampler,
    n: usize,
    guard: Guard,
    rng: &mut R,
) -> Result<EstimateReport> {
    if n == 0 {
        return Err(Error::EmptyInput);
    }
    let ys: Vec<Vec<f64>> = (0..n)
        .map(|_| match sampler {
            EventSampler::Uniform => event.sample_uniform(rng),
            EventSampler::Fixed(y) => y.clone(),
        })
        .collect();
    let mut per_exo: Vec<Vec<f64>> = Vec::new();
    let mut shared: Vec<f64> = Vec::new();
    let mut cols = (Vec::new(), 0);
    for chunk in ys.chunks(512) {
        let items: Vec<_> = chunk.iter().map(|y| (&event.variables, y.as_slice())).collect();
        let p = model.condition(&items)?;
        if per_exo.is_empty() {
            per_exo = vec![Vec::new(); p.per_exo.len()];
            cols = (p.per_exo.iter().map(|t| t.cols).collect(), p.shared.as_ref().map_or(0, |t| t.cols));
        }
        for (acc, t) in per_exo.iter_mut().zip(&p.per_exo) {
            acc.extend_from_slice(&t.data);
        }
        if let Some(t) = &p.shared {
            shared.extend_from_slice(&t.data);
        }
    }
    let params = ProposalParams {
        rows: n,
        per_exo: per_exo
            .into_iter()
            .zip(&cols.0)
            .map(|(d, &c)| Tensor { rows: n, cols: c, data: d })
            .collect(),
        shared: (cols.1 > 0).then(|| Tensor {
            rows: n,
            cols: cols.1,
            data: shared,
        }),
    };
    let (us, mut lw) = guarded_draws(model, scm, &params, n, guard, rng)?;
    apply_indicator(scm, event, &us, &mut lw);
    Ok(EstimateReport::from_log_weights("mis", lw, DEFAULT_FAILURE_THRESHOLD))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityEstimate {
    pub density: f64,
    pub sigma: f64,
    pub side: f64,
    pub report: EstimateReport,
}

/// `P(Y_* ∈ δ_l(y_*)) / l^d` for continuous counterfactual variables; with
/// no model the cube probability comes from rejection sampling.
#[allow(clippy::too_many_arguments)]
pub fn estimate_density<R: Rng + ?Sized>(
    model: Option<&ConditionalProposal>,
    scm: &Scm,
    variables: &CtfVariableSet,
    y_star: &[f64],
    l: f64,
    n: usize,
    guard: Guard,
    rng: &mut R,
) -> Result<DensityEstimate> {
    if !(l > 0.0) {
        return Err(Error::Config(format!("cube side must be positive, got {l}")));
    }
    let mut i = 0;
    for g in &variables.groups {
        for &v in &g.observed {
            if scm.domain(v).is_discrete() {
                return Err(Error::DomainMismatch(format!(
                    "density needs continuous variables, `{}` (position {i}) is discrete",
                    scm.endo_vars()[v].name
                )));
            }
            i += 1;
        }
    }
    let event = CtfEvent::cube(scm, variables.clone(), y_star, l)?;
    let report = match model {
        Some(m) => estimate_is(m, scm, &event, y_star, n, guard, rng)?,
        None => estimate_rs(scm, &event, n, rng)?,
    };
    let vol = event.volume();
    Ok(DensityEstimate {
        density: report.p_hat / vol,
        sigma: report.sigma / vol,
        side: l,
        report,
    })
}

/// `(ESP, FR)` of a set of reports at threshold `m`.
pub fn metrics_esp_fr(etas: &[f64], m: f64) -> Result<(f64, f64)> {
    if etas.is_empty() {
        return Err(Error::EmptyInput);
    }
    let n = etas.len() as f64;
    let esp = etas.iter().sum::<f64>() / n;
    let fr = etas.iter().filter(|&&e| e <= m).count() as f64 / n;
    Ok((esp, fr))
}

/// `2 · mean_e std_runs(p̂_e^{1/d_e})` with the population standard deviation.
pub fn error_bound(estimates: &[Vec<f64>], dims: &[usize]) -> Result<f64> {
    if estimates.is_empty() {
        return Err(Error::EmptyInput);
    }
    if estimates.len() != dims.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} estimate lists for {} dimensions",
            estimates.len(),
            dims.len()
        )));
    }
    let mut total = 0.0;
    for (runs, &d) in estimates.iter().zip(dims) {
        if runs.len() < 2 {
            return Err(Error::InsufficientRuns(runs.len()));
        }
        if d == 0 {
            return Err(Error::ShapeMismatch("event of dimension 0".into()));
        }
        // shifted by the first run so identical runs give exactly zero
        let root = |p: f64| p.max(0.0).powf(1.0 / d as f64);
        let r0 = root(runs[0]);
        let r: Vec<f64> = runs.iter().map(|&p| root(p) - r0).collect();
        let mean = r.iter().sum::<f64>() / r.len() as f64;
        let var = r.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / r.len() as f64;
        total += var.sqrt();
    }
    Ok(2.0 * total / estimates.len() as f64)
}

#[cfg(test)]
mod tests;
