//! Counterfactual variable sets, events, and stochastic counterfactual
//! processes that generate them.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scm::{Intervention, Scm};

/// Observed variables `Y_i` of one submodel `M_{x_i}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CtfGroup {
    /// Endogenous indices, strictly increasing.
    pub observed: Vec<usize>,
    pub intervention: Intervention,
}

impl CtfGroup {
    pub fn new(mut observed: Vec<usize>, intervention: Intervention) -> Self {
        observed.sort_unstable();
        observed.dedup();
        Self {
            observed,
            intervention,
        }
    }
}

/// `Y_*`: counterfactual variables from `k` submodels, evaluated jointly on
/// one unit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CtfVariableSet {
    pub groups: Vec<CtfGroup>,
}

impl CtfVariableSet {
    pub fn new(groups: Vec<CtfGroup>) -> Self {
        Self { groups }
    }

    pub fn k(&self) -> usize {
        self.groups.len()
    }

    /// Length of the flattened observed-variable list, `|Y_*|`.
    pub fn dim(&self) -> usize {
        self.groups.iter().map(|g| g.observed.len()).sum()
    }

    pub fn validate(&self, scm: &Scm) -> Result<()> {
        if self.groups.is_empty() {
            return Err(Error::EmptyInput);
        }
        for g in &self.groups {
            scm.check_intervention(&g.intervention)?;
            if g.observed.is_empty() {
                return Err(Error::DomainMismatch("group observes no variables".into()));
            }
            for &v in &g.observed {
                if v >= scm.n_endo() {
                    return Err(Error::UnknownVariable(format!("endogenous #{v}")));
                }
                if g.intervention.contains(v) {
                    return Err(Error::DomainMismatch(format!(
                        "`{}` is both observed and intervened in one group",
                        scm.endo_vars()[v].name
                    )));
                }
            }
            if g.observed.windows(2).any(|w| w[0] >= w[1]) {
                return Err(Error::DomainMismatch("observed indices must be increasing".into()));
            }
        }
        Ok(())
    }

    /// `Y_*(u)`, flattened in group order.
    pub fn evaluate(&self, scm: &Scm, u: &[f64]) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.dim());
        let mut scratch = vec![0.0; scm.n_endo()];
        self.evaluate_into(scm, u, &mut scratch, &mut out);
        out
    }

    /// Appends `Y_*(u)` to `out`; `scratch` must hold `n_endo` values.
    pub fn evaluate_into(&self, scm: &Scm, u: &[f64], scratch: &mut [f64], out: &mut Vec<f64>) {
        for g in &self.groups {
            scm.potential_response_into(&g.intervention, u, scratch);
            out.extend(g.observed.iter().map(|&v| scratch[v]));
        }
    }

    /// Human-readable form such as `[do(X=1): Y] [: X]`.
    pub fn display(&self, scm: &Scm) -> String {
        let names = scm.endo_vars();
        self.groups
            .iter()
            .map(|g| {
                let iv: Vec<String> = g
                    .intervention
                    .pairs()
                    .iter()
                    .map(|(k, x)| format!("{}={x}", names[*k].name))
                    .collect();
                let obs: Vec<&str> = g.observed.iter().map(|&v| names[v].name.as_str()).collect();
                if iv.is_empty() {
                    format!("[: {}]", obs.join(","))
                } else {
                    format!("[do({}): {}]", iv.join(","), obs.join(","))
                }
            })
            .collect::<Vec<_>>()
            .join(" ")
    }
}

/// Admissible values of one counterfactual coordinate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Region {
    Point(f64),
    /// Closed interval `[lo, hi]`.
    Interval(f64, f64),
}

impl Region {
    pub fn contains(&self, y: f64) -> bool {
        match *self {
            Region::Point(p) => y == p,
            Region::Interval(lo, hi) => y >= lo && y <= hi,
        }
    }

    pub fn center(&self) -> f64 {
        match *self {
            Region::Point(p) => p,
            Region::Interval(lo, hi) if lo.is_finite() && hi.is_finite() => 0.5 * (lo + hi),
            Region::Interval(lo, hi) => {
                if lo.is_finite() {
                    lo
                } else if hi.is_finite() {
                    hi
                } else {
                    0.0
                }
            }
        }
    }
}

/// How [`event_from_state`] wraps a sampled `y_*`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    Point,
    /// Side length `l` for continuous coordinates; discrete ones stay points.
    Cube(f64),
}

impl Default for EventKind {
    fn default() -> Self {
        EventKind::Cube(DEFAULT_CUBE_SIDE)
    }
}

pub const DEFAULT_CUBE_SIDE: f64 = 0.02;

/// A product of per-coordinate regions over `Ω_{Y_*}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CtfEvent {
    pub variables: CtfVariableSet,
    pub regions: Vec<Region>,
}

impl CtfEvent {
    pub fn new(variables: CtfVariableSet, regions: Vec<Region>) -> Result<Self> {
        if regions.len() != variables.dim() {
            return Err(Error::ShapeMismatch(format!(
                "{} regions for {} counterfactual variables",
                regions.len(),
                variables.dim()
            )));
        }
        for r in &regions {
            if let Region::Interval(lo, hi) = r {
                if !(lo < hi) {
                    return Err(Error::DomainMismatch(format!("empty interval [{lo}, {hi}]")));
                }
            }
        }
        Ok(Self { variables, regions })
    }

    pub fn point(variables: CtfVariableSet, y: &[f64]) -> Result<Self> {
        Self::new(variables, y.iter().map(|&v| Region::Point(v)).collect())
    }

    /// `δ_l(y)`: intervals of side `l` on continuous coordinates, points on
    /// discrete ones.
    pub fn cube(scm: &Scm, variables: CtfVariableSet, y: &[f64], l: f64) -> Result<Self> {
        if !(l > 0.0) {
            return Err(Error::Config(format!("cube side must be positive, got {l}")));
        }
        let mut regions = Vec::with_capacity(y.len());
        let mut i = 0;
        for g in &variables.groups {
            for &v in &g.observed {
                let c = *y.get(i).ok_or(Error::ShapeMismatch("too few values".into()))?;
                regions.push(if scm.domain(v).is_discrete() {
                    Region::Point(c)
                } else {
                    Region::Interval(c - 0.5 * l, c + 0.5 * l)
                });
                i += 1;
            }
        }
        Self::new(variables, regions)
    }

    /// The whole of `Ω_{Y_*}`.
    pub fn full(variables: CtfVariableSet) -> Self {
        let regions = vec![Region::Interval(f64::NEG_INFINITY, f64::INFINITY); variables.dim()];
        Self { variables, regions }
    }

    pub fn dim(&self) -> usize {
        self.regions.len()
    }

    pub fn contains(&self, y: &[f64]) -> bool {
        self.regions.iter().zip(y).all(|(r, v)| r.contains(*v))
    }

    /// Indicator `1_{Ω_U(𝒴_*)}(u)`.
    pub fn membership(&self, scm: &Scm, u: &[f64]) -> bool {
        let mut scratch = vec![0.0; scm.n_endo()];
        self.membership_with(scm, u, &mut scratch)
    }

    /// As [`CtfEvent::membership`], reusing a caller buffer and stopping at
    /// the first failing group.
    pub fn membership_with(&self, scm: &Scm, u: &[f64], scratch: &mut [f64]) -> bool {
        let mut i = 0;
        for g in &self.variables.groups {
            scm.potential_response_into(&g.intervention, u, scratch);
            for &v in &g.observed {
                if !self.regions[i].contains(scratch[v]) {
                    return false;
                }
                i += 1;
            }
        }
        true
    }

    /// Representative conditioning point: point values and interval centers.
    pub fn center(&self) -> Vec<f64> {
        self.regions.iter().map(Region::center).collect()
    }

    /// Lebesgue measure of the interval coordinates (`l^d` for a cube).
    pub fn volume(&self) -> f64 {
        self.regions
            .iter()
            .map(|r| match r {
                Region::Point(_) => 1.0,
                Region::Interval(lo, hi) => hi - lo,
            })
            .product()
    }

    /// Draws `y` uniformly over the event (points stay fixed).
    pub fn sample_uniform<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        self.regions
            .iter()
            .map(|r| match *r {
                Region::Point(p) => p,
                Region::Interval(lo, hi) if lo.is_finite() && hi.is_finite() => lo + (hi - lo) * rng.random::<f64>(),
                _ => r.center(),
            })
            .collect()
    }

    pub fn to_spec(&self, scm: &Scm) -> EventSpec {
        let names = scm.endo_vars();
        let mut i = 0;
        let groups = self
            .variables
            .groups
            .iter()
            .map(|g| {
                let intervene = g
                    .intervention
                    .pairs()
                    .iter()
                    .map(|(k, x)| (names[*k].name.clone(), *x))
                    .collect();
                let observe = g
                    .observed
                    .iter()
                    .map(|&v| {
                        let r = self.regions[i];
                        i += 1;
                        (names[v].name.clone(), r)
                    })
                    .collect();
                GroupSpec { intervene, observe }
            })
            .collect();
        EventSpec { groups }
    }

    pub fn from_spec(scm: &Scm, spec: &EventSpec) -> Result<Self> {
        let mut groups = Vec::new();
        let mut regions = Vec::new();
        for g in &spec.groups {
            let iv = Intervention::new(
                g.intervene
                    .iter()
                    .map(|(n, x)| Ok((scm.endo_index(n)?, *x)))
                    .collect::<Result<Vec<_>>>()?,
            );
            let mut obs: Vec<(usize, Region)> = g
                .observe
                .iter()
                .map(|(n, r)| Ok((scm.endo_index(n)?, *r)))
                .collect::<Result<Vec<_>>>()?;
            obs.sort_by_key(|p| p.0);
            regions.extend(obs.iter().map(|p| p.1));
            groups.push(CtfGroup::new(obs.into_iter().map(|p| p.0).collect(), iv));
        }
        let vars = CtfVariableSet::new(groups);
        vars.validate(scm)?;
        Self::new(vars, regions)
    }
}

/// Name-keyed event format used on the command line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventSpec {
    pub groups: Vec<GroupSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupSpec {
    #[serde(default, rename = "do")]
    pub intervene: BTreeMap<String, f64>,
    pub observe: BTreeMap<String, Region>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QueryKind {
    Ate,
    Ett,
    Nde,
    Ctfde,
}

impl QueryKind {
    pub const ALL: [QueryKind; 4] = [QueryKind::Ate, QueryKind::Ett, QueryKind::Nde, QueryKind::Ctfde];

    pub fn needs_mediator(self) -> bool {
        matches!(self, QueryKind::Nde | QueryKind::Ctfde)
    }
}

impl fmt::Display for QueryKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            QueryKind::Ate => "ate",
            QueryKind::Ett => "ett",
            QueryKind::Nde => "nde",
            QueryKind::Ctfde => "ctfde",
        })
    }
}

impl FromStr for QueryKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "ate" => Ok(QueryKind::Ate),
            "ett" => Ok(QueryKind::Ett),
            "nde" => Ok(QueryKind::Nde),
            "ctfde" => Ok(QueryKind::Ctfde),
            other => Err(Error::UnsupportedQuery(other.to_string())),
        }
    }
}

/// A stochastic counterfactual process: a distribution over states `s`,
/// each a [`CtfVariableSet`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Process {
    Bernoulli { k: usize, rho1: f64, rho2: f64 },
    Query { query: QueryKind },
}

pub const DEFAULT_RHO1: f64 = 0.2;
pub const DEFAULT_RHO2: f64 = 0.75;

impl Process {
    pub fn bernoulli(k: usize) -> Self {
        Process::Bernoulli {
            k,
            rho1: DEFAULT_RHO1,
            rho2: DEFAULT_RHO2,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            Process::Bernoulli { k, rho1, rho2 } => {
                if k == 0 {
                    return Err(Error::Config("bernoulli process needs k >= 1".into()));
                }
                if !(rho1 > 0.0 && rho1 < 1.0 && rho2 > 0.0 && rho2 < 1.0) {
                    return Err(Error::Config(format!(
                        "rho1 and rho2 must lie in (0, 1), got {rho1} and {rho2}"
                    )));
                }
                Ok(())
            }
            Process::Query { .. } => Ok(()),
        }
    }

    /// Draws one state.
    pub fn sample_state<R: Rng + ?Sized>(&self, scm: &Scm, rng: &mut R) -> Result<CtfVariableSet> {
        match *self {
            Process::Bernoulli { k, rho1, rho2 } => Ok(sample_state_bernoulli(scm, k, rho1, rho2, rng)),
            Process::Query { query } => {
                let states = query_states(scm, query)?;
                Ok(states[rng.random_range(0..states.len())].clone())
            }
        }
    }
}

impl fmt::Display for Process {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Process::Bernoulli { k, rho1, rho2 } => write!(f, "bernoulli:k={k},rho1={rho1},rho2={rho2}"),
            Process::Query { query } => write!(f, "query:{query}"),
        }
    }
}

impl FromStr for Process {
    type Err = Error;

    /// `bernoulli:k=3[,rho1=0.2,rho2=0.75]` or `query:ett`.
    fn from_str(s: &str) -> Result<Self> {
        let (head, rest) = s.split_once(':').unwrap_or((s, ""));
        match head {
            "bernoulli" => {
                let (mut k, mut rho1, mut rho2) = (1, DEFAULT_RHO1, DEFAULT_RHO2);
                for kv in rest.split(',').filter(|p| !p.is_empty()) {
                    let (key, val) = kv
                        .split_once('=')
                        .ok_or_else(|| Error::Config(format!("expected key=value, got `{kv}`")))?;
                    let bad = |_| Error::Config(format!("bad value for {key}: `{val}`"));
                    match key {
                        "k" => k = val.parse().map_err(|e: std::num::ParseIntError| bad(e.to_string()))?,
                        "rho1" => rho1 = val.parse().map_err(|e: std::num::ParseFloatError| bad(e.to_string()))?,
                        "rho2" => rho2 = val.parse().map_err(|e: std::num::ParseFloatError| bad(e.to_string()))?,
                        _ => return Err(Error::Config(format!("unknown process parameter `{key}`"))),
                    }
                }
                let p = Process::Bernoulli { k, rho1, rho2 };
                p.validate()?;
                Ok(p)
            }
            "query" => Ok(Process::Query { query: rest.parse()? }),
            _ => Err(Error::Config(format!("unknown process `{s}`"))),
        }
    }
}

/// Bernoulli process: each of `k` groups intervenes on every endogenous
/// variable with probability `rho1` (values drawn from the observational
/// distribution) and observes each remaining one with probability `rho2`.
/// Groups that observe nothing are redrawn.
pub fn sample_state_bernoulli<R: Rng + ?Sized>(
    scm: &Scm,
    k: usize,
    rho1: f64,
    rho2: f64,
    rng: &mut R,
) -> CtfVariableSet {
    let n = scm.n_endo();
    let mut groups = Vec::with_capacity(k);
    while groups.len() < k {
        let intervened: Vec<usize> = (0..n).filter(|_| rng.random::<f64>() < rho1).collect();
        let iv = if intervened.is_empty() {
            Intervention::empty()
        } else {
            let u = scm.exo_dist().sample_one(rng);
            let v = scm.forward(&u);
            Intervention::new(intervened.iter().map(|&i| (i, v[i])))
        };
        let observed: Vec<usize> = (0..n)
            .filter(|i| !iv.contains(*i))
            .filter(|_| rng.random::<f64>() < rho2)
            .collect();
        if !observed.is_empty() {
            groups.push(CtfGroup::new(observed, iv));
        }
    }
    CtfVariableSet::new(groups)
}

/// Treatment, outcome and (optional) mediator indices for effect queries.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct QueryVars {
    pub treatment: usize,
    pub outcome: usize,
    pub mediator: Option<usize>,
}

impl QueryVars {
    pub fn from_roles(scm: &Scm) -> Result<Self> {
        let roles = scm
            .roles()
            .ok_or_else(|| Error::UnsupportedQuery(format!("{} declares no treatment/outcome roles", scm.name())))?;
        Ok(Self {
            treatment: scm.endo_index(&roles.treatment)?,
            outcome: scm.endo_index(&roles.outcome)?,
            mediator: roles.mediator.as_deref().map(|m| scm.endo_index(m)).transpose()?,
        })
    }

    fn check(&self, scm: &Scm, query: QueryKind) -> Result<()> {
        let binary = |i: usize| scm.domain(i) == crate::scm::Domain::Discrete(2);
        if !binary(self.treatment) {
            return Err(Error::UnsupportedQuery("treatment must be binary".into()));
        }
        if !binary(self.outcome) {
            return Err(Error::UnsupportedQuery("outcome must be binary".into()));
        }
        match (query.needs_mediator(), self.mediator) {
            (true, None) => Err(Error::UnsupportedQuery(format!("{query} needs a mediator"))),
            (true, Some(m)) if !binary(m) => Err(Error::UnsupportedQuery("mediator must be binary".into())),
            _ => Ok(()),
        }
    }
}

fn group(observed: &[usize], iv: &[(usize, f64)]) -> CtfGroup {
    CtfGroup::new(observed.to_vec(), Intervention::new(iv.iter().copied()))
}

/// Variable sets appearing in the counterfactual-probability expansion of
/// `query`, over both treatment levels.
///
/// - ATE: `{[do(X=x): Y]}`
/// - ETT: `{[do(X=x'): Y], [: X]}`, `{[: X]}`
/// - NDE: `{[do(X=x, W=w): Y], [do(X=x'): W]}`, `{[do(X=x): Y]}`
/// - CtfDE: the NDE sets with a factual `[: X]` group appended, and `{[: X]}`
pub fn query_states(scm: &Scm, query: QueryKind) -> Result<Vec<CtfVariableSet>> {
    let vars = QueryVars::from_roles(scm)?;
    query_states_for(scm, query, vars)
}

pub fn query_states_for(scm: &Scm, query: QueryKind, vars: QueryVars) -> Result<Vec<CtfVariableSet>> {
    vars.check(scm, query)?;
    let (x, y) = (vars.treatment, vars.outcome);
    let levels = [0.0, 1.0];
    let mut out = Vec::new();
    match query {
        QueryKind::Ate => {
            for a in levels {
                out.push(CtfVariableSet::new(vec![group(&[y], &[(x, a)])]));
            }
        }
        QueryKind::Ett => {
            for a in levels {
                out.push(CtfVariableSet::new(vec![group(&[y], &[(x, a)]), group(&[x], &[])]));
            }
            out.push(CtfVariableSet::new(vec![group(&[x], &[])]));
        }
        QueryKind::Nde | QueryKind::Ctfde => {
            let w = vars.mediator.expect("checked above");
            let factual = query == QueryKind::Ctfde;
            for a in levels {
                for b in levels {
                    for wv in levels {
                        let mut gs = vec![group(&[y], &[(x, a), (w, wv)]), group(&[w], &[(x, b)])];
                        if factual {
                            gs.push(group(&[x], &[]));
                        }
                        out.push(CtfVariableSet::new(gs));
                    }
                }
            }
            for a in levels {
                let mut gs = vec![group(&[y], &[(x, a)])];
                if factual {
                    gs.push(group(&[x], &[]));
                }
                out.push(CtfVariableSet::new(gs));
            }
            if factual {
                out.push(CtfVariableSet::new(vec![group(&[x], &[])]));
            }
        }
    }
    Ok(out)
}

/// Samples `u ~ P_U` and wraps `Y_*^{(s)}(u)` as an event; returns the
/// generating unit alongside.
pub fn event_from_state<R: Rng + ?Sized>(
    state: &CtfVariableSet,
    scm: &Scm,
    kind: EventKind,
    rng: &mut R,
) -> Result<(CtfEvent, Vec<f64>)> {
    let u = scm.exo_dist().sample_one(rng);
    let y = state.evaluate(scm, &u);
    let event = match kind {
        EventKind::Point => CtfEvent::point(state.clone(), &y)?,
        EventKind::Cube(l) => CtfEvent::cube(scm, state.clone(), &y, l)?,
    };
    Ok((event, u))
}
