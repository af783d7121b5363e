//! Structural causal models: declarations, mechanisms, submodels, and
//! potential responses.
//!
//! An [`Scm`] is built from a declarative [`ScmDescription`]; every
//! mechanism is an [`expr::Expr`] over parent values, so a model can be
//! written in JSON or TOML and hashed for checkpoint compatibility.

pub mod dist;
pub mod expr;
pub mod zoo;

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub use dist::{ExogenousDist, Marginal};
use expr::{Expr, Slot};

use crate::error::{Error, Result};

/// Value domain of an endogenous variable.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Domain {
    Continuous,
    /// Integer values `0..cardinality`.
    Discrete(u32),
}

impl Domain {
    pub fn is_discrete(self) -> bool {
        matches!(self, Domain::Discrete(_))
    }

    pub fn contains(self, x: f64) -> bool {
        match self {
            Domain::Continuous => x.is_finite(),
            Domain::Discrete(c) => x >= 0.0 && x.fract() == 0.0 && x < c as f64,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum VariableKind {
    Endogenous,
    Exogenous,
}

/// Identifies a variable by kind and dense index within that kind.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct VariableId {
    pub kind: VariableKind,
    pub index: usize,
}

impl VariableId {
    pub fn endo(index: usize) -> Self {
        Self {
            kind: VariableKind::Endogenous,
            index,
        }
    }

    pub fn exo(index: usize) -> Self {
        Self {
            kind: VariableKind::Exogenous,
            index,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExogenousDecl {
    pub name: String,
    #[serde(flatten)]
    pub marginal: Marginal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EndogenousDecl {
    pub name: String,
    pub domain: Domain,
    /// Mechanism expression; parents are the names it references.
    pub expr: String,
}

/// Conventional treatment/outcome/mediator used by effect queries.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QueryRoles {
    pub treatment: String,
    pub outcome: String,
    pub mediator: Option<String>,
}

/// Declarative SCM, loadable from JSON or TOML.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScmDescription {
    pub name: String,
    pub exogenous: Vec<ExogenousDecl>,
    pub endogenous: Vec<EndogenousDecl>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub roles: Option<QueryRoles>,
}

impl ScmDescription {
    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    pub fn from_toml(s: &str) -> Result<Self> {
        toml::from_str(s).map_err(|e| Error::Config(e.to_string()))
    }

    /// SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("description serializes");
        hex::encode(Sha256::digest(&bytes))
    }
}

/// Structural equation for one endogenous variable.
#[derive(Debug, Clone, PartialEq)]
pub struct Mechanism {
    pub target: usize,
    pub endo_parents: Vec<usize>,
    pub exo_parents: Vec<usize>,
    pub function: Expr,
}

/// Perfect intervention `do(X = x)`; keys are endogenous indices.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Intervention {
    assignments: Vec<(usize, f64)>,
}

impl Intervention {
    pub fn empty() -> Self {
        Self::default()
    }

    /// Later duplicates of a key overwrite earlier ones.
    pub fn new(pairs: impl IntoIterator<Item = (usize, f64)>) -> Self {
        let mut assignments: Vec<(usize, f64)> = Vec::new();
        for (k, v) in pairs {
            match assignments.iter_mut().find(|(j, _)| *j == k) {
                Some(slot) => slot.1 = v,
                None => assignments.push((k, v)),
            }
        }
        assignments.sort_by_key(|p| p.0);
        Self { assignments }
    }

    pub fn get(&self, var: usize) -> Option<f64> {
        self.assignments.iter().find(|(k, _)| *k == var).map(|p| p.1)
    }

    pub fn contains(&self, var: usize) -> bool {
        self.get(var).is_some()
    }

    pub fn variables(&self) -> impl Iterator<Item = usize> + '_ {
        self.assignments.iter().map(|p| p.0)
    }

    pub fn pairs(&self) -> &[(usize, f64)] {
        &self.assignments
    }

    pub fn is_empty(&self) -> bool {
        self.assignments.is_empty()
    }

    pub fn len(&self) -> usize {
        self.assignments.len()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EndogenousVar {
    pub name: String,
    pub domain: Domain,
}

/// A recursive structural causal model `<U, V, F, P_U>`.
///
/// Immutable after construction.
#[derive(Debug, Clone)]
pub struct Scm {
    name: String,
    exo_names: Vec<String>,
    endo: Vec<EndogenousVar>,
    mechanisms: Vec<Mechanism>,
    exo_dist: ExogenousDist,
    topo: Vec<usize>,
    description: ScmDescription,
    hash: String,
}

/// Validates a description and builds the model.
pub fn build_scm(desc: &ScmDescription) -> Result<Scm> {
    Scm::from_description(desc)
}

impl Scm {
    pub fn from_description(desc: &ScmDescription) -> Result<Self> {
        let mut index: HashMap<&str, Slot> = HashMap::new();
        for (j, e) in desc.exogenous.iter().enumerate() {
            if index.insert(e.name.as_str(), Slot::Exo(j)).is_some() {
                return Err(Error::DomainMismatch(format!("duplicate variable `{}`", e.name)));
            }
        }
        for (i, v) in desc.endogenous.iter().enumerate() {
            if index.insert(v.name.as_str(), Slot::Endo(i)).is_some() {
                return Err(Error::DomainMismatch(format!("duplicate variable `{}`", v.name)));
            }
            if let Domain::Discrete(c) = v.domain {
                if c < 2 {
                    return Err(Error::DomainMismatch(format!(
                        "`{}` has cardinality {c}; discrete variables need at least 2 values",
                        v.name
                    )));
                }
            }
        }
        let exo_dist = ExogenousDist::new(desc.exogenous.iter().map(|e| e.marginal.clone()).collect())?;

        let mut mechanisms = Vec::with_capacity(desc.endogenous.len());
        for (i, v) in desc.endogenous.iter().enumerate() {
            let function = expr::parse(&v.expr, |name| index.get(name).copied())?;
            let mut endo_parents = Vec::new();
            let mut exo_parents = Vec::new();
            for s in function.slots() {
                match s {
                    Slot::Endo(p) if p == i => {
                        return Err(Error::Cycle(vec![v.name.clone()]));
                    }
                    Slot::Endo(p) => endo_parents.push(p),
                    Slot::Exo(j) => exo_parents.push(j),
                }
            }
            mechanisms.push(Mechanism {
                target: i,
                endo_parents,
                exo_parents,
                function,
            });
        }

        let topo = topological_order(&mechanisms).map_err(|stuck| {
            Error::Cycle(stuck.into_iter().map(|i| desc.endogenous[i].name.clone()).collect())
        })?;

        let scm = Scm {
            name: desc.name.clone(),
            exo_names: desc.exogenous.iter().map(|e| e.name.clone()).collect(),
            endo: desc
                .endogenous
                .iter()
                .map(|v| EndogenousVar {
                    name: v.name.clone(),
                    domain: v.domain,
                })
                .collect(),
            mechanisms,
            exo_dist,
            topo,
            description: desc.clone(),
            hash: desc.hash(),
        };
        if let Some(roles) = &desc.roles {
            for name in [Some(&roles.treatment), Some(&roles.outcome), roles.mediator.as_ref()]
                .into_iter()
                .flatten()
            {
                scm.endo_index(name)?;
            }
        }
        scm.spot_check_domains()?;
        Ok(scm)
    }

    /// Evaluates a fixed batch of units and rejects discrete mechanisms that
    /// produce values outside their declared domain.
    fn spot_check_domains(&self) -> Result<()> {
        if !self.endo.iter().any(|v| v.domain.is_discrete()) {
            return Ok(());
        }
        let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
        for _ in 0..256 {
            let u = self.exo_dist.sample_one(&mut rng);
            let v = self.forward(&u);
            for (var, x) in self.endo.iter().zip(&v) {
                if var.domain.is_discrete() && !var.domain.contains(*x) {
                    return Err(Error::DomainMismatch(format!(
                        "mechanism of `{}` produced {x}, outside {:?}",
                        var.name, var.domain
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn description(&self) -> &ScmDescription {
        &self.description
    }

    /// SHA-256 of the canonical description.
    pub fn hash(&self) -> &str {
        &self.hash
    }

    pub fn n_endo(&self) -> usize {
        self.endo.len()
    }

    pub fn n_exo(&self) -> usize {
        self.exo_names.len()
    }

    pub fn endo_vars(&self) -> &[EndogenousVar] {
        &self.endo
    }

    pub fn exo_names(&self) -> &[String] {
        &self.exo_names
    }

    pub fn domain(&self, endo: usize) -> Domain {
        self.endo[endo].domain
    }

    pub fn mechanisms(&self) -> &[Mechanism] {
        &self.mechanisms
    }

    pub fn exo_dist(&self) -> &ExogenousDist {
        &self.exo_dist
    }

    pub fn topological_order(&self) -> &[usize] {
        &self.topo
    }

    pub fn roles(&self) -> Option<&QueryRoles> {
        self.description.roles.as_ref()
    }

    pub fn endo_index(&self, name: &str) -> Result<usize> {
        self.endo
            .iter()
            .position(|v| v.name == name)
            .ok_or_else(|| Error::UnknownVariable(name.to_string()))
    }

    pub fn exo_index(&self, name: &str) -> Result<usize> {
        self.exo_names
            .iter()
            .position(|v| v == name)
            .ok_or_else(|| Error::UnknownVariable(name.to_string()))
    }

    /// Whether every endogenous variable is discrete.
    pub fn is_discrete(&self) -> bool {
        self.endo.iter().all(|v| v.domain.is_discrete())
    }

    /// Rejects interventions on unknown variables or with out-of-domain values.
    pub fn check_intervention(&self, iv: &Intervention) -> Result<()> {
        for &(k, x) in iv.pairs() {
            let var = self
                .endo
                .get(k)
                .ok_or_else(|| Error::UnknownVariable(format!("endogenous #{k}")))?;
            if !var.domain.contains(x) {
                return Err(Error::DomainMismatch(format!(
                    "intervention value {x} outside the domain of `{}`",
                    var.name
                )));
            }
        }
        Ok(())
    }

    /// Unique solution of the submodel `M_x` at unit `u`.
    pub fn potential_response(&self, iv: &Intervention, u: &[f64]) -> Vec<f64> {
        let mut v = vec![0.0; self.endo.len()];
        self.potential_response_into(iv, u, &mut v);
        v
    }

    /// As [`Scm::potential_response`], writing into a caller buffer.
    pub fn potential_response_into(&self, iv: &Intervention, u: &[f64], v: &mut [f64]) {
        debug_assert_eq!(u.len(), self.exo_names.len());
        debug_assert_eq!(v.len(), self.endo.len());
        for &i in &self.topo {
            v[i] = match iv.get(i) {
                Some(x) => x,
                None => self.mechanisms[i].function.eval(v, u),
            };
        }
    }

    /// Unintervened evaluation, `F(u)`.
    pub fn forward(&self, u: &[f64]) -> Vec<f64> {
        self.potential_response(&Intervention::empty(), u)
    }

    pub fn sample_exogenous<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Vec<Vec<f64>> {
        self.exo_dist.sample(n, rng)
    }

    pub fn log_density_exogenous(&self, u: &[f64]) -> f64 {
        self.exo_dist.log_density(u)
    }
}

/// Kahn's algorithm, always releasing the smallest ready index first.
/// On failure returns the variables left on a cycle.
fn topological_order(mechanisms: &[Mechanism]) -> std::result::Result<Vec<usize>, Vec<usize>> {
    let n = mechanisms.len();
    let mut indeg: Vec<usize> = mechanisms.iter().map(|m| m.endo_parents.len()).collect();
    let mut children = vec![Vec::new(); n];
    for m in mechanisms {
        for &p in &m.endo_parents {
            children[p].push(m.target);
        }
    }
    let mut ready: std::collections::BTreeSet<usize> = (0..n).filter(|&i| indeg[i] == 0).collect();
    let mut order = Vec::with_capacity(n);
    while let Some(i) = ready.pop_first() {
        order.push(i);
        for &c in &children[i] {
            indeg[c] -= 1;
            if indeg[c] == 0 {
                ready.insert(c);
            }
        }
    }
    if order.len() == n {
        Ok(order)
    } else {
        Err((0..n).filter(|i| indeg[*i] > 0).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn chain3() -> Scm {
        let desc = ScmDescription {
            name: "chain".into(),
            exogenous: (1..=3)
                .map(|i| ExogenousDecl {
                    name: format!("U{i}"),
                    marginal: Marginal::StandardNormal,
                })
                .collect(),
            endogenous: vec![
                EndogenousDecl {
                    name: "V1".into(),
                    domain: Domain::Continuous,
                    expr: "U1".into(),
                },
                EndogenousDecl {
                    name: "V2".into(),
                    domain: Domain::Continuous,
                    expr: "V1 + U2".into(),
                },
                EndogenousDecl {
                    name: "V3".into(),
                    domain: Domain::Continuous,
                    expr: "V2 + U3".into(),
                },
            ],
            roles: None,
        };
        build_scm(&desc).unwrap()
    }

    #[test]
    fn chain_topology_and_intervention() {
        let scm = chain3();
        assert_eq!(scm.topological_order(), &[0, 1, 2]);
        let iv = Intervention::new([(1, 0.0)]);
        assert_eq!(scm.potential_response(&iv, &[1.0, 1.0, 1.0]), vec![1.0, 0.0, 1.0]);
        assert_eq!(scm.forward(&[1.0, 1.0, 1.0]), vec![1.0, 2.0, 3.0]);
    }

    #[test]
    fn two_cycle_is_rejected() {
        let desc = ScmDescription {
            name: "cyc".into(),
            exogenous: vec![ExogenousDecl {
                name: "U".into(),
                marginal: Marginal::StandardNormal,
            }],
            endogenous: vec![
                EndogenousDecl {
                    name: "A".into(),
                    domain: Domain::Continuous,
                    expr: "B + U".into(),
                },
                EndogenousDecl {
                    name: "B".into(),
                    domain: Domain::Continuous,
                    expr: "A".into(),
                },
            ],
            roles: None,
        };
        match build_scm(&desc) {
            Err(Error::Cycle(names)) => assert_eq!(names, vec!["A", "B"]),
            other => panic!("expected cycle, got {other:?}"),
        }
    }

    #[test]
    fn unknown_names_and_bad_domains() {
        let mut desc = chain3().description().clone();
        desc.endogenous[2].expr = "V2 + W".into();
        assert!(matches!(build_scm(&desc), Err(Error::UnknownVariable(n)) if n == "W"));

        let mut desc = chain3().description().clone();
        desc.endogenous[0].domain = Domain::Discrete(2);
        assert!(matches!(build_scm(&desc), Err(Error::DomainMismatch(_))));

        let scm = chain3();
        assert!(scm.check_intervention(&Intervention::new([(7, 0.0)])).is_err());
    }

    #[test]
    fn intervention_keys_are_unique() {
        let iv = Intervention::new([(2, 1.0), (0, 3.0), (2, 5.0)]);
        assert_eq!(iv.pairs(), &[(0, 3.0), (2, 5.0)]);
    }

    #[test]
    fn descriptions_roundtrip_through_json_and_toml() {
        let desc = chain3().description().clone();
        let json = serde_json::to_string(&desc).unwrap();
        assert_eq!(ScmDescription::from_json(&json).unwrap(), desc);
        let toml_src = r#"
            name = "chain"
            [[exogenous]]
            name = "U1"
            kind = "standard_normal"
            [[exogenous]]
            name = "U2"
            kind = "standard_normal"
            [[exogenous]]
            name = "U3"
            kind = "standard_normal"
            [[endogenous]]
            name = "V1"
            domain = "continuous"
            expr = "U1"
            [[endogenous]]
            name = "V2"
            domain = "continuous"
            expr = "V1 + U2"
            [[endogenous]]
            name = "V3"
            domain = "continuous"
            expr = "V2 + U3"
        "#;
        let parsed = ScmDescription::from_toml(toml_src).unwrap();
        assert_eq!(parsed, desc);
        assert_eq!(parsed.hash(), desc.hash());
    }
}
