//! Named benchmark SCMs.
//!
//! Each entry reproduces the graph shape and parametric character its name
//! suggests (linear-Gaussian for `-LIN`, smooth softplus/tanh compositions
//! for `-NLIN`, shared exogenous parents for confounded shapes, binary
//! threshold mechanisms over categorical noise for the `FAIRNESS` family).
//! The mechanisms are this crate's own and are not numerically equivalent to
//! any other published construction.

use sha2::{Digest, Sha256};

use super::{build_scm, Domain, EndogenousDecl, ExogenousDecl, Marginal, QueryRoles, Scm, ScmDescription};
use crate::error::{Error, Result};

pub struct ZooEntry {
    pub name: &'static str,
    pub summary: &'static str,
    build: fn() -> ScmDescription,
}

impl ZooEntry {
    pub fn description(&self) -> ScmDescription {
        (self.build)()
    }
}

const C: Domain = Domain::Continuous;
const B: Domain = Domain::Discrete(2);

fn normal_exo(names: &[&str]) -> Vec<(String, Marginal)> {
    names
        .iter()
        .map(|n| (n.to_string(), Marginal::StandardNormal))
        .collect()
}

fn desc(
    name: &str,
    exo: Vec<(String, Marginal)>,
    endo: &[(&str, Domain, &str)],
    roles: Option<(&str, &str, Option<&str>)>,
) -> ScmDescription {
    ScmDescription {
        name: name.to_string(),
        exogenous: exo
            .into_iter()
            .map(|(n, m)| ExogenousDecl {
                name: n,
                marginal: m,
            })
            .collect(),
        endogenous: endo
            .iter()
            .map(|(n, d, e)| EndogenousDecl {
                name: n.to_string(),
                domain: *d,
                expr: e.to_string(),
            })
            .collect(),
        roles: roles.map(|(t, o, m)| QueryRoles {
            treatment: t.to_string(),
            outcome: o.to_string(),
            mediator: m.map(str::to_string),
        }),
    }
}

fn chain_lin(n: usize) -> ScmDescription {
    let exo: Vec<String> = (1..=n).map(|i| format!("U{i}")).collect();
    let exprs: Vec<String> = (1..=n)
        .map(|i| {
            if i == 1 {
                "U1".to_string()
            } else {
                format!("0.8 * V{} + 0.6 * U{i}", i - 1)
            }
        })
        .collect();
    let names: Vec<String> = (1..=n).map(|i| format!("V{i}")).collect();
    let endo: Vec<(&str, Domain, &str)> = names
        .iter()
        .zip(&exprs)
        .map(|(n, e)| (n.as_str(), C, e.as_str()))
        .collect();
    let exo_refs: Vec<&str> = exo.iter().map(String::as_str).collect();
    desc(&format!("CHAIN-LIN-{n}"), normal_exo(&exo_refs), &endo, None)
}

/// Binary variable set by comparing a score against categorical noise on
/// `{0, ..., 7}`: `V = ind(score - U)`, a stochastic mapping of its parents.
fn noise8() -> Marginal {
    Marginal::Categorical {
        weights: vec![1.0; 8],
    }
}

fn fairness(name: &str, confound: Option<(&str, &str)>) -> ScmDescription {
    let mut exo: Vec<(String, Marginal)> = ["UZ", "UX", "UW", "UY"]
        .iter()
        .map(|n| (n.to_string(), noise8()))
        .collect();
    if confound.is_some() {
        exo.push(("UC".to_string(), Marginal::Bernoulli { p: 0.5 }));
    }
    let shared = |v: &str, sign: &str| match confound {
        Some((a, b)) if a == v || b == v => format!(" {sign} 3 * UC"),
        _ => String::new(),
    };
    let z = "ind(3.5 - UZ)".to_string();
    let x = format!("ind(2.5 + 2 * Z - UX{})", shared("X", "-"));
    let w = format!("ind(1.5 + 4 * X - UW{})", shared("W", "+"));
    let y = format!("ind(1.5 + 2 * X + 2 * W - 2 * Z - UY{})", shared("Y", "+"));
    desc(
        name,
        exo,
        &[("Z", B, &z), ("X", B, &x), ("W", B, &w), ("Y", B, &y)],
        Some(("X", "Y", Some("W"))),
    )
}

pub static ZOO: &[ZooEntry] = &[
    ZooEntry {
        name: "CHAIN-LIN-3",
        summary: "linear-Gaussian chain V1 -> V2 -> V3",
        build: || chain_lin(3),
    },
    ZooEntry {
        name: "CHAIN-LIN-4",
        summary: "linear-Gaussian chain of 4 variables",
        build: || chain_lin(4),
    },
    ZooEntry {
        name: "CHAIN-LIN-5",
        summary: "linear-Gaussian chain of 5 variables",
        build: || chain_lin(5),
    },
    ZooEntry {
        name: "CHAIN-NLIN-3",
        summary: "nonlinear chain V1 -> V2 -> V3",
        build: || {
            desc(
                "CHAIN-NLIN-3",
                normal_exo(&["U1", "U2", "U3"]),
                &[
                    ("V1", C, "U1"),
                    ("V2", C, "tanh(1.5 * V1) + 0.5 * U2"),
                    ("V3", C, "softplus(2 * V2) - 1 + 0.5 * U3"),
                ],
                None,
            )
        },
    },
    ZooEntry {
        name: "COLLIDER-LIN",
        summary: "linear collider V1 -> V3 <- V2",
        build: || {
            desc(
                "COLLIDER-LIN",
                normal_exo(&["U1", "U2", "U3"]),
                &[("V1", C, "U1"), ("V2", C, "U2"), ("V3", C, "0.7 * V1 - 0.7 * V2 + 0.5 * U3")],
                None,
            )
        },
    },
    ZooEntry {
        name: "FORK-LIN",
        summary: "linear fork V2 <- V1 -> V3",
        build: || {
            desc(
                "FORK-LIN",
                normal_exo(&["U1", "U2", "U3"]),
                &[("V1", C, "U1"), ("V2", C, "0.9 * V1 + 0.5 * U2"), ("V3", C, "-0.6 * V1 + 0.7 * U3")],
                None,
            )
        },
    },
    ZooEntry {
        name: "FORK-NLIN",
        summary: "nonlinear fork V2 <- V1 -> V3",
        build: || {
            desc(
                "FORK-NLIN",
                normal_exo(&["U1", "U2", "U3"]),
                &[
                    ("V1", C, "U1"),
                    ("V2", C, "tanh(2 * V1) + 0.4 * U2"),
                    ("V3", C, "softplus(V1) * 0.8 + 0.5 * U3"),
                ],
                None,
            )
        },
    },
    ZooEntry {
        name: "TRIANGLE-LIN",
        summary: "linear triangle V1 -> V2 -> V3, V1 -> V3",
        build: || {
            desc(
                "TRIANGLE-LIN",
                normal_exo(&["U1", "U2", "U3"]),
                &[
                    ("V1", C, "U1"),
                    ("V2", C, "0.8 * V1 + 0.6 * U2"),
                    ("V3", C, "0.5 * V1 - 0.7 * V2 + 0.5 * U3"),
                ],
                None,
            )
        },
    },
    ZooEntry {
        name: "TRIANGLE-NLIN",
        summary: "nonlinear triangle V1 -> V2 -> V3, V1 -> V3",
        build: || {
            desc(
                "TRIANGLE-NLIN",
                normal_exo(&["U1", "U2", "U3"]),
                &[
                    ("V1", C, "U1"),
                    ("V2", C, "2 * tanh(V1) + 0.5 * U2"),
                    ("V3", C, "softplus(V1 - V2) + 0.3 * V2 + 0.5 * U3"),
                ],
                None,
            )
        },
    },
    ZooEntry {
        name: "SIMPSON-NLIN",
        summary: "V1 -> V2, V1 -> V3, V2 -> V3, V3 -> V4 with softplus/tanh mechanisms",
        build: || {
            desc(
                "SIMPSON-NLIN",
                normal_exo(&["U1", "U2", "U3", "U4"]),
                &[
                    ("V1", C, "U1"),
                    ("V2", C, "softplus(1 - V1) + 0.6 * U2"),
                    ("V3", C, "tanh(2 * V2 - V1) + 0.4 * U3"),
                    ("V4", C, "softplus(2 * V3 + 1) - 1 + 0.5 * U4"),
                ],
                None,
            )
        },
    },
    ZooEntry {
        name: "SIMPSON-SYMPROD",
        summary: "Simpson-style shape with a product interaction in V3",
        build: || {
            desc(
                "SIMPSON-SYMPROD",
                normal_exo(&["U1", "U2", "U3", "U4"]),
                &[
                    ("V1", C, "U1"),
                    ("V2", C, "0.5 * V1 + 0.8 * U2"),
                    ("V3", C, "0.5 * V1 * V2 + 0.6 * U3"),
                    ("V4", C, "tanh(V3) + 0.5 * U4"),
                ],
                None,
            )
        },
    },
    ZooEntry {
        name: "LARGEBD-NLIN",
        summary: "nine-variable nonlinear graph with a wide back-door set",
        build: || {
            desc(
                "LARGEBD-NLIN",
                normal_exo(&["U1", "U2", "U3", "U4", "U5", "U6", "U7", "U8", "U9"]),
                &[
                    ("V1", C, "U1"),
                    ("V2", C, "U2"),
                    ("V3", C, "tanh(V1 + V2) + 0.5 * U3"),
                    ("V4", C, "softplus(V1) - V2 * 0.5 + 0.5 * U4"),
                    ("V5", C, "tanh(V3 - V4) + 0.5 * U5"),
                    ("V6", C, "0.6 * V3 + 0.4 * V5 + 0.5 * U6"),
                    ("V7", C, "softplus(V4 + V5) - 1 + 0.5 * U7"),
                    ("V8", C, "tanh(V6) + 0.5 * V7 + 0.5 * U8"),
                    ("V9", C, "softplus(V8 - V6) + 0.5 * U9"),
                ],
                None,
            )
        },
    },
    ZooEntry {
        name: "BACK-DOOR",
        summary: "Z -> X -> Y with back-door path X <- Z -> Y",
        build: || {
            desc(
                "BACK-DOOR",
                normal_exo(&["UZ", "UX", "UY"]),
                &[
                    ("Z", C, "UZ"),
                    ("X", C, "0.8 * Z + 0.6 * UX"),
                    ("Y", C, "0.7 * X - 0.5 * Z + 0.5 * UY"),
                ],
                None,
            )
        },
    },
    ZooEntry {
        name: "FRONT-DOOR",
        summary: "X -> M -> Y with X and Y sharing an exogenous parent",
        build: || {
            desc(
                "FRONT-DOOR",
                normal_exo(&["UXY", "UX", "UM", "UY"]),
                &[
                    ("X", C, "0.8 * UXY + 0.6 * UX"),
                    ("M", C, "tanh(1.5 * X) + 0.5 * UM"),
                    ("Y", C, "0.8 * M + 0.6 * UXY + 0.4 * UY"),
                ],
                None,
            )
        },
    },
    ZooEntry {
        name: "M",
        summary: "M-shape: X and Z share one exogenous parent, Z and Y another, X -> Y",
        build: || {
            desc(
                "M",
                normal_exo(&["UA", "UB", "UX", "UZ", "UY"]),
                &[
                    ("X", C, "0.7 * UA + 0.7 * UX"),
                    ("Z", C, "0.6 * UA + 0.6 * UB + 0.5 * UZ"),
                    ("Y", C, "0.8 * X + 0.7 * UB + 0.5 * UY"),
                ],
                None,
            )
        },
    },
    ZooEntry {
        name: "NAPKIN",
        summary: "W -> R -> X -> Y with W confounded with X and with Y",
        build: || {
            desc(
                "NAPKIN",
                normal_exo(&["UWX", "UWY", "UW", "UR", "UX", "UY"]),
                &[
                    ("W", C, "0.5 * UWX + 0.5 * UWY + 0.7 * UW"),
                    ("R", C, "tanh(W) + 0.5 * UR"),
                    ("X", C, "softplus(R) + 0.5 * UWX + 0.5 * UX"),
                    ("Y", C, "tanh(X) + 0.5 * UWY + 0.5 * UY"),
                ],
                None,
            )
        },
    },
    ZooEntry {
        name: "FAIRNESS",
        summary: "binary Z -> X -> W -> Y with Z -> Y and X -> Y",
        build: || fairness("FAIRNESS", None),
    },
    ZooEntry {
        name: "FAIRNESS-XW",
        summary: "FAIRNESS with X and W sharing a binary exogenous parent",
        build: || fairness("FAIRNESS-XW", Some(("X", "W"))),
    },
    ZooEntry {
        name: "FAIRNESS-XY",
        summary: "FAIRNESS with X and Y sharing a binary exogenous parent",
        build: || fairness("FAIRNESS-XY", Some(("X", "Y"))),
    },
    ZooEntry {
        name: "FAIRNESS-YW",
        summary: "FAIRNESS with Y and W sharing a binary exogenous parent",
        build: || fairness("FAIRNESS-YW", Some(("Y", "W"))),
    },
];

pub fn names() -> Vec<&'static str> {
    ZOO.iter().map(|e| e.name).collect()
}

/// Case-insensitive lookup.
pub fn entry(name: &str) -> Result<&'static ZooEntry> {
    ZOO.iter()
        .find(|e| e.name.eq_ignore_ascii_case(name))
        .ok_or_else(|| Error::UnknownScm(name.to_string()))
}

pub fn description(name: &str) -> Result<ScmDescription> {
    Ok(entry(name)?.description())
}

pub fn load(name: &str) -> Result<Scm> {
    build_scm(&description(name)?)
}

/// Hash over every zoo description; changes whenever any mechanism does.
pub fn version_hash() -> String {
    let mut h = Sha256::new();
    for e in ZOO {
        h.update(e.description().hash().as_bytes());
    }
    hex::encode(h.finalize())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scm::Intervention;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn every_entry_builds() {
        assert!(ZOO.len() >= 12);
        for e in ZOO {
            let scm = load(e.name).unwrap_or_else(|err| panic!("{}: {err}", e.name));
            assert_eq!(scm.name(), e.name);
        }
    }

    #[test]
    fn simpson_shape() {
        let scm = load("simpson-nlin").unwrap();
        assert_eq!(scm.n_endo(), 4);
        assert_eq!(scm.topological_order(), &[0, 1, 2, 3]);
        let parents: Vec<Vec<usize>> = scm.mechanisms().iter().map(|m| m.endo_parents.clone()).collect();
        assert_eq!(parents, vec![vec![], vec![0], vec![0, 1], vec![2]]);
    }

    #[test]
    fn fairness_family_is_enumerable() {
        for name in ["FAIRNESS", "FAIRNESS-XW", "FAIRNESS-XY", "FAIRNESS-YW"] {
            let scm = load(name).unwrap();
            assert!(scm.is_discrete());
            let size = scm.exo_dist().support_size().unwrap();
            assert!(size <= 1 << 16, "{name}: {size}");
        }
    }

    #[test]
    fn confounded_fairness_shares_exogenous_parent() {
        let scm = load("FAIRNESS-XY").unwrap();
        let uc = scm.exo_index("UC").unwrap();
        let users: Vec<&str> = scm
            .mechanisms()
            .iter()
            .filter(|m| m.exo_parents.contains(&uc))
            .map(|m| scm.endo_vars()[m.target].name.as_str())
            .collect();
        assert_eq!(users, vec!["X", "Y"]);
    }

    #[test]
    fn empty_intervention_matches_forward() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for e in ZOO {
            let scm = load(e.name).unwrap();
            for u in scm.sample_exogenous(20, &mut rng) {
                assert_eq!(scm.potential_response(&Intervention::empty(), &u), scm.forward(&u));
            }
        }
    }

    #[test]
    fn version_hash_is_stable() {
        assert_eq!(version_hash(), version_hash());
        assert_eq!(version_hash().len(), 64);
    }
}
