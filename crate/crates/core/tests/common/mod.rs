//! Oracles shared by the integration tests. Each is a direct, slow
//! restatement of a definition, independent of the library code it checks.

#![allow(dead_code)]

use std::collections::BTreeSet;

use exom::events::{query_states, CtfEvent, CtfVariableSet, Process, QueryKind};
use exom::graphs::{augmented_graph, counterfactual_markov_boundary, AugmentedGraph, CutStrategy};
use exom::scm::{zoo, Scm};
use rand::seq::SliceRandom;
use rand::Rng;

/// `a ⟂ b | z` by moralizing the ancestral graph of `a ∪ b ∪ z`, deleting
/// `z`, and testing undirected connectivity.
pub fn d_separated_moral(g: &AugmentedGraph, a: &[usize], b: &[usize], z: &[usize]) -> bool {
    let n = g.n_nodes();
    let edges = g.edges();
    let mut keep = vec![false; n];
    let mut stack: Vec<usize> = a.iter().chain(b).chain(z).copied().collect();
    while let Some(v) = stack.pop() {
        if keep[v] {
            continue;
        }
        keep[v] = true;
        for &(p, c) in &edges {
            if c == v && !keep[p] {
                stack.push(p);
            }
        }
    }
    let mut adj = vec![BTreeSet::new(); n];
    for &(p, c) in &edges {
        if keep[p] && keep[c] {
            adj[p].insert(c);
            adj[c].insert(p);
        }
    }
    for v in 0..n {
        if !keep[v] {
            continue;
        }
        let parents: Vec<usize> = edges.iter().filter(|e| e.1 == v && keep[e.0]).map(|e| e.0).collect();
        for (i, &x) in parents.iter().enumerate() {
            for &y in &parents[i + 1..] {
                adj[x].insert(y);
                adj[y].insert(x);
            }
        }
    }
    let blocked: BTreeSet<usize> = z.iter().copied().collect();
    let targets: BTreeSet<usize> = b.iter().copied().filter(|x| !blocked.contains(x)).collect();
    let mut seen = vec![false; n];
    let mut stack: Vec<usize> = a.iter().copied().filter(|x| !blocked.contains(x)).collect();
    while let Some(v) = stack.pop() {
        if seen[v] {
            continue;
        }
        seen[v] = true;
        if targets.contains(&v) {
            return false;
        }
        for &w in &adj[v] {
            if !seen[w] && !blocked.contains(&w) {
                stack.push(w);
            }
        }
    }
    true
}

/// The smallest `B ⊆ observed` with `u ⟂ observed \ B | B ∪ extra`, by
/// exhaustive search in order of size; `None` if several of that size work.
pub fn brute_force_boundary(g: &AugmentedGraph, u: usize, observed: &[usize], extra: &[usize]) -> Option<Vec<usize>> {
    let k = observed.len();
    assert!(k <= 16, "exhaustive search over {k} variables");
    for size in 0..=k {
        let mut found: Vec<Vec<usize>> = Vec::new();
        for bits in 0u32..(1 << k) {
            if bits.count_ones() as usize != size {
                continue;
            }
            let b: Vec<usize> = (0..k).filter(|i| bits >> i & 1 == 1).map(|i| observed[i]).collect();
            let rest: Vec<usize> = observed.iter().copied().filter(|v| !b.contains(v)).collect();
            let mut z = b.clone();
            z.extend(extra.iter().copied().filter(|x| !observed.contains(x)));
            if rest.is_empty() || d_separated_moral(g, &[u], &rest, &z) {
                found.push(b);
            }
        }
        match found.len() {
            0 => continue,
            1 => {
                let mut b = found.pop().expect("one element");
                b.sort_unstable();
                return Some(b);
            }
            _ => return None,
        }
    }
    unreachable!("the full observed set always separates")
}

/// Exact probability of `event` by summing the prior mass of every
/// exogenous configuration. Requires all-discrete exogenous variables.
pub fn enumerate(scm: &Scm, event: &CtfEvent) -> f64 {
    let cards: Vec<usize> = scm
        .exo_dist()
        .marginals
        .iter()
        .map(|m| m.cardinality().expect("discrete exogenous variable"))
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

/// Size of the exogenous domain of an all-discrete SCM.
pub fn exogenous_domain_size(scm: &Scm) -> Option<usize> {
    scm.exo_dist()
        .marginals
        .iter()
        .map(|m| m.cardinality())
        .try_fold(1usize, |acc, c| c.map(|c| acc * c))
}

/// Two-sample Kolmogorov–Smirnov statistic and asymptotic p-value.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> (f64, f64) {
    let mut x = a.to_vec();
    let mut y = b.to_vec();
    x.sort_by(f64::total_cmp);
    y.sort_by(f64::total_cmp);
    let (n, m) = (x.len(), y.len());
    let (mut i, mut j, mut d) = (0, 0, 0.0f64);
    while i < n && j < m {
        let v = x[i].min(y[j]);
        while i < n && x[i] <= v {
            i += 1;
        }
        while j < m && y[j] <= v {
            j += 1;
        }
        d = d.max((i as f64 / n as f64 - j as f64 / m as f64).abs());
    }
    let ne = (n * m) as f64 / (n + m) as f64;
    let lambda = (ne.sqrt() + 0.12 + 0.11 / ne.sqrt()) * d;
    (d, kolmogorov_q(lambda))
}

/// `Q_KS(λ) = 2 Σ_{k≥1} (-1)^{k-1} exp(-2 k² λ²)`.
pub fn kolmogorov_q(lambda: f64) -> f64 {
    if lambda < 1e-3 {
        return 1.0;
    }
    let mut s = 0.0;
    for k in 1..=200 {
        let k = k as f64;
        let term = (-2.0 * k * k * lambda * lambda).exp();
        s += if k as i64 % 2 == 1 { term } else { -term };
        if term < 1e-16 {
            break;
        }
    }
    (2.0 * s).clamp(0.0, 1.0)
}

/// Checks every zoo SCM's counterfactual Markov boundaries against
/// [`brute_force_boundary`] on each mutilated submodel, and that the union
/// is the flattened per-submodel sets. Returns the number of boundaries
/// checked.
pub fn check_zoo_boundaries<R: Rng>(rng: &mut R) -> Result<usize, String> {
    let mut checked = 0;
    for name in zoo::names() {
        let scm = zoo::load(name).unwrap();
        let graph = augmented_graph(&scm);
        let mut states: Vec<CtfVariableSet> = Vec::new();
        for k in 1..=3 {
            for _ in 0..6 {
                states.push(Process::bernoulli(k).sample_state(&scm, rng).unwrap());
            }
        }
        if scm.roles().is_some() {
            for q in [QueryKind::Ate, QueryKind::Ett, QueryKind::Nde, QueryKind::Ctfde] {
                if let Ok(s) = query_states(&scm, q) {
                    states.extend(s);
                }
            }
        }
        for strategy in [CutStrategy::EndoCut, CutStrategy::AllCut, CutStrategy::NoCut] {
            for state in &states {
                let bs = counterfactual_markov_boundary(&scm, state, strategy).map_err(|e| e.to_string())?;
                if bs.len() != scm.n_exo() {
                    return Err(format!("{name}: {} boundaries for {} exogenous variables", bs.len(), scm.n_exo()));
                }
                for b in &bs {
                    let mut union = Vec::new();
                    for (i, group) in state.groups.iter().enumerate() {
                        let iv: Vec<usize> = group.intervention.variables().collect();
                        let g = graph.mutilate(&iv, strategy).unwrap();
                        let oracle = brute_force_boundary(&g, graph.exo_node(b.exo_var), &group.observed, &iv)
                            .ok_or_else(|| format!("{name}: minimal boundary not unique"))?;
                        if b.per_submodel[i] != oracle {
                            return Err(format!(
                                "{name} {strategy:?} U{} group {i}: {:?} vs oracle {oracle:?}",
                                b.exo_var, b.per_submodel[i]
                            ));
                        }
                        union.extend(oracle.iter().map(|&v| (i, v)));
                    }
                    if b.union != union {
                        return Err(format!("{name}: union differs from the per-submodel boundaries"));
                    }
                    checked += 1;
                }
            }
        }
    }
    Ok(checked)
}

/// A random DAG on `n` nodes with edge probability `p`.
pub fn random_dag<R: Rng>(rng: &mut R, n: usize, p: f64) -> AugmentedGraph {
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(rng);
    let mut edges = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            if rng.random::<f64>() < p {
                edges.push((perm[i], perm[j]));
            }
        }
    }
    AugmentedGraph::dag(n, &edges)
}
