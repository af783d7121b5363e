//! Augmented causal graphs, intervention mutilation, d-separation and
//! counterfactual Markov boundaries.
//!
//! Nodes are numbered with endogenous variables first (`0..n_endo`) and
//! exogenous variables after them (`n_endo..n_endo + n_exo`).

use std::collections::VecDeque;
use std::fmt::Write as _;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::events::CtfVariableSet;
use crate::scm::Scm;

/// Which incoming edges of an intervened variable are removed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CutStrategy {
    /// Remove every incoming edge.
    AllCut,
    /// Keep the graph unchanged.
    NoCut,
    /// Remove endogenous-parent edges, keep exogenous ones.
    #[default]
    EndoCut,
}

impl FromStr for CutStrategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "all" | "all-cut" | "allcut" => Ok(CutStrategy::AllCut),
            "no" | "no-cut" | "nocut" => Ok(CutStrategy::NoCut),
            "endo" | "endo-cut" | "endocut" => Ok(CutStrategy::EndoCut),
            _ => Err(Error::Config(format!("unknown cut strategy `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AugmentedGraph {
    n_endo: usize,
    names: Vec<String>,
    parents: Vec<Vec<usize>>,
    children: Vec<Vec<usize>>,
}

/// The augmented graph of `scm`: `U ∪ V` with edges from every endogenous
/// and exogenous parent.
pub fn augmented_graph(scm: &Scm) -> AugmentedGraph {
    let n = scm.n_endo();
    let mut names: Vec<String> = scm.endo_vars().iter().map(|v| v.name.clone()).collect();
    names.extend(scm.exo_names().iter().cloned());
    let mut edges = Vec::new();
    for m in scm.mechanisms() {
        edges.extend(m.endo_parents.iter().map(|&p| (p, m.target)));
        edges.extend(m.exo_parents.iter().map(|&j| (n + j, m.target)));
    }
    AugmentedGraph::from_edges(n, names, &edges)
}

impl AugmentedGraph {
    /// Builds a graph over `names.len()` nodes, the first `n_endo` of which
    /// are endogenous. Duplicate edges are collapsed.
    pub fn from_edges(n_endo: usize, names: Vec<String>, edges: &[(usize, usize)]) -> Self {
        let n = names.len();
        let mut parents = vec![Vec::new(); n];
        let mut children = vec![Vec::new(); n];
        for &(a, b) in edges {
            if !children[a].contains(&b) {
                children[a].push(b);
                parents[b].push(a);
            }
        }
        for l in parents.iter_mut().chain(children.iter_mut()) {
            l.sort_unstable();
        }
        Self {
            n_endo,
            names,
            parents,
            children,
        }
    }

    /// A plain DAG with every node treated as endogenous.
    pub fn dag(n: usize, edges: &[(usize, usize)]) -> Self {
        Self::from_edges(n, (0..n).map(|i| format!("N{i}")).collect(), edges)
    }

    pub fn n_nodes(&self) -> usize {
        self.names.len()
    }

    pub fn n_endo(&self) -> usize {
        self.n_endo
    }

    pub fn exo_node(&self, j: usize) -> usize {
        self.n_endo + j
    }

    pub fn is_exogenous(&self, node: usize) -> bool {
        node >= self.n_endo
    }

    pub fn name(&self, node: usize) -> &str {
        &self.names[node]
    }

    pub fn parents(&self, node: usize) -> &[usize] {
        &self.parents[node]
    }

    pub fn children(&self, node: usize) -> &[usize] {
        &self.children[node]
    }

    pub fn edges(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for (a, cs) in self.children.iter().enumerate() {
            out.extend(cs.iter().map(|&b| (a, b)));
        }
        out
    }

    pub fn n_edges(&self) -> usize {
        self.children.iter().map(Vec::len).sum()
    }

    pub fn has_edge(&self, a: usize, b: usize) -> bool {
        self.children[a].binary_search(&b).is_ok()
    }

    pub fn is_acyclic(&self) -> bool {
        let mut indeg: Vec<usize> = self.parents.iter().map(Vec::len).collect();
        let mut queue: VecDeque<usize> = (0..self.n_nodes()).filter(|&i| indeg[i] == 0).collect();
        let mut seen = 0;
        while let Some(i) = queue.pop_front() {
            seen += 1;
            for &c in &self.children[i] {
                indeg[c] -= 1;
                if indeg[c] == 0 {
                    queue.push_back(c);
                }
            }
        }
        seen == self.n_nodes()
    }

    /// Removes incoming edges of the endogenous nodes in `targets` according
    /// to `strategy`.
    pub fn mutilate(&self, targets: &[usize], strategy: CutStrategy) -> Result<Self> {
        for &t in targets {
            if t >= self.n_endo {
                return Err(Error::UnknownVariable(format!("endogenous node #{t}")));
            }
        }
        if strategy == CutStrategy::NoCut || targets.is_empty() {
            return Ok(self.clone());
        }
        let edges: Vec<(usize, usize)> = self
            .edges()
            .into_iter()
            .filter(|&(a, b)| {
                !targets.contains(&b)
                    || match strategy {
                        CutStrategy::AllCut => false,
                        CutStrategy::EndoCut => self.is_exogenous(a),
                        CutStrategy::NoCut => true,
                    }
            })
            .collect();
        Ok(Self::from_edges(self.n_endo, self.names.clone(), &edges))
    }

    fn ancestors_of(&self, z: &[bool]) -> Vec<bool> {
        let mut anc = z.to_vec();
        let mut stack: Vec<usize> = (0..self.n_nodes()).filter(|&i| z[i]).collect();
        while let Some(i) = stack.pop() {
            for &p in &self.parents[i] {
                if !anc[p] {
                    anc[p] = true;
                    stack.push(p);
                }
            }
        }
        anc
    }

    /// Nodes d-connected to any node of `a` given `z` (Bayes-ball
    /// reachability, linear in the number of edges).
    pub fn reachable(&self, a: &[usize], z: &[usize]) -> Vec<bool> {
        let n = self.n_nodes();
        let mut in_z = vec![false; n];
        for &i in z {
            in_z[i] = true;
        }
        let anc = self.ancestors_of(&in_z);
        // visited[node][0]: arrived from a child (travelling up)
        // visited[node][1]: arrived from a parent (travelling down)
        let mut visited = vec![[false; 2]; n];
        let mut reached = vec![false; n];
        let mut queue: VecDeque<(usize, usize)> = a.iter().map(|&i| (i, 0)).collect();
        while let Some((node, dir)) = queue.pop_front() {
            if visited[node][dir] {
                continue;
            }
            visited[node][dir] = true;
            if !in_z[node] {
                reached[node] = true;
            }
            if dir == 0 {
                if !in_z[node] {
                    queue.extend(self.parents[node].iter().map(|&p| (p, 0)));
                    queue.extend(self.children[node].iter().map(|&c| (c, 1)));
                }
            } else {
                if !in_z[node] {
                    queue.extend(self.children[node].iter().map(|&c| (c, 1)));
                }
                if anc[node] {
                    queue.extend(self.parents[node].iter().map(|&p| (p, 0)));
                }
            }
        }
        reached
    }

    /// Whether `a ⟂ b | z`. Nodes of `b` that also lie in `z` are ignored.
    pub fn d_separated(&self, a: &[usize], b: &[usize], z: &[usize]) -> bool {
        let reached = self.reachable(a, z);
        !b.iter().any(|&i| reached[i] && !z.contains(&i))
    }

    /// Graphviz rendering; exogenous nodes are drawn as dashed circles.
    pub fn to_dot(&self) -> String {
        let mut s = String::from("digraph G {\n");
        for (i, name) in self.names.iter().enumerate() {
            let style = if self.is_exogenous(i) { "circle, style=dashed" } else { "box" };
            let _ = writeln!(s, "  n{i} [label=\"{name}\", shape={style}];");
        }
        for (a, b) in self.edges() {
            let _ = writeln!(s, "  n{a} -> n{b};");
        }
        s.push_str("}\n");
        s
    }
}

/// Causal graph over endogenous variables only, rendered as DOT; confounding
/// through shared exogenous parents is drawn as dashed bidirected edges.
pub fn causal_dot(scm: &Scm) -> String {
    let mut s = String::from("digraph G {\n");
    for (i, v) in scm.endo_vars().iter().enumerate() {
        let _ = writeln!(s, "  n{i} [label=\"{}\", shape=box];", v.name);
    }
    for m in scm.mechanisms() {
        for &p in &m.endo_parents {
            let _ = writeln!(s, "  n{p} -> n{};", m.target);
        }
    }
    for j in 0..scm.n_exo() {
        let users: Vec<usize> = scm
            .mechanisms()
            .iter()
            .filter(|m| m.exo_parents.contains(&j))
            .map(|m| m.target)
            .collect();
        for (x, &a) in users.iter().enumerate() {
            for &b in &users[x + 1..] {
                let _ = writeln!(s, "  n{a} -> n{b} [dir=both, style=dashed];");
            }
        }
    }
    s.push_str("}\n");
    s
}

/// Minimal `B ⊆ observed` with `u_node ⟂ (observed \ B) | B ∪ intervened`
/// in `graph`, found by grow-shrink. `graph` should already be mutilated.
pub fn markov_boundary_in(graph: &AugmentedGraph, u_node: usize, observed: &[usize], intervened: &[usize]) -> Vec<usize> {
    let cond = |b: &[usize]| -> Vec<usize> {
        let mut z = b.to_vec();
        z.extend(intervened.iter().copied().filter(|x| !observed.contains(x)));
        z
    };
    let mut boundary: Vec<usize> = Vec::new();
    loop {
        let reached = graph.reachable(&[u_node], &cond(&boundary));
        let next = observed.iter().copied().find(|v| !boundary.contains(v) && reached[*v]);
        match next {
            Some(v) => boundary.push(v),
            None => break,
        }
    }
    let mut i = 0;
    while i < boundary.len() {
        let v = boundary[i];
        let rest: Vec<usize> = boundary.iter().copied().filter(|&w| w != v).collect();
        if graph.d_separated(&[u_node], &[v], &cond(&rest)) {
            boundary.remove(i);
        } else {
            i += 1;
        }
    }
    boundary.sort_unstable();
    boundary
}

/// Boundary of one exogenous variable over all submodels of a `Y_*`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MarkovBoundary {
    pub exo_var: usize,
    /// `B_i ⊆ Y_i` per group, as endogenous indices.
    pub per_submodel: Vec<Vec<usize>>,
    /// `∪_i B_i` as `(group, endogenous index)` pairs.
    pub union: Vec<(usize, usize)>,
}

/// Boundary of `U_j` in a single submodel with the given observed and
/// intervened variables.
pub fn submodel_boundary(
    graph: &AugmentedGraph,
    exo_var: usize,
    observed: &[usize],
    intervened: &[usize],
    strategy: CutStrategy,
) -> Result<Vec<usize>> {
    let g = graph.mutilate(intervened, strategy)?;
    Ok(markov_boundary_in(&g, graph.exo_node(exo_var), observed, intervened))
}

/// Counterfactual Markov boundaries of every exogenous variable, computed
/// per submodel and united across submodels.
pub fn counterfactual_markov_boundary(
    scm: &Scm,
    ctf_vars: &CtfVariableSet,
    strategy: CutStrategy,
) -> Result<Vec<MarkovBoundary>> {
    let graph = augmented_graph(scm);
    let mutilated: Vec<AugmentedGraph> = ctf_vars
        .groups
        .iter()
        .map(|g| graph.mutilate(&g.intervention.variables().collect::<Vec<_>>(), strategy))
        .collect::<Result<_>>()?;
    let mut out = Vec::with_capacity(scm.n_exo());
    for j in 0..scm.n_exo() {
        let mut per_submodel = Vec::with_capacity(ctf_vars.k());
        let mut union = Vec::new();
        for (i, (group, g)) in ctf_vars.groups.iter().zip(&mutilated).enumerate() {
            let iv: Vec<usize> = group.intervention.variables().collect();
            let b = markov_boundary_in(g, graph.exo_node(j), &group.observed, &iv);
            union.extend(b.iter().map(|&v| (i, v)));
            per_submodel.push(b);
        }
        out.push(MarkovBoundary {
            exo_var: j,
            per_submodel,
            union,
        });
    }
    Ok(out)
}
