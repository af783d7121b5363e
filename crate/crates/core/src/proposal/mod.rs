//! Conditional proposal distributions `Q_{U|y_*}`.
//!
//! Every exogenous variable `U_j` owns a branch: a maskable encoder applied
//! to each group's conditioning vector (masked to the group's Markov
//! boundary of `U_j`), an aggregator over groups and an output layer giving
//! the slice `θ_j`. A density head (GMM or MAF) turns the slices into a
//! density over `u`. The GMM additionally uses one unmasked shared branch
//! for its component logits.

pub mod conditioning;
pub mod gmm;
pub mod maf;

use std::fmt;
use std::rc::Rc;
use std::str::FromStr;
use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

pub use conditioning::{encode_event, encode_group, MaskProvider, Standardizer};
pub use gmm::GmmHead;
pub use maf::MafHead;

use crate::error::{Error, Result};
use crate::events::CtfVariableSet;
use crate::graphs::CutStrategy;
use crate::nn::{Activation, Graph, MaskableMlp, ParamSet, Tensor, Var};
use crate::scm::{Marginal, Scm};

/// Density head hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum HeadConfig {
    Gmm { components: usize },
    Maf { transforms: usize, hidden: usize, context: usize },
}

impl HeadConfig {
    pub const GMM: HeadConfig = HeadConfig::Gmm { components: 10 };
    pub const MAF: HeadConfig = HeadConfig::Maf {
        transforms: 5,
        hidden: 64,
        context: 8,
    };
}

impl fmt::Display for HeadConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            HeadConfig::Gmm { .. } => f.write_str("gmm"),
            HeadConfig::Maf { .. } => f.write_str("maf"),
        }
    }
}

impl FromStr for HeadConfig {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "gmm" => Ok(HeadConfig::GMM),
            "maf" => Ok(HeadConfig::MAF),
            _ => Err(Error::Config(format!("unknown density head `{s}`"))),
        }
    }
}

/// How per-group encodings are pooled into one vector per event.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AggregatorKind {
    /// Zero-padded concatenation in group order; not permutation invariant.
    Concatenation { max_k: usize },
    Summation,
    /// Softmax over groups of a learned per-feature weight.
    WeightedSummation,
    /// Softmax over groups of `e ⊙ a(c)`, pooling the encodings.
    Attention,
}

impl Default for AggregatorKind {
    fn default() -> Self {
        AggregatorKind::Attention
    }
}

impl fmt::Display for AggregatorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AggregatorKind::Concatenation { .. } => f.write_str("concatenation"),
            AggregatorKind::Summation => f.write_str("summation"),
            AggregatorKind::WeightedSummation => f.write_str("weighted-summation"),
            AggregatorKind::Attention => f.write_str("attention"),
        }
    }
}

impl FromStr for AggregatorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('_', "-").as_str() {
            "concatenation" | "concat" => Ok(AggregatorKind::Concatenation { max_k: 4 }),
            "summation" | "sum" => Ok(AggregatorKind::Summation),
            "weighted-summation" | "wsum" => Ok(AggregatorKind::WeightedSummation),
            "attention" | "attn" => Ok(AggregatorKind::Attention),
            _ => Err(Error::Config(format!("unknown aggregator `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProposalConfig {
    pub head: HeadConfig,
    pub aggregator: AggregatorKind,
    pub hidden: usize,
    /// Hidden layers of each encoder.
    pub layers: usize,
    /// `None` disables boundary masks.
    pub mask: Option<CutStrategy>,
    /// Whether GMM scales are masked alongside the means.
    pub mask_gmm_scales: bool,
    /// Forward samples used for conditioning-value statistics.
    pub pilot_samples: usize,
}

impl Default for ProposalConfig {
    fn default() -> Self {
        Self {
            head: HeadConfig::GMM,
            aggregator: AggregatorKind::Attention,
            hidden: 64,
            layers: 2,
            mask: Some(CutStrategy::EndoCut),
            mask_gmm_scales: true,
            pilot_samples: 4096,
        }
    }
}

/// Standardization and support of one exogenous coordinate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExoCoord {
    /// `Some(c)` for a discrete coordinate with values `0..c`.
    pub categories: Option<usize>,
    pub mean: f64,
    pub std: f64,
}

impl ExoCoord {
    pub fn from_marginal(m: &Marginal) -> Self {
        match m.cardinality() {
            Some(c) => Self {
                categories: Some(c),
                mean: 0.0,
                std: 1.0,
            },
            None => {
                let (mean, std) = m.moments();
                Self {
                    categories: None,
                    mean,
                    std,
                }
            }
        }
    }

    pub fn standardize(&self, x: f64) -> f64 {
        (x - self.mean) / self.std
    }

    pub fn unstandardize(&self, z: f64) -> f64 {
        z * self.std + self.mean
    }
}

/// Head parameters inside a graph: one slice per exogenous variable plus the
/// optional shared slice.
#[derive(Debug, Clone)]
pub struct Theta {
    pub per_exo: Vec<Var>,
    pub shared: Option<Var>,
}

/// Rows per evaluation pass in `log_q` and `sample_q`, bounding memory.
const EVAL_CHUNK: usize = 8192;

/// Evaluated head parameters for a batch of conditioning events.
#[derive(Debug, Clone, PartialEq)]
pub struct ProposalParams {
    pub rows: usize,
    pub per_exo: Vec<Tensor>,
    pub shared: Option<Tensor>,
}

impl ProposalParams {
    /// Repeats a single row `n` times; other sizes must already equal `n`.
    fn broadcast(&self, n: usize) -> Result<ProposalParams> {
        if self.rows == n {
            return Ok(self.clone());
        }
        if self.rows != 1 {
            return Err(Error::ShapeMismatch(format!("{} parameter rows for {n} samples", self.rows)));
        }
        let rep = |t: &Tensor| Tensor {
            rows: n,
            cols: t.cols,
            data: t.data.repeat(n),
        };
        Ok(ProposalParams {
            rows: n,
            per_exo: self.per_exo.iter().map(rep).collect(),
            shared: self.shared.as_ref().map(rep),
        })
    }

    /// Rows `start..end`; single-row parameters are returned unchanged.
    fn rows_range(&self, start: usize, end: usize) -> ProposalParams {
        if self.rows == 1 {
            return self.clone();
        }
        let pick = |t: &Tensor| Tensor {
            rows: end - start,
            cols: t.cols,
            data: t.data[start * t.cols..end * t.cols].to_vec(),
        };
        ProposalParams {
            rows: end - start,
            per_exo: self.per_exo.iter().map(pick).collect(),
            shared: self.shared.as_ref().map(pick),
        }
    }

    /// Parameters of a single row.
    pub fn row(&self, i: usize) -> ProposalParams {
        let pick = |t: &Tensor| Tensor {
            rows: 1,
            cols: t.cols,
            data: t.row(i).to_vec(),
        };
        ProposalParams {
            rows: 1,
            per_exo: self.per_exo.iter().map(pick).collect(),
            shared: self.shared.as_ref().map(pick),
        }
    }
}

/// Stacked conditioning vectors for a batch of events.
#[derive(Debug, Clone)]
pub struct Conditioning {
    /// One row per group, `3·n_endo` columns.
    pub c: Tensor,
    /// Event `e` owns rows `offsets[e]..offsets[e + 1]`.
    pub offsets: Rc<[usize]>,
    /// Per exogenous variable, a row mask aligned with `c`.
    pub masks: Option<Vec<Tensor>>,
}

impl Conditioning {
    pub fn events(&self) -> usize {
        self.offsets.len() - 1
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Branch {
    encoder: MaskableMlp,
    weight: Option<MaskableMlp>,
    attention: Option<MaskableMlp>,
    out: MaskableMlp,
}

impl Branch {
    fn new<R: Rng + ?Sized>(
        ps: &mut ParamSet,
        name: &str,
        config: &ProposalConfig,
        width: usize,
        out_dim: usize,
        rng: &mut R,
    ) -> Self {
        let h = config.hidden;
        let mut dims = vec![width];
        dims.extend(std::iter::repeat_n(h, config.layers.max(1)));
        let encoder = MaskableMlp::new(ps, &format!("{name}.enc"), &dims, Activation::Tanh, Activation::Tanh, false, rng);
        let weight = matches!(config.aggregator, AggregatorKind::WeightedSummation).then(|| {
            MaskableMlp::new(ps, &format!("{name}.w"), &[h, h], Activation::Identity, Activation::Identity, false, rng)
        });
        let attention = matches!(config.aggregator, AggregatorKind::Attention).then(|| {
            MaskableMlp::new(ps, &format!("{name}.a"), &[width, h], Activation::Identity, Activation::Identity, false, rng)
        });
        let pooled = match config.aggregator {
            AggregatorKind::Concatenation { max_k } => h * max_k,
            _ => h,
        };
        let out = MaskableMlp::new(ps, &format!("{name}.out"), &[pooled, out_dim], Activation::Identity, Activation::Identity, false, rng);
        Self {
            encoder,
            weight,
            attention,
            out,
        }
    }

    fn forward(
        &self,
        g: &mut Graph,
        ps: &ParamSet,
        aggregator: AggregatorKind,
        c: Var,
        cond: &Conditioning,
        mask: Option<&Tensor>,
    ) -> Result<Var> {
        let e = self.encoder.forward(g, ps, c, mask)?;
        let pooled = match aggregator {
            AggregatorKind::Summation => g.segment_sum(e, cond.offsets.clone())?,
            AggregatorKind::WeightedSummation => {
                let w = self.weight.as_ref().expect("weighted branch").forward(g, ps, e, None)?;
                let a = g.segment_softmax(w, cond.offsets.clone())?;
                let ae = g.mul(a, e)?;
                g.segment_sum(ae, cond.offsets.clone())?
            }
            AggregatorKind::Attention => {
                let kappa = self.attention.as_ref().expect("attention branch").forward(g, ps, c, mask)?;
                let s = g.mul(e, kappa)?;
                let a = g.segment_softmax(s, cond.offsets.clone())?;
                let ae = g.mul(a, e)?;
                g.segment_sum(ae, cond.offsets.clone())?
            }
            AggregatorKind::Concatenation { max_k } => {
                let mut idx = Vec::with_capacity(cond.events() * max_k);
                for w in cond.offsets.windows(2) {
                    let k = w[1] - w[0];
                    if k > max_k {
                        return Err(Error::TooManyGroups { got: k, max: max_k });
                    }
                    idx.extend((0..max_k).map(|s| (s < k).then_some(w[0] + s)));
                }
                let h = g.shape(e).1;
                let gathered = g.gather_rows(e, idx.into())?;
                g.reshape(gathered, cond.events(), max_k * h)?
            }
        };
        self.out.forward(g, ps, pooled, None)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum Head {
    Gmm(GmmHead),
    Maf(MafHead),
}

/// A conditional density model over the exogenous variables of one SCM.
#[derive(Debug, Serialize, Deserialize)]
pub struct ConditionalProposal {
    pub config: ProposalConfig,
    pub scm_hash: String,
    pub n_endo: usize,
    pub coords: Vec<ExoCoord>,
    pub cond_std: Standardizer,
    pub params: ParamSet,
    branches: Vec<Branch>,
    shared: Option<Branch>,
    head: Head,
    #[serde(skip)]
    masks: Option<MaskProvider>,
}

impl ConditionalProposal {
    pub fn new<R: Rng + ?Sized>(scm: &Scm, config: ProposalConfig, rng: &mut R) -> Result<Self> {
        if config.hidden == 0 {
            return Err(Error::Config("hidden width must be positive".into()));
        }
        if let AggregatorKind::Concatenation { max_k: 0 } = config.aggregator {
            return Err(Error::Config("concatenation needs max_k >= 1".into()));
        }
        let coords: Vec<ExoCoord> = scm.exo_dist().marginals.iter().map(ExoCoord::from_marginal).collect();
        let n = scm.n_endo();
        let width = 3 * n;
        let cond_std = Standardizer::from_scm(scm, config.pilot_samples.max(2), 0x5eed_5eed);
        let mut ps = ParamSet::new();
        let (head, dims, shared_dim) = match config.head {
            HeadConfig::Gmm { components } => {
                if components == 0 {
                    return Err(Error::Config("a GMM needs at least one component".into()));
                }
                let h = GmmHead {
                    components,
                    mask_scales: config.mask_gmm_scales,
                };
                let dims: Vec<usize> = coords.iter().map(|c| h.exo_dim(c)).collect();
                let sd = h.shared_dim(&coords);
                (Head::Gmm(h), dims, Some(sd))
            }
            HeadConfig::Maf {
                transforms,
                hidden,
                context,
            } => {
                if transforms == 0 || context == 0 {
                    return Err(Error::Config("a MAF needs transforms and context width".into()));
                }
                let h = MafHead::new(&mut ps, &coords, transforms, hidden, context, rng);
                let dims: Vec<usize> = coords.iter().map(|c| h.exo_dim(c)).collect();
                (Head::Maf(h), dims, None)
            }
        };
        let branches = dims
            .iter()
            .enumerate()
            .map(|(j, &d)| Branch::new(&mut ps, &format!("u{j}"), &config, width, d, rng))
            .collect();
        let shared = shared_dim.map(|d| Branch::new(&mut ps, "shared", &config, width, d, rng));
        let mut model = Self {
            config,
            scm_hash: scm.hash().to_string(),
            n_endo: n,
            coords,
            cond_std,
            params: ps,
            branches,
            shared,
            head,
            masks: None,
        };
        model.attach(scm)?;
        Ok(model)
    }

    /// Binds the model to `scm` (rebuilding the mask cache); rejects a
    /// different SCM.
    pub fn attach(&mut self, scm: &Scm) -> Result<()> {
        if scm.hash() != self.scm_hash {
            return Err(Error::Checkpoint(format!(
                "model was built for SCM hash {}, got {} ({})",
                self.scm_hash,
                scm.hash(),
                scm.name()
            )));
        }
        self.masks = self.config.mask.map(|s| MaskProvider::new(scm, s));
        Ok(())
    }

    pub fn n_exo(&self) -> usize {
        self.coords.len()
    }

    /// Width of `θ_j` for every exogenous variable.
    pub fn theta_dims(&self) -> Vec<usize> {
        self.coords
            .iter()
            .map(|c| match &self.head {
                Head::Gmm(h) => h.exo_dim(c),
                Head::Maf(h) => h.exo_dim(c),
            })
            .collect()
    }

    /// Boundary masks of one group shape, one per exogenous variable.
    pub fn group_masks(&self, vars: &CtfVariableSet, group: usize) -> Result<Option<Arc<Vec<Vec<f64>>>>> {
        match (&self.config.mask, &self.masks) {
            (None, _) => Ok(None),
            (Some(_), Some(p)) => p.group_masks(&vars.groups[group]).map(Some),
            (Some(_), None) => Err(Error::Config("proposal is not attached to an SCM".into())),
        }
    }

    /// Encodes a batch of `(variables, flattened observed values)` pairs.
    pub fn conditioning(&self, items: &[(&CtfVariableSet, &[f64])]) -> Result<Conditioning> {
        if items.is_empty() {
            return Err(Error::EmptyInput);
        }
        let width = 3 * self.n_endo;
        let mut rows = Vec::new();
        let mut offsets = vec![0usize];
        let mut masks = self.config.mask.map(|_| vec![Vec::new(); self.n_exo()]);
        for (vars, y) in items {
            if vars.k() == 0 {
                return Err(Error::EmptyInput);
            }
            let enc = encode_event(self.n_endo, vars, y, Some(&self.cond_std))?;
            for (gi, row) in enc.into_iter().enumerate() {
                rows.extend(row);
                if let Some(ms) = masks.as_mut() {
                    let gm = self.group_masks(vars, gi)?.expect("masks enabled");
                    for (j, m) in ms.iter_mut().enumerate() {
                        m.extend_from_slice(&gm[j]);
                    }
                }
            }
            offsets.push(offsets.last().unwrap() + vars.k());
        }
        let g = *offsets.last().unwrap();
        let masks = masks
            .map(|ms| ms.into_iter().map(|m| Tensor::from_vec(g, width, m)).collect::<Result<Vec<_>>>())
            .transpose()?;
        Ok(Conditioning {
            c: Tensor::from_vec(g, width, rows)?,
            offsets: offsets.into(),
            masks,
        })
    }

    /// Records `θ` for the conditioning batch with `c` already on the graph.
    pub fn theta_graph(&self, g: &mut Graph, c: Var, cond: &Conditioning) -> Result<Theta> {
        let agg = self.config.aggregator;
        let per_exo = self
            .branches
            .iter()
            .enumerate()
            .map(|(j, b)| b.forward(g, &self.params, agg, c, cond, cond.masks.as_ref().map(|m| &m[j])))
            .collect::<Result<Vec<_>>>()?;
        let shared = match &self.shared {
            Some(b) => Some(b.forward(g, &self.params, agg, c, cond, None)?),
            None => None,
        };
        Ok(Theta { per_exo, shared })
    }

    /// `log q(u_i | θ_i)` for aligned rows of `theta` and `u`, as a `B × 1`
    /// graph node on the original exogenous scale.
    pub fn log_q_graph(&self, g: &mut Graph, theta: &Theta, u: &[Vec<f64>]) -> Result<Var> {
        for row in u {
            if row.len() != self.n_exo() {
                return Err(Error::ShapeMismatch(format!(
                    "exogenous assignment of width {} for {} variables",
                    row.len(),
                    self.n_exo()
                )));
            }
        }
        match &self.head {
            Head::Gmm(h) => h.log_q(g, theta, &self.coords, u),
            Head::Maf(h) => h.log_q(g, &self.params, theta, &self.coords, u),
        }
    }

    /// Evaluates `θ` for a batch of events.
    pub fn condition(&self, items: &[(&CtfVariableSet, &[f64])]) -> Result<ProposalParams> {
        let cond = self.conditioning(items)?;
        let mut g = Graph::new();
        let c = g.input(cond.c.clone());
        let theta = self.theta_graph(&mut g, c, &cond)?;
        Ok(ProposalParams {
            rows: cond.events(),
            per_exo: theta.per_exo.iter().map(|&v| g.value(v).clone()).collect(),
            shared: theta.shared.map(|v| g.value(v).clone()),
        })
    }

    /// Parameters for a single event.
    pub fn condition_one(&self, vars: &CtfVariableSet, y: &[f64]) -> Result<ProposalParams> {
        self.condition(&[(vars, y)])
    }

    fn params_on_graph(&self, g: &mut Graph, params: &ProposalParams) -> Theta {
        Theta {
            per_exo: params.per_exo.iter().map(|t| g.input(t.clone())).collect(),
            shared: params.shared.as_ref().map(|t| g.input(t.clone())),
        }
    }

    /// Log-densities of `u`; single-row parameters are shared by every row.
    pub fn log_q(&self, params: &ProposalParams, u: &[Vec<f64>]) -> Result<Vec<f64>> {
        if params.rows != 1 && params.rows != u.len() {
            return Err(Error::ShapeMismatch(format!("{} parameter rows for {} samples", params.rows, u.len())));
        }
        let mut out = Vec::with_capacity(u.len());
        for start in (0..u.len()).step_by(EVAL_CHUNK) {
            let end = (start + EVAL_CHUNK).min(u.len());
            let chunk = params.rows_range(start, end).broadcast(end - start)?;
            let mut g = Graph::new();
            let theta = self.params_on_graph(&mut g, &chunk);
            let lq = self.log_q_graph(&mut g, &theta, &u[start..end])?;
            out.extend_from_slice(&g.value(lq).data);
        }
        Ok(out)
    }

    /// `n` draws; single-row parameters are shared, otherwise row `i`
    /// parameterizes draw `i`.
    pub fn sample_q<R: Rng + ?Sized>(&self, params: &ProposalParams, n: usize, rng: &mut R) -> Result<Vec<Vec<f64>>> {
        if params.rows != 1 && params.rows != n {
            return Err(Error::ShapeMismatch(format!("{} parameter rows for {n} samples", params.rows)));
        }
        let mut out = Vec::with_capacity(n);
        for start in (0..n).step_by(EVAL_CHUNK) {
            let end = (start + EVAL_CHUNK).min(n);
            let chunk = params.rows_range(start, end).broadcast(end - start)?;
            match &self.head {
                Head::Gmm(h) => {
                    let shared = chunk.shared.as_ref().expect("gmm has a shared branch");
                    out.extend((0..end - start).map(|i| h.sample(&chunk.per_exo, shared, &self.coords, i, rng)));
                }
                Head::Maf(h) => out.extend(h.sample(&self.params, &chunk.per_exo, &self.coords, end - start, rng)?),
            }
        }
        Ok(out)
    }

    pub fn maf(&self) -> Option<&MafHead> {
        match &self.head {
            Head::Maf(h) => Some(h),
            Head::Gmm(_) => None,
        }
    }

    pub fn gmm(&self) -> Option<&GmmHead> {
        match &self.head {
            Head::Gmm(h) => Some(h),
            Head::Maf(_) => None,
        }
    }
}

impl Clone for ConditionalProposal {
    fn clone(&self) -> Self {
        Self {
            config: self.config.clone(),
            scm_hash: self.scm_hash.clone(),
            n_endo: self.n_endo,
            coords: self.coords.clone(),
            cond_std: self.cond_std.clone(),
            params: self.params.clone(),
            branches: self.branches.clone(),
            shared: self.shared.clone(),
            head: self.head.clone(),
            masks: self.masks.as_ref().map(MaskProvider::fresh),
        }
    }
}
