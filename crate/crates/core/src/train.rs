//! The learning loop: maximize `E_s E_{u~P_U} log q(u | Y_*^{(s)}(u))` with
//! AdamW and a reduce-on-plateau schedule.

use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::events::{event_from_state, CtfEvent, CtfVariableSet, EventKind, Process};
use crate::nn::{AdamW, Graph, Plateau, Tensor, Var};
use crate::proposal::{ConditionalProposal, Conditioning, ProposalConfig, Theta};
use crate::scm::Scm;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub dataset_size: usize,
    pub batch_size: usize,
    pub process: Process,
    pub proposal: ProposalConfig,
    pub lr: f64,
    pub weight_decay: f64,
    pub patience: usize,
    pub factor: f64,
    /// Held-out events for the per-epoch validation.
    pub val_events: usize,
    pub val_samples: usize,
    pub val_kind: EventKind,
    /// Failure threshold `m` on the effective-sample proportion.
    pub fr_threshold: f64,
    /// Largest tolerated fraction of examples with a non-finite loss.
    pub max_skip_rate: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 200,
            dataset_size: 16384,
            batch_size: 256,
            process: Process::bernoulli(3),
            proposal: ProposalConfig::default(),
            lr: 1e-3,
            weight_decay: 0.01,
            patience: 5,
            factor: 0.5,
            val_events: 256,
            val_samples: 256,
            val_kind: EventKind::default(),
            fr_threshold: 1e-3,
            max_skip_rate: 0.01,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 || self.dataset_size == 0 || self.dataset_size % self.batch_size != 0 {
            return Err(Error::Config(format!(
                "dataset size {} must be a positive multiple of batch size {}",
                self.dataset_size, self.batch_size
            )));
        }
        if !(self.lr > 0.0) || !(self.factor > 0.0 && self.factor < 1.0) {
            return Err(Error::Config("lr must be positive and factor in (0, 1)".into()));
        }
        if self.val_events == 0 || self.val_samples == 0 {
            return Err(Error::Config("validation needs events and samples".into()));
        }
        self.process.validate()
    }
}

/// Per-epoch record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Mean of `-log q(u | y_*)` over the epoch's kept examples.
    pub objective: f64,
    pub val_esp: f64,
    pub val_fr: f64,
    pub lr: f64,
    pub skipped: usize,
    /// Out-of-boundary conditioning slots that received a nonzero
    /// gradient in the per-epoch spot check; always 0 for a correct model.
    pub mask_violations: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainTrace {
    /// Validation of the untrained model.
    pub initial_esp: f64,
    pub initial_fr: f64,
    pub epochs: Vec<EpochRecord>,
}

impl TrainTrace {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("epoch,objective,val_esp,val_fr,lr,skipped,mask_violations\n");
        for r in &self.epochs {
            writeln!(
                s,
                "{},{},{},{},{},{},{}",
                r.epoch, r.objective, r.val_esp, r.val_fr, r.lr, r.skipped, r.mask_violations
            )
            .expect("writing to a String");
        }
        s
    }
}

/// Training examples: a state, a unit `u ~ P_U` and its responses `y_*`.
#[derive(Debug, Clone)]
pub struct Batch {
    pub states: Vec<CtfVariableSet>,
    pub ys: Vec<Vec<f64>>,
    pub us: Vec<Vec<f64>>,
}

impl Batch {
    pub fn sample<R: Rng + ?Sized>(scm: &Scm, process: &Process, n: usize, rng: &mut R) -> Result<Self> {
        let mut states = Vec::with_capacity(n);
        let mut ys = Vec::with_capacity(n);
        let mut us = Vec::with_capacity(n);
        let mut scratch = vec![0.0; scm.n_endo()];
        for _ in 0..n {
            let s = process.sample_state(scm, rng)?;
            let u = scm.exo_dist().sample_one(rng);
            let mut y = Vec::with_capacity(s.dim());
            s.evaluate_into(scm, &u, &mut scratch, &mut y);
            states.push(s);
            ys.push(y);
            us.push(u);
        }
        Ok(Self { states, ys, us })
    }

    pub fn len(&self) -> usize {
        self.us.len()
    }

    pub fn is_empty(&self) -> bool {
        self.us.is_empty()
    }

    fn subset(&self, keep: &[usize]) -> Batch {
        Batch {
            states: keep.iter().map(|&i| self.states[i].clone()).collect(),
            ys: keep.iter().map(|&i| self.ys[i].clone()).collect(),
            us: keep.iter().map(|&i| self.us[i].clone()).collect(),
        }
    }

    pub fn items(&self) -> Vec<(&CtfVariableSet, &[f64])> {
        self.states.iter().zip(&self.ys).map(|(s, y)| (s, y.as_slice())).collect()
    }
}

/// The recorded objective of one batch.
pub struct Objective {
    pub graph: Graph,
    pub cond: Conditioning,
    pub c: Var,
    pub theta: Theta,
    pub log_q: Var,
    pub loss: Var,
}

/// Records `-mean log q(u | y_*)`; with `track_c` the conditioning matrix
/// receives a gradient too.
pub fn objective(model: &ConditionalProposal, batch: &Batch, track_c: bool) -> Result<Objective> {
    let cond = model.conditioning(&batch.items())?;
    let mut g = Graph::new();
    let c = if track_c {
        g.input_with_grad(cond.c.clone())
    } else {
        g.input(cond.c.clone())
    };
    let theta = model.theta_graph(&mut g, c, &cond)?;
    let log_q = model.log_q_graph(&mut g, &theta, &batch.us)?;
    let mean = g.mean_all(log_q);
    let loss = g.neg(mean);
    Ok(Objective {
        graph: g,
        cond,
        c,
        theta,
        log_q,
        loss,
    })
}

/// Counts out-of-boundary conditioning slots whose gradient, taken through
/// each `θ_j` with the realized upstream loss gradient, is nonzero.
pub fn mask_gradient_violations(model: &ConditionalProposal, batch: &Batch) -> Result<usize> {
    let mut obj = objective(model, batch, false)?;
    let Some(masks) = obj.cond.masks.clone() else {
        return Ok(0);
    };
    obj.graph.backward(obj.loss)?;
    let mut violations = 0;
    for (j, mask) in masks.iter().enumerate() {
        let upstream = obj.graph.grad(obj.theta.per_exo[j]).cloned();
        let Some(upstream) = upstream else { continue };
        let mut g = Graph::new();
        let c = g.input_with_grad(obj.cond.c.clone());
        let theta = model.theta_graph(&mut g, c, &obj.cond)?;
        let weighted = g.mul_const(theta.per_exo[j], upstream)?;
        let s = g.sum_all(weighted);
        g.backward(s)?;
        let grad = g.grad(c).expect("c tracks gradients");
        violations += grad
            .data
            .iter()
            .zip(&mask.data)
            .filter(|(x, m)| **m == 0.0 && **x != 0.0)
            .count();
    }
    Ok(violations)
}

/// Held-out events with the responses that generated them.
#[derive(Debug, Clone)]
pub struct ValidationSet {
    pub events: Vec<CtfEvent>,
    pub centers: Vec<Vec<f64>>,
}

impl ValidationSet {
    pub fn sample<R: Rng + ?Sized>(scm: &Scm, process: &Process, n: usize, kind: EventKind, rng: &mut R) -> Result<Self> {
        let mut events = Vec::with_capacity(n);
        let mut centers = Vec::with_capacity(n);
        for _ in 0..n {
            let s = process.sample_state(scm, rng)?;
            let (e, u) = event_from_state(&s, scm, kind, rng)?;
            centers.push(s.evaluate(scm, &u));
            events.push(e);
        }
        Ok(Self { events, centers })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Validation {
    pub esp: f64,
    pub fr: f64,
    pub etas: Vec<f64>,
}

/// Effective-sample proportion of the unguarded proposal on each event,
/// conditioned at the event's generating responses.
pub fn validate<R: Rng + ?Sized>(
    model: &ConditionalProposal,
    scm: &Scm,
    set: &ValidationSet,
    n_samples: usize,
    m: f64,
    rng: &mut R,
) -> Result<Validation> {
    if set.events.is_empty() {
        return Err(Error::EmptyInput);
    }
    let mut etas = Vec::with_capacity(set.events.len());
    let mut scratch = vec![0.0; scm.n_endo()];
    for (events, centers) in set.events.chunks(256).zip(set.centers.chunks(256)) {
        let items: Vec<(&CtfVariableSet, &[f64])> = events
            .iter()
            .zip(centers)
            .map(|(e, y)| (&e.variables, y.as_slice()))
            .collect();
        let params = model.condition(&items)?;
        for (i, e) in events.iter().enumerate() {
            let us = model.sample_q(&params.row(i), n_samples, rng)?;
            let hits = us.iter().filter(|u| e.membership_with(scm, u, &mut scratch)).count();
            etas.push(hits as f64 / n_samples as f64);
        }
    }
    let esp = etas.iter().sum::<f64>() / etas.len() as f64;
    let fr = etas.iter().filter(|&&x| x <= m).count() as f64 / etas.len() as f64;
    Ok(Validation { esp, fr, etas })
}

/// Builds a model from `config` and trains it.
pub fn train_exom(scm: &Scm, config: &TrainConfig) -> Result<(ConditionalProposal, TrainTrace)> {
    config.validate()?;
    let mut init_rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut model = ConditionalProposal::new(scm, config.proposal.clone(), &mut init_rng)?;
    let trace = train_model(scm, &mut model, config)?;
    Ok((model, trace))
}

/// Optimizer, schedule and data-stream state at the end of training.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainState {
    pub optimizer: AdamW,
    pub schedule: Plateau,
    pub data_rng: ChaCha8Rng,
}

/// Trains an existing model in place.
pub fn train_model(scm: &Scm, model: &mut ConditionalProposal, config: &TrainConfig) -> Result<TrainTrace> {
    train_with_state(scm, model, config).map(|(trace, _)| trace)
}

/// Like [`train_model`], also returning the final optimizer state.
pub fn train_with_state(
    scm: &Scm,
    model: &mut ConditionalProposal,
    config: &TrainConfig,
) -> Result<(TrainTrace, TrainState)> {
    config.validate()?;
    let mut data_rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0xda7a);
    let mut val_set_rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x5a1d);
    let val_set = ValidationSet::sample(scm, &config.process, config.val_events, config.val_kind, &mut val_set_rng)?;
    let val_seed = config.seed ^ 0xe5b;
    let run_val = |model: &ConditionalProposal| {
        let mut r = ChaCha8Rng::seed_from_u64(val_seed);
        validate(model, scm, &val_set, config.val_samples, config.fr_threshold, &mut r)
    };
    let initial = run_val(model)?;
    let mut trace = TrainTrace {
        initial_esp: initial.esp,
        initial_fr: initial.fr,
        epochs: Vec::with_capacity(config.epochs),
    };
    let mut opt = AdamW::new(config.lr, config.weight_decay);
    let mut sched = Plateau::new(config.factor, config.patience);
    let batches = config.dataset_size / config.batch_size;
    for epoch in 1..=config.epochs {
        let mut total = 0.0;
        let mut kept = 0usize;
        let mut skipped = 0usize;
        let mut mask_violations = 0;
        for b in 0..batches {
            let batch = Batch::sample(scm, &config.process, config.batch_size, &mut data_rng)?;
            if b == 0 && model.config.mask.is_some() {
                mask_violations = mask_gradient_violations(model, &batch)?;
            }
            let mut obj = objective(model, &batch, false)?;
            let lq = obj.graph.value(obj.log_q).data.clone();
            if lq.iter().any(|x| !x.is_finite()) {
                let keep: Vec<usize> = (0..lq.len()).filter(|&i| lq[i].is_finite()).collect();
                skipped += lq.len() - keep.len();
                let seen = (b + 1) * config.batch_size;
                if skipped as f64 > config.max_skip_rate * (config.dataset_size as f64) || keep.is_empty() {
                    return Err(Error::NonFiniteLoss {
                        epoch,
                        batch: b,
                        skipped,
                        seen,
                    });
                }
                obj = objective(model, &batch.subset(&keep), false)?;
            }
            let loss = obj.graph.value(obj.loss).item();
            let n = obj.graph.value(obj.log_q).rows;
            model.params.zero_grad();
            obj.graph.backward(obj.loss)?;
            obj.graph.accumulate_param_grads(&mut model.params);
            if model.params.grads().iter().all(Tensor::is_finite) {
                opt.step(&mut model.params);
            } else {
                skipped += n;
                continue;
            }
            total += loss * n as f64;
            kept += n;
        }
        let objective = if kept > 0 { total / kept as f64 } else { f64::NAN };
        opt.lr = sched.step(objective, opt.lr);
        let v = run_val(model)?;
        trace.epochs.push(EpochRecord {
            epoch,
            objective,
            val_esp: v.esp,
            val_fr: v.fr,
            lr: opt.lr,
            skipped,
            mask_violations,
        });
    }
    let state = TrainState {
        optimizer: opt,
        schedule: sched,
        data_rng,
    };
    Ok((trace, state))
}
