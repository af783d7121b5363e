//! Evaluation of EXOM and the baselines on a shared set of events.

use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{Error, Result};
use crate::estimators::{estimate_ceis, estimate_is, estimate_rs, CeisConfig, Guard};
use crate::events::{EventKind, Process};
use crate::proposal::{ConditionalProposal, HeadConfig};
use crate::scm::Scm;
use crate::train::ValidationSet;

const EVENT_SALT: u64 = 0xe7e7_0001;
const ESTIMATE_SALT: u64 = 0x5a3f_0002;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    ExomGmm,
    ExomMaf,
    Rs,
    Ceis,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::ExomGmm, Method::ExomMaf, Method::Rs, Method::Ceis];

    /// The density head a learned method needs.
    pub fn head(self) -> Option<HeadConfig> {
        match self {
            Method::ExomGmm => Some(HeadConfig::GMM),
            Method::ExomMaf => Some(HeadConfig::MAF),
            Method::Rs | Method::Ceis => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Method::ExomGmm => "exom-gmm",
            Method::ExomMaf => "exom-maf",
            Method::Rs => "rs",
            Method::Ceis => "ceis",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Config(format!("unknown method `{s}`")))
    }
}

/// Evaluation settings shared by all methods.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalConfig {
    pub events: usize,
    /// Total sample budget per event, for every method.
    pub samples: usize,
    pub process: Process,
    pub kind: EventKind,
    pub fr_threshold: f64,
    pub guard: Guard,
    pub ceis_iterations: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            events: 256,
            samples: 256,
            process: Process::bernoulli(3),
            kind: EventKind::default(),
            fr_threshold: 1e-3,
            guard: Guard::default(),
            ceis_iterations: 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodScore {
    pub method: Method,
    pub esp: f64,
    pub fr: f64,
    pub etas: Vec<f64>,
}

/// The evaluation events of one seed; identical across methods.
pub fn eval_events(scm: &Scm, config: &EvalConfig, seed: u64) -> Result<ValidationSet> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ EVENT_SALT);
    ValidationSet::sample(scm, &config.process, config.events, config.kind, &mut rng)
}

/// Effective-sample proportions of `method` on every event. Learned
/// methods use guarded IS conditioned at the event's generating responses;
/// CEIS fits a fresh proposal per event within the same budget.
pub fn score(
    method: Method,
    model: Option<&ConditionalProposal>,
    scm: &Scm,
    set: &ValidationSet,
    config: &EvalConfig,
    seed: u64,
) -> Result<MethodScore> {
    let salt = Method::ALL.iter().position(|m| *m == method).expect("listed") as u64;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ ESTIMATE_SALT ^ (salt << 32));
    let n = config.samples;
    let ceis = CeisConfig {
        guard: config.guard,
        ..CeisConfig::with_budget(n, config.ceis_iterations)
    };
    let mut etas = Vec::with_capacity(set.events.len());
    for (event, y) in set.events.iter().zip(&set.centers) {
        let report = match method {
            Method::ExomGmm | Method::ExomMaf => {
                let m = model.ok_or_else(|| Error::Config(format!("{method} needs a trained model")))?;
                estimate_is(m, scm, event, y, n, config.guard, &mut rng)?
            }
            Method::Rs => estimate_rs(scm, event, n, &mut rng)?,
            Method::Ceis => estimate_ceis(scm, event, &ceis, &mut rng)?,
        };
        etas.push(report.eta);
    }
    let (esp, fr) = crate::estimators::metrics_esp_fr(&etas, config.fr_threshold)?;
    Ok(MethodScore { method, esp, fr, etas })
}

/// Mean and half-width of a two-sided 95% t interval.
pub fn mean_ci95(xs: &[f64]) -> Result<(f64, f64)> {
    if xs.is_empty() {
        return Err(Error::EmptyInput);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() == 1 {
        return Ok((mean, f64::NAN));
    }
    let sd = (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
    let t = StudentsT::new(0.0, 1.0, n - 1.0)
        .expect("positive degrees of freedom")
        .inverse_cdf(0.975);
    Ok((mean, t * sd / n.sqrt()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn method_names_round_trip() {
        for m in Method::ALL {
            assert_eq!(m.name().parse::<Method>().unwrap(), m);
        }
        assert!("nis".parse::<Method>().is_err());
    }

    #[test]
    fn ci_uses_student_t() {
        let (m, h) = mean_ci95(&[1.0, 2.0, 3.0, 4.0, 5.0]).unwrap();
        assert_eq!(m, 3.0);
        // t_{0.975, 4} = 2.776445
        assert!((h - 2.776_445 * (2.5f64).sqrt() / 5f64.sqrt()).abs() < 1e-5);
    }
}
