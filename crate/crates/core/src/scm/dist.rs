use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

/// Marginal law of one exogenous variable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Marginal {
    StandardNormal,
    Normal { mean: f64, std: f64 },
    Uniform { low: f64, high: f64 },
    Bernoulli { p: f64 },
    Categorical { weights: Vec<f64> },
}

impl Marginal {
    pub fn validate(&self) -> Result<()> {
        let ok = match self {
            Marginal::StandardNormal => true,
            Marginal::Normal { std, .. } => *std > 0.0 && std.is_finite(),
            Marginal::Uniform { low, high } => low < high && low.is_finite() && high.is_finite(),
            Marginal::Bernoulli { p } => (0.0..=1.0).contains(p),
            Marginal::Categorical { weights } => {
                weights.len() >= 2
                    && weights.iter().all(|w| *w >= 0.0 && w.is_finite())
                    && weights.iter().sum::<f64>() > 0.0
            }
        };
        if ok {
            Ok(())
        } else {
            Err(Error::DomainMismatch(format!("invalid marginal {self:?}")))
        }
    }

    /// `Some(cardinality)` for discrete marginals.
    pub fn cardinality(&self) -> Option<usize> {
        match self {
            Marginal::Bernoulli { .. } => Some(2),
            Marginal::Categorical { weights } => Some(weights.len()),
            _ => None,
        }
    }

    pub fn is_discrete(&self) -> bool {
        self.cardinality().is_some()
    }

    /// Mean and standard deviation, used to standardize proposal targets.
    pub fn moments(&self) -> (f64, f64) {
        match self {
            Marginal::StandardNormal => (0.0, 1.0),
            Marginal::Normal { mean, std } => (*mean, *std),
            Marginal::Uniform { low, high } => ((low + high) / 2.0, (high - low) / 12f64.sqrt()),
            Marginal::Bernoulli { p } => (*p, (p * (1.0 - p)).sqrt()),
            Marginal::Categorical { weights } => {
                let z: f64 = weights.iter().sum();
                let m: f64 = weights.iter().enumerate().map(|(i, w)| i as f64 * w / z).sum();
                let v: f64 = weights
                    .iter()
                    .enumerate()
                    .map(|(i, w)| (i as f64 - m).powi(2) * w / z)
                    .sum();
                (m, v.sqrt())
            }
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            Marginal::StandardNormal => StandardNormal.sample(rng),
            Marginal::Normal { mean, std } => {
                let z: f64 = StandardNormal.sample(rng);
                mean + std * z
            }
            Marginal::Uniform { low, high } => low + (high - low) * rng.random::<f64>(),
            Marginal::Bernoulli { p } => {
                if rng.random::<f64>() < *p {
                    1.0
                } else {
                    0.0
                }
            }
            Marginal::Categorical { weights } => {
                let z: f64 = weights.iter().sum();
                let mut r = rng.random::<f64>() * z;
                for (i, w) in weights.iter().enumerate() {
                    if r < *w {
                        return i as f64;
                    }
                    r -= w;
                }
                // rounding can leave r marginally above the last weight
                weights.iter().rposition(|w| *w > 0.0).unwrap_or(0) as f64
            }
        }
    }

    /// Log-density (continuous) or log-mass (discrete); `-inf` off support.
    pub fn log_density(&self, x: f64) -> f64 {
        match self {
            Marginal::StandardNormal => -0.5 * x * x - LN_SQRT_2PI,
            Marginal::Normal { mean, std } => {
                let z = (x - mean) / std;
                -0.5 * z * z - LN_SQRT_2PI - std.ln()
            }
            Marginal::Uniform { low, high } => {
                if x >= *low && x <= *high {
                    -(high - low).ln()
                } else {
                    f64::NEG_INFINITY
                }
            }
            Marginal::Bernoulli { p } => {
                if x == 1.0 {
                    p.ln()
                } else if x == 0.0 {
                    (1.0 - p).ln()
                } else {
                    f64::NEG_INFINITY
                }
            }
            Marginal::Categorical { weights } => {
                if x >= 0.0 && x.fract() == 0.0 && (x as usize) < weights.len() {
                    let z: f64 = weights.iter().sum();
                    (weights[x as usize] / z).ln()
                } else {
                    f64::NEG_INFINITY
                }
            }
        }
    }

    /// Whether `x` lies in the support (for discrete laws: a valid category).
    pub fn in_domain(&self, x: f64) -> bool {
        match self {
            Marginal::StandardNormal | Marginal::Normal { .. } => x.is_finite(),
            Marginal::Uniform { low, high } => x >= *low && x <= *high,
            _ => {
                let c = self.cardinality().unwrap();
                x >= 0.0 && x.fract() == 0.0 && (x as usize) < c
            }
        }
    }
}

/// Product distribution over the exogenous variables.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExogenousDist {
    pub marginals: Vec<Marginal>,
}

impl ExogenousDist {
    pub fn new(marginals: Vec<Marginal>) -> Result<Self> {
        for m in &marginals {
            m.validate()?;
        }
        Ok(Self { marginals })
    }

    pub fn len(&self) -> usize {
        self.marginals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.marginals.is_empty()
    }

    pub fn sample_one<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        self.marginals.iter().map(|m| m.sample(rng)).collect()
    }

    /// `n` i.i.d. draws.
    pub fn sample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Vec<Vec<f64>> {
        (0..n).map(|_| self.sample_one(rng)).collect()
    }

    /// Joint log-density; `-inf` when any coordinate is off support.
    pub fn log_density(&self, u: &[f64]) -> f64 {
        debug_assert_eq!(u.len(), self.marginals.len());
        let mut acc = 0.0;
        for (m, x) in self.marginals.iter().zip(u) {
            let l = m.log_density(*x);
            if l == f64::NEG_INFINITY {
                return l;
            }
            acc += l;
        }
        acc
    }

    /// Number of joint outcomes when every marginal is discrete.
    pub fn support_size(&self) -> Option<u128> {
        self.marginals
            .iter()
            .try_fold(1u128, |acc, m| m.cardinality().and_then(|c| acc.checked_mul(c as u128)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn closed_form_log_densities() {
        let half_log_2pi = 0.5 * (2.0 * std::f64::consts::PI).ln();
        assert!((Marginal::StandardNormal.log_density(0.0) + half_log_2pi).abs() < 1e-15);
        assert!((Marginal::Bernoulli { p: 0.3 }.log_density(1.0) - 0.3f64.ln()).abs() < 1e-15);
        let uni = Marginal::Uniform { low: 0.0, high: 1.0 };
        assert_eq!(uni.log_density(1.5), f64::NEG_INFINITY);
        assert_eq!(uni.log_density(0.5), 0.0);
        let cat = Marginal::Categorical { weights: vec![1.0, 3.0] };
        assert!((cat.log_density(1.0) - 0.75f64.ln()).abs() < 1e-15);
        assert_eq!(cat.log_density(2.0), f64::NEG_INFINITY);
    }

    #[test]
    fn joint_density_is_sum() {
        let d = ExogenousDist::new(vec![Marginal::StandardNormal, Marginal::StandardNormal]).unwrap();
        let half_log_2pi = 0.5 * (2.0 * std::f64::consts::PI).ln();
        assert!((d.log_density(&[0.0, 0.0]) + 2.0 * half_log_2pi).abs() < 1e-14);
    }

    #[test]
    fn sampling_is_seeded() {
        let d = ExogenousDist::new(vec![Marginal::StandardNormal, Marginal::Bernoulli { p: 0.3 }]).unwrap();
        let a = d.sample(5, &mut ChaCha8Rng::seed_from_u64(7));
        let b = d.sample(5, &mut ChaCha8Rng::seed_from_u64(7));
        assert_eq!(a, b);
        assert_eq!(a.len(), 5);
    }

    #[test]
    fn bernoulli_mean_within_binomial_band() {
        let d = ExogenousDist::new(vec![Marginal::Bernoulli { p: 0.3 }]).unwrap();
        let n = 100_000;
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mean = d.sample(n, &mut rng).iter().map(|u| u[0]).sum::<f64>() / n as f64;
        let band = 3.0 * (0.3f64 * 0.7 / n as f64).sqrt();
        assert!((mean - 0.3).abs() <= band, "mean {mean}");
    }

    #[test]
    fn invalid_marginals_are_rejected() {
        assert!(Marginal::Bernoulli { p: 1.5 }.validate().is_err());
        assert!(Marginal::Uniform { low: 1.0, high: 0.0 }.validate().is_err());
        assert!(Marginal::Categorical { weights: vec![1.0] }.validate().is_err());
    }
}
