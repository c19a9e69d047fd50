//! The target functional: `k - 1` lower quantiles plus a spectral
//! combination of Expected Shortfalls (lower-tail sign convention).

use serde::Serialize;

use crate::distributions::Distribution;
use crate::error::{Error, Result};

/// Quantile levels `q_1 < ... < q_{k-1}` and spectral weights `p_1..p_{k-1}`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FunctionalSpec {
    levels: Vec<f64>,
    weights: Vec<f64>,
    weights_validated: bool,
}

impl FunctionalSpec {
    /// Builds a spec, requiring `p_m > 0` and `sum p_m = 1`.
    pub fn new(levels: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        Self::build(levels, weights, true)
    }

    /// Builds a spec without the positivity / unit-sum checks on the weights.
    pub fn with_unvalidated_weights(levels: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        Self::build(levels, weights, false)
    }

    /// `T = (VaR_alpha, ES_alpha)`.
    pub fn var_es(alpha: f64) -> Result<Self> {
        Self::new(vec![alpha], vec![1.0])
    }

    fn build(levels: Vec<f64>, weights: Vec<f64>, validate: bool) -> Result<Self> {
        if levels.is_empty() {
            return Err(Error::invalid("functional", "at least one quantile level is required"));
        }
        if levels.len() != weights.len() {
            return Err(Error::invalid(
                "functional",
                format!("{} levels but {} weights", levels.len(), weights.len()),
            ));
        }
        if levels.iter().any(|&q| !(q > 0.0 && q < 1.0)) {
            return Err(Error::invalid("functional", "levels must lie in (0, 1)"));
        }
        if levels.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::invalid("functional", "levels must be strictly increasing"));
        }
        if weights.iter().any(|p| !p.is_finite()) {
            return Err(Error::invalid("functional", "weights must be finite"));
        }
        if validate {
            if weights.iter().any(|&p| p <= 0.0) {
                return Err(Error::invalid("functional", "weights must be positive"));
            }
            let total: f64 = weights.iter().sum();
            if (total - 1.0).abs() > 1e-12 {
                return Err(Error::invalid("functional", format!("weights sum to {total}, not 1")));
            }
        }
        Ok(Self {
            levels,
            weights,
            weights_validated: validate,
        })
    }

    /// Dimension of the functional (number of quantiles plus one).
    pub fn k(&self) -> usize {
        self.levels.len() + 1
    }

    pub fn levels(&self) -> &[f64] {
        &self.levels
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn weights_validated(&self) -> bool {
        self.weights_validated
    }

    /// `p_m / q_m` for quantile index `m` (0-based).
    pub fn ratio(&self, m: usize) -> f64 {
        self.weights[m] / self.levels[m]
    }

    /// `T(F)`: the quantiles followed by
    /// `t_k = -sum_m (p_m / q_m) (LPM_F(t_m) - q_m t_m)`.
    pub fn evaluate(&self, d: &Distribution) -> Result<Vec<f64>> {
        let mut t = Vec::with_capacity(self.k());
        for &q in &self.levels {
            t.push(d.quantile(q)?);
        }
        let tk = -(0..self.levels.len())
            .map(|m| self.ratio(m) * (d.lpm(t[m]) - self.levels[m] * t[m]))
            .sum::<f64>();
        t.push(tk);
        Ok(t)
    }
}

/// Free-function form of [`FunctionalSpec::evaluate`].
pub fn evaluate_t(spec: &FunctionalSpec, d: &Distribution) -> Result<Vec<f64>> {
    spec.evaluate(d)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn counterexample_values() {
        let spec = FunctionalSpec::var_es(0.05).unwrap();
        assert_eq!(spec.evaluate(&Distribution::point(0.0)).unwrap(), vec![0.0, 0.0]);

        let t = spec.evaluate(&Distribution::normal(0.2, 0.1).unwrap()).unwrap();
        assert!((t[0] - 0.0355).abs() < 5e-5, "{t:?}");
        assert!((t[1] + 0.0063).abs() < 5e-5, "{t:?}");

        let t = spec.evaluate(&Distribution::standard_normal()).unwrap();
        assert!((t[0] + 1.64).abs() < 5e-3 && (t[1] + 2.06).abs() < 5e-3, "{t:?}");
        // ES_0.05 of N(0,1) = -phi(z_0.05)/0.05
        assert!((t[1] + 2.062_712_807_507_425).abs() < 1e-9, "{t:?}");
    }

    #[test]
    fn es_below_var_for_discrete() {
        let spec = FunctionalSpec::var_es(0.3).unwrap();
        let d = Distribution::discrete(&[(-2.0, 0.2), (0.0, 0.3), (5.0, 0.5)]).unwrap();
        let t = spec.evaluate(&d).unwrap();
        assert_eq!(t[0], 0.0);
        // lower-tail mean of the worst 30%: (0.2*-2 + 0.1*0) / 0.3
        assert!((t[1] - (-0.4 / 0.3)).abs() < 1e-15);
    }

    #[test]
    fn validation() {
        assert!(FunctionalSpec::new(vec![0.1, 0.05], vec![0.5, 0.5]).is_err());
        assert!(FunctionalSpec::new(vec![0.05, 0.1], vec![0.5, 0.6]).is_err());
        assert!(FunctionalSpec::new(vec![0.05, 0.1], vec![-0.5, 1.5]).is_err());
        assert!(FunctionalSpec::with_unvalidated_weights(vec![0.05, 0.1], vec![0.5, 0.6]).is_ok());
        assert!(FunctionalSpec::new(vec![0.0], vec![1.0]).is_err());
        assert_eq!(FunctionalSpec::new(vec![0.05, 0.1], vec![0.3, 0.7]).unwrap().k(), 3);
    }
}
