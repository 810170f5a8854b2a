use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fixed_point::{norm_threshold, QuantConfig};

/// Public parameters of one aggregation round.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RoundConfig {
    /// Expected number of clients.
    pub n: usize,
    /// Reconstruction threshold; tolerates up to `t - 1` colluding clients.
    pub t: usize,
    /// Norm bound on each real-valued update.
    pub t_m: f64,
    /// Fraction of submitting clients admitted to the benign list.
    pub t_s: f64,
    #[serde(default)]
    pub quant: QuantConfig,
    /// Layer lengths of the model.
    pub shape: Vec<usize>,
}

impl RoundConfig {
    pub fn validate(&self) -> Result<()> {
        if self.t == 0 || self.t > self.n {
            return Err(Error::InvalidThreshold {
                t: self.t,
                n: self.n,
            });
        }
        if !(self.t_s > 0.0 && self.t_s <= 1.0) {
            return Err(Error::InvalidConfig(format!("t_s = {} not in (0, 1]", self.t_s)));
        }
        if self.shape.is_empty() || self.shape.contains(&0) {
            return Err(Error::InvalidConfig("every layer needs at least one parameter".into()));
        }
        self.quant
            .validate(self.shape.iter().copied().max().unwrap_or(0))?;
        self.norm_threshold().map(|_| ())
    }

    pub fn num_params(&self) -> usize {
        self.shape.iter().sum()
    }

    pub fn num_layers(&self) -> usize {
        self.shape.len()
    }

    /// Integer bound `T` on the quantized squared norm.
    pub fn norm_threshold(&self) -> Result<u64> {
        norm_threshold(self.t_m, &self.quant)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn base() -> RoundConfig {
        RoundConfig {
            n: 10,
            t: 4,
            t_m: 1.0,
            t_s: 0.4,
            quant: QuantConfig::default(),
            shape: vec![60, 40],
        }
    }

    #[test]
    fn validation() {
        assert!(base().validate().is_ok());
        assert!(RoundConfig { t: 11, ..base() }.validate().is_err());
        assert!(RoundConfig { t: 0, ..base() }.validate().is_err());
        assert!(RoundConfig { t_s: 0.0, ..base() }.validate().is_err());
        assert!(RoundConfig { shape: vec![3, 0], ..base() }.validate().is_err());
        assert!(RoundConfig { t_m: 1e12, ..base() }.validate().is_err());
        assert_eq!(base().num_params(), 100);
        assert_eq!(base().norm_threshold().unwrap(), 1 << 32);
    }
}
