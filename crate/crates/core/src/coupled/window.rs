use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::Regime;

/// Parameters of the contraction-window rule.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WindowPolicy {
    pub regime: Regime,
    pub kappa: f64,
    pub nu: f64,
    /// Final time `T`.
    pub horizon: f64,
    /// Fraction of the critical window actually used; strictly below one.
    pub safety: f64,
    pub picard_tol: f64,
    pub picard_max_iters: usize,
}

impl WindowPolicy {
    fn check(&self) -> Result<()> {
        if !(self.safety > 0.0 && self.safety < 1.0) {
            return Err(Error::BadParameters(format!("safety must lie in (0, 1), got {}", self.safety)));
        }
        if !(self.nu > 0.0) {
            return Err(Error::BadParameters(format!("nu must be positive, got {}", self.nu)));
        }
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return Err(Error::BadParameters(format!("horizon must be positive, got {}", self.horizon)));
        }
        if self.regime == Regime::Regularized && !(self.kappa > 0.0) {
            return Err(Error::BadParameters(format!("regularized regime needs kappa > 0, got {}", self.kappa)));
        }
        Ok(())
    }

    /// `T₀ = safety·κν²` (regularized) or `T₀ = safety·ν²e^{−T}` (sweeping), at most `T`.
    pub fn choose_window(&self) -> Result<f64> {
        self.check()?;
        let critical = match self.regime {
            Regime::Regularized => self.kappa * self.nu * self.nu,
            Regime::Sweeping => self.nu * self.nu * (-self.horizon).exp(),
        };
        Ok((self.safety * critical).min(self.horizon))
    }

    /// Lipschitz bound of the composed solution map on a window of length
    /// `t0`: `√(T₀/(κν²))` or `√(e^T T₀/ν²)`.
    pub fn predicted_bound(&self, t0: f64) -> f64 {
        match self.regime {
            Regime::Regularized => (t0 / (self.kappa * self.nu * self.nu)).sqrt(),
            Regime::Sweeping => (self.horizon.exp() * t0 / (self.nu * self.nu)).sqrt(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn policy(regime: Regime, kappa: f64, nu: f64, safety: f64) -> WindowPolicy {
        WindowPolicy { regime, kappa, nu, horizon: 1.0, safety, picard_tol: 1e-10, picard_max_iters: 100 }
    }

    #[test]
    fn window_rule_examples() {
        assert_eq!(policy(Regime::Regularized, 1.0, 1.0, 0.5).choose_window().unwrap(), 0.5);
        let almost = 1.0 - 1e-12;
        let t0 = policy(Regime::Sweeping, 0.0, 1.0, almost).choose_window().unwrap();
        assert!(t0 < (-1.0f64).exp() && t0 > 0.3678);
        let t0 = policy(Regime::Regularized, 0.5, 0.5, almost).choose_window().unwrap();
        assert!(t0 < 0.125 && t0 > 0.1249);
    }

    #[test]
    fn window_is_clamped_to_horizon() {
        let mut p = policy(Regime::Regularized, 1.0, 3.0, 0.5);
        assert_eq!(p.choose_window().unwrap(), 1.0);
        p.horizon = 0.2;
        assert_eq!(p.choose_window().unwrap(), 0.2);
    }

    #[test]
    fn bad_parameters_are_rejected() {
        assert!(policy(Regime::Regularized, 1.0, 1.0, 1.0).choose_window().is_err());
        assert!(policy(Regime::Regularized, 0.0, 1.0, 0.5).choose_window().is_err());
        assert!(policy(Regime::Sweeping, 0.0, 0.0, 0.5).choose_window().is_err());
        assert!(policy(Regime::Sweeping, 0.0, 1.0, 0.5).choose_window().is_ok());
    }

    #[test]
    fn predicted_bound_scales_with_root_window() {
        let p = policy(Regime::Regularized, 1.0, 1.0, 0.5);
        assert!((p.predicted_bound(0.5) - 0.5f64.sqrt()).abs() < 1e-15);
        assert!((p.predicted_bound(0.5) / p.predicted_bound(0.25) - 2f64.sqrt()).abs() < 1e-15);
    }
}
