//! Generalization bounds for the empirical risk minimizer of the meta-model.

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BoundError {
    #[error("delta must lie in (0, 1), got {0}")]
    Delta(f64),
    #[error("invalid bound input: {0}")]
    Input(String),
    #[error("p has zero mass at index {0}")]
    ZeroMass(usize),
    #[error("distributions have different lengths ({0} vs {1})")]
    Length(usize, usize),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundInputs {
    /// Subgaussian parameter of the loss.
    pub sigma2: f64,
    /// Size of the (finite) hypothesis class.
    pub hyp_class_size: u64,
    pub delta: f64,
    pub n_samples: u64,
    /// Lipschitz-type constant multiplying the divergence term.
    pub k: f64,
    /// Chi-squared divergence between source and target task distributions.
    pub chi2_divergence: f64,
}

impl BoundInputs {
    fn validate(&self) -> Result<(), BoundError> {
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(BoundError::Delta(self.delta));
        }
        if !(self.sigma2 > 0.0 && self.sigma2.is_finite()) {
            return Err(BoundError::Input(format!("sigma2 must be positive, got {}", self.sigma2)));
        }
        if self.hyp_class_size == 0 || self.n_samples == 0 {
            return Err(BoundError::Input("hypothesis class size and sample count must be at least 1".into()));
        }
        if self.k.is_nan() || self.k < 0.0 || self.chi2_divergence.is_nan() || self.chi2_divergence < 0.0 {
            return Err(BoundError::Input("K and the divergence must be nonnegative".into()));
        }
        Ok(())
    }
}

/// √(8σ² log(2|F|/δ) / N).
pub fn erm_bound(inputs: &BoundInputs) -> Result<f64, BoundError> {
    inputs.validate()?;
    let num = 8.0 * inputs.sigma2 * (2.0 * inputs.hyp_class_size as f64 / inputs.delta).ln();
    Ok((num / inputs.n_samples as f64).sqrt())
}

/// `erm_bound + K·√d` for a target distribution at chi-squared divergence d.
pub fn domain_shift_bound(inputs: &BoundInputs) -> Result<f64, BoundError> {
    Ok(erm_bound(inputs)? + inputs.k * inputs.chi2_divergence.sqrt())
}

/// Σ p(x)·((q(x) − p(x)) / p(x))².
pub fn chi_squared_divergence(p: &[f64], q: &[f64]) -> Result<f64, BoundError> {
    if p.len() != q.len() {
        return Err(BoundError::Length(p.len(), q.len()));
    }
    let mut total = 0.0;
    for (i, (&pi, &qi)) in p.iter().zip(q).enumerate() {
        if pi <= 0.0 {
            return Err(BoundError::ZeroMass(i));
        }
        total += pi * ((qi - pi) / pi).powi(2);
    }
    Ok(total)
}
