use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Threshold on the minimal enlargement above which a new cluster is opened.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Tau<T> {
    Fixed(T),
    /// Running mean of the total loss of released clusters; unbounded until the first release.
    Auto,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RncClear {
    /// Reset request counters after every `n` ingested tuples.
    Every(u64),
    Never,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EngineConfig<T> {
    /// Minimum distinct subjects per released cluster.
    pub k: usize,
    /// Minimum distinct values per sensitive attribute in a released cluster.
    pub l: usize,
    /// Maximum retention, counted in subsequently ingested tuples.
    pub delta: u64,
    /// Maximum number of concurrently open clusters.
    pub beta: usize,
    pub tau: Tau<T>,
    pub rnc_clear: RncClear,
}

impl<T: Scalar> EngineConfig<T> {
    pub fn new(k: usize, l: usize, delta: u64, beta: usize) -> Self {
        Self {
            k,
            l,
            delta,
            beta,
            tau: Tau::Auto,
            rnc_clear: RncClear::Never,
        }
    }

    pub fn with_tau(mut self, tau: Tau<T>) -> Self {
        self.tau = tau;
        self
    }

    pub fn with_rnc_clear(mut self, rnc_clear: RncClear) -> Self {
        self.rnc_clear = rnc_clear;
        self
    }

    pub fn validate(self) -> Result<Self> {
        validate_config(self)
    }
}

pub fn validate_config<T: Scalar>(config: EngineConfig<T>) -> Result<EngineConfig<T>> {
    let fail = |msg: String| Err(Error::Config(msg));
    if config.k == 0 {
        return fail("k must be at least 1".into());
    }
    if config.l == 0 {
        return fail("l must be at least 1".into());
    }
    if config.beta == 0 {
        return fail("beta must be at least 1".into());
    }
    if config.delta == 0 {
        return fail("delta must be at least 1".into());
    }
    if config.delta < config.k as u64 {
        return fail(format!(
            "delta < k (delta = {}, k = {})",
            config.delta, config.k
        ));
    }
    if let Tau::Fixed(t) = config.tau {
        if t.is_nan() || t < T::zero() {
            return fail(format!("tau must be non-negative, got {t}"));
        }
    }
    if config.rnc_clear == RncClear::Every(0) {
        return fail("rnc clearing period must be positive".into());
    }
    Ok(config)
}

#[cfg(test)]
mod tests {
    use super::*;

    type Config = EngineConfig<f64>;

    #[test]
    fn delta_equal_to_k_is_valid() {
        assert!(validate_config(Config::new(2, 1, 2, 10)).is_ok());
    }

    #[test]
    fn delta_below_k_is_rejected() {
        let err = validate_config(Config::new(5, 1, 4, 10)).unwrap_err();
        assert!(err.to_string().contains("delta < k"), "{err}");
    }

    #[test]
    fn benchmark_scale_parameters() {
        assert!(validate_config(Config::new(100, 2, 1250, 50)).is_ok());
    }

    #[test]
    fn zero_parameters_rejected() {
        assert!(validate_config(Config::new(0, 1, 2, 10)).is_err());
        assert!(validate_config(Config::new(1, 0, 2, 10)).is_err());
        assert!(validate_config(Config::new(1, 1, 2, 0)).is_err());
        assert!(validate_config(Config::new(1, 1, 2, 1).with_tau(Tau::Fixed(-0.1))).is_err());
        assert!(validate_config(Config::new(1, 1, 2, 1).with_rnc_clear(RncClear::Every(0))).is_err());
        assert!(validate_config(Config::new(1, 1, 2, 1).with_tau(Tau::Fixed(f64::INFINITY))).is_ok());
    }
}
