//! Solver configuration with the published defaults.

use anyhow::{bail, Result};
use metamorph_core::energy::{AnisotropyParams, ElasticParams};
use metamorph_core::multilevel::{FrameInit, MorphConfig};
use metamorph_core::optimizer::IpalmParams;
use serde::Serialize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    /// Plain RGB images.
    Rgb,
    /// RGB images with deep feature pyramids.
    Deep,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum FrameInitArg {
    Blend,
    Prolongate,
    ProlongateWithDetail,
}

impl From<FrameInitArg> for FrameInit {
    fn from(v: FrameInitArg) -> Self {
        match v {
            FrameInitArg::Blend => FrameInit::Blend,
            FrameInitArg::Prolongate => FrameInit::Prolongate,
            FrameInitArg::ProlongateWithDetail => FrameInit::ProlongateWithDetail,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SolverConfig {
    pub mode: Mode,
    pub k: usize,
    pub delta: f64,
    pub levels: usize,
    pub iterations: usize,
    pub beta: f64,
    pub mu: f64,
    pub lambda: f64,
    pub eta: f64,
    pub sigma: f64,
    pub rho: f64,
    pub xi1: f64,
    pub xi2: f64,
    pub warm_start_iterations: usize,
    pub frame_init: FrameInitArg,
}

impl SolverConfig {
    pub fn defaults(mode: Mode) -> Self {
        let (mu, lambda, eta) = match mode {
            Mode::Rgb => (0.025, 0.1, 1.0),
            Mode::Deep => (0.002, 0.002, 1e-6),
        };
        SolverConfig {
            mode,
            k: 15,
            delta: 1.0,
            levels: 5,
            iterations: 250,
            beta: std::f64::consts::FRAC_1_SQRT_2,
            mu,
            lambda,
            eta,
            sigma: 0.5,
            rho: 2.0,
            xi1: 1000.0,
            xi2: 1e-6,
            warm_start_iterations: 50,
            frame_init: FrameInitArg::ProlongateWithDetail,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            bail!("K must be at least 1");
        }
        if self.levels == 0 {
            bail!("at least one level is required");
        }
        if self.mode == Mode::Rgb && self.eta != 1.0 {
            bail!("eta only applies to the deep mode (RGB uses eta = 1)");
        }
        self.morph_config()?;
        Ok(())
    }

    pub fn morph_config(&self) -> Result<MorphConfig> {
        let ipalm = IpalmParams {
            beta: self.beta,
            iterations: self.iterations,
            delta: self.delta,
            ..IpalmParams::default()
        };
        ipalm.validate()?;
        if !(self.eta > 0.0 && self.eta.is_finite()) {
            bail!("eta must be positive and finite");
        }
        Ok(MorphConfig {
            steps: self.k,
            ipalm,
            elastic: ElasticParams::new(self.lambda, self.mu)?,
            anisotropy: AnisotropyParams::new(self.sigma, self.rho, self.xi1, self.xi2)?,
            eta: self.eta,
            warm_start_iterations: match self.mode {
                Mode::Rgb => 0,
                Mode::Deep => self.warm_start_iterations,
            },
            frame_init: self.frame_init.into(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn published_defaults() {
        let rgb = SolverConfig::defaults(Mode::Rgb);
        assert_eq!((rgb.k, rgb.delta, rgb.levels, rgb.iterations), (15, 1.0, 5, 250));
        assert_eq!((rgb.mu, rgb.lambda, rgb.eta), (0.025, 0.1, 1.0));
        assert_eq!((rgb.sigma, rgb.rho, rgb.xi1, rgb.xi2), (0.5, 2.0, 1000.0, 1e-6));
        assert!((rgb.beta - 0.5f64.sqrt()).abs() < 1e-16);
        let deep = SolverConfig::defaults(Mode::Deep);
        assert_eq!((deep.mu, deep.lambda, deep.eta), (0.002, 0.002, 1e-6));
        assert!(rgb.validate().is_ok() && deep.validate().is_ok());
    }

    #[test]
    fn invalid_values_rejected() {
        let mut c = SolverConfig::defaults(Mode::Rgb);
        c.beta = 1.0;
        assert!(c.validate().is_err());
        let mut c = SolverConfig::defaults(Mode::Deep);
        c.mu = 0.0;
        assert!(c.validate().is_err());
        let mut c = SolverConfig::defaults(Mode::Rgb);
        c.k = 0;
        assert!(c.validate().is_err());
        let mut c = SolverConfig::defaults(Mode::Rgb);
        c.eta = 0.5;
        assert!(c.validate().is_err());
    }
}
