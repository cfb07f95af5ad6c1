//! Parameter scans recording the local maxima of `x1` on the settled part
//! of each run.

use super::DynamicsError;
use crate::sprott_pwc::{simulate, RhsVariant, State, SystemParams};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScanParameter {
    B,
    Q,
}

impl ScanParameter {
    pub fn name(self) -> &'static str {
        match self {
            Self::B => "b",
            Self::Q => "q",
        }
    }

    fn apply(self, base: &SystemParams, value: f64) -> SystemParams {
        match self {
            Self::B => SystemParams { b: value, ..*base },
            Self::Q => SystemParams { q: value, ..*base },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BifurcationConfig {
    pub parameter: ScanParameter,
    /// Strictly increasing.
    pub values: Vec<f64>,
    pub variant: RhsVariant,
    pub x0: State,
    /// Second initial condition, scanned as a separate stream.
    pub x0_alt: Option<State>,
    pub t_end: f64,
    pub h: f64,
    pub transient_fraction: f64,
    pub corrector_iters: usize,
}

impl BifurcationConfig {
    /// `steps + 1` evenly spaced values from `from` to `to`.
    pub fn linspace(from: f64, to: f64, steps: usize) -> Vec<f64> {
        if steps == 0 {
            return vec![from];
        }
        (0..=steps)
            .map(|i| from + (to - from) * i as f64 / steps as f64)
            .collect()
    }

    pub fn validate(&self) -> Result<(), DynamicsError> {
        if self.values.is_empty() {
            return Err(DynamicsError::InvalidConfig("empty parameter range".into()));
        }
        if self.values.iter().any(|v| !v.is_finite()) || self.values.windows(2).any(|w| w[1] <= w[0]) {
            return Err(DynamicsError::InvalidConfig(
                "parameter values must be finite and strictly increasing".into(),
            ));
        }
        if !(0.0..1.0).contains(&self.transient_fraction) {
            return Err(DynamicsError::InvalidConfig(format!(
                "transient fraction {} outside [0, 1)",
                self.transient_fraction
            )));
        }
        self.variant.validate()?;
        Ok(())
    }
}

/// One initial condition at one parameter value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StreamResult {
    pub x0: State,
    pub maxima: Vec<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BifurcationSample {
    pub value: f64,
    pub streams: Vec<StreamResult>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BifurcationDiagram {
    pub parameter: ScanParameter,
    pub observable: String,
    pub transient_fraction: f64,
    pub t_end: f64,
    pub h: f64,
    pub samples: Vec<BifurcationSample>,
}

/// Values `v[i]` with `v[i-1] < v[i] >= v[i+1]`.
pub fn local_maxima(series: &[f64]) -> Vec<f64> {
    series
        .windows(3)
        .filter(|w| w[0] < w[1] && w[1] >= w[2])
        .map(|w| w[1])
        .collect()
}

fn run_stream(p: &SystemParams, cfg: &BifurcationConfig, x0: &State) -> StreamResult {
    let outcome = (|| -> Result<Vec<f64>, DynamicsError> {
        let tr = simulate(p, &cfg.variant, x0, cfg.t_end, cfg.h, cfg.corrector_iters)?;
        let start = (tr.len() as f64 * cfg.transient_fraction).ceil() as usize;
        if tr.len() < start + 3 {
            return Err(DynamicsError::InvalidConfig(format!(
                "only {} points left after the transient, need 3",
                tr.len().saturating_sub(start)
            )));
        }
        let x1: Vec<f64> = (start..tr.len()).map(|k| tr.state(k)[0]).collect();
        Ok(local_maxima(&x1))
    })();
    match outcome {
        Ok(maxima) => StreamResult {
            x0: *x0,
            maxima,
            error: None,
        },
        Err(e) => StreamResult {
            x0: *x0,
            maxima: Vec::new(),
            error: Some(e.to_string()),
        },
    }
}

/// Runs every parameter value (concurrently) and returns the samples in
/// parameter order. Failures are recorded per stream.
pub fn bifurcation_scan(base: &SystemParams, cfg: &BifurcationConfig) -> Result<BifurcationDiagram, DynamicsError> {
    cfg.validate()?;
    let mut starts = vec![cfg.x0];
    starts.extend(cfg.x0_alt);
    let samples = cfg
        .values
        .par_iter()
        .map(|&value| {
            let p = cfg.parameter.apply(base, value);
            let streams = starts.iter().map(|x0| run_stream(&p, cfg, x0)).collect();
            BifurcationSample { value, streams }
        })
        .collect();
    Ok(BifurcationDiagram {
        parameter: cfg.parameter,
        observable: "local maxima of x1".into(),
        transient_fraction: cfg.transient_fraction,
        t_end: cfg.t_end,
        h: cfg.h,
        samples,
    })
}
