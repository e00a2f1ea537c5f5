//! Client personas: latency and fault susceptibility of a simulated client implementation.

use std::collections::BTreeMap;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{FaultMode, SimNodeFaultConfig};

const BUILTIN: &str = include_str!("../../data/personas.toml");

#[derive(Debug, Error)]
pub enum PersonaError {
    #[error("persona file: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("persona {label}: {reason}")]
    Invalid { label: String, reason: String },
    #[error("unknown persona {0:?}")]
    Unknown(String),
}

/// Uniform latency in milliseconds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LatencyRange {
    pub min: f64,
    pub max: f64,
}

impl LatencyRange {
    /// Maps `u` in `[0, 1)` onto the range.
    pub fn sample(&self, u: f64) -> Duration {
        let ms = self.min + (self.max - self.min) * u;
        Duration::from_micros((ms * 1_000.0).round() as u64)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimNodeProfile {
    pub label: String,
    pub latency_ms: LatencyRange,
    /// Per-mode multiplier on injected fault probabilities. Missing modes use 1.
    #[serde(default)]
    pub susceptibility: BTreeMap<FaultMode, f64>,
    pub crash_window_ms: u64,
    pub catch_up_ms: u64,
    pub sync_stall_ms: u64,
    pub stale_lag_blocks: u64,
}

impl SimNodeProfile {
    pub fn uniform(label: &str, min_ms: f64, max_ms: f64) -> Self {
        let defaults = SimNodeFaultConfig::default();
        SimNodeProfile {
            label: label.to_string(),
            latency_ms: LatencyRange {
                min: min_ms,
                max: max_ms,
            },
            susceptibility: BTreeMap::new(),
            crash_window_ms: defaults.crash_window_ms,
            catch_up_ms: defaults.catch_up_ms,
            sync_stall_ms: defaults.sync_stall_ms,
            stale_lag_blocks: defaults.stale_lag_blocks,
        }
    }

    pub fn validate(&self) -> Result<(), PersonaError> {
        let invalid = |reason: String| PersonaError::Invalid {
            label: self.label.clone(),
            reason,
        };
        let LatencyRange { min, max } = self.latency_ms;
        if !(min.is_finite() && max.is_finite() && 0.0 <= min && min <= max) {
            return Err(invalid(format!("bad latency range [{min}, {max}]")));
        }
        if let Some((mode, m)) = self
            .susceptibility
            .iter()
            .find(|(_, m)| !(m.is_finite() && **m >= 0.0))
        {
            return Err(invalid(format!("bad susceptibility {m} for {mode}")));
        }
        Ok(())
    }

    pub fn susceptibility(&self, mode: FaultMode) -> f64 {
        self.susceptibility.get(&mode).copied().unwrap_or(1.0)
    }

    /// Scales an injected strategy by this persona and adopts its timing parameters.
    pub fn apply(&self, injected: &SimNodeFaultConfig) -> SimNodeFaultConfig {
        let probabilities = injected
            .probabilities
            .iter()
            .map(|(&mode, &p)| (mode, (p * self.susceptibility(mode)).min(1.0)))
            .filter(|(_, p)| *p > 0.0)
            .collect();
        SimNodeFaultConfig {
            probabilities,
            crash_window_ms: self.crash_window_ms,
            catch_up_ms: self.catch_up_ms,
            sync_stall_ms: self.sync_stall_ms,
            stale_lag_blocks: self.stale_lag_blocks,
            seed: injected.seed,
        }
        .normalized()
    }
}

#[derive(Deserialize)]
struct PersonaFile {
    persona: Vec<SimNodeProfile>,
}

pub fn parse_personas(text: &str) -> Result<Vec<SimNodeProfile>, PersonaError> {
    let file: PersonaFile = toml::from_str(text)?;
    for p in &file.persona {
        p.validate()?;
    }
    Ok(file.persona)
}

/// The four bundled client personas.
pub fn builtin_personas() -> Vec<SimNodeProfile> {
    parse_personas(BUILTIN).expect("bundled personas are valid")
}

pub fn builtin_persona(label: &str) -> Result<SimNodeProfile, PersonaError> {
    builtin_personas()
        .into_iter()
        .find(|p| p.label == label)
        .ok_or_else(|| PersonaError::Unknown(label.to_string()))
}
