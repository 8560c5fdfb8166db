//! Synthetic run-to-failure fleets.
//!
//! Each unit lives `L ~ U{min_life..=max_life}` cycles. Its health is
//! `h(c) = min(1, t_raw(c) / rul_cap)`, flat while the unit is in the normal
//! stage and falling linearly to zero afterwards. Every sensor is a fixed
//! (fleet-wide) quadratic function of the wear `1 - h` plus Gaussian noise.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::{compute_rul_labels, CycleRecord, LabeledSample};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub n_units: u32,
    pub min_life: u32,
    pub max_life: u32,
    pub m: usize,
    pub noise_std: f64,
    pub seed: u64,
    pub rul_cap: u32,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            n_units: 10,
            min_life: 150,
            max_life: 250,
            m: 8,
            noise_std: 0.05,
            seed: 42,
            rul_cap: 125,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_units < 2 {
            return Err(Error::Config("synthetic fleet needs at least 2 units".into()));
        }
        if self.min_life < 1 || self.min_life > self.max_life {
            return Err(Error::Config(format!(
                "lifetimes need 1 <= min_life <= max_life, got {}..{}",
                self.min_life, self.max_life
            )));
        }
        if self.m < 2 {
            return Err(Error::Config("synthetic data needs at least 2 features".into()));
        }
        if !(self.noise_std >= 0.0) || !self.noise_std.is_finite() {
            return Err(Error::Config(format!("invalid noise_std {}", self.noise_std)));
        }
        if self.rul_cap < 1 {
            return Err(Error::Config("rul_cap must be at least 1".into()));
        }
        Ok(())
    }

    /// Units `1..=n_train` go to training, the rest to test.
    pub fn n_train_units(&self) -> u32 {
        ((self.n_units as f64 * 0.8).round() as u32).clamp(1, self.n_units - 1)
    }

    pub fn feature_names(&self) -> Vec<String> {
        (1..=self.m).map(|j| format!("s{j}")).collect()
    }
}

struct SensorModel {
    offset: f64,
    linear: f64,
    quadratic: f64,
}

/// Raw `(train, test)` records of a synthetic fleet.
pub fn synth_records(cfg: &SynthConfig) -> Result<(Vec<CycleRecord>, Vec<CycleRecord>)> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let sensors: Vec<SensorModel> = (0..cfg.m)
        .map(|_| SensorModel {
            offset: rng.random_range(-1.0..1.0),
            linear: rng.random_range(-2.0..2.0),
            quadratic: rng.random_range(-2.0..2.0),
        })
        .collect();
    let noise = Normal::new(0.0, cfg.noise_std).map_err(|e| Error::Config(e.to_string()))?;
    let cap = cfg.rul_cap as f64;
    let n_train = cfg.n_train_units();

    let mut train = Vec::new();
    let mut test = Vec::new();
    for unit_id in 1..=cfg.n_units {
        let life = rng.random_range(cfg.min_life..=cfg.max_life);
        let target = if unit_id <= n_train { &mut train } else { &mut test };
        for cycle in 1..=life {
            let t_raw = (life - cycle + 1) as f64;
            let wear = 1.0 - (t_raw / cap).min(1.0);
            let readings = sensors
                .iter()
                .map(|s| {
                    let clean = s.offset + s.linear * wear + s.quadratic * wear * wear;
                    if cfg.noise_std > 0.0 {
                        clean + noise.sample(&mut rng)
                    } else {
                        clean
                    }
                })
                .collect();
            target.push(CycleRecord {
                unit_id,
                cycle,
                op_settings: Vec::new(),
                sensors: readings,
            });
        }
    }
    Ok((train, test))
}

/// Labeled `(train, test)` synthetic datasets with unnormalized features.
pub fn synth_degradation(cfg: &SynthConfig) -> Result<(Vec<LabeledSample>, Vec<LabeledSample>)> {
    let (train, test) = synth_records(cfg)?;
    Ok((
        compute_rul_labels(&train, cfg.rul_cap)?,
        compute_rul_labels(&test, cfg.rul_cap)?,
    ))
}
