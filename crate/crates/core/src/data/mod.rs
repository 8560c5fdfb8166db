//! Unit histories, RUL labels, degradation stages and feature scaling.

mod io;
mod synth;

use std::collections::BTreeMap;

use crate::error::{Error, Result};

pub use io::{
    load_cmapss, load_generic_csv, load_rul_file, write_generic_csv, CsvDataset, CMAPSS_FIELDS,
};
pub use synth::{synth_degradation, synth_records, SynthConfig};

/// Default RUL cap for turbofan-style data.
pub const CMAPSS_RUL_CAP: u32 = 125;
/// Default RUL cap for the long-lived battery profile.
pub const BATTERY_RUL_CAP: u32 = 550;

/// One raw sensor snapshot of one unit at one operating cycle.
#[derive(Debug, Clone, PartialEq)]
pub struct CycleRecord {
    pub unit_id: u32,
    pub cycle: u32,
    pub op_settings: Vec<f64>,
    pub sensors: Vec<f64>,
}

impl CycleRecord {
    /// Operating settings followed by sensor readings.
    pub fn features(&self) -> Vec<f64> {
        let mut f = Vec::with_capacity(self.op_settings.len() + self.sensors.len());
        f.extend_from_slice(&self.op_settings);
        f.extend_from_slice(&self.sensors);
        f
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Stage {
    Normal,
    Accelerated,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledSample {
    pub unit_id: u32,
    pub cycle: u32,
    pub x: Vec<f64>,
    /// Unclipped remaining cycles, counting the current one.
    pub t_raw: u32,
    /// `min(t_raw, rul_cap)`.
    pub t: u32,
    pub stage: Stage,
}

impl LabeledSample {
    fn new(unit_id: u32, cycle: u32, x: Vec<f64>, t_raw: u32, rul_cap: u32) -> Self {
        Self {
            unit_id,
            cycle,
            x,
            t_raw,
            t: t_raw.min(rul_cap),
            stage: stage_of(t_raw, rul_cap),
        }
    }
}

/// Normal only when the raw label is strictly above the cap.
pub fn stage_of(t_raw: u32, rul_cap: u32) -> Stage {
    if t_raw > rul_cap {
        Stage::Normal
    } else {
        Stage::Accelerated
    }
}

/// Groups records by unit and checks each unit runs `1..=C_end` without gaps.
fn group_units(records: &[CycleRecord]) -> Result<BTreeMap<u32, Vec<&CycleRecord>>> {
    let mut units: BTreeMap<u32, Vec<&CycleRecord>> = BTreeMap::new();
    for r in records {
        units.entry(r.unit_id).or_default().push(r);
    }
    for (unit, rows) in units.iter_mut() {
        rows.sort_by_key(|r| r.cycle);
        for (i, r) in rows.iter().enumerate() {
            let expected = i as u32 + 1;
            if r.cycle != expected {
                return Err(Error::Data(format!(
                    "unit {unit}: expected cycle {expected}, found {}",
                    r.cycle
                )));
            }
        }
    }
    Ok(units)
}

/// Run-to-failure labeling: `t_raw = C_end - c + 1`, clipped at `rul_cap`.
///
/// Output is ordered by `(unit_id, cycle)`.
pub fn compute_rul_labels(records: &[CycleRecord], rul_cap: u32) -> Result<Vec<LabeledSample>> {
    check_cap(rul_cap)?;
    let units = group_units(records)?;
    let mut out = Vec::with_capacity(records.len());
    for (unit, rows) in units {
        let c_end = rows.len() as u32;
        for r in rows {
            out.push(LabeledSample::new(unit, r.cycle, r.features(), c_end - r.cycle + 1, rul_cap));
        }
    }
    Ok(out)
}

/// Labels truncated test histories from per-unit RUL values at the last
/// observed cycle: at cycle `c' <= c_last` the raw label is `r + (c_last - c')`.
///
/// `ruls[i]` belongs to the i-th unit in ascending unit-id order. A value of
/// zero is raised to one so labels stay positive.
pub fn label_with_final_rul(
    records: &[CycleRecord],
    ruls: &[u32],
    rul_cap: u32,
) -> Result<Vec<LabeledSample>> {
    check_cap(rul_cap)?;
    let units = group_units(records)?;
    if units.len() != ruls.len() {
        return Err(Error::Usage(format!(
            "{} RUL values for {} test units",
            ruls.len(),
            units.len()
        )));
    }
    let mut out = Vec::with_capacity(records.len());
    for ((unit, rows), &r) in units.into_iter().zip(ruls) {
        let r = if r == 0 {
            log::warn!("unit {unit}: ground-truth RUL 0 raised to 1");
            1
        } else {
            r
        };
        let c_last = rows.len() as u32;
        for rec in rows {
            out.push(LabeledSample::new(
                unit,
                rec.cycle,
                rec.features(),
                r + (c_last - rec.cycle),
                rul_cap,
            ));
        }
    }
    Ok(out)
}

fn check_cap(rul_cap: u32) -> Result<()> {
    if rul_cap == 0 {
        return Err(Error::Config("rul_cap must be at least 1".into()));
    }
    Ok(())
}

/// Disjoint partition by stage tag, preserving order.
pub fn split_stages(samples: &[LabeledSample]) -> (Vec<&LabeledSample>, Vec<&LabeledSample>) {
    samples.iter().partition(|s| s.stage == Stage::Normal)
}

pub const STD_FLOOR: f64 = 1e-8;

/// Per-feature z-score from training statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct Normalizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Normalizer {
    pub fn fit<'a, I>(rows: I) -> Result<Self>
    where
        I: IntoIterator<Item = &'a [f64]>,
    {
        let rows: Vec<&[f64]> = rows.into_iter().collect();
        if rows.len() < 2 {
            return Err(Error::Usage(format!(
                "need at least 2 samples to fit a normalizer, got {}",
                rows.len()
            )));
        }
        let dim = rows[0].len();
        if rows.iter().any(|r| r.len() != dim) {
            return Err(Error::Shape("feature rows have different widths".into()));
        }
        let n = rows.len() as f64;
        let mut mean = vec![0.0; dim];
        for r in &rows {
            for (m, v) in mean.iter_mut().zip(r.iter()) {
                *m += v;
            }
        }
        for m in &mut mean {
            *m /= n;
        }
        let mut var = vec![0.0; dim];
        for r in &rows {
            for ((s, v), m) in var.iter_mut().zip(r.iter()).zip(&mean) {
                *s += (v - m) * (v - m);
            }
        }
        let std = var.into_iter().map(|s| (s / n).sqrt().max(STD_FLOOR)).collect();
        Ok(Self { mean, std })
    }

    /// Identity transform of the given width.
    pub fn identity(dim: usize) -> Self {
        Self {
            mean: vec![0.0; dim],
            std: vec![1.0; dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check(x)?;
        Ok(x.iter()
            .zip(&self.mean)
            .zip(&self.std)
            .map(|((v, m), s)| (v - m) / s)
            .collect())
    }

    pub fn invert(&self, z: &[f64]) -> Result<Vec<f64>> {
        self.check(z)?;
        Ok(z.iter()
            .zip(&self.mean)
            .zip(&self.std)
            .map(|((v, m), s)| v * s + m)
            .collect())
    }

    fn check(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim() {
            return Err(Error::Shape(format!(
                "normalizer fitted on {} features, got {}",
                self.dim(),
                x.len()
            )));
        }
        Ok(())
    }
}

/// Fits on the feature vectors of `train`.
pub fn fit_normalizer(train: &[LabeledSample]) -> Result<Normalizer> {
    Normalizer::fit(train.iter().map(|s| s.x.as_slice()))
}

/// Returns copies of `samples` with normalized features.
pub fn apply_normalizer(norm: &Normalizer, samples: &[LabeledSample]) -> Result<Vec<LabeledSample>> {
    samples
        .iter()
        .map(|s| {
            Ok(LabeledSample {
                x: norm.apply(&s.x)?,
                ..s.clone()
            })
        })
        .collect()
}
