//! Two-phase alternating optimization.
//!
//! Every iteration first updates the condition-encoding networks (D1, then
//! E1/G1), then the RUL-prediction networks (D2, then E2/G2). Conditions for
//! the second phase come from the current E1 in eval mode, so no gradient of
//! that phase ever reaches E1.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::seq::index::sample as sample_indices;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub use crate::model::{load_checkpoint, save_checkpoint};

use crate::data::{fit_normalizer, LabeledSample, Stage};
use crate::error::{Error, Result};
use crate::losses::{
    composite_ce, composite_rp, loss_d1, loss_d2, loss_dist, loss_e1g1, loss_e2g2, loss_recon1, loss_recon2,
    CeBatch, LabelBatch, LossEval, LossWeights, Pass, RpBatch,
};
use crate::model::{Architecture, BaceRulModel, Dimensions, Net, Nets, Variant, NOISE_HIGH, NOISE_LOW};
use crate::nn::{sample_uniform_matrix, AdamConfig, AdamState, Matrix, MlpParams};

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub weights: LossWeights,
    pub learning_rate: f64,
    /// Per-network learning rates overriding `learning_rate`.
    pub learning_rate_overrides: Nets<Option<f64>>,
    pub batch_size: usize,
    pub k_ge_updates: usize,
    pub d_updates: usize,
    pub max_iterations: usize,
    /// Evaluations without improvement before stopping; `None` never stops early.
    pub patience: Option<usize>,
    /// Iterations between two stopping-signal evaluations.
    pub eval_every: usize,
    /// Moving-average window of the stopping signal.
    pub window: usize,
    pub dims: Dimensions,
    pub arch: Architecture,
    pub seed: u64,
    pub ablation: Variant,
}

impl Default for TrainConfig {
    /// Turbofan defaults from the reference hyper-parameter table.
    fn default() -> Self {
        Self {
            weights: LossWeights::default(),
            learning_rate: 1e-3,
            learning_rate_overrides: Nets::default(),
            batch_size: 250,
            k_ge_updates: 10,
            d_updates: 1,
            max_iterations: 5000,
            patience: Some(20),
            eval_every: 10,
            window: 10,
            dims: Dimensions {
                m: 24,
                n: 32,
                d_z: 10,
                rul_cap: crate::data::CMAPSS_RUL_CAP,
            },
            arch: Architecture::default(),
            seed: 0,
            ablation: Variant::Full,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = |v: f64| v.is_finite() && v > 0.0;
        if !positive(self.learning_rate) {
            return Err(Error::Config(format!("learning_rate must be positive, got {}", self.learning_rate)));
        }
        for net in Net::ALL {
            if let Some(lr) = self.learning_rate_overrides.get(net) {
                if !positive(*lr) {
                    return Err(Error::Config(format!("learning rate for {} must be positive", net.name())));
                }
            }
        }
        if self.batch_size < 1 {
            return Err(Error::Config("batch_size must be at least 1".into()));
        }
        if self.k_ge_updates < 2 {
            return Err(Error::Config(format!(
                "k_ge_updates must be at least 2, got {}",
                self.k_ge_updates
            )));
        }
        if self.d_updates < 1 {
            return Err(Error::Config("d_updates must be at least 1".into()));
        }
        if self.max_iterations < 1 {
            return Err(Error::Config("max_iterations must be at least 1".into()));
        }
        if self.patience == Some(0) {
            return Err(Error::Config("patience must be at least 1".into()));
        }
        if self.eval_every < 1 || self.window < 1 {
            return Err(Error::Config("eval_every and window must be at least 1".into()));
        }
        self.weights.validate()?;
        self.effective_dims().validate(self.ablation)?;
        self.arch.specs(&self.effective_dims(), self.ablation)?;
        Ok(())
    }

    /// Dimensions actually trained; without a conditional space `n = m`.
    pub fn effective_dims(&self) -> Dimensions {
        let mut dims = self.dims;
        if !self.ablation.uses_conditional_space() {
            dims.n = dims.m;
        }
        dims
    }

    fn adam(&self, net: Net) -> AdamConfig {
        AdamConfig {
            learning_rate: self.learning_rate_overrides.get(net).unwrap_or(self.learning_rate),
            ..AdamConfig::default()
        }
    }
}

/// Losses of one iteration, evaluated (dropout off) on that iteration's
/// batches after its updates. Absent values belong to a disabled part of
/// the model.
#[derive(Debug, Clone, PartialEq)]
pub struct IterationRecord {
    pub iteration: usize,
    pub l_d1: Option<f64>,
    pub l_e1g1: Option<f64>,
    pub l_recon1: Option<f64>,
    pub l_d2: f64,
    pub l_e2g2: f64,
    pub l_recon2: Option<f64>,
    pub l_dist: f64,
    pub composite_ce: Option<f64>,
    pub composite_rp: f64,
    /// Accelerated-stage distance term of `l_dist`.
    pub dist_accel: f64,
    /// Normal-stage hinge term of `l_dist`.
    pub dist_hinge: f64,
}

impl IterationRecord {
    /// The nine loss fields in report-column order.
    pub fn fields(&self) -> [Option<f64>; 9] {
        [
            self.l_d1,
            self.l_e1g1,
            self.l_recon1,
            Some(self.l_d2),
            Some(self.l_e2g2),
            self.l_recon2,
            Some(self.l_dist),
            self.composite_ce,
            Some(self.composite_rp),
        ]
    }

    /// Value watched by early stopping.
    pub fn stopping_signal(&self) -> f64 {
        self.l_recon2.unwrap_or(self.l_dist)
    }
}

pub const REPORT_COLUMNS: [&str; 9] = [
    "l_d1",
    "l_e1g1",
    "l_recon1",
    "l_d2",
    "l_e2g2",
    "l_recon2",
    "l_dist",
    "composite_ce",
    "composite_rp",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    Patience,
    MaxIterations,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    pub records: Vec<IterationRecord>,
    pub stop_reason: StopReason,
    /// Iteration whose parameters were returned, if a stopping evaluation happened.
    pub best_iteration: Option<usize>,
}

impl TrainReport {
    pub fn to_csv(&self) -> String {
        let mut out = REPORT_COLUMNS.join(",");
        out.push('\n');
        for r in &self.records {
            let cells: Vec<String> = r
                .fields()
                .iter()
                .map(|v| v.map(|v| v.to_string()).unwrap_or_default())
                .collect();
            out.push_str(&cells.join(","));
            out.push('\n');
        }
        out
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }
}

/// Training data after normalization and label scaling.
struct Pool {
    xs: Matrix,
    t: Vec<f64>,
    accel: Vec<usize>,
    normal: Vec<usize>,
}

/// Stateful training loop; [`train`] drives it to completion.
pub struct Trainer {
    cfg: TrainConfig,
    model: BaceRulModel,
    adam: Nets<AdamState>,
    pool: Pool,
    rng: ChaCha8Rng,
    iteration: usize,
    last_ce: Option<CeBatch>,
    last_rp: Option<RpBatch>,
}

fn with_iteration<T>(iteration: usize, r: Result<T>) -> Result<T> {
    r.map_err(|e| match e {
        Error::Numeric(msg) => Error::Numeric(format!("{msg} at iteration {iteration}")),
        other => other,
    })
}

impl Trainer {
    pub fn new(train_data: &[LabeledSample], cfg: TrainConfig) -> Result<Self> {
        cfg.validate()?;
        let dims = cfg.effective_dims();
        if train_data.is_empty() {
            return Err(Error::Usage("training set is empty".into()));
        }
        if let Some(s) = train_data.iter().find(|s| s.x.len() != dims.m) {
            return Err(Error::Shape(format!(
                "sample of unit {} cycle {} has {} features, configuration expects m = {}",
                s.unit_id,
                s.cycle,
                s.x.len(),
                dims.m
            )));
        }
        let normalizer = fit_normalizer(train_data)?;
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let model = BaceRulModel::init(dims, cfg.ablation, &cfg.arch, normalizer, &mut rng)?;

        let mut accel = Vec::new();
        let mut normal = Vec::new();
        let mut t = Vec::with_capacity(train_data.len());
        let mut rows = Vec::with_capacity(train_data.len() * dims.m);
        for (i, s) in train_data.iter().enumerate() {
            if s.t > dims.rul_cap {
                return Err(Error::Data(format!(
                    "label {} of unit {} exceeds rul_cap {}",
                    s.t, s.unit_id, dims.rul_cap
                )));
            }
            match s.stage {
                Stage::Accelerated => accel.push(i),
                Stage::Normal => normal.push(i),
            }
            t.push(s.t as f64 * model.rul_scale);
            rows.extend(model.normalizer.apply(&s.x)?);
        }
        if accel.is_empty() {
            return Err(Error::Usage("training set has no accelerated-stage samples".into()));
        }
        let xs = Matrix::from_vec(train_data.len(), dims.m, rows)?;
        let adam = Nets::from_fn(|net| AdamState::new(model.nets.get(net), cfg.adam(net)));

        Ok(Self {
            cfg,
            model,
            adam,
            pool: Pool { xs, t, accel, normal },
            rng,
            iteration: 0,
            last_ce: None,
            last_rp: None,
        })
    }

    pub fn model(&self) -> &BaceRulModel {
        &self.model
    }

    pub fn config(&self) -> &TrainConfig {
        &self.cfg
    }

    pub fn iteration(&self) -> usize {
        self.iteration
    }

    /// Adam steps taken so far by each network.
    pub fn adam_steps(&self) -> Nets<u64> {
        Nets::from_fn(|net| self.adam.get(net).step_count())
    }

    /// Batches used by the most recent iteration.
    pub fn last_batches(&self) -> (Option<&CeBatch>, Option<&RpBatch>) {
        (self.last_ce.as_ref(), self.last_rp.as_ref())
    }

    fn rows(&self, idx: &[usize]) -> Result<Matrix> {
        Matrix::from_rows(self.pool.xs.cols(), idx.iter().map(|&i| self.pool.xs.row(i)))
    }

    fn draw(&mut self, pool: &[usize]) -> Vec<usize> {
        if pool.is_empty() {
            return Vec::new();
        }
        let amount = self.cfg.batch_size.min(pool.len());
        sample_indices(&mut self.rng, pool.len(), amount)
            .into_iter()
            .map(|k| pool[k])
            .collect()
    }

    fn label_batch(&mut self, idx: &[usize]) -> Result<LabelBatch> {
        let dims = self.model.dims;
        if idx.is_empty() {
            return Ok(LabelBatch {
                t: Vec::new(),
                c: Matrix::zeros(0, dims.n),
                z: Matrix::zeros(0, dims.d_z),
            });
        }
        let c = self.model.encode_conditions(&self.rows(idx)?)?;
        let z = sample_uniform_matrix(&mut self.rng, idx.len(), dims.d_z, NOISE_LOW, NOISE_HIGH)?;
        Ok(LabelBatch {
            t: idx.iter().map(|&i| self.pool.t[i]).collect(),
            c,
            z,
        })
    }

    fn apply(&mut self, net: Net, grad: &MlpParams, term: &str) -> Result<()> {
        if !grad.is_finite() {
            return Err(Error::Numeric(format!("gradient of {term} for {} is not finite", net.name())));
        }
        self.adam.get_mut(net).step(self.model.nets.get_mut(net), grad)
    }

    /// Weighted sum of the gradients of several losses for one network.
    fn combine(net: Net, parts: &[(f64, &LossEval)]) -> Option<MlpParams> {
        let mut acc: Option<MlpParams> = None;
        for (w, l) in parts {
            if let Some(g) = l.grad(net) {
                match &mut acc {
                    Some(a) => a.add_scaled(g, *w).expect("gradient shapes agree"),
                    None => {
                        let mut g = g.clone();
                        g.scale(*w);
                        acc = Some(g);
                    }
                }
            }
        }
        acc
    }

    /// Condition-encoding phase; returns the batch it trained on.
    pub fn step_ce(&mut self) -> Result<CeBatch> {
        let all: Vec<usize> = (0..self.pool.t.len()).collect();
        let idx = self.draw(&all);
        let xs = self.rows(&idx)?;
        let c_eps = sample_uniform_matrix(&mut self.rng, idx.len(), self.model.dims.n, NOISE_LOW, NOISE_HIGH)?;
        let batch = CeBatch { xs, c_eps };
        let w = self.cfg.weights;

        for _ in 0..self.cfg.d_updates {
            let l = loss_d1(&self.model, &batch, &mut Pass::Train(&mut self.rng))?;
            if let Some(g) = Self::combine(Net::D1, &[(w.lambda11, &l)]) {
                self.apply(Net::D1, &g, "L_D1")?;
            }
        }
        for _ in 0..self.cfg.k_ge_updates {
            let adv = loss_e1g1(&self.model, &batch, &mut Pass::Train(&mut self.rng))?;
            let rec = loss_recon1(&self.model, &batch.xs, &mut Pass::Train(&mut self.rng))?;
            for net in [Net::E1, Net::G1] {
                if let Some(g) = Self::combine(net, &[(w.lambda12, &adv), (1.0, &rec)]) {
                    self.apply(net, &g, "L_E1G1 + L_recon1")?;
                }
            }
        }
        Ok(batch)
    }

    /// RUL-prediction phase; returns the batch it trained on.
    pub fn step_rp(&mut self) -> Result<RpBatch> {
        let accel_pool = self.pool.accel.clone();
        let normal_pool = self.pool.normal.clone();
        let all_pool: Vec<usize> = (0..self.pool.t.len()).collect();
        let accel_idx = self.draw(&accel_pool);
        let normal_idx = self.draw(&normal_pool);
        let all_idx = self.draw(&all_pool);
        let batch = RpBatch {
            accel: self.label_batch(&accel_idx)?,
            normal: self.label_batch(&normal_idx)?,
            all: self.label_batch(&all_idx)?,
        };
        let w = self.cfg.weights;
        let encoder = self.model.variant.uses_label_encoder();

        for _ in 0..self.cfg.d_updates {
            let l = loss_d2(&self.model, &batch, &mut Pass::Train(&mut self.rng))?;
            if let Some(g) = Self::combine(Net::D2, &[(w.lambda21, &l)]) {
                self.apply(Net::D2, &g, "L_D2")?;
            }
        }
        for _ in 0..self.cfg.k_ge_updates {
            let adv = loss_e2g2(&self.model, &batch, &mut Pass::Train(&mut self.rng))?;
            let rec = if encoder {
                Some(loss_recon2(&self.model, &batch.all, &mut Pass::Train(&mut self.rng))?)
            } else {
                None
            };
            let dist = loss_dist(&self.model, &batch, &mut Pass::Train(&mut self.rng))?;
            let mut parts = vec![(w.lambda22, &adv), (1.0, &dist)];
            if let Some(rec) = &rec {
                parts.push((1.0, rec));
            }
            for net in [Net::E2, Net::G2] {
                if let Some(g) = Self::combine(net, &parts) {
                    self.apply(net, &g, "L_E2G2 + L_recon2 + L_dist")?;
                }
            }
        }
        Ok(batch)
    }

    /// Losses of the current model on the given batches, dropout off.
    pub fn evaluate(&self, iteration: usize, ce: Option<&CeBatch>, rp: &RpBatch) -> Result<IterationRecord> {
        let m = &self.model;
        let w = &self.cfg.weights;
        let (l_d1, l_e1g1, l_recon1, composite) = match ce {
            Some(ce) => {
                let d1 = loss_d1(m, ce, &mut Pass::Value)?.value;
                let eg = loss_e1g1(m, ce, &mut Pass::Value)?.value;
                let rec = loss_recon1(m, &ce.xs, &mut Pass::Value)?.value;
                (Some(d1), Some(eg), Some(rec), Some(composite_ce(w, d1, eg, rec)?))
            }
            None => (None, None, None, None),
        };
        let l_d2 = loss_d2(m, rp, &mut Pass::Value)?.value;
        let l_e2g2 = loss_e2g2(m, rp, &mut Pass::Value)?.value;
        let l_recon2 = if m.variant.uses_label_encoder() {
            Some(loss_recon2(m, &rp.all, &mut Pass::Value)?.value)
        } else {
            None
        };
        let dist = loss_dist(m, rp, &mut Pass::Value)?;
        let composite_rp = composite_rp(w, l_d2, l_e2g2, l_recon2.unwrap_or(0.0), dist.value)?;
        Ok(IterationRecord {
            iteration,
            l_d1,
            l_e1g1,
            l_recon1,
            l_d2,
            l_e2g2,
            l_recon2,
            l_dist: dist.value,
            composite_ce: composite,
            composite_rp,
            dist_accel: dist.terms[0],
            dist_hinge: dist.terms[1],
        })
    }

    /// One full iteration: both phases, then the report record.
    pub fn step(&mut self) -> Result<IterationRecord> {
        let iteration = self.iteration + 1;
        let result = (|| {
            let ce = if self.model.variant.uses_conditional_space() {
                Some(self.step_ce()?)
            } else {
                None
            };
            let rp = self.step_rp()?;
            let record = self.evaluate(iteration, ce.as_ref(), &rp)?;
            self.last_ce = ce;
            self.last_rp = Some(rp);
            Ok(record)
        })();
        let record = with_iteration(iteration, result)?;
        self.iteration = iteration;
        Ok(record)
    }

    pub fn into_model(self) -> BaceRulModel {
        self.model
    }
}

/// Trains until the stopping rule fires and returns the parameters with the
/// best moving-average stopping signal (the final ones if no evaluation
/// happened).
pub fn train(train_data: &[LabeledSample], cfg: &TrainConfig) -> Result<(BaceRulModel, TrainReport)> {
    let mut trainer = Trainer::new(train_data, cfg.clone())?;
    let mut records: Vec<IterationRecord> = Vec::new();
    let mut best: Option<(f64, usize, BaceRulModel)> = None;
    let mut stale = 0;
    let mut stop_reason = StopReason::MaxIterations;

    for _ in 0..cfg.max_iterations {
        let record = trainer.step()?;
        log::debug!(
            "iteration {}: ce {:?} rp {:.6}",
            record.iteration,
            record.composite_ce,
            record.composite_rp
        );
        let iteration = record.iteration;
        records.push(record);
        if iteration % cfg.eval_every != 0 {
            continue;
        }
        let tail = &records[records.len().saturating_sub(cfg.window)..];
        let avg = tail.iter().map(IterationRecord::stopping_signal).sum::<f64>() / tail.len() as f64;
        if best.as_ref().is_none_or(|(b, _, _)| avg < *b) {
            best = Some((avg, iteration, trainer.model().clone()));
            stale = 0;
        } else {
            stale += 1;
            if cfg.patience.is_some_and(|p| stale >= p) {
                stop_reason = StopReason::Patience;
                log::info!("stopping at iteration {iteration}: no improvement in {stale} evaluations");
                break;
            }
        }
    }

    let (model, best_iteration) = match best {
        Some((_, it, model)) => (model, Some(it)),
        None => (trainer.into_model(), None),
    };
    Ok((
        model,
        TrainReport {
            records,
            stop_reason,
            best_iteration,
        },
    ))
}

/// Same as [`train`]; the variant trained is `cfg.ablation`.
pub fn train_ablated(train_data: &[LabeledSample], cfg: &TrainConfig) -> Result<(BaceRulModel, TrainReport)> {
    train(train_data, cfg)
}

/// One-line summary of the final composite losses.
pub fn summarize(report: &TrainReport) -> String {
    let mut s = String::new();
    if let Some(r) = report.records.last() {
        let _ = write!(s, "iterations={} ", r.iteration);
        if let Some(ce) = r.composite_ce {
            let _ = write!(s, "composite_ce={ce:.6} ");
        }
        let _ = write!(s, "composite_rp={:.6}", r.composite_rp);
    }
    s
}
