//! Adversarial, reconstruction and distortion objectives.
//!
//! Expectations are mini-batch means. Each loss returns its value and the
//! gradient for the parameter groups it is minimized over; the gradient
//! slot of every other network is `None`, i.e. identically zero.
//!
//! Discriminator probabilities are clamped to `[PROB_FLOOR, 1 - PROB_FLOOR]`
//! before taking logarithms; the clamp has zero derivative where it binds.
//! Euclidean norms (and absolute values of scalar label errors) are
//! smoothed as `sqrt(sum(d^2) + 1e-12)`.

use rand::RngCore;

use crate::error::{ensure_finite, Error, Result};
use crate::model::{BaceRulModel, Net, Nets, PROB_FLOOR};
use crate::nn::{ForwardCache, Matrix, MlpParams, Mode};

pub const NORM_SMOOTHING: f64 = 1e-12;

/// How a loss is evaluated.
pub enum Pass<'r> {
    /// Dropout off, value only.
    Value,
    /// Dropout off, value and gradients.
    Exact,
    /// Dropout on (masks drawn from the generator), value and gradients.
    Train(&'r mut dyn RngCore),
}

impl Pass<'_> {
    fn wants_grads(&self) -> bool {
        !matches!(self, Pass::Value)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossWeights {
    pub lambda11: f64,
    pub lambda12: f64,
    pub lambda21: f64,
    pub lambda22: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            lambda11: 1.0,
            lambda12: 1.0,
            lambda21: 1.0,
            lambda22: 1.0,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("lambda11", self.lambda11),
            ("lambda12", self.lambda12),
            ("lambda21", self.lambda21),
            ("lambda22", self.lambda22),
        ] {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::Config(format!("{name} must be a finite non-negative number, got {v}")));
            }
        }
        Ok(())
    }
}

/// Measurements and matching noise conditions for the condition-encoding losses.
#[derive(Debug, Clone, PartialEq)]
pub struct CeBatch {
    /// Normalized measurements, one per row.
    pub xs: Matrix,
    /// Noise conditions `c_eps`, one per row.
    pub c_eps: Matrix,
}

/// Labels (scaled), their conditions and latent noise.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelBatch {
    pub t: Vec<f64>,
    pub c: Matrix,
    pub z: Matrix,
}

impl LabelBatch {
    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    fn t_column(&self) -> Matrix {
        Matrix::from_vec(self.t.len(), 1, self.t.clone()).expect("column shape")
    }

    fn check(&self, name: &str, n: usize, d_z: usize) -> Result<()> {
        let rows = self.t.len();
        if self.c.rows() != rows || self.z.rows() != rows {
            return Err(Error::Shape(format!(
                "{name}: {rows} labels but {} conditions and {} noise rows",
                self.c.rows(),
                self.z.rows()
            )));
        }
        if rows > 0 && (self.c.cols() != n || self.z.cols() != d_z) {
            return Err(Error::Shape(format!(
                "{name}: conditions must be {n} wide and noise {d_z} wide"
            )));
        }
        Ok(())
    }
}

/// Sub-batches for the RUL-prediction losses.
#[derive(Debug, Clone, PartialEq)]
pub struct RpBatch {
    /// Accelerated-stage samples.
    pub accel: LabelBatch,
    /// Normal-stage samples (may be empty).
    pub normal: LabelBatch,
    /// Samples from the whole pool.
    pub all: LabelBatch,
}

impl RpBatch {
    fn check(&self, model: &BaceRulModel) -> Result<()> {
        let (n, d_z) = (model.dims.n, model.dims.d_z);
        self.accel.check("accelerated batch", n, d_z)?;
        self.normal.check("normal batch", n, d_z)?;
        self.all.check("pool batch", n, d_z)?;
        if self.accel.is_empty() {
            return Err(Error::Usage("accelerated-stage batch is empty".into()));
        }
        if self.all.is_empty() {
            return Err(Error::Usage("pool batch is empty".into()));
        }
        Ok(())
    }
}

impl CeBatch {
    fn check(&self, model: &BaceRulModel) -> Result<()> {
        if !model.variant.uses_conditional_space() {
            return Err(Error::Usage("model has no conditional space".into()));
        }
        if self.xs.rows() == 0 {
            return Err(Error::Usage("condition-encoding batch is empty".into()));
        }
        if self.c_eps.rows() != self.xs.rows() {
            return Err(Error::Shape(format!(
                "{} measurements but {} noise conditions",
                self.xs.rows(),
                self.c_eps.rows()
            )));
        }
        if self.xs.cols() != model.dims.m || self.c_eps.cols() != model.dims.n {
            return Err(Error::Shape(format!(
                "batch widths {}/{} do not match m={} n={}",
                self.xs.cols(),
                self.c_eps.cols(),
                model.dims.m,
                model.dims.n
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct LossEval {
    pub value: f64,
    /// The two expectation terms whose sum is `value` (second is 0 for
    /// single-term losses).
    pub terms: [f64; 2],
    pub grads: Nets<Option<MlpParams>>,
}

impl LossEval {
    fn new(terms: [f64; 2], grads: Nets<Option<MlpParams>>, name: &str) -> Result<Self> {
        let value = ensure_finite(terms[0] + terms[1], || name.to_string())?;
        Ok(Self { value, terms, grads })
    }

    pub fn grad(&self, net: Net) -> Option<&MlpParams> {
        self.grads.get(net).as_ref()
    }
}

fn forward(net: &MlpParams, input: &Matrix, pass: &mut Pass<'_>) -> Result<(Matrix, Option<ForwardCache>)> {
    match pass {
        Pass::Value => Ok((net.eval(input)?, None)),
        Pass::Exact => {
            let (out, cache) = net.forward_eval(input)?;
            Ok((out, Some(cache)))
        }
        Pass::Train(rng) => {
            let (out, cache) = net.forward(input, Mode::Train, &mut **rng)?;
            Ok((out, Some(cache)))
        }
    }
}

fn backward(net: &MlpParams, cache: &Option<ForwardCache>, grad: &Matrix) -> Result<(MlpParams, Matrix)> {
    let cache = cache
        .as_ref()
        .ok_or_else(|| Error::Usage("gradient requested from a value-only pass".into()))?;
    net.backward(cache, grad)
}

fn accumulate(slot: &mut Option<MlpParams>, g: MlpParams) -> Result<()> {
    match slot {
        Some(acc) => acc.add_scaled(&g, 1.0),
        None => {
            *slot = Some(g);
            Ok(())
        }
    }
}

/// Which side of the binary cross-entropy a probability sits on.
#[derive(Clone, Copy)]
enum Side {
    /// `-log p`
    Positive,
    /// `-log(1 - p)`
    Negative,
}

/// Mean clamped cross-entropy over a column of probabilities, with the
/// gradient with respect to the unclamped probabilities.
fn mean_cross_entropy(p: &Matrix, side: Side) -> (f64, Matrix) {
    let count = p.rows() as f64;
    let mut total = 0.0;
    let mut grad = Matrix::zeros(p.rows(), 1);
    for (r, g) in grad.as_mut_slice().iter_mut().enumerate() {
        let raw = p.row(r)[0];
        let q = raw.clamp(PROB_FLOOR, 1.0 - PROB_FLOOR);
        let inside = raw > PROB_FLOOR && raw < 1.0 - PROB_FLOOR;
        match side {
            Side::Positive => {
                total -= q.ln();
                if inside {
                    *g = -1.0 / (q * count);
                }
            }
            Side::Negative => {
                total -= (1.0 - q).ln();
                if inside {
                    *g = 1.0 / ((1.0 - q) * count);
                }
            }
        }
    }
    (total / count, grad)
}

/// Mean smoothed Euclidean norm of `pred - target` rows, with its gradient
/// with respect to `pred`.
fn mean_smooth_norm(pred: &Matrix, target: &Matrix) -> (f64, Matrix) {
    let count = pred.rows() as f64;
    let mut total = 0.0;
    let mut grad = Matrix::zeros(pred.rows(), pred.cols());
    for r in 0..pred.rows() {
        let (p, t) = (pred.row(r), target.row(r));
        let sq: f64 = p.iter().zip(t).map(|(a, b)| (a - b) * (a - b)).sum();
        let norm = (sq + NORM_SMOOTHING).sqrt();
        total += norm;
        for ((g, a), b) in grad.row_mut(r).iter_mut().zip(p).zip(t) {
            *g = (a - b) / (norm * count);
        }
    }
    (total / count, grad)
}

fn concat(parts: &[&Matrix]) -> Result<Matrix> {
    Matrix::hconcat(parts)
}

/// Discriminator-2 input and the column widths of its blocks.
fn d2_input(model: &BaceRulModel, t: &Matrix, z: &Matrix, c: &Matrix) -> Result<(Matrix, Vec<usize>)> {
    if model.variant.uses_label_encoder() {
        Ok((concat(&[t, z, c])?, vec![1, z.cols(), c.cols()]))
    } else {
        Ok((concat(&[t, c])?, vec![1, c.cols()]))
    }
}

/// `-E[log D1(x, E1(x))] - E[log(1 - D1(G1(c_eps), c_eps))]`, over `d1`.
pub fn loss_d1(model: &BaceRulModel, batch: &CeBatch, pass: &mut Pass<'_>) -> Result<LossEval> {
    batch.check(model)?;
    let nets = &model.nets;
    let (c_real, _) = forward(&nets.e1, &batch.xs, pass)?;
    let (p_real, cache_real) = forward(&nets.d1, &concat(&[&batch.xs, &c_real])?, pass)?;
    let (x_fake, _) = forward(&nets.g1, &batch.c_eps, pass)?;
    let (p_fake, cache_fake) = forward(&nets.d1, &concat(&[&x_fake, &batch.c_eps])?, pass)?;

    let (real_term, g_real) = mean_cross_entropy(&p_real, Side::Positive);
    let (fake_term, g_fake) = mean_cross_entropy(&p_fake, Side::Negative);

    let mut grads = Nets::default();
    if pass.wants_grads() {
        accumulate(&mut grads.d1, backward(&nets.d1, &cache_real, &g_real)?.0)?;
        accumulate(&mut grads.d1, backward(&nets.d1, &cache_fake, &g_fake)?.0)?;
    }
    LossEval::new([real_term, fake_term], grads, "L_D1")
}

/// `-E[log D1(G1(c_eps), c_eps)] - E[log(1 - D1(x, E1(x)))]`, over `e1` and `g1`.
pub fn loss_e1g1(model: &BaceRulModel, batch: &CeBatch, pass: &mut Pass<'_>) -> Result<LossEval> {
    batch.check(model)?;
    let nets = &model.nets;
    let m = model.dims.m;
    let n = model.dims.n;
    let (c_real, cache_e1) = forward(&nets.e1, &batch.xs, pass)?;
    let (p_real, cache_real) = forward(&nets.d1, &concat(&[&batch.xs, &c_real])?, pass)?;
    let (x_fake, cache_g1) = forward(&nets.g1, &batch.c_eps, pass)?;
    let (p_fake, cache_fake) = forward(&nets.d1, &concat(&[&x_fake, &batch.c_eps])?, pass)?;

    let (fake_term, g_fake) = mean_cross_entropy(&p_fake, Side::Positive);
    let (real_term, g_real) = mean_cross_entropy(&p_real, Side::Negative);

    let mut grads = Nets::default();
    if pass.wants_grads() {
        let (_, d_real_in) = backward(&nets.d1, &cache_real, &g_real)?;
        let d_c = d_real_in.hsplit(&[m, n])?.remove(1);
        grads.e1 = Some(backward(&nets.e1, &cache_e1, &d_c)?.0);

        let (_, d_fake_in) = backward(&nets.d1, &cache_fake, &g_fake)?;
        let d_x = d_fake_in.hsplit(&[m, n])?.remove(0);
        grads.g1 = Some(backward(&nets.g1, &cache_g1, &d_x)?.0);
    }
    LossEval::new([fake_term, real_term], grads, "L_E1G1")
}

/// `E ||G1(E1(x)) - x||`, over `e1` and `g1`.
pub fn loss_recon1(model: &BaceRulModel, xs: &Matrix, pass: &mut Pass<'_>) -> Result<LossEval> {
    if !model.variant.uses_conditional_space() {
        return Err(Error::Usage("model has no conditional space".into()));
    }
    if xs.rows() == 0 {
        return Err(Error::Usage("reconstruction batch is empty".into()));
    }
    let nets = &model.nets;
    let (c, cache_e1) = forward(&nets.e1, xs, pass)?;
    let (x_rec, cache_g1) = forward(&nets.g1, &c, pass)?;
    let (value, g_rec) = mean_smooth_norm(&x_rec, xs);

    let mut grads = Nets::default();
    if pass.wants_grads() {
        let (g_g1, d_c) = backward(&nets.g1, &cache_g1, &g_rec)?;
        grads.g1 = Some(g_g1);
        grads.e1 = Some(backward(&nets.e1, &cache_e1, &d_c)?.0);
    }
    LossEval::new([value, 0.0], grads, "L_recon1")
}

/// Forward pieces shared by the two RUL-prediction adversarial losses.
struct RpAdversarial {
    real_in_widths: Vec<usize>,
    fake_in_widths: Vec<usize>,
    p_real: Matrix,
    p_fake: Matrix,
    cache_e2: Option<ForwardCache>,
    cache_g2: Option<ForwardCache>,
    cache_real: Option<ForwardCache>,
    cache_fake: Option<ForwardCache>,
}

fn rp_adversarial(model: &BaceRulModel, batch: &RpBatch, pass: &mut Pass<'_>) -> Result<RpAdversarial> {
    batch.check(model)?;
    let nets = &model.nets;
    let t_a = batch.accel.t_column();

    let (z_real, cache_e2) = if model.variant.uses_label_encoder() {
        forward(&nets.e2, &concat(&[&t_a, &batch.accel.c])?, pass)?
    } else {
        (Matrix::zeros(t_a.rows(), 0), None)
    };
    let (real_in, real_in_widths) = d2_input(model, &t_a, &z_real, &batch.accel.c)?;
    let (p_real, cache_real) = forward(&nets.d2, &real_in, pass)?;

    let (t_gen, cache_g2) = forward(&nets.g2, &concat(&[&batch.all.z, &batch.all.c])?, pass)?;
    let (fake_in, fake_in_widths) = d2_input(model, &t_gen, &batch.all.z, &batch.all.c)?;
    let (p_fake, cache_fake) = forward(&nets.d2, &fake_in, pass)?;

    Ok(RpAdversarial {
        real_in_widths,
        fake_in_widths,
        p_real,
        p_fake,
        cache_e2,
        cache_g2,
        cache_real,
        cache_fake,
    })
}

/// `-E_accel[log D2(t, E2(t, c), c)] - E_pool[log(1 - D2(G2(z, c), z, c))]`, over `d2`.
///
/// Without a label encoder the triples become `(t, c)` pairs.
pub fn loss_d2(model: &BaceRulModel, batch: &RpBatch, pass: &mut Pass<'_>) -> Result<LossEval> {
    let fw = rp_adversarial(model, batch, pass)?;
    let (real_term, g_real) = mean_cross_entropy(&fw.p_real, Side::Positive);
    let (fake_term, g_fake) = mean_cross_entropy(&fw.p_fake, Side::Negative);
    let mut grads = Nets::default();
    if pass.wants_grads() {
        accumulate(&mut grads.d2, backward(&model.nets.d2, &fw.cache_real, &g_real)?.0)?;
        accumulate(&mut grads.d2, backward(&model.nets.d2, &fw.cache_fake, &g_fake)?.0)?;
    }
    LossEval::new([real_term, fake_term], grads, "L_D2")
}

/// `-E_pool[log D2(G2(z, c), z, c)] - E_accel[log(1 - D2(t, E2(t, c), c))]`,
/// over `g2` and `e2`.
///
/// Without a label encoder the second term has no trainable parameters and
/// is dropped.
pub fn loss_e2g2(model: &BaceRulModel, batch: &RpBatch, pass: &mut Pass<'_>) -> Result<LossEval> {
    let fw = rp_adversarial(model, batch, pass)?;
    let nets = &model.nets;
    let (fake_term, g_fake) = mean_cross_entropy(&fw.p_fake, Side::Positive);
    let encoder = model.variant.uses_label_encoder();
    let (real_term, g_real) = if encoder {
        mean_cross_entropy(&fw.p_real, Side::Negative)
    } else {
        (0.0, Matrix::zeros(0, 1))
    };

    let mut grads = Nets::default();
    if pass.wants_grads() {
        let (_, d_fake_in) = backward(&nets.d2, &fw.cache_fake, &g_fake)?;
        let d_t = d_fake_in.hsplit(&fw.fake_in_widths)?.remove(0);
        grads.g2 = Some(backward(&nets.g2, &fw.cache_g2, &d_t)?.0);
        if encoder {
            let (_, d_real_in) = backward(&nets.d2, &fw.cache_real, &g_real)?;
            let d_z = d_real_in.hsplit(&fw.real_in_widths)?.remove(1);
            grads.e2 = Some(backward(&nets.e2, &fw.cache_e2, &d_z)?.0);
        }
    }
    LossEval::new([fake_term, real_term], grads, "L_E2G2")
}

/// `E_accel |t - G2(z, c)| + E_normal [max(0, t - G2(z, c))]^2`, over `g2`.
///
/// `terms` holds the accelerated-stage distance and the normal-stage hinge
/// penalty; the latter is 0 when the normal batch is empty.
pub fn loss_dist(model: &BaceRulModel, batch: &RpBatch, pass: &mut Pass<'_>) -> Result<LossEval> {
    batch.check(model)?;
    let g2 = &model.nets.g2;

    let (t_gen_a, cache_a) = forward(g2, &concat(&[&batch.accel.z, &batch.accel.c])?, pass)?;
    let (accel_term, g_a) = mean_smooth_norm(&t_gen_a, &batch.accel.t_column());

    let mut hinge_term = 0.0;
    let mut normal = None;
    if !batch.normal.is_empty() {
        let (t_gen_n, cache_n) = forward(g2, &concat(&[&batch.normal.z, &batch.normal.c])?, pass)?;
        let count = batch.normal.len() as f64;
        let mut g_n = Matrix::zeros(batch.normal.len(), 1);
        for (r, (&t, g)) in batch.normal.t.iter().zip(g_n.as_mut_slice()).enumerate() {
            let shortfall = (t - t_gen_n.row(r)[0]).max(0.0);
            hinge_term += shortfall * shortfall;
            *g = -2.0 * shortfall / count;
        }
        hinge_term /= count;
        normal = Some((cache_n, g_n));
    }

    let mut grads = Nets::default();
    if pass.wants_grads() {
        accumulate(&mut grads.g2, backward(g2, &cache_a, &g_a)?.0)?;
        if let Some((cache_n, g_n)) = normal {
            accumulate(&mut grads.g2, backward(g2, &cache_n, &g_n)?.0)?;
        }
    }
    LossEval::new([accel_term, hinge_term], grads, "L_dist")
}

/// `E_pool |G2(E2(t, c), c) - t|`, over `g2` and `e2`.
pub fn loss_recon2(model: &BaceRulModel, pairs: &LabelBatch, pass: &mut Pass<'_>) -> Result<LossEval> {
    if !model.variant.uses_label_encoder() {
        return Err(Error::Usage("model has no label encoder".into()));
    }
    pairs.check("pool batch", model.dims.n, model.dims.d_z)?;
    if pairs.is_empty() {
        return Err(Error::Usage("reconstruction batch is empty".into()));
    }
    let nets = &model.nets;
    let t = pairs.t_column();
    let (z, cache_e2) = forward(&nets.e2, &concat(&[&t, &pairs.c])?, pass)?;
    let (t_rec, cache_g2) = forward(&nets.g2, &concat(&[&z, &pairs.c])?, pass)?;
    let (value, g_rec) = mean_smooth_norm(&t_rec, &t);

    let mut grads = Nets::default();
    if pass.wants_grads() {
        let (g_g2, d_in) = backward(&nets.g2, &cache_g2, &g_rec)?;
        grads.g2 = Some(g_g2);
        let d_z = d_in.hsplit(&[model.dims.d_z, model.dims.n])?.remove(0);
        grads.e2 = Some(backward(&nets.e2, &cache_e2, &d_z)?.0);
    }
    LossEval::new([value, 0.0], grads, "L_recon2")
}

/// `lambda11 L_D1 + lambda12 L_E1G1 + L_recon1`.
pub fn composite_ce(w: &LossWeights, l_d1: f64, l_e1g1: f64, l_recon1: f64) -> Result<f64> {
    ensure_finite(w.lambda11 * l_d1 + w.lambda12 * l_e1g1 + l_recon1, || {
        "composite CE loss".to_string()
    })
}

/// `lambda21 L_D2 + lambda22 L_E2G2 + L_recon2 + L_dist`.
pub fn composite_rp(w: &LossWeights, l_d2: f64, l_e2g2: f64, l_recon2: f64, l_dist: f64) -> Result<f64> {
    ensure_finite(w.lambda21 * l_d2 + w.lambda22 * l_e2g2 + l_recon2 + l_dist, || {
        "composite RP loss".to_string()
    })
}
