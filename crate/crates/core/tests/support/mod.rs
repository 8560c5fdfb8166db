#![allow(dead_code)]

use bace_rul::data::{Normalizer, SynthConfig};
use bace_rul::losses::{
    loss_d1, loss_d2, loss_dist, loss_e1g1, loss_e2g2, loss_recon1, loss_recon2, CeBatch, LabelBatch, LossEval, Pass,
    RpBatch,
};
use bace_rul::model::{Architecture, BaceRulModel, Dimensions, Net, Variant};
use bace_rul::nn::{grad_check, sample_uniform, sample_uniform_matrix, Matrix, MlpParams};
use bace_rul::trainer::TrainConfig;
use bace_rul::Result;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub const FD_STEP: f64 = 1e-5;
pub const GRAD_TOL: f64 = 1e-4;
pub const BATCH: usize = 8;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// m=3, n=5, d_z=2 model with hidden widths at most 6.
pub fn tiny_model(variant: Variant, seed: u64) -> BaceRulModel {
    let n = if variant == Variant::NoConditionalSpace { 3 } else { 5 };
    let dims = Dimensions {
        m: 3,
        n,
        d_z: 2,
        rul_cap: 125,
    };
    let arch = Architecture {
        d_hidden: vec![6, 4],
        e1g1_hidden: vec![6, 5],
        e2g2_hidden: vec![5, 6],
        dropout_rate: 0.2,
    };
    let mut r = rng(seed);
    let mut model = BaceRulModel::init(dims, variant, &arch, Normalizer::identity(3), &mut r).unwrap();
    // Nonzero biases keep ReLU pre-activations off the kink at exactly 0,
    // where zero-initialized biases would otherwise put dead-layer outputs.
    for net in Net::ALL {
        for layer in model.nets.get_mut(net).layers_mut() {
            layer.biases = sample_uniform(&mut r, layer.biases.len(), -0.5, 0.5).unwrap();
        }
    }
    model
}

pub fn ce_batch(model: &BaceRulModel, seed: u64) -> CeBatch {
    let mut r = rng(seed);
    CeBatch {
        xs: sample_uniform_matrix(&mut r, BATCH, model.dims.m, -2.0, 2.0).unwrap(),
        c_eps: sample_uniform_matrix(&mut r, BATCH, model.dims.n, -1.0, 1.0).unwrap(),
    }
}

fn label_batch(model: &BaceRulModel, r: &mut ChaCha8Rng, lo: f64, hi: f64) -> LabelBatch {
    LabelBatch {
        t: sample_uniform(r, BATCH, lo, hi).unwrap(),
        c: sample_uniform_matrix(r, BATCH, model.dims.n, -1.5, 1.5).unwrap(),
        z: sample_uniform_matrix(r, BATCH, model.dims.d_z, -1.0, 1.0).unwrap(),
    }
}

/// Normal-stage labels sit at the cap (1.0 scaled), above what an untrained
/// generator emits, so the hinge is active.
pub fn rp_batch(model: &BaceRulModel, seed: u64) -> RpBatch {
    let mut r = rng(seed);
    RpBatch {
        accel: label_batch(model, &mut r, 0.0, 1.0),
        normal: label_batch(model, &mut r, 1.0, 1.0 + 1e-12),
        all: label_batch(model, &mut r, 0.0, 1.0),
    }
}

type LossFn = fn(&BaceRulModel, &CeBatch, &RpBatch, &mut Pass<'_>) -> Result<LossEval>;

/// Every loss with the networks it is minimized over.
pub fn designated() -> Vec<(&'static str, LossFn, Vec<Net>)> {
    vec![
        ("L_D1", |m, ce, _, p| loss_d1(m, ce, p), vec![Net::D1]),
        ("L_E1G1", |m, ce, _, p| loss_e1g1(m, ce, p), vec![Net::E1, Net::G1]),
        ("L_recon1", |m, ce, _, p| loss_recon1(m, &ce.xs, p), vec![Net::E1, Net::G1]),
        ("L_D2", |m, _, rp, p| loss_d2(m, rp, p), vec![Net::D2]),
        ("L_E2G2", |m, _, rp, p| loss_e2g2(m, rp, p), vec![Net::E2, Net::G2]),
        ("L_dist", |m, _, rp, p| loss_dist(m, rp, p), vec![Net::G2]),
        ("L_recon2", |m, _, rp, p| loss_recon2(m, &rp.all, p), vec![Net::E2, Net::G2]),
    ]
}

/// Max relative error between analytic and central-difference gradients
/// of `loss` with respect to `net`.
pub fn grad_error(model: &BaceRulModel, ce: &CeBatch, rp: &RpBatch, loss: LossFn, net: Net) -> f64 {
    let mut probe = model.clone();
    grad_check(model.nets.get(net), FD_STEP, |p: &MlpParams| {
        *probe.nets.get_mut(net) = p.clone();
        let l = loss(&probe, ce, rp, &mut Pass::Exact)?;
        let g = l.grad(net).cloned().expect("designated network has a gradient");
        Ok((l.value, g))
    })
    .unwrap()
}

/// `(loss, network, max relative error)` for every designated pair, on the
/// full model and on the applicable losses of both ablations.
pub fn gradient_suite() -> Vec<(String, f64)> {
    let mut out = Vec::new();
    for (variant, seed) in [
        (Variant::Full, 11),
        (Variant::NoEncoderE2, 12),
        (Variant::NoConditionalSpace, 13),
    ] {
        let model = tiny_model(variant, seed);
        let ce = ce_batch(&model, seed + 100);
        let rp = rp_batch(&model, seed + 200);
        for (name, loss, nets) in designated() {
            if loss(&model, &ce, &rp, &mut Pass::Value).is_err() {
                continue; // not defined for this variant
            }
            for net in nets {
                let probe = loss(&model, &ce, &rp, &mut Pass::Exact).unwrap();
                if probe.grad(net).is_none() {
                    continue;
                }
                let err = grad_error(&model, &ce, &rp, loss, net);
                out.push((format!("{}/{name}/{}", variant.name(), net.name()), err));
            }
        }
    }
    out
}

/// Scaled-down fixture configuration: hidden widths 32, batch 64.
pub fn fixture_config(seed: u64, ablation: Variant, max_iterations: usize) -> TrainConfig {
    TrainConfig {
        batch_size: 64,
        max_iterations,
        patience: None,
        dims: Dimensions {
            m: 8,
            n: 32,
            d_z: 10,
            rul_cap: 125,
        },
        arch: Architecture {
            d_hidden: vec![32, 32],
            e1g1_hidden: vec![32, 32, 32],
            e2g2_hidden: vec![32, 32, 32],
            dropout_rate: 0.2,
        },
        seed,
        ablation,
        ..TrainConfig::default()
    }
}

pub fn fixture_data() -> SynthConfig {
    SynthConfig {
        n_units: 10,
        min_life: 150,
        max_life: 250,
        m: 8,
        noise_std: 0.05,
        seed: 42,
        rul_cap: 125,
    }
}

pub fn random_rows(seed: u64, rows: usize, cols: usize, lo: f64, hi: f64) -> Matrix {
    sample_uniform_matrix(&mut rng(seed), rows, cols, lo, hi).unwrap()
}
