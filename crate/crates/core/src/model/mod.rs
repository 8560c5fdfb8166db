//! The six-network predictor.
//!
//! Condition encoding: `E1: x -> c` widens the measurements into the
//! conditional space, `G1: c -> x` maps back, and `D1` scores `(x, c)` pairs.
//! RUL prediction: `G2: (z, c) -> t` generates a label from latent noise,
//! `E2: (t, c) -> z` encodes a label into the latent space, and `D2` scores
//! `(t, z, c)` triples.
//!
//! Labels are handled internally in scaled units `t / rul_cap`; only
//! [`BaceRulModel::predict`] speaks cycles.

mod checkpoint;

use rand::Rng;

use crate::data::Normalizer;
use crate::error::{Error, Result};
use crate::nn::{sample_uniform_matrix, Activation, Matrix, MlpParams, MlpSpec};

pub use checkpoint::{load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint, CHECKPOINT_HEADER};

/// Lower clamp for discriminator probabilities; the upper clamp is `1 - PROB_FLOOR`.
pub const PROB_FLOOR: f64 = 1e-7;
/// Latent noise is drawn from `[NOISE_LOW, NOISE_HIGH)` in every coordinate.
pub const NOISE_LOW: f64 = -1.0;
pub const NOISE_HIGH: f64 = 1.0;
pub const DEFAULT_PREDICTION_SAMPLES: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Net {
    E1,
    G1,
    D1,
    E2,
    G2,
    D2,
}

impl Net {
    pub const ALL: [Net; 6] = [Net::E1, Net::G1, Net::D1, Net::E2, Net::G2, Net::D2];

    pub fn name(self) -> &'static str {
        match self {
            Net::E1 => "e1",
            Net::G1 => "g1",
            Net::D1 => "d1",
            Net::E2 => "e2",
            Net::G2 => "g2",
            Net::D2 => "d2",
        }
    }
}

/// One value per network.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Nets<T> {
    pub e1: T,
    pub g1: T,
    pub d1: T,
    pub e2: T,
    pub g2: T,
    pub d2: T,
}

impl<T> Nets<T> {
    pub fn from_fn(mut f: impl FnMut(Net) -> T) -> Self {
        Self {
            e1: f(Net::E1),
            g1: f(Net::G1),
            d1: f(Net::D1),
            e2: f(Net::E2),
            g2: f(Net::G2),
            d2: f(Net::D2),
        }
    }

    pub fn get(&self, net: Net) -> &T {
        match net {
            Net::E1 => &self.e1,
            Net::G1 => &self.g1,
            Net::D1 => &self.d1,
            Net::E2 => &self.e2,
            Net::G2 => &self.g2,
            Net::D2 => &self.d2,
        }
    }

    pub fn get_mut(&mut self, net: Net) -> &mut T {
        match net {
            Net::E1 => &mut self.e1,
            Net::G1 => &mut self.g1,
            Net::D1 => &mut self.d1,
            Net::E2 => &mut self.e2,
            Net::G2 => &mut self.g2,
            Net::D2 => &mut self.d2,
        }
    }
}

/// Which parts of the architecture are active.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum Variant {
    #[default]
    Full,
    /// Measurements feed the RUL generator directly (`c = x`, `n = m`).
    NoConditionalSpace,
    /// No label encoder: `D2` scores `(t, c)` pairs.
    NoEncoderE2,
}

impl Variant {
    pub fn name(self) -> &'static str {
        match self {
            Variant::Full => "none",
            Variant::NoConditionalSpace => "no-cond",
            Variant::NoEncoderE2 => "no-e2",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        match s {
            "none" | "full" => Some(Variant::Full),
            "no-cond" => Some(Variant::NoConditionalSpace),
            "no-e2" => Some(Variant::NoEncoderE2),
            _ => None,
        }
    }

    pub fn uses_conditional_space(self) -> bool {
        self != Variant::NoConditionalSpace
    }

    pub fn uses_label_encoder(self) -> bool {
        self != Variant::NoEncoderE2
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Dimensions {
    /// Measurement features.
    pub m: usize,
    /// Conditional space.
    pub n: usize,
    /// Latent space.
    pub d_z: usize,
    /// RUL early constant value, in cycles.
    pub rul_cap: u32,
}

impl Dimensions {
    pub fn validate(&self, variant: Variant) -> Result<()> {
        if self.m < 1 || self.n < 1 || self.d_z < 1 {
            return Err(Error::Config(format!(
                "dimensions must be positive (m={}, n={}, d_z={})",
                self.m, self.n, self.d_z
            )));
        }
        if self.rul_cap < 1 {
            return Err(Error::Config("rul_cap must be at least 1".into()));
        }
        match variant {
            Variant::NoConditionalSpace if self.n != self.m => Err(Error::Config(format!(
                "without a conditional space n must equal m ({} != {})",
                self.n, self.m
            ))),
            Variant::NoConditionalSpace => Ok(()),
            _ if self.n <= self.m => Err(Error::Config(format!(
                "conditional space ({}) must be wider than the measurements ({})",
                self.n, self.m
            ))),
            _ => Ok(()),
        }
    }

    pub fn rul_scale(&self) -> f64 {
        1.0 / self.rul_cap as f64
    }
}

/// Hidden-layer widths and dropout for the six networks.
#[derive(Debug, Clone, PartialEq)]
pub struct Architecture {
    pub d_hidden: Vec<usize>,
    pub e1g1_hidden: Vec<usize>,
    pub e2g2_hidden: Vec<usize>,
    pub dropout_rate: f64,
}

impl Default for Architecture {
    /// Turbofan column of the reference hyper-parameter table.
    fn default() -> Self {
        Self {
            d_hidden: vec![25, 25],
            e1g1_hidden: vec![128, 256, 128],
            e2g2_hidden: vec![50, 50, 50],
            dropout_rate: 0.2,
        }
    }
}

impl Architecture {
    pub fn nasa_battery() -> Self {
        Self {
            d_hidden: vec![25, 25],
            e1g1_hidden: vec![64, 64, 64],
            e2g2_hidden: vec![32, 64, 32],
            dropout_rate: 0.2,
        }
    }

    pub fn toyota_battery() -> Self {
        Self {
            d_hidden: vec![16, 16],
            e1g1_hidden: vec![32, 32, 32],
            e2g2_hidden: vec![32, 32, 32],
            dropout_rate: 0.2,
        }
    }

    /// Layer specs of all six networks for the given dimensions.
    pub fn specs(&self, dims: &Dimensions, variant: Variant) -> Result<Nets<MlpSpec>> {
        let Dimensions { m, n, d_z, .. } = *dims;
        let p = self.dropout_rate;
        let d2_in = if variant.uses_label_encoder() { 1 + d_z + n } else { 1 + n };
        Ok(Nets {
            e1: MlpSpec::new(m, &self.e1g1_hidden, n, Activation::Linear, p)?,
            g1: MlpSpec::new(n, &self.e1g1_hidden, m, Activation::Linear, p)?,
            d1: MlpSpec::new(m + n, &self.d_hidden, 1, Activation::Sigmoid, p)?,
            e2: MlpSpec::new(1 + n, &self.e2g2_hidden, d_z, Activation::Linear, p)?,
            g2: MlpSpec::new(d_z + n, &self.e2g2_hidden, 1, Activation::Linear, p)?,
            d2: MlpSpec::new(d2_in, &self.d_hidden, 1, Activation::Sigmoid, p)?,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BaceRulModel {
    pub nets: Nets<MlpParams>,
    pub dims: Dimensions,
    pub variant: Variant,
    pub normalizer: Normalizer,
    /// Multiplier from cycles to internal label units (`1 / rul_cap`).
    pub rul_scale: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RulPrediction {
    pub mean: f64,
    pub std: f64,
    pub samples: Vec<f64>,
}

impl BaceRulModel {
    /// Freshly initialized networks.
    pub fn init<R: Rng + ?Sized>(
        dims: Dimensions,
        variant: Variant,
        arch: &Architecture,
        normalizer: Normalizer,
        rng: &mut R,
    ) -> Result<Self> {
        dims.validate(variant)?;
        let specs = arch.specs(&dims, variant)?;
        let mut init = |spec: MlpSpec| MlpParams::init(spec, rng);
        let nets = Nets {
            e1: init(specs.e1)?,
            g1: init(specs.g1)?,
            d1: init(specs.d1)?,
            e2: init(specs.e2)?,
            g2: init(specs.g2)?,
            d2: init(specs.d2)?,
        };
        Self::from_parts(nets, dims, variant, normalizer)
    }

    /// Assembles a model, checking every network's widths against `dims`.
    pub fn from_parts(
        nets: Nets<MlpParams>,
        dims: Dimensions,
        variant: Variant,
        normalizer: Normalizer,
    ) -> Result<Self> {
        dims.validate(variant)?;
        let Dimensions { m, n, d_z, .. } = dims;
        let d2_in = if variant.uses_label_encoder() { 1 + d_z + n } else { 1 + n };
        let expected = [
            (Net::E1, m, n),
            (Net::G1, n, m),
            (Net::D1, m + n, 1),
            (Net::E2, 1 + n, d_z),
            (Net::G2, d_z + n, 1),
            (Net::D2, d2_in, 1),
        ];
        for (net, input, output) in expected {
            let p = nets.get(net);
            if p.input_dim() != input || p.output_dim() != output {
                return Err(Error::Shape(format!(
                    "{} maps {}->{}, expected {input}->{output}",
                    net.name(),
                    p.input_dim(),
                    p.output_dim()
                )));
            }
        }
        for net in [Net::D1, Net::D2] {
            let spec = nets.get(net).spec();
            if spec.layers[spec.layers.len() - 1].activation != Activation::Sigmoid {
                return Err(Error::Shape(format!("{} must end in a sigmoid", net.name())));
            }
        }
        if normalizer.dim() != m {
            return Err(Error::Shape(format!(
                "normalizer has {} features, model expects {m}",
                normalizer.dim()
            )));
        }
        Ok(Self {
            nets,
            dims,
            variant,
            normalizer,
            rul_scale: dims.rul_scale(),
        })
    }

    pub fn check_finite(&self) -> Result<()> {
        for net in Net::ALL {
            if !self.nets.get(net).is_finite() {
                return Err(Error::Numeric(format!("{} has non-finite parameters", net.name())));
            }
        }
        Ok(())
    }

    /// `c = E1(x)` for normalized measurements (identity without a conditional space).
    pub fn encode_condition(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_len("measurements", x, self.dims.m)?;
        if self.variant.uses_conditional_space() {
            self.nets.e1.eval_one(x)
        } else {
            Ok(x.to_vec())
        }
    }

    /// Batched [`Self::encode_condition`].
    pub fn encode_conditions(&self, xs: &Matrix) -> Result<Matrix> {
        if xs.cols() != self.dims.m {
            return Err(Error::Shape(format!(
                "expected {} measurement columns, got {}",
                self.dims.m,
                xs.cols()
            )));
        }
        if self.variant.uses_conditional_space() {
            self.nets.e1.eval(xs)
        } else {
            Ok(xs.clone())
        }
    }

    /// `x_recon = G1(c)`.
    pub fn reconstruct_measurements(&self, c: &[f64]) -> Result<Vec<f64>> {
        check_len("condition", c, self.dims.n)?;
        self.nets.g1.eval_one(c)
    }

    /// `t_gen = G2(z, c)` in scaled label units.
    pub fn generate_rul(&self, z: &[f64], c: &[f64]) -> Result<f64> {
        check_len("latent", z, self.dims.d_z)?;
        check_len("condition", c, self.dims.n)?;
        let input = [z, c].concat();
        Ok(self.nets.g2.eval_one(&input)?[0])
    }

    /// `z = E2(t, c)` for a scaled label `t`.
    pub fn encode_rul(&self, t: f64, c: &[f64]) -> Result<Vec<f64>> {
        check_len("condition", c, self.dims.n)?;
        let input = [&[t][..], c].concat();
        self.nets.e2.eval_one(&input)
    }

    /// `D1(x, c)`, clamped into `[PROB_FLOOR, 1 - PROB_FLOOR]`.
    pub fn discriminate_ce(&self, x: &[f64], c: &[f64]) -> Result<f64> {
        check_len("measurements", x, self.dims.m)?;
        check_len("condition", c, self.dims.n)?;
        let input = [x, c].concat();
        Ok(clamp_prob(self.nets.d1.eval_one(&input)?[0]))
    }

    /// `D2(t, z, c)`, clamped. Without a label encoder `z` is not part of
    /// the discriminator input and is ignored.
    pub fn discriminate_rp(&self, t: f64, z: &[f64], c: &[f64]) -> Result<f64> {
        check_len("latent", z, self.dims.d_z)?;
        check_len("condition", c, self.dims.n)?;
        let input = if self.variant.uses_label_encoder() {
            [&[t][..], z, c].concat()
        } else {
            [&[t][..], c].concat()
        };
        Ok(clamp_prob(self.nets.d2.eval_one(&input)?[0]))
    }

    /// RUL in cycles for one raw (unnormalized) measurement vector, averaged
    /// over `n_samples` latent draws. Each sample is floored at zero.
    pub fn predict<R: Rng + ?Sized>(&self, x_raw: &[f64], rng: &mut R, n_samples: usize) -> Result<RulPrediction> {
        if n_samples == 0 {
            return Err(Error::Usage("n_samples must be at least 1".into()));
        }
        check_len("measurements", x_raw, self.dims.m)?;
        if x_raw.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric("measurements contain non-finite values".into()));
        }
        let x = self.normalizer.apply(x_raw)?;
        let c = self.encode_condition(&x)?;
        let z = sample_uniform_matrix(rng, n_samples, self.dims.d_z, NOISE_LOW, NOISE_HIGH)?;
        let mut input = Matrix::zeros(n_samples, self.dims.d_z + self.dims.n);
        for r in 0..n_samples {
            let row = input.row_mut(r);
            row[..self.dims.d_z].copy_from_slice(z.row(r));
            row[self.dims.d_z..].copy_from_slice(&c);
        }
        let out = self.nets.g2.eval(&input)?;
        let samples: Vec<f64> = out
            .as_slice()
            .iter()
            .map(|t| (t / self.rul_scale).max(0.0))
            .collect();
        if samples.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric("prediction is not finite".into()));
        }
        let n = samples.len() as f64;
        let mean = samples.iter().sum::<f64>() / n;
        let var = samples.iter().map(|s| (s - mean) * (s - mean)).sum::<f64>() / n;
        Ok(RulPrediction {
            mean,
            std: var.sqrt(),
            samples,
        })
    }
}

pub fn clamp_prob(p: f64) -> f64 {
    p.clamp(PROB_FLOOR, 1.0 - PROB_FLOOR)
}

fn check_len(what: &str, v: &[f64], expected: usize) -> Result<()> {
    if v.len() != expected {
        return Err(Error::Shape(format!(
            "{what} vector has length {}, expected {expected}",
            v.len()
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn dims() -> Dimensions {
        Dimensions {
            m: 3,
            n: 5,
            d_z: 2,
            rul_cap: 125,
        }
    }

    fn arch() -> Architecture {
        Architecture {
            d_hidden: vec![4],
            e1g1_hidden: vec![6],
            e2g2_hidden: vec![4],
            dropout_rate: 0.2,
        }
    }

    fn model(seed: u64) -> BaceRulModel {
        BaceRulModel::init(
            dims(),
            Variant::Full,
            &arch(),
            Normalizer::identity(3),
            &mut ChaCha8Rng::seed_from_u64(seed),
        )
        .unwrap()
    }

    fn zero_out(p: &mut MlpParams) {
        for v in p.values_mut() {
            *v = 0.0;
        }
    }

    #[test]
    fn wiring_matches_dimensions() {
        let m = model(0);
        assert_eq!((m.nets.e1.input_dim(), m.nets.e1.output_dim()), (3, 5));
        assert_eq!((m.nets.g1.input_dim(), m.nets.g1.output_dim()), (5, 3));
        assert_eq!((m.nets.d1.input_dim(), m.nets.d1.output_dim()), (8, 1));
        assert_eq!((m.nets.e2.input_dim(), m.nets.e2.output_dim()), (6, 2));
        assert_eq!((m.nets.g2.input_dim(), m.nets.g2.output_dim()), (7, 1));
        assert_eq!((m.nets.d2.input_dim(), m.nets.d2.output_dim()), (8, 1));
        assert_eq!(m.rul_scale, 1.0 / 125.0);
    }

    #[test]
    fn conditional_space_must_be_wider() {
        let narrow = Dimensions { n: 3, ..dims() };
        let res = BaceRulModel::init(
            narrow,
            Variant::Full,
            &arch(),
            Normalizer::identity(3),
            &mut ChaCha8Rng::seed_from_u64(0),
        );
        assert!(matches!(res, Err(Error::Config(_))));
        // suspended when the conditional space is removed
        assert!(BaceRulModel::init(
            narrow,
            Variant::NoConditionalSpace,
            &arch(),
            Normalizer::identity(3),
            &mut ChaCha8Rng::seed_from_u64(0),
        )
        .is_ok());
    }

    #[test]
    fn inconsistent_networks_are_rejected() {
        let mut m = model(0);
        m.nets.g2 = m.nets.e2.clone();
        let res = BaceRulModel::from_parts(m.nets, m.dims, m.variant, m.normalizer);
        assert!(matches!(res, Err(Error::Shape(_))));
    }

    #[test]
    fn zero_networks() {
        let mut m = model(1);
        for net in Net::ALL {
            zero_out(m.nets.get_mut(net));
        }
        assert_eq!(m.encode_condition(&[1.0, 2.0, 3.0]).unwrap(), vec![0.0; 5]);
        assert_eq!(m.reconstruct_measurements(&[1.0; 5]).unwrap(), vec![0.0; 3]);
        assert_eq!(m.encode_rul(0.3, &[1.0; 5]).unwrap(), vec![0.0; 2]);
        assert_eq!(m.discriminate_ce(&[1.0; 3], &[1.0; 5]).unwrap(), 0.5);
        assert_eq!(m.discriminate_rp(0.2, &[0.1; 2], &[1.0; 5]).unwrap(), 0.5);
        let last = m.nets.g2.layers().len() - 1;
        m.nets.g2.layers_mut()[last].biases[0] = 0.4;
        assert_eq!(m.generate_rul(&[0.3, -0.3], &[1.0; 5]).unwrap(), 0.4);
        let pred = m.predict(&[0.0; 3], &mut ChaCha8Rng::seed_from_u64(3), 10).unwrap();
        for s in &pred.samples {
            assert!((s - 0.4 * 125.0).abs() < 1e-9);
        }
    }

    #[test]
    fn eval_paths_are_pure() {
        let m = model(2);
        let x = [0.3, -0.2, 0.9];
        assert_eq!(m.encode_condition(&x).unwrap(), m.encode_condition(&x).unwrap());
        let c = m.encode_condition(&x).unwrap();
        assert_eq!(c.len(), 5);
        assert_eq!(m.generate_rul(&[0.1, 0.2], &c).unwrap(), m.generate_rul(&[0.1, 0.2], &c).unwrap());
        assert_ne!(m.generate_rul(&[0.1, 0.2], &c).unwrap(), m.generate_rul(&[-0.7, 0.9], &c).unwrap());
        assert_eq!(m.encode_rul(0.5, &c).unwrap().len(), 2);
    }

    #[test]
    fn discriminators_stay_in_open_interval() {
        let m = model(3);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..200 {
            let x: Vec<f64> = (0..3).map(|_| rng.random_range(-50.0..50.0)).collect();
            let c: Vec<f64> = (0..5).map(|_| rng.random_range(-50.0..50.0)).collect();
            let p = m.discriminate_ce(&x, &c).unwrap();
            assert!(p > 0.0 && p < 1.0);
            let q = m.discriminate_rp(rng.random_range(-5.0..5.0), &[0.2, 0.1], &c).unwrap();
            assert!(q > 0.0 && q < 1.0);
        }
    }

    #[test]
    fn shape_errors() {
        let m = model(4);
        assert!(matches!(m.encode_condition(&[1.0; 4]), Err(Error::Shape(_))));
        assert!(matches!(m.reconstruct_measurements(&[1.0; 3]), Err(Error::Shape(_))));
        assert!(matches!(m.generate_rul(&[1.0; 3], &[1.0; 5]), Err(Error::Shape(_))));
        assert!(matches!(m.encode_rul(1.0, &[1.0; 4]), Err(Error::Shape(_))));
        assert!(matches!(m.discriminate_ce(&[1.0; 3], &[1.0; 4]), Err(Error::Shape(_))));
        assert!(matches!(m.discriminate_rp(1.0, &[1.0; 2], &[1.0; 6]), Err(Error::Shape(_))));
    }

    #[test]
    fn predict_contract() {
        let m = model(5);
        let x = [0.5, 1.5, -0.5];
        let one = m.predict(&x, &mut ChaCha8Rng::seed_from_u64(1), 1).unwrap();
        assert_eq!(one.samples.len(), 1);
        assert_eq!(one.mean, one.samples[0]);
        assert_eq!(one.std, 0.0);
        assert_eq!(one, m.predict(&x, &mut ChaCha8Rng::seed_from_u64(1), 1).unwrap());

        let many = m.predict(&x, &mut ChaCha8Rng::seed_from_u64(1), 50).unwrap();
        let mean = many.samples.iter().sum::<f64>() / 50.0;
        assert!((many.mean - mean).abs() < 1e-12);
        assert!(many.samples.iter().all(|&s| s >= 0.0));

        assert!(matches!(m.predict(&x, &mut ChaCha8Rng::seed_from_u64(1), 0), Err(Error::Usage(_))));
        assert!(matches!(
            m.predict(&[f64::NAN, 0.0, 0.0], &mut ChaCha8Rng::seed_from_u64(1), 1),
            Err(Error::Numeric(_))
        ));
    }

    #[test]
    fn negative_generator_output_is_floored() {
        let mut m = model(6);
        zero_out(&mut m.nets.g2);
        let last = m.nets.g2.layers().len() - 1;
        m.nets.g2.layers_mut()[last].biases[0] = -0.3;
        let p = m.predict(&[0.0; 3], &mut ChaCha8Rng::seed_from_u64(0), 5).unwrap();
        assert_eq!(p.mean, 0.0);
        assert!(p.samples.iter().all(|&s| s == 0.0));
    }
}
