//! Dense feed-forward networks with hand-written reverse-mode gradients.
//!
//! Every network in the predictor is an [`MlpParams`]: a stack of affine
//! layers `z = W x + b` followed by an element-wise activation. Weights are
//! stored row-major with shape `(out_dim, in_dim)`.
//!
//! Inputs are processed a mini-batch at a time as a [`Matrix`] whose rows
//! are samples. A forward pass returns a [`ForwardCache`] holding what
//! [`MlpParams::backward`] needs: the input of every layer, the
//! pre-activations and the dropout masks that were drawn.
//!
//! Dropout is inverted: surviving hidden activations are scaled by
//! `1 / (1 - rate)` during training so that evaluation needs no rescaling.
//! It is never applied to the output layer.

mod adam;
mod gradcheck;
mod matrix;

use rand::Rng;
use rand::distr::{Distribution, Uniform};

use crate::error::{Error, Result};

pub use adam::{AdamConfig, AdamState};
pub use gradcheck::grad_check;
pub use matrix::Matrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Sigmoid,
    Linear,
}

impl Activation {
    #[inline]
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Relu => z.max(0.0),
            Activation::Sigmoid => sigmoid(z),
            Activation::Linear => z,
        }
    }

    /// Derivative expressed through the pre-activation `z` and output `y`.
    #[inline]
    fn derivative(self, z: f64, y: f64) -> f64 {
        match self {
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Sigmoid => y * (1.0 - y),
            Activation::Linear => 1.0,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Activation::Relu => "relu",
            Activation::Sigmoid => "sigmoid",
            Activation::Linear => "linear",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        match name {
            "relu" => Some(Activation::Relu),
            "sigmoid" => Some(Activation::Sigmoid),
            "linear" => Some(Activation::Linear),
            _ => None,
        }
    }
}

#[inline]
pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LayerSpec {
    pub in_dim: usize,
    pub out_dim: usize,
    pub activation: Activation,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlpSpec {
    pub layers: Vec<LayerSpec>,
    pub dropout_rate: f64,
}

impl MlpSpec {
    /// Builds `input -> hidden... -> output` with relu hidden layers.
    pub fn new(
        input: usize,
        hidden: &[usize],
        output: usize,
        output_activation: Activation,
        dropout_rate: f64,
    ) -> Result<Self> {
        let mut layers = Vec::with_capacity(hidden.len() + 1);
        let mut prev = input;
        for &width in hidden {
            layers.push(LayerSpec {
                in_dim: prev,
                out_dim: width,
                activation: Activation::Relu,
            });
            prev = width;
        }
        layers.push(LayerSpec {
            in_dim: prev,
            out_dim: output,
            activation: output_activation,
        });
        let spec = MlpSpec {
            layers,
            dropout_rate,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.layers.is_empty() {
            return Err(Error::Config("network needs at least one layer".into()));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(Error::Config(format!(
                "dropout rate {} outside [0, 1)",
                self.dropout_rate
            )));
        }
        for (i, layer) in self.layers.iter().enumerate() {
            if layer.in_dim == 0 || layer.out_dim == 0 {
                return Err(Error::Config(format!("layer {i} has a zero dimension")));
            }
        }
        for (i, pair) in self.layers.windows(2).enumerate() {
            if pair[0].out_dim != pair[1].in_dim {
                return Err(Error::Config(format!(
                    "layer {i} outputs {} values but layer {} expects {}",
                    pair[0].out_dim,
                    i + 1,
                    pair[1].in_dim
                )));
            }
        }
        Ok(())
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].in_dim
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].out_dim
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.out_dim * (l.in_dim + 1)).sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    /// Row-major, `(out_dim, in_dim)`.
    pub weights: Vec<f64>,
    pub biases: Vec<f64>,
}

/// Parameters of one network. Gradients use the same type.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpParams {
    spec: MlpSpec,
    layers: Vec<Layer>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

#[derive(Debug, Clone)]
struct LayerCache {
    input: Matrix,
    pre: Matrix,
    /// Post-activation values before dropout scaling.
    act: Matrix,
    /// Per-unit multiplier (0 or 1/(1-rate)); empty when dropout was off.
    mask: Vec<f64>,
}

/// Activation record of one forward pass, consumed by `backward`.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    layers: Vec<LayerCache>,
}

impl ForwardCache {
    pub fn batch_size(&self) -> usize {
        self.layers[0].input.rows()
    }
}

impl MlpParams {
    /// Glorot-uniform weights, zero biases.
    pub fn init<R: Rng + ?Sized>(spec: MlpSpec, rng: &mut R) -> Result<Self> {
        spec.validate()?;
        let layers = spec
            .layers
            .iter()
            .map(|l| {
                let bound = (6.0 / (l.in_dim + l.out_dim) as f64).sqrt();
                let dist = Uniform::new_inclusive(-bound, bound)
                    .map_err(|e| Error::Config(e.to_string()))?;
                Ok(Layer {
                    weights: (0..l.in_dim * l.out_dim).map(|_| dist.sample(rng)).collect(),
                    biases: vec![0.0; l.out_dim],
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { spec, layers })
    }

    pub fn zeros(spec: MlpSpec) -> Result<Self> {
        spec.validate()?;
        let layers = spec
            .layers
            .iter()
            .map(|l| Layer {
                weights: vec![0.0; l.in_dim * l.out_dim],
                biases: vec![0.0; l.out_dim],
            })
            .collect();
        Ok(Self { spec, layers })
    }

    pub fn from_layers(spec: MlpSpec, layers: Vec<Layer>) -> Result<Self> {
        spec.validate()?;
        if layers.len() != spec.layers.len() {
            return Err(Error::Shape(format!(
                "{} layers given for a {}-layer spec",
                layers.len(),
                spec.layers.len()
            )));
        }
        for (i, (l, s)) in layers.iter().zip(&spec.layers).enumerate() {
            if l.weights.len() != s.in_dim * s.out_dim || l.biases.len() != s.out_dim {
                return Err(Error::Shape(format!(
                    "layer {i}: expected {}x{} weights and {} biases, got {} and {}",
                    s.out_dim,
                    s.in_dim,
                    s.out_dim,
                    l.weights.len(),
                    l.biases.len()
                )));
            }
        }
        Ok(Self { spec, layers })
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            spec: self.spec.clone(),
            layers: self
                .layers
                .iter()
                .map(|l| Layer {
                    weights: vec![0.0; l.weights.len()],
                    biases: vec![0.0; l.biases.len()],
                })
                .collect(),
        }
    }

    pub fn spec(&self) -> &MlpSpec {
        &self.spec
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.spec.input_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.spec.output_dim()
    }

    pub fn param_count(&self) -> usize {
        self.spec.param_count()
    }

    /// All parameters in a fixed order: per layer, weights then biases.
    pub fn values(&self) -> impl Iterator<Item = &f64> {
        self.layers
            .iter()
            .flat_map(|l| l.weights.iter().chain(l.biases.iter()))
    }

    pub fn values_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.layers
            .iter_mut()
            .flat_map(|l| l.weights.iter_mut().chain(l.biases.iter_mut()))
    }

    pub fn same_shape(&self, other: &MlpParams) -> bool {
        self.spec.layers == other.spec.layers
    }

    /// `self += scale * other`.
    pub fn add_scaled(&mut self, other: &MlpParams, scale: f64) -> Result<()> {
        if !self.same_shape(other) {
            return Err(Error::Shape("parameter shapes differ".into()));
        }
        for (a, b) in self.values_mut().zip(other.values()) {
            *a += scale * b;
        }
        Ok(())
    }

    pub fn scale(&mut self, factor: f64) {
        for v in self.values_mut() {
            *v *= factor;
        }
    }

    pub fn is_finite(&self) -> bool {
        self.values().all(|v| v.is_finite())
    }

    pub fn is_zero(&self) -> bool {
        self.values().all(|&v| v == 0.0)
    }

    /// Forward pass over a batch (one sample per row).
    pub fn forward<R: Rng + ?Sized>(
        &self,
        input: &Matrix,
        mode: Mode,
        rng: &mut R,
    ) -> Result<(Matrix, ForwardCache)> {
        match mode {
            Mode::Train => self.run(input, Some(rng)),
            Mode::Eval => self.run::<R>(input, None),
        }
    }

    /// Eval-mode forward pass that keeps the cache for `backward`.
    pub fn forward_eval(&self, input: &Matrix) -> Result<(Matrix, ForwardCache)> {
        self.run::<rand_chacha::ChaCha8Rng>(input, None)
    }

    fn run<R: Rng + ?Sized>(
        &self,
        input: &Matrix,
        mut dropout_rng: Option<&mut R>,
    ) -> Result<(Matrix, ForwardCache)> {
        if input.cols() != self.input_dim() {
            return Err(Error::Shape(format!(
                "network expects {} inputs, got {}",
                self.input_dim(),
                input.cols()
            )));
        }
        let last = self.layers.len() - 1;
        let rate = self.spec.dropout_rate;
        let mut caches = Vec::with_capacity(self.layers.len());
        let mut current = input.clone();
        for (idx, (layer, spec)) in self.layers.iter().zip(&self.spec.layers).enumerate() {
            let pre = affine(&current, layer, spec);
            let mut act = pre.clone();
            for v in act.as_mut_slice() {
                *v = spec.activation.apply(*v);
            }
            let (mask, out) = match dropout_rng.as_deref_mut() {
                Some(rng) if idx != last && rate > 0.0 => {
                    let keep = 1.0 / (1.0 - rate);
                    let mask: Vec<f64> = (0..act.len())
                        .map(|_| if rng.random::<f64>() < rate { 0.0 } else { keep })
                        .collect();
                    let mut out = act.clone();
                    for (o, m) in out.as_mut_slice().iter_mut().zip(&mask) {
                        *o *= m;
                    }
                    (mask, out)
                }
                _ => (Vec::new(), act.clone()),
            };
            caches.push(LayerCache {
                input: current,
                pre,
                act,
                mask,
            });
            current = out;
        }
        Ok((current, ForwardCache { layers: caches }))
    }

    /// Eval-mode forward pass of a single sample.
    pub fn eval_one(&self, input: &[f64]) -> Result<Vec<f64>> {
        let batch = Matrix::from_row(input);
        let out = self.eval(&batch)?;
        Ok(out.into_vec())
    }

    /// Eval-mode forward pass of a batch; no cache is kept.
    pub fn eval(&self, input: &Matrix) -> Result<Matrix> {
        if input.cols() != self.input_dim() {
            return Err(Error::Shape(format!(
                "network expects {} inputs, got {}",
                self.input_dim(),
                input.cols()
            )));
        }
        let mut current = input.clone();
        for (layer, spec) in self.layers.iter().zip(&self.spec.layers) {
            let mut next = affine(&current, layer, spec);
            for v in next.as_mut_slice() {
                *v = spec.activation.apply(*v);
            }
            current = next;
        }
        Ok(current)
    }

    /// Reverse-mode gradients of `sum(grad_output * output)` with respect to
    /// every parameter and to the input, holding the cached dropout masks fixed.
    pub fn backward(&self, cache: &ForwardCache, grad_output: &Matrix) -> Result<(MlpParams, Matrix)> {
        if cache.layers.len() != self.layers.len()
            || cache
                .layers
                .iter()
                .zip(&self.spec.layers)
                .any(|(c, s)| c.input.cols() != s.in_dim || c.pre.cols() != s.out_dim)
        {
            return Err(Error::Usage(
                "forward cache does not belong to this network".into(),
            ));
        }
        if grad_output.rows() != cache.batch_size() || grad_output.cols() != self.output_dim() {
            return Err(Error::Shape(format!(
                "output gradient is {}x{}, expected {}x{}",
                grad_output.rows(),
                grad_output.cols(),
                cache.batch_size(),
                self.output_dim()
            )));
        }

        let mut grads = self.zeros_like();
        let mut upstream = grad_output.clone();
        for idx in (0..self.layers.len()).rev() {
            let spec = &self.spec.layers[idx];
            let layer = &self.layers[idx];
            let lc = &cache.layers[idx];
            let (in_dim, out_dim) = (spec.in_dim, spec.out_dim);

            // dL/dz = dL/dy * mask * act'(z)
            let mut dz = upstream;
            {
                let dz_s = dz.as_mut_slice();
                if !lc.mask.is_empty() {
                    for (d, m) in dz_s.iter_mut().zip(&lc.mask) {
                        *d *= m;
                    }
                }
                for ((d, &z), &y) in dz_s
                    .iter_mut()
                    .zip(lc.pre.as_slice())
                    .zip(lc.act.as_slice())
                {
                    *d *= spec.activation.derivative(z, y);
                }
            }

            let g = &mut grads.layers[idx];
            let mut dx = Matrix::zeros(dz.rows(), in_dim);
            for b in 0..dz.rows() {
                let x = lc.input.row(b);
                let dz_row = dz.row(b);
                let dx_row = dx.row_mut(b);
                for o in 0..out_dim {
                    let d = dz_row[o];
                    if d == 0.0 {
                        continue;
                    }
                    g.biases[o] += d;
                    let w_row = &layer.weights[o * in_dim..(o + 1) * in_dim];
                    let gw_row = &mut g.weights[o * in_dim..(o + 1) * in_dim];
                    for i in 0..in_dim {
                        gw_row[i] += d * x[i];
                        dx_row[i] += d * w_row[i];
                    }
                }
            }
            upstream = dx;
        }
        Ok((grads, upstream))
    }
}

fn affine(input: &Matrix, layer: &Layer, spec: &LayerSpec) -> Matrix {
    let (in_dim, out_dim) = (spec.in_dim, spec.out_dim);
    let mut out = Matrix::zeros(input.rows(), out_dim);
    for b in 0..input.rows() {
        let x = input.row(b);
        let y = out.row_mut(b);
        for o in 0..out_dim {
            let w = &layer.weights[o * in_dim..(o + 1) * in_dim];
            let mut sum = layer.biases[o];
            for (wi, xi) in w.iter().zip(x) {
                sum += wi * xi;
            }
            y[o] = sum;
        }
    }
    out
}

/// `dim` independent draws from `[low, high)`.
pub fn sample_uniform<R: Rng + ?Sized>(rng: &mut R, dim: usize, low: f64, high: f64) -> Result<Vec<f64>> {
    let dist = uniform(low, high)?;
    Ok((0..dim).map(|_| dist.sample(rng)).collect())
}

/// `rows x dim` matrix of independent draws from `[low, high)`.
pub fn sample_uniform_matrix<R: Rng + ?Sized>(
    rng: &mut R,
    rows: usize,
    dim: usize,
    low: f64,
    high: f64,
) -> Result<Matrix> {
    let dist = uniform(low, high)?;
    let data = (0..rows * dim).map(|_| dist.sample(rng)).collect();
    Matrix::from_vec(rows, dim, data)
}

fn uniform(low: f64, high: f64) -> Result<Uniform<f64>> {
    if !(low < high) || !low.is_finite() || !high.is_finite() {
        return Err(Error::Config(format!(
            "invalid sampling interval [{low}, {high})"
        )));
    }
    Uniform::new(low, high).map_err(|e| Error::Config(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    fn two_layer_spec() -> MlpSpec {
        MlpSpec::new(3, &[4], 1, Activation::Sigmoid, 0.0).unwrap()
    }

    #[test]
    fn init_shapes_and_bounds() {
        let p = MlpParams::init(two_layer_spec(), &mut rng(1)).unwrap();
        assert_eq!(p.layers()[0].weights.len(), 12);
        assert_eq!(p.layers()[1].weights.len(), 4);
        assert_eq!(p.layers()[0].biases.len(), 4);
        assert_eq!(p.layers()[1].biases.len(), 1);
        let bound = (6.0f64 / 7.0).sqrt();
        assert!(p.layers()[0].weights.iter().all(|w| w.abs() <= bound));
        assert!(p.layers().iter().all(|l| l.biases.iter().all(|&b| b == 0.0)));
    }

    #[test]
    fn init_is_seed_deterministic() {
        let a = MlpParams::init(two_layer_spec(), &mut rng(7)).unwrap();
        let b = MlpParams::init(two_layer_spec(), &mut rng(7)).unwrap();
        let c = MlpParams::init(two_layer_spec(), &mut rng(8)).unwrap();
        assert_eq!(a, b);
        assert!(a.values().zip(c.values()).any(|(x, y)| x != y));
    }

    #[test]
    fn incompatible_spec_is_rejected() {
        let spec = MlpSpec {
            layers: vec![
                LayerSpec {
                    in_dim: 3,
                    out_dim: 4,
                    activation: Activation::Relu,
                },
                LayerSpec {
                    in_dim: 5,
                    out_dim: 1,
                    activation: Activation::Sigmoid,
                },
            ],
            dropout_rate: 0.0,
        };
        assert!(matches!(
            MlpParams::init(spec, &mut rng(0)),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn identity_linear_layer() {
        let spec = MlpSpec::new(2, &[], 2, Activation::Linear, 0.0).unwrap();
        let p = MlpParams::from_layers(
            spec,
            vec![Layer {
                weights: vec![1.0, 0.0, 0.0, 1.0],
                biases: vec![0.0, 0.0],
            }],
        )
        .unwrap();
        assert_eq!(p.eval_one(&[1.5, -2.0]).unwrap(), vec![1.5, -2.0]);
    }

    #[test]
    fn zero_sigmoid_layer_gives_half() {
        let spec = MlpSpec::new(3, &[], 2, Activation::Sigmoid, 0.0).unwrap();
        let p = MlpParams::zeros(spec).unwrap();
        assert_eq!(p.eval_one(&[4.0, -1.0, 9.0]).unwrap(), vec![0.5, 0.5]);
    }

    #[test]
    fn eval_mode_ignores_dropout() {
        let spec = MlpSpec::new(3, &[6, 6], 2, Activation::Linear, 0.2).unwrap();
        let p = MlpParams::init(spec, &mut rng(3)).unwrap();
        let x = Matrix::from_row(&[0.3, -0.7, 1.1]);
        let (a, _) = p.forward(&x, Mode::Eval, &mut rng(1)).unwrap();
        let (b, _) = p.forward(&x, Mode::Eval, &mut rng(2)).unwrap();
        assert_eq!(a, b);
        assert_eq!(a, p.eval(&x).unwrap());
    }

    #[test]
    fn wrong_input_width_is_shape_error() {
        let p = MlpParams::init(two_layer_spec(), &mut rng(0)).unwrap();
        assert!(matches!(p.eval_one(&[1.0, 2.0]), Err(Error::Shape(_))));
    }

    #[test]
    fn linear_backward_matches_derivative() {
        let spec = MlpSpec::new(3, &[], 2, Activation::Linear, 0.0).unwrap();
        let p = MlpParams::init(spec, &mut rng(5)).unwrap();
        let x = Matrix::from_row(&[0.5, -1.0, 2.0]);
        let (_, cache) = p.forward(&x, Mode::Eval, &mut rng(0)).unwrap();
        let g_out = Matrix::from_row(&[1.0, 0.0]);
        let (g, g_in) = p.backward(&cache, &g_out).unwrap();
        assert_eq!(&g.layers()[0].weights[0..3], &[0.5, -1.0, 2.0]);
        assert_eq!(&g.layers()[0].weights[3..6], &[0.0, 0.0, 0.0]);
        assert_eq!(g_in.row(0), &p.layers()[0].weights[0..3]);
    }

    #[test]
    fn zero_upstream_gives_zero_gradients() {
        let spec = MlpSpec::new(3, &[5], 2, Activation::Sigmoid, 0.0).unwrap();
        let p = MlpParams::init(spec, &mut rng(5)).unwrap();
        let x = Matrix::from_row(&[0.5, -1.0, 2.0]);
        let (_, cache) = p.forward(&x, Mode::Train, &mut rng(0)).unwrap();
        let (g, g_in) = p.backward(&cache, &Matrix::zeros(1, 2)).unwrap();
        assert!(g.is_zero());
        assert!(g_in.as_slice().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn mismatched_cache_is_rejected() {
        let a = MlpParams::init(two_layer_spec(), &mut rng(0)).unwrap();
        let b = MlpParams::init(
            MlpSpec::new(3, &[5], 1, Activation::Sigmoid, 0.0).unwrap(),
            &mut rng(0),
        )
        .unwrap();
        let (_, cache) = a.forward(&Matrix::from_row(&[1.0, 2.0, 3.0]), Mode::Eval, &mut rng(0)).unwrap();
        assert!(matches!(
            b.backward(&cache, &Matrix::from_row(&[1.0])),
            Err(Error::Usage(_))
        ));
        assert!(matches!(
            a.backward(&cache, &Matrix::zeros(2, 1)),
            Err(Error::Shape(_))
        ));
    }

    #[test]
    fn backward_matches_finite_differences() {
        let spec = MlpSpec::new(4, &[5], 3, Activation::Sigmoid, 0.0).unwrap();
        let p = MlpParams::init(spec, &mut rng(11)).unwrap();
        let x = sample_uniform_matrix(&mut rng(12), 3, 4, -1.0, 1.0).unwrap();
        let weights = sample_uniform_matrix(&mut rng(13), 3, 3, -1.0, 1.0).unwrap();
        let loss = |q: &MlpParams| -> Result<(f64, MlpParams)> {
            let (y, cache) = q.forward(&x, Mode::Eval, &mut rng(0))?;
            let value = y
                .as_slice()
                .iter()
                .zip(weights.as_slice())
                .map(|(a, b)| a * b)
                .sum();
            let (g, _) = q.backward(&cache, &weights)?;
            Ok((value, g))
        };
        let err = grad_check(&p, 1e-5, loss).unwrap();
        assert!(err < 1e-4, "max relative error {err}");
    }

    #[test]
    fn input_gradient_matches_finite_differences() {
        let spec = MlpSpec::new(3, &[4], 1, Activation::Sigmoid, 0.0).unwrap();
        let p = MlpParams::init(spec, &mut rng(21)).unwrap();
        let x = vec![0.2, -0.4, 0.9];
        let (_, cache) = p.forward(&Matrix::from_row(&x), Mode::Eval, &mut rng(0)).unwrap();
        let (_, g_in) = p.backward(&cache, &Matrix::from_row(&[1.0])).unwrap();
        for i in 0..3 {
            let mut hi = x.clone();
            let mut lo = x.clone();
            hi[i] += 1e-5;
            lo[i] -= 1e-5;
            let fd = (p.eval_one(&hi).unwrap()[0] - p.eval_one(&lo).unwrap()[0]) / 2e-5;
            assert!((fd - g_in.row(0)[i]).abs() < 1e-8);
        }
    }

    #[test]
    fn inverted_dropout_mean_matches_eval() {
        let spec = MlpSpec::new(3, &[8], 2, Activation::Linear, 0.2).unwrap();
        let p = MlpParams::init(spec, &mut rng(4)).unwrap();
        let x = Matrix::from_row(&[0.8, -0.3, 0.5]);
        let expected = p.eval(&x).unwrap();
        let mut r = rng(99);
        let draws = 20_000;
        let mut sum = [0.0; 2];
        let mut sq = [0.0; 2];
        for _ in 0..draws {
            let (y, _) = p.forward(&x, Mode::Train, &mut r).unwrap();
            for k in 0..2 {
                sum[k] += y.row(0)[k];
                sq[k] += y.row(0)[k] * y.row(0)[k];
            }
        }
        for k in 0..2 {
            let n = draws as f64;
            let mean = sum[k] / n;
            let se = ((sq[k] / n - mean * mean) / n).sqrt();
            let e = expected.row(0)[k];
            // unbiased: within 4 standard errors of the eval-mode output
            assert!((mean - e).abs() <= 4.0 * se, "output {k}: mean {mean} vs eval {e} (se {se})");
        }
    }

    #[test]
    fn sample_uniform_contract() {
        let v = sample_uniform(&mut rng(1), 4, -1.0, 1.0).unwrap();
        assert_eq!(v.len(), 4);
        assert!(v.iter().all(|x| (-1.0..1.0).contains(x)));
        assert_eq!(v, sample_uniform(&mut rng(1), 4, -1.0, 1.0).unwrap());
        assert!(matches!(
            sample_uniform(&mut rng(1), 4, 1.0, 1.0),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn sample_uniform_mean_is_centered() {
        let v = sample_uniform(&mut rng(2024), 100_000, -1.0, 1.0).unwrap();
        let mean = v.iter().sum::<f64>() / v.len() as f64;
        assert!(mean.abs() < 0.02, "mean {mean}");
    }
}
