use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::formats::{BinReader, BinWriter};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Identity,
}

impl Activation {
    fn code(self) -> u8 {
        match self {
            Activation::Relu => 0,
            Activation::Identity => 1,
        }
    }

    fn from_code(c: u8) -> Result<Self> {
        match c {
            0 => Ok(Activation::Relu),
            1 => Ok(Activation::Identity),
            _ => Err(Error::Parse(format!("unknown activation code {c}"))),
        }
    }
}

/// Dense layer; `weight` is `in × out` so a batch forward is `x · W + b`.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
    pub activation: Activation,
}

impl Layer {
    pub fn in_dim(&self) -> usize {
        self.weight.nrows()
    }

    pub fn out_dim(&self) -> usize {
        self.weight.ncols()
    }
}

/// Residual link: the input of layer `from` is added to the (post-activation)
/// output of layer `to`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SkipLink {
    pub from: usize,
    pub to: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    layers: Vec<Layer>,
    skips: Vec<SkipLink>,
}

/// Intermediate values of a forward pass, needed by [`Mlp::backward`].
#[derive(Debug, Clone)]
pub struct ForwardCache {
    /// `inputs[i]` is the input of layer `i`; the last entry is the network output.
    pub inputs: Vec<Array2<f64>>,
    pub pre_activations: Vec<Array2<f64>>,
}

impl ForwardCache {
    pub fn output(&self) -> &Array2<f64> {
        self.inputs.last().expect("cache has at least the input")
    }
}

/// Parameter gradients, laid out like the network's layers.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpGrads {
    pub weights: Vec<Array2<f64>>,
    pub biases: Vec<Array1<f64>>,
}

impl MlpGrads {
    pub fn slices(&self) -> Vec<&[f64]> {
        let mut out = Vec::with_capacity(2 * self.weights.len());
        for (w, b) in self.weights.iter().zip(&self.biases) {
            out.push(w.as_slice().expect("standard layout"));
            out.push(b.as_slice().expect("standard layout"));
        }
        out
    }
}

impl Mlp {
    pub fn from_layers(layers: Vec<Layer>, skips: Vec<SkipLink>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::ShapeMismatch("an MLP needs at least one layer".into()));
        }
        for (i, pair) in layers.windows(2).enumerate() {
            if pair[0].out_dim() != pair[1].in_dim() {
                return Err(Error::ShapeMismatch(format!(
                    "layer {i} outputs {} values but layer {} expects {}",
                    pair[0].out_dim(),
                    i + 1,
                    pair[1].in_dim()
                )));
            }
        }
        for l in &layers {
            if l.bias.len() != l.out_dim() {
                return Err(Error::ShapeMismatch("bias length differs from layer width".into()));
            }
            if !l.weight.iter().chain(l.bias.iter()).all(|v| v.is_finite()) {
                return Err(Error::ShapeMismatch("non-finite parameter".into()));
            }
        }
        for s in &skips {
            if s.from > s.to || s.to >= layers.len() {
                return Err(Error::ShapeMismatch(format!("invalid skip link {s:?}")));
            }
            if layers[s.from].in_dim() != layers[s.to].out_dim() {
                return Err(Error::ShapeMismatch(format!(
                    "skip link {s:?} joins widths {} and {}",
                    layers[s.from].in_dim(),
                    layers[s.to].out_dim()
                )));
            }
        }
        let mut layers = layers;
        for l in &mut layers {
            l.weight = l.weight.as_standard_layout().into_owned();
        }
        Ok(Self { layers, skips })
    }

    /// He-initialized network with ReLU hidden layers and an identity output.
    ///
    /// `dims` lists the input width, every hidden width, then the output width.
    pub fn new(dims: &[usize], skips: Vec<SkipLink>, seed: u64) -> Result<Self> {
        if dims.len() < 2 {
            return Err(Error::ShapeMismatch("need at least input and output widths".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = dims.len() - 1;
        let layers = (0..n)
            .map(|i| {
                let (fan_in, fan_out) = (dims[i], dims[i + 1]);
                let activation = if i + 1 == n {
                    Activation::Identity
                } else {
                    Activation::Relu
                };
                let std = match activation {
                    Activation::Relu => (2.0 / fan_in as f64).sqrt(),
                    Activation::Identity => (1.0 / fan_in as f64).sqrt(),
                };
                let normal = Normal::new(0.0, std).expect("finite std");
                Layer {
                    weight: Array2::from_shape_simple_fn((fan_in, fan_out), || normal.sample(&mut rng)),
                    bias: Array1::zeros(fan_out),
                    activation,
                }
            })
            .collect();
        Self::from_layers(layers, skips)
    }

    /// Same shapes as [`Mlp::new`], every parameter zero.
    pub fn zeros(dims: &[usize], skips: Vec<SkipLink>) -> Result<Self> {
        let mut m = Self::new(dims, skips, 0)?;
        for l in &mut m.layers {
            l.weight.fill(0.0);
        }
        Ok(m)
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    pub fn skips(&self) -> &[SkipLink] {
        &self.skips
    }

    pub fn in_dim(&self) -> usize {
        self.layers[0].in_dim()
    }

    pub fn out_dim(&self) -> usize {
        self.layers.last().expect("non-empty").out_dim()
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.weight.len() + l.bias.len()).sum()
    }

    pub fn param_slices_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out = Vec::with_capacity(2 * self.layers.len());
        for l in &mut self.layers {
            out.push(l.weight.as_slice_mut().expect("standard layout"));
            out.push(l.bias.as_slice_mut().expect("standard layout"));
        }
        out
    }

    fn check_input(&self, input: &ArrayView2<f64>) -> Result<()> {
        if input.ncols() != self.in_dim() {
            return Err(Error::ShapeMismatch(format!(
                "input has {} columns, network expects {}",
                input.ncols(),
                self.in_dim()
            )));
        }
        Ok(())
    }

    /// Batched forward pass; rows are samples.
    pub fn forward(&self, input: ArrayView2<f64>) -> Result<Array2<f64>> {
        Ok(self.forward_cached(input)?.inputs.pop().expect("output"))
    }

    pub fn forward_cached(&self, input: ArrayView2<f64>) -> Result<ForwardCache> {
        self.check_input(&input)?;
        let mut inputs = Vec::with_capacity(self.layers.len() + 1);
        let mut pre_activations = Vec::with_capacity(self.layers.len());
        inputs.push(input.to_owned());
        for (i, layer) in self.layers.iter().enumerate() {
            let z = inputs[i].dot(&layer.weight) + &layer.bias;
            let mut a = match layer.activation {
                Activation::Relu => z.mapv(|v| v.max(0.0)),
                Activation::Identity => z.clone(),
            };
            for s in self.skips.iter().filter(|s| s.to == i) {
                a += &inputs[s.from];
            }
            pre_activations.push(z);
            inputs.push(a);
        }
        Ok(ForwardCache {
            inputs,
            pre_activations,
        })
    }

    /// Exact gradients of `sum(output_grad ⊙ output)` with respect to every
    /// parameter and to the input. ReLU uses subgradient 0 at exactly 0.
    pub fn backward(&self, cache: &ForwardCache, output_grad: ArrayView2<f64>) -> Result<(MlpGrads, Array2<f64>)> {
        let out = cache.output();
        if output_grad.dim() != out.dim() {
            return Err(Error::ShapeMismatch(format!(
                "output gradient {:?} does not match output {:?}",
                output_grad.dim(),
                out.dim()
            )));
        }
        let n = self.layers.len();
        let mut pending: Vec<Option<Array2<f64>>> = vec![None; n + 1];
        pending[n] = Some(output_grad.to_owned());
        let mut weights = vec![Array2::zeros((0, 0)); n];
        let mut biases = vec![Array1::zeros(0); n];
        for i in (0..n).rev() {
            let layer = &self.layers[i];
            let grad_a = pending[i + 1].take().expect("gradient reaches every layer");
            for s in self.skips.iter().filter(|s| s.to == i) {
                match &mut pending[s.from] {
                    Some(g) => *g += &grad_a,
                    slot @ None => *slot = Some(grad_a.clone()),
                }
            }
            let grad_z = match layer.activation {
                Activation::Relu => {
                    let mut g = grad_a;
                    ndarray::Zip::from(&mut g)
                        .and(&cache.pre_activations[i])
                        .for_each(|g, &z| {
                            if z <= 0.0 {
                                *g = 0.0
                            }
                        });
                    g
                }
                Activation::Identity => grad_a,
            };
            weights[i] = cache.inputs[i].t().dot(&grad_z);
            biases[i] = grad_z.sum_axis(Axis(0));
            let grad_in = grad_z.dot(&layer.weight.t());
            match &mut pending[i] {
                Some(g) => *g += &grad_in,
                slot @ None => *slot = Some(grad_in),
            }
        }
        let input_grad = pending[0].take().expect("input gradient");
        Ok((MlpGrads { weights, biases }, input_grad))
    }

    pub fn write<W: std::io::Write>(&self, w: &mut BinWriter<W>) -> Result<()> {
        w.len(self.layers.len())?;
        for l in &self.layers {
            w.len(l.in_dim())?;
            w.len(l.out_dim())?;
            w.u8(l.activation.code())?;
            w.f64s(l.weight.iter().copied())?;
            w.f64s(l.bias.iter().copied())?;
        }
        w.len(self.skips.len())?;
        for s in &self.skips {
            w.len(s.from)?;
            w.len(s.to)?;
        }
        Ok(())
    }

    pub fn read<R: std::io::Read>(r: &mut BinReader<R>) -> Result<Self> {
        let n = r.len()?;
        let mut layers = Vec::with_capacity(n);
        for _ in 0..n {
            let fan_in = r.len()?;
            let fan_out = r.len()?;
            let activation = Activation::from_code(r.u8()?)?;
            let weight = Array2::from_shape_vec((fan_in, fan_out), r.f64s(fan_in * fan_out)?)
                .map_err(|e| Error::Parse(e.to_string()))?;
            let bias = Array1::from(r.f64s(fan_out)?);
            layers.push(Layer {
                weight,
                bias,
                activation,
            });
        }
        let k = r.len()?;
        let skips = (0..k)
            .map(|_| {
                Ok(SkipLink {
                    from: r.len()?,
                    to: r.len()?,
                })
            })
            .collect::<Result<_>>()?;
        Self::from_layers(layers, skips)
    }
}

/// Row-wise softmax with max subtraction.
pub fn softmax_rows(logits: &Array2<f64>) -> Array2<f64> {
    let mut out = logits.clone();
    for mut row in out.rows_mut() {
        let m = row.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        row.mapv_inplace(|v| (v - m).exp());
        let s = row.sum();
        row /= s;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn identity_layer_passes_input_and_grads_are_outer_products() {
        let layer = Layer {
            weight: Array2::eye(3),
            bias: Array1::zeros(3),
            activation: Activation::Identity,
        };
        let mlp = Mlp::from_layers(vec![layer], vec![]).unwrap();
        let x = array![[1.0, 2.0, 3.0]];
        let cache = mlp.forward_cached(x.view()).unwrap();
        assert_eq!(cache.output(), &x);
        let g = array![[0.5, -1.0, 2.0]];
        let (grads, gin) = mlp.backward(&cache, g.view()).unwrap();
        // dW = xᵀ g
        assert_eq!(grads.weights[0], x.t().dot(&g));
        assert_eq!(grads.biases[0], array![0.5, -1.0, 2.0]);
        assert_eq!(gin, g);
    }

    #[test]
    fn relu_at_zero_uses_zero_subgradient() {
        let layer = Layer {
            weight: array![[1.0]],
            bias: array![0.0],
            activation: Activation::Relu,
        };
        let mlp = Mlp::from_layers(vec![layer], vec![]).unwrap();
        let cache = mlp.forward_cached(array![[0.0]].view()).unwrap();
        let (grads, gin) = mlp.backward(&cache, array![[1.0]].view()).unwrap();
        assert_eq!(grads.biases[0][0], 0.0);
        assert_eq!(gin[[0, 0]], 0.0);
    }

    #[test]
    fn rejects_bad_shapes() {
        let mlp = Mlp::new(&[4, 8, 2], vec![], 1).unwrap();
        assert!(matches!(
            mlp.forward(Array2::zeros((1, 3)).view()),
            Err(Error::ShapeMismatch(_))
        ));
        assert!(Mlp::new(&[4, 8, 2], vec![SkipLink { from: 0, to: 1 }], 1).is_err());
    }

    #[test]
    fn residual_link_adds_input() {
        let mlp = Mlp::new(&[3, 3, 3, 2], vec![SkipLink { from: 1, to: 1 }], 4).unwrap();
        let x = array![[0.3, -0.2, 0.9]];
        let c = mlp.forward_cached(x.view()).unwrap();
        let expected = c.pre_activations[1].mapv(|v| v.max(0.0)) + &c.inputs[1];
        assert_eq!(c.inputs[2], expected);
        // serialization preserves everything
        let mut w = BinWriter::new(Vec::new(), *b"TEST", 1).unwrap();
        mlp.write(&mut w).unwrap();
        let bytes = w.finish();
        let mut r = BinReader::new(&bytes[..], *b"TEST", 1).unwrap();
        assert_eq!(Mlp::read(&mut r).unwrap(), mlp);
    }

    #[test]
    fn gradients_match_finite_differences() {
        use crate::nn::check_gradients;
        use rand::{Rng, SeedableRng};
        for seed in 0..5 {
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let mut mlp = Mlp::new(&[4, 5, 5, 3], vec![SkipLink { from: 1, to: 1 }], seed).unwrap();
            for p in mlp.param_slices_mut() {
                p.iter_mut().for_each(|v| *v += rng.random_range(-0.3..0.3));
            }
            let x = Array2::from_shape_simple_fn((6, 4), || rng.random_range(-1.0..1.0));
            let w = Array2::from_shape_simple_fn((6, 3), || rng.random_range(-1.0..1.0));
            // scalar objective Σ w ⊙ f(x), so the output gradient is w
            let cache = mlp.forward_cached(x.view()).unwrap();
            let (grads, _) = mlp.backward(&cache, w.view()).unwrap();
            let analytic: Vec<Vec<f64>> = grads.slices().iter().map(|g| g.to_vec()).collect();
            let report = check_gradients(
                &mut mlp,
                |m| m.param_slices_mut(),
                &analytic,
                |m| Ok((m.forward(x.view())? * &w).sum()),
                1e-3,
            )
            .unwrap();
            assert!(report.max_relative_error < 1e-4, "seed {seed}: {report:?}");
            assert!(report.skipped * 10 < report.checked, "seed {seed}: {report:?}");
        }
    }

    #[test]
    fn softmax_rows_normalize() {
        let p = softmax_rows(&array![[1000.0, 1000.0], [0.0, f64::ln(3.0)]]);
        assert!((p[[0, 0]] - 0.5).abs() < 1e-15);
        assert!((p[[1, 1]] - 0.75).abs() < 1e-12);
    }
}
