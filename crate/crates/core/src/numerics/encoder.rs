//! The dense feature mapping: leaky-rectifier hidden layers, linear output.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::matrix::Matrix;
use crate::error::{Error, Result};

pub const DEFAULT_LEAKY_SLOPE: f64 = 0.01;

/// Architecture of an encoder.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncoderShape {
    pub input: usize,
    pub hidden: Vec<usize>,
    pub output: usize,
    pub leaky_slope: f64,
}

impl EncoderShape {
    pub fn new(input: usize, hidden: Vec<usize>, output: usize) -> Self {
        Self {
            input,
            hidden,
            output,
            leaky_slope: DEFAULT_LEAKY_SLOPE,
        }
    }

    /// Layer widths from input to output.
    pub fn dims(&self) -> Vec<usize> {
        let mut dims = Vec::with_capacity(self.hidden.len() + 2);
        dims.push(self.input);
        dims.extend_from_slice(&self.hidden);
        dims.push(self.output);
        dims
    }
}

/// One affine layer; `weight` is `out x in`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    pub weight: Matrix,
    pub bias: Vec<f64>,
}

impl Dense {
    pub fn in_dim(&self) -> usize {
        self.weight.cols()
    }

    pub fn out_dim(&self) -> usize {
        self.weight.rows()
    }
}

/// Weights and biases of the feature mapping. Every layer except the last is
/// followed by a leaky rectifier.
///
/// The same type doubles as the container for parameter gradients.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncoderParams {
    layers: Vec<Dense>,
    leaky_slope: f64,
}

impl EncoderParams {
    pub fn new(layers: Vec<Dense>, leaky_slope: f64) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::config("encoder needs at least one layer"));
        }
        if !leaky_slope.is_finite() {
            return Err(Error::config("leaky slope must be finite"));
        }
        for (i, layer) in layers.iter().enumerate() {
            if layer.bias.len() != layer.out_dim() {
                return Err(Error::config(format!(
                    "layer {i}: bias length {} != output dim {}",
                    layer.bias.len(),
                    layer.out_dim()
                )));
            }
            if layer.in_dim() == 0 || layer.out_dim() == 0 {
                return Err(Error::config(format!("layer {i}: zero-sized dimension")));
            }
            if i > 0 && layers[i - 1].out_dim() != layer.in_dim() {
                return Err(Error::config(format!(
                    "layer {i}: input dim {} != previous output dim {}",
                    layer.in_dim(),
                    layers[i - 1].out_dim()
                )));
            }
            if !layer.weight.is_finite() || layer.bias.iter().any(|b| !b.is_finite()) {
                return Err(Error::data(format!("layer {i}: non-finite parameter")));
            }
        }
        Ok(Self {
            layers,
            leaky_slope,
        })
    }

    /// He-style Gaussian initialisation with zero biases.
    pub fn init<R: Rng + ?Sized>(shape: &EncoderShape, rng: &mut R) -> Result<Self> {
        let dims = shape.dims();
        if dims.contains(&0) {
            return Err(Error::config(format!("encoder dims must be positive: {dims:?}")));
        }
        let layers = dims
            .windows(2)
            .map(|w| {
                let (fan_in, fan_out) = (w[0], w[1]);
                let normal = Normal::new(0.0, (2.0 / fan_in as f64).sqrt())
                    .expect("positive std");
                let data = (0..fan_in * fan_out).map(|_| normal.sample(rng)).collect();
                Dense {
                    weight: Matrix::from_vec(fan_out, fan_in, data).expect("sized"),
                    bias: vec![0.0; fan_out],
                }
            })
            .collect();
        Self::new(layers, shape.leaky_slope)
    }

    /// A single linear layer computing the identity.
    pub fn identity(dim: usize) -> Self {
        Self::new(
            vec![Dense {
                weight: Matrix::identity(dim),
                bias: vec![0.0; dim],
            }],
            DEFAULT_LEAKY_SLOPE,
        )
        .expect("valid identity")
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            layers: self
                .layers
                .iter()
                .map(|l| Dense {
                    weight: Matrix::zeros(l.out_dim(), l.in_dim()),
                    bias: vec![0.0; l.out_dim()],
                })
                .collect(),
            leaky_slope: self.leaky_slope,
        }
    }

    pub fn layers(&self) -> &[Dense] {
        &self.layers
    }

    pub fn leaky_slope(&self) -> f64 {
        self.leaky_slope
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].in_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().expect("non-empty").out_dim()
    }

    pub fn shape(&self) -> EncoderShape {
        EncoderShape {
            input: self.input_dim(),
            hidden: self.layers[..self.layers.len() - 1]
                .iter()
                .map(Dense::out_dim)
                .collect(),
            output: self.output_dim(),
            leaky_slope: self.leaky_slope,
        }
    }

    pub fn num_params(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weight.as_slice().len() + l.bias.len())
            .sum()
    }

    /// All parameters, layer by layer: weights (row-major) then biases.
    pub fn to_flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_params());
        for l in &self.layers {
            out.extend_from_slice(l.weight.as_slice());
            out.extend_from_slice(&l.bias);
        }
        out
    }

    /// Overwrites all parameters from the layout produced by [`Self::to_flat`].
    pub fn assign_flat(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.num_params() {
            return Err(Error::config(format!(
                "flat parameter vector has {} entries, encoder has {}",
                flat.len(),
                self.num_params()
            )));
        }
        let mut offset = 0;
        for l in &mut self.layers {
            let w = l.weight.as_mut_slice();
            w.copy_from_slice(&flat[offset..offset + w.len()]);
            offset += w.len();
            let n = l.bias.len();
            l.bias.copy_from_slice(&flat[offset..offset + n]);
            offset += n;
        }
        Ok(())
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weight.is_finite() && l.bias.iter().all(|b| b.is_finite()))
    }

    fn check_inputs(&self, inputs: &Matrix) -> Result<()> {
        if inputs.cols() != self.input_dim() {
            return Err(Error::config(format!(
                "input width {} != encoder input dim {}",
                inputs.cols(),
                self.input_dim()
            )));
        }
        if !inputs.is_finite() {
            return Err(Error::data("non-finite encoder input"));
        }
        Ok(())
    }

    /// Forward pass without recording activations.
    pub fn forward(&self, inputs: &Matrix) -> Result<Matrix> {
        self.check_inputs(inputs)?;
        let last = self.layers.len() - 1;
        let mut x = inputs.clone();
        for (i, layer) in self.layers.iter().enumerate() {
            let mut z = affine(layer, &x);
            if i < last {
                leaky_inplace(&mut z, self.leaky_slope);
            }
            x = z;
        }
        Ok(x)
    }

    /// Forward pass recording what [`Tape::backprop`] needs.
    pub fn encode(&self, inputs: &Matrix) -> Result<(Matrix, Tape<'_>)> {
        self.check_inputs(inputs)?;
        let last = self.layers.len() - 1;
        let mut layer_inputs = Vec::with_capacity(self.layers.len());
        let mut pre_activations = Vec::with_capacity(last);
        let mut x = inputs.clone();
        for (i, layer) in self.layers.iter().enumerate() {
            let mut z = affine(layer, &x);
            layer_inputs.push(x);
            if i < last {
                pre_activations.push(z.clone());
                leaky_inplace(&mut z, self.leaky_slope);
            }
            x = z;
        }
        if !x.is_finite() {
            return Err(Error::data("encoder produced non-finite embeddings"));
        }
        let tape = Tape {
            params: self,
            layer_inputs,
            pre_activations,
            batch: inputs.rows(),
        };
        Ok((x, tape))
    }
}

/// `x W^T + b` for a batch `x` of row vectors.
fn affine(layer: &Dense, x: &Matrix) -> Matrix {
    let (n, out) = (x.rows(), layer.out_dim());
    let mut z = Matrix::zeros(n, out);
    for r in 0..n {
        let xr = x.row(r);
        let zr = z.row_mut(r);
        for (o, zo) in zr.iter_mut().enumerate() {
            *zo = layer.bias[o] + super::matrix::dot(layer.weight.row(o), xr);
        }
    }
    z
}

fn leaky_inplace(z: &mut Matrix, slope: f64) {
    for v in z.as_mut_slice() {
        if *v <= 0.0 {
            *v *= slope;
        }
    }
}

/// Activation record of one forward pass.
#[derive(Debug, Clone)]
pub struct Tape<'a> {
    params: &'a EncoderParams,
    layer_inputs: Vec<Matrix>,
    pre_activations: Vec<Matrix>,
    batch: usize,
}

impl Tape<'_> {
    /// Reverse accumulation of `sum_ij grads[i,j] * embedding[i,j]` with respect
    /// to every parameter.
    pub fn backprop(&self, embedding_grads: &Matrix) -> Result<EncoderParams> {
        let expected = (self.batch, self.params.output_dim());
        if embedding_grads.shape() != expected {
            return Err(Error::config(format!(
                "embedding gradient shape {:?} != embeddings {:?}",
                embedding_grads.shape(),
                expected
            )));
        }
        let slope = self.params.leaky_slope;
        let mut grads = self.params.zeros_like();
        let mut delta = embedding_grads.clone();
        for i in (0..self.params.layers.len()).rev() {
            let layer = &self.params.layers[i];
            let x = &self.layer_inputs[i];
            let g = &mut grads.layers[i];
            for r in 0..self.batch {
                let dr = delta.row(r);
                let xr = x.row(r);
                for (o, &d) in dr.iter().enumerate() {
                    if d == 0.0 {
                        continue;
                    }
                    g.bias[o] += d;
                    for (gw, &xv) in g.weight.row_mut(o).iter_mut().zip(xr) {
                        *gw += d * xv;
                    }
                }
            }
            if i == 0 {
                break;
            }
            // propagate to the previous layer's output, then through its activation
            let pre = &self.pre_activations[i - 1];
            let mut prev = Matrix::zeros(self.batch, layer.in_dim());
            for r in 0..self.batch {
                let dr = delta.row(r);
                let pr = prev.row_mut(r);
                for (o, &d) in dr.iter().enumerate() {
                    if d == 0.0 {
                        continue;
                    }
                    for (p, &w) in pr.iter_mut().zip(layer.weight.row(o)) {
                        *p += d * w;
                    }
                }
                for (p, &z) in pr.iter_mut().zip(pre.row(r)) {
                    if z <= 0.0 {
                        *p *= slope;
                    }
                }
            }
            delta = prev;
        }
        Ok(grads)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;

    fn single(weight: Vec<Vec<f64>>, bias: Vec<f64>) -> EncoderParams {
        EncoderParams::new(
            vec![Dense {
                weight: Matrix::from_rows(&weight).unwrap(),
                bias,
            }],
            DEFAULT_LEAKY_SLOPE,
        )
        .unwrap()
    }

    #[test]
    fn identity_layer() {
        let p = EncoderParams::identity(2);
        let x = Matrix::from_rows(&[[1.0, 2.0]]).unwrap();
        let (y, _) = p.encode(&x).unwrap();
        assert_eq!(y.row(0), &[1.0, 2.0]);
    }

    #[test]
    fn hand_multiplied_layer() {
        let p = single(vec![vec![2.0, 0.0], vec![0.0, 3.0]], vec![1.0, -1.0]);
        let x = Matrix::from_rows(&[[1.0, 1.0]]).unwrap();
        assert_eq!(p.forward(&x).unwrap().row(0), &[3.0, 2.0]);
    }

    #[test]
    fn linear_backprop_is_outer_product() {
        let p = single(vec![vec![0.5, -1.0], vec![2.0, 0.25]], vec![0.0, 0.0]);
        let x = Matrix::from_rows(&[[3.0, -2.0]]).unwrap();
        let (_, tape) = p.encode(&x).unwrap();
        let g = tape
            .backprop(&Matrix::from_rows(&[[1.0, 0.0]]).unwrap())
            .unwrap();
        assert_eq!(g.layers()[0].weight.row(0), &[3.0, -2.0]);
        assert_eq!(g.layers()[0].weight.row(1), &[0.0, 0.0]);
        assert_eq!(g.layers()[0].bias, vec![1.0, 0.0]);
    }

    #[test]
    fn zero_upstream_gives_zero_grads() {
        let shape = EncoderShape::new(3, vec![5, 4], 2);
        let p = EncoderParams::init(&shape, &mut rng::stream(1, "t")).unwrap();
        let x = Matrix::from_rows(&[[0.1, 0.2, 0.3], [-1.0, 0.5, 2.0]]).unwrap();
        let (_, tape) = p.encode(&x).unwrap();
        let g = tape.backprop(&Matrix::zeros(2, 2)).unwrap();
        assert!(g.to_flat().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn shape_errors() {
        let p = EncoderParams::identity(3);
        assert!(matches!(
            p.encode(&Matrix::zeros(1, 2)),
            Err(Error::Config(_))
        ));
        let bad = Matrix::from_rows(&[[1.0, f64::NAN, 0.0]]).unwrap();
        assert!(matches!(p.encode(&bad), Err(Error::Data(_))));
        let (_, tape) = p.encode(&Matrix::zeros(2, 3)).unwrap();
        assert!(tape.backprop(&Matrix::zeros(1, 3)).is_err());

        let l1 = Dense {
            weight: Matrix::zeros(4, 3),
            bias: vec![0.0; 4],
        };
        let l2 = Dense {
            weight: Matrix::zeros(2, 5),
            bias: vec![0.0; 2],
        };
        assert!(EncoderParams::new(vec![l1, l2], 0.01).is_err());
    }

    #[test]
    fn flat_roundtrip() {
        let shape = EncoderShape::new(4, vec![6], 3);
        let p = EncoderParams::init(&shape, &mut rng::stream(3, "t")).unwrap();
        let mut q = p.zeros_like();
        q.assign_flat(&p.to_flat()).unwrap();
        assert_eq!(p, q);
        assert_eq!(p.shape(), shape);
        assert!(q.assign_flat(&[0.0; 3]).is_err());
    }
}
