use nalgebra::DMatrixViewMut;
use rand::Rng;

use super::ParamVector;
use crate::error::{check_dim, Error, Result};
use crate::{Matrix, Vector};

/// Feedforward network: tanh on hidden layers, identity on the output layer.
///
/// `layer_sizes = [input, hidden.., output]`. A two-element shape is a single
/// affine map.
#[derive(Clone, Debug, PartialEq)]
pub struct DiffNetwork {
    layer_sizes: Vec<usize>,
    weights: Vec<Matrix>,
    biases: Vec<Vector>,
}

/// Activations recorded by a forward pass, consumed by [`DiffNetwork::backward`].
///
/// `activations[0]` is the input, `activations[l]` for `0 < l < L` the tanh
/// output of hidden layer `l`, and the last entry is the network output.
#[derive(Clone, Debug)]
pub struct Tape {
    activations: Vec<Vector>,
}

impl Tape {
    pub fn output(&self) -> &Vector {
        self.activations.last().expect("tape always holds the input")
    }

    pub fn input(&self) -> &Vector {
        &self.activations[0]
    }
}

fn validate_shape(layer_sizes: &[usize]) -> Result<()> {
    if layer_sizes.len() < 2 {
        return Err(Error::InvalidConfig(format!(
            "network needs at least input and output sizes, got {layer_sizes:?}"
        )));
    }
    if layer_sizes.contains(&0) {
        return Err(Error::InvalidConfig(format!(
            "layer sizes must be positive, got {layer_sizes:?}"
        )));
    }
    Ok(())
}

impl DiffNetwork {
    pub fn zeros(layer_sizes: &[usize]) -> Result<Self> {
        validate_shape(layer_sizes)?;
        let weights = layer_sizes
            .windows(2)
            .map(|w| Matrix::zeros(w[1], w[0]))
            .collect();
        let biases = layer_sizes[1..].iter().map(|&n| Vector::zeros(n)).collect();
        Ok(DiffNetwork {
            layer_sizes: layer_sizes.to_vec(),
            weights,
            biases,
        })
    }

    /// Weights and biases uniform in `[-1/sqrt(fan_in), 1/sqrt(fan_in)]`.
    pub fn random<R: Rng + ?Sized>(layer_sizes: &[usize], rng: &mut R) -> Result<Self> {
        let mut net = Self::zeros(layer_sizes)?;
        for (w, b) in net.weights.iter_mut().zip(net.biases.iter_mut()) {
            let bound = 1.0 / (w.ncols() as f64).sqrt();
            w.iter_mut()
                .for_each(|v| *v = rng.random_range(-bound..=bound));
            b.iter_mut()
                .for_each(|v| *v = rng.random_range(-bound..=bound));
        }
        Ok(net)
    }

    /// Builds a network from explicit per-layer weights (`out x in`) and biases.
    pub fn from_layers(weights: Vec<Matrix>, biases: Vec<Vector>) -> Result<Self> {
        if weights.is_empty() || weights.len() != biases.len() {
            return Err(Error::InvalidConfig(
                "need one bias per weight matrix and at least one layer".into(),
            ));
        }
        let mut layer_sizes = vec![weights[0].ncols()];
        for (w, b) in weights.iter().zip(&biases) {
            check_dim("DiffNetwork::from_layers", *layer_sizes.last().unwrap(), w.ncols())?;
            check_dim("DiffNetwork::from_layers bias", w.nrows(), b.len())?;
            layer_sizes.push(w.nrows());
        }
        validate_shape(&layer_sizes)?;
        Ok(DiffNetwork {
            layer_sizes,
            weights,
            biases,
        })
    }

    pub fn from_params(layer_sizes: &[usize], params: &ParamVector) -> Result<Self> {
        let mut net = Self::zeros(layer_sizes)?;
        net.set_params(params)?;
        Ok(net)
    }

    pub fn layer_sizes(&self) -> &[usize] {
        &self.layer_sizes
    }

    pub fn input_dim(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.layer_sizes.last().unwrap()
    }

    pub fn num_layers(&self) -> usize {
        self.weights.len()
    }

    pub fn num_params(&self) -> usize {
        self.layer_sizes
            .windows(2)
            .map(|w| w[0] * w[1] + w[1])
            .sum()
    }

    pub fn weights(&self, layer: usize) -> &Matrix {
        &self.weights[layer]
    }

    pub fn weights_mut(&mut self, layer: usize) -> &mut Matrix {
        &mut self.weights[layer]
    }

    pub fn bias(&self, layer: usize) -> &Vector {
        &self.biases[layer]
    }

    pub fn bias_mut(&mut self, layer: usize) -> &mut Vector {
        &mut self.biases[layer]
    }

    pub fn params(&self) -> ParamVector {
        let mut out = Vec::with_capacity(self.num_params());
        for (w, b) in self.weights.iter().zip(&self.biases) {
            out.extend_from_slice(w.as_slice());
            out.extend_from_slice(b.as_slice());
        }
        ParamVector::from_vec(out)
    }

    pub fn set_params(&mut self, params: &ParamVector) -> Result<()> {
        check_dim("DiffNetwork::set_params", self.num_params(), params.len())?;
        let src = params.as_slice();
        let mut offset = 0;
        for (w, b) in self.weights.iter_mut().zip(self.biases.iter_mut()) {
            let n = w.len();
            w.as_mut_slice().copy_from_slice(&src[offset..offset + n]);
            offset += n;
            let m = b.len();
            b.as_mut_slice().copy_from_slice(&src[offset..offset + m]);
            offset += m;
        }
        Ok(())
    }

    pub fn forward(&self, x: &Vector) -> Result<Vector> {
        check_dim("DiffNetwork::forward", self.input_dim(), x.len())?;
        let last = self.num_layers() - 1;
        let mut h = x.clone();
        for (l, (w, b)) in self.weights.iter().zip(&self.biases).enumerate() {
            let mut z = b.clone();
            z.gemv(1.0, w, &h, 1.0);
            if l < last {
                z.apply(|v| *v = v.tanh());
            }
            h = z;
        }
        Ok(h)
    }

    /// Forward pass that keeps every activation for a later [`backward`](Self::backward).
    pub fn tape(&self, x: &Vector) -> Result<Tape> {
        check_dim("DiffNetwork::tape", self.input_dim(), x.len())?;
        let last = self.num_layers() - 1;
        let mut activations = Vec::with_capacity(self.num_layers() + 1);
        activations.push(x.clone());
        for (l, (w, b)) in self.weights.iter().zip(&self.biases).enumerate() {
            let mut z = b.clone();
            z.gemv(1.0, w, activations.last().unwrap(), 1.0);
            if l < last {
                z.apply(|v| *v = v.tanh());
            }
            activations.push(z);
        }
        Ok(Tape { activations })
    }

    /// Reverse pass for cotangent `cot` on the output.
    ///
    /// Returns `cot^T d(out)/d(x)`. When `param_acc` is given, adds
    /// `scale * cot^T d(out)/d(params)` into it in [`ParamVector`] order.
    pub fn backward(
        &self,
        tape: &Tape,
        cot: &Vector,
        param_acc: Option<(&mut [f64], f64)>,
    ) -> Result<Vector> {
        check_dim("DiffNetwork::backward", self.output_dim(), cot.len())?;
        if let Some((acc, _)) = &param_acc {
            check_dim("DiffNetwork::backward params", self.num_params(), acc.len())?;
        }
        let mut acc = param_acc;
        let offsets = self.layer_offsets();
        let mut delta = cot.clone();
        for l in (0..self.num_layers()).rev() {
            let w = &self.weights[l];
            let input = &tape.activations[l];
            if let Some((buf, scale)) = acc.as_mut() {
                let off = offsets[l];
                let (rows, cols) = w.shape();
                let mut gw = DMatrixViewMut::from_slice(&mut buf[off..off + rows * cols], rows, cols);
                gw.ger(*scale, &delta, input, 1.0);
                let boff = off + rows * cols;
                for (g, d) in buf[boff..boff + rows].iter_mut().zip(delta.iter()) {
                    *g += *scale * d;
                }
            }
            let mut g = w.tr_mul(&delta);
            if l > 0 {
                g.zip_apply(input, |gi, a| *gi *= 1.0 - a * a);
            }
            delta = g;
        }
        Ok(delta)
    }

    /// Exact Jacobian `d(out)/d(x)`, shape `output_dim x input_dim`.
    pub fn input_jacobian(&self, x: &Vector) -> Result<Matrix> {
        let tape = self.tape(x)?;
        let last = self.num_layers() - 1;
        let mut jac = self.weights[0].clone();
        for l in 0..last {
            let a = &tape.activations[l + 1];
            for (i, mut row) in jac.row_iter_mut().enumerate() {
                row *= 1.0 - a[i] * a[i];
            }
            jac = &self.weights[l + 1] * jac;
        }
        Ok(jac)
    }

    /// `cot^T d(out)/d(x)` without forming the Jacobian.
    pub fn input_vjp(&self, x: &Vector, cot: &Vector) -> Result<Vector> {
        let tape = self.tape(x)?;
        self.backward(&tape, cot, None)
    }

    /// `cot^T d(out)/d(params)` in [`ParamVector`] order.
    pub fn param_vjp(&self, x: &Vector, cot: &Vector) -> Result<ParamVector> {
        let tape = self.tape(x)?;
        let mut out = vec![0.0; self.num_params()];
        self.backward(&tape, cot, Some((&mut out, 1.0)))?;
        Ok(ParamVector::from_vec(out))
    }

    fn layer_offsets(&self) -> Vec<usize> {
        let mut offsets = Vec::with_capacity(self.num_layers());
        let mut off = 0;
        for w in &self.weights {
            offsets.push(off);
            off += w.len() + w.nrows();
        }
        offsets
    }
}
