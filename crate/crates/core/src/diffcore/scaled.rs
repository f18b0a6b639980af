use rand::Rng;

use super::{DiffNetwork, ParamVector, Tape};
use crate::error::{check_dim, Error, Result};
use crate::{Matrix, Vector};

/// Per-dimension affine map `shift + scale * x` (outputs) or its inverse
/// `(x - shift) / scale` (inputs).
#[derive(Clone, Debug, PartialEq)]
pub struct Affine {
    pub shift: Vector,
    pub scale: Vector,
}

impl Affine {
    pub fn identity(dim: usize) -> Self {
        Affine {
            shift: Vector::zeros(dim),
            scale: Vector::from_element(dim, 1.0),
        }
    }

    pub fn new(shift: Vector, scale: Vector) -> Result<Self> {
        check_dim("Affine::new", shift.len(), scale.len())?;
        if scale.iter().any(|s| !(*s > 0.0 && s.is_finite())) {
            return Err(Error::InvalidConfig("affine scales must be positive and finite".into()));
        }
        Ok(Affine { shift, scale })
    }

    /// Mean and standard deviation of the rows, with the deviation floored at `min_scale`.
    pub fn from_samples<'a>(
        dim: usize,
        rows: impl IntoIterator<Item = &'a Vector>,
        min_scale: f64,
    ) -> Result<Self> {
        let mut n = 0.0;
        let mut mean = Vector::zeros(dim);
        let mut m2 = Vector::zeros(dim);
        for x in rows {
            check_dim("Affine::from_samples", dim, x.len())?;
            n += 1.0;
            let delta = x - &mean;
            mean += &delta / n;
            let delta2 = x - &mean;
            m2 += delta.component_mul(&delta2);
        }
        if n == 0.0 {
            return Ok(Affine::identity(dim));
        }
        let scale = m2.map(|v| (v / n).sqrt().max(min_scale));
        Ok(Affine { shift: mean, scale })
    }

    pub fn dim(&self) -> usize {
        self.shift.len()
    }

    fn normalize(&self, x: &Vector) -> Vector {
        (x - &self.shift).component_div(&self.scale)
    }

    fn denormalize(&self, y: &Vector) -> Vector {
        &self.shift + y.component_mul(&self.scale)
    }
}

/// A [`DiffNetwork`] between a fixed input standardization and output affine map:
/// `out = out.shift + out.scale * net((x - in.shift) / in.scale)`.
///
/// Only the inner network carries trainable parameters. The `refit_*`
/// methods change the affine maps while adjusting the first or last layer so
/// that the overall function is unchanged.
#[derive(Clone, Debug, PartialEq)]
pub struct ScaledNetwork {
    net: DiffNetwork,
    input: Affine,
    output: Affine,
}

impl ScaledNetwork {
    pub fn new(net: DiffNetwork, input: Affine, output: Affine) -> Result<Self> {
        check_dim("ScaledNetwork input", net.input_dim(), input.dim())?;
        check_dim("ScaledNetwork output", net.output_dim(), output.dim())?;
        Ok(ScaledNetwork { net, input, output })
    }

    pub fn unscaled(net: DiffNetwork) -> Self {
        let input = Affine::identity(net.input_dim());
        let output = Affine::identity(net.output_dim());
        ScaledNetwork { net, input, output }
    }

    pub fn random<R: Rng + ?Sized>(layer_sizes: &[usize], rng: &mut R) -> Result<Self> {
        Ok(Self::unscaled(DiffNetwork::random(layer_sizes, rng)?))
    }

    pub fn zeros(layer_sizes: &[usize]) -> Result<Self> {
        Ok(Self::unscaled(DiffNetwork::zeros(layer_sizes)?))
    }

    pub fn net(&self) -> &DiffNetwork {
        &self.net
    }

    pub fn net_mut(&mut self) -> &mut DiffNetwork {
        &mut self.net
    }

    pub fn input_affine(&self) -> &Affine {
        &self.input
    }

    pub fn output_affine(&self) -> &Affine {
        &self.output
    }

    pub fn input_dim(&self) -> usize {
        self.net.input_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.net.output_dim()
    }

    pub fn num_params(&self) -> usize {
        self.net.num_params()
    }

    pub fn params(&self) -> ParamVector {
        self.net.params()
    }

    pub fn set_params(&mut self, p: &ParamVector) -> Result<()> {
        self.net.set_params(p)
    }

    pub fn forward(&self, x: &Vector) -> Result<Vector> {
        check_dim("ScaledNetwork::forward", self.input_dim(), x.len())?;
        Ok(self.output.denormalize(&self.net.forward(&self.input.normalize(x))?))
    }

    pub fn tape(&self, x: &Vector) -> Result<Tape> {
        check_dim("ScaledNetwork::tape", self.input_dim(), x.len())?;
        self.net.tape(&self.input.normalize(x))
    }

    /// Output recorded on a tape, mapped back through the output affine.
    pub fn tape_output(&self, tape: &Tape) -> Vector {
        self.output.denormalize(tape.output())
    }

    /// Reverse pass in original coordinates; see [`DiffNetwork::backward`].
    pub fn backward(
        &self,
        tape: &Tape,
        cot: &Vector,
        param_acc: Option<(&mut [f64], f64)>,
    ) -> Result<Vector> {
        check_dim("ScaledNetwork::backward", self.output_dim(), cot.len())?;
        let inner = cot.component_mul(&self.output.scale);
        let g = self.net.backward(tape, &inner, param_acc)?;
        Ok(g.component_div(&self.input.scale))
    }

    pub fn input_jacobian(&self, x: &Vector) -> Result<Matrix> {
        check_dim("ScaledNetwork::input_jacobian", self.input_dim(), x.len())?;
        let mut jac = self.net.input_jacobian(&self.input.normalize(x))?;
        for (i, mut row) in jac.row_iter_mut().enumerate() {
            row *= self.output.scale[i];
        }
        for (j, mut col) in jac.column_iter_mut().enumerate() {
            col /= self.input.scale[j];
        }
        Ok(jac)
    }

    pub fn input_vjp(&self, x: &Vector, cot: &Vector) -> Result<Vector> {
        let tape = self.tape(x)?;
        self.backward(&tape, cot, None)
    }

    pub fn param_vjp(&self, x: &Vector, cot: &Vector) -> Result<ParamVector> {
        let tape = self.tape(x)?;
        let mut out = vec![0.0; self.num_params()];
        self.backward(&tape, cot, Some((&mut out, 1.0)))?;
        Ok(ParamVector::from_vec(out))
    }

    /// Replaces the input standardization, compensating in the first layer.
    pub fn refit_input(&mut self, new: Affine) -> Result<()> {
        check_dim("ScaledNetwork::refit_input", self.input.dim(), new.dim())?;
        let ratio = new.scale.component_div(&self.input.scale);
        let offset = (&new.shift - &self.input.shift).component_div(&self.input.scale);
        let w = self.net.weights(0).clone();
        let db = &w * offset;
        *self.net.bias_mut(0) += db;
        let w0 = self.net.weights_mut(0);
        for (j, mut col) in w0.column_iter_mut().enumerate() {
            col *= ratio[j];
        }
        self.input = new;
        Ok(())
    }

    /// Replaces the output affine map, compensating in the last layer.
    pub fn refit_output(&mut self, new: Affine) -> Result<()> {
        check_dim("ScaledNetwork::refit_output", self.output.dim(), new.dim())?;
        let last = self.net.num_layers() - 1;
        let ratio = self.output.scale.component_div(&new.scale);
        let shift = (&self.output.shift - &new.shift).component_div(&new.scale);
        {
            let w = self.net.weights_mut(last);
            for (i, mut row) in w.row_iter_mut().enumerate() {
                row *= ratio[i];
            }
        }
        let b = self.net.bias_mut(last);
        for i in 0..b.len() {
            b[i] = b[i] * ratio[i] + shift[i];
        }
        self.output = new;
        Ok(())
    }
}
