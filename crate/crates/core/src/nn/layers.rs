use rand::Rng;

use super::Module;
use crate::autodiff::{Tape, Tensor, Var};
use crate::{Error, Result};

fn check_dims(what: &str, dims: &[usize]) -> Result<()> {
    if dims.contains(&0) {
        return Err(Error::Invalid(format!("{what}: dimensions must be positive, got {dims:?}")));
    }
    Ok(())
}

/// Uniform in `[-1/√fan_in, 1/√fan_in]`.
fn uniform_weight<R: Rng + ?Sized>(out: usize, fan_in: usize, rng: &mut R) -> Tensor {
    let bound = 1.0 / (fan_in as f64).sqrt();
    let values = (0..out * fan_in)
        .map(|_| rng.gen_range(-bound..=bound))
        .collect();
    Tensor::new(values, &[out, fan_in], true).expect("shape matches length")
}

#[derive(Clone, Debug, PartialEq)]
pub struct LinearLayer {
    /// `[out, in]`
    pub weight: Tensor,
    /// `[out]`
    pub bias: Tensor,
}

impl LinearLayer {
    pub fn new<R: Rng + ?Sized>(in_dim: usize, out_dim: usize, rng: &mut R) -> Result<Self> {
        check_dims("linear", &[in_dim, out_dim])?;
        Ok(LinearLayer {
            weight: uniform_weight(out_dim, in_dim, rng),
            bias: Tensor::zeros(&[out_dim], true),
        })
    }

    pub fn zeros(in_dim: usize, out_dim: usize) -> Self {
        LinearLayer {
            weight: Tensor::zeros(&[out_dim, in_dim], true),
            bias: Tensor::zeros(&[out_dim], true),
        }
    }

    pub fn in_dim(&self) -> usize {
        self.weight.shape()[1]
    }

    pub fn out_dim(&self) -> usize {
        self.weight.shape()[0]
    }

    pub fn bind<'t>(&self, tape: &'t Tape) -> LinearVars<'t> {
        LinearVars {
            weight: tape.var(&self.weight),
            bias: tape.var(&self.bias),
        }
    }
}

impl Module for LinearLayer {
    fn named_params(&self) -> Vec<(String, &Tensor)> {
        vec![("weight".into(), &self.weight), ("bias".into(), &self.bias)]
    }

    fn params_mut(&mut self) -> Vec<&mut Tensor> {
        vec![&mut self.weight, &mut self.bias]
    }
}

#[derive(Clone, Copy, Debug)]
pub struct LinearVars<'t> {
    pub weight: Var<'t>,
    pub bias: Var<'t>,
}

impl<'t> LinearVars<'t> {
    /// `[rows, in] → [rows, out]`
    pub fn forward(&self, x: Var<'t>) -> Result<Var<'t>> {
        x.linear(self.weight, self.bias)
    }

    pub fn all(&self) -> [Var<'t>; 2] {
        [self.weight, self.bias]
    }
}

/// Gated recurrent unit with one bias per gate.
///
/// ```text
/// z  = σ(W_z x + U_z h + b_z)
/// r  = σ(W_r x + U_r h + b_r)
/// ĥ  = tanh(W_h x + U_h (r ⊙ h) + b_h)
/// h' = (1 - z) ⊙ h + z ⊙ ĥ
/// ```
#[derive(Clone, Debug, PartialEq)]
pub struct GruCell {
    pub w_z: Tensor,
    pub u_z: Tensor,
    pub b_z: Tensor,
    pub w_r: Tensor,
    pub u_r: Tensor,
    pub b_r: Tensor,
    pub w_h: Tensor,
    pub u_h: Tensor,
    pub b_h: Tensor,
}

impl GruCell {
    pub fn new<R: Rng + ?Sized>(in_dim: usize, hidden: usize, rng: &mut R) -> Result<Self> {
        check_dims("gru", &[in_dim, hidden])?;
        let mut gate = || {
            (
                uniform_weight(hidden, in_dim, rng),
                uniform_weight(hidden, hidden, rng),
                Tensor::zeros(&[hidden], true),
            )
        };
        let (w_z, u_z, b_z) = gate();
        let (w_r, u_r, b_r) = gate();
        let (w_h, u_h, b_h) = gate();
        Ok(GruCell {
            w_z,
            u_z,
            b_z,
            w_r,
            u_r,
            b_r,
            w_h,
            u_h,
            b_h,
        })
    }

    pub fn zeros(in_dim: usize, hidden: usize) -> Self {
        let w = || Tensor::zeros(&[hidden, in_dim], true);
        let u = || Tensor::zeros(&[hidden, hidden], true);
        let b = || Tensor::zeros(&[hidden], true);
        GruCell {
            w_z: w(),
            u_z: u(),
            b_z: b(),
            w_r: w(),
            u_r: u(),
            b_r: b(),
            w_h: w(),
            u_h: u(),
            b_h: b(),
        }
    }

    pub fn in_dim(&self) -> usize {
        self.w_z.shape()[1]
    }

    pub fn hidden(&self) -> usize {
        self.w_z.shape()[0]
    }

    pub fn bind<'t>(&self, tape: &'t Tape) -> GruVars<'t> {
        GruVars {
            w_z: tape.var(&self.w_z),
            u_z: tape.var(&self.u_z),
            b_z: tape.var(&self.b_z),
            w_r: tape.var(&self.w_r),
            u_r: tape.var(&self.u_r),
            b_r: tape.var(&self.b_r),
            w_h: tape.var(&self.w_h),
            u_h: tape.var(&self.u_h),
            b_h: tape.var(&self.b_h),
        }
    }
}

impl Module for GruCell {
    fn named_params(&self) -> Vec<(String, &Tensor)> {
        vec![
            ("w_z".into(), &self.w_z),
            ("u_z".into(), &self.u_z),
            ("b_z".into(), &self.b_z),
            ("w_r".into(), &self.w_r),
            ("u_r".into(), &self.u_r),
            ("b_r".into(), &self.b_r),
            ("w_h".into(), &self.w_h),
            ("u_h".into(), &self.u_h),
            ("b_h".into(), &self.b_h),
        ]
    }

    fn params_mut(&mut self) -> Vec<&mut Tensor> {
        vec![
            &mut self.w_z,
            &mut self.u_z,
            &mut self.b_z,
            &mut self.w_r,
            &mut self.u_r,
            &mut self.b_r,
            &mut self.w_h,
            &mut self.u_h,
            &mut self.b_h,
        ]
    }
}

#[derive(Clone, Copy, Debug)]
pub struct GruVars<'t> {
    pub w_z: Var<'t>,
    pub u_z: Var<'t>,
    pub b_z: Var<'t>,
    pub w_r: Var<'t>,
    pub u_r: Var<'t>,
    pub b_r: Var<'t>,
    pub w_h: Var<'t>,
    pub u_h: Var<'t>,
    pub b_h: Var<'t>,
}

impl<'t> GruVars<'t> {
    pub fn all(&self) -> [Var<'t>; 9] {
        [
            self.w_z, self.u_z, self.b_z, self.w_r, self.u_r, self.b_r, self.w_h, self.u_h,
            self.b_h,
        ]
    }

    fn check_widths(&self, x: &Var<'t>, h: &Var<'t>) -> Result<()> {
        let (xs, hs) = (x.shape(), h.shape());
        let in_dim = self.w_z.shape()[1];
        let hidden = self.w_z.shape()[0];
        if xs.len() != 2 || hs.len() != 2 || xs[1] != in_dim || hs[1] != hidden || xs[0] != hs[0] {
            return Err(Error::shape(
                "gru_step",
                format!(
                    "cell is {in_dim} → {hidden}, got input {xs:?} and hidden {hs:?}"
                ),
            ));
        }
        Ok(())
    }

    /// One recurrence step on `[rows, in]` inputs and `[rows, hidden]` state.
    pub fn step(&self, x: Var<'t>, h: Var<'t>) -> Result<Var<'t>> {
        self.check_widths(&x, &h)?;
        let xz = x.linear(self.w_z, self.b_z)?;
        let xr = x.linear(self.w_r, self.b_r)?;
        let xh = x.linear(self.w_h, self.b_h)?;
        self.step_projected(xz, xr, xh, h)
    }

    /// Input projections `W x + b` of a whole `[steps · rows, in]` sequence,
    /// one matrix per gate.
    pub fn project_inputs(&self, x: Var<'t>) -> Result<[Var<'t>; 3]> {
        Ok([
            x.linear(self.w_z, self.b_z)?,
            x.linear(self.w_r, self.b_r)?,
            x.linear(self.w_h, self.b_h)?,
        ])
    }

    /// Recurrence step given precomputed input projections.
    pub fn step_projected(
        &self,
        xz: Var<'t>,
        xr: Var<'t>,
        xh: Var<'t>,
        h: Var<'t>,
    ) -> Result<Var<'t>> {
        let z = xz.add(h.matmul_nt(self.u_z)?)?.sigmoid();
        let r = xr.add(h.matmul_nt(self.u_r)?)?.sigmoid();
        let candidate = xh.add(r.mul_elem(h)?.matmul_nt(self.u_h)?)?.tanh();
        // (1 - z) ⊙ h + z ⊙ ĥ  ==  h + z ⊙ (ĥ - h)
        h.add(z.mul_elem(candidate.sub(h)?)?)
    }
}
