//! Network building blocks on top of [`crate::autodiff`].
//!
//! Networks own plain [`Tensor`] parameters. A forward pass first binds the
//! parameters to a tape (`bind`), producing a mirror struct of [`Var`]s;
//! after `Tape::backward` the gradients are folded back with
//! [`absorb_grads`].

mod checkpoint;
mod layers;
mod networks;
mod rmsprop;

pub use checkpoint::{load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint};
pub use layers::{GruCell, GruVars, LinearLayer, LinearVars};
pub use networks::{CommNetwork, CommVars, QNetVars, QNetwork, COMM_HIDDEN};
pub use rmsprop::{clip_grad_norm, RmsProp, RmsPropConfig};

use crate::autodiff::{Grads, Tensor, Var};
use crate::{Error, Result};

/// A container of named parameters with a fixed ordering.
pub trait Module {
    fn named_params(&self) -> Vec<(String, &Tensor)>;
    fn params_mut(&mut self) -> Vec<&mut Tensor>;

    fn params(&self) -> Vec<&Tensor> {
        self.named_params().into_iter().map(|(_, t)| t).collect()
    }

    fn param_count(&self) -> usize {
        self.params().iter().map(|t| t.len()).sum()
    }

    fn clear_grads(&mut self) {
        self.params_mut().into_iter().for_each(Tensor::clear_grad);
    }

    /// Root of the sum of squared gradient entries over all parameters.
    fn grad_norm(&self) -> f64 {
        self.params()
            .iter()
            .fold(0.0, |acc, t| acc + t.grad_norm().powi(2))
            .sqrt()
    }

    fn set_requires_grad(&mut self, flag: bool) {
        self.params_mut()
            .into_iter()
            .for_each(|t| t.set_requires_grad(flag));
    }
}

/// Adds the gradients of `vars` (bound from `module` in parameter order)
/// into the module's gradient slots.
pub fn absorb_grads<M: Module + ?Sized>(module: &mut M, vars: &[Var<'_>], grads: &Grads) -> Result<()> {
    let params = module.params_mut();
    if params.len() != vars.len() {
        return Err(Error::Invalid(format!(
            "{} bound vars for {} parameters",
            vars.len(),
            params.len()
        )));
    }
    for (p, v) in params.into_iter().zip(vars) {
        if let Some(g) = grads.get(*v) {
            p.accumulate_grad(g)?;
        }
    }
    Ok(())
}

/// Hard copy of `live` into `target`; target parameters stay frozen.
pub fn sync_target<M: Module + ?Sized>(live: &M, target: &mut M) -> Result<()> {
    let src = live.params();
    let dst = target.params_mut();
    if src.len() != dst.len() {
        return Err(Error::Invalid(format!(
            "target has {} parameters, live has {}",
            dst.len(),
            src.len()
        )));
    }
    for (d, s) in dst.into_iter().zip(src) {
        d.copy_values_from(s)?;
        d.set_requires_grad(false);
    }
    Ok(())
}

/// Largest absolute difference between corresponding parameters.
pub fn max_abs_diff<M: Module + ?Sized>(a: &M, b: &M) -> f64 {
    a.params()
        .iter()
        .zip(b.params())
        .flat_map(|(x, y)| x.values().iter().zip(y.values()).map(|(p, q)| (p - q).abs()))
        .fold(0.0, f64::max)
}
