use super::Module;
use crate::autodiff::Tensor;
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RmsPropConfig {
    pub lr: f64,
    /// Smoothing constant ρ of the squared-gradient average.
    pub rho: f64,
    pub eps: f64,
}

impl Default for RmsPropConfig {
    fn default() -> Self {
        RmsPropConfig {
            lr: 5e-4,
            rho: 0.99,
            eps: 1e-5,
        }
    }
}

/// RMSprop over a fixed list of parameter tensors.
///
/// ```text
/// v ← ρ·v + (1-ρ)·g²
/// p ← p - α·g / (√v + ε)
/// ```
///
/// Tensors without a stored gradient are skipped for that step. The
/// optimizer counts how many updates each tensor has received.
#[derive(Clone, Debug)]
pub struct RmsProp {
    pub config: RmsPropConfig,
    sq_avg: Vec<Vec<f64>>,
    updates: Vec<u64>,
}

impl RmsProp {
    pub fn new(params: &[&Tensor], config: RmsPropConfig) -> Self {
        RmsProp {
            config,
            sq_avg: params.iter().map(|t| vec![0.0; t.len()]).collect(),
            updates: vec![0; params.len()],
        }
    }

    pub fn for_module<M: Module + ?Sized>(module: &M, config: RmsPropConfig) -> Self {
        Self::new(&module.params(), config)
    }

    /// Update counters, one per parameter tensor.
    pub fn update_counts(&self) -> &[u64] {
        &self.updates
    }

    pub fn square_averages(&self) -> &[Vec<f64>] {
        &self.sq_avg
    }

    /// Applies one step using each tensor's gradient slot.
    pub fn step(&mut self, params: Vec<&mut Tensor>) -> Result<()> {
        if params.len() != self.sq_avg.len() {
            return Err(Error::shape(
                "rmsprop_step",
                format!(
                    "optimizer tracks {} tensors, got {}",
                    self.sq_avg.len(),
                    params.len()
                ),
            ));
        }
        let RmsPropConfig { lr, rho, eps } = self.config;
        for (k, p) in params.into_iter().enumerate() {
            let Some(g) = p.grad().map(<[f64]>::to_vec) else {
                continue;
            };
            let v = &mut self.sq_avg[k];
            if v.len() != g.len() {
                return Err(Error::shape(
                    "rmsprop_step",
                    format!("state of length {} for parameter {:?}", v.len(), p.shape()),
                ));
            }
            for ((x, vi), gi) in p.values_mut().iter_mut().zip(v.iter_mut()).zip(&g) {
                *vi = rho * *vi + (1.0 - rho) * gi * gi;
                *x -= lr * gi / (vi.sqrt() + eps);
            }
            self.updates[k] += 1;
        }
        Ok(())
    }

    pub fn step_module<M: Module + ?Sized>(&mut self, module: &mut M) -> Result<()> {
        self.step(module.params_mut())
    }
}

/// Rescales gradients so their joint norm is at most `max_norm`; returns
/// the norm before clipping.
pub fn clip_grad_norm(params: Vec<&mut Tensor>, max_norm: f64) -> f64 {
    let total = params
        .iter()
        .fold(0.0, |acc, t| acc + t.grad_norm().powi(2))
        .sqrt();
    if total > max_norm && total > 0.0 {
        let factor = max_norm / total;
        for p in params {
            if let Some(g) = p.grad().map(|g| g.iter().map(|x| x * factor).collect::<Vec<_>>()) {
                p.clear_grad();
                p.accumulate_grad(&g).expect("same length");
            }
        }
    }
    total
}

#[cfg(test)]
mod tests {
    use super::*;

    fn param(values: &[f64]) -> Tensor {
        Tensor::new(values.to_vec(), &[values.len()], true).unwrap()
    }

    #[test]
    fn zero_gradient_leaves_parameters() {
        let mut p = param(&[1.0, -2.0]);
        let mut opt = RmsProp::new(&[&p], RmsPropConfig::default());
        p.accumulate_grad(&[0.0, 0.0]).unwrap();
        opt.step(vec![&mut p]).unwrap();
        assert_eq!(p.values(), &[1.0, -2.0]);
        assert_eq!(opt.update_counts(), &[1]);
    }

    #[test]
    fn first_step_closed_form() {
        let cfg = RmsPropConfig::default();
        let mut p = param(&[0.0]);
        let mut opt = RmsProp::new(&[&p], cfg);
        p.accumulate_grad(&[1.0]).unwrap();
        opt.step(vec![&mut p]).unwrap();
        // v = 0.01 after one step from zero
        let expected = -cfg.lr / (0.01f64.sqrt() + cfg.eps);
        assert!((p.values()[0] - expected).abs() < 1e-15);
        assert!(opt.square_averages()[0][0] >= 0.0);
    }

    #[test]
    fn missing_gradient_is_skipped() {
        let mut p = param(&[3.0]);
        let mut opt = RmsProp::new(&[&p], RmsPropConfig::default());
        opt.step(vec![&mut p]).unwrap();
        assert_eq!(p.values(), &[3.0]);
        assert_eq!(opt.update_counts(), &[0]);
    }

    #[test]
    fn identical_inputs_identical_steps() {
        let mut a = param(&[0.3, 0.7]);
        let mut b = a.clone();
        let mut oa = RmsProp::new(&[&a], RmsPropConfig::default());
        let mut ob = RmsProp::new(&[&b], RmsPropConfig::default());
        for _ in 0..3 {
            a.accumulate_grad(&[0.1, -0.4]).unwrap();
            b.accumulate_grad(&[0.1, -0.4]).unwrap();
            oa.step(vec![&mut a]).unwrap();
            ob.step(vec![&mut b]).unwrap();
        }
        assert_eq!(a.values(), b.values());
    }

    #[test]
    fn step_rejects_wrong_parameter_count() {
        let mut a = param(&[1.0]);
        let b = param(&[1.0]);
        let mut opt = RmsProp::new(&[&a, &b], RmsPropConfig::default());
        assert!(opt.step(vec![&mut a]).is_err());
    }

    #[test]
    fn clipping_bounds_the_norm() {
        let mut a = param(&[3.0, 4.0]);
        a.accumulate_grad(&[3.0, 4.0]).unwrap();
        let before = clip_grad_norm(vec![&mut a], 1.0);
        assert!((before - 5.0).abs() < 1e-12);
        assert!((a.grad_norm() - 1.0).abs() < 1e-12);
    }
}
