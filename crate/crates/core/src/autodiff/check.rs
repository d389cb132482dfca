use super::{Tape, Tensor, Var};
use crate::{Error, Result};

/// Worst entry found by [`grad_check_report`].
#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub input: usize,
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
}

/// Compares tape gradients of a scalar function against central differences.
///
/// Returns the maximum over all input entries of
/// `|analytic - numeric| / max(1, |analytic|)`.
pub fn grad_check<F>(f: F, inputs: &[Tensor], h: f64) -> Result<f64>
where
    F: for<'t> Fn(&'t Tape, &[Var<'t>]) -> Result<Var<'t>>,
{
    grad_check_report(f, inputs, h).map(|r| r.max_rel_error)
}

pub fn grad_check_report<F>(f: F, inputs: &[Tensor], h: f64) -> Result<GradCheckReport>
where
    F: for<'t> Fn(&'t Tape, &[Var<'t>]) -> Result<Var<'t>>,
{
    if !(h > 0.0) {
        return Err(Error::Invalid(format!("finite-difference step must be positive, got {h}")));
    }
    let analytic: Vec<Vec<f64>> = {
        let tape = Tape::new();
        let vars: Vec<Var<'_>> = inputs.iter().map(|t| tape.var(t)).collect();
        let out = f(&tape, &vars)?;
        let grads = tape.backward(out)?;
        vars.iter()
            .zip(inputs)
            .map(|(v, t)| {
                grads
                    .get(*v)
                    .map(<[f64]>::to_vec)
                    .unwrap_or_else(|| vec![0.0; t.len()])
            })
            .collect()
    };

    let eval = |probe: &[Tensor]| -> Result<f64> {
        let tape = Tape::new();
        let vars: Vec<Var<'_>> = probe.iter().map(|t| tape.var(t)).collect();
        Ok(f(&tape, &vars)?.item())
    };

    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        input: 0,
        index: 0,
        analytic: 0.0,
        numeric: 0.0,
    };
    let mut probe = inputs.to_vec();
    for (k, input) in inputs.iter().enumerate() {
        if !input.requires_grad() {
            continue;
        }
        for e in 0..input.len() {
            let x = input.values()[e];
            probe[k].values_mut()[e] = x + h;
            let plus = eval(&probe)?;
            probe[k].values_mut()[e] = x - h;
            let minus = eval(&probe)?;
            probe[k].values_mut()[e] = x;
            let numeric = (plus - minus) / (2.0 * h);
            let a = analytic[k][e];
            let err = (a - numeric).abs() / a.abs().max(1.0);
            if err > report.max_rel_error || (k == 0 && e == 0) {
                report = GradCheckReport {
                    max_rel_error: err.max(report.max_rel_error),
                    input: k,
                    index: e,
                    analytic: a,
                    numeric,
                };
            }
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linear_function_is_exact() {
        let x = Tensor::new(vec![0.1, -2.0, 3.5], &[3], true).unwrap();
        let err = grad_check(|_, v| Ok(v[0].sum()), &[x], 1e-5).unwrap();
        assert!(err <= 1e-10, "{err}");
    }

    #[test]
    fn tanh_at_half() {
        let x = Tensor::new(vec![0.5], &[1], true).unwrap();
        let tape = Tape::new();
        let v = tape.var(&x);
        let y = v.tanh();
        assert!((y.item() - 0.46212).abs() < 1e-5);
        let g = tape.backward(y.sum()).unwrap();
        assert!((g.get(v).unwrap()[0] - 0.78645).abs() < 1e-5);
        let err = grad_check(|_, v| Ok(v[0].tanh().sum()), &[x], 1e-6).unwrap();
        assert!(err <= 1e-8, "{err}");
    }

    #[test]
    fn detached_only_path_agrees_at_zero() {
        // A detached copy is a snapshot: perturbing the input afterwards
        // must not move it, so the snapshot is taken outside the probe.
        let x = Tensor::new(vec![1.0, 2.0], &[2], true).unwrap();
        let snapshot = x.clone();
        let report = grad_check_report(
            |tape, v| {
                let frozen = tape.var(&snapshot).detach();
                frozen.sum().add(v[0].scale(0.0).sum())
            },
            &[x],
            1e-5,
        )
        .unwrap();
        assert_eq!(report.analytic, 0.0);
        assert_eq!(report.numeric, 0.0);
    }

    #[test]
    fn rejects_nonpositive_step() {
        let x = Tensor::new(vec![1.0], &[1], true).unwrap();
        assert!(grad_check(|_, v| Ok(v[0].sum()), &[x], 0.0).is_err());
    }
}
