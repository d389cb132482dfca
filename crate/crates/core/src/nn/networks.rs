use rand::Rng;

use super::layers::{GruCell, GruVars, LinearLayer, LinearVars};
use super::Module;
use crate::autodiff::{Tape, Tensor, Var};
use crate::{Error, Result};

/// Width of the message encoder's hidden layer.
pub const COMM_HIDDEN: usize = 64;

fn prefixed<'a>(prefix: &str, params: Vec<(String, &'a Tensor)>) -> Vec<(String, &'a Tensor)> {
    params
        .into_iter()
        .map(|(n, t)| (format!("{prefix}.{n}"), t))
        .collect()
}

/// Recurrent Q-network: `relu(encoder) → GRU → head`.
#[derive(Clone, Debug, PartialEq)]
pub struct QNetwork {
    pub encoder: LinearLayer,
    pub rnn: GruCell,
    pub head: LinearLayer,
}

impl QNetwork {
    pub fn new<R: Rng + ?Sized>(
        input_width: usize,
        hidden: usize,
        n_actions: usize,
        rng: &mut R,
    ) -> Result<Self> {
        Ok(QNetwork {
            encoder: LinearLayer::new(input_width, hidden, rng)?,
            rnn: GruCell::new(hidden, hidden, rng)?,
            head: LinearLayer::new(hidden, n_actions, rng)?,
        })
    }

    pub fn input_width(&self) -> usize {
        self.encoder.in_dim()
    }

    pub fn hidden(&self) -> usize {
        self.rnn.hidden()
    }

    pub fn n_actions(&self) -> usize {
        self.head.out_dim()
    }

    /// Clone with every parameter frozen; used for target networks.
    pub fn frozen_copy(&self) -> Self {
        let mut copy = self.clone();
        copy.set_requires_grad(false);
        copy
    }

    pub fn bind<'t>(&self, tape: &'t Tape) -> QNetVars<'t> {
        QNetVars {
            encoder: self.encoder.bind(tape),
            rnn: self.rnn.bind(tape),
            head: self.head.bind(tape),
        }
    }
}

impl Module for QNetwork {
    fn named_params(&self) -> Vec<(String, &Tensor)> {
        let mut out = prefixed("encoder", self.encoder.named_params());
        out.extend(prefixed("rnn", self.rnn.named_params()));
        out.extend(prefixed("head", self.head.named_params()));
        out
    }

    fn params_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out = self.encoder.params_mut();
        out.extend(self.rnn.params_mut());
        out.extend(self.head.params_mut());
        out
    }
}

#[derive(Clone, Copy, Debug)]
pub struct QNetVars<'t> {
    pub encoder: LinearVars<'t>,
    pub rnn: GruVars<'t>,
    pub head: LinearVars<'t>,
}

impl<'t> QNetVars<'t> {
    /// Bound parameters in [`Module::params`] order.
    pub fn all(&self) -> Vec<Var<'t>> {
        let mut out = self.encoder.all().to_vec();
        out.extend(self.rnn.all());
        out.extend(self.head.all());
        out
    }

    fn input_width(&self) -> usize {
        self.encoder.weight.shape()[1]
    }

    fn hidden(&self) -> usize {
        self.rnn.w_z.shape()[0]
    }

    fn check_input(&self, x: &Var<'t>) -> Result<()> {
        let s = x.shape();
        if s.len() != 2 || s[1] != self.input_width() {
            return Err(Error::shape(
                "q_forward",
                format!("network expects [rows, {}], got {:?}", self.input_width(), s),
            ));
        }
        Ok(())
    }

    /// Single step: Q-values `[rows, actions]` and the next hidden state.
    pub fn forward(&self, input: Var<'t>, h: Var<'t>) -> Result<(Var<'t>, Var<'t>)> {
        self.check_input(&input)?;
        let e = self.encoder.forward(input)?.relu();
        let h1 = self.rnn.step(e, h)?;
        Ok((self.head.forward(h1)?, h1))
    }

    /// Unrolls over a time-major sequence `[steps · batch, in]` (row
    /// `t · batch + b`) from a zero hidden state. Returns Q-values in the
    /// same row layout and the final hidden state.
    pub fn unroll(&self, inputs: Var<'t>, batch: usize) -> Result<(Var<'t>, Var<'t>)> {
        self.check_input(&inputs)?;
        let rows = inputs.shape()[0];
        if batch == 0 || !rows.is_multiple_of(batch) {
            return Err(Error::shape(
                "q_unroll",
                format!("{rows} rows do not split into sequences of batch {batch}"),
            ));
        }
        let steps = rows / batch;
        let tape = inputs.tape();
        let hidden = self.hidden();
        let e = self.encoder.forward(inputs)?.relu();
        let [xz, xr, xh] = self.rnn.project_inputs(e)?;
        let mut h = tape.constant(vec![0.0; batch * hidden], &[batch, hidden])?;
        let mut states = Vec::with_capacity(steps);
        for t in 0..steps {
            let (lo, hi) = (t * batch, (t + 1) * batch);
            h = self.rnn.step_projected(
                xz.slice(lo, hi, 0)?,
                xr.slice(lo, hi, 0)?,
                xh.slice(lo, hi, 0)?,
                h,
            )?;
            states.push(h);
        }
        let all = tape.concat(&states, 0)?;
        Ok((self.head.forward(all)?, h))
    }
}

/// Message encoder `obs → 64 → msg_dim` with a ReLU in between and a
/// linear output.
#[derive(Clone, Debug, PartialEq)]
pub struct CommNetwork {
    pub enc1: LinearLayer,
    pub enc2: LinearLayer,
}

impl CommNetwork {
    pub fn new<R: Rng + ?Sized>(obs_dim: usize, msg_dim: usize, rng: &mut R) -> Result<Self> {
        Ok(CommNetwork {
            enc1: LinearLayer::new(obs_dim, COMM_HIDDEN, rng)?,
            enc2: LinearLayer::new(COMM_HIDDEN, msg_dim, rng)?,
        })
    }

    pub fn obs_dim(&self) -> usize {
        self.enc1.in_dim()
    }

    pub fn msg_dim(&self) -> usize {
        self.enc2.out_dim()
    }

    pub fn frozen_copy(&self) -> Self {
        let mut copy = self.clone();
        copy.set_requires_grad(false);
        copy
    }

    pub fn bind<'t>(&self, tape: &'t Tape) -> CommVars<'t> {
        CommVars {
            enc1: self.enc1.bind(tape),
            enc2: self.enc2.bind(tape),
        }
    }
}

impl Module for CommNetwork {
    fn named_params(&self) -> Vec<(String, &Tensor)> {
        let mut out = prefixed("enc1", self.enc1.named_params());
        out.extend(prefixed("enc2", self.enc2.named_params()));
        out
    }

    fn params_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out = self.enc1.params_mut();
        out.extend(self.enc2.params_mut());
        out
    }
}

#[derive(Clone, Copy, Debug)]
pub struct CommVars<'t> {
    pub enc1: LinearVars<'t>,
    pub enc2: LinearVars<'t>,
}

impl<'t> CommVars<'t> {
    pub fn all(&self) -> Vec<Var<'t>> {
        let mut out = self.enc1.all().to_vec();
        out.extend(self.enc2.all());
        out
    }

    /// `[rows, obs_dim] → [rows, msg_dim]`
    pub fn forward(&self, obs: Var<'t>) -> Result<Var<'t>> {
        let s = obs.shape();
        let want = self.enc1.weight.shape()[1];
        if s.len() != 2 || s[1] != want {
            return Err(Error::shape(
                "comm_forward",
                format!("encoder expects [rows, {want}], got {s:?}"),
            ));
        }
        self.enc2.forward(self.enc1.forward(obs)?.relu())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;

    #[test]
    fn same_seed_same_parameters() {
        let a = QNetwork::new(10, 32, 6, &mut seeded(7)).unwrap();
        let b = QNetwork::new(10, 32, 6, &mut seeded(7)).unwrap();
        assert_eq!(a, b);
        let bits = |n: &QNetwork| -> Vec<u64> {
            n.params().iter().flat_map(|t| t.values().iter().map(|v| v.to_bits())).collect()
        };
        assert_eq!(bits(&a), bits(&b));
    }

    #[test]
    fn capacity_sweep_sizes_construct() {
        for hidden in [32, 64, 128] {
            let net = QNetwork::new(52, hidden, 6, &mut seeded(0)).unwrap();
            assert_eq!(net.hidden(), hidden);
        }
    }

    #[test]
    fn parameter_count_formula() {
        let (d, h, k) = (52usize, 64usize, 6usize);
        let net = QNetwork::new(d, h, k, &mut seeded(0)).unwrap();
        let expected = (h * d + h) + 3 * (h * h + h * h + h) + (k * h + k);
        assert_eq!(net.param_count(), expected);
    }

    #[test]
    fn q_output_shape_and_zero_head() {
        let mut net = QNetwork::new(5, 8, 6, &mut seeded(2)).unwrap();
        let tape = Tape::new();
        let vars = net.bind(&tape);
        let x = tape.constant(vec![0.1, 0.2, 0.3, 0.4, 0.5], &[1, 5]).unwrap();
        let h = tape.constant(vec![0.0; 8], &[1, 8]).unwrap();
        let (q, h1) = vars.forward(x, h).unwrap();
        assert_eq!(q.shape(), vec![1, 6]);
        assert_eq!(h1.shape(), vec![1, 8]);

        net.head.weight.values_mut().iter_mut().for_each(|w| *w = 0.0);
        let bias = [0.5, -1.0, 2.0, 0.0, 3.0, 1.5];
        net.head.bias.values_mut().copy_from_slice(&bias);
        let tape = Tape::new();
        let vars = net.bind(&tape);
        let x = tape.constant(vec![0.1, 0.2, 0.3, 0.4, 0.5], &[1, 5]).unwrap();
        let h = tape.constant(vec![0.0; 8], &[1, 8]).unwrap();
        let (q, _) = vars.forward(x, h).unwrap();
        assert_eq!(&*q.value(), &bias);
    }

    #[test]
    fn unroll_matches_stepwise_forward() {
        let net = QNetwork::new(3, 4, 2, &mut seeded(5)).unwrap();
        let (steps, batch) = (3, 2);
        let data: Vec<f64> = (0..steps * batch * 3).map(|i| (i as f64 * 0.37).sin()).collect();
        let tape = Tape::new();
        let vars = net.bind(&tape);
        let inputs = tape.constant(data.clone(), &[steps * batch, 3]).unwrap();
        let (q_all, _) = vars.unroll(inputs, batch).unwrap();
        let q_all = q_all.to_vec();

        let mut h = tape.constant(vec![0.0; batch * 4], &[batch, 4]).unwrap();
        for t in 0..steps {
            let x = tape
                .constant(data[t * batch * 3..(t + 1) * batch * 3].to_vec(), &[batch, 3])
                .unwrap();
            let (q, h1) = vars.forward(x, h).unwrap();
            h = h1;
            for (a, b) in q.value().iter().zip(&q_all[t * batch * 2..(t + 1) * batch * 2]) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn width_mismatch_is_an_error() {
        let net = QNetwork::new(5, 8, 6, &mut seeded(2)).unwrap();
        let tape = Tape::new();
        let vars = net.bind(&tape);
        let x = tape.constant(vec![0.0; 4], &[1, 4]).unwrap();
        let h = tape.constant(vec![0.0; 8], &[1, 8]).unwrap();
        assert!(vars.forward(x, h).is_err());

        let comm = CommNetwork::new(5, 64, &mut seeded(0)).unwrap();
        let cv = comm.bind(&tape);
        assert!(cv.forward(x).is_err());
    }

    #[test]
    fn message_shape_and_zero_parameters() {
        let mut comm = CommNetwork::new(7, 64, &mut seeded(0)).unwrap();
        let tape = Tape::new();
        let obs = tape.constant(vec![0.5; 7], &[1, 7]).unwrap();
        let m = comm.bind(&tape).forward(obs).unwrap();
        assert_eq!(m.shape(), vec![1, 64]);

        comm.params_mut()
            .into_iter()
            .for_each(|t| t.values_mut().iter_mut().for_each(|v| *v = 0.0));
        let m = comm.bind(&tape).forward(obs).unwrap();
        assert!(m.value().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn frozen_copy_has_no_trainable_params() {
        let net = QNetwork::new(5, 8, 6, &mut seeded(2)).unwrap();
        let target = net.frozen_copy();
        assert!(target.params().iter().all(|t| !t.requires_grad()));
        assert!(net.params().iter().all(|t| t.requires_grad()));
    }
}
