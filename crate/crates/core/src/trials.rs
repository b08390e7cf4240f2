//! Seeded Monte-Carlo trial layout.
//!
//! Trial `t` evaluates network `⌊t / inputs_per_net⌋` at its own input point.
//! Network and input seeds are derived from the root seed and the indices
//! alone, so the output is independent of scheduling and thread count.

use rayon::prelude::*;

use crate::activation::Activation;
use crate::error::{Error, Result};
use crate::network::{sample_input, InputPoint, Network};
use crate::rng::{derive_seed, tag};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrialDesign {
    pub depth: usize,
    pub d: usize,
    pub k: usize,
    pub activation: Activation,
    /// Inputs evaluated per sampled network; 1 gives independent `(net, x)` pairs.
    pub inputs_per_net: usize,
}

impl TrialDesign {
    /// Fresh depth-1 network for every trial.
    pub fn independent(d: usize, k: usize, activation: Activation) -> Self {
        Self {
            depth: 1,
            d,
            k,
            activation,
            inputs_per_net: 1,
        }
    }

    pub fn with_inputs_per_net(mut self, n: usize) -> Self {
        self.inputs_per_net = n;
        self
    }

    pub fn with_depth(mut self, depth: usize) -> Self {
        self.depth = depth;
        self
    }

    pub fn network_seed(seed: u64, net_index: usize) -> u64 {
        derive_seed(seed, &[tag::TRIAL_NET, net_index as u64])
    }

    pub fn input_seed(seed: u64, trial: usize) -> u64 {
        derive_seed(seed, &[tag::TRIAL_INPUT, trial as u64])
    }

    /// Runs `body(net, x, trial)` for `trials` trials and returns results in trial order.
    pub fn run<T, F>(&self, trials: usize, seed: u64, body: F) -> Result<Vec<T>>
    where
        T: Send,
        F: Fn(&Network, &InputPoint, usize) -> Result<T> + Sync,
    {
        self.run_per_net(trials, seed, |net, inputs, first| {
            inputs
                .iter()
                .enumerate()
                .map(|(i, x)| body(net, x, first + i))
                .collect()
        })
    }

    /// Like [`run`](Self::run) but hands each network all of its inputs at
    /// once, for bodies that batch work across inputs. `body` receives the
    /// index of the first trial and must return one result per input.
    pub fn run_per_net<T, F>(&self, trials: usize, seed: u64, body: F) -> Result<Vec<T>>
    where
        T: Send,
        F: Fn(&Network, &[InputPoint], usize) -> Result<Vec<T>> + Sync,
    {
        if trials == 0 {
            return Err(Error::InvalidTrials);
        }
        if self.inputs_per_net == 0 {
            return Err(Error::InvalidArgument("inputs_per_net must be at least 1".into()));
        }
        let per = self.inputs_per_net;
        let nets = trials.div_ceil(per);
        let chunks: Vec<Result<Vec<T>>> = (0..nets)
            .into_par_iter()
            .map(|n| {
                let net = Network::sample(self.depth, self.d, self.k, self.activation, Self::network_seed(seed, n))?;
                let first = n * per;
                let last = (first + per).min(trials);
                let inputs = (first..last)
                    .map(|t| sample_input(self.d, Self::input_seed(seed, t)))
                    .collect::<Result<Vec<_>>>()?;
                let out = body(&net, &inputs, first)?;
                if out.len() != inputs.len() {
                    return Err(Error::DimMismatch {
                        expected: inputs.len(),
                        got: out.len(),
                    });
                }
                Ok(out)
            })
            .collect();
        let mut out = Vec::with_capacity(trials);
        for c in chunks {
            out.extend(c?);
        }
        Ok(out)
    }
}
