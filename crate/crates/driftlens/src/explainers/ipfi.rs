//! Incremental permutation feature importance over a stream.
//!
//! Replacement values come from a FIFO reservoir of recent samples; each
//! update compares the model's loss with and without one feature swapped.
//! With `gamma < 1` the accumulator is an exponential moving average, with
//! `gamma == 1` decay is disabled and it is the running mean, which makes
//! the time-averaged scores an unbiased estimate of batch PFI on a
//! stationary window.

use std::collections::VecDeque;

use rand_chacha::ChaCha8Rng;

use crate::error::{DriftError, Result};
use crate::models::TimeModel;
use crate::seed;

/// Target for one stream sample.
#[derive(Debug, Clone, Copy)]
pub enum IpfiTarget<'a> {
    /// Before/after label; loss is 0/1 misclassification.
    Label(u8),
    /// Embedded time target; loss is squared error.
    Moments(&'a [f64]),
}

/// Running state of the incremental importance estimator.
#[derive(Debug, Clone)]
pub struct IpfiState {
    capacity: usize,
    gamma: f64,
    reservoir: VecDeque<Vec<f64>>,
    /// Decayed (or running-mean) accumulator per feature.
    accumulators: Vec<f64>,
    /// Plain sum of loss differences over the whole stream.
    sums: Vec<f64>,
    updates: u64,
    rng: ChaCha8Rng,
}

impl IpfiState {
    pub fn new(n_features: usize, capacity: usize, gamma: f64, seed_value: u64) -> Result<Self> {
        if capacity == 0 {
            return Err(DriftError::InvalidConfig("capacity must be >= 1".into()));
        }
        if !(gamma > 0.0 && gamma <= 1.0) {
            return Err(DriftError::InvalidConfig("gamma must lie in (0, 1]".into()));
        }
        Ok(IpfiState {
            capacity,
            gamma,
            reservoir: VecDeque::with_capacity(capacity),
            accumulators: vec![0.0; n_features],
            sums: vec![0.0; n_features],
            updates: 0,
            rng: seed::rng_for(seed_value, seed::STREAM_IPFI),
        })
    }

    pub fn n_features(&self) -> usize {
        self.accumulators.len()
    }

    /// Decayed scores (running means when `gamma == 1`).
    pub fn scores(&self) -> &[f64] {
        &self.accumulators
    }

    /// Sum of loss differences over the entire stream.
    pub fn stream_sums(&self) -> &[f64] {
        &self.sums
    }

    pub fn updates(&self) -> u64 {
        self.updates
    }

    pub fn reservoir_len(&self) -> usize {
        self.reservoir.len()
    }

    fn loss(m: &TimeModel, x: &[f64], target: &IpfiTarget) -> Result<f64> {
        match target {
            IpfiTarget::Label(y) => {
                let predicted = u8::from(m.p_after(x)? >= 0.5);
                Ok(f64::from(predicted != *y))
            }
            IpfiTarget::Moments(t) => {
                let (_, pred) = m.predict_moments(x)?;
                Ok(pred
                    .iter()
                    .zip(t.iter())
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum())
            }
        }
    }

    /// Processes one sample. Returns `false` while the reservoir is still
    /// empty (warm-up: the sample is only stored, no importance update).
    pub fn update(&mut self, m: &TimeModel, x: &[f64], target: &IpfiTarget) -> Result<bool> {
        if x.len() != self.accumulators.len() {
            return Err(DriftError::DimensionMismatch {
                expected: self.accumulators.len(),
                got: x.len(),
            });
        }
        if self.reservoir.is_empty() {
            self.push(x);
            return Ok(false);
        }
        use rand::Rng;
        let true_loss = Self::loss(m, x, target)?;
        self.updates += 1;
        let mut swapped = x.to_vec();
        for j in 0..self.accumulators.len() {
            let pick = self.rng.random_range(0..self.reservoir.len());
            let replacement = self.reservoir[pick][j];
            let original = swapped[j];
            swapped[j] = replacement;
            let swapped_loss = Self::loss(m, &swapped, target)?;
            swapped[j] = original;
            let delta = swapped_loss - true_loss;
            self.sums[j] += delta;
            if self.gamma < 1.0 {
                self.accumulators[j] =
                    self.gamma * self.accumulators[j] + (1.0 - self.gamma) * delta;
            } else {
                let k = self.updates as f64;
                self.accumulators[j] += (delta - self.accumulators[j]) / k;
            }
        }
        self.push(x);
        Ok(true)
    }

    fn push(&mut self, x: &[f64]) {
        if self.reservoir.len() == self.capacity {
            self.reservoir.pop_front();
        }
        self.reservoir.push_back(x.to_vec());
    }

    /// Stores a sample without an importance update (warm-up before any
    /// model is available).
    pub fn feed_reservoir(&mut self, x: &[f64]) {
        self.push(x);
    }
}
