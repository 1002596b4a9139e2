//! Deterministic parallel Monte Carlo.
//!
//! Replicates are grouped in fixed-size blocks. Block `j` of task `t` draws
//! from its own ChaCha8 stream `(t << 32) | j` under the user seed, blocks run
//! in parallel, and the per-block moments are merged in block order. Results
//! are therefore identical for any number of worker threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Replicates per random stream.
pub const BLOCK: usize = 1024;

/// A Monte-Carlo mean with its standard error and provenance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RiskEstimate {
    pub mean: f64,
    pub std_error: f64,
    pub replicates: usize,
    pub seed: u64,
}

impl RiskEstimate {
    /// `(mean - target) / std_error`; infinite when the standard error is zero
    /// and the mean is off target.
    pub fn z_score(&self, target: f64) -> f64 {
        let d = self.mean - target;
        if d == 0.0 {
            0.0
        } else {
            d / self.std_error
        }
    }

    /// Whether `target` lies within `k` standard errors of the mean.
    pub fn covers(&self, target: f64, k: f64) -> bool {
        self.z_score(target).abs() <= k
    }
}

/// Random stream for block `block` of task `task`.
pub fn block_rng(seed: u64, task: u32, block: u32) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream((u64::from(task) << 32) | u64::from(block));
    rng
}

/// Fills `out` with independent standard normal draws.
pub fn fill_normal<R: rand::Rng + ?Sized>(rng: &mut R, out: &mut [f64]) {
    for o in out {
        *o = StandardNormal.sample(rng);
    }
}

#[derive(Debug, Clone, Copy, Default)]
struct Moments {
    n: f64,
    mean: f64,
    m2: f64,
}

impl Moments {
    fn push(&mut self, x: f64) {
        self.n += 1.0;
        let d = x - self.mean;
        self.mean += d / self.n;
        self.m2 += d * (x - self.mean);
    }

    fn merge(&mut self, o: &Moments) {
        if o.n == 0.0 {
            return;
        }
        let n = self.n + o.n;
        let d = o.mean - self.mean;
        self.mean += d * o.n / n;
        self.m2 += o.m2 + d * d * self.n * o.n / n;
        self.n = n;
    }
}

/// Averages the `len`-vector written by `f` over `replicates` draws.
///
/// `f` receives a stream positioned for the current replicate and must fill
/// its output slice; any error or non-finite value aborts the run.
pub fn mc_vec<F>(replicates: usize, seed: u64, task: u32, len: usize, f: F) -> Result<Vec<RiskEstimate>>
where
    F: Fn(&mut ChaCha8Rng, &mut [f64]) -> Result<()> + Sync,
{
    if replicates == 0 {
        return Err(Error::InvalidParameter("replicates must be positive".into()));
    }
    let blocks = replicates.div_ceil(BLOCK);
    if blocks > u32::MAX as usize {
        return Err(Error::InvalidParameter("too many replicates".into()));
    }
    let partial: Vec<Vec<Moments>> = (0..blocks)
        .into_par_iter()
        .map(|b| {
            let mut rng = block_rng(seed, task, b as u32);
            let n = BLOCK.min(replicates - b * BLOCK);
            let mut acc = vec![Moments::default(); len];
            let mut out = vec![0.0; len];
            for _ in 0..n {
                f(&mut rng, &mut out)?;
                for (a, o) in acc.iter_mut().zip(&out) {
                    if !o.is_finite() {
                        return Err(Error::NonFinite("Monte-Carlo replicate".into()));
                    }
                    a.push(*o);
                }
            }
            Ok(acc)
        })
        .collect::<Result<_>>()?;
    let mut total = vec![Moments::default(); len];
    for block in &partial {
        for (t, m) in total.iter_mut().zip(block) {
            t.merge(m);
        }
    }
    Ok(total
        .iter()
        .map(|m| {
            let var = if m.n > 1.0 { m.m2 / (m.n - 1.0) } else { 0.0 };
            RiskEstimate {
                mean: m.mean,
                std_error: (var / m.n).sqrt(),
                replicates,
                seed,
            }
        })
        .collect())
}

/// Scalar form of [`mc_vec`].
pub fn mc_scalar<F>(replicates: usize, seed: u64, task: u32, f: F) -> Result<RiskEstimate>
where
    F: Fn(&mut ChaCha8Rng) -> Result<f64> + Sync,
{
    let v = mc_vec(replicates, seed, task, 1, |rng, out| {
        out[0] = f(rng)?;
        Ok(())
    })?;
    Ok(v[0])
}
