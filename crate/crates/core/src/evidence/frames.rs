//! Length-dependent video frame sampling.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Piecewise-linear frame budget: `k1` frames up to `m1` seconds, rising to
/// `k2` at `m2` and `k3` at `m3`, flat afterwards.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrameSamplingParams<S = f64> {
    pub k1: u32,
    pub k2: u32,
    pub k3: u32,
    pub m1: S,
    pub m2: S,
    pub m3: S,
}

impl<S: Scalar> Default for FrameSamplingParams<S> {
    fn default() -> Self {
        FrameSamplingParams {
            k1: 1,
            k2: 6,
            k3: 10,
            m1: S::from_usize(3),
            m2: S::from_usize(20),
            m3: S::from_usize(40),
        }
    }
}

impl<S: Scalar> FrameSamplingParams<S> {
    pub fn validate(&self) -> Result<()> {
        if !(self.k1 <= self.k2 && self.k2 <= self.k3) {
            return Err(Error::Config(format!(
                "frame counts must satisfy k1 <= k2 <= k3, got {}, {}, {}",
                self.k1, self.k2, self.k3
            )));
        }
        if !(S::zero() <= self.m1 && self.m1 < self.m2 && self.m2 < self.m3) {
            return Err(Error::Config(format!(
                "breakpoints must satisfy 0 <= m1 < m2 < m3, got {:?}, {:?}, {:?}",
                self.m1, self.m2, self.m3
            )));
        }
        Ok(())
    }

    fn k(&self, k: u32) -> S {
        S::from_usize(k as usize)
    }
}

/// Number of frames to sample from a clip of `duration` seconds.
pub fn frame_count<S: Scalar>(duration: S, p: &FrameSamplingParams<S>) -> Result<usize> {
    if duration < S::zero() {
        return Err(Error::Precondition(format!(
            "negative duration {duration:?}"
        )));
    }
    let n = if duration <= p.m1 {
        p.k1 as usize
    } else if duration <= p.m2 {
        // Numerator first keeps integer inputs exact in floating point.
        let rise = (duration - p.m1) * (p.k(p.k2) - p.k(p.k1)) / (p.m2 - p.m1);
        (p.k(p.k1) + rise).ceil_to_usize()
    } else if duration <= p.m3 {
        let rise = (duration - p.m2) * (p.k(p.k3) - p.k(p.k2)) / (p.m3 - p.m2);
        (p.k(p.k2) + rise).ceil_to_usize()
    } else {
        p.k3 as usize
    };
    Ok(n)
}

/// Centre-of-bucket timestamps `(i + 1/2) * duration / n` for `i < n`.
pub fn frame_timestamps<S: Scalar>(duration: S, p: &FrameSamplingParams<S>) -> Result<Vec<S>> {
    let n = frame_count(duration, p)?;
    let two = S::from_usize(2);
    let denom = two * S::from_usize(n);
    Ok((0..n)
        .map(|i| S::from_usize(2 * i + 1) * duration / denom)
        .collect())
}
