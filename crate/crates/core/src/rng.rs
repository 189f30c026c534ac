//! Seeded sampling used by data generation and property checks.
//!
//! The generator is SplitMix64. A uniform draw on `[lo, hi)` takes the top
//! 53 bits of the next output, `u = (next >> 11) * 2^-53`, and returns
//! `lo + (hi - lo) * u`. Both steps are integer/IEEE exact, so a seed yields
//! the same stream on every platform.

use nalgebra::DVector;
use rand_core::{RngCore, SeedableRng};
use rand_xoshiro::SplitMix64;

#[derive(Debug, Clone)]
pub struct SeededRng {
    inner: SplitMix64,
}

impl SeededRng {
    pub fn new(seed: u64) -> Self {
        Self {
            inner: SplitMix64::seed_from_u64(seed),
        }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    /// Uniform on `[0, 1)`.
    pub fn unit(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.unit()
    }

    pub fn uniform_vector(&mut self, n: usize, lo: f64, hi: f64) -> DVector<f64> {
        DVector::from_fn(n, |_, _| self.uniform(lo, hi))
    }

    /// Standard normal via Box-Muller.
    pub fn normal(&mut self) -> f64 {
        let u1 = 1.0 - self.unit();
        let u2 = self.unit();
        (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
    }

    /// Uniformly distributed direction on the unit sphere.
    pub fn unit_direction(&mut self, n: usize) -> DVector<f64> {
        loop {
            let v = DVector::from_fn(n, |_, _| self.normal());
            let norm = v.norm();
            if norm > 1e-12 {
                return v / norm;
            }
        }
    }
}
