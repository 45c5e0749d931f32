//! Seeded random instances: entries uniform in `[−1, 1]`, structures of the
//! form `Id + 0.3·S` with `S` random symmetric.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::fiber::{self, FiberMatrix};
use crate::fields::Mesh;
use crate::metric::darboux;

pub struct InstanceRng {
    rng: ChaCha8Rng,
}

impl InstanceRng {
    pub fn new(seed: u64) -> Self {
        InstanceRng {
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    /// Independent stream for a named sub-task, so suites do not perturb each other.
    pub fn derived(seed: u64, stream: &str) -> Self {
        let mut mix = seed ^ 0x9e37_79b9_7f4a_7c15;
        for byte in stream.bytes() {
            mix = (mix ^ u64::from(byte)).wrapping_mul(0x0100_0000_01b3);
        }
        Self::new(mix)
    }

    pub fn uniform(&mut self) -> f64 {
        self.rng.random_range(-1.0..=1.0)
    }

    pub fn range(&mut self, lo: f64, hi: f64) -> f64 {
        self.rng.random_range(lo..hi)
    }

    pub fn index(&mut self, n: usize) -> usize {
        self.rng.random_range(0..n)
    }

    pub fn matrix(&mut self, rows: usize, cols: usize) -> FiberMatrix {
        FiberMatrix::from_fn(rows, cols, |_, _| self.uniform())
    }

    pub fn symmetric(&mut self, n: usize) -> FiberMatrix {
        let a = self.matrix(n, n);
        (&a + a.transpose()) * 0.5
    }

    pub fn skew(&mut self, n: usize) -> FiberMatrix {
        let a = self.matrix(n, n);
        (&a - a.transpose()) * 0.5
    }

    /// `Id + 0.3·S`, redrawn until comfortably invertible.
    pub fn structure(&mut self, n: usize) -> FiberMatrix {
        loop {
            let b = FiberMatrix::identity(n, n) + self.symmetric(n) * 0.3;
            if b.determinant().abs() > 0.05 {
                return b;
            }
        }
    }

    /// `Id + 0.3·S`, redrawn until its smallest eigenvalue exceeds 0.1.
    pub fn riemannian(&mut self, n: usize) -> FiberMatrix {
        loop {
            let g = FiberMatrix::identity(n, n) + self.symmetric(n) * 0.3;
            if fiber::symmetric_eigenvalues(&g)[0] > 0.1 {
                return g;
            }
        }
    }

    /// Symmetric `D + 0.3·S` with `D` a diagonal of random signs.
    pub fn pseudo_riemannian(&mut self, n: usize) -> FiberMatrix {
        loop {
            let d = FiberMatrix::from_fn(n, n, |i, j| {
                if i == j {
                    if self.rng.random_bool(0.5) {
                        1.0
                    } else {
                        -1.0
                    }
                } else {
                    0.0
                }
            });
            let b = d + self.symmetric(n) * 0.3;
            let eigs = fiber::symmetric_eigenvalues(&b);
            if eigs.iter().all(|e| e.abs() > 0.1) {
                return b;
            }
        }
    }

    /// `J + 0.3·A` with `A` random skew (`n` even).
    pub fn symplectic(&mut self, n: usize) -> FiberMatrix {
        loop {
            let b = darboux(n) + self.skew(n) * 0.3;
            if b.determinant().abs() > 0.05 {
                return b;
            }
        }
    }

    pub fn mesh(&mut self, points: usize) -> Arc<Mesh> {
        let weights = (0..points).map(|_| self.range(0.5, 1.5)).collect();
        Arc::new(Mesh::new(weights).expect("positive weights"))
    }
}
