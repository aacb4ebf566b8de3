//! Counter-based random sampling: reproducible across platforms because
//! every draw is a pure function of (seed, counter). Standard normals come
//! from a Box-Muller transform over splitmix64 uniforms.

use crate::numerics::vector::Vector;

const GOLDEN: u64 = 0x9e3779b97f4a7c15;

/// splitmix64 finalizer; the whole generator is `mix(seed + i·GOLDEN)`.
#[inline]
pub fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(GOLDEN);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}

/// A stateless stream of u64s indexed by counter.
#[derive(Debug, Clone, Copy)]
pub struct CounterRng {
    seed: u64,
}

impl CounterRng {
    pub fn new(seed: u64) -> Self {
        CounterRng { seed }
    }

    /// Derive an independent substream.
    pub fn substream(&self, tag: u64) -> CounterRng {
        CounterRng {
            seed: mix(self.seed ^ mix(tag)),
        }
    }

    #[inline]
    pub fn u64_at(&self, counter: u64) -> u64 {
        mix(self.seed.wrapping_add(counter.wrapping_mul(GOLDEN)))
    }

    /// Uniform in (0, 1]: never exactly 0, so it is safe under a logarithm.
    #[inline]
    pub fn uniform_at(&self, counter: u64) -> f64 {
        (((self.u64_at(counter) >> 11) + 1) as f64) * (1.0 / 9007199254740992.0)
    }

    /// Uniform in [lo, hi).
    #[inline]
    pub fn uniform_in(&self, counter: u64, lo: f64, hi: f64) -> f64 {
        let u = ((self.u64_at(counter) >> 11) as f64) * (1.0 / 9007199254740992.0);
        lo + u * (hi - lo)
    }

    /// Uniform integer in [0, n).
    #[inline]
    pub fn index_at(&self, counter: u64, n: u64) -> u64 {
        // Modulo bias is negligible for the tiny n used here.
        self.u64_at(counter) % n
    }

    /// Standard normal via Box-Muller; counters 2k and 2k+1 feed draw k.
    #[inline]
    pub fn normal_at(&self, counter: u64) -> f64 {
        let u1 = self.uniform_at(2 * counter);
        let u2 = self.uniform_at(2 * counter + 1);
        (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
    }
}

/// Draws i.i.d. standard-normal probe directions; E[vvᵀ] = I. Direction i
/// is a pure function of (seed, i), so a fixed seed always reproduces the
/// same sequence.
#[derive(Debug, Clone, Copy)]
pub struct DirectionSampler {
    rng: CounterRng,
    pub dim: usize,
}

impl DirectionSampler {
    pub fn new(seed: u64, dim: usize) -> Self {
        DirectionSampler {
            rng: CounterRng::new(seed),
            dim,
        }
    }

    pub fn direction(&self, index: u64) -> Vector {
        let base = index * self.dim as u64;
        Vector::from_fn(self.dim, |j| self.rng.normal_at(base + j as u64))
    }

    pub fn directions(&self, start: u64, count: usize) -> Vec<Vector> {
        (0..count)
            .map(|i| self.direction(start + i as u64))
            .collect()
    }
}

/// Monte-Carlo estimate of the squared Frobenius norm of the Jacobian
/// behind `jvp_fn`: mean over directions of ||J·v||².
pub fn frobenius_sq_hutchinson<F>(jvp_fn: F, sampler: &DirectionSampler, n_dirs: usize) -> f64
where
    F: Fn(&Vector) -> Vector,
{
    assert!(n_dirs >= 1, "hutchinson needs at least one direction");
    let mut acc = 0.0;
    for i in 0..n_dirs {
        let v = sampler.direction(i as u64);
        acc += jvp_fn(&v).sq_norm();
    }
    acc / n_dirs as f64
}
