//! Deterministic low-discrepancy sampling of point pairs.
//!
//! Inequality checks stress both the x ≈ y and x ≪ y regimes, so pairs are
//! drawn log-uniformly in each coordinate from an additive-recurrence (R2)
//! sequence with a seed-derived offset. Ray families (y = kx) can be appended
//! because the bounding proofs stress those lines.

use serde::{Deserialize, Serialize};

// Plastic-constant recurrence: phi2 is the real root of t^3 = t + 1.
const ALPHA1: f64 = 0.754_877_666_246_692_8;
const ALPHA2: f64 = 0.569_840_290_998_053_2;

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn unit(v: u64) -> f64 {
    (v >> 11) as f64 / (1u64 << 53) as f64
}

/// Descriptor of a sampled box, stored in reports so a verdict can be
/// reproduced exactly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleDescriptor {
    pub lo: f64,
    pub hi: f64,
    pub count: usize,
    pub seed: u64,
    pub rays: bool,
}

/// Log-uniform low-discrepancy pair sampler on `(lo, hi]^2`.
#[derive(Debug, Clone)]
pub struct PairSampler {
    lo: f64,
    hi: f64,
    count: usize,
    seed: u64,
    rays: bool,
}

impl PairSampler {
    /// Default slope set for the appended rays, including the diagonal.
    pub const RAY_SLOPES: [f64; 4] = [1.0, 2.0, 10.0, 100.0];

    pub fn new(lo: f64, hi: f64, count: usize, seed: u64) -> Self {
        assert!(lo > 0.0 && hi > lo, "sampler box must satisfy 0 < lo < hi");
        Self { lo, hi, count, seed, rays: false }
    }

    /// Append log-spaced points along y = kx for k in [`Self::RAY_SLOPES`].
    pub fn with_rays(mut self) -> Self {
        self.rays = true;
        self
    }

    /// Same sampler on a box scaled by `factor` in both coordinates.
    pub fn scaled(&self, factor: f64) -> Self {
        Self { hi: self.hi * factor, ..self.clone() }
    }

    pub fn descriptor(&self) -> SampleDescriptor {
        SampleDescriptor {
            lo: self.lo,
            hi: self.hi,
            count: self.count,
            seed: self.seed,
            rays: self.rays,
        }
    }

    pub fn pairs(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        let mut state = self.seed;
        let u0 = unit(splitmix64(&mut state));
        let v0 = unit(splitmix64(&mut state));
        let ratio = self.hi / self.lo;
        let lo = self.lo;
        let box_points = (0..self.count).map(move |k| {
            let u = (u0 + ALPHA1 * k as f64).fract();
            let v = (v0 + ALPHA2 * k as f64).fract();
            (lo * ratio.powf(u), lo * ratio.powf(v))
        });
        let ray_count = if self.rays { self.count / 100 + 2 } else { 0 };
        let hi = self.hi;
        let ray_points = Self::RAY_SLOPES.into_iter().flat_map(move |k| {
            // keep y = kx inside the box: x up to hi / k; endpoints included
            // because the bounding arguments stress the corners
            let x_hi = hi / k.max(1.0);
            let r = x_hi / lo;
            let denom = (ray_count.max(2) - 1) as f64;
            (0..ray_count).map(move |i| {
                let u = i as f64 / denom;
                let x = lo * r.powf(u);
                (x, k * x)
            })
        });
        box_points.chain(ray_points)
    }
}
