//! Finite-N stochastic coalescent used as an independent cross-check of the
//! deterministic solver.
//!
//! Each unordered pair (i, j) coalesces at rate K(x_i, x_j) / N0 (Gillespie
//! direct method). Per-particle row sums are maintained incrementally, so an
//! event costs O(N) kernel evaluations and O(N) memory; no N x N table is
//! stored. The largest-cluster mass fraction serves as the finite-N gel
//! proxy.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::kernels::KernelSpec;
use crate::mesh::InitialCondition;

#[derive(Debug, Clone)]
pub struct ParticleSystem {
    pub masses: Vec<f64>,
    pub n0: usize,
    pub t: f64,
    pub seed: u64,
}

/// Draw N0 i.i.d. masses from u0 / M0 by inverse transform. Only the
/// exponential initial condition has the required closed form.
pub fn init_system(u0: &InitialCondition, n0: usize, seed: u64) -> Result<ParticleSystem> {
    if n0 == 0 {
        return Err(Error::InvalidParameters("particle count must be >= 1".into()));
    }
    match u0 {
        InitialCondition::ExpDecay => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let masses = (0..n0).map(|_| -(1.0 - rng.gen::<f64>()).ln()).collect();
            Ok(ParticleSystem { masses, n0, t: 0.0, seed })
        }
        InitialCondition::Custom { expr } => Err(Error::InvalidSampler(format!(
            "no closed-form inverse for `{expr}`; only the exponential initial \
             condition can seed the coalescent"
        ))),
    }
}

#[derive(Debug, Clone, Copy)]
pub struct CoalescenceEvent {
    pub t: f64,
    pub a: f64,
    pub b: f64,
}

/// One trajectory: empirical moments sampled on a fixed grid plus the event
/// log. Series are normalized by N0 (Marcus-Lushnikov scaling).
#[derive(Debug, Clone)]
pub struct OracleRun {
    pub times: Vec<f64>,
    pub m0: Vec<f64>,
    /// Mass density excluding the largest cluster (the finite-N "sol" mass).
    pub m1_excl_largest: Vec<f64>,
    pub largest_fraction: Vec<f64>,
    pub events: Vec<CoalescenceEvent>,
    pub attained_t: f64,
    pub final_particles: usize,
}

/// Exact stochastic simulation up to t_end, recording at `sample_times`
/// (must be ascending).
pub fn simulate(
    sys: &ParticleSystem,
    kernel: &KernelSpec,
    t_end: f64,
    sample_times: &[f64],
) -> Result<OracleRun> {
    if sample_times.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidParameters("sample times must be strictly increasing".into()));
    }
    let n0 = sys.n0 as f64;
    let mut rng = ChaCha8Rng::seed_from_u64(sys.seed ^ 0x5EED_CAFE);
    let mut masses = sys.masses.clone();
    let mut t = sys.t;

    // conserved by merge arithmetic; used for the exclusion series
    let total_mass: f64 = masses.iter().sum();
    let mut largest = masses.iter().cloned().fold(0.0, f64::max);

    let mut rows: Vec<f64> = vec![0.0; masses.len()];
    for i in 0..masses.len() {
        let mut acc = 0.0;
        for j in 0..masses.len() {
            if j != i {
                acc += kernel.eval(masses[i], masses[j])?;
            }
        }
        rows[i] = acc / n0;
    }

    let mut out = OracleRun {
        times: Vec::with_capacity(sample_times.len()),
        m0: Vec::with_capacity(sample_times.len()),
        m1_excl_largest: Vec::with_capacity(sample_times.len()),
        largest_fraction: Vec::with_capacity(sample_times.len()),
        events: Vec::new(),
        attained_t: t,
        final_particles: masses.len(),
    };
    let mut next_sample = 0usize;
    let record = |ts: f64, n_particles: usize, largest: f64, out: &mut OracleRun| {
        out.times.push(ts);
        out.m0.push(n_particles as f64 / n0);
        out.m1_excl_largest.push((total_mass - largest) / n0);
        out.largest_fraction.push(if total_mass > 0.0 { largest / total_mass } else { 0.0 });
    };

    loop {
        let total_rate: f64 = 0.5 * rows.iter().sum::<f64>();
        if !total_rate.is_finite() {
            return Err(Error::RateOverflow { t });
        }
        if masses.len() <= 1 || total_rate <= 0.0 {
            break;
        }
        let tau = -(1.0 - rng.gen::<f64>()).ln() / total_rate;
        let t_next = t + tau;
        while next_sample < sample_times.len() && sample_times[next_sample] <= t_next.min(t_end) {
            record(sample_times[next_sample], masses.len(), largest, &mut out);
            next_sample += 1;
        }
        if t_next > t_end {
            t = t_end;
            break;
        }
        t = t_next;

        // first particle proportional to its row sum
        let target = rng.gen::<f64>() * rows.iter().sum::<f64>();
        let mut acc = 0.0;
        let mut i = masses.len() - 1;
        for (idx, r) in rows.iter().enumerate() {
            acc += r;
            if acc >= target {
                i = idx;
                break;
            }
        }
        // partner proportional to K(x_i, .)
        let target = rng.gen::<f64>() * rows[i] * n0;
        let mut acc = 0.0;
        let mut j = usize::MAX;
        for idx in 0..masses.len() {
            if idx == i {
                continue;
            }
            acc += kernel.eval(masses[i], masses[idx])?;
            if acc >= target {
                j = idx;
                break;
            }
        }
        if j == usize::MAX {
            j = if i == masses.len() - 1 { i - 1 } else { masses.len() - 1 };
        }

        let (xi, xj) = (masses[i], masses[j]);
        let z = xi + xj;
        out.events.push(CoalescenceEvent { t, a: xi, b: xj });
        largest = largest.max(z);

        // drop the higher index first so the lower stays valid
        let (hi, lo) = if i > j { (i, j) } else { (j, i) };
        masses.swap_remove(hi);
        rows.swap_remove(hi);
        masses.swap_remove(lo);
        rows.swap_remove(lo);

        let mut new_row = 0.0;
        for k in 0..masses.len() {
            let delta = kernel.eval(masses[k], z)?
                - kernel.eval(masses[k], xi)?
                - kernel.eval(masses[k], xj)?;
            rows[k] += delta / n0;
            new_row += kernel.eval(z, masses[k])?;
        }
        masses.push(z);
        rows.push(new_row / n0);
    }

    while next_sample < sample_times.len() {
        record(sample_times[next_sample], masses.len(), largest, &mut out);
        next_sample += 1;
    }
    out.attained_t = t;
    out.final_particles = masses.len();
    Ok(out)
}

/// Mean and standard error across replicates at each sample time.
#[derive(Debug, Clone)]
pub struct OracleEnsemble {
    pub times: Vec<f64>,
    pub mean_m0: Vec<f64>,
    pub se_m0: Vec<f64>,
    pub mean_m1_excl: Vec<f64>,
    pub se_m1_excl: Vec<f64>,
    pub mean_largest: Vec<f64>,
    pub se_largest: Vec<f64>,
    pub runs: Vec<OracleRun>,
}

fn mean_se(columns: impl Iterator<Item = f64> + Clone, n: usize) -> (f64, f64) {
    let nf = n as f64;
    let mean = columns.clone().sum::<f64>() / nf;
    if n < 2 {
        return (mean, 0.0);
    }
    let var = columns.map(|v| (v - mean) * (v - mean)).sum::<f64>() / (nf - 1.0);
    (mean, (var / nf).sqrt())
}

/// Run `replicates` independent trajectories (seeds base_seed, base_seed+1,
/// ...) in parallel and aggregate.
pub fn ensemble(
    u0: &InitialCondition,
    kernel: &KernelSpec,
    n0: usize,
    replicates: usize,
    base_seed: u64,
    t_end: f64,
    sample_times: &[f64],
) -> Result<OracleEnsemble> {
    if replicates == 0 {
        return Err(Error::InvalidParameters("need at least one replicate".into()));
    }
    let runs: Vec<OracleRun> = (0..replicates)
        .into_par_iter()
        .map(|rep| {
            let sys = init_system(u0, n0, base_seed + rep as u64)?;
            simulate(&sys, kernel, t_end, sample_times)
        })
        .collect::<Result<_>>()?;

    let mut out = OracleEnsemble {
        times: sample_times.to_vec(),
        mean_m0: Vec::new(),
        se_m0: Vec::new(),
        mean_m1_excl: Vec::new(),
        se_m1_excl: Vec::new(),
        mean_largest: Vec::new(),
        se_largest: Vec::new(),
        runs,
    };
    for s in 0..sample_times.len() {
        let (m, se) = mean_se(out.runs.iter().map(|r| r.m0[s]), replicates);
        out.mean_m0.push(m);
        out.se_m0.push(se);
        let (m, se) = mean_se(out.runs.iter().map(|r| r.m1_excl_largest[s]), replicates);
        out.mean_m1_excl.push(m);
        out.se_m1_excl.push(se);
        let (m, se) = mean_se(out.runs.iter().map(|r| r.largest_fraction[s]), replicates);
        out.mean_largest.push(m);
        out.se_largest.push(se);
    }
    Ok(out)
}
