//! Truncated and generalized moments, the discrete collision operator, and
//! residual checks of the analytical moment identities on computed
//! trajectories.
//!
//! The flux here is a plain double sum sharing its overlap rules with the
//! solver's optimized path, so the two can cross-validate each other.

use crate::error::{Error, Result};
use crate::kernels::KernelSpec;
use crate::mesh::Mesh;
use crate::report::{ConditionId, ConditionReport, Verdict};
use crate::sampling::PairSampler;
use crate::solver::{State, Trajectory};
use crate::weights::{self, WeightSpec, WeightTag};

/// Per-step slack for monotonicity checks, relative to the initial value.
pub const MONOTONE_TOL: f64 = 1e-10;

/// Time series of one moment.
#[derive(Debug, Clone)]
pub struct MomentSeries {
    pub label: String,
    /// Truncation size (R for full-domain series).
    pub r: f64,
    pub samples: Vec<(f64, f64)>,
}

impl MomentSeries {
    pub fn first(&self) -> Option<(f64, f64)> {
        self.samples.first().copied()
    }
}

/// Exponential a-priori bound L(t) on a generalized moment.
#[derive(Debug, Clone)]
pub struct ConservationBound {
    pub mu0: f64,
    pub c2: f64,
    pub samples: Vec<(f64, f64)>,
}

pub fn conservation_bound(mb0: f64, mu0: f64, c2: f64, times: &[f64]) -> ConservationBound {
    ConservationBound {
        mu0,
        c2,
        samples: times.iter().map(|&t| (t, (mb0 + mu0) * (c2 * mu0 * t).exp())).collect(),
    }
}

/// Truncated generalized moment: sum over the overlap of each cell with
/// [0, r) of width * b(mid) * u. For b = x and r = R this telescopes to the
/// discrete mass.
pub fn truncated_moment(mesh: &Mesh, state: &State, b: &WeightSpec, r: f64) -> Result<f64> {
    if !(0.0..=mesh.r).contains(&r) {
        return Err(Error::InvalidParameters(format!(
            "truncation size must lie in [0, {}], got {r}",
            mesh.r
        )));
    }
    let mut acc = 0.0;
    for i in 0..mesh.n {
        let o = mesh.overlap_below(i, r);
        if o == 0.0 {
            break;
        }
        let m = mesh.midpoints[i];
        acc += o * (weights::eval_weight(b, m)? / m) * state.g[i];
    }
    Ok(acc)
}

/// Shared tail sum: sum over cells of overlap with [thr, R] of
/// width-clamped * u * K(mid_j, mid). Used by both the reference flux and
/// the boundary term of the truncated moment identity so the two agree.
fn tail_sum(mesh: &Mesh, u: &[f64], kernel: &KernelSpec, j: usize, thr: f64) -> Result<f64> {
    let mut acc = 0.0;
    let mj = mesh.midpoints[j];
    for q in 0..mesh.n {
        let o = mesh.overlap_above(q, thr);
        if o > 0.0 && u[q] > 0.0 {
            acc += o * u[q] * kernel.eval(mj, mesh.midpoints[q])?;
        }
    }
    Ok(acc)
}

fn number_density(mesh: &Mesh, state: &State) -> Vec<f64> {
    (0..mesh.n).map(|i| state.g[i] / mesh.midpoints[i]).collect()
}

/// Reference mass flux across size x: midpoint double sum with partial-cell
/// overlap on both the outer [0, x) range and the inner tail. J(0) = 0.
pub fn discrete_flux(mesh: &Mesh, state: &State, kernel: &KernelSpec, x: f64) -> Result<f64> {
    if !(0.0..=mesh.r).contains(&x) {
        return Err(Error::InvalidParameters(format!(
            "flux position must lie in [0, {}], got {x}",
            mesh.r
        )));
    }
    let u = number_density(mesh, state);
    let mut acc = 0.0;
    for j in 0..mesh.n {
        let o = mesh.overlap_below(j, x);
        if o == 0.0 {
            break;
        }
        if state.g[j] == 0.0 {
            continue;
        }
        acc += o * state.g[j] * tail_sum(mesh, &u, kernel, j, x - mesh.midpoints[j])?;
    }
    Ok(acc)
}

/// Discrete collision operator Q = Q1 - Q2 on every cell.
///
/// The loss term truncates its integral at R. The gain term spreads each
/// ordered pair's production uniformly over the summed-edges image interval,
/// weighting every receiving slice by centroid/midpoint so the mass ledger
/// of a retained pair cancels its loss exactly; production past R is
/// dropped. Hence sum_i w_i m_i Q_i <= 0 up to rounding.
pub fn eval_collision_all(mesh: &Mesh, state: &State, kernel: &KernelSpec) -> Result<Vec<f64>> {
    let n = mesh.n;
    let u = number_density(mesh, state);
    let mut q = vec![0.0; n];
    // loss
    for i in 0..n {
        if u[i] == 0.0 {
            continue;
        }
        let mut acc = 0.0;
        for j in 0..n {
            if u[j] > 0.0 {
                acc += mesh.widths[j] * u[j] * kernel.eval(mesh.midpoints[i], mesh.midpoints[j])?;
            }
        }
        q[i] -= u[i] * acc;
    }
    // gain
    for j in 0..n {
        if u[j] == 0.0 {
            continue;
        }
        for jp in 0..n {
            if u[jp] == 0.0 {
                continue;
            }
            let rate = 0.5
                * (mesh.widths[j] * u[j])
                * (mesh.widths[jp] * u[jp])
                * kernel.eval(mesh.midpoints[j], mesh.midpoints[jp])?;
            if rate == 0.0 {
                continue;
            }
            let lo = mesh.edges[j] + mesh.edges[jp];
            let hi = mesh.edges[j + 1] + mesh.edges[jp + 1];
            let width = hi - lo;
            if lo >= mesh.r {
                continue; // entire production leaves the domain
            }
            let clip_hi = hi.min(mesh.r);
            let mut c = mesh.cell_of(lo);
            while c < n {
                let seg_lo = lo.max(mesh.edges[c]);
                let seg_hi = clip_hi.min(mesh.edges[c + 1]);
                if seg_hi <= seg_lo {
                    break;
                }
                let frac = (seg_hi - seg_lo) / width;
                let centroid = 0.5 * (seg_lo + seg_hi);
                q[c] += rate * frac * (centroid / mesh.midpoints[c]) / mesh.widths[c];
                c += 1;
            }
        }
    }
    Ok(q)
}

/// Collision operator on a single cell (computes the full vector internally).
pub fn eval_collision(mesh: &Mesh, state: &State, kernel: &KernelSpec, i: usize) -> Result<f64> {
    if i >= mesh.n {
        return Err(Error::InvalidParameters(format!("cell index {i} out of range")));
    }
    Ok(eval_collision_all(mesh, state, kernel)?[i])
}

/// |J(x) + sum over [0, x) of width * mid * Q|: the flux identity residual,
/// vanishing under refinement.
pub fn flux_vs_collision_residual(
    mesh: &Mesh,
    state: &State,
    kernel: &KernelSpec,
    x: f64,
) -> Result<f64> {
    let j = discrete_flux(mesh, state, kernel, x)?;
    let q = eval_collision_all(mesh, state, kernel)?;
    let mut acc = 0.0;
    for i in 0..mesh.n {
        let o = mesh.overlap_below(i, x);
        if o == 0.0 {
            break;
        }
        acc += o * mesh.midpoints[i] * q[i];
    }
    Ok((j + acc).abs())
}

/// Right-hand side of the truncated generalized moment identity at one
/// state: pair term over the triangle {x in [0,r], y in [0, r-x]} minus the
/// escaping boundary term. Cells enter with overlap fractions; the y
/// threshold uses the x-cell midpoint.
pub fn tmi_rhs(
    mesh: &Mesh,
    state: &State,
    kernel: &KernelSpec,
    b: &WeightSpec,
    r: f64,
) -> Result<f64> {
    if !(0.0..=mesh.r).contains(&r) {
        return Err(Error::InvalidParameters(format!(
            "truncation size must lie in [0, {}], got {r}",
            mesh.r
        )));
    }
    let u = number_density(mesh, state);
    let n = mesh.n;
    let mut pair_term = 0.0;
    let mut boundary = 0.0;
    for j in 0..n {
        let oj = mesh.overlap_below(j, r);
        if oj == 0.0 {
            break;
        }
        if u[j] == 0.0 {
            continue;
        }
        let mj = mesh.midpoints[j];
        let bj = weights::eval_weight(b, mj)?;
        let thr = r - mj;
        for jp in 0..n {
            let ojp = mesh.overlap_below(jp, thr);
            if ojp == 0.0 {
                break;
            }
            if u[jp] == 0.0 {
                continue;
            }
            let mjp = mesh.midpoints[jp];
            let gap = weights::eval_weight(b, mj + mjp)? - bj - weights::eval_weight(b, mjp)?;
            pair_term += oj * ojp * gap * kernel.eval(mj, mjp)? * u[j] * u[jp];
        }
        boundary += oj * bj * u[j] * tail_sum(mesh, &u, kernel, j, thr)?;
    }
    Ok(0.5 * pair_term - boundary)
}

/// |central-difference d/dt m^b(r, .) - tmi_rhs| at the stored sample
/// nearest to t. Needs at least one stored sample on each side.
pub fn tmi_residual(
    traj: &Trajectory,
    kernel: &KernelSpec,
    b: &WeightSpec,
    r: f64,
    t: f64,
) -> Result<f64> {
    if traj.states.len() < 3 {
        return Err(Error::InsufficientSamples { t });
    }
    let k = traj
        .times
        .iter()
        .enumerate()
        .min_by(|(_, a), (_, b)| {
            (*a - t).abs().partial_cmp(&(*b - t).abs()).unwrap()
        })
        .map(|(i, _)| i)
        .unwrap();
    if k == 0 || k + 1 >= traj.states.len() {
        return Err(Error::InsufficientSamples { t });
    }
    let mesh = &traj.mesh;
    let prev = truncated_moment(mesh, &traj.states[k - 1], b, r)?;
    let next = truncated_moment(mesh, &traj.states[k + 1], b, r)?;
    let dt = traj.times[k + 1] - traj.times[k - 1];
    let derivative = (next - prev) / dt;
    let rhs = tmi_rhs(mesh, &traj.states[k], kernel, b, r)?;
    Ok((derivative - rhs).abs())
}

/// Nonincrease of the full-domain generalized moment for a nonnegative
/// subadditive weight, within a per-step rounding allowance.
pub fn check_monotone_subadditive(traj: &Trajectory, b: &WeightSpec) -> Result<ConditionReport> {
    if !b.claims(WeightTag::Nonnegative) || !b.claims(WeightTag::Subadditive) {
        return Err(Error::InvalidWeight {
            label: b.label.clone(),
            reason: "monotonicity check needs nonnegative + subadditive tags".into(),
        });
    }
    let sampler = PairSampler::new(1e-6, 1e3, 5_000, 0x5AD);
    let sub = weights::check_subadditive(b, &sampler, false)?;
    if sub.verdict != Verdict::HoldsOnSample {
        return Err(Error::InvalidWeight {
            label: b.label.clone(),
            reason: "claimed subadditivity fails on sample".into(),
        });
    }
    if traj.states.is_empty() {
        return Err(Error::EmptySeries);
    }
    let mesh = &traj.mesh;
    let values: Vec<f64> = traj
        .states
        .iter()
        .map(|s| truncated_moment(mesh, s, b, mesh.r))
        .collect::<Result<_>>()?;
    let tol = MONOTONE_TOL * values[0];
    let mut worst_rise = f64::NEG_INFINITY;
    let mut witness = (0.0, 0.0);
    for (w, ts) in values.windows(2).zip(traj.times.windows(2)) {
        let rise = w[1] - w[0];
        if rise > worst_rise {
            worst_rise = rise;
            witness = (ts[1], rise);
        }
    }
    let verdict = if worst_rise <= tol { Verdict::HoldsOnSample } else { Verdict::Violated };
    Ok(ConditionReport::new(ConditionId::Monotonicity, verdict)
        .with_constant("initial", values[0])
        .with_constant("max_rise", worst_rise)
        .with_witness(witness.0, witness.1, worst_rise)
        .with_note(format!("weight {}", b.label)))
}

/// M^b(t) <= (M^b(0) + mu0) e^{C2 mu0 t} with mu0 = M0(0) + M1(0).
pub fn check_l_bound(traj: &Trajectory, b: &WeightSpec, c2: f64) -> Result<ConditionReport> {
    if traj.states.is_empty() {
        return Err(Error::EmptySeries);
    }
    let mesh = &traj.mesh;
    let mu0 = traj.m0[0] + traj.m1[0];
    let mb0 = truncated_moment(mesh, &traj.states[0], b, mesh.r)?;
    let bound = conservation_bound(mb0, mu0, c2, &traj.times);
    let mut worst_margin = f64::INFINITY;
    let mut witness = (0.0, 0.0);
    for (s, &(t, l)) in traj.states.iter().zip(&bound.samples) {
        let v = truncated_moment(mesh, s, b, mesh.r)?;
        let margin = l * (1.0 + 1e-12) - v;
        if margin < worst_margin {
            worst_margin = margin;
            witness = (t, v);
        }
    }
    let verdict = if worst_margin >= 0.0 { Verdict::HoldsOnSample } else { Verdict::Violated };
    Ok(ConditionReport::new(ConditionId::LBound, verdict)
        .with_constant("C2", c2)
        .with_constant("mu0", mu0)
        .with_constant("Mb0", mb0)
        .with_witness(witness.0, witness.1, worst_margin)
        .with_note(format!("weight {}", b.label)))
}

/// M0 nonincreasing and decayed below theta * M0(0) by the end of the run.
/// Reports the empirical decay rate next to the slope scale of the
/// kernel-floor decay bound.
pub fn check_m0_decay(traj: &Trajectory, eps_floor: f64, theta: f64) -> Result<ConditionReport> {
    if traj.m0.is_empty() {
        return Err(Error::EmptySeries);
    }
    let m00 = traj.m0[0];
    let m0_end = *traj.m0.last().unwrap();
    let tol = MONOTONE_TOL * m00;
    let mut worst_rise = f64::NEG_INFINITY;
    let mut witness = (0.0, 0.0);
    for (w, ts) in traj.m0.windows(2).zip(traj.times.windows(2)) {
        let rise = w[1] - w[0];
        if rise > worst_rise {
            worst_rise = rise;
            witness = (ts[1], rise);
        }
    }
    let span = traj.times.last().unwrap() - traj.times[0];
    let fitted_rate = if span > 0.0 { (m00 - m0_end) / span } else { 0.0 };
    let reference_slope = 0.5 * eps_floor * (0.5 * m0_end).powi(2);
    let decayed = if m00 == 0.0 { true } else { m0_end <= theta * m00 };
    let verdict = if worst_rise <= tol && decayed {
        Verdict::HoldsOnSample
    } else {
        Verdict::Violated
    };
    Ok(ConditionReport::new(ConditionId::M0Decay, verdict)
        .with_constant("m0_initial", m00)
        .with_constant("m0_final", m0_end)
        .with_constant("fitted_rate", fitted_rate)
        .with_constant("floor_bound_slope", reference_slope)
        .with_witness(witness.0, witness.1, worst_rise)
        .with_note(format!("theta = {theta}, floor = {eps_floor}")))
}
