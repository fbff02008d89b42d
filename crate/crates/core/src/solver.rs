//! Explicit finite-volume solver for the conservative variable g = x u.
//!
//! The update is g_i' = g_i - (dt / w_i) (J_{i+1/2} - J_{i-1/2}) with a
//! midpoint double-sum flux and partial-cell overlap at the inner boundary
//! of the tail integral. Interior fluxes telescope, so each accepted step
//! removes exactly dt * J_{n+1/2} of discrete mass.
//!
//! Steps that would drive a cell negative are rejected; the driver halves dt
//! and retries, failing with a stiffness error once dt underflows.

use crate::error::{Error, Result};
use crate::kernels::KernelSpec;
use crate::mesh::{self, InitialCondition, Mesh};
use crate::moments::MomentSeries;
use crate::weights::{self, WeightSpec};

/// Max relative change per adaptive step.
const ADAPTIVE_REL_CHANGE: f64 = 0.1;
/// dt underflow guard, relative to the horizon.
const DT_FLOOR_FACTOR: f64 = 1e-14;

/// Cell averages of g = x u at one time instant.
#[derive(Debug, Clone, PartialEq)]
pub struct State {
    pub t: f64,
    pub g: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TimeGrid {
    /// dt = T / steps, with rejection-halving inside each grid interval.
    Fixed { steps: usize },
    /// Rate-limited steps with rejection-halving.
    Adaptive,
}

/// Everything a single run needs, already resolved.
#[derive(Debug, Clone)]
pub struct RunSetup {
    pub mesh: Mesh,
    pub kernel: KernelSpec,
    pub weights: Vec<WeightSpec>,
    pub initial: InitialCondition,
    pub t_end: f64,
    pub grid: TimeGrid,
    /// Record every `cadence`-th grid interval (fixed) or accepted step
    /// (adaptive).
    pub cadence: usize,
    pub snapshot_times: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct RunStats {
    pub accepted: usize,
    pub rejected: usize,
    /// max over accepted steps of |dM1 + dt J_boundary|
    pub max_mass_defect: f64,
    pub m1_initial: f64,
}

/// Sampled run output: states and moment series share the same time axis.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub mesh: Mesh,
    pub kernel_label: String,
    pub weight_labels: Vec<String>,
    pub times: Vec<f64>,
    pub m0: Vec<f64>,
    pub m1: Vec<f64>,
    /// One series per configured weight, indexed like `weight_labels`.
    pub mb: Vec<Vec<f64>>,
    pub boundary_flux: Vec<f64>,
    pub states: Vec<State>,
    pub snapshots: Vec<State>,
    pub stats: RunStats,
}

impl Trajectory {
    pub fn m1_series(&self) -> MomentSeries {
        MomentSeries {
            label: "x".into(),
            r: self.mesh.r,
            samples: self.times.iter().copied().zip(self.m1.iter().copied()).collect(),
        }
    }

    pub fn m0_series(&self) -> MomentSeries {
        MomentSeries {
            label: "one".into(),
            r: self.mesh.r,
            samples: self.times.iter().copied().zip(self.m0.iter().copied()).collect(),
        }
    }

    pub fn mb_series(&self, label: &str) -> Option<MomentSeries> {
        let idx = self.weight_labels.iter().position(|l| l == label)?;
        Some(MomentSeries {
            label: label.to_string(),
            r: self.mesh.r,
            samples: self.times.iter().copied().zip(self.mb[idx].iter().copied()).collect(),
        })
    }
}

/// Precomputed kernel table and partial-cell geometry for one (mesh, kernel)
/// pair. Immutable after construction; evaluation is pure.
pub struct Solver<'a> {
    mesh: &'a Mesh,
    /// K(mid_j, mid_q), row-major n x n.
    kmat: Vec<f64>,
    /// For edge i >= 1 and row j < i: index of the cell containing
    /// edges[i] - mid[j] ...
    tri_cell: Vec<u32>,
    /// ... and its tail overlap edges[c+1] - (edges[i] - mid[j]).
    tri_coef: Vec<f64>,
}

/// Reusable per-step buffers.
pub struct FluxScratch {
    u: Vec<f64>,
    /// suffix sums per row: tail[j][q] = sum_{q' >= q} w u K, n x (n+1)
    tail: Vec<f64>,
}

impl FluxScratch {
    pub fn new(n: usize) -> Self {
        Self { u: vec![0.0; n], tail: vec![0.0; n * (n + 1)] }
    }
}

#[inline]
fn tri_index(i: usize, j: usize) -> usize {
    i * (i - 1) / 2 + j
}

impl<'a> Solver<'a> {
    pub fn new(mesh: &'a Mesh, kernel: &KernelSpec) -> Result<Self> {
        let n = mesh.n;
        let mut kmat = vec![0.0; n * n];
        for j in 0..n {
            for q in j..n {
                let v = kernel.eval(mesh.midpoints[j], mesh.midpoints[q])?;
                kmat[j * n + q] = v;
                kmat[q * n + j] = v;
            }
        }
        let mut tri_cell = Vec::with_capacity(n * (n + 1) / 2);
        let mut tri_coef = Vec::with_capacity(n * (n + 1) / 2);
        for i in 1..=n {
            for j in 0..i {
                // 0 < Y < R because mid[j] < edges[i] <= R
                let y = mesh.edges[i] - mesh.midpoints[j];
                let c = mesh.cell_of(y);
                tri_cell.push(c as u32);
                tri_coef.push(mesh.edges[c + 1] - y);
            }
        }
        Ok(Self { mesh, kmat, tri_cell, tri_coef })
    }

    pub fn mesh(&self) -> &Mesh {
        self.mesh
    }

    /// Edge fluxes J_{i-1/2} for all n+1 edges; `out[0] = 0` by definition.
    pub fn fluxes(&self, g: &[f64], scratch: &mut FluxScratch, out: &mut [f64]) {
        let n = self.mesh.n;
        debug_assert_eq!(g.len(), n);
        debug_assert_eq!(out.len(), n + 1);
        for q in 0..n {
            scratch.u[q] = g[q] / self.mesh.midpoints[q];
        }
        for j in 0..n {
            let krow = &self.kmat[j * n..(j + 1) * n];
            let trow = &mut scratch.tail[j * (n + 1)..(j + 1) * (n + 1)];
            trow[n] = 0.0;
            for q in (0..n).rev() {
                trow[q] = trow[q + 1] + self.mesh.widths[q] * scratch.u[q] * krow[q];
            }
        }
        out[0] = 0.0;
        for i in 1..=n {
            let base = tri_index(i, 0);
            let mut acc = 0.0;
            for j in 0..i {
                let c = self.tri_cell[base + j] as usize;
                let tail = scratch.tail[j * (n + 1) + c + 1]
                    + self.tri_coef[base + j] * scratch.u[c] * self.kmat[j * n + c];
                acc += self.mesh.widths[j] * g[j] * tail;
            }
            out[i] = acc;
        }
    }

    pub fn fluxes_vec(&self, g: &[f64]) -> Vec<f64> {
        let mut scratch = FluxScratch::new(self.mesh.n);
        let mut out = vec![0.0; self.mesh.n + 1];
        self.fluxes(g, &mut scratch, &mut out);
        out
    }

    /// Conservative update for precomputed fluxes. Fails without touching
    /// the state if any cell would go negative.
    fn advance(&self, g: &[f64], j_edges: &[f64], dt: f64) -> Result<Vec<f64>> {
        let mut out = Vec::with_capacity(g.len());
        for (i, &gi) in g.iter().enumerate() {
            let v = gi - dt * (j_edges[i + 1] - j_edges[i]) / self.mesh.widths[i];
            if v < 0.0 {
                return Err(Error::StepRejected { cell: i, value: v });
            }
            out.push(v);
        }
        Ok(out)
    }

    /// One explicit step of size dt.
    pub fn step(&self, state: &State, dt: f64) -> Result<State> {
        if !(dt > 0.0) {
            return Err(Error::InvalidParameters(format!("step needs dt > 0, got {dt}")));
        }
        let j_edges = self.fluxes_vec(&state.g);
        Ok(State { t: state.t + dt, g: self.advance(&state.g, &j_edges, dt)? })
    }
}

struct Recorder<'a> {
    setup: &'a RunSetup,
    wb: Vec<Vec<f64>>,
    traj: Trajectory,
    pending_snapshots: Vec<f64>,
}

impl<'a> Recorder<'a> {
    fn new(setup: &'a RunSetup) -> Result<Self> {
        let mesh = &setup.mesh;
        // per-weight coefficient w_i b(m_i) / m_i so M^b is a dot product
        let mut wb = Vec::new();
        for b in &setup.weights {
            let mut coeffs = Vec::with_capacity(mesh.n);
            for i in 0..mesh.n {
                coeffs.push(
                    mesh.widths[i] * weights::eval_weight(b, mesh.midpoints[i])?
                        / mesh.midpoints[i],
                );
            }
            wb.push(coeffs);
        }
        let mut pending: Vec<f64> = setup.snapshot_times.clone();
        pending.sort_by(|a, b| a.partial_cmp(b).unwrap());
        pending.reverse(); // pop from the back in ascending order
        Ok(Self {
            setup,
            wb,
            traj: Trajectory {
                mesh: mesh.clone(),
                kernel_label: setup.kernel.label.clone(),
                weight_labels: setup.weights.iter().map(|w| w.label.clone()).collect(),
                times: Vec::new(),
                m0: Vec::new(),
                m1: Vec::new(),
                mb: vec![Vec::new(); setup.weights.len()],
                boundary_flux: Vec::new(),
                states: Vec::new(),
                snapshots: Vec::new(),
                stats: RunStats {
                    accepted: 0,
                    rejected: 0,
                    max_mass_defect: 0.0,
                    m1_initial: 0.0,
                },
            },
            pending_snapshots: pending,
        })
    }

    fn sample(&mut self, state: &State, mass: f64, boundary: f64) {
        let mesh = &self.setup.mesh;
        let m0: f64 =
            (0..mesh.n).map(|i| mesh.widths[i] * state.g[i] / mesh.midpoints[i]).sum();
        self.traj.times.push(state.t);
        self.traj.m0.push(m0);
        self.traj.m1.push(mass);
        for (series, coeffs) in self.traj.mb.iter_mut().zip(&self.wb) {
            series.push(coeffs.iter().zip(&state.g).map(|(c, g)| c * g).sum());
        }
        self.traj.boundary_flux.push(boundary);
        self.traj.states.push(state.clone());
    }

    fn snapshot_if_due(&mut self, state: &State) {
        while let Some(&ts) = self.pending_snapshots.last() {
            if state.t + 1e-12 * self.setup.t_end >= ts {
                self.traj.snapshots.push(state.clone());
                self.pending_snapshots.pop();
            } else {
                break;
            }
        }
    }
}

/// Run a full simulation over [0, T].
pub fn run(setup: &RunSetup) -> Result<Trajectory> {
    if !(setup.t_end > 0.0) {
        return Err(Error::InvalidParameters(format!(
            "run needs T > 0, got {}",
            setup.t_end
        )));
    }
    if setup.cadence == 0 {
        return Err(Error::InvalidParameters("cadence must be >= 1".into()));
    }
    let mesh = &setup.mesh;
    let solver = Solver::new(mesh, &setup.kernel)?;
    let mut state = mesh::project_initial(&setup.initial, mesh)?;
    let mut scratch = FluxScratch::new(mesh.n);
    let mut j_edges = vec![0.0; mesh.n + 1];
    let dt_floor = DT_FLOOR_FACTOR * setup.t_end;

    let mut rec = Recorder::new(setup)?;
    let mut mass = mesh.discrete_mass(&state.g);
    rec.traj.stats.m1_initial = mass;
    solver.fluxes(&state.g, &mut scratch, &mut j_edges);
    rec.sample(&state, mass, j_edges[mesh.n]);
    rec.snapshot_if_due(&state);

    // one accepted sub-step with the fluxes already in j_edges
    let take_step = |state: &mut State,
                         mass: &mut f64,
                         rec: &mut Recorder,
                         solver: &Solver,
                         j_edges: &[f64],
                         dt_cap: f64|
     -> Result<f64> {
        let mut dt = dt_cap;
        loop {
            match solver.advance(&state.g, j_edges, dt) {
                Ok(g_next) => {
                    let boundary = j_edges[mesh.n];
                    let mass_next = mesh.discrete_mass(&g_next);
                    let defect = (mass_next - *mass + dt * boundary).abs();
                    rec.traj.stats.max_mass_defect = rec.traj.stats.max_mass_defect.max(defect);
                    rec.traj.stats.accepted += 1;
                    state.g = g_next;
                    state.t += dt;
                    *mass = mass_next;
                    return Ok(dt);
                }
                Err(Error::StepRejected { .. }) => {
                    rec.traj.stats.rejected += 1;
                    dt *= 0.5;
                    if dt < dt_floor {
                        return Err(Error::StiffnessFailure { dt, floor: dt_floor, t: state.t });
                    }
                }
                Err(e) => return Err(e),
            }
        }
    };

    match setup.grid {
        TimeGrid::Fixed { steps } => {
            if steps == 0 {
                return Err(Error::InvalidParameters("fixed grid needs steps >= 1".into()));
            }
            let big_dt = setup.t_end / steps as f64;
            for k in 1..=steps {
                let target = if k == steps { setup.t_end } else { k as f64 * big_dt };
                while state.t < target {
                    solver.fluxes(&state.g, &mut scratch, &mut j_edges);
                    let dt_cap = target - state.t;
                    take_step(&mut state, &mut mass, &mut rec, &solver, &j_edges, dt_cap)?;
                    rec.snapshot_if_due(&state);
                }
                state.t = target; // keep the grid exact against drift
                if k % setup.cadence == 0 || k == steps {
                    solver.fluxes(&state.g, &mut scratch, &mut j_edges);
                    rec.sample(&state, mass, j_edges[mesh.n]);
                }
            }
        }
        TimeGrid::Adaptive => {
            let mut dt_prev = setup.t_end / 1000.0;
            let mut accepted = 0usize;
            while state.t < setup.t_end * (1.0 - 1e-15) {
                solver.fluxes(&state.g, &mut scratch, &mut j_edges);
                // rate-limit: at most ADAPTIVE_REL_CHANGE relative change
                let gmax = state.g.iter().cloned().fold(0.0, f64::max);
                let mut dt_cap = setup.t_end - state.t;
                if gmax > 0.0 {
                    let floor_scale = 1e-9 * gmax;
                    let mut max_rel: f64 = 0.0;
                    for i in 0..mesh.n {
                        let rate =
                            (j_edges[i + 1] - j_edges[i]).abs() / mesh.widths[i];
                        max_rel = max_rel.max(rate / state.g[i].max(floor_scale));
                    }
                    if max_rel > 0.0 {
                        dt_cap = dt_cap.min(ADAPTIVE_REL_CHANGE / max_rel);
                    }
                }
                dt_cap = dt_cap.min(2.0 * dt_prev);
                if dt_cap < dt_floor {
                    return Err(Error::StiffnessFailure {
                        dt: dt_cap,
                        floor: dt_floor,
                        t: state.t,
                    });
                }
                dt_prev = take_step(&mut state, &mut mass, &mut rec, &solver, &j_edges, dt_cap)?;
                accepted += 1;
                rec.snapshot_if_due(&state);
                if accepted % setup.cadence == 0 || state.t >= setup.t_end * (1.0 - 1e-15) {
                    solver.fluxes(&state.g, &mut scratch, &mut j_edges);
                    rec.sample(&state, mass, j_edges[mesh.n]);
                }
            }
        }
    }

    Ok(rec.traj)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::build_mesh;
    use approx::assert_relative_eq;

    fn exp_setup(kernel: KernelSpec, r: f64, n: usize, t_end: f64, steps: usize) -> RunSetup {
        RunSetup {
            mesh: build_mesh(r, n, 3.0).unwrap(),
            kernel,
            weights: vec![WeightSpec::one(), WeightSpec::power(0.5).unwrap()],
            initial: InitialCondition::ExpDecay,
            t_end,
            grid: TimeGrid::Fixed { steps },
            cadence: 1,
            snapshot_times: vec![],
        }
    }

    #[test]
    fn flux_at_origin_edge_is_zero() {
        let mesh = build_mesh(10.0, 16, 3.0).unwrap();
        let solver = Solver::new(&mesh, &KernelSpec::product()).unwrap();
        let state = mesh::project_initial(&InitialCondition::ExpDecay, &mesh).unwrap();
        let j = solver.fluxes_vec(&state.g);
        assert_eq!(j[0], 0.0);
        assert!(j.iter().all(|&v| v >= 0.0));
    }

    #[test]
    fn zero_state_has_zero_flux() {
        let mesh = build_mesh(10.0, 16, 3.0).unwrap();
        let solver = Solver::new(&mesh, &KernelSpec::product_plus_sum()).unwrap();
        let j = solver.fluxes_vec(&vec![0.0; 16]);
        assert!(j.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn single_cell_boundary_flux_hand_value() {
        // uniform single cell [0, 2]: mid = 1, width = 2, g = 3, K = 1.
        // Tail threshold at the far edge is R - mid = 1, the cell straddles
        // it with overlap edges[1] - 1 = 1, so
        // J = (w g) * overlap * (g / mid) * K = 6 * 1 * 3 * 1 = 18.
        let mesh = build_mesh(2.0, 1, 1.0).unwrap();
        let solver = Solver::new(&mesh, &KernelSpec::constant(1.0).unwrap()).unwrap();
        let j = solver.fluxes_vec(&[3.0]);
        assert_relative_eq!(j[1], 18.0, max_relative = 1e-14);
    }

    #[test]
    fn zero_kernel_step_is_identity() {
        let mesh = build_mesh(10.0, 32, 3.0).unwrap();
        let solver = Solver::new(&mesh, &KernelSpec::constant(0.0).unwrap()).unwrap();
        let state = mesh::project_initial(&InitialCondition::ExpDecay, &mesh).unwrap();
        let next = solver.step(&state, 0.5).unwrap();
        assert_eq!(next.g, state.g);
        assert_relative_eq!(next.t, 0.5);
    }

    #[test]
    fn zero_state_stays_zero() {
        let mesh = build_mesh(10.0, 32, 3.0).unwrap();
        let solver = Solver::new(&mesh, &KernelSpec::product()).unwrap();
        let state = State { t: 0.0, g: vec![0.0; 32] };
        let next = solver.step(&state, 0.5).unwrap();
        assert!(next.g.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn step_mass_drops_by_boundary_flux_exactly() {
        let mesh = build_mesh(20.0, 64, 3.0).unwrap();
        let solver = Solver::new(&mesh, &KernelSpec::product_plus_sum()).unwrap();
        let state = mesh::project_initial(&InitialCondition::ExpDecay, &mesh).unwrap();
        let j = solver.fluxes_vec(&state.g);
        let dt = 1e-3;
        let next = solver.step(&state, dt).unwrap();
        let dm = mesh.discrete_mass(&next.g) - mesh.discrete_mass(&state.g);
        assert!(
            (dm + dt * j[64]).abs() <= 1e-12 * mesh.discrete_mass(&state.g),
            "defect = {:e}",
            (dm + dt * j[64]).abs()
        );
    }

    #[test]
    fn oversized_step_is_rejected() {
        let mesh = build_mesh(50.0, 64, 3.0).unwrap();
        let solver = Solver::new(&mesh, &KernelSpec::product()).unwrap();
        let state = mesh::project_initial(&InitialCondition::ExpDecay, &mesh).unwrap();
        assert!(matches!(
            solver.step(&state, 1e3),
            Err(Error::StepRejected { .. })
        ));
    }

    #[test]
    fn zero_kernel_run_conserves_mass_to_rounding() {
        let setup = exp_setup(KernelSpec::constant(0.0).unwrap(), 50.0, 64, 3.0, 100);
        let traj = run(&setup).unwrap();
        let m10 = traj.m1[0];
        for &m in &traj.m1 {
            assert!((m - m10).abs() <= 1e-14 * m10);
        }
        assert_eq!(traj.stats.rejected, 0);
    }

    #[test]
    fn run_records_positive_states_and_monotone_mass() {
        let setup = exp_setup(KernelSpec::product_plus_sum(), 50.0, 128, 2.0, 200);
        let traj = run(&setup).unwrap();
        assert!(traj.times.windows(2).all(|w| w[1] > w[0]));
        for s in &traj.states {
            assert!(s.g.iter().all(|&v| v >= 0.0));
        }
        for w in traj.m1.windows(2) {
            assert!(w[1] <= w[0] + 1e-12 * traj.stats.m1_initial);
        }
        assert!(traj.boundary_flux.iter().all(|&v| v >= 0.0));
        assert!(traj.stats.max_mass_defect <= 1e-12 * traj.stats.m1_initial);
    }

    #[test]
    fn constant_kernel_m0_follows_riccati_decay() {
        // K = 2, u0 = e^-x: M0' = -M0^2, so M0(t) = 1/(1+t)
        let setup = exp_setup(KernelSpec::constant(2.0).unwrap(), 200.0, 500, 3.0, 3000);
        let traj = run(&setup).unwrap();
        for (t, m0) in traj.times.iter().zip(&traj.m0) {
            let exact = 1.0 / (1.0 + t);
            assert!(
                (m0 - exact).abs() <= 0.01 * exact,
                "t = {t}: m0 = {m0}, exact = {exact}"
            );
        }
    }

    #[test]
    fn adaptive_grid_reaches_horizon() {
        let mut setup = exp_setup(KernelSpec::product_plus_sum(), 50.0, 64, 1.5, 0);
        setup.grid = TimeGrid::Adaptive;
        setup.cadence = 5;
        let traj = run(&setup).unwrap();
        let t_last = *traj.times.last().unwrap();
        assert_relative_eq!(t_last, 1.5, max_relative = 1e-12);
        assert!(traj.stats.max_mass_defect <= 1e-12 * traj.stats.m1_initial);
    }

    #[test]
    fn snapshots_capture_requested_times() {
        let mut setup = exp_setup(KernelSpec::constant(2.0).unwrap(), 50.0, 64, 2.0, 100);
        setup.snapshot_times = vec![0.0, 1.0, 2.0];
        let traj = run(&setup).unwrap();
        assert_eq!(traj.snapshots.len(), 3);
        assert_relative_eq!(traj.snapshots[0].t, 0.0);
        assert!((traj.snapshots[1].t - 1.0).abs() <= 0.021);
        assert_relative_eq!(traj.snapshots[2].t, 2.0, max_relative = 1e-12);
    }

    #[test]
    fn grid_convergence_in_cell_count() {
        // doubling n reduces the final-mass defect for a conserving kernel
        let kernel = KernelSpec::custom("(x*y)^0.5").unwrap();
        let defect = |n: usize| {
            let setup = exp_setup(kernel.clone(), 200.0, n, 3.0, 400);
            let traj = run(&setup).unwrap();
            traj.m1[0] - *traj.m1.last().unwrap()
        };
        let (d1, d2, d3) = (defect(125), defect(250), defect(500));
        assert!(d1 > d2 && d2 > d3, "defects: {d1:e}, {d2:e}, {d3:e}");
    }
}
