use coagsim_core::kernels::KernelSpec;
use coagsim_core::mesh::{build_mesh, InitialCondition};
use coagsim_core::solver::{run, RunSetup, TimeGrid};
use coagsim_core::weights::WeightSpec;

fn main() {
    for r in [200.0f64, 400.0, 1000.0] {
        for n in [125usize, 250, 500, 1000] {
            let setup = RunSetup {
                mesh: build_mesh(r, n, 3.0).unwrap(),
                kernel: KernelSpec::custom("(x*y)^0.5").unwrap(),
                weights: vec![WeightSpec::one()],
                initial: InitialCondition::ExpDecay,
                t_end: 3.0,
                grid: TimeGrid::Fixed { steps: 400 },
                cadence: 400,
                snapshot_times: vec![],
            };
            let traj = run(&setup).unwrap();
            let defect = traj.m1[0] - traj.m1.last().unwrap();
            println!("R={r:7} n={n:5} defect={defect:.6e}");
        }
    }
}
