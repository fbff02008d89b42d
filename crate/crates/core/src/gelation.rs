//! Gelation detection on total-mass series, domain-size sweeps, and the
//! analytic gel-time bound.
//!
//! Any finite domain leaks some mass through its far edge, so a single run
//! cannot distinguish gelation from truncation. The sweep re-runs the same
//! physics at growing R and only trusts an onset that stops moving.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mesh::build_mesh;
use crate::moments::MomentSeries;
use crate::solver::{run, RunSetup};

/// Default mass-loss fraction treated as onset.
pub const DEFAULT_THETA: f64 = 0.01;
/// Default number of consecutive samples required below the threshold.
pub const DEFAULT_SUSTAIN: usize = 3;
/// Relative onset shift tolerated between the two largest sweep domains.
pub const SWEEP_STABLE_REL: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum GelVerdict {
    GelDetected,
    NoGelDetected,
    TruncationSuspected,
}

impl std::fmt::Display for GelVerdict {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            GelVerdict::GelDetected => "GEL_DETECTED",
            GelVerdict::NoGelDetected => "NO_GEL_DETECTED",
            GelVerdict::TruncationSuspected => "TRUNCATION_SUSPECTED",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct SweepEntry {
    pub r: f64,
    pub t_gel: Option<f64>,
    pub m1_final: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GelReport {
    pub verdict: GelVerdict,
    /// Interpolated onset time of the (largest-domain) detection.
    pub t_gel: Option<f64>,
    pub theta: f64,
    pub sustain: usize,
    pub sweep: Vec<SweepEntry>,
    /// Analytic bound, when the caller supplies one.
    pub t_bound: Option<f64>,
}

/// First sustained crossing of M1 below (1 - theta) M1(0), linearly
/// interpolated between samples.
pub fn detect(series: &MomentSeries, theta: f64, sustain: usize) -> Result<GelReport> {
    if series.samples.is_empty() {
        return Err(Error::EmptySeries);
    }
    if !(0.0..1.0).contains(&theta) || theta == 0.0 {
        return Err(Error::InvalidParameters(format!("theta must lie in (0,1), got {theta}")));
    }
    if sustain < 2 {
        return Err(Error::InvalidParameters(format!("sustain must be >= 2, got {sustain}")));
    }
    let m10 = series.samples[0].1;
    let threshold = (1.0 - theta) * m10;
    let vals = &series.samples;
    let mut t_gel = None;
    for k in 1..vals.len() {
        if vals[k].1 < threshold {
            let tail_ok = (k..vals.len()).take(sustain).filter(|&i| vals[i].1 < threshold).count()
                == sustain.min(vals.len() - k);
            let enough_tail = vals.len() - k >= sustain;
            if tail_ok && enough_tail {
                let (t0, v0) = vals[k - 1];
                let (t1, v1) = vals[k];
                let frac = if v0 > v1 { (v0 - threshold) / (v0 - v1) } else { 1.0 };
                t_gel = Some(t0 + frac * (t1 - t0));
                break;
            }
        }
    }
    Ok(GelReport {
        verdict: if t_gel.is_some() { GelVerdict::GelDetected } else { GelVerdict::NoGelDetected },
        t_gel,
        theta,
        sustain,
        sweep: Vec::new(),
        t_bound: None,
    })
}

/// Re-run the template setup at each R and look for a stabilized onset.
/// The two largest domains must both detect gelation and agree within
/// [`SWEEP_STABLE_REL`]; otherwise the verdict blames truncation.
pub fn r_sweep(
    template: &RunSetup,
    r_list: &[f64],
    theta: f64,
    sustain: usize,
) -> Result<GelReport> {
    if r_list.len() < 2 || r_list.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidParameters(
            "sweep needs at least two strictly increasing R values".into(),
        ));
    }
    let entries: Vec<SweepEntry> = r_list
        .par_iter()
        .map(|&r| -> Result<SweepEntry> {
            let mut setup = template.clone();
            setup.mesh = build_mesh(r, template.mesh.n, template.mesh.grading)?;
            let traj = run(&setup)?;
            let rep = detect(&traj.m1_series(), theta, sustain)?;
            Ok(SweepEntry { r, t_gel: rep.t_gel, m1_final: *traj.m1.last().unwrap() })
        })
        .collect::<Result<_>>()?;

    let top = &entries[entries.len() - 1];
    let second = &entries[entries.len() - 2];
    let (verdict, t_gel) = match (second.t_gel, top.t_gel) {
        (Some(t2), Some(t1)) => {
            if (t1 - t2).abs() <= SWEEP_STABLE_REL * t1 {
                (GelVerdict::GelDetected, Some(t1))
            } else {
                (GelVerdict::TruncationSuspected, Some(t1))
            }
        }
        (_, None) if entries.iter().all(|e| e.t_gel.is_none()) => (GelVerdict::NoGelDetected, None),
        _ => (GelVerdict::TruncationSuspected, top.t_gel),
    };
    Ok(GelReport { verdict, t_gel, theta, sustain, sweep: entries, t_bound: None })
}

/// Analytic upper bound 2 M^b(0) / (lambda M1(0)^2) on the gelation time
/// when (A3) holds with mu = 0.
pub fn gel_time_bound(mb0: f64, lambda: f64, m10: f64) -> Result<f64> {
    if !(lambda > 0.0) || !(m10 > 0.0) || !(mb0 >= 0.0) {
        return Err(Error::InvalidParameters(format!(
            "gel time bound needs lambda > 0, M1(0) > 0, M^b(0) >= 0; \
             got ({lambda}, {m10}, {mb0})"
        )));
    }
    Ok(2.0 * mb0 / (lambda * m10 * m10))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::KernelSpec;
    use crate::mesh::InitialCondition;
    use crate::solver::TimeGrid;
    use crate::weights::WeightSpec;
    use approx::assert_relative_eq;

    fn series(samples: Vec<(f64, f64)>) -> MomentSeries {
        MomentSeries { label: "x".into(), r: 1.0, samples }
    }

    #[test]
    fn constant_series_no_gel() {
        let s = series((0..10).map(|i| (i as f64, 1.0)).collect());
        let rep = detect(&s, 0.01, 3).unwrap();
        assert_eq!(rep.verdict, GelVerdict::NoGelDetected);
        assert!(rep.t_gel.is_none());
    }

    #[test]
    fn crossing_is_interpolated() {
        // drops from 1.0 to 0.9 between t = 2 and t = 3; theta = 5% crosses
        // 0.95 halfway through
        let s = series(vec![
            (0.0, 1.0),
            (1.0, 1.0),
            (2.0, 1.0),
            (3.0, 0.9),
            (4.0, 0.8),
            (5.0, 0.7),
        ]);
        let rep = detect(&s, 0.05, 3).unwrap();
        assert_eq!(rep.verdict, GelVerdict::GelDetected);
        assert_relative_eq!(rep.t_gel.unwrap(), 2.5, max_relative = 1e-12);
    }

    #[test]
    fn sustain_requires_enough_tail() {
        // crossing happens only at the very last sample
        let s = series(vec![(0.0, 1.0), (1.0, 1.0), (2.0, 0.5)]);
        let rep = detect(&s, 0.01, 3).unwrap();
        assert_eq!(rep.verdict, GelVerdict::NoGelDetected);
    }

    #[test]
    fn transient_dip_is_ignored() {
        let s = series(vec![
            (0.0, 1.0),
            (1.0, 0.5), // single-sample dip
            (2.0, 1.0),
            (3.0, 1.0),
            (4.0, 1.0),
            (5.0, 1.0),
        ]);
        let rep = detect(&s, 0.01, 2).unwrap();
        assert_eq!(rep.verdict, GelVerdict::NoGelDetected);
    }

    #[test]
    fn detect_monotone_in_theta() {
        let samples: Vec<(f64, f64)> =
            (0..100).map(|i| (i as f64 * 0.03, 1.0 / (1.0 + 0.3 * i as f64 * 0.03))).collect();
        let s = series(samples);
        let mut prev = 0.0;
        for theta in [0.01, 0.02, 0.05, 0.1, 0.2] {
            let rep = detect(&s, theta, 2).unwrap();
            let t = rep.t_gel.unwrap();
            assert!(t >= prev, "theta = {theta}: {t} < {prev}");
            prev = t;
        }
    }

    #[test]
    fn empty_series_errors() {
        let s = series(vec![]);
        assert!(matches!(detect(&s, 0.01, 3), Err(Error::EmptySeries)));
    }

    #[test]
    fn bad_parameters_error() {
        let s = series(vec![(0.0, 1.0)]);
        assert!(detect(&s, 0.0, 3).is_err());
        assert!(detect(&s, 1.0, 3).is_err());
        assert!(detect(&s, 0.01, 1).is_err());
    }

    #[test]
    fn zero_kernel_sweep_no_gel() {
        let template = RunSetup {
            mesh: build_mesh(10.0, 32, 3.0).unwrap(),
            kernel: KernelSpec::constant(0.0).unwrap(),
            weights: vec![],
            initial: InitialCondition::ExpDecay,
            t_end: 1.0,
            grid: TimeGrid::Fixed { steps: 20 },
            cadence: 1,
            snapshot_times: vec![],
        };
        let rep = r_sweep(&template, &[10.0, 20.0, 40.0], 0.01, 3).unwrap();
        assert_eq!(rep.verdict, GelVerdict::NoGelDetected);
        assert_eq!(rep.sweep.len(), 3);
        assert!(rep.sweep.iter().all(|e| e.t_gel.is_none()));
    }

    #[test]
    fn sweep_requires_increasing_domains() {
        let template = RunSetup {
            mesh: build_mesh(10.0, 8, 3.0).unwrap(),
            kernel: KernelSpec::constant(0.0).unwrap(),
            weights: vec![],
            initial: InitialCondition::ExpDecay,
            t_end: 1.0,
            grid: TimeGrid::Fixed { steps: 5 },
            cadence: 1,
            snapshot_times: vec![],
        };
        assert!(r_sweep(&template, &[10.0], 0.01, 3).is_err());
        assert!(r_sweep(&template, &[20.0, 10.0], 0.01, 3).is_err());
    }

    #[test]
    fn bound_formula() {
        assert_eq!(gel_time_bound(0.0, 1.0, 1.0).unwrap(), 0.0);
        let b1 = gel_time_bound(0.5, 1.0, 1.0).unwrap();
        let b2 = gel_time_bound(0.5, 2.0, 1.0).unwrap();
        assert_relative_eq!(b1, 2.0 * b2);
        assert!(gel_time_bound(1.0, 0.0, 1.0).is_err());
        assert!(gel_time_bound(1.0, 1.0, 0.0).is_err());
        assert!(gel_time_bound(-1.0, 1.0, 1.0).is_err());
    }

    #[test]
    fn sqrt_weight_bound_value() {
        // M^b(0) for b = sqrt(x), u0 = e^-x is Gamma(3/2) = sqrt(pi)/2
        let mb0 = 0.886_226_925_452_758;
        let bound = gel_time_bound(mb0, 1.0, 1.0).unwrap();
        assert_relative_eq!(bound, 1.772_453_850_905_516, max_relative = 1e-12);
        let _ = WeightSpec::power(0.5).unwrap();
    }
}
