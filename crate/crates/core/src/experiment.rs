//! Experiment orchestration: run a configured simulation and emit its
//! artifact files (CSV series, snapshots, metadata, checks, gel reports,
//! oracle ensembles, classification JSON, plot script).
//!
//! CSV output is deterministic: shortest round-trip float formatting, fixed
//! column orders, no timestamps.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::coalescent;
use crate::conditions::{self, ClassifyOutcome};
use crate::config::{CheckKind, SimConfig};
use crate::error::{Error, Result};
use crate::gelation::{self, GelReport};
use crate::moments;
use crate::report::{ConditionId, ConditionReport, Verdict};
use crate::sampling::PairSampler;
use crate::solver::Trajectory;
use crate::weights::WeightTag;

/// Tolerance factor for the exact discrete mass-balance identity.
pub const MASS_BALANCE_TOL: f64 = 1e-12;
/// Rounding-level tolerance factor for the moment-identity/flux agreement.
pub const TMI_AGREEMENT_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunMetaStats {
    pub accepted_steps: usize,
    pub rejected_steps: usize,
    pub max_mass_defect: f64,
    pub m1_initial: f64,
    pub m1_final: f64,
}

/// Contents of `run_meta.toml`: the fully resolved config plus run stats.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunMeta {
    pub config: SimConfig,
    pub stats: RunMetaStats,
}

#[derive(Debug)]
pub struct ExperimentSummary {
    pub outdir: PathBuf,
    pub trajectory: Trajectory,
    pub checks: Vec<ConditionReport>,
    pub gel: Option<GelReport>,
}

impl ExperimentSummary {
    pub fn failed_checks(&self) -> usize {
        self.checks.iter().filter(|c| c.verdict == Verdict::Violated).count()
    }
}

fn resolve_outdir(cfg: &SimConfig, override_dir: Option<&Path>) -> PathBuf {
    match override_dir {
        Some(d) => d.to_path_buf(),
        None => cfg.outputs().outdir,
    }
}

fn write_atomic(path: &Path, content: &str) -> Result<()> {
    fs::write(path, content)?;
    Ok(())
}

fn format_time_label(t: f64) -> String {
    let mut s = format!("{t:.6}");
    while s.ends_with('0') {
        s.pop();
    }
    if s.ends_with('.') {
        s.pop();
    }
    s
}

fn moments_csv(traj: &Trajectory) -> String {
    let mut out = String::from("t,M0,M1");
    for label in &traj.weight_labels {
        let _ = write!(out, ",Mb_{}", label.replace(',', ";"));
    }
    out.push_str(",boundary_flux\n");
    for k in 0..traj.times.len() {
        let _ = write!(out, "{},{},{}", traj.times[k], traj.m0[k], traj.m1[k]);
        for series in &traj.mb {
            let _ = write!(out, ",{}", series[k]);
        }
        let _ = writeln!(out, ",{}", traj.boundary_flux[k]);
    }
    out
}

fn snapshot_csv(traj: &Trajectory, idx: usize) -> String {
    let mesh = &traj.mesh;
    let state = &traj.snapshots[idx];
    let mut out = String::from("x_mid,u,g\n");
    for i in 0..mesh.n {
        let g = state.g[i];
        let _ = writeln!(out, "{},{},{}", mesh.midpoints[i], g / mesh.midpoints[i], g);
    }
    out
}

fn checks_csv(checks: &[ConditionReport]) -> String {
    let mut out = String::from("name,params,verdict,max_residual,tolerance\n");
    for c in checks {
        let params = c.note.as_deref().unwrap_or("").replace(',', ";");
        let residual = c.constant("max_residual").unwrap_or(f64::NAN);
        let tol = c.constant("tolerance").unwrap_or(f64::NAN);
        let _ = writeln!(out, "{},{},{},{},{}", c.id, params, c.verdict, residual, tol);
    }
    out
}

fn gel_sweep_csv(report: &GelReport) -> String {
    let mut out = String::from("R,T_gel,M1_final\n");
    for e in &report.sweep {
        let t = e.t_gel.map(|t| t.to_string()).unwrap_or_else(|| "nan".into());
        let _ = writeln!(out, "{},{},{}", e.r, t, e.m1_final);
    }
    out
}

const PLOT_SCRIPT: &str = r#"#!/usr/bin/env python3
"""Render the mass evolution and size-distribution panels for this run."""
import csv
import glob
import os

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt

here = os.path.dirname(os.path.abspath(__file__))

def read_csv(path):
    with open(path) as fh:
        rows = list(csv.DictReader(fh))
    return rows

fig, (ax_u, ax_m) = plt.subplots(1, 2, figsize=(11, 4.2))

snapshots = sorted(glob.glob(os.path.join(here, "u_*.csv")),
                   key=lambda p: float(os.path.basename(p)[2:-4]))
cmap = plt.get_cmap("viridis")
for i, path in enumerate(snapshots):
    rows = read_csv(path)
    xs = [float(r["x_mid"]) for r in rows]
    us = [float(r["u"]) for r in rows]
    t = os.path.basename(path)[2:-4]
    color = cmap(i / max(len(snapshots) - 1, 1))
    ax_u.plot(xs, us, color=color, label=f"t = {t}")
ax_u.set_xlim(0, 5)
ax_u.set_xlabel("x")
ax_u.set_ylabel("u(x, t)")
ax_u.legend(fontsize=7)

rows = read_csv(os.path.join(here, "moments.csv"))
ts = [float(r["t"]) for r in rows]
m1 = [float(r["M1"]) for r in rows]
ax_m.plot(ts, m1)
ax_m.set_xlabel("t")
ax_m.set_ylabel("M1(t)")
ax_m.set_ylim(0, max(m1) * 1.05)

fig.tight_layout()
fig.savefig(os.path.join(here, "figures.png"), dpi=160)
print("wrote", os.path.join(here, "figures.png"))
"#;

/// Compute the toggled verification checks on a finished trajectory.
pub fn compute_checks(cfg: &SimConfig, traj: &Trajectory) -> Result<Vec<ConditionReport>> {
    let checks_cfg = cfg.checks();
    let mut out = Vec::new();
    let kernel = cfg.kernel_spec()?;
    for kind in &checks_cfg.enabled {
        match kind {
            CheckKind::MassBalance => {
                let tol = MASS_BALANCE_TOL * traj.stats.m1_initial;
                let defect = traj.stats.max_mass_defect;
                let verdict =
                    if defect <= tol { Verdict::HoldsOnSample } else { Verdict::Violated };
                out.push(
                    ConditionReport::new(ConditionId::MassBalance, verdict)
                        .with_constant("max_residual", defect)
                        .with_constant("tolerance", tol)
                        .with_note("per-step |dM1 + dt J_boundary|"),
                );
            }
            CheckKind::Monotonicity => {
                for b in cfg.weight_specs()? {
                    if !(b.claims(WeightTag::Nonnegative) && b.claims(WeightTag::Subadditive)) {
                        continue;
                    }
                    let mut rep = moments::check_monotone_subadditive(traj, &b)?;
                    let rise = rep.constant("max_rise").unwrap_or(f64::NAN);
                    let tol = moments::MONOTONE_TOL * rep.constant("initial").unwrap_or(0.0);
                    rep = rep.with_constant("max_residual", rise).with_constant("tolerance", tol);
                    out.push(rep);
                }
            }
            CheckKind::LBound => {
                for b in cfg.weight_specs()? {
                    if !b.claims(WeightTag::Nonnegative) {
                        continue;
                    }
                    let sampler = PairSampler::new(1e-6, 1e4, 20_000, 0x1B0).with_rays();
                    let a2 = conditions::check_a2(&kernel, &b, &sampler)?;
                    if !a2.holds() {
                        continue;
                    }
                    let c2 = a2.constant("C2").unwrap_or(0.0);
                    let mut rep = moments::check_l_bound(traj, &b, c2)?;
                    let margin = rep.witness.map(|w| w.margin).unwrap_or(f64::NAN);
                    rep = rep.with_constant("max_residual", -margin).with_constant("tolerance", 0.0);
                    out.push(rep);
                }
            }
            CheckKind::M0Decay => {
                let mut rep =
                    moments::check_m0_decay(traj, checks_cfg.m0_floor, checks_cfg.m0_theta)?;
                let final_frac = rep.constant("m0_final").unwrap_or(f64::NAN)
                    / rep.constant("m0_initial").unwrap_or(1.0).max(f64::MIN_POSITIVE);
                rep = rep
                    .with_constant("max_residual", final_frac)
                    .with_constant("tolerance", checks_cfg.m0_theta);
                out.push(rep);
            }
            CheckKind::Tmi => {
                // the identity with b = x at r = R must reproduce the
                // boundary flux at every stored state
                let b = crate::weights::WeightSpec::identity();
                let mesh = &traj.mesh;
                let mut worst = 0.0f64;
                for state in &traj.states {
                    let rhs = moments::tmi_rhs(mesh, state, &kernel, &b, mesh.r)?;
                    let j = moments::discrete_flux(mesh, state, &kernel, mesh.r)?;
                    worst = worst.max((rhs + j).abs());
                }
                let tol = TMI_AGREEMENT_TOL * traj.stats.m1_initial.max(1.0);
                let verdict = if worst <= tol { Verdict::HoldsOnSample } else { Verdict::Violated };
                out.push(
                    ConditionReport::new(ConditionId::TmiFluxAgreement, verdict)
                        .with_constant("max_residual", worst)
                        .with_constant("tolerance", tol)
                        .with_note("b = x at r = R vs boundary flux"),
                );
            }
        }
    }
    Ok(out)
}

/// Run one configured experiment and write its artifact files.
pub fn run_experiment(cfg: &SimConfig, override_dir: Option<&Path>) -> Result<ExperimentSummary> {
    cfg.validate()?;
    let outdir = resolve_outdir(cfg, override_dir);
    fs::create_dir_all(&outdir)?;
    let traj = cfg.run()?;

    write_atomic(&outdir.join("moments.csv"), &moments_csv(&traj))?;
    for idx in 0..traj.snapshots.len() {
        let label = format_time_label(traj.snapshots[idx].t);
        write_atomic(&outdir.join(format!("u_{label}.csv")), &snapshot_csv(&traj, idx))?;
    }

    let meta = RunMeta {
        config: cfg.clone(),
        stats: RunMetaStats {
            accepted_steps: traj.stats.accepted,
            rejected_steps: traj.stats.rejected,
            max_mass_defect: traj.stats.max_mass_defect,
            m1_initial: traj.stats.m1_initial,
            m1_final: *traj.m1.last().unwrap(),
        },
    };
    let meta_text = toml::to_string(&meta).map_err(|e| Error::ConfigParse(e.to_string()))?;
    write_atomic(&outdir.join("run_meta.toml"), &meta_text)?;
    write_atomic(&outdir.join("plot.py"), PLOT_SCRIPT)?;

    let checks = compute_checks(cfg, &traj)?;
    if !checks.is_empty() {
        write_atomic(&outdir.join("checks.csv"), &checks_csv(&checks))?;
    }

    let gel = match &cfg.gel {
        Some(gel_cfg) => {
            let report = if gel_cfg.r_list.len() >= 2 {
                let setup = cfg.to_setup()?;
                let rep = gelation::r_sweep(&setup, &gel_cfg.r_list, gel_cfg.theta, gel_cfg.sustain)?;
                write_atomic(&outdir.join("gel_sweep.csv"), &gel_sweep_csv(&rep))?;
                rep
            } else {
                gelation::detect(&traj.m1_series(), gel_cfg.theta, gel_cfg.sustain)?
            };
            let text =
                toml::to_string(&report).map_err(|e| Error::ConfigParse(e.to_string()))?;
            write_atomic(&outdir.join("gel_report.toml"), &text)?;
            Some(report)
        }
        None => None,
    };

    Ok(ExperimentSummary { outdir, trajectory: traj, checks, gel })
}

/// Run the stochastic-coalescent ensemble configured under `[oracle]` and
/// write per-replicate plus aggregate CSVs.
pub fn run_oracle(cfg: &SimConfig, override_dir: Option<&Path>) -> Result<PathBuf> {
    cfg.validate()?;
    let oracle_cfg = cfg.oracle.clone().ok_or_else(|| Error::ConfigValidation {
        field: "oracle".into(),
        message: "missing table".into(),
    })?;
    let t_end = cfg.t_end()?;
    let sample_times = if oracle_cfg.sample_times.is_empty() {
        (1..=30).map(|i| i as f64 * t_end / 30.0).collect()
    } else {
        oracle_cfg.sample_times.clone()
    };
    let kernel = cfg.kernel_spec()?;
    let initial = cfg.initial.clone().unwrap_or(crate::mesh::InitialCondition::ExpDecay);
    let ens = coalescent::ensemble(
        &initial,
        &kernel,
        oracle_cfg.n0,
        oracle_cfg.replicates,
        oracle_cfg.seed,
        t_end,
        &sample_times,
    )?;

    let outdir = resolve_outdir(cfg, override_dir);
    fs::create_dir_all(&outdir)?;
    for (rep, run) in ens.runs.iter().enumerate() {
        let mut out = String::from("t,m0,m1_excl_largest,largest_fraction\n");
        for k in 0..run.times.len() {
            let _ = writeln!(
                out,
                "{},{},{},{}",
                run.times[k], run.m0[k], run.m1_excl_largest[k], run.largest_fraction[k]
            );
        }
        write_atomic(&outdir.join(format!("oracle_rep_{rep}.csv")), &out)?;
    }
    let mut out = String::from(
        "t,m0_mean,m0_se,m1_excl_mean,m1_excl_se,largest_mean,largest_se\n",
    );
    for k in 0..ens.times.len() {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{}",
            ens.times[k],
            ens.mean_m0[k],
            ens.se_m0[k],
            ens.mean_m1_excl[k],
            ens.se_m1_excl[k],
            ens.mean_largest[k],
            ens.se_largest[k]
        );
    }
    write_atomic(&outdir.join("oracle_mean.csv"), &out)?;
    Ok(outdir)
}

/// Classify the configured kernel against every configured weight; write
/// one JSON report per pair into `classify_report.json`.
pub fn run_classify(
    cfg: &SimConfig,
    override_dir: Option<&Path>,
) -> Result<(PathBuf, Vec<ClassifyOutcome>)> {
    let kernel = cfg.kernel_spec()?;
    let weights = cfg.weight_specs()?;
    if weights.is_empty() {
        return Err(Error::ConfigValidation {
            field: "weights".into(),
            message: "classification needs at least one weight".into(),
        });
    }
    let sampler = conditions::default_sampler(0xC1A5);
    let outcomes: Vec<ClassifyOutcome> =
        weights.iter().map(|b| conditions::classify(&kernel, b, &sampler)).collect::<Result<_>>()?;
    let outdir = resolve_outdir(cfg, override_dir);
    fs::create_dir_all(&outdir)?;
    let json = serde_json::to_string_pretty(&outcomes)
        .map_err(|e| Error::ConfigParse(e.to_string()))?;
    write_atomic(&outdir.join("classify_report.json"), &json)?;
    Ok((outdir, outcomes))
}

/// Domain-size gelation sweep per the `[gel]` table.
pub fn run_gel(cfg: &SimConfig, override_dir: Option<&Path>) -> Result<(PathBuf, GelReport)> {
    cfg.validate()?;
    let gel_cfg = cfg.gel.clone().ok_or_else(|| Error::ConfigValidation {
        field: "gel".into(),
        message: "missing table".into(),
    })?;
    if gel_cfg.r_list.len() < 2 {
        return Err(Error::ConfigValidation {
            field: "gel.r_list".into(),
            message: "sweep needs at least two domain sizes".into(),
        });
    }
    let setup = cfg.to_setup()?;
    let report = gelation::r_sweep(&setup, &gel_cfg.r_list, gel_cfg.theta, gel_cfg.sustain)?;
    let outdir = resolve_outdir(cfg, override_dir);
    fs::create_dir_all(&outdir)?;
    write_atomic(&outdir.join("gel_sweep.csv"), &gel_sweep_csv(&report))?;
    let text = toml::to_string(&report).map_err(|e| Error::ConfigParse(e.to_string()))?;
    write_atomic(&outdir.join("gel_report.toml"), &text)?;
    Ok((outdir, report))
}

/// Recompute checks for a finished run directory: re-run the embedded
/// resolved config (runs are deterministic) and emit `checks.csv`.
pub fn run_verify(dir: &Path) -> Result<(PathBuf, Vec<ConditionReport>)> {
    let meta_path = dir.join("run_meta.toml");
    let text = fs::read_to_string(&meta_path)?;
    let meta: RunMeta = toml::from_str(&text).map_err(|e| Error::ConfigParse(e.to_string()))?;
    let mut cfg = meta.config;
    if cfg.checks().enabled.is_empty() {
        cfg.checks = Some(crate::config::ChecksConfig {
            enabled: vec![CheckKind::MassBalance, CheckKind::Monotonicity, CheckKind::Tmi],
            ..cfg.checks()
        });
    }
    let traj = cfg.run()?;
    let checks = compute_checks(&cfg, &traj)?;
    write_atomic(&dir.join("checks.csv"), &checks_csv(&checks))?;
    Ok((dir.to_path_buf(), checks))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::load_config_str;

    fn small_cfg(extra: &str) -> SimConfig {
        load_config_str(&format!(
            r#"
            [kernel]
            kind = "product_plus_sum"

            [mesh]
            R = 30.0
            n = 48

            [time]
            T = 1.0
            N = 50

            [outputs]
            cadence = 1
            snapshot_times = [0.0, 1.0]
            outdir = "IGNORED"

            {extra}
            "#,
        ))
        .unwrap()
    }

    #[test]
    fn experiment_writes_expected_files() {
        let dir = tempdir("exp_files");
        let cfg = small_cfg(
            r#"
            [checks]
            enabled = ["mass_balance", "monotonicity", "tmi"]

            [[weights]]
            kind = "one"

            [[weights]]
            kind = "power"
            p = 0.5
            "#,
        );
        let summary = run_experiment(&cfg, Some(&dir)).unwrap();
        assert!(dir.join("moments.csv").exists());
        assert!(dir.join("u_0.csv").exists());
        assert!(dir.join("u_1.csv").exists());
        assert!(dir.join("run_meta.toml").exists());
        assert!(dir.join("plot.py").exists());
        assert!(dir.join("checks.csv").exists());
        assert_eq!(summary.failed_checks(), 0);
        let csv = fs::read_to_string(dir.join("moments.csv")).unwrap();
        let header = csv.lines().next().unwrap();
        assert_eq!(header, "t,M0,M1,Mb_one,Mb_x^0.5,boundary_flux");
        assert_eq!(csv.lines().count(), 52); // header + 51 samples
    }

    #[test]
    fn empty_checks_list_writes_no_checks_csv() {
        let dir = tempdir("exp_nochecks");
        let cfg = small_cfg("");
        run_experiment(&cfg, Some(&dir)).unwrap();
        assert!(!dir.join("checks.csv").exists());
    }

    #[test]
    fn identical_config_gives_byte_identical_outputs() {
        let dir_a = tempdir("exp_det_a");
        let dir_b = tempdir("exp_det_b");
        let cfg = small_cfg("");
        run_experiment(&cfg, Some(&dir_a)).unwrap();
        run_experiment(&cfg, Some(&dir_b)).unwrap();
        let a = fs::read(dir_a.join("moments.csv")).unwrap();
        let b = fs::read(dir_b.join("moments.csv")).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn verify_reruns_from_metadata() {
        let dir = tempdir("exp_verify");
        let cfg = small_cfg("");
        run_experiment(&cfg, Some(&dir)).unwrap();
        let (_, checks) = run_verify(&dir).unwrap();
        assert!(!checks.is_empty());
        assert!(dir.join("checks.csv").exists());
        assert!(checks.iter().all(|c| c.verdict != Verdict::Violated));
    }

    #[test]
    fn oracle_requires_table() {
        let cfg = small_cfg("");
        assert!(matches!(
            run_oracle(&cfg, Some(Path::new("/tmp/unused"))),
            Err(Error::ConfigValidation { .. })
        ));
    }

    #[test]
    fn oracle_writes_replicates_and_mean() {
        let dir = tempdir("exp_oracle");
        let cfg = small_cfg(
            r#"
            [oracle]
            n0 = 200
            replicates = 3
            seed = 7
            "#,
        );
        run_oracle(&cfg, Some(&dir)).unwrap();
        assert!(dir.join("oracle_rep_0.csv").exists());
        assert!(dir.join("oracle_rep_2.csv").exists());
        let mean = fs::read_to_string(dir.join("oracle_mean.csv")).unwrap();
        assert!(mean.starts_with("t,m0_mean,m0_se"));
        assert_eq!(mean.lines().count(), 31);
    }

    #[test]
    fn gel_subcommand_needs_sweep_domains() {
        let cfg = small_cfg(
            r#"
            [gel]
            r_list = [30.0]
            "#,
        );
        assert!(matches!(
            run_gel(&cfg, Some(Path::new("/tmp/unused"))),
            Err(Error::ConfigValidation { .. })
        ));
    }

    fn tempdir(tag: &str) -> PathBuf {
        let dir = std::env::temp_dir().join(format!("coagsim_test_{tag}_{}", std::process::id()));
        let _ = fs::remove_dir_all(&dir);
        fs::create_dir_all(&dir).unwrap();
        dir
    }
}
