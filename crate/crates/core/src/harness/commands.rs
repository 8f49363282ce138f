use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::{FRAC_PI_2, PI};

use super::config::RunConfig;
use super::output::{num, row, Output, StageVerdict};
use crate::cap::{
    cap_eigenvalue, resolve_s_of_k, sample_logconcavity, sample_pairs, summarize, symmetric_pairs, verify_gap_chain,
    BallOracle, CapProblem, GapChainReport, LogConcavitySummary, RadialLogDerivative, SResolution,
};
use crate::error::{Error, Result};
use crate::numerics::Grid1D;
use crate::parabolic::{build_flow, evolve, ConvergenceReport, FlowConfig};
use crate::prufer::{robin, tilde_psi_k0, RobinDefects};
use crate::riccati::modulus::{IDENTICAL_TOL, MIN_MODULUS_NODES};
use crate::riccati::{dichotomy, initial_modulus, Dichotomy};
use crate::spectrum::{model_gap_from, LogDerivative, ModelContext, ModelGap, ModelProblem, ModelSpectrum};

/// Wraps a stage failure with the stage name.
fn stage<T>(name: &str, r: Result<T>) -> Result<T> {
    r.map_err(|e| match e {
        Error::Stage { .. } => e,
        other => Error::Stage { stage: name.into(), message: other.to_string() },
    })
}

fn model(cfg: &RunConfig, n: u32, d: f64) -> Result<ModelSpectrum> {
    ModelSpectrum::compute(&ModelProblem::new(n, d, cfg.grid_nodes)?)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EigenSummary {
    pub n: u32,
    #[serde(rename = "D")]
    pub diameter: f64,
    pub nodes: usize,
    pub mu0: f64,
    pub mu1: f64,
    pub certified_tolerance: [f64; 2],
    pub oracle_relative_mismatch: Vec<f64>,
    pub dense_coarse: Vec<f64>,
    pub dense_fine: Vec<f64>,
    pub dense_extrapolated: Vec<f64>,
    pub gap: ModelGap,
    /// `(μ₀ D²/π² − 1, μ₁ D²/4π² − 1)` for `n = 1`.
    pub closed_form_relative_error: Option<[f64; 2]>,
}

pub fn eigen_summary(cfg: &RunConfig, spec: &ModelSpectrum) -> EigenSummary {
    let d2 = spec.diameter * spec.diameter;
    EigenSummary {
        n: spec.n,
        diameter: spec.diameter,
        nodes: cfg.grid_nodes,
        mu0: spec.mu0(),
        mu1: spec.mu1(),
        certified_tolerance: spec.certified_tolerance(),
        oracle_relative_mismatch: spec.oracle_relative_mismatch.clone(),
        dense_coarse: spec.dense.coarse.clone(),
        dense_fine: spec.dense.fine.clone(),
        dense_extrapolated: spec.dense.extrapolated.clone(),
        gap: model_gap_from(spec),
        closed_form_relative_error: (spec.n == 1)
            .then(|| [spec.mu0() * d2 / (PI * PI) - 1.0, spec.mu1() * d2 / (4.0 * PI * PI) - 1.0]),
    }
}

pub fn cmd_eigen(cfg: &RunConfig, out: &mut Output) -> Result<Vec<StageVerdict>> {
    let spec = stage("eigen", model(cfg, cfg.n, cfg.diameter))?;
    let sum = eigen_summary(cfg, &spec);
    out.write_json("eigen/mu0_mu1.json", &sum)?;
    for (i, pair) in spec.shooting.iter().enumerate() {
        out.write_csv(
            &format!("eigen/phi{i}.csv"),
            &["z", "phi", "dphi"],
            pair.z.iter().zip(pair.samples.iter().zip(&pair.dsamples)).map(|(z, (p, d))| row(&[*z, *p, *d])),
        )?;
    }
    out.tolerance("mu0", sum.certified_tolerance[0]);
    out.tolerance("mu1", sum.certified_tolerance[1]);

    let worst = sum.oracle_relative_mismatch.iter().copied().fold(0.0, f64::max);
    let mut v = vec![StageVerdict::new(
        "eigen.oracle",
        worst <= cfg.tolerances.oracle_relative,
        format!("relative shooting/dense mismatch {worst:e}"),
    )];
    if sum.gap.bound_asserted {
        v.push(StageVerdict::new(
            "eigen.gap_bound",
            sum.gap.passed,
            format!("mu1 - mu0 - 3pi^2/D^2 = {:e} (tolerance {:e})", sum.gap.margin, sum.gap.tolerance),
        ));
    }
    if let Some([e0, e1]) = sum.closed_form_relative_error {
        v.push(StageVerdict::new(
            "eigen.closed_form",
            e0.abs().max(e1.abs()) <= cfg.tolerances.oracle_relative,
            format!("relative errors {e0:e}, {e1:e}"),
        ));
    }
    Ok(v)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RobinEntry {
    pub eps: f64,
    pub c: f64,
    pub sigma: f64,
    pub defects: RobinDefects,
}

pub fn context(cfg: &RunConfig) -> Result<ModelContext> {
    stage("eigen", model(cfg, cfg.n, cfg.diameter).map(|s| ModelContext::from_spectrum(&s)))
}

pub fn cmd_robin(cfg: &RunConfig, out: &mut Output) -> Result<Vec<StageVerdict>> {
    let ctx = context(cfg)?;
    let grid = Grid1D::half_interval(cfg.diameter, cfg.grid_nodes)?;
    let mut eps = cfg.eps_list.clone();
    eps.sort_by(f64::total_cmp);
    eps.dedup();
    let mut entries = Vec::new();
    for e in &eps {
        let sol = stage("robin", robin(&ctx, *e, grid.nodes()))?;
        let defects = sol.defects(&ctx);
        out.write_csv(
            &format!("flow/robin_eps{e}.csv"),
            &["z", "phi", "dphi", "q", "psi"],
            (0..sol.z.len()).map(|i| {
                let p = sol.phi_samples[i];
                let d = sol.dphi_samples[i];
                row(&[sol.z[i], p, d, sol.q_samples[i], d / p])
            }),
        )?;
        entries.push(RobinEntry { eps: *e, c: sol.c_of_eps, sigma: sol.sigma, defects });
    }
    out.write_json("flow/robin.json", &entries)?;

    let tol = cfg.tolerances.robin_residual;
    let boundary = entries.iter().flat_map(|e| e.defects.boundary).fold(0.0, f64::max);
    let ode = entries.iter().map(|e| e.defects.ode_residual).fold(0.0, f64::max);
    out.tolerance("robin_residual", tol);
    Ok(vec![
        StageVerdict::new("robin.c_positive", entries.iter().all(|e| e.c > 0.0), "c(eps) > 0"),
        StageVerdict::new(
            "robin.c_increasing",
            entries.windows(2).all(|w| w[0].c < w[1].c),
            format!("c over eps = {:?}", entries.iter().map(|e| e.c).collect::<Vec<_>>()),
        ),
        StageVerdict::new("robin.boundary", boundary <= tol, format!("max boundary residual {boundary:e}")),
        StageVerdict::new("robin.ode", ode <= tol, format!("max ODE residual {ode:e}")),
        StageVerdict::new(
            "robin.positive",
            entries.iter().all(|e| e.defects.min_phi > 0.0 && e.defects.angle_confined),
            "phi > 0 and |q| < pi/2",
        ),
    ])
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModulusEntry {
    pub k: u32,
    pub s_used: Vec<f64>,
    pub kinks: Vec<crate::profile::Kink>,
    pub stationary_residual: f64,
    pub dichotomy: Dichotomy,
    pub boundary_exact: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModulusSummary {
    pub resolutions: Vec<SResolution>,
    /// `s(j)` used for `j = 1..=max k`.
    pub s_used: Vec<f64>,
    pub entries: Vec<ModulusEntry>,
    pub note: String,
}

fn sorted_k(cfg: &RunConfig) -> Vec<u32> {
    let mut k = cfg.k_list.clone();
    k.sort_unstable();
    k.dedup();
    k
}

/// `s(j)` for `j = 1..=k_max`: ball oracle raised to `s_floor`, or the floor alone for `n = 1`.
fn resolve_s(cfg: &RunConfig, ctx: &ModelContext, z: &[f64], k_max: u32) -> Result<(Vec<SResolution>, Vec<f64>, String)> {
    if ctx.n < 2 {
        let note = "n = 1 has no ball oracle; s(j) = s_floor".to_string();
        return Ok((Vec::new(), vec![cfg.s_floor; k_max as usize], note));
    }
    let oracle = stage("s_search", BallOracle::new(ctx, cfg.oracle_pairs, cfg.seed, z))?;
    let res: Vec<SResolution> = stage(
        "s_search",
        (1..=k_max).into_par_iter().map(|j| resolve_s_of_k(&oracle, j, cfg.s_max, cfg.s_floor)).collect(),
    )?;
    let s = res.iter().map(|r| r.s_used).collect();
    Ok((res, s, crate::cap::BALL_NOTE.into()))
}

pub fn modulus_stage(cfg: &RunConfig, ctx: &ModelContext, out: &mut Output) -> Result<(ModulusSummary, Vec<StageVerdict>)> {
    let ks = sorted_k(cfg);
    let k_max = *ks.last().unwrap();
    let grid = Grid1D::half_interval(cfg.diameter, cfg.grid_nodes.max(MIN_MODULUS_NODES))?;
    let z = grid.nodes();
    let (resolutions, s_used, note) = resolve_s(cfg, ctx, z, k_max)?;
    let mut entries = Vec::new();
    let mut prev: Option<Vec<f64>> = None;
    let mut non_increasing = true;
    for &k in &ks {
        let m = stage("modulus", initial_modulus(ctx, &s_used[..k as usize], z))?;
        let t = stage("modulus", tilde_psi_k0(ctx, k, z))?;
        let p = &m.profile;
        if let Some(q) = &prev {
            non_increasing &= p.samples.iter().zip(q).skip(1).all(|(a, b)| a <= b);
        }
        out.write_csv(
            &format!("flow/modulus_k{k}.csv"),
            &["z", "psi_k0", "tilde_psi_k0"],
            (0..z.len()).map(|i| row(&[z[i], p.samples[i], t.psi[i]])),
        )?;
        entries.push(ModulusEntry {
            k,
            s_used: m.s_used.clone(),
            kinks: p.kinks.clone(),
            stationary_residual: m.stationary_residual,
            dichotomy: dichotomy(&p.samples, &t.psi, IDENTICAL_TOL),
            boundary_exact: p.samples[0] == 0.0 && *p.samples.last().unwrap() == -(k as f64),
        });
        prev = Some(p.samples.clone());
    }
    let sum = ModulusSummary { resolutions, s_used, entries, note };
    out.write_json("flow/modulus.json", &sum)?;
    let e = &sum.entries;
    let residual = e.iter().map(|x| x.stationary_residual).fold(0.0, f64::max);
    let verdicts = vec![
        StageVerdict::new("modulus.boundary", e.iter().all(|x| x.boundary_exact), "psi_k0(0) = 0, psi_k0(D/2) = -k"),
        StageVerdict::new(
            "modulus.kinks",
            e.iter().all(|x| x.kinks.iter().all(|kk| kk.jump <= 0.0)),
            "derivative jumps <= 0",
        ),
        StageVerdict::new("modulus.dichotomy", e.iter().all(|x| x.dichotomy.holds()), "identical or strictly above"),
        StageVerdict::new("modulus.non_increasing_in_k", non_increasing, format!("k = {ks:?}")),
        StageVerdict::new(
            "modulus.residual",
            residual <= cfg.tolerances.robin_residual,
            format!("max smooth-piece residual {residual:e}"),
        ),
    ];
    Ok((sum, verdicts))
}

pub fn cmd_modulus(cfg: &RunConfig, out: &mut Output) -> Result<Vec<StageVerdict>> {
    let ctx = context(cfg)?;
    Ok(modulus_stage(cfg, &ctx, out)?.1)
}

pub fn flow_config(cfg: &RunConfig) -> FlowConfig {
    FlowConfig { t_end: cfg.t_end, tol: cfg.tolerances.flow, ..FlowConfig::default() }
}

pub fn cmd_flow(cfg: &RunConfig, out: &mut Output) -> Result<Vec<StageVerdict>> {
    let ctx = context(cfg)?;
    let (modulus, mut verdicts) = modulus_stage(cfg, &ctx, out)?;
    let fc = flow_config(cfg);
    for k in sorted_k(cfg) {
        let (prob, _) = stage("flow", build_flow(&ctx, &modulus.s_used[..k as usize], cfg.grid_nodes))?;
        let run = stage("flow", evolve(&prob, &fc))?;
        let r: &ConvergenceReport = &run.report;
        out.write_json(&format!("flow/report_k{k}.json"), r)?;
        out.write_csv(
            &format!("flow/history_k{k}.csv"),
            &["t", "sup_error", "max_time_derivative", "lower_margin", "upper_margin", "lipschitz"],
            r.samples.iter().map(|s| {
                row(&[s.t, s.sup_error, s.max_time_derivative, s.lower_margin, s.upper_margin, s.lipschitz])
            }),
        )?;
        let z = &prob.stencil.z;
        out.write_csv(
            &format!("flow/final_k{k}.csv"),
            &["z", "psi", "tilde_psi_k0", "psi_k0"],
            (0..z.len()).map(|i| row(&[z[i], run.final_state.psi[i], prob.tilde[i], prob.initial.samples[i]])),
        )?;
        out.tolerance(format!("flow.k{k}.sandwich"), r.sandwich_tol_final);
        out.tolerance(format!("flow.k{k}.monotonicity"), fc.tolerance_factor * r.truncation_tol);
        verdicts.push(StageVerdict::new(
            format!("flow.k{k}.sandwich"),
            r.sandwich_violations.count == 0,
            format!("{} violations, worst {:e}", r.sandwich_violations.count, r.sandwich_violations.worst),
        ));
        verdicts.push(StageVerdict::new(
            format!("flow.k{k}.monotonicity"),
            r.monotonicity_violations.count == 0,
            format!("{} violations, worst {:e}", r.monotonicity_violations.count, r.monotonicity_violations.worst),
        ));
        verdicts.push(StageVerdict::new(
            format!("flow.k{k}.convergence"),
            r.converged && r.stationary_residual_final < cfg.tolerances.flow_residual,
            format!(
                "sup error {:e} at t = {}, residual {:e}",
                r.final_sup_error,
                r.t_final,
                r.stationary_residual_final
            ),
        ));
    }
    Ok(verdicts)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HemisphereRow {
    pub n: u32,
    pub radius: f64,
    pub lambda0: f64,
    pub lambda1: f64,
    pub gap: f64,
    /// Limits `n` and `2(n+1)` at `R = π/2`.
    pub limits: [f64; 2],
}

pub fn hemisphere_row(n: u32, offset: f64) -> Result<HemisphereRow> {
    let prob = CapProblem::new(n, FRAC_PI_2 - offset)?;
    let (l0, l1) = (cap_eigenvalue(&prob, 0)?.lambda, cap_eigenvalue(&prob, 1)?.lambda);
    Ok(HemisphereRow {
        n,
        radius: prob.radius,
        lambda0: l0,
        lambda1: l1,
        gap: l1 - l0,
        limits: [n as f64, 2.0 * (n as f64 + 1.0)],
    })
}

pub fn logconcavity_case(n: u32, d: f64, pairs: usize, seed: u64, nodes: usize) -> Result<(LogConcavitySummary, Vec<[f64; 4]>)> {
    let prob = CapProblem::from_diameter(n, d)?;
    let spec = ModelSpectrum::compute(&ModelProblem::new(n, d, nodes)?)?;
    let ball = RadialLogDerivative::new(&prob, &cap_eigenvalue(&prob, 0)?)?;
    let model = LogDerivative::new(spec.first_eigenfunction())?;
    let mut p = sample_pairs(&prob, pairs, seed);
    p.extend(symmetric_pairs(&prob));
    let s = sample_logconcavity(&prob, &ball, &model, &p)?;
    let rows = s.iter().map(|t| [t.d, t.lhs, t.rhs, t.margin]).collect();
    Ok((summarize(&prob, seed, &s), rows))
}

fn gap_verdict(r: &GapChainReport, tol: f64) -> bool {
    r.gap_margin >= -tol && r.ground_margin >= -tol && r.model_bound_margin.is_none_or(|m| m >= -tol) && r.l1_is_first_excited
}

/// `n_list × D_list` sorted by `(n, D)`, so results never depend on completion order.
pub fn sweep_cases(cfg: &RunConfig) -> Vec<(u32, f64)> {
    let sw = &cfg.sweep;
    let mut cases: Vec<(u32, f64)> = sw.n_list.iter().flat_map(|n| sw.d_list.iter().map(move |d| (*n, *d))).collect();
    cases.sort_by(|a, b| a.0.cmp(&b.0).then(a.1.total_cmp(&b.1)));
    cases.dedup();
    cases
}

pub fn cmd_verify_gap(cfg: &RunConfig, out: &mut Output) -> Result<Vec<StageVerdict>> {
    let sw = &cfg.sweep;
    let cases = sweep_cases(cfg);
    let reports: Vec<GapChainReport> = stage(
        "verify_gap",
        cases
            .par_iter()
            .map(|(n, d)| {
                let prob = CapProblem::from_diameter(*n, *d)?;
                verify_gap_chain(&prob, &model(cfg, *n, *d)?)
            })
            .collect(),
    )?;
    let tol = cfg.tolerances.gap;
    out.tolerance("gap", tol);
    let mut verdicts = Vec::new();
    let opt = |v: Option<f64>| v.map(num).unwrap_or_default();
    out.write_csv(
        "gap/summary.csv",
        &[
            "n",
            "D",
            "lambda0",
            "lambda1",
            "mu0",
            "mu1",
            "gap_margin",
            "ground_margin",
            "model_bound_margin",
            "certified_tolerance",
            "passed",
        ],
        reports.iter().map(|r| {
            let mut v = vec![r.n.to_string()];
            v.extend(row(&[r.diameter, r.lambda0, r.lambda1, r.mu0, r.mu1, r.gap_margin, r.ground_margin]));
            v.push(opt(r.model_bound_margin));
            v.push(num(r.tolerance));
            v.push(gap_verdict(r, tol).to_string());
            v
        }),
    )?;
    for r in &reports {
        let key = RunConfig::case_key(r.n, r.diameter);
        out.write_json(&format!("gap/gap_{key}.json"), r)?;
        out.tolerance(format!("gap.{key}"), r.tolerance);
        verdicts.push(StageVerdict::new(
            format!("gap.{key}"),
            gap_verdict(r, tol),
            format!(
                "gap margin {:e}, ground margin {:e}, model bound margin {}",
                r.gap_margin,
                r.ground_margin,
                r.model_bound_margin.map_or("n/a".into(), |m| format!("{m:e}"))
            ),
        ));
    }

    if sw.hemisphere_row {
        let h = stage("verify_gap", hemisphere_row(3, 1e-3))?;
        out.write_json("gap/hemisphere_n3.json", &h)?;
        let target = h.limits[1] - h.limits[0];
        verdicts.push(StageVerdict::new(
            "gap.hemisphere_n3",
            (h.gap - target).abs() <= cfg.tolerances.hemisphere,
            format!("lambda0 = {}, lambda1 = {}, gap = {} (limit {target})", h.lambda0, h.lambda1, h.gap),
        ));
    }

    let lc: Vec<_> = stage(
        "logconcavity",
        sw.logconcavity_cases
            .par_iter()
            .map(|(n, d)| logconcavity_case(*n, *d, sw.pairs, cfg.seed, cfg.grid_nodes))
            .collect::<Result<Vec<_>>>(),
    )?;
    for (sum, rows) in &lc {
        let key = RunConfig::case_key(sum.n, sum.diameter);
        out.write_json(&format!("gap/logconcavity_{key}.json"), sum)?;
        out.write_csv(&format!("gap/logconcavity_{key}.csv"), &["d", "lhs", "rhs", "margin"], rows.iter().map(|r| row(r)))?;
        verdicts.push(StageVerdict::new(
            format!("logconcavity.{key}"),
            sum.min_margin >= -cfg.tolerances.logconcavity,
            format!("{} pairs, min margin {:e}", sum.count, sum.min_margin),
        ));
    }
    out.tolerance("logconcavity", cfg.tolerances.logconcavity);
    Ok(verdicts)
}

pub fn cmd_sweep(cfg: &RunConfig, out: &mut Output) -> Result<Vec<StageVerdict>> {
    let cases = sweep_cases(cfg);
    let sums: Vec<EigenSummary> =
        stage("sweep", cases.par_iter().map(|(n, d)| model(cfg, *n, *d).map(|s| eigen_summary(cfg, &s))).collect())?;
    out.write_csv(
        "eigen/sweep.csv",
        &["n", "D", "mu0", "mu1", "gap", "bound_3pi2_d2", "margin", "tolerance", "bound_asserted", "passed"],
        sums.iter().map(|s| {
            let g = &s.gap;
            let mut v = vec![s.n.to_string()];
            v.extend(row(&[s.diameter, g.mu0, g.mu1, g.gap, g.bound_3pi2_d2, g.margin, g.tolerance]));
            v.push(g.bound_asserted.to_string());
            v.push(g.passed.to_string());
            v
        }),
    )?;
    Ok(sums
        .iter()
        .map(|s| {
            let key = RunConfig::case_key(s.n, s.diameter);
            let mismatch = s.oracle_relative_mismatch.iter().copied().fold(0.0, f64::max);
            StageVerdict::new(
                format!("sweep.{key}"),
                s.gap.passed && mismatch <= cfg.tolerances.oracle_relative,
                format!("margin {:e}, oracle mismatch {mismatch:e}", s.gap.margin),
            )
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stage_names_are_kept() {
        let e = stage::<()>("robin", Err(Error::CSearchCapExceeded { cap: 1e6 })).unwrap_err();
        assert!(matches!(&e, Error::Stage { stage, .. } if stage == "robin"));
        let again = stage::<()>("flow", Err(e)).unwrap_err();
        assert!(again.to_string().starts_with("stage robin failed: c search cap exceeded"));
    }

    #[test]
    fn sweep_cases_are_sorted() {
        let mut cfg = RunConfig::default();
        cfg.sweep.n_list = vec![5, 2, 5];
        cfg.sweep.d_list = vec![2.0, 1.0];
        assert_eq!(sweep_cases(&cfg), vec![(2, 1.0), (2, 2.0), (5, 1.0), (5, 2.0)]);
    }
}
