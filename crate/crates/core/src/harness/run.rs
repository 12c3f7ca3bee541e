use std::path::PathBuf;

use serde::Serialize;
use serde_json::{json, Value};

use super::config::{ExperimentConfig, ExperimentKind, Plan};
use super::output::{results_path, write_rows, ResultRow, RESULT_FORMAT_VERSION};
use crate::env::{
    backbone_label, check_g3, cut_count, lambda_good_at, volume_profile, Environment, G3Config, LazyCluster,
    VertexLabel,
};
use crate::error::{Error, Result};
use crate::estimators::{
    annealed_heat_kernel, displacement_exponent, lower_tail_exponent, offdiag_profile, scan_environments,
    verify_bound_suite, volume_exponent, ExponentFit,
};
use crate::gw::{exact_pmf, survival_prob, OffspringLaw, PmfKind};
use crate::stream::env_seed;

/// Rows and summary of one run, before anything is written.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Outcome {
    pub rows: Vec<ResultRow>,
    pub summary: Value,
    /// `Some(false)` when a verify mode found failures.
    pub passed: Option<bool>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunReport {
    pub outcome: Outcome,
    pub results: PathBuf,
    pub summary: PathBuf,
}

fn fit_json(f: &ExponentFit) -> Value {
    json!({
        "slope": f.slope,
        "slope_ci": [f.slope_ci.0, f.slope_ci.1],
        "slope_se": f.slope_se,
        "intercept": f.intercept,
        "environments": f.environments,
    })
}

fn pooled_rows(rows: &mut Vec<ResultRow>, id: String, fit: &ExponentFit) {
    for i in 0..fit.grid.len() {
        rows.push(
            ResultRow::new(id.clone(), None, fit.grid[i], fit.estimates[i])
                .se(fit.std_errors[i], fit.environments as u64),
        );
    }
}

fn heat_kernel(p: &Plan) -> Result<Outcome> {
    let a = annealed_heat_kernel(p.n0, &p.t_grid, p.environments, p.master_seed, &p.kernel)?;
    let mut rows = Vec::new();
    for (seed, row) in a.env_seeds.iter().zip(&a.per_env) {
        for e in row {
            rows.push(ResultRow::new(format!("{}/killed_kernel", p.name), Some(*seed), e.t, e.killed).meta(json!({
                "correction": e.correction,
                "escape": e.escape,
                "radius": e.radius,
            })));
        }
    }
    pooled_rows(&mut rows, format!("{}/mean_kernel", p.name), &a.fit);
    Ok(Outcome {
        rows,
        summary: json!({
            "spectral_dimension": a.spectral_dimension,
            "spectral_dimension_ci": [a.spectral_ci.0, a.spectral_ci.1],
            "kernel_fit": fit_json(&a.fit),
            "scaled_kernel_range": [a.scaled_range.0, a.scaled_range.1],
            "max_correction_ratio": a.max_correction_ratio,
        }),
        passed: None,
    })
}

fn exponents(p: &Plan) -> Result<Outcome> {
    let d = displacement_exponent(p.n0, &p.t_grid, p.environments, p.replicas, p.master_seed)?;
    let v = volume_exponent(p.n0, &p.r_grid, p.environments, p.master_seed)?;
    let mut rows = Vec::new();
    for (seed, e) in d.env_seeds.iter().zip(&d.per_env) {
        for (i, &t) in p.t_grid.iter().enumerate() {
            rows.push(
                ResultRow::new(format!("{}/displacement", p.name), Some(*seed), t, e.mean[i])
                    .se(e.mean_se[i], p.replicas as u64),
            );
            rows.push(
                ResultRow::new(format!("{}/sup_displacement", p.name), Some(*seed), t, e.sup[i])
                    .se(e.sup_se[i], p.replicas as u64),
            );
        }
    }
    pooled_rows(&mut rows, format!("{}/mean_displacement", p.name), &d.mean);
    pooled_rows(&mut rows, format!("{}/mean_sup_displacement", p.name), &d.sup);
    for (seed, vols) in v.env_seeds.iter().zip(&v.volumes) {
        for (&r, &vol) in p.r_grid.iter().zip(vols) {
            rows.push(ResultRow::new(format!("{}/volume", p.name), Some(*seed), r as f64, vol as f64));
        }
    }
    pooled_rows(&mut rows, format!("{}/mean_volume", p.name), &v.fit);
    let tails = v.tail_frequencies(&[0.1, 0.2, 0.3, 0.5, 1.0, 2.0, 4.0, 8.0]);
    let lower: Vec<_> = tails.iter().copied().filter(|t| t.lambda < 1.0).collect();
    Ok(Outcome {
        rows,
        summary: json!({
            "displacement_fit": fit_json(&d.mean),
            "sup_displacement_fit": fit_json(&d.sup),
            "ordering_holds": d.ordering_holds,
            "replicas": d.replicas,
            "volume_fit": fit_json(&v.fit),
            "volume_tails": tails,
            "lower_tail_exponent": lower_tail_exponent(&lower),
        }),
        passed: None,
    })
}

fn off_diagonal(p: &Plan) -> Result<Outcome> {
    let o = offdiag_profile(p.n0, p.distance, &p.t_grid, p.environments, p.master_seed, p.max_attempts, &p.kernel)?;
    let rows = o
        .points
        .iter()
        .map(|q| {
            ResultRow::new(format!("{}/pair_kernel", p.name), None, q.t, q.mean)
                .se(q.std_error, o.accepted as u64)
                .meta(json!({
                    "distance": o.distance,
                    "scaled_distance": q.scaled_distance,
                    "profile": q.profile,
                    "max_correction_ratio": q.max_correction_ratio,
                }))
        })
        .collect();
    Ok(Outcome {
        rows,
        summary: json!({
            "distance": o.distance,
            "target": o.target,
            "accepted": o.accepted,
            "attempts": o.attempts,
            "efficiency": o.efficiency,
            "decay_slope": o.decay_slope,
            "decay_intercept": o.decay_intercept,
            "decay_correlation": o.decay_correlation,
        }),
        passed: None,
    })
}

fn verify_bounds(p: &Plan) -> Result<Outcome> {
    let rep = verify_bound_suite(&p.bounds)?;
    let rows = rep
        .checks
        .iter()
        .map(|c| {
            ResultRow::new(format!("{}/{}", p.name, c.name), None, 0.0, c.failures as f64)
                .se(0.0, c.trials)
                .meta(json!({
                    "skipped": c.skipped,
                    "worst_margin": if c.worst_margin.is_finite() { json!(c.worst_margin) } else { Value::Null },
                }))
        })
        .collect();
    let passed = rep.all_passed();
    Ok(Outcome {
        rows,
        summary: json!({
            "checks": rep.checks.iter().map(|c| json!({
                "name": c.name,
                "trials": c.trials,
                "failures": c.failures,
                "skipped": c.skipped,
            })).collect::<Vec<_>>(),
            "certified_lambdas": rep.certified_lambdas,
            "total_failures": rep.total_failures(),
            "passed": passed,
        }),
        passed: Some(passed),
    })
}

fn gw_exact(p: &Plan) -> Result<Outcome> {
    let law = OffspringLaw::new(p.n0)?;
    let mut rows = Vec::new();
    let mut survival = Vec::new();
    for &n in &p.n_grid {
        let n = n as usize;
        for (kind, tag) in [(PmfKind::Level, "level"), (PmfKind::Progeny, "progeny")] {
            let s = exact_pmf(law, n, kind, p.kmax, 1.0)?;
            for (k, &prob) in s.coefficients.iter().enumerate() {
                rows.push(
                    ResultRow::new(format!("{}/{tag}_pmf_n{n}", p.name), None, k as f64, prob)
                        .meta(json!({ "truncation_mass": s.truncation_mass })),
                );
            }
        }
        let scaled = n as f64 * survival_prob(law, n)?;
        rows.push(
            ResultRow::new(format!("{}/scaled_survival", p.name), None, n as f64, scaled)
                .meta(json!({ "limit": law.survival_constant() })),
        );
        survival.push(json!({ "n": n, "scaled": scaled }));
    }
    Ok(Outcome {
        rows,
        summary: json!({
            "survival_limit": law.survival_constant(),
            "scaled_survival": survival,
            "kmax": p.kmax,
        }),
        passed: None,
    })
}

fn oscillations(p: &Plan) -> Result<Outcome> {
    let t_cap = *p.t_grid.last().expect("non-empty");
    let s = scan_environments(
        p.n0,
        &p.n_grid,
        p.environments,
        p.master_seed,
        p.oscillation_threshold,
        Some((&p.kernel, t_cap)),
    )?;
    let mut rows = Vec::new();
    for (seed, series) in s.env_seeds.iter().zip(&s.series) {
        for (&n, &ratio) in series.grid.iter().zip(&series.ratios) {
            rows.push(ResultRow::new(format!("{}/volume_ratio", p.name), Some(*seed), n as f64, ratio));
        }
        for k in &series.kernel {
            rows.push(
                ResultRow::new(format!("{}/scaled_kernel", p.name), Some(*seed), k.n as f64, k.scaled)
                    .meta(json!({ "t": k.t, "correction_ratio": k.correction_ratio })),
            );
        }
    }
    Ok(Outcome {
        rows,
        summary: json!({
            "threshold": s.threshold,
            "fraction_above": s.fraction_above,
            "max_min_ratios": s.series.iter().map(|x| x.max_min_ratio).collect::<Vec<_>>(),
            "monotone_series": s.series.iter().filter(|x| x.monotone).count(),
        }),
        passed: None,
    })
}

fn ball_stats(p: &Plan) -> Result<Outcome> {
    let mut rows = Vec::new();
    let r_max = *p.r_grid.last().expect("non-empty");
    let g3 = G3Config {
        c472: p.c_g3,
        theta_cap: p.theta_cap,
        ..G3Config::default()
    };
    let mut good = 0usize;
    for i in 0..p.environments as u64 {
        let seed = env_seed(p.master_seed, i);
        let env = Environment::new(p.n0, seed)?;
        let prof = volume_profile(&env, &VertexLabel::root(), r_max)?;
        let mut cluster = LazyCluster::new(&env);
        for &r in &p.r_grid {
            let rf = r as f64;
            let m = cut_count(&mut cluster, &VertexLabel::root(), rf)?;
            let rep = lambda_good_at(&mut cluster, 0, rf, p.lambda1)?;
            good += rep.good() as usize;
            let g3_outcome = match check_g3(&mut cluster, &VertexLabel::root(), &backbone_label(&env, r as usize), 1, 1.0, &g3) {
                Ok(rep) => json!({ "holds": rep.holds, "thetas": rep.thetas }),
                Err(e) => json!({ "error": e.to_string() }),
            };
            rows.push(ResultRow::new(format!("{}/volume", p.name), Some(seed), rf, prof.volume_within(r) as f64));
            rows.push(ResultRow::new(format!("{}/size", p.name), Some(seed), rf, prof.size_within(r) as f64));
            rows.push(
                ResultRow::new(format!("{}/cut_count", p.name), Some(seed), rf, m as f64).meta(json!({
                    "lambda": p.lambda1,
                    "good": rep.good(),
                    "g3": g3_outcome,
                })),
            );
        }
    }
    Ok(Outcome {
        rows,
        summary: json!({
            "lambda": p.lambda1,
            "good_balls": good,
            "balls": p.environments * p.r_grid.len(),
        }),
        passed: None,
    })
}

/// Run the pipeline for a validated plan on a pool of `plan.workers` threads.
pub fn execute(plan: &Plan) -> Result<Outcome> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(plan.workers)
        .build()
        .map_err(|e| Error::domain(format!("worker pool: {e}")))?;
    let mut outcome = pool.install(|| match plan.kind {
        ExperimentKind::HeatKernel => heat_kernel(plan),
        ExperimentKind::Exponents => exponents(plan),
        ExperimentKind::OffDiagonal => off_diagonal(plan),
        ExperimentKind::VerifyBounds => verify_bounds(plan),
        ExperimentKind::GwExact => gw_exact(plan),
        ExperimentKind::Oscillations => oscillations(plan),
        ExperimentKind::BallStats => ball_stats(plan),
    })?;
    let results = std::mem::take(&mut outcome.summary);
    let mut plan_json = serde_json::to_value(plan)?;
    // Worker count and output location do not affect results.
    if let Value::Object(m) = &mut plan_json {
        m.remove("workers");
        m.remove("output");
    }
    outcome.summary = json!({
        "format_version": RESULT_FORMAT_VERSION,
        "experiment": plan.name,
        "kind": plan.kind,
        "plan": plan_json,
        "rows": outcome.rows.len(),
        "results": results,
        "passed": outcome.passed,
    });
    Ok(outcome)
}

/// Validate, execute and write `results.{csv,jsonl}` and `summary.json`.
pub fn run_experiment(config: &ExperimentConfig) -> Result<RunReport> {
    let plan = config.plan()?;
    let outcome = execute(&plan)?;
    std::fs::create_dir_all(&plan.output.dir)?;
    let results = results_path(&plan.output.dir, plan.output.format);
    write_rows(&results, plan.output.format, &outcome.rows)?;
    let summary = plan.output.dir.join("summary.json");
    let mut text = serde_json::to_string_pretty(&outcome.summary)?;
    text.push('\n');
    std::fs::write(&summary, text)?;
    Ok(RunReport {
        outcome,
        results,
        summary,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::config::{Grid, OutputFormat};

    fn small(kind: ExperimentKind, dir: &std::path::Path) -> ExperimentConfig {
        let mut c = ExperimentConfig::new(kind);
        c.master_seed = 4;
        c.output.dir = dir.to_path_buf();
        c
    }

    #[test]
    fn gw_exact_rows() {
        let dir = tempfile::tempdir().unwrap();
        let rep = run_experiment(&small(ExperimentKind::GwExact, dir.path())).unwrap();
        assert!(rep.results.ends_with("results.csv"));
        let s: Value = serde_json::from_str(&std::fs::read_to_string(rep.summary).unwrap()).unwrap();
        assert_eq!(s["kind"], "gw_exact");
        assert!(rep.outcome.rows.iter().any(|r| r.experiment == "gw_exact/level_pmf_n4"));
    }

    #[test]
    fn identical_runs_are_byte_identical_across_workers() {
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        let mut ca = small(ExperimentKind::Exponents, a.path());
        ca.grids.t = Some(Grid::Values(vec![2.0, 4.0, 8.0]));
        ca.grids.r = Some(Grid::Values(vec![2.0, 4.0, 8.0]));
        ca.counts.environments = Some(3);
        ca.output.format = OutputFormat::JsonLines;
        let mut cb = ca.clone();
        cb.output.dir = b.path().to_path_buf();
        ca.workers = Some(1);
        cb.workers = Some(3);
        let ra = run_experiment(&ca).unwrap();
        let rb = run_experiment(&cb).unwrap();
        for (x, y) in [(&ra.results, &rb.results), (&ra.summary, &rb.summary)] {
            assert!(std::fs::read(x).unwrap() == std::fs::read(y).unwrap(), "{x:?} differs");
        }
    }

    #[test]
    fn verify_mode_reports_pass_state() {
        let dir = tempfile::tempdir().unwrap();
        let mut c = small(ExperimentKind::VerifyBounds, dir.path());
        c.bounds = Some(crate::estimators::BoundSuiteSpec {
            trees: 5,
            tree_depth: 5,
            balls: 3,
            radii: vec![16],
            exit_balls: 1,
            exit_radii: vec![3],
            exit_replicas: 500,
            good_balls: 1,
            good_radius: 64,
            ..Default::default()
        });
        let rep = run_experiment(&c).unwrap();
        assert_eq!(rep.outcome.passed, Some(true));
    }

    #[test]
    fn zero_environments_is_config_error() {
        let dir = tempfile::tempdir().unwrap();
        let mut c = small(ExperimentKind::HeatKernel, dir.path());
        c.counts.environments = Some(0);
        assert!(matches!(run_experiment(&c), Err(Error::ConfigInvalid { .. })));
    }

    #[test]
    fn ball_stats_small() {
        let dir = tempfile::tempdir().unwrap();
        let mut c = small(ExperimentKind::BallStats, dir.path());
        c.counts.environments = Some(2);
        let rep = run_experiment(&c).unwrap();
        assert_eq!(rep.outcome.rows.len(), 2 * 4 * 3);
    }
}
