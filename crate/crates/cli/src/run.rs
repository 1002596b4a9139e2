use serde::Serialize;
use shrinkage::mc::block_rng;
use shrinkage::risk::{scan_points, DensitySliceConfig, IdentityCheck, MinimaxReport, Ray, SliceRow};
use shrinkage::template::Instance;
use shrinkage::{
    density_slice, estimate_mean_checked, kl_gap_reg_mc, marginal_eval, minimaxity_scan, risk_curve,
    risk_identity_check, trace_condition_check, EstimatorTemplate, LinearModel, MeanEstimator, ModelConfig, Prior,
    RegressionPrior, RiskCurveConfig, RiskCurveRow, TraceReport,
};

use crate::config::{
    DensitySliceArgs, DiagnoseArgs, EstimateArgs, Format, RegressCurveArgs, RiskCurveArgs, RunConfig, Task,
};
use crate::error::CliError;

/// Serialized result rows plus a human-readable summary.
pub struct Output {
    pub body: String,
    pub summary: Option<String>,
}

pub fn run(cfg: &RunConfig) -> Result<Output, CliError> {
    match &cfg.task {
        Task::RiskCurve(args) => cmd_risk_curve(args, cfg),
        Task::DensitySlice(args) => cmd_density_slice(args, cfg),
        Task::Estimate(args) => cmd_estimate(args, cfg),
        Task::Diagnose(args) => cmd_diagnose(args, cfg),
        Task::RegressCurve(args) => cmd_regress_curve(args, cfg),
    }
}

fn render<T: Serialize>(rows: &[T], format: Format) -> Result<String, CliError> {
    match format {
        Format::Json => serde_json::to_string_pretty(rows)
            .map(|s| s + "\n")
            .map_err(|e| CliError::io("serializing output", e)),
        Format::Csv => {
            let mut w = csv::Writer::from_writer(Vec::new());
            for r in rows {
                w.serialize(r).map_err(|e| CliError::io("serializing output", e))?;
            }
            let bytes = w.into_inner().map_err(|e| CliError::io("serializing output", e))?;
            String::from_utf8(bytes).map_err(|e| CliError::io("serializing output", e))
        }
    }
}

fn check_grid(name: &str, grid: &[f64]) -> Result<(), CliError> {
    if grid.is_empty() {
        return Err(CliError::usage(format!("the {name} grid is empty")));
    }
    Ok(())
}

fn check_reps(reps: usize) -> Result<(), CliError> {
    if reps == 0 {
        return Err(CliError::usage("--reps must be positive"));
    }
    Ok(())
}

fn cmd_risk_curve(args: &RiskCurveArgs, cfg: &RunConfig) -> Result<Output, CliError> {
    check_grid("c", &args.c.0)?;
    check_reps(cfg.reps)?;
    let rows = risk_curve(&RiskCurveConfig {
        v_x: args.vx,
        v_y: args.vy,
        dims: args.p.clone(),
        estimators: args.prior.clone(),
        ray: Ray::from(args.ray),
        c_grid: args.c.0.clone(),
        replicates: cfg.reps,
        seed: cfg.seed,
    })?;
    Ok(Output {
        body: render(&rows, cfg.format)?,
        summary: Some(curve_summary(&rows)),
    })
}

/// Per curve: the smallest gap with its location, and the largest standard error.
fn curve_summary(rows: &[RiskCurveRow]) -> String {
    let mut out = String::new();
    let mut start = 0;
    while start < rows.len() {
        let key = (&rows[start].estimator, rows[start].p);
        let end = start + rows[start..].iter().take_while(|r| (&r.estimator, r.p) == key).count();
        let curve = &rows[start..end];
        let min = curve.iter().min_by(|a, b| a.gap.total_cmp(&b.gap)).expect("nonempty curve");
        let max_se = curve.iter().map(|r| r.se).fold(0.0, f64::max);
        let verdict = if curve.iter().all(|r| r.gap >= -2.0 * r.se) {
            "nonnegative within 2 SE"
        } else {
            "NEGATIVE beyond 2 SE"
        };
        out.push_str(&format!(
            "{} p={}: min gap {:.6} at c={} (SE {:.2e}); max SE {:.2e}; {verdict}\n",
            key.0, key.1, min.gap, min.c, min.se, max_se
        ));
        start = end;
    }
    out
}

fn prior_only(template: &EstimatorTemplate, p: usize, v_x: f64, what: &str) -> Result<Prior, CliError> {
    match template.instantiate(p, v_x)? {
        Instance::Prior(prior) => Ok(prior),
        Instance::EmpiricalBayes { .. } => Err(CliError::usage(format!("{what} needs a prior, not `{template}`"))),
    }
}

#[derive(Serialize)]
struct PanelRow {
    panel: usize,
    y1: f64,
    y2: f64,
    p_uniform: f64,
    p_bayes: f64,
}

fn cmd_density_slice(args: &DensitySliceArgs, cfg: &RunConfig) -> Result<Output, CliError> {
    check_grid("y1", &args.y1.0)?;
    check_grid("y2", &args.y2.0)?;
    let axes: [usize; 2] = args
        .axes
        .as_slice()
        .try_into()
        .map_err(|_| CliError::usage("--axes needs exactly two coordinates"))?;
    let model = ModelConfig::new(args.p, args.vx, args.vy)?;
    let prior = prior_only(&args.prior, args.p, args.vx, "density-slice")?;
    let mut rows = Vec::new();
    for (panel, x) in args.x.iter().enumerate() {
        let slice = density_slice(&DensitySliceConfig {
            model,
            prior: prior.clone(),
            x: x.0.clone(),
            axes,
            y1: args.y1.0.clone(),
            y2: args.y2.0.clone(),
        })?;
        rows.extend(slice.into_iter().map(|r: SliceRow| PanelRow {
            panel,
            y1: r.y1,
            y2: r.y2,
            p_uniform: r.p_uniform,
            p_bayes: r.p_bayes,
        }));
    }
    Ok(Output {
        body: render(&rows, cfg.format)?,
        summary: None,
    })
}

#[derive(Serialize)]
struct EstimateRow<'a> {
    estimator: &'a str,
    index: usize,
    value: f64,
    at_target: bool,
}

fn mean_estimator(name: &str, p: usize, v: f64) -> Result<MeanEstimator, CliError> {
    let est = match name {
        "mle" => MeanEstimator::Mle,
        "js" => MeanEstimator::james_stein(p, false)?,
        "js+" => MeanEstimator::james_stein(p, true)?,
        "lindley" => MeanEstimator::lindley(p, false)?,
        "lindley+" => MeanEstimator::lindley(p, true)?,
        other => {
            let template: EstimatorTemplate = other.parse()?;
            match prior_only(&template, p, v, "a posterior mean")? {
                Prior::Mixture(m) => MeanEstimator::MultipleShrinkage { prior: m },
                prior => MeanEstimator::BayesMean { prior },
            }
        }
    };
    Ok(est)
}

fn cmd_estimate(args: &EstimateArgs, cfg: &RunConfig) -> Result<Output, CliError> {
    let x = &args.x.0;
    let mut rows = Vec::new();
    for name in &args.estimator {
        let est = mean_estimator(name, x.len(), args.v)?;
        let e = estimate_mean_checked(&est, x, args.v)?;
        if e.value.iter().any(|u| !u.is_finite()) {
            return Err(CliError::numerical(format!("{name} produced a non-finite estimate")));
        }
        rows.extend(e.value.into_iter().enumerate().map(|(index, value)| EstimateRow {
            estimator: name,
            index,
            value,
            at_target: e.at_target,
        }));
    }
    Ok(Output {
        body: render(&rows, cfg.format)?,
        summary: None,
    })
}

#[derive(Debug, Serialize)]
struct ConditionRow {
    condition: &'static str,
    holds: bool,
    worst_value: f64,
    /// Variance (mean problem) or weight `w` (regression) of the worst point.
    worst_v: f64,
    worst_norm: f64,
    worst_point: Vec<f64>,
}

impl ConditionRow {
    fn new(condition: &'static str, c: &shrinkage::risk::Condition) -> Self {
        Self {
            condition,
            holds: c.holds,
            worst_value: c.worst.value,
            worst_v: c.worst.v,
            worst_norm: c.worst.z.iter().map(|u| u * u).sum::<f64>().sqrt(),
            worst_point: c.worst.z.clone(),
        }
    }
}

/// `d/dv log m = lap m / (2 m)` checked by central differences at `v_x`.
#[derive(Debug, Serialize)]
struct HeatCheck {
    points: usize,
    max_relative_error: f64,
    holds: bool,
}

#[derive(Debug, Serialize)]
struct IdentityRow {
    kl_gap: f64,
    kl_gap_se: f64,
    integrated_quadratic_gap: f64,
    integrated_quadratic_gap_se: f64,
    z_score: f64,
    holds: bool,
}

impl From<IdentityCheck> for IdentityRow {
    fn from(c: IdentityCheck) -> Self {
        Self {
            kl_gap: c.lhs.mean,
            kl_gap_se: c.lhs.std_error,
            integrated_quadratic_gap: c.rhs.mean,
            integrated_quadratic_gap_se: c.rhs.std_error,
            z_score: c.z_score(),
            holds: c.z_score() <= 3.0,
        }
    }
}

#[derive(Debug, Serialize)]
struct DiagnoseReport {
    problem: &'static str,
    prior: String,
    p: usize,
    points: usize,
    conditions: Vec<ConditionRow>,
    /// Either condition suffices for minimaxity.
    minimax: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    heat_equation: Option<HeatCheck>,
    #[serde(skip_serializing_if = "Option::is_none")]
    identity: Option<IdentityRow>,
}

const HEAT_POINTS: usize = 20;
const HEAT_TOLERANCE: f64 = 1e-5;

fn heat_check(prior: &Prior, points: &[Vec<f64>], v: f64) -> Result<HeatCheck, CliError> {
    let h = 1e-4 * v;
    let mut worst: f64 = 0.0;
    let used = &points[..points.len().min(HEAT_POINTS)];
    for z in used {
        let e = marginal_eval(prior, z, v)?;
        let up = marginal_eval(prior, z, v + h)?.log_m;
        let down = marginal_eval(prior, z, v - h)?.log_m;
        let fd = (up - down) / (2.0 * h);
        let exact = 0.5 * e.laplacian_m_over_m;
        let err = (fd - exact).abs() / exact.abs().max(1e-3);
        if !err.is_finite() {
            return Err(CliError::numerical("non-finite heat-equation residual"));
        }
        worst = worst.max(err);
    }
    Ok(HeatCheck {
        points: used.len(),
        max_relative_error: worst,
        holds: worst <= HEAT_TOLERANCE,
    })
}

fn cmd_diagnose(args: &DiagnoseArgs, cfg: &RunConfig) -> Result<Output, CliError> {
    if args.points == 0 || args.v_grid == 0 {
        return Err(CliError::usage("--points and --v-grid must be positive"));
    }
    let p = args.design.as_ref().map_or(args.p, LinearModel::p);
    let points = scan_points(p, args.points, args.radius, &mut block_rng(cfg.seed, 0, 0));
    let report = match &args.design {
        None => {
            let model = ModelConfig::new(p, args.vx, args.vy)?;
            let prior = prior_only(&args.prior, p, args.vx, "diagnose")?;
            let scan: MinimaxReport = minimaxity_scan(&prior, &model, &points, args.v_grid, args.tolerance)?;
            let identity = if args.identity {
                check_reps(cfg.reps)?;
                Some(risk_identity_check(&prior, &model, &vec![0.0; p], 16, cfg.reps, cfg.seed)?.into())
            } else {
                None
            };
            DiagnoseReport {
                problem: "mean",
                prior: args.prior.to_string(),
                p,
                points: scan.points,
                minimax: scan.superharmonic_m.holds || scan.superharmonic_sqrt_m.holds,
                conditions: vec![
                    ConditionRow::new("superharmonic_m", &scan.superharmonic_m),
                    ConditionRow::new("superharmonic_sqrt_m", &scan.superharmonic_sqrt_m),
                ],
                heat_equation: Some(heat_check(&prior, &points, args.vx)?),
                identity,
            }
        }
        Some(design) => {
            if args.identity {
                return Err(CliError::usage("--identity applies to the mean problem only"));
            }
            let prior = RegressionPrior::new(
                prior_only(&args.prior, p, 1.0, "diagnose")?,
                args.scaling.into(),
            );
            let w_grid: Vec<f64> = if args.v_grid == 1 {
                vec![1.0]
            } else {
                (0..args.v_grid).map(|i| i as f64 / (args.v_grid - 1) as f64).collect()
            };
            let scan: TraceReport = trace_condition_check(&prior, design, &points, &w_grid, args.tolerance)?;
            DiagnoseReport {
                problem: "regression",
                prior: args.prior.to_string(),
                p,
                points: scan.points,
                minimax: scan.condition_m.holds || scan.condition_sqrt_m.holds,
                conditions: vec![
                    ConditionRow::new("trace_m", &scan.condition_m),
                    ConditionRow::new("trace_sqrt_m", &scan.condition_sqrt_m),
                ],
                heat_equation: None,
                identity: None,
            }
        }
    };
    let body = match cfg.format {
        Format::Json => serde_json::to_string_pretty(&report).map_err(|e| CliError::io("serializing report", e))? + "\n",
        Format::Csv => {
            #[derive(Serialize)]
            struct Flat<'a> {
                condition: &'a str,
                holds: bool,
                worst_value: f64,
                worst_v: f64,
                worst_norm: f64,
            }
            let flat: Vec<Flat> = report
                .conditions
                .iter()
                .map(|c| Flat {
                    condition: c.condition,
                    holds: c.holds,
                    worst_value: c.worst_value,
                    worst_v: c.worst_v,
                    worst_norm: c.worst_norm,
                })
                .collect();
            render(&flat, Format::Csv)?
        }
    };
    let mut summary = String::new();
    for c in &report.conditions {
        summary.push_str(&format!(
            "{}: {} (worst {:.3e} at |z|={:.3}, v={:.3})\n",
            c.condition,
            if c.holds { "PASS" } else { "FAIL" },
            c.worst_value,
            c.worst_norm,
            c.worst_v
        ));
    }
    if let Some(h) = &report.heat_equation {
        summary.push_str(&format!(
            "heat_equation: {} (max relative error {:.2e} over {} points)\n",
            if h.holds { "PASS" } else { "FAIL" },
            h.max_relative_error,
            h.points
        ));
    }
    if let Some(i) = &report.identity {
        summary.push_str(&format!(
            "identity: {} (z = {:.2})\n",
            if i.holds { "PASS" } else { "FAIL" },
            i.z_score
        ));
    }
    Ok(Output {
        body,
        summary: Some(summary),
    })
}

#[derive(Serialize)]
struct RegressRow {
    c: f64,
    estimator: String,
    gap: f64,
    se: f64,
    replicates: usize,
    seed: u64,
}

fn cmd_regress_curve(args: &RegressCurveArgs, cfg: &RunConfig) -> Result<Output, CliError> {
    check_grid("c", &args.c.0)?;
    check_reps(cfg.reps)?;
    let p = args.design.p();
    let direction = match &args.direction {
        Some(d) if d.0.len() != p => {
            return Err(CliError::usage(format!("--direction has {} entries, the design has p = {p}", d.0.len())))
        }
        Some(d) => d.0.clone(),
        None => vec![1.0; p],
    };
    let mut rows = Vec::new();
    for template in &args.prior {
        let prior = RegressionPrior::new(prior_only(template, p, 1.0, "regress-curve")?, args.scaling.into());
        for &c in &args.c.0 {
            let beta: Vec<f64> = direction.iter().map(|d| c * d).collect();
            let gap = kl_gap_reg_mc(&prior, &args.design, &beta, cfg.reps, cfg.seed)?;
            rows.push(RegressRow {
                c,
                estimator: template.to_string(),
                gap: gap.mean,
                se: gap.std_error,
                replicates: cfg.reps,
                seed: cfg.seed,
            });
        }
    }
    let mut summary = String::new();
    for template in &args.prior {
        let name = template.to_string();
        let curve: Vec<&RegressRow> = rows.iter().filter(|r| r.estimator == name).collect();
        let min = curve.iter().min_by(|a, b| a.gap.total_cmp(&b.gap)).expect("nonempty curve");
        summary.push_str(&format!("{name}: min gap {:.6} at c={} (SE {:.2e})\n", min.gap, min.c, min.se));
    }
    Ok(Output {
        body: render(&rows, cfg.format)?,
        summary: Some(summary),
    })
}
