//! One function per subcommand. Each returns an error for validation and
//! numerical failures alike; the caller maps errors to exit codes.

use std::f64::consts::PI;
use std::sync::Arc;

use serde::Serialize;

use isolab::analysis::*;
use isolab::cones::*;
use isolab::domain::{voxelize, Body, Domain, VoxelGrid, VoxelSet, Window};
use isolab::measures::*;
use isolab::optimize::{optimize_in_window, profile_estimate, ProfileCurve};
use isolab::phi::*;

use crate::config::RunConfig;
use crate::output::{announce, Outputs};
use crate::CliError;

fn contract(ok: bool, what: impl FnOnce() -> String) -> Result<(), CliError> {
    if ok {
        Ok(())
    } else {
        Err(CliError::Contract(what()))
    }
}

pub fn build_phi(cfg: &RunConfig) -> Result<(), CliError> {
    let out = Outputs::open(cfg, "build-phi")?;
    let rate = cfg.rate()?;
    let smoothed = smooth_rate(&rate)?;
    let forward = solve_phi(&smoothed, cfg.t_max, cfg.solve_options())?;
    let curve = extend_phi(&forward, cfg.t_min)?;
    let report = verify_phi(&curve, &rate);
    if report.vacuous {
        log::warn!("curve has too few nodes for the decay check; verification is vacuous");
    }
    announce(&out.csv("phi.csv", |w, meta| curve.write_csv(w, meta))?);
    announce(&out.json("phi_report.json", &report)?);
    contract(report.all_pass(), || format!("phi verification failed: {report:?}"))
}

#[derive(Serialize)]
struct ProfileSummary {
    preset: String,
    reference: &'static str,
    deviations: Vec<f64>,
    max_deviation: f64,
    profile_tolerance: f64,
    concavity: ConcavityReport,
    ordering: OrderingReport,
    scaling_max_rel_deviation: f64,
    scaling_tolerance: f64,
    passes: bool,
}

pub fn profile(cfg: &RunConfig) -> Result<(), CliError> {
    let cone = cfg.cone()?;
    let exact: Box<dyn Fn(f64) -> f64> = match cfg.preset.as_str() {
        "half-space" => Box::new(|v| half_space_profile(v).expect("positive volume")),
        "wedge" => Box::new(move |v| wedge_profile_exact(&cone, v).expect("positive volume")),
        "free" => Box::new(|v| free_space_profile(v).expect("positive volume")),
        other => {
            return Err(CliError::Config(format!(
                "unknown preset `{other}` (expected half-space, wedge or free)"
            )))
        }
    };
    let domain = match cfg.preset.as_str() {
        "half-space" => Domain::HalfSpace,
        "wedge" => Domain::Body(Body::wedge(cone)?),
        _ => Domain::Free,
    };
    let out = Outputs::open(cfg, "profile")?;
    let vs = cfg.volume_grid()?;
    let mut curve = ProfileCurve { rows: Vec::new() };
    for &v in &vs {
        // grow the window when the reference minimiser would not fit in it
        let r = reference_radius(&cfg.preset, cfg.half_angle, v);
        let windows = cfg
            .profile_t0
            .iter()
            .map(|&t0| Window::new(t0, cfg.window_extent.max(2.4 * r), cfg.window_radial_bound.max(1.2 * r)))
            .collect::<isolab::Result<Vec<_>>>()?;
        let (part, _) = profile_estimate(&domain, &[v], &windows, &cfg.optimizer())?;
        curve.rows.extend(part.rows);
    }
    announce(&out.csv("profile.csv", |w, meta| curve.write_csv(w, meta))?);

    let deviations: Vec<f64> = curve.rows.iter().map(|r| r.per / exact(r.v) - 1.0).collect();
    let max_deviation = deviations.iter().fold(0.0f64, |m, d| m.max(d.abs()));
    let concavity = concavity_check(&curve, 3, cfg.tolerance)?;
    // the exact profile is a lower bound; the optimizer result an upper bound
    let ordering = ordering_check(&curve, Some(&*exact), None, cfg.tolerance);
    let samples: Vec<(f64, f64)> = curve.rows.iter().map(|r| (r.v, r.per)).collect();
    let scaling = cone_scaling_check(&samples, 3)?;
    let passes = max_deviation <= cfg.profile_tolerance
        && concavity.passes
        && ordering.holds
        && scaling.max_rel_deviation <= cfg.scaling_tolerance;
    let summary = ProfileSummary {
        preset: cfg.preset.clone(),
        reference: match cfg.preset.as_str() {
            "half-space" => "half ball",
            "wedge" => "ball sector on the edge",
            _ => "ball",
        },
        deviations,
        max_deviation,
        profile_tolerance: cfg.profile_tolerance,
        concavity,
        ordering,
        scaling_max_rel_deviation: scaling.max_rel_deviation,
        scaling_tolerance: cfg.scaling_tolerance,
        passes,
    };
    announce(&out.json("profile_summary.json", &summary)?);
    println!("max deviation from the closed form: {:.4}", summary.max_deviation);
    contract(passes, || "profile checks failed; see profile_summary.json".into())
}

/// Radius of the closed-form minimiser of volume `v` for a preset.
fn reference_radius(preset: &str, half_angle: f64, v: f64) -> f64 {
    let opening = match preset {
        "half-space" => PI,
        "wedge" => 2.0 * half_angle,
        _ => 2.0 * PI,
    };
    dihedral_sector_radius(opening, v)
}

#[derive(Serialize)]
struct A3Summary {
    alpha: f64,
    a3: f64,
    none_accepted: bool,
}

fn run_a3(cfg: &RunConfig, out: &Outputs) -> Result<Vec<A3Estimate>, CliError> {
    let cone = cfg.cone()?;
    let exp = cfg.experiment();
    if cfg.alphas.is_empty() {
        return Err(CliError::Config("alphas is empty".into()));
    }
    let mut all = Vec::with_capacity(cfg.alphas.len());
    for &alpha in &cfg.alphas {
        let est = estimate_a3(&cone, alpha, &cfg.slopes, &exp)?;
        let name = format!("a3_alpha_{}.csv", fmt_key(alpha));
        announce(&out.csv(&name, |w, meta| est.write_csv(w, meta))?);
        println!("alpha {alpha}: a3 {}", est.a3);
        all.push(est);
    }
    let rows: Vec<A3Summary> = all
        .iter()
        .map(|e| A3Summary {
            alpha: e.alpha,
            a3: e.a3,
            none_accepted: e.none_accepted,
        })
        .collect();
    announce(&out.json("a3_summary.json", &rows)?);
    Ok(all)
}

/// `0.25` → `0p25`, for file names.
fn fmt_key(x: f64) -> String {
    isolab::tables::fmt_f64(x).replace('.', "p").replace('-', "m")
}

pub fn estimate_a3_cmd(cfg: &RunConfig) -> Result<(), CliError> {
    if cfg.slopes.is_empty() {
        return Err(CliError::Config("slope grid is empty".into()));
    }
    let out = Outputs::open(cfg, "estimate-a3")?;
    run_a3(cfg, &out).map(|_| ())
}

#[derive(Serialize)]
struct EscapeSummary<'a> {
    rate: RateSpec,
    report: &'a EscapeReport,
    verdict: &'static str,
}

pub fn escape(cfg: &RunConfig) -> Result<(), CliError> {
    let out = Outputs::open(cfg, "escape")?;
    let rate = if cfg.escape_rate == "paper" {
        let est = run_a3(cfg, &out)?;
        // heights with no accepted slope carry no information about the rate
        let table: Vec<(f64, f64)> = est.iter().filter(|e| e.a3 > 0.0).map(|e| (e.alpha, e.a3)).collect();
        if table.is_empty() {
            return Err(CliError::Contract("no height admitted a positive slope constant".into()));
        }
        paper_rate(&table, cfg.paper_clamp)?
    } else {
        cfg.rate()?
    };
    let forward = solve_phi(&smooth_rate(&rate)?, cfg.escape_t_max, cfg.solve_options())?;
    let curve = extend_phi(&forward, cfg.escape_t_min)?;
    announce(&out.csv("phi.csv", |w, meta| curve.write_csv(w, meta))?);
    let body = Body::new(cfg.cone()?, curve)?;
    let report = escape_experiment(&body, &cfg.escape_t0, &cfg.experiment())?;
    announce(&out.csv("escape.csv", |w, meta| report.write_csv(w, meta))?);
    let summary = EscapeSummary {
        rate,
        report: &report,
        verdict: report.verdict(),
    };
    announce(&out.json("escape_summary.json", &summary)?);
    println!("{}", report.verdict());
    contract(report.gaps_positive && report.nonincreasing, || {
        format!(
            "escape signature missing (gaps_positive {}, nonincreasing {})",
            report.gaps_positive, report.nonincreasing
        )
    })
}

#[derive(Serialize)]
struct CheckItem {
    name: &'static str,
    passed: bool,
    detail: String,
}

fn ball_grid(domain: Domain, lo: [f64; 3], hi: [f64; 3], h: f64) -> isolab::Result<Arc<VoxelGrid>> {
    Ok(Arc::new(VoxelGrid::boxed(domain, lo, hi, h)?))
}

fn unit_ball(g: &Arc<VoxelGrid>) -> VoxelSet {
    VoxelSet::from_predicate(g, |p| p[0] * p[0] + p[1] * p[1] + p[2] * p[2] <= 1.0)
}

/// A fast pass over every module's invariants at coarse resolution.
pub fn check(cfg: &RunConfig) -> Result<(), CliError> {
    let out = Outputs::open(cfg, "check")?;
    let mut items = Vec::new();
    let mut push = |name, passed, detail: String| {
        println!("{} {name}: {detail}", if passed { "PASS" } else { "FAIL" });
        items.push(CheckItem { name, passed, detail });
    };

    // rate → profile curve against separable closed forms
    for (name, coeff, exact) in [
        ("phi_power_1", 1.0, (|t: f64| 2.0 / (t + 2.0)) as fn(f64) -> f64),
        ("phi_power_2", 2.0, |t: f64| 1.0 / (1.0 + t)),
    ] {
        let c = solve_phi(&smooth_rate(&RateSpec::power(coeff, 1.0))?, 10.0, SolveOptions::default())?;
        let err = c.t().iter().zip(c.phi_values()).map(|(&t, &p)| (p - exact(t)).abs()).fold(0.0, f64::max);
        push(name, err <= 1e-6, format!("max abs error {err:.3e}"));
    }
    let bad = RateSpec::Table {
        points: vec![[0.5, 2.0], [1.0, 1.0]],
    };
    push("rate_rejects_decrease", bad.validate().is_err(), "decreasing table".into());

    // measures on the unit ball
    let g = ball_grid(Domain::Free, [-1.3; 3], [1.3; 3], 0.04)?;
    let b = unit_ball(&g);
    let dv = b.volume() / (4.0 * PI / 3.0) - 1.0;
    let da = relative_perimeter_default(&b).value / (4.0 * PI) - 1.0;
    push("ball_volume", dv.abs() <= VOLUME_REL_TOL, format!("rel error {dv:.4}"));
    push("ball_area", da.abs() <= PERIMETER_REL_TOL, format!("rel error {da:.4}"));

    // enlargement flow of a ball
    let g = ball_grid(Domain::Free, [-2.4; 3], [2.4; 3], 0.05)?;
    let rs: Vec<f64> = (-2..=4).map(|i| i as f64 * 0.25).collect();
    let trace = flow_trace(&unit_ball(&g), &rs)?;
    let s2 = step2_check(&trace, 2.0, 3, PERIMETER_REL_TOL)?;
    let mx = maximality_check(&trace, 2.0, 3, power_tolerance(3))?;
    push("flow_step2", s2.holds, format!("worst excess {:.4}", s2.worst_excess));
    push(
        "flow_maximality",
        mx.holds && mx.ratio_holds,
        format!("flatness {:.4}", mx.flatness),
    );

    // profile analysis on synthetic curves
    let vs: Vec<f64> = (1..=40).map(|i| i as f64 * 0.1).collect();
    let synth: Vec<(f64, f64)> = vs.iter().map(|&v| (v, v.min((v + 1.0) / 2.0).powf(2.0 / 3.0))).collect();
    let synth = ProfileCurve::from_samples(&synth)?;
    let th = threshold_detect(&synth, 1.0, 1e-9, 3)?;
    push("threshold", (th.v0 - 1.0).abs() <= 0.1, format!("v0 {:.4}", th.v0));
    let conc = concavity_check(&synth, 3, 0.0)?;
    push("concavity", conc.passes, "min of lines".into());

    // optimizer on the wedge
    let cone = cfg.cone()?;
    let exact = wedge_profile_exact(&cone, 1.0)?;
    let mut opt = cfg.optimizer();
    opt.spacing = 0.08;
    opt.budget = opt.budget.min(5_000);
    let w = Window::new(0.0, cfg.window_extent, cfg.window_radial_bound)?;
    let p = optimize_in_window(&Domain::Body(Body::wedge(cone)?), &w, 1.0, &opt)?;
    let dev = p.per / exact - 1.0;
    push("wedge_optimizer", dev.abs() <= 0.05, format!("rel deviation {dev:.4}"));
    let g = voxelize(&Domain::HalfSpace, &w, 0.1)?;
    push(
        "capacity_guard",
        isolab::optimize::seed_candidates(&g, 1e3, 2).is_err(),
        "oversized volume rejected".into(),
    );

    let failed: Vec<&str> = items.iter().filter(|i| !i.passed).map(|i| i.name).collect();
    announce(&out.json("check.json", &items)?);
    contract(failed.is_empty(), || format!("failed checks: {}", failed.join(", ")))
}
