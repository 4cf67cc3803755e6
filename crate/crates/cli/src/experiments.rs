//! One function per experiment; each returns its report fields, tables, plots and summary.

use std::fmt::Write as _;

use serde_json::{json, Map, Value};

use csl_core::bounds::{
    check_shifted_lower_bound, check_shifted_phi, checks_csv, chernoff_bound, chernoff_domination,
    distribution_law_tests, shifted_tail_excess_ratio, CheckRow, LawParams,
};
use csl_core::conditioning::{
    default_doob_bins, doob_identity_check_with, explosion_jump_check, phi_infinity_and_explosion,
    qh_estimate, sample_conditioned, DoobBudget, ExplosionOptions, PhiVerdict,
};
use csl_core::crossing::{asymptotic_diagnostics, estimate_crossing, sample_sigmas, violation_time, CrossingScenario};
use csl_core::envelope::{envelope_criterion, envelope_empirical, envelope_empirical_many, Growth};
use csl_core::levy::{
    classify_transience, t0, validate_regularity, BoundaryPair, ClassifyOptions, RegularityCase, RegularityOptions,
    SubordinatorModel, TransienceVerdict,
};
use csl_core::path::{sample_path, JumpSampler, SamplePath};
use csl_core::report::{fmt_num, CsvTable};
use csl_core::rng::McEngine;

use crate::config::{Experiment, ScenarioConfig};
use crate::svg::{LinePlot, Scale, Series};
use crate::{CliError, REPORT_VERSION};

/// Everything an experiment produced; written out by [`crate::output::write_outcome`].
#[derive(Debug)]
pub struct RunOutcome {
    pub experiment: Experiment,
    pub report: Map<String, Value>,
    pub csvs: Vec<(String, CsvTable)>,
    pub plots: Vec<(String, LinePlot)>,
    pub files: Vec<(String, String)>,
    pub summary: String,
    /// The experiment's own pass criterion failed (exit status 1).
    pub failed: bool,
}

impl RunOutcome {
    fn new(experiment: Experiment) -> Self {
        RunOutcome {
            experiment,
            report: Map::new(),
            csvs: Vec::new(),
            plots: Vec::new(),
            files: Vec::new(),
            summary: String::new(),
            failed: false,
        }
    }

    fn set(&mut self, key: &str, v: Value) {
        self.report.insert(key.to_string(), v);
    }

    fn line(&mut self, s: impl AsRef<str>) {
        self.summary.push_str(s.as_ref());
        self.summary.push('\n');
    }
}

fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    let n = n.max(2);
    (0..n)
        .map(|j| (lo.ln() + (hi.ln() - lo.ln()) * j as f64 / (n - 1) as f64).exp())
        .collect()
}

fn slug(s: &str) -> String {
    s.chars().map(|c| if c.is_ascii_alphanumeric() { c } else { '_' }).collect()
}

/// Runs one experiment in memory.
pub fn run_scenario(cfg: &ScenarioConfig, experiment: Experiment) -> Result<RunOutcome, CliError> {
    let engine = McEngine::new(cfg.seed, cfg.workers);
    let mut out = RunOutcome::new(experiment);
    out.line(format!("csl {} (seed {})", experiment.name(), cfg.seed));
    match experiment {
        Experiment::Classify => classify(cfg, &mut out)?,
        Experiment::Crossing => crossing(cfg, &engine, &mut out)?,
        Experiment::Doob => doob(cfg, &engine, &mut out)?,
        Experiment::Qh => qh(cfg, &engine, &mut out)?,
        Experiment::Explosion => explosion(cfg, &engine, &mut out)?,
        Experiment::Envelope => envelope(cfg, &engine, &mut out)?,
        Experiment::Bounds => bounds(cfg, &engine, &mut out)?,
        Experiment::Selftest => selftest(&engine, &mut out)?,
    }
    out.set("version", json!(REPORT_VERSION));
    out.set("experiment", json!(experiment.name()));
    out.set("seed", json!(cfg.seed));
    out.set("status", json!(if out.failed { "verdict-failure" } else { "ok" }));
    out.line(format!("status: {}", if out.failed { "VERDICT FAILURE" } else { "ok" }));
    Ok(out)
}

fn scenario_json(cfg: &ScenarioConfig) -> Value {
    json!({
        "model": format!("{:?}", cfg.model.kind).to_lowercase(),
        "alpha": cfg.model.alpha,
        "c": cfg.model.c,
        "boundary": format!("{:?}", cfg.boundary.kind).to_lowercase(),
        "gamma": cfg.boundary.gamma,
        "log_power": cfg.boundary.log_power,
        "offset": cfg.boundary.offset,
    })
}

fn classify(cfg: &ScenarioConfig, out: &mut RunOutcome) -> Result<(), CliError> {
    let model = cfg.build_model()?;
    let boundary = cfg.build_boundary()?;
    let opts = ClassifyOptions {
        rel_tol: cfg.classify.rel_tol,
        max_upper: cfg.classify.max_upper,
        ..ClassifyOptions::default()
    };
    let rep = classify_transience(&model, &boundary, &opts)?;
    out.set("scenario", scenario_json(cfg));
    out.set("verdict", json!(rep.verdict.label()));
    match &rep.verdict {
        TransienceVerdict::Transient { integral } => {
            out.set("integral", json!(integral));
            out.line(format!("verdict: Transient, I(f) = {}", fmt_num(*integral)));
        }
        TransienceVerdict::Recurrent => out.line("verdict: Recurrent"),
        TransienceVerdict::Indeterminate { reason } => {
            out.set("reason", json!(reason));
            out.line(format!("verdict: Indeterminate ({reason})"));
        }
    }
    out.set("partial_integral", json!(rep.partial_integral));
    out.set("upper_limit", json!(rep.upper_limit));
    out.set("tail_slope", json!(rep.tail_slope));
    out.set("log_scale_slope", json!(rep.log_scale_slope));
    out.line(format!(
        "partial integral {} up to {}; integrand slope {}",
        fmt_num(rep.partial_integral),
        fmt_num(rep.upper_limit),
        fmt_num(rep.tail_slope)
    ));

    if !cfg.classify.case.is_empty() {
        let case: RegularityCase = cfg.classify.case.parse().map_err(CliError::Config)?;
        let reg = validate_regularity(&model, &boundary, case, &RegularityOptions::default());
        let checks: Vec<Value> = reg
            .checks
            .iter()
            .map(|c| json!({"name": c.name, "verdict": format!("{:?}", c.verdict), "statistic": c.statistic, "note": c.note}))
            .collect();
        out.set(
            "regularity",
            json!({"case": format!("{:?}", reg.case_id), "verdict": format!("{:?}", reg.verdict), "tail_index": reg.tail_index, "checks": checks}),
        );
        out.line(format!("regularity {:?}: {:?}", reg.case_id, reg.verdict));
        for c in &reg.checks {
            out.line(format!("  {}: {:?} ({})", c.name, c.verdict, c.note));
        }
    }

    let lo = boundary.f(1.0).max(1e-3);
    let hi = rep.upper_limit.min(lo * 1e12).max(lo * 10.0);
    let mut table = CsvTable::new(&["y", "integrand"]);
    let mut pts = Vec::new();
    for y in log_grid(lo, hi, cfg.classify.curve_points) {
        let v = model.tail(boundary.g(y).max(1.0));
        table.push_nums(&[y, v]);
        pts.push((y, v));
    }
    out.csvs.push(("classify".into(), table));
    out.plots.push((
        "classify_integrand".into(),
        LinePlot::new("Integrand of I(f)", "y", "tail(g(y))", Scale::Log, Scale::Log).with(Series::new("tail(g(y))", pts)),
    ));
    Ok(())
}

fn crossing(cfg: &ScenarioConfig, engine: &McEngine, out: &mut RunOutcome) -> Result<(), CliError> {
    let scenario = cfg.build_scenario()?;
    let sim = &cfg.simulation;
    let u_grid = sim
        .u_grid
        .clone()
        .unwrap_or_else(|| log_grid(sim.horizon * 1e-2, sim.horizon, 40));
    let est = estimate_crossing(&scenario, &u_grid, sim.n, engine)?;
    let mut table = CsvTable::new(&["u", "p_o", "p_o_se", "phi", "phi_se"]);
    for p in &est.points {
        table.push_nums(&[p.u, p.survival.value, p.survival.std_error, p.phi.value, p.phi.std_error]);
    }
    out.set("scenario", scenario_json(cfg));
    out.set("n", json!(sim.n));
    out.set("jump_rate", json!(scenario.sampler.rate()));
    out.set("cutoff", json!(scenario.sampler.cutoff()));
    out.set(
        "points",
        Value::Array(
            est.points
                .iter()
                .map(|p| json!({"u": p.u, "p_o": p.survival.value, "p_o_se": p.survival.std_error, "phi": p.phi.value, "phi_se": p.phi.std_error}))
                .collect(),
        ),
    );
    let last = est.points.last().expect("nonempty grid");
    out.line(format!(
        "n = {}, jump rate {}, P(O_{}) = {} ± {}, Phi = {}",
        sim.n,
        fmt_num(scenario.sampler.rate()),
        fmt_num(last.u),
        fmt_num(last.survival.value),
        fmt_num(last.survival.std_error),
        fmt_num(last.phi.value)
    ));
    out.plots.push((
        "crossing_survival".into(),
        LinePlot::new("Survival probability", "u", "P(O_u)", Scale::Log, Scale::Log)
            .with(Series::new("P(O_u)", est.points.iter().map(|p| (p.u, p.survival.value)).collect())),
    ));
    out.plots.push((
        "crossing_phi".into(),
        LinePlot::new("Integrated survival", "u", "Phi(u)", Scale::Log, Scale::Log)
            .with(Series::new("Phi(u)", est.points.iter().map(|p| (p.u, p.phi.value)).collect())),
    ));
    out.csvs.push(("crossing".into(), table));

    if cfg.crossing.diagnostics {
        let grid = sim.t_grid.clone().unwrap_or_else(|| sim.t_schedule.clone());
        let d = asymptotic_diagnostics(&scenario, &grid, sim.n, engine)?;
        out.set(
            "diagnostics",
            Value::Array(
                d.rows
                    .iter()
                    .map(|r| json!({"t": r.t, "ratio": r.ratio, "ratio_se": r.ratio_se, "phi_recon_over_phi": r.phi_recon / r.phi, "small_count": r.small_count}))
                    .collect(),
            ),
        );
        for r in &d.rows {
            out.line(format!(
                "  t = {}: ratio {} ± {}, recon/phi {}{}",
                fmt_num(r.t),
                fmt_num(r.ratio),
                fmt_num(r.ratio_se),
                fmt_num(r.phi_recon / r.phi),
                if r.small_count { " (few survivors)" } else { "" }
            ));
        }
        out.plots.push((
            "diagnostics_ratio".into(),
            LinePlot::new("P(O_t) / (tail(g(t)) Phi(t))", "t", "ratio", Scale::Log, Scale::Linear)
                .with(Series::new("ratio", d.rows.iter().map(|r| (r.t, r.ratio)).collect()))
                .with(Series::new("1", d.rows.iter().map(|r| (r.t, 1.0)).collect())),
        ));
        out.plots.push((
            "diagnostics_phi".into(),
            LinePlot::new("Phi and its reconstruction", "t", "Phi", Scale::Log, Scale::Log)
                .with(Series::new("Phi", d.rows.iter().map(|r| (r.t, r.phi)).collect()))
                .with(Series::new("reconstruction", d.rows.iter().map(|r| (r.t, r.phi_recon)).collect())),
        ));
        out.csvs.push(("diagnostics".into(), d.to_csv()));
    }

    for i in 0..cfg.crossing.dump_paths {
        let mut rng = engine.stream("path-dump", i).rng();
        let path = sample_path(&scenario.sampler, sim.horizon, &mut rng)?;
        let mut buf = Vec::new();
        path.write_csv(&mut buf)?;
        out.files.push((format!("path_{i}.csv"), String::from_utf8(buf).expect("CSV is UTF-8")));
    }
    Ok(())
}

fn doob(cfg: &ScenarioConfig, engine: &McEngine, out: &mut RunOutcome) -> Result<(), CliError> {
    let scenario = cfg.build_scenario()?;
    let sim = &cfg.simulation;
    let edges = match &cfg.doob.edges {
        Some(e) => e.clone(),
        None => default_doob_bins(&scenario.boundary, sim.h, sim.horizon, sim.bins)?,
    };
    let budget = DoobBudget {
        conditioned: cfg.doob.n_conditioned.unwrap_or(10 * sim.n),
        ..DoobBudget::uniform(sim.n)
    };
    let rep = doob_identity_check_with(&scenario, sim.h, sim.horizon, &edges, budget, engine)?;
    let frac = rep.fraction_within();
    out.failed = frac < 0.9;
    out.set("scenario", scenario_json(cfg));
    out.set("h", json!(sim.h));
    out.set("horizon", json!(sim.horizon));
    out.set("n", json!(sim.n));
    out.set("n_conditioned", json!(budget.conditioned));
    out.set("accepted", json!(rep.accepted));
    out.set("p_total", json!(rep.p_total));
    out.set("p_at_h", json!(rep.p_at_h));
    out.set("occupied", json!(rep.occupied));
    out.set("within_3se", json!(rep.within_3se));
    out.set("fraction_within", json!(frac));
    out.set("lhs_mass", json!(rep.lhs_mass));
    out.set("verdict", json!(if out.failed { "fail" } else { "pass" }));
    out.line(format!(
        "h = {}, T = {}: {} conditioned paths of {}; {}/{} occupied bins within 3 SE ({:.0}%)",
        fmt_num(sim.h),
        fmt_num(sim.horizon),
        rep.accepted,
        budget.conditioned,
        rep.within_3se,
        rep.occupied,
        100.0 * frac
    ));
    for b in &rep.bins {
        out.line(format!(
            "  [{}, {}): lhs {} ± {}, rhs {} ± {}, z {}",
            fmt_num(b.bin_lo),
            fmt_num(b.bin_hi),
            fmt_num(b.lhs),
            fmt_num(b.lhs_se),
            fmt_num(b.rhs),
            fmt_num(b.rhs_se),
            fmt_num(b.z)
        ));
    }
    let x = |lo: f64, hi: f64| if hi.is_finite() { (lo * hi).sqrt() } else { 2.0 * lo };
    out.plots.push((
        "doob".into(),
        LinePlot::new("Conditioned law of X_h by bin", "y", "mass", Scale::Log, Scale::Linear)
            .with(Series::new("lhs", rep.bins.iter().map(|b| (x(b.bin_lo, b.bin_hi), b.lhs)).collect()))
            .with(Series::new("rhs", rep.bins.iter().map(|b| (x(b.bin_lo, b.bin_hi), b.rhs)).collect())),
    ));
    out.csvs.push(("doob".into(), rep.to_csv()));
    Ok(())
}

fn qh(cfg: &ScenarioConfig, engine: &McEngine, out: &mut RunOutcome) -> Result<(), CliError> {
    let scenario = cfg.build_scenario()?;
    let sim = &cfg.simulation;
    let g_h = scenario.boundary.g(sim.h);
    let ys = cfg
        .qh
        .ys
        .clone()
        .or_else(|| sim.y.map(|y| vec![y]))
        .unwrap_or_else(|| vec![2.0 * g_h.max(0.5)]);
    let mut table = CsvTable::new(&["T", "y", "numerator", "denominator", "ratio", "ratio_se"]);
    let mut plot = LinePlot::new("Shifted over unshifted survival", "T", "ratio", Scale::Log, Scale::Linear);
    let mut entries = Vec::new();
    out.line(format!("h = {}, g(h) = {}", fmt_num(sim.h), fmt_num(g_h)));
    for &y in &ys {
        let rep = qh_estimate(&scenario, sim.h, y, &sim.t_schedule, sim.n, engine)?;
        table.rows.extend(rep.to_csv().rows);
        plot = plot.with(Series::new(&format!("y = {}", fmt_num(y)), rep.rows.iter().map(|r| (r.t, r.ratio)).collect()));
        let settled = rep.trend.last().is_some_and(|s| s.settled);
        entries.push(json!({
            "y": y,
            "ratios": rep.rows.iter().map(|r| json!({"T": r.t, "ratio": r.ratio, "ratio_se": r.ratio_se})).collect::<Vec<_>>(),
            "settled": settled,
        }));
        let last = rep.rows.last().expect("nonempty schedule");
        out.line(format!(
            "  y = {}: ratio at T = {} is {} ± {}{}",
            fmt_num(y),
            fmt_num(last.t),
            fmt_num(last.ratio),
            fmt_num(last.ratio_se),
            if settled { " (settled)" } else { "" }
        ));
    }
    out.set("scenario", scenario_json(cfg));
    out.set("h", json!(sim.h));
    out.set("n", json!(sim.n));
    out.set("curves", Value::Array(entries));
    out.csvs.push(("qh".into(), table));
    out.plots.push(("qh".into(), plot));
    Ok(())
}

fn explosion(cfg: &ScenarioConfig, engine: &McEngine, out: &mut RunOutcome) -> Result<(), CliError> {
    let scenario = cfg.build_scenario()?;
    let sim = &cfg.simulation;
    let e = &cfg.explosion;
    let criterion = classify_transience(&scenario.model, &scenario.boundary, &ClassifyOptions::default())?.verdict;
    let opts = ExplosionOptions {
        plateau_tol: e.plateau_tol,
        t_start: e.t_start,
        doublings: e.doublings,
        min_survivors: e.min_survivors,
        cdf_points: e.cdf_points,
    };
    let rep = phi_infinity_and_explosion(&scenario, sim.n, engine, &opts, &criterion)?;
    out.failed = rep.consistent == Some(false);
    out.set("scenario", scenario_json(cfg));
    out.set("n", json!(sim.n));
    out.set("verdict", json!(rep.verdict.label()));
    out.set("criterion", json!(rep.criterion));
    out.set("consistent", json!(rep.consistent));
    match &rep.verdict {
        PhiVerdict::Converged { phi_inf, phi_inf_se, plateau_at } => {
            out.set("phi_inf", json!(phi_inf));
            out.set("phi_inf_se", json!(phi_inf_se));
            out.set("plateau_at", json!(plateau_at));
            out.line(format!(
                "Phi converged: Phi(inf) = {} ± {} (plateau from t = {})",
                fmt_num(*phi_inf),
                fmt_num(*phi_inf_se),
                fmt_num(*plateau_at)
            ));
        }
        PhiVerdict::Divergent { resolved_until, last_increment } => {
            out.set("resolved_until", json!(resolved_until));
            out.set("last_increment", json!(last_increment));
            out.line(format!(
                "Phi divergent: relative increment {} per doubling, resolved until t = {}",
                fmt_num(*last_increment),
                fmt_num(*resolved_until)
            ));
        }
        PhiVerdict::Indeterminate { reason } => {
            out.set("reason", json!(reason));
            out.line(format!("Phi indeterminate: {reason}"));
        }
    }
    out.line(format!(
        "criterion I(f): {}; consistent: {}",
        rep.criterion,
        rep.consistent.map_or("n/a".to_string(), |c| c.to_string())
    ));

    let mut grid = CsvTable::new(&["t", "phi", "phi_se", "survivors", "rel_increment", "resolved"]);
    for p in &rep.grid {
        grid.push(vec![
            fmt_num(p.t),
            fmt_num(p.phi.value),
            fmt_num(p.phi.std_error),
            p.survivors.to_string(),
            fmt_num(p.rel_increment),
            p.resolved.to_string(),
        ]);
    }
    let mut plot = LinePlot::new("Integrated survival", "s", "Phi(s)", Scale::Log, Scale::Linear)
        .with(Series::new("Phi(s)", rep.phi_curve.clone()));
    if let Some(law) = &rep.law {
        out.plots.push((
            "explosion_law".into(),
            LinePlot::new("Explosion time CDF", "s", "F(s)", Scale::Log, Scale::Linear)
                .with(Series::new("F(s)", law.s.iter().copied().zip(law.cdf.iter().copied()).collect())),
        ));
        out.set("median", json!(law.quantile(0.5)));
        out.line(format!("explosion time median {}", fmt_num(law.quantile(0.5))));
        if let Some(h) = e.jump_check_h {
            let rows = explosion_jump_check(&scenario, law, h, &sim.t_schedule, sim.n, engine)?;
            let mut t = CsvTable::new(&["T", "accepted", "after_h", "after_h_se", "target", "z"]);
            for r in &rows {
                t.push(vec![
                    fmt_num(r.t),
                    r.accepted.to_string(),
                    fmt_num(r.after_h.value),
                    fmt_num(r.after_h.std_error),
                    fmt_num(r.target),
                    fmt_num(r.z),
                ]);
                out.line(format!(
                    "  T = {}: P(big jump after {} | O_T) = {} vs {} (z {})",
                    fmt_num(r.t),
                    fmt_num(h),
                    fmt_num(r.after_h.value),
                    fmt_num(r.target),
                    fmt_num(r.z)
                ));
            }
            out.csvs.push(("explosion_jump".into(), t));
        }
    }
    plot.title = format!("Integrated survival ({})", rep.verdict.label());
    out.plots.push(("explosion_phi".into(), plot));
    out.csvs.push(("explosion".into(), rep.to_csv()));
    out.csvs.push(("explosion_grid".into(), grid));
    Ok(())
}

fn envelope(cfg: &ScenarioConfig, engine: &McEngine, out: &mut RunOutcome) -> Result<(), CliError> {
    let scenario = cfg.build_scenario()?;
    let growths = cfg.growths()?;
    let ev = &cfg.envelope;
    let mut j_plot = LinePlot::new("Envelope integral", "h", "J(h)", Scale::Log, Scale::Log);
    let mut entries = Vec::new();
    for (g, name) in growths.iter().zip(&ev.growth) {
        let rep = envelope_criterion(&scenario.model, &scenario.boundary, g, &ev.h_grid)?;
        j_plot = j_plot.with(Series::new(name, rep.rows.iter().map(|r| (r.h, r.j)).collect()));
        let last = rep.rows.last().expect("grid has three points");
        out.line(format!(
            "{name}: {} (final J = {}){}",
            rep.verdict.label(),
            fmt_num(last.j),
            if rep.flags.is_empty() { String::new() } else { format!(" [{}]", rep.flags.join("; ")) }
        ));
        entries.push(json!({
            "growth": name,
            "verdict": rep.verdict.label(),
            "final_j": last.j,
            "criterion": rep.criterion,
            "regularity": rep.regularity,
            "flags": rep.flags,
        }));
        out.csvs.push((format!("envelope_{}", slug(name)), rep.to_csv()));
    }
    out.plots.push(("envelope_j".into(), j_plot));

    if !ev.hs.is_empty() && ev.attempts > 0 {
        let emp = envelope_empirical_many(&scenario, &growths, &ev.hs, cfg.simulation.horizon, ev.attempts, engine)?;
        let mut q_plot = LinePlot::new("Conditioned fraction above w(h) g(h)", "h", "q", Scale::Log, Scale::Linear);
        for ((e, name), entry) in emp.iter().zip(&ev.growth).zip(entries.iter_mut()) {
            q_plot = q_plot.with(Series::new(name, e.rows.iter().map(|r| (r.h, r.q_hat.value)).collect()));
            entry["empirical"] = json!({
                "accepted": e.accepted,
                "attempts": e.attempts,
                "q_hat": e.rows.iter().map(|r| json!({"h": r.h, "q_hat": r.q_hat.value, "se": r.q_hat.std_error})).collect::<Vec<_>>(),
                "nondecreasing_within_ci": e.nondecreasing_within_ci(),
                "last_bounded_away_from_one": e.last_bounded_away_from_one(),
            });
            let qs: Vec<String> = e.rows.iter().map(|r| fmt_num(r.q_hat.value)).collect();
            out.line(format!("  {name}: q_hat = [{}] from {} conditioned paths", qs.join(", "), e.accepted));
            out.csvs.push((format!("envelope_empirical_{}", slug(name)), e.to_csv()));
        }
        out.plots.push(("envelope_q".into(), q_plot));
    }
    out.set("scenario", scenario_json(cfg));
    out.set("growths", Value::Array(entries));
    Ok(())
}

fn bounds(cfg: &ScenarioConfig, engine: &McEngine, out: &mut RunOutcome) -> Result<(), CliError> {
    let scenario = cfg.build_scenario()?;
    let b = &cfg.bounds;
    let sim = &cfg.simulation;
    let (model, boundary) = (&scenario.model, &scenario.boundary);

    let cells = chernoff_domination(model, &b.ts, &b.as_, &b.bs, b.h_level, sim.n, b.law_jump_rate, engine)?;
    let mut table = CsvTable::new(&["t", "A", "B", "estimate", "se", "bound", "lambda", "violated"]);
    for c in &cells {
        table.push(vec![
            fmt_num(c.t),
            fmt_num(c.a),
            fmt_num(c.b),
            fmt_num(c.estimate.value),
            fmt_num(c.estimate.std_error),
            fmt_num(c.bound.value),
            fmt_num(c.bound.lambda),
            c.violated.to_string(),
        ]);
    }
    let violations = cells.iter().filter(|c| c.violated).count();
    out.line(format!("Chernoff domination: {} cells, {violations} violations beyond 3 SE", cells.len()));
    out.plots.push((
        "chernoff".into(),
        LinePlot::new("Truncated tail against the bound", "cell", "probability", Scale::Linear, Scale::Log)
            .with(Series::new("estimate", cells.iter().enumerate().map(|(i, c)| (i as f64, c.estimate.value)).collect()))
            .with(Series::new("bound", cells.iter().enumerate().map(|(i, c)| (i as f64, c.bound.value)).collect())),
    ));
    out.csvs.push(("chernoff".into(), table));

    let mut rows: Vec<CheckRow> = Vec::new();
    if b.laws {
        if model.stable_params().is_some() {
            let params = LawParams {
                x: b.law_x,
                t: b.law_t,
                jump_rate: b.law_jump_rate,
                significance: b.significance,
                ..LawParams::default()
            };
            rows.extend(distribution_law_tests(model, &params, sim.n, engine)?);
        } else {
            out.line("distributional laws skipped: model is not stable");
        }
    }
    for &[y, h] in &b.lemma_points {
        let g_h = boundary.g(h);
        if y > g_h {
            rows.push(check_shifted_lower_bound(boundary, b.lemma_a, b.lemma_b, y, h, b.lemma_span)?);
            rows.extend(shifted_tail_excess_ratio(model, boundary, b.lemma_a, b.lemma_b, y, h, &b.excess_t_max)?);
        }
        if y >= g_h {
            rows.push(check_shifted_phi(&scenario, b.lemma_a, b.lemma_b, y, h, sim.n, engine)?);
        } else {
            out.line(format!("shifted checks skipped at y = {}, h = {}: y < g(h) = {}", fmt_num(y), fmt_num(h), fmt_num(g_h)));
        }
    }
    let failed_checks: Vec<&CheckRow> = rows.iter().filter(|r| r.verdict == "fail").collect();
    for r in &rows {
        out.line(format!(
            "  {} {}: statistic {}, p {} -> {}",
            r.check,
            r.param_json,
            fmt_num(r.statistic),
            fmt_num(r.p_value),
            r.verdict
        ));
    }
    out.failed = violations > 0 || !failed_checks.is_empty();
    out.set("scenario", scenario_json(cfg));
    out.set("n", json!(sim.n));
    out.set("h_level", json!(b.h_level));
    out.set("chernoff_cells", json!(cells.len()));
    out.set("chernoff_violations", json!(violations));
    out.set(
        "checks",
        Value::Array(
            rows.iter()
                .map(|r| json!({"check": r.check, "params": r.param_json, "statistic": r.statistic, "p_value": r.p_value, "verdict": r.verdict}))
                .collect(),
        ),
    );
    out.set("verdict", json!(if out.failed { "fail" } else { "pass" }));
    out.csvs.push(("checks".into(), checks_csv(&rows)));
    Ok(())
}

/// Named quick checks with a pass flag and a detail string.
fn selftest_checks(engine: &McEngine) -> Result<Vec<(&'static str, bool, String)>, CliError> {
    let half = SubordinatorModel::stable(0.5, 1.0)?;
    let quarter = BoundaryPair::monomial(0.25, 0.0)?;
    let offset = BoundaryPair::monomial(0.5, 0.5)?;
    let mut v: Vec<(&'static str, bool, String)> = Vec::new();

    let tails: Vec<f64> = log_grid(1e-3, 1e6, 30).iter().map(|&x| half.tail(x)).collect();
    v.push(("tail_nonincreasing", tails.windows(2).all(|w| w[1] <= w[0]), String::new()));
    let l0 = half.laplace_exponent(0.0)?;
    v.push(("laplace_exponent_at_zero", l0 == 0.0, fmt_num(l0)));
    v.push((
        "bounded_boundary_rejected",
        BoundaryPair::table(&[(0.0, 0.5), (1.0, 0.5), (2.0, 0.5)]).is_err(),
        String::new(),
    ));
    let (t, y, h) = (3.0, 0.0, 0.0);
    let s = quarter.shifted_value(y, h, t)?;
    v.push(("identity_shift", s == quarter.g(t), fmt_num(s)));
    let s = offset.shifted_value(2.0, 0.2, 0.1)?;
    v.push(("shift_below_f0", s == -2.0, fmt_num(s)));
    v.push(("t0_needs_a_above_3", t0(&quarter, 2.0, 3.0, 1.0).is_err(), String::new()));
    let big = t0(&quarter, 1e6, 4.0, 1.0)?;
    v.push(("t0_large_y", (big - quarter.f(4e6)).abs() <= 1e-12 * big, fmt_num(big)));

    let trunc = JumpSampler::new(&half, 0.01, Some(0.5))?;
    let mut rng = engine.stream("selftest-trunc", 0).rng();
    let p = sample_path(&trunc, 5.0, &mut rng)?;
    let top = p.value_at(5.0)?;
    v.push((
        "truncation_caps_path",
        top <= p.drift_slope() * 5.0 + p.jump_count() as f64 * 0.5 + 1e-12,
        fmt_num(top),
    ));
    let sampler = JumpSampler::with_rate(&half, 50.0, None)?;
    let a = sample_path(&sampler, 2.0, &mut engine.stream("selftest-det", 7).rng())?;
    let b = sample_path(&sampler, 2.0, &mut engine.stream("selftest-det", 7).rng())?;
    v.push(("identical_streams_identical_paths", a == b, String::new()));

    let step = SamplePath::from_jumps(5.0, 0.0, &[(1.0, 5.0)])?;
    v.push((
        "right_continuous_step",
        step.value_at(1.0)? == 5.0 && step.value_at(0.999)? == 0.0 && step.value_at(0.0)? == 0.0,
        String::new(),
    ));
    let slope = SamplePath::from_jumps(5.0, 2.0, &[])?;
    v.push(("linear_part", slope.value_at(3.0)? == 6.0, fmt_num(slope.value_at(3.0)?)));
    v.push(("no_jump_above_largest", step.first_big_jump(6.0)?.is_none(), String::new()));
    let flat = SamplePath::from_jumps(0.4, 0.0, &[])?;
    v.push(("zero_boundary_never_violated", violation_time(&flat, &offset).is_none(), String::new()));

    let sc = CrossingScenario::new(half.clone(), offset.clone(), None, None)?.with_jump_rate(20.0)?;
    let sig = sample_sigmas(&sc, 0.4, 2000, engine, "selftest-sigmas")?;
    v.push(("survival_one_below_f0", sig.survival(0.4).value == 1.0, fmt_num(sig.survival(0.4).value)));
    let sig = sample_sigmas(&sc, 20.0, 2000, engine, "selftest-phi")?;
    let phis: Vec<f64> = log_grid(0.1, 20.0, 25).iter().map(|&t| sig.phi(t).value).collect();
    let ok = log_grid(0.1, 20.0, 25).iter().zip(&phis).all(|(&t, &p)| p <= t + 1e-12)
        && phis.windows(2).all(|w| w[1] >= w[0]);
    v.push(("phi_bounded_and_monotone", ok, String::new()));
    v.push((
        "diagnostics_grid_above_f0",
        asymptotic_diagnostics(&sc, &[0.3, 2.0], 100, engine).is_err(),
        String::new(),
    ));
    let c = sample_conditioned(&sc, 0.4, 50, 1000, engine)?;
    v.push(("acceptance_one_below_f0", c.acceptance.value == 1.0, fmt_num(c.acceptance.value)));

    let q = CrossingScenario::new(half.clone(), quarter.clone(), None, None)?.with_jump_rate(20.0)?;
    let g2 = quarter.g(2.0);
    let edges = [0.25 * g2, 0.5 * g2, g2, quarter.g(10.0), f64::INFINITY];
    let d = doob_identity_check_with(&q, 2.0, 10.0, &edges, DoobBudget::uniform(2000), engine)?;
    let below = d.bins.iter().take(2).all(|b| b.lhs == 0.0 && b.rhs == 0.0);
    v.push(("doob_bins_below_g_h_empty", below, String::new()));
    v.push((
        "constant_growth_rejected",
        envelope_criterion(&half, &quarter, &Growth::Constant(2.0), &[10.0, 100.0, 1000.0]).is_err(),
        String::new(),
    ));
    let e = envelope_empirical(&q, &Growth::Constant(0.5), &[2.0], 5.0, 5000, engine)?;
    let qv = e.rows[0].q_hat.value;
    v.push(("level_below_boundary_certain", qv == 1.0, fmt_num(qv)));
    let cb = chernoff_bound(&half, 1.0, 2.0, 5.0, 1.0 - 1e-12)?;
    v.push(("chernoff_vacuous_at_h_one", (cb.value - 1.0).abs() < 1e-9, fmt_num(cb.value)));
    let r = check_shifted_phi(&q, 4.0, 1.0, g2, 2.0, 100, engine)?;
    v.push(("shifted_phi_vacuous", r.verdict == "vacuous", r.verdict.clone()));
    Ok(v)
}

fn selftest(engine: &McEngine, out: &mut RunOutcome) -> Result<(), CliError> {
    let checks = selftest_checks(engine)?;
    let mut table = CsvTable::new(&["check", "passed", "detail"]);
    let mut failed = 0;
    for (name, ok, detail) in &checks {
        if !ok {
            failed += 1;
        }
        out.line(format!("  {} {name}{}", if *ok { "PASS" } else { "FAIL" }, if detail.is_empty() { String::new() } else { format!(" ({detail})") }));
        table.push(vec![name.to_string(), ok.to_string(), detail.clone()]);
    }
    out.failed = failed > 0;
    out.set("checks", json!(checks.len()));
    out.set("failed", json!(failed));
    out.set(
        "results",
        Value::Array(checks.iter().map(|(n, ok, _)| json!({"check": n, "passed": ok})).collect()),
    );
    out.set("verdict", json!(if out.failed { "fail" } else { "pass" }));
    let mut s = String::new();
    let _ = write!(s, "{}/{} checks passed", checks.len() - failed, checks.len());
    out.line(s);
    out.csvs.push(("selftest".into(), table));
    Ok(())
}
