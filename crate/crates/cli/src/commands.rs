use rand::Rng;
use rand_distr::StandardNormal;
use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::{json, Value};

use siltlab_core::gauss_field::{
    eisenbaum_check_many, empirical_quantile, lhs_norm_samples, tail_bound_check_level, Functional,
};
use siltlab_core::green_torus::{build_green, check_nash_bound, green_origin_scaling, heat_kernel, scaling_csv};
use siltlab_core::ldp::{
    confinement_probe, periodization_stopping_check, rate_extraction, tail_probability_mc, ExperimentRecord,
    RSchedule,
};
use siltlab_core::params::conjugate;
use siltlab_core::rng::{derive_seed, stream};
use siltlab_core::table::{num, CsvTable};
use siltlab_core::variational::{
    convergence_csv, convergence_study, gagliardo_nirenberg_constant, interpolate_to_continuum, optimize_a,
    results_csv, solve_chi, solve_rho1, solve_rho2, solve_rho_continuum, truncate, LatticeFunction, MinimizerResult,
};
use siltlab_core::{ProblemParams, ScalingSchedule};

use crate::config;
use crate::output::{Failure, Output};

/// Parses the subcommand's config, records it as resolved, then runs it.
pub fn run(name: &str, raw: Value, out: &mut Output) -> Result<(), Failure> {
    match name {
        "green-scaling" => green_scaling(parse(raw, out)?, out),
        "nash-check" => nash_check(parse(raw, out)?, out),
        "rho1" => rho1(parse(raw, out)?, out),
        "rho2" => rho2(parse(raw, out)?, out),
        "rho-continuum" => rho_continuum(parse(raw, out)?, out),
        "chi" => chi(parse(raw, out)?, out),
        "gn-constant" => gn_constant(parse(raw, out)?, out),
        "interp-check" => interp_check(parse(raw, out)?, out),
        "convergence-study" => convergence(parse(raw, out)?, out),
        "optimize-a" => optimize(parse(raw, out)?, out),
        "eisenbaum-check" => eisenbaum(parse(raw, out)?, out),
        "tail-bounds" => tail_bounds(parse(raw, out)?, out),
        "mc-tail" => mc_tail(parse(raw, out)?, out),
        "rate-extract" => rate_extract(parse(raw, out)?, out),
        "fold-check" => fold_check(parse(raw, out)?, out),
        "confine" => confine(parse(raw, out)?, out),
        other => Err(Failure::Config(format!("unknown subcommand {other}"))),
    }
}

fn parse<T: DeserializeOwned + Serialize>(raw: Value, out: &mut Output) -> Result<T, Failure> {
    let cfg: T = serde_json::from_value(raw).map_err(|e| Failure::Config(e.to_string()))?;
    out.config = Some(serde_json::to_value(&cfg).expect("configs serialize"));
    Ok(cfg)
}

fn check(ok: bool, msg: impl FnOnce() -> String) -> Result<(), Failure> {
    if ok {
        Ok(())
    } else {
        Err(Failure::Config(msg()))
    }
}

fn positive(name: &str, x: f64) -> Result<(), Failure> {
    check(x.is_finite() && x > 0.0, || format!("{name} must be finite and > 0, got {x}"))
}

fn samples(n: u64) -> Result<(), Failure> {
    check(n >= 2, || format!("n_samples must be >= 2, got {n}"))
}

fn converged(r: &MinimizerResult, what: &str) -> Result<(), Failure> {
    if r.converged {
        Ok(())
    } else {
        Err(Failure::NonConvergence(format!(
            "{what} stopped with residual {:.3e} after {} iterations",
            r.residual, r.iterations
        )))
    }
}

fn write_result(out: &mut Output, stem: &str, result: &MinimizerResult, table: &CsvTable) -> Result<(), Failure> {
    out.json(&format!("{stem}.json"), result)?;
    out.csv(&format!("{stem}.csv"), table)?;
    converged(result, stem)
}

fn green_scaling(c: config::GreenScaling, out: &mut Output) -> Result<(), Failure> {
    check(c.d >= 1, || "d must be >= 1".into())?;
    positive("a", c.a)?;
    positive("radius", c.radius)?;
    check(!c.alphas.is_empty(), || "alphas is empty".into())?;
    let rows = green_origin_scaling(c.d, c.a, c.radius, &c.alphas)?;
    out.json("green-scaling.json", &rows)?;
    out.csv("green-scaling.csv", &scaling_csv(&rows))
}

fn nash_check(c: config::NashCheck, out: &mut Output) -> Result<(), Failure> {
    check(c.n >= 1 && c.d >= 1, || "n and d must be >= 1".into())?;
    check(!c.s_grid.is_empty(), || "s_grid is empty".into())?;
    let worst = check_nash_bound(c.n, c.d, &c.s_grid)?;
    let origin = vec![0; c.d];
    let floor = (c.n as f64).powi(-(c.d as i32));
    let mut table = CsvTable::new(&["s", "p_s00", "floor", "scaled_excess"]);
    for &s in &c.s_grid {
        let p = heat_kernel(c.n, c.d, s, &origin)?;
        table.push(vec![num(s), num(p), num(floor), num(s.powf(c.d as f64 / 2.0) * (p - floor).abs())]);
    }
    out.json("nash-check.json", &json!({ "worst_constant": worst }))?;
    out.csv("nash-check.csv", &table)
}

fn lattice_checks(c: &config::Lattice) -> Result<(), Failure> {
    check(c.n >= 1 && c.d >= 1, || "n and d must be >= 1".into())?;
    positive("lambda", c.lambda)?;
    ProblemParams::new(c.d, c.p)?;
    if let Some(t) = c.tol {
        positive("tol", t)?;
    }
    Ok(())
}

fn rho1(c: config::Lattice, out: &mut Output) -> Result<(), Failure> {
    lattice_checks(&c)?;
    let r = solve_rho1(c.n, c.d, c.lambda, c.p, c.tol.unwrap_or(1e-9))?;
    let table = results_csv(&["N", "d", "lambda", "p"], &[(vec![c.n as f64, c.d as f64, c.lambda, c.p], &r)]);
    write_result(out, "rho1", &r, &table)
}

fn rho2(c: config::Lattice, out: &mut Output) -> Result<(), Failure> {
    lattice_checks(&c)?;
    let r = solve_rho2(c.n, c.d, c.lambda, c.p, c.tol.unwrap_or(1e-11))?;
    let table = results_csv(&["N", "d", "lambda", "p"], &[(vec![c.n as f64, c.d as f64, c.lambda, c.p], &r)]);
    write_result(out, "rho2", &r, &table)
}

fn continuum_checks(d: usize, p: f64, radius: f64, mesh: f64, tol: f64) -> Result<(), Failure> {
    ProblemParams::subcritical(d, p)?;
    positive("radius", radius)?;
    positive("mesh", mesh)?;
    check(mesh < radius, || "mesh must be smaller than radius".into())?;
    positive("tol", tol)
}

fn rho_continuum(c: config::RhoContinuum, out: &mut Output) -> Result<(), Failure> {
    positive("a", c.a)?;
    continuum_checks(c.d, c.p, c.radius, c.mesh, c.tol)?;
    let r = solve_rho_continuum(c.a, c.d, c.p, c.radius, c.mesh, c.tol)?;
    let table = results_csv(&["a", "d", "p", "radius", "mesh"], &[(vec![c.a, c.d as f64, c.p, c.radius, c.mesh], &r)]);
    write_result(out, "rho-continuum", &r, &table)
}

fn chi(c: config::Continuum, out: &mut Output) -> Result<(), Failure> {
    continuum_checks(c.d, c.p, c.radius, c.mesh, c.tol)?;
    let r = solve_chi(c.d, c.p, c.radius, c.mesh, c.tol)?;
    let table = results_csv(&["d", "p", "radius", "mesh"], &[(vec![c.d as f64, c.p, c.radius, c.mesh], &r)]);
    write_result(out, "chi", &r, &table)
}

fn gn_constant(c: config::Continuum, out: &mut Output) -> Result<(), Failure> {
    continuum_checks(c.d, c.p, c.radius, c.mesh, c.tol)?;
    let r = gagliardo_nirenberg_constant(c.d, c.p, c.radius, c.mesh, c.tol)?;
    let mut table = CsvTable::new(&["d", "p", "k_direct", "k_from_chi", "chi", "relative_gap", "converged"]);
    let diag = |k: &str| r.diagnostics.get(k).copied().unwrap_or(f64::NAN);
    table.push(vec![
        c.d.to_string(),
        num(c.p),
        num(diag("k_direct")),
        num(r.value),
        num(diag("chi")),
        num(diag("relative_gap")),
        r.converged.to_string(),
    ]);
    write_result(out, "gn-constant", &r, &table)
}

fn interp_check(c: config::InterpCheck, out: &mut Output) -> Result<(), Failure> {
    check(c.n >= 1 && c.d >= 1, || "n and d must be >= 1".into())?;
    positive("alpha", c.alpha)?;
    ProblemParams::new(c.d, c.p)?;
    check(c.count >= 1, || "count must be >= 1".into())?;
    check(c.radius > 1.0, || format!("radius must be > 1, got {}", c.radius))?;
    check(c.epsilon > 0.0 && c.epsilon < 1.0, || format!("epsilon must lie in (0, 1), got {}", c.epsilon))?;
    let scale = c.alpha.powf(2.0 - c.d as f64 / conjugate(c.p));
    let v = c.n.pow(c.d as u32);
    let mut table = CsvTable::new(&[
        "index",
        "identity_defect",
        "truncated_energy",
        "truncation_bound",
        "holds",
        "quadrature_error",
    ]);
    let (mut worst, mut violations) = (0.0f64, 0u64);
    for i in 0..c.count {
        let mut rng = stream(out.seed(), i);
        let vals: Vec<f64> = (0..v).map(|_| rng.sample(StandardNormal)).collect();
        let h = LatticeFunction::new(c.n, c.d, vals)?;
        let g = interpolate_to_continuum(&h, c.alpha, c.p)?;
        let want = scale * h.gradient_energy();
        let got = g.gradient_energy();
        let defect = if want == 0.0 { got.abs() } else { (got - want).abs() / want };
        let report = truncate(&g, c.radius, c.epsilon)?.energy_bound();
        worst = worst.max(defect);
        violations += u64::from(!report.holds);
        table.push(vec![
            i.to_string(),
            num(defect),
            num(report.lhs),
            num(report.rhs),
            report.holds.to_string(),
            num(report.quadrature_error),
        ]);
    }
    out.json(
        "interp-check.json",
        &json!({ "count": c.count, "max_identity_defect": worst, "truncation_violations": violations }),
    )?;
    out.csv("interp-check.csv", &table)?;
    if worst > 1e-12 || violations > 0 {
        return Err(Failure::Inconclusive(format!(
            "identity defect {worst:.2e}, {violations} truncation violations"
        )));
    }
    Ok(())
}

fn convergence(c: config::ConvergenceStudy, out: &mut Output) -> Result<(), Failure> {
    positive("a", c.a)?;
    ProblemParams::subcritical(c.d, c.p)?;
    positive("tol", c.tol)?;
    check(!c.grids.is_empty(), || "grids is empty".into())?;
    for &(n, alpha) in &c.grids {
        check(n >= 1, || "grid N must be >= 1".into())?;
        positive("grid alpha", alpha)?;
    }
    let rows = convergence_study(c.a, c.d, c.p, &c.grids, c.tol)?;
    out.json("convergence-study.json", &rows)?;
    out.csv("convergence-study.csv", &convergence_csv(&rows))?;
    let stuck = rows.iter().filter(|r| !r.converged).count();
    if stuck > 0 {
        return Err(Failure::NonConvergence(format!("{stuck} of {} grids did not converge", rows.len())));
    }
    Ok(())
}

fn optimize(c: config::OptimizeA, out: &mut Output) -> Result<(), Failure> {
    continuum_checks(c.d, c.p, c.radius, c.mesh, c.tol)?;
    check(c.a_grid.len() >= 3, || "a_grid needs at least three values".into())?;
    for &a in &c.a_grid {
        positive("a_grid entry", a)?;
    }
    let opt = optimize_a(c.d, c.p, c.radius, c.mesh, &c.a_grid, c.tol)?;
    let mut table = CsvTable::new(&["a", "rho", "a_minus_rho"]);
    for &(a, rho, gap) in &opt.rows {
        table.push(vec![num(a), num(rho), num(gap)]);
    }
    out.json("optimize-a.json", &opt)?;
    out.csv("optimize-a.csv", &table)?;
    if opt.chi_check > 0.02 {
        return Err(Failure::Inconclusive(format!(
            "inf (a - rho(a)) = {} is {:.2}% away from -chi = {}",
            opt.inf_value,
            100.0 * opt.chi_check,
            -opt.chi
        )));
    }
    Ok(())
}

fn functional_name(f: &Functional) -> &'static str {
    match f {
        Functional::Constant => "constant",
        Functional::ClippedSite { .. } => "clipped_site",
        Functional::ClippedSquareSum { .. } => "clipped_square_sum",
        Functional::NormIndicator { .. } => "norm_indicator",
    }
}

fn eisenbaum(c: config::EisenbaumCheck, out: &mut Output) -> Result<(), Failure> {
    check(c.n >= 1 && c.d >= 1, || "n and d must be >= 1".into())?;
    positive("lambda", c.lambda)?;
    check(c.shift.is_finite() && c.shift != 0.0, || "shift must be finite and nonzero".into())?;
    samples(c.n_samples)?;
    let green = build_green(c.n, c.d, c.lambda)?;
    let v = green.volume();
    if let Some(fs) = &c.functionals {
        check(!fs.is_empty(), || "functionals is empty".into())?;
        for f in fs {
            if let Functional::ClippedSite { site, .. } = f {
                check(*site < v, || format!("site {site} outside a torus of {v} sites"))?;
            }
            if let Functional::NormIndicator { p, .. } = f {
                check(*p > 1.0, || "indicator p must be > 1".into())?;
            }
        }
    }
    let functionals = match c.functionals {
        Some(fs) => fs,
        None => {
            let site_mean = 1.0 / c.lambda + 0.5 * (green.origin() + c.shift * c.shift);
            let pilot = lhs_norm_samples(&green, c.shift, 2.0, 20_000, derive_seed(out.seed(), 3));
            vec![
                Functional::ClippedSite { site: 0, clip: 1e3 },
                Functional::ClippedSquareSum { clip: v as f64 * site_mean * site_mean },
                Functional::NormIndicator {
                    p: 2.0,
                    threshold: empirical_quantile(&pilot, 0.5),
                },
            ]
        }
    };
    let reports = eisenbaum_check_many(&green, c.shift, &functionals, c.n_samples, out.seed())?;
    let mut table = CsvTable::new(&["functional", "lhs", "rhs", "se_lhs", "se_rhs", "z_score", "verdict"]);
    for r in &reports {
        table.push(vec![
            functional_name(&r.functional).into(),
            num(r.lhs),
            num(r.rhs),
            num(r.se_lhs),
            num(r.se_rhs),
            num(r.z_score),
            r.verdict.to_string(),
        ]);
    }
    out.json("eisenbaum-check.json", &reports)?;
    out.csv("eisenbaum-check.csv", &table)?;
    let failed = reports.iter().filter(|r| !r.verdict).count();
    if failed > 0 {
        return Err(Failure::Inconclusive(format!("{failed} functionals differ by more than 4 SE")));
    }
    Ok(())
}

fn tail_bounds(c: config::TailBounds, out: &mut Output) -> Result<(), Failure> {
    check(c.n >= 1 && c.d >= 1, || "n and d must be >= 1".into())?;
    positive("lambda", c.lambda)?;
    ProblemParams::new(c.d, c.p)?;
    samples(c.n_samples)?;
    check(!c.levels.is_empty(), || "levels is empty".into())?;
    for &u in &c.levels {
        check(u.is_finite() && u >= 0.0, || format!("levels must be >= 0, got {u}"))?;
    }
    let green = build_green(c.n, c.d, c.lambda)?;
    let rho1 = solve_rho1(c.n, c.d, c.lambda, c.p, 1e-9)?;
    converged(&rho1, "rho1")?;
    let mut reports = Vec::new();
    for (k, &level) in c.levels.iter().enumerate() {
        reports.push(tail_bound_check_level(
            &green,
            c.p,
            level,
            rho1.value,
            c.n_samples,
            derive_seed(out.seed(), k as u64),
        )?);
    }
    let mut table = CsvTable::new(&["level", "hits", "probability", "se", "lower_bound", "upper_bound", "verdict"]);
    for r in &reports {
        table.push(vec![
            num(r.level),
            r.hits.to_string(),
            num(r.probability),
            num(r.se),
            num(r.lower_bound),
            r.upper_bound.map_or("none".into(), num),
            r.verdict().map_or("undecided".into(), |b| b.to_string()),
        ]);
    }
    out.json("tail-bounds.json", &reports)?;
    out.csv("tail-bounds.csv", &table)?;
    if reports.iter().any(|r| r.verdict() == Some(false)) {
        return Err(Failure::Inconclusive("a bound is violated beyond 4 SE".into()));
    }
    Ok(())
}

fn mc_tail(c: config::McTail, out: &mut Output) -> Result<(), Failure> {
    let params = ProblemParams::subcritical(c.d, c.p)?;
    samples(c.n_samples)?;
    check(!c.t_grid.is_empty(), || "t_grid is empty".into())?;
    positive("c", c.c)?;
    check(c.theta.is_finite(), || "theta must be finite".into())?;
    positive("window_slack", c.window_slack)?;
    let schedule = RSchedule { c: c.c, theta: c.theta };
    let record = tail_probability_mc(&params, &c.t_grid, schedule, c.n_samples, out.seed(), c.window_slack)?;
    out.json("mc-tail.json", &record)?;
    out.csv("mc-tail.csv", &record.to_csv())
}

/// Accepts either a bare record or a record wrapped by [`Output::json`].
fn read_record(path: &str) -> Result<ExperimentRecord, Failure> {
    let text = std::fs::read_to_string(path).map_err(|e| Failure::Config(format!("record {path}: {e}")))?;
    let value: Value = serde_json::from_str(&text).map_err(|e| Failure::Config(format!("record {path}: {e}")))?;
    let inner = match value.get("result") {
        Some(r) => r.clone(),
        None => value,
    };
    serde_json::from_value(inner).map_err(|e| Failure::Config(format!("record {path}: {e}")))
}

fn rate_extract(c: config::RateExtract, out: &mut Output) -> Result<(), Failure> {
    check(!c.record.is_empty(), || "record path is required".into())?;
    let record = read_record(&c.record)?;
    let fit = rate_extraction(&record)?;
    let mut table = CsvTable::new(&["t", "speed", "rate"]);
    for &(t, x, rate) in &fit.pointwise {
        table.push(vec![num(t), num(x), num(rate)]);
    }
    out.json("rate-extract.json", &fit)?;
    out.csv("rate-extract.csv", &table)
}

fn fold_check(c: config::FoldCheck, out: &mut Output) -> Result<(), Failure> {
    let params = ProblemParams::new(c.d, c.p)?;
    samples(c.n_samples)?;
    let scaling = ScalingSchedule::new(&params, c.a, c.radius, c.t, c.r_t)?;
    let record = periodization_stopping_check(&params, &scaling, c.n_samples, out.seed())?;
    out.json("fold-check.json", &record)?;
    out.csv("fold-check.csv", &record.to_csv())?;
    if record.folding_violations > 0 || record.mass_violations > 0 {
        return Err(Failure::Inconclusive(format!(
            "{} folding and {} mass violations",
            record.folding_violations, record.mass_violations
        )));
    }
    if !record.holds {
        return Err(Failure::Inconclusive(format!(
            "free tail exceeds the stopped bound by {:.2} SE",
            record.z_score
        )));
    }
    Ok(())
}

fn confine(c: config::Confine, out: &mut Output) -> Result<(), Failure> {
    let params = ProblemParams::new(c.d, c.p)?;
    samples(c.n_samples)?;
    check(c.r_ball.is_finite() && c.r_ball >= 1.0, || format!("r_ball must be >= 1, got {}", c.r_ball))?;
    positive("t", c.t)?;
    let record = confinement_probe(&params, c.r_ball, c.t, c.n_samples, out.seed())?;
    out.json("confine.json", &record)?;
    out.csv("confine.csv", &record.to_csv())
}
