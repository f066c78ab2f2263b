//! Acceptance criteria 1 to 11, run sequentially with one PASS/FAIL line
//! each. Pass criterion numbers as arguments to run a subset:
//! `cargo test --test acceptance -- 3 7`.

use std::process::ExitCode;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use siltlab_core::gauss_field::{eisenbaum_check_many, empirical_quantile, lhs_norm_samples, Functional};
use siltlab_core::green_torus::{build_green, green_origin_scaling};
use siltlab_core::ldp::{periodization_stopping_check, rate_extraction, tail_point, tail_probability_mc, RSchedule};
use siltlab_core::params::conjugate;
use siltlab_core::variational::{
    beta_phi, beta_star, gagliardo_nirenberg_constant, gn_quotient, interpolate_to_continuum, optimize_a,
    solve_rho1, solve_rho2, solve_rho_continuum, truncate, ContinuumFunction, LatticeFunction,
};
use siltlab_core::{ProblemParams, ScalingSchedule};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

/// Shared between criteria: χ values from criterion 7 feed criterion 10.
#[derive(Default)]
struct Context {
    chi_1_2: Option<f64>,
}

fn main() -> ExitCode {
    let selected: Vec<usize> = std::env::args()
        .skip(1)
        .filter(|a| !a.starts_with('-'))
        .filter_map(|a| a.parse().ok())
        .collect();
    let criteria: [(usize, fn(&mut Context) -> Outcome); 11] = [
        (1, green_oracle),
        (2, green_asymptotics),
        (3, duality),
        (4, sandwich),
        (5, interpolation_identity),
        (6, truncation_bound),
        (7, optimal_a_matches_chi),
        (8, gn_routes),
        (9, eisenbaum_matrix),
        (10, rate_trend),
        (11, folding),
    ];
    let mut ctx = Context::default();
    let mut failed = 0;
    for (k, run) in criteria {
        if !selected.is_empty() && !selected.contains(&k) {
            continue;
        }
        let start = Instant::now();
        let o = run(&mut ctx);
        let verdict = if o.pass { "PASS" } else { "FAIL" };
        println!("criterion {k:>2} {verdict} ({:.1}s): {}", start.elapsed().as_secs_f64(), o.detail);
        if !o.pass {
            failed += 1;
        }
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        ExitCode::FAILURE
    } else {
        ExitCode::SUCCESS
    }
}

// ---------------------------------------------------------------- 1

/// Row-major neighbours on the torus, axis 0 slowest.
fn torus_laplacian(n: usize, d: usize) -> DMatrix<f64> {
    let v = n.pow(d as u32);
    let mut m = DMatrix::zeros(v, v);
    for x in 0..v {
        let mut stride = 1;
        for _ in 0..d {
            let c = (x / stride) % n;
            for nc in [(c + 1) % n, (c + n - 1) % n] {
                let y = x - c * stride + nc * stride;
                m[(x, y)] += 1.0;
                m[(x, x)] -= 1.0;
            }
            stride *= n;
        }
    }
    m
}

fn gauss_legendre(k: usize) -> Vec<(f64, f64)> {
    (0..k)
        .map(|i| {
            let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (k as f64 + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (mut p0, mut p1) = (1.0, x);
                for j in 2..=k {
                    let p2 = ((2 * j - 1) as f64 * x * p1 - (j - 1) as f64 * p0) / j as f64;
                    p0 = p1;
                    p1 = p2;
                }
                dp = k as f64 * (x * p1 - p0) / (x * x - 1.0);
                let dx = p1 / dp;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            (x, 2.0 / ((1.0 - x * x) * dp * dp))
        })
        .collect()
}

/// `G(0, ·) = ∫_0^∞ e^{-λs} e^{sΔ} δ_0 ds` by composite Gauss-Legendre on
/// panels of width 1/4, with `e^{sΔ}` from nalgebra's matrix exponential.
fn green_by_quadrature(n: usize, d: usize, lambda: f64) -> Vec<f64> {
    let lap = torus_laplacian(n, d);
    let v = lap.nrows();
    let width = 0.25;
    let panels = (42.0 / lambda / width).ceil() as usize;
    let rule = gauss_legendre(10);
    let step = (&lap * width).exp();
    let node_maps: Vec<(f64, f64, DMatrix<f64>)> = rule
        .iter()
        .map(|&(x, w)| {
            let s = 0.5 * width * (x + 1.0);
            (s, 0.5 * width * w, (&lap * s).exp())
        })
        .collect();
    let mut state = DVector::zeros(v);
    state[0] = 1.0;
    let mut acc = DVector::zeros(v);
    for k in 0..panels {
        let s0 = k as f64 * width;
        for (s, w, map) in &node_maps {
            acc += (map * &state) * (w * (-lambda * (s0 + s)).exp());
        }
        state = &step * state;
    }
    acc.iter().copied().collect()
}

fn green_oracle(_: &mut Context) -> Outcome {
    let mut worst: f64 = 0.0;
    let mut at = String::new();
    for d in 1..=2 {
        for n in 1..=8 {
            for lambda in [0.1, 1.0] {
                let g = build_green(n, d, lambda).unwrap();
                let oracle = green_by_quadrature(n, d, lambda);
                for (x, want) in oracle.iter().enumerate() {
                    let mut c = vec![0; d];
                    let mut i = x;
                    for axis in 0..d {
                        c[axis] = i % n;
                        i /= n;
                    }
                    // the oracle indexes axis 0 fastest; reverse to match
                    c.reverse();
                    let err = (g.value(&c) - want).abs() / want.abs();
                    if err > worst {
                        worst = err;
                        at = format!("N={n} d={d} lambda={lambda}");
                    }
                }
            }
        }
    }
    let hand = build_green(3, 1, 1.0).unwrap().origin();
    let hand_ok = (hand - 0.5).abs() < 1e-12;
    outcome(
        worst <= 1e-8 && hand_ok,
        format!("max relative error {worst:.2e} at {at}; G(0,0) at N=3,d=1,lambda=1 is {hand}"),
    )
}

// ---------------------------------------------------------------- 2

fn green_asymptotics(_: &mut Context) -> Outcome {
    let alphas = [16.0, 32.0, 64.0, 128.0];
    let mut pass = true;
    let mut detail = Vec::new();
    for d in 1..=3 {
        let rows = green_origin_scaling(d, 1.0, 1.0, &alphas).unwrap();
        let scaled: Vec<f64> = rows
            .iter()
            .map(|r| match d {
                1 => r.green00 / r.alpha,
                2 => r.green00 / r.alpha.ln(),
                _ => r.green00,
            })
            .collect();
        let hi = scaled.iter().cloned().fold(f64::MIN, f64::max);
        let lo = scaled.iter().cloned().fold(f64::MAX, f64::min);
        pass &= hi / lo <= 2.0;
        detail.push(format!("d={d} spread {:.3}", hi / lo));
    }
    outcome(pass, detail.join(", "))
}

// ---------------------------------------------------------------- 3, 4

fn lattice_configs() -> Vec<(usize, usize, f64, f64)> {
    let mut out = Vec::new();
    for d in 1..=2 {
        for n in 1..=16 {
            for p in [2.0, 3.0] {
                for lambda in [0.1, 1.0] {
                    out.push((n, d, p, lambda));
                }
            }
        }
    }
    out
}

fn duality(_: &mut Context) -> Outcome {
    let mut worst: f64 = 0.0;
    let mut at = String::new();
    for (n, d, p, lambda) in lattice_configs() {
        let r1 = solve_rho1(n, d, lambda, p, 1e-10).unwrap();
        let r2 = solve_rho2(n, d, lambda, p, 1e-12).unwrap();
        let gap = (r1.value * r2.value - 1.0).abs();
        if gap > worst || !gap.is_finite() {
            worst = gap;
            at = format!("N={n} d={d} p={p} lambda={lambda}");
        }
    }
    outcome(worst <= 1e-4, format!("max |rho1 rho2 - 1| = {worst:.2e} at {at}"))
}

fn sandwich(_: &mut Context) -> Outcome {
    let mut violations = 0;
    let configs = lattice_configs();
    for &(n, d, p, lambda) in &configs {
        let r1 = solve_rho1(n, d, lambda, p, 1e-10).unwrap().value;
        let upper = lambda * (n as f64).powf(d as f64 / conjugate(p));
        let slack = 1e-12 * upper;
        if !(r1 >= lambda - slack && r1 <= upper + slack) {
            violations += 1;
        }
    }
    outcome(violations == 0, format!("{violations} violations over {} configurations", configs.len()))
}

// ---------------------------------------------------------------- 5

/// Periodic forward-difference energy, each edge once.
fn lattice_gradient_energy(n: usize, d: usize, h: &[f64]) -> f64 {
    let mut acc = 0.0;
    for x in 0..h.len() {
        let mut stride = 1;
        for _ in 0..d {
            let c = (x / stride) % n;
            let y = x - c * stride + ((c + 1) % n) * stride;
            acc += (h[y] - h[x]).powi(2);
            stride *= n;
        }
    }
    acc
}

fn interpolation_identity(_: &mut Context) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst: f64 = 0.0;
    let mut count = 0;
    for d in 1..=3 {
        for n in 1usize..=6 {
            for alpha in [1.0, 2.0, 4.0] {
                for k in 0..100 {
                    let p = if k % 2 == 0 { 2.0 } else { 1.0 + rng.random::<f64>() * 3.0 };
                    let v = n.pow(d as u32);
                    let vals: Vec<f64> = (0..v).map(|_| rng.sample(StandardNormal)).collect();
                    let h = LatticeFunction::new(n, d, vals.clone()).unwrap();
                    let g = interpolate_to_continuum(&h, alpha, p).unwrap();
                    let want = alpha.powf(2.0 - d as f64 / conjugate(p)) * lattice_gradient_energy(n, d, &vals);
                    let got = g.gradient_energy();
                    let err = if want == 0.0 { got.abs() } else { (got - want).abs() / want };
                    worst = worst.max(err);
                    count += 1;
                }
            }
        }
    }
    outcome(worst <= 1e-12, format!("max relative error {worst:.2e} over {count} functions"))
}

// ---------------------------------------------------------------- 6

fn truncation_bound(_: &mut Context) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut violations = 0;
    let mut count = 0;
    let mut worst_quad: f64 = 0.0;
    for radius in [4.0, 8.0] {
        for epsilon in [0.3, 0.5] {
            for k in 0..100 {
                let d = 1 + k % 2;
                let nodes: usize = rng.random_range(3..=8);
                let period = rng.random_range(0.5 * nodes as f64..2.0 * radius + 3.0);
                let origin = rng.random_range(-period..period);
                let vals: Vec<f64> = (0..nodes.pow(d as u32)).map(|_| rng.sample(StandardNormal)).collect();
                let g = ContinuumFunction::periodic(d, nodes, period / nodes as f64, origin, vals).unwrap();
                let report = truncate(&g, radius, epsilon).unwrap().energy_bound();
                if !report.holds {
                    violations += 1;
                }
                worst_quad = worst_quad.max(report.quadrature_error);
                count += 1;
            }
        }
    }
    outcome(
        violations == 0,
        format!("{violations} violations over {count} functions (quadrature error <= {worst_quad:.1e})"),
    )
}

// ---------------------------------------------------------------- 7

fn optimal_a_matches_chi(ctx: &mut Context) -> Outcome {
    let cases = [
        (1usize, 2.0, 8.0, 0.05, vec![2.0, 3.0, 4.5, 6.0, 9.0]),
        (2, 1.5, 8.0, 0.2, vec![3.0, 5.0, 7.0, 10.0, 14.0]),
    ];
    let mut pass = true;
    let mut detail = Vec::new();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for (d, p, radius, mesh, grid) in cases {
        let params = ProblemParams::subcritical(d, p).unwrap();
        let opt = optimize_a(d, p, radius, mesh, &grid, 1e-7).unwrap();
        pass &= opt.chi_check <= 0.02;
        if d == 1 {
            ctx.chi_1_2 = Some(opt.chi);
        }
        // β-optimality on the ρ(a*) minimizer and on random profiles
        let a = opt.a_star_analytic;
        let s = a.sqrt();
        let rho = solve_rho_continuum(a, d, p, radius / s, mesh / s, 1e-7).unwrap();
        let mut profiles = vec![rho.continuum().unwrap().clone()];
        for _ in 0..5 {
            let c: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
            let w = rng.random_range(0.5..2.0);
            profiles.push(
                ContinuumFunction::on_cube(d, 6.0, 0.25, |x| {
                    let r2: f64 = x.iter().zip(&c).map(|(a, b)| (a - b).powi(2)).sum();
                    (-r2 / (w * w)).exp()
                })
                .unwrap(),
            );
        }
        let mut violations = 0;
        for h in &profiles {
            let (m, g) = (h.mass(), h.gradient_energy());
            let bs = beta_star(&params, a, m, g);
            let best = beta_phi(&params, a, m, g, bs);
            for i in 0..100 {
                let beta = bs * 10f64.powf(-2.0 + 4.0 * i as f64 / 99.0);
                if beta_phi(&params, a, m, g, beta) < best * (1.0 - 1e-12) {
                    violations += 1;
                }
            }
        }
        pass &= violations == 0;
        detail.push(format!(
            "d={d},p={p}: inf={:.6} chi={:.6} rel={:.1e} a*={:.4} (analytic {:.4}), beta violations {violations}",
            opt.inf_value, opt.chi, opt.chi_check, opt.a_star_grid, opt.a_star_analytic
        ));
    }
    outcome(pass, detail.join("; "))
}

// ---------------------------------------------------------------- 8

fn gn_routes(_: &mut Context) -> Outcome {
    let mut pass = true;
    let mut detail = Vec::new();
    for (d, p, mesh) in [(1usize, 2.0, 0.05), (2, 1.5, 0.2)] {
        let k = gagliardo_nirenberg_constant(d, p, 8.0, mesh, 1e-7).unwrap();
        let gap = k.diagnostics["relative_gap"];
        pass &= gap <= 0.02;
        detail.push(format!("d={d},p={p}: K={:.6} gap {gap:.1e}", k.value));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut worst: f64 = 0.0;
    for k in 0..40 {
        let d = 1 + k % 2;
        let p = 1.2 + rng.random::<f64>() * 2.0;
        let mut g = ContinuumFunction::on_cube(d, 3.0, 0.5, |_| 0.0).unwrap();
        for v in g.values.iter_mut() {
            *v = rng.sample(StandardNormal);
        }
        let g = ContinuumFunction::on_cube(d, 3.0, 0.5, |x| g.value_at(x)).unwrap();
        let base = gn_quotient(&g, p);
        for _ in 0..5 {
            let beta = 10f64.powf(rng.random_range(-1.0..1.0));
            let amp = 10f64.powf(rng.random_range(-2.0..2.0));
            let q = gn_quotient(&g.dilate(beta, amp), p);
            worst = worst.max((q - base).abs() / base);
        }
    }
    pass &= worst <= 1e-8;
    detail.push(format!("scale invariance {worst:.1e}"));
    outcome(pass, detail.join("; "))
}

// ---------------------------------------------------------------- 9

fn eisenbaum_matrix(_: &mut Context) -> Outcome {
    let mut z = Vec::new();
    let mut closed_ok = true;
    let mut cell = 0u64;
    for n in 1..=3 {
        for d in 1..=2 {
            for lambda in [0.5, 1.0] {
                for s in [0.5, 1.0, 2.0] {
                    cell += 1;
                    let green = build_green(n, d, lambda).unwrap();
                    let v = green.volume() as f64;
                    let site_mean = 1.0 / lambda + 0.5 * (green.origin() + s * s);
                    let norms = lhs_norm_samples(&green, s, 2.0, 20_000, 1000 + cell);
                    let functionals = [
                        Functional::ClippedSite { site: 0, clip: 1e3 },
                        Functional::ClippedSquareSum { clip: v * site_mean * site_mean },
                        Functional::NormIndicator {
                            p: 2.0,
                            threshold: empirical_quantile(&norms, 0.5),
                        },
                    ];
                    let reports = eisenbaum_check_many(&green, s, &functionals, 1_000_000, cell).unwrap();
                    if n == 1 {
                        let exact = 1.0 / lambda + 0.5 * (1.0 / lambda + s * s);
                        let r = &reports[0];
                        closed_ok &= (r.lhs - exact).abs() <= 4.0 * r.se_lhs
                            && (r.rhs - exact).abs() <= 4.0 * r.se_rhs;
                    }
                    z.extend(reports.iter().map(|r| r.z_score));
                }
            }
        }
    }
    let within = z.iter().filter(|&&x| x <= 4.0).count();
    let worst = z.iter().cloned().fold(0.0, f64::max);
    let frac = within as f64 / z.len() as f64;
    outcome(
        frac >= 0.95 && worst <= 6.0 && closed_ok,
        format!(
            "{within}/{} cells within 4 SE, worst {worst:.2} SE, closed-form cells {}",
            z.len(),
            if closed_ok { "match" } else { "MISMATCH" }
        ),
    )
}

// ---------------------------------------------------------------- 10

fn rate_trend(ctx: &mut Context) -> Outcome {
    let chi = match ctx.chi_1_2 {
        Some(c) => c,
        None => {
            let opt = optimize_a(1, 2.0, 8.0, 0.05, &[2.0, 3.0, 4.5, 6.0, 9.0], 1e-7).unwrap();
            ctx.chi_1_2 = Some(opt.chi);
            opt.chi
        }
    };
    let params = ProblemParams::subcritical(1, 2.0).unwrap();
    let t_grid = [4.0, 8.0, 12.0, 16.0, 20.0, 24.0];
    let schedule = RSchedule { c: 1.0, theta: 0.2 };
    let record = tail_probability_mc(&params, &t_grid, schedule, 10_000_000, 10, 1.0).unwrap();
    let fit = rate_extraction(&record).unwrap();
    let negative = fit.slope < 0.0;
    let factor_two = fit.slope.abs() >= 0.5 * chi && fit.slope.abs() <= 2.0 * chi;
    let upper: Vec<f64> = fit.pointwise[fit.pointwise.len() / 2..].iter().map(|r| r.2).collect();
    let toward = |target: f64| upper.windows(2).all(|w| (w[1] - target).abs() < (w[0] - target).abs());
    let monotone = upper.windows(2).all(|w| w[1] > w[0]) || upper.windows(2).all(|w| w[1] < w[0]);
    let trend = monotone && toward(chi);

    let mut anchors_ok = true;
    for (k, t) in [1.0, 2.0].into_iter().enumerate() {
        let pt = tail_point(&params, t, 1.0, 1_000_000, 100 + k as u64).unwrap();
        let exact = (-2.0 * t).exp();
        let se = (exact * (1.0 - exact) / pt.n as f64).sqrt();
        anchors_ok &= (pt.estimate - exact).abs() <= 4.0 * se;
    }
    let pointwise: Vec<String> = fit.pointwise.iter().map(|r| format!("{:.3}", r.2)).collect();
    outcome(
        negative && factor_two && trend && anchors_ok,
        format!(
            "slope {:.3} +- {:.3} vs -chi={:.3} (negative {negative}, factor 2 {factor_two}); \
             pointwise [{}], monotone toward chi {trend} (toward 2chi {}); no-jump anchors {}",
            fit.slope,
            fit.slope_se,
            -chi,
            pointwise.join(", "),
            monotone && toward(2.0 * chi),
            if anchors_ok { "ok" } else { "off" }
        ),
    )
}

// ---------------------------------------------------------------- 11

fn folding(_: &mut Context) -> Outcome {
    let mut total = 0;
    let mut folding = 0;
    let mut mass = 0;
    let mut holds = Vec::new();
    for (d, p) in [(1usize, 2.0), (2, 2.0), (3, 1.5)] {
        let params = ProblemParams::new(d, p).unwrap();
        let scaling = ScalingSchedule::new(&params, 1.0, 2.0, 8.0, 0.5).unwrap();
        let rec = periodization_stopping_check(&params, &scaling, 10_000, 11 + d as u64).unwrap();
        total += rec.n_samples;
        folding += rec.folding_violations;
        mass += rec.mass_violations;
        holds.push(format!("d={d} z={:.2}", rec.z_score));
    }
    outcome(
        folding == 0 && mass == 0,
        format!(
            "{folding} folding and {mass} mass violations over {total} trajectories; stopping inequality {}",
            holds.join(", ")
        ),
    )
}
