//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Runs without the libtest harness so the report is always printed. Exits
//! nonzero if any criterion fails.

use std::time::{Duration, Instant};

use psq::sim::{simulate, BatchLaw, SimConfig, SimScenario};
use psq::tlps::log_grid;
use psq::{solve_bps, BpsInput, CauchySystem, HyperExp, SecularProblem, TlpsModel};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

/// Random hyper-exponential with `n` phases and rates log-uniform in
/// `[1e-2, 1e2]`.
fn random_law(rng: &mut ChaCha8Rng, n: usize) -> HyperExp {
    let w: Vec<f64> = (0..n).map(|_| rng.random_range(0.05..1.0)).collect();
    let total: f64 = w.iter().sum();
    HyperExp::new(
        w.iter()
            .map(|p| (p / total, 10f64.powf(rng.random_range(-2.0..2.0))))
            .collect::<Vec<_>>(),
    )
    .unwrap()
}

/// Random stable BPS input with load in `[0.05, rho_max]`.
fn random_bps(rng: &mut ChaCha8Rng, max_phases: usize, rho_max: f64, b_extra: f64) -> BpsInput {
    let n = rng.random_range(1..=max_phases);
    let law = random_law(rng, n);
    let n_bar = rng.random_range(1.0..4.0);
    let rho = rng.random_range(0.05..rho_max);
    BpsInput::new(rho / (n_bar * law.mean()), n_bar, b_extra, law).unwrap()
}

fn instance_a() -> BpsInput {
    BpsInput::new(
        0.5,
        2.0,
        1.0,
        HyperExp::new([(0.5, 2.0), (0.5, 1.0)]).unwrap(),
    )
    .unwrap()
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

fn plain_ps_reduction() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let mut worst = 0.0f64;
    for _ in 0..20 {
        let input = random_bps(&mut rng, 8, 0.95, 0.0);
        let sol = solve_bps(&input).unwrap();
        let m = input.service.mean();
        let c0 = 1.0 / (1.0 - input.rho());
        for i in 1..=50 {
            let x = 10.0 * m * i as f64 / 50.0;
            worst = worst.max(rel(sol.alpha(x).unwrap(), x * c0));
        }
        worst = worst.max(rel(sol.mean_sojourn(), m * c0));
    }
    outcome(worst < 1e-10, format!("max rel err {worst:.2e} (< 1e-10)"))
}

fn instance_a_goldens() -> Outcome {
    let sol = solve_bps(&instance_a()).unwrap();
    let b = sol.root_values();
    let s = 0.5f64.sqrt();
    let root_err = (b[0] - (1.0 + s)).abs().max((b[1] - (1.0 - s)).abs());
    let c0_exact = sol.c0 == 4.0;
    let c_err = (sol.coeffs[0] - 0.215228)
        .abs()
        .max((sol.coeffs[1] - 2.159772).abs());
    let t = sol.mean_sojourn();
    // Independent oracles: dense LU for x, quadrature for ∫ α dB.
    let sys =
        CauchySystem::from_squares(vec![4.0, 1.0], vec![(1.0 + s).powi(2), (1.0 - s).powi(2)])
            .unwrap();
    let dense = sys.solve_direct().unwrap();
    let x_err = sol
        .cauchy
        .x
        .iter()
        .zip(&dense)
        .map(|(a, b)| rel(*a, *b))
        .fold(0.0, f64::max);
    let law = &sol.input.service;
    let quad = quadrature::integrate(
        |x| sol.alpha(x).unwrap() * law.pdf(x).unwrap(),
        0.0,
        60.0,
        1e-12,
    )
    .integral;
    let pass = root_err < 1e-12
        && c0_exact
        && c_err < 1e-5
        && (t - 4.375).abs() < 1e-4
        && x_err < 1e-12
        && (quad - t).abs() < 1e-9;
    outcome(
        pass,
        format!(
            "roots err {root_err:.1e}, c0 = {}, c err {c_err:.1e}, T = {t:.10}, \
             LU rel {x_err:.1e}, quadrature {quad:.10}",
            sol.c0
        ),
    )
}

fn kleinrock_residual() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(303);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let b = rng.random_range(0.0..5.0);
        let input = random_bps(&mut rng, 8, 0.95, b);
        let sol = solve_bps(&input).unwrap();
        let m = input.service.mean();
        for i in 0..=50 {
            let x = 10.0 * m * i as f64 / 50.0;
            let slope = sol.alpha_derivatives(x).unwrap().0;
            worst = worst.max(sol.kleinrock_residual(x).unwrap().abs() / slope);
        }
    }
    // Probe: a 1% error on the dominant coefficient must be visible.
    let base = solve_bps(&instance_a()).unwrap();
    let mut probe = base.clone();
    let k = (0..probe.coeffs.len())
        .max_by(|&i, &j| probe.coeffs[i].total_cmp(&probe.coeffs[j]))
        .unwrap();
    probe.coeffs[k] *= 1.01;
    let probe_res = (0..=50)
        .map(|i| {
            let x = 0.1 * i as f64;
            probe.kleinrock_residual(x).unwrap().abs() / probe.alpha_derivatives(x).unwrap().0
        })
        .fold(0.0, f64::max);
    outcome(
        worst < 1e-8 && probe_res > 1e-3,
        format!("max rel residual {worst:.2e} (< 1e-8), perturbed {probe_res:.2e} (> 1e-3)"),
    )
}

fn cauchy_module() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(404);
    let (mut x_worst, mut det_worst, mut all_positive) = (0.0f64, 0.0f64, true);
    for _ in 0..200 {
        let n = rng.random_range(1..=10);
        // μ_1² > b_1² > μ_2² > … with every ratio at most 1 - 1e-3.
        let mut v = 10f64.powf(rng.random_range(-1.0..3.0));
        let mut seq = Vec::with_capacity(2 * n);
        for _ in 0..2 * n {
            seq.push(v);
            let gap = 10f64.powf(rng.random_range(-3.0..-0.05));
            v *= 1.0 - gap;
        }
        let mu_sq: Vec<f64> = seq.iter().step_by(2).copied().collect();
        let b_sq: Vec<f64> = seq.iter().skip(1).step_by(2).copied().collect();
        let sys = CauchySystem::from_squares(mu_sq, b_sq).unwrap();
        let x = sys.solve_closed_form().unwrap().x;
        let dense = sys.solve_direct().unwrap();
        let scale = dense.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        let err = x
            .iter()
            .zip(&dense)
            .fold(0.0f64, |a, (p, q)| a.max((p - q).abs()));
        x_worst = x_worst.max(err / scale);
        det_worst = det_worst.max(rel(sys.determinant().unwrap(), sys.determinant_direct()));
        all_positive &= x.iter().all(|v| *v > 0.0);
    }
    outcome(
        x_worst < 1e-8 && det_worst < 1e-8 && all_positive,
        format!(
            "closed vs LU {x_worst:.2e}, determinant {det_worst:.2e}, all x > 0: {all_positive}"
        ),
    )
}

fn spectral_module() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(505);
    let (mut in_bracket, mut psi_worst, mut prod_worst) = (true, 0.0f64, 0.0f64);
    for _ in 0..1000 {
        let n = rng.random_range(1..=50);
        let law = random_law(&mut rng, n);
        let rho = rng.random_range(0.01..0.99);
        let problem = SecularProblem::new(rho / law.mean(), &law).unwrap();
        let roots = problem.find_roots().unwrap();
        for k in 0..roots.len() {
            let (lo, hi) = roots.bracket(k);
            let b = roots.roots()[k].value;
            in_bracket &= lo < b && b < hi;
        }
        psi_worst = roots
            .residuals(&problem)
            .iter()
            .fold(psi_worst, |a, r| a.max(r.abs()));
        // Π b / Π μ in log space.
        let log_ratio: f64 = roots
            .values()
            .iter()
            .zip(roots.rates())
            .map(|(b, mu)| (b / mu).ln())
            .sum();
        prod_worst = prod_worst.max(rel(log_ratio.exp(), 1.0 - problem.load()));
    }
    outcome(
        in_bracket && psi_worst < 1e-12 && prod_worst < 1e-10,
        format!(
            "in brackets: {in_bracket}, max |Ψ(-b)| {psi_worst:.2e}, Πb/Πμ vs 1-ρ {prod_worst:.2e}"
        ),
    )
}

fn tlps_identities() -> Outcome {
    let models = [
        TlpsModel::new(0.5, HyperExp::new([(0.5, 2.0), (0.5, 1.0)]).unwrap()).unwrap(),
        TlpsModel::new(
            0.8 / 1.09,
            HyperExp::new([(0.9, 10.0), (0.1, 0.1)]).unwrap(),
        )
        .unwrap(),
    ];
    let (mut limit_worst, mut c0_worst, mut jump_worst) = (0.0f64, 0.0f64, 0.0f64);
    for model in &models {
        let m = model.jobsize.mean();
        let baseline = m / (1.0 - model.rho());
        for theta in [0.0, 1e3 * m] {
            limit_worst = limit_worst.max((model.evaluate(theta).unwrap().t_mean - baseline).abs());
        }
        for theta in log_grid(1e-3 * m, 1e2 * m, 64) {
            let e = model.evaluate(theta).unwrap();
            c0_worst = c0_worst.max((e.c0() * (1.0 - e.rho) - (1.0 - e.rho_theta)).abs());
            let left = e.conditional_sojourn(theta).unwrap();
            let right = e.conditional_sojourn(theta.next_up()).unwrap();
            jump_worst = jump_worst.max((right - left - e.w_bar / (1.0 - e.rho_theta)).abs());
        }
    }
    outcome(
        limit_worst < 1e-6 && c0_worst < 1e-10 && jump_worst < 1e-10,
        format!("limits {limit_worst:.2e}, c0 identity {c0_worst:.2e}, jump {jump_worst:.2e}"),
    )
}

fn simulation_agreement() -> Outcome {
    let law = HyperExp::new([(0.5, 2.0), (0.5, 1.0)]).unwrap();
    let edges = vec![0.25, 0.5, 1.0, 1.5, 2.0, 3.0, 4.0];
    let mut details = Vec::new();
    let mut pass = true;

    let bps = solve_bps(&instance_a()).unwrap();
    let mut cfg = SimConfig::new(
        SimScenario::Bps {
            lambda: 0.5,
            batch: BatchLaw::deterministic(2).unwrap(),
            service: law.clone(),
        },
        100_000,
    );
    cfg.horizon += cfg.warmup;
    cfg.replications = 20;
    cfg.seed = 42;
    cfg.size_bins = edges.clone();
    let r = simulate(&cfg).unwrap();
    let mut check =
        |name: &str, r: &psq::SimResult, analytic: f64, bin: &dyn Fn(f64, f64) -> f64| {
            let ok = r.agrees_with(analytic, 3.0);
            let mut bins_ok = 0;
            let mut bins_checked = 0;
            for b in r.bins.iter().filter(|b| b.count >= 1000) {
                bins_checked += 1;
                let expect = bin(b.lo, b.hi);
                if (b.mean - expect).abs() < 3.0 * b.stderr {
                    bins_ok += 1;
                } else {
                    details.push(format!(
                        "{name} bin [{}, {}) sim {:.4} ± {:.4} vs {expect:.4}",
                        b.lo, b.hi, b.mean, b.stderr
                    ));
                }
            }
            pass &= ok && bins_ok == bins_checked;
            details.push(format!(
                "{name} sim {:.4} ± {:.4} vs {analytic:.4}, bins {bins_ok}/{bins_checked}",
                r.mean_sojourn, r.stderr
            ));
        };
    check("BPS", &r, bps.mean_sojourn(), &|lo, hi| {
        bps.mean_alpha_between(lo, hi)
    });

    let model = TlpsModel::new(0.5, law.clone()).unwrap();
    let eval = model.evaluate(1.0).unwrap();
    cfg.scenario = SimScenario::Tlps {
        lambda: 0.5,
        jobsize: law.clone(),
        theta: 1.0,
    };
    let r = simulate(&cfg).unwrap();
    check("TLPS", &r, eval.t_mean, &|lo, hi| {
        eval.mean_sojourn_between(&law, lo, hi)
    });
    outcome(pass, details.join("; "))
}

fn threshold_benefit() -> Outcome {
    let law = HyperExp::new([(0.9, 10.0), (0.1, 0.1)]).unwrap();
    let model = TlpsModel::new(0.8 / law.mean(), law.clone()).unwrap();
    let baseline = model.baseline();
    let report = model.sweep(&model.default_grid()).unwrap();
    let analytic_ok = report.best_t < 0.995 * baseline;
    let mut cfg = SimConfig::new(
        SimScenario::Tlps {
            lambda: model.lambda,
            jobsize: law,
            theta: report.best_theta,
        },
        100_000,
    );
    cfg.horizon += cfg.warmup;
    cfg.replications = 20;
    cfg.seed = 8;
    let r = simulate(&cfg).unwrap();
    let sim_ok = r.mean_sojourn + 3.0 * r.stderr < baseline;
    outcome(
        analytic_ok && sim_ok,
        format!(
            "θ* = {:.4}, T(θ*) = {:.4} vs 0.995·PS = {:.4}; sim {:.4} ± {:.4} vs PS {baseline:.4}",
            report.best_theta,
            report.best_t,
            0.995 * baseline,
            r.mean_sojourn,
            r.stderr
        ),
    )
}

fn concavity() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(909);
    let mut inputs = vec![instance_a()];
    for _ in 0..100 {
        let b = rng.random_range(0.01..5.0);
        inputs.push(random_bps(&mut rng, 8, 0.95, b));
    }
    let (mut concave, mut slope_ok, mut worst_curv) = (true, true, f64::NEG_INFINITY);
    for input in &inputs {
        let sol = solve_bps(input).unwrap();
        let m = input.service.mean();
        for i in 0..=50 {
            let (_, curv) = sol.alpha_derivatives(20.0 * m * i as f64 / 50.0).unwrap();
            concave &= curv < 0.0;
            worst_curv = worst_curv.max(curv);
        }
        slope_ok &= sol.alpha_derivatives(0.0).unwrap().0 >= 1.0 / (1.0 - sol.rho);
    }
    outcome(
        concave && slope_ok,
        format!(
            "α'' < 0 everywhere: {concave} (max {worst_curv:.2e}); α'(0+) >= 1/(1-ρ): {slope_ok}"
        ),
    )
}

fn main() {
    type Criterion = (&'static str, fn() -> Outcome, Duration);
    let criteria: [Criterion; 9] = [
        (
            "plain-PS reduction",
            plain_ps_reduction,
            Duration::from_secs(1),
        ),
        (
            "instance A goldens",
            instance_a_goldens,
            Duration::from_secs(1),
        ),
        (
            "Kleinrock residual",
            kleinrock_residual,
            Duration::from_secs(10),
        ),
        ("Cauchy closed form", cauchy_module, Duration::from_secs(5)),
        ("secular roots", spectral_module, Duration::from_secs(10)),
        (
            "TLPS limits and identities",
            tlps_identities,
            Duration::from_secs(5),
        ),
        (
            "simulation agreement",
            simulation_agreement,
            Duration::from_secs(120),
        ),
        (
            "threshold benefit",
            threshold_benefit,
            Duration::from_secs(120),
        ),
        (
            "concavity and slope jump",
            concavity,
            Duration::from_secs(1),
        ),
    ];
    let mut failures = 0;
    for (i, (name, run, budget)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let out = run();
        let elapsed = start.elapsed();
        let on_time = elapsed <= *budget;
        let pass = out.pass && on_time;
        if !pass {
            failures += 1;
        }
        println!(
            "criterion {}: {} {name}: {} [{:.2}s of {}s{}]",
            i + 1,
            if pass { "PASS" } else { "FAIL" },
            out.detail,
            elapsed.as_secs_f64(),
            budget.as_secs(),
            if on_time { "" } else { ", over budget" }
        );
    }
    if failures > 0 {
        println!("{failures} criteria failed");
        std::process::exit(1);
    }
}
