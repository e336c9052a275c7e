use std::path::Path;

use psq::sim::{simulate as run_sim, SimResult};
use psq::spectral::Anchor;
use psq::tlps::{linear_grid, scan_grid, TlpsEvaluation};
use psq::{solve_bps, BpsSolution, SecularProblem};

use crate::format::{num, short, short_list, Csv, Output};
use crate::scenario::{Model, Scenario, SimOverrides};
use crate::{AnalyzeArgs, CliError, GridArgs, SimArgs};

/// Bins with fewer samples are shown by `compare` but not judged.
const MIN_BIN_COUNT: u64 = 1000;

fn load(path: &Path) -> Result<(Scenario, Model), CliError> {
    let scenario = Scenario::load(path)?;
    let model = scenario.model()?;
    Ok((scenario, model))
}

fn x_grid(lo: f64, hi: f64, points: usize) -> Result<Vec<f64>, CliError> {
    if !(lo >= 0.0 && hi >= lo && hi.is_finite()) || points == 0 {
        return Err(CliError::Malformed(format!(
            "bad x grid: [{lo}, {hi}] with {points} points"
        )));
    }
    Ok(linear_grid(lo, hi, points))
}

fn describe_bps(out: &mut Output, sol: &BpsSolution, a: &AnalyzeArgs) -> Result<(), CliError> {
    let values = sol.root_values();
    out.say(format!("roots = {}", short_list(&values)));
    out.say(format!("coefficients = {}", short_list(&sol.coeffs)));
    if sol.roots.near_degenerate() {
        out.say("warning: near-degenerate spectrum");
    }
    if let Some(cond) = sol.cauchy.condition {
        out.say(format!(
            "warning: Cauchy condition estimate {}",
            short(cond)
        ));
    }
    if a.dump_roots && !values.is_empty() {
        let problem = SecularProblem::new(sol.input.lambda * sol.input.n_bar, &sol.input.service)?;
        let residuals = sol.roots.residuals(&problem);
        out.say("k,mu,b,anchor,offset,psi,bracket_lo,bracket_hi");
        for (k, r) in sol.roots.roots().iter().enumerate() {
            let anchor = match r.anchor {
                Anchor::Origin => "origin".to_string(),
                Anchor::Pole(q) => format!("pole{}", q + 1),
            };
            let (lo, hi) = sol.roots.bracket(k);
            out.say(format!(
                "{},{},{},{anchor},{},{},{},{}",
                k + 1,
                short(sol.roots.rates()[k]),
                short(r.value),
                short(r.offset),
                short(residuals[k]),
                short(lo),
                short(hi)
            ));
        }
    }
    if a.dump_coefficients {
        out.say("k,x,c,c_over_b");
        for (k, (x, c)) in sol.cauchy.x.iter().zip(&sol.coeffs).enumerate() {
            out.say(format!(
                "{},{},{},{}",
                k + 1,
                short(*x),
                short(*c),
                short(c / values[k])
            ));
        }
        out.say(format!("offset = {}", short(sol.offset())));
    }
    Ok(())
}

pub fn analyze(a: &AnalyzeArgs) -> Result<(), CliError> {
    let (_, model) = load(&a.common.scenario)?;
    let mut out = Output::default();
    match model {
        Model::Bps { input, .. } => {
            if a.common.theta.is_some() {
                return Err(CliError::Malformed(
                    "--theta applies to tlps scenarios".into(),
                ));
            }
            let sol = solve_bps(&input)?;
            out.say("kind = bps");
            out.say(format!("lambda = {}", short(input.lambda)));
            out.say(format!("n_bar = {}", short(input.n_bar)));
            out.say(format!("b_extra = {}", short(input.b_extra)));
            out.say(format!("rho = {}", short(sol.rho)));
            out.say(format!("c0 = {}", short(sol.c0)));
            out.say(format!("T_mean = {}", short(sol.mean_sojourn())));
            describe_bps(&mut out, &sol, a)?;
            if a.curve {
                let hi = a.x_max.unwrap_or(10.0 * input.service.mean());
                let mut csv = Csv::new(&["x", "alpha", "alpha_prime", "alpha_second", "residual"]);
                for x in x_grid(a.x_min, hi, a.x_points)? {
                    let (d1, d2) = sol.alpha_derivatives(x)?;
                    csv.row(&[x, sol.alpha(x)?, d1, d2, sol.kleinrock_residual(x)?]);
                }
                out.table = Some(csv.into_string());
            }
        }
        Model::Tlps { model, theta } => {
            let theta = a.common.theta.or(theta).ok_or_else(|| {
                CliError::Malformed("tlps analyze needs theta (scenario or --theta)".into())
            })?;
            let e = model.evaluate(theta)?;
            out.say("kind = tlps");
            out.say(format!("lambda = {}", short(model.lambda)));
            out.say(format!("theta = {}", short(theta)));
            out.say(format!("rho = {}", short(e.rho)));
            out.say(format!("rho_theta = {}", short(e.rho_theta)));
            out.say(format!("w_bar = {}", short(e.w_bar)));
            out.say(format!("n_bar = {}", short(e.n_bar)));
            out.say(format!("b_extra = {}", short(e.b_extra)));
            out.say(format!("c0 = {}", short(e.c0())));
            out.say(format!("jump = {}", short(e.jump())));
            out.say(format!("T_mean = {}", short(e.t_mean)));
            out.say(format!("baseline = {}", short(e.baseline)));
            out.say(format!("improvement_pct = {}", short(e.improvement_pct())));
            if let Some(sol) = &e.bps {
                describe_bps(&mut out, sol, a)?;
            }
            if a.curve {
                let hi = a.x_max.unwrap_or(10.0 * model.jobsize.mean());
                let mut csv = Csv::new(&["x", "t_tlps"]);
                for x in x_grid(a.x_min, hi, a.x_points)? {
                    csv.row(&[x, e.conditional_sojourn(x)?]);
                }
                out.table = Some(csv.into_string());
            }
        }
    }
    out.emit(a.common.out.as_deref())
}

fn sweep_row(csv: &mut Csv, e: &TlpsEvaluation) {
    csv.row(&[
        e.theta,
        e.rho_theta,
        e.w_bar,
        e.n_bar,
        e.b_extra,
        e.t_mean,
        e.baseline,
        e.improvement_pct(),
    ]);
}

pub fn sweep(a: &GridArgs, optimize: bool) -> Result<(), CliError> {
    let (_, model) = load(&a.common.scenario)?;
    let Model::Tlps { model, .. } = model else {
        return Err(CliError::Malformed(
            "sweep and optimize need a tlps scenario".into(),
        ));
    };
    let lo = a.theta_min;
    let hi = a.theta_max.unwrap_or(100.0 * model.jobsize.mean());
    if !(lo >= 0.0 && hi >= lo && hi.is_finite()) || a.points == 0 {
        return Err(CliError::Malformed(format!(
            "bad theta grid: [{lo}, {hi}] with {} points",
            a.points
        )));
    }
    let grid = if lo == hi {
        vec![lo]
    } else if a.log {
        scan_grid(lo, hi, a.points)
    } else {
        linear_grid(lo, hi, a.points)
    };
    let report = model.sweep(&grid)?;
    let mut csv = Csv::new(&[
        "theta",
        "rho_theta",
        "w_bar",
        "n_bar",
        "b_extra",
        "t_mean",
        "baseline",
        "improvement_pct",
    ]);
    for row in &report.rows {
        sweep_row(&mut csv, row);
    }
    let mut out = Output::default();
    out.say(format!("rows = {}", report.rows.len()));
    out.say(format!("baseline = {}", short(report.ps_baseline)));
    out.say(format!("best_theta = {}", short(report.best_theta)));
    out.say(format!("best_t = {}", short(report.best_t)));
    out.say(format!(
        "best_improvement_pct = {}",
        short(report.rows[report.best_index].improvement_pct())
    ));
    if optimize {
        let opt = model.optimize(lo, hi)?;
        csv.line(&format!("theta_star,{}", num(opt.theta)));
        csv.line(&format!("t_star,{}", num(opt.t_mean)));
        csv.line(&format!("improvement_pct,{}", num(opt.improvement_pct())));
        out.say(format!("theta_star = {}", short(opt.theta)));
        out.say(format!("t_star = {}", short(opt.t_mean)));
        out.say(format!(
            "improvement_pct = {}",
            short(opt.improvement_pct())
        ));
        out.say(format!("evaluations = {}", opt.evaluations));
    }
    out.table = Some(csv.into_string());
    out.emit(a.common.out.as_deref())
}

/// Analytic mean and per-bin conditional means for the simulated scenario.
struct Analytic {
    mean: f64,
    bin: Box<dyn Fn(f64, f64) -> f64>,
}

fn analytic(model: &Model, theta: f64) -> Result<Analytic, CliError> {
    Ok(match model {
        Model::Bps { input, .. } => {
            let sol = solve_bps(input)?;
            Analytic {
                mean: sol.mean_sojourn(),
                bin: Box::new(move |lo, hi| sol.mean_alpha_between(lo, hi)),
            }
        }
        Model::Tlps { model, .. } => {
            let e = model.evaluate(theta)?;
            let law = model.jobsize.clone();
            Analytic {
                mean: e.t_mean,
                bin: Box::new(move |lo, hi| e.mean_sojourn_between(&law, lo, hi)),
            }
        }
    })
}

fn is_json(path: Option<&Path>) -> bool {
    path.and_then(|p| p.extension())
        .is_some_and(|ext| ext.eq_ignore_ascii_case("json"))
}

fn summary(out: &mut Output, r: &SimResult) {
    out.say(format!("mean_sojourn = {}", short(r.mean_sojourn)));
    out.say(format!("stderr = {}", short(r.stderr)));
    out.say(format!("ci95 = {}", short(r.ci95)));
    out.say(format!("replications = {}", r.replications));
    out.say(format!("seed = {}", r.seed));
    out.say(format!("jobs = {}", r.jobs));
}

pub fn simulate(a: &SimArgs, compare: bool) -> Result<(), CliError> {
    let (scenario, model) = load(&a.common.scenario)?;
    if matches!(model, Model::Bps { .. }) && a.common.theta.is_some() {
        return Err(CliError::Malformed(
            "--theta applies to tlps scenarios".into(),
        ));
    }
    let overrides = SimOverrides {
        horizon: a.horizon,
        warmup: a.warmup,
        replications: a.replications,
        seed: a.seed,
        theta: a.common.theta,
    };
    let cfg = model.sim_config(scenario.sim.as_ref(), &overrides)?;
    let result = run_sim(&cfg)?;
    let out_path = a.common.out.as_deref();
    let mut out = Output::default();
    summary(&mut out, &result);

    if !compare {
        out.table = Some(if is_json(out_path) {
            serde_json::to_string_pretty(&result)
                .map_err(|e| CliError::Malformed(format!("json: {e}")))?
                + "\n"
        } else {
            let mut csv = Csv::new(&["bin_lo", "bin_hi", "count", "mean", "stderr"]);
            for b in &result.bins {
                csv.row(&[b.lo, b.hi, b.count as f64, b.mean, b.stderr]);
            }
            csv.into_string()
        });
        return out.emit(out_path);
    }

    let theta = match cfg.scenario {
        psq::SimScenario::Tlps { theta, .. } => theta,
        psq::SimScenario::Bps { .. } => 0.0,
    };
    let exact = analytic(&model, theta)?;
    let mut csv = Csv::new(&[
        "row",
        "lo",
        "hi",
        "count",
        "analytic",
        "simulated",
        "stderr",
        "delta",
        "verdict",
    ]);
    let mut failed = 0;
    let mut judge =
        |csv: &mut Csv, name: &str, lo: f64, hi: f64, count: u64, want: f64, got: f64, se: f64| {
            let delta = got - want;
            let pass = delta.abs() < 3.0 * se;
            if !pass {
                failed += 1;
            }
            let cells: Vec<String> = [lo, hi, count as f64, want, got, se, delta]
                .iter()
                .map(|v| num(*v))
                .collect();
            csv.line(&format!(
                "{name},{},{}",
                cells.join(","),
                if pass { "PASS" } else { "FAIL" }
            ));
        };
    judge(
        &mut csv,
        "mean",
        0.0,
        f64::INFINITY,
        result.jobs,
        exact.mean,
        result.mean_sojourn,
        result.stderr,
    );
    if result.bins.len() > 1 {
        for b in result.bins.iter().filter(|b| b.count >= MIN_BIN_COUNT) {
            judge(
                &mut csv,
                "bin",
                b.lo,
                b.hi,
                b.count,
                (exact.bin)(b.lo, b.hi),
                b.mean,
                b.stderr,
            );
        }
    }
    out.say(format!("analytic = {}", short(exact.mean)));
    out.say(format!("failed_rows = {failed}"));
    out.table = Some(csv.into_string());
    out.emit(out_path)?;
    if failed > 0 {
        Err(CliError::CompareFailed)
    } else {
        Ok(())
    }
}
