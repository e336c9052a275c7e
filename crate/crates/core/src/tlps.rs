//! Two-level processor sharing (TLPS) with a size threshold `θ`.
//!
//! The first `θ` units of every job are served in a high-priority PS queue.
//! Whatever is left joins a low-priority PS queue that only runs while the high
//! queue is empty. Seen from the low queue, jobs arrive in batches at the end
//! of high-priority busy periods, so its conditional response time is that of
//! a batch-arrival PS queue fed with the excess law `X - θ | X > θ` and
//!
//! ```text
//! n̄ = F̄(θ) / (1 - ρ_θ)
//! b = 2λ F̄(θ) (W̄(θ) + θ) / (1 - ρ_θ)
//! W̄(θ) = λ X̄²_θ / (2 (1 - ρ_θ)),  ρ_θ = λ X̄¹_θ
//! ```

use rayon::prelude::*;
use serde::Serialize;

use crate::bps::{solve_bps, BpsInput, BpsSolution};
use crate::distributions::{HyperExp, TruncatedStats};
use crate::error::{check_nonnegative, check_positive, Error, Result};
use crate::spectral::compensated_sum;

/// Tail mass below which the low queue is treated as empty.
pub const TAIL_UNDERFLOW: f64 = 1e-300;

/// Points in the coarse scan of [`TlpsModel::optimize`].
pub const SCAN_POINTS: usize = 64;

/// Relative bracket width at which golden-section refinement stops.
pub const REFINE_TOLERANCE: f64 = 1e-6;

/// Poisson arrivals at rate `lambda` with hyper-exponential job sizes.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TlpsModel {
    pub lambda: f64,
    pub jobsize: HyperExp,
}

/// Everything computed for one threshold.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TlpsEvaluation {
    pub theta: f64,
    pub trunc: TruncatedStats,
    pub rho: f64,
    pub rho_theta: f64,
    pub w_bar: f64,
    pub n_bar: f64,
    pub b_extra: f64,
    /// Low-queue solution; `None` once `F̄(θ)` underflows.
    pub bps: Option<BpsSolution>,
    pub t_mean: f64,
    pub baseline: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepReport {
    pub rows: Vec<TlpsEvaluation>,
    pub best_index: usize,
    pub best_theta: f64,
    pub best_t: f64,
    pub ps_baseline: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ThresholdOptimum {
    pub theta: f64,
    pub t_mean: f64,
    pub baseline: f64,
    pub evaluations: usize,
}

impl ThresholdOptimum {
    pub fn improvement_pct(&self) -> f64 {
        improvement_pct(self.t_mean, self.baseline)
    }
}

pub fn improvement_pct(t: f64, baseline: f64) -> f64 {
    100.0 * (baseline - t) / baseline
}

impl TlpsModel {
    pub fn new(lambda: f64, jobsize: HyperExp) -> Result<Self> {
        check_positive("lambda", lambda)?;
        let model = Self { lambda, jobsize };
        let rho = model.rho();
        if !(rho < 1.0) {
            return Err(Error::UnstableSystem { rho });
        }
        Ok(model)
    }

    pub fn rho(&self) -> f64 {
        self.lambda * self.jobsize.mean()
    }

    /// Mean sojourn time under plain PS, `m / (1 - ρ)`.
    pub fn baseline(&self) -> f64 {
        self.jobsize.mean() / (1.0 - self.rho())
    }

    pub fn evaluate(&self, theta: f64) -> Result<TlpsEvaluation> {
        check_nonnegative("theta", theta)?;
        let lambda = self.lambda;
        let m = self.jobsize.mean();
        let rho = self.rho();
        let baseline = self.baseline();
        let trunc = self.jobsize.truncated_stats(theta)?;
        let rho_theta = lambda * trunc.x1;
        let idle = 1.0 - rho_theta;
        let w_bar = lambda * trunc.x2 / (2.0 * idle);
        let tail = trunc.tail;
        let n_bar = tail / idle;
        let b_extra = 2.0 * lambda * tail * (w_bar + theta) / idle;

        if tail < TAIL_UNDERFLOW {
            return Ok(TlpsEvaluation {
                theta,
                trunc,
                rho,
                rho_theta,
                w_bar,
                n_bar,
                b_extra,
                bps: None,
                t_mean: baseline,
                baseline,
            });
        }

        let excess = self.jobsize.excess_law(theta)?;
        let bps = solve_bps(&BpsInput::new(lambda, n_bar, b_extra, excess)?)?;

        let t_mean = if theta == 0.0 {
            baseline
        } else {
            let head = (trunc.x1 + w_bar * tail) / idle;
            let middle = (m - trunc.x1) / (1.0 - rho);
            let roots = bps.roots.roots();
            let cross =
                compensated_sum(trunc.tail_terms.iter().zip(self.jobsize.rates()).flat_map(
                    |(&tail_i, mu_i)| {
                        roots
                            .iter()
                            .zip(&bps.cauchy.x)
                            .map(move |(r, x)| tail_i * x / (r.value * (mu_i + r.value)))
                    },
                ));
            head + middle + (w_bar + theta) / idle * cross
        };

        Ok(TlpsEvaluation {
            theta,
            trunc,
            rho,
            rho_theta,
            w_bar,
            n_bar,
            b_extra,
            bps: Some(bps),
            t_mean,
            baseline,
        })
    }

    /// `T̄^TLPS(x)` at threshold `theta`.
    pub fn conditional_sojourn(&self, theta: f64, x: f64) -> Result<f64> {
        self.evaluate(theta)?.conditional_sojourn(x)
    }

    /// Evaluates every threshold in `grid` (rows computed in parallel, kept in
    /// grid order).
    pub fn sweep(&self, grid: &[f64]) -> Result<SweepReport> {
        if grid.is_empty() {
            return Err(Error::InvalidConfig("empty theta grid".into()));
        }
        if grid.windows(2).any(|w| w[1] < w[0]) {
            return Err(Error::InvalidConfig("theta grid must be sorted".into()));
        }
        let rows = grid
            .par_iter()
            .map(|&theta| self.evaluate(theta))
            .collect::<Result<Vec<_>>>()?;
        let best_index = rows
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.t_mean.total_cmp(&b.1.t_mean))
            .map(|(i, _)| i)
            .unwrap_or(0);
        Ok(SweepReport {
            best_index,
            best_theta: rows[best_index].theta,
            best_t: rows[best_index].t_mean,
            ps_baseline: self.baseline(),
            rows,
        })
    }

    /// 64 log-spaced thresholds over `[10⁻² m, 10² m]`.
    pub fn default_grid(&self) -> Vec<f64> {
        let m = self.jobsize.mean();
        log_grid(1e-2 * m, 1e2 * m, SCAN_POINTS)
    }

    /// Coarse scan of `[lo, hi]` followed by golden-section refinement around
    /// the best scanned point. Returns the best threshold seen; `T̄(θ)` is not
    /// known to be unimodal, so this is a local search seeded by the scan.
    pub fn optimize(&self, lo: f64, hi: f64) -> Result<ThresholdOptimum> {
        check_nonnegative("theta_min", lo)?;
        if hi < lo {
            return Err(Error::InvalidConfig(format!(
                "theta bracket ({lo}, {hi}) is reversed"
            )));
        }
        if hi == lo {
            let eval = self.evaluate(lo)?;
            return Ok(ThresholdOptimum {
                theta: lo,
                t_mean: eval.t_mean,
                baseline: eval.baseline,
                evaluations: 1,
            });
        }
        let grid = scan_grid(lo, hi, SCAN_POINTS);
        let scan = self.sweep(&grid)?;
        let i = scan.best_index;
        let a = grid[i.saturating_sub(1)];
        let b = grid[(i + 1).min(grid.len() - 1)];
        let mut best = (scan.best_theta, scan.best_t);
        let mut evaluations = grid.len();
        let mut f = |theta: f64| -> Result<f64> {
            evaluations += 1;
            let t = self.evaluate(theta)?.t_mean;
            if t < best.1 {
                best = (theta, t);
            }
            Ok(t)
        };
        golden_section(&mut f, a, b, REFINE_TOLERANCE)?;
        Ok(ThresholdOptimum {
            theta: best.0,
            t_mean: best.1,
            baseline: self.baseline(),
            evaluations,
        })
    }
}

/// `points` log-spaced values from `lo` to `hi` (both > 0).
pub fn log_grid(lo: f64, hi: f64, points: usize) -> Vec<f64> {
    match points {
        0 => Vec::new(),
        1 => vec![lo],
        _ => {
            let (a, b) = (lo.ln(), hi.ln());
            let step = (b - a) / (points - 1) as f64;
            (0..points)
                .map(|i| {
                    if i + 1 == points {
                        hi
                    } else {
                        (a + step * i as f64).exp()
                    }
                })
                .collect()
        }
    }
}

/// `points` evenly spaced values from `lo` to `hi`.
pub fn linear_grid(lo: f64, hi: f64, points: usize) -> Vec<f64> {
    match points {
        0 => Vec::new(),
        1 => vec![lo],
        _ => {
            let step = (hi - lo) / (points - 1) as f64;
            (0..points)
                .map(|i| {
                    if i + 1 == points {
                        hi
                    } else {
                        lo + step * i as f64
                    }
                })
                .collect()
        }
    }
}

/// Log-spaced scan; a zero lower end is kept as its own point ahead of a log
/// grid starting four decades below `hi`.
pub fn scan_grid(lo: f64, hi: f64, points: usize) -> Vec<f64> {
    if lo > 0.0 || points < 2 {
        log_grid(lo, hi, points)
    } else {
        let mut grid = vec![0.0];
        grid.extend(log_grid(1e-4 * hi, hi, points - 1));
        grid
    }
}

fn golden_section<F>(f: &mut F, mut a: f64, mut b: f64, rel_tol: f64) -> Result<()>
where
    F: FnMut(f64) -> Result<f64>,
{
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let mut fc = f(c)?;
    let mut fd = f(d)?;
    while (b - a) > rel_tol * (0.5 * (a + b)).abs().max(f64::MIN_POSITIVE) {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c)?;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d)?;
        }
    }
    Ok(())
}

impl TlpsEvaluation {
    /// `c₀(θ)`.
    pub fn c0(&self) -> f64 {
        match &self.bps {
            Some(bps) => bps.c0,
            None => (1.0 - self.rho_theta) / (1.0 - self.rho),
        }
    }

    /// Low-queue response time `α(y)` for remaining work `y`.
    pub fn alpha(&self, y: f64) -> Result<f64> {
        match &self.bps {
            Some(bps) => bps.alpha(y),
            None => {
                check_nonnegative("x", y)?;
                Ok(self.c0() * y)
            }
        }
    }

    /// `T̄^TLPS(x)`.
    pub fn conditional_sojourn(&self, x: f64) -> Result<f64> {
        check_nonnegative("x", x)?;
        let idle = 1.0 - self.rho_theta;
        if x <= self.theta {
            Ok(x / idle)
        } else {
            Ok((self.w_bar + self.theta + self.alpha(x - self.theta)?) / idle)
        }
    }

    /// Upward jump of `T̄^TLPS` at `x = θ`.
    pub fn jump(&self) -> f64 {
        self.w_bar / (1.0 - self.rho_theta)
    }

    /// `T̄(θ)` assembled from the low queue's own mean sojourn,
    /// `(X̄¹ + W̄ F̄)/(1 - ρ_θ) + F̄ T̄_low / (1 - ρ_θ)` with the `W̄ + θ` delay
    /// included for every job that reaches the low queue.
    pub fn t_mean_via_excess(&self) -> f64 {
        let idle = 1.0 - self.rho_theta;
        let head = (self.trunc.x1 + self.w_bar * self.trunc.tail) / idle;
        let low = match &self.bps {
            Some(bps) => bps.mean_sojourn(),
            None => return self.baseline,
        };
        head + self.trunc.tail * low / idle
    }

    /// `∫_lo^hi T̄^TLPS(x) dF(x)`.
    pub fn sojourn_against_density(&self, jobsize: &HyperExp, lo: f64, hi: f64) -> f64 {
        let idle = 1.0 - self.rho_theta;
        let theta = self.theta;
        let mut total = 0.0;
        if lo < theta {
            total += jobsize.partial_first_moment(lo, hi.min(theta)) / idle;
        }
        let from = lo.max(theta);
        if hi > from {
            let mass = jobsize.prob_between(from, hi);
            total += (self.w_bar + theta) / idle * mass;
            let (y_lo, y_hi) = (from - theta, hi - theta);
            total += match &self.bps {
                Some(bps) => self.trunc.tail * bps.alpha_against_density(y_lo, y_hi),
                None => self.c0() * (jobsize.partial_first_moment(from, hi) - theta * mass),
            } / idle;
        }
        total
    }

    /// `E[T̄^TLPS(X) | lo <= X < hi]`.
    pub fn mean_sojourn_between(&self, jobsize: &HyperExp, lo: f64, hi: f64) -> f64 {
        self.sojourn_against_density(jobsize, lo, hi) / jobsize.prob_between(lo, hi)
    }

    pub fn improvement_pct(&self) -> f64 {
        improvement_pct(self.t_mean, self.baseline)
    }
}
