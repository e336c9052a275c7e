//! Batch-arrival processor sharing with hyper-exponential job sizes.
//!
//! The expected conditional response time of a job of size `x` is
//!
//! ```text
//! α(x) = c₀ x - Σ_k (c_k / b_k) e^{-b_k x} + Σ_k c_k / b_k
//! c₀   = 1 / (1 - ρ)
//! c_k  = b / (2 λ n̄) · x_k / b_k
//! ```
//!
//! where `b_k` are the secular roots for coupling `λ n̄` and `x_k` solves the
//! Cauchy system built from `μ_q²` and `b_k²`.

use serde::Serialize;

use crate::cauchy::{CauchySolution, CauchySystem};
use crate::distributions::{decay, HyperExp};
use crate::error::{check_nonnegative, check_positive, Error, Result};
use crate::spectral::{compensated_sum, SecularProblem, SpectralRoots};

/// Batch-arrival PS queue: Poisson batches at rate `lambda`, mean batch size
/// `n_bar`, and on average `b_extra` companions arriving with a tagged job.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BpsInput {
    pub lambda: f64,
    pub n_bar: f64,
    pub b_extra: f64,
    pub service: HyperExp,
}

impl BpsInput {
    pub fn new(lambda: f64, n_bar: f64, b_extra: f64, service: HyperExp) -> Result<Self> {
        check_positive("lambda", lambda)?;
        check_positive("n_bar", n_bar)?;
        check_nonnegative("b_extra", b_extra)?;
        let input = Self {
            lambda,
            n_bar,
            b_extra,
            service,
        };
        let rho = input.rho();
        if !(rho < 1.0) {
            return Err(Error::UnstableSystem { rho });
        }
        Ok(input)
    }

    /// `ρ = λ n̄ m`.
    pub fn rho(&self) -> f64 {
        self.lambda * self.n_bar * self.service.mean()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BpsSolution {
    pub input: BpsInput,
    pub rho: f64,
    pub c0: f64,
    pub coeffs: Vec<f64>,
    pub roots: SpectralRoots,
    /// Cauchy solution `x_k` (with its condition estimate, if any).
    pub cauchy: CauchySolution,
}

/// Solves for the roots and coefficients of `α`.
pub fn solve_bps(input: &BpsInput) -> Result<BpsSolution> {
    let coupling = input.lambda * input.n_bar;
    let problem = SecularProblem::new(coupling, &input.service)?;
    let roots = problem.find_roots()?;
    let cauchy = CauchySystem::from_roots(&roots).solve_closed_form()?;
    let scale = input.b_extra / (2.0 * coupling);
    let coeffs = cauchy
        .x
        .iter()
        .zip(roots.roots())
        .map(|(x, r)| scale * x / r.value)
        .collect();
    let rho = problem.load();
    Ok(BpsSolution {
        input: input.clone(),
        rho,
        c0: 1.0 / (1.0 - rho),
        coeffs,
        roots,
        cauchy,
    })
}

impl BpsSolution {
    pub fn root_values(&self) -> Vec<f64> {
        self.roots.values()
    }

    /// `Σ_k c_k / b_k`, the asymptotic offset of `α(x) - c₀ x`.
    pub fn offset(&self) -> f64 {
        self.coeffs
            .iter()
            .zip(self.roots.roots())
            .map(|(c, r)| c / r.value)
            .sum()
    }

    /// `α(x)`.
    pub fn alpha(&self, x: f64) -> Result<f64> {
        check_nonnegative("x", x)?;
        // Σ (c_k/b_k)(1 - e^{-b_k x}) keeps α(0) = 0 exactly.
        let transient: f64 = self
            .coeffs
            .iter()
            .zip(self.roots.roots())
            .map(|(c, r)| c / r.value * -(-r.value * x).exp_m1())
            .sum();
        Ok(self.c0 * x + transient)
    }

    /// `(α'(x), α''(x))`.
    pub fn alpha_derivatives(&self, x: f64) -> Result<(f64, f64)> {
        check_nonnegative("x", x)?;
        Ok(self.derivatives_unchecked(x))
    }

    fn derivatives_unchecked(&self, x: f64) -> (f64, f64) {
        let mut slope = self.c0;
        let mut curvature = 0.0;
        for (c, r) in self.coeffs.iter().zip(self.roots.roots()) {
            let e = decay(r.value * x);
            slope += c * e;
            curvature -= c * r.value * e;
        }
        (slope, curvature)
    }

    /// `T̄ = m / (1 - ρ) + Σ_{i,j} p_i c_j / (μ_i + b_j)`.
    pub fn mean_sojourn(&self) -> f64 {
        let base = self.input.service.mean() * self.c0;
        let cross = compensated_sum(self.input.service.phases().iter().flat_map(|ph| {
            self.coeffs
                .iter()
                .zip(self.roots.roots())
                .map(move |(c, r)| ph.p * c / (ph.mu + r.value))
        }));
        base + cross
    }

    /// Left side minus right side of the integral equation for `α'`:
    ///
    /// ```text
    /// α'(x) - λn̄ ∫_0^∞ α'(y) B̄(x+y) dy - λn̄ ∫_0^x α'(y) B̄(x-y) dy - b B̄(x) - 1
    /// ```
    ///
    /// Every integral is a combination of exponentials and is taken in closed
    /// form.
    pub fn kleinrock_residual(&self, x: f64) -> Result<f64> {
        check_nonnegative("x", x)?;
        let coupling = self.input.lambda * self.input.n_bar;
        let (slope, _) = self.derivatives_unchecked(x);
        let roots = self.roots.roots();
        let mut terms = Vec::with_capacity(2 + 2 * self.input.service.len() * (1 + roots.len()));
        terms.push(slope);
        terms.push(-1.0);
        for (i, ph) in self.input.service.phases().iter().enumerate() {
            let ex = decay(ph.mu * x);
            terms.push(-self.input.b_extra * ph.p * ex);
            // ∫_0^∞ α'(y) e^{-μ(x+y)} dy
            let mut full = self.c0 / ph.mu;
            for (c, r) in self.coeffs.iter().zip(roots) {
                full += c / (ph.mu + r.value);
            }
            terms.push(-coupling * ph.p * ex * full);
            // ∫_0^x α'(y) e^{-μ(x-y)} dy
            terms.push(-coupling * ph.p * self.c0 * -(-ph.mu * x).exp_m1() / ph.mu);
            for (k, c) in self.coeffs.iter().enumerate() {
                let gap = self.roots.rate_minus_root(i, k);
                let conv = exp_difference_quotient(roots[k].value, ph.mu, gap, x);
                terms.push(-coupling * ph.p * c * conv);
            }
        }
        Ok(compensated_sum(terms))
    }

    /// `∫_lo^hi α(x) dB(x)` for `0 <= lo <= hi <= ∞`.
    pub fn alpha_against_density(&self, lo: f64, hi: f64) -> f64 {
        let law = &self.input.service;
        let offset = self.offset();
        let linear = self.c0 * law.partial_first_moment(lo, hi) + offset * law.prob_between(lo, hi);
        let window = |rate: f64| {
            let upper = if hi.is_infinite() {
                0.0
            } else {
                decay(rate * hi)
            };
            decay(rate * lo) - upper
        };
        let mut transient = 0.0;
        for ph in law.phases() {
            for (c, r) in self.coeffs.iter().zip(self.roots.roots()) {
                // ∫ e^{-b x} μ e^{-μ x} dx over [lo, hi)
                let rate = ph.mu + r.value;
                transient += ph.p * c / r.value * ph.mu / rate * window(rate);
            }
        }
        linear - transient
    }

    /// `E[α(X) | lo <= X < hi]`.
    pub fn mean_alpha_between(&self, lo: f64, hi: f64) -> f64 {
        self.alpha_against_density(lo, hi) / self.input.service.prob_between(lo, hi)
    }
}

/// `∫_0^x e^{-b y} e^{-μ (x - y)} dy = (e^{-b x} - e^{-μ x}) / (μ - b)` with
/// `gap = μ - b` supplied accurately.
fn exp_difference_quotient(b: f64, mu: f64, gap: f64, x: f64) -> f64 {
    let (slow, spread) = if gap > 0.0 { (b, gap) } else { (mu, -gap) };
    if spread * x < 1e-300 {
        return x * decay(slow * x);
    }
    decay(slow * x) * -(-spread * x).exp_m1() / spread
}
