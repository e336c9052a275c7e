//! Roots of the secular function `Ψ(s) = 1 - c Σ p_i / (s + μ_i)`.
//!
//! With rates ordered `μ_1 > … > μ_N > 0` and `Ψ(0) > 0`, the zeros `s = -b_k`
//! are simple and interlace the poles: `μ_{k+1} < b_k < μ_k`, `0 < b_N < μ_N`.
//! On each bracket `Ψ(-b)` is strictly decreasing in `b`, so each root is found
//! by a safeguarded Illinois/secant iteration with bisection fallback.
//!
//! Each root is stored as an anchor (the nearer bracket end) plus an offset.
//! When a phase weight is tiny the root sits extremely close to its pole, and
//! the gap `μ_k - b_k` would be lost to cancellation if only `b_k` were kept.
//! Downstream products in the Cauchy solution are built from these gaps.

use serde::Serialize;

use crate::distributions::HyperExp;
use crate::error::{Error, Result};

/// Residual `|Ψ(-b)|` every root is expected to reach. The solver itself
/// refines until the bracket is a few ulps wide.
pub const RESIDUAL_TOLERANCE: f64 = 1e-13;

/// Relative pole gap below which the spectrum is flagged as near-degenerate.
pub const DEGENERACY_GAP: f64 = 1e-6;

const MAX_ITERATIONS: usize = 2000;

/// The secular equation for coupling `c = λ n̄` and a hyper-exponential law.
#[derive(Debug, Clone, PartialEq)]
pub struct SecularProblem {
    coupling: f64,
    weights: Vec<f64>,
    rates: Vec<f64>,
}

/// Reference point a root is measured from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Anchor {
    Origin,
    /// Index of the pole `-μ_i` (0-based, decreasing-rate order).
    Pole(usize),
}

/// A root `b = anchor + offset`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Root {
    pub value: f64,
    pub anchor: Anchor,
    pub offset: f64,
}

/// All `N` roots `b_1 > … > b_N` of a [`SecularProblem`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpectralRoots {
    rates: Vec<f64>,
    roots: Vec<Root>,
    near_degenerate: bool,
}

/// Sum with Neumaier compensation.
pub(crate) fn compensated_sum<I: IntoIterator<Item = f64>>(terms: I) -> f64 {
    let mut sum = 0.0f64;
    let mut carry = 0.0f64;
    for t in terms {
        let s = sum + t;
        if sum.abs() >= t.abs() {
            carry += (sum - s) + t;
        } else {
            carry += (t - s) + sum;
        }
        sum = s;
    }
    sum + carry
}

impl SecularProblem {
    /// Fails with [`Error::UnstableSystem`] unless `c Σ p_i/μ_i < 1`.
    pub fn new(coupling: f64, law: &HyperExp) -> Result<Self> {
        if !(coupling >= 0.0) {
            return Err(Error::NegativeArgument {
                name: "coupling",
                value: coupling,
            });
        }
        let problem = Self {
            coupling,
            weights: law.weights().collect(),
            rates: law.rates().collect(),
        };
        let load = problem.load();
        if !(load < 1.0) {
            return Err(Error::UnstableSystem { rho: load });
        }
        Ok(problem)
    }

    pub fn coupling(&self) -> f64 {
        self.coupling
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn rates(&self) -> &[f64] {
        &self.rates
    }

    pub fn len(&self) -> usize {
        self.rates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rates.is_empty()
    }

    /// `c Σ p_i / μ_i`, i.e. `1 - Ψ(0)`.
    pub fn load(&self) -> f64 {
        self.coupling
            * self
                .weights
                .iter()
                .zip(&self.rates)
                .map(|(p, mu)| p / mu)
                .sum::<f64>()
    }

    /// `Ψ(s)`.
    pub fn psi(&self, s: f64) -> Result<f64> {
        for &mu in &self.rates {
            if (s + mu).abs() < 1e-14 * mu {
                return Err(Error::PoleEvaluation { s, rate: mu });
            }
        }
        Ok(1.0
            - self.coupling
                * compensated_sum(
                    self.weights
                        .iter()
                        .zip(&self.rates)
                        .map(|(p, mu)| p / (s + mu)),
                ))
    }

    fn anchor_value(&self, anchor: Anchor) -> f64 {
        match anchor {
            Anchor::Origin => 0.0,
            Anchor::Pole(i) => self.rates[i],
        }
    }

    /// `Ψ(-b)` at `b = anchor + offset`, with every `μ_j - b` formed as
    /// `(μ_j - anchor) - offset`.
    pub fn psi_at(&self, anchor: Anchor, offset: f64) -> f64 {
        let base = self.anchor_value(anchor);
        let terms = self
            .weights
            .iter()
            .zip(&self.rates)
            .enumerate()
            .map(|(j, (p, mu))| {
                let gap = match anchor {
                    Anchor::Pole(a) if a == j => -offset,
                    _ => (mu - base) - offset,
                };
                p / gap
            });
        1.0 - self.coupling * compensated_sum(terms)
    }

    /// Finds every root, one per interlacing bracket.
    pub fn find_roots(&self) -> Result<SpectralRoots> {
        if !(self.coupling > 0.0) {
            return Err(Error::NonPositiveParameter {
                name: "coupling",
                value: self.coupling,
            });
        }
        let n = self.len();
        let roots = (0..n)
            .map(|k| self.root_in_bracket(k))
            .collect::<Result<Vec<_>>>()?;
        let near_degenerate = self
            .rates
            .windows(2)
            .any(|w| (w[0] - w[1]) < DEGENERACY_GAP * w[0]);
        Ok(SpectralRoots {
            rates: self.rates.clone(),
            roots,
            near_degenerate,
        })
    }

    fn root_in_bracket(&self, k: usize) -> Result<Root> {
        let n = self.len();
        let hi = self.rates[k];
        let (lo, lower) = if k + 1 < n {
            (self.rates[k + 1], Anchor::Pole(k + 1))
        } else {
            (0.0, Anchor::Origin)
        };
        let half = 0.5 * (hi - lo);
        let at_mid = self.psi_at(lower, half);
        if !at_mid.is_finite() {
            return Err(Error::BracketFailure { index: k, lo, hi });
        }
        if at_mid == 0.0 {
            return Ok(Root {
                value: lo + half,
                anchor: lower,
                offset: half,
            });
        }
        if lower == Anchor::Origin && !(self.psi_at(Anchor::Origin, 0.0) > 0.0) {
            return Err(Error::BracketFailure { index: k, lo, hi });
        }
        // Root lies in the half nearer to the anchor chosen here; the offset
        // magnitude u then runs over (0, half).
        let (anchor, sign) = if at_mid < 0.0 {
            (lower, 1.0)
        } else {
            (Anchor::Pole(k), -1.0)
        };
        // g(u) > 0 near the anchor and g(half) < 0 on either side.
        let g = |u: f64| sign * self.psi_at(anchor, sign * u);
        let u =
            solve_decreasing(g, half, g(half)).ok_or(Error::BracketFailure { index: k, lo, hi })?;
        let offset = sign * u;
        Ok(Root {
            value: self.anchor_value(anchor) + offset,
            anchor,
            offset,
        })
    }
}

/// Root of `g` on `(0, upper]` where `g(0+) > 0` (possibly infinite) and
/// `g(upper) = g_upper < 0`, with `g` continuous and decreasing.
fn solve_decreasing<G: Fn(f64) -> f64>(g: G, upper: f64, g_upper: f64) -> Option<f64> {
    let (mut a, mut ga) = (0.0f64, f64::INFINITY);
    let (mut b, mut gb) = (upper, g_upper);
    // Unscaled values at the endpoints, for the final pick.
    let (mut true_a, mut true_b) = (ga, gb);
    // Illinois bookkeeping: which side was retained last.
    let mut side = 0i8;
    let mut width_before = b - a;
    let mut slow_steps = 0;

    for _ in 0..MAX_ITERATIONS {
        let spans_decades = a == 0.0 || b > 1e3 * a;
        let trial = if !ga.is_finite() && spans_decades {
            // Pole at the anchor: walk down geometrically until bracketed.
            if a == 0.0 {
                b * 1e-3
            } else {
                (a * b).sqrt()
            }
        } else if slow_steps >= 3 {
            slow_steps = 0;
            if spans_decades && a > 0.0 {
                (a * b).sqrt()
            } else {
                a + 0.5 * (b - a)
            }
        } else {
            let t = b - gb * (b - a) / (gb - ga);
            if t > a && t < b {
                t
            } else {
                a + 0.5 * (b - a)
            }
        };
        if !(trial > a && trial < b) {
            // No representable point strictly inside.
            return Some(if true_a.abs() < true_b.abs() { a } else { b });
        }
        let gt = g(trial);
        if gt.is_nan() {
            return None;
        }
        if gt == 0.0 {
            return Some(trial);
        }
        if gt > 0.0 {
            a = trial;
            ga = gt;
            true_a = gt;
            if side == 1 {
                gb *= 0.5;
            }
            side = 1;
        } else {
            b = trial;
            gb = gt;
            true_b = gt;
            if side == -1 && ga.is_finite() {
                ga *= 0.5;
            }
            side = -1;
        }
        let width = b - a;
        if width <= 4.0 * f64::EPSILON * b {
            return Some(if true_a.abs() < true_b.abs() { a } else { b });
        }
        if width > 0.5 * width_before {
            slow_steps += 1;
        } else {
            slow_steps = 0;
        }
        width_before = width;
    }
    None
}

impl SpectralRoots {
    pub fn len(&self) -> usize {
        self.roots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.roots.is_empty()
    }

    pub fn roots(&self) -> &[Root] {
        &self.roots
    }

    /// `b_1 > … > b_N`.
    pub fn values(&self) -> Vec<f64> {
        self.roots.iter().map(|r| r.value).collect()
    }

    pub fn rates(&self) -> &[f64] {
        &self.rates
    }

    /// True when two rates are within [`DEGENERACY_GAP`] of each other.
    pub fn near_degenerate(&self) -> bool {
        self.near_degenerate
    }

    /// Interlacing bracket `(μ_{k+1}, μ_k)` or `(0, μ_N)`.
    pub fn bracket(&self, k: usize) -> (f64, f64) {
        let lo = self.rates.get(k + 1).copied().unwrap_or(0.0);
        (lo, self.rates[k])
    }

    fn anchor_value(&self, anchor: Anchor) -> f64 {
        match anchor {
            Anchor::Origin => 0.0,
            Anchor::Pole(i) => self.rates[i],
        }
    }

    /// `μ_q - b_k` without cancellation.
    pub fn rate_minus_root(&self, q: usize, k: usize) -> f64 {
        let r = self.roots[k];
        match r.anchor {
            Anchor::Pole(a) if a == q => -r.offset,
            anchor => (self.rates[q] - self.anchor_value(anchor)) - r.offset,
        }
    }

    /// `b_q - b_k` without cancellation.
    pub fn root_minus_root(&self, q: usize, k: usize) -> f64 {
        let (rq, rk) = (self.roots[q], self.roots[k]);
        let base = if rq.anchor == rk.anchor {
            0.0
        } else {
            self.anchor_value(rq.anchor) - self.anchor_value(rk.anchor)
        };
        base + (rq.offset - rk.offset)
    }

    /// `Ψ(-b_k)` for every root, evaluated in anchored form.
    pub fn residuals(&self, problem: &SecularProblem) -> Vec<f64> {
        self.roots
            .iter()
            .map(|r| problem.psi_at(r.anchor, r.offset))
            .collect()
    }
}
