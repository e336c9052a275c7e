//! Hyper-exponential job-size laws.
//!
//! A [`HyperExp`] is the mixture `B̄(x) = Σ p_i e^{-μ_i x}` with phases kept in
//! strictly decreasing rate order. Both the batch-arrival PS analysis and the
//! two-level PS analysis consume job sizes in this form.

use rand::Rng;
use rand_distr::{Distribution, Exp1};
use serde::{Deserialize, Serialize};

use crate::error::{check_nonnegative, check_positive, Error, Result};

/// Tolerance on `|Σ p_i - 1|` accepted at construction.
pub const WEIGHT_SUM_TOLERANCE: f64 = 1e-9;

/// Rates closer than this (relative) are merged into one phase.
pub const RATE_MERGE_GAP: f64 = 1e-9;

/// Past this exponent `e^{-t}` is below the smallest subnormal and is flushed to 0.
pub const EXP_UNDERFLOW: f64 = 745.0;

/// `e^{-t}` for `t >= 0`, flushed to exactly zero past [`EXP_UNDERFLOW`].
#[inline]
pub(crate) fn decay(t: f64) -> f64 {
    if t > EXP_UNDERFLOW {
        0.0
    } else {
        (-t).exp()
    }
}

/// One exponential component of the mixture.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Phase {
    pub p: f64,
    pub mu: f64,
}

#[derive(Deserialize)]
struct HyperExpRepr {
    phases: Vec<Phase>,
}

impl TryFrom<HyperExpRepr> for HyperExp {
    type Error = Error;

    fn try_from(repr: HyperExpRepr) -> Result<Self> {
        HyperExp::new(repr.phases.into_iter().map(|ph| (ph.p, ph.mu)))
    }
}

/// Mixture of exponentials with weights summing to one and strictly
/// decreasing rates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "HyperExpRepr")]
pub struct HyperExp {
    phases: Vec<Phase>,
}

/// Moments of the law truncated at `theta`, plus the tail split per phase.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TruncatedStats {
    pub theta: f64,
    /// `∫_0^θ F̄(y) dy`
    pub x1: f64,
    /// `∫_0^θ 2y F̄(y) dy`
    pub x2: f64,
    /// `F̄(θ)`
    pub tail: f64,
    /// `p_i e^{-μ_i θ}` per phase, same order as the law.
    pub tail_terms: Vec<f64>,
}

impl HyperExp {
    /// Builds a law from `(weight, rate)` pairs.
    ///
    /// Phases are sorted by decreasing rate and rates within a relative gap of
    /// [`RATE_MERGE_GAP`] are merged by summing their weights. Weights must sum
    /// to one within [`WEIGHT_SUM_TOLERANCE`]; they are then renormalised.
    pub fn new<I>(phases: I) -> Result<Self>
    where
        I: IntoIterator<Item = (f64, f64)>,
    {
        let mut raw: Vec<Phase> = Vec::new();
        for (p, mu) in phases {
            check_positive("p", p)?;
            check_positive("mu", mu)?;
            raw.push(Phase { p, mu });
        }
        if raw.is_empty() {
            return Err(Error::EmptyPhases);
        }
        let sum: f64 = raw.iter().map(|ph| ph.p).sum();
        if (sum - 1.0).abs() > WEIGHT_SUM_TOLERANCE {
            return Err(Error::WeightsNotNormalized { sum });
        }

        raw.sort_by(|a, b| b.mu.total_cmp(&a.mu));
        let mut merged: Vec<Phase> = Vec::with_capacity(raw.len());
        for ph in raw {
            match merged.last_mut() {
                Some(last) if (last.mu - ph.mu) <= RATE_MERGE_GAP * last.mu => {
                    // Keep the weighted mean rate so the mean is preserved.
                    let p = last.p + ph.p;
                    let inv_rate = (last.p / last.mu + ph.p / ph.mu) / p;
                    last.mu = 1.0 / inv_rate;
                    last.p = p;
                }
                _ => merged.push(ph),
            }
        }
        let total: f64 = merged.iter().map(|ph| ph.p).sum();
        for ph in &mut merged {
            ph.p /= total;
        }
        Ok(Self { phases: merged })
    }

    /// Plain exponential law with the given rate.
    pub fn exponential(rate: f64) -> Result<Self> {
        Self::new([(1.0, rate)])
    }

    /// Builds a law from phases that are already valid: positive weights summing
    /// to one, rates strictly decreasing.
    pub(crate) fn from_sorted_unchecked(phases: Vec<Phase>) -> Self {
        debug_assert!(!phases.is_empty());
        debug_assert!(phases.windows(2).all(|w| w[0].mu > w[1].mu));
        Self { phases }
    }

    pub fn phases(&self) -> &[Phase] {
        &self.phases
    }

    pub fn len(&self) -> usize {
        self.phases.len()
    }

    pub fn is_empty(&self) -> bool {
        self.phases.is_empty()
    }

    pub fn weights(&self) -> impl Iterator<Item = f64> + '_ {
        self.phases.iter().map(|ph| ph.p)
    }

    pub fn rates(&self) -> impl Iterator<Item = f64> + '_ {
        self.phases.iter().map(|ph| ph.mu)
    }

    /// `B̄(x) = Σ p_i e^{-μ_i x}`.
    pub fn ccdf(&self, x: f64) -> Result<f64> {
        check_nonnegative("x", x)?;
        Ok(self.ccdf_unchecked(x))
    }

    pub(crate) fn ccdf_unchecked(&self, x: f64) -> f64 {
        self.phases.iter().map(|ph| ph.p * decay(ph.mu * x)).sum()
    }

    /// Density `Σ p_i μ_i e^{-μ_i x}`.
    pub fn pdf(&self, x: f64) -> Result<f64> {
        check_nonnegative("x", x)?;
        Ok(self
            .phases
            .iter()
            .map(|ph| ph.p * ph.mu * decay(ph.mu * x))
            .sum())
    }

    pub fn mean(&self) -> f64 {
        self.phases.iter().map(|ph| ph.p / ph.mu).sum()
    }

    pub fn second_moment(&self) -> f64 {
        self.phases
            .iter()
            .map(|ph| 2.0 * ph.p / (ph.mu * ph.mu))
            .sum()
    }

    /// Truncated moments `X̄ⁿ_θ = ∫_0^θ n y^{n-1} F̄(y) dy` for n = 1, 2, in
    /// closed form.
    pub fn truncated_stats(&self, theta: f64) -> Result<TruncatedStats> {
        check_nonnegative("theta", theta)?;
        let mut x1 = 0.0;
        let mut x2 = 0.0;
        let mut tail_terms = Vec::with_capacity(self.len());
        for ph in &self.phases {
            let t = ph.mu * theta;
            x1 += ph.p * one_minus_decay(t) / ph.mu;
            x2 += 2.0 * ph.p * one_minus_decay_poly(t) / (ph.mu * ph.mu);
            tail_terms.push(ph.p * decay(t));
        }
        let tail = tail_terms.iter().sum();
        Ok(TruncatedStats {
            theta,
            x1,
            x2,
            tail,
            tail_terms,
        })
    }

    /// Law of the excess `X - θ` given `X > θ`: same rates, weights
    /// `p_i e^{-μ_i θ} / F̄(θ)`.
    ///
    /// Weights are normalised in log space so the result stays exact when
    /// `F̄(θ)` itself underflows. Phases whose conditional weight underflows
    /// to zero are dropped; they carry no mass.
    pub fn excess_law(&self, theta: f64) -> Result<HyperExp> {
        check_nonnegative("theta", theta)?;
        if theta == 0.0 {
            return Ok(self.clone());
        }
        let logs: Vec<f64> = self
            .phases
            .iter()
            .map(|ph| ph.p.ln() - ph.mu * theta)
            .collect();
        let top = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let scaled: Vec<f64> = logs.iter().map(|l| (l - top).exp()).collect();
        let total: f64 = scaled.iter().sum();
        let phases: Vec<Phase> = self
            .phases
            .iter()
            .zip(&scaled)
            .map(|(ph, w)| Phase {
                p: w / total,
                mu: ph.mu,
            })
            .filter(|ph| ph.p >= f64::MIN_POSITIVE)
            .collect();
        Ok(Self::from_sorted_unchecked(phases))
    }

    /// `∫_lo^hi x dB(x)` for `0 <= lo <= hi <= ∞`.
    pub fn partial_first_moment(&self, lo: f64, hi: f64) -> f64 {
        // d/dx[-(x + 1/μ) e^{-μx}] = μ x e^{-μx}
        let antideriv = |x: f64, mu: f64| {
            if x.is_infinite() {
                0.0
            } else {
                (x + 1.0 / mu) * decay(mu * x)
            }
        };
        self.phases
            .iter()
            .map(|ph| ph.p * (antideriv(lo, ph.mu) - antideriv(hi, ph.mu)))
            .sum()
    }

    /// `P(lo <= X < hi)`.
    pub fn prob_between(&self, lo: f64, hi: f64) -> f64 {
        let upper = if hi.is_infinite() {
            0.0
        } else {
            self.ccdf_unchecked(hi)
        };
        self.ccdf_unchecked(lo) - upper
    }

    /// Draws a phase with probability `p_i`, then an exponential of rate `μ_i`.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        let mut rate = self.phases[self.phases.len() - 1].mu;
        for ph in &self.phases {
            acc += ph.p;
            if u < acc {
                rate = ph.mu;
                break;
            }
        }
        let e: f64 = Exp1.sample(rng);
        e / rate
    }
}

/// `1 - e^{-t}` without cancellation at small `t`.
fn one_minus_decay(t: f64) -> f64 {
    -(-t).exp_m1()
}

/// `1 - e^{-t}(1 + t)`, series below `t = 0.1` where the direct form cancels.
fn one_minus_decay_poly(t: f64) -> f64 {
    if t < 0.1 {
        // Σ_{k>=2} (-1)^k (k-1) t^k / k!
        let mut term = t * t / 2.0; // t^k / k! at k = 2
        let mut sum = 0.0;
        let mut k = 2.0;
        while k < 20.0 {
            let sign = if (k as i32) % 2 == 0 { 1.0 } else { -1.0 };
            sum += sign * (k - 1.0) * term;
            k += 1.0;
            term *= t / k;
        }
        sum
    } else {
        one_minus_decay(t) - t * decay(t)
    }
}
