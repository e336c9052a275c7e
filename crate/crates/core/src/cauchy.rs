//! The Cauchy system `Σ_j x_j / (μ_q² - b_j²) = 1`, q = 1..N.
//!
//! Under strict interlacing `μ_1 > b_1 > μ_2 > … > μ_N > b_N > 0` the solution
//! has the product form
//!
//! ```text
//! x_k = Π_q (μ_q² - b_k²) / Π_{q≠k} (b_q² - b_k²)
//! ```
//!
//! and every `x_k` is positive. [`CauchySystem::solve_direct`] solves the same
//! matrix by LU with partial pivoting and is kept as an independent check.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::spectral::SpectralRoots;

/// Relative gap below which a condition estimate is attached to the solution.
pub const CONDITIONING_GAP: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq)]
pub struct CauchySystem {
    mu_sq: Vec<f64>,
    b_sq: Vec<f64>,
    /// `μ_q² - b_k²`, row-major in (q, k).
    pole_gaps: Vec<f64>,
    /// `b_q² - b_k²`, row-major in (q, k).
    root_gaps: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CauchySolution {
    pub x: Vec<f64>,
    /// `max |b_q² - b_k²| / min |b_q² - b_k²|`, present when the spectrum has a
    /// relative gap under [`CONDITIONING_GAP`].
    pub condition: Option<f64>,
}

/// Product accumulated as a sign and a sum of logarithms.
#[derive(Debug, Clone, Copy)]
struct LogProduct {
    negative: bool,
    log_abs: f64,
}

impl LogProduct {
    fn one() -> Self {
        Self {
            negative: false,
            log_abs: 0.0,
        }
    }

    fn mul(&mut self, v: f64) -> Result<()> {
        if v == 0.0 || !v.is_finite() {
            return Err(Error::DegenerateSpectrum(format!("factor {v} in product")));
        }
        self.negative ^= v < 0.0;
        self.log_abs += v.abs().ln();
        Ok(())
    }

    fn div(&mut self, v: f64) -> Result<()> {
        self.mul(v)?;
        self.log_abs -= 2.0 * v.abs().ln();
        Ok(())
    }

    fn value(self) -> f64 {
        let m = self.log_abs.exp();
        if self.negative {
            -m
        } else {
            m
        }
    }
}

impl CauchySystem {
    /// System from raw squared parameters, which must interlace strictly:
    /// `μ_1² > b_1² > μ_2² > … > μ_N² > b_N² > 0`.
    pub fn from_squares(mu_sq: Vec<f64>, b_sq: Vec<f64>) -> Result<Self> {
        let n = mu_sq.len();
        if n == 0 || b_sq.len() != n {
            return Err(Error::DegenerateSpectrum(format!(
                "expected matching nonempty vectors, got {} and {}",
                n,
                b_sq.len()
            )));
        }
        for k in 0..n {
            let below = if k + 1 < n { mu_sq[k + 1] } else { 0.0 };
            if !(mu_sq[k] > b_sq[k] && b_sq[k] > below) {
                return Err(Error::DegenerateSpectrum(format!(
                    "parameters do not interlace at index {k}"
                )));
            }
        }
        let pole_gaps = (0..n * n).map(|i| mu_sq[i / n] - b_sq[i % n]).collect();
        let root_gaps = (0..n * n).map(|i| b_sq[i / n] - b_sq[i % n]).collect();
        Ok(Self {
            mu_sq,
            b_sq,
            pole_gaps,
            root_gaps,
        })
    }

    /// System for the secular roots, with differences taken from the anchored
    /// root representation.
    pub fn from_roots(roots: &SpectralRoots) -> Self {
        let n = roots.len();
        let mu = roots.rates();
        let b = roots.values();
        let mut pole_gaps = Vec::with_capacity(n * n);
        let mut root_gaps = Vec::with_capacity(n * n);
        for q in 0..n {
            for k in 0..n {
                pole_gaps.push(roots.rate_minus_root(q, k) * (mu[q] + b[k]));
                root_gaps.push(if q == k {
                    0.0
                } else {
                    roots.root_minus_root(q, k) * (b[q] + b[k])
                });
            }
        }
        Self {
            mu_sq: mu.iter().map(|m| m * m).collect(),
            b_sq: b.iter().map(|v| v * v).collect(),
            pole_gaps,
            root_gaps,
        }
    }

    pub fn len(&self) -> usize {
        self.mu_sq.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mu_sq.is_empty()
    }

    pub fn mu_sq(&self) -> &[f64] {
        &self.mu_sq
    }

    pub fn b_sq(&self) -> &[f64] {
        &self.b_sq
    }

    /// `μ_q² - b_k²`.
    pub fn pole_gap(&self, q: usize, k: usize) -> f64 {
        self.pole_gaps[q * self.len() + k]
    }

    /// `b_q² - b_k²`.
    pub fn root_gap(&self, q: usize, k: usize) -> f64 {
        self.root_gaps[q * self.len() + k]
    }

    /// Smallest gap between neighbours of the merged sequence
    /// `μ_1², b_1², μ_2², …`, relative to the larger neighbour.
    pub fn min_relative_gap(&self) -> f64 {
        let n = self.len();
        let mut gap = f64::INFINITY;
        for k in 0..n {
            gap = gap.min(self.pole_gap(k, k) / self.mu_sq[k]);
            if k + 1 < n {
                gap = gap.min(-self.pole_gap(k + 1, k) / self.b_sq[k]);
            }
        }
        gap
    }

    fn condition_estimate(&self) -> Option<f64> {
        if self.min_relative_gap() >= CONDITIONING_GAP {
            return None;
        }
        let n = self.len();
        let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
        for q in 0..n {
            for k in 0..n {
                if q != k {
                    let g = self.root_gap(q, k).abs();
                    lo = lo.min(g);
                    hi = hi.max(g);
                }
            }
        }
        Some(if n > 1 { hi / lo } else { 1.0 })
    }

    /// Product-form solution.
    pub fn solve_closed_form(&self) -> Result<CauchySolution> {
        let n = self.len();
        let mut x = Vec::with_capacity(n);
        for k in 0..n {
            let mut prod = LogProduct::one();
            for q in 0..n {
                prod.mul(self.pole_gap(q, k))?;
                if q != k {
                    prod.div(self.root_gap(q, k))?;
                }
            }
            x.push(prod.value());
        }
        Ok(CauchySolution {
            x,
            condition: self.condition_estimate(),
        })
    }

    fn matrix(&self) -> DMatrix<f64> {
        let n = self.len();
        DMatrix::from_fn(n, n, |q, k| 1.0 / self.pole_gap(q, k))
    }

    /// Dense LU solve of the same system.
    pub fn solve_direct(&self) -> Result<Vec<f64>> {
        let n = self.len();
        let lu = self.matrix().lu();
        let x = lu
            .solve(&DVector::from_element(n, 1.0))
            .ok_or(Error::SingularMatrix)?;
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::SingularMatrix);
        }
        Ok(x.iter().copied().collect())
    }

    /// Cauchy determinant
    /// `Π_{j<k} (μ_j² - μ_k²)(b_k² - b_j²) / Π_{j,k} (μ_j² - b_k²)`.
    pub fn determinant(&self) -> Result<f64> {
        let n = self.len();
        let mut prod = LogProduct::one();
        for j in 0..n {
            for k in (j + 1)..n {
                prod.mul(self.mu_sq[j] - self.mu_sq[k])?;
                prod.mul(self.root_gap(k, j))?;
            }
            for k in 0..n {
                prod.div(self.pole_gap(j, k))?;
            }
        }
        Ok(prod.value())
    }

    /// Determinant by LU elimination.
    pub fn determinant_direct(&self) -> f64 {
        self.matrix().lu().determinant()
    }

    /// `max_q |Σ_j x_j / (μ_q² - b_j²) - 1|`.
    pub fn row_residual(&self, x: &[f64]) -> f64 {
        let n = self.len();
        (0..n)
            .map(|q| {
                let row: f64 = (0..n).map(|j| x[j] / self.pole_gap(q, j)).sum();
                (row - 1.0).abs()
            })
            .fold(0.0, f64::max)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_by_two() -> CauchySystem {
        let s = 0.5f64.sqrt();
        let b1 = 1.0 + s;
        let b2 = 1.0 - s;
        CauchySystem::from_squares(vec![4.0, 1.0], vec![b1 * b1, b2 * b2]).unwrap()
    }

    #[test]
    fn one_by_one() {
        let sys = CauchySystem::from_squares(vec![4.0], vec![1.0]).unwrap();
        assert!((sys.solve_closed_form().unwrap().x[0] - 3.0).abs() < 1e-14);
        assert!((sys.solve_direct().unwrap()[0] - 3.0).abs() < 1e-15);
        assert!((sys.determinant().unwrap() - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn two_by_two_golden() {
        let sys = two_by_two();
        let x = sys.solve_closed_form().unwrap().x;
        assert!((x[0] - 0.7348349).abs() < 1e-7);
        assert!((x[1] - 1.2651651).abs() < 1e-7);
        let d = sys.solve_direct().unwrap();
        for k in 0..2 {
            assert!((x[k] - d[k]).abs() < 1e-12);
        }
        assert!(sys.row_residual(&x) < 1e-14);
        let det = sys.determinant().unwrap();
        assert!(det > 0.0);
        assert!((det / sys.determinant_direct() - 1.0).abs() < 1e-10);
    }

    #[test]
    fn rejects_non_interlaced() {
        assert!(matches!(
            CauchySystem::from_squares(vec![4.0, 1.0], vec![0.5, 0.1]),
            Err(Error::DegenerateSpectrum(_))
        ));
        assert!(CauchySystem::from_squares(vec![4.0], vec![]).is_err());
    }

    #[test]
    fn condition_flag_on_close_spectrum() {
        let sys = CauchySystem::from_squares(vec![4.0, 1.0], vec![3.9999, 0.5]).unwrap();
        let sol = sys.solve_closed_form().unwrap();
        assert!(sol.condition.is_some());
        assert!(two_by_two()
            .solve_closed_form()
            .unwrap()
            .condition
            .is_none());
    }

    #[test]
    fn large_system_products_do_not_overflow() {
        // Rates spanning 1e-40 .. 1e40 would overflow naive products.
        let n = 40;
        let mu: Vec<f64> = (0..n).map(|i| 10f64.powi(40 - 2 * i as i32)).collect();
        let b: Vec<f64> = (0..n)
            .map(|i| 0.5 * mu[i] + 0.5 * mu.get(i + 1).copied().unwrap_or(0.0))
            .collect();
        let sys = CauchySystem::from_squares(
            mu.iter().map(|m| m * m).collect(),
            b.iter().map(|v| v * v).collect(),
        )
        .unwrap();
        let x = sys.solve_closed_form().unwrap().x;
        assert!(x.iter().all(|v| v.is_finite() && *v > 0.0));
    }
}
