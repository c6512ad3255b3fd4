//! Small dense linear-algebra helpers over `nalgebra`.

use nalgebra::{DMatrix, DVector, Dyn, LU};

use crate::error::{Error, Result};

/// `‖a − b‖_F / ‖b‖_F`, or `‖a‖_F` when `b = 0`.
pub fn rel_frobenius(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    let diff = (a - b).norm();
    let nb = b.norm();
    if nb == 0.0 {
        diff
    } else {
        diff / nb
    }
}

pub fn one_norm(a: &DMatrix<f64>) -> f64 {
    a.column_iter().map(|c| c.iter().map(|v| v.abs()).sum::<f64>()).fold(0.0, f64::max)
}

/// LU factorization together with its 1-norm condition number.
#[derive(Debug, Clone)]
pub struct Factorized {
    lu: LU<f64, Dyn, Dyn>,
    pub condition: f64,
}

impl Factorized {
    /// Factors `a`, failing when the 1-norm condition number exceeds `limit`.
    pub fn new(a: &DMatrix<f64>, limit: f64) -> Result<Self> {
        let lu = a.clone().lu();
        let condition = match lu.try_inverse() {
            Some(inv) if inv.iter().all(|v| v.is_finite()) => one_norm(a) * one_norm(&inv),
            _ => f64::INFINITY,
        };
        if !(condition <= limit) {
            return Err(Error::WellPosedness { condition, limit });
        }
        Ok(Factorized { lu, condition })
    }

    pub fn solve(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        self.lu.solve(b).expect("factor checked non-singular")
    }

    pub fn solve_vec(&self, b: &DVector<f64>) -> DVector<f64> {
        self.lu.solve(b).expect("factor checked non-singular")
    }
}

/// Result of a filtered least-squares solve.
#[derive(Debug, Clone)]
pub struct LstsqSolution {
    pub x: DVector<f64>,
    pub singular_values: Vec<f64>,
    pub rank: usize,
    /// `σ_max / σ_min` over the retained singular values.
    pub condition: f64,
}

/// Minimizes `‖a x − b‖² + reg ‖x‖²` through the SVD, discarding singular
/// values below `cutoff · σ_max`.
pub fn lstsq(a: &DMatrix<f64>, b: &DVector<f64>, reg: f64, cutoff: f64) -> LstsqSolution {
    let svd = a.clone().svd(true, true);
    let u = svd.u.as_ref().expect("u computed");
    let vt = svd.v_t.as_ref().expect("v_t computed");
    let sv: Vec<f64> = svd.singular_values.iter().copied().collect();
    let smax = sv.iter().copied().fold(0.0, f64::max);
    let mut x = DVector::zeros(a.ncols());
    let (mut rank, mut smin) = (0, f64::INFINITY);
    for (k, &s) in sv.iter().enumerate() {
        if s <= cutoff * smax || s == 0.0 {
            continue;
        }
        rank += 1;
        smin = smin.min(s);
        let coef = u.column(k).dot(b) * s / (s * s + reg);
        x += vt.row(k).transpose() * coef;
    }
    let condition = if rank == 0 { f64::INFINITY } else { smax / smin };
    LstsqSolution { x, singular_values: sv, rank, condition }
}

/// Numerical rank with threshold `rel · σ_max`.
pub fn numerical_rank(singular_values: &[f64], rel: f64) -> usize {
    let smax = singular_values.iter().copied().fold(0.0, f64::max);
    singular_values.iter().filter(|&&s| s > rel * smax && s > 0.0).count()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn condition_of_diagonal() {
        let a = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 1e-3, 4.0]));
        let f = Factorized::new(&a, 1e12).unwrap();
        assert!((f.condition - 4e3).abs() < 1e-9);
        assert!(matches!(Factorized::new(&a, 10.0), Err(Error::WellPosedness { .. })));
        let sing = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 4.0]);
        assert!(Factorized::new(&sing, 1e12).is_err());
    }

    #[test]
    fn lstsq_recovers_exact_solution() {
        let a = DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 0.0, 2.0, 1.0, 1.0]);
        let x = DVector::from_vec(vec![0.5, -1.5]);
        let sol = lstsq(&a, &(&a * &x), 0.0, 1e-12);
        assert_eq!(sol.rank, 2);
        assert!((sol.x - x).norm() < 1e-14);
    }

    #[test]
    fn lstsq_drops_null_directions() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        let sol = lstsq(&a, &DVector::from_vec(vec![2.0, 2.0]), 0.0, 1e-10);
        assert_eq!(sol.rank, 1);
        assert!((sol.x[0] - 1.0).abs() < 1e-14 && (sol.x[1] - 1.0).abs() < 1e-14);
    }
}
