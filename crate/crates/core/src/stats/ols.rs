use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::matrix::{back_substitute, singular_values, upper_triangular_inverse, Matrix, Qr};
use super::tdist::two_sided_p;
use crate::scalar::Real;

/// Singular values below `max_sv * RANK_TOLERANCE` count as zero.
pub const RANK_TOLERANCE: f64 = 1e-10;
/// Condition numbers above this set [`OlsFit::condition_warning`].
pub const CONDITION_WARNING: f64 = 1e8;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OlsError {
    #[error("design has {rows} rows but {cols} columns; need rows >= columns")]
    TooFewRows { rows: usize, cols: usize },
    #[error("response length {y} does not match design rows {rows}")]
    ShapeMismatch { rows: usize, y: usize },
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("design is rank deficient; offending columns: {}", .columns.join(", "))]
    RankDeficient { columns: Vec<String> },
    #[error("design has no columns")]
    Empty,
}

/// Result of an ordinary least squares fit with t-based inference.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OlsFit<T> {
    pub names: Vec<String>,
    pub coef: Vec<T>,
    pub se: Vec<T>,
    pub t_stats: Vec<T>,
    pub p_values: Vec<T>,
    pub r_squared: T,
    pub df_resid: u64,
    pub n: usize,
    pub condition_number: T,
    pub condition_warning: bool,
    /// True when a constant column was present and R² is centered.
    pub has_intercept: bool,
    pub fitted: Vec<T>,
}

impl<T: Real> OlsFit<T> {
    pub fn coefficient(&self, name: &str) -> Option<T> {
        self.names.iter().position(|n| n == name).map(|i| self.coef[i])
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn residuals(&self, y: &[T]) -> Vec<T> {
        y.iter().zip(&self.fitted).map(|(&a, &b)| a - b).collect()
    }
}

/// Numerical rank of `x` from the singular values of its `R` factor.
pub fn numerical_rank<T: Real>(x: &Matrix<T>, max_sv_ref: Option<T>) -> usize {
    if x.cols() == 0 {
        return 0;
    }
    let sv = singular_values(&Qr::new(x).r());
    let reference = max_sv_ref.unwrap_or(sv[0]);
    let tol = reference * T::lit(RANK_TOLERANCE);
    sv.iter().filter(|&&s| s > tol).count()
}

/// Columns that add nothing to the span of the columns before them,
/// scanning left to right against the full design's largest singular value.
fn offending_columns<T: Real>(x: &Matrix<T>, max_sv: T) -> Vec<usize> {
    let mut accepted: Vec<usize> = Vec::new();
    let mut offending = Vec::new();
    for j in 0..x.cols() {
        let mut trial = accepted.clone();
        trial.push(j);
        let sub = x.select_columns(&trial);
        if numerical_rank(&sub, Some(max_sv)) == trial.len() {
            accepted = trial;
        } else {
            offending.push(j);
        }
    }
    offending
}

fn default_names(p: usize) -> Vec<String> {
    (0..p).map(|j| format!("x{j}")).collect()
}

/// Fits `y ≈ Xβ` by Householder QR; columns are named `x0, x1, …`.
pub fn fit_ols<T: Real>(x: &Matrix<T>, y: &[T]) -> Result<OlsFit<T>, OlsError> {
    fit_ols_named(x, y, &default_names(x.cols()))
}

/// Fits `y ≈ Xβ` by Householder QR with named columns.
///
/// Standard errors come from `(XᵀX)⁻¹ = R⁻¹R⁻ᵀ`; the normal equations are
/// never formed.
pub fn fit_ols_named<T: Real>(x: &Matrix<T>, y: &[T], names: &[String]) -> Result<OlsFit<T>, OlsError> {
    let (n, p) = (x.rows(), x.cols());
    if p == 0 {
        return Err(OlsError::Empty);
    }
    if y.len() != n {
        return Err(OlsError::ShapeMismatch { rows: n, y: y.len() });
    }
    if n < p {
        return Err(OlsError::TooFewRows { rows: n, cols: p });
    }
    assert_eq!(names.len(), p, "one name per column");
    if y.iter().any(|v| !v.is_finite()) {
        return Err(OlsError::NonFinite("response"));
    }
    if (0..n).any(|i| x.row(i).iter().any(|v| !v.is_finite())) {
        return Err(OlsError::NonFinite("design"));
    }

    let qr = Qr::new(x);
    let r = qr.r();
    let sv = singular_values(&r);
    let max_sv = sv[0];
    let min_sv = sv[p - 1];
    let tol = max_sv * T::lit(RANK_TOLERANCE);
    if max_sv == T::zero() || sv.iter().any(|&s| s <= tol) {
        let cols = if max_sv == T::zero() {
            (0..p).collect()
        } else {
            offending_columns(x, max_sv)
        };
        return Err(OlsError::RankDeficient {
            columns: cols.into_iter().map(|j| names[j].clone()).collect(),
        });
    }
    let condition_number = max_sv / min_sv;

    let qty = qr.qt_mul(y);
    let coef = back_substitute(&r, &qty[..p]);
    let fitted = x.matvec(&coef);
    let rss = y
        .iter()
        .zip(&fitted)
        .fold(T::zero(), |acc, (&a, &b)| acc + (a - b) * (a - b));

    let df_resid = (n - p) as u64;
    let sigma2 = if df_resid > 0 {
        rss / T::from_u64(df_resid).expect("df representable")
    } else {
        T::nan()
    };
    let r_inv = upper_triangular_inverse(&r);
    let se: Vec<T> = (0..p)
        .map(|j| {
            // diag(R⁻¹R⁻ᵀ)_j = Σ_k (R⁻¹)_{jk}²
            let d = (j..p).fold(T::zero(), |acc, k| acc + r_inv[(j, k)] * r_inv[(j, k)]);
            (sigma2 * d).sqrt()
        })
        .collect();
    let t_stats: Vec<T> = coef.iter().zip(&se).map(|(&b, &s)| b / s).collect();
    let p_values: Vec<T> = t_stats
        .iter()
        .map(|&t| {
            if df_resid > 0 {
                two_sided_p(t, df_resid)
            } else {
                T::nan()
            }
        })
        .collect();

    let has_intercept = (0..p).any(|j| {
        let first = x[(0, j)];
        first != T::zero() && (1..n).all(|i| x[(i, j)] == first)
    });
    let tss = if has_intercept {
        let mean = y.iter().fold(T::zero(), |a, &b| a + b) / T::from_count(n);
        y.iter().fold(T::zero(), |a, &b| a + (b - mean) * (b - mean))
    } else {
        y.iter().fold(T::zero(), |a, &b| a + b * b)
    };
    let r_squared = if tss > T::zero() {
        T::one() - rss / tss
    } else {
        T::one()
    };

    Ok(OlsFit {
        names: names.to_vec(),
        coef,
        se,
        t_stats,
        p_values,
        r_squared,
        df_resid,
        n,
        condition_number,
        condition_warning: condition_number > T::lit(CONDITION_WARNING),
        has_intercept,
        fitted,
    })
}
