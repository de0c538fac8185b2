//! Interval vectors, sign splitting of matrices and the elementary bounds
//! every other module is built on.

use nalgebra::{DMatrix, DVector};

use crate::error::{check_dim, Result, SmioError};

/// Rows whose largest absolute entry falls below this are treated as zero.
pub const ROW_ZERO_TOL: f64 = 1e-9;
/// Singular values below `RANK_REL_TOL * sigma_max` are truncated.
pub const RANK_REL_TOL: f64 = 1e-10;

/// A box `{x : lo <= x <= hi}`.
#[derive(Debug, Clone, PartialEq)]
pub struct IntervalVector {
    lo: DVector<f64>,
    hi: DVector<f64>,
}

impl IntervalVector {
    pub fn new(lo: DVector<f64>, hi: DVector<f64>) -> Result<Self> {
        check_dim(lo.len(), hi.len(), "interval bounds")?;
        for i in 0..lo.len() {
            if !lo[i].is_finite() || !hi[i].is_finite() {
                return Err(SmioError::InvalidInput(format!(
                    "non-finite interval bound at coordinate {i}"
                )));
            }
            if lo[i] > hi[i] {
                return Err(SmioError::InvalidInput(format!(
                    "interval lower bound exceeds upper bound at coordinate {i} ({} > {})",
                    lo[i], hi[i]
                )));
            }
        }
        Ok(Self { lo, hi })
    }

    pub fn from_slices(lo: &[f64], hi: &[f64]) -> Result<Self> {
        Self::new(DVector::from_column_slice(lo), DVector::from_column_slice(hi))
    }

    /// Degenerate box holding a single point.
    pub fn point(x: &DVector<f64>) -> Result<Self> {
        Self::new(x.clone(), x.clone())
    }

    /// Symmetric box `[-r, r]` in every coordinate.
    pub fn symmetric(radius: &[f64]) -> Result<Self> {
        let lo: Vec<f64> = radius.iter().map(|r| -r).collect();
        Self::from_slices(&lo, radius)
    }

    pub fn lo(&self) -> &DVector<f64> {
        &self.lo
    }

    pub fn hi(&self) -> &DVector<f64> {
        &self.hi
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    /// Per-coordinate widths `hi - lo`.
    pub fn widths(&self) -> DVector<f64> {
        &self.hi - &self.lo
    }

    /// Interval width `||hi - lo||_2`.
    pub fn width(&self) -> f64 {
        self.widths().norm()
    }

    pub fn midpoint(&self) -> DVector<f64> {
        (&self.hi + &self.lo) * 0.5
    }

    pub fn contains(&self, x: &DVector<f64>, tol: f64) -> bool {
        x.len() == self.dim()
            && (0..self.dim()).all(|i| x[i] >= self.lo[i] - tol && x[i] <= self.hi[i] + tol)
    }

    pub fn contains_box(&self, other: &IntervalVector, tol: f64) -> bool {
        other.dim() == self.dim()
            && (0..self.dim())
                .all(|i| other.lo[i] >= self.lo[i] - tol && other.hi[i] <= self.hi[i] + tol)
    }

    /// Intersection, or `None` when some coordinate is empty.
    pub fn intersect(&self, other: &IntervalVector) -> Option<IntervalVector> {
        if other.dim() != self.dim() {
            return None;
        }
        let lo = self.lo.zip_map(&other.lo, f64::max);
        let hi = self.hi.zip_map(&other.hi, f64::min);
        if (0..lo.len()).any(|i| lo[i] > hi[i]) {
            return None;
        }
        Some(IntervalVector { lo, hi })
    }

    /// Clamp a point into the box.
    pub fn clamp(&self, x: &DVector<f64>) -> DVector<f64> {
        DVector::from_fn(self.dim(), |i, _| x[i].clamp(self.lo[i], self.hi[i]))
    }

    /// Cartesian product `self x other`.
    pub fn concat(&self, other: &IntervalVector) -> IntervalVector {
        let lo = DVector::from_iterator(
            self.dim() + other.dim(),
            self.lo.iter().chain(other.lo.iter()).copied(),
        );
        let hi = DVector::from_iterator(
            self.dim() + other.dim(),
            self.hi.iter().chain(other.hi.iter()).copied(),
        );
        IntervalVector { lo, hi }
    }

    /// Coordinates `start..start + len`.
    pub fn slice(&self, start: usize, len: usize) -> IntervalVector {
        IntervalVector {
            lo: self.lo.rows(start, len).into_owned(),
            hi: self.hi.rows(start, len).into_owned(),
        }
    }
}

/// Sign split `M = M⁺ - M⁺⁺` with `|M| = M⁺ + M⁺⁺`.
#[derive(Debug, Clone, PartialEq)]
pub struct SplitMatrix {
    pub plus: DMatrix<f64>,
    pub plusplus: DMatrix<f64>,
    pub abs: DMatrix<f64>,
}

pub fn split(m: &DMatrix<f64>) -> Result<SplitMatrix> {
    if m.iter().any(|v| !v.is_finite()) {
        return Err(SmioError::InvalidInput(
            "cannot split a matrix with non-finite entries".into(),
        ));
    }
    let plus = m.map(|v| if v >= 0.0 { v } else { 0.0 });
    let plusplus = &plus - m;
    let abs = &plus + &plusplus;
    Ok(SplitMatrix {
        plus,
        plusplus,
        abs,
    })
}

/// Entry-wise absolute value.
pub fn abs_matrix(m: &DMatrix<f64>) -> DMatrix<f64> {
    m.map(f64::abs)
}

/// Tight interval enclosure of `{A x : x in box}`.
pub fn bound_linear_map(a: &DMatrix<f64>, bx: &IntervalVector) -> Result<IntervalVector> {
    check_dim(a.ncols(), bx.dim(), "bound_linear_map columns")?;
    let s = split(a)?;
    let lo = &s.plus * bx.lo() - &s.plusplus * bx.hi();
    let hi = &s.plus * bx.hi() - &s.plusplus * bx.lo();
    Ok(IntervalVector { lo, hi })
}

/// `r_i = 0` iff row `i` is (numerically) zero.
pub fn rowsupp(m: &DMatrix<f64>) -> Vec<u8> {
    (0..m.nrows())
        .map(|i| {
            let max = m.row(i).iter().fold(0.0_f64, |acc, v| acc.max(v.abs()));
            u8::from(max >= ROW_ZERO_TOL)
        })
        .collect()
}

/// Moore–Penrose pseudoinverse via the SVD, truncating singular values
/// below `RANK_REL_TOL * sigma_max`.
pub fn pseudoinverse(a: &DMatrix<f64>) -> DMatrix<f64> {
    let (m, n) = a.shape();
    if m == 0 || n == 0 {
        return DMatrix::zeros(n, m);
    }
    let svd = a.clone().svd(true, true);
    let (u, v_t) = match (svd.u, svd.v_t) {
        (Some(u), Some(v_t)) => (u, v_t),
        _ => unreachable!("SVD requested with both factors"),
    };
    let sigma_max = svd.singular_values.iter().fold(0.0_f64, |acc, s| acc.max(*s));
    let mut pinv = DMatrix::zeros(n, m);
    if sigma_max == 0.0 {
        return pinv;
    }
    let cutoff = RANK_REL_TOL * sigma_max;
    for (k, &s) in svd.singular_values.iter().enumerate() {
        if s > cutoff {
            // pinv += v_k * u_k^T / s
            let vk = v_t.row(k).transpose();
            let uk = u.column(k);
            pinv += (vk * uk.transpose()) / s;
        }
    }
    pinv
}

/// Induced 2-norm (largest singular value).
pub fn spectral_norm(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 || m.ncols() == 0 {
        return 0.0;
    }
    m.singular_values().iter().fold(0.0_f64, |acc, s| acc.max(*s))
}
