//! Mixed-monotone decomposition functions built from Jacobian bounds.
//!
//! For output `i` and input `j`:
//! * `a_ij >= 0`: `z_j = x_j`;
//! * `b_ij <= 0`: `z_j = y_j`;
//! * otherwise `z_j = x_j` and `C_ij = |a_ij|`,
//!
//! and `q_d,i(x, y) = q_i(z) + Σ_j C_ij (x_j - y_j)`.

use nalgebra::{DMatrix, DVector};

use crate::abstraction::{abstract_global, AbstractionOptions, AffineAbstraction, LipschitzWeights};
use crate::error::{check_dim, Result, SmioError};
use crate::field::{field_fn, FieldRef};
use crate::interval::{abs_matrix, IntervalVector};

const DOMAIN_TOL: f64 = 1e-9;

/// Element-wise bounds on the Jacobian of a map.
#[derive(Debug, Clone, PartialEq)]
pub struct JacobianBounds {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
}

impl JacobianBounds {
    pub fn new(a: DMatrix<f64>, b: DMatrix<f64>) -> Result<Self> {
        if a.shape() != b.shape() {
            return Err(SmioError::DimensionMismatch {
                expected: a.len(),
                got: b.len(),
                context: "Jacobian bound shapes",
            });
        }
        if a.iter().chain(b.iter()).any(|v| !v.is_finite()) {
            return Err(SmioError::InvalidInput(
                "Jacobian bounds must be finite".into(),
            ));
        }
        if a.iter().zip(b.iter()).any(|(l, h)| l > h) {
            return Err(SmioError::InvalidInput(
                "Jacobian lower bound exceeds upper bound".into(),
            ));
        }
        Ok(Self { a, b })
    }

    /// Exact bounds for a constant Jacobian.
    pub fn exact(m: DMatrix<f64>) -> Result<Self> {
        Self::new(m.clone(), m)
    }

    pub fn nrows(&self) -> usize {
        self.a.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.a.ncols()
    }
}

/// Per-entry choice of `z_j`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Select {
    X,
    Y,
}

#[derive(Clone)]
pub struct DecompositionFunction {
    base: FieldRef,
    bounds: JacobianBounds,
    c: DMatrix<f64>,
    selector: Vec<Vec<Select>>,
    domain: Option<IntervalVector>,
}

impl std::fmt::Debug for DecompositionFunction {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("DecompositionFunction")
            .field("bounds", &self.bounds)
            .field("c", &self.c)
            .field("selector", &self.selector)
            .field("domain", &self.domain)
            .finish()
    }
}

impl DecompositionFunction {
    pub fn build(q: FieldRef, bounds: JacobianBounds) -> Result<Self> {
        check_dim(q.dim_out(), bounds.nrows(), "Jacobian bound rows")?;
        check_dim(q.dim_in(), bounds.ncols(), "Jacobian bound columns")?;
        let (m, n) = bounds.a.shape();
        let mut c = DMatrix::zeros(m, n);
        let mut selector = vec![vec![Select::X; n]; m];
        for i in 0..m {
            for j in 0..n {
                let (a, b) = (bounds.a[(i, j)], bounds.b[(i, j)]);
                if a >= 0.0 {
                    selector[i][j] = Select::X;
                } else if b <= 0.0 {
                    selector[i][j] = Select::Y;
                } else {
                    selector[i][j] = Select::X;
                    c[(i, j)] = a.abs();
                }
            }
        }
        Ok(Self {
            base: q,
            bounds,
            c,
            selector,
            domain: None,
        })
    }

    /// Restrict evaluation to `domain`; points outside are rejected.
    pub fn with_domain(mut self, domain: IntervalVector) -> Result<Self> {
        check_dim(self.dim_in(), domain.dim(), "decomposition domain")?;
        self.domain = Some(domain);
        Ok(self)
    }

    pub fn dim_in(&self) -> usize {
        self.base.dim_in()
    }

    pub fn dim_out(&self) -> usize {
        self.base.dim_out()
    }

    pub fn c(&self) -> &DMatrix<f64> {
        &self.c
    }

    pub fn bounds(&self) -> &JacobianBounds {
        &self.bounds
    }

    pub fn selector(&self) -> &[Vec<Select>] {
        &self.selector
    }

    pub fn base(&self) -> &FieldRef {
        &self.base
    }

    pub fn domain(&self) -> Option<&IntervalVector> {
        self.domain.as_ref()
    }

    pub fn eval(&self, x: &DVector<f64>, y: &DVector<f64>) -> Result<DVector<f64>> {
        let n = self.dim_in();
        check_dim(n, x.len(), "decomposition x")?;
        check_dim(n, y.len(), "decomposition y")?;
        if let Some(d) = &self.domain {
            if !d.contains(x, DOMAIN_TOL) || !d.contains(y, DOMAIN_TOL) {
                return Err(SmioError::OutsideDomain);
            }
        }
        let m = self.dim_out();
        let mut out = DVector::zeros(m);
        let mut z = vec![0.0; n];
        let mut buf = vec![0.0; m];
        let mut last: Option<usize> = None;
        for i in 0..m {
            // Rows sharing a selector reuse the previous evaluation.
            let reuse = last.is_some_and(|p| self.selector[p] == self.selector[i]);
            if !reuse {
                for j in 0..n {
                    z[j] = match self.selector[i][j] {
                        Select::X => x[j],
                        Select::Y => y[j],
                    };
                }
                self.base.eval_into(&z, &mut buf);
                last = Some(i);
            }
            let mut v = buf[i];
            for j in 0..n {
                v += self.c[(i, j)] * (x[j] - y[j]);
            }
            out[i] = v;
        }
        Ok(out)
    }

    /// Enclosure `[q_d(lo, hi), q_d(hi, lo)]` of `q` over `bx`.
    pub fn enclose(&self, bx: &IntervalVector) -> Result<IntervalVector> {
        let lo = self.eval(bx.lo(), bx.hi())?;
        let hi = self.eval(bx.hi(), bx.lo())?;
        IntervalVector::new(lo, hi)
    }
}

/// `(|A| + 2C) dz + (e_hi - e_lo)`.
pub fn growth_bound(
    fd: &DecompositionFunction,
    global: &AffineAbstraction,
    dz: &DVector<f64>,
) -> Result<DVector<f64>> {
    check_dim(fd.dim_in(), dz.len(), "growth bound width")?;
    check_dim(fd.dim_in(), global.dim_in(), "abstraction inputs")?;
    check_dim(fd.dim_out(), global.dim_out(), "abstraction outputs")?;
    if dz.iter().any(|v| *v < 0.0 || !v.is_finite()) {
        return Err(SmioError::InvalidInput(
            "width vector must be non-negative".into(),
        ));
    }
    let gain = abs_matrix(&global.slope) + fd.c() * 2.0;
    Ok(gain * dz + (&global.e_hi - &global.e_lo))
}

/// Jacobian bounds from sampled partial derivatives.
///
/// Partials are estimated by central differences with step `fd_step` and
/// abstracted with zero slope; `partial_lipschitz[i*n + j]` bounds the
/// Lipschitz constant of `∂q_i/∂x_j`. Row-major, length `m*n`.
pub fn sampled_jacobian_bounds(
    q: &FieldRef,
    domain: &IntervalVector,
    partial_lipschitz: &[f64],
    grid_res: usize,
    fd_step: f64,
) -> Result<JacobianBounds> {
    let (m, n) = (q.dim_out(), q.dim_in());
    check_dim(n, domain.dim(), "Jacobian sampling domain")?;
    check_dim(m * n, partial_lipschitz.len(), "partial Lipschitz constants")?;
    if !(fd_step > 0.0 && fd_step.is_finite()) {
        return Err(SmioError::InvalidInput("finite-difference step must be positive".into()));
    }
    let qc = q.clone();
    let partials = field_fn(n, m * n, move |x, out| {
        let mut xp = x.to_vec();
        let mut fp = vec![0.0; m];
        let mut fm = vec![0.0; m];
        for j in 0..n {
            let orig = xp[j];
            xp[j] = orig + fd_step;
            qc.eval_into(&xp, &mut fp);
            xp[j] = orig - fd_step;
            qc.eval_into(&xp, &mut fm);
            xp[j] = orig;
            for i in 0..m {
                out[i * n + j] = (fp[i] - fm[i]) / (2.0 * fd_step);
            }
        }
    });
    let lip = LipschitzWeights::uniform(partial_lipschitz, n)?;
    let abs = abstract_global(
        partials.as_ref(),
        partials.as_ref(),
        domain,
        &lip,
        AbstractionOptions {
            grid_res,
            zero_slope: true,
        },
    )?;
    let a = DMatrix::from_fn(m, n, |i, j| abs.e_lo[i * n + j]);
    let b = DMatrix::from_fn(m, n, |i, j| abs.e_hi[i * n + j]);
    JacobianBounds::new(a, b)
}
