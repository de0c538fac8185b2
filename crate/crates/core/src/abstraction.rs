//! Parallel affine abstractions: a common slope `A` with two offsets such
//! that `A ζ + e_lo <= q_lo(ζ) <= q_hi(ζ) <= A ζ + e_hi` on a box.
//!
//! Each output row is an independent LP over the sample grid
//!
//! ```text
//!   min θ  s.t.  A ζ_s + e_lo + σ <= q_lo(ζ_s),  q_hi(ζ_s) <= A ζ_s + e_hi - σ,
//!                e_hi - e_lo - 2σ <= θ
//! ```
//!
//! and, for local abstractions, the nesting constraints
//! `e_lo_glob - e_lo <= (A - A_glob) ζ_s <= e_hi_glob - e_hi`.

use nalgebra::{DMatrix, DVector};

use crate::error::{check_dim, Result, SmioError};
use crate::field::VectorField;
use crate::interval::{bound_linear_map, IntervalVector};
use crate::lp::solve_le;

/// Tolerance used when checking `q_lo <= q_hi` at samples.
const PAIR_TOL: f64 = 1e-12;
/// Tolerance for `box ⊆ domain`.
const DOMAIN_TOL: f64 = 1e-9;

/// Per-output Lipschitz weights over the input coordinates.
///
/// Row `j` bounds `|φ_j(a) - φ_j(b)| <= ||w_j ∘ (a - b)||₂` where `φ_j` is
/// output `j` minus any affine map. A uniform constant `L` is the row
/// `(L, .., L)`.
#[derive(Debug, Clone, PartialEq)]
pub struct LipschitzWeights {
    rows: Vec<DVector<f64>>,
}

impl LipschitzWeights {
    pub fn uniform(constants: &[f64], dim_in: usize) -> Result<Self> {
        Self::per_coordinate(
            constants
                .iter()
                .map(|l| DVector::from_element(dim_in, *l))
                .collect(),
        )
    }

    pub fn per_coordinate(rows: Vec<DVector<f64>>) -> Result<Self> {
        for r in &rows {
            if r.iter().any(|v| !v.is_finite() || *v < 0.0) {
                return Err(SmioError::InvalidInput(
                    "Lipschitz constants must be finite and non-negative".into(),
                ));
            }
        }
        Ok(Self { rows })
    }

    pub fn zero(dim_out: usize, dim_in: usize) -> Self {
        Self {
            rows: vec![DVector::zeros(dim_in); dim_out],
        }
    }

    pub fn dim_out(&self) -> usize {
        self.rows.len()
    }

    pub fn row(&self, j: usize) -> &DVector<f64> {
        &self.rows[j]
    }

    pub fn rows(&self) -> &[DVector<f64>] {
        &self.rows
    }
}

/// Uniform sample grid over a box, endpoints included.
#[derive(Debug, Clone)]
pub struct SampleGrid {
    pub bx: IntervalVector,
    pub subdivisions: Vec<usize>,
    pub points: Vec<DVector<f64>>,
    pub cell_widths: DVector<f64>,
    pub cell_half_diag: f64,
}

impl SampleGrid {
    /// `res` subdivisions per non-degenerate dimension (`res >= 1`);
    /// zero-width dimensions contribute a single coordinate.
    pub fn new(bx: &IntervalVector, res: usize) -> Result<Self> {
        Self::with_subdivisions(bx, &vec![res; bx.dim()])
    }

    pub fn with_subdivisions(bx: &IntervalVector, res: &[usize]) -> Result<Self> {
        check_dim(bx.dim(), res.len(), "grid subdivisions")?;
        if res.contains(&0) {
            return Err(SmioError::InvalidInput(
                "grid resolution must be at least 1".into(),
            ));
        }
        let dim = bx.dim();
        let subdivisions: Vec<usize> = (0..dim)
            .map(|i| if bx.hi()[i] > bx.lo()[i] { res[i] } else { 0 })
            .collect();
        let axes: Vec<Vec<f64>> = (0..dim)
            .map(|i| {
                let (lo, hi) = (bx.lo()[i], bx.hi()[i]);
                let s = subdivisions[i];
                if s == 0 {
                    vec![lo]
                } else {
                    (0..=s)
                        .map(|k| {
                            if k == s {
                                hi
                            } else {
                                lo + (hi - lo) * (k as f64) / (s as f64)
                            }
                        })
                        .collect()
                }
            })
            .collect();
        let cell_widths = DVector::from_fn(dim, |i, _| {
            if subdivisions[i] == 0 {
                0.0
            } else {
                (bx.hi()[i] - bx.lo()[i]) / subdivisions[i] as f64
            }
        });
        let total: usize = axes.iter().map(Vec::len).product();
        let mut points = Vec::with_capacity(total);
        let mut idx = vec![0usize; dim];
        for _ in 0..total {
            points.push(DVector::from_fn(dim, |i, _| axes[i][idx[i]]));
            for i in 0..dim {
                idx[i] += 1;
                if idx[i] < axes[i].len() {
                    break;
                }
                idx[i] = 0;
            }
        }
        let cell_half_diag = 0.5 * cell_widths.norm();
        Ok(Self {
            bx: bx.clone(),
            subdivisions,
            points,
            cell_widths,
            cell_half_diag,
        })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    fn active_dims(&self) -> Vec<usize> {
        (0..self.subdivisions.len())
            .filter(|i| self.subdivisions[*i] > 0)
            .collect()
    }
}

/// `σ_j = ½ ||w_j ∘ cell_widths||₂`: worst-case deviation of output `j`
/// between grid samples.
pub fn sigma(lipschitz: &LipschitzWeights, grid: &SampleGrid) -> Result<DVector<f64>> {
    let mut out = DVector::zeros(lipschitz.dim_out());
    for j in 0..lipschitz.dim_out() {
        let w = lipschitz.row(j);
        check_dim(grid.cell_widths.len(), w.len(), "Lipschitz weights")?;
        out[j] = 0.5 * w.component_mul(&grid.cell_widths).norm();
    }
    Ok(out)
}

/// A parallel affine abstraction certified on `domain`.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineAbstraction {
    /// Slope over the full input vector (columns are split into the
    /// state/input/noise blocks by the caller).
    pub slope: DMatrix<f64>,
    pub e_hi: DVector<f64>,
    pub e_lo: DVector<f64>,
    /// Achieved sample band width per output, `e_hi - e_lo - 2σ`.
    pub theta: DVector<f64>,
    pub sigma: DVector<f64>,
    pub domain: IntervalVector,
    /// True when some row's local LP was infeasible and that row of the
    /// global abstraction was used in its place.
    pub fallback: bool,
}

impl AffineAbstraction {
    pub fn dim_out(&self) -> usize {
        self.slope.nrows()
    }

    pub fn dim_in(&self) -> usize {
        self.slope.ncols()
    }

    /// Largest band width over outputs.
    pub fn theta_max(&self) -> f64 {
        self.theta.iter().fold(f64::NEG_INFINITY, |a, b| a.max(*b))
    }

    /// Column block `start..start+len` of the slope.
    pub fn block(&self, start: usize, len: usize) -> DMatrix<f64> {
        self.slope.columns(start, len).into_owned()
    }

    pub fn lower_at(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.slope * x + &self.e_lo
    }

    pub fn upper_at(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.slope * x + &self.e_hi
    }

    /// Enclosure of `[A ζ + e_lo, A ζ + e_hi]` over all `ζ` in `bx`.
    pub fn enclose(&self, bx: &IntervalVector) -> Result<IntervalVector> {
        let r = bound_linear_map(&self.slope, bx)?;
        IntervalVector::new(r.lo() + &self.e_lo, r.hi() + &self.e_hi)
    }

    /// Constant abstraction `[lo, hi]` (zero slope) on `domain`.
    pub fn constant(lo: &DVector<f64>, hi: &DVector<f64>, domain: IntervalVector) -> Self {
        let m = lo.len();
        Self {
            slope: DMatrix::zeros(m, domain.dim()),
            e_hi: hi.clone(),
            e_lo: lo.clone(),
            theta: hi - lo,
            sigma: DVector::zeros(m),
            domain,
            fallback: false,
        }
    }
}

/// Knobs for one abstraction call.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AbstractionOptions {
    pub grid_res: usize,
    /// Force every slope to zero (horizontal abstraction).
    pub zero_slope: bool,
}

impl Default for AbstractionOptions {
    fn default() -> Self {
        Self {
            grid_res: 2,
            zero_slope: false,
        }
    }
}

/// Global abstraction of the pair `(q_lo, q_hi)` on `space`.
pub fn abstract_global(
    q_lo: &dyn VectorField,
    q_hi: &dyn VectorField,
    space: &IntervalVector,
    lipschitz: &LipschitzWeights,
    opts: AbstractionOptions,
) -> Result<AffineAbstraction> {
    let grid = SampleGrid::new(space, opts.grid_res)?;
    match solve_abstraction(q_lo, q_hi, &grid, lipschitz, None, opts.zero_slope) {
        Ok(a) => Ok(a),
        Err(SmioError::Infeasible { .. }) | Err(SmioError::Unbounded) => Err(
            SmioError::InvalidInput("global abstraction LP failed (internal error)".into()),
        ),
        Err(e) => Err(e),
    }
}

/// Local abstraction on `bx`, nested inside `global`.
pub fn abstract_local(
    q_lo: &dyn VectorField,
    q_hi: &dyn VectorField,
    bx: &IntervalVector,
    global: &AffineAbstraction,
    lipschitz: &LipschitzWeights,
    opts: AbstractionOptions,
) -> Result<AffineAbstraction> {
    if !global.domain.contains_box(bx, DOMAIN_TOL) {
        return Err(SmioError::OutsideDomain);
    }
    let grid = SampleGrid::new(bx, opts.grid_res)?;
    solve_abstraction(q_lo, q_hi, &grid, lipschitz, Some(global), opts.zero_slope)
}

fn solve_abstraction(
    q_lo: &dyn VectorField,
    q_hi: &dyn VectorField,
    grid: &SampleGrid,
    lipschitz: &LipschitzWeights,
    global: Option<&AffineAbstraction>,
    zero_slope: bool,
) -> Result<AffineAbstraction> {
    let dim = grid.bx.dim();
    let m = q_lo.dim_out();
    check_dim(dim, q_lo.dim_in(), "lower function input")?;
    check_dim(dim, q_hi.dim_in(), "upper function input")?;
    check_dim(m, q_hi.dim_out(), "upper function output")?;
    check_dim(m, lipschitz.dim_out(), "Lipschitz rows")?;
    if let Some(g) = global {
        check_dim(m, g.dim_out(), "global abstraction outputs")?;
        check_dim(dim, g.dim_in(), "global abstraction inputs")?;
    }
    let mut sig = sigma(lipschitz, grid)?;
    let mut fallback = false;

    let npts = grid.len();
    let mut lo_vals = vec![0.0; npts * m];
    let mut hi_vals = vec![0.0; npts * m];
    for (s, p) in grid.points.iter().enumerate() {
        q_lo.eval_into(p.as_slice(), &mut lo_vals[s * m..(s + 1) * m]);
        q_hi.eval_into(p.as_slice(), &mut hi_vals[s * m..(s + 1) * m]);
        for j in 0..m {
            let (l, h) = (lo_vals[s * m + j], hi_vals[s * m + j]);
            if !l.is_finite() || !h.is_finite() {
                return Err(SmioError::Eval(format!(
                    "non-finite function value at sample {s}"
                )));
            }
            if l > h + PAIR_TOL {
                return Err(SmioError::InvalidPair {
                    sample: s,
                    output: j,
                });
            }
        }
    }

    let active: Vec<usize> = if zero_slope {
        Vec::new()
    } else {
        grid.active_dims()
    };
    let center = grid.bx.midpoint();
    let shifted: Vec<DVector<f64>> = grid.points.iter().map(|p| p - &center).collect();

    let mut slope = DMatrix::zeros(m, dim);
    let mut e_hi = DVector::zeros(m);
    let mut e_lo = DVector::zeros(m);
    let mut theta = DVector::zeros(m);

    // Variable layout: [slopes over active dims | e_hi | e_lo | θ]
    let na = active.len();
    let nv = na + 3;
    let (i_hi, i_lo, i_th) = (na, na + 1, na + 2);
    let mut objective = vec![0.0; nv];
    objective[i_th] = 1.0;

    for j in 0..m {
        let sj = sig[j];
        let ncons = 2 * npts + 1 + if global.is_some() { 2 * npts } else { 0 };
        let mut g_rows = Vec::with_capacity(ncons * nv);
        let mut h = Vec::with_capacity(ncons);
        let mut row = vec![0.0; nv];
        for s in 0..npts {
            let zs = &shifted[s];
            // a·ζ + e_lo <= q_lo - σ
            row.iter_mut().for_each(|v| *v = 0.0);
            for (k, &d) in active.iter().enumerate() {
                row[k] = zs[d];
            }
            row[i_lo] = 1.0;
            g_rows.extend_from_slice(&row);
            h.push(lo_vals[s * m + j] - sj);
            // -(a·ζ + e_hi) <= -q_hi - σ
            row.iter_mut().for_each(|v| *v = -*v);
            row[i_lo] = 0.0;
            row[i_hi] = -1.0;
            g_rows.extend_from_slice(&row);
            h.push(-hi_vals[s * m + j] - sj);
        }
        row.iter_mut().for_each(|v| *v = 0.0);
        row[i_hi] = 1.0;
        row[i_lo] = -1.0;
        row[i_th] = -1.0;
        g_rows.extend_from_slice(&row);
        h.push(2.0 * sj);

        if let Some(g) = global {
            let g_row = g.slope.row(j).transpose();
            for (s, p) in grid.points.iter().enumerate() {
                let zs = &shifted[s];
                let glob = g_row.dot(p);
                // a·ζ + e_lo >= glob + g_lo   (in shifted coordinates)
                row.iter_mut().for_each(|v| *v = 0.0);
                for (k, &d) in active.iter().enumerate() {
                    row[k] = -zs[d];
                }
                row[i_lo] = -1.0;
                g_rows.extend_from_slice(&row);
                h.push(-(glob + g.e_lo[j]) + nest_tol(glob + g.e_lo[j]));
                // a·ζ + e_hi <= glob + g_hi
                row.iter_mut().for_each(|v| *v = -*v);
                row[i_lo] = 0.0;
                row[i_hi] = 1.0;
                g_rows.extend_from_slice(&row);
                h.push(glob + g.e_hi[j] + nest_tol(glob + g.e_hi[j]));
            }
        }

        let sol = match solve_le(&objective, &g_rows, &h) {
            Ok(sol) => Some(sol),
            Err(SmioError::Infeasible { .. })
            | Err(SmioError::Unbounded)
            | Err(SmioError::InvalidInput(_))
                if global.is_some() =>
            {
                None
            }
            Err(SmioError::Infeasible { .. }) | Err(SmioError::Unbounded) => {
                return Err(SmioError::InvalidInput(
                    "global abstraction LP failed (internal error)".into(),
                ))
            }
            Err(e) => return Err(e),
        };
        let row = sol.and_then(|sol| {
            fit_row(
                &sol.x[..na],
                &active,
                &center,
                &shifted,
                grid,
                j,
                m,
                &lo_vals,
                &hi_vals,
                sj,
                global,
            )
        });
        match row {
            Some((full, up, dn)) => {
                slope.set_row(j, &full.transpose());
                e_hi[j] = up;
                e_lo[j] = dn;
                theta[j] = up - dn - 2.0 * sj;
            }
            None => {
                // Only reachable with a global abstraction: keep its row.
                let g = global.expect("fallback requires a global abstraction");
                slope.set_row(j, &g.slope.row(j));
                e_hi[j] = g.e_hi[j];
                e_lo[j] = g.e_lo[j];
                theta[j] = g.theta[j];
                sig[j] = g.sigma[j];
                fallback = true;
            }
        }
    }

    Ok(AffineAbstraction {
        slope,
        e_hi,
        e_lo,
        theta,
        sigma: sig,
        domain: grid.bx.clone(),
        fallback,
    })
}

/// Slack granted to the nesting constraints for round-off.
fn nest_tol(v: f64) -> f64 {
    1e-10 * (1.0 + v.abs())
}

/// Tightest offsets for the LP slope, in original coordinates. Returns
/// `None` if the result is not nested inside `global` at the samples.
#[allow(clippy::too_many_arguments)]
fn fit_row(
    a_active: &[f64],
    active: &[usize],
    center: &DVector<f64>,
    shifted: &[DVector<f64>],
    grid: &SampleGrid,
    j: usize,
    m: usize,
    lo_vals: &[f64],
    hi_vals: &[f64],
    sj: f64,
    global: Option<&AffineAbstraction>,
) -> Option<(DVector<f64>, f64, f64)> {
    let mut up = f64::NEG_INFINITY;
    let mut dn = f64::INFINITY;
    for (s, zs) in shifted.iter().enumerate() {
        let lin: f64 = active.iter().zip(a_active).map(|(&d, a)| a * zs[d]).sum();
        up = up.max(hi_vals[s * m + j] - lin);
        dn = dn.min(lo_vals[s * m + j] - lin);
    }
    let mut full = DVector::zeros(grid.bx.dim());
    for (k, &d) in active.iter().enumerate() {
        full[d] = a_active[k];
    }
    let shift = full.dot(center);
    let (e_hi, e_lo) = (up + sj - shift, dn - sj - shift);
    if let Some(g) = global {
        let g_row = g.slope.row(j).transpose();
        for p in &grid.points {
            let (loc, glob) = (full.dot(p), g_row.dot(p));
            let tol = 1e-9 * (1.0 + glob.abs() + g.e_hi[j].abs() + g.e_lo[j].abs());
            if loc + e_hi > glob + g.e_hi[j] + tol || loc + e_lo < glob + g.e_lo[j] - tol {
                return None;
            }
        }
    }
    Some((full, e_hi, e_lo))
}
