//! Stability certificate by exhaustive search over binary diagonal
//! selections, and the resulting width-bound sequence.
//!
//! For `D1 ∈ 𝔻_{n+p}` (with `D1_ii = 0` where `r_i = 1`), `D2 ∈ 𝔻_l` and
//! `D3 ∈ 𝔻_n`:
//!
//! ```text
//! 𝒜^g     = (I - D1) + D1 |A^g†| (I - D2) |A^g|
//! 𝒜^{f,h} = [ |A^f| + 2 (I - D3) C^f ; |A^h| ]
//! ℒ*      = min ||𝒜^g 𝒜^{f,h}||₂
//! ```

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::abstraction::AffineAbstraction;
use crate::decomposition::DecompositionFunction;
use crate::error::{check_dim, Result, SmioError};
use crate::interval::{abs_matrix, pseudoinverse, rowsupp, spectral_norm};
use crate::system::SystemSpec;

const UNIT_TOL: f64 = 1e-12;

/// Which columns of the `f`/`h` slopes enter the certificate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SlopeColumns {
    /// Augmented-state columns only (square contraction matrix).
    State,
    /// Augmented-state and process-noise columns stacked side by side.
    StateNoise,
}

impl SlopeColumns {
    pub fn as_str(self) -> &'static str {
        match self {
            SlopeColumns::State => "state",
            SlopeColumns::StateNoise => "state-noise",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "state" => Ok(SlopeColumns::State),
            "state-noise" => Ok(SlopeColumns::StateNoise),
            _ => Err(SmioError::Config(format!(
                "unknown slope column selection '{s}' (expected state or state-noise)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Certified,
    MarginallyCertified,
    NotCertified,
}

impl Verdict {
    pub fn from_l_star(l: f64) -> Self {
        if l < 1.0 - UNIT_TOL {
            Verdict::Certified
        } else if l <= 1.0 + UNIT_TOL {
            Verdict::MarginallyCertified
        } else {
            Verdict::NotCertified
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Verdict::Certified => "certified",
            Verdict::MarginallyCertified => "marginally certified",
            Verdict::NotCertified => "not certified",
        }
    }
}

/// A binary diagonal selection `(D1, D2, D3)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Selection {
    pub d1: Vec<u8>,
    pub d2: Vec<u8>,
    pub d3: Vec<u8>,
}

fn diag(bits: &[u8]) -> DMatrix<f64> {
    DMatrix::from_diagonal(&DVector::from_iterator(
        bits.len(),
        bits.iter().map(|b| f64::from(*b)),
    ))
}

fn complement(bits: &[u8]) -> DMatrix<f64> {
    DMatrix::from_diagonal(&DVector::from_iterator(
        bits.len(),
        bits.iter().map(|b| f64::from(1 - *b)),
    ))
}

/// Every selection satisfying `D1_ii = 0` where `r_i = 1`.
pub fn enumerate_selections(r: &[u8], l: usize, n: usize) -> Vec<Selection> {
    let free: Vec<usize> = (0..r.len()).filter(|i| r[*i] == 0).collect();
    let bits = free.len() + l + n;
    let mut out = Vec::with_capacity(1 << bits);
    for mask in 0u64..(1u64 << bits) {
        let bit = |i: usize| ((mask >> i) & 1) as u8;
        let mut d1 = vec![0u8; r.len()];
        for (k, &i) in free.iter().enumerate() {
            d1[i] = bit(k);
        }
        let d2 = (0..l).map(|k| bit(free.len() + k)).collect();
        let d3 = (0..n).map(|k| bit(free.len() + l + k)).collect();
        out.push(Selection { d1, d2, d3 });
    }
    out
}

/// `𝒜^g(D1, D2)`.
pub fn a_g_matrix(a_g: &DMatrix<f64>, pinv_abs: &DMatrix<f64>, sel: &Selection) -> DMatrix<f64> {
    let nz = a_g.ncols();
    let d1 = diag(&sel.d1);
    (DMatrix::identity(nz, nz) - &d1) + d1 * pinv_abs * complement(&sel.d2) * abs_matrix(a_g)
}

/// `𝒜^{f,h}(D3)` over whatever columns `a_f`, `c_f` and `a_h` carry.
pub fn a_fh_matrix(
    a_f: &DMatrix<f64>,
    c_f: &DMatrix<f64>,
    a_h: &DMatrix<f64>,
    sel: &Selection,
) -> DMatrix<f64> {
    let top = abs_matrix(a_f) + complement(&sel.d3) * c_f * 2.0;
    let (n, p, c) = (a_f.nrows(), a_h.nrows(), a_f.ncols());
    let mut out = DMatrix::zeros(n + p, c);
    out.view_mut((0, 0), (n, c)).copy_from(&top);
    out.view_mut((n, 0), (p, c)).copy_from(&abs_matrix(a_h));
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct Certificate {
    pub l_star: f64,
    pub selection: Selection,
    pub candidates: usize,
    pub verdict: Verdict,
}

/// Minimum contraction norm over all admissible selections.
///
/// `a_f`, `c_f` (n×c) and `a_h` (p×c) share a column selection; `a_g` is
/// the `l × (n+p)` state block of the output slope.
pub fn check_stability(
    a_f: &DMatrix<f64>,
    a_g: &DMatrix<f64>,
    a_h: &DMatrix<f64>,
    c_f: &DMatrix<f64>,
    r: &[u8],
) -> Result<Certificate> {
    let (n, p, l) = (a_f.nrows(), a_h.nrows(), a_g.nrows());
    let nz = n + p;
    check_dim(nz, a_g.ncols(), "output slope columns")?;
    check_dim(nz, r.len(), "row support")?;
    check_dim(a_f.ncols(), a_h.ncols(), "h slope columns")?;
    if c_f.shape() != a_f.shape() {
        return Err(SmioError::DimensionMismatch {
            expected: a_f.len(),
            got: c_f.len(),
            context: "decomposition slope shape",
        });
    }
    let pinv_abs = abs_matrix(&pseudoinverse(a_g));
    let sels = enumerate_selections(r, l, n);
    let candidates = sels.len();
    let mut best: Option<(f64, Selection)> = None;
    for sel in sels {
        let m = a_g_matrix(a_g, &pinv_abs, &sel) * a_fh_matrix(a_f, c_f, a_h, &sel);
        let v = spectral_norm(&m);
        if best.as_ref().is_none_or(|(b, _)| v < *b) {
            best = Some((v, sel));
        }
    }
    let (l_star, selection) = best.expect("at least one selection exists");
    Ok(Certificate {
        l_star,
        selection,
        candidates,
        verdict: Verdict::from_l_star(l_star),
    })
}

/// Everything the certificate and the width bounds need.
#[derive(Debug, Clone, PartialEq)]
pub struct StabilityInputs {
    pub n: usize,
    pub p: usize,
    pub m: usize,
    pub l: usize,
    /// Full slopes over `ζ` (f, h) and `ν` (g), and the decomposition slope.
    pub a_f: DMatrix<f64>,
    pub a_g: DMatrix<f64>,
    pub a_h: DMatrix<f64>,
    pub c_f: DMatrix<f64>,
    pub de_f: DVector<f64>,
    pub de_g: DVector<f64>,
    pub de_h: DVector<f64>,
    pub dw: DVector<f64>,
    pub dv: DVector<f64>,
}

impl StabilityInputs {
    pub fn from_parts(
        spec: &SystemSpec,
        global_f: &AffineAbstraction,
        global_g: &AffineAbstraction,
        global_h: &AffineAbstraction,
        fd: &DecompositionFunction,
    ) -> Result<Self> {
        check_dim(spec.zeta_dim(), global_f.dim_in(), "f abstraction columns")?;
        check_dim(spec.nu_dim(), global_g.dim_in(), "g abstraction columns")?;
        check_dim(spec.zeta_dim(), global_h.dim_in(), "h abstraction columns")?;
        Ok(Self {
            n: spec.n,
            p: spec.p,
            m: spec.m,
            l: spec.l,
            a_f: global_f.slope.clone(),
            a_g: global_g.slope.clone(),
            a_h: global_h.slope.clone(),
            c_f: fd.c().clone(),
            de_f: &global_f.e_hi - &global_f.e_lo,
            de_g: &global_g.e_hi - &global_g.e_lo,
            de_h: &global_h.e_hi - &global_h.e_lo,
            dw: spec.w_box.widths(),
            dv: spec.v_box.widths(),
        })
    }

    fn nz(&self) -> usize {
        self.n + self.p
    }

    fn state_cols(&self, m: &DMatrix<f64>) -> DMatrix<f64> {
        m.columns(0, self.nz()).into_owned()
    }

    fn noise_cols(&self, m: &DMatrix<f64>) -> DMatrix<f64> {
        m.columns(self.nz() + self.m, self.n).into_owned()
    }

    fn with_cols(&self, m: &DMatrix<f64>, cols: SlopeColumns) -> DMatrix<f64> {
        match cols {
            SlopeColumns::State => self.state_cols(m),
            SlopeColumns::StateNoise => {
                let (s, w) = (self.state_cols(m), self.noise_cols(m));
                let mut out = DMatrix::zeros(m.nrows(), s.ncols() + w.ncols());
                out.view_mut((0, 0), s.shape()).copy_from(&s);
                out.view_mut((0, s.ncols()), w.shape()).copy_from(&w);
                out
            }
        }
    }

    pub fn a_g_state(&self) -> DMatrix<f64> {
        self.a_g.columns(0, self.nz()).into_owned()
    }

    pub fn w_g(&self) -> DMatrix<f64> {
        self.a_g.columns(self.nz() + self.m, self.l).into_owned()
    }

    pub fn row_support(&self) -> Vec<u8> {
        let a = self.a_g_state();
        let nz = self.nz();
        rowsupp(&(DMatrix::identity(nz, nz) - pseudoinverse(&a) * a))
    }

    pub fn certificate(&self, cols: SlopeColumns) -> Result<Certificate> {
        check_stability(
            &self.with_cols(&self.a_f, cols),
            &self.a_g_state(),
            &self.with_cols(&self.a_h, cols),
            &self.with_cols(&self.c_f, cols),
            &self.row_support(),
        )
    }

    /// Square contraction matrix `𝒜 = 𝒜^g 𝒜^{f,h}` on the state columns.
    pub fn contraction(&self, sel: &Selection) -> DMatrix<f64> {
        let a_g = self.a_g_state();
        let pinv_abs = abs_matrix(&pseudoinverse(&a_g));
        a_g_matrix(&a_g, &pinv_abs, sel)
            * a_fh_matrix(
                &self.state_cols(&self.a_f),
                &self.state_cols(&self.c_f),
                &self.state_cols(&self.a_h),
                sel,
            )
    }

    /// `Δ̄ = Δ^g + 𝒜^g Δ^{f,h}`.
    pub fn disturbance(&self, sel: &Selection) -> DVector<f64> {
        let a_g = self.a_g_state();
        let pinv_abs = abs_matrix(&pseudoinverse(&a_g));
        let delta_g =
            diag(&sel.d1) * &pinv_abs * diag(&sel.d2) * (abs_matrix(&self.w_g()) * &self.dv + &self.de_g);
        let w_f = abs_matrix(&self.noise_cols(&self.a_f))
            + complement(&sel.d3) * self.noise_cols(&self.c_f) * 2.0;
        let top = w_f * &self.dw + &self.de_f;
        let bottom = abs_matrix(&self.noise_cols(&self.a_h)) * &self.dw + &self.de_h;
        let mut delta_fh = DVector::zeros(self.nz());
        delta_fh.rows_mut(0, self.n).copy_from(&top);
        delta_fh.rows_mut(self.n, self.p).copy_from(&bottom);
        delta_g + a_g_matrix(&a_g, &pinv_abs, sel) * delta_fh
    }

    /// Selection for the width bounds: among tuples with `||𝒜|| < 1`, the
    /// one minimizing `||e^𝒜 Δ̄||`; otherwise the norm minimizer, flagged.
    pub fn bound_selection(&self) -> (Selection, bool) {
        let sels = enumerate_selections(&self.row_support(), self.l, self.n);
        let mut best_cert: Option<(f64, Selection)> = None;
        let mut best_norm: Option<(f64, Selection)> = None;
        for sel in sels {
            let a = self.contraction(&sel);
            let nrm = spectral_norm(&a);
            if best_norm.as_ref().is_none_or(|(b, _)| nrm < *b) {
                best_norm = Some((nrm, sel.clone()));
            }
            if nrm < 1.0 - UNIT_TOL {
                let obj = (a.exp() * self.disturbance(&sel)).norm();
                if best_cert.as_ref().is_none_or(|(b, _)| obj < *b) {
                    best_cert = Some((obj, sel));
                }
            }
        }
        match best_cert {
            Some((_, s)) => (s, true),
            None => (best_norm.expect("non-empty selection set").1, false),
        }
    }
}

/// Serializable stability report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityReport {
    pub system: String,
    pub mode: String,
    pub columns: SlopeColumns,
    pub l_star: f64,
    pub verdict: String,
    pub l_star_state: f64,
    pub feasible_count: usize,
    pub r: Vec<u8>,
    pub d1: Vec<u8>,
    pub d2: Vec<u8>,
    pub d3: Vec<u8>,
    pub bound_d1: Vec<u8>,
    pub bound_d2: Vec<u8>,
    pub bound_d3: Vec<u8>,
    pub bound_certified: bool,
    pub a_bar: Vec<Vec<f64>>,
    pub delta_bar: Vec<f64>,
    pub claimed_limit: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub series_limit: Option<Vec<f64>>,
    #[serde(default)]
    pub delta_z0: Vec<f64>,
    #[serde(default)]
    pub bound_sequence: Vec<Vec<f64>>,
}

fn to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}

fn from_rows(rows: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    let r = rows.len();
    let c = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|row| row.len() != c) {
        return Err(SmioError::InvalidInput("ragged matrix rows".into()));
    }
    Ok(DMatrix::from_fn(r, c, |i, j| rows[i][j]))
}

pub fn spectral_radius(m: &DMatrix<f64>) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    m.complex_eigenvalues()
        .iter()
        .fold(0.0, |a: f64, z| a.max(z.norm()))
}

/// Full analysis: certificate on `cols` plus the width-bound ingredients.
pub fn analyze(
    inputs: &StabilityInputs,
    cols: SlopeColumns,
    system: &str,
    mode: &str,
) -> Result<StabilityReport> {
    let cert = inputs.certificate(cols)?;
    let state = if cols == SlopeColumns::State {
        cert.clone()
    } else {
        inputs.certificate(SlopeColumns::State)?
    };
    let (sel, bound_certified) = inputs.bound_selection();
    let a_bar = inputs.contraction(&sel);
    let delta_bar = inputs.disturbance(&sel);
    let mut report = StabilityReport {
        system: system.to_string(),
        mode: mode.to_string(),
        columns: cols,
        l_star: cert.l_star,
        verdict: cert.verdict.as_str().to_string(),
        l_star_state: state.l_star,
        feasible_count: cert.candidates,
        r: inputs.row_support(),
        d1: cert.selection.d1,
        d2: cert.selection.d2,
        d3: cert.selection.d3,
        bound_d1: sel.d1,
        bound_d2: sel.d2,
        bound_d3: sel.d3,
        bound_certified,
        a_bar: to_rows(&a_bar),
        delta_bar: delta_bar.iter().copied().collect(),
        claimed_limit: Vec::new(),
        series_limit: None,
        delta_z0: Vec::new(),
        bound_sequence: Vec::new(),
    };
    let (claimed, series) = steady_state_bounds(&report)?;
    report.claimed_limit = claimed.iter().copied().collect();
    report.series_limit = series.map(|s| s.iter().copied().collect());
    Ok(report)
}

impl StabilityReport {
    pub fn a_bar_matrix(&self) -> Result<DMatrix<f64>> {
        from_rows(&self.a_bar)
    }

    pub fn delta_bar_vector(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.delta_bar)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| SmioError::Io(e.to_string()))
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let report: Self = toml::from_str(text).map_err(|e| toml_error(text, &e))?;
        let a = report.a_bar_matrix()?;
        if a.nrows() != a.ncols() || a.nrows() != report.delta_bar.len() {
            return Err(SmioError::InvalidInput(
                "contraction matrix and disturbance dimensions disagree".into(),
            ));
        }
        Ok(report)
    }
}

pub(crate) fn toml_error(text: &str, e: &toml::de::Error) -> SmioError {
    let (line, column) = match e.span() {
        Some(span) => {
            let before = &text[..span.start.min(text.len())];
            let line = before.matches('\n').count() + 1;
            let column = before.len() - before.rfind('\n').map_or(0, |i| i + 1) + 1;
            (line, column)
        }
        None => (1, 1),
    };
    SmioError::Parse {
        line,
        column,
        message: e.message().to_string(),
    }
}

/// `V_k = 𝒜̄^k Δ0 + Σ_{j<k} 𝒜̄^j Δ̄` for `k = 1..=horizon`; `δ_k = ||V_k||`.
pub fn width_bound_sequence(
    report: &StabilityReport,
    delta_z0: &DVector<f64>,
    horizon: usize,
) -> Result<Vec<DVector<f64>>> {
    if horizon < 1 {
        return Err(SmioError::InvalidInput("horizon must be at least 1".into()));
    }
    let a = report.a_bar_matrix()?;
    let db = report.delta_bar_vector();
    check_dim(a.nrows(), delta_z0.len(), "initial width")?;
    let mut v = delta_z0.clone();
    let mut out = Vec::with_capacity(horizon);
    for _ in 0..horizon {
        v = &a * v + &db;
        out.push(v.clone());
    }
    Ok(out)
}

/// `(e^𝒜̄ Δ̄, (I - 𝒜̄)^{-1} Δ̄)`, the second only when `ρ(𝒜̄) < 1`.
pub fn steady_state_bounds(
    report: &StabilityReport,
) -> Result<(DVector<f64>, Option<DVector<f64>>)> {
    let a = report.a_bar_matrix()?;
    let db = report.delta_bar_vector();
    let claimed = a.exp() * &db;
    let series = if spectral_radius(&a) < 1.0 {
        let n = a.nrows();
        (DMatrix::identity(n, n) - &a)
            .try_inverse()
            .map(|inv| inv * &db)
    } else {
        None
    };
    Ok((claimed, series))
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dmatrix;

    fn scalar_report(a: f64, d: f64) -> StabilityReport {
        StabilityReport {
            system: "toy".into(),
            mode: "oracle".into(),
            columns: SlopeColumns::State,
            l_star: a,
            verdict: Verdict::from_l_star(a).as_str().into(),
            l_star_state: a,
            feasible_count: 1,
            r: vec![0],
            d1: vec![0],
            d2: vec![],
            d3: vec![],
            bound_d1: vec![0],
            bound_d2: vec![],
            bound_d3: vec![],
            bound_certified: a < 1.0,
            a_bar: vec![vec![a]],
            delta_bar: vec![d],
            claimed_limit: vec![],
            series_limit: None,
            delta_z0: vec![],
            bound_sequence: vec![],
        }
    }

    #[test]
    fn zero_dynamics_is_certified() {
        let z = DMatrix::zeros(2, 4);
        let c = check_stability(&z, &DMatrix::zeros(2, 4), &z, &z, &[0, 0, 1, 1]).unwrap();
        assert_eq!(c.l_star, 0.0);
        assert_eq!(c.verdict, Verdict::Certified);
        assert_eq!(c.candidates, 1 << (2 + 2 + 2));
    }

    #[test]
    fn enumeration_respects_row_support() {
        let sels = enumerate_selections(&[1, 0, 1], 2, 1);
        assert_eq!(sels.len(), 1 << (1 + 2 + 1));
        assert!(sels.iter().all(|s| s.d1[0] == 0 && s.d1[2] == 0));
    }

    #[test]
    fn geometric_sequence() {
        let rep = scalar_report(0.5, 1.0);
        let seq = width_bound_sequence(&rep, &DVector::from_element(1, 2.0), 40).unwrap();
        for (i, v) in seq.iter().enumerate() {
            let k = (i + 1) as i32;
            let want = 0.5f64.powi(k) * 2.0 + (1.0 - 0.5f64.powi(k)) / 0.5;
            assert!((v[0] - want).abs() < 1e-12);
        }
        assert!((seq.last().unwrap()[0] - 2.0).abs() < 1e-9);
        let zero = scalar_report(0.5, 0.0);
        let seq = width_bound_sequence(&zero, &DVector::zeros(1), 5).unwrap();
        assert!(seq.iter().all(|v| v[0] == 0.0));
        assert!(width_bound_sequence(&rep, &DVector::zeros(1), 0).is_err());
    }

    #[test]
    fn steady_state_closed_forms() {
        let (c, s) = steady_state_bounds(&scalar_report(0.5, 1.0)).unwrap();
        assert!((c[0] - 0.5f64.exp()).abs() < 1e-12);
        assert!((s.unwrap()[0] - 2.0).abs() < 1e-12);
        let (c, s) = steady_state_bounds(&scalar_report(0.0, 3.0)).unwrap();
        assert_eq!((c[0], s.unwrap()[0]), (3.0, 3.0));
        let (_, s) = steady_state_bounds(&scalar_report(1.5, 1.0)).unwrap();
        assert!(s.is_none());
    }

    #[test]
    fn nilpotent_series_equals_partial_sum() {
        let mut rep = scalar_report(0.0, 0.0);
        rep.a_bar = vec![vec![0.0, 2.0], vec![0.0, 0.0]];
        rep.delta_bar = vec![1.0, 1.0];
        let (_, s) = steady_state_bounds(&rep).unwrap();
        // (I + N) Δ̄ since N² = 0.
        assert_eq!(s.unwrap().as_slice(), &[3.0, 1.0]);
    }

    #[test]
    fn brute_force_agrees() {
        // Independent enumeration over all 2^(2n+p+l) tuples, masking
        // inadmissible D1 by the row support.
        let a_f = dmatrix![0.4, -0.3, 0.1; 0.2, 0.5, -0.2];
        let c_f = dmatrix![0.0, 0.3, 0.0; 0.1, 0.0, 0.0];
        let a_h = dmatrix![0.05, 0.0, 0.3];
        let a_g = dmatrix![1.0, 0.0, 0.0; 0.0, 1.0, 0.5];
        let pinv = pseudoinverse(&a_g);
        let r = rowsupp(&(DMatrix::identity(3, 3) - &pinv * &a_g));
        let cert = check_stability(&a_f, &a_g, &a_h, &c_f, &r).unwrap();
        let mut best = f64::INFINITY;
        for mask in 0u32..(1 << (3 + 2 + 2)) {
            let b = |i: u32| f64::from(((mask >> i) & 1) as u8);
            let d1 = [b(0), b(1), b(2)];
            if (0..3).any(|i| r[i] == 1 && d1[i] == 1.0) {
                continue;
            }
            let d2 = [b(3), b(4)];
            let d3 = [b(5), b(6)];
            let mut ag = DMatrix::<f64>::zeros(3, 3);
            for i in 0..3 {
                for j in 0..3 {
                    let mut acc = if i == j { 1.0 - d1[i] } else { 0.0 };
                    for k in 0..2 {
                        acc += d1[i] * pinv[(i, k)].abs() * (1.0 - d2[k]) * a_g[(k, j)].abs();
                    }
                    ag[(i, j)] = acc;
                }
            }
            let mut afh = DMatrix::<f64>::zeros(3, 3);
            for j in 0..3 {
                for i in 0..2 {
                    afh[(i, j)] = a_f[(i, j)].abs() + 2.0 * (1.0 - d3[i]) * c_f[(i, j)];
                }
                afh[(2, j)] = a_h[(0, j)].abs();
            }
            let prod = ag * afh;
            best = best.min(prod.singular_values().max());
        }
        assert!((cert.l_star - best).abs() < 1e-12);
    }

    #[test]
    fn report_round_trip() {
        let mut rep = scalar_report(0.5, 1.0);
        rep.series_limit = Some(vec![2.0]);
        rep.bound_sequence = vec![vec![1.0], vec![1.5]];
        let text = rep.to_toml().unwrap();
        assert_eq!(StabilityReport::from_toml(&text).unwrap(), rep);
        assert!(StabilityReport::from_toml("l_star = ").is_err());
    }
}
