//! System descriptions and the built-in example registry.
//!
//! Coordinates are ordered `ζ = [x, d, u, w]` for `f` and `h`, and
//! `ν = [x, d, u, v]` for `g`.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::abstraction::LipschitzWeights;
use crate::decomposition::JacobianBounds;
use crate::error::{check_dim, Result, SmioError};
use crate::expr::ExprField;
use crate::field::FieldRef;
use crate::interval::IntervalVector;

/// Half-width used for the exact entries of the built-in Jacobian bounds.
pub const JACOBIAN_EPS: f64 = 1e-6;

#[derive(Clone)]
pub struct SystemSpec {
    pub name: String,
    pub n: usize,
    pub p: usize,
    pub m: usize,
    pub l: usize,
    pub f: FieldRef,
    pub g: FieldRef,
    /// True unknown-input dynamics; never used by the estimator itself.
    pub h_oracle: Option<FieldRef>,
    /// Known input as a function of `[k]`.
    pub u_signal: FieldRef,
    pub f_jacobian_bounds: JacobianBounds,
    /// Lipschitz weights of the non-affine part of `f` over `ζ`.
    pub lipschitz_f: LipschitzWeights,
    /// Lipschitz weights of the non-affine part of `g` over `ν`.
    pub lipschitz_g: LipschitzWeights,
    /// Lipschitz constants of each `h_j` over `ζ`.
    pub lipschitz_h: DVector<f64>,
    pub w_box: IntervalVector,
    pub v_box: IntervalVector,
    pub x_space: IntervalVector,
    pub d_space: IntervalVector,
    pub u_space: IntervalVector,
    pub x0_box: IntervalVector,
    pub d0_box: IntervalVector,
}

impl std::fmt::Debug for SystemSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SystemSpec")
            .field("name", &self.name)
            .field("n", &self.n)
            .field("p", &self.p)
            .field("m", &self.m)
            .field("l", &self.l)
            .finish_non_exhaustive()
    }
}

impl SystemSpec {
    pub fn nz(&self) -> usize {
        self.n + self.p
    }

    pub fn zeta_dim(&self) -> usize {
        self.n + self.p + self.m + self.n
    }

    pub fn nu_dim(&self) -> usize {
        self.n + self.p + self.m + self.l
    }

    /// `𝒳 × 𝒟`.
    pub fn z_space(&self) -> IntervalVector {
        self.x_space.concat(&self.d_space)
    }

    /// `𝒳 × 𝒟 × 𝒰 × 𝒲`.
    pub fn zeta_space(&self) -> IntervalVector {
        self.z_space().concat(&self.u_space).concat(&self.w_box)
    }

    /// `𝒳 × 𝒟 × 𝒰 × 𝒱`.
    pub fn nu_space(&self) -> IntervalVector {
        self.z_space().concat(&self.u_space).concat(&self.v_box)
    }

    pub fn z0_box(&self) -> IntervalVector {
        self.x0_box.concat(&self.d0_box)
    }

    pub fn u_at(&self, k: usize) -> DVector<f64> {
        self.u_signal.eval(&DVector::from_element(1, k as f64))
    }

    /// Checks dimensions of every component.
    pub fn validate(&self) -> Result<()> {
        let (n, p, m, l) = (self.n, self.p, self.m, self.l);
        if n == 0 || l == 0 {
            return Err(SmioError::InvalidInput(
                "state and output dimensions must be positive".into(),
            ));
        }
        let nzeta = self.zeta_dim();
        check_dim(nzeta, self.f.dim_in(), "f input")?;
        check_dim(n, self.f.dim_out(), "f output")?;
        check_dim(self.nu_dim(), self.g.dim_in(), "g input")?;
        check_dim(l, self.g.dim_out(), "g output")?;
        if let Some(h) = &self.h_oracle {
            check_dim(nzeta, h.dim_in(), "h input")?;
            check_dim(p, h.dim_out(), "h output")?;
        }
        check_dim(1, self.u_signal.dim_in(), "input signal argument")?;
        check_dim(m, self.u_signal.dim_out(), "input signal output")?;
        check_dim(n, self.f_jacobian_bounds.nrows(), "f Jacobian rows")?;
        check_dim(nzeta, self.f_jacobian_bounds.ncols(), "f Jacobian columns")?;
        check_dim(n, self.lipschitz_f.dim_out(), "f Lipschitz rows")?;
        for r in self.lipschitz_f.rows() {
            check_dim(nzeta, r.len(), "f Lipschitz weights")?;
        }
        check_dim(l, self.lipschitz_g.dim_out(), "g Lipschitz rows")?;
        for r in self.lipschitz_g.rows() {
            check_dim(self.nu_dim(), r.len(), "g Lipschitz weights")?;
        }
        check_dim(p, self.lipschitz_h.len(), "h Lipschitz constants")?;
        check_dim(n, self.w_box.dim(), "process noise box")?;
        check_dim(l, self.v_box.dim(), "measurement noise box")?;
        check_dim(n, self.x_space.dim(), "state space")?;
        check_dim(p, self.d_space.dim(), "unknown-input space")?;
        check_dim(m, self.u_space.dim(), "known-input space")?;
        check_dim(n, self.x0_box.dim(), "initial state box")?;
        check_dim(p, self.d0_box.dim(), "initial unknown-input box")?;
        if !self.z_space().contains_box(&self.z0_box(), 1e-12) {
            return Err(SmioError::InvalidInput(
                "initial box lies outside the declared state/input spaces".into(),
            ));
        }
        Ok(())
    }
}

pub fn zeta_names(n: usize, p: usize, m: usize) -> Vec<String> {
    names(n, p, m, "w", n)
}

pub fn nu_names(n: usize, p: usize, m: usize, l: usize) -> Vec<String> {
    names(n, p, m, "v", l)
}

fn names(n: usize, p: usize, m: usize, noise: &str, nn: usize) -> Vec<String> {
    let mut v = Vec::new();
    v.extend((1..=n).map(|i| format!("x{i}")));
    v.extend((1..=p).map(|i| format!("d{i}")));
    v.extend((1..=m).map(|i| format!("u{i}")));
    v.extend((1..=nn).map(|i| format!("{noise}{i}")));
    v
}

/// Parse expression sources over the given variable names.
pub fn expr_field(sources: &[String], vars: &[String]) -> Result<FieldRef> {
    let refs: Vec<&str> = vars.iter().map(String::as_str).collect();
    Ok(Arc::new(ExprField::parse_all(sources, &refs)?))
}

pub const BUILTINS: &[&str] = &["deangelis_modified"];

pub fn builtin(name: &str) -> Result<SystemSpec> {
    match name {
        "deangelis_modified" => deangelis_modified(),
        _ => Err(SmioError::UnknownSystem {
            name: name.to_string(),
            available: BUILTINS.join(", "),
        }),
    }
}

pub const DEANGELIS_F: [&str; 2] = [
    "0.6*x1 - 0.12*x2 + 1.1*sin(0.3*x2 - 0.2*x1) - 0.1*d2 + w1",
    "-0.2*x1 - 0.14*x2 + 0.2*d1 - 0.2*d2 + w2",
];
pub const DEANGELIS_G: [&str; 2] = [
    "0.2*x1 + 0.65*x2 + 0.8*sin(0.3*x1 + 0.2*x2) - 0.1*d1 + 0.3*d2 + v1",
    "sin(x1) + 0.5*d1 - 0.7*d2 + v2",
];
pub const DEANGELIS_H: [&str; 2] = ["0.1*cos(d1)", "1/(1 + exp(d2)) - 0.1*d1"];

fn deangelis_modified() -> Result<SystemSpec> {
    let (n, p, m, l) = (2, 2, 1, 2);
    let zn = zeta_names(n, p, m);
    let nn = nu_names(n, p, m, l);
    let src = |a: &[&str]| a.iter().map(|s| s.to_string()).collect::<Vec<_>>();
    let f = expr_field(&src(&DEANGELIS_F), &zn)?;
    let g = expr_field(&src(&DEANGELIS_G), &nn)?;
    let h = expr_field(&src(&DEANGELIS_H), &zn)?;
    let u_signal = expr_field(&["0".to_string()], &["k".to_string()])?;

    let e = JACOBIAN_EPS;
    #[rustfmt::skip]
    let a = DMatrix::from_row_slice(2, 7, &[
        0.38, -0.46, -e, -0.1 - e, -e, 1.0 - e, -e,
        -0.2 - e, -0.14 - e, 0.2 - e, -0.2 - e, -e, -e, 1.0 - e,
    ]);
    #[rustfmt::skip]
    let b = DMatrix::from_row_slice(2, 7, &[
        0.82, 0.21, e, -0.1 + e, e, 1.0 + e, e,
        -0.2 + e, -0.14 + e, 0.2 + e, -0.2 + e, e, e, 1.0 + e,
    ]);
    let jb = JacobianBounds::new(a, b)?;

    // Ridge terms c·sin(a·x): weight c·||a|| on the coordinates involved.
    let r = (0.3f64 * 0.3 + 0.2 * 0.2).sqrt();
    let mut f1 = DVector::zeros(7);
    f1[0] = 1.1 * r;
    f1[1] = 1.1 * r;
    let mut g1 = DVector::zeros(7);
    g1[0] = 0.8 * r;
    g1[1] = 0.8 * r;
    let mut g2 = DVector::zeros(7);
    g2[0] = 1.0;
    let lipschitz_f = LipschitzWeights::per_coordinate(vec![f1, DVector::zeros(7)])?;
    let lipschitz_g = LipschitzWeights::per_coordinate(vec![g1, g2])?;
    // ∇h1 = (-0.1 sin d1), ∇h2 = (-0.1, -s(1-s)) with s(1-s) <= 1/4.
    let lipschitz_h = DVector::from_column_slice(&[0.1, (0.01f64 + 0.0625).sqrt()]);

    let spec = SystemSpec {
        name: "deangelis_modified".into(),
        n,
        p,
        m,
        l,
        f,
        g,
        h_oracle: Some(h),
        u_signal,
        f_jacobian_bounds: jb,
        lipschitz_f,
        lipschitz_g,
        lipschitz_h,
        w_box: IntervalVector::symmetric(&[0.2, 0.2])?,
        v_box: IntervalVector::symmetric(&[0.2, 0.2])?,
        x_space: IntervalVector::symmetric(&[3.0, 3.0])?,
        d_space: IntervalVector::symmetric(&[1.0, 1.0])?,
        u_space: IntervalVector::from_slices(&[0.0], &[0.0])?,
        x0_box: IntervalVector::from_slices(&[-1.1, -2.0], &[2.0, 1.1])?,
        d0_box: IntervalVector::symmetric(&[1.0, 1.0])?,
    };
    spec.validate()?;
    Ok(spec)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn builtin_values() {
        let s = builtin("deangelis_modified").unwrap();
        assert_eq!(s.v_box.hi().as_slice(), &[0.2, 0.2]);
        assert_eq!(s.w_box.lo().as_slice(), &[-0.2, -0.2]);
        assert_eq!(s.f_jacobian_bounds.b[(0, 0)], 0.82);
        assert_eq!(s.f_jacobian_bounds.a[(0, 1)], -0.46);
        assert_eq!(s.x0_box.hi().as_slice(), &[2.0, 1.1]);
        assert_eq!((s.n, s.p, s.m, s.l), (2, 2, 1, 2));
    }

    #[test]
    fn unknown_builtin_lists_available() {
        match builtin("nope") {
            Err(SmioError::UnknownSystem { available, .. }) => {
                assert!(available.contains("deangelis_modified"))
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn expressions_match_hand_coded_system() {
        let s = builtin("deangelis_modified").unwrap();
        let h = s.h_oracle.clone().unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..1000 {
            let z: Vec<f64> = (0..7).map(|_| rng.random_range(-3.0..3.0)).collect();
            let (x1, x2, d1, d2, w1, w2) = (z[0], z[1], z[2], z[3], z[5], z[6]);
            let zv = DVector::from_column_slice(&z);
            let f = s.f.eval(&zv);
            let f1 = 0.6 * x1 - 0.12 * x2 + 1.1 * (0.3 * x2 - 0.2 * x1).sin() - 0.1 * d2 + w1;
            let f2 = -0.2 * x1 - 0.14 * x2 + 0.2 * d1 - 0.2 * d2 + w2;
            assert!((f[0] - f1).abs() < 1e-12 && (f[1] - f2).abs() < 1e-12);
            let g = s.g.eval(&zv);
            let (v1, v2) = (w1, w2);
            let g1 = 0.2 * x1 + 0.65 * x2 + 0.8 * (0.3 * x1 + 0.2 * x2).sin() - 0.1 * d1
                + 0.3 * d2
                + v1;
            let g2 = x1.sin() + 0.5 * d1 - 0.7 * d2 + v2;
            assert!((g[0] - g1).abs() < 1e-12 && (g[1] - g2).abs() < 1e-12);
            let hv = h.eval(&zv);
            assert!((hv[0] - 0.1 * d1.cos()).abs() < 1e-12);
            assert!((hv[1] - (1.0 / (1.0 + d2.exp()) - 0.1 * d1)).abs() < 1e-12);
        }
    }

    #[test]
    fn spaces_are_forward_invariant_on_samples() {
        let s = builtin("deangelis_modified").unwrap();
        let h = s.h_oracle.clone().unwrap();
        let zs = s.zeta_space();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..5000 {
            let z = DVector::from_fn(7, |i, _| {
                let (lo, hi) = (zs.lo()[i], zs.hi()[i]);
                if lo == hi { lo } else { rng.random_range(lo..=hi) }
            });
            assert!(s.x_space.contains(&s.f.eval(&z), 0.0));
            assert!(s.d_space.contains(&h.eval(&z), 0.0));
        }
    }
}
