//! The recursive interval observer: state propagation, iterative
//! measurement update and learning of the unknown-input model.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::abstraction::{
    abstract_global, abstract_local, AbstractionOptions, AffineAbstraction, LipschitzWeights,
};
use crate::decomposition::DecompositionFunction;
use crate::error::{check_dim, Result, SmioError};
use crate::interval::{bound_linear_map, pseudoinverse, rowsupp, split, IntervalVector};
use crate::model::LearnedInputModel;
use crate::system::SystemSpec;

/// Crossings of lower and upper bounds smaller than this are treated as
/// round-off and collapsed instead of reported.
const CROSSING_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct ObserverConfig {
    pub grid_res_global: usize,
    pub grid_res_local: usize,
    pub tol_mu: f64,
    pub max_mu_iters: usize,
    pub model_window: Option<usize>,
    /// Use the global abstractions in place of per-step local ones.
    pub force_global: bool,
}

impl Default for ObserverConfig {
    fn default() -> Self {
        Self {
            grid_res_global: 2,
            grid_res_local: 1,
            tol_mu: 1e-6,
            max_mu_iters: 10,
            model_window: None,
            force_global: false,
        }
    }
}

impl ObserverConfig {
    pub fn validate(&self) -> Result<()> {
        if self.grid_res_global == 0 || self.grid_res_local == 0 {
            return Err(SmioError::Config("grid resolutions must be at least 1".into()));
        }
        if self.max_mu_iters == 0 {
            return Err(SmioError::Config("max_mu_iters must be at least 1".into()));
        }
        if !(self.tol_mu >= 0.0 && self.tol_mu.is_finite()) {
            return Err(SmioError::Config("tol_mu must be finite and non-negative".into()));
        }
        if self.model_window == Some(0) {
            return Err(SmioError::Config("model_window must be positive".into()));
        }
        Ok(())
    }
}

/// Stacked gains of an abstraction over `[z, u, w]`:
///
/// ```text
/// [hi; lo] = J [z_hi; z_lo] + B u + W [w_hi; w_lo] + [e_hi; e_lo]
/// J = [[J+, -J++], [-J++, J+]]
/// ```
#[derive(Debug, Clone, PartialEq)]
pub struct StackedGains {
    pub j_stack: DMatrix<f64>,
    pub b_stack: DMatrix<f64>,
    pub w_stack: DMatrix<f64>,
    pub e_stack: DVector<f64>,
}

fn stack_split(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let s = split(m)?;
    let (r, c) = m.shape();
    let mut out = DMatrix::zeros(2 * r, 2 * c);
    out.view_mut((0, 0), (r, c)).copy_from(&s.plus);
    out.view_mut((0, c), (r, c)).copy_from(&(-&s.plusplus));
    out.view_mut((r, 0), (r, c)).copy_from(&(-&s.plusplus));
    out.view_mut((r, c), (r, c)).copy_from(&s.plus);
    Ok(out)
}

impl StackedGains {
    pub fn new(abs: &AffineAbstraction, nz: usize, nu: usize, nw: usize) -> Result<Self> {
        check_dim(nz + nu + nw, abs.dim_in(), "abstraction columns")?;
        let b = abs.block(nz, nu);
        let mut b_stack = DMatrix::zeros(2 * b.nrows(), nu);
        b_stack.view_mut((0, 0), b.shape()).copy_from(&b);
        b_stack.view_mut((b.nrows(), 0), b.shape()).copy_from(&b);
        let mut e_stack = DVector::zeros(2 * abs.dim_out());
        e_stack.rows_mut(0, abs.dim_out()).copy_from(&abs.e_hi);
        e_stack.rows_mut(abs.dim_out(), abs.dim_out()).copy_from(&abs.e_lo);
        Ok(Self {
            j_stack: stack_split(&abs.block(0, nz))?,
            b_stack,
            w_stack: stack_split(&abs.block(nz + nu, nw))?,
            e_stack,
        })
    }

    pub fn apply(
        &self,
        z: &IntervalVector,
        u: &DVector<f64>,
        w: &IntervalVector,
    ) -> Result<IntervalVector> {
        let zs = stack(z.hi(), z.lo());
        let ws = stack(w.hi(), w.lo());
        let out = &self.j_stack * zs + &self.b_stack * u + &self.w_stack * ws + &self.e_stack;
        let m = out.len() / 2;
        let hi = out.rows(0, m).into_owned();
        let lo = out.rows(m, m).into_owned();
        ordered(lo, hi).ok_or_else(|| SmioError::InvalidInput("abstraction band is inverted".into()))
    }
}

fn stack(a: &DVector<f64>, b: &DVector<f64>) -> DVector<f64> {
    let mut v = DVector::zeros(a.len() + b.len());
    v.rows_mut(0, a.len()).copy_from(a);
    v.rows_mut(a.len(), b.len()).copy_from(b);
    v
}

/// Builds `[lo, hi]`, collapsing crossings below `CROSSING_TOL`.
fn ordered(mut lo: DVector<f64>, mut hi: DVector<f64>) -> Option<IntervalVector> {
    for i in 0..lo.len() {
        if lo[i] > hi[i] {
            if lo[i] - hi[i] > CROSSING_TOL * (1.0 + lo[i].abs().max(hi[i].abs())) {
                return None;
            }
            let mid = 0.5 * (lo[i] + hi[i]);
            lo[i] = mid;
            hi[i] = mid;
        }
    }
    IntervalVector::new(lo, hi).ok()
}

/// One observer step's record.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceEntry {
    pub k: usize,
    pub propagated: IntervalVector,
    pub updated: IntervalVector,
    /// Framer width before the first and after every MU iteration.
    pub mu_widths: Vec<f64>,
    pub local_f: AffineAbstraction,
    pub local_h: AffineAbstraction,
    pub local_g: Vec<AffineAbstraction>,
}

impl TraceEntry {
    pub fn mu_iterations(&self) -> usize {
        self.mu_widths.len().saturating_sub(1)
    }

    pub fn fallbacks(&self) -> usize {
        usize::from(self.local_f.fallback)
            + usize::from(self.local_h.fallback)
            + self.local_g.iter().filter(|a| a.fallback).count()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepDiagnostics {
    pub mu_widths: Vec<f64>,
    pub fallbacks: usize,
    /// Width bound vector for this step when a bound sequence is attached.
    pub delta_bound: Option<DVector<f64>>,
}

pub struct Observer {
    spec: Arc<SystemSpec>,
    config: ObserverConfig,
    k: usize,
    framer: IntervalVector,
    model: LearnedInputModel,
    global_f: AffineAbstraction,
    global_g: AffineAbstraction,
    global_h: AffineAbstraction,
    fd: DecompositionFunction,
    lip_h: LipschitzWeights,
    trace: Vec<TraceEntry>,
    bound_sequence: Option<Vec<DVector<f64>>>,
}

impl Observer {
    pub fn initialize(
        spec: Arc<SystemSpec>,
        z0_box: &IntervalVector,
        config: ObserverConfig,
    ) -> Result<Self> {
        spec.validate()?;
        config.validate()?;
        check_dim(spec.nz(), z0_box.dim(), "initial framer")?;
        if !spec.z_space().contains_box(z0_box, 0.0) {
            return Err(SmioError::InvalidInput(
                "initial framer lies outside the declared spaces".into(),
            ));
        }
        let global_opts = AbstractionOptions {
            grid_res: config.grid_res_global,
            zero_slope: false,
        };
        let zeta_space = spec.zeta_space();
        let global_f = abstract_global(
            spec.f.as_ref(),
            spec.f.as_ref(),
            &zeta_space,
            &spec.lipschitz_f,
            global_opts,
        )?;
        let global_g = abstract_global(
            spec.g.as_ref(),
            spec.g.as_ref(),
            &spec.nu_space(),
            &spec.lipschitz_g,
            global_opts,
        )?;
        let model = LearnedInputModel::new(
            spec.lipschitz_h.clone(),
            spec.zeta_dim(),
            spec.d_space.clone(),
        )?
        .with_window(config.model_window)?;
        let global_h =
            AffineAbstraction::constant(spec.d_space.lo(), spec.d_space.hi(), zeta_space.clone());
        let fd = DecompositionFunction::build(spec.f.clone(), spec.f_jacobian_bounds.clone())?;
        let lip_h = LipschitzWeights::uniform(spec.lipschitz_h.as_slice(), spec.zeta_dim())?;
        Ok(Self {
            spec,
            config,
            k: 0,
            framer: z0_box.clone(),
            model,
            global_f,
            global_g,
            global_h,
            fd,
            lip_h,
            trace: Vec::new(),
            bound_sequence: None,
        })
    }

    pub fn spec(&self) -> &SystemSpec {
        &self.spec
    }

    pub fn config(&self) -> &ObserverConfig {
        &self.config
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn framer(&self) -> &IntervalVector {
        &self.framer
    }

    pub fn model(&self) -> &LearnedInputModel {
        &self.model
    }

    pub fn global_f(&self) -> &AffineAbstraction {
        &self.global_f
    }

    pub fn global_g(&self) -> &AffineAbstraction {
        &self.global_g
    }

    pub fn global_h(&self) -> &AffineAbstraction {
        &self.global_h
    }

    pub fn decomposition(&self) -> &DecompositionFunction {
        &self.fd
    }

    pub fn trace(&self) -> &[TraceEntry] {
        &self.trace
    }

    /// Width bound vectors indexed by `k - 1`, reported in diagnostics.
    pub fn attach_bound_sequence(&mut self, seq: Vec<DVector<f64>>) {
        self.bound_sequence = Some(seq);
    }

    fn local_opts(&self) -> AbstractionOptions {
        AbstractionOptions {
            grid_res: self.config.grid_res_local,
            zero_slope: false,
        }
    }

    fn zeta_box(&self, z: &IntervalVector, u: &DVector<f64>) -> Result<IntervalVector> {
        check_dim(self.spec.m, u.len(), "known input")?;
        Ok(z.concat(&IntervalVector::point(u)?).concat(&self.spec.w_box))
    }

    fn restricted(global: &AffineAbstraction, bx: &IntervalVector) -> AffineAbstraction {
        let mut a = global.clone();
        a.domain = bx.clone();
        a
    }

    /// Propagated framer from the current one, plus the abstractions used.
    pub fn propagate(
        &self,
        u_prev: &DVector<f64>,
    ) -> Result<(IntervalVector, AffineAbstraction, AffineAbstraction)> {
        let s = &self.spec;
        let (n, nz, m) = (s.n, s.nz(), s.m);
        let bx = self.zeta_box(&self.framer, u_prev)?;
        if !self.global_f.domain.contains_box(&bx, 1e-9) {
            return Err(SmioError::OutsideDomain);
        }

        let local_f = if self.config.force_global {
            Self::restricted(&self.global_f, &bx)
        } else {
            abstract_local(
                s.f.as_ref(),
                s.f.as_ref(),
                &bx,
                &self.global_f,
                &s.lipschitz_f,
                self.local_opts(),
            )?
        };
        let x_abs = StackedGains::new(&local_f, nz, m, n)?.apply(&self.framer, u_prev, &s.w_box)?;
        let x_dec = self.fd.enclose(&bx)?;
        let x_p = ordered(
            x_dec.lo().sup(x_abs.lo()),
            x_dec.hi().inf(x_abs.hi()),
        )
        .ok_or_else(|| SmioError::Soundness {
            k: self.k + 1,
            detail: "decomposition and abstraction bounds of the state do not intersect".into(),
        })?;

        let local_h = if self.config.force_global {
            Self::restricted(&self.global_h, &bx)
        } else {
            let (lo, hi) = self.model.as_pair();
            abstract_local(
                lo.as_ref(),
                hi.as_ref(),
                &bx,
                &self.global_h,
                &self.lip_h,
                self.local_opts(),
            )?
        };
        let d_p = StackedGains::new(&local_h, nz, m, n)?.apply(&self.framer, u_prev, &s.w_box)?;

        let z_p = x_p
            .concat(&d_p)
            .intersect(&s.z_space())
            .ok_or_else(|| SmioError::Soundness {
                k: self.k + 1,
                detail: "propagated framer leaves the declared spaces".into(),
            })?;
        Ok((z_p, local_f, local_h))
    }

    /// Iterative measurement update of a propagated framer.
    pub fn measurement_update(
        &self,
        y: &DVector<f64>,
        u: &DVector<f64>,
        z_p: &IntervalVector,
    ) -> Result<(IntervalVector, Vec<f64>, Vec<AffineAbstraction>)> {
        let s = &self.spec;
        let (nz, m, l) = (s.nz(), s.m, s.l);
        check_dim(l, y.len(), "measurement")?;
        check_dim(m, u.len(), "known input")?;
        let fault = |detail: &str| SmioError::Soundness {
            k: self.k + 1,
            detail: detail.to_string(),
        };
        let v = &s.v_box;
        let mut z = z_p.clone();
        let mut widths = vec![z.width()];
        let mut used = Vec::new();
        for _ in 0..self.config.max_mu_iters {
            let bx = z.concat(&IntervalVector::point(u)?).concat(v);
            let abs = if self.config.force_global {
                Self::restricted(&self.global_g, &bx)
            } else {
                abstract_local(
                    s.g.as_ref(),
                    s.g.as_ref(),
                    &bx,
                    &self.global_g,
                    &s.lipschitz_g,
                    self.local_opts(),
                )?
            };
            let a = abs.block(0, nz);
            let b = abs.block(nz, m);
            let ws = split(&abs.block(nz + m, l))?;
            let base = y - &b * u;
            let t_hi = &base + &ws.plusplus * v.hi() - &ws.plus * v.lo() - &abs.e_lo;
            let t_lo = &base - &ws.plus * v.hi() + &ws.plusplus * v.lo() - &abs.e_hi;
            let az = bound_linear_map(&a, &z)?;
            let alpha = ordered(t_lo.sup(az.lo()), t_hi.inf(az.hi()))
                .ok_or_else(|| fault("measurement is inconsistent with the propagated framer"))?;

            let pinv = pseudoinverse(&a);
            let r = rowsupp(&(DMatrix::identity(nz, nz) - &pinv * &a));
            let cand = bound_linear_map(&pinv, &alpha)?;
            let mut lo = z.lo().clone();
            let mut hi = z.hi().clone();
            for i in 0..nz {
                if r[i] == 0 {
                    hi[i] = hi[i].min(cand.hi()[i]);
                    lo[i] = lo[i].max(cand.lo()[i]);
                }
            }
            let next = ordered(lo, hi)
                .ok_or_else(|| fault("measurement update produced an empty framer"))?;
            used.push(abs);
            let decrease = widths.last().copied().unwrap_or(0.0) - next.width();
            widths.push(next.width());
            z = next;
            if decrease < self.config.tol_mu {
                break;
            }
        }
        Ok((z, widths, used))
    }

    /// Records the datum pairing the previous input framer with the new
    /// unknown-input framer.
    pub fn model_update(
        &mut self,
        prev_input_framer: &IntervalVector,
        new_d_framer: &IntervalVector,
    ) -> Result<()> {
        self.model.add_datum(prev_input_framer, new_d_framer)
    }

    /// One full observer step from `k-1` to `k`.
    pub fn step(
        &mut self,
        u_prev: &DVector<f64>,
        u_now: &DVector<f64>,
        y_now: &DVector<f64>,
    ) -> Result<StepDiagnostics> {
        let (z_p, local_f, local_h) = self.propagate(u_prev)?;
        let (z_u, mu_widths, local_g) = self.measurement_update(y_now, u_now, &z_p)?;
        let prev_zeta = self.zeta_box(&self.framer, u_prev)?;
        let d_framer = z_u.slice(self.spec.n, self.spec.p);
        self.model_update(&prev_zeta, &d_framer)?;
        self.k += 1;
        self.framer = z_u.clone();
        let entry = TraceEntry {
            k: self.k,
            propagated: z_p,
            updated: z_u,
            mu_widths: mu_widths.clone(),
            local_f,
            local_h,
            local_g,
        };
        let fallbacks = entry.fallbacks();
        self.trace.push(entry);
        let delta_bound = self
            .bound_sequence
            .as_ref()
            .and_then(|s| s.get(self.k - 1).cloned());
        Ok(StepDiagnostics {
            mu_widths,
            fallbacks,
            delta_bound,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::decomposition::JacobianBounds;
    use crate::field::{affine_field, field_fn};
    use crate::system::SystemSpec;
    use nalgebra::dmatrix;

    /// Scalar system x+ = a x + w, d+ = 0, y = c_x x + c_d d + v.
    fn scalar_spec(a: f64, w: f64, c: [f64; 2], v: f64) -> SystemSpec {
        let f = affine_field(dmatrix![a, 0.0, 0.0, 1.0], DVector::zeros(1));
        let g = affine_field(dmatrix![c[0], c[1], 0.0, 1.0], DVector::zeros(1));
        SystemSpec {
            name: "scalar".into(),
            n: 1,
            p: 1,
            m: 1,
            l: 1,
            f,
            g,
            h_oracle: Some(field_fn(4, 1, |_, o| o[0] = 0.0)),
            u_signal: field_fn(1, 1, |_, o| o[0] = 0.0),
            f_jacobian_bounds: JacobianBounds::exact(dmatrix![a, 0.0, 0.0, 1.0]).unwrap(),
            lipschitz_f: LipschitzWeights::zero(1, 4),
            lipschitz_g: LipschitzWeights::zero(1, 4),
            lipschitz_h: DVector::from_element(1, 0.0),
            w_box: IntervalVector::symmetric(&[w]).unwrap(),
            v_box: IntervalVector::symmetric(&[v]).unwrap(),
            x_space: IntervalVector::symmetric(&[10.0]).unwrap(),
            d_space: IntervalVector::symmetric(&[1.0]).unwrap(),
            u_space: IntervalVector::from_slices(&[0.0], &[0.0]).unwrap(),
            x0_box: IntervalVector::from_slices(&[1.0], &[4.0]).unwrap(),
            d0_box: IntervalVector::symmetric(&[1.0]).unwrap(),
        }
    }

    fn zero() -> DVector<f64> {
        DVector::zeros(1)
    }

    #[test]
    fn stacked_gains_match_linear_bound() {
        let mut abs = AffineAbstraction::constant(
            &DVector::from_column_slice(&[0.1, -0.2]),
            &DVector::from_column_slice(&[0.3, 0.5]),
            IntervalVector::symmetric(&[5.0; 5]).unwrap(),
        );
        abs.slope = dmatrix![1.0, -2.0, 0.5, 0.3, -0.7; -0.4, 0.0, 2.0, -1.0, 0.2];
        let g = StackedGains::new(&abs, 2, 1, 2).unwrap();
        let z = IntervalVector::from_slices(&[-1.0, 0.5], &[0.5, 2.0]).unwrap();
        let u = DVector::from_element(1, 0.7);
        let w = IntervalVector::symmetric(&[0.2, 0.1]).unwrap();
        let via_gains = g.apply(&z, &u, &w).unwrap();
        let bx = z.concat(&IntervalVector::point(&u).unwrap()).concat(&w);
        let direct = abs.enclose(&bx).unwrap();
        assert!((via_gains.lo() - direct.lo()).abs().max() < 1e-12);
        assert!((via_gains.hi() - direct.hi()).abs().max() < 1e-12);
    }

    #[test]
    fn contraction_without_noise() {
        let spec = Arc::new(scalar_spec(0.5, 0.0, [0.0, 1.0], 0.0));
        let obs = Observer::initialize(spec.clone(), &spec.z0_box(), ObserverConfig::default())
            .unwrap();
        let (z_p, _, _) = obs.propagate(&zero()).unwrap();
        assert!((z_p.hi()[0] - 2.0).abs() < 1e-9);
        assert!((z_p.lo()[0] - 0.5).abs() < 1e-9);
    }

    #[test]
    fn identity_with_noise_grows_by_noise_width() {
        let spec = Arc::new(scalar_spec(1.0, 0.2, [0.0, 1.0], 0.0));
        let obs = Observer::initialize(spec.clone(), &spec.z0_box(), ObserverConfig::default())
            .unwrap();
        let (z_p, _, _) = obs.propagate(&zero()).unwrap();
        let w = z_p.hi()[0] - z_p.lo()[0];
        assert!((w - (3.0 + 0.4)).abs() < 1e-9);
    }

    #[test]
    fn perfect_observation_collapses_onto_measurement() {
        let spec = Arc::new(scalar_spec(1.0, 0.0, [1.0, 0.0], 0.0));
        let obs = Observer::initialize(spec.clone(), &spec.z0_box(), ObserverConfig::default())
            .unwrap();
        let zp = spec.z0_box();
        let y = DVector::from_element(1, 2.5);
        let (z, widths, _) = obs.measurement_update(&y, &zero(), &zp).unwrap();
        assert!((z.lo()[0] - 2.5).abs() < 1e-9 && (z.hi()[0] - 2.5).abs() < 1e-9);
        // The unknown input is unobserved: rowsupp keeps its prior bounds.
        assert_eq!(z.lo()[1], -1.0);
        assert_eq!(z.hi()[1], 1.0);
        assert!(widths.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn noise_only_measurement_gives_shifted_band() {
        let spec = Arc::new(scalar_spec(1.0, 0.0, [1.0, 0.0], 0.3));
        let obs = Observer::initialize(spec.clone(), &spec.z0_box(), ObserverConfig::default())
            .unwrap();
        let y = DVector::from_element(1, 2.5);
        let (z, _, _) = obs.measurement_update(&y, &zero(), &spec.z0_box()).unwrap();
        assert!((z.lo()[0] - 2.2).abs() < 1e-9 && (z.hi()[0] - 2.8).abs() < 1e-9);
    }

    #[test]
    fn inconsistent_measurement_is_a_soundness_fault() {
        let spec = Arc::new(scalar_spec(1.0, 0.0, [1.0, 0.0], 0.0));
        let obs = Observer::initialize(spec.clone(), &spec.z0_box(), ObserverConfig::default())
            .unwrap();
        let y = DVector::from_element(1, 9.0);
        assert!(matches!(
            obs.measurement_update(&y, &zero(), &spec.z0_box()),
            Err(SmioError::Soundness { .. })
        ));
    }

    #[test]
    fn initial_box_outside_space_rejected() {
        let spec = Arc::new(scalar_spec(1.0, 0.0, [1.0, 0.0], 0.0));
        let bad = IntervalVector::from_slices(&[0.0, 0.0], &[20.0, 0.0]).unwrap();
        assert!(Observer::initialize(spec, &bad, ObserverConfig::default()).is_err());
    }

    #[test]
    fn empty_model_gives_domain_band_for_h() {
        let spec = Arc::new(scalar_spec(1.0, 0.0, [1.0, 0.0], 0.0));
        let obs = Observer::initialize(spec.clone(), &spec.z0_box(), ObserverConfig::default())
            .unwrap();
        let gh = obs.global_h();
        assert_eq!(gh.slope, DMatrix::zeros(1, 4));
        assert_eq!((gh.e_lo[0], gh.e_hi[0]), (-1.0, 1.0));
    }

    #[test]
    fn steps_track_the_true_state() {
        let spec = Arc::new(scalar_spec(0.9, 0.1, [1.0, 0.0], 0.05));
        let mut obs = Observer::initialize(spec.clone(), &spec.z0_box(), ObserverConfig::default())
            .unwrap();
        let mut x = 2.0;
        for k in 1..=30 {
            let w = 0.1 * ((k as f64) * 1.3).sin();
            x = 0.9 * x + w;
            let y = DVector::from_element(1, x + 0.05 * ((k as f64) * 0.7).cos());
            obs.step(&zero(), &zero(), &y).unwrap();
            let f = obs.framer();
            assert!(f.lo()[0] <= x + 1e-9 && x <= f.hi()[0] + 1e-9);
            assert!(f.lo()[1] <= 1e-9 && -1e-9 <= f.hi()[1]);
        }
        assert_eq!(obs.trace().len(), 30);
        assert_eq!(obs.model().len(), 30);
    }
}
