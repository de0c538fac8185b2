//! Ground-truth simulation with uniform bounded noise.

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Result, SmioError};
use crate::field::FieldRef;
use crate::interval::IntervalVector;
use crate::system::SystemSpec;

/// Sampled trajectory; index `k` runs over `0..=horizon`.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub x: Vec<DVector<f64>>,
    pub d: Vec<DVector<f64>>,
    pub u: Vec<DVector<f64>>,
    pub w: Vec<DVector<f64>>,
    pub v: Vec<DVector<f64>>,
    pub y: Vec<DVector<f64>>,
}

impl Trajectory {
    pub fn z(&self, k: usize) -> DVector<f64> {
        let (x, d) = (&self.x[k], &self.d[k]);
        DVector::from_iterator(x.len() + d.len(), x.iter().chain(d.iter()).copied())
    }

    pub fn zeta(&self, k: usize) -> DVector<f64> {
        cat(&[&self.x[k], &self.d[k], &self.u[k], &self.w[k]])
    }

    pub fn horizon(&self) -> usize {
        self.x.len() - 1
    }
}

pub(crate) fn cat(parts: &[&DVector<f64>]) -> DVector<f64> {
    DVector::from_iterator(
        parts.iter().map(|p| p.len()).sum(),
        parts.iter().flat_map(|p| p.iter().copied()),
    )
}

pub fn sample_box(rng: &mut impl Rng, bx: &IntervalVector) -> DVector<f64> {
    DVector::from_fn(bx.dim(), |i, _| {
        let (lo, hi) = (bx.lo()[i], bx.hi()[i]);
        if lo == hi {
            lo
        } else {
            rng.random_range(lo..=hi)
        }
    })
}

fn eval_checked(f: &FieldRef, x: &DVector<f64>, what: &str, k: usize) -> Result<DVector<f64>> {
    let out = f.eval(x);
    if out.iter().any(|v| !v.is_finite()) {
        return Err(SmioError::Eval(format!("{what} is not finite at k={k}")));
    }
    Ok(out)
}

/// Simulate `horizon` steps from a random initial state in the initial box.
pub fn simulate(spec: &SystemSpec, horizon: usize, seed: u64) -> Result<Trajectory> {
    let h = spec.h_oracle.as_ref().ok_or_else(|| {
        SmioError::InvalidInput("simulation needs the true unknown-input dynamics".into())
    })?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x0 = sample_box(&mut rng, &spec.x0_box);
    let d0 = sample_box(&mut rng, &spec.d0_box);
    simulate_from(spec, h, horizon, x0, d0, &mut rng)
}

pub fn simulate_from(
    spec: &SystemSpec,
    h: &FieldRef,
    horizon: usize,
    x0: DVector<f64>,
    d0: DVector<f64>,
    rng: &mut impl Rng,
) -> Result<Trajectory> {
    let cap = horizon + 1;
    let mut t = Trajectory {
        x: Vec::with_capacity(cap),
        d: Vec::with_capacity(cap),
        u: Vec::with_capacity(cap),
        w: Vec::with_capacity(cap),
        v: Vec::with_capacity(cap),
        y: Vec::with_capacity(cap),
    };
    let (mut x, mut d) = (x0, d0);
    for k in 0..=horizon {
        let u = spec.u_at(k);
        if !spec.u_space.contains(&u, 1e-12) {
            return Err(SmioError::InvalidInput(format!(
                "known input at k={k} is outside the declared input space"
            )));
        }
        let w = sample_box(rng, &spec.w_box);
        let v = sample_box(rng, &spec.v_box);
        let nu = cat(&[&x, &d, &u, &v]);
        let y = eval_checked(&spec.g, &nu, "g", k)?;
        let zeta = cat(&[&x, &d, &u, &w]);
        let x_next = eval_checked(&spec.f, &zeta, "f", k)?;
        let d_next = eval_checked(h, &zeta, "h", k)?;
        t.x.push(x);
        t.d.push(d);
        t.u.push(u);
        t.w.push(w);
        t.v.push(v);
        t.y.push(y);
        x = x_next;
        d = d_next;
    }
    Ok(t)
}
