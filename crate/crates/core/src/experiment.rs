//! End-to-end driver: simulate, observe, analyze and write artifacts.
//!
//! Trace CSV layout (one file per seed, `trace_seed<N>.csv`): a
//! `# noise=uniform ...` comment line, then a header row and one row per
//! `k = 0..=horizon` with
//!
//! | column | meaning |
//! |---|---|
//! | `k` | time step |
//! | `x<i>`, `d<j>` | true state and unknown input |
//! | `x<i>_lo`, `x<i>_hi`, `d<j>_lo`, `d<j>_hi` | framer bounds |
//! | `width_x`, `width_d` | 2-norm of the framer widths per block |
//! | `err_x`, `err_d` | `max(‖z - z_lo‖, ‖z_hi - z‖)` per block |
//! | `bound_x`, `bound_d` | width bound sequence per block (from `trace_bound.toml`) |
//! | `contained` | 1 when the true value lies in the framer |
//! | `mu_iterations`, `fallbacks` | measurement-update iterations and local abstraction fallbacks |
//!
//! Numbers are written with 17 significant digits.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use log::{error, info};
use nalgebra::DVector;
use rayon::prelude::*;

use crate::abstraction::{abstract_global, abstract_local, AbstractionOptions, AffineAbstraction, LipschitzWeights};
use crate::config::{ExperimentConfig, StabilityMode};
use crate::error::{Result, SmioError};
use crate::field::FieldRef;
use crate::interval::IntervalVector;
use crate::observer::{Observer, ObserverConfig};
use crate::simulate::{simulate, Trajectory};
use crate::stability::{analyze, width_bound_sequence, SlopeColumns, StabilityInputs, StabilityReport};
use crate::system::SystemSpec;

/// Containment slack for floating-point round-off.
pub const CONTAINMENT_TOL: f64 = 1e-9;

pub fn fmt_num(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.16e}")
    } else {
        format!("{v}")
    }
}

/// Result of one seed.
#[derive(Debug, Clone, PartialEq)]
pub struct SeedOutcome {
    pub seed: u64,
    pub steps: usize,
    pub violations: usize,
    pub fault: Option<String>,
    pub csv: String,
    pub model_table: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSummary {
    pub seeds: Vec<SeedOutcome>,
    pub report: StabilityReport,
    pub out_dir: PathBuf,
}

impl ExperimentSummary {
    pub fn violations(&self) -> usize {
        self.seeds
            .iter()
            .map(|s| s.violations + usize::from(s.fault.is_some()))
            .sum()
    }

    pub fn exit_code(&self) -> i32 {
        i32::from(self.violations() != 0)
    }
}

fn block_norm(v: &DVector<f64>, start: usize, len: usize) -> f64 {
    v.rows(start, len).norm()
}

fn error_norms(bx: &IntervalVector, z: &DVector<f64>, start: usize, len: usize) -> f64 {
    let below = (z - bx.lo()).rows(start, len).norm();
    let above = (bx.hi() - z).rows(start, len).norm();
    below.max(above)
}

fn header(spec: &SystemSpec, seed: u64) -> String {
    let (n, p) = (spec.n, spec.p);
    let mut cols = vec!["k".to_string()];
    cols.extend((1..=n).map(|i| format!("x{i}")));
    cols.extend((1..=p).map(|j| format!("d{j}")));
    for i in 1..=n {
        cols.push(format!("x{i}_lo"));
        cols.push(format!("x{i}_hi"));
    }
    for j in 1..=p {
        cols.push(format!("d{j}_lo"));
        cols.push(format!("d{j}_hi"));
    }
    for c in [
        "width_x", "width_d", "err_x", "err_d", "bound_x", "bound_d", "contained",
        "mu_iterations", "fallbacks",
    ] {
        cols.push(c.to_string());
    }
    format!(
        "# noise=uniform system={} seed={seed}\n{}\n",
        spec.name,
        cols.join(",")
    )
}

struct Row<'a> {
    k: usize,
    z: DVector<f64>,
    framer: Option<&'a IntervalVector>,
    bound: Option<&'a DVector<f64>>,
    mu_iterations: usize,
    fallbacks: usize,
}

fn write_row(out: &mut String, spec: &SystemSpec, r: &Row<'_>) -> bool {
    let (n, p) = (spec.n, spec.p);
    let mut cells = vec![r.k.to_string()];
    cells.extend(r.z.iter().map(|v| fmt_num(*v)));
    let contained = match r.framer {
        Some(bx) => {
            for i in 0..n + p {
                cells.push(fmt_num(bx.lo()[i]));
                cells.push(fmt_num(bx.hi()[i]));
            }
            let w = bx.widths();
            cells.push(fmt_num(block_norm(&w, 0, n)));
            cells.push(fmt_num(block_norm(&w, n, p)));
            cells.push(fmt_num(error_norms(bx, &r.z, 0, n)));
            cells.push(fmt_num(error_norms(bx, &r.z, n, p)));
            bx.contains(&r.z, CONTAINMENT_TOL)
        }
        None => {
            cells.extend(std::iter::repeat_n("NaN".to_string(), 2 * (n + p) + 4));
            false
        }
    };
    match r.bound {
        Some(b) => {
            cells.push(fmt_num(block_norm(b, 0, n)));
            cells.push(fmt_num(block_norm(b, n, p)));
        }
        None => cells.extend(["NaN".to_string(), "NaN".to_string()]),
    }
    cells.push(u8::from(contained).to_string());
    cells.push(r.mu_iterations.to_string());
    cells.push(r.fallbacks.to_string());
    out.push_str(&cells.join(","));
    out.push('\n');
    contained
}

/// Runs one seed in memory. `bounds[k-1]` is the width bound at step `k`;
/// `delta_z0` is reported at `k = 0`.
pub fn run_seed(
    spec: &Arc<SystemSpec>,
    obs_cfg: &ObserverConfig,
    horizon: usize,
    seed: u64,
    delta_z0: Option<&DVector<f64>>,
    bounds: Option<&[DVector<f64>]>,
) -> Result<(SeedOutcome, Observer, Trajectory)> {
    let traj = simulate(spec, horizon, seed)?;
    let mut obs = Observer::initialize(spec.clone(), &spec.z0_box(), obs_cfg.clone())?;
    if let Some(b) = bounds {
        obs.attach_bound_sequence(b.to_vec());
    }
    let mut csv = header(spec, seed);
    let mut violations = 0;
    let ok = write_row(
        &mut csv,
        spec,
        &Row {
            k: 0,
            z: traj.z(0),
            framer: Some(obs.framer()),
            bound: delta_z0,
            mu_iterations: 0,
            fallbacks: 0,
        },
    );
    violations += usize::from(!ok);
    let mut fault = None;
    let mut steps = 0;
    for k in 1..=horizon {
        match obs.step(&traj.u[k - 1], &traj.u[k], &traj.y[k]) {
            Ok(diag) => {
                steps = k;
                let ok = write_row(
                    &mut csv,
                    spec,
                    &Row {
                        k,
                        z: traj.z(k),
                        framer: Some(obs.framer()),
                        bound: diag.delta_bound.as_ref(),
                        mu_iterations: diag.mu_widths.len().saturating_sub(1),
                        fallbacks: diag.fallbacks,
                    },
                );
                if !ok {
                    error!("seed {seed}: true state outside the framer at k={k}");
                    violations += 1;
                }
            }
            Err(e) => {
                error!("seed {seed}: observer failed at k={k}: {e}");
                write_row(
                    &mut csv,
                    spec,
                    &Row {
                        k,
                        z: traj.z(k),
                        framer: None,
                        bound: None,
                        mu_iterations: 0,
                        fallbacks: 0,
                    },
                );
                let _ = writeln!(csv, "# fault: {e}");
                fault = Some(e.to_string());
                break;
            }
        }
    }
    let outcome = SeedOutcome {
        seed,
        steps,
        violations,
        fault,
        csv,
        model_table: obs.model().to_table(),
    };
    Ok((outcome, obs, traj))
}

fn uniform_h_weights(spec: &SystemSpec) -> Result<LipschitzWeights> {
    LipschitzWeights::uniform(spec.lipschitz_h.as_slice(), spec.zeta_dim())
}

/// Global abstraction of the true unknown-input dynamics.
pub fn oracle_h_abstraction(spec: &SystemSpec, grid_res: usize) -> Result<AffineAbstraction> {
    let h = spec.h_oracle.as_ref().ok_or_else(|| {
        SmioError::Config("oracle stability needs the true unknown-input dynamics".into())
    })?;
    abstract_global(
        h.as_ref(),
        h.as_ref(),
        &spec.zeta_space(),
        &uniform_h_weights(spec)?,
        AbstractionOptions {
            grid_res,
            zero_slope: false,
        },
    )
}

/// Global abstraction of a learned model's bound pair.
pub fn learned_h_abstraction(
    spec: &SystemSpec,
    obs: &Observer,
    grid_res: usize,
) -> Result<AffineAbstraction> {
    let (lo, hi) = obs.model().as_pair();
    abstract_global(
        lo.as_ref(),
        hi.as_ref(),
        &spec.zeta_space(),
        &uniform_h_weights(spec)?,
        AbstractionOptions {
            grid_res,
            zero_slope: false,
        },
    )
}

fn with_bounds(
    mut report: StabilityReport,
    spec: &SystemSpec,
    horizon: usize,
) -> Result<StabilityReport> {
    let dz0 = spec.z0_box().widths();
    report.bound_sequence = width_bound_sequence(&report, &dz0, horizon)?
        .iter()
        .map(|v| v.iter().copied().collect())
        .collect();
    report.delta_z0 = dz0.iter().copied().collect();
    Ok(report)
}

/// Stability report for `mode`, with the width bound sequence attached.
/// Learned mode runs the observer on the first seed and abstracts the
/// final model.
pub fn stability_report(
    spec: &Arc<SystemSpec>,
    cfg: &ExperimentConfig,
    mode: StabilityMode,
    columns: SlopeColumns,
) -> Result<StabilityReport> {
    let obs_cfg = cfg.observer_config();
    let (obs, gh) = match mode {
        StabilityMode::Oracle => {
            let obs = Observer::initialize(spec.clone(), &spec.z0_box(), obs_cfg.clone())?;
            let gh = oracle_h_abstraction(spec, obs_cfg.grid_res_global)?;
            (obs, gh)
        }
        StabilityMode::Learned => {
            let seed = cfg.seeds()[0];
            let (_, obs, _) = run_seed(spec, &obs_cfg, cfg.run.horizon, seed, None, None)?;
            let gh = learned_h_abstraction(spec, &obs, obs_cfg.grid_res_global)?;
            (obs, gh)
        }
    };
    let inputs = StabilityInputs::from_parts(
        spec,
        obs.global_f(),
        obs.global_g(),
        &gh,
        obs.decomposition(),
    )?;
    let report = analyze(&inputs, columns, &spec.name, mode.as_str())?;
    with_bounds(report, spec, cfg.run.horizon)
}

/// Width bounds for the abstractions the observer itself runs with: the
/// global `f` and `g` abstractions and the initial (empty) model for `h`.
pub fn observer_bound_report(
    spec: &Arc<SystemSpec>,
    obs_cfg: &ObserverConfig,
    horizon: usize,
) -> Result<StabilityReport> {
    let obs = Observer::initialize(spec.clone(), &spec.z0_box(), obs_cfg.clone())?;
    let inputs = StabilityInputs::from_parts(
        spec,
        obs.global_f(),
        obs.global_g(),
        obs.global_h(),
        obs.decomposition(),
    )?;
    let report = analyze(&inputs, SlopeColumns::State, &spec.name, "observer")?;
    with_bounds(report, spec, horizon)
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text)
        .map_err(|e| SmioError::Io(format!("{}: {e}", path.display())))
}

fn ensure_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| SmioError::Io(format!("{}: {e}", dir.display())))
}

pub fn run_stability(cfg: &ExperimentConfig) -> Result<(StabilityReport, PathBuf)> {
    let spec = Arc::new(cfg.build_system()?);
    let report = stability_report(&spec, cfg, cfg.stability.mode, cfg.stability.columns)?;
    let dir = PathBuf::from(&cfg.output.dir);
    ensure_dir(&dir)?;
    let path = dir.join("stability.toml");
    write_file(&path, &report.to_toml()?)?;
    info!(
        "stability ({} columns): L* = {} ({})",
        report.columns.as_str(),
        report.l_star,
        report.verdict
    );
    Ok((report, path))
}

/// Runs every seed (in parallel) and writes per-seed traces and model
/// dumps plus one stability report to the output directory.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentSummary> {
    let spec = Arc::new(cfg.build_system()?);
    let dir = PathBuf::from(&cfg.output.dir);
    ensure_dir(&dir)?;
    let report = stability_report(&spec, cfg, cfg.stability.mode, cfg.stability.columns)?;
    write_file(&dir.join("stability.toml"), &report.to_toml()?)?;
    let obs_cfg = cfg.observer_config();
    let trace_bound = observer_bound_report(&spec, &obs_cfg, cfg.run.horizon)?;
    write_file(&dir.join("trace_bound.toml"), &trace_bound.to_toml()?)?;
    let bounds: Vec<DVector<f64>> = trace_bound
        .bound_sequence
        .iter()
        .map(|v| DVector::from_column_slice(v))
        .collect();
    let dz0 = DVector::from_column_slice(&trace_bound.delta_z0);
    let seeds = cfg.seeds();
    let outcomes: Vec<Result<SeedOutcome>> = seeds
        .par_iter()
        .map(|&seed| {
            let (o, _, _) = run_seed(&spec, &obs_cfg, cfg.run.horizon, seed, Some(&dz0), Some(&bounds))?;
            write_file(&dir.join(format!("trace_seed{seed}.csv")), &o.csv)?;
            write_file(&dir.join(format!("model_seed{seed}.txt")), &o.model_table)?;
            Ok(o)
        })
        .collect();
    let seeds = outcomes.into_iter().collect::<Result<Vec<_>>>()?;
    let summary = ExperimentSummary {
        seeds,
        report,
        out_dir: dir,
    };
    info!(
        "{} seeds, {} containment violations",
        summary.seeds.len(),
        summary.violations()
    );
    Ok(summary)
}

/// Runs one seed and returns the final model table.
pub fn dump_model(cfg: &ExperimentConfig, seed: u64) -> Result<String> {
    let spec = Arc::new(cfg.build_system()?);
    let (o, _, _) = run_seed(&spec, &cfg.observer_config(), cfg.run.horizon, seed, None, None)?;
    if let Some(f) = o.fault {
        return Err(SmioError::Soundness { k: o.steps + 1, detail: f });
    }
    Ok(o.model_table)
}

/// Sampled 1-D slice of a target map with its local and global bands.
#[derive(Debug, Clone, PartialEq)]
pub struct AbstractionSlice {
    pub target: String,
    pub axis: usize,
    pub bx: IntervalVector,
    pub local: AffineAbstraction,
    pub global: AffineAbstraction,
    pub s: Vec<f64>,
    /// Per sample, per output: `(q_lo, q_hi)`.
    pub q: Vec<Vec<(f64, f64)>>,
    pub local_band: Vec<Vec<(f64, f64)>>,
    pub global_band: Vec<Vec<(f64, f64)>>,
    /// True unknown-input dynamics along the slice (target `h` only).
    pub oracle: Option<Vec<DVector<f64>>>,
}

impl AbstractionSlice {
    pub fn to_csv(&self) -> String {
        let m = self.local.dim_out();
        let mut cols = vec!["s".to_string()];
        for j in 1..=m {
            for c in ["q_lo", "q_hi", "local_lo", "local_hi", "global_lo", "global_hi"] {
                cols.push(format!("{c}{j}"));
            }
            if self.oracle.is_some() {
                cols.push(format!("oracle{j}"));
            }
        }
        let mut out = format!(
            "# target={} axis={} fallback={}\n{}\n",
            self.target,
            self.axis,
            self.local.fallback,
            cols.join(",")
        );
        for (t, s) in self.s.iter().enumerate() {
            let mut cells = vec![fmt_num(*s)];
            for j in 0..m {
                for (lo, hi) in [self.q[t][j], self.local_band[t][j], self.global_band[t][j]] {
                    cells.push(fmt_num(lo));
                    cells.push(fmt_num(hi));
                }
                if let Some(o) = &self.oracle {
                    cells.push(fmt_num(o[t][j]));
                }
            }
            out.push_str(&cells.join(","));
            out.push('\n');
        }
        out
    }
}

/// Abstraction slice per the `[abstract]` section. The observer is first
/// run for `learn_steps` on the first seed; unless the section gives a box,
/// the slice box is the final observer input box for the target. With
/// `zero_slope` both bands are horizontal.
pub fn run_abstract(cfg: &ExperimentConfig) -> Result<AbstractionSlice> {
    let spec = Arc::new(cfg.build_system()?);
    let a = &cfg.abstraction;
    let steps = a.learn_steps.max(1);
    let seed = cfg.seeds()[0];
    let (o, obs, traj) = run_seed(&spec, &cfg.observer_config(), steps, seed, None, None)?;
    if let Some(f) = o.fault {
        return Err(SmioError::Soundness { k: o.steps + 1, detail: f });
    }
    let u = &traj.u[steps];
    let framer = obs.framer().concat(&IntervalVector::point(u)?);
    let (q_lo, q_hi, global, lip, default_box): (FieldRef, FieldRef, AffineAbstraction, LipschitzWeights, IntervalVector) =
        match a.target.as_str() {
            "f" => (
                spec.f.clone(),
                spec.f.clone(),
                obs.global_f().clone(),
                spec.lipschitz_f.clone(),
                framer.concat(&spec.w_box),
            ),
            "g" => (
                spec.g.clone(),
                spec.g.clone(),
                obs.global_g().clone(),
                spec.lipschitz_g.clone(),
                framer.concat(&spec.v_box),
            ),
            _ => {
                let (lo, hi) = obs.model().as_pair();
                (
                    lo,
                    hi,
                    obs.global_h().clone(),
                    uniform_h_weights(&spec)?,
                    framer.concat(&spec.w_box),
                )
            }
        };
    let bx = match (&a.lo, &a.hi) {
        (Some(lo), Some(hi)) => IntervalVector::from_slices(lo, hi)?,
        (None, None) => default_box,
        _ => return Err(SmioError::Config("abstract: give both lo and hi or neither".into())),
    };
    if a.axis >= bx.dim() {
        return Err(SmioError::Config(format!(
            "abstract.axis {} out of range (input dimension {})",
            a.axis,
            bx.dim()
        )));
    }
    let space = match a.target.as_str() {
        "g" => spec.nu_space(),
        _ => spec.zeta_space(),
    };
    let global = if a.zero_slope {
        let opts = AbstractionOptions {
            grid_res: cfg.observer.grid_res_global,
            zero_slope: true,
        };
        abstract_global(q_lo.as_ref(), q_hi.as_ref(), &space, &lip, opts)?
    } else {
        global
    };
    let opts = AbstractionOptions {
        grid_res: cfg.observer.grid_res_local,
        zero_slope: a.zero_slope,
    };
    let local = abstract_local(q_lo.as_ref(), q_hi.as_ref(), &bx, &global, &lip, opts)?;
    let mid = bx.midpoint();
    let (lo, hi) = (bx.lo()[a.axis], bx.hi()[a.axis]);
    let m = local.dim_out();
    let mut slice = AbstractionSlice {
        target: a.target.clone(),
        axis: a.axis,
        bx: bx.clone(),
        local,
        global,
        s: Vec::with_capacity(a.points),
        q: Vec::with_capacity(a.points),
        local_band: Vec::with_capacity(a.points),
        global_band: Vec::with_capacity(a.points),
        oracle: (a.target == "h" && spec.h_oracle.is_some()).then(Vec::new),
    };
    for t in 0..a.points {
        let s = lo + (hi - lo) * t as f64 / (a.points - 1) as f64;
        let mut pt = mid.clone();
        pt[a.axis] = s;
        let (ql, qh) = (q_lo.eval(&pt), q_hi.eval(&pt));
        let (ll, lh) = (slice.local.lower_at(&pt), slice.local.upper_at(&pt));
        let (gl, gh) = (slice.global.lower_at(&pt), slice.global.upper_at(&pt));
        slice.s.push(s);
        slice.q.push((0..m).map(|j| (ql[j], qh[j])).collect());
        slice.local_band.push((0..m).map(|j| (ll[j], lh[j])).collect());
        slice.global_band.push((0..m).map(|j| (gl[j], gh[j])).collect());
        if let (Some(o), Some(h)) = (slice.oracle.as_mut(), spec.h_oracle.as_ref()) {
            o.push(h.eval(&pt));
        }
    }
    Ok(slice)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_cfg(extra: &str) -> ExperimentConfig {
        let text = format!(
            "[system]\nbuiltin = \"deangelis_modified\"\n[run]\nhorizon = 20\nseeds = [5]\n{extra}"
        );
        ExperimentConfig::parse(&text).unwrap()
    }

    #[test]
    fn number_format_has_17_digits() {
        assert_eq!(fmt_num(0.1), "1.0000000000000001e-1");
        assert_eq!(fmt_num(-2.0), "-2.0000000000000000e0");
        assert_eq!(fmt_num(f64::NAN), "NaN");
    }

    #[test]
    fn error_norm_is_worst_side() {
        let bx = IntervalVector::from_slices(&[0.0, 0.0], &[4.0, 1.0]).unwrap();
        let z = DVector::from_vec(vec![1.0, 1.0]);
        assert!((error_norms(&bx, &z, 0, 2) - 3.0).abs() < 1e-12);
        assert!((error_norms(&bx, &z, 1, 1) - 1.0).abs() < 1e-12);
        let z = DVector::from_vec(vec![0.5, 0.5]);
        assert!((error_norms(&bx, &z, 0, 2) - (3.5f64.powi(2) + 0.25).sqrt()).abs() < 1e-12);
    }

    #[test]
    fn seed_trace_is_deterministic() {
        let cfg = small_cfg("");
        let spec = Arc::new(cfg.build_system().unwrap());
        let (a, _, _) = run_seed(&spec, &cfg.observer_config(), 20, 5, None, None).unwrap();
        let (b, _, _) = run_seed(&spec, &cfg.observer_config(), 20, 5, None, None).unwrap();
        assert_eq!(a.csv, b.csv);
        assert_eq!(a.violations, 0);
        assert!(a.fault.is_none());
        let lines: Vec<&str> = a.csv.lines().collect();
        assert!(lines[0].starts_with("# noise=uniform"));
        assert_eq!(lines.len(), 2 + 21);
        let ncols = lines[1].split(',').count();
        assert!(lines[2..].iter().all(|l| l.split(',').count() == ncols));
    }

    #[test]
    fn abstract_slice_nests() {
        let cfg = small_cfg("[abstract]\ntarget = \"h\"\nlearn_steps = 20\npoints = 21\n");
        let s = run_abstract(&cfg).unwrap();
        for t in 0..s.s.len() {
            let (ll, lh) = s.local_band[t][0];
            let (gl, gh) = s.global_band[t][0];
            assert!(ll >= gl - 1e-8 && lh <= gh + 1e-8);
            let o = s.oracle.as_ref().unwrap()[t][0];
            assert!(ll - 1e-9 <= o && o <= lh + 1e-9);
        }
        assert_eq!(s.to_csv().lines().count(), 2 + 21);
    }
}
