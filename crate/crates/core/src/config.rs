//! Experiment configuration (TOML) with `SMIO_<SECTION>_<KEY>` environment
//! overrides.
//!
//! ```toml
//! [system]
//! builtin = "deangelis_modified"
//!
//! [run]
//! horizon = 500
//! seed_count = 100        # or: seeds = [0, 7, 9]
//!
//! [observer]
//! grid_res_global = 2
//! grid_res_local = 1
//! tol_mu = 1e-6
//! max_mu_iters = 10
//! # model_window = 200
//! force_global = false
//!
//! [stability]
//! mode = "oracle"          # or "learned"
//! columns = "state-noise"  # or "state"
//!
//! [output]
//! dir = "out"
//! ```
//!
//! An inline system replaces `builtin` with `n`, `p`, `m`, `l`, expression
//! lists `f`, `g`, optional `h` and `u` (a function of `k`), Jacobian bounds
//! `f_jacobian_lo`/`f_jacobian_hi`, Lipschitz data `lipschitz_f`,
//! `lipschitz_g` (one scalar or one weight row per output), `lipschitz_h`,
//! and boxes `w`, `v`, `x_space`, `d_space`, `u_space`, `x0`, `d0` given as
//! `{ lo = [..], hi = [..] }`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::abstraction::LipschitzWeights;
use crate::decomposition::JacobianBounds;
use crate::error::{Result, SmioError};
use crate::interval::IntervalVector;
use crate::observer::ObserverConfig;
use crate::stability::{toml_error, SlopeColumns};
use crate::system::{builtin, expr_field, nu_names, zeta_names, SystemSpec};

pub const ENV_PREFIX: &str = "SMIO_";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoxConfig {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl BoxConfig {
    fn build(&self, what: &str) -> Result<IntervalVector> {
        IntervalVector::from_slices(&self.lo, &self.hi)
            .map_err(|e| SmioError::Config(format!("{what}: {e}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum LipschitzConfig {
    Scalars(Vec<f64>),
    Rows(Vec<Vec<f64>>),
}

impl LipschitzConfig {
    fn build(&self, dim_in: usize, what: &str) -> Result<LipschitzWeights> {
        let w = match self {
            LipschitzConfig::Scalars(v) => LipschitzWeights::uniform(v, dim_in),
            LipschitzConfig::Rows(rows) => {
                if rows.iter().any(|r| r.len() != dim_in) {
                    return Err(SmioError::Config(format!(
                        "{what}: each weight row needs {dim_in} entries"
                    )));
                }
                LipschitzWeights::per_coordinate(
                    rows.iter().map(|r| DVector::from_column_slice(r)).collect(),
                )
            }
        };
        w.map_err(|e| SmioError::Config(format!("{what}: {e}")))
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemConfig {
    pub builtin: Option<String>,
    pub name: Option<String>,
    pub n: Option<usize>,
    pub p: Option<usize>,
    pub m: Option<usize>,
    pub l: Option<usize>,
    pub f: Option<Vec<String>>,
    pub g: Option<Vec<String>>,
    pub h: Option<Vec<String>>,
    pub u: Option<Vec<String>>,
    pub f_jacobian_lo: Option<Vec<Vec<f64>>>,
    pub f_jacobian_hi: Option<Vec<Vec<f64>>>,
    pub lipschitz_f: Option<LipschitzConfig>,
    pub lipschitz_g: Option<LipschitzConfig>,
    pub lipschitz_h: Option<Vec<f64>>,
    pub w: Option<BoxConfig>,
    pub v: Option<BoxConfig>,
    pub x_space: Option<BoxConfig>,
    pub d_space: Option<BoxConfig>,
    pub u_space: Option<BoxConfig>,
    pub x0: Option<BoxConfig>,
    pub d0: Option<BoxConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub horizon: usize,
    #[serde(default)]
    pub seeds: Option<Vec<u64>>,
    #[serde(default)]
    pub seed_count: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ObserverSection {
    pub grid_res_global: usize,
    pub grid_res_local: usize,
    pub tol_mu: f64,
    pub max_mu_iters: usize,
    pub model_window: Option<usize>,
    pub force_global: bool,
}

impl Default for ObserverSection {
    fn default() -> Self {
        let d = ObserverConfig::default();
        Self {
            grid_res_global: d.grid_res_global,
            grid_res_local: d.grid_res_local,
            tol_mu: d.tol_mu,
            max_mu_iters: d.max_mu_iters,
            model_window: d.model_window,
            force_global: d.force_global,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StabilityMode {
    Oracle,
    Learned,
}

impl StabilityMode {
    pub fn as_str(self) -> &'static str {
        match self {
            StabilityMode::Oracle => "oracle",
            StabilityMode::Learned => "learned",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StabilitySection {
    pub mode: StabilityMode,
    pub columns: SlopeColumns,
}

impl Default for StabilitySection {
    fn default() -> Self {
        Self {
            mode: StabilityMode::Oracle,
            columns: SlopeColumns::State,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AbstractSection {
    /// `f`, `g` or `h`.
    pub target: String,
    /// Input coordinate varied along the slice.
    pub axis: usize,
    pub points: usize,
    /// Observer steps run before abstracting (learns `h`, sets the box).
    pub learn_steps: usize,
    pub zero_slope: bool,
    pub lo: Option<Vec<f64>>,
    pub hi: Option<Vec<f64>>,
}

impl Default for AbstractSection {
    fn default() -> Self {
        Self {
            target: "h".into(),
            axis: 0,
            points: 101,
            learn_steps: 200,
            zero_slope: false,
            lo: None,
            hi: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSection {
    pub dir: String,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self { dir: "out".into() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub system: SystemConfig,
    pub run: RunConfig,
    #[serde(default)]
    pub observer: ObserverSection,
    #[serde(default)]
    pub stability: StabilitySection,
    #[serde(default, rename = "abstract")]
    pub abstraction: AbstractSection,
    #[serde(default)]
    pub output: OutputSection,
}

impl ExperimentConfig {
    /// Parse without environment overrides.
    pub fn parse(text: &str) -> Result<Self> {
        Self::parse_with_env(text, std::iter::empty::<(String, String)>())
    }

    /// Parse `text`, then apply `SMIO_<SECTION>_<KEY>=<value>` overrides.
    /// Values are read as TOML literals, falling back to plain strings.
    pub fn parse_with_env<I>(text: &str, env: I) -> Result<Self>
    where
        I: IntoIterator<Item = (String, String)>,
    {
        let mut table: toml::Table = toml::from_str(text).map_err(|e| toml_error(text, &e))?;
        let mut overrides: Vec<(String, String)> = env
            .into_iter()
            .filter(|(k, _)| k.starts_with(ENV_PREFIX))
            .collect();
        overrides.sort();
        for (key, raw) in overrides {
            let rest = key[ENV_PREFIX.len()..].to_ascii_lowercase();
            let Some((section, field)) = rest.split_once('_') else {
                continue;
            };
            let section = if section == "abstract" { "abstract" } else { section };
            if !["system", "run", "observer", "stability", "abstract", "output"].contains(&section) {
                continue;
            }
            let value = parse_env_value(&raw);
            let entry = table
                .entry(section.to_string())
                .or_insert_with(|| toml::Value::Table(toml::Table::new()));
            match entry {
                toml::Value::Table(t) => {
                    t.insert(field.to_string(), value);
                }
                _ => {
                    return Err(SmioError::Config(format!("'{section}' is not a section")));
                }
            }
        }
        let cfg: Self = toml::Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| SmioError::Config(e.message().to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.run.horizon < 1 {
            return Err(SmioError::Config("horizon must be at least 1".into()));
        }
        if self.run.seeds.is_some() && self.run.seed_count.is_some() {
            return Err(SmioError::Config("give either seeds or seed_count, not both".into()));
        }
        if matches!(&self.run.seeds, Some(s) if s.is_empty()) || self.run.seed_count == Some(0) {
            return Err(SmioError::Config("at least one seed is required".into()));
        }
        if !["f", "g", "h"].contains(&self.abstraction.target.as_str()) {
            return Err(SmioError::Config("abstract.target must be f, g or h".into()));
        }
        if self.abstraction.points < 2 {
            return Err(SmioError::Config("abstract.points must be at least 2".into()));
        }
        self.observer_config().validate()
    }

    pub fn seeds(&self) -> Vec<u64> {
        match (&self.run.seeds, self.run.seed_count) {
            (Some(s), _) => s.clone(),
            (None, Some(c)) => (0..c).collect(),
            (None, None) => vec![0],
        }
    }

    pub fn observer_config(&self) -> ObserverConfig {
        let o = &self.observer;
        ObserverConfig {
            grid_res_global: o.grid_res_global,
            grid_res_local: o.grid_res_local,
            tol_mu: o.tol_mu,
            max_mu_iters: o.max_mu_iters,
            model_window: o.model_window,
            force_global: o.force_global,
        }
    }

    pub fn build_system(&self) -> Result<SystemSpec> {
        build_system(&self.system)
    }
}

fn parse_env_value(raw: &str) -> toml::Value {
    let doc = format!("v = {raw}");
    match toml::from_str::<toml::Table>(&doc) {
        Ok(mut t) => t.remove("v").unwrap_or_else(|| toml::Value::String(raw.into())),
        Err(_) => toml::Value::String(raw.to_string()),
    }
}

fn need<'a, T>(v: &'a Option<T>, what: &str) -> Result<&'a T> {
    v.as_ref()
        .ok_or_else(|| SmioError::Config(format!("system.{what} is required for an inline system")))
}

fn matrix(rows: &[Vec<f64>], r: usize, c: usize, what: &str) -> Result<DMatrix<f64>> {
    if rows.len() != r || rows.iter().any(|row| row.len() != c) {
        return Err(SmioError::Config(format!("{what} must be {r}×{c}")));
    }
    Ok(DMatrix::from_fn(r, c, |i, j| rows[i][j]))
}

pub fn build_system(s: &SystemConfig) -> Result<SystemSpec> {
    if let Some(name) = &s.builtin {
        let inline = s.n.is_some() || s.f.is_some() || s.g.is_some();
        if inline {
            return Err(SmioError::Config(
                "system: give either builtin or an inline definition".into(),
            ));
        }
        return builtin(name);
    }
    let (n, p, m, l) = (*need(&s.n, "n")?, *need(&s.p, "p")?, *need(&s.m, "m")?, *need(&s.l, "l")?);
    let zn = zeta_names(n, p, m);
    let nn = nu_names(n, p, m, l);
    let f_src = need(&s.f, "f")?;
    let g_src = need(&s.g, "g")?;
    if f_src.len() != n || g_src.len() != l {
        return Err(SmioError::Config("system: f needs n and g needs l expressions".into()));
    }
    let f = expr_field(f_src, &zn)?;
    let g = expr_field(g_src, &nn)?;
    let h_oracle = match &s.h {
        Some(src) if src.len() != p => {
            return Err(SmioError::Config("system: h needs p expressions".into()))
        }
        Some(src) => Some(expr_field(src, &zn)?),
        None => None,
    };
    let u_src = s.u.clone().unwrap_or_else(|| vec!["0".to_string(); m]);
    if u_src.len() != m {
        return Err(SmioError::Config("system: u needs m expressions".into()));
    }
    let u_signal = expr_field(&u_src, &["k".to_string()])?;
    let nzeta = zn.len();
    let jb = JacobianBounds::new(
        matrix(need(&s.f_jacobian_lo, "f_jacobian_lo")?, n, nzeta, "f_jacobian_lo")?,
        matrix(need(&s.f_jacobian_hi, "f_jacobian_hi")?, n, nzeta, "f_jacobian_hi")?,
    )
    .map_err(|e| SmioError::Config(format!("f Jacobian bounds: {e}")))?;
    let lipschitz_f = need(&s.lipschitz_f, "lipschitz_f")?.build(nzeta, "lipschitz_f")?;
    let lipschitz_g = need(&s.lipschitz_g, "lipschitz_g")?.build(nn.len(), "lipschitz_g")?;
    let lipschitz_h = DVector::from_column_slice(need(&s.lipschitz_h, "lipschitz_h")?);
    let u_space = match &s.u_space {
        Some(b) => b.build("u_space")?,
        None => IntervalVector::from_slices(&vec![0.0; m], &vec![0.0; m])?,
    };
    let d_space = need(&s.d_space, "d_space")?.build("d_space")?;
    let spec = SystemSpec {
        name: s.name.clone().unwrap_or_else(|| "inline".into()),
        n,
        p,
        m,
        l,
        f,
        g,
        h_oracle,
        u_signal,
        f_jacobian_bounds: jb,
        lipschitz_f,
        lipschitz_g,
        lipschitz_h,
        w_box: need(&s.w, "w")?.build("w")?,
        v_box: need(&s.v, "v")?.build("v")?,
        x_space: need(&s.x_space, "x_space")?.build("x_space")?,
        d0_box: match &s.d0 {
            Some(b) => b.build("d0")?,
            None => d_space.clone(),
        },
        d_space,
        u_space,
        x0_box: need(&s.x0, "x0")?.build("x0")?,
    };
    spec.validate()
        .map_err(|e| SmioError::Config(format!("system: {e}")))?;
    Ok(spec)
}
