//! Data-driven bounds on the unknown input map.
//!
//! Each datum pairs an input framer `[ζ_lo, ζ_hi]` with the framer of the
//! next unknown input. The upper bound is the lower envelope of Lipschitz
//! cones `d_hi_s + L_j ||ζ - ζ̃_s|| + ε_s` (capped by the domain box) and the
//! lower bound mirrors it with `ε_s` subtracted.

use std::collections::VecDeque;
use std::fmt::Write as _;
use std::sync::Arc;

use nalgebra::DVector;

use crate::error::{check_dim, Result, SmioError};
use crate::field::{FieldRef, VectorField};
use crate::interval::IntervalVector;

#[derive(Debug, Clone, PartialEq)]
pub struct DataPoint {
    pub input_mid: DVector<f64>,
    pub input_width: f64,
    pub output: IntervalVector,
    pub eps: DVector<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LearnedInputModel {
    lipschitz: DVector<f64>,
    input_dim: usize,
    domain_output_box: IntervalVector,
    data: VecDeque<DataPoint>,
    window: Option<usize>,
    window_warned: bool,
}

impl LearnedInputModel {
    pub fn new(
        lipschitz: DVector<f64>,
        input_dim: usize,
        domain_output_box: IntervalVector,
    ) -> Result<Self> {
        check_dim(lipschitz.len(), domain_output_box.dim(), "model output dimension")?;
        if lipschitz.iter().any(|l| !l.is_finite() || *l < 0.0) {
            return Err(SmioError::InvalidInput(
                "Lipschitz constants must be finite and non-negative".into(),
            ));
        }
        Ok(Self {
            lipschitz,
            input_dim,
            domain_output_box,
            data: VecDeque::new(),
            window: None,
            window_warned: false,
        })
    }

    /// Keep only the most recent `window` data. Dropping data can loosen the
    /// bounds, so the monotone tightening across the cap no longer holds.
    pub fn with_window(mut self, window: Option<usize>) -> Result<Self> {
        if window == Some(0) {
            return Err(SmioError::InvalidInput("model window must be positive".into()));
        }
        self.window = window;
        Ok(self)
    }

    pub fn output_dim(&self) -> usize {
        self.lipschitz.len()
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn lipschitz(&self) -> &DVector<f64> {
        &self.lipschitz
    }

    pub fn domain_output_box(&self) -> &IntervalVector {
        &self.domain_output_box
    }

    pub fn data(&self) -> impl ExactSizeIterator<Item = &DataPoint> {
        self.data.iter()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn add_datum(&mut self, input: &IntervalVector, output: &IntervalVector) -> Result<()> {
        check_dim(self.input_dim, input.dim(), "model input framer")?;
        check_dim(self.output_dim(), output.dim(), "model output framer")?;
        let input_width = input.width();
        let eps = &self.lipschitz * (2.0 * input_width);
        self.push(DataPoint {
            input_mid: input.midpoint(),
            input_width,
            output: output.clone(),
            eps,
        });
        Ok(())
    }

    fn push(&mut self, dp: DataPoint) {
        self.data.push_back(dp);
        if let Some(w) = self.window {
            while self.data.len() > w {
                self.data.pop_front();
                if !self.window_warned {
                    log::warn!(
                        "model window of {w} reached; older data are dropped and bounds may loosen"
                    );
                    self.window_warned = true;
                }
            }
        }
    }

    pub fn eval_upper(&self, zeta: &[f64], j: usize) -> f64 {
        let l = self.lipschitz[j];
        let mut best = self.domain_output_box.hi()[j];
        for dp in &self.data {
            let v = dp.output.hi()[j] + l * dist(zeta, &dp.input_mid) + dp.eps[j];
            best = best.min(v);
        }
        best
    }

    pub fn eval_lower(&self, zeta: &[f64], j: usize) -> f64 {
        let l = self.lipschitz[j];
        let mut best = self.domain_output_box.lo()[j];
        for dp in &self.data {
            let v = dp.output.lo()[j] - l * dist(zeta, &dp.input_mid) - dp.eps[j];
            best = best.max(v);
        }
        best
    }

    /// Snapshot of the current bounds as a `(lower, upper)` field pair.
    pub fn as_pair(&self) -> (FieldRef, FieldRef) {
        let snap = Arc::new(self.clone());
        (
            Arc::new(ModelBound {
                model: snap.clone(),
                upper: false,
            }),
            Arc::new(ModelBound {
                model: snap,
                upper: true,
            }),
        )
    }

    /// Plain-text table with one datum per line.
    ///
    /// ```text
    /// smio-model 1 <input_dim> <output_dim>
    /// lipschitz <L_1> .. <L_p>
    /// domain <lo_1> .. <lo_p> | <hi_1> .. <hi_p>
    /// <mid ..> | <width> | <out_lo ..> | <out_hi ..> | <eps ..>
    /// ```
    pub fn to_table(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "smio-model 1 {} {}", self.input_dim, self.output_dim());
        let _ = writeln!(s, "lipschitz {}", join(self.lipschitz.iter()));
        let _ = writeln!(
            s,
            "domain {} | {}",
            join(self.domain_output_box.lo().iter()),
            join(self.domain_output_box.hi().iter())
        );
        for dp in &self.data {
            let _ = writeln!(
                s,
                "{} | {:e} | {} | {} | {}",
                join(dp.input_mid.iter()),
                dp.input_width,
                join(dp.output.lo().iter()),
                join(dp.output.hi().iter()),
                join(dp.eps.iter())
            );
        }
        s
    }

    pub fn from_table(text: &str) -> Result<Self> {
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l))
            .filter(|(_, l)| !l.trim().is_empty() && !l.trim_start().starts_with('#'));

        let (ln, header) = lines.next().ok_or(SmioError::Parse {
            line: 1,
            column: 1,
            message: "empty model table".into(),
        })?;
        let toks: Vec<&str> = header.split_whitespace().collect();
        if toks.len() != 4 || toks[0] != "smio-model" || toks[1] != "1" {
            return Err(perr(ln, 1, "expected header 'smio-model 1 <input_dim> <output_dim>'"));
        }
        let input_dim = parse_usize(toks[2], ln, header)?;
        let p = parse_usize(toks[3], ln, header)?;

        let (ln, lip_line) = lines
            .next()
            .ok_or_else(|| perr(ln + 1, 1, "missing lipschitz line"))?;
        let rest = lip_line
            .trim_start()
            .strip_prefix("lipschitz")
            .ok_or_else(|| perr(ln, 1, "expected 'lipschitz'"))?;
        let lip = parse_fields(rest, ln, lip_line, p)?;

        let (ln, dom_line) = lines
            .next()
            .ok_or_else(|| perr(ln + 1, 1, "missing domain line"))?;
        let rest = dom_line
            .trim_start()
            .strip_prefix("domain")
            .ok_or_else(|| perr(ln, 1, "expected 'domain'"))?;
        let parts: Vec<&str> = rest.split('|').collect();
        if parts.len() != 2 {
            return Err(perr(ln, 1, "domain line needs 'lo .. | hi ..'"));
        }
        let dlo = parse_fields(parts[0], ln, dom_line, p)?;
        let dhi = parse_fields(parts[1], ln, dom_line, p)?;
        let dom = IntervalVector::new(DVector::from_vec(dlo), DVector::from_vec(dhi))
            .map_err(|e| perr(ln, 1, &e.to_string()))?;
        let mut model = Self::new(DVector::from_vec(lip), input_dim, dom)
            .map_err(|e| perr(ln, 1, &e.to_string()))?;

        for (ln, line) in lines {
            let parts: Vec<&str> = line.split('|').collect();
            if parts.len() != 5 {
                return Err(perr(ln, 1, "data row needs 5 '|'-separated fields"));
            }
            let mid = parse_fields(parts[0], ln, line, input_dim)?;
            let width = parse_fields(parts[1], ln, line, 1)?[0];
            let olo = parse_fields(parts[2], ln, line, p)?;
            let ohi = parse_fields(parts[3], ln, line, p)?;
            let eps = parse_fields(parts[4], ln, line, p)?;
            if width < 0.0 || eps.iter().any(|e| *e < 0.0) {
                return Err(perr(ln, 1, "widths and slacks must be non-negative"));
            }
            let output = IntervalVector::new(DVector::from_vec(olo), DVector::from_vec(ohi))
                .map_err(|e| perr(ln, 1, &e.to_string()))?;
            model.data.push_back(DataPoint {
                input_mid: DVector::from_vec(mid),
                input_width: width,
                output,
                eps: DVector::from_vec(eps),
            });
        }
        Ok(model)
    }
}

fn dist(a: &[f64], b: &DVector<f64>) -> f64 {
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

fn join<'a>(it: impl Iterator<Item = &'a f64>) -> String {
    it.map(|v| format!("{v:e}")).collect::<Vec<_>>().join(" ")
}

fn perr(line: usize, column: usize, msg: &str) -> SmioError {
    SmioError::Parse {
        line,
        column,
        message: msg.to_string(),
    }
}

fn column_of(line: &str, tok: &str) -> usize {
    let base = line.as_ptr() as usize;
    let at = tok.as_ptr() as usize;
    if at >= base && at <= base + line.len() {
        at - base + 1
    } else {
        1
    }
}

fn parse_usize(tok: &str, ln: usize, line: &str) -> Result<usize> {
    tok.parse()
        .map_err(|_| perr(ln, column_of(line, tok), "expected a non-negative integer"))
}

fn parse_fields(seg: &str, ln: usize, line: &str, expected: usize) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(expected);
    for tok in seg.split_whitespace() {
        let v: f64 = tok
            .parse()
            .map_err(|_| perr(ln, column_of(line, tok), "expected a number"))?;
        if !v.is_finite() {
            return Err(perr(ln, column_of(line, tok), "non-finite number"));
        }
        out.push(v);
    }
    if out.len() != expected {
        return Err(perr(
            ln,
            column_of(line, seg),
            &format!("expected {expected} values, found {}", out.len()),
        ));
    }
    Ok(out)
}

struct ModelBound {
    model: Arc<LearnedInputModel>,
    upper: bool,
}

impl VectorField for ModelBound {
    fn dim_in(&self) -> usize {
        self.model.input_dim
    }

    fn dim_out(&self) -> usize {
        self.model.output_dim()
    }

    fn eval_into(&self, x: &[f64], out: &mut [f64]) {
        for (j, o) in out.iter_mut().enumerate() {
            *o = if self.upper {
                self.model.eval_upper(x, j)
            } else {
                self.model.eval_lower(x, j)
            };
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn dom1() -> IntervalVector {
        IntervalVector::from_slices(&[-10.0], &[10.0]).unwrap()
    }

    fn scalar_model(l: f64) -> LearnedInputModel {
        LearnedInputModel::new(DVector::from_element(1, l), 1, dom1()).unwrap()
    }

    #[test]
    fn empty_model_returns_domain() {
        let m = scalar_model(1.0);
        assert_eq!(m.eval_upper(&[0.3], 0), 10.0);
        assert_eq!(m.eval_lower(&[0.3], 0), -10.0);
    }

    #[test]
    fn eps_examples() {
        let mut m = scalar_model(1.0);
        let pt = IntervalVector::from_slices(&[0.4], &[0.4]).unwrap();
        let out = IntervalVector::from_slices(&[0.0], &[1.0]).unwrap();
        m.add_datum(&pt, &out).unwrap();
        assert_eq!(m.data().next().unwrap().eps[0], 0.0);

        let dom = IntervalVector::from_slices(&[-5.0, -5.0], &[5.0, 5.0]).unwrap();
        let mut m2 = LearnedInputModel::new(DVector::from_element(2, 1.0), 2, dom.clone()).unwrap();
        let bx = IntervalVector::from_slices(&[0.0, 0.0], &[0.2, 0.2]).unwrap();
        m2.add_datum(&bx, &dom).unwrap();
        let e = m2.data().next().unwrap().eps.clone();
        assert!((e[0] - 0.565_685).abs() < 1e-6 && (e[1] - e[0]).abs() < 1e-15);
    }

    fn single(l: f64, lo: f64, hi: f64, eps: f64) -> LearnedInputModel {
        let mut m = scalar_model(l);
        m.data.push_back(DataPoint {
            input_mid: DVector::from_element(1, 0.0),
            input_width: eps / (2.0 * l),
            output: IntervalVector::from_slices(&[lo], &[hi]).unwrap(),
            eps: DVector::from_element(1, eps),
        });
        m
    }

    #[test]
    fn single_cone_formulae() {
        let m = single(2.0, 1.0, 1.0, 0.1);
        assert!((m.eval_upper(&[0.5], 0) - 2.1).abs() < 1e-12);
        assert!((m.eval_lower(&[0.5], 0) + 0.1).abs() < 1e-12);
    }

    #[test]
    fn duplicate_data_is_idempotent() {
        let mut m = scalar_model(1.5);
        let bx = IntervalVector::from_slices(&[0.1], &[0.3]).unwrap();
        let out = IntervalVector::from_slices(&[-0.2], &[0.4]).unwrap();
        m.add_datum(&bx, &out).unwrap();
        let before: Vec<f64> = (0..20).map(|i| m.eval_upper(&[i as f64 * 0.1 - 1.0], 0)).collect();
        m.add_datum(&bx, &out).unwrap();
        let after: Vec<f64> = (0..20).map(|i| m.eval_upper(&[i as f64 * 0.1 - 1.0], 0)).collect();
        assert_eq!(before, after);
    }

    #[test]
    fn dominating_cone_is_selected() {
        let mut m = single(1.0, 0.0, 0.5, 0.0);
        m.data.push_back(DataPoint {
            input_mid: DVector::from_element(1, 0.0),
            input_width: 0.0,
            output: IntervalVector::from_slices(&[-1.0], &[3.0]).unwrap(),
            eps: DVector::from_element(1, 0.2),
        });
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..100 {
            let z: f64 = rng.random_range(-3.0..3.0);
            assert_eq!(m.eval_upper(&[z], 0), 0.5 + z.abs());
            assert_eq!(m.eval_lower(&[z], 0), 0.0 - z.abs());
        }
    }

    #[test]
    fn lower_below_upper_for_consistent_data() {
        let h = |z: f64| (1.7 * z).sin();
        let mut m = scalar_model(1.7);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..30 {
            let c: f64 = rng.random_range(-2.0..2.0);
            let r: f64 = rng.random_range(0.0..0.2);
            let bx = IntervalVector::from_slices(&[c - r], &[c + r]).unwrap();
            let hv = h(c + rng.random_range(-r..=r));
            let out = IntervalVector::from_slices(&[hv - 0.05], &[hv + 0.05]).unwrap();
            m.add_datum(&bx, &out).unwrap();
        }
        for _ in 0..1000 {
            let z: f64 = rng.random_range(-3.0..3.0);
            assert!(m.eval_lower(&[z], 0) <= m.eval_upper(&[z], 0));
        }
    }

    #[test]
    fn adding_data_tightens_monotonically() {
        let mut m = scalar_model(1.0);
        let probes: Vec<f64> = (0..100).map(|i| -2.0 + 0.04 * i as f64).collect();
        let mut up: Vec<f64> = probes.iter().map(|z| m.eval_upper(&[*z], 0)).collect();
        let mut lo: Vec<f64> = probes.iter().map(|z| m.eval_lower(&[*z], 0)).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..25 {
            let c: f64 = rng.random_range(-2.0..2.0);
            let bx = IntervalVector::from_slices(&[c - 0.05], &[c + 0.05]).unwrap();
            let out = IntervalVector::from_slices(&[c.cos() - 0.1], &[c.cos() + 0.1]).unwrap();
            m.add_datum(&bx, &out).unwrap();
            for (i, z) in probes.iter().enumerate() {
                let (u, l) = (m.eval_upper(&[*z], 0), m.eval_lower(&[*z], 0));
                assert!(u <= up[i] && l >= lo[i]);
                up[i] = u;
                lo[i] = l;
            }
        }
    }

    #[test]
    fn window_caps_history() {
        let mut m = scalar_model(1.0).with_window(Some(3)).unwrap();
        let out = IntervalVector::from_slices(&[0.0], &[1.0]).unwrap();
        for i in 0..5 {
            let bx = IntervalVector::from_slices(&[i as f64], &[i as f64]).unwrap();
            m.add_datum(&bx, &out).unwrap();
        }
        assert_eq!(m.len(), 3);
        assert_eq!(m.data().next().unwrap().input_mid[0], 2.0);
        assert!(scalar_model(1.0).with_window(Some(0)).is_err());
    }

    #[test]
    fn pair_snapshot_matches_eval() {
        let m = single(2.0, -0.5, 0.5, 0.1);
        let (lo, hi) = m.as_pair();
        let z = DVector::from_element(1, 0.25);
        assert_eq!(hi.eval(&z)[0], m.eval_upper(&[0.25], 0));
        assert_eq!(lo.eval(&z)[0], m.eval_lower(&[0.25], 0));
    }

    #[test]
    fn table_round_trip() {
        let dom = IntervalVector::from_slices(&[-1.0, -2.0], &[1.0, 2.0]).unwrap();
        let mut m = LearnedInputModel::new(DVector::from_column_slice(&[0.1, 0.27]), 3, dom).unwrap();
        let bx = IntervalVector::from_slices(&[0.1, -0.2, 0.0], &[0.3, 0.1, 0.0]).unwrap();
        let out = IntervalVector::from_slices(&[-0.1, 0.2], &[0.1, 0.6]).unwrap();
        m.add_datum(&bx, &out).unwrap();
        m.add_datum(&bx, &out).unwrap();
        let back = LearnedInputModel::from_table(&m.to_table()).unwrap();
        assert_eq!(back, m);
    }

    #[test]
    fn table_errors_report_position() {
        let bad = "smio-model 1 1 1\nlipschitz 1\ndomain 0 | 1\n0 | 0 | 0 | zz | 0\n";
        match LearnedInputModel::from_table(bad) {
            Err(SmioError::Parse { line, column, .. }) => {
                assert_eq!(line, 4);
                assert_eq!(column, 13);
            }
            other => panic!("{other:?}"),
        }
        assert!(LearnedInputModel::from_table("").is_err());
        assert!(LearnedInputModel::from_table("smio-model 2 1 1").is_err());
    }
}
