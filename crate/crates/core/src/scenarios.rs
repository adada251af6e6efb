//! Initial-data families, parameter schedules and inflation reports.

use std::collections::{BTreeMap, BTreeSet};
use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{InflateError, Result};
use crate::exppoly::ExpPoly;
use crate::lattice::{DomainSpec, FieldSnapshot, Frequency, SpectralField};
use crate::norms::{modulation_norm, NormSpec};
use crate::picard::{
    first_iterate, main_part, series_decompose, series_sum, IterateTable, NlTerm,
    NonlinearitySpec, TRUST_LIMIT,
};

/// Quadrature points per box edge for thin-box data.
pub const DEFAULT_RESOLUTION: u32 = 8;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "form", rename_all = "snake_case")]
pub enum DataForm {
    /// `r A^{−d/2} N^{−s}` on `∪_{η∈Σ} (η + Q_A)`.
    BoxFamily,
    /// `r N^{1/2−s}` on `N e_d + [−1/2, 1/2)^{d−1} × [−1/(2N), 1/(2N))`.
    ThinBox,
    /// `r N^{−s}` on `Σ + Q_1`.
    UnitBoxes,
    /// Two intervals at `N` and `2N`: amplitude `r A^{−1/p} N^{1/p}` when a
    /// Lebesgue exponent is given, `r N^{−s}` with unit intervals otherwise.
    IntervalPair { lebesgue_p: Option<f64> },
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Overrides {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rho: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub a: Option<f64>,
}

impl Overrides {
    pub fn is_empty(&self) -> bool {
        self.r.is_none() && self.t.is_none() && self.rho.is_none() && self.a.is_none()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub case_id: String,
    pub domain: DomainSpec,
    pub nonlinearity: NonlinearitySpec,
    pub s: f64,
    pub n: u64,
    pub r: f64,
    /// Box side `A` (the thin box's short side for `ThinBox`).
    pub a: f64,
    pub t: f64,
    /// Box centres in physical coordinates.
    pub sigma: Vec<Vec<f64>>,
    pub data_form: DataForm,
    #[serde(default)]
    pub gauge_j: i64,
    pub target: NormSpec,
    pub rho: f64,
    #[serde(default)]
    pub overridden: bool,
    #[serde(default)]
    pub claims_dominance: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub resolution: Option<u32>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

impl Scenario {
    pub fn p_max(&self) -> usize {
        self.nonlinearity.p_max()
    }

    /// Per-point amplitude divided by `r`.
    pub fn amplitude_factor(&self) -> f64 {
        let n = self.n as f64;
        let d = self.domain.d as f64;
        match self.data_form {
            DataForm::BoxFamily => self.a.powf(-d / 2.0) * n.powf(-self.s),
            DataForm::ThinBox => n.powf(0.5 - self.s),
            DataForm::UnitBoxes => n.powf(-self.s),
            DataForm::IntervalPair { lebesgue_p: Some(p) } => self.a.powf(-1.0 / p) * n.powf(1.0 / p),
            DataForm::IntervalPair { lebesgue_p: None } => n.powf(-self.s),
        }
    }

    /// Measure of one data box.
    pub fn box_volume(&self) -> f64 {
        let d = self.domain.d as i32;
        match self.data_form {
            DataForm::BoxFamily => self.a.powi(d),
            DataForm::ThinBox => 1.0 / self.n as f64,
            DataForm::UnitBoxes => 1.0,
            DataForm::IntervalPair { lebesgue_p: Some(_) } => self.a,
            DataForm::IntervalPair { lebesgue_p: None } => 1.0,
        }
    }

    /// `ρ = (L¹ mass of one box) · T^{1/(p−1)}`; equals `r A^{d/2} N^{−s} T^{1/(p−1)}`
    /// for box data.
    pub fn compute_rho(&self) -> f64 {
        self.r * self.amplitude_factor() * self.box_volume() * self.t.powf(1.0 / (self.p_max() - 1) as f64)
    }

    pub fn refresh_rho(&mut self) {
        self.rho = self.compute_rho();
    }

    fn apply_overrides(&mut self, ov: &Overrides) -> Result<()> {
        if ov.is_empty() {
            return Ok(());
        }
        if ov.t.is_some() && ov.rho.is_some() {
            return Err(InflateError::Config("override either T or rho, not both".into()));
        }
        if let Some(r) = ov.r {
            self.r = r;
        }
        if let Some(a) = ov.a {
            self.a = a;
        }
        if let Some(t) = ov.t {
            self.t = t;
        }
        if let Some(rho) = ov.rho {
            let mass = self.r * self.amplitude_factor() * self.box_volume();
            self.t = (rho / mass).powi(self.p_max() as i32 - 1);
        }
        self.overridden = true;
        self.refresh_rho();
        Ok(())
    }

    /// Norm in which the datum is measured: the target, except that a
    /// low-frequency target compares against `‖φ‖_{H^s}`.
    pub fn data_norm(&self) -> NormSpec {
        match self.target {
            NormSpec::LowFreqL2 { .. } => NormSpec::Hs { s: self.s },
            ref other => other.clone(),
        }
    }

    pub fn valid_rho(&self) -> bool {
        self.rho < TRUST_LIMIT
    }

    pub fn validate(&self) -> Result<()> {
        self.domain.validate()?;
        self.target.validate()?;
        let positive = [self.r, self.a, self.t];
        if positive.iter().any(|&x| !(x > 0.0 && x.is_finite())) {
            return Err(InflateError::Config(format!(
                "r, A, T must be positive (r = {}, A = {}, T = {})",
                self.r, self.a, self.t
            )));
        }
        if self.n < 2 || !self.n.is_power_of_two() {
            return Err(InflateError::Config(format!("N = {} is not a dyadic integer >= 2", self.n)));
        }
        if self.sigma.is_empty() || self.sigma.iter().any(|c| c.len() != self.domain.d) {
            return Err(InflateError::Config("Sigma needs points with d coordinates".into()));
        }
        if matches!(self.data_form, DataForm::BoxFamily) && self.sigma.len() > 3 {
            return Err(InflateError::Config("box family allows at most three boxes".into()));
        }
        let widths = self.box_widths();
        if widths.iter().any(|&w| w >= self.n as f64) {
            return Err(InflateError::Config(format!("box side A = {} must be below N", self.a)));
        }
        for (i, x) in self.sigma.iter().enumerate() {
            for y in &self.sigma[i + 1..] {
                let apart = (0..self.domain.d).any(|k| (x[k] - y[k]).abs() >= widths[k]);
                if !apart {
                    return Err(InflateError::Config(format!("boxes at {x:?} and {y:?} overlap")));
                }
            }
        }
        Ok(())
    }

    fn box_widths(&self) -> Vec<f64> {
        let d = self.domain.d;
        match self.data_form {
            DataForm::ThinBox => {
                let mut w = vec![1.0; d];
                w[d - 1] = 1.0 / self.n as f64;
                w
            }
            DataForm::UnitBoxes | DataForm::IntervalPair { lebesgue_p: None } => vec![1.0; d],
            _ => vec![self.a; d],
        }
    }

    /// Frequency boxes of the datum as `Σ`, used for support bounds.
    pub fn sigma_frequencies(&self) -> Result<BTreeSet<Frequency>> {
        self.sigma.iter().map(|c| self.domain.frequency_at(c)).collect()
    }
}

/// `2^{floor(log₂ x)}`
pub fn floor_dyadic(x: f64) -> f64 {
    2f64.powf(x.log2().floor())
}

/// Power of two nearest to `x` in log scale, ties toward the smaller one.
pub fn nearest_dyadic(x: f64) -> f64 {
    let l = x.log2();
    let lo = l.floor();
    2f64.powf(if l - lo > 0.5 { lo + 1.0 } else { lo })
}

/// Lattice points of the datum with their amplitudes (gauge factor included).
pub fn build_phi(sc: &Scenario) -> Result<SpectralField> {
    sc.validate()?;
    let dom = &sc.domain;
    let d = dom.d;
    let steps = dom.steps();
    let amp = sc.r * sc.amplitude_factor();
    let gauge = Complex64::from_polar(1.0, sc.gauge_j as f64 * PI / (sc.p_max() + 1) as f64);
    let value = gauge * amp;
    let widths = sc.box_widths();
    let mut field = SpectralField::new(dom.clone(), sc.a);
    for centre in &sc.sigma {
        // lattice indices with centre − w/2 <= x < centre + w/2 in each direction
        let mut ranges = Vec::with_capacity(d);
        for i in 0..d {
            let lo = ((centre[i] - widths[i] / 2.0) / steps[i] - 1e-9).ceil() as i64;
            let hi = ((centre[i] + widths[i] / 2.0) / steps[i] - 1e-9).ceil() as i64 - 1;
            if hi < lo {
                return Err(InflateError::LatticeMismatch(format!(
                    "box around {centre:?} contains no lattice point"
                )));
            }
            ranges.push((lo, hi));
        }
        let mut points: Vec<Vec<i64>> = vec![Vec::new()];
        for &(lo, hi) in &ranges {
            points = points
                .into_iter()
                .flat_map(|p| {
                    (lo..=hi).map(move |i| {
                        let mut q = p.clone();
                        q.push(i);
                        q
                    })
                })
                .collect();
        }
        for idx in points {
            field.insert(Frequency::new(&idx), ExpPoly::constant(value));
        }
    }
    Ok(field)
}

/// A parameter schedule for one inflation case.
pub trait CaseSchedule: Send + Sync {
    fn id(&self) -> &str;
    fn description(&self) -> &str;
    fn default_s(&self) -> f64;
    /// Regularity range `[lo, hi)` in which the case is stated.
    fn s_range(&self) -> (f64, f64);
    /// The literal schedule at frequency `N`.
    fn build(&self, n: u64, s: f64) -> Result<Scenario>;
}

type BuildFn = fn(u64, f64) -> Result<Scenario>;

struct TableSchedule {
    id: &'static str,
    description: &'static str,
    default_s: f64,
    s_range: (f64, f64),
    build: BuildFn,
}

impl CaseSchedule for TableSchedule {
    fn id(&self) -> &str {
        self.id
    }
    fn description(&self) -> &str {
        self.description
    }
    fn default_s(&self) -> f64 {
        self.default_s
    }
    fn s_range(&self) -> (f64, f64) {
        self.s_range
    }
    fn build(&self, n: u64, s: f64) -> Result<Scenario> {
        (self.build)(n, s)
    }
}

/// Schedules by case id.
pub struct ScheduleRegistry {
    cases: BTreeMap<String, Box<dyn CaseSchedule>>,
}

impl ScheduleRegistry {
    pub fn empty() -> Self {
        Self {
            cases: BTreeMap::new(),
        }
    }

    pub fn register(&mut self, case: Box<dyn CaseSchedule>) {
        self.cases.insert(case.id().to_string(), case);
    }

    pub fn get(&self, id: &str) -> Result<&dyn CaseSchedule> {
        self.cases
            .get(id)
            .map(|b| b.as_ref())
            .ok_or_else(|| InflateError::UnknownCase(id.to_string()))
    }

    pub fn ids(&self) -> Vec<&str> {
        self.cases.keys().map(String::as_str).collect()
    }

    /// Literal schedule, then overrides; `s` defaults to the case's own value.
    pub fn schedule(&self, id: &str, n: u64, s: Option<f64>, ov: &Overrides) -> Result<Scenario> {
        let case = self.get(id)?;
        if n < 4 || !n.is_power_of_two() {
            return Err(InflateError::Config(format!("N = {n} is not a dyadic integer >= 4")));
        }
        let s = s.unwrap_or_else(|| case.default_s());
        let mut sc = case.build(n, s)?;
        let (lo, hi) = case.s_range();
        if !(s >= lo && s < hi) {
            sc.warnings
                .push(format!("s = {s} lies outside the case's range [{lo}, {hi})"));
        }
        sc.apply_overrides(ov)?;
        if !sc.overridden {
            sc.refresh_rho();
        }
        sc.validate()?;
        Ok(sc)
    }

    pub fn builtin() -> Self {
        let mut reg = Self::empty();
        let table: [(&'static str, &'static str, f64, (f64, f64), BuildFn); 13] = [
            ("case1", "general (p,q) below the critical index, A ~ (log N)^{-(p+1)/|s|} N", -0.75, (f64::NEG_INFINITY, -0.5), case1),
            ("case2", "quadratic u^2 on T, -3/2 <= s < -1", -1.25, (-1.5, -1.0), case2),
            ("case3", "cubic on T at s = -1/2", -0.5, (-0.5, -0.5 + 1e-12), case3),
            ("case4", "quadratic u^2 on T^2 at s = -1", -1.0, (-1.0, -1.0 + 1e-12), case4),
            ("case5", "u ubar on T, d/2 - 2 <= s < 0", -0.5, (-1.5, 0.0), case5),
            ("case6", "quartic u ubar^3 on T, -1/6 <= s < 0", -1.0 / 6.0, (-1.0 / 6.0, 0.0), case6),
            ("case7", "u ubar on R with a thin box, d/2 - 2 <= s < -1/4", -0.5, (-1.5, -0.25), case7),
            ("case3_multi", "cubic plus quadratic terms on T at s = -1/2", -0.5, (-0.5, -0.5 + 1e-12), case3_multi),
            ("case6_multi", "quartic plus cubic terms on T, -1/6 <= s < 0", -1.0 / 6.0, (-1.0 / 6.0, 0.0), case6_multi),
            ("appA_cubic", "|u|^2 u on T, low-frequency output from {N, 2N}", -0.8, (f64::NEG_INFINITY, -2.0 / 3.0), app_a_cubic),
            ("appA_quintic", "|u|^4 u on T, low-frequency output from {N, 3N, 4N}", -0.25, (f64::NEG_INFINITY, 0.0), app_a_quintic),
            ("appB_log", "cubic on T in D^[alpha]_{2,2}, alpha = 0.1", -0.5, (f64::NEG_INFINITY, f64::INFINITY), app_b_log),
            ("appB_sub", "cubic on T in D^s_{p,q}, p = 1.2, q = 2", -0.8, (-1.0 / 1.2, -2.0 / 3.0), app_b_sub),
        ];
        for (id, description, default_s, s_range, build) in table {
            reg.register(Box::new(TableSchedule {
                id,
                description,
                default_s,
                s_range,
                build,
            }));
        }
        reg
    }
}

/// Schedules a case from the built-in registry.
pub fn schedule_case(id: &str, n: u64, s: Option<f64>, ov: &Overrides) -> Result<Scenario> {
    ScheduleRegistry::builtin().schedule(id, n, s, ov)
}

fn one() -> Complex64 {
    Complex64::new(1.0, 0.0)
}

fn nl(terms: &[(usize, usize)]) -> NonlinearitySpec {
    NonlinearitySpec::new(terms.iter().map(|&(p, q)| NlTerm { p, q, nu: one() }).collect())
        .expect("built-in nonlinearity")
}

/// `Σ = {c·N e_d}` in `d` dimensions.
fn axis_points(d: usize, n: f64, multiples: &[f64]) -> Vec<Vec<f64>> {
    multiples
        .iter()
        .map(|m| {
            let mut v = vec![0.0; d];
            v[d - 1] = m * n;
            v
        })
        .collect()
}

fn clamp_box(a: f64, n: u64, warnings: &mut Vec<String>) -> f64 {
    let cap = n as f64 / 4.0;
    if a > cap {
        warnings.push(format!("A = {a} clamped to N/4 = {cap}"));
        cap
    } else if a < 1.0 {
        warnings.push(format!("A = {a} raised to the lattice step 1"));
        1.0
    } else {
        a
    }
}

struct Base {
    id: &'static str,
    domain: DomainSpec,
    nonlinearity: NonlinearitySpec,
    multiples: &'static [f64],
    form: DataForm,
    target: Option<NormSpec>,
    claims_dominance: bool,
}

fn assemble(b: Base, n: u64, s: f64, r: f64, a: f64, t: f64, warnings: Vec<String>) -> Result<Scenario> {
    let d = b.domain.d;
    let mut sc = Scenario {
        case_id: b.id.to_string(),
        sigma: axis_points(d, n as f64, b.multiples),
        domain: b.domain,
        nonlinearity: b.nonlinearity,
        s,
        n,
        r,
        a,
        t,
        data_form: b.form,
        gauge_j: 0,
        target: b.target.unwrap_or(NormSpec::Hs { s }),
        rho: 0.0,
        overridden: false,
        claims_dominance: b.claims_dominance,
        resolution: None,
        warnings,
    };
    if matches!(sc.data_form, DataForm::ThinBox) {
        sc.resolution = Some(DEFAULT_RESOLUTION);
    }
    sc.refresh_rho();
    Ok(sc)
}

fn log_n(n: u64) -> f64 {
    (n as f64).ln()
}

fn torus_box(id: &'static str, d: usize, terms: &[(usize, usize)], multiples: &'static [f64]) -> Base {
    Base {
        id,
        domain: DomainSpec::torus(d),
        nonlinearity: nl(terms),
        multiples,
        form: DataForm::BoxFamily,
        target: None,
        claims_dominance: true,
    }
}

const PM2: &[f64] = &[1.0, -1.0, 2.0];
const M23: &[f64] = &[-1.0, 2.0, 3.0];

fn case1(n: u64, s: f64) -> Result<Scenario> {
    let b = torus_box("case1", 1, &[(3, 2)], PM2);
    let p = b.nonlinearity.p_max() as f64;
    let l = log_n(n);
    let mut w = Vec::new();
    let a = clamp_box(floor_dyadic(l.powf(-(p + 1.0) / s.abs()) * n as f64), n, &mut w);
    let t = (a.powf(-0.5) * (n as f64).powf(s)).powf(p - 1.0);
    assemble(b, n, s, 1.0 / l, a, t, w)
}

fn case2(n: u64, s: f64) -> Result<Scenario> {
    let l = log_n(n);
    let t = 1.0 / (l * (n as f64).powi(2));
    assemble(torus_box("case2", 1, &[(2, 2)], PM2), n, s, 1.0 / l, 1.0, t, Vec::new())
}

fn case3_params(n: u64) -> (f64, f64, f64, Vec<String>) {
    let l = log_n(n);
    let mut w = Vec::new();
    let a = clamp_box(nearest_dyadic(l.powf(-0.25) * n as f64), n, &mut w);
    (l.powf(-1.0 / 12.0), a, l.powf(-1.0 / 12.0) / (n as f64).powi(2), w)
}

fn case3(n: u64, s: f64) -> Result<Scenario> {
    let (r, a, t, w) = case3_params(n);
    assemble(torus_box("case3", 1, &[(3, 2)], PM2), n, s, r, a, t, w)
}

fn case3_multi(n: u64, s: f64) -> Result<Scenario> {
    let (r, a, t, w) = case3_params(n);
    assemble(torus_box("case3_multi", 1, &[(3, 2), (3, 0), (2, 2)], PM2), n, s, r, a, t, w)
}

fn case4(n: u64, s: f64) -> Result<Scenario> {
    let l = log_n(n);
    let mut w = Vec::new();
    let a = clamp_box(nearest_dyadic(l.powf(-0.25) * n as f64), n, &mut w);
    let t = l.powf(-1.0 / 6.0) / (n as f64).powi(2);
    assemble(torus_box("case4", 2, &[(2, 2)], PM2), n, s, l.powf(-1.0 / 12.0), a, t, w)
}

fn case5(n: u64, s: f64) -> Result<Scenario> {
    let l = log_n(n);
    let b = Base {
        multiples: &[1.0],
        ..torus_box("case5", 1, &[(2, 1)], PM2)
    };
    assemble(b, n, s, 1.0 / l, 1.0, (n as f64).powf(s), Vec::new())
}

fn case6(n: u64, s: f64) -> Result<Scenario> {
    let l = log_n(n);
    let t = (n as f64).powf(3.0 * s);
    assemble(torus_box("case6", 1, &[(4, 1)], M23), n, s, 1.0 / l, 1.0, t, Vec::new())
}

fn case6_multi(n: u64, s: f64) -> Result<Scenario> {
    let l = log_n(n);
    let t = (n as f64).powf(3.0 * s);
    let b = torus_box("case6_multi", 1, &[(4, 1), (4, 3), (3, 2)], M23);
    assemble(b, n, s, 1.0 / l, 1.0, t, Vec::new())
}

fn case7(n: u64, s: f64) -> Result<Scenario> {
    let l = log_n(n);
    let nf = n as f64;
    let cell = 1.0 / (DEFAULT_RESOLUTION as f64 * nf);
    let b = Base {
        id: "case7",
        domain: DomainSpec::euclidean(vec![cell]),
        nonlinearity: nl(&[(2, 1)]),
        multiples: &[1.0],
        form: DataForm::ThinBox,
        target: None,
        claims_dominance: true,
    };
    let t = l.powi(3) * nf.powf(2.0 * s + 0.5);
    assemble(b, n, s, 1.0 / l, 1.0 / nf, t, Vec::new())
}

fn app_a(id: &'static str, terms: &[(usize, usize)], multiples: &'static [f64]) -> Base {
    Base {
        id,
        domain: DomainSpec::torus(1),
        nonlinearity: nl(terms),
        multiples,
        form: DataForm::UnitBoxes,
        target: Some(NormSpec::LowFreqL2 { cutoff: 1.0 }),
        claims_dominance: false,
    }
}

fn app_a_cubic(n: u64, s: f64) -> Result<Scenario> {
    let l = log_n(n);
    let nf = n as f64;
    let b = app_a("appA_cubic", &[(3, 2)], &[1.0, 2.0]);
    assemble(b, n, s, nf.powf(s + 2.0 / 3.0) * l, 1.0, 1.0 / (nf * nf * l), Vec::new())
}

fn app_a_quintic(n: u64, s: f64) -> Result<Scenario> {
    let l = log_n(n);
    let b = app_a("appA_quintic", &[(5, 3)], &[1.0, 3.0, 4.0]);
    assemble(b, n, s, (n as f64).powf(s) * l, 1.0, l.powf(-4.5), Vec::new())
}

const APP_B_ALPHA: f64 = 0.1;

fn app_b_log(n: u64, _s: f64) -> Result<Scenario> {
    let l = log_n(n);
    let ll = l.ln();
    let mut w = Vec::new();
    let a = clamp_box(nearest_dyadic(n as f64 / ll), n, &mut w);
    let b = Base {
        id: "appB_log",
        domain: DomainSpec::torus(1),
        nonlinearity: nl(&[(3, 2)]),
        multiples: &[1.0, 2.0],
        form: DataForm::IntervalPair { lebesgue_p: Some(2.0) },
        target: Some(NormSpec::DBracket { alpha: APP_B_ALPHA, p: 2.0, q: 2.0 }),
        claims_dominance: false,
    };
    let r = l.powf(-APP_B_ALPHA) / ll;
    assemble(b, n, -0.5, r, a, 0.01 / (n as f64).powi(2), w)
}

fn app_b_sub(n: u64, s: f64) -> Result<Scenario> {
    let l = log_n(n);
    let nf = n as f64;
    let b = Base {
        id: "appB_sub",
        domain: DomainSpec::torus(1),
        nonlinearity: nl(&[(3, 2)]),
        multiples: &[1.0, 2.0],
        form: DataForm::IntervalPair { lebesgue_p: None },
        target: Some(NormSpec::Ds { s, p: 1.2, q: 2.0 }),
        claims_dominance: false,
    };
    assemble(b, n, s, nf.powf(s + 2.0 / 3.0) * l, 1.0, 0.01 / (nf * nf), Vec::new())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InflationReport {
    pub scenario: Scenario,
    pub k_max: usize,
    pub norm_label: String,
    /// `‖φ‖` in the scenario's data norm (see [`Scenario::data_norm`]).
    pub norm_phi: f64,
    pub norm_u1: f64,
    pub norm_umain: f64,
    pub norm_ulow: f64,
    pub norm_uhigh: f64,
    pub norm_u: f64,
    pub ratio: f64,
    pub rho_hat: f64,
    /// `‖φ‖_{M_A}`
    pub modulation_phi: f64,
    pub valid: bool,
    /// `‖U_main‖ > 2(‖U_1‖ + ‖U_low‖ + ‖U_high‖)`, when the case claims it.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dominance: Option<bool>,
    /// Relative change of the ratio under doubled quadrature resolution.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub discretization_error: Option<f64>,
}

struct Measured {
    norms: [f64; 6],
    rho_hat: f64,
    modulation_phi: f64,
}

fn measure(sc: &Scenario, k_max: usize) -> Result<Measured> {
    let phi = build_phi(sc)?;
    let mut table = IterateTable::new(phi, sc.nonlinearity.clone(), sc.t);
    table.populate(k_max)?;
    let sum = series_sum(&table, sc.t, k_max)?;
    let parts = series_decompose(&table, sc.t, k_max)?;
    let u = parts.recompose();
    let phi0 = table.at(1, 0.0);
    let norm = |f: &FieldSnapshot| sc.target.evaluate(f);
    Ok(Measured {
        norms: [
            sc.data_norm().evaluate(&phi0)?,
            norm(&parts.u1)?,
            norm(&parts.main)?,
            norm(&parts.low)?,
            norm(&parts.high)?,
            norm(&u)?,
        ],
        rho_hat: sum.tail_ratio,
        modulation_phi: modulation_norm(&phi0, sc.a),
    })
}

/// Runs the Picard engine to depth `k_max` and measures every part of the series at `T`.
pub fn run_inflation(sc: &Scenario, k_max: usize) -> Result<InflationReport> {
    sc.validate()?;
    let m = measure(sc, k_max)?;
    let [norm_phi, norm_u1, norm_umain, norm_ulow, norm_uhigh, norm_u] = m.norms;
    let ratio = norm_u / norm_phi;
    let discretization_error = match sc.resolution {
        Some(res) if !sc.domain.is_pure_torus() => {
            let fine = refine(sc, res * 2)?;
            let mf = measure(&fine, k_max)?;
            Some((mf.norms[5] / mf.norms[0] - ratio).abs() / ratio)
        }
        _ => None,
    };
    Ok(InflationReport {
        scenario: sc.clone(),
        k_max,
        norm_label: sc.target.label(),
        norm_phi,
        norm_u1,
        norm_umain,
        norm_ulow,
        norm_uhigh,
        norm_u,
        ratio,
        rho_hat: m.rho_hat,
        modulation_phi: m.modulation_phi,
        valid: sc.valid_rho() && m.rho_hat < TRUST_LIMIT,
        dominance: sc
            .claims_dominance
            .then(|| norm_umain > 2.0 * (norm_u1 + norm_ulow + norm_uhigh)),
        discretization_error,
    })
}

/// Same scenario with `res` quadrature points per box edge.
fn refine(sc: &Scenario, res: u32) -> Result<Scenario> {
    let mut fine = sc.clone();
    let old = sc.resolution.unwrap_or(DEFAULT_RESOLUTION) as f64;
    let cells = sc
        .domain
        .quadrature_cell
        .as_ref()
        .ok_or_else(|| InflateError::Config("refinement needs quadrature directions".into()))?;
    fine.domain.quadrature_cell = Some(cells.iter().map(|c| c * old / res as f64).collect());
    fine.resolution = Some(res);
    Ok(fine)
}

/// Maximum relative deviation in
/// `Σ_j ζ^{(p−2q*)j} U_main[ζ^j φ] = (p+1) ν_{p,q*} G_{q*}[φ]`, `ζ = e^{iπ/(p+1)}`, at `T`.
pub fn gauge_separation_check(sc: &Scenario, q_star: usize) -> Result<f64> {
    let p = sc.p_max();
    let nu = sc.nonlinearity.top_coefficient(q_star);
    if nu == Complex64::new(0.0, 0.0) {
        return Err(InflateError::Config(format!("no term of degree {p} with q = {q_star}")));
    }
    let phi = build_phi(sc)?;
    let zeta = Complex64::from_polar(1.0, PI / (p + 1) as f64);
    let mut lhs = FieldSnapshot::empty(sc.domain.clone(), sc.a);
    for j in 0..=p as i32 {
        let rot = zeta.powi(j);
        let data = phi.map_values(|_, e| e.scale(rot));
        let main = main_part(&data, &sc.nonlinearity, sc.t)?.at(sc.t, true);
        lhs = lhs.add(&main.scale(zeta.powi((p as i32 - 2 * q_star as i32) * j)));
    }
    let rhs = first_iterate(&phi, p, q_star, sc.t)?
        .at(sc.t, true)
        .scale(nu * (p + 1) as f64);
    let scale = rhs.max_abs();
    Ok(lhs.sub(&rhs).max_abs() / scale)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dyadic_rounding() {
        assert_eq!(floor_dyadic(7.9), 4.0);
        assert_eq!(nearest_dyadic(5.0), 4.0);
        assert_eq!(nearest_dyadic(6.0), 8.0);
        assert_eq!(nearest_dyadic(2f64.powf(2.5)), 4.0);
    }

    #[test]
    fn case6_literal_schedule() {
        let n = 1u64 << 12;
        let sc = schedule_case("case6", n, Some(-1.0 / 6.0), &Overrides::default()).unwrap();
        assert_eq!(sc.sigma, vec![vec![-4096.0], vec![8192.0], vec![12288.0]]);
        assert_eq!(sc.a, 1.0);
        assert!((sc.r - 1.0 / (n as f64).ln()).abs() < 1e-15);
        assert!((sc.t - (n as f64).powf(-0.5)).abs() < 1e-15);
    }

    #[test]
    fn case2_and_case3_schedules() {
        let n = 1u64 << 10;
        let l = (n as f64).ln();
        let c2 = schedule_case("case2", n, Some(-1.25), &Overrides::default()).unwrap();
        assert_eq!(c2.a, 1.0);
        assert!((c2.t - 1.0 / (l * 1024.0 * 1024.0)).abs() < 1e-20);
        let c3 = schedule_case("case3", n, None, &Overrides::default()).unwrap();
        assert!((c3.r - l.powf(-1.0 / 12.0)).abs() < 1e-15);
        assert!((c3.t - l.powf(-1.0 / 12.0) / (1024.0 * 1024.0)).abs() < 1e-20);
        assert!(c3.a <= n as f64 / 4.0);
    }

    #[test]
    fn unknown_case() {
        assert!(matches!(
            schedule_case("case99", 64, None, &Overrides::default()),
            Err(InflateError::UnknownCase(_))
        ));
    }

    #[test]
    fn box_family_points() {
        let sc = schedule_case("case6", 64, None, &Overrides::default()).unwrap();
        let phi = build_phi(&sc).unwrap();
        assert_eq!(phi.len(), 3);
        let amp = sc.r * (64f64).powf(1.0 / 6.0);
        for (_, e) in phi.iter() {
            assert!((e.eval(0.0).norm() - amp).abs() < 1e-12);
        }
        let mut big = schedule_case("case3", 256, None, &Overrides::default()).unwrap();
        big.a = 8.0;
        big.refresh_rho();
        assert_eq!(build_phi(&big).unwrap().len(), 24);
    }

    #[test]
    fn thin_box_has_resolution_points() {
        let sc = schedule_case("case7", 16, None, &Overrides::default()).unwrap();
        let phi = build_phi(&sc).unwrap();
        assert_eq!(phi.len(), DEFAULT_RESOLUTION as usize);
    }

    #[test]
    fn rho_override_solves_for_t() {
        let ov = Overrides {
            r: Some(0.5),
            rho: Some(0.7),
            ..Default::default()
        };
        let sc = schedule_case("case6", 4096, None, &ov).unwrap();
        assert!((sc.rho - 0.7).abs() < 1e-12);
        assert!(sc.overridden);
        assert!((sc.t - (0.7f64 / (0.5 * 4.0)).powi(3)).abs() < 1e-12);
    }

    #[test]
    fn overlapping_boxes_rejected() {
        let mut sc = schedule_case("case1", 64, None, &Overrides::default()).unwrap();
        sc.a = 64.0;
        assert!(build_phi(&sc).is_err());
    }
}
