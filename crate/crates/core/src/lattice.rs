//! Frequency-lattice geometry and sparse spectral fields.
//!
//! Frequencies are stored as integer index tuples; the physical coordinate in
//! direction `i` is `index[i] * step[i]`. Non-periodic directions come first
//! (`0..d1`) and are discretized by a quadrature cell; periodic directions
//! (`d1..d`) have step `2π / period`.

use std::collections::{BTreeMap, BTreeSet};
use std::f64::consts::PI;
use std::ops::{Add, Neg, Sub};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{InflateError, Result};
use crate::exppoly::ExpPoly;

pub const MAX_DIM: usize = 4;

/// Relative tolerance for recognising a physical coordinate as a lattice point.
pub const LATTICE_TOL: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DomainSpec {
    /// Total dimension.
    pub d: usize,
    /// Number of periodic directions (the last `d2` axes).
    pub d2: usize,
    /// Torus periods, one per periodic direction.
    pub periods: Vec<f64>,
    /// Grid spacing in frequency for each non-periodic direction.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub quadrature_cell: Option<Vec<f64>>,
}

impl DomainSpec {
    /// `T^d` with the standard period 2π, so frequencies are integers.
    pub fn torus(d: usize) -> Self {
        Self {
            d,
            d2: d,
            periods: vec![2.0 * PI; d],
            quadrature_cell: None,
        }
    }

    pub fn anisotropic_torus(periods: Vec<f64>) -> Self {
        Self {
            d: periods.len(),
            d2: periods.len(),
            periods,
            quadrature_cell: None,
        }
    }

    /// `R^d` sampled on a frequency grid with the given per-direction cells.
    pub fn euclidean(cells: Vec<f64>) -> Self {
        Self {
            d: cells.len(),
            d2: 0,
            periods: Vec::new(),
            quadrature_cell: Some(cells),
        }
    }

    /// `R^{d1} x T^{d2}` with 2π periods on the torus factor.
    pub fn mixed(cells: Vec<f64>, d2: usize) -> Self {
        let d1 = cells.len();
        Self {
            d: d1 + d2,
            d2,
            periods: vec![2.0 * PI; d2],
            quadrature_cell: if d1 > 0 { Some(cells) } else { None },
        }
    }

    pub fn d1(&self) -> usize {
        self.d - self.d2
    }

    pub fn is_pure_torus(&self) -> bool {
        self.d2 == self.d
    }

    pub fn validate(&self) -> Result<()> {
        if !(1..=MAX_DIM).contains(&self.d) {
            return Err(InflateError::Config(format!(
                "dimension d = {} outside [1, {MAX_DIM}]",
                self.d
            )));
        }
        if self.d2 > self.d {
            return Err(InflateError::Config(format!(
                "d2 = {} exceeds d = {}",
                self.d2, self.d
            )));
        }
        if self.periods.len() != self.d2 || self.periods.iter().any(|&p| !(p > 0.0)) {
            return Err(InflateError::Config(
                "need one positive period per periodic direction".into(),
            ));
        }
        match (&self.quadrature_cell, self.d1()) {
            (None, 0) => Ok(()),
            (Some(c), d1) if c.len() == d1 && d1 > 0 && c.iter().all(|&h| h > 0.0) => Ok(()),
            _ => Err(InflateError::Config(
                "quadrature_cell must hold one positive spacing per non-periodic direction, and only then"
                    .into(),
            )),
        }
    }

    /// Lattice step per direction (unused trailing slots are 1).
    pub fn steps(&self) -> [f64; MAX_DIM] {
        let mut s = [1.0; MAX_DIM];
        let d1 = self.d1();
        for (i, slot) in s.iter_mut().enumerate().take(self.d) {
            *slot = if i < d1 {
                self.quadrature_cell.as_ref().map_or(1.0, |c| c[i])
            } else {
                2.0 * PI / self.periods[i - d1]
            };
        }
        s
    }

    /// Measure attached to one lattice point: 1 on a pure torus, the product of
    /// quadrature cells otherwise.
    pub fn cell_measure(&self) -> f64 {
        self.quadrature_cell
            .as_ref()
            .map_or(1.0, |c| c.iter().product())
    }

    pub fn coords(&self, f: &Frequency) -> [f64; MAX_DIM] {
        let steps = self.steps();
        let mut x = [0.0; MAX_DIM];
        for i in 0..self.d {
            x[i] = f.0[i] as f64 * steps[i];
        }
        x
    }

    /// `|ξ|²` in physical units.
    pub fn norm_sq(&self, f: &Frequency) -> f64 {
        let steps = self.steps();
        (0..self.d)
            .map(|i| {
                let x = f.0[i] as f64 * steps[i];
                x * x
            })
            .sum()
    }

    /// Lattice point at a physical coordinate; fails if the coordinate is off-lattice.
    pub fn frequency_at(&self, coords: &[f64]) -> Result<Frequency> {
        if coords.len() != self.d {
            return Err(InflateError::LatticeMismatch(format!(
                "expected {} coordinates, got {}",
                self.d,
                coords.len()
            )));
        }
        let steps = self.steps();
        let mut idx = [0i64; MAX_DIM];
        for i in 0..self.d {
            let q = coords[i] / steps[i];
            let r = q.round();
            if (q - r).abs() > LATTICE_TOL * q.abs().max(1.0) {
                return Err(InflateError::LatticeMismatch(format!(
                    "coordinate {} in direction {i} is not a multiple of step {}",
                    coords[i], steps[i]
                )));
            }
            idx[i] = r as i64;
        }
        Ok(Frequency(idx))
    }
}

/// A lattice frequency as an integer index tuple.
#[derive(Copy, Clone, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Frequency(pub [i64; MAX_DIM]);

impl Frequency {
    pub fn new(idx: &[i64]) -> Self {
        assert!(idx.len() <= MAX_DIM, "at most {MAX_DIM} directions");
        let mut a = [0; MAX_DIM];
        a[..idx.len()].copy_from_slice(idx);
        Frequency(a)
    }

    pub fn zero() -> Self {
        Frequency([0; MAX_DIM])
    }

    /// `n · e_{axis}`
    pub fn axis(axis: usize, n: i64) -> Self {
        let mut a = [0; MAX_DIM];
        a[axis] = n;
        Frequency(a)
    }

    pub fn scaled(self, c: i64) -> Self {
        Frequency(self.0.map(|x| x * c))
    }

    pub fn index_norm_sq(&self) -> i64 {
        self.0.iter().map(|x| x * x).sum()
    }

    pub fn to_vec(&self, d: usize) -> Vec<i64> {
        self.0[..d].to_vec()
    }
}

impl Add for Frequency {
    type Output = Frequency;
    fn add(self, rhs: Frequency) -> Frequency {
        let mut a = self.0;
        for (x, y) in a.iter_mut().zip(rhs.0) {
            *x += y;
        }
        Frequency(a)
    }
}

impl Sub for Frequency {
    type Output = Frequency;
    fn sub(self, rhs: Frequency) -> Frequency {
        self + (-rhs)
    }
}

impl Neg for Frequency {
    type Output = Frequency;
    fn neg(self) -> Frequency {
        Frequency(self.0.map(|x| -x))
    }
}

/// Sparse frequency-indexed field whose amplitudes are exponential polynomials in time.
#[derive(Clone, Debug, PartialEq)]
pub struct SpectralField {
    domain: DomainSpec,
    cell_size: f64,
    entries: BTreeMap<Frequency, ExpPoly>,
}

impl SpectralField {
    pub fn new(domain: DomainSpec, cell_size: f64) -> Self {
        Self {
            domain,
            cell_size,
            entries: BTreeMap::new(),
        }
    }

    /// Field with time-independent amplitudes.
    pub fn from_constants<I>(domain: DomainSpec, cell_size: f64, values: I) -> Self
    where
        I: IntoIterator<Item = (Frequency, Complex64)>,
    {
        let mut f = Self::new(domain, cell_size);
        for (k, c) in values {
            f.insert(k, ExpPoly::constant(c));
        }
        f
    }

    pub fn domain(&self) -> &DomainSpec {
        &self.domain
    }

    pub fn cell_size(&self) -> f64 {
        self.cell_size
    }

    /// Inserts (replacing) an entry; zero polynomials are dropped.
    pub fn insert(&mut self, k: Frequency, value: ExpPoly) {
        if value.is_zero() {
            self.entries.remove(&k);
        } else {
            self.entries.insert(k, value);
        }
    }

    pub fn add_at(&mut self, k: Frequency, value: ExpPoly) {
        let merged = match self.entries.remove(&k) {
            Some(old) => old.add(&value),
            None => value,
        };
        self.insert(k, merged);
    }

    pub fn get(&self, k: &Frequency) -> Option<&ExpPoly> {
        self.entries.get(k)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Frequency, &ExpPoly)> {
        self.entries.iter()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Exact key set of the nonzero entries.
    pub fn support(&self) -> BTreeSet<Frequency> {
        self.entries.keys().copied().collect()
    }

    pub fn measure_weight(&self, _k: &Frequency) -> f64 {
        self.domain.cell_measure()
    }

    pub fn total_terms(&self) -> usize {
        self.entries.values().map(ExpPoly::len).sum()
    }

    pub fn map_values<F: FnMut(&Frequency, &ExpPoly) -> ExpPoly>(&self, mut f: F) -> Self {
        let mut out = Self::new(self.domain.clone(), self.cell_size);
        for (k, v) in &self.entries {
            out.insert(*k, f(k, v));
        }
        out
    }

    /// Evaluates every amplitude at time `t`. With `untwist`, the stored values are
    /// interaction-picture coefficients and the free phase `e^{-it|ξ|²}` is restored.
    pub fn at(&self, t: f64, untwist: bool) -> FieldSnapshot {
        let mut values = BTreeMap::new();
        for (k, v) in &self.entries {
            let mut c = v.eval(t);
            if untwist {
                c *= Complex64::from_polar(1.0, -t * self.domain.norm_sq(k));
            }
            values.insert(*k, c);
        }
        FieldSnapshot {
            domain: self.domain.clone(),
            cell_size: self.cell_size,
            values,
        }
    }
}

/// A spectral field frozen at one time: frequency → complex amplitude.
#[derive(Clone, Debug, PartialEq)]
pub struct FieldSnapshot {
    pub domain: DomainSpec,
    pub cell_size: f64,
    pub values: BTreeMap<Frequency, Complex64>,
}

impl FieldSnapshot {
    pub fn empty(domain: DomainSpec, cell_size: f64) -> Self {
        Self {
            domain,
            cell_size,
            values: BTreeMap::new(),
        }
    }

    pub fn from_pairs<I>(domain: DomainSpec, cell_size: f64, pairs: I) -> Self
    where
        I: IntoIterator<Item = (Frequency, Complex64)>,
    {
        let mut s = Self::empty(domain, cell_size);
        for (k, c) in pairs {
            *s.values.entry(k).or_default() += c;
        }
        s
    }

    pub fn weight(&self) -> f64 {
        self.domain.cell_measure()
    }

    pub fn get(&self, k: &Frequency) -> Complex64 {
        self.values.get(k).copied().unwrap_or_default()
    }

    pub fn add(&self, other: &FieldSnapshot) -> FieldSnapshot {
        let mut out = self.clone();
        for (k, c) in &other.values {
            *out.values.entry(*k).or_default() += *c;
        }
        out
    }

    pub fn sub(&self, other: &FieldSnapshot) -> FieldSnapshot {
        let mut out = self.clone();
        for (k, c) in &other.values {
            *out.values.entry(*k).or_default() -= *c;
        }
        out
    }

    pub fn scale(&self, c: Complex64) -> FieldSnapshot {
        let mut out = self.clone();
        for v in out.values.values_mut() {
            *v *= c;
        }
        out
    }

    /// Lattice-weighted `L²` norm.
    pub fn l2_norm(&self) -> f64 {
        (self.weight() * self.values.values().map(|c| c.norm_sqr()).fold(0.0, |a, b| a + b)).sqrt()
    }

    pub fn l1_coefficients(&self) -> f64 {
        self.values.values().map(|c| c.norm()).fold(0.0, |a, b| a + b)
    }

    pub fn max_abs(&self) -> f64 {
        self.values.values().map(|c| c.norm()).fold(0.0, f64::max)
    }

    /// Returns the field as constant-in-time polynomials.
    pub fn to_field(&self) -> SpectralField {
        SpectralField::from_constants(
            self.domain.clone(),
            self.cell_size,
            self.values.iter().map(|(k, c)| (*k, *c)),
        )
    }
}

/// `{σ₁ s + σ₂ t : s ∈ S, t ∈ T}`.
pub fn minkowski_sum(
    s: &BTreeSet<Frequency>,
    t: &BTreeSet<Frequency>,
    signs: (i64, i64),
) -> BTreeSet<Frequency> {
    let mut out = BTreeSet::new();
    for a in s {
        for b in t {
            out.insert(a.scaled(signs.0) + b.scaled(signs.1));
        }
    }
    out
}

/// The set `S_k` of sums of `k` elements of `Σ ∪ (−Σ)` (`S_1 = Σ`).
pub fn signed_sumset(sigma: &BTreeSet<Frequency>, k: usize) -> BTreeSet<Frequency> {
    assert!(k >= 1);
    if k == 1 {
        return sigma.clone();
    }
    let pm: BTreeSet<Frequency> = sigma.iter().flat_map(|s| [*s, -*s]).collect();
    let mut acc = pm.clone();
    for _ in 1..k {
        acc = minkowski_sum(&acc, &pm, (1, 1));
    }
    acc
}

/// Checks `supp(field) ⊆ ∪_{η ∈ S_k} (η + Q_{kA})` with `A` the field's cell size.
///
/// The box is taken closed: a product with conjugated factors can reach the
/// upper face `+kA/2` exactly. On failure the offending frequency is returned.
pub fn support_bound_check(
    k: usize,
    sigma: &BTreeSet<Frequency>,
    field: &SpectralField,
) -> std::result::Result<(), Frequency> {
    let domain = field.domain();
    let sk = signed_sumset(sigma, k);
    let half = k as f64 * field.cell_size() / 2.0;
    let steps = domain.steps();
    // index-space half widths, padded for round-off
    let mut reach = [0i64; MAX_DIM];
    for i in 0..domain.d {
        reach[i] = (half / steps[i] * (1.0 + 1e-12)).floor() as i64;
    }
    for xi in field.support() {
        let lo = Frequency([xi.0[0] - reach[0], i64::MIN, i64::MIN, i64::MIN]);
        let hi = Frequency([xi.0[0] + reach[0], i64::MAX, i64::MAX, i64::MAX]);
        let covered = sk
            .range(lo..=hi)
            .any(|eta| (0..domain.d).all(|i| (xi.0[i] - eta.0[i]).abs() <= reach[i]));
        if !covered {
            return Err(xi);
        }
    }
    Ok(())
}
