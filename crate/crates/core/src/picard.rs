//! Picard iterates of `i∂ₜu + Δu = F(u, ū)` in interaction-picture coordinates.
//!
//! Stored coefficients are `ũ_k(ξ, t) = e^{it|ξ|²} Û_k(ξ, t)`, so `U_1` is constant
//! and each order is a Duhamel integral with shift `+|ξ|²`. Fourier convention:
//! coefficient sequences on the torus, Riemann sums with the cell measure in
//! quadrature directions, and `Û_k = −iν·(...)` with no extra normalization.

use std::collections::BTreeMap;

use num_bigint::BigInt;
use num_complex::Complex64;
use num_rational::BigRational;
use num_traits::{One, Zero};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{InflateError, Result};
use crate::exppoly::{ExpPoly, Term, DEFAULT_TERM_CAP};
use crate::lattice::{FieldSnapshot, Frequency, SpectralField};
use crate::norms::modulation_norm;

/// Entries handled per parallel task in a pairwise convolution. Fixed so the
/// accumulation order does not depend on the worker count.
const CHUNK: usize = 64;

/// Unmerged products allowed in one convolution or one order, as a multiple of the term cap.
pub const RAW_BUDGET_FACTOR: usize = 8;

/// Empirical tail ratios at or above this value are not trusted.
pub const TRUST_LIMIT: f64 = 0.9;

/// `ν·u^q·ū^{p−q}`
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NlTerm {
    pub p: usize,
    pub q: usize,
    pub nu: Complex64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<NlTerm>", into = "Vec<NlTerm>")]
pub struct NonlinearitySpec {
    terms: Vec<NlTerm>,
}

impl TryFrom<Vec<NlTerm>> for NonlinearitySpec {
    type Error = InflateError;
    fn try_from(terms: Vec<NlTerm>) -> Result<Self> {
        Self::new(terms)
    }
}

impl From<NonlinearitySpec> for Vec<NlTerm> {
    fn from(n: NonlinearitySpec) -> Self {
        n.terms
    }
}

impl NonlinearitySpec {
    pub fn new(mut terms: Vec<NlTerm>) -> Result<Self> {
        if terms.is_empty() {
            return Err(InflateError::Config("nonlinearity needs at least one term".into()));
        }
        for t in &terms {
            if t.p < 2 || t.q > t.p {
                return Err(InflateError::Config(format!(
                    "term (p, q) = ({}, {}) needs p >= 2 and 0 <= q <= p",
                    t.p, t.q
                )));
            }
            if t.nu == Complex64::zero() {
                return Err(InflateError::Config(format!(
                    "term (p, q) = ({}, {}) has zero coefficient",
                    t.p, t.q
                )));
            }
        }
        terms.sort_by_key(|t| (t.p, t.q));
        if terms.windows(2).any(|w| (w[0].p, w[0].q) == (w[1].p, w[1].q)) {
            return Err(InflateError::Config("repeated (p, q) term".into()));
        }
        Ok(Self { terms })
    }

    pub fn single(p: usize, q: usize, nu: Complex64) -> Result<Self> {
        Self::new(vec![NlTerm { p, q, nu }])
    }

    pub fn terms(&self) -> &[NlTerm] {
        &self.terms
    }

    pub fn p_max(&self) -> usize {
        self.terms.iter().map(|t| t.p).max().unwrap()
    }

    /// `ν_{p_max, q}` (zero if absent).
    pub fn top_coefficient(&self, q: usize) -> Complex64 {
        let p = self.p_max();
        self.terms
            .iter()
            .find(|t| t.p == p && t.q == q)
            .map_or(Complex64::zero(), |t| t.nu)
    }

    /// Orders `k <= kmax` at which an iterate can be nonzero.
    pub fn reachable_orders(&self, kmax: usize) -> Vec<usize> {
        let mut reach = vec![false; kmax + 1];
        if kmax >= 1 {
            reach[1] = true;
        }
        for k in 2..=kmax {
            reach[k] = self.terms.iter().any(|t| k > t.p - 1 && reach[k - (t.p - 1)]);
        }
        (1..=kmax).filter(|&k| reach[k]).collect()
    }
}

type RawMap = BTreeMap<Frequency, Vec<Term>>;

fn check_cap(len: usize, cap: usize, k: &Frequency) -> Result<()> {
    if len > cap {
        return Err(InflateError::TermCap {
            cap,
            context: format!("{len} terms accumulated at frequency {:?}", k.0),
        });
    }
    Ok(())
}

fn push_product(out: &mut Vec<Term>, a: &ExpPoly, b: &ExpPoly) {
    for x in a.terms() {
        for y in b.terms() {
            out.push(Term {
                coeff: x.coeff * y.coeff,
                power: x.power + y.power,
                rate: x.rate + y.rate,
            });
        }
    }
}

/// Discrete convolution of two sparse coefficient maps.
fn convolve_pair(
    a: &BTreeMap<Frequency, ExpPoly>,
    b: &BTreeMap<Frequency, ExpPoly>,
    cap: usize,
) -> Result<BTreeMap<Frequency, ExpPoly>> {
    let count = |m: &BTreeMap<Frequency, ExpPoly>| m.values().map(ExpPoly::len).sum::<usize>();
    let raw_total = count(a).saturating_mul(count(b));
    if raw_total > cap.saturating_mul(RAW_BUDGET_FACTOR) {
        return Err(InflateError::TermCap {
            cap,
            context: format!("{raw_total} unmerged products in one convolution"),
        });
    }
    let left: Vec<(&Frequency, &ExpPoly)> = a.iter().collect();
    let partial: Vec<RawMap> = left
        .par_chunks(CHUNK)
        .map(|chunk| {
            let mut raw = RawMap::new();
            for (ka, ea) in chunk {
                for (kb, eb) in b {
                    push_product(raw.entry(**ka + *kb).or_default(), ea, eb);
                }
            }
            raw
        })
        .collect();
    let mut merged = RawMap::new();
    for raw in partial {
        for (k, mut terms) in raw {
            let slot = merged.entry(k).or_default();
            slot.append(&mut terms);
            check_cap(slot.len(), cap, &k)?;
        }
    }
    let entries: Vec<(Frequency, Vec<Term>)> = merged.into_iter().collect();
    Ok(entries
        .into_par_iter()
        .map(|(k, t)| (k, ExpPoly::from_terms(t)))
        .filter(|(_, e)| !e.is_zero())
        .collect::<Vec<_>>()
        .into_iter()
        .collect())
}

/// Input entries of one factor of `μ_{p,q}`, conjugated if needed and, when
/// `twist` is set, carrying the free phase so the product is a physical amplitude.
fn prepare_factor(f: &SpectralField, conj: bool, twist: bool) -> BTreeMap<Frequency, ExpPoly> {
    f.iter()
        .map(|(k, e)| {
            let phase = if twist { f.domain().norm_sq(k) } else { 0.0 };
            if conj {
                (-*k, e.conj().shift_rate(phase))
            } else {
                (*k, e.shift_rate(-phase))
            }
        })
        .collect()
}

/// Coefficients of `Π_{l<=q} u_l · Π_{m>q} ū_m`.
pub fn mu_convolve(fields: &[&SpectralField], q: usize, twist: bool) -> Result<SpectralField> {
    mu_convolve_capped(fields, q, twist, DEFAULT_TERM_CAP)
}

pub fn mu_convolve_capped(
    fields: &[&SpectralField],
    q: usize,
    twist: bool,
    cap: usize,
) -> Result<SpectralField> {
    let first = fields
        .first()
        .ok_or_else(|| InflateError::Config("mu_convolve needs at least one field".into()))?;
    if q > fields.len() {
        return Err(InflateError::Config(format!(
            "q = {q} exceeds the number of factors {}",
            fields.len()
        )));
    }
    let domain = first.domain().clone();
    for f in fields {
        if *f.domain() != domain {
            return Err(InflateError::LatticeMismatch(
                "factors of a product live on different lattices".into(),
            ));
        }
    }
    let mut acc = prepare_factor(first, q == 0, twist);
    for (l, f) in fields.iter().enumerate().skip(1) {
        if acc.is_empty() {
            break;
        }
        acc = convolve_pair(&acc, &prepare_factor(f, l >= q, twist), cap)?;
    }
    let weight = domain.cell_measure().powi(fields.len() as i32 - 1);
    let mut out = SpectralField::new(domain, first.cell_size());
    for (k, e) in acc {
        let e = if weight != 1.0 { e.scale(Complex64::new(weight, 0.0)) } else { e };
        out.insert(k, e);
    }
    Ok(out)
}

/// Compositions of `k` into `p` populated orders, grouped by the sorted
/// multisets of the unconjugated and conjugated slots, with multiplicities.
fn composition_groups(
    k: usize,
    p: usize,
    q: usize,
    populated: &[usize],
) -> BTreeMap<(Vec<usize>, Vec<usize>), u64> {
    fn rec(
        left: usize,
        slots: usize,
        populated: &[usize],
        cur: &mut Vec<usize>,
        q: usize,
        out: &mut BTreeMap<(Vec<usize>, Vec<usize>), u64>,
    ) {
        if slots == 0 {
            if left == 0 {
                let mut u = cur[..q].to_vec();
                let mut c = cur[q..].to_vec();
                u.sort_unstable();
                c.sort_unstable();
                *out.entry((u, c)).or_default() += 1;
            }
            return;
        }
        for &o in populated {
            if o + (slots - 1) > left {
                break;
            }
            cur.push(o);
            rec(left - o, slots - 1, populated, cur, q, out);
            cur.pop();
        }
    }
    let mut out = BTreeMap::new();
    rec(k, p, populated, &mut Vec::with_capacity(p), q, &mut out);
    out
}

/// Picard iterates `U_1, U_2, …` of one datum, stored in twisted form.
#[derive(Clone, Debug)]
pub struct IterateTable {
    data: SpectralField,
    nonlinearity: NonlinearitySpec,
    horizon: f64,
    term_cap: usize,
    by_order: BTreeMap<usize, SpectralField>,
    computed_through: usize,
}

impl IterateTable {
    /// `horizon` is the largest time at which iterates will be evaluated.
    pub fn new(data: SpectralField, nonlinearity: NonlinearitySpec, horizon: f64) -> Self {
        let mut by_order = BTreeMap::new();
        if !data.is_empty() {
            by_order.insert(1, data.clone());
        }
        Self {
            data,
            nonlinearity,
            horizon,
            term_cap: DEFAULT_TERM_CAP,
            by_order,
            computed_through: 1,
        }
    }

    pub fn with_term_cap(mut self, cap: usize) -> Self {
        self.term_cap = cap;
        self
    }

    pub fn data(&self) -> &SpectralField {
        &self.data
    }

    pub fn nonlinearity(&self) -> &NonlinearitySpec {
        &self.nonlinearity
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    /// `U_k`, or `None` if it vanishes identically (or is not computed yet).
    pub fn order(&self, k: usize) -> Option<&SpectralField> {
        self.by_order.get(&k)
    }

    pub fn populated_orders(&self) -> Vec<usize> {
        self.by_order.keys().copied().collect()
    }

    pub fn computed_through(&self) -> usize {
        self.computed_through
    }

    /// Computes all orders through `kmax`.
    pub fn populate(&mut self, kmax: usize) -> Result<()> {
        for k in self.computed_through + 1..=kmax {
            self.next_iterate(k)?;
        }
        Ok(())
    }

    /// Computes `U_k` from the stored lower orders.
    pub fn next_iterate(&mut self, k: usize) -> Result<Option<&SpectralField>> {
        if k < 2 || k != self.computed_through + 1 {
            return Err(InflateError::Config(format!(
                "order {k} requested but orders are computed through {}",
                self.computed_through
            )));
        }
        let populated = self.populated_orders();
        let domain = self.data.domain().clone();
        let mut raw = RawMap::new();
        let mut raw_total = 0usize;
        for (j, term) in self.nonlinearity.terms().iter().enumerate() {
            let c = Complex64::new(0.0, -1.0) * term.nu;
            for ((u, cj), mult) in composition_groups(k, term.p, term.q, &populated) {
                let fields: Vec<&SpectralField> =
                    u.iter().chain(cj.iter()).map(|o| &self.by_order[o]).collect();
                let mu = mu_convolve_capped(&fields, term.q, true, self.term_cap).map_err(|e| {
                    match e {
                        InflateError::TermCap { cap, context } => InflateError::TermCap {
                            cap,
                            context: format!("order {k}, nonlinearity term {j}: {context}"),
                        },
                        other => other,
                    }
                })?;
                let scale = c * mult as f64;
                raw_total += mu.total_terms();
                if raw_total > self.term_cap.saturating_mul(RAW_BUDGET_FACTOR) {
                    return Err(InflateError::TermCap {
                        cap: self.term_cap,
                        context: format!("order {k}: {raw_total} unmerged terms"),
                    });
                }
                for (xi, e) in mu.iter() {
                    let slot = raw.entry(*xi).or_default();
                    slot.extend(e.terms().iter().map(|t| Term {
                        coeff: t.coeff * scale,
                        ..*t
                    }));
                    check_cap(slot.len(), self.term_cap, xi)?;
                }
            }
        }
        let horizon = self.horizon;
        let entries: Vec<(Frequency, Vec<Term>)> = raw.into_iter().collect();
        let dom = &domain;
        let computed: Vec<(Frequency, ExpPoly)> = entries
            .into_par_iter()
            .map(|(xi, terms)| (xi, ExpPoly::from_terms(terms).duhamel(dom.norm_sq(&xi), horizon)))
            .collect();
        let mut field = SpectralField::new(domain, self.data.cell_size());
        for (xi, e) in computed {
            field.insert(xi, e);
        }
        self.computed_through = k;
        if field.is_empty() {
            self.by_order.remove(&k);
            Ok(None)
        } else {
            self.by_order.insert(k, field);
            Ok(self.by_order.get(&k))
        }
    }

    /// Physical (untwisted) `Û_k(t)`, zero if absent.
    pub fn at(&self, k: usize, t: f64) -> FieldSnapshot {
        match self.by_order.get(&k) {
            Some(f) => f.at(t, true),
            None => FieldSnapshot::empty(self.data.domain().clone(), self.data.cell_size()),
        }
    }
}

/// `G_q[φ] = −i ∫_0^t e^{i(t−τ)Δ} μ_{p,q}(U_1[φ](τ)) dτ` in twisted form.
pub fn first_iterate(
    data: &SpectralField,
    p: usize,
    q: usize,
    horizon: f64,
) -> Result<SpectralField> {
    let fields = vec![data; p];
    let mu = mu_convolve(&fields, q, true)?;
    Ok(mu.map_values(|xi, e| {
        e.scale(Complex64::new(0.0, -1.0))
            .duhamel(data.domain().norm_sq(xi), horizon)
    }))
}

#[derive(Clone, Debug)]
pub struct SeriesSum {
    pub field: FieldSnapshot,
    /// Empirical geometric ratio per unit order.
    pub tail_ratio: f64,
    /// `‖U_k(T)‖_{M_A}` for each populated order.
    pub order_norms: Vec<(usize, f64)>,
}

impl SeriesSum {
    pub fn trusted(&self) -> bool {
        self.tail_ratio < TRUST_LIMIT
    }
}

/// Per-unit-order ratio `(‖U_b‖/‖U_a‖)^{1/(b−a)}` over the last two
/// consecutive pairs of populated orders, taking the larger.
pub fn tail_ratio(order_norms: &[(usize, f64)]) -> f64 {
    let ratios: Vec<f64> = order_norms
        .windows(2)
        .map(|w| {
            let ((a, na), (b, nb)) = (w[0], w[1]);
            if na == 0.0 {
                f64::INFINITY
            } else {
                (nb / na).powf(1.0 / (b - a) as f64)
            }
        })
        .collect();
    ratios.iter().rev().take(2).copied().fold(0.0, f64::max)
}

/// `Σ_{k<=K} Û_k(T)` together with the empirical tail ratio.
pub fn series_sum(table: &IterateTable, t: f64, kmax: usize) -> Result<SeriesSum> {
    if kmax > table.computed_through() {
        return Err(InflateError::Config(format!(
            "series to order {kmax} requested but only {} orders are computed",
            table.computed_through()
        )));
    }
    let a = table.data().cell_size();
    let mut field = FieldSnapshot::empty(table.data().domain().clone(), a);
    let mut order_norms = Vec::new();
    for k in table.populated_orders().into_iter().filter(|&k| k <= kmax) {
        let snap = table.at(k, t);
        order_norms.push((k, modulation_norm(&snap, a)));
        field = field.add(&snap);
    }
    let tail = tail_ratio(&order_norms);
    if tail >= 1.0 {
        return Err(InflateError::Divergence { rho_hat: tail });
    }
    Ok(SeriesSum {
        field,
        tail_ratio: tail,
        order_norms,
    })
}

#[derive(Clone, Debug)]
pub struct Decomposition {
    pub u1: FieldSnapshot,
    pub low: FieldSnapshot,
    pub main: FieldSnapshot,
    pub high: FieldSnapshot,
}

impl Decomposition {
    pub fn recompose(&self) -> FieldSnapshot {
        self.u1.add(&self.low).add(&self.main).add(&self.high)
    }
}

/// `U_main = Σ_q ν_{p,q} G_q` in twisted form, `p` the top degree.
pub fn main_part(data: &SpectralField, nl: &NonlinearitySpec, horizon: f64) -> Result<SpectralField> {
    let p = nl.p_max();
    let mut out = SpectralField::new(data.domain().clone(), data.cell_size());
    for term in nl.terms().iter().filter(|t| t.p == p) {
        let g = first_iterate(data, p, term.q, horizon)?;
        for (xi, e) in g.iter() {
            out.add_at(*xi, e.scale(term.nu));
        }
    }
    Ok(out)
}

/// Splits the truncated series at `T` into `U_1 + U_low + U_main + U_high`.
pub fn series_decompose(table: &IterateTable, t: f64, kmax: usize) -> Result<Decomposition> {
    series_sum(table, t, kmax)?;
    let p = table.nonlinearity().p_max();
    let domain = table.data().domain().clone();
    let a = table.data().cell_size();
    let main = main_part(table.data(), table.nonlinearity(), table.horizon())?.at(t, true);
    let mut low = FieldSnapshot::empty(domain.clone(), a);
    let mut high = FieldSnapshot::empty(domain, a);
    for k in table.populated_orders() {
        if (2..=p.min(kmax)).contains(&k) {
            low = low.add(&table.at(k, t));
        } else if k > p && k <= kmax {
            high = high.add(&table.at(k, t));
        }
    }
    low = low.sub(&main);
    Ok(Decomposition {
        u1: table.at(1, t),
        low,
        main,
        high,
    })
}

/// Exact `a_1, …, a_kmax` with `a_1 = 1`,
/// `a_k = (p−1)/(k−1) Σ_{k_1+…+k_p=k} a_{k_1}⋯a_{k_p}`.
pub fn sequence_a(p: usize, kmax: usize) -> Result<Vec<BigRational>> {
    if p < 2 || kmax == 0 || kmax > 200 {
        return Err(InflateError::Config(format!(
            "sequence_a needs p >= 2 and 1 <= kmax <= 200 (got p = {p}, kmax = {kmax})"
        )));
    }
    // pow[j][n] = Σ over j-part compositions of n of the product of a's
    let zero = BigRational::zero();
    let mut pow = vec![vec![zero.clone(); kmax + 1]; p + 1];
    let mut a = vec![zero.clone(); kmax + 1];
    a[1] = BigRational::one();
    pow[1][1] = BigRational::one();
    for k in 2..=kmax {
        for j in 2..=p {
            let mut s = zero.clone();
            for i in 1..k {
                if !a[i].is_zero() && !pow[j - 1][k - i].is_zero() {
                    s += &a[i] * &pow[j - 1][k - i];
                }
            }
            pow[j][k] = s;
        }
        let factor = BigRational::new(BigInt::from(p - 1), BigInt::from(k - 1));
        a[k] = factor * &pow[p][k];
        pow[1][k] = a[k].clone();
    }
    Ok(a.into_iter().skip(1).collect())
}

fn composition_power_sums(b: &[f64], p: usize) -> Vec<f64> {
    let n = b.len();
    // pow[n] for the current number of parts, indexed by order - 1
    let mut cur = b.to_vec();
    for _ in 1..p {
        let mut next = vec![0.0; n];
        for (total, slot) in next.iter_mut().enumerate() {
            for i in 0..total {
                *slot += b[i] * cur[total - 1 - i];
            }
        }
        cur = next;
    }
    cur
}

/// Checks `b_k <= C Σ b_{k_1}⋯b_{k_p}` for `k >= 2`, then the bound
/// `b_k <= b_1 C_0^{k−1}` with `C_0 = (π²/6)(C p²)^{1/(p−1)} b_1`.
pub fn verify_sequence_bound(b: &[f64], p: usize, c: f64) -> Result<bool> {
    if p < 2 || !(c > 0.0) || b.iter().any(|&x| !(x >= 0.0)) {
        return Err(InflateError::Config(
            "need p >= 2, C > 0 and a nonnegative sequence".into(),
        ));
    }
    if b.is_empty() {
        return Ok(true);
    }
    let sums = composition_power_sums(b, p);
    for k in 2..=b.len() {
        let rhs = c * sums[k - 1];
        if b[k - 1] > rhs * (1.0 + 1e-12) {
            return Err(InflateError::Hypothesis {
                k,
                lhs: b[k - 1],
                rhs,
            });
        }
    }
    let b1 = b[0];
    let c0 = std::f64::consts::PI.powi(2) / 6.0 * (c * (p * p) as f64).powf(1.0 / (p - 1) as f64) * b1;
    Ok(b.iter().enumerate().all(|(i, &bk)| {
        let bound = b1 * c0.powi(i as i32);
        bk <= bound * (1.0 + 1e-12)
    }))
}

/// For every nonlinearity term, compares `G[ζφ]` with `ζ^{2q−p} G[φ]` at time `t`
/// and returns the largest relative deviation.
pub fn gauge_phase_action(table: &IterateTable, zeta: Complex64, t: f64) -> Result<f64> {
    if (zeta.norm() - 1.0).abs() > 1e-12 {
        return Err(InflateError::Config("gauge factor must be unimodular".into()));
    }
    let data = table.data();
    let rotated = data.map_values(|_, e| e.scale(zeta));
    let mut worst: f64 = 0.0;
    for term in table.nonlinearity().terms() {
        let lhs = first_iterate(&rotated, term.p, term.q, table.horizon())?.at(t, true);
        let factor = zeta.powi(2 * term.q as i32 - term.p as i32);
        let rhs = first_iterate(data, term.p, term.q, table.horizon())?
            .at(t, true)
            .scale(factor);
        let scale = rhs.max_abs();
        let diff = lhs.sub(&rhs).max_abs();
        if scale > 0.0 {
            worst = worst.max(diff / scale);
        } else if diff > 0.0 {
            worst = f64::INFINITY;
        }
    }
    Ok(worst)
}
