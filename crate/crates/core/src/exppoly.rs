//! Exponential polynomials `Σ c·t^m·e^{iθt}` in the time variable.

use num_complex::Complex64;

use crate::error::{InflateError, Result};

/// Two phase rates closer than this are merged.
pub const PHASE_TOL: f64 = 1e-12;
/// Coefficients below this magnitude are dropped.
pub const PRUNE_ABS: f64 = 1e-300;
pub const DEFAULT_TERM_CAP: usize = 1_000_000;
/// Below this value of `|rate · t|` the Duhamel integral and the phase integral
/// switch from the closed form to a power series.
pub const SERIES_SWITCH: f64 = 1e-4;

const I: Complex64 = Complex64::new(0.0, 1.0);

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Term {
    pub coeff: Complex64,
    pub power: u32,
    pub rate: f64,
}

impl Term {
    pub fn eval(&self, t: f64) -> Complex64 {
        self.coeff * t.powi(self.power as i32) * Complex64::from_polar(1.0, self.rate * t)
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ExpPoly {
    terms: Vec<Term>,
}

impl ExpPoly {
    pub fn zero() -> Self {
        Self::default()
    }

    pub fn constant(c: Complex64) -> Self {
        Self::monomial(c, 0, 0.0)
    }

    pub fn monomial(coeff: Complex64, power: u32, rate: f64) -> Self {
        Self::from_terms(vec![Term { coeff, power, rate }])
    }

    pub fn from_terms(terms: Vec<Term>) -> Self {
        let mut p = ExpPoly { terms };
        p.canonicalize();
        p
    }

    pub fn terms(&self) -> &[Term] {
        &self.terms
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn max_power(&self) -> u32 {
        self.terms.iter().map(|t| t.power).max().unwrap_or(0)
    }

    /// Sort by `(power, rate)`, merge neighbours within [`PHASE_TOL`], drop tiny coefficients.
    fn canonicalize(&mut self) {
        self.terms
            .sort_by(|a, b| a.power.cmp(&b.power).then(a.rate.total_cmp(&b.rate)));
        let mut out: Vec<Term> = Vec::with_capacity(self.terms.len());
        for t in self.terms.drain(..) {
            match out.last_mut() {
                Some(last) if last.power == t.power && (t.rate - last.rate).abs() <= PHASE_TOL => {
                    last.coeff += t.coeff;
                }
                _ => out.push(t),
            }
        }
        out.retain(|t| t.coeff.norm() >= PRUNE_ABS);
        self.terms = out;
    }

    pub fn eval(&self, t: f64) -> Complex64 {
        self.terms.iter().map(|term| term.eval(t)).sum()
    }

    /// Complex conjugate as a function of real `t`.
    pub fn conj(&self) -> Self {
        let mut terms: Vec<Term> = self
            .terms
            .iter()
            .map(|t| Term {
                coeff: t.coeff.conj(),
                power: t.power,
                rate: -t.rate,
            })
            .collect();
        terms.sort_by(|a, b| a.power.cmp(&b.power).then(a.rate.total_cmp(&b.rate)));
        ExpPoly { terms }
    }

    pub fn scale(&self, c: Complex64) -> Self {
        Self::from_terms(
            self.terms
                .iter()
                .map(|t| Term {
                    coeff: t.coeff * c,
                    ..*t
                })
                .collect(),
        )
    }

    /// Multiplies by `e^{iθt}`.
    pub fn shift_rate(&self, theta: f64) -> Self {
        Self::from_terms(
            self.terms
                .iter()
                .map(|t| Term {
                    rate: t.rate + theta,
                    ..*t
                })
                .collect(),
        )
    }

    pub fn add(&self, other: &ExpPoly) -> Self {
        let mut terms = Vec::with_capacity(self.len() + other.len());
        terms.extend_from_slice(&self.terms);
        terms.extend_from_slice(&other.terms);
        Self::from_terms(terms)
    }

    pub fn sub(&self, other: &ExpPoly) -> Self {
        self.add(&other.scale(Complex64::new(-1.0, 0.0)))
    }

    pub fn mul(&self, other: &ExpPoly) -> Result<Self> {
        self.mul_capped(other, DEFAULT_TERM_CAP)
    }

    /// Termwise product. Fails when the raw product would exceed `cap` terms.
    pub fn mul_capped(&self, other: &ExpPoly, cap: usize) -> Result<Self> {
        let raw = self.len().saturating_mul(other.len());
        if raw > cap {
            return Err(InflateError::TermCap {
                cap,
                context: format!("product of {} x {} terms", self.len(), other.len()),
            });
        }
        let mut terms = Vec::with_capacity(raw);
        for a in &self.terms {
            for b in &other.terms {
                terms.push(Term {
                    coeff: a.coeff * b.coeff,
                    power: a.power + b.power,
                    rate: a.rate + b.rate,
                });
            }
        }
        Ok(Self::from_terms(terms))
    }

    /// `t ↦ ∫_0^t e^{iτ·shift}·self(τ) dτ`, exact for every term.
    ///
    /// `horizon` is the largest time at which the result will be evaluated; it
    /// decides when a nearly resonant rate is integrated by series instead of
    /// the closed form, which would cancel catastrophically.
    pub fn duhamel(&self, shift: f64, horizon: f64) -> Self {
        let mut out = Vec::with_capacity(2 * self.len());
        for t in &self.terms {
            duhamel_term(t.coeff, t.power, t.rate + shift, horizon, &mut out);
        }
        Self::from_terms(out)
    }
}

fn duhamel_term(c: Complex64, m: u32, omega: f64, horizon: f64, out: &mut Vec<Term>) {
    if omega.abs() <= PHASE_TOL {
        out.push(Term {
            coeff: c / (m as f64 + 1.0),
            power: m + 1,
            rate: 0.0,
        });
        return;
    }
    if omega.abs() * horizon < SERIES_SWITCH {
        // Σ_n (iω)^n τ^{m+n} / n!, integrated term by term
        let z = I * omega;
        let mut pow = Complex64::new(1.0, 0.0);
        let bound = omega.abs() * horizon.max(f64::MIN_POSITIVE);
        let mut mag = 1.0;
        for n in 0..64u32 {
            let k = m + n + 1;
            out.push(Term {
                coeff: c * pow / k as f64,
                power: k,
                rate: 0.0,
            });
            pow = pow * z / (n + 1) as f64;
            mag *= bound / (n + 1) as f64;
            if mag < 1e-18 {
                break;
            }
        }
        return;
    }
    let iw = I * omega;
    // a_j = (-1)^j m!/(m-j)! / (iω)^{j+1}
    let mut a = c / iw;
    for j in 0..=m {
        out.push(Term {
            coeff: a,
            power: m - j,
            rate: omega,
        });
        if j < m {
            a = -a * (m - j) as f64 / iw;
        }
    }
    // value at τ = 0 is a_m
    out.push(Term {
        coeff: -a,
        power: 0,
        rate: 0.0,
    });
}

/// `∫_0^T e^{itΦ} dt`.
pub fn phase_integral(phi: f64, t: f64) -> Complex64 {
    if phi == 0.0 {
        return Complex64::new(t, 0.0);
    }
    let x = phi * t;
    if x.abs() < SERIES_SWITCH {
        // T Σ (iΦT)^n/(n+1)!
        let z = Complex64::new(0.0, x);
        let mut term = Complex64::new(1.0, 0.0);
        let mut sum = term;
        for n in 1..12 {
            term = term * z / (n + 1) as f64;
            sum += term;
        }
        return sum * t;
    }
    // e^{ix} − 1 = −2 sin²(x/2) + i sin x, divided by iΦ
    let h = (x / 2.0).sin();
    let re = -2.0 * h * h;
    let im = x.sin();
    Complex64::new(im / phi, -re / phi)
}
