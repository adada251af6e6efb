//! Sobolev, modulation, Besov-type and auxiliary norms of fixed-time fields.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{InflateError, Result};
use crate::lattice::{FieldSnapshot, MAX_DIM};

/// Slack used when assigning a point on a box face to its box.
const BOX_EPS: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NormSpec {
    Hs { s: f64 },
    ModA { a: f64 },
    ModRhoA { rho: f64, a: f64 },
    AnisoMod { n: f64 },
    DBracket { alpha: f64, p: f64, q: f64 },
    Ds { s: f64, p: f64, q: f64 },
    LowFreqL2 { cutoff: f64 },
}

impl NormSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(InflateError::Config(m.to_string()));
        match *self {
            NormSpec::ModA { a } | NormSpec::ModRhoA { a, .. } if !(a > 0.0) => bad("box size must be positive"),
            NormSpec::ModRhoA { rho, .. } if !(rho >= 1.0) => bad("modulation exponent must be >= 1"),
            NormSpec::AnisoMod { n } if !(n > 0.0) => bad("N must be positive"),
            NormSpec::DBracket { p, q, .. } | NormSpec::Ds { p, q, .. }
                if !(1.0..f64::INFINITY).contains(&p) || !(q >= 1.0) =>
            {
                bad("D-norms need 1 <= p < inf and 1 <= q <= inf")
            }
            NormSpec::LowFreqL2 { cutoff } if !(cutoff > 0.0) => bad("cutoff must be positive"),
            _ => Ok(()),
        }
    }

    pub fn evaluate(&self, f: &FieldSnapshot) -> Result<f64> {
        self.validate()?;
        match *self {
            NormSpec::Hs { s } => Ok(hs_norm(f, s)),
            NormSpec::ModA { a } => Ok(modulation_norm(f, a)),
            NormSpec::ModRhoA { rho, a } => m_rho_norm(f, rho, a),
            NormSpec::AnisoMod { n } => aniso_mod_norm(f, n),
            NormSpec::DBracket { .. } | NormSpec::Ds { .. } => d_norm(f, self),
            NormSpec::LowFreqL2 { cutoff } => Ok(lowfreq_l2(f, cutoff)),
        }
    }

    /// Short name used as a column suffix in tabular output.
    pub fn label(&self) -> String {
        match *self {
            NormSpec::Hs { s } => format!("H^{s}"),
            NormSpec::ModA { a } => format!("M_{a}"),
            NormSpec::ModRhoA { rho, a } => format!("M^{rho}_{a}"),
            NormSpec::AnisoMod { n } => format!("Mtilde_{n}"),
            NormSpec::DBracket { alpha, p, q } => format!("D^[{alpha}]_{p},{q}"),
            NormSpec::Ds { s, p, q } => format!("D^{s}_{p},{q}"),
            NormSpec::LowFreqL2 { cutoff } => format!("L2(|xi|<={cutoff})"),
        }
    }
}

fn bracket_sq(f: &FieldSnapshot, k: &crate::lattice::Frequency) -> f64 {
    1.0 + f.domain.norm_sq(k)
}

/// `(Σ w ⟨ξ⟩^{2s} |û(ξ)|²)^{1/2}`
pub fn hs_norm(f: &FieldSnapshot, s: f64) -> f64 {
    // fold from +0: an empty f64 `sum` is −0
    let sum: f64 = f
        .values
        .iter()
        .map(|(k, c)| bracket_sq(f, k).powf(s) * c.norm_sqr())
        .fold(0.0, |a, b| a + b);
    (f.weight() * sum).sqrt()
}

/// Sum over boxes of the `L^ρ` mass in each box; box `j` in direction `i` is
/// `[(j − 1/2) w_i, (j + 1/2) w_i)`.
fn box_sum(f: &FieldSnapshot, widths: &[f64; MAX_DIM], rho: f64) -> f64 {
    let d = f.domain.d;
    let w = f.weight();
    let mut boxes: BTreeMap<[i64; MAX_DIM], f64> = BTreeMap::new();
    for (k, c) in &f.values {
        let x = f.domain.coords(k);
        let mut b = [0i64; MAX_DIM];
        for i in 0..d {
            b[i] = (x[i] / widths[i] + 0.5 + BOX_EPS).floor() as i64;
        }
        *boxes.entry(b).or_default() += w * c.norm().powf(rho);
    }
    boxes.values().map(|m| m.powf(1.0 / rho)).fold(0.0, |a, b| a + b)
}

/// `Σ_{ξ ∈ Aℤ^d} ‖f̂‖_{L²(ξ + Q_A)}`
pub fn modulation_norm(f: &FieldSnapshot, a: f64) -> f64 {
    box_sum(f, &[a; MAX_DIM], 2.0)
}

/// `Σ_{ξ ∈ Aℤ} ‖f̂‖_{L^ρ(ξ + I_A)}`, one-dimensional.
pub fn m_rho_norm(f: &FieldSnapshot, rho: f64, a: f64) -> Result<f64> {
    if !(rho >= 1.0) {
        return Err(InflateError::Config(format!("exponent {rho} < 1")));
    }
    if f.domain.d != 1 {
        return Err(InflateError::Config("M^rho_A is defined for d = 1".into()));
    }
    Ok(box_sum(f, &[a; MAX_DIM], rho))
}

/// Modulation norm with unit boxes except width `1/N` in the last direction.
pub fn aniso_mod_norm(f: &FieldSnapshot, n: f64) -> Result<f64> {
    let d = f.domain.d;
    if f.domain.is_pure_torus() {
        return Err(InflateError::Config(
            "anisotropic modulation norm needs a quadrature direction".into(),
        ));
    }
    if d > 3 {
        return Err(InflateError::Config("anisotropic modulation norm needs d <= 3".into()));
    }
    let mut widths = [1.0; MAX_DIM];
    widths[d - 1] = 1.0 / n;
    Ok(box_sum(f, &widths, 2.0))
}

/// Index `j` of the dyadic block `2^j <= ⟨ξ⟩ < 2^{j+1}`.
fn dyadic_block(bracket: f64) -> i32 {
    let mut j = bracket.log2().floor() as i32;
    while j > 0 && 2f64.powi(j) > bracket {
        j -= 1;
    }
    while 2f64.powi(j + 1) <= bracket {
        j += 1;
    }
    j.max(0)
}

/// `D^{[α]}_{p,q}` or `D^s_{p,q}` (natural logarithm, `⟨log N⟩ = (1 + log² N)^{1/2}`).
pub fn d_norm(f: &FieldSnapshot, spec: &NormSpec) -> Result<f64> {
    let (p, q) = match *spec {
        NormSpec::DBracket { p, q, .. } | NormSpec::Ds { p, q, .. } => (p, q),
        _ => return Err(InflateError::Config("not a D-norm".into())),
    };
    spec.validate()?;
    if f.domain.d != 1 {
        return Err(InflateError::Config("D-norms are defined for d = 1".into()));
    }
    let w = f.weight();
    let mut blocks: BTreeMap<i32, f64> = BTreeMap::new();
    for (k, c) in &f.values {
        let j = dyadic_block(bracket_sq(f, k).sqrt());
        *blocks.entry(j).or_default() += w * c.norm().powf(p);
    }
    let weighted = blocks.iter().map(|(&j, &mass)| {
        let n = 2f64.powi(j);
        let factor = match *spec {
            NormSpec::DBracket { alpha, .. } => {
                let l = n.ln();
                n.powf(-1.0 / p) * (1.0 + l * l).sqrt().powf(alpha)
            }
            NormSpec::Ds { s, .. } => n.powf(s),
            _ => unreachable!(),
        };
        factor * mass.powf(1.0 / p)
    });
    Ok(if q.is_infinite() {
        weighted.fold(0.0, f64::max)
    } else {
        weighted.map(|v| v.powf(q)).sum::<f64>().powf(1.0 / q)
    })
}

/// Lattice-weighted `L²` mass on `|ξ| <= cutoff`.
pub fn lowfreq_l2(f: &FieldSnapshot, cutoff: f64) -> f64 {
    let c2 = cutoff * cutoff;
    let sum: f64 = f
        .values
        .iter()
        .filter(|(k, _)| f.domain.norm_sq(k) <= c2 * (1.0 + 1e-12))
        .map(|(_, c)| c.norm_sqr())
        .fold(0.0, |a, b| a + b);
    (f.weight() * sum).sqrt()
}

fn sphere_area(d: usize) -> f64 {
    match d {
        1 => 2.0,
        2 => 2.0 * PI,
        3 => 4.0 * PI,
        4 => 2.0 * PI * PI,
        _ => unreachable!(),
    }
}

/// `‖⟨ξ⟩^s‖_{L²(|ξ| <= A)}` over `R^d`, by adaptive quadrature in the radius.
pub fn f_s(a: f64, s: f64, d: usize) -> Result<f64> {
    if !(s < 0.0) {
        return Err(InflateError::Config(format!("f_s needs s < 0, got {s}")));
    }
    if !(a >= 0.0) || !(1..=MAX_DIM).contains(&d) {
        return Err(InflateError::Config("f_s needs A >= 0 and 1 <= d <= 4".into()));
    }
    if a == 0.0 {
        return Ok(0.0);
    }
    let g = |r: f64| r.powi(d as i32 - 1) * (1.0 + r * r).powf(s);
    // split at 1 so the tail piece is smooth on a long interval
    let pieces = if a > 1.0 { vec![(0.0, 1.0), (1.0, a)] } else { vec![(0.0, a)] };
    let mut total = 0.0;
    for (lo, hi) in pieces {
        let rough = quadrature::integrate(g, lo, hi, 1e-6).integral.abs();
        total += quadrature::integrate(g, lo, hi, 1e-14 * rough.max(1e-300)).integral;
    }
    Ok((sphere_area(d) * total).sqrt())
}
