//! Resonant frequency tuples, in exact integer arithmetic.
//!
//! A tuple `(k_1, …, k_{2ν+1})` produces `k = Σ_m (−1)^{m+1} k_m` and is resonant
//! when `|k|² = Σ_m (−1)^{m+1} |k_m|²` (slots counted from 1).

use std::collections::BTreeSet;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{InflateError, Result};
use crate::lattice::Frequency;

/// Largest brute-force enumeration accepted.
pub const ENUMERATION_GUARD: f64 = 1e9;
pub const CHARACTERIZATION_MAX_K: i64 = 16;

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ResonantTuple {
    pub freqs: Vec<Frequency>,
    pub output: Frequency,
    /// `|k|² − Σ_odd |k_m|² + Σ_even |k_m|²`, zero for exact resonance.
    pub phase: i64,
}

impl ResonantTuple {
    /// Builds the tuple and its output from alternating slots.
    pub fn from_slots(freqs: Vec<Frequency>) -> Self {
        let mut output = Frequency::zero();
        let mut phase = 0i64;
        for (m, k) in freqs.iter().enumerate() {
            if m % 2 == 0 {
                output = output + *k;
                phase -= k.index_norm_sq();
            } else {
                output = output - *k;
                phase += k.index_norm_sq();
            }
        }
        phase += output.index_norm_sq();
        Self { freqs, output, phase }
    }

    pub fn is_resonant(&self) -> bool {
        self.phase == 0
    }

    /// Both defining identities, recomputed from scratch.
    pub fn check(&self) -> bool {
        let again = Self::from_slots(self.freqs.clone());
        again.output == self.output && again.phase == self.phase
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuinticParam {
    pub a: i64,
    pub b: i64,
    pub p: i64,
    pub q: i64,
}

fn box_points(d: usize, k: i64) -> Vec<Frequency> {
    let side: Vec<i64> = (-k..=k).collect();
    let mut pts = vec![Frequency::zero()];
    for axis in 0..d {
        pts = pts
            .into_iter()
            .flat_map(|p| {
                side.iter().map(move |&x| {
                    let mut a = p.0;
                    a[axis] = x;
                    Frequency(a)
                })
            })
            .collect();
    }
    pts
}

/// All resonant tuples in `R_{d,ν}(k)` with every coordinate in `[−K, K]`.
pub fn enumerate_resonant(d: usize, nu: usize, k: Frequency, range: i64) -> Result<BTreeSet<ResonantTuple>> {
    if !(1..=4).contains(&d) || nu == 0 || range < 0 {
        return Err(InflateError::Config("need 1 <= d <= 4, nu >= 1, K >= 0".into()));
    }
    let slots = 2 * nu + 1;
    let size = ((2 * range + 1) as f64).powi((d * slots) as i32);
    if size > ENUMERATION_GUARD {
        return Err(InflateError::Guard(format!(
            "enumeration of (2K+1)^(d(2nu+1)) = {size:.3e} tuples exceeds {ENUMERATION_GUARD:.0e}; use a smaller K"
        )));
    }
    let pts = box_points(d, range);
    let in_box = |f: &Frequency| f.0[..d].iter().all(|x| x.abs() <= range);
    let found: Vec<Vec<ResonantTuple>> = pts
        .par_iter()
        .map(|first| {
            let mut out = Vec::new();
            let mut cur = vec![*first];
            fill(&pts, &mut cur, slots, k, &in_box, &mut out);
            out
        })
        .collect();
    Ok(found.into_iter().flatten().collect())
}

/// Chooses slots `2..2ν` freely; the last (odd) slot is fixed by the output.
fn fill(
    pts: &[Frequency],
    cur: &mut Vec<Frequency>,
    slots: usize,
    k: Frequency,
    in_box: &impl Fn(&Frequency) -> bool,
    out: &mut Vec<ResonantTuple>,
) {
    if cur.len() == slots - 1 {
        // k = Σ_{odd} − Σ_{even}; the last slot is odd
        let mut last = k;
        for (m, f) in cur.iter().enumerate() {
            last = if m % 2 == 0 { last - *f } else { last + *f };
        }
        if in_box(&last) {
            cur.push(last);
            let t = ResonantTuple::from_slots(cur.clone());
            if t.is_resonant() {
                out.push(t);
            }
            cur.pop();
        }
        return;
    }
    for p in pts {
        cur.push(*p);
        fill(pts, cur, slots, k, in_box, out);
        cur.pop();
    }
}

fn distinct_permutations(v: [i64; 3]) -> BTreeSet<[i64; 3]> {
    let [x, y, z] = v;
    [[x, y, z], [x, z, y], [y, x, z], [y, z, x], [z, x, y], [z, y, x]]
        .into_iter()
        .collect()
}

/// Ordered quintuplets with `{k_1,k_3,k_5} = {ap, bq, (a+b)(p+q)}` and
/// `{k_2,k_4} = {ap+(a+b)q, (a+b)p+bq}`.
pub fn parametrize_quintic(param: QuinticParam) -> BTreeSet<ResonantTuple> {
    let QuinticParam { a, b, p, q } = param;
    let odd = [a * p, b * q, (a + b) * (p + q)];
    let even = [a * p + (a + b) * q, (a + b) * p + b * q];
    let f = |x: i64| Frequency::new(&[x]);
    let mut out = BTreeSet::new();
    for o in distinct_permutations(odd) {
        for e in [even, [even[1], even[0]]] {
            out.insert(ResonantTuple::from_slots(vec![f(o[0]), f(e[0]), f(o[1]), f(e[1]), f(o[2])]));
        }
    }
    out
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CharacterizationReport {
    pub range: i64,
    pub brute_count: usize,
    pub param_count: usize,
    pub equal: bool,
    /// Brute-force tuples the parametrization misses.
    pub only_brute: Vec<ResonantTuple>,
    /// Parametrized tuples the brute force misses.
    pub only_param: Vec<ResonantTuple>,
}

/// Compares `R_{1,2}(0) ∩ [−K, K]^5` with the union of parametrized tuples.
///
/// Parameters range over `|a|, |b|, |p|, |q| <= 2K`: dividing `(p, q)` by its gcd
/// (and moving the factor into `a, b`) keeps every coordinate, and a primitive
/// `(p, q)` with `ap, bq` in `[−K, K]` forces `|a|, |b| <= K` unless `p` or `q`
/// vanishes, in which case the remaining coordinates bound the rest by `2K`.
pub fn verify_characterization(range: i64) -> Result<CharacterizationReport> {
    if !(0..=CHARACTERIZATION_MAX_K).contains(&range) {
        return Err(InflateError::Guard(format!(
            "characterization check limited to K <= {CHARACTERIZATION_MAX_K}"
        )));
    }
    let brute = enumerate_resonant(1, 2, Frequency::zero(), range)?;
    let m = 2 * range;
    let vals: Vec<i64> = (-m..=m).collect();
    let in_box = |t: &ResonantTuple| t.freqs.iter().all(|f| f.0[0].abs() <= range);
    let parts: Vec<BTreeSet<ResonantTuple>> = vals
        .par_iter()
        .map(|&a| {
            let mut acc = BTreeSet::new();
            for &b in &vals {
                for &p in &vals {
                    for &q in &vals {
                        let odd = [a * p, b * q, (a + b) * (p + q)];
                        if odd.iter().any(|x| x.abs() > range) {
                            continue;
                        }
                        for t in parametrize_quintic(QuinticParam { a, b, p, q }) {
                            if in_box(&t) {
                                acc.insert(t);
                            }
                        }
                    }
                }
            }
            acc
        })
        .collect();
    let param: BTreeSet<ResonantTuple> = parts.into_iter().flatten().collect();
    let only_brute: Vec<_> = brute.difference(&param).cloned().collect();
    let only_param: Vec<_> = param.difference(&brute).cloned().collect();
    Ok(CharacterizationReport {
        range,
        brute_count: brute.len(),
        param_count: param.len(),
        equal: only_brute.is_empty() && only_param.is_empty(),
        only_brute,
        only_param,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TupleCount {
    pub total: usize,
    pub resonant: usize,
}

/// Tuples in `Σ^p` with `Σ_{l<=q} ξ_l − Σ_{m>q} ξ_m = output`, each with its phase
/// `|output|² − Σ_{l<=q}|ξ_l|² + Σ_{m>q}|ξ_m|²` in index units.
pub fn constraint_tuples(
    sigma: &BTreeSet<Frequency>,
    p: usize,
    q: usize,
    output: Frequency,
) -> Result<Vec<(Vec<Frequency>, i64)>> {
    if sigma.len() > 8 || q > p || p == 0 {
        return Err(InflateError::Config("need |Sigma| <= 8 and 0 <= q <= p".into()));
    }
    let elems: Vec<Frequency> = sigma.iter().copied().collect();
    let mut out = Vec::new();
    let mut idx = vec![0usize; p];
    if elems.is_empty() {
        return Ok(out);
    }
    loop {
        let tuple: Vec<Frequency> = idx.iter().map(|&i| elems[i]).collect();
        let mut sum = Frequency::zero();
        let mut phase = output.index_norm_sq();
        for (l, f) in tuple.iter().enumerate() {
            if l < q {
                sum = sum + *f;
                phase -= f.index_norm_sq();
            } else {
                sum = sum - *f;
                phase += f.index_norm_sq();
            }
        }
        if sum == output {
            out.push((tuple, phase));
        }
        // odometer
        let mut pos = p;
        loop {
            if pos == 0 {
                return Ok(out);
            }
            pos -= 1;
            idx[pos] += 1;
            if idx[pos] < elems.len() {
                break;
            }
            idx[pos] = 0;
        }
    }
}

pub fn constraint_tuple_count(
    sigma: &BTreeSet<Frequency>,
    p: usize,
    q: usize,
    output: Frequency,
) -> Result<TupleCount> {
    let tuples = constraint_tuples(sigma, p, q, output)?;
    Ok(TupleCount {
        total: tuples.len(),
        resonant: tuples.iter().filter(|(_, ph)| *ph == 0).count(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn f(x: i64) -> Frequency {
        Frequency::new(&[x])
    }

    fn tuple(v: &[i64]) -> ResonantTuple {
        ResonantTuple::from_slots(v.iter().map(|&x| f(x)).collect())
    }

    #[test]
    fn known_quintic_tuple() {
        let set = enumerate_resonant(1, 2, f(0), 4).unwrap();
        assert!(set.contains(&tuple(&[1, 3, 1, 3, 4])));
    }

    #[test]
    fn cubic_zero_mode_is_trivial() {
        // k1 − k2 + k3 = 0 and k1² − k2² + k3² = 0 force k1 = 0 or k3 = 0
        let set = enumerate_resonant(1, 1, f(0), 2).unwrap();
        for t in &set {
            let k: Vec<i64> = t.freqs.iter().map(|x| x.0[0]).collect();
            assert!(k[0] == 0 || k[2] == 0, "{k:?}");
        }
        let set1 = enumerate_resonant(1, 1, f(0), 1).unwrap();
        assert!(set1.iter().all(|t| {
            let k: Vec<i64> = t.freqs.iter().map(|x| x.0[0]).collect();
            k.contains(&0) || k[0] == k[1] || k[1] == k[2] || k[0] == k[2]
        }));
    }

    #[test]
    fn guard_refuses_large_ranges() {
        assert!(matches!(
            enumerate_resonant(1, 2, f(0), 100),
            Err(InflateError::Guard(_))
        ));
    }

    #[test]
    fn parametrization_examples() {
        let one = parametrize_quintic(QuinticParam { a: 1, b: 1, p: 1, q: 1 });
        assert!(one.contains(&tuple(&[1, 3, 1, 3, 4])));
        let two = parametrize_quintic(QuinticParam { a: -1, b: 2, p: -2, q: 1 });
        assert!(two.contains(&tuple(&[2, 3, 2, 0, -1])));
        for (p, q) in [(2, 1), (3, 2), (5, -1)] {
            let fam = parametrize_quintic(QuinticParam { a: -q, b: p, p, q });
            assert!(fam.contains(&tuple(&[p * q, -q * q, -p * q, p * p, p * p - q * q])));
        }
        assert!(one.iter().chain(two.iter()).all(|t| t.is_resonant() && t.output == f(0)));
    }

    #[test]
    fn characterization_small() {
        let r = verify_characterization(3).unwrap();
        assert!(r.equal, "{r:?}");
        assert!(r.brute_count > 0);
    }

    #[test]
    fn quartic_counts() {
        let n = 64;
        let sigma: BTreeSet<Frequency> = [-n, 2 * n, 3 * n].into_iter().map(f).collect();
        assert_eq!(
            constraint_tuple_count(&sigma, 4, 1, f(0)).unwrap(),
            TupleCount { total: 3, resonant: 3 }
        );
        assert_eq!(
            constraint_tuple_count(&sigma, 4, 2, f(0)).unwrap(),
            TupleCount { total: 15, resonant: 15 }
        );
        let single: BTreeSet<Frequency> = [f(n)].into_iter().collect();
        assert_eq!(
            constraint_tuple_count(&single, 2, 1, f(0)).unwrap(),
            TupleCount { total: 1, resonant: 1 }
        );
    }
}
