//! Dense pseudospectral reference integrator on the truncated torus lattice.
//!
//! Kept separate from the sparse Picard engine on purpose: it shares no
//! convolution or phase code with it, so agreement between the two is evidence.

use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{InflateError, Result};
use crate::lattice::{FieldSnapshot, Frequency, SpectralField};
use crate::norms::hs_norm;
use crate::picard::{series_sum, IterateTable, NonlinearitySpec, TRUST_LIMIT};
use crate::scenarios::{build_phi, Scenario};

/// Largest retained lattice, `(2·cutoff+1)^d`.
pub const MAX_RETAINED: usize = 1 << 24;
/// `ℓ¹` growth that aborts a run.
pub const BLOWUP_FACTOR: f64 = 1e3;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    /// Keep `|ξ_i| <= cutoff` in every direction (lattice index units).
    pub cutoff: usize,
    pub dt: f64,
    pub steps: usize,
}

impl SolverConfig {
    /// `steps` equal steps over `[0, t]`.
    pub fn for_horizon(cutoff: usize, t: f64, steps: usize) -> Self {
        Self {
            cutoff,
            dt: t / steps as f64,
            steps,
        }
    }

    pub fn horizon(&self) -> f64 {
        self.dt * self.steps as f64
    }

    fn halved(&self) -> Self {
        Self {
            cutoff: self.cutoff,
            dt: self.dt / 2.0,
            steps: self.steps * 2,
        }
    }
}

/// Separable d-dimensional FFT on a cube of side `len`.
struct Grid {
    d: usize,
    len: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
    scratch: Vec<Complex64>,
    line: Vec<Complex64>,
}

impl Grid {
    fn new(d: usize, len: usize) -> Self {
        let mut planner = FftPlanner::new();
        let forward = planner.plan_fft_forward(len);
        let inverse = planner.plan_fft_inverse(len);
        let scratch_len = forward
            .get_inplace_scratch_len()
            .max(inverse.get_inplace_scratch_len());
        Self {
            d,
            len,
            forward,
            inverse,
            scratch: vec![Complex64::new(0.0, 0.0); scratch_len],
            line: vec![Complex64::new(0.0, 0.0); len],
        }
    }

    fn size(&self) -> usize {
        self.len.pow(self.d as u32)
    }

    fn flat(&self, idx: &[i64]) -> usize {
        let l = self.len as i64;
        idx.iter().fold(0usize, |acc, &i| acc * self.len + i.rem_euclid(l) as usize)
    }

    fn transform(&mut self, data: &mut [Complex64], inverse: bool) {
        let plan = if inverse { &self.inverse } else { &self.forward };
        if self.d == 1 {
            plan.process_with_scratch(data, &mut self.scratch);
            return;
        }
        let n = self.len;
        for axis in 0..self.d {
            let stride = n.pow((self.d - 1 - axis) as u32);
            let block = stride * n;
            for start in (0..data.len()).step_by(block) {
                for offset in 0..stride {
                    let base = start + offset;
                    for (j, slot) in self.line.iter_mut().enumerate() {
                        *slot = data[base + j * stride];
                    }
                    plan.process_with_scratch(&mut self.line, &mut self.scratch);
                    for (j, v) in self.line.iter().enumerate() {
                        data[base + j * stride] = *v;
                    }
                }
            }
        }
    }
}

struct Integrator<'a> {
    nl: &'a NonlinearitySpec,
    grid: Grid,
    /// Flat grid index and `|ξ|²` of every retained mode.
    modes: Vec<(usize, f64)>,
    dense: Vec<Complex64>,
    phys: Vec<Complex64>,
}

impl Integrator<'_> {
    /// `e^{it|ξ|²}` on the retained modes.
    fn rotation(&self, t: f64) -> Vec<Complex64> {
        self.modes
            .iter()
            .map(|&(_, phase)| Complex64::from_polar(1.0, phase * t))
            .collect()
    }

    /// `dw/dt = −i e^{it|ξ|²} F̂(e^{−it|ξ|²} w)` on the retained modes, `rot = e^{it|ξ|²}`.
    fn rhs(&mut self, rot: &[Complex64], w: &[Complex64]) -> Vec<Complex64> {
        self.dense.iter_mut().for_each(|z| *z = Complex64::new(0.0, 0.0));
        for ((&(flat, _), &c), e) in self.modes.iter().zip(w).zip(rot) {
            self.dense[flat] = c * e.conj();
        }
        self.grid.transform(&mut self.dense, true);
        for (out, &u) in self.phys.iter_mut().zip(&self.dense) {
            let ub = u.conj();
            let mut acc = Complex64::new(0.0, 0.0);
            for term in self.nl.terms() {
                acc += term.nu * u.powu(term.q as u32) * ub.powu((term.p - term.q) as u32);
            }
            *out = acc;
        }
        self.grid.transform(&mut self.phys, false);
        let norm = Complex64::new(0.0, -1.0 / self.grid.size() as f64);
        self.modes
            .iter()
            .zip(rot)
            .map(|(&(flat, _), e)| norm * self.phys[flat] * e)
            .collect()
    }
}

/// Smallest `2^a 3^b 5^c` at least `min`; products of `p` retained modes then
/// never alias back into the retained range.
fn smooth_len(min: usize) -> usize {
    let mut best = min.next_power_of_two();
    let mut p3 = 1;
    while p3 < best {
        let mut p35 = p3;
        while p35 < best {
            let mut n = p35;
            while n < min {
                n *= 2;
            }
            best = best.min(n);
            p35 *= 5;
        }
        p3 *= 3;
    }
    best
}

fn axpy(base: &[Complex64], k: &[Complex64], h: f64) -> Vec<Complex64> {
    base.iter().zip(k).map(|(b, k)| b + k * h).collect()
}

fn l1(v: &[Complex64]) -> f64 {
    v.iter().map(|z| z.norm()).sum()
}

/// Integrates `i ∂_t u + Δu = F(u, ū)` from `φ` to `T = dt·steps`, exact in
/// the linear part, classical RK4 in the nonlinear one.
pub fn evolve(phi: &SpectralField, nl: &NonlinearitySpec, cfg: &SolverConfig) -> Result<FieldSnapshot> {
    let domain = phi.domain();
    if !domain.is_pure_torus() {
        return Err(InflateError::Config("the reference solver runs on the torus only".into()));
    }
    if cfg.cutoff == 0 || cfg.steps == 0 || !(cfg.dt > 0.0 && cfg.dt.is_finite()) {
        return Err(InflateError::Config("solver needs cutoff, steps and dt > 0".into()));
    }
    let d = domain.d;
    let side = 2 * cfg.cutoff + 1;
    if side.checked_pow(d as u32).is_none_or(|m| m > MAX_RETAINED) {
        return Err(InflateError::Config(format!(
            "retained lattice (2·{}+1)^{d} exceeds 2^24 modes",
            cfg.cutoff
        )));
    }
    let cutoff = cfg.cutoff as i64;
    for (k, _) in phi.iter() {
        if k.0.iter().any(|i| i.abs() > cutoff) {
            return Err(InflateError::Config(format!(
                "datum frequency {:?} lies outside the cutoff {cutoff}",
                k.to_vec(d)
            )));
        }
    }
    let len = smooth_len((nl.p_max() + 1) * cfg.cutoff + 1);
    let grid = Grid::new(d, len);

    let mut modes = Vec::new();
    let mut freqs = Vec::new();
    let mut idx = vec![-cutoff; d];
    'outer: loop {
        let f = Frequency::new(&idx);
        modes.push((grid.flat(&idx), domain.norm_sq(&f)));
        freqs.push(f);
        for axis in (0..d).rev() {
            idx[axis] += 1;
            if idx[axis] <= cutoff {
                continue 'outer;
            }
            idx[axis] = -cutoff;
        }
        break;
    }
    let mut w: Vec<Complex64> = freqs
        .iter()
        .map(|f| phi.get(f).map_or(Complex64::new(0.0, 0.0), |e| e.eval(0.0)))
        .collect();
    let size = grid.size();
    let mut it = Integrator {
        nl,
        grid,
        modes,
        dense: vec![Complex64::new(0.0, 0.0); size],
        phys: vec![Complex64::new(0.0, 0.0); size],
    };
    let initial = l1(&w);
    let h = cfg.dt;
    let mut rot_start = it.rotation(0.0);
    for n in 0..cfg.steps {
        let t = n as f64 * h;
        let rot_mid = it.rotation(t + h / 2.0);
        let rot_end = it.rotation(t + h);
        let k1 = it.rhs(&rot_start, &w);
        let k2 = it.rhs(&rot_mid, &axpy(&w, &k1, h / 2.0));
        let k3 = it.rhs(&rot_mid, &axpy(&w, &k2, h / 2.0));
        let k4 = it.rhs(&rot_end, &axpy(&w, &k3, h));
        rot_start = rot_end;
        for (i, wi) in w.iter_mut().enumerate() {
            *wi += (k1[i] + (k2[i] + k3[i]) * 2.0 + k4[i]) * (h / 6.0);
        }
        let growth = l1(&w) / initial;
        if !(growth <= BLOWUP_FACTOR) {
            return Err(InflateError::BlowUp {
                t: (n + 1) as f64 * h,
                growth,
            });
        }
    }
    let t_end = cfg.horizon();
    let pairs = freqs
        .into_iter()
        .zip(w)
        .zip(&it.modes)
        .filter(|((_, c), _)| *c != Complex64::new(0.0, 0.0))
        .map(|((f, c), &(_, phase))| (f, c * Complex64::from_polar(1.0, -phase * t_end)));
    Ok(FieldSnapshot::from_pairs(domain.clone(), phi.cell_size(), pairs))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeriesComparison {
    pub l2_rel_err: f64,
    pub hs_rel_err: f64,
    /// `log₂(‖u_dt − u_{dt/2}‖ / ‖u_{dt/2} − u_{dt/4}‖)`
    pub dt_order_estimate: f64,
    pub rho_hat: f64,
}

/// Series to order `k_max` against the solver at `dt`, plus an order estimate
/// from runs at `dt/2` and `dt/4`.
pub fn compare_series(sc: &Scenario, k_max: usize, cfg: &SolverConfig) -> Result<SeriesComparison> {
    if (cfg.horizon() - sc.t).abs() > 1e-12 * sc.t {
        return Err(InflateError::Config(format!(
            "dt·steps = {} does not match T = {}",
            cfg.horizon(),
            sc.t
        )));
    }
    let phi = build_phi(sc)?;
    let mut table = IterateTable::new(phi.clone(), sc.nonlinearity.clone(), sc.t);
    table.populate(k_max)?;
    let series = series_sum(&table, sc.t, k_max)?;
    if series.tail_ratio >= TRUST_LIMIT {
        return Err(InflateError::Divergence {
            rho_hat: series.tail_ratio,
        });
    }
    let coarse = evolve(&phi, &sc.nonlinearity, cfg)?;
    let half = cfg.halved();
    let mid = evolve(&phi, &sc.nonlinearity, &half)?;
    let fine = evolve(&phi, &sc.nonlinearity, &half.halved())?;
    let s = &series.field;
    let diff = coarse.sub(s);
    let order = (coarse.sub(&mid).l2_norm() / mid.sub(&fine).l2_norm()).log2();
    Ok(SeriesComparison {
        l2_rel_err: diff.l2_norm() / s.l2_norm(),
        hs_rel_err: hs_norm(&diff, sc.s) / hs_norm(s, sc.s),
        dt_order_estimate: order,
        rho_hat: series.tail_ratio,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exppoly::ExpPoly;
    use crate::lattice::DomainSpec;

    fn single_mode(c: Complex64, n: i64) -> SpectralField {
        let mut f = SpectralField::new(DomainSpec::torus(1), 1.0);
        f.insert(Frequency::new(&[n]), ExpPoly::constant(c));
        f
    }

    #[test]
    fn single_mode_cubic_phase() {
        // u = c e^{i(nx − (n² + |c|²)t)} solves i u_t + u_xx = |u|²u.
        let c = Complex64::new(0.6, 0.3);
        let nl = NonlinearitySpec::single(3, 2, Complex64::new(1.0, 0.0)).unwrap();
        let cfg = SolverConfig::for_horizon(8, 0.1, 200);
        let out = evolve(&single_mode(c, 3), &nl, &cfg).unwrap();
        let exact = c * Complex64::from_polar(1.0, -(9.0 + c.norm_sqr()) * 0.1);
        assert!((out.get(&Frequency::new(&[3])) - exact).norm() < 1e-8);
        let rest: f64 = out
            .values
            .iter()
            .filter(|(k, _)| k.0[0] != 3)
            .map(|(_, v)| v.norm())
            .sum();
        assert!(rest < 1e-12);
    }

    #[test]
    fn two_dimensional_single_mode() {
        let c = Complex64::new(0.4, 0.0);
        let mut f = SpectralField::new(DomainSpec::torus(2), 1.0);
        f.insert(Frequency::new(&[1, -2]), ExpPoly::constant(c));
        let nl = NonlinearitySpec::single(3, 2, Complex64::new(1.0, 0.0)).unwrap();
        let out = evolve(&f, &nl, &SolverConfig::for_horizon(4, 0.05, 100)).unwrap();
        let exact = c * Complex64::from_polar(1.0, -(5.0 + 0.16) * 0.05);
        assert!((out.get(&Frequency::new(&[1, -2])) - exact).norm() < 1e-9);
    }

    #[test]
    fn smooth_lengths() {
        assert_eq!(smooth_len(81921), 82944);
        assert_eq!(smooth_len(17), 18);
        assert_eq!(smooth_len(64), 64);
        assert_eq!(smooth_len(1), 1);
    }

    #[test]
    fn rejects_out_of_cutoff_data() {
        let nl = NonlinearitySpec::single(2, 1, Complex64::new(1.0, 0.0)).unwrap();
        let f = single_mode(Complex64::new(1.0, 0.0), 9);
        assert!(evolve(&f, &nl, &SolverConfig::for_horizon(8, 0.1, 10)).is_err());
    }

    #[test]
    fn blow_up_guard() {
        let nl = NonlinearitySpec::single(2, 2, Complex64::new(0.0, 1.0)).unwrap();
        // ODE u' = u² at the zero mode blows up at t = 1/u0.
        let f = single_mode(Complex64::new(1.0, 0.0), 0);
        let err = evolve(&f, &nl, &SolverConfig::for_horizon(4, 1.5, 3000)).unwrap_err();
        assert!(matches!(err, InflateError::BlowUp { .. }));
    }
}
