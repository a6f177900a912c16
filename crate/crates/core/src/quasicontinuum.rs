//! One golden-rule cell: a single state coupled to a finite uniformly spaced
//! quasi-continuum, solved exactly through the arrowhead eigenproblem, plus
//! the deviation estimators built on the exact survival amplitude (initial
//! slip, spectral-asymmetry distortion, Lamb shift).
//!
//! The initial state sits at energy 0 in its rotating frame; continuum level
//! k has energy k * delta_omega for k = -K..=M, so the band extends omega =
//! K * delta_omega below and Omega = M * delta_omega above the state.

use num_complex::Complex64;
use rayon::prelude::*;

use crate::arrowhead::Arrowhead;
use crate::error::{Error, Result};

/// Couplings of the state to the continuum levels.
#[derive(Debug, Clone, PartialEq)]
pub enum Couplings {
    /// Flat spectrum: every level couples with strength g.
    Uniform(f64),
    /// One entry per level, index 0 at k = -K (the lowest level).
    PerLevel(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuasiContinuumSpec {
    pub delta_omega: f64,
    /// K: levels below the state's energy; band depth omega = K * delta_omega.
    pub levels_below: usize,
    /// M: levels above; band height Omega = M * delta_omega.
    pub levels_above: usize,
    pub couplings: Couplings,
}

impl QuasiContinuumSpec {
    pub fn uniform(delta_omega: f64, levels_below: usize, levels_above: usize, g: f64) -> Result<Self> {
        Self::validate(delta_omega, levels_below, levels_above)?;
        if !(g > 0.0) {
            return Err(Error::domain(format!("coupling must be positive, got {g}")));
        }
        Ok(Self {
            delta_omega,
            levels_below,
            levels_above,
            couplings: Couplings::Uniform(g),
        })
    }

    pub fn per_level(
        delta_omega: f64,
        levels_below: usize,
        levels_above: usize,
        gs: Vec<f64>,
    ) -> Result<Self> {
        Self::validate(delta_omega, levels_below, levels_above)?;
        if gs.len() != levels_below + levels_above + 1 {
            return Err(Error::dimension(format!(
                "{} couplings for {} levels",
                gs.len(),
                levels_below + levels_above + 1
            )));
        }
        if !gs.iter().all(|g| g.is_finite()) {
            return Err(Error::domain("couplings must be finite"));
        }
        if gs.iter().all(|&g| g == 0.0) {
            return Err(Error::domain("at least one coupling must be nonzero"));
        }
        Ok(Self {
            delta_omega,
            levels_below,
            levels_above,
            couplings: Couplings::PerLevel(gs),
        })
    }

    fn validate(delta_omega: f64, _levels_below: usize, levels_above: usize) -> Result<()> {
        if !(delta_omega > 0.0) {
            return Err(Error::domain(format!(
                "level spacing must be positive, got {delta_omega}"
            )));
        }
        if levels_above < 1 {
            return Err(Error::domain("need at least one level above the state"));
        }
        Ok(())
    }

    /// Number of continuum levels K + M + 1.
    pub fn level_count(&self) -> usize {
        self.levels_below + self.levels_above + 1
    }

    /// Band depth below the state, omega = K * delta_omega.
    pub fn omega_below(&self) -> f64 {
        self.levels_below as f64 * self.delta_omega
    }

    /// Band height above the state, Omega = M * delta_omega.
    pub fn omega_above(&self) -> f64 {
        self.levels_above as f64 * self.delta_omega
    }

    pub fn arrowhead(&self) -> Result<Arrowhead> {
        let offset = -(self.levels_below as f64) * self.delta_omega;
        match &self.couplings {
            Couplings::Uniform(g) => Arrowhead::uniform_grid(
                0.0,
                offset,
                self.delta_omega,
                self.level_count(),
                *g,
                &[],
            ),
            Couplings::PerLevel(gs) => {
                let poles = (0..self.level_count())
                    .map(|i| offset + i as f64 * self.delta_omega)
                    .collect();
                Arrowhead::new(0.0, poles, gs.clone())
            }
        }
    }
}

/// Eigenvalues (ascending, length K + M + 2) with the squared head component
/// of each eigenvector.
#[derive(Debug, Clone)]
pub struct EigenSolution {
    pub eigenvalues: Vec<f64>,
    pub head_weights: Vec<f64>,
}

pub fn solve_arrowhead(spec: &QuasiContinuumSpec) -> Result<EigenSolution> {
    let sol = spec.arrowhead()?.solve()?;
    Ok(EigenSolution {
        eigenvalues: sol.eigenvalues,
        head_weights: sol.head_weights,
    })
}

/// Closed-form head weight g^2 / [ (pi g^2/d)^2 (1 + (d/(g pi))^2) + lambda^2 ],
/// the Lorentzian the exact weights approach for a dense spectrum.
pub fn analytic_head_weight(lambda: f64, g: f64, delta_omega: f64) -> f64 {
    let gamma_d = std::f64::consts::PI * g * g / delta_omega;
    let correction = 1.0 + (delta_omega / (g * std::f64::consts::PI)).powi(2);
    g * g / (gamma_d * gamma_d * correction + lambda * lambda)
}

/// Survival amplitude d(t) with its population P = |d|^2.
///
/// Eigensolution-derived traces start at P(0) = 1 (completeness); traces
/// from the continuum-limit approximation may start slightly below 1, so
/// the constructor checks only the [0, 1] range.
#[derive(Debug, Clone)]
pub struct AmplitudeTrace {
    pub times: Vec<f64>,
    pub amplitude: Vec<Complex64>,
    pub population: Vec<f64>,
}

impl AmplitudeTrace {
    pub fn new(times: Vec<f64>, amplitude: Vec<Complex64>) -> Result<Self> {
        if times.len() != amplitude.len() {
            return Err(Error::dimension(format!(
                "{} times vs {} amplitudes",
                times.len(),
                amplitude.len()
            )));
        }
        for w in times.windows(2) {
            if !(w[1] > w[0]) {
                return Err(Error::domain("times must be strictly increasing"));
            }
        }
        let population: Vec<f64> = amplitude.iter().map(|d| d.norm_sqr()).collect();
        for (&p, &t) in population.iter().zip(&times) {
            if !(p <= 1.0 + 1e-9) {
                return Err(Error::numerical(format!(
                    "population {p} exceeds 1 at t = {t}"
                )));
            }
        }
        Ok(Self {
            times,
            amplitude,
            population,
        })
    }
}

/// d(t) = sum_n w_n e^{-i lambda_n t}. Direct summation over all modes, in
/// fixed index order per time point; time points evaluate in parallel.
pub fn amplitude_series(sol: &EigenSolution, times: &[f64]) -> Result<AmplitudeTrace> {
    if sol.eigenvalues.len() != sol.head_weights.len() {
        return Err(Error::dimension("eigenvalue/weight length mismatch"));
    }
    let amplitude: Vec<Complex64> = times
        .par_iter()
        .map(|&t| {
            let mut re = 0.0;
            let mut im = 0.0;
            for (&lam, &w) in sol.eigenvalues.iter().zip(&sol.head_weights) {
                if w == 0.0 {
                    continue;
                }
                let (s, c) = (lam * t).sin_cos();
                re += w * c;
                im -= w * s;
            }
            Complex64::new(re, im)
        })
        .collect();
    AmplitudeTrace::new(times.to_vec(), amplitude)
}

/// tau = 2 pi / Omega, the time the survival probability needs to reach its
/// golden-rule slope.
pub fn markovian_timescale(omega_above: f64) -> f64 {
    2.0 * std::f64::consts::PI / omega_above
}

/// Relative tolerance on |dP/dt + gamma P| / (gamma P) below which the decay
/// counts as settled onto the golden-rule slope.
pub const LAG_SETTLE_TOL: f64 = 0.1;

#[derive(Debug, Clone, Copy)]
pub struct MarkovianLag {
    /// First time after which dP/dt stays within 10% of -gamma P for the
    /// rest of the trace. The instantaneous rate rings around the
    /// golden-rule value with a 1/t envelope, so a single zero crossing
    /// happens much earlier than the rate actually becomes reliable.
    pub lag: f64,
    /// Measured d''(0) of the amplitude; approaches -gamma Omega / pi for a
    /// band reaching Omega above the state.
    pub initial_curvature: f64,
}

/// Finds the time the population's log-slope settles onto the golden-rule
/// rate. The trace must start before the lag and extend well past it.
pub fn measure_markovian_lag(trace: &AmplitudeTrace, gamma: f64) -> Result<MarkovianLag> {
    if !(gamma > 0.0) {
        return Err(Error::domain(format!("gamma must be positive, got {gamma}")));
    }
    let t = &trace.times;
    let p = &trace.population;
    if t.len() < 4 {
        return Err(Error::domain("trace too short to measure a lag"));
    }

    // Relative rate excess r = (dP/dt + gamma P) / (gamma P) at the interior
    // points; centered differences.
    let mut rel = Vec::with_capacity(t.len() - 2);
    for i in 1..t.len() - 1 {
        let dpdt = (p[i + 1] - p[i - 1]) / (t[i + 1] - t[i - 1]);
        rel.push((t[i], (dpdt + gamma * p[i]) / (gamma * p[i])));
    }

    // Scan backwards for the last point still outside tolerance; everything
    // after it is settled.
    let last_out = rel.iter().rposition(|&(_, r)| r.abs() > LAG_SETTLE_TOL);
    let lag = match last_out {
        None => {
            return Err(Error::numerical(
                "trace is settled from the start; it begins too late or is too coarse",
            ))
        }
        Some(i) if i + 1 == rel.len() => {
            return Err(Error::numerical(
                "population slope never settles onto -gamma P inside the trace",
            ))
        }
        Some(i) => {
            let (t0, r0) = rel[i];
            let (t1, r1) = rel[i + 1];
            // Interpolate |r| through the tolerance.
            let (a0, a1) = (r0.abs(), r1.abs());
            if a0 > a1 {
                t0 + (t1 - t0) * (a0 - LAG_SETTLE_TOL) / (a0 - a1)
            } else {
                t1
            }
        }
    };

    let f0 = trace.amplitude[0].re;
    let f1 = trace.amplitude[1].re;
    let f2 = trace.amplitude[2].re;
    let initial_curvature =
        2.0 * ((f2 - f1) / (t[2] - t[1]) - (f1 - f0) / (t[1] - t[0])) / (t[2] - t[0]);

    Ok(MarkovianLag {
        lag,
        initial_curvature,
    })
}

/// Relative size gamma / (2 pi omega) of the sine-series distortion caused
/// by the band ending omega below the state.
pub fn asymmetry_distortion(gamma: f64, omega_below: f64) -> Result<f64> {
    if !(omega_below > 0.0) {
        return Err(Error::domain(format!(
            "band depth must be positive, got {omega_below}"
        )));
    }
    Ok(gamma / (2.0 * std::f64::consts::PI * omega_below))
}

/// Slope of the unwrapped phase of d(t) over the window, in rad per time.
/// A band extending farther above than below the state drags the phase
/// upward at the Lamb-shift rate.
pub fn measure_phase_drift(trace: &AmplitudeTrace, window: (f64, f64)) -> Result<f64> {
    let mut ts = Vec::new();
    let mut ph = Vec::new();
    let mut last = 0.0;
    let mut offset = 0.0;
    for (&t, d) in trace.times.iter().zip(&trace.amplitude) {
        let raw = d.arg();
        if !ts.is_empty() {
            let mut delta = raw + offset - last;
            while delta > std::f64::consts::PI {
                offset -= 2.0 * std::f64::consts::PI;
                delta -= 2.0 * std::f64::consts::PI;
            }
            while delta < -std::f64::consts::PI {
                offset += 2.0 * std::f64::consts::PI;
                delta += 2.0 * std::f64::consts::PI;
            }
        }
        let unwrapped = raw + offset;
        last = unwrapped;
        if t >= window.0 && t <= window.1 {
            ts.push(t);
            ph.push(unwrapped);
        }
    }
    if ts.len() < 2 {
        return Err(Error::fit("phase-drift window holds fewer than 2 samples"));
    }
    let n = ts.len() as f64;
    let tm = ts.iter().sum::<f64>() / n;
    let pm = ph.iter().sum::<f64>() / n;
    let mut stt = 0.0;
    let mut stp = 0.0;
    for (&t, &p) in ts.iter().zip(&ph) {
        stt += (t - tm) * (t - tm);
        stp += (t - tm) * (p - pm);
    }
    Ok(stp / stt)
}

/// Continuum-limit survival amplitude in its lopsided-series form:
/// d(t) = int_0^Omega F(l) cos(l t) dl + i int_omega^Omega F(l) sin(l t) dl
/// with F(l) = (gamma/pi)/(gamma_d^2 + l^2) and gamma = 2 gamma_d.
///
/// This form carries known edge effects (it is an approximation, not the
/// exact eigensum); comparison reports flag where it parts from the solver.
pub fn lopsided_fourier_amplitude(
    gamma_d: f64,
    omega_below: f64,
    omega_above: f64,
    times: &[f64],
) -> Result<AmplitudeTrace> {
    if !(gamma_d > 0.0) {
        return Err(Error::domain(format!("gamma_d must be positive, got {gamma_d}")));
    }
    if !(omega_below <= omega_above) || !(omega_below >= 0.0) {
        return Err(Error::domain(format!(
            "need 0 <= omega <= Omega, got ({omega_below}, {omega_above})"
        )));
    }
    let gamma = 2.0 * gamma_d;
    let f = move |l: f64| (gamma / std::f64::consts::PI) / (gamma_d * gamma_d + l * l);
    const TOL: f64 = 1e-8;

    let amplitude: Result<Vec<Complex64>> = times
        .par_iter()
        .map(|&t| {
            let re = oscillatory_integral(&|l| f(l) * (l * t).cos(), 0.0, omega_above, t, TOL)?;
            let im = if omega_below < omega_above {
                oscillatory_integral(&|l| f(l) * (l * t).sin(), omega_below, omega_above, t, TOL)?
            } else {
                0.0
            };
            Ok(Complex64::new(re, im))
        })
        .collect();
    AmplitudeTrace::new(times.to_vec(), amplitude?)
}

/// Splits [a, b] into panels no wider than a quarter oscillation of
/// frequency `freq`, then integrates each panel adaptively.
fn oscillatory_integral(
    f: &(impl Fn(f64) -> f64 + Sync),
    a: f64,
    b: f64,
    freq: f64,
    tol: f64,
) -> Result<f64> {
    if b <= a {
        return Ok(0.0);
    }
    let quarter = 0.5 * std::f64::consts::PI / freq.abs().max(1e-300);
    let panels = (((b - a) / quarter).ceil() as usize).clamp(1, 4_000_000);
    let mut total = 0.0;
    let panel_tol = tol / panels as f64;
    for i in 0..panels {
        let lo = a + (b - a) * i as f64 / panels as f64;
        let hi = a + (b - a) * (i + 1) as f64 / panels as f64;
        let flo = f(lo);
        let fmid = f(0.5 * (lo + hi));
        let fhi = f(hi);
        let s = (hi - lo) / 6.0 * (flo + 4.0 * fmid + fhi);
        total += adaptive_simpson(f, lo, hi, flo, fmid, fhi, s, panel_tol, 40)?;
    }
    Ok(total)
}

#[allow(clippy::too_many_arguments)]
fn adaptive_simpson(
    f: &(impl Fn(f64) -> f64 + Sync),
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: usize,
) -> Result<f64> {
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm);
    let frm = f(rm);
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    if delta.abs() <= 15.0 * tol {
        return Ok(left + right + delta / 15.0);
    }
    if depth == 0 {
        return Err(Error::numerical(format!(
            "quadrature failed to converge on [{a}, {b}]"
        )));
    }
    Ok(
        adaptive_simpson(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)?
            + adaptive_simpson(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)?,
    )
}
