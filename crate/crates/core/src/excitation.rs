//! Zero-temperature propagation in the single-excitation sector: m upper
//! levels share one discrete oscillator bath, each coupled with its own flat
//! strength to every bath mode.
//!
//! Basis: |e_i>|0> for i = 1..m, then |g>|1_k> for k = 0..=N, with energies
//! relative to |g>|0> = 0. The Hamiltonian is bordered-diagonal: diagonal
//! (omega_1..omega_m, 0, delta_omega, .., N delta_omega) plus m dense
//! rows/columns with H_{i,k} = g_i.
//!
//! Flat per-level couplings keep any head-space rotation flat, so for m = 2
//! only the bright combination B = (g_1 e_1 + g_2 e_2)/r sees the bath while
//! its orthogonal partner D hangs off B like one more pole. That makes the
//! whole matrix an arrowhead and the propagation exact. Larger m runs through
//! the adaptive short-step Krylov propagator.

use num_complex::Complex64;
use rayon::prelude::*;

use crate::arrowhead::Arrowhead;
use crate::error::{Error, Result};
use crate::fit::{default_decay_window, fit_decay_rate};
use crate::krylov::KrylovPropagator;
use crate::model::BathSpec;
use crate::rates::{coupling_for_rate, golden_rate};

/// Default relative tolerance for superposition rate comparisons.
pub const DEFAULT_RATE_INVARIANCE_TOL: f64 = 0.02;
/// Levels whose superposition weight |w|^2 falls below this hold too little
/// population for a meaningful rate fit and are skipped in comparisons.
const SUPERPOSITION_WEIGHT_FLOOR: f64 = 1e-6;
/// Pairwise separation must exceed this multiple of the larger decay rate
/// for the per-level rates to be independently defined.
const SEPARATION_FACTOR: f64 = 40.0;
/// Largest tolerated |norm^2 - 1| of an initial state.
const NORM_PRE_TOL: f64 = 1e-9;
/// Krylov basis cap per step.
const KRYLOV_MAX_M: usize = 48;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PropagationMethod {
    /// Exact eigendecomposition of the bordered-diagonal matrix (m <= 2).
    ExactBordered,
    /// Adaptive short-step Krylov propagation with per-step error control.
    Krylov,
}

/// m upper levels over a shared zero-temperature bath.
#[derive(Debug, Clone)]
pub struct SingleExcitationModel {
    /// (energy, coupling) per level; energies lie strictly inside the band.
    pub upper_levels: Vec<(f64, f64)>,
    pub bath: BathSpec,
    /// Level energies were rounded to the nearest bath grid point.
    pub snapped: bool,
}

impl SingleExcitationModel {
    pub fn level_count(&self) -> usize {
        self.upper_levels.len()
    }

    /// Full single-excitation dimension m + N + 1.
    pub fn dim(&self) -> usize {
        self.upper_levels.len() + self.bath.oscillator_count
    }

    /// Golden-rule rate 2 pi g_i^2 / delta_omega per level.
    pub fn level_rates(&self) -> Vec<f64> {
        self.upper_levels
            .iter()
            .map(|&(_, g)| golden_rate(g, self.bath.delta_omega).expect("validated"))
            .collect()
    }
}

/// Builds the model, optionally snapping level energies to the bath grid.
/// The bath must be at temperature zero and every (possibly snapped) energy
/// must lie strictly inside (0, cutoff); a level outside the band has no
/// resonant continuum to decay into.
pub fn build_single_excitation_model(
    levels: &[(f64, f64)],
    bath: &BathSpec,
    snap_to_grid: bool,
) -> Result<SingleExcitationModel> {
    if levels.is_empty() {
        return Err(Error::dimension("need at least one upper level"));
    }
    if bath.theta != 0.0 {
        return Err(Error::domain(format!(
            "single-excitation propagation needs a zero-temperature bath, got theta = {}",
            bath.theta
        )));
    }
    let cutoff = bath.cutoff();
    let mut upper = Vec::with_capacity(levels.len());
    for &(omega, g) in levels {
        if !omega.is_finite() || !g.is_finite() || g < 0.0 {
            return Err(Error::domain(format!(
                "level (omega = {omega}, g = {g}) must be finite with g >= 0"
            )));
        }
        let energy = if snap_to_grid {
            (omega / bath.delta_omega).round() * bath.delta_omega
        } else {
            omega
        };
        if !(energy > 0.0 && energy < cutoff) {
            return Err(Error::domain(format!(
                "level energy {energy} outside the open bath band (0, {cutoff}): \
                 no resonant continuum"
            )));
        }
        upper.push((energy, g));
    }
    Ok(SingleExcitationModel {
        upper_levels: upper,
        bath: bath.clone(),
        snapped: snap_to_grid,
    })
}

/// Per-level populations over time plus the bookkeeping that shows the
/// propagation stayed unitary.
#[derive(Debug, Clone)]
pub struct PopulationTraces {
    pub times: Vec<f64>,
    /// populations[i][j]: population of upper level i at times[j].
    pub populations: Vec<Vec<f64>>,
    /// Total bath population per time.
    pub bath: Vec<f64>,
    /// Total excitation norm per time; unitarity keeps it at 1. For the
    /// exact method this is the spectral completeness sum, constant in time.
    pub norm: Vec<f64>,
    pub method: PropagationMethod,
    /// max_t |<H>(t) - <H>(0)|. The spectral representation conserves <H>
    /// identically, so the exact method reports 0; any solver deficit shows
    /// up in `norm` instead.
    pub energy_drift: f64,
}

impl PopulationTraces {
    /// max_t |norm(t) - 1|, the unitarity drift.
    pub fn norm_drift(&self) -> f64 {
        self.norm
            .iter()
            .fold(0.0, |m, &n| m.max((n - 1.0).abs()))
    }
}

fn validate_propagation_inputs(
    model: &SingleExcitationModel,
    initial: &[Complex64],
    times: &[f64],
) -> Result<()> {
    if initial.len() != model.level_count() {
        return Err(Error::dimension(format!(
            "{} initial amplitudes for {} levels",
            initial.len(),
            model.level_count()
        )));
    }
    let n2: f64 = initial.iter().map(|a| a.norm_sqr()).sum();
    if (n2 - 1.0).abs() > NORM_PRE_TOL {
        return Err(Error::domain(format!(
            "initial state norm^2 = {n2}, must be 1"
        )));
    }
    if times.is_empty() {
        return Err(Error::domain("need at least one output time"));
    }
    if !(times[0] >= 0.0) {
        return Err(Error::domain("times must start at or after 0"));
    }
    for w in times.windows(2) {
        if !(w[1] > w[0]) {
            return Err(Error::domain("times must be strictly increasing"));
        }
    }
    Ok(())
}

/// Propagates |psi(t)> = e^{-iHt} |psi(0)> from amplitudes over the upper
/// levels, choosing the exact bordered-diagonal eigendecomposition for
/// m <= 2 and Krylov short-stepping otherwise. `tol` bounds the per-step
/// error of the Krylov method and is ignored by the exact one.
pub fn propagate(
    model: &SingleExcitationModel,
    initial: &[Complex64],
    times: &[f64],
    tol: f64,
) -> Result<PopulationTraces> {
    let method = if model.level_count() <= 2 {
        PropagationMethod::ExactBordered
    } else {
        PropagationMethod::Krylov
    };
    propagate_with_method(model, initial, times, tol, method)
}

/// Like `propagate` but with the method pinned, for cross-checking the two
/// paths against each other.
pub fn propagate_with_method(
    model: &SingleExcitationModel,
    initial: &[Complex64],
    times: &[f64],
    tol: f64,
    method: PropagationMethod,
) -> Result<PopulationTraces> {
    validate_propagation_inputs(model, initial, times)?;
    match method {
        PropagationMethod::ExactBordered => {
            if model.level_count() > 2 {
                return Err(Error::domain(format!(
                    "exact bordered path covers m <= 2 levels, got {}",
                    model.level_count()
                )));
            }
            propagate_exact(model, initial, times)
        }
        PropagationMethod::Krylov => propagate_krylov(model, initial, times, tol),
    }
}

/// Eigenpairs (lambda_n, [u_1(n), u_2(n)]) of the full matrix, keeping only
/// the eigenvector components on the upper levels. Eigenvectors whose
/// upper-level components all vanish are omitted; they never overlap an
/// initial state in the upper-level span.
fn exact_pairs(model: &SingleExcitationModel) -> Result<(Vec<f64>, Vec<[f64; 2]>)> {
    let delta = model.bath.delta_omega;
    let count = model.bath.oscillator_count;
    match model.upper_levels.as_slice() {
        &[(w1, g1)] => {
            if g1 == 0.0 {
                return Ok((vec![w1], vec![[1.0, 0.0]]));
            }
            let sol = Arrowhead::uniform_grid(w1, 0.0, delta, count, g1, &[])?.solve()?;
            let comps = sol.head_weights.iter().map(|&w| [w.sqrt(), 0.0]).collect();
            Ok((sol.eigenvalues, comps))
        }
        &[(w1, g1), (w2, g2)] => {
            let r2 = g1 * g1 + g2 * g2;
            if r2 == 0.0 {
                return Ok((vec![w1, w2], vec![[1.0, 0.0], [0.0, 1.0]]));
            }
            let r = r2.sqrt();
            // Bright/dark rotation: B = (g1 e1 + g2 e2)/r couples to every
            // bath mode with strength r; D = (-g2 e1 + g1 e2)/r couples only
            // to B, with strength hbd inside the head block.
            let hb = (g1 * g1 * w1 + g2 * g2 * w2) / r2;
            let mut hd = (g2 * g2 * w1 + g1 * g1 * w2) / r2;
            let hbd = g1 * g2 * (w2 - w1) / r2;
            // A dark energy within roundoff of a grid pole leaves the
            // secular solver a gap too narrow to resolve: the root comes
            // back with weight exactly 0 and the null-combination
            // eigenvector is lost. Snapping hd onto the pole makes the
            // degeneracy exact, so the solver merges the pair and the
            // explicit null-vector branch below reconstructs it.
            let k = (hd / delta).round();
            if k >= 0.0 && (k as usize) < count {
                let pole = k * delta;
                if (hd - pole).abs() <= 1e-12 * hd.abs().max(1.0) {
                    hd = pole;
                }
            }
            let (cb, sb) = (g1 / r, g2 / r);
            let mut lambdas = Vec::new();
            let mut comps: Vec<[f64; 2]> = Vec::new();
            if hbd == 0.0 {
                // D is exactly decoupled (degenerate levels or one coupling
                // zero): free pole at hd plus a plain arrowhead for B.
                let sol = Arrowhead::uniform_grid(hb, 0.0, delta, count, r, &[])?.solve()?;
                for (&lam, &w) in sol.eigenvalues.iter().zip(&sol.head_weights) {
                    let vb = w.sqrt();
                    lambdas.push(lam);
                    comps.push([cb * vb, sb * vb]);
                }
                lambdas.push(hd);
                comps.push([-sb, cb]);
            } else {
                let sol =
                    Arrowhead::uniform_grid(hb, 0.0, delta, count, r, &[(hd, hbd)])?.solve()?;
                let null_vd = r / (hbd * hbd + r * r).sqrt();
                for (&lam, &w) in sol.eigenvalues.iter().zip(&sol.head_weights) {
                    let vb = w.sqrt();
                    // v_D = hbd v_B / (lambda - hd) for secular roots. A
                    // zero-weight pair means hd merged with a coincident
                    // grid pole; its eigenvector is the null combination of
                    // (D, mode) orthogonal to the couplings (hbd, r).
                    let vd = if w == 0.0 && lam == hd {
                        null_vd
                    } else {
                        let v = hbd * vb / (lam - hd);
                        if v.is_finite() { v } else { 0.0 }
                    };
                    lambdas.push(lam);
                    comps.push([cb * vb - sb * vd, sb * vb + cb * vd]);
                }
            }
            Ok((lambdas, comps))
        }
        _ => Err(Error::domain("exact path supports at most 2 levels")),
    }
}

fn propagate_exact(
    model: &SingleExcitationModel,
    initial: &[Complex64],
    times: &[f64],
) -> Result<PopulationTraces> {
    let m = model.level_count();
    let (lambdas, comps) = exact_pairs(model)?;

    // Overlaps c_n = <v_n | psi0>; eigenvectors are real so only the
    // upper-level components enter.
    let overlaps: Vec<Complex64> = comps
        .iter()
        .map(|u| {
            let mut z = initial[0] * u[0];
            if m == 2 {
                z += initial[1] * u[1];
            }
            z
        })
        .collect();
    // Completeness sum: the exact time-independent norm of the represented
    // state. Deviation from 1 measures eigensolution quality.
    let total: f64 = overlaps.iter().map(|z| z.norm_sqr()).sum();

    let per_time: Vec<[f64; 2]> = times
        .par_iter()
        .map(|&t| {
            let mut a1 = Complex64::new(0.0, 0.0);
            let mut a2 = Complex64::new(0.0, 0.0);
            for ((&lam, u), &cn) in lambdas.iter().zip(&comps).zip(&overlaps) {
                if cn.norm_sqr() == 0.0 {
                    continue;
                }
                let (s, c) = (lam * t).sin_cos();
                let zc = cn * Complex64::new(c, -s);
                a1 += u[0] * zc;
                if m == 2 {
                    a2 += u[1] * zc;
                }
            }
            [a1.norm_sqr(), a2.norm_sqr()]
        })
        .collect();

    let mut populations = vec![Vec::with_capacity(times.len()); m];
    let mut bath = Vec::with_capacity(times.len());
    for p in &per_time {
        let mut upper_sum = 0.0;
        for i in 0..m {
            populations[i].push(p[i]);
            upper_sum += p[i];
        }
        bath.push(total - upper_sum);
    }
    Ok(PopulationTraces {
        times: times.to_vec(),
        populations,
        bath,
        norm: vec![total; times.len()],
        method: PropagationMethod::ExactBordered,
        energy_drift: 0.0,
    })
}

fn propagate_krylov(
    model: &SingleExcitationModel,
    initial: &[Complex64],
    times: &[f64],
    tol: f64,
) -> Result<PopulationTraces> {
    let m = model.level_count();
    let count = model.bath.oscillator_count;
    let delta = model.bath.delta_omega;
    let dim = m + count;

    let mut psi0 = vec![Complex64::new(0.0, 0.0); dim];
    psi0[..m].copy_from_slice(initial);

    // Flat couplings collapse both dense blocks to shared sums: one over the
    // bath amplitudes, one over g_i-weighted level amplitudes. O(dim) total.
    let levels = model.upper_levels.clone();
    let op = move |x: &[Complex64], y: &mut [Complex64]| {
        let bath_sum: Complex64 = x[m..].iter().copied().sum();
        let mut head_sum = Complex64::new(0.0, 0.0);
        for (i, &(w, g)) in levels.iter().enumerate() {
            y[i] = x[i] * w + bath_sum * g;
            head_sum += x[i] * g;
        }
        for k in 0..count {
            y[m + k] = x[m + k] * (k as f64 * delta) + head_sum;
        }
    };

    // <H> from the same shared-sum structure, without a matrix product.
    let energy_of = |psi: &[Complex64]| -> f64 {
        let bath_amp: Complex64 = psi[m..].iter().copied().sum();
        let mut e = 0.0;
        let mut head = Complex64::new(0.0, 0.0);
        for (i, &(w, g)) in model.upper_levels.iter().enumerate() {
            e += w * psi[i].norm_sqr();
            head += psi[i] * g;
        }
        for k in 0..count {
            e += (k as f64 * delta) * psi[m + k].norm_sqr();
        }
        e + 2.0 * (head.conj() * bath_amp).re
    };

    let mut prop = KrylovPropagator::new(op, dim, &psi0, tol, KRYLOV_MAX_M)?;
    let e0 = energy_of(&psi0);
    let mut populations = vec![Vec::with_capacity(times.len()); m];
    let mut bath = Vec::with_capacity(times.len());
    let mut norm = Vec::with_capacity(times.len());
    let mut energy_drift = 0.0_f64;
    for &t in times {
        let before = prop.steps_taken();
        prop.advance_to(t).map_err(|e| {
            Error::numerical(format!(
                "krylov propagation failed near t = {t} after {before} accepted steps: {e}"
            ))
        })?;
        let psi = prop.state();
        let mut upper_sum = 0.0;
        for i in 0..m {
            let p = psi[i].norm_sqr();
            populations[i].push(p);
            upper_sum += p;
        }
        let bath_pop: f64 = psi[m..].iter().map(|z| z.norm_sqr()).sum();
        bath.push(bath_pop);
        norm.push(upper_sum + bath_pop);
        energy_drift = energy_drift.max((energy_of(psi) - e0).abs());
    }
    Ok(PopulationTraces {
        times: times.to_vec(),
        populations,
        bath,
        norm,
        method: PropagationMethod::Krylov,
        energy_drift,
    })
}

/// Which of the two transitions starts populated.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InitialLevel {
    Lower,
    Upper,
}

#[derive(Debug, Clone)]
pub struct TwoTransitionResult {
    pub separation: f64,
    /// Index (0 = lower, 1 = upper) of the initially populated level.
    pub populated: usize,
    pub traces: PopulationTraces,
    /// max_t of the initially unpopulated level's population.
    pub max_cross_population: f64,
}

/// Sweeps the separation of two equally damped transitions sharing one bath:
/// the lower level sits at `omega`, the upper at `omega + separation`, both
/// coupled for golden-rule rate `gamma`. Sweep points run in parallel.
pub fn two_transition_experiment(
    omega: f64,
    separations: &[f64],
    gamma: f64,
    cutoff: f64,
    oscillator_count: usize,
    which: InitialLevel,
    times: &[f64],
    tol: f64,
) -> Result<Vec<TwoTransitionResult>> {
    if !(omega > 0.0 && gamma > 0.0 && cutoff > 0.0) {
        return Err(Error::domain(format!(
            "parameters must be positive: omega = {omega}, gamma = {gamma}, cutoff = {cutoff}"
        )));
    }
    if oscillator_count < 2 {
        return Err(Error::domain(format!(
            "need at least 2 oscillators, got {oscillator_count}"
        )));
    }
    for &s in separations {
        if !(s > 0.0) {
            return Err(Error::domain(format!("separations must be positive, got {s}")));
        }
    }
    let delta = cutoff / (oscillator_count - 1) as f64;
    let g = coupling_for_rate(gamma, delta)?;
    let populated = match which {
        InitialLevel::Lower => 0,
        InitialLevel::Upper => 1,
    };
    separations
        .par_iter()
        .map(|&sep| {
            let bath = BathSpec::new(delta, oscillator_count, g, 0.0)?;
            let model = build_single_excitation_model(
                &[(omega, g), (omega + sep, g)],
                &bath,
                false,
            )?;
            let mut initial = [Complex64::new(0.0, 0.0); 2];
            initial[populated] = Complex64::new(1.0, 0.0);
            let traces = propagate(&model, &initial, times, tol)?;
            let max_cross = traces.populations[1 - populated]
                .iter()
                .fold(0.0, |m: f64, &p| m.max(p));
            Ok(TwoTransitionResult {
                separation: sep,
                populated,
                traces,
                max_cross_population: max_cross,
            })
        })
        .collect()
}

/// Trapezoid integral of a sampled trace.
pub fn integrated_population(times: &[f64], values: &[f64]) -> Result<f64> {
    if times.len() != values.len() {
        return Err(Error::dimension(format!(
            "{} times vs {} values",
            times.len(),
            values.len()
        )));
    }
    if times.len() < 2 {
        return Err(Error::dimension("need at least two samples to integrate"));
    }
    Ok(times
        .windows(2)
        .zip(values.windows(2))
        .map(|(t, v)| 0.5 * (v[0] + v[1]) * (t[1] - t[0]))
        .sum())
}

#[derive(Debug, Clone)]
pub struct LevelRateComparison {
    pub level: usize,
    /// Superposition weight |w_i|^2 on this level.
    pub weight: f64,
    pub basis_rate: f64,
    /// None when the weight is too small for a meaningful fit or the level
    /// is uncoupled.
    pub superposition_rate: Option<f64>,
    pub relative_difference: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct SuperpositionReport {
    pub levels: Vec<LevelRateComparison>,
    pub max_relative_difference: f64,
    pub tolerance: f64,
    pub pass: bool,
}

/// Tests whether each level of a superposition decays at the same fitted
/// rate as it does from its own basis initial state. Levels must be pairwise
/// separated by at least 40x the larger of their golden-rule rates, so the
/// rates are independently defined.
pub fn superposition_rate_invariance(
    model: &SingleExcitationModel,
    weights: &[Complex64],
    times: &[f64],
    tol: f64,
    rate_tolerance: f64,
) -> Result<SuperpositionReport> {
    let m = model.level_count();
    if weights.len() != m {
        return Err(Error::dimension(format!(
            "{} weights for {} levels",
            weights.len(),
            m
        )));
    }
    if !(rate_tolerance > 0.0) {
        return Err(Error::domain(format!(
            "rate tolerance must be positive, got {rate_tolerance}"
        )));
    }
    let rates = model.level_rates();
    for i in 0..m {
        for j in i + 1..m {
            let sep = (model.upper_levels[i].0 - model.upper_levels[j].0).abs();
            let floor = SEPARATION_FACTOR * rates[i].max(rates[j]);
            if sep < floor {
                return Err(Error::domain(format!(
                    "levels {i} and {j} are separated by {sep}, need at least \
                     {SEPARATION_FACTOR} times the larger rate ({floor})"
                )));
            }
        }
    }

    // Fit window per level: past the initial slip set by the nearer band
    // edge, before both deep decay and the recurrence.
    let cutoff = model.bath.cutoff();
    let t_end = *times.last().expect("validated nonempty");
    let mut windows = Vec::with_capacity(m);
    for (i, &(omega, _)) in model.upper_levels.iter().enumerate() {
        let edge = omega.min(cutoff - omega);
        let tau = 2.0 * std::f64::consts::PI / edge;
        let (lo, hi) = default_decay_window(tau, rates[i], model.bath.delta_omega);
        let hi = hi.min(t_end);
        if !(lo < hi) {
            return Err(Error::domain(format!(
                "times end at {t_end} but the fit window for level {i} starts at {lo}"
            )));
        }
        windows.push((lo, hi));
    }

    let mut basis_rates = Vec::with_capacity(m);
    for i in 0..m {
        let mut init = vec![Complex64::new(0.0, 0.0); m];
        init[i] = Complex64::new(1.0, 0.0);
        let traces = propagate(model, &init, times, tol)?;
        basis_rates.push(fit_decay_rate(times, &traces.populations[i], windows[i])?.rate);
    }

    let traces = propagate(model, weights, times, tol)?;
    let mut levels = Vec::with_capacity(m);
    let mut max_rel: f64 = 0.0;
    for i in 0..m {
        let weight = weights[i].norm_sqr();
        let compare = weight >= SUPERPOSITION_WEIGHT_FLOOR && rates[i] > 0.0;
        let (sup_rate, rel) = if compare {
            let r = fit_decay_rate(times, &traces.populations[i], windows[i])?.rate;
            let rel = (r - basis_rates[i]).abs() / basis_rates[i].abs();
            max_rel = max_rel.max(rel);
            (Some(r), Some(rel))
        } else {
            (None, None)
        };
        levels.push(LevelRateComparison {
            level: i,
            weight,
            basis_rate: basis_rates[i],
            superposition_rate: sup_rate,
            relative_difference: rel,
        });
    }
    Ok(SuperpositionReport {
        levels,
        max_relative_difference: max_rel,
        tolerance: rate_tolerance,
        pass: max_rel <= rate_tolerance,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn grid(n: usize, t1: f64) -> Vec<f64> {
        (0..=n).map(|i| t1 * i as f64 / n as f64).collect()
    }

    fn bath(cutoff: f64, count: usize, g: f64) -> BathSpec {
        BathSpec::new(cutoff / (count - 1) as f64, count, g, 0.0).unwrap()
    }

    fn one() -> Complex64 {
        Complex64::new(1.0, 0.0)
    }

    /// Dense single-excitation oracle: populations from an explicit
    /// symmetric eigendecomposition of the full matrix.
    fn dense_populations(
        model: &SingleExcitationModel,
        initial: &[Complex64],
        times: &[f64],
    ) -> Vec<Vec<f64>> {
        let m = model.level_count();
        let count = model.bath.oscillator_count;
        let dim = m + count;
        let mut h = nalgebra::DMatrix::<f64>::zeros(dim, dim);
        for (i, &(w, g)) in model.upper_levels.iter().enumerate() {
            h[(i, i)] = w;
            for k in 0..count {
                h[(i, m + k)] = g;
                h[(m + k, i)] = g;
            }
        }
        for k in 0..count {
            h[(m + k, m + k)] = model.bath.frequency(k);
        }
        let eig = nalgebra::SymmetricEigen::new(h);
        // c_n = sum_i V[i,n] a_i(0); a_i(t) = sum_n V[i,n] c_n e^{-i l_n t}
        let overlaps: Vec<Complex64> = (0..dim)
            .map(|n| {
                (0..m)
                    .map(|i| initial[i] * eig.eigenvectors[(i, n)])
                    .sum()
            })
            .collect();
        let mut out = vec![Vec::with_capacity(times.len()); m];
        for &t in times {
            for i in 0..m {
                let mut a = Complex64::new(0.0, 0.0);
                for n in 0..dim {
                    let (s, c) = (eig.eigenvalues[n] * t).sin_cos();
                    a += overlaps[n] * eig.eigenvectors[(i, n)] * Complex64::new(c, -s);
                }
                out[i].push(a.norm_sqr());
            }
        }
        out
    }

    #[test]
    fn build_validates_inputs() {
        let b = bath(4.0, 65, 0.01);
        assert!(build_single_excitation_model(&[], &b, false).is_err());
        for bad in [0.0, -1.0, 4.0, 5.0] {
            assert!(
                build_single_excitation_model(&[(bad, 0.01)], &b, false).is_err(),
                "energy {bad} must be rejected"
            );
        }
        assert!(build_single_excitation_model(&[(2.0, -0.01)], &b, false).is_err());
        let warm = BathSpec::new(4.0 / 64.0, 65, 0.01, 0.5).unwrap();
        assert!(build_single_excitation_model(&[(2.0, 0.01)], &warm, false).is_err());
        // g = 0 is a valid decoupled level
        assert!(build_single_excitation_model(&[(2.0, 0.0)], &b, false).is_ok());
    }

    #[test]
    fn snapping_rounds_to_the_nearest_grid_point() {
        let b = bath(4.0, 65, 0.01); // spacing 1/16
        let m = build_single_excitation_model(&[(2.03, 0.01)], &b, true).unwrap();
        assert!(m.snapped);
        assert_eq!(m.upper_levels[0].0, 2.0);
        let m = build_single_excitation_model(&[(2.03, 0.01)], &b, false).unwrap();
        assert!(!m.snapped);
        assert_eq!(m.upper_levels[0].0, 2.03);
        // snapping to the band edge must fail the range check
        assert!(build_single_excitation_model(&[(0.02, 0.01)], &b, true).is_err());
    }

    #[test]
    fn propagation_validates_inputs() {
        let b = bath(4.0, 65, 0.01);
        let model = build_single_excitation_model(&[(2.0, 0.01)], &b, false).unwrap();
        let times = grid(10, 5.0);
        // wrong length
        assert!(propagate(&model, &[one(), one()], &times, 1e-8).is_err());
        // norm not 1
        assert!(propagate(&model, &[Complex64::new(0.7, 0.0)], &times, 1e-8).is_err());
        // non-ascending times
        assert!(propagate(&model, &[one()], &[0.0, 0.0], 1e-8).is_err());
        assert!(propagate(&model, &[one()], &[-1.0, 1.0], 1e-8).is_err());
        // exact path rejects m = 3
        let model3 = build_single_excitation_model(
            &[(1.0, 0.01), (2.0, 0.01), (3.0, 0.01)],
            &b,
            false,
        )
        .unwrap();
        let init3 = [one(), Complex64::new(0.0, 0.0), Complex64::new(0.0, 0.0)];
        assert!(propagate_with_method(
            &model3,
            &init3,
            &times,
            1e-8,
            PropagationMethod::ExactBordered
        )
        .is_err());
        // Krylov path needs a positive tolerance
        assert!(propagate(&model3, &init3, &times, 0.0).is_err());
    }

    #[test]
    fn single_level_reduction_matches_the_quasicontinuum_solver() {
        use crate::quasicontinuum::{amplitude_series, solve_arrowhead, QuasiContinuumSpec};
        let count = 1025; // cutoff 4, spacing 4/1024
        let delta = 4.0 / 1024.0;
        let g = coupling_for_rate(0.2, delta).unwrap();
        let b = bath(4.0, count, g);
        // level exactly on the grid at k = 512
        let model = build_single_excitation_model(&[(2.0, g)], &b, false).unwrap();
        let times = grid(400, 20.0);
        let traces = propagate(&model, &[one()], &times, 1e-9).unwrap();
        assert_eq!(traces.method, PropagationMethod::ExactBordered);

        let spec = QuasiContinuumSpec::uniform(delta, 512, 512, g).unwrap();
        let sol = solve_arrowhead(&spec).unwrap();
        let reference = amplitude_series(&sol, &times).unwrap();
        let max_diff = traces.populations[0]
            .iter()
            .zip(&reference.population)
            .fold(0.0, |m: f64, (&a, &b)| m.max((a - b).abs()));
        assert!(max_diff < 1e-8, "max population difference {max_diff}");
        assert!(traces.norm_drift() < 1e-9, "norm drift {}", traces.norm_drift());
    }

    #[test]
    fn exact_bordered_path_matches_a_dense_oracle() {
        // unequal couplings, off-grid energies: the full rotation algebra
        let count = 64;
        let b = bath(3.15, count, 0.02);
        let model =
            build_single_excitation_model(&[(1.37, 0.02), (1.93, 0.035)], &b, false).unwrap();
        let initial = [Complex64::new(0.6, 0.0), Complex64::new(0.0, 0.8)];
        let times = grid(60, 30.0);
        let traces = propagate(&model, &initial, &times, 1e-9).unwrap();
        let dense = dense_populations(&model, &initial, &times);
        for i in 0..2 {
            let max_diff = traces.populations[i]
                .iter()
                .zip(&dense[i])
                .fold(0.0, |m: f64, (&a, &b)| m.max((a - b).abs()));
            assert!(max_diff < 1e-10, "level {i}: max diff {max_diff}");
        }
        assert!(traces.norm_drift() < 1e-12);
    }

    #[test]
    fn dark_level_on_a_grid_point_is_handled_exactly() {
        // spacing 1/16 binary-exact; equal couplings put the dark energy at
        // (1.25 + 1.75)/2 = 1.5 = 24/16, bit-equal to a grid pole
        let count = 64;
        let delta = 0.0625;
        let b = BathSpec::new(delta, count, 0.03, 0.0).unwrap();
        let model =
            build_single_excitation_model(&[(1.25, 0.03), (1.75, 0.03)], &b, false).unwrap();
        let hd = 0.5 * (1.25 + 1.75);
        assert_eq!(hd, 24.0 * delta, "test premise: dark energy on the grid");
        let initial = [
            Complex64::new(0.8, 0.0),
            Complex64::new(0.0, 0.6),
        ];
        let times = grid(60, 30.0);
        let traces = propagate(&model, &initial, &times, 1e-9).unwrap();
        let dense = dense_populations(&model, &initial, &times);
        for i in 0..2 {
            let max_diff = traces.populations[i]
                .iter()
                .zip(&dense[i])
                .fold(0.0, |m: f64, (&a, &b)| m.max((a - b).abs()));
            assert!(max_diff < 1e-10, "level {i}: max diff {max_diff}");
        }
        assert!(traces.norm_drift() < 1e-12, "norm drift {}", traces.norm_drift());
    }

    #[test]
    fn decoupled_level_is_frozen() {
        let count = 257;
        let delta = 4.0 / 256.0;
        let g = coupling_for_rate(0.2, delta).unwrap();
        let b = bath(4.0, count, g);
        let model = build_single_excitation_model(&[(2.0, g), (2.5, 0.0)], &b, false).unwrap();
        let times = grid(100, 10.0);

        // all population on the decoupled level: nothing moves
        let traces = propagate(&model, &[Complex64::new(0.0, 0.0), one()], &times, 1e-9).unwrap();
        for &p in &traces.populations[1] {
            assert!((p - 1.0).abs() < 1e-14, "P2 = {p}");
        }

        // mixed start: level 2 holds its share while level 1 decays
        let w = Complex64::new(0.5_f64.sqrt(), 0.0);
        let traces = propagate(&model, &[w, w], &times, 1e-9).unwrap();
        for &p in &traces.populations[1] {
            assert!((p - 0.5).abs() < 1e-14, "P2 = {p}");
        }
        let p1_end = *traces.populations[0].last().unwrap();
        assert!(p1_end < 0.1, "P1 should have decayed, got {p1_end}");
    }

    #[test]
    fn degenerate_pair_splits_into_bright_and_dark_states() {
        let count = 1025;
        let delta = 4.0 / 1024.0;
        let g = coupling_for_rate(0.05, delta).unwrap();
        let b = bath(4.0, count, g);
        let model = build_single_excitation_model(&[(2.0, g), (2.0, g)], &b, false).unwrap();
        let times = grid(400, 20.0);
        let w = 0.5_f64.sqrt();

        // dark combination is an exact eigenstate: no decay at all
        let dark = [Complex64::new(-w, 0.0), Complex64::new(w, 0.0)];
        let traces = propagate(&model, &dark, &times, 1e-9).unwrap();
        for (&p1, &p2) in traces.populations[0].iter().zip(&traces.populations[1]) {
            assert!((p1 - 0.5).abs() < 1e-12 && (p2 - 0.5).abs() < 1e-12);
        }

        // bright combination decays at the doubled rate 2 gamma
        let bright = [Complex64::new(w, 0.0), Complex64::new(w, 0.0)];
        let traces = propagate(&model, &bright, &times, 1e-9).unwrap();
        let total: Vec<f64> = traces.populations[0]
            .iter()
            .zip(&traces.populations[1])
            .map(|(&a, &b)| a + b)
            .collect();
        let tau = 2.0 * PI / 2.0;
        let fit = fit_decay_rate(&times, &total, (5.0 * tau, 20.0)).unwrap();
        assert!(
            (fit.rate - 0.1).abs() < 0.004,
            "bright rate {} vs 2 gamma = 0.1",
            fit.rate
        );
    }

    #[test]
    fn krylov_and_exact_paths_agree() {
        let count = 513;
        let delta = 8.0 / 512.0;
        let g = coupling_for_rate(0.05, delta).unwrap();
        let b = bath(8.0, count, g);
        let model = build_single_excitation_model(&[(3.0, g), (3.5, g)], &b, false).unwrap();
        let initial = [Complex64::new(0.0, 0.0), one()];
        let times = grid(20, 40.0);
        let exact =
            propagate_with_method(&model, &initial, &times, 1e-9, PropagationMethod::ExactBordered)
                .unwrap();
        let krylov =
            propagate_with_method(&model, &initial, &times, 1e-9, PropagationMethod::Krylov)
                .unwrap();
        for i in 0..2 {
            let max_diff = exact.populations[i]
                .iter()
                .zip(&krylov.populations[i])
                .fold(0.0, |m: f64, (&a, &b)| m.max((a - b).abs()));
            assert!(max_diff < 1e-7, "level {i}: max diff {max_diff}");
        }
        assert!(exact.norm_drift() < 1e-9, "exact norm drift {}", exact.norm_drift());
        assert!(krylov.norm_drift() < 1e-9, "krylov norm drift {}", krylov.norm_drift());
        assert!(krylov.energy_drift < 1e-9, "energy drift {}", krylov.energy_drift);
        assert_eq!(krylov.method, PropagationMethod::Krylov);
    }

    #[test]
    fn well_separated_transitions_decay_independently() {
        let gamma = 0.025;
        let times = grid(400, 2.0 / gamma);
        let results = two_transition_experiment(
            5.5,
            &[40.0 * gamma],
            gamma,
            32.0,
            4097,
            InitialLevel::Upper,
            &times,
            1e-8,
        )
        .unwrap();
        let r = &results[0];
        assert!(
            r.max_cross_population < 0.01,
            "cross population {}",
            r.max_cross_population
        );
        // The populated level follows e^{-gamma t} closely, but not at an
        // exactly nominal rate: the other transition shifts it through the
        // bath by ~gamma * lamb/separation, here about -1% (inhibited, since
        // the high level is the populated one). The shift survives any
        // oscillator count, so the checks are a fitted rate within 2% and a
        // pointwise absolute deviation bound, not a relative tail bound.
        let populated = &r.traces.populations[1];
        let tau = 2.0 * PI / (32.0 - 6.5);
        let rate = fit_decay_rate(&times, populated, (5.0 * tau, 2.0 / gamma))
            .unwrap()
            .rate;
        assert!(
            (rate / gamma - 1.0).abs() < 0.02,
            "fitted rate {rate} vs nominal {gamma}"
        );
        let mut max_abs: f64 = 0.0;
        for (&t, &p) in times.iter().zip(populated) {
            max_abs = max_abs.max((p - (-gamma * t).exp()).abs());
        }
        assert!(max_abs < 0.02, "max absolute deviation {max_abs}");
        let tail = populated.last().unwrap() / (-2.0f64).exp() - 1.0;
        assert!(tail > 0.0, "populated high level should be inhibited, got {tail}");
    }

    #[test]
    fn near_degenerate_transitions_interfere() {
        let gamma = 0.025;
        let times = grid(400, 2.0 / gamma);
        let expected: f64 = integrated_population(
            &times,
            &times.iter().map(|&t| (-gamma * t).exp()).collect::<Vec<_>>(),
        )
        .unwrap();

        // start in the higher-frequency transition: decay is inhibited
        let results = two_transition_experiment(
            5.5,
            &[gamma],
            gamma,
            32.0,
            4097,
            InitialLevel::Upper,
            &times,
            1e-8,
        )
        .unwrap();
        let r = &results[0];
        assert!(
            r.max_cross_population > 0.05,
            "cross population {}",
            r.max_cross_population
        );
        let integrated =
            integrated_population(&times, &r.traces.populations[r.populated]).unwrap();
        assert!(
            integrated > 1.02 * expected,
            "integrated population {integrated} vs exponential reference {expected}"
        );
    }

    #[test]
    fn startings_converge_as_the_separation_closes() {
        let gamma = 0.025;
        let times = grid(200, 2.0 / gamma);
        let distance = |sep: f64| -> f64 {
            let up = two_transition_experiment(
                5.5,
                &[sep],
                gamma,
                32.0,
                2049,
                InitialLevel::Upper,
                &times,
                1e-8,
            )
            .unwrap();
            let lo = two_transition_experiment(
                5.5,
                &[sep],
                gamma,
                32.0,
                2049,
                InitialLevel::Lower,
                &times,
                1e-8,
            )
            .unwrap();
            up[0].traces.populations[1]
                .iter()
                .zip(&lo[0].traces.populations[0])
                .fold(0.0, |m: f64, (&a, &b)| m.max((a - b).abs()))
        };
        let close = distance(0.01 * gamma);
        let apart = distance(gamma);
        assert!(
            close < 0.2 * apart,
            "populated-trace distance {close} at 0.01 gamma vs {apart} at gamma"
        );
    }

    #[test]
    fn superposition_rates_match_basis_rates() {
        let gamma = 0.025;
        let cutoff = 32.0;
        let count = 4097;
        let delta = cutoff / (count - 1) as f64;
        let g = coupling_for_rate(gamma, delta).unwrap();
        let b = bath(cutoff, count, g);
        let model =
            build_single_excitation_model(&[(5.5, g), (6.5, g)], &b, false).unwrap();
        let times = grid(400, 2.0 / gamma);
        let w = 0.5_f64.sqrt();

        for phase in [0.0, 1.3, PI] {
            let weights = [
                Complex64::new(w, 0.0),
                Complex64::from_polar(w, phase),
            ];
            let report = superposition_rate_invariance(
                &model,
                &weights,
                &times,
                1e-8,
                DEFAULT_RATE_INVARIANCE_TOL,
            )
            .unwrap();
            assert!(
                report.pass,
                "phase {phase}: max relative difference {}",
                report.max_relative_difference
            );
            for lv in &report.levels {
                assert!(
                    (lv.basis_rate - gamma).abs() < 0.05 * gamma,
                    "level {} basis rate {} vs gamma {gamma}",
                    lv.level,
                    lv.basis_rate
                );
            }
        }

        // weights (1, 0): the populated level reproduces its basis run
        let weights = [one(), Complex64::new(0.0, 0.0)];
        let report = superposition_rate_invariance(
            &model,
            &weights,
            &times,
            1e-8,
            DEFAULT_RATE_INVARIANCE_TOL,
        )
        .unwrap();
        assert_eq!(report.levels[0].superposition_rate, Some(report.levels[0].basis_rate));
        assert_eq!(report.levels[1].superposition_rate, None);

        // too-close levels violate the precondition
        let tight =
            build_single_excitation_model(&[(5.5, g), (5.5 + gamma, g)], &b, false).unwrap();
        assert!(superposition_rate_invariance(
            &tight,
            &[Complex64::new(w, 0.0), Complex64::new(w, 0.0)],
            &times,
            1e-8,
            DEFAULT_RATE_INVARIANCE_TOL
        )
        .is_err());
    }

    #[test]
    fn integrated_population_is_exact_for_linear_traces() {
        let times = [0.0, 0.5, 2.0, 3.0];
        let values: Vec<f64> = times.iter().map(|&t| 2.0 * t + 1.0).collect();
        // integral of 2t + 1 over [0, 3] = 9 + 3
        let integral = integrated_population(&times, &values).unwrap();
        assert!((integral - 12.0).abs() < 1e-14);
        assert!(integrated_population(&times, &values[..3]).is_err());
        assert!(integrated_population(&times[..1], &values[..1]).is_err());
    }
}
