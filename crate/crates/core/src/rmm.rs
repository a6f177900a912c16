//! Random-matrix bath with an exponentially growing density of states.
//!
//! The bath is a deterministic level grid whose spacing obeys
//! E_{k+1} - E_k = Delta_0 e^{-beta E_k}, so the local density of states
//! grows as e^{beta E} and the exponent acts as an inverse temperature,
//! theta_eff = 1/beta. A two-level system (splitting Delta E) couples to
//! the bath through sigma_x tensor Y with Y a GOE-convention random
//! matrix. Golden-rule rates are then proportional to the density at the
//! destination energy of the joint state, and that destination depends
//! on history: starting excited with the bath at E_b, a downward
//! transition deposits its quantum at E_b + Delta E; starting in the
//! ground state and climbing first, the subsequent downward transition
//! only returns the bath to E_b. The two protocols therefore see
//! downward rates differing by a factor e^{beta Delta E}, while an
//! oscillator bath, whose downward rate gamma (n_T + 1) carries no
//! memory of how the system got excited, shows a factor of one. The
//! experiment and its control both live here.
//!
//! Both protocols relax toward the same quasi-equilibrium excited
//! population C = 1/(1 + e^{beta Delta E}), the Boltzmann weight at
//! theta_eff. The excited population follows C + (P_e(0) - C) e^{-G t}
//! with G the sum of the downward and upward rates of the active loop,
//! so the downward rate is recovered from an offset-exponential fit as
//! G (1 - C). The rise in the ground-start protocol is monotone up to
//! finite-size fluctuations; its "peak" merely gates that enough
//! excitation happened for the fit to mean anything.
//!
//! Rate experiments prepare the uniform incoherent mixture over the band
//! rather than any single coherent superposition: a coherent preparation
//! carries cross terms between band members whose random signs distort
//! the transfer by about 1/sqrt(levels in a linewidth), and the mixture
//! is the exact average over preparation phases. In the eigenbasis the
//! mixed populations collapse to quadratic forms u(t)^T (G o W) u(t)
//! with G a manifold Gram matrix and W the band Gram matrix, so the
//! average costs about as much as one trajectory.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::fit::fit_exp_offset;
use crate::lindblad::{build_lindblad, propagate_rho, DensityMatrix};
use crate::model::{
    build_transition_catalog, BathSpec, SystemSpec, DEFAULT_TOL_DEG, DEFAULT_TOL_SEP,
};
use crate::rates::{coupling_for_rate, thermal_occupation};

/// Norm drift allowed during propagation, shared with the oscillator-bath
/// propagators.
pub const UNITARITY_TOL: f64 = 1e-9;

/// The ground-start protocol aborts when the excited population never
/// clears this floor.
pub const MIN_EXCITATION: f64 = 1e-3;

/// Rate uncertainties quoted by the deterministic master-equation control
/// are floored at this multiple of (integrator tolerance) x (fitted rate).
/// Residual-based errors below the integrator's own resolution would
/// otherwise understate what the trajectory can distinguish.
pub const CONTROL_RATE_RESOLUTION: f64 = 10.0;

/// Recipe for the bath grid and its random coupling.
#[derive(Debug, Clone)]
pub struct RmmBathSpec {
    /// Number of bath levels N_b.
    pub level_count: usize,
    /// beta in density ~ e^{beta E}; doubles as 1/theta_eff.
    pub density_exponent: f64,
    /// [E_min, E_max] that the grid spans exactly.
    pub energy_window: (f64, f64),
    /// GOE scale epsilon of Y. Zero is allowed and decouples system from
    /// bath; the frozen-population control uses it.
    pub coupling_strength: f64,
    /// Seeds Y (stream 0) and the initial band phases (stream 1).
    pub seed: u64,
}

/// Deterministic level grid with exponentially shrinking spacings.
#[derive(Debug, Clone)]
pub struct RmmBath {
    /// Strictly increasing level energies, energies[0] = E_min and the
    /// last level on E_max to bisection accuracy.
    pub energies: Vec<f64>,
    /// Spacing at the window bottom, fixed by bisection on the window.
    /// The law reads E_{k+1} - E_k = base_spacing e^{-beta (E_k - E_min)};
    /// anchoring at E_min keeps the exponential in range for windows far
    /// from zero, and only shifts the conventional prefactor by e^{beta E_min}.
    pub base_spacing: f64,
    /// 1/beta, the temperature the density exponent imposes.
    pub theta_eff: f64,
    pub beta: f64,
    pub window: (f64, f64),
}

/// Energy band selecting the initial bath superposition.
#[derive(Debug, Clone, Copy)]
pub struct EnergyBand {
    pub center: f64,
    pub halfwidth: f64,
}

fn grid_endpoint(delta0: f64, beta: f64, start: f64, count: usize) -> f64 {
    let mut e = start;
    for _ in 1..count {
        e += delta0 * (-beta * (e - start)).exp();
    }
    e
}

/// Builds the deterministic grid: spacings Delta_0 e^{-beta E_k} with
/// Delta_0 bisected so the last level lands on the window top.
pub fn build_rmm_bath(spec: &RmmBathSpec) -> Result<RmmBath> {
    let n = spec.level_count;
    if n < 2 {
        return Err(Error::domain(format!(
            "bath needs at least 2 levels, got {n}"
        )));
    }
    let beta = spec.density_exponent;
    if !(beta > 0.0) || !beta.is_finite() {
        return Err(Error::domain(format!(
            "density exponent must be positive and finite, got {beta}"
        )));
    }
    let (e_min, e_max) = spec.energy_window;
    if !e_min.is_finite() || !e_max.is_finite() || !(e_max > e_min) {
        return Err(Error::domain(format!(
            "energy window [{e_min}, {e_max}] is not an increasing finite interval"
        )));
    }
    if !(spec.coupling_strength >= 0.0) || !spec.coupling_strength.is_finite() {
        return Err(Error::domain(format!(
            "coupling strength must be finite and nonnegative, got {}",
            spec.coupling_strength
        )));
    }
    let span = e_max - e_min;

    // The top of the window carries the smallest spacing; when even the
    // continuum estimate of it falls below f64 resolution at the window's
    // location, no grid of this size can fit.
    let x = beta * span;
    let top_est = -(-x).exp_m1() / (beta * (n - 1) as f64);
    let scale = e_min.abs().max(e_max.abs());
    if top_est <= 4.0 * f64::EPSILON * scale {
        return Err(Error::domain(format!(
            "window [{e_min}, {e_max}] too narrow for {n} levels: spacing near \
             the window top falls below f64 resolution"
        )));
    }

    // Continuum estimate of the bottom spacing from integrating the
    // density, done in logs so large beta * span cannot overflow.
    let ln_expm1 = if x > 50.0 { x } else { x.exp_m1().ln() };
    let log_est = ln_expm1 - (beta * (n - 1) as f64).ln();
    let mut hi = log_est.exp();
    if !hi.is_finite() || hi <= 0.0 {
        hi = span;
    }

    // The endpoint is continuous in Delta_0, equals E_min at 0, and grows
    // without bound, so a sign-changing bracket always exists.
    let mut grow = 0;
    while grid_endpoint(hi, beta, e_min, n) < e_max {
        hi *= 2.0;
        grow += 1;
        if grow > 600 {
            return Err(Error::numerical(
                "bath grid bisection failed to bracket the window top",
            ));
        }
    }
    let mut lo = 0.0_f64;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if grid_endpoint(mid, beta, e_min, n) < e_max {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= f64::EPSILON * hi {
            break;
        }
    }
    let delta0 = 0.5 * (lo + hi);

    let mut energies = Vec::with_capacity(n);
    energies.push(e_min);
    for k in 1..n {
        let prev = energies[k - 1];
        energies.push(prev + delta0 * (-beta * (prev - e_min)).exp());
    }
    let last = *energies.last().unwrap();
    if !last.is_finite() || (last - e_max).abs() > 1e-9 * span {
        return Err(Error::domain(format!(
            "window [{e_min}, {e_max}] too narrow for {n} levels: grid endpoint \
             missed the window top by {:e}",
            last - e_max
        )));
    }
    for k in 1..n {
        if !(energies[k] > energies[k - 1]) {
            return Err(Error::domain(format!(
                "window [{e_min}, {e_max}] too narrow for {n} levels: adjacent \
                 levels collide at index {k}"
            )));
        }
    }
    // Spacings strictly decrease because the energies strictly increase;
    // Exact spacings shrink by beta s^2 per step, which can fall below
    // one ulp of the stored energies while the spacings themselves are
    // still large; realized spacings may then tie or invert by a rounding
    // quantum. Allow that much slack, reject anything beyond it.
    let slack = 4.0 * f64::EPSILON * e_max.abs().max(e_min.abs()).max(1.0);
    for k in 2..n {
        if !(energies[k] - energies[k - 1] < energies[k - 1] - energies[k - 2] + slack) {
            return Err(Error::domain(format!(
                "window [{e_min}, {e_max}] too narrow for {n} levels: spacings \
                 stop decreasing at index {k}"
            )));
        }
    }

    Ok(RmmBath {
        energies,
        base_spacing: delta0,
        theta_eff: 1.0 / beta,
        beta,
        window: (e_min, e_max),
    })
}

impl RmmBath {
    pub fn level_count(&self) -> usize {
        self.energies.len()
    }

    /// Density of the realized grid at `energy`: the reciprocal spacing of
    /// the interval containing it. This is what golden-rule predictions
    /// use, so discreteness of the grid enters them honestly.
    pub fn local_density(&self, energy: f64) -> Result<f64> {
        if !(energy >= self.window.0 && energy <= self.window.1) {
            return Err(Error::domain(format!(
                "energy {energy} outside the bath window [{}, {}]",
                self.window.0, self.window.1
            )));
        }
        let k = self
            .energies
            .partition_point(|&e| e <= energy)
            .clamp(1, self.energies.len() - 1);
        Ok(1.0 / (self.energies[k] - self.energies[k - 1]))
    }

    /// Indices of levels with |E_k - center| <= halfwidth.
    pub fn band_indices(&self, band: &EnergyBand) -> Vec<usize> {
        self.energies
            .iter()
            .enumerate()
            .filter(|(_, &e)| (e - band.center).abs() <= band.halfwidth)
            .map(|(k, _)| k)
            .collect()
    }
}

/// GOE-convention symmetric Gaussian matrix: off-diagonal variance
/// epsilon^2, diagonal variance 2 epsilon^2, exactly symmetric.
pub fn sample_random_coupling(level_count: usize, epsilon: f64, seed: u64) -> Result<DMatrix<f64>> {
    sample_banded_coupling(level_count, epsilon, seed, None)
}

/// Banded variant: entries with |i - j| > bandwidth are zero. The draw
/// order does not depend on the bandwidth, so the kept entries match the
/// full matrix at the same seed.
pub fn sample_banded_coupling(
    level_count: usize,
    epsilon: f64,
    seed: u64,
    bandwidth: Option<usize>,
) -> Result<DMatrix<f64>> {
    if level_count == 0 {
        return Err(Error::domain("coupling matrix needs at least one level"));
    }
    if !(epsilon >= 0.0) || !epsilon.is_finite() {
        return Err(Error::domain(format!(
            "coupling strength must be finite and nonnegative, got {epsilon}"
        )));
    }
    let n = level_count;
    let mut y = DMatrix::zeros(n, n);
    if epsilon == 0.0 {
        return Ok(y);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = rand_distr::StandardNormal;
    for i in 0..n {
        for j in i..n {
            let z: f64 = rng.sample(normal);
            let v = if i == j {
                epsilon * std::f64::consts::SQRT_2 * z
            } else {
                epsilon * z
            };
            if bandwidth.map_or(true, |w| j - i <= w) {
                y[(i, j)] = v;
                y[(j, i)] = v;
            }
        }
    }
    Ok(y)
}

/// Two-level system joined to the random-matrix bath.
#[derive(Debug, Clone)]
pub struct RmmJointModel {
    /// System splitting Delta E; levels sit at 0 and this.
    pub splitting: f64,
    pub bath: RmmBath,
    /// Bath operator Y of the sigma_x tensor Y interaction.
    pub coupling: DMatrix<f64>,
    /// GOE scale Y was drawn with; <Y^2> in the rate prediction.
    pub coupling_strength: f64,
    pub seed: u64,
}

impl RmmJointModel {
    pub fn bath_levels(&self) -> usize {
        self.bath.energies.len()
    }

    /// Joint dimension 2 N_b. Ground block first, excited block second.
    pub fn dim(&self) -> usize {
        2 * self.bath_levels()
    }

    /// H = H_sys tensor 1 + 1 tensor H_bath + sigma_x tensor Y, real
    /// symmetric in the (system, bath) product basis.
    pub fn assemble_hamiltonian(&self) -> DMatrix<f64> {
        let nb = self.bath_levels();
        let mut h = DMatrix::zeros(2 * nb, 2 * nb);
        for k in 0..nb {
            h[(k, k)] = self.bath.energies[k];
            h[(nb + k, nb + k)] = self.bath.energies[k] + self.splitting;
        }
        h.view_mut((0, nb), (nb, nb)).copy_from(&self.coupling);
        h.view_mut((nb, 0), (nb, nb)).copy_from(&self.coupling);
        h
    }
}

/// Builds bath and coupling from one spec. The splitting must be positive;
/// it is the Delta E whose Boltzmann factor the experiment measures.
pub fn build_rmm_joint(spec: &RmmBathSpec, splitting: f64) -> Result<RmmJointModel> {
    if !(splitting > 0.0) || !splitting.is_finite() {
        return Err(Error::domain(format!(
            "system splitting must be positive and finite, got {splitting}"
        )));
    }
    let bath = build_rmm_bath(spec)?;
    let coupling = sample_random_coupling(spec.level_count, spec.coupling_strength, spec.seed)?;
    Ok(RmmJointModel {
        splitting,
        bath,
        coupling,
        coupling_strength: spec.coupling_strength,
        seed: spec.seed,
    })
}

/// Which state the system starts in; the bath band is the same either way.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RmmProtocol {
    StartExcited,
    StartGroundThenUp,
}

/// Populations of the two system levels along a propagation.
#[derive(Debug, Clone)]
pub struct RmmTrajectory {
    pub times: Vec<f64>,
    pub excited: Vec<f64>,
    pub ground: Vec<f64>,
    /// max_t | ||psi(t)|| - ||psi(0)|| |.
    pub norm_drift: f64,
}

/// Propagator from one dense eigendecomposition of the joint Hamiltonian.
/// Build once, run every protocol and time grid against it.
pub struct RmmPropagator {
    eigenvalues: DVector<f64>,
    eigenvectors: DMatrix<f64>,
    nb: usize,
}

impl RmmPropagator {
    pub fn new(model: &RmmJointModel) -> Result<Self> {
        let h = model.assemble_hamiltonian();
        let eig = h.symmetric_eigen();
        if eig.eigenvalues.iter().any(|v| !v.is_finite()) {
            return Err(Error::numerical(
                "eigendecomposition of the joint Hamiltonian produced non-finite values",
            ));
        }
        Ok(Self {
            eigenvalues: eig.eigenvalues,
            eigenvectors: eig.eigenvectors,
            nb: model.bath_levels(),
        })
    }

    /// psi(t) = V e^{-i Lambda t} V^T psi(0), evaluated per output time.
    /// Norm is conserved up to the orthonormality defect of V, which the
    /// drift field reports rather than hides.
    pub fn trajectory(&self, initial: &[Complex64], times: &[f64]) -> Result<RmmTrajectory> {
        let dim = 2 * self.nb;
        if initial.len() != dim {
            return Err(Error::dimension(format!(
                "initial state length {} vs joint dimension {dim}",
                initial.len()
            )));
        }
        validate_times(times)?;
        let norm0 = initial.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        if !(norm0 > 0.0) || !norm0.is_finite() {
            return Err(Error::domain(format!("initial state norm {norm0}")));
        }

        let re0 = DVector::from_fn(dim, |i, _| initial[i].re);
        let im0 = DVector::from_fn(dim, |i, _| initial[i].im);
        let cr = self.eigenvectors.tr_mul(&re0);
        let ci = self.eigenvectors.tr_mul(&im0);

        let mut d = DMatrix::<f64>::zeros(dim, 2);
        let mut psi = DMatrix::<f64>::zeros(dim, 2);
        let mut excited = Vec::with_capacity(times.len());
        let mut ground = Vec::with_capacity(times.len());
        let mut drift = 0.0_f64;
        for &t in times {
            for j in 0..dim {
                let (s, c) = (self.eigenvalues[j] * t).sin_cos();
                d[(j, 0)] = cr[j] * c + ci[j] * s;
                d[(j, 1)] = ci[j] * c - cr[j] * s;
            }
            psi.gemm(1.0, &self.eigenvectors, &d, 0.0);
            let mut pg = 0.0;
            let mut pe = 0.0;
            for i in 0..self.nb {
                pg += psi[(i, 0)] * psi[(i, 0)] + psi[(i, 1)] * psi[(i, 1)];
            }
            for i in self.nb..dim {
                pe += psi[(i, 0)] * psi[(i, 0)] + psi[(i, 1)] * psi[(i, 1)];
            }
            drift = drift.max(((pg + pe).sqrt() - norm0).abs());
            ground.push(pg);
            excited.push(pe);
        }
        Ok(RmmTrajectory {
            times: times.to_vec(),
            excited,
            ground,
            norm_drift: drift,
        })
    }

    /// Populations for the uniform incoherent mixture over the joint
    /// basis states in `members`: the exact average of `trajectory` over
    /// preparation phases, with no randomness left. Each block population
    /// is the quadratic form u(t)^T (G o W) u(t) where u_n stacks
    /// cos(lambda_n t) and sin(lambda_n t), G is the Gram matrix of that
    /// block's eigenvector rows and W the Gram matrix of the member rows.
    /// The drift field reports max_t |P_g + P_e - 1|, the trace defect
    /// inherited from the eigenvectors' orthonormality error.
    pub fn mixed_band_trajectory(&self, members: &[usize], times: &[f64]) -> Result<RmmTrajectory> {
        let dim = 2 * self.nb;
        if members.is_empty() {
            return Err(Error::domain("empty band member list"));
        }
        if let Some(&bad) = members.iter().find(|&&i| i >= dim) {
            return Err(Error::dimension(format!(
                "band member index {bad} vs joint dimension {dim}"
            )));
        }
        validate_times(times)?;

        let m = members.len();
        let rows = DMatrix::<f64>::from_fn(m, dim, |r, c| self.eigenvectors[(members[r], c)]);
        let w = rows.tr_mul(&rows) * (1.0 / m as f64);
        let vg = self.eigenvectors.rows(0, self.nb);
        let mut hg = vg.tr_mul(&vg);
        hg.zip_apply(&w, |a, b| *a *= b);
        let ve = self.eigenvectors.rows(self.nb, self.nb);
        let mut he = ve.tr_mul(&ve);
        he.zip_apply(&w, |a, b| *a *= b);
        drop(w);

        let mut cvec = DVector::<f64>::zeros(dim);
        let mut svec = DVector::<f64>::zeros(dim);
        let mut tmp = DVector::<f64>::zeros(dim);
        let mut excited = Vec::with_capacity(times.len());
        let mut ground = Vec::with_capacity(times.len());
        let mut drift = 0.0_f64;
        for &t in times {
            for j in 0..dim {
                let (s, c) = (self.eigenvalues[j] * t).sin_cos();
                cvec[j] = c;
                svec[j] = s;
            }
            tmp.gemv(1.0, &hg, &cvec, 0.0);
            let mut pg = cvec.dot(&tmp);
            tmp.gemv(1.0, &hg, &svec, 0.0);
            pg += svec.dot(&tmp);
            tmp.gemv(1.0, &he, &cvec, 0.0);
            let mut pe = cvec.dot(&tmp);
            tmp.gemv(1.0, &he, &svec, 0.0);
            pe += svec.dot(&tmp);
            drift = drift.max((pg + pe - 1.0).abs());
            ground.push(pg);
            excited.push(pe);
        }
        Ok(RmmTrajectory {
            times: times.to_vec(),
            excited,
            ground,
            norm_drift: drift,
        })
    }
}

fn validate_times(times: &[f64]) -> Result<()> {
    if times.is_empty() {
        return Err(Error::domain("empty time grid"));
    }
    for (i, &t) in times.iter().enumerate() {
        if !t.is_finite() || t < 0.0 {
            return Err(Error::domain(format!("time {t} at index {i}")));
        }
        if i > 0 && t <= times[i - 1] {
            return Err(Error::domain(format!(
                "times must be strictly ascending, got {t} after {}",
                times[i - 1]
            )));
        }
    }
    Ok(())
}

fn checked_band_indices(bath: &RmmBath, band: &EnergyBand) -> Result<Vec<usize>> {
    if !band.center.is_finite() || !(band.halfwidth > 0.0) || !band.halfwidth.is_finite() {
        return Err(Error::domain(format!(
            "band center {} halfwidth {} is not a finite positive band",
            band.center, band.halfwidth
        )));
    }
    let idx = bath.band_indices(band);
    if idx.is_empty() {
        return Err(Error::domain(format!(
            "band {} +- {} holds no bath levels",
            band.center, band.halfwidth
        )));
    }
    Ok(idx)
}

/// Joint-space indices of the band's bath levels in the protocol's
/// starting manifold.
pub fn protocol_band_members(
    model: &RmmJointModel,
    protocol: RmmProtocol,
    band: &EnergyBand,
) -> Result<Vec<usize>> {
    let idx = checked_band_indices(&model.bath, band)?;
    let offset = match protocol {
        RmmProtocol::StartGroundThenUp => 0,
        RmmProtocol::StartExcited => model.bath_levels(),
    };
    Ok(idx.into_iter().map(|k| k + offset).collect())
}

/// Uniform-amplitude random-phase superposition over the bath levels in
/// the band. Phases come from stream 1 of the seed so they stay decoupled
/// from the coupling draw on stream 0.
pub fn band_initial_state(bath: &RmmBath, band: &EnergyBand, seed: u64) -> Result<Vec<Complex64>> {
    let idx = checked_band_indices(bath, band)?;
    let amp = 1.0 / (idx.len() as f64).sqrt();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(1);
    let mut psi = vec![Complex64::new(0.0, 0.0); bath.level_count()];
    for &k in &idx {
        let phase = std::f64::consts::TAU * rng.gen::<f64>();
        psi[k] = Complex64::new(amp * phase.cos(), amp * phase.sin());
    }
    Ok(psi)
}

/// Joint initial state: the band superposition in the chosen system block.
pub fn protocol_initial_state(
    model: &RmmJointModel,
    protocol: RmmProtocol,
    band: &EnergyBand,
) -> Result<Vec<Complex64>> {
    let bath_state = band_initial_state(&model.bath, band, model.seed)?;
    let nb = model.bath_levels();
    let offset = match protocol {
        RmmProtocol::StartGroundThenUp => 0,
        RmmProtocol::StartExcited => nb,
    };
    let mut psi = vec![Complex64::new(0.0, 0.0); 2 * nb];
    psi[offset..offset + nb].copy_from_slice(&bath_state);
    Ok(psi)
}

/// One protocol's outcome.
#[derive(Debug, Clone)]
pub struct RmmRateResult {
    pub protocol: RmmProtocol,
    /// Downward rate G (1 - C) from the offset-exponential fit of the
    /// excited population (see the module notes).
    pub fitted_rate: f64,
    /// One sigma, propagated through G (1 - C) with the fit covariance.
    pub rate_stderr: f64,
    /// 2 pi <Y^2> density(E_dest) with <Y^2> = epsilon^2 and the density
    /// read off the realized grid at this protocol's downward destination.
    pub predicted_rate: f64,
    pub destination_energy: f64,
    /// Total relaxation rate G of the fit (downward plus upward).
    pub total_rate: f64,
    /// Fitted quasi-equilibrium excited population C.
    pub equilibrium_excited: f64,
    pub peak_time: f64,
    pub peak_excited: f64,
    pub fit_window: (f64, f64),
    pub band_level_count: usize,
    pub norm_drift: f64,
    pub trajectory: RmmTrajectory,
}

fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Runs one protocol against a prebuilt propagator, preparing the uniform
/// mixture over the band's levels in the starting manifold. The downward
/// destination is band.center + splitting when starting excited and
/// band.center when the system climbs first; both the prediction and the
/// fit window follow from the densities at the loop's two bath energies.
pub fn rmm_rate_experiment_on(
    prop: &RmmPropagator,
    model: &RmmJointModel,
    protocol: RmmProtocol,
    times: &[f64],
    band: &EnergyBand,
) -> Result<RmmRateResult> {
    let eps2 = model.coupling_strength * model.coupling_strength;
    if eps2 == 0.0 {
        return Err(Error::domain(
            "coupling strength is zero; there is no transition to fit",
        ));
    }
    let (dest, partner) = match protocol {
        RmmProtocol::StartExcited => (band.center + model.splitting, band.center),
        RmmProtocol::StartGroundThenUp => (band.center, band.center - model.splitting),
    };
    let rho_dest = model.bath.local_density(dest)?;
    let rho_partner = model.bath.local_density(partner)?;
    let two_pi = std::f64::consts::TAU;
    let predicted_rate = two_pi * eps2 * rho_dest;
    let predicted_total = two_pi * eps2 * (rho_dest + rho_partner);

    let members = protocol_band_members(model, protocol, band)?;
    let band_level_count = members.len();
    let traj = prop.mixed_band_trajectory(&members, times)?;

    let pk = argmax(&traj.excited);
    let peak_excited = traj.excited[pk];
    let peak_time = traj.times[pk];
    if protocol == RmmProtocol::StartGroundThenUp && peak_excited < MIN_EXCITATION {
        return Err(Error::numerical(format!(
            "excited population peaked at {peak_excited:.3e}, below {MIN_EXCITATION:e}; \
             increase coupling_strength"
        )));
    }

    // The three-parameter fit needs the plateau in view, or rate and
    // offset trade off freely along a soft direction. Start a couple of
    // grid correlation times in (the golden-rule transient is over on the
    // scale 2 pi / bandwidth), then run to several relaxation times,
    // staying clear of the destination manifold's recurrence.
    let span = model.bath.window.1 - model.bath.window.0;
    let start = 2.0 * two_pi / span;
    let end = (start + 6.0 / predicted_total)
        .min(std::f64::consts::PI * rho_dest)
        .min(*times.last().unwrap());
    let window = (start, end);
    if !(window.1 > window.0) {
        return Err(Error::fit(format!(
            "fit window [{:.3}, {:.3}] is empty; extend the time grid past the transient",
            window.0, window.1
        )));
    }
    let fit = fit_exp_offset(&traj.times, &traj.excited, window)?;
    let c = fit.offset;
    if !(c < 1.0) {
        return Err(Error::fit(format!(
            "fitted equilibrium excited population {c} leaves no downward share"
        )));
    }
    let down = fit.rate * (1.0 - c);
    let var = (1.0 - c) * (1.0 - c) * fit.rate_stderr * fit.rate_stderr
        + fit.rate * fit.rate * fit.offset_stderr * fit.offset_stderr
        - 2.0 * fit.rate * (1.0 - c) * fit.cov_rate_offset;
    let rate_stderr = var.max(0.0).sqrt();

    Ok(RmmRateResult {
        protocol,
        fitted_rate: down,
        rate_stderr,
        predicted_rate,
        destination_energy: dest,
        total_rate: fit.rate,
        equilibrium_excited: c,
        peak_time,
        peak_excited,
        fit_window: window,
        band_level_count,
        norm_drift: traj.norm_drift,
        trajectory: traj,
    })
}

/// Convenience wrapper that eigendecomposes for a single protocol.
pub fn rmm_rate_experiment(
    model: &RmmJointModel,
    protocol: RmmProtocol,
    times: &[f64],
    band: &EnergyBand,
) -> Result<RmmRateResult> {
    let prop = RmmPropagator::new(model)?;
    rmm_rate_experiment_on(&prop, model, protocol, times, band)
}

/// Both protocols against one eigendecomposition, plus the ratio the
/// central claim is about.
#[derive(Debug, Clone)]
pub struct RmmProtocolComparison {
    pub start_excited: RmmRateResult,
    pub start_ground: RmmRateResult,
    /// Fitted downward-rate ratio, excited start over ground start.
    pub rate_ratio: f64,
    /// Fit uncertainties combined in quadrature.
    pub ratio_stderr: f64,
    /// Realized-grid density ratio of the two destinations, the
    /// finite-size stand-in for e^{beta splitting}.
    pub predicted_ratio: f64,
}

pub fn rmm_protocol_pair(
    model: &RmmJointModel,
    times: &[f64],
    band: &EnergyBand,
) -> Result<RmmProtocolComparison> {
    let prop = RmmPropagator::new(model)?;
    let start_excited =
        rmm_rate_experiment_on(&prop, model, RmmProtocol::StartExcited, times, band)?;
    let start_ground =
        rmm_rate_experiment_on(&prop, model, RmmProtocol::StartGroundThenUp, times, band)?;
    let rate_ratio = start_excited.fitted_rate / start_ground.fitted_rate;
    let rel_a = start_excited.rate_stderr / start_excited.fitted_rate;
    let rel_b = start_ground.rate_stderr / start_ground.fitted_rate;
    let ratio_stderr = rate_ratio.abs() * rel_a.hypot(rel_b);
    let predicted_ratio = start_excited.predicted_rate / start_ground.predicted_rate;
    Ok(RmmProtocolComparison {
        start_excited,
        start_ground,
        rate_ratio,
        ratio_stderr,
        predicted_ratio,
    })
}

/// Long-time averaged system populations against the Boltzmann weights
/// at theta_eff.
#[derive(Debug, Clone)]
pub struct ThermalizationReport {
    pub averaged_excited: f64,
    pub averaged_ground: f64,
    /// e^{-beta splitting} / (1 + e^{-beta splitting}).
    pub boltzmann_excited: f64,
    /// L1 over the two system populations.
    pub l1_distance: f64,
    pub averaging_window: (f64, f64),
    pub norm_drift: f64,
}

/// Starts in the ground state inside the band so the climb to thermal
/// weights is genuine, then averages over the second half of the grid.
pub fn rmm_thermalization_check(
    model: &RmmJointModel,
    times: &[f64],
    band: &EnergyBand,
) -> Result<ThermalizationReport> {
    let prop = RmmPropagator::new(model)?;
    let members = protocol_band_members(model, RmmProtocol::StartGroundThenUp, band)?;
    let traj = prop.mixed_band_trajectory(&members, times)?;
    let t_last = *times.last().unwrap();
    let t_half = 0.5 * t_last;
    let tail: Vec<usize> = (0..times.len()).filter(|&i| times[i] >= t_half).collect();
    if tail.len() < 2 {
        return Err(Error::domain(
            "time grid too short to average over its second half",
        ));
    }
    let nf = tail.len() as f64;
    let averaged_excited = tail.iter().map(|&i| traj.excited[i]).sum::<f64>() / nf;
    let averaged_ground = tail.iter().map(|&i| traj.ground[i]).sum::<f64>() / nf;
    let w = (-model.bath.beta * model.splitting).exp();
    let boltzmann_excited = w / (1.0 + w);
    let l1 = (averaged_excited - boltzmann_excited).abs()
        + (averaged_ground - (1.0 - boltzmann_excited)).abs();
    Ok(ThermalizationReport {
        averaged_excited,
        averaged_ground,
        boltzmann_excited,
        l1_distance: l1,
        averaging_window: (t_half, t_last),
        norm_drift: traj.norm_drift,
    })
}

/// The oscillator-bath control run through the weak-damping master
/// equation: same two protocols, same offset-exponential extraction.
#[derive(Debug, Clone)]
pub struct OscillatorControlReport {
    pub start_excited_rate: f64,
    pub start_excited_stderr: f64,
    pub start_ground_rate: f64,
    pub start_ground_stderr: f64,
    pub ratio: f64,
    pub ratio_stderr: f64,
    /// gamma (n_T + 1), what both protocols should see.
    pub nominal_downward: f64,
}

/// A qubit of the given splitting damped at bare rate gamma by a thermal
/// oscillator quasi-continuum at temperature theta. The bath's downward
/// rate gamma (n_T + 1) does not care how the system reached its level,
/// so the two protocols agree and the ratio is one; this is the control
/// against which the random-matrix state dependence stands out.
pub fn oscillator_control_experiment(
    splitting: f64,
    gamma: f64,
    theta: f64,
    times: &[f64],
    tol: f64,
) -> Result<OscillatorControlReport> {
    if !(splitting > 0.0) || !splitting.is_finite() {
        return Err(Error::domain(format!(
            "splitting must be positive and finite, got {splitting}"
        )));
    }
    if !(gamma > 0.0) || !(gamma < 0.1 * splitting) {
        return Err(Error::domain(format!(
            "control needs 0 < gamma < splitting/10, got gamma {gamma} at splitting {splitting}"
        )));
    }
    if !(theta > 0.0) || !theta.is_finite() {
        return Err(Error::domain(format!(
            "control temperature must be positive so the ground start can climb, got {theta}"
        )));
    }
    // Quasi-continuum wide enough that the splitting sits far from both
    // band edges; populations do not feel the Lamb shift, so it stays off.
    let delta_omega = splitting / 400.0;
    let oscillator_count = 1601;
    let coupling = coupling_for_rate(gamma, delta_omega)?;
    let bath = BathSpec {
        delta_omega,
        oscillator_count,
        coupling,
        theta,
    };
    let system = SystemSpec::qubit(splitting)?;
    let catalog = build_transition_catalog(&system, &bath, DEFAULT_TOL_DEG, DEFAULT_TOL_SEP)?;
    let model = build_lindblad(&system, &catalog, &bath, false, false)?;

    let t_last = *times
        .last()
        .ok_or_else(|| Error::domain("empty time grid"))?;
    let mut fitted = [0.0_f64; 2];
    let mut stderr = [0.0_f64; 2];
    for (slot, level) in [(0usize, 1usize), (1, 0)] {
        let rho0 = DensityMatrix::pure(2, level)?;
        let traj = propagate_rho(&model, &rho0, times, tol)?;
        // A Markovian generator has no transient to exclude.
        let fit = fit_exp_offset(&traj.times, &traj.populations[1], (0.0, t_last))?;
        let c = fit.offset;
        if !(c < 1.0) {
            return Err(Error::fit(format!(
                "control fit found equilibrium excited population {c}"
            )));
        }
        let down = fit.rate * (1.0 - c);
        let var = (1.0 - c) * (1.0 - c) * fit.rate_stderr * fit.rate_stderr
            + fit.rate * fit.rate * fit.offset_stderr * fit.offset_stderr
            - 2.0 * fit.rate * (1.0 - c) * fit.cov_rate_offset;
        fitted[slot] = down;
        stderr[slot] = var
            .max(0.0)
            .sqrt()
            .max(CONTROL_RATE_RESOLUTION * tol * fit.rate);
    }
    let ratio = fitted[0] / fitted[1];
    let ratio_stderr = ratio.abs() * (stderr[0] / fitted[0]).hypot(stderr[1] / fitted[1]);
    let n_t = thermal_occupation(splitting, theta)?;
    Ok(OscillatorControlReport {
        start_excited_rate: fitted[0],
        start_excited_stderr: stderr[0],
        start_ground_rate: fitted[1],
        start_ground_stderr: stderr[1],
        ratio,
        ratio_stderr,
        nominal_downward: gamma * (n_t + 1.0),
    })
}
