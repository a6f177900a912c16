//! Weak-damping thermal master equation: construction from a transition
//! catalog, adaptive propagation, and steady states.
//!
//! Each transition group j contributes a downward channel
//! (gamma_j (n_j + 1), L_j) and an upward channel (gamma_j n_j, L_j^dagger),
//! n_j the thermal occupation at the group frequency. The alternative
//! grouping that writes the thermal part as n_j (D[L_j] + D[L_j^dagger])
//! collapses to the same channels once the zero-temperature line is folded
//! in; the qubit closed forms in the tests pin this reading.

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::model::{BathSpec, SystemSpec, TransitionCatalog};
use crate::rates::{jump_rates, lamb_shift, thermal_occupation};
use crate::stochastic::Direction;

/// Trace must sit this close to 1.
pub const TRACE_TOL: f64 = 1e-9;
/// Hermiticity defect bound, relative to the largest entry.
pub const HERMITICITY_TOL: f64 = 1e-12;
/// Most negative admissible eigenvalue.
pub const EIGENVALUE_FLOOR: f64 = -1e-9;
/// Largest system dimension solved by the dense vectorized null-space
/// path; larger models fall back to long-time propagation.
pub const DENSE_STEADY_STATE_LIMIT: usize = 64;

const ONE: Complex64 = Complex64::new(1.0, 0.0);

/// Validated density matrix. Construction enforces the state invariants;
/// propagation outputs report their drift instead of being renormalized.
#[derive(Debug, Clone)]
pub struct DensityMatrix {
    pub matrix: DMatrix<Complex64>,
}

impl DensityMatrix {
    pub fn new(matrix: DMatrix<Complex64>) -> Result<Self> {
        let n = matrix.nrows();
        if n == 0 || matrix.ncols() != n {
            return Err(Error::dimension(format!(
                "density matrix must be square and nonempty, got {}x{}",
                matrix.nrows(),
                matrix.ncols()
            )));
        }
        let scale = matrix
            .iter()
            .map(|z| z.norm())
            .fold(0.0_f64, f64::max)
            .max(1.0);
        for i in 0..n {
            for j in i..n {
                let defect = (matrix[(i, j)] - matrix[(j, i)].conj()).norm();
                if defect > HERMITICITY_TOL * scale {
                    return Err(Error::domain(format!(
                        "density matrix is not Hermitian: ({i},{j}) defect {defect:e}"
                    )));
                }
            }
        }
        let trace: Complex64 = (0..n).map(|i| matrix[(i, i)]).sum();
        if (trace - ONE).norm() > TRACE_TOL {
            return Err(Error::domain(format!(
                "density matrix trace {trace} must be 1 within {TRACE_TOL:e}"
            )));
        }
        let lowest = min_eigenvalue(&matrix);
        if lowest < EIGENVALUE_FLOOR {
            return Err(Error::domain(format!(
                "density matrix has eigenvalue {lowest:e} below {EIGENVALUE_FLOOR:e}"
            )));
        }
        Ok(Self { matrix })
    }

    /// |level><level|.
    pub fn pure(dim: usize, level: usize) -> Result<Self> {
        if level >= dim {
            return Err(Error::dimension(format!(
                "pure state level {level} outside dimension {dim}"
            )));
        }
        let mut m = DMatrix::zeros(dim, dim);
        m[(level, level)] = ONE;
        Self::new(m)
    }

    /// Diagonal mixture with the given populations.
    pub fn from_diagonal(populations: &[f64]) -> Result<Self> {
        let mut m = DMatrix::zeros(populations.len(), populations.len());
        for (i, &p) in populations.iter().enumerate() {
            if !(p >= 0.0) {
                return Err(Error::domain(format!(
                    "population {i} must be nonnegative, got {p}"
                )));
            }
            m[(i, i)] = Complex64::new(p, 0.0);
        }
        Self::new(m)
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn population(&self, level: usize) -> f64 {
        self.matrix[(level, level)].re
    }

    pub fn min_eigenvalue(&self) -> f64 {
        min_eigenvalue(&self.matrix)
    }
}

/// Smallest eigenvalue of the Hermitian part.
fn min_eigenvalue(m: &DMatrix<Complex64>) -> f64 {
    let h = (m + m.adjoint()).scale(0.5);
    h.symmetric_eigen()
        .eigenvalues
        .iter()
        .cloned()
        .fold(f64::INFINITY, f64::min)
}

/// c rho c^dagger - (c^dagger c rho + rho c^dagger c) / 2. Traceless for
/// any inputs.
pub fn dissipator_apply(
    c: &DMatrix<Complex64>,
    rho: &DMatrix<Complex64>,
) -> Result<DMatrix<Complex64>> {
    let n = rho.nrows();
    if rho.ncols() != n || c.nrows() != n || c.ncols() != n {
        return Err(Error::dimension(format!(
            "dissipator needs square operands of one size, got c {}x{}, rho {}x{}",
            c.nrows(),
            c.ncols(),
            rho.nrows(),
            rho.ncols()
        )));
    }
    let cd = c.adjoint();
    let a = &cd * c;
    Ok(c * rho * &cd - (&a * rho + rho * &a).scale(0.5))
}

/// One dissipation channel: rate times D[jump].
#[derive(Debug, Clone)]
pub struct LindbladChannel {
    pub rate: f64,
    pub jump: DMatrix<Complex64>,
    /// Catalog group the channel was built from.
    pub group: usize,
    pub direction: Direction,
}

/// Rate pair of one transition group. down_rate is built as up_rate plus
/// the bare group rate, so down_rate == up_rate + bare holds bitwise, and
/// up_rate / down_rate = exp(-frequency / theta) to machine precision.
#[derive(Debug, Clone)]
pub struct ChannelPair {
    pub group: usize,
    pub frequency: f64,
    pub occupation: f64,
    pub down_rate: f64,
    pub up_rate: f64,
}

/// Master-equation generator: diagonal Hamiltonian plus level corrections
/// and a channel list.
#[derive(Debug, Clone)]
pub struct LindbladModel {
    /// Level energies.
    pub hamiltonian: Vec<f64>,
    /// Second-order level corrections; all zero unless requested.
    pub lamb: Vec<f64>,
    pub channels: Vec<LindbladChannel>,
    /// One entry per transition group, pairing the thermal channels.
    pub pairs: Vec<ChannelPair>,
    /// Bath temperature the channels were built at.
    pub theta: f64,
    /// Applicability findings, carried into run metadata.
    pub warnings: Vec<String>,
}

impl LindbladModel {
    pub fn dim(&self) -> usize {
        self.hamiltonian.len()
    }

    fn effective_levels(&self) -> Vec<f64> {
        self.hamiltonian
            .iter()
            .zip(&self.lamb)
            .map(|(h, l)| h + l)
            .collect()
    }

    /// Right-hand side of the master equation at rho.
    pub fn apply_liouvillian(&self, rho: &DMatrix<Complex64>) -> Result<DMatrix<Complex64>> {
        let n = self.dim();
        if rho.nrows() != n || rho.ncols() != n {
            return Err(Error::dimension(format!(
                "state is {}x{}, model has {n} levels",
                rho.nrows(),
                rho.ncols()
            )));
        }
        let levels = self.effective_levels();
        let mut out = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                out[(i, j)] = Complex64::new(0.0, -(levels[i] - levels[j])) * rho[(i, j)];
            }
        }
        for ch in &self.channels {
            out += dissipator_apply(&ch.jump, rho)?.scale(ch.rate);
        }
        Ok(out)
    }
}

/// Builds the thermal master equation for a system/bath pair.
///
/// Construction refuses systems the weak-damping treatment cannot be
/// trusted on (failing rate/frequency checks or ambiguous transition
/// spacing) unless `override_applicability` is set, in which case the
/// failure is carried as a warning. With `include_lamb`, every
/// transition's upper level is shifted down by the second-order value for
/// a band extending cutoff - frequency above and frequency below the
/// transition; shifts sum when a level is the upper end of several
/// transitions, and that summation is noted in the warnings.
pub fn build_lindblad(
    system: &SystemSpec,
    catalog: &TransitionCatalog,
    bath: &BathSpec,
    include_lamb: bool,
    override_applicability: bool,
) -> Result<LindbladModel> {
    let n = system.len();
    if catalog.dim != n {
        return Err(Error::dimension(format!(
            "catalog acts on {} levels, system has {n}",
            catalog.dim
        )));
    }
    let report = crate::model::weak_damping_report(catalog);
    let mut warnings = report.warnings.clone();
    if !report.applicable {
        if !override_applicability {
            let failing = report.checks.iter().filter(|c| !c.pass).count();
            return Err(Error::domain(format!(
                "weak-damping construction is unreliable here: {failing} transitions \
                 fail the rate/frequency check and {} pairs are ambiguously spaced; \
                 set the override flag to build anyway",
                report.ambiguous_pairs
            )));
        }
        warnings.push(
            "applicability override: model built despite failing weak-damping checks".to_string(),
        );
    }

    let mut lamb = vec![0.0; n];
    if include_lamb {
        let cutoff = bath.cutoff();
        let mut transitions_above = vec![0usize; n];
        for (k, t) in catalog.transitions.iter().enumerate() {
            let above = cutoff - t.frequency;
            if above <= 0.0 {
                return Err(Error::domain(format!(
                    "transition {k} at frequency {} reaches the band cutoff {cutoff}; \
                     its level shift is undefined",
                    t.frequency
                )));
            }
            // Red shift when more band lies above the transition than below.
            lamb[t.upper] -= lamb_shift(t.rate, above, t.frequency)?;
            transitions_above[t.upper] += 1;
        }
        for (i, &count) in transitions_above.iter().enumerate() {
            if count > 1 {
                warnings.push(format!(
                    "level {i} is the upper end of {count} transitions; \
                     their level shifts are summed"
                ));
            }
        }
    }

    let mut channels = Vec::new();
    let mut pairs = Vec::new();
    for (j, group) in catalog.groups.iter().enumerate() {
        let (up, down) = jump_rates(catalog.bare_rate, group.frequency, bath.theta)?;
        channels.push(LindbladChannel {
            rate: down,
            jump: group.jump_operator.clone(),
            group: j,
            direction: Direction::Downward,
        });
        // Cold bath: the upward channel carries no weight and is dropped.
        if up > 0.0 {
            channels.push(LindbladChannel {
                rate: up,
                jump: group.jump_operator.adjoint(),
                group: j,
                direction: Direction::Upward,
            });
        }
        pairs.push(ChannelPair {
            group: j,
            frequency: group.frequency,
            occupation: thermal_occupation(group.frequency, bath.theta)?,
            down_rate: down,
            up_rate: up,
        });
    }

    Ok(LindbladModel {
        hamiltonian: system.level_energies.clone(),
        lamb,
        channels,
        pairs,
        theta: bath.theta,
        warnings,
    })
}

/// Output of `propagate_rho`. Drift diagnostics are reported, never
/// corrected.
#[derive(Debug, Clone)]
pub struct RhoTrajectory {
    pub times: Vec<f64>,
    pub states: Vec<DMatrix<Complex64>>,
    /// Level populations, indexed [level][time] like the microscopic
    /// traces.
    pub populations: Vec<Vec<f64>>,
    /// max |tr rho - 1| over the outputs.
    pub trace_drift: f64,
    /// Most negative eigenvalue over the outputs.
    pub min_eigenvalue: f64,
    /// Accepted integrator steps.
    pub steps: usize,
}

struct PreparedChannel {
    rate: f64,
    jump: DMatrix<Complex64>,
    jump_adjoint: DMatrix<Complex64>,
    /// jump^dagger jump.
    absorption: DMatrix<Complex64>,
}

fn prepare_channels(model: &LindbladModel) -> Vec<PreparedChannel> {
    model
        .channels
        .iter()
        .map(|ch| {
            let jump_adjoint = ch.jump.adjoint();
            let absorption = &jump_adjoint * &ch.jump;
            PreparedChannel {
                rate: ch.rate,
                jump: ch.jump.clone(),
                jump_adjoint,
                absorption,
            }
        })
        .collect()
}

fn master_rhs(
    levels: &[f64],
    channels: &[PreparedChannel],
    rho: &DMatrix<Complex64>,
) -> DMatrix<Complex64> {
    let n = levels.len();
    let mut out = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            out[(i, j)] = Complex64::new(0.0, -(levels[i] - levels[j])) * rho[(i, j)];
        }
    }
    for ch in channels {
        let gain = &ch.jump * rho * &ch.jump_adjoint;
        let loss = (&ch.absorption * rho + rho * &ch.absorption).scale(0.5);
        out += (gain - loss).scale(ch.rate);
    }
    out
}

// Dormand-Prince 5(4) coefficients.
const A2: [f64; 1] = [1.0 / 5.0];
const A3: [f64; 2] = [3.0 / 40.0, 9.0 / 40.0];
const A4: [f64; 3] = [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0];
const A5: [f64; 4] = [
    19372.0 / 6561.0,
    -25360.0 / 2187.0,
    64448.0 / 6561.0,
    -212.0 / 729.0,
];
const A6: [f64; 5] = [
    9017.0 / 3168.0,
    -355.0 / 33.0,
    46732.0 / 5247.0,
    49.0 / 176.0,
    -5103.0 / 18656.0,
];
const B5: [f64; 6] = [
    35.0 / 384.0,
    0.0,
    500.0 / 1113.0,
    125.0 / 192.0,
    -2187.0 / 6784.0,
    11.0 / 84.0,
];
// Fifth-order weights minus the embedded fourth-order weights.
const ERR: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];

fn linear_combination(
    base: &DMatrix<Complex64>,
    h: f64,
    weights: &[f64],
    stages: &[DMatrix<Complex64>],
) -> DMatrix<Complex64> {
    let mut out = base.clone();
    for (w, k) in weights.iter().zip(stages) {
        if *w != 0.0 {
            let c = Complex64::new(h * w, 0.0);
            out.zip_apply(k, |o, kv| *o += c * kv);
        }
    }
    out
}

/// Integrates the master equation from rho0 at t = 0, sampling at `times`.
///
/// Embedded 5(4) pair with proportional step control; a step is accepted
/// when the local error estimate stays below tol componentwise against the
/// scale tol * (1 + |entry|). Trace and positivity drift of the outputs
/// are measured and reported in the trajectory, never repaired.
pub fn propagate_rho(
    model: &LindbladModel,
    rho0: &DensityMatrix,
    times: &[f64],
    tol: f64,
) -> Result<RhoTrajectory> {
    let n = model.dim();
    if rho0.dim() != n {
        return Err(Error::dimension(format!(
            "initial state has {} levels, model has {n}",
            rho0.dim()
        )));
    }
    if times.is_empty() {
        return Err(Error::domain("need at least one output time"));
    }
    if !(times[0] >= 0.0) || times.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::domain(
            "output times must be nonnegative and strictly ascending",
        ));
    }
    if !(tol > 0.0 && tol <= 1e-2) {
        return Err(Error::domain(format!(
            "tolerance must lie in (0, 1e-2], got {tol}"
        )));
    }

    let levels = model.effective_levels();
    let channels = prepare_channels(model);
    let rhs = |rho: &DMatrix<Complex64>| master_rhs(&levels, &channels, rho);

    let t_end = *times.last().unwrap();
    let mut t = 0.0_f64;
    let mut y = rho0.matrix.clone();
    let mut k1 = rhs(&y);
    let mut steps = 0usize;

    // Conservative starting step; the controller corrects it within a few
    // steps.
    let rhs_scale = k1.iter().map(|z| z.norm()).fold(0.0_f64, f64::max);
    let mut h = (0.01 / rhs_scale.max(1e-12)).min(t_end.max(1e-12) / 16.0);

    let mut states = Vec::with_capacity(times.len());
    let mut trace_drift = 0.0_f64;
    let mut lowest = f64::INFINITY;

    for &t_out in times {
        while t < t_out {
            let clipped = h.min(t_out - t);
            let k2 = rhs(&linear_combination(&y, clipped, &A2, std::slice::from_ref(&k1)));
            let k3 = rhs(&linear_combination(&y, clipped, &A3, &[k1.clone(), k2.clone()]));
            // Stage vectors are cheap to clone at master-equation sizes.
            let k4 = rhs(&linear_combination(
                &y,
                clipped,
                &A4,
                &[k1.clone(), k2.clone(), k3.clone()],
            ));
            let k5 = rhs(&linear_combination(
                &y,
                clipped,
                &A5,
                &[k1.clone(), k2.clone(), k3.clone(), k4.clone()],
            ));
            let k6 = rhs(&linear_combination(
                &y,
                clipped,
                &A6,
                &[k1.clone(), k2.clone(), k3.clone(), k4.clone(), k5.clone()],
            ));
            let stages = [k1.clone(), k2, k3, k4, k5, k6];
            let y5 = linear_combination(&y, clipped, &B5, &stages);
            let k7 = rhs(&y5);

            let mut err: f64 = 0.0;
            for idx in 0..y.len() {
                let mut e = Complex64::new(0.0, 0.0);
                for (w, k) in ERR.iter().zip(stages.iter().chain(std::iter::once(&k7))) {
                    e += Complex64::new(clipped * w, 0.0) * k[idx];
                }
                let scale = tol * (1.0 + y[idx].norm().max(y5[idx].norm()));
                err = err.max(e.norm() / scale);
            }

            if err <= 1.0 {
                t = if clipped == t_out - t { t_out } else { t + clipped };
                y = y5;
                k1 = k7;
                steps += 1;
            }
            let factor = (0.9 * err.max(1e-12).powf(-0.2)).clamp(0.2, 5.0);
            h = clipped * if err <= 1.0 { factor } else { factor.min(1.0) };
            if h < 1e-14 * (1.0 + t.abs()) {
                return Err(Error::numerical(format!(
                    "step size underflow at t = {t}; local error target {tol:e} unreachable"
                )));
            }
        }
        let trace: Complex64 = (0..n).map(|i| y[(i, i)]).sum();
        trace_drift = trace_drift.max((trace - ONE).norm());
        lowest = lowest.min(min_eigenvalue(&y));
        states.push(y.clone());
    }

    let populations = (0..n)
        .map(|i| states.iter().map(|s| s[(i, i)].re).collect())
        .collect();
    Ok(RhoTrajectory {
        times: times.to_vec(),
        states,
        populations,
        trace_drift,
        min_eigenvalue: lowest,
        steps,
    })
}

/// Connected components of the channel graph (levels joined by any nonzero
/// off-diagonal jump entry).
fn channel_blocks(model: &LindbladModel) -> Vec<Vec<usize>> {
    let n = model.dim();
    let mut parent: Vec<usize> = (0..n).collect();
    fn root(parent: &mut Vec<usize>, mut i: usize) -> usize {
        while parent[i] != i {
            parent[i] = parent[parent[i]];
            i = parent[i];
        }
        i
    }
    for ch in &model.channels {
        for i in 0..n {
            for j in 0..n {
                if i != j && ch.jump[(i, j)].norm() > 0.0 {
                    let (a, b) = (root(&mut parent, i), root(&mut parent, j));
                    parent[a] = b;
                }
            }
        }
    }
    let mut blocks: Vec<Vec<usize>> = Vec::new();
    let mut index = vec![usize::MAX; n];
    for i in 0..n {
        let r = root(&mut parent, i);
        if index[r] == usize::MAX {
            index[r] = blocks.len();
            blocks.push(Vec::new());
        }
        blocks[index[r]].push(i);
    }
    blocks
}

fn require_connected(model: &LindbladModel) -> Result<()> {
    let blocks = channel_blocks(model);
    if blocks.len() > 1 {
        let listing = blocks
            .iter()
            .map(|b| format!("{b:?}"))
            .collect::<Vec<_>>()
            .join(" | ");
        return Err(Error::domain(format!(
            "channel graph does not connect the levels; blocks: {listing}"
        )));
    }
    Ok(())
}

fn vec_index(n: usize, i: usize, j: usize) -> usize {
    i + n * j
}

/// Dense matrix of the vectorized generator acting on vec(rho).
fn liouvillian_matrix(model: &LindbladModel) -> DMatrix<Complex64> {
    let n = model.dim();
    let levels = model.effective_levels();
    let mut m = DMatrix::<Complex64>::zeros(n * n, n * n);
    for i in 0..n {
        for j in 0..n {
            m[(vec_index(n, i, j), vec_index(n, i, j))] +=
                Complex64::new(0.0, -(levels[i] - levels[j]));
        }
    }
    for ch in &model.channels {
        let l = &ch.jump;
        let a = l.adjoint() * l;
        let r = Complex64::new(ch.rate, 0.0);
        let half = Complex64::new(0.5 * ch.rate, 0.0);
        for i in 0..n {
            for j in 0..n {
                let row = vec_index(n, i, j);
                for p in 0..n {
                    for q in 0..n {
                        let gain = l[(i, p)] * l[(j, q)].conj();
                        if gain != Complex64::new(0.0, 0.0) {
                            m[(row, vec_index(n, p, q))] += r * gain;
                        }
                    }
                    m[(row, vec_index(n, p, j))] -= half * a[(i, p)];
                    m[(row, vec_index(n, i, p))] -= half * a[(p, j)];
                }
            }
        }
    }
    m
}

/// Stationary state of the generator.
///
/// Dimensions up to `DENSE_STEADY_STATE_LIMIT` use a dense null-space
/// solve of the vectorized generator; larger models relax a maximally
/// mixed state by propagation. Errors when the channel graph leaves
/// levels disconnected or the stationary state is not unique.
pub fn steady_state(model: &LindbladModel) -> Result<DensityMatrix> {
    require_connected(model)?;
    if model.dim() <= DENSE_STEADY_STATE_LIMIT {
        dense_steady_state(model)
    } else {
        relax_to_steady_state(model)
    }
}

fn dense_steady_state(model: &LindbladModel) -> Result<DensityMatrix> {
    let n = model.dim();
    if n == 1 {
        return DensityMatrix::pure(1, 0);
    }
    let nn = n * n;
    let m = liouvillian_matrix(model);

    // Null-space multiplicity from the full-pivot decomposition; the
    // generator always has at least one stationary direction.
    let lu = m.clone().full_piv_lu();
    let u = lu.u();
    let pivot_scale = (0..nn)
        .map(|i| u[(i, i)].norm())
        .fold(0.0_f64, f64::max)
        .max(f64::MIN_POSITIVE);
    let rank = (0..nn).filter(|&i| u[(i, i)].norm() > 1e-10 * pivot_scale).count();
    let nullity = nn - rank;
    if nullity != 1 {
        return Err(Error::numerical(format!(
            "stationary state is not unique: null space dimension {nullity}"
        )));
    }

    // Adding the trace functional on the diagonal rows makes the system
    // nonsingular with the trace-1 stationary state as its solution.
    let mut augmented = m.clone();
    let weight = Complex64::new(1.0 / n as f64, 0.0);
    for i in 0..n {
        for p in 0..n {
            augmented[(vec_index(n, i, i), vec_index(n, p, p))] += weight;
        }
    }
    let mut rhs = nalgebra::DVector::<Complex64>::zeros(nn);
    for i in 0..n {
        rhs[vec_index(n, i, i)] = weight;
    }
    let solution = augmented
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::numerical("stationary solve failed: singular augmented system"))?;

    let mut rho = DMatrix::<Complex64>::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            rho[(i, j)] = solution[vec_index(n, i, j)];
        }
    }
    // Construction cleanup, not dynamics: symmetrize roundoff and pin the
    // trace the solve already fixed.
    rho = (&rho + rho.adjoint()).scale(0.5);
    let trace: Complex64 = (0..n).map(|i| rho[(i, i)]).sum();
    rho /= trace;

    let residual = model
        .apply_liouvillian(&rho)?
        .iter()
        .map(|z| z.norm())
        .fold(0.0_f64, f64::max);
    if residual > 1e-8 {
        return Err(Error::numerical(format!(
            "stationary candidate is not a fixpoint: residual {residual:e}"
        )));
    }
    DensityMatrix::new(rho)
}

/// Long-time relaxation fallback: propagates the maximally mixed state
/// over doubling horizons until the generator residual settles.
pub fn relax_to_steady_state(model: &LindbladModel) -> Result<DensityMatrix> {
    require_connected(model)?;
    let n = model.dim();
    if n == 1 {
        return DensityMatrix::pure(1, 0);
    }
    if model.channels.is_empty() {
        return Err(Error::domain(
            "model has no channels; every population distribution is stationary",
        ));
    }
    let slowest = model
        .channels
        .iter()
        .map(|c| c.rate)
        .fold(f64::INFINITY, f64::min);
    let mut rho = DMatrix::<Complex64>::identity(n, n).scale(1.0 / n as f64);
    let mut horizon = 10.0 / slowest;
    for _ in 0..12 {
        let state = DensityMatrix::new(rho.clone())?;
        let run = propagate_rho(model, &state, &[horizon], 1e-10)?;
        rho = run.states.into_iter().next().unwrap();
        let residual = model
            .apply_liouvillian(&rho)?
            .iter()
            .map(|z| z.norm())
            .fold(0.0_f64, f64::max);
        if residual < 1e-9 {
            return DensityMatrix::new(rho);
        }
        horizon *= 2.0;
    }
    Err(Error::numerical(format!(
        "relaxation did not reach a stationary state by t = {horizon:.3e}"
    )))
}

/// Boltzmann populations for the given level energies; at zero
/// temperature the weight sits on the lowest level(s).
pub fn boltzmann_populations(energies: &[f64], theta: f64) -> Result<Vec<f64>> {
    if energies.is_empty() {
        return Err(Error::domain("need at least one level"));
    }
    if !(theta >= 0.0) {
        return Err(Error::domain(format!(
            "temperature must be nonnegative, got {theta}"
        )));
    }
    let lowest = energies.iter().cloned().fold(f64::INFINITY, f64::min);
    let weights: Vec<f64> = if theta == 0.0 {
        energies.iter().map(|&e| f64::from(e == lowest)).collect()
    } else {
        energies.iter().map(|&e| (-(e - lowest) / theta).exp()).collect()
    };
    let total: f64 = weights.iter().sum();
    Ok(weights.into_iter().map(|w| w / total).collect())
}

/// Deviation report between a microscopic run and its master-equation
/// counterpart on a shared time grid. Series are indexed [level][time].
#[derive(Debug, Clone)]
pub struct ComparisonReport {
    pub per_series_max: Vec<f64>,
    pub per_series_rms: Vec<f64>,
    pub max_abs: f64,
    pub rms: f64,
    /// Forward shift of the reference that minimizes the pooled RMS;
    /// exposes the initial slip of the microscopic run.
    pub lag: f64,
    pub rms_at_lag: f64,
}

fn interp(times: &[f64], values: &[f64], t: f64) -> f64 {
    let k = times.partition_point(|&x| x <= t).clamp(1, times.len() - 1);
    let (t0, t1) = (times[k - 1], times[k]);
    let w = (t - t0) / (t1 - t0);
    values[k - 1] * (1.0 - w) + values[k] * w
}

/// Pooled RMS between the series and the reference delayed by `shift`,
/// over the grid points the delayed reference still covers.
fn shifted_rms(times: &[f64], series: &[Vec<f64>], reference: &[Vec<f64>], shift: f64) -> f64 {
    let mut sum = 0.0;
    let mut count = 0usize;
    for (s, r) in series.iter().zip(reference) {
        for (&t, &v) in times.iter().zip(s) {
            let tr = t - shift;
            if tr >= times[0] {
                let d = v - interp(times, r, tr);
                sum += d * d;
                count += 1;
            }
        }
    }
    if count == 0 {
        return f64::INFINITY;
    }
    (sum / count as f64).sqrt()
}

pub fn compare_micro_vs_mew(
    times: &[f64],
    micro: &[Vec<f64>],
    mew: &[Vec<f64>],
    max_lag: f64,
) -> Result<ComparisonReport> {
    if micro.is_empty() || micro.len() != mew.len() {
        return Err(Error::dimension(format!(
            "series counts differ: {} microscopic vs {} master-equation",
            micro.len(),
            mew.len()
        )));
    }
    if times.len() < 2 || times.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::domain(
            "need at least two strictly ascending shared times",
        ));
    }
    for (k, (a, b)) in micro.iter().zip(mew).enumerate() {
        if a.len() != times.len() || b.len() != times.len() {
            return Err(Error::dimension(format!(
                "series {k} length does not match the time grid"
            )));
        }
    }
    if !(max_lag >= 0.0) || !max_lag.is_finite() {
        return Err(Error::domain(format!(
            "max_lag must be finite and nonnegative, got {max_lag}"
        )));
    }

    let mut per_series_max = Vec::with_capacity(micro.len());
    let mut per_series_rms = Vec::with_capacity(micro.len());
    let mut pooled = 0.0;
    for (a, b) in micro.iter().zip(mew) {
        let mut worst: f64 = 0.0;
        let mut sum = 0.0;
        for (&x, &y) in a.iter().zip(b) {
            let d = (x - y).abs();
            worst = worst.max(d);
            sum += d * d;
        }
        pooled += sum;
        per_series_max.push(worst);
        per_series_rms.push((sum / times.len() as f64).sqrt());
    }
    let max_abs = per_series_max.iter().cloned().fold(0.0, f64::max);
    let rms = (pooled / (times.len() * micro.len()) as f64).sqrt();

    let (lag, rms_at_lag) = if max_lag == 0.0 {
        (0.0, rms)
    } else {
        let samples = 256usize;
        let mut best = (0usize, rms);
        for k in 1..=samples {
            let s = max_lag * k as f64 / samples as f64;
            let v = shifted_rms(times, micro, mew, s);
            if v < best.1 {
                best = (k, v);
            }
        }
        // Parabolic refinement around the discrete minimum.
        let step = max_lag / samples as f64;
        let s_best = best.0 as f64 * step;
        let refined = if best.0 > 0 && best.0 < samples {
            let f0 = shifted_rms(times, micro, mew, s_best - step);
            let f1 = best.1;
            let f2 = shifted_rms(times, micro, mew, s_best + step);
            let denom = f0 - 2.0 * f1 + f2;
            if denom > 0.0 {
                (s_best + 0.5 * step * (f0 - f2) / denom).clamp(0.0, max_lag)
            } else {
                s_best
            }
        } else {
            s_best
        };
        (refined, shifted_rms(times, micro, mew, refined))
    };

    Ok(ComparisonReport {
        per_series_max,
        per_series_rms,
        max_abs,
        rms,
        lag,
        rms_at_lag,
    })
}
