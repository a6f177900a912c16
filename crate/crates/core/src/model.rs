//! System, bath, and transition-catalog domain types.
//!
//! Everything is dimensionless with hbar = k_B = 1: energies and temperatures
//! are frequencies in units of 1/t_s for an arbitrary timescale t_s.

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::rates::golden_rate;

/// Default multiplier on rates at or below which two transition frequencies
/// count as degenerate.
pub const DEFAULT_TOL_DEG: f64 = 0.1;
/// Default multiplier on rates at or above which two transition frequencies
/// count as well separated.
pub const DEFAULT_TOL_SEP: f64 = 10.0;
/// Default reading of "much greater than" in the timescale chain.
pub const DEFAULT_CHAIN_THRESHOLD: f64 = 10.0;
/// A transition is weakly damped when rate / frequency stays below this.
pub const WEAK_DAMPING_RATIO: f64 = 0.1;

/// Discrete uniform oscillator bath.
///
/// Oscillator k has frequency k * delta_omega for k = 0..=N with
/// N = oscillator_count - 1, so the cutoff Omega_c = N * delta_omega is exact
/// by construction.
#[derive(Debug, Clone, PartialEq)]
pub struct BathSpec {
    /// Level spacing delta_omega of the quasi-continuum.
    pub delta_omega: f64,
    /// Number of oscillators N + 1 (including the zero-frequency mode).
    pub oscillator_count: usize,
    /// Per-oscillator coupling g (flat spectrum).
    pub coupling: f64,
    /// Temperature as a frequency, theta = k_B T / hbar.
    pub theta: f64,
}

impl BathSpec {
    pub fn new(
        delta_omega: f64,
        oscillator_count: usize,
        coupling: f64,
        theta: f64,
    ) -> Result<Self> {
        if !(delta_omega > 0.0) {
            return Err(Error::domain(format!(
                "bath spacing must be positive, got {delta_omega}"
            )));
        }
        if oscillator_count < 2 {
            return Err(Error::domain(format!(
                "bath needs at least 2 oscillators, got {oscillator_count}"
            )));
        }
        if !(coupling > 0.0) {
            return Err(Error::domain(format!(
                "bath coupling must be positive, got {coupling}"
            )));
        }
        if !(theta >= 0.0) {
            return Err(Error::domain(format!(
                "bath temperature must be nonnegative, got {theta}"
            )));
        }
        Ok(Self {
            delta_omega,
            oscillator_count,
            coupling,
            theta,
        })
    }

    /// Cutoff Omega_c = N * delta_omega.
    pub fn cutoff(&self) -> f64 {
        (self.oscillator_count - 1) as f64 * self.delta_omega
    }

    /// Frequency of oscillator k.
    pub fn frequency(&self, k: usize) -> f64 {
        k as f64 * self.delta_omega
    }

    /// Golden-rule rate 2 pi g^2 / delta_omega for a unit matrix element.
    pub fn bare_rate(&self) -> f64 {
        golden_rate(self.coupling, self.delta_omega).expect("validated at construction")
    }
}

/// System levels plus the Hermitian coupling operator X (zero diagonal)
/// through which the bath drives transitions.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemSpec {
    /// Level energies, ascending; degeneracies allowed.
    pub level_energies: Vec<f64>,
    /// X = X^dagger with diag(X) = 0.
    pub coupling_operator: DMatrix<Complex64>,
}

impl SystemSpec {
    pub fn new(level_energies: Vec<f64>, coupling_operator: DMatrix<Complex64>) -> Result<Self> {
        let n = level_energies.len();
        if n == 0 {
            return Err(Error::dimension("system needs at least one level"));
        }
        if coupling_operator.nrows() != n || coupling_operator.ncols() != n {
            return Err(Error::dimension(format!(
                "coupling operator is {}x{}, system has {} levels",
                coupling_operator.nrows(),
                coupling_operator.ncols(),
                n
            )));
        }
        for w in level_energies.windows(2) {
            if !(w[1] >= w[0]) {
                return Err(Error::domain(
                    "level energies must be ascending (degeneracy allowed)",
                ));
            }
        }
        let scale = coupling_operator
            .iter()
            .map(|z| z.norm())
            .fold(0.0_f64, f64::max)
            .max(1.0);
        for i in 0..n {
            if coupling_operator[(i, i)].norm() > 1e-14 * scale {
                return Err(Error::domain(format!(
                    "coupling operator must have zero diagonal, entry ({i},{i}) = {}",
                    coupling_operator[(i, i)]
                )));
            }
            for j in (i + 1)..n {
                let asym = (coupling_operator[(i, j)] - coupling_operator[(j, i)].conj()).norm();
                if asym > 1e-12 * scale {
                    return Err(Error::domain(format!(
                        "coupling operator must be Hermitian, ({i},{j}) mismatch {asym:e}"
                    )));
                }
            }
        }
        Ok(Self {
            level_energies,
            coupling_operator,
        })
    }

    /// Two levels split by `splitting`, X = |g><e| + |e><g|.
    pub fn qubit(splitting: f64) -> Result<Self> {
        let mut x = DMatrix::zeros(2, 2);
        x[(0, 1)] = Complex64::new(1.0, 0.0);
        x[(1, 0)] = Complex64::new(1.0, 0.0);
        Self::new(vec![0.0, splitting], x)
    }

    /// Ladder of `count` levels at the given energies with equal coupling
    /// between adjacent levels.
    pub fn ladder(energies: Vec<f64>) -> Result<Self> {
        let n = energies.len();
        let mut x = DMatrix::zeros(n, n);
        for i in 0..n.saturating_sub(1) {
            x[(i, i + 1)] = Complex64::new(1.0, 0.0);
            x[(i + 1, i)] = Complex64::new(1.0, 0.0);
        }
        Self::new(energies, x)
    }

    pub fn len(&self) -> usize {
        self.level_energies.len()
    }

    pub fn is_empty(&self) -> bool {
        self.level_energies.is_empty()
    }
}

/// One level pair with a nonzero coupling element, E_upper > E_lower.
#[derive(Debug, Clone)]
pub struct Transition {
    pub upper: usize,
    pub lower: usize,
    /// Omega_j = E_upper - E_lower > 0.
    pub frequency: f64,
    /// <g|X|e>.
    pub matrix_element: Complex64,
    /// Zero-temperature rate 2 pi (g |X_eg|)^2 / delta_omega.
    pub rate: f64,
}

/// Classification of a transition pair by frequency gap relative to rates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PairClass {
    Degenerate,
    Separated,
    /// Neither close enough to merge nor far enough to decouple; the
    /// master-equation treatment is unreliable for such pairs.
    Ambiguous,
}

/// Per-pair entry of the grouping report. Indices refer to
/// `TransitionCatalog::transitions`.
#[derive(Debug, Clone)]
pub struct PairReport {
    pub first: usize,
    pub second: usize,
    pub gap: f64,
    pub class: PairClass,
}

/// Transitions sharing one effective frequency nu_j.
#[derive(Debug, Clone)]
pub struct TransitionGroup {
    /// nu_j, the mean member frequency.
    pub frequency: f64,
    /// Indices into `TransitionCatalog::transitions`, frequency-ascending.
    pub members: Vec<usize>,
    /// L_j = sum_k X_ge |g_jk><e_jk|. The matrix elements ride along as
    /// weights so the paired rate is always the bare 2 pi g^2 / delta_omega;
    /// for unit elements this reduces to the plain sum of lowering operators.
    pub jump_operator: DMatrix<Complex64>,
}

impl TransitionGroup {
    /// K_j.
    pub fn degeneracy(&self) -> usize {
        self.members.len()
    }
}

/// All transitions of a system/bath pair, grouped by distinct frequency.
#[derive(Debug, Clone)]
pub struct TransitionCatalog {
    /// Frequency-ascending.
    pub transitions: Vec<Transition>,
    pub groups: Vec<TransitionGroup>,
    /// Every unordered transition pair, classified.
    pub grouping_report: Vec<PairReport>,
    /// 2 pi g^2 / delta_omega, the rate paired with each weighted L_j.
    pub bare_rate: f64,
    /// System dimension the jump operators act on.
    pub dim: usize,
}

/// Enumerates transitions and groups the effectively degenerate ones.
///
/// Pairs closer than tol_deg * min(rate) merge; pairs beyond
/// tol_sep * max(rate) are independent; anything between is flagged
/// ambiguous in the report but construction proceeds. A degenerate-level
/// pair (zero frequency) with a nonzero element is an error: it has no
/// thermal occupation and sits outside the weak-damping treatment.
pub fn build_transition_catalog(
    system: &SystemSpec,
    bath: &BathSpec,
    tol_deg: f64,
    tol_sep: f64,
) -> Result<TransitionCatalog> {
    if !(tol_deg > 0.0 && tol_deg < tol_sep) {
        return Err(Error::domain(format!(
            "need 0 < tol_deg < tol_sep, got ({tol_deg}, {tol_sep})"
        )));
    }
    let x = &system.coupling_operator;
    let energies = &system.level_energies;
    let n = energies.len();

    let mut transitions = Vec::new();
    for i in 0..n {
        for j in (i + 1)..n {
            let elem = x[(i, j)];
            if elem.norm() == 0.0 {
                continue;
            }
            let frequency = energies[j] - energies[i];
            if frequency == 0.0 {
                return Err(Error::domain(format!(
                    "levels {i} and {j} are degenerate but coupled; \
                     zero-frequency transitions are not supported"
                )));
            }
            let rate = golden_rate(bath.coupling * elem.norm(), bath.delta_omega)?;
            transitions.push(Transition {
                upper: j,
                lower: i,
                frequency,
                matrix_element: elem,
                rate,
            });
        }
    }
    transitions.sort_by(|a, b| a.frequency.total_cmp(&b.frequency));

    // Greedy frequency-ascending grouping with a full pairwise check, so the
    // max in-group gap never exceeds the degeneracy bound even when near
    // degeneracies chain.
    let mut member_lists: Vec<Vec<usize>> = Vec::new();
    for t in 0..transitions.len() {
        let fits = member_lists.last().is_some_and(|g| {
            g.iter().all(|&m| {
                let gap = transitions[t].frequency - transitions[m].frequency;
                gap <= tol_deg * transitions[t].rate.min(transitions[m].rate)
            })
        });
        match member_lists.last_mut() {
            Some(g) if fits => g.push(t),
            _ => member_lists.push(vec![t]),
        }
    }

    let group_of: Vec<usize> = {
        let mut v = vec![0; transitions.len()];
        for (gi, g) in member_lists.iter().enumerate() {
            for &m in g {
                v[m] = gi;
            }
        }
        v
    };

    let mut grouping_report = Vec::new();
    for a in 0..transitions.len() {
        for b in (a + 1)..transitions.len() {
            let gap = (transitions[a].frequency - transitions[b].frequency).abs();
            let deg_bound = tol_deg * transitions[a].rate.min(transitions[b].rate);
            let sep_bound = tol_sep * transitions[a].rate.max(transitions[b].rate);
            let mut class = if gap <= deg_bound {
                PairClass::Degenerate
            } else if gap >= sep_bound {
                PairClass::Separated
            } else {
                PairClass::Ambiguous
            };
            // A pair the grouping had to split despite passing the
            // degeneracy test (broken chain) is genuinely ambiguous.
            if class == PairClass::Degenerate && group_of[a] != group_of[b] {
                class = PairClass::Ambiguous;
            }
            grouping_report.push(PairReport {
                first: a,
                second: b,
                gap,
                class,
            });
        }
    }

    let groups = member_lists
        .into_iter()
        .map(|members| {
            let mut jump_operator = DMatrix::zeros(n, n);
            let mut mean = 0.0;
            for &m in &members {
                let t = &transitions[m];
                jump_operator[(t.lower, t.upper)] += t.matrix_element;
                mean += t.frequency;
            }
            mean /= members.len() as f64;
            TransitionGroup {
                frequency: mean,
                members,
                jump_operator,
            }
        })
        .collect();

    Ok(TransitionCatalog {
        transitions,
        groups,
        grouping_report,
        bare_rate: bath.bare_rate(),
        dim: n,
    })
}

/// Condition-1 check for one transition.
#[derive(Debug, Clone)]
pub struct TransitionCheck {
    /// Index into the catalog's transitions.
    pub transition: usize,
    /// rate / frequency.
    pub rate_ratio: f64,
    pub pass: bool,
}

#[derive(Debug, Clone)]
pub struct WeakDampingReport {
    pub checks: Vec<TransitionCheck>,
    pub ambiguous_pairs: usize,
    /// True when every rate/frequency ratio passes and no pair is ambiguous.
    pub applicable: bool,
    pub warnings: Vec<String>,
}

pub fn weak_damping_report(catalog: &TransitionCatalog) -> WeakDampingReport {
    let checks: Vec<TransitionCheck> = catalog
        .transitions
        .iter()
        .enumerate()
        .map(|(i, t)| {
            let rate_ratio = t.rate / t.frequency;
            TransitionCheck {
                transition: i,
                rate_ratio,
                pass: rate_ratio < WEAK_DAMPING_RATIO,
            }
        })
        .collect();
    let ambiguous_pairs = catalog
        .grouping_report
        .iter()
        .filter(|p| p.class == PairClass::Ambiguous)
        .count();
    let mut warnings = Vec::new();
    if catalog.transitions.is_empty() {
        warnings.push("catalog has no transitions; weak damping holds vacuously".to_string());
    }
    for p in &catalog.grouping_report {
        if p.class == PairClass::Ambiguous {
            warnings.push(format!(
                "transitions {} and {} are neither degenerate nor well separated \
                 (gap {:.3e})",
                p.first, p.second, p.gap
            ));
        }
    }
    let applicable = checks.iter().all(|c| c.pass) && ambiguous_pairs == 0;
    WeakDampingReport {
        checks,
        ambiguous_pairs,
        applicable,
        warnings,
    }
}

/// The separation-of-scales chain behind the golden-rule derivation:
/// (Omega/d)^1/2 >> (omega/d)^1/2 >> g/d >> 1 with d the bath spacing.
#[derive(Debug, Clone)]
pub struct TimescaleChainReport {
    /// [(Omega/d)^1/2, (omega/d)^1/2, g/d].
    pub scales: [f64; 3],
    /// Consecutive separations: scales[0]/scales[1], scales[1]/scales[2],
    /// scales[2] itself (vs 1).
    pub ratios: [f64; 3],
    pub threshold: f64,
    pub all_pass: bool,
}

pub fn timescale_chain_report(
    bath: &BathSpec,
    omega_min: f64,
    g: f64,
    threshold: f64,
) -> Result<TimescaleChainReport> {
    if !(omega_min > 0.0 && g > 0.0 && threshold > 0.0) {
        return Err(Error::domain(format!(
            "chain report needs positive omega_min, g, threshold; \
             got ({omega_min}, {g}, {threshold})"
        )));
    }
    let d = bath.delta_omega;
    let scales = [(bath.cutoff() / d).sqrt(), (omega_min / d).sqrt(), g / d];
    let ratios = [scales[0] / scales[1], scales[1] / scales[2], scales[2]];
    let all_pass = ratios.iter().all(|r| *r >= threshold);
    Ok(TimescaleChainReport {
        scales,
        ratios,
        threshold,
        all_pass,
    })
}
