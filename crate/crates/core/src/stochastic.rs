//! Boltzmann-sampled couplings and ensemble-averaged decay.
//!
//! Each ensemble instance replaces the uniform coupling g by per-level
//! values drawn from the occupation statistics of the resonant oscillators,
//! then the survival probability is averaged across instances. The claim
//! under test: the average decays at 2 pi <x^2> / delta_omega.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Geometric};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::krylov::{gauss_steps_for_window, lanczos_spectrum};
use crate::rates::thermal_occupation;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    /// The state dumps a quantum into the bath: x_k = g sqrt(n_k + 1).
    Downward,
    /// The state absorbs a quantum: x_k = g sqrt(n_k).
    Upward,
}

/// How the per-level occupation means are chosen.
#[derive(Debug, Clone, Copy)]
pub enum OccupationMode {
    /// One mean for every level, as in the flat-band ensemble study.
    FixedMean(f64),
    /// Thermal mean at each level's own oscillator frequency. Offsets are
    /// measured from the transition, so the oscillator at offset lambda has
    /// frequency transition_frequency + lambda, clamped below to half a
    /// spacing to keep the occupation finite.
    PerLevelThermal { transition_frequency: f64, theta: f64 },
}

#[derive(Debug, Clone)]
pub struct OccupationSample {
    pub occupations: Vec<u64>,
    pub seed: u64,
    pub mean_target: f64,
}

#[derive(Debug, Clone)]
pub struct RandomizedCouplingSet {
    pub direction: Direction,
    pub couplings: Vec<f64>,
    pub base_coupling: f64,
}

impl RandomizedCouplingSet {
    /// Couplings from occupations: sqrt(n+1) or sqrt(n) times the base.
    pub fn from_occupations(base: f64, direction: Direction, occupations: &[u64]) -> Result<Self> {
        if !(base > 0.0) {
            return Err(Error::domain(format!(
                "base coupling must be positive, got {base}"
            )));
        }
        let couplings = occupations
            .iter()
            .map(|&n| match direction {
                Direction::Downward => base * ((n + 1) as f64).sqrt(),
                Direction::Upward => base * (n as f64).sqrt(),
            })
            .collect();
        Ok(Self {
            direction,
            couplings,
            base_coupling: base,
        })
    }

    pub fn mean_square(&self) -> f64 {
        if self.couplings.is_empty() {
            return 0.0;
        }
        self.couplings.iter().map(|x| x * x).sum::<f64>() / self.couplings.len() as f64
    }
}

/// i.i.d. geometric occupations, P(n) = (1 - p) p^n with p = mean/(1 + mean).
/// Deterministic for a fixed seed.
pub fn sample_occupations(count: usize, n_mean: f64, seed: u64) -> Result<OccupationSample> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let occupations = draw_occupations(count, n_mean, &mut rng)?;
    Ok(OccupationSample {
        occupations,
        seed,
        mean_target: n_mean,
    })
}

fn draw_occupations(count: usize, n_mean: f64, rng: &mut ChaCha8Rng) -> Result<Vec<u64>> {
    if !(n_mean >= 0.0) || !n_mean.is_finite() {
        return Err(Error::domain(format!(
            "occupation mean must be finite and nonnegative, got {n_mean}"
        )));
    }
    // rand_distr's success probability is 1/(1 + mean), giving the geometric
    // law on {0, 1, ...} with the requested mean.
    let dist = Geometric::new(1.0 / (1.0 + n_mean))
        .map_err(|e| Error::domain(format!("geometric parameter: {e}")))?;
    Ok((0..count).map(|_| dist.sample(rng)).collect())
}

/// gamma = 2 pi <x^2> / delta_omega, the golden rate with the squared
/// coupling replaced by its ensemble mean.
pub fn stochastic_golden_rate(mean_square_x: f64, delta_omega: f64) -> Result<f64> {
    if !(mean_square_x > 0.0) || !(delta_omega > 0.0) {
        return Err(Error::domain(format!(
            "need positive mean-square coupling and spacing, got {mean_square_x}, {delta_omega}"
        )));
    }
    Ok(2.0 * std::f64::consts::PI * mean_square_x / delta_omega)
}

/// Grid and sampling recipe for one ensemble.
#[derive(Debug, Clone)]
pub struct EnsembleSpec {
    pub delta_omega: f64,
    pub levels_below: usize,
    pub levels_above: usize,
    pub base_coupling: f64,
    pub direction: Direction,
    pub occupation: OccupationMode,
}

impl EnsembleSpec {
    pub fn level_count(&self) -> usize {
        self.levels_below + self.levels_above + 1
    }

    fn validate(&self) -> Result<()> {
        if !(self.delta_omega > 0.0) {
            return Err(Error::domain(format!(
                "spacing must be positive, got {}",
                self.delta_omega
            )));
        }
        if !(self.base_coupling > 0.0) {
            return Err(Error::domain(format!(
                "base coupling must be positive, got {}",
                self.base_coupling
            )));
        }
        if self.levels_above == 0 {
            return Err(Error::domain("band must extend above the state"));
        }
        match self.occupation {
            OccupationMode::FixedMean(m) if !(m >= 0.0) || !m.is_finite() => Err(Error::domain(
                format!("occupation mean must be finite and nonnegative, got {m}"),
            )),
            OccupationMode::PerLevelThermal {
                transition_frequency,
                theta,
            } if !(transition_frequency > 0.0) || !(theta >= 0.0) => Err(Error::domain(
                "thermal occupation needs a positive transition frequency and theta >= 0",
            )),
            _ => Ok(()),
        }
    }

    /// Per-level occupation means for the sampling mode, in grid order.
    pub fn occupation_means(&self) -> Result<Vec<f64>> {
        self.validate()?;
        let count = self.level_count();
        match self.occupation {
            OccupationMode::FixedMean(m) => Ok(vec![m; count]),
            OccupationMode::PerLevelThermal {
                transition_frequency,
                theta,
            } => (0..count)
                .map(|i| {
                    let offset = (i as f64 - self.levels_below as f64) * self.delta_omega;
                    let freq = (transition_frequency + offset).max(0.5 * self.delta_omega);
                    thermal_occupation(freq, theta)
                })
                .collect(),
        }
    }

    /// RMS coupling of the sampling distribution; the matched uniform
    /// reference uses this value on every level.
    pub fn rms_coupling(&self) -> Result<f64> {
        let means = self.occupation_means()?;
        let avg = means.iter().sum::<f64>() / means.len() as f64;
        let factor = match self.direction {
            Direction::Downward => avg + 1.0,
            Direction::Upward => avg,
        };
        Ok(self.base_coupling * factor.sqrt())
    }

    fn poles(&self) -> Vec<f64> {
        (0..self.level_count())
            .map(|i| (i as f64 - self.levels_below as f64) * self.delta_omega)
            .collect()
    }

    fn halfwidth_bound(&self, couplings: &[f64]) -> f64 {
        let edge = (self.levels_below.max(self.levels_above) as f64) * self.delta_omega;
        let cnorm = couplings.iter().map(|x| x * x).sum::<f64>().sqrt();
        edge + cnorm
    }
}

#[derive(Debug, Clone)]
pub struct EnsembleSurvival {
    pub times: Vec<f64>,
    /// Instance average of P(t).
    pub mean_population: Vec<f64>,
    /// Population variance of P(t) across instances at each time.
    pub variance: Vec<f64>,
    /// Empirical <x^2> over all instances and levels.
    pub mean_square_coupling: f64,
    pub instances: usize,
}

fn survival_population(
    poles: &[f64],
    couplings: &[f64],
    halfwidth: f64,
    times: &[f64],
) -> Result<Vec<f64>> {
    let count = poles.len();
    let dim = count + 1;
    let op = |x: &[f64], y: &mut [f64]| {
        let mut head = 0.0;
        for k in 0..count {
            head += couplings[k] * x[k + 1];
            y[k + 1] = poles[k] * x[k + 1] + couplings[k] * x[0];
        }
        y[0] = head;
    };
    let mut start = vec![0.0; dim];
    start[0] = 1.0;
    let t_max = times.last().copied().unwrap_or(0.0);
    let steps = gauss_steps_for_window(halfwidth, t_max).min(dim);
    let measure = lanczos_spectrum(op, dim, &start, steps)?;
    Ok(times.iter().map(|&t| measure.amplitude(t).norm_sqr()).collect())
}

/// Averaged survival of `instances` independently sampled coupling sets.
/// Instance k draws from stream k of the seeded generator, so the draws do
/// not depend on how many instances run or on the parallel schedule.
pub fn ensemble_survival(
    spec: &EnsembleSpec,
    instances: usize,
    seed: u64,
    times: &[f64],
) -> Result<EnsembleSurvival> {
    spec.validate()?;
    if instances == 0 {
        return Err(Error::domain("need at least one instance"));
    }
    if times.is_empty() {
        return Err(Error::domain("need at least one output time"));
    }
    let means = spec.occupation_means()?;
    let poles = spec.poles();

    struct InstanceResult {
        population: Vec<f64>,
        sum_sq: f64,
    }

    let results: Vec<Result<InstanceResult>> = (0..instances)
        .into_par_iter()
        .map(|k| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(k as u64);
            let mut occupations = Vec::with_capacity(means.len());
            for &m in &means {
                occupations.extend(draw_occupations(1, m, &mut rng)?);
            }
            let set =
                RandomizedCouplingSet::from_occupations(spec.base_coupling, spec.direction, &occupations)?;
            let population = survival_population(
                &poles,
                &set.couplings,
                spec.halfwidth_bound(&set.couplings),
                times,
            )
            .map_err(|e| Error::numerical(format!("instance {k}: {e}")))?;
            Ok(InstanceResult {
                population,
                sum_sq: set.couplings.iter().map(|x| x * x).sum::<f64>(),
            })
        })
        .collect();

    // Index-ordered reduction keeps the average bit-identical across
    // parallel schedules.
    let mut mean = vec![0.0; times.len()];
    let mut second = vec![0.0; times.len()];
    let mut sum_sq = 0.0;
    for r in results {
        let r = r?;
        for (i, &p) in r.population.iter().enumerate() {
            mean[i] += p;
            second[i] += p * p;
        }
        sum_sq += r.sum_sq;
    }
    let n = instances as f64;
    for i in 0..times.len() {
        mean[i] /= n;
        second[i] = (second[i] / n - mean[i] * mean[i]).max(0.0);
    }
    Ok(EnsembleSurvival {
        times: times.to_vec(),
        mean_population: mean,
        variance: second,
        mean_square_coupling: sum_sq / (n * means.len() as f64),
        instances,
    })
}

/// The uniform-coupling reference trace, run through the same spectral
/// engine as the ensemble so the comparison isolates the sampling.
pub fn uniform_reference(spec: &EnsembleSpec, times: &[f64]) -> Result<Vec<f64>> {
    spec.validate()?;
    let g = spec.rms_coupling()?;
    let poles = spec.poles();
    let couplings = vec![g; poles.len()];
    survival_population(&poles, &couplings, spec.halfwidth_bound(&couplings), times)
}

#[derive(Debug, Clone)]
pub struct DeviationStudy {
    pub level_counts: Vec<usize>,
    pub times: Vec<f64>,
    /// Per level count: P_random,avg(t) - P_uniform(t).
    pub deviations: Vec<Vec<f64>>,
    pub max_abs_deviation: Vec<f64>,
    /// Empirical <x^2> per level count.
    pub mean_square_couplings: Vec<f64>,
}

/// Flat-band parameters shared by every N in a deviation study: the band
/// keeps its total width, so the spacing shrinks as levels are added.
#[derive(Debug, Clone, Copy)]
pub struct FlatBandEnsemble {
    pub band_width: f64,
    pub base_coupling: f64,
    pub n_mean: f64,
    pub direction: Direction,
}

impl FlatBandEnsemble {
    /// Symmetric band of n_levels intervals (n_levels + 1 levels).
    pub fn spec(&self, n_levels: usize) -> Result<EnsembleSpec> {
        if n_levels < 2 || n_levels % 2 != 0 {
            return Err(Error::domain(format!(
                "level count must be even and at least 2, got {n_levels}"
            )));
        }
        Ok(EnsembleSpec {
            delta_omega: self.band_width / n_levels as f64,
            levels_below: n_levels / 2,
            levels_above: n_levels / 2,
            base_coupling: self.base_coupling,
            direction: self.direction,
            occupation: OccupationMode::FixedMean(self.n_mean),
        })
    }
}

/// Deviation of the ensemble average from the uniform reference for each
/// band refinement, on one shared grid.
pub fn uniform_vs_random_deviation(
    band: &FlatBandEnsemble,
    level_counts: &[usize],
    instances: usize,
    seed: u64,
    times: &[f64],
) -> Result<DeviationStudy> {
    if level_counts.is_empty() {
        return Err(Error::domain("need at least one level count"));
    }
    if level_counts.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::domain("level counts must be strictly ascending"));
    }
    let mut deviations = Vec::with_capacity(level_counts.len());
    let mut max_abs = Vec::with_capacity(level_counts.len());
    let mut mean_squares = Vec::with_capacity(level_counts.len());
    for &n in level_counts {
        let spec = band.spec(n)?;
        let ensemble = ensemble_survival(&spec, instances, seed, times)?;
        let uniform = uniform_reference(&spec, times)?;
        let dev: Vec<f64> = ensemble
            .mean_population
            .iter()
            .zip(&uniform)
            .map(|(r, u)| r - u)
            .collect();
        max_abs.push(dev.iter().fold(0.0f64, |acc, &x| acc.max(x.abs())));
        deviations.push(dev);
        mean_squares.push(ensemble.mean_square_coupling);
    }
    Ok(DeviationStudy {
        level_counts: level_counts.to_vec(),
        times: times.to_vec(),
        deviations,
        max_abs_deviation: max_abs,
        mean_square_couplings: mean_squares,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fit::fit_decay_rate;
    use crate::quasicontinuum::{amplitude_series, solve_arrowhead, QuasiContinuumSpec};
    use crate::rates::golden_rate;

    #[test]
    fn zero_mean_occupations_are_all_zero() {
        let s = sample_occupations(4096, 0.0, 7).unwrap();
        assert!(s.occupations.iter().all(|&n| n == 0));
    }

    #[test]
    fn occupation_mean_obeys_law_of_large_numbers() {
        let n_mean = 3.0;
        let count = 1 << 16;
        let s = sample_occupations(count, n_mean, 42).unwrap();
        let empirical = s.occupations.iter().sum::<u64>() as f64 / count as f64;
        let bound = 3.0 * (n_mean * (n_mean + 1.0) / count as f64).sqrt();
        assert!(
            (empirical - n_mean).abs() < bound,
            "mean {empirical} outside {n_mean} +- {bound}"
        );
    }

    #[test]
    fn sampling_is_deterministic_per_seed_and_stream() {
        let a = sample_occupations(512, 2.5, 9).unwrap();
        let b = sample_occupations(512, 2.5, 9).unwrap();
        assert_eq!(a.occupations, b.occupations);
        let c = sample_occupations(512, 2.5, 10).unwrap();
        assert_ne!(a.occupations, c.occupations);
    }

    #[test]
    fn coupling_sets_follow_direction_rules() {
        let occ = [0u64, 1, 3, 8];
        let down = RandomizedCouplingSet::from_occupations(0.5, Direction::Downward, &occ).unwrap();
        let up = RandomizedCouplingSet::from_occupations(0.5, Direction::Upward, &occ).unwrap();
        for (i, &n) in occ.iter().enumerate() {
            assert_eq!(down.couplings[i], 0.5 * ((n + 1) as f64).sqrt());
            assert_eq!(up.couplings[i], 0.5 * (n as f64).sqrt());
        }
        assert_eq!(up.couplings[0], 0.0);
        assert!(RandomizedCouplingSet::from_occupations(0.0, Direction::Upward, &occ).is_err());
    }

    #[test]
    fn stochastic_rate_reference_values() {
        let d = 0.01;
        let g = 2e-3;
        // degenerate distribution: reduces to the uniform golden rate
        let got = stochastic_golden_rate(g * g, d).unwrap();
        assert!((got - golden_rate(g, d).unwrap()).abs() < 1e-18);
        // mean occupation 3: downward rate 4x, upward rate 3x the bare one
        let bare = golden_rate(g, d).unwrap();
        assert!((stochastic_golden_rate(4.0 * g * g, d).unwrap() - 4.0 * bare).abs() < 1e-16);
        assert!((stochastic_golden_rate(3.0 * g * g, d).unwrap() - 3.0 * bare).abs() < 1e-16);
        assert!(stochastic_golden_rate(0.0, d).is_err());
    }

    #[test]
    fn thermal_occupation_means_fall_with_frequency() {
        let spec = EnsembleSpec {
            delta_omega: 0.5,
            levels_below: 4,
            levels_above: 4,
            base_coupling: 1e-3,
            direction: Direction::Upward,
            occupation: OccupationMode::PerLevelThermal {
                transition_frequency: 3.0,
                theta: 2.0,
            },
        };
        let means = spec.occupation_means().unwrap();
        assert_eq!(means.len(), 9);
        for w in means.windows(2) {
            assert!(w[1] < w[0], "occupation must fall with frequency: {w:?}");
        }
        // level 0 sits at frequency 1.0; check against the closed form
        let expect = thermal_occupation(1.0, 2.0).unwrap();
        assert!((means[0] - expect).abs() < 1e-15);
    }

    #[test]
    fn low_frequency_levels_are_clamped_not_rejected() {
        let spec = EnsembleSpec {
            delta_omega: 1.0,
            levels_below: 5, // deepest level would sit at frequency -2
            levels_above: 2,
            base_coupling: 1e-3,
            direction: Direction::Upward,
            occupation: OccupationMode::PerLevelThermal {
                transition_frequency: 3.0,
                theta: 1.0,
            },
        };
        let means = spec.occupation_means().unwrap();
        // offsets -5..2 give frequencies -2..5; the first three clamp to 0.5
        let clamped = thermal_occupation(0.5, 1.0).unwrap();
        assert!((means[0] - clamped).abs() < 1e-15);
        assert!((means[1] - clamped).abs() < 1e-15);
        assert!((means[2] - clamped).abs() < 1e-15);
        assert!((means[3] - thermal_occupation(1.0, 1.0).unwrap()).abs() < 1e-15);
    }

    #[test]
    fn zero_temperature_downward_ensemble_equals_uniform_exactly() {
        // n = 0 makes every drawn coupling equal mu exactly, so the ensemble
        // and the uniform reference run identical floating-point problems.
        let spec = EnsembleSpec {
            delta_omega: 0.02,
            levels_below: 128,
            levels_above: 128,
            base_coupling: 4e-3,
            direction: Direction::Downward,
            occupation: OccupationMode::FixedMean(0.0),
        };
        let times: Vec<f64> = (0..200).map(|i| 0.4 * i as f64).collect();
        // two instances: p + p and the final /2 are exact in binary floating
        // point, so the averaging step cannot blur the comparison
        let ens = ensemble_survival(&spec, 2, 11, &times).unwrap();
        let uni = uniform_reference(&spec, &times).unwrap();
        for (a, b) in ens.mean_population.iter().zip(&uni) {
            assert_eq!(a, b, "zero-temperature ensemble must be bit-identical");
        }
        for v in &ens.variance {
            assert_eq!(*v, 0.0);
        }
        let msq = spec.base_coupling.powi(2);
        assert!((ens.mean_square_coupling - msq).abs() < 1e-12 * msq);
    }

    #[test]
    fn ensemble_average_is_deterministic() {
        let spec = EnsembleSpec {
            delta_omega: 0.05,
            levels_below: 64,
            levels_above: 64,
            base_coupling: 6e-3,
            direction: Direction::Upward,
            occupation: OccupationMode::FixedMean(2.0),
        };
        let times: Vec<f64> = (0..100).map(|i| 0.3 * i as f64).collect();
        let a = ensemble_survival(&spec, 12, 5, &times).unwrap();
        let b = ensemble_survival(&spec, 12, 5, &times).unwrap();
        assert_eq!(a.mean_population, b.mean_population);
        assert_eq!(a.variance, b.variance);
        assert_eq!(a.mean_square_coupling, b.mean_square_coupling);
    }

    #[test]
    fn spectral_engine_matches_secular_solver() {
        // One randomized instance, small enough for the dense-path oracle.
        let occ = sample_occupations(257, 3.0, 77).unwrap();
        let set =
            RandomizedCouplingSet::from_occupations(3e-3, Direction::Downward, &occ.occupations)
                .unwrap();
        let d = 0.04;
        let spec =
            QuasiContinuumSpec::per_level(d, 128, 128, set.couplings.clone()).unwrap();
        let sol = solve_arrowhead(&spec).unwrap();
        let times: Vec<f64> = (0..160).map(|i| 0.5 * i as f64).collect();
        let trace = amplitude_series(&sol, &times).unwrap();

        let poles: Vec<f64> = (0..257).map(|i| (i as f64 - 128.0) * d).collect();
        let hw = 128.0 * d + set.couplings.iter().map(|x| x * x).sum::<f64>().sqrt();
        let via_lanczos = survival_population(&poles, &set.couplings, hw, &times).unwrap();
        for (i, (a, b)) in via_lanczos.iter().zip(&trace.population).enumerate() {
            assert!(
                (a - b).abs() < 1e-9,
                "engines disagree at t = {}: {a} vs {b}",
                times[i]
            );
        }
    }

    #[test]
    fn ensemble_rate_matches_stochastic_golden_rate() {
        let band = FlatBandEnsemble {
            band_width: 8.0,
            base_coupling: 3e-3,
            n_mean: 3.0,
            direction: Direction::Upward,
        };
        let n = 1 << 12;
        let spec = band.spec(n).unwrap();
        let expect =
            stochastic_golden_rate(3.0 * band.base_coupling.powi(2), spec.delta_omega).unwrap();
        let t_max = 2.0 / expect;
        let times: Vec<f64> = (0..400).map(|i| t_max * i as f64 / 399.0).collect();
        let ens = ensemble_survival(&spec, 64, 2024, &times).unwrap();

        let tau = 2.0 * std::f64::consts::PI / (0.5 * band.band_width);
        let fit = fit_decay_rate(
            &times,
            &ens.mean_population,
            (5.0 * tau, t_max),
        )
        .unwrap();
        let measured = stochastic_golden_rate(ens.mean_square_coupling, spec.delta_omega).unwrap();
        assert!(
            ((fit.rate - measured) / measured).abs() < 0.07,
            "fitted {} vs empirical stochastic rate {measured}",
            fit.rate
        );
        assert!(
            ((measured - expect) / expect).abs() < 0.1,
            "empirical mean-square drifted: {measured} vs {expect}"
        );
    }

    #[test]
    fn deviation_shrinks_as_the_band_refines() {
        let band = FlatBandEnsemble {
            band_width: 8.0,
            base_coupling: 8e-3,
            n_mean: 3.0,
            direction: Direction::Upward,
        };
        let gamma = stochastic_golden_rate(
            3.0 * band.base_coupling.powi(2),
            band.band_width / (1 << 9) as f64,
        )
        .unwrap();
        let t_max = 2.0 / gamma;
        let times: Vec<f64> = (0..240).map(|i| t_max * i as f64 / 239.0).collect();
        let study = uniform_vs_random_deviation(
            &band,
            &[1 << 9, 1 << 11, 1 << 13],
            48,
            99,
            &times,
        )
        .unwrap();
        assert_eq!(study.deviations.len(), 3);
        for dev in &study.deviations {
            assert!(dev[0].abs() < 1e-13, "deviation at t = 0 must vanish");
        }
        assert!(
            study.max_abs_deviation[0] > study.max_abs_deviation[1]
                && study.max_abs_deviation[1] > study.max_abs_deviation[2],
            "deviation must fall with refinement: {:?}",
            study.max_abs_deviation
        );
    }

    #[test]
    fn mean_standard_error_falls_with_instances() {
        let spec = FlatBandEnsemble {
            band_width: 8.0,
            base_coupling: 8e-3,
            n_mean: 3.0,
            direction: Direction::Upward,
        }
        .spec(1 << 9)
        .unwrap();
        let times = [6.0];
        let few = ensemble_survival(&spec, 16, 31, &times).unwrap();
        let many = ensemble_survival(&spec, 256, 31, &times).unwrap();
        let sem_few = (few.variance[0] / few.instances as f64).sqrt();
        let sem_many = (many.variance[0] / many.instances as f64).sqrt();
        assert!(
            sem_many < 0.6 * sem_few,
            "standard error should shrink: {sem_few} -> {sem_many}"
        );
    }
}
