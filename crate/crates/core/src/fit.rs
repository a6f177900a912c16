//! Decay-rate extraction from population traces.

use crate::error::{Error, Result};

/// Result of a log-linear decay fit.
#[derive(Debug, Clone, Copy)]
pub struct RateFit {
    pub rate: f64,
    /// RMS residual of ln P against the fitted line.
    pub residual: f64,
}

/// Fits ln v(t) = const - rate * t on the window by least squares.
///
/// The window is inclusive. Populations must be strictly positive inside it.
pub fn fit_decay_rate(times: &[f64], values: &[f64], window: (f64, f64)) -> Result<RateFit> {
    if times.len() != values.len() {
        return Err(Error::dimension(format!(
            "{} times vs {} values",
            times.len(),
            values.len()
        )));
    }
    let mut ts = Vec::new();
    let mut ys = Vec::new();
    for (&t, &v) in times.iter().zip(values) {
        if t < window.0 || t > window.1 {
            continue;
        }
        if !(v > 0.0) {
            return Err(Error::fit(format!(
                "non-positive population {v} at t = {t} inside fit window"
            )));
        }
        ts.push(t);
        ys.push(v.ln());
    }
    let n = ts.len();
    if n < 2 {
        return Err(Error::fit(format!(
            "fit window [{}, {}] contains {n} samples, need at least 2",
            window.0, window.1
        )));
    }
    let nf = n as f64;
    let tm = ts.iter().sum::<f64>() / nf;
    let ym = ys.iter().sum::<f64>() / nf;
    let mut stt = 0.0;
    let mut sty = 0.0;
    for (&t, &y) in ts.iter().zip(&ys) {
        stt += (t - tm) * (t - tm);
        sty += (t - tm) * (y - ym);
    }
    if stt == 0.0 {
        return Err(Error::fit("fit window has no time spread"));
    }
    let slope = sty / stt;
    let mut sse = 0.0;
    for (&t, &y) in ts.iter().zip(&ys) {
        let r = y - (ym + slope * (t - tm));
        sse += r * r;
    }
    Ok(RateFit {
        rate: -slope,
        residual: (sse / nf).sqrt(),
    })
}

/// Standard fit window [5 tau, min(2/gamma, half the recurrence time)]:
/// past the initial slip, before both substantial decay and the return of
/// the discrete spectrum.
pub fn default_decay_window(tau: f64, gamma: f64, delta_omega: f64) -> (f64, f64) {
    let recurrence = 2.0 * std::f64::consts::PI / delta_omega;
    (5.0 * tau, (2.0 / gamma).min(0.5 * recurrence))
}

/// Result of fitting v(t) = offset + amplitude * exp(-rate * t).
#[derive(Debug, Clone, Copy)]
pub struct ExpOffsetFit {
    pub offset: f64,
    pub amplitude: f64,
    pub rate: f64,
    /// One-sigma uncertainty of `rate` from the linearized covariance.
    pub rate_stderr: f64,
    /// One-sigma uncertainty of `offset` from the same covariance.
    pub offset_stderr: f64,
    /// Covariance of (rate, offset), needed when propagating errors
    /// through combinations such as rate * (1 - offset).
    pub cov_rate_offset: f64,
    pub residual: f64,
}

/// Fits an exponential with a free offset by separable least squares:
/// a golden-section search over the rate with the linear pair
/// (offset, amplitude) solved exactly at each candidate.
pub fn fit_exp_offset(times: &[f64], values: &[f64], window: (f64, f64)) -> Result<ExpOffsetFit> {
    if times.len() != values.len() {
        return Err(Error::dimension(format!(
            "{} times vs {} values",
            times.len(),
            values.len()
        )));
    }
    let mut ts = Vec::new();
    let mut ys = Vec::new();
    for (&t, &v) in times.iter().zip(values) {
        if t >= window.0 && t <= window.1 {
            ts.push(t);
            ys.push(v);
        }
    }
    let n = ts.len();
    if n < 4 {
        return Err(Error::fit(format!(
            "offset-exponential fit needs at least 4 samples, window holds {n}"
        )));
    }
    let span = ts[n - 1] - ts[0];
    if !(span > 0.0) {
        return Err(Error::fit("fit window has no time spread"));
    }

    // Linear subproblem: given rate, best (offset, amplitude) and the SSE.
    let solve_linear = |rate: f64| -> (f64, f64, f64) {
        let (mut se, mut see, mut sy, mut sye) = (0.0, 0.0, 0.0, 0.0);
        for (&t, &y) in ts.iter().zip(&ys) {
            let e = (-rate * (t - ts[0])).exp();
            se += e;
            see += e * e;
            sy += y;
            sye += y * e;
        }
        let nf = n as f64;
        let det = nf * see - se * se;
        if det.abs() < 1e-300 {
            return (sy / nf, 0.0, f64::INFINITY);
        }
        let amp = (nf * sye - se * sy) / det;
        let off = (sy - amp * se) / nf;
        let mut sse = 0.0;
        for (&t, &y) in ts.iter().zip(&ys) {
            let r = y - off - amp * (-rate * (t - ts[0])).exp();
            sse += r * r;
        }
        (off, amp, sse)
    };

    // Bracket the rate across eight decades around 1/span and refine by
    // golden section, which is safe for the unimodal SSE this model has.
    let lo0 = 1e-3 / span;
    let hi0 = 1e3 / span;
    let mut best = (lo0, f64::INFINITY);
    let probes = 160;
    for i in 0..=probes {
        let r = lo0 * (hi0 / lo0).powf(i as f64 / probes as f64);
        let (_, _, sse) = solve_linear(r);
        if sse < best.1 {
            best = (r, sse);
        }
    }
    let mut a = best.0 / 1.3;
    let mut b = best.0 * 1.3;
    let phi = 0.5 * (5.0_f64.sqrt() - 1.0);
    let mut x1 = b - phi * (b - a);
    let mut x2 = a + phi * (b - a);
    let mut f1 = solve_linear(x1).2;
    let mut f2 = solve_linear(x2).2;
    for _ in 0..200 {
        if f1 < f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - phi * (b - a);
            f1 = solve_linear(x1).2;
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + phi * (b - a);
            f2 = solve_linear(x2).2;
        }
        if (b - a) < 1e-12 * b {
            break;
        }
    }
    let rate = 0.5 * (a + b);
    let (off_shifted, amp_shifted, sse) = solve_linear(rate);
    // The linear solve used t - t0; undo the shift for the reported pair.
    let amplitude = amp_shifted * (rate * ts[0]).exp();
    let offset = off_shifted;

    // Linearized covariance for the rate uncertainty.
    let mut jtj = [[0.0_f64; 3]; 3];
    for &t in &ts {
        let e = (-rate * t).exp();
        let row = [1.0, e, -amplitude * t * e];
        for i in 0..3 {
            for j in 0..3 {
                jtj[i][j] += row[i] * row[j];
            }
        }
    }
    let m = nalgebra::Matrix3::from_fn(|i, j| jtj[i][j]);
    let dof = (n as f64 - 3.0).max(1.0);
    let sigma2 = sse / dof;
    let (rate_stderr, offset_stderr, cov_rate_offset) = match m.try_inverse() {
        Some(inv) => (
            (sigma2 * inv[(2, 2)]).max(0.0).sqrt(),
            (sigma2 * inv[(0, 0)]).max(0.0).sqrt(),
            sigma2 * inv[(2, 0)],
        ),
        None => (f64::INFINITY, f64::INFINITY, 0.0),
    };

    Ok(ExpOffsetFit {
        offset,
        amplitude,
        rate,
        rate_stderr,
        offset_stderr,
        cov_rate_offset,
        residual: (sse / n as f64).sqrt(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(n: usize, t1: f64) -> Vec<f64> {
        (0..n).map(|i| t1 * i as f64 / (n - 1) as f64).collect()
    }

    #[test]
    fn exact_exponential_recovers_rate() {
        let ts = grid(200, 40.0);
        let vs: Vec<f64> = ts.iter().map(|t| (-0.05 * t).exp()).collect();
        let fit = fit_decay_rate(&ts, &vs, (0.0, 40.0)).unwrap();
        assert!((fit.rate - 0.05).abs() < 1e-12);
        assert!(fit.residual < 1e-12);
    }

    #[test]
    fn constant_population_fits_zero_rate() {
        let ts = grid(50, 10.0);
        let vs = vec![1.0; 50];
        let fit = fit_decay_rate(&ts, &vs, (0.0, 10.0)).unwrap();
        assert_eq!(fit.rate, 0.0);
        assert_eq!(fit.residual, 0.0);
    }

    #[test]
    fn rejects_nonpositive_values_in_window() {
        let ts = grid(10, 9.0);
        let mut vs = vec![1.0; 10];
        vs[4] = 0.0;
        assert!(matches!(
            fit_decay_rate(&ts, &vs, (0.0, 9.0)),
            Err(Error::Fit(_))
        ));
        // outside the window the zero is ignored
        assert!(fit_decay_rate(&ts, &vs, (5.0, 9.0)).is_ok());
    }

    #[test]
    fn default_window_respects_recurrence() {
        let (t0, t1) = default_decay_window(0.2, 0.05, 1e-3);
        assert!((t0 - 1.0).abs() < 1e-15);
        assert!((t1 - 40.0).abs() < 1e-12); // 2/gamma < half recurrence here
        let (_, t1) = default_decay_window(0.2, 1e-4, 1.0);
        assert!((t1 - std::f64::consts::PI).abs() < 1e-12);
    }

    #[test]
    fn offset_exponential_recovers_parameters() {
        let ts = grid(400, 60.0);
        let (c, a, r) = (0.31, 0.55, 0.085);
        let vs: Vec<f64> = ts.iter().map(|t| c + a * (-r * t).exp()).collect();
        let fit = fit_exp_offset(&ts, &vs, (0.0, 60.0)).unwrap();
        assert!((fit.rate - r).abs() < 1e-6 * r, "rate {}", fit.rate);
        assert!((fit.offset - c).abs() < 1e-6);
        assert!((fit.amplitude - a).abs() < 1e-6);
        assert!(fit.residual < 1e-9);
    }

    #[test]
    fn offset_exponential_stderr_tracks_noise() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let ts = grid(400, 60.0);
        let (c, a, r) = (0.2, 0.6, 0.1);
        let vs: Vec<f64> = ts
            .iter()
            .map(|t| c + a * (-r * t).exp() + 1e-3 * (rng.gen::<f64>() - 0.5))
            .collect();
        let fit = fit_exp_offset(&ts, &vs, (0.0, 60.0)).unwrap();
        assert!((fit.rate - r).abs() < 5.0 * fit.rate_stderr);
        assert!(fit.rate_stderr > 0.0 && fit.rate_stderr < 0.05 * r);
    }
}
