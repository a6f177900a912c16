//! Golden-rule rates, thermal occupation factors, and the level shift
//! induced by a flat quasi-continuum.
//!
//! Everything is expressed in natural units (hbar = k_B = 1): frequencies,
//! energies, temperatures and rates all carry the same unit, and temperature
//! enters only through the dimensionless ratio omega / theta.

use crate::error::{Error, Result};
use std::f64::consts::PI;

/// Bose-Einstein occupation 1 / (exp(omega/theta) - 1).
///
/// theta = 0 returns exactly 0; large omega/theta underflows cleanly to 0.
pub fn thermal_occupation(omega: f64, theta: f64) -> Result<f64> {
    if !(omega > 0.0) {
        return Err(Error::domain(format!(
            "thermal_occupation requires omega > 0, got {omega}"
        )));
    }
    if !(theta >= 0.0) {
        return Err(Error::domain(format!(
            "thermal_occupation requires theta >= 0, got {theta}"
        )));
    }
    if theta == 0.0 {
        return Ok(0.0);
    }
    Ok(1.0 / (omega / theta).exp_m1())
}

/// Golden-rule population decay rate 2 pi g^2 / delta_omega for one level
/// coupled with uniform strength g to a quasi-continuum of spacing
/// delta_omega.  The amplitude decays at half this rate.
pub fn golden_rate(g: f64, delta_omega: f64) -> Result<f64> {
    if !(delta_omega > 0.0) {
        return Err(Error::domain(format!(
            "golden_rate requires delta_omega > 0, got {delta_omega}"
        )));
    }
    if !g.is_finite() {
        return Err(Error::domain(format!("golden_rate: coupling g = {g}")));
    }
    Ok(2.0 * PI * g * g / delta_omega)
}

/// Uniform coupling strength that produces a target golden-rule rate on a
/// quasi-continuum of spacing delta_omega: g = sqrt(rate delta_omega / 2 pi).
/// Inverse of `golden_rate`.
pub fn coupling_for_rate(rate: f64, delta_omega: f64) -> Result<f64> {
    if !(delta_omega > 0.0) {
        return Err(Error::domain(format!(
            "coupling_for_rate requires delta_omega > 0, got {delta_omega}"
        )));
    }
    if !(rate >= 0.0) {
        return Err(Error::domain(format!(
            "coupling_for_rate requires rate >= 0, got {rate}"
        )));
    }
    Ok((rate * delta_omega / (2.0 * PI)).sqrt())
}

/// Upward and downward jump rates for a transition of frequency nu at
/// temperature theta, given the zero-temperature rate gamma:
/// (gamma_up, gamma_down) = (gamma n, gamma (n + 1)) with n the thermal
/// occupation at nu.
///
/// gamma_down - gamma_up = gamma holds exactly by construction, and
/// gamma_up / gamma_down = exp(-nu/theta) to machine precision.
pub fn jump_rates(gamma: f64, nu: f64, theta: f64) -> Result<(f64, f64)> {
    if !(gamma >= 0.0) {
        return Err(Error::domain(format!(
            "jump_rates requires gamma >= 0, got {gamma}"
        )));
    }
    let n = thermal_occupation(nu, theta)?;
    // gamma_down is built as gamma_up + gamma so the detailed-balance
    // difference gamma_down - gamma_up == gamma holds by construction.
    let up = gamma * n;
    Ok((up, up + gamma))
}

/// Second-order level shift (gamma / 2 pi) ln(omega_plus / omega_minus) of
/// the upper level of a transition embedded in a flat continuum extending
/// omega_plus above and omega_minus below the transition frequency.
///
/// Vanishes for a symmetric continuum.  The shift is a red shift of the
/// transition when more continuum lies above than below; callers apply the
/// sign (see `lindblad::build_lindblad`).
pub fn lamb_shift(gamma: f64, omega_plus: f64, omega_minus: f64) -> Result<f64> {
    if !(omega_plus > 0.0 && omega_minus > 0.0) {
        return Err(Error::domain(format!(
            "lamb_shift requires positive band extents, got ({omega_plus}, {omega_minus})"
        )));
    }
    if !(gamma >= 0.0) {
        return Err(Error::domain(format!(
            "lamb_shift requires gamma >= 0, got {gamma}"
        )));
    }
    Ok(gamma / (2.0 * PI) * (omega_plus / omega_minus).ln())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn occupation_at_matched_scales() {
        // omega = theta = 1: n = 1/(e - 1)
        let n = thermal_occupation(1.0, 1.0).unwrap();
        let expect = 1.0 / (std::f64::consts::E - 1.0);
        assert!((n - expect).abs() < 1e-15, "n = {n}, expected {expect}");
    }

    #[test]
    fn occupation_zero_temperature_is_zero() {
        assert_eq!(thermal_occupation(2.5, 0.0).unwrap(), 0.0);
    }

    #[test]
    fn occupation_rejects_nonpositive_frequency() {
        assert!(matches!(
            thermal_occupation(0.0, 1.0),
            Err(Error::Domain(_))
        ));
        assert!(matches!(
            thermal_occupation(-1.0, 1.0),
            Err(Error::Domain(_))
        ));
        assert!(matches!(
            thermal_occupation(1.0, -0.1),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn occupation_underflows_cleanly() {
        let n = thermal_occupation(1e4, 1.0).unwrap();
        assert_eq!(n, 0.0, "exp(1e4) overflow must map to zero occupation");
    }

    #[test]
    fn golden_rate_reference_value() {
        // g = 1e-3, delta_omega = 1e-3 -> 2 pi e-3
        let r = golden_rate(1e-3, 1e-3).unwrap();
        assert!((r - 2.0 * PI * 1e-3).abs() < 1e-18);
        assert_eq!(golden_rate(0.0, 0.1).unwrap(), 0.0);
    }

    #[test]
    fn coupling_for_rate_inverts_golden_rate() {
        let d = 32.0 / 15_999.0;
        let g = coupling_for_rate(0.025, d).unwrap();
        let back = golden_rate(g, d).unwrap();
        assert!(((back - 0.025) / 0.025).abs() < 1e-14);
        assert_eq!(coupling_for_rate(0.0, 1.0).unwrap(), 0.0);
        assert!(matches!(coupling_for_rate(0.1, 0.0), Err(Error::Domain(_))));
    }

    #[test]
    fn jump_rate_difference_and_ratio_are_exact() {
        let gamma = 0.37;
        let (up, down) = jump_rates(gamma, 1.3, 0.9).unwrap();
        assert_eq!(down - up, gamma, "detailed-balance difference must be exact");
        let ratio = up / down;
        let boltzmann = (-1.3_f64 / 0.9).exp();
        assert!(
            (ratio - boltzmann).abs() < 1e-15,
            "ratio {ratio} vs Boltzmann {boltzmann}"
        );
    }

    #[test]
    fn jump_rates_zero_temperature() {
        // gamma = 0.025, nu = 5.5, theta = 0 -> (0, 0.025)
        let (up, down) = jump_rates(0.025, 5.5, 0.0).unwrap();
        assert_eq!(up, 0.0);
        assert_eq!(down, 0.025);
    }

    #[test]
    fn occupation_small_frequency_limit() {
        // n_T -> theta/omega as omega -> 0+
        let theta = 1.0;
        let omega = 1e-6;
        let n = thermal_occupation(omega, theta).unwrap();
        let rel = (n * omega / theta - 1.0).abs();
        assert!(rel < 1e-4, "relative deviation from theta/omega: {rel}");
    }

    #[test]
    fn occupation_monotonicity() {
        let grid = [0.3, 0.7, 1.5, 4.0];
        for w in grid.windows(2) {
            let lo = thermal_occupation(w[0], 1.0).unwrap();
            let hi = thermal_occupation(w[1], 1.0).unwrap();
            assert!(hi < lo, "n_T must decrease in omega");
        }
        for t in grid.windows(2) {
            let lo = thermal_occupation(1.0, t[0]).unwrap();
            let hi = thermal_occupation(1.0, t[1]).unwrap();
            assert!(hi > lo, "n_T must increase in theta");
        }
    }

    #[test]
    fn golden_rate_refinement_invariance() {
        // (g, d) -> (g/sqrt(m), d/m) leaves the rate unchanged
        let g = 2.449e-3;
        let d = 40.0 / 65536.0;
        let base = golden_rate(g, d).unwrap();
        for m in [2_u32, 3, 7, 64] {
            let m = f64::from(m);
            let refined = golden_rate(g / m.sqrt(), d / m).unwrap();
            assert!(
                ((refined - base) / base).abs() < 1e-14,
                "m = {m}: {refined} vs {base}"
            );
        }
    }

    #[test]
    fn lamb_shift_symmetric_continuum_vanishes() {
        assert_eq!(lamb_shift(0.2, 30.0, 30.0).unwrap(), 0.0);
    }

    #[test]
    fn lamb_shift_reference_value() {
        // gamma = 0.2, band 95 above / 5 below
        let s = lamb_shift(0.2, 95.0, 5.0).unwrap();
        let expect = 0.2 / (2.0 * PI) * (19.0_f64).ln();
        assert!((s - expect).abs() < 1e-15);
    }
}
