//! Lanczos machinery for matrix-free spectral measures and time propagation.
//!
//! Two consumers with different needs share the tridiagonal reduction:
//! ensemble survival studies need the spectral measure of one vector for a
//! whole time window (many Lanczos steps, eigenvalues plus first components
//! only), while propagation needs short steps of e^{-iHt} applied to a
//! changing state (few steps, full small eigenproblem, error control).

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};

/// Symmetric tridiagonal matrix; `offdiag[i]` couples i and i+1.
#[derive(Debug, Clone)]
pub struct Tridiagonal {
    pub diag: Vec<f64>,
    pub offdiag: Vec<f64>,
}

/// Discrete spectral measure sum_j weights[j] * delta(lambda - eigenvalues[j])
/// of some unit vector; weights sum to 1 up to roundoff.
#[derive(Debug, Clone)]
pub struct SpectralMeasure {
    pub eigenvalues: Vec<f64>,
    pub weights: Vec<f64>,
}

impl SpectralMeasure {
    /// Survival amplitude sum_j w_j e^{-i lambda_j t}.
    pub fn amplitude(&self, t: f64) -> Complex64 {
        let mut re = 0.0;
        let mut im = 0.0;
        for (&lam, &w) in self.eigenvalues.iter().zip(&self.weights) {
            let (s, c) = (lam * t).sin_cos();
            re += w * c;
            im -= w * s;
        }
        Complex64::new(re, im)
    }
}

impl Tridiagonal {
    pub fn order(&self) -> usize {
        self.diag.len()
    }

    /// Eigenvalues plus squared first components of the normalized
    /// eigenvectors, via the implicit QL iteration with the rotation train
    /// applied to a single carried row. O(n^2) total, against O(n^3) for a
    /// full eigenvector solve.
    pub fn eigen_first_row(&self) -> Result<SpectralMeasure> {
        let n = self.diag.len();
        if n == 0 {
            return Err(Error::dimension("empty tridiagonal matrix"));
        }
        if self.offdiag.len() + 1 != n {
            return Err(Error::dimension(format!(
                "offdiagonal length {} does not fit order {n}",
                self.offdiag.len()
            )));
        }
        let mut d = self.diag.clone();
        // e gets a trailing scratch slot; e[m] of a converged block is zeroed.
        let mut e = self.offdiag.clone();
        e.push(0.0);
        let mut z = vec![0.0; n];
        z[0] = 1.0;

        let eps = f64::EPSILON;
        for l in 0..n {
            let mut iters = 0;
            loop {
                // Smallest m >= l with a negligible coupling below it.
                let mut m = l;
                while m + 1 < n {
                    let dd = d[m].abs() + d[m + 1].abs();
                    if e[m].abs() <= eps * dd {
                        break;
                    }
                    m += 1;
                }
                if m == l {
                    break;
                }
                iters += 1;
                if iters > 50 {
                    return Err(Error::numerical(format!(
                        "tridiagonal QL failed to converge at index {l}"
                    )));
                }

                // Wilkinson-style shift from the leading 2x2 block.
                let mut g = (d[l + 1] - d[l]) / (2.0 * e[l]);
                let mut r = g.hypot(1.0);
                g = d[m] - d[l] + e[l] / (g + r.copysign(if g == 0.0 { 1.0 } else { g }));
                let mut s = 1.0;
                let mut c = 1.0;
                let mut p = 0.0;
                for i in (l..m).rev() {
                    let mut f = s * e[i];
                    let b = c * e[i];
                    r = f.hypot(g);
                    e[i + 1] = r;
                    if r == 0.0 {
                        // Deflated in the middle of the sweep; undo the
                        // pending correction and restart this block.
                        d[i + 1] -= p;
                        e[m] = 0.0;
                        break;
                    }
                    s = f / r;
                    c = g / r;
                    g = d[i + 1] - p;
                    r = (d[i] - g) * s + 2.0 * c * b;
                    p = s * r;
                    d[i + 1] = g + p;
                    g = c * r - b;

                    f = z[i + 1];
                    z[i + 1] = s * z[i] + c * f;
                    z[i] = c * z[i] - s * f;
                }
                if r == 0.0 && m > l + 1 {
                    continue;
                }
                d[l] -= p;
                e[l] = g;
                e[m] = 0.0;
            }
        }

        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| d[a].total_cmp(&d[b]));
        Ok(SpectralMeasure {
            eigenvalues: order.iter().map(|&i| d[i]).collect(),
            weights: order.iter().map(|&i| z[i] * z[i]).collect(),
        })
    }
}

/// Number of Lanczos steps after which the Gauss quadrature of the spectral
/// measure reproduces e^{-i lambda t} over [0, t_max] to near machine
/// precision, for a spectrum bounded by |lambda - center| <= halfwidth.
/// Degree argument: the Chebyshev coefficients of the phase factor are
/// Bessel values J_k(halfwidth * t_max), negligible past the Airy edge.
pub fn gauss_steps_for_window(halfwidth: f64, t_max: f64) -> usize {
    let z = (halfwidth * t_max).abs();
    (z / 2.0 + 4.5 * z.cbrt() + 10.0).ceil() as usize
}

/// Lanczos tridiagonalization of a real symmetric operator seen only through
/// matrix-vector products, run without reorthogonalization. The start vector
/// is normalized internally. Stops early on an invariant subspace.
///
/// Without reorthogonalization converged Ritz values reappear as duplicates,
/// but the carried first-row weights of the duplicates sum to the true
/// spectral weight, so the measure (and any smooth functional of it, like
/// the survival amplitude) stays accurate.
pub fn lanczos_spectrum<F>(mut op: F, dim: usize, start: &[f64], steps: usize) -> Result<SpectralMeasure>
where
    F: FnMut(&[f64], &mut [f64]),
{
    if start.len() != dim {
        return Err(Error::dimension(format!(
            "start vector length {} vs dimension {dim}",
            start.len()
        )));
    }
    if dim == 0 || steps == 0 {
        return Err(Error::domain("empty Lanczos problem"));
    }
    let norm = start.iter().map(|x| x * x).sum::<f64>().sqrt();
    if !(norm > 0.0) || !norm.is_finite() {
        return Err(Error::domain(format!("start vector norm {norm}")));
    }

    let steps = steps.min(dim);
    let mut v_prev = vec![0.0; dim];
    let mut v = start.iter().map(|x| x / norm).collect::<Vec<_>>();
    let mut w = vec![0.0; dim];
    let mut alpha = Vec::with_capacity(steps);
    let mut beta = Vec::with_capacity(steps.saturating_sub(1));

    let mut scale: f64 = 0.0;
    for j in 0..steps {
        op(&v, &mut w);
        let a = v.iter().zip(&w).map(|(x, y)| x * y).sum::<f64>();
        alpha.push(a);
        if j + 1 == steps {
            break;
        }
        let bp = if j == 0 { 0.0 } else { beta[j - 1] };
        for i in 0..dim {
            w[i] -= a * v[i] + bp * v_prev[i];
        }
        let b = w.iter().map(|x| x * x).sum::<f64>().sqrt();
        scale = scale.max(a.abs()).max(b);
        if b <= f64::EPSILON * 64.0 * scale.max(1.0) {
            // Invariant subspace: the measure is already exact.
            break;
        }
        beta.push(b);
        for i in 0..dim {
            let next = w[i] / b;
            v_prev[i] = v[i];
            v[i] = next;
        }
    }

    Tridiagonal {
        diag: alpha,
        offdiag: beta,
    }
    .eigen_first_row()
}

const PROPAGATOR_MIN_STEP_FRACTION: f64 = 1e-12;

/// Adaptive short-step Krylov propagator for psi(t) = e^{-iHt} psi(0) with a
/// real symmetric H given as a complex matrix-vector product.
pub struct KrylovPropagator<F> {
    op: F,
    dim: usize,
    psi: Vec<Complex64>,
    time: f64,
    max_m: usize,
    tol: f64,
    dt_hint: f64,
    norm0: f64,
    steps_taken: usize,
    // per-step scratch: orthonormal basis columns
    basis: Vec<Vec<Complex64>>,
}

impl<F> KrylovPropagator<F>
where
    F: FnMut(&[Complex64], &mut [Complex64]),
{
    /// `tol` bounds the per-step local error estimate in the state vector.
    pub fn new(op: F, dim: usize, psi0: &[Complex64], tol: f64, max_m: usize) -> Result<Self> {
        if psi0.len() != dim {
            return Err(Error::dimension(format!(
                "state length {} vs dimension {dim}",
                psi0.len()
            )));
        }
        if !(tol > 0.0) {
            return Err(Error::domain(format!("tolerance must be positive, got {tol}")));
        }
        if max_m < 2 {
            return Err(Error::domain("Krylov dimension must be at least 2"));
        }
        let norm0 = psi0.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        if !(norm0 > 0.0) || !norm0.is_finite() {
            return Err(Error::domain(format!("initial state norm {norm0}")));
        }
        Ok(Self {
            op,
            dim,
            psi: psi0.to_vec(),
            time: 0.0,
            max_m: max_m.min(dim),
            tol,
            dt_hint: 0.0,
            norm0,
            steps_taken: 0,
            basis: Vec::new(),
        })
    }

    pub fn state(&self) -> &[Complex64] {
        &self.psi
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn steps_taken(&self) -> usize {
        self.steps_taken
    }

    /// |norm(psi) - norm(psi0)|, the accumulated unitarity loss.
    pub fn norm_drift(&self) -> f64 {
        let n = self.psi.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        (n - self.norm0).abs()
    }

    /// Advances to time t (>= current time), stepping adaptively.
    pub fn advance_to(&mut self, t: f64) -> Result<()> {
        if t < self.time {
            return Err(Error::domain(format!(
                "cannot advance backwards from {} to {t}",
                self.time
            )));
        }
        while self.time < t {
            let remaining = t - self.time;
            let want = if self.dt_hint > 0.0 {
                self.dt_hint.min(remaining)
            } else {
                remaining
            };
            self.step(want, remaining)?;
        }
        Ok(())
    }

    /// One accepted Krylov step of size <= want. Builds the basis once, then
    /// shrinks dt on the small problem only until the error estimate passes.
    fn step(&mut self, want: f64, remaining: f64) -> Result<()> {
        let norm = self.psi.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        if !(norm > 0.0) {
            return Err(Error::numerical("state norm collapsed to zero"));
        }

        // Lanczos with full reorthogonalization inside the (small) step basis.
        let m_cap = self.max_m;
        self.basis.clear();
        self.basis
            .push(self.psi.iter().map(|z| z / norm).collect::<Vec<_>>());
        let mut alpha = Vec::with_capacity(m_cap);
        let mut beta: Vec<f64> = Vec::with_capacity(m_cap);
        let mut w = vec![Complex64::new(0.0, 0.0); self.dim];
        // Norm of the first Krylov vector past the basis; zero on an exact
        // invariant subspace. This, not any interior coupling of T, is what
        // bounds the truncation leak.
        let mut residual_beta = 0.0;
        let mut scale: f64 = 0.0;

        for j in 0..m_cap {
            let vj = self.basis[j].clone();
            (self.op)(&vj, &mut w);
            let a = self.basis[j]
                .iter()
                .zip(&w)
                .map(|(x, y)| (x.conj() * y).re)
                .sum::<f64>();
            alpha.push(a);
            // Two Gram-Schmidt passes keep the basis orthonormal to roundoff.
            for _ in 0..2 {
                for vk in &self.basis {
                    let overlap: Complex64 =
                        vk.iter().zip(&*w).map(|(x, y)| x.conj() * y).sum();
                    for i in 0..self.dim {
                        w[i] -= overlap * vk[i];
                    }
                }
            }
            let b = w.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
            scale = scale.max(a.abs()).max(b);
            if b <= f64::EPSILON * 64.0 * scale.max(1.0) {
                break;
            }
            if j + 1 == m_cap {
                residual_beta = b;
                break;
            }
            beta.push(b);
            self.basis.push(w.iter().map(|z| z / b).collect());
        }

        let m = alpha.len();
        let mut t_small = DMatrix::<f64>::zeros(m, m);
        for i in 0..m {
            t_small[(i, i)] = alpha[i];
            if i + 1 < m {
                t_small[(i, i + 1)] = beta[i];
                t_small[(i + 1, i)] = beta[i];
            }
        }
        let eig = t_small.symmetric_eigen();
        // Spectral magnitude of the local problem sets the natural step.
        let local_scale = eig
            .eigenvalues
            .iter()
            .fold(0.0f64, |acc, &x| acc.max(x.abs()))
            .max(f64::MIN_POSITIVE);

        let weights_small: Vec<f64> = (0..m).map(|j| eig.eigenvectors[(0, j)]).collect();
        let propagate_small = |dt: f64| -> (Vec<Complex64>, f64) {
            // y(dt) = Q e^{-i Lambda dt} Q^T e_1 in the Krylov frame.
            let mut y = vec![Complex64::new(0.0, 0.0); m];
            for j in 0..m {
                let phase = Complex64::from_polar(1.0, -eig.eigenvalues[j] * dt);
                let cj = phase * weights_small[j];
                for i in 0..m {
                    y[i] += cj * eig.eigenvectors[(i, j)];
                }
            }
            // Leak estimate: the weight the propagation pushes onto the last
            // basis vector, scaled by the coupling past the basis end. For
            // dt below m / |T| the last component shrinks faster than the
            // true integrated leak grows, so this overestimates.
            let err = residual_beta * y[m - 1].norm();
            (y, err)
        };

        let mut dt = want.max(remaining * PROPAGATOR_MIN_STEP_FRACTION);
        let mut accepted = None;
        for _ in 0..60 {
            let (y, err) = propagate_small(dt);
            if err <= self.tol {
                accepted = Some((y, err));
                break;
            }
            dt *= 0.5;
        }
        let (y, err) = accepted.ok_or_else(|| {
            Error::numerical(format!(
                "Krylov step underflow at t = {}: error estimate never met tolerance {}",
                self.time, self.tol
            ))
        })?;

        for x in self.psi.iter_mut() {
            *x = Complex64::new(0.0, 0.0);
        }
        for (k, vk) in self.basis.iter().enumerate() {
            let c = y[k] * norm;
            for i in 0..self.dim {
                self.psi[i] += c * vk[i];
            }
        }
        self.time += dt;
        self.steps_taken += 1;

        // Grow cautiously; the estimate scales roughly like dt^m.
        self.dt_hint = if err > 0.0 {
            dt * (self.tol / err).powf(1.0 / m as f64).min(2.0) * 0.9
        } else {
            (dt * 2.0).max(1.0 / local_scale)
        };
        Ok(())
    }
}
