//! Eigensolver for real symmetric arrowhead matrices: diagonal except for one
//! dense first row/column (the "head").
//!
//! The eigenvalue problem reduces to the secular equation
//! f(lambda) = h0 - lambda + sum_k c_k^2 / (lambda - d_k) = 0, which has
//! exactly one root strictly between consecutive distinct poles d_k plus one
//! root below and one above the pole range. Eigenvector head components
//! follow from |v0|^2 = -1/f'(lambda). Poles with zero coupling and
//! duplicated poles contribute eigenvalues at the pole positions with zero
//! head weight.
//!
//! For a uniform pole grid the far part of the secular sums telescopes into
//! digamma/trigamma differences (see `special`), making each evaluation O(1)
//! instead of O(N); only a fixed window around the evaluation point is summed
//! directly.

use crate::error::{Error, Result};
use crate::special::{sum_recip_range, sum_recip_sq_range};

/// Poles within this many grid points are summed directly; everything
/// farther goes through the telescoped block sums.
const WINDOW: i64 = 32;
const MAX_ITER: usize = 200;

#[derive(Debug, Clone)]
enum Structure {
    General,
    /// poles[..count] form the grid offset + k*spacing with equal coupling;
    /// poles[count..] are the extras.
    Uniform {
        offset: f64,
        spacing: f64,
        count: usize,
        coupling: f64,
    },
}

/// Real symmetric arrowhead matrix: head diagonal h0 coupled to poles d_k
/// with real couplings c_k.
#[derive(Debug, Clone)]
pub struct Arrowhead {
    pub head: f64,
    pub poles: Vec<f64>,
    pub couplings: Vec<f64>,
    structure: Structure,
}

/// Eigensolution: ascending eigenvalues with the squared head component of
/// each eigenvector. Pole-space eigenvectors carry weight exactly 0.
#[derive(Debug, Clone)]
pub struct ArrowheadSolution {
    pub eigenvalues: Vec<f64>,
    pub head_weights: Vec<f64>,
}

impl Arrowhead {
    pub fn new(head: f64, poles: Vec<f64>, couplings: Vec<f64>) -> Result<Self> {
        if poles.len() != couplings.len() {
            return Err(Error::dimension(format!(
                "{} poles vs {} couplings",
                poles.len(),
                couplings.len()
            )));
        }
        for v in poles.iter().chain(couplings.iter()).chain([&head]) {
            if !v.is_finite() {
                return Err(Error::domain("arrowhead entries must be finite"));
            }
        }
        Ok(Self {
            head,
            poles,
            couplings,
            structure: Structure::General,
        })
    }

    /// Grid poles offset + k*spacing for k = 0..count, all with coupling
    /// `coupling`, followed by `extras` as (pole, coupling) pairs.
    pub fn uniform_grid(
        head: f64,
        offset: f64,
        spacing: f64,
        count: usize,
        coupling: f64,
        extras: &[(f64, f64)],
    ) -> Result<Self> {
        if !(spacing > 0.0) || count == 0 {
            return Err(Error::domain(format!(
                "uniform grid needs positive spacing and count, got ({spacing}, {count})"
            )));
        }
        let mut poles: Vec<f64> = (0..count).map(|k| offset + k as f64 * spacing).collect();
        let mut couplings = vec![coupling; count];
        // An extra exactly on a grid point breaks the same-coupling block
        // structure; fall back to the general path in that case.
        let mut on_grid = false;
        for &(p, c) in extras {
            on_grid |= poles.binary_search_by(|g| g.total_cmp(&p)).is_ok();
            poles.push(p);
            couplings.push(c);
        }
        let structure = if on_grid {
            Structure::General
        } else {
            Structure::Uniform {
                offset,
                spacing,
                count,
                coupling,
            }
        };
        let mut a = Self::new(head, poles, couplings)?;
        a.structure = structure;
        Ok(a)
    }

    /// Dense representation, head first. Oracle and small-scale use only.
    pub fn to_dense(&self) -> nalgebra::DMatrix<f64> {
        let n = self.poles.len() + 1;
        let mut m = nalgebra::DMatrix::zeros(n, n);
        m[(0, 0)] = self.head;
        for (k, (&d, &c)) in self.poles.iter().zip(&self.couplings).enumerate() {
            m[(k + 1, k + 1)] = d;
            m[(0, k + 1)] = c;
            m[(k + 1, 0)] = c;
        }
        m
    }

    /// Magnitude bound on the spectrum, used to scale tolerances.
    fn scale(&self) -> f64 {
        let norm_c = self
            .couplings
            .iter()
            .map(|c| c * c)
            .sum::<f64>()
            .sqrt();
        let pole_mag = self
            .poles
            .iter()
            .fold(self.head.abs(), |m, p| m.max(p.abs()));
        (pole_mag + norm_c).max(1e-300)
    }

    /// f(lambda) and f'(lambda) over the active (merged, nonzero-coupling)
    /// poles, using the telescoped fast path when the grid structure allows.
    fn eval(&self, active: &[(f64, f64)], lam: f64) -> (f64, f64) {
        let (mut s1, mut s2) = (0.0, 0.0);
        match self.structure {
            Structure::General => {
                for &(d, c2) in active {
                    let r = lam - d;
                    let inv = 1.0 / r;
                    s1 += c2 * inv;
                    s2 += c2 * inv * inv;
                }
            }
            Structure::Uniform {
                offset,
                spacing,
                count,
                coupling,
            } => {
                let c2 = coupling * coupling;
                let x = (lam - offset) / spacing;
                let j = x.floor() as i64;
                // Direct window clamped so both block ranges stay inside the
                // grid even when the evaluation point lies beyond its edges.
                let lo = (j - WINDOW + 1).clamp(0, count as i64);
                let hi = (j + WINDOW).clamp(-1, count as i64 - 1);
                let (mut g1, mut g2) = (0.0, 0.0);
                for k in lo..=hi {
                    let r = lam - (offset + k as f64 * spacing);
                    let inv = 1.0 / r;
                    g1 += inv;
                    g2 += inv * inv;
                }
                if lo > 0 {
                    g1 += sum_recip_range(x, 0, lo - 1) / spacing;
                    g2 += sum_recip_sq_range(x, 0, lo - 1) / (spacing * spacing);
                }
                if hi < count as i64 - 1 {
                    g1 += sum_recip_range(x, hi + 1, count as i64 - 1) / spacing;
                    g2 += sum_recip_sq_range(x, hi + 1, count as i64 - 1) / (spacing * spacing);
                }
                s1 += c2 * g1;
                s2 += c2 * g2;
                for &(d, c2) in &active[count..] {
                    let r = lam - d;
                    let inv = 1.0 / r;
                    s1 += c2 * inv;
                    s2 += c2 * inv * inv;
                }
            }
        }
        (self.head - lam + s1, -1.0 - s2)
    }

    /// Full eigensolution. O(N) per root for general pole sets, O(1) per
    /// root on uniform grids (plus the fixed window).
    pub fn solve(&self) -> Result<ArrowheadSolution> {
        // Merge duplicate poles (quadrature-summed couplings) and drop
        // zero couplings from the secular part; each merged-away or
        // uncoupled pole is an eigenvalue with zero head weight.
        let mut order: Vec<usize> = (0..self.poles.len()).collect();
        order.sort_by(|&a, &b| self.poles[a].total_cmp(&self.poles[b]));

        let mut active: Vec<(f64, f64)> = Vec::with_capacity(self.poles.len());
        let mut trivial: Vec<f64> = Vec::new();
        for &i in &order {
            let (d, c) = (self.poles[i], self.couplings[i]);
            match active.last_mut() {
                Some((dp, c2)) if *dp == d => {
                    *c2 += c * c;
                    trivial.push(d);
                }
                _ => active.push((d, c * c)),
            }
        }
        let mut secular: Vec<(f64, f64)> = Vec::new();
        for (d, c2) in active {
            if c2 == 0.0 {
                trivial.push(d);
            } else {
                secular.push((d, c2));
            }
        }
        // The fast path iterates the grid block by index, so it needs the
        // grid poles intact and in place.
        if let Structure::Uniform { count, coupling, .. } = self.structure {
            let intact = secular.len() >= count
                && coupling != 0.0
                && secular[..count]
                    .iter()
                    .zip(&self.poles[..count])
                    .all(|(&(d, _), &p)| d == p);
            if !intact {
                return Arrowhead {
                    head: self.head,
                    poles: self.poles.clone(),
                    couplings: self.couplings.clone(),
                    structure: Structure::General,
                }
                .solve();
            }
        }

        let scale = self.scale();
        let atol = 1e-15 * scale;
        let norm_c = self
            .couplings
            .iter()
            .map(|c| c * c)
            .sum::<f64>()
            .sqrt();

        let mut pairs: Vec<(f64, f64)> = trivial.iter().map(|&d| (d, 0.0)).collect();

        if secular.is_empty() {
            pairs.push((self.head, 1.0));
        } else {
            let lo_bound = self.head.min(secular[0].0) - norm_c - atol.max(1e-300);
            let hi_bound = self.head.max(secular[secular.len() - 1].0) + norm_c + atol.max(1e-300);
            for gap in 0..=secular.len() {
                let (lo, hi) = match gap {
                    0 => (lo_bound, secular[0].0),
                    g if g == secular.len() => (secular[g - 1].0, hi_bound),
                    g => (secular[g - 1].0, secular[g].0),
                };
                pairs.push(self.root_in_gap(&secular, lo, hi, atol));
            }
        }

        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        Ok(ArrowheadSolution {
            eigenvalues: pairs.iter().map(|p| p.0).collect(),
            head_weights: pairs.iter().map(|p| p.1).collect(),
        })
    }

    /// Safeguarded Newton on the open interval (lo, hi) where f runs from
    /// +inf at lo+ to -inf at hi- and is strictly decreasing. Returns
    /// (root, head weight).
    fn root_in_gap(&self, secular: &[(f64, f64)], mut lo: f64, mut hi: f64, atol: f64) -> (f64, f64) {
        if hi - lo <= 4.0 * atol {
            // Pinched gap: the root is localized to within the tolerance.
            let mid = 0.5 * (lo + hi);
            let (_, fp) = self.eval(secular, mid);
            return (mid, (-1.0 / fp).clamp(0.0, 1.0));
        }
        let mut x = 0.5 * (lo + hi);
        for _ in 0..MAX_ITER {
            let (f, d) = self.eval(secular, x);
            if f == 0.0 {
                break;
            }
            if f > 0.0 {
                lo = x;
            } else {
                hi = x;
            }
            if hi - lo <= atol {
                break;
            }
            let newton = x - f / d;
            let next = if newton > lo && newton < hi {
                newton
            } else {
                0.5 * (lo + hi)
            };
            // A step that no longer moves the iterate has converged.
            if next == x {
                break;
            }
            x = next;
        }
        let (_, fp) = self.eval(secular, x);
        (x, (-1.0 / fp).clamp(0.0, 1.0))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn dense_reference(a: &Arrowhead) -> (Vec<f64>, Vec<f64>) {
        crate::dense_oracle::head_eigendecomposition(&a.to_dense())
    }

    #[test]
    fn single_pole_closed_form() {
        // head at 0 coupled to one pole at 0 with strength g: lambda = +-g,
        // weights 1/2 each.
        let g = 2.5e-3;
        let a = Arrowhead::new(0.0, vec![0.0], vec![g]).unwrap();
        let s = a.solve().unwrap();
        assert_eq!(s.eigenvalues.len(), 2);
        assert!((s.eigenvalues[0] + g).abs() < 1e-15);
        assert!((s.eigenvalues[1] - g).abs() < 1e-15);
        assert!((s.head_weights[0] - 0.5).abs() < 1e-12);
        assert!((s.head_weights[1] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn symmetric_three_pole_closed_form() {
        // poles {-1, 0, 1} with equal coupling c: the secular equation gives
        // lambda^4 - (1 + 3c^2) lambda^2 + c^2 = 0.
        let c = 0.1_f64;
        let a = Arrowhead::new(0.0, vec![-1.0, 0.0, 1.0], vec![c, c, c]).unwrap();
        let s = a.solve().unwrap();
        let b = 1.0 + 3.0 * c * c;
        let disc = (b * b - 4.0 * c * c).sqrt();
        let lam_out = ((b + disc) / 2.0).sqrt();
        let lam_in = ((b - disc) / 2.0).sqrt();
        let expect = [-lam_out, -lam_in, lam_in, lam_out];
        assert_eq!(s.eigenvalues.len(), 4);
        for (got, want) in s.eigenvalues.iter().zip(expect) {
            assert!((got - want).abs() < 1e-13, "{got} vs {want}");
        }
        let total: f64 = s.head_weights.iter().sum();
        assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn duplicates_and_zero_couplings_become_trivial_pairs() {
        let a = Arrowhead::new(0.0, vec![0.0, 0.0, 1.0], vec![0.1, 0.1, 0.0]).unwrap();
        let s = a.solve().unwrap();
        // merged coupling sqrt(0.02) on the pole at 0, trivial pairs at 0, 1
        let g = 0.02_f64.sqrt();
        let expect = [(-g, 0.5), (0.0, 0.0), (g, 0.5), (1.0, 0.0)];
        for ((lam, w), (el, ew)) in s
            .eigenvalues
            .iter()
            .zip(&s.head_weights)
            .zip(expect.iter())
        {
            assert!((lam - el).abs() < 1e-13, "{lam} vs {el}");
            assert!((w - ew).abs() < 1e-12, "{w} vs {ew}");
        }
    }

    #[test]
    fn matches_dense_oracle_on_random_problems() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for &n in &[5usize, 32, 257] {
            for _ in 0..4 {
                let mut poles: Vec<f64> = (0..n).map(|_| rng.gen_range(-3.0..3.0)).collect();
                poles.sort_by(f64::total_cmp);
                let couplings: Vec<f64> = (0..n)
                    .map(|_| {
                        if rng.gen_bool(0.1) {
                            0.0
                        } else {
                            rng.gen_range(0.0..0.2)
                        }
                    })
                    .collect();
                let head = rng.gen_range(-1.0..1.0);
                let a = Arrowhead::new(head, poles, couplings).unwrap();
                let s = a.solve().unwrap();
                let (dv, dw) = dense_reference(&a);
                assert_eq!(s.eigenvalues.len(), n + 1);
                for i in 0..=n {
                    assert!(
                        (s.eigenvalues[i] - dv[i]).abs() < 1e-11,
                        "eigenvalue {i}: {} vs {}",
                        s.eigenvalues[i],
                        dv[i]
                    );
                    assert!(
                        (s.head_weights[i] - dw[i]).abs() < 1e-10,
                        "weight {i}: {} vs {}",
                        s.head_weights[i],
                        dw[i]
                    );
                }
            }
        }
    }

    #[test]
    fn uniform_fast_path_matches_general_evaluation() {
        let spacing = 1e-2;
        let count = 2001;
        let offset = -10.0;
        let g = 5e-2;
        let extras = [(3.1417, 2e-2)];
        let fast = Arrowhead::uniform_grid(0.2, offset, spacing, count, g, &extras).unwrap();
        let slow = {
            let mut a = fast.clone();
            a.structure = Structure::General;
            a
        };
        let sf = fast.solve().unwrap();
        let ss = slow.solve().unwrap();
        for (a, b) in sf.eigenvalues.iter().zip(&ss.eigenvalues) {
            assert!((a - b).abs() < 1e-12, "{a} vs {b}");
        }
        for (a, b) in sf.head_weights.iter().zip(&ss.head_weights) {
            assert!((a - b).abs() < 1e-12, "{a} vs {b}");
        }
    }

    #[test]
    fn uniform_grid_matches_dense_oracle() {
        let spacing = 0.05;
        let count = 400;
        let a = Arrowhead::uniform_grid(0.0, -10.0, spacing, count, 0.03, &[]).unwrap();
        let s = a.solve().unwrap();
        let (dv, dw) = dense_reference(&a);
        for i in 0..s.eigenvalues.len() {
            assert!((s.eigenvalues[i] - dv[i]).abs() < 1e-11);
            assert!((s.head_weights[i] - dw[i]).abs() < 1e-10);
        }
    }

    #[test]
    fn roots_interlace_poles_strictly() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let n = 64;
        let mut poles: Vec<f64> = (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect();
        poles.sort_by(f64::total_cmp);
        let couplings: Vec<f64> = (0..n).map(|_| rng.gen_range(1e-4..0.1)).collect();
        let a = Arrowhead::new(0.3, poles.clone(), couplings).unwrap();
        let s = a.solve().unwrap();
        for i in 0..n {
            assert!(s.eigenvalues[i] < poles[i]);
            assert!(poles[i] < s.eigenvalues[i + 1]);
        }
    }

    #[test]
    fn completeness_of_head_weights() {
        let a = Arrowhead::uniform_grid(0.0, -5.0, 0.01, 1001, 0.02, &[]).unwrap();
        let s = a.solve().unwrap();
        let total: f64 = s.head_weights.iter().sum();
        assert!((total - 1.0).abs() < 1e-12, "sum of weights {total}");
    }

    #[test]
    fn empty_pole_set_returns_head_eigenpair() {
        let a = Arrowhead::new(0.7, vec![], vec![]).unwrap();
        let s = a.solve().unwrap();
        assert_eq!(s.eigenvalues, vec![0.7]);
        assert_eq!(s.head_weights, vec![1.0]);
    }
}
