//! Univariate root finding: closed-form quadratics, companion-matrix
//! eigenvalues for explicit coefficient lists, and a simultaneous
//! Aberth–Ehrlich iteration for polynomials that are only available through
//! an evaluation oracle (iterates of a map, whose expanded coefficients are
//! badly conditioned).

use num_complex::Complex64;

use crate::linalg::CMat;
use crate::par;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const ONE: Complex64 = Complex64::new(1.0, 0.0);

/// Roots of `a2 z² + a1 z + a0` with `a2 ≠ 0`, avoiding cancellation.
pub fn quadratic_roots(a2: Complex64, a1: Complex64, a0: Complex64) -> [Complex64; 2] {
    let disc = (a1 * a1 - a2 * a0 * 4.0).sqrt();
    let q = if (a1.conj() * disc).re >= 0.0 { -(a1 + disc) * 0.5 } else { -(a1 - disc) * 0.5 };
    if q.norm() == 0.0 {
        return [ZERO, ZERO];
    }
    [q / a2, a0 / q]
}

pub(crate) fn horner(coeffs: &[Complex64], z: Complex64) -> (Complex64, Complex64) {
    let mut p = ZERO;
    let mut dp = ZERO;
    for &c in coeffs.iter().rev() {
        dp = dp * z + p;
        p = p * z + c;
    }
    (p, dp)
}

/// Roots of `Σ coeffs[i] zⁱ` (lowest degree first, nonzero leading
/// coefficient) as eigenvalues of the companion matrix, each polished by a
/// few Newton steps on the original polynomial.
pub fn companion_roots(coeffs: &[Complex64]) -> Vec<Complex64> {
    let deg = coeffs.len() - 1;
    match deg {
        0 => return vec![],
        1 => return vec![-coeffs[0] / coeffs[1]],
        2 => return quadratic_roots(coeffs[2], coeffs[1], coeffs[0]).to_vec(),
        _ => {}
    }
    let lead = coeffs[deg];
    let mut comp = CMat::zeros(deg, deg);
    for i in 1..deg {
        comp[(i, i - 1)] = ONE;
    }
    for i in 0..deg {
        comp[(i, deg - 1)] = -coeffs[i] / lead;
    }
    let t = nalgebra::Schur::new(comp).unpack().1;
    (0..deg)
        .map(|i| {
            let mut z = t[(i, i)];
            for _ in 0..3 {
                let (p, dp) = horner(coeffs, z);
                if dp.norm() == 0.0 {
                    break;
                }
                let step = p / dp;
                if !step.is_finite() || step.norm() > 1e-3 * (1.0 + z.norm()) {
                    break;
                }
                z -= step;
            }
            z
        })
        .collect()
}

/// Roots in P¹ of the binary form `Σ coeffs[i] zⁱ w^{d-i}`, returned as
/// homogeneous pairs `[z, w]` (one per root, with multiplicity). Exact zero
/// extreme coefficients are roots at `[1:0]` or `[0:1]`.
pub fn binary_form_roots(coeffs: &[Complex64]) -> Vec<[Complex64; 2]> {
    let d = coeffs.len() - 1;
    let lo = coeffs.iter().position(|c| c.norm() != 0.0);
    let Some(lo) = lo else {
        return vec![];
    };
    let hi = coeffs.iter().rposition(|c| c.norm() != 0.0).unwrap();
    let mut out = Vec::with_capacity(d);
    // z^lo divides the form: root [0:1] with multiplicity lo
    out.extend(std::iter::repeat_n([ZERO, ONE], lo));
    // w^(d-hi) divides the form: root [1:0]
    out.extend(std::iter::repeat_n([ONE, ZERO], d - hi));
    let core = &coeffs[lo..=hi];
    if core.len() <= 1 {
        return out;
    }
    if core[core.len() - 1].norm() >= core[0].norm() {
        for z in companion_roots(core) {
            out.push([z, ONE]);
        }
    } else {
        // chart w/z: reversed coefficients
        let rev: Vec<Complex64> = core.iter().rev().copied().collect();
        for w in companion_roots(&rev) {
            out.push([ONE, w]);
        }
    }
    out
}

#[derive(Clone, Debug)]
pub struct AberthOutcome {
    pub roots: Vec<Complex64>,
    pub converged: Vec<bool>,
    pub iterations: usize,
}

/// Simultaneous Aberth–Ehrlich iteration for a polynomial of known degree
/// given only its Newton correction `p(z)/p'(z)`.
pub fn aberth_implicit<F>(degree: usize, newton: F, max_iter: usize, tol: f64) -> AberthOutcome
where
    F: Fn(Complex64) -> Option<Complex64> + Sync + Send,
{
    let mut z: Vec<Complex64> = (0..degree)
        .map(|j| {
            let theta = std::f64::consts::TAU * (j as f64 + 0.25) / degree as f64 + 0.4;
            Complex64::from_polar(1.0 + 0.1 * ((j % 7) as f64 / 7.0), theta)
        })
        .collect();
    let mut converged = vec![false; degree];
    let mut iterations = 0;
    while iterations < max_iter && converged.iter().any(|c| !c) {
        iterations += 1;
        let current = z.clone();
        let updates: Vec<(Complex64, bool)> = par::map_range(degree, |i| {
            let zi = current[i];
            let Some(n) = newton(zi) else {
                // zero derivative: nudge
                return (zi + Complex64::new(1e-7, 1e-7) * (1.0 + zi.norm()), false);
            };
            if !n.is_finite() {
                return (zi, false);
            }
            let s: Complex64 = current
                .iter()
                .enumerate()
                .filter(|&(j, _)| j != i)
                .map(|(_, &zj)| {
                    let diff = zi - zj;
                    if diff.norm() == 0.0 { ZERO } else { diff.inv() }
                })
                .sum();
            let denom = ONE - n * s;
            let w = if denom.norm() > 0.0 { n / denom } else { n };
            let done = w.norm() <= tol * (1.0 + zi.norm());
            (zi - w, done)
        });
        for (i, (zn, done)) in updates.into_iter().enumerate() {
            if zn.is_finite() {
                z[i] = zn;
            }
            converged[i] = done;
        }
    }
    AberthOutcome { roots: z, converged, iterations }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn contains(roots: &[Complex64], z: Complex64, tol: f64) -> bool {
        roots.iter().any(|r| (r - z).norm() < tol)
    }

    #[test]
    fn quadratic_is_stable() {
        let r = quadratic_roots(ONE, c(-1e8, 0.0), ONE);
        assert!(contains(&r, c(1e8, 0.0), 1e-3));
        assert!(contains(&r, c(1e-8, 0.0), 1e-20));
    }

    #[test]
    fn companion_finds_roots_of_unity() {
        // z^7 - 1
        let mut coeffs = vec![ZERO; 8];
        coeffs[0] = -ONE;
        coeffs[7] = ONE;
        let roots = companion_roots(&coeffs);
        assert_eq!(roots.len(), 7);
        for j in 0..7 {
            let w = Complex64::from_polar(1.0, std::f64::consts::TAU * j as f64 / 7.0);
            assert!(contains(&roots, w, 1e-12));
        }
    }

    #[test]
    fn binary_form_handles_infinity() {
        // z * w * (z - 2w) = z^2 w - 2 z w^2 -> coeffs of z^i w^(3-i): [0, -2, 1, 0]
        let roots = binary_form_roots(&[ZERO, c(-2.0, 0.0), ONE, ZERO]);
        assert_eq!(roots.len(), 3);
        assert!(roots.iter().any(|r| r[1].norm() == 0.0));
        assert!(roots.iter().any(|r| r[0].norm() == 0.0));
        assert!(roots.iter().any(|r| r[1].norm() > 0.0 && (r[0] / r[1] - 2.0).norm() < 1e-12));
    }

    #[test]
    fn aberth_agrees_with_companion() {
        // (z^2 - 1)^2 - z with explicit coefficients: z^4 - 2 z^2 - z + 1
        let coeffs = [ONE, -ONE, c(-2.0, 0.0), ZERO, ONE];
        let companion = companion_roots(&coeffs);
        let out = aberth_implicit(
            4,
            |z| {
                let (p, dp) = horner(&coeffs, z);
                (dp.norm() > 0.0).then(|| p / dp)
            },
            500,
            1e-14,
        );
        assert!(out.converged.iter().all(|&c| c));
        for r in &companion {
            assert!(contains(&out.roots, *r, 1e-10), "{r} missing");
        }
    }
}
