//! Families used throughout the tests and examples.

use num_complex::Complex64;

use super::{Component, DomainSpec, FamilySpec, ParamTerm, Term};

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

fn constant(value: Complex64, m: usize) -> Vec<ParamTerm> {
    vec![ParamTerm { param: vec![0; m], value }]
}

fn term(monomial: &[u32], coeff: Vec<ParamTerm>) -> Term {
    Term { monomial: monomial.to_vec(), coeff }
}

fn domain(center: Vec<Complex64>, radius: f64, mesh: usize) -> DomainSpec {
    DomainSpec { center, radii: [radius, 1.5 * radius, 2.0 * radius], mesh }
}

/// `z ↦ z^d` as the constant family `[z^d : w^d]` (`m = 0`).
pub fn power_map(d: u32) -> FamilySpec {
    FamilySpec {
        name: Some(format!("power-{d}")),
        k: 1,
        d,
        m: 0,
        components: vec![
            Component { terms: vec![term(&[d, 0], constant(c(1.0, 0.0), 0))] },
            Component { terms: vec![term(&[0, d], constant(c(1.0, 0.0), 0))] },
        ],
        domain: domain(vec![], 0.2, 1),
    }
}

/// `z ↦ z² + c` lifted to `[z² + c w² : w²]`, parameter `c`, domain `|c| ≤ 0.2`.
pub fn quadratic() -> FamilySpec {
    FamilySpec {
        name: Some("quadratic".into()),
        k: 1,
        d: 2,
        m: 1,
        components: vec![
            Component {
                terms: vec![
                    term(&[2, 0], constant(c(1.0, 0.0), 1)),
                    term(&[0, 2], vec![ParamTerm { param: vec![1], value: c(1.0, 0.0) }]),
                ],
            },
            Component { terms: vec![term(&[0, 2], constant(c(1.0, 0.0), 1))] },
        ],
        domain: domain(vec![c(0.0, 0.0)], 0.2, 21),
    }
}

/// The quadratic family with its domain moved to `|c − center| ≤ radius`.
pub fn quadratic_around(center: Complex64, radius: f64, mesh: usize) -> FamilySpec {
    quadratic().with_domain(domain(vec![center], radius, mesh))
}

/// The single map `z ↦ z² + c` as a constant family.
pub fn quadratic_at(value: Complex64) -> FamilySpec {
    FamilySpec {
        name: Some(format!("quadratic-at-{}{:+}i", value.re, value.im)),
        k: 1,
        d: 2,
        m: 0,
        components: vec![
            Component { terms: vec![term(&[2, 0], constant(c(1.0, 0.0), 0)), term(&[0, 2], constant(value, 0))] },
            Component { terms: vec![term(&[0, 2], constant(c(1.0, 0.0), 0))] },
        ],
        domain: domain(vec![], 0.2, 1),
    }
}

/// `z ↦ z² − 2`.
pub fn chebyshev() -> FamilySpec {
    let mut spec = quadratic_at(c(-2.0, 0.0));
    spec.name = Some("chebyshev".into());
    spec
}

/// `[z² : w² : t²]` on `P²`.
pub fn product_map_p2() -> FamilySpec {
    let one = || constant(c(1.0, 0.0), 0);
    FamilySpec {
        name: Some("product-p2".into()),
        k: 2,
        d: 2,
        m: 0,
        components: vec![
            Component { terms: vec![term(&[2, 0, 0], one())] },
            Component { terms: vec![term(&[0, 2, 0], one())] },
            Component { terms: vec![term(&[0, 0, 2], one())] },
        ],
        domain: domain(vec![], 0.2, 1),
    }
}

/// A one-parameter family on `P²`:
/// `[z² + λ w² + a z t : w² + a t² : t²]`, parameter `λ` near 0.
pub fn coupled_p2(a: Complex64) -> FamilySpec {
    FamilySpec {
        name: Some("coupled-p2".into()),
        k: 2,
        d: 2,
        m: 1,
        components: vec![
            Component {
                terms: vec![
                    term(&[2, 0, 0], constant(c(1.0, 0.0), 1)),
                    term(&[0, 2, 0], vec![ParamTerm { param: vec![1], value: c(1.0, 0.0) }]),
                    term(&[1, 0, 1], constant(a, 1)),
                ],
            },
            Component { terms: vec![term(&[0, 2, 0], constant(c(1.0, 0.0), 1)), term(&[0, 0, 2], constant(a, 1))] },
            Component { terms: vec![term(&[0, 0, 2], constant(c(1.0, 0.0), 1))] },
        ],
        domain: domain(vec![c(0.0, 0.0)], 0.1, 5),
    }
}

/// `[z² : z w]`, which is not an endomorphism (common zero `[0:1]`).
pub fn degenerate_p1() -> FamilySpec {
    let one = || constant(c(1.0, 0.0), 0);
    FamilySpec {
        name: Some("degenerate".into()),
        k: 1,
        d: 2,
        m: 0,
        components: vec![
            Component { terms: vec![term(&[2, 0], one())] },
            Component { terms: vec![term(&[1, 1], one())] },
        ],
        domain: domain(vec![], 0.2, 1),
    }
}
