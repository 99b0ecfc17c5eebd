//! Holomorphic families `f(λ, z) = (λ, f_λ(z))` of endomorphisms of `Pᵏ`
//! whose components are homogeneous polynomials with coefficients polynomial
//! in the parameter `λ ∈ Cᵐ`.

mod format;
mod map;
pub mod presets;
mod validate;

pub use map::{FiberMap, JacobianSample};
pub use validate::{validate_family, ValidationReport};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::proj_geom::{ChartAtlas, PPoint};

/// One term `value · λ^param` of a coefficient polynomial.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamTerm {
    pub param: Vec<u32>,
    pub value: Complex64,
}

/// One monomial `coeff(λ) · z^monomial` of a component.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Term {
    pub monomial: Vec<u32>,
    pub coeff: Vec<ParamTerm>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Component {
    pub terms: Vec<Term>,
}

/// Parameter domain: nested polydisks `U₀ ⋐ V₀ ⋐ W₀` around `center`, and the
/// number of mesh nodes per real axis used to discretize `U₀`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DomainSpec {
    pub center: Vec<Complex64>,
    /// `[r_U, r_V, r_W]`, strictly increasing.
    pub radii: [f64; 3],
    pub mesh: usize,
}

impl DomainSpec {
    pub fn r_u(&self) -> f64 {
        self.radii[0]
    }
    pub fn r_v(&self) -> f64 {
        self.radii[1]
    }
    pub fn r_w(&self) -> f64 {
        self.radii[2]
    }

    pub fn in_polydisk(&self, lambda: &[Complex64], radius: f64) -> bool {
        lambda.iter().zip(&self.center).all(|(l, c)| (l - c).norm() <= radius * (1.0 + 1e-12))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FamilySpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub k: usize,
    pub d: u32,
    pub m: usize,
    pub components: Vec<Component>,
    pub domain: DomainSpec,
}

pub fn eval_param(coeff: &[ParamTerm], lambda: &[Complex64]) -> Complex64 {
    coeff
        .iter()
        .map(|t| {
            t.param
                .iter()
                .zip(lambda)
                .fold(t.value, |acc, (&e, &l)| acc * l.powu(e))
        })
        .sum()
}

impl FamilySpec {
    /// Structural checks that every operation relies on. Homogeneity is not
    /// required here; [`validate_family`] reports it per component.
    pub fn check_structure(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::Malformed("k must be at least 1".into()));
        }
        if self.d < 2 {
            return Err(Error::Malformed(format!("degree must be at least 2, got {}", self.d)));
        }
        if self.components.len() != self.k + 1 {
            return Err(Error::Malformed(format!(
                "expected {} components for P^{}, got {}",
                self.k + 1,
                self.k,
                self.components.len()
            )));
        }
        for (ci, comp) in self.components.iter().enumerate() {
            for term in &comp.terms {
                if term.monomial.len() != self.k + 1 {
                    return Err(Error::Malformed(format!(
                        "component {ci}: monomial {:?} has {} exponents, expected {}",
                        term.monomial,
                        term.monomial.len(),
                        self.k + 1
                    )));
                }
                for pt in &term.coeff {
                    if pt.param.len() != self.m {
                        return Err(Error::Malformed(format!(
                            "component {ci}: parameter exponent {:?} has length {}, expected m = {}",
                            pt.param,
                            pt.param.len(),
                            self.m
                        )));
                    }
                    if !pt.value.is_finite() {
                        return Err(Error::Malformed(format!("component {ci}: non-finite coefficient")));
                    }
                }
            }
        }
        let dom = &self.domain;
        if dom.center.len() != self.m {
            return Err(Error::Malformed(format!("domain center has {} entries, m = {}", dom.center.len(), self.m)));
        }
        let [ru, rv, rw] = dom.radii;
        if !(ru > 0.0 && ru < rv && rv < rw) {
            return Err(Error::Malformed(format!("domain radii must satisfy 0 < r_U < r_V < r_W, got {:?}", dom.radii)));
        }
        if dom.mesh == 0 {
            return Err(Error::Malformed("mesh resolution must be positive".into()));
        }
        Ok(())
    }

    /// Components that are not homogeneous of exact degree `d`, with a reason.
    pub fn homogeneity_issues(&self) -> Vec<(usize, String)> {
        let mut out = Vec::new();
        for (ci, comp) in self.components.iter().enumerate() {
            let bad: Vec<&Vec<u32>> = comp
                .terms
                .iter()
                .filter(|t| t.monomial.iter().sum::<u32>() != self.d)
                .map(|t| &t.monomial)
                .collect();
            if !bad.is_empty() {
                out.push((ci, format!("monomials {bad:?} are not of total degree {}", self.d)));
            } else if comp.terms.iter().all(|t| t.coeff.iter().all(|c| c.value.norm() == 0.0)) {
                out.push((ci, "component is identically zero".into()));
            }
        }
        out
    }

    /// Whether no coefficient depends on the parameter.
    pub fn is_constant(&self) -> bool {
        self.components
            .iter()
            .flat_map(|c| &c.terms)
            .flat_map(|t| &t.coeff)
            .all(|p| p.value.norm() == 0.0 || p.param.iter().all(|&e| e == 0))
    }

    /// Specializes the family at `λ`.
    pub fn at(&self, lambda: &[Complex64]) -> Result<FiberMap> {
        FiberMap::new(self, lambda)
    }

    /// Replaces the domain.
    /// The same family with every coefficient frozen at the domain center:
    /// constant in `λ`, same parameter space.
    pub fn frozen(&self) -> FamilySpec {
        let mut out = self.clone();
        for comp in &mut out.components {
            for term in &mut comp.terms {
                let v = eval_param(&term.coeff, &self.domain.center);
                term.coeff = vec![ParamTerm { param: vec![0; self.m], value: v }];
            }
        }
        out
    }

    pub fn with_domain(mut self, domain: DomainSpec) -> Self {
        self.domain = domain;
        self
    }

    pub fn atlas(&self) -> ChartAtlas {
        ChartAtlas::standard(self.k)
    }
}

/// `evaluate(spec, λ, p)`: image of `p` under `f_λ`.
pub fn evaluate(spec: &FamilySpec, lambda: &[Complex64], p: &PPoint) -> Result<PPoint> {
    spec.at(lambda)?.eval(p)
}

/// Chart Jacobian of `f_λ` at `p`.
pub fn jacobian_chart(spec: &FamilySpec, lambda: &[Complex64], p: &PPoint) -> Result<JacobianSample> {
    spec.at(lambda)?.chart_jacobian(p)
}

/// Determinant of the chart Jacobian; its zero set is `C_f` in the fiber.
pub fn critical_det(spec: &FamilySpec, lambda: &[Complex64], p: &PPoint) -> Result<Complex64> {
    Ok(spec.at(lambda)?.chart_jacobian(p)?.det)
}
