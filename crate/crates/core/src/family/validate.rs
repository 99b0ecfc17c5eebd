use num_complex::Complex64;

use super::FamilySpec;
use crate::error::Result;
use crate::linalg;
use crate::mesh::ParamMesh;
use crate::preimage::{self, MixedSystem};
use crate::proj_geom;
use crate::roots;
use crate::rng;

/// Relative size of the last mixed component at the common zeros of the
/// others below which a parameter is reported as degenerate.
pub const COMMON_ZERO_TOL: f64 = 1e-7;
const MAX_PROBED_PARAMETERS: usize = 25;

#[derive(Clone, Debug)]
pub struct FailingParameter {
    pub lambda: Vec<Complex64>,
    /// `min |G_k| / (scale · ‖v‖^d)` over the probe solutions; `None` when
    /// the probe itself broke down.
    pub residual: Option<f64>,
    pub reason: String,
}

#[derive(Clone, Debug)]
pub struct ValidationReport {
    pub homogeneity: Vec<(usize, String)>,
    pub probed: usize,
    pub failing: Vec<FailingParameter>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.homogeneity.is_empty() && self.failing.is_empty()
    }

    /// One line per problem.
    pub fn problems(&self) -> Vec<String> {
        let mut out: Vec<String> = self.homogeneity.iter().map(|(c, why)| format!("component {c}: {why}")).collect();
        for f in &self.failing {
            out.push(format!("lambda {:?}: {}", f.lambda, f.reason));
        }
        out
    }
}

/// Checks homogeneity of every component, then probes for common zeros at up
/// to 25 mesh parameters.
///
/// The probe mixes the components by a random unitary `V`, solves the first
/// `k` mixed components `G₀ = … = G_{k−1} = 0` (finitely many points for a
/// generic `V`) and evaluates the last one there. A common zero of the
/// components is a common zero of every `Gᵢ` and is always found; an
/// endomorphism is misreported only if `|G_k|` falls below the threshold at a
/// solution by accident.
pub fn validate_family(spec: &FamilySpec) -> Result<ValidationReport> {
    spec.check_structure()?;
    let homogeneity = spec.homogeneity_issues();
    if !homogeneity.is_empty() {
        return Ok(ValidationReport { homogeneity, probed: 0, failing: vec![] });
    }
    let mesh = ParamMesh::from_domain(&spec.domain)?;
    let picks = mesh.subsample(MAX_PROBED_PARAMETERS);
    let failing: Vec<FailingParameter> = crate::par::map(&picks, |&i| probe(spec, &mesh.node(i), i as u64))
        .into_iter()
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .flatten()
        .collect();
    Ok(ValidationReport { homogeneity, probed: picks.len(), failing })
}

fn probe(spec: &FamilySpec, lambda: &[Complex64], index: u64) -> Result<Option<FailingParameter>> {
    let map = spec.at(lambda)?;
    let k = spec.k;
    let mut rng = rng::job_rng(0x7A11D, rng::stream::VALIDATION, index);
    let mixing = linalg::unitary_with_first_column(proj_geom::random_point(k, &mut rng).coords()).adjoint();
    let fail = |residual, reason: String| Ok(Some(FailingParameter { lambda: lambda.to_vec(), residual, reason }));
    let scale = map.coeff_scale();
    if scale == 0.0 {
        return fail(None, "all coefficients vanish".into());
    }
    let solutions: Vec<Vec<Complex64>> = if k == 1 {
        let [a0, a1] = map.binary_coefficients().expect("k = 1");
        let g0: Vec<Complex64> = a0.iter().zip(&a1).map(|(p, q)| mixing[(0, 0)] * p + mixing[(0, 1)] * q).collect();
        if g0.iter().all(|c| c.norm() <= 1e-14 * scale) {
            return fail(None, "mixed component vanishes identically".into());
        }
        roots::binary_form_roots(&g0).into_iter().map(|r| r.to_vec()).collect()
    } else {
        let sys = MixedSystem { map: &map, mixing: mixing.clone() };
        match preimage::solve_system(&sys, 0) {
            Ok(pts) => pts.into_iter().map(|p| p.coords().to_vec()).collect(),
            Err(e) => return fail(None, format!("common-zero probe did not converge ({e})")),
        }
    };
    let mut worst = f64::INFINITY;
    for v in &solutions {
        let norm: f64 = v.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
        let unit: Vec<Complex64> = v.iter().map(|c| c / norm).collect();
        let f = map.eval_lift(&unit);
        let g: Complex64 = (0..=k).map(|j| mixing[(k, j)] * f[j]).sum();
        worst = worst.min(g.norm() / scale);
    }
    if worst < COMMON_ZERO_TOL {
        return fail(Some(worst), format!("components share a zero (relative residual {worst:.2e})"));
    }
    Ok(None)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::family::presets;

    #[test]
    fn valid_and_invalid_families() {
        assert!(validate_family(&presets::power_map(2)).unwrap().is_valid());
        let report = validate_family(&presets::degenerate_p1()).unwrap();
        assert!(!report.is_valid());
        assert_eq!(report.failing.len(), 1);
        assert!(validate_family(&presets::product_map_p2()).unwrap().is_valid());
    }

    #[test]
    fn quadratic_family_valid_over_large_disk() {
        let spec = presets::quadratic_around(Complex64::new(0.0, 0.0), 2.0, 9);
        let report = validate_family(&spec).unwrap();
        assert!(report.is_valid(), "{:?}", report.problems());
        assert_eq!(report.probed, 25);
    }

    #[test]
    fn non_homogeneous_component_named() {
        let mut spec = presets::quadratic();
        spec.components[1].terms[0].monomial = vec![0, 1];
        let report = validate_family(&spec).unwrap();
        assert_eq!(report.homogeneity.len(), 1);
        assert_eq!(report.homogeneity[0].0, 1);
    }
}
