//! Iterated inverse branches along a backward orbit, applied to tubes.

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

use super::{choose_p, r_p_eval, temper_sequence, u_hat, BackwardOrbit, DEFAULT_EPSILON};
use crate::error::{Error, Result};
use crate::family::{FamilySpec, FiberMap};
use crate::linalg::{self, CMat};
use crate::par;
use crate::preimage;
use crate::proj_geom::{self, Coords, PPoint};
use crate::rng;

const RING_POINTS: usize = 32;
const INTERIOR_POINTS: usize = 31;
/// Slack of the tube-mapping check against the fitted rate.
const TUBE_SLACK: f64 = 1.1;

#[derive(Clone, Copy, Debug)]
pub struct TubeSpec {
    /// Chordal radius `η ≤ 1` around `γ_0(λ)` at every mesh node.
    pub radius: f64,
}

#[derive(Clone, Debug)]
pub struct ContractionReport {
    /// `û_n` for `n = 1..=n_max`.
    pub u_hat: Vec<f64>,
    /// Largest chordal distance from the image of the tube to `γ_{−n}`.
    pub radii: Vec<f64>,
    /// Largest one-step ratio of distances to the orbit.
    pub lipschitz: Vec<f64>,
    /// Fitted contraction rate `A` (nats per step) and its standard error.
    pub rate: f64,
    pub rate_error: f64,
    pub verified: bool,
    pub p: usize,
    pub r_p: f64,
    /// Largest admissible tube radius (half the calibrated radius).
    pub guard_radius: f64,
    pub c_p: f64,
    pub tau: f64,
    pub epsilon: f64,
    /// `(1/p)·mean û_p` along the orbit.
    pub l_prime: f64,
    /// `−(L′ + τ + ε/2)`.
    pub rate_theory: f64,
    /// `(α, β)` tempering the normalized radii.
    pub tempering: (f64, f64),
    pub samples_per_node: usize,
}

/// Chart radius whose image under `ψ` has chordal radius `eta`.
fn chart_radius(eta: f64) -> f64 {
    eta / (1.0 - eta * eta).max(1e-12).sqrt()
}

fn norm(z: &[Complex64]) -> f64 {
    z.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt()
}

/// Chordal distance from `ψ(0)` to `ψ(δ)` for a unitary chart.
fn chordal_of(delta: &[Complex64]) -> f64 {
    let r = norm(delta);
    r / (1.0 + r * r).sqrt()
}

/// Deterministic tube sample in chart coordinates: center, boundary ring,
/// random interior.
fn tube_sample(k: usize, eta: f64, seed: u64, node: usize) -> Vec<Coords> {
    let r = chart_radius(eta);
    let mut rng = rng::job_rng(seed, rng::stream::TUBE_SAMPLES, node as u64);
    let mut out = vec![Coords::from_elem(Complex64::new(0.0, 0.0), k)];
    for j in 0..RING_POINTS {
        if k == 1 {
            out.push(Coords::from_elem(Complex64::from_polar(r, std::f64::consts::TAU * j as f64 / RING_POINTS as f64), 1));
        } else {
            let g: Coords = (0..k).map(|_| Complex64::new(rng.sample(StandardNormal), rng.sample(StandardNormal))).collect();
            let n = norm(&g);
            out.push(g.iter().map(|c| c * (r / n)).collect());
        }
    }
    for _ in 0..INTERIOR_POINTS {
        out.push(proj_geom::random_ball(k, r, &mut rng));
    }
    out
}

struct Step {
    /// Chart at `γ_{−j+1}` (target) and at `γ_{−j}` (source).
    target: proj_geom::Chart,
    source: proj_geom::Chart,
    inv: CMat,
    center: PPoint,
    /// Other preimages of `γ_{−j+1}`.
    others: Vec<PPoint>,
    guard: f64,
}

impl Step {
    fn new(map: &FiberMap, from: &PPoint, center: &PPoint, guard: f64) -> Result<Self> {
        let atlas = map.atlas();
        let jac = map.chart_jacobian(center)?;
        let inv = linalg::inverse(&jac.matrix).ok_or_else(|| Error::Solver("singular Jacobian on the orbit".into()))?;
        let mut others = preimage::preimages(map, from)?;
        let me = (0..others.len())
            .min_by(|&a, &b| proj_geom::distance(&others[a], center).total_cmp(&proj_geom::distance(&others[b], center)))
            .unwrap();
        others.swap_remove(me);
        Ok(Self { target: atlas.chart_at(from)?, source: atlas.chart_at(center)?, inv, center: center.clone(), others, guard })
    }

    /// The branch of `f⁻¹` at `γ_{−j}` applied to the point with chart
    /// offset `y` at `γ_{−j+1}`, by Newton with the frozen inverse Jacobian.
    fn invert(&self, map: &FiberMap, y: &[Complex64]) -> Option<Coords> {
        let apply = |v: &[Complex64]| -> Coords {
            (0..v.len()).map(|i| (0..v.len()).map(|j| self.inv[(i, j)] * v[j]).sum()).collect()
        };
        let mut delta = apply(y);
        let scale = norm(y);
        let residual = |delta: &[Complex64]| -> Option<Coords> {
            let fy = map.eval(&self.source.from_chart(delta)).ok()?;
            let w = self.target.to_chart(&fy).ok()?;
            Some(w.iter().zip(y).map(|(a, b)| a - b).collect())
        };
        for _ in 0..80 {
            let step = apply(&residual(&delta)?);
            let s = norm(&step);
            if !s.is_finite() || s > 10.0 {
                return None;
            }
            for (d, st) in delta.iter_mut().zip(&step) {
                *d -= st;
            }
            if s <= 1e-14 * norm(&delta) || s <= 1e-17 {
                break;
            }
        }
        (norm(&residual(&delta)?) <= 1e-10 * scale + 1e-15).then_some(delta)
    }

    /// Branch consistency: near `γ_{−j}`, closer to it than to any other
    /// preimage of `γ_{−j+1}`.
    fn consistent(&self, delta: &[Complex64]) -> bool {
        let d = chordal_of(delta);
        if d > self.guard {
            return false;
        }
        if self.others.is_empty() || d < 1e-6 {
            return true;
        }
        let p = self.source.from_chart(delta);
        let _ = &self.center;
        self.others.iter().all(|q| proj_geom::distance(&p, q) > d)
    }
}

/// Images of the tube sample at every step: `result[j][s]` is the chart
/// offset at `γ_{−j−1}` of sample point `s`. Fails at the first
/// inconsistent step with its index.
fn propagate(spec: &FamilySpec, orbit: &BackwardOrbit, node: usize, eta: f64, n_max: usize, guard: f64, seed: u64) -> Result<Vec<Vec<Coords>>> {
    let map = spec.at(&orbit.mesh.node(node))?;
    let mut cur = tube_sample(spec.k, eta, seed, node);
    let mut out = Vec::with_capacity(n_max);
    for j in 1..=n_max {
        let step = Step::new(&map, orbit.at(j - 1, node), orbit.at(j, node), guard)?;
        let next: Option<Vec<Coords>> =
            par::map(&cur, |y| step.invert(&map, y).filter(|d| step.consistent(d))).into_iter().collect();
        let Some(next) = next else {
            return Err(Error::Solver(format!("inverse branch jumps or fails at step {j} (node {node})")));
        };
        out.push(next.clone());
        cur = next;
    }
    Ok(out)
}

const CALIBRATION_RADII: usize = 12;

/// Largest radius `0.8·2^{−i}` at which `p`-step branch-consistent
/// inversion succeeds at every node; `None` when even the smallest fails.
pub fn calibrate_tube_radius(spec: &FamilySpec, orbit: &BackwardOrbit, p: usize, guard: f64) -> Result<Option<f64>> {
    let p = p.min(orbit.depth());
    for i in 0..CALIBRATION_RADII {
        let eta = 0.8 * 0.5f64.powi(i as i32);
        let ok = (0..orbit.mesh.len()).all(|node| propagate(spec, orbit, node, eta, p, guard, orbit.seed ^ 0xCA1).is_ok());
        if ok {
            return Ok(Some(eta));
        }
    }
    Ok(None)
}

struct Setup {
    p: usize,
    l_prime: f64,
    r_p: f64,
    guard: f64,
    guard_radius: f64,
}

fn setup(spec: &FamilySpec, orbit: &BackwardOrbit, eps: f64) -> Result<Setup> {
    let (p, avgs) = choose_p(spec, orbit, eps)?;
    let r_p = r_p_eval(spec, orbit, p)?;
    let guard = (r_p.sqrt() / 4.0).min(1.0);
    let calibrated = calibrate_tube_radius(spec, orbit, p, guard)?
        .ok_or_else(|| Error::Precondition("no tube radius admits consistent inverse branches".into()))?;
    Ok(Setup { p, l_prime: avgs[p - 1], r_p, guard, guard_radius: calibrated / 2.0 })
}

/// Largest tube radius [`inverse_branch_iterate`] accepts on this orbit.
pub fn admissible_radius(spec: &FamilySpec, orbit: &BackwardOrbit) -> Result<f64> {
    Ok(setup(spec, orbit, DEFAULT_EPSILON)?.guard_radius)
}

/// Applies `f^{−n}` along the orbit to a tube around `γ_0` for
/// `n = 1..=n_max` and measures the contraction.
pub fn inverse_branch_iterate(spec: &FamilySpec, orbit: &BackwardOrbit, tube: TubeSpec, n_max: usize) -> Result<ContractionReport> {
    if !(tube.radius > 0.0 && tube.radius <= 1.0) {
        return Err(Error::Precondition(format!("tube radius {} outside (0, 1]", tube.radius)));
    }
    if orbit.depth() < n_max || n_max < 2 {
        return Err(Error::Precondition(format!("orbit depth {} below n_max = {n_max} (≥ 2)", orbit.depth())));
    }
    let eps = DEFAULT_EPSILON;
    let Setup { p, l_prime, r_p, guard, guard_radius } = setup(spec, orbit, eps)?;
    if tube.radius > guard_radius {
        return Err(Error::Precondition(format!("tube radius {} exceeds the calibrated guard {guard_radius}", tube.radius)));
    }
    let images: Vec<Vec<Vec<Coords>>> = (0..orbit.mesh.len())
        .map(|node| propagate(spec, orbit, node, tube.radius, n_max, guard, orbit.seed))
        .collect::<Result<_>>()?;
    let mut radii = vec![0.0f64; n_max];
    let mut lipschitz = vec![0.0f64; n_max];
    for (node, node_images) in images.iter().enumerate() {
        let initial: Vec<f64> = tube_sample(spec.k, tube.radius, orbit.seed, node).iter().map(|d| chordal_of(d)).collect();
        let mut before = initial;
        for (j, level) in node_images.iter().enumerate() {
            let now: Vec<f64> = level.iter().map(|d| chordal_of(d)).collect();
            let top = before.iter().copied().fold(0.0, f64::max);
            for (r, b) in now.iter().zip(&before) {
                radii[j] = radii[j].max(*r);
                // points at the center only carry rounding noise
                if *b > 1e-6 * top {
                    lipschitz[j] = lipschitz[j].max(r / b);
                }
            }
            before = now;
        }
    }
    let pts: Vec<(f64, f64)> = radii.iter().enumerate().map(|(j, r)| ((j + 1) as f64, r.ln())).collect();
    let (slope, slope_err) = fit_slope(&pts);
    let rate = -slope;
    let monotone = radii.windows(2).all(|w| w[1] <= w[0]) && radii[0] <= tube.radius;
    let within = radii.iter().enumerate().all(|(j, &r)| r <= TUBE_SLACK * tube.radius * (-rate * (j + 1) as f64).exp());
    let normalized: Vec<f64> = radii.iter().enumerate().map(|(j, &r)| r / (tube.radius * (-rate * (j + 1) as f64).exp())).collect();
    let tempering = temper_sequence(&normalized, eps)?;
    let u: Vec<f64> = (1..=n_max).map(|n| u_hat(spec, orbit, n, n)).collect::<Result<_>>()?;
    let tau = spec.atlas().tau;
    Ok(ContractionReport {
        u_hat: u,
        radii,
        lipschitz,
        rate,
        rate_error: slope_err,
        verified: monotone && within,
        p,
        r_p,
        guard_radius,
        c_p: guard_radius / r_p,
        tau,
        epsilon: eps,
        l_prime,
        rate_theory: -(l_prime + tau + eps / 2.0),
        tempering,
        samples_per_node: 1 + RING_POINTS + INTERIOR_POINTS,
    })
}

/// Least-squares slope with its standard error.
fn fit_slope(pts: &[(f64, f64)]) -> (f64, f64) {
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let b = sxy / sxx;
    let rss: f64 = pts.iter().map(|p| (p.1 - my - b * (p.0 - mx)).powi(2)).sum();
    let se = if pts.len() > 2 { (rss / (n - 2.0) / sxx).sqrt() } else { f64::NAN };
    (b, se)
}

#[cfg(test)]
mod tests {
    use super::super::{sample_backward_orbit, BranchChoice};
    use super::*;
    use crate::family::presets;
    use crate::mesh::ParamMesh;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn orbit(spec: &FamilySpec, z: Complex64, depth: usize, choice: BranchChoice) -> BackwardOrbit {
        sample_backward_orbit(spec, &ParamMesh::point(&[]), &[PPoint::affine1(z)], depth, choice, 11).unwrap()
    }

    #[test]
    fn squaring_contracts_by_half() {
        let spec = presets::power_map(2);
        let rep = inverse_branch_iterate(&spec, &orbit(&spec, c(1.0, 0.0), 20, BranchChoice::Random), TubeSpec { radius: 0.1 }, 20).unwrap();
        assert!((rep.rate / 2f64.ln() - 1.0).abs() < 0.1, "{}", rep.rate);
        assert!(rep.verified);
        assert!((rep.lipschitz[19] - 0.5).abs() < 1e-6, "{:?}", rep.lipschitz);
        for (j, r) in rep.radii.iter().enumerate() {
            let expect = 0.1 * 0.5f64.powi(j as i32 + 1);
            assert!((r / expect - 1.0).abs() < 0.1, "{j}: {r}");
        }
    }

    #[test]
    fn single_step_lipschitz_of_square_root() {
        let spec = presets::power_map(2);
        let rep = inverse_branch_iterate(&spec, &orbit(&spec, c(1.0, 0.0), 2, BranchChoice::Nearest), TubeSpec { radius: 1e-4 }, 2).unwrap();
        assert!((rep.lipschitz[0] - 0.5).abs() < 1e-3);
    }

    #[test]
    fn chebyshev_fixed_orbit_rate() {
        let spec = presets::chebyshev();
        let rep = inverse_branch_iterate(&spec, &orbit(&spec, c(2.0, 0.0), 20, BranchChoice::Nearest), TubeSpec { radius: 0.05 }, 20).unwrap();
        assert!((rep.rate / 4f64.ln() - 1.0).abs() < 0.1, "{}", rep.rate);
        assert!(rep.verified, "{:?}", rep.radii);
    }

    #[test]
    fn oversized_tube_is_refused() {
        let spec = presets::power_map(2);
        let err = inverse_branch_iterate(&spec, &orbit(&spec, c(1.0, 0.0), 5, BranchChoice::Random), TubeSpec { radius: 0.9 }, 5);
        assert!(matches!(err, Err(Error::Precondition(_))));
    }
}
