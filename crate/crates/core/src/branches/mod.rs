//! Sampled backward orbits, the functions `u_n` and `r_p`, iterated inverse
//! branches on tubes, tempering and the Kingman estimate.
//!
//! A backward orbit is stored per mesh node. In fixed-parameter mode the mesh
//! has a single node. In motion mode the branch is chosen at the root and
//! followed to the other nodes by continuity.

mod temper;
mod tube;

pub use temper::temper_sequence;
pub use tube::{admissible_radius, calibrate_tube_radius, inverse_branch_iterate, ContractionReport, TubeSpec};

use num_complex::Complex64;
use rand::Rng;

use crate::error::{Error, Result};
use crate::family::FamilySpec;
use crate::linalg::ScaledProduct;
use crate::measures;
use crate::mesh::ParamMesh;
use crate::par;
use crate::preimage;
use crate::proj_geom::{self, PPoint};
use crate::rng;
use crate::stability::EPS_CRIT;

pub const DEFAULT_DEPTH: usize = 50;
pub const DEFAULT_EPSILON: f64 = 0.05;
pub const MAX_P: usize = 8;
/// Tolerance of the step relation `f(γ_{−j}) = γ_{−j+1}`.
pub const RELATION_TOL: f64 = 1e-9;
const SOLVER_RETRIES: usize = 3;
const BURN_IN: usize = 100;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BranchChoice {
    /// Uniform among the `dᵏ` preimages, with multiplicity.
    Random,
    /// The preimage closest to the current point (a fixed point yields the
    /// constant orbit).
    Nearest,
}

#[derive(Clone, Debug)]
pub struct BackwardOrbit {
    pub mesh: ParamMesh,
    pub root: usize,
    /// `points[j][node] = γ_{−j}(λ_node)`, `j = 0..=depth`.
    pub points: Vec<Vec<PPoint>>,
    /// Preimage index chosen at the root at each step.
    pub choices: Vec<usize>,
    pub seed: u64,
}

impl BackwardOrbit {
    pub fn depth(&self) -> usize {
        self.points.len() - 1
    }

    pub fn at(&self, j: usize, node: usize) -> &PPoint {
        &self.points[j][node]
    }

    /// Largest `d(f(γ_{−j}), γ_{−j+1})` over steps and nodes.
    pub fn relation_error(&self, spec: &FamilySpec) -> Result<f64> {
        let mut worst: f64 = 0.0;
        for i in 0..self.mesh.len() {
            let map = spec.at(&self.mesh.node(i))?;
            for j in 1..self.points.len() {
                worst = worst.max(proj_geom::distance(&map.eval(&self.points[j][i])?, &self.points[j - 1][i]));
            }
        }
        Ok(worst)
    }
}

/// Samples `γ_{−1}, …, γ_{−depth}` above `base` (one point per mesh node).
pub fn sample_backward_orbit(
    spec: &FamilySpec,
    mesh: &ParamMesh,
    base: &[PPoint],
    depth: usize,
    choice: BranchChoice,
    seed: u64,
) -> Result<BackwardOrbit> {
    if base.len() != mesh.len() {
        return Err(Error::Precondition(format!("{} base points for {} mesh nodes", base.len(), mesh.len())));
    }
    let root = root_of(mesh);
    let maps: Vec<_> = (0..mesh.len()).map(|i| spec.at(&mesh.node(i))).collect::<Result<_>>()?;
    let order = mesh.bfs(root);
    let mut rng = rng::job_rng(seed, rng::stream::BACKWARD_ORBIT, 0);
    let mut points = vec![base.to_vec()];
    let mut choices = Vec::with_capacity(depth);
    for j in 1..=depth {
        let prev = &points[j - 1];
        let mut attempt = 0;
        let (level, pick) = loop {
            match step_back(&maps, &order, prev, choice, &mut rng) {
                Ok(v) => break v,
                Err(e) => {
                    attempt += 1;
                    if attempt >= SOLVER_RETRIES {
                        return Err(Error::Solver(format!("backward step {j} failed {attempt} times: {e}")));
                    }
                }
            }
        };
        points.push(level);
        choices.push(pick);
    }
    Ok(BackwardOrbit { mesh: mesh.clone(), root, points, choices, seed })
}

fn root_of(mesh: &ParamMesh) -> usize {
    let nodes = mesh.nodes();
    let m = mesh.m();
    let mean: Vec<Complex64> = (0..m).map(|j| nodes.iter().map(|l| l[j]).sum::<Complex64>() / nodes.len() as f64).collect();
    mesh.nearest(&mean)
}

fn step_back<R: Rng>(
    maps: &[crate::FiberMap],
    order: &[(usize, Option<usize>)],
    prev: &[PPoint],
    choice: BranchChoice,
    rng: &mut R,
) -> Result<(Vec<PPoint>, usize)> {
    let mut level: Vec<Option<PPoint>> = vec![None; prev.len()];
    let mut pick = 0;
    for &(i, parent) in order {
        let pre = preimage::preimages(&maps[i], &prev[i])?;
        let target = match parent {
            None => {
                pick = match choice {
                    BranchChoice::Random => rng.random_range(0..pre.len()),
                    BranchChoice::Nearest => nearest(&pre, &prev[i]),
                };
                pre[pick].clone()
            }
            Some(p) => pre[nearest(&pre, level[p].as_ref().unwrap())].clone(),
        };
        if proj_geom::distance(&maps[i].eval(&target)?, &prev[i]) > RELATION_TOL {
            return Err(Error::Solver("preimage fails the step relation".into()));
        }
        level[i] = Some(target);
    }
    Ok((level.into_iter().map(Option::unwrap).collect(), pick))
}

fn nearest(points: &[PPoint], to: &PPoint) -> usize {
    (0..points.len())
        .min_by(|&a, &b| proj_geom::distance(&points[a], to).total_cmp(&proj_geom::distance(&points[b], to)))
        .unwrap()
}

/// Base points distributed by `μ_λ`: the end of a burnt-in random backward
/// orbit, with the branch chosen at the root and followed by continuity.
pub fn generic_base(spec: &FamilySpec, mesh: &ParamMesh, seed: u64) -> Result<Vec<PPoint>> {
    let start = vec![measures::pullback_seed(spec.k, seed, 0); mesh.len()];
    let mut orbit = sample_backward_orbit(spec, mesh, &start, BURN_IN, BranchChoice::Random, rng::split(seed, rng::stream::BACKWARD_ORBIT, 1))?;
    Ok(orbit.points.pop().unwrap())
}

/// `u_n(γ_{−start}, λ) = −ln δ(D fⁿ)` along `γ_{−start} → γ_{−start+n}`,
/// from the product of one-step chart Jacobians.
pub fn u_eval(spec: &FamilySpec, orbit: &BackwardOrbit, node: usize, start: usize, n: usize) -> Result<f64> {
    Ok(-jacobian_product(spec, orbit, node, start, n)?.log_min_singular())
}

pub(crate) fn jacobian_product(spec: &FamilySpec, orbit: &BackwardOrbit, node: usize, start: usize, n: usize) -> Result<ScaledProduct> {
    if n > start || start > orbit.depth() {
        return Err(Error::Precondition(format!("u_{n} from γ_-{start} needs depth ≥ {start} and n ≤ start")));
    }
    let map = spec.at(&orbit.mesh.node(node))?;
    let mut prod = ScaledProduct::identity(spec.k);
    for j in (start - n + 1..=start).rev() {
        let jac = map.chart_jacobian(orbit.at(j, node))?;
        if jac.delta <= EPS_CRIT {
            return Err(Error::Solver(format!("Jacobian singular at γ_-{j} (δ = {:e})", jac.delta)));
        }
        prod.left_mul(&jac.matrix);
    }
    Ok(prod)
}

/// `û_n` from `γ_{−start}`: the supremum of `u_n` over the mesh.
pub fn u_hat(spec: &FamilySpec, orbit: &BackwardOrbit, start: usize, n: usize) -> Result<f64> {
    let mut sup = f64::NEG_INFINITY;
    for i in 0..orbit.mesh.len() {
        sup = sup.max(u_eval(spec, orbit, i, start, n)?);
    }
    Ok(sup)
}

/// `r_p = exp(−2 sup_λ u_p)` for the inverse branch `γ_0 → γ_{−p}`.
pub fn r_p_eval(spec: &FamilySpec, orbit: &BackwardOrbit, p: usize) -> Result<f64> {
    Ok((-2.0 * u_hat(spec, orbit, p, p)?).exp())
}

#[derive(Clone, Debug)]
pub struct KingmanEstimate {
    pub value: f64,
    pub ci: (f64, f64),
    pub per_orbit: Vec<f64>,
    pub p: usize,
    /// `value > −ln d / 2 + tolerance`.
    pub violation: bool,
}

pub const KINGMAN_TOL: f64 = 0.05;
const BOOTSTRAP_RESAMPLES: usize = 2000;

/// Birkhoff average of `û_p(F̂^{−j} γ̂)/p` over `j = 1..=depth`, per sampled
/// orbit, with a percentile bootstrap interval over orbits.
pub fn kingman_estimate(spec: &FamilySpec, mesh: &ParamMesh, p: usize, orbits: usize, depth: usize, seed: u64) -> Result<KingmanEstimate> {
    if p == 0 || orbits == 0 || depth == 0 {
        return Err(Error::Precondition("p, orbit count and depth must be positive".into()));
    }
    let per_orbit = par::map_range(orbits, |o| -> Result<f64> {
        let s = rng::split(seed, rng::stream::BACKWARD_ORBIT, o as u64);
        let base = generic_base(spec, mesh, s)?;
        let orbit = sample_backward_orbit(spec, mesh, &base, depth + p, BranchChoice::Random, s)?;
        let mut sum = 0.0;
        for j in 1..=depth {
            sum += u_hat(spec, &orbit, j + p, p)?;
        }
        Ok(sum / (depth * p) as f64)
    });
    let per_orbit: Vec<f64> = per_orbit.into_iter().collect::<Result<_>>()?;
    let value = per_orbit.iter().sum::<f64>() / per_orbit.len() as f64;
    let ci = bootstrap_ci(&per_orbit, seed);
    let bound = -(spec.d as f64).ln() / 2.0;
    Ok(KingmanEstimate { value, ci, per_orbit, p, violation: value > bound + KINGMAN_TOL })
}

/// 95% percentile bootstrap interval of the mean.
pub fn bootstrap_ci(values: &[f64], seed: u64) -> (f64, f64) {
    let n = values.len();
    let mut rng = rng::job_rng(seed, rng::stream::BOOTSTRAP, 0);
    let mut means: Vec<f64> = (0..BOOTSTRAP_RESAMPLES)
        .map(|_| (0..n).map(|_| values[rng.random_range(0..n)]).sum::<f64>() / n as f64)
        .collect();
    means.sort_by(f64::total_cmp);
    let q = |f: f64| means[((f * (means.len() - 1) as f64).round() as usize).min(means.len() - 1)];
    (q(0.025), q(0.975))
}

/// Chooses `p ≤ MAX_P`: the smallest with `(1/p)·mean û_p ≤ L̂ + ε`, where
/// `L̂` is the `p = MAX_P` average. Returns `(p, averages)`.
pub fn choose_p(spec: &FamilySpec, orbit: &BackwardOrbit, eps: f64) -> Result<(usize, Vec<f64>)> {
    let max_p = MAX_P.min(orbit.depth() / 2).max(1);
    let mut avgs = Vec::with_capacity(max_p);
    for p in 1..=max_p {
        let count = orbit.depth() - p;
        let mut sum = 0.0;
        for j in 0..count.max(1) {
            sum += u_hat(spec, orbit, (j + p).min(orbit.depth()), p)?;
        }
        avgs.push(sum / (count.max(1) * p) as f64);
    }
    let target = avgs[max_p - 1] + eps;
    let p = avgs.iter().position(|&a| a <= target).unwrap() + 1;
    Ok((p, avgs))
}

#[derive(Clone, Debug)]
pub struct KeyComparison {
    pub alpha: f64,
    /// `c ≥ 1`.
    pub c: f64,
    pub samples: usize,
    /// `(orbit, node, n, lhs − rhs)` where the fitted inequality fails.
    pub violations: Vec<(usize, usize, usize, f64)>,
}

/// Fits the smallest `(k/α, ln c)` with
/// `(1/n) u_n(γ, λ) ≤ (k/α)(1/n) u_n(γ, λ′₀) + ln c`
/// over all samples, `λ′₀` being each orbit's root node.
pub fn key_comparison(spec: &FamilySpec, orbits: &[BackwardOrbit], ns: &[usize]) -> Result<KeyComparison> {
    // (x, y) = ((1/n) u_n(λ), (1/n) u_n(λ′₀)) with provenance
    let mut samples = Vec::new();
    for (o, orbit) in orbits.iter().enumerate() {
        for &n in ns {
            let y = u_eval(spec, orbit, orbit.root, n, n)? / n as f64;
            for i in 0..orbit.mesh.len() {
                samples.push((o, i, n, u_eval(spec, orbit, i, n, n)? / n as f64, y));
            }
        }
    }
    let k = spec.k as f64;
    let ln_c_for = |alpha: f64| samples.iter().map(|s| s.3 - k / alpha * s.4).fold(0.0, f64::max);
    let mut best = (1.0, ln_c_for(1.0));
    for j in (1..100).rev() {
        let alpha = j as f64 / 100.0;
        let lc = ln_c_for(alpha);
        if lc < best.1 - 1e-15 {
            best = (alpha, lc);
        }
    }
    let (alpha, ln_c) = best;
    let violations = samples
        .iter()
        .filter_map(|&(o, i, n, x, y)| {
            let gap = x - (k / alpha * y + ln_c);
            (gap > 1e-12).then_some((o, i, n, gap))
        })
        .collect();
    Ok(KeyComparison { alpha, c: ln_c.exp(), samples: samples.len(), violations })
}
