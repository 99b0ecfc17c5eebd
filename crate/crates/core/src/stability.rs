//! The Lyapunov sum `L(λ) = ∫ ln|det Df_λ| dμ_λ`, the smallest exponent
//! `χ₁(λ)`, and a discrete pluriharmonicity test of `L` over parameter
//! meshes.
//!
//! Forward orbits of `f_λ` leave the Julia set under rounding, so orbit
//! averages are taken along random backward orbits: a point distributed by
//! `μ_λ` followed by uniformly chosen preimages is a sample of the natural
//! extension, and Birkhoff averages along it converge to `μ_λ`-integrals.

use std::collections::HashMap;

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::family::{FamilySpec, FiberMap};
use crate::linalg::{self, ScaledProduct};
use crate::measures::{self, PointCloudMeasure};
use crate::mesh::ParamMesh;
use crate::par;
use crate::preimage;
use crate::proj_geom::PPoint;
use crate::rng;

/// Atoms with `|det DF| ≤ EPS_CRIT` are treated as critical and excluded.
pub const EPS_CRIT: f64 = 1e-6;
pub const MAX_EXCLUDED_MASS: f64 = 0.01;
/// Fraction of near-critical steps above which `χ₁` is indeterminate.
pub const MAX_CRITICAL_STEPS: f64 = 0.05;
pub const DEFAULT_DEPTH: usize = 12;
/// Atom budget of the pullback measure for `k ≥ 2` (depth 6 for `d = 2`).
pub const P2_ATOM_BUDGET: usize = 1 << 12;
/// Smallest harmonicity threshold, for families whose noise floor vanishes.
pub const THETA_MIN: f64 = 0.05;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LyapMethod {
    Pullback,
    Birkhoff,
}

#[derive(Clone, Debug)]
pub struct LyapOptions {
    pub method: LyapMethod,
    pub depth: usize,
    pub burn_in: usize,
    pub orbit_len: usize,
    pub seed: u64,
}

impl LyapOptions {
    pub fn new(method: LyapMethod, k: usize) -> Self {
        Self { method, depth: DEFAULT_DEPTH, burn_in: 100, orbit_len: if k == 1 { 100_000 } else { 2_000 }, seed: 0x1A9 }
    }
}

#[derive(Clone, Debug)]
pub struct LyapEstimate {
    pub value: f64,
    pub std_error: f64,
    pub excluded_mass: f64,
    pub samples: usize,
}

/// Effective pullback depth: the requested depth capped by the atom budget.
pub fn pullback_depth(spec: &FamilySpec, depth: usize) -> usize {
    let budget = if spec.k == 1 { measures::DEFAULT_ATOM_BUDGET } else { P2_ATOM_BUDGET };
    depth.min(measures::max_depth(spec.k, spec.d, budget))
}

pub fn lyap_sum(spec: &FamilySpec, lambda: &[Complex64], method: LyapMethod) -> Result<f64> {
    Ok(lyap_sum_with(spec, lambda, &LyapOptions::new(method, spec.k))?.value)
}

fn log_det(map: &FiberMap, x: &PPoint) -> Result<Option<f64>> {
    let det = map.chart_jacobian(x)?.det.norm();
    Ok((det > EPS_CRIT).then(|| det.ln()))
}

pub fn lyap_sum_with(spec: &FamilySpec, lambda: &[Complex64], opts: &LyapOptions) -> Result<LyapEstimate> {
    let map = spec.at(lambda)?;
    match opts.method {
        LyapMethod::Pullback => {
            let m = measures::pullback_measure_seeded(spec, lambda, pullback_depth(spec, opts.depth), opts.seed)?;
            lyap_from_measure(&map, &m)
        }
        LyapMethod::Birkhoff => {
            let mut rng = rng::job_rng(opts.seed, rng::stream::BACKWARD_ORBIT, 0);
            let mut x = measures::pullback_seed(spec.k, opts.seed, 0);
            for _ in 0..opts.burn_in {
                x = preimage::random_preimage(&map, &x, &mut rng)?.0;
            }
            let mut values = Vec::with_capacity(opts.orbit_len);
            let mut excluded = 0usize;
            for _ in 0..opts.orbit_len {
                match log_det(&map, &x)? {
                    Some(v) => values.push(v),
                    None => excluded += 1,
                }
                x = preimage::random_preimage(&map, &x, &mut rng)?.0;
            }
            let excluded_mass = excluded as f64 / opts.orbit_len as f64;
            check_exclusion(excluded_mass)?;
            let value = values.iter().sum::<f64>() / values.len() as f64;
            Ok(LyapEstimate { value, std_error: batch_std_error(&values, 20), excluded_mass, samples: values.len() })
        }
    }
}

fn check_exclusion(mass: f64) -> Result<()> {
    if mass > MAX_EXCLUDED_MASS {
        return Err(Error::Budget(format!("{:.2}% of the mass lies within {EPS_CRIT:e} of the critical set", 100.0 * mass)));
    }
    Ok(())
}

/// `∫ ln|det DF| dm` over a cloud, excluding near-critical atoms.
pub fn lyap_from_measure(map: &FiberMap, m: &PointCloudMeasure) -> Result<LyapEstimate> {
    let values = par::map(&m.atoms, |(p, w)| log_det(map, p).map(|v| (v, *w)));
    let mut sum = 0.0;
    let mut mass = 0.0;
    let mut excluded = 0.0;
    let mut kept = Vec::with_capacity(values.len());
    for r in values {
        let (v, w) = r?;
        match v {
            Some(v) => {
                sum += v * w;
                mass += w;
                kept.push(v);
            }
            None => excluded += w,
        }
    }
    check_exclusion(excluded)?;
    let value = sum / mass;
    let var = kept.iter().map(|v| (v - value).powi(2)).sum::<f64>() / kept.len().max(2) as f64;
    Ok(LyapEstimate { value, std_error: (var / kept.len() as f64).sqrt(), excluded_mass: excluded, samples: kept.len() })
}

fn batch_std_error(values: &[f64], batches: usize) -> f64 {
    let size = values.len() / batches;
    if size == 0 {
        return f64::NAN;
    }
    let means: Vec<f64> = values.chunks_exact(size).map(|c| c.iter().sum::<f64>() / size as f64).collect();
    let mean = means.iter().sum::<f64>() / means.len() as f64;
    let var = means.iter().map(|m| (m - mean).powi(2)).sum::<f64>() / (means.len() - 1) as f64;
    (var / means.len() as f64).sqrt()
}

#[derive(Clone, Debug)]
pub struct ChiEstimate {
    /// `−u_n / n` at the final step.
    pub value: f64,
    /// Standard error of the fitted slope of `u_j` against `j`.
    pub std_error: f64,
    pub steps: usize,
    pub near_critical: usize,
}

pub fn chi_min(spec: &FamilySpec, lambda: &[Complex64]) -> Result<ChiEstimate> {
    chi_min_with(spec, lambda, if spec.k == 1 { 10_000 } else { 2_000 }, 0xC41)
}

/// Smallest exponent from the growth of `‖(DFⁿ)⁻¹‖` along a random backward
/// orbit, accumulated as a rescaled product of inverse chart Jacobians.
pub fn chi_min_with(spec: &FamilySpec, lambda: &[Complex64], steps: usize, seed: u64) -> Result<ChiEstimate> {
    let map = spec.at(lambda)?;
    let mut rng = rng::job_rng(seed, rng::stream::BACKWARD_ORBIT, 1);
    let mut x = measures::pullback_seed(spec.k, seed, 0);
    for _ in 0..100 {
        x = preimage::random_preimage(&map, &x, &mut rng)?.0;
    }
    let mut prod = ScaledProduct::identity(spec.k);
    let mut near = 0usize;
    let mut trace = Vec::with_capacity(steps / 10 + 1);
    for j in 1..=steps {
        let prev = preimage::random_preimage(&map, &x, &mut rng)?.0;
        let jac = map.chart_jacobian(&prev)?;
        if jac.delta <= EPS_CRIT {
            near += 1;
        }
        let inv = linalg::inverse(&jac.matrix).ok_or_else(|| Error::Solver(format!("singular Jacobian at backward step {j}")))?;
        prod.left_mul(&inv);
        x = prev;
        if j % 10 == 0 {
            trace.push((j as f64, prod.log_max_singular()));
        }
    }
    if near as f64 > MAX_CRITICAL_STEPS * steps as f64 {
        return Err(Error::Budget(format!("χ₁ indeterminate: {near} of {steps} steps near the critical set")));
    }
    let value = -prod.log_max_singular() / steps as f64;
    Ok(ChiEstimate { value, std_error: slope_std_error(&trace), steps, near_critical: near })
}

/// Least-squares slope standard error of `y` against `x`.
fn slope_std_error(pts: &[(f64, f64)]) -> f64 {
    let n = pts.len() as f64;
    if n < 3.0 {
        return f64::NAN;
    }
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let b = sxy / sxx;
    let rss: f64 = pts.iter().map(|p| (p.1 - my - b * (p.0 - mx)).powi(2)).sum();
    (rss / (n - 2.0) / sxx).sqrt()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NodeClass {
    Stable,
    Bifurcation,
    Indeterminate,
}

#[derive(Clone, Debug)]
pub struct GridOptions {
    pub lyap: LyapOptions,
    /// Backward-orbit length for `χ₁` per node; 0 skips it.
    pub chi_steps: usize,
    /// Harmonicity threshold; `None` calibrates it on the frozen family.
    pub theta: Option<f64>,
}

impl GridOptions {
    pub fn new(k: usize) -> Self {
        Self { lyap: LyapOptions::new(LyapMethod::Pullback, k), chi_steps: 1_000, theta: None }
    }
}

#[derive(Clone, Debug)]
pub struct StabilityGrid {
    pub mesh: ParamMesh,
    pub lyap: Vec<Option<f64>>,
    pub chi: Vec<Option<f64>>,
    /// Largest absolute discrete Laplacian over the probed directions.
    pub stencil: Vec<Option<f64>>,
    pub class: Vec<NodeClass>,
    pub theta: f64,
}

/// Extended grid coordinates (halo nodes allowed) of a neighbor.
type GridKey = Vec<i64>;

fn axis_value(axis: &[f64], i: i64) -> f64 {
    let n = axis.len() as i64;
    if n == 1 {
        return axis[0];
    }
    let (lo, hi) = (axis[0], axis[axis.len() - 1]);
    lo + (hi - lo) * i as f64 / (n - 1) as f64
}

fn key_lambda(mesh: &ParamMesh, key: &[i64]) -> Vec<Complex64> {
    let axes = mesh.axes();
    (0..mesh.m()).map(|j| Complex64::new(axis_value(&axes[2 * j], key[2 * j]), axis_value(&axes[2 * j + 1], key[2 * j + 1]))).collect()
}

/// Discrete Laplacians of `L` at every node: the 5-point stencil in each
/// complex parameter coordinate, and for `m = 2` also along two random
/// complex lines. `L` is computed at every node and at the halo points the
/// stencils need, all with the same pullback seed so that Monte Carlo error
/// does not vary from node to node.
pub fn harmonicity_grid(spec: &FamilySpec, mesh: &ParamMesh, opts: &GridOptions) -> Result<StabilityGrid> {
    if mesh.m() != spec.m || !(1..=2).contains(&spec.m) {
        return Err(Error::Precondition(format!("harmonicity grids need m ∈ {{1, 2}} matching the family, got m = {}", mesh.m())));
    }
    let theta = match opts.theta {
        Some(t) => t,
        None => calibrate_theta(spec, mesh, opts)?,
    };
    let mut grid = raw_grid(spec, mesh, opts)?;
    grid.theta = theta;
    grid.class = classify_nodes(&grid.stencil, theta);
    Ok(grid)
}

fn classify_nodes(stencil: &[Option<f64>], theta: f64) -> Vec<NodeClass> {
    stencil
        .iter()
        .map(|s| match s {
            Some(v) if *v <= theta => NodeClass::Stable,
            Some(v) if *v >= 10.0 * theta => NodeClass::Bifurcation,
            _ => NodeClass::Indeterminate,
        })
        .collect()
}

/// Probe directions for the stencils: each complex coordinate axis, plus two
/// random unit directions in `C²` when `m = 2`.
fn probe_directions(m: usize) -> Vec<Vec<Complex64>> {
    let mut out: Vec<Vec<Complex64>> = (0..m)
        .map(|j| (0..m).map(|i| Complex64::new(if i == j { 1.0 } else { 0.0 }, 0.0)).collect())
        .collect();
    if m == 2 {
        let mut rng = rng::job_rng(0x11E5, rng::stream::LINES, 0);
        for _ in 0..2 {
            let v: Vec<Complex64> = (0..2).map(|_| Complex64::new(rng.sample(StandardNormal), rng.sample(StandardNormal))).collect();
            let n = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
            out.push(v.into_iter().map(|z| z / n).collect());
        }
    }
    out
}

fn raw_grid(spec: &FamilySpec, mesh: &ParamMesh, opts: &GridOptions) -> Result<StabilityGrid> {
    let m = mesh.m();
    let dirs = probe_directions(m);
    // lattice points are keyed by extended grid coordinates; off-lattice
    // probes (random lines) get their own list
    let mut lattice: HashMap<GridKey, usize> = HashMap::new();
    let mut points: Vec<Vec<Complex64>> = Vec::new();
    let mut add = |key: Option<GridKey>, lambda: Vec<Complex64>| -> usize {
        if let Some(k) = key {
            if let Some(&i) = lattice.get(&k) {
                return i;
            }
            lattice.insert(k, points.len());
        }
        points.push(lambda);
        points.len() - 1
    };
    let h = (0..2 * m).map(|a| mesh.spacing(a)).fold(f64::INFINITY, f64::min);
    // per node: centre index and, per direction, the four probe indices
    let mut plan: Vec<(usize, Vec<[usize; 4]>)> = Vec::with_capacity(mesh.len());
    for i in 0..mesh.len() {
        let c: GridKey = mesh.coords(i).iter().map(|&x| x as i64).collect();
        let centre = add(Some(c.clone()), mesh.node(i));
        let mut probes = Vec::with_capacity(dirs.len());
        for (di, dir) in dirs.iter().enumerate() {
            if di < m {
                let mut four = [0; 4];
                for (slot, (axis, step)) in [(2 * di, 1), (2 * di, -1), (2 * di + 1, 1), (2 * di + 1, -1)].into_iter().enumerate() {
                    let mut key = c.clone();
                    key[axis] += step;
                    four[slot] = add(Some(key.clone()), key_lambda(mesh, &key));
                }
                probes.push(four);
            } else {
                let base = mesh.node(i);
                let shifted = |s: Complex64| -> Vec<Complex64> { base.iter().zip(dir).map(|(b, v)| b + v * s * h).collect() };
                let one = Complex64::new(1.0, 0.0);
                let i1 = Complex64::new(0.0, 1.0);
                probes.push([add(None, shifted(one)), add(None, shifted(-one)), add(None, shifted(i1)), add(None, shifted(-i1))]);
            }
        }
        plan.push((centre, probes));
    }
    let lyap_all: Vec<Option<f64>> =
        par::map(&points, |l| lyap_sum_with(spec, l, &opts.lyap).ok().map(|e| e.value).filter(|v| v.is_finite()));
    let mut stencil = Vec::with_capacity(mesh.len());
    let mut lyap = Vec::with_capacity(mesh.len());
    for (i, (centre, probes)) in plan.iter().enumerate() {
        lyap.push(lyap_all[*centre]);
        let value = (|| {
            let l0 = lyap_all[*centre]?;
            let mut worst: f64 = 0.0;
            for (di, four) in probes.iter().enumerate() {
                let v: Option<Vec<f64>> = four.iter().map(|&j| lyap_all[j]).collect();
                let v = v?;
                let lap = if di < m {
                    let (hx, hy) = (mesh.spacing(2 * di), mesh.spacing(2 * di + 1));
                    (v[0] + v[1] - 2.0 * l0) / (hx * hx) + (v[2] + v[3] - 2.0 * l0) / (hy * hy)
                } else {
                    (v.iter().sum::<f64>() - 4.0 * l0) / (h * h)
                };
                worst = worst.max(lap.abs());
            }
            Some(worst)
        })();
        let _ = i;
        stencil.push(value);
    }
    let chi = if opts.chi_steps == 0 {
        vec![None; mesh.len()]
    } else {
        par::map_range(mesh.len(), |i| chi_min_with(spec, &mesh.node(i), opts.chi_steps, rng::split(opts.lyap.seed, rng::stream::GRID, i as u64)).ok().map(|c| c.value))
    };
    let class = vec![NodeClass::Indeterminate; mesh.len()];
    Ok(StabilityGrid { mesh: mesh.clone(), lyap, chi, stencil, class, theta: f64::NAN })
}

/// `θ_harm = max(5 × noise floor, THETA_MIN)`, the noise floor being the
/// largest stencil on the frozen family over the same mesh and budget.
pub fn calibrate_theta(spec: &FamilySpec, mesh: &ParamMesh, opts: &GridOptions) -> Result<f64> {
    let frozen = spec.frozen();
    let probe_mesh = if mesh.len() > 9 {
        let c = mesh.nearest(&spec.domain.center);
        let mut keep = vec![c];
        keep.extend(mesh.neighbors(c));
        keep
    } else {
        (0..mesh.len()).collect()
    };
    let mut o = opts.clone();
    o.chi_steps = 0;
    let grid = raw_grid(&frozen, mesh, &o)?;
    let floor = probe_mesh.iter().filter_map(|&i| grid.stencil[i]).fold(0.0, f64::max);
    Ok((5.0 * floor).max(THETA_MIN))
}

#[derive(Clone, Debug)]
pub struct ClassReport {
    /// Bifurcation nodes.
    pub mask: Vec<bool>,
    /// Stable-component label per node (`None` off the stable set).
    pub labels: Vec<Option<usize>>,
    pub components: usize,
    pub max_stable_stencil: f64,
    pub stable_fraction: f64,
}

/// Labels the connected components of the stable nodes and summarizes.
pub fn classify_report(grid: &StabilityGrid) -> Result<ClassReport> {
    let n = grid.mesh.len();
    if n == 0 || grid.class.is_empty() {
        return Err(Error::Precondition("empty grid".into()));
    }
    let mut labels = vec![None; n];
    let mut components = 0;
    for start in 0..n {
        if grid.class[start] != NodeClass::Stable || labels[start].is_some() {
            continue;
        }
        labels[start] = Some(components);
        let mut stack = vec![start];
        while let Some(i) = stack.pop() {
            for j in grid.mesh.neighbors(i) {
                if grid.class[j] == NodeClass::Stable && labels[j].is_none() {
                    labels[j] = Some(components);
                    stack.push(j);
                }
            }
        }
        components += 1;
    }
    let stable = grid.class.iter().filter(|c| **c == NodeClass::Stable).count();
    let max_stable_stencil = (0..n)
        .filter(|&i| grid.class[i] == NodeClass::Stable)
        .filter_map(|i| grid.stencil[i])
        .fold(0.0, f64::max);
    Ok(ClassReport {
        mask: grid.class.iter().map(|c| *c == NodeClass::Bifurcation).collect(),
        labels,
        components,
        max_stable_stencil,
        stable_fraction: stable as f64 / n as f64,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::family::presets;

    #[test]
    fn power_maps_have_ln_d() {
        for d in 2..=5 {
            let l = lyap_sum(&presets::power_map(d), &[], LyapMethod::Pullback).unwrap();
            assert!((l - (d as f64).ln()).abs() < 1e-3, "d = {d}: {l}");
        }
    }

    #[test]
    fn birkhoff_agrees_on_squaring() {
        let l = lyap_sum(&presets::power_map(2), &[], LyapMethod::Birkhoff).unwrap();
        assert!((l - 2f64.ln()).abs() < 1e-2, "{l}");
    }

    #[test]
    fn chi_of_squaring() {
        let c = chi_min(&presets::power_map(2), &[]).unwrap();
        assert!((c.value - 2f64.ln()).abs() < 1e-2, "{:?}", c);
    }

    #[test]
    fn report_on_empty_grid_fails() {
        let mesh = ParamMesh::point(&[Complex64::new(0.0, 0.0)]);
        let grid = StabilityGrid { mesh, lyap: vec![], chi: vec![], stencil: vec![], class: vec![], theta: 1.0 };
        assert!(classify_report(&grid).is_err());
    }
}
