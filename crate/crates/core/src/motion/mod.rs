//! Continuation of repelling cycles over parameter meshes, monodromy, finite
//! web approximants and their graph-level diagnostics.

mod critical;
mod web;

pub use critical::{critical_points, grand_orbit_proximity, misiurewicz_scan, GrandOrbitProbe, MisiurewiczCandidate};
pub use web::{
    build_web, build_web_levels, graph_intersections, pushforward_check, Atom, Intersection, IntersectionReport, WebApprox,
    WebOptions,
};

use std::collections::VecDeque;

use num_complex::Complex64;

use crate::cycles::{self, Cycle, Repulsion};
use crate::error::{Error, Result};
use crate::family::{FamilySpec, FiberMap};
use crate::mesh::ParamMesh;
use crate::proj_geom::{self, PPoint};

/// Largest chordal move of a cycle point between adjacent nodes.
pub const MAX_JUMP: f64 = 0.1;
/// Newton must reach this step size for a node to count as tracked.
pub const TRACK_TOL: f64 = 1e-12;
/// Cycle points closer than this have collapsed onto a lower period.
pub const COLLAPSE_RADIUS: f64 = 1e-6;
/// Largest parameter step of path continuation.
pub const PATH_STEP: f64 = 1e-2;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NodeStatus {
    Tracked,
    /// Newton failed, jumped, or the period collapsed.
    Collided,
    /// Some multiplier left the repelling region.
    Indeterminate,
    /// No tracked neighbor to continue from.
    Unreached,
}

#[derive(Clone, Debug)]
pub struct CycleMotion {
    pub period: usize,
    pub mesh: ParamMesh,
    pub root: usize,
    /// Cycle at each tracked node, points ordered along the continuation.
    pub values: Vec<Option<Cycle>>,
    pub status: Vec<NodeStatus>,
}

impl CycleMotion {
    pub fn point(&self, node: usize, j: usize) -> Option<&PPoint> {
        self.values[node].as_ref().map(|c| &c.points[j])
    }

    pub fn tracked(&self) -> usize {
        self.status.iter().filter(|s| **s == NodeStatus::Tracked).count()
    }

    /// Largest `d(γ(λ), γ(λ′)) / |λ − λ′|` over adjacent tracked nodes.
    pub fn lipschitz(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for i in 0..self.mesh.len() {
            let Some(a) = &self.values[i] else { continue };
            for j in self.mesh.neighbors(i) {
                let Some(b) = &self.values[j] else { continue };
                let dl = param_distance(&self.mesh.node(i), &self.mesh.node(j));
                for (p, q) in a.points.iter().zip(&b.points) {
                    worst = worst.max(proj_geom::distance(p, q) / dl);
                }
            }
        }
        worst
    }
}

pub(crate) fn param_distance(a: &[Complex64], b: &[Complex64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).norm_sqr()).sum::<f64>().sqrt()
}

/// Linear extrapolation `2x − prev` in the chart at `x`.
fn extrapolate(map: &FiberMap, x: &PPoint, prev: &PPoint) -> PPoint {
    let Ok(chart) = map.atlas().chart_at(x) else { return x.clone() };
    match chart.to_chart(prev) {
        Ok(z) => {
            let back: Vec<Complex64> = z.iter().map(|c| -c).collect();
            chart.from_chart(&back)
        }
        Err(_) => x.clone(),
    }
}

/// Newton-corrects every predicted point as a fixed point of `fⁿ` and checks
/// the result is still one cycle of exact period `n` near the prediction.
pub(crate) fn correct_cycle(map: &FiberMap, pred: &[PPoint], n: usize, tol: f64) -> std::result::Result<Vec<PPoint>, NodeStatus> {
    let mut out = Vec::with_capacity(pred.len());
    for p in pred {
        let Some((x, step)) = map.newton_periodic(p, n, 60, tol * 1e-2) else {
            return Err(NodeStatus::Collided);
        };
        if step > tol || proj_geom::distance(&x, p) > MAX_JUMP {
            return Err(NodeStatus::Collided);
        }
        out.push(x);
    }
    for j in 0..out.len() {
        let img = map.eval(&out[j]).map_err(|_| NodeStatus::Collided)?;
        if proj_geom::distance(&img, &out[(j + 1) % n]) > 1e-8 {
            return Err(NodeStatus::Collided);
        }
        if n > 1 && proj_geom::distance(&out[j], &out[(j + 1) % n]) < COLLAPSE_RADIUS {
            return Err(NodeStatus::Collided);
        }
    }
    Ok(out)
}

fn cycle_at(map: &FiberMap, lambda: &[Complex64], points: Vec<PPoint>) -> std::result::Result<Cycle, NodeStatus> {
    let n = points.len();
    let multipliers = cycles::multipliers_at(map, &points[0], n).map_err(|_| NodeStatus::Collided)?;
    let repulsion = cycles::classify_multipliers(&multipliers);
    if repulsion != Repulsion::Repelling {
        return Err(NodeStatus::Indeterminate);
    }
    Ok(Cycle {
        lambda: lambda.to_vec(),
        period: n,
        points,
        multipliers,
        repulsion,
        in_julia: true,
        julia_confidence: 1.0,
        eigen_confidence: 1.0,
    })
}

/// Continues a set of points, each a fixed point of `f^{periods[i]}`, along
/// the polygonal path, with adaptive steps no longer than `PATH_STEP`.
pub fn continue_along(spec: &FamilySpec, points: &[PPoint], periods: &[usize], path: &[Vec<Complex64>]) -> Result<Vec<PPoint>> {
    let mut cur = points.to_vec();
    let mut prev: Option<Vec<PPoint>> = None;
    for seg in path.windows(2) {
        let len = param_distance(&seg[0], &seg[1]);
        if len == 0.0 {
            continue;
        }
        let mut t = 0.0;
        let mut h = (PATH_STEP / len).min(1.0);
        let mut prev_h = h;
        while t < 1.0 {
            h = h.min(1.0 - t);
            let lambda: Vec<Complex64> = seg[0].iter().zip(&seg[1]).map(|(a, b)| a + (b - a) * (t + h)).collect();
            let map = spec.at(&lambda)?;
            let sep = min_separation(&cur);
            let pred: Vec<PPoint> = match &prev {
                Some(p) if (h - prev_h).abs() < 1e-15 => cur.iter().zip(p).map(|(x, q)| extrapolate(&map, x, q)).collect(),
                _ => cur.clone(),
            };
            let next: Option<Vec<PPoint>> = pred
                .iter()
                .zip(&cur)
                .zip(periods)
                .map(|((p, c), &n)| {
                    let (x, step) = map.newton_periodic(p, n, 60, 1e-14)?;
                    (step <= TRACK_TOL && proj_geom::distance(&x, c) < 0.25 * sep.min(4.0 * MAX_JUMP)).then_some(x)
                })
                .collect();
            match next {
                Some(next) if min_separation(&next) >= COLLAPSE_RADIUS => {
                    prev = Some(std::mem::replace(&mut cur, next));
                    t += h;
                    prev_h = h;
                    h = (h * 1.5).min(PATH_STEP / len);
                }
                _ => {
                    prev = None;
                    h *= 0.5;
                    if h * len < 1e-9 {
                        let at: Vec<Complex64> = seg[0].iter().zip(&seg[1]).map(|(a, b)| a + (b - a) * t).collect();
                        return Err(Error::Solver(format!("continuation stalls near λ = {at:?}: points collide or Newton fails")));
                    }
                }
            }
        }
        prev = None;
    }
    Ok(cur)
}

fn min_separation(points: &[PPoint]) -> f64 {
    let mut best = f64::INFINITY;
    for i in 0..points.len() {
        for j in i + 1..points.len() {
            best = best.min(proj_geom::distance(&points[i], &points[j]));
        }
    }
    best
}

/// Breadth-first predictor-corrector continuation of a repelling cycle.
pub fn track_cycle(spec: &FamilySpec, cycle: &Cycle, mesh: &ParamMesh) -> Result<CycleMotion> {
    if !cycle.is_repelling() {
        return Err(Error::Precondition(format!("seed cycle of period {} is not repelling", cycle.period)));
    }
    let n = cycle.period;
    let root = mesh.nearest(&cycle.lambda);
    let root_lambda = mesh.node(root);
    let start = if param_distance(&root_lambda, &cycle.lambda) > 1e-14 {
        if param_distance(&root_lambda, &cycle.lambda) > 2.0 * mesh.max_spacing().max(PATH_STEP) {
            return Err(Error::Precondition("mesh does not reach the seed parameter".into()));
        }
        continue_along(spec, &cycle.points, &vec![n; n], &[cycle.lambda.clone(), root_lambda.clone()])?
    } else {
        cycle.points.clone()
    };
    let mut motion = CycleMotion {
        period: n,
        mesh: mesh.clone(),
        root,
        values: vec![None; mesh.len()],
        status: vec![NodeStatus::Unreached; mesh.len()],
    };
    let map = spec.at(&root_lambda)?;
    let seed = correct_cycle(&map, &start, n, TRACK_TOL).and_then(|pts| cycle_at(&map, &root_lambda, pts));
    match seed {
        Ok(c) => {
            motion.values[root] = Some(c);
            motion.status[root] = NodeStatus::Tracked;
        }
        Err(_) => return Err(Error::Precondition("seed cycle does not survive at the root node".into())),
    }
    let mut parent = vec![None; mesh.len()];
    let mut queue = VecDeque::from([root]);
    while let Some(u) = queue.pop_front() {
        for v in mesh.neighbors(u) {
            if motion.status[v] == NodeStatus::Tracked {
                continue;
            }
            let lambda = mesh.node(v);
            let map = spec.at(&lambda)?;
            let base = &motion.values[u].as_ref().unwrap().points;
            // secant predictor along a straight line of nodes
            let pred: Vec<PPoint> = match parent[u] {
                Some(g) if is_straight(mesh, g, u, v) => {
                    let gp = &motion.values[g].as_ref().unwrap().points;
                    base.iter().zip(gp).map(|(x, q)| extrapolate(&map, x, q)).collect()
                }
                _ => base.clone(),
            };
            let mut result = correct_cycle(&map, &pred, n, TRACK_TOL);
            if result == Err(NodeStatus::Collided) {
                // fast-moving points: sub-stepped continuation along the edge
                if let Ok(pts) = continue_along(spec, base, &vec![n; n], &[mesh.node(u), lambda.clone()]) {
                    result = correct_cycle(&map, &pts, n, TRACK_TOL);
                }
            }
            match result.and_then(|pts| cycle_at(&map, &lambda, pts)) {
                Ok(c) => {
                    motion.values[v] = Some(c);
                    motion.status[v] = NodeStatus::Tracked;
                    parent[v] = Some(u);
                    queue.push_back(v);
                }
                Err(s) => {
                    if motion.status[v] != NodeStatus::Indeterminate {
                        motion.status[v] = s;
                    }
                }
            }
        }
    }
    Ok(motion)
}

fn is_straight(mesh: &ParamMesh, g: usize, u: usize, v: usize) -> bool {
    let (a, b, c) = (mesh.coords(g), mesh.coords(u), mesh.coords(v));
    a.iter().zip(&b).zip(&c).all(|((&a, &b), &c)| b as i64 - a as i64 == c as i64 - b as i64)
}

/// Permutation induced on the given cycles' points by continuation around a
/// closed loop: entry `i` is the index of the point where point `i` ends.
pub fn monodromy(spec: &FamilySpec, cycles: &[Cycle], lp: &[Vec<Complex64>]) -> Result<Vec<usize>> {
    let points: Vec<PPoint> = cycles.iter().flat_map(|c| c.points.iter().cloned()).collect();
    let periods: Vec<usize> = cycles.iter().flat_map(|c| std::iter::repeat_n(c.period, c.points.len())).collect();
    let Some(first) = lp.first() else {
        return Ok((0..points.len()).collect());
    };
    if let Some(c) = cycles.iter().find(|c| param_distance(&c.lambda, first) > 1e-12) {
        return Err(Error::Precondition(format!("cycle given at {:?}, loop starts at {first:?}", c.lambda)));
    }
    let mut path = lp.to_vec();
    path.push(first.clone());
    let end = continue_along(spec, &points, &periods, &path)?;
    let mut perm = Vec::with_capacity(end.len());
    for p in &end {
        let (j, d) = points
            .iter()
            .enumerate()
            .map(|(j, q)| (j, proj_geom::distance(p, q)))
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .unwrap();
        if d > 1e-8 {
            return Err(Error::Solver(format!("continued point returns {d:e} away from every starting point")));
        }
        perm.push(j);
    }
    let mut seen = vec![false; perm.len()];
    for &j in &perm {
        if std::mem::replace(&mut seen[j], true) {
            return Err(Error::Solver("loop continuation merged two points".into()));
        }
    }
    Ok(perm)
}

/// Closed polygon with `n` vertices on the circle `|λ − center| = radius`
/// in the first parameter coordinate.
pub fn circle_loop(center: &[Complex64], radius: f64, n: usize) -> Vec<Vec<Complex64>> {
    (0..n)
        .map(|j| {
            let mut l = center.to_vec();
            l[0] += Complex64::from_polar(radius, std::f64::consts::TAU * j as f64 / n as f64);
            l
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::family::presets;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn fixed_points(l: Complex64) -> Vec<Cycle> {
        cycles::find_periodic(&presets::quadratic(), &[l], 1)
            .unwrap()
            .into_iter()
            .filter(|c| c.points[0].coords()[1].norm() > 1e-9)
            .collect()
    }

    #[test]
    fn constant_family_motion_is_constant() {
        let spec = presets::quadratic_around(c(0.0, 0.0), 0.1, 5).frozen();
        let l0 = c(0.0, 0.0);
        let cyc = cycles::find_periodic(&spec, &[l0], 3).unwrap().into_iter().find(|c| c.period == 3).unwrap();
        let mesh = ParamMesh::polydisk(&[l0], 0.1, 5).unwrap();
        let m = track_cycle(&spec, &cyc, &mesh).unwrap();
        for i in 0..mesh.len() {
            assert_eq!(m.status[i], NodeStatus::Tracked);
            assert!(proj_geom::distance(m.point(i, 0).unwrap(), &cyc.points[0]) < 1e-12);
        }
    }

    #[test]
    fn loop_around_quarter_swaps_fixed_points() {
        let l0 = c(0.25 + 0.1, 0.0);
        let fps = fixed_points(l0);
        assert_eq!(fps.len(), 2);
        let perm = monodromy(&presets::quadratic(), &fps, &circle_loop(&[c(0.25, 0.0)], 0.1, 16)).unwrap();
        assert_eq!(perm, vec![1, 0]);
        let perm = monodromy(&presets::quadratic(), &fixed_points(c(0.1, 0.0)), &circle_loop(&[c(0.0, 0.0)], 0.1, 16)).unwrap();
        assert_eq!(perm, vec![0, 1]);
    }

    #[test]
    fn degenerate_loop_is_identity() {
        let l0 = c(0.1, 0.0);
        let perm = monodromy(&presets::quadratic(), &fixed_points(l0), &[vec![l0]]).unwrap();
        assert_eq!(perm, vec![0, 1]);
    }

    #[test]
    fn period_two_collides_at_three_quarters() {
        let spec = presets::quadratic();
        let l0 = c(-0.75, 0.16);
        let cyc = cycles::find_periodic(&spec, &[l0], 2).unwrap().into_iter().find(|c| c.period == 2).unwrap();
        let mesh = ParamMesh::polydisk(&[l0], 0.2, 21).unwrap();
        let m = track_cycle(&spec, &cyc, &mesh).unwrap();
        let near = mesh.nearest(&[c(-0.75, 0.0)]);
        assert_ne!(m.status[near], NodeStatus::Tracked);
        assert!(m.tracked() > mesh.len() / 2);
    }
}
