//! Periodic points of `f_λⁿ`, their cycles, multipliers and classification.
//!
//! For `k = 1` every fixed point of `fⁿ` is found: in a random unitary frame
//! `v(t) = U (t, 1)` the fixed points are the `dⁿ + 1` roots of
//! `h(t) = Fⁿ₀(v) v₁ − Fⁿ₁(v) v₀`, computed by an Aberth iteration that only
//! evaluates the iterate (with forward-mode derivative) instead of expanding
//! its coefficients. For `k = 2` fixed points are found by Newton's method
//! from pullback and random seeds.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::family::{FamilySpec, FiberMap};
use crate::linalg::{self, CMat};
use crate::measures;
use crate::par;
use crate::proj_geom::{self, Coords, PPoint};
use crate::rng;
use crate::roots;

/// Repelling margin: a multiplier modulus in `[1 − δ, 1 + δ]` is indeterminate.
pub const DELTA_REP: f64 = 1e-3;
/// Distance to the pullback support below which a cycle point counts as a
/// Julia point (`k ≥ 2`).
pub const EPS_J: f64 = 1e-2;
/// Chordal radius under which two periodic points are the same.
pub const DEDUP_RADIUS: f64 = 1e-8;
/// Largest accepted residual `d(fⁿ(x), x)` after polishing.
pub const RESIDUAL_TOL: f64 = 1e-8;
/// Largest `dⁿ + 1` handled by the full root solve for `k = 1`.
pub const MAX_FULL_DEGREE: usize = 4097;

const RANDOM_SEEDS_P2: usize = 200;
/// Atom budget of the pullback tree seeding Newton when `k ≥ 2`.
const SEED_ATOMS_P2: usize = 1 << 12;
/// Atom budget of the pullback cloud used for the Julia test when `k ≥ 2`.
const JULIA_ATOMS: usize = 1 << 12;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Repulsion {
    Repelling,
    /// Some multiplier modulus within `DELTA_REP` of 1.
    Indeterminate,
    NotRepelling,
}

#[derive(Clone, Debug)]
pub struct Cycle {
    pub lambda: Vec<Complex64>,
    /// Exact period.
    pub period: usize,
    /// `points[j + 1] = f(points[j])`, cyclically.
    pub points: Vec<PPoint>,
    /// Eigenvalues of `D(fⁿ)` at `points[0]`, largest modulus first.
    pub multipliers: Vec<Complex64>,
    pub repulsion: Repulsion,
    pub in_julia: bool,
    pub julia_confidence: f64,
    /// 1 when the spectra at two base points agree, lower otherwise.
    pub eigen_confidence: f64,
}

impl Cycle {
    pub fn is_repelling(&self) -> bool {
        self.repulsion == Repulsion::Repelling
    }

    /// Counts towards `N_d(n)`: a repelling Julia cycle.
    pub fn is_repelling_julia(&self) -> bool {
        self.is_repelling() && self.in_julia
    }

    /// Largest residual `d(f(pⱼ), pⱼ₊₁)` around the cycle.
    pub fn residual(&self, map: &FiberMap) -> Result<f64> {
        let n = self.points.len();
        let mut worst: f64 = 0.0;
        for j in 0..n {
            let img = map.eval(&self.points[j])?;
            worst = worst.max(proj_geom::distance(&img, &self.points[(j + 1) % n]));
        }
        Ok(worst)
    }
}

/// Multiplier classification with the `DELTA_REP` margin.
pub fn classify_multipliers(multipliers: &[Complex64]) -> Repulsion {
    if multipliers.iter().any(|m| (m.norm() - 1.0).abs() <= DELTA_REP) {
        Repulsion::Indeterminate
    } else if multipliers.iter().all(|m| m.norm() > 1.0 + DELTA_REP) {
        Repulsion::Repelling
    } else {
        Repulsion::NotRepelling
    }
}

fn sort_key(p: &PPoint) -> impl Iterator<Item = f64> + '_ {
    p.coords().iter().flat_map(|c| [c.re, c.im])
}

fn cmp_points(a: &PPoint, b: &PPoint) -> std::cmp::Ordering {
    for (x, y) in sort_key(a).zip(sort_key(b)) {
        match x.total_cmp(&y) {
            std::cmp::Ordering::Equal => continue,
            o => return o,
        }
    }
    std::cmp::Ordering::Equal
}

/// All cycles whose period divides `n`, each reported once with its exact
/// period, classified, in canonical order.
pub fn find_periodic(spec: &FamilySpec, lambda: &[Complex64], n: usize) -> Result<Vec<Cycle>> {
    if n == 0 {
        return Err(Error::Precondition("period must be at least 1".into()));
    }
    let map = spec.at(lambda)?;
    let points = periodic_points(&map, n)?;
    let cycles = assemble_cycles(&map, &points, n)?;
    let julia = JuliaTest::new(spec, lambda)?;
    let mut out: Vec<Cycle> = cycles
        .into_iter()
        .map(|pts| classify_points(&map, pts, &julia))
        .collect::<Result<_>>()?;
    out.sort_by(|a, b| a.period.cmp(&b.period).then_with(|| cmp_points(&a.points[0], &b.points[0])));
    Ok(out)
}

/// Fills multipliers and flags of a cycle whose points are verified periodic.
pub fn classify(cycle: &Cycle, spec: &FamilySpec, lambda: &[Complex64]) -> Result<Cycle> {
    let map = spec.at(lambda)?;
    let julia = JuliaTest::new(spec, lambda)?;
    classify_points(&map, cycle.points.clone(), &julia)
}

/// Eigenvalues of the period map at `base`, largest modulus first.
pub fn multipliers_at(map: &FiberMap, base: &PPoint, period: usize) -> Result<Vec<Complex64>> {
    let chart = map.atlas().chart_at(base)?;
    let (_, d) = map.iterate_in_chart(base, period, &chart)?;
    let mut ev = linalg::eigenvalues(&d);
    ev.sort_by(|a, b| b.norm().total_cmp(&a.norm()));
    Ok(ev)
}

fn classify_points(map: &FiberMap, points: Vec<PPoint>, julia: &JuliaTest) -> Result<Cycle> {
    let period = points.len();
    let multipliers = multipliers_at(map, &points[0], period)?;
    let eigen_confidence = if period > 1 {
        let other = multipliers_at(map, &points[1], period)?;
        let scale = multipliers.iter().map(|m| m.norm()).fold(1.0, f64::max);
        let gap = multipliers.iter().zip(&other).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max) / scale;
        if gap <= 1e-6 {
            1.0
        } else {
            (1e-6 / gap).max(0.0)
        }
    } else {
        1.0
    };
    let repulsion = classify_multipliers(&multipliers);
    let (in_julia, julia_confidence) = julia.decide(&points, repulsion, &multipliers);
    Ok(Cycle {
        lambda: map.lambda().to_vec(),
        period,
        points,
        multipliers,
        repulsion,
        in_julia,
        julia_confidence,
        eigen_confidence,
    })
}

/// Julia membership: automatic for `k = 1`, proximity to a pullback cloud
/// otherwise.
struct JuliaTest {
    k: usize,
    support: Vec<PPoint>,
    /// `max(EPS_J, 2 × median nearest-neighbor distance of the cloud)`.
    radius: f64,
}

impl JuliaTest {
    fn new(spec: &FamilySpec, lambda: &[Complex64]) -> Result<Self> {
        if spec.k == 1 {
            return Ok(Self { k: 1, support: vec![], radius: EPS_J });
        }
        let depth = measures::max_depth(spec.k, spec.d, JULIA_ATOMS);
        let m = measures::pullback_measure_seeded(spec, lambda, depth, 0x5EED)?;
        let support: Vec<PPoint> = m.atoms.into_iter().map(|(p, _)| p).collect();
        let mut nn = par::map_range(support.len(), |i| {
            support.iter().enumerate().filter(|&(j, _)| j != i).map(|(_, q)| proj_geom::distance(&support[i], q)).fold(f64::INFINITY, f64::min)
        });
        nn.sort_by(f64::total_cmp);
        let median = nn.get(nn.len() / 2).copied().filter(|d| d.is_finite()).unwrap_or(0.0);
        Ok(Self { k: spec.k, support, radius: EPS_J.max(2.0 * median) })
    }

    fn decide(&self, points: &[PPoint], repulsion: Repulsion, multipliers: &[Complex64]) -> (bool, f64) {
        if self.k == 1 {
            return match repulsion {
                Repulsion::Repelling => (true, 1.0),
                // neutral cycles lie in J unless they are Siegel cycles
                Repulsion::Indeterminate => (true, 0.5),
                Repulsion::NotRepelling => {
                    if multipliers.iter().all(|m| m.norm() < 1.0) {
                        (false, 1.0)
                    } else {
                        (false, 0.5)
                    }
                }
            };
        }
        let near = points
            .iter()
            .filter(|p| self.support.iter().any(|q| proj_geom::distance(p, q) <= self.radius))
            .count();
        let frac = near as f64 / points.len() as f64;
        (frac == 1.0, if frac == 1.0 || frac == 0.0 { 1.0 } else { frac.max(1.0 - frac) })
    }
}

/// Fixed points of `fⁿ` (deduplicated, unordered).
pub fn periodic_points(map: &FiberMap, n: usize) -> Result<Vec<PPoint>> {
    if map.k() == 1 {
        periodic_points_p1(map, n)
    } else {
        periodic_points_newton(map, n)
    }
}

fn periodic_points_p1(map: &FiberMap, n: usize) -> Result<Vec<PPoint>> {
    let d = map.degree() as usize;
    let degree = d.checked_pow(n as u32).map(|x| x + 1).filter(|&x| x <= MAX_FULL_DEGREE).ok_or_else(|| {
        Error::Budget(format!("fixed-point equation of f^{n} has degree above {MAX_FULL_DEGREE}"))
    })?;
    let mut rng = rng::job_rng(0xF1CED, rng::stream::LINES, n as u64);
    let frame = linalg::unitary_with_first_column(proj_geom::random_point(1, &mut rng).coords());
    let frame_ref = &frame;
    let newton = |t: Complex64| newton_ratio(map, frame_ref, n, t);
    let out = roots::aberth_implicit(degree, newton, 600, 1e-14);
    let mut pts = Vec::with_capacity(degree);
    let mut bad = 0;
    for t in &out.roots {
        let x = PPoint::new([frame[(0, 0)] * t + frame[(0, 1)], frame[(1, 0)] * t + frame[(1, 1)]])?;
        let x = polish(map, &x, n);
        if fixed_residual(map, &x, n)? <= RESIDUAL_TOL {
            pts.push(x);
        } else {
            bad += 1;
        }
    }
    if bad > 0 {
        return Err(Error::Solver(format!("{bad} of {degree} fixed points of f^{n} did not converge")));
    }
    Ok(dedup(pts))
}

/// `h(t)/h'(t)` for the fixed-point form in the frame `U`.
fn newton_ratio(map: &FiberMap, u: &CMat, n: usize, t: Complex64) -> Option<Complex64> {
    let x = [u[(0, 0)] * t + u[(0, 1)], u[(1, 0)] * t + u[(1, 1)]];
    let dx = [u[(0, 0)], u[(1, 0)]];
    let mut v: Coords = x.iter().copied().collect();
    let mut dv: Coords = dx.iter().copied().collect();
    for _ in 0..n {
        let (val, jac) = map.eval_lift_jacobian(&v);
        let s = val.iter().map(|c| c.norm()).fold(0.0, f64::max);
        if s == 0.0 || !s.is_finite() {
            return None;
        }
        let ndv: Coords = (0..2).map(|i| (jac[(i, 0)] * dv[0] + jac[(i, 1)] * dv[1]) / s).collect();
        v = val.iter().map(|c| c / s).collect();
        dv = ndv;
    }
    let h = v[0] * x[1] - v[1] * x[0];
    let dh = dv[0] * x[1] + v[0] * dx[1] - dv[1] * x[0] - v[1] * dx[0];
    if dh.norm() == 0.0 {
        return None;
    }
    Some(h / dh)
}

fn polish(map: &FiberMap, x: &PPoint, n: usize) -> PPoint {
    let before = fixed_residual(map, x, n).unwrap_or(f64::INFINITY);
    match map.newton_periodic(x, n, 4, 1e-15) {
        Some((y, _)) if fixed_residual(map, &y, n).unwrap_or(f64::INFINITY) <= before => y,
        _ => x.clone(),
    }
}

fn fixed_residual(map: &FiberMap, x: &PPoint, n: usize) -> Result<f64> {
    Ok(proj_geom::distance(&map.iterate(x, n)?, x))
}

fn dedup(mut pts: Vec<PPoint>) -> Vec<PPoint> {
    pts.sort_by(cmp_points);
    let mut out: Vec<PPoint> = Vec::with_capacity(pts.len());
    for p in pts {
        if !out.iter().any(|q| proj_geom::distance(&p, q) <= DEDUP_RADIUS) {
            out.push(p);
        }
    }
    out
}

fn periodic_points_newton(map: &FiberMap, n: usize) -> Result<Vec<PPoint>> {
    let k = map.k();
    let d = map.degree() as usize;
    let mut seeds = Vec::new();
    let mut rng = rng::job_rng(0xF1CED, rng::stream::PULLBACK_SEED, n as u64);
    let depth = (n + 2).min(measures::max_depth(k, map.degree(), SEED_ATOMS_P2));
    let s = proj_geom::random_point(k, &mut rng);
    let cloud = measures::pullback_from_map(map, depth, &s)?;
    seeds.extend(cloud.atoms.into_iter().map(|(p, _)| p));
    seeds.extend((0..RANDOM_SEEDS_P2).map(|_| proj_geom::random_point(k, &mut rng)));
    let found: Vec<Option<PPoint>> = crate::par::map(&seeds, |x| {
        let (y, step) = map.newton_periodic(x, n, 60, 1e-14)?;
        (step <= 1e-10 && fixed_residual(map, &y, n).ok()? <= RESIDUAL_TOL).then_some(y)
    });
    let pts = dedup(found.into_iter().flatten().collect());
    let bound: usize = (0..=k).map(|j| d.pow((n * j) as u32)).sum();
    if pts.len() > bound {
        return Err(Error::Solver(format!("{} fixed points of f^{n} exceed the Bézout count {bound}", pts.len())));
    }
    Ok(pts)
}

/// Groups fixed points of `fⁿ` into cycles of exact period.
fn assemble_cycles(map: &FiberMap, points: &[PPoint], n: usize) -> Result<Vec<Vec<PPoint>>> {
    let divisors: Vec<usize> = (1..=n).filter(|p| n % p == 0).collect();
    let mut used = vec![false; points.len()];
    let mut cycles = Vec::new();
    for i in 0..points.len() {
        if used[i] {
            continue;
        }
        let x = &points[i];
        let mut period = n;
        for &p in &divisors {
            if fixed_residual(map, x, p)? <= 1e-7 {
                period = p;
                break;
            }
        }
        let mut orbit = vec![x.clone()];
        used[i] = true;
        let mut cur = x.clone();
        for _ in 1..period {
            cur = map.eval(&cur)?;
            // prefer the solver's copy of the next point when present
            let hit = (0..points.len())
                .filter(|&j| !used[j])
                .min_by(|&a, &b| proj_geom::distance(&points[a], &cur).total_cmp(&proj_geom::distance(&points[b], &cur)));
            if let Some(j) = hit.filter(|&j| proj_geom::distance(&points[j], &cur) <= 1e-6) {
                used[j] = true;
                cur = points[j].clone();
            }
            orbit.push(cur.clone());
        }
        let start = (0..orbit.len()).min_by(|&a, &b| cmp_points(&orbit[a], &orbit[b])).unwrap();
        orbit.rotate_left(start);
        cycles.push(orbit);
    }
    Ok(cycles)
}

/// One row of the periodic-point census.
#[derive(Clone, Debug, PartialEq)]
pub struct CountRow {
    pub n: usize,
    /// Repelling Julia points of period dividing `n`.
    pub count: usize,
    /// `d^{−kn} · count`.
    pub ratio: f64,
}

pub fn count_audit(spec: &FamilySpec, lambda: &[Complex64], n_max: usize) -> Result<Vec<CountRow>> {
    (1..=n_max)
        .map(|n| {
            let cycles = find_periodic(spec, lambda, n)?;
            let count: usize = cycles.iter().filter(|c| c.is_repelling_julia()).map(|c| c.period).sum();
            let ratio = count as f64 / (spec.d as f64).powi((spec.k * n) as i32);
            Ok(CountRow { n, count, ratio })
        })
        .collect()
}

/// Whether the ratios of a census never decrease.
pub fn is_monotone(rows: &[CountRow]) -> bool {
    rows.windows(2).all(|w| w[1].ratio >= w[0].ratio - 1e-12)
}
