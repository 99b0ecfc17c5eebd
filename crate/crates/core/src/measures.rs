//! Point-cloud approximations of the equilibrium measure `μ_λ`: pullbacks of
//! a point, uniform measures on repelling cycles, integration, and
//! Wasserstein-type distances between clouds.

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::cycles;
use crate::error::{Error, Result};
use crate::family::{FamilySpec, FiberMap};
use crate::par;
use crate::preimage;
use crate::proj_geom::{self, PPoint};
use crate::rng;

/// Largest number of atoms a pullback may produce.
pub const DEFAULT_ATOM_BUDGET: usize = 1 << 16;
/// Largest fraction of mass that failing preimage solves may drop.
pub const MAX_MASS_LOSS: f64 = 0.01;
pub const SEED_RETRIES: u64 = 3;
pub const DIRECTIONS_P1: usize = 64;
pub const DIRECTIONS_P2: usize = 128;
/// Seed of the projection directions used by [`measure_distance`].
pub const DEFAULT_DISTANCE_SEED: u64 = 0xD157;

#[derive(Clone, Debug, PartialEq)]
pub enum Provenance {
    Pullback { depth: usize, seed: PPoint },
    Cycles { n: usize },
    Web { level: usize },
}

#[derive(Clone, Debug)]
pub struct PointCloudMeasure {
    pub lambda: Vec<Complex64>,
    pub k: usize,
    pub atoms: Vec<(PPoint, f64)>,
    pub provenance: Provenance,
    /// Mass dropped with failed subtrees before renormalization.
    pub lost_mass: f64,
}

impl PointCloudMeasure {
    pub fn uniform(lambda: &[Complex64], points: Vec<PPoint>, provenance: Provenance) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::Precondition("a measure needs at least one atom".into()));
        }
        let k = points[0].dim();
        let w = 1.0 / points.len() as f64;
        Ok(Self { lambda: lambda.to_vec(), k, atoms: points.into_iter().map(|p| (p, w)).collect(), provenance, lost_mass: 0.0 })
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn total_weight(&self) -> f64 {
        self.atoms.iter().map(|(_, w)| w).sum()
    }

    pub fn points(&self) -> impl Iterator<Item = &PPoint> {
        self.atoms.iter().map(|(p, _)| p)
    }
}

/// Largest depth with `d^{k·depth} ≤ budget`.
pub fn max_depth(k: usize, d: u32, budget: usize) -> usize {
    let per_level = (d as usize).pow(k as u32);
    let mut depth = 0;
    let mut atoms = 1usize;
    while atoms.saturating_mul(per_level) <= budget {
        atoms *= per_level;
        depth += 1;
    }
    depth
}

/// `d^{−k·depth} (fⁿ)^* δ_seed`, built level by level from one-step preimages.
pub fn pullback_measure(spec: &FamilySpec, lambda: &[Complex64], depth: usize, seed: &PPoint) -> Result<PointCloudMeasure> {
    let map = spec.at(lambda)?;
    pullback_from_map(&map, depth, seed)
}

pub fn pullback_from_map(map: &FiberMap, depth: usize, seed: &PPoint) -> Result<PointCloudMeasure> {
    let k = map.k();
    let per_level = (map.degree() as usize).pow(k as u32);
    if depth > max_depth(k, map.degree(), DEFAULT_ATOM_BUDGET) {
        return Err(Error::Budget(format!(
            "pullback depth {depth} needs {per_level}^{depth} atoms, over the budget of {DEFAULT_ATOM_BUDGET}"
        )));
    }
    let mut level = vec![seed.clone()];
    let mut lost = 0.0;
    let mut weight = 1.0;
    for _ in 0..depth {
        let results = par::map(&level, |x| preimage::preimages(map, x));
        weight /= per_level as f64;
        let mut next = Vec::with_capacity(level.len() * per_level);
        let mut failed = 0usize;
        for r in results {
            match r {
                Ok(pts) if pts.len() == per_level => next.extend(pts),
                _ => failed += 1,
            }
        }
        lost += failed as f64 * weight * per_level as f64;
        if lost > MAX_MASS_LOSS {
            return Err(Error::Budget(format!("pullback lost {:.2}% of its mass to preimage failures", 100.0 * lost)));
        }
        if next.is_empty() {
            return Err(Error::Solver("every preimage solve failed".into()));
        }
        level = next;
    }
    let w = 1.0 / level.len() as f64;
    Ok(PointCloudMeasure {
        lambda: map.lambda().to_vec(),
        k,
        atoms: level.into_iter().map(|p| (p, w)).collect(),
        provenance: Provenance::Pullback { depth, seed: seed.clone() },
        lost_mass: lost,
    })
}

/// The seed drawn for attempt `attempt` under `master`.
pub fn pullback_seed(k: usize, master: u64, attempt: u64) -> PPoint {
    let mut rng = rng::job_rng(master, rng::stream::PULLBACK_SEED, attempt);
    proj_geom::random_point(k, &mut rng)
}

/// Pullback of a random seed drawn from `master`, retried with fresh seeds
/// when the seed turns out to be pathological.
pub fn pullback_measure_seeded(spec: &FamilySpec, lambda: &[Complex64], depth: usize, master: u64) -> Result<PointCloudMeasure> {
    let map = spec.at(lambda)?;
    let mut last = None;
    for attempt in 0..=SEED_RETRIES {
        match pullback_from_map(&map, depth, &pullback_seed(spec.k, master, attempt)) {
            Ok(m) => return Ok(m),
            Err(e @ Error::Budget(_)) if attempt == 0 && matches!(&e, Error::Budget(msg) if msg.contains("over the budget")) => {
                return Err(e)
            }
            Err(e) => last = Some(e),
        }
    }
    Err(last.unwrap())
}

/// Uniform measure on the repelling Julia points of period dividing `n`.
pub fn cycle_measure(spec: &FamilySpec, lambda: &[Complex64], n: usize) -> Result<PointCloudMeasure> {
    let cycles = cycles::find_periodic(spec, lambda, n)?;
    let pts: Vec<PPoint> = cycles.into_iter().filter(|c| c.is_repelling_julia()).flat_map(|c| c.points).collect();
    if pts.is_empty() {
        return Err(Error::Solver(format!("no repelling Julia cycle of period dividing {n}")));
    }
    PointCloudMeasure::uniform(lambda, pts, Provenance::Cycles { n })
}

/// `Σ wᵢ g(xᵢ)`; non-finite values are an error listing the atoms.
pub fn integrate<F>(measure: &PointCloudMeasure, observable: F) -> Result<f64>
where
    F: Fn(&PPoint) -> f64 + Sync,
{
    let values = par::map(&measure.atoms, |(p, _)| observable(p));
    let bad: Vec<usize> = values.iter().enumerate().filter(|(_, v)| !v.is_finite()).map(|(i, _)| i).collect();
    if !bad.is_empty() {
        return Err(Error::NonFinite { count: bad.len(), indices: bad.into_iter().take(10).collect() });
    }
    Ok(values.iter().zip(&measure.atoms).map(|(v, (_, w))| v * w).sum())
}

/// Distance between two clouds over the same `Pᵏ`, using the default
/// direction seed.
pub fn measure_distance(m1: &PointCloudMeasure, m2: &PointCloudMeasure) -> Result<f64> {
    measure_distance_seeded(m1, m2, DEFAULT_DISTANCE_SEED)
}

/// For `k = 1` clouds lying on a common circle `|z| = r` (within 1%) this is
/// the exact Wasserstein-1 distance for arc length. Otherwise it is a sliced
/// Wasserstein-1 distance over random real projections of the affine
/// coordinates (64 directions for `k = 1`, 128 complex-linear ones for
/// `k = 2`), or of the Hermitian embedding `x ↦ x x*` when some atom is near
/// infinity.
pub fn measure_distance_seeded(m1: &PointCloudMeasure, m2: &PointCloudMeasure, seed: u64) -> Result<f64> {
    if m1.k != m2.k {
        return Err(Error::Precondition(format!("measures on P^{} and P^{}", m1.k, m2.k)));
    }
    if m1.is_empty() || m2.is_empty() {
        return Err(Error::Precondition("empty measure".into()));
    }
    if m1.k == 1 {
        if let Some(r) = common_circle(m1, m2) {
            return Ok(r * circle_w1(&angles(m1), &angles(m2)));
        }
    }
    let affine = |m: &PointCloudMeasure| -> Option<Vec<(Vec<f64>, f64)>> {
        m.atoms
            .iter()
            .map(|(p, w)| {
                let a = p.affine()?;
                let v: Vec<f64> = a.iter().flat_map(|c| [c.re, c.im]).collect();
                (v.iter().all(|x| x.abs() < 1e6)).then_some((v, *w))
            })
            .collect()
    };
    let (a, b, complex) = match (affine(m1), affine(m2)) {
        (Some(a), Some(b)) => (a, b, true),
        _ => (hermitian(m1), hermitian(m2), false),
    };
    let count = if m1.k == 1 { DIRECTIONS_P1 } else { DIRECTIONS_P2 };
    let dim = a[0].0.len();
    let mut rng = rng::job_rng(seed, rng::stream::DIRECTIONS, m1.k as u64);
    let dirs: Vec<Vec<f64>> = (0..count)
        .map(|_| {
            let v: Vec<f64> = if complex {
                // Re⟨x, v⟩ for a random complex unit vector v
                let c: Vec<Complex64> =
                    (0..dim / 2).map(|_| Complex64::new(rng.sample(StandardNormal), rng.sample(StandardNormal))).collect();
                c.iter().flat_map(|z| [z.re, z.im]).collect()
            } else {
                (0..dim).map(|_| rng.sample(StandardNormal)).collect()
            };
            let n: f64 = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            v.into_iter().map(|x| x / n).collect()
        })
        .collect();
    let project = |cloud: &[(Vec<f64>, f64)], dir: &[f64]| -> Vec<(f64, f64)> {
        cloud.iter().map(|(v, w)| (v.iter().zip(dir).map(|(x, y)| x * y).sum(), *w)).collect()
    };
    let total: f64 = par::map(&dirs, |dir| line_w1(project(&a, dir), project(&b, dir))).iter().sum();
    Ok(total / count as f64)
}

fn hermitian(m: &PointCloudMeasure) -> Vec<(Vec<f64>, f64)> {
    m.atoms
        .iter()
        .map(|(p, w)| {
            let x = p.coords();
            let mut v = Vec::with_capacity(x.len() * x.len());
            for i in 0..x.len() {
                for j in i..x.len() {
                    let e = x[i] * x[j].conj();
                    if i == j {
                        v.push(e.re);
                    } else {
                        v.push(e.re * std::f64::consts::SQRT_2);
                        v.push(e.im * std::f64::consts::SQRT_2);
                    }
                }
            }
            (v, *w)
        })
        .collect()
}

fn common_circle(m1: &PointCloudMeasure, m2: &PointCloudMeasure) -> Option<f64> {
    let radii: Option<Vec<f64>> = m1.points().chain(m2.points()).map(|p| p.affine().map(|a| a[0].norm())).collect();
    let radii = radii?;
    let mean = radii.iter().sum::<f64>() / radii.len() as f64;
    (mean > 0.0 && radii.iter().all(|r| (r - mean).abs() <= 1e-2 * mean)).then_some(mean)
}

fn angles(m: &PointCloudMeasure) -> Vec<(f64, f64)> {
    m.atoms
        .iter()
        .map(|(p, w)| {
            let a = p.z().arg();
            (if a < 0.0 { a + std::f64::consts::TAU } else { a }, *w)
        })
        .collect()
}

/// Wasserstein-1 distance for arc length on the unit circle between two
/// weighted angle sets in `[0, 2π)`: `min_s ∫ |F − G − s|`, attained at a
/// weighted median of `F − G`.
pub fn circle_w1(a: &[(f64, f64)], b: &[(f64, f64)]) -> f64 {
    let (ta, tb) = (a.iter().map(|x| x.1).sum::<f64>(), b.iter().map(|x| x.1).sum::<f64>());
    let mut events: Vec<(f64, f64)> = a.iter().map(|&(t, w)| (t, w / ta)).chain(b.iter().map(|&(t, w)| (t, -w / tb))).collect();
    events.sort_by(|x, y| x.0.total_cmp(&y.0));
    // D(θ) = F(θ) − G(θ) on each interval between events
    let mut pieces: Vec<(f64, f64)> = Vec::with_capacity(events.len());
    let mut acc = 0.0;
    for i in 0..events.len() {
        acc += events[i].1;
        let end = if i + 1 < events.len() { events[i + 1].0 } else { std::f64::consts::TAU + events[0].0 };
        let len = end - events[i].0;
        if len > 0.0 {
            pieces.push((acc, len));
        }
    }
    let total_len: f64 = pieces.iter().map(|p| p.1).sum();
    let mut sorted = pieces.clone();
    sorted.sort_by(|x, y| x.0.total_cmp(&y.0));
    let mut run = 0.0;
    let mut median = sorted.last().map(|p| p.0).unwrap_or(0.0);
    for &(v, len) in &sorted {
        run += len;
        if run >= total_len / 2.0 {
            median = v;
            break;
        }
    }
    pieces.iter().map(|&(v, len)| (v - median).abs() * len).sum()
}

/// Wasserstein-1 distance between weighted samples on the line.
pub fn line_w1(mut a: Vec<(f64, f64)>, mut b: Vec<(f64, f64)>) -> f64 {
    let ta: f64 = a.iter().map(|x| x.1).sum();
    let tb: f64 = b.iter().map(|x| x.1).sum();
    a.iter_mut().for_each(|x| x.1 /= ta);
    b.iter_mut().for_each(|x| x.1 = -x.1 / tb);
    a.append(&mut b);
    a.sort_by(|x, y| x.0.total_cmp(&y.0));
    let mut acc = 0.0;
    let mut out = 0.0;
    for w in a.windows(2) {
        acc += w[0].1;
        out += acc.abs() * (w[1].0 - w[0].0);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::family::presets;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn circle(n: usize, shift: f64) -> PointCloudMeasure {
        let pts = (0..n)
            .map(|j| PPoint::affine1(Complex64::from_polar(1.0, std::f64::consts::TAU * j as f64 / n as f64 + shift)))
            .collect();
        PointCloudMeasure::uniform(&[], pts, Provenance::Cycles { n }).unwrap()
    }

    #[test]
    fn max_depth_respects_budget() {
        assert_eq!(max_depth(1, 2, 1 << 16), 16);
        assert_eq!(max_depth(2, 2, 1 << 16), 8);
        assert_eq!(max_depth(1, 5, 1 << 16), 6);
    }

    #[test]
    fn squaring_pullback_converges_to_circle() {
        let spec = presets::power_map(2);
        let s = PPoint::affine1(c(2.0, 0.0));
        let m = pullback_measure(&spec, &[], 10, &s).unwrap();
        assert_eq!(m.len(), 1024);
        assert!((m.total_weight() - 1.0).abs() < 1e-12);
        let mean_log = integrate(&m, |p| p.z().norm().ln()).unwrap();
        assert!((mean_log - 2f64.ln() / 1024.0).abs() < 1e-12);
        let moment = integrate(&m, |p| p.z().re).unwrap().hypot(integrate(&m, |p| p.z().im).unwrap());
        assert!(moment < 2f64.powf(-5.0));
    }

    #[test]
    fn product_map_marginals_centered() {
        let spec = presets::product_map_p2();
        let s = PPoint::from_reals(&[(0.6, 0.1), (0.5, -0.3), (0.7, 0.2)]).unwrap();
        let m = pullback_measure(&spec, &[], 4, &s).unwrap();
        assert_eq!(m.len(), 256);
        for i in 0..2 {
            let re = integrate(&m, |p| p.affine().unwrap()[i].re).unwrap();
            let im = integrate(&m, |p| p.affine().unwrap()[i].im).unwrap();
            assert!(re.hypot(im) < 1e-10, "marginal {i}: {re} {im}");
        }
    }

    #[test]
    fn cycle_measure_of_squaring() {
        let m = cycle_measure(&presets::power_map(2), &[], 4).unwrap();
        assert_eq!(m.len(), 15);
        assert!(m.atoms.iter().all(|(_, w)| (*w - 1.0 / 15.0).abs() < 1e-15));
        for (p, _) in &m.atoms {
            assert!((p.z().powu(15) - 1.0).norm() < 1e-10);
        }
    }

    #[test]
    fn integrate_rejects_non_finite() {
        let m = circle(8, 0.0);
        assert!((integrate(&m, |_| 1.0).unwrap() - 1.0).abs() < 1e-15);
        let err = integrate(&m, |p| if p.z().re > 0.99 { f64::NAN } else { 0.0 }).unwrap_err();
        assert!(matches!(err, Error::NonFinite { count: 1, .. }));
    }

    #[test]
    fn circle_distance_half_spacing() {
        let a = circle(256, 0.0);
        let b = circle(256, std::f64::consts::PI / 256.0);
        let d = measure_distance(&a, &b).unwrap();
        assert!((d - std::f64::consts::PI / 256.0).abs() < 1e-9, "{d}");
        assert_eq!(measure_distance(&a, &a).unwrap(), 0.0);
    }

    #[test]
    fn line_w1_simple() {
        let d = line_w1(vec![(0.0, 1.0)], vec![(1.0, 0.5), (3.0, 0.5)]);
        assert!((d - 2.0).abs() < 1e-15);
    }
}
