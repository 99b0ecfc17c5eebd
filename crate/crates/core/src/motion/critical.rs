//! Critical orbits against motion graphs: grand-orbit proximity and the
//! Misiurewicz scan.

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

use super::web::WebApprox;
use super::{param_distance, MAX_JUMP};
use crate::error::{Error, Result};
use crate::family::{FamilySpec, FiberMap};
use crate::mesh::ParamMesh;
use crate::par;
use crate::preimage;
use crate::proj_geom::{self, PPoint};
use crate::roots;
use crate::rng;

/// Graphs closer than this to the sampled critical grand orbit are suspect.
pub const THETA_CRIT: f64 = 1e-3;
/// Sample size of the critical curve for `k = 2`.
pub const CRITICAL_SAMPLES_P2: usize = 1000;
/// Largest sampled grand-orbit set per parameter.
pub const MAX_ORBIT_SET: usize = 1 << 18;

/// Coefficients of the polynomial `p` of degree `deg` from its values at
/// the `deg + 1` roots of unity.
fn dft_coefficients(deg: usize, p: impl Fn(Complex64) -> Complex64) -> Vec<Complex64> {
    let n = deg + 1;
    let w = |j: usize| Complex64::from_polar(1.0, std::f64::consts::TAU * j as f64 / n as f64);
    let vals: Vec<Complex64> = (0..n).map(|j| p(w(j))).collect();
    (0..n).map(|i| (0..n).map(|j| vals[j] * w((i * j) % n).conj()).sum::<Complex64>() / n as f64).collect()
}

/// Critical points of `f_λ`: all of them for `k = 1`, a sample of the
/// critical curve along random complex lines for `k = 2`.
pub fn critical_points(map: &FiberMap, samples: usize, seed: u64) -> Result<Vec<PPoint>> {
    let k = map.k();
    let deg = (k + 1) * (map.degree() as usize - 1);
    if k == 1 {
        let coeffs = dft_coefficients(deg, |t| map.homogeneous_det(&[t, Complex64::new(1.0, 0.0)]));
        let scale = coeffs.iter().map(|c| c.norm()).fold(0.0, f64::max);
        let cleaned: Vec<Complex64> =
            coeffs.into_iter().map(|c| if c.norm() <= 1e-13 * scale { Complex64::new(0.0, 0.0) } else { c }).collect();
        return roots::binary_form_roots(&cleaned).into_iter().map(PPoint::new).collect();
    }
    let mut rng = rng::job_rng(seed, rng::stream::CRITICAL, 0);
    let mut out = Vec::with_capacity(samples);
    while out.len() < samples {
        let mut gauss = || -> Vec<Complex64> { (0..=k).map(|_| Complex64::new(rng.sample(StandardNormal), rng.sample(StandardNormal))).collect() };
        let (a, b) = (gauss(), gauss());
        let along = |t: Complex64| -> Vec<Complex64> { a.iter().zip(&b).map(|(x, y)| x + y * t).collect() };
        let coeffs = dft_coefficients(deg, |t| map.homogeneous_det(&along(t)));
        if coeffs[deg].norm() <= 1e-12 * coeffs.iter().map(|c| c.norm()).fold(0.0, f64::max) {
            continue;
        }
        for t in roots::companion_roots(&coeffs) {
            out.push(PPoint::new(along(t))?);
        }
    }
    out.truncate(samples);
    Ok(out)
}

fn critical_sample(map: &FiberMap, seed: u64) -> Result<Vec<PPoint>> {
    critical_points(map, CRITICAL_SAMPLES_P2, seed)
}

/// `∪_{m ≤ n_b} f^{-m}(∪_{n ≤ n_f} fⁿ(C))` for the sampled critical set `C`.
fn grand_orbit(map: &FiberMap, n_f: usize, n_b: usize, seed: u64) -> Result<Vec<PPoint>> {
    let mut forward = Vec::new();
    for c in critical_sample(map, seed)? {
        let mut x = c;
        forward.push(x.clone());
        for _ in 0..n_f {
            x = map.eval(&x)?;
            forward.push(x.clone());
        }
    }
    let fan = (map.degree() as usize).pow(map.k() as u32);
    if forward.len().saturating_mul(fan.saturating_pow(n_b as u32)) > MAX_ORBIT_SET {
        return Err(Error::Budget(format!("grand orbit at depths ({n_f}, {n_b}) exceeds {MAX_ORBIT_SET} points")));
    }
    let mut all = forward.clone();
    let mut level = forward;
    for _ in 0..n_b {
        let next: Vec<PPoint> = par::flat_map(&level, |x| preimage::preimages(map, x).unwrap_or_default());
        all.extend(next.iter().cloned());
        level = next;
    }
    Ok(all)
}

#[derive(Clone, Debug)]
pub struct GrandOrbitProbe {
    pub forward_depth: usize,
    pub backward_depth: usize,
    /// Per atom, the smallest distance from its graph to the sampled set.
    pub distances: Vec<f64>,
    pub suspect: Vec<bool>,
}

/// Distance of every web atom's graph to the truncated critical grand orbit.
pub fn grand_orbit_proximity(web: &WebApprox, spec: &FamilySpec, n_f: usize, n_b: usize) -> Result<GrandOrbitProbe> {
    let per_node = par::map_range(web.mesh.len(), |i| -> Result<Vec<f64>> {
        let map = spec.at(&web.mesh.node(i))?;
        let set = grand_orbit(&map, n_f, n_b, rng::split(0xC217, rng::stream::CRITICAL, i as u64))?;
        Ok((0..web.atoms.len())
            .map(|a| match web.value(a, i) {
                Some(p) => set.iter().map(|q| proj_geom::distance(p, q)).fold(f64::INFINITY, f64::min),
                None => f64::INFINITY,
            })
            .collect())
    });
    let mut distances = vec![f64::INFINITY; web.atoms.len()];
    for r in per_node {
        for (d, v) in distances.iter_mut().zip(r?) {
            *d = d.min(v);
        }
    }
    let suspect = distances.iter().map(|&d| d < THETA_CRIT).collect();
    Ok(GrandOrbitProbe { forward_depth: n_f, backward_depth: n_b, distances, suspect })
}

#[derive(Clone, Debug)]
pub struct MisiurewiczCandidate {
    pub lambda: Vec<Complex64>,
    pub residual: f64,
    pub atom: usize,
    /// Iterate `j` with `f^j(c(λ)) = a(λ)`.
    pub iterate: usize,
}

/// Cells of a mesh whose real axes may be degenerate: every node together
/// with its `+1` neighbors along the nondegenerate axes.
fn cells(mesh: &ParamMesh) -> Vec<Vec<usize>> {
    let axes: Vec<usize> = (0..mesh.shape().len()).filter(|&a| mesh.shape()[a] > 1).collect();
    (0..mesh.len())
        .filter_map(|i| {
            let base = mesh.coords(i);
            let mut corners = Vec::with_capacity(1 << axes.len());
            for mask in 0..(1usize << axes.len()) {
                let mut c = base.clone();
                for (bit, &a) in axes.iter().enumerate() {
                    c[a] += (mask >> bit) & 1;
                }
                corners.push(mesh.at(&c)?);
            }
            Some(corners)
        })
        .collect()
}

struct Crossing<'a> {
    spec: &'a FamilySpec,
    /// Atom value and period near the cell.
    atom: PPoint,
    period: usize,
    /// Critical point followed by continuity.
    critical: PPoint,
    iterate: usize,
}

impl Crossing<'_> {
    /// Chart difference `f^j(c(λ)) − a(λ)` in the chart at the reference
    /// atom value, together with the refreshed `(a(λ), c(λ))`.
    fn eval(&self, lambda: &[Complex64]) -> Option<(Complex64, PPoint, PPoint)> {
        let map = self.spec.at(lambda).ok()?;
        let (a, step) = map.newton_periodic(&self.atom, self.period, 60, 1e-15)?;
        if step > 1e-10 || proj_geom::distance(&a, &self.atom) > MAX_JUMP {
            return None;
        }
        let crit = critical_points(&map, 0, 0).ok()?;
        let c = crit.into_iter().min_by(|p, q| {
            proj_geom::distance(p, &self.critical).total_cmp(&proj_geom::distance(q, &self.critical))
        })?;
        let img = map.iterate(&c, self.iterate).ok()?;
        let chart = map.atlas().chart_at(&self.atom).ok()?;
        let g = chart.to_chart(&img).ok()?[0] - chart.to_chart(&a).ok()?[0];
        Some((g, a, c))
    }

    /// Newton on `g(λ) = 0` with a finite-difference derivative.
    fn solve(&mut self, start: &[Complex64]) -> Option<(Vec<Complex64>, f64)> {
        let mut l = start.to_vec();
        for _ in 0..40 {
            let (g, a, c) = self.eval(&l)?;
            if g.norm() < 1e-13 {
                return Some((l, g.norm()));
            }
            let h = 1e-7 * (1.0 + l[0].norm());
            let mut lh = l.clone();
            lh[0] += h;
            let (gh, _, _) = self.eval(&lh)?;
            let dg = (gh - g) / h;
            if dg.norm() == 0.0 || !dg.is_finite() {
                return None;
            }
            let step = g / dg;
            if step.norm() > 0.5 {
                return None;
            }
            l[0] -= step;
            self.atom = a;
            self.critical = c;
            if step.norm() < 1e-15 * (1.0 + l[0].norm()) {
                break;
            }
        }
        let (g, _, _) = self.eval(&l)?;
        Some((l, g.norm()))
    }
}

/// Parameters where a forward critical iterate lands on a web atom. Each
/// cell is screened by a Lipschitz bound on the corner distances, then
/// Newton runs from the cell center; roots are kept when they fall in the
/// cell. Atoms met by a critical iterate at every corner of a cell are
/// persistent containments and are skipped.
pub fn misiurewicz_scan(spec: &FamilySpec, mesh: &ParamMesh, web: &WebApprox, n_f: usize) -> Result<Vec<MisiurewiczCandidate>> {
    if spec.k != 1 || spec.m != 1 {
        return Err(Error::Precondition("the Misiurewicz scan supports k = 1, m = 1 families".into()));
    }
    if spec.is_constant() {
        return Ok(Vec::new());
    }
    // critical orbits at every node: orbit[node][critical][j]
    let orbits = par::map_range(mesh.len(), |i| -> Result<Vec<Vec<PPoint>>> {
        let map = spec.at(&mesh.node(i))?;
        critical_points(&map, 0, 0)?.into_iter().map(|c| map.orbit(&c, n_f)).collect()
    });
    let orbits: Vec<Vec<Vec<PPoint>>> = orbits.into_iter().collect::<Result<_>>()?;
    let web_node = |i: usize| web.mesh.nearest(&mesh.node(i));
    let cells = cells(mesh);
    let found = par::flat_map(&cells, |cell| {
        let mut out = Vec::new();
        let lo: Vec<Complex64> = mesh.node(cell[0]);
        let hi: Vec<Complex64> = mesh.node(*cell.last().unwrap());
        let diam = param_distance(&lo, &hi).max(1e-12);
        let center = vec![(lo[0] + hi[0]) * 0.5];
        for a in 0..web.atoms.len() {
            let values: Option<Vec<&PPoint>> = cell.iter().map(|&i| web.value(a, web_node(i))).collect();
            let Some(values) = values else { continue };
            for ci in 0..orbits[cell[0]].len() {
                for j in 1..=n_f {
                    let dist: Vec<f64> = cell
                        .iter()
                        .zip(&values)
                        .map(|(&i, p)| orbits[i].get(ci).map_or(f64::INFINITY, |o| proj_geom::distance(&o[j], p)))
                        .collect();
                    if dist.iter().all(|&d| d < 1e-9) {
                        continue;
                    }
                    let mut lip: f64 = 0.0;
                    for x in 0..cell.len() {
                        for y in x + 1..cell.len() {
                            let dl = param_distance(&mesh.node(cell[x]), &mesh.node(cell[y]));
                            lip = lip.max((dist[x] - dist[y]).abs() / dl);
                        }
                    }
                    let dmin = dist.iter().copied().fold(f64::INFINITY, f64::min);
                    if dmin > 2.0 * lip * diam + 0.05 {
                        continue;
                    }
                    let mut cr = Crossing {
                        spec,
                        atom: values[0].clone(),
                        period: web.period(a),
                        critical: orbits[cell[0]][ci][0].clone(),
                        iterate: j,
                    };
                    if let Some((l, res)) = cr.solve(&center) {
                        let inside = (0..2).all(|ax| {
                            let (x, a, b) = if ax == 0 { (l[0].re, lo[0].re, hi[0].re) } else { (l[0].im, lo[0].im, hi[0].im) };
                            let slack = 1e-9 + 0.05 * (b - a).abs();
                            x >= a.min(b) - slack && x <= a.max(b) + slack
                        });
                        if inside && res < 1e-9 {
                            out.push(MisiurewiczCandidate { lambda: l, residual: res, atom: a, iterate: j });
                        }
                    }
                }
            }
        }
        out
    });
    // one candidate per parameter, the earliest iterate
    let mut found = found;
    found.sort_by(|x, y| x.iterate.cmp(&y.iterate).then(x.residual.total_cmp(&y.residual)));
    let mut out: Vec<MisiurewiczCandidate> = Vec::new();
    for c in found {
        if !out.iter().any(|o| param_distance(&o.lambda, &c.lambda) < 1e-6) {
            out.push(c);
        }
    }
    out.sort_by(|x, y| x.lambda[0].re.total_cmp(&y.lambda[0].re).then(x.lambda[0].im.total_cmp(&y.lambda[0].im)));
    Ok(out)
}
