//! Finite web approximants: all repelling Julia cycles of a level, tracked
//! point by point, with the induced action of `F`.

use num_complex::Complex64;

use super::{track_cycle, CycleMotion, COLLAPSE_RADIUS};
use crate::cycles::{self, Cycle};
use crate::error::{Error, Result};
use crate::family::FamilySpec;
use crate::measures::{self, PointCloudMeasure, Provenance};
use crate::mesh::ParamMesh;
use crate::par;
use crate::preimage;
use crate::proj_geom::{self, PPoint};

/// Separation below which two graphs are reported as intersecting.
pub const THETA_INT: f64 = 1e-4;
/// Separation below which a pair is refined before judging it.
pub const ALERT: f64 = 1e-2;
const REFINE_LEVELS: usize = 2;
/// Step tolerance of re-polishing off the tracked set.
const RELAXED_TOL: f64 = 1e-5;
/// Largest move of a relaxed re-polish; near a collision points move like
/// the square root of the parameter step.
const RELAXED_JUMP: f64 = 0.3;

/// One point motion: point `index` of cycle motion `motion`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Atom {
    pub motion: usize,
    pub index: usize,
}

#[derive(Clone, Debug)]
pub struct WebApprox {
    pub levels: Vec<usize>,
    pub mesh: ParamMesh,
    pub root: usize,
    pub motions: Vec<CycleMotion>,
    pub atoms: Vec<Atom>,
    pub weights: Vec<f64>,
    /// `f_action[a]` is the atom through `f(a)`.
    pub f_action: Vec<usize>,
    /// Fraction of (atom, node) pairs left untracked.
    pub hole_mass: f64,
}

#[derive(Clone, Debug)]
pub struct WebOptions {
    /// Root node; defaults to the node nearest the mesh centroid.
    pub root: Option<usize>,
    pub max_hole_mass: f64,
}

impl Default for WebOptions {
    fn default() -> Self {
        Self { root: None, max_hole_mass: 0.01 }
    }
}

impl WebApprox {
    pub fn value(&self, atom: usize, node: usize) -> Option<&PPoint> {
        let a = self.atoms[atom];
        self.motions[a.motion].point(node, a.index)
    }

    pub fn period(&self, atom: usize) -> usize {
        self.motions[self.atoms[atom].motion].period
    }

    /// Tracked atom values at a node as a uniform measure.
    pub fn cloud(&self, node: usize) -> Result<PointCloudMeasure> {
        let pts: Vec<PPoint> = (0..self.atoms.len()).filter_map(|a| self.value(a, node).cloned()).collect();
        if pts.is_empty() {
            return Err(Error::Precondition(format!("no tracked atom at node {node}")));
        }
        PointCloudMeasure::uniform(&self.mesh.node(node), pts, Provenance::Web { level: *self.levels.iter().max().unwrap() })
    }

    /// Largest `d(F(a)(λ), f_λ(a(λ)))` over nodes where both are tracked.
    pub fn equivariance_error(&self, spec: &FamilySpec) -> Result<f64> {
        let per_node = par::map_range(self.mesh.len(), |i| -> Result<f64> {
            let map = spec.at(&self.mesh.node(i))?;
            let mut worst: f64 = 0.0;
            for a in 0..self.atoms.len() {
                let (Some(p), Some(q)) = (self.value(a, i), self.value(self.f_action[a], i)) else { continue };
                worst = worst.max(proj_geom::distance(&map.eval(p)?, q));
            }
            Ok(worst)
        });
        per_node.into_iter().try_fold(0.0, |acc, r| r.map(|v| f64::max(acc, v)))
    }

    /// Per atom, the number of `f`-preimages of its root value counted with
    /// multiplicity, each checked to map back onto the atom.
    pub fn preimage_counts(&self, spec: &FamilySpec) -> Result<Vec<usize>> {
        let map = spec.at(&self.mesh.node(self.root))?;
        let counts = par::map_range(self.atoms.len(), |a| -> Result<usize> {
            let x = self.value(a, self.root).expect("atoms are tracked at the root");
            let pre = preimage::preimages(&map, x)?;
            for p in &pre {
                if proj_geom::distance(&map.eval(p)?, x) > 1e-8 {
                    return Err(Error::Solver(format!("preimage of atom {a} does not map back")));
                }
            }
            Ok(pre.len())
        });
        counts.into_iter().collect()
    }

    /// Atoms whose `F`-image is `a`.
    pub fn f_preimages(&self, a: usize) -> Vec<usize> {
        (0..self.atoms.len()).filter(|&b| self.f_action[b] == a).collect()
    }

    pub fn is_bijection(&self) -> bool {
        let mut seen = vec![false; self.atoms.len()];
        self.f_action.iter().all(|&b| b < seen.len() && !std::mem::replace(&mut seen[b], true))
    }

    /// Largest mesh-step Lipschitz constant over all motions.
    pub fn lipschitz(&self) -> f64 {
        self.motions.iter().map(CycleMotion::lipschitz).fold(0.0, f64::max)
    }
}

pub fn build_web(spec: &FamilySpec, mesh: &ParamMesh, n: usize) -> Result<WebApprox> {
    build_web_levels(spec, mesh, &[n], &WebOptions::default())
}

fn centroid_node(mesh: &ParamMesh) -> usize {
    let nodes = mesh.nodes();
    let m = mesh.m();
    let mean: Vec<Complex64> = (0..m).map(|j| nodes.iter().map(|l| l[j]).sum::<Complex64>() / nodes.len() as f64).collect();
    mesh.nearest(&mean)
}

/// Union of the webs of the given levels: every repelling Julia cycle whose
/// period divides one of them, once.
pub fn build_web_levels(spec: &FamilySpec, mesh: &ParamMesh, levels: &[usize], opts: &WebOptions) -> Result<WebApprox> {
    if levels.is_empty() {
        return Err(Error::Precondition("no web level given".into()));
    }
    let root = opts.root.unwrap_or_else(|| centroid_node(mesh));
    let lambda0 = mesh.node(root);
    let mut seeds: Vec<Cycle> = Vec::new();
    for &n in levels {
        for c in cycles::find_periodic(spec, &lambda0, n)? {
            if !c.is_repelling_julia() {
                continue;
            }
            let dup = seeds.iter().any(|s| {
                s.period == c.period && s.points.iter().any(|p| proj_geom::distance(p, &c.points[0]) < cycles::DEDUP_RADIUS)
            });
            if !dup {
                seeds.push(c);
            }
        }
    }
    if seeds.is_empty() {
        return Err(Error::Solver("no repelling Julia cycle at the root".into()));
    }
    let motions: Vec<CycleMotion> = par::map(&seeds, |c| track_cycle(spec, c, mesh)).into_iter().collect::<Result<_>>()?;
    let atoms: Vec<Atom> =
        motions.iter().enumerate().flat_map(|(m, mo)| (0..mo.period).map(move |index| Atom { motion: m, index })).collect();
    let total = atoms.len() * mesh.len();
    let holes: usize = motions.iter().map(|m| m.period * (mesh.len() - m.tracked())).sum();
    let hole_mass = holes as f64 / total as f64;
    if hole_mass > opts.max_hole_mass {
        return Err(Error::Budget(format!("{:.2}% of atom values untrackable over the mesh", 100.0 * hole_mass)));
    }
    let weights = vec![1.0 / atoms.len() as f64; atoms.len()];
    let map = spec.at(&lambda0)?;
    let mut f_action = Vec::with_capacity(atoms.len());
    for a in &atoms {
        let img = map.eval(motions[a.motion].point(root, a.index).unwrap())?;
        let (b, d) = atoms
            .iter()
            .enumerate()
            .map(|(b, at)| (b, proj_geom::distance(&img, motions[at.motion].point(root, at.index).unwrap())))
            .min_by(|x, y| x.1.total_cmp(&y.1))
            .unwrap();
        if d > 1e-9 {
            return Err(Error::Solver(format!("image of an atom is {d:e} away from the web")));
        }
        f_action.push(b);
    }
    Ok(WebApprox { levels: levels.to_vec(), mesh: mesh.clone(), root, motions, atoms, weights, f_action, hole_mass })
}

/// `measure_distance` between the web evaluated at `node` and a reference.
pub fn pushforward_check(web: &WebApprox, node: usize, reference: &PointCloudMeasure) -> Result<f64> {
    measures::measure_distance(&web.cloud(node)?, reference)
}

#[derive(Clone, Debug)]
pub struct Intersection {
    pub atoms: (usize, usize),
    pub lambda: Vec<Complex64>,
    pub point: PPoint,
    pub separation: f64,
}

#[derive(Clone, Debug)]
pub struct IntersectionReport {
    pub intersections: Vec<Intersection>,
    pub min_separation: f64,
    pub min_pair: Option<(usize, usize)>,
    /// Pairs that went through refinement.
    pub refined: usize,
}

/// Values of an atom at a parameter, polished from a nearby value with the
/// relaxed tolerance (no repulsion requirement).
fn relaxed_value(spec: &FamilySpec, lambda: &[Complex64], from: &PPoint, period: usize) -> Option<PPoint> {
    let map = spec.at(lambda).ok()?;
    let (x, step) = map.newton_periodic(from, period, 200, 1e-15)?;
    if step > RELAXED_TOL || proj_geom::distance(&x, from) > RELAXED_JUMP {
        return None;
    }
    // fast convergence onto a point of lower period is a branch jump; at a
    // genuine collision the system is singular and Newton only crawls
    if period > 1 && step < 1e-10 && proj_geom::distance(&map.eval(&x).ok()?, &x) < COLLAPSE_RADIUS {
        return None;
    }
    Some(x)
}

/// Per atom and node: the tracked value, or at an untracked node next to a
/// tracked one, the relaxed re-polish from that neighbor.
fn extended_values(web: &WebApprox, spec: &FamilySpec) -> Vec<Vec<Option<(PPoint, bool)>>> {
    par::map_range(web.atoms.len(), |a| {
        let period = web.period(a);
        (0..web.mesh.len())
            .map(|i| {
                if let Some(p) = web.value(a, i) {
                    return Some((p.clone(), true));
                }
                let lambda = web.mesh.node(i);
                web.mesh
                    .neighbors(i)
                    .into_iter()
                    .filter_map(|j| web.value(a, j))
                    .find_map(|p| relaxed_value(spec, &lambda, p, period))
                    .map(|p| (p, false))
            })
            .collect()
    })
}

/// Pairwise graph separation of all atoms over the mesh. Pairs closer than
/// `ALERT` somewhere are re-examined on two dyadic refinements around the
/// closest node; pairs whose refined separation is below `THETA_INT` are
/// reported. Untracked nodes adjacent to tracked ones take part through a
/// relaxed re-polish, so collisions at flagged nodes are seen.
pub fn graph_intersections(web: &WebApprox, spec: &FamilySpec) -> Result<IntersectionReport> {
    let values = extended_values(web, spec);
    let na = web.atoms.len();
    let pairs: Vec<(usize, usize)> = (0..na).flat_map(|a| (a + 1..na).map(move |b| (a, b))).collect();
    // per pair: closest node and separation
    let closest: Vec<Option<(usize, f64)>> = par::map(&pairs, |&(a, b)| {
        let mut best: Option<(usize, f64)> = None;
        for i in 0..web.mesh.len() {
            let (Some((p, _)), Some((q, _))) = (&values[a][i], &values[b][i]) else { continue };
            let d = proj_geom::distance(p, q);
            if best.is_none_or(|(_, bd)| d < bd) {
                best = Some((i, d));
            }
        }
        best
    });
    let mut min_separation = f64::INFINITY;
    let mut min_pair = None;
    let mut refined = 0;
    let mut alerts = Vec::new();
    for (&(a, b), c) in pairs.iter().zip(&closest) {
        let Some((i, d)) = *c else { continue };
        if d < min_separation {
            min_separation = d;
            min_pair = Some((a, b));
        }
        if d < ALERT {
            alerts.push((a, b, i, d));
        }
    }
    let results = par::map(&alerts, |&(a, b, i, d)| refine_pair(web, spec, &values, a, b, i, d));
    let mut intersections = Vec::new();
    for r in results {
        refined += 1;
        let (hit, sep) = r;
        if sep < min_separation {
            min_separation = sep;
            min_pair = Some(hit.atoms);
        }
        if sep < THETA_INT {
            intersections.push(hit);
        }
    }
    intersections.sort_by(|x, y| x.separation.total_cmp(&y.separation));
    Ok(IntersectionReport { intersections, min_separation, min_pair, refined })
}

fn refine_pair(
    web: &WebApprox,
    spec: &FamilySpec,
    values: &[Vec<Option<(PPoint, bool)>>],
    a: usize,
    b: usize,
    node: usize,
    sep: f64,
) -> (Intersection, f64) {
    let lambda = web.mesh.node(node);
    let (pa, pb) = (&values[a][node].as_ref().unwrap().0, &values[b][node].as_ref().unwrap().0);
    let mut best = Intersection { atoms: (a, b), lambda: lambda.clone(), point: pa.clone(), separation: sep };
    let m = web.mesh.m();
    let steps: Vec<f64> = (0..2 * m).map(|ax| web.mesh.spacing(ax)).collect();
    let mut center = lambda;
    for level in 1..=REFINE_LEVELS {
        let scale = 0.5f64.powi(level as i32);
        let mut level_best: Option<(Vec<Complex64>, PPoint, f64)> = None;
        for off in offsets(2 * m) {
            let l: Vec<Complex64> = (0..m)
                .map(|j| center[j] + Complex64::new(off[2 * j] * steps[2 * j], off[2 * j + 1] * steps[2 * j + 1]) * scale)
                .collect();
            let (Some(qa), Some(qb)) = (relaxed_value(spec, &l, pa, web.period(a)), relaxed_value(spec, &l, pb, web.period(b)))
            else {
                continue;
            };
            let d = proj_geom::distance(&qa, &qb);
            if level_best.as_ref().is_none_or(|x| d < x.2) {
                level_best = Some((l, qa, d));
            }
        }
        if let Some((l, q, d)) = level_best {
            if d < best.separation {
                best = Intersection { atoms: (a, b), lambda: l.clone(), point: q, separation: d };
            }
            center = l;
        }
    }
    let sep = best.separation;
    (best, sep)
}

/// All offsets in `{−1, 0, 1}^dims` except the origin.
fn offsets(dims: usize) -> Vec<Vec<f64>> {
    let mut out = vec![vec![]];
    for _ in 0..dims {
        out = out.into_iter().flat_map(|v| [-1.0, 0.0, 1.0].map(|s| [v.clone(), vec![s]].concat())).collect();
    }
    out.retain(|v| v.iter().any(|&s| s != 0.0));
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::family::presets;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn squaring_web_of_level_three() {
        let spec = presets::quadratic_around(c(0.0, 0.0), 0.1, 5).frozen();
        let mesh = ParamMesh::polydisk(&[c(0.0, 0.0)], 0.1, 5).unwrap();
        let web = build_web(&spec, &mesh, 3).unwrap();
        assert_eq!(web.atoms.len(), 7);
        assert!(web.is_bijection());
        assert!((web.weights.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        // doubling on 7th roots of unity
        let angle = |a: usize| {
            let z = web.value(a, web.root).unwrap().z();
            (z.arg() / std::f64::consts::TAU * 7.0).round().rem_euclid(7.0) as usize
        };
        for a in 0..7 {
            assert_eq!(angle(web.f_action[a]), (2 * angle(a)) % 7);
        }
        let rep = graph_intersections(&web, &spec).unwrap();
        assert!(rep.intersections.is_empty());
        let expected = proj_geom::distance(&PPoint::affine1(c(1.0, 0.0)), &PPoint::affine1(Complex64::from_polar(1.0, std::f64::consts::TAU / 7.0)));
        assert!((rep.min_separation - expected).abs() < 1e-9);
        assert!(web.equivariance_error(&spec).unwrap() < 1e-9);
        assert!(web.preimage_counts(&spec).unwrap().iter().all(|&n| n == 2));
    }

    #[test]
    fn quadratic_web_over_small_disk() {
        let spec = presets::quadratic();
        let mesh = ParamMesh::polydisk(&[c(0.0, 0.0)], 0.2, 11).unwrap();
        let web = build_web(&spec, &mesh, 3).unwrap();
        assert_eq!(web.atoms.len(), 7);
        assert_eq!(web.hole_mass, 0.0);
        assert!(graph_intersections(&web, &spec).unwrap().intersections.is_empty());
    }
}
