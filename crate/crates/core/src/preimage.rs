//! Solving `f_λ(w) = s` in `Pᵏ`.
//!
//! For `k = 1` the preimages are the roots of the binary form
//! `s₁F₀ − s₀F₁` of degree `d`. For `k ≥ 2` they are found by a total-degree
//! homotopy from the start system `yᵢ^d = 1` (whose `dᵏ` solutions are known)
//! in a randomly rotated affine chart, followed by Newton polishing.

use num_complex::Complex64;
use rand::Rng;
use smallvec::SmallVec;

use crate::error::{Error, Result};
use crate::family::FiberMap;
use crate::linalg::{self, CMat};
use crate::proj_geom::{self, Coords, PPoint};
use crate::roots;
use crate::rng;

const ONE: Complex64 = Complex64::new(1.0, 0.0);

/// Chordal residual accepted for `d(f(w), s)` after polishing.
pub const PREIMAGE_TOL: f64 = 1e-8;
const HOMOTOPY_ATTEMPTS: u64 = 3;

/// All `dᵏ` preimages of `s` counted with multiplicity.
pub fn preimages(map: &FiberMap, s: &PPoint) -> Result<Vec<PPoint>> {
    let out = if map.k() == 1 { preimages_p1(map, s)? } else { preimages_homotopy(map, s)? };
    for w in &out {
        let img = map.eval(w)?;
        let r = proj_geom::distance(&img, s);
        if r > PREIMAGE_TOL {
            return Err(Error::Solver(format!("preimage residual {r:.3e} exceeds {PREIMAGE_TOL:.0e}")));
        }
    }
    Ok(out)
}

fn preimages_p1(map: &FiberMap, s: &PPoint) -> Result<Vec<PPoint>> {
    let [a0, a1] = map.binary_coefficients().expect("k = 1");
    let (s0, s1) = (s.coords()[0], s.coords()[1]);
    let coeffs: Vec<Complex64> = a0.iter().zip(&a1).map(|(p, q)| s1 * p - s0 * q).collect();
    let roots = roots::binary_form_roots(&coeffs);
    if roots.len() != map.degree() as usize {
        return Err(Error::Solver(format!(
            "preimage equation degenerate: {} roots instead of {}",
            roots.len(),
            map.degree()
        )));
    }
    roots
        .into_iter()
        .map(|[z, w]| {
            let p = PPoint::new([z, w])?;
            Ok(newton_polish_preimage(map, &p, s).unwrap_or(p))
        })
        .collect()
}

/// A few Newton steps on `f(w) = s` in charts; returns `None` if they
/// do not improve the residual.
pub fn newton_polish_preimage(map: &FiberMap, w: &PPoint, s: &PPoint) -> Option<PPoint> {
    let atlas = map.atlas();
    let mut cur = w.clone();
    let mut best = proj_geom::distance(&map.eval(&cur).ok()?, s);
    for _ in 0..4 {
        if best < 1e-15 {
            break;
        }
        let jac = map.chart_jacobian(&cur).ok()?;
        let target_chart = atlas.chart_at(&jac.image).ok()?;
        let rhs = target_chart.to_chart(s).ok()?;
        let step = linalg::solve(&jac.matrix, &rhs)?;
        let next = atlas.chart_at(&cur).ok()?.from_chart(&step);
        let r = proj_geom::distance(&map.eval(&next).ok()?, s);
        if r < best {
            best = r;
            cur = next;
        } else {
            break;
        }
    }
    Some(cur)
}

/// Square polynomial system of `k` homogeneous equations of degree `d` in
/// `k + 1` unknowns, returning values and the `k × (k+1)` Jacobian.
pub(crate) trait HomSystem: Sync {
    fn k(&self) -> usize;
    fn degree(&self) -> u32;
    fn eval(&self, v: &[Complex64]) -> (Coords, CMat);
}

struct PreimageSystem<'a> {
    map: &'a FiberMap,
    s: Coords,
    pivot: usize,
}

impl HomSystem for PreimageSystem<'_> {
    fn k(&self) -> usize {
        self.map.k()
    }
    fn degree(&self) -> u32 {
        self.map.degree()
    }
    fn eval(&self, v: &[Complex64]) -> (Coords, CMat) {
        let (f, jac) = self.map.eval_lift_jacobian(v);
        let n = self.map.k() + 1;
        let j = self.pivot;
        let mut vals = Coords::new();
        let mut out = CMat::zeros(n - 1, n);
        let mut row = 0;
        for i in (0..n).filter(|&i| i != j) {
            vals.push(f[i] * self.s[j] - f[j] * self.s[i]);
            for c in 0..n {
                out[(row, c)] = jac[(i, c)] * self.s[j] - jac[(j, c)] * self.s[i];
            }
            row += 1;
        }
        (vals, out)
    }
}

/// Linear combinations `G = V F` of the components, first `k` rows.
pub(crate) struct MixedSystem<'a> {
    pub map: &'a FiberMap,
    pub mixing: CMat,
}

impl HomSystem for MixedSystem<'_> {
    fn k(&self) -> usize {
        self.map.k()
    }
    fn degree(&self) -> u32 {
        self.map.degree()
    }
    fn eval(&self, v: &[Complex64]) -> (Coords, CMat) {
        let (f, jac) = self.map.eval_lift_jacobian(v);
        let n = self.map.k() + 1;
        let mut vals = Coords::new();
        let mut out = CMat::zeros(n - 1, n);
        for i in 0..n - 1 {
            vals.push((0..n).map(|j| self.mixing[(i, j)] * f[j]).sum());
            for c in 0..n {
                out[(i, c)] = (0..n).map(|j| self.mixing[(i, j)] * jac[(j, c)]).sum();
            }
        }
        (vals, out)
    }
}

fn preimages_homotopy(map: &FiberMap, s: &PPoint) -> Result<Vec<PPoint>> {
    let pivot = s
        .coords()
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.norm().total_cmp(&b.1.norm()))
        .map(|(i, _)| i)
        .unwrap();
    let sys = PreimageSystem { map, s: s.coords().iter().copied().collect(), pivot };
    let expected = (map.degree() as usize).pow(map.k() as u32);
    let mut last_err = None;
    for attempt in 0..HOMOTOPY_ATTEMPTS {
        match solve_system(&sys, attempt) {
            Ok(sols) => {
                let pts: Vec<PPoint> = sols
                    .into_iter()
                    .map(|p| newton_polish_preimage(map, &p, s).unwrap_or(p))
                    .collect();
                if pts.len() == expected && distinct_or_critical(map, &pts) {
                    return Ok(pts);
                }
                last_err = Some(Error::Solver(format!(
                    "homotopy returned {} usable preimages out of {expected}",
                    pts.len()
                )));
            }
            Err(e) => last_err = Some(e),
        }
    }
    Err(last_err.unwrap())
}

/// Coincident endpoints are accepted only at critical points (genuine
/// multiplicity); otherwise they signal path jumping.
fn distinct_or_critical(map: &FiberMap, pts: &[PPoint]) -> bool {
    for i in 0..pts.len() {
        for j in i + 1..pts.len() {
            if proj_geom::distance(&pts[i], &pts[j]) < 1e-6 {
                let crit = map.chart_jacobian(&pts[i]).map(|s| s.delta < 1e-4).unwrap_or(true);
                if !crit {
                    return false;
                }
            }
        }
    }
    true
}

/// All solutions in `Pᵏ` of a square homogeneous system, by total-degree
/// homotopy in a random chart `v = U (y, 1)`.
pub(crate) fn solve_system<S: HomSystem>(sys: &S, attempt: u64) -> Result<Vec<PPoint>> {
    let k = sys.k();
    let d = sys.degree();
    let mut rng = rng::job_rng(0x5EED_F00D, rng::stream::HOMOTOPY, attempt);
    let frame = linalg::unitary_with_first_column(proj_geom::random_point(k, &mut rng).coords());
    let gamma = Complex64::from_polar(1.0, rng.random::<f64>() * std::f64::consts::TAU);
    let tracker = Tracker { sys, frame, gamma, k, d };
    let roots_of_unity: Vec<Complex64> = (0..d)
        .map(|j| Complex64::from_polar(1.0, std::f64::consts::TAU * j as f64 / d as f64))
        .collect();
    let total = (d as usize).pow(k as u32);
    let starts: Vec<Coords> = (0..total)
        .map(|mut idx| {
            (0..k)
                .map(|_| {
                    let r = roots_of_unity[idx % d as usize];
                    idx /= d as usize;
                    r
                })
                .collect()
        })
        .collect();
    let mut out = Vec::with_capacity(total);
    for start in starts {
        let y = tracker.track(start)?;
        out.push(tracker.point(&y)?);
    }
    Ok(out)
}

struct Tracker<'a, S: HomSystem> {
    sys: &'a S,
    frame: CMat,
    gamma: Complex64,
    k: usize,
    d: u32,
}

impl<S: HomSystem> Tracker<'_, S> {
    fn lift(&self, y: &[Complex64]) -> Coords {
        let n = self.k + 1;
        (0..n)
            .map(|i| {
                let mut acc = self.frame[(i, self.k)];
                for (j, yj) in y.iter().enumerate() {
                    acc += self.frame[(i, j)] * yj;
                }
                acc
            })
            .collect()
    }

    fn point(&self, y: &[Complex64]) -> Result<PPoint> {
        PPoint::from_coords(self.lift(y))
    }

    /// Target system in the chart: values and `k × k` Jacobian.
    fn target(&self, y: &[Complex64]) -> (Coords, CMat) {
        let v = self.lift(y);
        let (vals, jac) = self.sys.eval(&v);
        let dy = jac * self.frame.columns(0, self.k);
        (vals, dy)
    }

    fn start(&self, y: &[Complex64]) -> (Coords, CMat) {
        let mut vals = Coords::new();
        let mut jac = CMat::zeros(self.k, self.k);
        for i in 0..self.k {
            vals.push(y[i].powu(self.d) - ONE);
            jac[(i, i)] = y[i].powu(self.d - 1) * self.d as f64;
        }
        (vals, jac)
    }

    /// `H(y, t)`, `∂H/∂y` and `∂H/∂t`.
    fn homotopy(&self, y: &[Complex64], t: f64) -> (Coords, CMat, Coords) {
        let (g, gy) = self.target(y);
        let (s, sy) = self.start(y);
        let a = self.gamma * (1.0 - t);
        let h: Coords = g.iter().zip(&s).map(|(gi, si)| gi * t + si * a).collect();
        let hy = gy * Complex64::new(t, 0.0) + sy * a;
        let ht: Coords = g.iter().zip(&s).map(|(gi, si)| gi - si * self.gamma).collect();
        (h, hy, ht)
    }

    fn velocity(&self, y: &[Complex64], t: f64) -> Option<Coords> {
        let (_, hy, ht) = self.homotopy(y, t);
        let rhs: Vec<Complex64> = ht.iter().map(|c| -c).collect();
        linalg::solve(&hy, &rhs).map(SmallVec::from_vec)
    }

    fn correct(&self, y: &mut Coords, t: f64, iters: usize) -> bool {
        for _ in 0..iters {
            let (h, hy, _) = self.homotopy(y, t);
            let Some(dy) = linalg::solve(&hy, &h) else {
                return false;
            };
            let step: f64 = dy.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
            for (yi, di) in y.iter_mut().zip(&dy) {
                *yi -= di;
            }
            let scale = 1.0 + y.iter().map(|c| c.norm()).fold(0.0, f64::max);
            if step <= 1e-10 * scale {
                return true;
            }
        }
        false
    }

    fn track(&self, mut y: Coords) -> Result<Coords> {
        let mut t: f64 = 0.0;
        let mut h: f64 = 0.02;
        let mut steps = 0;
        while t < 1.0 {
            steps += 1;
            if steps > 20_000 || h < 1e-10 {
                return Err(Error::Solver(format!("homotopy path stalled at t = {t:.6}")));
            }
            let dt = h.min(1.0 - t);
            // RK4 predictor
            let k1 = self.velocity(&y, t);
            let pred = k1.and_then(|k1| {
                let add = |base: &Coords, v: &Coords, s: f64| -> Coords { base.iter().zip(v).map(|(b, x)| b + x * s).collect() };
                let k2 = self.velocity(&add(&y, &k1, dt / 2.0), t + dt / 2.0)?;
                let k3 = self.velocity(&add(&y, &k2, dt / 2.0), t + dt / 2.0)?;
                let k4 = self.velocity(&add(&y, &k3, dt), t + dt)?;
                Some(
                    (0..self.k)
                        .map(|i| y[i] + (k1[i] + k2[i] * 2.0 + k3[i] * 2.0 + k4[i]) * (dt / 6.0))
                        .collect::<Coords>(),
                )
            });
            let Some(mut cand) = pred else {
                h /= 2.0;
                continue;
            };
            let shift: f64 = cand.iter().zip(&y).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
            let scale = 1.0 + y.iter().map(|c| c.norm()).fold(0.0, f64::max);
            if shift > 0.25 * scale || !self.correct(&mut cand, t + dt, 4) {
                h /= 2.0;
                continue;
            }
            if cand.iter().any(|c| !c.is_finite() || c.norm() > 1e10) {
                return Err(Error::Solver("homotopy path diverged".into()));
            }
            y = cand;
            t += dt;
            h = (h * 1.6).min(0.1);
        }
        // endgame polish on the target system
        for _ in 0..20 {
            let (g, gy) = self.target(&y);
            let Some(dy) = linalg::solve(&gy, &g) else { break };
            let step: f64 = dy.iter().map(|c| c.norm()).fold(0.0, f64::max);
            for (yi, di) in y.iter_mut().zip(&dy) {
                *yi -= di;
            }
            if step < 1e-14 * (1.0 + y.iter().map(|c| c.norm()).fold(0.0, f64::max)) {
                break;
            }
        }
        Ok(y)
    }
}

/// A preimage of `x` drawn uniformly among the `dᵏ` preimages counted with
/// multiplicity, together with its index.
pub fn random_preimage<R: Rng>(map: &FiberMap, x: &PPoint, rng: &mut R) -> Result<(PPoint, usize)> {
    let pre = preimages(map, x)?;
    let i = rng.random_range(0..pre.len());
    Ok((pre[i].clone(), i))
}
