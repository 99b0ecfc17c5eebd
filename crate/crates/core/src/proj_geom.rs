//! Points, the chordal metric and a chart atlas on complex projective space.
//!
//! Charts are the standard affine patch `z ↦ [1 : z]` composed with a unitary
//! map sending `e₀` to the chart center, so every point of `Pᵏ` is the center
//! of a chart and the distortion constant `τ` is uniform over the atlas.

use std::sync::OnceLock;

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use smallvec::SmallVec;

use crate::error::{Error, Result};
use crate::linalg::{unitary_with_first_column, CMat};
use crate::rng;

pub type Coords = SmallVec<[Complex64; 3]>;

/// Relative size below which a coordinate of a unit lift counts as zero when
/// fixing the phase of the canonical representative.
const PHASE_ZERO: f64 = 1e-14;

/// A point of `Pᵏ` stored through its canonical lift: unit Euclidean norm,
/// first nonzero coordinate real and positive.
#[derive(Clone, Debug, PartialEq)]
pub struct PPoint {
    coords: Coords,
}

impl PPoint {
    /// Builds the canonical representative of the class of `coords`.
    pub fn new(coords: impl IntoIterator<Item = Complex64>) -> Result<Self> {
        let coords: Coords = coords.into_iter().collect();
        Self::from_coords(coords)
    }

    pub fn from_coords(coords: Coords) -> Result<Self> {
        if coords.len() < 2 {
            return Err(Error::InvalidPoint(format!("need at least 2 coordinates, got {}", coords.len())));
        }
        if coords.iter().any(|c| !c.is_finite()) {
            return Err(Error::InvalidPoint("non-finite coordinate".into()));
        }
        let norm = lift_norm(&coords);
        if norm == 0.0 {
            return Err(Error::InvalidPoint("all coordinates are zero".into()));
        }
        Ok(Self { coords: canonical(coords, norm) })
    }

    pub fn from_reals(re_im: &[(f64, f64)]) -> Result<Self> {
        Self::new(re_im.iter().map(|&(r, i)| Complex64::new(r, i)))
    }

    /// Affine point `[z : 1]` of `P¹`.
    pub fn affine1(z: Complex64) -> Self {
        Self::new([z, Complex64::new(1.0, 0.0)]).expect("finite affine point")
    }

    /// Projective dimension `k`.
    pub fn dim(&self) -> usize {
        self.coords.len() - 1
    }

    pub fn coords(&self) -> &[Complex64] {
        &self.coords
    }

    /// Affine coordinates in the chart `last coordinate = 1`, if defined.
    pub fn affine(&self) -> Option<Coords> {
        let last = *self.coords.last().unwrap();
        if last.norm() < 1e-300 {
            return None;
        }
        Some(self.coords[..self.coords.len() - 1].iter().map(|c| c / last).collect())
    }

    /// For `k = 1`: the affine coordinate `z/w` (infinite at `[1:0]`).
    pub fn z(&self) -> Complex64 {
        self.coords[0] / self.coords[1]
    }
}

fn lift_norm(coords: &[Complex64]) -> f64 {
    let scale = coords.iter().map(|c| c.norm()).fold(0.0, f64::max);
    if scale == 0.0 || !scale.is_finite() {
        return scale;
    }
    scale * coords.iter().map(|c| (c / scale).norm_sqr()).sum::<f64>().sqrt()
}

fn canonical(mut coords: Coords, norm: f64) -> Coords {
    if (norm - 1.0).abs() > 4.0 * f64::EPSILON {
        for c in coords.iter_mut() {
            *c /= norm;
        }
    }
    let max = coords.iter().map(|c| c.norm()).fold(0.0, f64::max);
    let at = coords.iter().position(|c| c.norm() > PHASE_ZERO * max).unwrap();
    let pivot = coords[at];
    if pivot.im != 0.0 || pivot.re < 0.0 {
        let phase = pivot.conj() / pivot.norm();
        for c in coords.iter_mut() {
            *c *= phase;
        }
        coords[at] = Complex64::new(pivot.norm(), 0.0);
    }
    coords
}

/// Canonical representative of the class of `p` (idempotent).
pub fn normalize(p: &PPoint) -> PPoint {
    PPoint::from_coords(p.coords.clone()).expect("canonical points are valid")
}

/// Chordal distance `|p ∧ q| / (‖p‖‖q‖)`, in `[0, 1]`.
pub fn distance(p: &PPoint, q: &PPoint) -> f64 {
    chordal(p.coords(), q.coords())
}

/// Chordal distance between two nonzero lifts (not necessarily normalized).
pub fn chordal(p: &[Complex64], q: &[Complex64]) -> f64 {
    let mut wedge = 0.0;
    for i in 0..p.len() {
        for j in i + 1..p.len() {
            wedge += (p[i] * q[j] - p[j] * q[i]).norm_sqr();
        }
    }
    let np: f64 = p.iter().map(|c| c.norm_sqr()).sum();
    let nq: f64 = q.iter().map(|c| c.norm_sqr()).sum();
    (wedge / (np * nq)).sqrt().min(1.0)
}

/// A point drawn from the unitarily invariant (Fubini–Study) distribution.
pub fn random_point<R: Rng>(k: usize, rng: &mut R) -> PPoint {
    loop {
        let coords: Coords = (0..=k)
            .map(|_| Complex64::new(rng.sample(StandardNormal), rng.sample(StandardNormal)))
            .collect();
        if let Ok(p) = PPoint::from_coords(coords) {
            return p;
        }
    }
}

/// A chart `ψ_x : B(0, R₀) ⊂ Cᵏ → Pᵏ` centered at `x`.
#[derive(Clone, Debug)]
pub struct Chart {
    center: PPoint,
    frame: CMat,
    patch: usize,
}

impl Chart {
    pub fn center(&self) -> &PPoint {
        &self.center
    }

    /// The unitary frame whose first column lifts the center.
    pub fn frame(&self) -> &CMat {
        &self.frame
    }

    /// Index of the standard affine patch `{zᵢ ≠ 0}` that contains the center
    /// most safely.
    pub fn patch(&self) -> usize {
        self.patch
    }

    /// `ψ_x(z) = [U (1, z)]`.
    pub fn from_chart(&self, z: &[Complex64]) -> PPoint {
        let n = self.frame.nrows();
        let coords: Coords = (0..n)
            .map(|i| {
                let mut acc = self.frame[(i, 0)];
                for (j, zj) in z.iter().enumerate() {
                    acc += self.frame[(i, j + 1)] * zj;
                }
                acc
            })
            .collect();
        PPoint::from_coords(coords).expect("unitary image of (1, z) is nonzero")
    }

    /// `ψ_x⁻¹(y)`; fails when `y` is at chordal distance 1 from the center.
    pub fn to_chart(&self, y: &PPoint) -> Result<Coords> {
        self.lift_to_chart(y.coords())
    }

    pub fn lift_to_chart(&self, y: &[Complex64]) -> Result<Coords> {
        let n = self.frame.nrows();
        let w: Coords = (0..n)
            .map(|i| (0..n).map(|j| self.frame[(j, i)].conj() * y[j]).sum())
            .collect();
        let ynorm: f64 = y.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
        if w[0].norm() <= 1e-12 * ynorm {
            return Err(Error::Solver("point lies on the hyperplane at infinity of the chart".into()));
        }
        Ok(w[1..].iter().map(|c| c / w[0]).collect())
    }
}

/// The chart atlas with its measured distortion constant.
#[derive(Clone, Debug)]
pub struct ChartAtlas {
    pub k: usize,
    /// Published distortion bound: `e^{-τ/2}|z−z′| ≤ d(ψ(z),ψ(z′)) ≤ e^{τ/2}|z−z′|` on `B(0, R₀)`.
    pub tau: f64,
    pub chart_radius: f64,
    /// Number of standard affine patches (`k + 1`).
    pub patches: usize,
}

pub const DEFAULT_TAU: f64 = 0.05;
const ATLAS_SWEEP_PAIRS: usize = 10_000;

impl ChartAtlas {
    /// Builds the atlas for `Pᵏ` aiming at distortion `target_tau`: the chart
    /// radius is chosen so that the exact distortion is `target_tau / 2`, then
    /// `τ` is measured by a sampling sweep and published with a 2× margin.
    pub fn new(k: usize, target_tau: f64) -> Self {
        let chart_radius = ((target_tau / 4.0).exp() - 1.0).sqrt();
        let mut atlas = Self { k, tau: target_tau, chart_radius, patches: k + 1 };
        let measured = atlas.measure_distortion(ATLAS_SWEEP_PAIRS, 0xA71A5);
        atlas.tau = 2.0 * measured;
        atlas
    }

    /// The atlas at the default target, built once per dimension.
    pub fn standard(k: usize) -> Self {
        static CACHE: [OnceLock<ChartAtlas>; 3] = [OnceLock::new(), OnceLock::new(), OnceLock::new()];
        match CACHE.get(k) {
            Some(cell) => cell.get_or_init(|| Self::new(k, DEFAULT_TAU)).clone(),
            None => Self::new(k, DEFAULT_TAU),
        }
    }

    /// Returns the smallest `τ` such that all sampled pairs satisfy the
    /// distortion bound.
    pub fn measure_distortion(&self, pairs: usize, seed: u64) -> f64 {
        let mut rng = rng::job_rng(seed, rng::stream::ATLAS, self.k as u64);
        let mut worst: f64 = 0.0;
        let centers: Vec<PPoint> = (0..8).map(|_| random_point(self.k, &mut rng)).collect();
        for i in 0..pairs {
            let chart = self.chart_at(&centers[i % centers.len()]).expect("every point is a center");
            let z = random_ball(self.k, self.chart_radius, &mut rng);
            let z2 = random_ball(self.k, self.chart_radius, &mut rng);
            let euclid: f64 = z.iter().zip(&z2).map(|(a, b)| (a - b).norm_sqr()).sum::<f64>().sqrt();
            if euclid < 1e-9 {
                continue;
            }
            let d = distance(&chart.from_chart(&z), &chart.from_chart(&z2));
            worst = worst.max((d / euclid).ln().abs());
        }
        2.0 * worst
    }

    /// The chart `ψ_{i(x), x}` centered at `x`.
    pub fn chart_at(&self, x: &PPoint) -> Result<Chart> {
        if x.dim() != self.k {
            return Err(Error::InvalidPoint(format!("point of P^{} in an atlas of P^{}", x.dim(), self.k)));
        }
        let patch = x
            .coords()
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.norm().total_cmp(&b.1.norm()))
            .map(|(i, _)| i)
            .unwrap();
        Ok(Chart { center: x.clone(), frame: unitary_with_first_column(x.coords()), patch })
    }
}

/// Uniform sample of the ball `B(0, r) ⊂ Cᵏ`.
pub fn random_ball<R: Rng>(k: usize, r: f64, rng: &mut R) -> Coords {
    let g: Coords = (0..k)
        .map(|_| Complex64::new(rng.sample(StandardNormal), rng.sample(StandardNormal)))
        .collect();
    let norm: f64 = g.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
    let u: f64 = rng.random::<f64>();
    let radius = r * u.powf(1.0 / (2 * k) as f64);
    g.iter().map(|c| c * (radius / norm)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn normalize_examples() {
        let p = PPoint::new([c(2.0, 0.0), c(0.0, 0.0)]).unwrap();
        assert_eq!(p.coords(), &[c(1.0, 0.0), c(0.0, 0.0)]);
        let p = PPoint::new([c(0.0, 0.0), c(0.0, 3.0)]).unwrap();
        assert_eq!(p.coords(), &[c(0.0, 0.0), c(1.0, 0.0)]);
        let p = PPoint::new([c(1.0, 0.0); 3]).unwrap();
        let s = 1.0 / 3f64.sqrt();
        for z in p.coords() {
            assert!((z - c(s, 0.0)).norm() < 1e-15);
        }
        assert!(PPoint::new([c(0.0, 0.0), c(0.0, 0.0)]).is_err());
    }

    #[test]
    fn distance_examples() {
        let e0 = PPoint::new([c(1.0, 0.0), c(0.0, 0.0)]).unwrap();
        let e1 = PPoint::new([c(0.0, 0.0), c(1.0, 0.0)]).unwrap();
        assert!((distance(&e0, &e1) - 1.0).abs() < 1e-15);
        assert_eq!(distance(&e0, &e0), 0.0);
        let p = PPoint::new([c(2.0, 0.0), c(1.0, 0.0)]).unwrap();
        let q = PPoint::new([c(1.0, 0.0), c(1.0, 0.0)]).unwrap();
        assert!((distance(&p, &q) - 1.0 / 10f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn chart_centering_and_round_trip() {
        let atlas = ChartAtlas::standard(2);
        let mut rng = rng::job_rng(3, 0, 0);
        for _ in 0..200 {
            let x = random_point(2, &mut rng);
            let chart = atlas.chart_at(&x).unwrap();
            let z0 = chart.to_chart(&x).unwrap();
            assert!(z0.iter().all(|z| z.norm() < 1e-14));
            assert!(distance(&chart.from_chart(&[c(0.0, 0.0), c(0.0, 0.0)]), &x) < 1e-15);
            let z = random_ball(2, atlas.chart_radius / 2.0, &mut rng);
            let y = chart.from_chart(&z);
            let back = chart.from_chart(&chart.to_chart(&y).unwrap());
            assert!(distance(&y, &back) < 1e-12);
        }
    }

    #[test]
    fn published_tau_is_close_to_target() {
        for k in 1..=2 {
            let atlas = ChartAtlas::standard(k);
            assert!(atlas.tau <= DEFAULT_TAU * 1.0001, "tau {} above target", atlas.tau);
            assert!(atlas.tau > DEFAULT_TAU / 4.0);
        }
    }
}
