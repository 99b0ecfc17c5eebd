use num_complex::Complex64;
use smallvec::SmallVec;

use super::{eval_param, FamilySpec};
use crate::error::{Error, Result};
use crate::linalg::{self, CMat};
use crate::proj_geom::{Chart, ChartAtlas, Coords, PPoint};

type Exps = SmallVec<[u32; 3]>;

/// `f_λ` for a fixed parameter: homogeneous components with numeric
/// coefficients, ready for fast evaluation and differentiation.
#[derive(Clone, Debug)]
pub struct FiberMap {
    k: usize,
    d: u32,
    lambda: Vec<Complex64>,
    comps: Vec<Vec<(Exps, Complex64)>>,
    coeff_scale: f64,
    atlas: ChartAtlas,
}

/// Chart Jacobian `D(ψ_{f(p)}⁻¹ ∘ f_λ ∘ ψ_p)(0)` with its determinant and
/// smallest singular value.
#[derive(Clone, Debug)]
pub struct JacobianSample {
    pub point: PPoint,
    pub image: PPoint,
    pub lambda: Vec<Complex64>,
    pub matrix: CMat,
    pub det: Complex64,
    /// Smallest singular value δ(DF) = 1/‖DF⁻¹‖.
    pub delta: f64,
}

impl FiberMap {
    pub(super) fn new(spec: &FamilySpec, lambda: &[Complex64]) -> Result<Self> {
        spec.check_structure()?;
        if lambda.len() != spec.m {
            return Err(Error::Precondition(format!("parameter has {} entries, m = {}", lambda.len(), spec.m)));
        }
        if let Some((ci, why)) = spec.homogeneity_issues().into_iter().next() {
            return Err(Error::Malformed(format!("component {ci}: {why}")));
        }
        let comps: Vec<Vec<(Exps, Complex64)>> = spec
            .components
            .iter()
            .map(|c| {
                c.terms
                    .iter()
                    .map(|t| (t.monomial.iter().copied().collect(), eval_param(&t.coeff, lambda)))
                    .filter(|(_, v)| v.norm() != 0.0)
                    .collect()
            })
            .collect();
        let coeff_scale = comps.iter().flatten().map(|(_, v)| v.norm()).fold(0.0, f64::max);
        Ok(Self {
            k: spec.k,
            d: spec.d,
            lambda: lambda.to_vec(),
            comps,
            coeff_scale,
            atlas: ChartAtlas::standard(spec.k),
        })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn degree(&self) -> u32 {
        self.d
    }

    pub fn lambda(&self) -> &[Complex64] {
        &self.lambda
    }

    pub fn atlas(&self) -> &ChartAtlas {
        &self.atlas
    }

    /// Largest coefficient modulus.
    pub fn coeff_scale(&self) -> f64 {
        self.coeff_scale
    }

    fn powers(&self, v: &[Complex64]) -> Vec<Vec<Complex64>> {
        v.iter()
            .map(|&x| {
                let mut p = Vec::with_capacity(self.d as usize + 1);
                let mut acc = Complex64::new(1.0, 0.0);
                for _ in 0..=self.d {
                    p.push(acc);
                    acc *= x;
                }
                p
            })
            .collect()
    }

    /// Homogeneous lift `F̃(v)`.
    pub fn eval_lift(&self, v: &[Complex64]) -> Coords {
        let pw = self.powers(v);
        self.comps
            .iter()
            .map(|terms| {
                terms
                    .iter()
                    .map(|(e, c)| e.iter().enumerate().fold(*c, |acc, (i, &ei)| acc * pw[i][ei as usize]))
                    .sum()
            })
            .collect()
    }

    /// Lift value together with the homogeneous Jacobian `∂F̃ᵢ/∂vⱼ`.
    pub fn eval_lift_jacobian(&self, v: &[Complex64]) -> (Coords, CMat) {
        let n = self.k + 1;
        let pw = self.powers(v);
        let mut val: Coords = SmallVec::from_elem(Complex64::new(0.0, 0.0), n);
        let mut jac = CMat::zeros(n, n);
        for (ci, terms) in self.comps.iter().enumerate() {
            for (e, c) in terms {
                let full = e.iter().enumerate().fold(*c, |acc, (i, &ei)| acc * pw[i][ei as usize]);
                val[ci] += full;
                for j in 0..n {
                    if e[j] == 0 {
                        continue;
                    }
                    let part = e
                        .iter()
                        .enumerate()
                        .fold(*c * e[j] as f64, |acc, (i, &ei)| acc * pw[i][if i == j { ei as usize - 1 } else { ei as usize }]);
                    jac[(ci, j)] += part;
                }
            }
        }
        (val, jac)
    }

    /// `f_λ(p)`; fails when the lift vanishes (parameter outside the
    /// endomorphism locus).
    pub fn eval(&self, p: &PPoint) -> Result<PPoint> {
        let img = self.eval_lift(p.coords());
        let norm: f64 = img.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
        if norm <= 1e-14 * self.coeff_scale.max(1e-300) {
            return Err(Error::Solver(format!("image of {:?} vanishes: f_λ is degenerate there", p.coords())));
        }
        PPoint::from_coords(img)
    }

    /// `f_λⁿ(p)`.
    pub fn iterate(&self, p: &PPoint, n: usize) -> Result<PPoint> {
        let mut q = p.clone();
        for _ in 0..n {
            q = self.eval(&q)?;
        }
        Ok(q)
    }

    /// Forward orbit `p, f(p), …, fⁿ(p)`.
    pub fn orbit(&self, p: &PPoint, n: usize) -> Result<Vec<PPoint>> {
        let mut out = Vec::with_capacity(n + 1);
        out.push(p.clone());
        for i in 0..n {
            let next = self.eval(&out[i])?;
            out.push(next);
        }
        Ok(out)
    }

    /// Chart Jacobian at `p` in the charts centered at `p` and `f(p)`.
    pub fn chart_jacobian(&self, p: &PPoint) -> Result<JacobianSample> {
        let (img, jac) = self.eval_lift_jacobian(p.coords());
        let image = PPoint::from_coords(img.clone())
            .map_err(|_| Error::Solver("image vanishes: f_λ is degenerate there".into()))?;
        let matrix = chart_project(&self.atlas, p, &image, &img, &jac)?;
        Ok(self.sample(p.clone(), image, matrix))
    }

    fn sample(&self, point: PPoint, image: PPoint, matrix: CMat) -> JacobianSample {
        let det = linalg::det(&matrix);
        let delta = linalg::smallest_singular(&matrix);
        JacobianSample { point, image, lambda: self.lambda.clone(), matrix, det, delta }
    }

    /// Chart Jacobian of `f_λⁿ` at `p` computed directly from the chain rule
    /// on the homogeneous lift (no intermediate charts).
    pub fn chart_jacobian_iterate(&self, p: &PPoint, n: usize) -> Result<JacobianSample> {
        let dim = self.k + 1;
        let mut v: Coords = p.coords().iter().copied().collect();
        let mut total = linalg::identity(dim);
        for _ in 0..n {
            let (img, jac) = self.eval_lift_jacobian(&v);
            total = jac * total;
            // rescale lift and derivative together; the chart projection below
            // divides by the image lift, so a common factor cancels
            let s: f64 = img.iter().map(|c| c.norm()).fold(0.0, f64::max);
            if s == 0.0 {
                return Err(Error::Solver("image vanishes along the orbit".into()));
            }
            v = img.iter().map(|c| c / s).collect();
            total /= Complex64::new(s, 0.0);
        }
        let image = PPoint::from_coords(v.clone())?;
        let matrix = chart_project(&self.atlas, p, &image, &v, &total)?;
        Ok(self.sample(p.clone(), image, matrix))
    }

    /// Determinant of the homogeneous Jacobian; its zero set in `Pᵏ` is the
    /// critical set of `f_λ` (a form of degree `(k+1)(d−1)`).
    pub fn homogeneous_det(&self, v: &[Complex64]) -> Complex64 {
        linalg::det(&self.eval_lift_jacobian(v).1)
    }

    /// For `k = 1`: coefficients `a[j][i]` of `zⁱ w^{d−i}` in component `j`.
    pub fn binary_coefficients(&self) -> Option<[Vec<Complex64>; 2]> {
        if self.k != 1 {
            return None;
        }
        let d = self.d as usize;
        let mut out = [vec![Complex64::new(0.0, 0.0); d + 1], vec![Complex64::new(0.0, 0.0); d + 1]];
        for (j, terms) in self.comps.iter().enumerate() {
            for (e, c) in terms {
                out[j][e[0] as usize] += c;
            }
        }
        Some(out)
    }
}

/// Projects a homogeneous derivative `jac` at the lift `x` (with image lift
/// `img`) to chart coordinates centered at `x` and at `image`.
fn chart_project(atlas: &ChartAtlas, x: &PPoint, image: &PPoint, img: &[Complex64], jac: &CMat) -> Result<CMat> {
    let k = atlas.k;
    let src = atlas.chart_at(x)?;
    let dst = atlas.chart_at(image)?;
    let ux = src.frame();
    let uy = dst.frame();
    let w0: Complex64 = (0..=k).map(|i| uy[(i, 0)].conj() * img[i]).sum();
    if w0.norm() == 0.0 {
        return Err(Error::Solver("image chart degenerate".into()));
    }
    // the frame's first column is exactly the canonical lift of x
    let full = uy.adjoint() * jac * ux;
    let mut m = CMat::zeros(k, k);
    for i in 0..k {
        for j in 0..k {
            m[(i, j)] = full[(i + 1, j + 1)] / w0;
        }
    }
    Ok(m)
}

impl FiberMap {
    /// Chart coordinates of `fⁿ(x)` in `target` and their derivative with
    /// respect to the chart coordinates centered at `x`.
    pub fn iterate_in_chart(&self, x: &PPoint, n: usize, target: &Chart) -> Result<(Coords, CMat)> {
        let k = self.k;
        let src = self.atlas.chart_at(x)?;
        let mut v: Coords = x.coords().iter().copied().collect();
        let mut tangent = src.frame().columns(1, k).into_owned();
        for _ in 0..n {
            let (img, jac) = self.eval_lift_jacobian(&v);
            let s: f64 = img.iter().map(|c| c.norm()).fold(0.0, f64::max);
            if s == 0.0 || !s.is_finite() {
                return Err(Error::Solver("image vanishes along the orbit".into()));
            }
            tangent = jac * tangent / Complex64::new(s, 0.0);
            v = img.iter().map(|c| c / s).collect();
        }
        let u = target.frame();
        let w: Coords = (0..=k).map(|i| (0..=k).map(|j| u[(j, i)].conj() * v[j]).sum()).collect();
        let dw = u.adjoint() * tangent;
        let vnorm: f64 = v.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
        if w[0].norm() <= 1e-12 * vnorm {
            return Err(Error::Solver("iterate leaves the target chart".into()));
        }
        let coords: Coords = w[1..].iter().map(|c| c / w[0]).collect();
        let mut d = CMat::zeros(k, k);
        for i in 0..k {
            for j in 0..k {
                d[(i, j)] = (dw[(i + 1, j)] * w[0] - w[i + 1] * dw[(0, j)]) / (w[0] * w[0]);
            }
        }
        Ok((coords, d))
    }

    /// Newton's method for `fⁿ(x) = x` in moving charts. Returns the point
    /// and the final step size, or `None` when the linear system is singular
    /// or the iteration diverges.
    pub fn newton_periodic(&self, x: &PPoint, n: usize, max_iter: usize, tol: f64) -> Option<(PPoint, f64)> {
        let mut cur = x.clone();
        let mut last = f64::INFINITY;
        for _ in 0..max_iter {
            let chart = self.atlas.chart_at(&cur).ok()?;
            let (c, d) = self.iterate_in_chart(&cur, n, &chart).ok()?;
            let a = d - linalg::identity(self.k);
            let rhs: Vec<Complex64> = c.iter().map(|z| -z).collect();
            let step = linalg::solve(&a, &rhs)?;
            let size: f64 = step.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
            if !size.is_finite() || size > 10.0 {
                return None;
            }
            cur = chart.from_chart(&step);
            last = size;
            if size <= tol {
                break;
            }
        }
        Some((cur, last))
    }
}
