//! Regular meshes over parameter space `Cᵐ` (`m ≤ 2`).
//!
//! Nodes sit on a product grid of the `2m` real axes. A node may be inactive
//! (outside the polydisk the mesh discretizes); inactive nodes have no values
//! and are skipped by neighbor queries.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::family::DomainSpec;

#[derive(Clone, Debug, PartialEq)]
pub struct ParamMesh {
    m: usize,
    /// Real axes `[Re λ₁, Im λ₁, Re λ₂, Im λ₂]`, truncated to `2m`.
    axes: Vec<Vec<f64>>,
    active: Vec<bool>,
    /// Flat grid index of each active node, in grid order.
    nodes: Vec<usize>,
    /// Position of a grid index in `nodes`.
    slot: Vec<Option<usize>>,
}

fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![0.5 * (lo + hi)];
    }
    (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect()
}

impl ParamMesh {
    fn build(m: usize, axes: Vec<Vec<f64>>, keep: impl Fn(&[Complex64]) -> bool) -> Result<Self> {
        if m > 2 {
            return Err(Error::Precondition(format!("parameter meshes support m ≤ 2, got m = {m}")));
        }
        let total: usize = axes.iter().map(Vec::len).product();
        let mut mesh = Self { m, axes, active: vec![false; total], nodes: Vec::new(), slot: vec![None; total] };
        for g in 0..total {
            if keep(&mesh.lambda_of(g)) {
                mesh.active[g] = true;
                mesh.slot[g] = Some(mesh.nodes.len());
                mesh.nodes.push(g);
            }
        }
        if mesh.nodes.is_empty() {
            return Err(Error::Precondition("mesh has no active node".into()));
        }
        Ok(mesh)
    }

    /// Square grid of `n` nodes per real axis over `[c − r, c + r]` per axis,
    /// keeping the nodes in the closed polydisk of radius `r`. An odd `n`
    /// puts a node on the center.
    pub fn polydisk(center: &[Complex64], radius: f64, n: usize) -> Result<Self> {
        let axes = center
            .iter()
            .flat_map(|c| [linspace(c.re - radius, c.re + radius, n), linspace(c.im - radius, c.im + radius, n)])
            .collect();
        let center = center.to_vec();
        Self::build(center.len(), axes, move |l| {
            l.iter().zip(&center).all(|(a, b)| (a - b).norm() <= radius * (1.0 + 1e-12))
        })
    }

    /// Full rectangular grid for `m = 1`.
    pub fn rect(re: (f64, f64), im: (f64, f64), n_re: usize, n_im: usize) -> Result<Self> {
        Self::build(1, vec![linspace(re.0, re.1, n_re), linspace(im.0, im.1, n_im)], |_| true)
    }

    /// The mesh of a domain: its `U₀` polydisk at the domain resolution.
    /// For `m = 0` the mesh is the single empty parameter.
    pub fn from_domain(domain: &DomainSpec) -> Result<Self> {
        Self::polydisk(&domain.center, domain.r_u(), domain.mesh)
    }

    /// Single node at `λ`.
    pub fn point(lambda: &[Complex64]) -> Self {
        let axes = lambda.iter().flat_map(|c| [vec![c.re], vec![c.im]]).collect();
        Self::build(lambda.len(), axes, |_| true).expect("single node")
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn axes(&self) -> &[Vec<f64>] {
        &self.axes
    }

    pub fn shape(&self) -> Vec<usize> {
        self.axes.iter().map(Vec::len).collect()
    }

    /// Grid coordinates of a flat grid index (first axis fastest).
    fn grid_coords(&self, mut g: usize) -> Vec<usize> {
        self.axes
            .iter()
            .map(|a| {
                let i = g % a.len();
                g /= a.len();
                i
            })
            .collect()
    }

    fn grid_index(&self, coords: &[usize]) -> usize {
        let mut g = 0;
        for (a, &i) in self.axes.iter().zip(coords).rev() {
            g = g * a.len() + i;
        }
        g
    }

    fn lambda_of(&self, g: usize) -> Vec<Complex64> {
        let c = self.grid_coords(g);
        (0..self.m).map(|j| Complex64::new(self.axes[2 * j][c[2 * j]], self.axes[2 * j + 1][c[2 * j + 1]])).collect()
    }

    /// Parameter of active node `i`.
    pub fn node(&self, i: usize) -> Vec<Complex64> {
        self.lambda_of(self.nodes[i])
    }

    pub fn nodes(&self) -> Vec<Vec<Complex64>> {
        (0..self.len()).map(|i| self.node(i)).collect()
    }

    /// Grid coordinates of active node `i`.
    pub fn coords(&self, i: usize) -> Vec<usize> {
        self.grid_coords(self.nodes[i])
    }

    /// Active node at the given grid coordinates.
    pub fn at(&self, coords: &[usize]) -> Option<usize> {
        if coords.len() != self.axes.len() || coords.iter().zip(&self.axes).any(|(&c, a)| c >= a.len()) {
            return None;
        }
        self.slot[self.grid_index(coords)]
    }

    /// Neighbor of node `i` one step along real axis `axis` in direction `dir`.
    pub fn step(&self, i: usize, axis: usize, dir: isize) -> Option<usize> {
        let mut c = self.coords(i);
        let v = c[axis] as isize + dir;
        if v < 0 {
            return None;
        }
        c[axis] = v as usize;
        self.at(&c)
    }

    /// Active nodes adjacent along a real axis.
    pub fn neighbors(&self, i: usize) -> Vec<usize> {
        let mut out = Vec::with_capacity(2 * self.axes.len());
        for axis in 0..self.axes.len() {
            for dir in [-1, 1] {
                if let Some(j) = self.step(i, axis, dir) {
                    out.push(j);
                }
            }
        }
        out
    }

    /// Spacing along real axis `axis` (0 for a single-node axis).
    pub fn spacing(&self, axis: usize) -> f64 {
        let a = &self.axes[axis];
        if a.len() < 2 {
            0.0
        } else {
            a[1] - a[0]
        }
    }

    /// Largest spacing over all axes.
    pub fn max_spacing(&self) -> f64 {
        (0..self.axes.len()).map(|a| self.spacing(a)).fold(0.0, f64::max)
    }

    /// Active node closest to `λ`.
    pub fn nearest(&self, lambda: &[Complex64]) -> usize {
        (0..self.len())
            .min_by(|&a, &b| {
                let da: f64 = self.node(a).iter().zip(lambda).map(|(x, y)| (x - y).norm_sqr()).sum();
                let db: f64 = self.node(b).iter().zip(lambda).map(|(x, y)| (x - y).norm_sqr()).sum();
                da.total_cmp(&db)
            })
            .unwrap()
    }

    /// Cells for `m = 1`: lower-left active node and its three other corners,
    /// when all four are active.
    pub fn cells(&self) -> Vec<[usize; 4]> {
        if self.m != 1 {
            return Vec::new();
        }
        (0..self.len())
            .filter_map(|i| {
                let b = self.step(i, 0, 1)?;
                let c = self.step(b, 1, 1)?;
                let d = self.step(i, 1, 1)?;
                Some([i, b, c, d])
            })
            .collect()
    }

    /// Breadth-first order from `root` over active nodes, with parents.
    pub fn bfs(&self, root: usize) -> Vec<(usize, Option<usize>)> {
        let mut seen = vec![false; self.len()];
        let mut out = vec![(root, None)];
        seen[root] = true;
        let mut head = 0;
        while head < out.len() {
            let i = out[head].0;
            head += 1;
            for j in self.neighbors(i) {
                if !seen[j] {
                    seen[j] = true;
                    out.push((j, Some(i)));
                }
            }
        }
        out
    }

    /// At most `count` active nodes spread evenly over the mesh.
    pub fn subsample(&self, count: usize) -> Vec<usize> {
        if count >= self.len() {
            return (0..self.len()).collect();
        }
        let mut out: Vec<usize> = (0..count).map(|i| i * self.len() / count).collect();
        out.dedup();
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn polydisk_mesh_centered() {
        let mesh = ParamMesh::polydisk(&[Complex64::new(0.5, -0.25)], 0.2, 21).unwrap();
        let center = mesh.nearest(&[Complex64::new(0.5, -0.25)]);
        assert!((mesh.node(center)[0] - Complex64::new(0.5, -0.25)).norm() < 1e-15);
        for i in 0..mesh.len() {
            assert!((mesh.node(i)[0] - Complex64::new(0.5, -0.25)).norm() <= 0.2 + 1e-12);
        }
        assert_eq!(mesh.bfs(center).len(), mesh.len());
        assert_eq!(mesh.neighbors(center).len(), 4);
    }

    #[test]
    fn rect_mesh_cells_and_steps() {
        let mesh = ParamMesh::rect((-1.0, 1.0), (0.0, 1.0), 5, 3).unwrap();
        assert_eq!(mesh.len(), 15);
        assert_eq!(mesh.cells().len(), 8);
        let i = mesh.at(&[2, 1]).unwrap();
        assert_eq!(mesh.node(i)[0], Complex64::new(0.0, 0.5));
        assert_eq!(mesh.step(i, 0, 1), mesh.at(&[3, 1]));
        assert_eq!(mesh.step(mesh.at(&[0, 0]).unwrap(), 0, -1), None);
    }

    #[test]
    fn zero_dimensional_mesh() {
        let mesh = ParamMesh::polydisk(&[], 0.2, 7).unwrap();
        assert_eq!(mesh.len(), 1);
        assert!(mesh.node(0).is_empty());
        assert!(mesh.neighbors(0).is_empty());
    }
}
