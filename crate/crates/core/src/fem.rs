//! Periodic P1 finite elements for the two cell problems.

use rayon::prelude::*;

use crate::coeff::SigmaPair;
use crate::error::{Error, Result};
use crate::geometry::Vec2;
use crate::mesh::{CellMesh, Region};

/// Compressed sparse row matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct CsrMatrix {
    pub n: usize,
    pub row_ptr: Vec<usize>,
    pub col_idx: Vec<usize>,
    pub values: Vec<f64>,
}

impl CsrMatrix {
    /// Builds the sparsity pattern from `(row, col)` pairs, with zero values.
    pub fn from_pattern(n: usize, mut entries: Vec<(usize, usize)>) -> CsrMatrix {
        entries.sort_unstable();
        entries.dedup();
        let mut row_ptr = vec![0usize; n + 1];
        for &(r, _) in &entries {
            row_ptr[r + 1] += 1;
        }
        for i in 0..n {
            row_ptr[i + 1] += row_ptr[i];
        }
        let col_idx = entries.iter().map(|&(_, c)| c).collect::<Vec<_>>();
        let values = vec![0.0; col_idx.len()];
        CsrMatrix {
            n,
            row_ptr,
            col_idx,
            values,
        }
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    fn position(&self, row: usize, col: usize) -> Option<usize> {
        let cols = &self.col_idx[self.row_ptr[row]..self.row_ptr[row + 1]];
        cols.binary_search(&col).ok().map(|k| self.row_ptr[row] + k)
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.position(row, col).map_or(0.0, |k| self.values[k])
    }

    /// Adds `v` to an entry that is part of the pattern.
    pub fn add(&mut self, row: usize, col: usize, v: f64) {
        let k = self
            .position(row, col)
            .expect("entry outside the sparsity pattern");
        self.values[k] += v;
    }

    pub fn mul_vec(&self, x: &[f64], y: &mut [f64]) {
        y.par_iter_mut().with_min_len(4096).enumerate().for_each(|(i, yi)| {
            let mut acc = 0.0;
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                acc += self.values[k] * x[self.col_idx[k]];
            }
            *yi = acc;
        });
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.get(i, i)).collect()
    }

    pub fn row_sums(&self) -> Vec<f64> {
        (0..self.n)
            .map(|i| self.values[self.row_ptr[i]..self.row_ptr[i + 1]].iter().sum())
            .collect()
    }

    pub fn is_symmetric(&self, tol: f64) -> bool {
        (0..self.n).all(|i| {
            (self.row_ptr[i]..self.row_ptr[i + 1]).all(|k| {
                let j = self.col_idx[k];
                (self.values[k] - self.get(j, i)).abs() <= tol * self.values[k].abs().max(1.0)
            })
        })
    }
}

pub trait Preconditioner: Sync {
    fn apply(&self, r: &[f64], z: &mut [f64]);
}

/// Diagonal scaling.
pub struct Jacobi {
    inv_diag: Vec<f64>,
}

impl Jacobi {
    pub fn new(a: &CsrMatrix) -> Jacobi {
        let inv_diag = a
            .diagonal()
            .into_iter()
            .map(|d| if d > 0.0 { 1.0 / d } else { 1.0 })
            .collect();
        Jacobi { inv_diag }
    }
}

impl Preconditioner for Jacobi {
    fn apply(&self, r: &[f64], z: &mut [f64]) {
        for ((zi, ri), di) in z.iter_mut().zip(r).zip(&self.inv_diag) {
            *zi = ri * di;
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CgOptions {
    pub rel_tol: f64,
    pub max_iter: usize,
}

impl Default for CgOptions {
    fn default() -> Self {
        CgOptions {
            rel_tol: 1e-10,
            max_iter: 10_000,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct CgStats {
    pub iterations: usize,
    pub residual: f64,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn remove_mean(v: &mut [f64]) {
    let m = v.iter().sum::<f64>() / v.len() as f64;
    v.iter_mut().for_each(|x| *x -= m);
}

/// Preconditioned CG for a singular SPD system whose kernel is the constants.
/// The right-hand side and every preconditioned residual are projected onto
/// sum-zero vectors. `observer` sees each iterate.
pub fn pcg_singular(
    a: &CsrMatrix,
    b: &[f64],
    x0: Option<&[f64]>,
    pre: &dyn Preconditioner,
    opts: CgOptions,
    mut observer: Option<&mut dyn FnMut(usize, &[f64])>,
) -> Result<(Vec<f64>, CgStats)> {
    let n = a.n;
    let mut rhs = b.to_vec();
    remove_mean(&mut rhs);
    let b_norm = dot(&rhs, &rhs).sqrt();
    if b_norm <= 1e-300 {
        return Ok((vec![0.0; n], CgStats::default()));
    }
    let mut x = x0.map_or_else(|| vec![0.0; n], |x| x.to_vec());
    let mut ax = vec![0.0; n];
    a.mul_vec(&x, &mut ax);
    let mut r: Vec<f64> = rhs.iter().zip(&ax).map(|(b, ax)| b - ax).collect();
    let mut z = vec![0.0; n];
    pre.apply(&r, &mut z);
    remove_mean(&mut z);
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut q = vec![0.0; n];
    let mut residual = dot(&r, &r).sqrt() / b_norm;
    let mut it = 0;
    while residual > opts.rel_tol {
        if it >= opts.max_iter {
            return Err(Error::Solver {
                iterations: it,
                residual,
            });
        }
        a.mul_vec(&p, &mut q);
        let pq = dot(&p, &q);
        if !(pq > 0.0) {
            return Err(Error::Solver {
                iterations: it,
                residual,
            });
        }
        let alpha = rz / pq;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * q[i];
        }
        it += 1;
        if let Some(obs) = observer.as_mut() {
            obs(it, &x);
        }
        residual = dot(&r, &r).sqrt() / b_norm;
        pre.apply(&r, &mut z);
        remove_mean(&mut z);
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    Ok((
        x,
        CgStats {
            iterations: it,
            residual,
        },
    ))
}

/// Per-triangle geometric data of the P1 space on a periodic mesh.
#[derive(Clone, Debug)]
pub struct P1Space {
    pub dofs: Vec<[usize; 3]>,
    pub areas: Vec<f64>,
    /// Gradients of the three local hat functions.
    pub gradients: Vec<[Vec2; 3]>,
    pub lumped_mass: Vec<f64>,
    pub n_dofs: usize,
}

impl P1Space {
    pub fn new(mesh: &CellMesh) -> P1Space {
        let nt = mesh.triangles.len();
        let mut dofs = Vec::with_capacity(nt);
        let mut areas = Vec::with_capacity(nt);
        let mut gradients = Vec::with_capacity(nt);
        let mut lumped_mass = vec![0.0; mesh.dof_count];
        for (t, tri) in mesh.triangles.iter().enumerate() {
            let [p0, p1, p2] = mesh.triangle_points(t);
            let two_area = (p1 - p0).perp(&(p2 - p0));
            let grad = |a: Vec2, b: Vec2| Vec2::new(a.y - b.y, b.x - a.x) / two_area;
            let g = [grad(p1, p2), grad(p2, p0), grad(p0, p1)];
            let d = tri.vertices.map(|v| mesh.dof_of_vertex[v]);
            let area = 0.5 * two_area;
            for &k in &d {
                lumped_mass[k] += area / 3.0;
            }
            dofs.push(d);
            areas.push(area);
            gradients.push(g);
        }
        P1Space {
            dofs,
            areas,
            gradients,
            lumped_mass,
            n_dofs: mesh.dof_count,
        }
    }

    /// Gradient of the P1 function with DOF values `u` on triangle `t`.
    pub fn gradient(&self, u: &[f64], t: usize) -> Vec2 {
        let d = self.dofs[t];
        let g = self.gradients[t];
        g[0] * u[d[0]] + g[1] * u[d[1]] + g[2] * u[d[2]]
    }

    /// Shifts `u` so its integral mean (lumped mass) vanishes.
    pub fn remove_integral_mean(&self, u: &mut [f64]) {
        let total: f64 = self.lumped_mass.iter().sum();
        let mean = u.iter().zip(&self.lumped_mass).map(|(a, m)| a * m).sum::<f64>() / total;
        u.iter_mut().for_each(|a| *a -= mean);
    }

    fn pattern(&self) -> Vec<(usize, usize)> {
        let mut entries = Vec::with_capacity(9 * self.dofs.len());
        for d in &self.dofs {
            for &i in d {
                for &j in d {
                    entries.push((i, j));
                }
            }
        }
        entries
    }
}

/// Triangle conductivities: the average of the phase field over the three
/// edge midpoints. Perforated meshes carry matrix triangles only.
pub fn element_conductivities(mesh: &CellMesh, sigma: &SigmaPair) -> Result<Vec<f64>> {
    (0..mesh.triangles.len())
        .into_par_iter()
        .with_min_len(1024)
        .map(|t| {
            let tri = &mesh.triangles[t];
            let field = match tri.region {
                Region::Matrix => &sigma.matrix,
                Region::Inclusion => sigma.inclusion.as_ref().ok_or_else(|| {
                    Error::Unsupported("inclusion triangles need an inclusion conductivity".into())
                })?,
            };
            let [a, b, c] = mesh.triangle_points(t);
            let mut sum = 0.0;
            for m in [(a + b) * 0.5, (b + c) * 0.5, (c + a) * 0.5] {
                sum += field.eval(m)?;
            }
            Ok(sum / 3.0)
        })
        .collect()
}

/// Stiffness matrix and data shared by all solves on one mesh.
#[derive(Clone, Debug)]
pub struct CellProblem {
    pub space: P1Space,
    pub sigma_bar: Vec<f64>,
    pub matrix: CsrMatrix,
    pub options: CgOptions,
}

impl CellProblem {
    pub fn new(mesh: &CellMesh, sigma: &SigmaPair) -> Result<CellProblem> {
        let space = P1Space::new(mesh);
        let sigma_bar = element_conductivities(mesh, sigma)?;
        let matrix = assemble_stiffness(&space, &sigma_bar);
        Ok(CellProblem {
            space,
            sigma_bar,
            matrix,
            options: CgOptions::default(),
        })
    }

    /// Load vector of the cell problem for direction `dir`.
    pub fn cell_rhs(&self, dir: usize) -> Vec<f64> {
        let mut b = vec![0.0; self.space.n_dofs];
        for t in 0..self.space.dofs.len() {
            let s = self.sigma_bar[t] * self.space.areas[t];
            for k in 0..3 {
                b[self.space.dofs[t][k]] -= s * self.space.gradients[t][k][dir];
            }
        }
        b
    }

    /// Solves `K u = b` for a sum-zero load and returns the mean-free solution.
    pub fn solve(&self, b: &[f64], x0: Option<&[f64]>) -> Result<(Vec<f64>, CgStats)> {
        let pre = Jacobi::new(&self.matrix);
        let (mut u, stats) = pcg_singular(&self.matrix, b, x0, &pre, self.options, None)?;
        self.space.remove_integral_mean(&mut u);
        Ok((u, stats))
    }

    pub fn solve_cell_problems(&self, warm: Option<&CellSolutions>) -> Result<CellSolutions> {
        let run = |dir: usize| {
            let b = self.cell_rhs(dir);
            let x0 = warm.map(|w| w.w[dir].as_slice());
            self.solve(&b, x0)
        };
        let (r0, r1) = rayon::join(|| run(0), || run(1));
        let (w0, s0) = r0?;
        let (w1, s1) = r1?;
        Ok(CellSolutions {
            w: [w0, w1],
            stats: [s0, s1],
        })
    }
}

pub fn assemble_stiffness(space: &P1Space, sigma_bar: &[f64]) -> CsrMatrix {
    let mut k = CsrMatrix::from_pattern(space.n_dofs, space.pattern());
    for t in 0..space.dofs.len() {
        let s = sigma_bar[t] * space.areas[t];
        let g = space.gradients[t];
        let d = space.dofs[t];
        for a in 0..3 {
            for b in 0..3 {
                k.add(d[a], d[b], s * g[a].dot(&g[b]));
            }
        }
    }
    k
}

/// Correctors `w_1`, `w_2` as periodic DOF vectors.
#[derive(Clone, Debug)]
pub struct CellSolutions {
    pub w: [Vec<f64>; 2],
    pub stats: [CgStats; 2],
}

impl CellSolutions {
    /// `e_dir + grad w_dir` on triangle `t`.
    pub fn phi_gradient(&self, space: &P1Space, dir: usize, t: usize) -> Vec2 {
        let mut g = space.gradient(&self.w[dir], t);
        g[dir] += 1.0;
        g
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coeff::CoefficientField;
    use crate::geometry::RadialShape;
    use crate::mesh::Case;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn problem(level: u32) -> (CellMesh, CellProblem) {
        let s = RadialShape::from_coeffs(vec![0.25, 0.02, -0.01, 0.01, 0.0, 0.0, 0.004]).unwrap();
        let mesh = CellMesh::build(&s, Case::Mixture, level).unwrap();
        let sigma = SigmaPair::constants(1.0, 10.0);
        let p = CellProblem::new(&mesh, &sigma).unwrap();
        (mesh, p)
    }

    #[test]
    fn stiffness_is_symmetric_with_zero_row_sums() {
        let (_, p) = problem(2);
        assert!(p.matrix.is_symmetric(1e-14));
        let scale = p.matrix.diagonal().iter().cloned().fold(0.0, f64::max);
        for s in p.matrix.row_sums() {
            assert!(s.abs() <= 1e-12 * scale);
        }
    }

    #[test]
    fn stiffness_is_positive_off_constants() {
        let (_, p) = problem(2);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut y = vec![0.0; p.matrix.n];
        for _ in 0..20 {
            let mut x: Vec<f64> = (0..p.matrix.n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            remove_mean(&mut x);
            p.matrix.mul_vec(&x, &mut y);
            assert!(dot(&x, &y) > 0.0);
        }
        let ones = vec![1.0; p.matrix.n];
        p.matrix.mul_vec(&ones, &mut y);
        assert!(dot(&y, &y).sqrt() < 1e-12);
    }

    #[test]
    fn cell_rhs_sums_to_zero() {
        let (_, p) = problem(2);
        for dir in 0..2 {
            assert!(p.cell_rhs(dir).iter().sum::<f64>().abs() < 1e-13);
        }
    }

    #[test]
    fn zero_load_gives_zero_solution() {
        let (_, p) = problem(1);
        let (u, stats) = p.solve(&vec![0.0; p.matrix.n], None).unwrap();
        assert!(u.iter().all(|&v| v == 0.0));
        assert_eq!(stats.iterations, 0);
    }

    #[test]
    fn constant_conductivity_has_trivial_correctors() {
        let s = RadialShape::circle(2, 0.3).unwrap();
        let mesh = CellMesh::build(&s, Case::Mixture, 3).unwrap();
        let p = CellProblem::new(&mesh, &SigmaPair::constants(1.0, 1.0)).unwrap();
        let sol = p.solve_cell_problems(None).unwrap();
        for w in &sol.w {
            assert!(w.iter().all(|v| v.abs() < 1e-12));
        }
    }

    #[test]
    fn solution_satisfies_galerkin_equations() {
        let (_, p) = problem(3);
        let sol = p.solve_cell_problems(None).unwrap();
        for dir in 0..2 {
            let b = p.cell_rhs(dir);
            let mut kw = vec![0.0; p.matrix.n];
            p.matrix.mul_vec(&sol.w[dir], &mut kw);
            let res: f64 = kw.iter().zip(&b).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
            let bn: f64 = b.iter().map(|v| v * v).sum::<f64>().sqrt();
            assert!(res <= 1e-9 * bn, "{res} vs {bn}");
            let mean: f64 = sol.w[dir]
                .iter()
                .zip(&p.space.lumped_mass)
                .map(|(a, m)| a * m)
                .sum();
            assert!(mean.abs() < 1e-14);
        }
    }

    #[test]
    fn cg_energy_decreases() {
        let (_, p) = problem(3);
        let b = p.cell_rhs(0);
        let mut energies = Vec::new();
        let mut ax = vec![0.0; p.matrix.n];
        let mut obs = |_: usize, x: &[f64]| {
            p.matrix.mul_vec(x, &mut ax);
            energies.push(0.5 * dot(x, &ax) - dot(&b, x));
        };
        let pre = Jacobi::new(&p.matrix);
        pcg_singular(&p.matrix, &b, None, &pre, CgOptions::default(), Some(&mut obs)).unwrap();
        assert!(energies.len() > 5);
        for w in energies.windows(2) {
            assert!(w[1] <= w[0] + 1e-13 * w[0].abs());
        }
    }

    #[test]
    fn iteration_cap_is_reported() {
        let (_, p) = problem(3);
        let pre = Jacobi::new(&p.matrix);
        let opts = CgOptions {
            rel_tol: 1e-10,
            max_iter: 3,
        };
        let err = pcg_singular(&p.matrix, &p.cell_rhs(0), None, &pre, opts, None).unwrap_err();
        assert!(matches!(err, Error::Solver { iterations: 3, .. }));
    }

    #[test]
    fn element_conductivity_uses_edge_midpoints() {
        let s = RadialShape::circle(2, 0.25).unwrap();
        let mesh = CellMesh::build(&s, Case::Mixture, 1).unwrap();
        let sigma = SigmaPair::mixture(
            CoefficientField::parse("1 + x").unwrap(),
            CoefficientField::parse("x*y").unwrap(),
        );
        let bar = element_conductivities(&mesh, &sigma).unwrap();
        for (t, tri) in mesh.triangles.iter().enumerate() {
            let [a, b, c] = mesh.triangle_points(t);
            let mids = [(a + b) / 2.0, (b + c) / 2.0, (c + a) / 2.0];
            let f = |p: Vec2| match tri.region {
                Region::Matrix => 1.0 + p.x,
                Region::Inclusion => p.x * p.y,
            };
            let expect = mids.iter().map(|&m| f(m)).sum::<f64>() / 3.0;
            assert!((bar[t] - expect).abs() < 1e-14);
        }
    }

    #[test]
    fn perforated_needs_no_inclusion_field() {
        let s = RadialShape::circle(2, 0.25).unwrap();
        let mesh = CellMesh::build(&s, Case::Perforated, 2).unwrap();
        let p = CellProblem::new(&mesh, &SigmaPair::perforated(CoefficientField::Constant(1.0)));
        assert!(p.is_ok());
        let mix = CellMesh::build(&s, Case::Mixture, 1).unwrap();
        let err = CellProblem::new(&mix, &SigmaPair::perforated(CoefficientField::Constant(1.0)));
        assert!(err.is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]
        #[test]
        fn pcg_solves_random_loads(seed in 0u64..1000) {
            let (_, p) = problem(1);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut x: Vec<f64> = (0..p.matrix.n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            remove_mean(&mut x);
            let mut b = vec![0.0; p.matrix.n];
            p.matrix.mul_vec(&x, &mut b);
            let pre = Jacobi::new(&p.matrix);
            let (u, _) = pcg_singular(&p.matrix, &b, None, &pre, CgOptions::default(), None).unwrap();
            let mut diff: Vec<f64> = u.iter().zip(&x).map(|(a, b)| a - b).collect();
            remove_mean(&mut diff);
            let err = dot(&diff, &diff).sqrt() / dot(&x, &x).sqrt();
            prop_assert!(err < 1e-7, "{}", err);
        }
    }
}
