//! Shape derivatives of the effective tensor and of the matching objective.
//!
//! Interface traces of `phi_i = x_i + w_i` are read off the P1 solution: the
//! tangential derivative from nodal values along each interface segment, the
//! one-sided normal derivatives from the adjacent element gradients. All
//! boundary integrals use one midpoint node per segment.

use nalgebra::Matrix2;
use rayon::prelude::*;
use serde::Serialize;

use crate::coeff::SigmaPair;
use crate::error::{Error, Result};
use crate::fem::{CellProblem, CellSolutions};
use crate::geometry::{RadialShape, Vec2};
use crate::homogenize::{matching_objective, CellState, TargetTensor};
use crate::mesh::{Case, CellMesh};

/// Traces at one interface quadrature node.
#[derive(Clone, Debug, PartialEq)]
pub struct TraceNode {
    pub phi: f64,
    pub point: Vec2,
    pub normal: Vec2,
    pub weight: f64,
    /// Matrix-side conductivity.
    pub sigma_out: f64,
    /// Inclusion-side conductivity (mixture only).
    pub sigma_in: Option<f64>,
    /// Tangential derivative of `phi_1`, `phi_2` along the counterclockwise tangent.
    pub tangential: [f64; 2],
    /// Normal derivatives from the matrix side.
    pub normal_out: [f64; 2],
    /// Normal derivatives from the inclusion side (mixture only).
    pub normal_in: Option<[f64; 2]>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct InterfaceTraces {
    pub case: Case,
    pub nodes: Vec<TraceNode>,
}

impl InterfaceTraces {
    /// Normal velocity `<h, n>` at every node for a coefficient direction.
    pub fn normal_velocity(&self, shape: &RadialShape, direction: &[f64]) -> Vec<f64> {
        self.nodes
            .iter()
            .map(|n| {
                RadialShape::direction_profile(direction, n.phi) * shape.radial_normal_factor(n.phi)
            })
            .collect()
    }
}

fn vertex_phi(mesh: &CellMesh, w: &[f64], v: usize, dir: usize) -> f64 {
    w[mesh.dof_of_vertex[v]] + mesh.vertices[v][dir]
}

fn element_phi_gradient(mesh: &CellMesh, w: &[f64], t: usize, dir: usize) -> Vec2 {
    let [p0, p1, p2] = mesh.triangle_points(t);
    let v = mesh.triangles[t].vertices;
    let f = v.map(|k| vertex_phi(mesh, w, k, dir));
    let two_area = (p1 - p0).perp(&(p2 - p0));
    let g = |a: Vec2, b: Vec2| Vec2::new(a.y - b.y, b.x - a.x) / two_area;
    g(p1, p2) * f[0] + g(p2, p0) * f[1] + g(p0, p1) * f[2]
}

pub fn recover_interface_traces(
    mesh: &CellMesh,
    solutions: &CellSolutions,
    sigma: &SigmaPair,
) -> Result<InterfaceTraces> {
    let case = mesh.case();
    let inclusion_field = match case {
        Case::Mixture => Some(sigma.inclusion.as_ref().ok_or_else(|| {
            Error::Unsupported("mixture traces need an inclusion conductivity".into())
        })?),
        Case::Perforated => None,
    };
    let quad = mesh.interface_quadrature();
    let mut nodes = Vec::with_capacity(quad.len());
    for q in quad {
        let edge = &mesh.interface_edges[q.edge];
        let [a, b] = edge.vertices;
        let len = (mesh.vertices[b] - mesh.vertices[a]).norm();
        let tangential = [0, 1].map(|d| {
            (vertex_phi(mesh, &solutions.w[d], b, d) - vertex_phi(mesh, &solutions.w[d], a, d))
                / len
        });
        let normal_out = [0, 1].map(|d| {
            element_phi_gradient(mesh, &solutions.w[d], edge.matrix_triangle, d).dot(&q.normal)
        });
        let normal_in = match case {
            Case::Mixture => {
                let t = edge.inclusion_triangle.ok_or_else(|| {
                    Error::Mesh("interface segment without an inclusion-side triangle".into())
                })?;
                Some([0, 1].map(|d| {
                    element_phi_gradient(mesh, &solutions.w[d], t, d).dot(&q.normal)
                }))
            }
            Case::Perforated => None,
        };
        let sigma_in = match inclusion_field {
            Some(f) => Some(f.eval(q.point)?),
            None => None,
        };
        nodes.push(TraceNode {
            phi: q.phi,
            point: q.point,
            normal: q.normal,
            weight: q.weight,
            sigma_out: sigma.matrix.eval(q.point)?,
            sigma_in,
            tangential,
            normal_out,
            normal_in,
        });
    }
    Ok(InterfaceTraces { case, nodes })
}

/// Density of `a'_ij` per unit normal velocity at one node.
fn entry_density(node: &TraceNode) -> Matrix2<f64> {
    let t = node.tangential;
    let mut m = Matrix2::zeros();
    match (node.sigma_in, node.normal_in) {
        (Some(s_in), Some(n_in)) => {
            // jump [sigma] = sigma_out - sigma_in, with an overall minus sign
            let jump = node.sigma_out - s_in;
            let n_out = node.normal_out;
            for i in 0..2 {
                for j in 0..2 {
                    let normal = 0.5 * (n_in[i] * n_out[j] + n_in[j] * n_out[i]);
                    m[(i, j)] = -jump * (t[i] * t[j] + normal);
                }
            }
        }
        _ => {
            for i in 0..2 {
                for j in 0..2 {
                    m[(i, j)] = -node.sigma_out * t[i] * t[j];
                }
            }
        }
    }
    m
}

/// `a'_ij[h]` for the normal velocity samples `velocity` (one per node).
pub fn entry_shape_gradient(traces: &InterfaceTraces, velocity: &[f64]) -> Result<Matrix2<f64>> {
    if velocity.len() != traces.nodes.len() {
        return Err(Error::Unsupported(format!(
            "{} velocity samples for {} interface nodes",
            velocity.len(),
            traces.nodes.len()
        )));
    }
    Ok(traces
        .nodes
        .iter()
        .zip(velocity)
        .map(|(n, v)| entry_density(n) * (n.weight * v))
        .fold(Matrix2::zeros(), |a, b| a + b))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ShapeGradient {
    /// `dJ / da_k` for every design coefficient.
    pub objective: Vec<f64>,
    /// `d a_ij / d a_k` as `[a11, a12, a22]` per coefficient.
    pub entries: Vec<[f64; 3]>,
}

impl ShapeGradient {
    pub fn norm(&self) -> f64 {
        self.objective.iter().map(|g| g * g).sum::<f64>().sqrt()
    }
}

/// Gradient of `J = 1/2 |A - B|_F^2` over the Fourier coefficients.
pub fn objective_gradient(
    shape: &RadialShape,
    traces: &InterfaceTraces,
    residual: &Matrix2<f64>,
) -> Result<ShapeGradient> {
    let n = shape.len();
    let per: Vec<Matrix2<f64>> = (0..n)
        .into_par_iter()
        .map(|k| {
            let mut dir = vec![0.0; n];
            dir[k] = 1.0;
            entry_shape_gradient(traces, &traces.normal_velocity(shape, &dir))
        })
        .collect::<Result<_>>()?;
    let objective = per.iter().map(|d| residual.component_mul(d).sum()).collect();
    let entries = per.iter().map(|d| [d[(0, 0)], d[(0, 1)], d[(1, 1)]]).collect();
    Ok(ShapeGradient { objective, entries })
}

/// Which shape derivative drives the objective gradient.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GradientMethod {
    /// Interface integrals of the recovered traces.
    #[default]
    Boundary,
    /// Exact derivative of the discrete tensor (see [`discrete_tensor_derivatives`]).
    Discrete,
}

/// Objective gradient from the exact derivatives of the discrete tensor.
pub fn discrete_objective_gradient(
    state: &CellState,
    sigma: &SigmaPair,
    residual: &Matrix2<f64>,
) -> Result<ShapeGradient> {
    let n = state.mesh.shape().len();
    let per: Vec<Matrix2<f64>> = (0..n)
        .map(|k| {
            let mut dir = vec![0.0; n];
            dir[k] = 1.0;
            discrete_tensor_derivatives(state, sigma, &dir, false).map(|d| d.first)
        })
        .collect::<Result<_>>()?;
    let objective = per.iter().map(|d| residual.component_mul(d).sum()).collect();
    let entries = per.iter().map(|d| [d[(0, 0)], d[(0, 1)], d[(1, 1)]]).collect();
    Ok(ShapeGradient { objective, entries })
}

/// Solved state plus objective value and gradient for one shape.
#[derive(Clone, Debug)]
pub struct Evaluation {
    pub state: CellState,
    pub objective: f64,
    pub residual: Matrix2<f64>,
    pub traces: InterfaceTraces,
    pub gradient: ShapeGradient,
}

#[allow(clippy::too_many_arguments)]
pub fn evaluate(
    shape: &RadialShape,
    case: Case,
    level: u32,
    sigma: &SigmaPair,
    target: &TargetTensor,
    method: GradientMethod,
    warm: Option<&CellSolutions>,
) -> Result<Evaluation> {
    let state = CellState::solve(shape, case, level, sigma, warm)?;
    let (objective, residual) = matching_objective(&state.tensor, target);
    let traces = recover_interface_traces(&state.mesh, &state.solutions, sigma)?;
    let gradient = match method {
        GradientMethod::Boundary => objective_gradient(shape, &traces, &residual)?,
        GradientMethod::Discrete => discrete_objective_gradient(&state, sigma, &residual)?,
    };
    Ok(Evaluation {
        state,
        objective,
        residual,
        traces,
        gradient,
    })
}

/// Central-difference gradient of the discrete objective; every perturbed
/// shape is meshed and solved from scratch.
pub fn finite_difference_gradient(
    shape: &RadialShape,
    case: Case,
    level: u32,
    sigma: &SigmaPair,
    target: &TargetTensor,
    step: f64,
) -> Result<ShapeGradient> {
    let all: Vec<usize> = (0..shape.len()).collect();
    finite_difference_partials(shape, case, level, sigma, target, step, &all)
}

/// Central differences for the listed coefficients only, in list order.
#[allow(clippy::too_many_arguments)]
pub fn finite_difference_partials(
    shape: &RadialShape,
    case: Case,
    level: u32,
    sigma: &SigmaPair,
    target: &TargetTensor,
    step: f64,
    indices: &[usize],
) -> Result<ShapeGradient> {
    let n = shape.len();
    if let Some(&index) = indices.iter().find(|&&k| k >= n) {
        return Err(Error::CoefficientIndex {
            index,
            degree: shape.degree(),
        });
    }
    let per: Vec<(f64, [f64; 3])> = indices
        .par_iter()
        .map(|&k| {
            let mut dir = vec![0.0; n];
            dir[k] = 1.0;
            let eval = |s: f64| -> Result<(f64, Matrix2<f64>)> {
                let sh = shape.stepped(&dir, s)?;
                sh.ensure_valid()?;
                let st = CellState::solve(&sh, case, level, sigma, None)?;
                let (j, _) = matching_objective(&st.tensor, target);
                Ok((j, st.tensor.matrix()))
            };
            let (jp, ap) = eval(step)?;
            let (jm, am) = eval(-step)?;
            let d = (ap - am) / (2.0 * step);
            Ok(((jp - jm) / (2.0 * step), [d[(0, 0)], d[(0, 1)], d[(1, 1)]]))
        })
        .collect::<Result<_>>()?;
    Ok(ShapeGradient {
        objective: per.iter().map(|p| p.0).collect(),
        entries: per.iter().map(|p| p.1).collect(),
    })
}

/// `|a - b|_2 / |b|_2`.
pub fn relative_l2_error(a: &[f64], b: &[f64]) -> f64 {
    let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum();
    let den: f64 = b.iter().map(|y| y * y).sum();
    (num / den).sqrt()
}

fn require_perforated(mesh: &CellMesh, what: &str) -> Result<()> {
    if mesh.case() != Case::Perforated {
        return Err(Error::Unsupported(format!("{what} is implemented for perforated cells only")));
    }
    Ok(())
}

/// Local shape derivative `phi_i'` of the perforated state: harmonic in the
/// matrix, periodic, with Neumann data `div_tau(<h, n> grad_tau phi_i)`.
/// Weak form `int sigma grad phi'.grad v = int <h, n> sigma grad_tau phi_i grad_tau v`.
pub fn solve_local_derivative(
    mesh: &CellMesh,
    problem: &CellProblem,
    traces: &InterfaceTraces,
    velocity: &[f64],
    i: usize,
) -> Result<Vec<f64>> {
    require_perforated(mesh, "the local shape derivative")?;
    let mut b = vec![0.0; problem.space.n_dofs];
    for ((edge, node), v) in mesh.interface_edges.iter().zip(&traces.nodes).zip(velocity) {
        let [a, c] = edge.vertices;
        let len = (mesh.vertices[c] - mesh.vertices[a]).norm();
        let flux = node.weight * v * node.sigma_out * node.tangential[i] / len;
        b[mesh.dof_of_vertex[a]] -= flux;
        b[mesh.dof_of_vertex[c]] += flux;
    }
    Ok(problem.solve(&b, None)?.0)
}

/// Radial extension `h(y) = dr(theta) chi(rho - r(theta)) e_r` of a coefficient
/// direction; `chi` is a smooth bump equal to one with zero slope on the
/// boundary and vanishing at distance 0.1.
#[derive(Clone, Debug)]
pub struct RadialExtension<'a> {
    pub shape: &'a RadialShape,
    pub direction: &'a [f64],
}

impl RadialExtension<'_> {
    pub const CUTOFF: f64 = 0.1;

    fn chi(d: f64) -> f64 {
        let t = (d / Self::CUTOFF).abs();
        if t >= 1.0 {
            0.0
        } else {
            (1.0 - t * t).powi(2)
        }
    }

    pub fn at(&self, y: Vec2) -> Vec2 {
        let d = y - crate::geometry::center();
        let rho = d.norm();
        if rho == 0.0 {
            return Vec2::zeros();
        }
        let theta = d.y.atan2(d.x);
        let dr = RadialShape::direction_profile(self.direction, theta);
        dr * Self::chi(rho - self.shape.radius(theta)) * d / rho
    }

    /// `div h` on the boundary, where the cutoff is flat: `dr / r`.
    pub fn boundary_divergence(&self, phi: f64) -> f64 {
        RadialShape::direction_profile(self.direction, phi) / self.shape.radius(phi)
    }
}

/// Area-weighted nodal average of the element values `value(t)`, per DOF.
fn recover_nodal(mesh: &CellMesh, problem: &CellProblem, value: impl Fn(usize) -> f64) -> Vec<f64> {
    let space = &problem.space;
    let mut acc = vec![0.0; space.n_dofs];
    let mut wt = vec![0.0; space.n_dofs];
    for t in 0..mesh.triangles.len() {
        let v = value(t);
        for &d in &space.dofs[t] {
            acc[d] += space.areas[t] * v;
            wt[d] += space.areas[t];
        }
    }
    acc.iter().zip(&wt).map(|(a, w)| a / w).collect()
}

/// Second shape derivative `a_ij''[h, h]` of the perforated tensor from the
/// boundary representation with recovered gradients. The density is scaled
/// by the local conductivity, which is exact for constant `sigma`. `local` holds the
/// solved `phi_1'`, `phi_2'` for the same direction.
pub fn hessian_entry(
    state: &CellState,
    traces: &InterfaceTraces,
    direction: &[f64],
    local: &[Vec<f64>; 2],
    i: usize,
    j: usize,
) -> Result<f64> {
    let mesh = &state.mesh;
    require_perforated(mesh, "the second shape derivative")?;
    let space = &state.problem.space;
    let sol = &state.solutions;
    let shape = mesh.shape();
    let ext = RadialExtension { shape, direction };
    let product = recover_nodal(mesh, &state.problem, |t| {
        sol.phi_gradient(space, i, t).dot(&sol.phi_gradient(space, j, t))
    });
    let mut total = 0.0;
    for (edge, node) in mesh.interface_edges.iter().zip(&traces.nodes) {
        let t = edge.matrix_triangle;
        let gi = sol.phi_gradient(space, i, t);
        let gj = sol.phi_gradient(space, j, t);
        let dgi = space.gradient(&local[i], t);
        let dgj = space.gradient(&local[j], t);
        let h = ext.at(node.point);
        let vn = h.dot(&node.normal);
        let grad_product = space.gradient(&product, t);
        let density = dgi.dot(&gj)
            + gi.dot(&dgj)
            + ext.boundary_divergence(node.phi) * gi.dot(&gj)
            + grad_product.dot(&h);
        total += 0.5 * node.sigma_out * density * vn * node.weight;
    }
    Ok(total)
}

/// Exact first and second derivatives of the discrete tensor when the shape
/// coefficients move along a direction. Vertex positions are affine in the
/// coefficients, so the derivative of every element quantity is available in
/// closed form; the state derivative comes from one extra solve per
/// direction `i`.
#[derive(Clone, Debug, PartialEq)]
pub struct DiscreteDerivatives {
    pub first: Matrix2<f64>,
    pub second: Option<Matrix2<f64>>,
    /// Derivatives of the corrector DOF vectors (present with `second`).
    pub state: Option<[Vec<f64>; 2]>,
}

struct ElementJet {
    c: [f64; 3],
    n: [Matrix2<f64>; 3],
}

fn element_jets(state: &CellState, sigma: &SigmaPair, direction: &[f64]) -> Result<Vec<ElementJet>> {
    let mesh = &state.mesh;
    let vel = mesh.vertex_velocities(direction);
    (0..mesh.triangles.len())
        .into_par_iter()
        .with_min_len(512)
        .map(|t| {
            let tri = &mesh.triangles[t];
            let x = tri.vertices.map(|v| mesh.vertices[v]);
            let dx = tri.vertices.map(|v| vel[v]);
            let m0 = Matrix2::from_columns(&[x[1] - x[0], x[2] - x[0]]);
            let m1 = Matrix2::from_columns(&[dx[1] - dx[0], dx[2] - dx[0]]);
            let det1 = (x[1] - x[0]).perp(&(dx[2] - dx[0])) + (dx[1] - dx[0]).perp(&(x[2] - x[0]));
            let area = [0.5 * m0.determinant(), 0.5 * det1, m1.determinant()];
            let n0 = m0
                .try_inverse()
                .ok_or_else(|| Error::Mesh(format!("triangle {t} is degenerate")))?
                .transpose();
            let b = m1.transpose();
            let n1 = -n0 * b * n0;
            let n2 = 2.0 * n0 * b * n0 * b * n0;

            let field = match tri.region {
                crate::mesh::Region::Matrix => &sigma.matrix,
                crate::mesh::Region::Inclusion => sigma.inclusion.as_ref().ok_or_else(|| {
                    Error::Unsupported("inclusion triangles need an inclusion conductivity".into())
                })?,
            };
            let s0 = state.problem.sigma_bar[t];
            let (mut s1, mut s2) = (0.0, 0.0);
            if !field.is_constant() {
                const H: f64 = 1e-4;
                for (a, b) in [(0, 1), (1, 2), (2, 0)] {
                    let m = (x[a] + x[b]) * 0.5;
                    let dm = (dx[a] + dx[b]) * 0.5;
                    let f0 = field.eval(m)?;
                    let fp = field.eval(m + H * dm)?;
                    let fm = field.eval(m - H * dm)?;
                    s1 += (fp - fm) / (2.0 * H) / 3.0;
                    s2 += (fp - 2.0 * f0 + fm) / (H * H) / 3.0;
                }
            }
            let c = [
                s0 * area[0],
                s1 * area[0] + s0 * area[1],
                s2 * area[0] + 2.0 * s1 * area[1] + s0 * area[2],
            ];
            Ok(ElementJet { c, n: [n0, n1, n2] })
        })
        .collect()
}

fn local_differences(dofs: [usize; 3], w: &[f64]) -> Vec2 {
    Vec2::new(w[dofs[1]] - w[dofs[0]], w[dofs[2]] - w[dofs[0]])
}

pub fn discrete_tensor_derivatives(
    state: &CellState,
    sigma: &SigmaPair,
    direction: &[f64],
    second: bool,
) -> Result<DiscreteDerivatives> {
    let jets = element_jets(state, sigma, direction)?;
    let space = &state.problem.space;
    let w = &state.solutions.w;
    let hats = [Vec2::new(-1.0, -1.0), Vec2::new(1.0, 0.0), Vec2::new(0.0, 1.0)];

    let mut first = Matrix2::zeros();
    let mut loads = [vec![0.0; space.n_dofs], vec![0.0; space.n_dofs]];
    let mut explicit = Matrix2::zeros();
    for (t, jet) in jets.iter().enumerate() {
        let d = space.dofs[t];
        let dw = [local_differences(d, &w[0]), local_differences(d, &w[1])];
        let mut g = [jet.n[0] * dw[0], jet.n[0] * dw[1]];
        g[0][0] += 1.0;
        g[1][1] += 1.0;
        let g1 = [jet.n[1] * dw[0], jet.n[1] * dw[1]];
        let g2 = [jet.n[2] * dw[0], jet.n[2] * dw[1]];
        let [c0, c1, c2] = jet.c;
        for i in 0..2 {
            for j in 0..2 {
                first[(i, j)] += c1 * g[i].dot(&g[j]) + c0 * (g1[i].dot(&g[j]) + g[i].dot(&g1[j]));
                if second {
                    explicit[(i, j)] += c2 * g[i].dot(&g[j])
                        + 2.0 * c1 * (g1[i].dot(&g[j]) + g[i].dot(&g1[j]))
                        + c0 * (g2[i].dot(&g[j]) + g[i].dot(&g2[j]) + 2.0 * g1[i].dot(&g1[j]));
                }
            }
        }
        if second {
            for (k, hat) in hats.iter().enumerate() {
                let grad = jet.n[0] * hat;
                let grad1 = jet.n[1] * hat;
                for i in 0..2 {
                    loads[i][d[k]] +=
                        c1 * g[i].dot(&grad) + c0 * g1[i].dot(&grad) + c0 * g[i].dot(&grad1);
                }
            }
        }
    }
    if !second {
        return Ok(DiscreteDerivatives {
            first,
            second: None,
            state: None,
        });
    }
    let solve = |i: usize| {
        let rhs: Vec<f64> = loads[i].iter().map(|v| -v).collect();
        state.problem.solve(&rhs, None).map(|r| r.0)
    };
    let (r0, r1) = rayon::join(|| solve(0), || solve(1));
    let dw = [r0?, r1?];
    let k = &state.problem.matrix;
    let mut kdw = vec![0.0; space.n_dofs];
    let mut hessian = explicit;
    for j in 0..2 {
        k.mul_vec(&dw[j], &mut kdw);
        for i in 0..2 {
            let q: f64 = dw[i].iter().zip(&kdw).map(|(a, b)| a * b).sum();
            hessian[(i, j)] -= 2.0 * q;
        }
    }
    Ok(DiscreteDerivatives {
        first,
        second: Some(0.5 * (hessian + hessian.transpose())),
        state: Some(dw),
    })
}

/// `a + eps a' + eps^2 / 2 a''`; the last term is dropped without `second`.
pub fn taylor_predict(
    base: &Matrix2<f64>,
    first: &Matrix2<f64>,
    second: Option<&Matrix2<f64>>,
    eps: f64,
) -> Matrix2<f64> {
    let mut p = base + eps * first;
    if let Some(h) = second {
        p += 0.5 * eps * eps * h;
    }
    p
}
