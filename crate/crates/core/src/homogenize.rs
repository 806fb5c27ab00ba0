//! Effective conductivity tensor, Voigt-Reuss bounds and the matching objective.

use nalgebra::{Matrix2, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::coeff::SigmaPair;
use crate::error::{Error, Result};
use crate::fem::{CellProblem, CellSolutions, CgStats};
use crate::geometry::RadialShape;
use crate::mesh::{Case, CellMesh, Region};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EffectiveTensor {
    pub a11: f64,
    pub a12: f64,
    pub a21: f64,
    pub a22: f64,
    pub case: Case,
    /// `|a12 - a21|` of the unsymmetrized flux form.
    pub asymmetry: f64,
    /// Reuss lower and Voigt upper bound (mixture only).
    pub bounds: Option<(f64, f64)>,
}

impl EffectiveTensor {
    pub fn matrix(&self) -> Matrix2<f64> {
        Matrix2::new(self.a11, self.a12, self.a21, self.a22)
    }

    pub fn entry(&self, i: usize, j: usize) -> f64 {
        self.matrix()[(i, j)]
    }

    /// Eigenvalues in ascending order.
    pub fn eigenvalues(&self) -> [f64; 2] {
        let e = SymmetricEigen::new(self.matrix()).eigenvalues;
        [e[0].min(e[1]), e[0].max(e[1])]
    }

    /// Whether both eigenvalues lie in the bound interval widened by `tol`.
    pub fn within_bounds(&self, tol: f64) -> Option<bool> {
        self.bounds.map(|(lo, hi)| {
            self.eigenvalues()
                .iter()
                .all(|&e| e >= lo - tol && e <= hi + tol)
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TargetTensor {
    pub b11: f64,
    pub b12: f64,
    pub b22: f64,
}

impl TargetTensor {
    pub fn new(b11: f64, b12: f64, b22: f64) -> TargetTensor {
        TargetTensor { b11, b12, b22 }
    }

    pub fn diagonal(b11: f64, b22: f64) -> TargetTensor {
        TargetTensor::new(b11, 0.0, b22)
    }

    /// Accepts a full 2x2 array; off-diagonals must agree exactly.
    pub fn from_rows(rows: [[f64; 2]; 2]) -> Result<TargetTensor> {
        if rows[0][1] != rows[1][0] {
            return Err(Error::Config(format!(
                "target tensor must be symmetric, got b12 = {} and b21 = {}",
                rows[0][1], rows[1][0]
            )));
        }
        Ok(TargetTensor::new(rows[0][0], rows[0][1], rows[1][1]))
    }

    pub fn matrix(&self) -> Matrix2<f64> {
        Matrix2::new(self.b11, self.b12, self.b12, self.b22)
    }
}

/// `a_ij = sum_T sigma_T |T| (e_i + grad w_i).(e_j + grad w_j)`, symmetrized.
pub fn effective_tensor(
    mesh: &CellMesh,
    problem: &CellProblem,
    solutions: &CellSolutions,
) -> EffectiveTensor {
    let space = &problem.space;
    let mut energy = Matrix2::<f64>::zeros();
    let mut flux = Matrix2::<f64>::zeros();
    for t in 0..space.dofs.len() {
        let s = problem.sigma_bar[t] * space.areas[t];
        let g = [
            solutions.phi_gradient(space, 0, t),
            solutions.phi_gradient(space, 1, t),
        ];
        for i in 0..2 {
            for j in 0..2 {
                energy[(i, j)] += s * g[i].dot(&g[j]);
                flux[(i, j)] += s * g[i][j];
            }
        }
    }
    let a12 = 0.5 * (energy[(0, 1)] + energy[(1, 0)]);
    let asymmetry = (flux[(0, 1)] - flux[(1, 0)]).abs();
    if asymmetry > 1e-10 * energy[(0, 0)].abs().max(energy[(1, 1)].abs()) {
        log::debug!("effective tensor flux-form asymmetry {asymmetry:e}");
    }
    EffectiveTensor {
        a11: energy[(0, 0)],
        a12,
        a21: a12,
        a22: energy[(1, 1)],
        case: mesh.case(),
        asymmetry,
        bounds: None,
    }
}

/// Reuss (harmonic mean) and Voigt (arithmetic mean) bounds, integrated over
/// the exact curved phases. Defined for mixtures only.
pub fn voigt_reuss_bounds(mesh: &CellMesh, sigma: &SigmaPair) -> Result<(f64, f64)> {
    if mesh.case() != Case::Mixture {
        return Err(Error::Unsupported(
            "Voigt-Reuss bounds apply to two-phase mixtures only".into(),
        ));
    }
    let inclusion = sigma.inclusion.as_ref().ok_or_else(|| {
        Error::Unsupported("mixture bounds need an inclusion conductivity".into())
    })?;
    let field = |r: Region| match r {
        Region::Matrix => &sigma.matrix,
        Region::Inclusion => inclusion,
    };
    let positive = |p: crate::geometry::Vec2, r: Region| -> Result<f64> {
        let v = field(r).eval(p)?;
        if v <= 0.0 {
            return Err(Error::Evaluation {
                x: p[0],
                y: p[1],
                message: format!("conductivity {v} is not positive"),
            });
        }
        Ok(v)
    };
    let upper = mesh.integrate_exact(|p, r| positive(p, r))?;
    let inverse = mesh.integrate_exact(|p, r| positive(p, r).map(|v| 1.0 / v))?;
    Ok((1.0 / inverse, upper))
}

/// `J = 1/2 sum_ij (a_ij - b_ij)^2` and the residual `A - B`.
pub fn matching_objective(a: &EffectiveTensor, b: &TargetTensor) -> (f64, Matrix2<f64>) {
    let r = a.matrix() - b.matrix();
    (0.5 * r.norm_squared(), r)
}

/// Mesh, solved correctors and tensor for one shape.
#[derive(Clone, Debug)]
pub struct CellState {
    pub mesh: CellMesh,
    pub problem: CellProblem,
    pub solutions: CellSolutions,
    pub tensor: EffectiveTensor,
}

impl CellState {
    /// Meshes `shape`, solves both cell problems and evaluates the tensor.
    /// Bounds are attached in the mixture case.
    pub fn solve(
        shape: &RadialShape,
        case: Case,
        level: u32,
        sigma: &SigmaPair,
        warm: Option<&CellSolutions>,
    ) -> Result<CellState> {
        let mesh = CellMesh::build(shape, case, level)?;
        let problem = CellProblem::new(&mesh, sigma)?;
        // a warm start is only meaningful on an identical DOF layout
        let warm = warm.filter(|w| w.w[0].len() == problem.space.n_dofs);
        let solutions = problem.solve_cell_problems(warm)?;
        let mut tensor = effective_tensor(&mesh, &problem, &solutions);
        if case == Case::Mixture {
            tensor.bounds = Some(voigt_reuss_bounds(&mesh, sigma)?);
        }
        Ok(CellState {
            mesh,
            problem,
            solutions,
            tensor,
        })
    }

    /// Worst-case solver statistics over the two cell problems.
    pub fn solver_stats(&self) -> CgStats {
        let [a, b] = self.solutions.stats;
        CgStats {
            iterations: a.iterations.max(b.iterations),
            residual: a.residual.max(b.residual),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coeff::CoefficientField;
    use approx::assert_relative_eq;
    use std::f64::consts::PI;

    fn circle(r: f64) -> RadialShape {
        RadialShape::circle(4, r).unwrap()
    }

    #[test]
    fn constant_conductivity_gives_scaled_identity() {
        let shape = RadialShape::from_coeffs(vec![0.22, 0.03, 0.01, 0.0, 0.02]).unwrap();
        let st = CellState::solve(&shape, Case::Mixture, 3, &SigmaPair::constants(2.5, 2.5), None)
            .unwrap();
        assert!((st.tensor.a11 - 2.5).abs() < 1e-10);
        assert!((st.tensor.a22 - 2.5).abs() < 1e-10);
        assert!(st.tensor.a12.abs() < 1e-10);
        let (lo, hi) = st.tensor.bounds.unwrap();
        assert_relative_eq!(lo, 2.5, epsilon = 1e-12);
        assert_relative_eq!(hi, 2.5, epsilon = 1e-12);
    }

    #[test]
    fn circle_bounds_match_closed_form() {
        let mesh = CellMesh::build(&circle(0.25), Case::Mixture, 2).unwrap();
        let (lo, hi) = voigt_reuss_bounds(&mesh, &SigmaPair::constants(1.0, 10.0)).unwrap();
        let theta = PI / 16.0;
        assert_relative_eq!(hi, 1.0 + 9.0 * theta, epsilon = 1e-12);
        assert_relative_eq!(lo, 1.0 / (1.0 - 0.9 * theta), epsilon = 1e-12);
        assert!((hi - 2.76715).abs() < 1e-4);
        assert!((lo - 1.21464).abs() < 1e-4);
    }

    #[test]
    fn bounds_are_rotation_invariant() {
        let s = RadialShape::from_coeffs(vec![0.22, 0.03, 0.01, 0.0, 0.02]).unwrap();
        let sigma = SigmaPair::constants(1.0, 4.0);
        let a = voigt_reuss_bounds(&CellMesh::build(&s, Case::Mixture, 2).unwrap(), &sigma).unwrap();
        let b = voigt_reuss_bounds(
            &CellMesh::build(&s.rotated_quarter(), Case::Mixture, 2).unwrap(),
            &sigma,
        )
        .unwrap();
        assert_relative_eq!(a.0, b.0, epsilon = 1e-13);
        assert_relative_eq!(a.1, b.1, epsilon = 1e-13);
    }

    #[test]
    fn bounds_reject_perforated_meshes() {
        let mesh = CellMesh::build(&circle(0.25), Case::Perforated, 1).unwrap();
        let sigma = SigmaPair::perforated(CoefficientField::Constant(1.0));
        assert!(matches!(
            voigt_reuss_bounds(&mesh, &sigma),
            Err(Error::Unsupported(_))
        ));
    }

    #[test]
    fn circle_tensor_is_isotropic_and_bounded() {
        let st = CellState::solve(&circle(0.25), Case::Mixture, 3, &SigmaPair::constants(1.0, 10.0), None)
            .unwrap();
        let t = &st.tensor;
        assert!((t.a11 - t.a22).abs() < 1e-10);
        assert!(t.a12.abs() < 1e-10);
        assert_eq!(t.within_bounds(1e-6), Some(true));
        assert!(t.asymmetry < 1e-8);
    }

    #[test]
    fn laminate_matches_harmonic_and_arithmetic_means() {
        // sigma depends on x only: a11 is the harmonic mean, a22 the arithmetic mean
        let f = CoefficientField::parse("2 + sin(2*pi*x)").unwrap();
        let sigma = SigmaPair::mixture(f.clone(), f);
        let mut errors = Vec::new();
        for level in [2, 3, 4] {
            let st = CellState::solve(&circle(0.25), Case::Mixture, level, &sigma, None).unwrap();
            errors.push((st.tensor.a11 - 3f64.sqrt()).abs());
            assert_relative_eq!(st.tensor.a22, 2.0, epsilon = 2e-2);
            assert!(st.tensor.a12.abs() < 1e-2);
        }
        assert!(errors[2] < 2e-3, "{errors:?}");
        assert!(errors[1] < errors[0] && errors[2] < errors[1], "{errors:?}");
    }

    #[test]
    fn energy_identity_respects_discrete_voigt() {
        let s = RadialShape::from_coeffs(vec![0.22, 0.03, 0.01, 0.0, 0.02]).unwrap();
        let st = CellState::solve(&s, Case::Mixture, 3, &SigmaPair::constants(1.0, 10.0), None)
            .unwrap();
        let discrete_voigt: f64 = st
            .problem
            .sigma_bar
            .iter()
            .zip(&st.problem.space.areas)
            .map(|(s, a)| s * a)
            .sum();
        assert!(st.tensor.a11 <= discrete_voigt);
        assert!(st.tensor.a22 <= discrete_voigt);
    }

    #[test]
    fn quarter_rotation_swaps_entries() {
        let s = RadialShape::from_coeffs(vec![0.22, 0.03, 0.01, 0.01, 0.02]).unwrap();
        let sigma = SigmaPair::constants(1.0, 10.0);
        let a = CellState::solve(&s, Case::Mixture, 3, &sigma, None).unwrap().tensor;
        let b = CellState::solve(&s.rotated_quarter(), Case::Mixture, 3, &sigma, None)
            .unwrap()
            .tensor;
        assert!((a.a11 - b.a22).abs() < 1e-10);
        assert!((a.a22 - b.a11).abs() < 1e-10);
        assert!((a.a12 + b.a12).abs() < 1e-10);
        assert!(a.a12.abs() > 1e-4);
    }

    #[test]
    fn larger_stiff_inclusion_raises_both_eigenvalues() {
        let sigma = SigmaPair::constants(1.0, 10.0);
        let small = CellState::solve(&circle(0.2), Case::Mixture, 3, &sigma, None).unwrap();
        let big = CellState::solve(&circle(0.3), Case::Mixture, 3, &sigma, None).unwrap();
        let (es, eb) = (small.tensor.eigenvalues(), big.tensor.eigenvalues());
        assert!(eb[0] > es[0] && eb[1] > es[1]);
    }

    #[test]
    fn tiny_holes_hit_the_quality_floor() {
        let sigma = SigmaPair::perforated(CoefficientField::Constant(1.0));
        let err = CellState::solve(&circle(0.05), Case::Perforated, 1, &sigma, None).unwrap_err();
        assert!(matches!(err, Error::Mesh(_)));
    }

    #[test]
    fn shrinking_holes_approach_identity() {
        let sigma = SigmaPair::perforated(CoefficientField::Constant(1.0));
        let mut dist = Vec::new();
        for r in [0.2, 0.15, 0.12] {
            let st = CellState::solve(&circle(r), Case::Perforated, 3, &sigma, None).unwrap();
            assert!(st.tensor.bounds.is_none());
            assert!(st.tensor.a11 < 1.0);
            dist.push((st.tensor.matrix() - Matrix2::identity()).norm());
        }
        assert!(dist[0] > dist[1] && dist[1] > dist[2], "{dist:?}");
    }

    #[test]
    fn objective_examples() {
        let t = EffectiveTensor {
            a11: 1.0,
            a12: 0.0,
            a21: 0.0,
            a22: 1.0,
            case: Case::Mixture,
            asymmetry: 0.0,
            bounds: None,
        };
        let (j, r) = matching_objective(&t, &TargetTensor::diagonal(1.4, 1.4));
        assert_relative_eq!(j, 0.16, epsilon = 1e-15);
        assert_relative_eq!(r[(0, 0)], -0.4, epsilon = 1e-15);
        let (j, _) = matching_objective(&t, &TargetTensor::diagonal(1.0, 1.0));
        assert_eq!(j, 0.0);
        let (j, _) = matching_objective(&t, &TargetTensor::new(1.0, 0.1, 1.0));
        assert_relative_eq!(j, 0.01, epsilon = 1e-15);
    }

    #[test]
    fn target_must_be_symmetric() {
        assert!(TargetTensor::from_rows([[1.0, 0.1], [0.2, 1.0]]).is_err());
        let t = TargetTensor::from_rows([[1.5, 0.1], [0.1, 1.4]]).unwrap();
        assert_eq!(t, TargetTensor::new(1.5, 0.1, 1.4));
    }
}
