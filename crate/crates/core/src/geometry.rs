//! Star-shaped interfaces described by a truncated Fourier series of the
//! radius around the cell midpoint.
//!
//! Coefficients are stored flat as `(a0, a1, a-1, a2, a-2, ..., aN, a-N)`,
//! so `r(phi) = a0 + sum_k a_k cos(k phi) + a_-k sin(k phi)`.

use std::f64::consts::TAU;
use std::fmt;

use nalgebra::Vector2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Vec2 = Vector2<f64>;

/// Midpoint of the unit cell; the inclusion is star-shaped about it.
pub const CENTER: [f64; 2] = [0.5, 0.5];

/// Smallest admissible radius anywhere on the boundary.
pub const MIN_RADIUS: f64 = 1e-3;

/// Required gap between the boundary and the cell sides (Chebyshev distance).
pub const CONTAINMENT_MARGIN: f64 = 1e-2;

/// Number of equispaced angles used by validation and sup-distances.
pub const VALIDATION_GRID: usize = 4096;

pub fn center() -> Vec2 {
    Vec2::new(CENTER[0], CENTER[1])
}

/// Which Fourier mode a flat coefficient index refers to.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Constant,
    Cos(usize),
    Sin(usize),
}

impl Mode {
    pub fn from_index(index: usize) -> Mode {
        if index == 0 {
            Mode::Constant
        } else if index % 2 == 1 {
            Mode::Cos((index + 1) / 2)
        } else {
            Mode::Sin(index / 2)
        }
    }

    /// Radial displacement `dr(phi)` produced by a unit change of this coefficient.
    pub fn radial_profile(self, phi: f64) -> f64 {
        match self {
            Mode::Constant => 1.0,
            Mode::Cos(k) => (k as f64 * phi).cos(),
            Mode::Sin(k) => (k as f64 * phi).sin(),
        }
    }

    pub fn radial_profile_derivative(self, phi: f64) -> f64 {
        match self {
            Mode::Constant => 0.0,
            Mode::Cos(k) => -(k as f64) * (k as f64 * phi).sin(),
            Mode::Sin(k) => k as f64 * (k as f64 * phi).cos(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RadialShape {
    degree: usize,
    coeffs: Vec<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ViolationKind {
    /// The radius drops below [`MIN_RADIUS`].
    Positivity,
    /// The boundary comes closer than [`CONTAINMENT_MARGIN`] to the cell sides.
    Containment,
}

/// Worst offending grid angle found by [`RadialShape::validate`].
#[derive(Clone, Debug, PartialEq)]
pub struct ShapeViolation {
    pub kind: ViolationKind,
    pub phi: f64,
    pub value: f64,
    pub limit: f64,
}

impl fmt::Display for ShapeViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.kind {
            ViolationKind::Positivity => write!(
                f,
                "radius {:.6} below {:.1e} at phi = {:.6}",
                self.value, self.limit, self.phi
            ),
            ViolationKind::Containment => write!(
                f,
                "boundary reaches Chebyshev distance {:.6} > {:.6} at phi = {:.6}",
                self.value, self.limit, self.phi
            ),
        }
    }
}

impl RadialShape {
    /// Builds a shape from flat coefficients without validating it.
    pub fn from_coeffs(coeffs: Vec<f64>) -> Result<Self> {
        if coeffs.len() % 2 == 0 {
            return Err(Error::ShapeParameter(format!(
                "coefficient vector must have odd length 2N+1, got {}",
                coeffs.len()
            )));
        }
        if coeffs.iter().any(|c| !c.is_finite()) {
            return Err(Error::ShapeParameter("non-finite coefficient".into()));
        }
        Ok(Self {
            degree: (coeffs.len() - 1) / 2,
            coeffs,
        })
    }

    pub fn circle(degree: usize, radius: f64) -> Result<Self> {
        if !(radius > MIN_RADIUS && radius <= 0.5 - CONTAINMENT_MARGIN) {
            return Err(Error::ShapeParameter(format!(
                "circle radius {radius} outside ({MIN_RADIUS}, {}]",
                0.5 - CONTAINMENT_MARGIN
            )));
        }
        let mut coeffs = vec![0.0; 2 * degree + 1];
        coeffs[0] = radius;
        let shape = Self { degree, coeffs };
        shape.ensure_valid()?;
        Ok(shape)
    }

    /// Circle with random Fourier perturbations; mode `k` is drawn uniformly
    /// from `[-amplitude / k, amplitude / k]`.
    pub fn perturbed_circle(degree: usize, radius: f64, amplitude: f64, seed: u64) -> Result<Self> {
        if !(amplitude >= 0.0) {
            return Err(Error::ShapeParameter(format!(
                "perturbation amplitude must be nonnegative, got {amplitude}"
            )));
        }
        let mut shape = Self::circle(degree, radius)?;
        if amplitude == 0.0 {
            return Ok(shape);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for k in 1..=degree {
            let bound = amplitude / k as f64;
            shape.coeffs[2 * k - 1] = rng.gen_range(-bound..=bound);
            shape.coeffs[2 * k] = rng.gen_range(-bound..=bound);
        }
        shape.ensure_valid()?;
        Ok(shape)
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn len(&self) -> usize {
        self.coeffs.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Radius and its angular derivative.
    pub fn eval_radius(&self, phi: f64) -> (f64, f64) {
        let mut r = self.coeffs[0];
        let mut dr = 0.0;
        for k in 1..=self.degree {
            let (s, c) = (k as f64 * phi).sin_cos();
            let (a, b) = (self.coeffs[2 * k - 1], self.coeffs[2 * k]);
            let kf = k as f64;
            r += a * c + b * s;
            dr += kf * (b * c - a * s);
        }
        (r, dr)
    }

    pub fn radius(&self, phi: f64) -> f64 {
        self.eval_radius(phi).0
    }

    pub fn point(&self, phi: f64) -> Vec2 {
        let r = self.radius(phi);
        center() + r * Vec2::new(phi.cos(), phi.sin())
    }

    /// Boundary point and unit normal pointing out of the inclusion.
    pub fn point_and_normal(&self, phi: f64) -> (Vec2, Vec2) {
        let (r, dr) = self.eval_radius(phi);
        let (s, c) = phi.sin_cos();
        let er = Vec2::new(c, s);
        let et = Vec2::new(-s, c);
        let n = (r * er - dr * et) / r.hypot(dr);
        (center() + r * er, n)
    }

    /// Derivative of the boundary point with respect to the angle.
    pub fn tangent(&self, phi: f64) -> Vec2 {
        let (r, dr) = self.eval_radius(phi);
        let (s, c) = phi.sin_cos();
        dr * Vec2::new(c, s) + r * Vec2::new(-s, c)
    }

    /// Arclength density `|x'(phi)| = sqrt(r^2 + r'^2)`.
    pub fn speed(&self, phi: f64) -> f64 {
        let (r, dr) = self.eval_radius(phi);
        r.hypot(dr)
    }

    /// Normal velocity `<h, n>` of the boundary when coefficient `index`
    /// moves at unit rate.
    pub fn basis_normal_velocity(&self, index: usize, phi: f64) -> Result<f64> {
        if index >= self.coeffs.len() {
            return Err(Error::CoefficientIndex {
                index,
                degree: self.degree,
            });
        }
        Ok(Mode::from_index(index).radial_profile(phi) * self.radial_normal_factor(phi))
    }

    /// `<e_r, n> = r / sqrt(r^2 + r'^2)`; multiplies a radial displacement to
    /// give the normal velocity.
    pub fn radial_normal_factor(&self, phi: f64) -> f64 {
        let (r, dr) = self.eval_radius(phi);
        r / r.hypot(dr)
    }

    /// Radial displacement `dr(phi)` induced by a coefficient direction.
    pub fn direction_profile(direction: &[f64], phi: f64) -> f64 {
        direction
            .iter()
            .enumerate()
            .filter(|(_, d)| **d != 0.0)
            .map(|(i, d)| d * Mode::from_index(i).radial_profile(phi))
            .sum()
    }

    pub fn direction_profile_derivative(direction: &[f64], phi: f64) -> f64 {
        direction
            .iter()
            .enumerate()
            .filter(|(_, d)| **d != 0.0)
            .map(|(i, d)| d * Mode::from_index(i).radial_profile_derivative(phi))
            .sum()
    }

    /// `self + step * direction`, unvalidated.
    pub fn stepped(&self, direction: &[f64], step: f64) -> Result<Self> {
        if direction.len() != self.coeffs.len() {
            return Err(Error::DegreeMismatch(self.degree, direction.len() / 2));
        }
        let coeffs = self
            .coeffs
            .iter()
            .zip(direction)
            .map(|(c, d)| c + step * d)
            .collect();
        Self::from_coeffs(coeffs)
    }

    /// Shape with `r'(phi) = r(phi - pi/2)`: the boundary rotated by a quarter
    /// turn counterclockwise about the cell midpoint.
    pub fn rotated_quarter(&self) -> Self {
        let mut coeffs = self.coeffs.clone();
        for k in 1..=self.degree {
            // cos(k pi/2), sin(k pi/2) are exact integers
            let (c, s) = match k % 4 {
                0 => (1.0, 0.0),
                1 => (0.0, 1.0),
                2 => (-1.0, 0.0),
                _ => (0.0, -1.0),
            };
            let (a, b) = (self.coeffs[2 * k - 1], self.coeffs[2 * k]);
            coeffs[2 * k - 1] = c * a - s * b;
            coeffs[2 * k] = s * a + c * b;
        }
        Self {
            degree: self.degree,
            coeffs,
        }
    }

    /// Mirror image across the horizontal midline (`phi -> -phi`).
    pub fn mirrored(&self) -> Self {
        let mut coeffs = self.coeffs.clone();
        for k in 1..=self.degree {
            coeffs[2 * k] = -coeffs[2 * k];
        }
        Self {
            degree: self.degree,
            coeffs,
        }
    }

    /// Same boundary expressed at a higher or lower degree (truncating).
    pub fn with_degree(&self, degree: usize) -> Self {
        let mut coeffs = vec![0.0; 2 * degree + 1];
        let n = coeffs.len().min(self.coeffs.len());
        coeffs[..n].copy_from_slice(&self.coeffs[..n]);
        Self { degree, coeffs }
    }

    /// Checks positivity and containment on the validation grid and reports
    /// the worst violation, positivity first.
    pub fn validate(&self) -> std::result::Result<(), ShapeViolation> {
        let limit = 0.5 - CONTAINMENT_MARGIN;
        let mut worst_r = (f64::INFINITY, 0.0);
        let mut worst_cheb = (f64::NEG_INFINITY, 0.0);
        for j in 0..VALIDATION_GRID {
            let phi = TAU * j as f64 / VALIDATION_GRID as f64;
            let r = self.radius(phi);
            if !r.is_finite() || r < worst_r.0 {
                worst_r = (r, phi);
            }
            let (s, c) = phi.sin_cos();
            let cheb = (r * c).abs().max((r * s).abs());
            if cheb > worst_cheb.0 {
                worst_cheb = (cheb, phi);
            }
        }
        if !(worst_r.0 >= MIN_RADIUS) {
            return Err(ShapeViolation {
                kind: ViolationKind::Positivity,
                phi: worst_r.1,
                value: worst_r.0,
                limit: MIN_RADIUS,
            });
        }
        if worst_cheb.0 > limit {
            return Err(ShapeViolation {
                kind: ViolationKind::Containment,
                phi: worst_cheb.1,
                value: worst_cheb.0,
                limit,
            });
        }
        Ok(())
    }

    pub fn ensure_valid(&self) -> Result<()> {
        self.validate().map_err(Error::InvalidShape)
    }

    /// Enclosed area `1/2 int r^2 dphi`, in closed form from the coefficients.
    pub fn area(&self) -> f64 {
        let mut sum = self.coeffs[0] * self.coeffs[0];
        for c in &self.coeffs[1..] {
            sum += 0.5 * c * c;
        }
        0.5 * TAU * sum
    }

    /// Samples `(phi, r, x, y)` at `count` equispaced angles.
    pub fn sample(&self, count: usize) -> Vec<[f64; 4]> {
        (0..count)
            .map(|j| {
                let phi = TAU * j as f64 / count as f64;
                let p = self.point(phi);
                [phi, self.radius(phi), p.x, p.y]
            })
            .collect()
    }
}

/// Sup-norm distance between the radial functions of two shapes of equal degree.
pub fn sup_distance(a: &RadialShape, b: &RadialShape) -> Result<f64> {
    if a.degree != b.degree {
        return Err(Error::DegreeMismatch(a.degree, b.degree));
    }
    Ok((0..VALIDATION_GRID)
        .map(|j| {
            let phi = TAU * j as f64 / VALIDATION_GRID as f64;
            (a.radius(phi) - b.radius(phi)).abs()
        })
        .fold(0.0, f64::max))
}

/// Rotates a point a quarter turn counterclockwise about the cell midpoint.
pub fn rotate_quarter(p: Vec2) -> Vec2 {
    let c = center();
    let d = p - c;
    c + Vec2::new(-d.y, d.x)
}

/// Polar angle of `p` about the cell midpoint, in `[0, 2 pi)`.
pub fn polar_angle(p: Vec2) -> f64 {
    let d = p - center();
    let a = d.y.atan2(d.x);
    if a < 0.0 {
        a + TAU
    } else {
        a
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use std::f64::consts::{FRAC_PI_2, PI};

    fn coeffs_with(degree: usize, entries: &[(usize, f64)]) -> RadialShape {
        let mut c = vec![0.0; 2 * degree + 1];
        for &(i, v) in entries {
            c[i] = v;
        }
        RadialShape::from_coeffs(c).unwrap()
    }

    #[test]
    fn circle_is_constant_radius() {
        let s = RadialShape::circle(8, 0.25).unwrap();
        for phi in [0.0, 0.3, 1.0, 4.0] {
            assert_eq!(s.eval_radius(phi), (0.25, 0.0));
        }
        let p = s.point(0.0);
        assert_eq!((p.x, p.y), (0.75, 0.5));
    }

    #[test]
    fn oversized_circle_is_rejected() {
        assert!(RadialShape::circle(4, 0.6).is_err());
        assert!(RadialShape::circle(4, 0.0005).is_err());
    }

    #[test]
    fn zero_amplitude_perturbation_is_the_circle() {
        let a = RadialShape::perturbed_circle(8, 0.25, 0.0, 7).unwrap();
        assert_eq!(a, RadialShape::circle(8, 0.25).unwrap());
    }

    #[test]
    fn perturbation_is_seeded() {
        let a = RadialShape::perturbed_circle(8, 0.25, 0.02, 1).unwrap();
        let b = RadialShape::perturbed_circle(8, 0.25, 0.02, 1).unwrap();
        let c = RadialShape::perturbed_circle(8, 0.25, 0.02, 2).unwrap();
        assert_eq!(a.coeffs(), b.coeffs());
        assert_ne!(a.coeffs(), c.coeffs());
        for k in 1..=8 {
            let bound = 0.02 / k as f64;
            assert!(a.coeffs()[2 * k - 1].abs() <= bound);
            assert!(a.coeffs()[2 * k].abs() <= bound);
        }
    }

    #[test]
    fn series_evaluation() {
        let s = coeffs_with(3, &[(0, 0.25), (1, 0.01)]);
        let (r, dr) = s.eval_radius(0.0);
        assert_relative_eq!(r, 0.26, epsilon = 1e-15);
        assert_relative_eq!(dr, 0.0, epsilon = 1e-15);
        let (r, dr) = s.eval_radius(PI / 2.0);
        assert_relative_eq!(r, 0.25, epsilon = 1e-15);
        assert_relative_eq!(dr, -0.01, epsilon = 1e-15);
    }

    #[test]
    fn circle_normal_is_radial() {
        let s = RadialShape::circle(4, 0.25).unwrap();
        let (p, n) = s.point_and_normal(PI / 2.0);
        assert_relative_eq!(p.x, 0.5, epsilon = 1e-15);
        assert_relative_eq!(p.y, 0.75, epsilon = 1e-15);
        assert_relative_eq!(n.x, 0.0, epsilon = 1e-15);
        assert_relative_eq!(n.y, 1.0, epsilon = 1e-15);
    }

    #[test]
    fn normal_matches_finite_difference_tangent() {
        let s = coeffs_with(2, &[(0, 0.25), (1, 0.05)]);
        let phi = PI / 4.0;
        let h = 1e-6;
        let t = (s.point(phi + h) - s.point(phi - h)) / (2.0 * h);
        let t = t.normalize();
        // rotate the tangent by -90 degrees
        let expected = Vec2::new(t.y, -t.x);
        let (_, n) = s.point_and_normal(phi);
        assert!((n - expected).norm() < 1e-6);
    }

    #[test]
    fn basis_velocity_on_circle() {
        let s = RadialShape::circle(3, 0.25).unwrap();
        assert_relative_eq!(s.basis_normal_velocity(0, 1.3).unwrap(), 1.0);
        assert_relative_eq!(s.basis_normal_velocity(1, 0.0).unwrap(), 1.0);
        assert!(s.basis_normal_velocity(1, PI / 2.0).unwrap().abs() < 1e-15);
        assert!(s.basis_normal_velocity(7, 0.0).is_err());
    }

    #[test]
    fn basis_velocity_matches_boundary_displacement() {
        let s = coeffs_with(3, &[(0, 0.25), (1, 0.03), (4, -0.02), (5, 0.01)]);
        let eps = 1e-6;
        for index in 0..s.len() {
            for phi in [0.2, 1.1, 2.5, 4.0, 5.9] {
                let mut dir = vec![0.0; s.len()];
                dir[index] = 1.0;
                let moved = s.stepped(&dir, eps).unwrap();
                let (_, n) = s.point_and_normal(phi);
                let fd = (moved.point(phi) - s.point(phi)).dot(&n) / eps;
                let exact = s.basis_normal_velocity(index, phi).unwrap();
                if exact.abs() > 1e-3 {
                    assert!(((fd - exact) / exact).abs() <= 1e-4, "{index} {phi}: {fd} vs {exact}");
                } else {
                    assert!((fd - exact).abs() <= 1e-7);
                }
            }
        }
    }

    #[test]
    fn validation_reports() {
        assert!(RadialShape::circle(2, 0.25).unwrap().validate().is_ok());
        let big = coeffs_with(2, &[(0, 0.495)]);
        assert_eq!(big.validate().unwrap_err().kind, ViolationKind::Containment);
        let dented = coeffs_with(2, &[(0, 0.05), (1, 0.06)]);
        let v = dented.validate().unwrap_err();
        assert_eq!(v.kind, ViolationKind::Positivity);
        assert!((v.phi - PI).abs() < 1e-2);
        assert_relative_eq!(v.value, -0.01, epsilon = 1e-6);
    }

    #[test]
    fn sup_distance_examples() {
        let a = RadialShape::circle(4, 0.25).unwrap();
        let b = RadialShape::circle(4, 0.26).unwrap();
        assert_eq!(sup_distance(&a, &a).unwrap(), 0.0);
        assert_relative_eq!(sup_distance(&a, &b).unwrap(), 0.01, epsilon = 1e-15);
        assert!(sup_distance(&a, &RadialShape::circle(5, 0.25).unwrap()).is_err());
    }

    #[test]
    fn area_closed_form() {
        let s = coeffs_with(3, &[(0, 0.25), (3, 0.02), (6, 0.01)]);
        let n = 20000;
        let quad: f64 = (0..n)
            .map(|j| {
                let phi = TAU * (j as f64 + 0.5) / n as f64;
                0.5 * s.radius(phi).powi(2) * TAU / n as f64
            })
            .sum();
        assert_relative_eq!(s.area(), quad, epsilon = 1e-12);
    }

    fn arb_shape() -> impl Strategy<Value = RadialShape> {
        (1usize..6)
            .prop_flat_map(|deg| {
                (
                    0.15f64..0.3,
                    proptest::collection::vec(-0.02f64..0.02, 2 * deg),
                )
            })
            .prop_map(|(a0, rest)| {
                let mut c = vec![a0];
                c.extend(rest.iter().enumerate().map(|(i, v)| v / (1 + i / 2) as f64));
                RadialShape::from_coeffs(c).unwrap()
            })
    }

    proptest! {
        #[test]
        fn normal_is_unit_and_orthogonal(s in arb_shape(), phi in 0.0f64..TAU) {
            let (_, n) = s.point_and_normal(phi);
            prop_assert!((n.norm() - 1.0).abs() <= 1e-14);
            let t = s.tangent(phi).normalize();
            prop_assert!(n.dot(&t).abs() <= 1e-12);
            prop_assert!(n.dot(&Vec2::new(phi.cos(), phi.sin())) > 0.0);
        }

        #[test]
        fn velocity_is_linear(s in arb_shape(), phi in 0.0f64..TAU, alpha in -3.0f64..3.0, idx in 0usize..3) {
            let mut dir = vec![0.0; s.len()];
            dir[idx] = alpha;
            let v = RadialShape::direction_profile(&dir, phi) * s.radial_normal_factor(phi);
            let unit = s.basis_normal_velocity(idx, phi).unwrap();
            prop_assert!((v - alpha * unit).abs() <= 1e-14);
        }

        #[test]
        fn quarter_rotation_rotates_points(s in arb_shape(), phi in 0.0f64..TAU) {
            let r = s.rotated_quarter();
            let p = rotate_quarter(s.point(phi));
            let q = r.point(phi + FRAC_PI_2);
            prop_assert!((p - q).norm() <= 1e-13);
        }

        #[test]
        fn sup_distance_is_a_metric(a in arb_shape(), db in -0.02f64..0.02, dc in -0.02f64..0.02) {
            let mut b = a.clone();
            b.coeffs[0] += db;
            let mut c = a.clone();
            c.coeffs[a.len() - 1] += dc;
            let ab = sup_distance(&a, &b).unwrap();
            let ba = sup_distance(&b, &a).unwrap();
            let bc = sup_distance(&b, &c).unwrap();
            let ac = sup_distance(&a, &c).unwrap();
            prop_assert_eq!(ab, ba);
            prop_assert!(ac <= ab + bc + 1e-15);
        }
    }
}
