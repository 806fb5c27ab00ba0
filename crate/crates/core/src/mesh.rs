//! Interface-resolving triangulations of the unit cell.
//!
//! The cell is first split into curved macro patches: an 8-triangle fan inside
//! the inclusion (mixture only) and a 20-triangle annulus between the 8-point
//! interface loop and 12 marked points on the cell boundary. Each patch is the
//! image of the reference triangle under a map that is affine except along at
//! most one edge, which follows the Fourier curve exactly. Regular refinement
//! of the reference triangle then yields `4^level` triangles per patch.

use std::collections::HashMap;
use std::f64::consts::{FRAC_PI_4, TAU};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{center, RadialShape, Vec2};

/// Smallest interior angle allowed in macro patches and refined triangles.
pub const MIN_ANGLE_DEG: f64 = 10.0;

const INTERFACE_SAMPLES: usize = 8;
const OUTER_POINTS: usize = 12;
const CENTER_ID: usize = 0;
const INNER_BASE: usize = 1;
const OUTER_BASE: usize = INNER_BASE + INTERFACE_SAMPLES;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Case {
    Mixture,
    Perforated,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Region {
    Inclusion,
    Matrix,
}

impl Region {
    pub fn label(self) -> &'static str {
        match self {
            Region::Inclusion => "inclusion",
            Region::Matrix => "matrix",
        }
    }
}

/// Angular parameter range of the curved edge between corners 1 and 2.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CurvedEdge {
    pub phi_start: f64,
    pub phi_end: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MacroPatch {
    pub index: usize,
    pub corners: [Vec2; 3],
    pub corner_ids: [usize; 3],
    pub curved: Option<CurvedEdge>,
    pub region: Region,
}

impl MacroPatch {
    /// Maps barycentric coordinates `(l1, l2)` of the reference triangle into
    /// the cell. Curved patches blend along rays from corner 0 to the curve.
    pub fn map(&self, shape: &RadialShape, l1: f64, l2: f64) -> Vec2 {
        let [p0, p1, p2] = self.corners;
        match self.curved {
            None => p0 + l1 * (p1 - p0) + l2 * (p2 - p0),
            Some(edge) => {
                let u = l1 + l2;
                if u <= 0.0 {
                    return p0;
                }
                let s = l2 / u;
                let phi = edge.phi_start + s * (edge.phi_end - edge.phi_start);
                (1.0 - u) * p0 + u * shape.point(phi)
            }
        }
    }

    /// Jacobian determinant of [`MacroPatch::map`].
    pub fn jacobian_det(&self, shape: &RadialShape, l1: f64, l2: f64) -> f64 {
        let [p0, p1, p2] = self.corners;
        match self.curved {
            None => cross(p1 - p0, p2 - p0),
            Some(edge) => {
                let u = l1 + l2;
                let s = if u > 0.0 { l2 / u } else { 0.5 };
                self.curve_det(shape, edge, s)
            }
        }
    }

    // det = cross(C(s) - p0, C'(s)), independent of the distance along the ray
    fn curve_det(&self, shape: &RadialShape, edge: CurvedEdge, s: f64) -> f64 {
        let dphi = edge.phi_end - edge.phi_start;
        let phi = edge.phi_start + s * dphi;
        cross(shape.point(phi) - self.corners[0], dphi * shape.tangent(phi))
    }

    /// Point and parameter derivative on the edge opposite corner 0.
    pub fn edge_point(&self, shape: &RadialShape, s: f64) -> (Vec2, Vec2) {
        let [_, p1, p2] = self.corners;
        match self.curved {
            None => (p1 + s * (p2 - p1), p2 - p1),
            Some(edge) => {
                let dphi = edge.phi_end - edge.phi_start;
                let phi = edge.phi_start + s * dphi;
                (shape.point(phi), dphi * shape.tangent(phi))
            }
        }
    }

    /// Exact patch area (curved edges integrated by Gauss-Legendre).
    pub fn area(&self, shape: &RadialShape) -> f64 {
        match self.curved {
            None => 0.5 * self.jacobian_det(shape, 0.0, 0.0),
            Some(edge) => 0.5 * gauss_legendre(|s| self.curve_det(shape, edge, s), 32),
        }
    }

    fn min_corner_angle(&self) -> f64 {
        min_angle_deg(self.corners)
    }
}

/// Macro patches for one shape.
#[derive(Clone, Debug)]
pub struct MacroLayout {
    pub shape: RadialShape,
    pub case: Case,
    pub patches: Vec<MacroPatch>,
    /// Macro vertex coordinates indexed by id; the center slot is unused in
    /// the perforated case.
    pub vertices: Vec<Vec2>,
}

impl MacroLayout {
    pub fn total_area(&self) -> f64 {
        self.patches.iter().map(|p| p.area(&self.shape)).sum()
    }
}

fn outer_points() -> [Vec2; OUTER_POINTS] {
    let t = 1.0 / 3.0;
    let u = 2.0 / 3.0;
    [
        Vec2::new(1.0, t),
        Vec2::new(1.0, u),
        Vec2::new(1.0, 1.0),
        Vec2::new(u, 1.0),
        Vec2::new(t, 1.0),
        Vec2::new(0.0, 1.0),
        Vec2::new(0.0, u),
        Vec2::new(0.0, t),
        Vec2::new(0.0, 0.0),
        Vec2::new(t, 0.0),
        Vec2::new(u, 0.0),
        Vec2::new(1.0, 0.0),
    ]
}

/// Builds the 28 (mixture) or 20 (perforated) macro patches.
pub fn build_macro_patches(shape: &RadialShape, case: Case) -> Result<MacroLayout> {
    shape.ensure_valid()?;
    let inner_phi: Vec<f64> = (0..=INTERFACE_SAMPLES).map(|j| j as f64 * FRAC_PI_4).collect();
    let outer = outer_points();

    let mut vertices = vec![center(); OUTER_BASE + OUTER_POINTS];
    for j in 0..INTERFACE_SAMPLES {
        vertices[INNER_BASE + j] = shape.point(inner_phi[j]);
    }
    for (m, p) in outer.iter().enumerate() {
        vertices[OUTER_BASE + m] = *p;
    }

    // polar angles of the outer loop, unwrapped to increase from about -18.4 deg
    let mut outer_angle = Vec::with_capacity(OUTER_POINTS + 1);
    for p in outer.iter().chain(std::iter::once(&outer[0])) {
        let d = p - center();
        let mut a = d.y.atan2(d.x);
        if let Some(&prev) = outer_angle.last() {
            while a <= prev {
                a += TAU;
            }
        }
        outer_angle.push(a);
    }

    let inner_id = |j: usize| INNER_BASE + j % INTERFACE_SAMPLES;
    let outer_id = |m: usize| OUTER_BASE + m % OUTER_POINTS;
    let mut patches = Vec::new();

    if case == Case::Mixture {
        for j in 0..INTERFACE_SAMPLES {
            let ids = [CENTER_ID, inner_id(j), inner_id(j + 1)];
            patches.push(MacroPatch {
                index: patches.len(),
                corners: ids.map(|i| vertices[i]),
                corner_ids: ids,
                curved: Some(CurvedEdge {
                    phi_start: inner_phi[j],
                    phi_end: inner_phi[j + 1],
                }),
                region: Region::Inclusion,
            });
        }
    }

    // walk both loops counterclockwise, advancing the one whose next point
    // comes first in angle; ties advance the interface loop
    let (mut i, mut m) = (0usize, 0usize);
    while i < INTERFACE_SAMPLES || m < OUTER_POINTS {
        let next_inner = if i < INTERFACE_SAMPLES {
            inner_phi[i + 1]
        } else {
            f64::INFINITY
        };
        let next_outer = if m < OUTER_POINTS {
            outer_angle[m + 1]
        } else {
            f64::INFINITY
        };
        if next_outer < next_inner - 1e-9 {
            let ids = [inner_id(i), outer_id(m), outer_id(m + 1)];
            patches.push(MacroPatch {
                index: patches.len(),
                corners: ids.map(|k| vertices[k]),
                corner_ids: ids,
                curved: None,
                region: Region::Matrix,
            });
            m += 1;
        } else {
            let ids = [outer_id(m), inner_id(i + 1), inner_id(i)];
            patches.push(MacroPatch {
                index: patches.len(),
                corners: ids.map(|k| vertices[k]),
                corner_ids: ids,
                curved: Some(CurvedEdge {
                    phi_start: inner_phi[i + 1],
                    phi_end: inner_phi[i],
                }),
                region: Region::Matrix,
            });
            i += 1;
        }
    }

    for p in &patches {
        let angle = p.min_corner_angle();
        if !(angle >= MIN_ANGLE_DEG) {
            return Err(Error::Mesh(format!(
                "macro patch {} degenerates (min angle {angle:.2} deg)",
                p.index
            )));
        }
    }

    Ok(MacroLayout {
        shape: shape.clone(),
        case,
        patches,
        vertices,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct MeshTriangle {
    pub vertices: [usize; 3],
    pub region: Region,
    pub patch: usize,
    /// Integer reference-grid coordinates `(a, b)` of each vertex inside the
    /// parent patch; barycentrics are `(a / n, b / n)` with `n = 2^level`.
    pub grid: [[u32; 2]; 3],
}

/// A segment of the discretized interface, oriented by increasing angle.
#[derive(Clone, Debug, PartialEq)]
pub struct InterfaceEdge {
    pub vertices: [usize; 2],
    pub phi: [f64; 2],
    pub matrix_triangle: usize,
    pub inclusion_triangle: Option<usize>,
}

/// One quadrature node per interface edge, at the angular midpoint.
#[derive(Clone, Debug, PartialEq)]
pub struct InterfaceNode {
    pub edge: usize,
    pub phi: f64,
    pub point: Vec2,
    pub normal: Vec2,
    pub weight: f64,
}

#[derive(Clone, Debug)]
pub struct CellMesh {
    pub level: u32,
    pub layout: MacroLayout,
    pub vertices: Vec<Vec2>,
    pub triangles: Vec<MeshTriangle>,
    pub interface_edges: Vec<InterfaceEdge>,
    pub dof_of_vertex: Vec<usize>,
    pub dof_count: usize,
    /// Patch and reference-grid coordinates where each vertex was created.
    pub vertex_origin: Vec<(usize, [u32; 2])>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
enum VertexKey {
    Macro(usize),
    Edge(usize, usize, u32),
    Interior(usize, u32, u32),
}

fn vertex_key(patch: &MacroPatch, n: u32, a: u32, b: u32) -> VertexKey {
    let c = n - a - b;
    let counts = [c, a, b];
    let ids = patch.corner_ids;
    let nonzero: Vec<usize> = (0..3).filter(|&k| counts[k] > 0).collect();
    match nonzero.as_slice() {
        [k] => VertexKey::Macro(ids[*k]),
        [k1, k2] => {
            let (lo, hi) = if ids[*k1] < ids[*k2] {
                (*k1, *k2)
            } else {
                (*k2, *k1)
            };
            VertexKey::Edge(ids[lo], ids[hi], counts[hi])
        }
        _ => VertexKey::Interior(patch.index, a, b),
    }
}

fn on_cell_boundary(p: Vec2) -> bool {
    p.x == 0.0 || p.x == 1.0 || p.y == 0.0 || p.y == 1.0
}

/// Regularly refines every macro patch `level` times.
pub fn refine_to_level(layout: &MacroLayout, level: u32) -> Result<CellMesh> {
    if level > 12 {
        return Err(Error::Mesh(format!("refinement level {level} is too deep")));
    }
    let n: u32 = 1 << level;
    let shape = &layout.shape;
    let snap = 3.0 * n as f64;

    let mut index: HashMap<VertexKey, usize> = HashMap::new();
    let mut vertices: Vec<Vec2> = Vec::new();
    let mut vertex_origin: Vec<(usize, [u32; 2])> = Vec::new();
    let mut triangles = Vec::with_capacity(layout.patches.len() << (2 * level));
    // interface segment (sorted vertex pair) -> (matrix triangle, inclusion triangle, phi range)
    let mut interface: HashMap<(usize, usize), (Option<usize>, Option<usize>, [f64; 2])> =
        HashMap::new();

    for patch in &layout.patches {
        let mut local = HashMap::new();
        let mut vid = |a: u32, b: u32, vertices: &mut Vec<Vec2>| -> usize {
            let origin = &mut vertex_origin;
            *local.entry((a, b)).or_insert_with(|| {
                let key = vertex_key(patch, n, a, b);
                *index.entry(key).or_insert_with(|| {
                    let p = match key {
                        VertexKey::Macro(id) => layout.vertices[id],
                        _ => {
                            let mut p =
                                patch.map(shape, a as f64 / n as f64, b as f64 / n as f64);
                            if patch.curved.is_none() {
                                if let VertexKey::Edge(i, j, _) = key {
                                    if on_cell_boundary(layout.vertices[i])
                                        && on_cell_boundary(layout.vertices[j])
                                    {
                                        p = Vec2::new(
                                            (p.x * snap).round() / snap,
                                            (p.y * snap).round() / snap,
                                        );
                                    }
                                }
                            }
                            p
                        }
                    };
                    vertices.push(p);
                    origin.push((patch.index, [a, b]));
                    vertices.len() - 1
                })
            })
        };

        for a in 0..n {
            for b in 0..(n - a) {
                let up = [[a, b], [a + 1, b], [a, b + 1]];
                let v = up.map(|[x, y]| vid(x, y, &mut vertices));
                triangles.push(MeshTriangle {
                    vertices: v,
                    region: patch.region,
                    patch: patch.index,
                    grid: up,
                });
                if let Some(edge) = patch.curved {
                    if a + b == n - 1 {
                        // up triangle touching the curved edge between (a+1, b) and (a, b+1)
                        let s0 = b as f64 / n as f64;
                        let s1 = (b + 1) as f64 / n as f64;
                        let dphi = edge.phi_end - edge.phi_start;
                        let p0 = edge.phi_start + s0 * dphi;
                        let p1 = edge.phi_start + s1 * dphi;
                        let key = (v[1].min(v[2]), v[1].max(v[2]));
                        let entry = interface
                            .entry(key)
                            .or_insert((None, None, [p0.min(p1), p0.max(p1)]));
                        let t = triangles.len() - 1;
                        match patch.region {
                            Region::Matrix => entry.0 = Some(t),
                            Region::Inclusion => entry.1 = Some(t),
                        }
                    }
                }
                if a + b + 2 <= n {
                    let down = [[a + 1, b], [a + 1, b + 1], [a, b + 1]];
                    let v = down.map(|[x, y]| vid(x, y, &mut vertices));
                    triangles.push(MeshTriangle {
                        vertices: v,
                        region: patch.region,
                        patch: patch.index,
                        grid: down,
                    });
                }
            }
        }
    }

    let mut interface_edges = Vec::with_capacity(interface.len());
    for ((_, _), (matrix, inclusion, phi)) in interface {
        let matrix_triangle = matrix.ok_or_else(|| {
            Error::Mesh("interface segment without a matrix-side triangle".into())
        })?;
        if layout.case == Case::Mixture && inclusion.is_none() {
            return Err(Error::Mesh(
                "interface segment without an inclusion-side triangle".into(),
            ));
        }
        let tri = &triangles[matrix_triangle];
        // the two vertices of the matrix triangle lying on the curve
        let on_curve: Vec<usize> = (0..3)
            .filter(|&k| {
                let [a, b] = tri.grid[k];
                a + b == n
            })
            .map(|k| tri.vertices[k])
            .collect();
        let (va, vb) = (on_curve[0], on_curve[1]);
        let pa = shape.point(phi[0]);
        let ordered = if (vertices[va] - pa).norm() <= (vertices[vb] - pa).norm() {
            [va, vb]
        } else {
            [vb, va]
        };
        interface_edges.push(InterfaceEdge {
            vertices: ordered,
            phi,
            matrix_triangle,
            inclusion_triangle: inclusion,
        });
    }
    interface_edges.sort_by(|a, b| a.phi[0].total_cmp(&b.phi[0]));

    let mut mesh = CellMesh {
        level,
        layout: layout.clone(),
        vertices,
        triangles,
        interface_edges,
        dof_of_vertex: Vec::new(),
        dof_count: 0,
        vertex_origin,
    };
    mesh.check_quality()?;
    let (map, count) = periodic_identification(&mesh)?;
    mesh.dof_of_vertex = map;
    mesh.dof_count = count;
    Ok(mesh)
}

/// Pairs vertices on opposite cell sides; all four corners share one DOF.
pub fn periodic_identification(mesh: &CellMesh) -> Result<(Vec<usize>, usize)> {
    let quantize = |v: f64| (v * 1e10).round() as i64;
    let mut class_of: HashMap<(i64, i64), usize> = HashMap::new();
    let mut members: Vec<usize> = Vec::new();
    let mut expected: Vec<usize> = Vec::new();
    let mut dof = Vec::with_capacity(mesh.vertices.len());
    let mut count = 0usize;
    for p in &mesh.vertices {
        if on_cell_boundary(*p) {
            let wrap = |v: f64| if v == 1.0 { 0.0 } else { v };
            let (x, y) = (wrap(p.x), wrap(p.y));
            let key = (quantize(x), quantize(y));
            let id = *class_of.entry(key).or_insert_with(|| {
                count += 1;
                members.push(0);
                expected.push(if x == 0.0 && y == 0.0 { 4 } else { 2 });
                count - 1
            });
            let slot = members.len() - (count - id);
            members[slot] += 1;
            dof.push(id);
        } else {
            count += 1;
            members.push(1);
            expected.push(1);
            dof.push(count - 1);
        }
    }
    if let Some(bad) = (0..count).find(|&d| members[d] != expected[d]) {
        return Err(Error::Mesh(format!(
            "periodic boundary class {bad} has {} members, expected {}",
            members[bad], expected[bad]
        )));
    }
    Ok((dof, count))
}

impl CellMesh {
    pub fn build(shape: &RadialShape, case: Case, level: u32) -> Result<CellMesh> {
        let layout = build_macro_patches(shape, case)?;
        refine_to_level(&layout, level)
    }

    pub fn case(&self) -> Case {
        self.layout.case
    }

    pub fn shape(&self) -> &RadialShape {
        &self.layout.shape
    }

    pub fn triangle_points(&self, t: usize) -> [Vec2; 3] {
        self.triangles[t].vertices.map(|v| self.vertices[v])
    }

    pub fn triangle_area(&self, t: usize) -> f64 {
        let [a, b, c] = self.triangle_points(t);
        0.5 * cross(b - a, c - a)
    }

    /// Rate of change of every vertex position when the shape coefficients
    /// move along `direction`. Vertex positions are affine in the coefficients,
    /// so this is exact for finite steps too.
    pub fn vertex_velocities(&self, direction: &[f64]) -> Vec<Vec2> {
        let n = (1u32 << self.level) as f64;
        let radial = |phi: f64| {
            RadialShape::direction_profile(direction, phi) * Vec2::new(phi.cos(), phi.sin())
        };
        let corner_velocity = |id: usize| {
            if (INNER_BASE..OUTER_BASE).contains(&id) {
                radial((id - INNER_BASE) as f64 * FRAC_PI_4)
            } else {
                Vec2::zeros()
            }
        };
        self.vertex_origin
            .iter()
            .map(|&(p, [a, b])| {
                let patch = &self.layout.patches[p];
                let (l1, l2) = (a as f64 / n, b as f64 / n);
                match patch.curved {
                    // corner 0 is the center or an outer point, both fixed
                    Some(edge) => {
                        let u = l1 + l2;
                        if u <= 0.0 {
                            return Vec2::zeros();
                        }
                        let phi = edge.phi_start + (l2 / u) * (edge.phi_end - edge.phi_start);
                        u * radial(phi)
                    }
                    None => {
                        let [c0, c1, c2] = patch.corner_ids.map(corner_velocity);
                        (1.0 - l1 - l2) * c0 + l1 * c1 + l2 * c2
                    }
                }
            })
            .collect()
    }

    fn check_quality(&self) -> Result<()> {
        for t in 0..self.triangles.len() {
            let pts = self.triangle_points(t);
            if cross(pts[1] - pts[0], pts[2] - pts[0]) <= 0.0 {
                return Err(Error::Mesh(format!("triangle {t} is inverted")));
            }
            let angle = min_angle_deg(pts);
            if angle < MIN_ANGLE_DEG {
                return Err(Error::Mesh(format!(
                    "triangle {t} has min angle {angle:.2} deg"
                )));
            }
        }
        Ok(())
    }

    /// Integrates `f(point, region)` over the exact curved geometry of the
    /// cell (or of the matrix part only, in the perforated case). Each patch
    /// is written in collapsed coordinates `x = (1 - u) p0 + u c(s)`, where
    /// the integrand is smooth, and integrated with composite Gauss-Legendre.
    pub fn integrate_exact<F>(&self, mut f: F) -> Result<f64>
    where
        F: FnMut(Vec2, Region) -> Result<f64>,
    {
        let panels = (1usize << self.level).max(4);
        let nodes = gauss_legendre_nodes(panels);
        let shape = self.shape();
        let mut total = 0.0;
        for patch in &self.layout.patches {
            let p0 = patch.corners[0];
            for &(s, ws) in &nodes {
                let (c, dc) = patch.edge_point(shape, s);
                let det = cross(c - p0, dc).abs();
                for &(u, wu) in &nodes {
                    let x = (1.0 - u) * p0 + u * c;
                    total += ws * wu * u * det * f(x, patch.region)?;
                }
            }
        }
        Ok(total)
    }

    /// Midpoint quadrature on the interface: one node per segment, weighted
    /// by the exact arclength density.
    pub fn interface_quadrature(&self) -> Vec<InterfaceNode> {
        let shape = self.shape();
        self.interface_edges
            .iter()
            .enumerate()
            .map(|(edge, e)| {
                let phi = 0.5 * (e.phi[0] + e.phi[1]);
                let (point, normal) = shape.point_and_normal(phi);
                InterfaceNode {
                    edge,
                    phi,
                    point,
                    normal,
                    weight: shape.speed(phi) * (e.phi[1] - e.phi[0]),
                }
            })
            .collect()
    }

    /// Vertices with the given exact x and/or y coordinate.
    pub fn side_vertices(&self, x_side: Option<f64>, y_side: Option<f64>) -> Vec<usize> {
        (0..self.vertices.len())
            .filter(|&v| {
                let p = self.vertices[v];
                x_side.map_or(true, |x| p.x == x) && y_side.map_or(true, |y| p.y == y)
            })
            .collect()
    }

    /// Plain-text export: `vertex x y`, `triangle i j k region`, `interface i j`.
    pub fn export_text(&self) -> String {
        let mut out = String::new();
        for p in &self.vertices {
            let _ = writeln!(out, "vertex {:.16e} {:.16e}", p.x, p.y);
        }
        for t in &self.triangles {
            let [i, j, k] = t.vertices;
            let _ = writeln!(out, "triangle {i} {j} {k} {}", t.region.label());
        }
        for e in &self.interface_edges {
            let _ = writeln!(out, "interface {} {}", e.vertices[0], e.vertices[1]);
        }
        out
    }
}

pub(crate) fn cross(a: Vec2, b: Vec2) -> f64 {
    a.x * b.y - a.y * b.x
}

fn min_angle_deg(p: [Vec2; 3]) -> f64 {
    let mut min = f64::INFINITY;
    for k in 0..3 {
        let a = p[(k + 1) % 3] - p[k];
        let b = p[(k + 2) % 3] - p[k];
        let cos = a.dot(&b) / (a.norm() * b.norm());
        min = min.min(cos.clamp(-1.0, 1.0).acos().to_degrees());
    }
    min
}

const GL_X: [f64; 5] = [
    -0.906_179_845_938_664,
    -0.538_469_310_105_683,
    0.0,
    0.538_469_310_105_683,
    0.906_179_845_938_664,
];
const GL_W: [f64; 5] = [
    0.236_926_885_056_189_1,
    0.478_628_670_499_366_5,
    0.568_888_888_888_888_9,
    0.478_628_670_499_366_5,
    0.236_926_885_056_189_1,
];

/// Nodes and weights of composite 5-point Gauss-Legendre on `[0, 1]`.
pub(crate) fn gauss_legendre_nodes(panels: usize) -> Vec<(f64, f64)> {
    let h = 1.0 / panels as f64;
    let mut out = Vec::with_capacity(5 * panels);
    for p in 0..panels {
        let mid = (p as f64 + 0.5) * h;
        for k in 0..5 {
            out.push((mid + 0.5 * h * GL_X[k], 0.5 * h * GL_W[k]));
        }
    }
    out
}

fn gauss_legendre<F: Fn(f64) -> f64>(f: F, panels: usize) -> f64 {
    gauss_legendre_nodes(panels)
        .into_iter()
        .map(|(x, w)| w * f(x))
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{polar_angle, rotate_quarter};
    use approx::assert_relative_eq;
    use std::f64::consts::PI;

    fn circle() -> RadialShape {
        RadialShape::circle(4, 0.25).unwrap()
    }

    fn wobbly() -> RadialShape {
        RadialShape::from_coeffs(vec![0.24, 0.03, -0.01, 0.02, 0.015, 0.0, 0.005]).unwrap()
    }

    #[test]
    fn macro_patch_counts() {
        let mix = build_macro_patches(&circle(), Case::Mixture).unwrap();
        assert_eq!(mix.patches.len(), 28);
        assert_eq!(
            mix.patches.iter().filter(|p| p.region == Region::Inclusion).count(),
            8
        );
        let per = build_macro_patches(&circle(), Case::Perforated).unwrap();
        assert_eq!(per.patches.len(), 20);
    }

    #[test]
    fn macro_patch_areas() {
        let mix = build_macro_patches(&circle(), Case::Mixture).unwrap();
        assert_relative_eq!(mix.total_area(), 1.0, epsilon = 1e-6);
        let per = build_macro_patches(&circle(), Case::Perforated).unwrap();
        assert_relative_eq!(per.total_area(), 1.0 - PI / 16.0, epsilon = 1e-6);
        let inclusion: f64 = mix
            .patches
            .iter()
            .filter(|p| p.region == Region::Inclusion)
            .map(|p| p.area(&mix.shape))
            .sum();
        assert_relative_eq!(inclusion, circle().area(), epsilon = 1e-12);
    }

    #[test]
    fn curved_patch_area_matches_closed_form() {
        let s = wobbly();
        let mix = build_macro_patches(&s, Case::Mixture).unwrap();
        let inclusion: f64 = mix
            .patches
            .iter()
            .filter(|p| p.region == Region::Inclusion)
            .map(|p| p.area(&s))
            .sum();
        assert_relative_eq!(inclusion, s.area(), epsilon = 1e-12);
        assert_relative_eq!(mix.total_area(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn triangle_counts() {
        for level in 0..=3 {
            let m = CellMesh::build(&circle(), Case::Mixture, level).unwrap();
            assert_eq!(m.triangles.len(), 28 << (2 * level));
            let p = CellMesh::build(&circle(), Case::Perforated, level).unwrap();
            assert_eq!(p.triangles.len(), 20 << (2 * level));
        }
        let m = CellMesh::build(&circle(), Case::Mixture, 3).unwrap();
        assert_eq!(m.triangles.len(), 1792);
    }

    #[test]
    #[ignore = "builds a 458752-triangle mesh"]
    fn level_seven_count() {
        let m = CellMesh::build(&circle(), Case::Mixture, 7).unwrap();
        assert_eq!(m.triangles.len(), 458_752);
    }

    #[test]
    fn coarse_periodic_dofs() {
        let m = CellMesh::build(&circle(), Case::Mixture, 0).unwrap();
        // center + 8 interface + 12 outer
        assert_eq!(m.vertices.len(), 21);
        assert_eq!(m.dof_count, 9 + 5);
    }

    #[test]
    fn opposite_sides_have_equal_vertex_counts() {
        for level in 0..4 {
            let m = CellMesh::build(&wobbly(), Case::Mixture, level).unwrap();
            let left = m.side_vertices(Some(0.0), None);
            let right = m.side_vertices(Some(1.0), None);
            let bottom = m.side_vertices(None, Some(0.0));
            let top = m.side_vertices(None, Some(1.0));
            assert_eq!(left.len(), right.len());
            assert_eq!(top.len(), bottom.len());
            assert_eq!(left.len(), 3 * (1 << level) + 1);
            for &l in &left {
                let y = m.vertices[l].y;
                let partner = right.iter().find(|&&r| m.vertices[r].y == y).unwrap();
                assert_eq!(m.dof_of_vertex[l], m.dof_of_vertex[*partner]);
            }
        }
    }

    #[test]
    fn areas_sum_to_one() {
        for level in 0..5 {
            let m = CellMesh::build(&wobbly(), Case::Mixture, level).unwrap();
            let total: f64 = (0..m.triangles.len()).map(|t| m.triangle_area(t)).sum();
            assert!((total - 1.0).abs() <= 1e-12, "{total}");
        }
    }

    #[test]
    fn interface_vertices_lie_on_curve() {
        let s = wobbly();
        let m = CellMesh::build(&s, Case::Mixture, 3).unwrap();
        assert_eq!(m.interface_edges.len(), 8 * 8);
        for e in &m.interface_edges {
            for (k, &v) in e.vertices.iter().enumerate() {
                assert!((m.vertices[v] - s.point(e.phi[k])).norm() <= 1e-12);
            }
            assert!(e.inclusion_triangle.is_some());
        }
    }

    #[test]
    fn region_labels_match_geometry() {
        let s = wobbly();
        let m = CellMesh::build(&s, Case::Mixture, 3).unwrap();
        for t in 0..m.triangles.len() {
            let [a, b, c] = m.triangle_points(t);
            let g = (a + b + c) / 3.0;
            let r = (g - center()).norm();
            let inside = r < s.radius(polar_angle(g));
            assert_eq!(inside, m.triangles[t].region == Region::Inclusion, "triangle {t}");
        }
    }

    #[test]
    fn interface_quadrature_weights() {
        let m = CellMesh::build(&circle(), Case::Mixture, 5).unwrap();
        let nodes = m.interface_quadrature();
        let total: f64 = nodes.iter().map(|n| n.weight).sum();
        assert_relative_eq!(total, PI / 2.0, epsilon = 1e-6);
        for n in &nodes {
            assert_relative_eq!(n.normal.norm(), 1.0, epsilon = 1e-14);
            assert!(n.normal.dot(&(n.point - center())) > 0.0);
        }
        let coarser = CellMesh::build(&circle(), Case::Mixture, 4).unwrap();
        assert_eq!(nodes.len(), 2 * coarser.interface_quadrature().len());
    }

    #[test]
    fn exact_integration_recovers_areas() {
        let s = wobbly();
        let m = CellMesh::build(&s, Case::Mixture, 2).unwrap();
        let inclusion = m
            .integrate_exact(|_, r| Ok(if r == Region::Inclusion { 1.0 } else { 0.0 }))
            .unwrap();
        assert_relative_eq!(inclusion, s.area(), epsilon = 1e-13);
        let total = m.integrate_exact(|_, _| Ok(1.0)).unwrap();
        assert_relative_eq!(total, 1.0, epsilon = 1e-13);
        // second moment of the inclusion about the center: (1/4) int r^4 dphi
        let moment = m
            .integrate_exact(|x, r| {
                Ok(if r == Region::Inclusion { (x - center()).norm_squared() } else { 0.0 })
            })
            .unwrap();
        let reference = 0.25 * gauss_legendre(|t| s.radius(t * std::f64::consts::TAU).powi(4), 64)
            * std::f64::consts::TAU;
        assert_relative_eq!(moment, reference, epsilon = 1e-13);
    }

    #[test]
    fn quarter_rotation_rotates_the_mesh() {
        let s = wobbly();
        let a = CellMesh::build(&s, Case::Mixture, 2).unwrap();
        let b = CellMesh::build(&s.rotated_quarter(), Case::Mixture, 2).unwrap();
        assert_eq!(a.vertices.len(), b.vertices.len());
        for p in &a.vertices {
            let q = rotate_quarter(*p);
            let q = Vec2::new(q.x.rem_euclid(1.0), q.y.rem_euclid(1.0));
            let hit = b.vertices.iter().any(|v| {
                let w = Vec2::new(v.x.rem_euclid(1.0), v.y.rem_euclid(1.0));
                (w - q).norm() <= 1e-12
            });
            assert!(hit, "{p:?} has no rotated partner");
        }
    }

    #[test]
    fn meshing_is_deterministic() {
        let a = CellMesh::build(&wobbly(), Case::Perforated, 3).unwrap();
        let b = CellMesh::build(&wobbly(), Case::Perforated, 3).unwrap();
        assert_eq!(a.vertices, b.vertices);
        assert_eq!(a.triangles, b.triangles);
        assert_eq!(a.interface_edges, b.interface_edges);
    }

    #[test]
    fn vertex_velocities_match_remeshing() {
        let s = wobbly();
        let m = CellMesh::build(&s, Case::Mixture, 2).unwrap();
        let mut dir = vec![0.0; s.len()];
        dir[0] = 0.3;
        dir[3] = -1.0;
        dir[6] = 0.5;
        let vel = m.vertex_velocities(&dir);
        let eps = 1e-3;
        let moved = CellMesh::build(&s.stepped(&dir, eps).unwrap(), Case::Mixture, 2).unwrap();
        for v in 0..m.vertices.len() {
            let predicted = m.vertices[v] + eps * vel[v];
            assert!((moved.vertices[v] - predicted).norm() < 1e-13, "vertex {v}");
        }
        // boundary vertices never move
        for v in m.side_vertices(Some(0.0), None) {
            assert_eq!(vel[v], Vec2::zeros());
        }
    }

    #[test]
    fn export_format() {
        let m = CellMesh::build(&circle(), Case::Mixture, 0).unwrap();
        let text = m.export_text();
        assert_eq!(text.lines().filter(|l| l.starts_with("vertex ")).count(), 21);
        assert_eq!(text.lines().filter(|l| l.starts_with("triangle ")).count(), 28);
        assert_eq!(text.lines().filter(|l| l.starts_with("interface ")).count(), 8);
    }

    #[test]
    fn eccentric_shape_is_rejected() {
        // a thin sliver that squashes the fan triangles
        let mut c = vec![0.0; 9];
        c[0] = 0.2;
        c[7] = 0.195;
        let s = RadialShape::from_coeffs(c).unwrap();
        assert!(s.validate().is_ok());
        assert!(matches!(
            CellMesh::build(&s, Case::Mixture, 2),
            Err(Error::Mesh(_))
        ));
    }
}
