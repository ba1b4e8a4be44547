//! Structured meshes on the unit interval and the unit square.
//!
//! Nodes are numbered row-major: node `(i, j)` has id `j * (nx + 1) + i`, so a
//! 1D mesh is simply the `j = 0` row. Quads are stored counterclockwise
//! starting from the lower-left corner.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Physical point. The second coordinate is zero on 1D meshes.
pub type Point = [f64; 2];

/// Tolerance used when matching nodes against grid lines.
pub const GRID_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct StructuredMesh {
    dim: usize,
    nx: usize,
    ny: usize,
    h_dir: Vec<f64>,
    nodes: Vec<Point>,
    connectivity: Vec<usize>,
}

impl StructuredMesh {
    /// Equispaced mesh of `n_elements` two-node elements on `[0, 1]`.
    pub fn interval(n_elements: usize) -> Result<Self> {
        if n_elements == 0 {
            return Err(invalid("interval mesh needs at least one element"));
        }
        let n = n_elements;
        let nodes = (0..=n).map(|i| [i as f64 / n as f64, 0.0]).collect();
        let connectivity = (0..n).flat_map(|e| [e, e + 1]).collect();
        Ok(Self {
            dim: 1,
            nx: n,
            ny: 0,
            h_dir: vec![1.0 / n as f64],
            nodes,
            connectivity,
        })
    }

    /// Tensor-product grid of `nx * ny` bilinear quads on `[0, 1]^2`.
    pub fn grid(nx: usize, ny: usize) -> Result<Self> {
        if nx == 0 || ny == 0 {
            return Err(invalid(format!("grid mesh needs positive counts, got {nx}x{ny}")));
        }
        let mut nodes = Vec::with_capacity((nx + 1) * (ny + 1));
        for j in 0..=ny {
            for i in 0..=nx {
                nodes.push([i as f64 / nx as f64, j as f64 / ny as f64]);
            }
        }
        let row = nx + 1;
        let mut connectivity = Vec::with_capacity(4 * nx * ny);
        for j in 0..ny {
            for i in 0..nx {
                let n0 = j * row + i;
                connectivity.extend_from_slice(&[n0, n0 + 1, n0 + row + 1, n0 + row]);
            }
        }
        Ok(Self {
            dim: 2,
            nx,
            ny,
            h_dir: vec![1.0 / nx as f64, 1.0 / ny as f64],
            nodes,
            connectivity,
        })
    }

    /// Builds a mesh from a dimension and per-direction element counts.
    pub fn from_counts(counts: &[usize]) -> Result<Self> {
        match counts {
            [n] => Self::interval(*n),
            [nx, ny] => Self::grid(*nx, *ny),
            _ => Err(invalid(format!("mesh counts must have length 1 or 2, got {}", counts.len()))),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn nx(&self) -> usize {
        self.nx
    }

    pub fn ny(&self) -> usize {
        self.ny
    }

    /// Element counts per direction.
    pub fn counts(&self) -> Vec<usize> {
        if self.dim == 1 {
            vec![self.nx]
        } else {
            vec![self.nx, self.ny]
        }
    }

    /// Element size per direction, `h_i = 1 / n_i`.
    pub fn h_dir(&self) -> &[f64] {
        &self.h_dir
    }

    pub fn nodes(&self) -> &[Point] {
        &self.nodes
    }

    pub fn num_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn nodes_per_element(&self) -> usize {
        if self.dim == 1 {
            2
        } else {
            4
        }
    }

    pub fn num_elements(&self) -> usize {
        self.connectivity.len() / self.nodes_per_element()
    }

    pub fn element(&self, e: usize) -> &[usize] {
        let k = self.nodes_per_element();
        &self.connectivity[e * k..(e + 1) * k]
    }

    pub fn element_coords(&self, e: usize) -> Vec<Point> {
        self.element(e).iter().map(|&n| self.nodes[n]).collect()
    }

    pub fn centroid(&self, e: usize) -> Point {
        let nodes = self.element(e);
        let inv = 1.0 / nodes.len() as f64;
        let mut c = [0.0; 2];
        for &n in nodes {
            c[0] += self.nodes[n][0] * inv;
            c[1] += self.nodes[n][1] * inv;
        }
        c
    }

    pub fn node_id(&self, i: usize, j: usize) -> usize {
        j * (self.nx + 1) + i
    }

    /// Grid indices `(i, j)` of a node.
    pub fn node_ij(&self, id: usize) -> (usize, usize) {
        (id % (self.nx + 1), id / (self.nx + 1))
    }

    pub fn is_boundary_node(&self, id: usize) -> bool {
        let (i, j) = self.node_ij(id);
        if self.dim == 1 {
            i == 0 || i == self.nx
        } else {
            i == 0 || i == self.nx || j == 0 || j == self.ny
        }
    }

    pub fn boundary_nodes(&self) -> Vec<usize> {
        (0..self.num_nodes()).filter(|&n| self.is_boundary_node(n)).collect()
    }

    pub fn interior_nodes(&self) -> Vec<usize> {
        (0..self.num_nodes()).filter(|&n| !self.is_boundary_node(n)).collect()
    }

    /// Element containing `x` together with the natural coordinates of `x`
    /// inside it. Points on shared edges go to the element with the larger
    /// index; points outside the domain are clamped to it.
    pub fn locate(&self, x: Point) -> (usize, Point) {
        let cell = |coord: f64, n: usize| -> (usize, f64) {
            let s = (coord.clamp(0.0, 1.0) * n as f64).min(n as f64);
            let k = (s.floor() as usize).min(n - 1);
            (k, 2.0 * (s - k as f64) - 1.0)
        };
        let (i, xi) = cell(x[0], self.nx);
        if self.dim == 1 {
            (i, [xi, 0.0])
        } else {
            let (j, eta) = cell(x[1], self.ny);
            (j * self.nx + i, [xi, eta])
        }
    }

    /// Edges of the boundary, each as a pair of node ids ordered
    /// counterclockwise, tagged with the side they belong to.
    pub fn boundary_edges(&self) -> Vec<(Side, [usize; 2])> {
        if self.dim == 1 {
            return Vec::new();
        }
        let mut edges = Vec::with_capacity(2 * (self.nx + self.ny));
        for i in 0..self.nx {
            edges.push((Side::Bottom, [self.node_id(i, 0), self.node_id(i + 1, 0)]));
        }
        for j in 0..self.ny {
            edges.push((Side::Right, [self.node_id(self.nx, j), self.node_id(self.nx, j + 1)]));
        }
        for i in (0..self.nx).rev() {
            edges.push((Side::Top, [self.node_id(i + 1, self.ny), self.node_id(i, self.ny)]));
        }
        for j in (0..self.ny).rev() {
            edges.push((Side::Left, [self.node_id(0, j + 1), self.node_id(0, j)]));
        }
        edges
    }

    /// Ids of all nodes inside `region`, in ascending order.
    pub fn select_nodes(&self, region: &Region) -> Result<Vec<usize>> {
        match region {
            Region::Boundary => Ok(self.boundary_nodes()),
            Region::Side(side) => {
                self.check_side(*side)?;
                Ok((0..self.num_nodes())
                    .filter(|&n| side.contains(self.nodes[n], GRID_TOL))
                    .collect())
            }
            Region::Segment { from, to, tol } => {
                if !(*tol >= 0.0) {
                    return Err(invalid(format!("region tolerance must be >= 0, got {tol}")));
                }
                for p in [from, to] {
                    let inside = p.iter().take(self.dim).all(|c| (-GRID_TOL..=1.0 + GRID_TOL).contains(c));
                    if !inside {
                        return Err(invalid(format!("segment endpoint {p:?} lies outside the domain")));
                    }
                }
                Ok((0..self.num_nodes())
                    .filter(|&n| segment_distance(self.nodes[n], *from, *to) <= *tol)
                    .collect())
            }
        }
    }

    fn check_side(&self, side: Side) -> Result<()> {
        if self.dim == 1 && matches!(side, Side::Bottom | Side::Top) {
            return Err(invalid(format!("side {side:?} does not exist on a 1D mesh")));
        }
        Ok(())
    }

    /// True when `x` lies on a grid line in every direction (i.e. on a node
    /// position) within [`GRID_TOL`].
    pub fn is_grid_aligned(&self, x: Point) -> bool {
        self.h_dir.iter().enumerate().all(|(d, h)| {
            let s = x[d] / h;
            (s - s.round()).abs() * h <= GRID_TOL
        })
    }
}

/// Sides of the unit domain. In 1D only `Left` (x = 0) and `Right` (x = 1)
/// exist.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Left,
    Right,
    Bottom,
    Top,
}

impl Side {
    pub fn contains(self, x: Point, tol: f64) -> bool {
        match self {
            Side::Left => x[0].abs() <= tol,
            Side::Right => (x[0] - 1.0).abs() <= tol,
            Side::Bottom => x[1].abs() <= tol,
            Side::Top => (x[1] - 1.0).abs() <= tol,
        }
    }
}

/// Geometric node selector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Region {
    /// The whole boundary.
    Boundary,
    Side(Side),
    /// Nodes within `tol` of the closed segment `from`-`to`.
    Segment { from: Point, to: Point, tol: f64 },
}

fn segment_distance(p: Point, a: Point, b: Point) -> f64 {
    let d = [b[0] - a[0], b[1] - a[1]];
    let len2 = d[0] * d[0] + d[1] * d[1];
    let t = if len2 > 0.0 {
        (((p[0] - a[0]) * d[0] + (p[1] - a[1]) * d[1]) / len2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    let q = [a[0] + t * d[0] - p[0], a[1] + t * d[1] - p[1]];
    (q[0] * q[0] + q[1] * q[1]).sqrt()
}

/// Prescribed value (Dirichlet) or flux (Neumann) as a function of position.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Profile {
    Constant(f64),
    /// `amplitude * sin(2 pi * frequency * x[axis])`.
    Sine { amplitude: f64, frequency: f64, axis: usize },
}

impl Profile {
    pub fn eval(&self, x: Point) -> f64 {
        match self {
            Profile::Constant(c) => *c,
            Profile::Sine { amplitude, frequency, axis } => {
                amplitude * (2.0 * std::f64::consts::PI * frequency * x[*axis]).sin()
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundaryKind {
    Dirichlet,
    Neumann,
    InteriorConstraint,
}

impl BoundaryKind {
    /// Whether the region prescribes values of the primary field.
    pub fn is_essential(self) -> bool {
        !matches!(self, BoundaryKind::Neumann)
    }
}

/// A tagged node set with its value profile.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryRegion {
    pub kind: BoundaryKind,
    pub region: Region,
    pub node_ids: Vec<usize>,
    pub profile: Profile,
}

impl BoundaryRegion {
    pub fn new(mesh: &StructuredMesh, kind: BoundaryKind, region: Region, profile: Profile) -> Result<Self> {
        if kind == BoundaryKind::InteriorConstraint {
            let Region::Segment { from, to, .. } = &region else {
                return Err(invalid("interior constraints must be given as a segment"));
            };
            for p in [from, to] {
                if !mesh.is_grid_aligned(*p) {
                    return Err(invalid(format!(
                        "constraint endpoint {p:?} is not aligned with the grid"
                    )));
                }
            }
        }
        let node_ids = mesh.select_nodes(&region)?;
        Ok(Self { kind, region, node_ids, profile })
    }

    /// `(node, value)` pairs for every node of the region.
    pub fn values(&self, mesh: &StructuredMesh) -> Vec<(usize, f64)> {
        self.node_ids
            .iter()
            .map(|&n| (n, self.profile.eval(mesh.nodes()[n])))
            .collect()
    }
}

/// Resolves overlapping essential regions into one `(node, value)` list.
///
/// Later regions override earlier ones on shared nodes. Neumann regions
/// never produce essential values, so Dirichlet data always wins at corners.
pub fn essential_values(mesh: &StructuredMesh, regions: &[BoundaryRegion]) -> Vec<(usize, f64)> {
    let mut values: Vec<Option<f64>> = vec![None; mesh.num_nodes()];
    for r in regions.iter().filter(|r| r.kind.is_essential()) {
        for (n, v) in r.values(mesh) {
            values[n] = Some(v);
        }
    }
    values
        .into_iter()
        .enumerate()
        .filter_map(|(n, v)| v.map(|v| (n, v)))
        .collect()
}

/// Checks that Dirichlet and Neumann data together tag every boundary node.
pub fn check_boundary_cover(mesh: &StructuredMesh, regions: &[BoundaryRegion]) -> Result<()> {
    let mut tagged = vec![false; mesh.num_nodes()];
    for r in regions.iter().filter(|r| r.kind != BoundaryKind::InteriorConstraint) {
        for &n in &r.node_ids {
            tagged[n] = true;
        }
    }
    match mesh.boundary_nodes().into_iter().find(|&n| !tagged[n]) {
        Some(n) => Err(Error::Config(format!(
            "boundary node {n} at {:?} has no boundary condition",
            mesh.nodes()[n]
        ))),
        None => Ok(()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn interval_counts() {
        let m = StructuredMesh::interval(100).unwrap();
        assert_eq!(m.num_nodes(), 101);
        assert_eq!(m.h_dir(), &[0.01]);
        let m = StructuredMesh::interval(1).unwrap();
        assert_eq!(m.nodes(), &[[0.0, 0.0], [1.0, 0.0]]);
        assert_eq!(m.h_dir(), &[1.0]);
        let m = StructuredMesh::interval(8).unwrap();
        assert_eq!(m.nodes()[3][0], 0.375);
        assert!(StructuredMesh::interval(0).is_err());
    }

    #[test]
    fn grid_counts() {
        let m = StructuredMesh::grid(40, 40).unwrap();
        assert_eq!(m.num_nodes(), 1681);
        assert_eq!(m.num_elements(), 1600);
        assert_eq!(m.h_dir(), &[0.025, 0.025]);
        let m = StructuredMesh::grid(1, 1).unwrap();
        assert_eq!((m.num_nodes(), m.num_elements()), (4, 1));
        let m = StructuredMesh::grid(2, 3).unwrap();
        assert_eq!((m.num_nodes(), m.num_elements()), (12, 6));
        assert_eq!(m.h_dir(), &[0.5, 1.0 / 3.0]);
        assert!(StructuredMesh::grid(0, 3).is_err());
        assert!(StructuredMesh::grid(3, 0).is_err());
    }

    #[test]
    fn quads_are_counterclockwise() {
        let m = StructuredMesh::grid(3, 2).unwrap();
        for e in 0..m.num_elements() {
            let c = m.element_coords(e);
            let area2: f64 = (0..4)
                .map(|k| {
                    let (a, b) = (c[k], c[(k + 1) % 4]);
                    a[0] * b[1] - b[0] * a[1]
                })
                .sum();
            assert!(area2 > 0.0);
        }
    }

    #[test]
    fn select_sides_and_segments() {
        let m = StructuredMesh::grid(40, 40).unwrap();
        assert_eq!(m.select_nodes(&Region::Side(Side::Left)).unwrap().len(), 41);
        let seg = Region::Segment { from: [0.5, 0.0], to: [0.5, 0.5], tol: 1e-12 };
        let ids = m.select_nodes(&seg).unwrap();
        assert_eq!(ids.len(), 21);
        assert!(ids.windows(2).all(|w| w[0] < w[1]));
        let off = Region::Segment { from: [0.33, 0.0], to: [0.33, 1.0], tol: 1e-12 };
        assert!(m.select_nodes(&off).unwrap().is_empty());
        let outside = Region::Segment { from: [0.5, -0.1], to: [0.5, 0.5], tol: 1e-12 };
        assert!(m.select_nodes(&outside).is_err());
        let negative = Region::Segment { from: [0.5, 0.0], to: [0.5, 0.5], tol: -1.0 };
        assert!(m.select_nodes(&negative).is_err());
    }

    #[test]
    fn one_dimensional_sides() {
        let m = StructuredMesh::interval(10).unwrap();
        assert_eq!(m.select_nodes(&Region::Side(Side::Left)).unwrap(), vec![0]);
        assert_eq!(m.select_nodes(&Region::Side(Side::Right)).unwrap(), vec![10]);
        assert!(m.select_nodes(&Region::Side(Side::Top)).is_err());
        assert_eq!(m.boundary_nodes(), vec![0, 10]);
    }

    #[test]
    fn constraint_lines_must_be_grid_aligned() {
        let m = StructuredMesh::grid(40, 40).unwrap();
        let ok = Region::Segment { from: [0.5, 0.0], to: [0.5, 0.5], tol: GRID_TOL };
        let r = BoundaryRegion::new(&m, BoundaryKind::InteriorConstraint, ok, Profile::Constant(1.0)).unwrap();
        assert_eq!(r.node_ids.len(), 21);
        let bad = Region::Segment { from: [0.33, 0.0], to: [0.33, 0.5], tol: GRID_TOL };
        assert!(BoundaryRegion::new(&m, BoundaryKind::InteriorConstraint, bad, Profile::Constant(1.0)).is_err());
    }

    #[test]
    fn dirichlet_wins_at_corners() {
        let m = StructuredMesh::grid(4, 4).unwrap();
        let d = BoundaryRegion::new(&m, BoundaryKind::Dirichlet, Region::Side(Side::Left), Profile::Constant(2.0)).unwrap();
        let n = BoundaryRegion::new(&m, BoundaryKind::Neumann, Region::Side(Side::Top), Profile::Constant(5.0)).unwrap();
        let vals = essential_values(&m, &[d, n]);
        assert_eq!(vals.len(), 5);
        assert!(vals.contains(&(m.node_id(0, 4), 2.0)));
    }

    #[test]
    fn boundary_cover_detects_gaps() {
        let m = StructuredMesh::grid(4, 4).unwrap();
        let d = BoundaryRegion::new(&m, BoundaryKind::Dirichlet, Region::Side(Side::Left), Profile::Constant(0.0)).unwrap();
        assert!(check_boundary_cover(&m, std::slice::from_ref(&d)).is_err());
        let all = BoundaryRegion::new(&m, BoundaryKind::Dirichlet, Region::Boundary, Profile::Constant(0.0)).unwrap();
        check_boundary_cover(&m, &[all]).unwrap();
    }

    #[test]
    fn locate_points() {
        let m = StructuredMesh::grid(4, 2).unwrap();
        let (e, xi) = m.locate([0.3, 0.75]);
        assert_eq!(e, 4 + 1);
        assert!((xi[0] + 0.6).abs() < 1e-12 && (xi[1] - 0.0).abs() < 1e-12);
        let (e, xi) = m.locate([1.0, 1.0]);
        assert_eq!(e, m.num_elements() - 1);
        assert_eq!(xi, [1.0, 1.0]);
    }

    #[test]
    fn boundary_edges_cover_perimeter() {
        let m = StructuredMesh::grid(3, 5).unwrap();
        assert_eq!(m.boundary_edges().len(), 2 * (3 + 5));
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn node_partition(nx in 1usize..30, ny in 1usize..30) {
                let m = StructuredMesh::grid(nx, ny).unwrap();
                prop_assert_eq!(m.interior_nodes().len(), (nx - 1) * (ny - 1));
                prop_assert_eq!(m.boundary_nodes().len(), 2 * (nx + ny));
            }

            #[test]
            fn tensor_structure_and_rebuild(nx in 1usize..50, ny in 1usize..50) {
                let m = StructuredMesh::grid(nx, ny).unwrap();
                let again = StructuredMesh::grid(nx, ny).unwrap();
                prop_assert_eq!(&m, &again);
                let (hx, hy) = (m.h_dir()[0], m.h_dir()[1]);
                for j in 0..=ny {
                    for i in 0..=nx {
                        let p = m.nodes()[m.node_id(i, j)];
                        prop_assert!(p[0] >= 0.0 && p[0] <= 1.0 && p[1] >= 0.0 && p[1] <= 1.0);
                        // at most one rounding apart from i * h
                        prop_assert!((p[0] - i as f64 * hx).abs() <= f64::EPSILON);
                        prop_assert!((p[1] - j as f64 * hy).abs() <= f64::EPSILON);
                    }
                }
            }
        }
    }
}
