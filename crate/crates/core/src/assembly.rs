//! Global assembly of the Galerkin and micromorphic systems.
//!
//! For the micromorphic methods every node carries `phi` followed by the
//! `dim` components of `g`. The element bilinear form is
//!
//! ```text
//! Da phi dphi + (u . grad phi) dphi + (1/Pe) grad phi . grad dphi
//!   + H (grad phi - g) . (grad dphi - dg) + K g . dg + A grad g : grad dg
//! ```
//!
//! with the source `F dphi` and Neumann flux `t_p dphi` on the right-hand
//! side. `g` carries no essential boundary conditions.

use rayon::prelude::*;

use crate::config::{Method, ProblemConfig, Velocity};
use crate::error::{invalid, Error, Result};
use crate::fem::{element_points, gauss_rule, shape_eval, QuadratureRule, ShapeEval};
use crate::linsolve::{self, CsrMatrix, SolveReport};
use crate::mesh::{essential_values, BoundaryKind, BoundaryRegion, Point, StructuredMesh};
use crate::stabilization::{build_tensors, build_tensors_mzad, StabilizationTensors};

/// Equation numbering: node-major, `phi` first.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DofMap {
    pub method: Method,
    pub dim: usize,
    pub num_nodes: usize,
}

impl DofMap {
    pub fn new(method: Method, dim: usize, num_nodes: usize) -> Self {
        Self { method, dim, num_nodes }
    }

    pub fn dofs_per_node(&self) -> usize {
        if self.method.has_micromorphic_field() {
            1 + self.dim
        } else {
            1
        }
    }

    pub fn total_dofs(&self) -> usize {
        self.num_nodes * self.dofs_per_node()
    }

    pub fn phi(&self, node: usize) -> usize {
        node * self.dofs_per_node()
    }

    /// Equation of component `i` of `g` at `node`.
    pub fn g(&self, node: usize, i: usize) -> usize {
        debug_assert!(self.method.has_micromorphic_field() && i < self.dim);
        node * self.dofs_per_node() + 1 + i
    }

    pub fn is_phi(&self, dof: usize) -> bool {
        dof % self.dofs_per_node() == 0
    }
}

/// Assembled coupled system.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseSystem {
    pub matrix: CsrMatrix,
    pub rhs: Vec<f64>,
    pub dofs: DofMap,
    pub dirichlet_done: bool,
}

/// Nodal solution. `g` is present for the micromorphic methods only; in 1D
/// its second component is zero.
#[derive(Debug, Clone, PartialEq)]
pub struct SolutionField {
    pub dim: usize,
    pub method: Method,
    pub phi: Vec<f64>,
    pub g: Option<Vec<[f64; 2]>>,
}

/// Values of a finite element field at a point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PointValue {
    pub phi: f64,
    pub grad_phi: [f64; 2],
    pub g: [f64; 2],
    /// `grad_g[i][j] = d g_i / d x_j`.
    pub grad_g: [[f64; 2]; 2],
}

impl SolutionField {
    pub fn from_dofs(dofs: &DofMap, x: &[f64]) -> Self {
        let phi = (0..dofs.num_nodes).map(|n| x[dofs.phi(n)]).collect();
        let g = dofs.method.has_micromorphic_field().then(|| {
            (0..dofs.num_nodes)
                .map(|n| {
                    let mut v = [0.0; 2];
                    for (i, vi) in v.iter_mut().enumerate().take(dofs.dim) {
                        *vi = x[dofs.g(n, i)];
                    }
                    v
                })
                .collect()
        });
        Self { dim: dofs.dim, method: dofs.method, phi, g }
    }

    pub fn to_dofs(&self) -> Vec<f64> {
        let dofs = DofMap::new(self.method, self.dim, self.phi.len());
        let mut x = vec![0.0; dofs.total_dofs()];
        for (n, p) in self.phi.iter().enumerate() {
            x[dofs.phi(n)] = *p;
            if let Some(g) = &self.g {
                for i in 0..self.dim {
                    x[dofs.g(n, i)] = g[n][i];
                }
            }
        }
        x
    }

    pub fn g_component(&self, i: usize) -> Option<Vec<f64>> {
        self.g.as_ref().map(|g| g.iter().map(|v| v[i]).collect())
    }

    /// Interpolated field at `natural` inside element `e`.
    pub fn eval_in_element(&self, mesh: &StructuredMesh, e: usize, natural: Point) -> Result<PointValue> {
        let s = shape_eval(&mesh.element_coords(e), natural)?;
        Ok(self.eval_shape(mesh.element(e), &s))
    }

    pub(crate) fn eval_shape(&self, nodes: &[usize], s: &ShapeEval) -> PointValue {
        let mut out = PointValue { phi: 0.0, grad_phi: [0.0; 2], g: [0.0; 2], grad_g: [[0.0; 2]; 2] };
        for (a, &n) in nodes.iter().enumerate() {
            out.phi += s.n[a] * self.phi[n];
            for j in 0..2 {
                out.grad_phi[j] += s.grad[a][j] * self.phi[n];
            }
            if let Some(g) = &self.g {
                for i in 0..2 {
                    out.g[i] += s.n[a] * g[n][i];
                    for j in 0..2 {
                        out.grad_g[i][j] += s.grad[a][j] * g[n][i];
                    }
                }
            }
        }
        out
    }

    /// Interpolated field at a physical point.
    pub fn eval(&self, mesh: &StructuredMesh, x: Point) -> Result<PointValue> {
        let (e, natural) = mesh.locate(x);
        self.eval_in_element(mesh, e, natural)
    }

    /// Generalized strain `grad phi - g` at every Gauss point, element by
    /// element. Empty for Galerkin solutions.
    pub fn generalized_strain(&self, mesh: &StructuredMesh) -> Result<Vec<[f64; 2]>> {
        if self.g.is_none() {
            return Ok(Vec::new());
        }
        let rule = gauss_rule(mesh.dim())?;
        let mut out = Vec::with_capacity(mesh.num_elements() * rule.points.len());
        for e in 0..mesh.num_elements() {
            for p in &rule.points {
                let v = self.eval_in_element(mesh, e, *p)?;
                out.push([v.grad_phi[0] - v.g[0], v.grad_phi[1] - v.g[1]]);
            }
        }
        Ok(out)
    }
}

/// Micromorphic tensors per element (`None` for Galerkin).
pub fn element_tensors(mesh: &StructuredMesh, config: &ProblemConfig) -> Result<Option<Vec<StabilizationTensors>>> {
    let h_dir = config.stabilization_sizes(mesh);
    let dim = mesh.dim();
    let tensors = |e: usize| -> Result<StabilizationTensors> {
        let u = config.velocity.eval(mesh.centroid(e));
        let t = build_tensors(&u[..dim], h_dir, config.pe, config.da)?;
        match config.method {
            Method::Mzad => build_tensors_mzad(config.mzad_p.unwrap_or(t.kc + t.kr), dim),
            _ => Ok(t),
        }
    };
    match config.method {
        Method::Galerkin => Ok(None),
        Method::Mmad | Method::Mzad => (0..mesh.num_elements()).map(tensors).collect::<Result<Vec<_>>>().map(Some),
    }
}

struct ElementSystem {
    dofs: Vec<usize>,
    matrix: Vec<f64>,
    rhs: Vec<f64>,
}

fn element_system(
    mesh: &StructuredMesh,
    config: &ProblemConfig,
    dofs: &DofMap,
    rule: &QuadratureRule,
    e: usize,
    tensors: Option<&StabilizationTensors>,
) -> Result<ElementSystem> {
    let nodes = mesh.element(e);
    let coords = mesh.element_coords(e);
    let dim = mesh.dim();
    let per = dofs.dofs_per_node();
    let nloc = nodes.len() * per;
    let mut ke = vec![0.0; nloc * nloc];
    let mut fe = vec![0.0; nloc];
    let inv_pe = 1.0 / config.pe;
    let points = element_points(&coords, rule).map_err(|err| match err {
        Error::DegenerateElement { det_j, .. } => Error::DegenerateElement { element: e, det_j },
        other => other,
    })?;
    for (s, w) in points {
        let x = s.physical_point(&coords);
        let u = config.velocity.eval(x);
        let f = config.source_at(x);
        for a in 0..nodes.len() {
            let ra = a * per;
            fe[ra] += w * f * s.n[a];
            for b in 0..nodes.len() {
                let cb = b * per;
                let ga = s.grad[a];
                let gb = s.grad[b];
                let nn = s.n[a] * s.n[b];
                let mut phiphi = config.da * nn
                    + s.n[a] * (u[0] * gb[0] + u[1] * gb[1])
                    + inv_pe * (ga[0] * gb[0] + ga[1] * gb[1]);
                if let Some(t) = tensors {
                    let h = &t.h;
                    let mut hgb = [0.0; 2];
                    let mut hga = [0.0; 2];
                    for i in 0..dim {
                        for j in 0..dim {
                            hgb[i] += h[i][j] * gb[j];
                            hga[i] += h[i][j] * ga[j];
                        }
                    }
                    phiphi += ga[0] * hgb[0] + ga[1] * hgb[1];
                    let grad_dot = ga[0] * gb[0] + ga[1] * gb[1];
                    for i in 0..dim {
                        // phi_a row, g_b column: -(H g) . grad dphi
                        ke[ra * nloc + cb + 1 + i] -= w * s.n[b] * hga[i];
                        // g_a row, phi_b column: -(H grad phi) . dg
                        ke[(ra + 1 + i) * nloc + cb] -= w * s.n[a] * hgb[i];
                        for j in 0..dim {
                            let mut v = nn * (h[i][j] + t.k[i][j]);
                            if i == j {
                                v += t.a_coeff * grad_dot;
                            }
                            ke[(ra + 1 + i) * nloc + cb + 1 + j] += w * v;
                        }
                    }
                }
                ke[ra * nloc + cb] += w * phiphi;
            }
        }
    }
    if ke.iter().chain(&fe).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite(format!("element {e} coefficients")));
    }
    let mut gdofs = Vec::with_capacity(nloc);
    for &n in nodes {
        gdofs.push(dofs.phi(n));
        if per > 1 {
            for i in 0..dim {
                gdofs.push(dofs.g(n, i));
            }
        }
    }
    Ok(ElementSystem { dofs: gdofs, matrix: ke, rhs: fe })
}

fn check_config(mesh: &StructuredMesh, config: &ProblemConfig) -> Result<()> {
    config.validate()?;
    if config.mesh != mesh.counts() {
        return Err(invalid(format!(
            "config mesh {:?} does not match the mesh {:?}",
            config.mesh,
            mesh.counts()
        )));
    }
    Ok(())
}

/// Assembles the global system with elements visited in `order`.
pub fn assemble_in_order(mesh: &StructuredMesh, config: &ProblemConfig, order: &[usize]) -> Result<SparseSystem> {
    check_config(mesh, config)?;
    let regions = config.regions(mesh)?;
    let tensors = element_tensors(mesh, config)?;
    let dofs = DofMap::new(config.method, mesh.dim(), mesh.num_nodes());
    let rule = gauss_rule(mesh.dim())?;
    let locals = order
        .iter()
        .map(|&e| element_system(mesh, config, &dofs, &rule, e, tensors.as_ref().map(|t| &t[e])))
        .collect::<Result<Vec<_>>>()?;
    scatter(mesh, dofs, &regions, &locals)
}

/// Serial assembly in element order.
pub fn assemble(mesh: &StructuredMesh, config: &ProblemConfig) -> Result<SparseSystem> {
    let order: Vec<usize> = (0..mesh.num_elements()).collect();
    assemble_in_order(mesh, config, &order)
}

/// Element kernels evaluated on the rayon pool. The scatter is sequential in
/// element order, so the result equals [`assemble`] bit for bit.
pub fn assemble_parallel(mesh: &StructuredMesh, config: &ProblemConfig) -> Result<SparseSystem> {
    check_config(mesh, config)?;
    let regions = config.regions(mesh)?;
    let tensors = element_tensors(mesh, config)?;
    let dofs = DofMap::new(config.method, mesh.dim(), mesh.num_nodes());
    let rule = gauss_rule(mesh.dim())?;
    let locals = (0..mesh.num_elements())
        .into_par_iter()
        .map(|e| element_system(mesh, config, &dofs, &rule, e, tensors.as_ref().map(|t| &t[e])))
        .collect::<Result<Vec<_>>>()?;
    scatter(mesh, dofs, &regions, &locals)
}

fn scatter(mesh: &StructuredMesh, dofs: DofMap, regions: &[BoundaryRegion], locals: &[ElementSystem]) -> Result<SparseSystem> {
    let n = dofs.total_dofs();
    let mut triplets = Vec::with_capacity(locals.iter().map(|l| l.matrix.len()).sum());
    let mut rhs = vec![0.0; n];
    for l in locals {
        let k = l.dofs.len();
        for (a, &ra) in l.dofs.iter().enumerate() {
            rhs[ra] += l.rhs[a];
            for (b, &cb) in l.dofs.iter().enumerate() {
                triplets.push((ra, cb, l.matrix[a * k + b]));
            }
        }
    }
    add_neumann(mesh, &dofs, regions, &mut rhs)?;
    Ok(SparseSystem {
        matrix: CsrMatrix::from_triplets(n, n, &triplets)?,
        rhs,
        dofs,
        dirichlet_done: false,
    })
}

/// Adds `int t_p dphi` over Neumann edges (end points in 1D).
fn add_neumann(mesh: &StructuredMesh, dofs: &DofMap, regions: &[BoundaryRegion], rhs: &mut [f64]) -> Result<()> {
    let rule = gauss_rule(1)?;
    for r in regions.iter().filter(|r| r.kind == BoundaryKind::Neumann) {
        if mesh.dim() == 1 {
            for &node in &r.node_ids {
                rhs[dofs.phi(node)] += r.profile.eval(mesh.nodes()[node]);
            }
            continue;
        }
        let mut in_region = vec![false; mesh.num_nodes()];
        for &node in &r.node_ids {
            in_region[node] = true;
        }
        for (_, [n0, n1]) in mesh.boundary_edges() {
            if !(in_region[n0] && in_region[n1]) {
                continue;
            }
            let (p0, p1) = (mesh.nodes()[n0], mesh.nodes()[n1]);
            let half_len = 0.5 * (p1[0] - p0[0]).hypot(p1[1] - p0[1]);
            for (q, w) in rule.points.iter().zip(&rule.weights) {
                let (n_0, n_1) = (0.5 * (1.0 - q[0]), 0.5 * (1.0 + q[0]));
                let x = [n_0 * p0[0] + n_1 * p1[0], n_0 * p0[1] + n_1 * p1[1]];
                let t = r.profile.eval(x) * w * half_len;
                rhs[dofs.phi(n0)] += t * n_0;
                rhs[dofs.phi(n1)] += t * n_1;
            }
        }
    }
    Ok(())
}

/// Imposes `phi = value` on the listed nodes by row replacement and column
/// elimination with a right-hand-side lift. Repeated application is a no-op.
pub fn apply_essential_values(system: &mut SparseSystem, values: &[(usize, f64)]) -> Result<()> {
    let dofs = system.dofs;
    let n = dofs.total_dofs();
    let mut prescribed: Vec<Option<f64>> = vec![None; n];
    for &(node, v) in values {
        if node >= dofs.num_nodes {
            return Err(invalid(format!("constraint on node {node}, mesh has {} nodes", dofs.num_nodes)));
        }
        if !v.is_finite() {
            return Err(Error::NonFinite(format!("prescribed value at node {node}")));
        }
        prescribed[dofs.phi(node)] = Some(v);
    }
    let row_ptr = system.matrix.row_ptr().to_vec();
    let cols = system.matrix.col_idx().to_vec();
    let vals = system.matrix.values_mut();
    for r in 0..n {
        let span = row_ptr[r]..row_ptr[r + 1];
        if let Some(v) = prescribed[r] {
            for k in span {
                vals[k] = if cols[k] == r { 1.0 } else { 0.0 };
            }
            system.rhs[r] = v;
        } else {
            for k in span {
                if let Some(v) = prescribed[cols[k]] {
                    system.rhs[r] -= vals[k] * v;
                    vals[k] = 0.0;
                }
            }
        }
    }
    system.dirichlet_done = true;
    Ok(())
}

/// Imposes all essential data (Dirichlet and interior constraints) of
/// `regions` on the `phi` unknowns.
pub fn apply_dirichlet(system: &mut SparseSystem, mesh: &StructuredMesh, regions: &[BoundaryRegion]) -> Result<()> {
    apply_essential_values(system, &essential_values(mesh, regions))
}

/// Assemble, constrain, solve and scatter.
pub fn solve_case(mesh: &StructuredMesh, config: &ProblemConfig) -> Result<(SolutionField, SolveReport)> {
    let mut system = assemble(mesh, config)?;
    let regions = config.regions(mesh)?;
    apply_dirichlet(&mut system, mesh, &regions)?;
    let report = linsolve::solve(&system.matrix, &system.rhs, linsolve::DEFAULT_TOL)?;
    Ok((SolutionField::from_dofs(&system.dofs, &report.solution), report))
}

/// Convection block `C_ab = int N_a (u . grad N_b)` on scalar nodal unknowns.
pub fn convection_matrix(mesh: &StructuredMesh, velocity: &Velocity) -> Result<CsrMatrix> {
    let rule = gauss_rule(mesh.dim())?;
    let mut triplets = Vec::with_capacity(mesh.num_elements() * 16);
    for e in 0..mesh.num_elements() {
        let nodes = mesh.element(e);
        let coords = mesh.element_coords(e);
        for (s, w) in element_points(&coords, &rule)? {
            let u = velocity.eval(s.physical_point(&coords));
            for (a, &na) in nodes.iter().enumerate() {
                for (b, &nb) in nodes.iter().enumerate() {
                    let gb = s.grad[b];
                    triplets.push((na, nb, w * s.n[a] * (u[0] * gb[0] + u[1] * gb[1])));
                }
            }
        }
    }
    CsrMatrix::from_triplets(mesh.num_nodes(), mesh.num_nodes(), &triplets)
}

/// Micromorphic field induced by a prescribed primary gradient: the `g`
/// solving the second (micromorphic) equation of the coupled system with
/// `grad phi` replaced by `grad_phi(x)`.
pub fn micromorphic_response(
    mesh: &StructuredMesh,
    config: &ProblemConfig,
    grad_phi: &dyn Fn(Point) -> [f64; 2],
) -> Result<Vec<[f64; 2]>> {
    check_config(mesh, config)?;
    let tensors = element_tensors(mesh, config)?
        .ok_or_else(|| invalid("the Galerkin method has no micromorphic field"))?;
    let dim = mesh.dim();
    let rule = gauss_rule(dim)?;
    let n = mesh.num_nodes() * dim;
    let mut triplets = Vec::new();
    let mut rhs = vec![0.0; n];
    for (e, t) in tensors.iter().enumerate() {
        let nodes = mesh.element(e);
        let coords = mesh.element_coords(e);
        for (s, w) in element_points(&coords, &rule)? {
            let gp = grad_phi(s.physical_point(&coords));
            for (a, &na) in nodes.iter().enumerate() {
                for i in 0..dim {
                    let hg: f64 = (0..dim).map(|j| t.h[i][j] * gp[j]).sum();
                    rhs[na * dim + i] += w * s.n[a] * hg;
                    for (b, &nb) in nodes.iter().enumerate() {
                        let grad_dot = s.grad[a][0] * s.grad[b][0] + s.grad[a][1] * s.grad[b][1];
                        for j in 0..dim {
                            let mut v = s.n[a] * s.n[b] * (t.h[i][j] + t.k[i][j]);
                            if i == j {
                                v += t.a_coeff * grad_dot;
                            }
                            triplets.push((na * dim + i, nb * dim + j, w * v));
                        }
                    }
                }
            }
        }
    }
    let a = CsrMatrix::from_triplets(n, n, &triplets)?;
    let rep = linsolve::solve(&a, &rhs, linsolve::DEFAULT_TOL)?;
    Ok((0..mesh.num_nodes())
        .map(|node| {
            let mut v = [0.0; 2];
            for (i, vi) in v.iter_mut().enumerate().take(dim) {
                *vi = rep.solution[node * dim + i];
            }
            v
        })
        .collect())
}
