//! Reference solutions, error norms, convergence rates and numerical checks
//! of the well-posedness constants.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::assembly::{assemble, convection_matrix, element_tensors, micromorphic_response, solve_case, SolutionField};
use crate::config::{Manufactured, Method, ProblemConfig, Source, Velocity};
use crate::error::{invalid, Error, Result};
use crate::fem::{gauss_rule, shape_eval};
use crate::linsolve::{self, CsrMatrix};
use crate::mesh::{essential_values, Point, StructuredMesh};
use crate::stabilization::StabilizationTensors;

/// Closed-form solution of `Da phi + u phi' - phi'' / Pe = F` on `[0, 1]`
/// with `phi(0) = phi(1) = 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Exact1d {
    pe: f64,
    da: f64,
    u: f64,
    f: f64,
    kind: Exact1dKind,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Exact1dKind {
    /// `F/Da + a exp(l1 (x - 1)) + b exp(l2 x)` with `l2 <= 0 <= l1`.
    Reactive { l1: f64, l2: f64, a: f64, b: f64 },
    /// `(F/u) (x - w(x))` with `w` the boundary-layer profile of rate `r`.
    Convective { r: f64 },
}

impl Exact1d {
    pub fn new(pe: f64, da: f64, u: f64, f: f64) -> Result<Self> {
        if !(pe > 0.0 && pe.is_finite()) {
            return Err(invalid(format!("Pe must be positive, got {pe}")));
        }
        if !(da >= 0.0 && da.is_finite()) || !u.is_finite() || !f.is_finite() {
            return Err(invalid("Da must be nonnegative and u, F finite"));
        }
        if u == 0.0 && da == 0.0 {
            return Err(invalid("u = 0 and Da = 0 leave the problem without convection or reaction"));
        }
        let kind = if da > 0.0 {
            // roots of l^2 - Pe u l - Pe Da = 0, the small one without cancellation
            let s = (pe * pe * u * u + 4.0 * pe * da).sqrt();
            let (l1, l2) = if u >= 0.0 {
                let l1 = 0.5 * (pe * u + s);
                (l1, -pe * da / l1)
            } else {
                let l2 = 0.5 * (pe * u - s);
                (-pe * da / l2, l2)
            };
            let c = f / da;
            let p = (-l1).exp();
            let q = l2.exp();
            let den = p * q - 1.0;
            Exact1dKind::Reactive { l1, l2, a: c * (1.0 - q) / den, b: c * (1.0 - p) / den }
        } else {
            Exact1dKind::Convective { r: pe * u }
        };
        Ok(Self { pe, da, u, f, kind })
    }

    /// Evaluated from the nearer boundary with `expm1`, so that rounding
    /// scales with the solution rather than with `F/Da`.
    pub fn value(&self, x: f64) -> f64 {
        match self.kind {
            Exact1dKind::Reactive { l1, l2, a, b } => {
                if x <= 0.5 {
                    // phi(0) = 0: phi = a (exp(l1 (x-1)) - exp(-l1)) + b expm1(l2 x)
                    let t1 = if l1 * x <= 1.0 {
                        (-l1).exp() * (l1 * x).exp_m1()
                    } else {
                        (l1 * (x - 1.0)).exp() - (-l1).exp()
                    };
                    a * t1 + b * (l2 * x).exp_m1()
                } else {
                    let y = 1.0 - x;
                    let t2 = if -l2 * y <= 1.0 {
                        l2.exp() * (-l2 * y).exp_m1()
                    } else {
                        (l2 * x).exp() - l2.exp()
                    };
                    a * (-l1 * y).exp_m1() + b * t2
                }
            }
            Exact1dKind::Convective { r } => {
                let y = 1.0 - x;
                // x - w(x) written as (1 - w) - (1 - x) near the outflow end
                let gap = if r > 0.0 {
                    if x <= 0.5 {
                        x - ((r * (x - 1.0)).exp() - (-r).exp()) / -(-r).exp_m1()
                    } else {
                        (-r * y).exp_m1() / (-r).exp_m1() - y
                    }
                } else if x <= 0.5 {
                    x - (r * x).exp_m1() / r.exp_m1()
                } else {
                    (r * x).exp() * (r * y).exp_m1() / r.exp_m1() - y
                };
                self.f / self.u * gap
            }
        }
    }

    pub fn derivative(&self, x: f64) -> f64 {
        match self.kind {
            Exact1dKind::Reactive { l1, l2, a, b } => a * l1 * (l1 * (x - 1.0)).exp() + b * l2 * (l2 * x).exp(),
            Exact1dKind::Convective { r } => {
                let dw = if r > 0.0 {
                    r * (r * (x - 1.0)).exp() / -(-r).exp_m1()
                } else {
                    r * (r * x).exp() / r.exp_m1()
                };
                self.f / self.u * (1.0 - dw)
            }
        }
    }

    /// Total variation of the exact profile, from `samples` equispaced points.
    pub fn total_variation(&self, samples: usize) -> f64 {
        let vals: Vec<f64> = (0..=samples).map(|i| self.value(i as f64 / samples as f64)).collect();
        total_variation(&vals)
    }

    /// Minimum and maximum over `samples` equispaced points.
    pub fn range(&self, samples: usize) -> (f64, f64) {
        (0..=samples)
            .map(|i| self.value(i as f64 / samples as f64))
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)))
    }

    pub fn parameters(&self) -> (f64, f64, f64, f64) {
        (self.pe, self.da, self.u, self.f)
    }
}

/// Value of the exact 1D solution at `x`.
pub fn exact_1d(pe: f64, da: f64, u: f64, f: f64, x: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&x) {
        return Err(invalid(format!("x = {x} lies outside [0, 1]")));
    }
    Ok(Exact1d::new(pe, da, u, f)?.value(x))
}

/// Sum of absolute jumps between consecutive values.
pub fn total_variation(values: &[f64]) -> f64 {
    values.windows(2).map(|w| (w[1] - w[0]).abs()).sum()
}

/// Field that errors are measured against.
pub trait Reference: Sync {
    fn value(&self, x: Point) -> f64;
    fn grad(&self, x: Point) -> [f64; 2];
    /// Micromorphic reference `g` and `grad g` (`[i][j] = d g_i / d x_j`),
    /// when one is available.
    fn micro(&self, _x: Point) -> Option<([f64; 2], [[f64; 2]; 2])> {
        None
    }
}

impl Reference for Exact1d {
    fn value(&self, x: Point) -> f64 {
        Exact1d::value(self, x[0])
    }

    fn grad(&self, x: Point) -> [f64; 2] {
        [self.derivative(x[0]), 0.0]
    }
}

/// Manufactured solution on a `dim`-dimensional unit domain.
#[derive(Debug, Clone, Copy)]
pub struct ManufacturedReference {
    pub solution: Manufactured,
    pub dim: usize,
}

impl Reference for ManufacturedReference {
    fn value(&self, x: Point) -> f64 {
        self.solution.value(x, self.dim)
    }

    fn grad(&self, x: Point) -> [f64; 2] {
        self.solution.grad(x, self.dim)
    }
}

/// Identically zero field, with a zero micromorphic part. Errors against it
/// are norms.
#[derive(Debug, Clone, Copy, Default)]
pub struct Zero;

impl Reference for Zero {
    fn value(&self, _x: Point) -> f64 {
        0.0
    }

    fn grad(&self, _x: Point) -> [f64; 2] {
        [0.0; 2]
    }

    fn micro(&self, _x: Point) -> Option<([f64; 2], [[f64; 2]; 2])> {
        Some(([0.0; 2], [[0.0; 2]; 2]))
    }
}

/// Finite element field, typically from a refined mesh, evaluated by
/// interpolation.
#[derive(Debug, Clone)]
pub struct FieldReference {
    pub mesh: StructuredMesh,
    pub field: SolutionField,
}

impl Reference for FieldReference {
    fn value(&self, x: Point) -> f64 {
        self.field.eval(&self.mesh, x).map(|v| v.phi).unwrap_or(f64::NAN)
    }

    fn grad(&self, x: Point) -> [f64; 2] {
        self.field.eval(&self.mesh, x).map(|v| v.grad_phi).unwrap_or([f64::NAN; 2])
    }

    fn micro(&self, x: Point) -> Option<([f64; 2], [[f64; 2]; 2])> {
        self.field.g.as_ref()?;
        self.field.eval(&self.mesh, x).ok().map(|v| (v.g, v.grad_g))
    }
}

/// A primary reference paired with a finite element micromorphic field.
#[derive(Debug, Clone)]
pub struct WithMicro<R> {
    pub base: R,
    pub micro: FieldReference,
}

impl<R: Reference> Reference for WithMicro<R> {
    fn value(&self, x: Point) -> f64 {
        self.base.value(x)
    }

    fn grad(&self, x: Point) -> [f64; 2] {
        self.base.grad(x)
    }

    fn micro(&self, x: Point) -> Option<([f64; 2], [[f64; 2]; 2])> {
        self.micro.micro(x)
    }
}

/// Attaches the micromorphic field that the reference gradient induces
/// through the second equation of the coupled problem on `mesh`.
pub fn induced_reference<R: Reference>(mesh: &StructuredMesh, config: &ProblemConfig, base: R) -> Result<WithMicro<R>> {
    let g = micromorphic_response(mesh, config, &|x| base.grad(x))?;
    let field = SolutionField { dim: mesh.dim(), method: config.method, phi: vec![0.0; mesh.num_nodes()], g: Some(g) };
    Ok(WithMicro { base, micro: FieldReference { mesh: mesh.clone(), field } })
}

/// Errors of a discrete solution against a reference.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorReport {
    pub l2_error: f64,
    /// `||grad(phi_h - phi)||`, the primary-space norm.
    pub h1_semi_error: f64,
    /// `(||g_h - g||^2 + ||grad(g_h - g)||^2)^(1/2)`, when both sides carry `g`.
    pub g_norm: Option<f64>,
    /// Product-space norm `(h1_semi^2 + g_norm^2)^(1/2)`.
    pub combined_norm: f64,
    /// Largest nodal excess above the upper bound (zero if none or no bounds).
    pub max_overshoot: f64,
    /// Largest nodal deficit below the lower bound.
    pub max_undershoot: f64,
    /// Nodal total variation, 1D only.
    pub total_variation: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormOptions {
    /// Each element is split into `subdivisions^dim` cells for quadrature.
    /// Use more than one when the reference is rougher than the solution.
    pub subdivisions: usize,
    /// Admissible `(min, max)` range for the nodal values.
    pub bounds: Option<(f64, f64)>,
}

impl Default for NormOptions {
    fn default() -> Self {
        Self { subdivisions: 1, bounds: None }
    }
}

/// Quadrature points of element `e` refined into sub-cells: `(natural point, weight * det_j)`.
fn refined_points(mesh: &StructuredMesh, e: usize, subdivisions: usize) -> Result<Vec<(Point, f64)>> {
    let dim = mesh.dim();
    let rule = gauss_rule(dim)?;
    let coords = mesh.element_coords(e);
    let s = subdivisions.max(1);
    let scale = 1.0 / s as f64;
    let cells_y = if dim == 1 { 1 } else { s };
    let mut out = Vec::with_capacity(s * cells_y * rule.points.len());
    for cy in 0..cells_y {
        for cx in 0..s {
            let center = [-1.0 + (2 * cx + 1) as f64 * scale, if dim == 1 { 0.0 } else { -1.0 + (2 * cy + 1) as f64 * scale }];
            for (p, w) in rule.points.iter().zip(&rule.weights) {
                let natural = [center[0] + scale * p[0], center[1] + if dim == 1 { 0.0 } else { scale * p[1] }];
                let det_j = shape_eval(&coords, natural)?.det_j;
                out.push((natural, w * det_j * scale.powi(dim as i32)));
            }
        }
    }
    Ok(out)
}

/// Quadrature-evaluated error norms of `solution` against `reference`.
pub fn error_norms(
    mesh: &StructuredMesh,
    solution: &SolutionField,
    reference: &dyn Reference,
    options: &NormOptions,
) -> Result<ErrorReport> {
    if solution.phi.len() != mesh.num_nodes() {
        return Err(invalid(format!(
            "solution has {} nodal values for {} nodes",
            solution.phi.len(),
            mesh.num_nodes()
        )));
    }
    let mut l2 = 0.0;
    let mut h1 = 0.0;
    let mut gg = 0.0;
    let mut with_g = solution.g.is_some();
    for e in 0..mesh.num_elements() {
        let coords = mesh.element_coords(e);
        for (natural, w) in refined_points(mesh, e, options.subdivisions)? {
            let s = shape_eval(&coords, natural)?;
            let v = solution.eval_shape(mesh.element(e), &s);
            let x = s.physical_point(&coords);
            let r = reference.grad(x);
            l2 += w * (v.phi - reference.value(x)).powi(2);
            h1 += w * ((v.grad_phi[0] - r[0]).powi(2) + (v.grad_phi[1] - r[1]).powi(2));
            if with_g {
                match reference.micro(x) {
                    Some((g, dg)) => {
                        for i in 0..2 {
                            gg += w * (v.g[i] - g[i]).powi(2);
                            for j in 0..2 {
                                gg += w * (v.grad_g[i][j] - dg[i][j]).powi(2);
                            }
                        }
                    }
                    None => with_g = false,
                }
            }
        }
    }
    if !(l2.is_finite() && h1.is_finite() && gg.is_finite()) {
        return Err(Error::NonFinite("error norms".into()));
    }
    let g_norm = with_g.then(|| gg.sqrt());
    let (lo, hi) = solution
        .phi
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(*v), hi.max(*v)));
    let (max_overshoot, max_undershoot) = match options.bounds {
        Some((bl, bh)) => ((hi - bh).max(0.0), (bl - lo).max(0.0)),
        None => (0.0, 0.0),
    };
    Ok(ErrorReport {
        l2_error: l2.sqrt(),
        h1_semi_error: h1.sqrt(),
        g_norm,
        combined_norm: (h1 + if with_g { gg } else { 0.0 }).sqrt(),
        max_overshoot,
        max_undershoot,
        total_variation: (mesh.dim() == 1).then(|| total_variation(&solution.phi)),
    })
}

/// Product-space norm of a field: `error_norms` against zero.
pub fn field_norms(mesh: &StructuredMesh, field: &SolutionField) -> Result<ErrorReport> {
    error_norms(mesh, field, &Zero, &NormOptions::default())
}

/// Comparison-principle range of the solution: the essential data together
/// with `[0, F/Da]` when `Da > 0`. `None` when no bound follows.
pub fn analytic_bounds(mesh: &StructuredMesh, config: &ProblemConfig) -> Result<Option<(f64, f64)>> {
    let f = match config.source {
        Source::Constant(f) => f,
        Source::Manufactured(_) => return Ok(None),
    };
    if f != 0.0 && config.da == 0.0 {
        return Ok(None);
    }
    let data = essential_values(mesh, &config.regions(mesh)?);
    let mut lo = data.iter().map(|d| d.1).fold(f64::INFINITY, f64::min);
    let mut hi = data.iter().map(|d| d.1).fold(f64::NEG_INFINITY, f64::max);
    if f != 0.0 {
        lo = lo.min((f / config.da).min(0.0));
        hi = hi.max((f / config.da).max(0.0));
    }
    Ok(lo.is_finite().then_some((lo, hi)))
}

/// Least-squares slope of `log(error)` against `log(h)`.
pub fn convergence_rate(errors: &[f64], hs: &[f64]) -> Result<f64> {
    if errors.len() != hs.len() {
        return Err(invalid(format!("{} errors for {} mesh sizes", errors.len(), hs.len())));
    }
    if errors.len() < 3 {
        return Err(invalid(format!("need at least 3 refinement levels, got {}", errors.len())));
    }
    if hs.windows(2).any(|w| !(w[1] < w[0])) {
        return Err(invalid("mesh sizes must be strictly decreasing"));
    }
    if errors.iter().chain(hs).any(|v| !(*v > 0.0 && v.is_finite())) {
        return Err(invalid("errors and mesh sizes must be positive and finite"));
    }
    let n = errors.len() as f64;
    let xs: Vec<f64> = hs.iter().map(|h| h.ln()).collect();
    let ys: Vec<f64> = errors.iter().map(|e| e.ln()).collect();
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    Ok(sxy / sxx)
}

/// Lower bound `M` of the bilinear form on the product space for the
/// splitting parameter `epsilon`.
pub fn coercivity_constant(pe: f64, h0: f64, k0: f64, a0: f64, epsilon: f64) -> Result<f64> {
    if !(pe > 0.0) || [h0, k0, a0].iter().any(|v| !(*v >= 0.0)) {
        return Err(invalid("need Pe > 0 and nonnegative H0, K0, A0"));
    }
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(invalid(format!("epsilon = {epsilon} violates 0 < epsilon < 1")));
    }
    let micro = k0 + h0 * (1.0 - 1.0 / epsilon);
    if !(micro > 0.0) {
        return Err(invalid(format!(
            "epsilon = {epsilon} violates K0 + H0 (1 - 1/epsilon) > 0 (needs epsilon > {})",
            h0 / (h0 + k0)
        )));
    }
    let m = (1.0 / pe + h0 * (1.0 - epsilon)).min(micro.min(a0));
    if !(m > 0.0) {
        return Err(invalid(format!("the form is not coercive for these constants (M = {m})")));
    }
    Ok(m)
}

/// Midpoint of the admissible interval `(H0 / (H0 + K0), 1)`.
pub fn default_epsilon(h0: f64, k0: f64) -> Result<f64> {
    if !(h0 >= 0.0 && k0 > 0.0) {
        return Err(invalid("default epsilon needs H0 >= 0 and K0 > 0"));
    }
    Ok(0.5 * (1.0 + h0 / (h0 + k0)))
}

/// Upper bound `m` of the bilinear form.
pub fn continuity_constant(da: f64, u_max: f64, pe: f64, h_max: f64, k_max: f64, a_max: f64) -> Result<f64> {
    if !(pe > 0.0) || [da, u_max, h_max, k_max, a_max].iter().any(|v| !(*v >= 0.0)) {
        return Err(invalid("need Pe > 0 and nonnegative coefficients"));
    }
    Ok(da + u_max + 1.0 / pe + 2.0 * h_max + k_max + a_max)
}

/// Factor `H_max Pe` bounding the distance between the micromorphic and the
/// unstabilized solution relative to the micromorphic solution norm.
pub fn modelling_error_factor(h_max: f64, pe: f64) -> f64 {
    h_max * pe
}

/// Extreme values of the micromorphic tensors over the mesh.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TensorBounds {
    /// Smallest eigenvalue of `H`.
    pub h0: f64,
    pub k0: f64,
    pub a0: f64,
    /// Largest eigenvalue of `H`.
    pub h_max: f64,
    pub k_max: f64,
    pub a_max: f64,
}

impl TensorBounds {
    pub fn from_tensors(tensors: &[StabilizationTensors]) -> Result<Self> {
        if tensors.is_empty() {
            return Err(invalid("no elements"));
        }
        let mut b = Self {
            h0: f64::INFINITY,
            k0: f64::INFINITY,
            a0: f64::INFINITY,
            h_max: 0.0,
            k_max: 0.0,
            a_max: 0.0,
        };
        for t in tensors {
            let ev = t.h_eigenvalues();
            b.h0 = b.h0.min(ev[0]);
            b.h_max = b.h_max.max(*ev.last().unwrap());
            b.k0 = b.k0.min(t.k_min_eigenvalue());
            b.k_max = b.k_max.max(t.k_max_entry());
            b.a0 = b.a0.min(t.a_coeff);
            b.a_max = b.a_max.max(t.a_coeff);
        }
        Ok(b)
    }

    pub fn for_problem(mesh: &StructuredMesh, config: &ProblemConfig) -> Result<Self> {
        let tensors = element_tensors(mesh, config)?.ok_or_else(|| invalid("the Galerkin method has no tensors"))?;
        Self::from_tensors(&tensors)
    }
}

fn seeded(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Consistent scalar mass matrix.
pub fn mass_matrix(mesh: &StructuredMesh) -> Result<CsrMatrix> {
    let rule = gauss_rule(mesh.dim())?;
    let mut triplets = Vec::with_capacity(mesh.num_elements() * 16);
    for e in 0..mesh.num_elements() {
        let nodes = mesh.element(e);
        let coords = mesh.element_coords(e);
        for (p, w) in rule.points.iter().zip(&rule.weights) {
            let s = shape_eval(&coords, *p)?;
            for (a, &na) in nodes.iter().enumerate() {
                for (b, &nb) in nodes.iter().enumerate() {
                    triplets.push((na, nb, w * s.det_j * s.n[a] * s.n[b]));
                }
            }
        }
    }
    CsrMatrix::from_triplets(mesh.num_nodes(), mesh.num_nodes(), &triplets)
}

/// Largest `|v^T C v| / ||v||^2` over random nodal fields vanishing on the
/// boundary, with `C` the convection matrix and `||v||` the L2 norm of the
/// interpolant. Zero up to rounding when `div u = 0`.
pub fn check_skew_symmetry(mesh: &StructuredMesh, velocity: &Velocity, trials: usize, seed: u64) -> Result<f64> {
    let c = convection_matrix(mesh, velocity)?;
    let m = mass_matrix(mesh)?;
    let interior = mesh.interior_nodes();
    if interior.is_empty() {
        return Err(invalid("mesh has no interior nodes"));
    }
    let mut rng = seeded(seed);
    let mut worst = 0.0f64;
    for _ in 0..trials {
        let mut v = vec![0.0; mesh.num_nodes()];
        for &n in &interior {
            v[n] = rng.gen_range(-1.0..1.0);
        }
        worst = worst.max(c.bilinear(&v, &v).abs() / m.bilinear(&v, &v));
    }
    Ok(worst)
}

/// Outcome of the discrete coercivity check.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoercivityReport {
    pub constant: f64,
    pub epsilon: f64,
    pub bounds: TensorBounds,
    pub trials: usize,
    pub violations: usize,
    /// Smallest `B(v, v) / ||v||^2` observed.
    pub min_ratio: f64,
}

/// Samples `B(v, v) >= M ||v||^2` on random discrete fields whose primary
/// part vanishes on the boundary.
pub fn check_coercivity(
    mesh: &StructuredMesh,
    config: &ProblemConfig,
    trials: usize,
    seed: u64,
    epsilon: Option<f64>,
) -> Result<CoercivityReport> {
    if config.method != Method::Mmad {
        return Err(invalid("coercivity is checked for the micromorphic method"));
    }
    let bounds = TensorBounds::for_problem(mesh, config)?;
    let epsilon = match epsilon {
        Some(e) => e,
        None => default_epsilon(bounds.h0, bounds.k0)?,
    };
    let constant = coercivity_constant(config.pe, bounds.h0, bounds.k0, bounds.a0, epsilon)?;
    let system = assemble(mesh, config)?;
    let dofs = system.dofs;
    let mut rng = seeded(seed);
    let mut violations = 0;
    let mut min_ratio = f64::INFINITY;
    for _ in 0..trials {
        let phi = (0..mesh.num_nodes())
            .map(|n| if mesh.is_boundary_node(n) { 0.0 } else { rng.gen_range(-1.0..1.0) })
            .collect();
        let g = (0..mesh.num_nodes())
            .map(|_| {
                let mut v = [0.0; 2];
                for c in v.iter_mut().take(mesh.dim()) {
                    *c = rng.gen_range(-1.0..1.0);
                }
                v
            })
            .collect();
        let field = SolutionField { dim: mesh.dim(), method: dofs.method, phi, g: Some(g) };
        let norm = field_norms(mesh, &field)?.combined_norm.powi(2);
        let x = field.to_dofs();
        let form = system.matrix.bilinear(&x, &x);
        let ratio = form / norm;
        min_ratio = min_ratio.min(ratio);
        if form < constant * norm {
            violations += 1;
        }
    }
    Ok(CoercivityReport { constant, epsilon, bounds, trials, violations, min_ratio })
}

/// L2 projection of the gradient of a nodal field onto the nodal space,
/// assembled directly from the mass matrix.
pub fn gradient_projection(mesh: &StructuredMesh, phi: &[f64]) -> Result<Vec<[f64; 2]>> {
    if phi.len() != mesh.num_nodes() {
        return Err(invalid("nodal field does not match the mesh"));
    }
    let dim = mesh.dim();
    let m = mass_matrix(mesh)?;
    let rule = gauss_rule(dim)?;
    let mut rhs = vec![vec![0.0; mesh.num_nodes()]; dim];
    for e in 0..mesh.num_elements() {
        let nodes = mesh.element(e);
        let coords = mesh.element_coords(e);
        let local: Vec<f64> = nodes.iter().map(|&n| phi[n]).collect();
        for (p, w) in rule.points.iter().zip(&rule.weights) {
            let s = shape_eval(&coords, *p)?;
            let grad = s.interpolate_grad(&local);
            for (a, &na) in nodes.iter().enumerate() {
                for (i, r) in rhs.iter_mut().enumerate() {
                    r[na] += w * s.det_j * s.n[a] * grad[i];
                }
            }
        }
    }
    let mut out = vec![[0.0; 2]; mesh.num_nodes()];
    for (i, r) in rhs.iter().enumerate() {
        let sol = linsolve::solve(&m, r, 1e-13)?.solution;
        for (o, v) in out.iter_mut().zip(sol) {
            o[i] = v;
        }
    }
    Ok(out)
}

/// Largest nodal gap between the `g` of an MZAD solve and the projection of
/// its own `grad phi`.
pub fn mzad_projection_gap(mesh: &StructuredMesh, config: &ProblemConfig) -> Result<f64> {
    if config.method != Method::Mzad {
        return Err(invalid("projection gap needs the mzad method"));
    }
    let (sol, _) = solve_case(mesh, config)?;
    let projected = gradient_projection(mesh, &sol.phi)?;
    let g = sol.g.as_ref().expect("micromorphic solution");
    Ok(g
        .iter()
        .zip(&projected)
        .flat_map(|(a, b)| [(a[0] - b[0]).abs(), (a[1] - b[1]).abs()])
        .fold(0.0, f64::max))
}

/// Measured gap between the micromorphic solution and the unstabilized
/// solution of the same problem, with the stabilization frozen at the coarse
/// mesh size and both computed on a refined mesh.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModellingErrorReport {
    /// `||grad(phi_mmad - phi_galerkin)||`.
    pub gap: f64,
    /// Product-space norm of the micromorphic solution.
    pub solution_norm: f64,
    pub h_max: f64,
    pub factor: f64,
    pub bound: f64,
    pub holds: bool,
}

pub fn modelling_error_check(coarse: &ProblemConfig, refine: usize) -> Result<ModellingErrorReport> {
    if refine == 0 {
        return Err(invalid("refinement factor must be positive"));
    }
    let coarse_mesh = coarse.build_mesh()?;
    let mut fine = coarse.clone();
    fine.mesh = coarse.mesh.iter().map(|n| n * refine).collect();
    fine.method = Method::Mmad;
    fine.stabilization_h = Some(coarse.stabilization_sizes(&coarse_mesh).to_vec());
    let fine_mesh = fine.build_mesh()?;
    let h_max = TensorBounds::for_problem(&fine_mesh, &fine)?.h_max;
    let (mmad, _) = solve_case(&fine_mesh, &fine)?;
    let mut galerkin_cfg = fine.clone();
    galerkin_cfg.method = Method::Galerkin;
    let (galerkin, _) = solve_case(&fine_mesh, &galerkin_cfg)?;
    let reference = FieldReference { mesh: fine_mesh.clone(), field: galerkin };
    let gap = error_norms(&fine_mesh, &mmad, &reference, &NormOptions::default())?.h1_semi_error;
    let solution_norm = field_norms(&fine_mesh, &mmad)?.combined_norm;
    let factor = modelling_error_factor(h_max, fine.pe);
    let bound = factor * solution_norm;
    Ok(ModellingErrorReport { gap, solution_norm, h_max, factor, bound, holds: gap <= bound })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::BoundarySpec;
    use crate::mesh::Region;

    #[test]
    fn exact_1d_golden_ratio_case() {
        // high-precision value of the closed form
        let v = exact_1d(1.0, 1.0, 1.0, 1.0, 0.5).unwrap();
        assert!((v - 0.11112788437005243).abs() < 1e-14, "{v}");
    }

    #[test]
    fn exact_1d_trivial_and_degenerate() {
        for x in [0.0, 0.3, 1.0] {
            assert_eq!(exact_1d(10.0, 2.0, 1.0, 0.0, x).unwrap(), 0.0);
        }
        assert!(exact_1d(1.0, 0.0, 0.0, 1.0, 0.5).is_err());
        assert!(exact_1d(0.0, 1.0, 1.0, 1.0, 0.5).is_err());
        assert!(exact_1d(1.0, 1.0, 1.0, 1.0, 1.5).is_err());
    }

    #[test]
    fn exact_1d_boundary_values_extreme_parameters() {
        for (pe, da, u) in [(1e6, 1e-2, 1.0), (1.0, 1e4, 1.0), (1e6, 0.0, 1.0), (1e3, 0.0, -1.0), (1e6, 1e2, -0.5), (1e8, 1e8, 1.0)] {
            let e = Exact1d::new(pe, da, u, 1.0).unwrap();
            assert!(e.value(0.0).abs() < 1e-12 && e.value(1.0).abs() < 1e-9, "{pe} {da} {u}");
            for i in 0..=100 {
                assert!(e.value(i as f64 / 100.0).is_finite());
            }
        }
    }

    #[test]
    fn exact_1d_satisfies_ode() {
        let step = 1e-5;
        for (pe, da, u) in [(1.0, 1.0, 1.0), (10.0, 3.0, -0.7), (5.0, 0.0, 1.0)] {
            let e = Exact1d::new(pe, da, u, 1.0).unwrap();
            for i in 1..1000 {
                let x = i as f64 / 1000.0;
                let d2 = (e.value(x + step) - 2.0 * e.value(x) + e.value(x - step)) / (step * step);
                let d1 = (e.value(x + step) - e.value(x - step)) / (2.0 * step);
                let terms = [da * e.value(x), u * d1, -d2 / pe, -1.0];
                let res: f64 = terms.iter().sum();
                let scale: f64 = terms.iter().map(|t| t.abs()).sum();
                assert!(res.abs() <= 1e-6 * scale, "{pe} {da} x={x} res={res}");
                assert!((d1 - e.derivative(x)).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn maximum_principle_bounds() {
        for (pe, da) in [(1.0, 1.0), (1e6, 1e-2), (1.0, 1e4), (1e3, 10.0)] {
            let e = Exact1d::new(pe, da, 1.0, 1.0).unwrap();
            let (lo, hi) = e.range(10_000);
            assert!(lo >= -1e-12 && hi <= 1.0 / da + 1e-12);
        }
    }

    #[test]
    fn unit_slope_semi_norm() {
        let mesh = StructuredMesh::interval(10).unwrap();
        let field = SolutionField {
            dim: 1,
            method: Method::Galerkin,
            phi: mesh.nodes().iter().map(|p| p[0]).collect(),
            g: None,
        };
        let rep = field_norms(&mesh, &field).unwrap();
        assert!((rep.h1_semi_error - 1.0).abs() < 1e-14);
        assert!((rep.l2_error - (1.0f64 / 3.0).sqrt()).abs() < 1e-14);
        assert_eq!(rep.g_norm, None);
        assert_eq!(rep.total_variation, Some(1.0));
    }

    #[test]
    fn interpolant_reference_has_zero_error() {
        let mesh = StructuredMesh::grid(5, 4).unwrap();
        let field = SolutionField {
            dim: 2,
            method: Method::Mmad,
            phi: mesh.nodes().iter().map(|p| (3.0 * p[0]).sin() * p[1]).collect(),
            g: Some(mesh.nodes().iter().map(|p| [p[0] * p[1], 1.0 - p[0]]).collect()),
        };
        let r = FieldReference { mesh: mesh.clone(), field: field.clone() };
        let rep = error_norms(&mesh, &field, &r, &NormOptions { subdivisions: 2, bounds: None }).unwrap();
        assert!(rep.l2_error < 1e-15 && rep.combined_norm < 1e-14);
        assert!(rep.g_norm.unwrap() < 1e-14);
    }

    #[test]
    fn combined_norm_identity() {
        let mesh = StructuredMesh::grid(6, 6).unwrap();
        let field = SolutionField {
            dim: 2,
            method: Method::Mmad,
            phi: mesh.nodes().iter().map(|p| p[0] * p[0] - p[1]).collect(),
            g: Some(mesh.nodes().iter().map(|p| [p[1].cos(), p[0] * 2.0]).collect()),
        };
        let rep = field_norms(&mesh, &field).unwrap();
        let g = rep.g_norm.unwrap();
        let lhs = rep.combined_norm.powi(2);
        assert!((lhs - (rep.h1_semi_error.powi(2) + g * g)).abs() <= 1e-13 * lhs);
    }

    #[test]
    fn subdivided_quadrature_measures_area() {
        let mesh = StructuredMesh::grid(3, 2).unwrap();
        let field = SolutionField { dim: 2, method: Method::Galerkin, phi: vec![1.0; mesh.num_nodes()], g: None };
        for s in 1..4 {
            let rep = error_norms(&mesh, &field, &Zero, &NormOptions { subdivisions: s, bounds: None }).unwrap();
            assert!((rep.l2_error - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn overshoot_measured_against_bounds() {
        let mesh = StructuredMesh::interval(4).unwrap();
        let field = SolutionField { dim: 1, method: Method::Galerkin, phi: vec![0.0, 1.2, -0.1, 0.5, 0.0], g: None };
        let rep = error_norms(&mesh, &field, &Zero, &NormOptions { subdivisions: 1, bounds: Some((0.0, 1.0)) }).unwrap();
        assert!((rep.max_overshoot - 0.2).abs() < 1e-15);
        assert!((rep.max_undershoot - 0.1).abs() < 1e-15);
        assert!((rep.total_variation.unwrap() - 3.6).abs() < 1e-14);
    }

    #[test]
    fn rates() {
        let hs = [0.4, 0.2, 0.1];
        assert!((convergence_rate(&[0.4, 0.2, 0.1], &hs).unwrap() - 1.0).abs() < 1e-14);
        assert!((convergence_rate(&[0.16, 0.04, 0.01], &hs).unwrap() - 2.0).abs() < 1e-14);
        assert!(convergence_rate(&[0.2, 0.1], &[0.2, 0.1]).is_err());
        assert!(convergence_rate(&[0.2, 0.1, 0.05], &[0.1, 0.2, 0.3]).is_err());
        assert!(convergence_rate(&[0.2, 0.0, 0.05], &hs).is_err());
    }

    #[test]
    fn coercivity_constant_examples() {
        assert!((coercivity_constant(100.0, 0.1, 1.0, 1.0, 0.5).unwrap() - 0.06).abs() < 1e-15);
        assert_eq!(coercivity_constant(50.0, 0.0, 1.0, 1.0, 0.3).unwrap(), 1.0 / 50.0);
        let err = coercivity_constant(100.0, 0.1, 1.0, 1.0, 0.1 / 1.1).unwrap_err();
        assert!(err.to_string().contains("K0 + H0"));
        assert!(coercivity_constant(100.0, 0.1, 1.0, 1.0, 1.0).is_err());
        assert!(coercivity_constant(100.0, 0.1, 1.0, 1.0, 0.0).is_err());
    }

    #[test]
    fn continuity_and_modelling_factor() {
        assert!((continuity_constant(1.0, 1.0, 10.0, 0.05, 1.0, 1.0).unwrap() - 4.2).abs() < 1e-14);
        assert_eq!(continuity_constant(0.0, 0.0, 8.0, 0.0, 0.0, 0.0).unwrap(), 0.125);
        assert!((modelling_error_factor(0.01, 1e3) - 10.0).abs() < 1e-12);
    }

    #[test]
    fn default_epsilon_is_admissible() {
        let e = default_epsilon(0.2, 1.0).unwrap();
        assert!(e > 0.2 / 1.2 && e < 1.0);
        assert!(coercivity_constant(10.0, 0.2, 1.0, 1.0, e).is_ok());
    }

    #[test]
    fn skew_symmetry_small_mesh() {
        let mesh = StructuredMesh::grid(8, 8).unwrap();
        assert!(check_skew_symmetry(&mesh, &Velocity::Constant(vec![0.3, -1.0]), 10, 1).unwrap() < 1e-12);
        assert!(check_skew_symmetry(&mesh, &Velocity::rotation(), 10, 2).unwrap() < 1e-12);
        let stretch = Velocity::Affine { offset: [0.0; 2], gradient: [[1.0, 0.0], [0.0, 0.0]] };
        assert!(check_skew_symmetry(&mesh, &stretch, 10, 3).unwrap() > 0.1);
    }

    #[test]
    fn gradient_projection_of_linear_field_is_exact() {
        let mesh = StructuredMesh::grid(5, 3).unwrap();
        let phi: Vec<f64> = mesh.nodes().iter().map(|p| 2.0 * p[0] - 0.5 * p[1]).collect();
        for g in gradient_projection(&mesh, &phi).unwrap() {
            assert!((g[0] - 2.0).abs() < 1e-12 && (g[1] + 0.5).abs() < 1e-12);
        }
    }

    #[test]
    fn mzad_recovers_projection() {
        let mesh = StructuredMesh::grid(10, 10).unwrap();
        let mut cfg = ProblemConfig::manufactured_problem(vec![10, 10], 100.0, 1.0, Velocity::Constant(vec![1.0, 0.5]), Method::Mzad);
        cfg.mzad_p = Some(0.3);
        assert!(mzad_projection_gap(&mesh, &cfg).unwrap() < 1e-10);
    }

    #[test]
    fn coercivity_holds_on_small_problem() {
        let mesh = StructuredMesh::grid(8, 8).unwrap();
        let cfg = ProblemConfig {
            mesh: vec![8, 8],
            pe: 1e3,
            da: 10.0,
            method: Method::Mmad,
            velocity: Velocity::Constant(vec![0.6, 0.8]),
            source: Source::Constant(0.0),
            boundaries: vec![BoundarySpec::dirichlet(Region::Boundary, 0.0)],
            mzad_p: None,
            stabilization_h: None,
        };
        let rep = check_coercivity(&mesh, &cfg, 20, 7, None).unwrap();
        assert_eq!(rep.violations, 0);
        assert!(rep.min_ratio >= rep.constant);
    }

    #[test]
    fn induced_reference_matches_consistent_field() {
        // a linear reference induces g = grad phi when K vanishes (MZAD)
        let mesh = StructuredMesh::grid(6, 6).unwrap();
        let mut cfg = ProblemConfig::manufactured_problem(vec![6, 6], 10.0, 1.0, Velocity::Constant(vec![1.0, 0.0]), Method::Mzad);
        cfg.mzad_p = Some(2.0);
        struct Linear;
        impl Reference for Linear {
            fn value(&self, x: Point) -> f64 {
                x[0] - 3.0 * x[1]
            }
            fn grad(&self, _x: Point) -> [f64; 2] {
                [1.0, -3.0]
            }
        }
        let r = induced_reference(&mesh, &cfg, Linear).unwrap();
        let (g, dg) = r.micro([0.37, 0.61]).unwrap();
        assert!((g[0] - 1.0).abs() < 1e-12 && (g[1] + 3.0).abs() < 1e-12);
        assert!(dg.iter().flatten().all(|v| v.abs() < 1e-10));
    }
}
