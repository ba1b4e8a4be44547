//! Problem statement: parameters, fields and boundary data.
//!
//! Configurations are plain serde structs so that every benchmark is data.
//! The on-disk format is TOML:
//!
//! ```toml
//! mesh = [40, 40]
//! pe = 1000.0
//! da = 10.0
//! method = "mmad"
//! velocity = { constant = [0.7071067811865476, 0.7071067811865476] }
//! source = { constant = 0.0 }
//!
//! [[boundaries]]
//! kind = "dirichlet"
//! region = "boundary"
//! profile = { constant = 0.0 }
//! ```

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::mesh::{check_boundary_cover, BoundaryKind, BoundaryRegion, Point, Profile, Region, StructuredMesh};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    /// Standard Bubnov-Galerkin, one unknown per node.
    Galerkin,
    /// Micromorphic artificial diffusion: `phi` plus a vector `g` per node.
    Mmad,
    /// Degenerate micromorphic mode with `H = p I`, `K = 0` and no gradient
    /// stiffness, so that `g` is a projection of `grad phi`.
    Mzad,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Galerkin => "galerkin",
            Method::Mmad => "mmad",
            Method::Mzad => "mzad",
        }
    }

    pub fn has_micromorphic_field(self) -> bool {
        self != Method::Galerkin
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "galerkin" | "fem" => Ok(Method::Galerkin),
            "mmad" => Ok(Method::Mmad),
            "mzad" => Ok(Method::Mzad),
            other => Err(invalid(format!("unknown method `{other}`"))),
        }
    }
}

/// Dimensionless velocity `u(x) = offset + gradient . x`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Velocity {
    Constant(Vec<f64>),
    Affine { offset: [f64; 2], gradient: [[f64; 2]; 2] },
}

impl Velocity {
    /// Rigid rotation `u = (-x2, x1)`.
    pub fn rotation() -> Self {
        Velocity::Affine { offset: [0.0, 0.0], gradient: [[0.0, -1.0], [1.0, 0.0]] }
    }

    pub fn eval(&self, x: Point) -> [f64; 2] {
        match self {
            Velocity::Constant(u) => [u.first().copied().unwrap_or(0.0), u.get(1).copied().unwrap_or(0.0)],
            Velocity::Affine { offset, gradient } => [
                offset[0] + gradient[0][0] * x[0] + gradient[0][1] * x[1],
                offset[1] + gradient[1][0] * x[0] + gradient[1][1] * x[1],
            ],
        }
    }

    pub fn divergence(&self) -> f64 {
        match self {
            Velocity::Constant(_) => 0.0,
            Velocity::Affine { gradient, .. } => gradient[0][0] + gradient[1][1],
        }
    }

    /// Largest velocity component over the unit domain.
    pub fn max_component(&self, dim: usize) -> f64 {
        let corners: &[Point] = if dim == 1 {
            &[[0.0, 0.0], [1.0, 0.0]]
        } else {
            &[[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]]
        };
        // affine fields attain their extremes at corners
        corners
            .iter()
            .flat_map(|&c| {
                let u = self.eval(c);
                [u[0].abs(), u[1].abs()]
            })
            .fold(0.0, f64::max)
    }
}

/// Smooth solution used for manufactured-solution studies:
/// `phi = prod_d sin(pi x_d)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Manufactured {
    SinePi,
}

impl Manufactured {
    pub fn value(self, x: Point, dim: usize) -> f64 {
        match self {
            Manufactured::SinePi => (0..dim).map(|d| (PI * x[d]).sin()).product(),
        }
    }

    pub fn grad(self, x: Point, dim: usize) -> [f64; 2] {
        match self {
            Manufactured::SinePi => {
                if dim == 1 {
                    [PI * (PI * x[0]).cos(), 0.0]
                } else {
                    let (sx, cx) = (PI * x[0]).sin_cos();
                    let (sy, cy) = (PI * x[1]).sin_cos();
                    [PI * cx * sy, PI * sx * cy]
                }
            }
        }
    }

    pub fn laplacian(self, x: Point, dim: usize) -> f64 {
        match self {
            Manufactured::SinePi => -(dim as f64) * PI * PI * self.value(x, dim),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Source {
    Constant(f64),
    /// Source generated from the strong form applied to a known solution.
    Manufactured(Manufactured),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundarySpec {
    pub kind: BoundaryKind,
    pub region: Region,
    pub profile: Profile,
}

impl BoundarySpec {
    pub fn dirichlet(region: Region, value: f64) -> Self {
        Self { kind: BoundaryKind::Dirichlet, region, profile: Profile::Constant(value) }
    }

    pub fn neumann(region: Region, flux: f64) -> Self {
        Self { kind: BoundaryKind::Neumann, region, profile: Profile::Constant(flux) }
    }
}

fn default_method() -> Method {
    Method::Mmad
}

/// Full problem statement.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProblemConfig {
    /// Element counts per direction: `[n]` in 1D, `[nx, ny]` in 2D.
    pub mesh: Vec<usize>,
    pub pe: f64,
    pub da: f64,
    #[serde(default = "default_method")]
    pub method: Method,
    pub velocity: Velocity,
    pub source: Source,
    /// Later entries override earlier ones on shared nodes; essential data
    /// always overrides Neumann data.
    pub boundaries: Vec<BoundarySpec>,
    /// Projection weight `p` in MZAD mode. Defaults to `kc + kr` per element.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mzad_p: Option<f64>,
    /// Element sizes used for the stabilization tensors instead of the
    /// mesh's own. Freezes `H` when the same problem is re-solved on a finer
    /// mesh.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stabilization_h: Option<Vec<f64>>,
}

impl ProblemConfig {
    pub fn dim(&self) -> usize {
        self.mesh.len()
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        let dim = self.dim();
        if !(1..=2).contains(&dim) {
            return Err(Error::Config(format!("mesh must list 1 or 2 element counts, got {}", dim)));
        }
        if self.mesh.contains(&0) {
            return Err(Error::Config("element counts must be positive".into()));
        }
        if !(self.pe > 0.0 && self.pe.is_finite()) {
            return Err(Error::Config(format!("pe must be positive and finite, got {}", self.pe)));
        }
        if !(self.da >= 0.0 && self.da.is_finite()) {
            return Err(Error::Config(format!("da must be nonnegative and finite, got {}", self.da)));
        }
        match &self.velocity {
            Velocity::Constant(u) if u.len() != dim => {
                return Err(Error::Config(format!(
                    "velocity has {} components for a {dim}D mesh",
                    u.len()
                )))
            }
            Velocity::Constant(u) if u.iter().any(|v| !v.is_finite()) => {
                return Err(Error::NonFinite("velocity".into()))
            }
            Velocity::Affine { .. } if dim == 1 => {
                return Err(Error::Config("affine velocity fields need a 2D mesh".into()))
            }
            _ => {}
        }
        if let Source::Constant(f) = self.source {
            if !f.is_finite() {
                return Err(Error::NonFinite("source".into()));
            }
        }
        if let Some(p) = self.mzad_p {
            if !(p > 0.0 && p.is_finite()) {
                return Err(Error::Config(format!("mzad_p must be positive, got {p}")));
            }
        }
        if let Some(h) = &self.stabilization_h {
            if h.len() != dim || h.iter().any(|v| !(*v > 0.0)) {
                return Err(Error::Config("stabilization_h must hold one positive size per direction".into()));
            }
        }
        if self.boundaries.is_empty() {
            return Err(Error::Config("no boundary conditions given".into()));
        }
        Ok(())
    }

    pub fn build_mesh(&self) -> Result<StructuredMesh> {
        self.validate()?;
        StructuredMesh::from_counts(&self.mesh)
    }

    /// Resolves boundary specs into node sets on `mesh`.
    pub fn regions(&self, mesh: &StructuredMesh) -> Result<Vec<BoundaryRegion>> {
        if mesh.dim() != self.dim() {
            return Err(invalid(format!(
                "config is {}D but the mesh is {}D",
                self.dim(),
                mesh.dim()
            )));
        }
        let regions = self
            .boundaries
            .iter()
            .map(|b| BoundaryRegion::new(mesh, b.kind, b.region.clone(), b.profile.clone()))
            .collect::<Result<Vec<_>>>()?;
        check_boundary_cover(mesh, &regions)?;
        Ok(regions)
    }

    pub fn source_at(&self, x: Point) -> f64 {
        match self.source {
            Source::Constant(f) => f,
            Source::Manufactured(m) => {
                let dim = self.dim();
                let u = self.velocity.eval(x);
                let g = m.grad(x, dim);
                self.da * m.value(x, dim) + u[0] * g[0] + u[1] * g[1] - m.laplacian(x, dim) / self.pe
            }
        }
    }

    /// The known solution, when the source is manufactured.
    pub fn manufactured(&self) -> Option<Manufactured> {
        match self.source {
            Source::Manufactured(m) => Some(m),
            Source::Constant(_) => None,
        }
    }

    /// Element sizes feeding the stabilization tensors.
    pub fn stabilization_sizes<'a>(&'a self, mesh: &'a StructuredMesh) -> &'a [f64] {
        self.stabilization_h.as_deref().unwrap_or(mesh.h_dir())
    }

    /// Manufactured-solution problem on `[0,1]^d` with homogeneous Dirichlet
    /// data everywhere.
    pub fn manufactured_problem(mesh: Vec<usize>, pe: f64, da: f64, velocity: Velocity, method: Method) -> Self {
        Self {
            mesh,
            pe,
            da,
            method,
            velocity,
            source: Source::Manufactured(Manufactured::SinePi),
            boundaries: vec![BoundarySpec::dirichlet(Region::Boundary, 0.0)],
            mzad_p: None,
            stabilization_h: None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::Side;

    fn sample() -> ProblemConfig {
        ProblemConfig {
            mesh: vec![4, 4],
            pe: 1e3,
            da: 10.0,
            method: Method::Mmad,
            velocity: Velocity::Constant(vec![0.6, 0.8]),
            source: Source::Constant(0.0),
            boundaries: vec![
                BoundarySpec::dirichlet(Region::Boundary, 0.0),
                BoundarySpec {
                    kind: BoundaryKind::InteriorConstraint,
                    region: Region::Segment { from: [0.5, 0.0], to: [0.5, 0.5], tol: 1e-12 },
                    profile: Profile::Sine { amplitude: 1.0, frequency: 1.0, axis: 1 },
                },
                BoundarySpec::neumann(Region::Side(Side::Top), 0.0),
            ],
            mzad_p: None,
            stabilization_h: None,
        }
    }

    #[test]
    fn toml_round_trip() {
        let cfg = sample();
        let text = cfg.to_toml().unwrap();
        assert_eq!(ProblemConfig::from_toml(&text).unwrap(), cfg);
    }

    #[test]
    fn parses_handwritten_toml() {
        let text = r#"
            mesh = [100]
            pe = 1e6
            da = 1e-2
            method = "galerkin"
            velocity = { constant = [1.0] }
            source = { constant = 1.0 }

            [[boundaries]]
            kind = "dirichlet"
            region = "boundary"
            profile = { constant = 0.0 }
        "#;
        let cfg = ProblemConfig::from_toml(text).unwrap();
        assert_eq!(cfg.method, Method::Galerkin);
        assert_eq!(cfg.pe, 1e6);
        assert_eq!(cfg.mesh, vec![100]);
    }

    #[test]
    fn validation_errors() {
        let mut cfg = sample();
        cfg.pe = 0.0;
        assert!(cfg.validate().is_err());
        let mut cfg = sample();
        cfg.da = -1.0;
        assert!(cfg.validate().is_err());
        let mut cfg = sample();
        cfg.velocity = Velocity::Constant(vec![1.0]);
        assert!(cfg.validate().is_err());
        let mut cfg = sample();
        cfg.source = Source::Constant(f64::NAN);
        assert!(matches!(cfg.validate(), Err(Error::NonFinite(_))));
        let mut cfg = sample();
        cfg.mesh = vec![1, 2, 3];
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn rotation_field() {
        let v = Velocity::rotation();
        assert_eq!(v.eval([0.25, 0.5]), [-0.5, 0.25]);
        assert_eq!(v.divergence(), 0.0);
        assert_eq!(v.max_component(2), 1.0);
    }

    #[test]
    fn manufactured_source_consistent() {
        let cfg = ProblemConfig::manufactured_problem(vec![8, 8], 10.0, 1.0, Velocity::Constant(vec![0.6, 0.8]), Method::Mmad);
        let m = Manufactured::SinePi;
        let x = [0.3, 0.7];
        // independent central-difference evaluation of the strong operator
        let h = 1e-4;
        let f = |p: Point| m.value(p, 2);
        let dx = (f([x[0] + h, x[1]]) - f([x[0] - h, x[1]])) / (2.0 * h);
        let dy = (f([x[0], x[1] + h]) - f([x[0], x[1] - h])) / (2.0 * h);
        let lap = (f([x[0] + h, x[1]]) + f([x[0] - h, x[1]]) + f([x[0], x[1] + h]) + f([x[0], x[1] - h]) - 4.0 * f(x)) / (h * h);
        let expected = 1.0 * f(x) + 0.6 * dx + 0.8 * dy - lap / 10.0;
        assert!((cfg.source_at(x) - expected).abs() < 1e-6);
    }
}
