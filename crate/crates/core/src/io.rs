//! Result files: field and line-cut CSV, legacy VTK structured points, and
//! the JSON run manifest. Every file is written atomically.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::assembly::SolutionField;
use crate::config::ProblemConfig;
use crate::error::{invalid, Error, Result};
use crate::mesh::StructuredMesh;

fn io_err(path: &Path, source: std::io::Error) -> Error {
    Error::Io { path: path.display().to_string(), source }
}

/// 17 significant digits, enough to round-trip any `f64`.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

/// Writes `bytes` to a temporary file next to `path` and renames it into
/// place, so readers never observe a partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    };
    fs::create_dir_all(&dir).map_err(|e| io_err(&dir, e))?;
    let mut tmp = tempfile::NamedTempFile::new_in(&dir).map_err(|e| io_err(&dir, e))?;
    tmp.write_all(bytes).map_err(|e| io_err(path, e))?;
    tmp.as_file().sync_all().map_err(|e| io_err(path, e))?;
    tmp.persist(path).map_err(|e| io_err(path, e.error))?;
    Ok(())
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    format!("{:x}", Sha256::digest(bytes))
}

fn check_match(solution: &SolutionField, mesh: &StructuredMesh) -> Result<()> {
    if solution.phi.len() != mesh.num_nodes() || solution.dim != mesh.dim() {
        return Err(invalid(format!(
            "{}D solution with {} nodal values does not match a {}D mesh with {} nodes",
            solution.dim,
            solution.phi.len(),
            mesh.dim(),
            mesh.num_nodes()
        )));
    }
    Ok(())
}

/// Nodal CSV: `x,phi[,g1]` in 1D, `x,y,phi[,g1,g2]` in 2D, ordered by `y`
/// then `x`.
pub fn field_csv(solution: &SolutionField, mesh: &StructuredMesh) -> Result<String> {
    check_match(solution, mesh)?;
    let dim = mesh.dim();
    let mut out = String::new();
    out.push_str(if dim == 1 { "x,phi" } else { "x,y,phi" });
    if solution.g.is_some() {
        out.push_str(if dim == 1 { ",g1" } else { ",g1,g2" });
    }
    out.push('\n');
    for (n, p) in mesh.nodes().iter().enumerate() {
        let mut cols: Vec<String> = p[..dim].iter().map(|c| fmt_f64(*c)).collect();
        cols.push(fmt_f64(solution.phi[n]));
        if let Some(g) = &solution.g {
            cols.extend(g[n][..dim].iter().map(|c| fmt_f64(*c)));
        }
        out.push_str(&cols.join(","));
        out.push('\n');
    }
    Ok(out)
}

/// Legacy VTK structured-points file with `phi` as scalars and `g` as
/// vectors.
pub fn field_vtk(solution: &SolutionField, mesh: &StructuredMesh) -> Result<String> {
    check_match(solution, mesh)?;
    let (nx, ny) = (mesh.nx(), if mesh.dim() == 1 { 0 } else { mesh.ny() });
    let h = mesh.h_dir();
    let hy = if mesh.dim() == 1 { 1.0 } else { h[1] };
    let mut out = String::new();
    let _ = writeln!(out, "# vtk DataFile Version 3.0");
    let _ = writeln!(out, "mmfem {} solution", solution.method.name());
    let _ = writeln!(out, "ASCII");
    let _ = writeln!(out, "DATASET STRUCTURED_POINTS");
    let _ = writeln!(out, "DIMENSIONS {} {} 1", nx + 1, ny + 1);
    let _ = writeln!(out, "ORIGIN 0 0 0");
    let _ = writeln!(out, "SPACING {} {} 1", fmt_f64(h[0]), fmt_f64(hy));
    let _ = writeln!(out, "POINT_DATA {}", mesh.num_nodes());
    let _ = writeln!(out, "SCALARS phi double 1");
    let _ = writeln!(out, "LOOKUP_TABLE default");
    for v in &solution.phi {
        let _ = writeln!(out, "{}", fmt_f64(*v));
    }
    if let Some(g) = &solution.g {
        let _ = writeln!(out, "VECTORS g double");
        for v in g {
            let _ = writeln!(out, "{} {} {}", fmt_f64(v[0]), fmt_f64(v[1]), fmt_f64(0.0));
        }
    }
    Ok(out)
}

/// Writes the nodal CSV to `path`.
pub fn emit_field(solution: &SolutionField, mesh: &StructuredMesh, path: &Path) -> Result<()> {
    write_atomic(path, field_csv(solution, mesh)?.as_bytes())
}

pub fn emit_vtk(solution: &SolutionField, mesh: &StructuredMesh, path: &Path) -> Result<()> {
    write_atomic(path, field_vtk(solution, mesh)?.as_bytes())
}

/// Straight line through a 2D mesh.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CutSpec {
    /// `y = const`, left to right.
    Horizontal(f64),
    /// `x = const`, bottom to top.
    Vertical(f64),
    /// From `(0, 0)` to `(1, 1)`.
    Diagonal,
}

impl std::str::FromStr for CutSpec {
    type Err = Error;

    /// `h:0.5`, `v:0.25` or `diag`.
    fn from_str(s: &str) -> Result<Self> {
        let parse = |v: &str| v.parse::<f64>().map_err(|_| invalid(format!("bad cut coordinate `{v}`")));
        match s.split_once(':') {
            Some(("h", v)) => Ok(CutSpec::Horizontal(parse(v)?)),
            Some(("v", v)) => Ok(CutSpec::Vertical(parse(v)?)),
            None if s == "diag" => Ok(CutSpec::Diagonal),
            _ => Err(invalid(format!("unknown cut `{s}`, expected h:<y>, v:<x> or diag"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CutSample {
    /// Arclength from the start of the cut.
    pub s: f64,
    pub x: f64,
    pub y: f64,
    pub phi: f64,
}

/// Samples of `phi` along a cut. Grid-aligned cuts return the nodal values
/// on the line; other cuts need `interpolate` and sample at the crossings of
/// the line with the grid in its running direction.
pub fn cut_samples(solution: &SolutionField, mesh: &StructuredMesh, cut: CutSpec, interpolate: bool) -> Result<Vec<CutSample>> {
    check_match(solution, mesh)?;
    if mesh.dim() != 2 {
        return Err(invalid("line cuts need a 2D mesh"));
    }
    let (nx, ny) = (mesh.nx(), mesh.ny());
    let on_line = |c: f64, n: usize| -> Option<usize> {
        let k = (c * n as f64).round();
        ((c * n as f64 - k).abs() <= 1e-9 && (0.0..=n as f64).contains(&k)).then_some(k as usize)
    };
    let inside = |c: f64| (0.0..=1.0).contains(&c);
    let sample = |x: f64, y: f64, s: f64, node: Option<usize>| -> Result<CutSample> {
        let phi = match node {
            Some(n) => solution.phi[n],
            None => solution.eval(mesh, [x, y])?.phi,
        };
        Ok(CutSample { s, x, y, phi })
    };
    let require = |aligned: bool| -> Result<()> {
        if aligned || interpolate {
            Ok(())
        } else {
            Err(invalid(format!("cut {cut:?} is not aligned with the grid; enable interpolation")))
        }
    };
    match cut {
        CutSpec::Horizontal(y) => {
            if !inside(y) {
                return Err(invalid(format!("cut at y = {y} lies outside the domain")));
            }
            let row = on_line(y, ny);
            require(row.is_some())?;
            (0..=nx)
                .map(|i| {
                    let x = i as f64 / nx as f64;
                    sample(x, y, x, row.map(|j| mesh.node_id(i, j)))
                })
                .collect()
        }
        CutSpec::Vertical(x) => {
            if !inside(x) {
                return Err(invalid(format!("cut at x = {x} lies outside the domain")));
            }
            let col = on_line(x, nx);
            require(col.is_some())?;
            (0..=ny)
                .map(|j| {
                    let y = j as f64 / ny as f64;
                    sample(x, y, y, col.map(|i| mesh.node_id(i, j)))
                })
                .collect()
        }
        CutSpec::Diagonal => {
            require(nx == ny)?;
            let n = nx.max(ny);
            (0..=n)
                .map(|k| {
                    let t = k as f64 / n as f64;
                    sample(t, t, t * std::f64::consts::SQRT_2, (nx == ny).then(|| mesh.node_id(k, k)))
                })
                .collect()
        }
    }
}

pub fn cut_csv(samples: &[CutSample]) -> String {
    let mut out = String::from("s,x,y,phi\n");
    for c in samples {
        let _ = writeln!(out, "{},{},{},{}", fmt_f64(c.s), fmt_f64(c.x), fmt_f64(c.y), fmt_f64(c.phi));
    }
    out
}

/// Writes the cut CSV (`s,x,y,phi`) to `path`.
pub fn emit_cut(solution: &SolutionField, mesh: &StructuredMesh, cut: CutSpec, interpolate: bool, path: &Path) -> Result<Vec<CutSample>> {
    let samples = cut_samples(solution, mesh, cut, interpolate)?;
    write_atomic(path, cut_csv(&samples).as_bytes())?;
    Ok(samples)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OutputEntry {
    /// File name relative to the output directory.
    pub path: String,
    pub bytes: u64,
    pub sha256: String,
}

/// Extra files written for a solve.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EmitOptions {
    #[serde(default)]
    pub vtk: bool,
    #[serde(default)]
    pub cuts: Vec<CutSpec>,
    #[serde(default)]
    pub interpolate: bool,
}

/// One solve recorded in a manifest. Output files are named after `label`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestRun {
    pub label: String,
    pub config: ProblemConfig,
    #[serde(default)]
    pub emit: EmitOptions,
}

/// Everything needed to repeat a run and check its outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub versions: BTreeMap<String, String>,
    pub runs: Vec<ManifestRun>,
    pub timings: BTreeMap<String, f64>,
    pub outputs: Vec<OutputEntry>,
    /// Command-specific results (norms, rates, check outcomes).
    pub results: serde_json::Value,
}

impl RunManifest {
    pub fn new(command: impl Into<String>) -> Self {
        let mut versions = BTreeMap::new();
        versions.insert("mmfem".into(), env!("CARGO_PKG_VERSION").into());
        versions.insert("faer".into(), "0.22".into());
        Self {
            command: command.into(),
            versions,
            runs: Vec::new(),
            timings: BTreeMap::new(),
            outputs: Vec::new(),
            results: serde_json::Value::Null,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| invalid(format!("manifest serialization: {e}")))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(format!("manifest: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&fs::read_to_string(path).map_err(|e| io_err(path, e))?)
    }
}

/// Files written into one output directory. On failure the files written so
/// far can be removed with [`OutputSet::rollback`].
#[derive(Debug)]
pub struct OutputSet {
    dir: PathBuf,
    written: Vec<(PathBuf, OutputEntry)>,
}

impl OutputSet {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        Self { dir: dir.into(), written: Vec::new() }
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    /// Writes `name` atomically and records its checksum.
    pub fn write(&mut self, name: &str, bytes: &[u8]) -> Result<PathBuf> {
        let path = self.dir.join(name);
        write_atomic(&path, bytes)?;
        let entry = OutputEntry { path: name.to_string(), bytes: bytes.len() as u64, sha256: sha256_hex(bytes) };
        self.written.retain(|(p, _)| p != &path);
        self.written.push((path.clone(), entry));
        Ok(path)
    }

    pub fn entries(&self) -> Vec<OutputEntry> {
        self.written.iter().map(|(_, e)| e.clone()).collect()
    }

    /// Writes `manifest.json` listing all files written so far.
    pub fn finish(mut self, mut manifest: RunManifest) -> Result<PathBuf> {
        manifest.outputs = self.entries();
        let text = manifest.to_json()?;
        self.write("manifest.json", text.as_bytes())
    }

    /// Removes every file written through this set.
    pub fn rollback(self) {
        for (p, _) in self.written {
            let _ = fs::remove_file(p);
        }
    }
}
