//! `mmfem` command-line front-end.
//!
//! Exit codes: 0 success, 1 configuration or input error, 2 solver failure,
//! 3 verification failure. Errors are reported as a single line on stderr:
//! `error kind=<config|solver> msg="..."`.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde_json::json;

use mmfem::analysis::convergence_rate;
use mmfem::benchmarks::{catalog, find_case, resolve_config, run_config, CaseRun, Overrides};
use mmfem::config::{Method, ProblemConfig, Velocity};
use mmfem::io::{cut_csv, cut_samples, field_csv, field_vtk, CutSpec, EmitOptions, ManifestRun, OutputSet, RunManifest};
use mmfem::verify::{all_passed, run_checks, VerifyOptions};
use mmfem::Error;

/// `println!` that ignores a closed stdout instead of panicking.
macro_rules! say {
    ($($t:tt)*) => {{
        use std::io::Write;
        let _ = writeln!(std::io::stdout(), $($t)*);
    }};
}

const OUT_DIR_ENV: &str = "MMFEM_OUT_DIR";

#[derive(Parser, Debug)]
#[command(name = "mmfem", version, about = "Steady reaction-convection-diffusion with micromorphic artificial diffusion")]
struct Cli {
    /// Output directory (default: $MMFEM_OUT_DIR, then ./mmfem-out).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Solve one problem from a TOML config, or replay a run manifest.
    Solve {
        /// `.toml` configuration or `manifest.json` of an earlier run.
        input: PathBuf,
        /// Override the method of the configuration.
        #[arg(long)]
        method: Option<Method>,
        #[command(flatten)]
        emit: EmitArgs,
    },
    /// Run catalog benchmarks (`ex1` ... `ex6`, or `all`).
    Bench {
        #[arg(required = true)]
        ids: Vec<String>,
        #[arg(long, value_enum, default_value = "mmad")]
        method: MethodChoice,
        /// Sub-case index within each benchmark.
        #[arg(long)]
        subcase: Option<usize>,
        /// Run every sub-case of each benchmark.
        #[arg(long, conflicts_with = "subcase")]
        all_subcases: bool,
        #[arg(long)]
        pe: Option<f64>,
        #[arg(long)]
        da: Option<f64>,
        /// Element counts, e.g. `80,80`.
        #[arg(long, value_delimiter = ',')]
        mesh: Option<Vec<usize>>,
        /// Refinement factor of the reference solve for 2D error norms.
        #[arg(long)]
        reference_refinement: Option<usize>,
        /// Run cases on the thread pool.
        #[arg(long)]
        parallel: bool,
        #[command(flatten)]
        emit: EmitArgs,
    },
    /// Mesh-refinement study with a convergence rate.
    Sweep {
        /// Use the manufactured solution `prod sin(pi x_d)`.
        #[arg(long, required = true)]
        manufactured: bool,
        #[arg(long, value_delimiter = ',', default_value = "8,16,32,64,128")]
        levels: Vec<usize>,
        #[arg(long, default_value_t = 10.0)]
        pe: f64,
        #[arg(long, default_value_t = 1.0)]
        da: f64,
        #[arg(long, default_value_t = 2)]
        dim: usize,
        /// Velocity components; defaults to a unit vector along the diagonal.
        #[arg(long, value_delimiter = ',')]
        velocity: Option<Vec<f64>>,
        #[arg(long, default_value = "mmad")]
        method: Method,
    },
    /// Run the property checks.
    Verify {
        #[arg(long, default_value_t = 100)]
        trials: usize,
        #[arg(long, default_value_t = 2024)]
        seed: u64,
        /// Elements per direction of the test mesh.
        #[arg(long, default_value_t = 40)]
        mesh: usize,
    },
}

#[derive(Args, Debug, Clone)]
struct EmitArgs {
    /// Also write a legacy VTK structured-points file.
    #[arg(long)]
    vtk: bool,
    /// Line cuts: `h:<y>`, `v:<x>` or `diag`.
    #[arg(long)]
    cut: Vec<CutSpec>,
    /// Allow cuts that are not aligned with the grid.
    #[arg(long)]
    interpolate: bool,
}

impl From<EmitArgs> for EmitOptions {
    fn from(a: EmitArgs) -> Self {
        EmitOptions { vtk: a.vtk, cuts: a.cut, interpolate: a.interpolate }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum MethodChoice {
    Galerkin,
    Mmad,
    Mzad,
    /// Galerkin and MMAD side by side.
    Both,
}

impl MethodChoice {
    fn methods(self) -> Vec<Method> {
        match self {
            MethodChoice::Galerkin => vec![Method::Galerkin],
            MethodChoice::Mmad => vec![Method::Mmad],
            MethodChoice::Mzad => vec![Method::Mzad],
            MethodChoice::Both => vec![Method::Galerkin, Method::Mmad],
        }
    }
}

/// Failure of a command, carrying its exit code.
enum Failure {
    Lib(Error),
    Verification(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Lib(e)
    }
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Lib(
                Error::Singular { .. } | Error::Breakdown { .. } | Error::NonFinite(_) | Error::DegenerateElement { .. },
            ) => 2,
            Failure::Lib(_) => 1,
            Failure::Verification(_) => 3,
        }
    }

    fn line(&self) -> String {
        let (kind, msg) = match self {
            Failure::Lib(e) => (if self.code() == 2 { "solver" } else { "config" }, e.to_string()),
            Failure::Verification(m) => ("verification", m.clone()),
        };
        format!("error kind={kind} msg={:?}", msg.replace('\n', " "))
    }
}

fn out_dir(flag: Option<PathBuf>) -> PathBuf {
    flag.or_else(|| std::env::var_os(OUT_DIR_ENV).map(PathBuf::from)).unwrap_or_else(|| PathBuf::from("mmfem-out"))
}

fn command_line() -> String {
    std::env::args().collect::<Vec<_>>().join(" ")
}

/// Writes the field, VTK and cut files of one run.
fn emit_run(out: &mut OutputSet, label: &str, run: &CaseRun, emit: &EmitOptions) -> Result<(), Failure> {
    out.write(&format!("{label}.csv"), field_csv(&run.solution, &run.mesh)?.as_bytes())?;
    if emit.vtk {
        out.write(&format!("{label}.vtk"), field_vtk(&run.solution, &run.mesh)?.as_bytes())?;
    }
    for (k, cut) in emit.cuts.iter().enumerate() {
        let samples = cut_samples(&run.solution, &run.mesh, *cut, emit.interpolate)?;
        out.write(&format!("{label}_cut{k}.csv"), cut_csv(&samples).as_bytes())?;
    }
    Ok(())
}

fn run_summary(label: &str, run: &CaseRun) -> serde_json::Value {
    json!({
        "label": label,
        "method": run.config.method.name(),
        "pe": run.config.pe,
        "da": run.config.da,
        "unknowns": run.solve.unknowns,
        "dofs_per_node": run.solve.unknowns / run.mesh.num_nodes(),
        "nnz": run.solve.nnz,
        "relative_residual": run.solve.relative_residual,
        "assembly_time": run.assembly_time,
        "solve_time": run.solve_time,
        "errors": run.errors,
        "oscillation": run.oscillation,
    })
}

fn print_run(label: &str, run: &CaseRun) {
    let mut line = format!(
        "{label}: method={} pe={:e} da={:e} unknowns={} residual={:.2e} time={:.3}s min={:.6} max={:.6}",
        run.config.method.name(),
        run.config.pe,
        run.config.da,
        run.solve.unknowns,
        run.solve.relative_residual,
        run.wall_time(),
        run.oscillation.min,
        run.oscillation.max
    );
    if let Some(e) = &run.errors {
        line.push_str(&format!(" l2={:.4e} h1={:.4e} combined={:.4e}", e.l2_error, e.h1_semi_error, e.combined_norm));
    }
    say!("{line}");
}

/// Runs all `jobs`, writes their files and the manifest. Everything written
/// is removed again if any job fails.
fn execute(out: OutputSet, command: &str, jobs: Vec<ManifestRun>, parallel: bool) -> Result<(), Failure> {
    let start = Instant::now();
    let solve = |job: &ManifestRun| run_config(&job.label, &job.config, None);
    let runs: Vec<Result<CaseRun, Error>> =
        if parallel { jobs.par_iter().map(solve).collect() } else { jobs.iter().map(solve).collect() };
    let mut out = out;
    let mut summaries = Vec::new();
    let result = (|| -> Result<(), Failure> {
        for (job, run) in jobs.iter().zip(runs) {
            let run = run?;
            print_run(&job.label, &run);
            emit_run(&mut out, &job.label, &run, &job.emit)?;
            summaries.push(run_summary(&job.label, &run));
        }
        Ok(())
    })();
    if let Err(e) = result {
        out.rollback();
        return Err(e);
    }
    let mut manifest = RunManifest::new(command);
    manifest.runs = jobs;
    manifest.timings.insert("total".into(), start.elapsed().as_secs_f64());
    manifest.results = json!({ "runs": summaries });
    let path = out.finish(manifest)?;
    say!("manifest: {}", path.display());
    Ok(())
}

fn load_jobs(input: &Path, method: Option<Method>, emit: EmitOptions) -> Result<Vec<ManifestRun>, Failure> {
    let text = fs::read_to_string(input).map_err(|e| Error::Io { path: input.display().to_string(), source: e })?;
    let mut jobs = if input.extension().is_some_and(|e| e == "json") {
        RunManifest::from_json(&text)?.runs
    } else {
        let label = input.file_stem().and_then(|s| s.to_str()).unwrap_or("solution").to_string();
        vec![ManifestRun { label, config: ProblemConfig::from_toml(&text)?, emit }]
    };
    if jobs.is_empty() {
        return Err(Error::Config(format!("{} lists no runs", input.display())).into());
    }
    for job in &mut jobs {
        if let Some(m) = method {
            job.config.method = m;
        }
        job.config.validate()?;
    }
    Ok(jobs)
}

#[allow(clippy::too_many_arguments)]
fn bench_jobs(
    ids: &[String],
    choice: MethodChoice,
    subcase: Option<usize>,
    all_subcases: bool,
    pe: Option<f64>,
    da: Option<f64>,
    mesh: Option<Vec<usize>>,
    emit: &EmitOptions,
) -> Result<Vec<ManifestRun>, Failure> {
    let ids: Vec<String> = if ids.iter().any(|i| i == "all") {
        catalog().into_iter().map(|c| c.id).collect()
    } else {
        ids.to_vec()
    };
    let mut jobs = Vec::new();
    for id in &ids {
        let case = find_case(id)?;
        let indices: Vec<usize> = if all_subcases { (0..case.subcases.len()).collect() } else { vec![subcase.unwrap_or(0)] };
        for idx in indices {
            for method in choice.methods() {
                let ov = Overrides { subcase: Some(idx), pe, da, mesh: mesh.clone(), ..Default::default() };
                let config = resolve_config(&case, method, &ov)?;
                jobs.push(ManifestRun { label: format!("{id}_s{idx}_{}", method.name()), config, emit: emit.clone() });
            }
        }
    }
    Ok(jobs)
}

fn sweep(
    out: OutputSet,
    levels: &[usize],
    pe: f64,
    da: f64,
    dim: usize,
    velocity: Option<Vec<f64>>,
    method: Method,
) -> Result<(), Failure> {
    if !(1..=2).contains(&dim) {
        return Err(Error::Config(format!("dim must be 1 or 2, got {dim}")).into());
    }
    let u = velocity.unwrap_or_else(|| vec![1.0 / (dim as f64).sqrt(); dim]);
    let start = Instant::now();
    let mut rows = Vec::new();
    let mut jobs = Vec::new();
    for &n in levels {
        let config = ProblemConfig::manufactured_problem(vec![n; dim], pe, da, Velocity::Constant(u.clone()), method);
        let run = run_config("sweep", &config, None)?;
        let e = run.errors.expect("manufactured runs report errors");
        say!(
            "n={n} h={:.6e} l2={:.6e} h1={:.6e} combined={:.6e}",
            1.0 / n as f64,
            e.l2_error,
            e.h1_semi_error,
            e.combined_norm
        );
        rows.push((n, e));
        jobs.push(ManifestRun { label: format!("sweep_n{n}"), config, emit: EmitOptions::default() });
    }
    let hs: Vec<f64> = rows.iter().map(|r| 1.0 / r.0 as f64).collect();
    let rate = |f: fn(&mmfem::analysis::ErrorReport) -> f64| convergence_rate(&rows.iter().map(|r| f(&r.1)).collect::<Vec<_>>(), &hs);
    let combined = rate(|e| e.combined_norm)?;
    let l2 = rate(|e| e.l2_error)?;
    let h1 = rate(|e| e.h1_semi_error)?;
    say!("rate combined={combined:.4} h1={h1:.4} l2={l2:.4}");

    let mut csv = String::from("n,h,l2,h1,g,combined\n");
    for (n, e) in &rows {
        csv.push_str(&format!(
            "{n},{},{},{},{},{}\n",
            mmfem::io::fmt_f64(1.0 / *n as f64),
            mmfem::io::fmt_f64(e.l2_error),
            mmfem::io::fmt_f64(e.h1_semi_error),
            e.g_norm.map(mmfem::io::fmt_f64).unwrap_or_default(),
            mmfem::io::fmt_f64(e.combined_norm)
        ));
    }
    let mut out = out;
    if let Err(e) = out.write("sweep.csv", csv.as_bytes()) {
        out.rollback();
        return Err(e.into());
    }
    let mut manifest = RunManifest::new(command_line());
    manifest.runs = jobs;
    manifest.timings.insert("total".into(), start.elapsed().as_secs_f64());
    manifest.results = json!({ "rate_combined": combined, "rate_h1": h1, "rate_l2": l2, "levels": levels });
    out.finish(manifest)?;
    Ok(())
}

fn verify(out: OutputSet, trials: usize, seed: u64, mesh: usize) -> Result<(), Failure> {
    let checks = run_checks(&VerifyOptions { trials, seed, mesh })?;
    for c in &checks {
        say!(
            "{} {} value={:e} threshold={:e} {}",
            if c.passed { "PASS" } else { "FAIL" },
            c.name,
            c.value,
            c.threshold,
            c.detail
        );
    }
    let mut manifest = RunManifest::new(command_line());
    manifest.results = json!({ "checks": checks });
    out.finish(manifest)?;
    if all_passed(&checks) {
        Ok(())
    } else {
        let failed: Vec<&str> = checks.iter().filter(|c| !c.passed).map(|c| c.name.as_str()).collect();
        Err(Failure::Verification(format!("failed checks: {}", failed.join(", "))))
    }
}

fn run(cli: Cli) -> Result<(), Failure> {
    let out = OutputSet::new(out_dir(cli.out));
    match cli.command {
        Command::Solve { input, method, emit } => {
            let jobs = load_jobs(&input, method, emit.into())?;
            execute(out, &command_line(), jobs, false)
        }
        Command::Bench { ids, method, subcase, all_subcases, pe, da, mesh, reference_refinement, parallel, emit } => {
            let emit: EmitOptions = emit.into();
            let jobs = bench_jobs(&ids, method, subcase, all_subcases, pe, da, mesh, &emit)?;
            if let Some(k) = reference_refinement {
                return bench_with_reference(out, jobs, k);
            }
            execute(out, &command_line(), jobs, parallel)
        }
        Command::Sweep { manufactured: _, levels, pe, da, dim, velocity, method } => {
            sweep(out, &levels, pe, da, dim, velocity, method)
        }
        Command::Verify { trials, seed, mesh } => verify(out, trials, seed, mesh),
    }
}

/// Bench runs whose error norms come from a refined reference solve.
fn bench_with_reference(out: OutputSet, jobs: Vec<ManifestRun>, k: usize) -> Result<(), Failure> {
    if k == 0 {
        return Err(Error::Config("reference refinement must be positive".into()).into());
    }
    let start = Instant::now();
    let mut out = out;
    let mut summaries = Vec::new();
    let result = (|| -> Result<(), Failure> {
        for job in &jobs {
            let run = run_config(&job.label, &job.config, Some(k))?;
            print_run(&job.label, &run);
            emit_run(&mut out, &job.label, &run, &job.emit)?;
            summaries.push(run_summary(&job.label, &run));
        }
        Ok(())
    })();
    if let Err(e) = result {
        out.rollback();
        return Err(e);
    }
    let mut manifest = RunManifest::new(command_line());
    manifest.runs = jobs;
    manifest.timings.insert("total".into(), start.elapsed().as_secs_f64());
    manifest.results = json!({ "runs": summaries, "reference_refinement": k });
    out.finish(manifest)?;
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = e.print();
                return ExitCode::SUCCESS;
            }
            let msg = e.to_string();
            let first = msg.lines().next().unwrap_or("invalid arguments").trim_start_matches("error: ");
            eprintln!("error kind=config msg={first:?}");
            return ExitCode::from(1);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("{}", f.line());
            ExitCode::from(f.code())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes() {
        assert_eq!(Failure::from(Error::Config("x".into())).code(), 1);
        assert_eq!(Failure::from(Error::UnknownCase("ex9".into())).code(), 1);
        assert_eq!(Failure::from(Error::Singular { column: 3 }).code(), 2);
        assert_eq!(Failure::from(Error::NonFinite("rhs".into())).code(), 2);
        assert_eq!(Failure::Verification("skew".into()).code(), 3);
    }

    #[test]
    fn error_line_is_single_line() {
        let f = Failure::from(Error::Config("bad\nvalue".into()));
        let line = f.line();
        assert!(line.starts_with("error kind=config msg=\""));
        assert!(!line.contains('\n'));
        assert!(Failure::from(Error::Singular { column: 0 }).line().starts_with("error kind=solver"));
    }

    #[test]
    fn flag_beats_environment() {
        assert_eq!(out_dir(Some(PathBuf::from("a"))), PathBuf::from("a"));
    }
}
