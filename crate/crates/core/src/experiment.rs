//! Config-file driven experiments: load a TOML description, run one command
//! and write its artifacts into the output directory.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use nalgebra::Matrix2;
use serde::{Deserialize, Serialize};

use crate::coeff::{CoefficientField, SigmaPair};
use crate::error::{Error, Result};
use crate::geometry::RadialShape;
use crate::homogenize::{matching_objective, CellState, EffectiveTensor, TargetTensor};
use crate::mesh::{Case, CellMesh};
use crate::optimize::{minimize, MatchingProblem, OptimizeConfig, Termination};
use crate::report::{shape_csv, shape_svg, to_json};
use crate::shapecalc::{
    discrete_tensor_derivatives, evaluate, finite_difference_partials, hessian_entry,
    recover_interface_traces, relative_l2_error, solve_local_derivative, taylor_predict,
};

/// Exit status when the gradient check exceeds its tolerance.
pub const EXIT_GRAD_CHECK_FAILED: i32 = 5;
/// Exit status when the optimizer stops without converging.
pub const EXIT_NOT_CONVERGED: i32 = 6;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub case: Case,
    /// Matrix conductivity.
    #[serde(default = "unit_field")]
    pub sigma1: CoefficientField,
    /// Inclusion conductivity; must be absent for perforated cells.
    #[serde(default)]
    pub sigma2: Option<CoefficientField>,
    /// Ellipticity window `[lower, upper]` the fields are checked against.
    #[serde(default = "default_sigma_bounds")]
    pub sigma_bounds: [f64; 2],
    #[serde(default)]
    pub target: Option<TargetTensor>,
    #[serde(default)]
    pub fourier: FourierSection,
    #[serde(default)]
    pub mesh: MeshSection,
    #[serde(default)]
    pub init: InitSection,
    #[serde(default)]
    pub optimizer: OptimizeConfig,
    #[serde(default)]
    pub grad_check: GradCheckSection,
    #[serde(default)]
    pub uq: UqSection,
    #[serde(default)]
    pub output: OutputSection,
}

fn unit_field() -> CoefficientField {
    CoefficientField::Constant(1.0)
}

fn default_sigma_bounds() -> [f64; 2] {
    [1e-2, 1e3]
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FourierSection {
    #[serde(rename = "N")]
    pub n: usize,
}

impl Default for FourierSection {
    fn default() -> Self {
        FourierSection { n: 32 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeshSection {
    pub level: u32,
}

impl Default for MeshSection {
    fn default() -> Self {
        MeshSection { level: 5 }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InitKind {
    #[default]
    Circle,
    Perturbed,
    Explicit,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InitSection {
    pub kind: InitKind,
    pub radius: f64,
    pub amplitude: f64,
    pub seed: u64,
    pub coeffs: Option<Vec<f64>>,
}

impl Default for InitSection {
    fn default() -> Self {
        InitSection {
            kind: InitKind::Circle,
            radius: 0.25,
            amplitude: 0.02,
            seed: 1,
            coeffs: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GradCheckSection {
    pub fd_step: f64,
    /// Coefficient indices to check; all when absent.
    pub coeffs: Option<Vec<usize>>,
    pub tolerance: f64,
}

impl Default for GradCheckSection {
    fn default() -> Self {
        GradCheckSection {
            fd_step: 1e-4,
            coeffs: None,
            tolerance: 5e-2,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct UqSection {
    /// Coefficient velocity; defaults to `0.5 + cos(2 phi)`.
    pub direction: Option<Vec<f64>>,
    pub eps: Vec<f64>,
}

impl Default for UqSection {
    fn default() -> Self {
        UqSection {
            direction: None,
            eps: vec![0.02, 0.01, 0.005],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSection {
    pub dir: PathBuf,
    pub emit_svg: bool,
    pub emit_mesh: bool,
}

impl Default for OutputSection {
    fn default() -> Self {
        OutputSection {
            dir: PathBuf::from("out"),
            emit_svg: true,
            emit_mesh: false,
        }
    }
}

impl ExperimentConfig {
    /// Parses and validates a TOML document.
    pub fn from_toml(text: &str) -> Result<Self> {
        let config: ExperimentConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    /// Applies command-line overrides and revalidates.
    pub fn with_overrides(mut self, level: Option<u32>, seed: Option<u64>, out: Option<PathBuf>) -> Result<Self> {
        if let Some(level) = level {
            self.mesh.level = level;
        }
        if let Some(seed) = seed {
            self.init.seed = seed;
        }
        if let Some(out) = out {
            self.output.dir = out;
        }
        self.validate()?;
        Ok(self)
    }

    /// Cross-field consistency.
    pub fn validate(&self) -> Result<()> {
        let len = 2 * self.fourier.n + 1;
        match (self.case, &self.sigma2) {
            (Case::Perforated, Some(_)) => {
                return Err(Error::Config("perforated cells take no sigma2".into()));
            }
            (Case::Mixture, None) => {
                return Err(Error::Config("mixture cells need sigma2".into()));
            }
            _ => {}
        }
        let [lo, hi] = self.sigma_bounds;
        if !(lo > 0.0 && hi > lo) {
            return Err(Error::Config(format!("sigma_bounds must satisfy 0 < lower < upper, got [{lo}, {hi}]")));
        }
        if self.mesh.level > 9 {
            return Err(Error::Config(format!("mesh level {} is beyond the supported range 0..=9", self.mesh.level)));
        }
        if let Some(t) = &self.target {
            if ![t.b11, t.b12, t.b22].iter().all(|v| v.is_finite()) {
                return Err(Error::Config("target entries must be finite".into()));
            }
        }
        match (self.init.kind, &self.init.coeffs) {
            (InitKind::Explicit, None) => {
                return Err(Error::Config("explicit init needs coeffs".into()));
            }
            (InitKind::Explicit, Some(c)) if c.len() != len => {
                return Err(Error::DegreeMismatch(self.fourier.n, c.len().saturating_sub(1) / 2));
            }
            (InitKind::Circle | InitKind::Perturbed, Some(_)) => {
                return Err(Error::Config("init coeffs are only read for kind = \"explicit\"".into()));
            }
            _ => {}
        }
        self.optimizer.validate()?;
        let gc = &self.grad_check;
        if !(gc.fd_step > 0.0 && gc.tolerance > 0.0) {
            return Err(Error::Config("grad_check fd_step and tolerance must be positive".into()));
        }
        if let Some(list) = &gc.coeffs {
            if list.is_empty() {
                return Err(Error::Config("grad_check coeffs must not be empty".into()));
            }
            if let Some(&index) = list.iter().find(|&&k| k >= len) {
                return Err(Error::CoefficientIndex {
                    index,
                    degree: self.fourier.n,
                });
            }
        }
        if let Some(d) = &self.uq.direction {
            if d.len() != len {
                return Err(Error::DegreeMismatch(self.fourier.n, d.len().saturating_sub(1) / 2));
            }
        }
        if self.uq.eps.is_empty() || !self.uq.eps.iter().all(|e| e.is_finite() && *e >= 0.0) {
            return Err(Error::Config("uq eps must be a nonempty list of nonnegative numbers".into()));
        }
        Ok(())
    }

    pub fn sigma(&self) -> Result<SigmaPair> {
        let pair = SigmaPair {
            matrix: self.sigma1.clone(),
            inclusion: self.sigma2.clone(),
        };
        pair.check(self.sigma_bounds[0], self.sigma_bounds[1])?;
        Ok(pair)
    }

    pub fn initial_shape(&self) -> Result<RadialShape> {
        let n = self.fourier.n;
        let shape = match self.init.kind {
            InitKind::Circle => RadialShape::circle(n, self.init.radius)?,
            InitKind::Perturbed => {
                RadialShape::perturbed_circle(n, self.init.radius, self.init.amplitude, self.init.seed)?
            }
            InitKind::Explicit => RadialShape::from_coeffs(self.init.coeffs.clone().unwrap_or_default())?,
        };
        shape.ensure_valid()?;
        Ok(shape)
    }

    pub fn target(&self) -> Result<TargetTensor> {
        self.target
            .ok_or_else(|| Error::Config("this command needs a [target] section".into()))
    }

    fn optimize_config(&self) -> OptimizeConfig {
        OptimizeConfig {
            level: self.mesh.level,
            ..self.optimizer.clone()
        }
    }

    fn uq_direction(&self) -> Vec<f64> {
        self.uq.direction.clone().unwrap_or_else(|| {
            let mut d = vec![0.0; 2 * self.fourier.n + 1];
            d[0] = 0.5;
            if self.fourier.n >= 2 {
                d[3] = 1.0;
            }
            d
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Command {
    Tensor,
    GradCheck,
    Optimize,
    Uq,
    MeshExport,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Tensor => "tensor",
            Command::GradCheck => "grad-check",
            Command::Optimize => "optimize",
            Command::Uq => "uq",
            Command::MeshExport => "mesh-export",
        }
    }
}

/// Test hooks and command-line only switches.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct RunOptions {
    /// Negates the analytic gradient before the comparison.
    pub flip_gradient_sign: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunOutcome {
    pub exit_code: i32,
    pub summary: String,
    pub files: Vec<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TensorSummary {
    pub a11: f64,
    pub a12: f64,
    pub a22: f64,
    pub voigt_upper: Option<f64>,
    pub reuss_lower: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BoundsSummary {
    pub lower: f64,
    pub upper: f64,
    pub eigenvalues: [f64; 2],
    pub contained: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SolverSummary {
    pub iterations: usize,
    pub residual: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Timings {
    pub total_seconds: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GradCheckReport {
    pub fd_step: f64,
    pub tolerance: f64,
    pub relative_error: f64,
    pub passed: bool,
    pub coefficients: Vec<usize>,
    pub analytic: Vec<f64>,
    pub finite_difference: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct OptimizeReport {
    pub iterations: usize,
    pub evaluations: usize,
    pub final_coeffs: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct UqRow {
    pub eps: f64,
    pub resolved: [f64; 3],
    pub first_order: [f64; 3],
    pub second_order: [f64; 3],
    pub first_remainder: f64,
    pub second_remainder: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct UqReport {
    pub direction: Vec<f64>,
    /// `(a11, a12, a22)` derivatives of the discrete tensor.
    pub first: [f64; 3],
    pub second: [f64; 3],
    /// Second derivative from the interface formula with recovered
    /// gradients, for comparison.
    pub interface_second: [f64; 3],
    pub rows: Vec<UqRow>,
    /// Remainder ratios between consecutive positive `eps`.
    pub first_ratios: Vec<f64>,
    pub second_ratios: Vec<f64>,
    /// Observed orders `log(r_k / r_{k+1}) / log(eps_k / eps_{k+1})`.
    pub first_orders: Vec<f64>,
    pub second_orders: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(untagged)]
pub enum CommandReport {
    GradCheck(GradCheckReport),
    Optimize(OptimizeReport),
    Uq(UqReport),
}

/// Contents of `results.json`. Everything except `timings` is a pure
/// function of the configuration.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Results {
    pub command: String,
    pub config_echo: ExperimentConfig,
    pub tensor: TensorSummary,
    pub bounds: Option<BoundsSummary>,
    pub objective: Option<f64>,
    pub gradient_norm: Option<f64>,
    pub solver_stats: SolverSummary,
    pub termination: Option<Termination>,
    pub report: Option<CommandReport>,
    pub timings: Timings,
}

fn summarize(t: &EffectiveTensor) -> (TensorSummary, Option<BoundsSummary>) {
    let summary = TensorSummary {
        a11: t.a11,
        a12: t.a12,
        a22: t.a22,
        voigt_upper: t.bounds.map(|b| b.1),
        reuss_lower: t.bounds.map(|b| b.0),
    };
    let bounds = t.bounds.map(|(lower, upper)| BoundsSummary {
        lower,
        upper,
        eigenvalues: t.eigenvalues(),
        contained: t.within_bounds(0.0).unwrap_or(false),
    });
    (summary, bounds)
}

fn entries(m: &Matrix2<f64>) -> [f64; 3] {
    [m[(0, 0)], m[(0, 1)], m[(1, 1)]]
}

struct Writer {
    dir: PathBuf,
    files: Vec<PathBuf>,
}

impl Writer {
    fn new(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir)?;
        Ok(Writer {
            dir: dir.to_path_buf(),
            files: Vec::new(),
        })
    }

    fn write(&mut self, name: &str, contents: &str) -> Result<()> {
        let path = self.dir.join(name);
        fs::write(&path, contents)?;
        self.files.push(path);
        Ok(())
    }

    fn results(&mut self, results: &Results) -> Result<()> {
        let text = to_json(results).map_err(|e| Error::Io(std::io::Error::other(e)))?;
        self.write("results.json", &text)
    }

    fn shape(&mut self, config: &ExperimentConfig, shape: &RadialShape, mesh: Option<&CellMesh>) -> Result<()> {
        self.write("shape.csv", &shape_csv(shape))?;
        if config.output.emit_svg {
            self.write("shape.svg", &shape_svg(shape, config.case == Case::Perforated))?;
        }
        if config.output.emit_mesh {
            match mesh {
                Some(m) => self.write("mesh.txt", &m.export_text())?,
                None => {
                    let m = CellMesh::build(shape, config.case, config.mesh.level)?;
                    self.write("mesh.txt", &m.export_text())?;
                }
            }
        }
        Ok(())
    }
}

/// Runs `command` and writes its artifacts under `config.output.dir`.
pub fn run(command: Command, config: &ExperimentConfig, options: RunOptions) -> Result<RunOutcome> {
    config.validate()?;
    let start = Instant::now();
    let mut out = Writer::new(&config.output.dir)?;
    let timings = |start: Instant| Timings {
        total_seconds: start.elapsed().as_secs_f64(),
    };
    let base_results = |state: &CellState, objective: Option<f64>| {
        let (tensor, bounds) = summarize(&state.tensor);
        let stats = state.solver_stats();
        Results {
            command: command.name().to_string(),
            config_echo: config.clone(),
            tensor,
            bounds,
            objective,
            gradient_norm: None,
            solver_stats: SolverSummary {
                iterations: stats.iterations,
                residual: stats.residual,
            },
            termination: None,
            report: None,
            timings: Timings { total_seconds: 0.0 },
        }
    };

    match command {
        Command::Tensor => {
            let shape = config.initial_shape()?;
            let sigma = config.sigma()?;
            let state = CellState::solve(&shape, config.case, config.mesh.level, &sigma, None)?;
            let objective = config.target.map(|t| matching_objective(&state.tensor, &t).0);
            let mut results = base_results(&state, objective);
            results.timings = timings(start);
            out.results(&results)?;
            out.shape(config, &shape, Some(&state.mesh))?;
            let t = &state.tensor;
            Ok(RunOutcome {
                exit_code: 0,
                summary: format!("a11 = {:.12} a12 = {:.12} a22 = {:.12}", t.a11, t.a12, t.a22),
                files: out.files,
            })
        }
        Command::GradCheck => {
            let shape = config.initial_shape()?;
            let sigma = config.sigma()?;
            let target = config.target()?;
            let level = config.mesh.level;
            let gc = &config.grad_check;
            let eval = evaluate(&shape, config.case, level, &sigma, &target, config.optimizer.gradient, None)?;
            let indices: Vec<usize> = gc.coeffs.clone().unwrap_or_else(|| (0..shape.len()).collect());
            let sign = if options.flip_gradient_sign { -1.0 } else { 1.0 };
            let analytic: Vec<f64> = indices.iter().map(|&k| sign * eval.gradient.objective[k]).collect();
            let fd = finite_difference_partials(&shape, config.case, level, &sigma, &target, gc.fd_step, &indices)?
                .objective;
            let relative_error = gradient_mismatch(&analytic, &fd);
            let passed = relative_error <= gc.tolerance;

            let mut table = String::from("index,analytic,finite_difference,abs_error\n");
            for ((k, a), f) in indices.iter().zip(&analytic).zip(&fd) {
                table.push_str(&format!("{k},{a:.16e},{f:.16e},{:.16e}\n", (a - f).abs()));
            }
            out.write("grad_check.csv", &table)?;

            let mut results = base_results(&eval.state, Some(eval.objective));
            results.gradient_norm = Some(eval.gradient.norm());
            results.report = Some(CommandReport::GradCheck(GradCheckReport {
                fd_step: gc.fd_step,
                tolerance: gc.tolerance,
                relative_error,
                passed,
                coefficients: indices,
                analytic,
                finite_difference: fd,
            }));
            results.timings = timings(start);
            out.results(&results)?;
            Ok(RunOutcome {
                exit_code: if passed { 0 } else { EXIT_GRAD_CHECK_FAILED },
                summary: format!(
                    "relative l2 error {relative_error:.3e} (tolerance {:.1e}): {}",
                    gc.tolerance,
                    if passed { "pass" } else { "FAIL" }
                ),
                files: out.files,
            })
        }
        Command::Optimize => {
            let shape = config.initial_shape()?;
            let problem = MatchingProblem {
                case: config.case,
                sigma: config.sigma()?,
                target: config.target()?,
            };
            let record = minimize(&shape, &problem, &config.optimize_config())?;
            let last = record.last();
            let final_shape = record.final_shape();
            let (tensor, bounds) = summarize(&record.tensor);
            let results = Results {
                command: command.name().to_string(),
                config_echo: config.clone(),
                tensor,
                bounds,
                objective: Some(last.objective),
                gradient_norm: Some(last.gradient_norm),
                solver_stats: SolverSummary {
                    iterations: last.solver_iterations,
                    residual: last.solver_residual,
                },
                termination: Some(record.termination),
                report: Some(CommandReport::Optimize(OptimizeReport {
                    iterations: record.accepted_steps(),
                    evaluations: record.evaluations,
                    final_coeffs: last.coeffs.clone(),
                })),
                timings: timings(start),
            };
            out.results(&results)?;
            out.write("history.csv", &record.history_csv())?;
            out.shape(config, &final_shape, None)?;
            Ok(RunOutcome {
                exit_code: if record.termination.converged() { 0 } else { EXIT_NOT_CONVERGED },
                summary: format!(
                    "{} after {} iterations: J = {:.3e}, |g| = {:.3e}",
                    record.termination,
                    record.accepted_steps(),
                    last.objective,
                    last.gradient_norm
                ),
                files: out.files,
            })
        }
        Command::Uq => {
            if config.case != Case::Perforated {
                return Err(Error::Unsupported("uq is implemented for perforated cells only".into()));
            }
            let shape = config.initial_shape()?;
            let sigma = config.sigma()?;
            let report = taylor_study(&shape, &sigma, config.mesh.level, &config.uq_direction(), &config.uq.eps)?;
            let state = report.1;
            let report = report.0;
            let mut table = String::from(
                "eps,a11,a12,a22,first_a11,first_a12,first_a22,second_a11,second_a12,second_a22,first_remainder,second_remainder\n",
            );
            for r in &report.rows {
                let cells: Vec<String> = std::iter::once(r.eps)
                    .chain(r.resolved)
                    .chain(r.first_order)
                    .chain(r.second_order)
                    .chain([r.first_remainder, r.second_remainder])
                    .map(|v| format!("{v:.16e}"))
                    .collect();
                table.push_str(&cells.join(","));
                table.push('\n');
            }
            out.write("uq.csv", &table)?;
            let summary = format!(
                "remainder ratios per step: first order {:?}, second order {:?}",
                report.first_ratios, report.second_ratios
            );
            let objective = config.target.map(|t| matching_objective(&state.tensor, &t).0);
            let mut results = base_results(&state, objective);
            results.report = Some(CommandReport::Uq(report));
            results.timings = timings(start);
            out.results(&results)?;
            Ok(RunOutcome {
                exit_code: 0,
                summary,
                files: out.files,
            })
        }
        Command::MeshExport => {
            let shape = config.initial_shape()?;
            let mesh = CellMesh::build(&shape, config.case, config.mesh.level)?;
            out.write("mesh.txt", &mesh.export_text())?;
            let cfg = ExperimentConfig {
                output: OutputSection {
                    emit_mesh: false,
                    ..config.output.clone()
                },
                ..config.clone()
            };
            out.shape(&cfg, &shape, None)?;
            Ok(RunOutcome {
                exit_code: 0,
                summary: format!(
                    "{} vertices, {} triangles, {} periodic dofs",
                    mesh.vertices.len(),
                    mesh.triangles.len(),
                    mesh.dof_count
                ),
                files: out.files,
            })
        }
    }
}

/// Relative l2 mismatch; when the reference vanishes (constant conductivity)
/// the absolute mismatch is used so two zero gradients agree.
pub fn gradient_mismatch(analytic: &[f64], reference: &[f64]) -> f64 {
    const FLOOR: f64 = 1e-8;
    let norm: f64 = reference.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm < FLOOR {
        let diff: f64 = analytic.iter().zip(reference).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        diff / FLOOR
    } else {
        relative_l2_error(analytic, reference)
    }
}

/// Re-solves the perforated cell at `shape + eps * direction` and compares
/// with the first and second order Taylor predictions.
pub fn taylor_study(
    shape: &RadialShape,
    sigma: &SigmaPair,
    level: u32,
    direction: &[f64],
    eps: &[f64],
) -> Result<(UqReport, CellState)> {
    let state = CellState::solve(shape, Case::Perforated, level, sigma, None)?;
    let derivs = discrete_tensor_derivatives(&state, sigma, direction, true)?;
    let second = derivs.second.expect("requested second derivative");
    let base = state.tensor.matrix();

    let traces = recover_interface_traces(&state.mesh, &state.solutions, sigma)?;
    let velocity = traces.normal_velocity(shape, direction);
    let local = [
        solve_local_derivative(&state.mesh, &state.problem, &traces, &velocity, 0)?,
        solve_local_derivative(&state.mesh, &state.problem, &traces, &velocity, 1)?,
    ];
    let interface_second = [
        hessian_entry(&state, &traces, direction, &local, 0, 0)?,
        hessian_entry(&state, &traces, direction, &local, 0, 1)?,
        hessian_entry(&state, &traces, direction, &local, 1, 1)?,
    ];

    let mut rows = Vec::with_capacity(eps.len());
    for &e in eps {
        let resolved = if e == 0.0 {
            base
        } else {
            let moved = shape.stepped(direction, e)?;
            moved.ensure_valid()?;
            CellState::solve(&moved, Case::Perforated, level, sigma, Some(&state.solutions))?
                .tensor
                .matrix()
        };
        let p1 = taylor_predict(&base, &derivs.first, None, e);
        let p2 = taylor_predict(&base, &derivs.first, Some(&second), e);
        rows.push(UqRow {
            eps: e,
            resolved: entries(&resolved),
            first_order: entries(&p1),
            second_order: entries(&p2),
            first_remainder: (resolved - p1).norm(),
            second_remainder: (resolved - p2).norm(),
        });
    }

    let positive: Vec<&UqRow> = rows.iter().filter(|r| r.eps > 0.0).collect();
    let ratios = |f: fn(&UqRow) -> f64| -> (Vec<f64>, Vec<f64>) {
        positive
            .windows(2)
            .map(|w| {
                let ratio = f(w[0]) / f(w[1]);
                (ratio, ratio.ln() / (w[0].eps / w[1].eps).ln())
            })
            .unzip()
    };
    let (first_ratios, first_orders) = ratios(|r| r.first_remainder);
    let (second_ratios, second_orders) = ratios(|r| r.second_remainder);

    Ok((
        UqReport {
            direction: direction.to_vec(),
            first: entries(&derivs.first),
            second: entries(&second),
            interface_second,
            rows,
            first_ratios,
            second_ratios,
            first_orders,
            second_orders,
        },
        state,
    ))
}
