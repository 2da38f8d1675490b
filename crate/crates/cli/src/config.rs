use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use branchctl::continuation::Diagnostic;
use branchctl::mesh::{gen_rounded_square, gen_unit_disk, read_mesh};
use branchctl::shape::InnerProductSpec;
use branchctl::TriMesh;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Problem {
    AllenCahn,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MeshSpec {
    Generated(Generated),
    File(MeshPath),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeshPath {
    pub path: PathBuf,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "snake_case", deny_unknown_fields)]
pub enum Generated {
    Disk { h: f64 },
    RoundedSquare { edge: f64, radius: f64, h: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum DiagnosticSpec {
    H1Norm,
    Point([f64; 2]),
}

impl DiagnosticSpec {
    pub fn to_diagnostic(&self) -> Diagnostic {
        match self {
            DiagnosticSpec::H1Norm => Diagnostic::H1Norm,
            DiagnosticSpec::Point(p) => Diagnostic::PointValue(*p),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DiagramConfig {
    pub lambda_start: f64,
    pub lambda_end: f64,
    pub dlambda: f64,
    pub max_branches: usize,
    pub diagnostic: DiagnosticSpec,
    /// Join branch pieces through their folds by arclength continuation.
    pub arclength: bool,
}

impl Default for DiagramConfig {
    fn default() -> Self {
        DiagramConfig {
            lambda_start: 0.0,
            lambda_end: 3.0,
            dlambda: 0.1,
            max_branches: 8,
            diagnostic: DiagnosticSpec::H1Norm,
            arclength: true,
        }
    }
}

/// Which solution at the seed parameter the branch-point search starts from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum BranchSelector {
    Trivial,
    /// Newton from `amplitude` times the peak-normalized `index`-th eigenfunction
    /// of the trivial-branch linearization.
    Mode { index: usize, amplitude: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SeedConfig {
    pub lambda: f64,
    pub n: usize,
    pub branch: BranchSelector,
}

impl Default for SeedConfig {
    fn default() -> Self {
        SeedConfig {
            lambda: 1.3,
            n: 5,
            branch: BranchSelector::Trivial,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizerConfig {
    pub max_iter: usize,
    pub initial_step: f64,
    pub step_floor: f64,
    pub lbfgs_memory: Option<usize>,
    pub taylor_check: bool,
    pub tangle_tol: f64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig {
            max_iter: 200,
            initial_step: 1.0,
            step_floor: 1e-8,
            lbfgs_memory: None,
            taylor_check: true,
            tangle_tol: 1e-3,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    pub newton_tol: f64,
    pub newton_max_iter: usize,
    pub ms_tol: f64,
    pub ms_max_iter: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            newton_tol: 1e-10,
            newton_max_iter: 50,
            ms_tol: 1e-9,
            ms_max_iter: 30,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default = "default_problem")]
    pub problem: Problem,
    pub mesh: MeshSpec,
    /// Boundary tags whose vertices stay put during shape optimization.
    #[serde(default)]
    pub fixed_tags: Vec<String>,
    #[serde(default)]
    pub diagram: DiagramConfig,
    #[serde(default)]
    pub seed: SeedConfig,
    pub target: Option<f64>,
    #[serde(default = "default_eps")]
    pub eps: f64,
    #[serde(default = "default_c")]
    pub c: f64,
    #[serde(default)]
    pub inner_product: InnerProductSpec,
    #[serde(default)]
    pub optimizer: OptimizerConfig,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default = "default_output")]
    pub output: PathBuf,
}

fn default_problem() -> Problem {
    Problem::AllenCahn
}

fn default_eps() -> f64 {
    1e-10
}

fn default_c() -> f64 {
    0.1
}

fn default_output() -> PathBuf {
    PathBuf::from("run")
}

fn positive(name: &str, v: f64) -> Result<(), String> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(format!("{name} must be positive and finite, got {v}"))
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, String> {
        let text = std::fs::read_to_string(path).map_err(|e| format!("cannot read {}: {e}", path.display()))?;
        let cfg: RunConfig = serde_json::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))?;
        Ok(cfg.relative_to(path.parent().unwrap_or(Path::new("."))))
    }

    /// Resolves relative mesh and output paths against the directory of the
    /// config file.
    fn relative_to(mut self, dir: &Path) -> Self {
        if let MeshSpec::File(MeshPath { path }) = &mut self.mesh {
            if path.is_relative() {
                *path = dir.join(&*path);
            }
        }
        if self.output.is_relative() {
            self.output = dir.join(&self.output);
        }
        self
    }

    /// Checks every field that does not need a solve.
    pub fn validate(&self) -> Result<(), String> {
        match &self.mesh {
            MeshSpec::Generated(Generated::Disk { h }) => positive("mesh.h", *h)?,
            MeshSpec::Generated(Generated::RoundedSquare { edge, radius, h }) => {
                positive("mesh.edge", *edge)?;
                positive("mesh.h", *h)?;
                if !(*radius > 0.0 && *radius < 0.5 * edge) {
                    return Err(format!("mesh.radius must lie in (0, edge / 2), got {radius}"));
                }
            }
            MeshSpec::File(MeshPath { path }) => {
                if !path.is_file() {
                    return Err(format!("mesh file {} does not exist", path.display()));
                }
            }
        }
        let d = &self.diagram;
        if !(d.lambda_start.is_finite() && d.lambda_end.is_finite() && d.lambda_end >= d.lambda_start) {
            return Err(format!(
                "diagram range [{}, {}] is empty or not finite",
                d.lambda_start, d.lambda_end
            ));
        }
        positive("diagram.dlambda", d.dlambda)?;
        if d.max_branches == 0 {
            return Err("diagram.max_branches must be at least 1".into());
        }
        if !self.seed.lambda.is_finite() {
            return Err("seed.lambda must be finite".into());
        }
        if self.seed.n == 0 {
            return Err("seed.n must be at least 1".into());
        }
        if let BranchSelector::Mode { amplitude, .. } = self.seed.branch {
            if !(amplitude.is_finite() && amplitude != 0.0) {
                return Err("seed.branch.amplitude must be finite and nonzero".into());
            }
        }
        if let Some(t) = self.target {
            if !t.is_finite() {
                return Err("target must be finite".into());
            }
        }
        if !(self.eps >= 0.0) {
            return Err(format!("eps must be non-negative, got {}", self.eps));
        }
        positive("c", self.c)?;
        self.inner_product.validate().map_err(|e| e.to_string())?;
        let o = &self.optimizer;
        positive("optimizer.step_floor", o.step_floor)?;
        if !(o.initial_step >= o.step_floor && o.initial_step <= 1.0) {
            return Err("optimizer.initial_step must lie in [step_floor, 1]".into());
        }
        if o.lbfgs_memory == Some(0) {
            return Err("optimizer.lbfgs_memory must be at least 1".into());
        }
        if !(o.tangle_tol >= 0.0 && o.tangle_tol < 1.0) {
            return Err("optimizer.tangle_tol must lie in [0, 1)".into());
        }
        let s = &self.solver;
        positive("solver.newton_tol", s.newton_tol)?;
        positive("solver.ms_tol", s.ms_tol)?;
        if s.newton_max_iter == 0 || s.ms_max_iter == 0 {
            return Err("solver iteration caps must be at least 1".into());
        }
        Ok(())
    }

    pub fn require_target(&self) -> Result<f64, String> {
        self.target.ok_or_else(|| "target is required for this subcommand".to_string())
    }

    /// Builds or reads the mesh and applies `fixed_tags`.
    pub fn build_mesh(&self) -> Result<TriMesh, String> {
        let mesh = match &self.mesh {
            MeshSpec::Generated(Generated::Disk { h }) => gen_unit_disk(*h),
            MeshSpec::Generated(Generated::RoundedSquare { edge, radius, h }) => gen_rounded_square(*edge, *radius, *h),
            MeshSpec::File(MeshPath { path }) => read_mesh(path),
        }
        .map_err(|e| e.to_string())?;
        if self.fixed_tags.is_empty() {
            return Ok(mesh);
        }
        let mut fixed = mesh.fixed_vertices().to_vec();
        for tag in &self.fixed_tags {
            let edges: Vec<_> = mesh.boundary_edges().iter().filter(|e| &e.tag == tag).collect();
            if edges.is_empty() {
                return Err(format!("fixed tag {tag:?} matches no boundary edge"));
            }
            for e in edges {
                fixed[e.vertices[0]] = true;
                fixed[e.vertices[1]] = true;
            }
        }
        mesh.with_fixed(fixed).map_err(|e| e.to_string())
    }
}
