//! Scenarios and the discrete-in-time growth process.

use std::io::{BufRead, Write};
use std::path::PathBuf;
use std::time::Instant;

use crate::constraints::{max_psd_violation, BalanceMode, BalanceRelation, GrowthField, MassBalance};
use crate::error::{Error, Result};
use crate::fem::{assemble, AssembledSystem, BoundaryLoad, Component, DofReduction, ElasticLaw, ShearWeight};
use crate::mesh::{generate_rect_mesh, read_mesh, write_mesh, TriMesh};
use crate::objectives::Objective;
use crate::postprocess::shape_metrics;
use crate::solver::{solve_step, GradientLinearization, SolverConfig, SolverPath, StepResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BcKind {
    /// Clamped on the `x = min` edge.
    Cantilever,
    /// Clamped on both `x = min` and `x = max` edges.
    DoublyClamped,
    /// Node nearest the lower-left corner pinned in both components, node
    /// nearest the lower-right corner pinned vertically.
    FreeIsostatic,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub name: String,
    pub length: f64,
    pub height: f64,
    pub target_h: f64,
    pub mesh_path: Option<PathBuf>,
    pub young: f64,
    pub poisson: f64,
    pub bc: BcKind,
    /// Magnitude `p` of the downward traction `(0, −p)` on the top edge.
    pub load: f64,
    pub objective: Objective,
    pub balance_mode: BalanceMode,
    pub balance_relation: BalanceRelation,
    pub gamma: f64,
    pub inv2tau: f64,
    pub n_iter: usize,
    pub solver_path: SolverPath,
    pub gradient_linearization: GradientLinearization,
    pub shear_weight: ShearWeight,
    pub snapshot_every: usize,
    pub out_dir: PathBuf,
    pub center: Option<[f64; 2]>,
}

impl Scenario {
    fn beam(name: &str, bc: BcKind, load: f64) -> Self {
        Self {
            name: name.into(),
            length: 1.0,
            height: 0.1,
            target_h: 0.03,
            mesh_path: None,
            young: 1.0,
            poisson: 0.0,
            bc,
            load,
            objective: Objective::ExternalWork,
            balance_mode: BalanceMode::Global,
            balance_relation: BalanceRelation::Equality,
            gamma: 0.05,
            inv2tau: 10.0,
            n_iter: 30,
            solver_path: SolverPath::Analytic,
            gradient_linearization: GradientLinearization::Previous,
            shear_weight: ShearWeight::Engineering,
            snapshot_every: 5,
            out_dir: PathBuf::from("./out"),
            center: None,
        }
    }

    pub fn doubly_clamped() -> Self {
        Self::beam("doubly_clamped", BcKind::DoublyClamped, 5e-3)
    }

    pub fn cantilever() -> Self {
        Self::beam("cantilever", BcKind::Cantilever, 5e-4)
    }

    pub fn perimeter() -> Self {
        Self {
            name: "perimeter".into(),
            height: 0.5,
            target_h: 0.04,
            bc: BcKind::FreeIsostatic,
            load: 0.0,
            objective: Objective::Perimeter,
            balance_mode: BalanceMode::Local,
            gamma: 0.024,
            inv2tau: 100.0,
            n_iter: 500,
            ..Self::beam("perimeter", BcKind::FreeIsostatic, 0.0)
        }
    }

    pub fn preset(name: &str) -> Option<Self> {
        match name {
            "doubly_clamped" => Some(Self::doubly_clamped()),
            "cantilever" => Some(Self::cantilever()),
            "perimeter" => Some(Self::perimeter()),
            _ => None,
        }
    }

    pub fn solver_config(&self) -> Result<SolverConfig> {
        let mut c = SolverConfig::new(self.solver_path, self.inv2tau)?;
        c.gradient_linearization = self.gradient_linearization;
        Ok(c)
    }

    pub fn mass_balance(&self) -> Result<MassBalance> {
        MassBalance::new(self.balance_mode, self.balance_relation, self.gamma)
    }

    /// Reference mesh, generated or read from `mesh_path`, without tags.
    pub fn base_mesh(&self) -> Result<TriMesh> {
        match &self.mesh_path {
            Some(p) => {
                let f = std::fs::File::open(p).map_err(|e| Error::io(p, e))?;
                read_mesh(std::io::BufReader::new(f), &p.display().to_string())
            }
            None => generate_rect_mesh(self.length, self.height, self.target_h),
        }
    }

    /// Builds the tagged mesh and the assembled system.
    pub fn assemble(&self) -> Result<AssembledSystem> {
        assemble_on(self, self.base_mesh()?)
    }
}

/// Assembles a scenario on a given untagged mesh.
pub fn assemble_on(scenario: &Scenario, mesh: TriMesh) -> Result<AssembledSystem> {
    let (lo, hi) = mesh.bounding_box();
    let tol = 1e-9 * (hi[0] - lo[0]).max(hi[1] - lo[1]);
    let on_x = |x: f64, v: f64| (x - v).abs() <= tol;
    let boundary = mesh.boundary_loop().to_vec();
    let (clamped, pins): (Vec<usize>, Vec<(usize, Component)>) = match scenario.bc {
        BcKind::Cantilever => (
            boundary.iter().copied().filter(|&n| on_x(mesh.nodes()[n][0], lo[0])).collect(),
            vec![],
        ),
        BcKind::DoublyClamped => (
            boundary
                .iter()
                .copied()
                .filter(|&n| on_x(mesh.nodes()[n][0], lo[0]) || on_x(mesh.nodes()[n][0], hi[0]))
                .collect(),
            vec![],
        ),
        BcKind::FreeIsostatic => {
            let a = mesh.nearest_node([lo[0], lo[1]]);
            let b = mesh.nearest_node([hi[0], lo[1]]);
            (vec![], vec![(a, Component::X), (a, Component::Y), (b, Component::Y)])
        }
    };
    let top = hi[1];
    let mesh = mesh.with_tags(clamped.clone(), |a, b| on_x(a[1], top) && on_x(b[1], top))?;
    let reduction = DofReduction::new(mesh.n_nodes(), &clamped, &pins)?;
    let law = ElasticLaw::new(scenario.young, scenario.poisson)?;
    let load = BoundaryLoad {
        traction: [0.0, -scenario.load],
    };
    assemble(mesh, law, load, reduction, scenario.shear_weight)
}

/// One row of the per-iteration history.
#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub iter: usize,
    /// Step objective `Ψ + penalty`; `Ψ` alone for the initial state.
    pub objective: f64,
    pub psi: f64,
    /// `a · γ`.
    pub mass: f64,
    pub multiplier_norm: f64,
    pub kkt_residual: f64,
    pub max_psd_violation: f64,
    pub perimeter: f64,
    pub area: f64,
    pub roundness: f64,
    pub wall_ms: f64,
    pub converged: bool,
    pub inner_iterations: usize,
}

/// Full fields at one iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub iter: usize,
    pub gamma: Vec<f64>,
    pub displacement: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct History {
    pub records: Vec<StepRecord>,
    /// Every `snapshot_every`-th iteration plus the initial and final states.
    pub snapshots: Vec<Snapshot>,
    pub element_areas: Vec<f64>,
    pub final_gamma: Vec<f64>,
    pub final_displacement: Vec<f64>,
}

impl History {
    pub fn final_objective(&self) -> f64 {
        self.records.last().map_or(f64::NAN, |r| r.objective)
    }

    pub fn all_converged(&self) -> bool {
        self.records.iter().all(|r| r.converged)
    }
}

/// A step that failed, with everything recorded before it.
#[derive(Debug)]
pub struct RunFailure {
    pub history: History,
    pub error: Error,
}

impl std::fmt::Display for RunFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "step {} failed: {}",
            self.history.records.len(),
            self.error
        )
    }
}

impl std::error::Error for RunFailure {}

/// Stateful time stepper. Exposes single steps for callers that need the
/// intermediate states.
pub struct Simulation {
    sys: AssembledSystem,
    objective: Objective,
    balance: MassBalance,
    config: SolverConfig,
    gamma: Vec<f64>,
    displacement: Vec<f64>,
    iter: usize,
    last_delta: Option<Vec<f64>>,
}

impl Simulation {
    pub fn new(scenario: &Scenario) -> Result<Self> {
        let sys = scenario.assemble()?;
        Self::with_system(scenario, sys)
    }

    pub fn with_system(scenario: &Scenario, sys: AssembledSystem) -> Result<Self> {
        let gamma = vec![0.0; sys.n_growth()];
        let displacement = sys.solve_equilibrium(&gamma);
        Ok(Self {
            objective: scenario.objective,
            balance: scenario.mass_balance()?,
            config: scenario.solver_config()?,
            sys,
            gamma,
            displacement,
            iter: 0,
            last_delta: None,
        })
    }

    /// Replaces the initial state (restart).
    pub fn set_state(&mut self, iter: usize, gamma: GrowthField) -> Result<()> {
        if gamma.as_slice().len() != self.sys.n_growth() {
            return Err(Error::InvalidInput("restart growth does not match the mesh".into()));
        }
        self.gamma = gamma.into_vec();
        self.displacement = self.sys.solve_equilibrium(&self.gamma);
        self.iter = iter;
        self.last_delta = None;
        Ok(())
    }

    pub fn system(&self) -> &AssembledSystem {
        &self.sys
    }

    pub fn into_system(self) -> AssembledSystem {
        self.sys
    }

    pub fn config(&self) -> &SolverConfig {
        &self.config
    }

    pub fn config_mut(&mut self) -> &mut SolverConfig {
        &mut self.config
    }

    pub fn balance(&self) -> &MassBalance {
        &self.balance
    }

    pub fn objective(&self) -> Objective {
        self.objective
    }

    pub fn gamma(&self) -> &[f64] {
        &self.gamma
    }

    pub fn displacement(&self) -> &[f64] {
        &self.displacement
    }

    pub fn iteration(&self) -> usize {
        self.iter
    }

    pub fn step(&mut self) -> Result<StepResult> {
        let r = solve_step(
            &self.sys,
            &self.gamma,
            &self.displacement,
            self.objective,
            &self.balance,
            &self.config,
            self.last_delta.as_deref(),
        )?;
        self.gamma = r.gamma.as_slice().to_vec();
        self.displacement = r.displacement.clone();
        self.last_delta = Some(r.delta.clone());
        self.iter += 1;
        Ok(r)
    }

    fn initial_record(&self) -> StepRecord {
        let psi = self.objective.value_at(&self.sys, &self.displacement);
        let shape = shape_metrics(&self.displacement, self.sys.mesh());
        StepRecord {
            iter: self.iter,
            objective: psi,
            psi,
            mass: self.sys.total_trace(&self.gamma),
            multiplier_norm: 0.0,
            kkt_residual: 0.0,
            max_psd_violation: 0.0,
            perimeter: shape.perimeter,
            area: shape.area,
            roundness: shape.roundness,
            wall_ms: 0.0,
            converged: true,
            inner_iterations: 0,
        }
    }

    fn snapshot(&self) -> Snapshot {
        Snapshot {
            iter: self.iter,
            gamma: self.gamma.clone(),
            displacement: self.displacement.clone(),
        }
    }

    /// Runs `n_iter` steps, calling `on_step` after each accepted one.
    pub fn run_with(
        &mut self,
        n_iter: usize,
        snapshot_every: usize,
        mut on_step: impl FnMut(&StepRecord, &StepResult),
    ) -> Result<History, RunFailure> {
        let mut history = History {
            records: vec![self.initial_record()],
            snapshots: vec![self.snapshot()],
            element_areas: self.sys.element_areas(),
            final_gamma: self.gamma.clone(),
            final_displacement: self.displacement.clone(),
        };
        for _ in 0..n_iter {
            let t0 = Instant::now();
            let step = match self.step() {
                Ok(s) => s,
                Err(error) => return Err(RunFailure { history, error }),
            };
            let wall_ms = t0.elapsed().as_secs_f64() * 1e3;
            let shape = shape_metrics(&step.displacement, self.sys.mesh());
            let rec = StepRecord {
                iter: self.iter,
                objective: step.objective_value,
                psi: step.psi_value,
                mass: self.sys.total_trace(&self.gamma),
                multiplier_norm: step.multiplier.norm(),
                kkt_residual: step.kkt_residual,
                max_psd_violation: max_psd_violation(&step.delta),
                perimeter: shape.perimeter,
                area: shape.area,
                roundness: shape.roundness,
                wall_ms,
                converged: step.converged,
                inner_iterations: step.inner_iterations,
            };
            on_step(&rec, &step);
            history.records.push(rec);
            if snapshot_every > 0 && self.iter % snapshot_every == 0 {
                history.snapshots.push(self.snapshot());
            }
            history.final_gamma = self.gamma.clone();
            history.final_displacement = self.displacement.clone();
        }
        if history.snapshots.last().map(|s| s.iter) != Some(self.iter) {
            history.snapshots.push(self.snapshot());
        }
        Ok(history)
    }
}

/// Runs a scenario from zero initial growth.
pub fn run(scenario: &Scenario) -> Result<History, RunFailure> {
    let mut sim = Simulation::new(scenario).map_err(|error| RunFailure {
        history: History {
            records: vec![],
            snapshots: vec![],
            element_areas: vec![],
            final_gamma: vec![],
            final_displacement: vec![],
        },
        error,
    })?;
    sim.run_with(scenario.n_iter, scenario.snapshot_every, |_, _| {})
}

/// The minimal data two runs need for comparison.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub objectives: Vec<f64>,
    pub final_gamma: Vec<f64>,
    pub element_areas: Vec<f64>,
}

impl From<&History> for RunSummary {
    fn from(h: &History) -> Self {
        Self {
            objectives: h.records.iter().map(|r| r.objective).collect(),
            final_gamma: h.final_gamma.clone(),
            element_areas: h.element_areas.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompareReport {
    pub objective_differences: Vec<f64>,
    pub final_objectives: (f64, f64),
    /// `|a − b| / max(|a|, |b|)` of the final objectives.
    pub relative_objective_difference: f64,
    /// `sqrt(Σ_e |T_e| |ΔE_g|²_F)` of the final growth fields.
    pub l2_distance: f64,
}

/// `L²(Ω)` distance between two growth fields, as tensors.
pub fn growth_l2_distance(a: &[f64], b: &[f64], areas: &[f64]) -> f64 {
    areas
        .iter()
        .enumerate()
        .map(|(e, &w)| {
            let d = [a[3 * e] - b[3 * e], a[3 * e + 1] - b[3 * e + 1], a[3 * e + 2] - b[3 * e + 2]];
            w * (d[0] * d[0] + d[1] * d[1] + 0.5 * d[2] * d[2])
        })
        .sum::<f64>()
        .sqrt()
}

pub fn compare_runs(a: &RunSummary, b: &RunSummary) -> Result<CompareReport> {
    if a.element_areas.len() != b.element_areas.len()
        || a.final_gamma.len() != b.final_gamma.len()
        || a.element_areas
            .iter()
            .zip(&b.element_areas)
            .any(|(x, y)| (x - y).abs() > 1e-12 * x.abs().max(y.abs()))
    {
        return Err(Error::IncompatibleRuns("the runs use different meshes".into()));
    }
    if a.objectives.is_empty() || b.objectives.is_empty() {
        return Err(Error::IncompatibleRuns("a run has no records".into()));
    }
    let objective_differences = a.objectives.iter().zip(&b.objectives).map(|(x, y)| x - y).collect();
    let fa = *a.objectives.last().unwrap();
    let fb = *b.objectives.last().unwrap();
    let denom = fa.abs().max(fb.abs());
    Ok(CompareReport {
        objective_differences,
        final_objectives: (fa, fb),
        relative_objective_difference: if denom == 0.0 { 0.0 } else { (fa - fb).abs() / denom },
        l2_distance: growth_l2_distance(&a.final_gamma, &b.final_gamma, &a.element_areas),
    })
}

const CHECKPOINT_HEADER: &str = "growthopt-checkpoint 1";

/// Checkpoint: versioned header, iteration, embedded mesh, raw growth vector.
pub fn write_checkpoint<W: Write>(mut out: W, iter: usize, mesh: &TriMesh, gamma: &[f64]) -> std::io::Result<()> {
    writeln!(out, "{CHECKPOINT_HEADER}")?;
    writeln!(out, "iteration {iter}")?;
    writeln!(out, "mesh")?;
    write_mesh(mesh, &mut out)?;
    writeln!(out, "gamma {}", gamma.len())?;
    for g in gamma {
        writeln!(out, "{g:?}")?;
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub iteration: usize,
    pub mesh: TriMesh,
    pub gamma: GrowthField,
}

pub fn read_checkpoint<R: BufRead>(input: R, source: &str) -> Result<Checkpoint> {
    let lines: Vec<String> = input
        .lines()
        .collect::<std::io::Result<_>>()
        .map_err(|e| Error::io(source, e))?;
    let perr = |line: usize, message: &str| Error::Parse {
        file: source.into(),
        line,
        message: message.into(),
    };
    if lines.first().map(|s| s.trim()) != Some(CHECKPOINT_HEADER) {
        return Err(perr(1, "missing checkpoint header"));
    }
    let iteration = lines
        .get(1)
        .and_then(|l| l.trim().strip_prefix("iteration "))
        .and_then(|v| v.trim().parse().ok())
        .ok_or_else(|| perr(2, "expected `iteration <n>`"))?;
    if lines.get(2).map(|s| s.trim()) != Some("mesh") {
        return Err(perr(3, "expected `mesh`"));
    }
    let gpos = lines
        .iter()
        .position(|l| l.starts_with("gamma "))
        .ok_or_else(|| perr(lines.len(), "missing `gamma` section"))?;
    let mesh_text = lines[3..gpos].join("\n");
    let mesh = read_mesh(std::io::Cursor::new(mesh_text), source)?;
    let n: usize = lines[gpos][6..]
        .trim()
        .parse()
        .map_err(|_| perr(gpos + 1, "bad gamma length"))?;
    let mut gamma = Vec::with_capacity(n);
    for k in 0..n {
        let ln = gpos + 1 + k;
        let v: f64 = lines
            .get(ln)
            .and_then(|l| l.trim().parse().ok())
            .ok_or_else(|| perr(ln + 1, "expected a growth value"))?;
        gamma.push(v);
    }
    if gamma.len() != 3 * mesh.n_elements() {
        return Err(perr(gpos + 1, "gamma length does not match the mesh"));
    }
    Ok(Checkpoint {
        iteration,
        mesh,
        gamma: GrowthField::from_vec(gamma)?,
    })
}
