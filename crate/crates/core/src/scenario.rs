//! Scenario files: a TOML description of one run, its validation against
//! the standing assumptions (A1)–(A5), and assembly into a [`Problem`].
//!
//! Sections: `domain`, `time`, `physics`, `threshold`, `shift`, `data`,
//! `initial`, `solver`, `output`, and the optional `approx`. Scalar data are
//! expressions in `t, x1, x2, x3` (see [`crate::expr`]); tensors list the
//! components in the order 11, 22, 33, 12, 13, 23.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::approx::MollificationPlan;
use crate::constraint::{sample_times, ConstraintSet, ShiftField, ShiftRegularity, ThresholdField, ThresholdRegularity};
use crate::coupled::{Problem, SolverConfig};
use crate::error::{Error, Result};
use crate::expr::Expr;
use crate::fields::{read_snapshot_csv, FaceSet, Grid, TensorField, VectorField};
use crate::source::{ExprScalar, ExprTensor, ExprVector, TableScalar, TensorSource, VectorSource};
use crate::tensor::SymTensor3;
use crate::Regime;

/// Times at which data are sampled during validation.
const VALIDATION_SAMPLES: usize = 32;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainSpec {
    pub extents: [usize; 3],
    /// Node spacing per axis; defaults to `1/n`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spacing: Option<[f64; 3]>,
    /// Faces carrying the zero-velocity condition.
    #[serde(default)]
    pub dirichlet: FaceSet,
    /// A grid without boundary masks (spatially homogeneous runs).
    #[serde(default)]
    pub homogeneous: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeSpec {
    pub horizon: f64,
    pub dt: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhysicsSpec {
    pub regime: Regime,
    /// Ignored in the sweeping regime.
    #[serde(default = "one")]
    pub kappa: f64,
    pub nu: f64,
    /// Parameter of the Moreau–Yosida resolvent checked by `condition-h`.
    #[serde(default = "default_lambda")]
    pub lambda: f64,
}

fn one() -> f64 {
    1.0
}

fn default_lambda() -> f64 {
    0.1
}

/// `g(t,x)` from an expression or a CSV table of `t, value[, value…]` rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ThresholdSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expr: Option<Expr>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub table: Option<PathBuf>,
    pub c1: f64,
    pub c2: f64,
    pub regularity: ThresholdRegularity,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ShiftSpec {
    pub components: [Expr; 6],
    pub regularity: ShiftRegularity,
}

impl Default for ShiftSpec {
    fn default() -> Self {
        ShiftSpec { components: zeros(), regularity: ShiftRegularity::H1V }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataSpec {
    pub force: [Expr; 3],
    pub strain_rate: [Expr; 6],
}

impl Default for DataSpec {
    fn default() -> Self {
        DataSpec { force: zeros(), strain_rate: zeros() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InitialSpec {
    pub velocity: [Expr; 3],
    pub stress: [Expr; 6],
    /// Snapshot CSV holding both fields; replaces the expressions.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub file: Option<PathBuf>,
    /// Project an infeasible `σ₀` onto `K(0)` instead of rejecting it.
    pub project: bool,
}

impl Default for InitialSpec {
    fn default() -> Self {
        InitialSpec { velocity: zeros(), stress: zeros(), file: None, project: false }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum SnapshotFormat {
    #[default]
    None,
    Vtk,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSpec {
    pub dir: PathBuf,
    /// Write a snapshot every `cadence` steps.
    pub cadence: usize,
    pub snapshots: SnapshotFormat,
}

impl Default for OutputSpec {
    fn default() -> Self {
        OutputSpec { dir: PathBuf::from("out"), cadence: 1, snapshots: SnapshotFormat::None }
    }
}

/// Smoothing plan for a continuous threshold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ApproxSpec {
    pub indices: Vec<usize>,
    pub w0: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    #[serde(default)]
    pub seed: u64,
    pub domain: DomainSpec,
    pub time: TimeSpec,
    pub physics: PhysicsSpec,
    pub threshold: ThresholdSpec,
    #[serde(default)]
    pub shift: ShiftSpec,
    #[serde(default)]
    pub data: DataSpec,
    #[serde(default)]
    pub initial: InitialSpec,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub output: OutputSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub approx: Option<ApproxSpec>,
}

fn zeros<const N: usize>() -> [Expr; N] {
    std::array::from_fn(|_| Expr::constant(0.0))
}

/// One failed assumption with its location.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Violation {
    pub assumption: &'static str,
    pub detail: String,
}

impl Violation {
    fn new(assumption: &'static str, detail: impl Into<String>) -> Self {
        Violation { assumption, detail: detail.into() }
    }
}

/// Reads and validates a scenario file.
pub fn parse_scenario(path: &Path) -> Result<Scenario> {
    let sc = load_scenario(path)?;
    sc.validate()?;
    Ok(sc)
}

/// Reads a scenario file without checking the assumptions; relative file
/// paths inside it are resolved against the file's directory.
pub fn load_scenario(path: &Path) -> Result<Scenario> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    let mut sc = Scenario::from_toml(&text).map_err(|e| match e {
        Error::Parse(m) => Error::Parse(format!("{}: {m}", path.display())),
        other => other,
    })?;
    let base = path.parent().unwrap_or(Path::new("."));
    let resolve = |p: &mut Option<PathBuf>| {
        if let Some(p) = p.as_mut().filter(|p| p.is_relative()) {
            *p = base.join(&*p);
        }
    };
    resolve(&mut sc.threshold.table);
    resolve(&mut sc.initial.file);
    Ok(sc)
}

impl Scenario {
    pub fn from_toml(text: &str) -> Result<Scenario> {
        toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Parse(e.to_string()))
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_toml()?)?;
        Ok(())
    }

    pub fn grid(&self) -> Result<Grid> {
        let d = &self.domain;
        let h = d.spacing.unwrap_or(d.extents.map(|n| 1.0 / n.max(1) as f64));
        if d.homogeneous {
            Grid::homogeneous(d.extents, h)
        } else {
            Grid::new(d.extents, h, d.dirichlet)
        }
    }

    pub fn threshold(&self) -> Result<ThresholdField> {
        let t = &self.threshold;
        match (&t.expr, &t.table) {
            (Some(e), None) => ThresholdField::new(ExprScalar(e.clone()), t.c1, t.c2, t.regularity),
            (None, Some(path)) => {
                let table = TableScalar::from_csv(path)?;
                table.fits(&self.grid()?)?;
                ThresholdField::new(table, t.c1, t.c2, t.regularity)
            }
            _ => Err(Error::Parse("threshold needs exactly one of `expr` and `table`".into())),
        }
    }

    pub fn shift(&self) -> ShiftField {
        ShiftField::new(ExprTensor(self.shift.components.clone()), self.shift.regularity)
    }

    pub fn constraint(&self) -> Result<ConstraintSet> {
        Ok(ConstraintSet::new(self.grid()?, self.threshold()?, self.shift()))
    }

    /// `(v₀, σ₀)` as given, before masking or projection.
    pub fn initial_fields(&self) -> Result<(VectorField, TensorField)> {
        let grid = self.grid()?;
        let init = &self.initial;
        if let Some(path) = &init.file {
            if init.velocity != zeros() || init.stress != zeros() {
                return Err(Error::Parse("initial: give either `file` or expressions, not both".into()));
            }
            return read_snapshot_csv(path, grid);
        }
        let v = (0..grid.node_count())
            .map(|p| {
                let x = grid.position(p);
                std::array::from_fn(|c| init.velocity[c].eval(0.0, x))
            })
            .collect();
        let sigma = TensorField::from_fn(grid, |x| {
            SymTensor3::from_array(std::array::from_fn(|c| init.stress[c].eval(0.0, x)))
        });
        Ok((VectorField::from_raw(grid, v), sigma))
    }

    /// Numerical parameters outside the assumption list.
    pub fn check_parameters(&self) -> Result<()> {
        let bad = |m: String| Err(Error::BadParameters(m));
        let (t, p) = (&self.time, &self.physics);
        if !(t.horizon > 0.0 && t.horizon.is_finite()) {
            return bad(format!("time.horizon must be positive, got {}", t.horizon));
        }
        if !(t.dt > 0.0 && t.dt <= t.horizon) {
            return bad(format!("time.dt must lie in (0, horizon], got {}", t.dt));
        }
        if p.regime == Regime::Regularized && !(p.kappa > 0.0 && p.kappa.is_finite()) {
            return bad(format!("physics.kappa must be positive in the regularized regime, got {}", p.kappa));
        }
        if !(p.nu > 0.0 && p.nu.is_finite()) {
            return bad(format!("physics.nu must be positive, got {}", p.nu));
        }
        if !(p.lambda > 0.0 && p.lambda.is_finite()) {
            return bad(format!("physics.lambda must be positive, got {}", p.lambda));
        }
        if self.output.cadence == 0 {
            return bad("output.cadence must be at least 1".into());
        }
        if !(self.solver.safety > 0.0 && self.solver.safety < 1.0) {
            return bad(format!("solver.safety must lie in (0, 1), got {}", self.solver.safety));
        }
        self.grid()?;
        self.threshold()?;
        Ok(())
    }

    /// Every failed assumption, in the order (A1)…(A5).
    pub fn violations(&self) -> Result<Vec<Violation>> {
        self.check_parameters()?;
        let grid = self.grid()?;
        let horizon = self.time.horizon;
        let times = sample_times(horizon, VALIDATION_SAMPLES);
        let mut out = Vec::new();

        let force = ExprVector(self.data.force.clone());
        let rate = ExprTensor(self.data.strain_rate.clone());
        if let Some(&t) = times.iter().find(|&&t| !force.sample(&grid, t).is_finite()) {
            out.push(Violation::new("A1", format!("force f is not finite at t = {t}")));
        }
        if let Some(&t) = times.iter().find(|&&t| !rate.sample(&grid, t).is_finite()) {
            out.push(Violation::new("A1", format!("strain rate h is not finite at t = {t}")));
        }

        let cs = self.constraint()?;
        let (v0, sigma0) = self.initial_fields()?;
        if !v0.is_finite() {
            out.push(Violation::new("A2", "initial velocity is not finite"));
        } else if v0.mask_violation() > 0.0 {
            out.push(Violation::new(
                "A2",
                format!("initial velocity is nonzero on the Dirichlet boundary (max |v0| = {:e})", v0.mask_violation()),
            ));
        }
        if !sigma0.is_finite() {
            out.push(Violation::new("A2", "initial stress is not finite"));
        } else if let Ok(snap) = cs.snapshot(0.0) {
            let m = snap.membership(&sigma0, self.solver.membership_tol);
            if !m.feasible && !self.initial.project {
                out.push(Violation::new(
                    "A2",
                    format!(
                        "initial stress is outside K(0): max violation {:e} at node {} (set initial.project or pass --project-initial)",
                        m.max_violation,
                        m.node.unwrap_or(0)
                    ),
                ));
            }
        }

        if self.physics.regime == Regime::Regularized && self.shift.regularity == ShiftRegularity::H1H {
            out.push(Violation::new("A3", "the regularized regime needs the shift in H1(0,T;V); it is tagged h1_h"));
        }
        let shift = cs.shift();
        let shift_ok = times
            .iter()
            .all(|&t| shift.at(&grid, t).is_finite() && shift.rate(&grid, t).is_ok_and(|r| r.is_finite()));
        if !shift_ok {
            let tag = if self.physics.regime == Regime::Regularized { "A3" } else { "A3'" };
            out.push(Violation::new(tag, "shift or its time derivative is not finite on [0, T]"));
        }

        let threshold = cs.threshold();
        if self.physics.regime == Regime::Sweeping && threshold.regularity() == ThresholdRegularity::Continuous {
            out.push(Violation::new(
                "A4",
                "the sweeping regime needs an H1-in-time threshold; it is tagged continuous",
            ));
        }
        match threshold.validate(&grid, &times) {
            Ok(_) => {}
            Err(Error::ThresholdViolation { t, node, value, lower, upper }) => out.push(Violation::new(
                "A5",
                format!("g = {value} at t = {t}, node {node} lies outside [C1, C2] = [{lower}, {upper}]"),
            )),
            Err(Error::MissingDerivative(m)) => out.push(Violation::new("A4", m)),
            Err(e) => return Err(e),
        }
        Ok(out)
    }

    /// Fails with the collected violations, citing the first assumption.
    pub fn validate(&self) -> Result<()> {
        let v = self.violations()?;
        match v.first() {
            None => Ok(()),
            Some(first) => Err(Error::AssumptionViolation {
                assumption: first.assumption.into(),
                detail: v.iter().map(|x| format!("({}) {}", x.assumption, x.detail)).collect::<Vec<_>>().join("; "),
            }),
        }
    }

    /// The validated problem, with `σ₀` projected onto `K(0)` when requested.
    pub fn problem(&self) -> Result<Problem> {
        self.validate()?;
        let constraint = self.constraint()?;
        let (mut v0, mut sigma0) = self.initial_fields()?;
        v0.apply_mask();
        if self.initial.project {
            sigma0 = constraint.project(&sigma0, 0.0)?;
        }
        Ok(Problem {
            constraint,
            force: Arc::new(ExprVector(self.data.force.clone())),
            strain_rate: Arc::new(ExprTensor(self.data.strain_rate.clone())),
            v0,
            sigma0,
            horizon: self.time.horizon,
            dt: self.time.dt,
            regime: self.physics.regime,
            kappa: self.physics.kappa,
            nu: self.physics.nu,
            config: self.solver,
        })
    }

    pub fn mollification_plan(&self) -> Result<MollificationPlan> {
        let a = self
            .approx
            .as_ref()
            .ok_or_else(|| Error::BadPlan("scenario has no [approx] section".into()))?;
        let plan = MollificationPlan {
            base: self.threshold()?,
            indices: a.indices.clone(),
            w0: a.w0,
            horizon: self.time.horizon,
        };
        plan.check()?;
        Ok(plan)
    }
}
