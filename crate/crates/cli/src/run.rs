//! Executes one experiment into a staging directory, then renames it into
//! place so a results directory is never observed half-written.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use kahlerlab_core::concentration::{run_concentration, ConcentrationResult, ConcentrationSpec};
use kahlerlab_core::inequalities::{digest_values, InequalityReport};
use kahlerlab_core::ma_solver::{scaled_tolerance, solve_ma, verify_mass, MAProblem, SolverOptions};
use kahlerlab_core::positivity::{
    constant_current_test, gauduchon_cone_probe, probe_value, seshadri_infimum, ProbeBudget,
};
use kahlerlab_core::{HermitianFormField, HermitianMatrix};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::{json, Value};

use crate::checks::{applicable, run_check, Record};
use crate::config::{
    ConcentrateParams, Experiment, ExperimentConfig, ProbeParams, Schedule, SeshadriParams, SolveParams, SweepParams,
};
use crate::error::CliError;
use crate::mat1::Mat1;

/// Marker file identifying a directory this tool wrote (and may replace).
pub const MARKER: &str = "run.json";

#[derive(Clone, Debug, Serialize)]
pub struct Outcome {
    pub kind: String,
    pub exit_code: i32,
    pub output_dir: PathBuf,
    pub checks: usize,
    pub failed: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

struct Staging {
    dir: PathBuf,
    records: Vec<Record>,
}

impl Staging {
    fn new(out: &Path) -> Result<Self, CliError> {
        let parent = out.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
        fs::create_dir_all(parent)?;
        let name = out
            .file_name()
            .ok_or_else(|| CliError::Config(format!("invalid output directory {}", out.display())))?;
        let dir = parent.join(format!(".{}.staging-{}", name.to_string_lossy(), std::process::id()));
        if dir.exists() {
            fs::remove_dir_all(&dir)?;
        }
        fs::create_dir_all(&dir)?;
        Ok(Self { dir, records: Vec::new() })
    }

    fn json(&self, name: &str, value: &impl Serialize) -> Result<(), CliError> {
        let text = serde_json::to_string_pretty(value)?;
        fs::write(self.dir.join(name), text + "\n")?;
        Ok(())
    }

    fn mat1(&self, name: &str, m: &Mat1) -> Result<(), CliError> {
        let mut f = std::io::BufWriter::new(fs::File::create(self.dir.join(name))?);
        m.write_to(&mut f)?;
        f.flush()?;
        Ok(())
    }

    fn push(&mut self, report: InequalityReport, seed: u64, instance: usize, inputs: Value) {
        self.records.push(Record {
            report,
            seed,
            instance,
            inputs,
        });
    }

    fn write_reports(&self) -> Result<(), CliError> {
        let mut jsonl = std::io::BufWriter::new(fs::File::create(self.dir.join("report.jsonl"))?);
        for r in &self.records {
            serde_json::to_writer(&mut jsonl, r)?;
            jsonl.write_all(b"\n")?;
        }
        jsonl.flush()?;
        let mut w = csv::Writer::from_path(self.dir.join("summary.csv"))?;
        w.write_record(["name", "lhs", "rhs", "slack", "tolerance", "passed", "status", "seed", "instance"])?;
        for r in &self.records {
            let p = &r.report;
            let status = serde_json::to_value(p.status)?;
            w.write_record([
                p.name.clone(),
                fmt(p.lhs),
                fmt(p.rhs),
                fmt(p.slack),
                fmt(p.tolerance),
                p.passed.to_string(),
                status.as_str().unwrap_or_default().to_string(),
                r.seed.to_string(),
                r.instance.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    /// Moves the staged directory to `out`, replacing an earlier run's output.
    fn commit(self, out: &Path) -> Result<(), CliError> {
        if out.exists() {
            if !out.join(MARKER).exists() {
                fs::remove_dir_all(&self.dir)?;
                return Err(CliError::Config(format!(
                    "{} exists and is not a results directory; refusing to replace it",
                    out.display()
                )));
            }
            fs::remove_dir_all(out)?;
        }
        fs::rename(&self.dir, out)?;
        Ok(())
    }
}

fn fmt(v: f64) -> String {
    // shortest round-trip representation
    format!("{v:?}")
}

/// Runs `config` (relative field paths resolve against `base`) into `out`.
///
/// Configuration errors are returned before anything is written. Failed
/// checks and numerical errors produce exit code 3 and a replay bundle
/// (`config.json` plus `failure.json`) inside `out`.
pub fn run(config: &ExperimentConfig, base: &Path, out: &Path) -> Result<Outcome, CliError> {
    config.validate()?;
    let mut stage = Staging::new(out)?;
    stage.json("config.json", config)?;
    let result = match &config.experiment {
        Experiment::Solve(p) => solve(config, p, base, &mut stage),
        Experiment::Verify(p) => checks(config, p, 1, &mut stage),
        Experiment::Sweep(p) => checks(config, p, p.samples, &mut stage),
        Experiment::Concentrate(p) => concentrate(config, p, &mut stage),
        Experiment::Probe(p) => probe(config, p, &mut stage),
        Experiment::Seshadri(p) => seshadri(config, p, &mut stage),
    };
    let kind = serde_json::to_value(config.experiment.kind())?.as_str().unwrap_or_default().to_string();
    let error = match result {
        Ok(()) => None,
        Err(e @ CliError::Numerical(_)) => Some(e.to_string()),
        Err(e) => {
            let _ = fs::remove_dir_all(&stage.dir);
            return Err(e);
        }
    };
    stage.write_reports()?;
    let failed: Vec<String> = stage
        .records
        .iter()
        .filter(|r| !r.report.passed)
        .map(|r| format!("{}#{}", r.report.name, r.instance))
        .collect();
    let exit_code = if error.is_some() || !failed.is_empty() { 3 } else { 0 };
    if exit_code != 0 {
        let failing: Vec<&Record> = stage.records.iter().filter(|r| !r.report.passed).collect();
        stage.json(
            "failure.json",
            &json!({
                "error": error,
                "failed_checks": failing,
                "replay": "rerun with the adjacent config.json; seeds and tolerances are recorded there",
            }),
        )?;
    }
    let outcome = Outcome {
        kind,
        exit_code,
        output_dir: out.to_path_buf(),
        checks: stage.records.len(),
        failed,
        error,
    };
    stage.json(MARKER, &outcome)?;
    stage.commit(out)?;
    Ok(outcome)
}

fn tolerance(config: &ExperimentConfig, fallback: f64) -> f64 {
    config.tolerance.unwrap_or(fallback)
}

fn solver_options(config: &ExperimentConfig, options: &SolverOptions) -> SolverOptions {
    let mut o = options.clone();
    if let Some(t) = config.tolerance {
        o.tolerance = t;
    }
    o
}

fn omega_or_identity(omega: &Option<HermitianMatrix>, n: usize) -> Result<HermitianMatrix, CliError> {
    let m = omega.unwrap_or_else(|| HermitianMatrix::identity(n));
    if m.dim() != n {
        return Err(CliError::Config(format!("ω has dimension {}, geometry has n = {n}", m.dim())));
    }
    if !m.is_positive_definite() {
        return Err(CliError::Config("ω must be positive definite".into()));
    }
    Ok(m)
}

fn solve(config: &ExperimentConfig, p: &SolveParams, base: &Path, stage: &mut Staging) -> Result<(), CliError> {
    let torus = config.geometry.torus()?;
    torus.require_grid()?;
    let omega = omega_or_identity(&p.omega, torus.n())?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let f = p.f.build(&torus, base, &mut rng)?;
    let options = solver_options(config, &p.solver);
    let class = HermitianFormField::constant(&torus, omega)?;
    let problem = MAProblem::new(&class, f, p.normalize_b)?.with_options(options.clone());
    let sol = solve_ma(&problem)?;
    let target: Vec<f64> = problem.f().grid_values()?.iter().map(|v| (v + sol.b).exp()).collect();
    let tol = scaled_tolerance(options.tolerance, &target);
    let mass = verify_mass(&sol, &problem)?;
    let phi_sup = sol.phi.sup_norm();
    stage.json(
        "solution.json",
        &json!({
            "b": sol.b,
            "residual_sup": sol.residual_sup,
            "residual_l2": sol.residual_l2,
            "unresolved_sup": sol.unresolved_sup,
            "margin": sol.positivity_margin,
            "steps": sol.newton_steps,
            "history": sol.residual_history,
            "phi_sup_norm": phi_sup,
            "sup_shift": sol.sup_shift,
            "tolerance": tol,
        }),
    )?;
    if p.dump_phi {
        stage.mat1("phi.mat1", &Mat1::from_field(&sol.phi)?)?;
    }
    let digest = digest_values(target.iter().step_by(97).copied());
    let inputs = json!({"omega": omega});
    let mut r = InequalityReport::at_least("solve.residual_within_tolerance", tol, sol.residual_sup, 0.0);
    r.digest = digest.clone();
    stage.push(r, config.seed, 0, inputs.clone());
    let mass_tol = 1e-9 * omega.det().abs().max(1.0);
    let mut r = InequalityReport::at_least("solve.mass", mass_tol, mass, 0.0);
    r.digest = digest.clone();
    stage.push(r, config.seed, 0, inputs.clone());
    let mut r = InequalityReport::at_least("solve.positivity_margin", sol.positivity_margin, 0.0, 0.0);
    r.digest = digest;
    stage.push(r, config.seed, 0, inputs);
    Ok(())
}

fn checks(config: &ExperimentConfig, p: &SweepParams, samples: usize, stage: &mut Staging) -> Result<(), CliError> {
    let torus = config.geometry.torus()?;
    let tol = tolerance(config, kahlerlab_core::inequalities::DEFAULT_TOL);
    let names: Vec<String> = match &p.checks {
        Some(names) => names.clone(),
        None => applicable(&torus).into_iter().map(String::from).collect(),
    };
    for name in &names {
        for instance in 0..samples {
            match run_check(name, &torus, config.seed, instance, tol) {
                Ok(records) => stage.records.extend(records),
                Err(CliError::Numerical(msg)) => {
                    return Err(CliError::Numerical(format!("{name} instance {instance}: {msg}")))
                }
                Err(e) => return Err(e),
            }
        }
    }
    Ok(())
}

fn schedule(torus: &kahlerlab_core::Torus, s: &Schedule) -> (Vec<f64>, Vec<f64>) {
    match s {
        Schedule::Explicit { epsilons, widths } => (epsilons.clone(), widths.clone()),
        Schedule::Geometric { eps0, width0, levels } => {
            ConcentrationSpec::geometric_schedule(torus, *eps0, *width0, *levels)
        }
    }
}

fn concentrate(config: &ExperimentConfig, p: &ConcentrateParams, stage: &mut Staging) -> Result<(), CliError> {
    let torus = config.geometry.torus()?;
    let n = torus.n();
    let omega = omega_or_identity(&p.omega, n)?;
    let (epsilons, widths) = schedule(&torus, &p.schedule);
    let mut spec = ConcentrationSpec::new(
        &torus,
        p.alpha,
        omega,
        p.points.clone(),
        p.weights.clone(),
        p.delta,
        epsilons,
        widths,
        (p.annulus[0], p.annulus[1]),
    )?;
    if let Some(bins) = p.bins {
        spec.annulus_bins = bins;
    }
    spec.solver = solver_options(config, &p.solver);
    let result = run_concentration(&spec)?;
    write_concentration(&spec, &result, stage)?;
    if p.dump_fields {
        for (k, level) in result.levels.iter().enumerate() {
            stage.mat1(&format!("phi_level{k}.mat1"), &Mat1::from_field(&level.solution.phi)?)?;
            stage.mat1(&format!("rhs_level{k}.mat1"), &Mat1::from_field(&spec.rhs_density(level.width)?)?)?;
        }
    }
    let inputs = json!({"alpha": p.alpha, "omega": omega, "points": p.points, "weights": p.weights, "delta": p.delta});
    let seed = config.seed;
    let digest = digest_values(spec.epsilons().iter().chain(spec.weights()).copied().chain([spec.delta()]));
    for (k, l) in result.levels.iter().enumerate() {
        let mut r = InequalityReport::identity("concentrate.c_eps_identity", l.c_eps_measured, l.c_eps_cohomological, 1e-6);
        r.details.insert("epsilon".into(), l.epsilon);
        r.digest = digest.clone();
        stage.push(r, seed, k, inputs.clone());
        let mut r = InequalityReport::at_least("concentrate.c_eps_gt_one", l.c_eps_measured, 1.0, 0.0);
        r.passed &= l.c_eps_measured > 1.0;
        r.details.insert("epsilon".into(), l.epsilon);
        r.digest = digest.clone();
        stage.push(r, seed, k, inputs.clone());
    }
    for j in 0..spec.points().len() {
        let slopes = result.slopes(j);
        // smallest increment of the Lelong estimate as ε decreases
        let step = slopes.windows(2).map(|w| w[1] - w[0]).fold(f64::INFINITY, f64::min);
        let step = if step.is_finite() { step } else { 0.0 };
        let mut r = InequalityReport::at_least("concentrate.lelong_monotone", step, 0.0, 0.0);
        r.details.insert("point".into(), j as f64);
        r.details.insert("weight".into(), spec.weights()[j]);
        if let Some(s) = slopes.last() {
            r.details.insert("final_estimate".into(), *s);
        }
        r.digest = digest.clone();
        stage.push(r, seed, j, inputs.clone());
    }
    if let Some(f) = &result.failure {
        return Err(CliError::Numerical(format!(
            "concentration stopped at ε = {}: {}",
            f.epsilon, f.error
        )));
    }
    Ok(())
}

fn write_concentration(spec: &ConcentrationSpec, result: &ConcentrationResult, stage: &Staging) -> Result<(), CliError> {
    let levels: Vec<Value> = result
        .levels
        .iter()
        .map(|l| {
            json!({
                "epsilon": l.epsilon,
                "width": l.width,
                "c_eps": l.c_eps_cohomological,
                "c_eps_measured": l.c_eps_measured,
                "rhs_mass": l.rhs_mass,
                "b": l.solution.b,
                "residual_sup": l.solution.residual_sup,
                "unresolved_sup": l.solution.unresolved_sup,
                "margin": l.solution.positivity_margin,
                "steps": l.solution.newton_steps,
                "fits": l.fits,
                "tau_hat": l.fits.iter().map(|f| f.slope).collect::<Vec<_>>(),
                "predicted": l.predicted_slopes,
            })
        })
        .collect();
    stage.json(
        "concentration.json",
        &json!({
            "weights": spec.weights(),
            "delta": spec.delta(),
            "annulus": [spec.annulus().0, spec.annulus().1],
            "levels": levels,
            "failure": result.failure,
        }),
    )?;
    let table = concentration_table(&stage.dir.join("concentration.json"))?;
    fs::write(stage.dir.join("plot.csv"), table)?;
    Ok(())
}

fn probe(config: &ExperimentConfig, p: &ProbeParams, stage: &mut Staging) -> Result<(), CliError> {
    let n = config.geometry.n;
    let omega = omega_or_identity(&p.omega, n)?;
    if p.alpha.dim() != n {
        return Err(CliError::Config(format!("α has dimension {}, geometry has n = {n}", p.alpha.dim())));
    }
    if !(p.epsilon >= 0.0) {
        return Err(CliError::Config(format!("ε = {} must be nonnegative", p.epsilon)));
    }
    let budget = ProbeBudget {
        restarts: p.restarts,
        step: p.step,
        iterations: p.iterations,
        seed: config.seed,
    };
    let result = gauduchon_cone_probe(&p.alpha, p.epsilon, &omega, &budget)?;
    let verdict = constant_current_test(&p.alpha, p.epsilon, &omega)?;
    stage.json("probe.json", &result)?;
    stage.json("witness.json", &result.witness)?;
    let inputs = json!({"alpha": p.alpha, "omega": omega, "epsilon": p.epsilon, "witness": result.witness});
    let digest = digest_values(
        [p.alpha, omega]
            .iter()
            .flat_map(|m| m.real_parts().into_iter().flatten())
            .chain([p.epsilon]),
    );
    let replayed = probe_value(&p.alpha, p.epsilon, &omega, &result.witness);
    let scale = result.min_value.abs().max(1e-300);
    let mut r = InequalityReport::at_least("probe.witness_replay", 1e-9 * scale.max(1.0), (replayed - result.min_value).abs(), 0.0);
    r.digest = digest.clone();
    stage.push(r, config.seed, 0, inputs.clone());
    // a margin within the probe tolerance is undecidable numerically
    let decisive = verdict.margin.abs() > 1e-6;
    let mut r = InequalityReport::at_least("probe.agrees_with_eigenvalue_test", result.min_value, 0.0, result.tolerance);
    r.passed = !decisive || result.refuted != verdict.exists;
    r.details.insert("eigen_margin".into(), verdict.margin);
    r.details.insert("refuted".into(), f64::from(u8::from(result.refuted)));
    r.digest = digest;
    stage.push(r, config.seed, 0, inputs);
    Ok(())
}

fn seshadri(config: &ExperimentConfig, p: &SeshadriParams, stage: &mut Staging) -> Result<(), CliError> {
    let n = config.geometry.n;
    if !p.records.iter().any(|r| r.dim == n && r.mult == 1) {
        return Err(CliError::Config(format!(
            "records need the ambient space (dim {n}, multiplicity 1) to bound the infimum"
        )));
    }
    if let Some(r) = p.records.iter().find(|r| r.dim > n) {
        return Err(CliError::Config(format!("record {:?} has dim {} > n = {n}", r.label, r.dim)));
    }
    let result = seshadri_infimum(&p.records)?;
    stage.json("seshadri.json", &result)?;
    let bound = result.volume_bound.unwrap_or(f64::NAN);
    let mut r = InequalityReport::at_least("seshadri.volume_bound", bound, result.value, 1e-12 * bound.abs().max(1.0));
    r.digest = digest_values(p.records.iter().flat_map(|r| [r.dim as f64, r.degree, r.mult as f64]));
    stage.push(r, config.seed, 0, json!({"records": p.records}));
    Ok(())
}

/// `epsilon,C_eps,tau_hat_1,…` from a `concentration.json`.
pub fn concentration_table(path: &Path) -> Result<String, CliError> {
    let v: Value = serde_json::from_str(&fs::read_to_string(path)?)?;
    let levels = v["levels"]
        .as_array()
        .ok_or_else(|| CliError::Config(format!("{}: no levels", path.display())))?;
    let points = v["weights"].as_array().map_or(0, Vec::len);
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["epsilon".to_string(), "C_eps".to_string()];
    header.extend((1..=points).map(|j| format!("tau_hat_{j}")));
    w.write_record(&header)?;
    for l in levels {
        let mut row = vec![num(&l["epsilon"]), num(&l["c_eps"])];
        row.extend((0..points).map(|j| num(&l["tau_hat"][j])));
        w.write_record(&row)?;
    }
    String::from_utf8(w.into_inner().map_err(|e| CliError::Io(e.into_error()))?)
        .map_err(|e| CliError::Config(e.to_string()))
}

fn num(v: &Value) -> String {
    v.as_f64().map_or_else(|| "NaN".into(), fmt)
}

/// `name,lhs,rhs,slack,passed` from a `report.jsonl`.
pub fn check_table(path: &Path) -> Result<String, CliError> {
    let text = fs::read_to_string(path)?;
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["name", "lhs", "rhs", "slack", "passed"])?;
    for line in text.lines().filter(|l| !l.trim().is_empty()) {
        let r: InequalityReport = serde_json::from_str(line)?;
        w.write_record([r.name, fmt(r.lhs), fmt(r.rhs), fmt(r.slack), r.passed.to_string()])?;
    }
    String::from_utf8(w.into_inner().map_err(|e| CliError::Io(e.into_error()))?)
        .map_err(|e| CliError::Config(e.to_string()))
}

/// Plot table for a results directory: the concentration table when present,
/// the per-check table otherwise.
pub fn plot_data(dir: &Path) -> Result<String, CliError> {
    let conc = dir.join("concentration.json");
    if conc.exists() {
        return concentration_table(&conc);
    }
    let report = dir.join("report.jsonl");
    if report.exists() {
        return check_table(&report);
    }
    Err(CliError::Config(format!(
        "{} holds no run artifacts (concentration.json or report.jsonl)",
        dir.display()
    )))
}
