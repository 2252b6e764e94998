//! Command implementations behind the `fieldlab` binary. Every command returns
//! a [`Report`]; the binary prints it and maps the outcome to an exit code.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;
use std::sync::Arc;

use fieldlab_core::bundle::*;
use fieldlab_core::connection::beta_point;
use fieldlab_core::constraint::{
    gamma_s, run_algorithm, transport_and_compare, unified_inclusion, ChainOptions, Problem, Sampler,
};
use fieldlab_core::exterior::checks::{forms_equiv, run_all};
use fieldlab_core::exterior::is_multisymplectic;
use fieldlab_core::expr::{EquivOptions, Point};
use fieldlab_core::mechanics::*;
use fieldlab_core::theories::{builtin_file, TheoryFile};
use fieldlab_core::{Error, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Relative singular-value floor for regularity and rank verdicts.
pub const RANK_FLOOR: f64 = 1e-10;
/// Tolerance of the pullback identities.
pub const PULLBACK_TOL: f64 = 1e-10;
/// Largest admissible transported-constraint violation.
pub const TRANSPORT_TOL: f64 = 1e-8;
/// Bound on `H₀` drift and on the Euler–Lagrange residual of a trajectory.
pub const FLOW_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Serialize)]
pub struct Report {
    pub command: String,
    pub tool_version: String,
    pub inputs_digest: String,
    pub inputs: Value,
    pub results: Value,
    pub verdicts: BTreeMap<String, bool>,
    pub passed: bool,
}

impl Report {
    fn new(command: &str, inputs: Value, results: Value, verdicts: BTreeMap<String, bool>) -> Report {
        let passed = verdicts.values().all(|v| *v);
        let digest = Sha256::digest(serde_json::to_string(&inputs).expect("inputs serialize").as_bytes());
        Report {
            command: command.into(),
            tool_version: VERSION.into(),
            inputs_digest: digest.iter().map(|b| format!("{b:02x}")).collect(),
            inputs,
            results,
            verdicts,
            passed,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("reports serialize")
    }

    pub fn exit_code(&self) -> i32 {
        if self.passed {
            0
        } else {
            1
        }
    }
}

/// Errors caused by the invocation itself map to exit code 2; everything
/// else is a failed verdict.
pub fn is_input_error(e: &Error) -> bool {
    matches!(
        e,
        Error::TheoryFile(_)
            | Error::Json(_)
            | Error::Io(_)
            | Error::InvalidArgument(_)
            | Error::Dimension(_)
            | Error::Expr(_)
            | Error::LayerMismatch(_)
            | Error::PointOffConstraint(_)
    )
}

/// Report for an engine error raised after the inputs were accepted.
pub fn failure_report(command: &str, inputs: Value, err: &Error) -> Report {
    let mut verdicts = BTreeMap::new();
    verdicts.insert("completed".to_string(), false);
    Report::new(command, inputs, json!({ "error": err.to_string() }), verdicts)
}

/// A built-in name or the path of a JSON theory file.
pub fn load_theory_file(name_or_path: &str) -> Result<TheoryFile> {
    if let Some(f) = builtin_file(name_or_path) {
        return Ok(f);
    }
    let text = std::fs::read_to_string(Path::new(name_or_path))?;
    TheoryFile::from_json(&text)
}

fn random_points(th: &LagrangianTheory, layer: Layer, count: usize, rng: &mut ChaCha8Rng) -> Vec<Point> {
    let space = th.chart.layer(layer).clone();
    (0..count)
        .map(|_| {
            let vals = space
                .coords()
                .iter()
                .map(|c| {
                    let (lo, hi) = th.range_of(*c);
                    rng.gen_range(lo..hi)
                })
                .collect();
            Point::new(space.clone(), vals)
        })
        .collect()
}

fn equiv_opts(th: &LagrangianTheory, seed: u64) -> EquivOptions {
    let mut o = EquivOptions::default().tol(PULLBACK_TOL).seed(seed);
    for c in th.chart.layer(Layer::W0).coords() {
        let (lo, hi) = th.range_of(*c);
        o = o.with_box(*c, lo, hi);
    }
    o
}

/// Number of sample points used by `analyze`.
pub const ANALYZE_SAMPLES: usize = 16;

pub fn analyze(file: &TheoryFile, seed: u64) -> Result<Report> {
    let inputs = json!({ "theory": file, "seed": seed });
    let th = Arc::new(file.build()?);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let zpts = random_points(&th, Layer::Z, ANALYZE_SAMPLES, &mut rng);
    let lpts = random_points(&th, Layer::Lambda2, ANALYZE_SAMPLES, &mut rng);
    let dim_z = th.chart.layer(Layer::Z).dim();
    let mut verdicts = BTreeMap::new();

    let regular: Vec<bool> = zpts.iter().map(|p| is_regular_at(&th, p, RANK_FLOOR)).collect::<Result<_>>()?;
    let ranks: Vec<usize> = zpts.iter().map(|p| legendre_rank_at(&th, p, RANK_FLOOR)).collect::<Result<_>>()?;
    let mut deficiency: BTreeMap<String, usize> = BTreeMap::new();
    for r in &ranks {
        *deficiency.entry((dim_z - r).to_string()).or_default() += 1;
    }
    verdicts.insert(
        "legendre_full_rank_iff_regular".into(),
        ranks.iter().zip(&regular).all(|(r, reg)| (*r == dim_z) == *reg),
    );

    let (theta_l, omega_l) = poincare_cartan(&th)?;
    let (theta2, omega2) = canonical_forms(&th.chart)?;
    let omega_w = omega_wbar1(&th)?;
    let per_point = |form, pts: &[Point]| -> Result<Vec<bool>> {
        pts.iter().map(|p| is_multisymplectic(form, std::slice::from_ref(p), RANK_FLOOR)).collect()
    };
    let ms_l = per_point(&omega_l, &zpts)?;
    let ms_w = per_point(&omega_w, &zpts)?;
    let ms_2 = is_multisymplectic(&omega2, &lpts, RANK_FLOOR)?;
    verdicts.insert("omega_2_multisymplectic".into(), ms_2);
    if th.n() >= 2 {
        verdicts.insert("omega_l_multisymplectic_iff_regular".into(), ms_l == regular);
        verdicts.insert("omega_wbar1_multisymplectic_iff_regular".into(), ms_w == regular);
    }

    let opts = equiv_opts(&th, seed);
    let theta_ok = forms_equiv(&pullback_substitution(&theta2, &leg_map(&th)?)?, &theta_l, &opts)?;
    verdicts.insert("pullback_theta_2".into(), theta_ok);
    let all_regular = regular.iter().all(|r| *r);
    let omega_h_ok = match th.hamiltonian() {
        Ok(hd) if all_regular && hd.constraints.is_empty() => {
            let (_, omega_h) = hamiltonian_forms(hd)?;
            let ok = forms_equiv(&pullback_substitution(&omega_h, &legendre_map(&th)?)?, &omega_l, &opts)?;
            verdicts.insert("pullback_omega_h".into(), ok);
            Some(ok)
        }
        _ => None,
    };

    let mut cosymplectic = Value::Null;
    if th.n() == 1 {
        let lag = ReebProblem::lagrangian(&th)?.is_cosymplectic_at(&zpts, RANK_FLOOR)?;
        let uni = ReebProblem::unified(&th)?.is_cosymplectic_at(&zpts, RANK_FLOOR)?;
        verdicts.insert("cosymplectic_lagrangian_iff_regular".into(), lag == all_regular);
        verdicts.insert("cosymplectic_wbar1_iff_regular".into(), uni == all_regular);
        cosymplectic = json!({ "lagrangian": lag, "wbar1": uni });
    }

    let results = json!({
        "theory": th.name,
        "n": th.n(),
        "m": th.m(),
        "samples": zpts.len(),
        "regularity": {
            "regular_points": regular.iter().filter(|r| **r).count(),
            "regular_everywhere_sampled": all_regular,
        },
        "legendre_rank": {
            "dim_z": dim_z,
            "min": ranks.iter().min(),
            "max": ranks.iter().max(),
            "deficiency_counts": deficiency,
        },
        "multisymplectic": {
            "omega_l": ms_l.iter().all(|v| *v),
            "omega_l_points": ms_l.iter().filter(|v| **v).count(),
            "omega_2": ms_2,
            "omega_wbar1": ms_w.iter().all(|v| *v),
            "omega_wbar1_points": ms_w.iter().filter(|v| **v).count(),
        },
        "pullback": { "theta_2": theta_ok, "omega_h": omega_h_ok },
        "cosymplectic": cosymplectic,
    });
    Ok(Report::new("analyze", inputs, results, verdicts))
}

/// Which chains `constraints` runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FormalismChoice {
    One(Formalism),
    All,
}

impl std::str::FromStr for FormalismChoice {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        Ok(match s {
            "lagrangian" => FormalismChoice::One(Formalism::Lagrangian),
            "hamiltonian" => FormalismChoice::One(Formalism::Hamiltonian),
            "unified" => FormalismChoice::One(Formalism::Unified),
            "unified-restricted" | "unified_restricted" => FormalismChoice::One(Formalism::UnifiedRestricted),
            "all" => FormalismChoice::All,
            other => return Err(format!("unknown formalism `{other}`")),
        })
    }
}

#[derive(Debug, Clone)]
pub struct ConstraintArgs {
    pub formalism: FormalismChoice,
    pub max_steps: usize,
    pub samples: usize,
    pub tol: f64,
    pub seed: u64,
}

impl Default for ConstraintArgs {
    fn default() -> Self {
        let d = ChainOptions::default();
        ConstraintArgs {
            formalism: FormalismChoice::All,
            max_steps: d.max_steps,
            samples: d.sampler.samples,
            tol: d.solve_tol,
            seed: 0,
        }
    }
}

impl ConstraintArgs {
    pub fn chain_options(&self) -> ChainOptions {
        ChainOptions {
            max_steps: self.max_steps,
            sampler: Sampler::default().with_samples(self.samples).with_seed(self.seed),
            solve_tol: self.tol,
            ..Default::default()
        }
    }
}

pub fn constraints(file: &TheoryFile, args: &ConstraintArgs) -> Result<Report> {
    if args.max_steps == 0 || args.samples == 0 {
        return Err(Error::InvalidArgument("--max-steps and --samples must be positive".into()));
    }
    if !(args.tol > 0.0) {
        return Err(Error::InvalidArgument("--tol must be positive".into()));
    }
    let label = match args.formalism {
        FormalismChoice::One(f) => f.label(),
        FormalismChoice::All => "all",
    };
    let inputs = json!({
        "theory": file,
        "formalism": label,
        "max_steps": args.max_steps,
        "samples": args.samples,
        "tol": args.tol,
        "seed": args.seed,
    });
    let th = Arc::new(file.build()?);
    let opts = args.chain_options();
    let mut verdicts = BTreeMap::new();
    let results = match args.formalism {
        FormalismChoice::One(f) => {
            let p = Arc::new(Problem::new(th.clone(), f)?);
            let t = run_algorithm(&p, &opts)?;
            verdicts.insert(format!("stabilized_{}", f.label()), t.stabilized);
            json!({ "traces": [t] })
        }
        FormalismChoice::All => {
            let tr = transport_and_compare(&th, &opts)?;
            let uni = run_algorithm(&Arc::new(Problem::new(th.clone(), Formalism::Unified)?), &opts)?;
            let inclusion = unified_inclusion(&th, &opts)?;
            let mut traces: Vec<Value> = Vec::new();
            for f in Formalism::ALL {
                let t = if f == Formalism::Unified { &uni } else { &tr.traces[&f] };
                verdicts.insert(format!("stabilized_{}", f.label()), t.stabilized);
                traces.push(serde_json::to_value(t)?);
            }
            // The full unified chain starts one level lower (on W₀) and is
            // reported, not compared.
            verdicts.insert("same_final_step".into(), tr.same_final_step);
            verdicts.insert("transport_within_tolerance".into(), tr.max_violation <= TRANSPORT_TOL);
            verdicts.insert("unified_inclusion".into(), inclusion.iter().all(|r| r.violations == 0));
            let mut final_steps = tr.final_steps.clone();
            final_steps.insert(Formalism::Unified.label().into(), uni.final_step());
            json!({
                "traces": traces,
                "transport": {
                    "rows": tr.rows,
                    "max_violation": tr.max_violation,
                    "tolerance": TRANSPORT_TOL,
                },
                "final_steps": final_steps,
                "unified_inclusion": inclusion,
            })
        }
    };
    Ok(Report::new("constraints", inputs, results, verdicts))
}

/// Initial conditions: a list of `name → value` objects, bare or under
/// `"initial_conditions"`. Unnamed coordinates start at zero.
pub fn parse_initial_conditions(text: &str) -> Result<Vec<BTreeMap<String, f64>>> {
    #[derive(serde::Deserialize)]
    #[serde(untagged)]
    enum Ics {
        Bare(Vec<BTreeMap<String, f64>>),
        Wrapped { initial_conditions: Vec<BTreeMap<String, f64>> },
    }
    let ics = match serde_json::from_str::<Ics>(text)
        .map_err(|e| Error::InvalidArgument(format!("initial conditions: {e}")))?
    {
        Ics::Bare(v) => v,
        Ics::Wrapped { initial_conditions } => initial_conditions,
    };
    if ics.is_empty() {
        return Err(Error::InvalidArgument("no initial conditions given".into()));
    }
    Ok(ics)
}

/// Seed of the chain runs behind `integrate` on singular theories.
pub const INTEGRATE_SEED: u64 = 0;

pub fn integrate_cmd(file: &TheoryFile, ics: &[BTreeMap<String, f64>], horizon: f64, step: f64) -> Result<Report> {
    if !(step > 0.0) || !step.is_finite() {
        return Err(Error::InvalidArgument(format!("step must be positive, got {step}")));
    }
    if !(horizon >= 0.0) || !horizon.is_finite() {
        return Err(Error::InvalidArgument(format!("horizon must be non-negative, got {horizon}")));
    }
    let inputs = json!({ "theory": file, "initial_conditions": ics, "horizon": horizon, "step": step });
    let th = Arc::new(file.build()?);
    if th.n() != 1 {
        return Err(Error::Dimension(format!("integrate needs a one-dimensional base, `{}` has n = {}", th.name, th.n())));
    }
    let zspace = th.chart.layer(Layer::Z).clone();
    let w0 = th.chart.layer(Layer::W0).clone();
    let starts: Vec<Point> = ics
        .iter()
        .map(|ic| point_from_names(&th.chart, &zspace, &ic.iter().map(|(k, v)| (k.clone(), *v)).collect::<HashMap<_, _>>()))
        .collect::<Result<_>>()?;
    let regular = starts.iter().map(|p| is_regular_at(&th, p, RANK_FLOOR)).collect::<Result<Vec<_>>>()?.into_iter().all(|r| r);
    let mut verdicts = BTreeMap::new();
    let mut runs = Vec::new();
    let results = if regular {
        let reeb = ReebProblem::lagrangian(&th)?;
        let flow = UnifiedFlow::on_wbar1(th.clone())?;
        for (k, z0) in starts.iter().enumerate() {
            let xi = reeb_field(&reeb, z0)?;
            let traj = reeb_trajectory(&reeb, &th.chart, z0, horizon, step)?;
            let unified = flow.trajectory(&lift_to_wbar1(&th, z0)?, horizon, step)?;
            let drift = h0_drift(&th, &unified)?;
            let el = el_residual(&th, &traj, &zspace)?;
            verdicts.insert(format!("ic{k}_h0_drift"), drift <= FLOW_TOL);
            verdicts.insert(format!("ic{k}_el_residual"), el <= FLOW_TOL);
            runs.push(json!({
                "sode_defect": sode_defect(&th.chart, &xi, z0)?,
                "h0_drift": drift,
                "el_residual": el,
                "holonomy_defect": holonomy_defect(&th, &traj)?,
                "trajectory": traj,
            }));
        }
        json!({ "mode": "reeb", "runs": runs })
    } else {
        let opts = ChainOptions { sampler: Sampler::default().with_seed(INTEGRATE_SEED), ..Default::default() };
        let (flow, trace) = UnifiedFlow::on_final_set(th.clone(), &opts)?;
        let beta = match th.hamiltonian() {
            Ok(_) => {
                let ham = Arc::new(Problem::new(th.clone(), Formalism::Hamiltonian)?);
                let ht = run_algorithm(&ham, &opts)?;
                if !ht.stabilized {
                    return Err(Error::DegenerateStructure(format!(
                        "the Hamiltonian chain of `{}` does not stabilize",
                        th.name
                    )));
                }
                let known = Arc::new(ham.prepare(ht.sets.last().expect("a stabilized trace has sets"))?);
                Some(gamma_s(&th, &ham, &known)?)
            }
            Err(_) => None,
        };
        for (k, z0) in starts.iter().enumerate() {
            let z = match &beta {
                Some(gs) => beta_point(gs, z0, &[], f64::INFINITY)?,
                None => z0.clone(),
            };
            let traj = flow.trajectory(&lift_to_wbar1(&th, &z)?, horizon, step)?;
            let drift = h0_drift(&th, &traj)?;
            let el = el_residual(&th, &traj, &w0)?;
            verdicts.insert(format!("ic{k}_h0_drift"), drift <= FLOW_TOL);
            verdicts.insert(format!("ic{k}_el_residual"), el <= FLOW_TOL);
            runs.push(json!({
                "beta_applied": beta.is_some(),
                "h0_drift": drift,
                "el_residual": el,
                "holonomy_defect": holonomy_defect(&th, &traj)?,
                "trajectory": traj,
            }));
        }
        json!({ "mode": "unified_final_set", "chain": trace, "runs": runs })
    };
    Ok(Report::new("integrate", inputs, results, verdicts))
}

pub fn check_exterior(trials: usize, seed: u64) -> Result<Report> {
    if trials == 0 {
        return Err(Error::InvalidArgument("--trials must be positive".into()));
    }
    let inputs = json!({ "trials": trials, "seed": seed });
    let suites = run_all(trials, seed)?;
    let verdicts = suites.iter().map(|s| (s.name.clone(), s.passed())).collect();
    Ok(Report::new("check-exterior", inputs, json!({ "suites": suites }), verdicts))
}
