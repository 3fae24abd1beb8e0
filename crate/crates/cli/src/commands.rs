use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use ordmatch::analytics::{distortion_gap_curve, hql_q, rs_q_exact, rsbs_q_exact};
use ordmatch::{
    brute_force_opt, optimal_matching, sample_profile, uf_audit, DistributionSpec, Estimator,
    Instance, MechanismKind, MechanismSpec, RandomStream, Valuations,
};
use rand::Rng;
use serde_json::json;

use crate::config::{Cell, Experiment};
use crate::format::{decimal, quotas};
use crate::CliError;

/// Grid size of the gap curve written by `run --emit-curve`.
pub const EMIT_CURVE_POINTS: usize = 10_000;

/// Oracle agreement tolerance for `optcheck`.
pub const OPTCHECK_TOLERANCE: f64 = 1e-9;

type CsvWriter = csv::Writer<Box<dyn Write>>;

fn open(path: Option<&Path>) -> Result<CsvWriter, CliError> {
    let sink: Box<dyn Write> = match path {
        Some(p) => Box::new(BufWriter::new(File::create(p).map_err(|e| {
            CliError::Usage(format!("{}: cannot create output: {e}", p.display()))
        })?)),
        None => Box::new(BufWriter::new(io::stdout())),
    };
    Ok(csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .flexible(true)
        .from_writer(sink))
}

fn write_err(e: impl std::fmt::Display) -> CliError {
    CliError::Usage(format!("cannot write output: {e}"))
}

/// Single-field `# ...` row; callers keep commas and quotes out of `line`.
fn comment(w: &mut CsvWriter, line: &str) -> Result<(), CliError> {
    debug_assert!(!line.contains([',', '"', '\n']));
    w.write_record([format!("# {line}")]).map_err(write_err)
}

fn finish(mut w: CsvWriter) -> Result<(), CliError> {
    w.flush().map_err(write_err)?;
    let mut inner = w.into_inner().map_err(write_err)?;
    inner.flush().map_err(write_err)
}

fn sibling(output: &Path, suffix: &str) -> PathBuf {
    output.with_extension(suffix)
}

fn mechanism(cell: &Cell) -> &MechanismSpec {
    cell.mechanism.as_ref().expect("run and probs cells carry a mechanism")
}

pub fn run(exp: &Experiment, est: &Estimator) -> Result<(), CliError> {
    if (exp.emit_probs || exp.emit_curve) && exp.output.is_none() {
        return Err(CliError::Usage(
            "emit-probs and emit-curve write next to the output file; set `output` or pass --output".into(),
        ));
    }
    let mut w = open(exp.output.as_deref())?;
    w.write_record([
        "n", "m", "quotas", "mechanism", "distribution", "trials", "seed", "mean_opt", "mean_sw",
        "distortion", "stderr", "benchmark_lb", "gap_ratio",
    ])
    .map_err(write_err)?;
    for cell in &exp.cells {
        let inst = &cell.instance;
        let mech = mechanism(cell);
        let r = est.gap_report(mech, inst, &cell.distribution, exp.trials, exp.seed)?;
        w.write_record([
            inst.agents().to_string(),
            inst.items().to_string(),
            quotas(inst.quotas()),
            mech.label(),
            cell.distribution.label(),
            exp.trials.to_string(),
            exp.seed.to_string(),
            decimal(r.estimate.mean_opt),
            decimal(r.estimate.mean_sw),
            decimal(r.estimate.distortion_estimate),
            decimal(r.estimate.stderr_distortion),
            decimal(r.benchmark),
            decimal(r.ratio),
        ])
        .map_err(write_err)?;
    }
    finish(w)?;

    if let Some(output) = &exp.output {
        if exp.emit_probs {
            probs(exp, est, Some(&sibling(output, "probs.csv")))?;
        }
        if exp.emit_curve {
            curve(EMIT_CURVE_POINTS, Some(&sibling(output, "curve.csv")))?;
        }
    }
    Ok(())
}

/// Closed-form per-item assignment probability, where one is known.
fn exact_marginal(kind: &MechanismKind, inst: &Instance, agent: usize) -> Option<f64> {
    match kind {
        MechanismKind::Rs | MechanismKind::SecretaryRs => rs_q_exact(inst, agent).ok(),
        MechanismKind::Rsbs => Some(rsbs_q_exact(inst)),
        MechanismKind::Hql => Some(hql_q(inst)),
        MechanismKind::SerialDictator { .. } => None,
    }
}

pub fn probs(exp: &Experiment, est: &Estimator, output: Option<&Path>) -> Result<(), CliError> {
    let mut w = open(output)?;
    w.write_record(["agent", "rank", "q_hat", "ci_half_width", "q_exact"])
        .map_err(write_err)?;
    for cell in &exp.cells {
        let inst = &cell.instance;
        let mech = mechanism(cell);
        let r = est.assignment_probs(mech, &cell.distribution, inst, exp.trials, exp.seed)?;
        comment(
            &mut w,
            &format!(
                "n={} m={} quotas={} mechanism={} distribution={} trials={} seed={}",
                inst.agents(),
                inst.items(),
                quotas(inst.quotas()),
                mech.kind.label(),
                cell.distribution.label(),
                exp.trials,
                exp.seed
            ),
        )?;
        for (i, t) in r.cells() {
            let exact = exact_marginal(&mech.kind, inst, i).map(decimal).unwrap_or_default();
            w.write_record([
                i.to_string(),
                t.to_string(),
                decimal(r.q_hat(i, t)),
                decimal(r.wilson_half_width(i, t)),
                exact,
            ])
            .map_err(write_err)?;
        }
    }
    finish(w)
}

pub fn curve(points: usize, output: Option<&Path>) -> Result<(), CliError> {
    if points < 2 {
        return Err(CliError::Usage(format!("--points must be at least 2, got {points}")));
    }
    let mut w = open(output)?;
    w.write_record(["x", "bound"]).map_err(write_err)?;
    let (mut best_x, mut best) = (0.0, f64::NEG_INFINITY);
    for k in 1..=points {
        let x = k as f64 / points as f64;
        let p = distortion_gap_curve(x)?;
        if p.bound > best {
            (best_x, best) = (x, p.bound);
        }
        w.write_record([decimal(x), decimal(p.bound)]).map_err(write_err)?;
    }
    comment(&mut w, &format!("max x={} bound={}", decimal(best_x), decimal(best)))?;
    finish(w)
}

pub fn optcheck(max_items: usize, cases: u64, seed: u64) -> Result<String, CliError> {
    if !(1..=ordmatch::opt::BRUTE_FORCE_MAX_ITEMS).contains(&max_items) {
        return Err(CliError::Usage(format!(
            "--max-m must be between 1 and {}, got {max_items}",
            ordmatch::opt::BRUTE_FORCE_MAX_ITEMS
        )));
    }
    let mut largest = 0.0f64;
    for case in 0..cases {
        let mut rng = RandomStream::new(seed, case);
        let m = rng.random_range(1..=max_items);
        let n = rng.random_range(1..=m);
        let inst = Instance::random_composition(n, m, &mut rng)?;
        let values: Valuations = sample_profile(&DistributionSpec::IidUniform01, &inst, &mut rng)?;
        let fast = optimal_matching(&inst, &values)?.value;
        let slow = brute_force_opt(&inst, &values)?;
        let diff = (fast - slow).abs();
        if diff > OPTCHECK_TOLERANCE {
            let rows: Vec<&[f64]> = values.rows().collect();
            let record = json!({
                "case": case,
                "seed": seed,
                "quotas": inst.quotas(),
                "values": rows,
                "optimal_matching": fast,
                "brute_force_opt": slow,
            });
            return Err(CliError::Assertion(format!("optimal_matching disagrees with brute force: {record}")));
        }
        largest = largest.max(diff);
    }
    Ok(format!(
        "optcheck: {cases} cases with m <= {max_items} (seed {seed}) agree; largest difference {largest:e}"
    ))
}

pub fn ufaudit(exp: &Experiment, alpha: f64) -> Result<(), CliError> {
    if !(0.0..1.0).contains(&alpha) {
        return Err(CliError::Usage(format!("--alpha must lie in [0, 1), got {alpha}")));
    }
    let mut w = open(exp.output.as_deref())?;
    w.write_record([
        "n", "m", "quotas", "distribution", "agent", "bundles", "chi_square", "dof", "p_value", "pass",
    ])
    .map_err(write_err)?;
    let mut rejected = Vec::new();
    for (k, cell) in exp.cells.iter().enumerate() {
        let inst = &cell.instance;
        let mut rng = RandomStream::new(exp.seed, k as u64);
        let report = uf_audit(&cell.distribution, inst, exp.trials, &mut rng)?;
        for (i, a) in report.agents.iter().enumerate() {
            let pass = a.p_value >= alpha;
            if !pass {
                rejected.push(format!("{} agent {i} on {}", cell.distribution.label(), quotas(inst.quotas())));
            }
            w.write_record([
                inst.agents().to_string(),
                inst.items().to_string(),
                quotas(inst.quotas()),
                cell.distribution.label(),
                i.to_string(),
                a.bundles.len().to_string(),
                decimal(a.chi_square),
                a.degrees_of_freedom.to_string(),
                decimal(a.p_value),
                pass.to_string(),
            ])
            .map_err(write_err)?;
        }
    }
    finish(w)?;
    if rejected.is_empty() {
        Ok(())
    } else {
        Err(CliError::Assertion(format!(
            "favorites audit rejected uniformity at alpha={alpha}: {}",
            rejected.join(", ")
        )))
    }
}
