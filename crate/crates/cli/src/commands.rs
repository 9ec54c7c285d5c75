//! The `run`, `sweep` and `replay` verbs.

use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;
use spde_core::{
    member_increments, uniqueness_experiment_with, BrownianIncrements, ExperimentMode,
    ExperimentReport,
};
use tracing::{info, warn};

use crate::artifacts::{ensure_dir, write_blow_up, write_json, write_outcome, write_text, Outcome};
use crate::config::{
    entry_seed, load_config, resolve_seed, with_axis_value, ExperimentConfig, SEED_ENV,
};
use crate::error::{exit, CliError, CliResult};

/// Options shared by every verb.
#[derive(Debug, Clone, Default)]
pub struct CommonOptions {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub figures: bool,
}

const DEFAULT_OUT: &str = "out";

fn resolve(config_path: &Path, opts: &CommonOptions) -> CliResult<(ExperimentConfig, PathBuf)> {
    let mut config = load_config(config_path)?;
    let env = std::env::var(SEED_ENV).ok();
    let (seed, source) = resolve_seed(opts.seed, config.seed, env.as_deref())?;
    info!(seed, ?source, "resolved seed");
    config.seed = Some(seed);
    let out = opts
        .out
        .clone()
        .or_else(|| config.output.as_ref().map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT));
    Ok((config, out))
}

/// Runs the experiment described by `config`; `replayed` supplies member 0's increments.
pub fn execute(
    config: &ExperimentConfig,
    replayed: Option<BrownianIncrements>,
) -> CliResult<Outcome> {
    let setup = config.build_setup()?;
    let mode = config.experiment.mode;
    let first = match (mode, replayed) {
        (ExperimentMode::Perturbation, Some(incs)) => Some(incs),
        (ExperimentMode::Perturbation, None) => Some(member_increments(&setup, 0)?),
        (_, Some(_)) => {
            return Err(CliError::Config(format!(
                "experiment.mode: replay needs the perturbation mode, got {mode:?}"
            )))
        }
        (_, None) => None,
    };
    let (report, member) = uniqueness_experiment_with(mode, &setup, |m| match (&first, m) {
        (Some(incs), 0) => Ok(incs.clone()),
        _ => member_increments(&setup, m),
    })?;
    Ok(Outcome {
        config: config.clone(),
        report,
        member,
        increments: first,
    })
}

fn verdict_code(report: &ExperimentReport) -> u8 {
    if report.pass {
        exit::PASS
    } else {
        exit::VERDICT_FAILURE
    }
}

/// Writes the post-mortem for a blow-up and passes the error on.
fn record_failure(dir: &Path, config: &ExperimentConfig, err: CliError) -> CliError {
    if let CliError::Core(spde_core::Error::BlowUp { step, node, state }) = &err {
        let nodes = spde_core::Grid1D::new(config.grid.half_length, config.grid.n)
            .map(|g| g.nodes())
            .unwrap_or_default();
        if let Err(e) = write_blow_up(dir, config.time.dt, *step, *node, state, &nodes) {
            warn!("could not record the blow-up state: {e}");
        }
    }
    err
}

fn finish(
    dir: &Path,
    result: CliResult<Outcome>,
    config: &ExperimentConfig,
    figures: bool,
) -> CliResult<u8> {
    let outcome = result.map_err(|e| record_failure(dir, config, e))?;
    write_outcome(dir, &outcome, figures)?;
    report_summary(&outcome.report);
    Ok(verdict_code(&outcome.report))
}

fn report_summary(report: &ExperimentReport) {
    info!(
        mode = ?report.mode,
        model = %report.model,
        members = report.members,
        pass = report.pass,
        "experiment finished"
    );
}

pub fn run(config_path: &Path, opts: &CommonOptions) -> CliResult<u8> {
    let (config, out) = resolve(config_path, opts)?;
    let result = execute(&config, None);
    finish(&out, result, &config, opts.figures)
}

pub fn replay(increments_path: &Path, config_path: &Path, opts: &CommonOptions) -> CliResult<u8> {
    let (mut config, out) = resolve(config_path, opts)?;
    let file = fs::File::open(increments_path).map_err(|e| CliError::io(increments_path, e))?;
    let incs = BrownianIncrements::read_from(std::io::BufReader::new(file))?;
    let n_steps = config.n_steps()?;
    let dt = config.time.dt;
    if incs.n_modes() != config.noise.n_modes
        || incs.n_steps() != n_steps
        || (incs.dt() - dt).abs() > 1e-12 * dt
    {
        return Err(CliError::Config(format!(
            "increments header (N = {}, n_steps = {}, dt = {}) does not match the config (N = {}, n_steps = {}, dt = {})",
            incs.n_modes(),
            incs.n_steps(),
            incs.dt(),
            config.noise.n_modes,
            n_steps,
            dt
        )));
    }
    if config.experiment.ensemble != 1 {
        warn!(
            ensemble = config.experiment.ensemble,
            "a replay covers one path; running member 0 only"
        );
        config.experiment.ensemble = 1;
    }
    let result = execute(&config, Some(incs));
    finish(&out, result, &config, opts.figures)
}

/// One row of the sweep table.
#[derive(Debug, Clone, Serialize)]
pub struct SweepEntry {
    pub index: usize,
    pub value: f64,
    pub seed: u64,
    pub status: &'static str,
    pub pass: bool,
    pub constant: Option<f64>,
    /// Mean final `g` (perturbation), finest mean final `g` (refinement) or largest
    /// oracle error (heat oracle).
    pub metric: Option<f64>,
    pub pathwise_margin: Option<f64>,
    pub ensemble_margin: Option<f64>,
    pub ladder_min_rate: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepReport {
    pub axis: String,
    pub master_seed: u64,
    pub entries: Vec<SweepEntry>,
    /// Least-squares slope of `log metric` against `log value`.
    pub fitted_order: Option<f64>,
    pub pass: bool,
}

fn metric(report: &ExperimentReport) -> Option<f64> {
    match report.mode {
        ExperimentMode::Perturbation => report
            .gronwall
            .as_ref()?
            .ensemble
            .iter()
            .find(|e| e.level.is_none())
            .and_then(|e| e.mean_g.last().copied()),
        ExperimentMode::Refinement => report.refinement.as_ref()?.mean_g_final.last().copied(),
        ExperimentMode::HeatOracle => report.oracle.as_ref().map(|o| o.max_l2_error),
    }
}

fn summarize(index: usize, value: f64, seed: u64, result: &CliResult<Outcome>) -> SweepEntry {
    let mut entry = SweepEntry {
        index,
        value,
        seed,
        status: "error",
        pass: false,
        constant: None,
        metric: None,
        pathwise_margin: None,
        ensemble_margin: None,
        ladder_min_rate: None,
    };
    match result {
        Ok(o) => {
            let r = &o.report;
            entry.status = if r.pass { "pass" } else { "fail" };
            entry.pass = r.pass;
            entry.constant = Some(r.constants.c);
            entry.metric = metric(r);
            if let Some(g) = &r.gronwall {
                entry.pathwise_margin = g.pathwise.iter().map(|p| p.margins.at_c).reduce(f64::min);
                entry.ensemble_margin = g.ensemble.iter().map(|e| e.margins.at_c).reduce(f64::min);
            }
            entry.ladder_min_rate = r.ladder.as_ref().and_then(|l| l.min_rate);
        }
        Err(CliError::Core(spde_core::Error::BlowUp { .. })) => entry.status = "blow_up",
        Err(_) => {}
    }
    entry
}

fn fitted_order(entries: &[SweepEntry]) -> Option<f64> {
    let pts: Vec<(f64, f64)> = entries
        .iter()
        .filter_map(|e| match e.metric {
            Some(m) if m > 0.0 && e.value > 0.0 => Some((e.value.ln(), m.ln())),
            _ => None,
        })
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:e}")).unwrap_or_default()
}

fn sweep_csv(entries: &[SweepEntry]) -> String {
    let mut s = String::from(
        "index,value,seed,status,pass,C,metric,pathwise_margin,ensemble_margin,ladder_min_rate\n",
    );
    for e in entries {
        s.push_str(&format!(
            "{},{:e},{},{},{},{},{},{},{},{}\n",
            e.index,
            e.value,
            e.seed,
            e.status,
            e.pass,
            opt(e.constant),
            opt(e.metric),
            opt(e.pathwise_margin),
            opt(e.ensemble_margin),
            opt(e.ladder_min_rate)
        ));
    }
    s
}

pub fn sweep(
    config_path: &Path,
    axis: &str,
    values: &[f64],
    opts: &CommonOptions,
) -> CliResult<u8> {
    if values.is_empty() {
        return Err(CliError::Config(format!(
            "sweep axis {axis}: empty value list"
        )));
    }
    let (base, out) = resolve(config_path, opts)?;
    let master = base.seed.unwrap_or(0);
    let configs: Vec<ExperimentConfig> = values
        .iter()
        .enumerate()
        .map(|(i, &v)| {
            let mut c = with_axis_value(&base, axis, v)?;
            c.seed = Some(entry_seed(master, i));
            c.build_setup()?;
            Ok(c)
        })
        .collect::<CliResult<_>>()?;

    let results: Vec<CliResult<Outcome>> = configs.par_iter().map(|c| execute(c, None)).collect();

    ensure_dir(&out)?;
    let mut entries = Vec::with_capacity(results.len());
    let mut code = exit::PASS;
    for (i, (config, result)) in configs.iter().zip(results).enumerate() {
        let dir = out.join(format!("entry-{i:03}"));
        let entry = summarize(i, values[i], config.seed.unwrap_or(0), &result);
        match result {
            Ok(outcome) => {
                write_outcome(&dir, &outcome, opts.figures)?;
                if !outcome.report.pass {
                    code = code.max(exit::VERDICT_FAILURE);
                }
            }
            Err(e) => {
                let e = record_failure(&dir, config, e);
                warn!(entry = i, "sweep entry failed: {e}");
                code = code.max(e.exit_code());
            }
        }
        entries.push(entry);
    }
    let report = SweepReport {
        axis: axis.to_string(),
        master_seed: master,
        fitted_order: fitted_order(&entries),
        pass: entries.iter().all(|e| e.pass),
        entries,
    };
    write_text(&out.join("sweep.csv"), &sweep_csv(&report.entries))?;
    write_json(&out.join("sweep-report.json"), &report)?;
    Ok(code)
}
