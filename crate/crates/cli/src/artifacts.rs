//! Everything a run leaves on disk. All writes go through here, in a fixed order,
//! and nothing time- or host-dependent is recorded.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use spde_core::{BrownianIncrements, ExperimentReport, MemberOutcome, Trajectory};

use crate::config::ExperimentConfig;
use crate::error::{CliError, CliResult};
use crate::svg::{line_chart, Axes, Series};

/// Result of one experiment, ready to be written.
#[derive(Debug, Clone)]
pub struct Outcome {
    pub config: ExperimentConfig,
    pub report: ExperimentReport,
    pub member: Option<MemberOutcome>,
    pub increments: Option<BrownianIncrements>,
}

fn create(path: &Path) -> CliResult<BufWriter<fs::File>> {
    fs::File::create(path)
        .map(BufWriter::new)
        .map_err(|e| CliError::io(path, e))
}

pub fn write_text(path: &Path, text: &str) -> CliResult<()> {
    fs::write(path, text).map_err(|e| CliError::io(path, e))
}

fn finish(mut w: BufWriter<fs::File>, path: &Path) -> CliResult<()> {
    w.flush().map_err(|e| CliError::io(path, e))
}

fn with_file(
    path: &Path,
    body: impl FnOnce(&mut BufWriter<fs::File>) -> std::io::Result<()>,
) -> CliResult<()> {
    let mut w = create(path)?;
    body(&mut w).map_err(|e| CliError::io(path, e))?;
    finish(w, path)
}

fn core_io(path: &Path, r: spde_core::Result<()>) -> CliResult<()> {
    r.map_err(|e| match e {
        spde_core::Error::Io(io) => CliError::io(path, io),
        other => other.into(),
    })
}

pub fn ensure_dir(dir: &Path) -> CliResult<()> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

pub fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let mut s = serde_json::to_string_pretty(value).expect("report types serialize");
    s.push('\n');
    write_text(path, &s)
}

fn write_trajectory(dir: &Path, name: &str, traj: &Trajectory) -> CliResult<()> {
    let csv = dir.join(format!("{name}.csv"));
    let mut w = create(&csv)?;
    core_io(&csv, traj.write_csv(&mut w))?;
    finish(w, &csv)?;
    let bin = dir.join(format!("{name}.bin"));
    let mut w = create(&bin)?;
    core_io(&bin, traj.write_binary(&mut w))?;
    finish(w, &bin)
}

pub fn write_outcome(dir: &Path, outcome: &Outcome, figures: bool) -> CliResult<()> {
    ensure_dir(dir)?;
    write_text(&dir.join("config-echo.json"), &outcome.config.echo())?;
    write_json(&dir.join("report.json"), &outcome.report)?;
    if let Some(incs) = &outcome.increments {
        let path = dir.join("increments.bin");
        let mut w = create(&path)?;
        core_io(&path, incs.write_to(&mut w))?;
        finish(w, &path)?;
    }
    if let Some(m) = &outcome.member {
        write_trajectory(dir, "traj1", &m.traj1)?;
        write_trajectory(dir, "traj2", &m.traj2)?;
    }
    write_tables(dir, &outcome.report)?;
    if figures {
        write_figures(dir, outcome)?;
    }
    Ok(())
}

fn write_tables(dir: &Path, report: &ExperimentReport) -> CliResult<()> {
    if let Some(p) = &report.paths {
        let ensemble = report
            .gronwall
            .as_ref()
            .and_then(|g| g.ensemble.iter().find(|e| e.level.is_none()))
            .filter(|e| e.times.len() == p.t.len());
        with_file(&dir.join("ledger.csv"), |w| {
            write!(w, "t,g,M,dissipation,integral_g")?;
            if ensemble.is_some() {
                write!(w, ",mean_g,std_error,envelope")?;
            }
            writeln!(w)?;
            for k in 0..p.t.len() {
                write!(
                    w,
                    "{:e},{:e},{:e},{:e},{:e}",
                    p.t[k], p.g[k], p.martingale[k], p.dissipation[k], p.integral_g[k]
                )?;
                if let Some(e) = ensemble {
                    write!(
                        w,
                        ",{:e},{:e},{:e}",
                        e.mean_g[k], e.std_error[k], e.envelope[k]
                    )?;
                }
                writeln!(w)?;
            }
            Ok(())
        })?;
    }
    if let Some(l) = &report.ladder {
        with_file(&dir.join("ladder.csv"), |w| {
            write!(w, "epsilon,energy_gap")?;
            for q in &l.quantities {
                write!(w, ",\"{}\"", q.name)?;
            }
            writeln!(w)?;
            for (j, e) in l.epsilons.iter().enumerate() {
                write!(w, "{e:e},{:e}", l.energy_gap[j])?;
                for q in &l.quantities {
                    write!(w, ",{:e}", q.values[j])?;
                }
                writeln!(w)?;
            }
            Ok(())
        })?;
    }
    if let Some(r) = &report.refinement {
        with_file(&dir.join("refinement.csv"), |w| {
            writeln!(w, "dt_coarse,dt_fine,mean_g_final,ratio,order")?;
            for (k, g) in r.mean_g_final.iter().enumerate() {
                write!(w, "{:e},{:e},{g:e}", r.dts[k], r.dts[k + 1])?;
                match (r.ratios.get(k), r.orders.get(k)) {
                    (Some(ratio), Some(order)) => writeln!(w, ",{ratio:e},{order:e}")?,
                    _ => writeln!(w, ",,")?,
                }
            }
            Ok(())
        })?;
    }
    if let Some(o) = &report.oracle {
        with_file(&dir.join("oracle.csv"), |w| {
            writeln!(w, "t,l2_error")?;
            for (t, e) in o.times.iter().zip(&o.l2_error) {
                writeln!(w, "{t:e},{e:e}")?;
            }
            Ok(())
        })?;
    }
    Ok(())
}

fn write_figures(dir: &Path, outcome: &Outcome) -> CliResult<()> {
    let report = &outcome.report;
    if let (Some(p), Some(g)) = (&report.paths, &report.gronwall) {
        let mut series = vec![Series {
            name: "g (member 0)".into(),
            x: &p.t,
            y: p.g.clone(),
            dashed: false,
        }];
        if let Some(e) = g.ensemble.iter().find(|e| e.level.is_none()) {
            series.push(Series {
                name: "mean g".into(),
                x: &e.times,
                y: e.mean_g.clone(),
                dashed: false,
            });
            series.push(Series {
                name: format!("exp(Ct) envelope, C = {:.4}", g.constant),
                x: &e.times,
                y: e.envelope.clone(),
                dashed: true,
            });
        }
        let svg = line_chart(
            "H^-1 distance of the pair",
            "t",
            "g(t)",
            &series,
            Axes::default(),
        );
        write_text(&dir.join("energy.svg"), &svg)?;
    }
    if let Some(m) = &outcome.member {
        let nodes = m.traj1.grid().nodes();
        let count = m.traj1.len();
        let picks: Vec<usize> = if count <= 6 {
            (0..count).collect()
        } else {
            (0..6).map(|i| i * (count - 1) / 5).collect()
        };
        let spread = (0..count)
            .map(|k| m.traj1.snapshot(k).sup_norm())
            .fold(0.0, f64::max)
            .max(1e-12);
        let series: Vec<Series> = picks
            .iter()
            .enumerate()
            .map(|(row, &k)| Series {
                name: format!("t = {:.4}", m.traj1.times()[k]),
                x: &nodes,
                y: m.traj1
                    .values(k)
                    .iter()
                    .map(|v| v + 0.5 * spread * row as f64)
                    .collect(),
                dashed: false,
            })
            .collect();
        let svg = line_chart(
            "Snapshots of the first solution (offset)",
            "xi",
            "z",
            &series,
            Axes::default(),
        );
        write_text(&dir.join("waterfall.svg"), &svg)?;
    }
    if let Some(l) = &report.ladder {
        let mut series: Vec<Series> = l
            .quantities
            .iter()
            .map(|q| Series {
                name: q.name.clone(),
                x: &l.epsilons,
                y: q.values.clone(),
                dashed: false,
            })
            .collect();
        series.push(Series {
            name: "max_t |g_eps - g|".into(),
            x: &l.epsilons,
            y: l.energy_gap.clone(),
            dashed: true,
        });
        let axes = Axes {
            log_x: true,
            log_y: true,
        };
        let svg = line_chart("Mollifier ladder", "epsilon", "discrepancy", &series, axes);
        write_text(&dir.join("ladder.svg"), &svg)?;
    }
    Ok(())
}

/// Post-mortem of a non-finite state: metadata as JSON, the state as CSV.
pub fn write_blow_up(
    dir: &Path,
    dt: f64,
    step: usize,
    node: usize,
    state: &[f64],
    nodes: &[f64],
) -> CliResult<()> {
    ensure_dir(dir)?;
    write_json(
        &dir.join("blowup.json"),
        &serde_json::json!({ "step": step, "t": dt * step as f64, "node": node }),
    )?;
    with_file(&dir.join("blowup-state.csv"), |w| {
        writeln!(w, "xi,value")?;
        for (x, v) in nodes.iter().zip(state) {
            writeln!(w, "{x:e},{v:e}")?;
        }
        Ok(())
    })
}
