//! Subcommand implementations.

use std::fs;
use std::path::{Path, PathBuf};

use serde_json::json;

use rds_core::bifurcate::sweep;
use rds_core::escape::{escape_time_mc, quasi_stationary_of};
use rds_core::kernel::kernel_at;
use rds_core::model::RandomMap;
use rds_core::represent::{circle_diffeo_condition, represent_1d, tv_distance, MapKernel, QuadraticNoiseKernel};
use rds_core::rotation::rotation_sweep;
use rds_core::spectral::{eigen, stationary_densities};
use rds_core::stationary::{minimal_invariant_sets, support_from_density, SupportMethod};
use rds_core::transfer::{build_ulam, build_windowed, DEFAULT_QUADRATURE};
use rds_core::{Grid, RandomMap1D, Result};

use crate::config::{KernelChoice, Params, RunConfig};
use crate::output::{density_script, opt_real, real, rotation_script, sibling, sweep_script, Table, Timer};

/// Artifacts and diagnostics of a finished run.
#[derive(Debug, Default)]
pub struct Outcome {
    pub outputs: Vec<PathBuf>,
    pub warnings: Vec<String>,
    pub summary: serde_json::Value,
}

impl Outcome {
    fn table(&mut self, t: &Table, path: &Path) -> Result<()> {
        t.write(path).map_err(io_error(path))?;
        self.outputs.push(path.to_path_buf());
        Ok(())
    }

    fn script(&mut self, text: String, path: PathBuf) -> Result<()> {
        fs::write(&path, text).map_err(io_error(&path))?;
        self.outputs.push(path);
        Ok(())
    }
}

fn io_error(path: &Path) -> impl Fn(std::io::Error) -> rds_core::Error + '_ {
    move |e| rds_core::Error::Precondition(format!("cannot write {}: {e}", path.display()))
}

fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect()
}

/// Executes a validated run, writing every CSV and plot script.
pub fn execute(cfg: &RunConfig, timer: &mut Timer) -> Result<Outcome> {
    let mut out = Outcome {
        summary: json!({}),
        ..Outcome::default()
    };
    let map = &cfg.map;
    match &cfg.params {
        Params::Density { grid, k, tol } => density(map, *grid, *k, *tol, &cfg.out, timer, &mut out)?,
        Params::Spectrum { grid, k, tol } => spectrum(map, *grid, *k, *tol, &cfg.out, timer, &mut out)?,
        Params::Support { grid, method, tau } => support(map, *grid, *method, *tau, &cfg.out, timer, &mut out)?,
        Params::Kernel { x, points } => kernel(map, *x, *points, &cfg.out, timer, &mut out)?,
        Params::Escape {
            grid,
            window,
            mc,
            qs_start,
            max_steps,
        } => {
            let g = Grid::new(map.space(), *grid)?;
            let m = build_windowed(map, &g, window, DEFAULT_QUADRATURE)?;
            out.warnings.extend(m.notes.iter().cloned());
            timer.lap("matrix");
            let mut report = quasi_stationary_of(&m)?;
            timer.lap("quasi-stationary");
            if *mc > 0 {
                escape_time_mc(map, &m, &mut report, *qs_start, *mc, *max_steps, cfg.seed)?;
                timer.lap("monte-carlo");
            }
            out.warnings.extend(report.notes.iter().cloned());
            let mut t = Table::new(&["alpha", "T_spectral", "mc_mean", "mc_se", "censored"]);
            t.push(vec![
                real(report.alpha),
                real(report.expected_escape_spectral),
                opt_real(report.mc_mean),
                opt_real(report.mc_std_error),
                report.censored.map(|c| c.to_string()).unwrap_or_default(),
            ]);
            out.table(&t, &cfg.out)?;
            out.summary = json!({
                "window": report.window.iter().map(|w| [w.0, w.1]).collect::<Vec<_>>(),
                "absorbing": report.absorbing,
                "escape_rate": report.escape_rate,
                "residual": report.residual,
            });
        }
        Params::Rotation {
            a_min,
            a_max,
            steps,
            grid,
            n_mc,
        } => {
            let g = Grid::new(map.space(), *grid)?;
            let a = linspace(*a_min, *a_max, *steps);
            let est = rotation_sweep(map, &a, &g, *n_mc, cfg.seed)?;
            timer.lap("rotation");
            let mut t = Table::new(&["a", "rho_mc", "rho_spectral"]);
            for e in &est {
                t.push(vec![real(e.a), real(e.rho_mc), real(e.rho_spectral)]);
            }
            out.table(&t, &cfg.out)?;
            out.script(rotation_script(&cfg.out), sibling(&cfg.out, "plt"))?;
            let worst = est.iter().map(|e| e.discrepancy).fold(0.0, f64::max);
            out.summary = json!({
                "locked_points": est.iter().filter(|e| e.locked).count(),
                "max_discrepancy": worst,
            });
        }
        Params::Sweep { a_min, a_max, opts, events } => {
            let report = sweep(map, *a_min, *a_max, opts)?;
            timer.lap("sweep");
            out.warnings.extend(report.notes.iter().cloned());
            let mut t = Table::new(&["a", "m", "n_components", "hausdorff_prev", "supdist_prev", "eta"]);
            for p in &report.points {
                t.push(vec![
                    real(p.a),
                    p.m.to_string(),
                    p.n_components().to_string(),
                    opt_real(p.hausdorff_prev),
                    opt_real(p.supdist_prev),
                    real(p.eta),
                ]);
            }
            out.table(&t, &cfg.out)?;
            let mut e = Table::new(&["a_star", "bracket", "type", "label", "evidence"]);
            for ev in &report.events {
                e.push(vec![
                    real(ev.a_star),
                    real(ev.bracket),
                    ev.kind.as_str().to_string(),
                    ev.label.map(|l| l.as_str().to_string()).unwrap_or_default(),
                    ev.evidence_text(),
                ]);
            }
            out.table(&e, events)?;
            let event_a: Vec<f64> = report.events.iter().map(|e| e.a_star).collect();
            out.script(sweep_script(&cfg.out, events, &event_a), sibling(&cfg.out, "plt"))?;
            out.summary = json!({ "events": report.events.len() });
        }
        Params::Represent {
            kernel,
            nu,
            probe_x,
            mu_points,
            z_points,
        } => {
            let mu = linspace(-1.0, 1.0, *mu_points);
            let mut t = Table::new(&["mu", "f_mu_x"]);
            match kernel {
                KernelChoice::Map => {
                    let rep = represent_1d(MapKernel::new(*map), *nu)?;
                    let fiber = rep.fiber(*probe_x)?;
                    for &m in &mu {
                        t.push(vec![real(m), real(rep.eval_on(&fiber, m))]);
                    }
                    let tv = tv_distance(&rep, *probe_x, 64)?;
                    let diffeo = if map.space().is_circle() {
                        let c = &circle_diffeo_condition(&rep.kernel, &[*probe_x], *z_points)[0];
                        json!({"holds": c.holds, "witness": c.witness, "min_value": c.min_value})
                    } else {
                        serde_json::Value::Null
                    };
                    out.summary = json!({ "tv_distance": tv, "circle_diffeo": diffeo });
                }
                KernelChoice::Quadratic => {
                    let rep = represent_1d(QuadraticNoiseKernel, *nu)?;
                    let fiber = rep.fiber(*probe_x)?;
                    for &m in &mu {
                        t.push(vec![real(m), real(rep.eval_on(&fiber, m))]);
                    }
                }
            }
            timer.lap("represent");
            out.table(&t, &cfg.out)?;
        }
        Params::Matrix { grid, window } => {
            let g = Grid::new(map.space(), *grid)?;
            let m = match window {
                Some(w) => build_windowed(map, &g, w, DEFAULT_QUADRATURE)?,
                None => build_ulam(map, &g, DEFAULT_QUADRATURE)?,
            };
            out.warnings.extend(m.notes.iter().cloned());
            timer.lap("matrix");
            let mut t = Table::new(&["n_cells"]);
            t.push(vec![m.dim().to_string()]);
            for row in m.to_dense() {
                t.push(row.into_iter().map(real).collect());
            }
            out.table(&t, &cfg.out)?;
            out.summary = json!({ "dim": m.dim(), "stored_entries": m.stored_entries() });
        }
    }
    timer.lap("write");
    Ok(out)
}

fn densities(map: &RandomMap1D, grid: usize, k: usize, tol: f64, timer: &mut Timer, out: &mut Outcome) -> Result<(Grid, Vec<Vec<f64>>, f64)> {
    let g = Grid::new(map.space(), grid)?;
    let m = build_ulam(map, &g, DEFAULT_QUADRATURE)?;
    out.warnings.extend(m.notes.iter().cloned());
    timer.lap("matrix");
    let s = eigen(&m, k.min(m.dim()), tol)?;
    timer.lap("eigen");
    let d = stationary_densities(&s)?;
    Ok((g, d, s.eta))
}

fn density(map: &RandomMap1D, grid: usize, k: usize, tol: f64, path: &Path, timer: &mut Timer, out: &mut Outcome) -> Result<()> {
    let (g, d, eta) = densities(map, grid, k, tol, timer, out)?;
    if d.len() > 1 {
        out.warnings.push(format!("{} stationary densities; phi is their mean", d.len()));
    }
    let mut t = Table::new(&["x", "phi"]);
    for i in 0..g.n_cells {
        let phi = d.iter().map(|v| v[i]).sum::<f64>() / d.len() as f64;
        t.push(vec![real(g.center(i)), real(phi)]);
    }
    out.table(&t, path)?;
    out.script(density_script(path), sibling(path, "plt"))?;
    out.summary = json!({ "m": d.len(), "eta": eta });
    Ok(())
}

fn spectrum(map: &RandomMap1D, grid: usize, k: usize, tol: f64, path: &Path, timer: &mut Timer, out: &mut Outcome) -> Result<()> {
    let g = Grid::new(map.space(), grid)?;
    let m = build_ulam(map, &g, DEFAULT_QUADRATURE)?;
    out.warnings.extend(m.notes.iter().cloned());
    timer.lap("matrix");
    let s = eigen(&m, k.min(m.dim()), tol)?;
    timer.lap("eigen");
    let mut t = Table::new(&["re", "im", "modulus", "group"]);
    for (l, grp) in s.eigenvalues.iter().zip(&s.groups) {
        t.push(vec![real(l.re), real(l.im), real(l.norm()), grp.as_str().to_string()]);
    }
    out.table(&t, path)?;
    out.summary = json!({ "unit_multiplicity": s.unit_multiplicity, "eta": s.eta, "matvecs": s.matvecs });
    Ok(())
}

fn support(map: &RandomMap1D, grid: usize, method: SupportMethod, tau: f64, path: &Path, timer: &mut Timer, out: &mut Outcome) -> Result<()> {
    let sets = match method {
        SupportMethod::DensityThreshold => {
            let (g, d, _) = densities(map, grid, 4, 1e-10, timer, out)?;
            d.iter().map(|phi| support_from_density(&g, phi, tau)).collect::<Result<Vec<_>>>()?
        }
        SupportMethod::SetValued => {
            let g = Grid::new(map.space(), grid)?;
            minimal_invariant_sets(map, &g)
        }
    };
    timer.lap("support");
    let mut t = Table::new(&["component", "lo", "hi"]);
    let mut n = 0;
    for s in &sets {
        for &(lo, hi) in &s.components {
            t.push(vec![n.to_string(), real(lo), real(hi)]);
            n += 1;
        }
    }
    out.table(&t, path)?;
    out.summary = json!({ "method": method.as_str(), "measures": sets.len(), "components": n });
    Ok(())
}

fn kernel(map: &RandomMap1D, x: f64, points: usize, path: &Path, timer: &mut Timer, out: &mut Outcome) -> Result<()> {
    let slice = kernel_at(map, x)?;
    let (lo, hi) = slice.image;
    let space = map.space();
    let mut rows: Vec<(f64, f64)> = linspace(lo, hi, points)
        .into_iter()
        .map(|y| {
            let y = if space.is_circle() { space.wrap(y) } else { y };
            (y, slice.density(y))
        })
        .collect();
    rows.sort_by(|a, b| a.0.total_cmp(&b.0));
    timer.lap("kernel");
    let mut t = Table::new(&["y", "density"]);
    for (y, k) in rows {
        t.push(vec![real(y), real(k)]);
    }
    out.table(&t, path)?;
    out.summary = json!({ "support": slice.support.iter().map(|s| [s.0, s.1]).collect::<Vec<_>>() });
    Ok(())
}
