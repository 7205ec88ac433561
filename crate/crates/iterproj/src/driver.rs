//! Run orchestration behind the command line: single runs with their output
//! artifacts, mesh-refinement and parameter-sweep studies, normal-mode
//! constant tables, and the spectrum report with its predicted-versus-
//! measured convergence-rate cross-check.

use std::path::PathBuf;

use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::march::{run_simulation, MarchOutcome, SimulationSetup};
use crate::modes::{
    build_schur_complement, iteration_spectrum, normal_mode_constant, uzawa_constant,
    SpectrumReport,
};
use crate::output::{
    csv_header, iterations_csv, steps_csv, summary_csv, vtk_snapshot, write_atomic,
};
use crate::projector::{ConvectionMode, SolverParams};

/// A finished run plus the files it produced.
pub struct RunArtifacts {
    pub outcome: MarchOutcome,
    pub files: Vec<PathBuf>,
}

/// Runs one configuration and writes the per-step CSV, the per-pass CSV,
/// the run summary, and a VTK snapshot of the final fields into the
/// configured output directory.
pub fn cmd_run(cfg: &RunConfig) -> Result<RunArtifacts> {
    cfg.validate()?;
    let problem = cfg.problem()?;
    let params = cfg.solver_params()?;
    let mcfg = cfg.march_config();
    let setup = SimulationSetup::new(&problem, cfg.n)?;
    let outcome = run_simulation(&setup, &problem, &params, &mcfg, |_, rec| {
        log::debug!(
            "step {} t={:.6e} iterations={} dp_max={:.3e}",
            rec.n,
            rec.t,
            rec.iterations,
            rec.dp_max
        );
    })?;

    std::fs::create_dir_all(&cfg.out_dir)?;
    let with_errors = problem.has_exact();
    let mut files = Vec::new();
    for (name, content) in [
        ("steps.csv", steps_csv(&outcome.records, with_errors)),
        ("iterations.csv", iterations_csv(&outcome.records)),
        ("summary.csv", summary_csv(&outcome, with_errors)),
        (
            "final.vtk",
            vtk_snapshot(
                &setup.mesh,
                &outcome.state.u_n,
                &outcome.state.p_n,
                &format!("{} N={} t={:.6}", cfg.problem, cfg.n, outcome.state.t),
            ),
        ),
    ] {
        let path = cfg.out_dir.join(name);
        write_atomic(&path, content.as_bytes())?;
        files.push(path);
    }
    Ok(RunArtifacts { outcome, files })
}

/// Least-squares slope of `ys` against `xs`.
fn lsq_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let xm = xs.iter().sum::<f64>() / n;
    let ym = ys.iter().sum::<f64>() / n;
    let mut num = 0.0;
    let mut den = 0.0;
    for (x, y) in xs.iter().zip(ys.iter()) {
        num += (x - xm) * (y - ym);
        den += (x - xm) * (x - xm);
    }
    num / den
}

/// One resolution of a refinement study.
#[derive(Debug)]
pub struct OrderRow {
    pub n: usize,
    pub h: f64,
    pub err_u_l2: f64,
    pub err_u_h1: f64,
    pub err_p_l2: f64,
    pub avg_iterations: f64,
    /// Observed rates against the previous (coarser) row.
    pub rate_u_h1: Option<f64>,
    pub rate_p_l2: Option<f64>,
}

#[derive(Debug)]
pub struct OrderStudy {
    pub rows: Vec<OrderRow>,
    /// Least-squares rates across every resolution.
    pub lsq_rate_u_l2: f64,
    pub lsq_rate_u_h1: f64,
    pub lsq_rate_p_l2: f64,
}

/// Refinement study: runs the configuration on each resolution and reports
/// final-time errors with observed convergence rates. Needs an exact
/// solution and at least two meshes.
pub fn cmd_study_order(cfg: &RunConfig, ns: &[usize]) -> Result<OrderStudy> {
    if ns.len() < 2 {
        return Err(Error::Config(
            "an order study needs at least two mesh resolutions".into(),
        ));
    }
    let problem = cfg.problem()?;
    if !problem.has_exact() {
        return Err(Error::Config(format!(
            "problem '{}' has no exact solution to measure errors against",
            cfg.problem
        )));
    }
    let params = cfg.solver_params()?;
    let mcfg = cfg.march_config();
    let mut rows: Vec<OrderRow> = Vec::with_capacity(ns.len());
    for &n in ns {
        let setup = SimulationSetup::new(&problem, n)?;
        let out = run_simulation(&setup, &problem, &params, &mcfg, |_, _| {})?;
        let last = out.records.last().expect("at least two steps");
        let errs = last.errors.expect("errors requested");
        let steps = out.records.len() as f64;
        let avg = out.records.iter().map(|r| r.iterations).sum::<usize>() as f64 / steps;
        let h = 1.0 / n as f64;
        let rate = |prev: f64, cur: f64, h_prev: f64| (cur / prev).ln() / (h / h_prev).ln();
        let (rate_u_h1, rate_p_l2) = match rows.last() {
            Some(p) => (
                Some(rate(p.err_u_h1, errs.u_h1, p.h)),
                Some(rate(p.err_p_l2, errs.p_l2, p.h)),
            ),
            None => (None, None),
        };
        rows.push(OrderRow {
            n,
            h,
            err_u_l2: errs.u_l2,
            err_u_h1: errs.u_h1,
            err_p_l2: errs.p_l2,
            avg_iterations: avg,
            rate_u_h1,
            rate_p_l2,
        });
    }
    let log_h: Vec<f64> = rows.iter().map(|r| r.h.ln()).collect();
    let slope = |pick: fn(&OrderRow) -> f64| {
        let ys: Vec<f64> = rows.iter().map(|r| pick(r).ln()).collect();
        lsq_slope(&log_h, &ys)
    };
    Ok(OrderStudy {
        lsq_rate_u_l2: slope(|r| r.err_u_l2),
        lsq_rate_u_h1: slope(|r| r.err_u_h1),
        lsq_rate_p_l2: slope(|r| r.err_p_l2),
        rows,
    })
}

pub fn order_csv(study: &OrderStudy) -> String {
    let mut s = csv_header("order");
    s.push_str("n,h,err_u_l2,err_u_h1,err_p_l2,avg_iterations,rate_u_h1,rate_p_l2\n");
    for r in &study.rows {
        s.push_str(&format!(
            "{},{:.6e},{:.8e},{:.8e},{:.8e},{:.3},{},{}\n",
            r.n,
            r.h,
            r.err_u_l2,
            r.err_u_h1,
            r.err_p_l2,
            r.avg_iterations,
            r.rate_u_h1.map(|v| format!("{v:.4}")).unwrap_or_default(),
            r.rate_p_l2.map(|v| format!("{v:.4}")).unwrap_or_default(),
        ));
    }
    s.push_str(&format!(
        "# least-squares rates: u_l2 {:.4}  u_h1 {:.4}  p_l2 {:.4}\n",
        study.lsq_rate_u_l2, study.lsq_rate_u_h1, study.lsq_rate_p_l2
    ));
    s
}

pub struct SweepCell {
    pub alpha: f64,
    pub rho: f64,
    pub avg_iterations: f64,
    pub all_converged: bool,
}

pub struct SweepStudy {
    pub cells: Vec<SweepCell>,
}

/// Parameter sweep: average pressure-iteration count per step over an
/// (alpha, rho/nu) grid, sharing one mesh and matrix setup.
pub fn cmd_study_sweep(
    cfg: &RunConfig,
    alphas: &[f64],
    rho_over_nu: &[f64],
) -> Result<SweepStudy> {
    let problem = cfg.problem()?;
    let base = cfg.solver_params()?;
    let mcfg = cfg.march_config();
    let setup = SimulationSetup::new(&problem, cfg.n)?;
    let mut cells = Vec::with_capacity(alphas.len() * rho_over_nu.len());
    for &alpha in alphas {
        for &mult in rho_over_nu {
            let mut params = base.clone();
            params.alpha = alpha;
            params.rho = mult * params.nu;
            params.validate()?;
            let out = run_simulation(&setup, &problem, &params, &mcfg, |_, _| {})?;
            let steps = out.records.len() as f64;
            let avg = out.records.iter().map(|r| r.iterations).sum::<usize>() as f64 / steps;
            cells.push(SweepCell {
                alpha,
                rho: params.rho,
                avg_iterations: avg,
                all_converged: out.records.iter().all(|r| r.converged),
            });
        }
    }
    Ok(SweepStudy { cells })
}

pub fn sweep_csv(study: &SweepStudy) -> String {
    let mut s = csv_header("sweep");
    s.push_str("alpha,rho,avg_iterations,all_converged\n");
    for c in &study.cells {
        s.push_str(&format!(
            "{},{},{:.3},{}\n",
            c.alpha, c.rho, c.avg_iterations, c.all_converged
        ));
    }
    s
}

/// Amplification-constant table over a parameter/frequency grid. `C` is the
/// pressure-mode constant of the implicit update, `C_u` the velocity-mode
/// constant of the divergence-only update; rows with `|C| >= 1` are flagged
/// divergent.
pub fn modes_csv(
    alphas: &[f64],
    rho_over_nu: &[f64],
    nu: f64,
    k: f64,
    xi_sq: &[f64],
) -> String {
    let mut s = csv_header("modes");
    s.push_str("alpha,rho,xi_sq,z,c,c_u,divergent\n");
    for &alpha in alphas {
        for &mult in rho_over_nu {
            let rho = mult * nu;
            for &x in xi_sq {
                let z = k * nu * x;
                let c = normal_mode_constant(alpha, rho, nu, k, x);
                let cu = uzawa_constant(z, mult);
                s.push_str(&format!(
                    "{},{},{:.6e},{:.6e},{:.12e},{:.12e},{}\n",
                    alpha,
                    rho,
                    x,
                    z,
                    c,
                    cu,
                    c.abs() >= 1.0
                ));
            }
        }
    }
    s
}

/// Fits the asymptotic per-pass contraction ratio of the pressure iteration
/// on a Stokes step: runs exactly `window.1` passes from a generic start
/// and fits `log dp_l2` over passes `window.0 .. window.1` by least
/// squares. The tolerance is set unreachably small so the cap, not the
/// stopping test, ends the run.
pub fn measured_contraction(
    setup: &SimulationSetup,
    alpha: f64,
    rho: f64,
    nu: f64,
    k: f64,
    window: (usize, usize),
) -> Result<f64> {
    if window.0 + 2 > window.1 {
        return Err(Error::Config("contraction window too short".into()));
    }
    let mut params = SolverParams::new(alpha, rho, nu, k);
    params.convection = ConvectionMode::None;
    params.accelerate = false;
    params.eps = 1e-300;
    params.iter_max = window.1;
    let stepper = crate::projector::Stepper::new(
        &setup.mesh,
        &setup.layout,
        &setup.ctx,
        &setup.mats,
        params,
    )?;
    let load = crate::assembly::assemble_load(&setup.mesh, &setup.ctx, |x| {
        [
            (std::f64::consts::PI * x[0]).sin() * x[1],
            x[2] * x[0] - 0.25,
            (2.0 * x[1]).cos(),
        ]
    });
    let f: Vec<f64> = load.iter().map(|v| k * v).collect();
    let zeros_u = vec![0.0; setup.layout.n_velocity];
    let zeros_p = vec![0.0; setup.layout.n_pressure];
    let sol = stepper.solve_time_step(&f, &zeros_u, &zeros_u, &zeros_p, &zeros_p)?;
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for rec in &sol.report.records {
        if rec.s >= window.0 && rec.s < window.1 {
            if rec.dp_l2 <= 1e-250 {
                return Err(Error::Config(
                    "pressure increments hit the floating-point floor inside the fit window"
                        .into(),
                ));
            }
            xs.push(rec.s as f64);
            ys.push(rec.dp_l2.ln());
        }
    }
    if xs.len() < 3 {
        return Err(Error::Config("too few passes recorded for the fit".into()));
    }
    Ok(lsq_slope(&xs, &ys).exp())
}

pub struct SpectrumArtifacts {
    pub report: SpectrumReport,
    /// Asymptotic rate predicted by the spectrum: spectral radius of the
    /// update's error-propagation operator.
    pub predicted_rate: f64,
    /// Rate fitted from an actual Stokes step on the same mesh.
    pub measured_rate: f64,
    /// True when the parameter bound guarantees convergence.
    pub guaranteed: bool,
}

/// Dense spectral analysis of the pressure update on a small mesh, plus a
/// measured-rate cross check. Guarded against meshes with more than 2000
/// pressure unknowns.
pub fn cmd_spectrum(cfg: &RunConfig, window: (usize, usize)) -> Result<SpectrumArtifacts> {
    let problem = cfg.problem()?;
    let params = cfg.solver_params()?;
    let setup = SimulationSetup::new(&problem, cfg.n)?;
    let schur = build_schur_complement(&setup.mats, &setup.layout, params.k, params.nu)?;
    let report = iteration_spectrum(
        &setup.mats,
        &schur,
        params.alpha,
        params.rho,
        params.k,
        params.nu,
    )?;
    let measured = measured_contraction(
        &setup,
        params.alpha,
        params.rho,
        params.nu,
        params.k,
        window,
    )?;
    Ok(SpectrumArtifacts {
        predicted_rate: report.contraction,
        measured_rate: measured,
        guaranteed: params.convergence_guaranteed(),
        report,
    })
}

pub fn spectrum_csv(art: &SpectrumArtifacts) -> String {
    let mut s = csv_header("spectrum");
    s.push_str("index,eigenvalue\n");
    for (i, ev) in art.report.eigenvalues.iter().enumerate() {
        s.push_str(&format!("{i},{ev:.12e}\n"));
    }
    s.push_str(&format!(
        "# lambda_max {:.12e}  bound {:.12e}  contraction {:.12e}\n",
        art.report.lambda_max, art.report.bound, art.report.contraction
    ));
    s.push_str(&format!(
        "# predicted_rate {:.6e}  measured_rate {:.6e}  convergence_guaranteed {}\n",
        art.predicted_rate, art.measured_rate, art.guaranteed
    ));
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quick_cfg(tag: &str) -> RunConfig {
        let mut cfg = RunConfig::default();
        cfg.set("n", "2").unwrap();
        cfg.set("k", "0.01").unwrap();
        cfg.set("t_final", "0.03").unwrap();
        cfg.set("eps", "1e-2").unwrap();
        cfg.set("iter_max", "300").unwrap();
        cfg.out_dir = std::env::temp_dir().join(format!("driver-{tag}-{}", std::process::id()));
        cfg
    }

    #[test]
    fn run_writes_all_artifacts_with_error_columns() {
        let cfg = quick_cfg("run");
        let art = cmd_run(&cfg).unwrap();
        assert_eq!(art.files.len(), 4);
        for f in &art.files {
            assert!(f.exists(), "missing {}", f.display());
        }
        let steps = std::fs::read_to_string(&art.files[0]).unwrap();
        assert!(steps.starts_with("# iterproj-csv v1 steps"));
        assert!(steps.contains("err_u_h1"));
        let vtk = std::fs::read_to_string(&art.files[3]).unwrap();
        assert!(vtk.contains("VECTORS velocity"));
        std::fs::remove_dir_all(&cfg.out_dir).ok();
    }

    #[test]
    fn cavity_run_omits_error_columns() {
        let mut cfg = quick_cfg("cavity");
        cfg.set("problem", "cavity").unwrap();
        let art = cmd_run(&cfg).unwrap();
        let steps = std::fs::read_to_string(&art.files[0]).unwrap();
        assert!(!steps.contains("err_u_h1"));
        let summary = std::fs::read_to_string(&art.files[2]).unwrap();
        assert!(!summary.contains("err_u_h1"));
        std::fs::remove_dir_all(&cfg.out_dir).ok();
    }

    #[test]
    fn reruns_are_bitwise_identical() {
        let mut a = quick_cfg("det-a");
        let mut b = quick_cfg("det-b");
        a.set("eps", "1e-4").unwrap();
        b.set("eps", "1e-4").unwrap();
        let art_a = cmd_run(&a).unwrap();
        let art_b = cmd_run(&b).unwrap();
        for (fa, fb) in art_a.files.iter().zip(art_b.files.iter()) {
            assert_eq!(
                std::fs::read(fa).unwrap(),
                std::fs::read(fb).unwrap(),
                "{} differs",
                fa.display()
            );
        }
        std::fs::remove_dir_all(&a.out_dir).ok();
        std::fs::remove_dir_all(&b.out_dir).ok();
    }

    #[test]
    fn order_study_reports_decreasing_errors_and_rates() {
        let mut cfg = quick_cfg("order");
        cfg.set("k", "0.005").unwrap();
        cfg.set("t_final", "0.02").unwrap();
        cfg.set("eps", "1e-4").unwrap();
        let study = cmd_study_order(&cfg, &[2, 3]).unwrap();
        assert_eq!(study.rows.len(), 2);
        assert!(study.rows[1].err_u_h1 < study.rows[0].err_u_h1);
        assert!(study.rows[1].rate_u_h1.is_some());
        assert!(study.lsq_rate_u_h1 > 0.5);
        let csv = order_csv(&study);
        assert!(csv.contains("least-squares rates"));

        let err = cmd_study_order(&cfg, &[4]).unwrap_err();
        assert!(err.to_string().contains("two mesh"));
        let mut cav = cfg.clone();
        cav.set("problem", "cavity").unwrap();
        assert!(cmd_study_order(&cav, &[2, 3]).is_err());
    }

    #[test]
    fn sweep_covers_the_grid() {
        let cfg = quick_cfg("sweep");
        let study = cmd_study_sweep(&cfg, &[1.5], &[1.0, 2.0]).unwrap();
        assert_eq!(study.cells.len(), 2);
        for c in &study.cells {
            assert!(c.avg_iterations >= 1.0);
            assert!(c.all_converged);
        }
        let csv = sweep_csv(&study);
        assert_eq!(csv.lines().count(), 2 + 2);
    }

    #[test]
    fn modes_table_shows_known_limits() {
        let xi = [1.0, 1e2, 1e4, 1e6];
        let csv = modes_csv(&[1.5, 0.0], &[1.0, 2.5], 1.0, 1e-3, &xi);
        let rows: Vec<&str> = csv.lines().skip(2).collect();
        assert_eq!(rows.len(), 2 * 2 * 4);
        // alpha=1.5, rho=nu: the pressure constant vanishes identically.
        for r in rows.iter().take(4) {
            let c: f64 = r.split(',').nth(4).unwrap().parse().unwrap();
            assert!(c.abs() < 1e-14);
        }
        // alpha=0, rho=2.5nu diverges once z is large.
        let last = rows.last().unwrap();
        assert!(last.ends_with("true"));
        // C_u tends to 1 as z -> 0.
        let cu: f64 = rows[0].split(',').nth(5).unwrap().parse().unwrap();
        assert!((cu - 1.0).abs() < 1e-2);
    }

    #[test]
    fn spectrum_prediction_matches_measurement() {
        let mut cfg = quick_cfg("spectrum");
        cfg.set("k", "0.05").unwrap();
        let art = cmd_spectrum(&cfg, (10, 30)).unwrap();
        assert!(art.report.all_positive);
        assert!(art.guaranteed);
        let ratio = art.measured_rate / art.predicted_rate;
        assert!(
            (0.9..=1.1).contains(&ratio),
            "measured {} predicted {}",
            art.measured_rate,
            art.predicted_rate
        );
        let csv = spectrum_csv(&art);
        assert!(csv.contains("predicted_rate"));
    }
}
