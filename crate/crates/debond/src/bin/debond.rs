//! Command-line driver: `run`, `verify`, `batch` and `convergence` verbs.
//!
//! Exit codes: 0 success, 1 verification failure or internal error,
//! 2 solver convergence failure, 3 non-existence diagnosis, 4 validation or
//! parse error (including bad usage).

use debond::error::Error;
use debond::scenario::{
    exit_code_for, run_scenario, verify_scenario, Overrides, Scenario,
};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

const USAGE: &str = "\
usage:
  debond run <scenario.scn> [--delta X] [--tol X] [--horizon X] [--out DIR]
  debond verify <scenario.scn> --front <front.csv> [overrides]
  debond batch <dir> [overrides]
  debond convergence <scenario.scn> --levels N [overrides]
";

fn main() -> ExitCode {
    let args: Vec<String> = std::env::args().skip(1).collect();
    match dispatch(&args) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code_for(&e) as u8)
        }
    }
}

fn dispatch(args: &[String]) -> Result<u8, Error> {
    let usage = || Error::Validation { field: "usage".into(), msg: USAGE.trim().into() };
    let mut it = args.iter();
    let verb = it.next().ok_or_else(usage)?;
    let mut positional: Vec<&str> = Vec::new();
    let mut overrides = Overrides::default();
    let mut front_csv: Option<PathBuf> = None;
    let mut levels: usize = 3;
    while let Some(a) = it.next() {
        let mut grab = || {
            it.next().cloned().ok_or(Error::Validation {
                field: a.clone(),
                msg: "missing value".into(),
            })
        };
        match a.as_str() {
            "--delta" => overrides.delta = Some(parse_num(&grab()?)?),
            "--tol" => overrides.tol = Some(parse_num(&grab()?)?),
            "--horizon" => overrides.horizon = Some(parse_num(&grab()?)?),
            "--out" => overrides.out = Some(PathBuf::from(grab()?)),
            "--front" => front_csv = Some(PathBuf::from(grab()?)),
            "--levels" => {
                levels = grab()?.parse().map_err(|_| Error::Validation {
                    field: "--levels".into(),
                    msg: "expected an integer".into(),
                })?;
            }
            other if other.starts_with("--") => {
                return Err(Error::Validation {
                    field: other.into(),
                    msg: "unknown flag".into(),
                });
            }
            other => positional.push(other),
        }
    }

    match verb.as_str() {
        "run" => {
            let path = positional.first().ok_or_else(usage)?;
            let mut sc = Scenario::load(Path::new(path))?;
            sc.apply(&overrides);
            let outcome = run_scenario(&sc)?;
            let s = &outcome.summary;
            println!(
                "{}: solved to t = {:.6} in {} windows ({} iterations), \
                 max balance residual {:.3e}",
                s.name, s.end_time, s.window_count, s.total_iterations, s.max_balance_residual
            );
            for d in &s.diagnoses {
                println!("  diagnosis: {d}");
            }
            if let Some(ts) = s.truncated_at_sonic {
                println!("  truncated at the sonic line t = {ts:.6}");
            }
            Ok(0)
        }
        "verify" => {
            let path = positional.first().ok_or_else(usage)?;
            let mut sc = Scenario::load(Path::new(path))?;
            sc.apply(&overrides);
            let report = verify_scenario(&sc, front_csv.as_deref())?;
            println!("residual                 value");
            println!("fixed_point              {:.6e}", report.fixed_point_residual);
            println!("front_law_l1             {:.6e}", report.ode_residual_l1);
            println!("front_law_sup            {:.6e}", report.ode_residual_sup);
            println!("initial_trace            {:.6e}", report.initial_trace);
            println!("boundary_trace           {:.6e}", report.boundary_trace);
            println!("front_trace              {:.6e}", report.front_trace);
            if report.max_residual() <= sc.verify_tol {
                println!("PASS (tol {:.1e})", sc.verify_tol);
                Ok(0)
            } else {
                println!("FAIL (tol {:.1e})", sc.verify_tol);
                Ok(1)
            }
        }
        "batch" => {
            let dir = positional.first().ok_or_else(usage)?;
            let mut entries: Vec<PathBuf> = std::fs::read_dir(dir)
                .map_err(|e| Error::Io(format!("{dir}: {e}")))?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| p.extension().is_some_and(|x| x == "scn"))
                .collect();
            entries.sort();
            if entries.is_empty() {
                return Err(Error::Validation {
                    field: "batch".into(),
                    msg: format!("no .scn files in {dir}"),
                });
            }
            let mut worst = 0u8;
            for path in entries {
                let mut sc = match Scenario::load(&path) {
                    Ok(sc) => sc,
                    Err(e) => {
                        println!("{}: SKIP ({e})", path.display());
                        worst = worst.max(exit_code_for(&e) as u8);
                        continue;
                    }
                };
                sc.apply(&overrides);
                if let Some(base) = &overrides.out {
                    sc.out_dir = base.join(&sc.name);
                }
                match run_scenario(&sc) {
                    Ok(outcome) => {
                        println!(
                            "{}: ok (end t = {:.4}, residual {:.2e})",
                            sc.name,
                            outcome.summary.end_time,
                            outcome.summary.max_balance_residual
                        );
                    }
                    Err(e) => {
                        println!("{}: {e}", sc.name);
                        worst = worst.max(exit_code_for(&e) as u8);
                    }
                }
            }
            Ok(worst)
        }
        "convergence" => {
            let path = positional.first().ok_or_else(usage)?;
            let mut sc = Scenario::load(Path::new(path))?;
            sc.apply(&overrides);
            convergence_study(&sc, levels)
        }
        _ => Err(usage()),
    }
}

fn parse_num(s: &str) -> Result<f64, Error> {
    s.parse().map_err(|_| Error::Validation {
        field: s.into(),
        msg: "expected a number".into(),
    })
}

/// Runs the scenario at `delta, delta/2, ...` and reports how the front, the
/// final field slice and the balance residual move between levels.
fn convergence_study(sc: &Scenario, levels: usize) -> Result<u8, Error> {
    if levels < 2 {
        return Err(Error::Validation {
            field: "--levels".into(),
            msg: "need at least 2 levels".into(),
        });
    }
    let mut rows = Vec::new();
    let mut prev: Option<debond::duhamel::WaveSolution> = None;
    let mut prev_front: Option<debond::geometry::Front> = None;
    println!("level  delta        balance_res   front_diff    field_l2_diff");
    for lvl in 0..levels {
        let mut s = sc.clone();
        s.delta = sc.delta / (1 << lvl) as f64;
        s.out_dir = sc.out_dir.join(format!("level{lvl}"));
        let outcome = run_scenario(&s)?;
        let sol = outcome.solution.ok_or_else(|| Error::Validation {
            field: "mode".into(),
            msg: "convergence needs a field run".into(),
        })?;
        let front = outcome.front.unwrap();
        let res = outcome.summary.max_balance_residual;
        let t_end = sol.end_time().min(sc.horizon);
        let (front_diff, field_diff) = match (&prev, &prev_front) {
            (Some(p), Some(pf)) => {
                let mut fd = 0.0f64;
                let mut l2 = 0.0;
                let n = 200;
                for k in 0..=n {
                    let t = t_end * k as f64 / n as f64;
                    fd = fd.max((front.ell(t) - pf.ell(t)).abs());
                }
                let ell = front.ell(t_end).min(pf.ell(t_end));
                for k in 0..n {
                    let x0 = ell * k as f64 / n as f64;
                    let x1 = ell * (k + 1) as f64 / n as f64;
                    let d0 = sol.u(t_end, x0)? - p.u(t_end, x0)?;
                    let d1 = sol.u(t_end, x1)? - p.u(t_end, x1)?;
                    l2 += 0.5 * (d0 * d0 + d1 * d1) * (x1 - x0);
                }
                (fd, l2.sqrt())
            }
            _ => (f64::NAN, f64::NAN),
        };
        println!(
            "{lvl}      {:.3e}   {:.6e}  {:.6e}  {:.6e}",
            s.delta, res, front_diff, field_diff
        );
        rows.push((lvl, s.delta, res, front_diff, field_diff));
        prev = Some(sol);
        prev_front = Some(front);
    }
    let mut csv = String::from("level,delta,balance_residual,front_diff,field_l2_diff\n");
    for (lvl, d, r, fd, l2) in rows {
        use std::fmt::Write as _;
        let _ = writeln!(csv, "{lvl},{d:.16e},{r:.16e},{fd:.16e},{l2:.16e}");
    }
    std::fs::create_dir_all(&sc.out_dir)?;
    std::fs::write(sc.out_dir.join("convergence.csv"), csv)?;
    Ok(0)
}
