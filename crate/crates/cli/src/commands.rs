//! Subcommand bodies. Each returns the process exit status on success.

use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use nlfp::exec::map_indexed;
use nlfp::grid::{mass, read_field_binary, write_field_binary, write_field_csv, ScalarField};
use nlfp::particles::{law_distance, simulate, write_particles_binary, DensitySeries, EstimatorKind};
use nlfp::pde::{self_convergence, solve_mild, solve_regularized, step_schedule};
use nlfp::verify::{run_check, write_reports_csv, write_reports_text, CheckContext, VerificationReport, CHECKS};
use serde_json::{json, Value};

use crate::failure::{Failure, EXIT_CHECKS_FAILED};
use crate::scenario::Scenario;

/// Artifact directory of one invocation.
pub struct Output {
    pub dir: PathBuf,
}

impl Output {
    pub fn create(dir: &Path) -> Result<Self, Failure> {
        fs::create_dir_all(dir)?;
        Ok(Self { dir: dir.to_path_buf() })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    pub fn json(&self, name: &str, v: &Value) -> Result<(), Failure> {
        let mut text = serde_json::to_string_pretty(v)?;
        text.push('\n');
        fs::write(self.path(name), text)?;
        Ok(())
    }

    pub fn text(&self, name: &str, body: &str) -> Result<(), Failure> {
        fs::write(self.path(name), body)?;
        Ok(())
    }

    fn writer(&self, name: &str) -> Result<BufWriter<File>, Failure> {
        Ok(BufWriter::new(File::create(self.path(name))?))
    }

    /// Write `snapshots/NNNNN.bin` (and `.csv` if asked) and return the relative binary paths.
    fn snapshots(&self, fields: &[ScalarField], csv: bool) -> Result<Vec<String>, Failure> {
        fs::create_dir_all(self.path("snapshots"))?;
        let mut files = Vec::new();
        for (i, f) in fields.iter().enumerate() {
            let rel = format!("snapshots/{i:05}.bin");
            let mut w = self.writer(&rel)?;
            write_field_binary(f, &mut w)?;
            w.flush()?;
            if csv {
                let mut w = self.writer(&format!("snapshots/{i:05}.csv"))?;
                write_field_csv(f, &mut w)?;
                w.flush()?;
            }
            files.push(rel);
        }
        Ok(files)
    }

    fn finish(&self, command: &str, scenario: &Scenario, start: Instant) -> Result<(), Failure> {
        self.text("manifest.txt", &scenario.manifest(command))?;
        // wall-clock time lives apart so every other artifact is reproducible byte for byte
        self.json(
            "timing.json",
            &json!({ "command": command, "seconds": start.elapsed().as_secs_f64() }),
        )
    }
}

fn grid_json(s: &Scenario) -> Value {
    json!({ "dim": s.dim, "half_width": s.half_width, "n": s.n })
}

/// Snapshot times of a PDE run with this scenario's step and stride.
pub fn snapshot_times(s: &Scenario) -> Vec<f64> {
    let schedule = step_schedule(s.t_end, s.solver.time_step);
    let n = schedule.len();
    let stride = s.solver.snapshot_stride;
    let mut times = vec![0.0];
    for i in 0..n {
        if (i + 1) % stride == 0 || i + 1 == n {
            times.push(if i + 1 == n { s.t_end } else { (i + 1) as f64 * s.solver.time_step });
        }
    }
    times
}

fn sup(f: &ScalarField) -> f64 {
    f.values().iter().fold(0.0_f64, |m, v| m.max(v.abs()))
}

pub fn run_pde(s: &Scenario, out: &Output) -> Result<i32, Failure> {
    let start = Instant::now();
    let model = s.model()?;
    let grid = s.grid()?;
    let u0 = model.initial_field(&grid);
    let traj = if s.regularized {
        solve_regularized(&u0, s.t_end, &model, &s.solver)?
    } else {
        solve_mild(&u0, s.t_end, &model, &s.solver)?
    };
    let files = out.snapshots(&traj.fields, s.csv)?;
    out.json(
        "trajectory.json",
        &json!({
            "kind": "pde",
            "model": traj.model,
            "grid": grid_json(s),
            "times": traj.times,
            "files": files,
            "steps": traj.steps,
            "regularized": s.regularized,
            "config": serde_json::to_value(traj.config)?,
        }),
    )?;
    let drift = traj.relative_mass_drift();
    let max_abs = traj.fields.iter().map(sup).fold(0.0, f64::max);
    out.json(
        "summary.json",
        &json!({
            "model": traj.model,
            "steps": traj.steps,
            "snapshots": traj.times.len(),
            "initial_mass": mass(&u0),
            "final_mass": mass(traj.final_field()),
            "relative_mass_drift": drift,
            "max_abs": max_abs,
            "min": traj.fields.iter().map(|f| f.min()).fold(f64::INFINITY, f64::min),
            "newton_iterations": traj.stats.newton_iterations,
            "krylov_iterations": traj.stats.krylov_iterations,
            "fixed_point_iterations": traj.stats.fixed_point_iterations,
            "used_fallback": traj.stats.used_fallback,
        }),
    )?;
    out.finish("run-pde", s, start)?;
    println!(
        "run-pde {}: {} steps, {} snapshots, relative mass drift {drift:.3e}, max |u| {max_abs:.6}",
        traj.model,
        traj.steps,
        traj.times.len()
    );
    Ok(0)
}

/// Read the snapshot series written by `run-pde` or `run-particles`.
pub fn load_series(dir: &Path) -> Result<DensitySeries, Failure> {
    let meta_path = dir.join("trajectory.json");
    let meta: Value = serde_json::from_reader(BufReader::new(
        File::open(&meta_path).map_err(|e| Failure::Invalid(format!("{}: {e}", meta_path.display())))?,
    ))
    .map_err(|e| Failure::Invalid(format!("{}: {e}", meta_path.display())))?;
    let malformed = || Failure::Invalid(format!("{}: missing times or files", meta_path.display()));
    let times: Vec<f64> = meta["times"]
        .as_array()
        .ok_or_else(malformed)?
        .iter()
        .map(|t| t.as_f64().ok_or_else(malformed))
        .collect::<Result<_, _>>()?;
    let files = meta["files"].as_array().ok_or_else(malformed)?;
    if files.len() != times.len() {
        return Err(malformed());
    }
    let fields = files
        .iter()
        .map(|f| {
            let rel = f.as_str().ok_or_else(malformed)?;
            let file = File::open(dir.join(rel))?;
            read_field_binary(BufReader::new(file)).map_err(Failure::from)
        })
        .collect::<Result<Vec<_>, Failure>>()?;
    Ok(DensitySeries { times, fields })
}

pub fn run_particles(s: &Scenario, out: &Output) -> Result<i32, Failure> {
    let start = Instant::now();
    let model = s.model()?;
    let grid = s.grid()?;
    let u0 = model.initial_field(&grid);
    let reference = s.reference.as_deref().map(load_series).transpose()?;
    let times = snapshot_times(s);
    let cfg = s.particle_config();
    let run = simulate(&u0, s.t_end, &model, &cfg, &times)?;
    let distances = match &reference {
        Some(r) => Some(law_distance(&run.series, r).map_err(|e| {
            Failure::Invalid(format!("reference run does not match this scenario: {e}"))
        })?),
        None => None,
    };
    let files = out.snapshots(&run.series.fields, s.csv)?;
    let estimator = match cfg.estimator {
        EstimatorKind::Histogram => json!({ "kind": "histogram" }),
        EstimatorKind::GaussianKernel(b) => json!({ "kind": "kernel", "bandwidth": format!("{b:?}") }),
    };
    out.json(
        "trajectory.json",
        &json!({
            "kind": "particles",
            "model": model.name,
            "grid": grid_json(s),
            "times": run.series.times,
            "files": files,
            "steps": run.steps,
            "particles": cfg.particles,
            "seed": cfg.seed,
            "particle_dt": cfg.time_step,
            "estimator": estimator,
        }),
    )?;
    if let Some(d) = &distances {
        let mut w = out.writer("distances.csv")?;
        writeln!(w, "time,l1_distance")?;
        for (t, v) in run.series.times.iter().zip(d) {
            writeln!(w, "{t:.16e},{v:.16e}")?;
        }
        w.flush()?;
    }
    if s.particle_dump {
        let mut w = out.writer("particles.bin")?;
        write_particles_binary(&run.ensemble, &mut w)?;
        w.flush()?;
    }
    let masses: Vec<f64> = run.series.fields.iter().map(mass).collect();
    out.json(
        "summary.json",
        &json!({
            "model": model.name,
            "particles": cfg.particles,
            "steps": run.steps,
            "seed": cfg.seed,
            "times": run.series.times,
            "masses": masses,
            "max_density": run.series.fields.iter().map(|f| f.max()).fold(0.0, f64::max),
            "reference": s.reference.as_ref().map(|p| p.display().to_string()),
            "l1_distance_to_reference": distances,
        }),
    )?;
    out.finish("run-particles", s, start)?;
    match &distances {
        Some(d) => println!(
            "run-particles {}: {} particles, {} steps, L1 distance to reference at T {:.4e}",
            model.name,
            cfg.particles,
            run.steps,
            d.last().copied().unwrap_or(0.0)
        ),
        None => println!("run-particles {}: {} particles, {} steps", model.name, cfg.particles, run.steps),
    }
    Ok(0)
}

pub fn run_verify(s: &Scenario, out: &Output) -> Result<i32, Failure> {
    let start = Instant::now();
    let names: Vec<String> = match &s.checks {
        Some(c) => c.clone(),
        None => CHECKS.iter().map(|c| c.to_string()).collect(),
    };
    let ctx = CheckContext {
        model: s.model()?,
        grid: s.grid()?,
        t_end: s.t_end,
        solver: s.solver,
        particles: s.particle_config(),
        seed: s.check_seed,
        n_test: s.n_test,
        particle_cap: s.particle_cap,
    };
    let results = map_indexed(s.solver.execution, names.len(), |i| run_check(&names[i], &ctx));
    let mut reports: Vec<VerificationReport> = Vec::new();
    for r in results {
        reports.extend(r?);
    }
    let mut w = out.writer("report.txt")?;
    write_reports_text(&reports, &mut w)?;
    w.flush()?;
    let mut w = out.writer("report.csv")?;
    write_reports_csv(&reports, &mut w)?;
    w.flush()?;
    out.json("report.json", &serde_json::to_value(&reports)?)?;
    let failed = reports.iter().filter(|r| !r.pass).count();
    out.json(
        "summary.json",
        &json!({ "checks": names, "reports": reports.len(), "failed": failed }),
    )?;
    out.finish("run-verify", s, start)?;
    for r in &reports {
        println!(
            "{} {}: measured {:.4e}, bound {:.4e}, tolerance {:.1e}",
            if r.pass { "PASS" } else { "FAIL" },
            r.name,
            r.measured,
            r.bound,
            r.tolerance
        );
    }
    Ok(if failed == 0 { 0 } else { EXIT_CHECKS_FAILED })
}

pub fn convergence(s: &Scenario, out: &Output) -> Result<i32, Failure> {
    let start = Instant::now();
    let model = s.model()?;
    let u0 = model.initial_field(&s.grid()?);
    let rep = self_convergence(&u0, s.t_end, &model, &s.solver, &s.convergence_steps)?;
    let mut w = out.writer("convergence.csv")?;
    writeln!(w, "h_coarse,h_fine,l1_distance")?;
    for (i, d) in rep.distances.iter().enumerate() {
        writeln!(w, "{:.16e},{:.16e},{d:.16e}", rep.steps[i], rep.steps[i + 1])?;
    }
    w.flush()?;
    out.json("convergence.json", &serde_json::to_value(&rep)?)?;
    out.finish("convergence", s, start)?;
    match rep.order {
        Some(o) => println!("convergence {}: distances {:?}, fitted order {o:.4}", model.name, rep.distances),
        None => println!("convergence {}: distances {:?}, order undefined", model.name, rep.distances),
    }
    Ok(0)
}

pub fn compare(a: &Path, b: &Path, out: Option<&Output>) -> Result<i32, Failure> {
    let sa = load_series(a)?;
    let sb = load_series(b)?;
    let d = law_distance(&sa, &sb)?;
    let mut csv = String::from("time,l1_distance\n");
    for (t, v) in sa.times.iter().zip(&d) {
        csv.push_str(&format!("{t:.16e},{v:.16e}\n"));
    }
    match out {
        Some(o) => {
            o.text("compare.csv", &csv)?;
            o.json(
                "compare.json",
                &json!({
                    "a": a.display().to_string(),
                    "b": b.display().to_string(),
                    "times": sa.times,
                    "l1_distance": d,
                }),
            )?;
        }
        None => print!("{csv}"),
    }
    Ok(0)
}
