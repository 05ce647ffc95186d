//! Flat `key = value` scenario files.
//!
//! Blank lines and text after `#` are ignored. Every key may appear at most
//! once; unknown keys are errors. Command-line `--set key=value` pairs are
//! applied on top of the file.

use std::fmt::Write as _;
use std::path::PathBuf;

use nlfp::exec::Execution;
use nlfp::grid::PeriodicGrid;
use nlfp::model::{registered, ModelProblem};
use nlfp::particles::{Bandwidth, EstimatorKind, ParticleConfig};
use nlfp::pde::SolverConfig;
use nlfp::verify::CHECKS;

use crate::failure::Failure;

/// Documented keys, in manifest order.
pub const KEYS: &[&str] = &[
    "model",
    "dim",
    "half_width",
    "n",
    "t_end",
    "time_step",
    "snapshot_stride",
    "newton_tol",
    "newton_max_iter",
    "damping",
    "krylov_restart",
    "krylov_max_iter",
    "dealias",
    "regularized",
    "epsilon_reg",
    "mollifier_width",
    "execution",
    "particles",
    "particle_dt",
    "seed",
    "estimator",
    "bandwidth",
    "reference",
    "particle_dump",
    "csv",
    "checks",
    "check_seed",
    "n_test",
    "particle_cap",
    "convergence_steps",
];

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub model: String,
    pub dim: usize,
    pub half_width: f64,
    pub n: usize,
    pub t_end: f64,
    pub solver: SolverConfig,
    pub regularized: bool,
    pub particles: usize,
    pub particle_dt: f64,
    pub seed: u64,
    pub estimator: EstimatorKind,
    /// PDE output directory whose snapshots a particle run is compared with.
    pub reference: Option<PathBuf>,
    pub particle_dump: bool,
    pub csv: bool,
    /// Checks selected for `run-verify`; `None` means all.
    pub checks: Option<Vec<String>>,
    pub check_seed: u64,
    pub n_test: usize,
    pub particle_cap: f64,
    pub convergence_steps: Vec<f64>,
}

impl Default for Scenario {
    fn default() -> Self {
        Self {
            model: "LINEAR".into(),
            dim: 1,
            half_width: 10.0,
            n: 256,
            t_end: 0.5,
            solver: SolverConfig::with_step(1e-3),
            regularized: false,
            particles: 10_000,
            particle_dt: 1e-3,
            seed: 0,
            estimator: EstimatorKind::GaussianKernel(Bandwidth::Auto),
            reference: None,
            particle_dump: false,
            csv: false,
            checks: None,
            check_seed: 0,
            n_test: 20,
            particle_cap: 0.05,
            convergence_steps: vec![4e-3, 2e-3, 1e-3],
        }
    }
}

fn num<T: std::str::FromStr>(v: &str) -> Result<T, String> {
    v.parse().map_err(|_| format!("cannot parse `{v}` as a number"))
}

fn boolean(v: &str) -> Result<bool, String> {
    match v {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        _ => Err(format!("expected true or false, got `{v}`")),
    }
}

fn list(v: &str) -> Vec<String> {
    v.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(String::from)
        .collect()
}

impl Scenario {
    pub fn parse(text: &str) -> Result<Self, Failure> {
        let mut s = Scenario::default();
        let mut seen: Vec<String> = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let at = |msg: String| Failure::Parse {
                line: Some(i + 1),
                message: msg,
            };
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| at(format!("expected `key = value`, got `{line}`")))?;
            let key = key.trim();
            if seen.iter().any(|k| k == key) {
                return Err(at(format!("duplicate key `{key}`")));
            }
            s.set(key, value.trim()).map_err(at)?;
            seen.push(key.to_string());
        }
        Ok(s)
    }

    /// Apply one `key=value` override.
    pub fn apply_override(&mut self, pair: &str) -> Result<(), Failure> {
        let bad = |message: String| Failure::Parse {
            line: None,
            message: format!("--set {pair}: {message}"),
        };
        let (k, v) = pair
            .split_once('=')
            .ok_or_else(|| bad("expected key=value".into()))?;
        self.set(k.trim(), v.trim()).map_err(bad)
    }

    pub fn set(&mut self, key: &str, v: &str) -> Result<(), String> {
        let c = &mut self.solver;
        match key {
            "model" => self.model = v.to_string(),
            "dim" => self.dim = num(v)?,
            "half_width" => self.half_width = num(v)?,
            "n" => self.n = num(v)?,
            "t_end" => self.t_end = num(v)?,
            "time_step" => c.time_step = num(v)?,
            "snapshot_stride" => c.snapshot_stride = num(v)?,
            "newton_tol" => c.newton_tol = num(v)?,
            "newton_max_iter" => c.newton_max_iter = num(v)?,
            "damping" => c.damping = num(v)?,
            "krylov_restart" => c.krylov_restart = num(v)?,
            "krylov_max_iter" => c.krylov_max_iter = num(v)?,
            "dealias" => c.dealias = boolean(v)?,
            "regularized" => self.regularized = boolean(v)?,
            "epsilon_reg" => c.epsilon_reg = num(v)?,
            "mollifier_width" => c.mollifier_width = num(v)?,
            "execution" => {
                c.execution = match v {
                    "parallel" => Execution::Parallel,
                    "sequential" => Execution::Sequential,
                    _ => return Err(format!("execution must be parallel or sequential, got `{v}`")),
                }
            }
            "particles" => self.particles = num(v)?,
            "particle_dt" => self.particle_dt = num(v)?,
            "seed" => self.seed = num(v)?,
            "estimator" => {
                self.estimator = match v {
                    "histogram" => EstimatorKind::Histogram,
                    "kernel" => EstimatorKind::GaussianKernel(match self.estimator {
                        EstimatorKind::GaussianKernel(b) => b,
                        EstimatorKind::Histogram => Bandwidth::Auto,
                    }),
                    _ => return Err(format!("estimator must be kernel or histogram, got `{v}`")),
                }
            }
            "bandwidth" => {
                let b = if v == "auto" { Bandwidth::Auto } else { Bandwidth::Fixed(num(v)?) };
                if let EstimatorKind::GaussianKernel(_) = self.estimator {
                    self.estimator = EstimatorKind::GaussianKernel(b);
                } else {
                    return Err("bandwidth requires estimator = kernel (set it first)".into());
                }
            }
            "reference" => self.reference = (!v.is_empty()).then(|| PathBuf::from(v)),
            "particle_dump" => self.particle_dump = boolean(v)?,
            "csv" => self.csv = boolean(v)?,
            "checks" => self.checks = if v == "all" { None } else { Some(list(v)) },
            "check_seed" => self.check_seed = num(v)?,
            "n_test" => self.n_test = num(v)?,
            "particle_cap" => self.particle_cap = num(v)?,
            "convergence_steps" => {
                self.convergence_steps = list(v).iter().map(|s| num(s)).collect::<Result<_, _>>()?
            }
            _ => return Err(format!("unknown key `{key}`; known keys: {}", KEYS.join(", "))),
        }
        Ok(())
    }

    pub fn model(&self) -> Result<ModelProblem, Failure> {
        registered(&self.model, self.dim).map_err(Failure::from)
    }

    pub fn grid(&self) -> Result<PeriodicGrid, Failure> {
        PeriodicGrid::new(self.dim, self.half_width, self.n).map_err(Failure::from)
    }

    pub fn particle_config(&self) -> ParticleConfig {
        ParticleConfig {
            particles: self.particles,
            time_step: self.particle_dt,
            seed: self.seed,
            estimator: self.estimator,
            execution: self.solver.execution,
        }
    }

    /// Range checks that do not depend on the subcommand.
    pub fn validate(&self) -> Result<(), Failure> {
        self.grid()?;
        self.model()?;
        self.solver.validate()?;
        let bad = |m: String| Err(Failure::Invalid(m));
        if !(self.t_end >= 0.0 && self.t_end.is_finite()) {
            return bad(format!("t_end must be >= 0, got {}", self.t_end));
        }
        if self.particles == 0 {
            return bad("particles must be positive".into());
        }
        if !(self.particle_dt > 0.0 && self.particle_dt.is_finite()) {
            return bad(format!("particle_dt must be positive, got {}", self.particle_dt));
        }
        if let EstimatorKind::GaussianKernel(Bandwidth::Fixed(h)) = self.estimator {
            if !(h > 0.0 && h.is_finite()) {
                return bad(format!("bandwidth must be positive, got {h}"));
            }
        }
        if !(self.particle_cap > 0.0) {
            return bad(format!("particle_cap must be positive, got {}", self.particle_cap));
        }
        if let Some(checks) = &self.checks {
            if let Some(c) = checks.iter().find(|c| !CHECKS.contains(&c.as_str())) {
                return Err(Failure::Unknown {
                    kind: "check".into(),
                    name: c.clone(),
                    known: CHECKS.iter().map(|s| s.to_string()).collect(),
                });
            }
        }
        Ok(())
    }

    /// Every key with its resolved value; parsing the result gives back `self`.
    pub fn manifest(&self, command: &str) -> String {
        let c = &self.solver;
        let f = |x: f64| format!("{x:?}");
        let mut out = format!("# nlfp {command}\n# rerun: nlfp {command} --scenario manifest.txt --out <dir>\n");
        for key in KEYS {
            let value = match *key {
                "model" => self.model.clone(),
                "dim" => self.dim.to_string(),
                "half_width" => f(self.half_width),
                "n" => self.n.to_string(),
                "t_end" => f(self.t_end),
                "time_step" => f(c.time_step),
                "snapshot_stride" => c.snapshot_stride.to_string(),
                "newton_tol" => f(c.newton_tol),
                "newton_max_iter" => c.newton_max_iter.to_string(),
                "damping" => f(c.damping),
                "krylov_restart" => c.krylov_restart.to_string(),
                "krylov_max_iter" => c.krylov_max_iter.to_string(),
                "dealias" => c.dealias.to_string(),
                "regularized" => self.regularized.to_string(),
                "epsilon_reg" => f(c.epsilon_reg),
                "mollifier_width" => f(c.mollifier_width),
                "execution" => match c.execution {
                    Execution::Parallel => "parallel".into(),
                    Execution::Sequential => "sequential".into(),
                },
                "particles" => self.particles.to_string(),
                "particle_dt" => f(self.particle_dt),
                "seed" => self.seed.to_string(),
                "estimator" => match self.estimator {
                    EstimatorKind::Histogram => "histogram".into(),
                    EstimatorKind::GaussianKernel(_) => "kernel".into(),
                },
                "bandwidth" => match self.estimator {
                    EstimatorKind::GaussianKernel(Bandwidth::Fixed(h)) => f(h),
                    EstimatorKind::GaussianKernel(Bandwidth::Auto) => "auto".into(),
                    // bandwidth is only accepted after estimator = kernel
                    EstimatorKind::Histogram => continue,
                },
                "reference" => match &self.reference {
                    Some(p) => p.display().to_string(),
                    None => String::new(),
                },
                "particle_dump" => self.particle_dump.to_string(),
                "csv" => self.csv.to_string(),
                "checks" => match &self.checks {
                    Some(v) => v.join(","),
                    None => "all".into(),
                },
                "check_seed" => self.check_seed.to_string(),
                "n_test" => self.n_test.to_string(),
                "particle_cap" => f(self.particle_cap),
                "convergence_steps" => self
                    .convergence_steps
                    .iter()
                    .map(|x| f(*x))
                    .collect::<Vec<_>>()
                    .join(","),
                _ => unreachable!("every documented key is rendered"),
            };
            let _ = writeln!(out, "{key} = {value}");
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_and_comments() {
        let s = Scenario::parse("# comment\n\nmodel = CUBIC  # trailing\nn=64\n").unwrap();
        assert_eq!(s.model, "CUBIC");
        assert_eq!(s.n, 64);
        assert_eq!(s.t_end, 0.5);
    }

    #[test]
    fn errors_carry_line_numbers() {
        for (text, line) in [
            ("model = LINEAR\nnonsense\n", 2),
            ("\n\nbogus = 1\n", 3),
            ("n = 64\nn = 128\n", 2),
            ("t_end = soon\n", 1),
            ("dealias = maybe\n", 1),
        ] {
            match Scenario::parse(text) {
                Err(Failure::Parse { line: Some(l), .. }) => assert_eq!(l, line, "{text}"),
                other => panic!("{text}: {other:?}"),
            }
        }
    }

    #[test]
    fn manifest_round_trip() {
        let mut s = Scenario::parse("model = CUBIC-DRIFT\nestimator = kernel\nbandwidth = 0.25\nchecks = barrier,gronwall\n").unwrap();
        s.apply_override("time_step=0.003").unwrap();
        s.reference = Some("ref dir".into());
        let back = Scenario::parse(&s.manifest("run-pde")).unwrap();
        assert_eq!(back, s);
        let h = Scenario::parse("estimator = histogram\n").unwrap();
        assert_eq!(Scenario::parse(&h.manifest("x")).unwrap(), h);
    }

    #[test]
    fn validation() {
        let mut s = Scenario::default();
        assert!(s.validate().is_ok());
        s.particles = 0;
        assert!(matches!(s.validate(), Err(Failure::Invalid(_))));
        let mut s = Scenario::default();
        s.model = "NOPE".into();
        assert!(matches!(s.validate(), Err(Failure::Unknown { .. })));
        let mut s = Scenario::default();
        s.checks = Some(vec!["barrier".into(), "magic".into()]);
        assert!(matches!(s.validate(), Err(Failure::Unknown { .. })));
        let mut s = Scenario::default();
        s.n = 100;
        assert!(matches!(s.validate(), Err(Failure::Invalid(_))));
        assert!(Scenario::default().apply_override("novalue").is_err());
    }
}
