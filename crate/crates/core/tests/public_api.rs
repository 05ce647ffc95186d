use nlfp::grid::{read_field_binary, write_field_binary};
use nlfp::model::{self, InitialCondition};
use nlfp::particles::{self, ParticleConfig};
use nlfp::pde::solve_mild;
use nlfp::verify::{self, CheckContext};
use nlfp::{Error, Execution, PeriodicGrid, ScalarField, SolverConfig};

fn gaussian(grid: PeriodicGrid) -> ScalarField {
    InitialCondition::gaussian(1.0, 1.0).sample(&grid)
}

#[test]
fn field_binary_round_trip() {
    let grid = PeriodicGrid::new(2, 3.0, 16).unwrap();
    let f = ScalarField::from_fn(grid, |x| (x[0] - 0.3 * x[1]).sin());
    let mut buf = Vec::new();
    write_field_binary(&f, &mut buf).unwrap();
    assert_eq!(buf.len(), 16 + 8 * 256);
    let g = read_field_binary(buf.as_slice()).unwrap();
    assert_eq!(g.values(), f.values());
    assert!(matches!(read_field_binary(&buf[..40]), Err(Error::Format(_))));
}

#[test]
fn unknown_model_lists_registry() {
    match model::registered("QUINTIC", 1) {
        Err(Error::Unknown { name, known, .. }) => {
            assert_eq!(name, "QUINTIC");
            for m in model::REGISTRY {
                assert!(known.contains(m));
            }
        }
        other => panic!("{other:?}"),
    }
}

#[test]
fn execution_modes_agree_bitwise() {
    let grid = PeriodicGrid::new(1, 10.0, 128).unwrap();
    let m = model::registered("CUBIC-DRIFT", 1).unwrap();
    let u0 = m.initial_field(&grid);
    let cfg = |execution| SolverConfig { time_step: 0.01, execution, ..SolverConfig::default() };
    let a = solve_mild(&u0, 0.1, &m, &cfg(Execution::Sequential)).unwrap();
    let b = solve_mild(&u0, 0.1, &m, &cfg(Execution::Parallel)).unwrap();
    assert_eq!(a.final_field().values(), b.final_field().values());

    let pcfg = |execution| ParticleConfig { particles: 3000, time_step: 0.01, seed: 5, execution, ..ParticleConfig::default() };
    let p = particles::simulate(&u0, 0.1, &m, &pcfg(Execution::Sequential), &[0.0, 0.1]).unwrap();
    let q = particles::simulate(&u0, 0.1, &m, &pcfg(Execution::Parallel), &[0.0, 0.1]).unwrap();
    assert_eq!(p.ensemble.positions(), q.ensemble.positions());
    assert_eq!(p.series.fields, q.series.fields);
}

#[test]
fn particle_dump_round_trip() {
    let grid = PeriodicGrid::new(2, 5.0, 32).unwrap();
    let ens = particles::sample_initial(&gaussian(grid), 500, 9).unwrap();
    let mut buf = Vec::new();
    particles::write_particles_binary(&ens, &mut buf).unwrap();
    let (dim, xs) = particles::read_particles_binary(buf.as_slice()).unwrap();
    assert_eq!(dim, 2);
    assert_eq!(xs, ens.positions());
}

#[test]
fn barrier_check_through_named_suite() {
    let grid = PeriodicGrid::new(1, 10.0, 64).unwrap();
    let ctx = CheckContext {
        model: model::registered("CUBIC", 1).unwrap(),
        grid,
        t_end: 0.1,
        solver: SolverConfig::with_step(0.01),
        particles: ParticleConfig::default(),
        seed: 1,
        n_test: 4,
        particle_cap: 5e-2,
    };
    let reports = verify::run_check("barrier", &ctx).unwrap();
    assert!(reports.iter().all(|r| r.pass));
    let mut csv = Vec::new();
    verify::write_reports_csv(&reports, &mut csv).unwrap();
    let csv = String::from_utf8(csv).unwrap();
    assert_eq!(csv.lines().count(), reports.len() + 1);
    assert!(matches!(verify::run_check("telepathy", &ctx), Err(Error::Unknown { .. })));
}
