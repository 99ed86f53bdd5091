use chemotaxis::io::config::{parse_config, read_config, serialize_config};
use chemotaxis::io::csv::{read_timeseries_csv, write_timeseries_csv, HEADER};
use chemotaxis::io::snapshot::{read_field_snapshot, write_field_snapshot};
use chemotaxis::solver::{run, RunOptions};
use chemotaxis::{Error, Grid2D, ScalarField};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const SMALL: &str = "nx = 16\nny = 16\nlx = 1\nly = 1\nr = 1\nmu = 10\nbeta = 0\nchi = 1\n\
                     t_end = 0.2\nrecord_every = 0.002\nic_mode = random_fourier\n\
                     u_base = 0.1\nv_base = 1\namplitude = 0.5\nmodes_k = 3\nseed = 7\n";

#[test]
fn trajectory_csv_round_trips_exactly() {
    let cfg = parse_config(SMALL).unwrap();
    let out = run(&cfg.ic, &cfg.grid, &cfg.params, &RunOptions::every(cfg.record_every)).unwrap();
    assert!(out.records.len() >= 100, "{} records", out.records.len());
    let records = &out.records[..100];

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("timeseries.csv");
    write_timeseries_csv(records, &path).unwrap();
    let back = read_timeseries_csv(&path).unwrap();
    assert_eq!(back, records);

    let text = std::fs::read_to_string(&path).unwrap();
    assert_eq!(text.lines().next(), Some(HEADER));
    assert_eq!(text.lines().count(), 101);
    // upvq was not tracked, so its column stays empty.
    let second = text.lines().nth(1).unwrap();
    assert_eq!(second.split(',').nth(18), Some(""));
}

#[test]
fn single_record_is_two_lines() {
    let cfg = parse_config(SMALL).unwrap();
    let out = run(&cfg.ic, &cfg.grid, &cfg.params, &RunOptions::every(cfg.record_every)).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("one.csv");
    write_timeseries_csv(&out.records[..1], &path).unwrap();
    assert_eq!(std::fs::read_to_string(&path).unwrap().lines().count(), 2);
}

#[test]
fn snapshot_round_trips_random_field() {
    let g = Grid2D::new(12, 6, 2.0, 1.0).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let f = ScalarField::from_values(g, (0..72).map(|_| rng.gen::<f64>() * 1e3 - 5e2).collect()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("u.field");
    write_field_snapshot(&f, "u", 0.125, &path).unwrap();
    let (back, meta) = read_field_snapshot(&path).unwrap();
    assert_eq!(back, f);
    assert_eq!(meta.name, "u");
    assert_eq!(meta.t, 0.125);
}

#[test]
fn config_file_round_trip_and_relative_ic_paths() {
    let dir = tempfile::tempdir().unwrap();
    let g = Grid2D::unit_square(8).unwrap();
    write_field_snapshot(&ScalarField::constant(g, 0.2), "u", 0.0, &dir.path().join("u0.field")).unwrap();
    write_field_snapshot(&ScalarField::constant(g, 0.9), "v", 0.0, &dir.path().join("v0.field")).unwrap();
    let text = "nx = 8\nny = 8\nlx = 1\nly = 1\nr = 1\nmu = 5\nbeta = 0\nchi = 1\nt_end = 0.01\n\
                record_every = 0.01\nic_mode = file\nu_base = 0.2\nv_base = 0.9\n\
                ic_u_file = u0.field\nic_v_file = v0.field\n";
    let path = dir.path().join("run.cfg");
    std::fs::write(&path, text).unwrap();
    let cfg = read_config(&path).unwrap();
    let out = run(&cfg.ic, &cfg.grid, &cfg.params, &RunOptions::every(cfg.record_every)).unwrap();
    assert!((out.records[0].linf_v - 0.9).abs() < 1e-15);

    let again = parse_config(&serialize_config(&cfg)).unwrap();
    assert_eq!(again, cfg);
}

#[test]
fn missing_snapshot_reports_io_error() {
    let err = read_field_snapshot("/nonexistent/dir/u.field").unwrap_err();
    assert!(matches!(err, Error::Io { .. }), "{err:?}");
}
