mod common;

use chemoopt::output::{
    read_field_vtk, render_field_vtk, render_series_csv, write_field_vtk, write_series_csv,
};
use chemoopt::{parse_config_in, Error, Grid};

use common::*;

#[test]
fn vtk_round_trip_is_bit_exact() {
    let grid = Grid::uniform(7, 5, 1.3, 0.7).unwrap();
    let mut r = rng(3);
    let mut values = random_values(&mut r, grid.n_cells(), -1e3, 1e3);
    values[0] = 1e-300;
    values[1] = -0.0;
    values[2] = 5e-324;
    values[3] = f64::MAX;
    values[4] = 0.1;
    let field = grid.field(values.clone()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("f.vtk");
    write_field_vtk(&grid, &field, &path).unwrap();
    let (nx, ny, back) = read_field_vtk(&std::fs::read_to_string(&path).unwrap()).unwrap();
    assert_eq!((nx, ny), (7, 5));
    for (a, b) in values.iter().zip(&back) {
        assert_eq!(a.to_bits(), b.to_bits());
    }
}

#[test]
fn vtk_header_layout() {
    let grid = Grid::uniform(2, 2, 1.0, 1.0).unwrap();
    let text = render_field_vtk(&grid, &grid.zeros()).unwrap();
    let expected = "# vtk DataFile Version 3.0\nchemoopt field\nASCII\nDATASET STRUCTURED_POINTS\n\
                    DIMENSIONS 3 3 1\nORIGIN 0 0 0\nSPACING 0.5 0.5 1\nCELL_DATA 4\n\
                    SCALARS value double 1\nLOOKUP_TABLE default\n0\n0\n0\n0\n";
    assert_eq!(text, expected);
}

#[test]
fn truncated_vtk_is_rejected() {
    let grid = Grid::uniform(3, 2, 1.0, 1.0).unwrap();
    let text = render_field_vtk(&grid, &grid.constant(1.5)).unwrap();
    let cut = &text[..text.len() - 4];
    assert!(read_field_vtk(cut).is_err());
}

#[test]
fn failed_write_leaves_no_file() {
    let dir = tempfile::tempdir().unwrap();
    let grid = Grid::uniform(2, 2, 1.0, 1.0).unwrap();
    let missing = dir.path().join("absent").join("f.vtk");
    let err = write_field_vtk(&grid, &grid.zeros(), &missing).unwrap_err();
    assert!(matches!(err, Error::Io { .. }), "{err}");
    assert!(!missing.exists());

    let target = dir.path().join("series.csv");
    std::fs::write(&target, "old\n").unwrap();
    let t = [0.0, 1.0];
    assert!(write_series_csv(&[("t", &t), ("m", &t[..1])], &target).is_err());
    assert_eq!(std::fs::read_to_string(&target).unwrap(), "old\n");
    assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 1);
}

#[test]
fn csv_is_byte_stable() {
    let t = [0.0, 0.1, 0.2];
    let m = [1.0 / 3.0, 2.0 / 3.0, 1e-20];
    let a = render_series_csv(&[("t", &t), ("mass", &m)]).unwrap();
    let b = render_series_csv(&[("t", &t), ("mass", &m)]).unwrap();
    assert_eq!(a, b);
    assert_eq!(
        a,
        "t,mass\n0,0.33333333333333331\n0.10000000000000001,0.66666666666666663\n\
         0.20000000000000001,9.9999999999999995e-21\n"
    );
}

#[test]
fn config_errors_name_the_key() {
    let dir = tempfile::tempdir().unwrap();
    let cases = [
        (
            r#"{"grid": {"nx": 0, "ny": 3}, "time": {"t_final": 1, "n_steps": 2}}"#,
            "grid.nx",
        ),
        (
            r#"{"grid": {"nx": 2, "ny": 3}, "time": {"t_final": -1, "n_steps": 2}}"#,
            "time.t_final",
        ),
        (
            r#"{"grid": {"nx": 2, "ny": 3}, "time": {"t_final": 1, "n_steps": 2},
             "optimizer": {"armijo_c": 2}}"#,
            "optimizer.armijo_c",
        ),
        (
            r#"{"grid": {"nx": 2, "ny": 3}, "time": {"t_final": 1, "n_steps": 2},
             "gradcheck": {"eps": [1e-3, 0]}}"#,
            "gradcheck.eps[1]",
        ),
        (
            r#"{"grid": {"nx": 2, "ny": 3}, "time": {"t_final": 1, "n_steps": 2},
             "control_domain": {"x": [0.9, 0.95], "y": [0.9, 0.95]}}"#,
            "control_domain",
        ),
        (
            r#"{"grid": {"nx": 2, "ny": 3}, "time": {"t_final": 1, "n_steps": 2},
             "initial": {"v0": {"kind": "constant", "value": -1}}}"#,
            "initial.v0",
        ),
        (
            r#"{"grid": {"nx": 2, "ny": 3}, "time": {"t_final": 1, "n_steps": "two"}}"#,
            "time.n_steps",
        ),
    ];
    for (text, key) in cases {
        match parse_config_in(text, dir.path()) {
            Err(Error::Config { path, .. }) => assert_eq!(path, key, "{text}"),
            other => panic!("{text}: {other:?}"),
        }
    }
}

#[test]
fn field_file_with_wrong_length_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("u0.txt"), "1 2 3").unwrap();
    let text = r#"{"grid": {"nx": 2, "ny": 2}, "time": {"t_final": 1, "n_steps": 2},
                   "initial": {"u0": {"kind": "file", "path": "u0.txt"}}}"#;
    match parse_config_in(text, dir.path()) {
        Err(Error::Config { path, .. }) => assert_eq!(path, "initial.u0.path"),
        other => panic!("{other:?}"),
    }
}
