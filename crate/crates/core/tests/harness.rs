use std::process::Command;

use nonholo::complexity::{geometric_sweep, ComplexityKind};
use nonholo::harness::*;
use nonholo::ode::commutator_consistency;
use nonholo::planner::CostKind;
use nonholo::structure::{drift_order, flag_at, DEFAULT_RANK_TOL};
use nonholo::{parse_field, Error};

#[test]
fn registry_flags() {
    let expect: [(&str, &[usize]); 4] = [
        ("heisenberg", &[2, 3]),
        ("engel", &[2, 3, 4]),
        ("heisenberg_drift", &[2, 3]),
        ("riemann2d", &[2]),
    ];
    for (name, gv) in expect {
        let sys = system(name).unwrap();
        let flag = flag_at(&sys.small(), &vec![0.0; sys.dim()], DEFAULT_RANK_TOL).unwrap();
        assert_eq!(flag.dims.as_slice(), gv, "{name}");
    }
    assert_eq!(drift_order(&system("heisenberg_drift").unwrap(), &[0.0; 3], DEFAULT_RANK_TOL).unwrap(), 2);
    assert!(matches!(system("nope"), Err(Error::Unknown { .. })));
    for (c, _) in CURVES {
        let sys = system("heisenberg_drift").unwrap();
        assert!(curve(c, &sys).is_ok(), "{c}");
    }
    assert!(curve("drift-orbit", &system("heisenberg").unwrap()).is_err());
}

#[test]
fn riemann_ratio_derivative() {
    let sys = system("riemann2d").unwrap();
    let f = &sys.controlled()[1];
    let h = 1e-6;
    let r = |x: f64| {
        let v = f.eval(&[x, 0.0]);
        v[0] / v[1]
    };
    assert!(((r(h) - r(-h)) / (2.0 * h) - 1.0).abs() <= 1e-8);
}

#[test]
fn christoffel_default_pair() {
    let (p1, p2) = parse_phi("x1", "1").unwrap();
    let c = christoffel_check(&p1, &p2).unwrap();
    assert_eq!(c.gamma1_11, 0.0);
    assert_eq!(c.gamma2_11, 1.0);
    assert!((c.finite_difference - 1.0).abs() <= 1e-6);
    assert!(c.not_geodesic);
    // the metric itself gives the opposite sign for the second symbol
    assert!((c.metric_gammas.0).abs() <= 1e-6);
    assert!((c.metric_gammas.1 + 1.0).abs() <= 1e-6);
}

#[test]
fn christoffel_other_pairs() {
    let (p1, p2) = parse_phi("2 + x2", "3").unwrap();
    let c = christoffel_check(&p1, &p2).unwrap();
    assert_eq!((c.gamma1_11, c.gamma2_11), (0.0, 0.0));
    assert!(!c.not_geodesic);

    // φ1/φ2 = sin(x1)/(1 + x1²): derivative 1 at 0, ratio 0
    let (p1, p2) = parse_phi("sin(x1)", "1 + x1^2").unwrap();
    let c = christoffel_check(&p1, &p2).unwrap();
    assert!((c.gamma2_11 - 1.0).abs() <= 1e-12);
    assert!(c.gamma1_11.abs() <= 1e-12);

    // ratio (1 + x1)/2: Γ¹ = ½·½, Γ² = ½
    let (p1, p2) = parse_phi("1 + x1", "2").unwrap();
    let c = christoffel_check(&p1, &p2).unwrap();
    assert!((c.gamma1_11 - 0.25).abs() <= 1e-12);
    assert!((c.gamma2_11 - 0.5).abs() <= 1e-12);

    let (p1, p2) = parse_phi("1", "x1").unwrap();
    assert!(christoffel_check(&p1, &p2).is_err());
}

const SPEC: &str = "\
# planar unicycle
[system]
name = unicycle
dim = 3
drift = 0.5*cos(x3), 0.5*sin(x3), 0
field = cos(x3), sin(x3), 0
field = 0, 0, 1
box = -1:1, -1:1, -3.2:3.2

[defaults]
tmax = 0.5
sweep = 0.4, 0.2, 0.1   # radii
seed = 11
";

#[test]
fn spec_file_parses() {
    let s = SystemSpecFile::parse(SPEC).unwrap();
    assert_eq!(s.name, "unicycle");
    assert_eq!(s.dim, 3);
    assert_eq!(s.fields.len(), 2);
    assert_eq!(s.bounds[2], (-3.2, 3.2));
    assert_eq!(s.tmax, Some(0.5));
    assert_eq!(s.sweep, Some(vec![0.4, 0.2, 0.1]));
    assert_eq!(s.seed, Some(11));
    let sys = s.system().unwrap();
    assert!(sys.has_drift());
    let flag = flag_at(&sys.small(), &[0.0; 3], DEFAULT_RANK_TOL).unwrap();
    assert_eq!(flag.dims, vec![2, 3]);
}

#[test]
fn spec_file_errors_name_the_line() {
    let cases = [
        ("[system]\nname = a\ndim = 2\nfield = 1, 0\nbox = 0:1\n", "box"),
        ("[system]\nname = a\ndim = 2\nfield = 1, 0\ncolour = red\n", "line 5"),
        ("name = a\n", "line 1"),
        ("[system]\nname = a\ndim = 2\nfield = 1, 0\n[defaults]\nsweep = 0.1, 0.2\n", "decreasing"),
        ("[system]\nname = a\ndim = 2\nfield = 1, 0\n[defaults]\ntmax = x\n", "line 6"),
        ("[system]\nname = a\ndim = 2\n", "field"),
        ("[nope]\n", "line 1"),
    ];
    for (text, needle) in cases {
        match SystemSpecFile::parse(text) {
            Err(Error::Config(m)) => assert!(m.contains(needle), "{m} lacks {needle}"),
            other => panic!("{text:?}: {other:?}"),
        }
    }
    let bad_field = "[system]\nname = a\ndim = 2\nfield = 1, 0, 0\n";
    assert!(SystemSpecFile::parse(bad_field).is_err());
}

fn row(id: &str, eps: f64, value: f64) -> ResultRow {
    ResultRow {
        experiment: id.into(),
        kind: ComplexityKind::Cost,
        cost: CostKind::J,
        eps: Some(eps),
        value: Some(value),
        pieces: Some(value.ceil() as usize),
        predicted: Some(2),
        slope: None,
        converged: "true".into(),
        seed: 3,
    }
}

#[test]
fn csv_round_trip_and_summary() {
    let mut rows: Vec<ResultRow> = geometric_sweep(0.4, 0.1, 5).into_iter().map(|e| row("demo", e, 0.5 / (e * e))).collect();
    rows[1].converged = "false".into();
    rows[1].value = Some(1e9);
    let (slope, pass) = summarize(&rows, Some(2), 0.3);
    // the unconverged row is excluded, leaving 4 points: below the fit minimum
    assert!(slope.is_none() && !pass);
    rows.push(row("demo", 0.08, 0.5 / 0.0064));
    let (slope, pass) = summarize(&rows, Some(2), 0.3);
    assert!((slope.unwrap() - 2.0).abs() <= 1e-9 && pass);

    let mut cfg = ExperimentConfig::new("demo", "heisenberg", "vertical", &[ComplexityKind::Cost], vec![]);
    cfg.tolerance = 0.3;
    let text = write_csv(&rows, &[cfg], &["note".into()]);
    assert!(text.lines().nth(2).unwrap().starts_with("# tolerance demo"));
    assert!(text.contains(CSV_HEADER));
    let (back, tol) = read_csv(&text).unwrap();
    assert_eq!(back, rows);
    assert_eq!(tol, vec![("demo".to_string(), 0.3)]);
    assert!(ResultRow::parse("a,b").is_err());
}

#[test]
fn experiment_rows_carry_a_recomputable_summary() {
    let mut cfg = ExperimentConfig::new("x", "heisenberg", "x-axis", &[ComplexityKind::Cost], geometric_sweep(0.4, 0.1, 5));
    cfg.costs = vec![CostKind::J];
    let rows = run_experiment(&cfg).unwrap();
    assert_eq!(rows.len(), 6);
    let summary = rows.last().unwrap();
    assert!(summary.is_summary());
    assert_eq!(summary.predicted, Some(1));
    let (slope, pass) = summarize(&rows[..5], Some(1), cfg.tolerance);
    assert_eq!(slope, summary.slope);
    assert_eq!(summary.converged, if pass { "pass" } else { "fail" });
    assert!(pass);
}

#[test]
fn points_parse() {
    assert_eq!(parse_point("1, -2.5, 1e-3", 3).unwrap(), vec![1.0, -2.5, 1e-3]);
    assert!(matches!(parse_point("1, 2", 3), Err(Error::DimensionMismatch { .. })));
    assert!(parse_point("1, x1, 2", 3).is_err());
}

#[test]
fn commutator_flows() {
    // [∂x, x∂y] = ∂y exactly, so the second-order expansion has no remainder
    let f = parse_field("1, 0", 2).unwrap();
    let g = parse_field("0, x1", 2).unwrap();
    let r = commutator_consistency(&f, &g, &[0.3, 0.1], &[0.1, 0.05, 0.025]).unwrap();
    assert!(r.order.is_infinite());
    let f = parse_field("1, 0", 2).unwrap();
    let g = parse_field("0, sin(x1)", 2).unwrap();
    let steps = [0.08, 0.04, 0.02, 0.01];
    let r = commutator_consistency(&f, &g, &[0.4, 0.0], &steps).unwrap();
    assert!((r.order - 1.0).abs() <= 0.15, "{}", r.order);
    assert!(r.errors.windows(2).all(|w| w[1].1 < w[0].1));
    assert!(commutator_consistency(&f, &g, &[0.0, 0.0], &[0.1]).is_err());
}

fn cli(args: &[&str]) -> (i32, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_nonholo")).args(args).output().unwrap();
    (out.status.code().unwrap_or(-1), String::from_utf8_lossy(&out.stdout).into_owned())
}

#[test]
fn cli_exit_codes() {
    let (code, out) = cli(&["list"]);
    assert_eq!(code, 0);
    assert!(out.contains("heisenberg_drift") && out.contains("vertical-path"));
    let (code, out) = cli(&["analyze", "engel"]);
    assert_eq!(code, 0);
    assert!(out.contains("(2,3,4)"), "{out}");
    assert_eq!(cli(&["analyze", "nosuch"]).0, 2);
    assert_eq!(cli(&["complexity", "heisenberg", "x-axis", "--kind", "tube"]).0, 2);
    assert_eq!(cli(&["complexity", "heisenberg", "nosuch", "--kind", "cost"]).0, 2);
    assert_eq!(cli(&["distance", "heisenberg", "0,0", "1,0,0"]).0, 2);
    assert_eq!(cli(&["frobnicate"]).0, 2);
    let (code, out) = cli(&["distance", "heisenberg", "0,0,0", "0.1,0,0", "--cost", "SR"]);
    assert_eq!(code, 0);
    assert!(out.contains("converged true"), "{out}");
}

#[test]
fn cli_reads_spec_files() {
    let dir = std::env::temp_dir().join(format!("nonholo-spec-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let good = dir.join("unicycle.sys");
    std::fs::write(&good, SPEC).unwrap();
    let (code, out) = cli(&["analyze", good.to_str().unwrap()]);
    assert_eq!(code, 0);
    assert!(out.contains("(2,3)") && out.contains("drift order"), "{out}");
    let bad = dir.join("bad.sys");
    std::fs::write(&bad, "[system]\nname = a\ndim = two\n").unwrap();
    assert_eq!(cli(&["analyze", bad.to_str().unwrap()]).0, 2);
    let _ = std::fs::remove_dir_all(&dir);
}
