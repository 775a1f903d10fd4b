use ramcell_core::config::Config;
use ramcell_core::job::{emit, prepare_path, simulate};

fn cfg(shape: &str, material: &str) -> Config {
    let mut c = Config::default();
    c.job.shape = Some(shape.into());
    c.job.material = material.into();
    c
}

#[test]
fn specimens_print() {
    for (shape, mat) in [("rectangle-90x60", "dlp-gf50"), ("wall-50x10", "dlp-fs9"), ("square-30x30x8.5", "dlp-fs9")] {
        let c = cfg(shape, mat);
        let p = prepare_path(&c, None).unwrap();
        let t0 = std::time::Instant::now();
        let s = simulate(&c, &p).unwrap();
        eprintln!("{shape}: {:?}\n{}", t0.elapsed(), s.report.to_text());
        assert!(s.report.printable(), "{shape}");
        emit(&s).unwrap();
    }
}

#[test]
fn spread_fit_matches_frozen_constant() {
    use ramcell_core::cure_sim::{fit_spread_constant, CalibrationTarget, SPREAD_C};
    use ramcell_core::shapes::BuiltinShape;
    let maps: Vec<_> = ["wall-50x10", "square-30x30x8.5"]
        .iter()
        .map(|s| {
            let c = cfg(s, "dlp-fs9");
            simulate(&c, &prepare_path(&c, None).unwrap()).unwrap().map
        })
        .collect();
    let mut targets = Vec::new();
    for (map, shape) in maps.iter().zip([BuiltinShape::WALL, BuiltinShape::SQUARE]) {
        for r in shape.reference() {
            targets.push(CalibrationTarget { map, measure: r.measure, mean: r.mean, sigma: r.tol });
        }
    }
    let c = fit_spread_constant(&targets, 5.0, 60.0);
    eprintln!("fitted spread constant {c}");
    assert!((c - SPREAD_C).abs() < 0.005, "{c}");
}

#[test]
fn planned_gcode_replans_to_same_path() {
    use ramcell_core::gcode;
    for shape in ["rectangle-90x60", "wall-50x10", "square-30x30x8.5"] {
        let c = cfg(shape, "dlp-fs9");
        let a = prepare_path(&c, None).unwrap().toolpath;
        let text = gcode::emit(&a);
        let mut g = c.clone();
        g.job.shape = None;
        g.job.gcode = Some("toolpath.gcode".into());
        let b = prepare_path(&g, Some(&text)).unwrap().toolpath;
        assert_eq!(a.len(), b.len(), "{shape}");
        for (x, y) in a.segments.iter().zip(&b.segments) {
            assert!(x.start.distance(y.start) < 1e-6 && x.end.distance(y.end) < 1e-6, "{shape}");
            assert_eq!((x.extruding, x.uv_on, x.layer), (y.extruding, y.uv_on, y.layer), "{shape}");
            assert!((x.speed - y.speed).abs() < 1e-9);
            assert!(x.orientation.angle_to(&y.orientation) < 1e-9);
        }
    }
}

#[test]
fn repeated_runs_are_identical() {
    let c = cfg("wall-50x10", "dlp-fs9");
    let run = || {
        let s = simulate(&c, &prepare_path(&c, None).unwrap()).unwrap();
        (s.report.to_text(), emit(&s).unwrap())
    };
    assert_eq!(run(), run());
}

#[test]
fn square_without_uv_is_all_undercured() {
    let mut c = cfg("square-30x30x8.5", "dlp-fs9");
    c.job.uv_enabled = false;
    let s = simulate(&c, &prepare_path(&c, None).unwrap()).unwrap();
    let d = s.report.dose.unwrap();
    assert_eq!(d.undercured, d.elements);
    assert_eq!(d.min_dose, 0.0);
}

#[test]
fn far_placement_reports_reach_failure() {
    let mut c = cfg("rectangle-90x60", "dlp-gf50");
    c.cell.print_origin = [1200.0, 0.0, 0.0];
    let s = simulate(&c, &prepare_path(&c, None).unwrap()).unwrap();
    assert!(!s.report.printable());
    assert!(s.report.plan_failures[0].contains("reach"), "{:?}", s.report.plan_failures);
    assert!(emit(&s).is_err());
}
