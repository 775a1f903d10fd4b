use std::path::PathBuf;

use ramcell_core::config::Config;
use ramcell_core::job::{emit, prepare_path, simulate};

fn golden(name: &str, actual: &str) {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/golden").join(name);
    if std::env::var_os("UPDATE_GOLDEN").is_some() {
        std::fs::write(&path, actual).unwrap();
    }
    let expected = std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
    assert!(expected == actual, "{name} differs from the pinned file");
}

#[test]
fn rectangle_program_is_pinned() {
    let mut c = Config::default();
    c.job.shape = Some("rectangle-90x60".into());
    c.job.material = "dlp-gf50".into();
    let p = prepare_path(&c, None).unwrap();
    let s = simulate(&c, &p).unwrap();
    let a = emit(&s).unwrap();
    golden("rectangle.script", &a.script);
    golden("rectangle_steps.csv", &a.steps_csv);
    golden("rectangle_io_events.csv", &a.events_csv);
}
