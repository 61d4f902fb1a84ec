use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn repo() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn hindko() -> PathBuf {
    repo().join("data/fixtures/hindko")
}

fn demo() -> PathBuf {
    repo().join("data/demo")
}

fn atlas(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_atlas"))
        .args(args)
        .env_remove("GEOCODER_URL")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn copy_dir(from: &Path) -> TempDir {
    let dir = tempfile::tempdir().unwrap();
    for e in fs::read_dir(from).unwrap() {
        let e = e.unwrap();
        fs::copy(e.path(), dir.path().join(e.file_name())).unwrap();
    }
    dir
}

#[test]
fn validate_clean_fixture() {
    let o = atlas(&["validate", "--data", s(&hindko())]);
    assert_eq!(code(&o), 0, "{}", stdout(&o));
    assert!(stdout(&o).contains("ok: 1 sources"));
}

#[test]
fn validate_dangling_language() {
    let dir = copy_dir(&hindko());
    let refs = fs::read_to_string(dir.path().join("references.json")).unwrap();
    fs::write(dir.path().join("references.json"), refs.replace("\"Hindko\": [", "\"Hindku\": [")).unwrap();
    let o = atlas(&["validate", "--data", s(dir.path())]);
    assert_eq!(code(&o), 1);
    assert!(stdout(&o).lines().any(|l| l.starts_with("ERROR ") && l.contains("Hindku")), "{}", stdout(&o));
}

#[test]
fn validate_unknown_topic_warns() {
    let dir = copy_dir(&hindko());
    let refs = fs::read_to_string(dir.path().join("references.json")).unwrap();
    fs::write(dir.path().join("references.json"), refs.replace("\"overview\"", "\"folklore\"")).unwrap();
    let o = atlas(&["validate", "--data", s(dir.path())]);
    assert_eq!(code(&o), 0);
    assert!(stdout(&o).lines().any(|l| l.starts_with("WARN ") && l.contains("folklore")), "{}", stdout(&o));
}

#[test]
fn validate_missing_directory_is_usage_error() {
    assert_eq!(code(&atlas(&["validate", "--data", "/nonexistent/atlas"])), 2);
}

#[test]
fn unknown_flag_is_rejected() {
    assert_eq!(code(&atlas(&["stats", "--data", s(&hindko()), "--verbose"])), 2);
}

#[test]
fn stats_text_and_json() {
    let o = atlas(&["stats", "--data", s(&hindko())]);
    assert_eq!(code(&o), 0);
    assert!(stdout(&o).contains("sources\t1\n"));
    assert!(stdout(&o).contains("topic\toverview\t1\n"));
    let o = atlas(&["stats", "--data", s(&hindko()), "--json"]);
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["n_locations"], 2);
}

#[test]
fn render_svg_has_two_paths_and_is_deterministic() {
    let out = tempfile::tempdir().unwrap();
    let a = out.path().join("a.svg");
    let b = out.path().join("b.svg");
    assert_eq!(code(&atlas(&["render", "--data", s(&hindko()), "--out", s(&a)])), 0);
    assert_eq!(code(&atlas(&["render", "--data", s(&hindko()), "--out", s(&b)])), 0);
    let svg = fs::read_to_string(&a).unwrap();
    assert_eq!(svg.matches("<path ").count(), 2);
    assert_eq!(svg, fs::read_to_string(&b).unwrap());
}

#[test]
fn render_refuses_to_overwrite() {
    let out = tempfile::tempdir().unwrap();
    let a = out.path().join("a.geojson");
    fs::write(&a, "keep me").unwrap();
    assert_eq!(code(&atlas(&["render", "--data", s(&hindko()), "--out", s(&a)])), 2);
    assert_eq!(fs::read_to_string(&a).unwrap(), "keep me");
    assert_eq!(code(&atlas(&["render", "--data", s(&hindko()), "--out", s(&a), "--force"])), 0);
    let v: serde_json::Value = serde_json::from_str(&fs::read_to_string(&a).unwrap()).unwrap();
    assert_eq!(v["type"], "FeatureCollection");
}

#[test]
fn render_with_overlay_file() {
    let out = tempfile::tempdir().unwrap();
    let overlay = out.path().join("ov.json");
    fs::write(&overlay, r#"{"ergative": {"kind": "binary", "values": {"Hindko": 0}}}"#).unwrap();
    let svg = out.path().join("map.svg");
    let o = atlas(&["render", "--data", s(&hindko()), "--out", s(&svg), "--overlay", s(&overlay)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let text = fs::read_to_string(&svg).unwrap();
    assert!(text.contains("fill=\"#dd2225\""));
    assert!(text.contains("class=\"legend\""));
}

#[test]
fn render_unknown_feature_is_usage_error() {
    let out = tempfile::tempdir().unwrap();
    let o = atlas(&["render", "--data", s(&demo()), "--out", s(&out.path().join("m.svg")), "--feature", "nope"]);
    assert_eq!(code(&o), 2);
}

#[test]
fn render_bad_extension_is_usage_error() {
    let out = tempfile::tempdir().unwrap();
    let o = atlas(&["render", "--data", s(&hindko()), "--out", s(&out.path().join("m.png"))]);
    assert_eq!(code(&o), 2);
}

#[test]
fn overlay_lists_values() {
    let o = atlas(&["overlay", "--data", s(&demo()), "--feature", "ergativity"]);
    assert_eq!(code(&o), 0);
    let text = stdout(&o);
    assert!(text.contains("hindi\t1.0000\t#63c2d8"), "{text}");
    assert!(text.contains("santali\tno data\t#cccccc"), "{text}");
}

#[test]
fn align_doublet_fixture() {
    let out = tempfile::tempdir().unwrap();
    let path = out.path().join("rates.json");
    let o = atlas(&[
        "align",
        "--cognates",
        s(&demo().join("cognates.json")),
        "--query",
        s(&demo().join("query.json")),
        "--out",
        s(&path),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let v: serde_json::Value = serde_json::from_str(&fs::read_to_string(&path).unwrap()).unwrap();
    assert_eq!(v["sound_change"]["values"]["hindi"], 0.5);
    assert_eq!(v["sound_change"]["kind"], "continuous");
}

#[test]
fn align_empty_cognates() {
    let out = tempfile::tempdir().unwrap();
    let cognates = out.path().join("c.json");
    fs::write(&cognates, "[]").unwrap();
    let path = out.path().join("rates.json");
    let o = atlas(&["align", "--cognates", s(&cognates), "--query", s(&demo().join("query.json")), "--out", s(&path)]);
    assert_eq!(code(&o), 0);
    let v: serde_json::Value = serde_json::from_str(&fs::read_to_string(&path).unwrap()).unwrap();
    assert_eq!(v["sound_change"]["values"], serde_json::json!({}));
}

#[test]
fn align_missing_query_is_usage_error() {
    let out = tempfile::tempdir().unwrap();
    let o = atlas(&[
        "align",
        "--cognates",
        s(&demo().join("cognates.json")),
        "--query",
        s(&out.path().join("missing.json")),
        "--out",
        s(&out.path().join("r.json")),
    ]);
    assert_eq!(code(&o), 2);
    assert!(!out.path().join("r.json").exists());
}

#[test]
fn geocode_with_stub_table() {
    let dir = copy_dir(&hindko());
    fs::remove_file(dir.path().join("locations.tsv")).unwrap();
    let table = dir.path().join("table.json");
    fs::write(&table, r#"{"Kohat": [71.44, 33.59]}"#).unwrap();

    let o = atlas(&["geocode", "--data", s(dir.path()), "--provider", "stub", "--table", s(&table)]);
    assert_eq!(code(&o), 1, "Peshawar is not in the table");
    assert!(stdout(&o).contains("UNRESOLVED peshawar"), "{}", stdout(&o));
    let cache = fs::read_to_string(dir.path().join("locations.tsv")).unwrap();
    assert!(cache.starts_with("kohat\t71.440000\t33.590000\tstub\tfalse"), "{cache}");

    fs::write(&table, r#"{"Kohat": [0, 0], "Peshawar": [71.578, 34.008]}"#).unwrap();
    let o = atlas(&["geocode", "--data", s(dir.path()), "--provider", "stub", "--table", s(&table)]);
    assert_eq!(code(&o), 0, "{}", stdout(&o));
    let cache = fs::read_to_string(dir.path().join("locations.tsv")).unwrap();
    // The cached Kohat entry is not re-queried.
    assert!(cache.contains("kohat\t71.440000"), "{cache}");
    assert!(cache.contains("peshawar\t71.578000"), "{cache}");
}

#[test]
fn geocode_without_endpoint_is_usage_error() {
    let dir = copy_dir(&hindko());
    assert_eq!(code(&atlas(&["geocode", "--data", s(dir.path())])), 2);
}

#[test]
fn serve_rejects_missing_directory() {
    assert_eq!(code(&atlas(&["serve", "--data", "/nonexistent/atlas", "--bind", "127.0.0.1:0"])), 2);
}
