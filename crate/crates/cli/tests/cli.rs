use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_entimpute"));
    for var in [
        "ENTIMPUTE_CONFIG",
        "ENTIMPUTE_CORPUS",
        "ENTIMPUTE_LEXICON",
        "ENTIMPUTE_GAZETTEER",
        "ENTIMPUTE_MODEL",
        "ENTIMPUTE_KEYS",
        "ENTIMPUTE_OUT_DIR",
        "ENTIMPUTE_WORKERS",
    ] {
        c.env_remove(var);
    }
    c
}

fn run(cmd: &mut Command) -> Output {
    cmd.output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

/// A small synthetic corpus plus a pipeline config pointing at it.
fn workspace(records: usize) -> (tempfile::TempDir, PathBuf) {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    let o = run(bin().args(["synth", "--records", &records.to_string(), "--out-dir"]).arg(&data));
    assert!(o.status.success(), "{}", stderr(&o));
    let conf = dir.path().join("run.conf");
    fs::write(
        &conf,
        "# test run\ncorpus = data/records.tsv\nlexicon = data/lexicon.tsv\ngazetteer = data/gazetteer.tsv\nout_dir = out\nworkers = 2\n",
    )
    .unwrap();
    (dir, conf)
}

fn data(dir: &Path, name: &str) -> PathBuf {
    dir.join("data").join(name)
}

#[test]
fn full_run_then_idempotent_rerun() {
    let (dir, conf) = workspace(1500);
    let o = run(bin().arg("run").arg("--config").arg(&conf));
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let err = stderr(&o);
    for stage in ["ingest", "train", "impute-category", "build-gazetteer", "impute-location", "geocode", "report"] {
        assert!(err.contains(&format!("stage={stage} records=")), "missing {stage} in {err}");
    }
    let out = dir.path().join("out");
    for f in ["records.tsv", "provenance.tsv", "geocode.tsv", "model.json", "location_report.tsv"] {
        assert!(out.join(f).exists(), "{f}");
    }
    assert!(stdout(&o).starts_with("field\toriginal\timputed\tfailed\ttotal\n"));

    let o = run(bin()
        .arg("run")
        .arg("--config")
        .arg(&conf)
        .arg("--corpus")
        .arg(out.join("records.tsv"))
        .arg("--set")
        .arg(format!("out_dir={}", dir.path().join("again").display())));
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(stderr(&o).contains("0 values filled"), "{}", stderr(&o));
}

#[test]
fn skip_geocode_stops_after_location() {
    let (dir, conf) = workspace(500);
    let o = run(bin().arg("run").arg("--config").arg(&conf).args(["--skip", "geocode"]));
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(!stderr(&o).contains("stage=geocode"));
    let out = dir.path().join("out");
    assert!(out.join("records.location.tsv").exists());
    assert!(!out.join("geocode.tsv").exists());
}

#[test]
fn env_overrides_paths() {
    let (dir, conf) = workspace(300);
    let o = run(bin()
        .arg("run")
        .arg("--config")
        .arg(&conf)
        .env("ENTIMPUTE_OUT_DIR", dir.path().join("from-env"))
        .env("ENTIMPUTE_WORKERS", "3"));
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(dir.path().join("from-env").join("records.tsv").exists());
}

#[test]
fn config_errors_exit_2() {
    let (dir, conf) = workspace(50);
    let o = run(bin().arg("run").arg("--config").arg(&conf).args(["--set", "workers=0"]));
    assert_eq!(o.status.code(), Some(2));
    let o = run(bin().arg("run").arg("--config").arg(&conf).args(["--set", "colour=red"]));
    assert_eq!(o.status.code(), Some(2));
    let o = run(bin().arg("run").arg("--config").arg(&conf).args(["--skip", "everything"]));
    assert_eq!(o.status.code(), Some(2));
    let o = run(bin().arg("run").arg("--config").arg(&conf).arg("--corpus").arg(dir.path().join("missing.tsv")));
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    let o = run(bin().arg("no-such-command"));
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn stage_failure_exits_1_and_names_the_stage() {
    let (dir, conf) = workspace(50);
    let bad = dir.path().join("bad.tsv");
    fs::write(&bad, "id\tname\n1\tx\n").unwrap();
    let o = run(bin().arg("run").arg("--config").arg(&conf).arg("--corpus").arg(&bad));
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("stage ingest failed"), "{}", stderr(&o));
}

#[test]
fn segment_example_name() {
    let o = run(bin().args(["segment", "武汉***物业管理有限公司"]));
    assert!(o.status.success());
    let s = stdout(&o);
    assert!(s.contains("1\t武汉\tns\n"));
    assert!(s.contains("1\t物业\tn\n1\t管理\tvn\n"));
}

#[test]
fn geocode_respects_key_quota() {
    let dir = tempfile::tempdir().unwrap();
    let records = dir.path().join("r.tsv");
    let mut text = String::from("id\tname\tcategory\taddress\tpostcode\tdata_source\n");
    for i in 0..8 {
        text.push_str(&format!("r{i}\t\t\t湖北省武汉市江岸区南京路{i}号\t\t\n"));
    }
    fs::write(&records, text).unwrap();
    let keys = dir.path().join("keys.tsv");
    fs::write(&keys, "only\t5\n").unwrap();
    let out = dir.path().join("geo.tsv");
    let o = run(bin().arg("geocode").arg(&records).arg("--keys").arg(&keys).arg("--output").arg(&out));
    assert!(o.status.success(), "{}", stderr(&o));
    let table = fs::read_to_string(&out).unwrap();
    assert_eq!(table.lines().next(), Some("id\tlon\tlat\tstatus"));
    assert_eq!(table.lines().filter(|l| l.ends_with("\tok")).count(), 5);
    assert_eq!(table.lines().filter(|l| l.ends_with("\tquota-exhausted")).count(), 3);
}

#[test]
fn train_evaluate_and_impute_category() {
    let (dir, _) = workspace(1200);
    let records = data(dir.path(), "records.tsv");
    let lexicon = data(dir.path(), "lexicon.tsv");
    let model = dir.path().join("nb.json");
    let o = run(bin().arg("train").arg(&records).arg("--lexicon").arg(&lexicon).args(["--method", "nb", "--output"]).arg(&model));
    assert!(o.status.success(), "{}", stderr(&o));

    let o = run(bin().arg("evaluate").arg(&records).arg("--lexicon").arg(&lexicon).args(["--method", "nb", "--folds", "5"]));
    assert!(o.status.success(), "{}", stderr(&o));
    let overall = stdout(&o).lines().find(|l| l.starts_with("overall")).unwrap().to_string();
    let acc: f64 = overall.rsplit('\t').next().unwrap().parse().unwrap();
    assert!(acc > 0.9, "{overall}");

    let filled = dir.path().join("filled.tsv");
    let o = run(bin()
        .arg("impute-category")
        .arg(&records)
        .arg("--lexicon")
        .arg(&lexicon)
        .arg("--model")
        .arg(&model)
        .arg("--output")
        .arg(&filled));
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("total_filled\t"));

    let o = run(bin().arg("evaluate").arg(&records).args(["--method", "bogus"]));
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn location_geocode_export_and_kfunction() {
    let (dir, _) = workspace(800);
    let records = data(dir.path(), "records.tsv");
    let located = dir.path().join("located.tsv");
    let o = run(bin()
        .arg("impute-location")
        .arg(&records)
        .arg("--lexicon")
        .arg(data(dir.path(), "lexicon.tsv"))
        .arg("--gazetteer")
        .arg(data(dir.path(), "gazetteer.tsv"))
        .arg("--output")
        .arg(&located));
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("postcode_filled\t"));

    let geocoded = dir.path().join("geocoded.tsv");
    let o = run(bin()
        .arg("geocode")
        .arg(&located)
        .args(["--min-levels", "3", "--output"])
        .arg(dir.path().join("geo.tsv"))
        .arg("--records-output")
        .arg(&geocoded));
    assert!(o.status.success(), "{}", stderr(&o));

    let geojson = dir.path().join("points.geojson");
    let o = run(bin().arg("export").arg(&geocoded).args(["--from-year", "1995", "--to-year", "2015", "--output"]).arg(&geojson));
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(fs::read_to_string(&geojson).unwrap().contains("\"FeatureCollection\""));

    let o = run(bin().arg("kfunction").arg(&geocoded).args(["--radii", "10,50,100"]));
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(stdout(&o).lines().count(), 4);

    let o = run(bin().arg("kfunction").arg(&geocoded).args(["--radii", "50,10"]));
    assert_eq!(o.status.code(), Some(2));
}
