use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpStream;
use std::path::{Path, PathBuf};
use std::process::{Command, Output, Stdio};

use chrono::{Duration, NaiveDate};
use lagrisk_core::ingest::{grid_series_to_json, region_mask_to_json, BBox, GeoGrid, GridSeries, RegionMask};
use lagrisk_core::lstm::{FeatureMatrix, LstmModel, SampleSet};
use lagrisk_core::risk::RiskMap;
use lagrisk_core::synth::delayed_response_samples;

fn lagrisk<S: AsRef<std::ffi::OsStr>>(args: &[S]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lagrisk")).args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

/// Daily 1x1 rasters holding `pollutant[b]` for every day of bucket `b`,
/// and daily cases `cases[b]` (days of `None` buckets are absent).
fn write_region(dir: &Path, pollutant: &[f64], cases: &[Option<f64>]) -> (PathBuf, PathBuf, PathBuf) {
    let start: NaiveDate = "2020-03-01".parse().unwrap();
    let bbox = BBox::new(45.0, 46.0, 9.0, 10.0).unwrap();
    let frames = (0..pollutant.len() * 5)
        .map(|d| {
            (
                start + Duration::days(d as i64),
                GeoGrid::from_values(1, 1, bbox, vec![pollutant[d / 5]]).unwrap(),
            )
        })
        .collect();
    let rasters = dir.join("rasters.json");
    std::fs::write(&rasters, grid_series_to_json(&GridSeries::new(frames).unwrap())).unwrap();
    let mut csv = String::from("date,new_cases\n");
    for d in 0..cases.len() * 5 {
        if let Some(c) = cases[d / 5] {
            csv.push_str(&format!("{},{c}\n", start + Duration::days(d as i64)));
        }
    }
    let cases_path = dir.join("cases.csv");
    std::fs::write(&cases_path, csv).unwrap();
    let mask = dir.join("mask.json");
    std::fs::write(&mask, region_mask_to_json(&RegionMask::all("test", 1, 1).unwrap())).unwrap();
    (rasters, cases_path, mask)
}

#[test]
fn lag_two_bundle_reports_delay_two() {
    let dir = tempfile::tempdir().unwrap();
    let pollutant = [1.0, 3.0, 2.0, 5.0, 4.0, 7.0, 6.0, 9.0];
    let mut cases = vec![None, None];
    cases.extend(pollutant[..6].iter().map(|v| Some(v * 10.0)));
    let (r, c, m) = write_region(dir.path(), &pollutant, &cases);
    let bundle = dir.path().join("bundle.json");
    let o = lagrisk(&[
        "ingest",
        "--rasters",
        p(&r),
        "--cases",
        p(&c),
        "--mask",
        p(&m),
        "--out",
        p(&bundle),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let out = dir.path().join("corr");
    let o = lagrisk(&[
        "correlate",
        "--bundle",
        p(&bundle),
        "--max-delay",
        "5",
        "--out-dir",
        p(&out),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = stdout(&o);
    assert!(text.contains("Best delay: 2 units = 10 days (PCC 1.0000)"), "{text}");
    assert!(text.contains("         2    1.0000        4 *"), "{text}");
    assert!(out.join("report.json").exists());
    let scatter = std::fs::read_to_string(out.join("scatter_delay_02.csv")).unwrap();
    assert_eq!(scatter.lines().next().unwrap(), "index,cases_mean,pollutant_mean");
    assert_eq!(scatter.lines().count(), 5);
}

#[test]
fn pcc_table_reproduces_published_delays() {
    let fixture = concat!(env!("CARGO_MANIFEST_DIR"), "/../../fixtures/pcc_lombardy_wuhan.csv");
    let o = lagrisk(&["correlate", "--pcc-table", fixture]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = stdout(&o);
    assert!(
        text.contains("lombardy: best delay 9 units = 45 days (PCC 0.8969)"),
        "{text}"
    );
    assert!(
        text.contains("wuhan: best delay 7 units = 35 days (PCC 0.4857)"),
        "{text}"
    );
}

#[test]
fn constant_pollutant_exits_three() {
    let dir = tempfile::tempdir().unwrap();
    let cases: Vec<Option<f64>> = (0..10).map(|b| Some((b * 7 % 5) as f64)).collect();
    let (r, c, m) = write_region(dir.path(), &[2.0; 10], &cases);
    let bundle = dir.path().join("bundle.json");
    assert!(lagrisk(&[
        "ingest",
        "--rasters",
        p(&r),
        "--cases",
        p(&c),
        "--mask",
        p(&m),
        "--out",
        p(&bundle)
    ])
    .status
    .success());
    let o = lagrisk(&["correlate", "--bundle", p(&bundle)]);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
}

#[test]
fn ingest_input_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let (r, c, _) = write_region(dir.path(), &[1.0, 2.0, 3.0], &[Some(1.0), Some(2.0), Some(3.0)]);
    let out = dir.path().join("b.json");
    let o = lagrisk(&[
        "ingest",
        "--rasters",
        "missing.json",
        "--cases",
        p(&c),
        "--mask",
        "m",
        "--out",
        p(&out),
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("missing.json"));

    let wrong = dir.path().join("wrong.json");
    std::fs::write(&wrong, region_mask_to_json(&RegionMask::all("big", 3, 4).unwrap())).unwrap();
    let o = lagrisk(&[
        "ingest",
        "--rasters",
        p(&r),
        "--cases",
        p(&c),
        "--mask",
        p(&wrong),
        "--out",
        p(&out),
    ]);
    assert_eq!(o.status.code(), Some(2));
    let err = stderr(&o);
    assert!(err.contains("1x1") && err.contains("3x4"), "{err}");
    assert!(!out.exists());
}

fn write_samples(dir: &Path) -> PathBuf {
    let path = dir.join("samples.json");
    let samples = delayed_response_samples(4, 12, 2, 3).unwrap();
    std::fs::write(&path, SampleSet::from_samples(&samples).to_json()).unwrap();
    path
}

fn train_into(dir: &Path, samples: &Path, tag: &str, extra: &[&str]) -> (String, String) {
    let model = dir.join(format!("{tag}.model.json"));
    let loss = dir.join(format!("{tag}.loss.csv"));
    let mut args = vec![
        "train",
        "--samples",
        p(samples),
        "--model-out",
        p(&model),
        "--loss-out",
        p(&loss),
    ];
    args.extend_from_slice(extra);
    let o = lagrisk(&args);
    assert!(o.status.success(), "{}", stderr(&o));
    (
        std::fs::read_to_string(model).unwrap(),
        std::fs::read_to_string(loss).unwrap(),
    )
}

fn losses(csv: &str) -> Vec<f64> {
    csv.lines()
        .skip(1)
        .map(|l| l.split(',').nth(1).unwrap().parse().unwrap())
        .collect()
}

#[test]
fn training_descends_and_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let samples = write_samples(dir.path());
    let args = [
        "--hidden",
        "4",
        "--epochs",
        "80",
        "--learning-rate",
        "0.3",
        "--seed",
        "5",
    ];
    let (m1, l1) = train_into(dir.path(), &samples, "a", &args);
    let (m2, l2) = train_into(dir.path(), &samples, "b", &args);
    assert_eq!(m1, m2);
    assert_eq!(l1, l2);
    let l = losses(&l1);
    assert_eq!(l.len(), 80);
    assert!(l[79] < l[0]);

    let (_, flat) = train_into(dir.path(), &samples, "c", &["--epochs", "10", "--learning-rate", "0"]);
    let l = losses(&flat);
    assert!(l.iter().all(|v| *v == l[0]));
}

#[test]
fn riskmaps_from_zero_model() {
    let dir = tempfile::tempdir().unwrap();
    let model = dir.path().join("zero.json");
    std::fs::write(&model, LstmModel::zeros(2, 3, 4).unwrap().to_json()).unwrap();
    let features = dir.path().join("f.json");
    let f = FeatureMatrix::unlabeled(vec![vec![0.1, 0.5, 0.9], vec![2.0, -1.0, 0.0]]).unwrap();
    std::fs::write(&features, serde_json::to_string(&f).unwrap()).unwrap();
    let out = dir.path().join("maps");
    let o = lagrisk(&[
        "riskmap",
        "--model",
        p(&model),
        "--features",
        p(&features),
        "--out-dir",
        p(&out),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    for t in 0..3 {
        let text = std::fs::read_to_string(out.join(format!("risk_t{t:03}.json"))).unwrap();
        let map = RiskMap::from_json(&text).unwrap();
        assert!(map.risk.iter().all(|r| *r == 0.5));
        assert_eq!(map.to_json(), text);
    }

    let o = lagrisk(&[
        "predict",
        "--model",
        p(&model),
        "--features",
        p(&features),
        "--t",
        "1",
        "--format",
        "pgm",
        "--out-dir",
        p(&out),
    ]);
    assert!(o.status.success());
    let pgm = std::fs::read_to_string(out.join("risk_t001.pgm")).unwrap();
    assert!(pgm.starts_with("P2\n"));
    assert!(pgm.ends_with("128 128 128 128\n"), "{pgm}");

    let o = lagrisk(&[
        "riskmap",
        "--model",
        p(&model),
        "--features",
        p(&features),
        "--t",
        "3",
        "--out-dir",
        p(&out),
    ]);
    assert_eq!(o.status.code(), Some(4));
}

#[test]
fn scenario_file_lowers_monotone_risk() {
    let dir = tempfile::tempdir().unwrap();
    let demo = dir.path().join("demo");
    assert!(lagrisk(&["synth", "--out-dir", p(&demo)]).status.success());
    let scenario = dir.path().join("s.json");
    std::fs::write(
        &scenario,
        r#"{"overrides":[{"source":"mobility","mode":"mul","value":0.3}]}"#,
    )
    .unwrap();
    let run = |out: &str, extra: &[&str]| {
        let out = dir.path().join(out);
        let mut args: Vec<PathBuf> = vec![
            "riskmap".into(),
            "--model".into(),
            demo.join("monotone_model.json"),
            "--features".into(),
            demo.join("baseline.json"),
            "--grid".into(),
            demo.join("grid.json"),
            "--out-dir".into(),
            out.clone(),
        ];
        args.extend(extra.iter().map(PathBuf::from));
        let o = lagrisk(&args);
        assert!(o.status.success(), "{}", stderr(&o));
        let csv = std::fs::read_to_string(out.join("trajectory.csv")).unwrap();
        csv.lines()
            .skip(1)
            .map(|l| l.rsplit(',').next().unwrap().parse::<f64>().unwrap())
            .collect::<Vec<_>>()
    };
    let base = run("base", &[]);
    let cut = run("cut", &["--scenario", p(&scenario)]);
    assert_eq!(base.len(), 12);
    assert!(cut.iter().zip(&base).all(|(c, b)| c < b));
}

#[test]
fn gradcheck_exit_codes() {
    let o = lagrisk(&["gradcheck"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = stdout(&o);
    let value: f64 = text.split_whitespace().nth(3).unwrap().parse().unwrap();
    assert!(value < 1e-4, "{text}");

    let o = lagrisk(&["gradcheck", "--corrupt-gradient"]);
    assert_eq!(o.status.code(), Some(1));
    let o = lagrisk(&["gradcheck", "--epsilon", "0"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn serve_answers_health_and_stops_on_sigint() {
    let mut child = Command::new(env!("CARGO_BIN_EXE_lagrisk"))
        .args(["serve", "--listen", "127.0.0.1:0"])
        .stdout(Stdio::piped())
        .spawn()
        .unwrap();
    let mut lines = BufReader::new(child.stdout.take().unwrap()).lines();
    let first = lines.next().unwrap().unwrap();
    let addr = first.trim_start_matches("listening on http://").to_string();

    let mut stream = TcpStream::connect(&addr).unwrap();
    write!(
        stream,
        "GET /health HTTP/1.1\r\nHost: {addr}\r\nConnection: close\r\n\r\n"
    )
    .unwrap();
    let mut resp = String::new();
    stream.read_to_string(&mut resp).unwrap();
    assert!(resp.starts_with("HTTP/1.1 200"), "{resp}");
    assert!(resp.contains("\"status\":\"ok\""));

    let kill = Command::new("kill")
        .args(["-INT", &child.id().to_string()])
        .status()
        .unwrap();
    assert!(kill.success());
    assert_eq!(child.wait().unwrap().code(), Some(0));
}

#[test]
fn serve_rejects_bad_port() {
    let o = lagrisk(&["serve", "--listen", "127.0.0.1:99999"]);
    assert_eq!(o.status.code(), Some(2));
}
