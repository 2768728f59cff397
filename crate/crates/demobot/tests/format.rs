//! Dataset, model, and distance-matrix files.

mod common;

use demobot::format::{
    dataset_to_string, load_dataset, load_model, read_dataset, read_model, save_dataset, save_model, sniff,
    write_model, FileKind,
};
use demobot::harness::pairwise_wasserstein;
use demobot::Error;
use demobot_core::GroundMetric;
use proptest::prelude::*;
use std::path::Path;

fn parse(text: &str) -> demobot::Result<demobot_core::DemoDataset> {
    read_dataset(text.as_bytes(), Path::new("mem.jsonl"))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn dataset_round_trip_is_exact(seed in any::<u64>()) {
        let ds = common::random_dataset(seed);
        let text = dataset_to_string(&ds);
        let back = parse(&text).unwrap();
        prop_assert_eq!(&back, &ds);
        prop_assert_eq!(dataset_to_string(&back), text);
    }

    #[test]
    fn model_round_trip_is_exact(seed in any::<u64>()) {
        let model = common::random_model(seed);
        let mut buf = Vec::new();
        write_model(&model, &mut buf).unwrap();
        let back = read_model(buf.as_slice(), Path::new("mem.json")).unwrap();
        prop_assert_eq!(&back, &model);
        let mut again = Vec::new();
        write_model(&back, &mut again).unwrap();
        prop_assert_eq!(again, buf);
    }
}

#[test]
fn files_round_trip_and_are_recognized() {
    let dir = tempfile::tempdir().unwrap();
    let ds = common::random_dataset(3);
    let dp = dir.path().join("d.jsonl");
    save_dataset(&ds, &dp).unwrap();
    assert_eq!(sniff(&dp).unwrap(), FileKind::Dataset);
    assert_eq!(load_dataset(&dp).unwrap(), ds);

    let model = common::random_model(4);
    let mp = dir.path().join("m.json");
    save_model(&model, &mp).unwrap();
    assert_eq!(sniff(&mp).unwrap(), FileKind::Model);
    assert_eq!(load_model(&mp).unwrap(), model);

    let other = dir.path().join("x.txt");
    std::fs::write(&other, "hello\n").unwrap();
    assert!(matches!(sniff(&other), Err(Error::Parse { line: 1, .. })));
    assert!(matches!(
        load_dataset(&dir.path().join("missing")),
        Err(Error::Io { .. })
    ));
}

fn line_of(err: Error) -> usize {
    match err {
        Error::Parse { line, .. } => line,
        Error::Context { source, .. } => line_of(*source),
        other => panic!("expected a parse error, got {other}"),
    }
}

#[test]
fn errors_name_the_offending_line() {
    let ds = common::random_dataset(11);
    let text = dataset_to_string(&ds);
    let lines: Vec<&str> = text.lines().collect();
    assert!(lines.len() >= 2);

    let mut bad = lines.clone();
    bad[1] = "{not json";
    assert_eq!(line_of(parse(&bad.join("\n")).unwrap_err()), 2);

    let last = lines.len() - 1;
    let mut bad = lines.clone();
    let wrong_dim = bad[last].replace("\"feature\":[", "\"feature\":[1.0,");
    bad[last] = &wrong_dim;
    assert_eq!(line_of(parse(&bad.join("\n")).unwrap_err()), last + 1);

    let mut bad = lines.clone();
    let (head, tail) = bad[1].split_once("\"action\":").unwrap();
    let bad_action = format!("{head}\"action\":99{}", &tail[tail.find(',').unwrap()..]);
    bad[1] = &bad_action;
    assert_eq!(line_of(parse(&bad.join("\n")).unwrap_err()), 2);

    let truncated = lines[..lines.len() - 1].join("\n");
    assert_eq!(line_of(parse(&truncated).unwrap_err()), 1);

    assert_eq!(line_of(parse("").unwrap_err()), 1);
    assert_eq!(line_of(parse("{\"format\":\"other\"}").unwrap_err()), 1);
}

#[test]
fn distance_matrix_is_symmetric_with_zero_diagonal() {
    let ds = common::random_dataset(5);
    let ds = if ds.trajectories().len() >= 3 {
        ds
    } else {
        common::random_dataset(6)
    };
    let m = pairwise_wasserstein(&ds, GroundMetric::SquaredEuclidean).unwrap();
    let n = m.ids.len();
    for i in 0..n {
        assert!(m.get(i, i).abs() <= 1e-9);
        for j in 0..n {
            assert_eq!(m.get(i, j), m.get(j, i));
            assert!(m.get(i, j) >= 0.0);
        }
    }
    let mut out = Vec::new();
    m.write(&mut out).unwrap();
    let text = String::from_utf8(out).unwrap();
    let rows: Vec<&str> = text.lines().collect();
    assert_eq!(rows.len(), n + 2);
    assert!(rows[0].starts_with('#'));
    assert!(rows[2..].iter().all(|r| r.split('\t').count() == n + 1));
}
