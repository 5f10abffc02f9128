use std::fs;

use otcd_core::experiment::{run_experiment, DatasetSource, ExperimentPlan, Method, OutputPaths};
use otcd_core::io::{load_csv, read_csv, save_csv, write_csv, LoadOptions, Provenance};
use otcd_core::sem::{preset, sample};
use otcd_core::SampleMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn small_matrix_round_trips_bit_identically() {
    let m = SampleMatrix::new(3, 2, vec![0.1, -2.5e-17, 1.0 / 3.0, 7.0e300, -0.0, f64::MIN_POSITIVE]).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.csv");
    let prov = Provenance::new(serde_json::json!({"what": "round trip"})).unwrap();
    save_csv(&path, &m, Some(&prov)).unwrap();
    let back = load_csv(&path, &LoadOptions::default()).unwrap();
    assert_eq!((back.n(), back.d()), (3, 2));
    for (a, b) in m.as_slice().iter().zip(back.as_slice()) {
        assert_eq!(a.to_bits(), b.to_bits());
    }
    let text = fs::read_to_string(&path).unwrap();
    let first = text.lines().next().unwrap();
    assert_eq!(Provenance::from_header_line(first).unwrap(), prov);
}

#[test]
fn protein_format_file_loads_with_its_shape() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let names = ["raf", "mek", "plcg", "pip2", "pip3"];
    let mut text = names.join(",") + "\n";
    for _ in 0..7446 {
        let row: Vec<String> = (0..5).map(|_| format!("{:.2}", rng.random_range(0.5..900.0))).collect();
        text.push_str(&row.join(","));
        text.push('\n');
    }
    let plain = read_csv(text.as_bytes(), &LoadOptions::default()).unwrap();
    assert_eq!((plain.n(), plain.d()), (7446, 5));
    let logged = read_csv(text.as_bytes(), &LoadOptions { log_transform: true }).unwrap();
    assert_eq!((logged.n(), logged.d()), (7446, 5));
    assert_eq!(logged.get(10, 3), plain.get(10, 3).ln());
}

#[test]
fn malformed_input_is_reported_with_its_location() {
    let e = read_csv("a,b\n1,2\n3,x\n".as_bytes(), &LoadOptions::default()).unwrap_err().to_string();
    assert!(e.contains("row 2") && e.contains("column 2"), "{e}");
    let e = read_csv("a,b\n1,2\n3\n".as_bytes(), &LoadOptions::default()).unwrap_err().to_string();
    assert!(e.contains("row 2"), "{e}");
    let e = read_csv("a,b\n1,0\n".as_bytes(), &LoadOptions { log_transform: true }).unwrap_err().to_string();
    assert!(e.contains("positive"), "{e}");
    assert!(read_csv("a,b\n".as_bytes(), &LoadOptions::default()).is_err());
}

#[test]
fn vstruct3_plan_yields_one_row_per_repetition() {
    let mut plan = ExperimentPlan::new(DatasetSource::Preset { name: "vstruct3".into(), n: 300 }, Method::Pcot);
    plan.repetitions = 20;
    plan.record_timing = false;
    let t = run_experiment(&plan).unwrap();
    assert_eq!(t.rows.len(), 20);
    assert!(t.failures.is_empty());
    let overall = t.column("overall").unwrap();
    assert!(t.rows.iter().all(|r| r.values[overall] >= 0.0));
    let seeds: Vec<u64> = t.rows.iter().map(|r| r.seed).collect();
    assert_eq!(seeds, (0..20).collect::<Vec<u64>>());
}

#[test]
fn anm6_plan_scores_every_ordering_of_the_class() {
    let mut plan = ExperimentPlan::new(DatasetSource::Preset { name: "anm6".into(), n: 250 }, Method::Anm);
    plan.record_timing = false;
    let t = run_experiment(&plan).unwrap();
    assert_eq!(t.rows.len(), 4);
    let rank = t.column("rank").unwrap();
    let mut ranks: Vec<f64> = t.rows.iter().map(|r| r.values[rank]).collect();
    ranks.sort_by(f64::total_cmp);
    assert_eq!(ranks[0], 1.0);
    let selected = t.column("selected").unwrap();
    assert_eq!(t.rows.iter().filter(|r| r.values[selected] == 1.0).count(), 1);
}

#[test]
fn reruns_are_bit_identical_and_inputs_untouched() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data.csv");
    save_csv(&data, &sample(&preset("sachs5").unwrap(), 400, 9).unwrap(), None).unwrap();
    let before = fs::read(&data).unwrap();

    let run = || {
        let mut plan =
            ExperimentPlan::new(DatasetSource::Csv { path: data.clone(), log_transform: false }, Method::Citest);
        plan.repetitions = 3;
        plan.record_timing = false;
        plan.config.subset = vec![0, 1, 2];
        plan.outputs = OutputPaths {
            table_csv: Some(dir.path().join("t.csv")),
            table_json: Some(dir.path().join("t.json")),
            summary_csv: Some(dir.path().join("s.csv")),
        };
        run_experiment(&plan).unwrap();
        ["t.csv", "t.json", "s.csv"].map(|f| fs::read(dir.path().join(f)).unwrap())
    };
    let a = run();
    let b = run();
    assert_eq!(a, b);
    assert_eq!(fs::read(&data).unwrap(), before);

    let mut buf = Vec::new();
    write_csv(&load_csv(&data, &LoadOptions::default()).unwrap(), None, &mut buf).unwrap();
    assert_eq!(buf, before);
}
