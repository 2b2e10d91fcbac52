use std::path::{Path, PathBuf};
use std::process::Command;

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rphedge::hedging::MetricsRow;
use rphedge::hydro::HydroSpec;
use rphedge::random::{self, Limits};
use rphedge::runtime::SimSchedule;
use rphedge_cli::bench;
use rphedge_cli::error::Category;
use rphedge_cli::metrics;
use rphedge_cli::problem_file::ProblemFile;
use serde_json::Value;
use tempfile::TempDir;

fn run(args: &[&str]) -> i32 {
    rphedge_cli::run(std::iter::once("rphedge").chain(args.iter().copied()))
}

fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn hydro_file(dir: &Path, dams: usize, stages: usize, seed: u64) -> PathBuf {
    let path = dir.join(format!("hydro-{dams}-{stages}-{seed}.json"));
    ProblemFile::hydro(HydroSpec::new(dams, stages, seed)).write(&path).unwrap();
    path
}

fn schedule_file(dir: &Path, schedule: &SimSchedule) -> PathBuf {
    let path = dir.join("schedule.json");
    std::fs::write(&path, serde_json::to_string(schedule).unwrap()).unwrap();
    path
}

fn explicit_json(seed: u64) -> String {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let problem = random::problem(&mut rng, &Limits::default()).unwrap();
    ProblemFile::from_problem(&problem).to_json()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn explicit_files_round_trip_bitwise(seed in any::<u64>()) {
        let text = explicit_json(seed);
        let problem = ProblemFile::parse(&text).unwrap().to_problem().unwrap();
        let again = ProblemFile::from_problem(&problem);
        prop_assert_eq!(again.to_json(), text);
        let reparsed = ProblemFile::parse(&again.to_json()).unwrap().to_problem().unwrap();
        for (a, b) in problem.scenarios().iter().zip(reparsed.scenarios()) {
            let bits = |v: &[f64]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
            prop_assert_eq!(bits(a.quadratic().as_slice()), bits(b.quadratic().as_slice()));
            prop_assert_eq!(bits(a.linear().as_slice()), bits(b.linear().as_slice()));
            prop_assert_eq!(bits(a.a_eq().as_slice()), bits(b.a_eq().as_slice()));
            prop_assert_eq!(bits(a.b_in().as_slice()), bits(b.b_in().as_slice()));
            prop_assert_eq!(bits(a.lower()), bits(b.lower()));
            prop_assert_eq!(bits(a.upper()), bits(b.upper()));
        }
        let bits = |v: &[f64]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
        prop_assert_eq!(bits(problem.tree().probabilities()), bits(reparsed.tree().probabilities()));
    }
}

#[test]
fn hydro_forms_expand_to_the_same_model() {
    let spec = HydroSpec::new(2, 3, 4);
    let built = spec.generate().unwrap().build().unwrap();
    let explicit = ProblemFile::from_problem(&built);
    let from_spec = ProblemFile::hydro(spec.clone()).to_problem().unwrap();
    let params = ProblemFile { hydro: None, hydro_params: Some(spec.generate().unwrap()), ..ProblemFile::hydro(spec) };
    for problem in [from_spec, params.to_problem().unwrap(), explicit.to_problem().unwrap()] {
        assert_eq!(ProblemFile::from_problem(&problem), explicit);
    }
}

#[test]
fn malformed_problem_files_are_parse_errors() {
    let hydro = HydroSpec::new(1, 3, 0).generate().unwrap().build().unwrap();
    let base: Value = serde_json::from_str(&ProblemFile::from_problem(&hydro).to_json()).unwrap();
    let edit = |f: &dyn Fn(&mut Value)| {
        let mut v = base.clone();
        f(&mut v);
        ProblemFile::parse(&v.to_string()).and_then(|file| file.to_problem())
    };
    assert!(edit(&|_| {}).is_ok());
    let cases: Vec<(&str, Box<dyn Fn(&mut Value)>)> = vec![
        ("version", Box::new(|v| v["version"] = 2.into())),
        ("unknown field", Box::new(|v| v["extra"] = 1.into())),
        ("two forms", Box::new(|v| v["hydro"] = serde_json::json!({ "dams": 1, "stages": 2 }))),
        ("missing tree", Box::new(|v| v.as_object_mut().unwrap().remove("tree").map(|_| ()).unwrap())),
        ("bad probabilities", Box::new(|v| v["tree"]["probabilities"][0] = 5.0.into())),
        ("not refining", Box::new(|v| v["tree"]["partitions"][0] = serde_json::json!([[0]]))),
        ("out of range", Box::new(|v| v["scenarios"][0]["q"] = serde_json::json!([[99, 0, 1.0]]))),
        ("duplicate", Box::new(|v| v["scenarios"][0]["a_in"] = serde_json::json!([[0, 0, 1.0], [0, 0, 2.0]]))),
        ("short c", Box::new(|v| v["scenarios"][0]["c"] = serde_json::json!([]))),
    ];
    for (name, f) in cases {
        let err = edit(f.as_ref()).expect_err(name);
        assert_eq!(err.category, Category::Parse, "{name}: {err}");
    }
}

#[test]
fn null_bounds_are_infinite() {
    let text = r#"{"version": 1, "stage_dims": [1], "tree": {"probabilities": [1.0], "partitions": [[[0]]]},
        "scenarios": [{"c": [1.0], "lower": [0.0], "upper": [null]}]}"#;
    let problem = ProblemFile::parse(text).unwrap().to_problem().unwrap();
    assert_eq!(problem.scenario(0).lower(), &[0.0]);
    assert_eq!(problem.scenario(0).upper(), &[f64::INFINITY]);
}

#[test]
fn solve_writes_artifacts_and_echoes_defaults() {
    let dir = TempDir::new().unwrap();
    let problem = hydro_file(dir.path(), 1, 3, 0);
    let out = dir.path().join("out");
    assert_eq!(run(&["solve", "--algo", "ph", "--problem", path_str(&problem), "--out", path_str(&out)]), 0);
    let manifest = read_json(&out.join("manifest.json"));
    let stopping = &manifest["config"]["stopping"];
    assert_eq!(stopping["max_time"], 3600.0);
    assert_eq!(stopping["max_subproblems"], 1_000_000);
    assert_eq!(stopping["eps_abs"], 1e-8);
    assert_eq!(stopping["eps_rel"], 1e-4);
    assert_eq!(manifest["config"]["mu"], 1.0);
    assert_eq!(manifest["residual_window"], 4);
    assert_eq!(manifest["algorithm"], "ph");
    let solution = read_json(&out.join("solution.json"));
    assert_eq!(solution["termination"]["reason"], "residual");
    assert_eq!(solution["x"].as_array().unwrap().len(), 4);
    assert!(solution["nonanticipativity_gap"].as_f64().unwrap() <= 1e-10);
    let rows = metrics::read_file(&out.join("metrics.csv")).unwrap();
    assert!(!rows.is_empty());
    assert!(rows.windows(2).all(|w| w[0].wall_time_s <= w[1].wall_time_s && w[0].n_subproblems < w[1].n_subproblems));
}

#[test]
fn seeded_simulated_runs_give_identical_metrics_files() {
    let dir = TempDir::new().unwrap();
    let problem = hydro_file(dir.path(), 2, 3, 1);
    let schedule = schedule_file(dir.path(), &SimSchedule { jitter_ticks: 5, ..SimSchedule::two_point(10, vec![1], 20, 3) });
    let solve = |out: &str, seed: &str| {
        let out = dir.path().join(out);
        let code = run(&[
            "solve", "--algo", "rph", "--seed", seed, "--problem", path_str(&problem), "--out", path_str(&out),
            "--sim-schedule", path_str(&schedule), "--reference", "extensive-form",
        ]);
        assert_eq!(code, 0);
        std::fs::read(out.join("metrics.csv")).unwrap()
    };
    let first = solve("a", "7");
    assert_eq!(first, solve("b", "7"));
    assert_ne!(first, solve("c", "8"));
}

#[test]
fn reference_is_cached_next_to_the_problem() {
    let dir = TempDir::new().unwrap();
    let problem = hydro_file(dir.path(), 1, 2, 5);
    let solve = |out: &str| {
        let out = dir.path().join(out);
        let args = ["solve", "--algo", "ph", "--problem", path_str(&problem), "--out", path_str(&out), "--reference", "extensive-form"];
        assert_eq!(run(&args), 0);
        read_json(&out.join("manifest.json"))
    };
    let first = solve("a");
    let sha = first["problem"]["sha256"].as_str().unwrap().to_string();
    assert!(dir.path().join(format!("hydro-1-2-5.json.ref-{sha}.json")).exists());
    assert_eq!(first["reference"]["cached"], false);
    let second = solve("b");
    assert_eq!(second["reference"]["cached"], true);
    assert_eq!(second["reference"]["value"], first["reference"]["value"]);

    let ref_file = dir.path().join("ref.json");
    std::fs::write(&ref_file, r#"{"f_star": 12.5}"#).unwrap();
    let out = dir.path().join("c");
    let file_mode = format!("file:{}", ref_file.display());
    let args = ["solve", "--algo", "ph", "--problem", path_str(&problem), "--out", path_str(&out), "--reference", &file_mode];
    assert_eq!(run(&args), 0);
    assert_eq!(read_json(&out.join("solution.json"))["reference"], 12.5);
}

fn binary(args: &[&str]) -> (i32, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_rphedge")).args(args).output().unwrap();
    (out.status.code().unwrap(), String::from_utf8(out.stderr).unwrap())
}

#[test]
fn failures_exit_with_their_category() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("out");
    let problem = hydro_file(dir.path(), 1, 2, 0);

    let (code, stderr) = binary(&["solve", "--algo", "nope", "--problem", "x", "--out", "y"]);
    assert_eq!(code, 2);
    let line: Value = serde_json::from_str(stderr.lines().last().unwrap()).unwrap();
    assert_eq!(line["error"]["category"], "parse");

    let missing = dir.path().join("missing.json");
    assert_eq!(binary(&["solve", "--algo", "ph", "--problem", path_str(&missing), "--out", path_str(&out)]).0, 2);
    let args = ["solve", "--algo", "rph", "--problem", path_str(&problem), "--out", path_str(&out), "--eta", "theorem3:2,3"];
    assert_eq!(binary(&args).0, 2);
    let args = ["solve", "--algo", "ph", "--problem", path_str(&problem), "--out", path_str(&out), "--eps-abs", "0", "--eps-rel", "0"];
    assert_eq!(binary(&args).0, 2);

    let infeasible = dir.path().join("infeasible.json");
    std::fs::write(
        &infeasible,
        r#"{"version": 1, "stage_dims": [1], "tree": {"probabilities": [1.0], "partitions": [[[0]]]},
            "scenarios": [{"c": [1.0], "a_eq": [[0, 0, 1.0], [1, 0, 1.0]], "b_eq": [1.0, 2.0]}]}"#,
    )
    .unwrap();
    let (code, stderr) = binary(&["solve", "--algo", "ph", "--problem", path_str(&infeasible), "--out", path_str(&out)]);
    assert_eq!(code, 3, "{stderr}");
    let line: Value = serde_json::from_str(stderr.lines().last().unwrap()).unwrap();
    assert_eq!(line["error"]["category"], "infeasible");

    let schedule = schedule_file(dir.path(), &SimSchedule { faults: vec![0], ..SimSchedule::constant(10) });
    let args = [
        "solve", "--algo", "par", "--workers", "2", "--problem", path_str(&problem), "--out", path_str(&out),
        "--sim-schedule", path_str(&schedule),
    ];
    let (code, stderr) = binary(&args);
    assert_eq!(code, 5, "{stderr}");
    assert!(stderr.contains("worker-failure"));
}

#[test]
fn generated_files_load() {
    let dir = TempDir::new().unwrap();
    for form in ["spec", "params", "explicit"] {
        let path = dir.path().join(format!("{form}.json"));
        let args = ["generate", "hydro", "--dams", "2", "--stages", "3", "--seed", "9", "--form", form, "--out", path_str(&path)];
        assert_eq!(run(&args), 0);
        let problem = ProblemFile::read(&path).unwrap().to_problem().unwrap();
        assert_eq!(problem.num_scenarios(), 4);
    }
    let spec = std::fs::read_to_string(dir.path().join("spec.json")).unwrap();
    assert!(spec.contains("\"hydro\""));
}

fn read_aggregate(path: &Path) -> Vec<(String, usize, f64, String, f64, f64, f64, usize)> {
    csv::Reader::from_path(path).unwrap().deserialize().map(|r| r.unwrap()).collect()
}

#[test]
fn bench_with_one_repetition_reproduces_the_single_run() {
    let dir = TempDir::new().unwrap();
    let problem = hydro_file(dir.path(), 1, 3, 2);
    let schedule = schedule_file(dir.path(), &SimSchedule::two_point(10, vec![0], 30, 1));
    let common = ["--problem", path_str(&problem), "--sim-schedule", path_str(&schedule), "--reference", "extensive-form"];
    let single = dir.path().join("single");
    let mut args = vec!["solve", "--algo", "rph", "--seed", "7", "--out", path_str(&single)];
    args.extend(common);
    assert_eq!(run(&args), 0);
    let out = dir.path().join("bench");
    let mut args = vec!["bench", "--algos", "rph", "--reps", "1", "--seed-base", "7", "--bins", "12", "--out", path_str(&out)];
    args.extend(common);
    assert_eq!(run(&args), 0);

    let single_csv = std::fs::read(single.join("metrics.csv")).unwrap();
    assert_eq!(std::fs::read(out.join("runs").join("rph-0.csv")).unwrap(), single_csv);
    let rows: Vec<MetricsRow> = metrics::read_rows(single_csv.as_slice()).unwrap();
    let edges = bench::bins_for(&[&rows], 12).unwrap();
    let aggregate = read_aggregate(&out.join("aggregate.csv"));
    assert!(!aggregate.is_empty());
    for (algo, _, time, metric, median, q1, q3, count) in aggregate {
        assert_eq!(algo, "rph");
        assert!(edges.contains(&time));
        let want = ["n_subproblems", "steplength", "subopt_rel", "feas_err"]
            .iter()
            .find(|m| **m == metric)
            .and_then(|m| bench::carry_forward(&rows, time, m))
            .unwrap();
        assert_eq!((median, q1, q3, count), (want, want, want, 1));
    }
}

#[test]
fn bench_quartiles_are_ordered_and_jobs_do_not_change_results() {
    let dir = TempDir::new().unwrap();
    let problem = hydro_file(dir.path(), 1, 3, 3);
    let schedule = schedule_file(dir.path(), &SimSchedule { jitter_ticks: 8, ..SimSchedule::constant(10) });
    let bench_run = |out: &str, jobs: &str| {
        let out = dir.path().join(out);
        let args = [
            "bench", "--algos", "ph,rph,par,async", "--reps", "4", "--workers", "2", "--eta", "theorem3:0.9,4",
            "--jobs", jobs, "--problem", path_str(&problem), "--sim-schedule", path_str(&schedule),
            "--reference", "extensive-form", "--out", path_str(&out),
        ];
        assert_eq!(run(&args), 0);
        out
    };
    let serial = bench_run("serial", "1");
    let parallel = bench_run("parallel", "3");
    let aggregate = std::fs::read(serial.join("aggregate.csv")).unwrap();
    assert_eq!(aggregate, std::fs::read(parallel.join("aggregate.csv")).unwrap());
    let rows = read_aggregate(&serial.join("aggregate.csv"));
    for algo in ["ph", "rph", "par", "async"] {
        assert!(rows.iter().any(|r| r.0 == algo));
    }
    assert!(rows.iter().all(|r| r.5 <= r.4 && r.4 <= r.6));
    let runs: Vec<(String, usize, u64, String)> = csv::Reader::from_path(serial.join("runs.csv"))
        .unwrap()
        .records()
        .map(|r| {
            let r = r.unwrap();
            (r[0].to_string(), r[1].parse().unwrap(), r[2].parse().unwrap(), r[3].to_string())
        })
        .collect();
    assert_eq!(runs.len(), 16);
    assert!(runs.iter().all(|r| r.3 == "ok"));
    assert!(runs.iter().all(|r| r.2 == r.1 as u64));
}

#[test]
fn concurrent_repetitions_need_honest_timing() {
    let dir = TempDir::new().unwrap();
    let problem = hydro_file(dir.path(), 1, 2, 0);
    let out = dir.path().join("out");
    let args = ["bench", "--jobs", "2", "--workers", "2", "--problem", path_str(&problem), "--out", path_str(&out)];
    assert_eq!(run(&args), 2);
    let args = ["bench", "--algos", "rph", "--reps", "2", "--jobs", "2", "--problem", path_str(&problem), "--out", path_str(&out)];
    assert_eq!(run(&args), 0);
}
