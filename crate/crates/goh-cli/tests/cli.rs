//! Command-line behavior: file round-trips, exit codes, and the bracket,
//! variations, search, and extend subcommands.

use std::path::{Path, PathBuf};
use std::process::Command;

use goh_cli::files;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_goh"))
}

fn data(file: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../data/sec5")
        .join(file)
}

fn tmp(name: &str) -> PathBuf {
    std::env::temp_dir().join(name)
}

#[test]
fn shipped_files_parse_and_roundtrip() {
    for problem_file in ["problem-as-printed.toml", "problem-paper-variant.toml"] {
        let problem = files::load_problem(&data(problem_file)).unwrap();
        // Problem round-trip: serialize, reload, compare structurally.
        let text = files::write_problem(&problem).unwrap();
        let out = tmp(&format!("goh_roundtrip_{problem_file}"));
        std::fs::write(&out, text).unwrap();
        let again = files::load_problem(&out).unwrap();
        assert_eq!(problem, again, "{problem_file}");
        for process_file in ["candidate-process.toml", "impulsive-process.toml"] {
            let (ep, _) = files::load_process(&data(process_file), &problem).unwrap();
            let text = files::write_process(&ep).unwrap();
            let out = tmp(&format!("goh_roundtrip_{process_file}"));
            std::fs::write(&out, text).unwrap();
            let (again, _) = files::load_process(&out, &problem).unwrap();
            assert_eq!(ep.pieces, again.pieces, "{process_file}");
        }
        for mult_file in ["candidate-multipliers.toml", "impulsive-multipliers.toml"] {
            let mult = files::load_multipliers(&data(mult_file), &problem).unwrap();
            let text = files::write_multipliers(&mult).unwrap();
            let out = tmp(&format!("goh_roundtrip_{mult_file}"));
            std::fs::write(&out, text).unwrap();
            let again = files::load_multipliers(&out, &problem).unwrap();
            assert_eq!(mult, again, "{mult_file}");
        }
    }
}

#[test]
fn check_exit_codes_on_bad_inputs() {
    // Missing multipliers file → exit 1.
    let out = bin()
        .args([
            "check",
            data("problem-as-printed.toml").to_str().unwrap(),
            data("candidate-process.toml").to_str().unwrap(),
            "/nonexistent/multipliers.toml",
        ])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));

    // Empty process file → validation error, exit 1.
    let empty = tmp("goh_empty_process.toml");
    std::fs::write(&empty, "# no pieces\n").unwrap();
    let out = bin()
        .args([
            "simulate",
            data("problem-as-printed.toml").to_str().unwrap(),
            empty.to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(!out.stderr.is_empty());

    // Negative lambda → validation error, exit 1.
    let bad = tmp("goh_bad_multipliers.toml");
    std::fs::write(
        &bad,
        "p0 = -1.0\nlambda = -0.5\npi = 0.0\n[p]\nexpr = [\"0\", \"0\", \"0\"]\n",
    )
    .unwrap();
    let out = bin()
        .args([
            "check",
            data("problem-as-printed.toml").to_str().unwrap(),
            data("candidate-process.toml").to_str().unwrap(),
            bad.to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn bracket_subcommand_prints_hulls_and_interval() {
    let out = bin()
        .args([
            "bracket",
            data("problem-as-printed.toml").to_str().unwrap(),
            "--point",
            "1,0,0",
            "--pair",
            "1",
            "2",
            "--method",
            "both",
            "--covector",
            "0, 2 - s, -(1)",
            "--s",
            "0",
            "--paper-variant",
        ])
        .output()
        .unwrap();
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let json: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    let interval = json["interval"].as_array().unwrap();
    assert!((interval[0].as_f64().unwrap() + 4.0).abs() < 1e-9);
    assert!((interval[1].as_f64().unwrap() + 2.0).abs() < 1e-9);
    let hausdorff = json["hausdorff"].as_f64().unwrap();
    assert!(hausdorff <= 0.05, "estimator disagreement {hausdorff}");
    assert_eq!(json["hulls"].as_array().unwrap().len(), 2);

    // Smooth pair → singleton hull.
    let out = bin()
        .args([
            "bracket",
            data("problem-as-printed.toml").to_str().unwrap(),
            "--point",
            "1,0.5,0",
            "--pair",
            "1",
            "2",
        ])
        .output()
        .unwrap();
    assert!(out.status.success());
    let json: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(json["hulls"][0]["vertices"].as_array().unwrap().len(), 1);

    // Mollified brackets are not defined.
    let out = bin()
        .args([
            "bracket",
            data("problem-as-printed.toml").to_str().unwrap(),
            "--point",
            "1,0,0",
            "--pair",
            "1",
            "2",
            "--method",
            "mollified",
        ])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn variations_subcommand_reports_and_rejects() {
    let spec = tmp("goh_variations_ok.toml");
    std::fs::write(
        &spec,
        r#"
eps = [1e-2, 1e-3]

[[variation]]
s = 0.5
kind = "needle"
w0 = 1.0
w = [0.0, 0.0]
zeta = 0.0

[[variation]]
s = 1.6
kind = "bracket"
i = 1
j = 2
"#,
    )
    .unwrap();
    let out = bin()
        .args([
            "variations",
            data("problem-as-printed.toml").to_str().unwrap(),
            data("candidate-process.toml").to_str().unwrap(),
            spec.to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let json: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(json["columns"].as_array().unwrap().len(), 2);

    // Bracket window too large for the anchor: 8√ε > s̄.
    let bad = tmp("goh_variations_bad.toml");
    std::fs::write(
        &bad,
        r#"
eps = [1e-2]

[[variation]]
s = 0.5
kind = "bracket"
i = 1
j = 2
"#,
    )
    .unwrap();
    let out = bin()
        .args([
            "variations",
            data("problem-as-printed.toml").to_str().unwrap(),
            data("candidate-process.toml").to_str().unwrap(),
            bad.to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("window") || err.contains("exceeds"), "{err}");

    // Overlapping windows are reported.
    let overlap = tmp("goh_variations_overlap.toml");
    std::fs::write(
        &overlap,
        r#"
eps = [4e-2]

[[variation]]
s = 1.0
kind = "needle"
w0 = 1.0
w = [0.0, 0.0]

[[variation]]
s = 1.01
kind = "needle"
w0 = 0.0
w = [0.0, 1.0]
"#,
    )
    .unwrap();
    let out = bin()
        .args([
            "variations",
            data("problem-as-printed.toml").to_str().unwrap(),
            data("candidate-process.toml").to_str().unwrap(),
            overlap.to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("overlap"));
}

#[test]
fn search_subcommand_finds_candidate_family() {
    let out = bin()
        .args([
            "search",
            data("problem-as-printed.toml").to_str().unwrap(),
            data("candidate-process.toml").to_str().unwrap(),
            "--grid",
            "21",
        ])
        .output()
        .unwrap();
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let json: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    let survivors = json["survivors"].as_array().unwrap();
    assert!(!survivors.is_empty());
    // The normalized family member with λ/|p0| = 1/2 carries p2(s) = |p0|(2−s):
    // p2(0) = 2|p3| and p3 = p0.
    let member = survivors
        .iter()
        .find(|s| {
            let p0 = s["p0"].as_f64().unwrap();
            let lambda = s["lambda"].as_f64().unwrap();
            p0 < 0.0 && (lambda / p0.abs() - 0.5).abs() < 1e-6
        })
        .expect("family member with λ = |p0|/2");
    let p_start = member["p_start"].as_array().unwrap();
    let p_end = member["p_end"].as_array().unwrap();
    let p3 = p_end[2].as_f64().unwrap();
    assert!((p_start[1].as_f64().unwrap() - 2.0 * p3.abs()).abs() < 1e-4);
    assert!(p_start[0].as_f64().unwrap().abs() < 1e-9);

    // Impulsive minimizer: the normal multiplier (0, 0, 1) survives.
    let out = bin()
        .args([
            "search",
            data("problem-as-printed.toml").to_str().unwrap(),
            data("impulsive-process.toml").to_str().unwrap(),
            "--grid",
            "21",
            "--resolution",
            "6",
        ])
        .output()
        .unwrap();
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let json: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    let survivors = json["survivors"].as_array().unwrap();
    let normal = survivors.iter().any(|s| {
        (s["lambda"].as_f64().unwrap() - 1.0).abs() < 1e-9
            && s["p0"].as_f64().unwrap().abs() < 1e-9
            && s["p_end"]
                .as_array()
                .unwrap()
                .iter()
                .all(|v| v.as_f64().unwrap().abs() < 1e-9)
    });
    assert!(normal, "normal multiplier (0, 0, 1) not found");
}

#[test]
fn search_cap_exceeded_on_many_kinks() {
    // Ten kink nodes active along the trajectory: 3^10 sign tables blow the
    // policy cap.
    let problem = tmp("goh_many_kinks_problem.toml");
    let terms: Vec<String> = (1..=10).map(|k| format!("abs({k} * x1)")).collect();
    std::fs::write(
        &problem,
        format!(
            r#"
[problem]
n = 1
m = 1
m1 = 1
q = 0
drift = ["{}"]
g = [["0"]]
psi = "x1^2"
x0 = [0.0]
K = 4.0

[cone]
lines = [[1.0]]

[A]
lower = []
upper = []

[[target.cones]]
lines = [[1.0, 0.0], [0.0, 1.0]]
"#,
            terms.join(" + ")
        ),
    )
    .unwrap();
    let process = tmp("goh_many_kinks_process.toml");
    std::fs::write(
        &process,
        "[[piece]]\nduration = 1.0\nw0 = 1.0\nw = [0.0]\nalpha = []\nzeta = 0.0\n",
    )
    .unwrap();
    let out = bin()
        .args([
            "search",
            problem.to_str().unwrap(),
            process.to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("cap"), "{err}");
}

#[test]
fn search_rejects_off_target_endpoint() {
    let short = tmp("goh_short_process.toml");
    std::fs::write(
        &short,
        "[[piece]]\nduration = 1.0\nw0 = 0.5\nw = [-0.5, 0.0]\nalpha = []\nzeta = 0.0\n",
    )
    .unwrap();
    let out = bin()
        .args([
            "search",
            data("problem-as-printed.toml").to_str().unwrap(),
            short.to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("infeasible"));
}

#[test]
fn extend_subcommand_produces_the_candidate() {
    let strict = tmp("goh_strict.toml");
    std::fs::write(
        &strict,
        "[[piece]]\nduration = 1.0\nu = [-1.0, 0.0]\na = []\n",
    )
    .unwrap();
    let extended = tmp("goh_extended.toml");
    let out = bin()
        .args([
            "extend",
            data("problem-as-printed.toml").to_str().unwrap(),
            strict.to_str().unwrap(),
            "--out",
            extended.to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let problem = files::load_problem(&data("problem-as-printed.toml")).unwrap();
    let (ep, _) = files::load_process(&extended, &problem).unwrap();
    assert_eq!(ep.pieces.len(), 1);
    assert!((ep.pieces[0].duration - 2.0).abs() < 1e-12);
    assert!((ep.pieces[0].w0 - 0.5).abs() < 1e-12);
    assert!((ep.pieces[0].w[0] + 0.5).abs() < 1e-12);
}
