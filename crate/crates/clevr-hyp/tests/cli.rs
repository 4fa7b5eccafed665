//! End-to-end runs of the installed binary, including exit-code mapping.

use std::path::Path;
use std::process::{Command, Output};

const BIN: &str = env!("CARGO_BIN_EXE_clevr-hyp");

fn run(args: &[&str]) -> Output {
    Command::new(BIN).args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn write_scene(path: &Path) {
    let scene = serde_json::json!({
        "seed": 7,
        "objects": [
            {"id": "a", "size": "small", "color": "red", "material": "metal",
             "shape": "cube", "x": -1.0, "y": 0.0, "on_base": null},
            {"id": "b", "size": "big", "color": "blue", "material": "rubber",
             "shape": "sphere", "x": 1.0, "y": 0.0, "on_base": null}
        ]
    });
    std::fs::write(path, serde_json::to_vec_pretty(&scene).unwrap()).unwrap();
}

#[test]
fn generate_stats_validate_balance_eval_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("train.jsonl");
    let out = run(&[
        "generate", "--split", "original", "--images", "4", "--seed", "1",
        "--out", data.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(data.exists());
    assert!(dir.path().join("train.jsonl.stats.json").exists());

    let out = run(&["stats", "--dataset", data.to_str().unwrap()]);
    assert!(out.status.success());
    assert!(stdout(&out).contains("samples"));

    let out = run(&["validate", "--dataset", data.to_str().unwrap()]);
    assert!(out.status.success());
    assert!(stdout(&out).contains("re-verified"));

    // score a predictions file that answers the first sample correctly
    let first = std::fs::read_to_string(&data).unwrap();
    let first: serde_json::Value = serde_json::from_str(first.lines().next().unwrap()).unwrap();
    let preds = dir.path().join("preds.jsonl");
    std::fs::write(
        &preds,
        format!(
            "{}\n",
            serde_json::json!({
                "image_id": first["image_id"], "pair_index": first["pair_index"],
                "answer": first["answer"]
            })
        ),
    )
    .unwrap();
    let out = run(&[
        "eval", "--dataset", data.to_str().unwrap(), "--predictions", preds.to_str().unwrap(),
    ]);
    assert!(out.status.success());
    let report: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(report["overall"]["correct"], 1);
    assert_eq!(report["n_missing"], 99);
}

#[test]
fn exec_answers_questions_and_applies_actions() {
    let dir = tempfile::tempdir().unwrap();
    let scene = dir.path().join("scene.json");
    write_scene(&scene);
    let out = run(&[
        "exec", "--scene", scene.to_str().unwrap(),
        "--action", "remove(filter_material(rubber,scene()))",
        "--question", "count(scene())",
    ]);
    assert!(out.status.success());
    assert_eq!(stdout(&out).trim(), "1");
}

#[test]
fn exit_codes_distinguish_failure_classes() {
    let dir = tempfile::tempdir().unwrap();
    let scene = dir.path().join("scene.json");
    write_scene(&scene);

    // unknown split -> configuration error
    let out = run(&["generate", "--split", "bogus", "--out", "/dev/null"]);
    assert_eq!(out.status.code(), Some(2));

    // malformed program -> program error
    let out = run(&[
        "exec", "--scene", scene.to_str().unwrap(), "--question", "count(nope())",
    ]);
    assert_eq!(out.status.code(), Some(4));

    // ill-posed question -> execution error
    let out = run(&[
        "exec", "--scene", scene.to_str().unwrap(),
        "--question", "query_color(unique(scene()))",
    ]);
    assert_eq!(out.status.code(), Some(5));

    // predictions with a duplicate key -> evaluation error
    let data = dir.path().join("d.jsonl");
    let out = run(&[
        "generate", "--split", "original", "--images", "1", "--seed", "3",
        "--out", data.to_str().unwrap(),
    ]);
    assert!(out.status.success());
    let preds = dir.path().join("p.jsonl");
    let line = serde_json::json!({"image_id": 0, "pair_index": 0, "answer": "yes"});
    std::fs::write(&preds, format!("{line}\n{line}\n")).unwrap();
    let out = run(&[
        "eval", "--dataset", data.to_str().unwrap(), "--predictions", preds.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(6));
}

#[test]
fn seed_env_var_sets_the_default_but_the_flag_wins() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.jsonl");
    let b = dir.path().join("b.jsonl");
    let c = dir.path().join("c.jsonl");
    // env default
    let out = Command::new(BIN)
        .env("CLEVR_HYP_SEED", "9")
        .args(["generate", "--split", "original", "--images", "2", "--out", a.to_str().unwrap()])
        .output()
        .unwrap();
    assert!(out.status.success());
    // explicit flag, same seed
    let out = run(&[
        "generate", "--split", "original", "--images", "2", "--seed", "9",
        "--out", b.to_str().unwrap(),
    ]);
    assert!(out.status.success());
    // flag overrides a conflicting env value
    let out = Command::new(BIN)
        .env("CLEVR_HYP_SEED", "1234")
        .args([
            "generate", "--split", "original", "--images", "2", "--seed", "9",
            "--out", c.to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert!(out.status.success());
    let a = std::fs::read(&a).unwrap();
    assert_eq!(a, std::fs::read(&b).unwrap());
    assert_eq!(a, std::fs::read(&c).unwrap());
}

#[test]
fn paraphrase_hook_rewrites_questions_and_survives_failure() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("p.jsonl");
    let out = run(&[
        "generate", "--split", "original", "--images", "1", "--seed", "2",
        "--out", data.to_str().unwrap(),
        "--paraphrase-cmd", "tr '[:lower:]' '[:upper:]'",
    ]);
    assert!(out.status.success());
    let text = std::fs::read_to_string(&data).unwrap();
    let first: serde_json::Value = serde_json::from_str(text.lines().next().unwrap()).unwrap();
    let q = first["question_text"].as_str().unwrap();
    assert_eq!(q, q.to_uppercase());

    // a failing command leaves the original text in place
    let data2 = dir.path().join("q.jsonl");
    let out = run(&[
        "generate", "--split", "original", "--images", "1", "--seed", "2",
        "--out", data2.to_str().unwrap(),
        "--paraphrase-cmd", "false",
    ]);
    assert!(out.status.success());
    let text = std::fs::read_to_string(&data2).unwrap();
    let first: serde_json::Value = serde_json::from_str(text.lines().next().unwrap()).unwrap();
    let q = first["question_text"].as_str().unwrap();
    assert_ne!(q, q.to_uppercase());
}

#[test]
fn test_mode_writes_scene_sidecar() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("test.jsonl");
    let out = run(&[
        "generate", "--split", "original", "--images", "2", "--seed", "5",
        "--out", data.to_str().unwrap(), "--test-mode",
    ]);
    assert!(out.status.success());
    let text = std::fs::read_to_string(&data).unwrap();
    assert!(!text.contains("\"scene\""));
    let scenes = dir.path().join("test.jsonl.scenes.json");
    let scenes: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(scenes).unwrap()).unwrap();
    assert_eq!(scenes.as_array().unwrap().len(), 2);
}
