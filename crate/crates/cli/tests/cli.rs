use std::path::Path;
use std::process::{Command, Output};

const GOLD: &str = "( (S (NP-SBJ (NNP Singapore)) (VP (VBZ is) (VP (VBN located) (PP (IN in) (NP (NNP Asia))))) (. .)) )\n(S (NP (DT the) (NN cat)) (VP (VBZ sleeps)))\n";

fn conparse(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_conparse"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn setup() -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("gold.txt"), GOLD).unwrap();
    dir
}

#[test]
fn linearize_then_decode_round_trips() {
    let dir = setup();
    for strategy in ["bracket", "transition", "span"] {
        let lin = conparse(dir.path(), &["linearize", "gold.txt", "--strategy", strategy]);
        assert!(lin.status.success());
        std::fs::write(dir.path().join("lin.txt"), &lin.stdout).unwrap();
        let dec = conparse(dir.path(), &["decode", "lin.txt", "--strategy", strategy]);
        assert!(dec.status.success(), "{}", String::from_utf8_lossy(&dec.stderr));
        assert_eq!(
            stdout(&dec),
            "(S (NP (NNP Singapore)) (VP (VBZ is) (VP (VBN located) (PP (IN in) (NP (NNP Asia))))) (. .))\n(S (NP (DT the) (NN cat)) (VP (VBZ sleeps)))\n"
        );
    }
}

#[test]
fn score_and_checks() {
    let dir = setup();
    std::fs::write(
        dir.path().join("pred.txt"),
        "(S (NP (NNP Singapore)) (VP (VBZ is) (VP (VBN situated) (PP (IN in) (NP (NNP Asia))))) (. .))\n(S (NP (NNP\n",
    )
    .unwrap();
    let o = conparse(dir.path(), &["score", "--gold", "gold.txt", "--pred", "pred.txt", "--json"]);
    assert!(o.status.success());
    let r: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(r["invalid_rate"], 50.0);
    assert_eq!(r["valid_f1"], 1.0);

    let o = conparse(dir.path(), &["validate", "pred.txt"]);
    let reports: Vec<serde_json::Value> = stdout(&o).lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(reports[0]["valid"], true);
    assert_eq!(reports[1]["errors"][0]["kind"], "bracket_unmatched");

    let o = conparse(dir.path(), &["faithcheck", "--gold", "gold.txt", "--pred", "pred.txt"]);
    assert!(stdout(&o).contains("'situated' does not exist in the original input sentence."));
}

#[test]
fn parse_report_and_resume() {
    let dir = setup();
    std::fs::write(
        dir.path().join("script.jsonl"),
        "{\"prompt_sha256\":\"*\",\"responses\":[\"(S (NP (NNP )) (VP (VBZ is)))\",\"(S (NP (DT the) (NN cat)) (VP (VBZ sleeps)))\"]}\n",
    )
    .unwrap();
    let args = ["parse", "gold.txt", "--script", "script.jsonl", "--out", "out.jsonl", "--domain", "law"];
    assert!(conparse(dir.path(), &args).status.success());
    assert!(conparse(dir.path(), &args).status.success());
    let text = std::fs::read_to_string(dir.path().join("out.jsonl")).unwrap();
    assert_eq!(text.lines().count(), 2);

    let o = conparse(dir.path(), &["report", "out.jsonl", "--format", "json"]);
    let rep: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(rep["domains"][0]["key"], "law");
    assert_eq!(rep["domains"][0]["invalid_rate"], 50.0);
    assert_eq!(rep["domains"][0]["valid_f1"], 100.0);

    let o = conparse(dir.path(), &["report", "out.jsonl", "--format", "csv", "--by-input-length"]);
    assert!(stdout(&o).starts_with("section,key,"));
    assert!(stdout(&o).contains("input_length,<=10,2"));
}

#[test]
fn pmc_trace() {
    let dir = setup();
    std::fs::write(
        dir.path().join("script.jsonl"),
        "{\"prompt_sha256\":\"*\",\"responses\":[\"(S (NP (NNP )) (VP (VBZ is) (VP (VBN located) (PP (IN in) (NP (NNP Asia))))))\",\"(S (NP (NNP Singapore)) (VP (VBZ is) (VP (VBN located) (PP (IN in) (NP (NNP Asia))))))\"]}\n",
    )
    .unwrap();
    let o = conparse(dir.path(), &["pmc", "Singapore is located in Asia", "--script", "script.jsonl"]);
    assert!(o.status.success());
    let session: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(session["rounds"].as_array().unwrap().len(), 2);
    assert_eq!(session["converged"], true);
    assert!(session["rounds"][1]["prompt"]
        .as_str()
        .unwrap()
        .contains("The constituent (NNP) lacks a word."));
}

#[test]
fn export_and_corrupt() {
    let dir = setup();
    let o = conparse(dir.path(), &["export-finetune", "gold.txt", "--strategy", "span"]);
    let recs: Vec<serde_json::Value> = stdout(&o).lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(recs.len(), 2);
    assert_eq!(recs[1]["input"], "the cat sleeps");

    let o = conparse(dir.path(), &["corrupt", "gold.txt", "--kind", "bracket-unmatched", "--seed", "4"]);
    for line in stdout(&o).lines() {
        let v: serde_json::Value = serde_json::from_str(line).unwrap();
        assert!(v["text"].as_str().unwrap().matches('(').count() > v["text"].as_str().unwrap().matches(')').count());
    }
}

#[test]
fn exit_codes() {
    let dir = setup();
    assert_eq!(conparse(dir.path(), &["no-such-command"]).status.code(), Some(1));
    assert_eq!(conparse(dir.path(), &["linearize", "gold.txt", "--strategy", "tree"]).status.code(), Some(1));
    assert_eq!(conparse(dir.path(), &["stats", "missing.txt"]).status.code(), Some(2));
    assert_eq!(conparse(dir.path(), &["--help"]).status.code(), Some(0));
    std::fs::write(dir.path().join("empty.jsonl"), "{\"prompt\":\"unused\",\"responses\":[\"x\"]}\n").unwrap();
    let o = conparse(dir.path(), &["parse", "gold.txt", "--script", "empty.jsonl", "--out", "o.jsonl"]);
    assert_eq!(o.status.code(), Some(3));
    let text = std::fs::read_to_string(dir.path().join("o.jsonl")).unwrap();
    assert!(text.lines().all(|l| l.contains("backend_error")));
}
