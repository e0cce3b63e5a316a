use std::path::Path;
use std::process::{Command, Output};

fn sabias(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sabias"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

const SMALL_RUN: &str = r#"
kind = "rr-compare"
name = "small"
stepsizes = [0.1, 0.2, 0.4]
steps = 4000
replicas = 6

[dynamic]
type = "scaled-abs"
b = 0.0
theta0 = [1.0]
noise = { kind = "gaussian", variance = 1.0 }
"#;

// State 0 has two identical actions but no state ever moves into it.
const ROOTED_TIE: &str = "\
2 2 0.9 0.5
0 1
0 1
0 1
0 1
1 1 0.5 0
0.25 0.25 0.25 0.25
";

#[test]
fn describe_mdp_reports_the_type() {
    let dir = tempfile::tempdir().unwrap();
    let b = dir.path().join("b.txt");
    let a = dir.path().join("a.txt");
    let rooted = dir.path().join("rooted.txt");
    assert!(sabias(&["gen-mdp", "--seed", "0", "--out", b.to_str().unwrap()]).status.success());
    assert!(sabias(&["gen-mdp", "--seed", "0", "--type-a", "--out", a.to_str().unwrap()]).status.success());
    std::fs::write(&rooted, ROOTED_TIE).unwrap();

    let out = stdout(&sabias(&["describe-mdp", b.to_str().unwrap()]));
    assert!(out.contains("type: TypeB"), "{out}");
    let out = stdout(&sabias(&["describe-mdp", a.to_str().unwrap()]));
    assert!(out.contains("type: TypeA (witness: state 0)"), "{out}");
    let out = stdout(&sabias(&["describe-mdp", rooted.to_str().unwrap()]));
    assert!(out.contains("tied rooted"), "{out}");
    assert!(out.contains("type: TypeB"), "{out}");
}

fn read(dir: &Path, name: &str) -> Vec<u8> {
    std::fs::read(dir.join(name)).unwrap_or_else(|e| panic!("{name}: {e}"))
}

#[test]
fn runs_replay_byte_for_byte() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("small.toml");
    std::fs::write(&cfg, SMALL_RUN).unwrap();
    let (one, four, replay) = (dir.path().join("one"), dir.path().join("four"), dir.path().join("replay"));

    let run = |args: &[&str]| {
        let o = sabias(args);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    };
    run(&["run", "--config", cfg.to_str().unwrap(), "--threads", "1", "--out", one.to_str().unwrap()]);
    run(&["--config", cfg.to_str().unwrap(), "--threads", "4", "--out", four.to_str().unwrap()]);
    let manifest = one.join("manifest.json");
    run(&["run", "--config", manifest.to_str().unwrap(), "--out", replay.to_str().unwrap()]);

    for name in ["bias.csv", "slope.json"] {
        let first = read(&one, name);
        assert!(!first.is_empty());
        assert_eq!(first, read(&four, name), "{name} depends on the thread count");
        assert_eq!(first, read(&replay, name), "{name} differs on manifest replay");
    }
    let csv = String::from_utf8(read(&one, "bias.csv")).unwrap();
    assert!(csv.starts_with("alpha,estimator,component,bias,stderr\n"));
    assert!(csv.contains(",RR,"));

    // A different seed gives different numbers.
    let other = dir.path().join("other");
    run(&["run", "--config", cfg.to_str().unwrap(), "--seed", "7", "--out", other.to_str().unwrap()]);
    assert_ne!(read(&one, "bias.csv"), read(&other, "bias.csv"));
}

#[test]
fn bad_input_exits_with_code_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    std::fs::write(&cfg, SMALL_RUN.replace("stepsizes = [0.1, 0.2, 0.4]", "stepsizes = [1.5]")).unwrap();
    let o = sabias(&["run", "--config", cfg.to_str().unwrap(), "--out", dir.path().join("x").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2), "{}", String::from_utf8_lossy(&o.stderr));

    std::fs::write(&cfg, "kind = \"bias-sweep\"\nbogus = 1\n").unwrap();
    assert_eq!(sabias(&["run", "--config", cfg.to_str().unwrap()]).status.code(), Some(2));
    assert_eq!(sabias(&["run", "--preset", "no-such-preset"]).status.code(), Some(2));

    let mdp = dir.path().join("m.txt");
    std::fs::write(&mdp, "2 2 0.9\n").unwrap();
    let o = sabias(&["describe-mdp", mdp.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("line 1"));
}

#[test]
fn presets_are_listed_and_printable() {
    let names = stdout(&sabias(&["presets"]));
    for n in ["fig5a", "fig5b", "fig5c", "coupling", "w2", "smooth"] {
        assert!(names.lines().any(|l| l == n), "{names}");
    }
    let toml = stdout(&sabias(&["show-preset", "fig5b"]));
    assert!(toml.contains("type_a = true"));
}
