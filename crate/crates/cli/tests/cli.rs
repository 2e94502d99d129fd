use std::path::Path;
use std::process::{Command, Output};

fn martdev(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_martdev"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

const TAIL: [&str; 10] = [
    "tail",
    "--model",
    "rademacher",
    "--n",
    "400",
    "--x",
    "0:3:1",
    "--budget",
    "2e3",
    "--seed",
];

#[test]
fn verify_exits_zero() {
    let o = martdev(&["verify"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let json: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    let suites = json["result"]["suites"].as_array().unwrap();
    assert_eq!(suites.len(), 6);
    assert!(suites.iter().all(|s| s["violations"] == 0));
    assert!(stderr(&o).contains("gaussian_sandwich"));
}

#[test]
fn tail_is_byte_identical_on_repeat() {
    let args: Vec<&str> = TAIL.iter().copied().chain(["7"]).collect();
    let a = martdev(&args);
    assert_eq!(a.status.code(), Some(0), "{}", stderr(&a));
    let b = martdev(&args);
    assert_eq!(a.stdout, b.stdout);
    let mut threaded = args.clone();
    threaded.extend(["--workers", "3"]);
    assert_eq!(martdev(&threaded).stdout, a.stdout);

    let text = stdout(&a);
    let mut lines = text.lines();
    let header = lines.next().unwrap();
    assert!(header.starts_with("# config: {"));
    assert!(header.contains(r#""seed":7"#) && header.contains(r#""budget":2000"#));
    assert_eq!(
        lines.next().unwrap(),
        "x,p_hat,se,ci_lo,ci_hi,gauss_tail,ratio,log_ratio,bound_lo,bound_hi,ess,n_samples,seed"
    );
    assert_eq!(lines.count(), 4);

    let other = martdev(&TAIL.iter().copied().chain(["8"]).collect::<Vec<_>>());
    assert_ne!(other.stdout, a.stdout);
}

#[test]
fn config_file_matches_flags() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("tail.json");
    std::fs::write(
        &cfg,
        r#"{"command":"tail","model":"rademacher","n":400,"x":[0,1,2,3],"budget":"2e3","seed":5}"#,
    )
    .unwrap();
    let from_file = martdev(&["tail", "--config", cfg.to_str().unwrap()]);
    assert_eq!(from_file.status.code(), Some(0), "{}", stderr(&from_file));
    let from_flags = martdev(&TAIL.iter().copied().chain(["5"]).collect::<Vec<_>>());
    let body = |o: &Output| stdout(o).lines().skip(1).collect::<Vec<_>>().join("\n");
    assert_eq!(body(&from_file), body(&from_flags));
    // flags override the file
    let seeded = martdev(&["tail", "--config", cfg.to_str().unwrap(), "--seed", "7"]);
    let seven = martdev(&TAIL.iter().copied().chain(["7"]).collect::<Vec<_>>());
    assert_eq!(body(&seeded), body(&seven));
}

#[test]
fn usage_errors_exit_two() {
    assert_eq!(martdev(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(
        martdev(&["tail", "--model", "rademacher"]).status.code(),
        Some(2)
    );
    assert_eq!(
        martdev(&["tail", "--model", "cauchy", "--n", "10"])
            .status
            .code(),
        Some(2)
    );
    let half = martdev(&[
        "tail",
        "--model",
        "rademacher",
        "--n",
        "10",
        "--budget",
        "2.5",
    ]);
    assert_eq!(half.status.code(), Some(2));
    assert!(stderr(&half).contains("budget"));

    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    std::fs::write(
        &bad,
        "{\n  \"model\": \"rademacher\",\n  \"budjet\": 5\n}\n",
    )
    .unwrap();
    let o = martdev(&["tail", "--config", bad.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    let msg = stderr(&o);
    assert!(msg.contains("budjet") && msg.contains("line 3"), "{msg}");

    let stray = dir.path().join("stray.json");
    std::fs::write(&stray, r#"{"n": [100, 400], "rate": 0.2}"#).unwrap();
    let o = martdev(&["couple", "--config", stray.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("rate"));

    let wrong = dir.path().join("wrong.json");
    std::fs::write(&wrong, r#"{"command": "tail"}"#).unwrap();
    assert_eq!(
        martdev(&["verify", "--config", wrong.to_str().unwrap()])
            .status
            .code(),
        Some(2)
    );
}

fn read(dir: &Path, file: &str) -> String {
    std::fs::read_to_string(dir.join(file)).unwrap()
}

#[test]
fn commands_write_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();

    let c = martdev(&[
        "certify",
        "--model",
        "regime_switch",
        "--n",
        "100",
        "--param",
        "gamma=0.3",
        "--out",
        out,
    ]);
    assert_eq!(c.status.code(), Some(0), "{}", stderr(&c));
    let cert: serde_json::Value = serde_json::from_str(&read(dir.path(), "certify.json")).unwrap();
    assert_eq!(cert["result"]["n"], 100);
    assert!(cert["result"]["eps_n"].as_f64().unwrap() > 0.0);
    assert!(stdout(&c).contains("wrote"));

    let m = martdev(&["mdp", "--n", "100,400", "--budget", "2e3", "--out", out]);
    assert_eq!(m.status.code(), Some(0), "{}", stderr(&m));
    let mdp = read(dir.path(), "mdp.csv");
    assert_eq!(
        mdp.lines().nth(1),
        Some("n,a_n,level,lambda,p_hat,ln_p_hat,se,value,target")
    );
    assert_eq!(mdp.lines().count(), 4);

    let p = martdev(&["couple", "--n", "100", "--budget", "1e3", "--out", out]);
    assert_eq!(p.status.code(), Some(0), "{}", stderr(&p));
    let couple = read(dir.path(), "couple.csv");
    assert!(couple.lines().next().unwrap().contains(r#""alpha":0.125"#));
    assert!(stderr(&p).contains("warning"));

    let chain = dir.path().join("chain.json");
    std::fs::write(
        &chain,
        r#"{"name":"lazy","states":["a","b"],"P":[[0.6,0.4],[0.4,0.6]],"f":[1,-1]}"#,
    )
    .unwrap();
    let x = martdev(&[
        "mixing",
        "--chain",
        chain.to_str().unwrap(),
        "--n",
        "2000",
        "--budget",
        "2e3",
        "--out",
        out,
    ]);
    assert_eq!(x.status.code(), Some(0), "{}", stderr(&x));
    let mixing = read(dir.path(), "mixing.csv");
    let header = mixing.lines().next().unwrap();
    assert!(header.contains(r#""name":"lazy""#) && !header.contains("chain.json"));
    assert_eq!(mixing.lines().count(), 5);
}

#[test]
fn certification_failure_exits_one() {
    let o = martdev(&[
        "certify",
        "--model",
        "two_point",
        "--n",
        "1",
        "--param",
        "p_up=1e-5",
    ]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("certification failed"));
    assert!(o.stdout.is_empty());
}
