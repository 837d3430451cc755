use std::process::Command;

fn bench(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_bench"))
        .args(args)
        .env("RUST_LOG", "off")
        .output()
        .unwrap()
}

#[test]
fn latency_writes_summary_and_samples() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("lat.csv");
    let samples = dir.path().join("samples.csv");
    let o = bench(&[
        "latency",
        "--pps",
        "1000000",
        "--secs",
        "0.001",
        "--out",
        out.to_str().unwrap(),
        "--samples",
        samples.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = std::fs::read_to_string(&out).unwrap();
    let lines: Vec<_> = text.lines().collect();
    assert_eq!(lines.len(), 2);
    assert!(lines[1].starts_with("latency-1000000pps,32,512,1000000,0.001,1000,0,0,"));
    assert!(lines[1].ends_with(",vtick"));
    let s = std::fs::read_to_string(&samples).unwrap();
    assert!(s.starts_with("latency,count\n"));
    let total: u64 = s
        .lines()
        .skip(1)
        .map(|l| l.split(',').nth(1).unwrap().parse::<u64>().unwrap())
        .sum();
    assert_eq!(total, 1000);
}

#[test]
fn bad_sizes_fail() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("s.csv");
    let o = bench(&["sweep", "--sizes", "0,32", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    let o = bench(&["sweep", "--sizes", "x", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn seed_changes_payload_not_counts() {
    let dir = tempfile::tempdir().unwrap();
    let run = |seed: &str, name: &str| {
        let p = dir.path().join(name);
        let o = Command::new(env!("CARGO_BIN_EXE_bench"))
            .args([
                "sweep",
                "--sizes",
                "32",
                "--secs",
                "0.0005",
                "--out",
                p.to_str().unwrap(),
            ])
            .env("NICDRV_SEED", seed)
            .env("RUST_LOG", "off")
            .output()
            .unwrap();
        assert!(o.status.success());
        std::fs::read_to_string(p).unwrap()
    };
    assert_eq!(run("1", "a.csv"), run("2", "b.csv"));
    let o = Command::new(env!("CARGO_BIN_EXE_bench"))
        .args(["sweep", "--out", "/dev/null"])
        .env("NICDRV_SEED", "nope")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(1));
}
