use std::path::Path;
use std::process::{Command, Output};

fn grapheme(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_grapheme")).args(args).current_dir(dir).output().unwrap()
}

fn write(dir: &Path, name: &str, text: &str) {
    std::fs::write(dir.join(name), text).unwrap();
}

const SIM: &str = "mode = \"simulate\"\nn0 = 20\nd = 1.0\nc = 0.5\nhorizon = 1.5\nsnapshot_interval = 0.5\nreplicas = 3\nseed = 11\n";

#[test]
fn simulate_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "sim.toml", SIM);
    for out in ["a", "b"] {
        let o = grapheme(&["-c", "sim.toml", "-o", out], dir.path());
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    for f in ["stats.csv", "trajectory_0000.jsonl", "trajectory_0002.jsonl"] {
        let a = std::fs::read(dir.path().join("a").join(f)).unwrap();
        let b = std::fs::read(dir.path().join("b").join(f)).unwrap();
        assert_eq!(a, b, "{f} differs between identical runs");
    }
    let stats = std::fs::read_to_string(dir.path().join("a/stats.csv")).unwrap();
    assert!(stats.starts_with("# schema=grapheme-v1 seed=11\nreplica,time,"));
    // 3 replicas × snapshots at 0, 0.5, 1, 1.5
    assert_eq!(stats.lines().count(), 2 + 3 * 4);
}

#[test]
fn configuration_errors_exit_with_1() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "bad.toml", "mode = \"simulate\"\nspeed = 2\n");
    assert_eq!(grapheme(&["-c", "bad.toml"], dir.path()).status.code(), Some(1));
    write(dir.path(), "neg.toml", "mode = \"simulate\"\nd = -1\n");
    assert_eq!(grapheme(&["-c", "neg.toml"], dir.path()).status.code(), Some(1));
    assert_eq!(grapheme(&[], dir.path()).status.code(), Some(1));
}

#[test]
fn failed_assertion_exits_with_3() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "sim.toml", &format!("{SIM}expect_n = 21\n"));
    assert!(grapheme(&["-c", "sim.toml", "-o", "run"], dir.path()).status.success());
    // n is 20 in every replica, so any other expectation fails
    let o = grapheme(&["-c", "sim.toml", "--mode", "aggregate", "-o", "run", "--assert"], dir.path());
    assert_eq!(o.status.code(), Some(3), "{}", String::from_utf8_lossy(&o.stderr));
    // without --assert the summary is still written
    assert!(grapheme(&["-c", "sim.toml", "--mode", "aggregate", "-o", "run"], dir.path()).status.success());
}

#[test]
fn aggregate_single_replica() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "sim.toml", &SIM.replace("replicas = 3", "replicas = 1"));
    assert!(grapheme(&["-c", "sim.toml", "-o", "run"], dir.path()).status.success());
    let o = grapheme(&["--mode", "aggregate", "-o", "run", "--assert"], dir.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let summary = std::fs::read_to_string(dir.path().join("run/summary.csv")).unwrap();
    let n_row = summary.lines().find(|l| l.starts_with("n,")).unwrap();
    assert!(n_row.starts_with("n,20,0,1,"), "{n_row}");
}

#[test]
fn schema_mismatch_is_a_runtime_failure() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "stats.csv", "# schema=grapheme-v0 seed=1\nreplica,time,n\n0,1,5\n");
    let o = grapheme(&["--mode", "aggregate", "stats.csv"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("schema"));
}

#[test]
fn replay_example_prints_the_scripted_history() {
    let dir = tempfile::tempdir().unwrap();
    let o = grapheme(&["--mode", "replay-example", "-o", "replay"], dir.path());
    assert!(o.status.success());
    let text = String::from_utf8(o.stdout).unwrap();
    for partition in ["{1,2},{3}", "{1,2,3}", "{1,2,3},{4}", "{1,2,3,5},{4}"] {
        assert!(text.contains(&format!("components {partition}\n")), "{partition} missing:\n{text}");
    }
    assert!(text.contains("0.632121"));
    assert!(dir.path().join("replay/replay.jsonl").exists());
    assert!(dir.path().join("replay/replay.csv").exists());
}

#[test]
fn duality_check_writes_report() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "dual.toml", "mode = \"duality-check\"\nn0 = 10\nd = 1.0\nc = 0.3\nburn_in = 0.5\ndual_time = 0.5\nm = 2\nlambda = 0.5\nreplicas = 400\nseed = 3\n");
    let o = grapheme(&["-c", "dual.toml", "-o", "out", "--assert"], dir.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = std::fs::read_to_string(dir.path().join("out/duality.csv")).unwrap();
    assert_eq!(csv.lines().count(), 3);
}

#[test]
fn pooled_mean_agrees_with_each_seed() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "sim.toml", &SIM.replace("replicas = 3", "replicas = 40").replace("snapshot_interval = 0.5", "snapshot_interval = 1.5"));
    let mut files = Vec::new();
    for seed in ["1", "2"] {
        let out = format!("s{seed}");
        assert!(grapheme(&["-c", "sim.toml", "--seed", seed, "-o", &out], dir.path()).status.success());
        assert!(grapheme(&["--mode", "aggregate", "-o", &out], dir.path()).status.success());
        files.push(format!("{out}/stats.csv"));
    }
    let o = grapheme(&["--mode", "aggregate", "-o", "pooled", &files[0], &files[1]], dir.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let stat = |path: &str| -> (f64, f64, usize) {
        let text = std::fs::read_to_string(dir.path().join(path)).unwrap();
        let row: Vec<&str> = text.lines().find(|l| l.starts_with("pair_connection,")).unwrap().split(',').collect();
        (row[1].parse().unwrap(), row[2].parse().unwrap(), row[3].parse().unwrap())
    };
    let (pm, pse, count) = stat("pooled/summary.csv");
    assert_eq!(count, 80);
    for seed in ["s1", "s2"] {
        let (m, se, _) = stat(&format!("{seed}/summary.csv"));
        assert!((pm - m).abs() <= 3.0 * (se * se + pse * pse).sqrt(), "{seed}: {m} vs pooled {pm}");
    }
}
