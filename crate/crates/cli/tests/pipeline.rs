use std::path::Path;
use std::process::Command;

use hyperbranch::KineticParams;
use hyperbranch_cli::config::{ChainLengthGrid, CycleGrid};
use hyperbranch_cli::io::Table;
use hyperbranch_cli::RunConfig;

fn write_config(dir: &Path, cache: bool) -> std::path::PathBuf {
    let mut cfg = RunConfig::with_preset("tiny", KineticParams::new(1.0, 1e-3), vec![0.3, 0.5]);
    cfg.output_dir = dir.join("out");
    if cache {
        cfg.cache_dir = Some(dir.join("cache"));
    }
    cfg.post.scalars = true;
    cfg.post.chain_length = Some(ChainLengthGrid { n_max: 10.0, dense_to: 10, points: 2 });
    cfg.post.cycle_length = Some(CycleGrid { n_min: 1.0, n_max: 50.0, bins: 10 });
    let path = dir.join("run.toml");
    std::fs::write(&path, cfg.to_toml()).unwrap();
    path
}

fn hyperbranch(args: &[&str], config: Option<&Path>) -> std::process::Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_hyperbranch"));
    cmd.args(args);
    if let Some(c) = config {
        cmd.arg("--config").arg(c);
    }
    cmd.output().unwrap()
}

#[test]
fn run_then_post_writes_versioned_tables() {
    let tmp = tempfile::tempdir().unwrap();
    let config = write_config(tmp.path(), false);
    let run = hyperbranch(&["run"], Some(&config));
    assert!(run.status.success(), "{}", String::from_utf8_lossy(&run.stderr));
    let post = hyperbranch(&["post"], Some(&config));
    assert!(post.status.success(), "{}", String::from_utf8_lossy(&post.stderr));

    let out = tmp.path().join("out");
    let scalars = Table::read(&out.join("scalars.csv"), "scalars").unwrap();
    let conversion = scalars.column("conversion").unwrap();
    assert!(conversion.windows(2).all(|w| w[1] >= w[0]));
    assert!(*conversion.last().unwrap() >= 0.5);
    assert!(out.join("state_c0.5.csv").exists());
    let cld = Table::read(&out.join("cld_c0.5.csv"), "cld").unwrap();
    assert_eq!(cld.column("n").unwrap().first(), Some(&1.0));
    assert!(Table::read(&out.join("scalars.csv"), "cld").is_err());
}

#[test]
fn operator_cache_is_reused() {
    let tmp = tempfile::tempdir().unwrap();
    let config = write_config(tmp.path(), true);
    let first = hyperbranch(&["cache"], Some(&config));
    assert_eq!(String::from_utf8_lossy(&first.stdout).trim(), "cache built");
    let second = hyperbranch(&["cache"], Some(&config));
    assert_eq!(String::from_utf8_lossy(&second.stdout).trim(), "cache hit");

    let file = std::fs::read_dir(tmp.path().join("cache")).unwrap().next().unwrap().unwrap().path();
    std::fs::write(&file, b"garbage").unwrap();
    assert_eq!(hyperbranch(&["cache"], Some(&config)).status.code(), Some(4));
}

#[test]
fn exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    assert_eq!(hyperbranch(&["run"], None).status.code(), Some(2));
    assert_eq!(hyperbranch(&["run"], Some(&tmp.path().join("absent.toml"))).status.code(), Some(4));

    let bad = tmp.path().join("bad.toml");
    let config = write_config(tmp.path(), false);
    let text =
        std::fs::read_to_string(&config).unwrap().replace("conversions = [0.3, 0.5]", "conversions = [0.5, 0.3]");
    std::fs::write(&bad, text).unwrap();
    assert_eq!(hyperbranch(&["run"], Some(&bad)).status.code(), Some(2));

    // post without a preceding run
    assert_eq!(hyperbranch(&["post"], Some(&config)).status.code(), Some(4));
}

#[test]
fn config_round_trips_through_toml() {
    let tmp = tempfile::tempdir().unwrap();
    let config = write_config(tmp.path(), true);
    let parsed = RunConfig::load(&config).unwrap();
    assert_eq!(RunConfig::parse(&parsed.to_toml()).unwrap().to_toml(), parsed.to_toml());
}
