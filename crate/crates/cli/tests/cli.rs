use std::path::PathBuf;
use std::process::Command;

use serde_json::Value;

fn solve() -> Command {
    Command::new(env!("CARGO_BIN_EXE_solve"))
}

fn tmp(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("ivpcover-cli-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    dir.join(name)
}

#[test]
fn cover_and_stats_json_have_the_expected_shape() {
    let out = tmp("eg1.json");
    let stats = tmp("eg1-stats.json");
    let svg = tmp("eg1.svg");
    let st = solve()
        .args(["--problem", "eg1", "--eps", "0.1", "--samples", "200", "--out"])
        .arg(&out)
        .arg("--stats")
        .arg(&stats)
        .arg("--svg")
        .arg(&svg)
        .status()
        .unwrap();
    assert!(st.success());

    let c: Value = serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(c["version"], 1);
    assert_eq!(c["kind"], "end_cover");
    assert_eq!(c["epsilon"], 0.1);
    assert_eq!(c["horizon"], 1.0);
    let boxes = c["boxes"].as_array().unwrap();
    assert!(!boxes.is_empty());
    for b in boxes {
        let lo = b["lo"].as_array().unwrap();
        let hi = b["hi"].as_array().unwrap();
        assert_eq!(lo.len(), 2);
        for (l, h) in lo.iter().zip(hi) {
            let w = h.as_f64().unwrap() - l.as_f64().unwrap();
            assert!((0.0..0.1).contains(&w));
        }
        assert!(b["src"].as_str().unwrap().starts_with("leaf"));
    }

    let s: Value = serde_json::from_str(&std::fs::read_to_string(&stats).unwrap()).unwrap();
    assert!(s["counters"]["end_enc_calls"].as_u64().unwrap() >= 1);
    assert_eq!(s["containment"]["misses"], 0);
    assert!(s["bounds"]["checks"].as_array().is_some());

    let text = std::fs::read_to_string(&svg).unwrap();
    assert!(text.starts_with("<svg"));
    assert!(text.matches("<rect").count() >= boxes.len());
}

#[test]
fn several_horizons_give_an_array() {
    let out = tmp("times.json");
    let st = solve()
        .args(["--problem", "eg4", "--times", "0.5,1", "--samples", "0", "--out"])
        .arg(&out)
        .status()
        .unwrap();
    assert!(st.success());
    let v: Value = serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    let arr = v.as_array().unwrap();
    assert_eq!(arr.len(), 2);
    assert_eq!(arr[0]["horizon"], 0.5);
    assert_eq!(arr[1]["horizon"], 1.0);
}

#[test]
fn blow_up_exits_with_code_two() {
    let p = tmp("blowup.toml");
    std::fs::write(
        &p,
        "name = \"blowup\"\nvars = [\"x\"]\nfield = [\"x^2\"]\ncenter = [1.0]\nradius = [0.01]\nhorizon = 2.0\neps = 1.0\n",
    )
    .unwrap();
    let st = solve().arg("--problem").arg(&p).args(["--mode", "endenc", "--samples", "0"]).status().unwrap();
    assert_eq!(st.code(), Some(2));
}

#[test]
fn unknown_problem_exits_with_code_one() {
    let st = solve().args(["--problem", "no-such-problem"]).status().unwrap();
    assert_eq!(st.code(), Some(1));
}
