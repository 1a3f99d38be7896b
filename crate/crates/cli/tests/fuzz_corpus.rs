//! Replays the fuzz seed corpus through the fuzz-target invariants on stable.

use std::fs;
use std::path::{Path, PathBuf};

use race_dde::io::{model_to_json, parse_model};
use race_dde::model::{CoefficientSignal, HistoryFunction, HistoryKind};
use race_dde_cli::args::{parse_list, parse_point, parse_range, parse_window};
use race_dde_cli::chart;

fn seeds(target: &str) -> Vec<(PathBuf, String)> {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fuzz/corpus").join(target);
    let mut out: Vec<_> = fs::read_dir(&dir)
        .unwrap()
        .map(|e| {
            let p = e.unwrap().path();
            let text = fs::read_to_string(&p).unwrap();
            (p, text)
        })
        .collect();
    out.sort();
    assert!(!out.is_empty(), "{}", dir.display());
    out
}

#[test]
fn model_seeds_round_trip() {
    let mut accepted = 0;
    for (path, text) in seeds("parse_model") {
        if let Ok(model) = parse_model(&text) {
            let json = model_to_json(&model);
            let again = parse_model(&json).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
            assert_eq!(model_to_json(&again), json);
            accepted += 1;
        }
    }
    assert!(accepted >= 5);
}

#[test]
fn coefficient_seeds_parse() {
    let (mut signals, mut histories) = (0, 0);
    for (_, text) in seeds("parse_coefficients") {
        if let Ok(s) = serde_json::from_str::<CoefficientSignal>(&text) {
            s.eval(0.5).unwrap();
            signals += 1;
        }
        if let Ok(kind) = serde_json::from_str::<HistoryKind>(&text) {
            if let Ok(h) = HistoryFunction::new(1.0, kind) {
                assert!(h.eval(-0.5).iter().all(|v| v.is_finite()));
                histories += 1;
            }
        }
    }
    assert_eq!((signals, histories), (4, 3));
}

#[test]
fn cli_argument_seeds_parse() {
    for (path, text) in seeds("parse_cli_args") {
        let parsed = parse_list(&text).is_ok() || parse_point(&text).is_ok();
        assert!(parsed, "{}", path.display());
        if let Ok(r) = parse_range(&text) {
            assert_eq!(r.points().len(), r.count);
        }
        if let Ok([lo, hi]) = parse_window(&text) {
            assert!(lo < hi);
        }
    }
}

#[test]
fn chart_seeds_render() {
    for (path, text) in seeds("parse_chart_csv") {
        let name = path.file_stem().unwrap().to_str().unwrap();
        let svg = match name {
            "trajectory" => chart::trajectory_chart(&text),
            "ladder" => chart::ladder_chart(&text),
            "hopf" => chart::hopf_chart(&text),
            "series" => chart::series_chart(&text),
            "coefficients" => chart::coefficient_chart(&text),
            "sweep" => chart::sweep_chart(&text),
            other => panic!("unexpected seed {other}"),
        };
        assert!(svg.unwrap().starts_with("<svg"), "{name}");
    }
}
