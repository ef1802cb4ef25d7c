mod common;

use std::sync::mpsc;
use std::time::Duration;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Deserialize;

use vlnloop_core::model::Action;
use vlnloop_core::policy::{parse_decision, ParseError, RawModelOutput};

#[derive(Deserialize)]
struct Corpus {
    well_formed: Vec<Good>,
    malformed: Vec<Bad>,
}

#[derive(Deserialize)]
struct Good {
    raw: String,
    action: Action,
    reflection: String,
}

#[derive(Deserialize)]
struct Bad {
    raw: String,
    error: String,
    found: Option<String>,
}

fn corpus() -> Corpus {
    let text = std::fs::read_to_string(common::fixtures_dir().join("parser_corpus.json")).unwrap();
    serde_json::from_str(&text).unwrap()
}

#[test]
fn well_formed_outputs_parse() {
    let c = corpus();
    assert!(c.well_formed.len() >= 30);
    for case in &c.well_formed {
        let d = parse_decision(&RawModelOutput::new(case.raw.clone()))
            .unwrap_or_else(|e| panic!("{:?}: {e}", case.raw));
        assert_eq!(d.action, case.action, "{:?}", case.raw);
        assert_eq!(d.reflection, case.reflection, "{:?}", case.raw);
    }
}

#[test]
fn malformed_outputs_fail_with_contracted_error() {
    let c = corpus();
    assert!(c.malformed.len() >= 20);
    for case in &c.malformed {
        let err = parse_decision(&RawModelOutput::new(case.raw.clone()))
            .expect_err(&format!("{:?} should fail", case.raw));
        assert_eq!(err.raw(), case.raw);
        match (case.error.as_str(), err) {
            ("no_json_found", ParseError::NoJsonFound { .. }) => {}
            ("invalid_action", ParseError::InvalidAction { found, .. }) => {
                assert_eq!(found, case.found, "{:?}", case.raw)
            }
            (want, got) => panic!("{:?}: expected {want}, got {got:?}", case.raw),
        }
    }
}

/// Parses on a worker thread and fails if one input takes longer than a second.
fn parse_with_watchdog(input: String) {
    let (tx, rx) = mpsc::channel();
    let shown: String = input.chars().take(80).collect();
    std::thread::spawn(move || {
        let _ = parse_decision(&RawModelOutput::new(input));
        let _ = tx.send(());
    });
    rx.recv_timeout(Duration::from_secs(1))
        .unwrap_or_else(|_| panic!("parser exceeded 1 s on input starting {shown:?}"));
}

#[test]
fn random_bytes_never_hang() {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let alphabet = b"{}[]\":,\\ actionreflection_move_forwardstop\n`";
    for i in 0..300 {
        let len = rng.gen_range(0..4096);
        let bytes: Vec<u8> = if i % 2 == 0 {
            (0..len).map(|_| rng.gen()).collect()
        } else {
            (0..len).map(|_| alphabet[rng.gen_range(0..alphabet.len())]).collect()
        };
        parse_with_watchdog(String::from_utf8_lossy(&bytes).into_owned());
    }
}

#[test]
fn pathological_inputs_stay_fast() {
    parse_with_watchdog("{".repeat(200_000));
    parse_with_watchdog("{\"a\":".repeat(50_000));
    parse_with_watchdog(format!("{}\"", "{ \"".repeat(50_000)));
    parse_with_watchdog("```".repeat(50_000));
}
