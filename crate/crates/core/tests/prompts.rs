mod common;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use vlnloop_core::model::{Action, HistoryBuffer, HistoryEntry};
use vlnloop_core::prompt::{build_system_prompt, build_user_prompt, PromptConfig, NO_HISTORY_LINE};

fn golden(name: &str, actual: &str) {
    let path = common::fixtures_dir().join("golden").join(name);
    if std::env::var_os("VLNLOOP_BLESS").is_some() {
        std::fs::write(&path, actual).unwrap();
    }
    let expected = std::fs::read_to_string(&path).unwrap();
    assert_eq!(actual, expected, "golden file {name} differs");
}

fn history(n: usize) -> Vec<HistoryEntry> {
    let mut buf = HistoryBuffer::new();
    for i in 0..n {
        let action = [Action::MoveForward, Action::TurnLeft, Action::TurnRight][i % 3];
        buf.append(HistoryEntry::new(i, action, format!("reflection number {i}")))
            .unwrap();
    }
    buf.entries().to_vec()
}

/// Lines of the History Context section.
fn history_lines(system: &str) -> Vec<String> {
    let (_, tail) = system.split_once("## History Context\n").expect("history section");
    tail.lines()
        .filter(|l| !l.is_empty())
        .map(str::to_string)
        .collect()
}

#[test]
fn default_system_prompt_empty_history() {
    golden("system_prompt_empty.txt", &build_system_prompt(&PromptConfig::default(), &[]));
}

#[test]
fn default_system_prompt_with_history() {
    golden("system_prompt_history.txt", &build_system_prompt(&PromptConfig::default(), &history(7)));
}

#[test]
fn default_user_prompt_first_step() {
    let text = build_user_prompt(&PromptConfig::default(), "Walk past the sofa and stop at the door.", 0, None);
    golden("user_prompt_step0.txt", &text);
}

#[test]
fn default_user_prompt_later_step() {
    let text = build_user_prompt(
        &PromptConfig::default(),
        "Walk past the sofa and stop at the door.",
        4,
        Some("The sofa is to my left."),
    );
    golden("user_prompt_step4.txt", &text);
}

#[test]
fn sections_in_order() {
    let text = build_system_prompt(&PromptConfig::default(), &history(2));
    let pos: Vec<usize> = ["## Persona", "## Agent Parameters", "## Human Common Sense", "## History Context"]
        .iter()
        .map(|h| text.find(h).unwrap())
        .collect();
    assert!(pos.windows(2).all(|w| w[0] < w[1]));
    assert!(text.contains("15 degrees"));
    assert!(text.contains("0.25 meters"));
}

#[test]
fn window_shows_most_recent_entries() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for _ in 0..60 {
        let t = rng.gen_range(0..=200);
        let entries = history(t);
        let mut previous: Option<Vec<String>> = None;
        for w in [1usize, 5, 50] {
            let cfg = PromptConfig { window: w, ..PromptConfig::default() };
            let lines = history_lines(&build_system_prompt(&cfg, &entries));
            let k = w.min(t);
            if k == 0 {
                assert_eq!(lines, [NO_HISTORY_LINE]);
                continue;
            }
            assert_eq!(lines.len(), k, "t={t} w={w}");
            for (j, line) in lines.iter().enumerate() {
                let step = t - k + j;
                assert!(line.starts_with(&format!("step {step}: ")), "{line}");
                assert!(line.ends_with(&format!("reflection=reflection number {step}")));
            }
            // a smaller window is a suffix of a larger one
            if let Some(smaller) = &previous {
                assert!(lines.ends_with(smaller));
            }
            previous = Some(lines);
        }
    }
}
