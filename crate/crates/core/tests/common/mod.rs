#![allow(dead_code)]

use std::path::PathBuf;

use vlnloop_core::model::{load_episode_set, Episode};

pub fn fixtures_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures")
}

pub fn bundled_episodes() -> Vec<Episode> {
    load_episode_set(&fixtures_dir().join("episodes.json")).expect("bundled episodes load")
}

pub mod stub;
