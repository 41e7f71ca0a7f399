//! Replays the checked-in fuzz corpus through the decoders with the same
//! round-trip properties the fuzz targets assert.

use std::fs;
use std::path::{Path, PathBuf};

use ris_chanest::channel_sim::{decode_split, encode_split};
use ris_chanest::models::{decode_checkpoint, encode_checkpoint};
use ris_chanest::training::Metrics;
use ris_chanest_cli::parse_run_config;

fn corpus(target: &str) -> Vec<(PathBuf, Vec<u8>)> {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fuzz/corpus").join(target);
    let mut files: Vec<PathBuf> = fs::read_dir(&dir)
        .unwrap_or_else(|e| panic!("{}: {e}", dir.display()))
        .map(|e| e.unwrap().path())
        .collect();
    files.sort();
    assert!(!files.is_empty(), "empty corpus {}", dir.display());
    files.into_iter().map(|p| (p.clone(), fs::read(&p).unwrap())).collect()
}

#[test]
fn dataset_corpus_round_trips() {
    for (path, bytes) in corpus("decode_dataset") {
        let (header, samples) = decode_split(&bytes).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
        assert_eq!(encode_split(&header, &samples).unwrap(), bytes, "{}", path.display());
        for cut in [0, 7, 16, bytes.len() / 2, bytes.len() - 1] {
            assert!(decode_split(&bytes[..cut]).is_err());
        }
    }
}

#[test]
fn checkpoint_corpus_round_trips() {
    for (path, bytes) in corpus("decode_checkpoint") {
        let (header, model) = decode_checkpoint(&bytes).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
        let again = encode_checkpoint(&model, header.seed, header.geometry.as_ref()).unwrap();
        assert_eq!(again, bytes, "{}", path.display());
        for cut in [0, 7, 16, bytes.len() / 2, bytes.len() - 1] {
            assert!(decode_checkpoint(&bytes[..cut]).is_err());
        }
    }
}

#[test]
fn config_corpus_round_trips() {
    for (path, bytes) in corpus("parse_run_config") {
        let text = String::from_utf8(bytes).unwrap();
        let cfg = parse_run_config(&text).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
        assert_eq!(parse_run_config(&cfg.to_json()).unwrap(), cfg);
    }
}

#[test]
fn metrics_corpus_round_trips() {
    for (path, bytes) in corpus("parse_metrics_csv") {
        let text = String::from_utf8(bytes).unwrap();
        let m = Metrics::from_csv(&text).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
        assert_eq!(m.to_csv(), text, "{}", path.display());
    }
}
