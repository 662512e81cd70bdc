//! Reads a written dataset with nothing but the documented layout: the
//! manifest as plain JSON and the binary as raw little-endian bytes.

use std::fs;

use framegraph::dataio::{synth_dataset, write_dataset, SynthConfig};
use serde_json::Value;
use xxhash_rust::xxh3::xxh3_64;

fn width(dtype: &str) -> usize {
    match dtype {
        "u8" => 1,
        "u32" | "f32" => 4,
        "u64" | "f64" => 8,
        other => panic!("undocumented dtype {other}"),
    }
}

#[test]
fn binary_matches_documented_layout() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = SynthConfig {
        feature_dim: 5,
        ..SynthConfig::default()
    };
    let mut data = synth_dataset(3, (20, 30), 6, &cfg).unwrap();
    // one score that f32 cannot hold forces an f64 array
    data.videos[1].gtscore[0] = 0.1;
    let manifest_path = tmp.path().join("set.json");
    write_dataset(&data, &manifest_path).unwrap();

    let manifest: Value = serde_json::from_str(&fs::read_to_string(&manifest_path).unwrap()).unwrap();
    assert_eq!(manifest["format_version"], 1);
    assert_eq!(manifest["dataset_name"], "synthetic");
    assert_eq!(manifest["feature_dim"], 5);
    assert_eq!(manifest["binary_file"], "set.bin");
    let bin = fs::read(tmp.path().join("set.bin")).unwrap();
    assert_eq!(&bin[..4], b"VSGD");
    assert_eq!(u32::from_le_bytes(bin[4..8].try_into().unwrap()), 1);

    let mut spans = Vec::new();
    for (v, rec) in manifest["videos"].as_array().unwrap().iter().zip(&data.videos) {
        assert_eq!(v["video_id"], rec.video_id.as_str());
        assert_eq!(v["n_sampled"], rec.n_sampled());
        assert_eq!(v["n_users"], rec.user_summaries.len());
        let arrays = v["arrays"].as_object().unwrap();
        for (name, a) in arrays {
            let offset = a["offset"].as_u64().unwrap() as usize;
            let nbytes = a["nbytes"].as_u64().unwrap() as usize;
            let count: usize = a["shape"].as_array().unwrap().iter().map(|d| d.as_u64().unwrap() as usize).product();
            assert_eq!(offset % 8, 0, "{name} alignment");
            assert!(offset >= 8);
            assert_eq!(count * width(a["dtype"].as_str().unwrap()), nbytes, "{name}");
            let raw = &bin[offset..offset + nbytes];
            assert_eq!(a["checksum"].as_str().unwrap(), format!("{:016x}", xxh3_64(raw)));
            spans.push((offset, offset + nbytes));
        }

        // features: row-major f32
        let f = &arrays["features"];
        assert_eq!(f["dtype"], "f32");
        let off = f["offset"].as_u64().unwrap() as usize;
        for (i, &x) in rec.features.as_slice().iter().enumerate() {
            let b = &bin[off + 4 * i..off + 4 * i + 4];
            assert_eq!(f32::from_le_bytes(b.try_into().unwrap()) as f64, x);
        }
        // change points: [n_segments, 2] inclusive ranges
        let cp = &arrays["change_points"];
        assert_eq!(cp["dtype"], "u32");
        let off = cp["offset"].as_u64().unwrap() as usize;
        for (s, &(lo, hi)) in rec.segments.ranges().iter().enumerate() {
            let at = |k: usize| u32::from_le_bytes(bin[off + 4 * k..off + 4 * k + 4].try_into().unwrap()) as usize;
            assert_eq!((at(2 * s), at(2 * s + 1)), (lo, hi));
        }
        // user summaries: one byte per original frame, row per user
        let us = &arrays["user_summary"];
        assert_eq!(us["dtype"], "u8");
        let off = us["offset"].as_u64().unwrap() as usize;
        let flat: Vec<u8> = rec.user_summaries.iter().flatten().map(|&b| b as u8).collect();
        assert_eq!(&bin[off..off + flat.len()], &flat[..]);
    }
    assert_eq!(manifest["videos"][1]["arrays"]["gtscore"]["dtype"], "f64");
    // quarter-step annotations are exact in f32
    assert_eq!(manifest["videos"][0]["arrays"]["user_scores"]["dtype"], "f32");

    spans.sort_unstable();
    assert!(spans.windows(2).all(|w| w[0].1 <= w[1].0), "arrays overlap");
}
