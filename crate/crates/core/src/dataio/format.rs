//! JSON manifest + little-endian flat binary. The layout is specified in
//! `FORMAT.md` at the repository root.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use xxhash_rust::xxh3::xxh3_64;

use super::{Dataset, VideoRecord};
use crate::diffcore::Matrix;
use crate::error::{Error, Result};
use crate::summarize::SegmentSet;

pub const MAGIC: &[u8; 4] = b"VSGD";
pub const FORMAT_VERSION: u32 = 1;
const HEADER_LEN: usize = 8;
const ALIGN: usize = 8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Dtype {
    U8,
    U32,
    U64,
    F32,
    F64,
}

impl Dtype {
    pub fn width(self) -> usize {
        match self {
            Dtype::U8 => 1,
            Dtype::U32 | Dtype::F32 => 4,
            Dtype::U64 | Dtype::F64 => 8,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArrayEntry {
    pub dtype: Dtype,
    pub shape: Vec<usize>,
    /// Byte offset from the start of the binary file.
    pub offset: u64,
    pub nbytes: u64,
    /// xxh3-64 of the array bytes, 16 lowercase hex digits.
    pub checksum: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct VideoEntry {
    pub video_id: String,
    pub n_sampled: usize,
    pub n_frames_original: usize,
    pub n_segments: usize,
    pub n_users: usize,
    pub arrays: BTreeMap<String, ArrayEntry>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub format_version: u32,
    pub dataset_name: String,
    pub feature_dim: usize,
    pub binary_file: String,
    pub videos: Vec<VideoEntry>,
}

const REQUIRED: [&str; 6] = ["features", "gtscore", "picks", "change_points", "n_frame_per_seg", "user_summary"];

fn binary_path(manifest_path: &Path, file: &str) -> PathBuf {
    manifest_path.parent().unwrap_or(Path::new(".")).join(file)
}

struct Writer {
    bytes: Vec<u8>,
}

impl Writer {
    fn push(&mut self, dtype: Dtype, shape: Vec<usize>, payload: Vec<u8>) -> ArrayEntry {
        while self.bytes.len() % ALIGN != 0 {
            self.bytes.push(0);
        }
        let offset = self.bytes.len() as u64;
        let entry = ArrayEntry {
            dtype,
            shape,
            offset,
            nbytes: payload.len() as u64,
            checksum: format!("{:016x}", xxh3_64(&payload)),
        };
        self.bytes.extend_from_slice(&payload);
        entry
    }

    /// Stored as f32 when that loses nothing, otherwise f64.
    fn floats(&mut self, shape: Vec<usize>, values: &[f64]) -> ArrayEntry {
        let exact = values.iter().all(|&v| (v as f32) as f64 == v);
        let payload: Vec<u8> = if exact {
            values.iter().flat_map(|&v| (v as f32).to_le_bytes()).collect()
        } else {
            values.iter().flat_map(|v| v.to_le_bytes()).collect()
        };
        self.push(if exact { Dtype::F32 } else { Dtype::F64 }, shape, payload)
    }

    /// Stored as u32 when every value fits, otherwise u64.
    fn indices(&mut self, shape: Vec<usize>, values: &[usize]) -> ArrayEntry {
        let small = values.iter().all(|&v| u32::try_from(v).is_ok());
        let payload: Vec<u8> = if small {
            values.iter().flat_map(|&v| (v as u32).to_le_bytes()).collect()
        } else {
            values.iter().flat_map(|&v| (v as u64).to_le_bytes()).collect()
        };
        self.push(if small { Dtype::U32 } else { Dtype::U64 }, shape, payload)
    }
}

/// Writes the manifest to `manifest_path` and the binary next to it, named
/// after the manifest stem with a `.bin` extension.
pub fn write_dataset(dataset: &Dataset, manifest_path: &Path) -> Result<()> {
    dataset.validate()?;
    let stem = manifest_path
        .file_stem()
        .and_then(|s| s.to_str())
        .ok_or_else(|| Error::Contract(format!("bad manifest path {}", manifest_path.display())))?;
    let binary_file = format!("{stem}.bin");
    let mut w = Writer { bytes: Vec::new() };
    w.bytes.extend_from_slice(MAGIC);
    w.bytes.extend_from_slice(&FORMAT_VERSION.to_le_bytes());

    let mut videos = Vec::with_capacity(dataset.videos.len());
    for v in &dataset.videos {
        let n = v.n_sampled();
        let n_users = v.user_summaries.len();
        let mut arrays = BTreeMap::new();
        arrays.insert("features".to_string(), w.floats(vec![n, dataset.feature_dim], v.features.as_slice()));
        arrays.insert("gtscore".to_string(), w.floats(vec![n], &v.gtscore));
        arrays.insert("picks".to_string(), w.indices(vec![n], &v.picks));
        let cps: Vec<usize> = v.segments.ranges().iter().flat_map(|&(s, e)| [s, e]).collect();
        arrays.insert("change_points".to_string(), w.indices(vec![v.segments.len(), 2], &cps));
        arrays.insert(
            "n_frame_per_seg".to_string(),
            w.indices(vec![v.segments.len()], &v.n_frame_per_seg()),
        );
        let masks: Vec<u8> = v.user_summaries.iter().flatten().map(|&b| b as u8).collect();
        arrays.insert(
            "user_summary".to_string(),
            w.push(Dtype::U8, vec![n_users, v.n_frames_original], masks),
        );
        if let Some(us) = &v.user_scores {
            arrays.insert("user_scores".to_string(), w.floats(vec![us.rows(), us.cols()], us.as_slice()));
        }
        videos.push(VideoEntry {
            video_id: v.video_id.clone(),
            n_sampled: n,
            n_frames_original: v.n_frames_original,
            n_segments: v.segments.len(),
            n_users,
            arrays,
        });
    }
    let manifest = DatasetManifest {
        format_version: FORMAT_VERSION,
        dataset_name: dataset.name.clone(),
        feature_dim: dataset.feature_dim,
        binary_file: binary_file.clone(),
        videos,
    };
    let bin = binary_path(manifest_path, &binary_file);
    fs::write(&bin, &w.bytes).map_err(|e| Error::io(&bin, e))?;
    fs::write(manifest_path, serde_json::to_string_pretty(&manifest)?).map_err(|e| Error::io(manifest_path, e))?;
    Ok(())
}

fn decode_floats(raw: &[u8], dtype: Dtype) -> Option<Vec<f64>> {
    match dtype {
        Dtype::F32 => Some(
            raw.chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")) as f64)
                .collect(),
        ),
        Dtype::F64 => Some(raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect()),
        _ => None,
    }
}

fn decode_indices(raw: &[u8], dtype: Dtype) -> Option<Vec<usize>> {
    match dtype {
        Dtype::U32 => Some(
            raw.chunks_exact(4)
                .map(|c| u32::from_le_bytes(c.try_into().expect("4 bytes")) as usize)
                .collect(),
        ),
        Dtype::U64 => Some(
            raw.chunks_exact(8)
                .map(|c| u64::from_le_bytes(c.try_into().expect("8 bytes")) as usize)
                .collect(),
        ),
        _ => None,
    }
}

/// Loads and validates a whole dataset. Every array is bounds- and
/// checksum-checked before any record is built, so a corrupt file yields an
/// error and nothing else.
pub fn read_dataset(manifest_path: &Path) -> Result<Dataset> {
    let text = fs::read_to_string(manifest_path).map_err(|e| Error::io(manifest_path, e))?;
    let manifest: DatasetManifest = serde_json::from_str(&text)?;
    if manifest.format_version != FORMAT_VERSION {
        return Err(Error::Format(format!(
            "dataset format version {} (supported: {FORMAT_VERSION})",
            manifest.format_version
        )));
    }
    let bin = binary_path(manifest_path, &manifest.binary_file);
    let bytes = fs::read(&bin).map_err(|e| Error::io(&bin, e))?;
    if bytes.len() < HEADER_LEN || &bytes[..4] != MAGIC {
        return Err(Error::Format(format!("{} does not start with VSGD", bin.display())));
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().expect("4 bytes"));
    if version != FORMAT_VERSION {
        return Err(Error::Format(format!("binary version {version} (supported: {FORMAT_VERSION})")));
    }

    // structural checks over all arrays first
    let mut ranges = Vec::new();
    for v in &manifest.videos {
        for name in REQUIRED {
            if !v.arrays.contains_key(name) {
                return Err(Error::data(&v.video_id, name, "array missing from manifest"));
            }
        }
        for (name, a) in &v.arrays {
            let count: usize = a.shape.iter().product();
            if (count * a.dtype.width()) as u64 != a.nbytes {
                return Err(Error::data(
                    &v.video_id,
                    name,
                    format!("shape {:?} of {:?} does not match {} bytes", a.shape, a.dtype, a.nbytes),
                ));
            }
            if (a.offset as usize) < HEADER_LEN {
                return Err(Error::data(&v.video_id, name, "offset inside the file header"));
            }
            let end = a.offset.checked_add(a.nbytes).filter(|&e| e <= bytes.len() as u64);
            let ok = end.is_some_and(|e| format!("{:016x}", xxh3_64(&bytes[a.offset as usize..e as usize])) == a.checksum);
            if !ok {
                return Err(Error::Checksum {
                    video: v.video_id.clone(),
                    array: name.clone(),
                });
            }
            if a.nbytes > 0 {
                ranges.push((a.offset, a.offset + a.nbytes, v.video_id.as_str(), name.as_str()));
            }
        }
    }
    ranges.sort_unstable();
    for w in ranges.windows(2) {
        if w[1].0 < w[0].1 {
            return Err(Error::data(w[1].2, w[1].3, format!("overlaps array `{}` of `{}`", w[0].3, w[0].2)));
        }
    }

    let mut videos = Vec::with_capacity(manifest.videos.len());
    for v in &manifest.videos {
        videos.push(decode_video(v, &bytes, manifest.feature_dim)?);
    }
    let dataset = Dataset {
        name: manifest.dataset_name,
        feature_dim: manifest.feature_dim,
        videos,
    };
    dataset.validate()?;
    Ok(dataset)
}

fn decode_video(v: &VideoEntry, bytes: &[u8], feature_dim: usize) -> Result<VideoRecord> {
    let id = v.video_id.as_str();
    let raw = |name: &str| -> (&ArrayEntry, &[u8]) {
        let a = &v.arrays[name];
        (a, &bytes[a.offset as usize..(a.offset + a.nbytes) as usize])
    };
    let expect_shape = |name: &str, a: &ArrayEntry, shape: &[usize]| -> Result<()> {
        if a.shape != shape {
            return Err(Error::data(id, name, format!("shape {:?}, expected {:?}", a.shape, shape)));
        }
        Ok(())
    };
    let wrong_dtype = |name: &str, a: &ArrayEntry| Error::data(id, name, format!("unsupported dtype {:?}", a.dtype));
    let floats = |name: &str, shape: &[usize]| -> Result<Vec<f64>> {
        let (a, r) = raw(name);
        expect_shape(name, a, shape)?;
        decode_floats(r, a.dtype).ok_or_else(|| wrong_dtype(name, a))
    };
    let indices = |name: &str, shape: &[usize]| -> Result<Vec<usize>> {
        let (a, r) = raw(name);
        expect_shape(name, a, shape)?;
        decode_indices(r, a.dtype).ok_or_else(|| wrong_dtype(name, a))
    };

    let n = v.n_sampled;
    let features = Matrix::from_vec(n, feature_dim, floats("features", &[n, feature_dim])?)?;
    let gtscore = floats("gtscore", &[n])?;
    let picks = indices("picks", &[n])?;
    let cps = indices("change_points", &[v.n_segments, 2])?;
    let ranges: Vec<(usize, usize)> = cps.chunks_exact(2).map(|c| (c[0], c[1])).collect();
    let segments = SegmentSet::new(ranges, v.n_frames_original).map_err(|e| match e {
        Error::Data { message, .. } => Error::data(id, "change_points", message),
        other => other,
    })?;
    let counts = indices("n_frame_per_seg", &[v.n_segments])?;
    if counts != segments.frame_counts() {
        return Err(Error::data(id, "n_frame_per_seg", "disagrees with change_points"));
    }
    let (a, r) = raw("user_summary");
    expect_shape("user_summary", a, &[v.n_users, v.n_frames_original])?;
    if a.dtype != Dtype::U8 {
        return Err(wrong_dtype("user_summary", a));
    }
    if r.iter().any(|&b| b > 1) {
        return Err(Error::data(id, "user_summary", "mask bytes must be 0 or 1"));
    }
    let user_summaries = if v.n_frames_original == 0 {
        vec![Vec::new(); v.n_users]
    } else {
        r.chunks_exact(v.n_frames_original)
            .map(|c| c.iter().map(|&b| b == 1).collect())
            .collect()
    };
    let user_scores = match v.arrays.get("user_scores") {
        None => None,
        Some(a) => {
            let users = a.shape.first().copied().unwrap_or(0);
            Some(Matrix::from_vec(users, n, floats("user_scores", &[users, n])?)?)
        }
    };
    let record = VideoRecord {
        video_id: v.video_id.clone(),
        features,
        gtscore,
        user_scores,
        segments,
        n_frames_original: v.n_frames_original,
        picks,
        user_summaries,
    };
    record.validate()?;
    Ok(record)
}
