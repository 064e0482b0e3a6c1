//! On-disk recording container: a JSON manifest plus one raw little-endian
//! float32 file per channel.

use std::fs;
use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::signal::Recording;

pub const MANIFEST_FILE: &str = "manifest.json";
pub const DTYPE_F32: &str = "float32";
pub const LITTLE_ENDIAN: &str = "little";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContainerManifest {
    pub channel_ids: Vec<String>,
    pub sample_rate_hz: f64,
    pub num_samples: usize,
    pub dtype: String,
    pub byte_order: String,
}

pub fn channel_file_name(channel: &str) -> String {
    format!("{channel}.bin")
}

/// Samples are stored as float32; values not representable in f32 are rounded.
pub fn write_recording_container(dir: &Path, recording: &Recording) -> Result<()> {
    fs::create_dir_all(dir)?;
    let manifest = ContainerManifest {
        channel_ids: recording.channel_ids().to_vec(),
        sample_rate_hz: recording.sample_rate(),
        num_samples: recording.num_samples(),
        dtype: DTYPE_F32.into(),
        byte_order: LITTLE_ENDIAN.into(),
    };
    fs::write(
        dir.join(MANIFEST_FILE),
        serde_json::to_string_pretty(&manifest)?,
    )?;
    for (c, name) in recording.channel_ids().iter().enumerate() {
        let bytes: Vec<u8> = recording
            .data()
            .column(c)
            .iter()
            .flat_map(|v| (*v as f32).to_le_bytes())
            .collect();
        fs::write(dir.join(channel_file_name(name)), bytes)?;
    }
    Ok(())
}

pub fn load_recording_container(dir: &Path) -> Result<Recording> {
    let manifest_path = dir.join(MANIFEST_FILE);
    let text = fs::read_to_string(&manifest_path)
        .map_err(|e| Error::corrupt(&manifest_path, format!("manifest unreadable: {e}")))?;
    let manifest: ContainerManifest = serde_json::from_str(&text)
        .map_err(|e| Error::corrupt(&manifest_path, format!("bad manifest: {e}")))?;
    if manifest.dtype != DTYPE_F32 {
        return Err(Error::UnsupportedFormat(format!("dtype {}", manifest.dtype)));
    }
    if manifest.byte_order != LITTLE_ENDIAN {
        return Err(Error::UnsupportedFormat(format!(
            "byte order {}",
            manifest.byte_order
        )));
    }

    let n = manifest.num_samples;
    let mut data = Array2::zeros((n, manifest.channel_ids.len()));
    for (c, name) in manifest.channel_ids.iter().enumerate() {
        let path = dir.join(channel_file_name(name));
        let bytes = fs::read(&path).map_err(|e| Error::corrupt(&path, e.to_string()))?;
        if bytes.len() != 4 * n {
            return Err(Error::corrupt(
                &path,
                format!("expected {} float32 values, found {} bytes", n, bytes.len()),
            ));
        }
        for (t, chunk) in bytes.chunks_exact(4).enumerate() {
            let v = f32::from_le_bytes(chunk.try_into().expect("chunk of 4"));
            if !v.is_finite() {
                return Err(Error::corrupt(&path, format!("non-finite sample at {t}")));
            }
            data[[t, c]] = v as f64;
        }
    }
    Recording::new(manifest.channel_ids, data, manifest.sample_rate_hz)
        .map_err(|e| Error::corrupt(dir, e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample(n: usize) -> Recording {
        let data = Array2::from_shape_fn((n, 2), |(t, c)| (t as f32 * 0.25 - c as f32) as f64);
        Recording::new(vec!["C3".into(), "O1".into()], data, 200.0).unwrap()
    }

    #[test]
    fn round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let rec = sample(6000);
        write_recording_container(dir.path(), &rec).unwrap();
        let loaded = load_recording_container(dir.path()).unwrap();
        assert_eq!(loaded.num_samples(), 6000);
        assert_eq!(loaded, rec);
    }

    #[test]
    fn truncated_file_is_corrupt() {
        let dir = tempfile::tempdir().unwrap();
        write_recording_container(dir.path(), &sample(6000)).unwrap();
        let path = dir.path().join(channel_file_name("O1"));
        let bytes = fs::read(&path).unwrap();
        fs::write(&path, &bytes[..bytes.len() - 4]).unwrap();
        assert!(matches!(
            load_recording_container(dir.path()),
            Err(Error::CorruptContainer { .. })
        ));
    }

    #[test]
    fn unknown_dtype() {
        let dir = tempfile::tempdir().unwrap();
        write_recording_container(dir.path(), &sample(10)).unwrap();
        let path = dir.path().join(MANIFEST_FILE);
        let text = fs::read_to_string(&path).unwrap().replace("float32", "int16");
        fs::write(&path, text).unwrap();
        assert!(matches!(
            load_recording_container(dir.path()),
            Err(Error::UnsupportedFormat(_))
        ));
    }

    #[test]
    fn missing_manifest() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(
            load_recording_container(dir.path()),
            Err(Error::CorruptContainer { .. })
        ));
    }
}
