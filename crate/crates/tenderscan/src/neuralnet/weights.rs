//! Binary weight files.
//!
//! Layout: magic `TNDR`, version byte 0x01, then one record per tensor
//! (u16 LE name length, UTF-8 name, u8 rank, u32 LE dims, raw f32 LE data),
//! then a CRC32 of everything between the version byte and the checksum.
//! The first record, named `meta`, pins architecture, input size and width
//! preset so a file is loadable without outside context.

use super::model::{build_model, Arch, Model, WidthPreset};
use super::tensor::Tensor;
use std::collections::HashMap;
use std::io::Write;
use std::path::Path;
use thiserror::Error;

const MAGIC: &[u8; 4] = b"TNDR";
const VERSION: u8 = 0x01;

#[derive(Debug, Error)]
pub enum WeightsError {
    #[error("corrupt weight file: {0}")]
    CorruptFile(String),
    #[error("unsupported weight file version {0}")]
    VersionMismatch(u8),
    #[error("weight file is for {file_arch}/{file_size}, model is {model_arch}/{model_size}")]
    ModelMismatch {
        file_arch: String,
        file_size: usize,
        model_arch: String,
        model_size: usize,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

fn encode_record(buf: &mut Vec<u8>, name: &str, tensor: &Tensor) {
    buf.extend_from_slice(&(name.len() as u16).to_le_bytes());
    buf.extend_from_slice(name.as_bytes());
    buf.push(tensor.shape.len() as u8);
    for &d in &tensor.shape {
        buf.extend_from_slice(&(d as u32).to_le_bytes());
    }
    for &v in &tensor.data {
        buf.extend_from_slice(&(v as f32).to_le_bytes());
    }
}

pub fn save_weights(model: &mut Model, path: &Path) -> Result<(), WeightsError> {
    let mut payload = Vec::new();
    let meta = Tensor::from_vec(
        &[3],
        vec![
            model.arch.id() as f64,
            model.input_size as f64,
            model.preset.id() as f64,
        ],
    )
    .expect("meta tensor");
    encode_record(&mut payload, "meta", &meta);
    for (name, tensor) in model.state_tensors() {
        encode_record(&mut payload, &name, tensor);
    }
    let crc = crc32fast::hash(&payload);

    let tmp = path.with_extension("tndr.tmp");
    {
        let mut f = std::fs::File::create(&tmp)?;
        f.write_all(MAGIC)?;
        f.write_all(&[VERSION])?;
        f.write_all(&payload)?;
        f.write_all(&crc.to_le_bytes())?;
        f.sync_all()?;
    }
    std::fs::rename(&tmp, path)?;
    Ok(())
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], WeightsError> {
        if self.pos + n > self.buf.len() {
            return Err(WeightsError::CorruptFile("truncated record".into()));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }
}

fn parse_records(payload: &[u8]) -> Result<Vec<(String, Tensor)>, WeightsError> {
    let mut r = Reader { buf: payload, pos: 0 };
    let mut out = Vec::new();
    while r.pos < payload.len() {
        let name_len = u16::from_le_bytes(r.take(2)?.try_into().unwrap()) as usize;
        let name = std::str::from_utf8(r.take(name_len)?)
            .map_err(|_| WeightsError::CorruptFile("non-UTF-8 tensor name".into()))?
            .to_string();
        let rank = r.take(1)?[0] as usize;
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            shape.push(u32::from_le_bytes(r.take(4)?.try_into().unwrap()) as usize);
        }
        let numel: usize = shape.iter().product();
        let raw = r.take(numel * 4)?;
        let data = raw
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes(b.try_into().unwrap()) as f64)
            .collect();
        out.push((name, Tensor { shape, data }));
    }
    Ok(out)
}

fn read_verified(path: &Path) -> Result<Vec<(String, Tensor)>, WeightsError> {
    let bytes = std::fs::read(path)?;
    if bytes.len() < 9 {
        return Err(WeightsError::CorruptFile("file too short".into()));
    }
    if &bytes[0..4] != MAGIC {
        return Err(WeightsError::CorruptFile("bad magic".into()));
    }
    if bytes[4] != VERSION {
        return Err(WeightsError::VersionMismatch(bytes[4]));
    }
    let payload = &bytes[5..bytes.len() - 4];
    let stored = u32::from_le_bytes(bytes[bytes.len() - 4..].try_into().unwrap());
    if crc32fast::hash(payload) != stored {
        return Err(WeightsError::CorruptFile("checksum mismatch".into()));
    }
    parse_records(payload)
}

fn meta_of(records: &[(String, Tensor)]) -> Result<(Arch, usize, WidthPreset), WeightsError> {
    let (name, meta) = records
        .first()
        .ok_or_else(|| WeightsError::CorruptFile("empty file".into()))?;
    if name != "meta" || meta.data.len() != 3 {
        return Err(WeightsError::CorruptFile("missing meta record".into()));
    }
    let arch = Arch::from_id(meta.data[0] as u8)
        .ok_or_else(|| WeightsError::CorruptFile("unknown architecture id".into()))?;
    let preset = WidthPreset::from_id(meta.data[2] as u8)
        .ok_or_else(|| WeightsError::CorruptFile("unknown width preset id".into()))?;
    Ok((arch, meta.data[1] as usize, preset))
}

/// Load a weight file into an already-built model of the same architecture.
pub fn load_weights_into(model: &mut Model, path: &Path) -> Result<(), WeightsError> {
    let records = read_verified(path)?;
    let (arch, size, _) = meta_of(&records)?;
    if arch != model.arch || size != model.input_size {
        return Err(WeightsError::ModelMismatch {
            file_arch: arch.name().into(),
            file_size: size,
            model_arch: model.arch.name().into(),
            model_size: model.input_size,
        });
    }
    let map: HashMap<&str, &Tensor> =
        records[1..].iter().map(|(n, t)| (n.as_str(), t)).collect();
    for (name, tensor) in model.state_tensors() {
        let src = map.get(name.as_str()).ok_or_else(|| {
            WeightsError::CorruptFile(format!("tensor '{name}' missing from file"))
        })?;
        if src.shape != tensor.shape {
            return Err(WeightsError::CorruptFile(format!(
                "tensor '{name}' shape {:?} != expected {:?}",
                src.shape, tensor.shape
            )));
        }
        tensor.data.copy_from_slice(&src.data);
    }
    model.trained = true;
    Ok(())
}

/// Rebuild the model a weight file describes and load it.
pub fn load_model(path: &Path) -> Result<Model, WeightsError> {
    let records = read_verified(path)?;
    let (arch, size, preset) = meta_of(&records)?;
    let mut model = build_model(arch, size, preset, 0)
        .map_err(|e| WeightsError::CorruptFile(e.to_string()))?;
    load_weights_into(&mut model, path)?;
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;
    use super::super::layer::Phase;

    fn tmpdir() -> std::path::PathBuf {
        let d = std::env::temp_dir().join(format!("tndr-test-{}", std::process::id()));
        std::fs::create_dir_all(&d).unwrap();
        d
    }

    #[test]
    fn roundtrip_is_stable_after_first_truncation() {
        let mut m = build_model(Arch::Xception, 64, WidthPreset::Tiny, 9).unwrap();
        let path = tmpdir().join("rt.tndr");
        save_weights(&mut m, &path).unwrap();

        let mut m2 = load_model(&path).unwrap();
        assert!(m2.trained);
        let path2 = tmpdir().join("rt2.tndr");
        save_weights(&mut m2, &path2).unwrap();
        let mut m3 = load_model(&path2).unwrap();

        let x = Tensor::zeros(&[1, 1, 64, 64]);
        let y2 = m2.forward(&x, Phase::Infer).unwrap();
        let y3 = m3.forward(&x, Phase::Infer).unwrap();
        assert_eq!(y2.data, y3.data, "f32 truncation must be idempotent");

        // loading the same file twice gives bitwise-identical forwards
        let mut m4 = load_model(&path).unwrap();
        let y4 = m4.forward(&x, Phase::Infer).unwrap();
        assert_eq!(y2.data, y4.data);
    }

    #[test]
    fn truncated_file_is_corrupt() {
        let mut m = build_model(Arch::Resnet, 64, WidthPreset::Tiny, 9).unwrap();
        let path = tmpdir().join("trunc.tndr");
        save_weights(&mut m, &path).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        std::fs::write(&path, &bytes[..bytes.len() / 2]).unwrap();
        assert!(matches!(load_model(&path), Err(WeightsError::CorruptFile(_))));
    }

    #[test]
    fn wrong_magic_and_wrong_version() {
        let path = tmpdir().join("magic.tndr");
        std::fs::write(&path, b"NOPE\x01rest-of-file-------").unwrap();
        assert!(matches!(load_model(&path), Err(WeightsError::CorruptFile(_))));

        let mut m = build_model(Arch::Resnet, 64, WidthPreset::Tiny, 9).unwrap();
        let path = tmpdir().join("ver.tndr");
        save_weights(&mut m, &path).unwrap();
        let mut bytes = std::fs::read(&path).unwrap();
        bytes[4] = 0x02;
        std::fs::write(&path, &bytes).unwrap();
        assert!(matches!(load_model(&path), Err(WeightsError::VersionMismatch(2))));
    }

    #[test]
    fn arch_mismatch_rejected() {
        let mut m = build_model(Arch::Resnet, 64, WidthPreset::Tiny, 9).unwrap();
        let path = tmpdir().join("arch.tndr");
        save_weights(&mut m, &path).unwrap();
        let mut other = build_model(Arch::Xception, 64, WidthPreset::Tiny, 9).unwrap();
        assert!(matches!(
            load_weights_into(&mut other, &path),
            Err(WeightsError::ModelMismatch { .. })
        ));
    }
}
