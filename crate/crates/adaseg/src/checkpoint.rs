//! Self-describing binary checkpoints: a header with the resolved
//! configuration, then named parameter arrays. Loading rebuilds the model
//! from the header and validates every array shape by name.

use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use adaseg_core::model::SegModel;
use adaseg_core::tensor::Tensor;

use crate::config_file::{self, FullConfig};
use crate::{io_err, AppError, Result};

const MAGIC: &[u8; 8] = b"ADASEGCK";
const VERSION: u32 = 1;

pub struct Checkpoint {
    pub model: SegModel<f32>,
    pub config: FullConfig,
    pub num_classes: usize,
    pub step: usize,
}

fn header_text(cfg: &FullConfig, num_classes: usize, use_hrda: bool, step: usize) -> String {
    let mut text = String::new();
    text.push_str(&format!("checkpoint.num_classes = {num_classes}\n"));
    text.push_str(&format!("checkpoint.use_hrda = {use_hrda}\n"));
    text.push_str(&format!("checkpoint.step = {step}\n"));
    text.push_str(&config_file::emit(cfg));
    text
}

pub fn save_checkpoint(
    path: &Path,
    model: &SegModel<f32>,
    cfg: &FullConfig,
    step: usize,
) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(io_err(parent))?;
    }
    let file = std::fs::File::create(path).map_err(io_err(path))?;
    let mut w = BufWriter::new(file);
    let io = io_err(path);
    let header = header_text(cfg, model.num_classes, model.scale_attention.is_some(), step);

    let result: std::io::Result<()> = (|| {
        w.write_all(MAGIC)?;
        w.write_all(&VERSION.to_le_bytes())?;
        w.write_all(&(header.len() as u64).to_le_bytes())?;
        w.write_all(header.as_bytes())?;
        w.write_all(&(model.store.len() as u32).to_le_bytes())?;
        for var in model.store.iter() {
            let name = var.name.as_bytes();
            w.write_all(&(name.len() as u16).to_le_bytes())?;
            w.write_all(name)?;
            let shape = var.value.shape();
            w.write_all(&[shape.len() as u8])?;
            for &d in shape {
                w.write_all(&(d as u32).to_le_bytes())?;
            }
            for &v in var.value.data() {
                w.write_all(&v.to_le_bytes())?;
            }
        }
        w.flush()
    })();
    result.map_err(io)?;
    Ok(())
}

fn read_exact<R: Read>(r: &mut R, n: usize, path: &Path) -> Result<Vec<u8>> {
    let mut buf = vec![0u8; n];
    r.read_exact(&mut buf).map_err(io_err(path))?;
    Ok(buf)
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let file = std::fs::File::open(path).map_err(io_err(path))?;
    let mut r = BufReader::new(file);

    let magic = read_exact(&mut r, 8, path)?;
    if magic != MAGIC {
        return Err(AppError::Checkpoint(format!("{} is not a checkpoint", path.display())));
    }
    let version = u32::from_le_bytes(read_exact(&mut r, 4, path)?.try_into().unwrap());
    if version != VERSION {
        return Err(AppError::Checkpoint(format!("unsupported checkpoint version {version}")));
    }
    let header_len = u64::from_le_bytes(read_exact(&mut r, 8, path)?.try_into().unwrap()) as usize;
    let header = String::from_utf8(read_exact(&mut r, header_len, path)?)
        .map_err(|e| AppError::Checkpoint(format!("bad header: {e}")))?;
    let pairs = config_file::parse_document(&header)?;
    let num_classes = config_file::get(&pairs, "checkpoint.num_classes")
        .and_then(|v| v.parse().ok())
        .ok_or_else(|| AppError::Checkpoint("missing checkpoint.num_classes".into()))?;
    let use_hrda = config_file::get(&pairs, "checkpoint.use_hrda")
        .map(|v| v == "true")
        .unwrap_or(false);
    let step = config_file::get(&pairs, "checkpoint.step")
        .and_then(|v| v.parse().ok())
        .unwrap_or(0);
    let config_pairs: Vec<(String, String)> =
        pairs.into_iter().filter(|(k, _)| !k.starts_with("checkpoint.")).collect();
    let config = config_file::resolve(&config_pairs, &[])?;

    let mut model = SegModel::<f32>::new(config.encoder.clone(), num_classes, use_hrda, 0)?;
    let count = u32::from_le_bytes(read_exact(&mut r, 4, path)?.try_into().unwrap()) as usize;
    if count != model.store.len() {
        return Err(AppError::Checkpoint(format!(
            "checkpoint holds {count} arrays, model expects {}",
            model.store.len()
        )));
    }
    for _ in 0..count {
        let name_len = u16::from_le_bytes(read_exact(&mut r, 2, path)?.try_into().unwrap()) as usize;
        let name = String::from_utf8(read_exact(&mut r, name_len, path)?)
            .map_err(|e| AppError::Checkpoint(format!("bad array name: {e}")))?;
        let ndim = read_exact(&mut r, 1, path)?[0] as usize;
        let mut shape = Vec::with_capacity(ndim);
        for _ in 0..ndim {
            shape.push(u32::from_le_bytes(read_exact(&mut r, 4, path)?.try_into().unwrap()) as usize);
        }
        let numel: usize = shape.iter().product();
        let raw = read_exact(&mut r, numel * 4, path)?;
        let data: Vec<f32> =
            raw.chunks_exact(4).map(|b| f32::from_le_bytes(b.try_into().unwrap())).collect();

        let var = model
            .store
            .iter_mut()
            .find(|v| v.name == name)
            .ok_or_else(|| AppError::Checkpoint(format!("unexpected array `{name}`")))?;
        if var.value.shape() != shape.as_slice() {
            return Err(AppError::Checkpoint(format!(
                "array `{name}` has shape {shape:?}, model expects {:?}",
                var.value.shape()
            )));
        }
        var.value = Tensor::from_vec(&shape, data);
    }
    Ok(Checkpoint { model, config, num_classes, step })
}

#[cfg(test)]
mod tests {
    use super::*;
    use adaseg_core::domain::{DomainTag, ImageSample};
    use adaseg_core::model::EncoderCfg;
    use adaseg_core::rng::Rng;

    fn tmpfile(tag: &str) -> std::path::PathBuf {
        std::env::temp_dir().join(format!("adaseg_ckpt_{tag}_{}.bin", std::process::id()))
    }

    #[test]
    fn checkpoint_roundtrips_weights_and_config() {
        let mut cfg = FullConfig::default();
        cfg.train.seed = 33;
        let model = SegModel::<f32>::new(EncoderCfg::toy(), 5, false, 33).unwrap();
        let path = tmpfile("roundtrip");
        save_checkpoint(&path, &model, &cfg, 17).unwrap();
        let loaded = load_checkpoint(&path).unwrap();
        assert_eq!(loaded.step, 17);
        assert_eq!(loaded.num_classes, 5);
        assert_eq!(loaded.config, cfg);
        for (a, b) in loaded.model.store.iter().zip(model.store.iter()) {
            assert_eq!(a.name, b.name);
            assert_eq!(a.value.data(), b.value.data());
        }
        // Same predictions from the reloaded model.
        let mut rng = Rng::new(4);
        let pixels: Vec<f32> = (0..64 * 64 * 3).map(|_| rng.uniform() as f32).collect();
        let img = ImageSample::new(64, 64, pixels, DomainTag::Target).unwrap();
        assert_eq!(model.predict(&img).unwrap(), loaded.model.predict(&img).unwrap());
        let _ = std::fs::remove_file(&path);
    }

    #[test]
    fn truncated_files_are_rejected() {
        let path = tmpfile("truncated");
        std::fs::write(&path, b"ADASEGCK\x01\x00\x00").unwrap();
        assert!(load_checkpoint(&path).is_err());
        let _ = std::fs::remove_file(&path);
    }

    #[test]
    fn wrong_magic_is_rejected() {
        let path = tmpfile("magic");
        std::fs::write(&path, b"NOTACKPT00000000").unwrap();
        let err = match load_checkpoint(&path) {
            Err(e) => e,
            Ok(_) => panic!("bogus file loaded"),
        };
        assert!(format!("{err}").contains("not a checkpoint"));
        let _ = std::fs::remove_file(&path);
    }
}
