//! Directory-backed datasets: `<root>/images/*.png|jpg` with single-channel
//! `<root>/labels/*.png` class-id maps (255 = ignore), paired by file stem,
//! ordered by filename. The synthetic world can be persisted to the same
//! layout for inspection.

use std::fs;
use std::path::{Path, PathBuf};

use adaseg_core::data::{DatasetHandle, DatasetRole};
use adaseg_core::domain::{DomainTag, ImageSample, SegMap};

use crate::{io_err, AppError, Result};

fn decode_png_rgb(path: &Path) -> Result<(usize, usize, Vec<u8>, png::ColorType)> {
    let file = fs::File::open(path).map_err(io_err(path))?;
    let decoder = png::Decoder::new(std::io::BufReader::new(file));
    let mut reader = decoder
        .read_info()
        .map_err(|e| AppError::Decode { path: path.into(), message: e.to_string() })?;
    let mut buf = vec![0u8; reader.output_buffer_size()];
    let info = reader
        .next_frame(&mut buf)
        .map_err(|e| AppError::Decode { path: path.into(), message: e.to_string() })?;
    if info.bit_depth != png::BitDepth::Eight {
        return Err(AppError::Decode {
            path: path.into(),
            message: format!("unsupported bit depth {:?}", info.bit_depth),
        });
    }
    buf.truncate(info.buffer_size());
    Ok((info.height as usize, info.width as usize, buf, info.color_type))
}

fn load_image(path: &Path, domain: DomainTag) -> Result<ImageSample> {
    let ext = path.extension().and_then(|e| e.to_str()).unwrap_or("").to_ascii_lowercase();
    let (h, w, rgb) = match ext.as_str() {
        "png" => {
            let (h, w, buf, color) = decode_png_rgb(path)?;
            let rgb = match color {
                png::ColorType::Rgb => buf,
                png::ColorType::Rgba => {
                    buf.chunks_exact(4).flat_map(|p| [p[0], p[1], p[2]]).collect()
                }
                png::ColorType::Grayscale => buf.iter().flat_map(|&g| [g, g, g]).collect(),
                other => {
                    return Err(AppError::Decode {
                        path: path.into(),
                        message: format!("unsupported color type {other:?}"),
                    })
                }
            };
            (h, w, rgb)
        }
        "jpg" | "jpeg" => {
            let file = fs::File::open(path).map_err(io_err(path))?;
            let mut decoder = jpeg_decoder::Decoder::new(std::io::BufReader::new(file));
            let pixels = decoder
                .decode()
                .map_err(|e| AppError::Decode { path: path.into(), message: e.to_string() })?;
            let info = decoder.info().expect("info after decode");
            let (h, w) = (info.height as usize, info.width as usize);
            let rgb = match info.pixel_format {
                jpeg_decoder::PixelFormat::RGB24 => pixels,
                jpeg_decoder::PixelFormat::L8 => pixels.iter().flat_map(|&g| [g, g, g]).collect(),
                other => {
                    return Err(AppError::Decode {
                        path: path.into(),
                        message: format!("unsupported pixel format {other:?}"),
                    })
                }
            };
            (h, w, rgb)
        }
        other => {
            return Err(AppError::Decode {
                path: path.into(),
                message: format!("unsupported image extension `{other}`"),
            })
        }
    };
    let pixels: Vec<f32> = rgb.iter().map(|&b| b as f32 / 255.0).collect();
    ImageSample::new(h, w, pixels, domain).map_err(AppError::from)
}

fn load_label(path: &Path, num_classes: usize) -> Result<SegMap> {
    let (h, w, buf, color) = decode_png_rgb(path)?;
    let labels: Vec<u8> = match color {
        png::ColorType::Grayscale => buf,
        other => {
            return Err(AppError::Decode {
                path: path.into(),
                message: format!("label maps must be single-channel, got {other:?}"),
            })
        }
    };
    SegMap::new(h, w, labels, num_classes).map_err(AppError::from)
}

fn list_sorted(dir: &Path, exts: &[&str]) -> Result<Vec<PathBuf>> {
    let mut files = Vec::new();
    for entry in fs::read_dir(dir).map_err(io_err(dir))? {
        let entry = entry.map_err(io_err(dir))?;
        let path = entry.path();
        let ext = path.extension().and_then(|e| e.to_str()).unwrap_or("").to_ascii_lowercase();
        if path.is_file() && exts.contains(&ext.as_str()) {
            files.push(path);
        }
    }
    files.sort();
    Ok(files)
}

fn stem(path: &Path) -> String {
    path.file_stem().and_then(|s| s.to_str()).unwrap_or("").to_string()
}

/// Load a dataset directory. `labeled` selects whether labels are required
/// (missing label files are then errors naming the stem).
pub fn load_directory_dataset(
    root: &Path,
    role: DatasetRole,
    num_classes: usize,
    labeled: bool,
    domain: DomainTag,
) -> Result<DatasetHandle> {
    let images_dir = root.join("images");
    let labels_dir = root.join("labels");
    let image_files = list_sorted(&images_dir, &["png", "jpg", "jpeg"])?;
    if image_files.is_empty() {
        return Err(AppError::Core(adaseg_core::Error::InvalidDataset(format!(
            "no samples under {}",
            images_dir.display()
        ))));
    }
    let name = root.display().to_string();
    if labeled {
        let mut pairs = Vec::with_capacity(image_files.len());
        for img_path in &image_files {
            let label_path = labels_dir.join(format!("{}.png", stem(img_path)));
            if !label_path.is_file() {
                return Err(AppError::Core(adaseg_core::Error::InvalidDataset(format!(
                    "missing label for stem `{}` (expected {})",
                    stem(img_path),
                    label_path.display()
                ))));
            }
            let image = load_image(img_path, domain)?;
            let label = load_label(&label_path, num_classes)?;
            pairs.push((image, label));
        }
        Ok(DatasetHandle::new_labeled(name, role, pairs, num_classes)?)
    } else {
        let images = image_files
            .iter()
            .map(|p| load_image(p, domain))
            .collect::<Result<Vec<_>>>()?;
        Ok(DatasetHandle::new_unlabeled(name, role, images, num_classes)?)
    }
}

fn write_png(
    path: &Path,
    width: usize,
    height: usize,
    color: png::ColorType,
    data: &[u8],
) -> Result<()> {
    let file = fs::File::create(path).map_err(io_err(path))?;
    let mut enc = png::Encoder::new(std::io::BufWriter::new(file), width as u32, height as u32);
    enc.set_color(color);
    enc.set_depth(png::BitDepth::Eight);
    let mut writer = enc
        .write_header()
        .map_err(|e| AppError::Decode { path: path.into(), message: e.to_string() })?;
    writer
        .write_image_data(data)
        .map_err(|e| AppError::Decode { path: path.into(), message: e.to_string() })?;
    Ok(())
}

/// Persist a dataset to the directory layout (images plus labels when
/// present), for inspection or as input to later runs.
pub fn save_dataset_to_directory(dataset: &DatasetHandle, root: &Path) -> Result<()> {
    let images_dir = root.join("images");
    let labels_dir = root.join("labels");
    fs::create_dir_all(&images_dir).map_err(io_err(&images_dir))?;
    if dataset.labeled {
        fs::create_dir_all(&labels_dir).map_err(io_err(&labels_dir))?;
    }
    let digits = dataset.len().to_string().len().max(4);
    for i in 0..dataset.len() {
        let img = dataset.image(i);
        let rgb: Vec<u8> = img
            .pixels
            .iter()
            .map(|&p| (p.clamp(0.0, 1.0) * 255.0).round() as u8)
            .collect();
        let name = format!("{i:0digits$}");
        write_png(
            &images_dir.join(format!("{name}.png")),
            img.width,
            img.height,
            png::ColorType::Rgb,
            &rgb,
        )?;
        if let Some(seg) = dataset.label(i) {
            write_png(
                &labels_dir.join(format!("{name}.png")),
                seg.width,
                seg.height,
                png::ColorType::Grayscale,
                &seg.labels,
            )?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use adaseg_core::data::{generate_toy_world, ToyWorldSpec};

    fn tmpdir(tag: &str) -> PathBuf {
        let dir = std::env::temp_dir().join(format!("adaseg_io_{tag}_{}", std::process::id()));
        let _ = fs::remove_dir_all(&dir);
        fs::create_dir_all(&dir).unwrap();
        dir
    }

    #[test]
    fn toy_world_roundtrips_through_the_directory_layout() {
        let dir = tmpdir("roundtrip");
        let spec = ToyWorldSpec { n_train: 3, n_val: 2, ..Default::default() };
        let world = generate_toy_world(&spec).unwrap();
        save_dataset_to_directory(&world.target_val, &dir).unwrap();

        let loaded = load_directory_dataset(
            &dir,
            DatasetRole::TargetVal,
            5,
            true,
            DomainTag::Target,
        )
        .unwrap();
        assert_eq!(loaded.len(), world.target_val.len());
        // Labels are exact; pixels survive the 8-bit quantization.
        for i in 0..loaded.len() {
            assert_eq!(loaded.label(i).unwrap().labels, world.target_val.label(i).unwrap().labels);
            let a = &loaded.image(i).pixels;
            let b = &world.target_val.image(i).pixels;
            for (x, y) in a.iter().zip(b.iter()) {
                assert!((x - y).abs() <= 0.5 / 255.0 + 1e-6);
            }
        }
        let _ = fs::remove_dir_all(&dir);
    }

    #[test]
    fn empty_directory_is_an_error() {
        let dir = tmpdir("empty");
        fs::create_dir_all(dir.join("images")).unwrap();
        let err = load_directory_dataset(&dir, DatasetRole::SourceTrain, 5, true, DomainTag::Source)
            .unwrap_err();
        assert!(format!("{err}").contains("no samples"));
        let _ = fs::remove_dir_all(&dir);
    }

    #[test]
    fn missing_label_names_the_stem() {
        let dir = tmpdir("missing");
        let spec = ToyWorldSpec { n_train: 3, n_val: 2, ..Default::default() };
        let world = generate_toy_world(&spec).unwrap();
        save_dataset_to_directory(&world.target_val, &dir).unwrap();
        fs::remove_file(dir.join("labels/0001.png")).unwrap();
        let err = load_directory_dataset(&dir, DatasetRole::TargetVal, 5, true, DomainTag::Target)
            .unwrap_err();
        assert!(format!("{err}").contains("0001"), "{err}");
        let _ = fs::remove_dir_all(&dir);
    }

    #[test]
    fn out_of_range_label_values_are_rejected() {
        let dir = tmpdir("badlabel");
        let spec = ToyWorldSpec { n_train: 1, n_val: 1, ..Default::default() };
        let world = generate_toy_world(&spec).unwrap();
        save_dataset_to_directory(&world.target_val, &dir).unwrap();
        // Reload with a smaller class count than the rendered labels use.
        let err = load_directory_dataset(&dir, DatasetRole::TargetVal, 2, true, DomainTag::Target)
            .unwrap_err();
        assert!(format!("{err}").contains("label value"), "{err}");
        let _ = fs::remove_dir_all(&dir);
    }
}
