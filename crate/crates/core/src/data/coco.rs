//! COCO-style dataset IO: lossless PNG images plus one annotations JSON
//! per split, so real COCO annotation files are ingestible too.

use super::{DataError, GroundTruthObject, Sample};
use crate::geometry::BoundingBox;
use crate::scalar::Scalar;
use ndarray::Array3;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

#[derive(Debug, Serialize, Deserialize)]
struct CocoImage {
    id: u64,
    file_name: String,
    width: usize,
    height: usize,
}

#[derive(Debug, Serialize, Deserialize)]
struct CocoAnnotation {
    id: u64,
    image_id: u64,
    category_id: i64,
    /// `[x, y, width, height]` in pixels.
    bbox: [f64; 4],
    area: f64,
    #[serde(default)]
    iscrowd: u8,
}

#[derive(Debug, Serialize, Deserialize)]
struct CocoCategory {
    id: i64,
    name: String,
}

#[derive(Debug, Serialize, Deserialize)]
struct CocoFile {
    images: Vec<CocoImage>,
    annotations: Vec<CocoAnnotation>,
    categories: Vec<CocoCategory>,
}

/// Handle to one split directory (`images/` + `annotations.json`).
#[derive(Debug, Clone)]
pub struct DatasetOnDisk {
    pub root: PathBuf,
}

impl DatasetOnDisk {
    pub fn split(root: &Path, name: &str) -> Self {
        Self {
            root: root.join(name),
        }
    }
}

fn io_err(context: impl Into<String>) -> impl FnOnce(std::io::Error) -> DataError {
    let context = context.into();
    move |source| DataError::Io { context, source }
}

/// Write samples as PNGs plus an annotations file under `dir`.
pub fn write_dataset<S: Scalar>(
    samples: &[Sample<S>],
    dir: &Path,
    class_names: &[String],
) -> Result<(), DataError> {
    let images_dir = dir.join("images");
    std::fs::create_dir_all(&images_dir)
        .map_err(io_err(format!("create {}", images_dir.display())))?;

    let mut images = Vec::with_capacity(samples.len());
    let mut annotations = Vec::new();
    let mut ann_id = 1u64;
    for (i, sample) in samples.iter().enumerate() {
        let id = i as u64 + 1;
        let size = sample.size();
        let file_name = format!("images/{}.png", sample.source_id);
        let mut img = image::RgbImage::new(size as u32, size as u32);
        for y in 0..size {
            for x in 0..size {
                let px = |c: usize| {
                    (sample.image[[c, y, x]].as_f64().clamp(0.0, 1.0) * 255.0).round() as u8
                };
                img.put_pixel(x as u32, y as u32, image::Rgb([px(0), px(1), px(2)]));
            }
        }
        img.save(dir.join(&file_name)).map_err(|e| DataError::Image {
            path: dir.join(&file_name).display().to_string(),
            message: e.to_string(),
        })?;
        images.push(CocoImage {
            id,
            file_name,
            width: size,
            height: size,
        });
        for obj in &sample.objects {
            let b = &obj.bbox;
            // widths in f64 from widened corners, so x + w reconstructs the
            // stored corner exactly after narrowing back
            let (x0, y0, x1, y1) = (
                b.x_min.as_f64(),
                b.y_min.as_f64(),
                b.x_max.as_f64(),
                b.y_max.as_f64(),
            );
            annotations.push(CocoAnnotation {
                id: ann_id,
                image_id: id,
                category_id: obj.class_id as i64,
                bbox: [x0, y0, x1 - x0, y1 - y0],
                area: (x1 - x0) * (y1 - y0),
                iscrowd: 0,
            });
            ann_id += 1;
        }
    }
    let categories = class_names
        .iter()
        .enumerate()
        .map(|(id, name)| CocoCategory {
            id: id as i64,
            name: name.clone(),
        })
        .collect();
    let file = CocoFile {
        images,
        annotations,
        categories,
    };
    let path = dir.join("annotations.json");
    let json = serde_json::to_vec(&file).expect("annotation serialization");
    std::fs::write(&path, json).map_err(io_err(format!("write {}", path.display())))?;
    Ok(())
}

/// Read a dataset directory back into memory.
///
/// Category ids need not start at zero or be contiguous; they map onto
/// class indices by sorted id, which is what makes real COCO files
/// loadable. Returns samples in annotation-file order plus class names.
pub fn read_dataset<S: Scalar>(dir: &Path) -> Result<(Vec<Sample<S>>, Vec<String>), DataError> {
    let ann_path = dir.join("annotations.json");
    let text = std::fs::read_to_string(&ann_path)
        .map_err(io_err(format!("read {}", ann_path.display())))?;
    let file: CocoFile = serde_json::from_str(&text).map_err(|e| DataError::Annotation {
        path: ann_path.display().to_string(),
        message: e.to_string(),
    })?;

    let mut cat_ids: Vec<i64> = file.categories.iter().map(|c| c.id).collect();
    cat_ids.sort_unstable();
    let cat_index: BTreeMap<i64, usize> =
        cat_ids.iter().enumerate().map(|(i, &id)| (id, i)).collect();
    let mut class_names = vec![String::new(); cat_ids.len()];
    for c in &file.categories {
        class_names[cat_index[&c.id]] = c.name.clone();
    }

    let mut per_image: BTreeMap<u64, Vec<GroundTruthObject<S>>> = BTreeMap::new();
    for ann in &file.annotations {
        let class_id = *cat_index
            .get(&ann.category_id)
            .ok_or_else(|| DataError::Annotation {
                path: ann_path.display().to_string(),
                message: format!(
                    "annotation {} references unknown category {}",
                    ann.id, ann.category_id
                ),
            })?;
        let [x, y, w, h] = ann.bbox;
        let bbox = BoundingBox::from_xywh(
            S::from_f64(x),
            S::from_f64(y),
            S::from_f64(w),
            S::from_f64(h),
        )
        .map_err(|e| DataError::Annotation {
            path: ann_path.display().to_string(),
            message: format!("annotation {}: {e}", ann.id),
        })?;
        per_image
            .entry(ann.image_id)
            .or_default()
            .push(GroundTruthObject { bbox, class_id });
    }

    let mut samples = Vec::with_capacity(file.images.len());
    for im in &file.images {
        let path = dir.join(&im.file_name);
        let loaded = image::open(&path).map_err(|e| DataError::Image {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        let rgb = loaded.to_rgb8();
        if rgb.width() as usize != im.width || rgb.height() as usize != im.height {
            return Err(DataError::Image {
                path: path.display().to_string(),
                message: format!(
                    "file is {}x{}, annotations say {}x{}",
                    rgb.width(),
                    rgb.height(),
                    im.width,
                    im.height
                ),
            });
        }
        let mut arr = Array3::zeros((3, im.height, im.width));
        for y in 0..im.height {
            for x in 0..im.width {
                let p = rgb.get_pixel(x as u32, y as u32);
                for c in 0..3 {
                    arr[[c, y, x]] = S::from_f64(p.0[c] as f64 / 255.0);
                }
            }
        }
        let stem = Path::new(&im.file_name)
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| im.id.to_string());
        samples.push(Sample {
            image: arr,
            objects: per_image.remove(&im.id).unwrap_or_default(),
            source_id: stem,
        });
    }
    Ok((samples, class_names))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{generate_scene, render, SceneConfig};

    #[test]
    fn round_trip_is_identity() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = SceneConfig::default();
        let samples: Vec<Sample<f32>> = (0..5)
            .map(|i| render(&generate_scene(i, &cfg).unwrap(), 96).unwrap())
            .collect();
        let names = vec!["circle".into(), "square".into(), "triangle".into()];
        write_dataset(&samples, dir.path(), &names).unwrap();
        let (loaded, got_names) = read_dataset::<f32>(dir.path()).unwrap();
        assert_eq!(got_names, names);
        assert_eq!(loaded.len(), samples.len());
        for (a, b) in samples.iter().zip(loaded.iter()) {
            assert_eq!(a.image, b.image, "pixels must round-trip exactly");
            assert_eq!(a.objects, b.objects);
            assert_eq!(a.source_id, b.source_id);
        }
    }

    #[test]
    fn xywh_converts_to_corners() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::create_dir_all(dir.path().join("images")).unwrap();
        image::RgbImage::new(32, 32)
            .save(dir.path().join("images/i.png"))
            .unwrap();
        let json = r#"{
            "images": [{"id": 1, "file_name": "images/i.png", "width": 32, "height": 32}],
            "annotations": [{"id": 1, "image_id": 1, "category_id": 5, "bbox": [10, 10, 20, 20], "area": 400, "iscrowd": 0}],
            "categories": [{"id": 5, "name": "thing"}]
        }"#;
        std::fs::write(dir.path().join("annotations.json"), json).unwrap();
        let (samples, names) = read_dataset::<f64>(dir.path()).unwrap();
        assert_eq!(names, vec!["thing".to_string()]);
        let b = samples[0].objects[0].bbox;
        assert_eq!((b.x_min, b.y_min, b.x_max, b.y_max), (10.0, 10.0, 30.0, 30.0));
        assert_eq!(samples[0].objects[0].class_id, 0);
    }

    #[test]
    fn missing_categories_key_is_a_parse_error() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(
            dir.path().join("annotations.json"),
            r#"{"images": [], "annotations": []}"#,
        )
        .unwrap();
        let err = read_dataset::<f32>(dir.path()).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("categories"), "got: {msg}");
    }
}
