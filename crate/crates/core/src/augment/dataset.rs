use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rand::Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::imaging::{BBox, ImageBuffer};

use super::annotation::{format_annotation_line, voc_xml};
use super::{composite_with_rng, sample_rng, AugmentationPolicy, DroneProvenance, ForegroundAsset};

pub const ANNOTATION_FILE: &str = "annotations.txt";
pub const MANIFEST_FILE: &str = "manifest.txt";
pub const PROVENANCE_FILE: &str = "provenance.csv";

/// Mixed into the seed for the background draw so it uses a stream separate
/// from the compositing draws.
const BACKGROUND_SALT: u64 = 0x9e37_79b9_7f4a_7c15;

#[derive(Debug, Clone, Default)]
pub struct DatasetOptions {
    /// Also write one PASCAL-VOC XML file per image under `Annotations/`.
    pub voc: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SampleRecord {
    pub index: u64,
    /// Relative to the dataset root.
    pub image_path: String,
    pub background: PathBuf,
    pub width: u32,
    pub height: u32,
    pub boxes: Vec<BBox>,
    pub provenance: Vec<DroneProvenance>,
}

#[derive(Debug, Clone)]
pub struct DatasetManifest {
    pub root: PathBuf,
    pub annotation_path: PathBuf,
    pub manifest_path: PathBuf,
    pub provenance_path: PathBuf,
    pub samples: Vec<SampleRecord>,
}

/// Newline-separated paths; blank lines and `#` comments are skipped and
/// relative entries resolve against the manifest's directory.
pub fn read_manifest(path: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let base = path.parent().unwrap_or(Path::new(""));
    let entries: Vec<PathBuf> = text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(|l| {
            let p = PathBuf::from(l);
            if p.is_absolute() {
                p
            } else {
                base.join(p)
            }
        })
        .collect();
    if entries.is_empty() {
        return Err(Error::parse(path, 0, "manifest lists no files"));
    }
    Ok(entries)
}

fn create_dir(path: &Path) -> Result<()> {
    std::fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    std::fs::write(path, contents).map_err(|e| Error::io(path, e))
}

/// Writes `n` composited PNGs under `out_dir/images/` plus the annotation,
/// manifest and provenance files. Samples are generated in parallel; output
/// is byte-identical for identical inputs and seed.
pub fn generate_dataset(
    backgrounds: &[PathBuf],
    assets: &[PathBuf],
    policy: &AugmentationPolicy,
    n: usize,
    out_dir: impl AsRef<Path>,
    options: &DatasetOptions,
) -> Result<DatasetManifest> {
    policy.validate()?;
    if n == 0 {
        return Err(Error::InvalidArgument("dataset size must be at least 1".into()));
    }
    if backgrounds.is_empty() || assets.is_empty() {
        return Err(Error::InvalidArgument("background and asset manifests must be non-empty".into()));
    }
    let background_images = backgrounds
        .iter()
        .map(|p| ImageBuffer::load(p).map(|img| img.to_rgb()))
        .collect::<Result<Vec<_>>>()?;
    let asset_images = assets
        .iter()
        .map(ForegroundAsset::load)
        .collect::<Result<Vec<_>>>()?;

    let root = out_dir.as_ref().to_path_buf();
    create_dir(&root.join("images"))?;
    if options.voc {
        create_dir(&root.join("Annotations"))?;
    }

    let samples = (0..n as u64)
        .into_par_iter()
        .map(|index| -> Result<SampleRecord> {
            let mut pick = sample_rng(policy.seed ^ BACKGROUND_SALT, index);
            let bg_index = pick.random_range(0..background_images.len());
            let background = &background_images[bg_index];
            let mut rng = sample_rng(policy.seed, index);
            let sample = composite_with_rng(background, &asset_images, policy, index, &mut rng)?;

            let name = format!("{:06}.png", index + 1);
            let image_path = format!("images/{name}");
            write_file(&root.join(&image_path), sample.image.encode_png())?;
            if options.voc {
                let xml = voc_xml(&name, sample.image.width(), sample.image.height(), &sample.boxes);
                write_file(&root.join("Annotations").join(format!("{:06}.xml", index + 1)), xml)?;
            }
            Ok(SampleRecord {
                index,
                image_path,
                background: backgrounds[bg_index].clone(),
                width: sample.image.width(),
                height: sample.image.height(),
                boxes: sample.boxes,
                provenance: sample.provenance,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let mut annotations = String::new();
    let mut manifest = String::new();
    let mut provenance = String::from(
        "index,image,background,source_id,rotation,width_fraction,scale,x,y,shadow,monochrome,blur\n",
    );
    for s in &samples {
        annotations.push_str(&format_annotation_line(&s.image_path, &s.boxes));
        annotations.push('\n');
        manifest.push_str(&s.image_path);
        manifest.push('\n');
        for p in &s.provenance {
            writeln!(
                provenance,
                "{},{},{},{},{:.6},{:.6},{:.6},{},{},{},{},{}",
                s.index + 1,
                s.image_path,
                s.background.display(),
                p.source_id,
                p.rotation,
                p.width_fraction,
                p.scale,
                p.x,
                p.y,
                p.shadow.map(|m| m.to_string()).unwrap_or_default(),
                p.monochrome,
                p.blur.map(|b| b.to_string()).unwrap_or_default(),
            )
            .unwrap();
        }
    }
    let annotation_path = root.join(ANNOTATION_FILE);
    let manifest_path = root.join(MANIFEST_FILE);
    let provenance_path = root.join(PROVENANCE_FILE);
    write_file(&annotation_path, annotations)?;
    write_file(&manifest_path, manifest)?;
    write_file(&provenance_path, provenance)?;

    Ok(DatasetManifest {
        root,
        annotation_path,
        manifest_path,
        provenance_path,
        samples,
    })
}
