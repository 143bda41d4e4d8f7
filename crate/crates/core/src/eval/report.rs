use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::fid::{compute_set_statistics, fid, FeatureExtractor};
use crate::error::{Error, Result};
use crate::imaging::{image_files, load_image, ImageTensor};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub fid: f64,
    pub n_rendered: usize,
    pub n_reference: usize,
    pub extractor_id: String,
}

impl EvalReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn write_json(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_json() + "\n")?;
        Ok(())
    }

    pub fn read_json(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(|e| Error::Format { path: path.to_path_buf(), reason: e.to_string() })
    }

    /// Plain-text table for terminals.
    pub fn table(&self) -> String {
        let rows = [
            ("FID", format!("{:.6}", self.fid)),
            ("rendered images", self.n_rendered.to_string()),
            ("reference images", self.n_reference.to_string()),
            ("extractor", self.extractor_id.clone()),
        ];
        let width = rows.iter().map(|(k, _)| k.len()).max().unwrap_or(0);
        rows.iter().map(|(k, v)| format!("{k:<width$}  {v}\n")).collect()
    }
}

fn load_set(dir: &Path) -> Result<Vec<ImageTensor>> {
    let files = image_files(dir)?;
    if files.is_empty() {
        return Err(Error::Data(format!("no PNG or JPEG images in {}", dir.display())));
    }
    files.iter().map(load_image).collect()
}

/// FID between the images in two directories.
pub fn evaluate_sets(
    rendered_dir: impl AsRef<Path>,
    reference_dir: impl AsRef<Path>,
    extractor: &dyn FeatureExtractor,
) -> Result<EvalReport> {
    let rendered = load_set(rendered_dir.as_ref())?;
    let reference = load_set(reference_dir.as_ref())?;
    let value = fid(&compute_set_statistics(&rendered, extractor)?, &compute_set_statistics(&reference, extractor)?)?;
    Ok(EvalReport {
        fid: value,
        n_rendered: rendered.len(),
        n_reference: reference.len(),
        extractor_id: extractor.id(),
    })
}
