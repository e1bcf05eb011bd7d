use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::split::{Role, SplitAssignment};
use super::synth::{render_generated, VariationRanges};
use super::taxonomy::{ClassTaxonomy, NUM_CLASSES};
use crate::error::{Error, Result};
use crate::imageops::ImageTensor;

/// Parameters that regenerate a procedural sample bit-identically.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenParams {
    pub seed: u64,
    pub width: usize,
    pub height: usize,
    pub variation: VariationRanges,
}

#[derive(Debug, Clone, PartialEq)]
pub enum SampleSource {
    File(PathBuf),
    Generated(GenParams),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub source: SampleSource,
    pub class_id: usize,
    pub width: usize,
    pub height: usize,
}

impl Sample {
    /// Decodes or renders the sample at its native size.
    pub fn load(&self) -> Result<ImageTensor> {
        match &self.source {
            SampleSource::File(path) => ImageTensor::load_png(path),
            SampleSource::Generated(gen) => Ok(render_generated(self.class_id, gen)?.image),
        }
    }
}

/// One line of a manifest or split file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestRecord {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gen: Option<GenParams>,
    pub class_id: usize,
    pub class_name: String,
    pub role: Option<Role>,
    pub fold: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Manifest {
    taxonomy: ClassTaxonomy,
    samples: Vec<Sample>,
    per_class_counts: BTreeMap<usize, usize>,
}

impl Manifest {
    pub fn new(taxonomy: ClassTaxonomy, samples: Vec<Sample>) -> Result<Self> {
        let mut per_class_counts = BTreeMap::new();
        for (i, s) in samples.iter().enumerate() {
            if s.class_id >= taxonomy.len() {
                return Err(Error::Taxonomy(format!("sample {i} has class id {} outside the taxonomy", s.class_id)));
            }
            if s.width == 0 || s.height == 0 {
                return Err(Error::InvalidArgument(format!("sample {i} has zero size")));
            }
            *per_class_counts.entry(s.class_id).or_insert(0) += 1;
        }
        if let Some(missing) = (0..taxonomy.len()).find(|c| !per_class_counts.contains_key(c)) {
            return Err(Error::InsufficientData {
                class: taxonomy.short_name(missing).to_string(),
                have: 0,
                need: 1,
            });
        }
        Ok(Self {
            taxonomy,
            samples,
            per_class_counts,
        })
    }

    pub fn taxonomy(&self) -> &ClassTaxonomy {
        &self.taxonomy
    }

    pub fn samples(&self) -> &[Sample] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn per_class_counts(&self) -> &BTreeMap<usize, usize> {
        &self.per_class_counts
    }

    pub fn count(&self, class_id: usize) -> usize {
        self.per_class_counts.get(&class_id).copied().unwrap_or(0)
    }

    /// Sample indices of one class in manifest order.
    pub fn indices_of(&self, class_id: usize) -> Vec<usize> {
        self.samples
            .iter()
            .enumerate()
            .filter(|(_, s)| s.class_id == class_id)
            .map(|(i, _)| i)
            .collect()
    }

    pub fn records(&self, split: Option<&SplitAssignment>) -> Vec<ManifestRecord> {
        self.samples
            .iter()
            .enumerate()
            .map(|(i, s)| {
                let (path, gen) = match &s.source {
                    SampleSource::File(p) => (Some(p.clone()), None),
                    SampleSource::Generated(g) => (None, Some(g.clone())),
                };
                let role = split.map(|a| a.role(i));
                let fold = split.and_then(|a| (a.role(i) != Role::Test).then_some(a.fold));
                ManifestRecord {
                    path,
                    gen,
                    class_id: s.class_id,
                    class_name: self.taxonomy.short_name(s.class_id).to_string(),
                    role,
                    fold,
                }
            })
            .collect()
    }

    /// JSON Lines, one record per sample, LF terminated.
    pub fn to_jsonl(&self, split: Option<&SplitAssignment>) -> Result<String> {
        let mut out = String::new();
        for rec in self.records(split) {
            out.push_str(&serde_json::to_string(&rec)?);
            out.push('\n');
        }
        Ok(out)
    }

    /// Parses a manifest or split file. Returns the split too when every
    /// record carries a role.
    pub fn from_jsonl(text: &str, taxonomy: ClassTaxonomy) -> Result<(Self, Option<SplitAssignment>)> {
        let mut samples = Vec::new();
        let mut roles = Vec::new();
        let mut fold = None;
        for (lineno, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
            let rec: ManifestRecord = serde_json::from_str(line)
                .map_err(|e| Error::Other(format!("manifest line {}: {e}", lineno + 1)))?;
            let (source, width, height) = match (rec.path, rec.gen) {
                (Some(p), None) => {
                    let (w, h) = image::image_dimensions(&p).map_err(|source| Error::Image {
                        path: p.clone(),
                        source,
                    })?;
                    (SampleSource::File(p), w as usize, h as usize)
                }
                (None, Some(g)) => {
                    let (w, h) = (g.width, g.height);
                    (SampleSource::Generated(g), w, h)
                }
                _ => {
                    return Err(Error::Other(format!(
                        "manifest line {}: exactly one of \"path\" or \"gen\" is required",
                        lineno + 1
                    )))
                }
            };
            roles.push(rec.role);
            if fold.is_none() {
                fold = rec.fold;
            }
            samples.push(Sample {
                source,
                class_id: rec.class_id,
                width,
                height,
            });
        }
        let manifest = Manifest::new(taxonomy, samples)?;
        let split = if !roles.is_empty() && roles.iter().all(Option::is_some) {
            Some(SplitAssignment::from_roles(roles.into_iter().flatten().collect(), fold.unwrap_or(0)))
        } else {
            None
        };
        Ok((manifest, split))
    }

    pub fn write_jsonl(&self, path: &Path, split: Option<&SplitAssignment>) -> Result<()> {
        fs::write(path, self.to_jsonl(split)?).map_err(|e| Error::io(path, e))
    }

    pub fn read_jsonl(path: &Path) -> Result<(Self, Option<SplitAssignment>)> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_jsonl(&text, ClassTaxonomy::aiweeds())
    }
}

/// Files that were found during ingestion but could not be decoded.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SkipReport {
    pub skipped: Vec<SkippedFile>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkippedFile {
    pub path: PathBuf,
    pub reason: String,
}

/// Enumerates `root/<class dir>/*`, one directory per class. Directory
/// names are matched against [`ClassInfo::dir_name`](super::ClassInfo::dir_name)
/// or the literal short name.
pub fn build_manifest(root: &Path) -> Result<(Manifest, SkipReport)> {
    let taxonomy = ClassTaxonomy::aiweeds();
    let mut samples = Vec::new();
    let mut report = SkipReport::default();
    for class in taxonomy.classes() {
        let candidates = [root.join(class.dir_name()), root.join(&class.short)];
        let dir = candidates
            .iter()
            .find(|d| d.is_dir())
            .ok_or_else(|| Error::Taxonomy(format!("missing class directory {:?}", class.dir_name())))?;
        let mut files: Vec<PathBuf> = fs::read_dir(dir)
            .map_err(|e| Error::io(dir, e))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.is_file())
            .collect();
        files.sort();
        for path in files {
            match image::ImageReader::open(&path)
                .and_then(|r| r.with_guessed_format())
                .map_err(|e| e.to_string())
                .and_then(|r| r.decode().map_err(|e| e.to_string()))
            {
                Ok(img) => samples.push(Sample {
                    source: SampleSource::File(path),
                    class_id: class.id,
                    width: img.width() as usize,
                    height: img.height() as usize,
                }),
                Err(reason) => report.skipped.push(SkippedFile { path, reason }),
            }
        }
    }
    debug_assert!(taxonomy.len() == NUM_CLASSES);
    Ok((Manifest::new(taxonomy, samples)?, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{generate_synthetic_corpus, CorpusSpec};

    #[test]
    fn missing_class_rejected() {
        let samples = vec![Sample {
            source: SampleSource::File("a.png".into()),
            class_id: 0,
            width: 4,
            height: 4,
        }];
        let err = Manifest::new(ClassTaxonomy::aiweeds(), samples).unwrap_err();
        assert!(err.to_string().contains("BS."), "{err}");
    }

    #[test]
    fn jsonl_round_trip_generated() {
        let m = generate_synthetic_corpus(&CorpusSpec::uniform(2, 40, 32), 9).unwrap();
        let text = m.to_jsonl(None).unwrap();
        assert_eq!(text.lines().count(), 32);
        assert!(text.ends_with('\n') && !text.contains('\r'));
        let (back, split) = Manifest::from_jsonl(&text, ClassTaxonomy::aiweeds()).unwrap();
        assert_eq!(back, m);
        assert!(split.is_none());
        let first: serde_json::Value = serde_json::from_str(text.lines().next().unwrap()).unwrap();
        assert_eq!(first["class_name"], "AS.");
        assert!(first["role"].is_null() && first["fold"].is_null());
        assert!(first.get("path").is_none());
    }
}
