use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Motion edit types; anything unrecognized lands in `Other`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Category {
    Pose,
    Locomotion,
    ObjectState,
    Orientation,
    SubjectObject,
    InterSubject,
    Other,
}

impl Category {
    pub const ALL: [Category; 7] = [
        Category::Pose,
        Category::Locomotion,
        Category::ObjectState,
        Category::Orientation,
        Category::SubjectObject,
        Category::InterSubject,
        Category::Other,
    ];

    pub fn slug(self) -> &'static str {
        match self {
            Category::Pose => "pose",
            Category::Locomotion => "locomotion",
            Category::ObjectState => "object-state",
            Category::Orientation => "orientation",
            Category::SubjectObject => "subject-object",
            Category::InterSubject => "inter-subject",
            Category::Other => "other",
        }
    }

    /// Lenient parse: case, spacing and punctuation are ignored, and both
    /// the short slug and the long label ("Pose / Posture") are accepted.
    pub fn parse(label: &str) -> Option<Category> {
        let key: String = label
            .chars()
            .filter(|c| c.is_ascii_alphanumeric())
            .map(|c| c.to_ascii_lowercase())
            .collect();
        Some(match key.as_str() {
            "pose" | "posture" | "poseposture" => Category::Pose,
            "locomotion" | "distance" | "locomotiondistance" => Category::Locomotion,
            "objectstate" | "formation" | "objectstateformation" => Category::ObjectState,
            "orientation" | "viewpoint" | "orientationviewpoint" => Category::Orientation,
            "subjectobject" | "subjectobjectinteraction" => Category::SubjectObject,
            "intersubject" | "intersubjectinteraction" => Category::InterSubject,
            "other" => Category::Other,
            _ => return None,
        })
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.slug())
    }
}

/// One manifest line as written on disk.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawEntry {
    id: String,
    #[serde(default)]
    category: String,
    #[serde(default)]
    instruction: String,
    #[serde(alias = "input")]
    input_path: PathBuf,
    #[serde(alias = "gt")]
    gt_path: PathBuf,
    #[serde(default)]
    outputs: BTreeMap<String, PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Entry {
    pub id: String,
    pub category: Category,
    /// Original label when it did not match a known category.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub unknown_category: Option<String>,
    pub instruction: String,
    pub input_path: PathBuf,
    pub gt_path: PathBuf,
    pub outputs: BTreeMap<String, PathBuf>,
}

impl Entry {
    pub fn category_warning(&self) -> bool {
        self.unknown_category.is_some()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Manifest {
    pub entries: Vec<Entry>,
    /// SHA-256 of the manifest bytes.
    pub sha256: String,
}

impl Manifest {
    /// Union of model names across entries, sorted.
    pub fn models(&self) -> Vec<String> {
        let set: BTreeSet<&String> = self.entries.iter().flat_map(|e| e.outputs.keys()).collect();
        set.into_iter().cloned().collect()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Load a line-delimited JSON manifest. Relative paths resolve against the
/// manifest's directory; every referenced file must exist.
pub fn load_manifest(path: impl AsRef<Path>) -> Result<Manifest> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let text = String::from_utf8(bytes).map_err(|e| Error::ParseError {
        line: 0,
        message: format!("manifest is not UTF-8: {e}"),
    })?;
    let base = path.parent().unwrap_or_else(|| Path::new("."));
    parse_manifest(&text, base)
}

pub fn parse_manifest(text: &str, base_dir: &Path) -> Result<Manifest> {
    let mut entries = Vec::new();
    let mut seen = BTreeSet::new();
    let resolve = |p: PathBuf| if p.is_absolute() { p } else { base_dir.join(p) };

    for (idx, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let raw: RawEntry = serde_json::from_str(line).map_err(|e| Error::ParseError {
            line: idx + 1,
            message: e.to_string(),
        })?;
        if !seen.insert(raw.id.clone()) {
            return Err(Error::DuplicateId(raw.id));
        }
        let (category, unknown_category) = match Category::parse(&raw.category) {
            Some(c) => (c, None),
            None => {
                log::warn!(
                    "entry {:?}: unknown category {:?}, using \"other\"",
                    raw.id,
                    raw.category
                );
                (Category::Other, Some(raw.category))
            }
        };
        entries.push(Entry {
            id: raw.id,
            category,
            unknown_category,
            instruction: raw.instruction,
            input_path: resolve(raw.input_path),
            gt_path: resolve(raw.gt_path),
            outputs: raw.outputs.into_iter().map(|(k, v)| (k, resolve(v))).collect(),
        });
    }

    let missing: Vec<PathBuf> = entries
        .iter()
        .flat_map(|e| [&e.input_path, &e.gt_path].into_iter().chain(e.outputs.values()))
        .filter(|p| !p.is_file())
        .cloned()
        .collect();
    if !missing.is_empty() {
        return Err(Error::MissingReferencedFile(missing));
    }

    Ok(Manifest {
        entries,
        sha256: hex::encode(Sha256::digest(text.as_bytes())),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn touch(dir: &Path, names: &[&str]) {
        for n in names {
            std::fs::write(dir.join(n), b"x").unwrap();
        }
    }

    #[test]
    fn two_valid_lines() {
        let dir = tempfile::tempdir().unwrap();
        touch(dir.path(), &["a.png", "b.png", "c.png"]);
        let text = concat!(
            r#"{"id":"e1","category":"pose","instruction":"raise hand","input_path":"a.png","gt_path":"b.png","outputs":{"m":"c.png"}}"#,
            "\n\n",
            r#"{"id":"e2","category":"Orientation / Viewpoint","input":"a.png","gt":"b.png"}"#,
            "\n"
        );
        let m = parse_manifest(text, dir.path()).unwrap();
        assert_eq!(m.len(), 2);
        assert_eq!(m.entries[0].input_path, dir.path().join("a.png"));
        assert_eq!(m.entries[1].category, Category::Orientation);
        assert_eq!(m.models(), vec!["m".to_string()]);
    }

    #[test]
    fn duplicate_ids_rejected() {
        let dir = tempfile::tempdir().unwrap();
        touch(dir.path(), &["a.png"]);
        let line = r#"{"id":"e1","category":"pose","input_path":"a.png","gt_path":"a.png"}"#;
        let err = parse_manifest(&format!("{line}\n{line}\n"), dir.path()).unwrap_err();
        assert!(matches!(err, Error::DuplicateId(id) if id == "e1"));
    }

    #[test]
    fn unknown_category_falls_back_with_flag() {
        let dir = tempfile::tempdir().unwrap();
        touch(dir.path(), &["a.png"]);
        let m = parse_manifest(
            r#"{"id":"e1","category":"dance","input_path":"a.png","gt_path":"a.png"}"#,
            dir.path(),
        )
        .unwrap();
        assert_eq!(m.entries[0].category, Category::Other);
        assert!(m.entries[0].category_warning());
    }

    #[test]
    fn parse_errors_carry_line_numbers() {
        let dir = tempfile::tempdir().unwrap();
        touch(dir.path(), &["a.png"]);
        let text = "{\"id\":\"e1\",\"input_path\":\"a.png\",\"gt_path\":\"a.png\"}\n{broken\n";
        assert!(matches!(
            parse_manifest(text, dir.path()),
            Err(Error::ParseError { line: 2, .. })
        ));
    }

    #[test]
    fn missing_files_are_listed_together() {
        let dir = tempfile::tempdir().unwrap();
        touch(dir.path(), &["a.png"]);
        let text = concat!(
            r#"{"id":"e1","input_path":"a.png","gt_path":"nope1.png"}"#,
            "\n",
            r#"{"id":"e2","input_path":"a.png","gt_path":"a.png","outputs":{"m":"nope2.png"}}"#
        );
        match parse_manifest(text, dir.path()) {
            Err(Error::MissingReferencedFile(list)) => assert_eq!(list.len(), 2),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn category_slugs_round_trip() {
        for c in Category::ALL {
            assert_eq!(Category::parse(c.slug()), Some(c));
        }
        assert_eq!(
            Category::parse("Subject–Object Interaction"),
            Some(Category::SubjectObject)
        );
    }
}
