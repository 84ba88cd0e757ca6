use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::formats::write_atomic;

/// Tag marking the variant of a sample used when it falls in a training set.
pub const ROLE_TRAIN: &str = "role:train";
/// Tag marking the variant of a sample used when it falls in a test set.
pub const ROLE_TEST: &str = "role:test";
const SAMPLE_PREFIX: &str = "sample:";

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Entry {
    /// As written in the manifest, relative to the manifest's directory
    /// unless absolute.
    pub path: PathBuf,
    pub label: String,
    pub tags: Vec<String>,
}

impl Entry {
    pub fn has_tag(&self, tag: &str) -> bool {
        self.tags.iter().any(|t| t == tag)
    }

    /// Identifier shared by the variants of one physical sample.
    pub fn sample_id(&self) -> Option<&str> {
        self.tags.iter().find_map(|t| t.strip_prefix(SAMPLE_PREFIX))
    }
}

/// Labelled images plus any number of named train/test partitions.
///
/// An entry belongs to the training side of split `s` when tagged
/// `s:train`, and to its test side when tagged `s:test`.
#[derive(Clone, Debug, PartialEq)]
pub struct DatasetManifest {
    pub name: String,
    pub root: PathBuf,
    pub classes: Vec<String>,
    pub entries: Vec<Entry>,
}

/// Indices into `entries` for one split.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Partition {
    pub name: String,
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

impl DatasetManifest {
    pub fn new(name: impl Into<String>, root: impl Into<PathBuf>, entries: Vec<Entry>) -> Result<Self> {
        let mut seen = HashMap::new();
        for e in &entries {
            if e.label.is_empty() || e.label.contains(['\t', '\n']) {
                return Err(Error::Parse(format!("invalid label {:?} for {}", e.label, e.path.display())));
            }
            if let Some(prev) = seen.insert(e.path.clone(), e.label.clone()) {
                return Err(Error::Parse(format!(
                    "{} listed twice (labels `{prev}` and `{}`)",
                    e.path.display(),
                    e.label
                )));
            }
        }
        let classes: BTreeSet<String> = entries.iter().map(|e| e.label.clone()).collect();
        Ok(DatasetManifest { name: name.into(), root: root.into(), classes: classes.into_iter().collect(), entries })
    }

    pub fn parse(text: &str, name: &str, root: &Path) -> Result<Self> {
        let mut entries = Vec::new();
        for (no, line) in text.lines().enumerate() {
            let line = line.trim_end_matches('\r');
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = line.split('\t').collect();
            if !(2..=3).contains(&fields.len()) || fields[0].is_empty() || fields[1].is_empty() {
                return Err(Error::Parse(format!(
                    "line {}: expected `path<TAB>label[<TAB>tags]`, got {line:?}",
                    no + 1
                )));
            }
            let tags = fields
                .get(2)
                .map(|t| t.split(',').map(str::trim).filter(|t| !t.is_empty()).map(str::to_owned).collect())
                .unwrap_or_default();
            entries.push(Entry { path: PathBuf::from(fields[0]), label: fields[1].to_owned(), tags });
        }
        DatasetManifest::new(name, root, entries)
    }

    /// Reads and validates a manifest: every file must exist and every
    /// class must have training and test images in every split.
    pub fn load(path: &Path) -> Result<Self> {
        let m = DatasetManifest::read(path)?;
        m.validate()?;
        Ok(m)
    }

    /// Parses a manifest file without checking that the images exist.
    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| {
            if e.kind() == std::io::ErrorKind::NotFound {
                Error::MissingFile(path.to_path_buf())
            } else {
                Error::io(path, e)
            }
        })?;
        let name = path.file_stem().map_or_else(|| "dataset".into(), |s| s.to_string_lossy().into_owned());
        let root = path.parent().map(Path::to_path_buf).unwrap_or_default();
        DatasetManifest::parse(&text, &name, &root)
    }

    pub fn validate(&self) -> Result<()> {
        for e in &self.entries {
            let p = self.resolve(e);
            if !p.is_file() {
                return Err(Error::MissingFile(p));
            }
        }
        for split in self.split_names() {
            let part = self.partition(&split)?;
            for class in &self.classes {
                for (side, idx) in [("train", &part.train), ("test", &part.test)] {
                    if !idx.iter().any(|&i| &self.entries[i].label == class) {
                        return Err(Error::EmptyClass(format!("{class} (split {split}, {side})")));
                    }
                }
            }
        }
        Ok(())
    }

    pub fn resolve(&self, e: &Entry) -> PathBuf {
        if e.path.is_absolute() {
            e.path.clone()
        } else {
            self.root.join(&e.path)
        }
    }

    /// Split names in natural order (`split2` before `split10`).
    pub fn split_names(&self) -> Vec<String> {
        let mut names: Vec<String> = Vec::new();
        for e in &self.entries {
            for t in &e.tags {
                if let Some(name) = t.strip_suffix(":train").or_else(|| t.strip_suffix(":test")) {
                    if name != "role" && !names.iter().any(|n| n == name) {
                        names.push(name.to_owned());
                    }
                }
            }
        }
        names.sort_by_cached_key(|n| natural_key(n));
        names
    }

    pub fn partition(&self, split: &str) -> Result<Partition> {
        let (tr, te) = (format!("{split}:train"), format!("{split}:test"));
        let mut part = Partition { name: split.to_owned(), train: Vec::new(), test: Vec::new() };
        for (i, e) in self.entries.iter().enumerate() {
            let (a, b) = (e.has_tag(&tr), e.has_tag(&te));
            if a && b {
                return Err(Error::Parse(format!("{} is both train and test in {split}", e.path.display())));
            }
            if a {
                part.train.push(i);
            } else if b {
                part.test.push(i);
            }
        }
        if part.train.is_empty() && part.test.is_empty() {
            return Err(Error::Config(format!("no split named `{split}`")));
        }
        Ok(part)
    }

    pub fn partitions(&self) -> Result<Vec<Partition>> {
        self.split_names().iter().map(|s| self.partition(s)).collect()
    }

    pub fn to_text(&self) -> String {
        let mut out = format!("# {}\n", self.name);
        for e in &self.entries {
            let _ = writeln!(out, "{}\t{}\t{}", e.path.display(), e.label, e.tags.join(","));
        }
        out
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_atomic(path, self.to_text().as_bytes())
    }
}

/// Adds `n_configs` seeded random train/test partitions named `split0`,
/// `split1`, ... Existing split tags are dropped.
///
/// Entries sharing a `sample:` tag are one sample; each class contributes
/// `n_train_per_class` samples to training and the rest to testing. Within
/// a sample, `role:train` entries serve training and `role:test` entries
/// serve testing; untagged entries serve either side.
fn natural_key(name: &str) -> (String, u64, String) {
    let stem = name.trim_end_matches(|c: char| c.is_ascii_digit());
    let digits = &name[stem.len()..];
    (stem.to_owned(), digits.parse().unwrap_or(0), digits.to_owned())
}

pub fn make_splits(
    manifest: &DatasetManifest,
    n_train_per_class: usize,
    n_configs: usize,
    seed: u64,
) -> Result<DatasetManifest> {
    if n_configs == 0 || n_train_per_class == 0 {
        return Err(Error::Config("need at least one split and one training sample per class".into()));
    }
    // class -> sample key -> entry indices, all in deterministic order
    let mut groups: BTreeMap<&str, BTreeMap<String, Vec<usize>>> = BTreeMap::new();
    for (i, e) in manifest.entries.iter().enumerate() {
        let key = e.sample_id().map_or_else(|| format!("entry:{i:09}"), str::to_owned);
        groups.entry(&e.label).or_default().entry(key).or_default().push(i);
    }
    for (class, samples) in &groups {
        if samples.len() <= n_train_per_class {
            return Err(Error::InsufficientImages(format!(
                "class {class} has {} samples, needs more than {n_train_per_class}",
                samples.len()
            )));
        }
    }

    let mut entries: Vec<Entry> = manifest
        .entries
        .iter()
        .map(|e| {
            let mut e = e.clone();
            e.tags.retain(|t| !is_split_tag(t));
            e
        })
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for s in 0..n_configs {
        let name = format!("split{s}");
        for samples in groups.values() {
            let mut keys: Vec<&String> = samples.keys().collect();
            keys.shuffle(&mut rng);
            for (rank, key) in keys.iter().enumerate() {
                let train = rank < n_train_per_class;
                let (want, skip) = if train { (ROLE_TRAIN, ROLE_TEST) } else { (ROLE_TEST, ROLE_TRAIN) };
                let members = &samples[*key];
                let chosen: Vec<usize> = members.iter().copied().filter(|&i| entries[i].has_tag(want)).collect();
                let chosen = if chosen.is_empty() {
                    members.iter().copied().filter(|&i| !entries[i].has_tag(skip)).collect()
                } else {
                    chosen
                };
                if chosen.is_empty() {
                    return Err(Error::InsufficientImages(format!(
                        "sample {key} has no entry usable for {}",
                        if train { "training" } else { "testing" }
                    )));
                }
                let tag = format!("{name}:{}", if train { "train" } else { "test" });
                for i in chosen {
                    entries[i].tags.push(tag.clone());
                }
            }
        }
    }
    DatasetManifest::new(manifest.name.clone(), manifest.root.clone(), entries)
}

fn is_split_tag(t: &str) -> bool {
    !t.starts_with("role:") && (t.ends_with(":train") || t.ends_with(":test"))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn touch(dir: &Path, name: &str) {
        fs::write(dir.join(name), b"P5\n1 1\n255\n\x00").unwrap();
    }

    #[test]
    fn minimal_manifest() {
        let dir = tempfile::tempdir().unwrap();
        for n in ["a1.pgm", "a2.pgm", "b1.pgm", "b2.pgm"] {
            touch(dir.path(), n);
        }
        let text =
            "# two classes\na1.pgm\tbark\ts:train\na2.pgm\tbark\ts:test\nb1.pgm\twool\ts:train\nb2.pgm\twool\ts:test\n";
        let path = dir.path().join("m.txt");
        fs::write(&path, text).unwrap();
        let m = DatasetManifest::load(&path).unwrap();
        assert_eq!(m.classes, vec!["bark", "wool"]);
        assert_eq!(m.name, "m");
        assert_eq!(m.split_names(), vec!["s"]);
        let p = m.partition("s").unwrap();
        assert_eq!((p.train, p.test), (vec![0, 2], vec![1, 3]));
        let again = DatasetManifest::parse(&m.to_text(), "m", dir.path()).unwrap();
        assert_eq!(again.entries, m.entries);
    }

    #[test]
    fn split_names_sort_naturally() {
        let entries = ["split10", "split2", "b", "a", "split0"]
            .iter()
            .enumerate()
            .map(|(i, s)| Entry {
                path: PathBuf::from(format!("{i}.pgm")),
                label: "x".into(),
                tags: vec![format!("{s}:train"), ROLE_TEST.into()],
            })
            .collect();
        let m = DatasetManifest::new("n", "", entries).unwrap();
        assert_eq!(m.split_names(), vec!["a", "b", "split0", "split2", "split10"]);
    }

    #[test]
    fn missing_file_is_named() {
        let dir = tempfile::tempdir().unwrap();
        touch(dir.path(), "a.pgm");
        let path = dir.path().join("m.txt");
        fs::write(&path, "a.pgm\tx\nghost.pgm\ty\n").unwrap();
        match DatasetManifest::load(&path) {
            Err(Error::MissingFile(p)) => assert!(p.ends_with("ghost.pgm")),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn duplicate_path_is_rejected() {
        let err = DatasetManifest::parse("a.pgm\tx\na.pgm\ty\n", "m", Path::new(".")).unwrap_err();
        assert!(matches!(err, Error::Parse(_)));
        assert!(matches!(DatasetManifest::parse("only-a-path\n", "m", Path::new(".")), Err(Error::Parse(_))));
    }

    #[test]
    fn class_without_test_images() {
        let dir = tempfile::tempdir().unwrap();
        for n in ["a1.pgm", "a2.pgm", "b1.pgm"] {
            touch(dir.path(), n);
        }
        let path = dir.path().join("m.txt");
        fs::write(&path, "a1.pgm\ta\ts:train\na2.pgm\ta\ts:test\nb1.pgm\tb\ts:train\n").unwrap();
        assert!(matches!(DatasetManifest::load(&path), Err(Error::EmptyClass(_))));
    }

    fn flat(per_class: usize) -> DatasetManifest {
        let entries = (0..2)
            .flat_map(|c| {
                (0..per_class).map(move |i| Entry {
                    path: PathBuf::from(format!("c{c}_{i}.pgm")),
                    label: format!("c{c}"),
                    tags: vec![],
                })
            })
            .collect();
        DatasetManifest::new("flat", ".", entries).unwrap()
    }

    #[test]
    fn splits_have_requested_sizes() {
        let m = make_splits(&flat(40), 20, 5, 3).unwrap();
        assert_eq!(m.split_names(), (0..5).map(|s| format!("split{s}")).collect::<Vec<_>>());
        for p in m.partitions().unwrap() {
            for class in &m.classes {
                let count = |idx: &[usize]| idx.iter().filter(|&&i| &m.entries[i].label == class).count();
                assert_eq!(count(&p.train), 20);
                assert_eq!(count(&p.test), 20);
            }
        }
        assert_eq!(m, make_splits(&flat(40), 20, 5, 3).unwrap());
        assert_ne!(m, make_splits(&flat(40), 20, 5, 4).unwrap());
        assert!(matches!(make_splits(&flat(20), 20, 1, 0), Err(Error::InsufficientImages(_))));
    }

    #[test]
    fn variants_follow_their_role() {
        let entries = (0..6)
            .flat_map(|i| {
                let label = if i < 3 { "a" } else { "b" };
                ["train", "test"].map(|role| Entry {
                    path: PathBuf::from(format!("{i}_{role}.pgm")),
                    label: label.into(),
                    tags: vec![format!("sample:{i}"), format!("role:{role}")],
                })
            })
            .collect();
        let m = make_splits(&DatasetManifest::new("v", ".", entries).unwrap(), 1, 3, 9).unwrap();
        for p in m.partitions().unwrap() {
            assert_eq!(p.train.len(), 2);
            assert_eq!(p.test.len(), 4);
            assert!(p.train.iter().all(|&i| m.entries[i].has_tag(ROLE_TRAIN)));
            assert!(p.test.iter().all(|&i| m.entries[i].has_tag(ROLE_TEST)));
            let train_samples: BTreeSet<_> = p.train.iter().map(|&i| m.entries[i].sample_id()).collect();
            assert!(p.test.iter().all(|&i| !train_samples.contains(&m.entries[i].sample_id())));
        }
    }
}
