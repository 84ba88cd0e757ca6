//! Loader for Outex test-suite directories (`TC10`, `TC12`, ...).
//!
//! Expected layout:
//!
//! ```text
//! <root>/images/<name>              image files
//! <root>/<problem>/train.txt        count line, then `<name> <class id>`
//! <root>/<problem>/test.txt         same format
//! ```
//!
//! Only PGM and PNG are decoded; when a listed image is missing, a file
//! with the same stem and a `.png` or `.pgm` extension is used instead.

use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};

use super::manifest::{DatasetManifest, Entry};

fn parse_list(path: &Path) -> Result<Vec<(String, String)>> {
    let text = fs::read_to_string(path).map_err(|e| {
        if e.kind() == std::io::ErrorKind::NotFound {
            Error::MissingFile(path.to_path_buf())
        } else {
            Error::io(path, e)
        }
    })?;
    let mut lines = text.lines().map(str::trim).filter(|l| !l.is_empty());
    let count: usize = lines
        .next()
        .and_then(|l| l.parse().ok())
        .ok_or_else(|| Error::Parse(format!("{}: first line must be the entry count", path.display())))?;
    let mut out = Vec::with_capacity(count);
    for line in lines {
        let mut f = line.split_whitespace();
        match (f.next(), f.next(), f.next()) {
            (Some(name), Some(class), None) => out.push((name.to_owned(), format!("class{class:0>3}"))),
            _ => return Err(Error::Parse(format!("{}: bad line {line:?}", path.display()))),
        }
    }
    if out.len() != count {
        return Err(Error::Parse(format!("{}: header announces {count} entries, found {}", path.display(), out.len())));
    }
    Ok(out)
}

fn locate(images: &Path, name: &str) -> Result<PathBuf> {
    let direct = images.join(name);
    if direct.is_file() {
        return Ok(direct);
    }
    for ext in ["png", "pgm"] {
        let alt = direct.with_extension(ext);
        if alt.is_file() {
            return Ok(alt);
        }
    }
    Err(Error::MissingFile(direct))
}

/// Reads one Outex problem as a manifest with a single split named after
/// the problem directory.
pub fn load_outex(root: &Path, problem: &str) -> Result<DatasetManifest> {
    let images = root.join("images");
    let dir = root.join(problem);
    let split = format!("outex{problem}");
    let mut entries = Vec::new();
    for side in ["train", "test"] {
        for (name, label) in parse_list(&dir.join(format!("{side}.txt")))? {
            let path = locate(&images, &name)?;
            // TC12 reuses training images across problems but never within
            // one side; a path listed on both sides is a malformed suite
            entries.push(Entry { path, label, tags: vec![format!("{split}:{side}")] });
        }
    }
    let name = root.file_name().map_or_else(|| "outex".into(), |n| n.to_string_lossy().into_owned());
    let m = DatasetManifest::new(name, root, entries)?;
    m.validate()?;
    Ok(m)
}
