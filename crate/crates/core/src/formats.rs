//! Little-endian binary artifacts: descriptor sets (`LODF`), PCA models
//! (`LPCA`), mixtures (`LGMM`) and linear classifiers (`LSVM`, with a
//! `.labels` text sidecar). Every writer goes through a temporary file and
//! a rename, so readers never observe a half-written artifact.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};

use crate::classify::LinearModel;
use crate::encode::{GmmModel, PcaModel};
use crate::error::{Error, Result};

pub const FORMAT_VERSION: u32 = 1;

/// Rows of `f32` descriptors sharing one dimension.
#[derive(Clone, Debug, PartialEq)]
pub struct DescriptorSet {
    pub dim: usize,
    pub data: Vec<f32>,
}

impl DescriptorSet {
    pub fn new(dim: usize, data: Vec<f32>) -> Result<Self> {
        if dim == 0 || !data.len().is_multiple_of(dim) {
            return Err(Error::DimensionMismatch { expected: dim, actual: data.len() });
        }
        Ok(DescriptorSet { dim, data })
    }

    pub fn count(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> impl ExactSizeIterator<Item = &[f32]> + '_ {
        self.data.chunks_exact(self.dim)
    }
}

static TMP_COUNTER: AtomicU64 = AtomicU64::new(0);

/// Writes `bytes` to `path` via a uniquely named sibling temp file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(format!(".tmp{}-{}", std::process::id(), TMP_COUNTER.fetch_add(1, Ordering::Relaxed)));
    let tmp = PathBuf::from(tmp);
    fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| {
        let _ = fs::remove_file(&tmp);
        Error::io(path, e)
    })
}

fn read_file(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| {
        if e.kind() == std::io::ErrorKind::NotFound {
            Error::MissingFile(path.to_path_buf())
        } else {
            Error::io(path, e)
        }
    })
}

struct Writer(Vec<u8>);

impl Writer {
    fn new(magic: &[u8; 4]) -> Self {
        let mut w = Writer(magic.to_vec());
        w.u32(FORMAT_VERSION);
        w
    }

    fn u32(&mut self, v: u32) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }

    fn u64(&mut self, v: u64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }

    fn dim(&mut self, v: usize) {
        self.u32(v as u32);
    }

    fn f64s(&mut self, v: &[f64]) {
        for x in v {
            self.0.extend_from_slice(&x.to_le_bytes());
        }
    }

    fn f32s(&mut self, v: &[f32]) {
        for x in v {
            self.0.extend_from_slice(&x.to_le_bytes());
        }
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
    path: &'a Path,
}

impl<'a> Reader<'a> {
    fn new(bytes: &'a [u8], path: &'a Path, magic: &[u8; 4]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0, path };
        let found = r.take(4)?;
        if found != magic {
            return Err(r.bad(format!(
                "expected magic {:?}, found {:?}",
                String::from_utf8_lossy(magic),
                String::from_utf8_lossy(found)
            )));
        }
        let version = r.u32()?;
        if version != FORMAT_VERSION {
            return Err(r.bad(format!("unsupported version {version}")));
        }
        Ok(r)
    }

    fn bad(&self, reason: impl Into<String>) -> Error {
        Error::BadModelFile { path: self.path.to_path_buf(), reason: reason.into() }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        match end {
            Some(end) => {
                let s = &self.bytes[self.pos..end];
                self.pos = end;
                Ok(s)
            }
            None => Err(self.bad(format!("truncated at byte {}", self.bytes.len()))),
        }
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn dim(&mut self) -> Result<usize> {
        Ok(self.u32()? as usize)
    }

    fn expect_len(&self, elems: usize, width: usize) -> Result<()> {
        let want = elems.checked_mul(width).ok_or_else(|| self.bad("header sizes overflow"))?;
        if self.bytes.len() - self.pos != want {
            return Err(self.bad(format!("payload has {} bytes, header implies {want}", self.bytes.len() - self.pos)));
        }
        Ok(())
    }

    fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        let raw = self.take(n.checked_mul(8).ok_or_else(|| self.bad("header sizes overflow"))?)?;
        Ok(raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect())
    }

    fn f32s(&mut self, n: usize) -> Result<Vec<f32>> {
        let raw = self.take(n.checked_mul(4).ok_or_else(|| self.bad("header sizes overflow"))?)?;
        Ok(raw.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect())
    }
}

pub fn descriptors_to_bytes(set: &DescriptorSet) -> Vec<u8> {
    let mut w = Writer::new(b"LODF");
    w.u64(set.count() as u64);
    w.dim(set.dim);
    w.f32s(&set.data);
    w.0
}

pub fn descriptors_from_bytes(bytes: &[u8], path: &Path) -> Result<DescriptorSet> {
    let mut r = Reader::new(bytes, path, b"LODF")?;
    let count = usize::try_from(r.u64()?).map_err(|_| r.bad("count overflows"))?;
    let dim = r.dim()?;
    if dim == 0 {
        return Err(r.bad("zero dimension"));
    }
    let total = count.checked_mul(dim).ok_or_else(|| r.bad("header sizes overflow"))?;
    r.expect_len(total, 4)?;
    Ok(DescriptorSet { dim, data: r.f32s(total)? })
}

pub fn write_descriptors(path: &Path, set: &DescriptorSet) -> Result<()> {
    write_atomic(path, &descriptors_to_bytes(set))
}

pub fn read_descriptors(path: &Path) -> Result<DescriptorSet> {
    descriptors_from_bytes(&read_file(path)?, path)
}

/// Reads only the `(count, dim)` header of a descriptor file.
pub fn read_descriptor_header(path: &Path) -> Result<(usize, usize)> {
    use std::io::Read;
    let mut head = [0u8; 20];
    let mut f = fs::File::open(path).map_err(|e| {
        if e.kind() == std::io::ErrorKind::NotFound {
            Error::MissingFile(path.to_path_buf())
        } else {
            Error::io(path, e)
        }
    })?;
    f.read_exact(&mut head)
        .map_err(|_| Error::BadModelFile { path: path.to_path_buf(), reason: "truncated header".into() })?;
    let mut r = Reader::new(&head, path, b"LODF")?;
    let count = usize::try_from(r.u64()?).map_err(|_| r.bad("count overflows"))?;
    Ok((count, r.dim()?))
}

pub fn pca_to_bytes(m: &PcaModel) -> Vec<u8> {
    let mut w = Writer::new(b"LPCA");
    w.dim(m.input_dim);
    w.dim(m.output_dim);
    w.u32(u32::from(m.whiten));
    w.f64s(&m.mean);
    w.f64s(&m.basis);
    w.f64s(&m.eigenvalues);
    w.0
}

pub fn pca_from_bytes(bytes: &[u8], path: &Path) -> Result<PcaModel> {
    let mut r = Reader::new(bytes, path, b"LPCA")?;
    let input_dim = r.dim()?;
    let output_dim = r.dim()?;
    let whiten = match r.u32()? {
        0 => false,
        1 => true,
        v => return Err(r.bad(format!("whiten flag {v}"))),
    };
    if output_dim == 0 || output_dim > input_dim {
        return Err(r.bad(format!("{output_dim} components of {input_dim} dimensions")));
    }
    r.expect_len(input_dim + output_dim * input_dim + output_dim, 8)?;
    let m = PcaModel {
        mean: r.f64s(input_dim)?,
        basis: r.f64s(output_dim * input_dim)?,
        eigenvalues: r.f64s(output_dim)?,
        input_dim,
        output_dim,
        whiten,
    };
    if m.mean.iter().chain(&m.basis).chain(&m.eigenvalues).any(|v| !v.is_finite()) {
        return Err(r.bad("non-finite parameters"));
    }
    Ok(m)
}

pub fn write_pca(path: &Path, m: &PcaModel) -> Result<()> {
    write_atomic(path, &pca_to_bytes(m))
}

pub fn read_pca(path: &Path) -> Result<PcaModel> {
    pca_from_bytes(&read_file(path)?, path)
}

pub fn gmm_to_bytes(m: &GmmModel) -> Vec<u8> {
    let mut w = Writer::new(b"LGMM");
    w.dim(m.dim());
    w.dim(m.k());
    w.f64s(&m.priors);
    w.f64s(&m.means);
    w.f64s(&m.sigmas);
    w.0
}

pub fn gmm_from_bytes(bytes: &[u8], path: &Path) -> Result<GmmModel> {
    let mut r = Reader::new(bytes, path, b"LGMM")?;
    let dim = r.dim()?;
    let k = r.dim()?;
    r.expect_len(k + 2 * k * dim, 8)?;
    let priors = r.f64s(k)?;
    let means = r.f64s(k * dim)?;
    let sigmas = r.f64s(k * dim)?;
    GmmModel::new(priors, means, sigmas, dim).map_err(|e| r.bad(e.to_string()))
}

pub fn write_gmm(path: &Path, m: &GmmModel) -> Result<()> {
    write_atomic(path, &gmm_to_bytes(m))
}

pub fn read_gmm(path: &Path) -> Result<GmmModel> {
    gmm_from_bytes(&read_file(path)?, path)
}

pub fn svm_to_bytes(m: &LinearModel) -> Vec<u8> {
    let mut w = Writer::new(b"LSVM");
    w.dim(m.classes.len());
    w.dim(m.features());
    w.f64s(&m.weights);
    w.f64s(&m.biases);
    w.f64s(&[m.c_param]);
    w.0
}

pub fn labels_to_text(classes: &[String]) -> String {
    classes.iter().map(|c| format!("{c}\n")).collect()
}

pub fn svm_from_bytes(bytes: &[u8], labels: &str, path: &Path) -> Result<LinearModel> {
    let mut r = Reader::new(bytes, path, b"LSVM")?;
    let c = r.dim()?;
    let f = r.dim()?;
    r.expect_len(c * f + c + 1, 8)?;
    let weights = r.f64s(c * f)?;
    let biases = r.f64s(c)?;
    let c_param = r.f64s(1)?[0];
    let classes: Vec<String> = labels.lines().map(str::to_owned).collect();
    if classes.len() != c {
        return Err(r.bad(format!("label sidecar lists {} classes, model has {c}", classes.len())));
    }
    LinearModel::new(classes, weights, biases, c_param).map_err(|e| r.bad(e.to_string()))
}

/// Path of the label list stored next to a classifier file.
pub fn labels_path(path: &Path) -> PathBuf {
    let mut p = path.as_os_str().to_owned();
    p.push(".labels");
    PathBuf::from(p)
}

pub fn write_svm(path: &Path, m: &LinearModel) -> Result<()> {
    if m.classes.iter().any(|c| c.contains('\n') || c.contains('\r')) {
        return Err(Error::Config("class labels cannot contain line breaks".into()));
    }
    write_atomic(&labels_path(path), labels_to_text(&m.classes).as_bytes())?;
    write_atomic(path, &svm_to_bytes(m))
}

pub fn read_svm(path: &Path) -> Result<LinearModel> {
    let bytes = read_file(path)?;
    let lp = labels_path(path);
    let labels = String::from_utf8(read_file(&lp)?)
        .map_err(|_| Error::BadModelFile { path: lp.clone(), reason: "labels are not UTF-8".into() })?;
    svm_from_bytes(&bytes, &labels, path)
}
