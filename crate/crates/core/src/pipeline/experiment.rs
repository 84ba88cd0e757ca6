use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::classify::{train, LinearModel, SvmOptions, DEFAULT_C};
use crate::encode::{fisher_encode, gmm_fit, pca_fit, DataMatrix, FisherVector, GmmConfig, GmmFit, GmmModel, PcaModel};
use crate::error::{Error, Result};
use crate::formats::{
    read_descriptor_header, read_descriptors, read_gmm, read_pca, read_svm, write_descriptors, write_gmm, write_pca,
    write_svm, DescriptorSet,
};
use crate::image::{decode_image, GrayImage, ImageFormat};
use crate::load::{DenseConfig, DenseExtractor};
use crate::patterns::{lbp_histogram, PatternConfig, UniformTable};

use super::cache::{content_key, default_cache_dir, Cache};
use super::manifest::DatasetManifest;
use super::report::{EvalReport, SplitResult, Timings};

/// Local descriptor fed to the classifier.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DescriptorKind {
    /// Dense LOAD descriptors encoded as Fisher vectors.
    Load,
    /// One global uniform-LBP histogram per image (rotation-sensitive baseline).
    Lbp,
}

impl fmt::Display for DescriptorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DescriptorKind::Load => "load",
            DescriptorKind::Lbp => "lbp",
        })
    }
}

impl FromStr for DescriptorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "load" => Ok(DescriptorKind::Load),
            "lbp" => Ok(DescriptorKind::Lbp),
            other => Err(Error::Config(format!("unknown descriptor `{other}` (expected load or lbp)"))),
        }
    }
}

/// Named parameter presets.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Profile {
    /// K=16 components, 32 PCA dimensions, 10k vocabulary samples.
    Desk,
    /// K=256 components, 100 PCA dimensions, 100k vocabulary samples.
    Paper,
}

impl FromStr for Profile {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "desk" => Ok(Profile::Desk),
            "paper" => Ok(Profile::Paper),
            other => Err(Error::Config(format!("unknown profile `{other}` (expected desk or paper)"))),
        }
    }
}

/// Every parameter of the extract, encode and classify stages.
#[derive(Clone, Debug)]
pub struct ExperimentConfig {
    pub dense: DenseConfig,
    pub pca_dim: usize,
    pub whiten: bool,
    pub gmm: GmmConfig,
    /// Descriptors drawn from the training images to fit PCA and the mixture.
    pub vocab_samples: usize,
    /// Draw an equal share of the vocabulary sample from every class.
    pub stratified: bool,
    pub svm_c: f64,
    pub seed: u64,
    pub cache_dir: PathBuf,
}

impl ExperimentConfig {
    pub fn for_profile(profile: Profile) -> Self {
        let (pca_dim, components, vocab_samples) = match profile {
            Profile::Desk => (32, 16, 10_000),
            Profile::Paper => (100, 256, 100_000),
        };
        ExperimentConfig {
            dense: DenseConfig::default(),
            pca_dim,
            whiten: false,
            gmm: GmmConfig { components, ..GmmConfig::default() },
            vocab_samples,
            stratified: false,
            svm_c: DEFAULT_C,
            seed: 0,
            cache_dir: default_cache_dir(),
        }
    }

    pub fn desk() -> Self {
        Self::for_profile(Profile::Desk)
    }

    pub fn paper() -> Self {
        Self::for_profile(Profile::Paper)
    }

    /// Checks that the stage parameters agree with each other.
    pub fn validate(&self) -> Result<()> {
        self.dense.validate()?;
        let dim = self.dense.load.dim();
        if self.pca_dim == 0 || self.pca_dim > dim {
            return Err(Error::Config(format!(
                "PCA dimension {} must be between 1 and the descriptor dimension {dim}",
                self.pca_dim
            )));
        }
        if self.gmm.components == 0 {
            return Err(Error::Config("mixture needs at least one component".into()));
        }
        if self.vocab_samples <= self.pca_dim || self.vocab_samples < self.gmm.components {
            return Err(Error::Config(format!(
                "vocabulary sample of {} is too small for {} PCA dimensions and {} components",
                self.vocab_samples, self.pca_dim, self.gmm.components
            )));
        }
        if !(self.gmm.tol > 0.0 && self.gmm.variance_floor > 0.0 && self.gmm.max_iter > 0) {
            return Err(Error::Config("EM tolerance, variance floor and iteration cap must be positive".into()));
        }
        if !(self.svm_c > 0.0 && self.svm_c.is_finite()) {
            return Err(Error::Config(format!("C must be positive, got {}", self.svm_c)));
        }
        Ok(())
    }

    /// Fisher vector length `2 * D * K`.
    pub fn fisher_dim(&self) -> usize {
        2 * self.pca_dim * self.gmm.components
    }

    fn vocab_key(&self) -> String {
        format!(
            "vocab-v1;d={};whiten={};k={};iter={};tol={};floor={};kmeans={};n={};strat={};seed={}",
            self.pca_dim,
            self.whiten,
            self.gmm.components,
            self.gmm.max_iter,
            self.gmm.tol,
            self.gmm.variance_floor,
            self.gmm.kmeans_iter,
            self.vocab_samples,
            self.stratified,
            self.seed
        )
    }
}

/// Decodes image bytes in whichever supported format they are.
pub fn decode_any(bytes: &[u8], name: &Path) -> Result<GrayImage> {
    let format = ImageFormat::detect(bytes)
        .ok_or_else(|| Error::UnsupportedFormat(format!("{} is neither binary PGM nor PNG", name.display())))?;
    decode_image(bytes, format)
}

/// Reads and decodes one PGM or PNG file.
pub fn read_image(path: &Path) -> Result<GrayImage> {
    decode_any(&read_image_bytes(path)?, path)
}

fn read_image_bytes(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| {
        if e.kind() == std::io::ErrorKind::NotFound {
            Error::MissingFile(path.to_path_buf())
        } else {
            Error::io(path, e)
        }
    })
}

/// Flattens dense descriptors into one storable set.
pub fn descriptor_set(extractor: &DenseExtractor, img: &GrayImage) -> Result<DescriptorSet> {
    let feats = extractor.extract(img)?;
    let data = feats.descriptors.into_iter().flat_map(|d| d.values).collect();
    DescriptorSet::new(extractor.dim(), data)
}

/// Cached descriptor file of one image.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DescriptorRef {
    pub key: String,
    pub path: PathBuf,
}

/// Dense extraction for the given manifest entries, reusing cached files.
pub fn extract_cached(
    manifest: &DatasetManifest,
    indices: &[usize],
    dense: &DenseConfig,
    cache: &Cache,
) -> Result<Vec<DescriptorRef>> {
    let extractor = DenseExtractor::new(dense.clone(), UniformTable::shared())?;
    let cfg_key = dense.cache_key();
    indices
        .par_iter()
        .map(|&i| {
            let path = manifest.resolve(&manifest.entries[i]);
            let run = || -> Result<DescriptorRef> {
                let bytes = read_image_bytes(&path)?;
                let key = content_key([b"lodf".as_slice(), cfg_key.as_bytes(), &bytes]);
                let out = cache.path("descriptors", &key, "lodf");
                if !out.is_file() {
                    let img = decode_any(&bytes, &path)?;
                    write_descriptors(&out, &descriptor_set(&extractor, &img)?)?;
                }
                Ok(DescriptorRef { key, path: out })
            };
            run().map_err(|e| e.in_stage("extract", path.display().to_string()))
        })
        .collect()
}

/// Draws `n` descriptors uniformly without replacement from the pooled
/// files (or an equal share per label when `stratified`). Uses every
/// descriptor when fewer than `n` exist.
pub fn sample_vocabulary(files: &[(&Path, &str)], n: usize, stratified: bool, seed: u64) -> Result<DataMatrix> {
    let mut counts = Vec::with_capacity(files.len());
    let mut dim = None;
    for (path, _) in files {
        let (count, d) = read_descriptor_header(path)?;
        if *dim.get_or_insert(d) != d {
            return Err(Error::DimensionMismatch { expected: dim.unwrap_or(d), actual: d });
        }
        counts.push(count);
    }
    let dim = dim.ok_or_else(|| Error::InsufficientSamples("no training descriptor files".into()))?;
    let total: usize = counts.iter().sum();
    if total == 0 {
        return Err(Error::InsufficientSamples("training images produced no descriptors".into()));
    }

    // picks[f] = sorted row indices taken from file f
    let mut picks: Vec<Vec<usize>> = vec![Vec::new(); files.len()];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    if total <= n {
        if total < n {
            log::warn!("vocabulary: only {total} descriptors available, {n} requested");
        }
        for (f, &c) in counts.iter().enumerate() {
            picks[f] = (0..c).collect();
        }
    } else {
        let mut groups: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
        for (f, (_, label)) in files.iter().enumerate() {
            groups.entry(if stratified { label } else { "" }).or_default().push(f);
        }
        let n_groups = groups.len();
        for (g, members) in groups.values().enumerate() {
            let pool: usize = members.iter().map(|&f| counts[f]).sum();
            let quota = (n / n_groups + usize::from(g < n % n_groups)).min(pool);
            let mut chosen = rand::seq::index::sample(&mut rng, pool, quota).into_vec();
            chosen.sort_unstable();
            let mut offset = 0;
            let mut it = chosen.into_iter().peekable();
            for &f in members {
                while let Some(&flat) = it.peek() {
                    if flat >= offset + counts[f] {
                        break;
                    }
                    picks[f].push(flat - offset);
                    it.next();
                }
                offset += counts[f];
            }
        }
    }

    let mut data = DataMatrix::with_cols(dim);
    for ((path, _), rows) in files.iter().zip(&picks) {
        if rows.is_empty() {
            continue;
        }
        let set = read_descriptors(path)?;
        for &r in rows {
            let row: Vec<f64> = set.row(r).iter().map(|&v| f64::from(v)).collect();
            data.push_row(&row)?;
        }
    }
    Ok(data)
}

/// PCA basis and mixture fitted on one training set.
#[derive(Clone, Debug)]
pub struct Vocabulary {
    pub pca: PcaModel,
    pub gmm: GmmModel,
    /// Content key of everything the models depend on.
    pub key: String,
}

pub fn fit_vocabulary(train: &[(&DescriptorRef, &str)], cfg: &ExperimentConfig, cache: &Cache) -> Result<Vocabulary> {
    let vocab_cfg = cfg.vocab_key();
    let mut parts: Vec<&[u8]> = vec![vocab_cfg.as_bytes()];
    for (r, label) in train {
        parts.push(r.key.as_bytes());
        parts.push(label.as_bytes());
    }
    let key = content_key(parts);
    let (pca_path, gmm_path) = (cache.path("models", &key, "lpca"), cache.path("models", &key, "lgmm"));
    if pca_path.is_file() && gmm_path.is_file() {
        return Ok(Vocabulary { pca: read_pca(&pca_path)?, gmm: read_gmm(&gmm_path)?, key });
    }
    let files: Vec<(&Path, &str)> = train.iter().map(|(r, l)| (r.path.as_path(), *l)).collect();
    let (pca, fit) = fit_models(&files, cfg)?;
    write_pca(&pca_path, &pca)?;
    write_gmm(&gmm_path, &fit.model)?;
    Ok(Vocabulary { pca, gmm: fit.model, key })
}

/// Samples the vocabulary from descriptor files, fits PCA on it and the
/// mixture on the projected sample.
pub fn fit_models(files: &[(&Path, &str)], cfg: &ExperimentConfig) -> Result<(PcaModel, GmmFit)> {
    let sample = sample_vocabulary(files, cfg.vocab_samples, cfg.stratified, cfg.seed)?;
    let pca = pca_fit(&sample, cfg.pca_dim, cfg.whiten)?;
    let projected = pca.project_all(&sample)?;
    let fit = gmm_fit(&projected, &GmmConfig { seed: cfg.seed, ..cfg.gmm.clone() })?;
    log::info!(
        "vocabulary: {} samples, EM {} after {} steps, mean log-likelihood {:.4}",
        sample.rows(),
        if fit.converged { "converged" } else { "stopped" },
        fit.log_likelihoods.len(),
        fit.log_likelihoods.last().copied().unwrap_or(f64::NAN)
    );
    Ok((pca, fit))
}

/// Projects a descriptor set and encodes it as a Fisher vector.
pub fn encode_set(set: &DescriptorSet, pca: &PcaModel, gmm: &GmmModel) -> Result<FisherVector> {
    let mut projected = DataMatrix::with_cols(pca.output_dim);
    for row in set.rows() {
        projected.push_row(&pca.project_f32(row)?)?;
    }
    fisher_encode(gmm, &projected)
}

/// Fisher vectors for the given descriptor files, reusing cached ones.
pub fn encode_cached(vocab: &Vocabulary, refs: &[&DescriptorRef], cache: &Cache) -> Result<Vec<FisherVector>> {
    refs.par_iter()
        .map(|r| {
            let run = || -> Result<FisherVector> {
                let key = content_key(["fv-v1", vocab.key.as_str(), r.key.as_str()]);
                let path = cache.path("fisher", &key, "lodf");
                if path.is_file() {
                    let set = read_descriptors(&path)?;
                    if set.count() != 1 {
                        return Err(Error::BadModelFile {
                            path,
                            reason: format!("expected one vector, found {}", set.count()),
                        });
                    }
                    return Ok(FisherVector { values: set.data });
                }
                let fv = encode_set(&read_descriptors(&r.path)?, &vocab.pca, &vocab.gmm)?;
                write_descriptors(&path, &DescriptorSet::new(fv.len(), fv.values.clone())?)?;
                Ok(fv)
            };
            run().map_err(|e| e.in_stage("encode", r.path.display().to_string()))
        })
        .collect()
}

fn matrix_of(vectors: &[&[f32]]) -> Result<DataMatrix> {
    let cols = vectors.first().map_or(0, |v| v.len());
    DataMatrix::from_f32_rows(cols, vectors.iter())
}

/// One-vs-all training with the classifier settings of `cfg`.
pub fn train_classifier(x: &DataMatrix, labels: &[String], cfg: &ExperimentConfig) -> Result<LinearModel> {
    train(x, labels, &SvmOptions { c: cfg.svm_c, seed: cfg.seed, ..SvmOptions::default() })
}

/// Predicts every test vector and tallies the confusion matrix over
/// `classes`.
pub fn evaluate_split(
    model: &LinearModel,
    classes: &[String],
    name: &str,
    tests: &[(&[f32], &str)],
) -> Result<SplitResult> {
    let mut pairs = Vec::with_capacity(tests.len());
    for (x, label) in tests {
        let x: Vec<f64> = x.iter().map(|&v| f64::from(v)).collect();
        let predicted = model.predict_label(&x)?;
        let idx = |l: &str| {
            classes.iter().position(|c| c == l).ok_or_else(|| Error::DegenerateLabels(format!("unknown class {l}")))
        };
        pairs.push((idx(label)?, idx(predicted)?));
    }
    Ok(SplitResult::new(name, classes.len(), pairs))
}

/// Root-normalized global uniform-LBP histogram (the baseline feature).
pub fn lbp_feature(img: &GrayImage) -> Result<Vec<f32>> {
    let h = lbp_histogram(img, &PatternConfig::default(), UniformTable::shared())?;
    Ok(h.iter().map(|v| v.sqrt() as f32).collect())
}

/// Runs extraction, encoding, training and testing for every split of
/// `manifest` and aggregates the results.
pub fn run_experiment(manifest: &DatasetManifest, kind: DescriptorKind, cfg: &ExperimentConfig) -> Result<EvalReport> {
    cfg.validate()?;
    let partitions = manifest.partitions()?;
    if partitions.is_empty() {
        return Err(Error::Config(format!("manifest {} defines no splits", manifest.name)));
    }
    let mut needed: Vec<usize> = partitions.iter().flat_map(|p| p.train.iter().chain(&p.test).copied()).collect();
    needed.sort_unstable();
    needed.dedup();
    let label = |i: usize| manifest.entries[i].label.as_str();
    let cache = Cache::new(&cfg.cache_dir);
    let mut timings = Timings::default();
    let mut splits = Vec::with_capacity(partitions.len());

    match kind {
        DescriptorKind::Load => {
            let t = Instant::now();
            let refs: BTreeMap<usize, DescriptorRef> =
                needed.iter().copied().zip(extract_cached(manifest, &needed, &cfg.dense, &cache)?).collect();
            timings.extract += t.elapsed().as_secs_f64();

            for part in &partitions {
                let t = Instant::now();
                let train_refs: Vec<(&DescriptorRef, &str)> =
                    part.train.iter().map(|&i| (&refs[&i], label(i))).collect();
                let vocab =
                    fit_vocabulary(&train_refs, cfg, &cache).map_err(|e| e.in_stage("fit", part.name.clone()))?;
                let all: Vec<usize> = part.train.iter().chain(&part.test).copied().collect();
                let fvs = encode_cached(&vocab, &all.iter().map(|i| &refs[i]).collect::<Vec<_>>(), &cache)?;
                timings.encode += t.elapsed().as_secs_f64();

                let t = Instant::now();
                let n_train = part.train.len();
                let train_x: Vec<&[f32]> = fvs[..n_train].iter().map(|f| f.values.as_slice()).collect();
                let train_y: Vec<String> = part.train.iter().map(|&i| label(i).to_owned()).collect();
                let model = train_cached(&vocab.key, &train_refs, &train_x, &train_y, cfg, &cache)
                    .map_err(|e| e.in_stage("train", part.name.clone()))?;
                let tests: Vec<(&[f32], &str)> =
                    fvs[n_train..].iter().zip(&part.test).map(|(f, &i)| (f.values.as_slice(), label(i))).collect();
                splits.push(evaluate_split(&model, &manifest.classes, &part.name, &tests)?);
                timings.train += t.elapsed().as_secs_f64();
            }
        }
        DescriptorKind::Lbp => {
            let t = Instant::now();
            let feats: BTreeMap<usize, Vec<f32>> = needed
                .par_iter()
                .map(|&i| {
                    let path = manifest.resolve(&manifest.entries[i]);
                    let f = read_image_bytes(&path)
                        .and_then(|b| decode_any(&b, &path))
                        .and_then(|img| lbp_feature(&img))
                        .map_err(|e| e.in_stage("extract", path.display().to_string()))?;
                    Ok((i, f))
                })
                .collect::<Result<_>>()?;
            timings.extract += t.elapsed().as_secs_f64();

            for part in &partitions {
                let t = Instant::now();
                let train_x: Vec<&[f32]> = part.train.iter().map(|i| feats[i].as_slice()).collect();
                let train_y: Vec<String> = part.train.iter().map(|&i| label(i).to_owned()).collect();
                let model = train_classifier(&matrix_of(&train_x)?, &train_y, cfg)
                    .map_err(|e| e.in_stage("train", part.name.clone()))?;
                let tests: Vec<(&[f32], &str)> = part.test.iter().map(|&i| (feats[&i].as_slice(), label(i))).collect();
                splits.push(evaluate_split(&model, &manifest.classes, &part.name, &tests)?);
                timings.train += t.elapsed().as_secs_f64();
            }
        }
    }
    Ok(EvalReport::new(kind.to_string(), manifest.classes.clone(), splits, timings))
}

fn train_cached(
    vocab_key: &str,
    train_refs: &[(&DescriptorRef, &str)],
    x: &[&[f32]],
    y: &[String],
    cfg: &ExperimentConfig,
    cache: &Cache,
) -> Result<LinearModel> {
    let params = format!("svm-v1;c={};seed={}", cfg.svm_c, cfg.seed);
    let mut parts: Vec<&[u8]> = vec![params.as_bytes(), vocab_key.as_bytes()];
    for (r, label) in train_refs {
        parts.push(r.key.as_bytes());
        parts.push(label.as_bytes());
    }
    let path = cache.path("classifiers", &content_key(parts), "lsvm");
    if path.is_file() {
        return read_svm(&path);
    }
    let model = train_classifier(&matrix_of(x)?, y, cfg)?;
    write_svm(&path, &model)?;
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pipeline::manifest::make_splits;
    use crate::pipeline::synth::synth_textures;

    #[test]
    fn config_validation() {
        let mut cfg = ExperimentConfig::desk();
        assert!(cfg.validate().is_ok());
        assert_eq!(ExperimentConfig::paper().fisher_dim(), 51_200);
        cfg.pca_dim = 300;
        assert!(matches!(cfg.validate(), Err(Error::Config(_))));
        let mut cfg = ExperimentConfig::desk();
        cfg.vocab_samples = 10;
        assert!(cfg.validate().is_err());
        assert_eq!("LBP".parse::<DescriptorKind>().unwrap(), DescriptorKind::Lbp);
        assert!("sift".parse::<DescriptorKind>().is_err());
        assert_eq!("paper".parse::<Profile>().unwrap(), Profile::Paper);
    }

    #[test]
    fn vocabulary_sampling() {
        let dir = tempfile::tempdir().unwrap();
        let mut files = Vec::new();
        for (f, n) in [3usize, 0, 5, 4].iter().enumerate() {
            let path = dir.path().join(format!("{f}.lodf"));
            let data = (0..n * 2).map(|v| (f * 100 + v / 2) as f32).collect();
            write_descriptors(&path, &DescriptorSet::new(2, data).unwrap()).unwrap();
            files.push(path);
        }
        let labelled: Vec<(&Path, &str)> =
            files.iter().zip(["a", "a", "b", "b"]).map(|(p, l)| (p.as_path(), l)).collect();
        let all = sample_vocabulary(&labelled, 100, false, 1).unwrap();
        assert_eq!(all.rows(), 12);
        let some = sample_vocabulary(&labelled, 5, false, 1).unwrap();
        assert_eq!(some.rows(), 5);
        assert_eq!(some, sample_vocabulary(&labelled, 5, false, 1).unwrap());
        // rows are real, distinct descriptors in file order
        let ids: Vec<f64> = some.iter_rows().map(|r| r[0]).collect();
        assert!(ids.windows(2).all(|w| w[0] < w[1]));
        let strat = sample_vocabulary(&labelled, 6, true, 2).unwrap();
        let from_a = strat.iter_rows().filter(|r| r[0] < 100.0).count();
        assert_eq!(from_a, 3);
    }

    #[test]
    fn small_experiment_is_cached_and_deterministic() {
        let dir = tempfile::tempdir().unwrap();
        let m = synth_textures(&dir.path().join("data"), 2, 6, 48, 3).unwrap();
        let m = make_splits(&m, 3, 2, 1).unwrap();
        let mut cfg = ExperimentConfig::desk();
        cfg.pca_dim = 8;
        cfg.gmm.components = 4;
        cfg.vocab_samples = 500;
        cfg.cache_dir = dir.path().join("cache");
        let a = run_experiment(&m, DescriptorKind::Load, &cfg).unwrap();
        let b = run_experiment(&m, DescriptorKind::Load, &cfg).unwrap();
        assert_eq!(a.to_csv(), b.to_csv());
        assert_eq!(a.summary(), b.summary());
        assert_eq!(a.splits.len(), 2);
        assert_eq!(a.splits[0].total(), 6);
        assert!(cfg.cache_dir.join("fisher").is_dir());

        let lbp = run_experiment(&m, DescriptorKind::Lbp, &cfg).unwrap();
        assert_eq!(lbp.descriptor, "lbp");
    }
}
