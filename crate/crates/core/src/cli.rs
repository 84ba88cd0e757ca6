//! The `loadtex` command line: one subcommand per pipeline stage, the
//! invariance/throughput benchmark and the synthetic dataset generator.
//!
//! Parameters come from three layers. Profile defaults sit at the bottom,
//! an optional `key=value` file (`--config`) overrides them, and flags on
//! the command line win over both. Everything is validated before any
//! image is touched.
//!
//! Exit codes: 0 on success, 1 when a stage fails, 2 for usage and
//! validation errors.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::path::{Component, Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;

use crate::encode::FisherVector;
use crate::error::Error;
use crate::formats::{
    read_descriptor_header, read_descriptors, read_gmm, read_pca, read_svm, write_atomic, write_descriptors, write_gmm,
    write_pca, write_svm, DescriptorSet,
};
use crate::load::{DenseConfig, DenseExtractor, FrameMode};
use crate::patterns::UniformTable;
use crate::pipeline::{
    descriptor_set, encode_set, evaluate_split, fit_models, invariance_bench, make_splits, measure_throughput,
    noise_image, read_image, run_experiment, synth_textures, train_classifier, DatasetManifest, DescriptorKind, Entry,
    EvalReport, ExperimentConfig, Profile, Timings,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

/// Names of the model files written by `fit` and read by `encode`.
pub const PCA_FILE: &str = "pca.lpca";
pub const GMM_FILE: &str = "gmm.lgmm";

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    /// Bad flags or inconsistent parameters, detected before any work.
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Failed(#[from] Error),
}

impl CliError {
    fn usage(e: impl std::fmt::Display) -> Self {
        CliError::Usage(e.to_string())
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Failed(_) => EXIT_FAILURE,
        }
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

#[derive(Parser, Debug)]
#[command(name = "loadtex", version, about = "Rotation-robust texture descriptors and classification")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub params: Params,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Generate a labelled synthetic texture set with seeded train/test splits
    Synth(SynthArgs),
    /// Dense LOAD extraction: one descriptor file per manifest image
    Extract(ExtractArgs),
    /// Fit the PCA basis and the Gaussian mixture on one split's training images
    Fit(FitArgs),
    /// Encode descriptor files as Fisher vectors
    Encode(EncodeArgs),
    /// Train the one-vs-all linear classifier on one split's training vectors
    Train(TrainArgs),
    /// Evaluate a trained model on one split, or run the whole cached experiment
    Eval(EvalArgs),
    /// Descriptor distances under rotation and intensity maps, and throughput
    Bench(BenchArgs),
}

/// Pipeline parameters shared by every subcommand. All of them may also be
/// set in the `--config` file, using the long name with `-` or `_`.
#[derive(Args, Debug, Default, Clone)]
pub struct Params {
    /// Parameter preset: desk or paper [default: desk]
    #[arg(long, global = true, value_name = "NAME")]
    pub profile: Option<Profile>,
    /// File of `key=value` lines with any of these options; flags win
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Seed for splits, vocabulary sampling, k-means and SVM [default: 0]
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads [default: logical cores]
    #[arg(long, global = true, value_name = "N")]
    pub threads: Option<usize>,
    /// Cache directory [default: $LOADTEX_CACHE, else .loadtex-cache]
    #[arg(long, global = true, value_name = "DIR")]
    pub cache: Option<PathBuf>,
    /// Patch radius in pixels [default: 15]
    #[arg(long, global = true, value_name = "PX")]
    pub patch_radius: Option<f64>,
    /// Ring radii, comma separated [default: 1,2,3,4]
    #[arg(long, global = true, value_delimiter = ',', value_name = "R,..")]
    pub scales: Option<Vec<f64>>,
    /// Grid step in pixels [default: 4]
    #[arg(long, global = true, value_name = "PX")]
    pub step: Option<usize>,
    /// Rescaling factors, comma separated [default: 2^(-i/2) for i=-1..4]
    #[arg(long, global = true, value_delimiter = ',', value_name = "F,..")]
    pub pyramid: Option<Vec<f64>>,
    /// Use image-axis neighbour frames instead of the adaptive ones
    #[arg(long, global = true)]
    pub fixed_frame: bool,
    /// PCA output dimension D [default: 32 desk, 100 paper]
    #[arg(long, global = true, value_name = "D")]
    pub pca_dim: Option<usize>,
    /// Whiten the PCA output
    #[arg(long, global = true)]
    pub whiten: bool,
    /// Mixture components K [default: 16 desk, 256 paper]
    #[arg(long, global = true, value_name = "K")]
    pub components: Option<usize>,
    /// Descriptors sampled to fit PCA and the mixture [default: 10000 desk, 100000 paper]
    #[arg(long, global = true, value_name = "N")]
    pub vocab_samples: Option<usize>,
    /// Sample the vocabulary equally from every class
    #[arg(long, global = true)]
    pub stratified: bool,
    /// EM iteration cap [default: 100]
    #[arg(long, global = true, value_name = "N")]
    pub em_iter: Option<usize>,
    /// EM relative log-likelihood tolerance [default: 1e-5]
    #[arg(long, global = true, value_name = "TOL")]
    pub em_tol: Option<f64>,
    /// SVM regularisation constant C [default: 10]
    #[arg(long, global = true, value_name = "C")]
    pub svm_c: Option<f64>,
}

#[derive(Parser, Debug)]
#[command(no_binary_name = true)]
struct ConfigFile {
    #[command(flatten)]
    params: Params,
}

impl Params {
    /// Reads a `key=value` file; blank lines and `#` comments are ignored.
    pub fn from_file(path: &Path) -> CliResult<Params> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        let mut argv = Vec::new();
        for (no, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| CliError::Usage(format!("{}:{}: expected key=value", path.display(), no + 1)))?;
            let key = key.trim().replace('_', "-");
            let value = value.trim();
            if key == "config" {
                return Err(CliError::Usage(format!("{}: config files cannot include others", path.display())));
            }
            if matches!(key.as_str(), "whiten" | "stratified" | "fixed-frame") {
                match value {
                    "true" | "1" | "yes" => argv.push(format!("--{key}")),
                    "false" | "0" | "no" => {}
                    _ => return Err(CliError::Usage(format!("{}: {key} must be true or false", path.display()))),
                }
            } else {
                argv.push(format!("--{key}"));
                argv.push(value.to_owned());
            }
        }
        ConfigFile::try_parse_from(argv).map(|c| c.params).map_err(|e| {
            let msg = e.to_string();
            let first = msg.lines().next().unwrap_or_default().trim_start_matches("error: ").to_owned();
            CliError::Usage(format!("{}: {first}", path.display()))
        })
    }

    /// Field-wise `self` over `base`.
    pub fn over(self, base: Params) -> Params {
        Params {
            profile: self.profile.or(base.profile),
            config: self.config.or(base.config),
            seed: self.seed.or(base.seed),
            threads: self.threads.or(base.threads),
            cache: self.cache.or(base.cache),
            patch_radius: self.patch_radius.or(base.patch_radius),
            scales: self.scales.or(base.scales),
            step: self.step.or(base.step),
            pyramid: self.pyramid.or(base.pyramid),
            fixed_frame: self.fixed_frame || base.fixed_frame,
            pca_dim: self.pca_dim.or(base.pca_dim),
            whiten: self.whiten || base.whiten,
            components: self.components.or(base.components),
            vocab_samples: self.vocab_samples.or(base.vocab_samples),
            stratified: self.stratified || base.stratified,
            em_iter: self.em_iter.or(base.em_iter),
            em_tol: self.em_tol.or(base.em_tol),
            svm_c: self.svm_c.or(base.svm_c),
        }
    }

    /// Profile defaults with every explicit setting applied, validated.
    pub fn experiment_config(&self) -> CliResult<ExperimentConfig> {
        let mut cfg = ExperimentConfig::for_profile(self.profile.unwrap_or(Profile::Desk));
        let dense = &mut cfg.dense;
        if let Some(r) = self.patch_radius {
            dense.load.patch_radius = r;
        }
        if let Some(s) = &self.scales {
            dense.load.scales.clone_from(s);
        }
        if let Some(s) = self.step {
            dense.step = s;
        }
        if let Some(p) = &self.pyramid {
            dense.pyramid.clone_from(p);
        }
        if self.fixed_frame {
            dense.load.frame = FrameMode::Fixed;
        }
        if let Some(d) = self.pca_dim {
            cfg.pca_dim = d;
        }
        cfg.whiten |= self.whiten;
        if let Some(k) = self.components {
            cfg.gmm.components = k;
        }
        if let Some(n) = self.vocab_samples {
            cfg.vocab_samples = n;
        }
        cfg.stratified |= self.stratified;
        if let Some(n) = self.em_iter {
            cfg.gmm.max_iter = n;
        }
        if let Some(t) = self.em_tol {
            cfg.gmm.tol = t;
        }
        if let Some(c) = self.svm_c {
            cfg.svm_c = c;
        }
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(c) = &self.cache {
            cfg.cache_dir.clone_from(c);
        }
        cfg.validate().map_err(CliError::usage)?;
        Ok(cfg)
    }
}

#[derive(Args, Debug)]
pub struct SynthArgs {
    /// Output directory; receives images/ and manifest.txt
    #[arg(long)]
    pub out: PathBuf,
    /// Number of texture classes (at most 10)
    #[arg(long, default_value_t = 5)]
    pub classes: usize,
    /// Samples per class
    #[arg(long, default_value_t = 40)]
    pub per_class: usize,
    /// Image side in pixels
    #[arg(long, default_value_t = 64)]
    pub size: usize,
    /// Random train/test configurations to create
    #[arg(long, default_value_t = 5)]
    pub splits: usize,
    /// Training samples per class in every split
    #[arg(long, default_value_t = 20)]
    pub train_per_class: usize,
}

#[derive(Args, Debug)]
pub struct ExtractArgs {
    /// Manifest of `path<TAB>label<TAB>tags` lines
    #[arg(long)]
    pub manifest: PathBuf,
    /// Output directory; `<image path>.lodf` is written under it
    #[arg(long)]
    pub out: PathBuf,
    /// Only extract the images of this split [default: every entry]
    #[arg(long)]
    pub split: Option<String>,
}

#[derive(Args, Debug)]
pub struct FitArgs {
    /// Manifest of `path<TAB>label<TAB>tags` lines
    #[arg(long)]
    pub manifest: PathBuf,
    /// Directory written by `extract`
    #[arg(long)]
    pub features: PathBuf,
    /// Split whose training images supply the vocabulary
    #[arg(long)]
    pub split: String,
    /// Output directory for pca.lpca and gmm.lgmm
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct EncodeArgs {
    /// Manifest of `path<TAB>label<TAB>tags` lines
    #[arg(long)]
    pub manifest: PathBuf,
    /// Directory written by `extract`
    #[arg(long)]
    pub features: PathBuf,
    /// Directory written by `fit`
    #[arg(long)]
    pub models: PathBuf,
    /// Output directory; `<image path>.fv` is written under it
    #[arg(long)]
    pub out: PathBuf,
    /// Only encode the images of this split [default: every entry]
    #[arg(long)]
    pub split: Option<String>,
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    /// Manifest of `path<TAB>label<TAB>tags` lines
    #[arg(long)]
    pub manifest: PathBuf,
    /// Directory written by `encode`
    #[arg(long)]
    pub fisher: PathBuf,
    /// Split whose training images are used
    #[arg(long)]
    pub split: String,
    /// Model file; the class list goes to `<out>.labels`
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    /// Manifest of `path<TAB>label<TAB>tags` lines
    #[arg(long)]
    pub manifest: PathBuf,
    /// Model written by `train`; without it every split is run end to end
    #[arg(long, requires_all = ["fisher", "split"])]
    pub model: Option<PathBuf>,
    /// Directory written by `encode` (with --model)
    #[arg(long)]
    pub fisher: Option<PathBuf>,
    /// Split whose test images are scored (with --model)
    #[arg(long)]
    pub split: Option<String>,
    /// Descriptor for the end-to-end run: load or lbp
    #[arg(long, default_value = "load", conflicts_with = "model")]
    pub descriptor: DescriptorKind,
    /// Directory for report.csv, confusion.csv, summary.txt and timings.txt
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct BenchArgs {
    /// Noise images in the invariance measurement
    #[arg(long, default_value_t = 20)]
    pub images: usize,
    /// Side of the invariance images in pixels
    #[arg(long, default_value_t = 64)]
    pub size: usize,
    /// Side of the throughput image in pixels
    #[arg(long, default_value_t = 300)]
    pub throughput_size: usize,
    /// Minimum measured extraction time in seconds; 0 skips the measurement
    #[arg(long, default_value_t = 2.0)]
    pub seconds: f64,
    /// Also write the invariance table to this CSV file
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Parses `args` (program name first), runs the command and returns the
/// process exit code. Diagnostics go to stderr.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .try_init();
    match execute(cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

/// Resolves parameters, builds the worker pool and dispatches.
pub fn execute(cli: Cli) -> CliResult<()> {
    let params = match &cli.params.config {
        Some(path) => cli.params.clone().over(Params::from_file(path)?),
        None => cli.params.clone(),
    };
    let cfg = params.experiment_config()?;
    let mut pool = rayon::ThreadPoolBuilder::new();
    match params.threads {
        Some(0) => return Err(CliError::Usage("--threads must be at least 1".into())),
        Some(n) => pool = pool.num_threads(n),
        None => {}
    }
    let pool = pool.build().map_err(CliError::usage)?;
    pool.install(|| match cli.command {
        Command::Synth(a) => cmd_synth(&a, &cfg),
        Command::Extract(a) => cmd_extract(&a, &cfg),
        Command::Fit(a) => cmd_fit(&a, &cfg),
        Command::Encode(a) => cmd_encode(&a),
        Command::Train(a) => cmd_train(&a, &cfg),
        Command::Eval(a) => cmd_eval(&a, &cfg),
        Command::Bench(a) => cmd_bench(&a, &cfg),
    })
}

/// `<dir>/<entry path>.<ext>`, keeping only the plain components of the
/// entry path so outputs never escape `dir`.
pub fn artifact_path(dir: &Path, manifest: &DatasetManifest, entry: &Entry, ext: &str) -> PathBuf {
    let rel = if entry.path.is_absolute() {
        entry.path.strip_prefix(&manifest.root).unwrap_or(&entry.path)
    } else {
        &entry.path
    };
    let mut out = dir.to_path_buf();
    for c in rel.components() {
        if let Component::Normal(part) = c {
            out.push(part);
        }
    }
    let mut name = out.into_os_string();
    name.push(".");
    name.push(ext);
    PathBuf::from(name)
}

fn selected(manifest: &DatasetManifest, split: Option<&str>) -> CliResult<Vec<usize>> {
    match split {
        None => Ok((0..manifest.entries.len()).collect()),
        Some(s) => {
            let part = manifest.partition(s).map_err(CliError::usage)?;
            let mut all: Vec<usize> = part.train.into_iter().chain(part.test).collect();
            all.sort_unstable();
            Ok(all)
        }
    }
}

/// Runs `job` on every index in parallel, logging failures and counting them.
fn for_each_image<F>(stage: &'static str, manifest: &DatasetManifest, indices: &[usize], job: F) -> CliResult<()>
where
    F: Fn(&Entry) -> crate::Result<String> + Sync,
{
    let done = AtomicUsize::new(0);
    let failed = AtomicUsize::new(0);
    let total = indices.len();
    indices.par_iter().for_each(|&i| {
        let entry = &manifest.entries[i];
        let path = manifest.resolve(entry);
        let t = Instant::now();
        let result = job(entry);
        let n = done.fetch_add(1, Ordering::Relaxed) + 1;
        match result {
            Ok(what) => log::info!("[{n}/{total}] {}: {what} in {:.3} s", path.display(), t.elapsed().as_secs_f64()),
            Err(e) => {
                failed.fetch_add(1, Ordering::Relaxed);
                log::error!("[{n}/{total}] {}", e.in_stage(stage, path.display().to_string()));
            }
        }
    });
    match failed.into_inner() {
        0 => Ok(()),
        f => Err(Error::Stage {
            stage,
            item: manifest.name.clone(),
            source: Box::new(Error::EmptyInput(format!("{f} of {total} images failed"))),
        }
        .into()),
    }
}

fn cmd_synth(a: &SynthArgs, cfg: &ExperimentConfig) -> CliResult<()> {
    if a.train_per_class >= a.per_class {
        return Err(CliError::Usage(format!(
            "--train-per-class {} leaves no test samples out of {}",
            a.train_per_class, a.per_class
        )));
    }
    let data = synth_textures(&a.out, a.classes, a.per_class, a.size, cfg.seed).map_err(|e| match e {
        Error::Config(_) => CliError::usage(e),
        e => e.into(),
    })?;
    let manifest = make_splits(&data, a.train_per_class, a.splits, cfg.seed)?;
    let path = a.out.join("manifest.txt");
    manifest.save(&path)?;
    println!(
        "{} images of {} classes, {} splits: {}",
        manifest.entries.len(),
        manifest.classes.len(),
        a.splits,
        path.display()
    );
    Ok(())
}

fn cmd_extract(a: &ExtractArgs, cfg: &ExperimentConfig) -> CliResult<()> {
    let manifest = DatasetManifest::read(&a.manifest)?;
    let indices = selected(&manifest, a.split.as_deref())?;
    let extractor = DenseExtractor::new(cfg.dense.clone(), UniformTable::shared()).map_err(CliError::usage)?;
    for_each_image("extract", &manifest, &indices, |e| {
        let set = descriptor_set(&extractor, &read_image(&manifest.resolve(e))?)?;
        write_descriptors(&artifact_path(&a.out, &manifest, e, "lodf"), &set)?;
        Ok(format!("{} descriptors", set.count()))
    })?;
    println!("{} descriptor files of dimension {} in {}", indices.len(), extractor.dim(), a.out.display());
    Ok(())
}

fn cmd_fit(a: &FitArgs, cfg: &ExperimentConfig) -> CliResult<()> {
    let manifest = DatasetManifest::load(&a.manifest)?;
    let part = manifest.partition(&a.split).map_err(CliError::usage)?;
    let files: Vec<(PathBuf, &str)> = part
        .train
        .iter()
        .map(|&i| {
            let e = &manifest.entries[i];
            (artifact_path(&a.features, &manifest, e, "lodf"), e.label.as_str())
        })
        .collect();
    // header checks are cheap and catch a too-large D before the sampling pass
    for (path, _) in &files {
        let (_, dim) = read_descriptor_header(path).map_err(|e| e.in_stage("fit", path.display().to_string()))?;
        if cfg.pca_dim > dim {
            return Err(CliError::Usage(format!(
                "PCA dimension {} exceeds the descriptor dimension {dim} of {}",
                cfg.pca_dim,
                path.display()
            )));
        }
    }
    let refs: Vec<(&Path, &str)> = files.iter().map(|(p, l)| (p.as_path(), *l)).collect();
    let (pca, fit) = fit_models(&refs, cfg).map_err(|e| e.in_stage("fit", a.split.clone()))?;
    write_pca(&a.out.join(PCA_FILE), &pca)?;
    write_gmm(&a.out.join(GMM_FILE), &fit.model)?;
    let ll = fit.log_likelihoods.last().copied().unwrap_or(f64::NAN);
    log::info!(
        "EM {} after {} iterations",
        if fit.converged { "converged" } else { "hit the iteration cap" },
        fit.log_likelihoods.len()
    );
    println!("final mean log-likelihood: {ll:.6}");
    println!("models in {}", a.out.display());
    Ok(())
}

fn cmd_encode(a: &EncodeArgs) -> CliResult<()> {
    let manifest = DatasetManifest::read(&a.manifest)?;
    let indices = selected(&manifest, a.split.as_deref())?;
    let pca_path = a.models.join(PCA_FILE);
    let pca = read_pca(&pca_path).map_err(|e| e.in_stage("encode", pca_path.display().to_string()))?;
    let gmm_path = a.models.join(GMM_FILE);
    let gmm = read_gmm(&gmm_path).map_err(|e| e.in_stage("encode", gmm_path.display().to_string()))?;
    if pca.output_dim != gmm.dim() {
        return Err(Error::BadModelFile {
            path: gmm_path,
            reason: format!("mixture dimension {} does not match PCA output {}", gmm.dim(), pca.output_dim),
        }
        .into());
    }
    for_each_image("encode", &manifest, &indices, |e| {
        let set = read_descriptors(&artifact_path(&a.features, &manifest, e, "lodf"))?;
        let fv = encode_set(&set, &pca, &gmm)?;
        let n = fv.len();
        write_descriptors(&artifact_path(&a.out, &manifest, e, "fv"), &DescriptorSet::new(n, fv.values)?)?;
        Ok(format!("{} descriptors encoded", set.count()))
    })?;
    println!("{} Fisher vectors of dimension {} in {}", indices.len(), 2 * pca.output_dim * gmm.k(), a.out.display());
    Ok(())
}

fn read_fisher(path: &Path) -> crate::Result<FisherVector> {
    let set = read_descriptors(path)?;
    if set.count() != 1 {
        return Err(Error::BadModelFile {
            path: path.to_path_buf(),
            reason: format!("expected one Fisher vector, found {}", set.count()),
        });
    }
    Ok(FisherVector { values: set.data })
}

fn read_fishers(
    dir: &Path,
    manifest: &DatasetManifest,
    indices: &[usize],
    stage: &'static str,
) -> CliResult<Vec<FisherVector>> {
    let out: crate::Result<Vec<FisherVector>> = indices
        .par_iter()
        .map(|&i| {
            let path = artifact_path(dir, manifest, &manifest.entries[i], "fv");
            read_fisher(&path).map_err(|e| e.in_stage(stage, path.display().to_string()))
        })
        .collect();
    Ok(out?)
}

fn cmd_train(a: &TrainArgs, cfg: &ExperimentConfig) -> CliResult<()> {
    let manifest = DatasetManifest::load(&a.manifest)?;
    let part = manifest.partition(&a.split).map_err(CliError::usage)?;
    let fvs = read_fishers(&a.fisher, &manifest, &part.train, "train")?;
    let labels: Vec<String> = part.train.iter().map(|&i| manifest.entries[i].label.clone()).collect();
    let cols = fvs.first().map_or(0, FisherVector::len);
    let x = crate::encode::DataMatrix::from_f32_rows(cols, fvs.iter().map(|f| f.values.as_slice()))
        .map_err(|e| e.in_stage("train", a.split.clone()))?;
    let model = train_classifier(&x, &labels, cfg).map_err(|e| e.in_stage("train", a.split.clone()))?;
    write_svm(&a.out, &model)?;
    println!("{} classes, {} features: {}", model.classes.len(), model.features(), a.out.display());
    Ok(())
}

fn cmd_eval(a: &EvalArgs, cfg: &ExperimentConfig) -> CliResult<()> {
    let manifest = DatasetManifest::load(&a.manifest)?;
    let report = match (&a.model, &a.fisher, &a.split) {
        (Some(model_path), Some(fisher), Some(split)) => {
            let part = manifest.partition(split).map_err(CliError::usage)?;
            let model = read_svm(model_path).map_err(|e| e.in_stage("eval", model_path.display().to_string()))?;
            let t = Instant::now();
            let fvs = read_fishers(fisher, &manifest, &part.test, "eval")?;
            let tests: Vec<(&[f32], &str)> = fvs
                .iter()
                .zip(&part.test)
                .map(|(f, &i)| (f.values.as_slice(), manifest.entries[i].label.as_str()))
                .collect();
            let result = evaluate_split(&model, &manifest.classes, split, &tests)
                .map_err(|e| e.in_stage("eval", split.clone()))?;
            let timings = Timings { train: t.elapsed().as_secs_f64(), ..Timings::default() };
            EvalReport::new("load", manifest.classes.clone(), vec![result], timings)
        }
        (None, _, _) => run_experiment(&manifest, a.descriptor, cfg)?,
        _ => return Err(CliError::Usage("--model needs --fisher and --split".into())),
    };
    if let Some(dir) = &a.report {
        report.write(dir)?;
    }
    print!("{}", report.summary());
    Ok(())
}

fn cmd_bench(a: &BenchArgs, cfg: &ExperimentConfig) -> CliResult<()> {
    if a.images == 0 || a.seconds.is_nan() || a.seconds < 0.0 {
        return Err(CliError::Usage("--images must be positive and --seconds non-negative".into()));
    }
    let images = (0..a.images)
        .map(|i| noise_image(a.size, a.size, cfg.seed.wrapping_add(i as u64)))
        .collect::<crate::Result<Vec<_>>>()
        .map_err(CliError::usage)?;
    let mut csv = String::from("frame,transform,images,points,mean_l1,max_l1\n");
    // the fixed-frame rows are the reference the adaptive rows are judged by
    let mut fixed = cfg.dense.clone();
    fixed.load.frame = FrameMode::Fixed;
    let mut frames: Vec<(&str, &DenseConfig)> = vec![("fixed", &fixed)];
    if cfg.dense.load.frame == FrameMode::Adaptive {
        frames.insert(0, ("adaptive", &cfg.dense));
    }
    for (name, dense) in frames {
        let report = invariance_bench(&images, dense, cfg.seed).map_err(|e| e.in_stage("bench", name))?;
        for r in &report.rows {
            let _ =
                writeln!(csv, "{name},{},{},{},{:.6e},{:.6e}", r.transform, r.images, r.points, r.mean_l1, r.max_l1);
        }
    }
    if let Some(path) = &a.out {
        write_atomic(path, csv.as_bytes())?;
    }
    print!("{csv}");
    if a.seconds > 0.0 {
        let img = noise_image(a.throughput_size, a.throughput_size, cfg.seed).map_err(CliError::usage)?;
        let t = measure_throughput(&img, &cfg.dense, a.seconds).map_err(|e| e.in_stage("bench", "throughput"))?;
        println!();
        println!("size,threads,descriptors,seconds,descriptors_per_second");
        println!("{},1,{},{:.3},{:.0}", a.throughput_size, t.descriptors, t.seconds, t.per_second);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(args: &[&str]) -> Cli {
        Cli::try_parse_from(std::iter::once("loadtex").chain(args.iter().copied())).unwrap()
    }

    #[test]
    fn profile_and_overrides() {
        let cli = parse(&["bench", "--profile", "paper", "--scales", "1,3", "--pca-dim", "50"]);
        let cfg = cli.params.experiment_config().unwrap();
        assert_eq!(cfg.gmm.components, 256);
        assert_eq!(cfg.pca_dim, 50);
        assert_eq!(cfg.dense.load.dim(), 118);

        let cli = parse(&["bench", "--scales", "1,3", "--pca-dim", "200"]);
        assert!(matches!(cli.params.experiment_config(), Err(CliError::Usage(_))));
    }

    #[test]
    fn config_file_loses_to_flags() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.conf");
        std::fs::write(&path, "# desk run\npca_dim = 20\ncomponents=8\nwhiten=true\nsvm-c=2.5\n").unwrap();
        let file = Params::from_file(&path).unwrap();
        let cli =
            parse(&["fit", "--manifest", "m", "--features", "f", "--split", "s", "--out", "o", "--pca-dim", "24"]);
        let cfg = cli.params.over(file).experiment_config().unwrap();
        assert_eq!((cfg.pca_dim, cfg.gmm.components, cfg.whiten, cfg.svm_c), (24, 8, true, 2.5));

        std::fs::write(&path, "bogus=1\n").unwrap();
        assert!(matches!(Params::from_file(&path), Err(CliError::Usage(_))));
        std::fs::write(&path, "pca_dim\n").unwrap();
        assert!(matches!(Params::from_file(&path), Err(CliError::Usage(_))));
    }

    #[test]
    fn artifact_paths_stay_inside() {
        let m = DatasetManifest::new("m", "/data", vec![]).unwrap();
        let e = |p: &str| Entry { path: PathBuf::from(p), label: "x".into(), tags: vec![] };
        assert_eq!(artifact_path(Path::new("out"), &m, &e("a/b.pgm"), "lodf"), Path::new("out/a/b.pgm.lodf"));
        assert_eq!(artifact_path(Path::new("out"), &m, &e("../up.pgm"), "fv"), Path::new("out/up.pgm.fv"));
        assert_eq!(artifact_path(Path::new("out"), &m, &e("/data/i/c.png"), "fv"), Path::new("out/i/c.png.fv"));
    }

    #[test]
    fn usage_errors_exit_2() {
        assert_eq!(run(["loadtex", "frobnicate"]), EXIT_USAGE);
        assert_eq!(run(["loadtex", "bench", "--threads", "0", "--images", "1", "--seconds", "0"]), EXIT_USAGE);
    }
}
