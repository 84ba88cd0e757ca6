//! Datasets, split protocols, the cached end-to-end experiment and the
//! invariance benchmark.

mod bench;
mod cache;
mod experiment;
mod manifest;
mod outex;
mod report;
mod synth;

pub use bench::{
    invariance_bench, measure_throughput, noise_image, BenchReport, BenchRow, Throughput, BENCH_TRANSFORMS,
};
pub use cache::{content_key, default_cache_dir, Cache, CACHE_ENV};
pub use experiment::{
    decode_any, descriptor_set, encode_cached, encode_set, evaluate_split, extract_cached, fit_models, fit_vocabulary,
    lbp_feature, read_image, run_experiment, sample_vocabulary, train_classifier, DescriptorKind, DescriptorRef,
    ExperimentConfig, Profile, Vocabulary,
};
pub use manifest::{make_splits, DatasetManifest, Entry, Partition, ROLE_TEST, ROLE_TRAIN};
pub use outex::load_outex;
pub use report::{EvalReport, SplitResult, Timings};
pub use synth::{
    render_texture, synth_textures, synth_textures_with, test_variant, texture_class, TextureClass, MAX_SYNTH_CLASSES,
};
