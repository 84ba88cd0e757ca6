use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use loadtex::formats::read_descriptor_header;

const SMALL: &str = "--pca-dim 12 --components 4 --vocab-samples 1500";
const MANIFEST: &str = "--manifest data/manifest.txt";

/// Runs the binary in `dir` with a whitespace-separated command line.
fn loadtex(dir: &Path, line: &str) -> Output {
    Command::new(env!("CARGO_BIN_EXE_loadtex"))
        .current_dir(dir)
        .env("RUST_LOG", "warn")
        .env("LOADTEX_CACHE", dir.join("cache"))
        .args(line.split_whitespace())
        .output()
        .expect("binary runs")
}

fn ok(dir: &Path, line: &str) -> String {
    let out = loadtex(dir, line);
    assert!(out.status.success(), "`{line}` failed with {}:\n{}", out.status, String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

/// A 3-class synthetic set with two splits in `dir/data`.
fn dataset(dir: &Path) {
    ok(dir, "synth --out data --classes 3 --per-class 6 --size 48 --splits 2 --train-per-class 3");
}

#[test]
fn stages_chain_end_to_end() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    dataset(dir);
    ok(dir, &format!("extract {MANIFEST} --out feats"));
    let fit = ok(dir, &format!("fit {MANIFEST} --features feats --split split0 --out models {SMALL}"));
    assert!(fit.contains("final mean log-likelihood"));
    ok(dir, &format!("encode {MANIFEST} --features feats --models models --out fv"));
    let (count, dim) = read_descriptor_header(&dir.join("fv/images/texture1_002_test.pgm.fv")).unwrap();
    assert_eq!((count, dim), (1, 2 * 12 * 4));
    ok(dir, &format!("train {MANIFEST} --fisher fv --split split0 --out svm.lsvm"));
    assert!(dir.join("svm.lsvm.labels").is_file());
    let eval = ok(dir, &format!("eval {MANIFEST} --model svm.lsvm --fisher fv --split split0 --report rep"));
    assert!(eval.contains("accuracy:") && eval.contains("confusion"), "{eval}");
    for f in ["report.csv", "confusion.csv", "summary.txt", "timings.txt"] {
        assert!(dir.join("rep").join(f).is_file(), "{f}");
    }
}

#[test]
fn extract_honours_scales_and_threads() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    dataset(dir);
    ok(dir, &format!("extract {MANIFEST} --out a --scales 1,3 --threads 1"));
    ok(dir, &format!("extract {MANIFEST} --out b --scales 1,3 --threads 3"));
    let rel = Path::new("images/texture0_000_train.pgm.lodf");
    assert_eq!(read_descriptor_header(&dir.join("a").join(rel)).unwrap().1, 118);
    for entry in fs::read_dir(dir.join("a/images")).unwrap() {
        let name = entry.unwrap().file_name();
        assert_eq!(
            fs::read(dir.join("a/images").join(&name)).unwrap(),
            fs::read(dir.join("b/images").join(&name)).unwrap(),
            "{name:?}"
        );
    }
}

#[test]
fn missing_image_fails_and_names_it() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    dataset(dir);
    fs::remove_file(dir.join("data/images/texture2_001_test.pgm")).unwrap();
    let out = loadtex(dir, &format!("extract {MANIFEST} --out feats"));
    assert_eq!(out.status.code(), Some(1));
    let err = stderr(&out);
    assert!(err.contains("texture2_001_test.pgm"), "{err}");
    assert!(err.contains("1 of 36 images failed"), "{err}");
    // the other images are still written
    assert!(dir.join("feats/images/texture2_001_train.pgm.lodf").is_file());
}

#[test]
fn fit_is_deterministic_and_validates_first() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    dataset(dir);
    ok(dir, &format!("extract {MANIFEST} --out feats --split split0"));
    for out in ["m1", "m2"] {
        ok(dir, &format!("fit {MANIFEST} --features feats --split split0 --out {out} {SMALL}"));
    }
    for f in ["pca.lpca", "gmm.lgmm"] {
        assert_eq!(fs::read(dir.join("m1").join(f)).unwrap(), fs::read(dir.join("m2").join(f)).unwrap());
    }

    // D larger than the 236-dimensional descriptor
    let out = loadtex(dir, &format!("fit {MANIFEST} --features feats --split split0 --out m3 --pca-dim 300"));
    assert_eq!(out.status.code(), Some(2));
    assert!(!dir.join("m3").exists());

    // features extracted with two scales are smaller than the requested D
    ok(dir, &format!("extract {MANIFEST} --out small --scales 1,3 --split split0"));
    let out = loadtex(dir, &format!("fit {MANIFEST} --features small --split split0 --out m4 --pca-dim 200"));
    assert_eq!(out.status.code(), Some(2), "{}", stderr(&out));
    assert!(stderr(&out).contains("118"));
}

#[test]
fn eval_on_untrained_model_is_a_clean_error() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    dataset(dir);
    let out = loadtex(dir, &format!("eval {MANIFEST} --model never.lsvm --fisher fv --split split0"));
    assert_eq!(out.status.code(), Some(1));
    let err = stderr(&out);
    assert!(err.contains("never.lsvm") && !err.contains("panicked"), "{err}");

    fs::write(dir.join("junk.lsvm"), b"LSVM but not really").unwrap();
    fs::write(dir.join("junk.lsvm.labels"), "a\nb\n").unwrap();
    let out = loadtex(dir, &format!("eval {MANIFEST} --model junk.lsvm --fisher fv --split split0"));
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("junk.lsvm"));
}

#[test]
fn full_eval_uses_the_cache_env() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    dataset(dir);
    let first = ok(dir, &format!("eval {MANIFEST} --report r1 {SMALL}"));
    assert!(first.contains("splits: 2"), "{first}");
    for sub in ["descriptors", "models", "fisher", "classifiers"] {
        assert!(fs::read_dir(dir.join("cache").join(sub)).unwrap().next().is_some(), "{sub}");
    }
    let second = ok(dir, &format!("eval {MANIFEST} --report r2 {SMALL}"));
    assert_eq!(first, second);
    for f in ["report.csv", "confusion.csv", "summary.txt"] {
        assert_eq!(fs::read(dir.join("r1").join(f)).unwrap(), fs::read(dir.join("r2").join(f)).unwrap());
    }
    let lbp = ok(dir, &format!("eval {MANIFEST} --descriptor lbp"));
    assert!(lbp.contains("descriptor: lbp"));
}

#[test]
fn bench_identity_row_is_zero() {
    let tmp = tempfile::tempdir().unwrap();
    let out = ok(tmp.path(), "bench --images 2 --seconds 0 --out bench.csv");
    let rows: Vec<Vec<&str>> = out.lines().skip(1).map(|l| l.split(',').collect()).collect();
    let identity = rows.iter().find(|r| r[..2] == ["adaptive", "identity"]).unwrap();
    assert_eq!(identity[4].parse::<f64>().unwrap(), 0.0);
    assert_eq!(identity[5].parse::<f64>().unwrap(), 0.0);
    let fixed = rows.iter().find(|r| r[..2] == ["fixed", "rot90"]).unwrap();
    assert!(fixed[4].parse::<f64>().unwrap() > 0.1);
    assert_eq!(fs::read_to_string(tmp.path().join("bench.csv")).unwrap(), out);
}

#[test]
fn usage_errors_exit_2() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    for line in [
        "bogus",
        "extract --out x",
        "bench --step 0",
        "bench --profile huge",
        "synth --out d --classes 11",
        "synth --out d --per-class 5 --train-per-class 5",
        "eval --manifest m.txt --model x.lsvm",
    ] {
        assert_eq!(loadtex(dir, line).status.code(), Some(2), "{line}");
    }
    fs::write(dir.join("bad.conf"), "components = many\n").unwrap();
    let out = loadtex(dir, "bench --config bad.conf");
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("bad.conf"));
}

#[test]
fn help_lists_defaults_for_every_subcommand() {
    let tmp = tempfile::tempdir().unwrap();
    for sub in ["synth", "extract", "fit", "encode", "train", "eval", "bench"] {
        let help = ok(tmp.path(), &format!("{sub} --help"));
        for needle in ["--seed", "--threads", "--patch-radius", "[default: 15]", "[default: 1,2,3,4]", "--svm-c"] {
            assert!(help.contains(needle), "{sub} help lacks {needle}");
        }
    }
}
