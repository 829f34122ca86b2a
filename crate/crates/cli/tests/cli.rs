use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use pofin_core::cert::{Body, CertFile};
use pofin_core::numeric::PosValue;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use tempfile::TempDir;

fn pofin(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pofin"))
        .args(args)
        .env_remove("POFIN_PREC_CAP")
        .output()
        .expect("spawn")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn text(o: &Output) -> String {
    format!(
        "{}{}",
        String::from_utf8_lossy(&o.stdout),
        String::from_utf8_lossy(&o.stderr)
    )
}

fn path(dir: &TempDir, name: &str) -> PathBuf {
    dir.path().join(name)
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn certify(dir: &TempDir, name: &str, args: &[&str]) -> PathBuf {
    let out = path(dir, name);
    let mut all = args.to_vec();
    all.extend(["--out", s(&out)]);
    let o = pofin(&all);
    assert_eq!(code(&o), 0, "{}", text(&o));
    out
}

#[test]
fn build_examples() {
    let d = TempDir::new().unwrap();
    let f = path(&d, "spec.json");
    let o = pofin(&[
        "build", "--alpha", "1", "--set", "periodic:/10", "--scale", "pow2", "--delta", "1/2",
        "--out", s(&f),
    ]);
    assert_eq!(code(&o), 0, "{}", text(&o));
    let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&f).unwrap()).unwrap();
    assert_eq!(v["schema_version"], 1);
    assert_eq!(v["content_sha256"].as_str().unwrap().len(), 64);

    let o = pofin(&["build", "--eta", "0/1,1/2"]);
    assert_eq!(code(&o), 0, "{}", text(&o));
    assert!(text(&o).contains("\"eta\""));

    let o = pofin(&["build", "--set", "periodic:/"]);
    assert_eq!(code(&o), 4);
    assert!(text(&o).contains("10"), "{}", text(&o));
}

#[test]
fn certify_examples() {
    let d = TempDir::new().unwrap();
    let r = certify(
        &d,
        "r.json",
        &["--depth", "1024", "certify", "reduce", "--u", "periodic:/10", "--v", "periodic:/1"],
    );
    let f = CertFile::parse(&std::fs::read_to_string(&r).unwrap()).unwrap();
    assert_eq!(f.body.kind(), "reduce");

    let o = pofin(&["certify", "reduce", "--u", "periodic:/1", "--v", "periodic:/10"]);
    assert_eq!(code(&o), 2);
    assert!(text(&o).contains("NegativeDifference"), "{}", text(&o));

    let w = certify(
        &d,
        "w.json",
        &["--levels", "8", "certify", "incomparable", "--u", "periodic:/10", "--v", "periodic:/01"],
    );
    let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&w).unwrap()).unwrap();
    assert_eq!(v["body"]["forward"]["levels"], 8);
    assert_eq!(v["body"]["backward"]["levels"], 8);
}

#[test]
fn deterministic_files() {
    let d = TempDir::new().unwrap();
    let args = ["--depth", "128", "certify", "reduce", "--u", "periodic:/10", "--v", "periodic:/1"];
    let a = std::fs::read(certify(&d, "a.json", &args)).unwrap();
    let b = std::fs::read(certify(&d, "b.json", &args)).unwrap();
    assert_eq!(a, b);
}

#[test]
fn check_round_trip_and_tamper() {
    let d = TempDir::new().unwrap();
    let k = certify(&d, "k.json", &["--depth", "64", "certify", "kappa"]);
    assert_eq!(code(&pofin(&["check", s(&k)])), 0);

    // one kappa entry doubled, with and without fixing the hashes
    let mut f = CertFile::parse(&std::fs::read_to_string(&k).unwrap()).unwrap();
    let Body::Kappa { cert } = &mut f.body else { unreachable!() };
    cert.kappa[3] = cert.kappa[3].mul(&PosValue::ratio(2, 1));
    let stale = path(&d, "stale.json");
    std::fs::write(&stale, f.to_json()).unwrap();
    let o = pofin(&["check", s(&stale)]);
    assert_eq!(code(&o), 2);
    assert!(text(&o).contains("BodyHashMismatch"));
    f.rehash();
    let fresh = path(&d, "fresh.json");
    std::fs::write(&fresh, f.to_json()).unwrap();
    assert_eq!(code(&pofin(&["check", s(&fresh)])), 2);

    let full = std::fs::read_to_string(&k).unwrap();
    let cut = path(&d, "cut.json");
    std::fs::write(&cut, &full[..full.len() / 2]).unwrap();
    let o = pofin(&["check", s(&cut)]);
    assert_eq!(code(&o), 4);
    assert!(text(&o).to_lowercase().contains("schema"), "{}", text(&o));
}

#[test]
fn digit_mutations_fail() {
    let d = TempDir::new().unwrap();
    let mut files = vec![
        certify(&d, "k.json", &["--depth", "32", "certify", "kappa"]),
        certify(
            &d,
            "r.json",
            &["--depth", "64", "certify", "reduce", "--u", "periodic:/10", "--v", "periodic:/1"],
        ),
        certify(
            &d,
            "w.json",
            &["--levels", "4", "certify", "incomparable", "--u", "periodic:/10", "--v", "periodic:/01"],
        ),
    ];
    let mut r = rand_chacha::ChaCha8Rng::seed_from_u64(0);
    for f in files.drain(..) {
        assert_eq!(code(&pofin(&["check", s(&f)])), 0);
        let orig = std::fs::read(&f).unwrap();
        // schema_version is a format error, not a verification failure
        let skip = String::from_utf8_lossy(&orig).find("\"schema_version\": 1").unwrap() + 18;
        let digits: Vec<usize> = (0..orig.len())
            .filter(|&i| orig[i].is_ascii_digit() && i != skip)
            .collect();
        for &i in digits.choose_multiple(&mut r, 15) {
            let mut m = orig.clone();
            // never introduces a leading zero
            m[i] = b'1' + (m[i] - b'0') % 9;
            let p = path(&d, "m.json");
            std::fs::write(&p, &m).unwrap();
            let o = pofin(&["check", s(&p)]);
            assert_eq!(code(&o), 2, "byte {i} of {}: {}", f.display(), text(&o));
        }
    }
}

#[test]
fn witness_report_rows() {
    let d = TempDir::new().unwrap();
    let w = certify(
        &d,
        "w.json",
        &["certify", "incomparable", "--u", "periodic:/10", "--v", "periodic:/01"],
    );
    let o = pofin(&["report", s(&w), "--csv"]);
    assert_eq!(code(&o), 0);
    let mut rd = csv::Reader::from_reader(&o.stdout[..]);
    assert_eq!(
        rd.headers().unwrap().iter().collect::<Vec<_>>(),
        ["chain", "l", "log2_ratio", "log2_bound"]
    );
    let mut rows = 0;
    for rec in rd.records() {
        let rec = rec.unwrap();
        let ratio: f64 = rec[2].parse().unwrap();
        let bound: f64 = rec[3].parse().unwrap();
        assert!(ratio <= bound, "{rec:?}");
        rows += 1;
    }
    assert_eq!(rows, 16);

    let e = certify(
        &d,
        "e.json",
        &["--levels", "0", "certify", "incomparable", "--u", "periodic:/10", "--v", "periodic:/01"],
    );
    let o = pofin(&["report", s(&e), "--csv"]);
    assert_eq!(String::from_utf8_lossy(&o.stdout), "chain,l,log2_ratio,log2_bound\n");
}

#[test]
fn pair_report_columns() {
    let d = TempDir::new().unwrap();
    let q = certify(
        &d,
        "q.json",
        &["--depth", "64", "certify", "equal", "--u", "periodic:11/10", "--v", "periodic:/10"],
    );
    let o = pofin(&["report", s(&q), "--csv"]);
    let mut rd = csv::Reader::from_reader(&o.stdout[..]);
    assert_eq!(
        rd.headers().unwrap().iter().collect::<Vec<_>>(),
        ["n", "log2_f_u", "log2_f_v", "log2_ratio"]
    );
    assert_eq!(rd.records().count(), 65);
}

#[test]
fn usage_errors() {
    for args in [
        &["--depth", "8", "tower", "p", "2"][..],
        &["--prec", "32", "tower", "p", "2"],
        &["certify", "nonsense"],
        &["frobnicate"],
        &["check", "/nonexistent/file.json"],
    ] {
        assert_eq!(code(&pofin(args)), 4, "{args:?}");
    }
    assert_eq!(code(&pofin(&["--help"])), 0);
    let o = Command::new(env!("CARGO_BIN_EXE_pofin"))
        .args(["--prec", "512", "tower", "p", "2"])
        .env("POFIN_PREC_CAP", "256")
        .output()
        .unwrap();
    assert_eq!(code(&o), 4);
}

#[test]
fn other_verbs() {
    let o = pofin(&["--depth", "64", "classify", "--u", "periodic:/10", "--v", "periodic:/1"]);
    assert_eq!(code(&o), 0, "{}", text(&o));
    assert!(text(&o).contains("right_reduces"));

    let o = pofin(&["--levels", "4", "witness", "--u", "periodic:/10", "--v", "periodic:/01"]);
    assert_eq!(code(&o), 0, "{}", text(&o));

    let o = pofin(&["--levels", "4", "antichain", "--count", "4", "--tree-depth", "16"]);
    assert_eq!(code(&o), 0, "{}", text(&o));
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["pairs"].as_array().unwrap().len(), 6);

    let o = pofin(&["eta", "--eta", "1/2", "--m-max", "5", "--csv"]);
    assert_eq!(code(&o), 0, "{}", text(&o));

    let o = pofin(&["--depth", "64", "sandwich", "--eta", "0", "--eta2", "1/2"]);
    assert_eq!(code(&o), 0, "{}", text(&o));
    assert!(text(&o).contains("3/4"));

    let o = pofin(&["tower", "s", "3", "16"]);
    assert_eq!(code(&o), 0, "{}", text(&o));
}
