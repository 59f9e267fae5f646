use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use faust_core::io::{write_dense, write_faust};
use faust_core::{synthetic, DenseMatrix, FaustOperator};

fn faust(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_faust"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn field(line: &str, key: &str) -> f64 {
    line.split_whitespace()
        .find_map(|t| t.strip_prefix(&format!("{key}=")))
        .unwrap_or_else(|| panic!("no {key} in `{line}`"))
        .parse()
        .unwrap()
}

fn gaussian_mtx(dir: &Path, name: &str, rows: usize, cols: usize, seed: u64) -> PathBuf {
    let path = dir.join(name);
    let a = synthetic::gaussian_matrix(rows, cols, &mut synthetic::rng(seed));
    write_dense(&path, &a).unwrap();
    path
}

/// `λ S_1 ⋯ S_J x` straight from the JSON triplets.
fn json_apply(json: &str, x: &[f64]) -> Vec<f64> {
    let doc: serde_json::Value = serde_json::from_str(json).unwrap();
    let scale = doc["scale"].as_f64().unwrap();
    let mut v = x.to_vec();
    for f in doc["factors"].as_array().unwrap().iter().rev() {
        let mut out = vec![0.0; f["rows"].as_u64().unwrap() as usize];
        for t in f["triplets"].as_array().unwrap() {
            let (i, j, a) = (t[0].as_u64().unwrap() as usize, t[1].as_u64().unwrap() as usize, t[2].as_f64().unwrap());
            out[i] += a * v[j];
        }
        v = out;
    }
    v.iter().map(|y| scale * y).collect()
}

fn read_numbers(path: &Path) -> Vec<f64> {
    fs::read_to_string(path)
        .unwrap()
        .split_whitespace()
        .map(|t| t.parse().unwrap())
        .collect()
}

fn write_numbers(path: &Path, v: &[f64]) {
    let text: Vec<String> = v.iter().map(|x| format!("{x:e}")).collect();
    fs::write(path, text.join("\n")).unwrap();
}

#[test]
fn hadamard_demo_reports_butterfly_complexity() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("h.json");
    let trace = dir.path().join("trace.csv");
    let o = faust(&["factorize", "--demo", "hadamard", "--n", "32", "-o", p(&out), "--trace", p(&trace)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let line = stdout(&o);
    assert_eq!(field(&line, "RC"), 0.3125);
    assert_eq!(field(&line, "s_tot"), 320.0);
    assert_eq!(field(&line, "J"), 5.0);
    assert!(field(&line, "RE").is_finite());
    let csv = fs::read_to_string(&trace).unwrap();
    assert!(csv.starts_with("stage,iteration,objective,lambda,nnz"));
    assert!(csv.contains("level4/global"));
}

#[test]
fn one_by_one_input_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("one.mtx");
    write_dense(&path, &DenseMatrix::from_vec(1, 1, vec![3.0]).unwrap()).unwrap();
    let o = faust(&["factorize", "-i", p(&path), "--factors", "2"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("matrix too small"));
}

#[test]
fn factorize_then_apply_matches_stored_product() {
    let dir = tempfile::tempdir().unwrap();
    let a = gaussian_mtx(dir.path(), "a.mtx", 12, 18, 1);
    let f = dir.path().join("a.json");
    let o = faust(&["factorize", "-i", p(&a), "--factors", "3", "--k", "3", "--s", "30", "-P", "144", "--iters", "20", "-o", p(&f)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let json = fs::read_to_string(&f).unwrap();

    let x: Vec<f64> = (0..18).map(|i| (i as f64 * 0.7).sin()).collect();
    let (xin, yout) = (dir.path().join("x.txt"), dir.path().join("y.txt"));
    write_numbers(&xin, &x);
    let o = faust(&["apply", "--faust", p(&f), "-i", p(&xin), "-o", p(&yout)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let got = read_numbers(&yout);
    let want = json_apply(&json, &x);
    assert_eq!(got.len(), 12);
    let scale = want.iter().map(|v| v * v).sum::<f64>().sqrt();
    assert!(got.iter().zip(&want).all(|(g, w)| (g - w).abs() <= 1e-12 * scale));

    // Transpose: ⟨F x, y⟩ = ⟨x, Fᵀ y⟩.
    let y: Vec<f64> = (0..12).map(|i| (i as f64 * 1.3).cos()).collect();
    write_numbers(&xin, &y);
    let o = faust(&["apply", "--faust", p(&f), "-i", p(&xin), "-o", p(&yout), "--transpose"]);
    assert!(o.status.success());
    let fty = read_numbers(&yout);
    let lhs: f64 = want.iter().zip(&y).map(|(a, b)| a * b).sum();
    let rhs: f64 = x.iter().zip(&fty).map(|(a, b)| a * b).sum();
    assert!((lhs - rhs).abs() <= 1e-10 * lhs.abs().max(1.0));
}

#[test]
fn identity_faust_echoes_input_and_counts_flops() {
    let dir = tempfile::tempdir().unwrap();
    let f = dir.path().join("id.json");
    write_faust(&f, &FaustOperator::identity(6, 3)).unwrap();
    let (xin, yout) = (dir.path().join("x.txt"), dir.path().join("y.txt"));
    let x = [1.5, -2.0, 0.0, 4.25, 1e-3, 7.0];
    write_numbers(&xin, &x);
    let o = faust(&["apply", "--faust", p(&f), "-i", p(&xin), "-o", p(&yout), "--count-flops"]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(read_numbers(&yout), x);
    let line = stdout(&o);
    assert!(field(&line, "flops") <= 2.0 * 18.0 + 6.0);
    assert_eq!(field(&line, "bound"), 42.0);
}

#[test]
fn svd_baseline_rank_sweep() {
    let dir = tempfile::tempdir().unwrap();
    let a = gaussian_mtx(dir.path(), "a.mtx", 10, 14, 2);
    let csv = dir.path().join("svd.csv");
    let o = faust(&["svd-baseline", "-i", p(&a), "--ranks", "1,2,3,5,8,10", "-o", p(&csv)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let rows: Vec<(usize, f64, usize)> = fs::read_to_string(&csv)
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| {
            let c: Vec<&str> = l.split(',').collect();
            (c[0].parse().unwrap(), c[1].parse().unwrap(), c[2].parse().unwrap())
        })
        .collect();
    assert_eq!(rows.len(), 6);
    assert!(rows.windows(2).all(|w| w[1].1 <= w[0].1 + 1e-12));
    assert!(rows.iter().all(|&(r, _, params)| params == r * (10 + 14 + 1)));
    assert!(rows.last().unwrap().1 < 1e-10);

    // Rank-one input is exact at r = 1.
    let u = synthetic::gaussian_vector(7, &mut synthetic::rng(3));
    let v = synthetic::gaussian_vector(9, &mut synthetic::rng(4));
    let path = dir.path().join("r1.mtx");
    write_dense(&path, &DenseMatrix::from_fn(7, 9, |i, j| u[i] * v[j])).unwrap();
    let o = faust(&["svd-baseline", "-i", p(&path), "--ranks", "1"]);
    let re: f64 = stdout(&o).lines().nth(1).unwrap().split(',').nth(1).unwrap().parse().unwrap();
    assert!(re < 1e-10, "{re}");

    let o = faust(&["svd-baseline", "-i", p(&path), "--ranks", "8"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn runs_are_deterministic_given_seed() {
    let dir = tempfile::tempdir().unwrap();
    let a = gaussian_mtx(dir.path(), "a.mtx", 10, 16, 5);
    let run = |name: &str, seed: &str| {
        let out = dir.path().join(name);
        let o = faust(&["factorize", "-i", p(&a), "--factors", "3", "--k", "3", "--iters", "15", "--seed", seed, "-o", p(&out)]);
        assert!(o.status.success(), "{}", stderr(&o));
        fs::read(out).unwrap()
    };
    assert_eq!(run("x.json", "7"), run("y.json", "7"));

    let loc = |name: &str| {
        let out = dir.path().join(name);
        let o = faust(&["localize", "--dims", "8,16,32", "--nnz", "40,64", "--trials", "30", "--seed", "4", "-o", p(&out)]);
        assert!(o.status.success(), "{}", stderr(&o));
        fs::read(out).unwrap()
    };
    assert_eq!(loc("l1.csv"), loc("l2.csv"));
}

#[test]
fn config_file_matches_flags() {
    let dir = tempfile::tempdir().unwrap();
    let a = gaussian_mtx(dir.path(), "a.mtx", 10, 16, 6);
    let cfg = dir.path().join("plan.toml");
    fs::write(&cfg, format!("input = \"{}\"\nlevels = [\"sp:60;spcol:3\", \"sp:30;sp:25\"]\niters = 10\n", p(&a))).unwrap();
    let (x, y) = (dir.path().join("x.json"), dir.path().join("y.json"));
    let o1 = faust(&["factorize", "--config", p(&cfg), "-o", p(&x)]);
    assert!(o1.status.success(), "{}", stderr(&o1));
    let o2 = faust(&["factorize", "-i", p(&a), "--level", "sp:60;spcol:3", "--level", "sp:30;sp:25", "--iters", "10", "-o", p(&y)]);
    assert!(o2.status.success(), "{}", stderr(&o2));
    assert_eq!(fs::read(&x).unwrap(), fs::read(&y).unwrap());

    fs::write(&cfg, "factorz = 3\n").unwrap();
    let o = faust(&["factorize", "-i", p(&a), "--config", p(&cfg)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("factorz"));
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let a = gaussian_mtx(dir.path(), "a.mtx", 6, 6, 7);
    let o = faust(&["factorize", "-i", p(&a), "--level", "bogus:3;sp:4"]);
    assert_eq!(o.status.code(), Some(2));
    let o = faust(&["factorize", "-i", p(&a)]);
    assert_eq!(o.status.code(), Some(2));
    let o = faust(&["factorize", "-i", p(&dir.path().join("missing.mtx")), "--factors", "2"]);
    assert_eq!(o.status.code(), Some(2));

    // Entries this large overflow the objective.
    let big = dir.path().join("big.mtx");
    write_dense(&big, &DenseMatrix::from_vec(2, 2, vec![1e200, -3e200, 2e200, 5e200]).unwrap()).unwrap();
    let o = faust(&["factorize", "-i", p(&big), "--factors", "2", "--k", "1", "--s", "2"]);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
    assert!(stderr(&o).contains("numerical failure"));
}

#[test]
fn localize_reports_every_operator() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("loc.csv");
    let o = faust(&[
        "localize", "--dims", "16,32,64", "--nnz", "96,128", "--trials", "40", "--approx-k", "6", "--zero-baseline", "-o", p(&out),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = fs::read_to_string(&out).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("trial,operator,truth,recovered,overlap,distance"));
    let rows: Vec<Vec<&str>> = lines.map(|l| l.split(',').collect()).collect();
    assert_eq!(rows.len(), 4 * 40);
    let recovered = |label: &str| rows.iter().filter(|r| r[1] == label).map(|r| r[3]).collect::<Vec<_>>();
    assert_eq!(recovered("dense"), recovered("exact"));
    // Empty when both planted columns of M are zero, so that y = 0.
    assert!(recovered("zero").iter().all(|r| *r == "0;1" || r.is_empty()));
    let text = stdout(&o);
    assert!(text.contains("approx-k6: mean_overlap="));

    let o = faust(&["localize", "--dims", "16", "--nnz", "4", "-o", p(&out)]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn denoise_writes_image_and_report() {
    let dir = tempfile::tempdir().unwrap();
    let img = dir.path().join("clean.pgm");
    faust_core::image::write_pgm(&img, &synthetic::test_image(64)).unwrap();
    let (out, report, dict) = (dir.path().join("out.pgm"), dir.path().join("r.csv"), dir.path().join("d.json"));
    let o = faust(&[
        "denoise", "-i", p(&img), "--sigma", "25", "-o", p(&out), "--report", p(&report), "--dictionary", p(&dict),
        "--training", "1500", "--atoms", "64", "--ksvd-iters", "8", "--palm-iters", "8", "-J", "3", "--s", "128", "-P", "2048",
        "--seed", "2",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = fs::read_to_string(&report).unwrap();
    let row: Vec<&str> = csv.lines().nth(1).unwrap().split(',').collect();
    let (p_in, p_out): (f64, f64) = (row[1].parse().unwrap(), row[2].parse().unwrap());
    assert!(p_out > p_in + 2.0, "{p_in} -> {p_out}");
    let back = faust_core::image::read_pgm(&out).unwrap();
    assert_eq!(back.shape(), (64, 64));
    let d = faust_core::io::read_faust(&dict).unwrap();
    assert_eq!((d.rows(), d.cols()), (64, 64));
    // Atomic writes leave no temporaries behind.
    assert!(fs::read_dir(dir.path()).unwrap().all(|e| !e.unwrap().file_name().to_string_lossy().contains(".tmp")));
}
