//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Runs as a plain binary (`harness = false`) so the lines are always shown.

use std::path::Path;
use std::process::Command;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::function::erf::erfc;

use lqdec::alloc::{brute_force_tables, solve_mckp_tables, storage_report, LoraFormat, MckpOptions, ReportEntry, SweepTable, AllocSolution};
use lqdec::factorize::{factorize, svd_truncated};
use lqdec::quant::{
    codebook, inverse_normal_cdf, pack_bits, quantize_nf, read_quantized, storage_bits_per_param,
    unpack_bits, Bits,
};
use lqdec::tensor_io::{gen_matrix, preset, write_tensor, GenParams, MatrixKind};
use lqdec::{lq_decompose, DenseMatrix, Error, FisherDiag, LowRankFactors, LqOptions, QuantConfig, StopReason, SvdMethod};

type Check = Result<String, String>;
type Criterion = (&'static str, fn() -> Check);

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn cfg(s: &str) -> QuantConfig {
    s.parse().expect("valid config")
}

fn gaussian(rows: usize, cols: usize, seed: u64) -> DenseMatrix {
    gen_matrix(MatrixKind::Gaussian, rows, cols, seed, &GenParams::default()).unwrap()
}

fn frob_diff(a: &DenseMatrix, b: &DMatrix<f64>) -> f64 {
    let mut s = 0.0;
    for i in 0..a.rows() {
        for j in 0..a.cols() {
            let d = a.get(i, j) as f64 - b[(i, j)];
            s += d * d;
        }
    }
    s.sqrt()
}

fn storage_cost() -> Check {
    let nf4 = storage_bits_per_param(&cfg("4,8,fp32,64,256"));
    let nf3 = storage_bits_per_param(&cfg("3,8,fp32,64,256"));
    // 4.126953125 = 2113/512, 3.126953125 = 1601/512
    ensure(nf4 == Bits::new(2113, 512), || format!("NF4 cost {nf4}"))?;
    ensure(nf3 == Bits::new(1601, 512), || format!("NF3 cost {nf3}"))?;
    Ok(format!("NF4 {nf4} = 4.126953125, NF3 {nf3} = 3.126953125"))
}

fn effective_bits() -> Check {
    let uniform = Bits::new(11, 4);
    let mut parts = Vec::new();
    for (name, expected) in [("llama2-7b-linear", 2.95), ("llama2-70b-linear", 2.85)] {
        let entries: Vec<ReportEntry> = preset(name)
            .unwrap()
            .matrices
            .into_iter()
            .map(|m| ReportEntry { label: m.label, rows: m.rows, cols: m.cols, quant_bits: uniform })
            .collect();
        let r = storage_report(&entries, 64, LoraFormat::Nf8.bits_per_param()).map_err(|e| e.to_string())?;
        ensure((r.effective_bits - expected).abs() <= 0.01, || {
            format!("{name}: {} not within 0.01 of {expected}", r.effective_bits)
        })?;
        parts.push(format!("{name} {:.4}", r.effective_bits));
    }
    Ok(parts.join(", "))
}

/// Upper-tail quantile by bisection on `Q(x) = erfc(x/√2)/2`, `t ≤ 1/2`.
fn tail_quantile(t: f64) -> f64 {
    let q = |x: f64| 0.5 * erfc(x / std::f64::consts::SQRT_2);
    let (mut lo, mut hi) = (0.0f64, 40.0f64);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if q(mid) > t {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

fn bisection_quantile(p: f64) -> f64 {
    if p < 0.5 {
        -tail_quantile(p)
    } else {
        tail_quantile(1.0 - p)
    }
}

fn codebooks() -> Check {
    for b in [2u8, 3, 4, 8] {
        let cb = codebook(b).map_err(|e| e.to_string())?;
        let l = cb.levels();
        let n = 1usize << b;
        ensure(l.len() == n, || format!("b={b}: {} levels", l.len()))?;
        ensure(l.windows(2).all(|w| w[0] < w[1]), || format!("b={b}: not increasing"))?;
        ensure(l[0] == -1.0 && l[n / 2 - 1] == 0.0 && l[n - 1] == 1.0, || {
            format!("b={b}: pinned levels {} {} {}", l[0], l[n / 2 - 1], l[n - 1])
        })?;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut worst = 0.0f64;
    for i in 0..10_000 {
        let p = if i % 2 == 0 {
            rng.random_range(1e-9..1.0 - 1e-9)
        } else {
            let t = 10f64.powf(rng.random_range(-12.0..-0.31));
            if rng.random_bool(0.5) { t } else { 1.0 - t }
        };
        let err = (inverse_normal_cdf(p).unwrap() - bisection_quantile(p)).abs();
        worst = worst.max(err);
        ensure(err <= 1e-9, || format!("p={p}: error {err:e}"))?;
    }
    Ok(format!("b in {{2,3,4,8}} pinned and increasing; max quantile error {worst:.2e}"))
}

fn round_trips() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for bits in [2u8, 3, 4, 8] {
        for _ in 0..1000 {
            let n = rng.random_range(0..300);
            let codes: Vec<u8> = (0..n).map(|_| rng.random_range(0..(1u32 << bits)) as u8).collect();
            let packed = pack_bits(&codes, bits).map_err(|e| e.to_string())?;
            ensure(packed.len() == (n * bits as usize).div_ceil(8), || format!("packed length {}", packed.len()))?;
            let back = unpack_bits(&packed, bits, n).map_err(|e| e.to_string())?;
            ensure(back == codes, || format!("b={bits}: unpack differs"))?;
        }
    }

    let grid_cfgs = ["4,8,fp32,64,256", "3,8,fp16,64,256", "2,4,bf16,32,16", "8,8,fp32,64,256"];
    for (s, c) in grid_cfgs.iter().enumerate() {
        let c = cfg(c);
        let params = GenParams { config: Some(c), ..Default::default() };
        let w = gen_matrix(MatrixKind::OnGrid, 48, 80, s as u64, &params).map_err(|e| e.to_string())?;
        let back = quantize_nf(&w, &c).map_err(|e| e.to_string())?.dequantize();
        ensure(back == w, || format!("on-grid fixture for {c} does not reconstruct exactly"))?;
    }

    let c = cfg("3,8,fp32,64,256");
    for seed in 0..50u64 {
        let w = gaussian(32 + (seed as usize % 5) * 7, 40 + seed as usize % 9, 100 + seed);
        let q = quantize_nf(&w, &c).map_err(|e| e.to_string())?;
        let q2 = quantize_nf(&q.dequantize(), &c).map_err(|e| e.to_string())?;
        ensure(q.to_bytes() == q2.to_bytes(), || format!("seed {seed}: requantization changed bytes"))?;
    }
    Ok("4000 pack/unpack vectors, 4 on-grid fixtures, 50 idempotent requantizations".into())
}

fn lq_beats_quantization() -> Check {
    let c = cfg("3,8,fp32,64,256");
    let mut ratios = Vec::new();
    for seed in 0..20u64 {
        let w = gaussian(512, 512, seed);
        let q_only = w.sub(&quantize_nf(&w, &c).unwrap().dequantize()).unwrap().frobenius_norm();
        let opts = LqOptions { seed, ..Default::default() };
        let r = lq_decompose(&w, None, &c, 64, &opts).map_err(|e| e.to_string())?;
        ensure(r.error() < q_only, || format!("seed {seed}: LQ {} vs quantize-only {q_only}", r.error()))?;
        let monotone_len = match r.stop_reason {
            StopReason::ErrorIncreased => r.error_trace.len() - 1,
            _ => r.error_trace.len(),
        };
        ensure(r.error_trace[..monotone_len].windows(2).all(|w| w[1] <= w[0]), || {
            format!("seed {seed}: trace {:?}", r.error_trace)
        })?;
        ratios.push(r.error() / q_only);
    }
    let worst = ratios.iter().copied().fold(0.0, f64::max);
    Ok(format!("20/20 seeds, worst LQ/quantize-only error ratio {worst:.4}"))
}

fn rank_monotonicity() -> Check {
    let c = cfg("3,8,fp32,64,256");
    let mut lines = Vec::new();
    for seed in 0..5u64 {
        let w = gaussian(256, 256, 500 + seed);
        let opts = LqOptions { seed, ..Default::default() };
        let errs: Vec<f64> = [32, 64, 128]
            .iter()
            .map(|&r| lq_decompose(&w, None, &c, r, &opts).map(|x| x.error()))
            .collect::<Result<_, _>>()
            .map_err(|e| e.to_string())?;
        ensure(errs[2] <= errs[1] && errs[1] <= errs[0], || format!("fixture {seed}: errors {errs:?}"))?;
        lines.push(format!("{:.2}/{:.2}/{:.2}", errs[0], errs[1], errs[2]));
    }
    Ok(format!("5/5 fixtures, errors r=32/64/128: {}", lines.join(", ")))
}

fn mckp_exactness() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let (mut matched, mut infeasible) = (0, 0);
    for trial in 0..200 {
        let n = rng.random_range(1..=8);
        let c = rng.random_range(1..=6);
        let integer = trial % 3 == 0;
        let mut draw = |lo: f64, hi: f64| {
            let v: f64 = rng.random_range(lo..hi);
            if integer { v.floor() } else { v }
        };
        let e: Vec<Vec<f64>> = (0..n).map(|_| (0..c).map(|_| draw(0.0, 1000.0)).collect()).collect();
        let s: Vec<Vec<f64>> = (0..n).map(|_| (0..c).map(|_| draw(1.0, 100.0)).collect()).collect();
        let lo: f64 = s.iter().map(|r| r.iter().copied().fold(f64::INFINITY, f64::min)).sum();
        let hi: f64 = s.iter().map(|r| r.iter().copied().fold(0.0, f64::max)).sum();
        let budget = if trial % 10 == 9 {
            lo * rng.random_range(0.5..0.999)
        } else {
            lo + (hi - lo) * rng.random_range(0.0..1.1)
        };
        let bf = brute_force_tables(&e, &s, budget);
        let sol = solve_mckp_tables(&e, &s, budget, &MckpOptions::default());
        match (bf, sol) {
            (Ok(bf), Ok(sol)) => {
                ensure(sol.optimal && sol.total_storage_bits <= budget, || format!("trial {trial}: {sol:?}"))?;
                ensure(sol.total_error == bf.total_error, || {
                    format!("trial {trial}: {} vs brute force {}", sol.total_error, bf.total_error)
                })?;
                matched += 1;
            }
            (Err(Error::Infeasible { .. }), Err(Error::Infeasible { .. })) => {
                ensure(budget < lo, || format!("trial {trial}: infeasible at budget {budget} >= {lo}"))?;
                infeasible += 1;
            }
            (a, b) => return Err(format!("trial {trial}: brute force {a:?}, solver {b:?}")),
        }
    }
    Ok(format!("200/200 instances agree ({matched} optimal, {infeasible} infeasible)"))
}

fn weighted_error_by_hand(a: &DenseMatrix, f: &FisherDiag, l: &LowRankFactors) -> f64 {
    let p = l.product();
    let mut s = 0.0;
    for i in 0..a.rows() {
        for j in 0..a.cols() {
            let d = a.get(i, j) as f64 - p[(i, j)];
            s += f.matrix().get(i, j) as f64 * d * d;
        }
    }
    s.sqrt()
}

fn weighted_optimality() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut worst = 0.0f64;
    for t in 0..50u64 {
        let d = rng.random_range(6..40);
        let k = rng.random_range(6..40);
        let r = rng.random_range(1..=d.min(k) / 2);
        let a = gaussian(d, k, 1000 + t);
        // Dyadic factors keep every product exact in f32.
        let row: Vec<f64> = (0..d).map(|_| rng.random_range(4..=64) as f64 / 16.0).collect();
        let col: Vec<f64> = (0..k).map(|_| rng.random_range(4..=64) as f64 / 16.0).collect();
        let f = FisherDiag::new(DenseMatrix::from_fn(d, k, |i, j| (row[i] * col[j]) as f32)).unwrap();
        let l = factorize(&a, Some(&f), r, SvdMethod::Exact, t).map_err(|e| e.to_string())?;
        let got = weighted_error_by_hand(&a, &f, &l);

        let dr = DVector::from_iterator(d, row.iter().map(|v| v.sqrt()));
        let dc = DVector::from_iterator(k, col.iter().map(|v| v.sqrt()));
        let scaled = DMatrix::from_diagonal(&dr) * a.to_nalgebra() * DMatrix::from_diagonal(&dc);
        let mut sv: Vec<f64> = scaled.singular_values().iter().copied().collect();
        sv.sort_by(|x, y| y.total_cmp(x));
        let optimum = sv[r..].iter().map(|s| s * s).sum::<f64>().sqrt();
        let rel = (got - optimum).abs() / optimum;
        worst = worst.max(rel);
        ensure(rel <= 1e-7, || format!("triple {t} ({d}x{k}, r={r}): {got} vs optimum {optimum}"))?;
    }
    let mut worst_unit = 0.0f64;
    for t in 0..10u64 {
        let a = gaussian(24, 30, 2000 + t);
        let ones = FisherDiag::new(DenseMatrix::from_fn(24, 30, |_, _| 1.0)).unwrap();
        let weighted = factorize(&a, Some(&ones), 5, SvdMethod::Exact, t).unwrap();
        let plain = factorize(&a, None, 5, SvdMethod::Exact, t).unwrap();
        let ew = weighted_error_by_hand(&a, &ones, &weighted);
        let ep = frob_diff(&a, &plain.product());
        let rel = (ew - ep).abs() / ep;
        worst_unit = worst_unit.max(rel);
        ensure(rel <= 1e-9, || format!("unit Fisher {t}: {ew} vs {ep}"))?;
    }
    Ok(format!("50/50 separable triples (worst rel gap {worst:.1e}); unit Fisher worst gap {worst_unit:.1e}"))
}

fn randomized_svd() -> Check {
    let mut worst = 0.0f64;
    for seed in 0..3u64 {
        let w = gen_matrix(MatrixKind::DecayingSpectrum, 256, 256, seed, &GenParams { rho: 0.9, ..Default::default() }).unwrap();
        for r in [8, 16, 32] {
            let exact = frob_diff(&w, &svd_truncated(&w, r, SvdMethod::Exact, seed).unwrap().product());
            let approx = frob_diff(&w, &svd_truncated(&w, r, SvdMethod::randomized(), seed).unwrap().product());
            worst = worst.max(approx / exact);
            ensure(approx <= 1.05 * exact, || format!("seed {seed} r={r}: {approx} vs exact {exact}"))?;
        }
    }
    Ok(format!("9/9 cases, worst randomized/exact error ratio {worst:.6}"))
}

fn run_cli(args: &[&str]) -> Result<(), String> {
    let out = Command::new(env!("CARGO_BIN_EXE_lqdec"))
        .args(args)
        .output()
        .map_err(|e| e.to_string())?;
    if !out.status.success() {
        return Err(format!("lqdec {args:?} failed: {}", String::from_utf8_lossy(&out.stderr)));
    }
    Ok(())
}

fn end_to_end() -> Check {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let p = |name: &str| dir.path().join(name).display().to_string();
    let mut matrices = Vec::new();
    for i in 0..3u64 {
        let w = gaussian(128, 128, 40 + i);
        write_tensor(p(&format!("w{i}.lqt")), &w).unwrap();
        matrices.push(w);
    }
    let grid = r#"[[2,8,"fp32",64,256],[3,8,"fp32",64,256],[4,8,"fp32",64,256],
                   [2,8,"fp32",32,256],[3,8,"fp32",32,256],[4,8,"bf16",32,64]]"#;
    std::fs::write(p("grid.json"), grid).unwrap();
    let out_dir = p("init");
    let (w0, w1, w2, g) = (p("w0.lqt"), p("w1.lqt"), p("w2.lqt"), p("grid.json"));
    run_cli(&[
        "init", "--in", &w0, &w1, &w2, "--grid", &g, "--budget", "3.0", "--rank", "16", "--seed", "5",
        "--out-dir", &out_dir,
    ])?;
    let out = Path::new(&out_dir);
    let table = SweepTable::load(out.join("table.json")).map_err(|e| e.to_string())?;
    let sol: AllocSolution = AllocSolution::load(out.join("solution.json")).map_err(|e| e.to_string())?;
    let budget = 3.0 * 3.0 * 16384.0;
    ensure(sol.optimal && sol.total_storage_bits <= budget, || format!("solution {sol:?}"))?;
    let bf = brute_force_tables(&table.errors, &table.storage_bits, budget).map_err(|e| e.to_string())?;
    ensure(bf.total_error == sol.total_error, || format!("{} vs brute force {}", sol.total_error, bf.total_error))?;
    for (i, w) in matrices.iter().enumerate() {
        let c = sol.assignment[i];
        let q = read_quantized(out.join(format!("matrix{i}.q.lqq"))).map_err(|e| e.to_string())?;
        ensure(q.config() == &table.configs[c], || format!("matrix {i}: wrong config {}", q.config()))?;
        let f = LowRankFactors::read(out.join(format!("matrix{i}.l1.lqt")), out.join(format!("matrix{i}.l2.lqt")))
            .map_err(|e| e.to_string())?;
        let recon = q.dequantize().to_nalgebra() + f.product();
        let err2 = frob_diff(w, &recon).powi(2);
        let rel = (err2 - table.errors[i][c]).abs() / table.errors[i][c];
        ensure(rel <= 1e-6, || format!("matrix {i}: recomputed {err2} vs table {}", table.errors[i][c]))?;
    }
    let chosen: Vec<String> = sol.assignment.iter().map(|&c| table.configs[c].to_string()).collect();
    Ok(format!("optimal assignment [{}] at {} of {budget} bits", chosen.join("; "), sol.total_storage_bits))
}

fn main() {
    let criteria: [Criterion; 10] = [
        ("storage cost per parameter", storage_cost),
        ("effective bits over model presets", effective_bits),
        ("codebook invariants and inverse normal CDF", codebooks),
        ("quantization round trips", round_trips),
        ("LQ beats quantize-only", lq_beats_quantization),
        ("error decreases with rank", rank_monotonicity),
        ("knapsack solver matches brute force", mckp_exactness),
        ("weighted factorization optimality", weighted_optimality),
        ("randomized SVD quality", randomized_svd),
        ("end-to-end budgeted initialization", end_to_end),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = std::panic::catch_unwind(check).unwrap_or_else(|_| Err("panicked".into()));
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS {:>2} {name}: {detail} ({secs:.2}s)", i + 1),
            Err(detail) => {
                failed += 1;
                println!("FAIL {:>2} {name}: {detail} ({secs:.2}s)", i + 1);
            }
        }
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
