use std::fs::{self, File};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::manifest::{sidecar, write_json, ManifestBuilder};
use super::*;
use crate::alloc::{
    entries_from_solution, lq_lora_init, parse_decimal_bits, solve_mckp_tables, storage_report,
    sweep_with_progress, AllocSolution, MckpOptions, ReportEntry, SweepOptions, SweepTable,
};
use crate::alloc::ConfigGrid;
use crate::error::Result;
use crate::lq::{lq_decompose, LqReport};
use crate::quant::{
    exact_container_bytes, matmul_dense_reference, matmul_dequant, quantize_nf, read_quantized,
    storage_bits_per_param, write_quantized,
};
use crate::tensor_io::{
    gen_fisher as gen_fisher_matrix, gen_matrix as gen_dense, preset, read_fisher, read_tensor,
    write_tensor, DenseMatrix, FisherDiag, GenParams,
};
use crate::LowRankFactors;

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn print_json(value: &impl Serialize) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(value)?);
    Ok(())
}

fn read_matrices(paths: &[PathBuf]) -> Result<Vec<DenseMatrix>> {
    paths.iter().map(read_tensor).collect()
}

fn read_fishers(paths: &[PathBuf], inputs: &[PathBuf]) -> Result<Option<Vec<FisherDiag>>> {
    if paths.is_empty() {
        return Ok(None);
    }
    if paths.len() != inputs.len() {
        return Err(Error::arg(format!(
            "--fisher: {} files given for {} inputs",
            paths.len(),
            inputs.len()
        )));
    }
    paths.iter().map(read_fisher).collect::<Result<Vec<_>>>().map(Some)
}

pub fn gen_matrix(a: GenMatrixArgs) -> Result<()> {
    let params = GenParams {
        rank: a.rank,
        rho: a.rho,
        config: a.config,
    };
    let m = gen_dense(a.kind, a.rows, a.cols, a.seed, &params)?;
    write_tensor(&a.out, &m)?;
    let mut mb = ManifestBuilder::new("gen matrix")
        .seed(a.seed)
        .option("kind", format!("{:?}", a.kind))
        .option("rows", a.rows)
        .option("cols", a.cols)
        .option("rho", a.rho);
    if let Some(r) = a.rank {
        mb = mb.rank(r);
    }
    if let Some(c) = a.config {
        mb = mb.config(c);
    }
    mb.output(&a.out);
    mb.finish(&sidecar(&a.out))?;
    Ok(())
}

pub fn gen_fisher(a: GenFisherArgs) -> Result<()> {
    let f = gen_fisher_matrix(a.kind, a.rows, a.cols, a.seed)?;
    write_tensor(&a.out, f.matrix())?;
    let mut mb = ManifestBuilder::new("gen fisher")
        .seed(a.seed)
        .option("kind", format!("{:?}", a.kind))
        .option("rows", a.rows)
        .option("cols", a.cols);
    mb.output(&a.out);
    mb.finish(&sidecar(&a.out))?;
    Ok(())
}

pub fn gen_preset(a: GenPresetArgs) -> Result<()> {
    let p = preset(&a.name)?;
    let doc = json!({
        "name": p.name,
        "total_params": p.total_params(),
        "matrices": p.matrices,
    });
    match &a.out {
        Some(out) => {
            write_json(out, &doc)?;
            let mut mb = ManifestBuilder::new("gen preset").option("name", &a.name);
            mb.output(out);
            mb.finish(&sidecar(out))?;
        }
        None => print_json(&doc)?,
    }
    Ok(())
}

pub fn quantize(a: QuantizeArgs) -> Result<()> {
    let w = read_tensor(&a.input)?;
    let q = quantize_nf(&w, &a.config)?;
    write_quantized(&a.out, &q)?;
    let bits = storage_bits_per_param(&a.config);
    let bytes = exact_container_bytes(w.rows(), w.cols(), &a.config);
    let summary = json!({
        "rows": w.rows(),
        "cols": w.cols(),
        "config": a.config.to_string(),
        "bits_per_param": *bits.numer() as f64 / *bits.denom() as f64,
        "bits_per_param_exact": bits.to_string(),
        "bytes": {
            "header": bytes.header,
            "codes": bytes.codes,
            "scale_codes": bytes.scale_codes,
            "group_scales": bytes.group_scales,
            "total": bytes.total(),
        },
    });
    print_json(&summary)?;
    let mut mb = ManifestBuilder::new("quantize")
        .inputs([&a.input])
        .config(a.config)
        .option("summary", &summary);
    mb.output(&a.out);
    mb.finish(&sidecar(&a.out))?;
    Ok(())
}

pub fn dequantize(a: DequantizeArgs) -> Result<()> {
    let q = read_quantized(&a.input)?;
    write_tensor(&a.out, &q.dequantize())?;
    let mut mb = ManifestBuilder::new("dequantize")
        .inputs([&a.input])
        .config(q.config());
    mb.output(&a.out);
    mb.finish(&sidecar(&a.out))?;
    Ok(())
}

fn lq_manifest(command: &str, lq: &LqArgs) -> ManifestBuilder {
    ManifestBuilder::new(command)
        .rank(lq.rank)
        .seed(lq.seed)
        .option("method", lq.method.name())
        .option("max_iters", lq.max_iters)
        .option("init", format!("{:?}", lq.init).to_lowercase())
}

fn write_decomposition(dir: &Path, stem: &str, q: &crate::QuantizedMatrix, f: &LowRankFactors, mb: &mut ManifestBuilder) -> Result<()> {
    let qp = dir.join(format!("{stem}q.lqq"));
    let l1 = dir.join(format!("{stem}l1.lqt"));
    let l2 = dir.join(format!("{stem}l2.lqt"));
    write_quantized(&qp, q)?;
    f.write(&l1, &l2)?;
    for p in [&qp, &l1, &l2] {
        mb.output(p);
    }
    Ok(())
}

pub fn decompose(a: DecomposeArgs) -> Result<()> {
    let w = read_tensor(&a.input)?;
    let fisher = a.fisher.as_ref().map(read_fisher).transpose()?;
    let opts = a.lq.options();
    let result = lq_decompose(&w, fisher.as_ref(), &a.config, a.lq.rank, &opts)?;
    create_dir(&a.out_dir)?;
    let mut mb = lq_manifest("decompose", &a.lq)
        .inputs(std::iter::once(&a.input).chain(a.fisher.as_ref()))
        .config(a.config);
    write_decomposition(&a.out_dir, "", &result.q, &result.factors, &mut mb)?;
    let report = LqReport::new(&result, a.lq.rank, &opts, fisher.is_some());
    let rp = a.out_dir.join("report.json");
    write_json(&rp, &report)?;
    mb.output(&rp);
    mb.finish(&a.out_dir.join("manifest.json"))?;
    println!(
        "final error {:.6e} at iteration {} ({:?})",
        report.final_error,
        report.chosen_iteration + 1,
        report.stop_reason
    );
    Ok(())
}

/// FNV-1a digest, used to tell whether a resumed sweep still sees the same inputs.
fn digest_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    Ok(format!("{h:016x}"))
}

#[derive(Debug, Serialize, Deserialize)]
struct PartialRow {
    index: usize,
    /// Digest of the matrix (and Fisher diagonal) the row was computed from.
    digest: String,
    errors: Vec<f64>,
}

fn partial_path(out: &Path) -> PathBuf {
    let mut name = out.as_os_str().to_owned();
    name.push(".partial");
    PathBuf::from(name)
}

/// Rows recorded by an earlier run with the same settings whose inputs are
/// unchanged. Reading stops at the first unreadable line, such as a torn
/// final write.
fn load_partial(path: &Path, key: &Value, digests: &[String]) -> Vec<Option<Vec<f64>>> {
    let mut done = vec![None; digests.len()];
    let Ok(file) = File::open(path) else {
        return done;
    };
    let mut lines = BufReader::new(file).lines();
    let stored: Option<Value> = lines
        .next()
        .and_then(|l| l.ok())
        .and_then(|l| serde_json::from_str(&l).ok());
    if stored.as_ref() != Some(key) {
        eprintln!("lqdec: ignoring {} (it belongs to a different sweep)", path.display());
        return done;
    }
    for line in lines.map_while(|l| l.ok()) {
        match serde_json::from_str::<PartialRow>(&line) {
            Ok(row) => {
                if digests.get(row.index) == Some(&row.digest) {
                    done[row.index] = Some(row.errors);
                }
            }
            Err(_) => break,
        }
    }
    done
}

pub fn sweep(a: SweepArgs) -> Result<()> {
    let matrices = read_matrices(&a.inputs)?;
    let fishers = read_fishers(&a.fisher, &a.inputs)?;
    let grid = ConfigGrid::from_arg(&a.grid)?;
    let opts = SweepOptions {
        lq: a.lq.options(),
        workers: a.workers,
    };

    let mut digests = Vec::with_capacity(a.inputs.len());
    for (i, p) in a.inputs.iter().enumerate() {
        let mut d = digest_file(p)?;
        if let Some(f) = a.fisher.get(i) {
            d.push('+');
            d.push_str(&digest_file(f)?);
        }
        digests.push(d);
    }
    let key = json!({
        "configs": grid.configs(),
        "rank": a.lq.rank,
        "method": a.lq.method.name(),
        "seed": a.lq.seed,
        "max_iters": a.lq.max_iters,
        "init": format!("{:?}", a.lq.init),
        "fisher_weighted": fishers.is_some(),
    });
    let partial = partial_path(&a.out);
    let done = load_partial(&partial, &key, &digests);
    let resumed = done.iter().filter(|r| r.is_some()).count();
    if resumed > 0 {
        eprintln!("lqdec: resuming sweep with {resumed} of {} matrices done", matrices.len());
    }
    // Rewrite the log with only the rows still valid, then append new ones.
    let mut log = File::create(&partial).map_err(|e| Error::io(&partial, e))?;
    let record = |log: &mut File, index: usize, errors: &[f64]| -> Result<()> {
        let line = serde_json::to_string(&PartialRow {
            index,
            digest: digests[index].clone(),
            errors: errors.to_vec(),
        })?;
        writeln!(log, "{line}")
            .and_then(|_| log.flush())
            .map_err(|e| Error::io(&partial, e))
    };
    writeln!(log, "{key}").map_err(|e| Error::io(&partial, e))?;
    for (i, row) in done.iter().enumerate() {
        if let Some(errors) = row {
            record(&mut log, i, errors)?;
        }
    }

    let table = sweep_with_progress(
        &matrices,
        fishers.as_deref(),
        &grid,
        a.lq.rank,
        &opts,
        &done,
        |index, errors| {
            record(&mut log, index, errors)?;
            eprintln!("lqdec: matrix {} of {} done", index + 1, matrices.len());
            Ok(())
        },
    )?;
    write_json(&a.out, &table)?;
    drop(log);
    fs::remove_file(&partial).map_err(|e| Error::io(&partial, e))?;

    let mut mb = lq_manifest("sweep", &a.lq)
        .inputs(a.inputs.iter().chain(&a.fisher))
        .grid(&a.grid)
        .option("workers", a.workers)
        .option("resumed_rows", resumed);
    mb.output(&a.out);
    mb.finish(&sidecar(&a.out))?;
    Ok(())
}

fn budget_bits(bits_per_param: f64, total_params: u64) -> Result<f64> {
    if !bits_per_param.is_finite() || bits_per_param <= 0.0 {
        return Err(Error::arg(format!("--budget must be positive, got {bits_per_param}")));
    }
    Ok(bits_per_param * total_params as f64)
}

pub fn allocate(a: AllocateArgs) -> Result<()> {
    let table = SweepTable::load(&a.table)?;
    let budget = budget_bits(a.budget, table.total_params())?;
    let defaults = MckpOptions::default();
    let opts = MckpOptions {
        dominance_pruning: !a.no_dominance_pruning,
        node_limit: a.node_limit.unwrap_or(defaults.node_limit),
    };
    let sol = solve_mckp_tables(&table.errors, &table.storage_bits, budget, &opts)?;
    write_json(&a.out, &sol)?;
    println!(
        "total error {:.6e}, storage {} of {} bits, optimal {}",
        sol.total_error, sol.total_storage_bits, sol.budget_bits, sol.optimal
    );
    let mut mb = ManifestBuilder::new("allocate")
        .inputs([&a.table])
        .budget(a.budget)
        .option("dominance_pruning", opts.dominance_pruning)
        .option("node_limit", opts.node_limit);
    mb.output(&a.out);
    mb.finish(&sidecar(&a.out))?;
    Ok(())
}

pub fn init(a: InitArgs) -> Result<()> {
    let matrices = read_matrices(&a.inputs)?;
    let fishers = read_fishers(&a.fisher, &a.inputs)?;
    let grid = ConfigGrid::from_arg(&a.grid)?;
    let opts = SweepOptions {
        lq: a.lq.options(),
        workers: a.workers,
    };
    let total: u64 = matrices.iter().map(|m| m.len() as u64).sum();
    budget_bits(a.budget, total)?;
    let out = lq_lora_init(&matrices, fishers.as_deref(), &grid, a.lq.rank, a.budget, &opts)?;

    create_dir(&a.out_dir)?;
    let mut mb = lq_manifest("init", &a.lq)
        .inputs(a.inputs.iter().chain(&a.fisher))
        .grid(&a.grid)
        .budget(a.budget)
        .option("workers", a.workers);
    let table_path = a.out_dir.join("table.json");
    write_json(&table_path, &out.table)?;
    mb.output(&table_path);
    let sol_path = a.out_dir.join("solution.json");
    write_json(&sol_path, &out.solution)?;
    mb.output(&sol_path);
    let mut reports = Vec::with_capacity(out.results.len());
    for (i, r) in out.results.iter().enumerate() {
        write_decomposition(&a.out_dir, &format!("matrix{i}."), &r.q, &r.factors, &mut mb)?;
        reports.push(LqReport::new(
            r,
            a.lq.rank,
            &crate::alloc::matrix_lq_options(&opts.lq, i),
            fishers.is_some(),
        ));
    }
    let rp = a.out_dir.join("reports.json");
    write_json(&rp, &reports)?;
    mb.output(&rp);
    mb.finish(&a.out_dir.join("manifest.json"))?;
    for (i, &c) in out.solution.assignment.iter().enumerate() {
        println!("matrix{i}: {}", out.table.configs[c]);
    }
    println!(
        "total error {:.6e}, storage {} of {} bits, optimal {}",
        out.solution.total_error,
        out.solution.total_storage_bits,
        out.solution.budget_bits,
        out.solution.optimal
    );
    Ok(())
}

pub fn report(a: ReportArgs) -> Result<()> {
    let mut mb = ManifestBuilder::new("report")
        .rank(a.rank)
        .option("lora_format", a.lora_format);
    let entries: Vec<ReportEntry> = match (&a.preset, &a.table, &a.solution) {
        (Some(name), None, None) => {
            let text = a
                .uniform_bits
                .as_deref()
                .ok_or_else(|| Error::arg("--preset needs --uniform-bits"))?;
            let bits = parse_decimal_bits(text)?;
            mb = mb.option("preset", name).option("uniform_bits", text);
            preset(name)?
                .matrices
                .into_iter()
                .map(|m| ReportEntry {
                    label: m.label,
                    rows: m.rows,
                    cols: m.cols,
                    quant_bits: bits,
                })
                .collect()
        }
        (None, Some(t), Some(s)) => {
            let table = SweepTable::load(t)?;
            let sol = AllocSolution::load(s)?;
            mb = mb.inputs([t, s]);
            entries_from_solution(&sol, &table)?
        }
        _ => {
            return Err(Error::arg(
                "give either --preset with --uniform-bits, or --table with --solution",
            ))
        }
    };
    let report = storage_report(&entries, a.rank, a.lora_format.bits_per_param())?;
    println!("{report}");
    if let Some(out) = &a.out {
        write_json(out, &report)?;
        mb.output(out);
        mb.finish(&sidecar(out))?;
    }
    Ok(())
}

#[derive(Debug, Serialize)]
struct BenchRow {
    batch: usize,
    fused_seconds: f64,
    dense_seconds: f64,
    rel_error: f64,
}

fn best_time<T>(reps: usize, mut f: impl FnMut() -> Result<T>) -> Result<(f64, T)> {
    let mut best = f64::INFINITY;
    let mut last = None;
    for _ in 0..reps.max(1) {
        let t = Instant::now();
        let v = f()?;
        best = best.min(t.elapsed().as_secs_f64());
        last = Some(v);
    }
    Ok((best, last.expect("at least one repetition")))
}

/// Largest relative Frobenius gap tolerated between the two paths.
const BENCH_TOLERANCE: f64 = 1e-5;

pub fn bench(a: BenchArgs) -> Result<()> {
    use crate::tensor_io::MatrixKind;

    if a.batch.is_empty() || a.batch.contains(&0) {
        return Err(Error::arg("--batch needs positive sizes"));
    }
    let p = GenParams::default();
    let w = gen_dense(MatrixKind::Gaussian, a.rows, a.cols, a.seed, &p)?;
    let q = quantize_nf(&w, &a.config)?;
    let factors = if a.rank > 0 {
        let l1 = gen_dense(MatrixKind::Gaussian, a.rows, a.rank, a.seed.wrapping_add(1), &p)?;
        let l2 = gen_dense(MatrixKind::Gaussian, a.rank, a.cols, a.seed.wrapping_add(2), &p)?;
        Some(LowRankFactors::new(l1, l2)?)
    } else {
        None
    };

    let mut rows = Vec::with_capacity(a.batch.len());
    for (i, &n) in a.batch.iter().enumerate() {
        let x = gen_dense(MatrixKind::Gaussian, n, a.rows, a.seed.wrapping_add(100 + i as u64), &p)?;
        let (fused_seconds, fused) = best_time(a.reps, || matmul_dequant(&x, &q, factors.as_ref()))?;
        let (dense_seconds, dense) = best_time(a.reps, || matmul_dense_reference(&x, &q, factors.as_ref()))?;
        let rel_error = (fused.to_nalgebra() - &dense).norm() / dense.norm().max(f64::MIN_POSITIVE);
        if rel_error.is_nan() || rel_error > BENCH_TOLERANCE {
            return Err(Error::Numerical(format!(
                "batch {n}: fused and dense results differ by {rel_error:e} (relative)"
            )));
        }
        eprintln!("lqdec: batch {n}: fused {fused_seconds:.4}s, dense {dense_seconds:.4}s");
        rows.push(BenchRow {
            batch: n,
            fused_seconds,
            dense_seconds,
            rel_error,
        });
    }
    let doc = json!({
        "rows": a.rows,
        "cols": a.cols,
        "config": a.config.to_string(),
        "rank": a.rank,
        "reps": a.reps,
        "results": rows,
    });
    write_json(&a.out, &doc)?;
    let mut mb = ManifestBuilder::new("bench")
        .config(a.config)
        .rank(a.rank)
        .seed(a.seed)
        .option("rows", a.rows)
        .option("cols", a.cols)
        .option("batch", &a.batch)
        .option("reps", a.reps);
    mb.output(&a.out);
    mb.finish(&sidecar(&a.out))?;
    Ok(())
}
