use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};
use rayon::prelude::*;

use spq::codebook::ProductCodebook;
use spq::dataset::{exact_knn, gen_gaussian, read_id_lists, read_vecs, write_id_lists, write_vecs, GroundTruth};
use spq::eval::{mean_average_precision, recall_at_r, write_csv, MetricRow, RunResult};
use spq::ivf::{rerank_exact, IvfIndex, IvfParams, Rerank, ResidualKind};
use spq::pq::{PqCodebook, PqIndex};
use spq::util::index_bits;
use spq::{peek_magic, ScoredId, SearchStats, SpqIndex, VecsFormat, VectorSet};

use crate::config::{Distance, Method, RunConfig};

pub fn load_vectors(path: &Path) -> Result<VectorSet> {
    let format = VecsFormat::from_path(path)
        .ok_or_else(|| anyhow!("{}: expected a .fvecs, .bvecs or .ivecs file", path.display()))?;
    read_vecs(path, format).with_context(|| format!("reading {}", path.display()))
}

fn save_vectors(path: &Path, vs: &VectorSet) -> Result<()> {
    let format = VecsFormat::from_path(path)
        .ok_or_else(|| anyhow!("{}: expected a .fvecs, .bvecs or .ivecs file", path.display()))?;
    write_vecs(path, format, vs).with_context(|| format!("writing {}", path.display()))
}

pub fn load_groundtruth(path: &Path) -> Result<GroundTruth> {
    let ids = read_id_lists(path).with_context(|| format!("reading {}", path.display()))?;
    let t = ids.iter().map(Vec::len).min().unwrap_or(0);
    Ok(GroundTruth {
        t,
        dists: ids.iter().map(|v| vec![0.0; v.len()]).collect(),
        ids,
    })
}

pub fn gen_data(cfg: &RunConfig, n: usize, d: usize, out: &Path) -> Result<()> {
    let vs = gen_gaussian(n, d, cfg.seed)?;
    save_vectors(out, &vs)?;
    println!("wrote {n} x {d} vectors to {}", out.display());
    Ok(())
}

pub fn groundtruth(gallery: &Path, queries: &Path, t: usize, out: &Path) -> Result<()> {
    let g = load_vectors(gallery)?;
    let q = load_vectors(queries)?;
    let gt = exact_knn(&g, &q, t)?;
    write_id_lists(out, &gt.ids)?;
    println!("wrote {} x {t} neighbour ids to {}", q.n(), out.display());
    Ok(())
}

pub fn ivf_params(cfg: &RunConfig, dims: Vec<usize>) -> IvfParams {
    IvfParams {
        coarse_k: cfg.coarse_k,
        kind: if cfg.method.is_sparse() {
            ResidualKind::Sparse
        } else {
            ResidualKind::Hard
        },
        subspace_dims: dims,
        k: cfg.k,
        sparsity: cfg.sparsity,
        trainer: cfg.trainer(),
        kmeans_iters: cfg.kmeans_iters,
        train_size: cfg.train_size,
    }
}

pub fn train(cfg: &RunConfig, data: &Path, out: &Path) -> Result<()> {
    let all = load_vectors(data)?;
    let dims = cfg.dims(all.d())?;
    let sample = all.sample(cfg.train_size, cfg.seed);
    if sample.n() < cfg.k {
        bail!("training set has {} rows but k = {}", sample.n(), cfg.k);
    }
    let report = match cfg.method {
        Method::Spq => {
            let (pcb, report) = ProductCodebook::train(&sample, &dims, cfg.k, cfg.sparsity, cfg.trainer(), cfg.seed)?;
            pcb.save(out)?;
            report
        }
        Method::Pq => {
            let (cb, report) = PqCodebook::train(&sample, &dims, cfg.k, cfg.kmeans_iters, cfg.seed)?;
            cb.save(out)?;
            report
        }
        Method::Ivfpq | Method::Ivfspq => {
            let mut cfg = cfg.clone();
            cfg.train_size = sample.n();
            let (ivf, report) = IvfIndex::train_with_report(&sample, &ivf_params(&cfg, dims), cfg.seed)?;
            ivf.save(out)?;
            report
        }
    };
    let level = if cfg.method.is_sparse() {
        format!(", L={}", cfg.sparsity)
    } else {
        String::new()
    };
    println!(
        "trained {} on {} rows (m={}, k={}{level})",
        cfg.method.name(),
        sample.n(),
        report.len(),
        cfg.k
    );
    for (i, e) in report.iter().enumerate() {
        println!("subspace {i}: distortion {e:.6}");
    }
    println!("total distortion {:.6}", report.iter().sum::<f64>());
    println!("wrote {}", out.display());
    Ok(())
}

/// An encoded gallery of any kind.
pub enum Model {
    Spq(SpqIndex),
    Pq(PqIndex),
    Ivf(IvfIndex),
}

impl Model {
    pub fn len(&self) -> usize {
        match self {
            Model::Spq(i) => i.len(),
            Model::Pq(i) => i.len(),
            Model::Ivf(i) => i.len(),
        }
    }
}

pub fn encode(cfg: &RunConfig, model: &Path, gallery: &Path, out: &Path) -> Result<()> {
    let bytes = std::fs::read(model).with_context(|| format!("reading {}", model.display()))?;
    let g = load_vectors(gallery)?;
    match peek_magic(&bytes).as_ref() {
        Some(b"SPQB") => match ProductCodebook::from_bytes(&bytes) {
            Ok(pcb) => {
                let idx = SpqIndex::build(&g, pcb, cfg.sparsity)?;
                idx.save(out)?;
                println!("encoded {} vectors with SPQ (L={})", g.n(), cfg.sparsity);
            }
            Err(_) => {
                let cb = PqCodebook::from_bytes(&bytes)?;
                let idx = PqIndex::build(&g, cb)?;
                idx.save_codes(out)?;
                println!("encoded {} vectors with PQ", g.n());
            }
        },
        Some(b"SPQV") => {
            let idx = IvfIndex::from_bytes(&bytes)?.populate(&g)?;
            idx.save(out)?;
            println!("filled inverted file with {} vectors", g.n());
        }
        _ => bail!("{}: not a trained model (expected SPQB or SPQV)", model.display()),
    }
    println!("wrote {}", out.display());
    Ok(())
}

pub fn load_model(index: &Path, codebook: Option<&Path>) -> Result<Model> {
    let bytes = std::fs::read(index).with_context(|| format!("reading {}", index.display()))?;
    Ok(match peek_magic(&bytes).as_ref() {
        Some(b"SPQI") => Model::Spq(SpqIndex::from_bytes(&bytes)?),
        Some(b"SPQV") => Model::Ivf(IvfIndex::from_bytes(&bytes)?),
        Some(b"SPQP") => {
            let cb = codebook.ok_or_else(|| anyhow!("PQ code files need --codebook with the centroids"))?;
            Model::Pq(PqIndex::from_bytes(&bytes, PqCodebook::load(cb)?)?)
        }
        _ => bail!("{}: not an encoded gallery (expected SPQI, SPQP or SPQV)", index.display()),
    })
}

fn search_one(model: &Model, cfg: &RunConfig, q: &[f32], gallery: Option<&VectorSet>, stats: &mut SearchStats) -> Result<Vec<ScoredId>> {
    let keep = cfg.rerank.unwrap_or(cfg.p);
    let hits = match (model, cfg.distance) {
        (Model::Ivf(idx), Distance::Adc) => {
            let rerank = cfg.rerank.map(|candidates| Rerank {
                candidates,
                gallery: gallery.expect("checked by caller"),
            });
            return Ok(idx.search_with_stats(q, cfg.probes, cfg.p, rerank, stats)?);
        }
        (Model::Ivf(_), Distance::Sdc) => bail!("the inverted file supports ADC only"),
        (Model::Spq(idx), Distance::Adc) => idx.adc_search_with_stats(q, keep, stats)?,
        (Model::Spq(idx), Distance::Sdc) => idx.sdc_search_with_stats(q, keep, stats)?,
        (Model::Pq(idx), Distance::Adc) => idx.adc_search_with_stats(q, keep, stats)?,
        (Model::Pq(idx), Distance::Sdc) => idx.sdc_search_with_stats(q, keep, stats)?,
    };
    match (cfg.rerank, gallery) {
        (Some(_), Some(g)) => {
            let t = std::time::Instant::now();
            let out = rerank_exact(q, &hits, g, cfg.p);
            stats.rerank += t.elapsed();
            Ok(out)
        }
        _ => Ok(hits),
    }
}

/// Searches every query (in parallel) and merges the stage timings.
pub fn search_all(model: &Model, cfg: &RunConfig, queries: &VectorSet, gallery: Option<&VectorSet>) -> Result<RunResult> {
    if cfg.rerank.is_some() {
        let g = gallery.ok_or_else(|| anyhow!("re-ranking needs the raw gallery (--gallery)"))?;
        if g.n() != model.len() {
            bail!("gallery has {} rows but the index holds {}", g.n(), model.len());
        }
    }
    let per_query: Vec<(Vec<ScoredId>, SearchStats)> = (0..queries.n())
        .into_par_iter()
        .map(|i| {
            let mut stats = SearchStats::default();
            let hits = search_one(model, cfg, queries.row(i), gallery, &mut stats)?;
            Ok((hits, stats))
        })
        .collect::<Result<_>>()?;
    let mut stats = SearchStats::default();
    let mut results = Vec::with_capacity(per_query.len());
    for (hits, s) in per_query {
        stats.merge(&s);
        results.push(hits);
    }
    Ok(RunResult::from_scored(results, stats))
}

pub fn print_timing(stats: &SearchStats) {
    println!("queries {}", stats.queries);
    println!("stage      ms/query");
    for (name, d) in [
        ("tables", stats.tables),
        ("scan", stats.scan),
        ("select", stats.select),
        ("rerank", stats.rerank),
        ("total", stats.total()),
    ] {
        println!("{name:<10} {:.4}", stats.per_query_ms(d));
    }
    if stats.queries > 0 {
        println!("codes scanned per query {:.1}", stats.codes_scanned as f64 / stats.queries as f64);
    }
}

pub fn search(
    cfg: &RunConfig,
    index: &Path,
    codebook: Option<&Path>,
    queries: &Path,
    gallery: Option<&Path>,
    out: Option<&Path>,
) -> Result<()> {
    let model = load_model(index, codebook)?;
    let q = load_vectors(queries)?;
    let g = gallery.map(load_vectors).transpose()?;
    let run = search_all(&model, cfg, &q, g.as_ref())?;
    print_timing(&run.stats);
    if let Some(out) = out {
        write_id_lists(out, &run.ranked)?;
        println!("wrote ranked lists to {}", out.display());
    }
    Ok(())
}

/// Bit accounting for one method at `m` subspaces: (code bits, index bits, coefficient bytes).
pub fn bit_budget(method: Method, m: usize, k: usize, sparsity: usize) -> (u32, u32, u32) {
    let b = index_bits(k) * m as u32;
    if method.is_sparse() {
        (b, b * sparsity as u32, (m * sparsity * 4) as u32)
    } else {
        (b, b, 0)
    }
}

pub fn eval(cfg: &RunConfig, results: &Path, groundtruth: &Path, csv: Option<&Path>) -> Result<()> {
    let ranked = read_id_lists(results).with_context(|| format!("reading {}", results.display()))?;
    let gt = load_groundtruth(groundtruth)?;
    let run = RunResult {
        ranked,
        stats: SearchStats::default(),
    };
    let (code_bits, index_bits, coeff_bytes) = bit_budget(cfg.method, cfg.m, cfg.k, cfg.sparsity);
    let row = |metric: &str, r: Option<usize>, value: f64| MetricRow {
        method: cfg.method.name().to_string(),
        code_bits,
        index_bits,
        coeff_bytes,
        metric: metric.to_string(),
        r,
        value,
    };
    let mut rows = Vec::new();
    for &r in &cfg.recall_at {
        let v = recall_at_r(&run, &gt, r, cfg.t_eval)?;
        println!("recall@{r} (t_eval={}) {v:.4}", cfg.t_eval);
        rows.push(row("recall", Some(r), v));
    }
    if gt.t >= cfg.map_t_eval {
        let v = mean_average_precision(&run, &gt, cfg.map_t_eval)?;
        println!("mAP (t_eval={}, depth {}) {v:.4}", cfg.map_t_eval, run.depth());
        rows.push(row("map", Some(run.depth()), v));
    } else {
        println!("mAP skipped: ground truth holds {} neighbours, map_t_eval is {}", gt.t, cfg.map_t_eval);
    }
    if let Some(path) = csv {
        let file = std::fs::File::create(path).with_context(|| format!("creating {}", path.display()))?;
        let meta = [
            ("t_eval", cfg.t_eval.to_string()),
            ("map_t_eval", cfg.map_t_eval.to_string()),
            ("results", results.display().to_string()),
        ];
        write_csv(std::io::BufWriter::new(file), &meta, &rows)?;
    }
    Ok(())
}
