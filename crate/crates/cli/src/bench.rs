use std::path::Path;
use std::time::Instant;

use anyhow::{bail, Context, Result};

use spq::codebook::ProductCodebook;
use spq::dataset::{exact_knn, gen_gaussian, GroundTruth, VectorSet};
use spq::eval::{dataset_distortion, mean_average_precision, recall_at_r, write_csv, Encoder, MetricRow};
use spq::ivf::IvfIndex;
use spq::pq::{PqCodebook, PqIndex};
use spq::util::{index_bits, mix_seed};
use spq::SpqIndex;

use crate::commands::{bit_budget, ivf_params, load_groundtruth, load_vectors, search_all, Model};
use crate::config::{Distance, Method, RunConfig};

struct Data {
    gallery: VectorSet,
    queries: VectorSet,
    train: VectorSet,
    gt: GroundTruth,
    source: String,
}

fn load_data(cfg: &RunConfig, t: usize) -> Result<Data> {
    let (gallery, queries, source) = match (&cfg.gallery, &cfg.queries) {
        (Some(g), Some(q)) => (load_vectors(g)?, load_vectors(q)?, g.display().to_string()),
        (None, None) => {
            let s = &cfg.synth;
            (
                gen_gaussian(s.n, s.d, mix_seed(cfg.seed, 100))?,
                gen_gaussian(s.queries, s.d, mix_seed(cfg.seed, 101))?,
                format!("gaussian n={} queries={} d={}", s.n, s.queries, s.d),
            )
        }
        _ => bail!("set both gallery and queries, or neither to use synthetic data"),
    };
    let train = match &cfg.train {
        Some(p) => load_vectors(p)?,
        None => gallery.clone(),
    }
    .sample(cfg.train_size, cfg.seed);
    let gt = match &cfg.groundtruth {
        Some(p) => load_groundtruth(p)?,
        None => exact_knn(&gallery, &queries, t)?,
    };
    if gt.t < t {
        bail!("ground truth holds {} neighbours per query, need {t}", gt.t);
    }
    Ok(Data {
        gallery,
        queries,
        train,
        gt,
        source,
    })
}

/// Trains and encodes one method at `m` subspaces; returns the model and its
/// mean distortion on the gallery.
fn build(cfg: &RunConfig, method: Method, m: usize, data: &Data) -> Result<(Model, f64)> {
    let cfg = RunConfig {
        m,
        subspace_dims: None,
        method,
        ..cfg.clone()
    };
    let dims = cfg.dims(data.gallery.d())?;
    let seed = mix_seed(cfg.seed, m as u64);
    Ok(match method {
        Method::Pq => {
            let (cb, _) = PqCodebook::train(&data.train, &dims, cfg.k, cfg.kmeans_iters, seed)?;
            let e = dataset_distortion(&data.gallery, Encoder::Pq(&cb))?;
            (Model::Pq(PqIndex::build(&data.gallery, cb)?), e)
        }
        Method::Spq => {
            let (pcb, _) = ProductCodebook::train(&data.train, &dims, cfg.k, cfg.sparsity, cfg.trainer(), seed)?;
            let e = dataset_distortion(
                &data.gallery,
                Encoder::Spq {
                    codebook: &pcb,
                    sparsity: cfg.sparsity,
                },
            )?;
            (Model::Spq(SpqIndex::build(&data.gallery, pcb, cfg.sparsity)?), e)
        }
        Method::Ivfpq | Method::Ivfspq => {
            let idx = IvfIndex::train(&data.train, &ivf_params(&cfg, dims), seed)?.populate(&data.gallery)?;
            let e = idx.distortion(&data.gallery)?;
            (Model::Ivf(idx), e)
        }
    })
}

pub fn run(cfg: &RunConfig, out: &Path) -> Result<()> {
    let depth = cfg.recall_at.iter().copied().max().unwrap_or(1).max(cfg.p);
    let data = load_data(cfg, cfg.t_eval.max(cfg.map_t_eval))?;
    let per_id = index_bits(cfg.k) as usize;
    let mut rows = Vec::new();
    for &bits in &cfg.bits {
        if bits % per_id != 0 {
            bail!("{bits} bits is not a multiple of log2(k) = {per_id}");
        }
        let m = bits / per_id;
        for &method in &cfg.methods {
            let start = Instant::now();
            let (model, distortion) = build(cfg, method, m, &data)
                .with_context(|| format!("{} at {bits} bits", method.name()))?;
            let run_cfg = RunConfig {
                method,
                p: depth,
                rerank: None,
                // the inverted file scores with ADC only
                distance: if method.is_ivf() { Distance::Adc } else { cfg.distance },
                ..cfg.clone()
            };
            let run = search_all(&model, &run_cfg, &data.queries, None)?;
            let (code_bits, index_bits, coeff_bytes) = bit_budget(method, m, cfg.k, cfg.sparsity);
            let row = |metric: &str, r: Option<usize>, value: f64| MetricRow {
                method: method.name().to_string(),
                code_bits,
                index_bits,
                coeff_bytes,
                metric: metric.to_string(),
                r,
                value,
            };
            for &r in &cfg.recall_at {
                let r = r.min(run.depth());
                rows.push(row("recall", Some(r), recall_at_r(&run, &data.gt, r, cfg.t_eval)?));
            }
            let map = mean_average_precision(&run, &data.gt, cfg.map_t_eval)?;
            rows.push(row("map", Some(run.depth()), map));
            rows.push(row("distortion", None, distortion));
            rows.push(row("search_ms", None, run.stats.per_query_ms(run.stats.total())));
            println!(
                "{:<7} {bits:>4} bits  distortion {distortion:.4}  mAP {map:.4}  {:.1}s",
                method.name(),
                start.elapsed().as_secs_f64()
            );
        }
    }
    let meta = [
        ("data", data.source.clone()),
        ("seed", cfg.seed.to_string()),
        ("k", cfg.k.to_string()),
        ("sparsity", cfg.sparsity.to_string()),
        ("distance", format!("{:?}", cfg.distance).to_lowercase()),
        ("trainer", format!("{:?}", cfg.trainer).to_lowercase()),
        ("coarse_k", cfg.coarse_k.to_string()),
        ("probes", cfg.probes.to_string()),
        ("t_eval", cfg.t_eval.to_string()),
        ("map_t_eval", cfg.map_t_eval.to_string()),
        ("map_depth", depth.to_string()),
        ("code_bits", "m*log2(k)".to_string()),
    ];
    let file = std::fs::File::create(out).with_context(|| format!("creating {}", out.display()))?;
    write_csv(std::io::BufWriter::new(file), &meta, &rows)?;
    println!("wrote {} rows to {}", rows.len(), out.display());
    Ok(())
}
