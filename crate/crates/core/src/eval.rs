//! Test-set error, neighbor-count sweeps and the experiment families built on
//! them (per history length, NMF ablation, short-history augmentation and
//! mixed-length pools).
//!
//! Predictions run in parallel per entity; every aggregate is summed
//! sequentially in entity-key order, so results do not depend on the thread
//! count.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;
use std::path::PathBuf;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::domain::{Dataset, EntityKey, Trip};
use crate::error::{Error, Result};
use crate::ingest::{self, GroupPolicy, RawRecord};
use crate::metrics::{seuc, MetricVariant};
use crate::nmf::{self, FactorizationCache, NmfParams};
use crate::predict::{pool_trips, predict_from_list, representative_trip};
use crate::selection::{neighbor_set, Splits};
use crate::synth::{self, SynthParams};

/// Mean `seuc(prediction, test trip)` over `subset` (all entities when
/// `None`), summed in key order.
pub fn mse(
    predictions: &BTreeMap<EntityKey, Trip>,
    dataset: &Dataset,
    subset: Option<&[EntityKey]>,
) -> Result<f64> {
    let keys: Vec<&EntityKey> = match subset {
        Some(s) => {
            let set: BTreeSet<&EntityKey> = s.iter().collect();
            set.into_iter().collect()
        }
        None => dataset.keys().collect(),
    };
    if keys.is_empty() {
        return Err(Error::EmptyEvaluation);
    }
    let mut sum = 0.0;
    for key in &keys {
        let test = dataset
            .get(key)
            .and_then(|e| e.test_trip())
            .ok_or_else(|| Error::EvaluationIncomplete {
                key: (*key).clone(),
                reason: "no test trip",
            })?;
        let pred = predictions
            .get(*key)
            .ok_or_else(|| Error::EvaluationIncomplete {
                key: (*key).clone(),
                reason: "no prediction",
            })?;
        sum += seuc(pred, test)?;
    }
    Ok(sum / keys.len() as f64)
}

/// Latent-feature preprocessing applied before neighbor selection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NmfSettings {
    pub params: NmfParams,
    pub min_shift: bool,
    pub cache_dir: Option<PathBuf>,
}

impl NmfSettings {
    pub fn new(params: NmfParams) -> Self {
        Self {
            params,
            min_shift: false,
            cache_dir: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    pub experiment_id: String,
    pub variant: MetricVariant,
    /// History length, or lengths joined with `+` for mixed pools.
    pub l_label: String,
    pub nmf_rank: Option<usize>,
    /// Space in which neighbors and medoids are computed. Errors are always
    /// measured in degrees against the original test trips.
    pub feature_space: String,
    pub sources: Vec<String>,
    pub n_dataset_entities: usize,
    pub n_eval_entities: usize,
    /// Candidate comparisons skipped because the metric was undefined.
    pub skipped_candidates: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub k: usize,
    pub n_entities: usize,
    pub mean_used_k: f64,
    pub mse: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSummary {
    pub self_only_mse: f64,
    pub nearest_neighbor_mse: Option<f64>,
    /// Smallest k with minimal test error. Selected on the test set.
    pub oracle_k: usize,
    pub oracle_mse: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub config: SweepConfig,
    pub curve: Vec<CurvePoint>,
    pub summary: SweepSummary,
}

impl SweepResult {
    fn from_curve(config: SweepConfig, curve: Vec<CurvePoint>) -> Self {
        let mut oracle = (curve[0].k, curve[0].mse);
        for p in &curve[1..] {
            if p.mse < oracle.1 {
                oracle = (p.k, p.mse);
            }
        }
        let summary = SweepSummary {
            self_only_mse: curve[0].mse,
            nearest_neighbor_mse: curve.get(1).map(|p| p.mse),
            oracle_k: oracle.0,
            oracle_mse: oracle.1,
        };
        Self {
            config,
            curve,
            summary,
        }
    }

    pub fn with_id(mut self, id: impl Into<String>) -> Self {
        self.config.experiment_id = id.into();
        self
    }
}

fn l_label(dataset: &Dataset) -> String {
    let ls: Vec<String> = dataset
        .meta()
        .history_lengths
        .iter()
        .map(|l| l.to_string())
        .collect();
    ls.join("+")
}

/// Evaluation keys: explicit subset, else the dataset's designated subset,
/// else every entity. Each must exist and carry a test trip.
fn eval_keys(dataset: &Dataset, subset: Option<&[EntityKey]>) -> Result<Vec<EntityKey>> {
    let keys: Vec<EntityKey> = match subset.or(dataset.meta().eval_subset.as_deref()) {
        Some(s) => s
            .iter()
            .cloned()
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect(),
        None => dataset.keys().cloned().collect(),
    };
    if keys.is_empty() {
        return Err(Error::EmptyEvaluation);
    }
    for key in &keys {
        match dataset.get(key) {
            None => return Err(Error::UnknownEntity(key.clone())),
            Some(e) if e.test_trip().is_none() => {
                return Err(Error::EvaluationIncomplete {
                    key: key.clone(),
                    reason: "no test trip",
                })
            }
            Some(_) => {}
        }
    }
    Ok(keys)
}

struct EntityRun {
    key: EntityKey,
    /// Prediction (in degrees) and realized neighbor count for k = 0..=k_max.
    per_k: Vec<(Trip, usize)>,
    skipped: usize,
}

/// Sweeps the neighbor count `k = 0..=k_max`. Row 0 is the self-only
/// baseline and row 1 the nearest-neighbor baseline; the summary also
/// reports the test-optimal k.
pub fn sweep_neighbors(
    dataset: &Dataset,
    variant: MetricVariant,
    k_max: usize,
    nmf: Option<&NmfSettings>,
    subset: Option<&[EntityKey]>,
) -> Result<SweepResult> {
    let keys = eval_keys(dataset, subset)?;
    if variant == MetricVariant::Ordered {
        let lens: BTreeSet<usize> = keys
            .iter()
            .map(|k| dataset.get(k).expect("checked").len())
            .collect();
        if lens.len() > 1 {
            return Err(Error::InvalidExperiment(format!(
                "ordered variant needs one history length among evaluated entities, got {lens:?}"
            )));
        }
    }

    let embedded = match nmf {
        None => None,
        Some(cfg) => {
            let x = nmf::build_feature_matrix(dataset, cfg.min_shift)?;
            let fact = match &cfg.cache_dir {
                Some(dir) => FactorizationCache::new(dir).load_or_compute(&x, &cfg.params)?,
                None => nmf::nmf_factorize(&x, &cfg.params)?,
            };
            tracing::info!(
                rank = cfg.params.rank,
                iterations = fact.objective_trace.len() - 1,
                error = fact.final_error(),
                "factorized trip features"
            );
            Some(nmf::embedded_splits(dataset, &nmf::embed_trips(&fact, &x))?)
        }
    };
    let raw_splits;
    let splits = match &embedded {
        Some(e) => &e.splits,
        None => {
            raw_splits = Splits::from_dataset(dataset)?;
            &raw_splits
        }
    };
    let to_degrees = |t: Trip| -> Trip {
        match &embedded {
            Some(e) => e
                .original(&t)
                .cloned()
                .expect("latent trip comes from the pool"),
            None => t,
        }
    };

    let runs: Vec<EntityRun> = keys
        .par_iter()
        .map(|key| {
            let run = || -> Result<EntityRun> {
                let list = neighbor_set(key, splits, variant)?;
                let mut per_k: Vec<(Trip, usize)> = Vec::with_capacity(k_max + 1);
                for k in 0..=k_max {
                    if k > list.n_others() {
                        let capped = per_k[list.n_others()].clone();
                        per_k.push(capped);
                        continue;
                    }
                    let (trip, used) = predict_from_list(&list, k, splits)?;
                    per_k.push((to_degrees(trip), used));
                }
                Ok(EntityRun {
                    key: key.clone(),
                    per_k,
                    skipped: list.skipped,
                })
            };
            run().map_err(|e| e.for_entity(key))
        })
        .collect::<Result<Vec<_>>>()?;

    let n = runs.len();
    let mut curve = Vec::with_capacity(k_max + 1);
    for k in 0..=k_max {
        let predictions: BTreeMap<EntityKey, Trip> = runs
            .iter()
            .map(|r| (r.key.clone(), r.per_k[k].0.clone()))
            .collect();
        let used_sum: usize = runs.iter().map(|r| r.per_k[k].1).sum();
        curve.push(CurvePoint {
            k,
            n_entities: n,
            mean_used_k: used_sum as f64 / n as f64,
            mse: mse(&predictions, dataset, Some(&keys))?,
        });
    }

    let skipped_candidates = runs.iter().map(|r| r.skipped).sum();
    if skipped_candidates > 0 {
        tracing::warn!(
            skipped_candidates,
            %variant,
            "candidates skipped: metric undefined for their history lengths"
        );
    }
    let config = SweepConfig {
        experiment_id: "sweep".into(),
        variant,
        l_label: l_label(dataset),
        nmf_rank: nmf.map(|c| c.params.rank),
        feature_space: match nmf {
            Some(c) => format!("nmf-r{}", c.params.rank),
            None => "degrees".into(),
        },
        sources: dataset.meta().sources.clone(),
        n_dataset_entities: dataset.len(),
        n_eval_entities: n,
        skipped_candidates,
    };
    Ok(SweepResult::from_curve(config, curve))
}

/// Self-only predictions computed without neighbor selection: the medoid of
/// each entity's own pooled history.
pub fn self_only_predictions(
    dataset: &Dataset,
    subset: Option<&[EntityKey]>,
) -> Result<BTreeMap<EntityKey, Trip>> {
    let keys = eval_keys(dataset, subset)?;
    let splits = Splits::from_dataset(dataset)?;
    keys.into_iter()
        .map(|k| {
            let pool = pool_trips(std::slice::from_ref(&k), &splits)?;
            Ok((k, representative_trip(&pool)?))
        })
        .collect()
}

/// Produces datasets for the experiment families.
#[derive(Debug, Clone)]
pub enum DataSource {
    /// Ingested validation records, grouped per requested history length.
    Records {
        records: Vec<RawRecord>,
        policy: GroupPolicy,
        /// Cap on entities per history length (seeded subsample).
        max_entities: Option<usize>,
        seed: u64,
    },
    /// Synthetic population; `l_counts` in the params is replaced per call,
    /// with the count taken from its first entry when none is requested.
    Synthetic(SynthParams),
    /// A fixed dataset, filtered by history length.
    Fixed(Dataset),
}

impl DataSource {
    fn default_count(&self) -> Option<usize> {
        match self {
            DataSource::Records { max_entities, .. } => *max_entities,
            DataSource::Synthetic(p) => Some(
                p.l_counts
                    .first()
                    .map(|&(_, n)| n)
                    .unwrap_or(SynthParams::DEFAULT_ENTITIES_PER_L),
            ),
            DataSource::Fixed(_) => None,
        }
    }

    fn seed(&self) -> u64 {
        match self {
            DataSource::Records { seed, .. } => *seed,
            DataSource::Synthetic(p) => p.seed,
            DataSource::Fixed(d) => d.meta().seed.unwrap_or(0),
        }
    }

    /// Entities with history length `l`, at most `count` of them.
    pub fn dataset_for(&self, l: usize, count: Option<usize>) -> Result<Dataset> {
        let count = count.or(self.default_count());
        let ds = match self {
            DataSource::Records {
                records, policy, ..
            } => ingest::group_entities(records, l, *policy)?.dataset,
            DataSource::Synthetic(p) => {
                let params = SynthParams {
                    l_counts: vec![(l, count.unwrap_or(SynthParams::DEFAULT_ENTITIES_PER_L))],
                    ..p.clone()
                };
                return Ok(synth::generate(&params)?.0);
            }
            DataSource::Fixed(d) => d.with_length(l),
        };
        Ok(match count {
            Some(n) if n < ds.len() => ingest::subsample(&ds, n, self.seed()),
            _ => ds,
        })
    }

    /// One pool holding `count` entities of each length. Ingested groups are
    /// assigned to the longest requested length they support.
    pub fn mixed(&self, ls: &[usize], count: Option<usize>) -> Result<Dataset> {
        let mut ls = ls.to_vec();
        ls.sort_unstable_by(|a, b| b.cmp(a));
        ls.dedup();
        let mut taken: BTreeSet<EntityKey> = BTreeSet::new();
        let mut merged: Option<Dataset> = None;
        for l in ls {
            let ds = self.dataset_for(l, None)?;
            let (entities, meta) = ds.into_parts();
            let fresh: Vec<_> = entities
                .into_iter()
                .filter(|e| !taken.contains(e.key()))
                .collect();
            let mut ds = Dataset::new(fresh, meta)?;
            if let Some(n) = count.or(self.default_count()) {
                if n < ds.len() {
                    ds = ingest::subsample(&ds, n, self.seed());
                }
            }
            taken.extend(ds.keys().cloned());
            merged = Some(match merged {
                None => ds,
                Some(acc) => ingest::merge_datasets(&acc, &ds)?,
            });
        }
        merged.ok_or_else(|| Error::InvalidExperiment("no history lengths requested".into()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkippedRun {
    pub l: usize,
    pub variant: MetricVariant,
    pub reason: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PerLOutcome {
    pub results: Vec<SweepResult>,
    pub skipped: Vec<SkippedRun>,
}

/// One sweep per `(L, variant)`; the ordered variant is skipped for odd L.
pub fn experiment_per_l(
    source: &DataSource,
    ls: &[usize],
    variants: &[MetricVariant],
    k_max: usize,
    nmf: Option<&NmfSettings>,
) -> Result<PerLOutcome> {
    let mut out = PerLOutcome::default();
    for &l in ls {
        let mut dataset = None;
        for &variant in variants {
            if variant == MetricVariant::Ordered && l % 2 == 1 {
                let reason =
                    format!("ordered needs equal training and validation halves; L={l} is odd");
                tracing::warn!(l, %variant, "skipping: {reason}");
                out.skipped.push(SkippedRun { l, variant, reason });
                continue;
            }
            if dataset.is_none() {
                dataset = Some(source.dataset_for(l, None)?);
            }
            let ds = dataset.as_ref().expect("set above");
            let id = format!("per-l-L{l}-{variant}");
            let r = sweep_neighbors(ds, variant, k_max, nmf, None)
                .map_err(|e| Error::InvalidExperiment(format!("{id}: {e}")))?;
            out.results.push(r.with_id(id));
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AugmentOutcome {
    pub results: Vec<SweepResult>,
    pub warnings: Vec<String>,
}

/// For each requested count, subsamples the short-history pool, merges it
/// with the long-history pool and sweeps with the error restricted to the
/// short entities. Long entities sharing a key with a short one are dropped.
pub fn experiment_augment(
    short: &Dataset,
    long: &Dataset,
    counts: &[usize],
    k_max: usize,
    seed: u64,
) -> Result<AugmentOutcome> {
    let mut out = AugmentOutcome::default();
    let short_keys: BTreeSet<&EntityKey> = short.keys().collect();
    let (long_entities, long_meta) = long.clone().into_parts();
    let before = long_entities.len();
    let long_entities: Vec<_> = long_entities
        .into_iter()
        .filter(|e| !short_keys.contains(e.key()))
        .collect();
    if long_entities.len() < before {
        let w = format!(
            "dropped {} long-history entities whose keys also appear in the short pool",
            before - long_entities.len()
        );
        tracing::warn!("{w}");
        out.warnings.push(w);
    }
    let long = Dataset::new(long_entities, long_meta)?;

    for &count in counts {
        if count == 0 {
            let w = "short-entity count 0 skipped: nothing to evaluate".to_string();
            tracing::warn!("{w}");
            out.warnings.push(w);
            continue;
        }
        let n = if count > short.len() {
            let w = format!(
                "requested {count} short entities, only {} available",
                short.len()
            );
            tracing::warn!("{w}");
            out.warnings.push(w);
            short.len()
        } else {
            count
        };
        if n == 0 {
            continue;
        }
        let sub = ingest::subsample(short, n, seed);
        let subset: Vec<EntityKey> = sub.keys().cloned().collect();
        let merged = ingest::merge_datasets(&sub, &long)?.with_eval_subset(Some(subset));
        let r = sweep_neighbors(&merged, MetricVariant::All2All, k_max, None, None)?;
        out.results.push(r.with_id(format!("augment-n{count}")));
    }
    Ok(out)
}

/// Single all2all sweep over a mixed-length pool, evaluated on every entity.
pub fn experiment_mixed(dataset: &Dataset, k_max: usize) -> Result<SweepResult> {
    let r = sweep_neighbors(dataset, MetricVariant::All2All, k_max, None, None)?;
    let id = format!("mixed-L{}", r.config.l_label);
    Ok(r.with_id(id))
}

/// Paired sweeps on the same dataset without and with NMF features.
pub fn experiment_nmf_ablation(
    dataset: &Dataset,
    variant: MetricVariant,
    k_max: usize,
    nmf: &NmfSettings,
) -> Result<(SweepResult, SweepResult)> {
    let l = l_label(dataset);
    let raw = sweep_neighbors(dataset, variant, k_max, None, None)?
        .with_id(format!("nmf-ablation-L{l}-raw"));
    let with = sweep_neighbors(dataset, variant, k_max, Some(nmf), None)?
        .with_id(format!("nmf-ablation-L{l}-nmf-r{}", nmf.params.rank));
    Ok((raw, with))
}

pub const RESULTS_HEADER: [&str; 8] = [
    "experiment_id",
    "variant",
    "L",
    "nmf_r",
    "k",
    "n_entities",
    "mean_used_k",
    "mse",
];

pub const SUMMARY_HEADER: [&str; 7] = ["experiment_id", "variant", "L", "nmf_r", "row", "k", "mse"];

fn rank_field(r: &SweepResult) -> String {
    r.config.nmf_rank.map(|r| r.to_string()).unwrap_or_default()
}

pub fn write_results_csv<W: Write>(results: &[SweepResult], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(RESULTS_HEADER)?;
    for r in results {
        for p in &r.curve {
            w.write_record([
                r.config.experiment_id.clone(),
                r.config.variant.to_string(),
                r.config.l_label.clone(),
                rank_field(r),
                p.k.to_string(),
                p.n_entities.to_string(),
                p.mean_used_k.to_string(),
                format!("{:e}", p.mse),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_summary_csv<W: Write>(results: &[SweepResult], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(SUMMARY_HEADER)?;
    for r in results {
        let s = &r.summary;
        let mut rows = vec![("self_only", 0, s.self_only_mse)];
        if let Some(nn) = s.nearest_neighbor_mse {
            rows.push(("nearest_neighbor", 1, nn));
        }
        rows.push(("oracle", s.oracle_k, s.oracle_mse));
        for (row, k, v) in rows {
            w.write_record([
                r.config.experiment_id.clone(),
                r.config.variant.to_string(),
                r.config.l_label.clone(),
                rank_field(r),
                row.to_string(),
                k.to_string(),
                format!("{v:e}"),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Static line chart of error against neighbor count.
pub fn render_svg(r: &SweepResult) -> String {
    const W: f64 = 640.0;
    const H: f64 = 400.0;
    const ML: f64 = 80.0;
    const MR: f64 = 20.0;
    const MT: f64 = 40.0;
    const MB: f64 = 50.0;
    let pw = W - ML - MR;
    let ph = H - MT - MB;

    let k_max = r.curve.last().map(|p| p.k).unwrap_or(0).max(1) as f64;
    let (mut lo, mut hi) = r
        .curve
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| {
            (lo.min(p.mse), hi.max(p.mse))
        });
    if !(hi > lo) {
        let pad = if hi.abs() > 0.0 { hi.abs() * 0.1 } else { 1.0 };
        lo -= pad;
        hi += pad;
    }
    let x = |k: f64| ML + pw * k / k_max;
    let y = |v: f64| MT + ph * (1.0 - (v - lo) / (hi - lo));

    let mut s = String::new();
    s.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{W}\" height=\"{H}\" viewBox=\"0 0 {W} {H}\" font-family=\"sans-serif\" font-size=\"12\">\n"
    ));
    s.push_str(&format!(
        "<rect width=\"{W}\" height=\"{H}\" fill=\"white\"/>\n"
    ));
    s.push_str(&format!(
        "<text x=\"{}\" y=\"24\" text-anchor=\"middle\" font-size=\"14\">{} ({}, L={})</text>\n",
        W / 2.0,
        r.config.experiment_id,
        r.config.variant,
        r.config.l_label
    ));
    s.push_str(&format!(
        "<line x1=\"{ML}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"black\"/>\n",
        MT + ph,
        ML + pw,
        MT + ph
    ));
    s.push_str(&format!(
        "<line x1=\"{ML}\" y1=\"{MT}\" x2=\"{ML}\" y2=\"{}\" stroke=\"black\"/>\n",
        MT + ph
    ));
    for i in 0..=4 {
        let v = lo + (hi - lo) * i as f64 / 4.0;
        s.push_str(&format!(
            "<text x=\"{}\" y=\"{:.1}\" text-anchor=\"end\">{v:.2e}</text>\n",
            ML - 6.0,
            y(v) + 4.0
        ));
        let k = (k_max * i as f64 / 4.0).round();
        s.push_str(&format!(
            "<text x=\"{:.1}\" y=\"{}\" text-anchor=\"middle\">{k}</text>\n",
            x(k),
            MT + ph + 18.0
        ));
    }
    s.push_str(&format!(
        "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">no. of neighbors</text>\n",
        ML + pw / 2.0,
        H - 10.0
    ));
    s.push_str(&format!(
        "<text x=\"16\" y=\"{}\" text-anchor=\"middle\" transform=\"rotate(-90 16 {})\">mean squared error (deg^2)</text>\n",
        MT + ph / 2.0,
        MT + ph / 2.0
    ));
    let points: Vec<String> = r
        .curve
        .iter()
        .map(|p| format!("{:.2},{:.2}", x(p.k as f64), y(p.mse)))
        .collect();
    s.push_str(&format!(
        "<polyline fill=\"none\" stroke=\"steelblue\" stroke-width=\"2\" points=\"{}\"/>\n",
        points.join(" ")
    ));
    let o = &r.summary;
    s.push_str(&format!(
        "<circle cx=\"{:.2}\" cy=\"{:.2}\" r=\"4\" fill=\"firebrick\"/>\n",
        x(o.oracle_k as f64),
        y(o.oracle_mse)
    ));
    s.push_str("</svg>\n");
    s
}
