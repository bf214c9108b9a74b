//! Non-negative matrix factorization of the trip feature matrix, used to
//! re-embed trips into `r` latent components before distances are computed.
//!
//! Updates are the multiplicative rules for the Frobenius loss:
//!
//! ```text
//! H <- H * (W^T X) / (W^T W H + eps)
//! W <- W * (X H^T) / (W H H^T + eps)
//! ```

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::{Path, PathBuf};

use ndarray::{Array2, Zip};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::domain::{Dataset, EntityKey, LocationKey, Trip};
use crate::error::{Error, Result};
use crate::selection::{split_entity, SplitHistory, Splits};

pub const N_FEATURES: usize = 4;
const EPS: f64 = 1e-12;

/// One row per history trip: `(o_lon, o_lat, d_lon, d_lat)`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    pub rows: Array2<f64>,
    /// `(entity, history position)` of each row.
    pub row_index: Vec<(EntityKey, usize)>,
    /// Amount added to every entry to make the matrix nonnegative (0 if none).
    pub shift: f64,
}

impl FeatureMatrix {
    pub fn n_rows(&self) -> usize {
        self.rows.nrows()
    }
}

/// Stacks every history trip of every entity, in key then y-day order. With
/// `min_shift`, a negative minimum `-m` is lifted by adding `m` everywhere.
pub fn build_feature_matrix(dataset: &Dataset, min_shift: bool) -> Result<FeatureMatrix> {
    let n: usize = dataset.entities().iter().map(|e| e.len()).sum();
    let mut rows = Array2::zeros((n, N_FEATURES));
    let mut row_index = Vec::with_capacity(n);
    for e in dataset.entities() {
        for (pos, trip) in e.history().iter().enumerate() {
            let r = row_index.len();
            for (c, v) in trip.features().into_iter().enumerate() {
                rows[[r, c]] = v;
            }
            row_index.push((e.key().clone(), pos));
        }
    }
    let min = rows.iter().copied().fold(f64::INFINITY, f64::min);
    let mut shift = 0.0;
    if n > 0 && min < 0.0 {
        if !min_shift {
            let (row, value) = rows
                .outer_iter()
                .enumerate()
                .find_map(|(i, r)| r.iter().find(|v| **v < 0.0).map(|v| (i, *v)))
                .expect("negative entry exists");
            return Err(Error::NegativeFeature { row, value });
        }
        shift = -min;
        rows.mapv_inplace(|v| v + shift);
    }
    Ok(FeatureMatrix {
        rows,
        row_index,
        shift,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NmfParams {
    pub rank: usize,
    pub max_iters: usize,
    pub tol: f64,
    pub seed: u64,
}

impl Default for NmfParams {
    fn default() -> Self {
        Self {
            rank: 4,
            max_iters: 500,
            tol: 1e-6,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Factorization {
    /// `n x r` trip embeddings.
    pub w: Array2<f64>,
    /// `r x 4` components.
    pub h: Array2<f64>,
    /// `||X - WH||_F`, starting with the initial guess and then once per
    /// iteration.
    pub objective_trace: Vec<f64>,
}

impl Factorization {
    pub fn rank(&self) -> usize {
        self.h.nrows()
    }

    pub fn final_error(&self) -> f64 {
        *self
            .objective_trace
            .last()
            .expect("trace holds the initial error")
    }
}

fn frobenius_error(x: &Array2<f64>, w: &Array2<f64>, h: &Array2<f64>) -> f64 {
    let wh = w.dot(h);
    let mut sum = 0.0;
    Zip::from(x)
        .and(&wh)
        .for_each(|a, b| sum += (a - b) * (a - b));
    sum.sqrt()
}

pub fn nmf_factorize(x: &FeatureMatrix, params: &NmfParams) -> Result<Factorization> {
    let r = params.rank;
    if !(1..=N_FEATURES).contains(&r) {
        return Err(Error::RankOutOfRange {
            rank: r,
            max: N_FEATURES,
        });
    }
    if params.max_iters < 1 {
        return Err(Error::InvalidNmfParam("max_iters must be >= 1".into()));
    }
    if !(params.tol > 0.0) {
        return Err(Error::InvalidNmfParam(format!(
            "tol {} must be > 0",
            params.tol
        )));
    }
    let x = &x.rows;
    if x.is_empty() || x.iter().all(|v| *v == 0.0) {
        return Err(Error::DegenerateInput);
    }

    let (n, m) = x.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let scale = (x.mean().expect("nonempty") / r as f64).sqrt();
    let mut positive = || scale * (1.0 - rng.random::<f64>());
    let mut w = Array2::from_shape_simple_fn((n, r), &mut positive);
    let mut h = Array2::from_shape_simple_fn((r, m), &mut positive);

    let mut trace = vec![frobenius_error(x, &w, &h)];
    for _ in 0..params.max_iters {
        let numer = w.t().dot(x);
        let denom = w.t().dot(&w).dot(&h);
        Zip::from(&mut h)
            .and(&numer)
            .and(&denom)
            .for_each(|h, a, b| *h *= a / (b + EPS));

        let numer = x.dot(&h.t());
        let denom = w.dot(&h.dot(&h.t()));
        Zip::from(&mut w)
            .and(&numer)
            .and(&denom)
            .for_each(|w, a, b| *w *= a / (b + EPS));

        let prev = *trace.last().expect("nonempty");
        let err = frobenius_error(x, &w, &h);
        trace.push(err);
        if err == 0.0 || (prev - err) / prev < params.tol {
            break;
        }
    }
    Ok(Factorization {
        w,
        h,
        objective_trace: trace,
    })
}

/// Row `i` of `W` is the embedding of the trip at `x.row_index[i]`.
pub fn embed_trips(
    fact: &Factorization,
    x: &FeatureMatrix,
) -> BTreeMap<(EntityKey, usize), Vec<f64>> {
    x.row_index
        .iter()
        .cloned()
        .zip(fact.w.outer_iter().map(|row| row.to_vec()))
        .collect()
}

/// Split histories whose trips carry latent coordinates instead of degrees,
/// plus the way back from a latent trip to the original one.
#[derive(Debug, Clone)]
pub struct EmbeddedSplits {
    pub splits: Splits,
    originals: HashMap<LocationKey, Trip>,
}

impl EmbeddedSplits {
    /// Original trip behind a latent trip. When two history trips share an
    /// embedding, the first in key/position order is returned.
    pub fn original(&self, latent: &Trip) -> Option<&Trip> {
        self.originals.get(&latent.location_key())
    }
}

/// Latent vectors of up to four components are zero-padded into the trip's
/// four coordinate slots, so `seuc` on latent trips equals the squared
/// Euclidean distance between embeddings.
fn latent_trip(v: &[f64], yday: u16) -> Result<Trip> {
    let mut f = [0.0; N_FEATURES];
    f[..v.len()].copy_from_slice(v);
    Trip::single_leg(f[0], f[1], f[2], f[3], yday)
}

pub fn embedded_splits(
    dataset: &Dataset,
    embedding: &BTreeMap<(EntityKey, usize), Vec<f64>>,
) -> Result<EmbeddedSplits> {
    let mut originals = HashMap::new();
    let mut items = Vec::with_capacity(dataset.len());
    for e in dataset.entities() {
        let mut latent = Vec::with_capacity(e.len());
        for (pos, t) in e.history().iter().enumerate() {
            let v = embedding
                .get(&(e.key().clone(), pos))
                .ok_or_else(|| Error::UnknownEntity(e.key().clone()))?;
            let lt = latent_trip(v, t.yday)?;
            originals
                .entry(lt.location_key())
                .or_insert_with(|| t.clone());
            latent.push(lt);
        }
        let key = e.key().clone();
        let ent = crate::domain::Entity::new(key.clone(), latent, None)?;
        let SplitHistory { trn, vld, .. } =
            split_entity(&ent).map_err(|err| err.for_entity(&key))?;
        items.push(SplitHistory { key, trn, vld });
    }
    Ok(EmbeddedSplits {
        splits: Splits::from_vec(items)?,
        originals,
    })
}

/// On-disk cache of factorizations keyed by a hash of the matrix and params.
/// Files are JSON, one per key.
#[derive(Debug, Clone)]
pub struct FactorizationCache {
    dir: PathBuf,
}

impl FactorizationCache {
    pub fn new(dir: impl AsRef<Path>) -> Self {
        Self {
            dir: dir.as_ref().to_path_buf(),
        }
    }

    pub fn key(x: &FeatureMatrix, params: &NmfParams) -> String {
        let mut hasher = Sha256::new();
        let (n, m) = x.rows.dim();
        hasher.update((n as u64).to_le_bytes());
        hasher.update((m as u64).to_le_bytes());
        for v in x.rows.iter() {
            hasher.update(v.to_bits().to_le_bytes());
        }
        hasher.update((params.rank as u64).to_le_bytes());
        hasher.update((params.max_iters as u64).to_le_bytes());
        hasher.update(params.tol.to_bits().to_le_bytes());
        hasher.update(params.seed.to_le_bytes());
        hasher
            .finalize()
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }

    pub fn path_for(&self, x: &FeatureMatrix, params: &NmfParams) -> PathBuf {
        self.dir.join(format!("nmf-{}.json", Self::key(x, params)))
    }

    pub fn load_or_compute(&self, x: &FeatureMatrix, params: &NmfParams) -> Result<Factorization> {
        let path = self.path_for(x, params);
        if path.exists() {
            let text = fs::read_to_string(&path)?;
            return Ok(serde_json::from_str(&text)?);
        }
        let fact = nmf_factorize(x, params)?;
        fs::create_dir_all(&self.dir)?;
        fs::write(&path, serde_json::to_string(&fact)?)?;
        Ok(fact)
    }
}
