//! Seeded synthetic population with archetype-structured trip histories.
//!
//! Each archetype is one latent origin-destination pair. Every entity follows
//! exactly one archetype; its trips are the archetype plus Gaussian noise, or
//! with probability `outlier_rate` a uniform random trip inside the box.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::domain::{Dataset, DatasetMeta, Entity, EntityKey, Trip};
use crate::error::{Error, Result};

const MAX_ARCHETYPE_DRAWS: usize = 100_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BBox {
    pub lon_min: f64,
    pub lon_max: f64,
    pub lat_min: f64,
    pub lat_max: f64,
}

impl BBox {
    /// Coordinate range of the Nancy e-ticket fragment.
    pub const NANCY: BBox = BBox {
        lon_min: 6.14,
        lon_max: 6.20,
        lat_min: 48.64,
        lat_max: 48.70,
    };
}

impl Default for BBox {
    fn default() -> Self {
        BBox::NANCY
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthParams {
    /// `(history length L, number of entities)` groups, generated in order.
    pub l_counts: Vec<(usize, usize)>,
    pub n_archetypes: usize,
    pub bbox: BBox,
    /// Per-coordinate noise standard deviation, degrees.
    pub noise_sigma: f64,
    pub outlier_rate: f64,
    pub seed: u64,
}

impl SynthParams {
    pub const DEFAULT_ENTITIES_PER_L: usize = 200;

    /// Defaults: 4 archetypes, sigma 0.002 degrees, 10% outliers, Nancy box.
    pub fn new(seed: u64, l_values: &[usize]) -> Self {
        Self {
            l_counts: l_values
                .iter()
                .map(|&l| (l, Self::DEFAULT_ENTITIES_PER_L))
                .collect(),
            n_archetypes: 4,
            bbox: BBox::NANCY,
            noise_sigma: 0.002,
            outlier_rate: 0.1,
            seed,
        }
    }

    pub fn n_entities(&self) -> usize {
        self.l_counts.iter().map(|&(_, n)| n).sum()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidSynthParams(m));
        if self.l_counts.is_empty() {
            return bad("no history lengths requested".into());
        }
        for &(l, n) in &self.l_counts {
            if l < 1 || n < 1 {
                return bad(format!(
                    "history length and count must be >= 1, got L={l} n={n}"
                ));
            }
            if l + 1 > u16::MAX as usize {
                return bad(format!("history length {l} too large"));
            }
        }
        let mut ls: Vec<usize> = self.l_counts.iter().map(|&(l, _)| l).collect();
        ls.sort_unstable();
        if ls.windows(2).any(|w| w[0] == w[1]) {
            return bad("history lengths must be distinct".into());
        }
        if self.n_archetypes < 1 {
            return bad("need at least one archetype".into());
        }
        if !(0.0..=1.0).contains(&self.outlier_rate) {
            return bad(format!("outlier_rate {} outside [0, 1]", self.outlier_rate));
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return bad(format!(
                "noise_sigma {} must be finite and >= 0",
                self.noise_sigma
            ));
        }
        let b = &self.bbox;
        let finite = [b.lon_min, b.lon_max, b.lat_min, b.lat_max]
            .iter()
            .all(|v| v.is_finite());
        if !finite || b.lon_min >= b.lon_max || b.lat_min >= b.lat_max {
            return bad(format!("empty bounding box {b:?}"));
        }
        Ok(())
    }
}

pub type Labels = BTreeMap<EntityKey, usize>;

fn uniform_od(rng: &mut ChaCha8Rng, b: &BBox) -> [f64; 4] {
    [
        rng.random_range(b.lon_min..b.lon_max),
        rng.random_range(b.lat_min..b.lat_max),
        rng.random_range(b.lon_min..b.lon_max),
        rng.random_range(b.lat_min..b.lat_max),
    ]
}

fn sq_dist(a: &[f64; 4], b: &[f64; 4]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn sample_archetypes(rng: &mut ChaCha8Rng, p: &SynthParams) -> Result<Vec<[f64; 4]>> {
    let min_sep = (10.0 * p.noise_sigma).powi(2);
    let mut out: Vec<[f64; 4]> = Vec::with_capacity(p.n_archetypes);
    let mut draws = 0;
    while out.len() < p.n_archetypes {
        draws += 1;
        if draws > MAX_ARCHETYPE_DRAWS {
            return Err(Error::InvalidSynthParams(format!(
                "cannot place {} archetypes {min_sep:e} apart inside {:?}",
                p.n_archetypes, p.bbox
            )));
        }
        let cand = uniform_od(rng, &p.bbox);
        if out.iter().all(|a| sq_dist(a, &cand) >= min_sep) {
            out.push(cand);
        }
    }
    Ok(out)
}

fn ticket_id(l: usize, i: usize) -> String {
    format!("syn{l:02}-{i:06}")
}

/// Generates `L + 1` trips per entity (history plus test trip) on y-days
/// `1..=L+1`. Deterministic in `params.seed`.
pub fn generate(params: &SynthParams) -> Result<(Dataset, Labels)> {
    params.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let archetypes = sample_archetypes(&mut rng, params)?;

    let total = params.n_entities();
    let mut order: Vec<usize> = (0..total).collect();
    order.shuffle(&mut rng);
    let mut assignment = vec![0usize; total];
    for (slot, &entity) in order.iter().enumerate() {
        assignment[entity] = slot % archetypes.len();
    }

    let noise = Normal::new(0.0, params.noise_sigma)
        .map_err(|e| Error::InvalidSynthParams(e.to_string()))?;
    let mut entities = Vec::with_capacity(total);
    let mut labels = Labels::new();
    let mut idx = 0;
    for &(l, n) in &params.l_counts {
        for i in 0..n {
            let arch = assignment[idx];
            idx += 1;
            let key = EntityKey::new(ticket_id(l, i), (i % 7) as u8 + 1, (i % 24) as u8);
            let mut trips = Vec::with_capacity(l + 1);
            for day in 1..=(l + 1) as u16 {
                let od = if rng.random::<f64>() < params.outlier_rate {
                    uniform_od(&mut rng, &params.bbox)
                } else {
                    let base = archetypes[arch];
                    let mut od = [0.0; 4];
                    for (o, b) in od.iter_mut().zip(base) {
                        *o = if params.noise_sigma > 0.0 {
                            b + noise.sample(&mut rng)
                        } else {
                            b
                        };
                    }
                    od
                };
                trips.push(Trip::single_leg(od[0], od[1], od[2], od[3], day)?);
            }
            let test = trips.pop();
            labels.insert(key.clone(), arch);
            entities.push(Entity::new(key, trips, test)?);
        }
    }
    let meta = DatasetMeta {
        sources: vec!["synthetic".into()],
        seed: Some(params.seed),
        notes: vec![format!(
            "archetypes={} sigma={} outlier_rate={}",
            params.n_archetypes, params.noise_sigma, params.outlier_rate
        )],
        ..DatasetMeta::default()
    };
    Ok((Dataset::new(entities, meta)?, labels))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::{dist_all2all, seuc};

    #[test]
    fn deterministic_in_seed() {
        let p = SynthParams::new(7, &[3, 5]);
        let (a, la) = generate(&p).unwrap();
        let (b, lb) = generate(&p).unwrap();
        assert_eq!(a, b);
        assert_eq!(la, lb);
        let (c, _) = generate(&SynthParams { seed: 8, ..p }).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn counts_match_params() {
        let mut p = SynthParams::new(1, &[2, 8]);
        p.l_counts = vec![(2, 17), (8, 5)];
        let (ds, labels) = generate(&p).unwrap();
        assert_eq!(ds.len(), 22);
        assert_eq!(ds.with_length(2).len(), 17);
        assert_eq!(ds.with_length(8).len(), 5);
        assert_eq!(labels.len(), 22);
        assert!(ds
            .entities()
            .iter()
            .all(|e| e.test_trip().unwrap().yday as usize == e.len() + 1));
        // round-robin over the shuffle: archetype sizes differ by at most one
        let mut sizes = [0usize; 4];
        labels.values().for_each(|&a| sizes[a] += 1);
        assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
    }

    #[test]
    fn noiseless_single_archetype_is_constant() {
        let p = SynthParams {
            n_archetypes: 1,
            noise_sigma: 0.0,
            outlier_rate: 0.0,
            ..SynthParams::new(3, &[4])
        };
        let (ds, _) = generate(&p).unwrap();
        let first = &ds.entities()[0].history()[0];
        for e in ds.entities() {
            for t in e.history().iter().chain(e.test_trip()) {
                assert_eq!(seuc(t, first).unwrap(), 0.0);
            }
        }
    }

    #[test]
    fn invalid_params_rejected() {
        let base = SynthParams::new(0, &[4]);
        let cases = [
            SynthParams {
                outlier_rate: 1.5,
                ..base.clone()
            },
            SynthParams {
                noise_sigma: -1.0,
                ..base.clone()
            },
            SynthParams {
                n_archetypes: 0,
                ..base.clone()
            },
            SynthParams {
                l_counts: vec![(4, 0)],
                ..base.clone()
            },
            SynthParams {
                l_counts: vec![],
                ..base.clone()
            },
            SynthParams {
                bbox: BBox {
                    lon_min: 1.0,
                    lon_max: 1.0,
                    ..BBox::NANCY
                },
                ..base.clone()
            },
            // archetypes cannot be 0.2 degrees apart inside a 0.06 degree box
            SynthParams {
                noise_sigma: 0.02,
                ..base.clone()
            },
        ];
        for p in cases {
            assert!(
                matches!(generate(&p), Err(Error::InvalidSynthParams(_))),
                "{p:?}"
            );
        }
    }

    #[test]
    fn archetypes_separate_histories() {
        // Fitness check on the default population: for an anchor entity, a
        // same-archetype entity is closer than a cross-archetype one in more
        // than 99% of (anchor, same, cross) triples.
        let (ds, labels) = generate(&SynthParams::new(42, &[6])).unwrap();
        let ents = ds.entities();
        let n = ents.len();
        let label = |i: usize| labels[ents[i].key()];
        let (mut wins, mut total) = (0u64, 0u64);
        for i in 0..n {
            let d: Vec<f64> = (0..n)
                .map(|j| dist_all2all(ents[i].history(), ents[j].history()).unwrap())
                .collect();
            let mut cross: Vec<f64> = (0..n)
                .filter(|&m| label(m) != label(i))
                .map(|m| d[m])
                .collect();
            cross.sort_by(f64::total_cmp);
            for j in (0..n).filter(|&j| j != i && label(j) == label(i)) {
                wins += (cross.len() - cross.partition_point(|&c| c <= d[j])) as u64;
                total += cross.len() as u64;
            }
        }
        let frac = wins as f64 / total as f64;
        assert!(frac > 0.99, "separation {frac}");
    }
}
