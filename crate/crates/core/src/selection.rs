//! Train/validation splitting and validation-driven neighbor selection.
//!
//! A candidate entity is a neighbor of a target when the candidate's training
//! history is at least as close to the target's validation history as the
//! target's own training history is. The relation is directional and is never
//! symmetrized.

use std::cmp::Ordering;
use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::domain::{Dataset, Entity, EntityKey, Trip};
use crate::error::{Error, Result};
use crate::metrics::MetricVariant;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitHistory {
    pub key: EntityKey,
    pub trn: Vec<Trip>,
    pub vld: Vec<Trip>,
}

impl SplitHistory {
    /// Training then validation trips, in y-day order.
    pub fn all_trips(&self) -> impl Iterator<Item = &Trip> {
        self.trn.iter().chain(self.vld.iter())
    }

    pub fn len(&self) -> usize {
        self.trn.len() + self.vld.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// First `ceil(L/2)` trips train, the remaining `floor(L/2)` validate.
pub fn split_entity(e: &Entity) -> Result<SplitHistory> {
    let history = e.history();
    if history.len() < 2 {
        return Err(Error::CannotSplit {
            key: e.key().clone(),
            len: history.len(),
        });
    }
    let cut = history.len().div_ceil(2);
    Ok(SplitHistory {
        key: e.key().clone(),
        trn: history[..cut].to_vec(),
        vld: history[cut..].to_vec(),
    })
}

/// Split histories of a whole dataset, sorted by key.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Splits {
    items: Vec<SplitHistory>,
}

impl Splits {
    pub fn from_dataset(dataset: &Dataset) -> Result<Self> {
        let items = dataset
            .entities()
            .iter()
            .map(|e| split_entity(e).map_err(|err| err.for_entity(e.key())))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { items })
    }

    /// Collects splits, sorting by key. Duplicate keys are rejected.
    pub fn from_vec(mut items: Vec<SplitHistory>) -> Result<Self> {
        items.sort_by(|a, b| a.key.cmp(&b.key));
        if let Some(w) = items.windows(2).find(|w| w[0].key == w[1].key) {
            return Err(Error::DuplicateEntity(w[0].key.clone()));
        }
        Ok(Self { items })
    }

    pub fn get(&self, key: &EntityKey) -> Option<&SplitHistory> {
        self.items
            .binary_search_by(|s| s.key.cmp(key))
            .ok()
            .map(|i| &self.items[i])
    }

    pub fn iter(&self) -> std::slice::Iter<'_, SplitHistory> {
        self.items.iter()
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Neighbor {
    pub key: EntityKey,
    pub dist: f64,
}

/// Admitted neighbors of one entity, nearest first. The owner itself is
/// always a member.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NeighborList {
    pub owner: EntityKey,
    pub self_dist: f64,
    pub neighbors: Vec<Neighbor>,
    /// Candidates skipped because the metric is undefined for their lengths.
    pub skipped: usize,
}

impl NeighborList {
    /// Members other than the owner, nearest first.
    pub fn others(&self) -> impl Iterator<Item = &EntityKey> {
        self.neighbors
            .iter()
            .map(|n| &n.key)
            .filter(move |k| **k != self.owner)
    }

    /// Number of admitted members besides the owner.
    pub fn n_others(&self) -> usize {
        self.neighbors.len() - 1
    }

    /// The owner followed by its `k` nearest other members (fewer if the list
    /// is shorter).
    pub fn select(&self, k: usize) -> Vec<EntityKey> {
        std::iter::once(&self.owner)
            .chain(self.others().take(k))
            .cloned()
            .collect()
    }
}

fn by_distance_then_key(a: &Neighbor, b: &Neighbor) -> Ordering {
    a.dist.total_cmp(&b.dist).then_with(|| a.key.cmp(&b.key))
}

/// Neighbor set of `target` over every split in `splits`.
pub fn neighbor_set(
    target: &EntityKey,
    splits: &Splits,
    variant: MetricVariant,
) -> Result<NeighborList> {
    let own = splits
        .get(target)
        .ok_or_else(|| Error::UnknownEntity(target.clone()))?;
    let self_dist = variant.distance(&own.trn, &own.vld)?;

    let mut neighbors = Vec::new();
    let mut skipped = 0;
    for cand in splits.iter() {
        if !variant.accepts(cand.trn.len(), own.vld.len()) {
            skipped += 1;
            continue;
        }
        let dist = if cand.key == *target {
            self_dist
        } else {
            variant.distance(&cand.trn, &own.vld)?
        };
        if dist <= self_dist {
            neighbors.push(Neighbor {
                key: cand.key.clone(),
                dist,
            });
        }
    }
    neighbors.sort_by(by_distance_then_key);
    if skipped > 0 {
        tracing::debug!(%target, skipped, "skipped candidates with unaligned histories");
    }
    Ok(NeighborList {
        owner: target.clone(),
        self_dist,
        neighbors,
        skipped,
    })
}

/// Neighbor sets of every entity, computed in parallel and keyed by entity.
pub fn all_neighbor_sets(
    dataset: &Dataset,
    variant: MetricVariant,
) -> Result<BTreeMap<EntityKey, NeighborList>> {
    let splits = Splits::from_dataset(dataset)?;
    neighbor_sets_for(&splits, variant)
}

pub fn neighbor_sets_for(
    splits: &Splits,
    variant: MetricVariant,
) -> Result<BTreeMap<EntityKey, NeighborList>> {
    let lists = splits
        .items
        .par_iter()
        .map(|s| neighbor_set(&s.key, splits, variant).map_err(|e| e.for_entity(&s.key)))
        .collect::<Result<Vec<_>>>()?;
    Ok(lists.into_iter().map(|l| (l.owner.clone(), l)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::DatasetMeta;

    fn trip_at(x: f64, yday: u16) -> Trip {
        Trip::single_leg(x, 0.0, 0.0, 0.0, yday).unwrap()
    }

    fn entity(id: &str, xs: &[f64]) -> Entity {
        let trips = xs
            .iter()
            .enumerate()
            .map(|(i, &x)| trip_at(x, i as u16 + 1))
            .collect();
        Entity::new(EntityKey::new(id, 1, 8), trips, None).unwrap()
    }

    fn dataset(entities: Vec<Entity>) -> Dataset {
        Dataset::new(entities, DatasetMeta::named("test")).unwrap()
    }

    #[test]
    fn split_rules() {
        let tid3 = Entity::new(
            EntityKey::new("tid000003", 2, 8),
            [65, 72, 79, 93, 114, 121]
                .iter()
                .map(|&y| trip_at(6.177089, y))
                .collect(),
            None,
        )
        .unwrap();
        let s = split_entity(&tid3).unwrap();
        assert_eq!(
            s.trn.iter().map(|t| t.yday).collect::<Vec<_>>(),
            [65, 72, 79]
        );
        assert_eq!(
            s.vld.iter().map(|t| t.yday).collect::<Vec<_>>(),
            [93, 114, 121]
        );

        let s = split_entity(&entity("a", &[1.0, 2.0])).unwrap();
        assert_eq!((s.trn.len(), s.vld.len()), (1, 1));
        assert_eq!(s.trn[0].origin.lon, 1.0);

        let s = split_entity(&entity("a", &[1.0, 2.0, 3.0, 4.0, 5.0])).unwrap();
        assert_eq!((s.trn.len(), s.vld.len()), (3, 2));

        assert!(matches!(
            split_entity(&entity("a", &[1.0])),
            Err(Error::CannotSplit { len: 1, .. })
        ));
    }

    #[test]
    fn lone_target_is_its_own_neighbor() {
        let ds = dataset(vec![entity("t", &[0.0, 3.0])]);
        let sets = all_neighbor_sets(&ds, MetricVariant::All2All).unwrap();
        let l = &sets[&EntityKey::new("t", 1, 8)];
        assert_eq!(l.neighbors.len(), 1);
        assert_eq!(l.self_dist, 9.0);
        assert_eq!(l.n_others(), 0);
    }

    // target: trn = vld = [A]; c1: trn = [A]; c2: trn = [B] with seuc(A, B) = 1.
    fn three_entities() -> Dataset {
        dataset(vec![
            entity("t", &[0.0, 0.0]),
            entity("c1", &[0.0, 5.0]),
            entity("c2", &[1.0, 1.0]),
        ])
    }

    #[test]
    fn three_entity_construction() {
        let ds = three_entities();
        for variant in MetricVariant::ALL {
            let splits = Splits::from_dataset(&ds).unwrap();
            let l = neighbor_set(&EntityKey::new("t", 1, 8), &splits, variant).unwrap();
            assert_eq!(l.self_dist, 0.0);
            let keys: Vec<&str> = l.neighbors.iter().map(|n| &*n.key.ticket_id).collect();
            assert_eq!(keys, ["c1", "t"]);
            assert!(l.neighbors.iter().all(|n| n.dist == 0.0));
        }
    }

    #[test]
    fn three_entity_all_sets_match_brute_force() {
        let ds = three_entities();
        let sets = all_neighbor_sets(&ds, MetricVariant::All2All).unwrap();
        // Brute-force 3x3 table of dist(trn_c, vld_e): trn values t=0, c1=0, c2=1;
        // vld values t=0, c1=5, c2=1.
        let trn = [("c1", 0.0), ("c2", 1.0), ("t", 0.0)];
        let vld = [("c1", 5.0), ("c2", 1.0), ("t", 0.0)];
        for (owner, v) in vld {
            let own_trn = trn.iter().find(|(k, _)| *k == owner).unwrap().1;
            let self_d: f64 = (own_trn - v) * (own_trn - v);
            let mut expect: Vec<(f64, &str)> = trn
                .iter()
                .map(|&(k, x)| ((x - v) * (x - v), k))
                .filter(|&(d, _)| d <= self_d)
                .collect();
            expect.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(b.1)));
            let got: Vec<(f64, &str)> = sets[&EntityKey::new(owner, 1, 8)]
                .neighbors
                .iter()
                .map(|n| (n.dist, &*n.key.ticket_id))
                .collect();
            assert_eq!(got, expect, "owner {owner}");
        }
    }

    #[test]
    fn asymmetric_relation_is_kept() {
        // "noisy" has a spread history; "clean" sits exactly on noisy's validation trips.
        let ds = dataset(vec![
            entity("clean", &[4.0, 4.0]),
            entity("noisy", &[0.0, 4.0]),
        ]);
        let sets = all_neighbor_sets(&ds, MetricVariant::All2All).unwrap();
        let clean = EntityKey::new("clean", 1, 8);
        let noisy = EntityKey::new("noisy", 1, 8);
        assert!(sets[&noisy].neighbors.iter().any(|n| n.key == clean));
        assert!(!sets[&clean].neighbors.iter().any(|n| n.key == noisy));
    }

    #[test]
    fn identical_entities_all_neighbors() {
        let ds = dataset(
            (0..5)
                .map(|i| entity(&format!("e{i}"), &[1.0, 2.0, 1.0, 2.0]))
                .collect(),
        );
        for variant in MetricVariant::ALL {
            let sets = all_neighbor_sets(&ds, variant).unwrap();
            assert!(sets.values().all(|l| l.neighbors.len() == 5));
        }
        assert!(all_neighbor_sets(&dataset(vec![]), MetricVariant::All2All)
            .unwrap()
            .is_empty());
    }

    #[test]
    fn ordered_skips_unaligned_candidates() {
        let ds = dataset(vec![
            entity("a", &[0.0, 0.0, 0.0, 0.0]),
            entity("b", &[0.0, 0.0, 0.0, 0.0, 0.0, 0.0]),
        ]);
        let sets = all_neighbor_sets(&ds, MetricVariant::Ordered).unwrap();
        let a = &sets[&EntityKey::new("a", 1, 8)];
        assert_eq!(a.skipped, 1);
        assert_eq!(a.neighbors.len(), 1);
        // all2all compares across lengths
        let sets = all_neighbor_sets(&ds, MetricVariant::All2All).unwrap();
        assert_eq!(sets[&EntityKey::new("a", 1, 8)].neighbors.len(), 2);
    }

    #[test]
    fn ordered_fails_on_odd_length_target() {
        let ds = dataset(vec![entity("a", &[0.0, 1.0, 2.0])]);
        let err = all_neighbor_sets(&ds, MetricVariant::Ordered).unwrap_err();
        assert!(matches!(err, Error::Entity { .. }), "{err}");
    }

    #[test]
    fn unknown_target() {
        let splits = Splits::from_dataset(&three_entities()).unwrap();
        assert!(matches!(
            neighbor_set(&EntityKey::new("zz", 1, 1), &splits, MetricVariant::All2All),
            Err(Error::UnknownEntity(_))
        ));
    }

    #[test]
    fn select_caps_at_available() {
        let ds = three_entities();
        let sets = all_neighbor_sets(&ds, MetricVariant::All2All).unwrap();
        let l = &sets[&EntityKey::new("t", 1, 8)];
        assert_eq!(l.select(0), vec![EntityKey::new("t", 1, 8)]);
        assert_eq!(
            l.select(5),
            vec![EntityKey::new("t", 1, 8), EntityKey::new("c1", 1, 8)]
        );
    }
}
