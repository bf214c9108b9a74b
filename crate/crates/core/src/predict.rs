//! Representative-trip prediction: pool the trips of an entity and its
//! selected neighbors, then return the frequency-weighted medoid.

use std::collections::{BTreeMap, HashMap};

use crate::domain::{EntityKey, LocationKey, Trip};
use crate::error::{Error, Result};
use crate::metrics::seuc;
use crate::selection::{NeighborList, Splits};

/// Multiset of trips, stored as distinct locations with their frequencies.
#[derive(Debug, Clone, PartialEq)]
pub struct TripPool {
    /// Distinct trips in coordinate-lexicographic order with frequency >= 1.
    distinct: Vec<(Trip, usize)>,
    total: usize,
}

impl TripPool {
    /// Trips are identified by exact coordinate equality; y-days are ignored.
    /// The first occurrence of each location is the one kept.
    pub fn from_trips<'a>(trips: impl IntoIterator<Item = &'a Trip>) -> Self {
        let mut index: HashMap<LocationKey, usize> = HashMap::new();
        let mut distinct: Vec<(Trip, usize)> = Vec::new();
        let mut total = 0;
        for t in trips {
            total += 1;
            match index.get(&t.location_key()) {
                Some(&i) => distinct[i].1 += 1,
                None => {
                    index.insert(t.location_key(), distinct.len());
                    distinct.push((t.clone(), 1));
                }
            }
        }
        distinct.sort_by(|a, b| a.0.cmp_location(&b.0));
        Self { distinct, total }
    }

    pub fn distinct(&self) -> &[(Trip, usize)] {
        &self.distinct
    }

    /// Size of the multiset.
    pub fn len(&self) -> usize {
        self.total
    }

    pub fn is_empty(&self) -> bool {
        self.total == 0
    }
}

/// Pools training and validation trips of the listed entities.
pub fn pool_trips(neighbors: &[EntityKey], splits: &Splits) -> Result<TripPool> {
    let mut histories = Vec::with_capacity(neighbors.len());
    for key in neighbors {
        histories.push(
            splits
                .get(key)
                .ok_or_else(|| Error::UnknownEntity(key.clone()))?,
        );
    }
    Ok(TripPool::from_trips(
        histories.iter().flat_map(|s| s.all_trips()),
    ))
}

/// Smallest offset that keeps every pairwise similarity in the pool
/// nonnegative: the largest pairwise `seuc`.
pub fn medoid_const(pool: &TripPool) -> Result<f64> {
    if pool.is_empty() {
        return Err(Error::EmptyPool);
    }
    let d = &pool.distinct;
    let mut max = 0.0f64;
    for i in 0..d.len() {
        for j in i + 1..d.len() {
            max = max.max(seuc(&d[i].0, &d[j].0)?);
        }
    }
    Ok(max)
}

/// Frequency-weighted medoid of the pool.
///
/// `score(x) = f_x * sum_y f_y * (c - seuc(x, y))` over distinct `y`, with
/// `c = medoid_const(pool)`. Ties go to the lexicographically smallest trip.
pub fn representative_trip(pool: &TripPool) -> Result<Trip> {
    let c = medoid_const(pool)?;
    let d = &pool.distinct;
    let mut best: Option<(usize, f64)> = None;
    for (i, (x, fx)) in d.iter().enumerate() {
        let mut acc = 0.0;
        for (y, fy) in d {
            acc += *fy as f64 * (c - seuc(x, y)?);
        }
        let score = *fx as f64 * acc;
        if best.is_none_or(|(_, s)| score > s) {
            best = Some((i, score));
        }
    }
    let (i, _) = best.ok_or(Error::EmptyPool)?;
    Ok(d[i].0.clone())
}

/// Predicts from an already computed neighbor list: the owner plus its `k`
/// nearest others. Returns the trip and the number of others actually used.
pub fn predict_from_list(list: &NeighborList, k: usize, splits: &Splits) -> Result<(Trip, usize)> {
    let members = list.select(k);
    let used = members.len() - 1;
    let pool = pool_trips(&members, splits)?;
    Ok((representative_trip(&pool)?, used))
}

pub fn predict_trip(
    target: &EntityKey,
    k: usize,
    neighbor_lists: &BTreeMap<EntityKey, NeighborList>,
    splits: &Splits,
) -> Result<(Trip, usize)> {
    let list = neighbor_lists
        .get(target)
        .ok_or_else(|| Error::UnknownEntity(target.clone()))?;
    predict_from_list(list, k, splits)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{Dataset, DatasetMeta, Entity};
    use crate::metrics::MetricVariant;
    use crate::selection::all_neighbor_sets;

    fn at(x: f64) -> Trip {
        Trip::single_leg(x, 0.0, 0.0, 0.0, 1).unwrap()
    }

    fn freqs(pool: &TripPool) -> Vec<(f64, usize)> {
        pool.distinct()
            .iter()
            .map(|(t, f)| (t.origin.lon, *f))
            .collect()
    }

    #[test]
    fn pool_examples() {
        let pool = TripPool::from_trips(&[at(1.0), at(1.0), at(1.0), at(1.0)]);
        assert_eq!(freqs(&pool), [(1.0, 4)]);
        let pool = TripPool::from_trips(&[at(2.0), at(1.0)]);
        assert_eq!(freqs(&pool), [(1.0, 1), (2.0, 1)]);
        // two L=2 entities sharing one trip: {s, u1} + {s, u2}
        let pool = TripPool::from_trips(&[at(5.0), at(1.0), at(5.0), at(9.0)]);
        assert_eq!(freqs(&pool), [(1.0, 1), (5.0, 2), (9.0, 1)]);
        assert_eq!(pool.len(), 4);
    }

    #[test]
    fn signed_zero_is_one_location() {
        let pool = TripPool::from_trips(&[at(0.0), at(-0.0)]);
        assert_eq!(pool.distinct().len(), 1);
    }

    #[test]
    fn const_examples() {
        assert_eq!(
            medoid_const(&TripPool::from_trips(&[at(3.0), at(3.0)])).unwrap(),
            0.0
        );
        assert_eq!(
            medoid_const(&TripPool::from_trips(&[at(0.0), at(2.0)])).unwrap(),
            4.0
        );
        // collinear at 0, 1, 3: pairwise seuc 1, 4, 9
        let pool = TripPool::from_trips(&[at(0.0), at(1.0), at(3.0)]);
        assert_eq!(medoid_const(&pool).unwrap(), 9.0);
        assert!(matches!(
            medoid_const(&TripPool::from_trips(&[])),
            Err(Error::EmptyPool)
        ));
        assert!(matches!(
            representative_trip(&TripPool::from_trips(&[])),
            Err(Error::EmptyPool)
        ));
    }

    #[test]
    fn frequency_weighting_dominates() {
        // {x, x, y}: score(x) = 4s, score(y) = s
        let pool = TripPool::from_trips(&[at(2.0), at(0.0), at(2.0)]);
        assert_eq!(representative_trip(&pool).unwrap().origin.lon, 2.0);
        let pool = TripPool::from_trips(&vec![at(7.0); 3]);
        assert_eq!(representative_trip(&pool).unwrap().origin.lon, 7.0);
    }

    #[test]
    fn ties_break_lexicographically() {
        let pool = TripPool::from_trips(&[at(5.0), at(-1.0)]);
        assert_eq!(representative_trip(&pool).unwrap().origin.lon, -1.0);
    }

    fn entity(id: &str, xs: &[f64]) -> Entity {
        let trips = xs
            .iter()
            .enumerate()
            .map(|(i, &x)| Trip::single_leg(x, 0.0, 0.0, 0.0, i as u16 + 1).unwrap())
            .collect();
        Entity::new(EntityKey::new(id, 1, 8), trips, None).unwrap()
    }

    #[test]
    fn predict_examples() {
        let ds = Dataset::new(
            vec![
                entity("t", &[0.0, 0.0]),
                entity("c1", &[0.0, 5.0]),
                entity("c2", &[1.0, 1.0]),
            ],
            DatasetMeta::named("test"),
        )
        .unwrap();
        let splits = Splits::from_dataset(&ds).unwrap();
        let lists = all_neighbor_sets(&ds, MetricVariant::All2All).unwrap();
        let t = EntityKey::new("t", 1, 8);

        let (trip, used) = predict_trip(&t, 0, &lists, &splits).unwrap();
        assert_eq!((trip.origin.lon, used), (0.0, 0));
        let (trip, used) = predict_trip(&t, 1, &lists, &splits).unwrap();
        assert_eq!((trip.origin.lon, used), (0.0, 1));
        let (trip, used) = predict_trip(&t, 10, &lists, &splits).unwrap();
        assert_eq!((trip.origin.lon, used), (0.0, 1));

        // c1 pools its own {0, 5}; with both others admitted the pool is {0,5,0,0,1,1}
        let c1 = EntityKey::new("c1", 1, 8);
        assert_eq!(lists[&c1].n_others(), 2);
        let (trip, _) = predict_trip(&c1, 2, &lists, &splits).unwrap();
        assert_eq!(trip.origin.lon, 0.0);

        assert!(matches!(
            predict_trip(&EntityKey::new("nope", 1, 1), 0, &lists, &splits),
            Err(Error::UnknownEntity(_))
        ));
        assert!(matches!(
            pool_trips(&[EntityKey::new("nope", 1, 1)], &splits),
            Err(Error::UnknownEntity(_))
        ));
    }
}
