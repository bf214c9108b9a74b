//! Value types shared by every stage of the pipeline: coordinates, trips,
//! the `(user, weekday, hour)` entity key, entities and datasets.
//!
//! Everything here is immutable after construction. Constructors normalize
//! ordering (trips by y-day, entities by key) and reject inputs that would
//! make the ordering ambiguous.

use std::cmp::Ordering;
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A point in raw decimal degrees. No projection is applied anywhere.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Coordinate {
    pub lon: f64,
    pub lat: f64,
}

impl Coordinate {
    pub fn new(lon: f64, lat: f64) -> Result<Self> {
        for v in [lon, lat] {
            if !v.is_finite() {
                return Err(Error::NonFiniteCoordinate(v));
            }
        }
        Ok(Self { lon, lat })
    }
}

/// One realized journey. `via` holds intermediate transit stops; it must be
/// empty before the trip enters any distance computation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trip {
    pub origin: Coordinate,
    pub destination: Coordinate,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub via: Vec<Coordinate>,
    pub yday: u16,
}

impl Trip {
    /// Single-leg trip from `(o_lon, o_lat)` to `(d_lon, d_lat)`.
    pub fn single_leg(o_lon: f64, o_lat: f64, d_lon: f64, d_lat: f64, yday: u16) -> Result<Self> {
        Ok(Self {
            origin: Coordinate::new(o_lon, o_lat)?,
            destination: Coordinate::new(d_lon, d_lat)?,
            via: Vec::new(),
            yday,
        })
    }

    /// The four features `(o_lon, o_lat, d_lon, d_lat)`.
    pub fn features(&self) -> [f64; 4] {
        [
            self.origin.lon,
            self.origin.lat,
            self.destination.lon,
            self.destination.lat,
        ]
    }

    pub fn is_single_leg(&self) -> bool {
        self.via.is_empty()
    }

    /// Identity of the trip's location content, ignoring `yday`. Signed zeros
    /// are folded so that `-0.0` and `0.0` count as the same coordinate.
    pub fn location_key(&self) -> LocationKey {
        LocationKey(self.features().map(|v| (v + 0.0).to_bits()))
    }

    /// Lexicographic order on `(o_lon, o_lat, d_lon, d_lat)`.
    pub fn cmp_location(&self, other: &Trip) -> Ordering {
        self.features()
            .iter()
            .zip(other.features().iter())
            .map(|(a, b)| (a + 0.0).total_cmp(&(b + 0.0)))
            .find(|o| o.is_ne())
            .unwrap_or(Ordering::Equal)
    }
}

/// Bit pattern of a trip's four coordinates; equal keys mean coordinate-identical trips.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct LocationKey(pub [u64; 4]);

/// A user restricted to one weekly time slot. Orders by ticket, then weekday,
/// then hour.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct EntityKey {
    pub ticket_id: Arc<str>,
    pub wday: u8,
    pub dhour: u8,
}

impl EntityKey {
    pub fn new(ticket_id: impl Into<Arc<str>>, wday: u8, dhour: u8) -> Self {
        Self {
            ticket_id: ticket_id.into(),
            wday,
            dhour,
        }
    }
}

impl fmt::Display for EntityKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/w{}/h{}", self.ticket_id, self.wday, self.dhour)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Entity {
    key: EntityKey,
    history: Vec<Trip>,
    test_trip: Option<Trip>,
}

impl Entity {
    /// Builds an entity, sorting `history` by y-day.
    pub fn new(key: EntityKey, mut history: Vec<Trip>, test_trip: Option<Trip>) -> Result<Self> {
        if history.is_empty() {
            return Err(Error::EmptyEntity { key });
        }
        history.sort_by_key(|t| t.yday);
        if let Some(w) = history.windows(2).find(|w| w[0].yday == w[1].yday) {
            return Err(Error::DuplicateYday {
                key,
                yday: w[0].yday,
            });
        }
        let last = history[history.len() - 1].yday;
        if let Some(test) = &test_trip {
            if test.yday <= last {
                return Err(Error::TestNotAfterHistory {
                    key,
                    test: test.yday,
                    last,
                });
            }
        }
        Ok(Self {
            key,
            history,
            test_trip,
        })
    }

    pub fn key(&self) -> &EntityKey {
        &self.key
    }

    pub fn history(&self) -> &[Trip] {
        &self.history
    }

    pub fn test_trip(&self) -> Option<&Trip> {
        self.test_trip.as_ref()
    }

    /// History length `L`.
    pub fn len(&self) -> usize {
        self.history.len()
    }

    pub fn is_empty(&self) -> bool {
        self.history.is_empty()
    }
}

/// Number of history trips of an entity.
pub fn entity_length(e: &Entity) -> usize {
    e.len()
}

/// Where a dataset came from and which filters produced it.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub sources: Vec<String>,
    /// Distinct history lengths present, ascending.
    pub history_lengths: Vec<usize>,
    pub policy: Option<String>,
    pub seed: Option<u64>,
    /// Keys the error metric should be restricted to, when designated.
    pub eval_subset: Option<Vec<EntityKey>>,
    pub notes: Vec<String>,
}

impl DatasetMeta {
    pub fn named(source: impl Into<String>) -> Self {
        Self {
            sources: vec![source.into()],
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    entities: Vec<Entity>,
    meta: DatasetMeta,
}

impl Dataset {
    /// Sorts entities by key and rejects duplicate keys. `meta.history_lengths`
    /// is recomputed from the entities.
    pub fn new(mut entities: Vec<Entity>, mut meta: DatasetMeta) -> Result<Self> {
        entities.sort_by(|a, b| a.key.cmp(&b.key));
        if let Some(w) = entities.windows(2).find(|w| w[0].key == w[1].key) {
            return Err(Error::DuplicateEntity(w[0].key.clone()));
        }
        let mut lengths: Vec<usize> = entities.iter().map(Entity::len).collect();
        lengths.sort_unstable();
        lengths.dedup();
        meta.history_lengths = lengths;
        Ok(Self { entities, meta })
    }

    pub fn empty(meta: DatasetMeta) -> Self {
        Self {
            entities: Vec::new(),
            meta,
        }
    }

    pub fn entities(&self) -> &[Entity] {
        &self.entities
    }

    pub fn meta(&self) -> &DatasetMeta {
        &self.meta
    }

    pub fn len(&self) -> usize {
        self.entities.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entities.is_empty()
    }

    pub fn get(&self, key: &EntityKey) -> Option<&Entity> {
        self.entities
            .binary_search_by(|e| e.key.cmp(key))
            .ok()
            .map(|i| &self.entities[i])
    }

    pub fn keys(&self) -> impl Iterator<Item = &EntityKey> {
        self.entities.iter().map(Entity::key)
    }

    /// Entities with exactly `len` history trips.
    pub fn with_length(&self, len: usize) -> Dataset {
        let entities: Vec<Entity> = self
            .entities
            .iter()
            .filter(|e| e.len() == len)
            .cloned()
            .collect();
        let mut meta = self.meta.clone();
        meta.history_lengths = if entities.is_empty() {
            vec![]
        } else {
            vec![len]
        };
        meta.eval_subset = None;
        Dataset { entities, meta }
    }

    pub fn with_eval_subset(mut self, subset: Option<Vec<EntityKey>>) -> Dataset {
        self.meta.eval_subset = subset.map(|mut keys| {
            keys.sort();
            keys.dedup();
            keys
        });
        self
    }

    pub fn into_parts(self) -> (Vec<Entity>, DatasetMeta) {
        (self.entities, self.meta)
    }
}
