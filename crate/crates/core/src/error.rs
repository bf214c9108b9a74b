use crate::domain::EntityKey;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("coordinate component is not finite: {0}")]
    NonFiniteCoordinate(f64),
    #[error("trip at y-day {yday} has {len} via-points; only single-leg trips are supported")]
    UnsupportedTrip { yday: u16, len: usize },
    #[error("entity {key} has no history trips")]
    EmptyEntity { key: EntityKey },
    #[error("entity {key} has more than one trip on y-day {yday}")]
    DuplicateYday { key: EntityKey, yday: u16 },
    #[error("entity {key}: test trip y-day {test} does not follow history (last y-day {last})")]
    TestNotAfterHistory {
        key: EntityKey,
        test: u16,
        last: u16,
    },
    #[error("duplicate entity {0}")]
    DuplicateEntity(EntityKey),
    #[error("unknown entity {0}")]
    UnknownEntity(EntityKey),

    #[error("ordered distance requires aligned histories, got lengths {left} and {right}")]
    UnalignedHistories { left: usize, right: usize },
    #[error("distance over an empty history")]
    EmptyHistory,
    #[error("similarity offset {constant} is below the trip distance {distance}")]
    NegativeSimilarity { constant: f64, distance: f64 },

    #[error("entity {key} has {len} history trips; at least 2 are needed to split")]
    CannotSplit { key: EntityKey, len: usize },
    #[error("trip pool is empty")]
    EmptyPool,

    #[error("feature matrix row {row} has negative entry {value}")]
    NegativeFeature { row: usize, value: f64 },
    #[error("factorization rank {rank} is outside 1..={max}")]
    RankOutOfRange { rank: usize, max: usize },
    #[error("feature matrix is empty or all zero")]
    DegenerateInput,
    #[error("invalid factorization parameter: {0}")]
    InvalidNmfParam(String),

    #[error("missing required column(s) {missing:?}; expected headers {expected:?}")]
    Schema {
        missing: Vec<String>,
        expected: Vec<&'static str>,
    },

    #[error("invalid synthetic parameters: {0}")]
    InvalidSynthParams(String),

    #[error("evaluation incomplete: {reason} for entity {key}")]
    EvaluationIncomplete {
        key: EntityKey,
        reason: &'static str,
    },
    #[error("evaluation set is empty")]
    EmptyEvaluation,
    #[error("invalid experiment: {0}")]
    InvalidExperiment(String),

    #[error("entity {key}: {source}")]
    Entity {
        key: EntityKey,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn for_entity(self, key: &EntityKey) -> Error {
        match self {
            e @ Error::Entity { .. } => e,
            other => Error::Entity {
                key: key.clone(),
                source: Box::new(other),
            },
        }
    }
}
