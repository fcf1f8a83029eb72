//! JSON run reports. Every reported number except the wall-clock fields is
//! fully determined by `(config, seed)`.

use serde::{Deserialize, Serialize};

#[derive(Debug, Serialize, Deserialize)]
pub struct ConfigEcho {
    pub input: String,
    pub objective: String,
    pub constraint: String,
    pub k: usize,
    pub eps: f64,
    pub seed: u64,
    pub repeats: usize,
    pub preset: String,
    pub jobs: usize,
    pub beam_width: Option<usize>,
    pub lambda: f64,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ProvenanceEcho {
    pub source: String, // "tree" or "estimator"
    pub delta_index: Option<usize>,
    pub tree: Option<usize>,
    pub leaf: Option<usize>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct BestBlock {
    pub objective: f64,
    pub centers: Vec<Vec<f64>>,
    pub memberships: Vec<Vec<usize>>,
    pub provenance: ProvenanceEcho,
    pub repeat: usize,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct RepeatRow {
    pub repeat: usize,
    pub objective: f64,
    pub delta: f64,
    pub tuples_evaluated: usize,
    pub candidates_per_guess: Vec<usize>,
    pub wall_clock_ms: f64,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct OracleBlock {
    pub cost: f64,
    pub ratio: f64,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct RunReport {
    pub config: ConfigEcho,
    pub best: BestBlock,
    pub upper_bound_c: f64,
    pub guesses: Vec<f64>,
    pub repeats: Vec<RepeatRow>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub oracle: Option<OracleBlock>,
    pub wall_clock_ms: f64,
}
