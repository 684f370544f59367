//! Cluster-based negative phrase sampling to a fixed phrase-set size.
//!
//! Every phrase in the database belongs to one semantic cluster. A scene's
//! positives induce a set of positive clusters; negatives are drawn uniformly,
//! without replacement, from the phrases of all other clusters and carry
//! all-zero frame labels.

use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::path::Path;

use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::labels::{labels_for_intervals, FrameLabels};
use crate::manifest::{self, DatasetRow, EnrichedRow, PhraseSetEntry};
use crate::par::{self, Workers};
use crate::rng::{derive_rng, stream_for_id, Domain};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ClusterId(pub u32);

impl fmt::Display for ClusterId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CentroidRecord {
    pub cluster_id: u32,
    pub name: String,
    pub embedding: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhraseRecord {
    pub phrase: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub embedding: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cluster_id: Option<u32>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Centroid {
    pub cluster_id: ClusterId,
    pub name: String,
    /// Unit-norm.
    pub embedding: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PhraseEntry {
    pub phrase: String,
    pub embedding: Option<Vec<f64>>,
    pub cluster_id: ClusterId,
}

/// Phrase database, cluster centroids and the phrase-to-cluster map. Immutable once built.
#[derive(Debug, Clone)]
pub struct ClusterSpace {
    centroids: Vec<Centroid>,
    phrases: Vec<PhraseEntry>,
    by_phrase: HashMap<String, usize>,
    dim: usize,
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

impl ClusterSpace {
    /// Builds the space. Centroids are normalized to unit length; phrases without
    /// a cluster id are assigned to their nearest centroid.
    pub fn new(centroids: Vec<CentroidRecord>, phrases: Vec<PhraseRecord>) -> Result<Self> {
        if centroids.is_empty() {
            return Err(Error::EmptyInput("centroids"));
        }
        let dim = centroids[0].embedding.len();
        if dim == 0 {
            return Err(Error::DimensionMismatch("centroid embeddings are empty".into()));
        }
        let mut seen = BTreeSet::new();
        let mut cents = Vec::with_capacity(centroids.len());
        for (row, c) in centroids.into_iter().enumerate() {
            if c.embedding.len() != dim {
                return Err(Error::DimensionMismatch(format!(
                    "centroid {} has dimension {}, expected {dim}",
                    c.cluster_id,
                    c.embedding.len()
                )));
            }
            if !seen.insert(c.cluster_id) {
                return Err(Error::InvalidParam(format!("duplicate cluster id {}", c.cluster_id)));
            }
            let n = norm(&c.embedding);
            if !(n > 0.0 && n.is_finite()) {
                return Err(Error::ZeroNorm { what: "centroids", row });
            }
            cents.push(Centroid {
                cluster_id: ClusterId(c.cluster_id),
                name: c.name,
                embedding: c.embedding.iter().map(|x| x / n).collect(),
            });
        }
        cents.sort_by_key(|c| c.cluster_id);

        let mut space = ClusterSpace {
            centroids: cents,
            phrases: Vec::with_capacity(phrases.len()),
            by_phrase: HashMap::with_capacity(phrases.len()),
            dim,
        };
        for rec in phrases {
            let cluster_id = match (rec.cluster_id, &rec.embedding) {
                (Some(id), _) => {
                    let id = ClusterId(id);
                    if space.centroid(id).is_none() {
                        return Err(Error::UnknownCluster(id.0));
                    }
                    id
                }
                (None, Some(e)) => space.assign(e)?,
                (None, None) => {
                    return Err(Error::InvalidParam(format!(
                        "phrase {:?} needs an embedding or a cluster_id",
                        rec.phrase
                    )))
                }
            };
            if space.by_phrase.contains_key(&rec.phrase) {
                return Err(Error::InvalidParam(format!("duplicate phrase {:?}", rec.phrase)));
            }
            space.by_phrase.insert(rec.phrase.clone(), space.phrases.len());
            space.phrases.push(PhraseEntry {
                phrase: rec.phrase,
                embedding: rec.embedding,
                cluster_id,
            });
        }
        Ok(space)
    }

    pub fn load(centroids: &Path, phrases: &Path) -> Result<Self> {
        Self::new(manifest::read_jsonl(centroids)?, manifest::read_jsonl(phrases)?)
    }

    pub fn centroids(&self) -> &[Centroid] {
        &self.centroids
    }

    pub fn phrases(&self) -> &[PhraseEntry] {
        &self.phrases
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn centroid(&self, id: ClusterId) -> Option<&Centroid> {
        self.centroids
            .binary_search_by_key(&id, |c| c.cluster_id)
            .ok()
            .map(|i| &self.centroids[i])
    }

    pub fn cluster_of(&self, phrase: &str) -> Option<ClusterId> {
        self.by_phrase.get(phrase).map(|&i| self.phrases[i].cluster_id)
    }

    /// Nearest centroid by cosine similarity; ties go to the lowest cluster id.
    pub fn assign(&self, embedding: &[f64]) -> Result<ClusterId> {
        if embedding.len() != self.dim {
            return Err(Error::DimensionMismatch(format!(
                "embedding has dimension {}, centroids have {}",
                embedding.len(),
                self.dim
            )));
        }
        let n = norm(embedding);
        if !(n > 0.0 && n.is_finite()) {
            return Err(Error::ZeroNorm { what: "phrase embedding", row: 0 });
        }
        let mut best = (f64::NEG_INFINITY, self.centroids[0].cluster_id);
        for c in &self.centroids {
            let cos = c.embedding.iter().zip(embedding).map(|(a, b)| a * b).sum::<f64>() / n;
            if cos > best.0 {
                best = (cos, c.cluster_id);
            }
        }
        Ok(best.1)
    }

    /// Indices into [`phrases`](Self::phrases) whose cluster is not in `excluded`.
    pub fn candidate_pool(&self, excluded: &BTreeSet<ClusterId>) -> Vec<usize> {
        (0..self.phrases.len())
            .filter(|&i| !excluded.contains(&self.phrases[i].cluster_id))
            .collect()
    }
}

pub fn assign_cluster(embedding: &[f64], space: &ClusterSpace) -> Result<ClusterId> {
    space.assign(embedding)
}

/// A labeled positive phrase of one scene.
#[derive(Debug, Clone, PartialEq)]
pub struct Positive {
    pub phrase: String,
    pub labels: FrameLabels,
    /// Used to assign a cluster when the phrase is not in the database.
    pub embedding: Option<Vec<f64>>,
}

impl Positive {
    pub fn new(phrase: impl Into<String>, labels: FrameLabels) -> Self {
        Positive {
            phrase: phrase.into(),
            labels,
            embedding: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PoolPolicy {
    /// Too small a negative pool is an error.
    #[default]
    Strict,
    /// Too small a pool is filled by drawing with replacement.
    AllowReplacement,
}

/// Fixed-size phrase set: the `positive_count` positives first, then negatives.
#[derive(Debug, Clone, PartialEq)]
pub struct EnrichedAnnotation {
    pub phrases: Vec<String>,
    pub labels: Vec<FrameLabels>,
    pub positive_count: usize,
}

impl EnrichedAnnotation {
    pub fn len(&self) -> usize {
        self.phrases.len()
    }

    pub fn is_empty(&self) -> bool {
        self.phrases.is_empty()
    }

    pub fn negatives(&self) -> &[String] {
        &self.phrases[self.positive_count..]
    }
}

pub fn positive_clusters(positives: &[Positive], space: &ClusterSpace) -> Result<BTreeSet<ClusterId>> {
    positives
        .iter()
        .map(|p| match (space.cluster_of(&p.phrase), &p.embedding) {
            (Some(c), _) => Ok(c),
            (None, Some(e)) => space.assign(e),
            (None, None) => Err(Error::UnknownPhrase(p.phrase.clone())),
        })
        .collect()
}

/// Pads `positives` to exactly `n` phrases with negatives from clusters disjoint
/// from every positive's cluster.
pub fn sample_negative_phrases<R: Rng>(
    positives: &[Positive],
    space: &ClusterSpace,
    n: usize,
    frames: usize,
    policy: PoolPolicy,
    rng: &mut R,
) -> Result<EnrichedAnnotation> {
    let k = positives.len();
    if k > n {
        return Err(Error::TooManyPositives { positives: k, n });
    }
    if let Some(p) = positives.iter().find(|p| p.labels.len() != frames) {
        return Err(Error::DimensionMismatch(format!(
            "labels for {:?} have {} frames, expected {frames}",
            p.phrase,
            p.labels.len()
        )));
    }
    let excluded = positive_clusters(positives, space)?;
    let pool = space.candidate_pool(&excluded);
    let need = n - k;

    let picked: Vec<usize> = if need <= pool.len() {
        index::sample(rng, pool.len(), need).into_iter().map(|i| pool[i]).collect()
    } else if policy == PoolPolicy::AllowReplacement && !pool.is_empty() {
        let draws: Vec<usize> = (0..need).map(|_| pool[rng.gen_range(0..pool.len())]).collect();
        let distinct: BTreeSet<_> = draws.iter().collect();
        log::warn!(
            "negative pool has {} phrases for {need} slots; {} duplicate draws",
            pool.len(),
            need - distinct.len()
        );
        draws
    } else {
        return Err(Error::PoolExhausted {
            needed: need,
            available: pool.len(),
        });
    };

    let mut phrases: Vec<String> = positives.iter().map(|p| p.phrase.clone()).collect();
    let mut labels: Vec<FrameLabels> = positives.iter().map(|p| p.labels.clone()).collect();
    for i in picked {
        phrases.push(space.phrases[i].phrase.clone());
        labels.push(FrameLabels::zeros(frames));
    }
    Ok(EnrichedAnnotation {
        phrases,
        labels,
        positive_count: k,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EnrichOptions {
    /// Phrase-set size per scene.
    pub n: usize,
    pub seed: u64,
    pub frames: usize,
    pub policy: PoolPolicy,
}

impl Default for EnrichOptions {
    fn default() -> Self {
        Self {
            n: 20,
            seed: 0,
            frames: 64,
            policy: PoolPolicy::Strict,
        }
    }
}

/// Positives of a dataset row: one per distinct phrase, labels from all of its events.
pub fn scene_positives(row: &DatasetRow, frames: usize) -> Vec<Positive> {
    let mut order: Vec<&str> = Vec::new();
    for e in &row.events {
        if !order.contains(&e.phrase.as_str()) {
            order.push(&e.phrase);
        }
    }
    order
        .into_iter()
        .map(|phrase| {
            let events: Vec<_> = row.events.iter().filter(|e| e.phrase == phrase).collect();
            let intervals: Vec<(f64, f64)> = events.iter().map(|e| (e.onset_s, e.offset_s)).collect();
            Positive {
                phrase: phrase.to_string(),
                labels: labels_for_intervals(&intervals, frames, row.duration_s),
                embedding: events.iter().find_map(|e| e.embedding.clone()),
            }
        })
        .collect()
}

/// Enriches one scene using the stream derived from `(seed, scene id)`.
pub fn enrich_scene(row: &DatasetRow, space: &ClusterSpace, opts: &EnrichOptions) -> Result<EnrichedAnnotation> {
    let positives = scene_positives(row, opts.frames);
    let mut rng = derive_rng(opts.seed, Domain::NegativeSampling, stream_for_id(&row.id));
    sample_negative_phrases(&positives, space, opts.n, opts.frames, opts.policy, &mut rng)
}

pub fn enriched_row(row: &DatasetRow, ann: &EnrichedAnnotation) -> EnrichedRow {
    EnrichedRow {
        scene: row.clone(),
        phrase_set: ann
            .phrases
            .iter()
            .enumerate()
            .map(|(i, p)| PhraseSetEntry {
                phrase: p.clone(),
                positive: i < ann.positive_count,
            })
            .collect(),
    }
}

pub fn enrich_manifest(
    rows: &[DatasetRow],
    space: &ClusterSpace,
    opts: &EnrichOptions,
    workers: Workers,
) -> Result<Vec<EnrichedRow>> {
    par::try_map_indexed(rows.len(), workers, |i| {
        enrich_scene(&rows[i], space, opts)
            .map(|ann| enriched_row(&rows[i], &ann))
            .map_err(|e| Error::Scene {
                index: i,
                source: Box::new(e),
            })
    })
}
