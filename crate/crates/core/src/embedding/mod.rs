//! UMAP-style projection of encoder latents to the plane.
//!
//! Fitting runs exact kNN, builds a fuzzy neighborhood graph, fits the
//! low-dimensional similarity curve, and lays the graph out by SGD from a
//! small random start. Unseen points are placed against the frozen training
//! layout.

mod curve;
mod export;
mod fuzzy;
mod knn;
mod layout;
mod quality;

use std::io::{Read, Write};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use curve::{curve_params, curve_sse};
pub use export::{coord_rows, read_coord_rows, write_coord_rows, CoordRow, Split};
pub use fuzzy::{fuzzy_weights, FuzzyGraph};
pub use knn::{euclidean, knn_graph, NeighborLists};
pub use quality::{silhouette, trustworthiness};

use layout::{optimize_layout, refine_point, Curve, LayoutParams};

const INIT_STD: f64 = 1e-2;
const FORMAT: &str = "tlt-planar-embedding";

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EmbedError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("invalid input: {0}")]
    Input(String),
    #[error("invalid state: {0}")]
    State(String),
    #[error("i/o error: {0}")]
    Io(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EmbedHyper {
    pub k: usize,
    pub min_dist: f64,
    pub epochs: usize,
    pub negative_samples: usize,
    pub learning_rate: f64,
    pub seed: u64,
}

impl Default for EmbedHyper {
    fn default() -> Self {
        Self {
            k: 15,
            min_dist: 0.1,
            epochs: 500,
            negative_samples: 5,
            learning_rate: 1.0,
            seed: 0,
        }
    }
}

impl EmbedHyper {
    pub fn validate(&self) -> Result<(), EmbedError> {
        if self.k == 0 {
            return Err(EmbedError::Config("k must be at least 1".into()));
        }
        if !(self.min_dist.is_finite() && self.min_dist > 0.0) {
            return Err(EmbedError::Config(format!("min_dist {} must be positive", self.min_dist)));
        }
        if self.epochs == 0 {
            return Err(EmbedError::Config("epochs must be at least 1".into()));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(EmbedError::Config(format!("learning rate {}", self.learning_rate)));
        }
        Ok(())
    }
}

/// A fitted projection: training latents and their planar coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct PlanarEmbedding {
    hyper: EmbedHyper,
    a: f64,
    b: f64,
    latents: Vec<Vec<f64>>,
    coords: Vec<[f64; 2]>,
    graph: FuzzyGraph,
}

/// kNN, fuzzy graph and layout in one call.
pub fn embed(latents: &[Vec<f64>], hyper: &EmbedHyper) -> Result<PlanarEmbedding, EmbedError> {
    hyper.validate()?;
    let neighbors = knn_graph(latents, hyper.k)?;
    let graph = fuzzy_weights(&neighbors, hyper.k);
    fit_embedding(latents, graph, hyper)
}

/// Lays out `graph` (built from `latents`) in the plane.
pub fn fit_embedding(latents: &[Vec<f64>], graph: FuzzyGraph, hyper: &EmbedHyper) -> Result<PlanarEmbedding, EmbedError> {
    hyper.validate()?;
    knn::check_points(latents)?;
    if graph.neighbors.indices.len() != latents.len() {
        return Err(EmbedError::Input(format!(
            "graph has {} points but {} latents were given",
            graph.neighbors.indices.len(),
            latents.len()
        )));
    }
    let (a, b) = curve_params(hyper.min_dist);
    let mut rng = ChaCha8Rng::seed_from_u64(hyper.seed);
    let normal = Normal::new(0.0, INIT_STD).expect("valid normal");
    let mut coords: Vec<[f64; 2]> = (0..latents.len()).map(|_| [normal.sample(&mut rng), normal.sample(&mut rng)]).collect();
    let params = LayoutParams {
        curve: Curve { a, b },
        epochs: hyper.epochs,
        negative_samples: hyper.negative_samples,
        learning_rate: hyper.learning_rate,
    };
    optimize_layout(&mut coords, &graph.edges, &params, &mut rng);
    Ok(PlanarEmbedding {
        hyper: *hyper,
        a,
        b,
        latents: latents.to_vec(),
        coords,
        graph,
    })
}

/// Mixes the seed with the bit pattern of a point so each new point gets its
/// own stream regardless of batch order.
fn point_seed(seed: u64, point: &[f64]) -> u64 {
    fn mix(mut z: u64) -> u64 {
        z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        z ^ (z >> 31)
    }
    point.iter().fold(mix(seed), |h, v| mix(h ^ v.to_bits()))
}

impl PlanarEmbedding {
    pub fn hyper(&self) -> &EmbedHyper {
        &self.hyper
    }

    pub fn curve(&self) -> (f64, f64) {
        (self.a, self.b)
    }

    pub fn latents(&self) -> &[Vec<f64>] {
        &self.latents
    }

    pub fn coords(&self) -> &[[f64; 2]] {
        &self.coords
    }

    pub fn graph(&self) -> &FuzzyGraph {
        &self.graph
    }

    pub fn len(&self) -> usize {
        self.coords.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    /// Largest pairwise distance between training coordinates.
    pub fn diameter(&self) -> f64 {
        let mut d = 0.0f64;
        for (i, p) in self.coords.iter().enumerate() {
            for q in &self.coords[i + 1..] {
                d = d.max((p[0] - q[0]).hypot(p[1] - q[1]));
            }
        }
        d
    }

    /// Places unseen latents against the frozen training layout.
    ///
    /// Each point starts at the membership-weighted mean of its k nearest
    /// training points and is refined for a third of the fitting epochs at a
    /// quarter of the learning rate. A latent identical to a training latent
    /// maps to that point's fitted coordinate. Outputs do not depend on batch
    /// order.
    pub fn transform_new(&self, new_latents: &[Vec<f64>]) -> Result<Vec<[f64; 2]>, EmbedError> {
        if self.latents.is_empty() {
            return Err(EmbedError::State("embedding has no training points".into()));
        }
        if new_latents.is_empty() {
            return Ok(Vec::new());
        }
        let dim = knn::check_points(new_latents)?;
        if dim != self.latents[0].len() {
            return Err(EmbedError::Input(format!(
                "new latents have dimension {dim}, embedding was fitted on {}",
                self.latents[0].len()
            )));
        }
        let k = self.hyper.k.min(self.latents.len());
        let params = LayoutParams {
            curve: Curve { a: self.a, b: self.b },
            epochs: (self.hyper.epochs / 3).max(1),
            negative_samples: self.hyper.negative_samples,
            learning_rate: self.hyper.learning_rate / 4.0,
        };
        Ok(new_latents
            .iter()
            .map(|q| {
                let (idx, dist) = knn::nearest(&self.latents, q, k, None);
                if dist[0] == 0.0 {
                    return self.coords[idx[0]];
                }
                let (rho, sigma, _) = fuzzy::smooth_knn(&dist, k);
                let neighbors: Vec<(usize, f64)> = idx
                    .iter()
                    .zip(&dist)
                    .map(|(&j, &d)| (j, fuzzy::membership(d, rho, sigma)))
                    .collect();
                let total: f64 = neighbors.iter().map(|e| e.1).sum();
                let mut start = [0.0; 2];
                for &(j, w) in &neighbors {
                    start[0] += w * self.coords[j][0] / total;
                    start[1] += w * self.coords[j][1] / total;
                }
                refine_point(start, &self.coords, &neighbors, &params, point_seed(self.hyper.seed, q))
            })
            .collect())
    }

    pub fn to_writer<W: Write>(&self, w: W) -> Result<(), EmbedError> {
        let doc = EmbeddingDocument {
            format: FORMAT.into(),
            hyper: self.hyper,
            a: self.a,
            b: self.b,
            latents: self.latents.clone(),
            coords: self.coords.clone(),
        };
        serde_json::to_writer_pretty(w, &doc).map_err(|e| EmbedError::Io(e.to_string()))
    }

    /// Loads a saved embedding; the fuzzy graph is rebuilt from the latents.
    pub fn from_reader<R: Read>(r: R) -> Result<Self, EmbedError> {
        let doc: EmbeddingDocument = serde_json::from_reader(r).map_err(|e| EmbedError::Input(e.to_string()))?;
        if doc.format != FORMAT {
            return Err(EmbedError::Input(format!("unexpected format tag {:?}", doc.format)));
        }
        doc.hyper.validate()?;
        if doc.latents.len() != doc.coords.len() {
            return Err(EmbedError::Input(format!(
                "{} latents but {} coordinates",
                doc.latents.len(),
                doc.coords.len()
            )));
        }
        if !(doc.a > 0.0 && doc.b > 0.0) || doc.coords.iter().flatten().any(|v| !v.is_finite()) {
            return Err(EmbedError::Input("invalid curve parameters or coordinates".into()));
        }
        let neighbors = knn_graph(&doc.latents, doc.hyper.k)?;
        Ok(Self {
            graph: fuzzy_weights(&neighbors, doc.hyper.k),
            hyper: doc.hyper,
            a: doc.a,
            b: doc.b,
            latents: doc.latents,
            coords: doc.coords,
        })
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct EmbeddingDocument {
    format: String,
    hyper: EmbedHyper,
    a: f64,
    b: f64,
    latents: Vec<Vec<f64>>,
    coords: Vec<[f64; 2]>,
}
