//! Speaker embeddings, the low-rank "seen speaker" manifold, and the three
//! inference-time speaker strategies.
//!
//! Pool embeddings are `normalize(basis * z + offset)` for a standard-normal
//! latent `z`, so every seen speaker lies in the span of the basis columns and
//! the offset. Random unit vectors almost never do, which is what separates
//! the `Random` strategy from `Sampled`.

use std::collections::BTreeMap;
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rand::Rng as _;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::corpus::Utterance;
use crate::error::{Error, Result};
use crate::seed;

pub const EMBEDDING_DIM: usize = 256;
pub const DEFAULT_RANK: usize = 8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpeakerEmbedding {
    pub id: String,
    pub vector: Vec<f64>,
}

impl SpeakerEmbedding {
    pub fn norm(&self) -> f64 {
        l2(&self.vector)
    }

    pub fn dot(&self, other: &[f64]) -> f64 {
        self.vector.iter().zip(other).map(|(a, b)| a * b).sum()
    }
}

fn l2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub(crate) fn normalize(mut v: Vec<f64>) -> Vec<f64> {
    let n = l2(&v);
    for x in &mut v {
        *x /= n;
    }
    v
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FactorModel {
    /// `rank` columns of length 256.
    pub basis: Vec<Vec<f64>>,
    pub offset: Vec<f64>,
    pub rank: usize,
}

impl FactorModel {
    /// Offset length relative to a typical `basis * z` for standard-normal `z`.
    const OFFSET_SCALE: f64 = 0.75;

    pub fn random(rank: usize, seed: u64) -> Result<Self> {
        if rank == 0 || rank > EMBEDDING_DIM {
            return Err(Error::InvalidRank {
                rank,
                max: EMBEDDING_DIM,
            });
        }
        let mut rng = seed::rng(seed::derive(seed, "factor-model", rank as u64));
        let scale = 1.0 / (EMBEDDING_DIM as f64).sqrt();
        let mut column = || -> Vec<f64> {
            (0..EMBEDDING_DIM)
                .map(|_| rng.sample::<f64, _>(StandardNormal) * scale)
                .collect()
        };
        let basis: Vec<Vec<f64>> = (0..rank).map(|_| column()).collect();
        let offset = column()
            .into_iter()
            .map(|x| x * Self::OFFSET_SCALE * (rank as f64).sqrt())
            .collect();
        Ok(FactorModel {
            basis,
            offset,
            rank,
        })
    }

    /// The unnormalized manifold point `basis * z + offset`.
    pub fn point(&self, latent: &[f64]) -> Vec<f64> {
        let mut v = self.offset.clone();
        for (col, &z) in self.basis.iter().zip(latent) {
            for (x, c) in v.iter_mut().zip(col) {
                *x += c * z;
            }
        }
        v
    }

    /// Column matrix `[basis | offset]`.
    fn span_matrix(&self) -> DMatrix<f64> {
        let cols = self.basis.iter().chain(std::iter::once(&self.offset));
        let mut m = DMatrix::zeros(EMBEDDING_DIM, self.rank + 1);
        for (j, col) in cols.enumerate() {
            for (i, &x) in col.iter().enumerate() {
                m[(i, j)] = x;
            }
        }
        m
    }

    /// Residual of `v` after least-squares projection onto the span.
    pub fn residual(&self, v: &[f64]) -> Vec<f64> {
        let q = self.span_matrix().qr().q();
        let x = DVector::from_column_slice(v);
        let proj = &q * (q.transpose() * &x);
        (x - proj).iter().copied().collect()
    }
}

/// Distance of an embedding from the seen-speaker manifold: the norm of the
/// residual after least-squares projection onto `span(basis) + offset`.
/// The span is a linear subspace, so the value is scale-invariant and exactly
/// zero (up to rounding) for every pool member.
pub fn manifold_distance(e: &SpeakerEmbedding, fm: &FactorModel) -> f64 {
    l2(&fm.residual(&e.vector)).max(0.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingPool {
    pub embeddings: BTreeMap<String, SpeakerEmbedding>,
    pub factor_model: FactorModel,
    pub seed: u64,
}

impl EmbeddingPool {
    /// Draw one embedding per id on `fm`. Each speaker's latent depends only
    /// on `(seed, id)`, so growing the id list never moves existing speakers.
    pub fn sample<I, S>(fm: FactorModel, ids: I, seed: u64) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut embeddings = BTreeMap::new();
        for id in ids {
            let id = id.into();
            let mut rng = seed::rng(seed::derive_str(seed, "latent", &id));
            let z: Vec<f64> = (0..fm.rank).map(|_| rng.sample(StandardNormal)).collect();
            let vector = normalize(fm.point(&z));
            embeddings.insert(id.clone(), SpeakerEmbedding { id, vector });
        }
        if embeddings.is_empty() {
            return Err(Error::EmptyPool);
        }
        Ok(EmbeddingPool {
            embeddings,
            factor_model: fm,
            seed,
        })
    }

    pub fn get(&self, id: &str) -> Option<&SpeakerEmbedding> {
        self.embeddings.get(id)
    }

    pub fn len(&self) -> usize {
        self.embeddings.len()
    }

    pub fn is_empty(&self) -> bool {
        self.embeddings.is_empty()
    }

    /// Union of two pools over the same factor model; `other` wins on id clashes.
    pub fn merged(&self, other: &EmbeddingPool) -> EmbeddingPool {
        let mut out = self.clone();
        out.embeddings
            .extend(other.embeddings.iter().map(|(k, v)| (k.clone(), v.clone())));
        out
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        serde_json::to_writer(
            &mut w,
            &PoolHeader {
                seed: self.seed,
                factor_model: self.factor_model.clone(),
            },
        )?;
        w.write_all(b"\n")?;
        for e in self.embeddings.values() {
            serde_json::to_writer(&mut w, e)?;
            w.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let mut lines = BufReader::new(File::open(path)?).lines();
        let parse = |line: usize, e: serde_json::Error| Error::Parse {
            path: path.display().to_string(),
            line,
            msg: e.to_string(),
        };
        let header: PoolHeader = match lines.next() {
            Some(l) => serde_json::from_str(&l?).map_err(|e| parse(1, e))?,
            None => return Err(Error::EmptyPool),
        };
        let mut embeddings = BTreeMap::new();
        for (i, l) in lines.enumerate() {
            let l = l?;
            if l.trim().is_empty() {
                continue;
            }
            let e: SpeakerEmbedding = serde_json::from_str(&l).map_err(|e| parse(i + 2, e))?;
            embeddings.insert(e.id.clone(), e);
        }
        Ok(EmbeddingPool {
            embeddings,
            factor_model: header.factor_model,
            seed: header.seed,
        })
    }
}

#[derive(Serialize, Deserialize)]
struct PoolHeader {
    seed: u64,
    factor_model: FactorModel,
}

/// Build a pool of `n_speakers` (ids `spk000`, `spk001`, ...) on a fresh
/// rank-`rank` factor model.
pub fn build_pool(n_speakers: usize, rank: usize, seed: u64) -> Result<EmbeddingPool> {
    let fm = FactorModel::random(rank, seed)?;
    EmbeddingPool::sample(fm, (0..n_speakers).map(|i| format!("spk{i:03}")), seed)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SpeakerStrategy {
    /// The utterance's own speaker embedding.
    Original,
    /// A uniformly chosen pool speaker other than the utterance's own.
    Sampled,
    /// A fresh Gaussian vector projected onto the unit sphere.
    Random,
}

impl fmt::Display for SpeakerStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SpeakerStrategy::Original => "original",
            SpeakerStrategy::Sampled => "sampled",
            SpeakerStrategy::Random => "random",
        })
    }
}

impl FromStr for SpeakerStrategy {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "original" => Ok(SpeakerStrategy::Original),
            "sampled" => Ok(SpeakerStrategy::Sampled),
            "random" => Ok(SpeakerStrategy::Random),
            other => Err(format!("unknown speaker strategy `{other}`")),
        }
    }
}

pub fn draw_embedding(
    strategy: SpeakerStrategy,
    utt: &Utterance,
    pool: &EmbeddingPool,
    seed: u64,
) -> Result<SpeakerEmbedding> {
    match strategy {
        SpeakerStrategy::Original => utt
            .embedding_ref
            .as_deref()
            .and_then(|r| pool.get(r))
            .cloned()
            .ok_or_else(|| Error::MissingEmbedding(utt.id.clone())),
        SpeakerStrategy::Sampled => {
            let others: Vec<&SpeakerEmbedding> = pool
                .embeddings
                .values()
                .filter(|e| e.id != utt.speaker_id)
                .collect();
            if others.is_empty() {
                return Err(Error::NoOtherSpeaker(utt.speaker_id.clone()));
            }
            let mut rng = seed::rng(seed::derive(seed, "sampled", 0));
            Ok(others[rng.random_range(0..others.len())].clone())
        }
        SpeakerStrategy::Random => {
            let mut rng = seed::rng(seed::derive(seed, "random-dvector", 0));
            let v: Vec<f64> = (0..EMBEDDING_DIM)
                .map(|_| rng.sample(StandardNormal))
                .collect();
            Ok(SpeakerEmbedding {
                id: format!("random-{seed:016x}"),
                vector: normalize(v),
            })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{Domain, Origin};

    fn utt_of(speaker: &str) -> Utterance {
        Utterance {
            id: "u".into(),
            text: "a b".into(),
            speaker_id: speaker.into(),
            domain: Domain::A,
            origin: Origin::Human,
            embedding_ref: Some(speaker.into()),
            audio: None,
        }
    }

    #[test]
    fn pool_embeddings_are_unit_norm_and_deterministic() {
        let pool = build_pool(50, 8, 3).unwrap();
        assert_eq!(pool.len(), 50);
        for e in pool.embeddings.values() {
            assert!((e.norm() - 1.0).abs() < 1e-6);
        }
        assert_eq!(pool, build_pool(50, 8, 3).unwrap());
    }

    #[test]
    fn invalid_rank() {
        assert!(matches!(
            build_pool(3, 257, 1),
            Err(Error::InvalidRank { rank: 257, .. })
        ));
        assert!(build_pool(3, 0, 1).is_err());
    }

    #[test]
    fn rank_one_points_lie_in_basis_plus_offset() {
        let pool = build_pool(2, 1, 9).unwrap();
        let fm = &pool.factor_model;
        for e in pool.embeddings.values() {
            // Least-squares oracle: solve for (a, b) in a*basis + b*offset
            // via the 2x2 normal equations and check the residual.
            let (u, o, v) = (&fm.basis[0], &fm.offset, &e.vector);
            let d = |x: &[f64], y: &[f64]| x.iter().zip(y).map(|(p, q)| p * q).sum::<f64>();
            let (uu, uo, oo, uv, ov) = (d(u, u), d(u, o), d(o, o), d(u, v), d(o, v));
            let det = uu * oo - uo * uo;
            let a = (uv * oo - ov * uo) / det;
            let b = (ov * uu - uv * uo) / det;
            let res: f64 = (0..EMBEDDING_DIM)
                .map(|i| (v[i] - a * u[i] - b * o[i]).powi(2))
                .sum::<f64>()
                .sqrt();
            assert!(res < 1e-9, "residual {res}");
        }
    }

    #[test]
    fn original_is_identity() {
        let pool = build_pool(5, 8, 1).unwrap();
        let e = draw_embedding(SpeakerStrategy::Original, &utt_of("spk002"), &pool, 99).unwrap();
        assert_eq!(&e, pool.get("spk002").unwrap());
    }

    #[test]
    fn original_requires_reference() {
        let pool = build_pool(5, 8, 1).unwrap();
        let mut u = utt_of("spk002");
        u.embedding_ref = None;
        assert!(matches!(
            draw_embedding(SpeakerStrategy::Original, &u, &pool, 0),
            Err(Error::MissingEmbedding(_))
        ));
        u.embedding_ref = Some("nobody".into());
        assert!(draw_embedding(SpeakerStrategy::Original, &u, &pool, 0).is_err());
    }

    #[test]
    fn sampled_excludes_self_and_needs_others() {
        let pool = build_pool(1, 8, 1).unwrap();
        assert!(matches!(
            draw_embedding(SpeakerStrategy::Sampled, &utt_of("spk000"), &pool, 0),
            Err(Error::NoOtherSpeaker(_))
        ));
        let pool = build_pool(4, 8, 1).unwrap();
        for s in 0..200 {
            let e = draw_embedding(SpeakerStrategy::Sampled, &utt_of("spk001"), &pool, s).unwrap();
            assert_ne!(e.id, "spk001");
            assert!(pool.get(&e.id).is_some());
        }
    }

    #[test]
    fn random_is_unit_norm_and_off_pool() {
        let pool = build_pool(5, 8, 1).unwrap();
        let e = draw_embedding(SpeakerStrategy::Random, &utt_of("spk000"), &pool, 4).unwrap();
        assert!((e.norm() - 1.0).abs() < 1e-9);
        assert!(pool.get(&e.id).is_none());
    }

    #[test]
    fn pool_members_sit_on_the_manifold() {
        let pool = build_pool(50, 8, 5).unwrap();
        for e in pool.embeddings.values() {
            assert!(manifold_distance(e, &pool.factor_model) <= 0.15);
        }
        // An in-span point built directly from a latent is at distance 0.
        let fm = &pool.factor_model;
        let p = SpeakerEmbedding {
            id: "p".into(),
            vector: normalize(fm.point(&[0.3, -1.0, 2.0, 0.0, 0.1, 0.5, -0.7, 1.1])),
        };
        assert!(manifold_distance(&p, fm) < 1e-9);
    }

    #[test]
    fn random_vectors_are_far_from_the_manifold() {
        for s in 0..5 {
            let pool = build_pool(50, 8, s).unwrap();
            let fm = &pool.factor_model;
            let pool_mean: f64 = pool
                .embeddings
                .values()
                .map(|e| manifold_distance(e, fm))
                .sum::<f64>()
                / pool.len() as f64;
            let r = draw_embedding(SpeakerStrategy::Random, &utt_of("x"), &pool, s + 100).unwrap();
            assert!(manifold_distance(&r, fm) > pool_mean);
        }
    }

    #[test]
    fn save_load_round_trip() {
        let pool = build_pool(3, 2, 8).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("pool.jsonl");
        pool.save(&path).unwrap();
        assert_eq!(EmbeddingPool::load(&path).unwrap(), pool);
    }
}
