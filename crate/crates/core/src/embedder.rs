//! Applies branch encoders to samples and assembles concatenated descriptors.

use std::io::Write;
use std::ops::Range;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dataset::{write_with_prefix, Channel, Dataset, Sample, Split, CAMERA_CHANNEL};
use crate::error::{Error, Result};
use crate::numerics::{sq_dist, EncoderParams, Matrix};

/// Every split, for unfiltered embedding.
pub const ALL_SPLITS: &[Split] = &[Split::Train, Split::Query, Split::Gallery];

/// Columns `span` of the descriptor were produced by branch `branch`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub branch: String,
    pub span: Range<usize>,
}

/// Embeddings with the sample annotations they are aligned to.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingSet {
    matrix: Matrix,
    /// Dataset index of each row.
    pub sources: Vec<usize>,
    pub ids: Vec<u32>,
    pub cameras: Vec<u32>,
    /// Declared channels (camera excluded) and per-row labels in that order.
    pub channels: Vec<Channel>,
    pub bias: Vec<Vec<u32>>,
    pub splits: Vec<Split>,
    provenance: Vec<Provenance>,
}

impl EmbeddingSet {
    /// A single-branch set named `branch` over arbitrary rows.
    pub fn new(
        matrix: Matrix,
        ids: Vec<u32>,
        cameras: Vec<u32>,
        channels: Vec<Channel>,
        bias: Vec<Vec<u32>>,
        splits: Vec<Split>,
        branch: &str,
    ) -> Result<Self> {
        let n = matrix.rows();
        if ids.len() != n || cameras.len() != n || bias.len() != n || splits.len() != n {
            return Err(Error::Alignment(format!(
                "{n} embedding rows but {} ids, {} cameras, {} bias rows, {} split tags",
                ids.len(),
                cameras.len(),
                bias.len(),
                splits.len()
            )));
        }
        if let Some(i) = bias.iter().position(|b| b.len() != channels.len()) {
            return Err(Error::Alignment(format!(
                "row {i}: {} bias labels for {} channels",
                bias[i].len(),
                channels.len()
            )));
        }
        Ok(Self {
            provenance: vec![Provenance {
                branch: branch.to_string(),
                span: 0..matrix.cols(),
            }],
            sources: (0..n).collect(),
            ids,
            cameras,
            channels,
            bias,
            splits,
            matrix,
        })
    }

    pub fn matrix(&self) -> &Matrix {
        &self.matrix
    }

    pub fn dim(&self) -> usize {
        self.matrix.cols()
    }

    pub fn len(&self) -> usize {
        self.matrix.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn provenance(&self) -> &[Provenance] {
        &self.provenance
    }

    /// Names of every addressable channel, camera first.
    pub fn channel_names(&self) -> Vec<String> {
        std::iter::once(CAMERA_CHANNEL.to_string())
            .chain(self.channels.iter().map(|c| c.name.clone()))
            .collect()
    }

    /// Per-row labels of a channel (`camera` or a declared one).
    pub fn labels(&self, channel: &str) -> Result<Vec<u32>> {
        if channel == CAMERA_CHANNEL {
            return Ok(self.cameras.clone());
        }
        let c = self
            .channels
            .iter()
            .position(|ch| ch.name == channel)
            .ok_or_else(|| {
                Error::config(format!(
                    "unknown bias channel `{channel}` (available: {})",
                    self.channel_names().join(", ")
                ))
            })?;
        Ok(self.bias.iter().map(|b| b[c]).collect())
    }

    /// Row indices tagged with `split`.
    pub fn rows_of(&self, split: Split) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.splits[i] == split).collect()
    }

    /// Treats raw dataset features as one branch named `branch`, e.g. to audit
    /// externally computed embeddings.
    pub fn from_dataset(ds: &Dataset, branch: &str, splits: &[Split]) -> Self {
        let rows: Vec<usize> = (0..ds.len())
            .filter(|&i| splits.contains(&ds.samples()[i].split))
            .collect();
        let matrix = ds.features(&rows);
        Self::annotated(ds, rows, matrix, branch)
    }

    fn annotated(ds: &Dataset, rows: Vec<usize>, matrix: Matrix, branch: &str) -> Self {
        let s = ds.samples();
        Self {
            ids: rows.iter().map(|&i| s[i].id).collect(),
            cameras: rows.iter().map(|&i| s[i].camera).collect(),
            channels: ds.channels().to_vec(),
            bias: rows.iter().map(|&i| s[i].bias.clone()).collect(),
            splits: rows.iter().map(|&i| s[i].split).collect(),
            provenance: vec![Provenance {
                branch: branch.to_string(),
                span: 0..matrix.cols(),
            }],
            sources: rows,
            matrix,
        }
    }

    /// Rescales every row to unit length; zero rows are left alone.
    pub fn l2_normalize(&mut self) {
        for i in 0..self.matrix.rows() {
            let row = self.matrix.row_mut(i);
            let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm > 0.0 {
                row.iter_mut().for_each(|v| *v /= norm);
            }
        }
    }

    /// Squared Euclidean distance between two rows.
    pub fn sq_dist(&self, i: usize, j: usize) -> f64 {
        sq_dist(self.matrix.row(i), self.matrix.row(j))
    }

    /// Same samples in the same order with identical annotations.
    pub fn aligned_with(&self, other: &EmbeddingSet) -> bool {
        self.sources == other.sources
            && self.ids == other.ids
            && self.cameras == other.cameras
            && self.channels == other.channels
            && self.bias == other.bias
            && self.splits == other.splits
    }

    /// The embeddings as a dataset with `e0..` feature columns.
    pub fn to_dataset(&self, name: &str) -> Result<Dataset> {
        let samples = (0..self.len())
            .map(|i| Sample {
                features: self.matrix.row(i).to_vec(),
                id: self.ids[i],
                camera: self.cameras[i],
                bias: self.bias[i].clone(),
                split: self.splits[i],
            })
            .collect();
        Dataset::new(name, self.channels.clone(), self.dim(), samples)
    }

    /// Writes `id,camera,split,<channels>,e0..e{D-1}`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        write_with_prefix(&self.to_dataset("embeddings")?, out, "e")
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)?;
        std::fs::write(path, buf).map_err(|e| Error::io(path, e))
    }
}

/// Embeds every sample whose split is in `splits`, in dataset order.
///
/// Only the feature vectors enter the computation; annotations are copied
/// through for alignment.
pub fn embed_all(
    params: &EncoderParams,
    ds: &Dataset,
    splits: &[Split],
    branch: &str,
) -> Result<EmbeddingSet> {
    if params.input_dim() != ds.dim() {
        return Err(Error::config(format!(
            "encoder expects {} inputs, dataset has {} features",
            params.input_dim(),
            ds.dim()
        )));
    }
    let rows: Vec<usize> = (0..ds.len())
        .filter(|&i| splits.contains(&ds.samples()[i].split))
        .collect();
    let matrix = if rows.is_empty() {
        Matrix::zeros(0, params.output_dim())
    } else {
        params.forward(&ds.features(&rows))?
    };
    Ok(EmbeddingSet::annotated(ds, rows, matrix, branch))
}

/// Column-wise concatenation of aligned sets, recording each branch's span.
pub fn concat(sets: &[EmbeddingSet]) -> Result<EmbeddingSet> {
    let first = sets
        .first()
        .ok_or_else(|| Error::Alignment("nothing to concatenate".into()))?;
    if let Some(k) = sets.iter().position(|s| !s.aligned_with(first)) {
        return Err(Error::Alignment(format!(
            "set {k} is not aligned with set 0 (different samples or order)"
        )));
    }
    let dim: usize = sets.iter().map(EmbeddingSet::dim).sum();
    let n = first.len();
    let mut data = Vec::with_capacity(n * dim);
    for i in 0..n {
        for s in sets {
            data.extend_from_slice(s.matrix.row(i));
        }
    }
    let mut provenance = Vec::new();
    let mut offset = 0;
    for s in sets {
        for p in &s.provenance {
            provenance.push(Provenance {
                branch: p.branch.clone(),
                span: p.span.start + offset..p.span.end + offset,
            });
        }
        offset += s.dim();
    }
    Ok(EmbeddingSet {
        matrix: Matrix::from_vec(n, dim, data)?,
        provenance,
        ..first.clone()
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{generate_synthetic, read_dataset, GeneratorConfig};
    use crate::numerics::{Dense, EncoderShape};
    use crate::rng;

    fn small_ds() -> Dataset {
        let mut cfg = GeneratorConfig::default();
        cfg.n_ids = 6;
        cfg.n_train_ids = 3;
        cfg.samples_per_id = 4;
        generate_synthetic(&cfg, 5).unwrap()
    }

    #[test]
    fn identity_encoder_returns_features() {
        let ds = small_ds();
        let e = embed_all(&EncoderParams::identity(ds.dim()), &ds, ALL_SPLITS, "id").unwrap();
        assert_eq!(e.len(), ds.len());
        for (i, s) in ds.samples().iter().enumerate() {
            assert_eq!(e.matrix().row(i), s.features.as_slice());
        }
        assert_eq!(e.provenance(), &[Provenance { branch: "id".into(), span: 0..ds.dim() }]);
    }

    #[test]
    fn empty_filter_keeps_dimension() {
        let ds = small_ds();
        let params = EncoderParams::init(&EncoderShape::new(ds.dim(), vec![5], 3), &mut rng::stream(1, "i"))
            .unwrap();
        let e = embed_all(&params, &ds, &[Split::Query], "r").unwrap();
        assert!(e.is_empty());
        assert_eq!(e.dim(), 3);
    }

    #[test]
    fn batched_equals_row_by_row() {
        let ds = small_ds();
        let params = EncoderParams::init(&EncoderShape::new(ds.dim(), vec![7, 6], 4), &mut rng::stream(2, "i"))
            .unwrap();
        let e = embed_all(&params, &ds, ALL_SPLITS, "r").unwrap();
        for i in 0..ds.len() {
            let single = params.forward(&ds.features(&[i])).unwrap();
            assert_eq!(single.row(0), e.matrix().row(i));
        }
    }

    #[test]
    fn dimension_mismatch_is_config_error() {
        let ds = small_ds();
        let err = embed_all(&EncoderParams::identity(3), &ds, ALL_SPLITS, "x").unwrap_err();
        assert!(matches!(err, Error::Config(_)));
    }

    fn single_column(ds: &Dataset, value: f64) -> EmbeddingSet {
        let layer = Dense {
            weight: Matrix::zeros(1, ds.dim()),
            bias: vec![value],
        };
        let p = EncoderParams::new(vec![layer], 0.01).unwrap();
        embed_all(&p, ds, ALL_SPLITS, &format!("b{value}")).unwrap()
    }

    #[test]
    fn concat_columns_and_spans() {
        let ds = small_ds();
        let c = concat(&[single_column(&ds, 1.0), single_column(&ds, 2.0)]).unwrap();
        assert_eq!(c.dim(), 2);
        for i in 0..c.len() {
            assert_eq!(c.matrix().row(i), &[1.0, 2.0]);
        }
        assert_eq!(c.provenance()[0].span, 0..1);
        assert_eq!(c.provenance()[1].span, 1..2);
        assert_eq!(c.provenance()[1].branch, "b2");

        let a = single_column(&ds, 3.0);
        assert_eq!(concat(std::slice::from_ref(&a)).unwrap(), a);
    }

    #[test]
    fn concat_distance_is_sum_of_branch_distances() {
        let ds = small_ds();
        let mk = |seed| {
            let p = EncoderParams::init(&EncoderShape::new(ds.dim(), vec![8], 5), &mut rng::stream(seed, "i"))
                .unwrap();
            embed_all(&p, &ds, ALL_SPLITS, "b").unwrap()
        };
        let (a, b, c) = (mk(1), mk(2), mk(3));
        let all = concat(&[a.clone(), b.clone(), c.clone()]).unwrap();
        for i in 0..ds.len() {
            for j in 0..ds.len() {
                let parts = a.sq_dist(i, j) + b.sq_dist(i, j) + c.sq_dist(i, j);
                let whole = all.sq_dist(i, j);
                assert!((parts - whole).abs() <= 1e-12 * whole.max(1.0));
            }
        }
    }

    #[test]
    fn concat_rejects_misaligned() {
        let ds = small_ds();
        let full = single_column(&ds, 1.0);
        let params = EncoderParams::identity(ds.dim());
        let gallery = embed_all(&params, &ds, &[Split::Gallery], "g").unwrap();
        assert!(matches!(concat(&[full, gallery]), Err(Error::Alignment(_))));
        assert!(matches!(concat(&[]), Err(Error::Alignment(_))));
    }

    #[test]
    fn export_reads_back_as_dataset() {
        let ds = small_ds();
        let e = embed_all(&EncoderParams::identity(ds.dim()), &ds, ALL_SPLITS, "id").unwrap();
        let mut buf = Vec::new();
        e.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("id,camera,split,pose,e0,e1,"));
        let back = read_dataset(buf.as_slice(), "back").unwrap();
        assert!(back.same_content(&ds));
    }

    #[test]
    fn l2_switch_normalises_rows() {
        let ds = small_ds();
        let mut e = embed_all(&EncoderParams::identity(ds.dim()), &ds, ALL_SPLITS, "id").unwrap();
        e.l2_normalize();
        for r in e.matrix().row_iter() {
            let n: f64 = r.iter().map(|v| v * v).sum();
            assert!((n - 1.0).abs() < 1e-12);
        }
    }
}
