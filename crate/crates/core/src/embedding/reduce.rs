use std::collections::{BTreeMap, HashMap};
use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use super::EmbeddingVector;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReductionMethod {
    None,
    Pca,
    ExternalImport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReductionSpec {
    pub method: ReductionMethod,
    pub target_dim: usize,
    /// Similarity metric the reduced space is meant for. Only cosine exists.
    pub metric: String,
    /// Free-form provenance, e.g. the UMAP settings behind an imported file.
    #[serde(default)]
    pub params: BTreeMap<String, String>,
    #[serde(default)]
    pub import_path: Option<PathBuf>,
}

impl Default for ReductionSpec {
    fn default() -> Self {
        ReductionSpec {
            method: ReductionMethod::None,
            target_dim: 50,
            metric: "cosine".into(),
            params: BTreeMap::new(),
            import_path: None,
        }
    }
}

impl ReductionSpec {
    pub fn none() -> Self {
        Self::default()
    }

    pub fn pca(target_dim: usize) -> Self {
        ReductionSpec {
            method: ReductionMethod::Pca,
            target_dim,
            ..Self::default()
        }
    }

    /// Import of externally computed UMAP coordinates, recording the
    /// settings they were produced with.
    pub fn umap_import(path: impl Into<PathBuf>) -> Self {
        let params = [
            ("algorithm", "umap"),
            ("n_components", "50"),
            ("n_neighbors", "30"),
            ("min_dist", "0.0"),
            ("metric", "cosine"),
        ]
        .into_iter()
        .map(|(k, v)| (k.to_string(), v.to_string()))
        .collect();
        ReductionSpec {
            method: ReductionMethod::ExternalImport,
            target_dim: 50,
            metric: "cosine".into(),
            params,
            import_path: Some(path.into()),
        }
    }

    /// Parses the command-line form `none`, `pca`, `pca:<dim>` or
    /// `import:<path>`.
    pub fn parse(spec: &str) -> Result<Self> {
        let spec = spec.trim();
        if spec == "none" {
            return Ok(Self::none());
        }
        if spec == "pca" {
            return Ok(Self::pca(50));
        }
        if let Some(dim) = spec.strip_prefix("pca:") {
            let dim = dim
                .parse()
                .map_err(|_| Error::Config(format!("bad PCA dimension `{dim}`")))?;
            return Ok(Self::pca(dim));
        }
        if let Some(path) = spec.strip_prefix("import:") {
            return Ok(Self::umap_import(path));
        }
        Err(Error::Config(format!(
            "unknown reduction `{spec}` (expected none, pca[:dim] or import:<path>)"
        )))
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ImportRow {
    pub id: String,
    pub vec: Vec<f64>,
}

pub fn read_import_file(path: &Path) -> Result<Vec<ImportRow>> {
    crate::io::read_jsonl(path)
}

/// Reduces a set of vectors jointly. `ids` label the rows and are used to
/// align an imported file. Anchors and corpus vectors must go through one
/// call so they share the reduced space.
pub fn reduce(
    ids: &[String],
    vectors: &[EmbeddingVector],
    spec: &ReductionSpec,
) -> Result<Vec<EmbeddingVector>> {
    if ids.len() != vectors.len() {
        return Err(Error::InvalidInput(format!(
            "{} ids for {} vectors",
            ids.len(),
            vectors.len()
        )));
    }
    let source_dim = uniform_dim(vectors)?;
    match spec.method {
        ReductionMethod::None => Ok(vectors.to_vec()),
        ReductionMethod::Pca => {
            if spec.target_dim > source_dim {
                return Err(Error::InvalidInput(format!(
                    "target dimension {} exceeds source dimension {source_dim}",
                    spec.target_dim
                )));
            }
            pca(vectors, spec.target_dim)
        }
        ReductionMethod::ExternalImport => {
            let path = spec.import_path.as_deref().ok_or_else(|| {
                Error::Config("external reduction import needs an import file".into())
            })?;
            align_import(ids, read_import_file(path)?)
        }
    }
}

fn uniform_dim(vectors: &[EmbeddingVector]) -> Result<usize> {
    let Some(first) = vectors.first() else {
        return Ok(0);
    };
    let dim = first.dim();
    if let Some(v) = vectors.iter().find(|v| v.dim() != dim) {
        return Err(Error::DimensionMismatch {
            expected: dim,
            actual: v.dim(),
        });
    }
    Ok(dim)
}

fn align_import(ids: &[String], rows: Vec<ImportRow>) -> Result<Vec<EmbeddingVector>> {
    if rows.len() != ids.len() {
        return Err(Error::InvalidInput(format!(
            "reduction import has {} rows for {} input vectors",
            rows.len(),
            ids.len()
        )));
    }
    let mut by_id: HashMap<String, Vec<f64>> = HashMap::with_capacity(rows.len());
    for row in rows {
        if by_id.insert(row.id.clone(), row.vec).is_some() {
            return Err(Error::InvalidInput(format!(
                "reduction import repeats id `{}`",
                row.id
            )));
        }
    }
    let missing: Vec<String> = ids.iter().filter(|id| !by_id.contains_key(*id)).cloned().collect();
    if !missing.is_empty() {
        return Err(Error::Discrepancy {
            message: "reduction import lacks rows for ids".into(),
            ids: missing,
        });
    }
    let out = ids
        .iter()
        .map(|id| EmbeddingVector::new(by_id.remove(id).unwrap()))
        .collect::<Result<Vec<_>>>()?;
    uniform_dim(&out)?;
    Ok(out)
}

/// Mean-centred projection onto the top `target_dim` principal directions.
///
/// Directions come from the symmetric eigendecomposition of the covariance
/// matrix, ordered by decreasing eigenvalue. Each direction's sign is fixed
/// so that its largest-magnitude component is positive, which makes the
/// output reproducible bit for bit.
pub fn pca(vectors: &[EmbeddingVector], target_dim: usize) -> Result<Vec<EmbeddingVector>> {
    let n = vectors.len();
    let d = uniform_dim(vectors)?;
    if target_dim == 0 {
        return Err(Error::InvalidInput("PCA target dimension must be positive".into()));
    }
    if target_dim > d {
        return Err(Error::InvalidInput(format!(
            "target dimension {target_dim} exceeds source dimension {d}"
        )));
    }
    if n < target_dim {
        return Err(Error::InvalidInput(format!(
            "PCA to {target_dim} dimensions needs at least {target_dim} vectors, got {n}"
        )));
    }

    let mut mean = vec![0.0f64; d];
    for v in vectors {
        for (m, x) in mean.iter_mut().zip(v.values()) {
            *m += x;
        }
    }
    for m in &mut mean {
        *m /= n as f64;
    }
    let centered = DMatrix::from_fn(n, d, |i, j| vectors[i].values()[j] - mean[j]);
    let denom = (n.saturating_sub(1)).max(1) as f64;
    let cov = (centered.transpose() * &centered) / denom;
    let eig = SymmetricEigen::new(cov);

    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[b]
            .partial_cmp(&eig.eigenvalues[a])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });

    let mut basis = DMatrix::<f64>::zeros(d, target_dim);
    for (col, &src) in order.iter().take(target_dim).enumerate() {
        let mut dir = eig.eigenvectors.column(src).into_owned();
        let mut pivot = 0;
        for i in 1..d {
            if dir[i].abs() > dir[pivot].abs() {
                pivot = i;
            }
        }
        if dir[pivot] < 0.0 {
            dir.neg_mut();
        }
        basis.set_column(col, &dir);
    }

    let projected = centered * basis;
    (0..n)
        .map(|i| EmbeddingVector::new(projected.row(i).iter().copied().collect()))
        .collect()
}
