use log::warn;
use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};

/// Result of a PCA projection.
#[derive(Debug, Clone)]
pub struct Pca {
    /// Projected rows, `n x target_dim`.
    pub rows: Vec<Vec<f64>>,
    /// Eigenvalues of the sample covariance for the kept components, descending.
    /// Zero-padded components report 0.
    pub explained_variance: Vec<f64>,
    /// Unit-norm principal directions, one per kept component.
    pub components: Vec<Vec<f64>>,
    pub mean: Vec<f64>,
}

/// Projects column-centered `features` onto the top `target_dim` eigenvectors
/// of the sample covariance. Each component's sign is fixed so that its
/// largest-magnitude loading is positive. Components beyond the numerical
/// rank are zero columns.
pub fn pca(features: &[Vec<f64>], target_dim: usize) -> Result<Pca> {
    let n = features.len();
    if n == 0 {
        return Err(Error::Empty("PCA input".into()));
    }
    let d = features[0].len();
    if features.iter().any(|r| r.len() != d) {
        return Err(Error::InvalidInput("PCA rows must share one dimension".into()));
    }
    let mut mean = vec![0.0; d];
    for row in features {
        for (m, v) in mean.iter_mut().zip(row) {
            *m += v;
        }
    }
    for m in mean.iter_mut() {
        *m /= n as f64;
    }
    let centered = DMatrix::from_fn(n, d, |r, c| features[r][c] - mean[c]);
    let denom = if n > 1 { (n - 1) as f64 } else { 1.0 };
    let covariance = centered.transpose() * &centered / denom;

    let (eigenvalues, eigenvectors) = if d == 0 {
        (Vec::new(), DMatrix::zeros(0, 0))
    } else {
        let eig = SymmetricEigen::new(covariance);
        (eig.eigenvalues.iter().copied().collect::<Vec<_>>(), eig.eigenvectors)
    };
    let mut order: Vec<usize> = (0..eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eigenvalues[b].total_cmp(&eigenvalues[a]).then(a.cmp(&b)));

    let largest = eigenvalues.iter().copied().fold(0.0f64, f64::max);
    let tolerance = largest * 1e-10 * d.max(1) as f64;
    let rank = eigenvalues.iter().filter(|&&v| v > tolerance).count();
    if target_dim > rank {
        warn!("PCA target dimension {target_dim} exceeds rank {rank}; padding with zero components");
    }

    let kept = target_dim.min(rank);
    let mut components = Vec::with_capacity(target_dim);
    let mut explained_variance = Vec::with_capacity(target_dim);
    for &idx in order.iter().take(kept) {
        let mut v: Vec<f64> = eigenvectors.column(idx).iter().copied().collect();
        let pivot = v
            .iter()
            .copied()
            .enumerate()
            .max_by(|a, b| a.1.abs().total_cmp(&b.1.abs()).then(b.0.cmp(&a.0)))
            .map(|(_, x)| x)
            .unwrap_or(0.0);
        if pivot < 0.0 {
            v.iter_mut().for_each(|x| *x = -*x);
        }
        components.push(v);
        explained_variance.push(eigenvalues[idx]);
    }
    for _ in kept..target_dim {
        components.push(vec![0.0; d]);
        explained_variance.push(0.0);
    }

    let rows = (0..n)
        .map(|r| {
            components
                .iter()
                .map(|comp| centered.row(r).iter().zip(comp).map(|(a, b)| a * b).sum())
                .collect()
        })
        .collect();
    Ok(Pca {
        rows,
        explained_variance,
        components,
        mean,
    })
}
