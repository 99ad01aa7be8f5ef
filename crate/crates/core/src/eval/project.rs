//! Two-dimensional PCA projection for visual inspection of embeddings.

use alloc::vec;
use alloc::vec::Vec;

use crate::embedding::EmbeddingSet;
use crate::error::{Error, Result};
use crate::matrix::{dot, Matrix};

#[derive(Clone, Debug, PartialEq)]
pub struct Projection {
    /// `count × 2` coordinates on the first two principal directions.
    pub coords: Matrix,
    /// Variance captured by each of the two directions.
    pub explained_variance: [f64; 2],
    /// Sum of all covariance eigenvalues.
    pub total_variance: f64,
    /// Unit principal directions, one per row (`2 × dim`).
    pub components: Matrix,
}

/// Eigen-decomposition of a symmetric matrix by cyclic Jacobi rotations.
///
/// Returns eigenvalues in descending order and the matching eigenvectors as
/// matrix rows.
pub fn symmetric_eigen(a: &Matrix) -> Result<(Vec<f64>, Matrix)> {
    let n = a.rows();
    if a.cols() != n {
        return Err(Error::shape("eigen-decomposition needs a square matrix"));
    }
    let mut m = a.clone();
    let mut v = Matrix::identity(n);
    let scale: f64 = m.as_slice().iter().map(|x| x * x).sum::<f64>();
    for _sweep in 0..100 {
        let mut off = 0.0;
        for p in 0..n {
            for q in p + 1..n {
                off += m[(p, q)] * m[(p, q)];
            }
        }
        if off <= 1e-30 * scale || off == 0.0 {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = m[(p, q)];
                if apq == 0.0 {
                    continue;
                }
                let theta = (m[(q, q)] - m[(p, p)]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + libm::sqrt(theta * theta + 1.0));
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / libm::sqrt(t * t + 1.0);
                let s = t * c;
                for k in 0..n {
                    let mkp = m[(k, p)];
                    let mkq = m[(k, q)];
                    m[(k, p)] = c * mkp - s * mkq;
                    m[(k, q)] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let mpk = m[(p, k)];
                    let mqk = m[(q, k)];
                    m[(p, k)] = c * mpk - s * mqk;
                    m[(q, k)] = s * mpk + c * mqk;
                }
                for k in 0..n {
                    let vkp = v[(k, p)];
                    let vkq = v[(k, q)];
                    v[(k, p)] = c * vkp - s * vkq;
                    v[(k, q)] = s * vkp + c * vkq;
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| m[(j, j)].total_cmp(&m[(i, i)]));
    let values = order.iter().map(|&i| m[(i, i)]).collect();
    let mut vectors = Matrix::zeros(n, n);
    for (r, &i) in order.iter().enumerate() {
        for k in 0..n {
            vectors[(r, k)] = v[(k, i)];
        }
    }
    Ok((values, vectors))
}

/// Centres the rows and projects them on the two leading covariance
/// eigenvectors. Each direction's sign makes its largest-magnitude entry
/// positive.
pub fn project_2d(set: &EmbeddingSet) -> Result<Projection> {
    project_matrix(&set.to_matrix())
}

pub fn project_matrix(x: &Matrix) -> Result<Projection> {
    let (n, d) = x.shape();
    if n < 2 {
        return Err(Error::DegenerateSet("projection needs at least 2 points".into()));
    }
    let mut mean = vec![0.0; d];
    for row in x.iter_rows() {
        for (m, v) in mean.iter_mut().zip(row) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);
    let mut centred = x.clone();
    for i in 0..n {
        for (v, m) in centred.row_mut(i).iter_mut().zip(&mean) {
            *v -= m;
        }
    }
    let mut cov = centred.t_matmul(&centred)?;
    cov.scale(1.0 / (n - 1) as f64);
    let total: f64 = (0..d).map(|k| cov[(k, k)]).sum();
    if !(total > 0.0) {
        return Err(Error::DegenerateSet("all points coincide (rank 0)".into()));
    }

    let (values, vectors) = symmetric_eigen(&cov)?;
    let mut components = Matrix::zeros(2, d);
    for c in 0..2.min(d) {
        let dir = vectors.row(c);
        let lead = dir
            .iter()
            .copied()
            .fold(0.0f64, |acc, v| if v.abs() > acc.abs() { v } else { acc });
        let sign = if lead < 0.0 { -1.0 } else { 1.0 };
        for (o, v) in components.row_mut(c).iter_mut().zip(dir) {
            *o = sign * v;
        }
    }
    let mut coords = Matrix::zeros(n, 2);
    for i in 0..n {
        for c in 0..2 {
            coords[(i, c)] = dot(centred.row(i), components.row(c));
        }
    }
    let explained = [
        values.first().copied().unwrap_or(0.0).max(0.0),
        values.get(1).copied().unwrap_or(0.0).max(0.0),
    ];
    Ok(Projection {
        coords,
        explained_variance: explained,
        total_variance: total,
        components,
    })
}
