use super::matrix::{dot, Matrix};
use crate::{Error, Result};

/// Fitted principal-component projection.
#[derive(Debug, Clone, PartialEq)]
pub struct PcaModel {
    pub mean: Vec<f64>,
    /// `k × d`, orthonormal rows sorted by explained variance.
    pub components: Matrix,
    pub explained_variance: Vec<f64>,
    /// Sum of all `d` covariance eigenvalues, retained or not.
    pub total_variance: f64,
    /// Set when the data had (near) zero variance and `k` was forced to 1.
    pub degenerate: bool,
}

const JACOBI_TOL: f64 = 1e-12;
const JACOBI_MAX_SWEEPS: usize = 100;

impl PcaModel {
    /// Fits on `n × d` data, keeping the smallest `k` whose cumulative
    /// explained variance reaches `variance_target` (a fraction in (0, 1]).
    pub fn fit(data: &Matrix, variance_target: f64) -> Result<Self> {
        let (n, d) = (data.rows(), data.cols());
        if n < 2 {
            return Err(Error::InsufficientData(format!(
                "PCA needs at least 2 samples, got {n}"
            )));
        }
        if !(variance_target > 0.0 && variance_target <= 1.0) {
            return Err(Error::Config(format!(
                "variance target must lie in (0, 1], got {variance_target}"
            )));
        }
        if !data.is_finite() {
            return Err(Error::InsufficientData("PCA data contains non-finite entries".into()));
        }
        let mean = data.column_means();
        let mut cov = Matrix::zeros(d, d);
        let mut centered = vec![0.0; d];
        for row in data.iter_rows() {
            for (c, (x, m)) in centered.iter_mut().zip(row.iter().zip(&mean)) {
                *c = x - m;
            }
            for i in 0..d {
                let ci = centered[i];
                if ci == 0.0 {
                    continue;
                }
                for j in i..d {
                    cov[(i, j)] += ci * centered[j];
                }
            }
        }
        let denom = (n - 1) as f64;
        for i in 0..d {
            for j in i..d {
                let v = cov[(i, j)] / denom;
                cov[(i, j)] = v;
                cov[(j, i)] = v;
            }
        }

        let (values, vectors) = jacobi_eigen(&cov)?;
        let mut order: Vec<usize> = (0..d).collect();
        order.sort_by(|&a, &b| values[b].total_cmp(&values[a]).then(a.cmp(&b)));
        let sorted: Vec<f64> = order.iter().map(|&i| values[i].max(0.0)).collect();
        let total: f64 = sorted.iter().sum();

        let degenerate = total <= 1e-12;
        let k = if degenerate {
            log::warn!("PCA data has near-zero total variance; keeping a single component");
            1
        } else {
            let mut cum = 0.0;
            let mut k = d;
            for (i, v) in sorted.iter().enumerate() {
                cum += v;
                if cum / total >= variance_target - 1e-12 {
                    k = i + 1;
                    break;
                }
            }
            k
        };

        let mut components = Matrix::zeros(k, d);
        for (r, &src) in order.iter().take(k).enumerate() {
            let row = components.row_mut(r);
            for (c, v) in row.iter_mut().enumerate() {
                *v = vectors[(c, src)];
            }
            // Largest-magnitude entry positive; first index wins ties.
            let mut pivot = 0;
            for c in 1..d {
                if row[c].abs() > row[pivot].abs() {
                    pivot = c;
                }
            }
            if row[pivot] < 0.0 {
                row.iter_mut().for_each(|v| *v = -*v);
            }
        }

        Ok(PcaModel {
            mean,
            components,
            explained_variance: sorted[..k].to_vec(),
            total_variance: total,
            degenerate,
        })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn k(&self) -> usize {
        self.components.rows()
    }

    /// Fraction of total variance captured by the retained components.
    pub fn explained_fraction(&self) -> f64 {
        if self.total_variance <= 0.0 {
            return 1.0;
        }
        self.explained_variance.iter().sum::<f64>() / self.total_variance
    }

    /// Coordinates of `x` in the retained subspace.
    pub fn project(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.dim() {
            return Err(Error::Dimension {
                context: "PCA input",
                expected: self.dim(),
                got: x.len(),
            });
        }
        let centered: Vec<f64> = x.iter().zip(&self.mean).map(|(a, m)| a - m).collect();
        Ok(self
            .components
            .iter_rows()
            .map(|c| dot(c, &centered))
            .collect())
    }

    /// `mean + Cᵀ · (C · (x − mean))`
    pub fn reconstruct(&self, x: &[f64]) -> Result<Vec<f64>> {
        let coords = self.project(x)?;
        let mut out = self.mean.clone();
        for (coef, comp) in coords.iter().zip(self.components.iter_rows()) {
            for (o, c) in out.iter_mut().zip(comp) {
                *o += coef * c;
            }
        }
        Ok(out)
    }
}

/// Eigendecomposition of a symmetric matrix by cyclic Jacobi rotations.
///
/// Returns unsorted eigenvalues and a matrix whose column `i` is the
/// eigenvector for eigenvalue `i`.
pub fn jacobi_eigen(sym: &Matrix) -> Result<(Vec<f64>, Matrix)> {
    let n = sym.rows();
    if sym.cols() != n {
        return Err(Error::Dimension {
            context: "symmetric eigendecomposition",
            expected: n,
            got: sym.cols(),
        });
    }
    let mut a = sym.clone();
    let mut v = Matrix::identity(n);
    let scale = a.data().iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-300);

    for _ in 0..JACOBI_MAX_SWEEPS {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[(i, j)] * a[(i, j)])
            .sum::<f64>()
            .sqrt();
        if off <= JACOBI_TOL * scale {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[(p, q)];
                if apq == 0.0 {
                    continue;
                }
                let theta = (a[(q, q)] - a[(p, p)]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[(k, p)];
                    let akq = a[(k, q)];
                    a[(k, p)] = c * akp - s * akq;
                    a[(k, q)] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[(p, k)];
                    let aqk = a[(q, k)];
                    a[(p, k)] = c * apk - s * aqk;
                    a[(q, k)] = s * apk + c * aqk;
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
    let values = (0..n).map(|i| a[(i, i)]).collect();
    Ok((values, v))
}
