//! Affine prediction over the horizon with disturbance feedback
//! `u_{k+l} = v_l + Σ_{i<l} L_{l,i} w_{k+i}`.

use std::ops::AddAssign;

use nalgebra::{DMatrix, DVector};

use crate::system::LinearSystem;
use crate::{Error, Result};

/// Layout of the decision vector `z`: all `v_l` (row-major, `l = 0..N`),
/// then the gains `L_{l,i}` for `0 ≤ i < l < N` ordered by `l`, then `i`,
/// each stored row-major.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FeedbackPolicy {
    pub horizon: usize,
    pub n_u: usize,
    pub n_w: usize,
    /// Whether the gains are decision variables; without them `z = v`.
    pub affine: bool,
}

impl FeedbackPolicy {
    pub fn new(horizon: usize, n_u: usize, n_w: usize, affine: bool) -> Result<Self> {
        if horizon == 0 {
            return Err(Error::InvalidProblem("horizon must be at least 1".into()));
        }
        Ok(Self { horizon, n_u, n_w, affine })
    }

    pub fn open_loop_len(&self) -> usize {
        self.horizon * self.n_u
    }

    pub fn gain_count(&self) -> usize {
        if self.affine {
            self.horizon * (self.horizon - 1) / 2 * self.n_u * self.n_w
        } else {
            0
        }
    }

    pub fn dim(&self) -> usize {
        self.open_loop_len() + self.gain_count()
    }

    pub fn v_index(&self, l: usize, r: usize) -> usize {
        l * self.n_u + r
    }

    /// Index of `L_{l,i}[r, c]`; `None` unless `i < l < N` and gains are
    /// enabled.
    pub fn gain_index(&self, l: usize, i: usize, r: usize, c: usize) -> Option<usize> {
        if !self.affine || i >= l || l >= self.horizon {
            return None;
        }
        let block = l * (l - 1) / 2 + i;
        Some(self.open_loop_len() + block * self.n_u * self.n_w + r * self.n_w + c)
    }

    pub fn is_gain(&self, index: usize) -> bool {
        index >= self.open_loop_len()
    }

    /// Predicted input `u_l` for the given decision vector and past
    /// disturbances `w[i]`, `i < l`.
    pub fn input(&self, z: &[f64], l: usize, w: &[Vec<f64>]) -> Vec<f64> {
        (0..self.n_u)
            .map(|r| {
                let mut u = z[self.v_index(l, r)];
                for (i, wi) in w.iter().enumerate().take(l) {
                    for (c, wc) in wi.iter().enumerate() {
                        if let Some(k) = self.gain_index(l, i, r, c) {
                            u += z[k] * wc;
                        }
                    }
                }
                u
            })
            .collect()
    }

    /// Receding-horizon warm start: every block moves one step earlier, the
    /// last `v` is repeated and the new last gains are zero.
    pub fn shift(&self, z: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim()];
        for l in 0..self.horizon {
            let from = (l + 1).min(self.horizon - 1);
            for r in 0..self.n_u {
                out[self.v_index(l, r)] = z[self.v_index(from, r)];
            }
        }
        for l in 1..self.horizon.saturating_sub(1) {
            for i in 0..l {
                for r in 0..self.n_u {
                    for c in 0..self.n_w {
                        if let (Some(to), Some(from)) = (self.gain_index(l, i, r, c), self.gain_index(l + 1, i + 1, r, c)) {
                            out[to] = z[from];
                        }
                    }
                }
            }
        }
        out
    }
}

/// A predicted scalar `a(z) + b(z)ᵀw` with `a`, `b` affine in `z`, where `w`
/// stacks the first `b.len()` disturbances of the horizon.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineRow {
    pub constant: f64,
    pub z_terms: Vec<(usize, f64)>,
    pub w_constant: Vec<f64>,
    pub w_terms: Vec<Vec<(usize, f64)>>,
}

impl AffineRow {
    pub fn components(&self) -> usize {
        self.w_constant.len()
    }

    pub fn nominal(&self, z: &[f64]) -> f64 {
        self.constant + self.z_terms.iter().map(|&(i, a)| a * z[i]).sum::<f64>()
    }

    pub fn w_coefficient(&self, z: &[f64], k: usize) -> f64 {
        self.w_constant[k] + self.w_terms[k].iter().map(|&(i, a)| a * z[i]).sum::<f64>()
    }

    /// Value for a realisation of the stacked disturbances (extra entries are
    /// ignored).
    pub fn value(&self, z: &[f64], w_stack: &[f64]) -> f64 {
        self.nominal(z) + (0..self.components()).map(|k| self.w_coefficient(z, k) * w_stack[k]).sum::<f64>()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PredictionModel {
    pub policy: FeedbackPolicy,
    pub n_y: usize,
    /// `outputs[l - 1][j]` is `y_{k+l, j}` for `l = 1..=N`.
    pub outputs: Vec<Vec<AffineRow>>,
    /// `inputs[l][r]` is `u_{k+l, r}` for `l = 0..N`.
    pub inputs: Vec<Vec<AffineRow>>,
}

/// Symbolic state: `c + Z z + Σ_k (W0[:,k] + WZ_k z) w_k`.
struct Symbolic {
    c: DVector<f64>,
    z: DMatrix<f64>,
    w0: DMatrix<f64>,
    wz: Vec<DMatrix<f64>>,
}

fn sparse(row: impl Iterator<Item = f64>) -> Vec<(usize, f64)> {
    row.enumerate().filter(|(_, v)| *v != 0.0).collect()
}

fn rows(s: &Symbolic, m: usize) -> Vec<AffineRow> {
    (0..s.c.len())
        .map(|j| AffineRow {
            constant: s.c[j],
            z_terms: sparse(s.z.row(j).iter().copied()),
            w_constant: (0..m).map(|k| s.w0[(j, k)]).collect(),
            w_terms: (0..m).map(|k| sparse(s.wz[k].row(j).iter().copied())).collect(),
        })
        .collect()
}

/// Affine maps of every predicted output `y_{k+l}` (`l = 1..=N`) and input
/// `u_{k+l}` (`l = 0..N`) in `z` and the stacked disturbances.
pub fn build_prediction(sys: &LinearSystem, x0: &DVector<f64>, policy: FeedbackPolicy) -> Result<PredictionModel> {
    let (n_x, n_u, n_w) = (sys.n_x(), sys.n_u(), sys.n_w());
    if x0.len() != n_x {
        return Err(Error::Dimension(format!("initial state has length {}, expected {n_x}", x0.len())));
    }
    if policy.n_u != n_u || policy.n_w != n_w {
        return Err(Error::Dimension("feedback policy does not match the system".into()));
    }
    let n = policy.horizon;
    let nz = policy.dim();
    let nw_total = n * n_w;
    let mut x = Symbolic {
        c: x0.clone(),
        z: DMatrix::zeros(n_x, nz),
        w0: DMatrix::zeros(n_x, nw_total),
        wz: vec![DMatrix::zeros(n_x, nz); nw_total],
    };
    let mut outputs = Vec::with_capacity(n);
    let mut inputs = Vec::with_capacity(n);

    for l in 0..n {
        let mut u = Symbolic {
            c: DVector::zeros(n_u),
            z: DMatrix::zeros(n_u, nz),
            w0: DMatrix::zeros(n_u, nw_total),
            wz: vec![DMatrix::zeros(n_u, nz); nw_total],
        };
        for r in 0..n_u {
            u.z[(r, policy.v_index(l, r))] = 1.0;
            for i in 0..l {
                for c in 0..n_w {
                    if let Some(k) = policy.gain_index(l, i, r, c) {
                        u.wz[i * n_w + c][(r, k)] = 1.0;
                    }
                }
            }
        }
        inputs.push(rows(&u, l * n_w));

        x.c = &sys.a * &x.c + &sys.b * &u.c + sys.offset(l);
        x.z = &sys.a * &x.z + &sys.b * &u.z;
        x.w0 = &sys.a * &x.w0;
        x.w0.columns_mut(l * n_w, n_w).add_assign(&sys.g);
        // disturbances at time ≥ l + 1 have no effect yet
        for k in 0..(l * n_w).min(nw_total) {
            x.wz[k] = &sys.a * &x.wz[k] + &sys.b * &u.wz[k];
        }

        let y = Symbolic {
            c: &sys.output * &x.c,
            z: &sys.output * &x.z,
            w0: &sys.output * &x.w0,
            wz: x.wz[..(l + 1) * n_w].iter().map(|m| &sys.output * m).collect(),
        };
        outputs.push(rows(&y, (l + 1) * n_w));
    }
    Ok(PredictionModel { policy, n_y: sys.n_y(), outputs, inputs })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gain_layout_is_dense_and_ordered() {
        let p = FeedbackPolicy::new(4, 2, 3, true).unwrap();
        let mut seen = Vec::new();
        for l in 0..4 {
            for i in 0..l {
                for r in 0..2 {
                    for c in 0..3 {
                        seen.push(p.gain_index(l, i, r, c).unwrap());
                    }
                }
            }
        }
        let want: Vec<usize> = (p.open_loop_len()..p.dim()).collect();
        assert_eq!(seen, want);
        assert_eq!(p.gain_index(2, 2, 0, 0), None);
        assert_eq!(FeedbackPolicy::new(4, 2, 3, false).unwrap().dim(), 8);
    }

    #[test]
    fn shift_moves_blocks_forward() {
        let p = FeedbackPolicy::new(3, 1, 1, true).unwrap();
        // v0 v1 v2 | L10 L20 L21
        let z = [1.0, 2.0, 3.0, 10.0, 20.0, 21.0];
        assert_eq!(p.shift(&z), vec![2.0, 3.0, 3.0, 21.0, 0.0, 0.0]);
    }
}
