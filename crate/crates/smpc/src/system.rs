use cfcc_core::Distribution;
use nalgebra::{DMatrix, DVector};

use crate::{Error, Result};

/// `x_{k+1} = A x_k + B u_k + G w_k + c_k`, `y_k = C x_k`, with independent
/// disturbance components `w_{k,j}` drawn i.i.d. over time.
#[derive(Debug, Clone)]
pub struct LinearSystem {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub g: DMatrix<f64>,
    /// Affine term per step; the last entry is held for all later steps.
    pub c: Vec<DVector<f64>>,
    pub output: DMatrix<f64>,
    pub disturbances: Vec<Distribution>,
}

impl LinearSystem {
    pub fn new(
        a: DMatrix<f64>,
        b: DMatrix<f64>,
        g: DMatrix<f64>,
        c: Vec<DVector<f64>>,
        output: DMatrix<f64>,
        disturbances: Vec<Distribution>,
    ) -> Result<Self> {
        let n = a.nrows();
        let check = |ok: bool, what: &str| if ok { Ok(()) } else { Err(Error::Dimension(what.to_string())) };
        check(a.is_square(), "A must be square")?;
        check(b.nrows() == n, "B must have as many rows as A")?;
        check(g.nrows() == n, "G must have as many rows as A")?;
        check(g.ncols() == disturbances.len(), "G needs one column per disturbance component")?;
        check(!c.is_empty() && c.iter().all(|c| c.len() == n), "c must be a nonempty list of state-sized vectors")?;
        check(output.ncols() == n, "C must have as many columns as A")?;
        Ok(Self { a, b, g, c, output, disturbances })
    }

    pub fn n_x(&self) -> usize {
        self.a.nrows()
    }

    pub fn n_u(&self) -> usize {
        self.b.ncols()
    }

    pub fn n_w(&self) -> usize {
        self.g.ncols()
    }

    pub fn n_y(&self) -> usize {
        self.output.nrows()
    }

    pub fn offset(&self, k: usize) -> &DVector<f64> {
        &self.c[k.min(self.c.len() - 1)]
    }

    pub fn step(&self, x: &DVector<f64>, u: &DVector<f64>, w: &DVector<f64>, k: usize) -> DVector<f64> {
        &self.a * x + &self.b * u + &self.g * w + self.offset(k)
    }

    /// Same system with the affine term sequence starting `k` steps later.
    pub fn shifted(&self, k: usize) -> Self {
        let mut s = self.clone();
        let start = k.min(self.c.len() - 1);
        s.c = self.c[start..].to_vec();
        s
    }
}
