//! The stacked "artificial data" system.
//!
//! Every group contributes a row block `X⁽ᶻ⁾/√n_z`. The target block only
//! touches the shared β columns; each auxiliary block touches the β columns and
//! its own ω columns:
//!
//! ```text
//!        β          ω_a        ω_b
//!   [ X_t/√n_t      0          0     ]   target rows
//!   [ X_a/√n_a   X_a/√n_a      0     ]   auxiliary a
//!   [ X_b/√n_b      0       X_b/√n_b ]   auxiliary b
//! ```
//!
//! The dense `N × pZ` matrix is never formed by the solvers. All products go
//! through the blocks, so every column touches at most two row blocks.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::datamodel::{CoefficientEstimate, MultiSourceProblem};
use crate::error::{Error, Result};

/// Who owns a block of columns in Φ.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BlockOwner {
    Target,
    /// ω block of the auxiliary group with this original group index.
    Auxiliary(usize),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ColumnBlock {
    pub start: usize,
    pub end: usize,
    pub owner: BlockOwner,
}

#[derive(Debug, Clone)]
pub struct StackedSystem {
    p: usize,
    /// Scaled row blocks; block 0 is the target, block `b ≥ 1` owns ω block `b`.
    blocks: Vec<DMatrix<f64>>,
    row_offsets: Vec<usize>,
    y: DVector<f64>,
    layout: Vec<ColumnBlock>,
    col_norms_sq: Vec<f64>,
}

impl StackedSystem {
    pub fn build(problem: &MultiSourceProblem) -> Result<Self> {
        build_stacked(problem)
    }

    fn from_blocks(
        p: usize,
        blocks: Vec<DMatrix<f64>>,
        y_parts: Vec<DVector<f64>>,
        layout: Vec<ColumnBlock>,
    ) -> Self {
        let mut row_offsets = Vec::with_capacity(blocks.len() + 1);
        let mut off = 0;
        for b in &blocks {
            row_offsets.push(off);
            off += b.nrows();
        }
        row_offsets.push(off);
        let mut y = DVector::zeros(off);
        for (b, part) in y_parts.iter().enumerate() {
            y.rows_mut(row_offsets[b], part.len()).copy_from(part);
        }

        let z = blocks.len();
        let mut col_norms_sq = vec![0.0; p * z];
        for (b, block) in blocks.iter().enumerate() {
            for c in 0..p {
                let sq = block.column(c).norm_squared();
                col_norms_sq[c] += sq;
                if b > 0 {
                    col_norms_sq[b * p + c] = sq;
                }
            }
        }
        StackedSystem {
            p,
            blocks,
            row_offsets,
            y,
            layout,
            col_norms_sq,
        }
    }

    /// Feature dimension `p` of each block.
    pub fn p(&self) -> usize {
        self.p
    }

    /// Number of groups `Z`.
    pub fn z(&self) -> usize {
        self.blocks.len()
    }

    /// Total stacked rows `N`.
    pub fn n_total(&self) -> usize {
        self.y.len()
    }

    /// Total stacked columns `pZ`.
    pub fn n_cols(&self) -> usize {
        self.p * self.blocks.len()
    }

    pub fn y(&self) -> &DVector<f64> {
        &self.y
    }

    pub fn layout(&self) -> &[ColumnBlock] {
        &self.layout
    }

    pub fn blocks(&self) -> &[DMatrix<f64>] {
        &self.blocks
    }

    /// Row range `[start, end)` of block `b` within the stacked rows.
    pub fn block_rows(&self, b: usize) -> (usize, usize) {
        (self.row_offsets[b], self.row_offsets[b + 1])
    }

    pub fn column_norms_sq(&self) -> &[f64] {
        &self.col_norms_sq
    }

    fn check_phi(&self, len: usize) -> Result<()> {
        if len != self.n_cols() {
            return Err(Error::DimensionMismatch {
                context: "coefficient vector".into(),
                expected: self.n_cols(),
                found: len,
            });
        }
        Ok(())
    }

    fn check_rows(&self, len: usize) -> Result<()> {
        if len != self.n_total() {
            return Err(Error::DimensionMismatch {
                context: "stacked row vector".into(),
                expected: self.n_total(),
                found: len,
            });
        }
        Ok(())
    }

    /// `𝕏 Φ` computed blockwise.
    pub fn apply(&self, phi: &[f64]) -> Result<DVector<f64>> {
        self.check_phi(phi.len())?;
        let p = self.p;
        let beta = DVector::from_column_slice(&phi[..p]);
        let mut out = DVector::zeros(self.n_total());
        for (b, block) in self.blocks.iter().enumerate() {
            let (start, end) = self.block_rows(b);
            let mut seg = out.rows_mut(start, end - start);
            if b == 0 {
                seg.gemv(1.0, block, &beta, 0.0);
            } else {
                let coef = &beta + DVector::from_column_slice(&phi[b * p..(b + 1) * p]);
                seg.gemv(1.0, block, &coef, 0.0);
            }
        }
        Ok(out)
    }

    /// `𝕏ᵀ r` computed blockwise.
    pub fn apply_transpose(&self, r: &[f64]) -> Result<DVector<f64>> {
        self.check_rows(r.len())?;
        let p = self.p;
        let mut out = DVector::zeros(self.n_cols());
        let mut part = DVector::zeros(p);
        for (b, block) in self.blocks.iter().enumerate() {
            let (start, end) = self.block_rows(b);
            let seg = DVector::from_column_slice(&r[start..end]);
            part.gemv_tr(1.0, block, &seg, 0.0);
            for c in 0..p {
                out[c] += part[c];
            }
            if b > 0 {
                out.rows_mut(b * p, p).copy_from(&part);
            }
        }
        Ok(out)
    }

    /// `𝕏ⱼᵀ r` for a single column.
    pub fn column_dot(&self, j: usize, r: &DVector<f64>) -> f64 {
        let (b, c) = (j / self.p, j % self.p);
        if b == 0 {
            let mut acc = 0.0;
            for (k, block) in self.blocks.iter().enumerate() {
                let (start, end) = self.block_rows(k);
                acc += block.column(c).dot(&r.rows(start, end - start));
            }
            acc
        } else {
            let (start, end) = self.block_rows(b);
            self.blocks[b].column(c).dot(&r.rows(start, end - start))
        }
    }

    /// `r += alpha · 𝕏ⱼ`.
    pub fn column_axpy(&self, j: usize, alpha: f64, r: &mut DVector<f64>) {
        let (b, c) = (j / self.p, j % self.p);
        let blocks = if b == 0 { 0..self.blocks.len() } else { b..b + 1 };
        for k in blocks {
            let (start, end) = self.block_rows(k);
            r.rows_mut(start, end - start)
                .axpy(alpha, &self.blocks[k].column(c), 1.0);
        }
    }

    /// Column `j` of the implicit matrix as a dense vector of length `N`.
    pub fn column(&self, j: usize) -> DVector<f64> {
        let mut out = DVector::zeros(self.n_total());
        self.column_axpy(j, 1.0, &mut out);
        out
    }

    /// Dense `N × |cols|` submatrix.
    pub fn submatrix(&self, cols: &[usize]) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(self.n_total(), cols.len());
        for (k, &j) in cols.iter().enumerate() {
            out.set_column(k, &self.column(j));
        }
        out
    }

    /// Dense materialization; meant for tests and small problems.
    pub fn to_dense(&self) -> DMatrix<f64> {
        let cols: Vec<usize> = (0..self.n_cols()).collect();
        self.submatrix(&cols)
    }

    pub fn residual(&self, phi: &[f64]) -> Result<DVector<f64>> {
        Ok(&self.y - self.apply(phi)?)
    }

    /// `‖𝕐 − 𝕏Φ‖²`.
    pub fn rss(&self, phi: &[f64]) -> Result<f64> {
        Ok(self.residual(phi)?.norm_squared())
    }

    /// Wraps `phi` into an estimate with its recomputed residual sum of squares.
    pub fn estimate(&self, phi: Vec<f64>, rank_deficient: bool) -> Result<CoefficientEstimate> {
        let rss = self.rss(&phi)?;
        Ok(CoefficientEstimate::new(phi, rss, rank_deficient))
    }

    /// Keeps only the listed rows of each block (indices local to the block).
    /// Scaling is inherited from this system.
    pub fn select_rows(&self, rows_per_block: &[Vec<usize>]) -> Result<StackedSystem> {
        if rows_per_block.len() != self.blocks.len() {
            return Err(Error::DimensionMismatch {
                context: "row selection blocks".into(),
                expected: self.blocks.len(),
                found: rows_per_block.len(),
            });
        }
        let mut blocks = Vec::with_capacity(self.blocks.len());
        let mut y_parts = Vec::with_capacity(self.blocks.len());
        for (b, rows) in rows_per_block.iter().enumerate() {
            let (start, end) = self.block_rows(b);
            if let Some(&bad) = rows.iter().find(|&&i| i >= end - start) {
                return Err(Error::InvalidArgument(format!(
                    "row {bad} out of range for block {b} with {} rows",
                    end - start
                )));
            }
            blocks.push(self.blocks[b].select_rows(rows.iter()));
            y_parts.push(DVector::from_iterator(
                rows.len(),
                rows.iter().map(|&i| self.y[start + i]),
            ));
        }
        Ok(StackedSystem::from_blocks(
            self.p,
            blocks,
            y_parts,
            self.layout.clone(),
        ))
    }

    /// Same design, different stacked response.
    pub fn with_response(&self, y: DVector<f64>) -> Result<StackedSystem> {
        self.check_rows(y.len())?;
        let mut out = self.clone();
        out.y = y;
        Ok(out)
    }

    /// Concatenates a β vector and the ω vectors (auxiliary groups ascending) into Φ.
    pub fn phi_from_parts(&self, beta: &[f64], omegas: &[Vec<f64>]) -> Result<Vec<f64>> {
        assemble_phi(self.p, self.z(), beta, omegas)
    }
}

fn assemble_phi(p: usize, z: usize, beta: &[f64], omegas: &[Vec<f64>]) -> Result<Vec<f64>> {
    if beta.len() != p {
        return Err(Error::DimensionMismatch {
            context: "beta".into(),
            expected: p,
            found: beta.len(),
        });
    }
    if omegas.len() + 1 != z {
        return Err(Error::DimensionMismatch {
            context: "number of offset vectors".into(),
            expected: z - 1,
            found: omegas.len(),
        });
    }
    let mut phi = Vec::with_capacity(p * z);
    phi.extend_from_slice(beta);
    for (k, w) in omegas.iter().enumerate() {
        if w.len() != p {
            return Err(Error::DimensionMismatch {
                context: format!("offset vector {k}"),
                expected: p,
                found: w.len(),
            });
        }
        phi.extend_from_slice(w);
    }
    Ok(phi)
}

/// Assembles the stacked system: target rows first, auxiliary groups in
/// ascending index order, each block scaled by `1/√n_z`.
pub fn build_stacked(problem: &MultiSourceProblem) -> Result<StackedSystem> {
    let p = problem.p();
    let order: Vec<usize> = std::iter::once(problem.target_index())
        .chain(problem.auxiliary_indices())
        .collect();

    let mut blocks = Vec::with_capacity(order.len());
    let mut y_parts = Vec::with_capacity(order.len());
    let mut layout = Vec::with_capacity(order.len());
    for (b, &z) in order.iter().enumerate() {
        let g = &problem.groups()[z];
        if g.p() != p || g.response().len() != g.n() {
            return Err(Error::InvalidProblem(format!(
                "group {z} has inconsistent dimensions"
            )));
        }
        let scale = 1.0 / (g.n() as f64).sqrt();
        blocks.push(g.design() * scale);
        y_parts.push(g.response() * scale);
        layout.push(ColumnBlock {
            start: b * p,
            end: (b + 1) * p,
            owner: if b == 0 {
                BlockOwner::Target
            } else {
                BlockOwner::Auxiliary(z)
            },
        });
    }
    Ok(StackedSystem::from_blocks(p, blocks, y_parts, layout))
}

/// `Σ_z (1/n_z)‖y⁽ᶻ⁾ − X⁽ᶻ⁾(β + ω⁽ᶻ⁾)‖²` with `ω⁽ᵗ⁾ ≡ 0`, evaluated group by group.
///
/// `omegas` lists the auxiliary offsets in ascending group order.
pub fn grouped_objective(
    problem: &MultiSourceProblem,
    beta: &[f64],
    omegas: &[Vec<f64>],
) -> Result<f64> {
    let p = problem.p();
    assemble_phi(p, problem.z(), beta, omegas)?;
    let beta_v = DVector::from_column_slice(beta);
    let mut total = 0.0;
    let mut aux = 0;
    for (z, g) in problem.groups().iter().enumerate() {
        let coef = if z == problem.target_index() {
            beta_v.clone()
        } else {
            let w = &omegas[aux];
            aux += 1;
            &beta_v + DVector::from_column_slice(w)
        };
        let resid = g.response() - g.design() * coef;
        total += resid.norm_squared() / g.n() as f64;
    }
    Ok(total)
}
