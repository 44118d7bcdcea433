//! Sparse symmetric-indefinite linear systems.
//!
//! Systems are accumulated as triplets. Dirichlet-type constraints are
//! imposed by row/column elimination with the prescribed values moved to the
//! right-hand side; scalar gauge conditions (like zero-mean pressure) are
//! appended as symmetric bordered rows, each carrying one extra multiplier
//! unknown. The factorization is a sparse LU with pivoting.

use std::collections::HashMap;

#[derive(Debug, thiserror::Error)]
pub enum SolveError {
    #[error("singular factorization: {0}")]
    Singular(String),
    #[error("solver did not reach the required accuracy: relative residual {0:.3e}")]
    Inaccurate(f64),
}

/// Result of a linear solve.
pub struct Solution {
    /// Values for all dofs of the system (constrained dofs carry their
    /// prescribed values).
    pub values: Vec<f64>,
    /// Values of the bordered multipliers, in insertion order.
    pub multipliers: Vec<f64>,
    /// Relative residual of the reduced system.
    pub relative_residual: f64,
}

pub struct SparseSystem {
    pub n: usize,
    triplets: Vec<(usize, usize, f64)>,
    rhs: Vec<f64>,
    constrained: Vec<Option<f64>>,
    borders: Vec<(Vec<(usize, f64)>, f64)>,
}

impl SparseSystem {
    pub fn new(n: usize) -> Self {
        SparseSystem {
            n,
            triplets: Vec::new(),
            rhs: vec![0.0; n],
            constrained: vec![None; n],
            borders: Vec::new(),
        }
    }

    pub fn add(&mut self, row: usize, col: usize, value: f64) {
        if value != 0.0 {
            self.triplets.push((row, col, value));
        }
    }

    pub fn add_rhs(&mut self, row: usize, value: f64) {
        self.rhs[row] += value;
    }

    pub fn extend_triplets(&mut self, it: impl IntoIterator<Item = (usize, usize, f64)>) {
        self.triplets
            .extend(it.into_iter().filter(|&(_, _, v)| v != 0.0));
    }

    /// Fixes a dof to a prescribed value (row/column elimination).
    pub fn constrain(&mut self, dof: usize, value: f64) {
        self.constrained[dof] = Some(value);
    }

    pub fn is_constrained(&self, dof: usize) -> bool {
        self.constrained[dof].is_some()
    }

    /// Appends a symmetric bordered constraint row `sum_i w_i x_i = rhs`
    /// with its own multiplier unknown.
    pub fn add_border(&mut self, entries: Vec<(usize, f64)>, rhs: f64) {
        self.borders.push((entries, rhs));
    }

    /// Largest absolute difference `|A_ij - A_ji|` over the accumulated
    /// (unconstrained) matrix.
    pub fn max_asymmetry(&self) -> f64 {
        let mut acc: HashMap<(usize, usize), f64> = HashMap::new();
        for &(r, c, v) in &self.triplets {
            *acc.entry((r, c)).or_insert(0.0) += v;
        }
        let mut worst = 0.0_f64;
        for (&(r, c), &v) in &acc {
            let vt = acc.get(&(c, r)).copied().unwrap_or(0.0);
            worst = worst.max((v - vt).abs());
        }
        worst
    }

    /// Factorizes and solves. The relative residual of the reduced system
    /// must not exceed `tol` (use `1e-9` for the library default).
    pub fn solve(&self, tol: f64) -> Result<Solution, SolveError> {
        use faer::linalg::solvers::Solve;
        use faer::sparse::{SparseColMat, Triplet};

        let nfree: usize = self.constrained.iter().filter(|c| c.is_none()).count();
        let mut map = vec![usize::MAX; self.n];
        {
            let mut next = 0;
            for (i, c) in self.constrained.iter().enumerate() {
                if c.is_none() {
                    map[i] = next;
                    next += 1;
                }
            }
        }
        let ntotal = nfree + self.borders.len();

        let mut reduced: Vec<Triplet<usize, usize, f64>> = Vec::with_capacity(self.triplets.len());
        let mut rhs = vec![0.0; ntotal];
        for (i, c) in self.constrained.iter().enumerate() {
            if c.is_none() {
                rhs[map[i]] = self.rhs[i];
            }
        }
        for &(r, c, v) in &self.triplets {
            match (self.constrained[r], self.constrained[c]) {
                (None, None) => reduced.push(Triplet::new(map[r], map[c], v)),
                (None, Some(val)) => rhs[map[r]] -= v * val,
                (Some(_), _) => {}
            }
        }
        // Bordered constraints. A dense constraint row (like a global mean)
        // ruins the fill-reducing ordering of the factorization, so each
        // border is expanded into a tree of sparse partial-sum rows with
        // auxiliary unknowns; the final row carries the multiplier reported
        // to the caller. The imposed constraint is unchanged.
        const CHUNK: usize = 64;
        let mut next_unknown = nfree + self.borders.len();
        let mut border_rhs: Vec<(usize, f64)> = Vec::new();
        let border_scales = vec![1.0; self.borders.len()];
        for (k, (entries, b)) in self.borders.iter().enumerate() {
            let lambda_row = nfree + k;
            let mut rhs_k = *b;
            let mut items: Vec<(usize, f64)> = Vec::new();
            for &(c, v) in entries {
                match self.constrained[c] {
                    None => items.push((map[c], v)),
                    Some(val) => rhs_k -= v * val,
                }
            }

            while items.len() > CHUNK {
                let mut next_items = Vec::with_capacity(items.len() / CHUNK + 1);
                for chunk in items.chunks(CHUNK) {
                    // Auxiliary unknown s with equation s - sum(chunk) = 0,
                    // written symmetrically with its own multiplier row.
                    let s = next_unknown;
                    let eq = next_unknown + 1;
                    next_unknown += 2;
                    for &(c, v) in chunk {
                        reduced.push(Triplet::new(eq, c, v));
                        reduced.push(Triplet::new(c, eq, v));
                    }
                    reduced.push(Triplet::new(eq, s, -1.0));
                    reduced.push(Triplet::new(s, eq, -1.0));
                    next_items.push((s, 1.0));
                }
                items = next_items;
            }
            for &(c, v) in &items {
                reduced.push(Triplet::new(lambda_row, c, v));
                reduced.push(Triplet::new(c, lambda_row, v));
            }
            border_rhs.push((lambda_row, rhs_k));
        }
        let ntotal = next_unknown;
        rhs.resize(ntotal, 0.0);
        for (row, b) in border_rhs {
            rhs[row] += b;
        }

        // Symmetric equilibration: scale rows and columns to unit infinity
        // norm (square-root form preserves symmetry). Saddle systems mix
        // stiffness rows of order one with divergence and gauge rows several
        // orders smaller; without balancing, the factorization loses enough
        // accuracy that iterative refinement stalls.
        let mut row_max = vec![0.0_f64; ntotal];
        for t in &reduced {
            row_max[t.row] = row_max[t.row].max(t.val.abs());
        }
        let scale: Vec<f64> = row_max
            .iter()
            .map(|&m| if m > 0.0 { 1.0 / m.sqrt() } else { 1.0 })
            .collect();
        let scaled: Vec<Triplet<usize, usize, f64>> = reduced
            .iter()
            .map(|t| Triplet::new(t.row, t.col, t.val * scale[t.row] * scale[t.col]))
            .collect();
        let mat = SparseColMat::<usize, f64>::try_new_from_triplets(ntotal, ntotal, &scaled)
            .map_err(|e| SolveError::Singular(format!("assembly: {e:?}")))?;
        let t_fact = std::time::Instant::now();
        // The factorization panics on exactly singular input; translate
        // that into an error carrying the system size.
        let lu = std::panic::catch_unwind(std::panic::AssertUnwindSafe(|| mat.sp_lu()))
            .map_err(|_| SolveError::Singular(format!("zero pivot during LU of {ntotal} unknowns")))?
            .map_err(|e| SolveError::Singular(format!("{e:?}")))?;
        if std::env::var("STOKES_EQ_TIMING").is_ok() {
            eprintln!("[timing] sp_lu({ntotal}) in {:?}", t_fact.elapsed());
        }
        let scaled_rhs: Vec<f64> = rhs.iter().zip(&scale).map(|(b, s)| b * s).collect();
        let b = faer::MatRef::from_column_major_slice(&scaled_rhs, ntotal, 1);
        let mut y = lu.solve(b);

        // Iterative refinement in the scaled variables, then the final
        // residual check on the original system.
        let bnorm = rhs.iter().map(|v| v * v).sum::<f64>().sqrt();
        let sbnorm = scaled_rhs.iter().map(|v| v * v).sum::<f64>().sqrt();
        let scaled_residual = |y: &faer::Mat<f64>| -> (Vec<f64>, f64) {
            let mut res = scaled_rhs.clone();
            for t in &scaled {
                res[t.row] -= t.val * y[(t.col, 0)];
            }
            let rnorm = res.iter().map(|v| v * v).sum::<f64>().sqrt();
            (res, rnorm)
        };
        let (mut sres, mut srnorm) = scaled_residual(&y);
        for _ in 0..4 {
            if !srnorm.is_finite() || srnorm <= 1e-3 * tol * sbnorm.max(1e-300) {
                break;
            }
            let r = faer::MatRef::from_column_major_slice(&sres, ntotal, 1);
            let delta = lu.solve(r);
            let mut improved = y.clone();
            for i in 0..ntotal {
                improved[(i, 0)] += delta[(i, 0)];
            }
            let (res2, rnorm2) = scaled_residual(&improved);
            if !rnorm2.is_finite() || rnorm2 >= srnorm {
                break;
            }
            y = improved;
            sres = res2;
            srnorm = rnorm2;
        }
        let x = {
            let mut x = y;
            for i in 0..ntotal {
                x[(i, 0)] *= scale[i];
            }
            x
        };
        let (res, rnorm) = {
            let mut res = rhs.clone();
            for t in &reduced {
                res[t.row] -= t.val * x[(t.col, 0)];
            }
            let rnorm = res.iter().map(|v| v * v).sum::<f64>().sqrt();
            (res, rnorm)
        };
        let rel = if bnorm > 0.0 { rnorm / bnorm } else { rnorm };
        if !rel.is_finite() || (bnorm > 0.0 && rel > tol) {
            if std::env::var("STOKES_EQ_DEBUG_RESIDUAL").is_ok() {
                let mut worst: Vec<(f64, usize)> =
                    res.iter().enumerate().map(|(i, &v)| (v.abs(), i)).collect();
                worst.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap());
                eprintln!("[debug] nfree={nfree} ntotal={ntotal} rnorm={rnorm:.3e} bnorm={bnorm:.3e} worst residual rows:");
                for (v, i) in worst.iter().take(8) {
                    eprintln!("[debug]   row {i}: {v:.3e}");
                }
            }
            return Err(SolveError::Inaccurate(rel));
        }

        let mut values = vec![0.0; self.n];
        for i in 0..self.n {
            values[i] = match self.constrained[i] {
                Some(v) => v,
                None => x[(map[i], 0)],
            };
        }
        let multipliers = (0..self.borders.len())
            .map(|k| x[(nfree + k, 0)] / border_scales[k])
            .collect();
        Ok(Solution {
            values,
            multipliers,
            relative_residual: rel,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    #[test]
    fn identity_system() {
        let mut s = SparseSystem::new(3);
        for i in 0..3 {
            s.add(i, i, 1.0);
            s.add_rhs(i, (i + 1) as f64);
        }
        let sol = s.solve(1e-12).unwrap();
        assert_eq!(sol.values, vec![1.0, 2.0, 3.0]);
    }

    #[test]
    fn saddle_2x2_closed_form() {
        // [[2, 1], [1, 0]] x = (3, 1) => x = (1, 1).
        let mut s = SparseSystem::new(2);
        s.add(0, 0, 2.0);
        s.add(0, 1, 1.0);
        s.add(1, 0, 1.0);
        s.add_rhs(0, 3.0);
        s.add_rhs(1, 1.0);
        let sol = s.solve(1e-10).unwrap();
        assert!((sol.values[0] - 1.0).abs() < 1e-12);
        assert!((sol.values[1] - 1.0).abs() < 1e-12);
        assert!(sol.relative_residual <= 1e-10);
    }

    #[test]
    fn random_spd_matches_dense_oracle() {
        let n = 50;
        let mut rng = StdRng::seed_from_u64(42);
        // A = B^T B + n I, dense SPD.
        let b: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect())
            .collect();
        let mut a = vec![vec![0.0; n]; n];
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    a[i][j] += b[k][i] * b[k][j];
                }
            }
            a[i][i] += n as f64;
        }
        let rhs: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();

        // Dense oracle: Gaussian elimination with partial pivoting.
        let mut m: Vec<Vec<f64>> = a.iter().cloned().collect();
        let mut y = rhs.clone();
        for col in 0..n {
            let piv = (col..n)
                .max_by(|&i, &j| m[i][col].abs().partial_cmp(&m[j][col].abs()).unwrap())
                .unwrap();
            m.swap(col, piv);
            y.swap(col, piv);
            for row in (col + 1)..n {
                let f = m[row][col] / m[col][col];
                for k in col..n {
                    m[row][k] -= f * m[col][k];
                }
                y[row] -= f * y[col];
            }
        }
        let mut xe = vec![0.0; n];
        for row in (0..n).rev() {
            let mut v = y[row];
            for k in (row + 1)..n {
                v -= m[row][k] * xe[k];
            }
            xe[row] = v / m[row][row];
        }

        let mut s = SparseSystem::new(n);
        for i in 0..n {
            for j in 0..n {
                s.add(i, j, a[i][j]);
            }
            s.add_rhs(i, rhs[i]);
        }
        assert!(s.max_asymmetry() < 1e-12);
        let sol = s.solve(1e-9).unwrap();
        for i in 0..n {
            assert!((sol.values[i] - xe[i]).abs() < 1e-9, "i={i}");
        }
    }

    #[test]
    fn constraints_and_borders() {
        // Laplacian-like chain with a fixed end and a mean-zero border.
        let n = 5;
        let mut s = SparseSystem::new(n);
        for i in 0..n {
            s.add(i, i, 2.0);
            if i + 1 < n {
                s.add(i, i + 1, -1.0);
                s.add(i + 1, i, -1.0);
            }
        }
        s.constrain(0, 1.5);
        s.add_rhs(2, 1.0);
        s.add_border((0..n).map(|i| (i, 1.0)).collect(), 0.0);
        let sol = s.solve(1e-9).unwrap();
        assert!((sol.values[0] - 1.5).abs() < 1e-14);
        let mean: f64 = sol.values.iter().sum();
        assert!(mean.abs() < 1e-10, "border not enforced: {mean}");
    }

    #[test]
    fn singular_system_reported() {
        let mut s = SparseSystem::new(2);
        s.add(0, 0, 1.0);
        s.add(0, 1, 1.0);
        s.add(1, 0, 1.0);
        s.add(1, 1, 1.0);
        s.add_rhs(0, 1.0);
        assert!(s.solve(1e-9).is_err());
    }
}
