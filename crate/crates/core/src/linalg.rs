//! Inverse of an active-set block `G_J + ρI` of a Gram matrix, maintained
//! under single-coordinate insertion and removal.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Refactorize from scratch after this many bordered updates.
pub const REFACTOR_EVERY: usize = 50;
/// Refactorize when the 1-norm condition estimate exceeds this.
pub const MAX_CONDITION: f64 = 1e12;
/// Relative Schur-complement floor below which a block counts as singular.
const PIVOT_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone)]
pub struct ActiveInverse {
    active: Vec<usize>,
    inv: DMatrix<f64>,
    ridge: f64,
    updates: usize,
}

impl ActiveInverse {
    /// Inverts `gram[J, J] + ridge·I` for sorted `active`.
    pub fn new(gram: &DMatrix<f64>, active: &[usize], ridge: f64) -> Result<Self> {
        let mut active = active.to_vec();
        active.sort_unstable();
        let inv = invert_block(gram, &active, ridge)?;
        Ok(Self {
            active,
            inv,
            ridge,
            updates: 0,
        })
    }

    pub fn active(&self) -> &[usize] {
        &self.active
    }

    pub fn inverse(&self) -> &DMatrix<f64> {
        &self.inv
    }

    pub fn ridge(&self) -> f64 {
        self.ridge
    }

    pub fn len(&self) -> usize {
        self.active.len()
    }

    pub fn is_empty(&self) -> bool {
        self.active.is_empty()
    }

    /// Inserts coordinate `j` at its sorted position by bordering.
    pub fn insert(&mut self, gram: &DMatrix<f64>, j: usize) -> Result<()> {
        let pos = match self.active.binary_search(&j) {
            Ok(_) => return Ok(()),
            Err(pos) => pos,
        };
        let m = self.active.len();
        let a = DVector::from_fn(m, |r, _| gram[(self.active[r], j)]);
        let d = gram[(j, j)] + self.ridge;
        let u = &self.inv * &a;
        let schur = d - a.dot(&u);
        if !(schur > PIVOT_FLOOR * d.abs().max(f64::MIN_POSITIVE)) {
            return Err(Error::SingularGram { size: m + 1 });
        }
        // new index k ↦ old index, with `pos` the fresh row/column
        let old = |k: usize| -> Option<usize> {
            match k.cmp(&pos) {
                std::cmp::Ordering::Less => Some(k),
                std::cmp::Ordering::Equal => None,
                std::cmp::Ordering::Greater => Some(k - 1),
            }
        };
        let inv = DMatrix::from_fn(m + 1, m + 1, |r, c| match (old(r), old(c)) {
            (Some(r0), Some(c0)) => self.inv[(r0, c0)] + u[r0] * u[c0] / schur,
            (Some(r0), None) => -u[r0] / schur,
            (None, Some(c0)) => -u[c0] / schur,
            (None, None) => 1.0 / schur,
        });
        self.inv = inv;
        self.active.insert(pos, j);
        self.after_update(gram)
    }

    /// Removes coordinate `j` from the block.
    pub fn remove(&mut self, gram: &DMatrix<f64>, j: usize) -> Result<()> {
        let Ok(pos) = self.active.binary_search(&j) else {
            return Ok(());
        };
        let m = self.active.len();
        let pivot = self.inv[(pos, pos)];
        let keep = |k: usize| if k < pos { k } else { k + 1 };
        let inv = DMatrix::from_fn(m - 1, m - 1, |r, c| {
            let (r0, c0) = (keep(r), keep(c));
            self.inv[(r0, c0)] - self.inv[(r0, pos)] * self.inv[(pos, c0)] / pivot
        });
        self.inv = inv;
        self.active.remove(pos);
        self.after_update(gram)
    }

    /// `‖A‖₁·‖A⁻¹‖₁` for the current block.
    pub fn condition_estimate(&self, gram: &DMatrix<f64>) -> f64 {
        let m = self.active.len();
        if m == 0 {
            return 1.0;
        }
        let col_norm = |f: &dyn Fn(usize, usize) -> f64| {
            (0..m)
                .map(|c| (0..m).map(|r| f(r, c).abs()).sum::<f64>())
                .fold(0.0_f64, f64::max)
        };
        let a = col_norm(&|r, c| {
            gram[(self.active[r], self.active[c])] + if r == c { self.ridge } else { 0.0 }
        });
        let ainv = col_norm(&|r, c| self.inv[(r, c)]);
        a * ainv
    }

    pub fn refactor(&mut self, gram: &DMatrix<f64>) -> Result<()> {
        self.inv = invert_block(gram, &self.active, self.ridge)?;
        self.updates = 0;
        Ok(())
    }

    fn after_update(&mut self, gram: &DMatrix<f64>) -> Result<()> {
        self.updates += 1;
        if self.updates >= REFACTOR_EVERY || self.condition_estimate(gram) > MAX_CONDITION {
            self.refactor(gram)?;
        }
        Ok(())
    }
}

fn invert_block(gram: &DMatrix<f64>, active: &[usize], ridge: f64) -> Result<DMatrix<f64>> {
    let m = active.len();
    if m == 0 {
        return Ok(DMatrix::zeros(0, 0));
    }
    let block = DMatrix::from_fn(m, m, |r, c| {
        gram[(active[r], active[c])] + if r == c { ridge } else { 0.0 }
    });
    let scale = (0..m).map(|k| block[(k, k)].abs()).fold(0.0_f64, f64::max);
    let chol = block.clone().cholesky().ok_or(Error::SingularGram { size: m })?;
    let l = chol.l_dirty();
    let min_pivot = (0..m).map(|k| l[(k, k)] * l[(k, k)]).fold(f64::INFINITY, f64::min);
    if !(min_pivot > PIVOT_FLOOR * scale) {
        return Err(Error::SingularGram { size: m });
    }
    Ok(chol.inverse())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_gram(seed: u64, n: usize, p: usize) -> DMatrix<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = DMatrix::from_fn(n, p, |_, _| rng.random_range(-1.0..1.0));
        x.tr_mul(&x)
    }

    fn direct(gram: &DMatrix<f64>, active: &[usize], ridge: f64) -> DMatrix<f64> {
        let m = active.len();
        DMatrix::from_fn(m, m, |r, c| gram[(active[r], active[c])] + if r == c { ridge } else { 0.0 })
            .try_inverse()
            .unwrap()
    }

    #[test]
    fn insert_remove_track_direct_inverse() {
        let gram = random_gram(1, 40, 12);
        let mut inv = ActiveInverse::new(&gram, &[3, 7], 0.0).unwrap();
        for (add, j) in [(true, 5), (true, 0), (true, 11), (false, 7), (true, 9), (false, 0), (true, 7)] {
            if add {
                inv.insert(&gram, j).unwrap();
            } else {
                inv.remove(&gram, j).unwrap();
            }
            let expect = direct(&gram, inv.active(), 0.0);
            assert!((inv.inverse() - expect).amax() < 1e-9);
            assert!(inv.active().windows(2).all(|w| w[0] < w[1]));
        }
        assert_eq!(inv.active(), &[3, 5, 7, 9, 11]);
    }

    #[test]
    fn collinear_insert_is_singular() {
        let x = DMatrix::from_row_slice(3, 2, &[1.0, 2.0, 2.0, 4.0, 3.0, 6.0]);
        let gram = x.tr_mul(&x);
        let mut inv = ActiveInverse::new(&gram, &[0], 0.0).unwrap();
        assert!(matches!(inv.insert(&gram, 1), Err(Error::SingularGram { size: 2 })));
        assert!(ActiveInverse::new(&gram, &[0, 1], 0.0).is_err());
        // a ridge restores invertibility
        let mut ridged = ActiveInverse::new(&gram, &[0], 1e-3).unwrap();
        ridged.insert(&gram, 1).unwrap();
        assert!((ridged.inverse() - direct(&gram, &[0, 1], 1e-3)).amax() < 1e-6);
    }

    #[test]
    fn periodic_refactor_keeps_accuracy() {
        let gram = random_gram(2, 60, 20);
        let mut inv = ActiveInverse::new(&gram, &[], 0.1).unwrap();
        for round in 0..40 {
            for j in 0..20 {
                if (j + round) % 3 == 0 {
                    inv.insert(&gram, j).unwrap();
                } else {
                    inv.remove(&gram, j).unwrap();
                }
            }
        }
        let expect = direct(&gram, inv.active(), 0.1);
        assert!((inv.inverse() - expect).amax() < 1e-10);
        assert!(inv.condition_estimate(&gram) >= 1.0);
    }
}
