use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::Hyperparams;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub learning_rates: Vec<f64>,
    pub batch_sizes: Vec<usize>,
}

impl Default for Grid {
    /// {3e-5, 2e-5} x {16, 32}.
    fn default() -> Self {
        Self {
            learning_rates: vec![3e-5, 2e-5],
            batch_sizes: vec![16, 32],
        }
    }
}

impl Grid {
    /// Combinations in row-major order (learning rate outer).
    pub fn combinations(&self) -> Vec<(f64, usize)> {
        self.learning_rates
            .iter()
            .flat_map(|&lr| self.batch_sizes.iter().map(move |&b| (lr, b)))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridRow {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub f1: f64,
    /// Training produced a non-finite loss; ranked after every finite run.
    pub diverged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridResult {
    /// One row per combination, in grid order.
    pub rows: Vec<GridRow>,
    /// Row indices from best to worst.
    pub ranking: Vec<usize>,
}

impl GridResult {
    pub fn best(&self) -> &GridRow {
        &self.rows[self.ranking[0]]
    }

    pub fn ranked(&self) -> impl Iterator<Item = &GridRow> {
        self.ranking.iter().map(|&i| &self.rows[i])
    }

    /// max - min F1 over rows that did not diverge.
    pub fn spread(&self) -> f64 {
        let f1s = self.rows.iter().filter(|r| !r.diverged).map(|r| r.f1);
        let (lo, hi) = f1s.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), f| (lo.min(f), hi.max(f)));
        if hi >= lo {
            hi - lo
        } else {
            0.0
        }
    }

    /// `learning_rate,batch_size,f1` in grid order.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("learning_rate,batch_size,f1\n");
        for r in &self.rows {
            out.push_str(&format!("{},{},{:.6}\n", r.learning_rate, r.batch_size, r.f1));
        }
        out
    }
}

/// Best first: finite before diverged, higher F1, smaller learning rate,
/// larger batch.
pub fn rank_order(a: &GridRow, b: &GridRow) -> Ordering {
    a.diverged
        .cmp(&b.diverged)
        .then_with(|| b.f1.total_cmp(&a.f1))
        .then_with(|| a.learning_rate.total_cmp(&b.learning_rate))
        .then_with(|| b.batch_size.cmp(&a.batch_size))
}

/// Runs `run` (train on the train split, return validation F1) for every
/// combination. Each run gets the base hyperparameters with the grid values
/// substituted, so runs are independent of evaluation order.
pub fn grid_search<F>(grid: &Grid, base: &Hyperparams, mut run: F) -> Result<GridResult>
where
    F: FnMut(&Hyperparams) -> Result<f64>,
{
    let combos = grid.combinations();
    if combos.is_empty() {
        return Err(Error::InvalidArgument("grid has no combinations".into()));
    }
    let mut rows = Vec::with_capacity(combos.len());
    for (learning_rate, batch_size) in combos {
        let hp = Hyperparams {
            learning_rate,
            batch_size,
            ..base.clone()
        };
        let (f1, diverged) = match run(&hp) {
            Ok(f1) if f1.is_finite() => (f1, false),
            Ok(_) => (0.0, true),
            Err(Error::NonFiniteLoss { epoch, step, loss }) => {
                log::warn!("lr {learning_rate}, batch {batch_size} diverged at epoch {epoch} step {step} (loss {loss})");
                (0.0, true)
            }
            Err(e) => return Err(e),
        };
        log::info!("lr {learning_rate}, batch {batch_size}: F1 {f1:.4}");
        rows.push(GridRow {
            learning_rate,
            batch_size,
            f1,
            diverged,
        });
    }
    let mut ranking: Vec<usize> = (0..rows.len()).collect();
    ranking.sort_by(|&a, &b| rank_order(&rows[a], &rows[b]));
    Ok(GridResult { rows, ranking })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_grid_has_four_rows() {
        let result = grid_search(&Grid::default(), &Hyperparams::default(), |hp| Ok(hp.learning_rate * 1e4)).unwrap();
        assert_eq!(result.rows.len(), 4);
        assert_eq!(result.best().learning_rate, 3e-5);
        assert_eq!(result.best().batch_size, 32);
        assert_eq!(result.to_csv().lines().count(), 5);
    }

    #[test]
    fn ties_prefer_smaller_rate_then_larger_batch() {
        let result = grid_search(&Grid::default(), &Hyperparams::default(), |_| Ok(0.9)).unwrap();
        assert_eq!((result.best().learning_rate, result.best().batch_size), (2e-5, 32));
        let order: Vec<_> = result.ranked().map(|r| (r.learning_rate, r.batch_size)).collect();
        assert_eq!(order, vec![(2e-5, 32), (2e-5, 16), (3e-5, 32), (3e-5, 16)]);
        assert_eq!(result.spread(), 0.0);
    }

    #[test]
    fn diverged_runs_rank_last() {
        let grid = Grid {
            learning_rates: vec![1.0, 2e-5],
            batch_sizes: vec![16],
        };
        let result = grid_search(&grid, &Hyperparams::default(), |hp| {
            if hp.learning_rate == 1.0 {
                Err(Error::NonFiniteLoss {
                    epoch: 0,
                    step: 3,
                    loss: f64::NAN,
                })
            } else {
                Ok(0.0)
            }
        })
        .unwrap();
        assert!(result.rows[0].diverged);
        assert_eq!(result.ranked().last().unwrap().learning_rate, 1.0);
    }

    #[test]
    fn singleton_and_empty_grids() {
        let grid = Grid {
            learning_rates: vec![5e-5],
            batch_sizes: vec![8],
        };
        let result = grid_search(&grid, &Hyperparams::default(), |_| Ok(0.3)).unwrap();
        assert_eq!((result.best().learning_rate, result.best().batch_size), (5e-5, 8));
        let empty = Grid {
            learning_rates: vec![],
            batch_sizes: vec![16],
        };
        assert!(grid_search(&empty, &Hyperparams::default(), |_| Ok(1.0)).is_err());
    }
}
