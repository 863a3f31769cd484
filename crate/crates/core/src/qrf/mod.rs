//! Quantile regression forest.
//!
//! Trees are ordinary CART regression trees grown on bootstrap samples. After
//! growth each leaf remembers every training row that falls into it, and a
//! query `x` spreads weight over training rows:
//!
//! ```text
//! w_i(x) = 1/T * sum_t 1{X_i in leaf_t(x)} / |leaf_t(x)|
//! F(y|x) = sum_i w_i(x) * 1{Y_i <= y}
//! Q_a(x) = inf { y : F(y|x) >= a }
//! ```
//!
//! Quantiles are always observed training targets; nothing is interpolated.

mod persist;
mod tree;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use persist::{read_forest, write_forest, FORMAT_MAGIC};
pub use tree::{Tree, TreeNode};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ForestParams {
    pub n_estimators: usize,
    pub min_samples_leaf: usize,
    /// `None` grows until the leaf-size rule stops it.
    pub max_depth: Option<usize>,
    /// Features scored per split; `None` means `ceil(p / 3)`.
    pub mtry: Option<usize>,
    pub bootstrap: bool,
}

impl Default for ForestParams {
    fn default() -> Self {
        ForestParams {
            n_estimators: 200,
            min_samples_leaf: 10,
            max_depth: None,
            mtry: None,
            bootstrap: true,
        }
    }
}

impl ForestParams {
    pub fn validate(&self) -> Result<()> {
        if self.n_estimators < 1 {
            return Err(Error::validation("n_estimators must be >= 1"));
        }
        if self.min_samples_leaf < 1 {
            return Err(Error::validation("min_samples_leaf must be >= 1"));
        }
        if self.mtry == Some(0) {
            return Err(Error::validation("mtry must be >= 1"));
        }
        Ok(())
    }

    pub fn resolved_mtry(&self, n_features: usize) -> usize {
        self.mtry
            .unwrap_or_else(|| n_features.div_ceil(3))
            .clamp(1, n_features.max(1))
    }
}

/// Row-major training matrix with one target per row.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset<T> {
    n_features: usize,
    x: Vec<T>,
    y: Vec<T>,
}

impl<T: Scalar> Dataset<T> {
    pub fn new(n_features: usize, x: Vec<T>, y: Vec<T>) -> Result<Self> {
        if y.is_empty() {
            return Err(Error::validation("training set is empty"));
        }
        if n_features == 0 {
            return Err(Error::validation("training rows have no features"));
        }
        if x.len() != n_features * y.len() {
            return Err(Error::validation(format!(
                "feature matrix has {} values, expected {} x {}",
                x.len(),
                y.len(),
                n_features
            )));
        }
        if x.iter().chain(y.iter()).any(|v| !v.is_finite()) {
            return Err(Error::validation(
                "training data contains non-finite values",
            ));
        }
        Ok(Dataset { n_features, x, y })
    }

    /// Builds a dataset from `(features, target)` rows of equal dimension.
    pub fn from_rows<'a, I>(rows: I) -> Result<Self>
    where
        I: IntoIterator<Item = (&'a [T], T)>,
    {
        let mut x = Vec::new();
        let mut y = Vec::new();
        let mut dim = None;
        for (i, (features, target)) in rows.into_iter().enumerate() {
            match dim {
                None => dim = Some(features.len()),
                Some(d) if d != features.len() => {
                    return Err(Error::validation(format!(
                        "row {i} has {} features, expected {d}",
                        features.len()
                    )))
                }
                _ => {}
            }
            x.extend_from_slice(features);
            y.push(target);
        }
        Self::new(dim.unwrap_or(0), x, y)
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn row(&self, i: usize) -> &[T] {
        &self.x[i * self.n_features..(i + 1) * self.n_features]
    }

    #[inline]
    pub fn value(&self, i: usize, f: usize) -> T {
        self.x[i * self.n_features + f]
    }

    #[inline]
    pub fn target(&self, i: usize) -> T {
        self.y[i]
    }

    pub fn targets(&self) -> &[T] {
        &self.y
    }
}

/// Per-tree seed derived from the master seed (SplitMix64 finalizer).
pub fn tree_seed(master_seed: u64, tree: usize) -> u64 {
    let mut z = master_seed
        ^ (tree as u64)
            .wrapping_add(1)
            .wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Forest<T> {
    trees: Vec<Tree<T>>,
    targets: Vec<T>,
    /// Training row indices sorted by target (ties by index).
    order: Vec<u32>,
    n_features: usize,
    params: ForestParams,
    master_seed: u64,
}

impl<T: Scalar> Forest<T> {
    /// Grows `params.n_estimators` trees in parallel on the current rayon
    /// pool. The result does not depend on the number of threads.
    pub fn fit(data: &Dataset<T>, params: ForestParams, master_seed: u64) -> Result<Self> {
        params.validate()?;
        if data.len() < params.min_samples_leaf {
            return Err(Error::validation(format!(
                "{} training rows is fewer than min_samples_leaf = {}",
                data.len(),
                params.min_samples_leaf
            )));
        }
        let grow = tree::GrowParams {
            min_samples_leaf: params.min_samples_leaf,
            max_depth: params.max_depth,
            mtry: params.resolved_mtry(data.n_features()),
            bootstrap: params.bootstrap,
        };
        let trees: Vec<Tree<T>> = (0..params.n_estimators)
            .into_par_iter()
            .map(|t| tree::grow(data, &grow, tree_seed(master_seed, t)))
            .collect();
        Ok(Self::assemble(
            trees,
            data.targets().to_vec(),
            data.n_features(),
            params,
            master_seed,
        ))
    }

    pub(crate) fn assemble(
        trees: Vec<Tree<T>>,
        targets: Vec<T>,
        n_features: usize,
        params: ForestParams,
        master_seed: u64,
    ) -> Self {
        let mut order: Vec<u32> = (0..targets.len() as u32).collect();
        order.sort_by(|&a, &b| {
            targets[a as usize]
                .partial_cmp(&targets[b as usize])
                .expect("finite targets")
                .then(a.cmp(&b))
        });
        Forest {
            trees,
            targets,
            order,
            n_features,
            params,
            master_seed,
        }
    }

    pub fn trees(&self) -> &[Tree<T>] {
        &self.trees
    }

    pub fn targets(&self) -> &[T] {
        &self.targets
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn params(&self) -> &ForestParams {
        &self.params
    }

    pub fn master_seed(&self) -> u64 {
        self.master_seed
    }

    fn check_query(&self, x: &[T]) -> Result<()> {
        if x.len() != self.n_features {
            return Err(Error::validation(format!(
                "query has {} features, forest expects {}",
                x.len(),
                self.n_features
            )));
        }
        Ok(())
    }

    /// Weight of every training row for query `x`; sums to one.
    pub fn weights(&self, x: &[T]) -> Result<Vec<T>> {
        self.check_query(x)?;
        let mut w = vec![T::zero(); self.targets.len()];
        let n_trees = T::from_usize(self.trees.len()).unwrap();
        for tree in &self.trees {
            let members = tree.leaf_members(x);
            let share = T::one() / (n_trees * T::from_usize(members.len()).unwrap());
            for &i in members {
                w[i as usize] = w[i as usize] + share;
            }
        }
        Ok(w)
    }

    /// Conditional CDF at `y`.
    pub fn cdf(&self, x: &[T], y: T) -> Result<T> {
        let w = self.weights(x)?;
        Ok(self
            .targets
            .iter()
            .zip(&w)
            .filter(|(t, _)| **t <= y)
            .map(|(_, w)| *w)
            .sum())
    }

    pub fn predict_quantile(&self, x: &[T], alpha: T) -> Result<T> {
        Ok(self.predict_quantiles(x, &[alpha])?[0])
    }

    /// Several quantiles sharing one weight computation.
    pub fn predict_quantiles(&self, x: &[T], alphas: &[T]) -> Result<Vec<T>> {
        if let Some(a) = alphas.iter().find(|a| !(**a > T::zero() && **a < T::one())) {
            return Err(Error::validation(format!(
                "quantile level {a} outside (0, 1)"
            )));
        }
        let w = self.weights(x)?;
        Ok(alphas.iter().map(|&a| self.scan_quantile(&w, a)).collect())
    }

    /// 0.25, 0.50 and 0.75 quantiles.
    pub fn predict_window(&self, x: &[T]) -> Result<(T, T, T)> {
        let q = self.predict_quantiles(x, &[T::lit(0.25), T::lit(0.5), T::lit(0.75)])?;
        Ok((q[0], q[1], q[2]))
    }

    fn scan_quantile(&self, w: &[T], alpha: T) -> T {
        // Summation rounding can leave the running total a few ulps short of
        // an exactly attained level.
        let slack = T::epsilon() * T::lit(64.0);
        let mut cum = T::zero();
        let mut last = None;
        for &i in &self.order {
            let wi = w[i as usize];
            if wi <= T::zero() {
                continue;
            }
            cum = cum + wi;
            last = Some(i);
            if cum >= alpha - slack {
                return self.targets[i as usize];
            }
        }
        self.targets[last.expect("weights are never all zero") as usize]
    }
}
