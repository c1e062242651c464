//! Expectation of a forest under isotropic Gaussian input perturbation.
//!
//! For `z ~ N(mu, sigma^2 I)` the smoothed forest is
//!
//! ```text
//! F_sigma(mu) = sum over trees, sum over leaf regions R of  value(R) * P(z in R)
//! ```
//!
//! and because each region is an axis-aligned box and the noise is isotropic,
//! `P(z in R)` factors into one CDF difference per feature the region
//! constrains. Features a region does not constrain contribute a factor of
//! exactly 1 and are never visited. The forest-wide refined partition is never
//! built: per-tree regions plus linearity of expectation give the same value.
//!
//! Gradients are closed form. For a constrained feature with bounds `[l, u)`,
//! `d/dmu [Phi((u-mu)/s) - Phi((l-mu)/s)] = (phi((l-mu)/s) - phi((u-mu)/s)) / s`,
//! multiplied by the product of the region's other factors. The derivative
//! with respect to a leaf value is the region's mass.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{check_input, Error, Result};
use crate::forest::{extract_leaf_regions, Forest, LeafId, LeafRegion, Node, Tree};

const FRAC_1_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

/// Standard normal CDF.
///
/// Evaluated as `erfc(-t / sqrt 2) / 2`, which keeps full relative precision in
/// the lower tail; absolute error is at the 1e-16 level for all finite `t`.
pub fn gaussian_cdf(t: f64) -> f64 {
    if t == f64::INFINITY {
        return 1.0;
    }
    if t == f64::NEG_INFINITY {
        return 0.0;
    }
    0.5 * libm::erfc(-t * core::f64::consts::FRAC_1_SQRT_2)
}

/// Standard normal density; zero at both infinities.
pub fn gaussian_pdf(t: f64) -> f64 {
    if t.is_infinite() {
        return 0.0;
    }
    FRAC_1_SQRT_2PI * libm::exp(-0.5 * t * t)
}

/// Isotropic Gaussian noise with standard deviation `sigma`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PerturbationSpec {
    sigma: f64,
}

impl PerturbationSpec {
    pub fn new(sigma: f64) -> Result<Self> {
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(Error::InvalidArgument(alloc::format!(
                "sigma must be positive and finite, got {sigma}"
            )));
        }
        Ok(PerturbationSpec { sigma })
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }
}

/// Probability that `N(mu, sigma^2 I)` lands inside `region`.
pub fn region_mass(region: &LeafRegion, mu: &[f64], spec: PerturbationSpec) -> f64 {
    let s = spec.sigma;
    region
        .constraints
        .iter()
        .map(|(&f, iv)| {
            gaussian_cdf((iv.upper() - mu[f]) / s) - gaussian_cdf((iv.lower() - mu[f]) / s)
        })
        .product()
}

#[derive(Debug, Clone, PartialEq)]
pub struct SmoothedValue {
    pub value: Vec<f64>,
    /// Mass of every leaf region, in [`Forest::leaf_ids`] order.
    pub per_leaf_mass: Vec<(LeafId, f64)>,
}

/// Smoothed forest output at `mu`.
pub fn smoothed_evaluate(forest: &Forest, mu: &[f64], spec: PerturbationSpec) -> Result<SmoothedValue> {
    SmoothForest::new(forest)?.evaluate(forest, mu, spec)
}

/// Jacobian of the smoothed output with respect to `mu`, as `output_dim` rows
/// of `input_dim` entries.
pub fn smoothed_gradient_input(
    forest: &Forest,
    mu: &[f64],
    spec: PerturbationSpec,
) -> Result<Vec<Vec<f64>>> {
    SmoothForest::new(forest)?.input_jacobian(forest, mu, spec)
}

/// Derivative of output component `c` with respect to component `c` of each
/// leaf; this is the leaf's region mass (cross-component derivatives are zero).
pub fn smoothed_gradient_leaves(
    forest: &Forest,
    mu: &[f64],
    spec: PerturbationSpec,
) -> Result<Vec<(LeafId, f64)>> {
    Ok(smoothed_evaluate(forest, mu, spec)?.per_leaf_mass)
}

/// A region bound on one feature, referring to split slots of its tree.
#[derive(Debug, Clone, Copy)]
struct Bound {
    feature: usize,
    lower: Option<usize>,
    upper: Option<usize>,
}

#[derive(Debug, Clone)]
struct CompiledRegion {
    leaf: usize,
    bounds: Vec<Bound>,
}

#[derive(Debug, Clone)]
struct CompiledTree {
    /// `(feature, threshold)` of every split node, indexed by slot.
    splits: Vec<(usize, f64)>,
    regions: Vec<CompiledRegion>,
}

/// Per-tree CDF and density values at each split threshold.
struct SplitStats {
    cdf: Vec<f64>,
    pdf: Vec<f64>,
}

impl CompiledTree {
    /// Region mass derivatives sum to zero, so any constant may be subtracted
    /// from every leaf before weighting them; using one of the tree's own
    /// leaves makes a constant tree's gradient exactly zero.
    fn reference_leaf<'a>(&self, tree: &'a Tree) -> &'a [f64] {
        &tree.leaf_at(self.regions[0].leaf).expect("region leaf").value
    }

    fn new(tree: &Tree) -> Result<Self> {
        // Validates paths and fixes the leaf order.
        let order: Vec<usize> = extract_leaf_regions(tree)?.iter().map(|r| r.leaf).collect();

        let mut slot_of = vec![usize::MAX; tree.nodes().len()];
        let mut splits = Vec::new();
        for (i, node) in tree.nodes().iter().enumerate() {
            if let Node::Split(s) = node {
                slot_of[i] = splits.len();
                splits.push((s.feature, s.threshold));
            }
        }

        let mut by_leaf = Vec::with_capacity(order.len());
        let mut stack = vec![(0usize, Vec::<Bound>::new())];
        while let Some((idx, bounds)) = stack.pop() {
            match &tree.nodes()[idx] {
                Node::Leaf(_) => by_leaf.push(CompiledRegion { leaf: idx, bounds }),
                Node::Split(s) => {
                    let slot = slot_of[idx];
                    let mut right = bounds.clone();
                    tighten(&mut right, &splits, s.feature, slot, true);
                    let mut left = bounds;
                    tighten(&mut left, &splits, s.feature, slot, false);
                    stack.push((s.right, right));
                    stack.push((s.left, left));
                }
            }
        }
        debug_assert_eq!(by_leaf.iter().map(|r| r.leaf).collect::<Vec<_>>(), order);
        Ok(CompiledTree { splits, regions: by_leaf })
    }

    fn stats(&self, mu: &[f64], sigma: f64, with_pdf: bool) -> SplitStats {
        let mut cdf = Vec::with_capacity(self.splits.len());
        let mut pdf = Vec::with_capacity(if with_pdf { self.splits.len() } else { 0 });
        for &(f, t) in &self.splits {
            let z = (t - mu[f]) / sigma;
            cdf.push(gaussian_cdf(z));
            if with_pdf {
                pdf.push(gaussian_pdf(z));
            }
        }
        SplitStats { cdf, pdf }
    }
}

impl Bound {
    fn factor(&self, st: &SplitStats) -> f64 {
        let hi = self.upper.map_or(1.0, |s| st.cdf[s]);
        let lo = self.lower.map_or(0.0, |s| st.cdf[s]);
        hi - lo
    }

    /// Derivative of the factor with respect to `mu[feature]`.
    fn dfactor(&self, st: &SplitStats, sigma: f64) -> f64 {
        let lo = self.lower.map_or(0.0, |s| st.pdf[s]);
        let hi = self.upper.map_or(0.0, |s| st.pdf[s]);
        (lo - hi) / sigma
    }
}

/// Applies one branch condition to a path's bounds, keeping the tighter bound.
fn tighten(bounds: &mut Vec<Bound>, splits: &[(usize, f64)], feature: usize, slot: usize, right: bool) {
    let threshold = splits[slot].1;
    let b = match bounds.iter().position(|b| b.feature == feature) {
        Some(i) => &mut bounds[i],
        None => {
            bounds.push(Bound { feature, lower: None, upper: None });
            bounds.last_mut().expect("just pushed")
        }
    };
    if right {
        if b.lower.is_none_or(|s| splits[s].1 <= threshold) {
            b.lower = Some(slot);
        }
    } else if b.upper.is_none_or(|s| splits[s].1 >= threshold) {
        b.upper = Some(slot);
    }
}

/// Output value and gradients of a scalar objective routed through the smoothed forest.
#[derive(Debug, Clone, PartialEq)]
pub struct SmoothedGrads {
    pub value: Vec<f64>,
    /// `sum_c grad_output[c] * dF_c/dmu`.
    pub input_grad: Vec<f64>,
    /// Region masses in [`Forest::leaf_ids`] order; the gradient with respect to
    /// component `c` of a leaf is `grad_output[c] * mass`.
    pub leaf_mass: Vec<f64>,
}

/// Region structure of a forest, extracted once and reused across evaluations.
///
/// Leaf values are read from the forest passed to each call, so the cache
/// stays valid while leaves are trained; the tree structure must not change.
#[derive(Debug, Clone)]
pub struct SmoothForest {
    input_dim: usize,
    output_dim: usize,
    trees: Vec<CompiledTree>,
}

impl SmoothForest {
    pub fn new(forest: &Forest) -> Result<Self> {
        let trees = forest.trees().iter().map(CompiledTree::new).collect::<Result<Vec<_>>>()?;
        Ok(SmoothForest { input_dim: forest.input_dim(), output_dim: forest.output_dim(), trees })
    }

    fn check(&self, forest: &Forest, mu: &[f64]) -> Result<()> {
        if forest.trees().len() != self.trees.len()
            || forest.input_dim() != self.input_dim
            || forest.output_dim() != self.output_dim
        {
            return Err(Error::ShapeMismatch("forest does not match its region cache".into()));
        }
        check_input(mu, self.input_dim)
    }

    pub fn evaluate(&self, forest: &Forest, mu: &[f64], spec: PerturbationSpec) -> Result<SmoothedValue> {
        self.check(forest, mu)?;
        let mut value = vec![0.0; self.output_dim];
        let mut per_leaf_mass = Vec::new();
        for (t, (ct, tree)) in self.trees.iter().zip(forest.trees()).enumerate() {
            let st = ct.stats(mu, spec.sigma, false);
            for region in &ct.regions {
                let mass: f64 = region.bounds.iter().map(|b| b.factor(&st)).product();
                let leaf = &tree.leaf_at(region.leaf).expect("region leaf").value;
                for (v, l) in value.iter_mut().zip(leaf) {
                    *v += l * mass;
                }
                per_leaf_mass.push((LeafId { tree: t, node: region.leaf }, mass));
            }
        }
        Ok(SmoothedValue { value, per_leaf_mass })
    }

    /// Value, input vector-Jacobian product, and leaf masses in one pass.
    pub fn backward(
        &self,
        forest: &Forest,
        mu: &[f64],
        spec: PerturbationSpec,
        grad_output: &[f64],
    ) -> Result<SmoothedGrads> {
        Ok(self.backward_with(forest, mu, spec, |_| Ok(((), grad_output.to_vec())))?.1)
    }

    /// Like [`SmoothForest::backward`], but the output gradient is computed from
    /// the smoothed value by `grad_fn`, whose extra result is passed through.
    /// Region factors are computed once and reused for the gradient.
    pub fn backward_with<T>(
        &self,
        forest: &Forest,
        mu: &[f64],
        spec: PerturbationSpec,
        grad_fn: impl FnOnce(&[f64]) -> Result<(T, Vec<f64>)>,
    ) -> Result<(T, SmoothedGrads)> {
        self.check(forest, mu)?;
        let sigma = spec.sigma;
        let mut value = vec![0.0; self.output_dim];
        let mut leaf_mass = Vec::new();
        let mut stats = Vec::with_capacity(self.trees.len());
        let mut factors = Vec::new();
        for (ct, tree) in self.trees.iter().zip(forest.trees()) {
            let st = ct.stats(mu, sigma, true);
            for region in &ct.regions {
                let start = factors.len();
                factors.extend(region.bounds.iter().map(|b| b.factor(&st)));
                let mass: f64 = factors[start..].iter().product();
                let leaf = &tree.leaf_at(region.leaf).expect("region leaf").value;
                for (v, l) in value.iter_mut().zip(leaf) {
                    *v += l * mass;
                }
                leaf_mass.push(mass);
            }
            stats.push(st);
        }

        let (extra, grad_output) = grad_fn(&value)?;
        if grad_output.len() != self.output_dim {
            return Err(Error::DimensionMismatch { expected: self.output_dim, got: grad_output.len() });
        }

        let mut input_grad = vec![0.0; self.input_dim];
        let mut offset = 0;
        for ((ct, tree), st) in self.trees.iter().zip(forest.trees()).zip(&stats) {
            let reference = ct.reference_leaf(tree);
            for region in &ct.regions {
                let fs = &factors[offset..offset + region.bounds.len()];
                offset += region.bounds.len();
                let leaf = &tree.leaf_at(region.leaf).expect("region leaf").value;
                let weight: f64 =
                    grad_output.iter().zip(leaf).zip(reference).map(|((g, l), r)| g * (l - r)).sum();
                if weight == 0.0 {
                    continue;
                }
                for (i, b) in region.bounds.iter().enumerate() {
                    let others: f64 =
                        fs.iter().enumerate().filter(|&(j, _)| j != i).map(|(_, f)| f).product();
                    input_grad[b.feature] += weight * b.dfactor(st, sigma) * others;
                }
            }
        }
        Ok((extra, SmoothedGrads { value, input_grad, leaf_mass }))
    }

    /// Full Jacobian `dF_c / dmu_i`.
    pub fn input_jacobian(&self, forest: &Forest, mu: &[f64], spec: PerturbationSpec) -> Result<Vec<Vec<f64>>> {
        self.check(forest, mu)?;
        let sigma = spec.sigma;
        let mut jac = vec![vec![0.0; self.input_dim]; self.output_dim];
        let mut factors = Vec::new();
        for (ct, tree) in self.trees.iter().zip(forest.trees()) {
            let st = ct.stats(mu, sigma, true);
            let reference = ct.reference_leaf(tree);
            for region in &ct.regions {
                factors.clear();
                factors.extend(region.bounds.iter().map(|b| b.factor(&st)));
                let leaf = &tree.leaf_at(region.leaf).expect("region leaf").value;
                for (i, b) in region.bounds.iter().enumerate() {
                    let others: f64 =
                        factors.iter().enumerate().filter(|&(j, _)| j != i).map(|(_, f)| f).product();
                    let d = b.dfactor(&st, sigma) * others;
                    for ((row, l), r) in jac.iter_mut().zip(leaf).zip(reference) {
                        row[b.feature] += (l - r) * d;
                    }
                }
            }
        }
        Ok(jac)
    }
}
