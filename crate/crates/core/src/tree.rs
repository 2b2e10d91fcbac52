//! Scenario trees and the non-anticipativity subspace.
//!
//! A tree is stored as one partition of the scenario set per stage. Stage `t`
//! groups scenarios that share the same history up to that stage into a
//! *bundle*; decisions of stage `t` must coincide across a bundle. The first
//! stage is a single bundle and each later partition refines the previous one.
//!
//! Stages are indexed from zero in code: stage `0` is the root decision.

use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::StructureError;
use crate::iterate::IterateMatrix;

/// Upper bound on the number of scenarios a generated tree may have.
pub const MAX_SCENARIOS: usize = 1 << 24;

/// Tolerance on `Σ p_s = 1` accepted at construction.
pub const PROBABILITY_SUM_TOL: f64 = 1e-12;

/// Per-stage decision dimensions and their column ranges in a scenario row.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<usize>", into = "Vec<usize>")]
pub struct StageLayout {
    stage_dims: Vec<usize>,
    offsets: Vec<Range<usize>>,
    n: usize,
}

impl StageLayout {
    pub fn new(stage_dims: Vec<usize>) -> Result<Self, StructureError> {
        if stage_dims.is_empty() {
            return Err(StructureError::InvalidLayout("at least one stage is required".into()));
        }
        if let Some(t) = stage_dims.iter().position(|&d| d == 0) {
            return Err(StructureError::InvalidLayout(format!("stage {t} has dimension 0")));
        }
        let mut offsets = Vec::with_capacity(stage_dims.len());
        let mut start = 0;
        for &d in &stage_dims {
            offsets.push(start..start + d);
            start += d;
        }
        Ok(Self { stage_dims, offsets, n: start })
    }

    /// Same dimension at every stage.
    pub fn uniform(stages: usize, dim: usize) -> Result<Self, StructureError> {
        Self::new(vec![dim; stages])
    }

    pub fn num_stages(&self) -> usize {
        self.stage_dims.len()
    }

    /// Total per-scenario dimension `n = Σ n_t`.
    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn stage_dims(&self) -> &[usize] {
        &self.stage_dims
    }

    pub fn stage_range(&self, t: usize) -> Range<usize> {
        self.offsets[t].clone()
    }
}

impl TryFrom<Vec<usize>> for StageLayout {
    type Error = StructureError;

    fn try_from(dims: Vec<usize>) -> Result<Self, Self::Error> {
        Self::new(dims)
    }
}

impl From<StageLayout> for Vec<usize> {
    fn from(layout: StageLayout) -> Self {
        layout.stage_dims
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioTree {
    layout: StageLayout,
    probabilities: Vec<f64>,
    /// `partitions[t]` lists the bundles of stage `t`, each sorted.
    partitions: Vec<Vec<Vec<usize>>>,
    /// `bundle_of[t][s]` is the id of the stage-`t` bundle containing `s`.
    bundle_of: Vec<Vec<usize>>,
    /// `bundle_weight[t][b] = Σ_{σ∈b} p_σ`.
    bundle_weight: Vec<Vec<f64>>,
}

impl ScenarioTree {
    /// Builds a tree from explicit per-stage partitions.
    ///
    /// Probabilities must be positive and sum to one within
    /// [`PROBABILITY_SUM_TOL`]. They are stored as given, so a tree read
    /// back from its own serialization is bitwise identical.
    pub fn new(
        layout: StageLayout,
        probabilities: Vec<f64>,
        partitions: Vec<Vec<Vec<usize>>>,
    ) -> Result<Self, StructureError> {
        let num_scenarios = probabilities.len();
        if num_scenarios == 0 {
            return Err(StructureError::InvalidProbabilities("no scenarios".into()));
        }
        if let Some(s) = probabilities.iter().position(|p| !(p.is_finite() && *p > 0.0)) {
            return Err(StructureError::InvalidProbabilities(format!(
                "p[{s}] = {} is not a positive finite number",
                probabilities[s]
            )));
        }
        let total: f64 = probabilities.iter().sum();
        if (total - 1.0).abs() > PROBABILITY_SUM_TOL {
            return Err(StructureError::InvalidProbabilities(format!("probabilities sum to {total}, not 1")));
        }

        if partitions.len() != layout.num_stages() {
            return Err(StructureError::InvalidPartition(format!(
                "{} partitions for {} stages",
                partitions.len(),
                layout.num_stages()
            )));
        }

        let mut sorted_partitions = Vec::with_capacity(partitions.len());
        let mut bundle_of = Vec::with_capacity(partitions.len());
        for (t, partition) in partitions.into_iter().enumerate() {
            let mut owner = vec![usize::MAX; num_scenarios];
            let mut bundles = Vec::with_capacity(partition.len());
            for (b, mut bundle) in partition.into_iter().enumerate() {
                if bundle.is_empty() {
                    return Err(StructureError::InvalidPartition(format!("stage {t}: bundle {b} is empty")));
                }
                bundle.sort_unstable();
                for &s in &bundle {
                    if s >= num_scenarios {
                        return Err(StructureError::ScenarioOutOfRange { index: s, count: num_scenarios });
                    }
                    if owner[s] != usize::MAX {
                        return Err(StructureError::InvalidPartition(format!(
                            "stage {t}: scenario {s} appears in more than one bundle"
                        )));
                    }
                    owner[s] = b;
                }
                bundles.push(bundle);
            }
            if let Some(s) = owner.iter().position(|&b| b == usize::MAX) {
                return Err(StructureError::InvalidPartition(format!("stage {t}: scenario {s} is not covered")));
            }
            sorted_partitions.push(bundles);
            bundle_of.push(owner);
        }

        if sorted_partitions[0].len() != 1 {
            return Err(StructureError::InvalidPartition(
                "the first stage must be a single bundle holding every scenario".into(),
            ));
        }
        for t in 1..sorted_partitions.len() {
            for (b, bundle) in sorted_partitions[t].iter().enumerate() {
                let parent = bundle_of[t - 1][bundle[0]];
                if bundle.iter().any(|&s| bundle_of[t - 1][s] != parent) {
                    return Err(StructureError::InvalidPartition(format!(
                        "stage {t}: bundle {b} does not refine a single stage-{} bundle",
                        t - 1
                    )));
                }
            }
        }

        let bundle_weight = sorted_partitions
            .iter()
            .map(|bundles| bundles.iter().map(|b| b.iter().map(|&s| probabilities[s]).sum()).collect())
            .collect();

        Ok(Self { layout, probabilities, partitions: sorted_partitions, bundle_of, bundle_weight })
    }

    /// Balanced binary tree with uniform scenario probabilities.
    pub fn binary(stage_dims: &[usize]) -> Result<Self, StructureError> {
        Self::binary_with_branching(stage_dims, 0.5)
    }

    /// Balanced binary tree with `S = 2^(T-1)` scenarios.
    ///
    /// At every branching the first child has probability `p_first` and the
    /// second `1 - p_first`; scenario probabilities are the products along
    /// the path. Scenario `s` takes the second branch at the transition out
    /// of stage `t` when bit `T - 2 - t` of `s` is set, so the stage-`t`
    /// bundle of `s` is `s >> (T - 1 - t)`.
    pub fn binary_with_branching(stage_dims: &[usize], p_first: f64) -> Result<Self, StructureError> {
        if !(p_first > 0.0 && p_first < 1.0) {
            return Err(StructureError::InvalidProbabilities(format!(
                "branch probability {p_first} must lie in (0, 1)"
            )));
        }
        let layout = StageLayout::new(stage_dims.to_vec())?;
        let stages = layout.num_stages();
        let limit_bits = MAX_SCENARIOS.trailing_zeros() as usize;
        if stages - 1 > limit_bits {
            return Err(StructureError::Capacity { stages, limit: MAX_SCENARIOS });
        }
        let num_scenarios = 1usize << (stages - 1);
        let probabilities = (0..num_scenarios)
            .map(|s| {
                (0..stages - 1)
                    .map(|t| if binary_branch(s, t, stages) == 0 { p_first } else { 1.0 - p_first })
                    .product()
            })
            .collect();
        let partitions = (0..stages)
            .map(|t| {
                let shift = stages - 1 - t;
                let width = 1usize << shift;
                (0..(1usize << t)).map(|b| (b * width..(b + 1) * width).collect()).collect()
            })
            .collect();
        Self::new(layout, probabilities, partitions)
    }

    pub fn layout(&self) -> &StageLayout {
        &self.layout
    }

    pub fn num_scenarios(&self) -> usize {
        self.probabilities.len()
    }

    pub fn num_stages(&self) -> usize {
        self.layout.num_stages()
    }

    pub fn dim(&self) -> usize {
        self.layout.dim()
    }

    pub fn probabilities(&self) -> &[f64] {
        &self.probabilities
    }

    pub fn probability(&self, s: usize) -> f64 {
        self.probabilities[s]
    }

    /// Bundles of stage `t`.
    pub fn partition(&self, t: usize) -> &[Vec<usize>] {
        &self.partitions[t]
    }

    pub fn bundle_id(&self, s: usize, t: usize) -> usize {
        self.bundle_of[t][s]
    }

    /// The stage-`t` bundle containing scenario `s`.
    pub fn bundle(&self, s: usize, t: usize) -> &[usize] {
        &self.partitions[t][self.bundle_of[t][s]]
    }

    pub fn bundle_weight(&self, t: usize, bundle: usize) -> f64 {
        self.bundle_weight[t][bundle]
    }

    pub fn check_scenario(&self, s: usize) -> Result<(), StructureError> {
        if s >= self.num_scenarios() {
            return Err(StructureError::ScenarioOutOfRange { index: s, count: self.num_scenarios() });
        }
        Ok(())
    }

    pub fn check_iterate(&self, z: &IterateMatrix) -> Result<(), StructureError> {
        z.check_dims(self.num_scenarios(), self.dim())
    }

    /// Orthogonal projection onto the non-anticipativity subspace in the
    /// probability-weighted inner product: every stage block is replaced by
    /// its probability-weighted average over the bundle.
    pub fn project_nonanticipative(&self, z: &IterateMatrix) -> Result<IterateMatrix, StructureError> {
        self.check_iterate(z)?;
        let mut out = IterateMatrix::zeros(self.num_scenarios(), self.dim());
        let mut acc = vec![0.0; self.layout.stage_dims().iter().copied().max().unwrap_or(0)];
        for t in 0..self.num_stages() {
            let cols = self.layout.stage_range(t);
            let width = cols.len();
            for (b, bundle) in self.partitions[t].iter().enumerate() {
                if let [s] = bundle.as_slice() {
                    out.row_mut(*s)[cols.clone()].copy_from_slice(&z.row(*s)[cols.clone()]);
                    continue;
                }
                self.bundle_average(z, t, b, &mut acc[..width]);
                for &s in bundle {
                    out.row_mut(s)[cols.clone()].copy_from_slice(&acc[..width]);
                }
            }
        }
        Ok(out)
    }

    /// Row `s` of [`Self::project_nonanticipative`], touching only the
    /// bundles that contain `s`.
    pub fn project_scenario(&self, z: &IterateMatrix, s: usize) -> Result<Vec<f64>, StructureError> {
        let mut out = vec![0.0; self.dim()];
        self.project_scenario_into(z, s, &mut out)?;
        Ok(out)
    }

    pub fn project_scenario_into(&self, z: &IterateMatrix, s: usize, out: &mut [f64]) -> Result<(), StructureError> {
        self.check_iterate(z)?;
        self.check_scenario(s)?;
        if out.len() != self.dim() {
            return Err(StructureError::DimensionMismatch { expected: (1, self.dim()), found: (1, out.len()) });
        }
        for t in 0..self.num_stages() {
            let cols = self.layout.stage_range(t);
            let b = self.bundle_of[t][s];
            if self.partitions[t][b].len() == 1 {
                out[cols.clone()].copy_from_slice(&z.row(s)[cols]);
            } else {
                self.bundle_average(z, t, b, &mut out[cols]);
            }
        }
        Ok(())
    }

    fn bundle_average(&self, z: &IterateMatrix, t: usize, b: usize, acc: &mut [f64]) {
        let cols = self.layout.stage_range(t);
        // Averaging offsets from the first member keeps bundles that are
        // already constant exactly unchanged.
        let bundle = &self.partitions[t][b];
        let base = &z.row(bundle[0])[cols.clone()];
        acc.fill(0.0);
        for &sigma in &bundle[1..] {
            let p = self.probabilities[sigma];
            for ((a, v), b0) in acc.iter_mut().zip(&z.row(sigma)[cols.clone()]).zip(base) {
                *a += p * (v - b0);
            }
        }
        let weight = self.bundle_weight[t][b];
        for (a, b0) in acc.iter_mut().zip(base) {
            *a = b0 + *a / weight;
        }
    }

    /// `⟨a, b⟩_P = Σ_s p_s ⟨a^s, b^s⟩`.
    pub fn p_inner(&self, a: &IterateMatrix, b: &IterateMatrix) -> Result<f64, StructureError> {
        self.check_iterate(a)?;
        self.check_iterate(b)?;
        Ok((0..self.num_scenarios())
            .map(|s| self.probabilities[s] * a.row(s).iter().zip(b.row(s)).map(|(x, y)| x * y).sum::<f64>())
            .sum())
    }

    pub fn p_norm(&self, a: &IterateMatrix) -> Result<f64, StructureError> {
        Ok(self.p_inner(a, a)?.max(0.0).sqrt())
    }

    /// Frobenius distance between `x` and its projection.
    pub fn nonanticipativity_gap(&self, x: &IterateMatrix) -> Result<f64, StructureError> {
        Ok(self.project_nonanticipative(x)?.sub(x)?.frobenius_norm())
    }
}

/// Branch (0 = first child, 1 = second) taken by scenario `s` of a binary
/// tree with `stages` stages when leaving stage `t`.
pub fn binary_branch(s: usize, t: usize, stages: usize) -> usize {
    (s >> (stages - 2 - t)) & 1
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_scenarios() -> ScenarioTree {
        let layout = StageLayout::new(vec![1]).unwrap();
        // A single stage with two scenarios: both share the root bundle.
        ScenarioTree::new(layout, vec![0.25, 0.75], vec![vec![vec![0, 1]]]).unwrap()
    }

    #[test]
    fn layout_offsets_cover_the_row() {
        let layout = StageLayout::new(vec![2, 1, 3]).unwrap();
        assert_eq!(layout.dim(), 6);
        assert_eq!(layout.stage_range(0), 0..2);
        assert_eq!(layout.stage_range(1), 2..3);
        assert_eq!(layout.stage_range(2), 3..6);
        assert!(StageLayout::new(vec![]).is_err());
        assert!(StageLayout::new(vec![1, 0]).is_err());
    }

    #[test]
    fn weighted_average_of_two_scenarios() {
        // min (0.25(x-1)^2 + 0.75(x-3)^2) is x = 0.25 + 2.25 = 2.5
        let tree = two_scenarios();
        let z = IterateMatrix::from_rows(&[vec![1.0], vec![3.0]]).unwrap();
        let x = tree.project_nonanticipative(&z).unwrap();
        assert_eq!(x.to_rows(), vec![vec![2.5], vec![2.5]]);
        assert_eq!(tree.project_scenario(&z, 0).unwrap(), vec![2.5]);
    }

    #[test]
    fn p_inner_direct_sum() {
        let tree = two_scenarios();
        let a = IterateMatrix::from_rows(&[vec![2.0], vec![0.0]]).unwrap();
        let b = IterateMatrix::from_rows(&[vec![1.0], vec![5.0]]).unwrap();
        assert_eq!(tree.p_inner(&a, &b).unwrap(), 0.5);
        let ones = IterateMatrix::from_rows(&[vec![1.0], vec![1.0]]).unwrap();
        assert!((tree.p_inner(&ones, &ones).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn binary_tree_shapes() {
        let t1 = ScenarioTree::binary(&[2]).unwrap();
        assert_eq!(t1.num_scenarios(), 1);
        assert_eq!(t1.partition(0).len(), 1);

        let t6 = ScenarioTree::binary(&[1; 6]).unwrap();
        assert_eq!(t6.num_scenarios(), 32);

        let t4 = ScenarioTree::binary(&[1; 4]).unwrap();
        let sizes: Vec<usize> = (0..4).map(|t| t4.partition(t).len()).collect();
        assert_eq!(sizes, vec![1, 2, 4, 8]);
        for t in 0..4 {
            assert!(t4.partition(t).iter().all(|b| b.len() == 8 >> t));
        }
    }

    #[test]
    fn binary_tree_capacity_error() {
        let err = ScenarioTree::binary(&vec![1; 40]).unwrap_err();
        assert!(matches!(err, StructureError::Capacity { stages: 40, .. }));
    }

    #[test]
    fn branching_probabilities_compound() {
        let tree = ScenarioTree::binary_with_branching(&[1, 1, 1], 0.3).unwrap();
        let expected = [0.09, 0.21, 0.21, 0.49];
        for (p, e) in tree.probabilities().iter().zip(expected) {
            assert!((p - e).abs() < 1e-15);
        }
    }

    #[test]
    fn stage_one_column_is_averaged_across_all() {
        let tree = ScenarioTree::binary(&[1, 1, 1]).unwrap();
        let z = IterateMatrix::from_rows(&[
            vec![0.0, 1.0, 5.0],
            vec![4.0, 3.0, 6.0],
            vec![8.0, 5.0, 7.0],
            vec![12.0, 9.0, 8.0],
        ])
        .unwrap();
        let x = tree.project_nonanticipative(&z).unwrap();
        assert_eq!(x.to_rows(), vec![
            vec![6.0, 2.0, 5.0],
            vec![6.0, 2.0, 6.0],
            vec![6.0, 7.0, 7.0],
            vec![6.0, 7.0, 8.0],
        ]);
    }

    #[test]
    fn leaf_stage_is_copied_exactly() {
        let tree = ScenarioTree::binary_with_branching(&[1, 2], 0.3).unwrap();
        let z = IterateMatrix::from_rows(&[vec![1.0, 0.1, 0.7], vec![2.0, 1.0 / 3.0, 0.2]]).unwrap();
        for s in 0..2 {
            let row = tree.project_scenario(&z, s).unwrap();
            assert_eq!(&row[1..], &z.row(s)[1..]);
        }
    }

    #[test]
    fn malformed_partitions_are_rejected() {
        let layout = StageLayout::new(vec![1, 1]).unwrap();
        let p = vec![0.5, 0.5];
        // first stage not a single bundle
        assert!(ScenarioTree::new(layout.clone(), p.clone(), vec![vec![vec![0], vec![1]], vec![vec![0], vec![1]]]).is_err());
        // missing scenario
        assert!(ScenarioTree::new(layout.clone(), p.clone(), vec![vec![vec![0, 1]], vec![vec![0]]]).is_err());
        // duplicate scenario
        assert!(ScenarioTree::new(layout.clone(), p.clone(), vec![vec![vec![0, 1]], vec![vec![0, 1], vec![1]]]).is_err());
        // probabilities not summing to one
        assert!(ScenarioTree::new(layout.clone(), vec![0.5, 0.6], vec![vec![vec![0, 1]], vec![vec![0], vec![1]]]).is_err());
        // non-refining partition
        let layout3 = StageLayout::new(vec![1, 1, 1]).unwrap();
        let bad = vec![
            vec![vec![0, 1, 2, 3]],
            vec![vec![0, 1], vec![2, 3]],
            vec![vec![0, 2], vec![1], vec![3]],
        ];
        assert!(ScenarioTree::new(layout3, vec![0.25; 4], bad).is_err());
    }

    #[test]
    fn projection_rejects_wrong_shapes() {
        let tree = two_scenarios();
        assert!(tree.project_nonanticipative(&IterateMatrix::zeros(3, 1)).is_err());
        assert!(tree.project_scenario(&IterateMatrix::zeros(2, 1), 2).is_err());
    }
}
