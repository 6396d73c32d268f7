//! Group structures and the penalty families.
//!
//! Penalty values exclude `lambda`; the solver multiplies it in so a single
//! evaluation serves a whole regularization path.

use serde::{Deserialize, Serialize};

use crate::error::{CoxError, Result};

/// Disjoint partition of covariate indices `0..p` into groups `0..G`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupStructure {
    group_of: Vec<usize>,
    members: Vec<Vec<usize>>,
    names: Vec<String>,
}

impl GroupStructure {
    /// Builds from a per-covariate group id. Ids must be exactly `0..G`
    /// with every group non-empty.
    pub fn from_assignments(group_of: Vec<usize>) -> Result<Self> {
        let names = match group_of.iter().max() {
            Some(&g) => (0..=g).map(|g| format!("g{}", g + 1)).collect(),
            None => Vec::new(),
        };
        Self::with_names(group_of, names)
    }

    pub fn with_names(group_of: Vec<usize>, names: Vec<String>) -> Result<Self> {
        if group_of.is_empty() {
            return Err(CoxError::InvalidGroups("no covariates".into()));
        }
        let n_groups = names.len();
        let mut members = vec![Vec::new(); n_groups];
        for (j, &g) in group_of.iter().enumerate() {
            if g >= n_groups {
                return Err(CoxError::InvalidGroups(format!(
                    "covariate {j} assigned to group {g} but only {n_groups} groups named"
                )));
            }
            members[g].push(j);
        }
        if let Some(g) = members.iter().position(|m| m.is_empty()) {
            return Err(CoxError::InvalidGroups(format!("group {} is empty", names[g])));
        }
        Ok(Self {
            group_of,
            members,
            names,
        })
    }

    /// Contiguous groups of the given sizes.
    pub fn from_sizes(sizes: &[usize]) -> Result<Self> {
        let group_of = sizes
            .iter()
            .enumerate()
            .flat_map(|(g, &s)| std::iter::repeat_n(g, s))
            .collect();
        let names = (0..sizes.len()).map(|g| format!("g{}", g + 1)).collect();
        Self::with_names(group_of, names)
    }

    pub fn singletons(p: usize) -> Result<Self> {
        Self::from_assignments((0..p).collect())
    }

    pub fn single(p: usize) -> Result<Self> {
        Self::from_assignments(vec![0; p])
    }

    pub fn p(&self) -> usize {
        self.group_of.len()
    }

    pub fn n_groups(&self) -> usize {
        self.members.len()
    }

    pub fn group_of(&self, j: usize) -> usize {
        self.group_of[j]
    }

    pub fn members(&self, g: usize) -> &[usize] {
        &self.members[g]
    }

    pub fn size(&self, g: usize) -> usize {
        self.members[g].len()
    }

    pub fn sizes(&self) -> Vec<usize> {
        self.members.iter().map(Vec::len).collect()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn iter(&self) -> impl Iterator<Item = &[usize]> {
        self.members.iter().map(Vec::as_slice)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PenaltyFamily {
    ExclusiveLasso,
    Lasso,
    Ridge,
    ElasticNet,
    GroupLasso,
    Ipf,
}

impl PenaltyFamily {
    pub const ALL: [PenaltyFamily; 6] = [
        PenaltyFamily::ExclusiveLasso,
        PenaltyFamily::Lasso,
        PenaltyFamily::Ridge,
        PenaltyFamily::ElasticNet,
        PenaltyFamily::GroupLasso,
        PenaltyFamily::Ipf,
    ];

    /// Short name used on the command line and in result tables.
    pub fn short_name(self) -> &'static str {
        match self {
            PenaltyFamily::ExclusiveLasso => "exclusive",
            PenaltyFamily::Lasso => "lasso",
            PenaltyFamily::Ridge => "ridge",
            PenaltyFamily::ElasticNet => "elastic",
            PenaltyFamily::GroupLasso => "group",
            PenaltyFamily::Ipf => "ipf",
        }
    }

    pub fn from_short_name(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|f| f.short_name() == s)
    }

    /// Whether fits of this family produce exact zeros.
    pub fn is_sparse(self) -> bool {
        !matches!(self, PenaltyFamily::Ridge)
    }
}

impl std::fmt::Display for PenaltyFamily {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.short_name())
    }
}

/// Penalty family with its hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PenaltySpec {
    pub family: PenaltyFamily,
    pub lambda: f64,
    /// Elastic-net mixing weight on the l1 part; 1 for Lasso and IPF, 0 for
    /// Ridge and Group Lasso, unused by Exclusive Lasso.
    pub alpha: f64,
    /// Per-group penalty factors (IPF). Empty means all ones.
    pub group_factors: Vec<f64>,
}

impl PenaltySpec {
    fn make(family: PenaltyFamily, lambda: f64, alpha: f64) -> Self {
        Self {
            family,
            lambda,
            alpha,
            group_factors: Vec::new(),
        }
    }

    pub fn exclusive_lasso(lambda: f64) -> Self {
        Self::make(PenaltyFamily::ExclusiveLasso, lambda, 1.0)
    }

    pub fn lasso(lambda: f64) -> Self {
        Self::make(PenaltyFamily::Lasso, lambda, 1.0)
    }

    pub fn ridge(lambda: f64) -> Self {
        Self::make(PenaltyFamily::Ridge, lambda, 0.0)
    }

    pub fn elastic_net(lambda: f64, alpha: f64) -> Self {
        Self::make(PenaltyFamily::ElasticNet, lambda, alpha)
    }

    pub fn group_lasso(lambda: f64) -> Self {
        Self::make(PenaltyFamily::GroupLasso, lambda, 0.0)
    }

    pub fn ipf(lambda: f64, group_factors: Vec<f64>) -> Self {
        Self {
            group_factors,
            ..Self::make(PenaltyFamily::Ipf, lambda, 1.0)
        }
    }

    /// Default hyperparameters of a family at the given `lambda`.
    pub fn for_family(family: PenaltyFamily, lambda: f64) -> Self {
        match family {
            PenaltyFamily::ExclusiveLasso => Self::exclusive_lasso(lambda),
            PenaltyFamily::Lasso => Self::lasso(lambda),
            PenaltyFamily::Ridge => Self::ridge(lambda),
            PenaltyFamily::ElasticNet => Self::elastic_net(lambda, 0.5),
            PenaltyFamily::GroupLasso => Self::group_lasso(lambda),
            PenaltyFamily::Ipf => Self::ipf(lambda, Vec::new()),
        }
    }

    pub fn with_lambda(&self, lambda: f64) -> Self {
        Self {
            lambda,
            ..self.clone()
        }
    }

    pub fn factor(&self, g: usize) -> f64 {
        self.group_factors.get(g).copied().unwrap_or(1.0)
    }

    pub fn validate(&self, groups: &GroupStructure) -> Result<()> {
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(CoxError::InvalidPenalty(format!("lambda = {}", self.lambda)));
        }
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(CoxError::InvalidPenalty(format!("alpha = {}", self.alpha)));
        }
        if !self.group_factors.is_empty() && self.group_factors.len() != groups.n_groups() {
            return Err(CoxError::InvalidPenalty(format!(
                "{} group factors for {} groups",
                self.group_factors.len(),
                groups.n_groups()
            )));
        }
        if self.group_factors.iter().any(|&f| !(f >= 0.0 && f.is_finite())) {
            return Err(CoxError::InvalidPenalty("negative or non-finite group factor".into()));
        }
        Ok(())
    }
}

/// Structural penalty `P(beta)`, without the `lambda` multiplier.
pub fn penalty_value(spec: &PenaltySpec, groups: &GroupStructure, beta: &[f64]) -> Result<f64> {
    if beta.len() != groups.p() {
        return Err(CoxError::DimensionMismatch {
            expected: groups.p(),
            found: beta.len(),
        });
    }
    let l1 = |idx: &[usize]| idx.iter().map(|&k| beta[k].abs()).sum::<f64>();
    let sq = |idx: &[usize]| idx.iter().map(|&k| beta[k] * beta[k]).sum::<f64>();
    let value = match spec.family {
        PenaltyFamily::ExclusiveLasso => {
            0.5 * groups.iter().map(|m| l1(m).powi(2)).sum::<f64>()
        }
        PenaltyFamily::Lasso | PenaltyFamily::ElasticNet | PenaltyFamily::Ridge => {
            let a = spec.alpha;
            let abs: f64 = beta.iter().map(|b| b.abs()).sum();
            let sumsq: f64 = beta.iter().map(|b| b * b).sum();
            a * abs + 0.5 * (1.0 - a) * sumsq
        }
        PenaltyFamily::GroupLasso => groups
            .iter()
            .map(|m| (m.len() as f64).sqrt() * sq(m).sqrt())
            .sum(),
        PenaltyFamily::Ipf => groups
            .iter()
            .enumerate()
            .map(|(g, m)| spec.factor(g) * l1(m))
            .sum(),
    };
    Ok(value)
}

/// `lambda * sum_{l in g(j), l != j} |beta_l|`.
pub fn exclusive_threshold(
    spec: &PenaltySpec,
    groups: &GroupStructure,
    beta: &[f64],
    j: usize,
) -> Result<f64> {
    if j >= groups.p() {
        return Err(CoxError::IndexOutOfRange {
            index: j,
            len: groups.p(),
        });
    }
    if beta.len() != groups.p() {
        return Err(CoxError::DimensionMismatch {
            expected: groups.p(),
            found: beta.len(),
        });
    }
    let others: f64 = groups
        .members(groups.group_of(j))
        .iter()
        .filter(|&&l| l != j)
        .map(|&l| beta[l].abs())
        .sum();
    Ok(spec.lambda * others)
}
