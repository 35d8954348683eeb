//! The building-block search space.
//!
//! A block is an ordered list of branch operations plus one combiner. Branch
//! operations pair an operation kind (`conv`, `rc_conv`, `sp_conv`) with a
//! kernel size from {1, 3, 5}; combiners are `concat`, `add_det`, `add_stc`.
//! Configs have a text form, e.g.
//!
//! ```text
//! conv(5)|sp_conv(1)|sp_conv(3)|rc_conv(3)+add_det
//! ```

use crate::error::{Error, Result};
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

/// Largest number of branches a block may have.
pub const MAX_BRANCHES: usize = 8;
/// Branch count used when none is specified.
pub const DEFAULT_BRANCHES: usize = 4;

/// Operation kind of one branch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum OpKind {
    /// k x k convolution.
    Conv,
    /// k x 1 convolution followed by 1 x k convolution.
    RcConv,
    /// Depthwise k x k convolution followed by a pointwise 1 x 1 convolution.
    SpConv,
}

impl OpKind {
    pub const ALL: [OpKind; 3] = [OpKind::Conv, OpKind::RcConv, OpKind::SpConv];

    pub fn label(self) -> &'static str {
        match self {
            OpKind::Conv => "conv",
            OpKind::RcConv => "rc_conv",
            OpKind::SpConv => "sp_conv",
        }
    }
}

impl fmt::Display for OpKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// Kernel size restricted to the three legal values.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum KernelSize {
    K1,
    K3,
    K5,
}

impl KernelSize {
    pub const ALL: [KernelSize; 3] = [KernelSize::K1, KernelSize::K3, KernelSize::K5];

    pub fn size(self) -> usize {
        match self {
            KernelSize::K1 => 1,
            KernelSize::K3 => 3,
            KernelSize::K5 => 5,
        }
    }

    pub fn from_size(k: usize) -> Result<Self> {
        match k {
            1 => Ok(KernelSize::K1),
            3 => Ok(KernelSize::K3),
            5 => Ok(KernelSize::K5),
            other => Err(Error::Parse(format!(
                "kernel size {other} not allowed (must be 1, 3, or 5)"
            ))),
        }
    }
}

impl fmt::Display for KernelSize {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.size())
    }
}

/// One branch operation: kind plus kernel size.
///
/// Ordering is the canonical total order used by [`BlockConfig::canonicalize`]:
/// kind first (`conv` < `rc_conv` < `sp_conv`), then kernel size.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct BranchOp {
    pub kind: OpKind,
    pub kernel: KernelSize,
}

impl BranchOp {
    pub fn new(kind: OpKind, kernel: KernelSize) -> Self {
        BranchOp { kind, kernel }
    }

    /// All nine operations, in canonical order.
    pub fn all() -> Vec<BranchOp> {
        let mut ops = Vec::with_capacity(9);
        for kind in OpKind::ALL {
            for kernel in KernelSize::ALL {
                ops.push(BranchOp { kind, kernel });
            }
        }
        ops
    }
}

impl fmt::Display for BranchOp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}({})", self.kind, self.kernel)
    }
}

impl FromStr for BranchOp {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let open = s
            .find('(')
            .ok_or_else(|| Error::Parse(format!("branch \"{s}\" is missing a kernel size, expected kind(k)")))?;
        if !s.ends_with(')') {
            return Err(Error::Parse(format!("branch \"{s}\" is missing a closing parenthesis")));
        }
        let kind_str = s[..open].trim();
        let kind = match kind_str {
            "conv" => OpKind::Conv,
            "rc_conv" => OpKind::RcConv,
            "sp_conv" => OpKind::SpConv,
            other => return Err(Error::Parse(format!("unknown operation kind \"{other}\""))),
        };
        let k_str = s[open + 1..s.len() - 1].trim();
        let k: usize = k_str
            .parse()
            .map_err(|_| Error::Parse(format!("kernel \"{k_str}\" is not an integer")))?;
        Ok(BranchOp { kind, kernel: KernelSize::from_size(k)? })
    }
}

/// How branch outputs merge.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum CombinerKind {
    /// Concatenate along the channel dimension.
    Concat,
    /// Elementwise sum.
    AddDet,
    /// Sum weighted by random simplex weights in training, equal weights in eval.
    AddStc,
}

impl CombinerKind {
    pub const ALL: [CombinerKind; 3] = [CombinerKind::Concat, CombinerKind::AddDet, CombinerKind::AddStc];

    pub fn label(self) -> &'static str {
        match self {
            CombinerKind::Concat => "concat",
            CombinerKind::AddDet => "add_det",
            CombinerKind::AddStc => "add_stc",
        }
    }

    /// Whether branch shapes must match exactly (add-type) rather than only
    /// spatially (concat).
    pub fn is_additive(self) -> bool {
        !matches!(self, CombinerKind::Concat)
    }
}

impl fmt::Display for CombinerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for CombinerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "concat" => Ok(CombinerKind::Concat),
            // "add" is how reduced tables print add_det.
            "add" | "add_det" => Ok(CombinerKind::AddDet),
            "add_stc" => Ok(CombinerKind::AddStc),
            other => Err(Error::Parse(format!("unknown combiner \"{other}\""))),
        }
    }
}

/// One sampled building block: ordered branches plus a combiner.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct BlockConfig {
    branches: Vec<BranchOp>,
    combiner: CombinerKind,
}

impl BlockConfig {
    pub fn new(branches: Vec<BranchOp>, combiner: CombinerKind) -> Result<Self> {
        if branches.is_empty() {
            return Err(Error::InvalidConfig("a block needs at least one branch".into()));
        }
        if branches.len() > MAX_BRANCHES {
            return Err(Error::InvalidConfig(format!(
                "{} branches exceeds the maximum of {MAX_BRANCHES}",
                branches.len()
            )));
        }
        Ok(BlockConfig { branches, combiner })
    }

    pub fn branches(&self) -> &[BranchOp] {
        &self.branches
    }

    pub fn combiner(&self) -> CombinerKind {
        self.combiner
    }

    /// Canonical form for duplicate detection: add-type combiners are
    /// order-symmetric, so their branches sort into the canonical order;
    /// concat preserves branch order. Idempotent.
    pub fn canonicalize(&self) -> BlockConfig {
        let mut branches = self.branches.clone();
        if self.combiner.is_additive() {
            branches.sort();
        }
        BlockConfig { branches, combiner: self.combiner }
    }
}

impl fmt::Display for BlockConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, op) in self.branches.iter().enumerate() {
            if i > 0 {
                f.write_str("|")?;
            }
            write!(f, "{op}")?;
        }
        write!(f, "+{}", self.combiner)
    }
}

impl FromStr for BlockConfig {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (branch_part, combiner_part) = s
            .rsplit_once('+')
            .ok_or_else(|| Error::Parse(format!("config \"{s}\" is missing \"+<combiner>\"")))?;
        let combiner: CombinerKind = combiner_part.parse()?;
        if branch_part.trim().is_empty() {
            return Err(Error::Parse("empty branch list".into()));
        }
        let branches = branch_part
            .split('|')
            .map(str::parse)
            .collect::<Result<Vec<BranchOp>>>()?;
        BlockConfig::new(branches, combiner)
    }
}

impl TryFrom<String> for BlockConfig {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<BlockConfig> for String {
    fn from(c: BlockConfig) -> String {
        c.to_string()
    }
}

#[derive(Serialize, Deserialize)]
struct SearchSpaceRepr {
    branch_count: usize,
    ops: Vec<String>,
    combiners: Vec<String>,
}

/// The space configs are drawn from: a branch count, a set of allowed
/// operations, and a set of allowed combiners.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "SearchSpaceRepr", into = "SearchSpaceRepr")]
pub struct SearchSpace {
    branch_count: usize,
    allowed_ops: Vec<BranchOp>,
    allowed_combiners: Vec<CombinerKind>,
}

impl SearchSpace {
    pub fn new(
        branch_count: usize,
        ops: impl IntoIterator<Item = BranchOp>,
        combiners: impl IntoIterator<Item = CombinerKind>,
    ) -> Result<Self> {
        if branch_count == 0 || branch_count > MAX_BRANCHES {
            return Err(Error::InvalidConfig(format!(
                "branch count {branch_count} outside 1..={MAX_BRANCHES}"
            )));
        }
        let allowed_ops: Vec<BranchOp> = ops.into_iter().collect::<BTreeSet<_>>().into_iter().collect();
        let allowed_combiners: Vec<CombinerKind> =
            combiners.into_iter().collect::<BTreeSet<_>>().into_iter().collect();
        if allowed_ops.is_empty() {
            return Err(Error::InvalidConfig("allowed operation set is empty".into()));
        }
        if allowed_combiners.is_empty() {
            return Err(Error::InvalidConfig("allowed combiner set is empty".into()));
        }
        Ok(SearchSpace { branch_count, allowed_ops, allowed_combiners })
    }

    /// The full space: all nine operations and all three combiners.
    pub fn full(branch_count: usize) -> Result<Self> {
        SearchSpace::new(branch_count, BranchOp::all(), CombinerKind::ALL)
    }

    pub fn branch_count(&self) -> usize {
        self.branch_count
    }

    pub fn allowed_ops(&self) -> &[BranchOp] {
        &self.allowed_ops
    }

    pub fn allowed_combiners(&self) -> &[CombinerKind] {
        &self.allowed_combiners
    }

    /// Number of distinct configs: |ops|^B * |combiners| (order-sensitive).
    pub fn size(&self) -> u64 {
        (self.allowed_ops.len() as u64).pow(self.branch_count as u32)
            * self.allowed_combiners.len() as u64
    }

    /// Draw one config: every branch i.i.d. uniform over the allowed
    /// operations, the combiner uniform over the allowed combiners.
    pub fn sample(&self, rng: &mut impl Rng) -> BlockConfig {
        let branches = (0..self.branch_count)
            .map(|_| self.allowed_ops[rng.gen_range(0..self.allowed_ops.len())])
            .collect();
        let combiner = self.allowed_combiners[rng.gen_range(0..self.allowed_combiners.len())];
        BlockConfig { branches, combiner }
    }

    /// Parse a compact spec like `b=4,ops=*,combiners=add_det|concat`.
    ///
    /// Keys: `b` (branch count, default 4), `ops` (`*` or a `|`-separated op
    /// list, default `*`), `combiners` (`*` or a `|`-separated list, default
    /// `*`). An empty string yields the default space.
    pub fn parse_spec(spec: &str) -> Result<Self> {
        let mut branch_count = DEFAULT_BRANCHES;
        let mut ops = BranchOp::all();
        let mut combiners = CombinerKind::ALL.to_vec();
        for part in spec.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            let (key, value) = part
                .split_once('=')
                .ok_or_else(|| Error::Parse(format!("space spec item \"{part}\" is not key=value")))?;
            match key.trim() {
                "b" | "branches" => {
                    branch_count = value
                        .trim()
                        .parse()
                        .map_err(|_| Error::Parse(format!("branch count \"{value}\" is not an integer")))?;
                }
                "ops" => {
                    if value.trim() != "*" {
                        ops = value.split('|').map(str::parse).collect::<Result<Vec<_>>>()?;
                    }
                }
                "combiners" => {
                    if value.trim() != "*" {
                        combiners = value.split('|').map(str::parse).collect::<Result<Vec<_>>>()?;
                    }
                }
                other => return Err(Error::Parse(format!("unknown space spec key \"{other}\""))),
            }
        }
        SearchSpace::new(branch_count, ops, combiners)
    }
}

impl Default for SearchSpace {
    fn default() -> Self {
        SearchSpace::full(DEFAULT_BRANCHES).expect("default space is valid")
    }
}

impl TryFrom<SearchSpaceRepr> for SearchSpace {
    type Error = Error;

    fn try_from(repr: SearchSpaceRepr) -> Result<Self> {
        let ops = repr.ops.iter().map(|s| s.parse()).collect::<Result<Vec<BranchOp>>>()?;
        let combiners = repr
            .combiners
            .iter()
            .map(|s| s.parse())
            .collect::<Result<Vec<CombinerKind>>>()?;
        SearchSpace::new(repr.branch_count, ops, combiners)
    }
}

impl From<SearchSpace> for SearchSpaceRepr {
    fn from(s: SearchSpace) -> Self {
        SearchSpaceRepr {
            branch_count: s.branch_count,
            ops: s.allowed_ops.iter().map(|o| o.to_string()).collect(),
            combiners: s.allowed_combiners.iter().map(|c| c.to_string()).collect(),
        }
    }
}
