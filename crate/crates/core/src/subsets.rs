//! Finitely described subsets of the naturals and almost-inclusion.

use std::fmt;
use std::str::FromStr;

use num_integer::Integer;
use serde::{Deserialize, Serialize};

/// Largest tree depth accepted by [`branch_family`]; node codes must fit a `u128`.
pub const MAX_TREE_DEPTH: usize = 126;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum SubsetError {
    #[error("index {index} is beyond the window horizon {horizon}")]
    OutOfWindow { index: u128, horizon: u128 },
    #[error("periodic set needs a nonempty period")]
    EmptyPeriod,
    #[error("operation needs eventually periodic sets")]
    NotPeriodic,
    #[error("branch codes {0} and {1} coincide after extension")]
    DuplicateBranch(usize, usize),
    #[error("branch code {0} is empty")]
    EmptyBranch(usize),
    #[error("branch code {index} has length {len} > tree depth {depth}")]
    BranchTooLong { index: usize, len: usize, depth: usize },
    #[error("tree depth {0} exceeds the supported maximum {MAX_TREE_DEPTH}")]
    DepthTooLarge(usize),
    #[error("cannot parse set `{text}` at byte {position}: {reason}")]
    Parse {
        text: String,
        position: usize,
        reason: String,
    },
}

/// A set known only below `horizon`, stored as its sorted members.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WindowSet {
    members: Vec<u128>,
    horizon: u128,
}

impl WindowSet {
    pub fn new(mut members: Vec<u128>, horizon: u128) -> Result<Self, SubsetError> {
        members.sort_unstable();
        members.dedup();
        if let Some(&last) = members.last() {
            if last >= horizon {
                return Err(SubsetError::OutOfWindow {
                    index: last,
                    horizon,
                });
            }
        }
        Ok(WindowSet { members, horizon })
    }

    pub fn from_bits(bits: &[bool]) -> Self {
        let members = bits
            .iter()
            .enumerate()
            .filter(|(_, &b)| b)
            .map(|(i, _)| i as u128)
            .collect();
        WindowSet {
            members,
            horizon: bits.len() as u128,
        }
    }

    pub fn members(&self) -> &[u128] {
        &self.members
    }

    pub fn horizon(&self) -> u128 {
        self.horizon
    }
}

/// An element of P(omega) with a finite description.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum SubsetSpec {
    /// Bit `i` is `prefix[i]` below `prefix.len()`, then cycles through `period`.
    Periodic { prefix: Vec<bool>, period: Vec<bool> },
    Window(WindowSet),
}

/// Answer of [`almost_subset`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "answer", rename_all = "lowercase")]
pub enum Inclusion {
    Yes,
    /// `witness` is a position in the periodic part lying in U but not V;
    /// every later position congruent to it modulo the period is one too.
    No { witness: u128, period: u128 },
}

impl Inclusion {
    pub fn holds(&self) -> bool {
        matches!(self, Inclusion::Yes)
    }
}

fn parse_bits(s: &str, offset: usize, text: &str) -> Result<Vec<bool>, SubsetError> {
    s.chars()
        .enumerate()
        .map(|(i, c)| match c {
            '0' => Ok(false),
            '1' => Ok(true),
            other => Err(SubsetError::Parse {
                text: text.to_string(),
                position: offset + i,
                reason: format!("expected 0 or 1, found `{other}`"),
            }),
        })
        .collect()
}

fn bits_str(bits: &[bool]) -> String {
    bits.iter().map(|&b| if b { '1' } else { '0' }).collect()
}

impl SubsetSpec {
    pub fn periodic(prefix: Vec<bool>, period: Vec<bool>) -> Result<Self, SubsetError> {
        if period.is_empty() {
            return Err(SubsetError::EmptyPeriod);
        }
        Ok(SubsetSpec::Periodic { prefix, period })
    }

    pub fn evens() -> Self {
        SubsetSpec::Periodic {
            prefix: vec![],
            period: vec![true, false],
        }
    }

    pub fn odds() -> Self {
        SubsetSpec::Periodic {
            prefix: vec![],
            period: vec![false, true],
        }
    }

    pub fn omega() -> Self {
        SubsetSpec::Periodic {
            prefix: vec![],
            period: vec![true],
        }
    }

    pub fn empty() -> Self {
        SubsetSpec::Periodic {
            prefix: vec![],
            period: vec![false],
        }
    }

    pub fn is_periodic(&self) -> bool {
        matches!(self, SubsetSpec::Periodic { .. })
    }

    /// Length of the prefix plus period, or the horizon for windows.
    pub fn description_len(&self) -> u128 {
        match self {
            SubsetSpec::Periodic { prefix, period } => (prefix.len() + period.len()) as u128,
            SubsetSpec::Window(w) => w.horizon,
        }
    }

    /// Membership of `i`; windows refuse queries at or past their horizon.
    pub fn member(&self, i: u128) -> Result<bool, SubsetError> {
        match self {
            SubsetSpec::Periodic { prefix, period } => {
                let p = prefix.len() as u128;
                if i < p {
                    Ok(prefix[i as usize])
                } else {
                    Ok(period[((i - p) % period.len() as u128) as usize])
                }
            }
            SubsetSpec::Window(w) => {
                if i >= w.horizon {
                    Err(SubsetError::OutOfWindow {
                        index: i,
                        horizon: w.horizon,
                    })
                } else {
                    Ok(w.members.binary_search(&i).is_ok())
                }
            }
        }
    }

    /// Horizon below which membership is known (`None` for periodic sets).
    pub fn horizon(&self) -> Option<u128> {
        match self {
            SubsetSpec::Periodic { .. } => None,
            SubsetSpec::Window(w) => Some(w.horizon),
        }
    }

    /// Smallest member `>= from`, if one exists within the known range.
    pub fn next_member(&self, from: u128) -> Option<u128> {
        match self {
            SubsetSpec::Periodic { prefix, period } => {
                // one full period past the prefix decides everything
                let stop = from.max(prefix.len() as u128) + period.len() as u128;
                (from..stop).find(|&i| self.member(i).unwrap_or(false))
            }
            SubsetSpec::Window(w) => {
                let idx = w.members.partition_point(|&m| m < from);
                w.members.get(idx).copied()
            }
        }
    }

    /// Members below `limit` in increasing order.
    pub fn members_below(&self, limit: u128) -> Vec<u128> {
        let mut out = Vec::new();
        let mut i = 0;
        while i < limit {
            match self.next_member(i) {
                Some(m) if m < limit => {
                    out.push(m);
                    i = m + 1;
                }
                _ => break,
            }
        }
        out
    }

    fn periodic_parts(&self) -> Result<(&[bool], &[bool]), SubsetError> {
        match self {
            SubsetSpec::Periodic { prefix, period } => Ok((prefix, period)),
            SubsetSpec::Window(_) => Err(SubsetError::NotPeriodic),
        }
    }
}

/// Common alignment of two periodic sets: both are periodic with period `len`
/// from position `start` on.
fn alignment(u: &SubsetSpec, v: &SubsetSpec) -> Result<(u128, u128), SubsetError> {
    let (pu, qu) = u.periodic_parts()?;
    let (pv, qv) = v.periodic_parts()?;
    let start = pu.len().max(pv.len()) as u128;
    let len = (qu.len() as u128).lcm(&(qv.len() as u128));
    Ok((start, len))
}

/// Pointwise combination of two periodic sets, itself periodic.
pub fn combine(
    u: &SubsetSpec,
    v: &SubsetSpec,
    op: impl Fn(bool, bool) -> bool,
) -> Result<SubsetSpec, SubsetError> {
    let (start, len) = alignment(u, v)?;
    let bit = |i: u128| Ok::<bool, SubsetError>(op(u.member(i)?, v.member(i)?));
    let prefix = (0..start).map(bit).collect::<Result<Vec<_>, _>>()?;
    let period = (start..start + len).map(bit).collect::<Result<Vec<_>, _>>()?;
    SubsetSpec::periodic(prefix, period)
}

/// `U \ V` as a periodic set.
pub fn difference(u: &SubsetSpec, v: &SubsetSpec) -> Result<SubsetSpec, SubsetError> {
    combine(u, v, |a, b| a && !b)
}

/// `U ∩ V` as a periodic set.
pub fn intersection(u: &SubsetSpec, v: &SubsetSpec) -> Result<SubsetSpec, SubsetError> {
    combine(u, v, |a, b| a && b)
}

/// Decide `U ⊆* V` for eventually periodic sets.
pub fn almost_subset(u: &SubsetSpec, v: &SubsetSpec) -> Result<Inclusion, SubsetError> {
    let (start, len) = alignment(u, v)?;
    for i in start..start + len {
        if u.member(i)? && !v.member(i)? {
            return Ok(Inclusion::No {
                witness: i,
                period: len,
            });
        }
    }
    Ok(Inclusion::Yes)
}

/// Decide whether `U \ V` is infinite.
pub fn diff_infinite(u: &SubsetSpec, v: &SubsetSpec) -> Result<bool, SubsetError> {
    Ok(!almost_subset(u, v)?.holds())
}

/// Depth-bounded inclusion answer for sets that may be windows.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WindowInclusion {
    /// Members of U outside V below `upto`.
    pub exceptions: Vec<u128>,
    pub upto: u128,
    pub within_window: bool,
}

/// Exceptions to `U ⊆ V` below `upto`, clipped to the known range of both sets.
pub fn almost_subset_upto(
    u: &SubsetSpec,
    v: &SubsetSpec,
    upto: u128,
) -> Result<WindowInclusion, SubsetError> {
    let limit = [u.horizon(), v.horizon(), Some(upto)]
        .into_iter()
        .flatten()
        .min()
        .unwrap_or(upto);
    let mut exceptions = Vec::new();
    for m in u.members_below(limit) {
        if !v.member(m)? {
            exceptions.push(m);
        }
    }
    Ok(WindowInclusion {
        exceptions,
        upto: limit,
        within_window: !u.is_periodic() || !v.is_periodic(),
    })
}

/// Breadth-first code of a binary-tree node: `2^|xi| - 1 + value(xi)`.
pub fn node_code(path: &[bool]) -> u128 {
    let value = path.iter().fold(0u128, |acc, &b| (acc << 1) | b as u128);
    (1u128 << path.len()) - 1 + value
}

/// Node-code sets of the given branches, each padded with zeros to `depth`.
pub fn branch_family(codes: &[Vec<bool>], depth: usize) -> Result<Vec<SubsetSpec>, SubsetError> {
    if depth > MAX_TREE_DEPTH {
        return Err(SubsetError::DepthTooLarge(depth));
    }
    let mut extended = Vec::with_capacity(codes.len());
    for (index, c) in codes.iter().enumerate() {
        if c.is_empty() {
            return Err(SubsetError::EmptyBranch(index));
        }
        if c.len() > depth {
            return Err(SubsetError::BranchTooLong {
                index,
                len: c.len(),
                depth,
            });
        }
        let mut e = c.clone();
        e.resize(depth, false);
        if let Some(j) = extended.iter().position(|x: &Vec<bool>| *x == e) {
            return Err(SubsetError::DuplicateBranch(j, index));
        }
        extended.push(e);
    }
    let horizon = (1u128 << (depth + 1)) - 1;
    extended
        .iter()
        .map(|e| {
            let members = (0..=depth).map(|k| node_code(&e[..k])).collect();
            WindowSet::new(members, horizon).map(SubsetSpec::Window)
        })
        .collect()
}

/// Parse a branch code such as `"0110"`.
pub fn parse_branch(s: &str) -> Result<Vec<bool>, SubsetError> {
    parse_bits(s, 0, s)
}

impl FromStr for SubsetSpec {
    type Err = SubsetError;

    /// `periodic:<prefix>/<period>` or `window:<bits>`.
    fn from_str(text: &str) -> Result<Self, Self::Err> {
        let err = |position: usize, reason: &str| SubsetError::Parse {
            text: text.to_string(),
            position,
            reason: reason.to_string(),
        };
        if let Some(rest) = text.strip_prefix("periodic:") {
            let off = "periodic:".len();
            let (pre, per) = rest
                .split_once('/')
                .ok_or_else(|| err(off, "expected `<prefix>/<period>`"))?;
            let prefix = parse_bits(pre, off, text)?;
            let period = parse_bits(per, off + pre.len() + 1, text)?;
            if period.is_empty() {
                return Err(err(off + pre.len() + 1, "period must be nonempty"));
            }
            Ok(SubsetSpec::Periodic { prefix, period })
        } else if let Some(rest) = text.strip_prefix("window:") {
            let bits = parse_bits(rest, "window:".len(), text)?;
            Ok(SubsetSpec::Window(WindowSet::from_bits(&bits)))
        } else {
            Err(err(0, "expected `periodic:` or `window:`"))
        }
    }
}

impl fmt::Display for SubsetSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SubsetSpec::Periodic { prefix, period } => {
                write!(f, "periodic:{}/{}", bits_str(prefix), bits_str(period))
            }
            SubsetSpec::Window(w) if w.horizon <= 4096 => {
                let bits: Vec<bool> = (0..w.horizon)
                    .map(|i| w.members.binary_search(&i).is_ok())
                    .collect();
                write!(f, "window:{}", bits_str(&bits))
            }
            SubsetSpec::Window(w) => write!(
                f,
                "window[{} members below {}]",
                w.members.len(),
                w.horizon
            ),
        }
    }
}
