//! Static grid partition of the lattice into supervisory blocks.

use crate::tasknet::AgentId;

/// One supervisory group: a contiguous lattice block.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SupervisoryGroup {
    pub index: u32,
    /// Member agent acting as supervisor; its own traffic costs nothing.
    pub supervisor: AgentId,
    pub members: Vec<AgentId>,
    pub rows: (usize, usize),
    pub cols: (usize, usize),
}

impl SupervisoryGroup {
    /// Members other than the supervisor.
    pub fn subordinates(&self) -> usize {
        self.members.len() - 1
    }
}

fn bounds(width: usize, side: usize) -> Vec<(usize, usize)> {
    (0..side).map(|i| (width * i / side, width * (i + 1) / side)).collect()
}

/// Splits a `width x width` lattice into `side x side` near-equal blocks.
/// Each block's supervisor is the member closest to the block center.
pub fn grid_partition(width: usize, side: usize) -> Vec<SupervisoryGroup> {
    if side == 0 {
        return Vec::new();
    }
    let spans = bounds(width, side);
    let mut groups = Vec::with_capacity(side * side);
    for &(r0, r1) in &spans {
        for &(c0, c1) in &spans {
            let members = (r0..r1)
                .flat_map(|r| (c0..c1).map(move |c| AgentId((r * width + c) as u32)))
                .collect();
            let (rc, cc) = ((r0 + r1 - 1) / 2, (c0 + c1 - 1) / 2);
            groups.push(SupervisoryGroup {
                index: groups.len() as u32,
                supervisor: AgentId((rc * width + cc) as u32),
                members,
                rows: (r0, r1),
                cols: (c0, c1),
            });
        }
    }
    groups
}
