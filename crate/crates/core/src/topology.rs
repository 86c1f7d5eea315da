//! Bus-graph connectivity and the set of lines the causal models range over.

use serde::{Deserialize, Serialize};

use crate::grid::GridCase;

/// True iff removing `removed` (branch indices) disconnects the bus graph.
pub fn is_islanding(case: &GridCase, removed: &[usize]) -> bool {
    let n = case.n_buses();
    let pos = case.bus_positions();
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(parent: &mut [usize], mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }
    let mut components = n;
    for br in &case.branches {
        if removed.contains(&br.index) {
            continue;
        }
        let a = find(&mut parent, pos[&br.from_bus]);
        let b = find(&mut parent, pos[&br.to_bus]);
        if a != b {
            parent[a] = b;
            components -= 1;
        }
    }
    components > 1
}

/// The lines that can initiate a cascade without islanding the network.
///
/// Anomaly vectors, datasets, causal models and predictions are all indexed
/// densely over these lines (`0..len()`); `branch(id)` maps back to the
/// case's branch index. Labels shown to users are 1-based branch numbers.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LineSpace {
    branches: Vec<usize>,
    #[serde(skip)]
    dense: Vec<Option<usize>>,
}

impl LineSpace {
    pub fn viable(case: &GridCase) -> Self {
        let branches = (0..case.n_lines()).filter(|&k| !is_islanding(case, &[k])).collect();
        Self::from_branches(branches, case.n_lines())
    }

    /// All in-service lines, islanding or not.
    pub fn all(case: &GridCase) -> Self {
        Self::from_branches((0..case.n_lines()).collect(), case.n_lines())
    }

    pub fn from_branches(branches: Vec<usize>, n_total: usize) -> Self {
        let mut dense = vec![None; n_total];
        for (i, &b) in branches.iter().enumerate() {
            dense[b] = Some(i);
        }
        LineSpace { branches, dense }
    }

    pub fn len(&self) -> usize {
        self.branches.len()
    }

    pub fn is_empty(&self) -> bool {
        self.branches.is_empty()
    }

    pub fn branch(&self, line: usize) -> usize {
        self.branches[line]
    }

    pub fn branches(&self) -> &[usize] {
        &self.branches
    }

    pub fn line_of_branch(&self, branch: usize) -> Option<usize> {
        self.dense.get(branch).copied().flatten()
    }

    /// 1-based branch number, the label used in files and reports.
    pub fn label(&self, line: usize) -> usize {
        self.branches[line] + 1
    }

    pub fn line_of_label(&self, label: usize) -> Option<usize> {
        label.checked_sub(1).and_then(|b| self.line_of_branch(b))
    }

    pub fn to_branches(&self, lines: &[usize]) -> Vec<usize> {
        lines.iter().map(|&l| self.branches[l]).collect()
    }

    /// Restrict a per-branch vector to this line space.
    pub fn project(&self, per_branch: &[f64]) -> Vec<f64> {
        self.branches.iter().map(|&b| per_branch[b]).collect()
    }
}
