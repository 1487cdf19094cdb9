//! The merge-sort recursion tree, advanced one determined comparison at a time.
//!
//! Output lists are in ascending quality: the loser of each head-to-head
//! comparison is appended first.

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Merge {
    pub left: Vec<usize>,
    pub right: Vec<usize>,
    pub output: Vec<usize>,
    pub i: usize,
    pub j: usize,
    /// Index of the head-to-head pair `(left[i], right[j])` in the engine's pair table.
    pub pair: usize,
}

impl Merge {
    pub fn head(&self) -> (usize, usize) {
        (self.left[self.i], self.right[self.j])
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum NodeState {
    /// At least one child is still sorting.
    Waiting,
    Active(Merge),
    /// Sorted output, not yet taken by the parent merge.
    Done(Vec<usize>),
    /// Output moved into the parent.
    Consumed,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Node {
    pub parent: Option<usize>,
    pub children: Option<(usize, usize)>,
    pub state: NodeState,
}

/// What a determined comparison did to its merge node.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Advance {
    /// The merge moved to a new head pair.
    NextPair,
    /// The merge finished; `root` is true when the whole sort converged.
    Completed { root: bool },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MergeFrontier {
    nodes: Vec<Node>,
    root: usize,
}

impl MergeFrontier {
    /// Builds the tree over `0..n`, splitting each range at `⌊len/2⌋`, and
    /// activates every merge whose children are leaves. `new_pair(node, left, right)`
    /// registers a head pair and returns its index.
    pub fn new(n: usize, new_pair: &mut dyn FnMut(usize, usize, usize) -> usize) -> Self {
        let items: Vec<usize> = (0..n).collect();
        let mut nodes = Vec::with_capacity(2 * n);
        let root = build(&mut nodes, &items, None);
        let mut frontier = MergeFrontier { nodes, root };
        // children precede parents in `nodes`
        for idx in 0..frontier.nodes.len() {
            frontier.try_activate(idx, new_pair);
        }
        frontier
    }

    fn try_activate(
        &mut self,
        idx: usize,
        new_pair: &mut dyn FnMut(usize, usize, usize) -> usize,
    ) -> bool {
        let Some((a, b)) = self.nodes[idx].children else {
            return false;
        };
        if !matches!(self.nodes[idx].state, NodeState::Waiting) {
            return false;
        }
        let ready = |n: &Node| matches!(n.state, NodeState::Done(_));
        if !(ready(&self.nodes[a]) && ready(&self.nodes[b])) {
            return false;
        }
        let left = take_done(&mut self.nodes[a]);
        let right = take_done(&mut self.nodes[b]);
        let pair = new_pair(idx, left[0], right[0]);
        self.nodes[idx].state = NodeState::Active(Merge {
            output: Vec::with_capacity(left.len() + right.len()),
            left,
            right,
            i: 0,
            j: 0,
            pair,
        });
        true
    }

    /// Applies the determined `winner` of the head pair at `node`.
    pub fn advance(
        &mut self,
        node: usize,
        winner: usize,
        new_pair: &mut dyn FnMut(usize, usize, usize) -> usize,
    ) -> Advance {
        let NodeState::Active(merge) = &mut self.nodes[node].state else {
            panic!("advance on inactive merge node {node}");
        };
        let (a, b) = merge.head();
        debug_assert!(winner == a || winner == b);
        if winner == a {
            merge.output.push(b);
            merge.j += 1;
        } else {
            merge.output.push(a);
            merge.i += 1;
        }
        if merge.i == merge.left.len() {
            let rest = merge.right[merge.j..].to_vec();
            merge.output.extend(rest);
        } else if merge.j == merge.right.len() {
            let rest = merge.left[merge.i..].to_vec();
            merge.output.extend(rest);
        } else {
            let (a, b) = merge.head();
            merge.pair = new_pair(node, a, b);
            return Advance::NextPair;
        }

        let output = core::mem::take(&mut merge.output);
        self.nodes[node].state = NodeState::Done(output);
        match self.nodes[node].parent {
            None => Advance::Completed { root: true },
            Some(parent) => {
                self.try_activate(parent, new_pair);
                Advance::Completed { root: false }
            }
        }
    }

    pub fn is_complete(&self) -> bool {
        matches!(self.nodes[self.root].state, NodeState::Done(_))
    }

    /// Head pairs of all active merges, in node order.
    pub fn active_pairs(&self) -> impl Iterator<Item = usize> + '_ {
        self.nodes.iter().filter_map(|n| match &n.state {
            NodeState::Active(m) => Some(m.pair),
            _ => None,
        })
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    /// The sorted order when complete; otherwise the in-order concatenation of
    /// finished sub-orders, partial merge outputs, and unconsumed merge inputs.
    pub fn order(&self) -> (Vec<usize>, bool) {
        let mut out = Vec::new();
        self.collect(self.root, &mut out);
        (out, self.is_complete())
    }

    fn collect(&self, idx: usize, out: &mut Vec<usize>) {
        let node = &self.nodes[idx];
        match &node.state {
            NodeState::Done(items) => out.extend_from_slice(items),
            NodeState::Active(m) => {
                out.extend_from_slice(&m.output);
                out.extend_from_slice(&m.left[m.i..]);
                out.extend_from_slice(&m.right[m.j..]);
            }
            NodeState::Waiting => {
                if let Some((a, b)) = node.children {
                    self.collect(a, out);
                    self.collect(b, out);
                }
            }
            NodeState::Consumed => {}
        }
    }
}

fn take_done(node: &mut Node) -> Vec<usize> {
    match core::mem::replace(&mut node.state, NodeState::Consumed) {
        NodeState::Done(items) => items,
        _ => unreachable!("parent activated before child finished"),
    }
}

fn build(nodes: &mut Vec<Node>, items: &[usize], parent: Option<usize>) -> usize {
    if items.len() == 1 {
        nodes.push(Node {
            parent,
            children: None,
            state: NodeState::Done(alloc::vec![items[0]]),
        });
        return nodes.len() - 1;
    }
    let split = items.len() / 2;
    let a = build(nodes, &items[..split], None);
    let b = build(nodes, &items[split..], None);
    nodes.push(Node {
        parent,
        children: Some((a, b)),
        state: NodeState::Waiting,
    });
    let idx = nodes.len() - 1;
    nodes[a].parent = Some(idx);
    nodes[b].parent = Some(idx);
    idx
}
