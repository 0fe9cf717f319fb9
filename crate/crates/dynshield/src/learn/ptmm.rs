//! The prefix-tree Mealy machine: the sample set's trie renumbered so node
//! ids follow shortlex order of the access words, plus per-node subtree
//! heights for the merge gate's evidence cap.

use crate::alphabet::{Alphabet, Sym};
use crate::mealy::{MealyBuilder, MealyMachine};
use crate::Result;

use super::{NodeId, SampleSet};

#[derive(Debug, Clone)]
pub(crate) struct PtmmNode {
    /// Sorted by input symbol; targets are node ids, outputs always present.
    pub edges: Vec<(Sym, NodeId, Sym)>,
}

/// Tree-shaped Mealy machine over the sampled words. Node 0 is the empty
/// word; breadth-first numbering with children in symbol order makes id
/// order coincide with shortlex order of the access words.
#[derive(Debug)]
pub struct Ptmm {
    inputs: Alphabet,
    outputs: Alphabet,
    pub(crate) nodes: Vec<PtmmNode>,
    heights: Vec<u32>,
}

impl Ptmm {
    /// Validates prefix closure and builds the tree. State count is the
    /// number of sampled words plus one for the root.
    pub fn build(d: &SampleSet) -> Result<Ptmm> {
        d.validate()?;
        let n = d.node_count();
        // BFS renumbering: trie node -> ptmm id
        let mut order: Vec<NodeId> = vec![0; n];
        let mut bfs: Vec<NodeId> = Vec::with_capacity(n);
        bfs.push(0);
        let mut head = 0;
        while head < bfs.len() {
            let trie_id = bfs[head];
            order[trie_id as usize] = head as NodeId;
            head += 1;
            for &(_, child, _) in &d.node(trie_id).edges {
                bfs.push(child);
            }
        }
        let mut nodes = vec![PtmmNode { edges: Vec::new() }; n];
        for &trie_id in &bfs {
            let id = order[trie_id as usize];
            nodes[id as usize].edges = d
                .node(trie_id)
                .edges
                .iter()
                .map(|&(a, child, out)| {
                    (a, order[child as usize], out.expect("validated"))
                })
                .collect();
        }
        // children have larger ids, so a reverse sweep computes heights
        let mut heights = vec![0u32; n];
        for id in (0..n).rev() {
            let h = nodes[id]
                .edges
                .iter()
                .map(|&(_, c, _)| heights[c as usize] + 1)
                .max()
                .unwrap_or(0);
            heights[id] = h;
        }
        Ok(Ptmm {
            inputs: d.inputs().clone(),
            outputs: d.outputs().clone(),
            nodes,
            heights,
        })
    }

    pub fn inputs(&self) -> &Alphabet {
        &self.inputs
    }

    pub fn outputs(&self) -> &Alphabet {
        &self.outputs
    }

    pub fn state_count(&self) -> usize {
        self.nodes.len()
    }

    /// Height of the subtree rooted at `id` (0 for leaves).
    pub fn height(&self, id: NodeId) -> u32 {
        self.heights[id as usize]
    }

    pub(crate) fn edges(&self, id: NodeId) -> &[(Sym, NodeId, Sym)] {
        &self.nodes[id as usize].edges
    }

    pub(crate) fn edge(&self, id: NodeId, a: Sym) -> Option<(NodeId, Sym)> {
        let edges = self.edges(id);
        edges
            .binary_search_by_key(&a, |e| e.0)
            .ok()
            .map(|i| (edges[i].1, edges[i].2))
    }

    /// The tree as a plain Mealy machine, states named by node id.
    pub fn to_machine(&self) -> MealyMachine {
        let width = self.nodes.len().to_string().len();
        let name = |id: NodeId| format!("n{id:0width$}");
        let mut b = MealyBuilder::new(self.inputs.clone(), self.outputs.clone(), name(0));
        for (id, node) in self.nodes.iter().enumerate() {
            for &(a, child, out) in &node.edges {
                b.transition(
                    name(id as NodeId),
                    self.inputs.name(a),
                    name(child),
                    self.outputs.name(out),
                );
            }
        }
        b.build().expect("tree is deterministic")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::alphabet::Alphabet;

    fn sample(pairs: &[(&[&str], &str)]) -> SampleSet {
        let inputs = Alphabet::new(["a", "b"]).unwrap();
        let outputs = Alphabet::new(["0", "1"]).unwrap();
        let mut d = SampleSet::new(inputs.clone(), outputs.clone());
        for (word, out) in pairs {
            let w: Vec<Sym> = word.iter().map(|s| inputs.get(s).unwrap()).collect();
            d.insert(&w, outputs.get(out).unwrap()).unwrap();
        }
        d
    }

    #[test]
    fn empty_sample_is_a_single_root() {
        let d = sample(&[]);
        let t = Ptmm::build(&d).unwrap();
        assert_eq!(t.state_count(), 1);
        assert_eq!(t.height(0), 0);
        assert!(t.edges(0).is_empty());
    }

    #[test]
    fn chain_sample_builds_a_chain() {
        let d = sample(&[(&["a"], "0"), (&["a", "b"], "1")]);
        let t = Ptmm::build(&d).unwrap();
        assert_eq!(t.state_count(), 3);
        assert_eq!(t.height(0), 2);
        let a = t.inputs().get("a").unwrap();
        let b = t.inputs().get("b").unwrap();
        let (n1, o1) = t.edge(0, a).unwrap();
        assert_eq!(t.outputs().name(o1), "0");
        let (n2, o2) = t.edge(n1, b).unwrap();
        assert_eq!(t.outputs().name(o2), "1");
        assert!(t.edges(n2).is_empty());
    }

    #[test]
    fn shared_prefix_shares_a_node() {
        let d = sample(&[(&["a"], "0"), (&["a", "a"], "1"), (&["a", "b"], "0")]);
        let t = Ptmm::build(&d).unwrap();
        assert_eq!(t.state_count(), 4);
        let a = t.inputs().get("a").unwrap();
        let (n1, _) = t.edge(0, a).unwrap();
        assert_eq!(t.edges(n1).len(), 2);
        assert_eq!(t.height(0), 2);
        assert_eq!(t.height(n1), 1);
    }

    #[test]
    fn ids_follow_shortlex_order() {
        // b before aa in shortlex, despite insertion order
        let d = sample(&[(&["a"], "0"), (&["a", "a"], "1"), (&["b"], "1")]);
        let t = Ptmm::build(&d).unwrap();
        let a = t.inputs().get("a").unwrap();
        let b = t.inputs().get("b").unwrap();
        let (na, _) = t.edge(0, a).unwrap();
        let (nb, _) = t.edge(0, b).unwrap();
        let (naa, _) = t.edge(na, a).unwrap();
        assert!(na < nb && nb < naa);
    }

    #[test]
    fn machine_reproduces_samples() {
        let d = sample(&[(&["a"], "0"), (&["a", "b"], "1"), (&["b"], "1")]);
        let t = Ptmm::build(&d).unwrap();
        let m = t.to_machine();
        assert!(d.consistent_with(&m));
    }

    #[test]
    fn orphan_rejected_with_word() {
        let inputs = Alphabet::new(["a", "b"]).unwrap();
        let outputs = Alphabet::new(["0"]).unwrap();
        let mut d = SampleSet::new(inputs.clone(), outputs.clone());
        let a = inputs.get("a").unwrap();
        let b = inputs.get("b").unwrap();
        d.insert(&[a, b, b], outputs.get("0").unwrap()).unwrap();
        assert!(Ptmm::build(&d).is_err());
    }
}
