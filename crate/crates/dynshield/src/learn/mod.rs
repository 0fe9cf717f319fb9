//! Passive automata learning from execution traces.
//!
//! [`SampleSet`] holds the prefix-closed training data as a trie,
//! [`Ptmm`](ptmm::Ptmm) is its prefix-tree Mealy machine, and
//! [`rpni`](rpni::rpni) folds that tree into a small consistent machine,
//! gated by an evidence-depth threshold. [`adaptive_min_depth`] picks the
//! threshold from the episode lengths seen so far.

mod ptmm;
mod rpni;

pub use ptmm::Ptmm;
pub use rpni::{rpni, MergeHypothesis};

use crate::alphabet::{Alphabet, Sym};
use crate::mealy::MealyMachine;
use crate::{Error, Result};

/// Id of a node in the sample trie. Node 0 is the empty-word root.
pub(crate) type NodeId = u32;

#[derive(Debug, Clone)]
pub(crate) struct TrieNode {
    /// Sorted by input symbol. `None` output marks a node that was created
    /// as a placeholder parent and never sampled itself: a prefix-closure
    /// violation unless filled in later.
    pub edges: Vec<(Sym, NodeId, Option<Sym>)>,
}

/// Prefix-closed training data: a finite map from non-empty input words to
/// output symbols, stored as a trie. The empty word is the implicit root and
/// carries no output.
#[derive(Debug, Clone)]
pub struct SampleSet {
    inputs: Alphabet,
    outputs: Alphabet,
    nodes: Vec<TrieNode>,
    sampled: usize,
}

impl SampleSet {
    pub fn new(inputs: Alphabet, outputs: Alphabet) -> Self {
        SampleSet {
            inputs,
            outputs,
            nodes: vec![TrieNode { edges: Vec::new() }],
            sampled: 0,
        }
    }

    pub fn inputs(&self) -> &Alphabet {
        &self.inputs
    }

    pub fn outputs(&self) -> &Alphabet {
        &self.outputs
    }

    /// Number of sampled words (the root does not count).
    pub fn len(&self) -> usize {
        self.sampled
    }

    pub fn is_empty(&self) -> bool {
        self.sampled == 0
    }

    pub(crate) fn node(&self, id: NodeId) -> &TrieNode {
        &self.nodes[id as usize]
    }

    pub(crate) fn node_count(&self) -> usize {
        self.nodes.len()
    }

    fn child(&self, id: NodeId, a: Sym) -> Option<(NodeId, Option<Sym>)> {
        let edges = &self.nodes[id as usize].edges;
        edges
            .binary_search_by_key(&a, |e| e.0)
            .ok()
            .map(|i| (edges[i].1, edges[i].2))
    }

    /// Walks one step from `node`, creating the child if needed, and records
    /// the observed output. Fails if the word already carries a different
    /// output. Returns the child node, which callers use as a cursor when
    /// inserting a whole episode step by step.
    pub fn extend(&mut self, node: NodeId, a: Sym, out: Sym) -> Result<NodeId> {
        debug_assert!(a.index() < self.inputs.len() && out.index() < self.outputs.len());
        let edges = &mut self.nodes[node as usize].edges;
        match edges.binary_search_by_key(&a, |e| e.0) {
            Ok(i) => {
                let (_, child, slot) = &mut edges[i];
                let child = *child;
                match slot {
                    Some(prev) if *prev != out => Err(Error::Invalid(format!(
                        "conflicting outputs for the same input word: '{}' vs '{}'",
                        self.outputs.name(*prev),
                        self.outputs.name(out)
                    ))),
                    Some(_) => Ok(child),
                    None => {
                        *slot = Some(out);
                        self.sampled += 1;
                        Ok(child)
                    }
                }
            }
            Err(i) => {
                let child = self.nodes.len() as NodeId;
                self.nodes[node as usize].edges.insert(i, (a, child, Some(out)));
                self.nodes.push(TrieNode { edges: Vec::new() });
                self.sampled += 1;
                Ok(child)
            }
        }
    }

    /// Inserts a single (word, output) pair, creating unsampled placeholder
    /// ancestors. Placeholders left unfilled fail [`validate`](Self::validate).
    pub fn insert(&mut self, word: &[Sym], out: Sym) -> Result<()> {
        let Some((&last, prefix)) = word.split_last() else {
            return Err(Error::Invalid(
                "the empty word carries no output and cannot be sampled".into(),
            ));
        };
        let mut node = 0;
        for &a in prefix {
            node = match self.child(node, a) {
                Some((c, _)) => c,
                None => {
                    let child = self.nodes.len() as NodeId;
                    let edges = &mut self.nodes[node as usize].edges;
                    let i = edges.binary_search_by_key(&a, |e| e.0).unwrap_err();
                    edges.insert(i, (a, child, None));
                    self.nodes.push(TrieNode { edges: Vec::new() });
                    child
                }
            };
        }
        self.extend(node, last, out)?;
        Ok(())
    }

    /// Inserts a full episode: every prefix of the step sequence becomes a
    /// sampled word.
    pub fn insert_episode(&mut self, steps: &[(Sym, Sym)]) -> Result<()> {
        let mut node = 0;
        for &(a, out) in steps {
            node = self.extend(node, a, out)?;
        }
        Ok(())
    }

    /// Prefix closure: every sampled word's proper prefixes must be sampled.
    /// Violations name the orphaned prefix.
    pub fn validate(&self) -> Result<()> {
        let mut stack: Vec<(NodeId, Vec<Sym>)> = vec![(0, Vec::new())];
        while let Some((id, word)) = stack.pop() {
            for &(a, child, out) in &self.node(id).edges {
                let mut w = word.clone();
                w.push(a);
                if out.is_none() {
                    let pretty: Vec<&str> = w.iter().map(|&s| self.inputs.name(s)).collect();
                    return Err(Error::Invalid(format!(
                        "sample set is not prefix-closed: '{}' is never sampled but has sampled extensions",
                        pretty.join(" ")
                    )));
                }
                stack.push((child, w));
            }
        }
        Ok(())
    }

    /// All sampled (word, output) pairs, in depth-first order. Test helper;
    /// the hot paths walk the trie directly.
    pub fn pairs(&self) -> Vec<(Vec<Sym>, Sym)> {
        let mut out = Vec::with_capacity(self.sampled);
        let mut stack: Vec<(NodeId, Vec<Sym>)> = vec![(0, Vec::new())];
        while let Some((id, word)) = stack.pop() {
            for &(a, child, o) in &self.node(id).edges {
                let mut w = word.clone();
                w.push(a);
                if let Some(o) = o {
                    out.push((w.clone(), o));
                }
                stack.push((child, w));
            }
        }
        out
    }

    /// True iff the machine reproduces every sampled output. Walks the trie
    /// and the machine in lockstep, so no words are materialized.
    pub fn consistent_with(&self, machine: &MealyMachine) -> bool {
        let mut stack = vec![(0 as NodeId, machine.initial())];
        while let Some((id, state)) = stack.pop() {
            for &(a, child, out) in &self.node(id).edges {
                match (machine.step(state, a), out) {
                    (Some((next, got)), Some(want)) if got == want => {
                        stack.push((child, next));
                    }
                    (Some((next, _)), None) => stack.push((child, next)),
                    _ => return false,
                }
            }
        }
        true
    }
}

/// Episode lengths observed so far, with the bounds that drive the adaptive
/// merge-gate threshold.
#[derive(Debug, Clone)]
pub struct RunLog {
    lengths: Vec<u32>,
    max_ep_len: u32,
    min_depth_max: u32,
}

impl RunLog {
    pub fn new(max_ep_len: u32, min_depth_max: u32) -> Self {
        RunLog {
            lengths: Vec::new(),
            max_ep_len,
            min_depth_max,
        }
    }

    pub fn push(&mut self, len: u32) -> Result<()> {
        if len == 0 || len > self.max_ep_len {
            return Err(Error::Invalid(format!(
                "episode length {len} outside [1, {}]",
                self.max_ep_len
            )));
        }
        self.lengths.push(len);
        Ok(())
    }

    pub fn episode_count(&self) -> usize {
        self.lengths.len()
    }

    pub fn max_ep_len(&self) -> u32 {
        self.max_ep_len
    }

    pub fn min_depth_max(&self) -> u32 {
        self.min_depth_max
    }
}

/// The adaptive merge-gate threshold: short episodes so far mean little
/// evidence per run, so the gate demands deeper agreement. Evaluated in
/// exact integer arithmetic; the final value is the floor of the rational,
/// capped at the configured maximum. An empty log returns the cap.
pub fn adaptive_min_depth(log: &RunLog) -> u32 {
    let n = log.lengths.len() as u64;
    if n == 0 {
        return log.min_depth_max;
    }
    let total: u64 = log.lengths.iter().map(|&l| l as u64).sum();
    let cap = log.min_depth_max as u64;
    // ceil(max_ep_len - total/n) as a nonnegative integer
    let c = (log.max_ep_len as u64 * n - total).div_ceil(n);
    let num = n * c;
    if num >= cap * total {
        cap as u32
    } else {
        (num / total) as u32
    }
}
