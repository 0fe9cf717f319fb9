//! Red-blue RPNI over the prefix-tree Mealy machine, with an evidence-depth
//! merge gate.
//!
//! The hypothesis is a quotient of the tree maintained as a union-find plus
//! overlay edges. Red classes are final machine states; blue nodes are the
//! unfolded tree nodes one step away from a red class. Each iteration pops
//! the shortlex-smallest blue node and merges it into the shortlex-smallest
//! red class that folds without an output conflict *and* agrees with it on
//! some input/output word at least `min(min_depth, subtree height)` long;
//! failing that, the blue node is promoted to red. A merge trial never
//! mutates the hypothesis, so a failed candidate costs nothing but the walk.

use std::collections::{BTreeSet, HashMap};

use crate::alphabet::Sym;
use crate::mealy::{MealyBuilder, MealyMachine};
use crate::Result;

use super::{NodeId, Ptmm, SampleSet};

/// A successful fold simulation: the unions and overlay edges a commit
/// would apply.
#[derive(Debug)]
pub struct FoldPlan {
    unions: Vec<(NodeId, NodeId)>,
    grafts: Vec<(NodeId, Sym, NodeId, Sym)>,
}

pub struct MergeHypothesis<'a> {
    ptmm: &'a Ptmm,
    /// Committed union-find; `uf[x] == x` for class representatives.
    uf: Vec<NodeId>,
    /// Committed overlay edges of each representative, disjoint from its
    /// tree edges by symbol.
    extra: Vec<Vec<(Sym, NodeId, Sym)>>,
    red: Vec<NodeId>,
    is_red: Vec<bool>,
    blue: BTreeSet<NodeId>,
}

struct FoldCtx {
    pending_union: HashMap<NodeId, NodeId>,
    pending_extra: HashMap<(NodeId, Sym), (NodeId, Sym)>,
    plan: FoldPlan,
}

impl<'a> MergeHypothesis<'a> {
    pub fn new(ptmm: &'a Ptmm) -> Self {
        let n = ptmm.state_count();
        let mut h = MergeHypothesis {
            ptmm,
            uf: (0..n as NodeId).collect(),
            extra: vec![Vec::new(); n],
            red: vec![0],
            is_red: {
                let mut v = vec![false; n];
                v[0] = true;
                v
            },
            blue: BTreeSet::new(),
        };
        for &(_, child, _) in ptmm.edges(0) {
            h.blue.insert(child);
        }
        h
    }

    fn find(&self, mut x: NodeId) -> NodeId {
        while self.uf[x as usize] != x {
            x = self.uf[x as usize];
        }
        x
    }

    /// Committed class edge on `a`: overlay first, then the tree edge.
    /// Targets are raw node ids; resolve before use.
    fn class_edge(&self, q: NodeId, a: Sym) -> Option<(NodeId, Sym)> {
        for &(s, t, o) in &self.extra[q as usize] {
            if s == a {
                return Some((t, o));
            }
        }
        self.ptmm.edge(q, a)
    }

    /// All committed class edges of a representative, tree edges first.
    fn class_edges(&self, q: NodeId) -> impl Iterator<Item = (Sym, NodeId, Sym)> + '_ {
        self.ptmm
            .edges(q)
            .iter()
            .copied()
            .chain(self.extra[q as usize].iter().copied())
    }

    pub fn red_states(&self) -> &[NodeId] {
        &self.red
    }

    pub fn blue_states(&self) -> &BTreeSet<NodeId> {
        &self.blue
    }

    pub fn min_blue(&self) -> Option<NodeId> {
        self.blue.first().copied()
    }

    /// Trial fold of `blue`'s class into `red`. Returns the plan on success
    /// and leaves the hypothesis untouched either way.
    fn try_fold(&self, red: NodeId, blue: NodeId) -> Option<FoldPlan> {
        let mut ctx = FoldCtx {
            pending_union: HashMap::new(),
            pending_extra: HashMap::new(),
            plan: FoldPlan {
                unions: Vec::new(),
                grafts: Vec::new(),
            },
        };
        if self.fold(&mut ctx, red, blue) {
            Some(ctx.plan)
        } else {
            None
        }
    }

    fn resolve(&self, ctx: &FoldCtx, mut x: NodeId) -> NodeId {
        loop {
            if let Some(&q) = ctx.pending_union.get(&x) {
                x = q;
                continue;
            }
            let up = self.uf[x as usize];
            if up == x {
                return x;
            }
            x = up;
        }
    }

    fn edge_with_pending(&self, ctx: &FoldCtx, q: NodeId, a: Sym) -> Option<(NodeId, Sym)> {
        if let Some(&e) = ctx.pending_extra.get(&(q, a)) {
            return Some(e);
        }
        self.class_edge(q, a)
    }

    /// Folds class `b` into class `a` (both resolved representatives),
    /// recursively determinizing. Returns false on any output conflict.
    fn fold(&self, ctx: &mut FoldCtx, a: NodeId, b: NodeId) -> bool {
        if a == b {
            return true;
        }
        ctx.pending_union.insert(b, a);
        ctx.plan.unions.push((b, a));
        // b is tree-shaped: its edges are the tree edges plus committed
        // overlay, never pending ones (pending grafts only land on the
        // receiving side, which b has not been before it is folded).
        let edges: Vec<(Sym, NodeId, Sym)> = self.class_edges(b).collect();
        for (sym, b_target, b_out) in edges {
            match self.edge_with_pending(ctx, a, sym) {
                Some((a_target, a_out)) => {
                    if a_out != b_out {
                        return false;
                    }
                    let qa = self.resolve(ctx, a_target);
                    let qb = self.resolve(ctx, b_target);
                    if !self.fold(ctx, qa, qb) {
                        return false;
                    }
                }
                None => {
                    ctx.pending_extra.insert((a, sym), (b_target, b_out));
                    ctx.plan.grafts.push((a, sym, b_target, b_out));
                }
            }
        }
        true
    }

    /// True iff folding `blue` into `red` produces no output conflict.
    /// The trial leaves the hypothesis unmodified.
    pub fn compatible(&self, red: NodeId, blue: NodeId) -> bool {
        self.try_fold(red, blue).is_some()
    }

    /// The maximum length of an input word with defined paths from `red` (in
    /// the current quotient) and `blue` (in the tree) whose outputs agree at
    /// every step. Bounded by the blue subtree height.
    pub fn agreement_depth(&self, red: NodeId, blue: NodeId) -> u32 {
        self.agreement_rec(red, blue)
    }

    fn agreement_rec(&self, q: NodeId, t: NodeId) -> u32 {
        let mut best = 0;
        for &(a, tc, to) in self.ptmm.edges(t) {
            if let Some((qt, qo)) = self.class_edge(q, a) {
                if qo == to {
                    best = best.max(1 + self.agreement_rec(self.find(qt), tc));
                }
            }
        }
        best
    }

    /// Early-exit form of the gate: is there an agreeing word of length at
    /// least `need`?
    fn meets_depth(&self, q: NodeId, t: NodeId, need: u32) -> bool {
        if need == 0 {
            return true;
        }
        for &(a, tc, to) in self.ptmm.edges(t) {
            if let Some((qt, qo)) = self.class_edge(q, a) {
                if qo == to && self.meets_depth(self.find(qt), tc, need - 1) {
                    return true;
                }
            }
        }
        false
    }

    /// The evidence gate: deep subtrees need deep agreement, shallow ones
    /// only as much as they possess.
    pub fn gate(&self, red: NodeId, blue: NodeId, min_depth: u32) -> bool {
        let need = min_depth.min(self.ptmm.height(blue));
        self.meets_depth(red, blue, need)
    }

    /// Commits a merge of `blue` into `red`. Precondition: the pair is
    /// compatible (and gated, when called from the learner loop); an
    /// incompatible pair is a logic error.
    pub fn merge(&mut self, red: NodeId, blue: NodeId) {
        let plan = self
            .try_fold(red, blue)
            .expect("merge precondition: states are compatible");
        self.commit(blue, plan);
    }

    fn commit(&mut self, blue: NodeId, plan: FoldPlan) {
        self.blue.remove(&blue);
        for &(x, q) in &plan.unions {
            self.uf[x as usize] = q;
            // the fold re-expressed x's overlay under its new class
            self.extra[x as usize].clear();
        }
        for &(x, q) in &plan.unions {
            if self.blue.remove(&x) {
                let qq = self.find(q);
                if !self.is_red[qq as usize] {
                    self.blue.insert(qq);
                }
            }
        }
        for &(q, sym, target, out) in &plan.grafts {
            self.extra[q as usize].push((sym, target, out));
            if self.is_red[q as usize] {
                let tt = self.find(target);
                if !self.is_red[tt as usize] {
                    self.blue.insert(tt);
                }
            }
        }
    }

    /// Promotes a blue node to red and exposes its successors as blue.
    /// Pops are not globally ascending (a graft can expose a node below an
    /// existing red id), so red keeps sorted order by insertion.
    pub fn promote(&mut self, blue: NodeId) {
        self.blue.remove(&blue);
        let at = self.red.partition_point(|&r| r < blue);
        self.red.insert(at, blue);
        self.is_red[blue as usize] = true;
        let succs: Vec<NodeId> = self
            .class_edges(blue)
            .map(|(_, t, _)| self.find(t))
            .collect();
        for t in succs {
            if !self.is_red[t as usize] {
                self.blue.insert(t);
            }
        }
    }

    /// Recomputes the blue set from its definition. Test oracle for the
    /// incremental maintenance.
    #[cfg(test)]
    fn blue_from_scratch(&self) -> BTreeSet<NodeId> {
        let mut blue = BTreeSet::new();
        for &r in &self.red {
            for (_, t, _) in self.class_edges(r) {
                let tt = self.find(t);
                if !self.is_red[tt as usize] {
                    blue.insert(tt);
                }
            }
        }
        blue
    }

    /// The quotient machine over the red classes, states named `q000...` in
    /// shortlex order of their access words.
    pub fn extract(&self) -> MealyMachine {
        let width = self.red.len().to_string().len().max(1);
        let mut index: HashMap<NodeId, usize> = HashMap::new();
        for (i, &r) in self.red.iter().enumerate() {
            index.insert(r, i);
        }
        let name = |i: usize| format!("q{i:0width$}");
        let mut b = MealyBuilder::new(
            self.ptmm.inputs().clone(),
            self.ptmm.outputs().clone(),
            name(index[&self.find(0)]),
        );
        for (i, &r) in self.red.iter().enumerate() {
            for (a, t, o) in self.class_edges(r) {
                let j = *index
                    .get(&self.find(t))
                    .expect("terminated hypothesis only reaches red classes");
                b.transition(
                    name(i),
                    self.ptmm.inputs().name(a),
                    name(j),
                    self.ptmm.outputs().name(o),
                );
            }
        }
        b.build().expect("quotient is deterministic")
    }
}

/// The learner: builds the prefix tree and folds it into a small machine
/// consistent with the samples. `min_depth = 0` is classical RPNI.
pub fn rpni(d: &SampleSet, min_depth: u32) -> Result<MealyMachine> {
    let ptmm = Ptmm::build(d)?;
    let mut h = MergeHypothesis::new(&ptmm);
    while let Some(blue) = h.min_blue() {
        let mut chosen = None;
        for &red in h.red_states() {
            if h.gate(red, blue, min_depth) {
                if let Some(plan) = h.try_fold(red, blue) {
                    chosen = Some(plan);
                    break;
                }
            }
        }
        match chosen {
            Some(plan) => h.commit(blue, plan),
            None => h.promote(blue),
        }
    }
    let machine = h.extract();
    debug_assert!(
        d.consistent_with(&machine),
        "rpni output must be consistent with its samples"
    );
    Ok(machine)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::alphabet::Alphabet;
    use crate::learn::SampleSet;

    fn sample(inputs: &[&str], outputs: &[&str], pairs: &[(&str, &str)]) -> SampleSet {
        let ia = Alphabet::new(inputs.iter().copied()).unwrap();
        let oa = Alphabet::new(outputs.iter().copied()).unwrap();
        let mut d = SampleSet::new(ia.clone(), oa.clone());
        for (word, outs) in pairs {
            let w: Vec<Sym> = word.chars().map(|c| ia.get(&c.to_string()).unwrap()).collect();
            let os: Vec<Sym> = outs.chars().map(|c| oa.get(&c.to_string()).unwrap()).collect();
            assert_eq!(w.len(), os.len());
            let steps: Vec<(Sym, Sym)> = w.into_iter().zip(os).collect();
            d.insert_episode(&steps).unwrap();
        }
        d
    }

    /// Parity of `a`s: outputs 1 when the count becomes odd.
    fn parity_sample(depth: usize) -> SampleSet {
        let ia = Alphabet::new(["a", "b"]).unwrap();
        let oa = Alphabet::new(["0", "1"]).unwrap();
        let mut d = SampleSet::new(ia.clone(), oa.clone());
        let a = ia.get("a").unwrap();
        let b = ia.get("b").unwrap();
        let o0 = oa.get("0").unwrap();
        let o1 = oa.get("1").unwrap();
        // enumerate all words up to `depth`
        let mut stack: Vec<(Vec<Sym>, bool)> = vec![(Vec::new(), false)];
        while let Some((w, odd)) = stack.pop() {
            if w.len() >= depth {
                continue;
            }
            for &(sym, flips) in &[(a, true), (b, false)] {
                let next_odd = odd ^ flips;
                let mut w2 = w.clone();
                w2.push(sym);
                d.insert(&w2, if next_odd { o1 } else { o0 }).unwrap();
                stack.push((w2, next_odd));
            }
        }
        d
    }

    #[test]
    fn leaves_are_compatible_and_depth_zero() {
        let d = sample(&["a"], &["0"], &[("aa", "00")]);
        let ptmm = Ptmm::build(&d).unwrap();
        let h = MergeHypothesis::new(&ptmm);
        // nodes: 0 -a-> 1 -a-> 2; red = {0}, blue = {1}
        assert!(h.compatible(0, 1));
        // leaf 2 against anything: nothing to conflict, nothing to agree on
        assert_eq!(h.agreement_depth(0, 2), 0);
    }

    #[test]
    fn one_step_output_conflict() {
        // red's own edge on a gives 0, blue's child gives 1 on a
        let d = sample(&["a"], &["0", "1"], &[("aa", "01")]);
        let ptmm = Ptmm::build(&d).unwrap();
        let h = MergeHypothesis::new(&ptmm);
        assert!(!h.compatible(0, 1));
    }

    #[test]
    fn identical_subtrees_compatible_with_full_agreement() {
        let d = sample(&["a"], &["0"], &[("aaaa", "0000")]);
        let ptmm = Ptmm::build(&d).unwrap();
        let h = MergeHypothesis::new(&ptmm);
        assert!(h.compatible(0, 1));
        // blue node 1 has subtree height 3, fully replicated under red
        assert_eq!(h.agreement_depth(0, 1), 3);
    }

    #[test]
    fn agreement_stops_where_children_diverge() {
        let d = sample(
            &["a", "b"],
            &["0", "1"],
            &[("ab", "00"), ("aab", "001")],
        );
        let ptmm = Ptmm::build(&d).unwrap();
        let h = MergeHypothesis::new(&ptmm);
        // from root: a/0 matches blue(a)'s edge a/0, but b diverges (0 vs 1)
        let blue = h.min_blue().unwrap();
        assert_eq!(h.agreement_depth(0, blue), 1);
    }

    #[test]
    fn merge_of_identical_chain_gives_self_loop() {
        let d = sample(&["a"], &["0"], &[("aaaa", "0000")]);
        let m = rpni(&d, 0).unwrap();
        assert_eq!(m.state_count(), 1);
        let a = m.inputs().get("a").unwrap();
        let (s, _) = m.step(m.initial(), a).unwrap();
        assert_eq!(s, m.initial());
    }

    #[test]
    fn merge_preserves_sampled_outputs() {
        let d = parity_sample(3);
        for depth in [0, 1, 2, 5] {
            let m = rpni(&d, depth).unwrap();
            assert!(d.consistent_with(&m), "min_depth {depth}");
        }
    }

    #[test]
    fn one_state_target_identified() {
        // all words up to depth 3 over 2 inputs with constant output
        let d = sample(
            &["a", "b"],
            &["0"],
            &[
                ("aaa", "000"),
                ("aab", "000"),
                ("aba", "000"),
                ("abb", "000"),
                ("baa", "000"),
                ("bab", "000"),
                ("bba", "000"),
                ("bbb", "000"),
            ],
        );
        let m = rpni(&d, 0).unwrap();
        assert_eq!(m.state_count(), 1);
    }

    #[test]
    fn parity_identified_from_characteristic_sample() {
        let d = parity_sample(3);
        let m = rpni(&d, 0).unwrap();
        assert_eq!(m.state_count(), 2);
        // verify it is the parity machine
        let a = m.inputs().get("a").unwrap();
        let b = m.inputs().get("b").unwrap();
        let o1 = m.outputs().get("1").unwrap();
        let o0 = m.outputs().get("0").unwrap();
        assert_eq!(m.output(&[a]), Some(o1));
        assert_eq!(m.output(&[a, b, a]), Some(o0));
        assert_eq!(m.output(&[a, b, a, b, b, a]), Some(o1));
    }

    #[test]
    fn deep_gate_blocks_internal_merges_but_stays_consistent() {
        let d = parity_sample(3);
        let m = rpni(&d, 100).unwrap();
        assert!(d.consistent_with(&m));
        // blocked merges mean more states than the 2-state target
        assert!(m.state_count() >= 2);
    }

    #[test]
    fn empty_sample_gives_single_state() {
        let ia = Alphabet::new(["a"]).unwrap();
        let oa = Alphabet::new(["0"]).unwrap();
        let d = SampleSet::new(ia, oa);
        let m = rpni(&d, 0).unwrap();
        assert_eq!(m.state_count(), 1);
        assert_eq!(m.transition_count(), 0);
    }

    #[test]
    fn determinism_bit_identical() {
        let d = parity_sample(4);
        let m1 = rpni(&d, 1).unwrap();
        let m2 = rpni(&d, 1).unwrap();
        assert_eq!(m1, m2);
    }

    #[test]
    fn incremental_blue_matches_definition() {
        use rand::prelude::*;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let ia = Alphabet::new(["a", "b"]).unwrap();
        let oa = Alphabet::new(["0", "1"]).unwrap();
        for _ in 0..50 {
            let mut d = SampleSet::new(ia.clone(), oa.clone());
            for _ in 0..rng.gen_range(1..20) {
                let steps: Vec<(Sym, Sym)> = (0..rng.gen_range(1..8))
                    .map(|_| (Sym(rng.gen_range(0..2)), Sym(rng.gen_range(0..2))))
                    .collect();
                // skip episodes that contradict earlier ones
                let _ = d.insert_episode(&steps);
            }
            if d.validate().is_err() {
                continue;
            }
            let ptmm = Ptmm::build(&d).unwrap();
            let mut h = MergeHypothesis::new(&ptmm);
            while let Some(blue) = h.min_blue() {
                assert_eq!(h.blue, h.blue_from_scratch());
                let mut done = false;
                for &red in &h.red.clone() {
                    if h.gate(red, blue, 1) && h.compatible(red, blue) {
                        h.merge(red, blue);
                        done = true;
                        break;
                    }
                }
                if !done {
                    h.promote(blue);
                }
            }
            assert_eq!(h.blue, h.blue_from_scratch());
            assert!(d.consistent_with(&h.extract()));
        }
    }
}
