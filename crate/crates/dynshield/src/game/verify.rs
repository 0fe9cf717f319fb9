//! Exhaustive check of a shield against a known ground truth: explore every
//! run the shielded agent could produce on the true system and report the
//! ones the specification rejects. An empty result certifies the shield for
//! that truth.

use std::collections::HashMap;

use crate::alphabet::Sym;
use crate::fsrs::Fsrs;
use crate::safety::SafetyAutomaton;
use crate::{Error, Result};

use super::PreemptiveShield;

/// One spec-violating run: the executed actions and observed outputs up to
/// and including the violating step.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub inputs: Vec<(Sym, Sym)>,
    pub outputs: Vec<Sym>,
}

impl Violation {
    pub fn render(&self, truth: &Fsrs) -> String {
        let steps: Vec<String> = self
            .inputs
            .iter()
            .zip(&self.outputs)
            .map(|(&(c, e), &o)| {
                format!(
                    "({},{})/{}",
                    truth.cont().name(c),
                    truth.env().name(e),
                    truth.outputs().name(o)
                )
            })
            .collect();
        steps.join(" ")
    }
}

/// Cursor of the shield during exploration: after a divergence the allowed
/// set is the full alphabet forever, so the game state stops mattering.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
enum Cursor {
    At(u32),
    Diverged,
}

/// Breadth-first exploration of the product (truth state, spec state,
/// shield cursor), restricted to shield-allowed controller actions and all
/// truth-defined environment responses. Returns one shortest violating run
/// per reachable violation point; lassos are excluded by the visited set.
pub fn verify_shield(
    truth: &Fsrs,
    spec: &SafetyAutomaton,
    shield: &PreemptiveShield,
) -> Result<Vec<Violation>> {
    if truth.outputs() != spec.sigma() {
        return Err(Error::AlphabetMismatch(
            "specification alphabet differs from the truth output alphabet".into(),
        ));
    }
    if truth.cont() != shield.cont() || truth.env() != shield.env() {
        return Err(Error::AlphabetMismatch(
            "shield action alphabets differ from the truth".into(),
        ));
    }

    type Node = (u32, u32, Cursor);
    let start: Node = (
        truth.machine().initial().0,
        spec.initial().0,
        Cursor::At(shield.initial().0),
    );
    let mut index: HashMap<Node, usize> = HashMap::new();
    let mut nodes: Vec<Node> = vec![start];
    // parent pointer and the step that led here
    let mut parent: Vec<Option<(usize, Sym, Sym, Sym)>> = vec![None];
    index.insert(start, 0);
    let mut violations = Vec::new();
    let mut head = 0;
    while head < nodes.len() {
        let (t, q, cursor) = nodes[head];
        let here = head;
        head += 1;
        if !spec.is_safe(crate::safety::SpecState(q)) {
            // violation recorded at entry; do not explore past it
            continue;
        }
        let (allowed, _) = match cursor {
            Cursor::At(g) => shield.allowed_view(super::GameState(g), false),
            Cursor::Diverged => shield.allowed_view(shield.initial(), true),
        };
        for &c in allowed {
            for e in truth.env().syms() {
                let Some((t_next, out)) = truth.step(crate::mealy::StateId(t), c, e) else {
                    continue;
                };
                let q_next = spec.next(crate::safety::SpecState(q), out);
                let cursor_next = match cursor {
                    Cursor::Diverged => Cursor::Diverged,
                    Cursor::At(g) => {
                        let g = super::GameState(g);
                        match shield.predicted_output(g, c, e) {
                            Some(p) if p != out => Cursor::Diverged,
                            _ => Cursor::At(shield.successor(g, c, e).0),
                        }
                    }
                };
                let node: Node = (t_next.0, q_next.0, cursor_next);
                if index.contains_key(&node) {
                    continue;
                }
                index.insert(node, nodes.len());
                nodes.push(node);
                parent.push(Some((here, c, e, out)));
                if !spec.is_safe(q_next) {
                    // reconstruct the run
                    let mut inputs = Vec::new();
                    let mut outputs = Vec::new();
                    let mut at = nodes.len() - 1;
                    while let Some((p, c, e, o)) = parent[at] {
                        inputs.push((c, e));
                        outputs.push(o);
                        at = p;
                    }
                    inputs.reverse();
                    outputs.reverse();
                    violations.push(Violation { inputs, outputs });
                }
            }
        }
    }
    Ok(violations)
}
