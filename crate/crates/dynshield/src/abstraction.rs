//! The abstraction preorder on Mealy machines: `candidate` abstracts
//! `reference` when every input word defined in the reference is defined in
//! the candidate with the same output. This is the premise under which a
//! shield built from a learned model is sound for the real system.

use std::collections::{HashSet, VecDeque};

use crate::mealy::{MealyMachine, StateId};
use crate::{Error, Result};

/// Decides abstraction by breadth-first search over the synchronized product
/// of state pairs. The product is finite, so the search is complete: it
/// returns `true` iff abstraction holds for *all* input words.
pub fn abstracts(candidate: &MealyMachine, reference: &MealyMachine) -> Result<bool> {
    if candidate.inputs() != reference.inputs() || candidate.outputs() != reference.outputs() {
        return Err(Error::AlphabetMismatch(
            "abstraction requires identical input and output alphabets".into(),
        ));
    }
    let mut seen: HashSet<(StateId, StateId)> = HashSet::new();
    let mut queue: VecDeque<(StateId, StateId)> = VecDeque::new();
    let start = (reference.initial(), candidate.initial());
    seen.insert(start);
    queue.push_back(start);
    while let Some((r, c)) = queue.pop_front() {
        for (a, r_next, r_out) in reference.outgoing(r) {
            match candidate.step(c, a) {
                Some((c_next, c_out)) if c_out == r_out => {
                    if seen.insert((r_next, c_next)) {
                        queue.push_back((r_next, c_next));
                    }
                }
                _ => return Ok(false),
            }
        }
    }
    Ok(true)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::alphabet::Alphabet;
    use crate::mealy::MealyBuilder;

    fn parity() -> MealyMachine {
        let inputs = Alphabet::new(["a", "b"]).unwrap();
        let outputs = Alphabet::new(["0", "1"]).unwrap();
        let mut b = MealyBuilder::new(inputs, outputs, "even");
        b.transition("even", "a", "odd", "1");
        b.transition("odd", "a", "even", "0");
        b.transition("even", "b", "even", "0");
        b.transition("odd", "b", "odd", "0");
        b.build().unwrap()
    }

    #[test]
    fn reflexive() {
        let m = parity();
        assert!(abstracts(&m, &m).unwrap());
    }

    #[test]
    fn partial_sample_tree_does_not_abstract_target() {
        // the chain even -a-> odd covers one word; the target also defines "b"
        let m = parity();
        let inputs = m.inputs().clone();
        let outputs = m.outputs().clone();
        let mut b = MealyBuilder::new(inputs, outputs, "e");
        b.transition("e", "a", "o", "1");
        let tree = b.build().unwrap();
        assert!(!abstracts(&tree, &m).unwrap());
        // while the target trivially abstracts the tree
        assert!(abstracts(&m, &tree).unwrap());
    }

    #[test]
    fn total_constant_machine_abstracts_constant_target() {
        let inputs = Alphabet::new(["a", "b"]).unwrap();
        let outputs = Alphabet::new(["0"]).unwrap();
        let mut b = MealyBuilder::new(inputs.clone(), outputs.clone(), "u");
        b.transition("u", "a", "u", "0");
        b.transition("u", "b", "u", "0");
        let one = b.build().unwrap();

        let mut b = MealyBuilder::new(inputs, outputs, "p");
        b.transition("p", "a", "q", "0");
        b.transition("q", "a", "p", "0");
        b.transition("p", "b", "p", "0");
        let target = b.build().unwrap();
        assert!(abstracts(&one, &target).unwrap());
    }

    #[test]
    fn alphabet_mismatch_is_an_error() {
        let m = parity();
        let other_inputs = Alphabet::new(["x"]).unwrap();
        let t = MealyMachine::trivial(other_inputs, m.outputs().clone(), "q");
        assert!(abstracts(&t, &m).is_err());
    }
}
