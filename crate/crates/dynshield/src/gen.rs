//! Random machine, specification, and game generators backing the property
//! and acceptance suites. Kept in the library so integration tests and unit
//! tests share one implementation; nothing here is used by the pipeline.

use rand::prelude::*;

use crate::alphabet::{Alphabet, Sym};
use crate::fsrs::Fsrs;
use crate::game::{GameState, SafetyGame};
use crate::learn::SampleSet;
use crate::mealy::{MealyBuilder, MealyMachine, StateId};
use crate::safety::{SafetyAutomaton, SafetyBuilder};

fn letters(prefix: char, n: usize) -> Vec<String> {
    (0..n).map(|i| format!("{prefix}{i}")).collect()
}

pub fn input_alphabet(n: usize) -> Alphabet {
    Alphabet::new(letters('i', n)).unwrap()
}

pub fn output_alphabet(n: usize) -> Alphabet {
    Alphabet::new(letters('o', n)).unwrap()
}

/// A random connected partial Mealy machine: every state is reachable, each
/// (state, input) pair is defined with probability `density`.
pub fn random_mealy(
    rng: &mut impl Rng,
    n_states: usize,
    inputs: &Alphabet,
    outputs: &Alphabet,
    density: f64,
) -> MealyMachine {
    let names: Vec<String> = (0..n_states).map(|i| format!("s{i}")).collect();
    let mut used = std::collections::HashSet::new();
    let mut edges: Vec<(usize, usize, usize, usize)> = Vec::new();
    // spanning edges from earlier states keep every state reachable
    for s in 1..n_states {
        let free: Vec<(usize, usize)> = (0..s)
            .flat_map(|f| (0..inputs.len()).map(move |a| (f, a)))
            .filter(|p| !used.contains(p))
            .collect();
        let &(from, a) = &free[rng.gen_range(0..free.len())];
        used.insert((from, a));
        edges.push((from, a, s, rng.gen_range(0..outputs.len())));
    }
    for s in 0..n_states {
        for a in 0..inputs.len() {
            if used.contains(&(s, a)) || rng.gen::<f64>() >= density {
                continue;
            }
            used.insert((s, a));
            edges.push((
                s,
                a,
                rng.gen_range(0..n_states),
                rng.gen_range(0..outputs.len()),
            ));
        }
    }
    let mut b = MealyBuilder::new(inputs.clone(), outputs.clone(), names[0].clone());
    for (s, a, d, o) in edges {
        b.transition(
            names[s].clone(),
            inputs.name(Sym(a as u16)),
            names[d].clone(),
            outputs.name(Sym(o as u16)),
        );
    }
    b.build().unwrap()
}

/// A random *total* Mealy machine, minimized rejection-style: regenerates
/// until every pair of states is distinguished by some output, so the
/// machine is the unique minimal representation of its behavior.
pub fn random_minimal_total_mealy(
    rng: &mut impl Rng,
    n_states: usize,
    inputs: &Alphabet,
    outputs: &Alphabet,
) -> MealyMachine {
    loop {
        let m = random_mealy(rng, n_states, inputs, outputs, 1.0);
        if m.state_count() == n_states && is_output_minimal(&m) {
            return m;
        }
    }
}

/// True iff no two states are output-equivalent (Moore-style partition
/// refinement over transition outputs).
pub fn is_output_minimal(m: &MealyMachine) -> bool {
    let n = m.state_count();
    let mut class: Vec<usize> = vec![0; n];
    loop {
        let mut sig: Vec<Vec<(u16, Option<(usize, u16)>)>> = Vec::with_capacity(n);
        for s in m.state_ids() {
            let row: Vec<(u16, Option<(usize, u16)>)> = m
                .inputs()
                .syms()
                .map(|a| {
                    (
                        a.0,
                        m.step(s, a).map(|(d, o)| (class[d.index()], o.0)),
                    )
                })
                .collect();
            sig.push(row);
        }
        let mut uniq: Vec<&Vec<(u16, Option<(usize, u16)>)>> = Vec::new();
        let mut next: Vec<usize> = vec![0; n];
        for (i, row) in sig.iter().enumerate() {
            match uniq.iter().position(|u| *u == row) {
                Some(p) => next[i] = p,
                None => {
                    uniq.push(row);
                    next[i] = uniq.len() - 1;
                }
            }
        }
        if next == class {
            return uniq.len() == n;
        }
        class = next;
    }
}

/// A shortest word whose outputs separate two states, when one exists.
pub fn separating_word(m: &MealyMachine, a: StateId, b: StateId) -> Option<Vec<Sym>> {
    use std::collections::{HashMap, VecDeque};
    let mut seen: HashMap<(StateId, StateId), (Option<(StateId, StateId)>, Option<Sym>)> =
        HashMap::new();
    let mut queue = VecDeque::new();
    seen.insert((a, b), (None, None));
    queue.push_back((a, b));
    while let Some((x, y)) = queue.pop_front() {
        for sym in m.inputs().syms() {
            match (m.step(x, sym), m.step(y, sym)) {
                (Some((xd, xo)), Some((yd, yo))) => {
                    if xo != yo {
                        // reconstruct path and append the separating symbol
                        let mut word = vec![sym];
                        let mut cur = (x, y);
                        while let (Some(prev), Some(s)) = seen[&cur] {
                            word.push(s);
                            cur = prev;
                        }
                        word.reverse();
                        return Some(word);
                    }
                    if !seen.contains_key(&(xd, yd)) {
                        seen.insert((xd, yd), (Some((x, y)), Some(sym)));
                        queue.push_back((xd, yd));
                    }
                }
                _ => continue,
            }
        }
    }
    None
}

/// Shortlex-shortest access words per state.
pub fn access_words(m: &MealyMachine) -> Vec<Option<Vec<Sym>>> {
    use std::collections::VecDeque;
    let mut words: Vec<Option<Vec<Sym>>> = vec![None; m.state_count()];
    words[m.initial().index()] = Some(Vec::new());
    let mut queue = VecDeque::new();
    queue.push_back(m.initial());
    while let Some(s) = queue.pop_front() {
        for (a, d, _) in m.outgoing(s) {
            if words[d.index()].is_none() {
                let mut w = words[s.index()].clone().unwrap();
                w.push(a);
                words[d.index()] = Some(w);
                queue.push_back(d);
            }
        }
    }
    words
}

/// A characteristic sample for a minimal total machine: access words, their
/// one-symbol extensions, and for every pair of sample positions reaching
/// distinct states, a separating suffix behind both. Running RPNI without a
/// merge gate on this sample identifies the machine.
pub fn characteristic_sample(m: &MealyMachine) -> SampleSet {
    let mut d = SampleSet::new(m.inputs().clone(), m.outputs().clone());
    let access = access_words(m);
    let mut insert_word = |w: &[Sym]| {
        let mut state = m.initial();
        let mut steps = Vec::with_capacity(w.len());
        for &a in w {
            let (next, o) = m.step(state, a).expect("word must be defined");
            steps.push((a, o));
            state = next;
        }
        d.insert_episode(&steps).expect("deterministic machine");
    };
    // kernel: every access word extended by every defined input
    let mut positions: Vec<(Vec<Sym>, StateId)> = Vec::new();
    for s in m.state_ids() {
        let Some(w) = access[s.index()].clone() else {
            continue;
        };
        positions.push((w.clone(), s));
        for (a, d_state, _) in m.outgoing(s) {
            let mut ext = w.clone();
            ext.push(a);
            insert_word(&ext);
            positions.push((ext, d_state));
        }
    }
    // separators behind every pair of positions at distinct states
    for i in 0..positions.len() {
        for j in (i + 1)..positions.len() {
            let (wi, si) = &positions[i];
            let (wj, sj) = &positions[j];
            if si == sj {
                continue;
            }
            if let Some(sep) = separating_word(m, *si, *sj) {
                let mut a = wi.clone();
                a.extend_from_slice(&sep);
                insert_word(&a);
                let mut b = wj.clone();
                b.extend_from_slice(&sep);
                insert_word(&b);
            }
        }
    }
    d
}

/// Random sample drawn by bounded random walks along defined transitions.
pub fn random_walk_sample(
    rng: &mut impl Rng,
    m: &MealyMachine,
    episodes: usize,
    max_len: usize,
) -> SampleSet {
    let mut d = SampleSet::new(m.inputs().clone(), m.outputs().clone());
    for _ in 0..episodes {
        let mut state = m.initial();
        let mut steps = Vec::new();
        for _ in 0..max_len {
            let outs: Vec<(Sym, StateId, Sym)> = m.outgoing(state).collect();
            if outs.is_empty() {
                break;
            }
            let (a, next, o) = outs[rng.gen_range(0..outs.len())];
            steps.push((a, o));
            state = next;
        }
        if !steps.is_empty() {
            d.insert_episode(&steps).expect("machine is deterministic");
        }
    }
    d
}

/// Every defined word of the machine up to the given depth.
pub fn exhaustive_sample(m: &MealyMachine, depth: usize) -> SampleSet {
    let mut d = SampleSet::new(m.inputs().clone(), m.outputs().clone());
    let mut stack: Vec<(StateId, Vec<(Sym, Sym)>)> = vec![(m.initial(), Vec::new())];
    while let Some((state, steps)) = stack.pop() {
        if steps.len() >= depth {
            continue;
        }
        for (a, next, o) in m.outgoing(state) {
            let mut s2 = steps.clone();
            s2.push((a, o));
            d.insert_episode(&s2).expect("deterministic");
            stack.push((next, s2));
        }
    }
    d
}

/// A random Cont-total reactive system: every (state, controller action)
/// offers at least one environment response.
pub fn random_fsrs(
    rng: &mut impl Rng,
    n_states: usize,
    n_cont: usize,
    n_env: usize,
    n_out: usize,
) -> Fsrs {
    let cont = Alphabet::new(letters('c', n_cont)).unwrap();
    let env = Alphabet::new(letters('e', n_env)).unwrap();
    let out = output_alphabet(n_out);
    let names: Vec<String> = (0..n_states).map(|i| format!("s{i}")).collect();
    loop {
        let mut b = MealyBuilder::new(Alphabet::product(&cont, &env), out.clone(), names[0].clone());
        let mut defined = std::collections::HashSet::new();
        // reachability spine
        for s in 1..n_states {
            let from = rng.gen_range(0..s);
            let c = rng.gen_range(0..n_cont);
            let e = rng.gen_range(0..n_env);
            if defined.insert((from, c, e)) {
                b.transition(
                    names[from].clone(),
                    format!("c{c},e{e}"),
                    names[s].clone(),
                    out.name(Sym(rng.gen_range(0..n_out) as u16)).to_string(),
                );
            }
        }
        for s in 0..n_states {
            for c in 0..n_cont {
                // Cont-totality: force at least one env response
                let forced = rng.gen_range(0..n_env);
                for e in 0..n_env {
                    let keep = e == forced || rng.gen::<f64>() < 0.6;
                    if keep && defined.insert((s, c, e)) {
                        b.transition(
                            names[s].clone(),
                            format!("c{c},e{e}"),
                            names[rng.gen_range(0..n_states)].clone(),
                            out.name(Sym(rng.gen_range(0..n_out) as u16)).to_string(),
                        );
                    }
                }
            }
        }
        let m = b.build().unwrap();
        if m.state_count() == n_states {
            let f = Fsrs::new(m, cont.clone(), env.clone()).unwrap();
            debug_assert!(f.validate().is_empty());
            return f;
        }
    }
}

/// A random total safety automaton with an absorbing unsafe region and a
/// safe initial state. `p_unsafe` controls how often an edge from the safe
/// region falls into the unsafe one.
pub fn random_spec(rng: &mut impl Rng, sigma: &Alphabet, n_safe: usize, p_unsafe: f64) -> SafetyAutomaton {
    let n_safe = n_safe.max(1);
    let mut b = SafetyBuilder::new(sigma.clone(), "f0");
    b.mark_unsafe("bad");
    for q in 0..n_safe {
        for a in sigma.syms() {
            let dst = if rng.gen::<f64>() < p_unsafe {
                "bad".to_string()
            } else {
                format!("f{}", rng.gen_range(0..n_safe))
            };
            b.transition(format!("f{q}"), sigma.name(a), dst);
        }
    }
    for a in sigma.syms() {
        b.transition("bad", sigma.name(a), "bad");
    }
    b.build().unwrap()
}

/// A random safety game given directly by its tables (not via composition),
/// for exercising the solver against the brute-force oracle.
pub fn random_game(rng: &mut impl Rng, n_states: usize, n_cont: usize, n_env: usize) -> SafetyGame {
    let cont = Alphabet::new(letters('c', n_cont)).unwrap();
    let env = Alphabet::new(letters('e', n_env)).unwrap();
    let outputs = Alphabet::new(["na"]).unwrap();
    let names: Vec<String> = (0..n_states).map(|i| format!("g{i}")).collect();
    let succ: Vec<Vec<GameState>> = (0..n_states)
        .map(|_| {
            (0..n_cont * n_env)
                .map(|_| GameState(rng.gen_range(0..n_states) as u32))
                .collect()
        })
        .collect();
    let out = vec![vec![None; n_cont * n_env]; n_states];
    let safe: Vec<bool> = (0..n_states).map(|_| rng.gen::<f64>() < 0.8).collect();
    let sink = vec![false; n_states];
    SafetyGame::from_tables(
        cont,
        env,
        outputs,
        names,
        GameState(0),
        succ,
        out,
        safe,
        sink,
    )
    .expect("tables are total by construction")
}
