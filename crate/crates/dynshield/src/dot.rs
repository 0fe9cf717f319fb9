//! Graphviz exports. States and edges are emitted in sorted order so the
//! output is deterministic.

use std::fmt::Write as _;

use crate::format::transitions_by_state;
use crate::fsrs::Fsrs;
use crate::game::{SafetyGame, WinningRegion};
use crate::safety::SafetyAutomaton;

fn quote(s: &str) -> String {
    format!("\"{}\"", s.replace('"', "\\\""))
}

pub fn fsrs_to_dot(f: &Fsrs) -> String {
    let m = f.machine();
    let mut s = String::from("digraph fsrs {\n    rankdir=LR;\n");
    let _ = writeln!(s, "    __init [shape=point];");
    let mut names: Vec<&str> = m.state_names().collect();
    names.sort_unstable();
    for name in &names {
        let _ = writeln!(s, "    {} [shape=circle];", quote(name));
    }
    let _ = writeln!(
        s,
        "    __init -> {};",
        quote(m.state_name(m.initial()))
    );
    for (src, edges) in transitions_by_state(f) {
        for (c, e, dst, o) in edges {
            let _ = writeln!(
                s,
                "    {} -> {} [label={}];",
                quote(&src),
                quote(&dst),
                quote(&format!("{c},{e}/{o}"))
            );
        }
    }
    s.push_str("}\n");
    s
}

/// Specification automata draw unsafe states double-circled.
pub fn spec_to_dot(spec: &SafetyAutomaton) -> String {
    let mut s = String::from("digraph spec {\n    rankdir=LR;\n");
    let _ = writeln!(s, "    __init [shape=point];");
    for q in spec.state_ids() {
        let shape = if spec.is_safe(q) {
            "circle"
        } else {
            "doublecircle"
        };
        let _ = writeln!(s, "    {} [shape={shape}];", quote(spec.state_name(q)));
    }
    let _ = writeln!(
        s,
        "    __init -> {};",
        quote(spec.state_name(spec.initial()))
    );
    for q in spec.state_ids() {
        for a in spec.sigma().syms() {
            let _ = writeln!(
                s,
                "    {} -> {} [label={}];",
                quote(spec.state_name(q)),
                quote(spec.state_name(spec.next(q, a))),
                quote(spec.sigma().name(a))
            );
        }
    }
    s.push_str("}\n");
    s
}

/// Game export: sinks drawn as boxes, unsafe states double-circled, states
/// outside the winning region (when given) dashed.
pub fn game_to_dot(game: &SafetyGame, w: Option<&WinningRegion>) -> String {
    let mut s = String::from("digraph game {\n    rankdir=LR;\n");
    let _ = writeln!(s, "    __init [shape=point];");
    let mut order: Vec<_> = game.state_ids().collect();
    order.sort_by(|&a, &b| game.state_name(a).cmp(game.state_name(b)));
    for &g in &order {
        let shape = if game.is_sink(g) {
            "box"
        } else if game.is_safe(g) {
            "circle"
        } else {
            "doublecircle"
        };
        let style = match w {
            Some(w) if !w.contains(g) => ", style=dashed",
            _ => "",
        };
        let _ = writeln!(
            s,
            "    {} [shape={shape}{style}];",
            quote(game.state_name(g))
        );
    }
    let _ = writeln!(
        s,
        "    __init -> {};",
        quote(game.state_name(game.initial()))
    );
    for &g in &order {
        for c in game.cont().syms() {
            for e in game.env().syms() {
                let dst = game.successor(g, c, e);
                let _ = writeln!(
                    s,
                    "    {} -> {} [label={}];",
                    quote(game.state_name(g)),
                    quote(game.state_name(dst)),
                    quote(&format!("{},{}", game.cont().name(c), game.env().name(e)))
                );
            }
        }
    }
    s.push_str("}\n");
    s
}
