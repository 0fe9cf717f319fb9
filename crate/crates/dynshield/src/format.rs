//! Line-based text formats: `.fsrs` models, `.spec` safety automata,
//! `.trace` episode logs, and the shield table format. All serializers emit
//! in sorted order, so serialization is deterministic and parse/serialize
//! round-trips are identities.

use std::collections::{BTreeMap, HashSet};
use std::fmt::Write as _;

use crate::alphabet::{Alphabet, Sym};
use crate::fsrs::Fsrs;
use crate::game::{GameState, PreemptiveShield};
use crate::learn::{RunLog, SampleSet};
use crate::mealy::MealyBuilder;
use crate::safety::{SafetyAutomaton, SafetyBuilder};
use crate::{Error, Result};

fn content_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines().enumerate().filter_map(|(i, l)| {
        let l = l.trim();
        if l.is_empty() || l.starts_with('#') {
            None
        } else {
            Some((i + 1, l))
        }
    })
}

fn symbols_line(prefix: &str, a: &Alphabet) -> String {
    let mut s = String::from(prefix);
    for n in a.names() {
        s.push(' ');
        s.push_str(n);
    }
    s.push('\n');
    s
}

// ---------------------------------------------------------------- .fsrs --

pub fn serialize_fsrs(f: &Fsrs) -> String {
    let m = f.machine();
    let mut s = String::from("fsrs v1\n");
    s.push_str(&symbols_line("cont", f.cont()));
    s.push_str(&symbols_line("env", f.env()));
    s.push_str(&symbols_line("out", f.outputs()));
    let _ = writeln!(s, "init {}", m.state_name(m.initial()));
    for (src, a, dst, o) in m.transitions() {
        let (c, e) = f.unpair(a);
        let _ = writeln!(
            s,
            "t {} {} {} {} {}",
            m.state_name(src),
            f.cont().name(c),
            f.env().name(e),
            m.state_name(dst),
            m.outputs().name(o)
        );
    }
    s
}

pub fn parse_fsrs(text: &str) -> Result<Fsrs> {
    let mut cont: Option<Alphabet> = None;
    let mut env: Option<Alphabet> = None;
    let mut out: Option<Alphabet> = None;
    let mut init: Option<String> = None;
    let mut trans: Vec<(usize, Vec<String>)> = Vec::new();
    let mut saw_header = false;

    for (ln, line) in content_lines(text) {
        let tokens: Vec<&str> = line.split_whitespace().collect();
        match tokens[0] {
            "fsrs" => {
                if tokens.get(1) != Some(&"v1") {
                    return Err(Error::parse(ln, "expected 'fsrs v1'"));
                }
                saw_header = true;
            }
            "cont" => cont = Some(Alphabet::new(tokens[1..].to_vec())?),
            "env" => env = Some(Alphabet::new(tokens[1..].to_vec())?),
            "out" => out = Some(Alphabet::new(tokens[1..].to_vec())?),
            "init" => {
                let [_, name] = tokens.as_slice() else {
                    return Err(Error::parse(ln, "expected 'init <state>'"));
                };
                init = Some(name.to_string());
            }
            "t" => {
                if tokens.len() != 6 {
                    return Err(Error::parse(
                        ln,
                        "expected 't <src> <cont> <env> <dst> <out>'",
                    ));
                }
                trans.push((ln, tokens[1..].iter().map(|s| s.to_string()).collect()));
            }
            other => return Err(Error::parse(ln, format!("unknown directive '{other}'"))),
        }
    }
    if !saw_header {
        return Err(Error::parse(1, "missing 'fsrs v1' header"));
    }
    let cont = cont.ok_or_else(|| Error::parse(1, "missing 'cont' line"))?;
    let env = env.ok_or_else(|| Error::parse(1, "missing 'env' line"))?;
    let out = out.ok_or_else(|| Error::parse(1, "missing 'out' line"))?;
    let init = init.ok_or_else(|| Error::parse(1, "missing 'init' line"))?;

    let inputs = Alphabet::product(&cont, &env);
    let mut b = MealyBuilder::new(inputs, out.clone(), init);
    let mut seen: HashSet<(String, String, String)> = HashSet::new();
    for (ln, t) in trans {
        let [src, c, e, dst, o] = t.as_slice() else {
            unreachable!()
        };
        cont.get(c)
            .ok_or_else(|| Error::parse(ln, format!("unknown cont action '{c}'")))?;
        env.get(e)
            .ok_or_else(|| Error::parse(ln, format!("unknown env action '{e}'")))?;
        out.get(o)
            .ok_or_else(|| Error::parse(ln, format!("unknown output '{o}'")))?;
        if !seen.insert((src.clone(), c.clone(), e.clone())) {
            return Err(Error::parse(
                ln,
                format!("nondeterministic transition: '{src}' already moves on ({c},{e})"),
            ));
        }
        b.transition(src, format!("{c},{e}"), dst, o);
    }
    Fsrs::new(b.build()?, cont, env)
}

// ---------------------------------------------------------------- .spec --

pub fn serialize_spec(spec: &SafetyAutomaton) -> String {
    let mut s = String::from("spec v1\n");
    s.push_str(&symbols_line("sigma", spec.sigma()));
    let _ = writeln!(s, "init {}", spec.state_name(spec.initial()));
    let unsafe_states: Vec<&str> = spec
        .state_ids()
        .filter(|&q| !spec.is_safe(q))
        .map(|q| spec.state_name(q))
        .collect();
    if !unsafe_states.is_empty() {
        let _ = writeln!(s, "unsafe {}", unsafe_states.join(" "));
    }
    for q in spec.state_ids() {
        for a in spec.sigma().syms() {
            let _ = writeln!(
                s,
                "t {} {} {}",
                spec.state_name(q),
                spec.sigma().name(a),
                spec.state_name(spec.next(q, a))
            );
        }
    }
    s
}

pub fn parse_spec(text: &str) -> Result<SafetyAutomaton> {
    let mut sigma: Option<Alphabet> = None;
    let mut init: Option<String> = None;
    let mut unsafe_states: Vec<String> = Vec::new();
    let mut trans: Vec<(usize, String, String, String)> = Vec::new();
    let mut saw_header = false;

    for (ln, line) in content_lines(text) {
        let tokens: Vec<&str> = line.split_whitespace().collect();
        match tokens[0] {
            "spec" => {
                if tokens.get(1) != Some(&"v1") {
                    return Err(Error::parse(ln, "expected 'spec v1'"));
                }
                saw_header = true;
            }
            "sigma" => sigma = Some(Alphabet::new(tokens[1..].to_vec())?),
            "init" => {
                let [_, name] = tokens.as_slice() else {
                    return Err(Error::parse(ln, "expected 'init <state>'"));
                };
                init = Some(name.to_string());
            }
            "unsafe" => {
                unsafe_states.extend(tokens[1..].iter().map(|s| s.to_string()));
            }
            "t" => {
                if tokens.len() != 4 {
                    return Err(Error::parse(ln, "expected 't <src> <sym> <dst>'"));
                }
                trans.push((
                    ln,
                    tokens[1].to_string(),
                    tokens[2].to_string(),
                    tokens[3].to_string(),
                ));
            }
            other => return Err(Error::parse(ln, format!("unknown directive '{other}'"))),
        }
    }
    if !saw_header {
        return Err(Error::parse(1, "missing 'spec v1' header"));
    }
    let sigma = sigma.ok_or_else(|| Error::parse(1, "missing 'sigma' line"))?;
    let init = init.ok_or_else(|| Error::parse(1, "missing 'init' line"))?;
    let mut b = SafetyBuilder::new(sigma.clone(), init);
    for u in unsafe_states {
        b.mark_unsafe(u);
    }
    let mut seen: HashSet<(String, String)> = HashSet::new();
    for (ln, src, sym, dst) in trans {
        sigma
            .get(&sym)
            .ok_or_else(|| Error::parse(ln, format!("unknown symbol '{sym}'")))?;
        if !seen.insert((src.clone(), sym.clone())) {
            return Err(Error::parse(
                ln,
                format!("nondeterministic transition: '{src}' already moves on '{sym}'"),
            ));
        }
        b.transition(src, sym, dst);
    }
    b.build()
}

// --------------------------------------------------------------- .trace --

/// A parsed trace file: declared (or inferred) alphabets and the recorded
/// episodes as (cont, env, output) steps.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceFile {
    pub cont: Alphabet,
    pub env: Alphabet,
    pub out: Alphabet,
    pub episodes: Vec<Vec<(Sym, Sym, Sym)>>,
}

impl TraceFile {
    /// The prefix-closed sample set over the pair alphabet: every prefix of
    /// every episode.
    pub fn sample_set(&self) -> Result<SampleSet> {
        let inputs = Alphabet::product(&self.cont, &self.env);
        let ne = self.env.len() as u16;
        let mut d = SampleSet::new(inputs, self.out.clone());
        for ep in &self.episodes {
            let steps: Vec<(Sym, Sym)> = ep
                .iter()
                .map(|&(c, e, o)| (Sym(c.0 * ne + e.0), o))
                .collect();
            d.insert_episode(&steps)?;
        }
        Ok(d)
    }

    /// Episode lengths as a run log for the adaptive merge gate.
    pub fn run_log(&self, max_ep_len: u32, min_depth_max: u32) -> Result<RunLog> {
        let mut log = RunLog::new(max_ep_len, min_depth_max);
        for ep in &self.episodes {
            log.push(ep.len() as u32)?;
        }
        Ok(log)
    }
}

pub fn serialize_trace(t: &TraceFile) -> String {
    let mut s = String::new();
    s.push_str(&symbols_line("cont", &t.cont));
    s.push_str(&symbols_line("env", &t.env));
    s.push_str(&symbols_line("out", &t.out));
    for ep in &t.episodes {
        s.push_str("ep\n");
        for &(c, e, o) in ep {
            let _ = writeln!(
                s,
                "s {} {} {}",
                t.cont.name(c),
                t.env.name(e),
                t.out.name(o)
            );
        }
    }
    s
}

pub fn parse_trace(text: &str) -> Result<TraceFile> {
    let mut cont: Option<Alphabet> = None;
    let mut env: Option<Alphabet> = None;
    let mut out: Option<Alphabet> = None;
    let mut raw_eps: Vec<Vec<(usize, String, String, String)>> = Vec::new();
    for (ln, line) in content_lines(text) {
        let tokens: Vec<&str> = line.split_whitespace().collect();
        match tokens[0] {
            "cont" => cont = Some(Alphabet::new(tokens[1..].to_vec())?),
            "env" => env = Some(Alphabet::new(tokens[1..].to_vec())?),
            "out" => out = Some(Alphabet::new(tokens[1..].to_vec())?),
            "ep" => raw_eps.push(Vec::new()),
            "s" => {
                if tokens.len() != 4 {
                    return Err(Error::parse(ln, "expected 's <cont> <env> <out>'"));
                }
                let ep = raw_eps
                    .last_mut()
                    .ok_or_else(|| Error::parse(ln, "step before any 'ep' block"))?;
                ep.push((
                    ln,
                    tokens[1].to_string(),
                    tokens[2].to_string(),
                    tokens[3].to_string(),
                ));
            }
            other => return Err(Error::parse(ln, format!("unknown directive '{other}'"))),
        }
    }
    for ep in &raw_eps {
        if ep.is_empty() {
            return Err(Error::Invalid("empty episode block".into()));
        }
    }
    // infer any undeclared alphabet from the recorded symbols
    let infer = |pick: fn(&(usize, String, String, String)) -> &String| -> Result<Alphabet> {
        let mut set: Vec<String> = raw_eps
            .iter()
            .flatten()
            .map(|s| pick(s).clone())
            .collect();
        set.sort();
        set.dedup();
        Alphabet::new(set)
    };
    let cont = match cont {
        Some(a) => a,
        None => infer(|s| &s.1)?,
    };
    let env = match env {
        Some(a) => a,
        None => infer(|s| &s.2)?,
    };
    let out = match out {
        Some(a) => a,
        None => infer(|s| &s.3)?,
    };
    let mut episodes = Vec::with_capacity(raw_eps.len());
    for raw in raw_eps {
        let mut ep = Vec::with_capacity(raw.len());
        for (ln, c, e, o) in raw {
            let c = cont
                .get(&c)
                .ok_or_else(|| Error::parse(ln, format!("unknown cont action '{c}'")))?;
            let e = env
                .get(&e)
                .ok_or_else(|| Error::parse(ln, format!("unknown env action '{e}'")))?;
            let o = out
                .get(&o)
                .ok_or_else(|| Error::parse(ln, format!("unknown output '{o}'")))?;
            ep.push((c, e, o));
        }
        episodes.push(ep);
    }
    Ok(TraceFile {
        cont,
        env,
        out,
        episodes,
    })
}

// --------------------------------------------------------------- shield --

pub fn serialize_shield(s: &PreemptiveShield) -> String {
    let mut text = String::from("shield v1\n");
    text.push_str(&symbols_line("cont", s.cont()));
    text.push_str(&symbols_line("env", s.env()));
    text.push_str(&symbols_line("out", s.outputs()));
    let _ = writeln!(text, "init {}", s.state_name(s.initial()));
    for (i, name) in s.names().iter().enumerate() {
        let acts: Vec<&str> = s
            .allowed_at(GameState(i as u32))
            .iter()
            .map(|&a| s.cont().name(a))
            .collect();
        if acts.is_empty() {
            let _ = writeln!(text, "allow {name}");
        } else {
            let _ = writeln!(text, "allow {name} {}", acts.join("+"));
        }
    }
    let ne = s.env().len();
    for (i, name) in s.names().iter().enumerate() {
        let g = GameState(i as u32);
        for c in s.cont().syms() {
            for e in s.env().syms() {
                let dst = s.succ_table()[g.index()][c.index() * ne + e.index()];
                let out = s.out_table()[g.index()][c.index() * ne + e.index()];
                let _ = writeln!(
                    text,
                    "t {name} {} {} {} {}",
                    s.cont().name(c),
                    s.env().name(e),
                    s.state_name(dst),
                    out.map_or("-", |o| s.outputs().name(o)),
                );
            }
        }
    }
    text
}

pub fn parse_shield(text: &str) -> Result<PreemptiveShield> {
    let mut cont: Option<Alphabet> = None;
    let mut env: Option<Alphabet> = None;
    let mut out: Option<Alphabet> = None;
    let mut init: Option<String> = None;
    let mut allows: Vec<(usize, String, Vec<String>)> = Vec::new();
    let mut trans: Vec<(usize, [String; 5])> = Vec::new();
    let mut saw_header = false;
    for (ln, line) in content_lines(text) {
        let tokens: Vec<&str> = line.split_whitespace().collect();
        match tokens[0] {
            "shield" => {
                if tokens.get(1) != Some(&"v1") {
                    return Err(Error::parse(ln, "expected 'shield v1'"));
                }
                saw_header = true;
            }
            "cont" => cont = Some(Alphabet::new(tokens[1..].to_vec())?),
            "env" => env = Some(Alphabet::new(tokens[1..].to_vec())?),
            "out" => out = Some(Alphabet::new(tokens[1..].to_vec())?),
            "init" => {
                let [_, name] = tokens.as_slice() else {
                    return Err(Error::parse(ln, "expected 'init <state>'"));
                };
                init = Some(name.to_string());
            }
            "allow" => {
                if tokens.len() < 2 || tokens.len() > 3 {
                    return Err(Error::parse(ln, "expected 'allow <state> [a+b+...]'"));
                }
                let acts = tokens
                    .get(2)
                    .map(|list| list.split('+').map(String::from).collect())
                    .unwrap_or_default();
                allows.push((ln, tokens[1].to_string(), acts));
            }
            "t" => {
                if tokens.len() != 6 {
                    return Err(Error::parse(
                        ln,
                        "expected 't <src> <cont> <env> <dst> <out|->'",
                    ));
                }
                trans.push((
                    ln,
                    [
                        tokens[1].to_string(),
                        tokens[2].to_string(),
                        tokens[3].to_string(),
                        tokens[4].to_string(),
                        tokens[5].to_string(),
                    ],
                ));
            }
            other => return Err(Error::parse(ln, format!("unknown directive '{other}'"))),
        }
    }
    if !saw_header {
        return Err(Error::parse(1, "missing 'shield v1' header"));
    }
    let cont = cont.ok_or_else(|| Error::parse(1, "missing 'cont' line"))?;
    let env = env.ok_or_else(|| Error::parse(1, "missing 'env' line"))?;
    let out = out.ok_or_else(|| Error::parse(1, "missing 'out' line"))?;
    let init = init.ok_or_else(|| Error::parse(1, "missing 'init' line"))?;

    let mut names: Vec<String> = allows.iter().map(|(_, n, _)| n.clone()).collect();
    names.sort();
    names.dedup();
    if names.len() != allows.len() {
        return Err(Error::Invalid("duplicate allow line for a state".into()));
    }
    let state = |ln: usize, n: &str| -> Result<GameState> {
        names
            .binary_search_by(|x| x.as_str().cmp(n))
            .map(|i| GameState(i as u32))
            .map_err(|_| Error::parse(ln, format!("state '{n}' has no allow line")))
    };

    let n = names.len();
    let np = cont.len() * env.len();
    let mut succ: Vec<Vec<Option<GameState>>> = vec![vec![None; np]; n];
    let mut outs: Vec<Vec<Option<Sym>>> = vec![vec![None; np]; n];
    for (ln, [src, c, e, dst, o]) in trans {
        let s = state(ln, &src)?;
        let c = cont
            .get(&c)
            .ok_or_else(|| Error::parse(ln, format!("unknown cont action '{c}'")))?;
        let e = env
            .get(&e)
            .ok_or_else(|| Error::parse(ln, format!("unknown env action '{e}'")))?;
        let d = state(ln, &dst)?;
        let p = c.index() * env.len() + e.index();
        if succ[s.index()][p].is_some() {
            return Err(Error::parse(ln, "nondeterministic transition".to_string()));
        }
        succ[s.index()][p] = Some(d);
        outs[s.index()][p] = if o == "-" {
            None
        } else {
            Some(
                out.get(&o)
                    .ok_or_else(|| Error::parse(ln, format!("unknown output '{o}'")))?,
            )
        };
    }
    let mut succ_total = Vec::with_capacity(n);
    for (i, row) in succ.into_iter().enumerate() {
        let mut r = Vec::with_capacity(np);
        for (p, cell) in row.into_iter().enumerate() {
            r.push(cell.ok_or_else(|| {
                Error::Invalid(format!(
                    "shield transition table incomplete at state '{}' pair {p}",
                    names[i]
                ))
            })?);
        }
        succ_total.push(r);
    }

    let mut allowed: Vec<Vec<Sym>> = vec![Vec::new(); n];
    for (ln, name, acts) in allows {
        let g = state(ln, &name)?;
        let mut syms = Vec::with_capacity(acts.len());
        for a in acts {
            syms.push(
                cont.get(&a)
                    .ok_or_else(|| Error::parse(ln, format!("unknown cont action '{a}'")))?,
            );
        }
        syms.sort();
        allowed[g.index()] = syms;
    }

    let initial = state(1, &init)?;
    Ok(PreemptiveShield::from_parts(
        cont, env, out, names, initial, succ_total, outs, allowed,
    ))
}

// ----------------------------------------------------------------- misc --

/// Groups transitions of a machine by source state; used by the DOT export.
pub(crate) fn transitions_by_state(
    f: &Fsrs,
) -> BTreeMap<String, Vec<(String, String, String, String)>> {
    let m = f.machine();
    let mut by: BTreeMap<String, Vec<(String, String, String, String)>> = BTreeMap::new();
    for (src, a, dst, o) in m.transitions() {
        let (c, e) = f.unpair(a);
        by.entry(m.state_name(src).to_string()).or_default().push((
            f.cont().name(c).to_string(),
            f.env().name(e).to_string(),
            m.state_name(dst).to_string(),
            m.outputs().name(o).to_string(),
        ));
    }
    by
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::game::{compose, synthesize_preemptive, winning_region};
    use crate::mealy::MealyBuilder;

    fn demo_fsrs() -> Fsrs {
        let cont = Alphabet::new(["go", "stay"]).unwrap();
        let env = Alphabet::new(["e", "f"]).unwrap();
        let outputs = Alphabet::new(["ok", "boom"]).unwrap();
        let inputs = Alphabet::product(&cont, &env);
        let mut b = MealyBuilder::new(inputs, outputs, "a");
        b.transition("a", "go,e", "b", "ok");
        b.transition("a", "go,f", "c", "ok");
        b.transition("b", "stay,e", "b", "ok");
        b.transition("c", "go,e", "a", "boom");
        Fsrs::new(b.build().unwrap(), cont, env).unwrap()
    }

    #[test]
    fn fsrs_round_trip() {
        let m = demo_fsrs();
        let text = serialize_fsrs(&m);
        let back = parse_fsrs(&text).unwrap();
        assert_eq!(m, back);
        assert_eq!(text, serialize_fsrs(&back));
    }

    #[test]
    fn fsrs_duplicate_transition_rejected() {
        let mut text = serialize_fsrs(&demo_fsrs());
        text.push_str("t a go e b ok\n");
        let err = parse_fsrs(&text).unwrap_err();
        assert!(err.to_string().contains("nondeterministic"), "{err}");
    }

    #[test]
    fn fsrs_unknown_symbol_has_line_number() {
        let text = "fsrs v1\ncont a\nenv e\nout x\ninit q\nt q zap e q x\n";
        let err = parse_fsrs(text).unwrap_err();
        assert!(err.to_string().starts_with("line 6:"), "{err}");
    }

    #[test]
    fn spec_round_trip_and_validation() {
        let sigma = Alphabet::new(["ok", "boom"]).unwrap();
        let spec = SafetyAutomaton::forbidding(sigma, &["boom"]).unwrap();
        let text = serialize_spec(&spec);
        let back = parse_spec(&text).unwrap();
        assert_eq!(spec, back);

        // an edge escaping the unsafe region must be rejected
        let bad = "spec v1\nsigma a\ninit ok\nunsafe bad\nt ok a bad\nt bad a ok\n";
        let err = parse_spec(bad).unwrap_err();
        assert!(err.to_string().contains("not absorbing"), "{err}");
    }

    #[test]
    fn trace_round_trip_and_sample_set() {
        let cont = Alphabet::new(["go", "stay"]).unwrap();
        let env = Alphabet::new(["e"]).unwrap();
        let out = Alphabet::new(["ok", "boom"]).unwrap();
        let g = cont.get("go").unwrap();
        let st = cont.get("stay").unwrap();
        let e = env.get("e").unwrap();
        let ok = out.get("ok").unwrap();
        let boom = out.get("boom").unwrap();
        let t = TraceFile {
            cont,
            env,
            out,
            episodes: vec![vec![(g, e, ok), (st, e, ok)], vec![(g, e, ok), (g, e, boom)]],
        };
        let text = serialize_trace(&t);
        let back = parse_trace(&text).unwrap();
        assert_eq!(t, back);
        let d = back.sample_set().unwrap();
        assert_eq!(d.len(), 3); // go; go stay; go go (prefix "go" shared)
    }

    #[test]
    fn trace_without_headers_infers_alphabets() {
        let text = "ep\ns go e ok\ns stay e ok\n";
        let t = parse_trace(text).unwrap();
        assert_eq!(t.cont.len(), 2);
        assert_eq!(t.env.len(), 1);
        assert_eq!(t.out.len(), 1);
    }

    #[test]
    fn empty_episode_rejected() {
        let text = "ep\nep\ns go e ok\n";
        assert!(parse_trace(text).is_err());
    }

    #[test]
    fn shield_round_trip() {
        let model = demo_fsrs();
        let spec = SafetyAutomaton::forbidding(model.outputs().clone(), &["boom"]).unwrap();
        let game = compose(&model, &spec).unwrap();
        let w = winning_region(&game);
        let s = synthesize_preemptive(&game, &w);
        let text = serialize_shield(&s);
        let back = parse_shield(&text).unwrap();
        assert_eq!(s, back);
        assert_eq!(text, serialize_shield(&back));
    }
}
