//! Line-oriented text format for instances.
//!
//! ```text
//! # comment
//! [states]
//! s0
//! s1
//! [actions]
//! go
//! [transitions]
//! s0 go s1 1
//! [utility]
//! s0 go 2.5
//! [risk]
//! s1 0.1
//! [cost]
//! [meta]
//! horizon 1
//! initial s0
//! budget 0.2
//! mode cc
//! ```
//!
//! Serialization is canonical: names sorted, transitions sorted by
//! (state, action, successor), zero utilities, risks and costs omitted.

use std::collections::HashSet;
use std::fs;
use std::path::Path;

use crate::mdp::{validate_instance, InstanceBuilder, MdpInstance, Mode};
use crate::{Error, Result};

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
enum Section {
    None,
    States,
    Actions,
    Transitions,
    Utility,
    Risk,
    Cost,
    Meta,
}

fn perr(line: usize, msg: impl Into<String>) -> Error {
    Error::Parse { line, msg: msg.into() }
}

fn number(line: usize, field: &str, what: &str) -> Result<f64> {
    field
        .parse::<f64>()
        .map_err(|_| perr(line, format!("{what}: cannot parse {field:?} as a number")))
}

pub fn parse_instance(text: &str) -> Result<MdpInstance> {
    let mut b = InstanceBuilder::new(Mode::ChanceConstrained);
    let mut section = Section::None;
    let mut seen_sections = HashSet::new();
    let mut seen_utility = HashSet::new();
    let mut seen_risk = HashSet::new();
    let mut seen_cost = HashSet::new();
    let mut seen_meta = HashSet::new();
    let mut initial: Option<(usize, String)> = None;

    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        if content.starts_with('[') {
            section = match content {
                "[states]" => Section::States,
                "[actions]" => Section::Actions,
                "[transitions]" => Section::Transitions,
                "[utility]" => Section::Utility,
                "[risk]" => Section::Risk,
                "[cost]" => Section::Cost,
                "[meta]" => Section::Meta,
                _ => return Err(perr(line, format!("unknown section {content}"))),
            };
            if !seen_sections.insert(section as u8) {
                return Err(perr(line, format!("section {content} repeated")));
            }
            continue;
        }
        let f: Vec<&str> = content.split_whitespace().collect();
        let arity = |n: usize| -> Result<()> {
            if f.len() == n {
                Ok(())
            } else {
                Err(perr(line, format!("expected {n} fields, found {}", f.len())))
            }
        };
        let state = |b: &InstanceBuilder, name: &str| -> Result<()> {
            if b.has_state(name) {
                Ok(())
            } else {
                Err(perr(line, format!("undeclared state {name:?}")))
            }
        };
        let action = |b: &InstanceBuilder, name: &str| -> Result<()> {
            if b.has_action(name) {
                Ok(())
            } else {
                Err(perr(line, format!("undeclared action {name:?}")))
            }
        };
        match section {
            Section::None => return Err(perr(line, "content before the first section")),
            Section::States | Section::Actions => {
                arity(1)?;
                let is_state = section == Section::States;
                let dup = if is_state { b.has_state(f[0]) } else { b.has_action(f[0]) };
                if dup {
                    return Err(perr(line, format!("duplicate name {:?}", f[0])));
                }
                if is_state {
                    b.state(f[0]);
                } else {
                    b.action(f[0]);
                }
            }
            Section::Transitions => {
                arity(4)?;
                state(&b, f[0])?;
                action(&b, f[1])?;
                state(&b, f[2])?;
                let p = number(line, f[3], "probability")?;
                b.add_transition(f[0], f[1], f[2], p)
                    .map_err(|e| perr(line, e.to_string().trim_start_matches("invalid instance: ").to_string()))?;
            }
            Section::Utility | Section::Cost => {
                arity(3)?;
                state(&b, f[0])?;
                action(&b, f[1])?;
                let v = number(line, f[2], "value")?;
                let seen = if section == Section::Utility { &mut seen_utility } else { &mut seen_cost };
                if !seen.insert((f[0].to_string(), f[1].to_string())) {
                    return Err(perr(line, format!("duplicate entry ({}, {})", f[0], f[1])));
                }
                if section == Section::Utility {
                    b.set_utility(f[0], f[1], v);
                } else {
                    b.set_cost(f[0], f[1], v);
                }
            }
            Section::Risk => {
                arity(2)?;
                state(&b, f[0])?;
                if !seen_risk.insert(f[0].to_string()) {
                    return Err(perr(line, format!("duplicate risk for {}", f[0])));
                }
                b.set_risk(f[0], number(line, f[1], "risk")?);
            }
            Section::Meta => {
                arity(2)?;
                if !seen_meta.insert(f[0].to_string()) {
                    return Err(perr(line, format!("duplicate key {}", f[0])));
                }
                match f[0] {
                    "horizon" => {
                        let h: usize = f[1]
                            .parse()
                            .map_err(|_| perr(line, format!("horizon: cannot parse {:?}", f[1])))?;
                        b.set_horizon(h);
                    }
                    "initial" => initial = Some((line, f[1].to_string())),
                    "budget" => {
                        b.set_budget(number(line, f[1], "budget")?);
                    }
                    "mode" => {
                        let m = Mode::parse(f[1]).ok_or_else(|| perr(line, format!("unknown mode {:?}", f[1])))?;
                        b.set_mode(m);
                    }
                    other => return Err(perr(line, format!("unknown key {other:?}"))),
                }
            }
        }
    }
    for key in ["horizon", "initial", "budget"] {
        if !seen_meta.contains(key) {
            return Err(perr(text.lines().count().max(1), format!("missing meta key {key}")));
        }
    }
    let (line, name) = initial.expect("checked above");
    if !b.has_state(&name) {
        return Err(perr(line, format!("undeclared state {name:?}")));
    }
    b.set_initial(&name);
    validate_instance(b.build_unchecked()?)
}

pub fn serialize_instance(inst: &MdpInstance) -> String {
    let mut s_order: Vec<usize> = (0..inst.n_states()).collect();
    s_order.sort_by(|&x, &y| inst.states[x].cmp(&inst.states[y]));
    let mut a_order: Vec<usize> = (0..inst.n_actions()).collect();
    a_order.sort_by(|&x, &y| inst.actions[x].cmp(&inst.actions[y]));

    let mut out = String::from("[states]\n");
    for &s in &s_order {
        out += &format!("{}\n", inst.states[s]);
    }
    out += "[actions]\n";
    for &a in &a_order {
        out += &format!("{}\n", inst.actions[a]);
    }
    out += "[transitions]\n";
    for &s in &s_order {
        for &a in &a_order {
            let mut edges = inst.transitions[s][a].clone();
            edges.sort_by(|x, y| inst.states[x.0].cmp(&inst.states[y.0]));
            for (t, p) in edges {
                out += &format!("{} {} {} {}\n", inst.states[s], inst.actions[a], inst.states[t], p);
            }
        }
    }
    out += "[utility]\n";
    for &s in &s_order {
        for &a in &a_order {
            if inst.utility[s][a] != 0.0 {
                out += &format!("{} {} {}\n", inst.states[s], inst.actions[a], inst.utility[s][a]);
            }
        }
    }
    out += "[risk]\n";
    for &s in &s_order {
        if inst.risk[s] != 0.0 {
            out += &format!("{} {}\n", inst.states[s], inst.risk[s]);
        }
    }
    out += "[cost]\n";
    for &s in &s_order {
        for &a in &a_order {
            if inst.cost[s][a] != 0.0 {
                out += &format!("{} {} {}\n", inst.states[s], inst.actions[a], inst.cost[s][a]);
            }
        }
    }
    out += "[meta]\n";
    out += &format!("horizon {}\n", inst.horizon);
    out += &format!("initial {}\n", inst.states[inst.initial]);
    out += &format!("budget {}\n", inst.budget);
    out += &format!("mode {}\n", inst.mode);
    out
}

pub fn read_instance(path: impl AsRef<Path>) -> Result<MdpInstance> {
    parse_instance(&fs::read_to_string(path)?)
}

pub fn write_instance(path: impl AsRef<Path>, inst: &MdpInstance) -> Result<()> {
    fs::write(path, serialize_instance(inst))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = "[states]\ns0\ns1\n[actions]\na\n[transitions]\ns0 a s1 1\n[meta]\nhorizon 1\ninitial s0\nbudget 0\n";

    #[test]
    fn minimal_document() {
        let inst = parse_instance(MINIMAL).unwrap();
        assert_eq!(inst.n_states(), 2);
        assert_eq!(inst.horizon, 1);
        assert_eq!(inst.mode, Mode::ChanceConstrained);
    }

    #[test]
    fn duplicate_triple_names_it() {
        let text = MINIMAL.replace("s0 a s1 1\n", "s0 a s1 0.5\ns0 a s1 0.5\n");
        let err = parse_instance(&text).unwrap_err().to_string();
        assert!(err.contains("line 8"), "{err}");
        assert!(err.contains("(s0, a, s1)"), "{err}");
    }

    #[test]
    fn errors_carry_line_numbers() {
        let text = MINIMAL.replace("s0 a s1 1", "s0 a s1 x");
        assert!(matches!(parse_instance(&text), Err(Error::Parse { line: 7, .. })));
        let text = MINIMAL.replace("s0 a s1 1", "s0 b s1 1");
        assert!(matches!(parse_instance(&text), Err(Error::Parse { line: 7, .. })));
        let text = MINIMAL.replace("horizon 1\n", "");
        assert!(parse_instance(&text).is_err());
    }

    #[test]
    fn comments_and_round_trip() {
        let text = "# header\n[actions]\nz\nb\n[states]\nq\np # trailing\n[transitions]\nq z p 0.25\nq z q 0.75\nq b p 1\n\
                    [utility]\nq z 1.5\n[risk]\np 0.1\n[meta]\nmode cc\nhorizon 1\ninitial q\nbudget 0.3\n";
        let inst = parse_instance(text).unwrap();
        let canon = serialize_instance(&inst);
        assert!(canon.starts_with("[states]\np\nq\n[actions]\nb\nz\n"));
        let again = parse_instance(&canon).unwrap();
        assert_eq!(serialize_instance(&again), canon);
    }

    #[test]
    fn cost_mode_with_infinite_budget() {
        let text = MINIMAL.replace("budget 0", "budget inf\nmode c");
        let inst = parse_instance(&text).unwrap();
        assert_eq!(inst.mode, Mode::CostConstrained);
        assert!(serialize_instance(&inst).contains("budget inf\nmode c\n"));
    }
}
