//! Plain-text fixture formats for [`TabularMdp`] and [`ReplayBuffer`].
//!
//! MDP format, version 1:
//!
//! ```text
//! cq-mdp 1
//! states 3
//! actions 2
//! gamma 1
//! initial 0
//! terminal 2
//! # s a prob next_s reward_prob reward_value
//! 0 0 1 1 0.8 -1
//! 0 0 1 1 0.2 0
//! ...
//! ```
//!
//! Each line is one reward atom of one branch. Consecutive lines with the
//! same `s a prob next_s` belong to the same branch until its reward
//! probabilities sum to one; then the next line opens a new branch.
//! Lines starting with `#` and blank lines are ignored. Reals are written
//! in shortest round-trip decimal form, so write/read is exact.
//!
//! Buffer format, version 1:
//!
//! ```text
//! cq-buffer 1
//! transitions 2
//! # episode s a r s_next done
//! 0 0 0 -1 1 0
//! 0 1 0 -1 2 1
//! ```

use std::collections::BTreeMap;
use std::fmt::Write as _;

use super::{ActionId, Branch, OutcomeDist, ReplayBuffer, RewardDist, StateId, TabularMdp, Transition, PROB_TOLERANCE};
use crate::error::{Error, Result};

pub const MDP_FORMAT_VERSION: u32 = 1;
pub const BUFFER_FORMAT_VERSION: u32 = 1;

pub fn write_mdp(mdp: &TabularMdp) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "cq-mdp {MDP_FORMAT_VERSION}");
    let _ = writeln!(out, "states {}", mdp.num_states());
    let _ = writeln!(out, "actions {}", mdp.num_actions());
    let _ = writeln!(out, "gamma {}", mdp.gamma());
    let _ = writeln!(out, "initial {}", mdp.initial_state().0);
    let terminals: Vec<String> = mdp.terminal_states().map(|s| s.0.to_string()).collect();
    let _ = writeln!(out, "terminal {}", terminals.join(" "));
    let _ = writeln!(out, "# s a prob next_s reward_prob reward_value");
    for s in mdp.non_terminal_states() {
        for a in 0..mdp.num_actions() {
            for b in mdp.outcome_unchecked(s.0, a).branches() {
                for &(rp, rv) in b.reward.atoms() {
                    let _ = writeln!(out, "{} {} {} {} {} {}", s.0, a, b.prob, b.next.0, rp, rv);
                }
            }
        }
    }
    out
}

fn parse_err(line: usize, msg: impl Into<String>) -> Error {
    Error::Parse {
        line,
        msg: msg.into(),
    }
}

fn parse_num<T: std::str::FromStr>(tok: Option<&str>, line: usize, what: &str) -> Result<T> {
    tok.ok_or_else(|| parse_err(line, format!("missing {what}")))?
        .parse()
        .map_err(|_| parse_err(line, format!("bad {what}")))
}

fn content_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'))
}

fn header<'a>(
    lines: &mut impl Iterator<Item = (usize, &'a str)>,
    key: &str,
) -> Result<(usize, Vec<&'a str>)> {
    let (no, line) = lines
        .next()
        .ok_or_else(|| parse_err(0, format!("missing `{key}` header")))?;
    let mut toks = line.split_whitespace();
    if toks.next() != Some(key) {
        return Err(parse_err(no, format!("expected `{key}`")));
    }
    Ok((no, toks.collect()))
}

pub fn read_mdp(text: &str) -> Result<TabularMdp> {
    let mut lines = content_lines(text);
    let (no, v) = header(&mut lines, "cq-mdp")?;
    let version: u32 = parse_num(v.first().copied(), no, "version")?;
    if version != MDP_FORMAT_VERSION {
        return Err(parse_err(no, format!("unsupported version {version}")));
    }
    let (no, v) = header(&mut lines, "states")?;
    let num_states: usize = parse_num(v.first().copied(), no, "state count")?;
    let (no, v) = header(&mut lines, "actions")?;
    let num_actions: usize = parse_num(v.first().copied(), no, "action count")?;
    let (no, v) = header(&mut lines, "gamma")?;
    let gamma: f64 = parse_num(v.first().copied(), no, "gamma")?;
    let (no, v) = header(&mut lines, "initial")?;
    let initial: usize = parse_num(v.first().copied(), no, "initial state")?;
    let (no, v) = header(&mut lines, "terminal")?;
    let terminal = v
        .iter()
        .map(|t| parse_num::<usize>(Some(t), no, "terminal state").map(StateId))
        .collect::<Result<Vec<_>>>()?;

    // (s, a) -> branches, each branch = (prob, next, atoms)
    let mut table: BTreeMap<(usize, usize), Vec<(f64, usize, Vec<(f64, f64)>)>> = BTreeMap::new();
    let mut open: Option<(usize, usize, f64, usize, f64)> = None;
    for (no, line) in lines {
        let mut toks = line.split_whitespace();
        let s: usize = parse_num(toks.next(), no, "s")?;
        let a: usize = parse_num(toks.next(), no, "a")?;
        let prob: f64 = parse_num(toks.next(), no, "prob")?;
        let next: usize = parse_num(toks.next(), no, "next_s")?;
        let rp: f64 = parse_num(toks.next(), no, "reward_prob")?;
        let rv: f64 = parse_num(toks.next(), no, "reward_value")?;
        if toks.next().is_some() {
            return Err(parse_err(no, "trailing tokens"));
        }
        let branches = table.entry((s, a)).or_default();
        let continues = matches!(open, Some((os, oa, op, on, acc))
            if os == s && oa == a && op == prob && on == next && acc < 1.0 - PROB_TOLERANCE);
        if continues {
            branches.last_mut().unwrap().2.push((rp, rv));
            if let Some(o) = open.as_mut() {
                o.4 += rp;
            }
        } else {
            branches.push((prob, next, vec![(rp, rv)]));
            open = Some((s, a, prob, next, rp));
        }
    }

    let mut outcomes = Vec::with_capacity(table.len());
    for ((s, a), branches) in table {
        let branches = branches
            .into_iter()
            .map(|(prob, next, atoms)| {
                Ok(Branch {
                    prob,
                    next: StateId(next),
                    reward: RewardDist::new(atoms)?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        outcomes.push(((StateId(s), ActionId(a)), OutcomeDist::new(branches)?));
    }
    TabularMdp::new(num_states, num_actions, &terminal, StateId(initial), gamma, outcomes)
}

pub fn write_buffer(buffer: &ReplayBuffer) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "cq-buffer {BUFFER_FORMAT_VERSION}");
    let _ = writeln!(out, "transitions {}", buffer.len());
    let _ = writeln!(out, "# episode s a r s_next done");
    for (ep, episode) in buffer.episodes().enumerate() {
        for t in episode {
            let _ = writeln!(
                out,
                "{} {} {} {} {} {}",
                ep,
                t.s.0,
                t.a.0,
                t.r,
                t.s_next.0,
                u8::from(t.done)
            );
        }
    }
    out
}

pub fn read_buffer(text: &str) -> Result<ReplayBuffer> {
    let mut lines = content_lines(text);
    let (no, v) = header(&mut lines, "cq-buffer")?;
    let version: u32 = parse_num(v.first().copied(), no, "version")?;
    if version != BUFFER_FORMAT_VERSION {
        return Err(parse_err(no, format!("unsupported version {version}")));
    }
    let (no, v) = header(&mut lines, "transitions")?;
    let expected: usize = parse_num(v.first().copied(), no, "transition count")?;
    let mut buffer = ReplayBuffer::new();
    let mut current_ep: Option<usize> = None;
    for (no, line) in lines {
        let mut toks = line.split_whitespace();
        let ep: usize = parse_num(toks.next(), no, "episode")?;
        let s: usize = parse_num(toks.next(), no, "s")?;
        let a: usize = parse_num(toks.next(), no, "a")?;
        let r: f64 = parse_num(toks.next(), no, "r")?;
        let s_next: usize = parse_num(toks.next(), no, "s_next")?;
        let done: u8 = parse_num(toks.next(), no, "done")?;
        if done > 1 {
            return Err(parse_err(no, "done must be 0 or 1"));
        }
        if current_ep != Some(ep) {
            buffer.start_episode();
            current_ep = Some(ep);
        }
        buffer
            .push(Transition {
                s: StateId(s),
                a: ActionId(a),
                r,
                s_next: StateId(s_next),
                done: done == 1,
            })
            .map_err(|e| parse_err(no, e.to_string()))?;
    }
    if buffer.len() != expected {
        return Err(parse_err(0, format!("expected {expected} transitions, found {}", buffer.len())));
    }
    Ok(buffer)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chain::{make_deterministic_chain, make_stochastic_chain};

    #[test]
    fn mdp_round_trip() {
        for mdp in [
            make_deterministic_chain(8).unwrap(),
            make_stochastic_chain(5).unwrap(),
            TabularMdp::two_state_probe(0.9),
        ] {
            let text = write_mdp(&mdp);
            assert_eq!(read_mdp(&text).unwrap(), mdp);
        }
    }

    #[test]
    fn identical_branches_split_by_probability_mass() {
        let text = "cq-mdp 1\nstates 2\nactions 1\ngamma 0.5\ninitial 0\nterminal 1\n\
                    0 0 0.5 1 1 2\n0 0 0.5 1 1 3\n";
        let mdp = read_mdp(text).unwrap();
        let d = mdp.outcomes(StateId(0), ActionId(0)).unwrap();
        assert_eq!(d.branches().len(), 2);
        assert_eq!(d.expected_reward(), 2.5);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(read_mdp("cq-mdp 2\n").is_err());
        assert!(read_mdp("cq-mdp 1\nstates x\n").is_err());
        let bad_sum = "cq-mdp 1\nstates 2\nactions 1\ngamma 0.5\ninitial 0\nterminal 1\n0 0 0.5 1 1 2\n";
        assert!(read_mdp(bad_sum).is_err());
        assert!(read_buffer("cq-buffer 1\ntransitions 1\n0 0 0 -1 1 2\n").is_err());
    }
}
