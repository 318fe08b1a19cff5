//! Text format for automorphisms of free group systems.
//!
//! ```text
//! # golden mean
//! a -> a b
//! b -> a
//! ---
//! c -> c'
//! ```
//!
//! Generators are a lowercase letter followed by optional digits. Inverses are
//! written `x'` or `x^-1`, powers `x^3`; `1` or an empty right side is the identity.

use std::collections::BTreeMap;

use crate::automorphism::{Automorphism, FreeGroupSystem};
use crate::error::{Error, Result};
use crate::word::Word;

fn perr(line: usize, msg: impl Into<String>) -> Error {
    Error::Parse {
        line,
        msg: msg.into(),
    }
}

#[derive(Debug, Clone, PartialEq)]
struct Token {
    name: String,
    exp: i64,
}

const MAX_EXPONENT: i64 = 64;
const MAX_WORD_LETTERS: usize = 1 << 16;

fn tokenize(s: &str, line: usize) -> Result<Vec<Token>> {
    let chars: Vec<char> = s.chars().collect();
    let mut i = 0;
    let mut out = Vec::new();
    while i < chars.len() {
        let c = chars[i];
        if c.is_whitespace() || c == '*' || c == '.' || c == '·' {
            i += 1;
            continue;
        }
        if c == '1' && out.is_empty() && chars[i + 1..].iter().all(|c| c.is_whitespace()) {
            return Ok(out);
        }
        if !c.is_ascii_lowercase() {
            return Err(perr(line, format!("unexpected character {c:?}")));
        }
        let mut name = c.to_string();
        i += 1;
        while i < chars.len() && chars[i].is_ascii_digit() {
            name.push(chars[i]);
            i += 1;
        }
        let mut exp: i64 = 1;
        loop {
            if i < chars.len() && chars[i] == '\'' {
                exp = -exp;
                i += 1;
            } else if i < chars.len() && chars[i] == '^' {
                i += 1;
                let mut neg = false;
                if i < chars.len() && chars[i] == '-' {
                    neg = true;
                    i += 1;
                }
                let start = i;
                while i < chars.len() && chars[i].is_ascii_digit() {
                    i += 1;
                }
                if start == i || i - start > 3 {
                    return Err(perr(line, "bad exponent"));
                }
                let n: i64 = chars[start..i]
                    .iter()
                    .collect::<String>()
                    .parse()
                    .map_err(|_| perr(line, "bad exponent"))?;
                exp *= if neg { -n } else { n };
                // chained powers multiply, so bound the product
                if exp.abs() > MAX_EXPONENT {
                    return Err(perr(line, format!("exponent above {MAX_EXPONENT}")));
                }
            } else {
                break;
            }
        }
        out.push(Token { name, exp });
    }
    Ok(out)
}

fn is_generator_name(s: &str) -> bool {
    let mut it = s.chars();
    matches!(it.next(), Some(c) if c.is_ascii_lowercase()) && it.all(|c| c.is_ascii_digit())
}

/// Parses the text format into an (unverified) automorphism.
pub fn parse_automorphism(text: &str) -> Result<Automorphism> {
    // (line number, lhs, rhs tokens) per component
    let mut comps: Vec<Vec<(usize, String, Vec<Token>)>> = vec![Vec::new()];
    for (k, raw) in text.lines().enumerate() {
        let line = k + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        if content.chars().all(|c| c == '-') && content.len() >= 3 {
            comps.push(Vec::new());
            continue;
        }
        let (lhs, rhs) = content
            .split_once("->")
            .ok_or_else(|| perr(line, "expected `gen -> word`"))?;
        let lhs = lhs.trim();
        if !is_generator_name(lhs) {
            return Err(perr(line, format!("bad generator name {lhs:?}")));
        }
        let toks = tokenize(rhs, line)?;
        comps
            .last_mut()
            .unwrap()
            .push((line, lhs.to_string(), toks));
    }
    if comps.last().map(|c| c.is_empty()).unwrap_or(false) && comps.len() > 1 {
        return Err(perr(
            text.lines().count(),
            "empty component after separator",
        ));
    }
    if comps.iter().any(|c| c.is_empty()) {
        return Err(perr(1, "empty component"));
    }
    let mut index: BTreeMap<String, (usize, i32)> = BTreeMap::new();
    let mut names = Vec::new();
    for (ci, c) in comps.iter().enumerate() {
        let mut ns = Vec::new();
        for (line, lhs, _) in c {
            if index.contains_key(lhs) {
                return Err(perr(*line, format!("generator {lhs} defined twice")));
            }
            index.insert(lhs.clone(), (ci, ns.len() as i32 + 1));
            ns.push(lhs.clone());
        }
        names.push(ns);
    }
    let system = FreeGroupSystem::with_names(names)?;
    let mut sigma: Vec<Option<usize>> = vec![None; comps.len()];
    let mut images = Vec::new();
    for (ci, c) in comps.iter().enumerate() {
        let mut imgs = Vec::new();
        for (line, _, toks) in c {
            let mut letters = Vec::new();
            for t in toks {
                let &(tc, ord) = index
                    .get(&t.name)
                    .ok_or_else(|| perr(*line, format!("unknown generator {}", t.name)))?;
                match sigma[ci] {
                    None => sigma[ci] = Some(tc),
                    Some(s) if s != tc => return Err(perr(*line, "image mixes components")),
                    _ => {}
                }
                let l = if t.exp < 0 { -ord } else { ord };
                letters.extend(std::iter::repeat_n(l, t.exp.unsigned_abs() as usize));
                if letters.len() > MAX_WORD_LETTERS {
                    return Err(perr(
                        *line,
                        format!("word longer than {MAX_WORD_LETTERS} letters"),
                    ));
                }
            }
            imgs.push(Word::from_letters(letters));
        }
        images.push(imgs);
    }
    // components whose images are all trivial keep their own index when free
    let mut used: Vec<bool> = vec![false; comps.len()];
    for s in sigma.iter().flatten() {
        used[*s] = true;
    }
    let sigma: Vec<usize> = sigma
        .iter()
        .enumerate()
        .map(|(i, s)| match s {
            Some(s) => *s,
            None => {
                if !used[i] {
                    used[i] = true;
                    i
                } else {
                    let j = used.iter().position(|u| !u).unwrap_or(i);
                    used[j] = true;
                    j
                }
            }
        })
        .collect();
    Automorphism::new(system, sigma, images).map_err(|e| match e {
        Error::Invalid(m) => perr(0, m),
        Error::SystemMismatch => perr(0, "component ranks do not match under sigma"),
        other => other,
    })
}

/// Parses a word over the named generators of `system`.
pub fn parse_word(system: &FreeGroupSystem, text: &str) -> Result<(usize, Word)> {
    let toks = tokenize(text, 1)?;
    let mut comp = None;
    let mut letters = Vec::new();
    for t in toks {
        let (ci, ord) = system
            .names
            .iter()
            .enumerate()
            .find_map(|(ci, ns)| {
                ns.iter()
                    .position(|n| *n == t.name)
                    .map(|p| (ci, p as i32 + 1))
            })
            .ok_or_else(|| perr(1, format!("unknown generator {}", t.name)))?;
        match comp {
            None => comp = Some(ci),
            Some(c) if c != ci => return Err(Error::MixedComponents),
            _ => {}
        }
        let l = if t.exp < 0 { -ord } else { ord };
        letters.extend(std::iter::repeat_n(l, t.exp.unsigned_abs() as usize));
        if letters.len() > MAX_WORD_LETTERS {
            return Err(perr(
                1,
                format!("word longer than {MAX_WORD_LETTERS} letters"),
            ));
        }
    }
    Ok((comp.unwrap_or(0), Word::from_letters(letters)))
}

/// Writes the text format back out; `parse_automorphism` reads it unchanged.
pub fn format_automorphism(phi: &Automorphism) -> String {
    let mut out = String::new();
    for (ci, imgs) in phi.images.iter().enumerate() {
        if ci > 0 {
            out.push_str("---\n");
        }
        let target = &phi.system.names[phi.sigma[ci]];
        for (k, w) in imgs.iter().enumerate() {
            let rhs = if w.is_empty() {
                "1".to_string()
            } else {
                w.display_with(target)
            };
            out.push_str(&format!("{} -> {}\n", phi.system.names[ci][k], rhs));
        }
    }
    out
}
