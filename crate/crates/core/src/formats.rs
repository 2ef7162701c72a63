//! JSON input formats.
//!
//! - game: `{"matrix": [[u11, u12, ...], ...]}`
//! - source: `{"pxy": [[p(x1,y1), ...], ...]}`, rows indexed by `x`
//! - team: `{"players": [k1, k2, ...], "payoff": [a1][a2]...[b], "channel": [a][s]}`
//!
//! Numbers may be JSON numbers, decimal strings or `"p/q"` strings and are read exactly.

use serde_json::Value;

use crate::error::{Error, Result};
use crate::game::PayoffMatrix;
use crate::info::JointPmf;
use crate::rational::{self, Rational};
use crate::team::TeamGameSpec;

fn parse_json(text: &str, what: &str) -> Result<Value> {
    serde_json::from_str(text).map_err(|e| Error::Validation(format!("{what} is not valid JSON: {e}")))
}

fn field<'a>(doc: &'a Value, key: &str, what: &str) -> Result<&'a Value> {
    doc.get(key)
        .ok_or_else(|| Error::Validation(format!("{what} is missing the \"{key}\" field")))
}

fn grid(value: &Value, what: &str) -> Result<Vec<Vec<Rational>>> {
    let rows = value
        .as_array()
        .ok_or_else(|| Error::Validation(format!("{what} must be an array of rows")))?;
    rows.iter()
        .enumerate()
        .map(|(i, row)| {
            let cells = row
                .as_array()
                .ok_or_else(|| Error::Validation(format!("{what} row {} is not an array", i + 1)))?;
            cells
                .iter()
                .enumerate()
                .map(|(j, c)| {
                    rational::from_json(c)
                        .map_err(|e| Error::Validation(format!("{what} cell ({}, {}): {e}", i + 1, j + 1)))
                })
                .collect()
        })
        .collect()
}

pub fn parse_game(text: &str) -> Result<PayoffMatrix> {
    let doc = parse_json(text, "game file")?;
    PayoffMatrix::new(grid(field(&doc, "matrix", "game file")?, "matrix")?)
}

pub fn parse_source(text: &str) -> Result<JointPmf> {
    let doc = parse_json(text, "source file")?;
    JointPmf::new(grid(field(&doc, "pxy", "source file")?, "pxy")?)
}

/// Flattens a nested payoff array `[a1][a2]...[b]` into rows by joint action.
fn flatten_payoff(value: &Value, players: &[usize], path: &mut Vec<usize>, out: &mut Vec<Vec<f64>>) -> Result<()> {
    let items = value
        .as_array()
        .ok_or_else(|| Error::Validation(format!("payoff at index {path:?} is not an array")))?;
    if path.len() == players.len() {
        let row = items
            .iter()
            .enumerate()
            .map(|(b, c)| {
                rational::from_json(c)
                    .map(|r| rational::to_f64(&r))
                    .map_err(|e| Error::Validation(format!("payoff at {path:?}, column {b}: {e}")))
            })
            .collect::<Result<Vec<f64>>>()?;
        out.push(row);
        return Ok(());
    }
    let expected = players[path.len()];
    if items.len() != expected {
        return Err(Error::Validation(format!(
            "payoff at index {path:?} has {} entries, player {} has {expected} actions",
            items.len(),
            path.len() + 1
        )));
    }
    for (k, item) in items.iter().enumerate() {
        path.push(k);
        flatten_payoff(item, players, path, out)?;
        path.pop();
    }
    Ok(())
}

pub fn parse_team(text: &str) -> Result<TeamGameSpec> {
    let doc = parse_json(text, "team file")?;
    let players: Vec<usize> = field(&doc, "players", "team file")?
        .as_array()
        .ok_or_else(|| Error::Validation("players must be an array".into()))?
        .iter()
        .map(|p| {
            p.as_u64()
                .filter(|&k| k >= 1)
                .map(|k| k as usize)
                .ok_or_else(|| Error::Validation(format!("player action count {p} is not a positive integer")))
        })
        .collect::<Result<_>>()?;
    let mut payoff = Vec::new();
    flatten_payoff(field(&doc, "payoff", "team file")?, &players, &mut Vec::new(), &mut payoff)?;
    let channel = grid(field(&doc, "channel", "team file")?, "channel")?
        .iter()
        .map(|row| row.iter().map(rational::to_f64).collect())
        .collect();
    TeamGameSpec::new(players, payoff, channel)
}

pub fn read_text(path: &std::path::Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })
}
