//! The network-spec file format and the serializations of expanded and
//! phase problems.
//!
//! A network spec is a TOML document with 1-based node and message ids:
//!
//! ```toml
//! nodes = 3
//! messages = 1
//! input_alphabets = [2, 1, 1]
//! output_alphabets = [1, 2, 3]
//! side_info = [[1, 0, 0]]
//! demands = [[0, 1, 1]]
//!
//! [channel]
//! form = "product"          # or "table" with explicit joint rows
//!
//! [[channel.receiver]]
//! node = 2
//! table = [[1.0, 0.0], [0.0, 1.0]]
//!
//! [[channel.receiver]]
//! node = 3
//! table = [[0.5, 0.0, 0.5], [0.0, 0.5, 0.5]]
//!
//! [[deadline]]
//! message = 1
//! node = 2
//! sigma = 0.5
//! ```
//!
//! Unknown keys are rejected; parse errors carry line numbers. Joint
//! indices are mixed-radix with node 1 most significant.

use std::sync::Arc;

use serde::Deserialize;

use crate::expansion::{ExpandedProblem, PhaseProblem};
use crate::model::{Channel, NetworkProblem, TimeConstraints};
use crate::{Error, Result};

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct SpecFile {
    nodes: usize,
    messages: usize,
    input_alphabets: Vec<usize>,
    output_alphabets: Vec<usize>,
    channel: ChannelSpec,
    side_info: Vec<Vec<u8>>,
    demands: Vec<Vec<u8>>,
    #[serde(default, rename = "deadline")]
    deadlines: Vec<DeadlineSpec>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ChannelSpec {
    form: String,
    #[serde(default)]
    rows: Option<Vec<Vec<f64>>>,
    #[serde(default, rename = "receiver")]
    receivers: Vec<ReceiverSpec>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ReceiverSpec {
    node: usize,
    table: Vec<Vec<f64>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct DeadlineSpec {
    message: usize,
    node: usize,
    sigma: f64,
}

fn binary_matrix(raw: &[Vec<u8>], rows: usize, cols: usize, name: &str) -> Result<Vec<Vec<bool>>> {
    if raw.len() != rows || raw.iter().any(|r| r.len() != cols) {
        return Err(Error::Parse(format!(
            "{} must be a {}x{} 0/1 matrix",
            name, rows, cols
        )));
    }
    raw.iter()
        .map(|row| {
            row.iter()
                .map(|&v| match v {
                    0 => Ok(false),
                    1 => Ok(true),
                    other => Err(Error::Parse(format!(
                        "{} entries must be 0 or 1, found {}",
                        name, other
                    ))),
                })
                .collect()
        })
        .collect()
}

/// Parses a network-spec document into a problem and its time constraints.
///
/// The result is structurally sound but not yet validated; run
/// [`crate::validate_problem`] on it.
pub fn parse_network_spec(text: &str) -> Result<(NetworkProblem, TimeConstraints)> {
    let spec: SpecFile = toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
    if spec.nodes == 0 || spec.messages == 0 {
        return Err(Error::Parse("need at least one node and one message".into()));
    }
    if spec.input_alphabets.len() != spec.nodes || spec.output_alphabets.len() != spec.nodes {
        return Err(Error::Parse(format!(
            "alphabet lists must have {} entries",
            spec.nodes
        )));
    }

    let channel = match spec.channel.form.as_str() {
        "table" => {
            let rows = spec.channel.rows.ok_or_else(|| {
                Error::Parse("channel form \"table\" requires rows".into())
            })?;
            if !spec.channel.receivers.is_empty() {
                return Err(Error::Parse(
                    "channel form \"table\" does not take receiver tables".into(),
                ));
            }
            Channel::new_unchecked(spec.input_alphabets, spec.output_alphabets, rows)?
        }
        "product" => {
            if spec.channel.rows.is_some() {
                return Err(Error::Parse(
                    "channel form \"product\" does not take joint rows".into(),
                ));
            }
            let mut tables: Vec<Option<Vec<Vec<f64>>>> = vec![None; spec.nodes];
            for r in spec.channel.receivers {
                if r.node == 0 || r.node > spec.nodes {
                    return Err(Error::Parse(format!(
                        "receiver table names node {}, spec has {} nodes",
                        r.node, spec.nodes
                    )));
                }
                if tables[r.node - 1].is_some() {
                    return Err(Error::Parse(format!(
                        "duplicate receiver table for node {}",
                        r.node
                    )));
                }
                tables[r.node - 1] = Some(r.table);
            }
            Channel::from_receiver_tables(spec.input_alphabets, spec.output_alphabets, tables)?
        }
        other => {
            return Err(Error::Parse(format!(
                "unknown channel form \"{}\"; expected \"table\" or \"product\"",
                other
            )));
        }
    };

    let side_info = binary_matrix(&spec.side_info, spec.messages, spec.nodes, "side_info")?;
    let demands = binary_matrix(&spec.demands, spec.messages, spec.nodes, "demands")?;

    let mut sigma = TimeConstraints::new();
    for d in &spec.deadlines {
        if d.message == 0 || d.message > spec.messages || d.node == 0 || d.node > spec.nodes {
            return Err(Error::Parse(format!(
                "deadline triple (message {}, node {}, sigma {}) is out of range",
                d.message, d.node, d.sigma
            )));
        }
        if sigma.get(d.message - 1, d.node - 1).is_some() {
            return Err(Error::Parse(format!(
                "duplicate deadline triple (message {}, node {})",
                d.message, d.node
            )));
        }
        sigma.set(d.message - 1, d.node - 1, d.sigma);
    }

    let problem = NetworkProblem {
        channel: Arc::new(channel),
        message_count: spec.messages,
        side_info,
        demands,
    };
    Ok((problem, sigma))
}

/// Formats a float so TOML re-parses it to the identical value.
fn toml_float(v: f64) -> String {
    let s = format!("{}", v);
    if s.contains('.') || s.contains('e') || s.contains("inf") || s.contains("NaN") {
        s
    } else {
        format!("{}.0", s)
    }
}

fn float_row(row: &[f64]) -> String {
    let cells: Vec<String> = row.iter().map(|&v| toml_float(v)).collect();
    format!("[{}]", cells.join(", "))
}

fn bool_row(row: &[bool]) -> String {
    let cells: Vec<&str> = row.iter().map(|&b| if b { "1" } else { "0" }).collect();
    format!("[{}]", cells.join(", "))
}

/// Serializes a problem back to the network-spec format (always as an
/// explicit joint table). Output is canonical: byte-identical for equal
/// inputs.
pub fn write_network_spec(problem: &NetworkProblem, sigma: &TimeConstraints) -> String {
    let ch = &problem.channel;
    let mut out = String::new();
    out.push_str(&format!("nodes = {}\n", problem.node_count()));
    out.push_str(&format!("messages = {}\n", problem.message_count));
    out.push_str(&format!(
        "input_alphabets = [{}]\n",
        ch.input_alphabets()
            .iter()
            .map(|a| a.to_string())
            .collect::<Vec<_>>()
            .join(", ")
    ));
    out.push_str(&format!(
        "output_alphabets = [{}]\n",
        ch.output_alphabets()
            .iter()
            .map(|a| a.to_string())
            .collect::<Vec<_>>()
            .join(", ")
    ));
    out.push_str("side_info = [");
    out.push_str(
        &problem
            .side_info
            .iter()
            .map(|r| bool_row(r))
            .collect::<Vec<_>>()
            .join(", "),
    );
    out.push_str("]\n");
    out.push_str("demands = [");
    out.push_str(
        &problem
            .demands
            .iter()
            .map(|r| bool_row(r))
            .collect::<Vec<_>>()
            .join(", "),
    );
    out.push_str("]\n\n[channel]\nform = \"table\"\nrows = [\n");
    for row in ch.transition() {
        out.push_str(&format!("  {},\n", float_row(row)));
    }
    out.push_str("]\n");
    for (&(i, j), &v) in sigma.iter() {
        out.push_str(&format!(
            "\n[[deadline]]\nmessage = {}\nnode = {}\nsigma = {}\n",
            i + 1,
            j + 1,
            toml_float(v)
        ));
    }
    out
}

/// Serializes an expanded problem, one block per sub-message with its
/// demand row, side-information row, and per-node deadlines.
pub fn write_expanded(expanded: &ExpandedProblem) -> String {
    let mut out = String::new();
    out.push_str(&format!("nodes = {}\n", expanded.base.node_count()));
    out.push_str(&format!("messages = {}\n", expanded.base.message_count));
    out.push_str(&format!("submessages = {}\n", expanded.submessage_count()));
    out.push_str(&format!("phases = {}\n", expanded.phase_count()));
    out.push_str(&format!(
        "distinct_times = [{}]\n",
        expanded
            .partition
            .distinct_times
            .iter()
            .map(|&t| toml_float(t))
            .collect::<Vec<_>>()
            .join(", ")
    ));
    for (idx, sub) in expanded.submessages.iter().enumerate() {
        out.push_str(&format!("\n[[submessage]]\nid = \"{}\"\n", sub.id()));
        out.push_str(&format!("message = {}\n", sub.message + 1));
        out.push_str(&format!(
            "schedule = [{}]\n",
            sub.schedule
                .iter()
                .map(|a| a.to_string())
                .collect::<Vec<_>>()
                .join(", ")
        ));
        out.push_str(&format!("demands = {}\n", bool_row(&expanded.s0[idx])));
        out.push_str(&format!("side_info = {}\n", bool_row(&expanded.h0[idx])));
        let deadlines: Vec<String> = expanded.sigma0[idx]
            .iter()
            .enumerate()
            .filter_map(|(j, d)| {
                d.map(|t| format!("{{ node = {}, sigma = {} }}", j + 1, toml_float(t)))
            })
            .collect();
        out.push_str(&format!("deadlines = [{}]\n", deadlines.join(", ")));
    }
    out
}

/// Serializes one phase problem.
pub fn write_phase(expanded: &ExpandedProblem, phase: &PhaseProblem) -> String {
    let mut out = String::new();
    out.push_str(&format!("phase = {}\n", phase.phase));
    out.push_str(&format!("duration = {}\n", toml_float(phase.duration)));
    out.push_str(&format!("submessages = {}\n", expanded.submessage_count()));
    for (idx, sub) in expanded.submessages.iter().enumerate() {
        out.push_str(&format!("\n[[submessage]]\nid = \"{}\"\n", sub.id()));
        out.push_str(&format!("demands = {}\n", bool_row(&phase.s[idx])));
        out.push_str(&format!("side_info = {}\n", bool_row(&phase.h[idx])));
    }
    out
}
