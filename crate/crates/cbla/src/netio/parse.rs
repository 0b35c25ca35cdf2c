//! MATPOWER `.m` case parser (numeric-matrix subset).

use std::collections::HashMap;

use crate::error::{Error, Result};

use super::{Branch, Bus, BusKind, CostCurve, Generator, NetworkCase};

/// Parse a MATPOWER case text into a [`NetworkCase`].
///
/// Supported subset: `mpc.baseMVA`, `mpc.bus`, `mpc.gen`, `mpc.branch`
/// and optional `mpc.gencost` with plain numeric matrix bodies. Comments
/// (`%`) and line continuations (`...`) are stripped. All quantities are
/// converted to per-unit on the system base; angles to radians.
pub fn parse_case(text: &str) -> Result<NetworkCase> {
    let cleaned = strip_comments(text);
    let name = parse_name(&cleaned).unwrap_or_else(|| "case".to_string());

    let base_power = parse_scalar(&cleaned, "baseMVA")
        .ok_or_else(|| Error::MalformedCase("missing mpc.baseMVA".into()))?;
    if !(base_power > 0.0) {
        return Err(Error::MalformedCase(format!(
            "baseMVA must be positive, got {base_power}"
        )));
    }

    let bus_rows = parse_matrix(&cleaned, "bus")?;
    let gen_rows = parse_matrix(&cleaned, "gen")?;
    let branch_rows = parse_matrix(&cleaned, "branch")?;
    let gencost_rows = parse_matrix(&cleaned, "gencost").ok();

    let mut buses = Vec::with_capacity(bus_rows.len());
    let mut index_of = HashMap::new();
    for row in &bus_rows {
        expect_cols("bus", row, 13)?;
        let id = row[0] as u32;
        if index_of.insert(id, buses.len()).is_some() {
            return Err(Error::DuplicateBusId(id));
        }
        let kind = match row[1] as i64 {
            1 => BusKind::Pq,
            2 => BusKind::Pv,
            3 => BusKind::Ref,
            other => {
                return Err(Error::MalformedCase(format!(
                    "bus {id}: unsupported bus type {other}"
                )))
            }
        };
        let bus = Bus {
            id,
            kind,
            p_load: row[2] / base_power,
            q_load: row[3] / base_power,
            g_shunt: row[4] / base_power,
            b_shunt: row[5] / base_power,
            v_mag_init: row[7],
            v_ang_init: row[8].to_radians(),
            v_max: row[11],
            v_min: row[12],
        };
        if bus.v_min > bus.v_max {
            return Err(Error::MalformedCase(format!(
                "bus {id}: v_min {} > v_max {}",
                bus.v_min, bus.v_max
            )));
        }
        if !(bus.v_mag_init > 0.0) {
            return Err(Error::MalformedCase(format!(
                "bus {id}: non-positive initial voltage"
            )));
        }
        buses.push(bus);
    }

    let slack_count = buses.iter().filter(|b| b.kind == BusKind::Ref).count();
    if slack_count == 0 {
        return Err(Error::NoSlackBus);
    }
    if slack_count > 1 {
        return Err(Error::MalformedCase(format!(
            "{slack_count} slack buses; exactly one expected"
        )));
    }

    let resolve = |id: f64, what: &str| -> Result<usize> {
        index_of
            .get(&(id as u32))
            .copied()
            .ok_or_else(|| Error::MalformedCase(format!("{what} references unknown bus {id}")))
    };

    let mut branches = Vec::with_capacity(branch_rows.len());
    for row in &branch_rows {
        expect_cols("branch", row, 11)?;
        branches.push(Branch {
            from_bus: resolve(row[0], "branch")?,
            to_bus: resolve(row[1], "branch")?,
            r: row[2],
            x: row[3],
            b_charging: row[4],
            rate_a: row[5] / base_power,
            tap_ratio: if row[8] == 0.0 { 1.0 } else { row[8] },
            phase_shift: row[9].to_radians(),
            in_service: row[10] != 0.0,
        });
    }

    let mut generators = Vec::with_capacity(gen_rows.len());
    for row in &gen_rows {
        expect_cols("gen", row, 10)?;
        let gen = Generator {
            bus: resolve(row[0], "gen")?,
            p_set: row[1] / base_power,
            q_set: row[2] / base_power,
            q_max: row[3] / base_power,
            q_min: row[4] / base_power,
            v_set: row[5],
            in_service: row[7] != 0.0,
            p_max: row[8] / base_power,
            p_min: row[9] / base_power,
        };
        if gen.p_min > gen.p_max || gen.q_min > gen.q_max {
            return Err(Error::MalformedCase(format!(
                "gen at bus {}: inverted limits",
                row[0]
            )));
        }
        generators.push(gen);
    }

    let mut gen_costs = Vec::new();
    if let Some(rows) = gencost_rows {
        if rows.len() != generators.len() {
            return Err(Error::MalformedCase(format!(
                "gencost has {} rows for {} generators",
                rows.len(),
                generators.len()
            )));
        }
        for row in &rows {
            expect_cols("gencost", row, 5)?;
            if row[0] as i64 != 2 {
                return Err(Error::MalformedCase(
                    "only polynomial gencost (model 2) is supported".into(),
                ));
            }
            let n = row[3] as usize;
            if row.len() < 4 + n {
                return Err(Error::MalformedCase("gencost row shorter than n".into()));
            }
            let coeffs = &row[4..4 + n];
            let cost = match n {
                2 => CostCurve {
                    c2: 0.0,
                    c1: coeffs[0],
                    c0: coeffs[1],
                },
                3 => CostCurve {
                    c2: coeffs[0],
                    c1: coeffs[1],
                    c0: coeffs[2],
                },
                _ => {
                    return Err(Error::MalformedCase(format!(
                        "gencost polynomial degree n={n} unsupported (need 2 or 3)"
                    )))
                }
            };
            gen_costs.push(cost);
        }
    }

    Ok(NetworkCase {
        name,
        base_power,
        buses,
        branches,
        generators,
        gen_costs,
    })
}

fn strip_comments(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    for line in text.lines() {
        let line = match line.find('%') {
            Some(pos) => &line[..pos],
            None => line,
        };
        let line = match line.find("...") {
            Some(pos) => &line[..pos],
            None => line,
        };
        out.push_str(line);
        out.push('\n');
    }
    out
}

fn parse_name(text: &str) -> Option<String> {
    for line in text.lines() {
        let line = line.trim();
        if let Some(rest) = line.strip_prefix("function") {
            // `function mpc = case14`
            if let Some(eq) = rest.find('=') {
                return Some(rest[eq + 1..].trim().trim_end_matches(';').to_string());
            }
        }
    }
    None
}

fn parse_scalar(text: &str, field: &str) -> Option<f64> {
    let key = format!("mpc.{field}");
    let start = text.find(&key)? + key.len();
    let rest = &text[start..];
    let eq = rest.find('=')?;
    let rest = &rest[eq + 1..];
    let end = rest.find(';').unwrap_or(rest.len());
    rest[..end].trim().parse().ok()
}

fn parse_matrix(text: &str, field: &str) -> Result<Vec<Vec<f64>>> {
    let key = format!("mpc.{field}");
    let missing = || Error::MalformedCase(format!("missing matrix mpc.{field}"));
    let mut pos = 0;
    // avoid matching e.g. `mpc.gencost` when looking for `mpc.gen`
    let start = loop {
        let found = text[pos..].find(&key).ok_or_else(missing)? + pos;
        let after = text[found + key.len()..].trim_start();
        if after.starts_with('=') {
            break found + key.len();
        }
        pos = found + key.len();
    };
    let rest = &text[start..];
    let open = rest.find('[').ok_or_else(missing)?;
    let close = rest[open..]
        .find(']')
        .ok_or_else(|| Error::MalformedCase(format!("unterminated matrix mpc.{field}")))?
        + open;
    let body = &rest[open + 1..close];

    let mut rows = Vec::new();
    for row_text in body.split(';') {
        let row_text = row_text.trim();
        if row_text.is_empty() {
            continue;
        }
        let mut row = Vec::new();
        for tok in row_text.split([' ', '\t', ',']).filter(|t| !t.is_empty()) {
            let v: f64 = tok.parse().map_err(|_| {
                Error::MalformedCase(format!("mpc.{field}: bad numeric token `{tok}`"))
            })?;
            row.push(v);
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::MalformedCase(format!("mpc.{field} is empty")));
    }
    let width = rows[0].len();
    if rows.iter().any(|r| r.len() != width) {
        return Err(Error::MalformedCase(format!(
            "mpc.{field}: ragged rows"
        )));
    }
    Ok(rows)
}

fn expect_cols(what: &str, row: &[f64], min: usize) -> Result<()> {
    if row.len() < min {
        return Err(Error::MalformedCase(format!(
            "{what} row has {} columns, need at least {min}",
            row.len()
        )));
    }
    Ok(())
}
