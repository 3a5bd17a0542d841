//! Game construction from the `[game]` config section.

use std::collections::BTreeMap;

use ppe_core::builders::{self, CustomTables};
use ppe_core::elaborated::coarsen;
use ppe_core::game::{Action, ActionSpace, ReducedGame};

use crate::config::{parse_f64, parse_usize, Entry, GameSection};

/// Input-contract failure (exit code 2).
#[derive(Debug)]
pub struct InputError(pub String);

/// Analytic/parameter violation (exit code 1).
#[derive(Debug)]
pub struct ConstraintError(pub String);

pub enum BuildOutcome {
    Ok(ReducedGame),
    /// The parameters violate the builder's constraints.
    Constraint(String),
}

fn need<'a>(
    params: &'a BTreeMap<String, Entry>,
    builder: &str,
    key: &str,
) -> Result<&'a Entry, InputError> {
    params
        .get(key)
        .ok_or_else(|| InputError(format!("builder {builder} needs key {key}")))
}

fn need_f64(params: &BTreeMap<String, Entry>, builder: &str, key: &str) -> Result<f64, InputError> {
    parse_f64(need(params, builder, key)?).map_err(|e| InputError(e.to_string()))
}

fn reject_extra_keys(params: &BTreeMap<String, Entry>, allowed: &[&str]) -> Result<(), InputError> {
    for (key, entry) in params {
        if !allowed.contains(&key.as_str()) {
            return Err(InputError(format!(
                "config line {}: unknown game key {key}",
                entry.line
            )));
        }
    }
    Ok(())
}

/// Build the reduced game named by the config. Parameter-constraint
/// violations come back as `BuildOutcome::Constraint`, malformed input as
/// `Err`.
pub fn build_game(section: &GameSection, grid: usize) -> Result<BuildOutcome, InputError> {
    let p = &section.params;
    let b = section.builder.as_str();
    let out = match b {
        "modified_pd" => {
            reject_extra_keys(p, &["B", "b", "c", "p", "q", "r"])?;
            builders::make_modified_pd(
                need_f64(p, b, "B")?,
                need_f64(p, b, "b")?,
                need_f64(p, b, "c")?,
                need_f64(p, b, "p")?,
                need_f64(p, b, "q")?,
                need_f64(p, b, "r")?,
            )
        }
        "contest" => {
            reject_extra_keys(p, &["n", "R", "eta", "kappa", "c", "rule", "coarsen"])?;
            let n = parse_usize(need(p, b, "n")?).map_err(|e| InputError(e.to_string()))?;
            let r_prize = need_f64(p, b, "R")?;
            let eta = need_f64(p, b, "eta")?;
            let kappa = need_f64(p, b, "kappa")?;
            let cost = need_f64(p, b, "c")?;
            let rule = match p.get("rule") {
                Some(e) => parse_usize(e).map_err(|e| InputError(e.to_string()))?,
                None => 1,
            };
            match rule {
                1 => builders::make_contest(n, r_prize, eta, kappa, cost, grid),
                2 => {
                    // the finer announcement carries n+1 signals; two-signal
                    // analysis needs an explicit pooling choice
                    match p.get("coarsen").map(|e| e.value.as_str()) {
                        Some("winner") => {
                            match builders::make_contest_rule2(n, r_prize, eta, kappa, cost, grid) {
                                Ok(multi) => {
                                    let (c0, c1, bad) = builders::contest_coarsening(n, eta, kappa);
                                    coarsen(&multi, &c0, &c1, &bad)
                                        .map_err(ppe_core::builders::BuilderError::from)
                                }
                                Err(e) => Err(e),
                            }
                        }
                        Some(other) => {
                            return Err(InputError(format!(
                                "unknown coarsening {other:?}; supported: winner"
                            )))
                        }
                        None => {
                            return Err(InputError(
                                "rule 2 emits more than two signals; two-signal analysis \
                                 requires an explicit `coarsen = winner`"
                                    .to_string(),
                            ))
                        }
                    }
                }
                other => return Err(InputError(format!("rule must be 1 or 2, got {other}"))),
            }
        }
        "mm1_sharing" => {
            reject_extra_keys(p, &["n", "chi", "eps_bar", "p", "d0"])?;
            let n = parse_usize(need(p, b, "n")?).map_err(|e| InputError(e.to_string()))?;
            builders::make_mm1(
                n,
                need_f64(p, b, "chi")?,
                need_f64(p, b, "eps_bar")?,
                need_f64(p, b, "p")?,
                need_f64(p, b, "d0")?,
                grid,
            )
        }
        "table3" => {
            reject_extra_keys(p, &[])?;
            builders::make_table3()
        }
        "custom_matrix" => return build_custom(section).map(BuildOutcome::Ok),
        other => return Err(InputError(format!("unknown builder {other:?}"))),
    };
    match out {
        Ok(game) => Ok(BuildOutcome::Ok(game)),
        Err(builders::BuilderError::ParameterConstraintViolated(msg)) => {
            Ok(BuildOutcome::Constraint(msg))
        }
        Err(e) => Err(InputError(e.to_string())),
    }
}

fn build_custom(section: &GameSection) -> Result<ReducedGame, InputError> {
    let p = &section.params;
    let players =
        parse_usize(need(p, "custom_matrix", "players")?).map_err(|e| InputError(e.to_string()))?;
    let mut allowed: Vec<String> = vec!["players".to_string()];
    for k in 1..=players {
        allowed.push(format!("actions_{k}"));
    }
    let allowed_refs: Vec<&str> = allowed.iter().map(String::as_str).collect();
    reject_extra_keys(p, &allowed_refs)?;

    let mut labels: Vec<Vec<String>> = Vec::with_capacity(players);
    for k in 1..=players {
        let entry = need(p, "custom_matrix", &format!("actions_{k}"))?;
        labels.push(
            entry
                .value
                .split(',')
                .map(|s| s.trim().to_string())
                .collect(),
        );
    }
    let sizes: Vec<usize> = labels.iter().map(Vec::len).collect();
    let total: usize = sizes.iter().product();
    if section.rows.len() != total {
        return Err(InputError(format!(
            "custom_matrix needs {total} row entries (one per joint profile), got {}",
            section.rows.len()
        )));
    }

    // rows may come in any order: profile labels | payoffs | bad probs
    let mut payoffs = vec![Vec::new(); total];
    let mut rho = vec![Vec::new(); total];
    let mut seen = vec![false; total];
    for row in &section.rows {
        let parts: Vec<&str> = row.value.split('|').map(str::trim).collect();
        if parts.len() != 3 {
            return Err(InputError(format!(
                "config line {}: row needs `labels | payoffs | bad probs`",
                row.line
            )));
        }
        let profile: Vec<&str> = parts[0].split(',').map(str::trim).collect();
        if profile.len() != players {
            return Err(InputError(format!(
                "config line {}: profile needs {players} actions",
                row.line
            )));
        }
        let mut flat = 0usize;
        for (k, lab) in profile.iter().enumerate() {
            let idx = labels[k].iter().position(|l| l == lab).ok_or_else(|| {
                InputError(format!(
                    "config line {}: unknown action {lab:?} for player {}",
                    row.line,
                    k + 1
                ))
            })?;
            flat = flat * sizes[k] + idx;
        }
        let nums = |s: &str| -> Result<Vec<f64>, InputError> {
            s.split(',')
                .map(|x| {
                    x.trim().parse::<f64>().map_err(|_| {
                        InputError(format!("config line {}: bad number {x:?}", row.line))
                    })
                })
                .collect()
        };
        let pay = nums(parts[1])?;
        let bad = nums(parts[2])?;
        if pay.len() != players || bad.len() != players {
            return Err(InputError(format!(
                "config line {}: payoffs and bad probs need {players} entries",
                row.line
            )));
        }
        if seen[flat] {
            return Err(InputError(format!(
                "config line {}: duplicate profile row",
                row.line
            )));
        }
        seen[flat] = true;
        payoffs[flat] = pay;
        rho[flat] = bad;
    }
    builders::make_custom(CustomTables {
        labels,
        payoffs,
        rho_bad: rho,
    })
    .map_err(|e| InputError(e.to_string()))
}

/// Parse an action reference for a given space: a finite label or a level.
pub fn parse_action(space: &ActionSpace, text: &str) -> Result<Action, InputError> {
    match space {
        ActionSpace::Finite { labels } => labels
            .iter()
            .position(|l| l == text)
            .map(Action::Index)
            .ok_or_else(|| InputError(format!("unknown action label {text:?}"))),
        ActionSpace::Interval { lower, upper, .. } => {
            let x: f64 = text
                .parse()
                .map_err(|_| InputError(format!("expected a level, got {text:?}")))?;
            if x < *lower || x > *upper {
                return Err(InputError(format!("level {x} outside [{lower}, {upper}]")));
            }
            Ok(Action::Level(x))
        }
    }
}
