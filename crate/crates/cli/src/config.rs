//! Run configuration: INI-style sections with `key = value` lines, UTF-8,
//! `#` comments. Unknown sections and keys are rejected with line numbers.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

#[derive(Debug)]
pub struct ParseError {
    pub line: usize,
    pub message: String,
}

impl fmt::Display for ParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "config line {}: {}", self.line, self.message)
    }
}

impl std::error::Error for ParseError {}

fn err(line: usize, message: impl Into<String>) -> ParseError {
    ParseError {
        line,
        message: message.into(),
    }
}

/// A raw `key = value` occurrence.
#[derive(Debug, Clone)]
pub struct Entry {
    pub value: String,
    pub line: usize,
}

#[derive(Debug, Clone, Default)]
pub struct GameSection {
    pub builder: String,
    pub builder_line: usize,
    pub params: BTreeMap<String, Entry>,
    /// Repeated `row = ...` payload for table games, in file order.
    pub rows: Vec<Entry>,
}

#[derive(Debug, Clone)]
pub struct AnalysisSection {
    pub mu: Option<Vec<f64>>,
    pub delta: Option<f64>,
    pub grid: usize,
    pub cover: usize,
    pub strict_support: bool,
    pub v0: Option<Vec<f64>>,
}

impl Default for AnalysisSection {
    fn default() -> Self {
        AnalysisSection {
            mu: None,
            delta: None,
            grid: 1001,
            cover: 201,
            strict_support: false,
            v0: None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SimulationSection {
    pub episodes: u64,
    pub horizon: usize,
    pub seed: u64,
    pub deviator: Option<usize>,
    pub deviation: Option<String>,
}

impl Default for SimulationSection {
    fn default() -> Self {
        SimulationSection {
            episodes: 10_000,
            horizon: 120,
            seed: 0,
            deviator: None,
            deviation: None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SweepSection {
    pub parameter: String,
    pub from: f64,
    pub to: f64,
    pub steps: usize,
}

#[derive(Debug, Clone, Default)]
pub struct RunConfig {
    pub game: GameSection,
    pub analysis: AnalysisSection,
    pub simulation: SimulationSection,
    pub sweep: Option<SweepSection>,
}

impl Default for SweepSection {
    fn default() -> Self {
        SweepSection {
            parameter: String::new(),
            from: 0.0,
            to: 0.0,
            steps: 0,
        }
    }
}

pub fn load(path: &Path) -> Result<RunConfig, ParseError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| err(0, format!("cannot read {}: {e}", path.display())))?;
    parse(&text)
}

pub fn parse(text: &str) -> Result<RunConfig, ParseError> {
    let mut section = String::new();
    let mut game = GameSection::default();
    let mut analysis_raw: BTreeMap<String, Entry> = BTreeMap::new();
    let mut simulation_raw: BTreeMap<String, Entry> = BTreeMap::new();
    let mut sweep_raw: BTreeMap<String, Entry> = BTreeMap::new();
    let mut saw_sweep = false;

    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = match raw.find('#') {
            Some(k) => &raw[..k],
            None => raw,
        }
        .trim();
        if line.is_empty() {
            continue;
        }
        if let Some(name) = line.strip_prefix('[') {
            let name = name
                .strip_suffix(']')
                .ok_or_else(|| err(line_no, "unterminated section header"))?
                .trim()
                .to_string();
            match name.as_str() {
                "game" | "analysis" | "simulation" | "sweep" => {
                    if name == "sweep" {
                        saw_sweep = true;
                    }
                    section = name;
                }
                other => return Err(err(line_no, format!("unknown section [{other}]"))),
            }
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| err(line_no, format!("expected key = value, got {line:?}")))?;
        let key = key.trim().to_string();
        let entry = Entry {
            value: value.trim().to_string(),
            line: line_no,
        };
        match section.as_str() {
            "game" => {
                if key == "builder" {
                    game.builder = entry.value;
                    game.builder_line = line_no;
                } else if key == "row" {
                    game.rows.push(entry);
                } else if game.params.insert(key.clone(), entry).is_some() {
                    return Err(err(line_no, format!("duplicate key {key}")));
                }
            }
            "analysis" => {
                if analysis_raw.insert(key.clone(), entry).is_some() {
                    return Err(err(line_no, format!("duplicate key {key}")));
                }
            }
            "simulation" => {
                if simulation_raw.insert(key.clone(), entry).is_some() {
                    return Err(err(line_no, format!("duplicate key {key}")));
                }
            }
            "sweep" => {
                if sweep_raw.insert(key.clone(), entry).is_some() {
                    return Err(err(line_no, format!("duplicate key {key}")));
                }
            }
            _ => return Err(err(line_no, "key before any [section]")),
        }
    }

    let mut analysis = AnalysisSection::default();
    for (key, entry) in &analysis_raw {
        match key.as_str() {
            "mu" => analysis.mu = Some(parse_vec(entry)?),
            "v0" => analysis.v0 = Some(parse_vec(entry)?),
            "delta" => {
                let d = parse_f64(entry)?;
                if !(0.0 < d && d < 1.0) {
                    return Err(err(entry.line, format!("delta must lie in (0,1), got {d}")));
                }
                analysis.delta = Some(d);
            }
            "grid" => {
                analysis.grid = parse_usize(entry)?;
                if analysis.grid < 2 {
                    return Err(err(entry.line, "grid must be at least 2"));
                }
            }
            "cover" => analysis.cover = parse_usize(entry)?.max(2),
            "strict_support" => analysis.strict_support = parse_bool(entry)?,
            other => return Err(err(entry.line, format!("unknown analysis key {other}"))),
        }
    }

    let mut simulation = SimulationSection::default();
    for (key, entry) in &simulation_raw {
        match key.as_str() {
            "episodes" => simulation.episodes = parse_usize(entry)? as u64,
            "horizon" => simulation.horizon = parse_usize(entry)?,
            "seed" => simulation.seed = parse_usize(entry)? as u64,
            "deviator" => {
                let k = parse_usize(entry)?;
                if k == 0 {
                    return Err(err(entry.line, "deviator is 1-based"));
                }
                simulation.deviator = Some(k - 1);
            }
            "deviation" => simulation.deviation = Some(entry.value.clone()),
            other => return Err(err(entry.line, format!("unknown simulation key {other}"))),
        }
    }

    let sweep = if saw_sweep {
        let mut sw = SweepSection::default();
        for (key, entry) in &sweep_raw {
            match key.as_str() {
                "parameter" => sw.parameter = entry.value.clone(),
                "from" => sw.from = parse_f64(entry)?,
                "to" => sw.to = parse_f64(entry)?,
                "steps" => sw.steps = parse_usize(entry)?,
                other => return Err(err(entry.line, format!("unknown sweep key {other}"))),
            }
        }
        if sw.parameter.is_empty() {
            return Err(err(0, "sweep section needs a parameter"));
        }
        if sw.steps < 2 {
            return Err(err(0, "sweep needs at least 2 steps"));
        }
        Some(sw)
    } else {
        None
    };

    if game.builder.is_empty() {
        return Err(err(0, "missing [game] builder"));
    }

    Ok(RunConfig {
        game,
        analysis,
        simulation,
        sweep,
    })
}

pub fn parse_f64(entry: &Entry) -> Result<f64, ParseError> {
    if entry.value == "inf" {
        return Ok(f64::INFINITY);
    }
    entry.value.parse::<f64>().map_err(|_| {
        err(
            entry.line,
            format!("expected a number, got {:?}", entry.value),
        )
    })
}

pub fn parse_usize(entry: &Entry) -> Result<usize, ParseError> {
    entry.value.parse::<usize>().map_err(|_| {
        err(
            entry.line,
            format!("expected an integer, got {:?}", entry.value),
        )
    })
}

fn parse_bool(entry: &Entry) -> Result<bool, ParseError> {
    match entry.value.as_str() {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        other => Err(err(
            entry.line,
            format!("expected a boolean, got {other:?}"),
        )),
    }
}

fn parse_vec(entry: &Entry) -> Result<Vec<f64>, ParseError> {
    entry
        .value
        .split(',')
        .map(|s| {
            s.trim().parse::<f64>().map_err(|_| {
                err(
                    entry.line,
                    format!("expected numbers, got {:?}", entry.value),
                )
            })
        })
        .collect()
}
