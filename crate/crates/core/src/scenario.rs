//! JSON input documents, scenario sweeps and their CSV/JSON output.
//!
//! Model document:
//! `{"nominal": [[..], ..], "directions": [[[..], ..], ..],
//!   "set": {"kind": "inf_ball", "gamma": 1.0}}`.
//! Invariant violations are reported with the line of the offending row.

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use log::info;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::channel::{
    ChannelMatrix, PerturbationSet, RealMatrix, SetKind, UncertaintyModel, ROW_SUM_TOL,
};
use crate::cost::{solve_with_cost, CostConstraint};
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::experiments::{gen_bsc, gen_neighbor_ring, gen_random_power4};
use crate::oracles::{blahut_arimoto, upper_bound_weakly_symmetric};
use crate::solver::{solve, SolverConfig, SolverReport};

#[derive(Clone, Copy, Debug)]
enum Step<'a> {
    Key(&'a str),
    Index(usize),
}

/// Byte cursor over a document already known to be valid JSON.
struct Cursor<'a> {
    b: &'a [u8],
    i: usize,
}

impl Cursor<'_> {
    fn ws(&mut self) {
        while self.i < self.b.len() && self.b[self.i].is_ascii_whitespace() {
            self.i += 1;
        }
    }

    fn peek(&mut self) -> Option<u8> {
        self.ws();
        self.b.get(self.i).copied()
    }

    fn string(&mut self) -> Option<&str> {
        self.ws();
        if self.b.get(self.i) != Some(&b'"') {
            return None;
        }
        let start = self.i + 1;
        self.i = start;
        while self.i < self.b.len() {
            match self.b[self.i] {
                b'\\' => self.i += 2,
                b'"' => {
                    self.i += 1;
                    return std::str::from_utf8(&self.b[start..self.i - 1]).ok();
                }
                _ => self.i += 1,
            }
        }
        None
    }

    fn skip_value(&mut self) -> Option<()> {
        match self.peek()? {
            b'"' => self.string().map(|_| ()),
            open @ (b'[' | b'{') => {
                let close = if open == b'[' { b']' } else { b'}' };
                self.i += 1;
                if self.peek()? == close {
                    self.i += 1;
                    return Some(());
                }
                loop {
                    if open == b'{' {
                        self.string()?;
                        self.peek()?;
                        self.i += 1; // ':'
                    }
                    self.skip_value()?;
                    match self.peek()? {
                        b',' => self.i += 1,
                        c if c == close => {
                            self.i += 1;
                            return Some(());
                        }
                        _ => return None,
                    }
                }
            }
            _ => {
                while self.i < self.b.len() && !b",]} \t\r\n".contains(&self.b[self.i]) {
                    self.i += 1;
                }
                Some(())
            }
        }
    }

    fn descend(&mut self, step: Step<'_>) -> Option<()> {
        match step {
            Step::Key(key) => {
                if self.peek()? != b'{' {
                    return None;
                }
                self.i += 1;
                loop {
                    if self.peek()? == b'}' {
                        return None;
                    }
                    let k = self.string()?.to_owned();
                    self.peek()?;
                    self.i += 1;
                    if k == key {
                        self.ws();
                        return Some(());
                    }
                    self.skip_value()?;
                    if self.peek()? == b',' {
                        self.i += 1;
                    }
                }
            }
            Step::Index(k) => {
                if self.peek()? != b'[' {
                    return None;
                }
                self.i += 1;
                for _ in 0..k {
                    self.skip_value()?;
                    if self.peek()? != b',' {
                        return None;
                    }
                    self.i += 1;
                }
                self.ws();
                Some(())
            }
        }
    }
}

/// 1-based line where the value at `path` starts; the nearest resolvable
/// ancestor when the path does not exist.
fn line_of(text: &str, path: &[Step<'_>]) -> usize {
    let mut cur = Cursor {
        b: text.as_bytes(),
        i: 0,
    };
    let mut pos = 0;
    for &step in path {
        if cur.descend(step).is_none() {
            break;
        }
        pos = cur.i;
    }
    1 + text.as_bytes()[..pos.min(text.len())]
        .iter()
        .filter(|&&c| c == b'\n')
        .count()
}

fn json_error(e: serde_json::Error) -> Error {
    Error::Parse {
        line: e.line(),
        message: e.to_string(),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SetDocument {
    pub kind: SetKind,
    #[serde(default = "unit")]
    pub gamma: f64,
}

fn unit() -> f64 {
    1.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelDocument {
    pub nominal: Vec<Vec<f64>>,
    pub directions: Vec<Vec<Vec<f64>>>,
    pub set: SetDocument,
}

impl ModelDocument {
    pub fn from_model(model: &UncertaintyModel) -> Self {
        Self {
            nominal: model.nominal().to_rows(),
            directions: model.directions().iter().map(RealMatrix::to_rows).collect(),
            set: SetDocument {
                kind: model.set().kind,
                gamma: model.set().scale,
            },
        }
    }
}

fn check_rows(
    text: &str,
    base: &[Step<'_>],
    rows: &[Vec<f64>],
    target: f64,
    nonneg: bool,
    what: &str,
) -> Result<()> {
    let at = |r: usize, message: String| {
        let mut path = base.to_vec();
        path.push(Step::Index(r));
        Error::Parse {
            line: line_of(text, &path),
            message,
        }
    };
    let width = rows.first().map_or(0, Vec::len);
    if rows.is_empty() || width == 0 {
        return Err(Error::Parse {
            line: line_of(text, base),
            message: format!("{what} is empty"),
        });
    }
    for (r, row) in rows.iter().enumerate() {
        if row.len() != width {
            return Err(at(
                r,
                format!("{what} row {r} has {} entries, expected {width}", row.len()),
            ));
        }
        if let Some(c) = row
            .iter()
            .position(|v| !v.is_finite() || (nonneg && *v < 0.0))
        {
            return Err(at(
                r,
                format!("{what} entry [{r}][{c}] = {} is invalid", row[c]),
            ));
        }
        let sum: f64 = row.iter().sum();
        if (sum - target).abs() > ROW_SUM_TOL {
            return Err(at(
                r,
                format!("{what} row {r} sums to {sum}, expected {target}"),
            ));
        }
    }
    Ok(())
}

fn model_from_document(
    text: &str,
    base: &[Step<'_>],
    doc: &ModelDocument,
) -> Result<UncertaintyModel> {
    let mut nominal_path = base.to_vec();
    nominal_path.push(Step::Key("nominal"));
    check_rows(text, &nominal_path, &doc.nominal, 1.0, true, "nominal")?;
    let mut dirs_path = base.to_vec();
    dirs_path.push(Step::Key("directions"));
    if doc.directions.is_empty() {
        return Err(Error::Parse {
            line: line_of(text, &dirs_path),
            message: "at least one direction matrix is required".into(),
        });
    }
    let shape = (doc.nominal.len(), doc.nominal[0].len());
    let mut directions = Vec::with_capacity(doc.directions.len());
    for (s, d) in doc.directions.iter().enumerate() {
        let mut path = dirs_path.clone();
        path.push(Step::Index(s));
        if d.len() != shape.0 || d.iter().any(|r| r.len() != shape.1) {
            return Err(Error::Parse {
                line: line_of(text, &path),
                message: format!("direction {s} is not {}x{}", shape.0, shape.1),
            });
        }
        check_rows(text, &path, d, 0.0, false, &format!("direction {s}"))?;
        directions.push(RealMatrix::from_rows(d)?);
    }
    let mut set_path = base.to_vec();
    set_path.push(Step::Key("set"));
    let set_line = line_of(text, &set_path);
    if !(0.0..=1.0).contains(&doc.set.gamma) {
        return Err(Error::Parse {
            line: set_line,
            message: format!("set gamma must lie in [0, 1], got {}", doc.set.gamma),
        });
    }
    let nominal = ChannelMatrix::from_rows(doc.nominal.clone()).map_err(|e| Error::Parse {
        line: line_of(text, &nominal_path),
        message: e.to_string(),
    })?;
    let set = PerturbationSet::new(doc.set.kind, directions.len()).with_scale(doc.set.gamma);
    UncertaintyModel::new(nominal, directions, set).map_err(|e| Error::Parse {
        line: set_line,
        message: e.to_string(),
    })
}

/// Parses an uncertainty-model document.
pub fn parse_model(text: &str) -> Result<UncertaintyModel> {
    let doc: ModelDocument = serde_json::from_str(text).map_err(json_error)?;
    model_from_document(text, &[], &doc)
}

/// Parses a channel: a bare array of rows, `{"channel": rows}`, or a model
/// document whose nominal channel is taken.
pub fn parse_channel(text: &str) -> Result<ChannelMatrix> {
    let value: Value = serde_json::from_str(text).map_err(json_error)?;
    let path: Vec<Step<'_>> = match &value {
        Value::Array(_) => vec![],
        Value::Object(m) if m.contains_key("channel") => vec![Step::Key("channel")],
        Value::Object(m) if m.contains_key("nominal") => vec![Step::Key("nominal")],
        _ => {
            return Err(Error::Parse {
                line: 1,
                message: "expected an array of rows or an object with a \"channel\" field".into(),
            })
        }
    };
    let node = path.iter().fold(&value, |v, s| match s {
        Step::Key(k) => &v[*k],
        Step::Index(i) => &v[*i],
    });
    let rows: Vec<Vec<f64>> = serde_json::from_value(node.clone()).map_err(|e| Error::Parse {
        line: line_of(text, &path),
        message: e.to_string(),
    })?;
    check_rows(text, &path, &rows, 1.0, true, "channel")?;
    ChannelMatrix::from_rows(rows)
}

#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(tag = "generator", rename_all = "snake_case", deny_unknown_fields)]
pub enum ModelSpec {
    BscInterval {
        beta_lo: f64,
        beta_hi: f64,
    },
    RandomPower4 {
        n: usize,
        m: usize,
        s: usize,
        #[serde(default = "unit")]
        gamma: f64,
    },
    NeighborRing {
        n: usize,
        w: usize,
    },
    Inline {
        model: ModelDocument,
    },
    /// model document path, relative to the scenario file
    File {
        path: PathBuf,
    },
}

#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(untagged)]
pub enum CostSpec {
    Explicit {
        a: Vec<f64>,
        b: f64,
    },
    /// `"generated"`: the cost vector produced by the generator
    Named(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepParam {
    Gamma,
    W,
    BetaLo,
    BetaHi,
}

#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sweep {
    pub param: SweepParam,
    pub values: Vec<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSpec {
    pub dir: Option<PathBuf>,
    pub prefix: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    #[serde(default)]
    pub name: Option<String>,
    pub model: ModelSpec,
    #[serde(default)]
    pub cost: Option<CostSpec>,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub sweep: Option<Sweep>,
    /// generator seed
    #[serde(default)]
    pub seed: u64,
    /// worker threads for sweeps; defaults to the hardware threads
    #[serde(default)]
    pub threads: Option<usize>,
    #[serde(default)]
    pub output: OutputSpec,
    #[serde(skip)]
    text: String,
    #[serde(skip)]
    base_dir: PathBuf,
}

/// One instance of a scenario, ready to solve.
#[derive(Clone, Debug)]
pub struct PointSpec {
    pub index: usize,
    pub sweep_param: Option<f64>,
    pub model: UncertaintyModel,
    pub cost: Option<CostConstraint>,
}

impl Scenario {
    /// `base_dir` resolves relative model paths.
    pub fn parse(text: &str, base_dir: impl Into<PathBuf>) -> Result<Self> {
        let mut sc: Scenario = serde_json::from_str(text).map_err(json_error)?;
        sc.text = text.to_owned();
        sc.base_dir = base_dir.into();
        let line = line_of(text, &[Step::Key("solver")]);
        sc.solver.validate().map_err(|e| Error::Parse {
            line,
            message: e.to_string(),
        })?;
        if let Some(sw) = &sc.sweep {
            if sw.values.is_empty() {
                return Err(Error::Parse {
                    line: line_of(text, &[Step::Key("sweep")]),
                    message: "sweep has no values".into(),
                });
            }
        }
        Ok(sc)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        Self::parse(&text, path.parent().unwrap_or(Path::new(".")))
    }

    pub fn display_name(&self) -> &str {
        self.name.as_deref().unwrap_or("scenario")
    }

    fn base_instance(&self) -> Result<(UncertaintyModel, Option<CostConstraint>)> {
        let (model, generated) = match &self.model {
            ModelSpec::BscInterval { beta_lo, beta_hi } => (gen_bsc(*beta_lo, *beta_hi)?, None),
            ModelSpec::RandomPower4 { n, m, s, gamma } => {
                let (u, c) = gen_random_power4(*n, *m, *s, *gamma, self.seed)?;
                (u, Some(c))
            }
            ModelSpec::NeighborRing { n, w } => (gen_neighbor_ring(*n, *w)?, None),
            ModelSpec::Inline { model } => (
                model_from_document(&self.text, &[Step::Key("model"), Step::Key("model")], model)?,
                None,
            ),
            ModelSpec::File { path } => {
                let full = self.base_dir.join(path);
                let text = fs::read_to_string(&full)?;
                (parse_model(&text)?, None)
            }
        };
        let line = || line_of(&self.text, &[Step::Key("cost")]);
        let cost = match &self.cost {
            None => None,
            Some(CostSpec::Explicit { a, b }) => Some(CostConstraint::new(a.clone(), *b).map_err(
                |e| Error::Parse {
                    line: line(),
                    message: e.to_string(),
                },
            )?),
            Some(CostSpec::Named(n)) if n == "generated" => match generated {
                Some(c) => Some(c),
                None => {
                    return Err(Error::Parse {
                        line: line(),
                        message: "this generator does not produce a cost vector".into(),
                    })
                }
            },
            Some(CostSpec::Named(n)) => {
                return Err(Error::Parse {
                    line: line(),
                    message: format!("unknown cost \"{n}\""),
                })
            }
        };
        Ok((model, cost))
    }

    /// Every sweep point shares the instance drawn from the scenario seed;
    /// only the swept parameter changes.
    pub fn points(&self) -> Result<Vec<PointSpec>> {
        let (model, cost) = self.base_instance()?;
        let Some(sweep) = &self.sweep else {
            return Ok(vec![PointSpec {
                index: 0,
                sweep_param: None,
                model,
                cost,
            }]);
        };
        let line = line_of(&self.text, &[Step::Key("sweep")]);
        let bad = |message: String| Error::Parse { line, message };
        sweep
            .values
            .iter()
            .enumerate()
            .map(|(index, &v)| {
                let model = match (sweep.param, &self.model) {
                    (SweepParam::Gamma, _) => {
                        model.with_scale(v).map_err(|e| bad(e.to_string()))?
                    }
                    (SweepParam::W, ModelSpec::NeighborRing { n, .. }) => {
                        if v < 0.0 || v.fract() != 0.0 {
                            return Err(bad(format!("W must be a nonnegative integer, got {v}")));
                        }
                        gen_neighbor_ring(*n, v as usize).map_err(|e| bad(e.to_string()))?
                    }
                    (SweepParam::BetaLo, ModelSpec::BscInterval { beta_hi, .. }) => {
                        gen_bsc(v, *beta_hi).map_err(|e| bad(e.to_string()))?
                    }
                    (SweepParam::BetaHi, ModelSpec::BscInterval { beta_lo, .. }) => {
                        gen_bsc(*beta_lo, v).map_err(|e| bad(e.to_string()))?
                    }
                    (p, _) => {
                        return Err(bad(format!("parameter {p:?} does not apply to this model")))
                    }
                };
                Ok(PointSpec {
                    index,
                    sweep_param: Some(v),
                    model,
                    cost: cost.clone(),
                })
            })
            .collect()
    }

    pub fn execution(&self) -> Execution {
        match self.threads {
            Some(1) => Execution::Sequential,
            threads => Execution::Parallel { threads },
        }
    }
}

/// Outcome of one scenario point.
#[derive(Clone, Debug, Serialize)]
pub struct PointResult {
    pub index: usize,
    pub sweep_param: Option<f64>,
    pub seed: u64,
    pub robust_capacity: f64,
    pub nominal_capacity: f64,
    /// smaller of the solver's upper leg and the weak-symmetry bound at the
    /// worst channel found
    pub upper_bound: f64,
    pub gap: f64,
    pub iterations: usize,
    pub wall_ms: f64,
    pub constrained_capacity: Option<f64>,
    pub lambda_star: Option<f64>,
    pub report: SolverReport,
    pub constrained_report: Option<SolverReport>,
}

pub fn run_point(point: &PointSpec, cfg: &SolverConfig, seed: u64) -> Result<PointResult> {
    let start = Instant::now();
    let report = solve(&point.model, cfg)?;
    let nominal = blahut_arimoto(point.model.nominal(), 1e-9)?.capacity;
    let worst = point.model.assemble(&report.worst_xi)?;
    let upper_bound = report.upper_bound.min(upper_bound_weakly_symmetric(&worst));
    let constrained_report = match &point.cost {
        Some(c) => Some(solve_with_cost(&point.model, c, cfg)?),
        None => None,
    };
    let wall_ms = start.elapsed().as_secs_f64() * 1e3;
    info!(
        "point {}: robust {:.6} nats, gap {:.2e}, {} iterations, {:.0} ms",
        point.index, report.robust_capacity, report.best_gap, report.iterations, wall_ms
    );
    Ok(PointResult {
        index: point.index,
        sweep_param: point.sweep_param,
        seed,
        robust_capacity: report.robust_capacity,
        nominal_capacity: nominal,
        upper_bound,
        gap: report.best_gap,
        iterations: report.iterations,
        wall_ms,
        constrained_capacity: constrained_report.as_ref().map(|r| r.robust_capacity),
        lambda_star: constrained_report.as_ref().and_then(|r| r.lambda_star),
        report,
        constrained_report,
    })
}

/// Solves every point; results are ordered by sweep index.
pub fn run_scenario(sc: &Scenario, exec: Execution) -> Result<Vec<PointResult>> {
    let points = sc.points()?;
    exec.map(&points, |_, p| run_point(p, &sc.solver, sc.seed))
        .into_iter()
        .collect()
}

const LN2: f64 = std::f64::consts::LN_2;

/// CSV of the results; `bits` converts every information quantity.
pub fn write_csv<W: std::io::Write>(results: &[PointResult], out: W, bits: bool) -> Result<()> {
    let unit = if bits { "bits" } else { "nats" };
    let k = if bits { 1.0 / LN2 } else { 1.0 };
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "sweep_param".to_owned(),
        format!("robust_capacity_{unit}"),
        format!("nominal_capacity_{unit}"),
        "upper_bound".to_owned(),
        "gap".to_owned(),
        "iterations".to_owned(),
        "wall_ms".to_owned(),
        "seed".to_owned(),
        format!("constrained_robust_capacity_{unit}"),
        "lambda_star".to_owned(),
    ])?;
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    for r in results {
        w.write_record([
            opt(r.sweep_param),
            (r.robust_capacity * k).to_string(),
            (r.nominal_capacity * k).to_string(),
            (r.upper_bound * k).to_string(),
            (r.gap * k).to_string(),
            r.iterations.to_string(),
            format!("{:.3}", r.wall_ms),
            r.seed.to_string(),
            opt(r.constrained_capacity.map(|v| v * k)),
            opt(r.lambda_star),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Writes `<prefix>.csv` and one `<prefix>_<index>.json` report per point.
pub fn write_outputs(
    results: &[PointResult],
    dir: &Path,
    prefix: &str,
    bits: bool,
) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let csv_path = dir.join(format!("{prefix}.csv"));
    write_csv(results, fs::File::create(&csv_path)?, bits)?;
    let mut written = vec![csv_path];
    for r in results {
        let path = dir.join(format!("{prefix}_{}.json", r.index));
        let mut f = fs::File::create(&path)?;
        serde_json::to_writer_pretty(&mut f, r).map_err(|e| Error::Io(e.into()))?;
        writeln!(f)?;
        written.push(path);
    }
    Ok(written)
}
