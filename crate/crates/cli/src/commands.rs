use std::fs;
use std::path::PathBuf;

use clap::Args;
use gridimage::bounds::{best_bound, BoundReport};
use gridimage::explorer::{
    conjecture_gap_report, exhaustive_min_image_resumable, family_count, random_search,
    ConjectureOptions, ConjectureReport, ExtremalRecord, SearchConfig, SearchMode, SummaryRow,
    DEFAULT_RESTART_STEPS, EXH_CAP,
};
use gridimage::image::{image_with, star_image_fast_with, ImageOptions, DEFAULT_CELL_CAP};
use gridimage::linmap::normalize;
use gridimage::parse::{parse_grid_file, parse_inline_grid, parse_matrix_literal, parse_sizes};
use gridimage::verify::{run_suite, Suite, SuiteReport, VerifyOptions, DEFAULT_SEED};
use gridimage::{GridFamily, ImageSet, MatrixFp, NormalizationResult, PrimeModulus, Transform};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::error::{CliError, EXIT_FAILED, EXIT_OK, EXIT_OUT_OF_SCOPE};
use crate::manifest::Inputs;

pub const CELL_CAP_ENV: &str = "GRIDIMAGE_CELL_CAP";

const SUMMARY_HEADER: &[&str] = &[
    "p",
    "shape",
    "theorem",
    "bound",
    "min_found",
    "interval_value",
    "tight",
    "seed",
    "iterations",
];

/// What a command produced: the JSON result, its CSV rendering, and the exit code.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Computed {
    pub result: Value,
    pub csv: String,
    pub exit: i32,
}

pub struct Prepared {
    pub command: &'static str,
    pub config: Value,
    pub seed: Option<u64>,
    pub inputs: Inputs,
    /// Whether results may be served from the cache directory.
    pub cacheable: bool,
    pub run: Box<dyn FnOnce() -> Result<Computed, CliError>>,
}

#[derive(Debug, Clone, Copy)]
pub struct Runtime {
    pub workers: usize,
    pub max_points: u64,
    pub cell_cap: u64,
}

pub fn cell_cap_from_env() -> Result<u64, CliError> {
    match std::env::var(CELL_CAP_ENV) {
        Ok(v) => v.trim().parse().ok().filter(|&c| c > 0).ok_or_else(|| {
            CliError::usage(format!(
                "{CELL_CAP_ENV}: expected a positive integer, got '{v}'"
            ))
        }),
        Err(_) => Ok(DEFAULT_CELL_CAP),
    }
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct MapArgs {
    /// Matrix literal, e.g. "p=5; [[2,1,0],[1,0,1]]".
    #[arg(long, conflicts_with = "star", required_unless_present = "star")]
    pub matrix: Option<String>,
    /// Star map (x_1 + x_n, ..., x_{n-1} + x_n) on n coordinates.
    #[arg(long, value_name = "N")]
    pub star: Option<usize>,
    /// Prime modulus (required with --star).
    #[arg(long)]
    pub p: Option<u32>,
}

impl MapArgs {
    fn resolve(&self, inputs: &mut Inputs) -> Result<MatrixFp, CliError> {
        if let Some(text) = &self.matrix {
            inputs.record("matrix", text);
            let map =
                parse_matrix_literal(text).map_err(|e| CliError::input("--matrix", text, e))?;
            if let Some(p) = self.p.filter(|&p| p != map.modulus().get()) {
                return Err(CliError::usage(format!(
                    "--p {p} disagrees with the matrix modulus {}",
                    map.modulus()
                )));
            }
            return Ok(map);
        }
        let n = self.star.expect("clap enforces --matrix or --star");
        let p = modulus(self.p.ok_or_else(|| CliError::usage("--star needs --p"))?)?;
        if n < 2 {
            return Err(CliError::usage("--star needs at least 2 coordinates"));
        }
        Ok(MatrixFp::star(p, n))
    }
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct GridArgs {
    /// Grid file: "p = 7" then "A1 = {0,1,3}" lines; '#' starts a comment.
    #[arg(long, conflicts_with = "sets", required_unless_present = "sets")]
    pub grid: Option<PathBuf>,
    /// Inline sets separated by ';', e.g. "{0,1}; {0,2}".
    #[arg(long)]
    pub sets: Option<String>,
}

impl GridArgs {
    fn resolve(&self, p: PrimeModulus, inputs: &mut Inputs) -> Result<GridFamily, CliError> {
        let grid = if let Some(path) = &self.grid {
            let text = fs::read_to_string(path)
                .map_err(|e| CliError::usage(format!("{}: {e}", path.display())))?;
            inputs.record("grid", &text);
            let grid = parse_grid_file(&text)
                .map_err(|e| CliError::input(&path.display().to_string(), &text, e))?;
            if grid.modulus() != p {
                return Err(CliError::usage(format!(
                    "{}: grid modulus {} disagrees with the map modulus {p}",
                    path.display(),
                    grid.modulus()
                )));
            }
            grid
        } else {
            let text = self
                .sets
                .as_deref()
                .expect("clap enforces --grid or --sets");
            inputs.record("sets", text);
            parse_inline_grid(text, p).map_err(|e| CliError::input("--sets", text, e))?
        };
        Ok(grid)
    }
}

fn modulus(p: u32) -> Result<PrimeModulus, CliError> {
    PrimeModulus::new(p).map_err(|e| CliError::usage(format!("--p: {e}")))
}

fn sizes(text: &str, inputs: &mut Inputs) -> Result<Vec<usize>, CliError> {
    inputs.record("sizes", text);
    parse_sizes(text).map_err(|e| CliError::input("--sizes", text, e))
}

fn config_of(args: &impl Serialize, rt: &Runtime) -> Value {
    let mut v = serde_json::to_value(args).expect("serializable");
    v["cell_cap"] = json!(rt.cell_cap);
    v
}

fn csv_table<T: Serialize>(header: &[&str], rows: impl IntoIterator<Item = T>) -> String {
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_writer(Vec::new());
    w.write_record(header).expect("in-memory csv");
    for row in rows {
        w.serialize(row).expect("in-memory csv");
    }
    String::from_utf8(w.into_inner().expect("in-memory csv")).expect("utf8")
}

fn to_value(v: &impl Serialize) -> Value {
    serde_json::to_value(v).expect("serializable")
}

fn image_of(map: &MatrixFp, grid: &GridFamily, opts: &ImageOptions) -> gridimage::Result<ImageSet> {
    if map.is_star() {
        star_image_fast_with(grid, opts)
    } else {
        image_with(map, grid, opts)
    }
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct BoundArgs {
    #[command(flatten)]
    pub map: MapArgs,
    /// Set sizes, e.g. 2,2,2.
    #[arg(long)]
    pub sizes: String,
}

#[derive(Serialize)]
struct BoundRow<'a> {
    selected: bool,
    theorem: String,
    applicable: bool,
    value: Option<u64>,
    reason: &'a str,
}

pub fn bound(args: BoundArgs, rt: Runtime) -> Result<Prepared, CliError> {
    let mut inputs = Inputs::default();
    let map = args.map.resolve(&mut inputs)?;
    let sizes = sizes(&args.sizes, &mut inputs)?;
    Ok(Prepared {
        command: "bound",
        config: config_of(&args, &rt),
        seed: None,
        inputs,
        cacheable: false,
        run: Box::new(move || {
            let report = best_bound(&map, &sizes)?;
            let rows = report.candidates.iter().map(|c| BoundRow {
                selected: c.applicable && c.theorem == report.theorem && c.value == report.value,
                theorem: format!("{:?}", c.theorem),
                applicable: c.applicable,
                value: c.value,
                reason: &c.reason,
            });
            Ok(Computed {
                csv: csv_table(
                    &["selected", "theorem", "applicable", "value", "reason"],
                    rows,
                ),
                exit: if report.applicable {
                    EXIT_OK
                } else {
                    EXIT_OUT_OF_SCOPE
                },
                result: to_value(&report),
            })
        }),
    })
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct ImageArgs {
    #[command(flatten)]
    pub map: MapArgs,
    #[command(flatten)]
    pub grid: GridArgs,
    /// Include the image points (up to --max-points).
    #[arg(long)]
    pub points: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImageReport {
    pub map: MatrixFp,
    pub grid: GridFamily,
    pub size: u64,
    pub cells: u64,
    pub full: bool,
    pub image: Option<ImageSet>,
    /// Points were requested but the image exceeds --max-points.
    pub points_omitted: bool,
}

pub fn image(args: ImageArgs, rt: Runtime) -> Result<Prepared, CliError> {
    let mut inputs = Inputs::default();
    let map = args.map.resolve(&mut inputs)?;
    let grid = args.grid.resolve(map.modulus(), &mut inputs)?;
    let mut config = config_of(&args, &rt);
    config["max_points"] = json!(rt.max_points);
    Ok(Prepared {
        command: "image",
        config,
        seed: None,
        inputs,
        cacheable: false,
        run: Box::new(move || {
            let opts = ImageOptions {
                cell_cap: rt.cell_cap,
                workers: rt.workers,
            };
            let set = image_of(&map, &grid, &opts)?;
            let omit = set.size() > rt.max_points;
            let report = ImageReport {
                size: set.size(),
                cells: set.cells(),
                full: set.is_full(),
                points_omitted: args.points && omit,
                image: (args.points && !omit).then_some(set),
                map,
                grid,
            };
            Ok(Computed {
                csv: csv_table(
                    &["p", "m", "size", "cells", "full"],
                    [ImageRow {
                        p: report.map.modulus().get(),
                        m: report.map.rows(),
                        size: report.size,
                        cells: report.cells,
                        full: report.full,
                    }],
                ),
                exit: EXIT_OK,
                result: to_value(&report),
            })
        }),
    })
}

#[derive(Serialize)]
struct ImageRow {
    p: u32,
    m: usize,
    size: u64,
    cells: u64,
    full: bool,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct NormalizeArgs {
    #[command(flatten)]
    pub map: MapArgs,
    #[command(flatten)]
    pub grid: GridArgs,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NormalizeReport {
    #[serde(flatten)]
    pub normalization: NormalizationResult,
    pub kernel_witness: Vec<u32>,
    pub image_before: u64,
    pub image_after: u64,
    pub sizes_match: bool,
}

#[derive(Serialize)]
struct StepRow {
    step: usize,
    op: String,
}

pub fn normalize_cmd(args: NormalizeArgs, rt: Runtime) -> Result<Prepared, CliError> {
    let mut inputs = Inputs::default();
    let map = args.map.resolve(&mut inputs)?;
    let grid = args.grid.resolve(map.modulus(), &mut inputs)?;
    Ok(Prepared {
        command: "normalize",
        config: config_of(&args, &rt),
        seed: None,
        inputs,
        cacheable: false,
        run: Box::new(move || {
            let result = normalize(&map, &grid)?;
            let opts = ImageOptions {
                cell_cap: rt.cell_cap,
                workers: rt.workers,
            };
            let before = image_of(&map, &grid, &opts)?.size();
            let after = image_of(&result.canonical, &result.transformed_grid, &opts)?.size();
            let steps =
                result
                    .transcript
                    .iter()
                    .enumerate()
                    .map(|(step, t): (usize, &Transform)| StepRow {
                        step,
                        op: serde_json::to_string(t).expect("serializable"),
                    });
            let csv = csv_table(&["step", "op"], steps);
            let report = NormalizeReport {
                kernel_witness: result.kernel_witness(),
                normalization: result,
                image_before: before,
                image_after: after,
                sizes_match: before == after,
            };
            Ok(Computed {
                csv,
                exit: if report.sizes_match {
                    EXIT_OK
                } else {
                    EXIT_FAILED
                },
                result: to_value(&report),
            })
        }),
    })
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct VerifyArgs {
    /// Suite name, or "all".
    pub suite: String,
    /// Seed for the randomized suites.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifyReport {
    pub passed: bool,
    pub suites: Vec<SuiteReport>,
}

#[derive(Serialize)]
struct CheckRow<'a> {
    suite: String,
    check: &'a str,
    cases: u64,
    failures: u64,
    passed: bool,
    elapsed_ms: String,
}

pub fn verify(args: VerifyArgs, rt: Runtime) -> Result<Prepared, CliError> {
    let suites: Vec<Suite> = if args.suite == "all" {
        Suite::ALL.to_vec()
    } else {
        vec![args.suite.parse().map_err(CliError::usage)?]
    };
    let seed = args.seed.unwrap_or(DEFAULT_SEED);
    Ok(Prepared {
        command: "verify",
        config: config_of(&args, &rt),
        seed: Some(seed),
        inputs: Inputs::default(),
        cacheable: false,
        run: Box::new(move || {
            let opts = VerifyOptions {
                seed,
                workers: rt.workers,
            };
            let reports = suites
                .into_iter()
                .map(|s| run_suite(s, &opts))
                .collect::<gridimage::Result<Vec<_>>>()?;
            let report = VerifyReport {
                passed: reports.iter().all(SuiteReport::passed),
                suites: reports,
            };
            let rows = report.suites.iter().flat_map(|s| {
                s.checks.iter().map(|c| CheckRow {
                    suite: s.suite.to_string(),
                    check: &c.name,
                    cases: c.cases,
                    failures: c.failures,
                    passed: c.passed(),
                    elapsed_ms: format!("{:.1}", s.elapsed_ms),
                })
            });
            Ok(Computed {
                csv: csv_table(
                    &[
                        "suite",
                        "check",
                        "cases",
                        "failures",
                        "passed",
                        "elapsed_ms",
                    ],
                    rows,
                ),
                exit: if report.passed { EXIT_OK } else { EXIT_FAILED },
                result: to_value(&report),
            })
        }),
    })
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SearchArgs {
    #[command(flatten)]
    pub map: MapArgs,
    /// Set sizes, e.g. 2,2,2.
    #[arg(long)]
    pub sizes: String,
    /// Enumerate every grid instead of random hill descent.
    #[arg(long)]
    pub exhaustive: bool,
    /// Seed; required for random search.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Total evaluations for random search.
    #[arg(long, default_value_t = 10_000)]
    pub iterations: u64,
    /// Evaluations per hill-descent chain.
    #[arg(long, default_value_t = DEFAULT_RESTART_STEPS)]
    pub restart_steps: u64,
    /// Refuse exhaustive runs over more grid families than this.
    #[arg(long, default_value_t = EXH_CAP)]
    pub exhaustive_cap: u64,
    /// Checkpoint file for resumable exhaustive runs.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SearchReport {
    pub config: SearchConfig,
    pub map: MatrixFp,
    /// Grid families of this shape (saturating).
    pub family_count: u64,
    pub bound: BoundReport,
    /// Image size on the interval grid of this shape.
    pub interval_value: Option<u64>,
    pub record: ExtremalRecord,
}

pub fn search(args: SearchArgs, rt: Runtime) -> Result<Prepared, CliError> {
    let mut inputs = Inputs::default();
    let map = args.map.resolve(&mut inputs)?;
    let shape = sizes(&args.sizes, &mut inputs)?;
    let p = map.modulus();
    let mut config = if args.exhaustive {
        SearchConfig::exhaustive(p, shape)
    } else {
        let seed = args.seed.ok_or_else(|| {
            CliError::usage("random search needs an explicit --seed (or pass --exhaustive)")
        })?;
        SearchConfig::random(p, shape, args.iterations, seed)
    };
    config.restart_steps = args.restart_steps;
    config.exhaustive_cap = args.exhaustive_cap;
    config.cell_cap = rt.cell_cap;
    config.parallelism = rt.workers;
    let families = family_count(p, &config.shape);
    let mut config_json = config_of(&args, &rt);
    if let Some(obj) = config_json.as_object_mut() {
        obj.remove("checkpoint");
        if args.exhaustive {
            obj.remove("seed");
            obj.remove("iterations");
            obj.remove("restart_steps");
        }
    }
    Ok(Prepared {
        command: "search",
        config: config_json,
        seed: (config.mode == SearchMode::Random).then_some(config.seed),
        inputs,
        cacheable: true,
        run: Box::new(move || {
            if config.mode == SearchMode::Exhaustive {
                eprintln!("searching {families} grid families");
            }
            let record = match config.mode {
                SearchMode::Exhaustive => {
                    exhaustive_min_image_resumable(&config, &map, args.checkpoint.as_deref())?
                }
                SearchMode::Random => random_search(&config, &map)?,
            };
            let opts = ImageOptions {
                cell_cap: config.cell_cap,
                workers: 1,
            };
            let interval_value = GridFamily::intervals(p, &config.shape)
                .and_then(|g| image_of(&map, &g, &opts))
                .map(|s| s.size())
                .ok();
            let report = SearchReport {
                bound: best_bound(&map, &config.shape)?,
                family_count: u64::try_from(families).unwrap_or(u64::MAX),
                config: SearchConfig {
                    parallelism: 1,
                    ..config.clone()
                },
                map,
                interval_value,
                record,
            };
            Ok(Computed {
                csv: csv_table(
                    SUMMARY_HEADER,
                    [SummaryRow::from_record(
                        &report.record,
                        interval_value,
                        &config,
                    )],
                ),
                exit: EXIT_OK,
                result: to_value(&report),
            })
        }),
    })
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct ConjectureArgs {
    #[arg(long)]
    pub p: u32,
    /// Common set size, inside the window ((p+1)/2 .. ceil(2p/3)).
    #[arg(long)]
    pub k: usize,
    #[arg(long)]
    pub seed: u64,
    #[arg(long, default_value_t = 10_000)]
    pub iterations: u64,
    #[arg(long, default_value_t = DEFAULT_RESTART_STEPS)]
    pub restart_steps: u64,
    /// Also run exhaustive search when the family count is at most this.
    #[arg(long, default_value_t = 1_000_000)]
    pub exhaustive_cap: u64,
}

pub fn conjecture(args: ConjectureArgs, rt: Runtime) -> Result<Prepared, CliError> {
    let p = modulus(args.p)?;
    Ok(Prepared {
        command: "conjecture",
        config: config_of(&args, &rt),
        seed: Some(args.seed),
        inputs: Inputs::default(),
        cacheable: true,
        run: Box::new(move || {
            let opts = ConjectureOptions {
                workers: rt.workers,
                exhaustive_cap: args.exhaustive_cap,
                restart_steps: args.restart_steps,
            };
            let report: ConjectureReport =
                conjecture_gap_report(p, args.k, args.iterations, args.seed, &opts)?;
            Ok(Computed {
                csv: csv_table(SUMMARY_HEADER, [SummaryRow::from_conjecture(&report)]),
                exit: EXIT_OK,
                result: to_value(&report),
            })
        }),
    })
}
