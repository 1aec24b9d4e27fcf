//! Command-line front end: family specifications, commands and output files.
//!
//! Exit codes are a stable contract:
//!
//! | command     | 0         | 2                   | 3                          | 1     |
//! |-------------|-----------|---------------------|----------------------------|-------|
//! | `check`     | dominated | not dominated       | inconclusive               | error |
//! | `multicone` | built     | no invariant radius | refused by domination gate | error |
//! | `splitting` | passes    | fails               |                            | error |
//! | `example4d` | passes    | lambda scan fails   | a later stage fails        | error |

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::example4d::{self, Theorem3Config, Theorem3Report, Which};
use crate::grassmann::{Plane, ProjectiveLine};
use crate::linalg::SquareMatrix;
use crate::multicone::{build_multicone, semiconvexity_audit, Gate, Multicone, MulticoneConfig};
use crate::splitting::{splitting_from_window, verify_domination, DominationCheck, SplittingEstimate, VerifyConfig};
use crate::words::{is_dominated, DominationConfig, FamilySource, MatrixFamily, SearchConfig, Verdict, Word};

pub const EXIT_OK: i32 = 0;
pub const EXIT_ERROR: i32 = 1;
pub const EXIT_NEGATIVE: i32 = 2;
pub const EXIT_REFUSED: i32 = 3;

/// One explicitly listed matrix.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MatrixSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
    /// Row-major entries.
    pub entries: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Generator {
    /// The sampled four-dimensional family `A(t, lambda)`.
    Example4d {
        lambda: f64,
        samples: usize,
        #[serde(default = "default_extension")]
        extension: f64,
    },
    /// `Q diag(entries[k]) Q^T` for one seeded orthogonal `Q`.
    ConjugatedDiagonal {
        entries: Vec<Vec<f64>>,
        rotation_seed: u64,
    },
    /// Entry-wise uniform noise in `[-noise, noise]` on every member of `base`.
    RandomPerturbation {
        base: Box<FamilySpec>,
        noise: f64,
        seed: u64,
    },
}

fn default_extension() -> f64 {
    Theorem3Config::default().ext
}

/// Input description of a matrix family: an explicit list or a generator.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FamilySpec {
    pub dim: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub matrices: Option<Vec<MatrixSpec>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generator: Option<Generator>,
}

impl FamilySpec {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(|e| {
            Error::arg(format!("{}: malformed family spec: {e}", path.display()))
        })
    }

    pub fn build(&self) -> Result<MatrixFamily> {
        let family = match (&self.matrices, &self.generator) {
            (Some(list), None) => {
                let members = list
                    .iter()
                    .enumerate()
                    .map(|(k, m)| {
                        let label = m.label.clone().unwrap_or_else(|| format!("M{k}"));
                        let matrix = SquareMatrix::from_row_slice(self.dim, &m.entries)
                            .map_err(|e| Error::arg(format!("matrix {label}: {e}")))?;
                        Ok((label, matrix))
                    })
                    .collect::<Result<Vec<_>>>()?;
                MatrixFamily::new(members, FamilySource::ExplicitList)?
            }
            (None, Some(g)) => match g {
                Generator::Example4d {
                    lambda,
                    samples,
                    extension,
                } => example4d::sampled_family(*lambda, *samples, *extension)?,
                Generator::ConjugatedDiagonal {
                    entries,
                    rotation_seed,
                } => {
                    let q = SquareMatrix::random_orthogonal(self.dim, *rotation_seed);
                    let qt = q.transpose();
                    let members = entries
                        .iter()
                        .map(|diag| {
                            if diag.len() != self.dim {
                                return Err(Error::arg(format!(
                                    "diagonal of length {} in a family of dimension {}",
                                    diag.len(),
                                    self.dim
                                )));
                            }
                            Ok(&(&q * &SquareMatrix::diagonal(diag)) * &qt)
                        })
                        .collect::<Result<Vec<_>>>()?;
                    MatrixFamily::explicit(members)?
                }
                Generator::RandomPerturbation { base, noise, seed } => {
                    base.build()?.perturbed(*noise, *seed)?
                }
            },
            _ => {
                return Err(Error::arg(
                    "a family spec needs exactly one of `matrices` and `generator`",
                ))
            }
        };
        if family.dim() != self.dim {
            return Err(Error::arg(format!(
                "declared dimension {} does not match generated dimension {}",
                self.dim,
                family.dim()
            )));
        }
        Ok(family)
    }
}

#[derive(Debug, Parser)]
#[command(name = "domsplit", version, about = "Dominated sets of matrices: word products, multicones and splittings")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Decide domination from the gap ratios of word products.
    Check(CheckArgs),
    /// Build a strictly invariant multicone and audit its line traces.
    Multicone(MulticoneArgs),
    /// Estimate the splitting along a random itinerary and verify domination.
    Splitting(SplittingArgs),
    /// Run the four-dimensional example end to end.
    Example4d(Example4dArgs),
}

#[derive(Debug, Args)]
pub struct SearchArgs {
    /// Longest word length examined.
    #[arg(long, default_value_t = 24)]
    pub max_len: usize,
    /// Lengths with at most this many words are enumerated exhaustively.
    #[arg(long, default_value_t = 1_000_000)]
    pub budget: u64,
    /// Beam width beyond the exhaustive budget.
    #[arg(long, default_value_t = 1024)]
    pub beam: usize,
}

impl SearchArgs {
    fn domination(&self) -> DominationConfig {
        DominationConfig {
            search: SearchConfig {
                max_len: self.max_len,
                budget: self.budget,
                beam_width: self.beam,
                ..SearchConfig::default()
            },
            ..DominationConfig::default()
        }
    }
}

#[derive(Debug, Args)]
pub struct CheckArgs {
    /// Family spec JSON file.
    pub input: PathBuf,
    #[arg(long, default_value_t = 1)]
    pub index: usize,
    #[command(flatten)]
    pub search: SearchArgs,
    /// Output directory.
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct MulticoneArgs {
    pub input: PathBuf,
    #[arg(long, default_value_t = 1)]
    pub index: usize,
    #[command(flatten)]
    pub search: SearchArgs,
    /// Seed of the attractor's random word tails.
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Build even when the family is not certified dominated.
    #[arg(long)]
    pub override_domination_gate: bool,
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SplittingArgs {
    pub input: PathBuf,
    #[arg(long, default_value_t = 1)]
    pub index: usize,
    /// Letters before the base point.
    #[arg(long, default_value_t = 40)]
    pub past_len: usize,
    /// Letters after the base point; also the verification word.
    #[arg(long, default_value_t = 40)]
    pub future_len: usize,
    /// Seed of the random itinerary.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct Example4dArgs {
    /// Samples of the curve parameter.
    #[arg(long, default_value_t = 64)]
    pub grid: usize,
    /// Use this lambda instead of scanning powers of two.
    #[arg(long)]
    pub lambda: Option<f64>,
    #[command(flatten)]
    pub search: SearchArgs,
    /// Seed of the perturbation rerun.
    #[arg(long, default_value_t = 7)]
    pub seed: u64,
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
}

/// Files produced by a command, written only once the command has succeeded.
#[derive(Default)]
struct Outputs(Vec<(String, Vec<u8>)>);

impl Outputs {
    fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let mut bytes = serde_json::to_vec_pretty(value)?;
        bytes.push(b'\n');
        self.0.push((name.to_string(), bytes));
        Ok(())
    }

    fn csv(&mut self, name: &str, write: impl FnOnce(&mut Vec<u8>) -> Result<()>) -> Result<()> {
        let mut bytes = Vec::new();
        write(&mut bytes)?;
        self.0.push((name.to_string(), bytes));
        Ok(())
    }

    /// Write every file through a temporary sibling and an atomic rename.
    fn commit(self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        for (name, bytes) in self.0 {
            let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
            tmp.write_all(&bytes)?;
            tmp.flush()?;
            tmp.persist(dir.join(&name)).map_err(|e| Error::Io(e.error))?;
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AuditSummary {
    pub component: usize,
    /// Coordinate axes spanning the audited plane.
    pub axes: [usize; 2],
    pub arc_count: usize,
    pub arcs: Vec<crate::grassmann::Arc>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MulticoneReport {
    pub index: usize,
    pub gate: String,
    pub multicone: Multicone,
    pub audit: Vec<AuditSummary>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplittingReport {
    pub index: usize,
    pub seed: u64,
    pub estimate: SplittingEstimate,
    pub check: DominationCheck,
}

/// Parse arguments and run; returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    match Cli::try_parse_from(args) {
        Ok(cli) => run(cli),
        Err(e) => {
            let code = if e.use_stderr() { EXIT_ERROR } else { EXIT_OK };
            let _ = e.print();
            code
        }
    }
}

pub fn run(cli: Cli) -> i32 {
    let outcome = match cli.command {
        Command::Check(a) => cmd_check(&a),
        Command::Multicone(a) => cmd_multicone(&a),
        Command::Splitting(a) => cmd_splitting(&a),
        Command::Example4d(a) => cmd_example4d(&a),
    };
    outcome.unwrap_or_else(|e| {
        eprintln!("error: {e}");
        EXIT_ERROR
    })
}

pub fn cmd_check(a: &CheckArgs) -> Result<i32> {
    let family = FamilySpec::load(&a.input)?.build()?;
    let report = is_dominated(&family, a.index, &a.search.domination())?;
    let mut out = Outputs::default();
    out.csv("gap_report.csv", |w| report.write_csv(w))?;
    out.json("gap_report.json", &report)?;
    out.commit(&a.out)?;
    let verdict = report.verdict.clone().expect("is_dominated sets a verdict");
    if let Some(fit) = &report.fit {
        println!(
            "index {}: {} (log tau {:.6}, log C {:.6}, residual {:.6})",
            a.index,
            verdict.name(),
            fit.log_tau,
            fit.log_c,
            fit.residual
        );
    }
    Ok(match verdict {
        Verdict::Dominated => EXIT_OK,
        Verdict::NotDominated { witness_labels, .. } => {
            println!("periodic witness: {}", witness_labels.join(" "));
            EXIT_NEGATIVE
        }
        Verdict::Inconclusive { reason } => {
            println!("{reason}");
            EXIT_REFUSED
        }
    })
}

/// Projective lines `span(e_j, e_k)` for all coordinate pairs.
fn coordinate_lines(d: usize) -> Vec<([usize; 2], ProjectiveLine)> {
    let mut out = Vec::new();
    for j in 0..d {
        for k in j + 1..d {
            let line = ProjectiveLine::new(Plane::coordinate(d, &[j, k])).expect("two-dimensional");
            out.push(([j, k], line));
        }
    }
    out
}

pub fn cmd_multicone(a: &MulticoneArgs) -> Result<i32> {
    let family = FamilySpec::load(&a.input)?.build()?;
    let gate = if a.override_domination_gate {
        eprintln!("warning: domination gate overridden");
        "override".to_string()
    } else {
        let report = is_dominated(&family, a.index, &a.search.domination())?;
        let verdict = report.verdict.expect("is_dominated sets a verdict");
        if verdict != Verdict::Dominated {
            eprintln!(
                "refusing to build a multicone: verdict {} at index {} (pass --override-domination-gate to force)",
                verdict.name(),
                a.index
            );
            return Ok(EXIT_REFUSED);
        }
        verdict.name().to_string()
    };
    let mut cfg = MulticoneConfig::default();
    cfg.attractor.seed = a.seed;
    let mc = match build_multicone(&family, a.index, &cfg, &Gate::Override) {
        Ok(mc) => mc,
        Err(Error::Construction { reason, table }) => {
            eprintln!("{reason}");
            for (eps, count) in table {
                eprintln!("  eps {eps:.6e}: {count} components");
            }
            return Ok(EXIT_NEGATIVE);
        }
        Err(e) => return Err(e),
    };
    let lines = coordinate_lines(family.dim());
    let plain: Vec<ProjectiveLine> = lines.iter().map(|(_, l)| l.clone()).collect();
    let audit = semiconvexity_audit(&mc, &plain, 720, 128)?
        .into_iter()
        .map(|e| AuditSummary {
            component: e.component,
            axes: lines[e.line].0,
            arc_count: e.arc_count,
            arcs: e.trace.arcs.clone(),
        })
        .collect::<Vec<_>>();
    let mut out = Outputs::default();
    for k in 0..mc.component_count() {
        let sample = mc.component_sample(k);
        out.csv(&format!("component_{k}.csv"), |w| sample.write_csv(w))?;
    }
    println!(
        "index {}: {} components at eps {:.6} (invariance margin {:.6})",
        a.index,
        mc.component_count(),
        mc.cone.radius,
        mc.invariance_margin
    );
    for s in audit.iter().filter(|s| s.arc_count > 1) {
        println!(
            "component {} meets span(e{}, e{}) in {} arcs",
            s.component, s.axes[0], s.axes[1], s.arc_count
        );
    }
    out.json(
        "multicone.json",
        &MulticoneReport {
            index: a.index,
            gate,
            multicone: mc,
            audit,
        },
    )?;
    out.commit(&a.out)?;
    Ok(EXIT_OK)
}

pub fn cmd_splitting(a: &SplittingArgs) -> Result<i32> {
    let family = FamilySpec::load(&a.input)?.build()?;
    if a.past_len == 0 || a.future_len == 0 {
        return Err(Error::arg("window lengths must be positive"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(a.seed);
    let letters: Vec<usize> = (0..a.past_len + a.future_len)
        .map(|_| rng.random_range(0..family.len()))
        .collect();
    let past = Word::new(letters[..a.past_len].to_vec(), &family)?;
    let future = Word::new(letters[a.past_len..].to_vec(), &family)?;
    let estimate = splitting_from_window(&family, &past, &future, a.index)?;
    let check = verify_domination(&family, &estimate, &future, &VerifyConfig::default())?;
    let passes = check.passes;
    println!(
        "index {}: angle {:.6}, slope {:.6}, {}",
        a.index,
        estimate.angle,
        check.slope,
        if passes { "passes" } else { "fails" }
    );
    let mut out = Outputs::default();
    out.csv("ratio_curve.csv", |w| {
        let mut csv = csv::Writer::from_writer(w);
        csv.write_record(["n", "log_ratio"])?;
        for (n, v) in check.log_ratio_curve.iter().enumerate() {
            csv.write_record([n.to_string(), format!("{v:e}")])?;
        }
        csv.flush()?;
        Ok(())
    })?;
    out.json(
        "splitting.json",
        &SplittingReport {
            index: a.index,
            seed: a.seed,
            estimate,
            check,
        },
    )?;
    out.commit(&a.out)?;
    Ok(if passes { EXIT_OK } else { EXIT_NEGATIVE })
}

pub fn cmd_example4d(a: &Example4dArgs) -> Result<i32> {
    if a.grid < 16 {
        eprintln!(
            "warning: grid of {} samples under-samples the curves; margins are not representative",
            a.grid
        );
    }
    let mut cfg = Theorem3Config {
        grid: a.grid,
        domination: a.search.domination(),
        perturbation_seed: a.seed,
        ..Theorem3Config::default()
    };
    if let Some(lambda) = a.lambda {
        cfg.lambdas = vec![lambda];
    }
    let report = example4d::verify_theorem3(&cfg)?;
    let ts = example4d::sample_parameters(cfg.grid, cfg.ext);
    let ss = example4d::grid(-2.0, 2.0, 21);
    let mut out = Outputs::default();
    out.json("theorem3.json", &report)?;
    for (which, name) in [(Which::First, "first"), (Which::Second, "second")] {
        out.csv(&format!("curve_{name}.csv"), |w| example4d::write_curve_csv(which, &ts, w))?;
        out.csv(&format!("surface_{name}.csv"), |w| {
            example4d::write_ruled_surface_csv(which, &ts, &ss, w)
        })?;
    }
    out.commit(&a.out)?;
    print_theorem3(&report);
    Ok(match report.failed_stage.as_deref() {
        None => EXIT_OK,
        Some("lambda_scan") => EXIT_NEGATIVE,
        Some(_) => EXIT_REFUSED,
    })
}

fn print_theorem3(r: &Theorem3Report) {
    println!("skewness: min distance {:.6}", r.skewness.min_distance);
    for row in &r.scan {
        println!(
            "lambda {:>6}: margins {:+.6} / {:+.6}{}",
            row.lambda,
            row.c1.margin,
            row.c2.margin,
            if row.passes { "  accepted" } else { "" }
        );
    }
    for (run, pair) in [("nominal", &r.nominal), ("perturbed", &r.perturbed)] {
        let Some(pair) = pair else { continue };
        for stage in [&pair.forward, &pair.backward] {
            let arcs = stage.witness.as_ref().map_or(0, |w| w.arc_count);
            println!(
                "{run} {}: {} (arcs on P: {arcs})",
                stage.direction,
                if stage.passed { "pass" } else { "fail" }
            );
        }
    }
    match &r.failed_stage {
        None => println!("all stages pass"),
        Some(s) => println!("failed stage: {s}"),
    }
}
