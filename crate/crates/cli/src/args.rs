use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

use hardyline::analysis::Part;
use hardyline::verify::Suite;
use hardyline::{Exponent, WeightFamily};

#[derive(Debug, Parser)]
#[command(name = "hardyline", version, about = "Discrete weighted p-Hardy inequalities on the half-line")]
pub struct Cli {
    /// Worker threads for sweeps (defaults to all cores).
    #[arg(long, global = true, env = "HARDYLINE_JOBS")]
    pub jobs: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Sharp constant for power weights n^alpha against n^(alpha-p).
    Sharp(SharpArgs),
    /// Muckenhoupt constants and the bracket on the best constant.
    Muckenhoupt(MuckenhouptArgs),
    /// Optimal Hardy weight of nu on an index range.
    Weight(WeightArgs),
    /// Compare the optimal weight of nu with a candidate mu.
    Compare(CompareArgs),
    /// Minimise the Rayleigh quotient on a finite window.
    Rayleigh(RayleighArgs),
    /// Run a verification suite.
    Verify(VerifyArgs),
    /// Fit the large-n expansion of the optimal power weight.
    Expand(ExpandArgs),
    /// Stability margin of a vector or of random samples.
    Stability(StabilityArgs),
    /// Decay of the critical counterexample quotient.
    CriticalRatio(CriticalRatioArgs),
}

/// Accepted and ignored: output is always JSON.
#[derive(Debug, Args)]
pub struct JsonFlag {
    #[arg(long, hide = true)]
    pub json: bool,
}

#[derive(Debug, Args)]
pub struct SharpArgs {
    #[arg(long, value_parser = exponent)]
    pub p: Exponent,
    #[arg(long, allow_hyphen_values = true)]
    pub alpha: f64,
    #[command(flatten)]
    pub json: JsonFlag,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum KindArg {
    #[value(alias = "1")]
    One,
    #[value(alias = "2")]
    Two,
    Both,
}

#[derive(Debug, Args)]
pub struct MuckenhouptArgs {
    #[arg(long, value_parser = exponent)]
    pub p: Exponent,
    #[arg(long, value_parser = weight)]
    pub mu: WeightFamily,
    #[arg(long, value_parser = weight)]
    pub nu: WeightFamily,
    #[arg(long, value_enum, default_value = "both")]
    pub kind: KindArg,
    #[arg(long, default_value_t = hardyline::muckenhoupt::DEFAULT_R_MAX)]
    pub rmax: u64,
    #[command(flatten)]
    pub json: JsonFlag,
}

#[derive(Debug, Args)]
pub struct WeightArgs {
    #[arg(long, value_parser = exponent)]
    pub p: Exponent,
    #[arg(long, value_parser = weight)]
    pub nu: WeightFamily,
    /// Index range `a..b`, inclusive.
    #[arg(long, value_parser = index_range)]
    pub n: (u64, u64),
    /// Write `n,value` rows here instead of listing them in the payload.
    #[arg(long, conflicts_with = "json")]
    pub csv: Option<PathBuf>,
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    #[arg(long, value_parser = exponent)]
    pub p: Exponent,
    #[arg(long, value_parser = weight)]
    pub nu: WeightFamily,
    #[arg(long, value_parser = weight)]
    pub mu: WeightFamily,
    #[arg(long)]
    pub window: u64,
    #[command(flatten)]
    pub json: JsonFlag,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MethodArg {
    Exact,
    Descent,
}

#[derive(Debug, Args)]
pub struct RayleighArgs {
    #[arg(long, value_parser = exponent)]
    pub p: Exponent,
    /// Power pair `mu = n^(alpha-p)`, `nu = n^alpha`.
    #[arg(long, allow_hyphen_values = true, required_unless_present_all = ["mu", "nu"], conflicts_with_all = ["mu", "nu"])]
    pub alpha: Option<f64>,
    #[arg(long, value_parser = weight, requires = "nu")]
    pub mu: Option<WeightFamily>,
    #[arg(long, value_parser = weight, requires = "mu")]
    pub nu: Option<WeightFamily>,
    #[arg(long = "N", value_name = "N")]
    pub n: Option<u64>,
    #[arg(long = "M", value_name = "M", default_value_t = 1)]
    pub m: u64,
    /// Defaults to the exact route at p = 2 and descent otherwise.
    #[arg(long, value_enum)]
    pub method: Option<MethodArg>,
    /// Evaluate the quotient of the `n,value` vector in this file instead.
    #[arg(long, conflicts_with_all = ["n", "method"], required_unless_present = "n")]
    pub u: Option<PathBuf>,
    /// Write the minimizer as `n,value` rows.
    #[arg(long)]
    pub csv: Option<PathBuf>,
    #[command(flatten)]
    pub json: JsonFlag,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    #[arg(long, value_parser = suite)]
    pub suite: Suite,
    /// Power-sum parts, e.g. `i,iii`.
    #[arg(long, value_delimiter = ',', value_parser = part)]
    pub part: Vec<Part>,
    /// Exponent grid: `v`, `a,b,c` or `start:end:step`.
    #[arg(long, value_parser = grid, allow_hyphen_values = true)]
    pub gamma: Option<Grid>,
    #[arg(long)]
    pub nmax: Option<u64>,
    /// Weight exponents; paired with every `--p`.
    #[arg(long, value_parser = grid, allow_hyphen_values = true)]
    pub alpha: Option<Grid>,
    #[arg(long, value_parser = grid)]
    pub p: Option<Grid>,
    #[arg(long)]
    pub samples: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub max_len: Option<u64>,
    /// Series lengths for the remainder suite, e.g. `1,3,closed`.
    #[arg(long, value_delimiter = ',', value_parser = terms)]
    pub terms: Vec<Option<usize>>,
    /// Uniform `x` points for the dense lemma sweep.
    #[arg(long)]
    pub dense_x: Option<u64>,
    /// Absolute tolerance of the expansion suite.
    #[arg(long)]
    pub tolerance: Option<f64>,
    #[command(flatten)]
    pub json: JsonFlag,
}

#[derive(Debug, Args)]
pub struct ExpandArgs {
    #[arg(long, value_parser = exponent)]
    pub p: Exponent,
    #[arg(long, allow_hyphen_values = true)]
    pub alpha: f64,
    #[arg(long, value_delimiter = ',', default_value = "2,3")]
    pub powers: Vec<i32>,
    #[command(flatten)]
    pub json: JsonFlag,
}

#[derive(Debug, Args)]
pub struct StabilityArgs {
    #[arg(long, value_parser = exponent)]
    pub p: Exponent,
    #[arg(long, allow_hyphen_values = true)]
    pub alpha: f64,
    /// Vector as `n,value` rows; random samples are used when absent.
    #[arg(long, conflicts_with_all = ["samples", "max_len"])]
    pub u: Option<PathBuf>,
    #[arg(long, default_value_t = 1000)]
    pub samples: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 64)]
    pub max_len: u64,
    #[command(flatten)]
    pub json: JsonFlag,
}

#[derive(Debug, Args)]
pub struct CriticalRatioArgs {
    #[arg(long, value_parser = exponent)]
    pub p: Exponent,
    /// Truncation points, e.g. `1000,1000000`.
    #[arg(long = "n", value_delimiter = ',', required = true)]
    pub n: Vec<u64>,
    #[command(flatten)]
    pub json: JsonFlag,
}

fn exponent(s: &str) -> Result<Exponent, String> {
    let v: f64 = s.parse().map_err(|_| format!("`{s}` is not a number"))?;
    Exponent::new(v).map_err(|e| e.to_string())
}

fn weight(s: &str) -> Result<WeightFamily, String> {
    WeightFamily::parse(s).map_err(|e| e.to_string())
}

fn suite(s: &str) -> Result<Suite, String> {
    s.parse().map_err(|e: hardyline::Error| e.to_string())
}

fn part(s: &str) -> Result<Part, String> {
    s.parse().map_err(|e: hardyline::Error| e.to_string())
}

fn terms(s: &str) -> Result<Option<usize>, String> {
    match s {
        "closed" | "inf" => Ok(None),
        _ => match s.parse::<usize>() {
            Ok(0) | Err(_) => Err(format!("`{s}` is neither a positive term count nor `closed`")),
            Ok(k) => Ok(Some(k)),
        },
    }
}

pub(crate) fn index_range(s: &str) -> Result<(u64, u64), String> {
    let (a, b) = s.split_once("..").ok_or_else(|| format!("`{s}` is not a range `a..b`"))?;
    let parse = |t: &str| t.trim().parse::<u64>().map_err(|_| format!("`{t}` is not an index"));
    let (a, b) = (parse(a)?, parse(b)?);
    if a == 0 || b < a {
        return Err(format!("range `{s}` must satisfy 1 <= a <= b"));
    }
    Ok((a, b))
}

/// A list of grid values from one flag.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
#[serde(transparent)]
pub struct Grid(pub Vec<f64>);

pub(crate) fn grid(s: &str) -> Result<Grid, String> {
    let num = |t: &str| t.trim().parse::<f64>().map_err(|_| format!("`{t}` is not a number"));
    let parts: Vec<&str> = s.split(':').collect();
    let values = match parts.as_slice() {
        [start, end, step] => {
            let (a, b, h) = (num(start)?, num(end)?, num(step)?);
            if !(h > 0.0) || b < a {
                return Err(format!("grid `{s}` needs start <= end and a positive step"));
            }
            hardyline::verify::steps(a, b, h)
        }
        [list] => list.split(',').map(num).collect::<Result<_, _>>()?,
        _ => return Err(format!("`{s}` is neither a list nor `start:end:step`")),
    };
    if values.iter().any(|v| !v.is_finite()) {
        return Err(format!("grid `{s}` has non-finite entries"));
    }
    Ok(Grid(values))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grids_and_ranges() {
        assert_eq!(grid("2").unwrap().0, vec![2.0]);
        assert_eq!(grid("-1,-2").unwrap().0, vec![-1.0, -2.0]);
        assert_eq!(grid("1:2:0.5").unwrap().0, vec![1.0, 1.5, 2.0]);
        assert!(grid("1:0:1").is_err());
        assert!(grid("1:2").is_err());
        assert_eq!(index_range("3..7").unwrap(), (3, 7));
        assert!(index_range("0..3").is_err());
        assert!(index_range("5..3").is_err());
        assert_eq!(terms("closed").unwrap(), None);
        assert_eq!(terms("2").unwrap(), Some(2));
        assert!(terms("0").is_err());
    }

    #[test]
    fn command_definition_is_consistent() {
        use clap::CommandFactory;
        Cli::command().debug_assert();
    }
}
