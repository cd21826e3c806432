use std::fs::File;
use std::io::BufReader;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use coinforecast::learner::TrainedModel;
use coinforecast::market_data::{parse_csv, Attribute, CsvSchema};
use coinforecast::pipeline::{self, SavedModel};
use coinforecast::{Error, ErrorClass, Result};

#[derive(Parser)]
#[command(name = "coinforecast", version, about = "Daily crypto price prediction and forecasting runs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Validate an OHLCV CSV file and print a summary.
    Ingest {
        csv: PathBuf,
        /// Column overrides, e.g. `close=Close**,date=Day`.
        #[arg(long)]
        schema: Option<String>,
        #[arg(long, default_value = "data")]
        symbol: String,
    },
    /// Execute one run file.
    Run { spec: PathBuf },
    /// Run several specs for one symbol and tabulate their metrics.
    Compare {
        #[arg(required = true, num_args = 2..)]
        specs: Vec<PathBuf>,
        /// CSV of externally reported values: symbol,model,metric,value.
        #[arg(long)]
        paper_refs: Option<PathBuf>,
        #[arg(long, default_value = "comparison")]
        out: PathBuf,
    },
    /// Describe a saved model.json; `--tree N` prints one boosted tree.
    DumpModel {
        model: PathBuf,
        #[arg(long)]
        tree: Option<usize>,
    },
    /// Run every combination of a hyperparameter grid.
    Sweep {
        spec: PathBuf,
        #[arg(long)]
        grid: PathBuf,
    },
}

fn parse_schema(arg: Option<&str>) -> Result<CsvSchema> {
    let mut schema = CsvSchema::default();
    for pair in arg.unwrap_or("").split(',').filter(|p| !p.trim().is_empty()) {
        let (k, v) = pair
            .split_once('=')
            .ok_or_else(|| Error::argument(format!("schema entry `{pair}` is not key=column")))?;
        schema.set(k, v)?;
    }
    Ok(schema)
}

fn ingest(csv: &Path, schema: Option<&str>, symbol: &str) -> Result<()> {
    let schema = parse_schema(schema)?;
    let file = File::open(csv).map_err(|e| Error::io(format!("opening {}", csv.display()), e))?;
    let series = parse_csv(BufReader::new(file), &schema, symbol)?;
    let present: Vec<&str> = Attribute::ALL
        .iter()
        .filter(|a| series.has_attribute(**a))
        .map(|a| a.name())
        .collect();
    println!("symbol: {}", series.symbol());
    println!("rows: {}", series.len());
    println!("first date: {}", series.first_date());
    println!("last date: {}", series.last_date());
    println!("attributes: {}", present.join(", "));
    let gaps = series.gaps();
    println!("gaps: {}", gaps.len());
    for (a, b) in gaps {
        eprintln!("warning: no records between {a} and {b}");
    }
    Ok(())
}

fn run(spec: &Path) -> Result<()> {
    let spec = pipeline::load_spec(spec)?;
    let report = pipeline::run(&spec)?;
    print!("{}", report.metrics_text());
    println!("\noutputs in {}", spec.output_dir.display());
    Ok(())
}

fn compare(specs: &[PathBuf], refs: Option<&Path>, out: &Path) -> Result<()> {
    let comparison = pipeline::compare(specs, refs)?;
    comparison.write(out)?;
    print!("{}", comparison.render_text());
    println!("\ntables in {}", out.display());
    Ok(())
}

fn describe(model: &TrainedModel, indent: usize) -> String {
    let pad = " ".repeat(indent);
    match model {
        TrainedModel::Constant(m) => format!("{pad}constant {}\n", m.value),
        TrainedModel::Gbt(m) => format!(
            "{pad}boosted trees: {} trees, init {}, shrinkage {}, max depth {}, min leaf {}\n",
            m.trees.len(),
            m.init_value,
            m.params.shrinkage,
            m.params.max_depth,
            m.params.min_leaf
        ),
        TrainedModel::NeuralNet(m) => format!(
            "{pad}neural net: layers {:?}, {} cycles, lr {}, momentum {}, final training rmse {}\n",
            m.network.layer_sizes,
            m.params.cycles,
            m.params.learning_rate,
            m.params.momentum,
            m.training_rmse.last().map(|v| v.to_string()).unwrap_or_else(|| "n/a".into())
        ),
        TrainedModel::Linear(m) => format!(
            "{pad}linear: intercept {}, coefficients {:?}\n",
            m.intercept, m.coefficients
        ),
        TrainedModel::Relative(m) => format!(
            "{pad}relative ({} against {}):\n{}",
            m.transform,
            m.base_feature,
            describe(&m.inner, indent + 2)
        ),
        TrainedModel::Vote(v) => {
            let mut s = format!("{pad}vote over {} members:\n", v.members.len());
            for m in &v.members {
                s.push_str(&describe(m, indent + 2));
            }
            s
        }
    }
}

fn dump_model(path: &Path, tree: Option<usize>) -> Result<()> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
    let saved: SavedModel =
        serde_json::from_str(&text).map_err(|e| Error::argument(format!("{} is not a model file: {e}", path.display())))?;
    match (saved, tree) {
        (SavedModel::Learner(TrainedModel::Gbt(m)), Some(i)) => print!("{}", m.dump(i)?),
        (_, Some(_)) => return Err(Error::argument("--tree applies to boosted tree models only")),
        (SavedModel::Learner(m), None) => print!("{}", describe(&m, 0)),
        (SavedModel::Knn(m), None) => println!(
            "knn: k {}, {:?} weighting, {} training points",
            m.k,
            m.weighting,
            m.points.len()
        ),
    }
    Ok(())
}

fn sweep(spec: &Path, grid: &Path) -> Result<()> {
    let result = pipeline::sweep(spec, grid)?;
    println!("{} runs, summary in {}", result.points.len(), result.summary_path.display());
    Ok(())
}

fn exit_code(err: &Error) -> u8 {
    match err.class() {
        ErrorClass::Argument => 1,
        ErrorClass::Data => 2,
        ErrorClass::Internal => 3,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let result = match &cli.command {
        Command::Ingest { csv, schema, symbol } => ingest(csv, schema.as_deref(), symbol),
        Command::Run { spec } => run(spec),
        Command::Compare { specs, paper_refs, out } => compare(specs, paper_refs.as_deref(), out),
        Command::DumpModel { model, tree } => dump_model(model, *tree),
        Command::Sweep { spec, grid } => sweep(spec, grid),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
