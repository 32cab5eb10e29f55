mod data;
mod index;

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use emrange::emsim::Session;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::data::{
    format_colored, format_corpus, format_points, gen_colored, gen_corpus, gen_points,
};
use crate::index::{Answer, Dataset, Request, Structure};

const CSV_HEADER: &str = "structure,n,B,w,k,reads,writes,sios,micros";

#[derive(Parser)]
#[command(
    name = "emrange",
    version,
    about = "Range reporting structures over a simulated block store"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Clone, Copy, ValueEnum)]
enum Kind {
    Points,
    Colored,
    Corpus,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate a random dataset.
    Gen {
        kind: Kind,
        /// Points, sets or strings.
        #[arg(long)]
        size: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Colors are drawn from 1..=colors (default: size).
        #[arg(long)]
        colors: Option<u64>,
        /// Output file (default: stdout).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Build a structure and write it to a directory.
    Build {
        #[arg(long, value_enum)]
        structure: Structure,
        #[arg(long)]
        input: PathBuf,
        #[arg(long, default_value_t = 8)]
        block_words: usize,
        #[arg(long, default_value_t = 64)]
        word_bits: u32,
        #[arg(long, default_value_t = 8)]
        k: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Query a built structure: `x1 x2 y`, `a b`, or a prefix.
    Query {
        #[arg(long)]
        index: PathBuf,
        /// Dataset to check the answer against; a mismatch exits with 1.
        #[arg(long)]
        verify: Option<PathBuf>,
        #[arg(allow_hyphen_values = true)]
        args: Vec<String>,
    },
    /// Random queries over generated data, one CSV row per query.
    Bench {
        #[arg(long, value_enum)]
        structure: Structure,
        #[arg(long, default_value_t = 8)]
        block_words: usize,
        #[arg(long, default_value_t = 64)]
        word_bits: u32,
        #[arg(long, default_value_t = 8)]
        k: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, default_value_t = 100)]
        queries: usize,
        /// Dataset sizes, comma separated.
        #[arg(long, value_delimiter = ',', default_value = "1024")]
        sweep_n: Vec<usize>,
        /// Check every answer against the brute-force oracle.
        #[arg(long)]
        verify: bool,
        /// CSV file (default: stdout).
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// Outcome of a command that ran to completion.
enum Status {
    Ok,
    Mismatch,
}

fn emit(out: &Option<PathBuf>, text: &str) -> Result<()> {
    match out {
        Some(p) => fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => Ok(std::io::stdout().write_all(text.as_bytes())?),
    }
}

fn gen(
    kind: Kind,
    size: usize,
    seed: u64,
    colors: Option<u64>,
    out: &Option<PathBuf>,
) -> Result<Status> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sigma = colors.unwrap_or(size as u64).max(1);
    let text = match kind {
        Kind::Points => format_points(&gen_points(&mut rng, size)),
        Kind::Colored => format_colored(&gen_colored(&mut rng, size, sigma)),
        Kind::Corpus => format_corpus(&gen_corpus(&mut rng, size, sigma)),
    };
    emit(out, &text)?;
    Ok(Status::Ok)
}

fn build(
    structure: Structure,
    input: &Path,
    block_words: usize,
    word_bits: u32,
    k: usize,
    out: &Path,
) -> Result<Status> {
    let data = Dataset::read(structure, input)?;
    let mut store = index::new_store(block_words, word_bits)?;
    let handles = index::build(&mut store, &data, structure, k)?;
    index::save(out, &store, handles)?;
    eprintln!(
        "built {structure}: {} elements, {} blocks",
        data.size(),
        store.len()
    );
    Ok(Status::Ok)
}

fn query(dir: &Path, verify: &Option<PathBuf>, args: &[String]) -> Result<Status> {
    let (store, m) = index::load(dir)?;
    let structure = structure_of(m.handles);
    let req = Request::parse(structure, args)?;
    let got = index::run(&store, &mut Session::new(), m.handles, &req)?;
    println!("{got}");
    if let Some(path) = verify {
        let want = index::expected(&Dataset::read(structure, path)?, m.handles, &req)?;
        if want != got {
            eprintln!("mismatch: expected {want}");
            return Ok(Status::Mismatch);
        }
    }
    Ok(Status::Ok)
}

fn structure_of(h: index::Handles) -> Structure {
    match h {
        index::Handles::Threesided { .. } => Structure::Threesided,
        index::Handles::ColoredRange { .. } => Structure::ColoredRange,
        index::Handles::ColoredPrefix { .. } => Structure::ColoredPrefix,
        index::Handles::Topk { .. } => Structure::Topk,
    }
}

/// Data for size `n`; each size uses its own stream of the seeded generator.
fn bench_data(structure: Structure, seed: u64, n: usize) -> (Dataset, ChaCha8Rng) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(n as u64);
    let sigma = (n as u64 / 4).max(2);
    let data = match structure {
        Structure::Threesided => Dataset::Points(gen_points(&mut rng, n)),
        Structure::ColoredRange => {
            let sets = gen_colored(&mut rng, (n / 2).max(1), sigma);
            Dataset::Colored(
                emrange::colored::ColoredDataset::new(sets).expect("generated sets are sorted"),
            )
        }
        Structure::ColoredPrefix | Structure::Topk => {
            Dataset::Corpus(gen_corpus(&mut rng, n, sigma))
        }
    };
    (data, rng)
}

fn random_request(rng: &mut ChaCha8Rng, data: &Dataset) -> Request {
    match data {
        Dataset::Points(p) => {
            let n = p.len().max(1) as u64;
            let x1 = rng.gen_range(0..n);
            Request::Range {
                x1,
                x2: rng.gen_range(x1..n),
                y: rng.gen_range(0..n),
            }
        }
        Dataset::Colored(d) => {
            let a = rng.gen_range(1..=d.m());
            Request::Sets {
                a,
                b: rng.gen_range(a..=d.m()),
            }
        }
        Dataset::Corpus(c) => {
            let s = &c[rng.gen_range(0..c.len())].0;
            Request::Prefix(s[..rng.gen_range(0..=s.len())].to_vec())
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn bench(
    structure: Structure,
    block_words: usize,
    word_bits: u32,
    k: usize,
    seed: u64,
    queries: usize,
    sweep: &[usize],
    verify: bool,
    out: &Option<PathBuf>,
) -> Result<Status> {
    let mut csv = format!("{CSV_HEADER}\n");
    let mut mismatches = 0;
    for &n in sweep {
        if queries == 0 {
            break;
        }
        let (data, mut rng) = bench_data(structure, seed, n);
        let mut store = index::new_store(block_words, word_bits)?;
        let handles = index::build(&mut store, &data, structure, k)?;
        for _ in 0..queries {
            let req = random_request(&mut rng, &data);
            let mut s = Session::new();
            let t = Instant::now();
            let got: Answer = index::run(&store, &mut s, handles, &req)?;
            let micros = t.elapsed().as_micros();
            let io = s.stats();
            csv += &format!(
                "{structure},{n},{block_words},{word_bits},{},{},{},{},{micros}\n",
                got.len(),
                io.reads,
                io.writes,
                io.scatter_ios
            );
            if verify && index::expected(&data, handles, &req)? != got {
                mismatches += 1;
                eprintln!("mismatch at n={n}: {req:?}");
            }
        }
    }
    emit(out, &csv)?;
    Ok(if mismatches > 0 {
        Status::Mismatch
    } else {
        Status::Ok
    })
}

fn run(cli: Cli) -> Result<Status> {
    match cli.cmd {
        Cmd::Gen {
            kind,
            size,
            seed,
            colors,
            out,
        } => gen(kind, size, seed, colors, &out),
        Cmd::Build {
            structure,
            input,
            block_words,
            word_bits,
            k,
            out,
        } => build(structure, &input, block_words, word_bits, k, &out),
        Cmd::Query {
            index,
            verify,
            args,
        } => query(&index, &verify, &args),
        Cmd::Bench {
            structure,
            block_words,
            word_bits,
            k,
            seed,
            queries,
            sweep_n,
            verify,
            out,
        } => bench(
            structure,
            block_words,
            word_bits,
            k,
            seed,
            queries,
            &sweep_n,
            verify,
            &out,
        ),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(Status::Ok) => ExitCode::SUCCESS,
        Ok(Status::Mismatch) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
