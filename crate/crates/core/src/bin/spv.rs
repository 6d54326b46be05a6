//! `spv`: fixtures, proofs, client checks, probability tables and relay
//! simulations from the command line.
//!
//! Exit codes: 0 success or accept, 1 reject, 2 input error, 3 resource guard.

use std::fmt::Display;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use spv_core::client::{init_client, AcceptMode, ClientConfig, ProofBundle, Transaction};
use spv_core::fixture::{
    build_fixture, ChainFile, FixtureError, FixtureSpec, TxProof, DEFAULT_FIXTURE_BITS, DEFAULT_MAX_ITERATIONS,
};
use spv_core::headers::{decode_compact, parse_chain_with_report, Target};
use spv_core::netsim::{self, Scenario, SimConfig, SweepGrid, CSV_HEADER};
use spv_core::{client, seccalc};

#[derive(Parser)]
#[command(name = "spv", version, about = "SPV toolkit")]
struct Cli {
    /// Seed for every random choice the command makes.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output file or directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Defaults to csv for tables, sim and sweep.
    #[arg(long, global = true, value_enum)]
    format: Option<Format>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Csv,
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Inclusion,
    Strict,
}

#[derive(Subcommand)]
enum Command {
    /// Mine a chain, write its blocks, proofs and a point-of-sale bundle.
    Fixture {
        #[arg(long, default_value_t = 8)]
        blocks: usize,
        #[arg(long, default_value_t = 8)]
        txs: usize,
        /// Network target as a compact nBits value, e.g. 0x1f0fffff.
        #[arg(long)]
        bits: Option<String>,
        /// Network target as 64 big-endian hex digits.
        #[arg(long, conflicts_with = "bits")]
        target_hex: Option<String>,
        /// Nonces tried per header before giving up.
        #[arg(long, default_value_t = DEFAULT_MAX_ITERATIONS)]
        max_iterations: u64,
    },
    /// Validate a chain file from genesis.
    VerifyChain { chain: PathBuf },
    /// Merkle proof for one transaction of a block file.
    Prove {
        block: PathBuf,
        #[arg(long)]
        index: usize,
    },
    /// Decide a proof bundle against a chain.
    Verify {
        bundle: PathBuf,
        chain: PathBuf,
        #[arg(long, value_enum, default_value_t = Mode::Strict)]
        mode: Mode,
    },
    /// Confirmation depth of a proven transaction.
    Confirmations { chain: PathBuf, proof: PathBuf },
    /// Fraud, race and reorg-tail probabilities over a grid.
    Tables {
        #[arg(long, value_delimiter = ',', required = true)]
        alpha_grid: Vec<f64>,
        #[arg(long, value_delimiter = ',', required = true)]
        z_grid: Vec<u32>,
    },
    /// Run one simulation; the trace goes to --out.
    Sim { config: PathBuf },
    /// Run a grid of simulations.
    Sweep { grid: PathBuf },
}

/// Block file written by `fixture` and read by `prove`.
#[derive(Serialize, Deserialize)]
struct BlockFile {
    block_index: usize,
    transactions: Vec<Transaction>,
}

/// Input of `sim`.
#[derive(Serialize, Deserialize)]
struct SimFile {
    config: SimConfig,
    scenario: Scenario,
}

struct Failure {
    code: u8,
    message: String,
}

fn input(e: impl Display) -> Failure {
    Failure { code: 2, message: e.to_string() }
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, Failure> {
    let text = fs::read_to_string(path).map_err(|e| input(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| input(format!("{}: {e}", path.display())))
}

fn json_line<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("serializable");
    s.push('\n');
    s
}

fn write(path: &Path, contents: &str) -> Result<(), Failure> {
    fs::write(path, contents).map_err(|e| input(format!("cannot write {}: {e}", path.display())))
}

/// Prints to stdout, or writes to `out` when given.
fn emit(out: Option<&Path>, text: &str) -> Result<(), Failure> {
    match out {
        Some(path) => write(path, text),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn load_chain(path: &Path) -> Result<(ChainFile, spv_core::headers::ChainParams), Failure> {
    let chain: ChainFile = read_json(path)?;
    let params = chain.params().map_err(input)?;
    Ok((chain, params))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("spv: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

fn run(cli: Cli) -> Result<u8, Failure> {
    let out = cli.out.as_deref();
    match cli.command {
        Command::Fixture { blocks, txs, bits, target_hex, max_iterations } => {
            let dir = out.ok_or_else(|| input("fixture needs --out DIR"))?;
            let target = match (bits, target_hex) {
                (Some(b), _) => {
                    let v = u32::from_str_radix(b.trim_start_matches("0x"), 16).map_err(input)?;
                    decode_compact(v).map_err(input)?
                }
                (None, Some(h)) => Target::from_be_hex(&h).map_err(input)?,
                (None, None) => decode_compact(DEFAULT_FIXTURE_BITS).map_err(input)?,
            };
            let spec = FixtureSpec {
                n_blocks: blocks,
                txs_per_block: txs,
                target,
                seed: cli.seed.unwrap_or(0),
                max_iterations,
            };
            let fixture = build_fixture(&spec).map_err(|e| match e {
                FixtureError::MiningExhausted { .. } => Failure { code: 3, message: e.to_string() },
                other => input(other),
            })?;
            fs::create_dir_all(dir.join("blocks"))
                .map_err(|e| input(format!("cannot create {}: {e}", dir.display())))?;
            write(&dir.join("chain.json"), &json_line(&fixture.chain_file()))?;
            for (i, txs) in fixture.blocks.iter().enumerate() {
                let file = BlockFile { block_index: i, transactions: txs.clone() };
                write(&dir.join("blocks").join(format!("block_{i:04}.json")), &json_line(&file))?;
            }
            write(&dir.join("proofs.json"), &json_line(&fixture.all_proofs()))?;
            write(&dir.join("bundle.json"), &json_line(&fixture.bundle))?;
            println!("wrote {} headers to {}", fixture.headers.len(), dir.display());
            Ok(0)
        }
        Command::VerifyChain { chain } => {
            let (file, params) = load_chain(&chain)?;
            match parse_chain_with_report(&params, &file.headers) {
                (c, None) => {
                    println!("OK {} headers", c.len());
                    Ok(0)
                }
                (_, Some((index, verdict))) => {
                    println!("FAIL header {index}: {verdict:?}");
                    Ok(1)
                }
            }
        }
        Command::Prove { block, index } => {
            let file: BlockFile = read_json(&block)?;
            let tree = client::block_tree(&file.transactions).ok_or_else(|| input("block has no transactions"))?;
            let proof = tree.prove(index).map_err(input)?;
            let result = TxProof {
                txid: file.transactions[index].txid(),
                block_index: file.block_index,
                proof,
            };
            emit(out, &json_line(&result))?;
            Ok(0)
        }
        Command::Verify { bundle, chain, mode } => {
            let bundle: ProofBundle = read_json(&bundle)?;
            let (file, params) = load_chain(&chain)?;
            let mut state = client_for(&file, params)?;
            let mode = match mode {
                Mode::Inclusion => AcceptMode::InclusionOnly,
                Mode::Strict => AcceptMode::Strict,
            };
            let decision = state.accept_transaction(&bundle, mode);
            emit(out, &json_line(&decision))?;
            Ok(if decision.accepted { 0 } else { 1 })
        }
        Command::Confirmations { chain, proof } => {
            let (file, params) = load_chain(&chain)?;
            let proof: TxProof = read_json(&proof)?;
            let mut state = client_for(&file, params)?;
            let included = state
                .verify_spv(proof.txid, &proof.proof, proof.block_index)
                .map_err(input)?;
            let confirmations = state.confirmations(&proof.txid);
            let report = serde_json::json!({
                "txid": proof.txid,
                "included": included,
                "confirmations": confirmations,
                "final": state.is_final(&proof.txid),
            });
            emit(out, &json_line(&report))?;
            Ok(if included { 0 } else { 1 })
        }
        Command::Tables { alpha_grid, z_grid } => {
            if alpha_grid.iter().any(|a| !(0.0..=1.0).contains(a)) {
                return Err(input("alpha values must lie in [0, 1]"));
            }
            let rows = seccalc::probability_table(&alpha_grid, &z_grid);
            let text = match cli.format.unwrap_or(Format::Csv) {
                Format::Json => json_line(&rows),
                Format::Csv => {
                    let mut s = String::from("alpha,z,fraud_bound,race_prob,reorg_tail\n");
                    for r in &rows {
                        let tail = r.reorg_tail.map(|t| format!("{t:e}")).unwrap_or_default();
                        s.push_str(&format!(
                            "{},{},{:e},{:e},{}\n",
                            r.alpha, r.z, r.fraud_bound, r.race_prob, tail
                        ));
                    }
                    s
                }
            };
            print!("{text}");
            Ok(0)
        }
        Command::Sim { config } => {
            let mut file: SimFile = read_json(&config)?;
            if let Some(seed) = cli.seed {
                file.config.seed = seed;
            }
            let (trace, metrics, row) = netsim::run_and_measure(&file.config, &file.scenario).map_err(input)?;
            if let Some(path) = out {
                write(path, &trace.to_jsonl())?;
            }
            match cli.format.unwrap_or(Format::Csv) {
                Format::Csv => print!("{CSV_HEADER}\n{}\n", row.to_csv()),
                Format::Json => print!(
                    "{}",
                    json_line(&serde_json::json!({ "row": row, "metrics": metrics }))
                ),
            }
            Ok(0)
        }
        Command::Sweep { grid } => {
            let mut grid: SweepGrid = read_json(&grid)?;
            if let Some(seed) = cli.seed {
                grid.base.seed = seed;
            }
            let rows = netsim::sweep(&grid.configs(), &grid.scenario).map_err(input)?;
            let text = match cli.format.unwrap_or(Format::Csv) {
                Format::Json => json_line(&rows),
                Format::Csv => {
                    let mut s = format!("{CSV_HEADER}\n");
                    for r in &rows {
                        s.push_str(&r.to_csv());
                        s.push('\n');
                    }
                    s
                }
            };
            emit(out, &text)?;
            Ok(0)
        }
    }
}

/// Client over the longest valid prefix of `file`.
fn client_for(file: &ChainFile, params: spv_core::headers::ChainParams) -> Result<client::ClientState, Failure> {
    let genesis = *file.headers.first().ok_or_else(|| input("chain has no headers"))?;
    let mut state = init_client(genesis, params, ClientConfig::default()).map_err(input)?;
    state.ingest_headers(&file.headers[1..]);
    Ok(state)
}
