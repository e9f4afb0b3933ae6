use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, ensure, Context, Result};
use clap::{Parser, Subcommand};
use codedpir::algebra::Field;
use codedpir::audit::audit;
use codedpir::exec::Exec;
use codedpir::golden::{compare, figures};
use codedpir::json::{to_sorted_string, to_sorted_string_pretty};
use codedpir::mds::{encode, Database, DatabaseFile, Generator, ShareFile, ShareTable};
use codedpir::net::{remote_retrieve, Server};
use codedpir::params::{derive_params, verify_constraints, ParamsJson, SchemeParams};
use codedpir::protocol::{metrics, retrieve_with, MetricsReport, Transcript};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Parser)]
#[command(name = "codedpir", version, about = "Private retrieval from MDS-coded servers")]
struct Cli {
    /// Run loops on one thread.
    #[arg(long, global = true)]
    sequential: bool,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Print the derived scheme parameters as JSON.
    Params { m: usize, n: usize, k: usize },
    /// Generate a random database and write it with one share file per server.
    Setup {
        m: usize,
        n: usize,
        k: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Prime modulus; defaults to the smallest prime above max(N, 256).
        #[arg(long)]
        modulus: Option<u64>,
        #[arg(long, default_value = ".")]
        dir: PathBuf,
    },
    /// Retrieve one record in-process and check the observed costs.
    Retrieve {
        #[arg(long)]
        theta: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = "database.json")]
        database: PathBuf,
        #[arg(long, default_value = "transcript.json")]
        out: PathBuf,
    },
    /// Check rank identities and query privacy for one parameter set.
    Audit {
        m: usize,
        n: usize,
        k: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        modulus: Option<u64>,
    },
    /// Rebuild the three worked examples and compare with stored tables.
    VerifyExamples,
    /// Serve one share over TCP.
    Serve {
        #[arg(long)]
        share: PathBuf,
        #[arg(long, default_value_t = 0)]
        port: u16,
        /// 1-based server id; must match the share file.
        #[arg(long)]
        id: usize,
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
    },
    /// Retrieve one record from running servers.
    Client {
        /// Comma-separated host:port list, server 1 first.
        #[arg(long, value_delimiter = ',', required = true)]
        servers: Vec<String>,
        #[arg(long)]
        theta: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        params: PathBuf,
        #[arg(long)]
        modulus: Option<u64>,
        #[arg(long, default_value = "transcript.json")]
        out: PathBuf,
    },
}

fn field(n: usize, modulus: Option<u64>) -> Result<Field> {
    Ok(match modulus {
        Some(p) => Field::new(p)?,
        None => Field::for_servers(n),
    })
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn share_path(dir: &Path, i: usize) -> PathBuf {
    dir.join(format!("share-{i}.json"))
}

fn report_metrics(r: &MetricsReport) {
    for c in &r.checks {
        let verdict = if c.pass { "ok" } else { "MISMATCH" };
        println!("{:<6} observed {:<8} theory {:<8} {verdict}", c.name, c.observed, c.expected);
    }
}

fn finish_retrieval(t: &Transcript, p: &SchemeParams, out: &Path) -> Result<bool> {
    write(out, &t.to_json()?)?;
    let r = metrics(t, p);
    report_metrics(&r);
    println!("transcript written to {}", out.display());
    Ok(r.pass())
}

fn run(cli: Cli) -> Result<bool> {
    let exec = if cli.sequential { Exec::Sequential } else { Exec::default() };
    match cli.cmd {
        Cmd::Params { m, n, k } => {
            let p = derive_params(m, n, k)?;
            println!("{}", to_sorted_string(&p.to_json())?);
            let r = verify_constraints(&p);
            for c in r.checks.iter().filter(|c| !c.pass) {
                eprintln!("constraint {} fails: {}", c.name, c.detail);
            }
            Ok(r.pass())
        }
        Cmd::Setup { m, n, k, seed, modulus, dir } => {
            let p = derive_params(m, n, k)?;
            let f = field(n, modulus)?;
            let g = Generator::vandermonde(n, k, f)?;
            let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(1));
            let db = Database::random(f, m, k, p.ltilde as usize, &mut rng);
            fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
            write(&dir.join("database.json"), &to_sorted_string(&db.to_file(n))?)?;
            for share in encode(&db, &g)? {
                write(&share_path(&dir, share.server() + 1), &to_sorted_string(&share.to_file())?)?;
            }
            let params = ParamsJson { p: Some(f.modulus()), ..p.to_json() };
            write(&dir.join("params.json"), &to_sorted_string_pretty(&params)?)?;
            println!("wrote database, params and {n} shares to {} (p = {})", dir.display(), f.modulus());
            Ok(true)
        }
        Cmd::Retrieve { theta, seed, database, out } => {
            let file: DatabaseFile = read_json(&database)?;
            let db = Database::from_file(&file)?;
            let p = derive_params(file.m, file.n, file.k)?;
            let g = Generator::vandermonde(file.n, file.k, db.field())?;
            ensure!((1..=p.records).contains(&theta), "theta must be in 1..={}", p.records);
            let t = retrieve_with(exec, &db, theta, seed, &p, &g)?;
            let correct = &t.decoded == db.record(theta);
            println!("decoded record {theta}: {}", if correct { "matches" } else { "DIFFERS" });
            Ok(finish_retrieval(&t, &p, &out)? && correct)
        }
        Cmd::Audit { m, n, k, seed, modulus } => {
            let p = derive_params(m, n, k)?;
            let g = Generator::vandermonde(n, k, field(n, modulus)?)?;
            let r = audit(exec, &p, &g, seed)?;
            println!("{}", to_sorted_string_pretty(&r)?);
            Ok(r.pass())
        }
        Cmd::VerifyExamples => {
            let mut all = true;
            let figs = figures();
            let primary: Vec<_> = figs.iter().filter(|f| !f.name.contains("theta")).collect();
            for fig in primary {
                // an example passes only if every stored table for it matches
                let mut mismatches = Vec::new();
                for f in figs.iter().filter(|f| f.name == fig.name || f.name.starts_with(&format!("{}-theta", fig.name))) {
                    mismatches.extend(compare(f)?.mismatches);
                }
                let p = derive_params(fig.m, fig.n, fig.k)?;
                let verdict = if mismatches.is_empty() { "MATCH" } else { "MISMATCH" };
                println!(
                    "{verdict} {} (M={} N={} K={}): L={} D={} omega={} rate={}",
                    fig.name, fig.m, fig.n, fig.k, p.sub_packetization, p.download, p.access, p.capacity
                );
                for msg in &mismatches {
                    println!("  {msg}");
                }
                all &= mismatches.is_empty();
            }
            Ok(all)
        }
        Cmd::Serve { share, port, id, host } => {
            let file: ShareFile = read_json(&share)?;
            ensure!(file.server == id, "{} holds the share of server {}, not {id}", share.display(), file.server);
            let table = ShareTable::from_file(&file)?;
            let server = Server::bind(table, (host.as_str(), port))?;
            println!("server {id} listening on {}", server.local_addr()?);
            std::io::stdout().flush()?;
            server.run()?;
            Ok(true)
        }
        Cmd::Client { servers, theta, seed, params, modulus, out } => {
            let pj: ParamsJson = read_json(&params)?;
            let p = derive_params(pj.m, pj.n_servers, pj.k_code)?;
            let f = field(p.servers, modulus.or(pj.p))?;
            let g = Generator::vandermonde(p.servers, p.code_dim, f)?;
            if servers.len() != p.servers {
                bail!("{} server addresses given, parameters need {}", servers.len(), p.servers);
            }
            ensure!((1..=p.records).contains(&theta), "theta must be in 1..={}", p.records);
            let t = remote_retrieve(&servers, theta, seed, &p, &g)?;
            finish_retrieval(&t, &p, &out)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
