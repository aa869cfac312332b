//! The `raclib` command line.
//!
//! Exit codes: 0 on success, 2 when the requested member, record or region
//! does not exist, 1 for every other failure.

use std::fs::{self, File};
use std::io::{self, BufReader, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};

use crate::bench;
use crate::config::Config;
use crate::error::Error;
use crate::library::{self, Library};
use crate::neuro::{self, BlockName, NeuroLibrary};
use crate::server;
use crate::ssdi::{self, DeathLibrary, SearchQuery};
use crate::store::RecordStore;

pub const EXIT_OK: u8 = 0;
pub const EXIT_FAILURE: u8 = 1;
pub const EXIT_NOT_FOUND: u8 = 2;

#[derive(Debug, Parser)]
#[command(name = "raclib", version, about = "Random access concatenated libraries")]
pub struct Cli {
    /// `key=value` configuration file.
    #[arg(long, global = true, env = "RACLIB_CONFIG")]
    pub config: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Pack a directory of `<title>_<page>.<ext>` files into one collection.
    Pack {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        collection: String,
        /// Output library directory (defaults to library_dir).
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        record_size: Option<u64>,
        /// Lines of `<relative path> <name> <key>` instead of parsing file names.
        #[arg(long)]
        manifest: Option<PathBuf>,
    },
    /// Write one member's exact bytes to a file or `-` for stdout.
    Fetch {
        #[arg(long)]
        name: String,
        #[arg(long)]
        key: String,
        /// Restrict the lookup to one collection.
        #[arg(long)]
        collection: Option<String>,
        #[arg(long)]
        library: Option<PathBuf>,
        #[arg(long, default_value = "-")]
        out: PathBuf,
    },
    /// Serve images over HTTP through the rotating cache.
    Serve(ServeArgs),
    #[command(subcommand)]
    Ssdi(SsdiCommand),
    #[command(subcommand)]
    Neuro(NeuroCommand),
    #[command(subcommand)]
    Bench(BenchCommand),
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long)]
    pub port: Option<u16>,
    #[arg(long)]
    pub library: Option<PathBuf>,
    #[arg(long)]
    pub cache_root: Option<PathBuf>,
    #[arg(long)]
    pub bucket_ttl: Option<u64>,
    #[arg(long)]
    pub bucket_width: Option<u64>,
}

#[derive(Debug, Subcommand)]
pub enum SsdiCommand {
    /// Build a death-record library from `surname\tgiven\tssn\tbirth\tdeath` lines.
    Build {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    Search {
        #[arg(long)]
        given: String,
        #[arg(long)]
        surname: String,
        #[arg(long)]
        birth: Option<u16>,
        #[arg(long)]
        death_from: Option<u16>,
        #[arg(long)]
        death_to: Option<u16>,
        /// Library directory (defaults to `<library_dir>/ssdi`).
        #[arg(long)]
        dir: Option<PathBuf>,
    },
}

#[derive(Debug, Subcommand)]
pub enum NeuroCommand {
    /// Build a region library from `region\tx\ty\tz` lines.
    Build {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    Query {
        #[arg(long)]
        region: String,
        /// Block name such as `n4_xp1_yn3_z`.
        #[arg(long)]
        block: Option<String>,
        /// Library directory (defaults to `<library_dir>/neuro`).
        #[arg(long)]
        dir: Option<PathBuf>,
    },
}

#[derive(Debug, Subcommand)]
pub enum BenchCommand {
    /// Generate a pseudorandom library (and optionally a tar archive of the
    /// same bytes).
    Synth {
        #[arg(long)]
        records: u64,
        #[arg(long, default_value_t = 1024)]
        record_size: u64,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        #[arg(long, default_value = "bench.raclib")]
        out: PathBuf,
        #[arg(long)]
        archive: Option<PathBuf>,
        /// Records per archive member.
        #[arg(long, default_value_t = 230)]
        member_records: u64,
    },
    /// Time repeated fetches; one CSV row per trial.
    Fetch {
        #[arg(long)]
        start: u64,
        #[arg(long)]
        count: u64,
        #[arg(long, default_value_t = 30)]
        trials: usize,
        #[arg(long, default_value = "bench.raclib")]
        lib: PathBuf,
    },
    /// Extract one archive member by scanning.
    Serial {
        #[arg(long)]
        member: u64,
        #[arg(long, default_value = "bench.tar")]
        archive: PathBuf,
    },
    /// Bin a samples CSV into decade bins.
    Hist {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long, default_value = "elapsed_us")]
        column: String,
    },
}

/// Parse the process arguments, run, and map the outcome to an exit code.
pub fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_FAILURE } else { EXIT_OK });
        }
    };
    ExitCode::from(run_to_code(cli, &mut io::stdout().lock()))
}

pub fn run_to_code(cli: Cli, out: &mut dyn Write) -> u8 {
    match run(cli, out) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e:#}");
            exit_code_for(&e)
        }
    }
}

pub fn exit_code_for(e: &anyhow::Error) -> u8 {
    let not_found = e
        .chain()
        .any(|cause| cause.downcast_ref::<Error>().is_some_and(Error::is_not_found));
    if not_found {
        EXIT_NOT_FOUND
    } else {
        EXIT_FAILURE
    }
}

pub fn run(cli: Cli, out: &mut dyn Write) -> Result<()> {
    let config = Config::load(cli.config.as_deref())?;
    match cli.command {
        Command::Pack {
            input,
            collection,
            out: out_dir,
            record_size,
            manifest,
        } => {
            let out_dir = out_dir.unwrap_or_else(|| config.library_dir.clone());
            let record_size = record_size.unwrap_or(config.record_size);
            let c = library::pack(&input, &out_dir, &collection, record_size, manifest.as_deref())
                .with_context(|| format!("packing {}", input.display()))?;
            writeln!(
                out,
                "{}: {} entries, {} records of {} bytes",
                c.name(),
                c.index().entry_count()?.entries,
                c.store().record_count(),
                c.store().record_size()
            )?;
        }
        Command::Fetch {
            name,
            key,
            collection,
            library,
            out: target,
        } => {
            let dir = library.unwrap_or_else(|| config.library_dir.clone());
            let bytes = match collection {
                Some(c) => library::Collection::open(&dir, &c)?.fetch(&name, &key)?,
                None => Library::open(&dir)?.fetch(&name, &key)?,
            };
            if target == Path::new("-") {
                out.write_all(&bytes)?;
            } else {
                fs::write(&target, &bytes)
                    .with_context(|| format!("writing {}", target.display()))?;
            }
        }
        Command::Serve(args) => {
            let mut config = config;
            if let Some(p) = args.port {
                config.port = p;
            }
            if let Some(l) = args.library {
                config.library_dir = l;
            }
            if let Some(c) = args.cache_root {
                config.cache_root = c;
            }
            if let Some(t) = args.bucket_ttl {
                config.bucket_ttl_seconds = t;
            }
            if let Some(w) = args.bucket_width {
                config.bucket_width_seconds = w;
            }
            config.validate()?;
            let runtime = tokio::runtime::Runtime::new()?;
            runtime.block_on(server::serve(&config))?;
        }
        Command::Ssdi(SsdiCommand::Build { input, out: dir }) => {
            let records = ssdi::read_tsv(BufReader::new(
                File::open(&input).with_context(|| format!("opening {}", input.display()))?,
            ))?;
            let lib = DeathLibrary::build(&dir, records)?;
            writeln!(out, "{} records in {}", lib.data().record_count(), dir.display())?;
        }
        Command::Ssdi(SsdiCommand::Search {
            given,
            surname,
            birth,
            death_from,
            death_to,
            dir,
        }) => {
            let dir = dir.unwrap_or_else(|| config.library_dir.join("ssdi"));
            let lib = DeathLibrary::open(&dir)?;
            let query = SearchQuery {
                given,
                surname,
                birth_year: birth,
                death_year_from: death_from,
                death_year_to: death_to,
            };
            for r in lib.search(&query)? {
                writeln!(
                    out,
                    "{}\t{}\t{}\t{}\t{}",
                    r.surname, r.given, r.ssn, r.birth_date, r.death_date
                )?;
            }
        }
        Command::Neuro(NeuroCommand::Build { input, out: dir }) => {
            let atlas = neuro::read_atlas_tsv(BufReader::new(
                File::open(&input).with_context(|| format!("opening {}", input.display()))?,
            ))?;
            let lib = NeuroLibrary::build(&dir, &atlas)?;
            writeln!(
                out,
                "{} regions, {} groups, {} voxels in {}",
                atlas.len(),
                lib.index().entry_count()?.entries,
                lib.store().record_count(),
                dir.display()
            )?;
        }
        Command::Neuro(NeuroCommand::Query { region, block, dir }) => {
            let dir = dir.unwrap_or_else(|| config.library_dir.join("neuro"));
            let lib = NeuroLibrary::open(&dir)?;
            let voxels = match block {
                Some(b) => lib.block_voxels(&region, &b.parse::<BlockName>()?)?,
                None => lib.region_voxels(&region)?,
            };
            for v in voxels {
                writeln!(out, "{}", neuro::encode_coord(v)?)?;
            }
        }
        Command::Bench(cmd) => run_bench(cmd, out)?,
    }
    Ok(())
}

fn run_bench(cmd: BenchCommand, out: &mut dyn Write) -> Result<()> {
    match cmd {
        BenchCommand::Synth {
            records,
            record_size,
            seed,
            out: path,
            archive,
            member_records,
        } => {
            let store = bench::synth_library(&path, records, record_size, seed)?;
            let checksum = bench::store_checksum(&store)?;
            writeln!(out, "path,records,record_size,seed,sha256")?;
            writeln!(
                out,
                "{},{},{},{},{}",
                path.display(),
                records,
                record_size,
                seed,
                checksum
            )?;
            if let Some(archive) = archive {
                if member_records == 0 {
                    anyhow::bail!("--member-records must be positive");
                }
                write_archive_from_store(&store, &archive, member_records)?;
            }
        }
        BenchCommand::Fetch {
            start,
            count,
            trials,
            lib,
        } => {
            let store = RecordStore::open(&lib)?;
            let stats = bench::measure_fetch(&store, start, count, trials)?;
            writeln!(out, "{}", bench::LatencySample::CSV_HEADER)?;
            for s in &stats.samples {
                writeln!(out, "{}", s.csv_row())?;
            }
        }
        BenchCommand::Serial { member, archive } => {
            let (sample, _) = bench::serial_baseline(&archive, member)?;
            let total = fs::metadata(&archive)?.len();
            writeln!(out, "member,elapsed_us,bytes_read,archive_bytes")?;
            writeln!(
                out,
                "{},{:.3},{},{}",
                member, sample.elapsed_us, sample.bytes_read, total
            )?;
        }
        BenchCommand::Hist { input, column } => {
            let text = fs::read_to_string(&input)
                .with_context(|| format!("reading {}", input.display()))?;
            let samples = bench::read_sample_column(&text, &column)?;
            let bins = bench::emit_histogram(&samples, &bench::decade_edges(&samples)?)?;
            bench::write_histogram_csv(&bins, out)?;
        }
    }
    Ok(())
}

/// Split a synthetic store into members of `member_records` records each
/// and write them as a tar archive.
fn write_archive_from_store(store: &RecordStore, archive: &Path, member_records: u64) -> Result<()> {
    let total = store.record_count();
    let mut members = Vec::new();
    let mut start = 0;
    while start < total {
        let n = member_records.min(total - start);
        members.push((format!("member{:08}", members.len()), store.read_records(start, n)?));
        start += n;
    }
    bench::build_serial_archive(archive, members)?;
    Ok(())
}
