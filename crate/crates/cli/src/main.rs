use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::io::{self, Write as _};
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use atlas_core::cartography::overlay_fill;
use atlas_core::dataset::{self, DatasetError};
use atlas_core::geocode::{self, GeocodeError, HttpProvider, StubProvider};
use atlas_core::overlay::{overlays_to_json, parse_overlays};
use atlas_core::philology::{attested_languages, outcome_counts, parse_cognates, parse_query};
use atlas_core::{
    apply_overlay, base_map, export_geojson, export_svg, overlay_from_rates, BBox, Corpus, FeatureOverlay,
    GeoCoord, GeocodeProvider, StudyRegion,
};
use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(name = "atlas", version, about = "Dialect atlas: validate, map and query a bibliography corpus")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct DataArgs {
    /// Data directory holding references.json, languages.json and optionally
    /// features.json and locations.tsv.
    #[arg(long, short = 'd', value_name = "DIR")]
    data: PathBuf,
}

#[derive(Args, Clone)]
struct RegionArgs {
    /// Study region as lon_min,lat_min,lon_max,lat_max.
    #[arg(long, value_name = "BBOX", value_parser = parse_bbox)]
    bbox: Option<BBox>,
}

impl RegionArgs {
    fn region(&self) -> Result<StudyRegion> {
        match self.bbox {
            None => Ok(StudyRegion::default()),
            Some(b) => StudyRegion::new(b).map_err(|e| usage(e.to_string())),
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Check a data directory and print every finding.
    Validate {
        #[command(flatten)]
        data: DataArgs,
    },
    /// Print source, lect, location and topic counts.
    Stats {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        json: bool,
    },
    /// Draw the base map, or an overlay, to SVG or GeoJSON.
    Render {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        region: RegionArgs,
        /// Output path; the extension (.svg or .geojson) picks the format.
        #[arg(long, short)]
        out: PathBuf,
        /// Overlay file to color the map by.
        #[arg(long, value_name = "FILE")]
        overlay: Option<PathBuf>,
        /// Feature to draw, from --overlay or the corpus features file.
        #[arg(long)]
        feature: Option<String>,
        #[arg(long, default_value_t = 1000)]
        width: u32,
        /// Overwrite an existing output file.
        #[arg(long)]
        force: bool,
    },
    /// List per-language values and fills of one overlay feature.
    Overlay {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        feature: Option<String>,
        #[arg(long, value_name = "FILE")]
        overlay: Option<PathBuf>,
    },
    /// Align cognate sets and write sound-change outcome rates as an overlay.
    Align {
        #[arg(long, value_name = "FILE")]
        cognates: PathBuf,
        #[arg(long, value_name = "FILE")]
        query: PathBuf,
        #[arg(long, short)]
        out: PathBuf,
        /// Feature id recorded in the overlay file.
        #[arg(long, default_value = "sound_change")]
        feature_id: String,
        #[arg(long)]
        force: bool,
    },
    /// Resolve annotated locations and update the data directory's cache.
    Geocode {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long, value_enum, default_value_t = ProviderKind::Http)]
        provider: ProviderKind,
        /// JSON map of place name to [lon, lat], for the stub provider.
        #[arg(long, value_name = "FILE", required_if_eq("provider", "stub"))]
        table: Option<PathBuf>,
        /// Re-query unverified cache entries.
        #[arg(long)]
        refresh: bool,
    },
    /// Serve the HTTP API.
    Serve {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        region: RegionArgs,
        #[arg(long, default_value = "127.0.0.1:8080")]
        bind: SocketAddr,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum ProviderKind {
    Http,
    Stub,
}

/// Failure classes mapped to exit codes.
#[derive(Debug)]
enum Failure {
    Usage(String),
    Data(String),
}

impl std::fmt::Display for Failure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Failure::Usage(m) | Failure::Data(m) => f.write_str(m),
        }
    }
}

impl std::error::Error for Failure {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    Failure::Usage(msg.into()).into()
}

fn data_error(msg: impl Into<String>) -> anyhow::Error {
    Failure::Data(msg.into()).into()
}

fn parse_bbox(s: &str) -> Result<BBox, String> {
    let v: Vec<f64> = s
        .split(',')
        .map(|p| p.trim().parse::<f64>().map_err(|e| format!("`{p}`: {e}")))
        .collect::<Result<_, _>>()?;
    let [lon_min, lat_min, lon_max, lat_max] = v[..] else {
        return Err("expected four comma-separated numbers".into());
    };
    Ok(BBox { lon_min, lat_min, lon_max, lat_max })
}

fn read_input(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| usage(format!("cannot read {}: {e}", path.display())))
}

fn check_output(path: &Path, force: bool) -> Result<()> {
    if path.exists() && !force {
        return Err(usage(format!("{} exists; pass --force to overwrite", path.display())));
    }
    Ok(())
}

fn write_output(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).with_context(|| format!("cannot write {}", path.display()))
}

fn load(data: &DataArgs) -> Result<Corpus> {
    dataset::load_dir(&data.data).map_err(|e| match e {
        DatasetError::Io { .. } => usage(e.to_string()),
        other => data_error(other.report().to_string().trim_end().to_string()),
    })
}

fn print_warnings(corpus: &Corpus) {
    let mut err = io::stderr().lock();
    for w in corpus.warnings().warnings() {
        let _ = writeln!(err, "{w}");
    }
}

fn validate(data: &DataArgs) -> Result<()> {
    match dataset::load_dir(&data.data) {
        Ok(corpus) => {
            let mut out = String::new();
            for w in corpus.warnings().warnings() {
                writeln!(out, "{w}")?;
            }
            for (lang, loc) in corpus.unresolved_locations() {
                writeln!(out, "WARN [{lang}] location: `{loc}` has no coordinate")?;
            }
            let stats = corpus.stats();
            writeln!(
                out,
                "ok: {} sources, {} lects, {} locations",
                stats.n_sources, stats.n_lects, stats.n_locations
            )?;
            print!("{out}");
            Ok(())
        }
        Err(e @ DatasetError::Io { .. }) => Err(usage(e.to_string())),
        Err(e) => {
            print!("{}", e.report());
            Err(data_error("validation failed"))
        }
    }
}

fn stats(data: &DataArgs, json: bool) -> Result<()> {
    let corpus = load(data)?;
    print_warnings(&corpus);
    let s = corpus.stats();
    if json {
        println!("{}", serde_json::to_string_pretty(&s)?);
        return Ok(());
    }
    let mut out = String::new();
    writeln!(out, "sources\t{}", s.n_sources)?;
    writeln!(out, "lects\t{}", s.n_lects)?;
    writeln!(out, "locations\t{}", s.n_locations)?;
    for (topic, n) in &s.topic_counts {
        writeln!(out, "topic\t{topic}\t{n}")?;
    }
    print!("{out}");
    Ok(())
}

/// Picks the overlay to draw from an explicit file or the corpus.
fn choose_overlay(corpus: &Corpus, file: Option<&Path>, feature: Option<&str>) -> Result<Option<FeatureOverlay>> {
    let from_file;
    let pool: &BTreeMap<String, FeatureOverlay> = match file {
        Some(path) => {
            from_file = parse_overlays(&read_input(path)?)
                .map_err(|e| data_error(format!("{}: {e}", path.display())))?;
            &from_file
        }
        None if feature.is_none() => return Ok(None),
        None => corpus.overlays(),
    };
    match feature {
        Some(f) => pool
            .get(f)
            .cloned()
            .map(Some)
            .ok_or_else(|| usage(format!("unknown feature `{f}`"))),
        None if pool.len() == 1 => Ok(pool.values().next().cloned()),
        None => Err(usage(format!(
            "overlay file holds {} features; pick one with --feature",
            pool.len()
        ))),
    }
}

#[allow(clippy::too_many_arguments)]
fn render(
    data: &DataArgs,
    region: &RegionArgs,
    out: &Path,
    overlay: Option<&Path>,
    feature: Option<&str>,
    width: u32,
    force: bool,
) -> Result<()> {
    let ext = out.extension().and_then(|e| e.to_str()).unwrap_or("");
    if !matches!(ext, "svg" | "geojson" | "json") {
        return Err(usage("--out must end in .svg or .geojson"));
    }
    check_output(out, force)?;
    let region = region.region()?;
    let corpus = load(data)?;
    print_warnings(&corpus);
    let chosen = choose_overlay(&corpus, overlay, feature)?;
    let mut doc = base_map(&corpus, &region).map_err(|e| data_error(e.to_string()))?;
    if let Some(o) = &chosen {
        doc = apply_overlay(&doc, o);
    }
    let text = if ext == "svg" {
        export_svg(&doc, width).map_err(|e| usage(e.to_string()))?
    } else {
        export_geojson(&doc)
    };
    write_output(out, &text)?;
    eprintln!("wrote {} ({} zones, {} circles)", out.display(), doc.zones.len(), doc.circles.len());
    Ok(())
}

fn overlay(data: &DataArgs, feature: Option<&str>, file: Option<&Path>) -> Result<()> {
    let corpus = load(data)?;
    let chosen = match (file, feature) {
        (None, None) if corpus.overlays().len() != 1 => {
            let mut out = String::new();
            for (id, o) in corpus.overlays() {
                writeln!(out, "{id}\t{:?}\t{} values", o.kind, o.values.len())?;
            }
            print!("{out}");
            return Ok(());
        }
        (None, None) => corpus.overlays().values().next().cloned(),
        _ => choose_overlay(&corpus, file, feature)?,
    }
    .ok_or_else(|| usage("no overlay selected"))?;
    let mut out = String::new();
    for lang in corpus.languages() {
        let value = chosen
            .value(&lang.id)
            .map_or_else(|| "no data".to_string(), |v| format!("{v:.4}"));
        writeln!(out, "{}\t{}\t{}", lang.id, value, overlay_fill(&chosen, &lang.id))?;
    }
    print!("{out}");
    Ok(())
}

fn align(cognates: &Path, query: &Path, out: &Path, feature_id: &str, force: bool) -> Result<()> {
    let cognate_text = read_input(cognates)?;
    let query_text = read_input(query)?;
    check_output(out, force)?;
    let sets = parse_cognates(&cognate_text).map_err(|e| data_error(format!("{}: {e}", cognates.display())))?;
    let q = parse_query(&query_text).map_err(|e| data_error(format!("{}: {e}", query.display())))?;
    let languages = attested_languages(&sets);
    let overlay = overlay_from_rates(feature_id, &sets, &q, &languages);
    let mut report = String::new();
    for lang in &languages {
        let c = outcome_counts(&sets, &q, lang);
        match c.rate(q.target_class()) {
            Some(r) => writeln!(
                report,
                "{lang}\t{r:.4}\t{}/{} reflexes",
                c.per_class.get(q.target_class()).copied().unwrap_or(0),
                c.total
            )?,
            None => writeln!(report, "{lang}\tno data")?,
        }
    }
    write_output(out, &overlays_to_json([&overlay]))?;
    print!("{report}");
    Ok(())
}

fn load_table(path: &Path) -> Result<StubProvider> {
    let raw: BTreeMap<String, [f64; 2]> = serde_json::from_str(&read_input(path)?)
        .map_err(|e| data_error(format!("{}: {e}", path.display())))?;
    let entries = raw
        .into_iter()
        .map(|(k, [lon, lat])| {
            GeoCoord::new(lon, lat)
                .map(|c| (k.clone(), c))
                .map_err(|e| data_error(format!("{}: `{k}`: {e}", path.display())))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(StubProvider::new(entries))
}

fn geocode_cmd(data: &DataArgs, kind: ProviderKind, table: Option<&Path>, refresh: bool) -> Result<()> {
    let cache_path = data.data.join(dataset::LOCATIONS_FILE);
    let mut cache = dataset::load_cache(&cache_path).map_err(|e| data_error(e.to_string()))?;
    let corpus = load(data)?.with_gazetteer(&cache);

    let provider: Box<dyn GeocodeProvider> = match kind {
        ProviderKind::Stub => Box::new(load_table(table.ok_or_else(|| usage("--table is required"))?)?),
        ProviderKind::Http => Box::new(HttpProvider::from_env().ok_or_else(|| {
            usage("GEOCODER_URL is not set; export it or use --provider stub")
        })?),
    };

    let mut names: Vec<String> = if refresh {
        corpus
            .sources()
            .iter()
            .flat_map(|s| s.languages.values().flatten().cloned())
            .collect()
    } else {
        corpus.unresolved_locations().into_iter().map(|(_, loc)| loc).collect()
    };
    names.sort_unstable();
    names.dedup_by(|a, b| geocode::normalize_query(a) == geocode::normalize_query(b));

    let (mut resolved, mut failed) = (0usize, Vec::new());
    for name in &names {
        let r = if refresh {
            geocode::refresh(name, &mut cache, provider.as_ref())
        } else {
            geocode::resolve(name, &mut cache, provider.as_ref())
        };
        match r {
            Ok(_) => resolved += 1,
            Err(GeocodeError::Unresolved { query, reason }) => failed.push(format!("{query}: {reason}")),
            Err(e) => failed.push(e.to_string()),
        }
    }
    write_output(&cache_path, &cache.to_tsv())?;
    println!("resolved {resolved} of {} names; cache holds {} entries", names.len(), cache.len());
    for f in &failed {
        println!("UNRESOLVED {f}");
    }
    if failed.is_empty() {
        Ok(())
    } else {
        Err(data_error(format!("{} names unresolved", failed.len())))
    }
}

fn serve(data: &DataArgs, region: &RegionArgs, bind: SocketAddr) -> Result<()> {
    if !data.data.is_dir() {
        return Err(usage(format!("{} is not a directory", data.data.display())));
    }
    let mut config = atlas_service::ServiceConfig::new(&data.data, bind);
    config.region = region.region()?;
    tracing_subscriber::fmt().with_writer(io::stderr).init();
    let runtime = tokio::runtime::Runtime::new()?;
    runtime.block_on(atlas_service::serve(config))?;
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Validate { data } => validate(&data),
        Command::Stats { data, json } => stats(&data, json),
        Command::Render { data, region, out, overlay, feature, width, force } => {
            render(&data, &region, &out, overlay.as_deref(), feature.as_deref(), width, force)
        }
        Command::Overlay { data, feature, overlay: file } => overlay(&data, feature.as_deref(), file.as_deref()),
        Command::Align { cognates, query, out, feature_id, force } => {
            align(&cognates, &query, &out, &feature_id, force)
        }
        Command::Geocode { data, provider, table, refresh } => geocode_cmd(&data, provider, table.as_deref(), refresh),
        Command::Serve { data, region, bind } => serve(&data, &region, bind),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let code = match e.downcast_ref::<Failure>() {
                Some(Failure::Usage(_)) => 2,
                Some(Failure::Data(_)) => 1,
                None => 1,
            };
            eprintln!("error: {e:#}");
            ExitCode::from(code)
        }
    }
}

