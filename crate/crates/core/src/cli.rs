//! Command-line front end: `simulate`, `fit`, `predict` and `benchmark`.
//!
//! File formats:
//!
//! * Panel CSV with header `outcome,unit,time,y,missing,x1..xK`. Ids are
//!   1-based; `missing` is 0 or 1 and `y` may be empty when it is 1. Every
//!   `(outcome, unit, time)` cell appears exactly once.
//! * Weights in Matrix Market coordinate format (`real general`).
//! * Config: one JSON document with optional sections `model`, `em`,
//!   `gibbs` and `dgp`. Each run writes the effective config, with every
//!   default spelled out, to `config.json`.
//! * Latent sample dump `samples.bin`: the 8 bytes `STARZ001`, then `S`,
//!   `N`, `G`, `T` as little-endian u64, then `S·N·G·T` little-endian f64
//!   values, row-major by (sample, flat index).
//!
//! Exit codes: 0 success, 2 validation error, 3 numerical failure, 4 I/O
//! error.

use std::ffi::OsString;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::effects::{elasticities, predict_missing, prediction_loss};
use crate::error::{Error, Result};
use crate::mcem::{fit, EmConfig, FitResult};
use crate::model::{Dependence, Family, ModelSpec, PanelData, SpatialWeights};
use crate::sampler::GibbsConfig;
use crate::simkit::{
    binomial_acceptance_region, default_timing_sweeps, make_grid_weights, run_qeval_timing, run_recovery,
    run_sprobit_study, simulate, DgpConfig, ExperimentReport, SprobitConfig,
};
use crate::sparse::market;

/// Environment variable holding the default worker count.
pub const THREADS_ENV: &str = "STAR_THREADS";
pub const SAMPLE_MAGIC: &[u8; 8] = b"STARZ001";

#[derive(Debug, Parser)]
#[command(
    name = "star",
    version,
    about = "Spatio-temporal autoregressive latent models fitted by Monte Carlo EM"
)]
pub struct Cli {
    /// Worker threads (1 gives deterministic timing). Defaults to
    /// $STAR_THREADS, then to the number of cores.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate a panel from the `dgp` section of a config.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Fit a panel and write estimates, traces and elasticities.
    Fit {
        #[command(flatten)]
        input: FitInput,
        /// Also write the final latent samples to samples.bin.
        #[arg(long)]
        dump_samples: bool,
    },
    /// Fit a panel with missing cells and predict them.
    Predict {
        #[command(flatten)]
        input: FitInput,
        /// Panel CSV holding the true outcomes of the missing cells.
        #[arg(long)]
        truth: Option<PathBuf>,
    },
    /// Run a simulation study.
    Benchmark {
        suite: Suite,
        #[arg(long)]
        out: PathBuf,
        /// Full-size settings instead of desk scale.
        #[arg(long)]
        long: bool,
        /// Optional config; `em`, `gibbs` and `dgp` override the suite
        /// defaults.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        replications: Option<usize>,
    },
}

#[derive(Debug, Args)]
pub struct FitInput {
    #[arg(long)]
    pub data: PathBuf,
    /// Matrix Market weights; without it a rook grid over `sqrt(N)` sides
    /// is generated and written alongside the outputs.
    #[arg(long)]
    pub weights: Option<PathBuf>,
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Suite {
    Recovery,
    Coverage,
    QevalTiming,
    Sprobit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    /// One family per outcome. Required for `fit` and `predict`.
    pub families: Vec<Family>,
    pub dependence: Dependence,
    /// Use a torus when a grid has to be generated.
    pub torus: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            families: vec![],
            dependence: Dependence::FULL,
            torus: false,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelConfig,
    pub em: EmConfig,
    pub gibbs: GibbsConfig,
    pub dgp: Option<DgpConfig>,
}

impl RunConfig {
    pub fn parse(text: &str, source: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Parse {
            location: format!("{source}:{}:{}", e.line(), e.column()),
            message: e.to_string(),
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text, &path.display().to_string())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes") + "\n"
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileDigest {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub args: Vec<String>,
    pub config: serde_json::Value,
    pub seed: u64,
    pub version: String,
    pub inputs: Vec<FileDigest>,
    pub outputs: Vec<FileDigest>,
    pub wall_seconds: f64,
    pub cpu_seconds: f64,
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let mut f = File::open(path)?;
    let mut h = Sha256::new();
    let mut buf = [0u8; 1 << 16];
    loop {
        let n = f.read(&mut buf)?;
        if n == 0 {
            break;
        }
        h.update(&buf[..n]);
    }
    Ok(h.finalize().iter().map(|b| format!("{b:02x}")).collect())
}

fn digests(paths: &[PathBuf]) -> Result<Vec<FileDigest>> {
    paths
        .iter()
        .map(|p| {
            Ok(FileDigest {
                path: p.display().to_string(),
                sha256: sha256_file(p)?,
            })
        })
        .collect()
}

fn process_cpu_seconds() -> f64 {
    let mut ts = libc::timespec { tv_sec: 0, tv_nsec: 0 };
    // SAFETY: `ts` is a valid, writable timespec.
    let rc = unsafe { libc::clock_gettime(libc::CLOCK_PROCESS_CPUTIME_ID, &mut ts) };
    if rc != 0 {
        return f64::NAN;
    }
    ts.tv_sec as f64 + ts.tv_nsec as f64 * 1e-9
}

/// A panel as read from CSV, before a weights matrix fixes `N`.
#[derive(Debug, Clone, PartialEq)]
pub struct PanelFile {
    pub g: usize,
    pub n: usize,
    pub t: usize,
    pub k: usize,
    pub data: PanelData,
}

fn parse_error(source: &str, line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        location: format!("{source}:{line}"),
        message: message.into(),
    }
}

/// Reads a panel CSV.
pub fn read_panel<R: Read>(input: R, source: &str) -> Result<PanelFile> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(input);
    let header = rdr
        .headers()
        .map_err(|e| parse_error(source, 1, e.to_string()))?
        .clone();
    let fixed = ["outcome", "unit", "time", "y", "missing"];
    if header.len() < fixed.len() || header.iter().zip(fixed).any(|(h, f)| h.trim() != f) {
        return Err(parse_error(
            source,
            1,
            "header must start with outcome,unit,time,y,missing",
        ));
    }
    let k = header.len() - fixed.len();
    for (c, h) in header.iter().skip(fixed.len()).enumerate() {
        if h.trim() != format!("x{}", c + 1) {
            return Err(parse_error(
                source,
                1,
                format!("expected column x{}, found '{h}'", c + 1),
            ));
        }
    }
    struct Row {
        j: usize,
        i: usize,
        t: usize,
        y: f64,
        missing: bool,
        x: Vec<f64>,
        line: usize,
    }
    let mut rows = Vec::new();
    for (r, rec) in rdr.records().enumerate() {
        let line = r + 2;
        let rec = rec.map_err(|e| parse_error(source, line, e.to_string()))?;
        let id = |c: usize, name: &str| -> Result<usize> {
            let v: usize = rec[c]
                .trim()
                .parse()
                .map_err(|_| parse_error(source, line, format!("{name} '{}' is not a positive integer", &rec[c])))?;
            if v == 0 {
                return Err(parse_error(source, line, format!("{name} ids start at 1")));
            }
            Ok(v - 1)
        };
        let real = |c: usize, name: &str| -> Result<f64> {
            let v: f64 = rec[c]
                .trim()
                .parse()
                .map_err(|_| parse_error(source, line, format!("{name} '{}' is not a number", &rec[c])))?;
            if !v.is_finite() {
                return Err(parse_error(source, line, format!("{name} is not finite")));
            }
            Ok(v)
        };
        let (j, i, t) = (id(0, "outcome")?, id(1, "unit")?, id(2, "time")?);
        let missing = match rec[4].trim() {
            "0" => false,
            "1" => true,
            other => {
                return Err(parse_error(
                    source,
                    line,
                    format!("missing must be 0 or 1, found '{other}'"),
                ))
            }
        };
        let y = if missing && rec[3].trim().is_empty() {
            0.0
        } else {
            real(3, "y")?
        };
        let x = (0..k)
            .map(|c| real(5 + c, &format!("x{}", c + 1)))
            .collect::<Result<Vec<f64>>>()?;
        rows.push(Row {
            j,
            i,
            t,
            y,
            missing,
            x,
            line,
        });
    }
    if rows.is_empty() {
        return Err(parse_error(source, 2, "panel has no rows"));
    }
    let g = rows.iter().map(|r| r.j).max().unwrap_or(0) + 1;
    let n = rows.iter().map(|r| r.i).max().unwrap_or(0) + 1;
    let t_len = rows.iter().map(|r| r.t).max().unwrap_or(0) + 1;
    let len = g * n * t_len;
    if rows.len() != len {
        return Err(parse_error(
            source,
            rows.len() + 1,
            format!("expected {len} rows for G={g}, N={n}, T={t_len}, found {}", rows.len()),
        ));
    }
    let mut seen = vec![false; len];
    let mut y = vec![0.0; len];
    let mut missing = vec![false; len];
    let mut x = vec![DMatrix::zeros(n * t_len, k); g];
    for r in rows {
        let l = (r.t * g + r.j) * n + r.i;
        if seen[l] {
            return Err(parse_error(
                source,
                r.line,
                format!("duplicate cell outcome={} unit={} time={}", r.j + 1, r.i + 1, r.t + 1),
            ));
        }
        seen[l] = true;
        y[l] = r.y;
        missing[l] = r.missing;
        for (c, v) in r.x.into_iter().enumerate() {
            x[r.j][(r.t * n + r.i, c)] = v;
        }
    }
    Ok(PanelFile {
        g,
        n,
        t: t_len,
        k,
        data: PanelData { y, missing, x },
    })
}

pub fn read_panel_file(path: &Path) -> Result<PanelFile> {
    read_panel(BufReader::new(File::open(path)?), &path.display().to_string())
}

/// Writes a panel CSV in flat-index order.
pub fn write_panel<W: Write>(spec: &ModelSpec, data: &PanelData, out: W) -> Result<()> {
    let k = spec.n_predictors().iter().copied().max().unwrap_or(0);
    let mut w = csv::Writer::from_writer(out);
    let mut header: Vec<String> = ["outcome", "unit", "time", "y", "missing"].map(String::from).to_vec();
    header.extend((1..=k).map(|c| format!("x{c}")));
    w.write_record(&header).map_err(csv_io)?;
    let n = spec.n();
    for l in 0..spec.len() {
        let (j, i, t) = spec.coords(l);
        let mut rec = vec![
            (j + 1).to_string(),
            (i + 1).to_string(),
            (t + 1).to_string(),
            if data.missing[l] {
                String::new()
            } else {
                data.y[l].to_string()
            },
            u8::from(data.missing[l]).to_string(),
        ];
        let xj = &data.x[j];
        rec.extend((0..k).map(|c| {
            if c < xj.ncols() {
                xj[(t * n + i, c)].to_string()
            } else {
                "0".into()
            }
        }));
        w.write_record(&rec).map_err(csv_io)?;
    }
    w.flush()?;
    Ok(())
}

fn csv_io(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e.to_string()))
}

pub fn read_weights(path: &Path) -> Result<SpatialWeights> {
    let m = market::read(BufReader::new(File::open(path)?), &path.display().to_string())?;
    SpatialWeights::new(m)
}

/// Writes the final latent samples in the dump format.
pub fn write_samples<W: Write>(spec: &ModelSpec, fit: &FitResult, out: W) -> Result<()> {
    let mut w = BufWriter::new(out);
    w.write_all(SAMPLE_MAGIC)?;
    for v in [fit.z_samples_final.len(), spec.n(), spec.g(), spec.t()] {
        w.write_all(&(v as u64).to_le_bytes())?;
    }
    for s in &fit.z_samples_final {
        for z in &s.z {
            w.write_all(&z.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Reads a dump back as `(S, N, G, T, values)`.
pub fn read_samples<R: Read>(mut input: R) -> Result<(usize, usize, usize, usize, Vec<f64>)> {
    let mut magic = [0u8; 8];
    input.read_exact(&mut magic)?;
    if &magic != SAMPLE_MAGIC {
        return Err(Error::invalid("not a latent sample dump"));
    }
    let mut dims = [0usize; 4];
    for d in &mut dims {
        let mut b = [0u8; 8];
        input.read_exact(&mut b)?;
        *d = u64::from_le_bytes(b) as usize;
    }
    let mut bytes = Vec::new();
    input.read_to_end(&mut bytes)?;
    let count = dims.iter().product::<usize>();
    if bytes.len() != 8 * count {
        return Err(Error::dim(format!(
            "dump holds {} bytes of values, expected {}",
            bytes.len(),
            8 * count
        )));
    }
    let values = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect();
    Ok((dims[0], dims[1], dims[2], dims[3], values))
}

fn write_rows(path: &Path, header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_io)?;
    w.write_record(header).map_err(csv_io)?;
    for r in rows {
        w.write_record(&r).map_err(csv_io)?;
    }
    w.flush()?;
    Ok(())
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Everything `fit` and `predict` need, validated before any output is
/// written.
struct Prepared {
    config: RunConfig,
    spec: ModelSpec,
    data: PanelData,
    inputs: Vec<PathBuf>,
    generated_weights: bool,
}

fn prepare(input: &FitInput) -> Result<Prepared> {
    let config = RunConfig::load(&input.config)?;
    config.em.validate()?;
    config.gibbs.validate()?;
    let panel = read_panel_file(&input.data)?;
    let mut inputs = vec![input.config.clone(), input.data.clone()];
    let (weights, generated_weights) = match &input.weights {
        Some(p) => {
            inputs.push(p.clone());
            (read_weights(p)?, false)
        }
        None => {
            let side = (panel.n as f64).sqrt().round() as usize;
            if side * side != panel.n || side < 2 {
                return Err(Error::invalid(format!(
                    "no weights given and N = {} is not a square lattice",
                    panel.n
                )));
            }
            (make_grid_weights(side, config.model.torus), true)
        }
    };
    if weights.n() != panel.n {
        return Err(Error::dim(format!(
            "weights have {} units, panel has {}",
            weights.n(),
            panel.n
        )));
    }
    if config.model.families.len() != panel.g {
        return Err(Error::invalid(format!(
            "model.families lists {} outcomes, panel has {}",
            config.model.families.len(),
            panel.g
        )));
    }
    let spec = ModelSpec::new(panel.t, weights, config.model.families.clone(), vec![panel.k; panel.g])?
        .with_dependence(config.model.dependence);
    panel.data.validate(&spec)?;
    Ok(Prepared {
        config,
        spec,
        data: panel.data,
        inputs,
        generated_weights,
    })
}

struct Outputs {
    dir: PathBuf,
    files: Vec<PathBuf>,
}

impl Outputs {
    fn create(dir: &Path) -> Result<Self> {
        std::fs::create_dir_all(dir)?;
        Ok(Self {
            dir: dir.to_path_buf(),
            files: vec![],
        })
    }

    fn path(&mut self, name: &str) -> PathBuf {
        let p = self.dir.join(name);
        self.files.push(p.clone());
        p
    }

    fn finish(
        self,
        command: &str,
        config: &RunConfig,
        seed: u64,
        inputs: &[PathBuf],
        start: (Instant, f64),
    ) -> Result<()> {
        let manifest = RunManifest {
            command: command.into(),
            args: std::env::args().collect(),
            config: serde_json::to_value(config).expect("config serializes"),
            seed,
            version: env!("CARGO_PKG_VERSION").into(),
            inputs: digests(inputs)?,
            outputs: digests(&self.files)?,
            wall_seconds: start.0.elapsed().as_secs_f64(),
            cpu_seconds: process_cpu_seconds() - start.1,
        };
        let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes") + "\n";
        std::fs::write(self.dir.join("manifest.json"), text)?;
        Ok(())
    }
}

fn write_fit(out: &mut Outputs, spec: &ModelSpec, data: &PanelData, f: &FitResult) -> Result<()> {
    let names = &f.param_names;
    let layout = crate::mcem::ParamLayout::new(spec);
    let est = layout.values(&f.theta_hat);
    write_rows(
        &out.path("estimates.csv"),
        &["parameter", "estimate", "se"],
        names
            .iter()
            .enumerate()
            .map(|(i, n)| vec![n.clone(), est[i].to_string(), opt(f.se.as_ref().map(|s| s[i]))]),
    )?;
    let mut header = vec!["iteration", "q"];
    header.extend(names.iter().map(String::as_str));
    write_rows(
        &out.path("trace.csv"),
        &header,
        f.theta_trace.iter().zip(&f.q_trace).enumerate().map(|(it, (th, q))| {
            let mut r = vec![(it + 1).to_string(), q.to_string()];
            r.extend(layout.values(th).iter().map(|v| v.to_string()));
            r
        }),
    )?;
    let summary = serde_json::json!({
        "converged": f.converged,
        "iterations": f.iterations,
        "theta_hat": f.theta_hat,
        "se_error": f.se_error,
    });
    std::fs::write(
        out.path("fit.json"),
        serde_json::to_string_pretty(&summary).expect("json") + "\n",
    )?;
    if spec.families().iter().all(|&fam| fam == Family::Count) {
        let rep = elasticities(spec, &f.theta_hat, data)?;
        write_rows(
            &out.path("elasticities.csv"),
            &["outcome", "predictor", "direct", "spillover"],
            rep.entries.iter().map(|e| {
                vec![
                    (e.outcome + 1).to_string(),
                    format!("x{}", e.predictor + 1),
                    e.direct.to_string(),
                    e.spillover.to_string(),
                ]
            }),
        )?;
    }
    Ok(())
}

fn cmd_simulate(config_path: &Path, out_dir: &Path, start: (Instant, f64)) -> Result<()> {
    let mut config = RunConfig::load(config_path)?;
    let dgp = config
        .dgp
        .clone()
        .ok_or_else(|| Error::invalid("simulate needs a 'dgp' section in the config"))?;
    let spec = dgp.spec()?;
    dgp.theta.validate(&spec)?;
    config.model.families = vec![dgp.family; dgp.g];
    config.model.torus = dgp.torus;
    let (data, _) = simulate(&dgp)?;
    let mut out = Outputs::create(out_dir)?;
    write_panel(&spec, &data, File::create(out.path("panel.csv"))?)?;
    market::write(
        spec.weights().matrix(),
        BufWriter::new(File::create(out.path("weights.mtx"))?),
    )?;
    std::fs::write(
        out.path("theta.json"),
        serde_json::to_string_pretty(&dgp.theta).expect("json") + "\n",
    )?;
    std::fs::write(out.path("config.json"), config.to_json())?;
    out.finish("simulate", &config, dgp.seed, &[config_path.to_path_buf()], start)
}

fn cmd_fit(input: &FitInput, dump: bool, start: (Instant, f64)) -> Result<()> {
    let p = prepare(input)?;
    let f = fit(&p.spec, &p.data, &p.config.em, &p.config.gibbs)?;
    let mut out = Outputs::create(&input.out)?;
    write_fit(&mut out, &p.spec, &p.data, &f)?;
    if p.generated_weights {
        market::write(
            p.spec.weights().matrix(),
            BufWriter::new(File::create(out.path("weights.mtx"))?),
        )?;
    }
    if dump {
        write_samples(&p.spec, &f, File::create(out.path("samples.bin"))?)?;
    }
    std::fs::write(out.path("config.json"), p.config.to_json())?;
    out.finish("fit", &p.config, p.config.gibbs.seed, &p.inputs, start)
}

fn cmd_predict(input: &FitInput, truth_path: Option<&Path>, start: (Instant, f64)) -> Result<()> {
    let mut p = prepare(input)?;
    if p.data.n_missing() == 0 {
        return Err(Error::invalid("the panel has no missing cells to predict"));
    }
    let truth = match truth_path {
        Some(path) => {
            let t = read_panel_file(path)?;
            if (t.g, t.n, t.t) != (p.spec.g(), p.spec.n(), p.spec.t()) {
                return Err(Error::dim(format!(
                    "truth panel is G={}, N={}, T={}; data is G={}, N={}, T={}",
                    t.g,
                    t.n,
                    t.t,
                    p.spec.g(),
                    p.spec.n(),
                    p.spec.t()
                )));
            }
            if let Some(l) = (0..p.spec.len()).find(|&l| p.data.missing[l] && t.data.missing[l]) {
                let (j, i, tt) = p.spec.coords(l);
                return Err(Error::invalid(format!(
                    "truth lacks outcome={} unit={} time={}",
                    j + 1,
                    i + 1,
                    tt + 1
                )));
            }
            p.inputs.push(path.to_path_buf());
            Some(t.data.y)
        }
        None => None,
    };
    let f = fit(&p.spec, &p.data, &p.config.em, &p.config.gibbs)?;
    let preds = predict_missing(&f, &p.spec, &p.data)?;
    let mut out = Outputs::create(&input.out)?;
    write_fit(&mut out, &p.spec, &p.data, &f)?;
    let mut header = vec!["outcome", "unit", "time", "prediction"];
    if truth.is_some() {
        header.push("truth");
    }
    write_rows(
        &out.path("predictions.csv"),
        &header,
        preds.iter().map(|pr| {
            let mut r = vec![
                (pr.outcome + 1).to_string(),
                (pr.unit + 1).to_string(),
                (pr.time + 1).to_string(),
                pr.value.to_string(),
            ];
            if let Some(t) = &truth {
                r.push(t[pr.index].to_string());
            }
            r
        }),
    )?;
    if let Some(t) = &truth {
        let mut rows = Vec::new();
        let mut groups: Vec<(String, Vec<usize>)> = (0..p.spec.g())
            .map(|j| {
                (
                    (j + 1).to_string(),
                    (0..preds.len()).filter(|&c| preds[c].outcome == j).collect(),
                )
            })
            .collect();
        groups.push(("all".into(), (0..preds.len()).collect()));
        for (label, idx) in groups {
            if idx.is_empty() {
                continue;
            }
            let pv: Vec<f64> = idx.iter().map(|&c| preds[c].value).collect();
            let tv: Vec<f64> = idx.iter().map(|&c| t[preds[c].index]).collect();
            let (rmse, mae) = prediction_loss(&pv, &tv)?;
            rows.push(vec![label, idx.len().to_string(), rmse.to_string(), mae.to_string()]);
        }
        write_rows(&out.path("loss.csv"), &["outcome", "cells", "rmse", "mae"], rows)?;
    }
    if p.generated_weights {
        market::write(
            p.spec.weights().matrix(),
            BufWriter::new(File::create(out.path("weights.mtx"))?),
        )?;
    }
    std::fs::write(out.path("config.json"), p.config.to_json())?;
    out.finish("predict", &p.config, p.config.gibbs.seed, &p.inputs, start)
}

#[derive(Serialize)]
struct CoverageRow<'a> {
    setting: &'a str,
    parameter: &'a str,
    coverage: Option<f64>,
    n_intervals: usize,
    accept_lo: f64,
    accept_hi: f64,
    consistent: Option<bool>,
}

fn cmd_benchmark(
    suite: Suite,
    out_dir: &Path,
    long: bool,
    config_path: Option<&Path>,
    replications: Option<usize>,
    start: (Instant, f64),
) -> Result<()> {
    let mut config = match config_path {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    config.em.validate()?;
    config.gibbs.validate()?;
    if replications == Some(0) {
        return Err(Error::invalid("replications must be at least 1"));
    }
    let inputs: Vec<PathBuf> = config_path.map(Path::to_path_buf).into_iter().collect();
    let report = match suite {
        Suite::Recovery | Suite::Coverage => {
            let base = config
                .dgp
                .clone()
                .unwrap_or_else(|| DgpConfig::count_panel(2, 6, 10, 0.25, 1));
            base.spec()?;
            config.dgp = Some(base.clone());
            let reps = replications.unwrap_or(if long { 50 } else { 20 });
            let sides: Vec<usize> = if long { vec![base.side, 16] } else { vec![base.side] };
            let mut report = ExperimentReport::new(if suite == Suite::Recovery {
                "recovery"
            } else {
                "coverage"
            });
            for side in sides {
                let dgp = DgpConfig { side, ..base.clone() };
                report.extend(run_recovery(&dgp, reps, &config.em, &config.gibbs)?);
            }
            report
        }
        Suite::QevalTiming => run_qeval_timing(&default_timing_sweeps(long), config.em.mc_samples)?,
        Suite::Sprobit => {
            let mut sp = if long {
                SprobitConfig::long()
            } else {
                SprobitConfig::desk()
            };
            if config_path.is_some() {
                sp.em = config.em.clone();
                sp.gibbs = config.gibbs.clone();
            } else {
                config.em = sp.em.clone();
            }
            if let Some(r) = replications {
                sp.replications = r;
            }
            run_sprobit_study(&sp)?
        }
    };
    let mut out = Outputs::create(out_dir)?;
    let written = report.write(out_dir)?;
    out.files.extend(written);
    if suite == Suite::Coverage {
        let rows: Vec<CoverageRow> = report
            .params
            .iter()
            .map(|p| {
                let (lo, hi) = binomial_acceptance_region(p.n_intervals.max(1), 0.9, 0.05);
                CoverageRow {
                    setting: &p.setting,
                    parameter: &p.parameter,
                    coverage: p.coverage,
                    n_intervals: p.n_intervals,
                    accept_lo: lo,
                    accept_hi: hi,
                    consistent: p.coverage.map(|c| c >= lo - 1e-12 && c <= hi + 1e-12),
                }
            })
            .collect();
        let path = out.path("coverage.csv");
        let mut w = csv::Writer::from_path(&path).map_err(csv_io)?;
        for r in &rows {
            w.serialize(r).map_err(csv_io)?;
        }
        w.flush()?;
    }
    std::fs::write(out.path("config.json"), config.to_json())?;
    out.finish(
        &format!(
            "benchmark {}",
            serde_json::to_value(suite).expect("json").as_str().unwrap_or("")
        ),
        &config,
        config.gibbs.seed,
        &inputs,
        start,
    )
}

fn configure_threads(flag: Option<usize>) -> Result<()> {
    let n = match flag {
        Some(n) => Some(n),
        None => match std::env::var(THREADS_ENV) {
            Ok(v) => Some(
                v.trim()
                    .parse()
                    .map_err(|_| Error::invalid(format!("{THREADS_ENV}='{v}' is not a thread count")))?,
            ),
            Err(_) => None,
        },
    };
    if let Some(n) = n {
        if n == 0 {
            return Err(Error::invalid("thread count must be at least 1"));
        }
        // a second configuration in the same process keeps the first pool
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    Ok(())
}

/// Runs a parsed command.
pub fn execute(cli: &Cli) -> Result<()> {
    configure_threads(cli.threads)?;
    let start = (Instant::now(), process_cpu_seconds());
    match &cli.command {
        Command::Simulate { config, out } => cmd_simulate(config, out, start),
        Command::Fit { input, dump_samples } => cmd_fit(input, *dump_samples, start),
        Command::Predict { input, truth } => cmd_predict(input, truth.as_deref(), start),
        Command::Benchmark {
            suite,
            out,
            long,
            config,
            replications,
        } => cmd_benchmark(*suite, out, *long, config.as_deref(), *replications, start),
    }
}

/// Parses arguments, runs the command and returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match execute(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const PANEL: &str = "outcome,unit,time,y,missing,x1\n\
        1,1,1,3,0,1\n1,2,1,,1,1\n1,1,2,0,0,1\n1,2,2,5,0,1\n";

    #[test]
    fn panel_round_trip() {
        let p = read_panel(PANEL.as_bytes(), "t.csv").unwrap();
        assert_eq!((p.g, p.n, p.t, p.k), (1, 2, 2, 1));
        assert_eq!(p.data.missing, vec![false, true, false, false]);
        assert_eq!(p.data.y[3], 5.0);
        let w =
            SpatialWeights::new(crate::sparse::SparseMatrix::from_triplets(2, 2, [(0, 1, 1.0), (1, 0, 1.0)]).unwrap())
                .unwrap();
        let spec = ModelSpec::new(2, w, vec![Family::Count], vec![1]).unwrap();
        let mut buf = Vec::new();
        write_panel(&spec, &p.data, &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), PANEL);
    }

    #[test]
    fn panel_errors_name_the_line() {
        let bad = "outcome,unit,time,y,missing,x1\n1,1,1,3,0,1\n1,2,1,abc,0,1\n";
        let e = read_panel(bad.as_bytes(), "p.csv").unwrap_err().to_string();
        assert!(e.starts_with("p.csv:3:"), "{e}");
        let dup = "outcome,unit,time,y,missing\n1,1,1,3,0\n1,1,1,3,0\n";
        assert!(read_panel(dup.as_bytes(), "p.csv").is_err());
        let header = "outcome,unit,t,y,missing\n1,1,1,3,0\n";
        assert!(read_panel(header.as_bytes(), "p.csv")
            .unwrap_err()
            .to_string()
            .starts_with("p.csv:1:"));
    }

    #[test]
    fn config_errors_are_line_anchored() {
        let e = RunConfig::parse("{\n  \"em\": {\"max_iter\": \"x\"}\n}", "c.json").unwrap_err();
        assert!(e.to_string().starts_with("c.json:2:"), "{e}");
        let e = RunConfig::parse("{\"emm\": {}}", "c.json").unwrap_err();
        assert!(matches!(e, Error::Parse { .. }));
        assert_eq!(e.exit_code(), 2);
    }

    #[test]
    fn effective_config_lists_defaults() {
        let c = RunConfig::parse("{}", "c.json").unwrap();
        let text = c.to_json();
        for key in [
            "max_iter",
            "mc_samples",
            "burn_in",
            "warm_burn_in",
            "grid_resolution",
            "margin",
        ] {
            assert!(text.contains(key), "{key} missing from {text}");
        }
        assert_eq!(RunConfig::parse(&text, "c.json").unwrap(), c);
    }

    #[test]
    fn sample_dump_round_trip() {
        let spec = ModelSpec::new(1, make_grid_weights(2, false), vec![Family::Count], vec![0]).unwrap();
        let f = FitResult {
            theta_hat: crate::model::Theta::zeros(&spec),
            param_names: vec![],
            se: None,
            se_error: None,
            q_trace: vec![],
            theta_trace: vec![],
            z_samples_final: vec![vec![1.0, 2.0, 3.0, 4.0].into(), vec![-1.0, 0.5, 0.0, 9.0].into()],
            converged: true,
            iterations: 1,
        };
        let mut buf = Vec::new();
        write_samples(&spec, &f, &mut buf).unwrap();
        let (s, n, g, t, v) = read_samples(buf.as_slice()).unwrap();
        assert_eq!((s, n, g, t), (2, 4, 1, 1));
        assert_eq!(v[5], 0.5);
    }

    #[test]
    fn usage_errors_exit_with_two() {
        assert_eq!(run(["star", "benchmark", "nonsense", "--out", "x"]), 2);
        assert_eq!(run(["star", "frobnicate"]), 2);
    }
}
