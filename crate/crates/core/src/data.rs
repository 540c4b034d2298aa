//! Synthetic line-graph datasets and CSV input/output.
//!
//! Graph files have the header `src,dst,weight` (weight optional, default 1);
//! series files are long format `node_id,t,y`. Floats are written in Rust's
//! shortest round-trip form, so reading a written file reproduces every
//! value bit for bit.

use std::f64::consts::PI;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gp::{Observation, SpatioTemporalDataset};
use crate::graph::Graph;
use crate::kernels::STPoint;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SyntheticKind {
    HeatLine,
    WaveLine,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub kind: SyntheticKind,
    pub n_nodes: usize,
    /// Conductivity `k` for the heat line.
    #[serde(default = "one")]
    pub conductivity: f64,
    /// Propagation speed for the wave line.
    #[serde(default = "one")]
    pub speed: f64,
    pub timestamps: Vec<f64>,
    #[serde(default)]
    pub noise_sd: f64,
    #[serde(default)]
    pub seed: u64,
}

fn one() -> f64 {
    1.0
}

pub const DEFAULT_HEAT_NODES: usize = 21;
pub const DEFAULT_WAVE_NODES: usize = 11;

impl SyntheticSpec {
    pub fn heat_line(timestamps: Vec<f64>) -> Self {
        SyntheticSpec {
            kind: SyntheticKind::HeatLine,
            n_nodes: DEFAULT_HEAT_NODES,
            conductivity: 1.0,
            speed: 1.0,
            timestamps,
            noise_sd: 0.0,
            seed: 0,
        }
    }

    pub fn wave_line(timestamps: Vec<f64>) -> Self {
        SyntheticSpec {
            kind: SyntheticKind::WaveLine,
            n_nodes: DEFAULT_WAVE_NODES,
            ..Self::heat_line(timestamps)
        }
    }

    fn validate(&self) -> Result<()> {
        if self.n_nodes < 2 {
            return Err(Error::InvalidParameter(format!(
                "a line graph needs at least 2 nodes, got {}",
                self.n_nodes
            )));
        }
        if self.timestamps.is_empty() {
            return Err(Error::InvalidParameter("no timestamps".into()));
        }
        if self
            .timestamps
            .windows(2)
            .any(|w| w[1].partial_cmp(&w[0]) != Some(std::cmp::Ordering::Greater))
        {
            return Err(Error::InvalidParameter(
                "timestamps must be strictly ascending".into(),
            ));
        }
        for (name, v) in [("conductivity", self.conductivity), ("speed", self.speed)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidParameter(format!(
                    "{name} must be positive, got {v}"
                )));
            }
        }
        if !(self.noise_sd >= 0.0 && self.noise_sd.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "noise_sd must be non-negative, got {}",
                self.noise_sd
            )));
        }
        Ok(())
    }
}

/// `Φ(x, t) = 5/(4πkt) · exp(−x²/(4kt))`.
pub fn heat_fundamental(x: f64, t: f64, k: f64) -> f64 {
    5.0 / (4.0 * PI * k * t) * (-x * x / (4.0 * k * t)).exp()
}

/// Standing wave `cos(ωt) sin(πx/L)` with `ω = speed·π/L`.
pub fn standing_wave(x: f64, t: f64, length: f64, speed: f64) -> f64 {
    let omega = speed * PI / length;
    (omega * t).cos() * (PI * x / length).sin()
}

fn sample_field(
    spec: &SyntheticSpec,
    field: impl Fn(usize, f64) -> f64,
) -> Result<(Arc<Graph>, SpatioTemporalDataset)> {
    spec.validate()?;
    let graph = Arc::new(Graph::path(spec.n_nodes)?);
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let noise =
        Normal::new(0.0, spec.noise_sd).map_err(|e| Error::InvalidParameter(e.to_string()))?;
    let mut obs = Vec::with_capacity(spec.n_nodes * spec.timestamps.len());
    for &t in &spec.timestamps {
        for v in 0..spec.n_nodes {
            let eps = if spec.noise_sd > 0.0 {
                noise.sample(&mut rng)
            } else {
                0.0
            };
            obs.push(Observation {
                point: STPoint::new(v, t),
                y: field(v, t) + eps,
            });
        }
    }
    let data = SpatioTemporalDataset::new(graph.clone(), obs)?;
    Ok((graph, data))
}

/// Heat fundamental solution on a line of integer coordinates centred at 0.
pub fn gen_heat_line(spec: &SyntheticSpec) -> Result<(Arc<Graph>, SpatioTemporalDataset)> {
    if spec.timestamps.iter().any(|t| *t <= 0.0) {
        return Err(Error::InvalidParameter(
            "the heat kernel is singular at t ≤ 0".into(),
        ));
    }
    let center = (spec.n_nodes as f64 - 1.0) / 2.0;
    sample_field(spec, |v, t| {
        heat_fundamental(v as f64 - center, t, spec.conductivity)
    })
}

/// Standing wave on a line with fixed ends at vertices `0` and `n − 1`.
pub fn gen_wave_line(spec: &SyntheticSpec) -> Result<(Arc<Graph>, SpatioTemporalDataset)> {
    let length = spec.n_nodes as f64 - 1.0;
    sample_field(spec, |v, t| standing_wave(v as f64, t, length, spec.speed))
}

pub fn generate(spec: &SyntheticSpec) -> Result<(Arc<Graph>, SpatioTemporalDataset)> {
    match spec.kind {
        SyntheticKind::HeatLine => gen_heat_line(spec),
        SyntheticKind::WaveLine => gen_wave_line(spec),
    }
}

fn parse_error(path: &Path, line: u64, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.display().to_string(),
        line,
        message: message.into(),
    }
}

fn open_csv(path: &Path) -> Result<csv::Reader<BufReader<File>>> {
    let file = File::open(path)?;
    Ok(csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(BufReader::new(file)))
}

fn column(headers: &csv::StringRecord, name: &str, path: &Path) -> Result<Option<usize>> {
    let _ = path;
    Ok(headers
        .iter()
        .position(|h| h.trim_start_matches('\u{feff}') == name))
}

fn required(headers: &csv::StringRecord, name: &str, path: &Path) -> Result<usize> {
    column(headers, name, path)?
        .ok_or_else(|| parse_error(path, 1, format!("missing column `{name}`")))
}

fn parse_float(field: &str, what: &str, path: &Path, line: u64) -> Result<f64> {
    let v: f64 = field
        .parse()
        .map_err(|_| parse_error(path, line, format!("{what} `{field}` is not a number")))?;
    if !v.is_finite() {
        return Err(parse_error(
            path,
            line,
            format!("{what} `{field}` is not finite"),
        ));
    }
    Ok(v)
}

/// Reads an edge list. The vertex set is every label mentioned.
pub fn load_graph_csv(path: impl AsRef<Path>, directed: bool) -> Result<Graph> {
    let path = path.as_ref();
    let mut reader = open_csv(path)?;
    let headers = reader.headers()?.clone();
    let src = required(&headers, "src", path)?;
    let dst = required(&headers, "dst", path)?;
    let weight = column(&headers, "weight", path)?;
    let mut labels: Vec<String> = Vec::new();
    let mut edges = Vec::new();
    for record in reader.records() {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line());
        let get = |i: usize| {
            record
                .get(i)
                .ok_or_else(|| parse_error(path, line, "too few fields"))
        };
        let (a, b) = (get(src)?.to_string(), get(dst)?.to_string());
        if a.is_empty() || b.is_empty() {
            return Err(parse_error(path, line, "empty vertex label"));
        }
        let w = match weight.map(get).transpose()? {
            Some(s) if !s.is_empty() => parse_float(s, "weight", path, line)?,
            _ => 1.0,
        };
        for l in [&a, &b] {
            if !labels.contains(l) {
                labels.push(l.clone());
            }
        }
        edges.push((a, b, w));
    }
    Graph::new(labels, edges, directed)
}

/// Reads long-format observations and resolves node labels against `graph`.
pub fn load_series_csv(path: impl AsRef<Path>, graph: Arc<Graph>) -> Result<SpatioTemporalDataset> {
    let path = path.as_ref();
    let mut reader = open_csv(path)?;
    let headers = reader.headers()?.clone();
    let node = required(&headers, "node_id", path)?;
    let time = required(&headers, "t", path)?;
    let value = required(&headers, "y", path)?;
    let mut obs = Vec::new();
    let mut seen = std::collections::HashSet::new();
    for record in reader.records() {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line());
        let get = |i: usize| {
            record
                .get(i)
                .ok_or_else(|| parse_error(path, line, "too few fields"))
        };
        let label = get(node)?;
        let vertex = graph
            .index_of(label)
            .ok_or_else(|| parse_error(path, line, format!("unknown node `{label}`")))?;
        let t = parse_float(get(time)?, "time", path, line)?;
        let y = parse_float(get(value)?, "value", path, line)?;
        if !seen.insert((vertex, (t + 0.0).to_bits())) {
            return Err(parse_error(
                path,
                line,
                format!("duplicate observation for node `{label}` at t = {t}"),
            ));
        }
        obs.push(Observation {
            point: STPoint::new(vertex, t),
            y,
        });
    }
    if obs.is_empty() {
        return Err(parse_error(path, 1, "no observations"));
    }
    SpatioTemporalDataset::new(graph, obs)
}

fn create(path: &Path) -> Result<csv::Writer<BufWriter<File>>> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent)?;
    }
    Ok(csv::Writer::from_writer(BufWriter::new(File::create(
        path,
    )?)))
}

pub fn write_graph_csv(path: impl AsRef<Path>, graph: &Graph) -> Result<()> {
    let mut w = create(path.as_ref())?;
    w.write_record(["src", "dst", "weight"])?;
    for e in graph.edges() {
        w.write_record([
            graph.label(e.source),
            graph.label(e.target),
            &e.weight.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_series_csv(path: impl AsRef<Path>, data: &SpatioTemporalDataset) -> Result<()> {
    let mut w = create(path.as_ref())?;
    w.write_record(["node_id", "t", "y"])?;
    let g = data.graph();
    for o in data.observations() {
        w.write_record([
            g.label(o.point.vertex),
            &o.point.time.to_string(),
            &o.y.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Writes a JSON document, creating parent directories.
pub fn write_json<T: Serialize>(path: impl AsRef<Path>, value: &T) -> Result<()> {
    let path = path.as_ref();
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent)?;
    }
    let mut f = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut f, value).map_err(|e| Error::Data(e.to_string()))?;
    writeln!(f)?;
    f.flush()?;
    Ok(())
}
