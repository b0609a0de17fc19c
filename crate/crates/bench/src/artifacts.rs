//! On-disk formats for everything a run produces besides checkpoints.

use std::fmt::Write as _;
use std::path::Path;

use anyhow::{bail, ensure, Context, Result};
use serde::{Deserialize, Serialize};

use distrobust_core::attacks::{AdversarialBatch, AttackSpec};
use distrobust_core::data::{DataPartition, Dataset, PartitionSpec};
use distrobust_core::metrics::{EvaluationRecord, Heatmap, ParetoPoint};
use distrobust_core::stats::{Coefficient, RegressionResult};
use distrobust_core::Tensor;

/// Writes through a temporary sibling and a rename, so a file that exists
/// is always complete.
pub fn write(path: &Path, bytes: impl AsRef<[u8]>) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(format!(".tmp{:?}", std::thread::current().id()).replace(['(', ')'], ""));
    std::fs::write(&tmp, bytes).with_context(|| format!("writing {}", path.display()))?;
    std::fs::rename(&tmp, path).with_context(|| format!("renaming into {}", path.display()))
}

pub fn read_string(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    write(path, s)
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    serde_json::from_str(&read_string(path)?).with_context(|| format!("parsing {}", path.display()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartitionFile {
    pub spec: PartitionSpec,
    pub partition: DataPartition,
}

// ---------------------------------------------------------------- records

pub const RECORD_HEADER: [&str; 9] = ["scenario", "N", "seed", "voting", "attack", "CA", "ASR", "RA", "n"];

/// Records as CSV with the fixed header. Floats use the shortest
/// representation that parses back to the same value.
pub fn records_csv(records: &[EvaluationRecord]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(RECORD_HEADER)?;
    for r in records {
        w.write_record([
            r.scenario.clone(),
            r.nodes.to_string(),
            r.seed.to_string(),
            r.voting.name().to_string(),
            r.attack_name().to_string(),
            r.ca.to_string(),
            r.asr.to_string(),
            r.ra.to_string(),
            r.n.to_string(),
        ])?;
    }
    Ok(String::from_utf8(w.into_inner()?)?)
}

pub fn parse_records(text: &str) -> Result<Vec<EvaluationRecord>> {
    let mut rd = csv::Reader::from_reader(text.as_bytes());
    let header: Vec<String> = rd.headers()?.iter().map(str::to_string).collect();
    ensure!(header == RECORD_HEADER, "unexpected record header {:?}", header);
    let mut out = Vec::new();
    for row in rd.records() {
        let row = row?;
        let f = |i: usize| row.get(i).unwrap_or("");
        let attack = match f(4) {
            "clean" => None,
            a => Some(a.parse()?),
        };
        out.push(EvaluationRecord {
            scenario: f(0).to_string(),
            nodes: f(1).parse()?,
            seed: f(2).parse()?,
            voting: f(3).parse()?,
            attack,
            ca: f(5).parse()?,
            asr: f(6).parse()?,
            ra: f(7).parse()?,
            n: f(8).parse()?,
        });
    }
    Ok(out)
}

// ------------------------------------------------------ adversarial batches

/// Everything about an adversarial batch except the pixel data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdversarialManifest {
    pub spec: AttackSpec,
    /// Indices of the originals in the test split.
    pub indices: Vec<usize>,
    pub labels: Vec<usize>,
    pub seed: u64,
    /// Checkpoint files of the surrogates, relative to the run directory.
    pub surrogates: Vec<String>,
    pub loss_trace: Vec<Vec<f64>>,
}

/// Rounds `perturbed` so that `originals + (perturbed − originals)`
/// reproduces it exactly in `f32`; the stored perturbation then reloads
/// bit-identically. Values stay in `[0, 1]`.
pub fn canonicalize(adv: &mut AdversarialBatch<f32>) {
    let orig = adv.originals.data().to_vec();
    for (p, &x) in adv.perturbed.data_mut().iter_mut().zip(&orig) {
        for _ in 0..4 {
            let q = (x + (*p - x)).clamp(0.0, 1.0);
            if q == *p {
                break;
            }
            *p = q;
        }
        if x + (*p - x) != *p {
            *p = x;
        }
    }
}

pub fn save_adversarial(dir: &Path, adv: &AdversarialBatch<f32>, manifest: &AdversarialManifest) -> Result<()> {
    let mut bytes = Vec::with_capacity(4 * adv.perturbed.len());
    for d in adv.perturbation() {
        bytes.extend(d.to_le_bytes());
    }
    write(&dir.join("perturbation.f32"), bytes)?;
    write_json(&dir.join("manifest.json"), manifest)
}

/// Rebuilds a batch from its files and the test split it indexes into.
pub fn load_adversarial(dir: &Path, test: &Dataset) -> Result<(AdversarialBatch<f32>, AdversarialManifest)> {
    let manifest: AdversarialManifest = read_json(&dir.join("manifest.json"))?;
    let path = dir.join("perturbation.f32");
    let raw = std::fs::read(&path).with_context(|| format!("reading {}", path.display()))?;
    ensure!(
        manifest.indices.iter().all(|&i| i < test.len()),
        "adversarial indices exceed the test split"
    );
    let (originals, labels) = test.batch::<f32>(&manifest.indices);
    ensure!(labels == manifest.labels, "test labels disagree with {}", dir.display());
    ensure!(
        raw.len() == 4 * originals.len(),
        "{} holds {} bytes, expected {}",
        path.display(),
        raw.len(),
        4 * originals.len()
    );
    let data = originals
        .data()
        .iter()
        .zip(raw.chunks_exact(4))
        .map(|(x, c)| x + f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    let perturbed = Tensor::new(originals.shape().to_vec(), data)?;
    let adv = AdversarialBatch {
        originals,
        perturbed,
        labels,
        spec: manifest.spec,
        loss_trace: manifest.loss_trace.clone(),
    };
    Ok((adv, manifest))
}

// ---------------------------------------------------------------- heatmaps

pub fn heatmap_csv(h: &Heatmap, row_labels: &[String], col_labels: &[String]) -> String {
    let mut s = String::from("surrogate");
    for c in col_labels {
        s.push(',');
        s.push_str(c);
    }
    s.push('\n');
    for (i, r) in row_labels.iter().enumerate() {
        s.push_str(r);
        for j in 0..h.cols {
            let _ = write!(s, ",{}", h.get(i, j));
        }
        s.push('\n');
    }
    s
}

pub fn parse_heatmap(text: &str) -> Result<(Heatmap, Vec<String>, Vec<String>)> {
    let mut lines = text.lines();
    let header = lines.next().context("empty heatmap")?;
    let cols: Vec<String> = header.split(',').skip(1).map(str::to_string).collect();
    let mut rows = Vec::new();
    let mut values = Vec::new();
    for line in lines {
        let mut it = line.split(',');
        rows.push(it.next().unwrap_or("").to_string());
        let v: Vec<f64> = it.map(str::parse).collect::<Result<_, _>>()?;
        ensure!(v.len() == cols.len(), "ragged heatmap row");
        values.extend(v);
    }
    Ok((
        Heatmap {
            rows: rows.len(),
            cols: cols.len(),
            values,
        },
        rows,
        cols,
    ))
}

// ----------------------------------------------------------------- pareto

/// All points with a frontier flag; doubles as plot data (x = CA, y = RA).
pub fn pareto_csv(points: &[ParetoPoint], frontier: &[ParetoPoint]) -> String {
    let mut s = String::from("label,CA,RA,frontier\n");
    for p in points {
        let _ = writeln!(s, "{},{},{},{}", p.label, p.ca, p.ra, frontier.contains(p) as u8);
    }
    s
}

pub fn parse_pareto(text: &str) -> Result<Vec<(ParetoPoint, bool)>> {
    let mut out = Vec::new();
    for line in text.lines().skip(1) {
        let f: Vec<&str> = line.split(',').collect();
        ensure!(f.len() == 4, "bad pareto row `{}`", line);
        out.push((ParetoPoint::new(f[0], f[1].parse()?, f[2].parse()?), f[3] == "1"));
    }
    Ok(out)
}

/// Whitespace-separated `CA RA label` rows of the frontier, sorted by CA,
/// ready for gnuplot-style tools.
pub fn frontier_plot_data(frontier: &[ParetoPoint]) -> String {
    let mut f = frontier.to_vec();
    f.sort_by(|a, b| a.ca.total_cmp(&b.ca).then(a.ra.total_cmp(&b.ra)));
    let mut s = String::from("# CA RA label\n");
    for p in f {
        let _ = writeln!(s, "{} {} {}", p.ca, p.ra, p.label);
    }
    s
}

// ------------------------------------------------------------- regression

pub fn parse_regression_csv(text: &str) -> Result<RegressionResult> {
    let mut lines = text.lines();
    ensure!(lines.next() == Some("name,coef,std_err,t,p,ci_low,ci_high"), "bad regression header");
    let mut coefficients = Vec::new();
    let (mut n, mut k, mut rss, mut sigma2, mut r2) = (None, None, None, None, None);
    for line in lines {
        let f: Vec<&str> = line.split(',').collect();
        match f[0] {
            "#n" => n = Some(f[1].parse()?),
            "#k" => k = Some(f[1].parse()?),
            "#rss" => rss = Some(f[1].parse()?),
            "#sigma2" => sigma2 = Some(f[1].parse()?),
            "#r2" => r2 = Some(f[1].parse()?),
            name => {
                ensure!(f.len() == 7, "bad coefficient row `{}`", line);
                let v: Vec<f64> = f[1..].iter().map(|s| s.parse()).collect::<Result<_, _>>()?;
                coefficients.push(Coefficient {
                    name: name.to_string(),
                    estimate: v[0],
                    std_err: v[1],
                    t: v[2],
                    p: v[3],
                    ci_low: v[4],
                    ci_high: v[5],
                });
            }
        }
    }
    match (n, k, rss, sigma2, r2) {
        (Some(n), Some(k), Some(rss), Some(sigma2), Some(r2)) => Ok(RegressionResult {
            coefficients,
            rss,
            sigma2,
            r2,
            n,
            k,
        }),
        _ => bail!("regression CSV lacks summary rows"),
    }
}
