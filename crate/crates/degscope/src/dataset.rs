//! Dataset loading: a single tab-separated triple file, or a directory with
//! `train.txt` / `valid.txt` / `test.txt` and optional entity descriptions.

use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use degscope_core::synth::{scale_free_graph, ScaleFreeConfig};
use degscope_core::{GraphBuilder, KnowledgeGraph, Triple};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Description files probed inside a dataset directory, in order.
pub const DESCRIPTION_FILES: [&str; 2] = ["descriptions.txt", "entity2text.txt"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DatasetFormat {
    TsvTriples,
    OweDirectory,
    /// Generated scale-free graph; no path.
    Synthetic,
}

impl DatasetFormat {
    pub fn tag(self) -> &'static str {
        match self {
            DatasetFormat::TsvTriples => "tsv-triples",
            DatasetFormat::OweDirectory => "owe-directory",
            DatasetFormat::Synthetic => "synthetic",
        }
    }
}

impl fmt::Display for DatasetFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for DatasetFormat {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "tsv-triples" => Ok(DatasetFormat::TsvTriples),
            "owe-directory" => Ok(DatasetFormat::OweDirectory),
            "synthetic" => Ok(DatasetFormat::Synthetic),
            _ => Err(format!(
                "unknown dataset format `{s}` (expected tsv-triples, owe-directory or synthetic)"
            )),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Valid,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Valid, Split::Test];

    pub fn file_name(self) -> &'static str {
        match self {
            Split::Train => "train.txt",
            Split::Valid => "valid.txt",
            Split::Test => "test.txt",
        }
    }
}

/// A loaded dataset. `graph` holds every split; split triples use its ids.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub format: DatasetFormat,
    pub graph: KnowledgeGraph,
    pub splits: BTreeMap<Split, Vec<Triple>>,
    /// Exact repeats dropped while loading.
    pub duplicates: usize,
    pub descriptions: BTreeMap<String, String>,
}

impl Dataset {
    pub fn split(&self, s: Split) -> &[Triple] {
        self.splits.get(&s).map_or(&[], |v| v.as_slice())
    }

    /// Graph over the training split only, with its own id space.
    pub fn training_graph(&self) -> KnowledgeGraph {
        if self.splits.len() == 1 {
            return self.graph.clone();
        }
        let g = &self.graph;
        let (train, _) = KnowledgeGraph::from_labeled(self.split(Split::Train).iter().map(|t| {
            (
                g.entity_label(t.head),
                g.relation_label(t.relation),
                g.entity_label(t.tail),
            )
        }));
        train
    }

    pub fn synthetic(cfg: &ScaleFreeConfig) -> Result<Self> {
        let graph = scale_free_graph(cfg)?;
        let mut splits = BTreeMap::new();
        splits.insert(Split::Train, graph.triples().to_vec());
        Ok(Self {
            format: DatasetFormat::Synthetic,
            graph,
            splits,
            duplicates: 0,
            descriptions: BTreeMap::new(),
        })
    }
}

fn read_text(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    String::from_utf8(bytes).map_err(|e| Error::Parse {
        path: path.into(),
        line: 1 + e.as_bytes()[..e.utf8_error().valid_up_to()]
            .iter()
            .filter(|&&b| b == b'\n')
            .count(),
        message: "invalid UTF-8".into(),
    })
}

/// Parses tab-separated triples. Blank lines are skipped; any other line must
/// have exactly three non-empty fields.
pub fn parse_triples(path: &Path, text: &str) -> Result<Vec<(String, String, String)>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.strip_suffix('\r').unwrap_or(line);
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 3 || fields.iter().any(|f| f.is_empty()) {
            return Err(Error::Parse {
                path: path.into(),
                line: i + 1,
                message: format!(
                    "expected 3 non-empty tab-separated fields, found {}",
                    fields.len()
                ),
            });
        }
        out.push((fields[0].into(), fields[1].into(), fields[2].into()));
    }
    Ok(out)
}

fn parse_descriptions(path: &Path, text: &str) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.strip_suffix('\r').unwrap_or(line);
        if line.trim().is_empty() {
            continue;
        }
        let Some((id, desc)) = line.split_once('\t') else {
            return Err(Error::Parse {
                path: path.into(),
                line: i + 1,
                message: "expected `entity<TAB>description`".into(),
            });
        };
        out.insert(id.to_string(), desc.to_string());
    }
    Ok(out)
}

fn metadata(path: &Path) -> Result<std::fs::Metadata> {
    std::fs::metadata(path).map_err(|e| Error::io(path, e))
}

pub fn load_dataset(path: &Path, format: DatasetFormat) -> Result<Dataset> {
    let meta = metadata(path)?;
    let mut b = GraphBuilder::new();
    let mut splits = BTreeMap::new();
    let mut descriptions = BTreeMap::new();
    let add = |b: &mut GraphBuilder, rows: Vec<(String, String, String)>| -> Vec<Triple> {
        let mut ids = Vec::with_capacity(rows.len());
        for (h, r, t) in &rows {
            let h = b.add_entity(h);
            let r = b.add_relation(r);
            let t = b.add_entity(t);
            let triple = Triple {
                head: h,
                relation: r,
                tail: t,
            };
            if b.add(triple) {
                ids.push(triple);
            }
        }
        ids
    };
    match format {
        DatasetFormat::TsvTriples => {
            if meta.is_dir() {
                return Err(Error::Format(format!(
                    "{} is a directory; tsv-triples expects a file (try owe-directory)",
                    path.display()
                )));
            }
            let rows = parse_triples(path, &read_text(path)?)?;
            splits.insert(Split::Train, add(&mut b, rows));
        }
        DatasetFormat::OweDirectory => {
            if !meta.is_dir() {
                return Err(Error::Format(format!(
                    "{} is not a directory; owe-directory expects train.txt, valid.txt and test.txt",
                    path.display()
                )));
            }
            let train = path.join(Split::Train.file_name());
            if !train.is_file() {
                return Err(Error::NotFound(train));
            }
            for s in Split::ALL {
                let file = path.join(s.file_name());
                if s != Split::Train && !file.exists() {
                    continue;
                }
                let rows = parse_triples(&file, &read_text(&file)?)?;
                splits.insert(s, add(&mut b, rows));
            }
            if let Some(file) = DESCRIPTION_FILES
                .iter()
                .map(|f| path.join(f))
                .find(|f| f.is_file())
            {
                descriptions = parse_descriptions(&file, &read_text(&file)?)?;
            }
        }
        DatasetFormat::Synthetic => {
            return Err(Error::Format(
                "synthetic datasets are generated, not loaded from a path".into(),
            ))
        }
    }
    let duplicates = b.duplicates();
    let graph = b.build();
    if graph.num_triples() == 0 {
        return Err(Error::EmptyDataset(path.into()));
    }
    Ok(Dataset {
        format,
        graph,
        splits,
        duplicates,
        descriptions,
    })
}

/// Writes triples as tab-separated labels, one per line.
pub fn write_triples<'a>(
    path: &Path,
    g: &KnowledgeGraph,
    triples: impl IntoIterator<Item = &'a Triple>,
) -> Result<()> {
    let mut buf = Vec::new();
    for t in triples {
        writeln!(
            buf,
            "{}\t{}\t{}",
            g.entity_label(t.head),
            g.relation_label(t.relation),
            g.entity_label(t.tail)
        )
        .expect("write to memory");
    }
    write_file(path, &buf)
}

pub fn write_graph(path: &Path, g: &KnowledgeGraph) -> Result<()> {
    write_triples(path, g, g.triples())
}

/// Writes `bytes` to `path`, creating parent directories.
pub fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Resolves a dataset from a path, or generates one for the synthetic format.
pub fn open_dataset(
    path: Option<&Path>,
    format: DatasetFormat,
    synth: &ScaleFreeConfig,
) -> Result<Dataset> {
    match (format, path) {
        (DatasetFormat::Synthetic, _) => Dataset::synthetic(synth),
        (_, Some(p)) => load_dataset(p, format),
        (_, None) => Err(Error::Usage(
            "no dataset given (set `dataset` or pass --dataset)".into(),
        )),
    }
}

