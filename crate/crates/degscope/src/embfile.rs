//! Embedding files: a header line `dim=<d> scorer=<tag> count=<n>` followed
//! by `label<TAB>v1,v2,...` rows. Values print in shortest round-trip form.

use std::fmt::Write as _;
use std::path::Path;

use degscope_core::kge::{EmbeddingTable, Scorer};
use degscope_core::synth::{TextEmbeddingSet, TextSource};
use degscope_core::KnowledgeGraph;

use crate::dataset::write_file;
use crate::error::{Error, Result};

pub const ENTITY_FILE: &str = "entities.emb";
pub const RELATION_FILE: &str = "relations.emb";
/// Scorer tag written for text-side vectors.
pub const TEXT_TAG: &str = "text";

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingFile {
    pub dim: usize,
    pub tag: String,
    pub rows: Vec<(String, Vec<f64>)>,
}

pub fn format_embeddings<'a>(
    dim: usize,
    tag: &str,
    rows: impl ExactSizeIterator<Item = (&'a str, &'a [f64])>,
) -> String {
    let mut out = String::new();
    writeln!(out, "dim={dim} scorer={tag} count={}", rows.len()).unwrap();
    for (label, v) in rows {
        out.push_str(label);
        out.push('\t');
        for (i, x) in v.iter().enumerate() {
            if i > 0 {
                out.push(',');
            }
            write!(out, "{x:?}").unwrap();
        }
        out.push('\n');
    }
    out
}

pub fn parse_embeddings(path: &Path, text: &str) -> Result<EmbeddingFile> {
    let err = |line: usize, message: String| Error::Parse {
        path: path.into(),
        line,
        message,
    };
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| err(1, "missing header line".into()))?;
    let (mut dim, mut tag, mut count) = (None, None, None);
    for field in header.split_whitespace() {
        match field.split_once('=') {
            Some(("dim", v)) => dim = v.parse::<usize>().ok(),
            Some(("scorer", v)) => tag = Some(v.to_string()),
            Some(("count", v)) => count = v.parse::<usize>().ok(),
            _ => return Err(err(1, format!("unexpected header field `{field}`"))),
        }
    }
    let (Some(dim), Some(tag), Some(count)) = (dim, tag, count) else {
        return Err(err(1, "header must be `dim=<d> scorer=<tag> count=<n>`".into()));
    };
    let mut rows = Vec::with_capacity(count);
    for (i, line) in lines.enumerate() {
        let n = i + 2;
        if line.is_empty() {
            continue;
        }
        let (label, values) = line
            .split_once('\t')
            .ok_or_else(|| err(n, "expected `label<TAB>values`".into()))?;
        let v = values
            .split(',')
            .map(|s| s.trim().parse::<f64>())
            .collect::<std::result::Result<Vec<f64>, _>>()
            .map_err(|e| err(n, format!("bad value: {e}")))?;
        if v.len() != dim {
            return Err(err(n, format!("expected {dim} values, found {}", v.len())));
        }
        rows.push((label.to_string(), v));
    }
    if rows.len() != count {
        return Err(err(
            1,
            format!("header declares {count} rows, file has {}", rows.len()),
        ));
    }
    Ok(EmbeddingFile { dim, tag, rows })
}

pub fn read_embedding_file(path: &Path) -> Result<EmbeddingFile> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_embeddings(path, &text)
}

fn rows_of<'a>(
    labels: &'a [String],
    data: &'a [f64],
    dim: usize,
) -> impl ExactSizeIterator<Item = (&'a str, &'a [f64])> {
    labels
        .iter()
        .enumerate()
        .map(move |(i, l)| (l.as_str(), &data[i * dim..(i + 1) * dim]))
}

/// Saves a table as `entities.emb` and `relations.emb` inside `dir`.
pub fn save_table(dir: &Path, t: &EmbeddingTable) -> Result<()> {
    let tag = t.scorer.tag();
    let ent = format_embeddings(t.dim, tag, rows_of(&t.entity_labels, &t.entities, t.dim));
    let rel = format_embeddings(t.dim, tag, rows_of(&t.relation_labels, &t.relations, t.dim));
    write_file(&dir.join(ENTITY_FILE), ent.as_bytes())?;
    write_file(&dir.join(RELATION_FILE), rel.as_bytes())
}

pub fn load_table(dir: &Path) -> Result<EmbeddingTable> {
    if !dir.exists() {
        return Err(Error::NotFound(dir.into()));
    }
    if !dir.is_dir() {
        return Err(Error::Format(format!(
            "{} is not an embedding directory (expected {ENTITY_FILE} and {RELATION_FILE})",
            dir.display()
        )));
    }
    let ent = read_embedding_file(&dir.join(ENTITY_FILE))?;
    let rel = read_embedding_file(&dir.join(RELATION_FILE))?;
    if ent.dim != rel.dim || ent.tag != rel.tag {
        return Err(Error::Format(format!(
            "{}: entity and relation files disagree on dim or scorer",
            dir.display()
        )));
    }
    let scorer = Scorer::from_tag(&ent.tag).ok_or_else(|| Error::Parse {
        path: dir.join(ENTITY_FILE),
        line: 1,
        message: format!("unknown scorer `{}`", ent.tag),
    })?;
    let (entity_labels, entities) = unzip(ent.rows);
    let (relation_labels, relations) = unzip(rel.rows);
    Ok(EmbeddingTable {
        dim: ent.dim,
        scorer,
        entity_labels,
        relation_labels,
        entities,
        relations,
    })
}

fn unzip(rows: Vec<(String, Vec<f64>)>) -> (Vec<String>, Vec<f64>) {
    let mut labels = Vec::with_capacity(rows.len());
    let mut data = Vec::new();
    for (l, v) in rows {
        labels.push(l);
        data.extend(v);
    }
    (labels, data)
}

/// Reorders a table so row `i` is the graph's entity (relation) `i`.
/// Every graph label must be present; extra rows are dropped.
pub fn align_table(t: &EmbeddingTable, g: &KnowledgeGraph) -> Result<EmbeddingTable> {
    fn pick(
        labels: &[String],
        data: &[f64],
        dim: usize,
        want: &[String],
        what: &str,
    ) -> Result<Vec<f64>> {
        let index: std::collections::HashMap<&str, usize> = labels
            .iter()
            .enumerate()
            .map(|(i, l)| (l.as_str(), i))
            .collect();
        let mut out = Vec::with_capacity(want.len() * dim);
        for l in want {
            let i = *index.get(l.as_str()).ok_or_else(|| {
                Error::Format(format!("embeddings have no vector for {what} `{l}`"))
            })?;
            out.extend_from_slice(&data[i * dim..(i + 1) * dim]);
        }
        Ok(out)
    }
    let entity_labels = g.entities().labels().to_vec();
    let relation_labels = g.relations().labels().to_vec();
    Ok(EmbeddingTable {
        dim: t.dim,
        scorer: t.scorer,
        entities: pick(&t.entity_labels, &t.entities, t.dim, &entity_labels, "entity")?,
        relations: pick(&t.relation_labels, &t.relations, t.dim, &relation_labels, "relation")?,
        entity_labels,
        relation_labels,
    })
}

pub fn save_text(path: &Path, set: &TextEmbeddingSet) -> Result<()> {
    let rows: Vec<(&str, &[f64])> = set.iter().collect();
    let text = format_embeddings(set.text_dim, TEXT_TAG, rows.into_iter());
    write_file(path, text.as_bytes())
}

pub fn load_text(path: &Path) -> Result<TextEmbeddingSet> {
    let f = read_embedding_file(path)?;
    let mut set = TextEmbeddingSet::new(f.dim, TextSource::File);
    for (l, v) in &f.rows {
        set.insert(l, v)?;
    }
    Ok(set)
}
