//! Relevance lists (`query<TAB>c1,c2,...`) and split files (`train:`, `val:`,
//! `test:` lines).

use std::collections::BTreeSet;
use std::path::Path;

use icebreaker_core::dataset::{DatasetSplit, RelevanceTable, VideoId};

use crate::{Error, Result};

fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn id_list(s: &str) -> Result<Vec<VideoId>> {
    if s.is_empty() {
        return Ok(Vec::new());
    }
    s.split(',').map(|id| VideoId::new(id).map_err(Error::from)).collect()
}

fn join<'a>(ids: impl IntoIterator<Item = &'a VideoId>) -> String {
    ids.into_iter().map(VideoId::as_str).collect::<Vec<_>>().join(",")
}

pub fn parse_relevance(text: &str) -> Result<RelevanceTable> {
    let mut table = RelevanceTable::new();
    for (n, line) in text.lines().enumerate().map(|(i, l)| (i + 1, l)) {
        if line.is_empty() {
            continue;
        }
        let (query, list) = line
            .split_once('\t')
            .ok_or_else(|| Error::Format(format!("relevance line {n}: expected query<TAB>candidates")))?;
        let query = VideoId::new(query).map_err(|e| Error::Format(format!("relevance line {n}: {e}")))?;
        if table.get(query.as_str()).is_some() {
            return Err(Error::Format(format!("relevance line {n}: duplicate query {query}")));
        }
        let list = id_list(list).map_err(|e| Error::Format(format!("relevance line {n}: {e}")))?;
        table.push(query, list)?;
    }
    Ok(table)
}

pub fn format_relevance(table: &RelevanceTable) -> String {
    table.rows().map(|(q, list)| format!("{q}\t{}\n", join(list))).collect()
}

pub fn load_relevance(path: &Path) -> Result<RelevanceTable> {
    parse_relevance(&read_text(path)?)
}

pub fn save_relevance(path: &Path, table: &RelevanceTable) -> Result<()> {
    write_text(path, &format_relevance(table))
}

const SPLIT_KEYS: [&str; 3] = ["train", "val", "test"];

pub fn parse_split(text: &str) -> Result<DatasetSplit> {
    let mut parts: [Option<BTreeSet<VideoId>>; 3] = Default::default();
    for (n, line) in text.lines().enumerate().map(|(i, l)| (i + 1, l)) {
        if line.is_empty() {
            continue;
        }
        let (key, list) =
            line.split_once(':').ok_or_else(|| Error::Format(format!("split line {n}: expected key:ids")))?;
        let slot = SPLIT_KEYS
            .iter()
            .position(|k| *k == key)
            .ok_or_else(|| Error::Format(format!("split line {n}: unknown part {key:?}")))?;
        if parts[slot].is_some() {
            return Err(Error::Format(format!("split line {n}: {key} given twice")));
        }
        let ids = id_list(list).map_err(|e| Error::Format(format!("split line {n}: {e}")))?;
        let set: BTreeSet<VideoId> = ids.iter().cloned().collect();
        if set.len() != ids.len() {
            return Err(Error::Format(format!("split line {n}: duplicate id")));
        }
        parts[slot] = Some(set);
    }
    let [train, val, test] = parts;
    let missing = |k| Error::Format(format!("split file has no {k}: line"));
    Ok(DatasetSplit::new(
        train.ok_or_else(|| missing("train"))?,
        val.ok_or_else(|| missing("val"))?,
        test.ok_or_else(|| missing("test"))?,
    )?)
}

pub fn format_split(split: &DatasetSplit) -> String {
    [&split.train, &split.validation, &split.test]
        .iter()
        .zip(SPLIT_KEYS)
        .map(|(ids, key)| format!("{key}:{}\n", join(ids.iter())))
        .collect()
}

pub fn load_split(path: &Path) -> Result<DatasetSplit> {
    parse_split(&read_text(path)?)
}

pub fn save_split(path: &Path, split: &DatasetSplit) -> Result<()> {
    write_text(path, &format_split(split))
}
