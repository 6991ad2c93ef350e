use std::collections::BTreeSet;
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{PhaseDataset, Question, Split, StreamManifest, Triple};
use crate::{Error, Result};

#[derive(Serialize, Deserialize)]
struct TaggedQuestion {
    split: Split,
    #[serde(flatten)]
    question: Question,
}

pub fn corpus_digest(triples: &[Triple], questions: &[Question]) -> String {
    let mut h = Sha256::new();
    for t in triples {
        h.update(serde_json::to_vec(t).expect("triple serializes"));
        h.update(b"\n");
    }
    for q in questions {
        h.update(serde_json::to_vec(q).expect("question serializes"));
        h.update(b"\n");
    }
    hex::encode(h.finalize())
}

pub(crate) fn write_jsonl<T: Serialize>(path: &Path, rows: impl IntoIterator<Item = T>) -> Result<()> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    for row in rows {
        serde_json::to_writer(&mut w, &row)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub(crate) fn read_jsonl<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    let reader = BufReader::new(fs::File::open(path)?);
    let mut out = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| Error::Parse {
            line: idx + 1,
            msg: format!("{}: {e}", path.display()),
        })?);
    }
    Ok(out)
}

/// Writes `phase_<i>.jsonl`, `facts_<i>.jsonl` and `manifest.json` into `dir`.
pub fn write_stream(dir: &Path, phases: &[PhaseDataset], manifest: &StreamManifest) -> Result<()> {
    fs::create_dir_all(dir)?;
    for (d, files) in phases.iter().zip(&manifest.files) {
        let tagged = [Split::Train, Split::Valid, Split::Test]
            .into_iter()
            .flat_map(|s| {
                d.split(s).iter().map(move |q| TaggedQuestion {
                    split: s,
                    question: q.clone(),
                })
            });
        write_jsonl(&dir.join(&files.questions), tagged)?;
        write_jsonl(&dir.join(&files.facts), &d.facts)?;
    }
    let mut w = BufWriter::new(fs::File::create(dir.join("manifest.json"))?);
    serde_json::to_writer_pretty(&mut w, manifest)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

/// Loads a stream from its manifest, checking that every referenced file parses
/// and that the phase invariants hold.
pub fn load_stream(manifest_path: &Path) -> Result<(Vec<PhaseDataset>, StreamManifest)> {
    let manifest: StreamManifest = serde_json::from_reader(BufReader::new(fs::File::open(manifest_path)?))?;
    if manifest.phases < 2 || manifest.files.len() != manifest.phases {
        return Err(Error::Format(format!(
            "manifest declares {} phases with {} file entries",
            manifest.phases,
            manifest.files.len()
        )));
    }
    let dir = manifest_path.parent().unwrap_or_else(|| Path::new("."));
    let mut phases = Vec::with_capacity(manifest.phases);
    for (i, files) in manifest.files.iter().enumerate() {
        let tagged: Vec<TaggedQuestion> = read_jsonl(&dir.join(&files.questions))?;
        let facts: Vec<Triple> = read_jsonl(&dir.join(&files.facts))?;
        let mut d = PhaseDataset {
            phase: i,
            facts,
            relations_new: files.relations_new.iter().cloned().collect::<BTreeSet<_>>(),
            train: Vec::new(),
            valid: Vec::new(),
            test: Vec::new(),
        };
        for t in tagged {
            match t.split {
                Split::Train => d.train.push(t.question),
                Split::Valid => d.valid.push(t.question),
                Split::Test => d.test.push(t.question),
            }
        }
        phases.push(d);
    }
    check_invariants(&phases)?;
    Ok((phases, manifest))
}

fn check_invariants(phases: &[PhaseDataset]) -> Result<()> {
    let mut seen_relations: BTreeSet<&str> = BTreeSet::new();
    for (i, d) in phases.iter().enumerate() {
        if i > 0 {
            let prev: std::collections::HashSet<_> = phases[i - 1].facts.iter().map(Triple::key).collect();
            let cur: std::collections::HashSet<_> = d.facts.iter().map(Triple::key).collect();
            if !prev.is_subset(&cur) {
                return Err(Error::Format(format!("facts of phase {} are not a subset of phase {i}", i - 1)));
            }
        }
        for r in &d.relations_new {
            if !seen_relations.insert(r) {
                return Err(Error::Format(format!("relation {r} is new in more than one phase")));
            }
        }
        let keys: std::collections::HashSet<_> = d.facts.iter().map(Triple::key).collect();
        for q in d.train.iter().chain(&d.valid).chain(&d.test) {
            if !keys.contains(&q.gold.key()) {
                return Err(Error::Format(format!("question {} has no gold fact in phase {i}", q.id)));
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kbstream::{build_stream, generate_synthetic, SplitRatios, SyntheticConfig};

    #[test]
    fn write_then_load() {
        let cfg = SyntheticConfig {
            n_relations: 6,
            n_entities: 20,
            questions_per_relation: 5,
            ..SyntheticConfig::default()
        };
        let (t, q) = generate_synthetic(&cfg).unwrap();
        let (ds, m) = build_stream(&t, &q, 3, 4, SplitRatios::default()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        write_stream(dir.path(), &ds, &m).unwrap();
        let (loaded, m2) = load_stream(&dir.path().join("manifest.json")).unwrap();
        assert_eq!(m, m2);
        assert_eq!(ds, loaded);
    }

    #[test]
    fn missing_phase_file_fails() {
        let cfg = SyntheticConfig {
            n_relations: 4,
            n_entities: 10,
            questions_per_relation: 3,
            ..SyntheticConfig::default()
        };
        let (t, q) = generate_synthetic(&cfg).unwrap();
        let (ds, m) = build_stream(&t, &q, 2, 4, SplitRatios::default()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        write_stream(dir.path(), &ds, &m).unwrap();
        fs::remove_file(dir.path().join("facts_1.jsonl")).unwrap();
        assert!(load_stream(&dir.path().join("manifest.json")).is_err());
    }
}
