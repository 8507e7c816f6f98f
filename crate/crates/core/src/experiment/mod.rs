//! Run configuration, training-sample presets and the train / eval / compare
//! commands behind the command-line tool.
//!
//! A run config is a TOML file:
//!
//! ```toml
//! seed = 7
//! output_dir = "runs/romance"
//!
//! [train]
//! sample = "romance"
//! treebank_dir = "ud"          # preset members resolve to ud/<id>-ud-train.conllu
//!
//! [test]
//! treebank_dir = "ud"
//! task_ids = ["fo_oft", "gsw_uzh"]
//!
//! [curriculum]
//! sampler = "curriculum"
//! phi = 0.5
//! ```
//!
//! Treebanks can also be listed explicitly as `[[train.treebanks]]` tables
//! with `file` and `task_id`. Relative paths are taken from the config file's
//! directory. Any key can be overridden with `section.key=value`.

mod commands;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::curriculum::{CurriculumConfig, SamplerKind};
use crate::error::{Error, Result};
use crate::io::read_to_string;
use crate::parser::{AdamConfig, ModelDims};

pub use commands::{cmd_compare, cmd_eval, cmd_train, EvalOutput, RunManifest, RunMetrics};

/// Named training samples. Members are UD treebank codes.
pub const PRESETS: [(&str, &[&str]); 8] = [
    (
        "germanic",
        &[
            "af_afribooms",
            "da_ddt",
            "nl_alpino",
            "en_ewt",
            "de_hdt",
            "got_proiel",
            "is_icepahc",
            "no_bokmaal",
            "sv_talbanken",
        ],
    ),
    (
        "slavic",
        &[
            "cs_pdt",
            "cu_proiel",
            "orv_torot",
            "pl_lfg",
            "ru_syntagrus",
            "sr_set",
            "sk_snk",
            "uk_iu",
        ],
    ),
    (
        "romance",
        &["fr_gsd", "it_isdt", "pt_gsd", "ro_rrt", "es_ancora"],
    ),
    (
        "rom+eu",
        &[
            "fr_gsd",
            "it_isdt",
            "pt_gsd",
            "ro_rrt",
            "es_ancora",
            "eu_bdt",
        ],
    ),
    (
        "rom+ar",
        &[
            "fr_gsd",
            "it_isdt",
            "pt_gsd",
            "ro_rrt",
            "es_ancora",
            "ar_padt",
        ],
    ),
    (
        "rom+tr",
        &[
            "fr_gsd",
            "it_isdt",
            "pt_gsd",
            "ro_rrt",
            "es_ancora",
            "tr_imst",
        ],
    ),
    (
        "rom+zh",
        &[
            "fr_gsd",
            "it_isdt",
            "pt_gsd",
            "ro_rrt",
            "es_ancora",
            "zh_gsd",
        ],
    ),
    (
        "13lang",
        &[
            "ar_padt",
            "eu_bdt",
            "zh_gsd",
            "en_ewt",
            "fi_tdt",
            "he_htb",
            "hi_hdtb",
            "it_isdt",
            "ja_gsd",
            "ko_gsd",
            "ru_syntagrus",
            "sv_talbanken",
            "tr_imst",
        ],
    ),
];

pub fn preset(name: &str) -> Option<&'static [&'static str]> {
    PRESETS
        .iter()
        .find(|(n, _)| *n == name)
        .map(|(_, members)| *members)
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TreebankRef {
    pub file: PathBuf,
    pub task_id: String,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainSection {
    pub sample: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub treebank_dir: Option<PathBuf>,
    pub treebanks: Vec<TreebankRef>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TestSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub treebank_dir: Option<PathBuf>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub task_ids: Vec<String>,
    pub treebanks: Vec<TreebankRef>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub output_dir: PathBuf,
    pub train: TrainSection,
    #[serde(default)]
    pub test: TestSection,
    #[serde(default)]
    pub curriculum: CurriculumConfig,
    #[serde(default)]
    pub model: ModelDims,
    #[serde(default)]
    pub adam: AdamConfig,
}

fn resolve_path(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

/// Absolute directory of a config file, so that resolved paths recorded in
/// a manifest stay valid from any working directory.
fn config_dir(path: &Path) -> Result<PathBuf> {
    let abs = std::path::absolute(path).map_err(|e| Error::io(path, e))?;
    Ok(abs.parent().map(Path::to_path_buf).unwrap_or_default())
}

fn split_file(dir: &Path, task_id: &str, split: &str) -> PathBuf {
    dir.join(format!("{task_id}-ud-{split}.conllu"))
}

impl TestSection {
    /// Explicit treebanks followed by `task_ids` resolved under
    /// `treebank_dir`, all paths made relative to `base`.
    fn resolve(&self, base: &Path) -> Result<Vec<TreebankRef>> {
        let mut out: Vec<TreebankRef> = self
            .treebanks
            .iter()
            .map(|t| TreebankRef {
                file: resolve_path(base, &t.file),
                task_id: t.task_id.clone(),
            })
            .collect();
        if !self.task_ids.is_empty() {
            let dir = self.treebank_dir.as_ref().ok_or_else(|| {
                Error::config("test.treebank_dir", "required when test.task_ids is set")
            })?;
            let dir = resolve_path(base, dir);
            out.extend(self.task_ids.iter().map(|id| TreebankRef {
                file: split_file(&dir, id, "test"),
                task_id: id.clone(),
            }));
        }
        Ok(out)
    }
}

impl TrainSection {
    fn resolve(&self, base: &Path) -> Result<Vec<TreebankRef>> {
        if !self.treebanks.is_empty() {
            return Ok(self
                .treebanks
                .iter()
                .map(|t| TreebankRef {
                    file: resolve_path(base, &t.file),
                    task_id: t.task_id.clone(),
                })
                .collect());
        }
        let members = preset(&self.sample).ok_or_else(|| {
            let names: Vec<&str> = PRESETS.iter().map(|(n, _)| *n).collect();
            Error::config(
                "train.sample",
                format!(
                    "`{}` is not a preset ({}) and no train.treebanks are listed",
                    self.sample,
                    names.join(", ")
                ),
            )
        })?;
        let dir = self.treebank_dir.as_ref().ok_or_else(|| {
            Error::config("train.treebank_dir", "required to resolve a preset sample")
        })?;
        let dir = resolve_path(base, dir);
        Ok(members
            .iter()
            .map(|id| TreebankRef {
                file: split_file(&dir, id, "train"),
                task_id: id.to_string(),
            })
            .collect())
    }
}

/// Parse `value` as a TOML value, falling back to a bare string.
fn override_value(value: &str) -> toml::Value {
    toml::from_str::<toml::Table>(&format!("v = {value}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(value.to_string()))
}

/// Apply a `dotted.key=value` override to a raw config table.
pub fn apply_override(table: &mut toml::Table, assignment: &str) -> Result<()> {
    let (key, value) = assignment.split_once('=').ok_or_else(|| {
        Error::invalid(format!(
            "override `{assignment}` is not of the form key=value"
        ))
    })?;
    let path: Vec<&str> = key.trim().split('.').collect();
    if path.iter().any(|p| p.is_empty()) {
        return Err(Error::invalid(format!("override key `{key}` is malformed")));
    }
    let mut node = table;
    for part in &path[..path.len() - 1] {
        let entry = node
            .entry(part.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        node = entry
            .as_table_mut()
            .ok_or_else(|| Error::config(key.trim(), format!("`{part}` is not a section")))?;
    }
    node.insert(
        path[path.len() - 1].to_string(),
        override_value(value.trim()),
    );
    Ok(())
}

/// Read a config file as a raw table. A run manifest is accepted too, in
/// which case its recorded config is used.
pub fn read_config_table(path: &Path) -> Result<toml::Table> {
    let text = read_to_string(path)?;
    if let Ok(serde_json::Value::Object(mut obj)) = serde_json::from_str::<serde_json::Value>(&text)
    {
        let config = obj
            .remove("config")
            .unwrap_or(serde_json::Value::Object(obj));
        return serde_json::from_value(config).map_err(|e| Error::config("config", e.to_string()));
    }
    toml::from_str(&text).map_err(|e| Error::config("config", e.message().to_string()))
}

fn deserialize<T: serde::de::DeserializeOwned>(table: toml::Table) -> Result<T> {
    table
        .try_into()
        .map_err(|e| Error::config("config", e.message().to_string()))
}

impl RunConfig {
    /// Build a config from a raw table. Relative paths are resolved against
    /// `base`, and the result lists every treebank explicitly.
    pub fn from_table(table: toml::Table, base: &Path) -> Result<Self> {
        if !table.contains_key("seed") {
            return Err(Error::config("seed", "a seed is required"));
        }
        if let Some(s) = table.get("curriculum").and_then(|c| c.get("sampler")) {
            let s = s
                .as_str()
                .ok_or_else(|| Error::config("sampler", "must be a string"))?;
            SamplerKind::from_str(s)?;
        }
        let mut config: RunConfig = deserialize(table)?;
        if config.curriculum.seed != 0 && config.curriculum.seed != config.seed {
            return Err(Error::config(
                "curriculum.seed",
                format!(
                    "{} differs from the run seed {}",
                    config.curriculum.seed, config.seed
                ),
            ));
        }
        config.curriculum.seed = config.seed;
        config.train = TrainSection {
            sample: config.train.sample.clone(),
            treebank_dir: None,
            treebanks: config.train.resolve(base)?,
        };
        config.test = TestSection {
            treebanks: config.test.resolve(base)?,
            ..TestSection::default()
        };
        config.output_dir = resolve_path(base, &config.output_dir);
        config.validate()?;
        Ok(config)
    }

    /// Load a config file (or manifest) and apply overrides.
    pub fn load(path: &Path, overrides: &[String]) -> Result<Self> {
        let mut table = read_config_table(path)?;
        for o in overrides {
            apply_override(&mut table, o)?;
        }
        Self::from_table(table, &config_dir(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        self.curriculum.validate()?;
        let dims = &self.model;
        if [dims.word_dim, dims.upos_dim, dims.hidden_dim, dims.arc_dim].contains(&0) {
            return Err(Error::config("model", "all dimensions must be positive"));
        }
        if self.adam.lr.is_nan() || self.adam.lr <= 0.0 {
            return Err(Error::config("adam.lr", "must be positive"));
        }
        if self.train.treebanks.is_empty() {
            return Err(Error::config("train.treebanks", "no training treebanks"));
        }
        check_refs("train.treebanks", &self.train.treebanks)?;
        check_refs("test.treebanks", &self.test.treebanks)?;
        let train_ids: BTreeMap<&str, &Path> = self
            .train
            .treebanks
            .iter()
            .map(|t| (t.task_id.as_str(), t.file.as_path()))
            .collect();
        for t in &self.test.treebanks {
            if let Some(train_file) = train_ids.get(t.task_id.as_str()) {
                return Err(Error::config(
                    "test.treebanks",
                    format!(
                        "test task `{}` ({}) is also train task `{}` ({}); zero-shot evaluation needs disjoint task ids",
                        t.task_id,
                        t.file.display(),
                        t.task_id,
                        train_file.display()
                    ),
                ));
            }
        }
        Ok(())
    }
}

fn check_refs(field: &str, refs: &[TreebankRef]) -> Result<()> {
    let mut seen = BTreeMap::new();
    for t in refs {
        if t.task_id.is_empty() {
            return Err(Error::config(
                field,
                format!("{} has an empty task_id", t.file.display()),
            ));
        }
        if seen.insert(t.task_id.as_str(), ()).is_some() {
            return Err(Error::config(
                field,
                format!("task id `{}` is listed twice", t.task_id),
            ));
        }
        if !t.file.is_file() {
            return Err(Error::config(
                field,
                format!("{} (task `{}`) does not exist", t.file.display(), t.task_id),
            ));
        }
    }
    Ok(())
}

/// Load the test treebank list from a file. The file may be a full run
/// config or manifest, in which case its `test` section is used, or a bare
/// test section.
pub fn load_test_section(path: &Path) -> Result<Vec<TreebankRef>> {
    let mut table = read_config_table(path)?;
    let section = match table.remove("test") {
        Some(toml::Value::Table(t)) => t,
        Some(_) => return Err(Error::config("test", "must be a section")),
        None => table,
    };
    let section: TestSection = deserialize(section)?;
    let refs = section.resolve(&config_dir(path)?)?;
    if refs.is_empty() {
        return Err(Error::config("test.treebanks", "the test list is empty"));
    }
    check_refs("test.treebanks", &refs)?;
    Ok(refs)
}

/// Write the synthetic transfer suite as CoNLL-U files under `dir` together
/// with a run config `demo.toml` that trains on it and evaluates on the
/// held-out shards. Returns the config path.
pub fn write_demo(dir: &Path, seed: u64) -> Result<PathBuf> {
    let suite = crate::synthetic::transfer_suite(300, 100, 100, seed);
    let mut text = format!("seed = {seed}\noutput_dir = \"run\"\n\n[train]\nsample = \"demo\"\n");
    for (section, tbs, split) in [
        ("train", &suite.train, "train"),
        ("test", &suite.test, "test"),
    ] {
        if section == "test" {
            text.push_str("\n[test]\n");
        }
        text.push_str("treebanks = [\n");
        for tb in tbs.iter() {
            let name = format!("{}-ud-{split}.conllu", tb.task_id);
            crate::io::write_atomic(
                &dir.join(&name),
                crate::conllu::write_conllu(&tb.sentences).as_bytes(),
            )?;
            text.push_str(&format!(
                "    {{ file = \"{name}\", task_id = \"{}\" }},\n",
                tb.task_id
            ));
        }
        text.push_str("]\n");
    }
    text.push_str("\n[curriculum]\nsampler = \"curriculum\"\nphi = 0.5\nsteps = 400\n");
    let path = dir.join("demo.toml");
    crate::io::write_atomic(&path, text.as_bytes())?;
    Ok(path)
}
