//! Named prompt templates and the generation parameters bound to each.
//!
//! The built-in catalog is compiled in from `prompts/manifest.json` and one
//! text file per prompt. A directory with the same layout can be loaded at
//! runtime to swap wording without rebuilding.

mod template;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::params::{GenerationParams, ParamsError};

pub use template::Template;

pub type Vars = BTreeMap<String, String>;

/// Builds a variable map from string pairs.
pub fn vars<K: AsRef<str>, V: AsRef<str>>(pairs: impl IntoIterator<Item = (K, V)>) -> Vars {
    pairs
        .into_iter()
        .map(|(k, v)| (k.as_ref().to_string(), v.as_ref().to_string()))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PromptError {
    #[error("unknown prompt `{0}`")]
    UnknownPrompt(String),
    #[error("missing variable `{0}`")]
    MissingVariable(String),
    #[error("unexpected variable `{0}`")]
    UnexpectedVariable(String),
    #[error("template syntax error at byte {offset}: {reason}")]
    TemplateSyntax { offset: usize, reason: String },
    #[error("prompt `{id}`: placeholders {placeholders:?} do not match required_vars {required:?}")]
    VariableMismatch {
        id: PromptId,
        placeholders: Vec<String>,
        required: Vec<String>,
    },
    #[error("prompt `{id}`: {source}")]
    InvalidParams { id: PromptId, source: ParamsError },
    #[error("manifest: {0}")]
    Manifest(String),
    #[error("reading {path}: {message}")]
    Io { path: String, message: String },
}

macro_rules! prompt_ids {
    ($($variant:ident => $name:literal),+ $(,)?) => {
        /// Every prompt the pipeline issues.
        #[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
        #[serde(rename_all = "snake_case")]
        pub enum PromptId {
            $($variant),+
        }

        impl PromptId {
            pub const ALL: &'static [PromptId] = &[$(PromptId::$variant),+];

            pub fn as_str(self) -> &'static str {
                match self {
                    $(PromptId::$variant => $name),+
                }
            }
        }

        impl FromStr for PromptId {
            type Err = PromptError;

            fn from_str(s: &str) -> Result<Self, Self::Err> {
                match s {
                    $($name => Ok(PromptId::$variant),)+
                    other => Err(PromptError::UnknownPrompt(other.to_string())),
                }
            }
        }
    };
}

prompt_ids! {
    SummInitial => "summ_initial",
    SummDecider => "summ_decider",
    SummResearcher => "summ_researcher",
    SummCorruption => "summ_corruption",
    SummFinal => "summ_final",
    MetricExtractor => "metric_extractor",
    MetricVerifier => "metric_verifier",
    CpInitial => "cp_initial",
    CpDecider => "cp_decider",
    CpResearcher => "cp_researcher",
    CpFinal => "cp_final",
    RewriteFull => "rewrite_full",
    RewriteLast => "rewrite_last",
    QaSingleShot => "qa_single_shot",
    QaStudentExp => "qa_student_exp",
    QaTeacher => "qa_teacher",
    QaStudent => "qa_student",
    QaFinal => "qa_final",
    QaSim => "qa_sim",
    QaExact => "qa_exact",
}

impl fmt::Display for PromptId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Whether the wording is the published text or a stand-in that follows
/// the same reply conventions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PromptSource {
    Published,
    Reconstructed,
}

#[derive(Debug, Clone)]
pub struct PromptSpec {
    pub id: PromptId,
    pub template: Template,
    pub params: GenerationParams,
    pub required_vars: BTreeSet<String>,
    pub source: PromptSource,
}

#[derive(Debug, Deserialize)]
struct Manifest {
    format_version: u32,
    prompts: Vec<ManifestEntry>,
}

#[derive(Debug, Deserialize)]
struct ManifestEntry {
    id: String,
    file: String,
    source: PromptSource,
    required_vars: BTreeSet<String>,
    params: GenerationParams,
}

const MANIFEST_VERSION: u32 = 1;

const BUILTIN_MANIFEST: &str = include_str!("../../prompts/manifest.json");

macro_rules! builtin_files {
    ($($file:literal),+ $(,)?) => {
        &[$(($file, include_str!(concat!("../../prompts/", $file)))),+]
    };
}

const BUILTIN_FILES: &[(&str, &str)] = builtin_files![
    "summ_initial.txt",
    "summ_decider.txt",
    "summ_researcher.txt",
    "summ_corruption.txt",
    "summ_final.txt",
    "metric_extractor.txt",
    "metric_verifier.txt",
    "cp_initial.txt",
    "cp_decider.txt",
    "cp_researcher.txt",
    "cp_final.txt",
    "rewrite_full.txt",
    "rewrite_last.txt",
    "qa_single_shot.txt",
    "qa_student_exp.txt",
    "qa_teacher.txt",
    "qa_student.txt",
    "qa_final.txt",
    "qa_sim.txt",
    "qa_exact.txt",
];

/// Immutable after construction; share it behind an `Arc` or a reference.
#[derive(Debug, Clone)]
pub struct PromptRegistry {
    specs: BTreeMap<PromptId, PromptSpec>,
}

impl PromptRegistry {
    pub fn builtin() -> Self {
        Self::from_manifest(BUILTIN_MANIFEST, |file| {
            BUILTIN_FILES
                .iter()
                .find(|(name, _)| *name == file)
                .map(|(_, body)| body.to_string())
                .ok_or_else(|| PromptError::Manifest(format!("no built-in file `{file}`")))
        })
        .expect("built-in prompt catalog is valid")
    }

    /// Loads `manifest.json` and the template files it names from `dir`.
    pub fn load_dir(dir: impl AsRef<Path>) -> Result<Self, PromptError> {
        let dir = dir.as_ref();
        let read = |path: &Path| {
            std::fs::read_to_string(path).map_err(|e| PromptError::Io {
                path: path.display().to_string(),
                message: e.to_string(),
            })
        };
        let manifest = read(&dir.join("manifest.json"))?;
        Self::from_manifest(&manifest, |file| read(&dir.join(file)))
    }

    fn from_manifest(
        manifest: &str,
        mut read_file: impl FnMut(&str) -> Result<String, PromptError>,
    ) -> Result<Self, PromptError> {
        let manifest: Manifest = serde_json::from_str(manifest).map_err(|e| PromptError::Manifest(e.to_string()))?;
        if manifest.format_version != MANIFEST_VERSION {
            return Err(PromptError::Manifest(format!(
                "unsupported format_version {}",
                manifest.format_version
            )));
        }
        let mut specs = BTreeMap::new();
        for entry in manifest.prompts {
            let id: PromptId = entry.id.parse()?;
            let template = Template::parse(&read_file(&entry.file)?)?;
            let placeholders: BTreeSet<String> = template.placeholders().into_iter().map(String::from).collect();
            if placeholders != entry.required_vars {
                return Err(PromptError::VariableMismatch {
                    id,
                    placeholders: placeholders.into_iter().collect(),
                    required: entry.required_vars.into_iter().collect(),
                });
            }
            entry
                .params
                .validate()
                .map_err(|source| PromptError::InvalidParams { id, source })?;
            let spec = PromptSpec {
                id,
                template,
                params: entry.params,
                required_vars: entry.required_vars,
                source: entry.source,
            };
            if specs.insert(id, spec).is_some() {
                return Err(PromptError::Manifest(format!("duplicate prompt `{id}`")));
            }
        }
        Ok(Self { specs })
    }

    pub fn get(&self, id: PromptId) -> Result<&PromptSpec, PromptError> {
        self.specs
            .get(&id)
            .ok_or_else(|| PromptError::UnknownPrompt(id.as_str().to_string()))
    }

    pub fn ids(&self) -> impl Iterator<Item = PromptId> + '_ {
        self.specs.keys().copied()
    }

    pub fn render(&self, id: PromptId, vars: &Vars) -> Result<String, PromptError> {
        self.get(id)?.template.render(vars)
    }

    /// Like [`PromptRegistry::render`], addressing the prompt by name.
    pub fn render_named(&self, name: &str, vars: &Vars) -> Result<String, PromptError> {
        self.render(name.parse()?, vars)
    }

    pub fn params_for(&self, id: PromptId) -> Result<GenerationParams, PromptError> {
        Ok(self.get(id)?.params)
    }
}

impl Default for PromptRegistry {
    fn default() -> Self {
        Self::builtin()
    }
}
