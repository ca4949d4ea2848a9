//! Structured scene annotations: boxed persons, their physical signals,
//! interactions and environment, plus two-annotator ground truth.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::taxonomy::{Category, EmotionLabel, SignalLexicon};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Sex {
    Male,
    Female,
    Unspecified,
}

impl Sex {
    /// Word used in the demographic sentence; `None` for unspecified.
    pub fn word(self) -> Option<&'static str> {
        match self {
            Sex::Male => Some("male"),
            Sex::Female => Some("female"),
            Sex::Unspecified => None,
        }
    }

    pub fn pronoun(self) -> &'static str {
        match self {
            Sex::Male => "he",
            Sex::Female => "she",
            Sex::Unspecified => "they",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AgeGroup {
    Child,
    Teenager,
    Adult,
    Elderly,
}

impl AgeGroup {
    pub fn word(self) -> &'static str {
        match self {
            AgeGroup::Child => "child",
            AgeGroup::Teenager => "teenager",
            AgeGroup::Adult => "adult",
            AgeGroup::Elderly => "elderly",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SignalRef {
    pub category: Category,
    pub phrase: String,
}

impl SignalRef {
    pub fn new(category: Category, phrase: impl Into<String>) -> Self {
        Self {
            category,
            phrase: phrase.into(),
        }
    }
}

/// How the other party of an interaction is introduced.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum OtherDescriptor {
    /// "Mia is a child ...", "Karl is a security guard ...". An empty
    /// `text` falls back to the age word.
    Demographic {
        #[serde(default)]
        text: String,
        age: AgeGroup,
        sex: Sex,
    },
    /// "Mia is Lucas' bride ...". `relation` excludes the possessive.
    Relationship { relation: String, sex: Sex },
}

impl OtherDescriptor {
    pub fn sex(&self) -> Sex {
        match self {
            OtherDescriptor::Demographic { sex, .. } | OtherDescriptor::Relationship { sex, .. } => {
                *sex
            }
        }
    }
}

/// Who performs the action clause of an interaction sentence.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Actor {
    /// "... and she is sitting behind Sean"
    #[default]
    Other,
    /// "... and Jane is putting her hand on Mia's shoulder"
    Subject,
}

pub const PLACEHOLDERS: [&str; 4] = ["subj", "subj_pos", "other", "other_pos"];

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Interaction {
    /// Pinned display name; assigned from the name pool when empty.
    #[serde(default)]
    pub other_name: String,
    pub other: OtherDescriptor,
    /// Free text; may contain `{subj}`, `{subj_pos}`, `{other}`, `{other_pos}`.
    pub action: String,
    #[serde(default)]
    pub actor: Actor,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PersonAnnotation {
    /// Bounding-box color or index.
    pub person_key: String,
    /// Pinned display name; assigned from the name pool when empty.
    #[serde(default)]
    pub display_name: String,
    pub perceived_sex: Sex,
    pub perceived_age: AgeGroup,
    #[serde(default)]
    pub social_identity: Option<String>,
    #[serde(default)]
    pub signals: Vec<SignalRef>,
    #[serde(default)]
    pub interactions: Vec<Interaction>,
    #[serde(default)]
    pub environment: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SceneAnnotation {
    pub scene_id: String,
    pub image_uri: String,
    pub persons: Vec<PersonAnnotation>,
    #[serde(default)]
    pub annotator_id: String,
    /// The annotator's emotion judgment per person key.
    #[serde(default)]
    pub emotion_judgment: BTreeMap<String, EmotionLabel>,
    /// Optimistic-concurrency counter maintained by the store.
    #[serde(default)]
    pub revision: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SceneKind {
    OnePerson,
    MultiplePeople,
}

impl SceneAnnotation {
    pub fn person(&self, key: &str) -> Option<&PersonAnnotation> {
        self.persons.iter().find(|p| p.person_key == key)
    }

    /// One person means a single box and nobody else described.
    pub fn kind(&self) -> SceneKind {
        if self.persons.len() == 1 && self.persons[0].interactions.is_empty() {
            SceneKind::OnePerson
        } else {
            SceneKind::MultiplePeople
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ViolationCode {
    NoPersons,
    EmptySceneId,
    EmptyPersonKey,
    DuplicatePersonKey,
    DuplicateDisplayName,
    UnknownSignal,
    SignalNotInCategory,
    DuplicateSignal,
    EmptySocialIdentity,
    EmptyEnvironment,
    EmptyAction,
    EmptyRelation,
    PossessiveInRelation,
    MalformedPlaceholder,
    UnknownPlaceholder,
    UnknownJudgmentLabel,
    JudgmentForUnknownPerson,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub code: ViolationCode,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub person_key: Option<String>,
    /// Dotted path of the offending field, e.g. `persons[0].signals[1]`.
    pub field: String,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?} at {}: {}", self.code, self.field, self.message)
    }
}

/// Scans `{name}` placeholders. Returns the names found, or the first
/// structural problem.
pub(crate) fn scan_placeholders(text: &str) -> Result<Vec<&str>, PlaceholderError> {
    let mut names = Vec::new();
    let mut rest = text;
    while let Some(pos) = rest.find(['{', '}']) {
        if rest.as_bytes()[pos] == b'}' {
            return Err(PlaceholderError::Unbalanced);
        }
        let after = &rest[pos + 1..];
        let end = after.find(['{', '}']).ok_or(PlaceholderError::Unbalanced)?;
        if after.as_bytes()[end] == b'{' {
            return Err(PlaceholderError::Unbalanced);
        }
        let name = &after[..end];
        if !PLACEHOLDERS.contains(&name) {
            return Err(PlaceholderError::Unknown(name.to_string()));
        }
        names.push(name);
        rest = &after[end + 1..];
    }
    Ok(names)
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PlaceholderError {
    #[error("unbalanced braces")]
    Unbalanced,
    #[error("unknown placeholder `{{{0}}}`")]
    Unknown(String),
}

fn blank(s: &str) -> bool {
    s.trim().is_empty()
}

/// Checks every scene invariant against the lexicon. An empty result means
/// the scene can be rendered.
pub fn validate_scene(scene: &SceneAnnotation, lexicon: &SignalLexicon) -> Vec<Violation> {
    let mut out = Vec::new();
    let mut push = |code, person_key: Option<&str>, field: String, message: String| {
        out.push(Violation {
            code,
            person_key: person_key.map(str::to_string),
            field,
            message,
        })
    };

    if blank(&scene.scene_id) {
        push(ViolationCode::EmptySceneId, None, "scene_id".into(), "scene id is empty".into());
    }
    if scene.persons.is_empty() {
        push(ViolationCode::NoPersons, None, "persons".into(), "scene has no persons".into());
    }

    let mut keys = HashSet::new();
    let mut pinned: HashMap<&str, String> = HashMap::new();
    for (pi, person) in scene.persons.iter().enumerate() {
        let key = Some(person.person_key.as_str());
        let at = |f: &str| format!("persons[{pi}].{f}");

        if blank(&person.person_key) {
            push(ViolationCode::EmptyPersonKey, None, at("person_key"), "person key is empty".into());
        } else if !keys.insert(person.person_key.as_str()) {
            push(
                ViolationCode::DuplicatePersonKey,
                key,
                at("person_key"),
                format!("person key `{}` used more than once", person.person_key),
            );
        }

        let mut names: Vec<(String, &str)> = Vec::new();
        if !blank(&person.display_name) {
            names.push((at("display_name"), person.display_name.trim()));
        }
        for (ii, inter) in person.interactions.iter().enumerate() {
            if !blank(&inter.other_name) {
                names.push((at(&format!("interactions[{ii}].other_name")), inter.other_name.trim()));
            }
        }
        for (field, name) in names {
            if let Some(prev) = pinned.insert(name, field.clone()) {
                push(
                    ViolationCode::DuplicateDisplayName,
                    key,
                    field,
                    format!("name `{name}` already used at {prev}"),
                );
            }
        }

        if let Some(identity) = &person.social_identity {
            if blank(identity) {
                push(
                    ViolationCode::EmptySocialIdentity,
                    key,
                    at("social_identity"),
                    "social identity is present but empty".into(),
                );
            }
        }

        let mut seen_signals = HashSet::new();
        for (si, signal) in person.signals.iter().enumerate() {
            let field = at(&format!("signals[{si}]"));
            match lexicon.find_signal(signal.category, &signal.phrase) {
                Some(stored) => {
                    if !seen_signals.insert(stored) {
                        push(
                            ViolationCode::DuplicateSignal,
                            key,
                            field,
                            format!("signal `{stored}` selected twice"),
                        );
                    }
                }
                None => {
                    let elsewhere = lexicon.categories_listing(&signal.phrase);
                    if elsewhere.is_empty() {
                        push(
                            ViolationCode::UnknownSignal,
                            key,
                            field,
                            format!("`{}` is not in the signal lexicon", signal.phrase),
                        );
                    } else {
                        let cats: Vec<_> = elsewhere.iter().map(|c| c.as_str()).collect();
                        push(
                            ViolationCode::SignalNotInCategory,
                            key,
                            field,
                            format!(
                                "`{}` is not a {} signal (listed under {})",
                                signal.phrase,
                                signal.category,
                                cats.join(", ")
                            ),
                        );
                    }
                }
            }
        }

        for (ii, inter) in person.interactions.iter().enumerate() {
            let prefix = format!("interactions[{ii}]");
            if blank(&inter.action) {
                push(ViolationCode::EmptyAction, key, at(&format!("{prefix}.action")), "interaction action is empty".into());
            } else if let Err(e) = scan_placeholders(&inter.action) {
                let code = match e {
                    PlaceholderError::Unbalanced => ViolationCode::MalformedPlaceholder,
                    PlaceholderError::Unknown(_) => ViolationCode::UnknownPlaceholder,
                };
                push(code, key, at(&format!("{prefix}.action")), e.to_string());
            }
            if let OtherDescriptor::Relationship { relation, .. } = &inter.other {
                let field = at(&format!("{prefix}.other.relation"));
                if blank(relation) {
                    push(ViolationCode::EmptyRelation, key, field, "relationship text is empty".into());
                } else {
                    let r = relation.trim();
                    if r.contains(['\'', '’']) {
                        push(
                            ViolationCode::PossessiveInRelation,
                            key,
                            field,
                            format!("store the bare relation (e.g. `bride`), not `{r}`"),
                        );
                    }
                }
            }
        }

        if let Some(env) = &person.environment {
            if blank(env) {
                push(ViolationCode::EmptyEnvironment, key, at("environment"), "environment is present but empty".into());
            }
        }
    }

    for (person_key, label) in &scene.emotion_judgment {
        if scene.person(person_key).is_none() {
            push(
                ViolationCode::JudgmentForUnknownPerson,
                Some(person_key),
                format!("emotion_judgment.{person_key}"),
                format!("judgment for unknown person `{person_key}`"),
            );
        }
        if !lexicon.is_canonical(label) {
            push(
                ViolationCode::UnknownJudgmentLabel,
                Some(person_key),
                format!("emotion_judgment.{person_key}"),
                format!("`{label}` is not a canonical label"),
            );
        }
    }

    out
}

/// One agreed (scene, person, label) sample.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct GroundTruthSample {
    pub scene_id: String,
    pub person_key: String,
    pub label: EmotionLabel,
}

/// One annotator's label for one boxed person.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Judgment {
    pub scene_id: String,
    pub person_key: String,
    #[serde(default)]
    pub annotator_id: String,
    pub label: EmotionLabel,
}

/// Two annotators disagreed; the sample is excluded but kept for audit.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Disagreement {
    pub scene_id: String,
    pub person_key: String,
    pub annotators: [String; 2],
    pub labels: [EmotionLabel; 2],
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum Resolution {
    Agreed(GroundTruthSample),
    Excluded(Disagreement),
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ResolveError {
    #[error("judgments refer to different samples: {0}/{1} vs {2}/{3}")]
    MismatchedSample(String, String, String, String),
}

pub fn resolve_ground_truth(a: &Judgment, b: &Judgment) -> Result<Resolution, ResolveError> {
    if a.scene_id != b.scene_id || a.person_key != b.person_key {
        return Err(ResolveError::MismatchedSample(
            a.scene_id.clone(),
            a.person_key.clone(),
            b.scene_id.clone(),
            b.person_key.clone(),
        ));
    }
    if a.label == b.label {
        Ok(Resolution::Agreed(GroundTruthSample {
            scene_id: a.scene_id.clone(),
            person_key: a.person_key.clone(),
            label: a.label.clone(),
        }))
    } else {
        log::info!(
            "excluding {}/{}: annotators chose {} and {}",
            a.scene_id,
            a.person_key,
            a.label,
            b.label
        );
        Ok(Resolution::Excluded(Disagreement {
            scene_id: a.scene_id.clone(),
            person_key: a.person_key.clone(),
            annotators: [a.annotator_id.clone(), b.annotator_id.clone()],
            labels: [a.label.clone(), b.label.clone()],
        }))
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelCounts {
    pub label: EmotionLabel,
    pub one_person: usize,
    pub multiple_people: usize,
    pub total: usize,
}

/// Per-label sample counts split by scene kind.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetStatistics {
    pub rows: Vec<LabelCounts>,
    pub one_person: usize,
    pub multiple_people: usize,
    pub total: usize,
    pub unique_scenes: usize,
}

impl DatasetStatistics {
    pub fn row(&self, label: &EmotionLabel) -> Option<&LabelCounts> {
        self.rows.iter().find(|r| &r.label == label)
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum StatsError {
    #[error("sample references unknown scene `{0}`")]
    DanglingScene(String),
    #[error("sample label `{0}` is not in the label set")]
    UnknownLabel(String),
}

/// Counts each agreed (scene, person) sample once, so two persons with the
/// same emotion in one image count twice.
pub fn dataset_statistics(
    samples: &[GroundTruthSample],
    scenes: &[SceneAnnotation],
    labels: &[EmotionLabel],
) -> Result<DatasetStatistics, StatsError> {
    let by_id: HashMap<&str, &SceneAnnotation> =
        scenes.iter().map(|s| (s.scene_id.as_str(), s)).collect();
    let mut rows: Vec<LabelCounts> = labels
        .iter()
        .map(|l| LabelCounts {
            label: l.clone(),
            one_person: 0,
            multiple_people: 0,
            total: 0,
        })
        .collect();
    let mut used_scenes = HashSet::new();

    for sample in samples {
        let scene = by_id
            .get(sample.scene_id.as_str())
            .ok_or_else(|| StatsError::DanglingScene(sample.scene_id.clone()))?;
        let row = rows
            .iter_mut()
            .find(|r| r.label == sample.label)
            .ok_or_else(|| StatsError::UnknownLabel(sample.label.to_string()))?;
        match scene.kind() {
            SceneKind::OnePerson => row.one_person += 1,
            SceneKind::MultiplePeople => row.multiple_people += 1,
        }
        row.total += 1;
        used_scenes.insert(sample.scene_id.as_str());
    }

    Ok(DatasetStatistics {
        one_person: rows.iter().map(|r| r.one_person).sum(),
        multiple_people: rows.iter().map(|r| r.multiple_people).sum(),
        total: rows.iter().map(|r| r.total).sum(),
        unique_scenes: used_scenes.len(),
        rows,
    })
}
