//! Deterministic caption rendering from a scene annotation.
//!
//! A caption is a fixed sequence of sentences about one subject:
//!
//! 1. demographics: `Sean is a male adult.`
//! 2. social identity: `Sean is a(n) passenger.`
//! 3. physical signals: `Sean is or has raising eyebrows, side-eyeing.`
//! 4. one sentence per interaction: `Mia is a child and she is sitting behind Sean.`
//! 5. environment: `Sean's physical environment is on an airplane.`
//!
//! Empty slots are skipped. Ablated variants are produced by clearing the
//! relevant fields of the annotation before rendering, never by editing the
//! rendered text.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scene::{
    scan_placeholders, validate_scene, Actor, OtherDescriptor, PersonAnnotation, SceneAnnotation,
    Sex, Violation,
};
use crate::taxonomy::SignalLexicon;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CaptionVariant {
    Full,
    MinusInteractions,
    MinusEnvironments,
}

impl CaptionVariant {
    pub const ALL: [CaptionVariant; 3] = [
        CaptionVariant::Full,
        CaptionVariant::MinusInteractions,
        CaptionVariant::MinusEnvironments,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            CaptionVariant::Full => "full",
            CaptionVariant::MinusInteractions => "minus-interactions",
            CaptionVariant::MinusEnvironments => "minus-environments",
        }
    }

    /// Returns the subject with the ablated context removed.
    pub fn apply(self, person: &PersonAnnotation) -> PersonAnnotation {
        let mut p = person.clone();
        match self {
            CaptionVariant::Full => {}
            CaptionVariant::MinusInteractions => p.interactions.clear(),
            CaptionVariant::MinusEnvironments => p.environment = None,
        }
        p
    }
}

impl fmt::Display for CaptionVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for CaptionVariant {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        CaptionVariant::ALL
            .into_iter()
            .find(|v| v.as_str() == s)
            .ok_or_else(|| format!("unknown variant `{s}` (expected full, minus-interactions or minus-environments)"))
    }
}

/// Ordered first-name pools used to refer to people in captions.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct NamePool {
    pub male_names: Vec<String>,
    pub female_names: Vec<String>,
    pub neutral_names: Vec<String>,
}

fn owned(names: &[&str]) -> Vec<String> {
    names.iter().map(|s| s.to_string()).collect()
}

impl Default for NamePool {
    fn default() -> Self {
        Self {
            male_names: owned(&[
                "Sean", "Jack", "Lucas", "Terry", "Karl", "Owen", "Liam", "Noah", "Ethan", "Ryan",
                "Adam", "Ben",
            ]),
            female_names: owned(&[
                "Mia", "Beth", "Zoe", "Jane", "Chloe", "Emma", "Ava", "Lily", "Grace", "Ruby",
                "Nora", "Ella",
            ]),
            neutral_names: owned(&[
                "Alex", "Sam", "Jordan", "Taylor", "Casey", "Riley", "Jamie", "Morgan", "Robin",
                "Quinn", "Avery", "Drew",
            ]),
        }
    }
}

impl NamePool {
    /// Checks that every pool is non-empty and no name appears twice.
    pub fn validate(&self) -> Result<(), CaptionError> {
        let mut seen = HashSet::new();
        for (sex, pool) in [
            (Sex::Male, &self.male_names),
            (Sex::Female, &self.female_names),
            (Sex::Unspecified, &self.neutral_names),
        ] {
            if pool.is_empty() {
                return Err(CaptionError::EmptyPool(sex));
            }
            for name in pool {
                if name.trim().is_empty() || !seen.insert(name.as_str()) {
                    return Err(CaptionError::BadPoolName(name.clone()));
                }
            }
        }
        Ok(())
    }

    fn pool(&self, sex: Sex) -> &[String] {
        match sex {
            Sex::Male => &self.male_names,
            Sex::Female => &self.female_names,
            Sex::Unspecified => &self.neutral_names,
        }
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum CaptionError {
    #[error("no person `{0}` in scene")]
    UnknownPerson(String),
    #[error("name pool for {0:?} is exhausted")]
    PoolExhausted(Sex),
    #[error("name pool for {0:?} is empty")]
    EmptyPool(Sex),
    #[error("invalid or duplicate pool name `{0}`")]
    BadPoolName(String),
    #[error("cannot form the possessive of an empty name")]
    EmptyName,
    #[error("unresolved placeholder in `{0}`")]
    UnresolvedPlaceholder(String),
    #[error("scene failed validation: {}", .0.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; "))]
    InvalidScene(Vec<Violation>),
}

/// Display names for every subject and every interaction partner in a scene.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct NameAssignment {
    /// person_key -> display name
    pub persons: BTreeMap<String, String>,
    /// person_key -> names of that person's interaction partners, in order
    pub others: BTreeMap<String, Vec<String>>,
}

/// Pinned names are kept and reserved; every blank name gets the first
/// unused pool name for its sex, subjects first (in person order) and then
/// interaction partners (in person, then interaction order).
pub fn assign_names(scene: &SceneAnnotation, pool: &NamePool) -> Result<NameAssignment, CaptionError> {
    let mut used: HashSet<String> = HashSet::new();
    for p in &scene.persons {
        if !p.display_name.trim().is_empty() {
            used.insert(p.display_name.trim().to_string());
        }
        for i in &p.interactions {
            if !i.other_name.trim().is_empty() {
                used.insert(i.other_name.trim().to_string());
            }
        }
    }

    let mut next = |pinned: &str, sex: Sex| -> Result<String, CaptionError> {
        if !pinned.trim().is_empty() {
            return Ok(pinned.trim().to_string());
        }
        let name = pool
            .pool(sex)
            .iter()
            .find(|n| !used.contains(n.as_str()))
            .ok_or(CaptionError::PoolExhausted(sex))?
            .clone();
        used.insert(name.clone());
        Ok(name)
    };

    let mut out = NameAssignment::default();
    for p in &scene.persons {
        let name = next(&p.display_name, p.perceived_sex)?;
        out.persons.insert(p.person_key.clone(), name);
    }
    for p in &scene.persons {
        let names = p
            .interactions
            .iter()
            .map(|i| next(&i.other_name, i.other.sex()))
            .collect::<Result<Vec<_>, _>>()?;
        out.others.insert(p.person_key.clone(), names);
    }
    Ok(out)
}

/// `Sean` -> `Sean's`, `Lucas` -> `Lucas'`.
pub fn possessive(name: &str) -> Result<String, CaptionError> {
    let name = name.trim();
    if name.is_empty() {
        return Err(CaptionError::EmptyName);
    }
    if name.ends_with(['s', 'S']) {
        Ok(format!("{name}'"))
    } else {
        Ok(format!("{name}'s"))
    }
}

fn indefinite(word: &str) -> &'static str {
    match word.trim_start().chars().next().map(|c| c.to_ascii_lowercase()) {
        Some('a' | 'e' | 'i' | 'o' | 'u') => "an",
        _ => "a",
    }
}

fn clean_slot(text: &str) -> &str {
    text.trim().trim_end_matches('.').trim_end()
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RenderOptions {
    /// Emit `a`/`an` instead of the literal `a(n)`.
    #[serde(default)]
    pub resolve_articles: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SentenceKind {
    Demographic,
    Identity,
    Signals,
    Interaction,
    Environment,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sentence {
    pub kind: SentenceKind,
    pub text: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Caption {
    pub scene_id: String,
    pub person_key: String,
    pub variant: CaptionVariant,
    pub text: String,
    /// person_key -> display name
    pub name_assignment: BTreeMap<String, String>,
}

impl Caption {
    pub fn subject_name(&self) -> Option<&str> {
        self.name_assignment.get(&self.person_key).map(String::as_str)
    }
}

fn fill(action: &str, subj: &str, other: &str) -> Result<String, CaptionError> {
    scan_placeholders(action).map_err(|_| CaptionError::UnresolvedPlaceholder(action.to_string()))?;
    let out = action
        .replace("{subj_pos}", &possessive(subj)?)
        .replace("{other_pos}", &possessive(other)?)
        .replace("{subj}", subj)
        .replace("{other}", other);
    if out.contains(['{', '}']) {
        return Err(CaptionError::UnresolvedPlaceholder(action.to_string()));
    }
    Ok(out)
}

/// Renders captions against a lexicon and name pool.
#[derive(Clone, Copy, Debug)]
pub struct CaptionEngine<'a> {
    pub lexicon: &'a SignalLexicon,
    pub pool: &'a NamePool,
    pub options: RenderOptions,
}

impl<'a> CaptionEngine<'a> {
    pub fn new(lexicon: &'a SignalLexicon, pool: &'a NamePool) -> Self {
        Self {
            lexicon,
            pool,
            options: RenderOptions::default(),
        }
    }

    pub fn with_options(mut self, options: RenderOptions) -> Self {
        self.options = options;
        self
    }

    /// The caption for one subject as a list of sentences.
    pub fn sentences(
        &self,
        scene: &SceneAnnotation,
        person_key: &str,
        variant: CaptionVariant,
    ) -> Result<(Vec<Sentence>, NameAssignment), CaptionError> {
        let violations = validate_scene(scene, self.lexicon);
        if !violations.is_empty() {
            return Err(CaptionError::InvalidScene(violations));
        }
        let original = scene
            .person(person_key)
            .ok_or_else(|| CaptionError::UnknownPerson(person_key.to_string()))?;
        let names = assign_names(scene, self.pool)?;
        let person = variant.apply(original);
        let name = names.persons[person_key].as_str();
        let name_pos = possessive(name)?;
        let mut out = Vec::new();
        let mut push = |kind, text: String| out.push(Sentence { kind, text });

        let age = person.perceived_age.word();
        push(
            SentenceKind::Demographic,
            match person.perceived_sex.word() {
                Some(sex) => format!("{name} is a {sex} {age}."),
                None => format!("{name} is {} {age}.", indefinite(age)),
            },
        );

        if let Some(identity) = person.social_identity.as_deref().map(clean_slot) {
            let article = if self.options.resolve_articles { indefinite(identity) } else { "a(n)" };
            push(SentenceKind::Identity, format!("{name} is {article} {identity}."));
        }

        if !person.signals.is_empty() {
            let phrases = person
                .signals
                .iter()
                .map(|s| {
                    self.lexicon
                        .find_signal(s.category, &s.phrase)
                        .map(str::to_lowercase)
                        .expect("validated signal")
                })
                .collect::<Vec<_>>();
            push(SentenceKind::Signals, format!("{name} is or has {}.", phrases.join(", ")));
        }

        let other_names = &names.others[person_key];
        for (inter, other) in person.interactions.iter().zip(other_names) {
            let intro = match &inter.other {
                OtherDescriptor::Demographic { text, age, .. } => {
                    let descriptor = match clean_slot(text) {
                        "" => age.word(),
                        t => t,
                    };
                    let article = if self.options.resolve_articles { indefinite(descriptor) } else { "a" };
                    format!("{other} is {article} {descriptor}")
                }
                OtherDescriptor::Relationship { relation, .. } => {
                    format!("{other} is {name_pos} {}", clean_slot(relation))
                }
            };
            let action = fill(clean_slot(&inter.action), name, other)?;
            let clause = match inter.actor {
                Actor::Other => match inter.other.sex() {
                    Sex::Unspecified => format!("they are {action}"),
                    sex => format!("{} is {action}", sex.pronoun()),
                },
                Actor::Subject => format!("{name} is {action}"),
            };
            push(SentenceKind::Interaction, format!("{intro} and {clause}."));
        }

        if let Some(env) = person.environment.as_deref().map(clean_slot) {
            push(SentenceKind::Environment, format!("{name_pos} physical environment is {env}."));
        }

        Ok((out, names))
    }

    pub fn render(
        &self,
        scene: &SceneAnnotation,
        person_key: &str,
        variant: CaptionVariant,
    ) -> Result<Caption, CaptionError> {
        let (sentences, names) = self.sentences(scene, person_key, variant)?;
        let text = sentences
            .iter()
            .map(|s| s.text.as_str())
            .collect::<Vec<_>>()
            .join(" ");
        Ok(Caption {
            scene_id: scene.scene_id.clone(),
            person_key: person_key.to_string(),
            variant,
            text,
            name_assignment: names.persons,
        })
    }
}

pub fn render(
    scene: &SceneAnnotation,
    person_key: &str,
    variant: CaptionVariant,
    pool: &NamePool,
    lexicon: &SignalLexicon,
) -> Result<Caption, CaptionError> {
    CaptionEngine::new(lexicon, pool).render(scene, person_key, variant)
}

/// One caption per line: `scene_id<TAB>person_key<TAB>variant<TAB>text`.
pub fn to_plain_text(captions: &[Caption]) -> String {
    captions
        .iter()
        .map(|c| format!("{}\t{}\t{}\t{}\n", c.scene_id, c.person_key, c.variant, c.text))
        .collect()
}
