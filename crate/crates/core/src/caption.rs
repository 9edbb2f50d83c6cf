//! Rule-based change captions generated from mask statistics.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::analytics::MaskStats;
use crate::error::{Error, Result};

/// Template table shipped with the crate.
pub const DEFAULT_TEMPLATES: &str = include_str!("../assets/caption_templates.txt");

/// Lowercases, splits on whitespace and strips punctuation from both ends of
/// each word. Inner punctuation survives, so "6.2" stays one token.
pub fn normalize_tokens(text: &str) -> Vec<String> {
    text.split_whitespace()
        .map(|w| w.trim_matches(|c: char| !c.is_alphanumeric()).to_lowercase())
        .filter(|w| !w.is_empty())
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CaptionOrigin {
    Human,
    RuleExtent,
    RulePatch,
    RuleLocation,
    RuleSummary,
}

impl CaptionOrigin {
    pub const RULES: [CaptionOrigin; 4] = [
        CaptionOrigin::RuleExtent,
        CaptionOrigin::RulePatch,
        CaptionOrigin::RuleLocation,
        CaptionOrigin::RuleSummary,
    ];

    fn template_key(self) -> Option<&'static str> {
        match self {
            CaptionOrigin::Human => None,
            CaptionOrigin::RuleExtent => Some("extent"),
            CaptionOrigin::RulePatch => Some("patch"),
            CaptionOrigin::RuleLocation => Some("location"),
            CaptionOrigin::RuleSummary => Some("summary"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Caption {
    pub tokens: Vec<String>,
    pub origin: CaptionOrigin,
}

impl Caption {
    pub fn new(text: &str, origin: CaptionOrigin) -> Result<Self> {
        let tokens = normalize_tokens(text);
        if tokens.is_empty() {
            return Err(Error::Template(format!("caption `{text}` has no tokens")));
        }
        Ok(Self { tokens, origin })
    }

    pub fn text(&self) -> String {
        self.tokens.join(" ")
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct CaptionSet {
    pub pair_id: String,
    pub captions: Vec<Caption>,
}

impl CaptionSet {
    pub fn by_origin(&self, origin: CaptionOrigin) -> Option<&Caption> {
        self.captions.iter().find(|c| c.origin == origin)
    }

    pub fn token_lists(&self) -> Vec<Vec<String>> {
        self.captions.iter().map(|c| c.tokens.clone()).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Severity {
    None,
    Minimal,
    Minor,
    Moderate,
    Major,
    Severe,
}

impl Severity {
    pub const ALL: [Severity; 6] = [
        Severity::None,
        Severity::Minimal,
        Severity::Minor,
        Severity::Moderate,
        Severity::Major,
        Severity::Severe,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Severity::None => "none",
            Severity::Minimal => "minimal",
            Severity::Minor => "minor",
            Severity::Moderate => "moderate",
            Severity::Major => "major",
            Severity::Severe => "severe",
        }
    }
}

impl fmt::Display for Severity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// A severity name with the percent interval that selects it. `None` covers
/// exactly 0; every other level is `(lower, upper]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeverityLevel {
    pub name: Severity,
    pub lower: f64,
    pub upper: f64,
}

/// Upper edges of the minimal, minor, moderate and major levels. Values above
/// the last edge are severe.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeverityScale {
    pub edges: [f64; 4],
}

impl Default for SeverityScale {
    fn default() -> Self {
        Self {
            edges: [1.0, 5.0, 15.0, 40.0],
        }
    }
}

impl SeverityScale {
    pub fn new(edges: [f64; 4]) -> Result<Self> {
        let ok = edges[0] > 0.0 && edges.windows(2).all(|w| w[0] < w[1]) && edges[3] < 100.0;
        if !ok {
            return Err(Error::InvalidParameter(format!(
                "severity edges must increase strictly within (0, 100): {edges:?}"
            )));
        }
        Ok(Self { edges })
    }

    pub fn levels(&self) -> [SeverityLevel; 6] {
        let e = self.edges;
        let bounds = [
            (0.0, 0.0),
            (0.0, e[0]),
            (e[0], e[1]),
            (e[1], e[2]),
            (e[2], e[3]),
            (e[3], 100.0),
        ];
        let mut out = [SeverityLevel {
            name: Severity::None,
            lower: 0.0,
            upper: 0.0,
        }; 6];
        for (slot, (name, (lower, upper))) in out.iter_mut().zip(Severity::ALL.into_iter().zip(bounds)) {
            *slot = SeverityLevel { name, lower, upper };
        }
        out
    }

    pub fn bucket(&self, change_percent: f64) -> Result<SeverityLevel> {
        if !(0.0..=100.0).contains(&change_percent) {
            return Err(Error::OutOfRange(change_percent));
        }
        let levels = self.levels();
        if change_percent == 0.0 {
            return Ok(levels[0]);
        }
        Ok(*levels[1..]
            .iter()
            .find(|l| change_percent <= l.upper)
            .unwrap_or(&levels[5]))
    }
}

/// Severity under the default scale.
pub fn severity_bucket(change_percent: f64) -> Result<SeverityLevel> {
    SeverityScale::default().bucket(change_percent)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Patchiness {
    Single,
    Few,
    Scattered,
}

impl Patchiness {
    /// Descriptor for a patch count; `None` when there are no patches.
    pub fn from_count(n: usize) -> Option<Patchiness> {
        match n {
            0 => None,
            1 => Some(Patchiness::Single),
            2..=5 => Some(Patchiness::Few),
            _ => Some(Patchiness::Scattered),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Patchiness::Single => "single",
            Patchiness::Few => "few",
            Patchiness::Scattered => "scattered",
        }
    }
}

const PLACEHOLDERS: [&str; 6] = [
    "percent",
    "severity",
    "n_patches",
    "patchiness",
    "cell",
    "largest_percent",
];

/// Parsed template table: one template per rule origin for scenes with
/// change and one for scenes without.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TemplateTable {
    pub version: String,
    templates: BTreeMap<String, String>,
}

impl Default for TemplateTable {
    fn default() -> Self {
        DEFAULT_TEMPLATES.parse().expect("bundled templates parse")
    }
}

impl FromStr for TemplateTable {
    type Err = Error;

    fn from_str(text: &str) -> Result<Self> {
        let mut version = None;
        let mut templates = BTreeMap::new();
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Template(format!("line {}: expected `key = template`", n + 1)))?;
            let (key, value) = (key.trim(), value.trim());
            if key == "version" {
                version = Some(value.to_string());
                continue;
            }
            check_placeholders(value).map_err(|e| Error::Template(format!("line {}: {e}", n + 1)))?;
            if templates.insert(key.to_string(), value.to_string()).is_some() {
                return Err(Error::Template(format!("line {}: duplicate key `{key}`", n + 1)));
            }
        }
        for origin in CaptionOrigin::RULES {
            let key = origin.template_key().unwrap();
            for k in [key.to_string(), format!("{key}.none")] {
                if !templates.contains_key(&k) {
                    return Err(Error::Template(format!("missing template `{k}`")));
                }
            }
        }
        Ok(Self {
            version: version.ok_or_else(|| Error::Template("missing `version`".into()))?,
            templates,
        })
    }
}

fn check_placeholders(template: &str) -> std::result::Result<(), String> {
    let mut rest = template;
    while let Some(start) = rest.find('{') {
        let end = rest[start..]
            .find('}')
            .ok_or_else(|| "unterminated placeholder".to_string())?;
        let name = &rest[start + 1..start + end];
        if !PLACEHOLDERS.contains(&name) {
            return Err(format!("unknown placeholder `{{{name}}}`"));
        }
        rest = &rest[start + end + 1..];
    }
    Ok(())
}

impl TemplateTable {
    pub fn load(path: impl AsRef<std::path::Path>) -> Result<Self> {
        let path = path.as_ref();
        std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?.parse()
    }

    pub fn template(&self, origin: CaptionOrigin, no_change: bool) -> Option<&str> {
        let key = origin.template_key()?;
        let key = if no_change {
            format!("{key}.none")
        } else {
            key.to_string()
        };
        self.templates.get(&key).map(String::as_str)
    }

    /// Instantiates the four rule captions for one mask.
    pub fn generate(&self, stats: &MaskStats, pair_id: &str, scale: &SeverityScale) -> Result<CaptionSet> {
        let severity = scale.bucket(stats.change_percent)?.name;
        let no_change = stats.changed_pixels == 0;
        let cells = stats
            .dominant_cells
            .iter()
            .map(|c| c.name())
            .collect::<Vec<_>>()
            .join(" and ");
        let values: [(&str, String); 6] = [
            ("percent", format!("{:.1}", stats.change_percent)),
            ("severity", severity.name().to_string()),
            ("n_patches", stats.num_patches.to_string()),
            (
                "patchiness",
                Patchiness::from_count(stats.num_patches)
                    .map(|p| p.name())
                    .unwrap_or("absent")
                    .to_string(),
            ),
            ("cell", cells),
            ("largest_percent", format!("{:.1}", stats.largest_patch_percent)),
        ];

        let captions = CaptionOrigin::RULES
            .iter()
            .map(|&origin| {
                let mut text = self
                    .template(origin, no_change)
                    .expect("all rule templates present after parsing")
                    .to_string();
                for (name, value) in &values {
                    text = text.replace(&format!("{{{name}}}"), value);
                }
                Caption::new(&text, origin)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(CaptionSet {
            pair_id: pair_id.to_string(),
            captions,
        })
    }
}

/// The four rule captions under the bundled templates and default severity scale.
pub fn generate_rule_captions(stats: &MaskStats, pair_id: &str) -> CaptionSet {
    TemplateTable::default()
        .generate(stats, pair_id, &SeverityScale::default())
        .expect("bundled templates cover every rule origin")
}
