use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::LlmError;
use crate::ingest::{DataKind, TableContext};

pub const SYSTEM_TEXT: &str = "You annotate columns of tabular datasets with semantic types.";

/// Line appended when an answer could not be parsed.
pub const ANSWER_REMINDER: &str = "Return only the JSON dict.";

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Prompt {
    pub system: String,
    pub user: String,
}

impl Prompt {
    pub fn new(user: String) -> Self {
        Prompt {
            system: SYSTEM_TEXT.to_string(),
            user,
        }
    }

    pub fn with_reminder(&self) -> Prompt {
        Prompt {
            system: self.system.clone(),
            user: format!("{}\n\n{ANSWER_REMINDER}", self.user),
        }
    }
}

/// A header co-appearing with cluster members: `hits` of the `cluster_size`
/// member columns sit in a table that has it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CooccurrenceEntry {
    pub name: String,
    pub hits: usize,
    pub cluster_size: usize,
}

impl std::fmt::Display for CooccurrenceEntry {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{} ({}/{})", self.name, self.hits, self.cluster_size)
    }
}

pub struct DiscoveryPromptInput<'a> {
    pub names: &'a [String],
    pub samples: &'a [String],
    pub context: &'a [CooccurrenceEntry],
    pub candidates: &'a [String],
}

fn json_list(labels: &[String]) -> String {
    serde_json::to_string(labels).expect("strings serialize").replace("\",\"", "\", \"")
}

const DISCOVERY_INTRO: &str = "You are given a set of columns grouped together based on embedding similarity of the values they store and their column names. Their column names, a representative sample of values, and a set of possible semantic types are provided. You are also given information about columns that co-appear with the ones in the cluster. Your task is to identify all distinct semantic types that accurately describe the data within a group of columns.";

const DISCOVERY_RULES: &str = r#"Your analysis should follow these key rules:
- Be specific: Semantic types must be more precise than generic data types (e.g., string, integer). They should capture the intended use of the data.
- Use all available information: Analyze both the column names and the sample values. Expand any abbreviations to inform your choice. If names and values conflict, prioritize what the values represent.
- Reuse or Propose: For EACH distinct concept you identify in the cluster, you must follow this logic:
  1. Check for Reuse: Look at the "Possible Semantic Types" list. If an existing type exactly and unambiguously describes that concept, you MUST use it.
  2. Propose New: If no existing type from the list is an exact match for that specific concept, you MUST propose a new, specific semantic type for it.
- Do not select a "closest match": This is critical. If an existing type is only similar but not an exact fit for a concept, you must propose a new type instead.
- Consider the broader context: Columns that co-appear with the ones in the cluster can be valuable context to better understand semantic types. Use the context provided to inform your choice.
- Avoid redundancy: Your final list of types should be distinct and not overlap."#;

const DISCOVERY_OUTPUT: &str = r#"Output ONLY a JSON dict {"answer": [semantic types]}."#;

/// Open-type discovery prompt for one cluster.
pub fn build_discovery_prompt(input: &DiscoveryPromptInput<'_>) -> Prompt {
    let context: Vec<String> = input.context.iter().map(|c| c.to_string()).collect();
    let mut u = String::new();
    writeln!(u, "{DISCOVERY_INTRO}\n").unwrap();
    writeln!(u, "Column names in cluster: [{}]\n", input.names.join(", ")).unwrap();
    writeln!(u, "Sample Values: {}\n", input.samples.join(" | ")).unwrap();
    writeln!(u, "Context Columns: {}\n", context.join(" | ")).unwrap();
    writeln!(u, "Possible Semantic Types: {}\n", json_list(input.candidates)).unwrap();
    writeln!(u, "{DISCOVERY_RULES}").unwrap();
    write!(u, "{DISCOVERY_OUTPUT}").unwrap();
    Prompt::new(u)
}

fn render_table(u: &mut String, ctx: &TableContext) {
    writeln!(u, "Table columns: {}", ctx.column_names.join(" | ")).unwrap();
    if ctx.sample_rows.is_empty() {
        writeln!(u, "Table rows: (none)").unwrap();
        return;
    }
    writeln!(u, "Table rows:").unwrap();
    for row in &ctx.sample_rows {
        let cells: Vec<&str> = row.iter().map(|c| c.as_deref().unwrap_or("")).collect();
        writeln!(u, "  {}", cells.join(" | ")).unwrap();
    }
}

pub struct AnnotationPromptInput<'a> {
    pub column_name: &'a str,
    pub kind: DataKind,
    pub context: &'a TableContext,
    pub samples: &'a [String],
    pub candidates: &'a [String],
}

/// Closed-set verification prompt: one numbered step per candidate.
pub fn build_annotation_prompt(input: &AnnotationPromptInput<'_>) -> Result<Prompt, LlmError> {
    if input.candidates.is_empty() {
        return Err(LlmError::EmptyCandidates);
    }
    let mut u = String::new();
    writeln!(
        u,
        "Decide which of the candidate semantic types apply to one column of a table. You may only choose from the candidates.\n"
    )
    .unwrap();
    writeln!(u, "Column name: {}", input.column_name).unwrap();
    writeln!(u, "Column kind: {}", input.kind).unwrap();
    render_table(&mut u, input.context);
    writeln!(u, "Sample Values: {}", input.samples.join(" | ")).unwrap();
    writeln!(u, "Candidate Semantic Types: {}\n", json_list(input.candidates)).unwrap();
    let rule = match input.kind {
        DataKind::Textual => "keep it if it correctly names what some or all of the sample values are; otherwise drop it",
        DataKind::Numerical => "judge from the column name and the table context whether the numbers measure or count what it names; keep it only then",
    };
    writeln!(u, "Check the candidates one at a time:").unwrap();
    for (i, c) in input.candidates.iter().enumerate() {
        writeln!(u, "{}. \"{}\": {}.", i + 1, c, rule).unwrap();
    }
    writeln!(
        u,
        "\nIf no candidate fits, drop all of them and answer with an empty list."
    )
    .unwrap();
    write!(u, "Output ONLY a JSON dict {{\"answer\": [kept semantic types]}}.").unwrap();
    Ok(Prompt::new(u))
}

pub struct JudgePromptInput<'a> {
    pub column_name: &'a str,
    pub context: &'a TableContext,
    pub values: &'a [String],
    pub labels: &'a [String],
}

/// Grading prompt: one verdict per pooled label.
pub fn build_judge_prompt(input: &JudgePromptInput<'_>) -> Prompt {
    let mut u = String::new();
    writeln!(u, "Grade the semantic type annotations given to one column of a table.\n").unwrap();
    writeln!(u, "Column name: {}", input.column_name).unwrap();
    render_table(&mut u, input.context);
    writeln!(u, "Column values: {}", input.values.join(" | ")).unwrap();
    writeln!(u, "Annotations: {}\n", json_list(input.labels)).unwrap();
    writeln!(
        u,
        "An annotation is correct when it names a real-world concept that fits at least part of the column's values. Generic data types such as string, integer or number are incorrect."
    )
    .unwrap();
    let schema: Vec<String> = input
        .labels
        .iter()
        .map(|l| format!("{}: \"correct\" or \"incorrect\"", serde_json::to_string(l).unwrap()))
        .collect();
    write!(
        u,
        "Output ONLY a JSON dict {{\"verdicts\": {{{}}}}} with exactly {} entr{}.",
        schema.join(", "),
        input.labels.len(),
        if input.labels.len() == 1 { "y" } else { "ies" }
    )
    .unwrap();
    Prompt::new(u)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BaselineStyle {
    /// Bare request without guidelines.
    Naive,
    /// Same guidelines as the cluster discovery prompt.
    Guided,
}

/// Whole-table prompt. `known` is the running type list for reuse variants.
pub fn build_baseline_prompt(
    style: BaselineStyle,
    table_name: &str,
    context: &TableContext,
    known: Option<&[String]>,
) -> Prompt {
    let mut u = String::new();
    match style {
        BaselineStyle::Naive => {
            writeln!(u, "Identify all distinct semantic types of every column of this table.\n").unwrap()
        }
        BaselineStyle::Guided => writeln!(
            u,
            "You are given one table: its column names and sample rows. Identify all distinct semantic types that accurately describe the data of each column.\n"
        )
        .unwrap(),
    }
    writeln!(u, "Table: {table_name}").unwrap();
    render_table(&mut u, context);
    if let Some(known) = known {
        writeln!(u, "\nPossible Semantic Types: {}", json_list(known)).unwrap();
    }
    if style == BaselineStyle::Guided {
        writeln!(u, "\n{DISCOVERY_RULES}").unwrap();
    }
    write!(
        u,
        "\nOutput ONLY a JSON dict {{\"answer\": {{\"<column name>\": [semantic types]}}}}."
    )
    .unwrap();
    Prompt::new(u)
}
