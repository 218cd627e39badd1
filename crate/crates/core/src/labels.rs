//! Human annotation labels and the labels CSV
//! (`sample_id, category[, hallucination_type][, language]`).

use std::collections::BTreeMap;
use std::io::Read;

use crate::error::{Error, Result};
use crate::trace::{AnnotationLabel, Category, GenerationTrace, HallucinationType};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelRecord {
    pub sample_id: String,
    pub category: Category,
    pub hallucination_type: Option<HallucinationType>,
    pub language: Option<String>,
}

impl LabelRecord {
    pub fn annotation(&self) -> AnnotationLabel {
        AnnotationLabel {
            category: self.category,
            hallucination_type: self.hallucination_type,
        }
    }

    /// `Some(true)` for hallucination, `Some(false)` for non-hallucination,
    /// `None` for samples excluded from detection (unsure, uninformative).
    pub fn binary(&self) -> Option<bool> {
        binary_label(self.category)
    }
}

pub fn binary_label(category: Category) -> Option<bool> {
    match category {
        Category::Hallucination => Some(true),
        Category::NonHallucination => Some(false),
        Category::Unsure | Category::Uninformative => None,
    }
}

pub type Labels = BTreeMap<String, LabelRecord>;

/// Reads the labels CSV. The `hallucination_type` and `language` columns
/// are optional; empty cells mean absent. A type on a non-hallucination row
/// is rejected.
pub fn read_labels_csv<R: Read>(r: R) -> Result<Labels> {
    let mut rdr = csv::Reader::from_reader(r);
    let headers = rdr.headers()?.clone();
    let col = |name: &str| headers.iter().position(|h| h.trim() == name);
    let id_col =
        col("sample_id").ok_or_else(|| Error::Csv("labels: missing sample_id column".into()))?;
    let cat_col =
        col("category").ok_or_else(|| Error::Csv("labels: missing category column".into()))?;
    let type_col = col("hallucination_type");
    let lang_col = col("language");

    let mut out = Labels::new();
    for record in rdr.records() {
        let record = record?;
        let cell = |c: Option<usize>| {
            c.and_then(|c| record.get(c))
                .map(str::trim)
                .filter(|s| !s.is_empty())
        };
        let id = cell(Some(id_col))
            .ok_or_else(|| Error::Csv("labels: empty sample_id".into()))?
            .to_string();
        let cat_text = cell(Some(cat_col)).unwrap_or_default();
        let category = Category::parse(cat_text).ok_or_else(|| {
            Error::Csv(format!(
                "labels: sample {id}: unknown category {cat_text:?}"
            ))
        })?;
        let hallucination_type = match cell(type_col) {
            None => None,
            Some(t) => Some(HallucinationType::parse(t).ok_or_else(|| {
                Error::Csv(format!(
                    "labels: sample {id}: unknown hallucination_type {t:?}"
                ))
            })?),
        };
        if hallucination_type.is_some() && category != Category::Hallucination {
            return Err(Error::Csv(format!(
                "labels: sample {id}: hallucination_type given for category {}",
                category.as_str()
            )));
        }
        let rec = LabelRecord {
            sample_id: id.clone(),
            category,
            hallucination_type,
            language: cell(lang_col).map(str::to_string),
        };
        if out.insert(id.clone(), rec).is_some() {
            return Err(Error::Csv(format!("labels: duplicate sample_id {id}")));
        }
    }
    Ok(out)
}

pub fn write_labels_csv<W: std::io::Write>(w: W, labels: &Labels) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["sample_id", "category", "hallucination_type", "language"])?;
    for rec in labels.values() {
        out.write_record([
            rec.sample_id.as_str(),
            rec.category.as_str(),
            rec.hallucination_type
                .map(|t| t.as_str())
                .unwrap_or_default(),
            rec.language.as_deref().unwrap_or_default(),
        ])?;
    }
    out.flush()?;
    Ok(())
}

/// Collects labels embedded in traces.
pub fn labels_from_traces(traces: &[GenerationTrace]) -> Labels {
    traces
        .iter()
        .filter_map(|t| {
            t.label.map(|l| {
                (
                    t.sample_id.clone(),
                    LabelRecord {
                        sample_id: t.sample_id.clone(),
                        category: l.category,
                        hallucination_type: l.hallucination_type,
                        language: t.language.clone(),
                    },
                )
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reads_full_and_minimal_schemas() {
        let text = "sample_id,category,hallucination_type,language\n\
                    a,hallucination,intent_deviation,java\n\
                    b,non_hallucination,,go\n\
                    c,unsure,,\n";
        let l = read_labels_csv(text.as_bytes()).unwrap();
        assert_eq!(l.len(), 3);
        assert_eq!(
            l["a"].hallucination_type,
            Some(HallucinationType::IntentDeviation)
        );
        assert_eq!(l["b"].language.as_deref(), Some("go"));
        assert_eq!(l["c"].binary(), None);

        let minimal = read_labels_csv("sample_id,category\nx,hallucination\n".as_bytes()).unwrap();
        assert_eq!(minimal["x"].binary(), Some(true));
        assert_eq!(minimal["x"].hallucination_type, None);
    }

    #[test]
    fn rejects_bad_rows() {
        assert!(read_labels_csv("sample_id,category\nx,maybe\n".as_bytes()).is_err());
        assert!(read_labels_csv("id,category\nx,unsure\n".as_bytes()).is_err());
        assert!(read_labels_csv(
            "sample_id,category,hallucination_type\nx,unsure,others\n".as_bytes()
        )
        .is_err());
        assert!(read_labels_csv("sample_id,category\nx,unsure\nx,unsure\n".as_bytes()).is_err());
    }

    #[test]
    fn write_then_read() {
        let text = "sample_id,category,hallucination_type,language\na,hallucination,others,rust\nb,uninformative,,\n";
        let l = read_labels_csv(text.as_bytes()).unwrap();
        let mut buf = Vec::new();
        write_labels_csv(&mut buf, &l).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), text);
    }
}
