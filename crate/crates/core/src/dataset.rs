//! Data model, CSV loading/writing, and AU binarization.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Upper end of the AU intensity scale.
pub const AU_MAX: f64 = 5.0;

/// Group attributes picked up automatically when present in a CSV header.
pub const KNOWN_ATTRIBUTES: [&str; 3] = ["gender", "age_group", "race"];

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Test => "test",
        }
    }
}

/// One face: AU intensities, derived presences, binary target label and
/// protected attributes.
#[derive(Clone, Debug, PartialEq)]
pub struct AnnotatedRecord {
    pub id: String,
    pub au_intensities: BTreeMap<String, f64>,
    pub au_presence: BTreeMap<String, u8>,
    pub label: u8,
    /// Group-blind reference label, present on synthetic data.
    pub fair_label: Option<u8>,
    pub group: BTreeMap<String, String>,
    pub features: Vec<f64>,
    pub split: Split,
}

impl AnnotatedRecord {
    pub fn level(&self, attribute: &str) -> Option<&str> {
        self.group.get(attribute).map(String::as_str)
    }

    /// Presence pattern over `aus`, or the first AU that is not binarized.
    pub fn cell_key(&self, aus: &[String]) -> std::result::Result<AuCellKey, String> {
        let mut bits = Vec::with_capacity(aus.len());
        for au in aus {
            match self.au_presence.get(au) {
                Some(&b) => bits.push((au.clone(), b)),
                None => return Err(au.clone()),
            }
        }
        Ok(AuCellKey::new(bits))
    }
}

/// Binarized AU presences identifying a conditioning cell, sorted by AU id.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct AuCellKey(Vec<(String, u8)>);

impl AuCellKey {
    pub fn new(mut bits: Vec<(String, u8)>) -> Self {
        bits.sort();
        Self(bits)
    }

    pub fn bits(&self) -> &[(String, u8)] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Every presence pattern over `aus`, in key order.
    pub fn enumerate(aus: &[String]) -> Vec<AuCellKey> {
        let mut sorted: Vec<String> = aus.to_vec();
        sorted.sort();
        sorted.dedup();
        let k = sorted.len();
        let mut keys: Vec<AuCellKey> = (0..(1u32 << k))
            .map(|mask| {
                AuCellKey(
                    sorted
                        .iter()
                        .enumerate()
                        .map(|(i, au)| (au.clone(), ((mask >> (k - 1 - i)) & 1) as u8))
                        .collect(),
                )
            })
            .collect();
        keys.sort();
        keys
    }
}

impl fmt::Display for AuCellKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.0.iter().map(|(au, b)| format!("{au}={b}")).collect();
        f.write_str(&parts.join(","))
    }
}

impl Serialize for AuCellKey {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

/// Validated, immutable collection of records. Transforms return new datasets.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    records: Vec<AnnotatedRecord>,
    attribute_levels: BTreeMap<String, Vec<String>>,
    au_ids: Vec<String>,
    feature_dim: usize,
}

impl Dataset {
    pub fn new(
        records: Vec<AnnotatedRecord>,
        attribute_levels: BTreeMap<String, Vec<String>>,
        au_ids: Vec<String>,
        feature_dim: usize,
    ) -> Result<Self> {
        if attribute_levels.is_empty() {
            return Err(Error::InvalidConfig("at least one group attribute is required".into()));
        }
        for (attr, levels) in &attribute_levels {
            let unique: BTreeSet<&String> = levels.iter().collect();
            if unique.len() != levels.len() {
                return Err(Error::InvalidConfig(format!("duplicate levels for `{attr}`")));
            }
        }
        let mut au_ids = au_ids;
        au_ids.sort();
        au_ids.dedup();
        let au_set: BTreeSet<&String> = au_ids.iter().collect();
        for (row, r) in records.iter().enumerate() {
            if r.features.len() != feature_dim {
                return Err(Error::InconsistentFeatureDim(format!(
                    "record `{}` has {} features, expected {feature_dim}",
                    r.id,
                    r.features.len()
                )));
            }
            if r.au_intensities.len() != au_ids.len()
                || r.au_intensities.keys().any(|k| !au_set.contains(k))
            {
                return Err(Error::ParseError {
                    row,
                    column: "AU".into(),
                    message: format!("record `{}` does not carry the dataset AU set", r.id),
                });
            }
            for (au, &v) in &r.au_intensities {
                if !(0.0..=AU_MAX).contains(&v) {
                    return Err(Error::ParseError {
                        row,
                        column: au.clone(),
                        message: format!("intensity {v} outside [0, {AU_MAX}]"),
                    });
                }
            }
            for (au, &b) in &r.au_presence {
                if b > 1 || !au_set.contains(au) {
                    return Err(Error::ParseError {
                        row,
                        column: format!("{au}_c"),
                        message: format!("invalid presence {b}"),
                    });
                }
            }
            if r.label > 1 || r.fair_label.is_some_and(|l| l > 1) {
                return Err(Error::ParseError {
                    row,
                    column: "label".into(),
                    message: "label must be 0 or 1".into(),
                });
            }
            for (attr, levels) in &attribute_levels {
                match r.group.get(attr) {
                    Some(v) if levels.contains(v) => {}
                    Some(v) => {
                        return Err(Error::UnknownGroupLevel {
                            attribute: attr.clone(),
                            level: v.clone(),
                        })
                    }
                    None => return Err(Error::MissingColumn(attr.clone())),
                }
            }
        }
        Ok(Self {
            records,
            attribute_levels,
            au_ids,
            feature_dim,
        })
    }

    /// Same metadata, different records.
    pub fn with_records(&self, records: Vec<AnnotatedRecord>) -> Result<Self> {
        Self::new(
            records,
            self.attribute_levels.clone(),
            self.au_ids.clone(),
            self.feature_dim,
        )
    }

    pub fn records(&self) -> &[AnnotatedRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn attribute_levels(&self) -> &BTreeMap<String, Vec<String>> {
        &self.attribute_levels
    }

    pub fn levels(&self, attribute: &str) -> Result<&[String]> {
        self.attribute_levels
            .get(attribute)
            .map(Vec::as_slice)
            .ok_or_else(|| Error::UnknownAttribute(attribute.to_string()))
    }

    pub fn au_ids(&self) -> &[String] {
        &self.au_ids
    }

    pub fn feature_dim(&self) -> usize {
        self.feature_dim
    }

    /// Records of one split, as a new dataset.
    pub fn split(&self, split: Split) -> Result<Self> {
        self.with_records(
            self.records
                .iter()
                .filter(|r| r.split == split)
                .cloned()
                .collect(),
        )
    }

    /// Fails with `NotBinarized` unless every record carries a presence for
    /// each AU in `aus`.
    pub fn require_binarized(&self, aus: &[String]) -> Result<()> {
        for au in aus {
            if !self.au_ids.contains(au) {
                return Err(Error::UnknownAu(au.clone()));
            }
            if self.records.iter().any(|r| !r.au_presence.contains_key(au)) {
                return Err(Error::NotBinarized(au.clone()));
            }
        }
        Ok(())
    }

    /// Copy with labels replaced by the fair reference labels.
    pub fn with_fair_labels(&self) -> Result<Self> {
        let mut records = self.records.clone();
        for r in &mut records {
            r.label = r
                .fair_label
                .ok_or_else(|| Error::MissingColumn("fair_label".into()))?;
        }
        self.with_records(records)
    }
}

/// Declares how CSV columns map onto the data model.
#[derive(Clone, Debug, Default)]
pub struct Schema {
    /// Target label. A column with this name is read as 0/1; otherwise the
    /// `label` column is used, either as 0/1 or as categorical values where
    /// this name is the positive class. `None` means no label (all zeros).
    pub label: Option<String>,
    /// Attributes that must be present. Known attributes found in the header
    /// are added automatically. Empty means `["gender"]`.
    pub group_attrs: Vec<String>,
    /// Required AU columns; `None` detects every `AU<n>` column.
    pub au_ids: Option<Vec<String>>,
    /// Explicit level order per attribute; otherwise levels are sorted.
    pub level_order: BTreeMap<String, Vec<String>>,
}

impl Schema {
    pub fn with_label(label: &str) -> Self {
        Self {
            label: Some(label.to_string()),
            ..Self::default()
        }
    }
}

/// Side information gathered while loading.
#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct LoadReport {
    pub rows_read: usize,
    pub dropped_count: usize,
    pub dropped_ids: Vec<String>,
    pub ignored_columns: Vec<String>,
    pub label_column: Option<String>,
    pub label_positive_value: Option<String>,
}

fn is_au_column(name: &str) -> bool {
    name.len() > 2 && name.starts_with("AU") && name[2..].chars().all(|c| c.is_ascii_digit())
}

fn feature_index(name: &str) -> Option<usize> {
    let rest = name.strip_prefix('f')?;
    if rest.is_empty() || !rest.chars().all(|c| c.is_ascii_digit()) {
        return None;
    }
    rest.parse().ok()
}

fn parse_bit(raw: &str, row: usize, column: &str) -> Result<u8> {
    match raw.trim() {
        "0" => Ok(0),
        "1" => Ok(1),
        other => Err(Error::ParseError {
            row,
            column: column.to_string(),
            message: format!("expected 0 or 1, got `{other}`"),
        }),
    }
}

fn parse_real(raw: &str, row: usize, column: &str) -> Result<f64> {
    let v: f64 = raw.trim().parse().map_err(|_| Error::ParseError {
        row,
        column: column.to_string(),
        message: format!("not a number: `{raw}`"),
    })?;
    if !v.is_finite() {
        return Err(Error::ParseError {
            row,
            column: column.to_string(),
            message: "non-finite value".into(),
        });
    }
    Ok(v)
}

pub fn load_dataset(path: impl AsRef<Path>, schema: &Schema) -> Result<(Dataset, LoadReport)> {
    let file = std::fs::File::open(path)?;
    read_dataset(file, schema)
}

/// Reads a headered CSV. Rows with an empty AU intensity are dropped and
/// counted; every other malformed cell is an error.
pub fn read_dataset<R: Read>(reader: R, schema: &Schema) -> Result<(Dataset, LoadReport)> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let header: Vec<String> = rdr.headers()?.iter().map(|h| h.trim().to_string()).collect();
    let col = |name: &str| header.iter().position(|h| h == name);

    let mut report = LoadReport::default();

    let id_col = col("id").ok_or_else(|| Error::MissingColumn("id".into()))?;

    let au_ids: Vec<String> = match &schema.au_ids {
        Some(ids) => {
            for au in ids {
                if col(au).is_none() {
                    return Err(Error::MissingColumn(au.clone()));
                }
            }
            ids.clone()
        }
        None => header.iter().filter(|h| is_au_column(h)).cloned().collect(),
    };
    let au_cols: Vec<(String, usize, Option<usize>)> = au_ids
        .iter()
        .map(|au| (au.clone(), col(au).unwrap(), col(&format!("{au}_c"))))
        .collect();

    let mut attrs: Vec<String> = if schema.group_attrs.is_empty() {
        vec!["gender".to_string()]
    } else {
        schema.group_attrs.clone()
    };
    for known in KNOWN_ATTRIBUTES {
        if col(known).is_some() && !attrs.iter().any(|a| a == known) {
            attrs.push(known.to_string());
        }
    }
    let mut attr_cols = Vec::new();
    for a in &attrs {
        attr_cols.push((a.clone(), col(a).ok_or_else(|| Error::MissingColumn(a.clone()))?));
    }

    enum LabelMode {
        None,
        Binary(usize),
        Categorical(usize, String),
    }
    let rows: Vec<csv::StringRecord> = rdr.records().collect::<std::result::Result<_, _>>()?;
    report.rows_read = rows.len();

    let label_mode = match &schema.label {
        None => LabelMode::None,
        Some(name) => {
            if let Some(c) = col(name) {
                LabelMode::Binary(c)
            } else if let Some(c) = col("label") {
                let binary = rows
                    .iter()
                    .all(|r| matches!(r.get(c).map(str::trim), Some("0") | Some("1")));
                if binary {
                    LabelMode::Binary(c)
                } else {
                    LabelMode::Categorical(c, name.clone())
                }
            } else {
                return Err(Error::MissingColumn(name.clone()));
            }
        }
    };
    match &label_mode {
        LabelMode::None => {}
        LabelMode::Binary(c) => report.label_column = Some(header[*c].clone()),
        LabelMode::Categorical(c, v) => {
            report.label_column = Some(header[*c].clone());
            report.label_positive_value = Some(v.clone());
        }
    }
    let label_col = match &label_mode {
        LabelMode::Binary(c) | LabelMode::Categorical(c, _) => Some(*c),
        LabelMode::None => None,
    };
    let fair_col = col("fair_label").filter(|c| Some(*c) != label_col);
    let split_col = col("split");

    let mut feature_cols: Vec<(usize, usize)> = header
        .iter()
        .enumerate()
        .filter_map(|(i, h)| feature_index(h).map(|k| (k, i)))
        .collect();
    feature_cols.sort();
    for (expected, (k, _)) in feature_cols.iter().enumerate() {
        if *k != expected {
            return Err(Error::InconsistentFeatureDim(format!(
                "feature columns must be f0..f{{d-1}} without gaps; found f{k} at position {expected}"
            )));
        }
    }
    let feature_dim = feature_cols.len();

    let mut used: BTreeSet<usize> = BTreeSet::new();
    used.insert(id_col);
    for (_, c, pc) in &au_cols {
        used.insert(*c);
        if let Some(pc) = pc {
            used.insert(*pc);
        }
    }
    for (_, c) in &attr_cols {
        used.insert(*c);
    }
    used.extend(label_col);
    used.extend(fair_col);
    used.extend(split_col);
    used.extend(feature_cols.iter().map(|(_, c)| *c));
    report.ignored_columns = header
        .iter()
        .enumerate()
        .filter(|(i, _)| !used.contains(i))
        .map(|(_, h)| h.clone())
        .collect();

    let mut records = Vec::with_capacity(rows.len());
    let mut seen_levels: BTreeMap<String, BTreeSet<String>> = BTreeMap::new();
    for (row_idx, row) in rows.iter().enumerate() {
        let row_no = row_idx + 1;
        let cell = |c: usize| row.get(c).unwrap_or("").trim();
        let id = cell(id_col).to_string();

        if au_cols.iter().any(|(_, c, _)| cell(*c).is_empty()) {
            report.dropped_count += 1;
            report.dropped_ids.push(id);
            continue;
        }
        let mut au_intensities = BTreeMap::new();
        let mut au_presence = BTreeMap::new();
        for (au, c, pc) in &au_cols {
            let v = parse_real(cell(*c), row_no, au)?;
            if !(0.0..=AU_MAX).contains(&v) {
                return Err(Error::ParseError {
                    row: row_no,
                    column: au.clone(),
                    message: format!("intensity {v} outside [0, {AU_MAX}]"),
                });
            }
            au_intensities.insert(au.clone(), v);
            if let Some(pc) = pc {
                let raw = cell(*pc);
                if !raw.is_empty() {
                    au_presence.insert(au.clone(), parse_bit(raw, row_no, &header[*pc])?);
                }
            }
        }
        let label = match &label_mode {
            LabelMode::None => 0,
            LabelMode::Binary(c) => parse_bit(cell(*c), row_no, &header[*c])?,
            LabelMode::Categorical(c, positive) => u8::from(cell(*c) == positive),
        };
        let fair_label = match fair_col {
            Some(c) if !cell(c).is_empty() => Some(parse_bit(cell(c), row_no, "fair_label")?),
            _ => None,
        };
        let mut group = BTreeMap::new();
        for (attr, c) in &attr_cols {
            let v = cell(*c);
            if v.is_empty() {
                return Err(Error::ParseError {
                    row: row_no,
                    column: attr.clone(),
                    message: "empty group value".into(),
                });
            }
            seen_levels.entry(attr.clone()).or_default().insert(v.to_string());
            group.insert(attr.clone(), v.to_string());
        }
        let split = match split_col.map(cell) {
            None | Some("") | Some("train") => Split::Train,
            Some("test") => Split::Test,
            Some(other) => {
                return Err(Error::ParseError {
                    row: row_no,
                    column: "split".into(),
                    message: format!("expected train or test, got `{other}`"),
                })
            }
        };
        let mut features = Vec::with_capacity(feature_dim);
        for (k, c) in &feature_cols {
            let raw = cell(*c);
            if raw.is_empty() {
                return Err(Error::InconsistentFeatureDim(format!(
                    "row {row_no} has no value for f{k}"
                )));
            }
            features.push(parse_real(raw, row_no, &header[*c])?);
        }
        records.push(AnnotatedRecord {
            id,
            au_intensities,
            au_presence,
            label,
            fair_label,
            group,
            features,
            split,
        });
    }
    if records.is_empty() {
        return Err(Error::EmptyDataset);
    }

    let mut attribute_levels = BTreeMap::new();
    for (attr, _) in &attr_cols {
        let seen = seen_levels.remove(attr).unwrap_or_default();
        let levels = match schema.level_order.get(attr) {
            Some(order) => {
                if let Some(extra) = seen.iter().find(|v| !order.contains(v)) {
                    return Err(Error::UnknownGroupLevel {
                        attribute: attr.clone(),
                        level: extra.clone(),
                    });
                }
                order.clone()
            }
            None => seen.into_iter().collect(),
        };
        attribute_levels.insert(attr.clone(), levels);
    }
    let ds = Dataset::new(records, attribute_levels, au_ids, feature_dim)?;
    Ok((ds, report))
}

/// Writes the dataset as CSV in the layout `read_dataset` accepts. Presence
/// columns (`<AU>_c`) and `fair_label` are written when every record has them.
pub fn write_dataset<W: Write>(dataset: &Dataset, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let recs = dataset.records();
    let presence_aus: Vec<&String> = dataset
        .au_ids()
        .iter()
        .filter(|au| !recs.is_empty() && recs.iter().all(|r| r.au_presence.contains_key(*au)))
        .collect();
    let with_fair = !recs.is_empty() && recs.iter().all(|r| r.fair_label.is_some());
    let attrs: Vec<&String> = dataset.attribute_levels().keys().collect();

    let mut header: Vec<String> = vec!["id".into()];
    header.extend(dataset.au_ids().iter().cloned());
    header.extend(presence_aus.iter().map(|au| format!("{au}_c")));
    header.push("label".into());
    if with_fair {
        header.push("fair_label".into());
    }
    header.extend(attrs.iter().map(|a| a.to_string()));
    header.push("split".into());
    header.extend((0..dataset.feature_dim()).map(|k| format!("f{k}")));
    w.write_record(&header)?;

    for r in recs {
        let mut row: Vec<String> = vec![r.id.clone()];
        row.extend(dataset.au_ids().iter().map(|au| r.au_intensities[au].to_string()));
        row.extend(presence_aus.iter().map(|au| r.au_presence[*au].to_string()));
        row.push(r.label.to_string());
        if with_fair {
            row.push(r.fair_label.unwrap().to_string());
        }
        row.extend(attrs.iter().map(|a| r.group[*a].clone()));
        row.push(r.split.as_str().to_string());
        row.extend(r.features.iter().map(|v| v.to_string()));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn save_dataset(dataset: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let file = std::fs::File::create(path)?;
    write_dataset(dataset, std::io::BufWriter::new(file))
}

/// Schema that reloads a dataset written by `write_dataset` unchanged.
pub fn roundtrip_schema(dataset: &Dataset) -> Schema {
    Schema {
        label: Some("label".into()),
        group_attrs: dataset.attribute_levels().keys().cloned().collect(),
        au_ids: Some(dataset.au_ids().to_vec()),
        level_order: dataset.attribute_levels().clone(),
    }
}

/// Per-group AU thresholds; these take precedence over global ones.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct GroupThresholds {
    pub attribute: String,
    /// AU id → group level → threshold.
    pub thresholds: BTreeMap<String, BTreeMap<String, f64>>,
}

/// Sets `au_presence[au] = 1` iff intensity is strictly above the threshold.
pub fn binarize(
    dataset: &Dataset,
    thresholds: &BTreeMap<String, f64>,
    per_group: Option<&GroupThresholds>,
) -> Result<Dataset> {
    for au in thresholds.keys() {
        if !dataset.au_ids().contains(au) {
            return Err(Error::UnknownAu(au.clone()));
        }
    }
    if let Some(pg) = per_group {
        let levels = dataset.levels(&pg.attribute)?;
        for (au, by_level) in &pg.thresholds {
            if !dataset.au_ids().contains(au) {
                return Err(Error::UnknownAu(au.clone()));
            }
            if let Some(extra) = by_level.keys().find(|l| !levels.contains(l)) {
                return Err(Error::UnknownGroupLevel {
                    attribute: pg.attribute.clone(),
                    level: extra.clone(),
                });
            }
            if let Some(missing) = levels.iter().find(|l| !by_level.contains_key(*l)) {
                return Err(Error::UnknownGroupLevel {
                    attribute: pg.attribute.clone(),
                    level: missing.clone(),
                });
            }
        }
    }
    let mut records = dataset.records().to_vec();
    for r in &mut records {
        for (au, &t) in thresholds {
            r.au_presence.insert(au.clone(), u8::from(r.au_intensities[au] > t));
        }
        if let Some(pg) = per_group {
            let level = &r.group[&pg.attribute];
            for (au, by_level) in &pg.thresholds {
                let t = by_level[level];
                r.au_presence.insert(au.clone(), u8::from(r.au_intensities[au] > t));
            }
        }
    }
    dataset.with_records(records)
}
