use super::{ParseStats, RawUnit, Source, Strictness};
use crate::error::{Error, Result};
use crate::labels::{Dimension, Gold, Polarity};

const REQUIRED: [&str; 4] = ["sent_more", "sent_less", "stereo_antistereo", "bias_type"];

/// CrowS-Pairs category to dimension. Categories outside the four
/// dimensions map to `None`.
pub fn map_crowspairs_category(bias_type: &str) -> Option<Dimension> {
    match bias_type {
        "race-color" => Some(Dimension::Race),
        "gender" => Some(Dimension::Gender),
        "religion" => Some(Dimension::Religion),
        "socioeconomic" => Some(Dimension::Profession),
        _ => None,
    }
}

/// Parses the CrowS-Pairs CSV. Each mapped row yields two units, one per
/// pair member, each carrying the other member as its context.
///
/// `stereo` rows make `sent_more` the stereotype and `sent_less` the
/// anti-stereotype; `antistereo` rows swap them.
pub fn parse_crowspairs(raw: &[u8], strictness: Strictness) -> Result<(Vec<RawUnit>, ParseStats)> {
    let mut reader = csv::ReaderBuilder::new().flexible(false).from_reader(raw);
    let headers = reader
        .headers()
        .map_err(|e| Error::Schema(format!("unreadable CSV header: {e}")))?
        .clone();
    let mut cols = [0usize; 4];
    for (slot, name) in cols.iter_mut().zip(REQUIRED) {
        *slot = headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Schema(format!("missing required column `{name}`")))?;
    }
    let [more_col, less_col, dir_col, type_col] = cols;

    let mut stats = ParseStats::default();
    let mut units = Vec::new();
    for (i, row) in reader.records().enumerate() {
        let row_no = i + 1;
        let row = match row {
            Ok(r) => r,
            Err(e) => {
                if strictness.strict {
                    return Err(Error::Line {
                        line: row_no,
                        message: e.to_string(),
                    });
                }
                stats.skipped_rows.push((row_no, e.to_string()));
                continue;
            }
        };
        let field = |c: usize| row.get(c).unwrap_or("").trim().to_string();
        let Some(dimension) = map_crowspairs_category(&field(type_col)) else {
            stats.dropped_unmapped_category += 1;
            continue;
        };
        let (more, less) = (field(more_col), field(less_col));
        let more_polarity = match field(dir_col).as_str() {
            "stereo" => Polarity::Stereotype,
            "antistereo" => Polarity::AntiStereotype,
            other => {
                let msg = format!("unknown stereo_antistereo value `{other}`");
                if strictness.strict {
                    return Err(Error::Line {
                        line: row_no,
                        message: msg,
                    });
                }
                stats.skipped_rows.push((row_no, msg));
                continue;
            }
        };
        if more.is_empty() || less.is_empty() {
            let msg = "empty pair member".to_string();
            if strictness.strict {
                return Err(Error::Line {
                    line: row_no,
                    message: msg,
                });
            }
            stats.skipped_rows.push((row_no, msg));
            continue;
        }
        let less_polarity = match more_polarity {
            Polarity::Stereotype => Polarity::AntiStereotype,
            Polarity::AntiStereotype => Polarity::Stereotype,
        };
        let row_id = row
            .get(0)
            .filter(|_| headers.get(0).is_some_and(|h| !REQUIRED.contains(&h)))
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(str::to_string)
            .unwrap_or_else(|| row_no.to_string());
        units.push(RawUnit {
            source: Source::CrowsPairs,
            context: less.clone(),
            candidate: more.clone(),
            gold: Gold::Polar(more_polarity),
            dimension,
            source_id: format!("crowspairs:{row_id}:more"),
        });
        units.push(RawUnit {
            source: Source::CrowsPairs,
            context: more,
            candidate: less,
            gold: Gold::Polar(less_polarity),
            dimension,
            source_id: format!("crowspairs:{row_id}:less"),
        });
    }
    stats.units = units.len();
    Ok((units, stats))
}
