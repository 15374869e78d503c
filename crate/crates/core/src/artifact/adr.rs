//! ADR markdown: a `---` front-matter block followed by the sections
//! `## Context`, `## Decision` and `## Consequences`, in that order.

use chrono::NaiveDate;

use super::{AdRecord, AdrStatus};

const SECTIONS: [&str; 3] = ["## Context", "## Decision", "## Consequences"];

/// File-name slug for a title: lowercase ASCII alphanumerics joined by `-`.
pub fn slug(title: &str) -> String {
    let mut out = String::with_capacity(title.len());
    for c in title.chars() {
        if c.is_ascii_alphanumeric() {
            out.push(c.to_ascii_lowercase());
        } else if !out.ends_with('-') {
            out.push('-');
        }
    }
    out.trim_matches('-').to_owned()
}

pub fn render_adr(adr: &AdRecord) -> String {
    let mut out = String::new();
    out.push_str("---\n");
    out.push_str(&format!("id: {}\n", adr.id));
    out.push_str(&format!("title: {}\n", adr.title));
    out.push_str(&format!("status: {}\n", adr.status.as_str()));
    out.push_str(&format!("date: {}\n", adr.date.format("%Y-%m-%d")));
    if let Some(s) = &adr.supersedes {
        out.push_str(&format!("supersedes: {s}\n"));
    }
    out.push_str("---\n");
    for (heading, body) in SECTIONS.iter().zip([&adr.context, &adr.decision, &adr.consequences]) {
        out.push_str(&format!("\n{heading}\n\n{body}\n"));
    }
    out
}

/// Parse an ADR file. Errors carry a 1-based line number.
pub fn parse_adr(text: &str) -> Result<AdRecord, (usize, String)> {
    let lines: Vec<&str> = text.lines().map(|l| l.strip_suffix('\r').unwrap_or(l)).collect();
    if lines.first() != Some(&"---") {
        return Err((1, "expected front-matter delimiter `---`".into()));
    }
    let close = lines
        .iter()
        .skip(1)
        .position(|l| *l == "---")
        .map(|p| p + 1)
        .ok_or_else(|| (lines.len().max(1), "unterminated front matter".to_owned()))?;

    let (mut id, mut title, mut status, mut date, mut supersedes) = (None, None, None, None, None);
    for (idx, line) in lines.iter().enumerate().take(close).skip(1) {
        let lineno = idx + 1;
        let (key, value) = line
            .split_once(':')
            .ok_or_else(|| (lineno, format!("expected `key: value`, found `{line}`")))?;
        let value = value.trim().to_owned();
        match key.trim() {
            "id" => id = Some(value),
            "title" => title = Some(value),
            "status" => {
                status = Some(
                    AdrStatus::parse(&value)
                        .ok_or_else(|| (lineno, format!("unknown status `{value}`")))?,
                )
            }
            "date" => {
                date = Some(
                    NaiveDate::parse_from_str(&value, "%Y-%m-%d")
                        .map_err(|e| (lineno, format!("invalid date `{value}`: {e}")))?,
                )
            }
            "supersedes" => supersedes = Some(value),
            other => return Err((lineno, format!("unknown front-matter key `{other}`"))),
        }
    }
    let missing = |field: &str| (close + 1, format!("front matter is missing `{field}`"));
    let id = id.ok_or_else(|| missing("id"))?;
    let title = title.ok_or_else(|| missing("title"))?;
    let status = status.ok_or_else(|| missing("status"))?;
    let date = date.ok_or_else(|| missing("date"))?;

    let mut bodies: [Vec<&str>; 3] = Default::default();
    let mut current: Option<usize> = None;
    for (idx, line) in lines.iter().enumerate().skip(close + 1) {
        let next = current.map_or(0, |c| c + 1);
        if next < SECTIONS.len() && *line == SECTIONS[next] {
            current = Some(next);
            continue;
        }
        match current {
            Some(c) => bodies[c].push(line),
            None if line.trim().is_empty() => {}
            None => {
                return Err((idx + 1, format!("expected `{}`, found `{line}`", SECTIONS[0])));
            }
        }
    }
    if current != Some(SECTIONS.len() - 1) {
        let want = SECTIONS[current.map_or(0, |c| c + 1)];
        return Err((lines.len().max(1), format!("missing section `{want}`")));
    }
    let [context, decision, consequences] = bodies.map(|b| b.join("\n").trim().to_owned());

    Ok(AdRecord {
        id,
        title,
        status,
        date,
        context,
        decision,
        consequences,
        supersedes,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> AdRecord {
        AdRecord {
            id: "ADR-0003".into(),
            title: "Short-lived JWT access tokens".into(),
            status: AdrStatus::Accepted,
            date: NaiveDate::from_ymd_opt(2025, 10, 20).unwrap(),
            context: "Sessions are hard to scale.\n\nSecond paragraph.".into(),
            decision: "Use JWT.".into(),
            consequences: "Stateless API.".into(),
            supersedes: Some("ADR-0002".into()),
        }
    }

    #[test]
    fn render_parse_round_trip() {
        let adr = sample();
        let text = render_adr(&adr);
        assert!(text.starts_with("---\nid: ADR-0003\n"));
        assert_eq!(parse_adr(&text).unwrap(), adr);
    }

    #[test]
    fn slugs() {
        assert_eq!(slug("Use PostgreSQL for storage!"), "use-postgresql-for-storage");
        assert_eq!(slug("  --a  b-- "), "a-b");
    }

    #[test]
    fn sections_must_be_ordered() {
        let text = render_adr(&sample()).replace("## Decision", "## Decisions");
        let (line, msg) = parse_adr(&text).unwrap_err();
        assert!(msg.contains("## Decision"), "{msg}");
        assert!(line >= 1);
    }

    #[test]
    fn bad_front_matter() {
        assert_eq!(parse_adr("# Title").unwrap_err().0, 1);
        let text = "---\nid: ADR-0001\nstatus: maybe\n---\n";
        assert_eq!(parse_adr(text).unwrap_err().0, 3);
        let text = "---\nid: ADR-0001\ntitle: t\nstatus: accepted\n---\n## Context\n\nc\n";
        assert!(parse_adr(text).unwrap_err().1.contains("date"));
    }
}
