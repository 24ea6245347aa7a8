//! Version tags for every file format. A tag is `name/major`; loaders accept
//! any document whose name and major version match.

pub const AUTOMATON: &str = "ltlpsi.automaton/1";
pub const SCENARIO: &str = "ltlpsi.scenario/1";
pub const PLAN: &str = "ltlpsi.plan/1";
pub const TRANSCRIPT: &str = "ltlpsi.transcript/1";
pub const DECISION: &str = "ltlpsi.decision/1";
pub const REPORT: &str = "ltlpsi.report/1";
pub const PRODUCT: &str = "ltlpsi.product/1";

pub fn check(found: &str, expected: &str) -> Result<(), String> {
    let split = |s: &str| -> Option<(String, u32)> {
        let (name, ver) = s.rsplit_once('/')?;
        let major = ver.split('.').next()?.parse().ok()?;
        Some((name.to_string(), major))
    };
    let want = split(expected).expect("schema constants are well formed");
    match split(found) {
        Some((name, _)) if name != want.0 => Err(format!(
            "expected a `{}` document, found `{found}`",
            want.0
        )),
        Some((_, major)) if major != want.1 => Err(format!(
            "unsupported major version in `{found}` (this build reads `{expected}`)"
        )),
        Some(_) => Ok(()),
        None => Err(format!("unreadable schema tag `{found}`")),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn accepts_same_major() {
        assert!(check("ltlpsi.plan/1", PLAN).is_ok());
        assert!(check("ltlpsi.plan/1.3", PLAN).is_ok());
    }

    #[test]
    fn rejects_other_major_or_kind() {
        assert!(check("ltlpsi.plan/2", PLAN).is_err());
        assert!(check("ltlpsi.scenario/1", PLAN).is_err());
        assert!(check("garbage", PLAN).is_err());
    }
}
