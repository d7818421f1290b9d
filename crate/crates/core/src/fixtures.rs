//! The bundled example scenarios, embedded at compile time.

use crate::error::{Error, Result};
use crate::model::validate_instance;
use crate::scenario::{parse_scenario, Scenario};

pub const EX_A_JSON: &str = include_str!("../../../fixtures/ex_a.json");
pub const EX_B_JSON: &str = include_str!("../../../fixtures/ex_b.json");
pub const EX_C_JSON: &str = include_str!("../../../fixtures/ex_c.json");

/// Four students and four programs; signals `partition` and `full`.
pub fn ex_a() -> Scenario {
    parse_scenario(EX_A_JSON).expect("bundled scenario parses")
}

/// Two students, two programs, common priority; signals `full` and `null`.
pub fn ex_b() -> Scenario {
    parse_scenario(EX_B_JSON).expect("bundled scenario parses")
}

/// [`ex_b`] with another prior over its two states.
pub fn ex_b_with_prior(prior: [f64; 2]) -> Result<Scenario> {
    let mut s = ex_b();
    s.instance = s.instance.with_prior(prior.to_vec())?;
    let report = validate_instance(&s.instance);
    if !report.failures.is_empty() {
        return Err(Error::Validation(report));
    }
    s.warnings = report;
    Ok(s)
}

/// Same preferences as [`ex_b`] with prior `(0.4, 0.6)` and full disclosure.
pub fn ex_c() -> Scenario {
    parse_scenario(EX_C_JSON).expect("bundled scenario parses")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bundled_scenarios_load() {
        let a = ex_a();
        assert_eq!(a.instance.num_students(), 4);
        assert_eq!(a.completions.len(), 3);
        assert!(a.completions.iter().all(|c| c.student == "s2"));
        // s1 is indifferent under the even prior
        assert_eq!(ex_b().warnings.warnings.len(), 1);
        assert!(ex_b_with_prior([0.3, 0.7]).unwrap().warnings.warnings.is_empty());
        assert_eq!(ex_c().instance.prior(), &[0.4, 0.6]);
        assert!(ex_b_with_prior([0.3, 0.6]).is_err());
    }
}
