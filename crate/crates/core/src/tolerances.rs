use serde::{Deserialize, Serialize};

/// Numerical tolerances shared by every stage.
///
/// Deserializes from a partial object: missing fields take their defaults,
/// which is how problem files override individual values.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Tolerances {
    /// Relative singular-value cutoff for the effective rank of a constraint Jacobian.
    pub rank_tol: f64,
    /// Constraint residual a retraction must reach.
    pub retract_tol: f64,
    /// Accuracy of level-set landings and projections, `|f - c|`.
    pub level_tol: f64,
    /// Residual accepted by membership checks.
    pub member_tol: f64,
    /// Largest starting residual a retraction will attempt.
    pub retract_capture: f64,
    /// Projected-gradient norm below which a point counts as critical.
    pub crit_tol: f64,
    /// Projected-gradient norm that declares a flow converged.
    pub grad_tol: f64,
    /// Distance below which critical points are merged.
    pub cluster_tol: f64,
    /// Distance below which critical values are merged.
    pub value_merge_tol: f64,
    /// Minimum separation between distinct critical values.
    pub gap_tol: f64,
    /// Distance at which a trajectory is captured by an isolated singular point of Z.
    pub singular_capture: f64,
    /// Relative slack applied to the flow-estimate checks.
    pub check_slack: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            rank_tol: 1e-8,
            retract_tol: 1e-10,
            level_tol: 1e-10,
            member_tol: 1e-8,
            retract_capture: 10.0,
            crit_tol: 1e-9,
            grad_tol: 1e-8,
            cluster_tol: 1e-6,
            value_merge_tol: 1e-8,
            gap_tol: 1e-4,
            singular_capture: 1e-9,
            check_slack: 0.05,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn partial_override_keeps_defaults() {
        let t: Tolerances = serde_json::from_str(r#"{"gap_tol": 0.5}"#).unwrap();
        assert_eq!(t.gap_tol, 0.5);
        assert_eq!(t.rank_tol, 1e-8);
        assert!(serde_json::from_str::<Tolerances>(r#"{"gap": 1}"#).is_err());
    }
}
