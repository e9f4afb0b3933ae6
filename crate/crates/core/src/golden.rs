//! Reference query tables for the three small worked instances, stored as
//! data and compared structurally against freshly built plans.

use serde::Deserialize;

use crate::error::Result;
use crate::params::derive_params;
use crate::plan::{build_plan, Permutations, QueryPlan};

/// One reference table: per server, the sums as `[record, logical column]`
/// term lists under identity permutations.
#[derive(Clone, Debug, Deserialize)]
pub struct GoldenFigure {
    pub name: String,
    #[serde(rename = "M")]
    pub m: usize,
    #[serde(rename = "N")]
    pub n: usize,
    #[serde(rename = "K")]
    pub k: usize,
    pub theta: usize,
    #[serde(rename = "L")]
    pub l: u64,
    #[serde(rename = "D")]
    pub d: u64,
    pub omega: u64,
    pub rate: [u64; 2],
    pub servers: Vec<Vec<Vec<[usize; 2]>>>,
}

const FIGURES: [&str; 4] = [
    include_str!("../golden/example1.json"),
    include_str!("../golden/example1_theta2.json"),
    include_str!("../golden/example2.json"),
    include_str!("../golden/example3.json"),
];

/// All stored tables, the three primary examples first.
pub fn figures() -> Vec<GoldenFigure> {
    let mut figs: Vec<GoldenFigure> =
        FIGURES.iter().map(|s| serde_json::from_str(s).expect("bundled golden figure parses")).collect();
    figs.sort_by_key(|f| (f.name.contains("theta"), f.name.clone()));
    figs
}

/// The plan's sums for every server, each sum as sorted `[record, column]`
/// pairs, each server's list sorted.
pub fn plan_table(plan: &QueryPlan) -> Vec<Vec<Vec<[usize; 2]>>> {
    plan.servers
        .iter()
        .map(|sums| {
            let mut rows: Vec<Vec<[usize; 2]>> =
                sums.iter().map(|s| s.terms.iter().map(|t| [t.record, t.column]).collect()).collect();
            rows.sort();
            rows
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GoldenMatch {
    pub name: String,
    pub matched: bool,
    pub mismatches: Vec<String>,
}

/// Builds the identity-permutation plan for `fig` and compares it sum for
/// sum, plus the headline counts.
pub fn compare(fig: &GoldenFigure) -> Result<GoldenMatch> {
    let p = derive_params(fig.m, fig.n, fig.k)?;
    let plan = build_plan(fig.theta, &p, Permutations::identity(fig.m, p.ltilde as usize))?;
    let got = plan_table(&plan);
    let mut mismatches = Vec::new();
    if got.len() != fig.servers.len() {
        mismatches.push(format!("{} servers, expected {}", got.len(), fig.servers.len()));
    }
    for (i, (g, want)) in got.iter().zip(&fig.servers).enumerate() {
        let mut want = want.clone();
        for s in &mut want {
            s.sort();
        }
        want.sort();
        if *g != want {
            mismatches.push(format!("server {}: got {g:?}, expected {want:?}", i + 1));
        }
    }
    let observed_access: usize = plan.servers.iter().flatten().map(|s| s.terms.len()).sum();
    let checks = [
        ("L", p.sub_packetization, fig.l),
        ("D", plan.total_sums() as u64, fig.d),
        ("omega", observed_access as u64, fig.omega),
        ("rate numerator", *p.capacity.numer(), fig.rate[0]),
        ("rate denominator", *p.capacity.denom(), fig.rate[1]),
    ];
    for (what, got, want) in checks {
        if got != want {
            mismatches.push(format!("{what}: got {got}, expected {want}"));
        }
    }
    Ok(GoldenMatch { name: fig.name.clone(), matched: mismatches.is_empty(), mismatches })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_figure_matches() {
        let figs = figures();
        assert_eq!(figs.len(), 4);
        for f in &figs {
            let r = compare(f).unwrap();
            assert!(r.matched, "{}: {:#?}", r.name, r.mismatches);
        }
    }

    #[test]
    fn corrupted_figure_is_detected() {
        let mut f = figures().into_iter().find(|f| f.name == "example-3").unwrap();
        f.servers[0][0][0] = [1, 4];
        assert!(!compare(&f).unwrap().matched);
    }
}
