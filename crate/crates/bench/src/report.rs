//! Aggregation of per-seed records into the summary tables.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use distrobust_core::attacks::AttackKind;
use distrobust_core::ensemble::VotingScheme;
use distrobust_core::metrics::{EvaluationRecord, ParetoPoint};
use distrobust_core::stats::mean_ci95;

/// Mean and 95% CI half-width (Student t, df = n−1) of `values`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeanCi {
    pub mean: f64,
    pub half_width: f64,
}

impl MeanCi {
    pub fn of(values: &[f64]) -> Self {
        let (mean, half_width) = mean_ci95(values);
        Self { mean, half_width }
    }
}

fn fmt4(v: f64) -> String {
    if v.is_nan() {
        "NaN".into()
    } else {
        format!("{:.4}", v)
    }
}

/// Rows keyed by `(scenario, N)` in first-seen order.
fn groups(records: &[EvaluationRecord]) -> Vec<(String, usize)> {
    let mut keys: Vec<(String, usize)> = Vec::new();
    for r in records {
        let k = (r.scenario.clone(), r.nodes);
        if !keys.contains(&k) {
            keys.push(k);
        }
    }
    keys
}

fn attacks_of(records: &[EvaluationRecord]) -> Vec<AttackKind> {
    let mut a: Vec<AttackKind> = records.iter().filter_map(|r| r.attack).collect();
    a.sort_unstable();
    a.dedup();
    a
}

/// Per-seed CA and per-attack RA for one `(scenario, N, voting)` cell.
struct Cell {
    ca: BTreeMap<u64, f64>,
    ra: BTreeMap<(AttackKind, u64), f64>,
}

fn cell(records: &[EvaluationRecord], scenario: &str, nodes: usize, voting: VotingScheme) -> Cell {
    let mut c = Cell {
        ca: BTreeMap::new(),
        ra: BTreeMap::new(),
    };
    for r in records.iter().filter(|r| r.scenario == scenario && r.nodes == nodes && r.voting == voting) {
        match r.attack {
            None => {
                c.ca.insert(r.seed, r.ca);
            }
            Some(a) => {
                c.ra.insert((a, r.seed), r.ra);
            }
        }
    }
    c
}

impl Cell {
    fn seeds(&self) -> Vec<u64> {
        self.ca.keys().copied().collect()
    }

    fn ra_for(&self, attack: AttackKind) -> Vec<f64> {
        self.ra.iter().filter(|((a, _), _)| *a == attack).map(|(_, v)| *v).collect()
    }

    /// Per seed, RA averaged over `attacks`.
    fn mean_ra(&self, attacks: &[AttackKind]) -> Vec<f64> {
        self.seeds()
            .iter()
            .filter_map(|s| {
                let v: Vec<f64> = attacks.iter().filter_map(|a| self.ra.get(&(*a, *s)).copied()).collect();
                (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
            })
            .collect()
    }
}

/// Scenario × N rows under average voting: CA, RA per attack and RA mean
/// over attacks, each as mean and CI half-width across seeds.
pub fn table3(records: &[EvaluationRecord]) -> String {
    let attacks = attacks_of(records);
    let mut s = String::from("scenario,N,CA,CA_hw");
    for a in &attacks {
        let _ = write!(s, ",RA_{0},RA_{0}_hw", a.name());
    }
    s.push_str(",RA_mean,RA_mean_hw,seeds\n");
    for (scenario, n) in groups(records) {
        let c = cell(records, &scenario, n, VotingScheme::Average);
        let ca = MeanCi::of(&c.ca.values().copied().collect::<Vec<_>>());
        let _ = write!(s, "{},{},{},{}", scenario, n, fmt4(ca.mean), fmt4(ca.half_width));
        for a in &attacks {
            let m = MeanCi::of(&c.ra_for(*a));
            let _ = write!(s, ",{},{}", fmt4(m.mean), fmt4(m.half_width));
        }
        let m = MeanCi::of(&c.mean_ra(&attacks));
        let _ = writeln!(s, ",{},{},{}", fmt4(m.mean), fmt4(m.half_width), c.ca.len());
    }
    s
}

/// CA and mean RA for every voting scheme.
pub fn voting_table(records: &[EvaluationRecord]) -> String {
    let attacks = attacks_of(records);
    let mut s = String::from("scenario,N,voting,CA,CA_hw,RA_mean,RA_mean_hw\n");
    for (scenario, n) in groups(records) {
        for v in VotingScheme::ALL {
            let c = cell(records, &scenario, n, v);
            let ca = MeanCi::of(&c.ca.values().copied().collect::<Vec<_>>());
            let ra = MeanCi::of(&c.mean_ra(&attacks));
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{}",
                scenario,
                n,
                v.name(),
                fmt4(ca.mean),
                fmt4(ca.half_width),
                fmt4(ra.mean),
                fmt4(ra.half_width)
            );
        }
    }
    s
}

/// One point per `(scenario, N)` under average voting: mean CA against RA
/// averaged over attacks and seeds.
pub fn pareto_points(records: &[EvaluationRecord]) -> Vec<ParetoPoint> {
    let attacks = attacks_of(records);
    groups(records)
        .into_iter()
        .map(|(scenario, n)| {
            let c = cell(records, &scenario, n, VotingScheme::Average);
            let ca = MeanCi::of(&c.ca.values().copied().collect::<Vec<_>>()).mean;
            let ra = if attacks.is_empty() {
                1.0
            } else {
                MeanCi::of(&c.mean_ra(&attacks)).mean
            };
            ParetoPoint::new(format!("{} N={}", scenario, n), ca, ra)
        })
        .collect()
}

/// `scenario,N,seed,S` rows merged into mean ± half-width per `(scenario, N)`.
pub fn similarity_table(rows: &[(String, usize, u64, f64)]) -> String {
    let mut keys: Vec<(String, usize)> = Vec::new();
    for (s, n, _, _) in rows {
        if !keys.contains(&(s.clone(), *n)) {
            keys.push((s.clone(), *n));
        }
    }
    let mut out = String::from("scenario,N,S,S_hw,seeds\n");
    for (s, n) in keys {
        let v: Vec<f64> = rows.iter().filter(|r| r.0 == s && r.1 == n).map(|r| r.3).collect();
        let m = MeanCi::of(&v);
        let _ = writeln!(out, "{},{},{},{},{}", s, n, fmt4(m.mean), fmt4(m.half_width), v.len());
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(scenario: &str, n: usize, seed: u64, voting: VotingScheme, attack: Option<AttackKind>, ca: usize, succ: usize) -> EvaluationRecord {
        EvaluationRecord::from_counts(scenario.into(), n, seed, voting, attack, 100, ca, succ).unwrap()
    }

    fn records() -> Vec<EvaluationRecord> {
        let mut v = Vec::new();
        for seed in 0..3u64 {
            for voting in VotingScheme::ALL {
                v.push(rec("D_AOS", 7, seed, voting, None, 80 + seed as usize, 0));
                v.push(rec("D_AOS", 7, seed, voting, Some(AttackKind::Sam), 80, 10 + seed as usize));
                v.push(rec("D_AOS", 7, seed, voting, Some(AttackKind::Cw), 80, 20));
            }
        }
        v
    }

    #[test]
    fn table3_means_and_half_widths() {
        let t = table3(&records());
        let mut lines = t.lines();
        assert_eq!(lines.next().unwrap(), "scenario,N,CA,CA_hw,RA_sam,RA_sam_hw,RA_cw,RA_cw_hw,RA_mean,RA_mean_hw,seeds");
        let row: Vec<&str> = lines.next().unwrap().split(',').collect();
        assert_eq!(row[..3], ["D_AOS", "7", "0.8100"]);
        // CA 0.80, 0.81, 0.82: sd 0.01, t(0.975, 2) = 4.3027.
        assert_eq!(row[3], format!("{:.4}", 4.302652729911275 * 0.01 / 3f64.sqrt()));
        assert_eq!(row[4], "0.8900");
        assert_eq!(row[6], "0.8000");
        assert_eq!(row[7], "0.0000");
        assert_eq!(row[8], "0.8450");
        assert_eq!(row[10], "3");
    }

    #[test]
    fn clean_only_records_give_perfect_robustness_points() {
        let v: Vec<EvaluationRecord> = records().into_iter().filter(|r| r.attack.is_none()).collect();
        let p = pareto_points(&v);
        assert_eq!(p.len(), 1);
        assert_eq!(p[0].ra, 1.0);
        assert!(table3(&v).starts_with("scenario,N,CA,CA_hw,RA_mean"));
    }

    #[test]
    fn voting_table_has_a_row_per_scheme() {
        assert_eq!(voting_table(&records()).lines().count(), 4);
    }

    #[test]
    fn similarity_rows_merge_by_scenario() {
        let rows = vec![("ENS".to_string(), 3, 0, 0.2), ("ENS".to_string(), 3, 1, 0.4), ("IT".to_string(), 3, 0, 0.1)];
        let t = similarity_table(&rows);
        assert!(t.contains("ENS,3,0.3000,"));
        assert!(t.contains("IT,3,0.1000,0.0000,1"));
    }
}
