//! Rank metrics, cost matrices, the cost-weighted binary-error bound and
//! per-split consistency audits.

use std::path::Path;

use serde::Serialize;

use crate::data::Dataset;
use crate::error::{CoralError, Result};
use crate::model::OrdinalModel;
use crate::ordinal::{
    count_inconsistencies, count_inverted_pairs, decode_rank, extend_label, BinaryDecisions,
    RankIndex, RankSpec,
};
use crate::par;

fn check_pairs(truth: &[RankIndex], pred: &[RankIndex]) -> Result<()> {
    if truth.is_empty() {
        return Err(CoralError::Domain("no predictions to score".into()));
    }
    if truth.len() != pred.len() {
        return Err(CoralError::Dimension {
            what: "predictions",
            expected: truth.len(),
            actual: pred.len(),
        });
    }
    Ok(())
}

/// Mean absolute error between rank indices.
pub fn mae(truth: &[RankIndex], pred: &[RankIndex]) -> Result<f64> {
    check_pairs(truth, pred)?;
    let total: usize = truth.iter().zip(pred).map(|(a, b)| a.get().abs_diff(b.get())).sum();
    Ok(total as f64 / truth.len() as f64)
}

/// Root mean squared error between rank indices.
pub fn rmse(truth: &[RankIndex], pred: &[RankIndex]) -> Result<f64> {
    check_pairs(truth, pred)?;
    let total: usize = truth
        .iter()
        .zip(pred)
        .map(|(a, b)| a.get().abs_diff(b.get()).pow(2))
        .sum();
    Ok((total as f64 / truth.len() as f64).sqrt())
}

/// `C[y][k]`: the cost of predicting rank `k` when the truth is `y`, both
/// 1-based in the accessors.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CostMatrix {
    k: usize,
    /// Row-major, 0-based.
    entries: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct CostKind {
    pub classification: bool,
    pub absolute: bool,
    pub v_shaped: bool,
    pub convex_rows: bool,
}

impl CostMatrix {
    pub fn new(rows: Vec<Vec<f64>>) -> Result<Self> {
        let k = rows.len();
        if k < 2 {
            return Err(CoralError::Domain(format!("cost matrix needs K >= 2, got {k}")));
        }
        let mut entries = Vec::with_capacity(k * k);
        for (y, row) in rows.iter().enumerate() {
            if row.len() != k {
                return Err(CoralError::Domain(format!(
                    "cost matrix row {} has {} entries, expected {k}",
                    y + 1,
                    row.len()
                )));
            }
            for (j, &c) in row.iter().enumerate() {
                let ok = if y == j { c == 0.0 } else { c.is_finite() && c > 0.0 };
                if !ok {
                    return Err(CoralError::Domain(format!(
                        "cost C[{}][{}] = {c} violates zero diagonal / positive off-diagonal",
                        y + 1,
                        j + 1
                    )));
                }
            }
            entries.extend_from_slice(row);
        }
        Ok(Self { k, entries })
    }

    /// `C[y][k] = 1{y != k}`.
    pub fn classification(k: usize) -> Result<Self> {
        Self::new(
            (0..k)
                .map(|y| (0..k).map(|j| if y == j { 0.0 } else { 1.0 }).collect())
                .collect(),
        )
    }

    /// `C[y][k] = |y - k|`.
    pub fn absolute(k: usize) -> Result<Self> {
        Self::new(
            (0..k)
                .map(|y| (0..k).map(|j| y.abs_diff(j) as f64).collect())
                .collect(),
        )
    }

    /// Named preset (`classification`, `absolute`) or a path to a K x K
    /// grid of numbers separated by whitespace or commas.
    pub fn from_preset_or_path(name: &str, k: usize) -> Result<Self> {
        let m = match name {
            "classification" => Self::classification(k)?,
            "absolute" => Self::absolute(k)?,
            path => Self::load(Path::new(path))?,
        };
        if m.k != k {
            return Err(CoralError::Domain(format!(
                "cost matrix is {0}x{0}, model has {k} ranks",
                m.k
            )));
        }
        Ok(m)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let rows = text
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'))
            .map(|l| {
                l.split(|c: char| c == ',' || c.is_whitespace())
                    .filter(|s| !s.is_empty())
                    .map(|s| {
                        s.parse::<f64>()
                            .map_err(|_| CoralError::Domain(format!("bad cost entry {s:?}")))
                    })
                    .collect::<Result<Vec<f64>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(rows)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text).map_err(|e| CoralError::Parse {
            path: path.to_path_buf(),
            line: 0,
            message: e.to_string(),
        })
    }

    pub fn num_ranks(&self) -> usize {
        self.k
    }

    pub fn get(&self, y: RankIndex, k: RankIndex) -> f64 {
        self.entries[y.zero_based() * self.k + k.zero_based()]
    }

    fn row(&self, y: usize) -> &[f64] {
        &self.entries[y * self.k..(y + 1) * self.k]
    }

    /// Structural predicates, all non-strict.
    pub fn kind(&self) -> CostKind {
        let k = self.k;
        let mut kind = CostKind {
            classification: true,
            absolute: true,
            v_shaped: true,
            convex_rows: true,
        };
        for y in 0..k {
            let row = self.row(y);
            for (j, &c) in row.iter().enumerate() {
                kind.classification &= c == if y == j { 0.0 } else { 1.0 };
                kind.absolute &= c == y.abs_diff(j) as f64;
            }
            // non-increasing up to the true rank, non-decreasing after it
            kind.v_shaped &= row[..=y].windows(2).all(|w| w[0] >= w[1])
                && row[y..].windows(2).all(|w| w[0] <= w[1]);
            kind.convex_rows &= row.windows(3).all(|w| w[2] - w[1] >= w[1] - w[0]);
        }
        kind
    }
}

/// Empirical sides of the cost bound: the mean decoded-rank cost and the
/// mean cost-difference-weighted count of binary task errors.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BoundCheck {
    pub lhs: f64,
    pub rhs: f64,
    /// Whether every decision vector was rank-monotone, the condition under
    /// which `lhs <= rhs` is guaranteed.
    pub all_monotone: bool,
}

impl BoundCheck {
    pub fn holds(&self, slack: f64) -> bool {
        self.lhs <= self.rhs + slack
    }
}

pub fn bound_check(
    decisions: &[BinaryDecisions],
    truths: &[RankIndex],
    cost: &CostMatrix,
) -> Result<BoundCheck> {
    if decisions.is_empty() {
        return Err(CoralError::Domain("no decisions to check".into()));
    }
    if decisions.len() != truths.len() {
        return Err(CoralError::Dimension {
            what: "truth labels",
            expected: decisions.len(),
            actual: truths.len(),
        });
    }
    let spec = RankSpec::numbered(cost.num_ranks())?;
    let mut lhs = 0.0;
    let mut rhs = 0.0;
    let mut all_monotone = true;
    for (f, &y) in decisions.iter().zip(truths) {
        if f.len() != spec.num_tasks() {
            return Err(CoralError::Dimension {
                what: "decision vector",
                expected: spec.num_tasks(),
                actual: f.len(),
            });
        }
        let target = extend_label(y, &spec)?;
        let row = cost.row(y.zero_based());
        lhs += cost.get(y, decode_rank(f));
        rhs += f
            .bits()
            .iter()
            .zip(target.bits())
            .enumerate()
            .filter(|(_, (a, b))| a != b)
            .map(|(k, _)| (row[k] - row[k + 1]).abs())
            .sum::<f64>();
        all_monotone &= f.is_rank_monotone();
    }
    let n = decisions.len() as f64;
    Ok(BoundCheck {
        lhs: lhs / n,
        rhs: rhs / n,
        all_monotone,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InconsistencySummary {
    /// Mean adjacent violations per example.
    pub mean_all: f64,
    /// `None` when no prediction was exactly right.
    pub mean_correct: Option<f64>,
    /// `None` when every prediction was exactly right.
    pub mean_incorrect: Option<f64>,
    pub mean_inverted_pairs: f64,
    pub n_correct: usize,
    pub n_incorrect: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NamedBound {
    pub cost: String,
    pub lhs: f64,
    pub rhs: f64,
    pub all_monotone: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    pub n: usize,
    pub mae: f64,
    pub rmse: f64,
    /// Absent for heads without binary tasks.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub inconsistency: Option<InconsistencySummary>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub bounds: Vec<NamedBound>,
}

/// Runs `model` over `data` and collects rank errors, inconsistency
/// statistics split by exact correctness, and the bound for each cost matrix.
pub fn audit_split(
    model: &OrdinalModel,
    data: &Dataset,
    costs: &[(String, CostMatrix)],
) -> Result<EvalReport> {
    let preds = par::map_indices(data.len(), |i| model.predict(data.row(i)))
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    let truth = data.labels();
    let ranks: Vec<RankIndex> = preds.iter().map(|p| p.rank).collect();
    let mut report = EvalReport {
        n: data.len(),
        mae: mae(truth, &ranks)?,
        rmse: rmse(truth, &ranks)?,
        inconsistency: None,
        bounds: Vec::new(),
    };
    if !model.head_kind().has_binary_tasks() {
        return Ok(report);
    }
    let decisions: Vec<BinaryDecisions> = preds
        .into_iter()
        .map(|p| p.decisions.expect("binary-task head"))
        .collect();

    let (mut all, mut inv) = (0usize, 0usize);
    let (mut correct, mut n_correct, mut wrong, mut n_wrong) = (0usize, 0usize, 0usize, 0usize);
    for ((f, q), y) in decisions.iter().zip(&ranks).zip(truth) {
        let c = count_inconsistencies(f);
        all += c;
        inv += count_inverted_pairs(f);
        if q == y {
            correct += c;
            n_correct += 1;
        } else {
            wrong += c;
            n_wrong += 1;
        }
    }
    let mean = |s: usize, n: usize| (n > 0).then(|| s as f64 / n as f64);
    report.inconsistency = Some(InconsistencySummary {
        mean_all: all as f64 / data.len() as f64,
        mean_correct: mean(correct, n_correct),
        mean_incorrect: mean(wrong, n_wrong),
        mean_inverted_pairs: inv as f64 / data.len() as f64,
        n_correct,
        n_incorrect: n_wrong,
    });
    for (name, cost) in costs {
        let b = bound_check(&decisions, truth, cost)?;
        report.bounds.push(NamedBound {
            cost: name.clone(),
            lhs: b.lhs,
            rhs: b.rhs,
            all_monotone: b.all_monotone,
        });
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Architecture, HeadKind};
    use proptest::prelude::*;

    fn r(v: &[usize]) -> Vec<RankIndex> {
        v.iter().map(|&q| RankIndex::from_raw(q)).collect()
    }

    #[test]
    fn mae_rmse_examples() {
        assert_eq!(mae(&r(&[1, 2, 3]), &r(&[1, 2, 3])).unwrap(), 0.0);
        assert_eq!(rmse(&r(&[1, 2, 3]), &r(&[1, 2, 3])).unwrap(), 0.0);
        assert_eq!(mae(&r(&[1, 2, 3]), &r(&[1, 3, 5])).unwrap(), 1.0);
        let e = rmse(&r(&[1, 2, 3]), &r(&[1, 3, 5])).unwrap();
        assert!((e - (5.0f64 / 3.0).sqrt()).abs() < 1e-15);
        assert!((e - 1.29099).abs() < 1e-5);
        assert!(mae(&r(&[1]), &r(&[1, 2])).is_err());
        assert!(rmse(&[], &[]).is_err());
    }

    #[test]
    fn cost_kind_examples() {
        let abs = CostMatrix::absolute(4).unwrap().kind();
        assert!(abs.absolute && abs.v_shaped && abs.convex_rows && !abs.classification);
        let cls = CostMatrix::classification(3).unwrap().kind();
        assert!(cls.classification && cls.v_shaped && !cls.convex_rows && !cls.absolute);
        let rows = vec![
            vec![0.0, 1.0, 3.0, 2.0],
            vec![1.0, 0.0, 1.0, 2.0],
            vec![2.0, 1.0, 0.0, 1.0],
            vec![3.0, 2.0, 1.0, 0.0],
        ];
        assert!(!CostMatrix::new(rows).unwrap().kind().v_shaped);
    }

    #[test]
    fn absolute_is_v_shaped_and_convex_for_small_k() {
        for k in 2..=16 {
            let kind = CostMatrix::absolute(k).unwrap().kind();
            assert!(kind.v_shaped && kind.convex_rows, "K={k}");
        }
    }

    #[test]
    fn cost_matrix_validation_and_parsing() {
        assert!(CostMatrix::new(vec![vec![0.0, 1.0], vec![0.0, 0.0]]).is_err());
        assert!(CostMatrix::new(vec![vec![1.0, 1.0], vec![1.0, 0.0]]).is_err());
        assert!(CostMatrix::new(vec![vec![0.0, 1.0]]).is_err());
        let m = CostMatrix::parse("# grid\n0 1 2\n1,0,1\n2 1 0\n").unwrap();
        assert_eq!(m, CostMatrix::absolute(3).unwrap());
        assert!(CostMatrix::parse("0 x\n1 0").is_err());
        assert!(CostMatrix::from_preset_or_path("absolute", 3).is_ok());
        assert!(CostMatrix::from_preset_or_path("/no/such/cost.txt", 3).is_err());
    }

    fn monotone(q: usize, k: usize) -> BinaryDecisions {
        BinaryDecisions::from_bools((1..k).map(|j| q > j))
    }

    #[test]
    fn bound_perfect_classifier() {
        let c = CostMatrix::classification(4).unwrap();
        let truths = r(&[1, 2, 4, 3]);
        let f: Vec<_> = truths.iter().map(|q| monotone(q.get(), 4)).collect();
        let b = bound_check(&f, &truths, &c).unwrap();
        assert_eq!((b.lhs, b.rhs), (0.0, 0.0));
        assert!(b.all_monotone);
    }

    #[test]
    fn bound_off_by_two_under_classification_cost() {
        // truth 4, predicted 2: tasks 2 and 3 err; row 4 is [1, 1, 1, 0, 1], so
        // their weights are |1 - 1| = 0 and |1 - 0| = 1
        let c = CostMatrix::classification(5).unwrap();
        let b = bound_check(&[monotone(2, 5)], &r(&[4]), &c).unwrap();
        assert_eq!(b.lhs, 1.0);
        assert_eq!(b.rhs, 1.0);
        // truth 1, predicted 3: tasks 1 and 2 err with weights |0 - 1| and |1 - 1|
        let b = bound_check(&[monotone(3, 5)], &r(&[1]), &c).unwrap();
        assert_eq!((b.lhs, b.rhs), (1.0, 1.0));
    }

    /// Per-example enumeration: for every truth `s` and prediction `q`
    /// (K <= 8), cost equals the number of erring tasks under absolute cost.
    #[test]
    fn absolute_cost_equality_by_enumeration() {
        for k in 2..=8 {
            let c = CostMatrix::absolute(k).unwrap();
            for s in 1..=k {
                for q in 1..=k {
                    let b = bound_check(&[monotone(q, k)], &r(&[s]), &c).unwrap();
                    assert_eq!(b.lhs, q.abs_diff(s) as f64);
                    assert!((b.lhs - b.rhs).abs() <= 1e-12);
                }
            }
        }
    }

    #[test]
    fn inconsistent_decisions_are_flagged() {
        let c = CostMatrix::absolute(4).unwrap();
        let f = BinaryDecisions::new(vec![1, 0, 1]).unwrap();
        let b = bound_check(&[f], &r(&[4]), &c).unwrap();
        assert!(!b.all_monotone);
    }

    fn or_model_with_decisions() -> OrdinalModel {
        // one identity-ish body unit, g = x; task logits x, -x, x
        let arch = Architecture::new(1, vec![1], HeadKind::Or, 4).unwrap();
        OrdinalModel::from_params(arch, vec![1.0, 0.0, 1.0, -1.0, 1.0, 0.0, 0.0, 0.0]).unwrap()
    }

    #[test]
    fn audit_single_inconsistent_example() {
        let m = or_model_with_decisions();
        let spec = RankSpec::numbered(4).unwrap();
        let d = Dataset::new(vec![1.0], 1, vec![spec.rank(3).unwrap()], spec, "one").unwrap();
        let costs = vec![("absolute".to_string(), CostMatrix::absolute(4).unwrap())];
        let rep = audit_split(&m, &d, &costs).unwrap();
        let inc = rep.inconsistency.unwrap();
        assert_eq!(inc.mean_all, 1.0);
        // [1,0,1] decodes to rank 3, which is correct
        assert_eq!(inc.mean_correct, Some(1.0));
        assert_eq!(inc.mean_incorrect, None);
        assert!(!rep.bounds[0].all_monotone);
    }

    #[test]
    fn audit_ce_model_has_no_inconsistency_fields() {
        let arch = Architecture::new(1, vec![2], HeadKind::Ce, 3).unwrap();
        let m = OrdinalModel::new(arch, 0).unwrap();
        let spec = RankSpec::numbered(3).unwrap();
        let d = Dataset::new(vec![0.5, -0.5], 1, vec![spec.rank(1).unwrap(), spec.rank(3).unwrap()], spec, "two")
            .unwrap();
        let rep = audit_split(&m, &d, &[("absolute".into(), CostMatrix::absolute(3).unwrap())]).unwrap();
        assert!(rep.inconsistency.is_none() && rep.bounds.is_empty());
        assert!(rep.rmse >= rep.mae);
    }

    proptest! {
        #[test]
        fn rmse_at_least_mae(pairs in prop::collection::vec((1usize..10, 1usize..10), 1..50)) {
            let t: Vec<_> = pairs.iter().map(|p| RankIndex::from_raw(p.0)).collect();
            let p: Vec<_> = pairs.iter().map(|p| RankIndex::from_raw(p.1)).collect();
            prop_assert!(rmse(&t, &p).unwrap() >= mae(&t, &p).unwrap());
        }
    }
}
