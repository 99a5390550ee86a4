use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Scores laid out model-major: `scores[m][e]` is model `m` on entry `e`,
/// `None` when that model has no score for the entry.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreTable {
    pub models: Vec<String>,
    pub scores: Vec<Vec<Option<f64>>>,
}

/// Pairwise outcome percentages. `wins[a][b]` is the share of shared entries
/// where `a` scored strictly higher than `b`; `None` on the diagonal and for
/// pairs without a shared entry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WinRate {
    pub models: Vec<String>,
    pub wins: Vec<Vec<Option<f64>>>,
    pub ties: Vec<Vec<Option<f64>>>,
    pub compared: Vec<Vec<usize>>,
}

impl WinRate {
    pub fn index(&self, model: &str) -> Option<usize> {
        self.models.iter().position(|m| m == model)
    }

    pub fn wins_of(&self, a: &str, b: &str) -> Option<f64> {
        self.wins[self.index(a)?][self.index(b)?]
    }
}

pub fn win_rate(table: &ScoreTable) -> Result<WinRate> {
    let n = table.models.len();
    if n < 2 {
        return Err(Error::InsufficientModels(n));
    }
    let mut wins = vec![vec![None; n]; n];
    let mut ties = vec![vec![None; n]; n];
    let mut compared = vec![vec![0; n]; n];
    for a in 0..n {
        for b in 0..n {
            if a == b {
                continue;
            }
            let (mut w, mut t, mut c) = (0usize, 0usize, 0usize);
            for (sa, sb) in table.scores[a].iter().zip(&table.scores[b]) {
                if let (Some(x), Some(y)) = (sa, sb) {
                    c += 1;
                    if x > y {
                        w += 1;
                    } else if x == y {
                        t += 1;
                    }
                }
            }
            compared[a][b] = c;
            if c > 0 {
                wins[a][b] = Some(100.0 * w as f64 / c as f64);
                ties[a][b] = Some(100.0 * t as f64 / c as f64);
            }
        }
    }
    Ok(WinRate {
        models: table.models.clone(),
        wins,
        ties,
        compared,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table(rows: &[&[Option<f64>]]) -> ScoreTable {
        ScoreTable {
            models: (0..rows.len()).map(|i| format!("m{i}")).collect(),
            scores: rows.iter().map(|r| r.to_vec()).collect(),
        }
    }

    #[test]
    fn two_wins_one_tie() {
        let w = win_rate(&table(&[
            &[Some(3.0), Some(2.0), Some(1.0)],
            &[Some(1.0), Some(1.0), Some(1.0)],
        ]))
        .unwrap();
        assert!((w.wins[0][1].unwrap() - 200.0 / 3.0).abs() < 1e-12);
        assert!((w.ties[0][1].unwrap() - 100.0 / 3.0).abs() < 1e-12);
        assert_eq!(w.wins[1][0], Some(0.0));
    }

    #[test]
    fn identical_scores_all_tie() {
        let w = win_rate(&table(&[&[Some(0.5), Some(0.1)], &[Some(0.5), Some(0.1)]])).unwrap();
        assert_eq!((w.wins[0][1], w.ties[0][1]), (Some(0.0), Some(100.0)));
    }

    #[test]
    fn single_shared_entry() {
        let w = win_rate(&table(&[&[Some(2.0), None], &[Some(1.0), Some(5.0)]])).unwrap();
        assert_eq!(w.wins[0][1], Some(100.0));
        assert_eq!(w.compared[0][1], 1);
    }

    #[test]
    fn pairs_without_overlap_have_no_rate() {
        let w = win_rate(&table(&[&[Some(2.0), None], &[None, Some(5.0)]])).unwrap();
        assert_eq!((w.wins[0][1], w.compared[0][1]), (None, 0));
    }

    #[test]
    fn needs_two_models() {
        assert!(matches!(
            win_rate(&table(&[&[Some(1.0)]])),
            Err(Error::InsufficientModels(1))
        ));
    }
}
