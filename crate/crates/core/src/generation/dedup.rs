use serde::{Deserialize, Serialize};

use super::{GeneratedStatement, Role};
use crate::embedding::{cosine, embed_batch, BatchOptions, EmbeddingCache, EmbeddingProvider, EmbeddingVector};
use crate::error::{Error, Result};

pub const DEFAULT_DEDUP_THRESHOLD: f64 = 0.95;

// Absorbs rounding so that identical texts (cosine 1 up to a few ulps)
// still meet a threshold of exactly 1.0.
const EPS: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DuplicateGroup {
    /// The earliest statement of the group; it is kept.
    pub representative: String,
    pub members: Vec<String>,
    /// Highest cosine between each member and any earlier group member.
    pub similarities: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DedupOutcome {
    pub threshold: f64,
    pub kept: Vec<GeneratedStatement>,
    pub groups: Vec<DuplicateGroup>,
}

impl DedupOutcome {
    pub fn duplicate_ids(&self) -> Vec<&str> {
        self.groups
            .iter()
            .flat_map(|g| g.members.iter().map(String::as_str))
            .collect()
    }
}

fn find(parent: &mut [usize], mut i: usize) -> usize {
    while parent[i] != i {
        parent[i] = parent[parent[i]];
        i = parent[i];
    }
    i
}

/// Groups vectors whose cosine reaches `threshold`, following chains of
/// similar items, and keeps the earliest item of each group.
///
/// Returns the kept indices in input order and, for every group with more
/// than one member, `(representative, [(member, similarity)])`. Because
/// groups are the connected components of the "cosine ≥ threshold" graph,
/// lowering the threshold can only merge groups, never split them.
pub fn dedup_by_vectors(
    vectors: &[EmbeddingVector],
    threshold: f64,
) -> Result<(Vec<usize>, Vec<(usize, Vec<(usize, f64)>)>)> {
    if !(threshold > 0.0 && threshold <= 1.0) {
        return Err(Error::Config(format!("dedup threshold {threshold} outside (0, 1]")));
    }
    let n = vectors.len();
    let mut parent: Vec<usize> = (0..n).collect();
    let mut best = vec![f64::NEG_INFINITY; n];
    for j in 0..n {
        for i in 0..j {
            let sim = match cosine(&vectors[i], &vectors[j]) {
                Ok(s) => s,
                Err(Error::ZeroVector) => continue,
                Err(e) => return Err(e),
            };
            if sim + EPS >= threshold {
                best[j] = best[j].max(sim);
                let (a, b) = (find(&mut parent, i), find(&mut parent, j));
                if a != b {
                    // Roots are always the smallest index of their component.
                    parent[a.max(b)] = a.min(b);
                }
            }
        }
    }
    let mut kept = Vec::new();
    let mut members: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
    for i in 0..n {
        let root = find(&mut parent, i);
        if root == i {
            kept.push(i);
        } else {
            members[root].push((i, best[i]));
        }
    }
    let groups = members
        .into_iter()
        .enumerate()
        .filter(|(_, m)| !m.is_empty())
        .collect();
    Ok((kept, groups))
}

/// Groups near-identical statements of the same role. Considerations are
/// never compared with policy options. Output order follows the input.
pub fn dedup_statements(
    statements: &[GeneratedStatement],
    provider: &dyn EmbeddingProvider,
    cache: &EmbeddingCache,
    options: &BatchOptions,
    threshold: f64,
) -> Result<DedupOutcome> {
    if !(threshold > 0.0 && threshold <= 1.0) {
        return Err(Error::Config(format!("dedup threshold {threshold} outside (0, 1]")));
    }
    let texts: Vec<String> = statements.iter().map(|s| s.text.clone()).collect();
    let vectors = embed_batch(&texts, provider, cache, options)?;
    let mut keep = vec![false; statements.len()];
    let mut groups = Vec::new();
    for role in [Role::Consideration, Role::Policy] {
        let idx: Vec<usize> = (0..statements.len()).filter(|&i| statements[i].role == role).collect();
        let subset: Vec<EmbeddingVector> = idx.iter().map(|&i| vectors[i].clone()).collect();
        let (kept, found) = dedup_by_vectors(&subset, threshold)?;
        for k in kept {
            keep[idx[k]] = true;
        }
        for (rep, members) in found {
            groups.push((
                idx[rep],
                DuplicateGroup {
                    representative: statements[idx[rep]].id.clone(),
                    members: members.iter().map(|(m, _)| statements[idx[*m]].id.clone()).collect(),
                    similarities: members.iter().map(|(_, s)| *s).collect(),
                },
            ));
        }
    }
    groups.sort_by_key(|(rep, _)| *rep);
    Ok(DedupOutcome {
        threshold,
        kept: statements
            .iter()
            .zip(&keep)
            .filter(|(_, k)| **k)
            .map(|(s, _)| s.clone())
            .collect(),
        groups: groups.into_iter().map(|(_, g)| g).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Leaning;
    use crate::embedding::MockEmbedder;
    use proptest::prelude::*;

    fn stmt(id: &str, role: Role, text: &str) -> GeneratedStatement {
        GeneratedStatement {
            id: id.into(),
            role,
            text: text.into(),
            category: "General".into(),
            leaning: Leaning::Centrist,
            run_id: "run-01".into(),
            prompt_hash: "h".into(),
        }
    }

    fn run(statements: &[GeneratedStatement], threshold: f64) -> DedupOutcome {
        let emb = MockEmbedder::new(384);
        let cache = EmbeddingCache::in_memory("mock", "m", 384);
        dedup_statements(statements, &emb, &cache, &BatchOptions::default(), threshold).unwrap()
    }

    #[test]
    fn identical_texts_group_under_first() {
        let s = [
            stmt("a", Role::Consideration, "Premiums must stay affordable for families"),
            stmt("b", Role::Consideration, "Premiums must stay affordable for families"),
        ];
        let out = run(&s, 1.0);
        assert_eq!(out.kept.len(), 1);
        assert_eq!(out.groups[0].representative, "a");
        assert_eq!(out.groups[0].members, vec!["b"]);
    }

    #[test]
    fn roles_are_deduplicated_separately() {
        let s = [
            stmt("a", Role::Consideration, "Same words here"),
            stmt("b", Role::Policy, "Same words here"),
        ];
        assert_eq!(run(&s, 0.95).kept.len(), 2);
    }

    #[test]
    fn distinct_texts_survive() {
        let s = [
            stmt("a", Role::Consideration, "Hospitals in rural valleys need stable funding"),
            stmt("b", Role::Consideration, "Pharmaceutical prices should be negotiated nationally"),
            stmt("c", Role::Consideration, "Nursing staff shortages threaten patient safety"),
        ];
        let emb = MockEmbedder::new(384);
        let v: Vec<_> = s
            .iter()
            .map(|x| EmbeddingVector::from_f32(&emb.embed_one(&x.text)).unwrap())
            .collect();
        for i in 0..3 {
            for j in 0..i {
                assert!(cosine(&v[i], &v[j]).unwrap() < 0.5);
            }
        }
        assert_eq!(run(&s, 0.95).kept.len(), 3);
    }

    #[test]
    fn planted_paraphrase_is_grouped() {
        // One extra word among nineteen shared ones.
        let base = "the cantons should fund hospitals through a transparent formula that rewards quality care for every patient in each region of switzerland today";
        let para = format!("{base} again");
        let emb = MockEmbedder::new(384);
        let sim = cosine(
            &EmbeddingVector::from_f32(&emb.embed_one(base)).unwrap(),
            &EmbeddingVector::from_f32(&emb.embed_one(&para)).unwrap(),
        )
        .unwrap();
        assert!(sim >= 0.95 && sim < 1.0, "sim {sim}");
        let s = [stmt("a", Role::Policy, base), stmt("b", Role::Policy, &para)];
        let out = run(&s, 0.95);
        assert_eq!(out.duplicate_ids(), vec!["b"]);
        assert!((out.groups[0].similarities[0] - sim).abs() < 1e-12);
    }

    #[test]
    fn threshold_is_validated() {
        let v = [EmbeddingVector::new(vec![1.0]).unwrap()];
        assert!(dedup_by_vectors(&v, 0.0).is_err());
        assert!(dedup_by_vectors(&v, 1.5).is_err());
        assert!(dedup_by_vectors(&v, 1.0).is_ok());
    }

    proptest! {
        #[test]
        fn lowering_threshold_never_keeps_more(
            raw in prop::collection::vec(prop::collection::vec(-1.0f64..1.0, 3), 1..25),
            hi in 0.05f64..1.0,
            frac in 0.0f64..1.0,
        ) {
            let vectors: Vec<EmbeddingVector> = raw
                .into_iter()
                .map(|mut v| { v[0] += 3.0; EmbeddingVector::new(v).unwrap() })
                .collect();
            let lo = (hi * frac).max(1e-6);
            let (kept_hi, _) = dedup_by_vectors(&vectors, hi).unwrap();
            let (kept_lo, _) = dedup_by_vectors(&vectors, lo).unwrap();
            prop_assert!(kept_lo.len() <= kept_hi.len());
        }

        #[test]
        fn threshold_one_keeps_distinct_directions(n in 1usize..12) {
            let vectors: Vec<EmbeddingVector> = (0..n)
                .map(|i| {
                    let mut v = vec![0.0; 12];
                    v[i] = 1.0;
                    EmbeddingVector::new(v).unwrap()
                })
                .collect();
            prop_assert_eq!(dedup_by_vectors(&vectors, 1.0).unwrap().0.len(), n);
        }
    }
}
