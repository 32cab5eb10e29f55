//! Top-k colored prefix reporting: for a query prefix `p`, the `k` largest
//! colors over all strings starting with `p`, for a `k` fixed at build time.
//!
//! A set `S'_k` of trie nodes stores its list `c_k(v)`; every string is a
//! member. Any other node `v` is covered by the highest members below it,
//! its covering set `S_v`, and stores a gather plan: for each member the
//! number of its largest colors that belong to the answer. A query follows
//! the trie to the node where `p` ends, reads the plan and fetches the
//! planned list slots with scatter reads.
//!
//! Nodes are considered longest label first. A node joins `S'_k` when the
//! lists of its covering set hold more than twice as many entries as their
//! union, or when its plan would gather more than twice the answer size.
//! The second clause keeps the gather bound when the union is much larger
//! than `k`.

use std::collections::BTreeSet;

use crate::checks::{check, Check};
use crate::colored::normalize_corpus;
use crate::emsim::bits::bits_for;
use crate::emsim::{BitWriter, BlockId, Session, Store};
use crate::error::{Error, Result};
use crate::strindex::{rank_interval, write_trie, StringIndex, Trie};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct TopkIndex {
    pub index: StringIndex,
    pub k: usize,
}

/// Build-time measurements.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct TopkStats {
    /// Members of `S'_k` that are not strings.
    pub merged: usize,
    pub members: usize,
    /// `Σ |c_k(v)|` over `S'_k`.
    pub stored: usize,
    /// `Σ |c_k(x)|` over the strings.
    pub string_total: usize,
    pub plan_entries: usize,
    pub branching_nodes: usize,
}

impl TopkStats {
    pub fn space_ok(&self) -> bool {
        self.stored <= 2 * self.string_total
    }
}

/// Result of one query with its gather cost.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TopkAnswer {
    /// Ascending.
    pub colors: Vec<u64>,
    /// List slots fetched, duplicates included.
    pub gathered: usize,
}

fn top_k(set: BTreeSet<u64>, k: usize) -> Vec<u64> {
    let v: Vec<u64> = set.into_iter().collect();
    v[v.len().saturating_sub(k)..].to_vec()
}

/// Per-node outcome of the membership pass.
#[derive(Clone, Debug, Default)]
pub struct Membership {
    pub ck: Vec<Vec<u64>>,
    pub member: Vec<bool>,
    /// Covering set of each node (itself when it is a member).
    pub cover: Vec<Vec<usize>>,
}

/// Computes `c_k`, `S'_k` and covering sets for a trie whose string `r`
/// has colors `colors[r]` (ascending).
pub fn membership(trie: &Trie, colors: &[Vec<u64>], k: usize) -> Membership {
    let n = trie.nodes.len();
    let mut m = Membership {
        ck: vec![Vec::new(); n],
        member: vec![false; n],
        cover: vec![Vec::new(); n],
    };
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        trie.nodes[b]
            .depth
            .cmp(&trie.nodes[a].depth)
            .then_with(|| trie.label(a).cmp(trie.label(b)))
    });
    for v in order {
        let node = &trie.nodes[v];
        let mut union: BTreeSet<u64> = BTreeSet::new();
        if let Some(r) = node.terminal {
            union.extend(&colors[r]);
        }
        for &c in &node.children {
            union.extend(&m.ck[c]);
        }
        m.ck[v] = top_k(union, k);
        if node.terminal.is_some() {
            m.member[v] = true;
            m.cover[v] = vec![v];
            continue;
        }
        let cover: Vec<usize> = node
            .children
            .iter()
            .flat_map(|&c| m.cover[c].clone())
            .collect();
        let lists: usize = cover.iter().map(|&x| m.ck[x].len()).sum();
        let union: BTreeSet<u64> = cover
            .iter()
            .flat_map(|&x| m.ck[x].iter().copied())
            .collect();
        let floor = m.ck[v].first().copied().unwrap_or(u64::MAX);
        let gathered: usize = cover
            .iter()
            .map(|&x| m.ck[x].iter().filter(|&&c| c >= floor).count())
            .sum();
        m.member[v] = lists > 2 * union.len() || gathered > 2 * m.ck[v].len();
        m.cover[v] = if m.member[v] { vec![v] } else { cover };
    }
    m
}

/// Builds the index over a corpus of distinct strings.
pub fn build_topk(
    store: &mut Store,
    session: &mut Session,
    corpus: &[(Vec<u8>, Vec<u64>)],
    k: usize,
) -> Result<(TopkIndex, TopkStats)> {
    if k == 0 {
        return Err(Error::Config("k must be at least 1".into()));
    }
    let corpus = normalize_corpus(corpus)?;
    let strings: Vec<Vec<u8>> = corpus.iter().map(|e| e.0.clone()).collect();
    let colors: Vec<Vec<u64>> = corpus.into_iter().map(|e| e.1).collect();
    let trie = Trie::build(&strings)?;
    let m = membership(&trie, &colors, k);
    let cfg = store.config();
    let (bw, wb) = (cfg.block_words(), cfg.word_bits());
    if let Some(&c) = colors.iter().flatten().find(|&&c| c > cfg.word_mask()) {
        return Err(Error::WordOverflow {
            value: c,
            word_bits: wb,
        });
    }

    // All member lists, ascending, in one record.
    let mut words = Vec::new();
    let mut start = vec![0usize; trie.nodes.len()];
    for v in (0..trie.nodes.len()).filter(|&v| m.member[v]) {
        start[v] = words.len();
        words.extend_from_slice(&m.ck[v]);
    }
    let base = store.append_record(session, &words)?.0 as usize * bw;
    let mut stats = TopkStats {
        members: m.member.iter().filter(|&&b| b).count(),
        merged: (0..trie.nodes.len())
            .filter(|&v| m.member[v] && trie.nodes[v].terminal.is_none())
            .count(),
        stored: (0..trie.nodes.len())
            .filter(|&v| m.member[v])
            .map(|v| m.ck[v].len())
            .sum(),
        string_total: trie
            .nodes
            .iter()
            .enumerate()
            .filter(|(_, v)| v.terminal.is_some())
            .map(|(i, _)| m.ck[i].len())
            .sum(),
        branching_nodes: trie.nodes.len(),
        ..Default::default()
    };

    let count_bits = bits_for(k as u64).max(1);
    let mut plans = vec![0u64; trie.nodes.len()];
    for (v, plan) in plans.iter_mut().enumerate() {
        let floor = m.ck[v].first().copied().unwrap_or(u64::MAX);
        let entries: Vec<(u64, u64)> = m.cover[v]
            .iter()
            .filter_map(|&x| {
                let count = m.ck[x].iter().filter(|&&c| c >= floor).count();
                let end = base + start[x] + m.ck[x].len();
                (count > 0).then_some(((end - count) as u64, count as u64))
            })
            .collect();
        stats.plan_entries += entries.len();
        let mut w = BitWriter::new(wb);
        w.push(entries.len() as u64, 32);
        for (addr, count) in entries {
            if addr > cfg.word_mask() {
                return Err(Error::WordOverflow {
                    value: addr,
                    word_bits: wb,
                });
            }
            w.push(addr, wb);
            w.push(count, count_bits);
        }
        *plan = store.append_record(session, &w.finish())?.0;
    }
    let index = write_trie(store, session, &trie, &plans)?;
    Ok((TopkIndex { index, k }, stats))
}

impl TopkIndex {
    /// The `k` largest colors of strings starting with `p`, ascending.
    pub fn query(&self, store: &Store, session: &mut Session, p: &[u8]) -> Result<Vec<u64>> {
        Ok(self.query_detailed(store, session, p)?.colors)
    }

    pub fn query_detailed(
        &self,
        store: &Store,
        session: &mut Session,
        p: &[u8],
    ) -> Result<TopkAnswer> {
        let Some(hit) = rank_interval(store, session, &self.index, p)? else {
            return Ok(TopkAnswer {
                colors: Vec::new(),
                gathered: 0,
            });
        };
        let cfg = store.config();
        let (bw, wb) = (cfg.block_words(), cfg.word_bits());
        let count_bits = bits_for(self.k as u64).max(1);
        let plan = BlockId(hit.aux);
        let mut span = store.read_words(session, plan, 0, 32u32.div_ceil(wb) as usize)?;
        let len = span.bits_at(wb, 0).read(32) as usize;
        let bits = 32 + len as u64 * (wb + count_bits) as u64;
        span.ensure(store, session, plan, 0, bits.div_ceil(wb as u64) as usize)?;
        let mut r = span.bits_at(wb, 32);
        let mut slots: Vec<(BlockId, usize)> = Vec::new();
        for _ in 0..len {
            let addr = r.read(wb) as usize;
            let count = r.read(count_bits) as usize;
            slots.extend((addr..addr + count).map(|a| (BlockId((a / bw) as u64), a % bw)));
        }
        let mut got = Vec::with_capacity(slots.len());
        for chunk in slots.chunks(bw) {
            got.extend(store.scatter_read(session, chunk)?);
        }
        let set: BTreeSet<u64> = got.into_iter().collect();
        let colors = top_k(set, self.k);
        check(Check::GatherSlots, slots.len() <= 2 * colors.len(), || {
            format!("gathered {} slots for {} colors", slots.len(), colors.len())
        });
        Ok(TopkAnswer {
            colors,
            gathered: slots.len(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::checks;
    use crate::emsim::SimConfig;
    use crate::oracle::brute_topk;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn corpus_from(entries: &[(&str, &[u64])]) -> Vec<(Vec<u8>, Vec<u64>)> {
        entries
            .iter()
            .map(|(s, c)| (s.as_bytes().to_vec(), c.to_vec()))
            .collect()
    }

    fn random_corpus(rng: &mut ChaCha8Rng, n: usize, sigma: u64) -> Vec<(Vec<u8>, Vec<u64>)> {
        let mut seen = BTreeSet::new();
        (0..n)
            .filter_map(|_| {
                let s: Vec<u8> = (0..rng.gen_range(1..7))
                    .map(|_| b"abc"[rng.gen_range(0..3)])
                    .collect();
                let cs: Vec<u64> = (0..rng.gen_range(0..6))
                    .map(|_| rng.gen_range(1..=sigma))
                    .collect();
                seen.insert(s.clone()).then_some((s, cs))
            })
            .collect()
    }

    fn root_member(entries: &[(&str, &[u64])], k: usize) -> bool {
        let corpus = corpus_from(entries);
        let strings: Vec<Vec<u8>> = corpus.iter().map(|e| e.0.clone()).collect();
        let colors: Vec<Vec<u64>> = corpus.iter().map(|e| e.1.clone()).collect();
        let t = Trie::build(&strings).unwrap();
        membership(&t, &colors, k).member[0]
    }

    #[test]
    fn doubling_condition_examples() {
        // Two identical lists: 2L > 2L fails.
        assert!(!root_member(&[("a", &[1, 2, 3]), ("b", &[1, 2, 3])], 3));
        // Three identical lists: 3L > 2L holds.
        assert!(root_member(
            &[("a", &[1, 2, 3]), ("b", &[1, 2, 3]), ("c", &[1, 2, 3])],
            3
        ));
    }

    #[test]
    fn gather_clause_catches_repeated_top_colors() {
        // The lists hold 12 entries over 8 colors, but the top two colors
        // sit in three lists: six slots for a two-element answer.
        let e: &[(&str, &[u64])] = &[
            ("a", &[9, 10]),
            ("b", &[9, 10]),
            ("c", &[9, 10]),
            ("d", &[1, 2]),
            ("e", &[3, 4]),
            ("f", &[5, 6]),
        ];
        assert!(root_member(e, 2));
    }

    #[test]
    fn single_string_and_misses() {
        let mut st = Store::new(SimConfig::new(4, 32).unwrap());
        let (ix, stats) = build_topk(
            &mut st,
            &mut Session::new(),
            &corpus_from(&[("abc", &[4, 9, 2])]),
            2,
        )
        .unwrap();
        assert_eq!(stats.members, 1);
        assert_eq!(
            ix.query(&st, &mut Session::new(), b"ab").unwrap(),
            vec![4, 9]
        );
        assert_eq!(ix.query(&st, &mut Session::new(), b"").unwrap(), vec![4, 9]);
        assert!(ix.query(&st, &mut Session::new(), b"b").unwrap().is_empty());
        assert!(ix
            .query(&st, &mut Session::new(), b"abcd")
            .unwrap()
            .is_empty());
    }

    #[test]
    fn k_zero_rejected() {
        let mut st = Store::new(SimConfig::new(4, 32).unwrap());
        assert!(build_topk(&mut st, &mut Session::new(), &[], 0).is_err());
    }

    #[test]
    fn small_union_returned_whole() {
        let mut st = Store::new(SimConfig::new(4, 32).unwrap());
        let corpus = corpus_from(&[("a", &[3]), ("ab", &[1]), ("b", &[7])]);
        let (ix, _) = build_topk(&mut st, &mut Session::new(), &corpus, 10).unwrap();
        assert_eq!(
            ix.query(&st, &mut Session::new(), b"").unwrap(),
            vec![1, 3, 7]
        );
    }

    #[test]
    fn covers_are_minimal() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..40 {
            let corpus = normalize_corpus(&random_corpus(&mut rng, 25, 12)).unwrap();
            let strings: Vec<Vec<u8>> = corpus.iter().map(|e| e.0.clone()).collect();
            let colors: Vec<Vec<u64>> = corpus.iter().map(|e| e.1.clone()).collect();
            let t = Trie::build(&strings).unwrap();
            let m = membership(&t, &colors, 3);
            for v in 0..t.nodes.len() {
                let covered = |members: &[usize], s: &[u8]| {
                    members.iter().any(|&x| s.starts_with(t.label(x)))
                };
                let below: Vec<&Vec<u8>> = strings
                    .iter()
                    .filter(|s| s.starts_with(t.label(v)))
                    .collect();
                assert!(below.iter().all(|s| covered(&m.cover[v], s)));
                for drop in 0..m.cover[v].len() {
                    let mut rest = m.cover[v].clone();
                    rest.remove(drop);
                    assert!(
                        below.iter().any(|s| !covered(&rest, s)),
                        "node {v} cover not minimal"
                    );
                }
            }
        }
    }

    #[test]
    fn random_queries_match_oracle() {
        let before = checks::total_failures();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for bw in [4, 8, 16] {
            for k in [1, 2, 5, 16] {
                let corpus = random_corpus(&mut rng, 120, 40);
                let mut st = Store::new(SimConfig::new(bw, 32).unwrap());
                let (ix, stats) = build_topk(&mut st, &mut Session::new(), &corpus, k).unwrap();
                assert!(stats.space_ok(), "{stats:?}");
                for _ in 0..150 {
                    let p: Vec<u8> = (0..rng.gen_range(0..4))
                        .map(|_| b"abcd"[rng.gen_range(0..4)])
                        .collect();
                    let mut s = Session::new();
                    let ans = ix.query_detailed(&st, &mut s, &p).unwrap();
                    assert_eq!(
                        ans.colors,
                        brute_topk(&corpus, &p, k),
                        "B={bw} k={k} p={p:?}"
                    );
                    assert!(ans.gathered <= 2 * ans.colors.len());
                    assert!(
                        s.stats().scatter_ios as usize <= 1 + (2 * ans.colors.len()).div_ceil(bw)
                    );
                }
            }
        }
        assert_eq!(checks::total_failures(), before);
    }
}
