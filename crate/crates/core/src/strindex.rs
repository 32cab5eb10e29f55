//! Sorted string sets with prefix search: a compacted trie kept in memory
//! for construction, and a block-resident copy answering
//! [`rank_interval`] queries.
//!
//! Strings are byte strings ordered lexicographically as unsigned bytes.
//! Every trie node covers a contiguous range of ranks, so the strings with
//! prefix `p` are exactly the subtree below the point where `p` ends.

use crate::emsim::{BitWriter, BlockId, Session, Store};
use crate::error::{Error, Result};

/// A node of the compacted trie. `edge` is the label from the parent,
/// `depth` the string length at its lower end.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TrieNode {
    pub edge: Vec<u8>,
    pub depth: usize,
    /// 0-based rank range `lo..=hi` of the strings below.
    pub lo: usize,
    pub hi: usize,
    /// Ordered by first edge byte.
    pub children: Vec<usize>,
    /// Rank of the string ending exactly here.
    pub terminal: Option<usize>,
    pub parent: Option<usize>,
}

#[derive(Clone, Debug)]
pub struct Trie {
    pub nodes: Vec<TrieNode>,
    pub strings: Vec<Vec<u8>>,
}

fn lcp(a: &[u8], b: &[u8]) -> usize {
    a.iter().zip(b).take_while(|(x, y)| x == y).count()
}

impl Trie {
    /// Builds the trie of strictly increasing `strings`. Node 0 is the root
    /// when the set is non-empty.
    pub fn build(strings: &[Vec<u8>]) -> Result<Trie> {
        if strings.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::UnsortedKeys);
        }
        let mut t = Trie {
            nodes: Vec::new(),
            strings: strings.to_vec(),
        };
        if !strings.is_empty() {
            t.grow(0, strings.len(), 0, None);
        }
        Ok(t)
    }

    fn grow(&mut self, lo: usize, hi: usize, from: usize, parent: Option<usize>) -> usize {
        let depth = lcp(&self.strings[lo], &self.strings[hi - 1]);
        let id = self.nodes.len();
        let terminal = (self.strings[lo].len() == depth).then_some(lo);
        self.nodes.push(TrieNode {
            edge: self.strings[lo][from..depth].to_vec(),
            depth,
            lo,
            hi: hi - 1,
            children: Vec::new(),
            terminal,
            parent,
        });
        let mut i = lo + terminal.is_some() as usize;
        while i < hi {
            let b = self.strings[i][depth];
            let j = i + self.strings[i..hi].partition_point(|s| s[depth] == b);
            let c = self.grow(i, j, depth, Some(id));
            self.nodes[id].children.push(c);
            i = j;
        }
        id
    }

    /// The highest node whose path has `p` as a prefix, if any string does.
    pub fn locus(&self, p: &[u8]) -> Option<usize> {
        let mut v = 0;
        let mut at = 0;
        loop {
            let node = self.nodes.get(v)?;
            let m = lcp(&node.edge, &p[at..]);
            if at + m == p.len() {
                return Some(v);
            }
            if m < node.edge.len() {
                return None;
            }
            at += m;
            v = *node
                .children
                .iter()
                .find(|&&c| self.nodes[c].edge[0] == p[at])?;
        }
    }

    /// Full string spelled by the path to `v`.
    pub fn label(&self, v: usize) -> &[u8] {
        &self.strings[self.nodes[v].lo][..self.nodes[v].depth]
    }
}

/// The block-resident index.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct StringIndex {
    pub root: BlockId,
    pub len: usize,
}

const COUNT_BITS: u32 = 32;
const FANOUT_BITS: u32 = 9;
const HEADER_BITS: u32 = 3 * COUNT_BITS + FANOUT_BITS;

fn header_bits(word_bits: u32) -> u32 {
    HEADER_BITS + word_bits
}

/// Writes one record per trie node, children before parents.
pub fn build_string_index(
    store: &mut Store,
    session: &mut Session,
    strings: &[Vec<u8>],
) -> Result<StringIndex> {
    let trie = Trie::build(strings)?;
    write_trie(store, session, &trie, &[])
}

/// Writes `trie`; `aux[v]` (0 when missing) is stored with node `v` and
/// returned by searches ending there.
pub fn write_trie(
    store: &mut Store,
    session: &mut Session,
    trie: &Trie,
    aux: &[u64],
) -> Result<StringIndex> {
    let wb = store.config().word_bits();
    if trie.strings.len() as u64 >= 1 << COUNT_BITS {
        return Err(Error::Capacity {
            len: trie.strings.len(),
            cap: (1usize << COUNT_BITS) - 1,
        });
    }
    let mut locs = vec![BlockId(0); trie.nodes.len()];
    for (id, v) in trie.nodes.iter().enumerate().rev() {
        if v.edge.len() as u64 >= 1 << COUNT_BITS {
            return Err(Error::Config("string too long".into()));
        }
        let mut w = BitWriter::new(wb);
        w.push(v.edge.len() as u64, COUNT_BITS);
        w.push(v.lo as u64, COUNT_BITS);
        w.push(v.hi as u64, COUNT_BITS);
        w.push(v.children.len() as u64, FANOUT_BITS);
        w.push(aux.get(id).copied().unwrap_or(0), wb);
        for &b in &v.edge {
            w.push(b as u64, 8);
        }
        for &c in &v.children {
            w.push(trie.nodes[c].edge[0] as u64, 8);
            w.push(locs[c].0, wb);
        }
        locs[id] = store.append_record(session, &w.finish())?;
    }
    Ok(StringIndex {
        root: locs.first().copied().unwrap_or(BlockId(0)),
        len: trie.strings.len(),
    })
}

/// Ranks interval and shared prefix of the strings starting with `p`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PrefixMatch {
    /// 1-based, inclusive.
    pub lo: usize,
    pub hi: usize,
    pub lcp: Vec<u8>,
    /// Word stored with the node where the search ended.
    pub aux: u64,
}

/// Strings of the index having `p` as a prefix, or `None`.
pub fn rank_interval(
    store: &Store,
    session: &mut Session,
    index: &StringIndex,
    p: &[u8],
) -> Result<Option<PrefixMatch>> {
    if index.len == 0 {
        return Ok(None);
    }
    let wb = store.config().word_bits();
    let mut at = index.root;
    let mut matched = 0;
    let mut label = Vec::new();
    loop {
        let hb = header_bits(wb);
        let mut span = store.read_words(session, at, 0, hb.div_ceil(wb) as usize)?;
        let mut r = span.bits_at(wb, 0);
        let edge_len = r.read(COUNT_BITS) as usize;
        let lo = r.read(COUNT_BITS) as usize;
        let hi = r.read(COUNT_BITS) as usize;
        let fanout = r.read(FANOUT_BITS) as usize;
        let aux = r.read(wb);
        let total = hb as u64 + edge_len as u64 * 8 + fanout as u64 * (8 + wb as u64);
        span.ensure(store, session, at, 0, total.div_ceil(wb as u64) as usize)?;
        let mut r = span.bits_at(wb, hb as u64);
        let mut ok = true;
        for _ in 0..edge_len {
            let b = r.read(8) as u8;
            if ok && matched < p.len() {
                ok = b == p[matched];
                matched += 1;
            }
            label.push(b);
        }
        if !ok {
            return Ok(None);
        }
        if matched == p.len() {
            return Ok(Some(PrefixMatch {
                lo: lo + 1,
                hi: hi + 1,
                lcp: label,
                aux,
            }));
        }
        let next = (0..fanout)
            .map(|_| (r.read(8) as u8, r.read(wb)))
            .find(|&(b, _)| b == p[matched]);
        match next {
            Some((_, loc)) => at = BlockId(loc),
            None => return Ok(None),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::emsim::SimConfig;
    use proptest::prelude::*;

    fn scan(strings: &[Vec<u8>], p: &[u8]) -> Option<PrefixMatch> {
        let hits: Vec<usize> = (0..strings.len())
            .filter(|&i| strings[i].starts_with(p))
            .collect();
        let (&first, &last) = (hits.first()?, hits.last()?);
        let lcp = strings[first][..lcp(&strings[first], &strings[last])].to_vec();
        Some(PrefixMatch {
            lo: first + 1,
            hi: last + 1,
            lcp,
            aux: 0,
        })
    }

    fn index(strings: &[Vec<u8>], bw: usize) -> (Store, StringIndex) {
        let mut st = Store::new(SimConfig::new(bw, 32).unwrap());
        let ix = build_string_index(&mut st, &mut Session::new(), strings).unwrap();
        (st, ix)
    }

    #[test]
    fn small_cases() {
        let strings: Vec<Vec<u8>> = ["ab", "abc", "abd", "b"]
            .iter()
            .map(|s| s.as_bytes().to_vec())
            .collect();
        let (st, ix) = index(&strings, 4);
        let q = |p: &str| rank_interval(&st, &mut Session::new(), &ix, p.as_bytes()).unwrap();
        assert_eq!(
            q(""),
            Some(PrefixMatch {
                lo: 1,
                hi: 4,
                lcp: vec![],
                aux: 0
            })
        );
        assert_eq!(
            q("a"),
            Some(PrefixMatch {
                lo: 1,
                hi: 3,
                lcp: b"ab".to_vec(),
                aux: 0
            })
        );
        assert_eq!(
            q("abd"),
            Some(PrefixMatch {
                lo: 3,
                hi: 3,
                lcp: b"abd".to_vec(),
                aux: 0
            })
        );
        assert_eq!(
            q("b"),
            Some(PrefixMatch {
                lo: 4,
                hi: 4,
                lcp: b"b".to_vec(),
                aux: 0
            })
        );
        assert_eq!(q("abe"), None);
        assert_eq!(q("c"), None);
        assert_eq!(q("abcd"), None);
    }

    #[test]
    fn empty_set() {
        let (st, ix) = index(&[], 4);
        assert_eq!(
            rank_interval(&st, &mut Session::new(), &ix, b"").unwrap(),
            None
        );
    }

    #[test]
    fn unsorted_rejected() {
        let mut st = Store::new(SimConfig::new(4, 32).unwrap());
        let r = build_string_index(
            &mut st,
            &mut Session::new(),
            &[b"b".to_vec(), b"a".to_vec()],
        );
        assert!(matches!(r, Err(Error::UnsortedKeys)));
    }

    #[test]
    fn trie_nodes_branch() {
        let strings: Vec<Vec<u8>> = ["aa", "ab", "b"]
            .iter()
            .map(|s| s.as_bytes().to_vec())
            .collect();
        let t = Trie::build(&strings).unwrap();
        for v in &t.nodes {
            assert!(v.children.len() != 1 || v.terminal.is_some());
        }
        assert_eq!(t.label(t.locus(b"a").unwrap()), b"a");
        assert_eq!(t.locus(b"c"), None);
    }

    proptest! {
        #[test]
        fn matches_scan(
            set in prop::collection::btree_set(prop::collection::vec(0u8..4, 0..7), 0..40),
            probes in prop::collection::vec(prop::collection::vec(0u8..4, 0..5), 30),
            bw in 2usize..9,
        ) {
            let strings: Vec<Vec<u8>> = set.into_iter().collect();
            let (st, ix) = index(&strings, bw);
            let t = Trie::build(&strings).unwrap();
            for p in &probes {
                let want = scan(&strings, p);
                prop_assert_eq!(rank_interval(&st, &mut Session::new(), &ix, p).unwrap(), want.clone());
                let via_trie = t.locus(p).map(|v| (t.nodes[v].lo + 1, t.nodes[v].hi + 1, t.label(v).to_vec()));
                prop_assert_eq!(via_trie, want.map(|m| (m.lo, m.hi, m.lcp)));
            }
        }
    }
}
