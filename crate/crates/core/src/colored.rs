//! Colored range reporting over sets `C_1..C_m` and colored prefix
//! reporting over a string corpus, both reduced to three-sided queries.
//!
//! Lay all sets out one after another; occurrence number `i'` of color `c`
//! becomes the point `(i', pred)` where `pred` is the position of the
//! previous occurrence of `c`, or 0. A color occurs in `C_a..C_b` iff
//! exactly one of its points in `[a', b']` has `pred < a'`, so the query is
//! `[a', b'] x (-inf, a' - 1]`.

use std::collections::{BTreeSet, HashMap};

use crate::checks::{check, Check};
use crate::emsim::{BlockId, Session, Store};
use crate::error::{Error, Result};
use crate::point::Point;
use crate::strindex::{build_string_index, rank_interval, StringIndex};
use crate::threesided::{build_top, query_top, TopConfig};

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ColoredDataset {
    sets: Vec<Vec<u64>>,
}

impl ColoredDataset {
    /// Each set must be strictly increasing.
    pub fn new(sets: Vec<Vec<u64>>) -> Result<Self> {
        if let Some(i) = sets.iter().position(|s| s.windows(2).any(|w| w[0] >= w[1])) {
            return Err(Error::Format(format!(
                "set {} is not strictly increasing",
                i + 1
            )));
        }
        Ok(ColoredDataset { sets })
    }

    /// Parses lines `i c` (1-based set index, color). Sets up to the
    /// largest index exist, possibly empty.
    pub fn parse(text: &str) -> Result<Self> {
        let mut sets: Vec<BTreeSet<u64>> = Vec::new();
        for (ln, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let bad = || Error::Format(format!("line {}: expected \"i c\", got {line:?}", ln + 1));
            let mut it = line.split_whitespace();
            let (Some(i), Some(c), None) = (it.next(), it.next(), it.next()) else {
                return Err(bad());
            };
            let i: usize = i.parse().map_err(|_| bad())?;
            let c: u64 = c.parse().map_err(|_| bad())?;
            if i == 0 {
                return Err(bad());
            }
            if sets.len() < i {
                sets.resize(i, BTreeSet::new());
            }
            if !sets[i - 1].insert(c) {
                return Err(Error::Format(format!(
                    "line {}: color {c} repeated in set {i}",
                    ln + 1
                )));
            }
        }
        Ok(ColoredDataset {
            sets: sets.into_iter().map(|s| s.into_iter().collect()).collect(),
        })
    }

    pub fn sets(&self) -> &[Vec<u64>] {
        &self.sets
    }

    pub fn m(&self) -> usize {
        self.sets.len()
    }

    pub fn n(&self) -> usize {
        self.sets.iter().map(Vec::len).sum()
    }

    /// Entry `i` is `|C_1| + ... + |C_i|`.
    pub fn prefix_sums(&self) -> Vec<u64> {
        std::iter::once(0)
            .chain(self.sets.iter().scan(0u64, |acc, s| {
                *acc += s.len() as u64;
                Some(*acc)
            }))
            .collect()
    }

    /// The reduced points: `x = i'`, `y = pred`, payload = color.
    pub fn reduce(&self) -> Vec<Point> {
        let mut last: HashMap<u64, u64> = HashMap::new();
        let mut out = Vec::with_capacity(self.n());
        for &c in self.sets.iter().flatten() {
            let i = out.len() as u64 + 1;
            let pred = last.insert(c, i).unwrap_or(0);
            out.push(Point::with_payload(i, pred, c));
        }
        out
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ColoredRange {
    /// Manifest of the three-sided structure on the reduced points.
    pub top: BlockId,
    /// Record of `m + 1` prefix sums.
    pub prefix: BlockId,
    pub m: usize,
    pub n: usize,
}

pub fn build_colored_range(
    store: &mut Store,
    session: &mut Session,
    data: &ColoredDataset,
    cfg: &TopConfig,
) -> Result<ColoredRange> {
    let top = build_top(store, session, &data.reduce(), cfg)?;
    let prefix = store.append_record(session, &data.prefix_sums())?;
    Ok(ColoredRange {
        top: top.manifest,
        prefix,
        m: data.m(),
        n: data.n(),
    })
}

impl ColoredRange {
    /// Colors of `C_a ∪ ... ∪ C_b`, 1-based and inclusive, ascending.
    pub fn query(
        &self,
        store: &Store,
        session: &mut Session,
        a: usize,
        b: usize,
    ) -> Result<Vec<u64>> {
        for i in [a, b] {
            if i == 0 || i > self.m {
                return Err(Error::OutOfRange(format!(
                    "set index {i} outside 1..={}",
                    self.m
                )));
            }
        }
        if a > b {
            return Ok(Vec::new());
        }
        let mut span = store.read_words(session, self.prefix, a - 1, a)?;
        span.ensure(store, session, self.prefix, b, b + 1)?;
        let (lo, hi) = (span.word(a - 1) + 1, span.word(b));
        if lo > hi {
            return Ok(Vec::new());
        }
        let hits = query_top(store, session, self.top, lo, hi, lo - 1)?;
        let mut colors: Vec<u64> = hits.iter().map(|p| p.payload).collect();
        colors.sort_unstable();
        let before = colors.len();
        colors.dedup();
        check(Check::OneWitness, colors.len() == before, || {
            format!(
                "query ({a}, {b}) reported {} duplicate colors",
                before - colors.len()
            )
        });
        Ok(colors)
    }
}

/// Sorts a corpus of `(string, colors)` and normalizes each color list.
/// Duplicate strings are an error.
pub fn normalize_corpus(corpus: &[(Vec<u8>, Vec<u64>)]) -> Result<Vec<(Vec<u8>, Vec<u64>)>> {
    let mut c: Vec<(Vec<u8>, Vec<u64>)> = corpus
        .iter()
        .map(|(s, cs)| {
            let set: BTreeSet<u64> = cs.iter().copied().collect();
            (s.clone(), set.into_iter().collect())
        })
        .collect();
    c.sort_unstable_by(|a, b| a.0.cmp(&b.0));
    if let Some(w) = c.windows(2).find(|w| w[0].0 == w[1].0) {
        return Err(Error::Format(format!(
            "duplicate string {:?}",
            String::from_utf8_lossy(&w[0].0)
        )));
    }
    Ok(c)
}

/// Parses lines `string<TAB>c1,c2,...`; the color list may be empty.
pub fn parse_corpus(text: &str) -> Result<Vec<(Vec<u8>, Vec<u64>)>> {
    let mut out = Vec::new();
    for (ln, line) in text.lines().enumerate() {
        if line.is_empty() {
            continue;
        }
        let Some((s, cs)) = line.split_once('\t') else {
            return Err(Error::Format(format!("line {}: missing tab", ln + 1)));
        };
        let colors = cs
            .split(',')
            .map(str::trim)
            .filter(|t| !t.is_empty())
            .map(|t| {
                t.parse()
                    .map_err(|_| Error::Format(format!("line {}: bad color {t:?}", ln + 1)))
            })
            .collect::<Result<Vec<u64>>>()?;
        out.push((s.as_bytes().to_vec(), colors));
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ColoredPrefix {
    pub index: StringIndex,
    pub range: ColoredRange,
}

/// String ranks become set indices: the strings with a given prefix form a
/// rank interval, whose sets are then unioned by a colored range query.
pub fn build_colored_prefix(
    store: &mut Store,
    session: &mut Session,
    corpus: &[(Vec<u8>, Vec<u64>)],
    cfg: &TopConfig,
) -> Result<ColoredPrefix> {
    let corpus = normalize_corpus(corpus)?;
    let strings: Vec<Vec<u8>> = corpus.iter().map(|e| e.0.clone()).collect();
    let index = build_string_index(store, session, &strings)?;
    let data = ColoredDataset::new(corpus.into_iter().map(|e| e.1).collect())?;
    let range = build_colored_range(store, session, &data, cfg)?;
    Ok(ColoredPrefix { index, range })
}

impl ColoredPrefix {
    pub fn query(&self, store: &Store, session: &mut Session, p: &[u8]) -> Result<Vec<u64>> {
        match rank_interval(store, session, &self.index, p)? {
            Some(m) => self.range.query(store, session, m.lo, m.hi),
            None => Ok(Vec::new()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::checks;
    use crate::emsim::SimConfig;
    use crate::oracle::{brute_colored, brute_prefix, brute_reduce};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn store(bw: usize) -> Store {
        Store::new(SimConfig::new(bw, 32).unwrap())
    }

    fn worked() -> ColoredDataset {
        ColoredDataset::new(vec![vec![2, 5], vec![2]]).unwrap()
    }

    fn random_sets(rng: &mut ChaCha8Rng, m: usize, sigma: u64) -> ColoredDataset {
        let sets = (0..m)
            .map(|_| {
                let k = rng.gen_range(0..6);
                let s: BTreeSet<u64> = (0..k).map(|_| rng.gen_range(1..=sigma)).collect();
                s.into_iter().collect()
            })
            .collect();
        ColoredDataset::new(sets).unwrap()
    }

    #[test]
    fn worked_example_reduction() {
        let pts: Vec<(u64, u64)> = worked().reduce().iter().map(|p| (p.x, p.y)).collect();
        assert_eq!(pts, vec![(1, 0), (2, 0), (3, 1)]);
        let with_color: Vec<(u64, u64, u64)> = worked()
            .reduce()
            .iter()
            .map(|p| (p.x, p.y, p.payload))
            .collect();
        assert_eq!(with_color, brute_reduce(worked().sets()));
    }

    #[test]
    fn worked_example_query() {
        let mut st = store(4);
        let cr = build_colored_range(
            &mut st,
            &mut Session::new(),
            &worked(),
            &TopConfig::default(),
        )
        .unwrap();
        assert_eq!(cr.query(&st, &mut Session::new(), 2, 2).unwrap(), vec![2]);
        assert_eq!(
            cr.query(&st, &mut Session::new(), 1, 2).unwrap(),
            vec![2, 5]
        );
        assert_eq!(
            cr.query(&st, &mut Session::new(), 2, 1).unwrap(),
            Vec::<u64>::new()
        );
        assert!(matches!(
            cr.query(&st, &mut Session::new(), 0, 1),
            Err(Error::OutOfRange(_))
        ));
        assert!(matches!(
            cr.query(&st, &mut Session::new(), 1, 3),
            Err(Error::OutOfRange(_))
        ));
    }

    #[test]
    fn empty_sets() {
        let data = ColoredDataset::new(vec![vec![], vec![]]).unwrap();
        assert!(data.reduce().is_empty());
        let mut st = store(4);
        let cr = build_colored_range(&mut st, &mut Session::new(), &data, &TopConfig::default())
            .unwrap();
        assert!(cr.query(&st, &mut Session::new(), 1, 2).unwrap().is_empty());
    }

    #[test]
    fn reduction_is_a_bijection() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..50 {
            let data = random_sets(&mut rng, 40, 20);
            let pts = data.reduce();
            let xs: Vec<u64> = pts.iter().map(|p| p.x).collect();
            assert_eq!(xs, (1..=data.n() as u64).collect::<Vec<_>>());
            let mine: Vec<(u64, u64, u64)> = pts.iter().map(|p| (p.x, p.y, p.payload)).collect();
            assert_eq!(mine, brute_reduce(data.sets()));
        }
    }

    #[test]
    fn parse_formats() {
        let d = ColoredDataset::parse("1 2\n1 5\n2 2\n").unwrap();
        assert_eq!(d, worked());
        assert!(ColoredDataset::parse("1 2\n1 2\n").is_err());
        assert!(ColoredDataset::parse("0 2\n").is_err());
        assert!(ColoredDataset::parse("1\n").is_err());
        let c = parse_corpus("ab\t3,1\nb\t\n").unwrap();
        assert_eq!(
            c,
            vec![(b"ab".to_vec(), vec![3, 1]), (b"b".to_vec(), vec![])]
        );
        assert!(parse_corpus("ab 3\n").is_err());
    }

    #[test]
    fn single_set_identity_and_random_ranges() {
        let before = checks::total_failures();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for bw in [4, 8, 16] {
            let data = random_sets(&mut rng, 120, 30);
            let mut st = store(bw);
            let cr =
                build_colored_range(&mut st, &mut Session::new(), &data, &TopConfig::default())
                    .unwrap();
            for i in 1..=data.m() {
                assert_eq!(
                    cr.query(&st, &mut Session::new(), i, i).unwrap(),
                    data.sets()[i - 1]
                );
            }
            for _ in 0..300 {
                let a = rng.gen_range(1..=data.m());
                let b = rng.gen_range(1..=data.m());
                let got: BTreeSet<u64> = cr
                    .query(&st, &mut Session::new(), a, b)
                    .unwrap()
                    .into_iter()
                    .collect();
                assert_eq!(got, brute_colored(data.sets(), a, b), "B={bw} ({a},{b})");
            }
        }
        assert_eq!(checks::total_failures(), before);
    }

    #[test]
    fn prefix_queries_match_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for bw in [4, 8] {
            let mut seen = BTreeSet::new();
            let corpus: Vec<(Vec<u8>, Vec<u64>)> = (0..150)
                .filter_map(|_| {
                    let s: Vec<u8> = (0..rng.gen_range(1..6))
                        .map(|_| b"abc"[rng.gen_range(0..3)])
                        .collect();
                    let cs: Vec<u64> = (0..rng.gen_range(0..4))
                        .map(|_| rng.gen_range(1..25))
                        .collect();
                    seen.insert(s.clone()).then_some((s, cs))
                })
                .collect();
            let mut st = store(bw);
            let cp =
                build_colored_prefix(&mut st, &mut Session::new(), &corpus, &TopConfig::default())
                    .unwrap();
            for _ in 0..200 {
                let p: Vec<u8> = (0..rng.gen_range(0..4))
                    .map(|_| b"abcd"[rng.gen_range(0..4)])
                    .collect();
                let got: BTreeSet<u64> = cp
                    .query(&st, &mut Session::new(), &p)
                    .unwrap()
                    .into_iter()
                    .collect();
                assert_eq!(got, brute_prefix(&corpus, &p), "p={p:?}");
            }
        }
    }

    #[test]
    fn duplicate_strings_rejected() {
        let corpus = vec![(b"a".to_vec(), vec![1]), (b"a".to_vec(), vec![2])];
        let mut st = store(4);
        assert!(
            build_colored_prefix(&mut st, &mut Session::new(), &corpus, &TopConfig::default())
                .is_err()
        );
    }
}
