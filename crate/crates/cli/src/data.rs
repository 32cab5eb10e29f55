//! Dataset generation and text formats.

use std::collections::{BTreeMap, BTreeSet};

use anyhow::{bail, Context, Result};
use emrange::colored::{parse_corpus, ColoredDataset};
use emrange::point::Point;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub type Corpus = Vec<(Vec<u8>, Vec<u64>)>;

/// `n` points with `x = 0..n` and `y` a random permutation of `0..n`.
pub fn gen_points(rng: &mut ChaCha8Rng, n: usize) -> Vec<Point> {
    let mut ys: Vec<u64> = (0..n as u64).collect();
    ys.shuffle(rng);
    ys.into_iter()
        .enumerate()
        .map(|(x, y)| Point::new(x as u64, y))
        .collect()
}

/// `m` sets with up to four colors each drawn from `1..=sigma`.
pub fn gen_colored(rng: &mut ChaCha8Rng, m: usize, sigma: u64) -> Vec<Vec<u64>> {
    (0..m)
        .map(|_| {
            let set: BTreeSet<u64> = (0..rng.gen_range(0..=4))
                .map(|_| rng.gen_range(1..=sigma))
                .collect();
            set.into_iter().collect()
        })
        .collect()
}

/// `n` distinct strings over `a..=d`, sorted, each with one to three colors.
pub fn gen_corpus(rng: &mut ChaCha8Rng, n: usize, sigma: u64) -> Corpus {
    let mut out: BTreeMap<Vec<u8>, Vec<u64>> = BTreeMap::new();
    let max_len = 2 + (n.max(2) as f64).log(4.0).ceil() as usize * 2;
    while out.len() < n {
        let s: Vec<u8> = (0..rng.gen_range(1..=max_len))
            .map(|_| b"abcd"[rng.gen_range(0..4)])
            .collect();
        let colors: BTreeSet<u64> = (0..rng.gen_range(1..=3))
            .map(|_| rng.gen_range(1..=sigma))
            .collect();
        out.entry(s).or_insert_with(|| colors.into_iter().collect());
    }
    out.into_iter().collect()
}

pub fn format_points(points: &[Point]) -> String {
    points
        .iter()
        .map(|p| format!("{} {}\n", p.x, p.y))
        .collect()
}

pub fn format_colored(sets: &[Vec<u64>]) -> String {
    let mut s = String::new();
    for (i, set) in sets.iter().enumerate() {
        for c in set {
            s += &format!("{} {c}\n", i + 1);
        }
    }
    s
}

pub fn format_corpus(corpus: &Corpus) -> String {
    corpus
        .iter()
        .map(|(s, cs)| {
            let cs: Vec<String> = cs.iter().map(u64::to_string).collect();
            format!("{}\t{}\n", String::from_utf8_lossy(s), cs.join(","))
        })
        .collect()
}

/// Lines `x y`; the payload is the line number.
pub fn parse_points(text: &str) -> Result<Vec<Point>> {
    let mut out = Vec::new();
    for (ln, line) in text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
    {
        let v: Vec<u64> = line
            .split_whitespace()
            .map(str::parse)
            .collect::<std::result::Result<_, _>>()
            .with_context(|| format!("line {}: bad point {line:?}", ln + 1))?;
        let [x, y] = v[..] else {
            bail!("line {}: expected \"x y\"", ln + 1)
        };
        out.push(Point::with_payload(x, y, ln as u64));
    }
    Ok(out)
}

pub fn read_colored(text: &str) -> Result<ColoredDataset> {
    Ok(ColoredDataset::parse(text)?)
}

pub fn read_corpus(text: &str) -> Result<Corpus> {
    Ok(parse_corpus(text)?)
}
