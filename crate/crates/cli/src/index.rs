//! Building, persisting and querying the four structures.

use std::fmt;
use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};
use clap::ValueEnum;
use emrange::colored::{
    build_colored_prefix, build_colored_range, ColoredDataset, ColoredPrefix, ColoredRange,
};
use emrange::emsim::{BlockId, Session, SimConfig, Store};
use emrange::oracle::{brute_colored, brute_prefix, brute_threesided, brute_topk};
use emrange::point::Point;
use emrange::strindex::StringIndex;
use emrange::threesided::{build_top, query_top, TopConfig};
use emrange::topk::{build_topk, TopkIndex};
use serde::{Deserialize, Serialize};

use crate::data::{parse_points, read_colored, read_corpus, Corpus};

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Structure {
    Threesided,
    ColoredRange,
    ColoredPrefix,
    Topk,
}

impl fmt::Display for Structure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(
            self.to_possible_value()
                .expect("no skipped variants")
                .get_name(),
        )
    }
}

pub enum Dataset {
    Points(Vec<Point>),
    Colored(ColoredDataset),
    Corpus(Corpus),
}

impl Dataset {
    pub fn read(structure: Structure, path: &Path) -> Result<Dataset> {
        let text =
            fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        Ok(match structure {
            Structure::Threesided => Dataset::Points(parse_points(&text)?),
            Structure::ColoredRange => Dataset::Colored(read_colored(&text)?),
            Structure::ColoredPrefix | Structure::Topk => Dataset::Corpus(read_corpus(&text)?),
        })
    }

    /// Number of input elements.
    pub fn size(&self) -> usize {
        match self {
            Dataset::Points(p) => p.len(),
            Dataset::Colored(d) => d.n(),
            Dataset::Corpus(c) => c.len(),
        }
    }
}

/// Root handles of a built structure; everything else lives in the store.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "structure", rename_all = "kebab-case")]
pub enum Handles {
    Threesided {
        manifest: u64,
    },
    ColoredRange {
        top: u64,
        prefix: u64,
        m: usize,
        n: usize,
    },
    ColoredPrefix {
        root: u64,
        len: usize,
        top: u64,
        prefix: u64,
        m: usize,
        n: usize,
    },
    Topk {
        root: u64,
        len: usize,
        k: usize,
    },
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub block_words: usize,
    pub word_bits: u32,
    pub store: String,
    #[serde(flatten)]
    pub handles: Handles,
}

pub const MANIFEST_FILE: &str = "manifest.json";
pub const STORE_FILE: &str = "store.ems";

pub fn build(store: &mut Store, data: &Dataset, structure: Structure, k: usize) -> Result<Handles> {
    let mut s = Session::new();
    let cfg = TopConfig::default();
    Ok(match (structure, data) {
        (Structure::Threesided, Dataset::Points(p)) => Handles::Threesided {
            manifest: build_top(store, &mut s, p, &cfg)?.manifest.0,
        },
        (Structure::ColoredRange, Dataset::Colored(d)) => {
            let r = build_colored_range(store, &mut s, d, &cfg)?;
            Handles::ColoredRange {
                top: r.top.0,
                prefix: r.prefix.0,
                m: r.m,
                n: r.n,
            }
        }
        (Structure::ColoredPrefix, Dataset::Corpus(c)) => {
            let r = build_colored_prefix(store, &mut s, c, &cfg)?;
            let g = r.range;
            Handles::ColoredPrefix {
                root: r.index.root.0,
                len: r.index.len,
                top: g.top.0,
                prefix: g.prefix.0,
                m: g.m,
                n: g.n,
            }
        }
        (Structure::Topk, Dataset::Corpus(c)) => {
            let (ix, _) = build_topk(store, &mut s, c, k)?;
            Handles::Topk {
                root: ix.index.root.0,
                len: ix.index.len,
                k,
            }
        }
        _ => bail!("dataset does not match structure {structure}"),
    })
}

/// Writes the store image and manifest into `dir`.
pub fn save(dir: &Path, store: &Store, handles: Handles) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let cfg = store.config();
    let m = Manifest {
        block_words: cfg.block_words(),
        word_bits: cfg.word_bits(),
        store: STORE_FILE.into(),
        handles,
    };
    let f = fs::File::create(dir.join(STORE_FILE))?;
    store.dump(std::io::BufWriter::new(f))?;
    fs::write(
        dir.join(MANIFEST_FILE),
        serde_json::to_string_pretty(&m)? + "\n",
    )?;
    Ok(())
}

pub fn load(dir: &Path) -> Result<(Store, Manifest)> {
    let path = dir.join(MANIFEST_FILE);
    let text = fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
    let m: Manifest =
        serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
    let f =
        fs::File::open(dir.join(&m.store)).with_context(|| format!("opening store {}", m.store))?;
    let store = Store::load(std::io::BufReader::new(f))?;
    let cfg = store.config();
    if (cfg.block_words(), cfg.word_bits()) != (m.block_words, m.word_bits) {
        bail!("store geometry differs from manifest");
    }
    Ok((store, m))
}

pub fn new_store(block_words: usize, word_bits: u32) -> Result<Store> {
    Ok(Store::new(SimConfig::new(block_words, word_bits)?))
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Request {
    Range { x1: u64, x2: u64, y: u64 },
    Sets { a: usize, b: usize },
    Prefix(Vec<u8>),
}

impl Request {
    pub fn parse(structure: Structure, args: &[String]) -> Result<Request> {
        let nums = || -> Result<Vec<u64>> {
            args.iter()
                .map(|a| a.parse().with_context(|| format!("bad number {a:?}")))
                .collect()
        };
        Ok(match structure {
            Structure::Threesided => match nums()?[..] {
                [x1, x2, y] => Request::Range { x1, x2, y },
                _ => bail!("threesided query takes x1 x2 y"),
            },
            Structure::ColoredRange => match nums()?[..] {
                [a, b] => Request::Sets {
                    a: a as usize,
                    b: b as usize,
                },
                _ => bail!("colored-range query takes a b"),
            },
            Structure::ColoredPrefix | Structure::Topk => match args {
                [] => Request::Prefix(Vec::new()),
                [p] => Request::Prefix(p.as_bytes().to_vec()),
                _ => bail!("prefix query takes one prefix"),
            },
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Answer {
    /// `(x, y)`, sorted.
    Points(Vec<(u64, u64)>),
    /// Ascending.
    Colors(Vec<u64>),
}

impl Answer {
    pub fn len(&self) -> usize {
        match self {
            Answer::Points(p) => p.len(),
            Answer::Colors(c) => c.len(),
        }
    }

    fn points(pts: &[Point]) -> Answer {
        let mut v: Vec<(u64, u64)> = pts.iter().map(|p| (p.x, p.y)).collect();
        v.sort_unstable();
        Answer::Points(v)
    }
}

impl fmt::Display for Answer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let items: Vec<String> = match self {
            Answer::Points(p) => p.iter().map(|(x, y)| format!("{x},{y}")).collect(),
            Answer::Colors(c) => c.iter().map(u64::to_string).collect(),
        };
        f.write_str(&items.join(" "))
    }
}

pub fn run(store: &Store, session: &mut Session, h: Handles, req: &Request) -> Result<Answer> {
    Ok(match (h, req) {
        (Handles::Threesided { manifest }, &Request::Range { x1, x2, y }) => {
            Answer::points(&query_top(store, session, BlockId(manifest), x1, x2, y)?)
        }
        (Handles::ColoredRange { top, prefix, m, n }, &Request::Sets { a, b }) => {
            let r = ColoredRange {
                top: BlockId(top),
                prefix: BlockId(prefix),
                m,
                n,
            };
            Answer::Colors(r.query(store, session, a, b)?)
        }
        (
            Handles::ColoredPrefix {
                root,
                len,
                top,
                prefix,
                m,
                n,
            },
            Request::Prefix(p),
        ) => {
            let range = ColoredRange {
                top: BlockId(top),
                prefix: BlockId(prefix),
                m,
                n,
            };
            let r = ColoredPrefix {
                index: StringIndex {
                    root: BlockId(root),
                    len,
                },
                range,
            };
            Answer::Colors(r.query(store, session, p)?)
        }
        (Handles::Topk { root, len, k }, Request::Prefix(p)) => {
            let ix = TopkIndex {
                index: StringIndex {
                    root: BlockId(root),
                    len,
                },
                k,
            };
            Answer::Colors(ix.query(store, session, p)?)
        }
        _ => bail!("request does not match the built structure"),
    })
}

/// Reference answer computed directly from the dataset.
pub fn expected(data: &Dataset, h: Handles, req: &Request) -> Result<Answer> {
    Ok(match (data, req) {
        (Dataset::Points(p), &Request::Range { x1, x2, y }) => {
            Answer::points(&brute_threesided(p, x1, x2, y))
        }
        (Dataset::Colored(d), &Request::Sets { a, b }) => {
            Answer::Colors(brute_colored(d.sets(), a, b).into_iter().collect())
        }
        (Dataset::Corpus(c), Request::Prefix(p)) => match h {
            Handles::Topk { k, .. } => Answer::Colors(brute_topk(c, p, k)),
            _ => Answer::Colors(brute_prefix(c, p).into_iter().collect()),
        },
        _ => bail!("request does not match the dataset"),
    })
}
