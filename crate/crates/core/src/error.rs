use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid block {0}")]
    InvalidBlock(u64),
    #[error("invalid address: block {block}, offset {offset}")]
    InvalidAddress { block: u64, offset: usize },
    #[error("word overflow: {value} does not fit in {word_bits} bits")]
    WordOverflow { value: u64, word_bits: u32 },
    #[error("scatter width exceeded: {requested} addresses, limit {limit}")]
    ScatterWidth { requested: usize, limit: usize },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("keys must be strictly increasing")]
    UnsortedKeys,
    #[error("not rank space: duplicate x coordinate {0}")]
    NotRankSpace(u64),
    #[error("duplicate coordinate {0}")]
    DuplicateCoordinate(u64),
    #[error("micro capacity exceeded: {len} points, capacity {cap}")]
    MicroCapacity { len: usize, cap: usize },
    #[error("capacity exceeded: {len} points, capacity {cap}")]
    Capacity { len: usize, cap: usize },
    #[error("catalog requires aligned range")]
    Misaligned,
    #[error("index out of range: {0}")]
    OutOfRange(String),
    #[error("structure not sealed")]
    NotSealed,
    #[error("malformed input: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
