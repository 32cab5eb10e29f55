/// A point in rank space with an opaque payload (color, origin node, ...).
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Point {
    pub x: u64,
    pub y: u64,
    pub payload: u64,
}

impl Point {
    pub fn new(x: u64, y: u64) -> Self {
        Point { x, y, payload: 0 }
    }

    pub fn with_payload(x: u64, y: u64, payload: u64) -> Self {
        Point { x, y, payload }
    }

    /// Inside `[x1, x2] x (-inf, y]`.
    pub fn in_range(&self, x1: u64, x2: u64, y: u64) -> bool {
        x1 <= self.x && self.x <= x2 && self.y <= y
    }
}

/// Heap order used throughout: smaller `y` first, ties by smaller `x`.
pub fn heap_key(p: &Point) -> (u64, u64) {
    (p.y, p.x)
}
