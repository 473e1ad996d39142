//! Unrestricted Damerau-Levenshtein distance (Lowrance-Wagner).

use std::ops::Add;

const STACK_CELLS: usize = 484;
const STACK_COLS: usize = 24;

/// Edit distance with insertions, deletions, substitutions and transpositions
/// of adjacent symbols, where a transposed pair may be edited further.
pub fn damerau_levenshtein_slices<T: Eq + Copy>(a: &[T], b: &[T]) -> usize {
    let cells = (a.len() + 2) * (b.len() + 2);
    // Cells never exceed 2 * (n + m), so short inputs fit in bytes and the
    // stack buffer is cheap to zero.
    if cells <= STACK_CELLS && b.len() <= STACK_COLS && a.len() + b.len() <= 120 {
        let mut buf = [0u8; STACK_CELLS];
        let mut last_row = [0usize; STACK_COLS];
        lowrance_wagner(a, b, &mut buf[..cells], &mut last_row[..b.len()])
    } else {
        let mut buf = vec![0usize; cells];
        let mut last_row = vec![0usize; b.len()];
        lowrance_wagner(a, b, &mut buf, &mut last_row)
    }
}

pub fn damerau_levenshtein(a: &str, b: &str) -> usize {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    damerau_levenshtein_slices(&a, &b)
}

trait Cell: Copy + Ord + Add<Output = Self> {
    fn of(v: usize) -> Self;
    fn get(self) -> usize;
}

impl Cell for u8 {
    fn of(v: usize) -> Self {
        v as u8
    }
    fn get(self) -> usize {
        self.into()
    }
}

impl Cell for usize {
    fn of(v: usize) -> Self {
        v
    }
    fn get(self) -> usize {
        self
    }
}

/// `d` is the `(n + 2) x (m + 2)` matrix padded with an infinite row and
/// column. `last_row[j]` is the last row `i` so far with `a[i - 1] == b[j]`,
/// standing in for the per-symbol table of the textbook form.
fn lowrance_wagner<T: Eq + Copy, C: Cell>(a: &[T], b: &[T], d: &mut [C], last_row: &mut [usize]) -> usize {
    let (n, m) = (a.len(), b.len());
    let w = m + 2;
    let inf = C::of(n + m);
    let one = C::of(1);
    d[0] = inf;
    for i in 0..=n {
        d[(i + 1) * w] = inf;
        d[(i + 1) * w + 1] = C::of(i);
    }
    for j in 0..=m {
        d[j + 1] = inf;
        d[w + j + 1] = C::of(j);
    }
    for i in 1..=n {
        let ai = a[i - 1];
        let (above, rest) = d.split_at_mut((i + 1) * w);
        let prev = &above[i * w..];
        let row = &mut rest[..w];
        let mut left = row[1];
        let mut last_match_col = 0;
        for j in 1..=m {
            let i1 = last_row[j - 1];
            let j1 = last_match_col;
            // Branch-free: matches are data dependent and mispredict badly.
            // A zero i1 or j1 reads the infinite padding.
            let same = ai == b[j - 1];
            last_match_col = if same { j } else { last_match_col };
            // Column j is read once per row, so it can be updated in place.
            last_row[j - 1] = if same { i } else { i1 };
            let v = (prev[j] + C::of(usize::from(!same)))
                .min(prev[j + 1].min(left) + one)
                .min(above[i1 * w + j1] + C::of(i - i1 + j - j1 - 1));
            row[j + 1] = v;
            left = v;
        }
    }
    d[(n + 1) * w + m + 1].get()
}
