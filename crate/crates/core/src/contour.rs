//! Zero-level contours of a scalar field sampled on a rectangular grid.
//!
//! Marching squares finds the grid edges where the field changes sign; each
//! crossing is then located by bisection on the field itself rather than by
//! linear interpolation, so vertices sit on the true zero set.

use std::collections::HashMap;

/// Axis-aligned sampling grid, `n` nodes per axis over `[min, max]`.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct GridSpec {
    pub n: usize,
    pub min: f64,
    pub max: f64,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            n: 401,
            min: -std::f64::consts::PI,
            max: std::f64::consts::PI,
        }
    }
}

impl GridSpec {
    pub fn coord(&self, i: usize) -> f64 {
        if self.n < 2 {
            return self.min;
        }
        self.min + (self.max - self.min) * i as f64 / (self.n - 1) as f64
    }

    pub fn coords(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.coord(i)).collect()
    }

    pub fn spacing(&self) -> f64 {
        (self.max - self.min) / (self.n.max(2) - 1) as f64
    }
}

/// Field values on a square grid, row-major with `values[j * n + i]` at
/// `(x_i, y_j)`.
#[derive(Debug, Clone)]
pub struct SampledField {
    pub grid: GridSpec,
    pub values: Vec<f64>,
}

impl SampledField {
    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.values[j * self.grid.n + i]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
enum Edge {
    /// `(i, j)` to `(i + 1, j)`.
    H(usize, usize),
    /// `(i, j)` to `(i, j + 1)`.
    V(usize, usize),
}

const BISECTION_STEPS: usize = 60;

/// Zero of `f` on the segment `a -> b`, given `f(a) >= 0 > f(b)` or the reverse.
pub fn bisect_segment(f: &impl Fn(f64, f64) -> f64, a: [f64; 2], b: [f64; 2]) -> [f64; 2] {
    let at = |t: f64| [a[0] + (b[0] - a[0]) * t, a[1] + (b[1] - a[1]) * t];
    let (mut lo, mut hi) = (0.0_f64, 1.0_f64);
    let lo_inside = f(a[0], a[1]) >= 0.0;
    for _ in 0..BISECTION_STEPS {
        let mid = 0.5 * (lo + hi);
        let p = at(mid);
        let v = f(p[0], p[1]);
        if v == 0.0 {
            return p;
        }
        if (v >= 0.0) == lo_inside {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    at(0.5 * (lo + hi))
}

/// Extracts the polylines where `f` changes sign. `field` must hold `f`
/// sampled on its grid; `f` is re-evaluated to refine crossings and to
/// resolve saddle cells. Closed loops repeat their first vertex at the end.
pub fn zero_contours(field: &SampledField, f: &impl Fn(f64, f64) -> f64) -> Vec<Vec<[f64; 2]>> {
    let n = field.grid.n;
    if n < 2 {
        return Vec::new();
    }
    let xs = field.grid.coords();
    let inside = |i: usize, j: usize| field.at(i, j) >= 0.0;

    let mut points: Vec<[f64; 2]> = Vec::new();
    let mut index: HashMap<Edge, usize> = HashMap::new();
    let mut crossing = |e: Edge| -> Option<usize> {
        let (a, b) = match e {
            Edge::H(i, j) => ((i, j), (i + 1, j)),
            Edge::V(i, j) => ((i, j), (i, j + 1)),
        };
        if inside(a.0, a.1) == inside(b.0, b.1) {
            return None;
        }
        Some(*index.entry(e).or_insert_with(|| {
            let p = bisect_segment(f, [xs[a.0], xs[a.1]], [xs[b.0], xs[b.1]]);
            points.push(p);
            points.len() - 1
        }))
    };

    let mut segments: Vec<(usize, usize)> = Vec::new();
    for j in 0..n - 1 {
        for i in 0..n - 1 {
            let bottom = crossing(Edge::H(i, j));
            let right = crossing(Edge::V(i + 1, j));
            let top = crossing(Edge::H(i, j + 1));
            let left = crossing(Edge::V(i, j));
            match (bottom, right, top, left) {
                (None, None, None, None) => {}
                (Some(b), Some(r), Some(t), Some(l)) => {
                    // saddle: the centre decides which diagonal is connected
                    let centre = f(0.5 * (xs[i] + xs[i + 1]), 0.5 * (xs[j] + xs[j + 1])) >= 0.0;
                    if centre == inside(i, j) {
                        segments.push((b, r));
                        segments.push((t, l));
                    } else {
                        segments.push((b, l));
                        segments.push((t, r));
                    }
                }
                edges => {
                    let hits: Vec<usize> = [edges.0, edges.1, edges.2, edges.3]
                        .into_iter()
                        .flatten()
                        .collect();
                    if let [p, q] = hits[..] {
                        segments.push((p, q));
                    }
                }
            }
        }
    }

    chain(&points, &segments)
}

fn chain(points: &[[f64; 2]], segments: &[(usize, usize)]) -> Vec<Vec<[f64; 2]>> {
    let mut adjacency: Vec<Vec<usize>> = vec![Vec::new(); points.len()];
    for (s, &(a, b)) in segments.iter().enumerate() {
        adjacency[a].push(s);
        adjacency[b].push(s);
    }
    let mut used = vec![false; segments.len()];
    let mut lines = Vec::new();

    let walk = |start: usize, used: &mut Vec<bool>| -> Vec<[f64; 2]> {
        let mut line = vec![points[start]];
        let mut at = start;
        while let Some(&s) = adjacency[at].iter().find(|&&s| !used[s]) {
            used[s] = true;
            let (a, b) = segments[s];
            at = if a == at { b } else { a };
            line.push(points[at]);
        }
        line
    };

    // open curves first, starting from their lower-index end
    for p in 0..points.len() {
        if adjacency[p].len() == 1 && !used[adjacency[p][0]] {
            lines.push(walk(p, &mut used));
        }
    }
    for p in 0..points.len() {
        if adjacency[p].iter().any(|&s| !used[s]) {
            lines.push(walk(p, &mut used));
        }
    }
    lines
}
