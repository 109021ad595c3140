use std::collections::HashMap;

use super::cloud::Vec3;

/// Incremental uniform hash grid for points that arrive one at a time.
#[derive(Debug, Clone)]
pub struct HashGrid {
    cell: f64,
    cells: HashMap<[i64; 3], Vec<usize>>,
}

impl HashGrid {
    pub fn new(cell: f64) -> Self {
        assert!(cell > 0.0 && cell.is_finite(), "grid cell size must be positive");
        Self {
            cell,
            cells: HashMap::new(),
        }
    }

    #[inline]
    fn key(&self, p: &Vec3) -> [i64; 3] {
        [
            (p.x / self.cell).floor() as i64,
            (p.y / self.cell).floor() as i64,
            (p.z / self.cell).floor() as i64,
        ]
    }

    pub fn insert(&mut self, id: usize, p: &Vec3) {
        let k = self.key(p);
        self.cells.entry(k).or_default().push(id);
    }

    /// Calls `f` with every id stored in a cell that may hold points within
    /// `radius` of `q`. Callers do the exact distance test.
    pub fn for_each_near<F: FnMut(usize)>(&self, q: &Vec3, radius: f64, mut f: F) {
        let reach = (radius / self.cell).ceil() as i64;
        let c = self.key(q);
        for dx in -reach..=reach {
            for dy in -reach..=reach {
                for dz in -reach..=reach {
                    if let Some(ids) = self.cells.get(&[c[0] + dx, c[1] + dy, c[2] + dz]) {
                        ids.iter().for_each(|&i| f(i));
                    }
                }
            }
        }
    }

    /// Whether any stored point satisfies `pred` among the cells near `q`.
    pub fn any_near<F: FnMut(usize) -> bool>(&self, q: &Vec3, radius: f64, mut pred: F) -> bool {
        let reach = (radius / self.cell).ceil() as i64;
        let c = self.key(q);
        for dx in -reach..=reach {
            for dy in -reach..=reach {
                for dz in -reach..=reach {
                    if let Some(ids) = self.cells.get(&[c[0] + dx, c[1] + dy, c[2] + dz]) {
                        if ids.iter().any(|&i| pred(i)) {
                            return true;
                        }
                    }
                }
            }
        }
        false
    }
}
