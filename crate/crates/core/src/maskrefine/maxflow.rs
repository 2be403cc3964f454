//! Boykov–Kolmogorov augmenting-path max-flow on a regular grid.
//!
//! Nodes are pixels in row-major order. Each node owns a fixed block of arc
//! slots, one per neighbor direction, so an arc id is `node * K + dir` and its
//! reverse arc lives at `neighbor * K + opposite(dir)`. Two search trees grow
//! from the source and the sink; orphaned subtrees are re-adopted instead of
//! rebuilt, which keeps the work per augmentation small on image grids.

use alloc::collections::VecDeque;
use alloc::vec;
use alloc::vec::Vec;

use super::energy::GridEnergy;
use crate::image::BinaryMask;

const NONE: u32 = u32::MAX;
const TERMINAL: u32 = u32::MAX - 1;
const ORPHAN: u32 = u32::MAX - 2;

/// Direction offsets; entries `2k` and `2k + 1` are opposite.
const OFFSETS: [(isize, isize); 8] = [
    (1, 0),
    (-1, 0),
    (0, 1),
    (0, -1),
    (1, 1),
    (-1, -1),
    (-1, 1),
    (1, -1),
];

pub(crate) struct GridFlow {
    width: usize,
    height: usize,
    dirs: usize,
    r_cap: Vec<f64>,
    /// Positive: residual from the source; negative: residual to the sink.
    tr_cap: Vec<f64>,
    parent: Vec<u32>,
    is_sink: Vec<bool>,
    ts: Vec<u32>,
    dist: Vec<u32>,
    active: VecDeque<u32>,
    in_active: Vec<bool>,
    orphans: VecDeque<u32>,
    time: u32,
    flow: f64,
}

impl GridFlow {
    /// Graph for `energy`: face is the sink side. A face pixel cuts its source
    /// arc (capacity `-ln p`), a non-face pixel cuts its sink arc.
    pub(crate) fn from_energy(e: &GridEnergy) -> Self {
        let (w, h) = (e.width, e.height);
        let n = w * h;
        let dirs = if e.down_right.is_empty() { 4 } else { 8 };
        let mut g = GridFlow {
            width: w,
            height: h,
            dirs,
            r_cap: vec![0.0; n * dirs],
            tr_cap: vec![0.0; n],
            parent: vec![NONE; n],
            is_sink: vec![false; n],
            ts: vec![0; n],
            dist: vec![0; n],
            active: VecDeque::with_capacity(n),
            in_active: vec![false; n],
            orphans: VecDeque::new(),
            time: 0,
            flow: 0.0,
        };
        for i in 0..n {
            let cap_s = e.face_cost[i];
            let cap_t = e.background_cost[i];
            g.flow += cap_s.min(cap_t);
            g.tr_cap[i] = cap_s - cap_t;
        }
        let lam = e.lambda;
        for y in 0..h {
            for x in 0..w {
                let i = y * w + x;
                if x + 1 < w {
                    g.set_pair(i, 0, lam * e.right[i]);
                }
                if y + 1 < h {
                    g.set_pair(i, 2, lam * e.down[i]);
                }
                if dirs == 8 && y + 1 < h {
                    if x + 1 < w {
                        g.set_pair(i, 4, lam * e.down_right[i]);
                    }
                    if x > 0 {
                        g.set_pair(i, 6, lam * e.down_left[i]);
                    }
                }
            }
        }
        g
    }

    fn set_pair(&mut self, node: usize, dir: usize, cap: f64) {
        let j = self.neighbor(node, dir).expect("pair inside grid");
        self.r_cap[node * self.dirs + dir] = cap;
        self.r_cap[j * self.dirs + (dir ^ 1)] = cap;
    }

    #[inline]
    fn neighbor(&self, node: usize, dir: usize) -> Option<usize> {
        let (dx, dy) = OFFSETS[dir];
        let x = (node % self.width) as isize + dx;
        let y = (node / self.width) as isize + dy;
        if x < 0 || y < 0 || x >= self.width as isize || y >= self.height as isize {
            None
        } else {
            Some(y as usize * self.width + x as usize)
        }
    }

    #[inline]
    fn head(&self, arc: u32) -> usize {
        let a = arc as usize;
        let (dx, dy) = OFFSETS[a % self.dirs];
        let node = a / self.dirs;
        ((node / self.width) as isize + dy) as usize * self.width
            + ((node % self.width) as isize + dx) as usize
    }

    #[inline]
    fn sister(&self, arc: u32) -> u32 {
        let a = arc as usize;
        (self.head(arc) * self.dirs + ((a % self.dirs) ^ 1)) as u32
    }

    #[inline]
    fn arc(&self, node: usize, dir: usize) -> u32 {
        (node * self.dirs + dir) as u32
    }

    fn activate(&mut self, i: usize) {
        if !self.in_active[i] {
            self.in_active[i] = true;
            self.active.push_back(i as u32);
        }
    }

    fn next_active(&mut self) -> Option<usize> {
        while let Some(i) = self.active.pop_front() {
            let i = i as usize;
            self.in_active[i] = false;
            if self.parent[i] != NONE {
                return Some(i);
            }
        }
        None
    }

    pub(crate) fn run(&mut self) -> f64 {
        let n = self.width * self.height;
        for i in 0..n {
            if self.tr_cap[i] > 0.0 {
                self.parent[i] = TERMINAL;
                self.is_sink[i] = false;
                self.dist[i] = 1;
                self.activate(i);
            } else if self.tr_cap[i] < 0.0 {
                self.parent[i] = TERMINAL;
                self.is_sink[i] = true;
                self.dist[i] = 1;
                self.activate(i);
            }
        }

        let mut current: Option<usize> = None;
        loop {
            let i = match current.take() {
                Some(i) if self.parent[i] != NONE => i,
                _ => match self.next_active() {
                    Some(i) => i,
                    None => break,
                },
            };
            let path = self.grow(i);
            self.time = self.time.wrapping_add(1);
            if let Some(a) = path {
                current = Some(i);
                self.augment(a);
                self.adopt_orphans();
            }
        }
        self.flow
    }

    /// Grows the tree containing `i`; returns an arc from the source tree
    /// into the sink tree when the trees touch.
    fn grow(&mut self, i: usize) -> Option<u32> {
        for dir in 0..self.dirs {
            let Some(j) = self.neighbor(i, dir) else {
                continue;
            };
            let a = self.arc(i, dir);
            let back = self.arc(j, dir ^ 1);
            if !self.is_sink[i] {
                if self.r_cap[a as usize] <= 0.0 {
                    continue;
                }
                if self.parent[j] == NONE {
                    self.is_sink[j] = false;
                    self.parent[j] = back;
                    self.ts[j] = self.ts[i];
                    self.dist[j] = self.dist[i] + 1;
                    self.activate(j);
                } else if self.is_sink[j] {
                    return Some(a);
                } else if self.ts[j] <= self.ts[i] && self.dist[j] > self.dist[i] {
                    self.parent[j] = back;
                    self.ts[j] = self.ts[i];
                    self.dist[j] = self.dist[i] + 1;
                }
            } else {
                if self.r_cap[back as usize] <= 0.0 {
                    continue;
                }
                if self.parent[j] == NONE {
                    self.is_sink[j] = true;
                    self.parent[j] = back;
                    self.ts[j] = self.ts[i];
                    self.dist[j] = self.dist[i] + 1;
                    self.activate(j);
                } else if !self.is_sink[j] {
                    return Some(back);
                } else if self.ts[j] <= self.ts[i] && self.dist[j] > self.dist[i] {
                    self.parent[j] = back;
                    self.ts[j] = self.ts[i];
                    self.dist[j] = self.dist[i] + 1;
                }
            }
        }
        None
    }

    fn orphan(&mut self, i: usize) {
        self.parent[i] = ORPHAN;
        self.orphans.push_front(i as u32);
    }

    fn augment(&mut self, middle: u32) {
        let tail = middle as usize / self.dirs;
        let head = self.head(middle);

        let mut b = self.r_cap[middle as usize];
        let mut i = tail;
        loop {
            let pa = self.parent[i];
            if pa == TERMINAL {
                break;
            }
            b = b.min(self.r_cap[self.sister(pa) as usize]);
            i = self.head(pa);
        }
        b = b.min(self.tr_cap[i]);
        let mut i = head;
        loop {
            let pa = self.parent[i];
            if pa == TERMINAL {
                break;
            }
            b = b.min(self.r_cap[pa as usize]);
            i = self.head(pa);
        }
        b = b.min(-self.tr_cap[i]);

        let sm = self.sister(middle) as usize;
        self.r_cap[sm] += b;
        self.r_cap[middle as usize] -= b;

        let mut i = tail;
        loop {
            let pa = self.parent[i];
            if pa == TERMINAL {
                break;
            }
            let sa = self.sister(pa) as usize;
            let next = self.head(pa);
            self.r_cap[pa as usize] += b;
            self.r_cap[sa] -= b;
            if self.r_cap[sa] <= 0.0 {
                self.orphan(i);
            }
            i = next;
        }
        self.tr_cap[i] -= b;
        if self.tr_cap[i] <= 0.0 {
            self.orphan(i);
        }

        let mut i = head;
        loop {
            let pa = self.parent[i];
            if pa == TERMINAL {
                break;
            }
            let sa = self.sister(pa) as usize;
            let next = self.head(pa);
            self.r_cap[sa] += b;
            self.r_cap[pa as usize] -= b;
            if self.r_cap[pa as usize] <= 0.0 {
                self.orphan(i);
            }
            i = next;
        }
        self.tr_cap[i] += b;
        if self.tr_cap[i] >= 0.0 {
            self.orphan(i);
        }

        self.flow += b;
    }

    fn adopt_orphans(&mut self) {
        while let Some(i) = self.orphans.pop_front() {
            self.adopt(i as usize);
        }
    }

    /// Depth of `j`'s root path if it reaches a terminal, marking the path
    /// with the current timestamp.
    fn origin_depth(&mut self, start: usize) -> Option<u32> {
        let mut j = start;
        let mut d: u32 = 0;
        loop {
            if self.ts[j] == self.time {
                d += self.dist[j];
                break;
            }
            let a = self.parent[j];
            d += 1;
            if a == TERMINAL {
                self.ts[j] = self.time;
                self.dist[j] = 1;
                break;
            }
            if a == ORPHAN || a == NONE {
                return None;
            }
            j = self.head(a);
        }
        let mut j = start;
        let mut k = d;
        while self.ts[j] != self.time {
            self.ts[j] = self.time;
            self.dist[j] = k;
            k -= 1;
            j = self.head(self.parent[j]);
        }
        Some(d)
    }

    fn adopt(&mut self, i: usize) {
        let sink = self.is_sink[i];
        let mut best: Option<(u32, u32)> = None;
        for dir in 0..self.dirs {
            let Some(j) = self.neighbor(i, dir) else {
                continue;
            };
            let a0 = self.arc(i, dir);
            let back = self.arc(j, dir ^ 1);
            let usable = if sink {
                self.r_cap[a0 as usize] > 0.0
            } else {
                self.r_cap[back as usize] > 0.0
            };
            if !usable || self.is_sink[j] != sink {
                continue;
            }
            let pj = self.parent[j];
            if pj == NONE || pj == ORPHAN {
                continue;
            }
            if let Some(d) = self.origin_depth(j) {
                if best.map_or(true, |(_, bd)| d < bd) {
                    best = Some((a0, d));
                }
            }
        }
        if let Some((a0, d)) = best {
            self.parent[i] = a0;
            self.ts[i] = self.time;
            self.dist[i] = d + 1;
            return;
        }

        // No valid parent: `i` becomes free and its children become orphans.
        self.parent[i] = NONE;
        for dir in 0..self.dirs {
            let Some(j) = self.neighbor(i, dir) else {
                continue;
            };
            if self.is_sink[j] != sink {
                continue;
            }
            let pj = self.parent[j];
            if pj == NONE {
                continue;
            }
            let a0 = self.arc(i, dir);
            let back = self.arc(j, dir ^ 1);
            let feeds = if sink {
                self.r_cap[a0 as usize] > 0.0
            } else {
                self.r_cap[back as usize] > 0.0
            };
            if feeds {
                self.activate(j);
            }
            if pj != TERMINAL && pj != ORPHAN && self.head(pj) == i {
                self.orphan_rear(j);
            }
        }
    }

    fn orphan_rear(&mut self, j: usize) {
        self.parent[j] = ORPHAN;
        self.orphans.push_back(j as u32);
    }

    /// Face labels after [`run`]: everything outside the source tree. This is
    /// the minimum cut with the largest sink side, so ties resolve to face.
    pub(crate) fn labels(&self) -> BinaryMask {
        let data = (0..self.width * self.height)
            .map(|i| self.parent[i] == NONE || self.is_sink[i])
            .collect();
        BinaryMask::from_vec(self.width, self.height, data).expect("grid-sized label buffer")
    }
}
