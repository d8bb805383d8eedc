//! Householder QR with column pivoting and the minimum-norm least-squares
//! solve built on it (complete orthogonal decomposition).

/// Relative threshold on `|R_kk| / |R_00|` below which a pivot counts as zero.
pub const RANK_TOLERANCE: f64 = 1e-10;

/// Dense column-major matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct Dense {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Dense {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Dense {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_columns(rows: usize, columns: &[Vec<f64>]) -> Self {
        let mut data = Vec::with_capacity(rows * columns.len());
        for c in columns {
            assert_eq!(c.len(), rows, "column length must equal row count");
            data.extend_from_slice(c);
        }
        Dense {
            rows,
            cols: columns.len(),
            data,
        }
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut m = Dense::zeros(rows, cols);
        for j in 0..cols {
            for i in 0..rows {
                m.data[j * rows + i] = f(i, j);
            }
        }
        m
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[j * self.rows + i]
    }

    #[inline]
    fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[j * self.rows + i] = v;
    }

    pub fn column(&self, j: usize) -> &[f64] {
        &self.data[j * self.rows..(j + 1) * self.rows]
    }

    fn column_mut(&mut self, j: usize) -> &mut [f64] {
        let r = self.rows;
        &mut self.data[j * r..(j + 1) * r]
    }

    fn swap_columns(&mut self, a: usize, b: usize) {
        if a == b {
            return;
        }
        let r = self.rows;
        for i in 0..r {
            self.data.swap(a * r + i, b * r + i);
        }
    }

    /// `X * beta`.
    pub fn mul_vec(&self, beta: &[f64]) -> Vec<f64> {
        assert_eq!(beta.len(), self.cols);
        let mut out = vec![0.0; self.rows];
        for (j, b) in beta.iter().enumerate() {
            for (o, x) in out.iter_mut().zip(self.column(j)) {
                *o += b * x;
            }
        }
        out
    }

    /// `X^T * v`.
    pub fn tr_mul_vec(&self, v: &[f64]) -> Vec<f64> {
        assert_eq!(v.len(), self.rows);
        (0..self.cols)
            .map(|j| self.column(j).iter().zip(v).map(|(x, y)| x * y).sum())
            .collect()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

/// Elementary reflector `H = I - tau * v v^T` acting on a contiguous tail.
#[derive(Clone, Debug)]
struct Reflector {
    start: usize,
    v: Vec<f64>,
    tau: f64,
}

impl Reflector {
    /// Builds the reflector mapping `u` onto `alpha * e_1`; returns it with `alpha`.
    fn annihilate(start: usize, u: &[f64]) -> (Option<Reflector>, f64) {
        let norm = u.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm == 0.0 {
            return (None, 0.0);
        }
        let alpha = if u[0] >= 0.0 { -norm } else { norm };
        let mut v = u.to_vec();
        v[0] -= alpha;
        let vv: f64 = v.iter().map(|x| x * x).sum();
        if vv == 0.0 {
            return (None, u[0]);
        }
        (
            Some(Reflector {
                start,
                v,
                tau: 2.0 / vv,
            }),
            alpha,
        )
    }

    fn apply(&self, x: &mut [f64]) {
        let tail = &mut x[self.start..self.start + self.v.len()];
        let s: f64 = self.v.iter().zip(tail.iter()).map(|(a, b)| a * b).sum();
        let s = s * self.tau;
        for (t, v) in tail.iter_mut().zip(&self.v) {
            *t -= s * v;
        }
    }
}

/// `A P = Q R` with `|R_00| >= |R_11| >= ...`.
#[derive(Clone, Debug)]
pub struct PivotedQr {
    /// Upper-triangular factor in the leading `min(n, p)` rows.
    r: Dense,
    reflectors: Vec<Option<Reflector>>,
    /// `perm[k]` is the original column placed at position `k`.
    perm: Vec<usize>,
    rank: usize,
}

impl PivotedQr {
    pub fn new(a: &Dense) -> Self {
        let (n, p) = (a.rows(), a.cols());
        let mut r = a.clone();
        let mut perm: Vec<usize> = (0..p).collect();
        let steps = n.min(p);
        let mut reflectors = Vec::with_capacity(steps);

        for k in 0..steps {
            // exact trailing norms; p is small enough that downdating is not worth it
            let pivot = (k..p)
                .map(|j| (j, r.column(j)[k..].iter().map(|x| x * x).sum::<f64>()))
                .fold((k, -1.0), |best, cur| if cur.1 > best.1 { cur } else { best })
                .0;
            r.swap_columns(k, pivot);
            perm.swap(k, pivot);

            let (h, alpha) = Reflector::annihilate(k, &r.column(k)[k..]);
            if let Some(h) = &h {
                let col = r.column_mut(k);
                col[k] = alpha;
                col[k + 1..].iter_mut().for_each(|x| *x = 0.0);
                for j in k + 1..p {
                    h.apply(r.column_mut(j));
                }
            }
            reflectors.push(h);
        }

        let lead = if steps > 0 { r.get(0, 0).abs() } else { 0.0 };
        let rank = if lead == 0.0 {
            0
        } else {
            (0..steps)
                .take_while(|&k| r.get(k, k).abs() > RANK_TOLERANCE * lead)
                .count()
        };

        PivotedQr {
            r,
            reflectors,
            perm,
            rank,
        }
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn permutation(&self) -> &[usize] {
        &self.perm
    }

    /// `Q^T y`.
    fn qt_mul(&self, y: &[f64]) -> Vec<f64> {
        let mut c = y.to_vec();
        for h in self.reflectors.iter().flatten() {
            h.apply(&mut c);
        }
        c
    }

    /// Minimum-norm minimiser of `||A x - y||`, treating pivots past the
    /// numerical rank as zero.
    pub fn solve_min_norm(&self, y: &[f64]) -> Vec<f64> {
        let p = self.r.cols();
        assert_eq!(y.len(), self.r.rows());
        let rank = self.rank;
        let mut x_perm = vec![0.0; p];
        if rank == 0 {
            return x_perm;
        }
        let c = self.qt_mul(y);

        // Leading rank x p block [R11 R12].
        let mut top = Dense::from_fn(rank, p, |i, j| if j >= i { self.r.get(i, j) } else { 0.0 });

        // Fold R12 into R11 with reflectors from the right: [R11 R12] Z = [T 0].
        let mut right: Vec<(usize, Option<Reflector>)> = Vec::new();
        if rank < p {
            for k in (0..rank).rev() {
                let mut u = Vec::with_capacity(1 + p - rank);
                u.push(top.get(k, k));
                u.extend((rank..p).map(|j| top.get(k, j)));
                let (h, _) = Reflector::annihilate(0, &u);
                if let Some(h) = &h {
                    for i in 0..=k {
                        let mut row = Vec::with_capacity(u.len());
                        row.push(top.get(i, k));
                        row.extend((rank..p).map(|j| top.get(i, j)));
                        h.apply(&mut row);
                        top.set(i, k, row[0]);
                        for (off, j) in (rank..p).enumerate() {
                            top.set(i, j, row[off + 1]);
                        }
                    }
                }
                right.push((k, h));
            }
        }

        // Back substitution on the triangular block.
        let mut w = vec![0.0; rank];
        for i in (0..rank).rev() {
            let s: f64 = (i + 1..rank).map(|j| top.get(i, j) * w[j]).sum();
            w[i] = (c[i] - s) / top.get(i, i);
        }
        x_perm[..rank].copy_from_slice(&w);

        // x = H_{r-1} ... H_0 [w; 0]; `right` holds H_{r-1} first.
        for (k, h) in right.iter().rev() {
            if let Some(h) = h {
                let mut u = Vec::with_capacity(1 + p - rank);
                u.push(x_perm[*k]);
                u.extend_from_slice(&x_perm[rank..]);
                h.apply(&mut u);
                x_perm[*k] = u[0];
                x_perm[rank..].copy_from_slice(&u[1..]);
            }
        }

        let mut x = vec![0.0; p];
        for (k, &orig) in self.perm.iter().enumerate() {
            x[orig] = x_perm[k];
        }
        x
    }
}
