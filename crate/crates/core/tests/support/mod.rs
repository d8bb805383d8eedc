//! Reference implementations used only by tests. Nothing here calls into the
//! library's numerical code.
#![allow(dead_code, clippy::excessive_precision, clippy::needless_range_loop)]

use num::rational::BigRational;
use num::{FromPrimitive, ToPrimitive, Zero};

const XGK: [f64; 8] = [
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144845693013,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
    0.0,
];
const WGK: [f64; 8] = [
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714,
];
const WG: [f64; 4] = [
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327,
];

fn gk15(f: &impl Fn(f64) -> f64, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut k = fc * WGK[7];
    let mut g = fc * WG[3];
    for i in 0..7 {
        let dx = h * XGK[i];
        let s = f(c - dx) + f(c + dx);
        k += WGK[i] * s;
        if i % 2 == 1 {
            g += WG[i / 2] * s;
        }
    }
    (k * h, ((k - g) * h).abs())
}

/// Globally adaptive Gauss-Kronrod (7/15) quadrature.
pub fn integrate(f: impl Fn(f64) -> f64, a: f64, b: f64, rel_tol: f64) -> f64 {
    let mut parts = vec![(a, b, gk15(&f, a, b))];
    for _ in 0..5000 {
        let total: f64 = parts.iter().map(|p| p.2 .0).sum();
        let err: f64 = parts.iter().map(|p| p.2 .1).sum();
        if err <= rel_tol * total.abs() || err < 1e-300 {
            break;
        }
        let worst = parts
            .iter()
            .enumerate()
            .max_by(|x, y| x.1 .2 .1.total_cmp(&y.1 .2 .1))
            .map(|(i, _)| i)
            .unwrap();
        let (l, r, _) = parts.swap_remove(worst);
        let m = 0.5 * (l + r);
        parts.push((l, m, gk15(&f, l, m)));
        parts.push((m, r, gk15(&f, m, r)));
    }
    parts.iter().map(|p| p.2 .0).sum()
}

/// `int_0^z t^(a-1) (1-t)^(b-1) dt` with `t = u^2` (smooth at 0 for a >= 1/2).
fn beta_left(z: f64, a: f64, b: f64) -> f64 {
    integrate(
        |u| 2.0 * u.powf(2.0 * a - 1.0) * (1.0 - u * u).powf(b - 1.0),
        0.0,
        z.sqrt(),
        1e-15,
    )
}

/// `int_z^1 ...` with `t = 1 - s^2` (smooth at 1 for b >= 1/2).
fn beta_right(z: f64, a: f64, b: f64) -> f64 {
    integrate(
        |s| 2.0 * s.powf(2.0 * b - 1.0) * (1.0 - s * s).powf(a - 1.0),
        0.0,
        (1.0 - z).sqrt(),
        1e-15,
    )
}

/// F(d1, d2) CDF by quadrature of the beta density, normalised by quadrature
/// too, so no special functions are involved.
pub fn f_cdf_quadrature(x: f64, d1: f64, d2: f64) -> f64 {
    if x == 0.0 {
        return 0.0;
    }
    let (a, b) = (d1 / 2.0, d2 / 2.0);
    let z = d1 * x / (d1 * x + d2);
    let total = beta_left(0.5, a, b) + beta_right(0.5, a, b);
    if z <= 0.5 {
        beta_left(z, a, b) / total
    } else {
        1.0 - beta_right(z, a, b) / total
    }
}

fn rational(v: f64) -> BigRational {
    BigRational::from_f64(v).expect("finite")
}

/// Solves `X^T X beta = X^T y` in exact rational arithmetic. `x` is given by
/// columns. Panics if `X^T X` is singular.
pub fn normal_equations_exact(columns: &[Vec<f64>], y: &[f64]) -> Vec<f64> {
    let p = columns.len();
    let cols: Vec<Vec<BigRational>> = columns
        .iter()
        .map(|c| c.iter().map(|&v| rational(v)).collect())
        .collect();
    let ys: Vec<BigRational> = y.iter().map(|&v| rational(v)).collect();
    let dot =
        |a: &[BigRational], b: &[BigRational]| a.iter().zip(b).fold(BigRational::zero(), |acc, (x, y)| acc + x * y);
    let mut m: Vec<Vec<BigRational>> = (0..p)
        .map(|i| {
            let mut row: Vec<BigRational> = (0..p).map(|j| dot(&cols[i], &cols[j])).collect();
            row.push(dot(&cols[i], &ys));
            row
        })
        .collect();
    for k in 0..p {
        let piv = (k..p).find(|&r| !m[r][k].is_zero()).expect("singular normal matrix");
        m.swap(k, piv);
        for r in 0..p {
            if r != k && !m[r][k].is_zero() {
                let factor = &m[r][k] / &m[k][k];
                for c in k..=p {
                    let delta = &factor * &m[k][c];
                    m[r][c] -= delta;
                }
            }
        }
    }
    (0..p)
        .map(|k| (&m[k][p] / &m[k][k]).to_f64().expect("representable"))
        .collect()
}

/// Plain double-precision normal equations with partial pivoting.
pub fn normal_equations_f64(columns: &[Vec<f64>], y: &[f64]) -> Vec<f64> {
    let p = columns.len();
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
    let mut m: Vec<Vec<f64>> = (0..p)
        .map(|i| {
            let mut row: Vec<f64> = (0..p).map(|j| dot(&columns[i], &columns[j])).collect();
            row.push(dot(&columns[i], y));
            row
        })
        .collect();
    for k in 0..p {
        let piv = (k..p).max_by(|&a, &b| m[a][k].abs().total_cmp(&m[b][k].abs())).unwrap();
        m.swap(k, piv);
        for r in k + 1..p {
            let f = m[r][k] / m[k][k];
            for c in k..=p {
                m[r][c] -= f * m[k][c];
            }
        }
    }
    let mut x = vec![0.0; p];
    for k in (0..p).rev() {
        let s: f64 = (k + 1..p).map(|j| m[k][j] * x[j]).sum();
        x[k] = (m[k][p] - s) / m[k][k];
    }
    x
}

/// Small deterministic generator so oracle inputs do not depend on the
/// library's RNG plumbing.
pub struct SplitMix(pub u64);

impl SplitMix {
    pub fn next_u64(&mut self) -> u64 {
        self.0 = self.0.wrapping_add(0x9E37_79B9_7F4A_7C15);
        let mut z = self.0;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }

    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 / (1u64 << 53) as f64
    }

    pub fn range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    pub fn below(&mut self, n: usize) -> usize {
        (self.next_u64() % n as u64) as usize
    }

    pub fn normal(&mut self) -> f64 {
        let u1 = self.uniform().max(1e-300);
        let u2 = self.uniform();
        (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    }
}

/// Random `n x p` matrix (by columns) with singular values spread
/// log-uniformly over `[1, cond]`.
pub fn conditioned_matrix(rng: &mut SplitMix, n: usize, p: usize, cond: f64) -> Vec<Vec<f64>> {
    let u = orthonormal_columns(rng, n, p);
    let v = orthonormal_columns(rng, p, p);
    let s: Vec<f64> = (0..p)
        .map(|k| {
            if p == 1 {
                1.0
            } else {
                cond.powf(k as f64 / (p - 1) as f64)
            }
        })
        .collect();
    // X = U diag(s) V^T, column j = sum_k U_k s_k V[j][k]
    (0..p)
        .map(|j| (0..n).map(|i| (0..p).map(|k| u[k][i] * s[k] * v[k][j]).sum()).collect())
        .collect()
}

fn orthonormal_columns(rng: &mut SplitMix, n: usize, p: usize) -> Vec<Vec<f64>> {
    let mut q: Vec<Vec<f64>> = Vec::with_capacity(p);
    while q.len() < p {
        let mut v: Vec<f64> = (0..n).map(|_| rng.normal()).collect();
        for _ in 0..2 {
            for b in &q {
                let d: f64 = v.iter().zip(b).map(|(x, y)| x * y).sum();
                v.iter_mut().zip(b).for_each(|(x, y)| *x -= d * y);
            }
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-8 {
            v.iter_mut().for_each(|x| *x /= norm);
            q.push(v);
        }
    }
    q
}
