//! Random instance generators shared by the kernel and acceptance tests.
#![allow(dead_code)]

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand::SeedableRng;

use satiqc_core::iqc::*;
use satiqc_core::ss::eigenvalues;
use satiqc_core::ss::linalg::Mat;

pub fn rand_mat(rng: &mut ChaCha8Rng, r: usize, c: usize) -> Mat {
    DMatrix::from_fn(r, c, |_, _| rng.random_range(-1.0..1.0))
}

/// LQR data A, B_u, R > 0, L rewritten with an indefinite weight
/// D = Tᵀ diag(R, −I) T, B = [B_u 0] T, C = Tᵀ [0; L] and a random invertible T.
/// Also returns the PBH margin: the smallest σ_min([A − λI, B_u]) or
/// σ_min([A − λI; L]) over eigenvalues λ of A with Re λ ≥ 0.
pub fn lqr_instance(seed: u64) -> (Mat, Mat, Mat, Mat, f64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.random_range(1..=6);
    let mu = rng.random_range(1..=3);
    let ml = rng.random_range(1..=3);
    let a = rand_mat(&mut rng, n, n) * 2.0;
    let bu = rand_mat(&mut rng, n, mu);
    let l = rand_mat(&mut rng, ml, n);
    let g = rand_mat(&mut rng, mu, mu);
    let r = &g * g.transpose() + Mat::identity(mu, mu) * 0.5;
    let m = mu + ml;
    let mut d0 = Mat::zeros(m, m);
    d0.view_mut((0, 0), (mu, mu)).copy_from(&r);
    d0.view_mut((mu, mu), (ml, ml)).copy_from(&(-Mat::identity(ml, ml)));
    let mut b0 = Mat::zeros(n, m);
    b0.view_mut((0, 0), (n, mu)).copy_from(&bu);
    let mut c0 = Mat::zeros(m, n);
    c0.view_mut((mu, 0), (ml, n)).copy_from(&l);
    let t = rand_mat(&mut rng, m, m) * 0.3 + Mat::identity(m, m);
    let margin = pbh_margin(&a, &bu, &l);
    (a, &b0 * &t, t.transpose() * c0, t.transpose() * d0 * t, margin)
}

pub fn pbh_margin(a: &Mat, b: &Mat, l: &Mat) -> f64 {
    let n = a.nrows();
    let cx = |m: &Mat| m.map(|v| Complex64::new(v, 0.0));
    let mut worst = f64::INFINITY;
    for lam in eigenvalues(a).unwrap().iter().filter(|z| z.re >= 0.0) {
        let shifted = cx(a) - DMatrix::<Complex64>::identity(n, n) * *lam;
        let ctrl = DMatrix::from_fn(n, n + b.ncols(), |i, j| if j < n { shifted[(i, j)] } else { Complex64::new(b[(i, j - n)], 0.0) });
        let obs = DMatrix::from_fn(n + l.nrows(), n, |i, j| if i < n { shifted[(i, j)] } else { Complex64::new(l[(i - n, j)], 0.0) });
        for m in [ctrl, obs] {
            worst = worst.min(m.singular_values().min());
        }
    }
    worst
}

pub fn families(alpha: f64) -> Vec<(&'static str, Multiplier)> {
    vec![
        ("popov", make_popov_multiplier(alpha, 0.01).unwrap()),
        ("zames_falb", make_zames_falb_multiplier(alpha, 0.01, &default_zf_filter()).unwrap()),
        ("sector", make_sector_multiplier(0.01).unwrap()),
        ("loop_sector", make_loop_sector_multiplier(alpha, 0.01).unwrap()),
    ]
}

pub fn deadzone(u: f64, ubar: f64) -> f64 {
    u - u.clamp(-ubar, ubar)
}

/// u(t) = Σ a_k sin(ω_k t), so u(0) = 0 and v = u̇ + αu drives 1/(s+α) to u exactly.
pub struct Probe {
    pub amp: Vec<f64>,
    pub freq: Vec<f64>,
    pub ubar: f64,
}

impl Probe {
    pub fn random(rng: &mut ChaCha8Rng) -> Self {
        let k = rng.random_range(1..=3);
        Self {
            amp: (0..k).map(|_| rng.random_range(-3.0..3.0)).collect(),
            freq: (0..k).map(|_| rng.random_range(0.1..5.0)).collect(),
            ubar: rng.random_range(0.05..2.0),
        }
    }

    pub fn u(&self, t: f64) -> f64 {
        self.amp.iter().zip(&self.freq).map(|(a, w)| a * (w * t).sin()).sum()
    }

    pub fn du(&self, t: f64) -> f64 {
        self.amp.iter().zip(&self.freq).map(|(a, w)| a * w * (w * t).cos()).sum()
    }
}


/// The (v, w) probe for a family: the static sector sees u directly, the
/// loop-transformed families see v = u̇ + αu.
pub fn probe_signal(name: &str, p: &Probe, alpha: f64, dt: f64, horizon: f64) -> ProbeSignal {
    if name == "sector" {
        ProbeSignal::from_fn(dt, horizon, |t| p.u(t), |t| deadzone(p.u(t), p.ubar))
    } else {
        ProbeSignal::from_fn(dt, horizon, |t| p.du(t) + alpha * p.u(t), |t| deadzone(p.u(t), p.ubar))
    }
}

pub fn seeded(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
