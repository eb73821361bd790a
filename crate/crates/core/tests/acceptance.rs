//! Acceptance suite: one line per criterion, nonzero exit on any failure.

use std::collections::{BTreeSet, HashSet};
use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use llab::cdp::engine::bound_formula;
use llab::cdp::{
    bound_2d, cdp_iterate, davenport_select, pichorides_lhs, Bound2dConfig, CdpCertificate, CdpConfig, Selection,
    SelectionState,
};
use llab::freiman::{bound_3d_via_embedding, canonical_embedding, image_set};
use llab::lattice::{self, LatticeSet};
use llab::norms::{l1_estimate, l1_grid, L1Options};
use llab::testfns::exponential_basis;
use llab::{grid, Error};

type Outcome = Result<String, String>;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn random_set(rng: &mut ChaCha8Rng, dim: usize, max_len: usize, coord: i64) -> LatticeSet {
    let len = rng.gen_range(1..=max_len);
    let pts: Vec<[i64; 3]> = (0..len)
        .map(|_| {
            let mut p = [0i64; 3];
            for c in p.iter_mut().take(dim) {
                *c = rng.gen_range(0..=coord);
            }
            p
        })
        .collect();
    LatticeSet::collapsed(dim, pts).unwrap()
}

fn parseval() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst = 0.0f64;
    for i in 0..50 {
        let a = random_set(&mut rng, 1 + i % 3, 200, 64);
        let dims: Vec<usize> = (0..a.dim())
            .map(|k| grid::pow2_above((a.hi()[k] - a.lo()[k]) as u64))
            .collect();
        let f = grid::evaluate_fft(&a, &dims).map_err(|e| e.to_string())?;
        let ip = grid::inner_product(&f, &f).map_err(|e| e.to_string())?;
        if !ip.exact {
            return Err(format!("set {i} grid {dims:?} not exact"));
        }
        worst = worst.max((ip.value.re - a.len() as f64).abs() / a.len() as f64);
    }
    check(worst <= 1e-9, format!("max relative deviation {worst:.2e}"))
}

fn closed_form() -> Outcome {
    let a = LatticeSet::from_values([0, 1]).unwrap();
    let est = l1_estimate(&a, &L1Options::default()).map_err(|e| e.to_string())?;
    let exact = 4.0 / std::f64::consts::PI;
    let rel = (est.value - exact).abs() / exact;
    check(rel <= 1e-4, format!("value {:.10}, relative error {rel:.2e}", est.value))
}

fn cube_factorization() -> Outcome {
    let one = grid::evaluate_fft(&lattice::gen_cube(8, 1).unwrap(), &[64]).unwrap();
    let v1 = l1_grid(&one);
    let mut details = Vec::new();
    let mut ok = true;
    for d in [2usize, 3] {
        let f = grid::evaluate_fft(&lattice::gen_cube(8, d).unwrap(), &vec![64; d]).unwrap();
        let vd = l1_grid(&f);
        let dev = (vd - v1.powi(d as i32)).abs();
        ok &= dev <= 1e-9;
        details.push(format!("d={d}: |diff| {dev:.1e}"));
    }
    check(ok, details.join(", "))
}

fn dirichlet_growth() -> Outcome {
    let ns = [16i64, 64, 256, 1024];
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for &n in &ns {
        let est = l1_estimate(&lattice::gen_ap(1, 1, n).unwrap(), &L1Options::default()).map_err(|e| e.to_string())?;
        xs.push((n as f64).ln());
        ys.push(est.value);
    }
    let mx = xs.iter().sum::<f64>() / 4.0;
    let my = ys.iter().sum::<f64>() / 4.0;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let slope = sxy / sxx;
    let rel = (slope - 0.4053).abs() / 0.4053;
    check(rel <= 0.1, format!("slope {slope:.4} ({:.1}% off), L1 = {ys:.4?}", 100.0 * rel))
}

fn pichorides() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst = f64::NEG_INFINITY;
    for _ in 0..100_000 {
        let t: f64 = rng.gen_range(100.0..1e4);
        let r = t * t / 2.0;
        let p = rng.gen_range(-t / 2.0..=r);
        let qmax = (r * r - p * p).max(0.0).sqrt();
        let q = rng.gen_range(-1.0..=1.0) * qmax;
        worst = worst.max(pichorides_lhs(t, p, q).map_err(|e| e.to_string())?);
    }
    check(worst <= 1.0 + 1e-12, format!("max lhs {worst:.12}"))
}

/// Independent exclusion check: p + (m_α − m_β) + (m_γ − m_δ) ∉ E.
fn excluded(e: &HashSet<i64>, s: &BTreeSet<i64>, m: &[i64]) -> bool {
    let t = m.len();
    for &p in s {
        for a in 0..t {
            for b in a..t {
                for g in 0..t {
                    for d in g + 1..t {
                        if e.contains(&(p + (m[a] - m[b]) + (m[g] - m[d]))) {
                            return false;
                        }
                    }
                }
            }
        }
    }
    true
}

/// Replays S from the recorded picks and re-checks every round.
fn rounds_verify(cert: &CdpCertificate) -> bool {
    let e: HashSet<i64> = cert.labels.iter().copied().collect();
    let mut s: BTreeSet<i64> = [cert.labels[0]].into_iter().collect();
    for r in &cert.rounds {
        if !excluded(&e, &s, &r.picks) {
            return false;
        }
        let mut u = BTreeSet::new();
        for &p in &s {
            for &a in &r.picks {
                for &b in &r.picks {
                    if a != b {
                        u.insert(p + a - b);
                    }
                }
            }
        }
        s.extend(r.picks.iter().copied());
        s.extend(u);
    }
    true
}

fn exp_run(values: &[i64], t: usize) -> CdpCertificate {
    let e = LatticeSet::from_values(values.iter().copied()).unwrap();
    let span = e.max_abs()[0];
    let g = grid::pow2_above((2 * t as u64 + 1) * span);
    let f = grid::evaluate_fft(&e, &[g]).unwrap();
    cdp_iterate(&f, &exponential_basis(&e).unwrap(), 1.0, &CdpConfig::default().with_t(t)).unwrap()
}

fn davenport() -> Outcome {
    // Engine-accepted rounds on several label sets.
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut certs = vec![
        exp_run(&(1..=10).map(|j| 1i64 << j).collect::<Vec<_>>(), 2),
        exp_run(&(1..=16).map(|j| 1i64 << j).collect::<Vec<_>>(), 2),
        exp_run(&(1..=12).map(|j| 3i64.pow(j)).collect::<Vec<_>>(), 3),
    ];
    for _ in 0..3 {
        let mut pool: Vec<i64> = (1..2000).collect();
        pool.shuffle(&mut rng);
        certs.push(exp_run(&pool[..20], 2));
    }
    let rounds: usize = certs.iter().map(|c| c.rounds.len()).sum();
    if !certs.iter().all(rounds_verify) {
        return Err("an accepted T_i violates the exclusion".into());
    }

    // Greedy against an exhaustive oracle on E = {2, …, 2^10}, S = {1024}.
    let labels: Vec<i64> = (1..=10).map(|j| 1i64 << j).collect();
    let e: HashSet<i64> = labels.iter().copied().collect();
    let s: BTreeSet<i64> = [1024].into_iter().collect();
    let mut feasible = BTreeSet::new();
    for &m1 in &labels {
        for &m2 in &labels {
            if m1 != m2 && excluded(&e, &s, &[m1, m2]) {
                feasible.insert((m1, m2));
            }
        }
    }
    let state = SelectionState::new(&labels, 2).map_err(|e| e.to_string())?;
    let greedy = match davenport_select(&state) {
        Selection::Picked(p) => Some((p[0], p[1])),
        Selection::Failure { .. } => None,
    };
    let agree = match greedy {
        Some(pair) => feasible.contains(&pair),
        None => feasible.is_empty(),
    };
    check(
        agree,
        format!(
            "{rounds} accepted rounds re-verified; greedy {greedy:?}, oracle finds {} feasible ordered pairs",
            feasible.len()
        ),
    )
}

fn cdp_ledger() -> Outcome {
    let e = lattice::gen_lacunary(16).unwrap();
    let g = grid::pow2_above(5 * 65536);
    let f = grid::evaluate_fft(&e, &[g]).unwrap();
    let cert = cdp_iterate(&f, &exponential_basis(&e).unwrap(), 1.0, &CdpConfig::default().with_t(2))
        .map_err(|e| e.to_string())?;
    let formula = bound_formula(1.0, cert.t, cert.iterations);
    let residual = cert.rounds.iter().map(|r| r.middle_residual).fold(0.0, f64::max);
    let sup = cert
        .rounds
        .iter()
        .map(|r| r.sampled_max)
        .fold(cert.sup_audit.spot_max, f64::max);
    let ok = cert.iterations >= 1 && cert.measured_final >= formula && residual <= 1e-8 && sup <= 1.0 + 1e-9;
    check(
        ok,
        format!(
            "i = {}, measured {:.6} ≥ formula {:.6}, residual {residual:.1e}, sup {sup:.12}",
            cert.iterations, cert.measured_final, formula
        ),
    )
}

fn planar_soundness() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut worst_margin = f64::INFINITY;
    for i in 0..10 {
        let mut labels: Vec<i64> = (1..=256).collect();
        labels.shuffle(&mut rng);
        let mut pts = Vec::new();
        for &y in &labels[..16] {
            let mut xs: Vec<i64> = (1..=48).collect();
            xs.shuffle(&mut rng);
            pts.extend(xs[..16].iter().map(|&x| vec![x, y]));
        }
        let a = LatticeSet::from_coords(2, &pts).unwrap();
        let mut cfg = Bound2dConfig::default();
        cfg.engine = cfg.engine.with_t(2);
        let rep = bound_2d(&a, &cfg).map_err(|e| format!("set {i}: {e}"))?;
        if (rep.r, rep.s) != (16, 16) {
            return Err(format!("set {i}: r = {}, s = {}", rep.r, rep.s));
        }
        let est = l1_estimate(&a, &L1Options::default().with_max_samples(1 << 24)).map_err(|e| e.to_string())?;
        let margin = est.value + est.error_bound - rep.certificate.lower_bound();
        worst_margin = worst_margin.min(margin);
    }
    check(worst_margin >= 0.0, format!("smallest margin {worst_margin:.4}"))
}

fn three_level_pipeline() -> Outcome {
    let pts: Vec<Vec<i64>> = (0..27).map(|i| vec![i % 3, (i / 3) % 3, i / 9]).collect();
    let a = LatticeSet::from_coords(3, &pts).unwrap();
    let cfg = CdpConfig::default().with_t(2).with_max_rounds(1);
    let map = canonical_embedding(&[3, 3, 3], 62).map_err(|e| e.to_string())?;
    let rep = bound_3d_via_embedding(&a, &map, &cfg).map_err(|e| e.to_string())?;
    let image = image_set(&map, &a).map_err(|e| e.to_string())?;
    let est = l1_estimate(&image, &L1Options::default()).map_err(|e| e.to_string())?;
    let cert = &rep.certificate;
    let sound = cert.certified_bound <= est.value && cert.lower_bound() <= est.value + est.error_bound;
    let low = canonical_embedding(&[3, 3, 3], (rep.delta - 1) as u32).map_err(|e| e.to_string())?;
    let refused = matches!(
        bound_3d_via_embedding(&a, &low, &cfg),
        Err(Error::DegreeInsufficient { delta, .. }) if delta == rep.delta
    );
    check(
        sound && refused,
        format!(
            "δ = {}, certified {:.4} ≤ ‖F‖₁ ≈ {:.4} ± {:.1e}; refusal at k = {}: {refused}",
            rep.delta,
            cert.certified_bound,
            est.value,
            est.error_bound,
            rep.delta - 1
        ),
    )
}

fn constructions() -> Outcome {
    let (a, rep) = lattice::gen_prime_residue(3).map_err(|e| e.to_string())?;
    let ok_prime = a.values() == vec![1, 4, 6, 7, 10, 11, 13] && 4 * a.len() as u64 >= rep.modulus;
    let mut ok_lac = true;
    for n in 3..=40 {
        let v = lattice::gen_lacunary(n).map_err(|e| e.to_string())?.values();
        ok_lac &= (1..v.len() - 1).all(|i| v[i + 1] == v[i] + 2 * (v[i] - v[i - 1]));
    }
    check(
        ok_prime && ok_lac,
        format!("|A| = {} with N = {}; recurrence holds for N ≤ 40: {ok_lac}", a.len(), rep.modulus),
    )
}

fn removal() -> Outcome {
    let n = 4096i64;
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut all: Vec<i64> = (1..=n).collect();
    all.shuffle(&mut rng);
    let removed: HashSet<i64> = all[..140].iter().copied().collect();
    let a = LatticeSet::from_values((1..=n).filter(|x| !removed.contains(x))).unwrap();
    let d = lattice::gen_ap(1, 1, n).unwrap();
    let opts = L1Options::default();
    let ea = l1_estimate(&a, &opts).map_err(|e| e.to_string())?;
    let ed = l1_estimate(&d, &opts).map_err(|e| e.to_string())?;
    let rhs = ed.value + ed.error_bound + 140f64.sqrt();
    check(
        ea.value - ea.error_bound <= rhs,
        format!("{:.4} ± {:.1e} ≤ {:.4} ± {:.1e} + √140", ea.value, ea.error_bound, ed.value, ed.error_bound),
    )
}

fn main() {
    let criteria: [(&str, Duration, fn() -> Outcome); 11] = [
        ("Parseval suite", Duration::from_secs(10), parseval),
        ("closed-form L1 of {0,1}", Duration::from_secs(1), closed_form),
        ("cube factorization", Duration::from_secs(30), cube_factorization),
        ("Dirichlet growth", Duration::from_secs(120), dirichlet_growth),
        ("Pichorides bound", Duration::from_secs(5), pichorides),
        ("Davenport certificates", Duration::from_secs(10), davenport),
        ("CDP ledger", Duration::from_secs(60), cdp_ledger),
        ("2-D soundness", Duration::from_secs(300), planar_soundness),
        ("three-level pipeline", Duration::from_secs(600), three_level_pipeline),
        ("example constructions", Duration::from_secs(1), constructions),
        ("removal example", Duration::from_secs(120), removal),
    ];
    let mut failed = 0;
    for (i, (name, limit, run)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = run();
        let elapsed = start.elapsed();
        let in_time = elapsed <= *limit;
        let (pass, detail) = match outcome {
            Ok(d) => (in_time, d),
            Err(d) => (false, d),
        };
        if !pass {
            failed += 1;
        }
        println!(
            "criterion {:>2} {} {}: {} [{:.2} s, limit {} s{}]",
            i + 1,
            if pass { "PASS" } else { "FAIL" },
            name,
            detail,
            elapsed.as_secs_f64(),
            limit.as_secs(),
            if in_time { "" } else { ", over time" }
        );
    }
    println!("acceptance: {} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
