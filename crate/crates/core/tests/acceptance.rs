//! Acceptance criteria 1–12. Each test prints one PASS/FAIL line.

use std::io::Write;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use tqot::adversary;
use tqot::ensemble;
use tqot::params::{canonical_eigh, canonical_ensemble, canonicalize_eigenpairs};
use tqot::protocols::{
    choose_rounds, run_protocol, MergeBackend, MessageDB, MessageKind, Payload, QueryPair,
    RunOptions, RunResult,
};
use tqot::qlin::{self, ComplexMatrix, ComplexVector, C64};
use tqot::simkernel::{enumerate_outcomes, trial_rng};
use tqot::verify::{self, SuccessParams};

const TOL: f64 = 1e-9;

fn report(n: u32, name: &str, pass: bool, detail: &str) {
    let line = format!(
        "{} criterion {n:>2} ({name}): {detail}\n",
        if pass { "PASS" } else { "FAIL" }
    );
    // written past the test harness capture so every line shows
    std::io::stdout().lock().write_all(line.as_bytes()).unwrap();
    assert!(pass, "criterion {n} failed: {detail}");
}

fn queries(f: usize, k: usize) -> Vec<QueryPair> {
    (0..1usize << f)
        .map(|m| QueryPair::from_q((0..f).map(|l| ((m >> l) & 1) as u8).collect(), k).unwrap())
        .collect()
}

fn with_query(qp: &QueryPair, merge: MergeBackend) -> RunOptions {
    RunOptions {
        query: Some(qp.clone()),
        merge,
        ..RunOptions::default()
    }
}

/// Runs every (k, q) and every measurement branch; returns the worst fidelity and the count.
fn exhaustive(protocol: u8, db: &MessageDB, merge: MergeBackend, mut check: impl FnMut(&RunResult, usize)) -> (f64, usize) {
    let mut worst: f64 = 1.0;
    let mut cases = 0;
    for k in 1..=db.f() {
        for qp in queries(db.f(), k) {
            let opts = with_query(&qp, merge);
            for (_, r) in enumerate_outcomes(|s| run_protocol(protocol, db, k, s, &opts).unwrap()) {
                check(&r, k);
                worst = worst.min(r.target_fidelity);
                cases += 1;
            }
        }
    }
    (worst, cases)
}

#[test]
fn criterion_01_protocol1_correct() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let mut worst: f64 = 1.0;
    let mut cases = 0;
    for f in 1..=4 {
        for _ in 0..5 {
            let db = MessageDB::random(MessageKind::RealQubitPure, 2, f, &mut rng).unwrap();
            let (w, c) = exhaustive(1, &db, MergeBackend::Ideal, |r, k| {
                let expect = qlin::rotation(match db.payload() {
                    Payload::Angles(a) => a[k - 1][0],
                    _ => unreachable!(),
                })
                .mul_vec(&ComplexVector::basis(2, 0));
                assert!(r.output.as_ref().unwrap().max_abs_diff(&expect.projector()) < TOL);
            });
            worst = worst.min(w);
            cases += c;
        }
    }
    let secs = start.elapsed().as_secs_f64();
    report(
        1,
        "Protocol 1 correctness",
        worst >= 1.0 - TOL && secs < 5.0,
        &format!("{cases} runs, min fidelity {worst:.12}, {secs:.2} s"),
    );
}

/// Phase of `ρ[0][l]` relative to the pure target, i.e. the low-block phase of the output.
fn low_block_phase(rho: &ComplexMatrix, target: &ComplexVector) -> Option<C64> {
    let l = (1..target.dim()).max_by(|&a, &b| target[a].norm().total_cmp(&target[b].norm()))?;
    let denom = target[0] * target[l].conj();
    (denom.norm() > 1e-6).then(|| {
        let p = rho[(0, l)] / denom;
        p / p.norm()
    })
}

#[test]
fn criterion_02_protocol2_correct() {
    let mut rng = ChaCha8Rng::seed_from_u64(102);
    let mut worst: f64 = 1.0;
    let mut cases = 0;
    for d in 2..=5 {
        for f in 1..=3 {
            let db = MessageDB::random(MessageKind::RealQuditPure, d, f, &mut rng).unwrap();
            let (w, c) = exhaustive(2, &db, MergeBackend::Ideal, |_, _| {});
            worst = worst.min(w);
            cases += c;
        }
    }

    // printed merge: magnitudes for every d, and the d = 3 low-block phase against the oracle
    let mut mag: f64 = 0.0;
    let mut phase: f64 = 0.0;
    let mut paper_cases = 0;
    for d in 3..=5 {
        for _ in 0..4 {
            let db = MessageDB::random(MessageKind::RealQuditPure, d, 2, &mut rng).unwrap();
            let angles = match db.payload() {
                Payload::Angles(a) => a.clone(),
                _ => unreachable!(),
            };
            exhaustive(2, &db, MergeBackend::Paper, |r, k| {
                let target = qlin::composed_rotation(&angles[k - 1], d)
                    .unwrap()
                    .mul_vec(&ComplexVector::basis(d, 0));
                let out = r.output.as_ref().unwrap();
                for i in 0..d {
                    mag = mag.max((out[(i, i)].re - target[i].norm_sqr()).abs());
                }
                if d == 3 {
                    let oracle = verify::merge_deviation_oracle(angles[k - 1][1], angles[k - 1][0]).unwrap();
                    if let (Some(got), Some(want)) = (low_block_phase(out, &target), oracle.phase(r.merge_outcomes[0])) {
                        phase = phase.max((got - want).norm());
                    }
                }
                paper_cases += 1;
            });
        }
    }
    report(
        2,
        "Protocol 2 correctness",
        worst >= 1.0 - TOL && mag < TOL && phase < TOL,
        &format!(
            "ideal: {cases} runs, min fidelity {worst:.12}; paper: {paper_cases} runs, magnitude gap {mag:.2e}, low-block phase gap {phase:.2e}"
        ),
    );
}

#[test]
fn criterion_03_protocol3_correct() {
    let mut rng = ChaCha8Rng::seed_from_u64(103);
    let mut worst: f64 = 1.0;
    let mut cases = 0;
    let mut selection_ok = true;
    for d in 2..=8 {
        for f in 1..=3 {
            let diagonal: Vec<ComplexMatrix> = (0..f)
                .map(|_| {
                    let phases: Vec<C64> = (0..d)
                        .map(|_| C64::from_polar(1.0, rand::Rng::gen_range(&mut rng, 0.0..std::f64::consts::TAU)))
                        .collect();
                    ComplexMatrix::diagonal(&phases)
                })
                .collect();
            for family in [diagonal, ensemble::unitary_powers(d, f, &mut rng)] {
                let db = MessageDB::commuting_unitary(family).unwrap();
                let (w, c) = exhaustive(3, &db, MergeBackend::Ideal, |r, k| {
                    let expect = if r.query.q[k - 1] == 1 { ["A", "A'"] } else { ["B", "B'"] };
                    selection_ok &= r.output_registers == expect;
                });
                worst = worst.min(w);
                cases += c;
            }
        }
    }
    report(
        3,
        "Protocol 3 correctness",
        worst >= 1.0 - TOL && selection_ok,
        &format!("{cases} runs, min fidelity {worst:.12}, register selection {selection_ok}"),
    );
}

#[test]
fn criterion_04_protocol4_correct() {
    let mut rng = ChaCha8Rng::seed_from_u64(104);
    let mut worst: f64 = 1.0;
    let mut cases = 0;
    for d in 2..=4 {
        for f in 1..=3 {
            let db = MessageDB::random(MessageKind::ComplexPure, d, f, &mut rng).unwrap();
            let (w, c) = exhaustive(4, &db, MergeBackend::Ideal, |_, _| {});
            worst = worst.min(w);
            cases += c;
        }
    }
    report(
        4,
        "Protocol 4 correctness",
        worst >= 1.0 - TOL,
        &format!("{cases} runs, min fidelity {worst:.12}"),
    );
}

fn one_run(protocol: u8, d: usize, f: usize, rounds: Option<usize>) -> RunResult {
    let mut rng = ChaCha8Rng::seed_from_u64(105);
    let db = MessageDB::random(tqot::protocols::kind_for(protocol).unwrap(), d, f, &mut rng).unwrap();
    let opts = RunOptions {
        rounds,
        ..RunOptions::default()
    };
    run_protocol(protocol, &db, 1, &mut rng, &opts).unwrap()
}

#[test]
fn criterion_05_complexity_table() {
    let (d, f, n) = (4usize, 3usize, 2usize);
    let (df, ff, nf) = (d as f64, f as f64, n as f64);
    let lg = df.log2();
    // (protocol, measured, protocol-literal, table) for upload bits, upload qubits,
    // download qubits and ebits
    let mut rows = Vec::new();
    let mut exact = true;
    let mut push = |p: u8, dd: usize, r: &RunResult, lit: [f64; 4], table: [f64; 4]| {
        let t = &r.transcript;
        let got = [t.upload_bits as f64, t.upload_qubits, t.download_qubits, t.ebits_consumed];
        exact &= got.iter().zip(&lit).all(|(a, b)| (a - b).abs() < 1e-12);
        rows.push(format!("P{p}(d={dd}) measured {got:?} table {table:?}"));
    };
    push(1, 2, &one_run(1, 2, f, None), [2.0 * ff, 0.0, 2.0, 1.0], [2.0 * ff, 0.0, 2.0, 1.0]);
    let p2 = [2.0 * ff, 0.0, 2.0 * (df - 1.0), df - 1.0];
    push(2, d, &one_run(2, d, f, None), p2, p2);
    push(
        3,
        d,
        &one_run(3, d, f, None),
        [2.0 * ff, 0.0, 4.0 * lg, 2.0 * lg],
        [2.0 * ff, 0.0, 2.0 * lg, lg],
    );
    let p4 = [2.0 * ff, 4.0 * lg, 2.0 * (df - 1.0) + 4.0 * lg, df - 1.0];
    push(4, d, &one_run(4, d, f, None), p4, p4);
    let p6 = [2.0 * ff, 0.0, 2.0 * nf * (df - 1.0) + 4.0 * nf * lg, nf * (df - 1.0) + 2.0 * nf * lg];
    push(6, d, &one_run(6, d, f, Some(n)), p6, p6);
    let p7 = [
        2.0 * ff,
        0.0,
        2.0 * nf * (df - 1.0) + 4.0 * nf * lg,
        nf * (df - 1.0) + (2.0 * nf + 1.0) * lg,
    ];
    push(7, d, &one_run(7, d, f, Some(n)), p7, p7);

    // Protocol 5 averages
    let mut averages_ok = true;
    let trials = 100_000;
    for d in [2usize, 3] {
        let dd = d as f64;
        let lg = dd.log2();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let db = MessageDB::random(MessageKind::ComplexPure, d, f, &mut rng).unwrap();
        let sums = (0..trials)
            .into_par_iter()
            .map(|i| {
                let mut rng = trial_rng(55, i as u64);
                let k = rand::Rng::gen_range(&mut rng, 1..=f);
                let t = run_protocol(5, &db, k, &mut rng, &RunOptions::default()).unwrap().transcript;
                [t.upload_bits as f64, t.download_qubits, t.ebits_used]
            })
            .reduce(|| [0.0; 3], |a, b| [a[0] + b[0], a[1] + b[1], a[2] + b[2]]);
        let mean: Vec<f64> = sums.iter().map(|s| s / trials as f64).collect();
        let up = 2.0 * ff + 2.0 * dd;
        let down = (2.0 * (dd - 1.0) + 4.0 * lg) * dd;
        let ebits = dd * (dd - 1.0) + 2.0 * dd * lg;
        averages_ok &= (mean[0] - up).abs() <= 0.02 * up && (mean[1] - down).abs() <= 0.02 * down;
        rows.push(format!(
            "P5(d={d}) mean upload {:.3} vs {up}, download {:.3} vs {down:.3}, ebits used {:.3} vs {ebits:.3}",
            mean[0], mean[1], mean[2]
        ));
    }
    let mut out = std::io::stdout().lock();
    for r in &rows {
        writeln!(out, "    {r}").unwrap();
    }
    drop(out);
    report(
        5,
        "complexity table",
        exact && averages_ok,
        "deterministic rows equal protocol-literal counts (P3 download and ebits differ from the table as listed); Protocol 5 averages within 2%",
    );
}

fn success_within(protocol: u8, d: usize, n: usize, seed: u64) -> (f64, f64, f64, bool) {
    let params = SuccessParams {
        d,
        f: 3,
        rounds: Some(n),
        merge: MergeBackend::Ideal,
    };
    let (rate, _) = verify::estimate_success(protocol, &params, 10_000, seed).unwrap();
    let p = 1.0 - ((d as f64 - 1.0) / d as f64).powi(n as i32);
    let sigma = (p * (1.0 - p) / 10_000.0).sqrt();
    (rate, p, sigma, (rate - p).abs() <= 3.0 * sigma)
}

#[test]
fn criterion_06_round_success_probability() {
    let mut ok = true;
    let mut parts = Vec::new();
    for protocol in [6u8, 7] {
        for (d, n) in [(2, 1), (2, 3), (3, 2), (4, 4)] {
            let (rate, p, sigma, pass) = success_within(protocol, d, n, 600 + d as u64 * 10 + n as u64);
            ok &= pass;
            parts.push(format!("P{protocol}(d={d},n={n}) {rate:.4} vs {p:.4}±{:.4}", 3.0 * sigma));
        }
    }
    ok &= (1.0 - 0.5f64.powi(3) - 0.875).abs() < 1e-15;
    report(6, "success probability of Protocols 6 and 7", ok, &parts.join(", "));
}

#[test]
fn criterion_07_alpha_correctness_and_scaling() {
    let mut ok = true;
    let mut parts = Vec::new();
    for (alpha, d) in [(0.75, 3usize), (0.9, 2usize)] {
        let n = choose_rounds(alpha, d).unwrap();
        let params = SuccessParams {
            d,
            f: 3,
            rounds: Some(n),
            merge: MergeBackend::Ideal,
        };
        let (rate, se) = verify::estimate_success(7, &params, 10_000, 700 + d as u64).unwrap();
        ok &= rate >= alpha - 3.0 * se;
        parts.push(format!("α={alpha}, d={d}: n={n}, rate {rate:.4}"));
    }
    // counters of one run at α = 0.75 for d = 2, 4, 8
    let counters: Vec<(f64, f64)> = [2usize, 4, 8]
        .iter()
        .map(|&d| {
            let n = choose_rounds(0.75, d).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(77);
            let db = MessageDB::random(MessageKind::Mixed, d, 2, &mut rng).unwrap();
            let opts = RunOptions {
                rounds: Some(n),
                stop_after_answer: true,
                ..RunOptions::default()
            };
            let t = run_protocol(7, &db, 1, &mut rng, &opts).unwrap().transcript;
            (t.ebits_consumed, t.download_qubits)
        })
        .collect();
    for (name, pick) in [("ebits", 0usize), ("download", 1)] {
        let v: Vec<f64> = counters.iter().map(|c| if pick == 0 { c.0 } else { c.1 }).collect();
        let per_d2: Vec<f64> = v.iter().zip([4.0, 16.0, 64.0]).map(|(x, s)| x / s).collect();
        let slope = (v[2] / v[1]).log2();
        ok &= per_d2.windows(2).all(|w| (0.5..=2.0).contains(&(w[1] / w[0])));
        ok &= (1.5..=2.5).contains(&slope);
        parts.push(format!("{name} {v:?}, per d² {per_d2:.2?}, slope {slope:.2}"));
    }
    report(7, "α-correctness and O(d²) scaling", ok, &parts.join("; "));
}

#[test]
fn criterion_08_user_secrecy() {
    let mut worst: f64 = 0.0;
    let mut parts = Vec::new();
    for (p, d) in [(1u8, 2usize), (2, 3), (3, 3), (6, 2), (7, 2)] {
        for f in 1..=4 {
            let r = verify::check_user_secrecy(p, d, f).unwrap();
            worst = worst.max(r.max_trace_distance);
            if f == 4 {
                parts.push(format!("P{p}: {} cases", r.enumerated_cases));
            }
        }
    }
    report(
        8,
        "user secrecy",
        worst <= 1e-12,
        &format!("max trace distance {worst:.2e}; {}", parts.join(", ")),
    );
}

#[test]
fn criterion_09_server_secrecy() {
    let mut worst: f64 = 0.0;
    let mut parts = Vec::new();
    for (p, d) in [(1u8, 2usize), (2, 3), (3, 3), (5, 2), (6, 2), (7, 2)] {
        for f in 1..=3 {
            let r = verify::check_server_secrecy(p, d, f).unwrap();
            worst = worst.max(r.max_trace_distance);
            if f == 3 {
                parts.push(format!("P{p}: {} cases", r.enumerated_cases));
            }
        }
    }
    report(
        9,
        "server secrecy (dependence collapse)",
        worst <= TOL,
        &format!("max trace distance {worst:.2e}; {}", parts.join(", ")),
    );
}

#[test]
fn criterion_10_attacks() {
    let mut ok = true;
    let mut parts = Vec::new();
    let mut rng = ChaCha8Rng::seed_from_u64(110);
    for d in 2..=3 {
        let db = MessageDB::random(MessageKind::ComplexPure, d, 3, &mut rng).unwrap();
        let r = adversary::attack_user_p4(&db, 1, 2, MergeBackend::Ideal, 1).unwrap();
        let (of, kf) = (r.output_fidelity.unwrap(), r.kept_fidelity.unwrap());
        ok &= of >= 1.0 - TOL && kf >= 1.0 - TOL;
        parts.push(format!("user-p4 d={d}: output {of:.12}, kept {kf:.12}"));
    }
    for (name, attack) in [
        ("server1-p4", adversary::attack_server1_p4 as fn(usize, usize, usize, u64, MergeBackend, bool) -> _),
        ("server1-p5", adversary::attack_server1_p5),
    ] {
        let r = attack(3, 3, 10_000, 10, MergeBackend::Ideal, false).unwrap();
        let c = attack(3, 3, 10_000, 11, MergeBackend::Ideal, true).unwrap();
        ok &= r.matches_oracle() && c.advantage.abs() <= 3.0 * c.stderr + 1e-12;
        parts.push(format!(
            "{name}: advantage {:.4} vs oracle {:.4} (σ {:.4}), control {:.4} (σ {:.4})",
            r.advantage, r.oracle, r.stderr, c.advantage, c.stderr
        ));
    }
    report(10, "attacks", ok, &parts.join("; "));
}

fn degenerate_density(d: usize, rng: &mut ChaCha8Rng) -> ComplexMatrix {
    let w = ensemble::haar_unitary(d, rng);
    let vals: Vec<C64> = (0..d)
        .map(|i| C64::new(if i < d / 2 { 1.0 } else { 2.0 }, 0.0))
        .collect();
    let m = &(&w * &ComplexMatrix::diagonal(&vals)) * &w.adjoint();
    let tr = m.trace().re;
    m.scale(C64::new(1.0 / tr, 0.0))
}

#[test]
fn criterion_11_decomposition() {
    let mut worst: f64 = 0.0;
    let mut deterministic = true;
    let mut rng = ChaCha8Rng::seed_from_u64(111);
    for d in 2..=4 {
        for i in 0..200 {
            let rho = if i % 4 == 3 {
                degenerate_density(d, &mut rng)
            } else {
                ensemble::random_density(d, &mut rng)
            };
            let e = canonical_ensemble(&rho).unwrap();
            worst = worst.max(e.mixture().max_abs_diff(&rho));
            let first = canonical_eigh(&rho).unwrap();
            deterministic &= canonical_eigh(&rho).unwrap() == first;
            let (vals, vecs) = rho.eigh().unwrap();
            let mut cols: Vec<(f64, ComplexVector)> = (0..d).map(|c| (vals[c], vecs.column(c))).collect();
            cols.reverse();
            cols.rotate_left(i % d);
            let (v, c): (Vec<f64>, Vec<ComplexVector>) = cols.into_iter().unzip();
            deterministic &= canonicalize_eigenpairs(&v, &c) == first;
        }
    }
    report(
        11,
        "decomposition",
        worst <= TOL && deterministic,
        &format!("600 states, max reconstruction gap {worst:.2e}, bit-identical canonical form {deterministic}"),
    );
}

#[test]
fn criterion_12_bell_identity() {
    let mut ok = true;
    let mut worst: f64 = 0.0;
    for d in 2..=5 {
        for seed in 0..5 {
            let r = verify::bell_identity_oracle(d, seed).unwrap();
            ok &= r.pass && r.max_deviation <= 1e-10;
            worst = worst.max(r.max_deviation);
        }
    }
    let id = ComplexMatrix::identity(2);
    ok &= verify::bell_identity_with(&id, &id).unwrap().pass;
    report(
        12,
        "Bell identity",
        ok,
        &format!("d = 2..5, 5 random (A, B) each, max deviation {worst:.2e}"),
    );
}
