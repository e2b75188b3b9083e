use crate::error::{Error, Result};
use crate::harness::{Network, Party};
use crate::params::{self, PureParams};
use crate::qlin::{self, ComplexMatrix, ComplexVector, C64};
use crate::simkernel::{fidelity_with_pure, OutcomeSource};

use super::steps::{QubitGroup, QuditPairs, Run};
use super::{
    build_query, check_index, pure_target, MessageDB, MessageKind, QueryPair, RunOptions,
    RunResult, ServerStrategy, UserStrategy,
};

fn resolve_query(
    opts: &RunOptions,
    f: usize,
    k: usize,
    src: &mut impl OutcomeSource,
) -> Result<QueryPair> {
    check_index(k, f)?;
    if let Some(q) = &opts.query {
        if q.q.len() != f || q.q_prime.len() != f {
            return Err(Error::DimensionMismatch(format!("query must have {f} bits")));
        }
        return Ok(q.clone());
    }
    if let UserStrategy::PlusDecoy { k_prime } = opts.strategies.user {
        check_index(k_prime, f)?;
        if k_prime == k {
            return Err(Error::Config("k′ must differ from k".into()));
        }
        let mut q = vec![0; f];
        q[k_prime - 1] = 1;
        return QueryPair::from_q(q, k);
    }
    build_query(f, k, src)
}

fn expect_kind(db: &MessageDB, kinds: &[MessageKind], protocol: u8) -> Result<()> {
    if kinds.contains(&db.kind()) {
        Ok(())
    } else {
        Err(Error::WrongMessageKind(format!(
            "protocol {protocol} cannot serve {:?} messages",
            db.kind()
        )))
    }
}

fn answered<S: OutcomeSource>(run: Run<'_, S>) -> RunResult {
    RunResult {
        output: None,
        output_registers: Vec::new(),
        success: false,
        transcript: run.net.transcript().clone(),
        target_fidelity: 0.0,
        query: run.query,
        merge_outcomes: run.merge_outcomes,
        bell_outcomes: run.bell_outcomes,
        branch: None,
        kept: None,
        declaration: None,
        network: Some(Box::new(run.net)),
    }
}

fn finish<S: OutcomeSource>(
    run: Run<'_, S>,
    output: Option<Vec<String>>,
    target: &ComplexVector,
) -> Result<RunResult> {
    let (out, fid, regs) = match output {
        Some(regs) => {
            let refs: Vec<&str> = regs.iter().map(|s| s.as_str()).collect();
            let rho = run.net.partial_trace(&refs)?;
            let fid = fidelity_with_pure(&rho, target)?.clamp(0.0, 1.0);
            (Some(rho), fid, regs)
        }
        None => (None, 0.0, Vec::new()),
    };
    Ok(RunResult {
        success: out.is_some(),
        output: out,
        output_registers: regs,
        transcript: run.net.transcript().clone(),
        target_fidelity: fid,
        query: run.query,
        merge_outcomes: run.merge_outcomes,
        bell_outcomes: run.bell_outcomes,
        branch: None,
        kept: None,
        declaration: None,
        network: None,
    })
}

fn refs(v: &[String]) -> Vec<&str> {
    v.iter().map(|s| s.as_str()).collect()
}

/// Protocol 1: a real qubit state `R(θ_k)|0⟩` from one shared ebit.
pub fn run_protocol1(
    db: &MessageDB,
    k: usize,
    src: &mut impl OutcomeSource,
    opts: &RunOptions,
) -> Result<RunResult> {
    expect_kind(db, &[MessageKind::RealQubitPure], 1)?;
    run_real(db, k, src, opts, &QubitGroup::single("A"))
}

/// Protocol 2: a real qudit state `R(θ_k¹,…,θ_k^{d−1})|0⟩` from `d−1` parallel Protocol-1
/// answers followed by the merge chain.
pub fn run_protocol2(
    db: &MessageDB,
    k: usize,
    src: &mut impl OutcomeSource,
    opts: &RunOptions,
) -> Result<RunResult> {
    expect_kind(db, &[MessageKind::RealQuditPure, MessageKind::RealQubitPure], 2)?;
    run_real(db, k, src, opts, &QubitGroup::new("A", db.d()))
}

fn run_real(
    db: &MessageDB,
    k: usize,
    src: &mut impl OutcomeSource,
    opts: &RunOptions,
    group: &QubitGroup,
) -> Result<RunResult> {
    let angles = db.angles()?;
    let query = resolve_query(opts, db.f(), k, src)?;
    let mut net = Network::new(opts.record_views);
    net.share_entanglement(&group.pairs())?;
    let mut run = Run::new(net, src, opts, query, k, db.d());
    run.send_query()?;
    run.rotation_answer(group, &|l, j| angles[l][j], false)?;
    run.send_back(&refs(&group.s1), &refs(&group.s2))?;
    run.net.add_round();
    if opts.stop_after_answer {
        return Ok(answered(run));
    }
    run.reconstruct_qubits(group)?;
    let out = run.merge_chain(group, "H")?;
    finish(run, Some(vec![out]), &pure_target(db, k)?)
}

/// Protocol 3: a commuting unitary `U_k`, delivered as `|U_k⟩⟩` on `A⊗A′` or `B⊗B′`.
pub fn run_protocol3(
    db: &MessageDB,
    k: usize,
    src: &mut impl OutcomeSource,
    opts: &RunOptions,
) -> Result<RunResult> {
    expect_kind(db, &[MessageKind::CommutingUnitary], 3)?;
    let us = db.unitaries()?;
    let d = db.d();
    let query = resolve_query(opts, db.f(), k, src)?;
    let mut net = Network::new(opts.record_views);
    net.share_entanglement(&[("A", "A'", d), ("B", "B'", d)])?;
    let mut run = Run::new(net, src, opts, query, k, d);
    run.send_query()?;
    let power = |bits: &[u8], sign: i64, conj: bool| -> ComplexMatrix {
        let mut acc = ComplexMatrix::identity(d);
        for (u, &b) in us.iter().zip(bits) {
            if b == 1 {
                let u = if conj { u.conj() } else { u.clone() };
                acc = &acc * &u.powi(sign);
            }
        }
        acc
    };
    let (q, qp) = (run.query.q.clone(), run.query.q_prime.clone());
    run.net.apply(Party::Server1, &["A"], &power(&q, 1, false))?;
    run.net.apply(Party::Server1, &["B"], &power(&q, -1, false))?;
    run.net.apply(Party::Server2, &["A'"], &power(&qp, 1, true))?;
    run.net.apply(Party::Server2, &["B'"], &power(&qp, -1, true))?;
    run.send_back(&["A", "B"], &["A'", "B'"])?;
    run.net.add_round();
    if opts.stop_after_answer {
        return Ok(answered(run));
    }
    let (keep, drop) = if run.qk() == 1 {
        (["A", "A'"], ["B", "B'"])
    } else {
        (["B", "B'"], ["A", "A'"])
    };
    run.net.discard(Party::User, &drop)?;
    let target = qlin::vectorize(&us[k - 1])?;
    finish(run, Some(keep.iter().map(|s| s.to_string()).collect()), &target)
}

/// Protocol 4: a complex pure state. The real part is retrieved as in Protocol 2, then the
/// user sends the encoded state back and the servers imprint the phases.
pub fn run_protocol4(
    db: &MessageDB,
    k: usize,
    src: &mut impl OutcomeSource,
    opts: &RunOptions,
) -> Result<RunResult> {
    expect_kind(db, &[MessageKind::ComplexPure], 4)?;
    let ps = db.pure_params()?;
    let d = db.d();
    let query = resolve_query(opts, db.f(), k, src)?;
    let group = QubitGroup::new("A", d);
    let mut net = Network::new(opts.record_views);
    net.share_entanglement(&group.pairs())?;
    let mut run = Run::new(net, src, opts, query, k, d);
    run.send_query()?;
    let shift = run.server1() == ServerStrategy::ShiftAndMeasure;
    run.rotation_answer(&group, &|l, j| ps[l].thetas[j], shift)?;
    run.send_back(&refs(&group.s1), &refs(&group.s2))?;
    run.net.add_round();

    run.reconstruct_qubits(&group)?;
    let h = run.merge_chain(&group, "H")?;
    let qudits = QuditPairs::new("A", "B");
    let (act, act2, idle, idle2) = if run.qk() == 1 {
        (&qudits.a, &qudits.a2, &qudits.b, &qudits.b2)
    } else {
        (&qudits.b, &qudits.b2, &qudits.a, &qudits.a2)
    };
    let decoy = match opts.strategies.user {
        UserStrategy::Honest => ComplexMatrix::identity(d).scale(C64::new(1.0 / d as f64, 0.0)),
        UserStrategy::PlusDecoy { .. } => qlin::plus_state(d).projector(),
    };
    run.net.prepare(Party::User, idle, &decoy)?;
    run.net.prepare(Party::User, idle2, &decoy)?;
    run.net
        .apply_isometry(Party::User, &[&h], &qlin::v_isometry(d), &[(act, d), (act2, d)])?;
    run.net
        .send_quantum(Party::User, Party::Server1, &[&qudits.a, &qudits.b])?;
    run.net
        .send_quantum(Party::User, Party::Server2, &[&qudits.a2, &qudits.b2])?;

    let mut declaration = None;
    if matches!(
        run.server1(),
        ServerStrategy::ShiftAndMeasure | ServerStrategy::MeasureOnly
    ) {
        let a = run.net.measure_computational(Party::Server1, &qudits.a, run.src)?;
        let b = run.net.measure_computational(Party::Server1, &qudits.b, run.src)?;
        run.net
            .prepare_pure(Party::Server1, &qudits.a, &ComplexVector::basis(d, a))?;
        run.net
            .prepare_pure(Party::Server1, &qudits.b, &ComplexVector::basis(d, b))?;
        declaration = Some(a != 0 && b != 0);
    }
    run.phase_answer(&qudits, &|l, j| ps[l].phis[j])?;
    run.send_back(&[&qudits.a, &qudits.b], &[&qudits.a2, &qudits.b2])?;
    run.net.add_round();
    if opts.stop_after_answer {
        let mut r = answered(run);
        r.declaration = declaration;
        return Ok(r);
    }

    let mut kept = None;
    if matches!(opts.strategies.user, UserStrategy::PlusDecoy { .. }) {
        kept = Some(run.net.partial_trace(&[idle])?);
    }
    run.net.discard(Party::User, &[idle, idle2])?;
    run.net.apply_partial_isometry(
        Party::User,
        &[act, act2],
        &qlin::v_isometry(d).adjoint(),
        &[("H", d)],
    )?;
    let mut r = finish(run, Some(vec!["H".into()]), &pure_target(db, k)?)?;
    r.kept = kept;
    r.declaration = declaration;
    Ok(r)
}

fn round_labels(r: usize, d: usize) -> (QubitGroup, QuditPairs) {
    (
        QubitGroup::new(&format!("A{r}."), d),
        QuditPairs::new(&format!("A{r}"), &format!("B{r}")),
    )
}

fn round_pairs<'a>(group: &'a QubitGroup, qudits: &'a QuditPairs, d: usize) -> Vec<(&'a str, &'a str, usize)> {
    let mut p = group.pairs();
    p.extend(qudits.pairs(d));
    p
}

fn server_halves(group: &QubitGroup, qudits: &QuditPairs) -> (Vec<String>, Vec<String>) {
    let mut s1 = group.s1.clone();
    s1.extend([qudits.a.clone(), qudits.b.clone()]);
    let mut s2 = group.s2.clone();
    s2.extend([qudits.a2.clone(), qudits.b2.clone()]);
    (s1, s2)
}

/// Protocol 5: adaptive rounds of Protocol-2 answers plus phase teleportation. After each
/// round the user tells both servers whether `a_j = 0`; the run ends on success or at the
/// round cap (`opts.rounds`, default `50·d`).
pub fn run_protocol5(
    db: &MessageDB,
    k: usize,
    src: &mut impl OutcomeSource,
    opts: &RunOptions,
) -> Result<RunResult> {
    expect_kind(db, &[MessageKind::ComplexPure], 5)?;
    let ps = db.pure_params()?;
    let d = db.d();
    let cap = opts.rounds.unwrap_or(50 * d).max(1);
    let query = resolve_query(opts, db.f(), k, src)?;
    let labels: Vec<(QubitGroup, QuditPairs)> = (1..=cap).map(|r| round_labels(r, d)).collect();
    let mut net = Network::new(opts.record_views);
    for (g, q) in &labels {
        net.share_entanglement_deferred(&round_pairs(g, q, d))?;
    }
    let mut run = Run::new(net, src, opts, query, k, d);
    run.send_query()?;
    let attack = run.server1() == ServerStrategy::ShiftAndReplace;
    let mut output = None;
    let mut declaration = None;
    for (r, (group, qudits)) in labels.iter().enumerate() {
        let mut act: Vec<&str> = refs(&group.s1);
        act.extend([qudits.a.as_str(), qudits.b.as_str()]);
        run.net.activate(&act)?;
        run.rotation_answer(group, &|l, j| ps[l].thetas[j], attack && r == 0)?;
        if attack && r == 0 {
            run.net
                .replace(Party::Server1, &qudits.b, &ComplexVector::basis(d, 0).projector())?;
        }
        run.phase_answer(qudits, &|l, j| ps[l].phis[j])?;
        let (s1, s2) = server_halves(group, qudits);
        run.send_back(&refs(&s1), &refs(&s2))?;
        run.net.add_round();
        if opts.stop_after_answer {
            return Ok(answered(run));
        }
        run.reconstruct_qubits(group)?;
        let h = run.merge_chain(group, &format!("H{}", r + 1))?;
        let res = run.teleport(&h, qudits)?;
        let flag = u8::from(res.is_none());
        run.net.send_classical(Party::User, Party::Server1, &[flag])?;
        run.net.send_classical(Party::User, Party::Server2, &[flag])?;
        if r == 0 && attack {
            declaration = Some(flag == 1);
        }
        if res.is_some() {
            output = res;
            break;
        }
    }
    let mut out = finish(run, output.map(|o| vec![o]), &pure_target(db, k)?)?;
    out.declaration = declaration;
    Ok(out)
}

/// Protocol 6: `n` non-adaptive rounds (`opts.rounds`, default 1); succeeds when some round
/// yields `a_j = 0`.
pub fn run_protocol6(
    db: &MessageDB,
    k: usize,
    src: &mut impl OutcomeSource,
    opts: &RunOptions,
) -> Result<RunResult> {
    expect_kind(db, &[MessageKind::ComplexPure], 6)?;
    let ps = db.pure_params()?.to_vec();
    let target = pure_target(db, k)?;
    run_rounds(db, k, src, opts, false, move |_| Ok((ps.clone(), target.clone())))
}

/// Protocol 7: mixed messages. The servers measure one extra shared pair, obtain a common
/// uniform `j`, and answer as Protocol 6 for the decomposition states `|φ_{ℓ,j}⟩`.
pub fn run_protocol7(
    db: &MessageDB,
    k: usize,
    src: &mut impl OutcomeSource,
    opts: &RunOptions,
) -> Result<RunResult> {
    expect_kind(db, &[MessageKind::Mixed], 7)?;
    let ensembles = db
        .densities()?
        .iter()
        .map(params::canonical_ensemble)
        .collect::<Result<Vec<_>>>()?;
    run_rounds(db, k, src, opts, true, move |j| {
        let ps = ensembles
            .iter()
            .map(|e| params::extract_pure_params(&e.phis[j]))
            .collect::<Result<Vec<PureParams>>>()?;
        let target = ensembles[k - 1].phis[j].clone();
        Ok((ps, target))
    })
}

fn run_rounds(
    db: &MessageDB,
    k: usize,
    src: &mut impl OutcomeSource,
    opts: &RunOptions,
    mixed: bool,
    branch_params: impl Fn(usize) -> Result<(Vec<PureParams>, ComplexVector)>,
) -> Result<RunResult> {
    let d = db.d();
    let n = opts.rounds.unwrap_or(1).max(1);
    let query = resolve_query(opts, db.f(), k, src)?;
    let labels: Vec<(QubitGroup, QuditPairs)> = (1..=n).map(|r| round_labels(r, d)).collect();
    let mut net = Network::new(opts.record_views);
    if mixed {
        net.share_entanglement(&[("J", "J'", d)])?;
    }
    for (g, q) in &labels {
        net.share_entanglement(&round_pairs(g, q, d))?;
    }
    let mut run = Run::new(net, src, opts, query, k, d);
    run.send_query()?;
    let mut branch = None;
    let (ps, target) = if mixed {
        let j = run.net.measure_computational(Party::Server1, "J", run.src)?;
        let j2 = run.net.measure_computational(Party::Server2, "J'", run.src)?;
        debug_assert_eq!(j, j2);
        branch = Some(j);
        branch_params(j)?
    } else {
        branch_params(0)?
    };
    for (group, qudits) in &labels {
        run.rotation_answer(group, &|l, j| ps[l].thetas[j], false)?;
        run.phase_answer(qudits, &|l, j| ps[l].phis[j])?;
        let (s1, s2) = server_halves(group, qudits);
        run.send_back(&refs(&s1), &refs(&s2))?;
        run.net.add_round();
    }
    if opts.stop_after_answer {
        let mut r = answered(run);
        r.branch = branch;
        return Ok(r);
    }
    let mut output = None;
    for (r, (group, qudits)) in labels.iter().enumerate() {
        if output.is_some() {
            let (mut s1, s2) = server_halves(group, qudits);
            s1.extend(s2);
            run.net.discard(Party::User, &refs(&s1))?;
            continue;
        }
        run.reconstruct_qubits(group)?;
        let h = run.merge_chain(group, &format!("H{}", r + 1))?;
        output = run.teleport(&h, qudits)?;
    }
    let mut out = finish(run, output.map(|o| vec![o]), &target)?;
    out.branch = branch;
    Ok(out)
}

/// Dispatches to the runner of protocol `id` (1–7).
pub fn run_protocol(
    id: u8,
    db: &MessageDB,
    k: usize,
    src: &mut impl OutcomeSource,
    opts: &RunOptions,
) -> Result<RunResult> {
    match id {
        1 => run_protocol1(db, k, src, opts),
        2 => run_protocol2(db, k, src, opts),
        3 => run_protocol3(db, k, src, opts),
        4 => run_protocol4(db, k, src, opts),
        5 => run_protocol5(db, k, src, opts),
        6 => run_protocol6(db, k, src, opts),
        7 => run_protocol7(db, k, src, opts),
        _ => Err(Error::UnsupportedProtocol(id)),
    }
}
