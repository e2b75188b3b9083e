use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::qlin::{self, ComplexMatrix, ComplexVector, C64};

use super::sampling::OutcomeSource;

const ZERO: C64 = C64::new(0.0, 0.0);
/// Tolerance for accepting caller-supplied states and operators.
const INPUT_TOL: f64 = 1e-10;
/// Purity above `1 - PURE_TOL` lets a reduced block drop back to a state vector.
const PURE_TOL: f64 = 1e-13;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RegisterLabel {
    pub name: String,
    pub dim: usize,
}

#[derive(Debug, Clone)]
enum Repr {
    Pure(Vec<C64>),
    Mixed(ComplexMatrix),
}

/// A set of registers whose joint state is tracked together. Registers in different
/// blocks are in a product state.
#[derive(Debug, Clone)]
struct Block {
    regs: Vec<String>,
    dims: Vec<usize>,
    repr: Repr,
}

impl Block {
    fn dim(&self) -> usize {
        self.dims.iter().product()
    }

    #[cfg(test)]
    fn density(&self) -> ComplexMatrix {
        match &self.repr {
            Repr::Pure(v) => ComplexVector::from_vec(v.clone()).projector(),
            Repr::Mixed(m) => m.clone(),
        }
    }

    fn tensor(self, other: Block) -> Block {
        let repr = match (self.repr, other.repr) {
            (Repr::Pure(a), Repr::Pure(b)) => Repr::Pure(
                ComplexVector::from_vec(a)
                    .tensor(&ComplexVector::from_vec(b))
                    .into_vec(),
            ),
            (a, b) => {
                let da = to_density(a);
                let db = to_density(b);
                Repr::Mixed(da.kron(&db))
            }
        };
        let mut regs = self.regs;
        regs.extend(other.regs);
        let mut dims = self.dims;
        dims.extend(other.dims);
        Block { regs, dims, repr }
    }

    /// Reorders registers so that `front` come first, in that order.
    fn permute_front(&mut self, front: &[&str]) {
        let positions: Vec<usize> = front
            .iter()
            .map(|l| self.regs.iter().position(|r| r == l).expect("register in block"))
            .collect();
        let mut perm = positions.clone();
        perm.extend((0..self.regs.len()).filter(|i| !positions.contains(i)));
        if perm.iter().enumerate().all(|(i, &p)| i == p) {
            return;
        }
        let map = index_map(&self.dims, &perm);
        self.repr = match &self.repr {
            Repr::Pure(v) => Repr::Pure(map.iter().map(|&o| v[o]).collect()),
            Repr::Mixed(m) => {
                let n = map.len();
                Repr::Mixed(ComplexMatrix::from_fn(n, n, |r, c| m[(map[r], map[c])]))
            }
        };
        self.regs = perm.iter().map(|&p| self.regs[p].clone()).collect();
        self.dims = perm.iter().map(|&p| self.dims[p]).collect();
    }

    /// Applies `op` (rows × cols) to the leading registers whose dimensions multiply to `cols`.
    fn apply_front(&mut self, op: &ComplexMatrix) {
        let n = self.dim();
        let cols = op.cols();
        let rows = op.rows();
        let rest = n / cols;
        self.repr = match &self.repr {
            Repr::Pure(v) => {
                let mut out = vec![ZERO; rows * rest];
                for o in 0..rows {
                    for i in 0..cols {
                        let a = op[(o, i)];
                        if a == ZERO {
                            continue;
                        }
                        let src = &v[i * rest..(i + 1) * rest];
                        let dst = &mut out[o * rest..(o + 1) * rest];
                        for (d, s) in dst.iter_mut().zip(src) {
                            *d += a * s;
                        }
                    }
                }
                Repr::Pure(out)
            }
            Repr::Mixed(m) => {
                // left: (op ⊗ I) ρ
                let mut left = ComplexMatrix::zeros(rows * rest, n);
                for o in 0..rows {
                    for i in 0..cols {
                        let a = op[(o, i)];
                        if a == ZERO {
                            continue;
                        }
                        for x in 0..rest {
                            let src = (i * rest + x) * n;
                            let dst = (o * rest + x) * n;
                            let (s, d) = (m.as_slice(), left.as_mut_slice());
                            for c in 0..n {
                                d[dst + c] += a * s[src + c];
                            }
                        }
                    }
                }
                // right: left (op ⊗ I)†
                let mut out = ComplexMatrix::zeros(rows * rest, rows * rest);
                let w = rows * rest;
                for r in 0..rows * rest {
                    for o in 0..rows {
                        for i in 0..cols {
                            let a = op[(o, i)].conj();
                            if a == ZERO {
                                continue;
                            }
                            for x in 0..rest {
                                let v = left.as_slice()[r * n + i * rest + x];
                                out.as_mut_slice()[r * w + o * rest + x] += v * a;
                            }
                        }
                    }
                }
                Repr::Mixed(out)
            }
        };
    }

    fn trace(&self) -> f64 {
        match &self.repr {
            Repr::Pure(v) => v.iter().map(|z| z.norm_sqr()).sum(),
            Repr::Mixed(m) => m.trace().re,
        }
    }

    fn rescale(&mut self, factor: f64) {
        match &mut self.repr {
            Repr::Pure(v) => {
                let s = factor.sqrt();
                v.iter_mut().for_each(|z| *z *= s);
            }
            Repr::Mixed(m) => m.as_mut_slice().iter_mut().for_each(|z| *z *= factor),
        }
    }

    /// Born probabilities of the leading register in the computational basis.
    fn front_probabilities(&self) -> Vec<f64> {
        let d = self.dims[0];
        let rest = self.dim() / d;
        (0..d)
            .map(|s| match &self.repr {
                Repr::Pure(v) => v[s * rest..(s + 1) * rest].iter().map(|z| z.norm_sqr()).sum(),
                Repr::Mixed(m) => (0..rest).map(|x| m[(s * rest + x, s * rest + x)].re).sum(),
            })
            .collect()
    }

    /// Conditions on outcome `s` of the leading register and removes it.
    fn collapse_front(&mut self, s: usize, p: f64) {
        let d = self.dims[0];
        let rest = self.dim() / d;
        self.repr = match &self.repr {
            Repr::Pure(v) => {
                let k = 1.0 / p.sqrt();
                Repr::Pure(v[s * rest..(s + 1) * rest].iter().map(|z| z * k).collect())
            }
            Repr::Mixed(m) => Repr::Mixed(ComplexMatrix::from_fn(rest, rest, |r, c| {
                m[(s * rest + r, s * rest + c)] / p
            })),
        };
        self.regs.remove(0);
        self.dims.remove(0);
    }

    /// Reduced density operator of the leading `keep` registers.
    fn reduce_front(&self, keep: usize) -> ComplexMatrix {
        let k: usize = self.dims[..keep].iter().product();
        let rest = self.dim() / k;
        match &self.repr {
            Repr::Pure(v) => ComplexMatrix::from_fn(k, k, |a, b| {
                (0..rest)
                    .map(|x| v[a * rest + x] * v[b * rest + x].conj())
                    .sum()
            }),
            Repr::Mixed(m) => ComplexMatrix::from_fn(k, k, |a, b| {
                (0..rest).map(|x| m[(a * rest + x, b * rest + x)]).sum()
            }),
        }
    }
}

fn to_density(r: Repr) -> ComplexMatrix {
    match r {
        Repr::Pure(v) => ComplexVector::from_vec(v).projector(),
        Repr::Mixed(m) => m,
    }
}

/// `map[new_index] = old_index` for a register permutation where new position `i`
/// holds old register `perm[i]`.
fn index_map(dims: &[usize], perm: &[usize]) -> Vec<usize> {
    let n: usize = dims.iter().product();
    let mut old_strides = vec![1; dims.len()];
    for i in (0..dims.len().saturating_sub(1)).rev() {
        old_strides[i] = old_strides[i + 1] * dims[i + 1];
    }
    let new_dims: Vec<usize> = perm.iter().map(|&p| dims[p]).collect();
    let mut map = Vec::with_capacity(n);
    let mut digits = vec![0usize; dims.len()];
    for _ in 0..n {
        map.push(
            digits
                .iter()
                .zip(perm)
                .map(|(&dg, &p)| dg * old_strides[p])
                .sum(),
        );
        for pos in (0..digits.len()).rev() {
            digits[pos] += 1;
            if digits[pos] < new_dims[pos] {
                break;
            }
            digits[pos] = 0;
        }
    }
    map
}

/// Returns the state vector when `rho` is rank one within [`PURE_TOL`].
fn try_purify(rho: &ComplexMatrix) -> Option<Vec<C64>> {
    let purity: f64 = rho.as_slice().iter().map(|z| z.norm_sqr()).sum();
    let tr = rho.trace().re;
    if (purity - tr * tr).abs() > PURE_TOL {
        return None;
    }
    let n = rho.rows();
    let m = (0..n).max_by(|&a, &b| rho[(a, a)].re.total_cmp(&rho[(b, b)].re))?;
    let s = 1.0 / rho[(m, m)].re.sqrt();
    Some((0..n).map(|r| rho[(r, m)] * s).collect())
}

/// Joint state of every register in a protocol run.
///
/// The state is held as a product of independent blocks, each a density operator (or a
/// state vector when pure). Blocks merge when an operation spans more than one of them,
/// which keeps honest runs far smaller than the full joint operator.
#[derive(Debug, Clone, Default)]
pub struct GlobalState {
    order: Vec<RegisterLabel>,
    blocks: Vec<Option<Block>>,
    index: HashMap<String, usize>,
}

impl GlobalState {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn registers(&self) -> &[RegisterLabel] {
        &self.order
    }

    pub fn contains(&self, label: &str) -> bool {
        self.index.contains_key(label)
    }

    pub fn dim_of(&self, label: &str) -> Result<usize> {
        self.order
            .iter()
            .find(|r| r.name == label)
            .map(|r| r.dim)
            .ok_or_else(|| Error::UnknownLabel(label.to_string()))
    }

    /// Number of independent blocks currently tracked.
    pub fn block_count(&self) -> usize {
        self.blocks.iter().flatten().count()
    }

    fn check_new(&self, labels: &[&str]) -> Result<()> {
        for (i, l) in labels.iter().enumerate() {
            if self.contains(l) || labels[..i].contains(l) {
                return Err(Error::DuplicateLabel(l.to_string()));
            }
        }
        Ok(())
    }

    fn push_block(&mut self, block: Block) {
        let slot = self.blocks.len();
        for r in &block.regs {
            self.index.insert(r.clone(), slot);
        }
        self.blocks.push(Some(block));
    }

    /// Appends a register holding the density operator `initial`.
    pub fn attach(&mut self, label: &str, initial: &ComplexMatrix) -> Result<()> {
        self.attach_joint(&[(label, initial.rows())], initial)
    }

    /// Appends a register holding the pure state `psi`.
    pub fn attach_pure(&mut self, label: &str, psi: &ComplexVector) -> Result<()> {
        self.attach_joint_pure(&[(label, psi.dim())], psi)
    }

    /// Appends several registers sharing the joint density operator `rho`.
    pub fn attach_joint(&mut self, regs: &[(&str, usize)], rho: &ComplexMatrix) -> Result<()> {
        let names: Vec<&str> = regs.iter().map(|r| r.0).collect();
        self.check_new(&names)?;
        let dim: usize = regs.iter().map(|r| r.1).product();
        if rho.rows() != dim || !rho.is_square() {
            return Err(Error::InvalidDensity(format!(
                "expected {dim}x{dim}, got {}x{}",
                rho.rows(),
                rho.cols()
            )));
        }
        if !rho.is_density(INPUT_TOL) {
            return Err(Error::InvalidDensity("not Hermitian PSD with unit trace".into()));
        }
        let repr = match try_purify(rho) {
            Some(v) => Repr::Pure(v),
            None => Repr::Mixed(rho.clone()),
        };
        self.insert_new(regs, repr, None);
        Ok(())
    }

    /// Appends several registers sharing the joint pure state `psi`.
    pub fn attach_joint_pure(&mut self, regs: &[(&str, usize)], psi: &ComplexVector) -> Result<()> {
        let names: Vec<&str> = regs.iter().map(|r| r.0).collect();
        self.check_new(&names)?;
        let dim: usize = regs.iter().map(|r| r.1).product();
        if psi.dim() != dim {
            return Err(Error::InvalidDensity(format!(
                "expected vector of dim {dim}, got {}",
                psi.dim()
            )));
        }
        if (psi.norm() - 1.0).abs() > INPUT_TOL {
            return Err(Error::InvalidDensity(format!("vector norm {}", psi.norm())));
        }
        self.insert_new(regs, Repr::Pure(psi.as_slice().to_vec()), None);
        Ok(())
    }

    fn insert_new(&mut self, regs: &[(&str, usize)], repr: Repr, at: Option<usize>) {
        let labels: Vec<RegisterLabel> = regs
            .iter()
            .map(|(n, d)| RegisterLabel {
                name: n.to_string(),
                dim: *d,
            })
            .collect();
        let pos = at.unwrap_or(self.order.len());
        self.order.splice(pos..pos, labels);
        self.push_block(Block {
            regs: regs.iter().map(|r| r.0.to_string()).collect(),
            dims: regs.iter().map(|r| r.1).collect(),
            repr,
        });
    }

    fn slot_of(&self, label: &str) -> Result<usize> {
        self.index
            .get(label)
            .copied()
            .ok_or_else(|| Error::UnknownLabel(label.to_string()))
    }

    /// Merges the blocks holding `labels` into one and returns its slot.
    fn gather(&mut self, labels: &[&str]) -> Result<usize> {
        let mut slots: Vec<usize> = Vec::new();
        for l in labels {
            let s = self.slot_of(l)?;
            if !slots.contains(&s) {
                slots.push(s);
            }
        }
        let first = slots[0];
        for &s in &slots[1..] {
            let other = self.blocks[s].take().expect("live block");
            let base = self.blocks[first].take().expect("live block");
            for r in &other.regs {
                self.index.insert(r.clone(), first);
            }
            self.blocks[first] = Some(base.tensor(other));
        }
        Ok(first)
    }

    fn block_mut(&mut self, slot: usize) -> &mut Block {
        self.blocks[slot].as_mut().expect("live block")
    }

    fn check_distinct(labels: &[&str]) -> Result<()> {
        for (i, l) in labels.iter().enumerate() {
            if labels[..i].contains(l) {
                return Err(Error::DuplicateLabel(l.to_string()));
            }
        }
        Ok(())
    }

    fn dims_of(&self, labels: &[&str]) -> Result<Vec<usize>> {
        labels.iter().map(|l| self.dim_of(l)).collect()
    }

    /// Applies a unitary to the listed registers (in the listed order).
    pub fn apply(&mut self, labels: &[&str], op: &ComplexMatrix) -> Result<()> {
        let dims = self.dims_of(labels)?;
        if !op.is_square() {
            return Err(Error::NonIsometricOperator(f64::INFINITY));
        }
        self.apply_map(labels, op, &dims.iter().map(|&d| d).collect::<Vec<_>>(), None, true)
    }

    /// Applies an isometry; the input registers are replaced by `outputs`.
    pub fn apply_isometry(
        &mut self,
        labels: &[&str],
        op: &ComplexMatrix,
        outputs: &[(&str, usize)],
    ) -> Result<()> {
        let out_dims: Vec<usize> = outputs.iter().map(|o| o.1).collect();
        let out_names: Vec<&str> = outputs.iter().map(|o| o.0).collect();
        self.apply_map(labels, op, &out_dims, Some(&out_names), true)
    }

    /// Applies an operator with `op·op† = I` (such as `V†`) to a state supported on its
    /// initial space. Fails with `SupportMismatch` if more than `1e-9` of the trace is lost.
    pub fn apply_partial_isometry(
        &mut self,
        labels: &[&str],
        op: &ComplexMatrix,
        outputs: &[(&str, usize)],
    ) -> Result<()> {
        let defect = (op * &op.adjoint()).max_abs_diff(&ComplexMatrix::identity(op.rows()));
        if defect > INPUT_TOL {
            return Err(Error::NonIsometricOperator(defect));
        }
        let out_dims: Vec<usize> = outputs.iter().map(|o| o.1).collect();
        let out_names: Vec<&str> = outputs.iter().map(|o| o.0).collect();
        let snapshot = self.clone();
        self.apply_map(labels, op, &out_dims, Some(&out_names), false)?;
        let slot = self.slot_of(out_names[0])?;
        let tr = self.blocks[slot].as_ref().expect("live block").trace();
        if (1.0 - tr).abs() > 1e-9 {
            *self = snapshot;
            return Err(Error::SupportMismatch(1.0 - tr));
        }
        self.block_mut(slot).rescale(1.0 / tr);
        Ok(())
    }

    fn apply_map(
        &mut self,
        labels: &[&str],
        op: &ComplexMatrix,
        out_dims: &[usize],
        out_names: Option<&[&str]>,
        check_isometry: bool,
    ) -> Result<()> {
        Self::check_distinct(labels)?;
        let in_dims = self.dims_of(labels)?;
        let cols: usize = in_dims.iter().product();
        let rows: usize = out_dims.iter().product();
        if op.cols() != cols || op.rows() != rows {
            return Err(Error::DimensionMismatch(format!(
                "operator is {}x{}, registers need {rows}x{cols}",
                op.rows(),
                op.cols()
            )));
        }
        if check_isometry {
            let defect = op.isometry_defect();
            if defect > INPUT_TOL {
                return Err(Error::NonIsometricOperator(defect));
            }
        }
        if let Some(names) = out_names {
            let fresh: Vec<&str> = names.iter().copied().filter(|n| !labels.contains(n)).collect();
            self.check_new(&fresh)?;
            Self::check_distinct(names)?;
        }
        let slot = self.gather(labels)?;
        {
            let block = self.block_mut(slot);
            block.permute_front(labels);
            block.apply_front(op);
        }
        if let Some(names) = out_names {
            self.relabel_front(slot, labels, names, out_dims);
        }
        Ok(())
    }

    /// After an operator changed the leading registers of a block, renames them and fixes
    /// the global order: outputs take the position of the first input.
    fn relabel_front(&mut self, slot: usize, inputs: &[&str], outputs: &[&str], out_dims: &[usize]) {
        let pos = self
            .order
            .iter()
            .position(|r| inputs.contains(&r.name.as_str()))
            .expect("inputs are registered");
        self.order.retain(|r| !inputs.contains(&r.name.as_str()));
        let new_labels: Vec<RegisterLabel> = outputs
            .iter()
            .zip(out_dims)
            .map(|(n, d)| RegisterLabel {
                name: n.to_string(),
                dim: *d,
            })
            .collect();
        self.order.splice(pos..pos, new_labels);
        for l in inputs {
            self.index.remove(*l);
        }
        for l in outputs {
            self.index.insert(l.to_string(), slot);
        }
        let block = self.block_mut(slot);
        let k = inputs.len();
        block.regs.splice(0..k, outputs.iter().map(|s| s.to_string()));
        block.dims.splice(0..k, out_dims.iter().copied());
    }

    fn remove_from_order(&mut self, label: &str) {
        self.order.retain(|r| r.name != label);
        self.index.remove(label);
    }

    fn drop_if_empty(&mut self, slot: usize) {
        if self.blocks[slot].as_ref().is_some_and(|b| b.regs.is_empty()) {
            self.blocks[slot] = None;
        }
    }

    /// Measures one register in the computational basis; the register is removed.
    pub fn measure_computational(
        &mut self,
        label: &str,
        src: &mut impl OutcomeSource,
    ) -> Result<usize> {
        let slot = self.slot_of(label)?;
        let block = self.block_mut(slot);
        block.permute_front(&[label]);
        let probs = block.front_probabilities();
        let s = src.choose(&probs);
        block.collapse_front(s, probs[s]);
        self.remove_from_order(label);
        self.drop_if_empty(slot);
        Ok(s)
    }

    /// Measures a register pair in the basis `{|X^a Z^b⟩⟩}` and removes both registers.
    /// The first label is the first tensor factor of the Bell vector.
    pub fn measure_bell(
        &mut self,
        pair: (&str, &str),
        src: &mut impl OutcomeSource,
    ) -> Result<(usize, usize)> {
        let (d1, d2) = (self.dim_of(pair.0)?, self.dim_of(pair.1)?);
        if d1 != d2 {
            return Err(Error::UnequalDims(d1, d2));
        }
        let tmp = format!("{}#{}#bell", pair.0, pair.1);
        let w = qlin::bell_basis_change(d1)?;
        self.apply_map(&[pair.0, pair.1], &w, &[d1 * d1], Some(&[tmp.as_str()]), false)?;
        let o = self.measure_computational(&tmp, src)?;
        Ok((o / d1, o % d1))
    }

    /// Applies the instrument `{K_i}` and keeps one branch, sampled with probability
    /// `Tr K_i ρ K_i†`. Input registers are replaced by `outputs` (all Kraus operators
    /// must share that shape).
    pub fn apply_instrument(
        &mut self,
        labels: &[&str],
        kraus: &[ComplexMatrix],
        outputs: &[(&str, usize)],
        src: &mut impl OutcomeSource,
    ) -> Result<usize> {
        let Some(first) = kraus.first() else {
            return Err(Error::IncompleteInstrument(1.0));
        };
        let mut sum = ComplexMatrix::zeros(first.cols(), first.cols());
        for k in kraus {
            if k.cols() != first.cols() || k.rows() != first.rows() {
                return Err(Error::DimensionMismatch("Kraus operators differ in shape".into()));
            }
            sum = &sum + &(&k.adjoint() * k);
        }
        let defect = sum.max_abs_diff(&ComplexMatrix::identity(first.cols()));
        if defect > INPUT_TOL {
            return Err(Error::IncompleteInstrument(defect));
        }
        Self::check_distinct(labels)?;
        let in_dims = self.dims_of(labels)?;
        if first.cols() != in_dims.iter().product::<usize>() {
            return Err(Error::DimensionMismatch("instrument input size".into()));
        }
        let out_dims: Vec<usize> = outputs.iter().map(|o| o.1).collect();
        if first.rows() != out_dims.iter().product::<usize>() {
            return Err(Error::DimensionMismatch("instrument output size".into()));
        }
        let out_names: Vec<&str> = outputs.iter().map(|o| o.0).collect();
        let fresh: Vec<&str> = out_names.iter().copied().filter(|n| !labels.contains(n)).collect();
        self.check_new(&fresh)?;

        let slot = self.gather(labels)?;
        self.block_mut(slot).permute_front(labels);
        let base = self.blocks[slot].clone().expect("live block");
        let mut branches: Vec<Block> = Vec::with_capacity(kraus.len());
        let mut probs = Vec::with_capacity(kraus.len());
        for k in kraus {
            let mut b = base.clone();
            b.apply_front(k);
            probs.push(b.trace());
            branches.push(b);
        }
        let i = src.choose(&probs);
        let mut chosen = branches.swap_remove(i);
        chosen.rescale(1.0 / probs[i]);
        self.blocks[slot] = Some(chosen);
        self.relabel_front(slot, labels, &out_names, &out_dims);
        Ok(i)
    }

    /// Traces out registers and removes them from the state.
    pub fn discard(&mut self, labels: &[&str]) -> Result<()> {
        Self::check_distinct(labels)?;
        for l in labels {
            self.slot_of(l)?;
        }
        let mut touched: Vec<usize> = Vec::new();
        for l in labels {
            let s = self.slot_of(l)?;
            if !touched.contains(&s) {
                touched.push(s);
            }
        }
        for slot in touched {
            let block = self.blocks[slot].as_mut().expect("live block");
            let keep: Vec<String> = block
                .regs
                .iter()
                .filter(|r| !labels.contains(&r.as_str()))
                .cloned()
                .collect();
            if keep.is_empty() {
                self.blocks[slot] = None;
                continue;
            }
            let keep_refs: Vec<&str> = keep.iter().map(|s| s.as_str()).collect();
            block.permute_front(&keep_refs);
            let rho = block.reduce_front(keep.len());
            block.repr = match try_purify(&rho) {
                Some(v) => Repr::Pure(v),
                None => Repr::Mixed(rho),
            };
            block.dims.truncate(keep.len());
            block.regs.truncate(keep.len());
        }
        for l in labels {
            self.remove_from_order(l);
        }
        Ok(())
    }

    /// Reduced density operator of `keep`, with registers in their global order.
    pub fn partial_trace(&self, keep: &[&str]) -> Result<ComplexMatrix> {
        if keep.is_empty() {
            return Err(Error::EmptyKeepSet);
        }
        let parts = self.reduced_blocks(keep)?;
        let mut names: Vec<String> = Vec::new();
        let mut dims: Vec<usize> = Vec::new();
        let mut rho = ComplexMatrix::identity(1);
        for (labels, m) in parts {
            for l in &labels {
                dims.push(self.dim_of(l)?);
            }
            names.extend(labels);
            rho = rho.kron(&m);
        }
        let ordered: Vec<&str> = self
            .order
            .iter()
            .map(|r| r.name.as_str())
            .filter(|n| keep.contains(n))
            .collect();
        let perm: Vec<usize> = ordered
            .iter()
            .map(|l| names.iter().position(|n| n == l).expect("kept label"))
            .collect();
        let map = index_map(&dims, &perm);
        let n = map.len();
        Ok(ComplexMatrix::from_fn(n, n, |r, c| rho[(map[r], map[c])]))
    }

    /// Reduced state of `keep` split along the product structure: one entry per block,
    /// labels listed in global order.
    pub fn reduced_blocks(&self, keep: &[&str]) -> Result<Vec<(Vec<String>, ComplexMatrix)>> {
        Self::check_distinct(keep)?;
        let mut slots: Vec<usize> = Vec::new();
        for l in keep {
            let s = self.slot_of(l)?;
            if !slots.contains(&s) {
                slots.push(s);
            }
        }
        let mut out = Vec::new();
        for slot in slots {
            let mut block = self.blocks[slot].clone().expect("live block");
            let kept: Vec<&str> = self
                .order
                .iter()
                .map(|r| r.name.as_str())
                .filter(|n| keep.contains(n) && block.regs.iter().any(|r| r == n))
                .collect();
            block.permute_front(&kept);
            out.push((
                kept.iter().map(|s| s.to_string()).collect(),
                block.reduce_front(kept.len()),
            ));
        }
        Ok(out)
    }

    /// Replaces the pair `(coarse, fine)` holding `v ⊗ (cos θ, sin θ)` with one register of
    /// dimension `dim(coarse)+1` holding `R_{j+1}(θ)·v`.
    ///
    /// This reads the simulator's state directly and has no physical counterpart; it is the
    /// exact alternative to the printed merge instrument.
    pub fn ideal_merge(&mut self, coarse: &str, fine: &str, output: &str) -> Result<()> {
        if self.dim_of(fine)? != 2 {
            return Err(Error::NotMergeableState(format!("`{fine}` is not a qubit")));
        }
        let j1 = self.dim_of(coarse)?;
        if output != coarse && output != fine {
            self.check_new(&[output])?;
        }
        let joint = self.partial_trace(&[coarse, fine])?;
        let rc = self.partial_trace(&[coarse])?;
        let rf = self.partial_trace(&[fine])?;
        let (Some(v), Some(w)) = (try_purify_loose(&rc), try_purify_loose(&rf)) else {
            return Err(Error::NotMergeableState("registers are not pure".into()));
        };
        // order of the pair in `joint` follows the global order
        let coarse_first = self.order.iter().position(|r| r.name == coarse)
            < self.order.iter().position(|r| r.name == fine);
        let product = if coarse_first {
            v.tensor(&w).projector()
        } else {
            w.tensor(&v).projector()
        };
        let dev = joint.max_abs_diff(&product);
        if dev > qlin::STATE_TOL {
            return Err(Error::NotMergeableState(format!(
                "joint state is not a product (deviation {dev:.2e})"
            )));
        }
        let w = w.fix_global_phase(1e-12);
        if w[0].im.abs() > qlin::STATE_TOL || w[1].im.abs() > qlin::STATE_TOL {
            return Err(Error::NotMergeableState("qubit is not a real rotation".into()));
        }
        let theta = w[1].re.atan2(w[0].re);
        let merged = qlin::rotation_block(j1, theta, j1 + 1)?.mul_vec(&qlin::embed(&v, j1 + 1));
        let pos = self
            .order
            .iter()
            .position(|r| r.name == coarse)
            .expect("coarse registered");
        self.discard(&[coarse, fine])?;
        let pos = pos.min(self.order.len());
        self.insert_new(&[(output, j1 + 1)], Repr::Pure(merged.into_vec()), Some(pos));
        Ok(())
    }

    /// Removes a register and re-attaches it, at the same position, in state `rho`.
    pub fn replace(&mut self, label: &str, rho: &ComplexMatrix) -> Result<()> {
        let dim = self.dim_of(label)?;
        if rho.rows() != dim || !rho.is_density(INPUT_TOL) {
            return Err(Error::InvalidDensity(format!("replacement for `{label}`")));
        }
        let pos = self.order.iter().position(|r| r.name == label).expect("registered");
        self.discard(&[label])?;
        let repr = match try_purify(rho) {
            Some(v) => Repr::Pure(v),
            None => Repr::Mixed(rho.clone()),
        };
        self.insert_new(&[(label, dim)], repr, Some(pos));
        Ok(())
    }

    /// Trace of the full state; stays 1 up to roundoff.
    pub fn total_trace(&self) -> f64 {
        self.blocks.iter().flatten().map(|b| b.trace()).product()
    }

    /// Full joint density operator in global register order. Only for small states.
    pub fn density(&self) -> Result<ComplexMatrix> {
        let all: Vec<&str> = self.order.iter().map(|r| r.name.as_str()).collect();
        if all.is_empty() {
            return Ok(ComplexMatrix::identity(1));
        }
        self.partial_trace(&all)
    }

    #[cfg(test)]
    fn block_density(&self, label: &str) -> ComplexMatrix {
        self.blocks[self.index[label]].as_ref().unwrap().density()
    }
}

/// Like [`try_purify`] but with the end-to-end state tolerance.
fn try_purify_loose(rho: &ComplexMatrix) -> Option<ComplexVector> {
    let purity: f64 = rho.as_slice().iter().map(|z| z.norm_sqr()).sum();
    if (1.0 - purity).abs() > qlin::STATE_TOL {
        return None;
    }
    let n = rho.rows();
    let m = (0..n).max_by(|&a, &b| rho[(a, a)].re.total_cmp(&rho[(b, b)].re))?;
    let s = 1.0 / rho[(m, m)].re.sqrt();
    Some(ComplexVector::from_vec((0..n).map(|r| rho[(r, m)] * s).collect()).normalized())
}
