//! Independent reference implementations used to check the library.
//!
//! Nothing here calls into the library's permutation, external-state or
//! interferometer code: permutations come from itertools, signs from inversion
//! counts, and every state is built on the explicit tensor-product space.
#![allow(dead_code)]

use fourfold::internal::InternalEnsemble;
use fourfold::interferometer::ModeUnitary;
use fourfold::{CMatrix, C64};
use itertools::Itertools;

/// Permutations of `0..n` in lexicographic order of their one-line notation.
pub fn perms(n: usize) -> Vec<Vec<usize>> {
    (0..n).permutations(n).collect()
}

/// (−1)^(number of inversions).
pub fn parity(p: &[usize]) -> f64 {
    let inversions = (0..p.len()).flat_map(|i| (i + 1..p.len()).map(move |j| (i, j))).filter(|&(i, j)| p[i] > p[j]).count();
    if inversions % 2 == 0 {
        1.0
    } else {
        -1.0
    }
}

pub fn inverse(p: &[usize]) -> Vec<usize> {
    let mut inv = vec![0; p.len()];
    for (a, &b) in p.iter().enumerate() {
        inv[b] = a;
    }
    inv
}

fn exchange_sign(p: &[usize], fermion: bool) -> f64 {
    if fermion {
        parity(p)
    } else {
        1.0
    }
}

/// Digits of `index` in base `d`, most significant first.
fn digits(mut index: usize, d: usize, n: usize) -> Vec<usize> {
    let mut out = vec![0; n];
    for k in (0..n).rev() {
        out[k] = index % d;
        index /= d;
    }
    out
}

fn undigits(ds: &[usize], d: usize) -> usize {
    ds.iter().fold(0, |acc, &x| acc * d + x)
}

/// Kronecker product ρ₁⊗⋯⊗ρ_n.
pub fn kron(ms: &[CMatrix]) -> CMatrix {
    ms.iter().skip(1).fold(ms[0].clone(), |acc, m| acc.kronecker(m))
}

/// Reduced external state of n particles from the (anti)symmetrized product state.
///
/// The labelling operator Π_π acts on product kets as Π_π|j₁…j_n⟩ = |j_π(1)…j_π(n)⟩,
/// and the internal degrees of freedom are traced out explicitly:
/// `[ρ_E]_{a,b} = s(a)s(b)/n! · Tr(Π_a ρ Π_b†)`.
pub fn external_state(states: &[CMatrix], fermion: bool) -> CMatrix {
    let n = states.len();
    let d = states[0].nrows();
    let rho = kron(states);
    let ps = perms(n);
    let fact = ps.len() as f64;
    let dim = d.pow(n as u32);
    CMatrix::from_fn(ps.len(), ps.len(), |a, b| {
        let (pa, pb) = (&ps[a], &ps[b]);
        let sign = exchange_sign(pa, fermion) * exchange_sign(pb, fermion);
        let mut tr = C64::new(0.0, 0.0);
        for i in 0..dim {
            let idx = digits(i, d, n);
            // Π_a|j⟩ = |i⟩ requires j_{a(α)} = i_α.
            let mut ja = vec![0; n];
            let mut jb = vec![0; n];
            for alpha in 0..n {
                ja[pa[alpha]] = idx[alpha];
                jb[pb[alpha]] = idx[alpha];
            }
            tr += rho[(undigits(&ja, d), undigits(&jb, d))];
        }
        tr * sign / fact
    })
}

pub fn ensemble_matrices(e: &InternalEnsemble) -> Vec<CMatrix> {
    e.states().iter().map(|s| s.matrix().clone()).collect()
}

pub fn is_fermion(e: &InternalEnsemble) -> bool {
    e.statistics() == fourfold::Statistics::Fermion
}

/// ⟨ψ|ρ|ψ⟩ with |ψ⟩ the (anti)symmetric superposition of all labellings.
pub fn symmetric_expectation(rho: &CMatrix, fermion: bool) -> f64 {
    let n = match rho.nrows() {
        2 => 2,
        6 => 3,
        24 => 4,
        other => panic!("unexpected dimension {other}"),
    };
    let ps = perms(n);
    let mut acc = C64::new(0.0, 0.0);
    for (a, pa) in ps.iter().enumerate() {
        for (b, pb) in ps.iter().enumerate() {
            acc += rho[(a, b)] * exchange_sign(pa, fermion) * exchange_sign(pb, fermion);
        }
    }
    acc.re / ps.len() as f64
}

/// ⟨Π⟩ for a subset of particles (1-based), from the subset's own external state.
pub fn subset_expectation(e: &InternalEnsemble, subset: &[usize]) -> f64 {
    let states: Vec<CMatrix> = subset.iter().map(|&a| e.state(a).matrix().clone()).collect();
    symmetric_expectation(&external_state(&states, is_fermion(e)), is_fermion(e))
}

/// ρ_E lifted to the 4⁴-dimensional first-quantized mode space, with |E_π⟩ = |π(1)…π(4)⟩.
pub fn mode_space_state(rho_e: &CMatrix) -> CMatrix {
    let ps = perms(4);
    let mut big = CMatrix::zeros(256, 256);
    for (a, pa) in ps.iter().enumerate() {
        for (b, pb) in ps.iter().enumerate() {
            big[(undigits(pa, 4), undigits(pb, 4))] = rho_e[(a, b)];
        }
    }
    big
}

/// Traces the last `4 − keep` particle slots out of a mode-space state.
pub fn trace_out_tail(big: &CMatrix, keep: usize) -> CMatrix {
    let small = 4usize.pow(keep as u32);
    let rest = 4usize.pow(4 - keep as u32);
    CMatrix::from_fn(small, small, |i, j| (0..rest).map(|k| big[(i * rest + k, j * rest + k)]).sum())
}

/// (1/N!) Σ_τ (±1)^τ P_τ on the 4^N-dimensional mode space of N particles.
pub fn symmetrizer(n: usize, fermion: bool) -> CMatrix {
    let dim = 4usize.pow(n as u32);
    let ps = perms(n);
    let mut m = CMatrix::zeros(dim, dim);
    for p in &ps {
        let s = exchange_sign(p, fermion);
        for i in 0..dim {
            let idx = digits(i, 4, n);
            let permuted: Vec<usize> = p.iter().map(|&k| idx[k]).collect();
            m[(undigits(&permuted, 4), i)] += C64::new(s, 0.0);
        }
    }
    m / C64::new(ps.len() as f64, 0.0)
}

/// Tr(Π ρ^{Np}) for the reduced state of the leading `keep` particles.
pub fn reduced_expectation(rho_e: &CMatrix, keep: usize, fermion: bool) -> f64 {
    let reduced = trace_out_tail(&mode_space_state(rho_e), keep);
    (symmetrizer(keep, fermion) * reduced).trace().re
}

/// p_S⃗ = Σ over all mode assignments G with occupation S⃗ of ⟨G|U^⊗4 ρ_E U^⊗4†|G⟩.
pub fn event_probability(rho_e: &CMatrix, u: &ModeUnitary, occupation: [usize; 4]) -> f64 {
    let ps = perms(4);
    let mut total = C64::new(0.0, 0.0);
    for g in 0..256 {
        let modes = digits(g, 4, 4);
        let mut occ = [0usize; 4];
        for &m in &modes {
            occ[m] += 1;
        }
        if occ != occupation {
            continue;
        }
        let amp: Vec<C64> = ps
            .iter()
            .map(|p| (0..4).map(|a| u.matrix()[(modes[a], p[a])]).product())
            .collect();
        for a in 0..24 {
            for b in 0..24 {
                total += rho_e[(a, b)] * amp[a] * amp[b].conj();
            }
        }
    }
    total.re
}

/// Cycles of a 0-based permutation, each starting at its smallest element.
pub fn cycles(p: &[usize]) -> Vec<Vec<usize>> {
    let mut seen = vec![false; p.len()];
    let mut out = Vec::new();
    for start in 0..p.len() {
        if seen[start] {
            continue;
        }
        let mut c = vec![start];
        seen[start] = true;
        let mut cur = p[start];
        while cur != start {
            seen[cur] = true;
            c.push(cur);
            cur = p[cur];
        }
        out.push(c);
    }
    out
}

/// 𝓘_L by brute force: Σ over κ with cycle lengths `lengths` of ∏_j Tr(ρ_{κ_{j,1}}⋯).
pub fn quantifier(e: &InternalEnsemble, lengths: &[usize]) -> f64 {
    let ms = ensemble_matrices(e);
    let mut total = C64::new(0.0, 0.0);
    for p in perms(4) {
        let cs = cycles(&p);
        let mut ls: Vec<usize> = cs.iter().map(Vec::len).collect();
        ls.sort_unstable();
        if ls != lengths {
            continue;
        }
        let mut prod = C64::new(1.0, 0.0);
        for c in &cs {
            let m = c.iter().skip(1).fold(ms[c[0]].clone(), |acc, &k| acc * &ms[k]);
            prod *= m.trace();
        }
        total += prod;
    }
    total.re
}
