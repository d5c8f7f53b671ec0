use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::fft::C64;
use crate::rng::Rng;

use super::*;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum RandomizePolicy {
    Never,
    /// Step 6̃ only for passes flagged as inelastic.
    #[default]
    OnInelastic,
    Always,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ProtocolOptions {
    pub mode: SpecimenMode,
    pub randomize: RandomizePolicy,
    pub xi_sign: XiSign,
}

/// What one electron meets on its way through the specimen.
#[derive(Debug, Clone, Copy, Default)]
pub struct Passage<'a> {
    pub specimen: Option<&'a PhaseMap>,
    /// Real-space envelope multiplied onto the electron after the specimen
    /// (an inelastic event); the state is renormalized afterwards.
    pub envelope: Option<&'a [C64]>,
}

/// State right before Step 7 (Steps 2–6 or 6̃).
pub fn prepare_pass(
    m: usize,
    q1: Q1State,
    passage: &Passage,
    opts: &ProtocolOptions,
    xi: Option<&XiMap>,
) -> Result<JointState> {
    let inc = make_incident(m, Incident::Superposition)?;
    let mut st = JointState::product(&inc, m, q1)?;
    entangle_cnot(&mut st)?;
    if let Some(map) = passage.specimen {
        apply_specimen(&mut st, map, opts.mode)?;
    }
    if let Some(env) = passage.envelope {
        if env.len() != m * m {
            return Err(Error::Input("envelope size does not match the grid".into()));
        }
        let mm = m * m;
        for (i, a) in st.amps.iter_mut().enumerate() {
            *a *= env[i % mm];
        }
        st.normalize()?;
    }
    qft2d(&mut st, false);
    match xi {
        Some(x) => apply_xi(&mut st, x)?,
        None => phase_plate_step6(&mut st),
    }
    Ok(st)
}

fn wants_xi(passage: &Passage, opts: &ProtocolOptions) -> bool {
    match opts.randomize {
        RandomizePolicy::Never => false,
        RandomizePolicy::OnInelastic => passage.envelope.is_some(),
        RandomizePolicy::Always => true,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PassOutcome {
    pub q2_bit: u8,
    pub n_tilde: i64,
    pub m_hat: i64,
    pub q1: Q1State,
    pub randomized: bool,
}

/// Steps 2–10 for a single electron, sampling Q2 and the pixel.
pub fn electron_pass(
    m: usize,
    q1: Q1State,
    passage: &Passage,
    opts: &ProtocolOptions,
    rng: &mut Rng,
) -> Result<PassOutcome> {
    let xi = if wants_xi(passage, opts) { Some(XiMap::generate(m, opts.xi_sign, rng)?) } else { None };
    let mut st = prepare_pass(m, q1, passage, opts, xi.as_ref())?;
    let c = measure_q2(&mut st, rng)?;
    split_inverse_qft(&mut st);
    let px = measure_pixel(&st, rng)?;
    let q1 = if c == 1 { px.q1.swapped() } else { px.q1 };
    Ok(PassOutcome { q2_bit: c, n_tilde: px.n_tilde, m_hat: px.m_hat, q1, randomized: xi.is_some() })
}

/// One (c, ñ, m̂) branch of a pass with its probability and the unnormalized
/// Q1 amplitudes after Step 10.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Branch {
    pub q2_bit: u8,
    pub n_tilde: i64,
    pub m_hat: i64,
    pub probability: f64,
    pub q1: Q1State,
}

/// Enumerates every measurement branch of one pass without sampling.
pub fn pass_branches(
    m: usize,
    q1: Q1State,
    passage: &Passage,
    opts: &ProtocolOptions,
    xi: Option<&XiMap>,
) -> Result<Vec<Branch>> {
    let mut st = prepare_pass(m, q1, passage, opts, xi)?;
    split_inverse_qft(&mut st);
    let mm = m * m;
    let mut out = Vec::with_capacity(mm);
    for i in 0..mm {
        let row = i / m;
        let c = half_of_row(crate::fft::centered(row, m));
        let raw = Q1State { c_s: st.amps[i], c_a: st.amps[mm + i] };
        let q1 = if c == 1 { raw.swapped() } else { raw };
        out.push(Branch {
            q2_bit: c,
            n_tilde: n_tilde_of_row(row, m),
            m_hat: crate::fft::centered(i % m, m),
            probability: raw.c_s.norm_sqr() + raw.c_a.norm_sqr(),
            q1,
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RoundOutcome {
    pub round: usize,
    pub electron: usize,
    pub q2_bit: u8,
    pub n_hat: i64,
    pub m_hat: i64,
    pub q1_after: Q1State,
}

/// k electron passes through `map` starting from normalize(|s̄⟩ + iα₀|ā⟩).
pub fn run_round(
    map: &PhaseMap,
    k: usize,
    alpha0: C64,
    opts: &ProtocolOptions,
    round: usize,
    rng: &mut Rng,
) -> Result<(Q1State, Vec<RoundOutcome>)> {
    if k == 0 {
        return Err(Error::Domain("repetition number k must be at least 1".into()));
    }
    let mut q1 = Q1State::from_alpha(alpha0);
    let mut log = Vec::with_capacity(k);
    let passage = Passage { specimen: Some(map), envelope: None };
    for e in 0..k {
        let o = electron_pass(map.size(), q1, &passage, opts, rng)?;
        q1 = o.q1;
        log.push(RoundOutcome { round, electron: e, q2_bit: o.q2_bit, n_hat: o.n_tilde, m_hat: o.m_hat, q1_after: q1 });
    }
    Ok((q1, log))
}

pub fn outcomes_csv(outcomes: &[RoundOutcome]) -> String {
    let mut s = String::from("round,electron,q2,n_hat,m_hat\n");
    for o in outcomes {
        let _ = writeln!(s, "{},{},{},{},{}", o.round, o.electron, o.q2_bit, o.n_hat, o.m_hat);
    }
    s
}
