//! Multi-interrupt and exception insertion, and the IST/EST diversity
//! hashes.
//!
//! Events are inserted into the gaps between consecutive instructions, each
//! gap filled with one event with configurable probability until the
//! per-sequence caps bind. No event is placed before the first instruction:
//! a trap before any retirement exercises nothing the counters can see.

use alloc::vec::Vec;

use rand::Rng;

use crate::isa::{
    EventSlot, InputSequence, PrivilegeLevel, SequenceLimits, MAX_EXC_ID, MAX_INTR_ID,
};

/// Insertion policy: per-gap probability and the per-sequence caps.
#[derive(Clone, Copy, Debug)]
pub struct EventPlan {
    pub insert_prob: f64,
    pub max_intr: u8,
    pub max_exc: u8,
}

impl Default for EventPlan {
    fn default() -> Self {
        EventPlan { insert_prob: 0.5, max_intr: 3, max_exc: 3 }
    }
}

impl EventPlan {
    pub fn limits(&self) -> SequenceLimits {
        SequenceLimits { max_intr: self.max_intr, max_exc: self.max_exc }
    }
}

/// The IST/EST pair of one sequence, computed solely from its ordered
/// event ids.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct StateTransition {
    pub ist: u16,
    pub est: u16,
}

/// Insert events into the gaps between instructions.
///
/// Every gap between two consecutive instruction slots is eligible; with
/// probability `insert_prob` it receives one uniformly drawn event —
/// interrupt or exception 50/50 while both caps are open, the open class
/// otherwise. Interrupts get a uniform id 1..=9 and uniform privilege
/// level, exceptions a uniform id 1..=14. Instruction order and count are
/// unchanged; existing events count toward the caps.
pub fn insert_events<R: Rng + ?Sized>(
    seq: &InputSequence,
    plan: &EventPlan,
    rng: &mut R,
) -> InputSequence {
    let mut intr_budget = (plan.max_intr as usize).saturating_sub(seq.intr_count());
    let mut exc_budget = (plan.max_exc as usize).saturating_sub(seq.exc_count());

    let mut out: Vec<EventSlot> = Vec::with_capacity(seq.slots().len() + 4);
    let mut instrs_seen = 0usize;
    let total_instrs = seq.instr_len();
    for slot in seq.slots() {
        if slot.is_instr() {
            instrs_seen += 1;
            out.push(*slot);
            // A gap follows every instruction except the last.
            if instrs_seen < total_instrs
                && (intr_budget > 0 || exc_budget > 0)
                && rng.gen_bool(plan.insert_prob)
            {
                let pick_intr = if intr_budget > 0 && exc_budget > 0 {
                    rng.gen_bool(0.5)
                } else {
                    intr_budget > 0
                };
                if pick_intr {
                    intr_budget -= 1;
                    out.push(EventSlot::Interrupt {
                        id: rng.gen_range(1..=MAX_INTR_ID),
                        priv_level: PrivilegeLevel::ALL[rng.gen_range(0..3)],
                    });
                } else {
                    exc_budget -= 1;
                    out.push(EventSlot::Exception { id: rng.gen_range(1..=MAX_EXC_ID) });
                }
            }
        } else {
            out.push(*slot);
        }
    }
    InputSequence::new(out, seq.limits()).expect("insertion preserves validity")
}

/// Shift-xor hash over ordered ids: `acc = (acc << 1) ^ next`, starting at
/// the first id. A single id hashes as `(id << 1) ^ 0`; no ids hash to 0.
fn transition_hash(ids: &[u8]) -> u16 {
    match ids {
        [] => 0,
        [only] => (*only as u16) << 1,
        [first, rest @ ..] => {
            let mut acc = *first as u16;
            for id in rest {
                acc = (acc << 1) ^ (*id as u16);
            }
            acc
        }
    }
}

/// Interruption state transition of a sequence.
pub fn compute_ist(seq: &InputSequence) -> u16 {
    transition_hash(&seq.interrupt_ids())
}

/// Exception state transition of a sequence.
pub fn compute_est(seq: &InputSequence) -> u16 {
    transition_hash(&seq.exception_ids())
}

pub fn state_transition(seq: &InputSequence) -> StateTransition {
    StateTransition { ist: compute_ist(seq), est: compute_est(seq) }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::isa::{random_sequence, Instruction};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn plain(n: usize) -> InputSequence {
        InputSequence::from_instrs(vec![Instruction::nop(); n]).unwrap()
    }

    #[test]
    fn zero_probability_returns_sequence_unchanged() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let seq = plain(10);
        let out = insert_events(&seq, &EventPlan { insert_prob: 0.0, ..Default::default() }, &mut rng);
        assert_eq!(out, seq);
    }

    #[test]
    fn zero_caps_insert_nothing() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let seq = plain(10);
        let plan = EventPlan { insert_prob: 1.0, max_intr: 0, max_exc: 0 };
        let out = insert_events(&seq, &plan, &mut rng);
        assert_eq!(out.intr_count(), 0);
        assert_eq!(out.exc_count(), 0);
        assert_eq!(out.instr_len(), 10);
    }

    #[test]
    fn gap_fill_fraction_matches_probability() {
        // Monte-Carlo oracle over the uniform sampler: with unbounded caps,
        // the fraction of filled gaps converges to insert_prob.
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let gaps_per_seq = 101usize - 1;
        let trials = 100usize;
        let plan = EventPlan { insert_prob: 0.5, max_intr: 255, max_exc: 255 };
        let mut filled = 0usize;
        for _ in 0..trials {
            let seq = InputSequence::new(
                (0..101).map(|_| crate::isa::EventSlot::Instr(Instruction::nop())).collect(),
                plan.limits(),
            )
            .unwrap();
            let out = insert_events(&seq, &plan, &mut rng);
            filled += out.intr_count() + out.exc_count();
        }
        let frac = filled as f64 / (gaps_per_seq * trials) as f64;
        assert!((frac - 0.5).abs() < 0.05, "fill fraction {frac}");
    }

    #[test]
    fn caps_never_exceeded() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let plan = EventPlan { insert_prob: 1.0, max_intr: 3, max_exc: 3 };
        for _ in 0..200 {
            let base = random_sequence(&mut rng, 30, plan.limits());
            let out = insert_events(&base, &plan, &mut rng);
            assert!(out.intr_count() <= 3);
            assert!(out.exc_count() <= 3);
        }
    }

    #[test]
    fn insertion_preserves_instruction_order() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let plan = EventPlan::default();
        for _ in 0..100 {
            let base = random_sequence(&mut rng, 15, plan.limits());
            let out = insert_events(&base, &plan, &mut rng);
            let before: Vec<_> = base.instructions().copied().collect();
            let after: Vec<_> = out.instructions().copied().collect();
            assert_eq!(before, after);
        }
    }

    #[test]
    fn ist_worked_examples() {
        // Interrupts [I3, I7]: (3 << 1) ^ 7 = 1.
        assert_eq!(transition_hash(&[3, 7]), 1);
        // Exceptions [E2] alone: (2 << 1) ^ 0 = 4.
        assert_eq!(transition_hash(&[2]), 4);
        // No events: empty fold.
        assert_eq!(transition_hash(&[]), 0);
        // [E1, E1]: (1 << 1) ^ 1 = 3.
        assert_eq!(transition_hash(&[1, 1]), 3);
    }

    #[test]
    fn ist_est_from_sequences() {
        let text = "nop\nintr I3 prio=M\nnop\nintr I7 prio=S\nexc E2\nnop\n";
        let seq = InputSequence::parse_text(text).unwrap();
        assert_eq!(compute_ist(&seq), 1);
        assert_eq!(compute_est(&seq), 4);
        let no_events = plain(3);
        assert_eq!(compute_ist(&no_events), 0);
        assert_eq!(compute_est(&no_events), 0);
    }

    #[test]
    fn multi_event_ist_diversity_exceeds_single() {
        // Fig-10-style direction: caps of 3 reach strictly more distinct
        // IST values than caps of 1 over the same 1000-input corpus.
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let mut multi = alloc::collections::BTreeSet::new();
        let mut single = alloc::collections::BTreeSet::new();
        let multi_plan = EventPlan { insert_prob: 0.5, max_intr: 3, max_exc: 3 };
        let single_plan = EventPlan { insert_prob: 0.5, max_intr: 1, max_exc: 1 };
        for _ in 0..1000 {
            let base = plain(12);
            multi.insert(compute_ist(&insert_events(&base, &multi_plan, &mut rng)));
            single.insert(compute_ist(&insert_events(&base, &single_plan, &mut rng)));
        }
        assert!(multi.len() > single.len(), "{} vs {}", multi.len(), single.len());
    }
}
