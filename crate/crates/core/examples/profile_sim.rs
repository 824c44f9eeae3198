use std::time::{Duration, Instant};
use timerate::model::Channel;
use timerate::rng::CounterRng;
use timerate::sim::{build_two_phase_erasure_scheme, TwoPhaseSchemeSpec};

fn main() {
    let scheme = build_two_phase_erasure_scheme(&TwoPhaseSchemeSpec {
        common_rate: 0.0, private_rate: 0.45, sigma: (0.5, 1.0),
        n: 2000, eps_weak: 0.5, codebook_seed: 7,
    }).unwrap();
    let _ = Channel::new(vec![2], vec![2], vec![vec![1.0,0.0],vec![0.0,1.0]]);
    let trials = 2000u64;
    let mut t_draw = Duration::ZERO;
    let mut t_rows = Duration::ZERO;
    let mut sink = 0u64;
    let block = &scheme.blocks[0];
    let words = block.bits.div_ceil(64);
    for trial in 0..trials {
        let t0 = Instant::now();
        let msg = CounterRng::new(7, trial, 0x100).next_bit_words(block.bits);
        let mut rng = CounterRng::new(7, trial, 0x201);
        let erased: Vec<bool> = (0..scheme.symbols).map(|_| rng.next_bool(0.5)).collect();
        t_draw += t0.elapsed();

        let t1 = Instant::now();
        // mimic row construction for the weak receiver at deadline = symbols
        let mut known = vec![0u64; words];
        for sym in block.systematic.clone() {
            if !erased[sym] {
                let bit = sym - block.systematic.start;
                known[bit / 64] |= 1 << (bit % 64);
            }
        }
        let unknown_mask: Vec<u64> = {
            let mut m = vec![u64::MAX; words];
            if block.bits % 64 != 0 { m[words-1] = (1u64 << (block.bits % 64)) - 1; }
            m.iter().zip(&known).map(|(f, k)| f & !k).collect()
        };
        let mut nrows = 0usize;
        let mut acc = 0u64;
        for seg in scheme.parities.iter().filter(|s| s.block == 0) {
            for (off, sym) in seg.range.clone().enumerate() {
                if erased[sym] { continue; }
                let sup = &seg.supports[off];
                let mut rhs = false;
                for w in 0..words {
                    rhs ^= ((sup[w] & msg[w]).count_ones() & 1) == 1;
                    rhs ^= ((sup[w] & known[w] & msg[w]).count_ones() & 1) == 1;
                    acc ^= sup[w] & unknown_mask[w];
                }
                nrows += 1;
                sink ^= rhs as u64;
            }
        }
        sink ^= acc ^ nrows as u64;
        t_rows += t1.elapsed();
    }
    println!("draw: {:?}/trial  rows: {:?}/trial  (sink {})", t_draw / trials as u32, t_rows / trials as u32, sink);
}
