use bpcm::channel::{modulation_capacity, AwgnSpec};
use bpcm::constellation::{Constellation, Labeling};
use bpcm::construction::{construct_gade, ChannelProfile};
use bpcm::mapping::*;
use bpcm::polar::{make_subcodes, PolarCode};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn sp(bits: usize) -> Constellation {
    Constellation::ask(bits, Labeling::SetPartition).unwrap()
}

fn gray(bits: usize) -> Constellation {
    Constellation::ask(bits, Labeling::Gray).unwrap()
}

fn random_code(n: usize, rng: &mut ChaCha8Rng) -> PolarCode {
    PolarCode::new((0..n).map(|_| rng.random_bool(0.5)).collect()).unwrap()
}

fn random_bits(k: usize, rng: &mut ChaCha8Rng) -> Vec<u8> {
    (0..k).map(|_| rng.random_range(0..2u8)).collect()
}

fn noise(y: &mut [f64], sigma: f64, rng: &mut ChaCha8Rng) {
    for v in y {
        let z: f64 = rng.sample(rand_distr::StandardNormal);
        *v += sigma * z;
    }
}

#[test]
fn four_ask_p1_and_p2_placement() {
    let c = sp(2);
    let layout = SymbolLayout::direct(8, 2).unwrap();
    let sub = vec![vec![1, 0, 1, 0], vec![1, 1, 0, 0]];
    let p1 = BitPermutationMap::uniform(2, 4, 0).unwrap();
    let p2 = BitPermutationMap::uniform(2, 4, 1).unwrap();
    let y1 = bpcm_map(&sub, &p1, &c, &layout).unwrap();
    let y2 = bpcm_map(&sub, &p2, &c, &layout).unwrap();
    for i in 0..4 {
        let (a, b) = (sub[0][i], sub[1][i]);
        assert_eq!(y1[i], c.map_bits(&[a, b]).unwrap());
        assert_eq!(y2[i], c.map_bits(&[b, a]).unwrap());
    }
    let zeros = bpcm_map(&[vec![0; 4], vec![0; 4]], &p2, &c, &layout).unwrap();
    assert!(zeros.iter().all(|&y| y == c.map_bits(&[0, 0]).unwrap()));
    assert!(bpcm_map(&sub[..1], &p1, &c, &layout).is_err());
    assert!(bpcm_map(&sub, &BitPermutationMap::uniform(2, 3, 0).unwrap(), &c, &layout).is_err());
}

#[test]
fn eight_ask_pairs_carry_xor() {
    let layout = build_8ask_layout(8).unwrap();
    let c = sp(3);
    let pmap = BitPermutationMap::uniform(3, layout.n_symbols(), 0).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..20 {
        let sub: Vec<Vec<u8>> = (0..4).map(|_| random_bits(2, &mut rng)).collect();
        let flat = sub.concat();
        let y = bpcm_map(&sub, &pmap, &c, &layout).unwrap();
        for (s, slots) in layout.symbols().iter().enumerate() {
            let bits: Vec<u8> = slots
                .iter()
                .map(|slot| match *slot {
                    Slot::Bit(p) => flat[p],
                    Slot::PairHead { head, tail } => flat[head] ^ flat[tail],
                    Slot::PairTail { tail, .. } => flat[tail],
                    Slot::Filler => 0,
                })
                .collect();
            assert_eq!(y[s], c.map_bits(&bits).unwrap());
        }
    }
}

#[test]
fn eight_ask_layout_structure() {
    let layout = build_8ask_layout(1024).unwrap();
    assert_eq!(layout.n_symbols(), 342);
    assert_eq!(layout.subcodes(), 4);
    let json = serde_json::to_value(&layout).unwrap();
    assert_eq!(json["n_symbols"], 342);
    assert_eq!(json["filler_positions"].as_array().unwrap().len(), 2);
    let pairs = json["polar_pairs"].as_array().unwrap();
    for p in pairs {
        assert_eq!(p["first"][1], p["second"][1]);
    }
    // The fillers sit on the high level of the final symbols.
    for f in json["filler_positions"].as_array().unwrap() {
        assert_eq!(f[1], 2);
        assert!(f[0].as_u64().unwrap() >= 340);
    }
    // The two levels of a split subcode each take a uniform share of
    // every quarter of its block.
    let l = 256;
    let mut low = vec![0usize; 4];
    for slots in layout.symbols() {
        if let Slot::PairTail { tail, .. } = slots[0] {
            low[(tail - l) / 64] += 1;
        }
    }
    assert!(low.iter().all(|&c| (21..=22).contains(&c)), "{low:?}");
}

#[test]
fn noiseless_round_trip_all_schemes() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for n in [8usize, 16, 64] {
        for bits in [1usize, 2, 3, 4] {
            if bits == 4 && n < 8 {
                continue;
            }
            let spec = AwgnSpec::from_sigma(0.01).unwrap();
            let code = random_code(n, &mut rng);
            let layout = SymbolLayout::for_constellation(n, bits).unwrap();
            let catalog = bpcm_catalog(bits).unwrap().len();
            let ids = (0..layout.n_symbols()).map(|_| rng.random_range(0..catalog)).collect();
            let pmap = BitPermutationMap::new(bits, ids).unwrap();
            let bpcm = BpcmSystem::new(code.clone(), sp(bits), pmap).unwrap();
            let bicm = BicmSystem::new(code.clone(), gray(bits), make_random_interleaver(n, 5)).unwrap();
            for _ in 0..50 {
                let info = random_bits(code.k_info(), &mut rng);
                let mut y = bpcm.modulate(&info).unwrap();
                noise(&mut y, 0.01, &mut rng);
                assert_eq!(bpcm.receive(&y, &spec).unwrap(), info, "BPCM N={n} k={bits}");
                let mut y = bicm.modulate(&info).unwrap();
                noise(&mut y, 0.01, &mut rng);
                assert_eq!(bicm.receive(&y, &spec).unwrap(), info, "BICM N={n} k={bits}");
            }
        }
    }
}

#[test]
fn bpsk_mlc_is_plain_sc() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let code = random_code(32, &mut rng);
    let spec = AwgnSpec::from_sigma(0.8).unwrap();
    let pmap = BitPermutationMap::uniform(1, 32, 0).unwrap();
    let bpcm = BpcmSystem::new(code.clone(), gray(1), pmap).unwrap();
    let bicm = BicmSystem::new(code.clone(), gray(1), Interleaver::identity(32)).unwrap();
    for _ in 0..100 {
        let info = random_bits(code.k_info(), &mut rng);
        let mut y = bpcm.modulate(&info).unwrap();
        assert_eq!(y, bicm.modulate(&info).unwrap());
        noise(&mut y, 0.8, &mut rng);
        assert_eq!(bpcm.receive(&y, &spec).unwrap(), bicm.receive(&y, &spec).unwrap());
    }
}

#[test]
fn genie_feedback_is_no_worse() {
    let spec = AwgnSpec::<f64>::from_es_n0_db(7.0);
    let profile = ChannelProfile::uniform_bpsk(64, &AwgnSpec::<f64>::from_es_n0_db(1.0));
    let code = construct_gade(64, 32, &profile, 6).unwrap();
    let sys = BpcmSystem::new(code.clone(), sp(2), BitPermutationMap::uniform(2, 32, 0).unwrap()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let (mut genie, mut feedback) = (0, 0);
    for _ in 0..3000 {
        let info = random_bits(32, &mut rng);
        let truth = sys.subcode_codewords(&info).unwrap();
        let mut y = sys.modulate(&info).unwrap();
        noise(&mut y, spec.sigma(), &mut rng);
        genie += usize::from(sys.receive_genie(&y, &spec, &truth).unwrap() != info);
        feedback += usize::from(sys.receive(&y, &spec).unwrap() != info);
    }
    assert!(feedback > 0);
    assert!(genie <= feedback, "genie {genie} vs feedback {feedback}");
}

#[test]
fn mlc_receive_wrapper_matches_system() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let code = random_code(16, &mut rng);
    let pmap = BitPermutationMap::uniform(2, 8, 1).unwrap();
    let spec = AwgnSpec::from_sigma(0.3).unwrap();
    let sys = BpcmSystem::new(code.clone(), sp(2), pmap.clone()).unwrap();
    let info = random_bits(code.k_info(), &mut rng);
    let mut y = sys.modulate(&info).unwrap();
    noise(&mut y, 0.3, &mut rng);
    assert_eq!(mlc_receive(&y, &pmap, &code, &sp(2), &spec).unwrap(), sys.receive(&y, &spec).unwrap());
    assert!(BpcmSystem::new(code, gray(2), pmap).is_err());
}

fn bpsk_code(n: usize, eb_n0_db: f64) -> PolarCode {
    let spec = AwgnSpec::<f64>::from_eb_n0_db(eb_n0_db, 0.5, 1);
    construct_gade(n, n / 2, &ChannelProfile::uniform_bpsk(n, &spec), n.trailing_zeros() as usize).unwrap()
}

#[test]
fn permutation_design_descends() {
    let code = bpsk_code(1024, 2.5);
    let spec = AwgnSpec::<f64>::from_eb_n0_db(6.0, 0.5, 2);
    let d = design_permutations(&code, &sp(2), &spec, 10).unwrap();
    assert!(d.estimate <= d.initial_estimate);
    assert!(d.trace.windows(2).all(|w| w[1] <= w[0]));
    let hist = d.map.histogram();
    assert!(hist[0] > 0 && hist[1] > 0, "{hist:?}");
    let again = bpcm_estimate(&code, &sp(2), &spec, &d.map).unwrap();
    assert!((again - d.estimate).abs() <= 1e-12 * d.estimate.max(1e-300));
}

#[test]
fn permutation_design_keeps_p1_when_everything_ties() {
    let code = bpsk_code(64, 2.5);
    let spec = AwgnSpec::from_sigma(1e-3).unwrap();
    let d = design_permutations(&code, &sp(3), &spec, 10).unwrap();
    assert!(d.estimate < 1e-15);
    assert!(d.map.perm_ids().iter().all(|&id| id == 0));
    assert_eq!(d.iterations, 1);
}

#[test]
fn permutation_design_on_eight_and_sixteen_ask() {
    let code = bpsk_code(128, 2.5);
    for (bits, db) in [(3usize, 9.0), (4, 11.0)] {
        let spec = AwgnSpec::<f64>::from_eb_n0_db(db, 0.5, bits);
        let d = design_permutations(&code, &sp(bits), &spec, 3).unwrap();
        assert_eq!(d.map.catalog_size(), if bits == 3 { 6 } else { 24 });
        assert!(d.estimate <= d.initial_estimate);
        assert!(d.trace.windows(2).all(|w| w[1] <= w[0]));
    }
}

#[test]
fn subcode_capacities_follow_the_chain_rule() {
    for bits in [2usize, 3, 4] {
        let c = sp(bits);
        let spec = AwgnSpec::<f64>::from_es_n0_db(3.0 * bits as f64);
        let table = CapacityTable::new(&c, &spec).unwrap();
        let total = modulation_capacity(&c, &spec);
        for perm in bpcm_catalog(bits).unwrap() {
            let mut mask = 0;
            let mut sum = 0.0;
            for &level in &perm {
                sum += table.capacity(level, mask);
                mask |= 1 << level;
            }
            assert!((sum - total).abs() < 2e-2, "{perm:?}: {sum} vs {total}");
        }
    }
}

#[test]
fn greedy_interleaver_improves_and_is_deterministic() {
    let code = bpsk_code(64, 2.5);
    let spec = AwgnSpec::<f64>::from_eb_n0_db(9.0, 0.5, 4);
    let a = greedy_interleaver(&code, &gray(4), &spec, 11).unwrap();
    let b = greedy_interleaver(&code, &gray(4), &spec, 11).unwrap();
    assert_eq!(a, b);
    assert!(a.estimate <= a.initial_estimate);
    assert!(a.trace.windows(2).all(|w| w[1] < w[0]));
    let start = BicmSystem::new(code.clone(), gray(4), make_random_interleaver(64, 11)).unwrap();
    assert_eq!(start.estimate(&spec).unwrap(), a.initial_estimate);
    let end = BicmSystem::new(code, gray(4), a.interleaver.clone()).unwrap();
    assert!((end.estimate(&spec).unwrap() - a.estimate).abs() <= 1e-12 * a.estimate);
    assert_eq!(a.interleaver.kind(), InterleaverKind::Greedy);
}

#[test]
fn random_interleaver_is_seeded_permutation() {
    let a = make_random_interleaver(256, 1);
    assert_eq!(a, make_random_interleaver(256, 1));
    assert_ne!(a, make_random_interleaver(256, 2));
    let mut p = a.permutation().to_vec();
    p.sort_unstable();
    assert_eq!(p, (0..256).collect::<Vec<_>>());
}

#[test]
fn sbp_rate_allocation() {
    let n = 1024;
    let c = sp(2);
    let spec = AwgnSpec::<f64>::from_es_n0_db(4.974);
    let code = construct_sbp_codes(n, &c, &spec, 0.5).unwrap();
    let sub = make_subcodes(&code, 2).unwrap();
    assert_eq!(code.k_info(), 512);
    assert!(sub.members[0].k_info() < sub.members[1].k_info());

    let quiet = AwgnSpec::<f64>::from_es_n0_db(40.0);
    let code = construct_sbp_codes(n, &sp(4), &quiet, 0.5).unwrap();
    let sub = make_subcodes(&code, 4).unwrap();
    let rates: Vec<usize> = sub.members.iter().map(|m| m.k_info()).collect();
    assert!(rates.iter().all(|&k| (120..=136).contains(&k)), "{rates:?}");

    let eight = construct_sbp_codes(n, &sp(3), &AwgnSpec::<f64>::from_es_n0_db(12.0), 0.5).unwrap();
    assert_eq!(eight.k_info(), 512);
    assert!(construct_sbp_codes(n, &c, &spec, 1.5).is_err());
}

#[test]
fn pbp_with_one_bit_matches_bpsk_design() {
    let n = 256;
    let spec = AwgnSpec::<f64>::from_es_n0_db(0.5);
    let pbp = construct_pbp_code(&gray(1), &spec, 0.5, &Interleaver::identity(n), None).unwrap();
    let bpsk = construct_gade(n, 128, &ChannelProfile::uniform_bpsk(n, &spec), 8).unwrap();
    assert_eq!(pbp.frozen(), bpsk.frozen());
}

#[test]
fn pbp_refinement_produces_a_code() {
    let n = 256;
    let spec = AwgnSpec::<f64>::from_es_n0_db(9.0);
    let refine = PbpRefinement { samples: 20_000, seed: 3 };
    let il = make_random_interleaver(n, 4);
    let a = construct_pbp_code(&gray(2), &spec, 0.5, &il, Some(refine)).unwrap();
    let b = construct_pbp_code(&gray(2), &spec, 0.5, &il, None).unwrap();
    assert_eq!(a.k_info(), 128);
    let common = a.info_positions().iter().filter(|p| b.info_positions().contains(p)).count();
    assert!(common >= 110, "{common}");
    assert_eq!(a, construct_pbp_code(&gray(2), &spec, 0.5, &il, Some(refine)).unwrap());
}

#[test]
fn json_formats() {
    let map = BitPermutationMap::new(4, vec![0, 23, 5]).unwrap();
    let v = serde_json::to_value(&map).unwrap();
    assert_eq!(v["n_symbols"], 3);
    assert_eq!(v["catalog_size"], 24);
    let back: BitPermutationMap = serde_json::from_value(v).unwrap();
    assert_eq!(back, map);
    assert!(serde_json::from_str::<BitPermutationMap>(r#"{"n_symbols":1,"catalog_size":2,"perm_ids":[2]}"#).is_err());
    assert!(serde_json::from_str::<BitPermutationMap>(r#"{"n_symbols":1,"catalog_size":8,"perm_ids":[0]}"#).is_err());

    let il = make_random_interleaver(16, 9);
    let v = serde_json::to_value(&il).unwrap();
    assert_eq!(v["N"], 16);
    assert_eq!(v["kind"], "random");
    assert_eq!(v["seed"], 9);
    let back: Interleaver = serde_json::from_value(v).unwrap();
    assert_eq!(back, il);
    assert!(serde_json::from_str::<Interleaver>(r#"{"N":2,"permutation":[0,0],"kind":"random","seed":1}"#).is_err());
}
