//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

use std::collections::BTreeSet;
use std::path::PathBuf;
use std::time::Instant;

use nc3n_core::bloomfwd::{analytic_fp_rate, build_zfilter, forward_match, link_id, Edge};
use nc3n_core::gf256;
use nc3n_core::rlnc::{random_nonzero_vector, recode, Basis, CodedChunk, CodingError, DecoderState, Generation};
use nc3n_core::sim::scenario::trace_text;
use nc3n_core::sim::{run_scenario, ScenarioConfig, ScenarioOutcome};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::distribution::Binomial;
use statrs::statistics::Distribution;

type Check = fn() -> Result<String, String>;

/// Statistical criteria accept deviations up to this many standard errors.
const SE_BOUND: f64 = 3.0;
/// Relative tolerance on the coded completion time.
const RATE_TOLERANCE: f64 = 0.10;
/// Float slack for delays that are exact sums of link latencies.
const EXACT: f64 = 1e-12;
const FIG1_BUDGET_S: f64 = 1.0;
const RATE_BUDGET_S: f64 = 5.0;

fn scenario_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../scenarios")
        .join(name)
}

fn load(name: &str) -> ScenarioConfig {
    let text = std::fs::read_to_string(scenario_path(name)).expect("scenario file");
    ScenarioConfig::from_json(&text).expect("valid scenario")
}

fn run(name: &str) -> (ScenarioOutcome, f64) {
    let cfg = load(name);
    let t0 = Instant::now();
    let out = run_scenario(&cfg).expect("scenario runs");
    (out, t0.elapsed().as_secs_f64())
}

fn fig1() -> Result<String, String> {
    let (out, secs) = run("fig1.json");
    let off = &out.arm("nc_off").ok_or("missing nc_off arm")?.metrics;
    let on = &out.arm("nc_on").ok_or("missing nc_on arm")?.metrics;
    let d_off = &off.consumers["D"];
    let d_on = &on.consumers["D"];
    let checks = [
        (!d_off.complete, "uncoded arm must stay incomplete"),
        (
            d_off.held_chunks == [2, 3],
            "uncoded arm must hold exactly chunks {2,3}",
        ),
        (d_on.received == 4, "coded arm must receive 4 combinations"),
        (d_on.rank == 3, "coded arm must reach rank 3"),
        (
            d_on.complete && d_on.content_verified,
            "coded arm must decode the object",
        ),
        (
            off.total_transmissions() == on.total_transmissions(),
            "transmission counts must match",
        ),
        (secs < FIG1_BUDGET_S, "runtime budget"),
    ];
    for (ok, what) in checks {
        if !ok {
            return Err(format!("{what} (off={d_off:?}, on={d_on:?}, {secs:.3}s)"));
        }
    }
    Ok(format!(
        "off holds {:?}; on rank {} from {} arrivals; {} transmissions per arm; {:.3}s",
        d_off.held_chunks,
        d_on.rank,
        d_on.received,
        on.total_transmissions(),
        secs
    ))
}

fn multipath_waste() -> Result<String, String> {
    let (out, _) = run("multipath.json");
    let off = &out.arm("nc_off").ok_or("missing nc_off arm")?.metrics;
    let on = &out.arm("nc_on").ok_or("missing nc_on arm")?.metrics;
    let (r_off, r_on) = (&off.first_round["C"], &on.first_round["C"]);
    let (c_off, c_on) = (&off.consumers["C"], &on.consumers["C"]);
    let ok = r_off.received == 2
        && r_off.innovative == 1
        && r_off.useful_ratio == 0.5
        && c_off.useful_ratio == 0.5
        && r_on.received == 2
        && r_on.useful_ratio == 1.0
        && c_on.useful_ratio == 1.0
        && r_on.transmissions == r_off.transmissions;
    let line = format!(
        "first round off {}/{} useful ({} tx), on {}/{} useful ({} tx); overall ratio off {} on {}",
        r_off.innovative,
        r_off.received,
        r_off.transmissions,
        r_on.innovative,
        r_on.received,
        r_on.transmissions,
        c_off.useful_ratio,
        c_on.useful_ratio
    );
    if ok {
        Ok(line)
    } else {
        Err(line)
    }
}

fn rate_additivity() -> Result<String, String> {
    let (out, secs) = run("rate_additivity.json");
    let off = &out.arm("nc_off").ok_or("missing nc_off arm")?.metrics.consumers["C"];
    let on = &out.arm("nc_on").ok_or("missing nc_on arm")?.metrics.consumers["C"];
    let (chunks, wifi, cellular) = (40.0, 30.0, 10.0);
    let ideal = chunks / (wifi + cellular);
    let t_on = on.completion_time.ok_or("coded arm did not complete")?;
    let t_off = off.completion_time.ok_or("uncoded arm did not complete")?;
    let line = format!(
        "coded {t_on:.4}s vs ideal {ideal:.4}s (bound {:.0}%), uncoded {t_off:.4}s; {secs:.3}s wall",
        RATE_TOLERANCE * 100.0
    );
    let ok = ((t_on - ideal) / ideal).abs() <= RATE_TOLERANCE
        && t_off > t_on
        && on.content_verified
        && off.content_verified
        && secs < RATE_BUDGET_S;
    if ok {
        Ok(line)
    } else {
        Err(line)
    }
}

fn caching_delay() -> Result<String, String> {
    let (out, _) = run("caching_delay.json");
    let off = &out.arm("nc_off").ok_or("missing nc_off arm")?.metrics.consumers["N"];
    let on = &out.arm("nc_on").ok_or("missing nc_on arm")?.metrics.consumers["N"];
    let (lat_nr, lat_rr) = (0.015625, 0.0625);
    let near = 2.0 * lat_nr;
    let far = 2.0 * (lat_nr + lat_rr);
    let line = format!(
        "second chunk: coded {:?}, uncoded {:?}; expected {near} vs {far}",
        on.retrieval_times.get(1),
        off.retrieval_times.get(1)
    );
    let close = |v: Option<&f64>, want: f64| v.is_some_and(|x| (x - want).abs() < EXACT);
    let ok = close(on.retrieval_times.get(1), near)
        && close(off.retrieval_times.get(1), far)
        && close(on.retrieval_times.first(), far)
        && on.complete
        && off.complete;
    if ok {
        Ok(line)
    } else {
        Err(line)
    }
}

fn naive_det2(a: &[u8], b: &[u8]) -> u8 {
    gf256::add(gf256::mul(a[0], b[1]), gf256::mul(a[1], b[0]))
}

fn dependence_probability() -> Result<String, String> {
    const TRIALS: u64 = 1_000_000;
    let q = 256.0f64;
    let closed = (q - 1.0) / (q * q - 1.0);
    // exhaustive count over every nonzero partner of a fixed nonzero vector
    let v1 = [0x53u8, 0xCA];
    let mut dependent = 0u64;
    let mut total = 0u64;
    for x in 0..=255u8 {
        for y in 0..=255u8 {
            if (x, y) == (0, 0) {
                continue;
            }
            total += 1;
            dependent += u64::from(naive_det2(&v1, &[x, y]) == 0);
        }
    }
    let exhaustive = dependent as f64 / total as f64;
    if (exhaustive - closed).abs() > 1e-15 {
        return Err(format!("exhaustive {exhaustive} disagrees with closed form {closed}"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_0005);
    let mut hits = 0u64;
    for _ in 0..TRIALS {
        let a = random_nonzero_vector(2, &mut rng);
        let b = random_nonzero_vector(2, &mut rng);
        let rank = Basis::from_vectors(2, [&a, &b]).map_err(|e| e.to_string())?.rank();
        hits += u64::from(rank < 2);
    }
    let rate = hits as f64 / TRIALS as f64;
    let se = Binomial::new(closed, TRIALS)
        .map_err(|e| e.to_string())?
        .std_dev()
        .expect("defined")
        / TRIALS as f64;
    let z = (rate - closed) / se;
    let line = format!("empirical {rate:.6} vs {closed:.6} (z = {z:+.2}, {TRIALS} trials)");
    if z.abs() <= SE_BOUND {
        Ok(line)
    } else {
        Err(line)
    }
}

/// Rank by plain Gaussian elimination on copies of the vectors.
fn oracle_rank(k: usize, vectors: &[Vec<u8>]) -> usize {
    let mut rows: Vec<Vec<u8>> = vectors.to_vec();
    let mut rank = 0;
    for col in 0..k {
        let Some(p) = (rank..rows.len()).find(|&r| rows[r][col] != 0) else {
            continue;
        };
        rows.swap(rank, p);
        let inv = gf256::inv(rows[rank][col]).expect("nonzero pivot");
        let pivot: Vec<u8> = rows[rank].iter().map(|&x| gf256::mul(x, inv)).collect();
        for (r, row) in rows.iter_mut().enumerate() {
            if r != rank && row[col] != 0 {
                let c = row[col];
                for (x, p) in row.iter_mut().zip(&pivot) {
                    *x ^= gf256::mul(c, *p);
                }
            }
        }
        rows[rank] = pivot;
        rank += 1;
    }
    rank
}

fn decoder_oracle() -> Result<String, String> {
    const TRIALS: usize = 1000;
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_0006);
    let (mut full, mut short) = (0, 0);
    for trial in 0..TRIALS {
        let k = rng.gen_range(1..=32);
        let size = rng.gen_range(1..=48);
        let sources: Vec<Vec<u8>> = (0..k).map(|_| (0..size).map(|_| rng.gen()).collect()).collect();
        let g = Generation::new(trial as u64, size, sources.clone()).map_err(|e| e.to_string())?;
        let mut relay = DecoderState::new(trial as u64, k);
        for _ in 0..rng.gen_range(1..=k) {
            relay.add(&g.encode_random(&mut rng)).map_err(|e| e.to_string())?;
        }
        let count = rng.gen_range(0..=k + 2);
        let mut chunks: Vec<CodedChunk> = Vec::new();
        for _ in 0..count {
            let c = match rng.gen_range(0..3) {
                0 => g.encode_systematic(rng.gen_range(0..k)),
                1 => Ok(g.encode_random(&mut rng)),
                _ => recode(&relay.rows(), &mut rng),
            }
            .map_err(|e| e.to_string())?;
            chunks.push(c);
        }
        let mut d = DecoderState::new(trial as u64, k);
        for c in &chunks {
            d.add(c).map_err(|e| e.to_string())?;
        }
        let vectors: Vec<Vec<u8>> = chunks.iter().map(|c| c.vector.as_slice().to_vec()).collect();
        let rank = oracle_rank(k, &vectors);
        if d.rank() != rank {
            return Err(format!("trial {trial}: decoder rank {} vs oracle {rank}", d.rank()));
        }
        match d.decode() {
            Ok(out) if rank == k => {
                if out != sources {
                    return Err(format!("trial {trial}: decoded bytes differ from sources"));
                }
                full += 1;
            }
            Err(CodingError::InsufficientDof { rank: r, k: kk }) if rank < k && r == rank && kk == k => short += 1,
            other => return Err(format!("trial {trial}: rank {rank}/{k} but decode gave {other:?}")),
        }
    }
    Ok(format!(
        "{TRIALS} trials: {full} decoded byte-exact, {short} refused with the correct rank"
    ))
}

fn bloom_fp_analytics() -> Result<String, String> {
    const TRIALS: u64 = 100_000;
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_0007);
    let mut parts = Vec::new();
    let mut ok = true;
    for n in [5usize, 10, 20, 40] {
        let mut hits = 0u64;
        for _ in 0..TRIALS {
            let seed: u64 = rng.gen();
            let mut members = BTreeSet::new();
            while members.len() < n {
                members.insert(Edge::new(rng.gen(), rng.gen()));
            }
            let z = build_zfilter(&members, seed);
            let probe = loop {
                let e = Edge::new(rng.gen(), rng.gen());
                if !members.contains(&e) {
                    break e;
                }
            };
            hits += u64::from(forward_match(&z, &link_id(probe, seed)));
        }
        let p = analytic_fp_rate(n);
        let rate = hits as f64 / TRIALS as f64;
        let se = Binomial::new(p, TRIALS)
            .map_err(|e| e.to_string())?
            .std_dev()
            .expect("defined")
            / TRIALS as f64;
        let z = (rate - p) / se;
        ok &= z.abs() <= SE_BOUND;
        parts.push(format!("n={n}: {rate:.5} vs {p:.5} (z {z:+.2})"));
    }
    let line = parts.join("; ");
    if ok {
        Ok(line)
    } else {
        Err(line)
    }
}

fn coded_subgraph_benefit() -> Result<String, String> {
    let (out, _) = run("bloom_fp.json");
    let base = out
        .arm("baseline")
        .ok_or("missing baseline arm")?
        .metrics
        .bloom
        .clone()
        .ok_or("no bloom metrics")?;
    let coded = out
        .arm("coded")
        .ok_or("missing coded arm")?
        .metrics
        .bloom
        .clone()
        .ok_or("no bloom metrics")?;
    if coded.binding.is_none() {
        return Err("coded arm did not set up a coded segment".into());
    }
    if base.deliveries.values().any(Vec::is_empty) || base.deliveries != coded.deliveries {
        return Err(format!(
            "delivery multisets differ: baseline {:?} coded {:?}",
            base.deliveries.iter().map(|(k, v)| (k, v.len())).collect::<Vec<_>>(),
            coded.deliveries.iter().map(|(k, v)| (k, v.len())).collect::<Vec<_>>()
        ));
    }
    let line = format!(
        "{} subscribers get identical packet sets; false-positive link deliveries coded {} vs baseline {}",
        base.deliveries.len(),
        coded.false_positive_deliveries,
        base.false_positive_deliveries
    );
    if coded.false_positive_deliveries <= base.false_positive_deliveries {
        Ok(line)
    } else {
        Err(line)
    }
}

fn determinism() -> Result<String, String> {
    let mut names: Vec<String> = std::fs::read_dir(scenario_path(""))
        .map_err(|e| e.to_string())?
        .filter_map(|e| e.ok())
        .map(|e| e.file_name().to_string_lossy().into_owned())
        .filter(|n| n.ends_with(".json"))
        .collect();
    names.sort();
    for name in &names {
        let render = |o: &ScenarioOutcome| -> Vec<(String, String)> {
            o.arms
                .iter()
                .map(|a| (a.metrics.to_json(), trace_text(&a.trace)))
                .collect()
        };
        let (a, _) = run(name);
        let (b, _) = run(name);
        if render(&a) != render(&b) {
            return Err(format!("{name} differs between runs"));
        }
    }
    Ok(format!(
        "{} canonical scenarios byte-identical across reruns",
        names.len()
    ))
}

fn main() {
    let criteria: [(&str, Check); 9] = [
        ("1 fig1 reproduction", fig1),
        ("2 multipath bandwidth waste", multipath_waste),
        ("3 rate additivity", rate_additivity),
        ("4 caching delay", caching_delay),
        ("5 random-coding dependence probability", dependence_probability),
        ("6 decoder oracle equivalence", decoder_oracle),
        ("7 bloom false-positive analytics", bloom_fp_analytics),
        ("8 coded-subgraph benefit", coded_subgraph_benefit),
        ("9 determinism", determinism),
    ];
    let mut failed = 0;
    for (name, check) in criteria {
        match check() {
            Ok(detail) => println!("PASS [{name}] {detail}"),
            Err(detail) => {
                failed += 1;
                println!("FAIL [{name}] {detail}");
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
