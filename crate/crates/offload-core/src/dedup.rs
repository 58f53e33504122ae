//! Leader-side data deduplication.
//!
//! Two layers live here. The analytical layer is what the simulator's cost
//! chain uses: each follower chunk carries a redundancy ratio beta, the
//! leader receives D_r = sum(delta_j * d_j) bits and keeps
//! D_u = sum((1 - beta_j) * delta_j * d_j) unique bits, and hashing costs
//! (c_bit + c_sub / L_avg) cycles per received bit plus a flat per-chunk
//! overhead. The byte-level layer validates that model: payloads are split
//! into content-defined sub-chunks by a 64-bit gear rolling hash, sub-chunks
//! are fingerprinted with SHA-256, and a fingerprint store measures the
//! byte-weighted redundancy actually removed.

use std::collections::HashMap;

use rand::Rng;
use sha2::{Digest as _, Sha256};
use thiserror::Error;

use crate::config::SimConfig;

pub type Digest = [u8; 32];

/// Cycle-cost constants of the dedup stage.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DedupParams {
    pub cycles_per_bit: f64,
    pub cycles_per_subchunk: f64,
    pub avg_subchunk_bits: f64,
    pub cycles_per_chunk: f64,
}

impl DedupParams {
    pub fn from_config(cfg: &SimConfig) -> Self {
        DedupParams {
            cycles_per_bit: cfg.cycles_per_bit,
            cycles_per_subchunk: cfg.cycles_per_subchunk,
            avg_subchunk_bits: cfg.avg_subchunk_bits,
            cycles_per_chunk: cfg.cycles_per_chunk,
        }
    }

    /// Effective cycles per received bit: per-bit hashing plus the per-
    /// sub-chunk lookup amortized over the mean sub-chunk length.
    pub fn cycles_per_received_bit(&self) -> f64 {
        self.cycles_per_bit + self.cycles_per_subchunk / self.avg_subchunk_bits
    }
}

/// Received and unique data volumes for one slot, in bits.
/// `deltas`, `chunk_bits` and `redundancy` are per follower.
pub fn data_volumes(deltas: &[f64], chunk_bits: &[f64], redundancy: &[f64]) -> (f64, f64) {
    debug_assert_eq!(deltas.len(), chunk_bits.len());
    debug_assert_eq!(deltas.len(), redundancy.len());
    let mut received = 0.0;
    let mut unique = 0.0;
    for ((&dl, &d), &beta) in deltas.iter().zip(chunk_bits).zip(redundancy) {
        received += dl * d;
        unique += (1.0 - beta) * dl * d;
    }
    (received, unique)
}

/// Wall-clock seconds the leader spends hashing and table-maintaining one
/// slot's received data. The flat per-chunk overhead is charged for every
/// follower whether or not it offloaded anything.
pub fn dedup_time(received_bits: f64, n_followers: usize, params: &DedupParams, cpu_hz: f64) -> f64 {
    (params.cycles_per_received_bit() * received_bits + params.cycles_per_chunk * n_followers as f64)
        / cpu_hz
}

/// CPU energy of the dedup stage: kappa * f^2 * t.
pub fn dedup_energy(cpu_energy_coeff: f64, cpu_hz: f64, dedup_time_s: f64) -> f64 {
    cpu_energy_coeff * cpu_hz * cpu_hz * dedup_time_s
}

// --- byte-level content-defined chunking ---

/// Sub-chunk boundary tuning. `avg_bytes` must be a power of two; it sets
/// the boundary mask, so the expected sub-chunk length is roughly
/// `min_bytes + avg_bytes`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CdcParams {
    pub min_bytes: usize,
    pub avg_bytes: usize,
    pub max_bytes: usize,
}

impl CdcParams {
    pub fn from_config(cfg: &SimConfig) -> Self {
        CdcParams {
            min_bytes: cfg.subchunk_min_bytes,
            avg_bytes: cfg.subchunk_avg_bytes,
            max_bytes: cfg.subchunk_max_bytes,
        }
    }
}

impl Default for CdcParams {
    fn default() -> Self {
        CdcParams { min_bytes: 2048, avg_bytes: 8192, max_bytes: 65536 }
    }
}

const fn splitmix64(seed: u64) -> u64 {
    let mut x = seed.wrapping_add(0x9E3779B97F4A7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D049BB133111EB);
    x ^ (x >> 31)
}

const fn build_gear() -> [u64; 256] {
    let mut table = [0u64; 256];
    let mut i = 0;
    while i < 256 {
        table[i] = splitmix64(i as u64 + 0x5851F42D4C957F2D);
        i += 1;
    }
    table
}

/// Per-byte mixing table of the gear hash. The shift-and-add update gives
/// the hash a sliding window of the last 64 bytes, so boundaries only
/// depend on local content and re-synchronize after edits.
static GEAR: [u64; 256] = build_gear();

/// Split a payload into content-defined sub-chunks.
///
/// A boundary is declared at the first position at least `min_bytes` into
/// the current sub-chunk where the rolling hash has `log2(avg_bytes)` low
/// zero bits, or unconditionally at `max_bytes`. Concatenating the returned
/// slices reproduces the payload exactly; only the final slice may be
/// shorter than `min_bytes`.
pub fn cdc_split<'a>(payload: &'a [u8], params: &CdcParams) -> Vec<&'a [u8]> {
    assert!(params.avg_bytes.is_power_of_two(), "avg_bytes must be a power of two");
    assert!(params.min_bytes > 0 && params.min_bytes <= params.max_bytes);
    let mask = params.avg_bytes as u64 - 1;
    let mut out = Vec::with_capacity(payload.len() / (params.min_bytes + params.avg_bytes) + 1);
    let mut start = 0usize;
    let mut hash = 0u64;
    for (i, &byte) in payload.iter().enumerate() {
        hash = (hash << 1).wrapping_add(GEAR[byte as usize]);
        let len = i - start + 1;
        if (len >= params.min_bytes && hash & mask == 0) || len >= params.max_bytes {
            out.push(&payload[start..=i]);
            start = i + 1;
        }
    }
    if start < payload.len() {
        out.push(&payload[start..]);
    }
    out
}

/// SHA-256 fingerprint of a sub-chunk.
pub fn fingerprint(subchunk: &[u8]) -> Digest {
    let mut hasher = Sha256::new();
    hasher.update(subchunk);
    hasher.finalize().into()
}

/// Dedup result for one absorbed chunk.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChunkDedup {
    pub total_bytes: u64,
    pub duplicate_bytes: u64,
    pub unique_bytes: u64,
    /// Byte-weighted redundancy ratio; 0 for an empty chunk.
    pub beta: f64,
    pub subchunks: usize,
}

/// The leader's fingerprint table. Maps sub-chunk digests to their byte
/// lengths; optionally retains the unique sub-chunk payloads in insertion
/// order so test fixtures can splice known-duplicate byte ranges.
#[derive(Debug, Clone, Default)]
pub struct FingerprintStore {
    entries: HashMap<Digest, u64>,
    retained: Vec<Vec<u8>>,
    retain_payloads: bool,
}

impl FingerprintStore {
    pub fn new() -> Self {
        Self::default()
    }

    /// A store that keeps unique sub-chunk bytes for later synthesis.
    pub fn retaining_payloads() -> Self {
        FingerprintStore { retain_payloads: true, ..Self::default() }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn contains(&self, digest: &Digest) -> bool {
        self.entries.contains_key(digest)
    }

    /// Drop all fingerprints (slot boundary under the per-slot store policy).
    pub fn clear(&mut self) {
        self.entries.clear();
        self.retained.clear();
    }

    pub(crate) fn retained_subchunks(&self) -> &[Vec<u8>] {
        &self.retained
    }

    /// Process one incoming chunk sub-chunk by sub-chunk, in order: a
    /// sub-chunk whose digest is already present counts as duplicate bytes,
    /// an unseen one is inserted. Repeats inside a single chunk therefore
    /// count as duplicates from their second occurrence on.
    pub fn absorb_chunk(&mut self, payload: &[u8], cdc: &CdcParams) -> ChunkDedup {
        let mut duplicate = 0u64;
        let mut count = 0usize;
        for sub in cdc_split(payload, cdc) {
            count += 1;
            let digest = fingerprint(sub);
            if self.contains(&digest) {
                duplicate += sub.len() as u64;
            } else {
                self.entries.insert(digest, sub.len() as u64);
                if self.retain_payloads {
                    self.retained.push(sub.to_vec());
                }
            }
        }
        let total = payload.len() as u64;
        ChunkDedup {
            total_bytes: total,
            duplicate_bytes: duplicate,
            unique_bytes: total - duplicate,
            beta: if total == 0 { 0.0 } else { duplicate as f64 / total as f64 },
            subchunks: count,
        }
    }
}

/// Measure a chunk's redundancy ratio against the store, inserting its
/// unseen sub-chunks (the leader's sequential processing order).
pub fn redundancy_ratio(store: &mut FingerprintStore, payload: &[u8], cdc: &CdcParams) -> f64 {
    store.absorb_chunk(payload, cdc).beta
}

#[derive(Debug, Error, PartialEq)]
pub enum DedupError {
    #[error("planted redundancy {0} outside [0, 1]")]
    PlantedOutOfRange(f64),
    #[error("cannot plant redundancy {0} against a store with no retained payloads")]
    EmptyStore(f64),
}

/// Build a payload whose measured redundancy against `store` is close to
/// `planted_beta` (within about one sub-chunk of `size_bytes`).
///
/// The duplicate part replays the store's retained sub-chunks from the
/// beginning, cut at a sub-chunk boundary nearest the target volume; the
/// boundary-replay property of the gear hash makes those bytes re-hash to
/// stored fingerprints. The remainder is fresh random bytes. A payload
/// synthesized with `planted_beta = 1.0` at the original chunk size
/// reproduces that chunk exactly.
pub fn synth_chunk<R: Rng + ?Sized>(
    planted_beta: f64,
    size_bytes: usize,
    store: &FingerprintStore,
    rng: &mut R,
) -> Result<Vec<u8>, DedupError> {
    if !(0.0..=1.0).contains(&planted_beta) || planted_beta.is_nan() {
        return Err(DedupError::PlantedOutOfRange(planted_beta));
    }
    let target = (planted_beta * size_bytes as f64).round() as usize;
    let mut out = Vec::with_capacity(size_bytes);
    if target > 0 {
        if store.retained_subchunks().is_empty() {
            return Err(DedupError::EmptyStore(planted_beta));
        }
        let mut idx = 0usize;
        while out.len() < target && out.len() < size_bytes {
            let sub = &store.retained_subchunks()[idx % store.retained_subchunks().len()];
            let take = sub.len().min(size_bytes - out.len());
            // Stop at the boundary closest to the target volume, never
            // splitting a sub-chunk except against the payload end.
            if out.len() + take > target {
                let overshoot = out.len() + take - target;
                let undershoot = target - out.len();
                if undershoot < overshoot {
                    break;
                }
            }
            out.extend_from_slice(&sub[..take]);
            idx += 1;
        }
    }
    while out.len() < size_bytes {
        let fill: u64 = rng.gen();
        let bytes = fill.to_le_bytes();
        let take = bytes.len().min(size_bytes - out.len());
        out.extend_from_slice(&bytes[..take]);
    }
    Ok(out)
}

/// One follower's planted-vs-measured numbers from [`validate_planted`].
#[derive(Debug, Clone, Copy)]
pub struct PlantedMeasurement {
    pub planted: f64,
    pub measured: f64,
}

/// Byte-level replay of one slot's dedup: the store is pre-seeded with a
/// base payload (shared scene data), then every follower chunk is
/// synthesized at its planted redundancy and absorbed in order. Returns the
/// per-follower measurements plus analytic and measured unique volumes in
/// bits, for cross-checking the analytical cost model.
pub fn validate_planted<R: Rng + ?Sized>(
    planted: &[f64],
    chunk_bytes: usize,
    cdc: &CdcParams,
    rng: &mut R,
) -> Result<(Vec<PlantedMeasurement>, f64, f64), DedupError> {
    let mut store = FingerprintStore::retaining_payloads();
    let base: Vec<u8> = (0..chunk_bytes).map(|_| rng.gen()).collect();
    store.absorb_chunk(&base, cdc);

    let mut results = Vec::with_capacity(planted.len());
    let mut measured_unique_bits = 0.0;
    let mut analytic_unique_bits = 0.0;
    for &beta in planted {
        let payload = synth_chunk(beta, chunk_bytes, &store, rng)?;
        let outcome = store.absorb_chunk(&payload, cdc);
        results.push(PlantedMeasurement { planted: beta, measured: outcome.beta });
        measured_unique_bits += outcome.unique_bytes as f64 * 8.0;
        analytic_unique_bits += (1.0 - beta) * chunk_bytes as f64 * 8.0;
    }
    Ok((results, analytic_unique_bits, measured_unique_bits))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha12Rng;

    fn random_payload(rng: &mut ChaCha12Rng, len: usize) -> Vec<u8> {
        (0..len).map(|_| rng.gen()).collect()
    }

    #[test]
    fn hashing_cost_matches_hand_computed_values() {
        let params = DedupParams {
            cycles_per_bit: 10.0,
            cycles_per_subchunk: 0.0,
            avg_subchunk_bits: 65536.0,
            cycles_per_chunk: 1e6,
        };
        // Zero received bits still pay the per-chunk overhead.
        assert_relative_eq!(dedup_time(0.0, 4, &params, 2.8e9), 1.428571428571e-3, max_relative = 1e-12);
        let t = dedup_time(8e7, 4, &params, 2.8e9);
        assert_relative_eq!(t, 2.871428571429e-1, max_relative = 1e-12);
        assert_relative_eq!(dedup_energy(1e-27, 2.8e9, t), 2.2512e-9, max_relative = 1e-12);
    }

    #[test]
    fn per_subchunk_cycles_raise_the_bit_rate_cost() {
        let params = DedupParams {
            cycles_per_bit: 10.0,
            cycles_per_subchunk: 655.36,
            avg_subchunk_bits: 65536.0,
            cycles_per_chunk: 0.0,
        };
        assert_relative_eq!(params.cycles_per_received_bit(), 10.01, max_relative = 1e-12);
    }

    #[test]
    fn volumes_accumulate_per_follower() {
        let (received, unique) =
            data_volumes(&[1.0, 0.5, 0.0], &[2e7, 2e7, 2e7], &[0.5, 0.25, 0.9]);
        assert_relative_eq!(received, 3e7, max_relative = 1e-12);
        assert_relative_eq!(unique, 1e7 + 0.75 * 1e7, max_relative = 1e-12);
    }

    #[test]
    fn split_is_a_lossless_partition() {
        let mut rng = ChaCha12Rng::seed_from_u64(3);
        let payload = random_payload(&mut rng, 1 << 18);
        let params = CdcParams::default();
        let subs = cdc_split(&payload, &params);
        let glued: Vec<u8> = subs.iter().flat_map(|s| s.iter().copied()).collect();
        assert_eq!(glued, payload);
        for (i, s) in subs.iter().enumerate() {
            assert!(s.len() <= params.max_bytes);
            if i + 1 < subs.len() {
                assert!(s.len() >= params.min_bytes, "interior sub-chunk below minimum");
            }
        }
    }

    #[test]
    fn split_of_empty_payload_is_empty() {
        assert!(cdc_split(&[], &CdcParams::default()).is_empty());
    }

    #[test]
    fn identical_chunk_presented_twice_is_fully_redundant() {
        let mut rng = ChaCha12Rng::seed_from_u64(5);
        let payload = random_payload(&mut rng, 1 << 16);
        let params = CdcParams::default();
        let mut store = FingerprintStore::new();
        let first = store.absorb_chunk(&payload, &params);
        assert_eq!(first.beta, 0.0);
        let second = store.absorb_chunk(&payload, &params);
        assert_eq!(second.beta, 1.0);
        assert_eq!(second.unique_bytes, 0);
    }

    #[test]
    fn store_clear_forgets_everything() {
        let mut rng = ChaCha12Rng::seed_from_u64(6);
        let payload = random_payload(&mut rng, 1 << 15);
        let params = CdcParams::default();
        let mut store = FingerprintStore::new();
        store.absorb_chunk(&payload, &params);
        assert!(store.len() > 0);
        store.clear();
        assert!(store.is_empty());
        assert_eq!(store.absorb_chunk(&payload, &params).beta, 0.0);
    }

    #[test]
    fn synth_rejects_bad_inputs() {
        let mut rng = ChaCha12Rng::seed_from_u64(7);
        let store = FingerprintStore::retaining_payloads();
        assert_eq!(
            synth_chunk(1.5, 1024, &store, &mut rng).unwrap_err(),
            DedupError::PlantedOutOfRange(1.5)
        );
        assert_eq!(
            synth_chunk(0.5, 1024, &store, &mut rng).unwrap_err(),
            DedupError::EmptyStore(0.5)
        );
    }

    #[test]
    fn synth_zero_is_all_fresh_and_one_replays_exactly() {
        let mut rng = ChaCha12Rng::seed_from_u64(8);
        let params = CdcParams::default();
        let original = random_payload(&mut rng, 1 << 20);
        let mut store = FingerprintStore::retaining_payloads();
        store.absorb_chunk(&original, &params);

        let fresh = synth_chunk(0.0, 1 << 20, &store, &mut rng).unwrap();
        let mut probe = store.clone();
        assert_eq!(probe.absorb_chunk(&fresh, &params).beta, 0.0);

        let replay = synth_chunk(1.0, 1 << 20, &store, &mut rng).unwrap();
        assert_eq!(replay, original);
        let mut probe = store.clone();
        assert_eq!(probe.absorb_chunk(&replay, &params).beta, 1.0);
    }

    #[test]
    fn planted_half_lands_within_a_subchunk() {
        let mut rng = ChaCha12Rng::seed_from_u64(9);
        let params = CdcParams::default();
        let original = random_payload(&mut rng, 1 << 20);
        let mut store = FingerprintStore::retaining_payloads();
        store.absorb_chunk(&original, &params);
        let synth = synth_chunk(0.5, 1 << 20, &store, &mut rng).unwrap();
        let mut probe = store.clone();
        let outcome = probe.absorb_chunk(&synth, &params);
        assert!((outcome.beta - 0.5).abs() < 0.05, "measured beta {}", outcome.beta);
    }

    #[test]
    fn boundaries_resynchronize_after_a_prefix_insertion() {
        let mut rng = ChaCha12Rng::seed_from_u64(10);
        let params = CdcParams::default();
        let payload = random_payload(&mut rng, 1 << 20);
        let mut shifted = Vec::with_capacity(payload.len() + 1);
        shifted.push(0xA5);
        shifted.extend_from_slice(&payload);

        let digests: std::collections::HashSet<Digest> =
            cdc_split(&payload, &params).iter().map(|s| fingerprint(s)).collect();
        let shifted_subs = cdc_split(&shifted, &params);
        let preserved = shifted_subs.iter().filter(|s| digests.contains(&fingerprint(s))).count();
        let frac = preserved as f64 / shifted_subs.len() as f64;
        assert!(frac >= 0.9, "only {frac:.3} of sub-chunks survived a 1-byte shift");
    }
}
