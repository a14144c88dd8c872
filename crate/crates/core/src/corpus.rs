//! Ad corpus loading and preparation: validation, length filtering,
//! per-advertiser capping, near-duplicate removal, and leak-free splitting.
//!
//! Every operation is deterministic for a fixed seed and appends a
//! human-readable step descriptor to the corpus provenance trail.

use std::collections::{HashMap, HashSet};
use std::path::Path;
use std::sync::atomic::{AtomicBool, Ordering};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::{read_jsonl_lenient, write_jsonl, Reject};
use crate::text::{char_len, within_normalized_distance};

/// One ad: creative text plus delivery bookkeeping.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdRecord {
    pub id: String,
    pub advertiser_id: String,
    pub campaign_id: String,
    pub title: String,
    pub description: String,
    pub lp_meta: Option<String>,
    pub industry: String,
    pub keywords: Vec<String>,
    pub impressions: u64,
    pub clicks: u64,
}

impl AdRecord {
    /// The annotation text for this ad: title and description joined by a
    /// newline, omitting whichever side is empty.
    pub fn text(&self) -> String {
        match (self.title.is_empty(), self.description.is_empty()) {
            (true, _) => self.description.clone(),
            (_, true) => self.title.clone(),
            _ => format!("{}\n{}", self.title, self.description),
        }
    }

    /// Character count of title and description concatenated (no separator),
    /// the quantity the length filter operates on.
    pub fn creative_len(&self) -> usize {
        char_len(&self.title) + char_len(&self.description)
    }

    /// Empirical click-through rate; `None` when the ad has no impressions.
    pub fn ctr(&self) -> Option<f64> {
        if self.impressions == 0 {
            None
        } else {
            Some(self.clicks as f64 / self.impressions as f64)
        }
    }
}

/// An ordered collection of ads with unique ids and a provenance trail of
/// the preparation steps applied so far.
#[derive(Debug, Clone, Default)]
pub struct AdCorpus {
    pub records: Vec<AdRecord>,
    pub provenance: Vec<String>,
}

/// Result of a corpus load: the accepted records plus per-line rejects.
#[derive(Debug)]
pub struct LoadReport {
    pub corpus: AdCorpus,
    pub rejects: Vec<Reject>,
}

/// Loads ads from a JSONL file. Malformed lines and records whose clicks
/// exceed their impressions are collected as rejects; a duplicate id aborts
/// the load.
pub fn load_ads(path: &Path) -> Result<LoadReport> {
    let (parsed, mut rejects) = read_jsonl_lenient::<AdRecord>(path)?;
    let mut seen = HashSet::new();
    let mut records = Vec::with_capacity(parsed.len());
    for (line_no, record) in parsed {
        if !seen.insert(record.id.clone()) {
            return Err(Error::DuplicateId(record.id));
        }
        if record.clicks > record.impressions {
            rejects.push(Reject {
                line_no,
                reason: format!(
                    "clicks {} exceed impressions {}",
                    record.clicks, record.impressions
                ),
            });
            continue;
        }
        records.push(record);
    }
    rejects.sort_by_key(|r| r.line_no);
    let corpus = AdCorpus {
        provenance: vec![format!(
            "load {} ({} records, {} rejected)",
            path.display(),
            records.len(),
            rejects.len()
        )],
        records,
    };
    Ok(LoadReport { corpus, rejects })
}

/// Writes a corpus back to JSONL (one `AdRecord` per line, file order).
pub fn write_ads(path: &Path, corpus: &AdCorpus) -> Result<()> {
    write_jsonl(path, &corpus.records)
}

/// Writes a rejects report (`{"line_no", "reason"}` per line).
pub fn write_rejects(path: &Path, rejects: &[Reject]) -> Result<()> {
    write_jsonl(path, rejects)
}

impl AdCorpus {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    fn derive(&self, records: Vec<AdRecord>, step: String) -> AdCorpus {
        let mut provenance = self.provenance.clone();
        provenance.push(step);
        AdCorpus { records, provenance }
    }

    /// Keeps ads whose combined title+description character count lies in
    /// `[min_chars, max_chars]` (inclusive on both ends). Order-preserving
    /// and idempotent.
    pub fn filter_length(&self, min_chars: usize, max_chars: usize) -> AdCorpus {
        let records: Vec<AdRecord> = self
            .records
            .iter()
            .filter(|r| (min_chars..=max_chars).contains(&r.creative_len()))
            .cloned()
            .collect();
        let step = format!(
            "filter_length [{min_chars},{max_chars}] kept {}/{}",
            records.len(),
            self.records.len()
        );
        self.derive(records, step)
    }

    /// Caps every advertiser at `cap` records via seeded uniform sampling,
    /// keeping sampled records in file order. Advertisers at or under the
    /// cap are untouched. The per-advertiser choice depends only on the
    /// seed and the advertiser id, not on corpus iteration order.
    pub fn sample_per_advertiser(&self, cap: usize, seed: u64) -> AdCorpus {
        let mut group_positions: HashMap<&str, Vec<usize>> = HashMap::new();
        for (pos, record) in self.records.iter().enumerate() {
            group_positions
                .entry(record.advertiser_id.as_str())
                .or_default()
                .push(pos);
        }
        let mut keep = vec![true; self.records.len()];
        for (advertiser, positions) in &group_positions {
            if positions.len() <= cap {
                continue;
            }
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ fnv1a64(advertiser.as_bytes()));
            let chosen = rand::seq::index::sample(&mut rng, positions.len(), cap);
            let chosen: HashSet<usize> = chosen.into_iter().collect();
            for (offset, &pos) in positions.iter().enumerate() {
                if !chosen.contains(&offset) {
                    keep[pos] = false;
                }
            }
        }
        let records: Vec<AdRecord> = self
            .records
            .iter()
            .enumerate()
            .filter(|(pos, _)| keep[*pos])
            .map(|(_, r)| r.clone())
            .collect();
        let step = format!(
            "sample_per_advertiser cap={cap} seed={seed} kept {}/{}",
            records.len(),
            self.records.len()
        );
        self.derive(records, step)
    }

    /// Greedy first-wins near-duplicate removal over the whole corpus: a
    /// record is dropped when its title+description text is within the
    /// normalized edit-distance `threshold` of any earlier retained record.
    /// Exact duplicates are always dropped (distance 0). A length-difference
    /// pre-check skips pairs that cannot be within the threshold.
    pub fn dedup(&self, threshold: f64) -> AdCorpus {
        self.dedup_with_threads(threshold, 1)
    }

    /// [`dedup`](Self::dedup) with the scan over already-retained candidates
    /// spread across up to `threads` worker threads. The greedy keep/drop
    /// decision for each record is an existence test over the retained set,
    /// so the output is identical to the sequential scan for any thread
    /// count.
    pub fn dedup_with_threads(&self, threshold: f64, threads: usize) -> AdCorpus {
        assert!(
            (0.0..=1.0).contains(&threshold),
            "dedup threshold must lie in [0, 1]"
        );
        let threads = threads.max(1);
        let texts: Vec<Vec<char>> = self.records.iter().map(|r| r.text().chars().collect()).collect();
        let mut retained: Vec<usize> = Vec::new();
        let mut exact: HashSet<&[char]> = HashSet::new();
        for (idx, text) in texts.iter().enumerate() {
            if exact.contains(text.as_slice()) {
                continue;
            }
            // Parallelism only pays once the retained set is large enough to
            // amortize thread startup.
            let duplicate = if threads == 1 || retained.len() < 256 {
                retained
                    .iter()
                    .any(|&kept| within_normalized_distance(&texts[kept], text, threshold))
            } else {
                let hit = AtomicBool::new(false);
                let chunk = retained.len().div_ceil(threads);
                std::thread::scope(|scope| {
                    let (hit, texts) = (&hit, &texts);
                    for part in retained.chunks(chunk) {
                        scope.spawn(move || {
                            for &kept in part {
                                if hit.load(Ordering::Relaxed) {
                                    return;
                                }
                                if within_normalized_distance(&texts[kept], text, threshold) {
                                    hit.store(true, Ordering::Relaxed);
                                    return;
                                }
                            }
                        });
                    }
                });
                hit.load(Ordering::Relaxed)
            };
            if !duplicate {
                retained.push(idx);
                exact.insert(text.as_slice());
            }
        }
        let records: Vec<AdRecord> = retained.iter().map(|&i| self.records[i].clone()).collect();
        let step = format!(
            "dedup threshold={threshold} (global greedy) kept {}/{}",
            records.len(),
            self.records.len()
        );
        self.derive(records, step)
    }

    /// Splits the corpus into train/dev/test by whole campaigns so no
    /// campaign straddles two splits. Campaigns are assigned greedily, in
    /// seed-shuffled order, to the split with the largest remaining record
    /// deficit; record proportions therefore approximate the ratios as
    /// closely as whole-campaign assignment allows.
    pub fn split_by_campaign(
        &self,
        ratios: (f64, f64, f64),
        seed: u64,
    ) -> Result<(AdCorpus, AdCorpus, AdCorpus)> {
        let r = [ratios.0, ratios.1, ratios.2];
        if r.iter().any(|v| !v.is_finite() || *v < 0.0) || r.iter().sum::<f64>() <= 0.0 {
            return Err(Error::invalid(format!(
                "split ratios must be non-negative with positive sum, got {ratios:?}"
            )));
        }
        let total: f64 = r.iter().sum();
        let targets: Vec<f64> = r
            .iter()
            .map(|v| v / total * self.records.len() as f64)
            .collect();

        // Campaigns in first-appearance order, then a seeded shuffle.
        let mut campaign_order: Vec<&str> = Vec::new();
        let mut campaign_sizes: HashMap<&str, usize> = HashMap::new();
        for record in &self.records {
            let entry = campaign_sizes.entry(record.campaign_id.as_str()).or_insert(0);
            if *entry == 0 {
                campaign_order.push(record.campaign_id.as_str());
            }
            *entry += 1;
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rand::seq::SliceRandom::shuffle(campaign_order.as_mut_slice(), &mut rng);

        let mut assigned = [0.0f64; 3];
        let mut split_of: HashMap<&str, usize> = HashMap::new();
        for campaign in campaign_order {
            let mut best = None;
            for s in 0..3 {
                if r[s] == 0.0 {
                    continue;
                }
                let deficit = targets[s] - assigned[s];
                let better = match best {
                    None => true,
                    Some((_, best_deficit)) => deficit > best_deficit,
                };
                if better {
                    best = Some((s, deficit));
                }
            }
            let (split, _) = best.expect("at least one ratio is positive");
            assigned[split] += campaign_sizes[campaign] as f64;
            split_of.insert(campaign, split);
        }

        let mut parts: [Vec<AdRecord>; 3] = [Vec::new(), Vec::new(), Vec::new()];
        for record in &self.records {
            let split = split_of[record.campaign_id.as_str()];
            parts[split].push(record.clone());
        }
        let names = ["train", "dev", "test"];
        let [p0, p1, p2] = parts;
        let mut out = Vec::with_capacity(3);
        for (i, records) in [p0, p1, p2].into_iter().enumerate() {
            let step = format!(
                "split_by_campaign {} ratios={:?} seed={} ({} records)",
                names[i],
                ratios,
                seed,
                records.len()
            );
            out.push(self.derive(records, step));
        }
        let mut it = out.into_iter();
        Ok((it.next().unwrap(), it.next().unwrap(), it.next().unwrap()))
    }
}

pub(crate) fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut hash = 0xcbf29ce484222325u64;
    for &b in bytes {
        hash ^= b as u64;
        hash = hash.wrapping_mul(0x100000001b3);
    }
    hash
}
