//! Synthetic benchmark corpus generator: seeded, byte-reproducible ad
//! creatives with gold appeal spans and click counts drawn from a planted
//! CTR model.
//!
//! Each industry plants exactly one label whose presence lifts the true
//! CTR; the other labels come from a per-industry pool and are sampled
//! independently of clicks, so their correlation with CTR is zero by
//! construction. Appeal phrases end with `!`, filler sentences with `.`,
//! and the two-character prefixes of phrase-initial words are reserved:
//! no interior or filler word starts with one, which keeps span starts
//! identifiable from a local window.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution};

use crate::annotation::{GoldDocument, SpanAnnotation};
use crate::corpus::{AdCorpus, AdRecord};
use crate::error::{Error, Result};
use crate::taxonomy::{canonical_industry, NUM_LABELS};

/// Appeal phrase bodies per label (terminator `!` is appended by the
/// generator). The first word of every phrase is unique to its label.
const PHRASES: [(u8, [&str; 3]); NUM_LABELS] = [
    (1, ["bargain offers now", "bargain value pack", "bargain zone online"]),
    (2, ["discount 50% off", "discount rates drop", "discount 30% now"]),
    (3, ["points x5 bonus", "points club rewards", "points rally extra"]),
    (4, ["free shipping now", "free sample kit", "free returns online"]),
    (5, ["gift wrap bonus", "gift with order", "gift box extra"]),
    (6, ["features galore here", "features you want", "features rich plan"]),
    (7, ["quality craft award", "quality materials only", "quality rely on us"]),
    (8, ["solve your woes", "solve skin worries", "solve hassle zero"]),
    (9, ["instant 10min results", "instant setup here", "instant results online"]),
    (10, ["easy one tap apply", "easy use app", "easy signup here"]),
    (11, ["nearby city center", "nearby 5min walk", "nearby access good"]),
    (12, ["limited supply alert", "limited run items", "limited lot only"]),
    (13, ["deadline 3 days left", "deadline ends sunday", "deadline hurry now"]),
    (14, ["members only offer", "members zone access", "members club rates"]),
    (15, ["first purchase half off", "first visit bonus", "first order perks"]),
    (16, ["proven 30 year record", "proven by 10000 users", "proven award history"]),
    (17, ["top no.1 rated shop", "top share nationwide", "top rank 3 years"]),
    (18, ["catalog 500 items wide", "catalog full range", "catalog every look"]),
    (19, ["trending on sns now", "trending hot pick", "trending viral hit"]),
    (20, ["unique blend recipe", "unique hybrid build", "unique craft flow"]),
    (21, ["story of our founder", "story behind the brand", "story of the farm"]),
];

/// Filler sentence bodies (terminator `.` is appended by the generator).
const FILLER: [&str; 10] = [
    "your order ships here",
    "shop online anytime",
    "check our hours now",
    "welcome again folks",
    "browse and explore",
    "see what arrived",
    "open all week",
    "visit us anytime",
    "all sizes ready",
    "we pack well",
];

const KEYWORDS: [&str; 10] = [
    "online", "shopping", "app", "official", "plan", "service", "home", "local", "best", "value",
];

/// One synthetic industry: which label is planted (with a CTR lift) and
/// which labels appear without any effect on clicks.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthIndustry {
    pub name: String,
    pub planted: u8,
    pub lift: f64,
    pub pool: Vec<u8>,
}

impl SynthIndustry {
    fn new(name: &str, planted: u8, lift: f64, pool: &[u8]) -> Self {
        SynthIndustry {
            name: name.to_string(),
            planted,
            lift,
            pool: pool.to_vec(),
        }
    }
}

/// Generator settings. The presets cover the two benchmark shapes; all
/// fields are public so callers can adjust sizes.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub n_docs: usize,
    pub base_ctr: f64,
    pub industries: Vec<SynthIndustry>,
    pub phrases: BTreeMap<u8, Vec<String>>,
    pub filler: Vec<String>,
    pub keywords: Vec<String>,
    pub min_impressions: u64,
    pub max_impressions: u64,
    pub campaign_size: usize,
    pub advertisers_per_industry: usize,
}

fn builtin_phrases() -> BTreeMap<u8, Vec<String>> {
    PHRASES
        .iter()
        .map(|(label, bank)| (*label, bank.iter().map(|s| s.to_string()).collect()))
        .collect()
}

impl SynthConfig {
    /// Five industries, one planted label each with a uniform +0.05 lift;
    /// eight labels are active overall.
    pub fn default_detection() -> Self {
        SynthConfig {
            n_docs: 2800,
            base_ctr: 0.05,
            industries: vec![
                SynthIndustry::new("Finance", 3, 0.05, &[6, 13]),
                SynthIndustry::new("EC", 4, 0.05, &[6, 21]),
                SynthIndustry::new("Travel", 18, 0.05, &[13, 21]),
                SynthIndustry::new("Human resources", 9, 0.05, &[6, 13]),
                SynthIndustry::new("VOD&eBook", 17, 0.05, &[21, 6]),
            ],
            phrases: builtin_phrases(),
            filler: FILLER.iter().map(|s| s.to_string()).collect(),
            keywords: KEYWORDS.iter().map(|s| s.to_string()).collect(),
            min_impressions: 100,
            max_impressions: 10000,
            campaign_size: 5,
            advertisers_per_industry: 4,
        }
    }

    /// Same industries with larger, industry-specific lifts so aspect
    /// features carry a strong ranking signal.
    pub fn default_ctr() -> Self {
        let mut config = SynthConfig::default_detection();
        config.n_docs = 3000;
        let lifts = [0.10, 0.08, 0.09, 0.07, 0.06];
        for (industry, lift) in config.industries.iter_mut().zip(lifts) {
            industry.lift = lift;
        }
        config
    }

    /// First two characters of a word.
    fn prefix(word: &str) -> String {
        word.chars().take(2).collect()
    }

    /// Checks label ranges, CTR bounds, bank shapes, and the reserved
    /// phrase-initial prefix property.
    pub fn validate(&self) -> Result<()> {
        if self.n_docs == 0 {
            return Err(Error::invalid("n_docs must be positive"));
        }
        if self.industries.is_empty() {
            return Err(Error::invalid("at least one industry is required"));
        }
        if !(self.base_ctr > 0.0) {
            return Err(Error::invalid("base_ctr must be positive"));
        }
        if self.min_impressions == 0 || self.min_impressions > self.max_impressions {
            return Err(Error::invalid("invalid impressions range"));
        }
        if self.campaign_size == 0 || self.advertisers_per_industry == 0 {
            return Err(Error::invalid("campaign_size and advertisers must be positive"));
        }
        if self.filler.is_empty() || self.keywords.is_empty() {
            return Err(Error::invalid("filler and keyword banks must be non-empty"));
        }
        for industry in &self.industries {
            if canonical_industry(&industry.name) != industry.name {
                return Err(Error::invalid(format!(
                    "unknown industry name {:?}",
                    industry.name
                )));
            }
            if industry.lift < 0.0 || self.base_ctr + industry.lift > 1.0 {
                return Err(Error::invalid(format!(
                    "industry {:?} has an out-of-range lift",
                    industry.name
                )));
            }
            if industry.pool.is_empty() {
                return Err(Error::invalid(format!(
                    "industry {:?} needs a non-empty label pool",
                    industry.name
                )));
            }
            if industry.pool.contains(&industry.planted) {
                return Err(Error::invalid(format!(
                    "industry {:?} lists its planted label in the pool",
                    industry.name
                )));
            }
            for &label in std::iter::once(&industry.planted).chain(&industry.pool) {
                if label == 0 || label as usize > NUM_LABELS {
                    return Err(Error::invalid(format!("label {label} out of range")));
                }
                match self.phrases.get(&label) {
                    Some(bank) if !bank.is_empty() => {}
                    _ => {
                        return Err(Error::invalid(format!(
                            "no phrases configured for label {label}"
                        )))
                    }
                }
            }
        }

        // Reserved-prefix property over every configured bank.
        let mut initial: BTreeSet<String> = BTreeSet::new();
        let mut other: BTreeSet<String> = BTreeSet::new();
        for bank in self.phrases.values() {
            for phrase in bank {
                if phrase.contains(['!', '\n']) || phrase.trim().is_empty() {
                    return Err(Error::invalid(format!("malformed phrase {phrase:?}")));
                }
                let mut words = phrase.split_whitespace();
                let head = words.next().expect("non-empty phrase");
                initial.insert(Self::prefix(head));
                for w in words {
                    other.insert(Self::prefix(w));
                }
            }
        }
        for sentence in &self.filler {
            if sentence.contains(['!', '\n']) || sentence.trim().is_empty() {
                return Err(Error::invalid(format!("malformed filler {sentence:?}")));
            }
            for w in sentence.split_whitespace() {
                other.insert(Self::prefix(w));
            }
        }
        let clash: Vec<&String> = initial.intersection(&other).collect();
        if !clash.is_empty() {
            return Err(Error::invalid(format!(
                "phrase-initial prefixes also start other words: {clash:?}"
            )));
        }
        Ok(())
    }
}

/// A generated corpus with aligned gold annotations (same order, same ids).
#[derive(Debug, Clone)]
pub struct SynthOutput {
    pub ads: AdCorpus,
    pub gold: Vec<GoldDocument>,
}

fn slug(name: &str) -> String {
    name.chars()
        .filter(|c| c.is_ascii_alphanumeric())
        .collect::<String>()
        .to_lowercase()
}

/// Generates the corpus. Identical `config` and `seed` produce
/// byte-identical output.
pub fn generate(config: &SynthConfig, seed: u64) -> Result<SynthOutput> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_industries = config.industries.len();
    let mut records = Vec::with_capacity(config.n_docs);
    let mut gold = Vec::with_capacity(config.n_docs);

    for (ind_idx, industry) in config.industries.iter().enumerate() {
        let mut quota = config.n_docs / n_industries;
        if ind_idx < config.n_docs % n_industries {
            quota += 1;
        }
        let ind_slug = slug(&industry.name);
        for doc_idx in 0..quota {
            let campaign_idx = doc_idx / config.campaign_size;
            let advertiser_idx = campaign_idx % config.advertisers_per_industry;
            let id = format!("ad-{ind_slug}-{doc_idx:05}");

            // Label set: independent coin for the planted label plus one or
            // two pool labels; the pool draw never looks at the coin.
            let planted_present = rng.random_bool(0.5);
            let pool_count = 1 + rng.random_range(0..=1.min(industry.pool.len() - 1));
            let picked = rand::seq::index::sample(&mut rng, industry.pool.len(), pool_count);
            let mut labels: Vec<u8> = picked.iter().map(|i| industry.pool[i]).collect();
            if planted_present {
                labels.push(industry.planted);
            }
            labels.sort_unstable();

            // One phrase sentence per label, plus filler sentences.
            let mut sentences: Vec<(String, Option<u8>)> = Vec::new();
            for &label in &labels {
                let bank = &config.phrases[&label];
                let phrase = &bank[rng.random_range(0..bank.len())];
                sentences.push((format!("{phrase}!"), Some(label)));
            }
            let filler_count = rng.random_range(1..=3);
            for _ in 0..filler_count {
                let f = &config.filler[rng.random_range(0..config.filler.len())];
                sentences.push((format!("{f}."), None));
            }
            sentences.shuffle(&mut rng);

            // Lay the sentences out as title + description and record the
            // character offset of each appeal phrase.
            let mut spans = Vec::new();
            let mut offset = 0usize;
            for (i, (sentence, label)) in sentences.iter().enumerate() {
                let len = sentence.chars().count();
                if let Some(label) = label {
                    spans.push(SpanAnnotation::new(offset, offset + len, [*label])?);
                }
                offset += len;
                if i + 1 < sentences.len() {
                    offset += 1; // '\n' after the title, ' ' elsewhere
                }
            }
            spans.sort_by_key(|s| s.start);
            let title = sentences[0].0.clone();
            let description = sentences[1..]
                .iter()
                .map(|(s, _)| s.as_str())
                .collect::<Vec<_>>()
                .join(" ");

            let p = config.base_ctr + if planted_present { industry.lift } else { 0.0 };
            let impressions =
                rng.random_range(config.min_impressions..=config.max_impressions);
            let clicks = Binomial::new(impressions, p)
                .expect("validated probability")
                .sample(&mut rng);

            let kw_count = rng.random_range(1..=3.min(config.keywords.len()));
            let picked = rand::seq::index::sample(&mut rng, config.keywords.len(), kw_count);
            let keywords: Vec<String> =
                picked.iter().map(|i| config.keywords[i].clone()).collect();

            let record = AdRecord {
                id: id.clone(),
                advertiser_id: format!("adv-{ind_slug}-{advertiser_idx:02}"),
                campaign_id: format!("camp-{ind_slug}-{campaign_idx:04}"),
                title,
                description,
                lp_meta: None,
                industry: industry.name.clone(),
                keywords,
                impressions,
                clicks,
            };
            gold.push(GoldDocument {
                doc_id: id,
                text: record.text(),
                spans,
                industry: industry.name.clone(),
            });
            records.push(record);
        }
    }

    Ok(SynthOutput {
        ads: AdCorpus {
            records,
            provenance: vec![format!(
                "synthetic corpus: {} docs, {} industries, seed {seed}",
                config.n_docs, n_industries
            )],
        },
        gold,
    })
}
