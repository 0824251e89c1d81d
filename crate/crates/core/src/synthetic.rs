//! Seeded synthetic corpora for tests, benchmarks and demos.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::corpus::{Corpus, FieldMap, IngestOptions, InputFormat};

const SYLLABLES: [&str; 24] = [
    "ka", "lo", "mi", "ne", "ru", "sa", "ti", "vo", "ze", "pa", "do", "fi", "gu", "ha", "je", "ko", "li", "mu", "na",
    "po", "re", "si", "tu", "we",
];

/// Standard normal draw (Box-Muller).
pub fn gaussian<R: Rng>(rng: &mut R) -> f64 {
    let u1: f64 = rng.gen_range(f64::EPSILON..1.0);
    let u2: f64 = rng.gen();
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

/// `count` distinct pronounceable words, prefixed so pools never collide.
pub fn word_pool(prefix: &str, count: usize) -> Vec<String> {
    (0..count)
        .map(|i| {
            let mut w = String::from(prefix);
            let mut k = i;
            loop {
                w.push_str(SYLLABLES[k % SYLLABLES.len()]);
                k /= SYLLABLES.len();
                if k == 0 {
                    break;
                }
            }
            w
        })
        .collect()
}

/// A corpus whose documents each draw their words from one theme's pool.
#[derive(Debug, Clone, PartialEq)]
pub struct PlantedCorpus {
    pub ids: Vec<String>,
    pub bodies: Vec<String>,
    /// Theme of each document.
    pub labels: Vec<usize>,
}

impl PlantedCorpus {
    pub fn texts(&self) -> impl Iterator<Item = &str> {
        self.bodies.iter().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    /// The documents as a corpus with an `id` and a `text` field.
    pub fn to_corpus(&self, corpus_id: &str) -> Corpus {
        let mut c = Corpus::new(corpus_id, FieldMap { id: Some("id".into()), ..FieldMap::body("text") });
        c.ingest(self.to_jsonl().as_bytes(), InputFormat::Jsonl, &IngestOptions::default())
            .expect("planted documents are well formed");
        c
    }

    /// One `{"id": ..., "text": ...}` object per line.
    pub fn to_jsonl(&self) -> String {
        self.ids
            .iter()
            .zip(&self.bodies)
            .map(|(id, text)| serde_json::json!({ "id": id, "text": text }).to_string() + "\n")
            .collect()
    }
}

/// `themes × per_theme` documents from disjoint 40-word pools, shuffled.
pub fn planted_themes(themes: usize, per_theme: usize, seed: u64) -> PlantedCorpus {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pools: Vec<Vec<String>> = (0..themes)
        .map(|t| word_pool(&format!("{}", (b'a' + (t % 26) as u8) as char).repeat(t / 26 + 1), 40))
        .collect();
    let mut labels: Vec<usize> = (0..themes).flat_map(|t| std::iter::repeat_n(t, per_theme)).collect();
    labels.shuffle(&mut rng);
    let bodies = labels
        .iter()
        .map(|&t| {
            let len = rng.gen_range(8..16);
            (0..len)
                .map(|_| pools[t].choose(&mut rng).expect("non-empty pool").as_str())
                .collect::<Vec<_>>()
                .join(" ")
        })
        .collect();
    PlantedCorpus {
        ids: (0..labels.len()).map(|i| format!("p{i:04}")).collect(),
        bodies,
        labels,
    }
}

/// Documents with Zipf-like word frequencies over a shared vocabulary.
pub fn random_documents(count: usize, vocabulary: usize, seed: u64) -> Vec<(String, String)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let words = word_pool("", vocabulary.max(1));
    let cumulative: Vec<f64> = words
        .iter()
        .enumerate()
        .scan(0.0, |acc, (i, _)| {
            *acc += 1.0 / (i as f64 + 1.0);
            Some(*acc)
        })
        .collect();
    let total = *cumulative.last().expect("non-empty vocabulary");
    (0..count)
        .map(|i| {
            let len = rng.gen_range(4..24);
            let text = (0..len)
                .map(|_| {
                    let u = rng.gen::<f64>() * total;
                    let k = cumulative.partition_point(|&c| c < u).min(words.len() - 1);
                    words[k].as_str()
                })
                .collect::<Vec<_>>()
                .join(" ");
            (format!("r{i:06}"), text)
        })
        .collect()
}
