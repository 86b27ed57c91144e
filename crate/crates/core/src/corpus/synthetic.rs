//! Generated corpora where the correct response is determined entirely by
//! one side feature (category or rating) while the review text carries no
//! information about it. Used to test whether a fusion variant actually
//! routes that feature to the decoder.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::record::ReviewRecord;

const REVIEWS: [&str; 16] = [
    "the app keeps asking me to log in again",
    "works fine most of the time",
    "please add a dark mode option",
    "it was slow after the last update",
    "i use it every day on my phone",
    "notifications stopped showing up",
    "the new layout is confusing",
    "does exactly what it says",
    "too many ads lately",
    "can you add support for tablets",
    "the sync feature is broken for me",
    "installed it yesterday and it seems ok",
    "my friend recommended this one",
    "the settings menu is hard to find",
    "battery drain is noticeable",
    "it crashed twice this morning",
];

pub const CATEGORY_TEMPLATES: [(&str, &str); 4] = [
    ("TOOLS", "we will optimize the cleaner engine in our next tools update ."),
    ("GAME", "glad you enjoy the levels , new quests arrive this season !"),
    ("FINANCE", "account security matters , contact billing support for refunds ."),
    ("SOCIAL", "invite friends and share stories with your community feed today ."),
];

pub const RATING_TEMPLATES: [(i64, &str); 5] = [
    (1, "so sorry about those crashes , please send logs to support ."),
    (2, "apologies for any trouble ; engineers are fixing bugs now ."),
    (3, "appreciate honest feedback , improvements ship every single week ."),
    (4, "glad it mostly works ! tell us what would earn five stars ."),
    (5, "wow , thank you ! happy that you love using it ."),
];

fn review<R: Rng>(rng: &mut R) -> String {
    REVIEWS.choose(rng).expect("non-empty pool").to_string()
}

/// Responses depend only on the app category; ratings are random noise.
pub fn category_corpus(n: usize, seed: u64) -> Vec<ReviewRecord> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let (category, template) = *CATEGORY_TEMPLATES.choose(&mut rng).expect("templates");
            let rating = rng.gen_range(1..=5);
            ReviewRecord::new("demo", category, rating, review(&mut rng), template)
        })
        .collect()
}

/// Responses depend only on the rating; categories are random noise.
pub fn rating_corpus(n: usize, seed: u64) -> Vec<ReviewRecord> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let (rating, template) = *RATING_TEMPLATES.choose(&mut rng).expect("templates");
            let (category, _) = *CATEGORY_TEMPLATES.choose(&mut rng).expect("templates");
            ReviewRecord::new("demo", category, rating, review(&mut rng), template)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn category_determines_response() {
        for r in category_corpus(200, 1) {
            let expected = CATEGORY_TEMPLATES.iter().find(|(c, _)| *c == r.category).unwrap().1;
            assert_eq!(r.response_text, expected);
            assert!(r.check().is_ok());
        }
    }

    #[test]
    fn rating_determines_response() {
        for r in rating_corpus(200, 2) {
            assert_eq!(r.response_text, RATING_TEMPLATES[(r.rating - 1) as usize].1);
        }
    }

    #[test]
    fn seeded() {
        assert_eq!(category_corpus(20, 5), category_corpus(20, 5));
        assert_ne!(category_corpus(20, 5), category_corpus(20, 6));
    }
}
